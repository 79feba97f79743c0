"""Compiled-vs-NumPy kernel equivalence.

Both backends must produce the same trajectories and factor updates up to
rounding; when the extension is missing these tests exercise the fallback
against direct references instead.
"""

import numpy as np
import pytest

from co2therm import _kernels_py
from co2therm._backend import backend_name

try:
    from co2therm import _speedups
except ImportError:
    _speedups = None

needs_compiled = pytest.mark.skipif(_speedups is None,
                                    reason="compiled extension not built")


def random_problem(rng, n_zones=6, n_fe=7, n_te=9, n_out=12):
    fsrc = np.empty(n_fe, dtype=np.int32)
    fdst = np.empty(n_fe, dtype=np.int32)
    for e in range(n_fe):
        a, b = rng.choice(n_zones, size=2, replace=False)
        fsrc[e], fdst[e] = a, b
    ta = np.empty(n_te, dtype=np.int32)
    tb = np.empty(n_te, dtype=np.int32)
    for e in range(n_te):
        a, b = rng.choice(n_zones, size=2, replace=False)
        ta[e], tb[e] = a, b
    is_boundary = np.zeros(n_zones, dtype=np.uint8)
    is_boundary[-1] = 1
    inv_vol = np.where(is_boundary == 0, 1.0 / rng.uniform(10, 60, n_zones), 0.0)
    inv_cap = np.where(is_boundary == 0, 1.0 / rng.uniform(5e3, 5e4, n_zones), 0.0)
    n_sub = rng.integers(1, 5, size=n_out - 1).astype(np.int64)
    n_steps = int(n_sub.sum())
    return dict(
        c_init=rng.uniform(380, 500, n_zones),
        t_init=rng.uniform(18, 30, n_zones),
        fsrc=fsrc, fdst=fdst,
        q=rng.uniform(-0.05, 0.05, n_fe),
        ta=ta, tb=tb,
        cond=1.0 / rng.uniform(0.5, 5.0, n_te),
        inv_vol=inv_vol, inv_cap=inv_cap, is_boundary=is_boundary,
        occupancy=np.ascontiguousarray(rng.uniform(0, 3, (n_steps, n_zones))),
        amb_co2=rng.uniform(390, 410, n_steps),
        amb_temp=rng.uniform(18, 22, n_steps),
        n_sub=n_sub, dt=5.0,
        src_co2=0.5, src_heat=100.0, rho_cp=1200.0)


def run_backend(mod, prob, n_out):
    n_zones = prob["c_init"].size
    out_c = np.empty((n_out, n_zones))
    out_t = np.empty((n_out, n_zones))
    mod.simulate_coupled(
        prob["c_init"].copy(), prob["t_init"].copy(), prob["fsrc"],
        prob["fdst"], prob["q"], prob["ta"], prob["tb"], prob["cond"],
        prob["inv_vol"], prob["inv_cap"], prob["is_boundary"],
        prob["occupancy"], prob["amb_co2"], prob["amb_temp"], prob["n_sub"],
        prob["dt"], prob["src_co2"], prob["src_heat"], prob["rho_cp"],
        out_c, out_t)
    return out_c, out_t


@needs_compiled
class TestSimulateEquivalence:
    def test_random_problems_agree(self, rng):
        for _ in range(20):
            prob = random_problem(rng)
            c_a, t_a = run_backend(_speedups, prob, 12)
            c_b, t_b = run_backend(_kernels_py, prob, 12)
            np.testing.assert_allclose(c_a, c_b, rtol=1e-10, atol=1e-10)
            np.testing.assert_allclose(t_a, t_b, rtol=1e-10, atol=1e-10)

    def test_benchmark_window_agrees(self, benchmark_setup, benchmark_dataset):
        from co2therm.forward import WindowSimulator
        setup = benchmark_setup
        times = benchmark_dataset.times[:41]
        theta = setup.prior_model.default_theta(
            benchmark_dataset.co2[:, 0], benchmark_dataset.temp[:, 0]).flat()

        sims = {}
        import co2therm.forward as fwd
        for name, kernel in (("compiled", _speedups.simulate_coupled),
                             ("python", _kernels_py.simulate_coupled)):
            original = fwd.simulate_coupled
            fwd.simulate_coupled = kernel
            try:
                sim = WindowSimulator(setup.network, setup.decomp,
                                      setup.layout, setup.air, setup.thermal,
                                      times, 10.0)
                sims[name] = sim.simulate_flat(theta)
            finally:
                fwd.simulate_coupled = original
        np.testing.assert_allclose(sims["compiled"][0], sims["python"][0],
                                   rtol=1e-11)
        np.testing.assert_allclose(sims["compiled"][1], sims["python"][1],
                                   rtol=1e-11)


@needs_compiled
class TestCholeskyEquivalence:
    def test_update_and_downdate_agree(self, rng):
        for _ in range(50):
            d = int(rng.integers(2, 40))
            A = rng.normal(size=(d, d))
            L = np.linalg.cholesky(A @ A.T + d * np.eye(d))
            u = rng.normal(size=d)
            coeff = float(rng.uniform(-0.2, 0.8))
            La = L.copy()
            Lb = L.copy()
            sa = _speedups.chol_rank1_update(La, u, coeff)
            sb = _kernels_py.chol_rank1_update(Lb, u, coeff)
            assert sa == sb == 0
            np.testing.assert_allclose(La, Lb, rtol=1e-8, atol=1e-10)

    def test_failure_reported_identically(self):
        L = np.eye(2)
        u = np.array([10.0, 0.0])
        assert _speedups.chol_rank1_update(L.copy(), u, -1.0) == 1
        assert _kernels_py.chol_rank1_update(L.copy(), u, -1.0) == 1


def test_backend_name_reports_active():
    assert backend_name() in ("compiled", "python")
    if _speedups is not None:
        import os
        if not os.environ.get("CO2THERM_BACKEND"):
            assert backend_name() == "compiled"
