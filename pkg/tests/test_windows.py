"""Moving-window orchestration tests."""

import logging

import numpy as np
import pytest

from co2therm import (
    InferenceConfig,
    ParameterVector,
    WindowPlan,
    infer_window,
    make_plans,
    posterior_predictive,
    run_moving_window,
    slice_window,
    warm_start,
)
from co2therm.errors import DataError
from co2therm.windows import prediction_times, window_knowns
import co2therm.windows as windows_mod


class TestPlans:
    def test_benchmark_count(self):
        plans = make_plans(241, 40, 10)
        assert len(plans) == 21
        assert [p.start_index for p in plans] == list(range(0, 201, 10))

    def test_scaled_experiment_count(self):
        plans = make_plans(361, 40, 6)
        assert len(plans) == 54
        assert plans[-1].start_index == 318

    def test_too_short_dataset(self):
        with pytest.raises(DataError, match="shorter"):
            make_plans(30, 40, 10)

    def test_plan_validation(self):
        with pytest.raises(DataError):
            WindowPlan(start_index=0, window_size=1, step=1)
        with pytest.raises(DataError):
            WindowPlan(start_index=0, window_size=4, step=0)


class TestSliceWindow:
    def test_identity_slice(self, benchmark_dataset):
        n = benchmark_dataset.times.size
        plan = WindowPlan(start_index=0, window_size=n, step=1)
        win = slice_window(benchmark_dataset, plan)
        np.testing.assert_array_equal(win.co2, benchmark_dataset.co2)
        np.testing.assert_array_equal(win.times, benchmark_dataset.times)

    def test_index_arithmetic(self, benchmark_dataset):
        plan = WindowPlan(start_index=11, window_size=40, step=6)
        win = slice_window(benchmark_dataset, plan)
        assert win.n_samples == 40
        np.testing.assert_array_equal(
            win.co2, benchmark_dataset.co2[:, 11:51])
        assert win.times[0] == 0.0
        assert win.times[-1] == benchmark_dataset.times[50] - \
            benchmark_dataset.times[11]

    def test_out_of_range(self, benchmark_dataset):
        n = benchmark_dataset.times.size
        plan = WindowPlan(start_index=n - 10, window_size=40, step=1)
        with pytest.raises(DataError, match="exceeds"):
            slice_window(benchmark_dataset, plan)


class TestWarmStart:
    def _result_with_mean(self, layout, flat):
        from co2therm.windows import PredictiveBands, WindowResult
        empty = np.empty((0, 0))
        bands = PredictiveBands(times=np.empty(0), co2_mean=empty,
                                co2_lower=empty, co2_upper=empty,
                                temp_mean=empty, temp_lower=empty,
                                temp_upper=empty)
        return WindowResult(plan=WindowPlan(0, 4, 2),
                            posterior_mean=ParameterVector.from_flat(layout, flat),
                            samples=np.empty((0, layout.dim)),
                            acceptance_rate=0.2, predictive=bands,
                            q025=np.zeros(layout.dim), q975=np.zeros(layout.dim),
                            start_time=0.0)

    def test_reanchors_initial_states_only(self, benchmark_setup, rng):
        layout = benchmark_setup.layout
        flat = rng.normal(size=layout.dim)
        prev = self._result_with_mean(layout, flat)
        c = rng.normal(420, 5, 8)
        t = rng.normal(21, 0.5, 8)
        theta0 = warm_start(prev, c, t, layout)
        sl = layout.slices()
        np.testing.assert_array_equal(theta0.co2_init, c)
        np.testing.assert_array_equal(theta0.temp_init, t)
        for block in ("occupancy", "flows", "resistances", "capacitances",
                      "sigma_co2", "sigma_temp"):
            np.testing.assert_array_equal(getattr(theta0, block),
                                          flat[sl[block]])

    def test_value_at_bound_preserved(self, benchmark_setup):
        layout = benchmark_setup.layout
        pm = benchmark_setup.prior_model
        flat = pm.default_theta(np.full(8, 400.0), np.full(8, 20.0)).flat()
        sl = layout.slices()
        flat[sl["occupancy"].start] = 2.0  # exactly at the upper bound
        prev = self._result_with_mean(layout, flat)
        theta0 = warm_start(prev, np.full(8, 400.0), np.full(8, 20.0), layout)
        assert theta0.occupancy[0] == 2.0

    def test_first_window_default(self, benchmark_setup):
        pm = benchmark_setup.prior_model
        theta0 = pm.default_theta(np.full(8, 405.0), np.full(8, 20.5))
        np.testing.assert_array_equal(theta0.occupancy, np.full(8, 0.5))
        np.testing.assert_array_equal(theta0.flows, np.full(5, 0.01))
        np.testing.assert_array_equal(theta0.co2_init, np.full(8, 405.0))


class TestPosteriorPredictive:
    def _inputs(self, setup, dataset, n_draws=40, sigma_co2=5.0):
        plan = WindowPlan(start_index=0, window_size=10, step=5,
                          forecast_horizon=5)
        air, thermal = window_knowns(dataset, plan, setup.air, setup.thermal)
        times = prediction_times(dataset, plan)
        theta = setup.prior_model.default_theta(dataset.co2[:, 0],
                                                dataset.temp[:, 0]).flat()
        sl = setup.layout.slices()
        theta[sl["sigma_co2"]] = sigma_co2
        theta[sl["sigma_temp"]] = 0.1
        samples = np.tile(theta, (200, 1))
        return samples, theta, times, air, thermal

    def test_identical_draws_tiny_sigma_collapse(self, benchmark_setup,
                                                 benchmark_dataset):
        setup = benchmark_setup
        samples, theta, times, air, thermal = self._inputs(
            setup, benchmark_dataset, sigma_co2=1e-6)
        sl = setup.layout.slices()
        samples[:, sl["sigma_co2"]] = 1e-6
        samples[:, sl["sigma_temp"]] = 1e-8
        bands = posterior_predictive(samples, theta, times, air, thermal,
                                     setup.network, setup.decomp, setup.layout,
                                     10.0, 100, np.random.default_rng(0))
        width = bands.co2_upper - bands.co2_lower
        assert np.max(width) < 1e-4  # collapses onto the mean curve
        assert np.all(bands.co2_lower <= bands.co2_mean + 1e-12)
        assert np.all(bands.co2_mean <= bands.co2_upper + 1e-12)

    def test_identical_draws_noise_band_width(self, benchmark_setup,
                                              benchmark_dataset):
        setup = benchmark_setup
        samples, theta, times, air, thermal = self._inputs(
            setup, benchmark_dataset, sigma_co2=5.0)
        bands = posterior_predictive(samples, theta, times, air, thermal,
                                     setup.network, setup.decomp, setup.layout,
                                     10.0, 200, np.random.default_rng(1))
        half = 0.5 * (bands.co2_upper - bands.co2_lower)
        # pure observation noise: half-width ~ 1.96 * 5 = 9.8 ppm
        assert np.mean(half) == pytest.approx(9.8, rel=0.08)

    def test_draw_count_validated(self, benchmark_setup, benchmark_dataset):
        setup = benchmark_setup
        samples, theta, times, air, thermal = self._inputs(setup,
                                                           benchmark_dataset)
        with pytest.raises(DataError, match="n_draws"):
            posterior_predictive(samples, theta, times, air, thermal,
                                 setup.network, setup.decomp, setup.layout,
                                 10.0, 10_000, np.random.default_rng(0))


@pytest.fixture(scope="module")
def tiny_run(tiny_setup):
    setup = tiny_setup
    dataset = setup.regenerate()
    results = run_moving_window(dataset, setup.prior_model, setup.infer,
                                setup.air, setup.thermal, setup.network,
                                setup.decomp, setup.layout)
    return setup, dataset, results


class TestMovingWindow:
    def test_window_count_and_order(self, tiny_run):
        setup, dataset, results = tiny_run
        expected = len(make_plans(dataset.times.size, setup.infer.window_size,
                                  setup.infer.step,
                                  setup.infer.forecast_horizon))
        assert len(results) == expected
        starts = [r.plan.start_index for r in results]
        assert starts == sorted(starts)

    def test_band_ordering_everywhere(self, tiny_run):
        _, _, results = tiny_run
        for r in results:
            p = r.predictive
            assert np.all(p.co2_lower <= p.co2_mean + 1e-12)
            assert np.all(p.co2_mean <= p.co2_upper + 1e-12)
            assert np.all(p.temp_lower <= p.temp_mean + 1e-12)
            assert np.all(p.temp_mean <= p.temp_upper + 1e-12)

    def test_posterior_mean_inside_bounds(self, tiny_run):
        setup, _, results = tiny_run
        spec = setup.prior_model.spec_for_window(np.full(8, 400.0),
                                                 np.full(8, 20.0))
        for r in results:
            flat = r.posterior_mean.flat()
            assert np.all(flat >= spec.lower) and np.all(flat <= spec.upper)

    def test_mean_path_mostly_inside_bands(self, tiny_run):
        """Noiseless simulation of the mean parameters stays largely inside
        the predictive envelope over the window part."""
        setup, dataset, results = tiny_run
        hits = total = 0
        for r in results:
            p = r.predictive
            w = r.plan.window_size
            inside = ((p.co2_mean[:, :w] >= p.co2_lower[:, :w] - 1e-9)
                      & (p.co2_mean[:, :w] <= p.co2_upper[:, :w] + 1e-9))
            hits += int(np.sum(inside))
            total += inside.size
        assert hits / total >= 0.9

    def test_warm_start_handoff(self, tiny_setup, monkeypatch):
        """theta0 of window k+1 equals posterior mean of window k outside
        the re-anchored initial-state blocks."""
        setup = tiny_setup
        dataset = setup.regenerate()
        captured = []
        original = windows_mod.infer_window

        def spy(window, priors, theta0, *args, **kwargs):
            captured.append(theta0.flat().copy())
            return original(window, priors, theta0, *args, **kwargs)

        monkeypatch.setattr(windows_mod, "infer_window", spy)
        results = run_moving_window(dataset, setup.prior_model, setup.infer,
                                    setup.air, setup.thermal, setup.network,
                                    setup.decomp, setup.layout)
        sl = setup.layout.slices()
        for k in range(len(results) - 1):
            mean_k = results[k].posterior_mean.flat()
            theta0_next = captured[k + 1]
            for block in ("occupancy", "flows", "resistances",
                          "capacitances", "sigma_co2", "sigma_temp"):
                np.testing.assert_array_equal(theta0_next[sl[block]],
                                              mean_k[sl[block]])

    def test_bit_exact_reproducibility(self, tiny_setup):
        setup = tiny_setup
        dataset = setup.regenerate()
        a = run_moving_window(dataset, setup.prior_model, setup.infer,
                              setup.air, setup.thermal, setup.network,
                              setup.decomp, setup.layout)
        b = run_moving_window(dataset, setup.prior_model, setup.infer,
                              setup.air, setup.thermal, setup.network,
                              setup.decomp, setup.layout)
        for ra, rb in zip(a, b):
            np.testing.assert_array_equal(ra.posterior_mean.flat(),
                                          rb.posterior_mean.flat())
            np.testing.assert_array_equal(ra.samples, rb.samples)
            np.testing.assert_array_equal(ra.predictive.co2_upper,
                                          rb.predictive.co2_upper)

    def test_failed_window_recovers(self, tiny_setup, monkeypatch, caplog):
        setup = tiny_setup
        dataset = setup.regenerate()
        original = windows_mod.infer_window
        calls = {"n": 0}

        def flaky(window, priors, theta0, *args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 2:  # first attempt of the second window
                raise ValueError("synthetic failure")
            return original(window, priors, theta0, *args, **kwargs)

        monkeypatch.setattr(windows_mod, "infer_window", flaky)
        with caplog.at_level(logging.WARNING, logger="co2therm.windows"):
            results = run_moving_window(dataset, setup.prior_model,
                                        setup.infer, setup.air, setup.thermal,
                                        setup.network, setup.decomp,
                                        setup.layout)
        expected = len(make_plans(dataset.times.size, setup.infer.window_size,
                                  setup.infer.step,
                                  setup.infer.forecast_horizon))
        assert len(results) == expected
        assert any("re-initializing" in rec.message for rec in caplog.records)

    def test_single_window_matches_direct_inference(self, tiny_setup):
        setup = tiny_setup
        dataset = setup.regenerate()
        plan = WindowPlan(start_index=0, window_size=dataset.times.size,
                          step=dataset.times.size)
        results = run_moving_window(dataset, setup.prior_model, setup.infer,
                                    setup.air, setup.thermal, setup.network,
                                    setup.decomp, setup.layout, plans=[plan])
        assert len(results) == 1

        window = slice_window(dataset, plan)
        air, thermal = window_knowns(dataset, plan, setup.air, setup.thermal)
        spec = setup.prior_model.spec_for_window(window.co2[:, 0],
                                                 window.temp[:, 0])
        theta0 = setup.prior_model.default_theta(window.co2[:, 0],
                                                 window.temp[:, 0])
        direct = infer_window(window, spec, theta0, setup.infer, air, thermal,
                              setup.network, setup.decomp, setup.layout,
                              seed=setup.infer.seed + 0,
                              predict_times=prediction_times(dataset, plan),
                              prior_model=setup.prior_model, init_mode="scan")
        np.testing.assert_allclose(results[0].posterior_mean.flat(),
                                   direct.posterior_mean.flat(), rtol=1e-12)

    def test_horizon_overrun_warns_and_extends(self, tiny_setup):
        setup = tiny_setup
        dataset = setup.regenerate()
        n = dataset.times.size
        plan = WindowPlan(start_index=n - setup.infer.window_size,
                          window_size=setup.infer.window_size, step=1,
                          forecast_horizon=10)
        with pytest.warns(RuntimeWarning, match="past the dataset"):
            times = prediction_times(dataset, plan)
        assert times.size == setup.infer.window_size + 10

    def test_theta0_outside_support_is_repaired(self, tiny_setup):
        setup = tiny_setup
        dataset = setup.regenerate()
        plan = WindowPlan(start_index=0, window_size=setup.infer.window_size,
                          step=setup.infer.step)
        window = slice_window(dataset, plan)
        air, thermal = window_knowns(dataset, plan, setup.air, setup.thermal)
        spec = setup.prior_model.spec_for_window(window.co2[:, 0],
                                                 window.temp[:, 0])
        bad = setup.prior_model.default_theta(window.co2[:, 0],
                                              window.temp[:, 0]).flat()
        sl = setup.layout.slices()
        bad[sl["occupancy"]] = 5.0   # above every occupancy bound
        bad[sl["flows"]] = 0.3       # outside [-0.1, 0.1]
        from co2therm import ParameterVector as PV
        result = infer_window(window, spec, PV.from_flat(setup.layout, bad),
                              setup.infer, air, thermal, setup.network,
                              setup.decomp, setup.layout, seed=3,
                              prior_model=setup.prior_model, init_mode="off")
        flat = result.posterior_mean.flat()
        assert np.all(flat >= spec.lower) and np.all(flat <= spec.upper)


class TestRoundTripExamples:
    """Desk-scale inference examples on the full benchmark."""

    def test_noiseless_window_recovers_room_a(self, benchmark_setup,
                                              benchmark_dataset):
        """Ground-truth-generated, noise-free pre-transition window: room A
        occupancy within +-0.2 of one person, and the fitted posterior mean
        dominates the prior-mode vector (fit dominance)."""
        from co2therm import Dataset, LogPosterior

        setup = benchmark_setup
        src = benchmark_dataset
        ds = Dataset(times=src.times, co2=src.noiseless_co2,
                     temp=src.noiseless_temp, zone_ids=src.zone_ids,
                     ambient_co2=src.ambient_co2, ambient_temp=src.ambient_temp)
        plan = WindowPlan(start_index=40, window_size=40, step=10)
        window = slice_window(ds, plan)
        air, thermal = window_knowns(ds, plan, setup.air, setup.thermal)
        spec = setup.prior_model.spec_for_window(window.co2[:, 0],
                                                 window.temp[:, 0])
        theta0 = setup.prior_model.default_theta(window.co2[:, 0],
                                                 window.temp[:, 0])
        from dataclasses import replace as dc_replace
        cfg = dc_replace(setup.infer, predictive_draws=50, thin=20)
        result = infer_window(window, spec, theta0, cfg, air, thermal,
                              setup.network, setup.decomp, setup.layout,
                              seed=43, prior_model=setup.prior_model,
                              init_mode="scan")
        occ = result.posterior_mean.occupancy
        assert abs(occ[0] - 1.0) <= 0.2

        logpost = LogPosterior(window=window, priors=spec, air=air,
                               thermal=thermal, network=setup.network,
                               decomp=setup.decomp, layout=setup.layout,
                               substep=cfg.substep)
        prior_mode = spec.clamp(spec.mu.copy())
        assert logpost(result.posterior_mean.flat()) >= logpost(prior_mode)

    def test_null_signal_keeps_occupancy_low(self, benchmark_setup):
        """Pure noise around constants with zero-occupancy truth: occupancy
        posterior means stay below 0.3 everywhere."""
        from co2therm.benchmark import OccupancySchedule, generate_synthetic
        from co2therm import NoiseSpec
        from dataclasses import replace as dc_replace

        setup = benchmark_setup
        n_int = len(setup.network.interior_ids)
        null_sched = OccupancySchedule(breakpoints=((0.0, np.zeros(n_int)),))
        ds = generate_synthetic(setup.network, setup.decomp, null_sched,
                                setup.truth, setup.air, setup.thermal,
                                3600.0, 60.0, 10.0, NoiseSpec(5.0, 0.1, 21))
        plan = WindowPlan(start_index=0, window_size=40, step=10)
        window = slice_window(ds, plan)
        air, thermal = window_knowns(ds, plan, setup.air, setup.thermal)
        spec = setup.prior_model.spec_for_window(window.co2[:, 0],
                                                 window.temp[:, 0])
        theta0 = setup.prior_model.default_theta(window.co2[:, 0],
                                                 window.temp[:, 0])
        cfg = dc_replace(setup.infer, predictive_draws=50, thin=20)
        result = infer_window(window, spec, theta0, cfg, air, thermal,
                              setup.network, setup.decomp, setup.layout,
                              seed=42, prior_model=setup.prior_model,
                              init_mode="scan")
        assert np.all(result.posterior_mean.occupancy < 0.3)

    def test_forecast_bands_widen_across_transition(self, benchmark_setup,
                                                    benchmark_dataset):
        """Windows overlapping the occupancy switch forecast with wider
        room-F bands than stationary ones.  The packaged benchmark
        amplitudes support a measured ~1.2-1.6x widening across seeds, so
        the assertion pins strict widening with margin rather than a larger
        factor that would need stronger source terms."""
        from dataclasses import replace as dc_replace

        setup = benchmark_setup
        ds = benchmark_dataset
        iF = list(setup.network.interior_ids).index("F")
        cfg = dc_replace(setup.infer, iterations=8000, burn_in=4000,
                         predictive_draws=100, thin=10, forecast_horizon=20)

        widths = {}
        for start, seed in ((40, 101), (100, 1101)):
            plan = WindowPlan(start, 40, 10, forecast_horizon=20)
            window = slice_window(ds, plan)
            air, thermal = window_knowns(ds, plan, setup.air, setup.thermal)
            spec = setup.prior_model.spec_for_window(window.co2[:, 0],
                                                     window.temp[:, 0])
            theta0 = setup.prior_model.default_theta(window.co2[:, 0],
                                                     window.temp[:, 0])
            result = infer_window(window, spec, theta0, cfg, air, thermal,
                                  setup.network, setup.decomp, setup.layout,
                                  seed=seed, prior_model=setup.prior_model,
                                  init_mode="scan",
                                  predict_times=prediction_times(ds, plan))
            band = (result.predictive.co2_upper
                    - result.predictive.co2_lower)[iF, 40:]
            widths[start] = float(np.mean(band))
        assert widths[100] > 1.15 * widths[40]
