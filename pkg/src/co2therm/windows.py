"""Moving-window inference: slice, infer, warm-start, predict, repeat.

Each window re-anchors the initial-state priors to its first observations,
runs one RAM chain on the windowed log-posterior, and emits the posterior
mean, per-coordinate quantile tracks and a posterior-predictive envelope
over the window plus a forecast horizon.  Consecutive windows chain through
warm starts; a failed window logs, falls back to the default start and never
aborts the run.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import Co2thermError, DataError
from .forward import AirKnowns, AmbientSeries, ThermalKnowns, WindowSimulator
from .likelihood import LogPosterior, WindowData
from .network import TreeCotree, ZoneNetwork
from .params import BlockLayout, ParameterVector
from .priors import PriorModel, PriorSpec
from .ram import ChainOutput, RamConfig, run_chain

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WindowPlan:
    start_index: int
    window_size: int
    step: int
    forecast_horizon: int = 0

    def __post_init__(self):
        if self.window_size < 2:
            raise DataError("window_size must be at least 2")
        if self.step < 1:
            raise DataError("step must be at least 1")
        if self.start_index < 0 or self.forecast_horizon < 0:
            raise DataError("start_index and forecast_horizon must be >= 0")

    @property
    def end_index(self) -> int:
        """One past the last window sample."""
        return self.start_index + self.window_size


@dataclass(frozen=True)
class InferenceConfig:
    window_size: int = 40
    step: int = 10
    forecast_horizon: int = 0
    iterations: int = 20000
    burn_in: int = 10000
    target_accept: float = 0.234
    adapt_exponent: float = 2.0 / 3.0
    initial_scale: float = 0.01
    seed: int = 0
    predictive_draws: int = 500
    thin: int = 10
    substep: float = 10.0
    adapt_after_burnin: bool = True
    proposal_floor_fraction: float = 0.05
    map_init: str = "polish"             # off | polish
    first_window_sign_scan: bool = True
    scan_max_patterns: int = 64

    def ram_config(self, seed: int, iterations: int | None = None,
                   burn_in: int | None = None) -> RamConfig:
        iterations = self.iterations if iterations is None else iterations
        burn_in = (self.burn_in if burn_in is None else burn_in)
        burn_in = min(burn_in, iterations - 1)
        return RamConfig(iterations=iterations, burn_in=burn_in,
                         target_accept=self.target_accept,
                         adapt_exponent=self.adapt_exponent,
                         initial_scale=self.initial_scale, seed=seed,
                         adapt_after_burnin=self.adapt_after_burnin)

    def __post_init__(self):
        kept = (self.iterations - self.burn_in) // max(self.thin, 1)
        if self.predictive_draws > max(kept, 0):
            raise DataError("predictive_draws exceeds the thinned sample count")
        if self.map_init not in ("off", "polish"):
            raise DataError("map_init must be off or polish")


@dataclass(frozen=True)
class PredictiveBands:
    """Pointwise mean curve and 95% envelope over window plus horizon."""

    times: np.ndarray
    co2_mean: np.ndarray
    co2_lower: np.ndarray
    co2_upper: np.ndarray
    temp_mean: np.ndarray
    temp_lower: np.ndarray
    temp_upper: np.ndarray


@dataclass(frozen=True)
class WindowResult:
    plan: WindowPlan
    posterior_mean: ParameterVector
    samples: np.ndarray            # thinned retained draws
    acceptance_rate: float
    predictive: PredictiveBands
    q025: np.ndarray
    q975: np.ndarray
    start_time: float


def make_plans(n_samples: int, window_size: int, step: int,
               forecast_horizon: int = 0) -> list[WindowPlan]:
    """All window placements fitting the dataset, advancing by ``step``."""
    if n_samples < window_size:
        raise DataError("dataset shorter than one window")
    starts = range(0, n_samples - window_size + 1, step)
    return [WindowPlan(start_index=s, window_size=window_size, step=step,
                       forecast_horizon=forecast_horizon) for s in starts]


def slice_window(dataset, plan: WindowPlan) -> WindowData:
    """Contiguous window slice with times re-based to the window start."""
    n = dataset.times.size
    if plan.start_index + plan.window_size > n:
        raise DataError(
            f"window [{plan.start_index}, {plan.end_index}) exceeds the "
            f"{n}-sample dataset")
    sl = slice(plan.start_index, plan.end_index)
    t0 = dataset.times[plan.start_index]
    return WindowData(times=dataset.times[sl] - t0,
                      co2=dataset.co2[:, sl], temp=dataset.temp[:, sl],
                      zone_ids=dataset.zone_ids)


def window_knowns(dataset, plan: WindowPlan, air: AirKnowns,
                  thermal: ThermalKnowns) -> tuple[AirKnowns, ThermalKnowns]:
    """Knowns with the ambient series sliced and re-based like the window."""
    stop = min(plan.end_index + plan.forecast_horizon, dataset.times.size)
    sl = slice(plan.start_index, stop)
    t0 = dataset.times[plan.start_index]
    times = dataset.times[sl] - t0
    air = replace(air, ambient_co2=AmbientSeries(
        times=times, values=np.asarray(dataset.ambient_co2[sl], dtype=float)))
    thermal = replace(thermal, ambient_temp=AmbientSeries(
        times=times, values=np.asarray(dataset.ambient_temp[sl], dtype=float)))
    return air, thermal


def prediction_times(dataset, plan: WindowPlan) -> np.ndarray:
    """Window plus horizon grid, re-based; extended past the dataset end
    by repeating the trailing sample spacing if the horizon overruns."""
    t0 = dataset.times[plan.start_index]
    stop = plan.end_index + plan.forecast_horizon
    n = dataset.times.size
    avail = dataset.times[plan.start_index:min(stop, n)] - t0
    if stop <= n:
        return avail
    dt = float(np.median(np.diff(dataset.times)))
    extra = avail[-1] + dt * np.arange(1, stop - n + 1)
    warnings.warn("forecast horizon extends past the dataset; ambient held "
                  "at its last value", RuntimeWarning, stacklevel=2)
    return np.concatenate([avail, extra])


def warm_start(previous: WindowResult, first_co2, first_temp,
               layout: BlockLayout) -> ParameterVector:
    """Previous posterior mean with initial states re-anchored to the next
    window's first observations."""
    sl = layout.slices()
    flat = previous.posterior_mean.flat()
    flat[sl["co2_init"]] = np.asarray(first_co2, dtype=float)
    flat[sl["temp_init"]] = np.asarray(first_temp, dtype=float)
    return ParameterVector.from_flat(layout, flat)


def posterior_predictive(samples: np.ndarray, posterior_mean_flat: np.ndarray,
                         times, air: AirKnowns, thermal: ThermalKnowns,
                         network: ZoneNetwork, decomp: TreeCotree,
                         layout: BlockLayout, substep: float, n_draws: int,
                         rng: np.random.Generator) -> PredictiveBands:
    """Mean curve at the posterior mean; 95% bands from thinned draws.

    Each selected draw is simulated and perturbed with its own Gaussian
    observation noise, so the bands cover parameter and measurement
    uncertainty.  Bands are widened (rarely needed) to contain the mean
    curve, keeping lower <= mean <= upper structural.
    """
    if n_draws < 1 or n_draws > samples.shape[0]:
        raise DataError("n_draws must be between 1 and the retained draw count")
    times = np.asarray(times, dtype=float)
    sim = WindowSimulator(network, decomp, layout, air, thermal, times, substep)
    sl = layout.slices()

    mean_co2, mean_temp = sim.simulate_flat(np.asarray(posterior_mean_flat))
    picks = np.unique(np.round(np.linspace(0, samples.shape[0] - 1,
                                           n_draws)).astype(int))
    co2_draws = np.empty((picks.size,) + mean_co2.shape)
    temp_draws = np.empty((picks.size,) + mean_temp.shape)
    for i, k in enumerate(picks):
        draw = samples[k]
        co2_k, temp_k = sim.simulate_flat(draw)
        sig_c = draw[sl["sigma_co2"]][:, None]
        sig_t = draw[sl["sigma_temp"]][:, None]
        co2_draws[i] = co2_k + rng.standard_normal(co2_k.shape) * sig_c
        temp_draws[i] = temp_k + rng.standard_normal(temp_k.shape) * sig_t

    co2_lo, co2_hi = np.percentile(co2_draws, [2.5, 97.5], axis=0)
    temp_lo, temp_hi = np.percentile(temp_draws, [2.5, 97.5], axis=0)
    return PredictiveBands(
        times=times,
        co2_mean=mean_co2,
        co2_lower=np.minimum(co2_lo, mean_co2),
        co2_upper=np.maximum(co2_hi, mean_co2),
        temp_mean=mean_temp,
        temp_lower=np.minimum(temp_lo, mean_temp),
        temp_upper=np.maximum(temp_hi, mean_temp))


def _physical_indices(layout: BlockLayout) -> np.ndarray:
    sl = layout.slices()
    parts = [np.arange(s.start, s.stop) for name, s in sl.items()
             if name not in ("sigma_co2", "sigma_temp")]
    return np.concatenate(parts)


def map_polish(logpost: LogPosterior, flat0: np.ndarray, rounds: int = 3,
               max_nfev: int = 60, return_factor: bool = False):
    """Deterministic posterior-mode polish used to initialize a chain.

    Alternates bound-constrained trust-region least squares over the
    physical coordinates (data residuals standardized by the current noise
    scales, plus prior pulls) with the analytic noise update sigma_j = RMS
    residual of zone j, clipped into its prior support.  Initialization
    only: the subsequent chain is untouched plain RAM.

    With ``return_factor`` the Gauss-Newton curvature at the mode is turned
    into a Laplace-style proposal factor (scaled by the classic 2.38/sqrt(d))
    so the chain starts with an empirically shaped proposal instead of a
    diagonal guess.
    """
    from scipy.optimize import least_squares

    priors = logpost.priors
    layout = logpost.layout
    sl = layout.slices()
    phys = _physical_indices(layout)
    lo = np.where(np.isfinite(priors.lower[phys]), priors.lower[phys], -1e12)
    hi = np.where(np.isfinite(priors.upper[phys]), priors.upper[phys], 1e12)
    flat = priors.clamp(np.asarray(flat0, dtype=float))
    res = None

    for _ in range(rounds):
        sig_c = flat[sl["sigma_co2"]][:, None]
        sig_t = flat[sl["sigma_temp"]][:, None]
        mu = priors.mu[phys]
        psig = priors.effective_sigma(flat)[phys]

        def resid(x):
            f = flat.copy()
            f[phys] = x
            co2, temp = logpost.simulator.simulate_flat(f)
            rc = (co2 - logpost.window.co2) / sig_c
            rt = (temp - logpost.window.temp) / sig_t
            out = np.concatenate([rc.ravel(), rt.ravel(), (x - mu) / psig])
            return np.where(np.isfinite(out), out, 1e6)

        res = least_squares(resid, np.clip(flat[phys], lo, hi),
                            bounds=(lo, hi), method="trf",
                            max_nfev=max_nfev, x_scale=psig)
        flat[phys] = res.x
        co2, temp = logpost.simulator.simulate_flat(flat)
        rms_c = np.sqrt(np.mean((co2 - logpost.window.co2) ** 2, axis=1))
        rms_t = np.sqrt(np.mean((temp - logpost.window.temp) ** 2, axis=1))
        flat[sl["sigma_co2"]] = np.clip(rms_c, priors.lower[sl["sigma_co2"]],
                                        priors.upper[sl["sigma_co2"]])
        flat[sl["sigma_temp"]] = np.clip(rms_t, priors.lower[sl["sigma_temp"]],
                                         priors.upper[sl["sigma_temp"]])
    flat = priors.clamp(flat)
    if not return_factor:
        return flat
    return flat, _laplace_factor(logpost, flat, res.jac, phys)


def _laplace_factor(logpost: LogPosterior, flat: np.ndarray, jac,
                    phys: np.ndarray) -> np.ndarray:
    """Proposal factor from the Gauss-Newton curvature at the mode.

    Physical coordinates get the least-squares information J^T J (prior
    rows included, so every direction carries at least the prior
    curvature); the noise coordinates get their analytic information
    2 N / sigma^2.  The factor is the Cholesky of the inverted information,
    scaled by 2.38/sqrt(dim).
    """
    layout = logpost.layout
    sl = layout.slices()
    d = layout.dim
    n_t = logpost.window.n_samples
    info = np.zeros((d, d))
    J = np.asarray(jac)
    info[np.ix_(phys, phys)] = J.T @ J
    for block in ("sigma_co2", "sigma_temp"):
        idx = np.arange(sl[block].start, sl[block].stop)
        prior_sig = logpost.priors.sigma[idx]
        info[idx, idx] = 2.0 * n_t / flat[idx] ** 2 + 1.0 / prior_sig ** 2
    # Symmetrize and invert through Cholesky of the information matrix.
    info = 0.5 * (info + info.T)
    jitter = 1e-10 * np.max(np.diag(info))
    while True:
        try:
            L_info = np.linalg.cholesky(info + jitter * np.eye(d))
            break
        except np.linalg.LinAlgError:
            jitter *= 100.0
    inv_l = np.linalg.inv(L_info)
    cov = inv_l.T @ inv_l
    scale = 2.38 / np.sqrt(d)
    return np.linalg.cholesky(0.5 * (cov + cov.T)) * scale


def sign_scan(logpost: LogPosterior, flat0: np.ndarray,
              max_patterns: int = 64) -> np.ndarray:
    """Resolve flow directions by polishing every sign pattern of the
    independent flows and keeping the best posterior mode.

    The flow-sign combinations index well-separated posterior modes (which
    way air crosses each opening); local methods cannot be trusted to land
    in the right one from a cold start.  With more patterns than the budget
    allows, the scan falls back to the initial pattern plus single flips.
    """
    layout = logpost.layout
    sl = layout.slices()["flows"]
    n = sl.stop - sl.start
    base = np.abs(flat0[sl])
    base = np.where(base > 1e-6, base, 0.01)
    if 2 ** n <= max_patterns:
        patterns = list(itertools.product((1.0, -1.0), repeat=n))
    else:
        start_signs = np.sign(flat0[sl])
        start_signs[start_signs == 0] = 1.0
        patterns = [tuple(start_signs)]
        for k in range(n):
            flipped = start_signs.copy()
            flipped[k] *= -1.0
            patterns.append(tuple(flipped))
    best_lp, best = -np.inf, flat0
    for signs in patterns:
        cand = flat0.copy()
        cand[sl] = base * np.asarray(signs)
        polished = map_polish(logpost, logpost.priors.clamp(cand),
                              rounds=2, max_nfev=30)
        val = logpost(polished)
        if val > best_lp:
            best_lp, best = val, polished
    return best


def infer_window(window: WindowData, priors: PriorSpec,
                 theta0: ParameterVector, config: InferenceConfig,
                 air: AirKnowns, thermal: ThermalKnowns,
                 network: ZoneNetwork, decomp: TreeCotree,
                 layout: BlockLayout, seed: int,
                 predict_times=None, start_time: float = 0.0,
                 prior_model: PriorModel | None = None,
                 init_mode: str | None = None) -> WindowResult:
    """Run one window's chain and summarize it.

    ``theta0`` is clamped into the prior support if needed.  ``predict_times``
    defaults to the window grid (no forecast part).  ``init_mode`` is one of
    ``"off"`` (use theta0 as-is), ``"polish"`` (local mode polish) or
    ``"scan"`` (flow-sign enumeration plus polish); default per config.
    """
    logpost = LogPosterior(window=window, priors=priors, air=air,
                           thermal=thermal, network=network, decomp=decomp,
                           layout=layout, substep=config.substep)
    flat0 = priors.clamp(theta0.flat())
    floors = (prior_model.proposal_floors(config.proposal_floor_fraction)
              if prior_model is not None
              else np.maximum(1e-3 * np.abs(flat0), 1e-6))
    if init_mode is None:
        init_mode = config.map_init
    start_factor = None
    if init_mode == "scan":
        flat0 = sign_scan(logpost, flat0, config.scan_max_patterns)
        flat0, start_factor = map_polish(logpost, flat0, return_factor=True)
    elif init_mode == "polish":
        flat0, start_factor = map_polish(logpost, flat0, return_factor=True)
    elif init_mode != "off":
        raise DataError(f"unknown init_mode {init_mode!r}")
    out: ChainOutput = run_chain(logpost, flat0, floors,
                                 config.ram_config(seed),
                                 start_factor=start_factor)

    kept = out.samples[::max(config.thin, 1)]
    mean_flat = out.samples.mean(axis=0)
    mean_flat = priors.clamp(mean_flat)
    q025, q975 = np.percentile(out.samples, [2.5, 97.5], axis=0)

    if predict_times is None:
        predict_times = window.times
    bands = posterior_predictive(
        kept, mean_flat, predict_times, air, thermal, network, decomp,
        layout, config.substep, min(config.predictive_draws, kept.shape[0]),
        np.random.default_rng(seed + 0x9E3779B9))

    return WindowResult(plan=WindowPlan(start_index=0,
                                        window_size=window.n_samples,
                                        step=config.step,
                                        forecast_horizon=config.forecast_horizon),
                        posterior_mean=ParameterVector.from_flat(layout, mean_flat),
                        samples=kept, acceptance_rate=out.acceptance_rate,
                        predictive=bands, q025=q025, q975=q975,
                        start_time=start_time)


def run_moving_window(dataset, prior_model: PriorModel,
                      config: InferenceConfig, air: AirKnowns,
                      thermal: ThermalKnowns, network: ZoneNetwork,
                      decomp: TreeCotree, layout: BlockLayout,
                      plans: list[WindowPlan] | None = None) -> list[WindowResult]:
    """Sequential window inference with warm starts.

    Per-window chains are seeded ``config.seed + window_index`` so the whole
    run is reproducible.  A window that fails is retried from the default
    start; if that fails too it is skipped.
    """
    if plans is None:
        plans = make_plans(dataset.times.size, config.window_size,
                           config.step, config.forecast_horizon)
    results: list[WindowResult] = []
    previous: WindowResult | None = None
    for idx, plan in enumerate(plans):
        window = slice_window(dataset, plan)
        w_air, w_thermal = window_knowns(dataset, plan, air, thermal)
        spec = prior_model.spec_for_window(window.co2[:, 0], window.temp[:, 0])
        if previous is not None:
            theta0 = warm_start(previous, window.co2[:, 0], window.temp[:, 0],
                                layout)
        else:
            theta0 = prior_model.default_theta(window.co2[:, 0],
                                               window.temp[:, 0])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            p_times = prediction_times(dataset, plan)

        if config.map_init == "off":
            mode = "off"
        elif previous is None and config.first_window_sign_scan:
            mode = "scan"
        else:
            mode = "polish"

        def _run(start: ParameterVector, init_mode: str) -> WindowResult:
            result = infer_window(
                window, spec, start, config, w_air, w_thermal, network,
                decomp, layout, seed=config.seed + idx,
                predict_times=p_times,
                start_time=float(dataset.times[plan.start_index]),
                prior_model=prior_model, init_mode=init_mode)
            return WindowResult(plan=plan, posterior_mean=result.posterior_mean,
                                samples=result.samples,
                                acceptance_rate=result.acceptance_rate,
                                predictive=result.predictive,
                                q025=result.q025, q975=result.q975,
                                start_time=result.start_time)

        try:
            result = _run(theta0, mode)
        except (Co2thermError, ValueError, FloatingPointError) as exc:
            logger.warning("window %d failed (%s); re-initializing from "
                           "defaults", idx, exc)
            try:
                result = _run(prior_model.default_theta(window.co2[:, 0],
                                                        window.temp[:, 0]),
                              "scan" if config.map_init != "off" else "off")
            except (Co2thermError, ValueError, FloatingPointError) as exc2:
                logger.error("window %d failed twice (%s); skipped", idx, exc2)
                previous = None
                continue
        results.append(result)
        previous = result
    return results
