"""Gaussian measurement likelihood and the windowed log-posterior.

Measurement noise is independent across zones and time instants with a
zone-specific standard deviation per field, constant over the window.  The
noise scales are inferred, so the Gaussian normalization term is kept in the
log-likelihood; dropping it would bias the sigma estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .forward import AirKnowns, ThermalKnowns, Trajectory, WindowSimulator
from .network import TreeCotree, ZoneNetwork
from .params import BlockLayout
from .priors import OUT_OF_SUPPORT, PriorSpec, log_prior

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class WindowData:
    """Observed per-zone series inside one inference window.

    Times are re-based to the window start; matrices are interior zones by
    samples.
    """

    times: np.ndarray
    co2: np.ndarray
    temp: np.ndarray
    zone_ids: tuple[str, ...] = ()

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        co2 = np.asarray(self.co2, dtype=float)
        temp = np.asarray(self.temp, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise DataError("a window needs at least two samples")
        if co2.shape != temp.shape or co2.shape[1] != times.size:
            raise DataError("window matrices must be zones x samples")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "co2", co2)
        object.__setattr__(self, "temp", temp)

    @property
    def n_samples(self) -> int:
        return self.times.size


def _field_loglik(residual: np.ndarray, sigma: np.ndarray) -> float:
    n_t = residual.shape[1]
    ssq = np.sum(residual * residual, axis=1)
    return float(-0.5 * np.sum(ssq / (sigma ** 2)
                               + n_t * np.log(2.0 * np.pi * sigma ** 2)))


def log_likelihood(window: WindowData, predicted: Trajectory | tuple,
                   sigma_co2, sigma_temp) -> float:
    """Joint Gaussian log-likelihood of both fields over the window.

    ``predicted`` is a Trajectory (its interior rows are compared) or a
    pre-extracted ``(co2, temp)`` pair of interior matrices sampled exactly
    at the window times.
    """
    sigma_co2 = np.asarray(sigma_co2, dtype=float)
    sigma_temp = np.asarray(sigma_temp, dtype=float)
    if np.any(sigma_co2 <= 0) or np.any(sigma_temp <= 0):
        raise DataError("noise scales must be positive")
    if isinstance(predicted, Trajectory):
        if predicted.times.shape != window.times.shape or \
                not np.allclose(predicted.times, window.times, atol=1e-9):
            raise DataError("prediction grid does not match the window times")
        rows = predicted.rows(window.zone_ids)
        pred_co2 = predicted.co2[rows]
        pred_temp = predicted.temp[rows]
    else:
        pred_co2, pred_temp = predicted
    if pred_co2.shape != window.co2.shape or pred_temp.shape != window.temp.shape:
        raise DataError("prediction shape does not match the window data")
    if sigma_co2.shape != (window.co2.shape[0],) or \
            sigma_temp.shape != (window.temp.shape[0],):
        raise DataError("need one noise scale per zone and field")
    return (_field_loglik(window.co2 - pred_co2, sigma_co2)
            + _field_loglik(window.temp - pred_temp, sigma_temp))


@dataclass
class LogPosterior:
    """Callable log-posterior over flat parameter vectors for one window.

    Out-of-support vectors short-circuit before any forward simulation;
    ``n_forward_calls`` counts actual integrations for diagnostics.
    """

    window: WindowData
    priors: PriorSpec
    air: AirKnowns
    thermal: ThermalKnowns
    network: ZoneNetwork
    decomp: TreeCotree
    layout: BlockLayout
    substep: float
    simulator: WindowSimulator = field(init=False)
    n_forward_calls: int = field(init=False, default=0)
    n_evals: int = field(init=False, default=0)

    def __post_init__(self):
        if len(self.window.zone_ids) != len(self.network.interior_ids):
            raise DataError("window must cover every interior zone")
        self.simulator = WindowSimulator(
            self.network, self.decomp, self.layout, self.air, self.thermal,
            self.window.times, self.substep)
        self._sl = self.layout.slices()

    def __call__(self, flat: np.ndarray) -> float:
        self.n_evals += 1
        lp = log_prior(flat, self.priors)
        if lp == OUT_OF_SUPPORT:
            return OUT_OF_SUPPORT
        self.n_forward_calls += 1
        pred_co2, pred_temp = self.simulator.simulate_flat(flat)
        sl = self._sl
        sig_c = flat[sl["sigma_co2"]]
        sig_t = flat[sl["sigma_temp"]]
        rc = self.window.co2 - pred_co2
        rt = self.window.temp - pred_temp
        ll = _field_loglik(rc, sig_c) + _field_loglik(rt, sig_t)
        total = lp + ll
        if not np.isfinite(total):
            # Blown-up integrations (wild proposals) count as unsupported.
            return OUT_OF_SUPPORT
        return float(total)


def log_posterior(flat, window: WindowData, priors: PriorSpec,
                  air: AirKnowns, thermal: ThermalKnowns,
                  network: ZoneNetwork, decomp: TreeCotree,
                  layout: BlockLayout, substep: float) -> float:
    """One-shot evaluation; prefer ``LogPosterior`` for repeated calls."""
    lp = LogPosterior(window=window, priors=priors, air=air, thermal=thermal,
                      network=network, decomp=decomp, layout=layout,
                      substep=substep)
    return lp(np.asarray(flat, dtype=float))
