"""Prior densities over the augmented parameter vector.

Two families are supported: plain normals and truncated normals with the
standard renormalization by the support mass (computed through the
complementary error function, which stays accurate in the tails).

Initial-state coordinates get window-anchored priors: mean equal to the
first observation of the window, standard deviation taken live from the
sampled noise-scale coordinate of the same zone (``sigma_link``), so their
density moves with the noise estimate.  A config switch replaces the live
link with the fixed prior-mean noise scale.

Evaluations outside the support return ``OUT_OF_SUPPORT``, a sentinel that
compares below every finite log-density and must never enter arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import ConfigError
from .params import BlockLayout, ParameterVector

OUT_OF_SUPPORT = float("-inf")

NORMAL = 0
TRUNCNORM = 1

_LOG_2PI = float(np.log(2.0 * np.pi))
_SQRT2 = float(np.sqrt(2.0))


def _std_normal_cdf_diff(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Phi(beta) - Phi(alpha), branch-selected to avoid tail cancellation."""
    direct = 0.5 * (erfc(alpha / _SQRT2) - erfc(beta / _SQRT2))
    mirrored = 0.5 * (erfc(-beta / _SQRT2) - erfc(-alpha / _SQRT2))
    return np.where(alpha + beta > 0.0, direct, mirrored)


@dataclass(frozen=True)
class PriorSpec:
    """Per-coordinate prior description over a flat parameter vector."""

    family: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sigma_link: np.ndarray
    log_trunc_mass: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, family, mu, sigma, lower, upper,
                    sigma_link=None) -> "PriorSpec":
        family = np.asarray(family, dtype=np.int8)
        mu = np.asarray(mu, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if sigma_link is None:
            sigma_link = np.full(mu.shape, -1, dtype=np.int64)
        else:
            sigma_link = np.asarray(sigma_link, dtype=np.int64)
        n = mu.shape[0]
        for name, arr in (("family", family), ("sigma", sigma),
                          ("lower", lower), ("upper", upper),
                          ("sigma_link", sigma_link)):
            if arr.shape != (n,):
                raise ConfigError(f"prior array {name!r} has shape {arr.shape}, "
                                  f"expected ({n},)")
        unlinked = sigma_link < 0
        if np.any(sigma[unlinked] <= 0):
            raise ConfigError("prior sigma must be positive")
        if np.any(family[sigma_link >= 0] != NORMAL):
            raise ConfigError("sigma-linked coordinates must use the normal family")
        trunc = family == TRUNCNORM
        if np.any(lower[trunc] >= upper[trunc]):
            raise ConfigError("truncation bounds must satisfy lower < upper")

        log_mass = np.zeros(n)
        if np.any(trunc):
            alpha = (lower[trunc] - mu[trunc]) / sigma[trunc]
            beta = (upper[trunc] - mu[trunc]) / sigma[trunc]
            mass = _std_normal_cdf_diff(alpha, beta)
            if np.any(mass <= 0):
                raise ConfigError("truncated prior has no support mass")
            log_mass[trunc] = np.log(mass)
        # Unbounded coordinates use infinite bounds so one vectorized support
        # test covers everything.
        lower = np.where(trunc, lower, -np.inf)
        upper = np.where(trunc, upper, np.inf)
        return cls(family=family, mu=mu, sigma=sigma, lower=lower, upper=upper,
                   sigma_link=sigma_link, log_trunc_mass=log_mass)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def in_support(self, flat: np.ndarray) -> bool:
        return bool(np.all(flat >= self.lower) and np.all(flat <= self.upper))

    def clamp(self, flat: np.ndarray) -> np.ndarray:
        """Project a vector into the (bounds-inclusive) prior support."""
        return np.clip(flat, self.lower, self.upper)

    def effective_sigma(self, flat: np.ndarray) -> np.ndarray:
        linked = self.sigma_link >= 0
        sig = self.sigma.copy()
        if np.any(linked):
            sig[linked] = flat[self.sigma_link[linked]]
        return sig


def log_prior(flat, spec: PriorSpec) -> float:
    """Sum of per-coordinate log prior densities, or ``OUT_OF_SUPPORT``."""
    x = np.asarray(flat, dtype=float)
    if x.shape != (spec.dim,):
        raise ConfigError(f"theta has shape {x.shape}, priors cover ({spec.dim},)")
    if not spec.in_support(x):
        return OUT_OF_SUPPORT
    sig = spec.effective_sigma(x)
    if np.any(sig <= 0):
        return OUT_OF_SUPPORT
    z = (x - spec.mu) / sig
    dens = -0.5 * z * z - np.log(sig) - 0.5 * _LOG_2PI - spec.log_trunc_mass
    return float(np.sum(dens))


_BLOCK_KEYS = {"occupancy": "interior", "flows": "flows",
               "resistances": "thermal", "capacitances": "interior",
               "sigma_co2": "interior", "sigma_temp": "interior"}

_ENTRY_KEYS = {"family", "mu", "sigma", "lower", "upper"}


def _parse_entry(raw: dict, where: str) -> tuple[int, float, float, float, float]:
    unknown = set(raw) - _ENTRY_KEYS
    if unknown:
        raise ConfigError(f"{where}: unknown prior keys {sorted(unknown)}")
    family = raw.get("family", "truncnorm")
    if family == "normal":
        fam = NORMAL
        lower, upper = -np.inf, np.inf
    elif family == "truncnorm":
        fam = TRUNCNORM
        try:
            lower, upper = float(raw["lower"]), float(raw["upper"])
        except KeyError as exc:
            raise ConfigError(f"{where}: truncnorm needs lower/upper") from exc
    else:
        raise ConfigError(f"{where}: unknown family {family!r}")
    try:
        mu, sigma = float(raw["mu"]), float(raw["sigma"])
    except KeyError as exc:
        raise ConfigError(f"{where}: missing mu/sigma") from exc
    return fam, mu, sigma, lower, upper


@dataclass(frozen=True)
class PriorModel:
    """Window-independent prior template; anchors resolve per window."""

    layout: BlockLayout
    family: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    anchor_sigma: str = "sampled"

    @classmethod
    def from_config(cls, cfg: dict, layout: BlockLayout) -> "PriorModel":
        allowed = set(_BLOCK_KEYS) | {"schema_version", "initial_states"}
        unknown = set(cfg) - allowed
        if unknown:
            raise ConfigError(f"unknown prior config keys: {sorted(unknown)}")
        if cfg.get("schema_version", 1) != 1:
            raise ConfigError(
                f"unsupported prior schema_version {cfg['schema_version']}")

        labels = {"interior": layout.interior_ids, "flows": layout.flow_ids,
                  "thermal": layout.thermal_ids}
        sizes = layout.block_sizes()
        sl = layout.slices()
        family = np.zeros(layout.dim, dtype=np.int8)
        mu = np.zeros(layout.dim)
        sigma = np.ones(layout.dim)
        lower = np.full(layout.dim, -np.inf)
        upper = np.full(layout.dim, np.inf)

        for block, label_kind in _BLOCK_KEYS.items():
            if block not in cfg:
                raise ConfigError(f"prior config missing block {block!r}")
            raw = cfg[block]
            unknown = set(raw) - {"default", "overrides"}
            if unknown:
                raise ConfigError(f"{block}: unknown keys {sorted(unknown)}")
            if "default" not in raw:
                raise ConfigError(f"{block}: missing default prior")
            default = _parse_entry(raw["default"], block)
            overrides = raw.get("overrides", {})
            ids = labels[label_kind]
            bad = set(overrides) - set(ids)
            if bad:
                raise ConfigError(f"{block}: overrides for unknown ids {sorted(bad)}")
            entries = [
                _parse_entry(overrides[i], f"{block}[{i}]") if i in overrides else default
                for i in ids
            ]
            assert len(entries) == sizes[block]
            s = sl[block]
            family[s] = [e[0] for e in entries]
            mu[s] = [e[1] for e in entries]
            sigma[s] = [e[2] for e in entries]
            lower[s] = [e[3] for e in entries]
            upper[s] = [e[4] for e in entries]

        init_cfg = cfg.get("initial_states", {})
        unknown = set(init_cfg) - {"anchor_sigma"}
        if unknown:
            raise ConfigError(f"initial_states: unknown keys {sorted(unknown)}")
        anchor_sigma = init_cfg.get("anchor_sigma", "sampled")
        if anchor_sigma not in ("sampled", "prior_mean"):
            raise ConfigError(f"initial_states.anchor_sigma must be 'sampled' or "
                              f"'prior_mean', got {anchor_sigma!r}")

        # Initial-state blocks are placeholders until a window anchors them.
        for block in ("co2_init", "temp_init"):
            s = sl[block]
            family[s] = NORMAL
        return cls(layout=layout, family=family, mu=mu, sigma=sigma,
                   lower=lower, upper=upper, anchor_sigma=anchor_sigma)

    def spec_for_window(self, first_co2, first_temp) -> PriorSpec:
        """Resolve the anchored initial-state priors for one window."""
        first_co2 = np.asarray(first_co2, dtype=float)
        first_temp = np.asarray(first_temp, dtype=float)
        n_int = len(self.layout.interior_ids)
        if first_co2.shape != (n_int,) or first_temp.shape != (n_int,):
            raise ConfigError("window anchors must cover every interior zone")

        sl = self.layout.slices()
        mu = self.mu.copy()
        sigma = self.sigma.copy()
        mu[sl["co2_init"]] = first_co2
        mu[sl["temp_init"]] = first_temp
        sigma_link = np.full(self.layout.dim, -1, dtype=np.int64)
        if self.anchor_sigma == "sampled":
            sigma_link[sl["co2_init"]] = np.arange(*sl["sigma_co2"].indices(self.layout.dim)[:2])
            sigma_link[sl["temp_init"]] = np.arange(*sl["sigma_temp"].indices(self.layout.dim)[:2])
        else:
            sigma[sl["co2_init"]] = self.mu[sl["sigma_co2"]]
            sigma[sl["temp_init"]] = self.mu[sl["sigma_temp"]]
        return PriorSpec.from_arrays(self.family, mu, sigma, self.lower,
                                     self.upper, sigma_link)

    def default_theta(self, first_co2, first_temp,
                      occupancy: float = 0.5,
                      boundary_flow: float = 0.01) -> ParameterVector:
        """Physically reasonable chain start for a first window."""
        sl = self.layout.slices()
        flat = self.mu.copy()
        flat[sl["occupancy"]] = occupancy
        flat[sl["flows"]] = boundary_flow
        flat[sl["co2_init"]] = np.asarray(first_co2, dtype=float)
        flat[sl["temp_init"]] = np.asarray(first_temp, dtype=float)
        spec = self.spec_for_window(first_co2, first_temp)
        return ParameterVector.from_flat(self.layout, spec.clamp(flat))

    def proposal_floors(self, fraction: float = 1e-3) -> np.ndarray:
        """Per-coordinate proposal-scale floors (fraction of the prior sigma)."""
        sigma = self.sigma.copy()
        sl = self.layout.slices()
        sigma[sl["co2_init"]] = self.mu[sl["sigma_co2"]]
        sigma[sl["temp_init"]] = self.mu[sl["sigma_temp"]]
        return fraction * sigma
