"""Robust adaptive Metropolis sampling.

Gaussian random-walk proposals ``theta* = theta + S z`` with a lower
triangular factor S that is rank-one updated every iteration so the
acceptance rate is driven toward a target value.  The update coefficient
shrinks as ``iteration**(-adapt_exponent)``, so the kernel becomes
effectively fixed after the adaptation phase.  Proposals outside the prior
support (log-posterior of -inf) are rejected outright; the proposal is
symmetric, so no proposal-density correction is needed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import chol_rank1_update
from .priors import OUT_OF_SUPPORT

logger = logging.getLogger(__name__)

_BLOCK = 1024  # random draws are pre-generated in blocks of this size


@dataclass(frozen=True)
class RamConfig:
    iterations: int
    burn_in: int
    target_accept: float = 0.234
    adapt_exponent: float = 2.0 / 3.0
    initial_scale: float = 0.01
    seed: int = 0
    adapt_after_burnin: bool = True

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if not 0.5 < self.adapt_exponent <= 1.0:
            raise ValueError("adapt_exponent must lie in (0.5, 1]")


@dataclass
class ChainState:
    theta: np.ndarray
    log_post: float
    factor: np.ndarray  # lower-triangular S with S S^T = proposal covariance
    iteration: int = 0


@dataclass
class ChainOutput:
    samples: np.ndarray        # (iterations - burn_in, dim)
    log_posts: np.ndarray
    acceptance_rate: float     # over the retained (post burn-in) phase
    final_state: ChainState
    acceptance_rate_total: float = field(default=float("nan"))


def propose(state: ChainState, rng: np.random.Generator):
    """Draw ``theta + S z`` with fresh standard-normal ``z``; returns both."""
    z = rng.standard_normal(state.theta.size)
    return state.theta + state.factor @ z, z


def accept_prob(logp_current: float, logp_proposed: float) -> float:
    """Metropolis acceptance probability min(1, posterior ratio)."""
    if not math.isfinite(logp_current):
        raise ValueError("current log-posterior must be finite")
    if logp_proposed == OUT_OF_SUPPORT or not math.isfinite(logp_proposed):
        return 0.0
    if logp_proposed >= logp_current:
        return 1.0
    return math.exp(logp_proposed - logp_current)


_STEP_CAP = 0.25


def adapt_step_size(iteration: int, dim: int, exponent: float) -> float:
    """Dimension-scaled step sequence min(cap, dim * iteration**(-exponent)).

    The dimension factor keeps early adaptation strong enough to retune a
    badly scaled high-dimensional proposal; without it the shrinking budget
    is exhausted long before a 70-dimensional factor can equilibrate.  The
    cap tames the early full-strength updates, whose +-30% single-direction
    rescalings otherwise make the factor oscillate for thousands of
    iterations before settling.
    """
    return min(_STEP_CAP, dim * float(iteration) ** (-exponent))


def ram_adapt(state: ChainState, z: np.ndarray, alpha: float,
              config: RamConfig) -> np.ndarray:
    """One rank-one adaptation of the proposal factor.

    Returns S' with S' S'^T = S (I + gamma (alpha - target) z z^T / |z|^2) S^T
    where gamma follows ``adapt_step_size``.  If the downdate would break
    positive-definiteness the step is skipped with a warning.
    """
    znorm2 = float(z @ z)
    if znorm2 <= 0.0:
        raise ValueError("adaptation requires a nonzero proposal increment")
    gamma = adapt_step_size(state.iteration, z.size, config.adapt_exponent)
    coeff = gamma * (alpha - config.target_accept)
    if coeff == 0.0:
        return state.factor
    u = (state.factor @ z) / math.sqrt(znorm2)
    updated = state.factor.copy()
    status = chol_rank1_update(updated, u, coeff)
    if status != 0:
        logger.warning("proposal factor downdate lost positive-definiteness "
                       "at iteration %d; adaptation step skipped",
                       state.iteration)
        return state.factor
    return updated


def initial_factor(init: np.ndarray, init_scales, config: RamConfig) -> np.ndarray:
    """Diagonal start: initial_scale * |init|, floored by ``init_scales``."""
    init_scales = np.broadcast_to(np.asarray(init_scales, dtype=float),
                                  init.shape)
    diag = np.maximum(config.initial_scale * np.abs(init), init_scales)
    if np.any(diag <= 0.0):
        raise ValueError("proposal scales must be positive; provide floors "
                         "for zero-valued coordinates")
    return np.diag(diag)


def run_chain(logpost, init, init_scales, config: RamConfig,
              rng: np.random.Generator | None = None,
              trace_path=None, start_factor: np.ndarray | None = None,
              start_iteration: int = 0) -> ChainOutput:
    """Run one RAM chain and return the retained draws.

    Deterministic for a fixed ``config.seed`` (or caller-provided ``rng``).
    ``trace_path``, when given, receives a per-iteration CSV
    (iteration, log_post, accepted).  ``start_factor``/``start_iteration``
    let a bootstrap phase hand over its adapted proposal instead of
    restarting from the diagonal default.
    """
    init = np.asarray(init, dtype=float)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    lp = float(logpost(init))
    if not math.isfinite(lp):
        raise ValueError("log-posterior is not finite at the chain start")

    d = init.size
    S = (np.array(start_factor, dtype=float) if start_factor is not None
         else initial_factor(init, init_scales, config))
    if S.shape != (d, d):
        raise ValueError("start_factor must be a dim x dim matrix")
    theta = init.copy()
    n_keep = config.iterations - config.burn_in
    samples = np.empty((n_keep, d))
    log_posts = np.empty(n_keep)
    accepted_post = 0
    accepted_total = 0
    state = ChainState(theta=theta, log_post=lp, factor=S, iteration=0)

    trace = open(trace_path, "w", encoding="utf-8") if trace_path else None
    if trace:
        trace.write("iteration,log_post,accepted\n")
    try:
        normals = uniforms = None
        for it in range(1, config.iterations + 1):
            b = (it - 1) % _BLOCK
            if b == 0:
                n_left = min(_BLOCK, config.iterations - it + 1)
                normals = rng.standard_normal((n_left, d))
                uniforms = rng.random(n_left)
            z = normals[b]
            proposal = state.theta + state.factor @ z
            lpp = float(logpost(proposal))
            alpha = accept_prob(state.log_post, lpp)
            took = uniforms[b] < alpha
            if took:
                state.theta = proposal
                state.log_post = lpp
                accepted_total += 1
                if it > config.burn_in:
                    accepted_post += 1
            state.iteration = start_iteration + it
            if config.adapt_after_burnin or it <= config.burn_in:
                state.factor = ram_adapt(state, z, alpha, config)
            if it > config.burn_in:
                k = it - config.burn_in - 1
                samples[k] = state.theta
                log_posts[k] = state.log_post
            if trace:
                trace.write(f"{it},{state.log_post!r},{int(took)}\n")
    finally:
        if trace:
            trace.close()

    return ChainOutput(
        samples=samples, log_posts=log_posts,
        acceptance_rate=accepted_post / max(n_keep, 1),
        final_state=state,
        acceptance_rate_total=accepted_total / config.iterations)
