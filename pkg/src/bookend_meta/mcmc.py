"""Adaptive component-wise random-walk Metropolis with convergence diagnostics.

The sampler targets an arbitrary user-supplied log-posterior over a small
parameter vector. Each coordinate is updated with a Gaussian random-walk
proposal on a transformed unbounded scale (identity for unrestricted
parameters, logit with Jacobian for unit-interval parameters). Proposal step
sizes are tuned during burn-in only, by Robbins-Monro updates toward a target
acceptance rate, and frozen afterwards so the post-burn-in chain is a genuine
Markov chain.

Chains are mutually independent: chain ``c`` draws from a counter-based
Philox stream keyed by ``seed XOR c``, so results are bit-reproducible and
do not depend on scheduling order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

Support = Literal["real", "unit"]

_LOG_STEP_MIN = math.log(1e-9)
_LOG_STEP_MAX = math.log(1e6)


@dataclass(frozen=True)
class SamplerConfig:
    """Run-length and tuning knobs for :func:`sample`.

    ``retained`` is the total number of post-burn-in draws kept across all
    chains after thinning; each chain keeps ``ceil(retained / n_chains)``.
    """

    n_chains: int = 3
    burn_in: int = 2000
    retained: int = 10000
    thin: int = 2
    seed: int = 1
    adapt_window: int = 50
    target_accept: float = 0.44

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.burn_in < 1:
            raise ValueError("burn_in must be >= 1")
        if self.retained < 1:
            raise ValueError("retained must be >= 1")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.adapt_window < 1:
            raise ValueError("adapt_window must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")

    @property
    def retained_per_chain(self) -> int:
        return -(-self.retained // self.n_chains)  # ceil division

    def to_dict(self) -> dict:
        return {
            "n_chains": self.n_chains,
            "burn_in": self.burn_in,
            "retained": self.retained,
            "thin": self.thin,
            "seed": self.seed,
            "adapt_window": self.adapt_window,
            "target_accept": self.target_accept,
        }


@dataclass(frozen=True)
class ParameterSpace:
    """Names and supports of the sampled parameter vector."""

    names: tuple[str, ...]
    supports: tuple[Support, ...]

    def __post_init__(self):
        if len(self.names) != len(self.supports):
            raise ValueError("names and supports must have equal length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("parameter names must be unique")
        for s in self.supports:
            if s not in ("real", "unit"):
                raise ValueError(f"unknown support {s!r}")

    @property
    def dim(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class ChainSet:
    """Retained draws, shape (n_chains, n_retained, n_params), original scale."""

    draws: np.ndarray
    names: tuple[str, ...]
    supports: tuple[Support, ...]
    accept_rates: np.ndarray  # per-parameter, averaged over chains
    step_sizes: np.ndarray  # frozen per-chain step sizes, (n_chains, n_params)
    config: SamplerConfig

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_retained(self) -> int:
        return self.draws.shape[1]

    def parameter(self, name: str) -> np.ndarray:
        """All draws of one parameter, shape (n_chains, n_retained)."""
        return self.draws[:, :, self.names.index(name)]


@dataclass(frozen=True)
class ParameterSummary:
    """Posterior summary of a single parameter.

    ``rhat`` and ``ess`` are None when undefined (constant draws).
    """

    mean: float
    sd: float
    q2_5: float
    median: float
    q97_5: float
    rhat: float | None
    ess: float | None

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "sd": self.sd,
            "q2.5%": self.q2_5,
            "median": self.median,
            "q97.5%": self.q97_5,
            "rhat": self.rhat,
            "ess": self.ess,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSummary":
        return cls(
            mean=d["mean"],
            sd=d["sd"],
            q2_5=d["q2.5%"],
            median=d["median"],
            q97_5=d["q97.5%"],
            rhat=d["rhat"],
            ess=d["ess"],
        )


@dataclass(frozen=True)
class PosteriorSummary:
    """Per-parameter posterior summaries, in sampling order."""

    parameters: dict[str, ParameterSummary] = field(default_factory=dict)

    def __getitem__(self, name: str) -> ParameterSummary:
        return self.parameters[name]

    def __contains__(self, name: str) -> bool:
        return name in self.parameters

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.parameters)

    @property
    def max_rhat(self) -> float | None:
        vals = [p.rhat for p in self.parameters.values() if p.rhat is not None]
        return max(vals) if vals else None

    def to_dict(self) -> dict:
        return {name: p.to_dict() for name, p in self.parameters.items()}


def _to_unconstrained(x: np.ndarray, supports: Sequence[Support]) -> np.ndarray:
    z = np.array(x, dtype=float)
    for i, s in enumerate(supports):
        if s == "unit":
            p = z[i]
            if not 0.0 < p < 1.0:
                raise ValueError(f"unit-interval parameter {i} must start in (0, 1), got {p}")
            z[i] = math.log(p / (1.0 - p))
    return z


def _from_unconstrained(z: np.ndarray, supports: Sequence[Support]) -> np.ndarray:
    x = np.array(z, dtype=float)
    for i, s in enumerate(supports):
        if s == "unit":
            x[i] = 1.0 / (1.0 + math.exp(-x[i])) if x[i] >= 0 else math.exp(x[i]) / (1.0 + math.exp(x[i]))
    return x


def _log_jacobian(z: np.ndarray, supports: Sequence[Support]) -> float:
    # logit transform: dp/dz = p(1-p); log p(1-p) = -log(1+e^-z) - log(1+e^z)
    total = 0.0
    for i, s in enumerate(supports):
        if s == "unit":
            total -= np.logaddexp(0.0, -z[i]) + np.logaddexp(0.0, z[i])
    return float(total)


def _run_chain(
    log_post: Callable[[np.ndarray], float],
    space: ParameterSpace,
    init_z: np.ndarray,
    init_steps: np.ndarray,
    cfg: SamplerConfig,
    chain_index: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One chain; returns (draws on original scale, accept counts, frozen steps)."""
    rng = np.random.Generator(np.random.Philox(key=np.uint64(cfg.seed) ^ np.uint64(chain_index)))
    dim = space.dim
    supports = space.supports

    def target(z: np.ndarray) -> float:
        lp = log_post(_from_unconstrained(z, supports))
        if math.isnan(lp):
            return -math.inf
        return lp + _log_jacobian(z, supports)

    z = init_z.copy()
    lp = target(z)
    if lp == -math.inf:
        raise ValueError("log-posterior is -inf at the initial point")

    log_steps = np.log(init_steps)
    window_accepts = np.zeros(dim)
    window_count = 0
    window_index = 0

    n_keep = cfg.retained_per_chain
    draws = np.empty((n_keep, dim))
    post_accepts = np.zeros(dim)
    post_proposals = 0

    total_iters = cfg.burn_in + n_keep * cfg.thin
    kept = 0
    for t in range(total_iters):
        adapting = t < cfg.burn_in
        # one systematic sweep over coordinates
        noise = rng.standard_normal(dim)
        log_u = np.log(rng.random(dim))
        for i in range(dim):
            z_prop = z.copy()
            z_prop[i] += math.exp(log_steps[i]) * noise[i]
            lp_prop = target(z_prop)
            if log_u[i] < lp_prop - lp:
                z = z_prop
                lp = lp_prop
                if adapting:
                    window_accepts[i] += 1
                else:
                    post_accepts[i] += 1
        if adapting:
            window_count += 1
            if window_count == cfg.adapt_window:
                window_index += 1
                gain = 1.0 / math.sqrt(window_index)
                rates = window_accepts / cfg.adapt_window
                log_steps += gain * (rates - cfg.target_accept)
                np.clip(log_steps, _LOG_STEP_MIN, _LOG_STEP_MAX, out=log_steps)
                window_accepts[:] = 0.0
                window_count = 0
        else:
            post_proposals += 1
            if (t - cfg.burn_in + 1) % cfg.thin == 0:
                draws[kept] = _from_unconstrained(z, supports)
                kept += 1
    assert kept == n_keep
    rates = post_accepts / max(post_proposals, 1)
    return draws, rates, np.exp(log_steps)


def sample(
    log_post: Callable[[np.ndarray], float],
    space: ParameterSpace,
    init: Sequence[float],
    cfg: SamplerConfig,
    init_steps: Sequence[float] | None = None,
) -> ChainSet:
    """Draw from ``exp(log_post)`` with per-coordinate adaptive random walk.

    Parameters
    ----------
    log_post
        Unnormalized log-density over the original-scale parameter vector.
        May return -inf outside the support; NaN at a proposal is treated
        as a rejection.
    space
        Names and supports; unit-interval parameters are proposed on the
        logit scale with the appropriate Jacobian.
    init
        Starting point (original scale, strictly inside all supports).
        Identical for every chain; chains decorrelate during burn-in.
    cfg
        Chain lengths, thinning, seed and adaptation settings.
    init_steps
        Optional starting proposal scales (unconstrained scale, one per
        parameter). Defaults to 1.0; pass rough posterior-scale guesses to
        shorten adaptation on sharply concentrated targets.

    Returns
    -------
    ChainSet
        Retained draws, bit-reproducible given (cfg.seed, chain index).
    """
    init = np.asarray(list(init), dtype=float)
    if init.shape != (space.dim,):
        raise ValueError(f"init has dimension {init.shape}, expected ({space.dim},)")
    if not np.all(np.isfinite(init)):
        raise ValueError("init must be finite")
    lp0 = log_post(init)
    if math.isnan(lp0) or lp0 == -math.inf:
        raise ValueError("log-posterior must be finite at init")
    if init_steps is None:
        steps = np.ones(space.dim)
    else:
        steps = np.asarray(list(init_steps), dtype=float)
        if steps.shape != (space.dim,) or not np.all(steps > 0):
            raise ValueError("init_steps must be positive, one per parameter")

    init_z = _to_unconstrained(init, space.supports)
    all_draws = np.empty((cfg.n_chains, cfg.retained_per_chain, space.dim))
    all_rates = np.empty((cfg.n_chains, space.dim))
    all_steps = np.empty((cfg.n_chains, space.dim))
    for c in range(cfg.n_chains):
        draws, rates, frozen = _run_chain(log_post, space, init_z, steps, cfg, c)
        all_draws[c] = draws
        all_rates[c] = rates
        all_steps[c] = frozen
    return ChainSet(
        draws=all_draws,
        names=space.names,
        supports=space.supports,
        accept_rates=all_rates.mean(axis=0),
        step_sizes=all_steps,
        config=cfg,
    )


def _split_chains(x: np.ndarray) -> np.ndarray:
    """Split each chain in half; (m, n) -> (2m, n//2). Drops an odd last draw."""
    m, n = x.shape
    half = n // 2
    return np.concatenate([x[:, :half], x[:, half : 2 * half]], axis=0)


def split_rhat(x: np.ndarray) -> float | None:
    """Potential scale reduction on split chains; None when draws are constant.

    Classic between/within variance ratio computed on the 2m half-chains.
    The estimate is floored at 1.0 (sampling noise can push the raw ratio
    slightly below one).
    """
    s = _split_chains(np.asarray(x, dtype=float))
    m, n = s.shape
    if n < 2:
        return None
    chain_means = s.mean(axis=1)
    chain_vars = s.var(axis=1, ddof=1)
    w = chain_vars.mean()
    if w == 0.0:
        return None
    b = n * chain_means.var(ddof=1)
    var_plus = (n - 1) / n * w + b / n
    return max(1.0, math.sqrt(var_plus / w))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased (1/n) autocovariance of each row via FFT; shape preserved."""
    m, n = x.shape
    centered = x - x.mean(axis=1, keepdims=True)
    size = 1
    while size < 2 * n:
        size *= 2
    f = np.fft.rfft(centered, n=size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), n=size, axis=1)[:, :n].real
    return acov / n


def bulk_ess(x: np.ndarray) -> float | None:
    """Rank-normalized effective sample size on split chains.

    Draws are replaced by normal scores of their pooled ranks, then the
    multi-chain autocorrelation series is truncated with Geyer's initial
    monotone positive-pair rule. Capped at the total number of draws.
    None when draws are constant.
    """
    s = _split_chains(np.asarray(x, dtype=float))
    m, n = s.shape
    if n < 4:
        return None
    if np.all(s == s.flat[0]):
        return None
    # average ranks of pooled draws, mapped through the normal quantile function
    flat = s.ravel()
    ranks = rankdata(flat, method="average")
    z = ndtri((ranks - 0.375) / (flat.size + 0.25)).reshape(m, n)

    acov = _autocovariance(z)
    chain_vars = acov[:, 0] * n / (n - 1)
    w = chain_vars.mean()
    if w == 0.0:
        return None
    b = n * z.mean(axis=1).var(ddof=1) if m > 1 else 0.0
    var_plus = (n - 1) / n * w + b / n
    if var_plus == 0.0:
        return None
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus  # rho[0] ~ 1
    # Geyer initial monotone positive sequence on paired sums
    max_pairs = (n - 1) // 2
    prev_pair = math.inf
    total = 0.0
    for k in range(max_pairs + 1):
        pair = rho[2 * k] + rho[2 * k + 1] if 2 * k + 1 < n else rho[2 * k]
        if pair <= 0.0:
            break
        pair = min(pair, prev_pair)
        prev_pair = pair
        total += pair
    tau = max(2.0 * total - rho[0], 1e-12)
    ess = m * n / tau
    return float(min(ess, m * n))


def summarize(chains: ChainSet) -> PosteriorSummary:
    """Per-parameter means, quantiles, split R-hat and bulk ESS.

    Requires at least 2 chains of at least 100 retained draws each.
    Quantiles interpolate order statistics linearly. Constant parameters
    get sd = 0 and undefined (None) R-hat / ESS rather than NaN.
    """
    if chains.n_chains < 2:
        raise ValueError("summarize requires at least 2 chains")
    if chains.n_retained < 100:
        raise ValueError("summarize requires at least 100 retained draws per chain")
    params: dict[str, ParameterSummary] = {}
    for i, name in enumerate(chains.names):
        x = chains.draws[:, :, i]
        pooled = x.ravel()
        q2_5, median, q97_5 = np.quantile(pooled, [0.025, 0.5, 0.975], method="linear")
        params[name] = ParameterSummary(
            mean=float(pooled.mean()),
            sd=float(pooled.std(ddof=1)),
            q2_5=float(q2_5),
            median=float(median),
            q97_5=float(q97_5),
            rhat=split_rhat(x),
            ess=bulk_ess(x),
        )
    return PosteriorSummary(parameters=params)
