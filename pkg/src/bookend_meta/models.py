"""Log-posteriors for the three fitted models and the sampler binding.

Three binomial-likelihood models over two-arm studies:

* standard fixed-effect: one nuisance baseline log-odds per study plus a
  common treatment effect ``d`` on the linear predictor,
* standard random-effects: per-study effects exchangeable around ``d`` with
  between-study standard deviation ``tau``,
* bookend: the two studies with extreme baseline risks are assumed
  homogeneous; every other study's event probabilities are unknown-weight
  mixtures of the two bookend probabilities *at the probability scale*,
  which is exactly the mechanism that attenuates marginal odds ratios.

Priors: Normal(0, variance 100) on all log-odds parameters, Beta(1, 1) on
mixing weights, half-Normal on ``tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import Dataset, DegenerateStudyError, Treatment, observed_log_or
from .mcmc import ChainSet, ParameterSpace, PosteriorSummary, SamplerConfig, sample, summarize

_LOG_2PI = math.log(2.0 * math.pi)


class ModelKind(Enum):
    STANDARD_FE = "standard-fe"
    STANDARD_RE = "standard-re"
    BOOKEND = "bookend"


@dataclass(frozen=True)
class ModelSpec:
    """Which posterior to fit, plus prior and bookend configuration."""

    kind: ModelKind
    bookend_low: str | None = None
    bookend_high: str | None = None
    prior_sd_logodds: float = 10.0
    tau_prior_scale: float = 1.0

    def __post_init__(self):
        if not self.prior_sd_logodds > 0:
            raise ValueError("prior_sd_logodds must be > 0")
        if not self.tau_prior_scale > 0:
            raise ValueError("tau_prior_scale must be > 0")
        if self.kind is ModelKind.BOOKEND:
            if self.bookend_low is None or self.bookend_high is None:
                raise ValueError("bookend model requires bookend_low and bookend_high")
            if self.bookend_low == self.bookend_high:
                raise ValueError("bookend_low and bookend_high must differ")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "bookend_low": self.bookend_low,
            "bookend_high": self.bookend_high,
            "prior_sd_logodds": self.prior_sd_logodds,
            "tau_prior_scale": self.tau_prior_scale,
        }


@dataclass(frozen=True)
class ParameterRole:
    """What a sampled parameter means: baseline/effect/heterogeneity/mixing."""

    role: str
    study_id: str | None = None


@dataclass(frozen=True)
class FitResult:
    model: ModelSpec
    summary: PosteriorSummary
    chains: ChainSet
    roles: dict[str, ParameterRole]
    study_sizes: dict[str, int]
    converged: bool

    def names_with_role(self, role: str) -> list[str]:
        return [n for n, r in self.roles.items() if r.role == role]


@dataclass(frozen=True)
class _ArmTables:
    """Flattened event/non-event counts with the constant likelihood term.

    ``r`` and ``nr`` hold controls first, then actives, each in study order,
    so the matching linear predictor is ``concat(eta_control, eta_active)``.
    """

    r: np.ndarray  # events, (2J,)
    nr: np.ndarray  # non-events n - r, (2J,)
    log_coef: float  # sum of log C(n, r), constant in the parameters
    all_positive: bool  # no zero cells: the fast dot-product path is exact
    j: int


def _make_arm_tables(r_c, n_c, r_a, n_a) -> _ArmTables:
    from scipy.special import gammaln

    r = np.concatenate([r_c, r_a])
    n = np.concatenate([n_c, n_a])
    nr = n - r
    log_coef = float(np.sum(gammaln(n + 1) - gammaln(r + 1) - gammaln(nr + 1)))
    r.setflags(write=False)
    nr.setflags(write=False)
    return _ArmTables(
        r=r, nr=nr, log_coef=log_coef,
        all_positive=bool(np.all(r > 0) and np.all(nr > 0)),
        j=len(r_c),
    )


@lru_cache(maxsize=64)
def _tables(data: Dataset) -> _ArmTables:
    ids = data.study_ids
    r_c = np.array([data.arm(s, Treatment.CONTROL).events for s in ids], dtype=float)
    n_c = np.array([data.arm(s, Treatment.CONTROL).size for s in ids], dtype=float)
    r_a = np.array([data.arm(s, Treatment.ACTIVE).events for s in ids], dtype=float)
    n_a = np.array([data.arm(s, Treatment.ACTIVE).size for s in ids], dtype=float)
    return _make_arm_tables(r_c, n_c, r_a, n_a)


def _masked_counts_ll(t: _ArmTables, log_p: np.ndarray, log_q: np.ndarray) -> float:
    """Zero counts contribute nothing even at infinite log-probabilities."""
    t1 = t.r * np.where(t.r > 0, log_p, 0.0)
    t2 = t.nr * np.where(t.nr > 0, log_q, 0.0)
    return float(np.sum(t1) + np.sum(t2))


def _binom_loglik_logits(t: _ArmTables, eta: np.ndarray) -> float:
    """Binomial log-likelihood (sans constant) at logits ``eta``.

    Uses log(1-p) = log(p) - eta, so a single logaddexp covers both tails.
    """
    log_p = -np.logaddexp(0.0, -eta)
    log_q = log_p - eta
    if t.all_positive:
        return float(t.r @ log_p + t.nr @ log_q)
    return _masked_counts_ll(t, log_p, log_q)


def _binom_loglik_probs(t: _ArmTables, p: np.ndarray) -> float:
    """Binomial log-likelihood (sans constant) at probabilities in [0, 1]."""
    with np.errstate(divide="ignore"):
        log_p = np.log(p)
        log_q = np.log1p(-p)
    if t.all_positive:
        total = float(t.r @ log_p + t.nr @ log_q)
    else:
        total = _masked_counts_ll(t, log_p, log_q)
    return total if not math.isnan(total) else -math.inf


def _normal_logpdf(x: np.ndarray | float, sd: float) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(-0.5 * _LOG_2PI - math.log(sd) - 0.5 * (x / sd) ** 2))


def _half_normal_logpdf(x: float, scale: float) -> float:
    if x <= 0:
        return -math.inf
    return 0.5 * math.log(2.0 / math.pi) - math.log(scale) - 0.5 * (x / scale) ** 2


def log_post_standard_fe(
    data: Dataset, theta: Sequence[float], prior_sd_logodds: float = 10.0
) -> float:
    """Fixed-effect log-posterior at theta = (mu_1..mu_J, d).

    Control-arm logit is mu_j, active-arm logit is mu_j + d, with
    Normal(0, sd) priors on every component.
    """
    theta = np.asarray(theta, dtype=float)
    t = _tables(data)
    j = t.j
    if theta.shape != (j + 1,):
        raise ValueError(f"theta must have dimension J+1 = {j + 1}, got {theta.shape}")
    if not np.all(np.isfinite(theta)):
        return -math.inf
    mu = theta[:j]
    d = theta[j]
    eta = np.concatenate([mu, mu + d])
    return _binom_loglik_logits(t, eta) + t.log_coef + _normal_logpdf(theta, prior_sd_logodds)


def log_post_standard_re(
    data: Dataset,
    theta: Sequence[float],
    prior_sd_logodds: float = 10.0,
    tau_prior_scale: float = 1.0,
) -> float:
    """Random-effects log-posterior at theta = (mu_1..J, delta_1..J, d, tau).

    Per-study effects delta_j ~ Normal(d, tau^2); half-Normal(scale) prior
    on tau (returns -inf for tau <= 0).
    """
    theta = np.asarray(theta, dtype=float)
    t = _tables(data)
    j = t.j
    if theta.shape != (2 * j + 2,):
        raise ValueError(f"theta must have dimension 2J+2 = {2 * j + 2}, got {theta.shape}")
    if not np.all(np.isfinite(theta)):
        return -math.inf
    mu = theta[:j]
    delta = theta[j : 2 * j]
    d = theta[2 * j]
    tau = theta[2 * j + 1]
    if tau <= 0:
        return -math.inf
    eta = np.concatenate([mu, mu + delta])
    lp = _binom_loglik_logits(t, eta) + t.log_coef
    lp += _normal_logpdf(mu, prior_sd_logodds) + _normal_logpdf(d, prior_sd_logodds)
    lp += float(np.sum(-0.5 * _LOG_2PI - math.log(tau) - 0.5 * ((delta - d) / tau) ** 2))
    lp += _half_normal_logpdf(tau, tau_prior_scale)
    return lp


def log_post_standard_re_noncentered(
    data: Dataset,
    theta: Sequence[float],
    prior_sd_logodds: float = 10.0,
    tau_prior_scale: float = 1.0,
) -> float:
    """Random-effects posterior in non-centered form, theta = (mu_1..J, z_1..J, d, tau).

    Study effects are delta_j = d + tau * z_j with z_j ~ Normal(0, 1). This is
    the same posterior as :func:`log_post_standard_re` after the change of
    variables (their values differ pointwise by J*log(tau), the Jacobian), but
    it remains well-conditioned for component-wise sampling as tau -> 0.
    """
    theta = np.asarray(theta, dtype=float)
    t = _tables(data)
    j = t.j
    if theta.shape != (2 * j + 2,):
        raise ValueError(f"theta must have dimension 2J+2 = {2 * j + 2}, got {theta.shape}")
    if not np.all(np.isfinite(theta)):
        return -math.inf
    mu = theta[:j]
    z = theta[j : 2 * j]
    d = theta[2 * j]
    tau = theta[2 * j + 1]
    if tau <= 0:
        return -math.inf
    delta = d + tau * z
    eta = np.concatenate([mu, mu + delta])
    lp = _binom_loglik_logits(t, eta) + t.log_coef
    lp += _normal_logpdf(mu, prior_sd_logodds) + _normal_logpdf(d, prior_sd_logodds)
    lp += _normal_logpdf(z, 1.0)
    lp += _half_normal_logpdf(tau, tau_prior_scale)
    return lp


def _bookend_layout(data: Dataset, spec: ModelSpec) -> tuple[int, int, list[int]]:
    """Indices of (low, high, mixed...) studies in dataset order."""
    ids = data.study_ids
    if data.n_studies < 3:
        raise ValueError("bookend model requires at least 3 studies")
    for sid in (spec.bookend_low, spec.bookend_high):
        if sid not in ids:
            raise ValueError(f"bookend study {sid!r} not present in dataset")
    low = ids.index(spec.bookend_low)
    high = ids.index(spec.bookend_high)
    mixed = [i for i in range(len(ids)) if i not in (low, high)]
    return low, high, mixed


@lru_cache(maxsize=64)
def _bookend_tables(data: Dataset, low_id: str, high_id: str) -> tuple[_ArmTables, _ArmTables]:
    """Counts split into bookend arms (order low, high x control, active)
    and mixed-study arms (controls first)."""
    spec = ModelSpec(ModelKind.BOOKEND, bookend_low=low_id, bookend_high=high_id)
    low, high, mixed = _bookend_layout(data, spec)
    t = _tables(data)
    j = t.j
    r_c, r_a = t.r[:j], t.r[j:]
    nr_c, nr_a = t.nr[:j], t.nr[j:]
    book = _make_arm_tables(
        r_c[[low, high]], r_c[[low, high]] + nr_c[[low, high]],
        r_a[[low, high]], r_a[[low, high]] + nr_a[[low, high]],
    )
    mix = _make_arm_tables(
        r_c[mixed], r_c[mixed] + nr_c[mixed],
        r_a[mixed], r_a[mixed] + nr_a[mixed],
    )
    return book, mix


def log_post_bookend(data: Dataset, spec: ModelSpec, theta: Sequence[float]) -> float:
    """Bookend log-posterior at theta = (mu_low, mu_high, d, w_1..w_M).

    Bookend studies follow the standard contrast model at their own
    baselines; every other study's arm-k probability is
    w_m * p_low_k + (1 - w_m) * p_high_k, one mixing weight per study,
    ordered as the mixed studies appear in the dataset. Beta(1, 1) prior on
    each weight; any w outside [0, 1] gives -inf.
    """
    theta = np.asarray(theta, dtype=float)
    book, mix = _bookend_tables(data, spec.bookend_low, spec.bookend_high)
    m = mix.j
    if theta.shape != (3 + m,):
        raise ValueError(f"theta must have dimension 3+M = {3 + m}, got {theta.shape}")
    if not np.all(np.isfinite(theta)):
        return -math.inf
    mu_low, mu_high, d = theta[0], theta[1], theta[2]
    w = theta[3:]
    if np.any(w < 0.0) or np.any(w > 1.0):
        return -math.inf

    eta = np.array([mu_low, mu_high, mu_low + d, mu_high + d])
    log_p = -np.logaddexp(0.0, -eta)
    log_q = log_p - eta
    if book.all_positive:
        lp = float(book.r @ log_p + book.nr @ log_q)
    else:
        lp = _masked_counts_ll(book, log_p, log_q)

    p = np.exp(log_p)  # [p_low_ctrl, p_high_ctrl, p_low_act, p_high_act]
    p_mix = np.concatenate([w * p[0] + (1.0 - w) * p[1], w * p[2] + (1.0 - w) * p[3]])
    np.clip(p_mix, 0.0, 1.0, out=p_mix)  # guard 1-ulp overshoot of the convex blend
    lp += _binom_loglik_probs(mix, p_mix)

    lp += book.log_coef + mix.log_coef
    lp += _normal_logpdf(theta[:3], spec.prior_sd_logodds)
    # Beta(1,1) on each w: log-density 0 on [0,1]
    return float(lp)


def _empirical_logit(events: int, size: int) -> float:
    """log(r / (n - r)) with a 0.5 continuity correction for zero cells."""
    r, n = float(events), float(size)
    if n == 0:
        return 0.0
    if r == 0.0 or r == n:
        r, n = r + 0.5, n + 1.0
    return math.log(r / (n - r))


def _pooled_se_guess(data: Dataset) -> float:
    ses = []
    for sid in data.study_ids:
        try:
            ses.append(observed_log_or(*data.study(sid)).se)
        except DegenerateStudyError:
            continue
    if not ses:
        return 1.0
    return 1.0 / math.sqrt(sum(1.0 / s**2 for s in ses))


def _arm_se_guess(events: int, size: int) -> float:
    if size == 0:
        return 1.0
    r, n = events + 0.5, size + 1.0
    return math.sqrt(1.0 / r + 1.0 / (n - r))


def fit(data: Dataset, spec: ModelSpec, cfg: SamplerConfig) -> FitResult:
    """Sample the requested model and summarize the posterior.

    Initialization is data-informed: baseline parameters start at empirical
    logits, the effect at 0, mixing weights at 0.5 and tau at 0.5. The
    random-effects model is sampled in its non-centered form; the reported
    chains contain the implied delta_j = d + tau*z_j draws.

    Non-convergence (any split R-hat >= 1.01) sets ``converged=False`` but is
    not an error.
    """
    ids = data.study_ids
    j = data.n_studies
    sizes = {sid: data.study_size(sid) for sid in ids}

    if spec.kind in (ModelKind.STANDARD_FE, ModelKind.STANDARD_RE) and j < 2:
        raise ValueError("standard models require at least 2 studies")

    mu_names = [f"mu[{sid}]" for sid in ids]
    mu_init = [_empirical_logit(data.arm(s, Treatment.CONTROL).events,
                                data.arm(s, Treatment.CONTROL).size) for s in ids]
    mu_steps = [_arm_se_guess(data.arm(s, Treatment.CONTROL).events,
                              data.arm(s, Treatment.CONTROL).size) for s in ids]
    d_step = _pooled_se_guess(data)

    if spec.kind is ModelKind.STANDARD_FE:
        space = ParameterSpace(names=tuple(mu_names + ["d"]), supports=("real",) * (j + 1))
        init = mu_init + [0.0]
        steps = mu_steps + [d_step]
        chains = sample(
            lambda th: log_post_standard_fe(data, th, spec.prior_sd_logodds),
            space, init, cfg, init_steps=steps,
        )
        roles = {n: ParameterRole("baseline", sid) for n, sid in zip(mu_names, ids)}
        roles["d"] = ParameterRole("effect")

    elif spec.kind is ModelKind.STANDARD_RE:
        z_names = [f"z[{sid}]" for sid in ids]
        space = ParameterSpace(
            names=tuple(mu_names + z_names + ["d", "tau"]),
            supports=("real",) * (2 * j + 2),
        )
        init = mu_init + [0.0] * j + [0.0, 0.5]
        steps = mu_steps + [1.0] * j + [d_step, 0.5]
        raw = sample(
            lambda th: log_post_standard_re_noncentered(
                data, th, spec.prior_sd_logodds, spec.tau_prior_scale
            ),
            space, init, cfg, init_steps=steps,
        )
        # report delta_j = d + tau*z_j in place of the non-centered z_j
        mu_draws = raw.draws[:, :, :j]
        z_draws = raw.draws[:, :, j : 2 * j]
        d_draws = raw.draws[:, :, 2 * j : 2 * j + 1]
        tau_draws = raw.draws[:, :, 2 * j + 1 : 2 * j + 2]
        delta_draws = d_draws + tau_draws * z_draws
        delta_names = [f"delta[{sid}]" for sid in ids]
        chains = ChainSet(
            draws=np.concatenate([mu_draws, delta_draws, d_draws, tau_draws], axis=2),
            names=tuple(mu_names + delta_names + ["d", "tau"]),
            supports=("real",) * (2 * j + 2),
            accept_rates=raw.accept_rates,
            step_sizes=raw.step_sizes,
            config=raw.config,
        )
        roles = {n: ParameterRole("baseline", sid) for n, sid in zip(mu_names, ids)}
        roles.update({n: ParameterRole("effect", sid) for n, sid in zip(delta_names, ids)})
        roles["d"] = ParameterRole("effect")
        roles["tau"] = ParameterRole("heterogeneity")

    elif spec.kind is ModelKind.BOOKEND:
        low, high, mixed = _bookend_layout(data, spec)
        mixed_ids = [ids[i] for i in mixed]
        w_names = [f"w[{sid}]" for sid in mixed_ids]
        names = [f"mu[{ids[low]}]", f"mu[{ids[high]}]", "d"] + w_names
        space = ParameterSpace(
            names=tuple(names),
            supports=("real", "real", "real") + ("unit",) * len(mixed),
        )
        init = [mu_init[low], mu_init[high], 0.0] + [0.5] * len(mixed)
        steps = [mu_steps[low], mu_steps[high], d_step] + [1.0] * len(mixed)
        chains = sample(
            lambda th: log_post_bookend(data, spec, th),
            space, init, cfg, init_steps=steps,
        )
        roles = {
            names[0]: ParameterRole("baseline", ids[low]),
            names[1]: ParameterRole("baseline", ids[high]),
            "d": ParameterRole("effect"),
        }
        roles.update({n: ParameterRole("mixing", sid) for n, sid in zip(w_names, mixed_ids)})

    else:  # pragma: no cover
        raise ValueError(f"unknown model kind {spec.kind!r}")

    summary = summarize(chains)
    rhats = [p.rhat for p in summary.parameters.values() if p.rhat is not None]
    converged = all(r < 1.01 for r in rhats)
    return FitResult(
        model=spec,
        summary=summary,
        chains=chains,
        roles=roles,
        study_sizes=sizes,
        converged=converged,
    )
