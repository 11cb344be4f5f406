"""Domain types and exact odds-ratio arithmetic for two-arm meta-analysis.

Everything here is pure double-precision arithmetic over immutable values:
link functions, the closed-form marginal odds ratio of a two-population
mixture (the source of attenuation when studies enroll mixed populations),
and the classical Woolf / inverse-variance machinery used as a naive
frequentist baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum


class Treatment(IntEnum):
    CONTROL = 1
    ACTIVE = 2


class DataError(ValueError):
    """Invalid study data (counts, pairing, or file contents)."""


class DegenerateStudyError(DataError):
    """Study carries no odds-ratio information even after continuity correction."""


@dataclass(frozen=True)
class ArmData:
    """Event count out of the number randomized to one arm of one study.

    ``size == 0`` is permitted and represents an arm with no observations
    (it contributes nothing to any likelihood).
    """

    study_id: str
    treatment: Treatment
    events: int
    size: int

    def __post_init__(self):
        if self.size < 0:
            raise DataError(f"study {self.study_id!r}: size must be >= 0, got {self.size}")
        if not 0 <= self.events <= self.size:
            raise DataError(
                f"study {self.study_id!r}: events must satisfy 0 <= events <= size, "
                f"got events={self.events}, size={self.size}"
            )


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of study arms for a pairwise (two-intervention) MA.

    Every study must appear with exactly one control arm and exactly one
    active arm. Minimum study counts are model preconditions, enforced where
    a model is fitted: two studies for the standard models, three for the
    bookend model.
    """

    arms: tuple[ArmData, ...]

    def __post_init__(self):
        if not self.arms:
            raise DataError("no studies")
        seen: dict[tuple[str, Treatment], ArmData] = {}
        for arm in self.arms:
            key = (arm.study_id, arm.treatment)
            if key in seen:
                raise DataError(
                    f"duplicate arm: study {arm.study_id!r} treatment {arm.treatment.value}"
                )
            seen[key] = arm
        for sid in self.study_ids:
            for t in (Treatment.CONTROL, Treatment.ACTIVE):
                if (sid, t) not in seen:
                    raise DataError(
                        f"study {sid!r} is missing its "
                        f"{'control' if t is Treatment.CONTROL else 'active'} arm"
                    )

    @property
    def study_ids(self) -> tuple[str, ...]:
        """Study labels in first-appearance order."""
        out: list[str] = []
        for arm in self.arms:
            if arm.study_id not in out:
                out.append(arm.study_id)
        return tuple(out)

    @property
    def n_studies(self) -> int:
        return len(self.study_ids)

    def arm(self, study_id: str, treatment: Treatment) -> ArmData:
        for a in self.arms:
            if a.study_id == study_id and a.treatment == treatment:
                return a
        raise KeyError((study_id, treatment))

    def study(self, study_id: str) -> tuple[ArmData, ArmData]:
        """(control, active) pair for one study."""
        return self.arm(study_id, Treatment.CONTROL), self.arm(study_id, Treatment.ACTIVE)

    def study_size(self, study_id: str) -> int:
        c, a = self.study(study_id)
        return c.size + a.size


@dataclass(frozen=True)
class ScenarioParams:
    """Generative truth for the two-population lung-disease style scenario.

    ``mu1``/``mu2`` are control-arm log-odds in the two homogeneous
    populations, ``d`` the common conditional log-odds ratio, ``w`` the
    population-1 fraction of a mixed study, ``arm_size`` the default number
    of individuals per arm when simulating.

    The regression-style aliases are derived: ``beta0 = mu1``,
    ``beta1 = mu2 - mu1``, ``beta2 = d``.
    """

    mu1: float
    mu2: float
    d: float
    w: float = 0.5
    arm_size: int = 1000

    def __post_init__(self):
        for name in ("mu1", "mu2", "d"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0.0 <= self.w <= 1.0:
            raise ValueError(f"w must lie in [0, 1], got {self.w}")
        if self.arm_size < 1:
            raise ValueError(f"arm_size must be >= 1, got {self.arm_size}")

    @property
    def beta0(self) -> float:
        return self.mu1

    @property
    def beta1(self) -> float:
        return self.mu2 - self.mu1

    @property
    def beta2(self) -> float:
        return self.d


@dataclass(frozen=True)
class AttenuationReport:
    """Exact probabilities and marginal OR of a two-population mixture.

    ``attenuation_factor`` is log(or_mix)/d and is None when d == 0
    (the 0/0 case; or_mix == 1 covers the null).
    """

    p11: float
    p12: float
    p21: float
    p22: float
    p_mix_control: float
    p_mix_active: float
    or_mix: float
    log_or_mix: float
    attenuation_factor: float | None


@dataclass(frozen=True)
class PooledEstimate:
    """Log odds ratio with its standard error; ci95 = log_or +/- 1.96*se."""

    log_or: float
    se: float

    def __post_init__(self):
        if not self.se > 0:
            raise ValueError(f"se must be > 0, got {self.se}")

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.log_or - 1.96 * self.se, self.log_or + 1.96 * self.se)


def inverse_logit(x: float) -> float:
    """Logistic function 1/(1+exp(-x)), evaluated on the overflow-safe branch."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"inverse_logit requires finite input, got {x}")
    if x < 0:
        e = math.exp(x)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(-x))


def logit(p: float) -> float:
    """Inverse of :func:`inverse_logit` on (0, 1)."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"logit requires p in (0, 1), got {p}")
    return math.log(p / (1.0 - p))


def exact_mixture_or(params: ScenarioParams) -> AttenuationReport:
    """Closed-form marginal odds ratio of the mixed population.

    Mixing happens at the probability scale: for arm k, the mixed event
    probability is w*p_1k + (1-w)*p_2k, with p_jk the population-j
    probabilities implied by (mu_j, d). For w strictly inside (0, 1) and a
    genuine baseline gap, |log(or_mix)| < |d|: the marginal OR of the
    mixture is attenuated toward the null.
    """
    p11 = inverse_logit(params.mu1)
    p12 = inverse_logit(params.mu1 + params.d)
    p21 = inverse_logit(params.mu2)
    p22 = inverse_logit(params.mu2 + params.d)
    w = params.w
    p_mix_c = w * p11 + (1.0 - w) * p21
    p_mix_a = w * p12 + (1.0 - w) * p22
    or_mix = (p_mix_a / (1.0 - p_mix_a)) / (p_mix_c / (1.0 - p_mix_c))
    log_or_mix = math.log(or_mix)
    factor = None if params.d == 0.0 else log_or_mix / params.d
    return AttenuationReport(
        p11=p11,
        p12=p12,
        p21=p21,
        p22=p22,
        p_mix_control=p_mix_c,
        p_mix_active=p_mix_a,
        or_mix=or_mix,
        log_or_mix=log_or_mix,
        attenuation_factor=factor,
    )


def naive_average_log_or(log_ors: list[float]) -> float:
    """Unweighted arithmetic mean of study log odds ratios."""
    if not log_ors:
        raise ValueError("naive_average_log_or requires a non-empty list")
    return math.fsum(log_ors) / len(log_ors)


def observed_log_or(control: ArmData, active: ArmData) -> PooledEstimate:
    """Woolf log odds ratio and standard error for one study.

    If any of the four cells {r, n-r} is zero in either arm, 0.5 is added to
    all four cells of the study (continuity correction applied for display
    and naive pooling only; likelihood-based models never correct).

    Raises
    ------
    DegenerateStudyError
        If the study carries no contrast information even after correction:
        an empty arm, both arms all-zero, or both arms all-events.
    """
    if control.study_id != active.study_id:
        raise DataError("arms belong to different studies")
    if control.treatment is not Treatment.CONTROL or active.treatment is not Treatment.ACTIVE:
        raise DataError("observed_log_or expects (control, active) in that order")
    r1, n1 = control.events, control.size
    r2, n2 = active.events, active.size
    if n1 == 0 or n2 == 0:
        raise DegenerateStudyError(f"study {control.study_id!r} has an empty arm")
    if (r1 == 0 and r2 == 0) or (r1 == n1 and r2 == n2):
        raise DegenerateStudyError(
            f"study {control.study_id!r} is all-zero or all-events in both arms"
        )
    cells = [float(r1), float(n1 - r1), float(r2), float(n2 - r2)]
    if any(c == 0.0 for c in cells):
        cells = [c + 0.5 for c in cells]
    a, b, c, d = cells  # control events, control non-events, active events, active non-events
    log_or = math.log((c / d) / (a / b))
    se = math.sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d)
    return PooledEstimate(log_or=log_or, se=se)


def study_estimates(data: Dataset) -> dict[str, PooledEstimate | None]:
    """Per-study Woolf estimates; degenerate studies map to None."""
    out: dict[str, PooledEstimate | None] = {}
    for sid in data.study_ids:
        control, active = data.study(sid)
        try:
            out[sid] = observed_log_or(control, active)
        except DegenerateStudyError:
            out[sid] = None
    return out


def inverse_variance_pool(estimates: list[PooledEstimate]) -> PooledEstimate:
    """Fixed-effect inverse-variance pooling of (logOR, SE) pairs."""
    if not estimates:
        raise ValueError("inverse_variance_pool requires a non-empty list")
    weights = [1.0 / (e.se * e.se) for e in estimates]
    total = math.fsum(weights)
    mean = math.fsum(w * e.log_or for w, e in zip(weights, estimates)) / total
    return PooledEstimate(log_or=mean, se=1.0 / math.sqrt(total))
