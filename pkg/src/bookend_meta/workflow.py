"""Practitioner diagnostics: baseline-risk spread, bookend selection, and the
standard-vs-bookend sensitivity comparison.

The sequence mirrors how an analyst would probe for attenuation: fit the
standard fixed-effect model, look at how far the estimated baseline log-odds
spread, pick the extreme studies as bookends, refit with the mixture model,
and compare the two effect estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import Dataset, Treatment
from .mcmc import ParameterSummary, SamplerConfig
from .models import FitResult, ModelKind, ModelSpec, _empirical_logit, fit

DEFAULT_SPREAD_THRESHOLD = 1.0  # log-odds units
DEFAULT_DISCREPANCY_FACTOR = 0.5  # multiples of the FE posterior sd of d
W_BOUNDARY_LOW = 0.05
W_BOUNDARY_HIGH = 0.95


@dataclass(frozen=True)
class DiagnosticsReport:
    """Everything the sensitivity comparison produced, JSON-serializable."""

    mu_hats: dict[str, float]
    empirical_logits: dict[str, float]
    spread: float
    spread_threshold: float
    flag_spread: bool
    bookend_low: str
    bookend_high: str
    d_standard: ParameterSummary
    d_bookend: ParameterSummary
    discrepancy: float
    discrepancy_threshold: float
    flag_discrepancy: bool
    w_summaries: dict[str, ParameterSummary]
    w_warnings: dict[str, str]
    seed: int

    def to_dict(self) -> dict:
        return {
            "mu_hats": dict(self.mu_hats),
            "empirical_logits": dict(self.empirical_logits),
            "spread": self.spread,
            "spread_threshold": self.spread_threshold,
            "flag_spread": self.flag_spread,
            "bookend_low": self.bookend_low,
            "bookend_high": self.bookend_high,
            "d_standard": self.d_standard.to_dict(),
            "d_bookend": self.d_bookend.to_dict(),
            "discrepancy": self.discrepancy,
            "discrepancy_threshold": self.discrepancy_threshold,
            "flag_discrepancy": self.flag_discrepancy,
            "w_summaries": {k: v.to_dict() for k, v in self.w_summaries.items()},
            "w_warnings": dict(self.w_warnings),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosticsReport":
        return cls(
            mu_hats=dict(d["mu_hats"]),
            empirical_logits=dict(d["empirical_logits"]),
            spread=d["spread"],
            spread_threshold=d["spread_threshold"],
            flag_spread=d["flag_spread"],
            bookend_low=d["bookend_low"],
            bookend_high=d["bookend_high"],
            d_standard=ParameterSummary.from_dict(d["d_standard"]),
            d_bookend=ParameterSummary.from_dict(d["d_bookend"]),
            discrepancy=d["discrepancy"],
            discrepancy_threshold=d["discrepancy_threshold"],
            flag_discrepancy=d["flag_discrepancy"],
            w_summaries={k: ParameterSummary.from_dict(v) for k, v in d["w_summaries"].items()},
            w_warnings=dict(d["w_warnings"]),
            seed=d["seed"],
        )


def _baseline_means(fe_fit: FitResult) -> dict[str, float]:
    if fe_fit.model.kind is not ModelKind.STANDARD_FE:
        raise ValueError("expected a standard fixed-effect fit")
    out: dict[str, float] = {}
    for name, role in fe_fit.roles.items():
        if role.role == "baseline":
            out[role.study_id] = fe_fit.summary[name].mean
    return out


def assess_baseline_spread(
    fe_fit: FitResult, threshold: float = DEFAULT_SPREAD_THRESHOLD
) -> tuple[float, bool]:
    """Range of the per-study baseline posterior means, and whether it exceeds
    the heterogeneity threshold (default 1.0 log-odds; a wide spread signals
    potential attenuation from mixed populations)."""
    mu_hats = _baseline_means(fe_fit)
    if len(mu_hats) < 2:
        raise ValueError("spread needs at least 2 studies")
    spread = max(mu_hats.values()) - min(mu_hats.values())
    return spread, spread > threshold


def identify_bookends(fe_fit: FitResult) -> tuple[str, str]:
    """Studies with the smallest and largest estimated baseline log-odds.

    Exact ties are broken by larger total study size, then by lexicographic
    study id; when every study ties, the two largest studies become the
    bookends. Requires at least 3 studies (otherwise there is nothing left
    to model as a mixture).
    """
    mu_hats = _baseline_means(fe_fit)
    if len(mu_hats) < 3:
        raise ValueError("bookend identification requires at least 3 studies")
    sizes = fe_fit.study_sizes
    low = sorted(mu_hats, key=lambda s: (mu_hats[s], -sizes[s], s))[0]
    rest = (s for s in mu_hats if s != low)
    high = sorted(rest, key=lambda s: (-mu_hats[s], -sizes[s], s))[0]
    return low, high


def sensitivity_compare(
    data: Dataset,
    cfg: SamplerConfig,
    spread_threshold: float = DEFAULT_SPREAD_THRESHOLD,
    discrepancy_factor: float = DEFAULT_DISCREPANCY_FACTOR,
    prior_sd_logodds: float = 10.0,
) -> DiagnosticsReport:
    """Run the full standard-vs-bookend sensitivity analysis.

    Fits the standard fixed-effect model, assesses baseline spread, selects
    bookends from the FE posterior means, fits the bookend model, and flags
    a discrepancy when |d_FE - d_bookend| exceeds ``discrepancy_factor``
    times the FE posterior sd of d. Mixing weights with posterior means
    outside [0.05, 0.95] get boundary warnings (the bookend assumptions are
    suspect for those studies).
    """
    report, _, _ = sensitivity_compare_detailed(
        data, cfg, spread_threshold, discrepancy_factor, prior_sd_logodds
    )
    return report


def sensitivity_compare_detailed(
    data: Dataset,
    cfg: SamplerConfig,
    spread_threshold: float = DEFAULT_SPREAD_THRESHOLD,
    discrepancy_factor: float = DEFAULT_DISCREPANCY_FACTOR,
    prior_sd_logodds: float = 10.0,
) -> tuple[DiagnosticsReport, FitResult, FitResult]:
    """Same as :func:`sensitivity_compare`, returning both fits alongside the
    report (for report/plot rendering)."""
    if data.n_studies < 3:
        raise ValueError("sensitivity comparison requires at least 3 studies")
    fe_fit = fit(data, ModelSpec(ModelKind.STANDARD_FE, prior_sd_logodds=prior_sd_logodds), cfg)
    mu_hats = _baseline_means(fe_fit)
    spread, flag_spread = assess_baseline_spread(fe_fit, spread_threshold)
    low, high = identify_bookends(fe_fit)
    be_fit = fit(
        data,
        ModelSpec(
            ModelKind.BOOKEND,
            bookend_low=low,
            bookend_high=high,
            prior_sd_logodds=prior_sd_logodds,
        ),
        cfg,
    )
    d_fe = fe_fit.summary["d"]
    d_be = be_fit.summary["d"]
    discrepancy = abs(d_fe.mean - d_be.mean)
    disc_threshold = discrepancy_factor * d_fe.sd

    w_summaries: dict[str, ParameterSummary] = {}
    w_warnings: dict[str, str] = {}
    for name, role in be_fit.roles.items():
        if role.role != "mixing":
            continue
        summ = be_fit.summary[name]
        w_summaries[role.study_id] = summ
        if summ.mean < W_BOUNDARY_LOW or summ.mean > W_BOUNDARY_HIGH:
            w_warnings[role.study_id] = (
                f"mixing weight posterior mean {summ.mean:.3f} sits at the boundary; "
                "this study's baseline may lie outside the bookend range"
            )

    empirical = {
        sid: _empirical_logit(
            data.arm(sid, Treatment.CONTROL).events, data.arm(sid, Treatment.CONTROL).size
        )
        for sid in data.study_ids
    }
    report = DiagnosticsReport(
        mu_hats=mu_hats,
        empirical_logits=empirical,
        spread=spread,
        spread_threshold=spread_threshold,
        flag_spread=flag_spread,
        bookend_low=low,
        bookend_high=high,
        d_standard=d_fe,
        d_bookend=d_be,
        discrepancy=discrepancy,
        discrepancy_threshold=disc_threshold,
        flag_discrepancy=discrepancy > disc_threshold,
        w_summaries=w_summaries,
        w_warnings=w_warnings,
        seed=cfg.seed,
    )
    return report, fe_fit, be_fit
