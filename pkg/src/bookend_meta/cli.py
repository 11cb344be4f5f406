"""Command-line surface: fit, diagnose, simulate, sweep, attenuation.

Every command echoes its full configuration (seed included) into a
structured JSON report plus a plain-text summary; fit and diagnose also
render a forest plot as a vector graphic next to the delimited outputs.

Exit codes: 0 success, 1 validation/data error, 2 usage error (argparse),
3 completed with a convergence warning (some split R-hat >= 1.05; artifacts
are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .core import (
    DataError,
    Dataset,
    ScenarioParams,
    exact_mixture_or,
    inverse_variance_pool,
    naive_average_log_or,
    study_estimates,
)
from .dataio import emit, ingest
from .mcmc import SamplerConfig
from .models import FitResult, ModelKind, ModelSpec, fit
from .plots import MODEL_COLORS, STUDY_COLOR, ForestRow, forest_plot
from .simulation import (
    POP1,
    POP2,
    SimDesign,
    StudyPlan,
    arm_probabilities,
    bias_sweep,
    mixture,
    simulate,
)
from .workflow import identify_bookends, sensitivity_compare_detailed

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONVERGENCE_WARNING = 3
HARD_RHAT = 1.05


@dataclass
class RunConfig:
    """One CLI invocation, fully determined (seed included)."""

    command: str
    input: str | None = None
    out: str | None = None
    model: str | None = None
    bookend_low: str | None = None
    bookend_high: str | None = None
    chains: int = 3
    burn_in: int = 2000
    samples: int = 10000
    thin: int = 2
    seed: int = 1
    spread_threshold: float = 1.0
    mu1: float = 0.0
    mu2: float = -2.0
    d: float = -0.5
    w: float = 0.5
    arm_size: int = 1000
    studies: list[str] = field(default_factory=list)
    gaps: list[float] = field(default_factory=lambda: [0.0, 2.0, 4.0])
    ws: list[float] = field(default_factory=lambda: [0.5])
    ds: list[float] = field(default_factory=lambda: [-0.5])
    replications: int = 200
    template: list[str] = field(default_factory=lambda: ["pop1", "pop2", "mix"])
    estimator: str = "map"

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            n_chains=self.chains,
            burn_in=self.burn_in,
            retained=self.samples,
            thin=self.thin,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def _fmt(x: float | None) -> str:
    if x is None:
        return "n/a"
    return f"{x:.6g}"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _base_report(cfg: RunConfig) -> dict:
    return {
        "tool": "bookend-meta",
        "version": __version__,
        "command": cfg.command,
        "created_at": _now(),
        "seed": cfg.seed,
        "config": cfg.to_dict(),
    }


def _parameter_table(summary_dict: dict[str, dict]) -> list[str]:
    head = f"{'parameter':<16}{'mean':>12}{'sd':>12}{'2.5%':>12}{'50%':>12}{'97.5%':>12}{'rhat':>10}{'ess':>10}"
    lines = [head, "-" * len(head)]
    for name, row in summary_dict.items():
        lines.append(
            f"{name:<16}{_fmt(row['mean']):>12}{_fmt(row['sd']):>12}{_fmt(row['q2.5%']):>12}"
            f"{_fmt(row['median']):>12}{_fmt(row['q97.5%']):>12}{_fmt(row['rhat']):>10}{_fmt(row['ess']):>10}"
        )
    return lines


def _observed_section(data: Dataset) -> tuple[list[dict], list[str]]:
    rows, lines = [], ["observed study estimates (Woolf):"]
    for sid, est in study_estimates(data).items():
        if est is None:
            rows.append({"study": sid, "log_or": None, "se": None, "ci95": None, "degenerate": True})
            lines.append(f"  study {sid}: degenerate (excluded from naive pooling)")
        else:
            rows.append(
                {"study": sid, "log_or": est.log_or, "se": est.se, "ci95": list(est.ci95), "degenerate": False}
            )
            lines.append(
                f"  study {sid}: logOR {_fmt(est.log_or)}  SE {_fmt(est.se)}"
                f"  95% CI ({_fmt(est.ci95[0])}, {_fmt(est.ci95[1])})"
            )
    usable = [e for e in study_estimates(data).values() if e is not None]
    if len(usable) >= 1:
        naive = naive_average_log_or([e.log_or for e in usable])
        pooled = inverse_variance_pool(usable)
        rows.append({"study": "(naive average)", "log_or": naive, "se": None, "ci95": None, "degenerate": False})
        rows.append(
            {"study": "(inverse-variance pool)", "log_or": pooled.log_or, "se": pooled.se,
             "ci95": list(pooled.ci95), "degenerate": False}
        )
        lines.append(f"  naive average of study logORs: {_fmt(naive)}")
        lines.append(
            f"  inverse-variance pool: logOR {_fmt(pooled.log_or)}  SE {_fmt(pooled.se)}"
            f"  95% CI ({_fmt(pooled.ci95[0])}, {_fmt(pooled.ci95[1])})"
        )
    return rows, lines


def _fit_report_entry(result: FitResult) -> dict:
    return {
        "model": result.model.to_dict(),
        "converged": result.converged,
        "max_rhat": result.summary.max_rhat,
        "parameters": result.summary.to_dict(),
        "roles": {n: {"role": r.role, "study_id": r.study_id} for n, r in result.roles.items()},
        "accept_rates": {n: float(r) for n, r in zip(result.chains.names, result.chains.accept_rates)},
    }


def _study_forest_rows(data: Dataset) -> list[ForestRow]:
    rows = []
    for sid, est in study_estimates(data).items():
        if est is None:
            continue
        lo, hi = est.ci95
        rows.append(ForestRow(f"study {sid}", est.log_or, lo, hi, STUDY_COLOR))
    return rows


def _model_forest_row(result: FitResult, label: str) -> ForestRow:
    d = result.summary["d"]
    color = MODEL_COLORS.get(result.model.kind.value, "#000000")
    return ForestRow(label, d.mean, d.q2_5, d.q97_5, color)


def _write_outputs(out_dir: Path, report: dict, text_lines: list[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    (out_dir / "summary.txt").write_text("\n".join(text_lines) + "\n")


def _convergence_exit(report: dict, text_lines: list[str], fits: list[FitResult]) -> int:
    worst = [f.summary.max_rhat for f in fits if f.summary.max_rhat is not None]
    if worst and max(worst) >= HARD_RHAT:
        msg = f"convergence warning: max split R-hat {max(worst):.3f} >= {HARD_RHAT}"
        report["warnings"] = report.get("warnings", []) + [msg]
        text_lines.append(msg)
        return EXIT_CONVERGENCE_WARNING
    return EXIT_OK


def _cmd_fit(cfg: RunConfig) -> int:
    data = ingest(cfg.input)
    sampler_cfg = cfg.sampler_config()
    kind = ModelKind(cfg.model)
    selection = None
    if kind is ModelKind.BOOKEND:
        low, high = cfg.bookend_low, cfg.bookend_high
        if low is None or high is None:
            fe = fit(data, ModelSpec(ModelKind.STANDARD_FE), sampler_cfg)
            low, high = identify_bookends(fe)
            selection = {"mode": "auto", "low": low, "high": high}
        else:
            selection = {"mode": "manual", "low": low, "high": high}
        spec = ModelSpec(kind, bookend_low=low, bookend_high=high)
    else:
        spec = ModelSpec(kind)

    result = fit(data, spec, sampler_cfg)

    report = _base_report(cfg)
    obs_rows, obs_lines = _observed_section(data)
    report["dataset"] = {"path": cfg.input, "n_studies": data.n_studies, "studies": list(data.study_ids)}
    report["observed"] = obs_rows
    if selection:
        report["bookend_selection"] = selection
    report["fits"] = {spec.kind.value: _fit_report_entry(result)}

    text = [f"bookend-meta fit  model={spec.kind.value}  seed={cfg.seed}"]
    text += obs_lines
    if selection:
        text.append(f"bookends: low={selection['low']} high={selection['high']} ({selection['mode']})")
    text.append(f"model {spec.kind.value} ({'converged' if result.converged else 'NOT converged'}):")
    text += _parameter_table(result.summary.to_dict())

    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    plot_path = forest_plot(
        out_dir / "forest.svg",
        _study_forest_rows(data),
        [_model_forest_row(result, f"{spec.kind.value} (d)")],
        title="Observed study log odds ratios and pooled effect",
    )
    report["artifacts"] = {"forest_plot": plot_path.name, "report": "report.json", "text_summary": "summary.txt"}
    code = _convergence_exit(report, text, [result])
    _write_outputs(out_dir, report, text)
    print("\n".join(text))
    return code


def _cmd_diagnose(cfg: RunConfig) -> int:
    data = ingest(cfg.input)
    sampler_cfg = cfg.sampler_config()
    dx, fe_fit, be_fit = sensitivity_compare_detailed(data, sampler_cfg, spread_threshold=cfg.spread_threshold)

    report = _base_report(cfg)
    obs_rows, obs_lines = _observed_section(data)
    report["dataset"] = {"path": cfg.input, "n_studies": data.n_studies, "studies": list(data.study_ids)}
    report["observed"] = obs_rows
    report["diagnostics"] = dx.to_dict()
    report["fits"] = {
        "standard-fe": _fit_report_entry(fe_fit),
        "bookend": _fit_report_entry(be_fit),
    }

    text = [f"bookend-meta diagnose  seed={cfg.seed}"]
    text += obs_lines
    text.append(
        f"baseline spread: {_fmt(dx.spread)} log-odds "
        f"({'exceeds' if dx.flag_spread else 'within'} threshold {_fmt(dx.spread_threshold)})"
    )
    text.append(f"bookends: low={dx.bookend_low} high={dx.bookend_high}")
    text.append(
        f"d (standard-fe): {_fmt(dx.d_standard.mean)} "
        f"(95% CrI {_fmt(dx.d_standard.q2_5)}, {_fmt(dx.d_standard.q97_5)})"
    )
    text.append(
        f"d (bookend):     {_fmt(dx.d_bookend.mean)} "
        f"(95% CrI {_fmt(dx.d_bookend.q2_5)}, {_fmt(dx.d_bookend.q97_5)})"
    )
    text.append(
        f"discrepancy: {_fmt(dx.discrepancy)} "
        f"({'FLAGGED' if dx.flag_discrepancy else 'not flagged'}, threshold {_fmt(dx.discrepancy_threshold)})"
    )
    for sid, summ in dx.w_summaries.items():
        line = f"w[{sid}]: mean {_fmt(summ.mean)} (95% CrI {_fmt(summ.q2_5)}, {_fmt(summ.q97_5)})"
        if sid in dx.w_warnings:
            line += f"  WARNING: {dx.w_warnings[sid]}"
        text.append(line)
    text.append("fitted parameters (standard-fe):")
    text += _parameter_table(fe_fit.summary.to_dict())
    text.append("fitted parameters (bookend):")
    text += _parameter_table(be_fit.summary.to_dict())

    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    plot_path = forest_plot(
        out_dir / "forest.svg",
        _study_forest_rows(data),
        [
            _model_forest_row(fe_fit, "standard-fe (d)"),
            _model_forest_row(be_fit, "bookend (d)"),
        ],
        title="Standard vs bookend sensitivity comparison",
    )
    report["artifacts"] = {"forest_plot": plot_path.name, "report": "report.json", "text_summary": "summary.txt"}
    code = _convergence_exit(report, text, [fe_fit, be_fit])
    _write_outputs(out_dir, report, text)
    print("\n".join(text))
    return code


def _parse_study_plans(cfg: RunConfig) -> tuple[StudyPlan, ...]:
    if not cfg.studies:
        return (
            StudyPlan(POP1, cfg.arm_size),
            StudyPlan(POP2, cfg.arm_size),
            StudyPlan(mixture(cfg.w), cfg.arm_size),
        )
    plans = []
    for entry in cfg.studies:
        entry = entry.strip()
        if entry == "pop1":
            plans.append(StudyPlan(POP1, cfg.arm_size))
        elif entry == "pop2":
            plans.append(StudyPlan(POP2, cfg.arm_size))
        elif entry.startswith("mix:"):
            plans.append(StudyPlan(mixture(float(entry[4:])), cfg.arm_size))
        else:
            raise ValueError(f"unknown study kind {entry!r} (use pop1, pop2 or mix:<w>)")
    return tuple(plans)


def _cmd_simulate(cfg: RunConfig) -> int:
    scenario = ScenarioParams(mu1=cfg.mu1, mu2=cfg.mu2, d=cfg.d, w=cfg.w, arm_size=cfg.arm_size)
    design = SimDesign(scenario=scenario, studies=_parse_study_plans(cfg), seed=cfg.seed)
    data = simulate(design)
    probs = arm_probabilities(design)

    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit(data, out_dir / "dataset.csv")

    report = _base_report(cfg)
    report["scenario"] = {
        "mu1": scenario.mu1, "mu2": scenario.mu2, "d": scenario.d,
        "w": scenario.w, "arm_size": scenario.arm_size,
    }
    report["design"] = [
        {"study": str(i + 1), "population": p.population.kind,
         "w": None if p.population.kind != "mixture" else p.population.w,
         "arm_size": p.arm_size,
         "p_control": probs[i][0], "p_active": probs[i][1]}
        for i, p in enumerate(design.studies)
    ]
    report["dataset"] = {
        "rows": [
            {"study": a.study_id, "treatment": a.treatment.value, "events": a.events, "n": a.size}
            for a in data.arms
        ]
    }
    report["artifacts"] = {"dataset": "dataset.csv", "report": "report.json", "text_summary": "summary.txt"}

    text = [f"bookend-meta simulate  seed={cfg.seed}"]
    text.append(
        f"scenario: mu1={_fmt(scenario.mu1)} mu2={_fmt(scenario.mu2)} d={_fmt(scenario.d)} "
        f"w={_fmt(scenario.w)} arm_size={scenario.arm_size}"
    )
    for row in report["design"]:
        text.append(
            f"  study {row['study']}: {row['population']}"
            + (f"(w={_fmt(row['w'])})" if row["w"] is not None else "")
            + f"  p_control={_fmt(row['p_control'])} p_active={_fmt(row['p_active'])}"
        )
    text.append(f"wrote {data.n_studies} studies to dataset.csv")
    _write_outputs(out_dir, report, text)
    print("\n".join(text))
    return EXIT_OK


def _cmd_sweep(cfg: RunConfig) -> int:
    cells = bias_sweep(
        gaps=cfg.gaps,
        ws=cfg.ws,
        ds=cfg.ds,
        arm_size=cfg.arm_size,
        replications=cfg.replications,
        seed=cfg.seed,
        template=cfg.template,
        estimator=cfg.estimator,
        cfg=cfg.sampler_config() if cfg.estimator == "mcmc" else None,
    )
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    fieldnames = list(cells[0].to_dict().keys())
    with (out_dir / "sweep.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for cell in cells:
            writer.writerow(cell.to_dict())

    report = _base_report(cfg)
    report["cells"] = [c.to_dict() for c in cells]
    report["artifacts"] = {"table": "sweep.csv", "report": "report.json", "text_summary": "summary.txt"}

    text = [f"bookend-meta sweep  seed={cfg.seed}  estimator={cfg.estimator}  reps/cell={cfg.replications}"]
    head = f"{'gap':>6}{'w':>6}{'d':>8}{'FE d-hat':>12}{'bookend d-hat':>15}{'exact logOR_mix':>17}{'factor':>10}"
    text += [head, "-" * len(head)]
    for c in cells:
        text.append(
            f"{c.gap:>6.2f}{c.w:>6.2f}{c.d:>8.3f}{c.fe_d_mean:>12.4f}{c.bookend_d_mean:>15.4f}"
            f"{c.exact_log_or_mix:>17.5f}{(f'{c.attenuation_factor:.4f}' if c.attenuation_factor is not None else 'n/a'):>10}"
        )
    _write_outputs(out_dir, report, text)
    print("\n".join(text))
    return EXIT_OK


def _cmd_attenuation(cfg: RunConfig) -> int:
    params = ScenarioParams(mu1=cfg.mu1, mu2=cfg.mu2, d=cfg.d, w=cfg.w)
    rep = exact_mixture_or(params)
    text = [
        f"bookend-meta attenuation  mu1={_fmt(cfg.mu1)} mu2={_fmt(cfg.mu2)} d={_fmt(cfg.d)} w={_fmt(cfg.w)}",
        f"population probabilities: p11={_fmt(rep.p11)} p12={_fmt(rep.p12)} p21={_fmt(rep.p21)} p22={_fmt(rep.p22)}",
        f"mixed-population probabilities: control={_fmt(rep.p_mix_control)} active={_fmt(rep.p_mix_active)}",
        f"marginal OR of the mixture: {_fmt(rep.or_mix)} (log {_fmt(rep.log_or_mix)})",
        f"attenuation factor: {_fmt(rep.attenuation_factor) if rep.attenuation_factor is not None else 'undefined (d = 0)'}",
    ]
    if cfg.out:
        report = _base_report(cfg)
        report["attenuation"] = {
            "p11": rep.p11, "p12": rep.p12, "p21": rep.p21, "p22": rep.p22,
            "p_mix_control": rep.p_mix_control, "p_mix_active": rep.p_mix_active,
            "or_mix": rep.or_mix, "log_or_mix": rep.log_or_mix,
            "attenuation_factor": rep.attenuation_factor,
        }
        report["artifacts"] = {"report": "report.json", "text_summary": "summary.txt"}
        _write_outputs(Path(cfg.out), report, text)
    print("\n".join(text))
    return EXIT_OK


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bookend-meta",
        description="Bayesian two-arm meta-analysis of odds ratios with "
        "non-collapsibility diagnostics and the bookend mixture model.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def sampler_args(sp):
        sp.add_argument("--chains", type=int, default=3, help="number of chains")
        sp.add_argument("--burn-in", type=int, default=2000, dest="burn_in")
        sp.add_argument("--samples", type=int, default=10000,
                        help="total retained post-burn-in draws across chains (after thinning)")
        sp.add_argument("--thin", type=int, default=2)
        sp.add_argument("--seed", type=int, default=1)

    p_fit = sub.add_parser("fit", help="fit one model to a dataset")
    p_fit.add_argument("input", help="delimited file: study,treatment,events,n")
    p_fit.add_argument("--model", required=True, choices=[k.value for k in ModelKind])
    p_fit.add_argument("--bookend-low", help="override automatic bookend selection")
    p_fit.add_argument("--bookend-high", help="override automatic bookend selection")
    sampler_args(p_fit)
    p_fit.add_argument("--out", required=True, help="output directory")

    p_dx = sub.add_parser("diagnose", help="standard-vs-bookend sensitivity analysis")
    p_dx.add_argument("input")
    p_dx.add_argument("--spread-threshold", type=float, default=1.0, dest="spread_threshold")
    sampler_args(p_dx)
    p_dx.add_argument("--out", required=True)

    p_sim = sub.add_parser("simulate", help="generate a dataset from the two-population scenario")
    p_sim.add_argument("--mu1", type=float, default=0.0)
    p_sim.add_argument("--mu2", type=float, default=-2.0)
    p_sim.add_argument("--d", type=float, default=-0.5)
    p_sim.add_argument("--w", type=float, default=0.5)
    p_sim.add_argument("--arm-size", type=int, default=1000, dest="arm_size")
    p_sim.add_argument("--study", action="append", default=None, dest="studies",
                       help="pop1, pop2 or mix:<w>; repeatable (default: pop1 pop2 mix:<w>)")
    p_sim.add_argument("--seed", type=int, default=1)
    p_sim.add_argument("--out", required=True)

    p_sweep = sub.add_parser("sweep", help="Monte Carlo attenuation sweep")
    p_sweep.add_argument("--gaps", type=_float_list, default=[0.0, 2.0, 4.0])
    p_sweep.add_argument("--ws", type=_float_list, default=[0.5])
    p_sweep.add_argument("--ds", type=_float_list, default=[-0.5])
    p_sweep.add_argument("--arm-size", type=int, default=1000, dest="arm_size")
    p_sweep.add_argument("--replications", type=int, default=200)
    p_sweep.add_argument("--template", type=lambda s: [t.strip() for t in s.split(",")],
                         default=["pop1", "pop2", "mix"],
                         help="comma list of pop1/pop2/mix study kinds per dataset")
    p_sweep.add_argument("--estimator", choices=["map", "mcmc"], default="map")
    sampler_args(p_sweep)
    p_sweep.add_argument("--out", required=True)

    p_att = sub.add_parser("attenuation", help="exact mixture odds-ratio arithmetic")
    p_att.add_argument("--mu1", type=float, required=True)
    p_att.add_argument("--mu2", type=float, required=True)
    p_att.add_argument("--d", type=float, required=True)
    p_att.add_argument("--w", type=float, required=True)
    p_att.add_argument("--seed", type=int, default=1)
    p_att.add_argument("--out", default=None)

    return parser


_COMMANDS = {
    "fit": _cmd_fit,
    "diagnose": _cmd_diagnose,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "attenuation": _cmd_attenuation,
}


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the process exit code."""
    try:
        return _COMMANDS[cfg.command](cfg)
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def config_from_args(args: argparse.Namespace) -> RunConfig:
    fields = {f for f in RunConfig.__dataclass_fields__}
    kwargs = {k: v for k, v in vars(args).items() if k in fields and v is not None}
    return RunConfig(**kwargs)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return run(config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
