"""Acceptance suite: every release criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` for one printed PASS/FAIL
line per criterion. These tests use default sampler settings (3 chains,
2000 burn-in, 10000 retained draws, thinning 2) and fixed seeds.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import kstest

import bookend_meta as bm
from bookend_meta.mcmc import ParameterSpace, SamplerConfig, sample, summarize

from conftest import LUNG_CSV, make_dataset
from oracles import grid_posterior_means

SEED = 20260810


def check(criterion, ok, detail):
    print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="module")
def fe_fit_timed(lung_data):
    t0 = time.perf_counter()
    result = bm.fit(lung_data, bm.ModelSpec(bm.ModelKind.STANDARD_FE), SamplerConfig(seed=SEED))
    return result, time.perf_counter() - t0


@pytest.fixture(scope="module")
def bookend_fit_timed(lung_data):
    spec = bm.ModelSpec(bm.ModelKind.BOOKEND, bookend_low="2", bookend_high="1")
    t0 = time.perf_counter()
    result = bm.fit(lung_data, spec, SamplerConfig(seed=SEED))
    return result, time.perf_counter() - t0


def test_criterion_1_exact_attenuation():
    params = bm.ScenarioParams(0.0, -2.0, -0.5, 0.5)
    rep = bm.exact_mixture_or(params)
    runtime = min(
        (lambda t0: (bm.exact_mixture_or(params), time.perf_counter() - t0))(time.perf_counter())[1]
        for _ in range(200)
    )
    ok = (
        round(rep.log_or_mix, 3) == -0.425
        and round(rep.attenuation_factor, 3) == 0.850
        and runtime < 1e-3
    )
    check(
        1, ok,
        f"log OR_mix {rep.log_or_mix:.5f} (need -0.425), factor "
        f"{rep.attenuation_factor:.5f} (need 0.850), runtime {runtime * 1e6:.1f} us (< 1 ms)",
    )


def test_criterion_2_naive_average():
    mean = bm.naive_average_log_or([-0.500, -0.500, -0.425])
    check(2, round(mean, 3) == -0.475, f"naive average {mean:.6f} rounds to {round(mean, 3)} (need -0.475)")


def test_criterion_3_observed_table_summaries(lung_data):
    expected = {"1": (-0.57, 0.09), "2": (-0.42, 0.15), "3": (-0.34, 0.10)}
    got = {
        sid: (round(est.log_or, 2), round(est.se, 2))
        for sid, est in bm.study_estimates(lung_data).items()
    }
    check(3, got == expected, f"observed (logOR, SE) at 2 dp: {got}")


def test_criterion_4_standard_fe_fit(fe_fit_timed):
    result, elapsed = fe_fit_timed
    d = result.summary["d"]
    rhats = [p.rhat for p in result.summary.parameters.values() if p.rhat is not None]
    ok = (
        abs(d.mean - (-0.458)) <= 0.02
        and abs(d.q2_5 - (-0.58)) <= 0.03
        and abs(d.q97_5 - (-0.34)) <= 0.03
        and all(r < 1.01 for r in rhats)
        and elapsed < 60.0
    )
    check(
        4, ok,
        f"FE d {d.mean:.4f} (need -0.458 +/- 0.02), CrI ({d.q2_5:.3f}, {d.q97_5:.3f}) "
        f"(need (-0.58, -0.34) +/- 0.03), max R-hat {max(rhats):.4f} (< 1.01), "
        f"runtime {elapsed:.1f} s (< 60 s)",
    )


def test_criterion_5_bookend_fit(bookend_fit_timed):
    result, elapsed = bookend_fit_timed
    d = result.summary["d"]
    ok = (
        abs(d.mean - (-0.492)) <= 0.02
        and abs(d.q2_5 - (-0.62)) <= 0.03
        and abs(d.q97_5 - (-0.37)) <= 0.03
        and elapsed < 60.0
    )
    check(
        5, ok,
        f"bookend d {d.mean:.4f} (need -0.492 +/- 0.02), CrI ({d.q2_5:.3f}, {d.q97_5:.3f}) "
        f"(need (-0.62, -0.37) +/- 0.03), runtime {elapsed:.1f} s (< 60 s)",
    )


def test_criterion_6_engines_agree(lung_data, fe_fit_timed):
    result, _ = fe_fit_timed
    pooled = bm.inverse_variance_pool(
        [e for e in bm.study_estimates(lung_data).values() if e is not None]
    )
    diff = abs(pooled.log_or - result.summary["d"].mean)
    check(
        6, diff <= 0.01,
        f"inverse-variance pool {pooled.log_or:.4f} vs Bayesian FE mean "
        f"{result.summary['d'].mean:.4f}, |diff| {diff:.4f} (<= 0.01)",
    )


def test_criterion_7_parameter_recovery():
    t0 = time.perf_counter()
    scenario = bm.ScenarioParams(0.0, -2.0, -0.5, 0.5, arm_size=100000)
    data = bm.simulate(bm.three_study_design(scenario, seed=SEED))
    be = bm.fit(
        data, bm.ModelSpec(bm.ModelKind.BOOKEND, bookend_low="2", bookend_high="1"),
        SamplerConfig(seed=SEED),
    )
    fe = bm.fit(data, bm.ModelSpec(bm.ModelKind.STANDARD_FE), SamplerConfig(seed=SEED))
    elapsed = time.perf_counter() - t0
    d_be = be.summary["d"].mean
    w_be = be.summary["w[3]"].mean
    d_fe = fe.summary["d"].mean
    ok = (
        abs(d_be + 0.5) < 0.03
        and abs(w_be - 0.5) < 0.05
        and -0.5 < d_fe < -0.43
        and elapsed < 200.0
    )
    check(
        7, ok,
        f"bookend d {d_be:.4f} (|d+0.5| {abs(d_be + 0.5):.4f} < 0.03), w {w_be:.4f} "
        f"(|w-0.5| {abs(w_be - 0.5):.4f} < 0.05), FE d {d_fe:.4f} (in (-0.5, -0.43)), "
        f"runtime {elapsed:.1f} s (< 200 s)",
    )


def test_criterion_8_sampler_grid_oracle():
    data = make_dataset([("1", 30, 100, 45, 100)])
    log_post = lambda th: bm.log_post_standard_fe(data, th)
    grid_mu, grid_d = grid_posterior_means(log_post, (-2.2, 0.8), (-0.9, 2.1))
    chains = sample(
        log_post, ParameterSpace(("mu", "d"), ("real", "real")), [-0.85, 0.0],
        SamplerConfig(seed=SEED),
    )
    s = summarize(chains)
    diff_mu = abs(s["mu"].mean - grid_mu)
    diff_d = abs(s["d"].mean - grid_d)
    check(
        8, diff_mu <= 0.02 and diff_d <= 0.02,
        f"grid ({grid_mu:.4f}, {grid_d:.4f}) vs sampler "
        f"({s['mu'].mean:.4f}, {s['d'].mean:.4f}); diffs ({diff_mu:.4f}, {diff_d:.4f}) <= 0.02",
    )


def test_criterion_9a_homogeneous_or_identity():
    worst = 0.0
    for mu in np.linspace(-5, 5, 21):
        for d in np.linspace(-3, 3, 13):
            p1 = bm.inverse_logit(mu)
            p2 = bm.inverse_logit(mu + d)
            or_hom = (p2 / (1 - p2)) / (p1 / (1 - p1))
            worst = max(worst, abs(or_hom / math.exp(d) - 1.0))
    check(9, worst < 1e-12, f"homogeneous-OR identity: worst relative error {worst:.2e} (< 1e-12)")


def test_criterion_9b_attenuation_bounds_and_monotonicity():
    ok = True
    for w in (0.05, 0.3, 0.5, 0.7, 0.95):
        for gap in (0.2, 1.0, 2.0, 4.0, 6.0):
            for d in (-3.0, -0.5, 0.3, 3.0):
                f = bm.exact_mixture_or(bm.ScenarioParams(0.0, -gap, d, w)).attenuation_factor
                ok = ok and 0.0 < f < 1.0
    factors = [
        bm.exact_mixture_or(bm.ScenarioParams(0.0, -gap, -0.5, 0.5)).attenuation_factor
        for gap in (0.5, 1.0, 2.0, 3.0, 4.0)
    ]
    monotone = all(a >= b for a, b in zip(factors, factors[1:]))
    check(
        9, ok and monotone,
        f"attenuation in (0,1) on grid: {ok}; non-increasing in gap: {monotone} "
        f"(factors {[round(f, 4) for f in factors]})",
    )


def test_criterion_9c_prior_recovery():
    rows = [(sid, 0, 0, 0, 0) for sid in ("1", "2", "3")]
    data = make_dataset(rows)
    result = bm.fit(
        data, bm.ModelSpec(bm.ModelKind.BOOKEND, bookend_low="2", bookend_high="1"),
        SamplerConfig(seed=11, retained=30000, thin=2),
    )
    d = result.summary["d"]
    w_draws = result.chains.parameter("w[3]").ravel()
    ks = kstest(w_draws, "uniform").statistic
    ok = abs(d.mean) <= 0.5 and abs(d.sd - 10.0) <= 0.7 and ks < 0.02
    check(
        9, ok,
        f"prior recovery at 30000 draws: d mean {d.mean:.3f} (|.| <= 0.5), "
        f"sd {d.sd:.3f} (10 +/- 0.7), w KS {ks:.4f} (< 0.02)",
    )


def test_criterion_9d_seed_determinism(lung_data):
    cfg = SamplerConfig(n_chains=2, burn_in=300, retained=600, thin=1, seed=4)
    fit_a = bm.fit(lung_data, bm.ModelSpec(bm.ModelKind.STANDARD_FE), cfg)
    fit_b = bm.fit(lung_data, bm.ModelSpec(bm.ModelKind.STANDARD_FE), cfg)
    chains_equal = np.array_equal(fit_a.chains.draws, fit_b.chains.draws)
    design = bm.three_study_design(bm.ScenarioParams(0.0, -2.0, -0.5, 0.5, arm_size=500), seed=3)
    sims_equal = bm.simulate(design) == bm.simulate(design)
    check(
        9, chains_equal and sims_equal,
        f"identical seeds: chain draws bit-identical {chains_equal}, datasets identical {sims_equal}",
    )


def test_criterion_9e_ingest_emit_roundtrip(tmp_path):
    path = tmp_path / "lung.csv"
    path.write_text(LUNG_CSV)
    data = bm.ingest(path)
    out = tmp_path / "echo.csv"
    bm.emit(data, out)
    ok = bm.ingest(out) == data
    check(9, ok, f"ingest(emit(dataset)) == dataset: {ok}")
