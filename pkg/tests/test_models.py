import math

import numpy as np
import pytest
from scipy.stats import beta as beta_dist
from scipy.stats import binom, halfnorm, norm

import bookend_meta as bm
from bookend_meta.mcmc import ParameterSpace, SamplerConfig, sample, summarize
from bookend_meta.models import _empirical_logit

from conftest import make_dataset
from oracles import grid_posterior_means


def reference_fe(data, theta, sd=10.0):
    """Slow scipy-based evaluation of the fixed-effect log-posterior."""
    j = data.n_studies
    mu, d = theta[:j], theta[j]
    lp = 0.0
    for i, sid in enumerate(data.study_ids):
        c, a = data.study(sid)
        lp += binom.logpmf(c.events, c.size, 1 / (1 + math.exp(-mu[i])))
        lp += binom.logpmf(a.events, a.size, 1 / (1 + math.exp(-(mu[i] + d))))
    return lp + norm.logpdf(theta, 0, sd).sum()


def reference_re(data, theta, sd=10.0, tau_scale=1.0):
    j = data.n_studies
    mu, delta, d, tau = theta[:j], theta[j : 2 * j], theta[2 * j], theta[2 * j + 1]
    if tau <= 0:
        return -math.inf
    lp = 0.0
    for i, sid in enumerate(data.study_ids):
        c, a = data.study(sid)
        lp += binom.logpmf(c.events, c.size, 1 / (1 + math.exp(-mu[i])))
        lp += binom.logpmf(a.events, a.size, 1 / (1 + math.exp(-(mu[i] + delta[i]))))
    lp += norm.logpdf(mu, 0, sd).sum() + norm.logpdf(d, 0, sd)
    lp += norm.logpdf(delta, d, tau).sum()
    lp += halfnorm.logpdf(tau, scale=tau_scale)
    return lp


def reference_bookend(data, spec, theta, sd=10.0):
    ids = data.study_ids
    low, high = ids.index(spec.bookend_low), ids.index(spec.bookend_high)
    mu_low, mu_high, d = theta[0], theta[1], theta[2]
    w = theta[3:]
    p_low = [1 / (1 + math.exp(-mu_low)), 1 / (1 + math.exp(-(mu_low + d)))]
    p_high = [1 / (1 + math.exp(-mu_high)), 1 / (1 + math.exp(-(mu_high + d)))]
    lp = 0.0
    m = 0
    for i, sid in enumerate(ids):
        c, a = data.study(sid)
        if i == low:
            pc, pa = p_low
        elif i == high:
            pc, pa = p_high
        else:
            pc = w[m] * p_low[0] + (1 - w[m]) * p_high[0]
            pa = w[m] * p_low[1] + (1 - w[m]) * p_high[1]
            m += 1
        lp += binom.logpmf(c.events, c.size, pc) + binom.logpmf(a.events, a.size, pa)
    lp += norm.logpdf(theta[:3], 0, sd).sum()
    lp += beta_dist.logpdf(w, 1, 1).sum()
    return lp


class TestLogPosteriors:
    def test_fe_matches_reference(self, lung_data):
        rng = np.random.default_rng(0)
        for _ in range(5):
            theta = rng.normal([0, -2, -0.8, -0.5], 0.3)
            assert bm.log_post_standard_fe(lung_data, theta) == pytest.approx(
                reference_fe(lung_data, theta), rel=1e-10
            )

    def test_re_matches_reference(self, lung_data):
        rng = np.random.default_rng(1)
        for _ in range(5):
            theta = np.concatenate(
                [rng.normal([0, -2, -0.8], 0.3), rng.normal(-0.5, 0.2, 3), [-0.5], [abs(rng.normal(0.4, 0.2)) + 0.05]]
            )
            assert bm.log_post_standard_re(lung_data, theta) == pytest.approx(
                reference_re(lung_data, theta), rel=1e-10
            )

    def test_bookend_matches_reference(self, lung_data):
        spec = bm.ModelSpec(bm.ModelKind.BOOKEND, bookend_low="2", bookend_high="1")
        rng = np.random.default_rng(2)
        for _ in range(5):
            theta = np.array([rng.normal(-2, 0.3), rng.normal(0, 0.3), rng.normal(-0.5, 0.2), rng.uniform(0.1, 0.9)])
            assert bm.log_post_bookend(lung_data, spec, theta) == pytest.approx(
                reference_bookend(lung_data, spec, theta), rel=1e-10
            )

    def test_fe_dimension_checked(self, lung_data):
        with pytest.raises(ValueError):
            bm.log_post_standard_fe(lung_data, [0.0, 0.0])

    def test_re_dimension_checked(self, lung_data):
        with pytest.raises(ValueError):
            bm.log_post_standard_re(lung_data, [0.0] * 5)

    def test_re_nonpositive_tau(self, lung_data):
        theta = [0, -2, -0.8, -0.5, -0.5, -0.5, -0.5, 0.0]
        assert bm.log_post_standard_re(lung_data, theta) == -math.inf
        theta[-1] = -0.2
        assert bm.log_post_standard_re(lung_data, theta) == -math.inf

    def test_bookend_w_outside_unit_interval(self, lung_data):
        spec = bm.ModelSpec(bm.ModelKind.BOOKEND, bookend_low="2", bookend_high="1")
        assert bm.log_post_bookend(lung_data, spec, [-2, 0, -0.5, 1.2]) == -math.inf
        assert bm.log_post_bookend(lung_data, spec, [-2, 0, -0.5, -0.1]) == -math.inf
        assert math.isfinite(bm.log_post_bookend(lung_data, spec, [-2, 0, -0.5, 1.0]))
        assert math.isfinite(bm.log_post_bookend(lung_data, spec, [-2, 0, -0.5, 0.0]))

    def test_bookend_requires_three_studies(self):
        data2 = make_dataset([("1", 5, 10, 7, 10), ("2", 4, 10, 6, 10)])
        spec = bm.ModelSpec(bm.ModelKind.BOOKEND, bookend_low="1", bookend_high="2")
        with pytest.raises(ValueError):
            bm.log_post_bookend(data2, spec, [0, 0, 0])

    def test_bookend_unknown_study(self, lung_data):
        spec = bm.ModelSpec(bm.ModelKind.BOOKEND, bookend_low="9", bookend_high="1")
        with pytest.raises(ValueError):
            bm.log_post_bookend(lung_data, spec, [0, 0, 0, 0.5])

    def test_non_finite_theta(self, lung_data):
        assert bm.log_post_standard_fe(lung_data, [0, -2, -0.8, float("nan")]) == -math.inf
        assert bm.log_post_standard_fe(lung_data, [0, -2, float("inf"), -0.5]) == -math.inf

    def test_model_spec_validation(self):
        with pytest.raises(ValueError):
            bm.ModelSpec(bm.ModelKind.BOOKEND)
        with pytest.raises(ValueError):
            bm.ModelSpec(bm.ModelKind.BOOKEND, bookend_low="1", bookend_high="1")
        with pytest.raises(ValueError):
            bm.ModelSpec(bm.ModelKind.STANDARD_FE, prior_sd_logodds=0.0)

    def test_fe_symmetry_identical_arms(self):
        """With identical arms in every study, d=0 dominates d=eps at the MLE."""
        data = make_dataset([("1", 50, 100, 50, 100), ("2", 30, 100, 30, 100)])
        mu_hat = [_empirical_logit(50, 100), _empirical_logit(30, 100)]
        lp_null = bm.log_post_standard_fe(data, mu_hat + [0.0])
        for eps in (0.05, -0.05, 0.2):
            assert lp_null >= bm.log_post_standard_fe(data, mu_hat + [eps])


class TestEquivalenceAndPriors:
    def test_bookend_at_boundary_w_equals_fe_on_relabeled_data(self, lung_data):
        """With w pinned at 1 the mixed study is the low population exactly;
        the bookend posterior equals the FE posterior with the mixed study's
        baseline relabeled to mu_low, minus that baseline's prior term."""
        spec = bm.ModelSpec(bm.ModelKind.BOOKEND, bookend_low="2", bookend_high="1")
        rng = np.random.default_rng(3)
        for w_pin in (1.0, 0.0):
            for _ in range(3):
                mu_low, mu_high, d = rng.normal([-2.0, 0.0, -0.5], 0.4)
                be = bm.log_post_bookend(lung_data, spec, [mu_low, mu_high, d, w_pin])
                mu_mixed = mu_low if w_pin == 1.0 else mu_high
                # FE theta in dataset order (study 1, 2, 3)
                fe = bm.log_post_standard_fe(lung_data, [mu_high, mu_low, mu_mixed, d])
                fe -= norm.logpdf(mu_mixed, 0, 10.0)
                assert be == pytest.approx(fe, abs=1e-10)

    def test_prior_recovery_short(self):
        """No observations: d keeps its Normal(0, 100) prior, w stays uniform."""
        rows = [(sid, 0, 0, 0, 0) for sid in ("1", "2", "3")]
        data = make_dataset(rows)
        fitres = bm.fit(
            data,
            bm.ModelSpec(bm.ModelKind.BOOKEND, bookend_low="2", bookend_high="1"),
            SamplerConfig(seed=11, retained=6000, burn_in=1500, thin=2),
        )
        d = fitres.summary["d"]
        w = fitres.summary["w[3]"]
        assert abs(d.mean) < 1.2  # sd 10 target; short run, loose bound
        assert d.sd == pytest.approx(10.0, abs=1.5)
        assert w.mean == pytest.approx(0.5, abs=0.05)


class TestFit:
    def test_fe_fit_matches_figure_values(self, lung_fe_fit):
        d = lung_fe_fit.summary["d"]
        assert d.mean == pytest.approx(-0.458, abs=0.02)
        assert lung_fe_fit.converged

    def test_single_study_grid_check(self):
        data = make_dataset([("1", 50, 100, 50, 100)])
        log_post = lambda th: bm.log_post_standard_fe(data, th)
        grid_mu, grid_d = grid_posterior_means(log_post, (-1.5, 1.5), (-1.5, 1.5))
        assert abs(grid_d) < 0.05
        chains = sample(
            log_post, ParameterSpace(("mu", "d"), ("real", "real")), [0.0, 0.0],
            SamplerConfig(seed=13, retained=8000),
        )
        s = summarize(chains)
        assert s["d"].mean == pytest.approx(grid_d, abs=0.05)

    def test_re_fit_table(self, lung_data):
        fitres = bm.fit(
            lung_data,
            bm.ModelSpec(bm.ModelKind.STANDARD_RE),
            SamplerConfig(seed=17, retained=9000),
        )
        d = fitres.summary["d"]
        tau = fitres.summary["tau"]
        assert -0.60 < d.mean < -0.30
        assert tau.mean > 0
        # reported delta draws are the implied d + tau*z values
        delta = fitres.chains.parameter("delta[1]")
        dd = fitres.chains.parameter("d")
        tt = fitres.chains.parameter("tau")
        zz = (delta - dd) / tt
        assert np.all(np.isfinite(zz))
        assert fitres.names_with_role("heterogeneity") == ["tau"]

    def test_re_tau_to_zero_limit_matches_fe(self, lung_data):
        """tau pinned at 1e-6 reduces the RE posterior to the FE posterior."""
        def pinned(th7):
            return bm.log_post_standard_re_noncentered(lung_data, np.append(th7, 1e-6))

        space = ParameterSpace(
            ("mu1", "mu2", "mu3", "z1", "z2", "z3", "d"), ("real",) * 7
        )
        chains = sample(
            pinned, space, [0.056, -2.01, -0.83, 0, 0, 0, 0.0],
            SamplerConfig(seed=5, retained=9000),
            init_steps=[0.07, 0.09, 0.07, 1, 1, 1, 0.06],
        )
        d_re = summarize(chains)["d"].mean
        fe = bm.fit(lung_data, bm.ModelSpec(bm.ModelKind.STANDARD_FE), SamplerConfig(seed=5, retained=9000))
        assert d_re == pytest.approx(fe.summary["d"].mean, abs=0.02)

    def test_re_centered_noncentered_change_of_variables(self, lung_data):
        rng = np.random.default_rng(4)
        for _ in range(5):
            mu = rng.normal([0, -2, -0.8], 0.3)
            z = rng.normal(0, 1, 3)
            d = rng.normal(-0.5, 0.2)
            tau = abs(rng.normal(0.5, 0.2)) + 0.05
            delta = d + tau * z
            centered = bm.log_post_standard_re(lung_data, np.concatenate([mu, delta, [d, tau]]))
            noncentered = bm.log_post_standard_re_noncentered(lung_data, np.concatenate([mu, z, [d, tau]]))
            assert centered == pytest.approx(noncentered - 3 * math.log(tau), rel=1e-10)

    def test_re_two_identical_studies_centered_on_common_log_or(self):
        data = make_dataset([("1", 514, 1000, 375, 1000), ("2", 514, 1000, 375, 1000)])
        obs = bm.observed_log_or(*data.study("1")).log_or
        fitres = bm.fit(
            data, bm.ModelSpec(bm.ModelKind.STANDARD_RE),
            SamplerConfig(seed=21, retained=20000, burn_in=3000),
        )
        # the d marginal is heavy-tailed (tau weakly identified with J=2), so
        # the median is the stable center of symmetry
        assert fitres.summary["d"].median == pytest.approx(obs, abs=0.05)

    def test_bookend_fit_recovers_simulation_truth(self):
        sc = bm.ScenarioParams(0.0, -2.0, -0.5, 0.5, arm_size=100000)
        data = bm.simulate(bm.three_study_design(sc, seed=20260810))
        fitres = bm.fit(
            data,
            bm.ModelSpec(bm.ModelKind.BOOKEND, bookend_low="2", bookend_high="1"),
            SamplerConfig(seed=20260810, retained=6000),
        )
        assert fitres.summary["d"].mean == pytest.approx(-0.5, abs=0.03)
        assert fitres.summary["w[3]"].mean == pytest.approx(0.5, abs=0.05)

    def test_bookend_mixed_study_copy_of_low_bookend_pushes_w_to_one(self):
        rows = [("1", 514, 1000, 375, 1000), ("2", 118, 1000, 81, 1000), ("3", 118, 1000, 81, 1000)]
        data = make_dataset(rows)
        fitres = bm.fit(
            data,
            bm.ModelSpec(bm.ModelKind.BOOKEND, bookend_low="2", bookend_high="1"),
            SamplerConfig(seed=6, retained=6000),
        )
        assert fitres.summary["w[3]"].mean > 0.8

    def test_fit_deterministic(self, lung_data, quick_cfg):
        a = bm.fit(lung_data, bm.ModelSpec(bm.ModelKind.STANDARD_FE), quick_cfg)
        b = bm.fit(lung_data, bm.ModelSpec(bm.ModelKind.STANDARD_FE), quick_cfg)
        assert np.array_equal(a.chains.draws, b.chains.draws)
        assert a.summary.to_dict() == b.summary.to_dict()

    def test_fit_study_order_exchangeable(self, lung_data, lung_fe_fit):
        permuted = make_dataset(
            [("3", 304, 1000, 237, 1000), ("1", 514, 1000, 375, 1000), ("2", 118, 1000, 81, 1000)]
        )
        fit_b = bm.fit(permuted, bm.ModelSpec(bm.ModelKind.STANDARD_FE), bm.SamplerConfig(seed=20260810))
        assert fit_b.summary["d"].mean == pytest.approx(lung_fe_fit.summary["d"].mean, abs=0.01)
        for sid in ("1", "2", "3"):
            assert fit_b.summary[f"mu[{sid}]"].mean == pytest.approx(
                lung_fe_fit.summary[f"mu[{sid}]"].mean, abs=0.01
            )

    def test_fit_requires_two_studies_for_standard_models(self):
        data = make_dataset([("1", 5, 10, 7, 10)])
        with pytest.raises(ValueError):
            bm.fit(data, bm.ModelSpec(bm.ModelKind.STANDARD_FE), SamplerConfig())

    def test_roles_cover_every_study(self, lung_fe_fit):
        baseline_students = {r.study_id for n, r in lung_fe_fit.roles.items() if r.role == "baseline"}
        assert baseline_students == {"1", "2", "3"}

    def test_bookend_roles(self, lung_data, quick_cfg):
        fitres = bm.fit(
            lung_data,
            bm.ModelSpec(bm.ModelKind.BOOKEND, bookend_low="2", bookend_high="1"),
            quick_cfg,
        )
        roles = fitres.roles
        assert roles["mu[2]"].role == "baseline"
        assert roles["mu[1]"].role == "baseline"
        assert roles["w[3]"].role == "mixing"
        assert roles["w[3]"].study_id == "3"
        covered = {r.study_id for r in roles.values() if r.role in ("baseline", "mixing")}
        assert covered == {"1", "2", "3"}
