"""Parameter sampling, MC and control-variate estimators."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from lrrt import (
    DegenerateCoarseError,
    GridSpec,
    Physics,
    QoIVector,
    SampleEngine,
    SampleFailedError,
    cv_estimate,
    cv_pipeline,
    diff_sample_count,
    draw_parameter,
    mc_estimate,
    optimal_alpha,
    sample_statistics,
    stream_seed,
)

# closed-form moments of nu ~ U(0.5, 1.5)
NU_MEAN = 1.0
NU_VAR = 1.0 / 12.0
NU_SQ_MEAN = 13.0 / 12.0

# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


def two_pass_statistics(fine, coarse, dx):
    """Naive loop evaluation of dx-weighted Var/Cov/Corr."""
    n = len(fine)
    mean_f = sum(fine) / n
    mean_c = sum(coarse) / n
    var_f = var_c = cov = 0.0
    for f, c in zip(fine, coarse):
        df, dc = f - mean_f, c - mean_c
        var_f += float(np.sum(df * df)) * dx
        var_c += float(np.sum(dc * dc)) * dx
        cov += float(np.sum(df * dc)) * dx
    var_f /= n - 1
    var_c /= n - 1
    cov /= n - 1
    return var_f, var_c, cov, cov / math.sqrt(var_f * var_c)


def make_pairs(seed, n_pairs, m=6, dx=0.25):
    rng = np.random.default_rng(seed)
    fine = [QoIVector(phi=rng.standard_normal(m), dx=dx) for _ in range(n_pairs)]
    coarse = [
        QoIVector(phi=f.phi + 0.3 * rng.standard_normal(m), dx=dx) for f in fine
    ]
    return fine, coarse


# ---------------------------------------------------------------------------
# parameter draws
# ---------------------------------------------------------------------------


def test_draws_are_reproducible_and_in_bounds():
    a = draw_parameter(42, 7)
    b = draw_parameter(42, 7)
    assert a.nu == b.nu
    assert 0.5 <= a.nu <= 1.5
    assert a.sample_index == 7 and a.master_seed == 42


def test_draws_differ_across_indices_and_seeds():
    nus = {draw_parameter(42, i).nu for i in range(100)}
    assert len(nus) == 100
    assert draw_parameter(43, 0).nu != draw_parameter(42, 0).nu


def test_draw_mean_matches_uniform_within_clt():
    nus = np.array([draw_parameter(2024, i).nu for i in range(100_000)])
    bound = 3.0 * math.sqrt(NU_VAR / 100_000)
    assert abs(nus.mean() - NU_MEAN) <= bound  # 1.0 +- 0.0027


def test_draw_custom_bounds_and_validation():
    p = draw_parameter(1, 2, low=2.0, high=4.0)
    assert 2.0 <= p.nu <= 4.0
    with pytest.raises(ValueError):
        draw_parameter(1, 2, low=1.0, high=1.0)
    with pytest.raises(ValueError):
        draw_parameter(-1, 0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), index=st.integers(0, 2**31 - 1))
def test_draw_is_pure_function_of_seed_and_index(seed, index):
    a = draw_parameter(seed, index)
    b = draw_parameter(seed, index)
    assert a.nu == b.nu
    assert 0.5 <= a.nu <= 1.5


def test_stream_seeds_are_stable_and_distinct():
    assert stream_seed(7, "pilot") == stream_seed(7, "pilot")
    names = ("pilot", "cv-pairs", "cv-coarse", "reference")
    seeds = {stream_seed(7, name) for name in names}
    assert len(seeds) == len(names)
    assert stream_seed(8, "pilot") != stream_seed(7, "pilot")


# ---------------------------------------------------------------------------
# plain Monte Carlo
# ---------------------------------------------------------------------------


def test_mc_requires_two_samples():
    with pytest.raises(ValueError):
        mc_estimate(None, None, 1, 0, qoi_fn=lambda nu: np.array([nu]))


def test_mc_constant_qoi_has_zero_error():
    rep = mc_estimate(None, None, 50, 3, qoi_fn=lambda nu: np.array([2.0, 5.0]))
    assert rep.variance_field == pytest.approx(np.zeros(2))
    assert rep.mc_error == 0.0
    assert rep.mean.phi == pytest.approx([2.0, 5.0])


def test_mc_hook_moments_within_clt():
    N = 10_000
    rep = mc_estimate(None, None, N, 11, qoi_fn=lambda nu: np.array([nu]))
    mean_bound = 3.0 * math.sqrt(NU_VAR / N)
    assert abs(rep.mean.phi[0] - NU_MEAN) <= mean_bound
    # Var(S^2) = (mu4 - sigma^4 (N-3)/(N-1))/N for iid samples
    mu4 = 1.0 / 80.0
    var_bound = 3.0 * math.sqrt((mu4 - NU_VAR**2 * (N - 3) / (N - 1)) / N)
    assert abs(rep.var_fine - NU_VAR) <= var_bound
    assert rep.mc_error == pytest.approx(math.sqrt(rep.var_fine / N))


def test_mc_error_halves_when_samples_quadruple():
    seed = 21
    e1600 = mc_estimate(None, None, 1600, seed, qoi_fn=lambda nu: np.array([nu])).mc_error
    e6400 = mc_estimate(None, None, 6400, seed, qoi_fn=lambda nu: np.array([nu])).mc_error
    assert e6400 / e1600 == pytest.approx(0.5, abs=0.1)


def test_mc_real_solves_smoke_and_determinism():
    grid = GridSpec(m=21, n=4, t_end=0.3)
    rep1 = mc_estimate(2, grid, 4, 9)
    rep2 = mc_estimate(2, grid, 4, 9)
    assert np.array_equal(rep1.mean.phi, rep2.mean.phi)
    assert rep1.mean.dx == grid.dx
    assert len(rep1.mean.phi) == 21
    assert rep1.mc_error > 0
    assert rep1.wall_time > 0
    rep3 = mc_estimate(2, grid, 4, 10)
    assert not np.array_equal(rep1.mean.phi, rep3.mean.phi)


def test_mc_failure_reports_sample_index():
    grid = GridSpec(m=21, n=4, t_end=0.3)
    with pytest.raises(SampleFailedError, match="sample 0"):
        mc_estimate(10, grid, 3, 9)  # rank > n fails inside the solver


def test_mc_is_worker_count_independent():
    grid = GridSpec(m=21, n=4, t_end=0.3)
    serial = mc_estimate(2, grid, 6, 5, workers=1)
    pooled = mc_estimate(2, grid, 6, 5, workers=2)
    assert np.array_equal(serial.mean.phi, pooled.mean.phi)
    assert np.array_equal(serial.variance_field, pooled.variance_field)


# ---------------------------------------------------------------------------
# pair statistics and alpha
# ---------------------------------------------------------------------------


def test_statistics_match_two_pass_oracle():
    fine, coarse = make_pairs(0, 40)
    stats = sample_statistics(fine, coarse)
    var_f, var_c, cov, corr = two_pass_statistics(
        [q.phi for q in fine], [q.phi for q in coarse], 0.25
    )
    assert stats.var_fine == pytest.approx(var_f, rel=1e-12)
    assert stats.var_coarse == pytest.approx(var_c, rel=1e-12)
    assert stats.cov == pytest.approx(cov, rel=1e-12)
    assert stats.corr == pytest.approx(corr, rel=1e-12)


def test_statistics_identical_lists_are_perfectly_correlated():
    fine, _ = make_pairs(1, 20)
    stats = sample_statistics(fine, fine)
    assert stats.corr == 1.0
    assert stats.cov == pytest.approx(stats.var_fine, rel=1e-13)


def test_statistics_scaled_pairs():
    fine, _ = make_pairs(2, 25)
    doubled = [QoIVector(phi=2.0 * q.phi, dx=q.dx) for q in fine]
    stats = sample_statistics(fine, doubled)
    assert stats.corr == 1.0
    assert stats.cov == pytest.approx(2.0 * stats.var_fine, rel=1e-12)
    assert stats.var_coarse == pytest.approx(4.0 * stats.var_fine, rel=1e-12)


def test_statistics_validation():
    fine, coarse = make_pairs(3, 10)
    with pytest.raises(ValueError):
        sample_statistics(fine, coarse[:-1])
    with pytest.raises(ValueError):
        sample_statistics(fine[:1], coarse[:1])
    other = [QoIVector(phi=q.phi, dx=0.5) for q in coarse]
    with pytest.raises(ValueError):
        sample_statistics(fine, other)


def test_optimal_alpha_values():
    assert optimal_alpha(2.0, 2.0) == 1.0  # coarse identical to fine
    assert optimal_alpha(2.0, 4.0) == 0.5  # coarse = 2 * fine
    with pytest.raises(DegenerateCoarseError):
        optimal_alpha(1.0, 0.0)


def test_optimal_alpha_minimizes_pilot_variance():
    # quadratic in alpha with the minimum at alpha*
    fine, coarse = make_pairs(4, 500)
    stats = sample_statistics(fine, coarse)
    alpha = optimal_alpha(stats.cov, stats.var_coarse)

    def cv_variance(a):
        diffs = [f.phi - a * c.phi for f, c in zip(fine, coarse)]
        mean = sum(diffs) / len(diffs)
        return sum(float(np.sum((d - mean) ** 2)) * 0.25 for d in diffs) / (len(diffs) - 1)

    v_star = cv_variance(alpha)
    assert cv_variance(alpha + 0.1) >= v_star
    assert cv_variance(alpha - 0.1) >= v_star
    # explicit quadratic identity Var_r + a^2 Var_s - 2 a Cov
    expect = stats.var_fine + alpha**2 * stats.var_coarse - 2 * alpha * stats.cov
    assert v_star == pytest.approx(expect, rel=1e-10)


# ---------------------------------------------------------------------------
# sample allocation
# ---------------------------------------------------------------------------


def test_diff_sample_count_examples():
    assert diff_sample_count(0.5, 1.0, 0.01) == 1
    assert diff_sample_count(0.04, 0.0, 0.01) == math.ceil(0.04 / 1e-4)
    assert diff_sample_count(0.04, 0.99, 0.01) == 8


def test_diff_sample_count_validation():
    with pytest.raises(ValueError):
        diff_sample_count(0.1, 0.5, 0.0)
    with pytest.raises(ValueError):
        diff_sample_count(-0.1, 0.5, 0.01)
    with pytest.raises(ValueError):
        diff_sample_count(0.1, 1.5, 0.01)


@settings(max_examples=100, deadline=None)
@given(
    var=st.floats(0.0, 1e3),
    corr=st.floats(-1.0, 1.0),
    eps=st.floats(1e-6, 1.0),
)
def test_diff_sample_count_properties(var, corr, eps):
    n = diff_sample_count(var, corr, eps)
    assert n >= 1
    assert n == diff_sample_count(var, -corr, eps)
    # more correlation never costs more samples
    stronger = diff_sample_count(var, min(1.0, abs(corr) + 0.1), eps)
    assert stronger <= n


# ---------------------------------------------------------------------------
# control-variate estimator
# ---------------------------------------------------------------------------


def test_cv_alpha_zero_reduces_to_plain_mc_over_pairs():
    rep = cv_estimate(
        None, None, 16, 200, 0.0, None, 33,
        fine_fn=lambda nu: np.array([nu]),
        coarse_fn=lambda nu: np.array([nu * nu]),
    )
    pair_seed = stream_seed(33, "cv-pairs")
    nus = np.array([draw_parameter(pair_seed, i).nu for i in range(200)])
    assert rep.mean.phi[0] == pytest.approx(nus.mean(), rel=1e-13)
    assert rep.mc_error == pytest.approx(math.sqrt(nus.var(ddof=1) / 200), rel=1e-12)


def test_cv_zero_variance_identity():
    hook = lambda nu: np.array([nu, 2.0 * nu])  # noqa: E731
    exact = np.array([NU_MEAN, 2.0 * NU_MEAN])
    rep = cv_estimate(
        None, None, 0, 64, 1.0, None, 12, fine_fn=hook, coarse_fn=hook, coarse_mean=exact
    )
    assert np.array_equal(rep.mean.phi, exact)  # exactly the coarse term
    assert rep.mc_error == 0.0
    assert np.max(np.abs(rep.variance_field)) <= 1e-12


def test_cv_estimated_coarse_term_equals_coarse_stream_mean():
    hook = lambda nu: np.array([nu])  # noqa: E731
    rep = cv_estimate(None, None, 50, 30, 1.0, None, 77, fine_fn=hook, coarse_fn=hook)
    coarse_seed = stream_seed(77, "cv-coarse")
    nus = np.array([draw_parameter(coarse_seed, i).nu for i in range(50)])
    assert rep.mean.phi[0] == pytest.approx(nus.mean(), rel=1e-13)


def test_cv_pair_streams_disjoint_from_coarse_stream():
    seen_fine, seen_coarse = [], []

    def fine_fn(nu):
        seen_fine.append(nu)
        return np.array([nu])

    def coarse_fn(nu):
        seen_coarse.append(nu)
        return np.array([nu])

    cv_estimate(None, None, 20, 10, 0.5, None, 5, fine_fn=fine_fn, coarse_fn=coarse_fn)
    pair_nus = seen_fine  # 10 pair draws
    coarse_only = [nu for nu in seen_coarse if nu not in set(pair_nus)]
    assert len(pair_nus) == 10
    assert len(coarse_only) == 20  # none of the pair nus reused
    assert set(seen_coarse[:10]) == set(pair_nus)  # pairs share their nu


def test_cv_requires_coarser_rank_for_real_solves():
    grid = GridSpec(m=21, n=4, t_end=0.3)
    with pytest.raises(ValueError):
        cv_estimate(3, 3, 4, 2, 1.0, grid, 0)


def test_cv_variance_never_worse_at_optimal_alpha():
    # on the pilot set itself, Var(G_fine - alpha* G_coarse) <= Var(G_fine)
    fine_fn = lambda nu: np.array([nu + 0.4 * nu * nu])  # noqa: E731
    coarse_fn = lambda nu: np.array([nu])  # noqa: E731
    pair_seed = stream_seed(13, "cv-pairs")
    nus = [draw_parameter(pair_seed, i).nu for i in range(500)]
    fine = [QoIVector(phi=fine_fn(nu), dx=1.0) for nu in nus]
    coarse = [QoIVector(phi=coarse_fn(nu), dx=1.0) for nu in nus]
    stats = sample_statistics(fine, coarse)
    alpha = optimal_alpha(stats.cov, stats.var_coarse)
    assert stats.corr > 0
    var_cv = stats.var_fine + alpha**2 * stats.var_coarse - 2 * alpha * stats.cov
    assert var_cv <= stats.var_fine


def test_cv_hook_unbiased_for_quadratic_qoi():
    # E[nu^2] = 13/12; the CV estimate must agree within 3 sigma
    fine_fn = lambda nu: np.array([nu * nu])  # noqa: E731
    coarse_fn = lambda nu: np.array([nu])  # noqa: E731
    rep = cv_estimate(
        None, None, 4000, 500, 2.0, None, 99, fine_fn=fine_fn, coarse_fn=coarse_fn
    )
    # alpha = 2 Cov(nu^2, nu)/Var(nu) would be optimal; any fixed alpha is unbiased
    assert abs(rep.mean.phi[0] - NU_SQ_MEAN) <= 3.0 * rep.mc_error
    mc = mc_estimate(None, None, 4000, 98, qoi_fn=fine_fn)
    assert abs(mc.mean.phi[0] - NU_SQ_MEAN) <= 3.0 * mc.mc_error


def test_cv_real_pairs_share_nu():
    grid = GridSpec(m=21, n=4, t_end=0.3)
    with SampleEngine(grid, Physics(), 1) as eng:
        nus = np.array([1.0, 1.25])
        fine, coarse, _, _ = eng.map_pairs(nus, 4, 2)
        lone_fine, _ = eng.map_qoi(nus[:1], 4)
        lone_coarse, _ = eng.map_qoi(nus[:1], 2)
    assert np.array_equal(fine[0], lone_fine[0])
    assert np.array_equal(coarse[0], lone_coarse[0])


# ---------------------------------------------------------------------------
# variance identity (hook level)
# ---------------------------------------------------------------------------


def test_variance_identity_chi_square_band():
    # empirical Var(Q-hat) over R replications within the 99% chi-square
    # band around Var(G)/N
    R, N = 100, 64
    estimates = np.array(
        [
            mc_estimate(None, None, N, 1000 + k, qoi_fn=lambda nu: np.array([nu])).mean.phi[0]
            for k in range(R)
        ]
    )
    observed = estimates.var(ddof=1)
    target = NU_VAR / N
    lo = chi2.ppf(0.005, R - 1) / (R - 1)
    hi = chi2.ppf(0.995, R - 1) / (R - 1)
    assert lo * target <= observed <= hi * target


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------


def test_pipeline_rejects_unknown_mode():
    with pytest.raises(ValueError):
        cv_pipeline("bogus", 4, 2, 100, GridSpec(m=21, n=4), 0)


def test_pipeline_self_coarse_hook_collapses_to_coarse_mean():
    hook = lambda nu: np.array([nu])  # noqa: E731
    rep = cv_pipeline(
        "pilot", None, None, 400, None, 17, pilot_N=100,
        fine_fn=hook, coarse_fn=hook,
    )
    assert rep.n_diff == 1  # perfect correlation clamps the allocation
    assert rep.alpha == pytest.approx(1.0)
    coarse_seed = stream_seed(17, "cv-coarse")
    nus = np.array([draw_parameter(coarse_seed, i).nu for i in range(400)])
    assert rep.mean.phi[0] == pytest.approx(nus.mean(), rel=1e-12)


def test_pipeline_warmup_reuses_pairs_and_counts_coarse_solves():
    calls = {"fine": 0, "coarse": 0}

    def fine_fn(nu):
        calls["fine"] += 1
        return np.array([nu + 0.2 * nu * nu])

    def coarse_fn(nu):
        calls["coarse"] += 1
        return np.array([nu])

    n_mc, warmup = 500, 80
    rep = cv_pipeline(
        "warmup", None, None, n_mc, None, 23, warmup_N=warmup,
        fine_fn=fine_fn, coarse_fn=coarse_fn,
    )
    # highly correlated hook: N_diff <= warmup, so pairs are reused and
    # exactly n_mc - warmup extra coarse evaluations run
    assert rep.n_diff == warmup
    assert rep.n_coarse == n_mc - warmup
    assert calls["fine"] == warmup
    assert calls["coarse"] == warmup + (n_mc - warmup)
    assert rep.epsilon == pytest.approx(math.sqrt(rep.var_fine / n_mc))


def test_pipeline_warmup_extends_pair_stream_when_needed():
    # nearly uncorrelated fidelities force N_diff > warmup_N
    def fine_fn(nu):
        return np.array([math.sin(1000.0 * nu)])

    def coarse_fn(nu):
        return np.array([nu])

    rep = cv_pipeline(
        "warmup", None, None, 300, None, 31, warmup_N=50,
        fine_fn=fine_fn, coarse_fn=coarse_fn, n_diff_cap=100_000,
    )
    assert rep.n_diff > 50
    assert rep.n_coarse == 300 - (rep.n_diff - 50)
    # extended pairs continue the same counter stream
    pair_seed = stream_seed(31, "cv-pairs")
    nu_51 = draw_parameter(pair_seed, 50).nu
    assert math.isfinite(nu_51)


def test_pipeline_budget_cap():
    from lrrt import SampleBudgetError

    def fine_fn(nu):
        return np.array([math.sin(1000.0 * nu)])

    def coarse_fn(nu):
        return np.array([nu])

    with pytest.raises(SampleBudgetError):
        cv_pipeline(
            "warmup", None, None, 300, None, 31, warmup_N=50,
            fine_fn=fine_fn, coarse_fn=coarse_fn, n_diff_cap=60,
        )


def test_pipeline_real_solves_smoke():
    grid = GridSpec(m=21, n=4, t_end=0.3)
    rep = cv_pipeline("warmup", 4, 2, 60, grid, 3, warmup_N=20)
    assert rep.alpha is not None and 0.0 < rep.alpha < 2.0
    assert rep.rank == 4 and rep.rank_coarse == 2
    assert len(rep.mean.phi) == 21
    rep2 = cv_pipeline("warmup", 4, 2, 60, grid, 3, warmup_N=20)
    assert np.array_equal(rep.mean.phi, rep2.mean.phi)
