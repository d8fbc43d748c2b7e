"""Fit-engine tests: closed forms, finite differences, and a dense mixed-model oracle."""

import json
import math
import warnings

import numpy as np
import pytest

from arelink.fit import (
    FitError,
    _penalty_logdets,
    _reml_criterion,
    build_design,
    fit_model,
    pirls_fit,
    predictions_from_json,
    select_lambdas,
    summary_json,
    term_predictions,
)
from arelink.formula import parse_formula
from arelink.nbgraph import nb_from_edges

from .helpers import rook_edges


def path_nb(n, prefix="u"):
    names = [f"{prefix}{i}" for i in range(1, n + 1)]
    return nb_from_edges(names, [(i, i + 1) for i in range(1, n)])


def grid_nb(nx, ny):
    names = [f"g{i:02d}" for i in range(1, nx * ny + 1)]
    return nb_from_edges(names, rook_edges(nx, ny))


def poisson_deviance(y, mu):
    y = np.asarray(y, dtype=float)
    term = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0) / mu), 0.0)
    return float(2.0 * np.sum(term - (y - mu)))


def design_matrix(blocks):
    return np.hstack([b.columns for b in blocks])


def penalty_matrix(blocks, slices, lambdas):
    p = sum(b.ncols for b in blocks)
    S = np.zeros((p, p))
    li = 0
    for b, sl in zip(blocks, slices):
        if b.penalty is None:
            continue
        if b.ncols:
            S[sl, sl] += lambdas[li] * b.penalty
        li += 1
    return S


def test_gaussian_unpenalized_matches_least_squares():
    rng = np.random.default_rng(3)
    n = 40
    x1 = rng.normal(size=n)
    x2 = rng.normal(size=n)
    y = 1.0 + 2.0 * x1 - 0.7 * x2 + rng.normal(scale=0.3, size=n)
    table = {"y": list(y), "x1": list(x1), "x2": list(x2)}
    blocks, resp, off = build_design(parse_formula("y ~ x1 + x2"), table)
    fit = pirls_fit(blocks, resp, off, "gaussian", [])

    X = np.column_stack([np.ones(n), x1, x2])
    beta_ls, *_ = np.linalg.lstsq(X, y, rcond=None)
    assert np.allclose(fit.beta, beta_ls, atol=1e-8)
    assert fit.iterations == 1 and fit.converged

    rss = float(np.sum((y - X @ beta_ls) ** 2))
    sigma2 = rss / (n - 3)
    assert math.isclose(fit.deviance, rss, rel_tol=1e-10)
    assert math.isclose(fit.edf_total, 3.0, abs_tol=1e-8)
    assert math.isclose(fit.scale, sigma2, rel_tol=1e-8)
    assert np.allclose(fit.cov, sigma2 * np.linalg.inv(X.T @ X), rtol=1e-6, atol=1e-12)
    assert math.isclose(fit.null_deviance, float(np.sum((y - y.mean()) ** 2)), rel_tol=1e-10)
    assert math.isclose(fit.aic, rss + 6.0, rel_tol=1e-10)


def test_poisson_intercept_only_matches_log_mean():
    y = [0, 1, 2, 5, 3, 4, 1, 0, 2, 6]
    blocks, resp, off = build_design(parse_formula("y ~ 1"), {"y": y})
    fit = pirls_fit(blocks, resp, off, "poisson", [])
    b0 = math.log(sum(y) / len(y))
    assert abs(fit.beta[0] - b0) < 1e-8
    mu = np.full(len(y), sum(y) / len(y))
    assert math.isclose(fit.deviance, poisson_deviance(y, mu), rel_tol=1e-10)
    assert math.isclose(fit.deviance, fit.null_deviance, rel_tol=1e-10)
    assert fit.converged and fit.scale == 1.0


def test_poisson_offset_rate_estimate():
    """Intercept + log-exposure offset: the MLE is the aggregate rate."""
    rng = np.random.default_rng(9)
    n = 30
    area = rng.uniform(0.5, 2.0, size=n)
    y = rng.poisson(3.0 * area)
    table = {"y": [int(v) for v in y], "area": list(area)}
    blocks, resp, off = build_design(parse_formula("y ~ offset(log(area))"), table)
    fit = pirls_fit(blocks, resp, off, "poisson", [])
    assert abs(fit.beta[0] - math.log(y.sum() / area.sum())) < 1e-8
    # score identity for the intercept: fitted totals match observed totals
    assert math.isclose(float(fit.fitted.sum()), float(y.sum()), rel_tol=1e-10)


def test_penalized_gradient_vanishes_at_optimum():
    rng = np.random.default_rng(17)
    n = 24
    grp = [f"g{i % 4}" for i in range(n)]
    x = rng.normal(size=n)
    y = rng.poisson(np.exp(1.0 + 0.5 * x + np.array([0.4, -0.2, 0.0, -0.3])[np.arange(n) % 4]))
    table = {"y": [int(v) for v in y], "x": list(x), "grp": grp}
    blocks, resp, off = build_design(parse_formula("y ~ x + s(grp, bs='re')"), table)
    lam = 3.0
    fit = pirls_fit(blocks, resp, off, "poisson", [lam])
    assert fit.converged

    X = design_matrix(blocks)
    S = penalty_matrix(blocks, fit.slices, [lam])

    def objective(beta):
        mu = np.exp(X @ beta + off)
        return 0.5 * poisson_deviance(resp, mu) + 0.5 * float(beta @ S @ beta)

    h = 1e-5
    grad = np.zeros(len(fit.beta))
    for j in range(len(fit.beta)):
        e = np.zeros(len(fit.beta))
        e[j] = h
        grad[j] = (objective(fit.beta + e) - objective(fit.beta - e)) / (2 * h)
    assert float(np.max(np.abs(grad))) < 1e-6


def test_mrf_effect_vanishes_under_heavy_penalty():
    rng = np.random.default_rng(5)
    nb = grid_nb(4, 4)
    x = rng.normal(size=16)
    y = 2.0 + 0.5 * x + rng.normal(size=16)
    table = {"y": list(y), "x": list(x), "g": list(nb.names)}
    blocks, resp, off = build_design(parse_formula("y ~ x + s(g, bs='mrf')"), table, nb)
    fit = pirls_fit(blocks, resp, off, "gaussian", [1e8])
    eff = term_predictions(fit, blocks)[0]
    assert eff.name == "mrf.smooth.g"
    assert eff.levels == nb.names
    assert float(np.max(np.abs(eff.estimate))) < 1e-4
    assert abs(float(eff.estimate.sum())) < 1e-10


def test_zero_lambda_reproduces_unpenalized_fit():
    rng = np.random.default_rng(21)
    nb = grid_nb(3, 3)
    units = [u for u in nb.names for _ in range(2)]
    x = rng.normal(size=18)
    y = rng.normal(size=18)
    table = {"y": list(y), "x": list(x), "g": units}
    blocks, resp, off = build_design(parse_formula("y ~ x + s(g, bs='mrf')"), table, nb)
    fit = pirls_fit(blocks, resp, off, "gaussian", [0.0])

    X = design_matrix(blocks)
    beta_ls, *_ = np.linalg.lstsq(X, y, rcond=None)
    assert np.allclose(X @ fit.beta, X @ beta_ls, atol=1e-8)
    assert np.allclose(fit.beta, beta_ls, atol=1e-7)
    assert math.isclose(fit.edf_total, X.shape[1], abs_tol=1e-7)


def test_reml_criterion_matches_dense_mixed_model_oracle():
    """The Gaussian smoothing criterion equals the classical restricted
    likelihood computed from the marginal covariance V = sum_b (phi/lambda_b)
    Z_b S_b^-1 Z_b' + phi I, up to a lambda-independent constant."""
    rng = np.random.default_rng(11)
    nb = path_nb(8)
    reps = 3
    n = 8 * reps
    units = [u for u in nb.names for _ in range(reps)]
    grp = [f"h{i % 4}" for i in range(n)]
    x = rng.normal(size=n)
    gamma = np.linspace(-1, 1, 8)
    y = 1.0 + 0.6 * x + np.repeat(gamma, reps) + rng.normal(scale=0.7, size=n)
    table = {"y": list(y), "x": list(x), "unit": units, "grp": grp}
    spec = parse_formula("y ~ x + s(grp, bs='re') + s(unit, bs='mrf')")
    blocks, resp, off = build_design(spec, table, nb)
    logdets = _penalty_logdets(blocks)

    Xf = blocks[0].columns
    p_fixed = Xf.shape[1]

    def harville(lams):
        fit = pirls_fit(blocks, resp, off, "gaussian", lams)
        phi = (fit.deviance + fit.penalty_quad) / (n - p_fixed)
        V = phi * np.eye(n)
        for b, lam in zip(blocks[1:], lams):
            V += (phi / lam) * b.columns @ np.linalg.inv(b.penalty) @ b.columns.T
        Vi = np.linalg.inv(V)
        C = Xf.T @ Vi @ Xf
        P = Vi - Vi @ Xf @ np.linalg.inv(C) @ Xf.T @ Vi
        out = np.linalg.slogdet(V)[1] + np.linalg.slogdet(C)[1]
        out += float(resp @ P @ resp) + (n - p_fixed) * math.log(2 * math.pi)
        return out

    def mine(lams):
        fit = pirls_fit(blocks, resp, off, "gaussian", lams)
        return _reml_criterion(fit, blocks, lams, logdets)

    grid = [(a, b) for a in (0.1, 1.0, 10.0) for b in (0.1, 1.0, 10.0)]
    diffs = [mine(list(l)) - harville(list(l)) for l in grid]
    assert max(diffs) - min(diffs) < 1e-6


def test_noise_field_is_smoothed_away():
    rng = np.random.default_rng(42)
    nb = grid_nb(6, 6)
    y = rng.poisson(math.exp(1.2), size=36)
    table = {"y": [int(v) for v in y], "g": list(nb.names)}
    fit = fit_model(table, "y ~ s(g, bs='mrf')", family="poisson", nb=nb)
    label, edf, lam = fit.terms[0]
    assert label == "mrf.smooth.g"
    assert lam > 1e4
    assert edf < 2.0
    assert float(np.max(np.abs(fit.term_effects[0].estimate))) < 0.05


def test_spatial_field_recovery_on_path():
    rng = np.random.default_rng(7)
    nb = path_nb(5)
    gamma = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
    reps = 8
    units = [u for u in nb.names for _ in range(reps)]
    x = rng.normal(size=5 * reps)
    eta = 1.5 + 0.8 * x + np.repeat(gamma, reps)
    y = rng.poisson(np.exp(eta))
    table = {"y": [int(v) for v in y], "x": list(x), "unit": units}
    fit = fit_model(table, "y ~ x + s(unit, bs='mrf')", family="poisson", nb=nb)
    assert fit.converged

    eff = fit.term_effects[0]
    assert eff.levels == nb.names
    c = np.corrcoef(eff.estimate, gamma)[0, 1]
    assert c > 0.9
    assert abs(float(eff.estimate.sum())) < 1e-8
    slope = dict((n_, e) for n_, e, _ in fit.coefficients)["x"]
    assert abs(slope - 0.8) < 0.15


def test_ridge_shrinkage_is_monotone_in_lambda():
    rng = np.random.default_rng(13)
    n = 32
    grp = [f"g{i % 4}" for i in range(n)]
    effects = {"g0": 2.0, "g1": -1.0, "g2": 0.5, "g3": -1.5}
    y = np.array([effects[g] for g in grp]) + rng.normal(scale=0.4, size=n)
    table = {"y": list(y), "grp": grp}
    blocks, resp, off = build_design(parse_formula("y ~ s(grp, bs='re')"), table)
    norms = []
    for lam in (0.01, 1.0, 100.0, 1e4):
        fit = pirls_fit(blocks, resp, off, "gaussian", [lam])
        eff = term_predictions(fit, blocks)[0]
        norms.append(float(np.linalg.norm(eff.estimate)))
    assert all(a > b for a, b in zip(norms, norms[1:]))


def test_rank_reduction_limits():
    rng = np.random.default_rng(29)
    nb = grid_nb(3, 3)
    units = [u for u in nb.names for _ in range(2)]
    x = rng.normal(size=18)
    y = rng.normal(size=18) + x
    table = {"y": list(y), "x": list(x), "g": units}

    full_blocks, resp, off = build_design(parse_formula("y ~ x + s(g, bs='mrf')"), table, nb)
    red_blocks, _, _ = build_design(parse_formula("y ~ x + s(g, bs='mrf', k=9)"), table, nb)
    fit_full = pirls_fit(full_blocks, resp, off, "gaussian", [5.0])
    fit_red = pirls_fit(red_blocks, resp, off, "gaussian", [5.0])
    assert np.allclose(fit_full.fitted, fit_red.fitted, atol=1e-8)
    assert math.isclose(fit_full.edf_total, fit_red.edf_total, abs_tol=1e-8)
    ef = term_predictions(fit_full, full_blocks)[0]
    er = term_predictions(fit_red, red_blocks)[0]
    assert np.allclose(ef.estimate, er.estimate, atol=1e-8)
    assert np.allclose(ef.se, er.se, atol=1e-8)

    # k equal to the component count leaves no free coefficients
    min_blocks, _, _ = build_design(parse_formula("y ~ x + s(g, bs='mrf', k=1)"), table, nb)
    fit_min = pirls_fit(min_blocks, resp, off, "gaussian", [5.0])
    em = term_predictions(fit_min, min_blocks)[0]
    assert em.estimate.shape == (9,)
    assert float(np.max(np.abs(em.estimate))) == 0.0
    assert float(np.max(np.abs(em.se))) == 0.0


def test_penalized_deviance_never_increases():
    rng = np.random.default_rng(31)
    for _ in range(30):
        n_grp = int(rng.integers(3, 6))
        reps = int(rng.integers(2, 5))
        n = n_grp * reps
        grp = [f"g{i % n_grp}" for i in range(n)]
        x = rng.normal(size=n)
        mu = np.exp(0.5 + 0.4 * x + rng.normal(scale=0.5, size=n))
        y = rng.poisson(mu)
        table = {"y": [int(v) for v in y], "x": list(x), "grp": grp}
        blocks, resp, off = build_design(parse_formula("y ~ x + s(grp, bs='re')"), table)
        lam = float(10.0 ** rng.uniform(-2, 3))
        fit = pirls_fit(blocks, resp, off, "poisson", [lam])
        assert fit.converged and fit.iterations <= 100
        trace = fit.pdev_trace
        for a, b in zip(trace, trace[1:]):
            assert b <= a + 1e-12 * (1.0 + abs(a))


def test_edf_partition_and_bounds():
    rng = np.random.default_rng(37)
    nb = path_nb(6)
    units = [u for u in nb.names for _ in range(3)]
    grp = [f"h{i % 3}" for i in range(18)]
    x = rng.normal(size=18)
    y = rng.normal(size=18)
    table = {"y": list(y), "x": list(x), "unit": units, "grp": grp}
    blocks, resp, off = build_design(
        parse_formula("y ~ x + s(grp, bs='re') + s(unit, bs='mrf')"), table, nb
    )
    fit = pirls_fit(blocks, resp, off, "gaussian", [2.0, 7.0])
    assert math.isclose(sum(fit.edf_blocks), fit.edf_total, abs_tol=1e-10)
    for b, edf in zip(blocks, fit.edf_blocks):
        assert -1e-8 <= edf <= b.ncols + 1e-8
    assert fit.edf_total <= sum(b.ncols for b in blocks) + 1e-8
    assert fit.edf_total >= 2.0 - 1e-8  # at least the unpenalized parameters


def test_fitted_rates_reconstruct_from_parts():
    rng = np.random.default_rng(43)
    nb = path_nb(4)
    reps = 5
    units = [u for u in nb.names for _ in range(reps)]
    area = rng.uniform(0.5, 2.0, size=4 * reps)
    x = rng.normal(size=4 * reps)
    y = rng.poisson(np.exp(0.8 + 0.3 * x) * area)
    table = {
        "y": [int(v) for v in y],
        "x": list(x),
        "unit": units,
        "area": list(area),
    }
    fit = fit_model(
        table, "y ~ x + s(unit, bs='mrf') + offset(log(area))", family="poisson", nb=nb
    )
    coef = {name: est for name, est, _ in fit.coefficients}
    gamma = dict(zip(fit.term_effects[0].levels, fit.term_effects[0].estimate))
    mu = np.array(
        [
            math.exp(coef["(Intercept)"] + coef["x"] * x[i] + gamma[units[i]]) * area[i]
            for i in range(len(units))
        ]
    )
    assert np.allclose(mu, fit.fitted, rtol=1e-10)


def test_disconnected_structure_warns_and_centres_per_component():
    nb = nb_from_edges(["a", "b", "c", "d", "e"], [(1, 2), (2, 3), (4, 5)])
    rng = np.random.default_rng(47)
    units = [u for u in nb.names for _ in range(3)]
    y = rng.normal(size=15) + np.repeat([1.0, 2.0, 3.0, -2.0, -4.0], 3)
    table = {"y": list(y), "unit": units}
    with pytest.warns(UserWarning, match="connected components"):
        blocks, resp, off = build_design(parse_formula("y ~ s(unit, bs='mrf')"), table, nb)
    fit = pirls_fit(blocks, resp, off, "gaussian", [1.0])
    eff = term_predictions(fit, blocks)[0]
    est = dict(zip(eff.levels, eff.estimate))
    assert abs(est["a"] + est["b"] + est["c"]) < 1e-10
    assert abs(est["d"] + est["e"]) < 1e-10
    assert float(np.std(list(est.values()))) > 0.1


def test_summary_serialization_round_trip():
    rng = np.random.default_rng(53)
    nb = path_nb(5)
    units = [u for u in nb.names for _ in range(4)]
    y = rng.poisson(4.0, size=20)
    table = {"y": [int(v) for v in y], "unit": units}
    fit = fit_model(table, "y ~ s(unit, bs='mrf')", family="poisson", nb=nb)

    obj = summary_json(fit)
    text = json.dumps(obj)
    back = json.loads(text)
    for key in (
        "family",
        "formula",
        "coefficients",
        "terms",
        "deviance",
        "null_deviance",
        "deviance_explained",
        "aic",
        "converged",
        "predictions",
    ):
        assert key in back
    assert back["family"] == "poisson"
    assert back["formula"] == "y ~ s(unit, bs='mrf')"
    assert back["terms"][0]["label"] == "mrf.smooth.unit"
    assert back["deviance_explained"] <= 1.0
    assert math.isclose(back["aic"], back["deviance"] + 2.0 * fit.edf_total, rel_tol=1e-12)

    rebuilt = predictions_from_json(back)
    assert rebuilt[0].name == fit.term_effects[0].name
    assert rebuilt[0].levels == fit.term_effects[0].levels
    assert np.allclose(rebuilt[0].estimate, fit.term_effects[0].estimate)
    assert np.allclose(rebuilt[0].se, fit.term_effects[0].se)


def test_design_and_data_errors():
    nb = path_nb(3)
    table = {"y": [1.0, 2.0, 3.0], "x": [0.1, 0.2, 0.3], "unit": ["u1", "u2", "u3"]}

    with pytest.raises(FitError, match="response variable 'z'"):
        build_design(parse_formula("z ~ x"), table)
    with pytest.raises(FitError, match="not numeric"):
        build_design(parse_formula("y ~ unit"), table)
    with pytest.raises(FitError, match="needs a neighbourhood structure"):
        build_design(parse_formula("y ~ s(unit, bs='mrf')"), table)

    bad = dict(table)
    bad["unit"] = ["u1", "u2", "XX"]
    with pytest.raises(FitError, match=r"extras: \['XX'\], missing: \['u3'\]"):
        build_design(parse_formula("y ~ s(unit, bs='mrf')"), bad, nb)

    neg = dict(table)
    neg["area"] = [1.0, 0.0, 2.0]
    with pytest.raises(FitError, match=r"offset\(log\(area\)\).*rows \[2\]"):
        build_design(parse_formula("y ~ offset(log(area))"), neg)

    blocks, resp, off = build_design(parse_formula("y ~ x"), table)
    with pytest.raises(FitError, match="non-negative integers"):
        pirls_fit(blocks, np.array([0.5, 1.0, 2.0]), off, "poisson", [])
    with pytest.raises(FitError, match="unknown family"):
        pirls_fit(blocks, resp, off, "binomial", [])
    with pytest.raises(FitError, match="for 0 penalized blocks"):
        pirls_fit(blocks, resp, off, "gaussian", [1.0])
    with pytest.raises(FitError, match="at least one penalized block"):
        select_lambdas(blocks, resp, off, "gaussian")

    dup = {"y": [1.0, 2.0, 3.0, 4.0], "x1": [1.0, 2.0, 3.0, 4.0], "x2": [2.0, 4.0, 6.0, 8.0]}
    dblocks, dresp, doff = build_design(parse_formula("y ~ x1 + x2"), dup)
    with pytest.raises(FitError, match="singular penalized system.*fixed"):
        pirls_fit(dblocks, dresp, doff, "gaussian", [])

    with pytest.raises(FitError, match="non-negative"):
        blocks2, resp2, off2 = build_design(
            parse_formula("y ~ s(unit, bs='mrf')"), table, nb
        )
        pirls_fit(blocks2, resp2, off2, "gaussian", [-1.0])


def test_selection_error_when_criterion_cannot_be_evaluated():
    # two observations, two unpenalized coefficients: no residual degrees of freedom
    nb = path_nb(2)
    table = {"y": [1.0, 2.0], "x": [0.3, 0.9], "unit": ["u1", "u2"]}
    blocks, resp, off = build_design(parse_formula("y ~ x + s(unit, bs='mrf')"), table, nb)
    with pytest.raises(FitError, match="non-finite across the whole search range"):
        select_lambdas(blocks, resp, off, "gaussian")
