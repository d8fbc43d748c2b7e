"""Penalized-likelihood engine: design blocks, penalized IRLS, smoothing selection.

Fits Gaussian (identity link) and Poisson (log link) models with an additive
offset. Random-effect terms carry an identity (ridge) penalty; MRF terms carry
the constrained ICAR precision. Smoothing parameters are chosen by minimizing a
restricted-likelihood criterion — exact for Gaussian, Laplace-approximate for
Poisson — with a coordinate-wise golden-section search.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg as sla

from .formula import ModelSpec
from .mrf import icar_precision, rank_reduce
from .nbgraph import NbStructure


class FitError(ValueError):
    """Invalid design, data, or an unsolvable penalized system."""


LOG_LAMBDA_LO = -4.0
LOG_LAMBDA_HI = 8.0
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100


@dataclass(eq=False)
class TermBlock:
    """One design block: columns, optional penalty, and level bookkeeping.

    level_basis maps coefficients to one displayed value per level; None means
    the coefficients are the level values themselves (re blocks).
    """

    kind: str  # fixed | re_intercept | re_slope | mrf_intercept | mrf_slope
    name: str  # prediction column name, e.g. "mrf.smooth.province"
    columns: np.ndarray
    penalty: np.ndarray | None
    labels: tuple[str, ...]
    lam: float = 1.0
    group: str = ""
    level_names: tuple[str, ...] = ()
    level_basis: np.ndarray | None = None

    @property
    def ncols(self) -> int:
        return self.columns.shape[1]

    @property
    def penalized(self) -> bool:
        return self.penalty is not None


@dataclass(eq=False)
class TermPrediction:
    """Per-level effect of one penalized term."""

    name: str
    kind: str
    group: str
    levels: tuple[str, ...]
    estimate: np.ndarray
    se: np.ndarray


@dataclass(eq=False)
class FitResult:
    beta: np.ndarray
    cov: np.ndarray
    lambdas: tuple[float, ...]
    edf_blocks: tuple[float, ...]
    edf_total: float
    deviance: float
    null_deviance: float
    aic: float
    scale: float
    iterations: int
    converged: bool
    family: str
    fitted: np.ndarray
    slices: tuple[slice, ...]
    pdev_trace: tuple[float, ...]
    # scalars the smoothing criterion needs
    n_obs: int = 0
    m_unpenalized: int = 0
    penalty_quad: float = 0.0
    hess_logdet: float = 0.0
    # filled by fit_model for downstream consumers
    formula: str = ""
    coefficients: tuple[tuple[str, float, float], ...] = ()
    terms: tuple[tuple[str, float, float], ...] = ()  # (label, edf, lambda)
    term_effects: tuple[TermPrediction, ...] = ()

    @property
    def deviance_explained(self) -> float:
        if self.null_deviance <= 0:
            return 1.0 if self.deviance <= 1e-300 else 1.0 - self.deviance / 1e-300
        return 1.0 - self.deviance / self.null_deviance


# -- data access -----------------------------------------------------------------

def _as_table(data) -> dict[str, list]:
    if hasattr(data, "table"):
        return data.table()
    return dict(data)


def _table_length(table: dict[str, list]) -> int:
    if not table:
        raise FitError("data table is empty")
    return len(next(iter(table.values())))


def _numeric_column(table, name, what) -> np.ndarray:
    if name not in table:
        raise FitError(f"{what} variable {name!r} not found in data")
    vals = table[name]
    bad = [
        i
        for i, v in enumerate(vals)
        if isinstance(v, bool)
        or not isinstance(v, (int, float))
        or not math.isfinite(float(v))
    ]
    if bad:
        raise FitError(f"{what} variable {name!r} is not numeric at rows {bad[:10]} (1-based: {[b + 1 for b in bad[:10]]})")
    return np.array([float(v) for v in vals])


def _group_column(table, name) -> list[str]:
    if name not in table:
        raise FitError(f"grouping variable {name!r} not found in data")
    vals = table[name]
    bad = [i for i, v in enumerate(vals) if v is None or v == ""]
    if bad:
        raise FitError(f"grouping variable {name!r} is missing at rows {bad[:10]}")
    return [str(v) for v in vals]


# -- design assembly ---------------------------------------------------------------

def _indicator(values: list[str], levels: tuple[str, ...]) -> np.ndarray:
    pos = {lv: i for i, lv in enumerate(levels)}
    M = np.zeros((len(values), len(levels)))
    for r, v in enumerate(values):
        M[r, pos[v]] = 1.0
    return M


def _mrf_block(kind, name, group, by, table, nb, k) -> TermBlock:
    group_vals = _group_column(table, group)
    if nb is None:
        raise FitError(f"term {name!r} needs a neighbourhood structure")
    have = set(group_vals)
    want = set(nb.names)
    extras = sorted(have - want)
    missing = sorted(want - have)
    if extras or missing:
        raise FitError(
            f"mrf term {name!r}: group levels must equal the structure's names "
            f"(extras: {extras[:8]}, missing: {missing[:8]})"
        )
    pspec = icar_precision(nb)
    if len(pspec.components) > 1:
        comps = [tuple(c) for c in pspec.components]
        warnings.warn(
            f"structure for {name!r} has {len(comps)} connected components {comps}; "
            "effects are centred within each component",
            stacklevel=3,
        )
    if k is not None:
        pspec = rank_reduce(pspec, k)
    incidence = _indicator(group_vals, nb.names)
    cols = incidence @ pspec.basis
    if by is not None:
        cols = cols * _numeric_column(table, by, "by")[:, None]
    return TermBlock(
        kind=kind,
        name=name,
        columns=cols,
        penalty=pspec.penalty,
        labels=tuple(f"{name}.{i + 1}" for i in range(cols.shape[1])),
        group=group,
        level_names=nb.names,
        level_basis=pspec.basis,
    )


def build_design(
    spec: ModelSpec, data, nb: NbStructure | None = None
) -> tuple[list[TermBlock], np.ndarray, np.ndarray]:
    """Design blocks, response vector, and offset vector for a model spec."""
    table = _as_table(data)
    n = _table_length(table)
    y = _numeric_column(table, spec.response, "response")

    cols = [np.ones((n, 1))]
    labels = ["(Intercept)"]
    for name in spec.fixed:
        cols.append(_numeric_column(table, name, "covariate")[:, None])
        labels.append(name)
    blocks = [
        TermBlock(
            kind="fixed",
            name="fixed",
            columns=np.hstack(cols),
            penalty=None,
            labels=tuple(labels),
        )
    ]

    for g in spec.re_intercepts:
        vals = _group_column(table, g)
        levels = tuple(sorted(set(vals)))
        blocks.append(
            TermBlock(
                kind="re_intercept",
                name=f"random.effect.{g}",
                columns=_indicator(vals, levels),
                penalty=np.eye(len(levels)),
                labels=levels,
                group=g,
                level_names=levels,
            )
        )
    for g, cov in spec.re_slopes:
        vals = _group_column(table, g)
        levels = tuple(sorted(set(vals)))
        x = _numeric_column(table, cov, "covariate")
        blocks.append(
            TermBlock(
                kind="re_slope",
                name=f"random.effect.{cov}|{g}",
                columns=_indicator(vals, levels) * x[:, None],
                penalty=np.eye(len(levels)),
                labels=levels,
                group=g,
                level_names=levels,
            )
        )
    for g, k in spec.mrf_intercepts:
        blocks.append(
            _mrf_block("mrf_intercept", f"mrf.smooth.{g}", g, None, table, nb, k)
        )
    for g, by, k in spec.mrf_slopes:
        blocks.append(
            _mrf_block("mrf_slope", f"mrf.smooth.{by}|{g}", g, by, table, nb, k)
        )

    if spec.offset is not None:
        var, logged = spec.offset
        off = _numeric_column(table, var, "offset")
        if logged:
            if np.any(off <= 0):
                bad = [int(i) + 1 for i in np.nonzero(off <= 0)[0][:10]]
                raise FitError(f"offset(log({var})): non-positive values at rows {bad}")
            off = np.log(off)
    else:
        off = np.zeros(n)
    return blocks, y, off


# -- families ------------------------------------------------------------------------

def _check_family(family: str) -> None:
    if family not in ("gaussian", "poisson"):
        raise FitError(f"unknown family {family!r}: expected 'gaussian' or 'poisson'")


def _poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2.0 * np.sum(term - (y - mu)))


def _null_deviance(y, offset, family) -> float:
    if family == "gaussian":
        b0 = float(np.mean(y - offset))
        return float(np.sum((y - offset - b0) ** 2))
    b0 = math.log(float(np.sum(y)) / float(np.sum(np.exp(offset))))
    return _poisson_deviance(y, np.exp(b0 + offset))


# -- solving ------------------------------------------------------------------------

def _solve_spd(A, rhs, blocks, slices):
    """Solve A x = rhs for symmetric positive definite A, naming culprits otherwise."""
    try:
        cf = sla.cho_factor(A, check_finite=False)
        return sla.cho_solve(cf, rhs, check_finite=False)
    except (np.linalg.LinAlgError, sla.LinAlgError):
        pass
    evals, vecs = np.linalg.eigh(A)
    tol = 1e-12 * max(1.0, float(evals[-1]))
    if evals[0] <= tol:
        culprits = []
        for b, sl in zip(blocks, slices):
            sub = A[sl, sl]
            if sub.size and np.linalg.eigvalsh(sub)[0] <= tol:
                culprits.append(b.name)
        what = ", ".join(culprits) if culprits else "cross-block collinearity"
        raise FitError(f"singular penalized system (deficient: {what})")
    warnings.warn("penalized system is ill-conditioned; solving by eigendecomposition", stacklevel=3)
    return vecs @ ((vecs.T @ rhs) / evals)


def _inverse_spd(A):
    try:
        cf = sla.cho_factor(A, check_finite=False)
        return sla.cho_solve(cf, np.eye(A.shape[0]), check_finite=False)
    except (np.linalg.LinAlgError, sla.LinAlgError):
        evals, vecs = np.linalg.eigh(A)
        evals = np.maximum(evals, 1e-12 * max(1.0, float(evals[-1])))
        return (vecs / evals) @ vecs.T


# -- the fitter -----------------------------------------------------------------------

def pirls_fit(
    blocks: list[TermBlock],
    y: np.ndarray,
    offset: np.ndarray | None = None,
    family: str = "gaussian",
    lambdas=None,
    max_iter: int = IRLS_MAX_ITER,
    tol: float = IRLS_TOL,
) -> FitResult:
    """Penalized IRLS at fixed smoothing parameters.

    ``lambdas`` aligns with the penalized blocks in order; omitted, each
    block's current ``lam`` is used. Step halving enforces a non-increasing
    penalized deviance, recorded per iteration in ``pdev_trace``.
    """
    _check_family(family)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    if family == "poisson":
        if np.any(y < 0) or not np.allclose(y, np.round(y)):
            raise FitError("poisson response must be non-negative integers")

    X = np.hstack([b.columns for b in blocks])
    p = X.shape[1]
    slices = []
    at = 0
    for b in blocks:
        slices.append(slice(at, at + b.ncols))
        at += b.ncols
    slices = tuple(slices)

    penalized = [(b, sl) for b, sl in zip(blocks, slices) if b.penalized]
    if lambdas is None:
        lambdas = [b.lam for b, _ in penalized]
    lambdas = [float(v) for v in lambdas]
    if len(lambdas) != len(penalized):
        raise FitError(f"got {len(lambdas)} lambdas for {len(penalized)} penalized blocks")
    if any(v < 0 for v in lambdas):
        raise FitError("smoothing parameters must be non-negative")

    S = np.zeros((p, p))
    for (b, sl), lam in zip(penalized, lambdas):
        if b.ncols:
            S[sl, sl] += lam * b.penalty

    if family == "gaussian":
        z = y - offset
        A = X.T @ X + S
        beta = _solve_spd(A, X.T @ z, blocks, slices)
        mu = X @ beta + offset
        W = np.ones(n)
        dev = float(np.sum((y - mu) ** 2))
        pdev_trace = [dev + float(beta @ S @ beta)]
        iterations, converged = 1, True
    else:
        beta = np.zeros(p)
        eta = offset.copy()
        mu = np.exp(np.clip(eta, -700, 700))
        dev = _poisson_deviance(y, mu)
        pdev = dev
        pdev_trace = [pdev]
        converged = False
        iterations = 0
        for it in range(1, max_iter + 1):
            iterations = it
            W = np.maximum(mu, 1e-10)
            zwork = (eta - offset) + (y - mu) / W
            A = X.T @ (W[:, None] * X) + S
            direction = _solve_spd(A, X.T @ (W * zwork), blocks, slices) - beta
            step = 1.0
            accepted = False
            for _ in range(31):
                cand = beta + step * direction
                eta_c = X @ cand + offset
                mu_c = np.exp(np.clip(eta_c, -700, 700))
                dev_c = _poisson_deviance(y, mu_c)
                pdev_c = dev_c + float(cand @ S @ cand)
                if math.isfinite(pdev_c) and pdev_c <= pdev + 1e-12 * (1.0 + abs(pdev)):
                    accepted = True
                    break
                step /= 2.0
            if not accepted:
                converged = True  # no descent direction left: at the optimum
                break
            delta = pdev - pdev_c
            beta, eta, mu, dev, pdev = cand, eta_c, mu_c, dev_c, pdev_c
            pdev_trace.append(pdev)
            if delta < tol * (abs(pdev) + 0.1):
                converged = True
                break
        W = np.maximum(mu, 1e-10)
        A = X.T @ (W[:, None] * X) + S

    XtWX = A - S
    Ainv = _inverse_spd(A)
    influence = Ainv @ XtWX
    edf_blocks = tuple(float(np.sum(np.diag(influence)[sl])) for sl in slices)
    edf_total = float(np.trace(influence))

    if family == "gaussian":
        rss = dev
        scale = rss / max(n - edf_total, 1e-8)
    else:
        scale = 1.0
    cov = Ainv * scale

    sign, logdet = np.linalg.slogdet(A)
    return FitResult(
        beta=beta,
        cov=cov,
        lambdas=tuple(lambdas),
        edf_blocks=edf_blocks,
        edf_total=edf_total,
        deviance=dev,
        null_deviance=_null_deviance(y, offset, family),
        aic=dev + 2.0 * edf_total,
        scale=scale,
        iterations=iterations,
        converged=converged,
        family=family,
        fitted=mu,
        slices=slices,
        pdev_trace=tuple(pdev_trace),
        n_obs=n,
        m_unpenalized=sum(b.ncols for b in blocks if not b.penalized),
        penalty_quad=float(beta @ S @ beta),
        hess_logdet=float(logdet) if sign > 0 else math.inf,
    )


# -- smoothing selection -----------------------------------------------------------------

def _penalty_logdets(blocks) -> dict[int, float]:
    out = {}
    for i, b in enumerate(blocks):
        if b.penalized and b.ncols:
            sign, val = np.linalg.slogdet(b.penalty)
            if sign <= 0:
                raise FitError(f"penalty of block {b.name!r} is not positive definite")
            out[i] = float(val)
    return out


def _reml_criterion(fit: FitResult, blocks, lambdas, logdets) -> float:
    log_s = 0.0
    li = 0
    for i, b in enumerate(blocks):
        if not b.penalized:
            continue
        lam = lambdas[li]
        li += 1
        if b.ncols == 0:
            continue
        if lam <= 0:
            return math.inf
        log_s += b.ncols * math.log(lam) + logdets[i]
    if not math.isfinite(fit.hess_logdet):
        return math.inf
    if fit.family == "gaussian":
        n_mp = fit.n_obs - fit.m_unpenalized
        d_p = fit.deviance + fit.penalty_quad
        if n_mp <= 0 or d_p <= 0:
            return math.inf
        phi = d_p / n_mp
        return n_mp * (math.log(2 * math.pi * phi) + 1.0) + fit.hess_logdet - log_s
    crit = fit.deviance + fit.penalty_quad + fit.hess_logdet - log_s
    return crit if math.isfinite(crit) else math.inf


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def select_lambdas(
    blocks: list[TermBlock],
    y: np.ndarray,
    offset: np.ndarray | None = None,
    family: str = "gaussian",
    sweeps: int = 3,
    tol: float = 1e-3,
) -> tuple[tuple[float, ...], FitResult]:
    """Coordinate-wise golden-section REML search over log10 lambda in [-4, 8]."""
    penalized_ix = [i for i, b in enumerate(blocks) if b.penalized]
    if not penalized_ix:
        raise FitError("smoothing selection needs at least one penalized block")
    free = [j for j, i in enumerate(penalized_ix) if blocks[i].ncols > 0]
    logdets = _penalty_logdets(blocks)

    cache: dict[tuple, tuple[float, FitResult]] = {}
    seen_finite = False

    def evaluate(logs: list[float]) -> tuple[float, FitResult]:
        nonlocal seen_finite
        key = tuple(round(v, 9) for v in logs)
        if key not in cache:
            lams = [10.0 ** v for v in logs]
            try:
                fit = pirls_fit(blocks, y, offset, family, lams)
                crit = _reml_criterion(fit, blocks, lams, logdets)
            except FitError:
                raise
            if not math.isfinite(crit):
                crit = math.inf
            cache[key] = (crit, fit)
        crit = cache[key][0]
        if math.isfinite(crit):
            seen_finite = True
        return cache[key]

    logs = [0.0] * len(penalized_ix)
    if free:
        for _ in range(sweeps):
            for j in free:
                def f(t: float) -> float:
                    probe = list(logs)
                    probe[j] = t
                    return evaluate(probe)[0]

                a, b = LOG_LAMBDA_LO, LOG_LAMBDA_HI
                c = b - _GOLDEN * (b - a)
                d = a + _GOLDEN * (b - a)
                fc, fd = f(c), f(d)
                while (b - a) > tol:
                    if fc < fd:
                        b, d, fd = d, c, fc
                        c = b - _GOLDEN * (b - a)
                        fc = f(c)
                    else:
                        a, c, fc = c, d, fd
                        d = a + _GOLDEN * (b - a)
                        fd = f(d)
                logs[j] = (a + b) / 2.0

    crit, fit = evaluate(logs)
    if not seen_finite or not math.isfinite(crit):
        # fall back: anywhere the search touched that was finite
        finite = [(c, k) for k, (c, _) in cache.items() if math.isfinite(c)]
        if not finite:
            raise FitError("smoothing criterion is non-finite across the whole search range")
        _, best_key = min(finite)
        crit, fit = cache[best_key]
        logs = list(best_key)
    return tuple(10.0 ** v for v in logs), fit


# -- per-term effects ------------------------------------------------------------------------

def term_predictions(fit: FitResult, blocks) -> list[TermPrediction]:
    """Per-level (estimate, se) for every penalized block, in block order."""
    out = []
    for b, sl in zip(blocks, fit.slices):
        if not b.penalized:
            continue
        beta_b = fit.beta[sl]
        cov_bb = fit.cov[sl, sl]
        if b.level_basis is None:
            est = beta_b.copy()
            se = np.sqrt(np.clip(np.diag(cov_bb), 0.0, None))
            levels = b.level_names or b.labels
        else:
            B = b.level_basis
            est = B @ beta_b
            se = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", B, cov_bb, B), 0.0, None))
            levels = b.level_names
        out.append(
            TermPrediction(
                name=b.name, kind=b.kind, group=b.group, levels=tuple(levels), estimate=est, se=se
            )
        )
    return out


# -- the one-call surface ---------------------------------------------------------------------

def fit_model(data, formula, family: str = "gaussian", nb: NbStructure | None = None) -> FitResult:
    """Parse, build the design, select smoothing, fit, and attach term effects."""
    from .formula import format_formula, parse_formula

    spec = parse_formula(formula) if isinstance(formula, str) else formula
    if family != spec.family:
        spec = replace(spec, family=family)
    _check_family(spec.family)
    if nb is None and hasattr(data, "nb"):
        nb = data.nb
    blocks, y, offset = build_design(spec, data, nb)

    if any(b.penalized and b.ncols > 0 for b in blocks):
        lambdas, fit = select_lambdas(blocks, y, offset, spec.family)
    else:
        n_pen = sum(1 for b in blocks if b.penalized)
        fit = pirls_fit(blocks, y, offset, spec.family, [1.0] * n_pen)

    fixed = blocks[0]
    fixed_sl = fit.slices[0]
    se_all = np.sqrt(np.clip(np.diag(fit.cov), 0.0, None))
    fit.formula = format_formula(spec)
    fit.coefficients = tuple(
        (name, float(fit.beta[fixed_sl][i]), float(se_all[fixed_sl][i]))
        for i, name in enumerate(fixed.labels)
    )
    lam_iter = iter(fit.lambdas)
    fit.terms = tuple(
        (b.name, fit.edf_blocks[bi], next(lam_iter))
        for bi, b in enumerate(blocks)
        if b.penalized
    )
    fit.term_effects = tuple(term_predictions(fit, blocks))
    return fit


def summary_json(fit: FitResult) -> dict:
    """The serialized fit summary exposed by the CLI and server."""
    return {
        "family": fit.family,
        "formula": fit.formula,
        "coefficients": [
            {"name": n, "estimate": est, "se": se} for n, est, se in fit.coefficients
        ],
        "terms": [
            {"label": label, "edf": edf, "lambda": lam} for label, edf, lam in fit.terms
        ],
        "deviance": fit.deviance,
        "null_deviance": fit.null_deviance,
        "deviance_explained": fit.deviance_explained,
        "aic": fit.aic,
        "scale": fit.scale,
        "edf_total": fit.edf_total,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "predictions": [
            {
                "name": t.name,
                "kind": t.kind,
                "group": t.group,
                "levels": list(t.levels),
                "estimate": [float(v) for v in t.estimate],
                "se": [float(v) for v in t.se],
            }
            for t in fit.term_effects
        ],
    }


def _group_from_name(name: str) -> str:
    base = name.removeprefix("random.effect.").removeprefix("mrf.smooth.")
    return base.rsplit("|", 1)[-1]


def predictions_from_json(obj: dict) -> tuple[TermPrediction, ...]:
    """Rebuild term effects from a serialized fit summary."""
    return tuple(
        TermPrediction(
            name=t["name"],
            kind=t["kind"],
            group=t.get("group") or _group_from_name(t["name"]),
            levels=tuple(t["levels"]),
            estimate=np.array(t["estimate"], dtype=float),
            se=np.array(t["se"], dtype=float),
        )
        for t in obj.get("predictions", [])
    )
