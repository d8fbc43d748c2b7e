"""ICAR mathematics: precision matrices, identifiability constraints, reduced-rank bases.

The precision P has the unit's neighbour count on the diagonal and -1 where two
units are neighbours. P is improper — constant vectors on each connected
component lie in its null space — so effects are estimated in a constraint
space Z orthogonal to every component's indicator vector (one sum-to-zero
constraint per component). The constrained penalty Z'PZ is strictly positive
definite, and an optional eigen-truncation keeps only its smoothest directions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse

from .nbgraph import NbStructure, components as nb_components


class MrfError(ValueError):
    """Invalid precision construction or rank reduction."""


def _helmert_columns(n: int, comps: tuple[tuple[int, ...], ...]) -> np.ndarray:
    """Orthonormal columns spanning {x : x sums to 0 on every component}.

    For a component of size m the m-1 normalized Helmert contrasts are used;
    disjoint supports make columns of different components orthogonal for free.
    """
    cols = []
    for comp in comps:
        idx = [p - 1 for p in comp]
        for j in range(1, len(comp)):
            col = np.zeros(n)
            col[idx[:j]] = 1.0
            col[idx[j]] = -float(j)
            cols.append(col / np.sqrt(j * (j + 1)))
    if not cols:
        return np.zeros((n, 0))
    return np.column_stack(cols)


@dataclass(frozen=True, eq=False)
class PrecisionSpec:
    """ICAR precision plus everything needed to use it as a smooth-term penalty.

    basis maps the q free coefficients back to one value per unit; penalty is
    the q×q matrix the fitter multiplies by lambda. For the full-rank case
    basis = Z and penalty = Z'PZ; after rank reduction the basis is rotated
    into the penalty's eigenvectors and the penalty is diagonal.
    """

    P: sparse.csr_array
    v: np.ndarray
    components: tuple[tuple[int, ...], ...]
    Z: np.ndarray
    basis: np.ndarray
    penalty: np.ndarray
    reduced_rank: int | None = None

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def q(self) -> int:
        """Number of free coefficients."""
        return self.basis.shape[1]


def icar_precision(nb: NbStructure) -> PrecisionSpec:
    """Precision matrix, components, and constraint basis for a structure."""
    n = nb.n
    if n < 2:
        raise MrfError(f"need at least 2 units for an ICAR precision, got {n}")
    v = np.array(nb.neighbour_counts(), dtype=float)
    rows, cols, vals = [], [], []
    for i in range(n):
        rows.append(i)
        cols.append(i)
        vals.append(v[i])
        for j in nb.adj[i]:
            rows.append(i)
            cols.append(j - 1)
            vals.append(-1.0)
    P = sparse.csr_array((vals, (rows, cols)), shape=(n, n))
    comps = nb_components(nb)
    Z = _helmert_columns(n, comps)
    S = Z.T @ (P @ Z)
    S = (S + S.T) / 2  # exact symmetry against round-off
    return PrecisionSpec(P=P, v=v, components=comps, Z=Z, basis=Z, penalty=S, reduced_rank=None)


def rank_reduce(spec: PrecisionSpec, k: int) -> PrecisionSpec:
    """Restrict the basis to the k-c smoothest directions of the constrained penalty.

    k counts like a basis dimension including the c constrained-out constants:
    k = n reproduces the full model, k = c leaves no free coefficients.
    """
    c, n = spec.n_components, spec.n
    if not c <= k <= n:
        raise MrfError(f"k={k} out of range: need components ({c}) <= k <= units ({n})")
    S = spec.Z.T @ (spec.P @ spec.Z)
    S = (S + S.T) / 2
    w, U = np.linalg.eigh(S)  # ascending eigenvalues, all > 0 here
    q = k - c
    return replace(
        spec,
        basis=spec.Z @ U[:, :q],
        penalty=np.diag(w[:q]),
        reduced_rank=k,
    )


def export_triplets(spec: PrecisionSpec) -> bytes:
    """Debug dump of P as '<i> <j> <value>' lines, 1-based, row-major."""
    coo = spec.P.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{coo.row[t] + 1} {coo.col[t] + 1} {coo.data[t]:.17g}" for t in order]
    return ("\n".join(lines) + "\n").encode()
