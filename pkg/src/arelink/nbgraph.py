"""Neighbourhood structures: queen contiguity with island bridging, audits, edits, serialization.

Positions are 1-based everywhere a user sees them; adjacency lists are sorted
ascending. Structures are immutable values — every edit returns a new one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

from .geom import DEFAULT_TOL, AreaCollection, knn_units, queen_contiguous, centroid


class NbError(ValueError):
    """Invalid neighbourhood structure or edit."""


@dataclass(frozen=True)
class InducedLink:
    """One island-to-neighbour link that was added rather than observed."""

    island_names: str
    island_num: int
    nb_num: int
    nb_names: str

    def as_dict(self) -> dict[str, Any]:
        return {
            "island_names": self.island_names,
            "island_num": self.island_num,
            "nb_num": self.nb_num,
            "nb_names": self.nb_names,
        }


@dataclass(frozen=True)
class NbStructure:
    """Named symmetric adjacency over units, with a record of induced links."""

    names: tuple[str, ...]
    adj: tuple[tuple[int, ...], ...]
    induced: tuple[InducedLink, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.names)
        if len(set(self.names)) != n:
            raise NbError("unit names must be unique")
        if len(self.adj) != n:
            raise NbError(f"adjacency has {len(self.adj)} rows for {n} names")
        for i, row in enumerate(self.adj, start=1):
            if list(row) != sorted(set(row)):
                raise NbError(f"adjacency of {self.names[i - 1]!r} must be sorted and duplicate-free")
            for j in row:
                if not 1 <= j <= n:
                    raise NbError(f"neighbour position {j} of {self.names[i - 1]!r} outside 1..{n}")
                if j == i:
                    raise NbError(f"{self.names[i - 1]!r} listed as its own neighbour")
                if i not in self.adj[j - 1]:
                    raise NbError(f"asymmetric link: {i}->{j} present, {j}->{i} missing")
        for link in self.induced:
            if link.nb_num not in self.adj[link.island_num - 1]:
                raise NbError(f"induced link {link.island_names}->{link.nb_names} not present in adjacency")

    def __len__(self) -> int:
        return len(self.names)

    @property
    def n(self) -> int:
        return len(self.names)

    def resolve(self, ref: str | int) -> int:
        """1-based position for a name or (already 1-based) position."""
        if isinstance(ref, str):
            try:
                return self.names.index(ref) + 1
            except ValueError:
                raise NbError(f"unknown unit name {ref!r}") from None
        pos = int(ref)
        if not 1 <= pos <= self.n:
            raise NbError(f"position {pos} out of range 1..{self.n}")
        return pos

    def neighbours(self, ref: str | int) -> tuple[int, ...]:
        return self.adj[self.resolve(ref) - 1]

    def as_dict(self) -> dict[str, list[int]]:
        """Name -> sorted neighbour positions, the printable list view."""
        return {name: list(row) for name, row in zip(self.names, self.adj)}

    def matrix(self) -> np.ndarray:
        """Binary symmetric 0/1 matrix in collection order."""
        m = np.zeros((self.n, self.n), dtype=int)
        for i, row in enumerate(self.adj):
            for j in row:
                m[i, j - 1] = 1
        return m

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges as (i, j) with i < j, lexicographic order."""
        return [(i, j) for i, row in enumerate(self.adj, start=1) for j in row if i < j]

    def has_edge(self, a: str | int, b: str | int) -> bool:
        return self.resolve(b) in self.adj[self.resolve(a) - 1]

    def neighbour_counts(self) -> tuple[int, ...]:
        return tuple(len(row) for row in self.adj)


@dataclass(frozen=True)
class IslandAudit:
    """The induced links of a structure, one row per island->neighbour link."""

    rows: tuple[InducedLink, ...]

    COLUMNS = ("island_names", "island_num", "nb_num", "nb_names")

    def table(self) -> dict[str, list[Any]]:
        return {col: [getattr(r, col) for r in self.rows] for col in self.COLUMNS}

    def to_text(self) -> str:
        """Aligned fixed-width rendering, header first."""
        cols = [list(self.COLUMNS)] + [
            [r.island_names, str(r.island_num), str(r.nb_num), r.nb_names] for r in self.rows
        ]
        widths = [max(len(row[c]) for row in cols) for c in range(4)]
        lines = ["  ".join(row[c].ljust(widths[c]) for c in range(4)).rstrip() for row in cols]
        return "\n".join(lines)

    def as_list(self) -> list[dict[str, Any]]:
        return [r.as_dict() for r in self.rows]


def _rekey(coll: AreaCollection, name_field: str) -> AreaCollection:
    names = []
    for i, u in enumerate(coll.units):
        val = u.attrs.get(name_field)
        if val in (None, ""):
            raise NbError(f"unit at position {i + 1} has no {name_field!r} value")
        names.append(str(val))
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise NbError(f"duplicate {name_field!r} values: {dupes}")
    return AreaCollection(tuple(replace(u, name=nm) for u, nm in zip(coll.units, names)))


def st_bridges(
    coll: AreaCollection,
    name_field: str | None = None,
    link_islands_k: int = 1,
    remove_islands: bool = False,
    add_to_dataframe: bool = True,
    tol: float = DEFAULT_TOL,
) -> AreaCollection | NbStructure:
    """Queen contiguity over the collection, with islands bridged or removed.

    Non-island units are joined by first-order queen contiguity. Units left
    without any contiguity ("islands") either get symmetric links to their
    ``link_islands_k`` nearest units by boundary distance — each recorded as an
    induced link — or, with ``remove_islands``, are dropped from both the
    collection and the structure. ``name_field`` re-keys units by an attribute
    column; by default the units' existing names are used.

    Returns the collection with the structure attached (``add_to_dataframe``,
    the default), or the bare NbStructure.
    """
    n = len(coll)
    if n == 0:
        raise NbError("collection is empty")
    if name_field is not None:
        coll = _rekey(coll, name_field)
    if not remove_islands and not 1 <= link_islands_k <= n - 1:
        raise NbError(f"link_islands_k={link_islands_k} out of range 1..{n - 1}")

    units = coll.units
    adj: list[set[int]] = [set() for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if queen_contiguous(units[i], units[j], tol):
                adj[i].add(j + 1)
                adj[j].add(i + 1)
    islands = [i for i in range(n) if not adj[i]]

    if remove_islands:
        if islands:
            keep = [i for i in range(n) if adj[i]]
            if len(keep) < 2:
                raise NbError(f"removing islands leaves {len(keep)} unit(s); need at least 2")
            remap = {old + 1: new + 1 for new, old in enumerate(keep)}
            adj = [{remap[j] for j in adj[i]} for i in keep]
            coll = AreaCollection(tuple(units[i] for i in keep))
        induced: list[InducedLink] = []
    else:
        induced = []
        for i in islands:
            for target in knn_units(coll, units[i].name, link_islands_k, metric="boundary"):
                t = coll.position(target) - 1
                adj[i].add(t + 1)
                adj[t].add(i + 1)
                induced.append(InducedLink(units[i].name, i + 1, t + 1, units[t].name))
        induced.sort(key=lambda r: (r.island_num, r.nb_num))

    nb = NbStructure(
        names=coll.names,
        adj=tuple(tuple(sorted(s)) for s in adj),
        induced=tuple(induced),
    )
    return coll.with_nb(nb) if add_to_dataframe else nb


def dist_band(coll: AreaCollection, threshold: float) -> NbStructure:
    """Link every pair of units whose centroids lie within ``threshold``."""
    if len(coll) == 0:
        raise NbError("collection is empty")
    if threshold <= 0:
        raise NbError(f"threshold must be positive, got {threshold}")
    cents = [centroid(u) for u in coll.units]
    n = len(coll)
    adj: list[set[int]] = [set() for _ in range(n)]
    for i in range(n):
        xi, yi = cents[i]
        for j in range(i + 1, n):
            xj, yj = cents[j]
            if ((xi - xj) ** 2 + (yi - yj) ** 2) ** 0.5 <= threshold:
                adj[i].add(j + 1)
                adj[j].add(i + 1)
    return NbStructure(coll.names, tuple(tuple(sorted(s)) for s in adj))


def check_islands(nb: NbStructure) -> IslandAudit:
    """Audit of links not arising from contiguity, ordered by island position."""
    return IslandAudit(rows=tuple(sorted(nb.induced, key=lambda r: (r.island_num, r.nb_num))))


def _resolve_pair(nb: NbStructure, a: str | int, b: str | int) -> tuple[int, int]:
    i, j = nb.resolve(a), nb.resolve(b)
    if i == j:
        raise NbError(f"{nb.names[i - 1]!r}: a unit cannot neighbour itself")
    return i, j


def manual_join(nb: NbStructure, a: str | int, b: str | int) -> NbStructure:
    """Add the symmetric edge {a, b}; joining an existing edge is a no-op."""
    i, j = _resolve_pair(nb, a, b)
    if j in nb.adj[i - 1]:
        return nb
    rows = [list(row) for row in nb.adj]
    rows[i - 1] = sorted(rows[i - 1] + [j])
    rows[j - 1] = sorted(rows[j - 1] + [i])
    return replace(nb, adj=tuple(tuple(r) for r in rows))


def manual_cut(nb: NbStructure, a: str | int, b: str | int) -> NbStructure:
    """Remove the symmetric edge {a, b}; cutting an absent edge is an error."""
    i, j = _resolve_pair(nb, a, b)
    if j not in nb.adj[i - 1]:
        raise NbError(f"no edge between {nb.names[i - 1]!r} and {nb.names[j - 1]!r} to cut")
    rows = [list(row) for row in nb.adj]
    rows[i - 1].remove(j)
    rows[j - 1].remove(i)
    kept = tuple(r for r in nb.induced if {r.island_num, r.nb_num} != {i, j})
    return NbStructure(nb.names, tuple(tuple(r) for r in rows), kept)


def components(nb: NbStructure) -> tuple[tuple[int, ...], ...]:
    """Connected components as sorted tuples of 1-based positions."""
    seen: set[int] = set()
    out: list[tuple[int, ...]] = []
    for start in range(1, nb.n + 1):
        if start in seen:
            continue
        comp, stack = [], [start]
        seen.add(start)
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in nb.adj[i - 1]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        out.append(tuple(sorted(comp)))
    return tuple(out)


# -- serialization ------------------------------------------------------------

def export(nb: NbStructure, format: str = "json") -> bytes:
    """Serialize to GAL, CSV matrix, or JSON {names, adj, induced}."""
    if format == "json":
        return json.dumps(to_json_obj(nb)).encode()
    if format == "gal":
        for name in nb.names:
            if any(ch.isspace() for ch in name):
                raise NbError(f"GAL is whitespace-delimited; name {name!r} cannot be written")
        lines = [f"0 {nb.n} arelink name"]
        for name, row in zip(nb.names, nb.adj):
            lines.append(f"{name} {len(row)}")
            lines.append(" ".join(nb.names[j - 1] for j in row))
        return ("\n".join(lines) + "\n").encode()
    if format == "matrix-csv":
        lines = [",".join(nb.names)]
        for row in nb.matrix():
            lines.append(",".join(str(v) for v in row))
        return ("\n".join(lines) + "\n").encode()
    raise NbError(f"unknown export format {format!r}")


def to_json_obj(nb: NbStructure) -> dict[str, Any]:
    return {
        "names": list(nb.names),
        "adj": [list(row) for row in nb.adj],
        "induced": [r.as_dict() for r in nb.induced],
    }


def import_nb(data: bytes | str, format: str = "json") -> NbStructure:
    """Inverse of export for the json and gal formats."""
    text = data.decode() if isinstance(data, bytes) else data
    if format == "json":
        obj = json.loads(text)
        induced = tuple(
            InducedLink(r["island_names"], int(r["island_num"]), int(r["nb_num"]), r["nb_names"])
            for r in obj.get("induced", [])
        )
        return NbStructure(
            names=tuple(obj["names"]),
            adj=tuple(tuple(int(j) for j in row) for row in obj["adj"]),
            induced=induced,
        )
    if format == "gal":
        lines = text.splitlines()
        if not lines:
            raise NbError("empty GAL document")
        head = lines[0].split()
        n = int(head[1]) if len(head) >= 2 else int(head[0])
        names: list[str] = []
        neigh_names: list[list[str]] = []
        at = 1
        for _ in range(n):
            name, count = lines[at].rsplit(None, 1)
            row = lines[at + 1].split() if int(count) else []
            if len(row) != int(count):
                raise NbError(f"GAL row for {name!r} promises {count} neighbours, lists {len(row)}")
            names.append(name)
            neigh_names.append(row)
            at += 2
        index = {nm: i + 1 for i, nm in enumerate(names)}
        adj = tuple(tuple(sorted(index[nm] for nm in row)) for row in neigh_names)
        return NbStructure(tuple(names), adj)
    raise NbError(f"unknown import format {format!r}")


def nb_from_edges(names: Sequence[str], edges: Sequence[tuple[int, int]]) -> NbStructure:
    """Build a structure from 1-based undirected edge pairs; handy in tests and simulations."""
    n = len(names)
    rows: list[set[int]] = [set() for _ in range(n)]
    for i, j in edges:
        rows[i - 1].add(j)
        rows[j - 1].add(i)
    return NbStructure(tuple(names), tuple(tuple(sorted(r)) for r in rows))
