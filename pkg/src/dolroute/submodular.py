"""Decay-discounted coverage objectives over candidate routes.

Each candidate route is a walk over road-graph nodes.  The node set is split
into disjoint groups ``W_1..W_n`` and every group gets one basis function per
decay factor ``gamma_j``::

    f_ij(S) = sum_{a=1}^{psi_i(S)} gamma_j ** (a - 1)

where ``psi_i(S)`` counts how many distinct nodes of each selected route fall
in ``W_i`` (summed over the selected routes).  The objective is the weighted
sum ``f(S, w) = sum_ij w_ij f_ij(S)``; it is normalized, monotone and
submodular for ``w >= 0``.

Selections are sequences of route indices into the ground set.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

_NEAR_ONE = 1e-9


@dataclass(frozen=True)
class GroundSet:
    """Ordered candidate routes; ``ids`` are display labels."""

    routes: tuple[tuple[int, ...], ...]
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        routes = tuple(tuple(int(v) for v in r) for r in self.routes)
        object.__setattr__(self, "routes", routes)
        if not routes:
            raise ValueError("ground set must contain at least one route")
        ids = tuple(self.ids) if self.ids else tuple(f"r{k:02d}" for k in range(len(routes)))
        if len(ids) != len(routes):
            raise ValueError("one id per route required")
        if len(set(ids)) != len(ids):
            raise ValueError("route ids must be unique")
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return len(self.routes)

    def nodes(self) -> set[int]:
        return {v for r in self.routes for v in r}

    def to_dict(self):
        return {"ids": list(self.ids), "routes": [list(r) for r in self.routes]}

    @classmethod
    def from_dict(cls, d):
        return cls(routes=tuple(tuple(r) for r in d["routes"]), ids=tuple(d.get("ids", ())))


@dataclass(frozen=True)
class NodePartition:
    sets: tuple[frozenset[int], ...]

    def __post_init__(self):
        sets = tuple(frozenset(int(v) for v in s) for s in self.sets)
        object.__setattr__(self, "sets", sets)
        if not sets:
            raise ValueError("partition needs at least one set")
        seen: set[int] = set()
        for s in sets:
            if not s:
                raise ValueError("partition sets must be non-empty")
            if seen & s:
                raise ValueError("partition sets must be pairwise disjoint")
            seen |= s

    def __len__(self):
        return len(self.sets)

    def to_dict(self):
        return {"sets": [sorted(s) for s in self.sets]}

    @classmethod
    def from_dict(cls, d):
        return cls(sets=tuple(frozenset(s) for s in d["sets"]))


@dataclass(frozen=True)
class BasisFamily:
    gammas: tuple[float, ...]

    def __post_init__(self):
        g = tuple(float(x) for x in self.gammas)
        object.__setattr__(self, "gammas", g)
        if not g:
            raise ValueError("basis family needs at least one decay factor")
        for x in g:
            _check_gamma(x)
        if any(b <= a for a, b in zip(g, g[1:])):
            raise ValueError("decay factors must be strictly increasing")

    def __len__(self):
        return len(self.gammas)

    def to_dict(self):
        return {"gammas": list(self.gammas)}

    @classmethod
    def from_dict(cls, d):
        return cls(gammas=tuple(d["gammas"]))


def _check_gamma(gamma):
    if not (0.0 < gamma <= 1.0) or not math.isfinite(gamma):
        raise ValueError(f"decay factor must lie in (0, 1], got {gamma!r}")


def basis_value(psi: int, gamma: float) -> float:
    """Geometric partial sum ``1 + gamma + ... + gamma**(psi-1)``."""
    _check_gamma(gamma)
    if psi < 0:
        raise ValueError("coverage count must be non-negative")
    if psi == 0:
        return 0.0
    if gamma == 1.0:
        return float(psi)
    if abs(1.0 - gamma) <= _NEAR_ONE:
        return math.fsum(gamma**a for a in range(psi))
    # expm1/log1p keep full relative precision when gamma is close to 1
    return -math.expm1(psi * math.log1p(gamma - 1.0)) / (1.0 - gamma)


def basis_values(psi: np.ndarray, gammas: Sequence[float]) -> np.ndarray:
    """Vectorized :func:`basis_value`; output has a trailing axis over gammas."""
    psi = np.asarray(psi, dtype=float)
    out = np.empty(psi.shape + (len(gammas),))
    for j, g in enumerate(gammas):
        if g == 1.0:
            out[..., j] = psi
        elif abs(1.0 - g) <= _NEAR_ONE:
            flat = psi.ravel()
            out[..., j] = np.array([basis_value(int(p), g) for p in flat]).reshape(psi.shape)
        else:
            out[..., j] = -np.expm1(psi * math.log1p(g - 1.0)) / (1.0 - g)
    return out


def weight_matrix(w, partition: NodePartition, basis: BasisFamily) -> np.ndarray:
    """Validate and return a non-negative ``n x |Gamma|`` weight array."""
    w = np.asarray(w, dtype=float)
    if w.shape != (len(partition), len(basis)):
        raise ValueError(f"weight matrix shape {w.shape} != {(len(partition), len(basis))}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weight matrix has non-finite entries")
    if np.any(w < 0):
        raise ValueError("weight matrix entries must be non-negative")
    return w


def weights_to_csv(w) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in np.asarray(w, dtype=float):
        writer.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def weights_from_csv(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    return np.array([[float(x) for x in r] for r in rows])


class CoverageObjective:
    """``f(S, w)`` for a fixed ground set, partition and basis family.

    The per-route coverage counts are computed once, so ``psi(S)`` is a sum
    of integer rows and all marginal gains of a step come out of one
    vectorized evaluation.
    """

    def __init__(self, ground: GroundSet, partition: NodePartition, basis: BasisFamily):
        self.ground = ground
        self.partition = partition
        self.basis = basis
        owner = {}
        for i, s in enumerate(partition.sets):
            for v in s:
                owner[v] = i
        counts = np.zeros((len(ground), len(partition)), dtype=np.int64)
        for t, route in enumerate(ground.routes):
            for v in set(route):
                i = owner.get(v)
                if i is not None:
                    counts[t, i] += 1
        self.counts = counts
        self.gammas = basis.gammas

    @property
    def shape(self):
        return (len(self.partition), len(self.basis))

    def _check_selection(self, selection):
        n = len(self.ground)
        for t in selection:
            if not 0 <= t < n:
                raise IndexError(f"unknown route index {t}")
        if len(set(selection)) != len(selection):
            raise ValueError("selection contains duplicates")

    def psi(self, selection: Iterable[int]) -> np.ndarray:
        sel = list(selection)
        self._check_selection(sel)
        if not sel:
            return np.zeros(len(self.partition), dtype=np.int64)
        return self.counts[sel].sum(axis=0)

    def features(self, selection: Iterable[int]) -> np.ndarray:
        """Basis matrix ``F[i, j] = f_ij(S)``; ``f(S, w) = <F, w>``."""
        return basis_values(self.psi(selection), self.gammas)

    def value(self, selection: Iterable[int], w) -> float:
        return float(np.sum(self.features(selection) * w))

    def gain_features(self, selection: Sequence[int], candidates: Sequence[int]) -> np.ndarray:
        """Stacked ``F(S + u) - F(S)`` for each candidate, shape (k, n, |Gamma|).

        This is the weight-gradient of each marginal gain (f is linear in w).
        """
        sel = list(selection)
        cand = list(candidates)
        base = self.psi(sel)
        self._check_selection(cand)
        if set(cand) & set(sel):
            raise ValueError("candidate already selected")
        if not cand:
            return np.zeros((0,) + self.shape)
        after = base[None, :] + self.counts[cand]
        return basis_values(after, self.gammas) - basis_values(base, self.gammas)[None]

    def marginal_gains(self, selection, candidates, w) -> np.ndarray:
        g = self.gain_features(selection, candidates)
        return np.einsum("kij,ij->k", g, np.asarray(w, dtype=float))

    def marginal_gain(self, selection, candidate: int, w) -> float:
        return float(self.marginal_gains(selection, [candidate], w)[0])

    def marginal_gain_weight_gradient(self, selection, candidate: int) -> np.ndarray:
        return self.gain_features(selection, [candidate])[0]

    def to_dict(self):
        return {
            "ground": self.ground.to_dict(),
            "partition": self.partition.to_dict(),
            "basis": self.basis.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            GroundSet.from_dict(d["ground"]),
            NodePartition.from_dict(d["partition"]),
            BasisFamily.from_dict(d["basis"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str):
        return cls.from_dict(json.loads(text))


# Free-function forms, convenient for one-off evaluation.

def count_coverage(partition_index: int, selection, ground: GroundSet, partition: NodePartition) -> int:
    if not 0 <= partition_index < len(partition):
        raise IndexError(f"partition index {partition_index} out of range")
    block = partition.sets[partition_index]
    total = 0
    for t in selection:
        if not 0 <= t < len(ground):
            raise IndexError(f"unknown route index {t}")
        total += len(set(ground.routes[t]) & block)
    return total


def objective_value(selection, w, partition, basis, ground) -> float:
    obj = CoverageObjective(ground, partition, basis)
    return obj.value(selection, weight_matrix(w, partition, basis))


def marginal_gain(selection, candidate, w, partition, basis, ground) -> float:
    obj = CoverageObjective(ground, partition, basis)
    return obj.marginal_gain(selection, candidate, weight_matrix(w, partition, basis))


def marginal_gain_weight_gradient(selection, candidate, partition, basis, ground) -> np.ndarray:
    return CoverageObjective(ground, partition, basis).marginal_gain_weight_gradient(selection, candidate)
