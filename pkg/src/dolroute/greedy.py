"""Smoothed greedy maximization and its deterministic counterpart.

At every step the smoothed variant computes the marginal gains of all
addable routes, turns them into a distribution by maximizing
``<m, p> - eps * sum p ln p`` over the simplex (a softmax with temperature
``eps``) and samples the next route from it.  The full per-step record is
kept, because every gradient in :mod:`dolroute.gradient` is assembled from it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .submodular import CoverageObjective

DEFAULT_EPSILON = 0.2


class Cardinality:
    """``|S| <= limit``."""

    def __init__(self, limit: int):
        if limit < 1:
            raise ValueError("cardinality limit must be >= 1")
        self.limit = int(limit)

    def is_independent(self, selection) -> bool:
        return len(set(selection)) == len(selection) and len(selection) <= self.limit

    def addable(self, selection, n_ground: int) -> list[int]:
        if not self.is_independent(selection):
            raise ValueError("selection is not independent")
        if len(selection) >= self.limit:
            return []
        taken = set(selection)
        return [t for t in range(n_ground) if t not in taken]

    def to_dict(self):
        return {"kind": "cardinality", "limit": self.limit}

    def __repr__(self):
        return f"Cardinality({self.limit})"


class PartitionMatroid:
    """Disjoint blocks of route indices, each with its own capacity."""

    def __init__(self, blocks: Sequence[tuple[Sequence[int], int]]):
        self.blocks = [(frozenset(int(t) for t in b), int(c)) for b, c in blocks]
        seen: set[int] = set()
        for b, c in self.blocks:
            if c < 0:
                raise ValueError("block capacity must be >= 0")
            if seen & b:
                raise ValueError("partition blocks must be disjoint")
            seen |= b
        self._block_of = {t: k for k, (b, _) in enumerate(self.blocks) for t in b}

    def _usage(self, selection):
        used = [0] * len(self.blocks)
        for t in selection:
            k = self._block_of.get(t)
            if k is None:
                raise ValueError(f"route {t} is not in any block")
            used[k] += 1
        return used

    def is_independent(self, selection) -> bool:
        if len(set(selection)) != len(selection):
            return False
        used = self._usage(selection)
        return all(u <= c for u, (_, c) in zip(used, self.blocks))

    def addable(self, selection, n_ground: int) -> list[int]:
        if set(self._block_of) != set(range(n_ground)):
            raise ValueError("partition blocks must cover the ground set")
        if not self.is_independent(selection):
            raise ValueError("selection is not independent")
        used = self._usage(selection)
        taken = set(selection)
        return [
            t for t in range(n_ground)
            if t not in taken and used[self._block_of[t]] < self.blocks[self._block_of[t]][1]
        ]

    def to_dict(self):
        return {"kind": "partition", "blocks": [[sorted(b), c] for b, c in self.blocks]}

    def __repr__(self):
        return f"PartitionMatroid({[(sorted(b), c) for b, c in self.blocks]})"


def system_from_dict(d):
    if d["kind"] == "cardinality":
        return Cardinality(d["limit"])
    if d["kind"] == "partition":
        return PartitionMatroid([(b, c) for b, c in d["blocks"]])
    raise ValueError(f"unknown independence system kind {d['kind']!r}")


def addable_elements(selection, system, n_ground: int) -> list[int]:
    return system.addable(list(selection), n_ground)


def regularized_argmax(gains, epsilon: float) -> np.ndarray:
    """Entropy-regularized argmax over the simplex (softmax at temperature eps)."""
    m = np.asarray(gains, dtype=float)
    if m.ndim != 1 or m.size == 0:
        raise ValueError("gains must be a non-empty vector")
    if not np.all(np.isfinite(m)):
        raise ValueError("gains must be finite")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    e = np.exp((m - m.max()) / epsilon)
    return e / e.sum()


def sample_step(probs, rng: np.random.Generator) -> int:
    """Inverse-CDF draw of an index from ``probs``."""
    p = np.asarray(probs, dtype=float)
    if p.size == 0 or abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
        raise ValueError("probabilities must lie in the simplex")
    if p.size == 1:
        return 0
    u = rng.random()
    k = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return min(k, p.size - 1)


@dataclass(frozen=True)
class GreedyStep:
    candidates: tuple[int, ...]
    gains: np.ndarray
    probs: np.ndarray
    chosen_index: int

    @property
    def chosen(self) -> int:
        return self.candidates[self.chosen_index]

    @property
    def chosen_prob(self) -> float:
        return float(self.probs[self.chosen_index])

    def to_dict(self):
        return {
            "candidates": list(self.candidates),
            "gains": [float(x) for x in self.gains],
            "probs": [float(x) for x in self.probs],
            "chosen_index": self.chosen_index,
            "chosen_prob": self.chosen_prob,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["candidates"]), np.array(d["gains"]), np.array(d["probs"]), int(d["chosen_index"]))


@dataclass(frozen=True)
class GreedyTrace:
    steps: tuple[GreedyStep, ...]
    epsilon: float
    log_prob: float = field(default=0.0)

    @property
    def selection(self) -> tuple[int, ...]:
        return tuple(s.chosen for s in self.steps)

    def to_json(self) -> str:
        return json.dumps({
            "epsilon": self.epsilon,
            "log_prob": self.log_prob,
            "selection": list(self.selection),
            "steps": [s.to_dict() for s in self.steps],
        })

    @classmethod
    def from_json(cls, text: str):
        d = json.loads(text)
        return cls(tuple(GreedyStep.from_dict(s) for s in d["steps"]), d["epsilon"], d["log_prob"])


def trace_log_probability(trace: GreedyTrace) -> float:
    return math.fsum(math.log(s.chosen_prob) for s in trace.steps)


def run_smoothed_greedy(objective: CoverageObjective, w, system, epsilon: float,
                        rng: np.random.Generator) -> GreedyTrace:
    w = np.asarray(w, dtype=float)
    n = len(objective.ground)
    selection: list[int] = []
    steps = []
    while True:
        cand = system.addable(selection, n)
        if not cand:
            break
        gains = objective.marginal_gains(selection, cand, w)
        probs = regularized_argmax(gains, epsilon)
        k = sample_step(probs, rng)
        steps.append(GreedyStep(tuple(cand), gains, probs, k))
        selection.append(cand[k])
    trace = GreedyTrace(tuple(steps), float(epsilon))
    return GreedyTrace(trace.steps, trace.epsilon, trace_log_probability(trace))


def run_deterministic_greedy(objective: CoverageObjective, w, system) -> tuple[int, ...]:
    """Classic greedy; ties go to the lowest route index."""
    w = np.asarray(w, dtype=float)
    n = len(objective.ground)
    selection: list[int] = []
    while True:
        cand = system.addable(selection, n)
        if not cand:
            return tuple(selection)
        gains = objective.marginal_gains(selection, cand, w)
        selection.append(cand[int(np.argmax(gains))])
