"""Training-set construction: contexts -> rollouts -> fitted weight matrices.

For each sampled context we roll the mission out a few times, score a fixed
plan of route selections on every rollout, and fit non-negative objective
weights to the averaged scores by ridge-regularized least squares.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyParams, WindField
from .simulator import RoadGraph, Scenario, UavSpec, evaluate_selection, rollout
from .submodular import CoverageObjective, GroundSet, NodePartition

DEFAULT_XI = 1e-4


@dataclass(frozen=True)
class ContextRanges:
    x: tuple[float, float] = (0.0, 1400.0)
    y: tuple[float, float] = (0.0, 1400.0)
    radius: tuple[float, float] = (100.0, 300.0)
    a: tuple[float, float] = (2.0, 8.0)
    b: tuple[float, float] = (1.5, 3.0)
    omega_o: tuple[float, float] = (0.0, 360.0)
    # None: centres uniform over the map.  Otherwise each context draws a
    # mission hotspot uniformly and scatters centres around it with this
    # standard deviation (metres), clipped to the map.
    cluster_spread: float | None = None

    def __post_init__(self):
        for name in ("x", "y", "radius", "a", "b", "omega_o"):
            lo, hi = getattr(self, name)
            if not hi > lo:
                raise ValueError(f"empty range for {name}: {(lo, hi)}")
        if self.radius[0] <= 0 or self.a[0] <= 0 or self.b[0] <= 0:
            raise ValueError("radius, a and b ranges must be positive")
        if self.cluster_spread is not None and not self.cluster_spread > 0:
            raise ValueError("cluster_spread must be positive")

    @classmethod
    def for_graph(cls, graph: RoadGraph, **kw):
        x0, y0, x1, y1 = graph.bounds()
        return cls(x=(x0, x1), y=(y0, y1), **kw)

    def to_dict(self):
        d = {k: list(getattr(self, k)) for k in ("x", "y", "radius", "a", "b", "omega_o")}
        d["cluster_spread"] = self.cluster_spread
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: (v if k == "cluster_spread" else tuple(v)) for k, v in d.items()})


def generate_contexts(n_samples: int, n_uavs: int, ranges: ContextRanges, rng) -> list[np.ndarray]:
    """Context vectors ``[Cx1, Cy1, r1, ..., Cx_na, Cy_na, r_na, a, b, omega_o]``."""
    out = []
    for _ in range(n_samples):
        z = np.empty(3 * n_uavs + 3)
        if ranges.cluster_spread is None:
            z[0:3 * n_uavs:3] = rng.uniform(*ranges.x, size=n_uavs)
            z[1:3 * n_uavs:3] = rng.uniform(*ranges.y, size=n_uavs)
        else:
            hx, hy = rng.uniform(*ranges.x), rng.uniform(*ranges.y)
            z[0:3 * n_uavs:3] = np.clip(rng.normal(hx, ranges.cluster_spread, size=n_uavs), *ranges.x)
            z[1:3 * n_uavs:3] = np.clip(rng.normal(hy, ranges.cluster_spread, size=n_uavs), *ranges.y)
        z[2:3 * n_uavs:3] = rng.uniform(*ranges.radius, size=n_uavs)
        z[-3] = rng.uniform(*ranges.a)
        z[-2] = rng.uniform(*ranges.b)
        z[-1] = rng.uniform(*ranges.omega_o) % 360.0
        out.append(z)
    return out


@dataclass(frozen=True)
class FleetTemplate:
    """Per-UAV settings not carried by the context vector."""

    waypoint_count: int = 8
    speed: float = 10.0
    battery_capacity: float = 60_000.0
    recharge_threshold: float = 0.30
    laps: float = 2.0
    params: EnergyParams = field(default_factory=EnergyParams)

    def to_dict(self):
        return {
            "waypoint_count": self.waypoint_count, "speed": self.speed,
            "battery_capacity": self.battery_capacity, "recharge_threshold": self.recharge_threshold,
            "laps": self.laps, "params": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "params" in d:
            d["params"] = EnergyParams.from_dict(d["params"])
        return cls(**d)


def scenario_from_context(z, graph: RoadGraph, routes: GroundSet, partition: NodePartition,
                          template: FleetTemplate = FleetTemplate()) -> Scenario:
    z = np.asarray(z, dtype=float)
    if (z.size - 3) % 3 or z.size < 6:
        raise ValueError("context length must be 3 * n_uavs + 3")
    n_a = (z.size - 3) // 3
    uavs = [
        UavSpec((float(z[3 * k]), float(z[3 * k + 1])), float(z[3 * k + 2]), template.waypoint_count,
                template.speed, template.battery_capacity, template.recharge_threshold)
        for k in range(n_a)
    ]
    return Scenario(graph, WindField(float(z[-3]), float(z[-2]), float(z[-1])), uavs, routes,
                    partition, template.params, template.laps)


def selection_plan(n_routes: int, n_select: int, rng, pair_budget: int = 30, subset_budget: int = 30):
    """Singletons, a sample of pairs and random full-size selections, deduplicated."""
    plan = [(t,) for t in range(n_routes)]
    pairs = list(itertools.combinations(range(n_routes), 2))
    idx = rng.permutation(len(pairs))[:pair_budget]
    plan += [pairs[i] for i in sorted(idx)]
    seen = set(plan)
    for _ in range(subset_budget):
        s = tuple(sorted(rng.choice(n_routes, size=min(n_select, n_routes), replace=False).tolist()))
        if s not in seen:
            seen.add(s)
            plan.append(s)
    return plan


@dataclass
class RawContextRecord:
    context: np.ndarray
    evaluations: list[tuple[tuple[int, ...], float]]
    repeats: int

    def to_dict(self):
        return {
            "context": [float(x) for x in self.context],
            "evaluations": [[list(s), float(v)] for s, v in self.evaluations],
            "repeats": self.repeats,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["context"]), [(tuple(s), v) for s, v in d["evaluations"]], d["repeats"])


def rollout_raw_data(z, plan, graph, routes, partition, template: FleetTemplate, repeats: int,
                     seed: int, dim_w: int | None = None) -> RawContextRecord:
    """Average UAV-recharge counts of every planned selection over seeded rollouts.

    All selections are scored on the same rollouts (paired seeds).
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if dim_w is not None and len(set(plan)) < dim_w:
        warnings.warn(f"selection plan has {len(set(plan))} selections for {dim_w} weights", stacklevel=2)
    scn = scenario_from_context(z, graph, routes, partition, template)
    seeds = np.random.SeedSequence(seed).generate_state(repeats, dtype=np.uint64)
    outcomes = [rollout(scn, int(s)) for s in seeds]
    evals = []
    for sel in plan:
        vals = [evaluate_selection(sel, o, routes) for o in outcomes]
        evals.append((tuple(sel), float(np.mean(vals))))
    return RawContextRecord(np.asarray(z, dtype=float), evals, repeats)


# -- weight fitting -----------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    w: np.ndarray
    residual: float
    iterations: int
    converged: bool
    objective_trace: np.ndarray


def nonneg_ridge(X: np.ndarray, y: np.ndarray, xi: float, tol: float = 1e-8,
                 max_iter: int = 100_000) -> FitResult:
    """Minimize ``||X w - y||^2 + xi ||w||^2`` over ``w >= 0``."""
    return nonneg_ridge_many(X, np.asarray(y, dtype=float)[:, None], xi, tol, max_iter)[0]


def nonneg_ridge_many(X: np.ndarray, Y: np.ndarray, xi: float, tol: float = 1e-8,
                      max_iter: int = 100_000, keep_trace: bool = True) -> list[FitResult]:
    """Solve one non-negative ridge problem per column of ``Y`` (shared design).

    Accelerated projected gradient in its monotone form: the momentum point
    is only accepted when it does not increase the objective, so the
    recorded objective never goes up, and momentum is reset whenever that
    test fails or the momentum points uphill (adaptive restart).  The step starts at ``1/L`` from the
    exact Lipschitz constant and is halved on any sufficient-decrease
    failure.  A column stops once its gradient-mapping norm drops below
    ``tol``.  Columns are independent; batching only amortizes overhead.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if xi < 0:
        raise ValueError("xi must be >= 0")
    n, B = X.shape[1], Y.shape[1]
    H = X.T @ X + xi * np.eye(n)
    C = X.T @ Y

    def fun(Wm, cols):
        r = X @ Wm - Y[:, cols]
        return np.einsum("ij,ij->j", r, r) + xi * np.einsum("ij,ij->j", Wm, Wm)

    def dot(A, Bm):
        return np.einsum("ij,ij->j", A, Bm)

    # The objective is quadratic with Hessian 2H, so f(x + d) - f(x) equals
    # g(x).d + d.H.d exactly.  Acceptance tests use these differences rather
    # than raw objective values, which would drown small late-stage decreases
    # in roundoff and stall the iteration.
    L = 2.0 * float(np.linalg.eigvalsh(H)[-1]) or 1.0
    step = np.full(B, 1.0 / L)
    Wm = np.zeros((n, B))
    V = Wm.copy()
    t = np.ones(B)
    fw = fun(Wm, np.arange(B))
    traces = [[float(f)] for f in fw] if keep_trace else None
    iters = np.zeros(B, dtype=int)
    done = np.zeros(B, dtype=bool)
    active = np.arange(B)
    for _ in range(max_iter):
        if active.size == 0:
            break
        c = active
        v = V[:, c]
        gv = 2.0 * (H @ v - C[:, c])
        st = step[c]
        while True:
            z = np.maximum(v - st * gv, 0.0)
            d = z - v
            # sufficient decrease: f(z) <= f(v) + g.d + |d|^2 / (2 step)
            bad = dot(d, H @ d) > dot(d, d) / (2 * st)
            if not bad.any():
                break
            st = np.where(bad, 0.5 * st, st)
        step[c] = st
        w_old = Wm[:, c]
        e = z - w_old
        gw = 2.0 * (H @ w_old - C[:, c])
        delta = dot(gw, e) + dot(e, H @ e)
        take = delta <= 0
        w_new = np.where(take, z, w_old)
        tc = t[c]
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * tc * tc))
        V[:, c] = w_new + (tc / t_next) * (z - w_new) + ((tc - 1) / t_next) * (w_new - w_old)
        # restart: drop the momentum once it points uphill
        restart = ~take | (dot(v - z, z - w_old) > 0)
        V[:, c[restart]] = w_new[:, restart]
        t_next[restart] = 1.0
        Wm[:, c] = w_new
        fw[c] = fw[c] + np.where(take, delta, 0.0)
        t[c] = t_next
        iters[c] += 1
        if keep_trace:
            for k, col in enumerate(c):
                traces[col].append(float(fw[col]))
        g = np.where(take, 2.0 * (H @ w_new - C[:, c]), gw)
        gmap = np.linalg.norm(w_new - np.maximum(w_new - st * g, 0.0), axis=0) / st
        fin = gmap < tol
        done[c[fin]] = True
        active = c[~fin]
    fw = fun(Wm, np.arange(B))
    return [
        FitResult(Wm[:, j].copy(), float(fw[j]), int(iters[j]), bool(done[j]),
                  np.array(traces[j]) if keep_trace else np.array([fw[j]]))
        for j in range(B)
    ]


def design_matrix(objective: CoverageObjective, selections) -> np.ndarray:
    return np.array([objective.features(s).ravel() for s in selections])


@dataclass
class DatasetSample:
    z: np.ndarray
    w: np.ndarray
    fit_residual: float

    def to_dict(self):
        return {"z": [float(x) for x in self.z], "w": np.asarray(self.w).tolist(),
                "fit_residual": float(self.fit_residual)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["z"], dtype=float), np.array(d["w"], dtype=float), d["fit_residual"])


def fit_weights(record: RawContextRecord, objective: CoverageObjective, xi: float = DEFAULT_XI,
                tol: float = 1e-8, max_iter: int = 100_000) -> DatasetSample:
    sels = [s for s, _ in record.evaluations]
    X = design_matrix(objective, sels)
    y = np.array([v for _, v in record.evaluations])
    if np.linalg.matrix_rank(X) < X.shape[1]:
        warnings.warn("design matrix is rank deficient; fitted weights are not identifiable", stacklevel=2)
    res = nonneg_ridge(X, y, xi, tol, max_iter)
    if not res.converged:
        warnings.warn(f"weight fit stopped after {res.iterations} iterations", stacklevel=2)
    return DatasetSample(record.context, res.w.reshape(objective.shape), res.residual)


def assemble_dataset(records, objective: CoverageObjective, xi: float = DEFAULT_XI,
                     train_fraction: float = 0.8, seed: int = 0, tol: float = 1e-8,
                     max_iter: int = 100_000):
    """Fit every record; return ``(samples, train_idx, test_idx)``.

    Records sharing a selection plan share a design matrix and are solved
    together.
    """
    groups: dict[tuple, list[int]] = {}
    for k, r in enumerate(records):
        groups.setdefault(tuple(s for s, _ in r.evaluations), []).append(k)
    samples: list[DatasetSample | None] = [None] * len(records)
    for sels, idx in groups.items():
        X = design_matrix(objective, sels)
        Y = np.array([[v for _, v in records[k].evaluations] for k in idx]).T
        for k, res in zip(idx, nonneg_ridge_many(X, Y, xi, tol, max_iter, keep_trace=False)):
            samples[k] = DatasetSample(records[k].context, res.w.reshape(objective.shape), res.residual)
    n_train = int(round(train_fraction * len(samples)))
    perm = np.random.default_rng(seed).permutation(len(samples))
    return samples, sorted(perm[:n_train].tolist()), sorted(perm[n_train:].tolist())


def write_jsonl(path, samples):
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict()) + "\n")


def read_jsonl(path) -> list[DatasetSample]:
    with open(path) as fh:
        return [DatasetSample.from_dict(json.loads(line)) for line in fh if line.strip()]


def dataset_csv(samples) -> str:
    if not samples:
        return ""
    d = samples[0].z.size
    k = samples[0].w.size
    lines = [",".join([f"z{i}" for i in range(d)] + [f"w{j}" for j in range(k)])]
    for s in samples:
        lines.append(",".join(f"{x:.17g}" for x in np.concatenate([s.z, np.ravel(s.w)])))
    return "\n".join(lines) + "\n"
