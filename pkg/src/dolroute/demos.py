"""Two small misalignment demos.

1. Two weight vectors mixed by ``beta`` on a three-route instance under a
   partition matroid: the greedy choice flips at a single threshold.
2. Three disjoint routes, route 3 forced, one scalar observation ``z``.
   Linear models of the two free route weights are fit by MSE and by the
   decision loss; the induced decision boundaries are compared with the
   optimal one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gradient import exact_expected_value, exact_expected_value_gradient
from .greedy import PartitionMatroid, run_deterministic_greedy
from .predictor import Adam, MlpParams
from .submodular import BasisFamily, CoverageObjective, GroundSet, NodePartition


# -- beta mixture -------------------------------------------------------------

def beta_instance():
    """``(objective, w1, w2, system)``; routes 0, 1, 2 play s1, s2, s3.

    Four single-node cells; s1 and s2 share cell B.  The near-zero decay
    makes each basis an (almost) plain area coverage.  Cell A is heavy so
    greedy always takes s1 first and the second pick compares cells C and D.
    """
    ground = GroundSet(((0, 1), (1, 2), (3,)), ids=("s1", "s2", "s3"))
    part = NodePartition((frozenset({0}), frozenset({1}), frozenset({2}), frozenset({3})))
    obj = CoverageObjective(ground, part, BasisFamily((0.001,)))
    w1 = np.array([[3.0], [1.0], [1.0], [3.0]])
    w2 = np.array([[3.0], [1.0], [2.5], [1.2]])
    system = PartitionMatroid([([0], 1), ([1, 2], 1)])
    return obj, w1, w2, system


def beta_gap(beta):
    """``f_beta({s1,s3}) - f_beta({s1,s2})``; linear in beta."""
    obj, w1, w2, _ = beta_instance()
    w = beta * w1 + (1 - beta) * w2
    return obj.value([0, 2], w) - obj.value([0, 1], w)


def beta_sweep(n: int = 1001):
    """Rows ``(beta, f({s1,s2}), f({s1,s3}), greedy selection)``."""
    obj, w1, w2, system = beta_instance()
    rows = []
    for beta in np.linspace(0.0, 1.0, n):
        w = beta * w1 + (1 - beta) * w2
        rows.append((float(beta), obj.value([0, 1], w), obj.value([0, 2], w),
                     tuple(sorted(run_deterministic_greedy(obj, w, system)))))
    return rows


def beta_threshold(n: int = 1001) -> float:
    """Crossing point of the two candidate values, located by a sweep then refined."""
    grid = np.linspace(0.0, 1.0, n)
    gaps = np.array([beta_gap(b) for b in grid])
    sign = np.flatnonzero(np.diff(np.sign(gaps)) != 0)
    if sign.size != 1:
        raise RuntimeError("expected exactly one crossing")
    lo, hi = grid[sign[0]], grid[sign[0] + 1]
    g_lo, g_hi = beta_gap(lo), beta_gap(hi)
    # the gap is linear in beta, so the secant through the bracket is exact
    return float(lo - g_lo * (hi - lo) / (g_hi - g_lo))


# -- three-route linear case ----------------------------------------------------

def three_route_problem():
    ground = GroundSet(((0,), (1,), (2,)), ids=("route1", "route2", "route3"))
    part = NodePartition((frozenset({0}), frozenset({1}), frozenset({2})))
    obj = CoverageObjective(ground, part, BasisFamily((1.0,)))
    # route 3 sits alone in its block so it is always taken
    return obj, PartitionMatroid([([2], 1), ([0, 1], 1)])


ROUTE3_WEIGHT = 3.0
Z_RANGE = (0.0, 6.0)


def true_weights(z):
    """Noise-free expected UAV counts of routes 1 and 2 as functions of ``z``."""
    z = np.asarray(z, dtype=float)
    w1 = 1.0 + 6.0 * np.exp(-0.45 * z)
    w2 = 0.6 + 0.55 * z
    return np.stack([w1, w2], axis=-1)


def _bisect(fn, lo, hi, tol=1e-12):
    f_lo = fn(lo)
    if f_lo * fn(hi) > 0:
        raise ValueError("no sign change in bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fn(mid) * f_lo > 0:
            lo, f_lo = mid, fn(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


def optimal_boundary() -> float:
    return _bisect(lambda z: float(np.subtract(*true_weights(z))), *Z_RANGE)


def sample_case_study(n: int, noise: float, rng):
    z = rng.uniform(*Z_RANGE, size=n)
    w = true_weights(z) + rng.normal(0.0, noise, size=(n, 2))
    return z, np.maximum(w, 0.0)


@dataclass
class LinearModel:
    """``w_k = slope_k * z + intercept_k`` for routes 1 and 2."""

    slope: np.ndarray
    intercept: np.ndarray

    def predict(self, z):
        z = np.asarray(z, dtype=float)
        return z[..., None] * self.slope + self.intercept

    def boundary(self) -> float:
        ds = self.slope[0] - self.slope[1]
        if ds == 0:
            return float("inf")
        return float((self.intercept[1] - self.intercept[0]) / ds)


def _full_weights(w12):
    return np.array([[w12[0]], [w12[1]], [ROUTE3_WEIGHT]])


def fit_mse(z, w) -> LinearModel:
    A = np.column_stack([z, np.ones_like(z)])
    coef, *_ = np.linalg.lstsq(A, w, rcond=None)
    return LinearModel(coef[0].copy(), coef[1].copy())


def decision_loss_linear(model: LinearModel, z, w, epsilon: float) -> float:
    """Mean smoothed decision loss (exact expectation over the smoothed greedy)."""
    obj, system = three_route_problem()
    pred = model.predict(z)
    loss = 0.0
    for k in range(len(z)):
        wt = _full_weights(w[k])
        best = obj.value(run_deterministic_greedy(obj, wt, system), wt)
        loss += best - exact_expected_value(wt, _full_weights(pred[k]), obj, system, epsilon)
    return loss / len(z)


def fit_dol(z, w, epsilon: float = 0.2, steps: int = 300, learning_rate: float = 0.02,
            init: LinearModel | None = None) -> LinearModel:
    """Decision-loss fit of the linear model, by Adam on the exact smoothed loss.

    Starts from ``init`` (the MSE fit when omitted).  With two candidates and
    a forced third route the outcome tree is tiny, so the expectation and
    its gradient are enumerated instead of sampled.
    """
    obj, system = three_route_problem()
    model = init if init is not None else fit_mse(z, w)
    # reuse the network optimizer by packing the four scalars into an MlpParams
    params = MlpParams(model.slope[None, :].copy(), model.intercept.copy(), np.zeros((1, 1)), np.zeros(1))
    opt = Adam(learning_rate)
    wt = [_full_weights(w[k]) for k in range(len(z))]
    for _ in range(steps):
        cur = LinearModel(params.W1[0], params.b1)
        pred = cur.predict(z)
        g_slope = np.zeros(2)
        g_int = np.zeros(2)
        for k in range(len(z)):
            g = -exact_expected_value_gradient(wt[k], _full_weights(pred[k]), obj, system, epsilon)
            g12 = g[:2, 0]
            g_slope += g12 * z[k]
            g_int += g12
        n = len(z)
        grad = MlpParams(g_slope[None, :] / n, g_int / n, np.zeros((1, 1)), np.zeros(1))
        params = opt.step(params, grad)
    return LinearModel(params.W1[0].copy(), params.b1.copy())


@dataclass
class CaseStudyResult:
    seed: int
    optimal: float
    mse: LinearModel
    dol: LinearModel

    @property
    def mse_gap(self):
        return abs(self.mse.boundary() - self.optimal)

    @property
    def dol_gap(self):
        return abs(self.dol.boundary() - self.optimal)


def run_case_study(seed: int, n: int = 60, noise: float = 0.5, epsilon: float = 0.2,
                   steps: int = 300) -> CaseStudyResult:
    rng = np.random.default_rng(seed)
    z, w = sample_case_study(n, noise, rng)
    mse = fit_mse(z, w)
    dol = fit_dol(z, w, epsilon, steps, init=mse)
    return CaseStudyResult(seed, optimal_boundary(), mse, dol)


def decision_rows(result: CaseStudyResult, grid):
    """CSV rows ``(z, w_hat1, w_hat2, decision, method)`` for both fits and the truth."""
    obj, system = three_route_problem()
    rows = []
    for name, fn in (("optimal", true_weights), ("mse", result.mse.predict), ("dol", result.dol.predict)):
        for zv in grid:
            w12 = fn(zv)
            sel = run_deterministic_greedy(obj, _full_weights(w12), system)
            choice = 1 if 0 in sel else 2
            rows.append((float(zv), float(w12[0]), float(w12[1]), choice, name))
    return rows


# -- training-curve fixture -----------------------------------------------------

def training_fixture(seed: int = 0, n: int = 100, noise: float = 2.0):
    """``(Z, W, objective, system)`` for checking that DOL training settles.

    Six disjoint single-cell routes, pick two.  Weights are a smooth function
    of a 4-d context plus unpredictable noise, so the decision loss has a
    non-zero floor instead of sliding into pure sampling noise near zero.
    """
    from .greedy import Cardinality
    rng = np.random.default_rng(seed)
    m = 6
    ground = GroundSet(tuple((k,) for k in range(m)))
    part = NodePartition(tuple(frozenset({k}) for k in range(m)))
    obj = CoverageObjective(ground, part, BasisFamily((1.0,)))
    Z = rng.uniform(-1, 1, size=(n, 4))
    A = np.random.default_rng(101).normal(size=(4, m))
    W = np.logaddexp(0.0, 2.0 * np.tanh(Z @ A) + noise * rng.normal(size=(n, m)))
    return Z, W.reshape(n, *obj.shape), obj, Cardinality(2)


FIXTURE_CONFIG = dict(batch_size=20, learning_rate=1e-2, epochs=30)


def curve_checks(loss):
    """``(ratio, spread)``: last/first epoch loss and the relative range of the last five."""
    loss = np.asarray(loss, dtype=float)
    last = loss[-5:]
    return float(loss[-1] / loss[0]), float((last.max() - last.min()) / last.mean())
