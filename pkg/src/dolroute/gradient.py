"""Decision loss under smoothed greedy and its weight-gradient.

The loss for one sample is

    loss(w_hat) = f(S*(w_true), w_true) - E_{S ~ SG(w_hat)} f(S, w_true)

where ``S*`` is the deterministic greedy solution.  Its gradient is estimated
with the score-function identity

    d loss / d w_hat = -E[ f(S, w_true) * grad ln p(S, w_hat) ]

and ``grad ln p`` is the sum over greedy steps of the chosen row of the
softmax Jacobian contracted with the weight-gradients of the marginal gains.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .greedy import GreedyStep, GreedyTrace, run_deterministic_greedy
from .submodular import CoverageObjective

DEFAULT_TRIALS = 10
MAX_OUTCOMES = 10_000


@dataclass(frozen=True)
class DecisionLossEstimate:
    loss: float
    reference_value: float
    mc_mean: float
    n_trials: int
    mc_std: float


@dataclass(frozen=True)
class GradientEstimate:
    grad: np.ndarray
    n_trials: int
    loss: DecisionLossEstimate | None = None


def softmax_jacobian(probs, epsilon: float) -> np.ndarray:
    """``d p / d m`` for ``p = softmax(m / eps)``: ``(diag(p) - p p^T) / eps``."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("probs must lie in the simplex")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return (np.diag(p) - np.outer(p, p)) / epsilon


def _log_prob_grads(gain_feats: np.ndarray, probs: np.ndarray, epsilon: float) -> np.ndarray:
    """Gradients of ``ln p_u`` for every candidate u, shape (k, n, |Gamma|).

    Row u of the softmax Jacobian divided by ``p_u`` is ``(e_u - p) / eps``,
    so the contraction needs no division by (possibly underflowed) ``p_u``.
    """
    if probs.size == 1:
        return np.zeros_like(gain_feats)
    mean = np.tensordot(probs, gain_feats, axes=1)
    return (gain_feats - mean[None]) / epsilon


def step_log_prob_weight_gradient(step: GreedyStep, prefix, objective: CoverageObjective,
                                  epsilon: float) -> np.ndarray:
    """Gradient of ``ln p_k(s_k, w)`` w.r.t. the weights for one recorded step."""
    prefix = list(prefix)
    if set(step.candidates) & set(prefix):
        raise ValueError("step candidates overlap the prefix selection")
    if len(step.candidates) == 1:
        return np.zeros(objective.shape)
    feats = objective.gain_features(prefix, step.candidates)
    row = softmax_jacobian(step.probs, epsilon)[step.chosen_index]
    return np.tensordot(row, feats, axes=1) / step.chosen_prob


def trace_log_prob_weight_gradient(trace: GreedyTrace, objective: CoverageObjective) -> np.ndarray:
    grad = np.zeros(objective.shape)
    prefix: list[int] = []
    for step in trace.steps:
        grad += step_log_prob_weight_gradient(step, prefix, objective, trace.epsilon)
        prefix.append(step.chosen)
    return grad


class _StepCache:
    """Memoized smoothed-greedy step data keyed by the current selection set.

    Drawing many SG samples under one weight matrix revisits the same prefixes
    over and over; the step distribution only depends on the set chosen so
    far, so it is computed once.  Sampling consumes the generator exactly
    like :func:`dolroute.greedy.run_smoothed_greedy`.
    """

    def __init__(self, objective, w, system, epsilon):
        self.objective = objective
        self.w = np.asarray(w, dtype=float)
        self.system = system
        self.epsilon = epsilon
        self._cache = {}

    def step(self, selection):
        key = frozenset(selection)
        hit = self._cache.get(key)
        if hit is None:
            cand = self.system.addable(list(selection), len(self.objective.ground))
            if not cand:
                hit = (cand, None, None, None)
            else:
                feats = self.objective.gain_features(selection, cand)
                gains = np.einsum("kij,ij->k", feats, self.w)
                e = np.exp((gains - gains.max()) / self.epsilon)
                probs = e / e.sum()
                hit = (cand, probs, np.cumsum(probs), _log_prob_grads(feats, probs, self.epsilon))
            self._cache[key] = hit
        return hit

    def sample(self, rng):
        """One SG output: (selection, log-probability, weight-gradient of log-probability)."""
        selection: list[int] = []
        log_p = 0.0
        grad = np.zeros(self.objective.shape)
        while True:
            cand, probs, cdf, grads = self.step(selection)
            if not cand:
                return tuple(selection), log_p, grad
            if len(cand) == 1:
                k = 0
            else:
                k = min(int(np.searchsorted(cdf, rng.random(), side="right")), len(cand) - 1)
            log_p += math.log(probs[k])
            grad += grads[k]
            selection.append(cand[k])


def _check_shapes(objective, *ws):
    for w in ws:
        if np.shape(w) != objective.shape:
            raise ValueError(f"weight shape {np.shape(w)} != {objective.shape}")


def score_samples(w_true, w_hat, objective: CoverageObjective, system, epsilon: float,
                  n_trials: int, rng: np.random.Generator, baseline: float = 0.0):
    """Per-trial values ``f(S_j, w_true)`` and loss-gradient terms.

    Returns ``(values, terms)`` with ``terms[j] = -(values[j] - baseline) *
    grad ln p(S_j, w_hat)``; the mean of ``terms`` is the gradient estimate.
    """
    _check_shapes(objective, w_true, w_hat)
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    w_true = np.asarray(w_true, dtype=float)
    cache = _StepCache(objective, w_hat, system, epsilon)
    values = np.empty(n_trials)
    terms = np.empty((n_trials,) + objective.shape)
    for j in range(n_trials):
        sel, _, g = cache.sample(rng)
        values[j] = objective.value(sel, w_true)
        terms[j] = -(values[j] - baseline) * g
    return values, terms


def _loss_from_values(objective, w_true, system, values) -> DecisionLossEstimate:
    w_true = np.asarray(w_true, dtype=float)
    ref = objective.value(run_deterministic_greedy(objective, w_true, system), w_true)
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return DecisionLossEstimate(ref - mean, ref, mean, int(values.size), std)


def estimate_loss_and_gradient(w_true, w_hat, objective: CoverageObjective, system,
                               epsilon: float, n_trials: int, rng: np.random.Generator,
                               baseline: float = 0.0) -> GradientEstimate:
    """Monte Carlo decision loss and its score-function gradient from shared samples.

    ``baseline`` is subtracted from the sample values before weighting the
    score; any constant keeps the estimator unbiased.
    """
    values, terms = score_samples(w_true, w_hat, objective, system, epsilon, n_trials, rng, baseline)
    # summation in trial order keeps results bitwise reproducible
    grad = np.add.reduce(terms, axis=0) / n_trials
    return GradientEstimate(grad, n_trials, _loss_from_values(objective, w_true, system, values))


def decision_loss(w_true, w_hat, objective, system, epsilon, n_trials, rng) -> DecisionLossEstimate:
    """Reference greedy value under the truth minus the mean SG value (sampled under w_hat)."""
    _check_shapes(objective, w_true, w_hat)
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    cache = _StepCache(objective, w_hat, system, epsilon)
    w_true = np.asarray(w_true, dtype=float)
    values = np.array([objective.value(cache.sample(rng)[0], w_true) for _ in range(n_trials)])
    return _loss_from_values(objective, w_true, system, values)


def score_function_gradient(w_true, w_hat, objective, system, epsilon, n_trials, rng,
                            baseline: float = 0.0) -> GradientEstimate:
    est = estimate_loss_and_gradient(w_true, w_hat, objective, system, epsilon, n_trials, rng, baseline)
    return GradientEstimate(est.grad, est.n_trials)


def enumerate_outcomes(objective: CoverageObjective, w, system, epsilon: float,
                       limit: int = MAX_OUTCOMES):
    """Every ordered SG output with its probability and weight-gradient of ln p.

    Returns a list of ``(sequence, prob, grad_log_prob)``.
    """
    cache = _StepCache(objective, w, system, epsilon)
    out = []

    def walk(prefix, prob, grad):
        cand, probs, _, grads = cache.step(prefix)
        if not cand:
            out.append((tuple(prefix), prob, grad))
            if len(out) > limit:
                raise ValueError(f"outcome tree exceeds {limit} leaves")
            return
        for k, u in enumerate(cand):
            walk(prefix + [u], prob * probs[k], grad + grads[k])

    walk([], 1.0, np.zeros(objective.shape))
    return out


def exact_expected_value(w_true, w_hat, objective, system, epsilon) -> float:
    w_true = np.asarray(w_true, dtype=float)
    return math.fsum(p * objective.value(s, w_true)
                     for s, p, _ in enumerate_outcomes(objective, w_hat, system, epsilon))


def exact_expected_value_gradient(w_true, w_hat, objective, system, epsilon) -> np.ndarray:
    """Exact ``grad_{w_hat} E_{S ~ SG(w_hat)} f(S, w_true)`` by enumerating the outcome tree."""
    _check_shapes(objective, w_true, w_hat)
    w_true = np.asarray(w_true, dtype=float)
    grad = np.zeros(objective.shape)
    for s, p, g in enumerate_outcomes(objective, w_hat, system, epsilon):
        grad += p * objective.value(s, w_true) * g
    return grad
