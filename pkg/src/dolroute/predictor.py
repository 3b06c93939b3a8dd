"""Context -> objective-weight predictor and its two training loops.

One hidden ReLU layer of width 64 with a softplus head so every predicted
weight is strictly positive.  Backprop is written out by hand and accepts
an arbitrary upstream gradient with respect to the predicted weights, which
is how the decision loss is chained in.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .gradient import estimate_loss_and_gradient
from .greedy import run_deterministic_greedy
from .submodular import CoverageObjective

HIDDEN = 64


@dataclass
class MlpParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    NAMES = ("W1", "b1", "W2", "b2")

    @classmethod
    def init(cls, d_in: int, d_out: int, rng, hidden: int = HIDDEN):
        s1, s2 = 1 / math.sqrt(d_in), 1 / math.sqrt(hidden)
        return cls(
            rng.uniform(-s1, s1, size=(hidden, d_in)),
            rng.uniform(-s1, s1, size=hidden),
            rng.uniform(-s2, s2, size=(d_out, hidden)),
            rng.uniform(-s2, s2, size=d_out),
        )

    @classmethod
    def zeros_like(cls, other):
        return cls(*(np.zeros_like(getattr(other, k)) for k in cls.NAMES))

    def arrays(self):
        return [getattr(self, k) for k in self.NAMES]

    def copy(self):
        return MlpParams(*(a.copy() for a in self.arrays()))

    @property
    def d_in(self):
        return self.W1.shape[1]

    @property
    def d_out(self):
        return self.W2.shape[0]

    def to_dict(self):
        return {k: {"shape": list(getattr(self, k).shape), "data": getattr(self, k).ravel().tolist()}
                for k in self.NAMES}

    @classmethod
    def from_dict(cls, d):
        return cls(*(np.array(d[k]["data"], dtype=float).reshape(d[k]["shape"]) for k in cls.NAMES))


@dataclass
class Normalizer:
    """Per-feature affine map fit on the training contexts."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, Z):
        Z = np.asarray(Z, dtype=float)
        sd = Z.std(axis=0)
        return cls(Z.mean(axis=0), np.where(sd > 0, sd, 1.0))

    @classmethod
    def identity(cls, d):
        return cls(np.zeros(d), np.ones(d))

    def __call__(self, Z):
        return (np.asarray(Z, dtype=float) - self.mean) / self.scale

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"]), np.array(d["scale"]))


def softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def mlp_forward(z, params: MlpParams):
    """``z`` is one context (d,) or a batch (B, d); returns flat weights and a cache."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != params.d_in:
        raise ValueError(f"context has {z.shape[-1]} features, model expects {params.d_in}")
    pre = z @ params.W1.T + params.b1
    h = np.maximum(pre, 0.0)
    raw = h @ params.W2.T + params.b2
    out = softplus(raw)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite predictor output")
    return out, {"z": z, "pre": pre, "h": h, "raw": raw}


def mlp_backward(params: MlpParams, cache, upstream) -> MlpParams:
    """Gradient of ``sum(upstream * output)`` w.r.t. the parameters (summed over a batch)."""
    up = np.asarray(upstream, dtype=float).reshape(cache["raw"].shape)
    d_raw = up * _sigmoid(cache["raw"])
    z, h = np.atleast_2d(cache["z"]), np.atleast_2d(cache["h"])
    d_raw2 = np.atleast_2d(d_raw)
    d_h = d_raw2 @ params.W2
    d_pre = d_h * (np.atleast_2d(cache["pre"]) > 0)
    return MlpParams(d_pre.T @ z, d_pre.sum(axis=0), d_raw2.T @ h, d_raw2.sum(axis=0))


# -- optimizers ---------------------------------------------------------------

class Sgd:
    def __init__(self, learning_rate: float):
        if not learning_rate > 0:
            raise ValueError("learning rate must be positive")
        self.lr = learning_rate

    def step(self, params: MlpParams, grad: MlpParams) -> MlpParams:
        _check_finite(grad)
        return MlpParams(*(p - self.lr * g for p, g in zip(params.arrays(), grad.arrays())))


class Adam:
    def __init__(self, learning_rate: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not learning_rate > 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.b1, self.b2, self.eps = learning_rate, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, params: MlpParams, grad: MlpParams) -> MlpParams:
        _check_finite(grad)
        if self.m is None:
            self.m = [np.zeros_like(a) for a in params.arrays()]
            self.v = [np.zeros_like(a) for a in params.arrays()]
        self.t += 1
        out = []
        for k, (p, g) in enumerate(zip(params.arrays(), grad.arrays())):
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mh = self.m[k] / (1 - self.b1**self.t)
            vh = self.v[k] / (1 - self.b2**self.t)
            out.append(p - self.lr * mh / (np.sqrt(vh) + self.eps))
        return MlpParams(*out)


def _check_finite(grad: MlpParams):
    for name, a in zip(MlpParams.NAMES, grad.arrays()):
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(f"non-finite gradient in {name}")


# -- training -----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 40
    learning_rate: float = 1e-3
    epochs: int = 30
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    sg_trials: int = 10
    epsilon: float = 0.2
    seed: int = 0
    # constant per-sample baseline subtracted from SG values; "none" or "greedy"
    baseline: str = "none"
    standardize: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or not self.learning_rate > 0 or self.epochs < 0:
            raise ValueError("invalid batch size, learning rate or epochs")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.baseline not in ("none", "greedy"):
            raise ValueError(f"unknown baseline {self.baseline!r}")

    def make_optimizer(self):
        if self.optimizer == "sgd":
            return Sgd(self.learning_rate)
        return Adam(self.learning_rate, self.beta1, self.beta2, self.adam_eps)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class LossHistory:
    loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    seed: int = 0
    label: str = "loss"

    def append(self, loss, seconds):
        self.loss.append(float(loss))
        self.seconds.append(float(seconds))

    def to_csv(self) -> str:
        rows = [f"epoch,{self.label},seconds"]
        rows += [f"{k + 1},{l:.17g},{s:.17g}" for k, (l, s) in enumerate(zip(self.loss, self.seconds))]
        return "\n".join(rows) + "\n"


@dataclass
class Predictor:
    """Trained network plus the context normalizer and target shape."""

    params: MlpParams
    normalizer: Normalizer
    shape: tuple[int, int]
    config: dict = field(default_factory=dict)

    def predict(self, z) -> np.ndarray:
        out, _ = mlp_forward(self.normalizer(z), self.params)
        return out.reshape(np.shape(z)[:-1] + tuple(self.shape))

    def to_dict(self):
        return {"shape": list(self.shape), "params": self.params.to_dict(),
                "normalizer": self.normalizer.to_dict(), "config": self.config}

    @classmethod
    def from_dict(cls, d):
        return cls(MlpParams.from_dict(d["params"]), Normalizer.from_dict(d["normalizer"]),
                   tuple(d["shape"]), d.get("config", {}))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _prepare(Z, W, config: TrainConfig):
    Z = np.asarray(Z, dtype=float)
    W = np.asarray(W, dtype=float)
    if Z.ndim != 2 or len(Z) == 0 or len(Z) != len(W):
        raise ValueError("need a non-empty dataset with one weight matrix per context")
    norm = Normalizer.fit(Z) if config.standardize else Normalizer.identity(Z.shape[1])
    rng = np.random.default_rng(config.seed)
    init_rng, shuffle_rng, sg_rng = (np.random.default_rng(s) for s in rng.integers(0, 2**63, size=3))
    params = MlpParams.init(Z.shape[1], int(np.prod(W.shape[1:])), init_rng)
    return Z, W, norm, params, shuffle_rng, sg_rng


def _batches(n, size, rng):
    order = rng.permutation(n)
    return [order[k:k + size] for k in range(0, n, size)]


def train_dol(Z, W, objective: CoverageObjective, system, config: TrainConfig = TrainConfig(),
              params: MlpParams | None = None, normalizer: Normalizer | None = None,
              callback=None):
    """Decision-loss training through the smoothed greedy layer.

    Per batch: predict weights, draw ``sg_trials`` smoothed-greedy selections
    per sample, form the score-function gradient of the decision loss,
    backprop it through the network and average over the batch.  The logged
    epoch loss is the mean sampled decision loss seen during that epoch.
    """
    Z, W, norm, p0, shuffle_rng, sg_rng = _prepare(Z, W, config)
    params = p0 if params is None else params.copy()
    norm = norm if normalizer is None else normalizer
    Zn = norm(Z)
    opt = config.make_optimizer()
    hist = LossHistory(seed=config.seed, label="decision_loss")
    # reference greedy values under the truth do not depend on the model
    greedy_ref = [objective.value(run_deterministic_greedy(objective, w, system), w) for w in W]
    t0 = time.perf_counter()
    for _ in range(config.epochs):
        losses = []
        for idx in _batches(len(Z), config.batch_size, shuffle_rng):
            out, cache = mlp_forward(Zn[idx], params)
            up = np.zeros_like(out)
            for r, i in enumerate(idx):
                w_hat = out[r].reshape(objective.shape)
                b = greedy_ref[i] if config.baseline == "greedy" else 0.0
                est = estimate_loss_and_gradient(W[i], w_hat, objective, system, config.epsilon,
                                                 config.sg_trials, sg_rng, baseline=b)
                up[r] = est.grad.ravel()
                losses.append(est.loss.loss)
            grad = mlp_backward(params, cache, up / len(idx))
            params = opt.step(params, grad)
        hist.append(np.mean(losses), time.perf_counter() - t0)
        if callback is not None:
            callback(len(hist.loss), params)
    return Predictor(params, norm, objective.shape, {"method": "dol", **config.to_dict()}), hist


def train_two_stage(Z, W, config: TrainConfig = TrainConfig(), params: MlpParams | None = None):
    """Plain MSE regression of the weight matrices; same network, init and batching."""
    Z, W, norm, p0, shuffle_rng, _ = _prepare(Z, W, config)
    params = p0 if params is None else params.copy()
    Zn = norm(Z)
    Wf = W.reshape(len(W), -1)
    opt = config.make_optimizer()
    hist = LossHistory(seed=config.seed, label="mse")
    t0 = time.perf_counter()
    for _ in range(config.epochs):
        for idx in _batches(len(Z), config.batch_size, shuffle_rng):
            out, cache = mlp_forward(Zn[idx], params)
            up = 2.0 * (out - Wf[idx]) / (len(idx) * Wf.shape[1])
            params = opt.step(params, mlp_backward(params, cache, up))
        out, _ = mlp_forward(Zn, params)
        hist.append(np.mean((out - Wf) ** 2), time.perf_counter() - t0)
    return Predictor(params, norm, tuple(W.shape[1:]), {"method": "two-stage", **config.to_dict()}), hist


def mse_loss(predictor: Predictor, Z, W) -> float:
    return float(np.mean((predictor.predict(np.asarray(Z)) - np.asarray(W)) ** 2))


def select_routes(predictor: Predictor, z, objective: CoverageObjective, system) -> tuple[int, ...]:
    """Deterministic greedy under the predicted weights."""
    return run_deterministic_greedy(objective, predictor.predict(z), system)

