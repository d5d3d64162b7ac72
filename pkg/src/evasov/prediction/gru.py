"""Two-layer GRU regressor for one head angle, with hand-written BPTT.

The network sees the last L samples of one angle expressed relative to the
latest sample, and predicts the change over the horizon. Everything is
float64 numpy; no autograd.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import EvasError
from .trace import wrap_for

log = logging.getLogger(__name__)

GATES = ("z", "r", "h")


class TrainingError(EvasError):
    pass


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class GruLayer:
    """W*: (hidden, input), U*: (hidden, hidden), b*: (hidden,) for gates z, r and candidate h."""

    W: dict[str, np.ndarray]
    U: dict[str, np.ndarray]
    b: dict[str, np.ndarray]

    @property
    def hidden(self) -> int:
        return self.U["z"].shape[0]

    @property
    def inputs(self) -> int:
        return self.W["z"].shape[1]

    @classmethod
    def init(cls, n_in: int, hidden: int, rng: np.random.Generator) -> "GruLayer":
        k = 1.0 / math.sqrt(hidden)
        W = {g: rng.uniform(-k, k, (hidden, n_in)) for g in GATES}
        U = {g: rng.uniform(-k, k, (hidden, hidden)) for g in GATES}
        b = {g: rng.uniform(-k, k, hidden) for g in GATES}
        return cls(W, U, b)

    @classmethod
    def zeros(cls, n_in: int, hidden: int) -> "GruLayer":
        return cls({g: np.zeros((hidden, n_in)) for g in GATES},
                   {g: np.zeros((hidden, hidden)) for g in GATES},
                   {g: np.zeros(hidden) for g in GATES})

    def params(self):
        for g in GATES:
            yield f"W{g}", self.W[g]
            yield f"U{g}", self.U[g]
            yield f"b{g}", self.b[g]

    def forward(self, xs: np.ndarray):
        """xs: (B, L, n_in). Returns hidden sequence (B, L, H) and a cache for backward."""
        B, L, _ = xs.shape
        h = np.zeros((B, self.hidden))
        hs = np.empty((B, L, self.hidden))
        cache = []
        W, U, b = self.W, self.U, self.b
        for t in range(L):
            x = xs[:, t, :]
            z = sigmoid(x @ W["z"].T + h @ U["z"].T + b["z"])
            r = sigmoid(x @ W["r"].T + h @ U["r"].T + b["r"])
            cand = np.tanh(x @ W["h"].T + (r * h) @ U["h"].T + b["h"])
            cache.append((x, h, z, r, cand))
            h = (1.0 - z) * h + z * cand
            hs[:, t, :] = h
        return hs, cache

    def backward(self, dhs: np.ndarray, cache):
        """dhs: dLoss/dh_t for every step (B, L, H). Returns (grads, dLoss/dxs)."""
        W, U = self.W, self.U
        gW = {g: np.zeros_like(W[g]) for g in GATES}
        gU = {g: np.zeros_like(U[g]) for g in GATES}
        gb = {g: np.zeros_like(self.b[g]) for g in GATES}
        B, L, _ = dhs.shape
        dxs = np.zeros((B, L, self.inputs))
        carry = np.zeros((B, self.hidden))
        for t in range(L - 1, -1, -1):
            x, h_prev, z, r, cand = cache[t]
            dh = dhs[:, t, :] + carry
            dprev = dh * (1.0 - z)
            da_h = dh * z * (1.0 - cand * cand)
            da_z = dh * (cand - h_prev) * z * (1.0 - z)
            drh = da_h @ U["h"]
            da_r = drh * h_prev * r * (1.0 - r)
            dprev += drh * r + da_z @ U["z"] + da_r @ U["r"]
            for g, da, hin in (("z", da_z, h_prev), ("r", da_r, h_prev), ("h", da_h, r * h_prev)):
                gW[g] += da.T @ x
                gU[g] += da.T @ hin
                gb[g] += da.sum(axis=0)
                dxs[:, t, :] += da @ W[g]
            carry = dprev
        grads = {}
        for g in GATES:
            grads[f"W{g}"], grads[f"U{g}"], grads[f"b{g}"] = gW[g], gU[g], gb[g]
        return grads, dxs


@dataclass
class GruModel:
    """Per-angle model: two GRU layers, an affine head, and normalisation constants."""

    layer1: GruLayer
    layer2: GruLayer
    head_w: np.ndarray
    head_b: np.ndarray  # shape (1,)
    in_mean: float = 0.0
    in_scale: float = 1.0
    out_mean: float = 0.0
    out_scale: float = 1.0
    angle: str = "yaw"
    history: int = 30
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        if self.layer2.inputs != self.layer1.hidden or self.head_w.shape != (self.layer2.hidden,):
            raise ValueError("inconsistent GRU dimensions")
        if self.in_scale <= 0 or self.out_scale <= 0:
            raise ValueError("normalisation scale must be positive")

    @property
    def hidden(self) -> int:
        return self.layer1.hidden

    @classmethod
    def init(cls, hidden: int = 64, seed: int = 0, **kw) -> "GruModel":
        rng = np.random.default_rng(seed)
        l1 = GruLayer.init(1, hidden, rng)
        l2 = GruLayer.init(hidden, hidden, rng)
        k = 1.0 / math.sqrt(hidden)
        return cls(l1, l2, rng.uniform(-k, k, hidden), rng.uniform(-k, k, 1), **kw)

    @classmethod
    def zeros(cls, hidden: int = 4, **kw) -> "GruModel":
        return cls(GruLayer.zeros(1, hidden), GruLayer.zeros(hidden, hidden),
                   np.zeros(hidden), np.zeros(1), **kw)

    def named_params(self):
        for name, p in self.layer1.params():
            yield f"layer1.{name}", p
        for name, p in self.layer2.params():
            yield f"layer2.{name}", p
        yield "head.w", self.head_w
        yield "head.b", self.head_b

    # -- normalised-space network ------------------------------------------

    def forward_normalized(self, x: np.ndarray, keep_cache: bool = False):
        """x: (B, L) normalised inputs -> (B,) normalised outputs."""
        xs = np.asarray(x, dtype=np.float64)[:, :, None]
        h1, c1 = self.layer1.forward(xs)
        h2, c2 = self.layer2.forward(h1)
        y = h2[:, -1, :] @ self.head_w + self.head_b[0]
        if keep_cache:
            return y, (h2, c1, c2)
        return y

    def loss_and_grads(self, x: np.ndarray, target: np.ndarray):
        """Mean squared error over the batch and its gradient for every parameter."""
        y, (h2, c1, c2) = self.forward_normalized(x, keep_cache=True)
        err = y - target
        loss = float(np.mean(err * err))
        dy = 2.0 * err / len(err)
        grads = {"head.w": h2[:, -1, :].T @ dy, "head.b": np.array([dy.sum()])}
        dh2 = np.zeros_like(h2)
        dh2[:, -1, :] = np.outer(dy, self.head_w)
        g2, dh1 = self.layer2.backward(dh2, c2)
        g1, _ = self.layer1.backward(dh1, c1)
        grads.update({f"layer2.{k}": v for k, v in g2.items()})
        grads.update({f"layer1.{k}": v for k, v in g1.items()})
        return loss, grads

    # -- raw radians --------------------------------------------------------

    def featurize(self, windows: np.ndarray) -> np.ndarray:
        w = np.atleast_2d(np.asarray(windows, dtype=np.float64))
        return (w - w[:, -1:] - self.in_mean) / self.in_scale

    def predict(self, windows: np.ndarray) -> np.ndarray:
        """Predicted angle for each history window (rows of unwrapped radians), wrapped."""
        w = np.atleast_2d(np.asarray(windows, dtype=np.float64))
        if w.shape[1] != self.history:
            raise ValueError(f"model expects history length {self.history}, got {w.shape[1]}")
        y = self.forward_normalized(self.featurize(w))
        return wrap_for(self.angle, w[:, -1] + self.out_mean + self.out_scale * y)


def gru_forward(model: GruModel, history) -> float:
    """Prediction for a single history window of one angle (unwrapped radians)."""
    return float(model.predict(np.asarray(history, dtype=np.float64)[None, :])[0])


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 64
    epochs: int = 30
    learning_rate: float = 0.05
    batch_size: int = 64
    seed: int = 0
    clip_norm: float = 1.0


def _scale(x: np.ndarray) -> float:
    s = float(np.std(x))
    return s if s > 1e-8 else 1.0


def gru_train(histories, targets, angle: str = "yaw", cfg: TrainConfig = TrainConfig()) -> GruModel:
    """Fit a model by minibatch gradient descent with BPTT over the full window.

    ``histories``: (n, L) unwrapped radians; ``targets``: (n,) value at the horizon,
    on the same unwrapped branch as the history.
    """
    X = np.asarray(histories, dtype=np.float64)
    T = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise TrainingError("empty training set")
    if len(T) != len(X):
        raise TrainingError(f"{len(X)} histories vs {len(T)} targets")
    rel = X - X[:, -1:]
    delta = T - X[:, -1]
    model = GruModel.init(cfg.hidden, cfg.seed, angle=angle, history=X.shape[1],
                          in_mean=float(rel.mean()), in_scale=_scale(rel),
                          out_mean=float(delta.mean()), out_scale=_scale(delta))
    xs = model.featurize(X)
    ys = (delta - model.out_mean) / model.out_scale
    params = dict(model.named_params())
    rng = np.random.default_rng(cfg.seed + 1)
    n = len(xs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = model.loss_and_grads(xs[idx], ys[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            total += loss * len(idx)
            gnorm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            step = cfg.learning_rate
            if cfg.clip_norm and gnorm > cfg.clip_norm:
                step *= cfg.clip_norm / gnorm
            for name, g in grads.items():
                params[name] -= step * g
        model.loss_history.append(total / n)
        log.debug("%s epoch %d loss %.6f", angle, epoch, total / n)
    return model
