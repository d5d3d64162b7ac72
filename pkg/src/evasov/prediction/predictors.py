"""Per-angle viewport predictors, windowing, evaluation and model files."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import EvasError
from ..geometry import Viewport
from .gru import GruLayer, GruModel, TrainConfig, gru_train
from .trace import ANGLES, Trace, angular_error, wrap_for

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PredictionConfig:
    history: int = 30          # L, samples
    horizon: float = 1.0       # T, seconds
    sample_rate: float = 30.0  # Hz
    threshold: float = math.pi / 6

    def __post_init__(self):
        if self.history < 2:
            raise ValueError("history must be at least 2 samples")
        if self.horizon <= 0 or self.sample_rate <= 0:
            raise ValueError("horizon and sample rate must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def steps_ahead(self) -> int:
        return max(1, int(round(self.horizon * self.sample_rate)))


def lr_predict_batch(windows, dt: float, horizon: float) -> np.ndarray:
    """Least-squares line through each row, evaluated ``horizon`` after its last sample."""
    w = np.atleast_2d(np.asarray(windows, dtype=np.float64))
    L = w.shape[1]
    t = np.arange(L) * dt
    tc = t - t.mean()
    slope = (w - w.mean(axis=1, keepdims=True)) @ tc / np.dot(tc, tc)
    intercept = w.mean(axis=1) - slope * t.mean()
    return intercept + slope * (t[-1] + horizon)


def lr_predict(history, dt: float, horizon: float, angle: str = "yaw") -> float:
    return float(wrap_for(angle, lr_predict_batch(history, dt, horizon)[0]))


class Predictor:
    """Maps history windows of one angle, shape (n, L), to predicted angles (n,)."""

    name = "base"

    def predict(self, angle: str, windows: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_viewport(self, trace: Trace, index: int, history: int) -> Viewport:
        lo = index - history + 1
        if lo < 0:
            raise EvasError(f"{trace.user_id}: not enough history at sample {index}")
        vals = []
        for a in ANGLES:
            s = trace.series(a)[lo:index + 1]
            vals.append(float(self.predict(a, s[None, :])[0]))
        return Viewport(*vals)


class HoldPredictor(Predictor):
    name = "hold"

    def predict(self, angle, windows):
        return wrap_for(angle, np.atleast_2d(windows)[:, -1].copy())


@dataclass
class LrPredictor(Predictor):
    dt: float
    horizon: float
    name: str = "lr"

    def predict(self, angle, windows):
        return wrap_for(angle, lr_predict_batch(windows, self.dt, self.horizon))


@dataclass
class GruPredictor(Predictor):
    models: dict[str, GruModel]
    sample_rate: float = 30.0
    horizon: float = 1.0
    name: str = "gru"

    def predict(self, angle, windows):
        return self.models[angle].predict(windows)


# --- windows ----------------------------------------------------------------

def make_windows(traces, angle: str, history: int, steps_ahead: int, stride: int = 1):
    """Stride-``stride`` (history, target) pairs from uniformly sampled traces."""
    xs, ys = [], []
    for tr in traces:
        s = tr.series(angle)
        n = len(s) - history - steps_ahead + 1
        if n <= 0:
            continue
        starts = np.arange(0, n, stride)
        idx = starts[:, None] + np.arange(history)[None, :]
        xs.append(s[idx])
        ys.append(s[starts + history - 1 + steps_ahead])
    if not xs:
        return np.empty((0, history)), np.empty(0)
    return np.concatenate(xs), np.concatenate(ys)


def train_gru_predictor(traces, cfg: PredictionConfig, train: TrainConfig = TrainConfig(),
                        stride: int = 1) -> GruPredictor:
    models = {}
    for a in ANGLES:
        X, y = make_windows(traces, a, cfg.history, cfg.steps_ahead, stride)
        models[a] = gru_train(X, y, angle=a, cfg=train)
    return GruPredictor(models, cfg.sample_rate, cfg.horizon)


# --- evaluation -------------------------------------------------------------

@dataclass
class AngleReport:
    accuracy: float
    mae: float
    errors: np.ndarray = field(repr=False)

    def cdf(self) -> tuple[np.ndarray, np.ndarray]:
        e = np.sort(self.errors)
        return e, np.arange(1, len(e) + 1) / len(e)


@dataclass
class EvalReport:
    predictor: str
    threshold: float
    windows: int
    angles: dict[str, AngleReport]

    def summary(self) -> str:
        lines = [f"predictor={self.predictor} windows={self.windows} "
                 f"threshold={self.threshold:.4f} rad"]
        for a, r in self.angles.items():
            lines.append(f"{a:<6} accuracy={r.accuracy:.4f} mae={r.mae:.6f}")
        return "\n".join(lines)


def evaluate_predictor(predictor: Predictor, traces, cfg: PredictionConfig, stride: int = 1) -> EvalReport:
    angles = {}
    count = 0
    for a in ANGLES:
        X, y = make_windows(traces, a, cfg.history, cfg.steps_ahead, stride)
        if len(X) == 0:
            raise EvasError("no test windows: traces shorter than history + horizon")
        err = np.atleast_1d(angular_error(predictor.predict(a, X), y))
        angles[a] = AngleReport(float(np.mean(err <= cfg.threshold)), float(np.mean(err)), err)
        count = len(X)
    return EvalReport(predictor.name, cfg.threshold, count, angles)


# --- model files ------------------------------------------------------------

def save_model(predictor, path) -> None:
    """Write a predictor as an .npz archive (exact float64 round trip)."""
    arrays = {"format_version": np.array(MODEL_FORMAT_VERSION)}
    if isinstance(predictor, LrPredictor):
        arrays["kind"] = np.array("lr")
        arrays["dt"] = np.array(predictor.dt)
        arrays["horizon"] = np.array(predictor.horizon)
    elif isinstance(predictor, GruPredictor):
        arrays["kind"] = np.array("gru")
        arrays["sample_rate"] = np.array(predictor.sample_rate)
        arrays["horizon"] = np.array(predictor.horizon)
        for a, m in predictor.models.items():
            for name, p in m.named_params():
                arrays[f"{a}/{name}"] = p
            arrays[f"{a}/norm"] = np.array([m.in_mean, m.in_scale, m.out_mean, m.out_scale])
            arrays[f"{a}/history"] = np.array(m.history)
            arrays[f"{a}/loss_history"] = np.asarray(m.loss_history, dtype=np.float64)
    else:
        raise EvasError(f"cannot save predictor of type {type(predictor).__name__}")
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def _layer(z, prefix: str) -> GruLayer:
    return GruLayer({g: z[f"{prefix}.W{g}"] for g in "zrh"},
                    {g: z[f"{prefix}.U{g}"] for g in "zrh"},
                    {g: z[f"{prefix}.b{g}"] for g in "zrh"})


def load_model(path):
    with np.load(path, allow_pickle=False) as z:
        if "format_version" not in z or int(z["format_version"]) != MODEL_FORMAT_VERSION:
            raise EvasError(f"{path}: unsupported model format")
        kind = str(z["kind"])
        if kind == "lr":
            return LrPredictor(float(z["dt"]), float(z["horizon"]))
        if kind != "gru":
            raise EvasError(f"{path}: unknown model kind {kind!r}")
        models = {}
        for a in ANGLES:
            sub = {k[len(a) + 1:]: z[k] for k in z.files if k.startswith(a + "/")}
            norm = sub["norm"]
            models[a] = GruModel(
                _layer(sub, "layer1"), _layer(sub, "layer2"), sub["head.w"], sub["head.b"],
                in_mean=float(norm[0]), in_scale=float(norm[1]),
                out_mean=float(norm[2]), out_scale=float(norm[3]),
                angle=a, history=int(sub["history"]),
                loss_history=[float(v) for v in sub["loss_history"]])
        return GruPredictor(models, float(z["sample_rate"]), float(z["horizon"]))
