"""Trace-driven edge server simulation.

Per tick: predict every user's viewport one horizon ahead, cluster the
predictions, build one VBM frame per multicast group (and one per noise
user), account transmitted bytes for EVAS and the baselines, and score each
user's FOV against the frame rendered at their actual viewport.
"""
from __future__ import annotations

import glob
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .clustering import (NOISE, ClusterAssignment, ClusterConfig, UserState, cluster_users,
                         motion_vector, single_group, viewport_to_point)
from .errors import ConfigError, EvasError
from .geometry import Viewport, remap, reproject, rotation_from_viewport
from .imagery import Frame, count_frames, frame_path, load_ppm, to_luma
from .metrics import (BandwidthRecord, bandwidth_summary, load_encoded_sizes, mse, raw_cost)
from .prediction import (HoldPredictor, LrPredictor, PredictionConfig, Predictor, load_model,
                         Trace, load_trace, resample_trace)
from .vbm import VbmFrame, make_vbm, reconstruct, vbm_layout

log = logging.getLogger(__name__)

VARIANTS = ("multicast", "position", "joint")
ALL_SCHEMES = ("evas", "nonviewport", "twolayer")


@dataclass
class SimConfig:
    frames_dir: Path
    traces: list  # paths, or Trace objects
    tick_rate: float = 30.0
    prediction: PredictionConfig = field(default_factory=PredictionConfig)
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    schemes: tuple[str, ...] = ALL_SCHEMES
    variants: tuple[str, ...] = ("joint",)
    sampling: str = "bilinear"
    output_dir: Path | None = None
    seed: int = 0
    predictor: str = "lr"          # lr | gru | hold | oracle
    model: Path | None = None
    trace_cols: str = "t,yaw,pitch,roll"
    degrees: bool = False
    encoded_sizes: Path | None = None
    max_ticks: int | None = None
    quality: bool = True

    def __post_init__(self):
        if self.tick_rate <= 0:
            raise ConfigError("tick_rate must be positive")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        bad = set(self.schemes) - set(ALL_SCHEMES)
        if bad:
            raise ConfigError(f"unknown scheme(s): {', '.join(sorted(bad))}")
        bad = set(self.variants) - set(VARIANTS)
        if bad:
            raise ConfigError(f"unknown clustering variant(s): {', '.join(sorted(bad))}")
        if not self.traces:
            raise ConfigError("no traces given")
        if self.sampling not in ("nearest", "bilinear"):
            raise ConfigError(f"sampling must be nearest or bilinear, got {self.sampling!r}")


@dataclass
class TickResult:
    tick: int
    k: int
    noise: int
    records: list[BandwidthRecord]
    fov_mse: dict[str, list[float]]   # variant -> per-user MSE
    assignment: ClusterAssignment


@dataclass
class SimResult:
    users: list[str]
    ticks: list[TickResult]

    @property
    def records(self) -> list[BandwidthRecord]:
        return [r for t in self.ticks for r in t.records]

    @property
    def mean_k(self) -> float:
        return float(np.mean([t.k for t in self.ticks])) if self.ticks else 0.0

    def bandwidth(self):
        return bandwidth_summary(self.records)

    def mean_fov_mse(self) -> dict[str, float]:
        out = {}
        for v in (self.ticks[0].fov_mse if self.ticks else {}):
            vals = [m for t in self.ticks for m in t.fov_mse[v]]
            out[v] = float(np.mean(vals)) if vals else math.nan
        return out


# --- quality ----------------------------------------------------------------

def fov_quality_loss(user_vp: Viewport, cluster_vp: Viewport, gt_frame: Frame, vbm: VbmFrame,
                     sampling: str = "bilinear", recon: Frame | None = None,
                     truth: Frame | None = None) -> float:
    """Luma MSE between the user's true FOV and the FOV rendered from the cluster's VBM.

    The reconstructed frame lives in cluster-centred space; a pixel with
    user-space direction d shows world direction W(user) d, which sits at
    W(cluster)^T W(user) d in cluster space.
    """
    lay = vbm.layout
    if gt_frame.size != (lay.src_w, lay.src_h):
        raise EvasError(f"ground-truth frame {gt_frame.size} does not match VBM layout")
    if truth is None:
        truth = remap(gt_frame, rotation_from_viewport(user_vp), sampling, lay.fov_src)
    if recon is None:
        recon = reconstruct(vbm)
    rel = rotation_from_viewport(cluster_vp).T @ rotation_from_viewport(user_vp)
    rendered = remap(recon, rel, sampling, lay.fov_src)
    return mse(to_luma(truth), to_luma(rendered))


# --- simulation -------------------------------------------------------------

def _make_predictor(cfg: SimConfig) -> Predictor | None:
    p = cfg.prediction
    if cfg.predictor == "oracle":
        return None
    if cfg.predictor == "hold":
        return HoldPredictor()
    if cfg.predictor == "lr":
        return LrPredictor(p.dt, p.horizon)
    if cfg.predictor == "gru":
        if cfg.model is None:
            raise ConfigError("predictor=gru requires model=<path>")
        model = load_model(cfg.model)
        for m in getattr(model, "models", {}).values():
            if m.history != p.history:
                raise ConfigError(f"model history {m.history} != configured history {p.history}")
        return model
    raise ConfigError(f"unknown predictor {cfg.predictor!r}")


def _group(users, variant: str, ccfg: ClusterConfig) -> ClusterAssignment:
    if variant == "multicast":
        return single_group(users)
    if variant == "position":
        return cluster_users(users, replace(ccfg, omega=1.0))
    return cluster_users(users, ccfg)


def _streams(assign: ClusterAssignment, predicted: list[Viewport]):
    """(stream id, centre viewport, member indices) for clusters then noise users."""
    out = [(f"c{k}", c, assign.members(k)) for k, c in enumerate(assign.centers)]
    out += [(f"u{i}", predicted[i], [i]) for i, lab in enumerate(assign.labels) if lab == NOISE]
    return out


class Simulator:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.pcfg = replace(cfg.prediction, sample_rate=cfg.tick_rate)
        self.traces = [
            resample_trace(p if isinstance(p, Trace) else load_trace(p, cfg.trace_cols, cfg.degrees),
                           cfg.tick_rate)
            for p in cfg.traces]
        self.n_frames = count_frames(cfg.frames_dir)
        if self.n_frames == 0:
            raise EvasError(f"no frames (frame_000001.ppm ...) in {cfg.frames_dir}")
        first = load_ppm(frame_path(cfg.frames_dir, 1))
        self.width, self.height = first.size
        self.layout = vbm_layout(self.width, self.height)
        self.predictor = _make_predictor(cfg)
        self.sizes = load_encoded_sizes(cfg.encoded_sizes) if cfg.encoded_sizes else {}
        self._frames: dict[int, Frame] = {1: first}
        self.ticks = self._tick_range()

    def _tick_range(self) -> range:
        L, h = self.pcfg.history, self.pcfg.steps_ahead
        last = min(min(len(tr) for tr in self.traces), self.n_frames) - 1 - h
        first = L - 1
        if last < first:
            raise EvasError(
                f"trace/frame misalignment: need at least {L + h} samples and frames, "
                f"have {min(len(tr) for tr in self.traces)} samples and {self.n_frames} frames")
        stop = last + 1
        if self.cfg.max_ticks is not None:
            stop = min(stop, first + self.cfg.max_ticks)
        return range(first, stop)

    def frame(self, index: int) -> Frame:
        if index not in self._frames:
            self._frames = {index: load_ppm(frame_path(self.cfg.frames_dir, index))}
        return self._frames[index]

    def _cost(self, key: str, proxy: int) -> int:
        return self.sizes.get(key, proxy)

    def _records(self, tick: int, assign: ClusterAssignment, predicted) -> list[BandwidthRecord]:
        n = len(predicted)
        lay = self.layout
        vbm_raw = raw_cost(lay.packed_w, lay.packed_h)
        full_raw = raw_cost(self.width, self.height)
        two_raw = raw_cost(lay.base.w, lay.base.h) + raw_cost(lay.fov_src.w, lay.fov_src.h)
        recs = []
        if "evas" in self.cfg.schemes:
            streams = _streams(assign, predicted)
            total = sum(self._cost(f"evas:{tick}:{sid}", vbm_raw) for sid, _, _ in streams)
            recs.append(BandwidthRecord("evas", tick, total, n, len(streams)))
            uni = sum(self._cost(f"evas_unicast:{tick}:u{i}", vbm_raw) for i in range(n))
            recs.append(BandwidthRecord("evas_unicast", tick, uni, n, n))
        if "nonviewport" in self.cfg.schemes:
            total = sum(self._cost(f"nonviewport:{tick}:u{i}", full_raw) for i in range(n))
            recs.append(BandwidthRecord("nonviewport", tick, total, n, n))
        if "twolayer" in self.cfg.schemes:
            total = sum(self._cost(f"twolayer:{tick}:u{i}", two_raw) for i in range(n))
            recs.append(BandwidthRecord("twolayer", tick, total, n, n))
        return recs

    def _predict(self, tr, tick: int) -> Viewport:
        if self.predictor is None:
            return tr.viewport(tick + self.pcfg.steps_ahead)
        return self.predictor.predict_viewport(tr, tick, self.pcfg.history).normalized()

    def step(self, tick: int) -> TickResult:
        cfg, h = self.cfg, self.pcfg.steps_ahead
        predicted = [self._predict(tr, tick) for tr in self.traces]
        actual = [tr.viewport(tick + h) for tr in self.traces]
        dt = cfg.clustering.motion_dt or 1.0 / cfg.tick_rate
        users = []
        for tr, vp in zip(self.traces, predicted):
            now = float(tr.t[tick])
            motion = motion_vector(tr, now, dt) if now - dt >= tr.t[0] - 1e-9 else np.zeros(3)
            users.append(UserState(tr.user_id, viewport_to_point(vp), motion))
        groups = {v: _group(users, v, cfg.clustering) for v in cfg.variants}
        primary = groups.get("joint") or _group(users, "joint", cfg.clustering)
        records = self._records(tick, primary, predicted)
        fov = {}
        if cfg.quality:
            gt = self.frame(tick + h + 1)
            truths = [remap(gt, rotation_from_viewport(vp), cfg.sampling, self.layout.fov_src)
                      for vp in actual]
            for v, assign in groups.items():
                losses = [math.nan] * len(users)
                for _, centre, members in _streams(assign, predicted):
                    vbm = make_vbm(reproject(gt, centre, cfg.sampling))
                    recon = reconstruct(vbm)
                    for i in members:
                        losses[i] = fov_quality_loss(actual[i], centre, gt, vbm, cfg.sampling,
                                                     recon=recon, truth=truths[i])
                fov[v] = losses
        return TickResult(tick, primary.k, primary.noise_count, records, fov, primary)

    def run(self) -> SimResult:
        results = []
        for tick in self.ticks:
            results.append(self.step(tick))
            log.info("tick %d: K=%d noise=%d", tick, results[-1].k, results[-1].noise)
        return SimResult([tr.user_id for tr in self.traces], results)


def run_simulation(cfg: SimConfig) -> SimResult:
    return Simulator(cfg).run()


def compare_clustering_variants(cfg: SimConfig) -> dict[str, float]:
    """Mean FOV MSE under one-group multicast, position-only and joint clustering."""
    if len(cfg.traces) < 2:
        raise ConfigError("variant comparison needs at least two users")
    res = run_simulation(replace(cfg, variants=VARIANTS, quality=True))
    return res.mean_fov_mse()


# --- config + outputs -------------------------------------------------------

def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _list(v: str) -> list[str]:
    return [s.strip() for s in v.split(",") if s.strip()]


def parse_config(text: str, base_dir=".") -> SimConfig:
    """Parse ``key = value`` lines ('#' starts a comment). Paths are relative to ``base_dir``."""
    base = Path(base_dir)
    kv: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        kv[k.strip()] = v.strip()

    def path(v):
        p = Path(v)
        return p if p.is_absolute() else base / p

    known = {"frames_dir", "traces", "tick_rate", "history", "horizon", "threshold", "eps",
             "minpts", "omega", "motion_dt", "schemes", "variants", "sampling", "output_dir",
             "seed", "predictor", "model", "trace_cols", "degrees", "encoded_sizes",
             "max_ticks", "quality"}
    unknown = set(kv) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    for req in ("frames_dir", "traces"):
        if req not in kv:
            raise ConfigError(f"missing required key {req!r}")
    traces = []
    for pat in _list(kv["traces"]):
        hits = sorted(glob.glob(str(path(pat))))
        if not hits:
            raise ConfigError(f"no trace files match {pat!r}")
        traces += [Path(p) for p in hits]
    try:
        tick_rate = float(kv.get("tick_rate", 30))
        pcfg = PredictionConfig(
            history=int(kv.get("history", 30)), horizon=float(kv.get("horizon", 1.0)),
            sample_rate=tick_rate, threshold=float(kv.get("threshold", math.pi / 6)))
        ccfg = ClusterConfig(
            eps=float(kv.get("eps", 0.15)), min_pts=int(kv.get("minpts", 2)),
            omega=float(kv.get("omega", 0.8)),
            motion_dt=float(kv["motion_dt"]) if "motion_dt" in kv else None)
        return SimConfig(
            frames_dir=path(kv["frames_dir"]),
            traces=traces,
            tick_rate=tick_rate,
            prediction=pcfg,
            clustering=ccfg,
            schemes=tuple(_list(kv.get("schemes", ",".join(ALL_SCHEMES)))),
            variants=tuple(_list(kv.get("variants", "joint"))),
            sampling=kv.get("sampling", "bilinear"),
            output_dir=path(kv["output_dir"]) if "output_dir" in kv else None,
            seed=int(kv.get("seed", 0)),
            predictor=kv.get("predictor", "lr"),
            model=path(kv["model"]) if "model" in kv else None,
            trace_cols=kv.get("trace_cols", "t,yaw,pitch,roll"),
            degrees=_bool(kv.get("degrees", "false")),
            encoded_sizes=path(kv["encoded_sizes"]) if "encoded_sizes" in kv else None,
            max_ticks=int(kv["max_ticks"]) if "max_ticks" in kv else None,
            quality=_bool(kv.get("quality", "true")),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from None


def load_config(path) -> SimConfig:
    p = Path(path)
    return parse_config(p.read_text(), p.parent)


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else ("inf" if math.isinf(x) else f"{x:.6f}")


def write_outputs(result: SimResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bw = ["tick,scheme,bytes,transmissions"]
    bw += [f"{r.tick},{r.scheme},{r.bytes},{r.transmissions}" for r in result.records]
    q = ["tick,user,scheme_variant,fov_mse"]
    cl = ["tick,user_id,label,center_yaw,center_pitch"]
    for t in result.ticks:
        for v, losses in t.fov_mse.items():
            q += [f"{t.tick},{u},{v},{_num(m)}" for u, m in zip(result.users, losses)]
        for u, lab in zip(result.users, t.assignment.labels):
            c = t.assignment.centers[lab] if lab != NOISE else None
            cl.append(f"{t.tick},{u},{lab},{_num(c.yaw) if c else ''},{_num(c.pitch) if c else ''}")
    files = {"bandwidth.csv": bw, "quality.csv": q, "clusters.csv": cl}
    written = []
    for name, lines in files.items():
        p = out / name
        p.write_text("\n".join(lines) + "\n")
        written.append(p)
    p = out / "summary.txt"
    p.write_text(summary_text(result) + "\n")
    written.append(p)
    return written


def summary_text(result: SimResult) -> str:
    lines = [f"users: {len(result.users)}", f"ticks: {len(result.ticks)}",
             f"mean clusters (K): {result.mean_k:.3f}",
             f"mean noise users: {np.mean([t.noise for t in result.ticks]):.3f}", ""]
    if result.ticks:
        lines.append(result.bandwidth().table())
    mq = result.mean_fov_mse()
    if mq:
        lines.append("")
        lines.append("mean FOV quality loss (luma MSE):")
        lines += [f"  {v}: {_num(m)}" for v, m in mq.items()]
    return "\n".join(lines)
