"""Head-movement traces: ingestion, quaternion conversion, resampling."""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import TraceError
from ..geometry import HALF_PI, Viewport, matrix_to_viewport, wrap_angle

ANGLES = ("yaw", "pitch", "roll")


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a scalar-first unit quaternion (q0, q1, q2, q3)."""
    w, x, y, z = (float(c) for c in q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_to_viewport(q) -> Viewport:
    q = np.asarray(q, dtype=np.float64)
    norm = float(np.linalg.norm(q))
    if abs(norm - 1.0) > 1e-3:
        raise TraceError(f"quaternion norm {norm:.6f} deviates from 1 by more than 1e-3")
    return matrix_to_viewport(quat_to_matrix(q / norm))


def unwrap_yaw(seq) -> np.ndarray:
    """Shift each element by multiples of 2*pi so consecutive steps lie in (-pi, pi]."""
    a = np.asarray(seq, dtype=np.float64)
    if a.size == 0:
        raise ValueError("cannot unwrap an empty sequence")
    steps = wrap_angle(np.diff(a))
    out = np.empty_like(a)
    out[0] = a[0]
    out[1:] = a[0] + np.cumsum(steps)
    return out


def angular_error(a, b):
    """Shortest angular distance in [0, pi]."""
    d = np.mod(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)), 2 * math.pi)
    out = np.minimum(d, 2 * math.pi - d)
    return float(out) if out.ndim == 0 else out


def wrap_for(angle: str, value):
    """Bring a predicted value back into the legal range of ``angle``."""
    if angle == "pitch":
        return np.clip(value, -HALF_PI, HALF_PI)
    if isinstance(value, np.ndarray):
        return wrap_angle(value)
    return wrap_angle(float(value))


@dataclass
class Trace:
    user_id: str
    t: np.ndarray       # seconds, strictly increasing
    angles: np.ndarray  # (n, 3) yaw, pitch, roll in radians

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.angles = np.asarray(self.angles, dtype=np.float64).reshape(-1, 3)
        if len(self.t) != len(self.angles):
            raise TraceError(f"{self.user_id}: {len(self.t)} timestamps vs {len(self.angles)} samples")
        if len(self.t) == 0:
            raise TraceError(f"{self.user_id}: empty trace")
        if np.any(np.diff(self.t) <= 0):
            raise TraceError(f"{self.user_id}: timestamps must be strictly increasing")

    def __len__(self):
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def viewport(self, i: int) -> Viewport:
        y, p, r = self.angles[i]
        return Viewport(float(y), float(p), float(r))

    def viewports(self) -> list[Viewport]:
        return [self.viewport(i) for i in range(len(self))]

    def series(self, angle: str, unwrap: bool = True) -> np.ndarray:
        """One angle over time; yaw and roll are unwrapped unless asked not to."""
        col = self.angles[:, ANGLES.index(angle)]
        if unwrap and angle != "pitch":
            return unwrap_yaw(col)
        return col.copy()

    def viewport_at(self, t: float) -> Viewport:
        """Linearly interpolated viewport at time ``t`` (shortest path for yaw and roll)."""
        if t < self.t[0] - 1e-9 or t > self.t[-1] + 1e-9:
            raise TraceError(
                f"{self.user_id}: time {t:.6f}s outside trace span "
                f"[{self.t[0]:.6f}, {self.t[-1]:.6f}]")
        vals = [float(np.interp(t, self.t, self.series(a))) for a in ANGLES]
        return Viewport(wrap_angle(vals[0]), vals[1], wrap_angle(vals[2]))


def resample_trace(trace: Trace, hz: float) -> Trace:
    """Uniform grid at 1/hz from the first timestamp; yaw/roll follow the shortest path."""
    if hz <= 0:
        raise ValueError("rate must be positive")
    if len(trace) < 2 or trace.duration < 1.0 / hz - 1e-9:
        raise TraceError(f"{trace.user_id}: trace too short to resample at {hz} Hz")
    n = int(math.floor(trace.duration * hz + 1e-9)) + 1
    grid = trace.t[0] + np.arange(n) / hz
    cols = []
    for a in ANGLES:
        s = np.interp(grid, trace.t, trace.series(a))
        cols.append(s if a == "pitch" else wrap_angle(s))
    return Trace(trace.user_id, grid, np.stack(cols, axis=1))


def _split(line: str, delimiter: str | None) -> list[str]:
    if delimiter is None:
        return [f for f in re.split(r"[,\s;]+", line.strip()) if f]
    return [f.strip() for f in line.strip().split(delimiter)]


def load_trace(path, cols: str = "t,yaw,pitch,roll", degrees: bool = False,
               delimiter: str | None = None, user_id: str | None = None) -> Trace:
    """Read a delimited text trace.

    ``cols`` names each column in order; recognised names are ``t``, ``yaw``,
    ``pitch``, ``roll`` and ``q0..q3`` (scalar first). Any other name, e.g.
    ``_``, skips the column. Lines that do not parse as numbers in the used
    columns (headers, comments) are skipped.
    """
    names = [c.strip() for c in cols.split(",")]
    if "t" not in names:
        raise TraceError("column mapping must include 't'")
    quat = all(q in names for q in ("q0", "q1", "q2", "q3"))
    euler = all(a in names for a in ANGLES)
    if not quat and not euler:
        raise TraceError(f"column mapping {cols!r} needs yaw,pitch,roll or q0,q1,q2,q3")
    used = ["t"] + (["q0", "q1", "q2", "q3"] if quat else list(ANGLES))
    index = {n: names.index(n) for n in used}
    times, samples = [], []
    with open(path, newline="") as fh:
        for raw in fh:
            if not raw.strip() or raw.lstrip().startswith("#"):
                continue
            fields = _split(raw, delimiter)
            try:
                vals = {n: float(fields[i]) for n, i in index.items()}
            except (ValueError, IndexError):
                continue
            if quat:
                vp = quat_to_viewport([vals["q0"], vals["q1"], vals["q2"], vals["q3"]])
                samples.append(vp.as_tuple())
            else:
                ang = [vals[a] for a in ANGLES]
                if degrees:
                    ang = [math.radians(a) for a in ang]
                vp = Viewport(*ang).normalized()
                samples.append(vp.as_tuple())
            times.append(vals["t"])
    if not times:
        raise TraceError(f"{path}: no samples found with column mapping {cols!r}")
    t = np.asarray(times)
    # logs occasionally repeat timestamps; keep the first sample of each run
    keep = np.concatenate([[True], np.diff(t) > 0])
    if not np.all(np.diff(t[keep]) > 0):
        raise TraceError(f"{path}: timestamps are not increasing")
    return Trace(user_id or Path(path).stem, t[keep], np.asarray(samples)[keep])


def save_trace(trace: Trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "yaw", "pitch", "roll"])
        for t, (y, p, r) in zip(trace.t, trace.angles):
            w.writerow([repr(float(t)), repr(float(y)), repr(float(p)), repr(float(r))])
