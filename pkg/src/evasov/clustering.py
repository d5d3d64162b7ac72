"""Joint position + head-motion clustering of users for multicast groups."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import Viewport, wrap_angle

NOISE = -1


@dataclass(frozen=True)
class ClusterConfig:
    eps: float = 0.15
    min_pts: int = 2
    omega: float = 0.8
    motion_dt: float | None = None  # seconds; None means one sample interval

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("omega must lie in [0, 1]")


@dataclass
class UserState:
    user_id: str
    position: np.ndarray
    motion: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class ClusterAssignment:
    labels: list[int]
    centers: list[Viewport]

    @property
    def k(self) -> int:
        return len(self.centers)

    @property
    def noise_count(self) -> int:
        return sum(1 for lab in self.labels if lab == NOISE)

    def members(self, cluster: int) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab == cluster]


def viewport_to_point(vp: Viewport) -> np.ndarray:
    """View direction on the unit sphere; roll is ignored."""
    cp = math.cos(vp.pitch)
    return np.array([math.cos(vp.yaw) * cp, math.sin(vp.yaw) * cp, math.sin(vp.pitch)])


def point_to_viewport(p) -> Viewport:
    x, y, z = (float(c) for c in p)
    return Viewport(wrap_angle(math.atan2(y, x)), math.asin(max(-1.0, min(1.0, z))), 0.0)


def motion_vector(trace, t: float, dt: float) -> np.ndarray:
    """Finite-difference velocity of the view direction, (P(t) - P(t - dt)) / dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    now = trace.viewport_at(t)
    before = trace.viewport_at(t - dt)
    return (viewport_to_point(now) - viewport_to_point(before)) / dt


def _pairwise(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def distance_matrices(users) -> tuple[np.ndarray, np.ndarray]:
    P = np.array([u.position for u in users], dtype=np.float64).reshape(-1, 3)
    V = np.array([u.motion for u in users], dtype=np.float64).reshape(-1, 3)
    return _pairwise(P), _pairwise(V)


def max_normalize(x: np.ndarray) -> np.ndarray:
    top = float(np.max(x)) if x.size else 0.0
    if top == 0.0:
        return x.copy()
    return x / top


def combine(mp: np.ndarray, mv: np.ndarray, omega: float) -> np.ndarray:
    """Weighted sum of the max-normalised position and motion distances."""
    mp, mv = np.asarray(mp, dtype=np.float64), np.asarray(mv, dtype=np.float64)
    if mp.shape != mv.shape or mp.ndim != 2 or mp.shape[0] != mp.shape[1]:
        raise ValueError(f"size mismatch: {mp.shape} vs {mv.shape}")
    if omega == 1.0:
        return max_normalize(mp)
    if omega == 0.0:
        return max_normalize(mv)
    return omega * max_normalize(mp) + (1.0 - omega) * max_normalize(mv)


def dbscan(m: np.ndarray, eps: float, min_pts: int) -> list[int]:
    """DBSCAN over a precomputed distance matrix.

    Neighbourhoods are closed (distance <= eps) and include the point itself.
    Points are visited in index order, so a border point reachable from two
    clusters joins the one formed first.
    """
    m = np.asarray(m, dtype=np.float64)
    n = m.shape[0]
    neighbours = [np.flatnonzero(m[i] <= eps) for i in range(n)]
    core = [len(nb) >= min_pts for nb in neighbours]
    labels = [None] * n
    cluster = 0
    for i in range(n):
        if labels[i] is not None:
            continue
        if not core[i]:
            labels[i] = NOISE
            continue
        labels[i] = cluster
        queue = deque(neighbours[i])
        while queue:
            j = int(queue.popleft())
            if labels[j] == NOISE:
                labels[j] = cluster  # only non-core points are ever marked noise
            elif labels[j] is None:
                labels[j] = cluster
                if core[j]:
                    queue.extend(neighbours[j])
        cluster += 1
    return labels


def _mean_direction(points: np.ndarray) -> np.ndarray | None:
    mean = points.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-12:
        return None
    return mean / norm


def cluster_centers(labels, users) -> list[Viewport]:
    k = max((lab for lab in labels if lab != NOISE), default=-1) + 1
    centers = []
    for c in range(k):
        idx = [i for i, lab in enumerate(labels) if lab == c]
        pts = np.array([users[i].position for i in idx], dtype=np.float64)
        mean = _mean_direction(pts)
        centers.append(point_to_viewport(pts[0] if mean is None else mean))
    return centers


def cluster_users(users, cfg: ClusterConfig = ClusterConfig()) -> ClusterAssignment:
    if not users:
        return ClusterAssignment([], [])
    mp, mv = distance_matrices(users)
    labels = dbscan(combine(mp, mv, cfg.omega), cfg.eps, cfg.min_pts)
    return ClusterAssignment(labels, cluster_centers(labels, users))


def single_group(users) -> ClusterAssignment:
    """Everyone in one multicast group centred on the global mean direction."""
    labels = [0] * len(users)
    return ClusterAssignment(labels, cluster_centers(labels, users))
