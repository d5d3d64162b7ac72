"""Equirectangular <-> sphere mapping and viewport-recentring reprojection.

Conventions: +z is the north pole, longitude 0 (the +x axis) sits at the
horizontal centre of the frame, and pixel (i, j) has its centre at
(i + 0.5, j + 0.5).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imagery import Frame, Rect

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi


def wrap_angle(a):
    """Wrap radians into (-pi, pi]. Works on scalars and arrays."""
    if isinstance(a, np.ndarray):
        return a - TWO_PI * np.ceil((a - math.pi) / TWO_PI)
    return a - TWO_PI * math.ceil((a - math.pi) / TWO_PI)


@dataclass(frozen=True)
class Viewport:
    """Head orientation in radians."""

    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def normalized(self) -> "Viewport":
        if -HALF_PI <= self.pitch <= HALF_PI:
            return Viewport(wrap_angle(self.yaw), self.pitch, wrap_angle(self.roll))
        # pitch past a pole: same orientation, re-expressed in range
        return matrix_to_viewport(_rotation(self.yaw, self.pitch, self.roll))

    def as_tuple(self) -> tuple[float, float, float]:
        return self.yaw, self.pitch, self.roll

    @classmethod
    def from_degrees(cls, yaw=0.0, pitch=0.0, roll=0.0) -> "Viewport":
        return cls(math.radians(yaw), math.radians(pitch), math.radians(roll)).normalized()


def plane_to_sphere(u_px, v_px, width: int, height: int) -> np.ndarray:
    """Pixel coordinates to unit direction(s); last axis holds (x, y, z)."""
    u = np.mod(np.asarray(u_px, dtype=np.float64), width)
    v = np.clip(np.asarray(v_px, dtype=np.float64), 0.0, height)
    lon = TWO_PI * u / width - math.pi
    colat = math.pi * v / height
    s = np.sin(colat)
    return np.stack([np.cos(lon) * s, np.sin(lon) * s, np.cos(colat)], axis=-1)


def sphere_to_plane(d, width: int, height: int, check: bool = True):
    """Unit direction(s) to real pixel coordinates ``(u_px, v_px)``."""
    d = np.asarray(d, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    if check:
        norm = np.sqrt(x * x + y * y + z * z)
        if np.any(np.abs(norm - 1.0) > 1e-6):
            raise ValueError("direction is not unit length (deviation > 1e-6)")
    rho = np.hypot(x, y)
    u = (np.arctan2(y, x) + math.pi) * (width / TWO_PI)
    u = np.where(u >= width, u - width, u)
    # atan2 keeps full precision near the poles where arccos(z) does not
    v = np.arctan2(rho, z) * (height / math.pi)
    pole = rho == 0.0
    if np.any(pole):
        u = np.where(pole, width / 2.0, u)
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _ry(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rx(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rotation(yaw, pitch, roll) -> np.ndarray:
    return _rz(yaw) @ _ry(-pitch) @ _rx(roll)


def rotation_from_viewport(vp: Viewport) -> np.ndarray:
    """W = Rz(yaw) Ry(-pitch) Rx(roll); maps (1, 0, 0) onto the view direction."""
    return _rotation(vp.yaw, vp.pitch, vp.roll)


GIMBAL_EPS = 1e-6


def matrix_to_viewport(R) -> Viewport:
    """Inverse of :func:`rotation_from_viewport` for any proper rotation."""
    R = np.asarray(R, dtype=np.float64)
    pitch = math.asin(max(-1.0, min(1.0, R[2, 0])))
    if HALF_PI - abs(pitch) <= GIMBAL_EPS:
        # roll and yaw are coupled; put everything in yaw
        pitch = math.copysign(HALF_PI, pitch)
        yaw = math.atan2(-R[0, 1], R[1, 1])
        return Viewport(wrap_angle(yaw), pitch, 0.0)
    yaw = math.atan2(R[1, 0], R[0, 0])
    roll = math.atan2(R[2, 1], R[2, 2])
    return Viewport(wrap_angle(yaw), pitch, wrap_angle(roll))


def view_direction(vp: Viewport) -> np.ndarray:
    cp = math.cos(vp.pitch)
    return np.array([math.cos(vp.yaw) * cp, math.sin(vp.yaw) * cp, math.sin(vp.pitch)])


# --- remapping --------------------------------------------------------------

def source_coords(R, width: int, height: int, region: Rect | None = None):
    """Source pixel coordinates sampled by each output pixel centre of ``region``.

    For output direction d the source direction is ``R @ d``.
    """
    region = region or Rect(0, 0, width, height)
    cols = np.arange(region.x0, region.x1, dtype=np.float64) + 0.5
    rows = np.arange(region.y0, region.y1, dtype=np.float64) + 0.5
    lon = TWO_PI * cols / width - math.pi
    colat = math.pi * rows / height
    cl, sl = np.cos(lon), np.sin(lon)
    sc, cc = np.sin(colat)[:, None], np.cos(colat)[:, None]
    # d_out = (cl*sc, sl*sc, cc); R @ d_out expanded per component
    R = np.asarray(R, dtype=np.float64)
    out = []
    for k in range(3):
        a = (R[k, 0] * cl + R[k, 1] * sl)[None, :]
        out.append(a * sc + R[k, 2] * cc)
    x, y, z = out
    u = (np.arctan2(y, x) + math.pi) * (width / TWO_PI)
    u = np.where(u >= width, u - width, u)
    v = np.arctan2(np.hypot(x, y), z) * (height / math.pi)
    return u, v


def _packed(frame: Frame) -> np.ndarray:
    # RGB padded to 4 bytes so a gather moves one uint32 per pixel
    h, w = frame.height, frame.width
    p = np.zeros((h * w, 4), dtype=np.uint8)
    p[:, :3] = frame.pixels.reshape(-1, 3)
    return p.view(np.uint32).reshape(-1)


def _unpack(words: np.ndarray) -> np.ndarray:
    return words.view(np.uint8).reshape(words.shape + (4,))[..., :3]


def sample(frame: Frame, u: np.ndarray, v: np.ndarray, sampling: str = "bilinear") -> np.ndarray:
    """Sample ``frame`` at real pixel coordinates; wraps horizontally, clamps vertically."""
    h, w = frame.height, frame.width
    if sampling == "nearest":
        xi = np.floor(u).astype(np.intp) % w
        yi = np.clip(np.floor(v).astype(np.intp), 0, h - 1)
        return frame.pixels[yi, xi]
    if sampling != "bilinear":
        raise ValueError(f"unknown sampling {sampling!r}")
    packed = _packed(frame)
    x = u - 0.5
    y = np.clip(v - 0.5, 0.0, h - 1)
    x0f = np.floor(x)
    y0f = np.floor(y)
    fx = (x - x0f).astype(np.float32)[..., None]
    fy = (y - y0f).astype(np.float32)[..., None]
    x0 = x0f.astype(np.intp) % w
    x1 = x0 + 1
    x1[x1 == w] = 0
    row0 = y0f.astype(np.intp) * w
    row1 = np.minimum(row0 + w, (h - 1) * w)

    def corner(r, c):
        return _unpack(packed[r + c]).astype(np.float32)

    p00 = corner(row0, x0)
    top = p00 + fx * (corner(row0, x1) - p00)
    p10 = corner(row1, x0)
    bot = p10 + fx * (corner(row1, x1) - p10)
    val = top + fy * (bot - top)
    val += np.float32(0.5)
    np.floor(val, out=val)
    np.clip(val, 0, 255, out=val)
    return val.astype(np.uint8)


def remap(frame: Frame, R, sampling: str = "bilinear", region: Rect | None = None) -> Frame:
    """Resample ``frame`` so that output direction d shows input direction ``R @ d``.

    With ``region`` only that window of the output is computed.
    """
    u, v = source_coords(R, frame.width, frame.height, region)
    return Frame._wrap(sample(frame, u, v, sampling))


def reproject(frame: Frame, vp: Viewport, sampling: str = "bilinear") -> Frame:
    """Recentre ``frame`` so the view direction of ``vp`` lands at the frame centre."""
    return remap(frame, rotation_from_viewport(vp), sampling)


def inverse_reproject(frame: Frame, vp: Viewport, sampling: str = "bilinear") -> Frame:
    return remap(frame, rotation_from_viewport(vp).T, sampling)
