"""Luma quality metrics and bandwidth accounting."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import EvasError
from .imagery import Frame, Rect, to_luma

PEAK = 255.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * PEAK) ** 2
SSIM_C2 = (0.03 * PEAK) ** 2

SCHEMES = ("evas", "nonviewport", "twolayer")


def _plane(x) -> np.ndarray:
    if isinstance(x, Frame):
        return to_luma(x)
    return np.asarray(x, dtype=np.float64)


def _same_shape(a, b):
    a, b = _plane(a), _plane(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _same_shape(a, b)
    d = a - b
    return float(np.mean(d * d))


def psnr_from_mse(m: float) -> float:
    if m == 0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / m)


def psnr(a, b) -> float:
    """PSNR in dB against peak 255; ``inf`` for identical inputs."""
    return psnr_from_mse(mse(a, b))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable window sum, keeping only positions where the window fits
    r = len(g) // 2
    y = correlate1d(x, g, axis=0, mode="constant")
    y = correlate1d(y, g, axis=1, mode="constant")
    return y[r:x.shape[0] - r, r:x.shape[1] - r]


def ssim_map(a, b) -> np.ndarray:
    """Local SSIM at every position where the 11x11 window lies inside the plane."""
    a, b = _same_shape(a, b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} planes, got {a.shape}")
    g = gaussian_window()
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    aa = _filter_valid(a * a, g) - mu_a * mu_a
    bb = _filter_valid(b * b, g) - mu_b * mu_b
    ab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * ab + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (aa + bb + SSIM_C2)
    return num / den


def ssim(a, b) -> float:
    return float(np.mean(ssim_map(a, b)))


# --- region reports ---------------------------------------------------------

@dataclass(frozen=True)
class QualityReport:
    region: str
    mse: float
    psnr: float
    ssim: float


def _rect_mask(shape, rect: Rect) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    ys, xs = rect.slices()
    m[ys, xs] = True
    return m


def region_masks(layout) -> dict[str, np.ndarray]:
    shape = (layout.src_h, layout.src_w)
    fov = _rect_mask(shape, layout.fov_src)
    margin = _rect_mask(shape, layout.margin_src)
    return {
        "full": np.ones(shape, dtype=bool),
        "fov": fov,
        "margin_ring": margin & ~fov,
        "base_ring": ~margin,
    }


def _window_inside(mask: np.ndarray) -> np.ndarray:
    """Valid-window positions whose whole 11x11 window lies inside ``mask``."""
    k = np.ones(SSIM_WINDOW)
    counts = _filter_valid(mask.astype(np.float64), k)
    return counts >= SSIM_WINDOW * SSIM_WINDOW - 0.5


def masked_quality(a: np.ndarray, b: np.ndarray, mask: np.ndarray, region: str,
                   smap: np.ndarray | None = None) -> QualityReport:
    """MSE/PSNR over the pixels of ``mask``; SSIM averaged over windows fully inside it."""
    d = (a - b)[mask]
    m = float(np.mean(d * d))
    if smap is None:
        smap = ssim_map(a, b)
    inside = _window_inside(mask)
    s = float(np.mean(smap[inside])) if inside.any() else math.nan
    return QualityReport(region, m, psnr_from_mse(m), s)


def region_quality(original: Frame, reconstructed: Frame, layout) -> list[QualityReport]:
    if original.size != (layout.src_w, layout.src_h) or reconstructed.size != original.size:
        raise ValueError(
            f"frames {original.size} / {reconstructed.size} do not match layout "
            f"{layout.src_w}x{layout.src_h}")
    a, b = to_luma(original), to_luma(reconstructed)
    smap = ssim_map(a, b)
    return [masked_quality(a, b, m, name, smap) for name, m in region_masks(layout).items()]


# --- bandwidth --------------------------------------------------------------

@dataclass(frozen=True)
class BandwidthRecord:
    scheme: str
    tick: int
    bytes: int
    recipients: int
    transmissions: int

    def __post_init__(self):
        if self.bytes < 0:
            raise ValueError("bytes must be non-negative")
        if self.transmissions > self.recipients:
            raise ValueError("transmissions cannot exceed recipients")


def raw_cost(width: int, height: int) -> int:
    """Raw-pixel proxy cost in bytes (3 bytes per RGB pixel)."""
    return 3 * width * height


@dataclass
class BandwidthSummary:
    totals: dict[str, int]
    per_tick: dict[int, dict[str, int]]
    savings: dict[tuple[str, str], float]

    def saving(self, scheme: str, baseline: str) -> float:
        return self.savings[(scheme, baseline)]

    def table(self) -> str:
        names = sorted(self.totals)
        lines = [f"{'scheme':<14}{'total bytes':>16}"]
        lines += [f"{n:<14}{self.totals[n]:>16d}" for n in names]
        lines.append("")
        lines.append("savings (1 - A/B):")
        for (a, b), s in sorted(self.savings.items()):
            lines.append(f"  {a} vs {b}: {100 * s:.2f}%")
        return "\n".join(lines)


def bandwidth_summary(records) -> BandwidthSummary:
    per_tick: dict[int, dict[str, int]] = defaultdict(dict)
    ticks_by_scheme: dict[str, set] = defaultdict(set)
    totals: dict[str, int] = defaultdict(int)
    for r in records:
        if r.tick in ticks_by_scheme[r.scheme]:
            raise EvasError(f"duplicate record for scheme {r.scheme} tick {r.tick}")
        ticks_by_scheme[r.scheme].add(r.tick)
        per_tick[r.tick][r.scheme] = r.bytes
        totals[r.scheme] += r.bytes
    coverage = {frozenset(t) for t in ticks_by_scheme.values()}
    if len(coverage) > 1:
        raise EvasError("records do not cover identical tick ranges for every scheme")
    savings = {}
    for a in totals:
        for b in totals:
            if a != b and totals[b] > 0:
                savings[(a, b)] = 1.0 - totals[a] / totals[b]
    return BandwidthSummary(dict(totals), dict(per_tick), savings)


def load_encoded_sizes(path) -> dict[str, int]:
    """Read an encoded-size override table (header ``frame_id,bytes``)."""
    sizes = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["frame_id", "bytes"]:
            raise EvasError(f"{path}: expected header 'frame_id,bytes'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise EvasError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                sizes[row[0].strip()] = int(row[1])
            except ValueError:
                raise EvasError(f"{path}:{lineno}: bytes must be an integer") from None
    return sizes
