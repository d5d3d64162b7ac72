"""FOV / Base / Margin composite frames.

A recentred frame is split into a full-resolution 120x90 degree FOV crop, a
4x-downsampled full view (base) and a 2x-downsampled 180x90 degree band
(margin). The three are packed side by side into one raster::

    +-------------+--------+
    |             |  base  |
    |     FOV     +--------+
    |             | margin |
    +-------------+--------+
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import LayoutError
from .imagery import (Frame, Rect, crop, downsample_box, load_ppm, paste,
                      save_ppm, upsample_bilinear)

BASE_FACTOR = 4
MARGIN_FACTOR = 2
SIDECAR_MAGIC = "VBM1"


@dataclass(frozen=True)
class VbmLayout:
    src_w: int
    src_h: int
    fov: Rect
    base: Rect
    margin: Rect
    fov_src: Rect
    margin_src: Rect
    packed_w: int
    packed_h: int
    base_factor: int = BASE_FACTOR
    margin_factor: int = MARGIN_FACTOR


@dataclass(frozen=True)
class VbmFrame:
    layout: VbmLayout
    packed: Frame

    def __post_init__(self):
        if self.packed.size != (self.layout.packed_w, self.layout.packed_h):
            raise LayoutError(
                f"packed frame is {self.packed.width}x{self.packed.height}, layout expects "
                f"{self.layout.packed_w}x{self.layout.packed_h}")


def vbm_layout(src_w: int, src_h: int) -> VbmLayout:
    if src_w < 12 or src_h < 4 or src_w % 12 or src_h % 4:
        raise LayoutError(
            f"source {src_w}x{src_h} unsupported: width must be a positive multiple of 12 "
            f"(width % 12 = {src_w % 12}) and height a positive multiple of 4 "
            f"(height % 4 = {src_h % 4})")
    fw, fh = src_w // 3, src_h // 2
    bw, bh = src_w // 4, src_h // 4
    return VbmLayout(
        src_w=src_w,
        src_h=src_h,
        fov=Rect(0, 0, fw, fh),
        base=Rect(fw, 0, bw, bh),
        margin=Rect(fw, bh, bw, bh),
        fov_src=Rect(src_w // 3, src_h // 4, fw, fh),
        margin_src=Rect(src_w // 4, src_h // 4, src_w // 2, src_h // 2),
        packed_w=fw + bw,
        packed_h=fh,
    )


def vbm_parts(reproj: Frame, layout: VbmLayout | None = None) -> tuple[Frame, Frame, Frame]:
    """The (fov, base, margin) images of a recentred frame, before packing."""
    layout = layout or vbm_layout(reproj.width, reproj.height)
    fov = crop(reproj, layout.fov_src)
    base = downsample_box(reproj, layout.base_factor, layout.base_factor)
    margin = downsample_box(crop(reproj, layout.margin_src), layout.margin_factor, layout.margin_factor)
    return fov, base, margin


def make_vbm(reproj: Frame) -> VbmFrame:
    layout = vbm_layout(reproj.width, reproj.height)
    fov, base, margin = vbm_parts(reproj, layout)
    packed = Frame.filled(layout.packed_w, layout.packed_h)
    packed = paste(packed, fov, layout.fov.x0, layout.fov.y0)
    packed = paste(packed, base, layout.base.x0, layout.base.y0)
    packed = paste(packed, margin, layout.margin.x0, layout.margin.y0)
    return VbmFrame(layout, packed)


def unpack_vbm(vbm: VbmFrame) -> tuple[Frame, Frame, Frame]:
    lay = vbm.layout
    return crop(vbm.packed, lay.fov), crop(vbm.packed, lay.base), crop(vbm.packed, lay.margin)


def reconstruct(vbm: VbmFrame) -> Frame:
    """Client-side full frame in the recentred space: base < margin < FOV."""
    lay = vbm.layout
    fov, base, margin = unpack_vbm(vbm)
    out = upsample_bilinear(base, lay.base_factor, lay.base_factor)
    out = paste(out, upsample_bilinear(margin, lay.margin_factor, lay.margin_factor),
                lay.margin_src.x0, lay.margin_src.y0)
    return paste(out, fov, lay.fov_src.x0, lay.fov_src.y0)


def packed_ratio(src_w: int, src_h: int) -> float:
    lay = vbm_layout(src_w, src_h)
    return lay.packed_w * lay.packed_h / (src_w * src_h)


# --- serialization ----------------------------------------------------------

def sidecar_path(ppm_path) -> Path:
    p = Path(ppm_path)
    return p.with_name(p.name + ".vbm")


def save_vbm(vbm: VbmFrame, path) -> None:
    """Write the packed raster as PPM plus a one-line ``VBM1 src_w src_h`` sidecar."""
    save_ppm(vbm.packed, path)
    sidecar_path(path).write_text(f"{SIDECAR_MAGIC} {vbm.layout.src_w} {vbm.layout.src_h}\n")


def load_vbm(path) -> VbmFrame:
    side = sidecar_path(path)
    try:
        fields = side.read_text().split()
    except FileNotFoundError:
        raise LayoutError(f"missing layout sidecar {side}") from None
    if len(fields) != 3 or fields[0] != SIDECAR_MAGIC:
        raise LayoutError(f"malformed layout sidecar {side}: expected '{SIDECAR_MAGIC} src_w src_h'")
    try:
        src_w, src_h = int(fields[1]), int(fields[2])
    except ValueError:
        raise LayoutError(f"malformed layout sidecar {side}: non-integer size") from None
    return VbmFrame(vbm_layout(src_w, src_h), load_ppm(path))
