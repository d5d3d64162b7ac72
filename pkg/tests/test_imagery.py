import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from evasov.errors import PpmError
from evasov.imagery import (Frame, Rect, count_frames, crop, decode_ppm, downsample_box,
                            encode_ppm, frame_path, load_ppm, paste, save_ppm, to_luma,
                            upsample_bilinear)

from conftest import random_frame

frames = st.tuples(st.integers(1, 9), st.integers(1, 9)).flatmap(
    lambda wh: arrays(np.uint8, (wh[1], wh[0], 3)).map(Frame))


def gray(values, width, height):
    v = np.asarray(values, dtype=np.uint8).reshape(height, width)
    return Frame(np.repeat(v[:, :, None], 3, axis=2))


def test_load_two_pixel_file(tmp_path):
    p = tmp_path / "a.ppm"
    p.write_bytes(b"P6\n2 1\n255\n" + bytes([255, 0, 0, 0, 0, 255]))
    f = load_ppm(p)
    assert f.size == (2, 1)
    assert f.pixels[0, 0].tolist() == [255, 0, 0]
    assert f.pixels[0, 1].tolist() == [0, 0, 255]


def test_smallest_frame_is_15_bytes(tmp_path):
    p = tmp_path / "b.ppm"
    save_ppm(Frame.filled(1, 1), p)
    assert p.read_bytes() == b"P6\n1 1\n255\n\x00\x00\x00"


def test_4k_header_length():
    data = encode_ppm(Frame.filled(3840, 2048, (1, 2, 3)))
    header = b"P6\n3840 2048\n255\n"
    assert data.startswith(header)
    assert len(header) == 17
    assert len(data) == 17 + 3 * 3840 * 2048


def test_byte_identical_roundtrip_with_comments(tmp_path):
    raw = b"P6\n# made by hand\n3 2\n255\n" + bytes(range(18))
    f = decode_ppm(raw)
    p = tmp_path / "c.ppm"
    save_ppm(f, p)
    assert load_ppm(p) == f
    canonical = encode_ppm(f)
    assert decode_ppm(canonical) == f and encode_ppm(decode_ppm(canonical)) == canonical


@pytest.mark.parametrize("data, msg", [
    (b"P5\n1 1\n255\n\x00", "unsupported magic"),
    (b"P6\n1 1\n65535\n" + bytes(6), "maxval"),
    (b"P6\n2 2\n255\n" + bytes(5), "truncated"),
    (b"P6\n2 x\n255\n" + bytes(12), "malformed header"),
    (b"P6\n2", "malformed header"),
])
def test_ppm_errors_are_distinct(data, msg):
    with pytest.raises(PpmError, match=msg):
        decode_ppm(data)


@settings(max_examples=50, deadline=None)
@given(frames)
def test_ppm_roundtrip_property(f):
    assert decode_ppm(encode_ppm(f)) == f


def test_downsample_rounds_half_up():
    f = gray([0, 0, 255, 255], 2, 2)
    assert downsample_box(f, 2, 2).pixels.tolist() == [[[128, 128, 128]]]


def test_downsample_constant_and_identity(rng):
    c = Frame.filled(12, 8, (10, 200, 33))
    assert downsample_box(c, 4, 2) == Frame.filled(3, 4, (10, 200, 33))
    f = random_frame(rng, 6, 4)
    assert downsample_box(f, 1, 1) == f


def test_downsample_matches_block_mean_oracle(rng):
    f = random_frame(rng, 12, 8)
    out = downsample_box(f, 3, 2)
    for y in range(4):
        for x in range(4):
            for c in range(3):
                block = f.pixels[2 * y:2 * y + 2, 3 * x:3 * x + 3, c].astype(int)
                mean = block.sum() / 6
                assert out.pixels[y, x, c] == int(np.floor(mean + 0.5))


def test_downsample_rejects_non_divisible():
    with pytest.raises(ValueError, match="divisible"):
        downsample_box(Frame.filled(5, 4), 2, 2)


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, (8, 12, 3)))
def test_downsample_preserves_mean_luma(px):
    f = Frame(px)
    assert abs(to_luma(downsample_box(f, 4, 2)).mean() - to_luma(f).mean()) <= 0.5


def test_upsample_hand_evaluated_weights():
    f = gray([0, 100], 2, 1)
    assert upsample_bilinear(f, 2, 1).pixels[0, :, 0].tolist() == [0, 25, 75, 100]


def test_upsample_constant_and_identity(rng):
    c = Frame.filled(3, 2, (7, 8, 9))
    assert upsample_bilinear(c, 4, 4) == Frame.filled(12, 8, (7, 8, 9))
    f = random_frame(rng, 5, 3)
    assert upsample_bilinear(f, 1, 1) == f


def test_down_then_up_constant_is_exact():
    c = Frame.filled(16, 8, (91, 14, 250))
    assert upsample_bilinear(downsample_box(c, 4, 4), 4, 4) == c


def test_crop_paste(rng):
    f = random_frame(rng, 10, 7)
    assert crop(f, f.full_rect()) == f
    r = Rect(2, 1, 5, 4)
    assert paste(f, crop(f, r), r.x0, r.y0) == f
    assert crop(f, Rect(0, 0, 1, 1)).pixels[0, 0].tolist() == f.pixels[0, 0].tolist()
    g = paste(f, Frame.filled(2, 2, (1, 2, 3)), 8, 5)
    changed = np.any(g.pixels != f.pixels, axis=2)
    assert not changed[:5].any() and not changed[:, :8].any()
    with pytest.raises(ValueError, match="out of bounds"):
        crop(f, Rect(8, 0, 3, 1))
    with pytest.raises(ValueError, match="out of bounds"):
        paste(f, Frame.filled(3, 3), 9, 0)


def test_frames_are_read_only(rng):
    f = random_frame(rng, 3, 3)
    with pytest.raises(ValueError):
        f.pixels[0, 0, 0] = 1


def test_luma():
    assert to_luma(Frame.filled(1, 1, (255, 255, 255)))[0, 0] == pytest.approx(255.0, abs=1e-9)
    assert to_luma(Frame.filled(1, 1, (255, 0, 0)))[0, 0] == pytest.approx(76.245, abs=1e-9)
    assert to_luma(Frame.filled(1, 1))[0, 0] == 0.0


def test_frame_directory(tmp_path):
    for i in (1, 2, 3):
        save_ppm(Frame.filled(2, 2), frame_path(tmp_path, i))
    assert frame_path(tmp_path, 1).name == "frame_000001.ppm"
    assert count_frames(tmp_path) == 3
