import math
from dataclasses import replace

import numpy as np
import pytest

from evasov.errors import ConfigError, EvasError
from evasov.geometry import Viewport, reproject
from evasov.imagery import Frame, upsample_bilinear
from evasov.pipeline import (SimConfig, compare_clustering_variants, fov_quality_loss, parse_config,
                             run_simulation, summary_text, write_outputs)
from evasov.prediction import PredictionConfig, save_trace
from evasov.vbm import make_vbm, unpack_vbm

from conftest import random_frame, static_trace, write_clip

W, H = 96, 48
FULL = 3 * W * H


@pytest.fixture
def clip(tmp_path, rng):
    return write_clip(tmp_path / "frames", random_frame(rng, W, H), 31, shift=1)


def sim(clip, traces, **kw):
    base = dict(frames_dir=clip, traces=traces, tick_rate=10.0,
                prediction=PredictionConfig(history=5, horizon=0.5, sample_rate=10.0),
                predictor="oracle", sampling="nearest")
    base.update(kw)
    return SimConfig(**base)


def test_single_user_is_unicast_vbm(clip):
    res = run_simulation(sim(clip, [static_trace("a", 0.3)]))
    assert [t.tick for t in res.ticks] == list(range(4, 26))  # 31 samples, L=5, h=5
    for t in res.ticks:
        assert t.k == 0 and t.noise == 1
        rec = {r.scheme: r for r in t.records}
        assert rec["evas"].bytes * 24 == rec["nonviewport"].bytes * 7
        assert rec["evas"].transmissions == 1
        assert rec["twolayer"].bytes * 48 == rec["nonviewport"].bytes * 11


def test_identical_users_share_one_stream(clip):
    trs = [static_trace(f"u{i}", 0.7, 0.1) for i in range(4)]
    res = run_simulation(sim(clip, trs, variants=("multicast", "position", "joint")))
    for t in res.ticks:
        rec = {r.scheme: r for r in t.records}
        assert t.k == 1 and t.noise == 0 and rec["evas"].transmissions == 1
        assert rec["evas"].bytes == FULL * 7 // 24
        for v in t.fov_mse.values():
            assert v == [0.0] * 4
    assert res.mean_fov_mse() == {"multicast": 0.0, "position": 0.0, "joint": 0.0}


def test_antipodal_pair_are_noise(clip):
    res = run_simulation(sim(clip, [static_trace("a", 0.0), static_trace("b", math.pi)]))
    for t in res.ticks:
        rec = {r.scheme: r for r in t.records}
        assert t.noise == 2 and rec["evas"].bytes == 2 * FULL * 7 // 24
        assert rec["evas"].transmissions == rec["evas"].recipients


def test_transmissions_bound_and_invariants(clip):
    rng = np.random.default_rng(4)
    trs = [static_trace(f"u{i}", float(rng.uniform(-3, 3)), float(rng.uniform(-.5, .5)),
                        drift=float(rng.normal(0, .2))) for i in range(8)]
    res = run_simulation(sim(clip, trs, predictor="lr", quality=False))
    for t in res.ticks:
        rec = {r.scheme: r for r in t.records}
        assert rec["evas"].transmissions == t.k + t.noise <= 8
        assert (rec["evas"].transmissions == 8) == (t.noise == 8)
        assert rec["evas_unicast"].bytes * 24 == rec["nonviewport"].bytes * 7
    bw = res.bandwidth()
    assert bw.saving("evas_unicast", "nonviewport") == pytest.approx(1 - 7 / 24, abs=1e-12)


def test_fov_loss_identity_is_zero(natural):
    vp = Viewport(0.4, 0.2, 0.1)
    vbm = make_vbm(reproject(natural, vp, "nearest"))
    assert fov_quality_loss(vp, vp, natural, vbm, "nearest") == 0.0


def test_fov_loss_grows_with_offset(natural):
    centre = Viewport(0.0, 0.0, 0.0)
    vbm = make_vbm(reproject(natural, centre))
    near = fov_quality_loss(Viewport(math.radians(10), 0, 0), centre, natural, vbm)
    far = fov_quality_loss(Viewport(math.radians(80), 0, 0), centre, natural, vbm)
    assert 0 < near < far


def test_fov_loss_behind_is_base_only(natural):
    centre = Viewport(0.0, 0.0, 0.0)
    vbm = make_vbm(reproject(natural, centre))
    _, base, _ = unpack_vbm(vbm)
    base_only = upsample_bilinear(base, 4, 4)
    user = Viewport(math.pi, 0, 0)
    full = fov_quality_loss(user, centre, natural, vbm)
    assert full == fov_quality_loss(user, centre, natural, vbm, recon=base_only)


def test_fov_loss_layout_mismatch(natural, rng):
    vbm = make_vbm(random_frame(rng, 24, 8))
    with pytest.raises(EvasError, match="layout"):
        fov_quality_loss(Viewport(0, 0, 0), Viewport(0, 0, 0), natural, vbm)


def test_variants_on_two_groups(tmp_path, natural):
    small = Frame(natural.pixels[::4, ::4])  # 240x128
    clip = write_clip(tmp_path / "nat", small, 16, shift=2)
    trs = [static_trace(f"a{i}", 0.02 * i, seconds=1.5) for i in range(3)]
    trs += [static_trace(f"b{i}", 2.0 + 0.02 * i, 0.3, seconds=1.5) for i in range(3)]
    cfg = sim(clip, trs, sampling="bilinear", max_ticks=3)
    m = compare_clustering_variants(cfg)
    assert set(m) == {"multicast", "position", "joint"}
    assert m["joint"] < m["multicast"] and m["position"] < m["multicast"]
    # all users static: motion distances vanish, so joint and position-only agree
    res = run_simulation(replace(cfg, variants=("position", "joint")))
    assert res.mean_fov_mse()["joint"] == res.mean_fov_mse()["position"]
    with pytest.raises(ConfigError):
        compare_clustering_variants(replace(cfg, traces=trs[:1]))


def test_misaligned_traces(clip):
    with pytest.raises(EvasError, match="misalignment"):
        run_simulation(sim(clip, [static_trace("a", 0, seconds=0.5)]))


def test_config_parsing(tmp_path, clip):
    for i in range(2):
        save_trace(static_trace(f"u{i}", 0.1 * i), tmp_path / f"u{i}.csv")
    text = ("# demo\nframes_dir = frames\ntraces = u*.csv\ntick_rate = 10\nhistory = 5\n"
            "horizon = 0.5\nomega = 0.5\nschemes = evas, twolayer\nsampling = nearest\n"
            "output_dir = out\nmax_ticks = 2\n")
    cfg = parse_config(text, tmp_path)
    assert cfg.frames_dir == tmp_path / "frames" and len(cfg.traces) == 2
    assert cfg.prediction.history == 5 and cfg.clustering.omega == 0.5
    assert cfg.schemes == ("evas", "twolayer")
    res = run_simulation(cfg)
    assert len(res.ticks) == 2
    files = write_outputs(res, cfg.output_dir)
    assert [f.name for f in files] == ["bandwidth.csv", "quality.csv", "clusters.csv", "summary.txt"]
    assert files[0].read_text().splitlines()[0] == "tick,scheme,bytes,transmissions"
    assert "evas vs twolayer" in summary_text(res)
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config(text + "bogus = 1\n", tmp_path)
    with pytest.raises(ConfigError, match="scheme"):
        parse_config(text.replace("evas, twolayer", "evas, smoke"), tmp_path)
    with pytest.raises(ConfigError, match="no trace files"):
        parse_config(text.replace("u*.csv", "none*.csv"), tmp_path)
