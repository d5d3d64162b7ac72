"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import metrics
from .clustering import ClusterConfig, NOISE, UserState, cluster_users, motion_vector, viewport_to_point
from .errors import EvasError
from .geometry import Viewport, inverse_reproject, reproject
from .imagery import load_ppm, save_ppm
from .pipeline import compare_clustering_variants, load_config, run_simulation, summary_text, write_outputs
from .prediction import (HoldPredictor, LrPredictor, PredictionConfig, TrainConfig,
                         evaluate_predictor, load_model, load_trace, resample_trace, save_model,
                         train_gru_predictor)
from .vbm import load_vbm, make_vbm, reconstruct, save_vbm, unpack_vbm

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6f}"


def cmd_reproject(a):
    f = load_ppm(a.input)
    vp = Viewport(a.yaw, a.pitch, a.roll)
    if a.degrees:
        vp = Viewport.from_degrees(a.yaw, a.pitch, a.roll)
    sampling = "nearest" if a.nearest else "bilinear"
    fn = inverse_reproject if a.inverse else reproject
    save_ppm(fn(f, vp.normalized(), sampling), a.output)


def cmd_pack(a):
    save_vbm(make_vbm(load_ppm(a.input)), a.output)


def cmd_unpack(a):
    fov, base, margin = unpack_vbm(load_vbm(a.input))
    stem = Path(a.output_prefix)
    for name, fr in (("fov", fov), ("base", base), ("margin", margin)):
        save_ppm(fr, stem.with_name(f"{stem.name}_{name}.ppm"))


def cmd_reconstruct(a):
    save_ppm(reconstruct(load_vbm(a.input)), a.output)


def _load_traces(a):
    hz = a.rate
    return [resample_trace(load_trace(p, a.cols, a.degrees), hz) for p in a.traces]


def _pred_config(a) -> PredictionConfig:
    return PredictionConfig(history=a.history, horizon=a.horizon, sample_rate=a.rate,
                            threshold=a.threshold)


def cmd_predict(a):
    cfg = _pred_config(a)
    traces = _load_traces(a)
    if a.action == "train":
        if a.lr:
            predictor = LrPredictor(cfg.dt, cfg.horizon)
        else:
            tc = TrainConfig(hidden=a.hidden, epochs=a.epochs, learning_rate=a.learning_rate,
                             batch_size=a.batch_size, seed=a.seed)
            predictor = train_gru_predictor(traces, cfg, tc, stride=a.stride)
            for ang, m in predictor.models.items():
                print(f"{ang}: final training loss {_fmt(m.loss_history[-1])}")
        save_model(predictor, a.model)
        return
    if a.hold:
        predictor = HoldPredictor()
    elif a.lr or a.model is None:
        predictor = LrPredictor(cfg.dt, cfg.horizon)
    else:
        predictor = load_model(a.model)
    report = evaluate_predictor(predictor, traces, cfg, stride=a.stride)
    print(report.summary())
    if a.cdf:
        with open(a.cdf, "w") as fh:
            fh.write("angle,error,fraction\n")
            for ang, r in report.angles.items():
                e, frac = r.cdf()
                for x, y in zip(e, frac):
                    fh.write(f"{ang},{x:.6f},{y:.6f}\n")


def cmd_cluster(a):
    ccfg = ClusterConfig(eps=a.eps, min_pts=a.minpts, omega=a.omega,
                         motion_dt=a.motion_dt)
    traces = [load_trace(p, a.cols, a.degrees) for p in a.traces]
    dt = ccfg.motion_dt or 1.0 / a.rate
    users = []
    for tr in traces:
        vp = tr.viewport_at(a.t)
        start = float(tr.t[0])
        motion = motion_vector(tr, a.t, dt) if a.t - dt >= start else [0.0, 0.0, 0.0]
        users.append(UserState(tr.user_id, viewport_to_point(vp), motion))
    assign = cluster_users(users, ccfg)
    print("user_id,label,center_yaw,center_pitch")
    for u, lab in zip(users, assign.labels):
        if lab == NOISE:
            print(f"{u.user_id},{lab},,")
        else:
            c = assign.centers[lab]
            print(f"{u.user_id},{lab},{_fmt(c.yaw)},{_fmt(c.pitch)}")


def cmd_metrics(a):
    x, y = load_ppm(a.a), load_ppm(a.b)
    fn = {"psnr": metrics.psnr, "ssim": metrics.ssim, "mse": metrics.mse}[a.metric]
    print(_fmt(fn(x, y)))


def cmd_simulate(a):
    cfg = load_config(a.config)
    if a.seed is not None:
        cfg.seed = a.seed
    if a.output_dir:
        cfg.output_dir = Path(a.output_dir)
    if a.compare_variants:
        for v, m in compare_clustering_variants(cfg).items():
            print(f"{v},{_fmt(m)}")
        return
    result = run_simulation(cfg)
    if cfg.output_dir is not None:
        write_outputs(result, cfg.output_dir)
    print(summary_text(result))


def _trace_args(p):
    p.add_argument("--traces", nargs="+", required=True, help="trace files")
    p.add_argument("--cols", default="t,yaw,pitch,roll",
                   help="column mapping, e.g. t,q0,q1,q2,q3 or t,yaw,pitch,roll ('_' skips)")
    p.add_argument("--degrees", action="store_true", help="Euler columns are in degrees")
    p.add_argument("--rate", type=float, default=30.0, help="resampling rate in Hz")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evasov", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("reproject", help="recentre a frame on a viewport")
    r.add_argument("input")
    r.add_argument("output")
    r.add_argument("--yaw", type=float, required=True)
    r.add_argument("--pitch", type=float, required=True)
    r.add_argument("--roll", type=float, required=True)
    r.add_argument("--degrees", action="store_true")
    r.add_argument("--nearest", action="store_true", help="nearest-neighbour sampling")
    r.add_argument("--inverse", action="store_true", help="undo a previous reprojection")
    r.set_defaults(func=cmd_reproject)

    pk = sub.add_parser("pack", help="build a VBM frame from a recentred frame")
    pk.add_argument("input")
    pk.add_argument("output")
    pk.set_defaults(func=cmd_pack)

    up = sub.add_parser("unpack", help="split a VBM frame into fov/base/margin PPMs")
    up.add_argument("input")
    up.add_argument("output_prefix")
    up.set_defaults(func=cmd_unpack)

    rc = sub.add_parser("reconstruct", help="rebuild a full frame from a VBM frame")
    rc.add_argument("input")
    rc.add_argument("output")
    rc.set_defaults(func=cmd_reconstruct)

    pr = sub.add_parser("predict", help="train or evaluate viewport predictors")
    pr.add_argument("action", choices=("train", "eval"))
    _trace_args(pr)
    pr.add_argument("--model", help="model file (.npz)")
    kind = pr.add_mutually_exclusive_group()
    kind.add_argument("--lr", action="store_true", help="linear regression predictor")
    kind.add_argument("--gru", action="store_true", help="GRU predictor (default for train)")
    kind.add_argument("--hold", action="store_true", help="hold-last-value baseline (eval)")
    pr.add_argument("--horizon", type=float, default=1.0)
    pr.add_argument("--history", type=int, default=30)
    pr.add_argument("--threshold", type=float, default=math.pi / 6)
    pr.add_argument("--stride", type=int, default=1)
    pr.add_argument("--hidden", type=int, default=64)
    pr.add_argument("--epochs", type=int, default=30)
    pr.add_argument("--learning-rate", type=float, default=0.05)
    pr.add_argument("--batch-size", type=int, default=64)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--cdf", help="write the error CDF to this CSV (eval)")
    pr.set_defaults(func=cmd_predict)

    c = sub.add_parser("cluster", help="cluster users at one instant")
    _trace_args(c)
    c.add_argument("--t", type=float, required=True, help="time in seconds")
    c.add_argument("--eps", type=float, default=0.15)
    c.add_argument("--minpts", type=int, default=2)
    c.add_argument("--omega", type=float, default=0.8)
    c.add_argument("--motion-dt", type=float, default=None)
    c.set_defaults(func=cmd_cluster)

    m = sub.add_parser("metrics", help="compare two frames")
    m.add_argument("metric", choices=("psnr", "ssim", "mse"))
    m.add_argument("a")
    m.add_argument("b")
    m.set_defaults(func=cmd_metrics)

    s = sub.add_parser("simulate", help="run the trace-driven simulation")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--output-dir")
    s.add_argument("--compare-variants", action="store_true",
                   help="report mean FOV MSE for multicast / position-only / joint grouping")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "predict" and args.action == "train" and not args.model:
            raise UsageError("evasov predict: --model is required for train")
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (EvasError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
