"""Command-line interface: simulate / train / eval / associate / gradcheck."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path


from .config import RunConfig, load_config


def _load_cfg(path: str | None) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="run config YAML")
    p.add_argument("--seed", type=int, default=0)


def cmd_simulate(args) -> int:
    from .sceneio import save_frames
    from .simulator import generate_corpus

    cfg = _load_cfg(args.config)
    sim = cfg.simulator
    spec = sim.scene_spec(cfg.radar.n_sweeps)
    frames = generate_corpus(spec, sim.sensor, args.frames, args.seed,
                             width=cfg.fusion.width,
                             count_ranges=sim.count_ranges,
                             max_proposals=sim.max_proposals)
    save_frames(frames, args.out)
    n_gt = sum(len(f.scene.gt_boxes) for f in frames)
    print(f"wrote {len(frames)} frames ({n_gt} gt boxes) to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .harness.train import run_training

    cfg = _load_cfg(args.config)
    result = run_training(cfg, args.scenes, args.seed,
                          checkpoint_path=args.out,
                          loss_csv_path=args.loss_csv,
                          coord_mode=args.coord,
                          epochs=args.epochs)
    final = result.epoch_losses[-1]["loss"] if result.epoch_losses else float("nan")
    print(f"trained {len(result.epoch_losses)} epochs, final loss {final:.4f}, "
          f"checkpoint at {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .harness.evaluate import run_evaluation

    cfg = _load_cfg(args.config)
    outputs = run_evaluation(cfg, args.scenes,
                             checkpoint=args.checkpoint,
                             camera_only=args.camera_only,
                             associator=args.associator,
                             coord_mode=args.coord,
                             seed=args.seed,
                             csv_path=args.out)
    report = outputs.report
    mean_ap = f"{report.mean_ap:.4f}" if report.mean_ap is not None else "n/a"
    print(f"mean AP {mean_ap} over thresholds "
          f"{sorted(report.ap_per_threshold)}; metrics at {args.out}")
    return 0


def cmd_associate(args) -> int:
    from .harness.pipeline import prepare_frame
    from .sceneio import load_frames

    cfg = _load_cfg(args.config)
    frames = load_frames(args.scenes)
    lines = []
    for frame in frames:
        pf = prepare_frame(frame, cfg, args.seed, associator=args.associator)
        for pi, idx in enumerate(pf.assoc.entries):
            token = f"{frame.index}:{pi}"
            lines.append(" ".join([token] + [str(int(i)) for i in idx]))
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {len(lines)} proposal associations to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_gradcheck(args) -> int:
    from .testsupport import gradcheck_suite

    t0 = time.time()
    results = gradcheck_suite(quick=args.quick)
    worst_name, worst = "", 0.0
    for name, err in results.items():
        status = "ok" if err < args.tol else "FAIL"
        print(f"{name:<32} max scaled error {err:.3e}  [{status}]")
        if err > worst:
            worst_name, worst = name, err
    print(f"worst: {worst_name} ({worst:.3e}); elapsed {time.time() - t0:.1f}s")
    return 0 if worst < args.tol else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polarfuse",
        description="Camera-radar fusion pipeline: simulation, training, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scene corpus")
    _add_common(p)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--out", required=True, help="scene file to write")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the fusion model on a scene file")
    _add_common(p)
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss-csv", help="per-epoch loss curve CSV")
    p.add_argument("--epochs", type=int)
    p.add_argument("--coord", choices=["polar", "cartesian"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a scene file")
    _add_common(p)
    p.add_argument("--scenes", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.add_argument("--camera-only", action="store_true")
    p.add_argument("--associator", choices=["spa", "ball", "roipool"])
    p.add_argument("--coord", choices=["polar", "cartesian"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("associate", help="dump per-proposal association sets")
    _add_common(p)
    p.add_argument("--scenes", required=True)
    p.add_argument("--associator", choices=["spa", "ball", "roipool"])
    p.add_argument("--out", help="output path (stdout if omitted)")
    p.set_defaults(func=cmd_associate)

    p = sub.add_parser("gradcheck", help="finite-difference check of all ops")
    p.add_argument("--quick", action="store_true", help="smaller shapes")
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
