#!/usr/bin/env python3
"""Distance and radar-point-count breakdown of a trained checkpoint against
the camera-only path on a scene file.

Example:
    python scripts/analyze_checkpoint.py --config configs/desk.yaml \
        --scenes runs/held.jsonl --checkpoint runs/model.ckpt
"""

from __future__ import annotations

import argparse

from polarfuse.config import RunConfig, load_config
from polarfuse.harness.evaluate import run_evaluation


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config")
    p.add_argument("--scenes", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    cfg = load_config(args.config) if args.config else RunConfig()

    fused = run_evaluation(cfg, args.scenes, checkpoint=args.checkpoint,
                           seed=args.seed).report
    camera = run_evaluation(cfg, args.scenes, camera_only=True,
                            seed=args.seed).report

    print(f"{'threshold':<12} {'camera':>8} {'fused':>8} {'margin':>8}")
    for t in sorted(fused.ap_per_threshold):
        c, f = camera.ap_per_threshold[t], fused.ap_per_threshold[t]
        if c is None or f is None:
            continue
        print(f"AP@{t:<9g} {c:8.3f} {f:8.3f} {f - c:+8.3f}")
    print(f"{'ATE (m)':<12} {camera.ate:8.3f} {fused.ate:8.3f}")
    print(f"{'AVE (m/s)':<12} {camera.ave:8.3f} {fused.ave:8.3f}")

    print("\nper-bin AP at the 1 m threshold:")
    for name in sorted(set(fused.bins) & set(camera.bins)):
        c = camera.bins[name].get(1.0)
        f = fused.bins[name].get(1.0)
        if c is None or f is None:
            continue
        print(f"  {name:<16} {c:8.3f} {f:8.3f} {f - c:+8.3f}")


if __name__ == "__main__":
    main()
