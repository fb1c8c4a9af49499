"""Train a small model on a synthetic scenario and evaluate it end to end.

Runs the whole library pipeline in-process: scenario synthesis, vector
field training, sampling-based motion estimation, trajectory composition,
and aligned ATE.  Defaults are sized for a coffee-break run; raise --n
and --epochs for numbers comparable to the acceptance suite.

Usage:
    python3 scripts/demo_pipeline.py
    python3 scripts/demo_pipeline.py --kind random-walk --n 101 --epochs 4000
"""

import argparse

import numpy as np

from motionflow import flowmatch, sampler, se3, synthworld, trajeval


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", choices=synthworld.TRAJECTORY_KINDS,
                        default="figure8")
    parser.add_argument("--n", type=int, default=61,
                        help="trajectory poses (pairs = n - 1)")
    parser.add_argument("--epochs", type=int, default=1500)
    parser.add_argument("--steps", type=int, default=5)
    parser.add_argument("--samples", type=int, default=10,
                        help="flow samples per motion")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    scenario = synthworld.make_scenario(args.kind, args.kind, args.n,
                                        0.0, 0.0, rng)
    config = flowmatch.TrainConfig(
        batch_size=64, epochs=args.epochs, lr=2e-3,
        lr_decay_factor=0.05, lr_decay_epoch=max(1, args.epochs // 2),
        seed=10)
    print(f"training on {len(scenario.pairs)} {args.kind} pairs "
          f"for {args.epochs} epochs ...")
    net, history = flowmatch.train(scenario.pairs, config)
    print(f"  first loss {history[0][2]:.6f}, final loss {history[-1][2]:.6f}")

    solver = sampler.SolverConfig("midpoint", args.steps)
    results = sampler.estimate_sequence(
        net, [pair.cond for pair in scenario.pairs], solver, args.samples,
        np.random.default_rng(np.random.SeedSequence(17)))
    est = trajeval.compose_trajectory(
        se3.RelativePose.identity(), [r.estimate for r in results])

    positions = scenario.gt_trajectory.positions()
    diameter = float(np.max(np.linalg.norm(
        positions[:, None, :] - positions[None, :, :], axis=2)))
    print(f"trajectory diameter {diameter:.3f}")
    for align in trajeval.ALIGN_MODES:
        ate = trajeval.ate(est, scenario.gt_trajectory, align=align)
        print(f"  ate ({align:>4}) = {ate:.4f}")
    spread = float(np.mean([r.std_state for r in results]))
    print(f"  mean sampling spread = {spread:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
