"""ATE versus integrator step count on one trained scenario model.

Trains a single model, then re-estimates the whole trajectory with the
same sampling seed at several step counts, so the rows differ only
through the ODE discretization.  The point of the experiment: accuracy
saturates at a moderate step count, and the extra field evaluations of
finer discretizations buy little once the network's own approximation
error dominates.

Usage:
    python3 scripts/ablation_steps.py
    python3 scripts/ablation_steps.py --steps 1,2,3,5,10,20 --method euler
"""

import argparse

import numpy as np

from motionflow import flowmatch, sampler, se3, synthworld, trajeval


def int_list(text: str) -> list:
    return [int(cell) for cell in text.split(",")]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", choices=synthworld.TRAJECTORY_KINDS,
                        default="figure8")
    parser.add_argument("--n", type=int, default=61)
    parser.add_argument("--epochs", type=int, default=1500)
    parser.add_argument("--steps", type=int_list, default=[2, 5, 10],
                        help="comma-separated step counts")
    parser.add_argument("--method", choices=sampler.SOLVER_METHODS,
                        default="midpoint")
    parser.add_argument("--samples", type=int, default=10)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    scenario = synthworld.make_scenario(args.kind, args.kind, args.n,
                                        0.0, 0.0, rng)
    config = flowmatch.TrainConfig(
        batch_size=64, epochs=args.epochs, lr=2e-3,
        lr_decay_factor=0.05, lr_decay_epoch=max(1, args.epochs // 2),
        seed=10)
    print(f"training on {len(scenario.pairs)} {args.kind} pairs ...")
    net, _ = flowmatch.train(scenario.pairs, config)

    conds = [pair.cond for pair in scenario.pairs]
    ates = []
    for steps in args.steps:
        results = sampler.estimate_sequence(
            net, conds, sampler.SolverConfig(args.method, steps),
            args.samples, np.random.default_rng(np.random.SeedSequence(17)))
        est = trajeval.compose_trajectory(
            se3.RelativePose.identity(), [r.estimate for r in results])
        ates.append(trajeval.ate(est, scenario.gt_trajectory, align="sim3"))

    print(f"{'steps':>6}  {'ate_sim3':>10}")
    for steps, ate in zip(args.steps, ates):
        print(f"{steps:6d}  {ate:10.4f}")
    print(f"max/min ratio = {max(ates) / min(ates):.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
