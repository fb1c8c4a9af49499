"""Command-line front end tying the pipeline together.

One binary, five subcommands:

  gen           synthesize a scenario: dataset CSV + ground-truth TUM file
  train         fit a vector field on a dataset, write checkpoint + loss CSV
  infer         sample relative poses for every condition, write estimates
  eval          ATE of an estimated trajectory against ground truth
  ablate-steps  ATE as a function of the integrator step count

Every command takes --seed and --out, writes a manifest.json describing
exactly what ran (configs, seed, artifact paths, timings), and follows
one exit-code contract: 0 success, 2 usage or argument error, 1 runtime
failure.  All randomness derives from the single seed, so rerunning a
command with the manifest's config and seed reproduces its artifacts
byte for byte (the manifest itself records wall-clock timings and is the
one file excluded from that guarantee).
"""

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, flowmatch, sampler, se3, synthworld, trajeval, vfnet

TRAJECTORY_KINDS = ("line", "arc", "figure8", "random-walk")


class UsageError(Exception):
    """Bad arguments or missing/invalid input files; exits with code 2."""


# --- manifest -----------------------------------------------------------------


@dataclass
class RunManifest:
    """Everything needed to reproduce a run, plus what it produced.

    The seed is recorded at construction time, before any randomness is
    consumed; outputs and timings are filled in as the command runs.
    """

    command: str
    seed: int
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    version: str = __version__

    def write(self, path) -> None:
        payload = dataclasses.asdict(self)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


class _Stopwatch:
    """Accumulates named phase durations for the manifest."""

    def __init__(self):
        self.timings = {}
        self._t0 = time.perf_counter()

    def lap(self, name: str) -> None:
        now = time.perf_counter()
        self.timings[name] = now - self._t0
        self._t0 = now

    def total(self) -> None:
        self.timings["total"] = sum(self.timings.values())


# --- argument plumbing ---------------------------------------------------------


def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return value


def _nonnegative_float(text: str) -> float:
    value = float(text)
    if value < 0.0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _pose_count(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError(f"need at least 2 poses, got {text}")
    return value


def _step_list(text: str) -> list:
    try:
        steps = [int(cell) for cell in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}")
    if not steps or any(s < 1 for s in steps):
        raise argparse.ArgumentTypeError(f"step counts must be >= 1, got {text!r}")
    return steps


def _require_file(path, what: str) -> Path:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{what} not found: {path}")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_trajectory(path, what: str):
    _require_file(path, what)
    try:
        return trajeval.read_tum(path)
    except ValueError as err:
        raise UsageError(f"bad {what}: {err}")


def _load_dataset(path):
    _require_file(path, "dataset")
    header = synthworld.read_dataset_header(path)
    try:
        rows = synthworld.ingest_features(path)
    except ValueError as err:
        raise UsageError(f"bad dataset: {err}")
    return header, rows


# --- subcommands ----------------------------------------------------------------


def cmd_gen(args) -> int:
    out = _out_dir(args)
    manifest = RunManifest(
        command="gen",
        seed=args.seed,
        config={
            "kind": args.kind,
            "n": args.n,
            "ambiguity": args.ambiguity,
            "noise_sigma": args.noise,
            "cond_dim": args.cond_dim,
            "name": args.name or args.kind,
        },
    )
    watch = _Stopwatch()

    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    scenario = synthworld.make_scenario(
        manifest.config["name"], args.kind, args.n, args.ambiguity,
        args.noise, rng, cond_dim=args.cond_dim,
    )
    manifest.config["lift_seed"] = scenario.lift_seed
    watch.lap("generate")

    dataset_path = out / "dataset.csv"
    gt_path = out / "gt.tum"
    synthworld.write_scenario_dataset(dataset_path, scenario)
    trajeval.write_tum(gt_path, scenario.gt_trajectory)
    watch.lap("write")
    watch.total()

    manifest.outputs = {"dataset": str(dataset_path), "gt": str(gt_path)}
    manifest.timings = watch.timings
    manifest.write(out / "manifest.json")
    print(f"wrote {len(scenario.pairs)} pairs to {dataset_path}")
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    dataset_path = _require_file(args.dataset, "dataset")

    config = flowmatch.TrainConfig()
    if args.config is not None:
        _require_file(args.config, "config file")
        try:
            config = flowmatch.load_train_config(args.config, config)
        except ValueError as err:
            raise UsageError(str(err))
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)

    header, rows = _load_dataset(dataset_path)
    pairs = [pair for _, pair in rows if pair is not None]
    if not pairs:
        raise UsageError(f"dataset has no ground-truth rows: {dataset_path}")

    net = None
    if args.checkpoint is not None:
        _require_file(args.checkpoint, "checkpoint")
        net = vfnet.load_checkpoint(args.checkpoint)
        if net.config.cond_dim != header.cond_dim:
            raise UsageError(
                f"checkpoint expects condition dim {net.config.cond_dim}, "
                f"dataset has {header.cond_dim}")

    net_config = vfnet.NetConfig(cond_dim=header.cond_dim)
    manifest = RunManifest(
        command="train",
        seed=config.seed,
        config={
            "train": dataclasses.asdict(config),
            "net": dataclasses.asdict(net.config if net else net_config),
            "resumed": args.checkpoint is not None,
        },
        inputs={"dataset": str(dataset_path)},
    )
    watch = _Stopwatch()

    net, history = flowmatch.train(pairs, config, net_config, net=net)
    watch.lap("train")

    checkpoint_path = out / "checkpoint.txt"
    loss_path = out / "loss.csv"
    vfnet.save_checkpoint(checkpoint_path, net)
    flowmatch.write_loss_history(loss_path, history)
    watch.lap("write")
    watch.total()

    manifest.outputs = {"checkpoint": str(checkpoint_path), "loss": str(loss_path)}
    manifest.timings = watch.timings
    manifest.write(out / "manifest.json")
    print(f"trained {len(history)} steps, final loss {history[-1][2]:.6g}, "
          f"checkpoint at {checkpoint_path}")
    return 0


def cmd_infer(args) -> int:
    out = _out_dir(args)
    checkpoint_path = _require_file(args.checkpoint, "checkpoint")
    net = vfnet.load_checkpoint(checkpoint_path)

    header, rows = _load_dataset(args.dataset)
    conds = [cond for cond, _ in rows]
    if not conds:
        raise UsageError(f"dataset has no rows: {args.dataset}")
    if header.cond_dim != net.config.cond_dim:
        raise UsageError(
            f"checkpoint expects condition dim {net.config.cond_dim}, "
            f"dataset has {header.cond_dim}")

    solver = sampler.SolverConfig(method=args.method, steps=args.steps)
    manifest = RunManifest(
        command="infer",
        seed=args.seed,
        config={
            "solver": dataclasses.asdict(solver),
            "samples": args.samples,
        },
        inputs={"checkpoint": str(checkpoint_path), "dataset": str(args.dataset)},
    )
    watch = _Stopwatch()

    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    estimates = sampler.estimate_sequence(net, conds, solver, args.samples, rng)
    traj = trajeval.compose_trajectory(
        se3.RelativePose.identity(),
        [se3.state_to_pose(e.mean_state) for e in estimates])
    watch.lap("sample")

    estimates_path = out / "estimates.csv"
    est_traj_path = out / "est.tum"
    sampler.write_estimates_csv(estimates_path, estimates)
    trajeval.write_tum(est_traj_path, traj)
    watch.lap("write")
    watch.total()

    manifest.outputs = {"estimates": str(estimates_path), "trajectory": str(est_traj_path)}
    manifest.timings = watch.timings
    manifest.write(out / "manifest.json")
    print(f"estimated {len(estimates)} motions ({args.samples} samples each) "
          f"to {estimates_path}")
    return 0


def _scale_aligned(est, gt, scale_mode: str):
    """Apply relative-translation scale alignment to an estimated trajectory."""
    if scale_mode == "none":
        return est
    rels = trajeval.scale_align(
        synthworld.relative_motions(est), synthworld.relative_motions(gt),
        scale_mode)
    rebuilt = trajeval.compose_trajectory(est.poses[0], rels)
    return synthworld.Trajectory(est.stamps, rebuilt.poses)


def _mean_spread(estimates_path):
    """Mean per-component sampling std, split into rotation/translation."""
    rows = sampler.read_estimates_csv(estimates_path)
    stds = np.stack([std for _, std in rows])
    return float(np.mean(stds[:, :3])), float(np.mean(stds[:, 3:]))


def cmd_eval(args) -> int:
    out = _out_dir(args)
    est = _read_trajectory(args.est, "estimated trajectory")
    gt = _read_trajectory(args.gt, "ground-truth trajectory")
    if len(est) != len(gt):
        raise UsageError(
            f"trajectory length mismatch: estimate has {len(est)} poses, "
            f"ground truth has {len(gt)}")

    name = args.name or Path(args.est).stem
    manifest = RunManifest(
        command="eval",
        seed=0,
        config={"align": args.align, "scale": args.scale, "name": name},
        inputs={"est": str(args.est), "gt": str(args.gt)},
    )
    watch = _Stopwatch()

    aligned_est = _scale_aligned(est, gt, args.scale)
    ate_rmse = trajeval.ate(aligned_est, gt, args.align)
    std_rot, std_trans = (
        _mean_spread(_require_file(args.estimates, "estimates file"))
        if args.estimates is not None else (float("nan"), float("nan")))
    watch.lap("evaluate")

    metrics_path = out / "metrics.csv"
    trajeval.write_metrics_csv(metrics_path, [
        (name, args.align, args.scale, ate_rmse, std_rot, std_trans),
    ])
    watch.total()

    manifest.outputs = {"metrics": str(metrics_path)}
    manifest.timings = watch.timings
    manifest.write(out / "manifest.json")
    print(f"ate_rmse {ate_rmse:.17g} (align={args.align}, scale={args.scale})")
    return 0


def cmd_ablate_steps(args) -> int:
    out = _out_dir(args)
    checkpoint_path = _require_file(args.checkpoint, "checkpoint")
    net = vfnet.load_checkpoint(checkpoint_path)
    header, rows = _load_dataset(args.dataset)
    conds = [cond for cond, _ in rows]
    if header.cond_dim != net.config.cond_dim:
        raise UsageError(
            f"checkpoint expects condition dim {net.config.cond_dim}, "
            f"dataset has {header.cond_dim}")
    gt = _read_trajectory(args.gt, "ground-truth trajectory")
    if len(conds) != len(gt) - 1:
        raise UsageError(
            f"dataset has {len(conds)} motions but ground truth has "
            f"{len(gt)} poses; expected {len(gt) - 1}")

    manifest = RunManifest(
        command="ablate-steps",
        seed=args.seed,
        config={
            "method": args.method,
            "steps": args.steps,
            "samples": args.samples,
            "align": args.align,
            "scale": args.scale,
        },
        inputs={
            "checkpoint": str(checkpoint_path),
            "dataset": str(args.dataset),
            "gt": str(args.gt),
        },
    )
    watch = _Stopwatch()

    table = []
    for steps in args.steps:
        solver = sampler.SolverConfig(method=args.method, steps=steps)
        # Fresh generator per row: rows differ only in the integrator.
        rng = np.random.default_rng(np.random.SeedSequence(args.seed))
        estimates = sampler.estimate_sequence(net, conds, solver,
                                              args.samples, rng)
        est = trajeval.compose_trajectory(
            se3.RelativePose.identity(),
            [se3.state_to_pose(e.mean_state) for e in estimates])
        est = _scale_aligned(est, gt, args.scale)
        table.append((steps, trajeval.ate(est, gt, args.align)))
        watch.lap(f"steps_{steps}")
    watch.total()

    ablation_path = out / "ablation.csv"
    with open(ablation_path, "w") as fh:
        fh.write("steps,ate_rmse\n")
        for steps, ate_rmse in table:
            fh.write("%d,%.17g\n" % (steps, ate_rmse))

    manifest.outputs = {"ablation": str(ablation_path)}
    manifest.timings = watch.timings
    manifest.write(out / "manifest.json")
    for steps, ate_rmse in table:
        print(f"steps {steps:4d}: ate_rmse {ate_rmse:.17g}")
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motionflow",
        description="Generative relative-pose estimation pipeline.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="synthesize a scenario dataset")
    gen.add_argument("--kind", choices=TRAJECTORY_KINDS, default="figure8")
    gen.add_argument("--n", type=_pose_count, default=200,
                     help="number of trajectory poses (pairs = n - 1)")
    gen.add_argument("--ambiguity", type=_unit_interval, default=0.0,
                     help="scale-observability suppression in [0, 1]")
    gen.add_argument("--noise", type=_nonnegative_float, default=0.0,
                     help="condition noise sigma")
    gen.add_argument("--cond-dim", type=_positive_int,
                     default=synthworld.DEFAULT_COND_DIM)
    gen.add_argument("--name", default=None, help="scenario name (default: kind)")
    gen.add_argument("--seed", type=_nonnegative_int, default=0)
    gen.add_argument("--out", required=True, help="output directory")
    gen.set_defaults(func=cmd_gen)

    train = sub.add_parser("train", help="fit a vector field on a dataset")
    train.add_argument("--dataset", required=True)
    train.add_argument("--config", default=None,
                       help="key=value training config file")
    train.add_argument("--checkpoint", default=None,
                       help="resume from this checkpoint")
    train.add_argument("--seed", type=_nonnegative_int, default=None,
                       help="overrides the config seed")
    train.add_argument("--out", required=True)
    train.set_defaults(func=cmd_train)

    infer = sub.add_parser("infer", help="sample motions for every condition")
    infer.add_argument("--checkpoint", required=True)
    infer.add_argument("--dataset", required=True,
                       help="conditions to estimate (ground truth ignored)")
    infer.add_argument("--method", choices=sampler.SOLVER_METHODS,
                       default="midpoint")
    infer.add_argument("--steps", type=_positive_int, default=5)
    infer.add_argument("--samples", type=_positive_int, default=10,
                       help="flow samples per condition")
    infer.add_argument("--seed", type=_nonnegative_int, default=0)
    infer.add_argument("--out", required=True)
    infer.set_defaults(func=cmd_infer)

    ev = sub.add_parser("eval", help="trajectory error against ground truth")
    ev.add_argument("est", help="estimated trajectory (TUM format)")
    ev.add_argument("gt", help="ground-truth trajectory (TUM format)")
    ev.add_argument("--align", choices=trajeval.ALIGN_MODES, default="sim3")
    ev.add_argument("--scale", choices=trajeval.SCALE_MODES, default="none",
                    help="relative-translation rescaling")
    ev.add_argument("--estimates", default=None,
                    help="estimates CSV for sampling-spread columns")
    ev.add_argument("--name", default=None, help="scenario column value")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_eval)

    ablate = sub.add_parser("ablate-steps",
                            help="ATE versus integrator step count")
    ablate.add_argument("--checkpoint", required=True)
    ablate.add_argument("--dataset", required=True)
    ablate.add_argument("--gt", required=True,
                        help="ground-truth trajectory (TUM format)")
    ablate.add_argument("--steps", type=_step_list, default=[2, 5, 10],
                        help="comma-separated step counts")
    ablate.add_argument("--method", choices=sampler.SOLVER_METHODS,
                        default="midpoint")
    ablate.add_argument("--samples", type=_positive_int, default=10)
    ablate.add_argument("--align", choices=trajeval.ALIGN_MODES, default="sim3")
    ablate.add_argument("--scale", choices=trajeval.SCALE_MODES, default="none")
    ablate.add_argument("--seed", type=_nonnegative_int, default=0)
    ablate.add_argument("--out", required=True)
    ablate.set_defaults(func=cmd_ablate_steps)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (flowmatch.TrainingDivergedError, sampler.IntegrationDivergedError,
            trajeval.DegenerateTrajectoryError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
