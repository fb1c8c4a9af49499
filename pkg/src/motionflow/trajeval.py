"""Trajectory evaluation: composition, alignment, and absolute error.

ATE here is the root-mean-square of per-pose position errors after an
optional alignment:

- none: positions compared as-is
- se3: rigid (rotation + translation) least-squares alignment
- sim3: similarity (scale + rotation + translation), the 7-DoF protocol
  used when monocular scale is unobservable

The similarity alignment is the closed-form SVD solution of the
orthogonal Procrustes problem with Umeyama's determinant-sign correction
and variance-ratio scale.  Translation scale alignment (rescaling
estimated per-pair translations against ground truth) is a separate,
deliberately simpler tool applied to relative motions before composing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import se3
from .synthworld import Trajectory

ALIGN_MODES = ("none", "se3", "sim3")
SCALE_MODES = ("none", "per_pair", "global")

# Two points whose centered cloud has second singular value below this
# (relative to the first) span no plane; rotation is then unrecoverable.
COLLINEAR_TOL = 1e-9

# Stamp association window (seconds) for externally recorded files.
STAMP_WINDOW = 0.02


class DegenerateTrajectoryError(ValueError):
    """Point cloud is collinear (or a single point); alignment is underdetermined."""


@dataclass(frozen=True, eq=False)
class AlignmentResult:
    """Similarity transform mapping estimate onto ground truth, plus its RMSE."""

    scale: float
    rotation: se3.Rotation
    translation: np.ndarray
    ate_rmse: float

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.ate_rmse < 0:
            raise ValueError("ate_rmse must be >= 0")
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        t.flags.writeable = False
        object.__setattr__(self, "translation", t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * (points @ self.rotation.matrix().T) + self.translation


def compose_trajectory(start: se3.RelativePose, rels) -> Trajectory:
    """Chain relative motions onto a start pose; stamps are 0..n seconds."""
    poses = [start]
    for rel in rels:
        poses.append(se3.compose(poses[-1], rel))
    return Trajectory(np.arange(len(poses), dtype=np.float64), poses)


def scale_align(est_rels, gt_rels, mode: str = "per_pair"):
    """Rescale estimated translations against ground truth; rotations untouched.

    per_pair: each estimate takes its ground-truth pair's translation norm
    (pairs with zero ground-truth norm, or zero estimated norm, pass
    through unchanged).  global: one least-squares scale
    s* = sum<est, gt> / sum<est, est> applied to every pair.
    """
    est_rels, gt_rels = list(est_rels), list(gt_rels)
    if len(est_rels) != len(gt_rels):
        raise ValueError(
            f"scale_align needs equal lengths, got {len(est_rels)} vs {len(gt_rels)}"
        )
    if mode not in ("per_pair", "global"):
        raise ValueError(f"unknown scale mode {mode!r}")
    if mode == "per_pair":
        out = []
        for est, gt in zip(est_rels, gt_rels):
            gt_norm = float(np.linalg.norm(gt.translation))
            est_norm = float(np.linalg.norm(est.translation))
            if gt_norm == 0.0 or est_norm == 0.0:
                out.append(est)
            else:
                out.append(se3.RelativePose(
                    est.rotation, est.translation * (gt_norm / est_norm)))
        return out
    num = sum(float(np.dot(e.translation, g.translation))
              for e, g in zip(est_rels, gt_rels))
    den = sum(float(np.dot(e.translation, e.translation)) for e in est_rels)
    s = num / den if den > 0.0 else 1.0
    return [se3.RelativePose(e.rotation, e.translation * s) for e in est_rels]


def _centered(points: np.ndarray):
    mean = points.mean(axis=0)
    centered = points - mean
    return mean, centered


def _check_rank(centered: np.ndarray, label: str) -> None:
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[0] < 1e-12 or sv[1] < COLLINEAR_TOL * sv[0]:
        raise DegenerateTrajectoryError(
            f"{label} trajectory positions are collinear; similarity "
            "alignment is underdetermined"
        )


def umeyama_align(est: Trajectory, gt: Trajectory, with_scale: bool = True) -> AlignmentResult:
    """Least-squares similarity (or rigid) alignment of est onto gt.

    Minimizes sum ||s R p_est + t - p_gt||^2 in closed form: SVD of the
    cross-covariance with the sign of the smallest singular direction
    flipped when needed to keep det(R) = +1, scale from the variance
    ratio (1 when with_scale is false).
    """
    if len(est) != len(gt):
        raise ValueError(f"trajectory lengths differ: {len(est)} vs {len(gt)}")
    if len(est) < 3:
        raise ValueError("alignment needs at least 3 poses")
    x = est.positions()
    y = gt.positions()
    mu_x, xc = _centered(x)
    mu_y, yc = _centered(y)
    _check_rank(xc, "estimated")
    _check_rank(yc, "ground-truth")

    cov = yc.T @ xc / len(est)
    u, d, vt = np.linalg.svd(cov)
    sign = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[2, 2] = -1.0
    rot_matrix = u @ sign @ vt
    if with_scale:
        var_x = float((xc * xc).sum()) / len(est)
        scale = float(np.trace(np.diag(d) @ sign)) / var_x
    else:
        scale = 1.0
    trans = mu_y - scale * (rot_matrix @ mu_x)
    resid = (scale * (x @ rot_matrix.T) + trans) - y
    rmse = float(np.sqrt(np.mean(np.sum(resid * resid, axis=1))))
    return AlignmentResult(scale, se3.rotation_from_matrix(rot_matrix), trans, rmse)


def ate(est: Trajectory, gt: Trajectory, align: str = "sim3") -> float:
    """Absolute trajectory error (RMSE, meters) after the requested alignment."""
    if align not in ALIGN_MODES:
        raise ValueError(f"unknown align mode {align!r}; expected one of {ALIGN_MODES}")
    if len(est) != len(gt):
        raise ValueError(f"trajectory lengths differ: {len(est)} vs {len(gt)}")
    if align == "none":
        diff = est.positions() - gt.positions()
        return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))
    return umeyama_align(est, gt, with_scale=(align == "sim3")).ate_rmse


def rotational_rmse(est: Trajectory, gt: Trajectory) -> float:
    """Supplementary metric: RMSE of per-pose geodesic angles (radians)."""
    if len(est) != len(gt):
        raise ValueError(f"trajectory lengths differ: {len(est)} vs {len(gt)}")
    angles = [
        se3.geodesic_angle(a.rotation, b.rotation)
        for a, b in zip(est.poses, gt.poses)
    ]
    return float(np.sqrt(np.mean(np.square(angles))))


def associate_by_stamps(est: Trajectory, gt: Trajectory,
                        window: float = STAMP_WINDOW):
    """Greedy nearest-stamp matching for externally recorded trajectories.

    Returns (est_indices, gt_indices), both sorted by estimate index, with
    each pose matched at most once and stamp gaps below window seconds.
    """
    candidates = []
    for i, s_est in enumerate(est.stamps):
        diffs = np.abs(gt.stamps - s_est)
        j = int(np.argmin(diffs))
        if diffs[j] <= window:
            candidates.append((float(diffs[j]), i, j))
    candidates.sort()
    used_est, used_gt = set(), set()
    matches = []
    for _, i, j in candidates:
        if i in used_est or j in used_gt:
            continue
        used_est.add(i)
        used_gt.add(j)
        matches.append((i, j))
    matches.sort()
    est_idx = [i for i, _ in matches]
    gt_idx = [j for _, j in matches]
    return est_idx, gt_idx


def subset(traj: Trajectory, indices) -> Trajectory:
    return Trajectory(traj.stamps[list(indices)],
                      [traj.poses[i] for i in indices])


# --- file formats -------------------------------------------------------------


def write_tum(path, traj: Trajectory) -> None:
    """TUM format: `timestamp tx ty tz qx qy qz qw` per line."""
    with open(path, "w") as fh:
        for stamp, pose in zip(traj.stamps, traj.poses):
            w, x, y, z = pose.rotation.q
            tx, ty, tz = pose.translation
            fh.write(" ".join("%.17g" % v for v in (stamp, tx, ty, tz, x, y, z, w)) + "\n")


def read_tum(path) -> Trajectory:
    stamps = []
    poses = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                raise ValueError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from err
            stamp, tx, ty, tz, qx, qy, qz, qw = vals
            stamps.append(stamp)
            poses.append(se3.RelativePose(se3.Rotation([qw, qx, qy, qz]), [tx, ty, tz]))
    if not poses:
        raise ValueError(f"{path}: no poses found")
    return Trajectory(np.array(stamps), poses)


def write_kitti(path, traj: Trajectory) -> None:
    """KITTI format: 12 reals per line, the row-major 3x4 [R|t]."""
    with open(path, "w") as fh:
        for pose in traj.poses:
            m = np.hstack([pose.rotation.matrix(), pose.translation[:, None]])
            fh.write(" ".join("%.17g" % v for v in m.reshape(-1)) + "\n")


def read_kitti(path) -> Trajectory:
    poses = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            vals = line.split()
            if len(vals) != 12:
                raise ValueError(f"{path}:{lineno}: expected 12 fields, got {len(vals)}")
            try:
                m = np.array([float(v) for v in vals]).reshape(3, 4)
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from err
            poses.append(se3.RelativePose(se3.rotation_from_matrix(m[:, :3]), m[:, 3]))
    if not poses:
        raise ValueError(f"{path}: no poses found")
    return Trajectory(np.arange(len(poses), dtype=np.float64), poses)


METRICS_HEADER = "scenario,align_mode,scale_mode,ate_rmse,mean_std_rot,mean_std_trans"


def write_metrics_csv(path, rows) -> None:
    """Metric report rows: (scenario, align_mode, scale_mode, ate_rmse,
    mean_std_rot, mean_std_trans); the std columns may be NaN when no
    sampling spread is available."""
    with open(path, "w") as fh:
        fh.write(METRICS_HEADER + "\n")
        for scenario, align_mode, scale_mode, ate_rmse, std_rot, std_trans in rows:
            fh.write("%s,%s,%s,%.17g,%.17g,%.17g\n" % (
                scenario, align_mode, scale_mode, ate_rmse, std_rot, std_trans))
