"""Precision-recall evaluation of partial-map localization.

A map-trajectory pair is replayed through the filter with one of the
outside-likelihood methods; each measurement step yields (hypothesis
probability, position-correct?, ground truth in map?).  Sweeping the validity
threshold over those records gives one precision-recall curve per method,
averaged per environment and then across environments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import structure as _structure
from . import views as _views
from .grid import FREE, OCCUPIED, UNKNOWN, OccupancyGrid, Pose, is_inside, wrap_angle
from .modelio import PriorBundle
from .pfilter import FilterConfig, run_localization
from .sim import Trajectory

METHODS = ("hierarchical_adaptive", "prior_only", "frequency_only", "scaled_counts")
DEFAULT_FIXED = (1e-4, 1e-3, 1e-2, 1e-1, 0.3)


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple = tuple(np.round(np.arange(0.05, 1.0, 0.05), 2)) + (0.99,)
    tolerance_xy: float = 2.0
    tolerance_theta: float = math.radians(30.0)
    fixed_likelihoods: tuple = DEFAULT_FIXED

    def __post_init__(self):
        if list(self.thresholds) != sorted(self.thresholds):
            raise ValueError("thresholds must be sorted ascending")
        if self.tolerance_xy <= 0 or self.tolerance_theta <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class StepOutcome:
    probability: float | None   # None when no hypothesis existed
    correct: bool
    in_map: bool


@dataclass
class PairResult:
    environment: str
    method: str
    steps: list[StepOutcome]


@dataclass(frozen=True)
class PRPoint:
    method: str
    theta: float
    precision: float | None
    recall: float
    n_valid: int
    n_correct_valid: int
    time_in_map: int
    time_correct: int


def known_area_ratio(partial: OccupancyGrid, estimated_total_cells: int | None = None) -> float:
    """Explored fraction of the environment: known cells over an estimate of
    the full environment size (the partial map's grid extent by default)."""
    known = int(np.count_nonzero(partial.cells != UNKNOWN))
    total = estimated_total_cells or partial.cells.size
    return max(known / total, 1e-3)


def make_outside_model(method: str, bundle: PriorBundle,
                       partial: OccupancyGrid | None = None):
    """Outside-likelihood model for a method name.  'fixed:<L>' gives the
    constant-likelihood baseline; the other names select a structural-model
    variant.  Both produce observation likelihoods over the view alphabet,
    the same units the filter uses for in-map particles."""
    if method.startswith("fixed:"):
        return _structure.FixedOutsideModel(float(method.split(":", 1)[1]))
    if method == "hierarchical_adaptive":
        mode = "adaptive"
    elif method in ("prior_only", "frequency_only"):
        mode = method
    elif method == "scaled_counts":
        mode = "scaled_counts"
    else:
        raise ValueError(f"unknown method {method!r}")
    scale = 1.0
    if mode == "scaled_counts":
        if partial is None:
            raise ValueError("scaled_counts needs the partial map for its area ratio")
        scale = 1.0 / known_area_ratio(partial)
    return _structure.init_structure(bundle.alpha, bundle.obs_model, mode=mode,
                                     count_scale=scale, marginals=bundle.marginals)


def _pose_correct(hyp_pose: Pose, gt: Pose, cfg: EvalConfig) -> bool:
    return (math.hypot(hyp_pose.x - gt.x, hyp_pose.y - gt.y) <= cfg.tolerance_xy
            and abs(wrap_angle(hyp_pose.theta - gt.theta)) <= cfg.tolerance_theta)


def apply_offset(pose: Pose, offset) -> Pose:
    """Ground-truth pose expressed in the partial map's frame."""
    dx, dy, dth = offset
    c, s = math.cos(dth), math.sin(dth)
    return Pose(c * pose.x - s * pose.y + dx,
                s * pose.x + c * pose.y + dy,
                pose.theta + dth)


def evaluate_pair(partial: OccupancyGrid, trajectory: Trajectory, method: str,
                  bundle: PriorBundle, filter_config: FilterConfig,
                  eval_config: EvalConfig, environment: str = "",
                  offset=(0.0, 0.0, 0.0), view_field=None) -> PairResult:
    """Replay one map-trajectory pair under a method's outside-likelihood
    rule and judge every measurement-update hypothesis against ground truth.

    Pass a precomputed ViewField when replaying the same partial map many
    times; otherwise one is built per call.
    """
    if bundle.alpha.shape[0] != bundle.alphabet.nu:
        raise ValueError("prior and alphabet disagree on the number of views")
    outside = make_outside_model(method, bundle, partial)
    fc = replace(filter_config, extraction=bundle.extraction)
    records = run_localization(partial, outside, bundle.alphabet, trajectory, fc,
                               obs_model=bundle.obs_model, view_field=view_field)
    steps = []
    for rec in records:
        gt = apply_offset(trajectory.records[rec.step].true_pose, offset)
        in_map = is_inside(partial, gt)
        if rec.hypothesis is None:
            steps.append(StepOutcome(None, False, in_map))
        else:
            steps.append(StepOutcome(rec.hypothesis.probability,
                                     _pose_correct(rec.hypothesis.pose, gt, eval_config),
                                     in_map))
    return PairResult(environment=environment, method=method, steps=steps)


def precision_recall(results: list[PairResult], eval_config: EvalConfig) -> list[PRPoint]:
    """One PR point per method per threshold.  Ratios are computed per
    environment and averaged across environments; the count fields are summed
    over everything."""
    if not results:
        raise ValueError("no pair results to aggregate")
    methods = sorted({r.method for r in results})
    points = []
    for method in methods:
        per_env: dict[str, list[StepOutcome]] = {}
        for r in results:
            if r.method == method:
                per_env.setdefault(r.environment, []).extend(r.steps)
        for theta in eval_config.thresholds:
            precisions, recalls = [], []
            n_valid = n_correct = in_map = correct_t = 0
            for steps in per_env.values():
                nv = sum(1 for s in steps
                         if s.probability is not None and s.probability >= theta)
                nc = sum(1 for s in steps
                         if s.probability is not None and s.probability >= theta
                         and s.correct)
                tim = sum(1 for s in steps if s.in_map)
                tc = sum(1 for s in steps
                         if s.in_map and s.probability is not None
                         and s.probability >= theta and s.correct)
                n_valid += nv
                n_correct += nc
                in_map += tim
                correct_t += tc
                if nv > 0:
                    precisions.append(nc / nv)
                if tim > 0:
                    recalls.append(tc / tim)
            precision = float(np.mean(precisions)) if precisions else None
            recall = float(np.mean(recalls)) if recalls else 0.0
            points.append(PRPoint(method=method, theta=float(theta),
                                  precision=precision, recall=recall,
                                  n_valid=n_valid, n_correct_valid=n_correct,
                                  time_in_map=in_map, time_correct=correct_t))
    return points


def pr_table(points: list[PRPoint]) -> str:
    lines = ["method,theta,precision,recall,n_valid,n_correct,time_in_map,time_correct"]
    for p in points:
        prec = "" if p.precision is None else repr(p.precision)
        lines.append(f"{p.method},{p.theta!r},{prec},{p.recall!r},"
                     f"{p.n_valid},{p.n_correct_valid},{p.time_in_map},{p.time_correct}")
    return "\n".join(lines) + "\n"


def auc_pr(points: list[PRPoint]) -> float:
    """Area under the precision-recall curve of one method, trapezoid rule
    over recall.  Undefined-precision points take precision 1 (no valid
    hypotheses means no wrong ones); the curve is anchored at recall 0 with
    its best precision."""
    pts = sorted(((p.recall, 1.0 if p.precision is None else p.precision)
                  for p in points))
    if not pts:
        return 0.0
    best_p = max(p for _, p in pts)
    xs = [0.0] + [r for r, _ in pts]
    ys = [best_p] + [p for _, p in pts]
    return float(np.trapezoid(ys, xs)) if hasattr(np, "trapezoid") else float(np.trapz(ys, xs))


def precision_at_recall(points: list[PRPoint], recall: float) -> float | None:
    """Best precision the method achieves at recall >= the requested level."""
    vals = [1.0 if p.precision is None else p.precision
            for p in points if p.recall >= recall]
    return max(vals) if vals else None
