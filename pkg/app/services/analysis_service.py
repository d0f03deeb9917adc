"""
Evaluation of tracking runs: localization accuracy per method, trace
comparison, inter-frame timing statistics and the seeded noise study.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.core.config import validate_rig_config
from app.core.exceptions import InsufficientSamples, LengthMismatch
from app.schemas.analysis import (
    TRILATERATION,
    AccuracyReport,
    ArtifactAccuracy,
    ArtifactReport,
    HistogramBucket,
    MethodAccuracy,
    NoiseStudyReport,
    TimingReport,
    TraceDiffReport,
)
from app.schemas.geometry import Point3, RigGeometry, ZSide
from app.schemas.schedule import ScheduleConfig, TimingError
from app.schemas.simulation import NoiseModel
from app.services import artifact_service
from app.services.gait_service import observe
from app.services.schedule_service import ordering_ok, slot_for, timing_errors
from app.services.trilateration_service import (
    DEFAULT_Z_SLACK_MM2,
    layout_vertices,
    radii_array,
    single_sensor_locate_array,
    trilaterate_array,
)

logger = logging.getLogger(__name__)

AXES = ("x", "y", "z")
SINGLE_METHODS = ("k1", "k2", "k3")
HISTOGRAM_EDGES_MS = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]


# --- localization accuracy ---

def localization_errors(reference: Point3, singles: Sequence[Point3], trilaterated: Point3) -> AccuracyReport:
    errors = {f"k{i}": reference.distance_to(p) for i, p in enumerate(singles, start=1)}
    errors[TRILATERATION] = reference.distance_to(trilaterated)
    winner = min(errors, key=errors.get)
    return AccuracyReport(errors=errors, winner=winner)


def _method_accuracy(errors: np.ndarray) -> MethodAccuracy:
    errors = errors[~np.isnan(errors)]
    if errors.size == 0:
        return MethodAccuracy(count=0)
    return MethodAccuracy(count=int(errors.size), mean_mm=float(errors.mean()), median_mm=float(np.median(errors)))


def noise_reduction_study(
    rig: RigGeometry,
    target: Point3,
    *,
    sigma_depth: float = 10.0,
    sigma_angle: float = 0.002,
    trials: int = 10_000,
    seed: int = 0,
    side: ZSide = ZSide.ABOVE,
    z_slack_mm2: float = DEFAULT_Z_SLACK_MM2,
) -> NoiseStudyReport:
    """
    Monte-Carlo comparison of single-sensor relocation against trilateration.

    Each trial perturbs every sensor's exact (D, theta1, theta2) view of the
    target with independent Gaussian noise; trials whose spheres do not meet
    are counted as unsolved and left out of the trilateration statistics.
    """
    rng = np.random.default_rng(seed)
    truth = target.as_array()
    singles: Dict[str, np.ndarray] = {}
    radii = np.empty((trials, 3))
    for index in (1, 2, 3):
        exact = observe(rig, index, target, NoiseModel.ideal())
        depth = exact.depth + rng.normal(0.0, sigma_depth, trials)
        theta1 = exact.theta1 + rng.normal(0.0, sigma_angle, trials)
        theta2 = exact.theta2 + rng.normal(0.0, sigma_angle, trials)
        located = single_sensor_locate_array(rig, index, depth, theta1, theta2)
        singles[f"k{index}"] = np.linalg.norm(located - truth, axis=1)
        radii[:, index - 1] = radii_array(depth, theta1, theta2)

    points, solved = trilaterate_array(rig, radii, side, z_slack_mm2=z_slack_mm2)
    tri_errors = np.linalg.norm(points - truth, axis=1)

    methods = {name: _method_accuracy(errors) for name, errors in singles.items()}
    methods[TRILATERATION] = _method_accuracy(tri_errors)

    best_single_median = min(methods[name].median_mm for name in SINGLE_METHODS)
    tri = methods[TRILATERATION]
    ratio = None
    if tri.median_mm is not None and best_single_median > 0:
        ratio = tri.median_mm / best_single_median
    best_mean = tri.mean_mm is not None and all(tri.mean_mm < methods[name].mean_mm for name in SINGLE_METHODS)

    unsolved = int((~solved).sum())
    if unsolved:
        logger.info(f"Noise study: {unsolved} of {trials} trials had non-intersecting spheres")
    return NoiseStudyReport(
        trials=trials,
        seed=seed,
        sigma_depth_mm=sigma_depth,
        sigma_angle_rad=sigma_angle,
        target=target,
        methods=methods,
        unsolved=unsolved,
        median_ratio=ratio,
        trilateration_best_mean=best_mean,
    )


# --- trace comparison ---

def trace_diff_std(a: pd.DataFrame, b: pd.DataFrame) -> TraceDiffReport:
    """
    Std of the difference between two joint traces, per joint and axis, in cm.

    Traces are frames with iteration, joint, x_mm, y_mm, z_mm columns and must
    cover exactly the same (iteration, joint) samples.
    """
    keys = ["iteration", "joint"]
    if len(a) != len(b):
        raise LengthMismatch(f"Traces have {len(a)} and {len(b)} samples")
    if a.duplicated(keys).any() or b.duplicated(keys).any():
        raise LengthMismatch("Traces contain repeated (iteration, joint) samples")
    merged = a.merge(b, on=keys, suffixes=("_a", "_b"), how="inner")
    if len(merged) != len(a):
        raise LengthMismatch(f"Only {len(merged)} of {len(a)} samples are aligned between the traces")

    diffs = pd.DataFrame({"joint": merged["joint"]})
    for axis in AXES:
        diffs[axis] = (merged[f"{axis}_mm_a"] - merged[f"{axis}_mm_b"]) / 10.0

    per_axis: Dict[str, Dict[str, float]] = {}
    stds: List[float] = []
    for joint, group in diffs.groupby("joint", sort=True):
        if len(group) < 2:
            raise InsufficientSamples(f"Joint {joint} has {len(group)} sample(s)")
        per_axis[joint] = {axis: float(group[axis].std(ddof=0)) for axis in AXES}
        stds.extend(per_axis[joint].values())
    if not per_axis:
        raise InsufficientSamples()

    pooled = diffs[list(AXES)].to_numpy().ravel()
    return TraceDiffReport(
        per_axis=per_axis,
        total_cm=float(np.std(pooled)),
        mean_of_stds_cm=float(np.mean(stds)),
        samples=len(merged),
    )


# --- timing ---

def _bucket_label(lower: float, upper: Optional[float]) -> str:
    if lower == 0.0:
        return f"<={upper:g}ms"
    if upper is None:
        return f">{lower:g}ms"
    return f"{lower:g}-{upper:g}ms"


def timing_report(
    errors: Sequence[TimingError],
    cfg: Optional[ScheduleConfig] = None,
    sequence_gaps: int = 0,
) -> TimingReport:
    cfg = cfg or ScheduleConfig()
    magnitudes = np.array([abs(e.error_ms) for e in errors], dtype=np.float64)
    count = int(magnitudes.size)

    edges = [0.0] + HISTOGRAM_EDGES_MS
    histogram: List[HistogramBucket] = []
    for lower, upper in zip(edges, edges[1:] + [None]):
        if upper is None:
            in_bucket = magnitudes > lower
        elif lower == 0.0:
            in_bucket = magnitudes <= upper
        else:
            in_bucket = (magnitudes > lower) & (magnitudes <= upper)
        n = int(in_bucket.sum())
        histogram.append(
            HistogramBucket(
                label=_bucket_label(lower, upper),
                lower_ms=lower,
                upper_ms=upper,
                count=n,
                fraction=n / count if count else 0.0,
            )
        )

    max_error: Dict[int, float] = {}
    for e in errors:
        max_error[e.client] = max(max_error.get(e.client, 0.0), abs(e.error_ms))

    times = [e.server_time_us for e in errors]
    span_s = (max(times) - min(times)) / 1_000_000 if times else 0.0
    return TimingReport(
        frame_count=count,
        fraction_within_1ms=histogram[0].count / count if count else 1.0,
        max_error_ms=max_error,
        histogram=histogram,
        span_s=span_s,
        ordering_ok=ordering_ok(errors, cfg),
        sequence_gaps=sequence_gaps,
    )


def arrivals_from_events(events: pd.DataFrame) -> List[tuple]:
    ordered = events.sort_values(["client", "seq"], kind="mergesort")
    return [
        (int(row.client), int(row.seq), int(row.server_time_us))
        for row in ordered.itertuples(index=False)
    ]


# --- run directories ---

def _single_sensor_errors(rig: RigGeometry, raw: Dict[int, pd.DataFrame], truth: pd.DataFrame) -> Dict[str, np.ndarray]:
    errors: Dict[str, np.ndarray] = {}
    for client_id, frame in sorted(raw.items()):
        merged = frame.merge(truth, on=["iteration", "joint"], how="inner")
        located = single_sensor_locate_array(
            rig,
            client_id,
            merged["depth_mm"].to_numpy(),
            merged["theta1_rad"].to_numpy(),
            merged["theta2_rad"].to_numpy(),
        )
        reference = merged[["x_mm", "y_mm", "z_mm"]].to_numpy()
        errors[f"k{client_id}"] = np.linalg.norm(located - reference, axis=1)
    return errors


def trace_overlay(truth: pd.DataFrame, trilaterated: pd.DataFrame) -> pd.DataFrame:
    merged = truth.merge(trilaterated, on=["iteration", "joint"], suffixes=("_truth", "_tri"), how="inner")
    parts = []
    for axis in AXES:
        parts.append(
            pd.DataFrame(
                {
                    "iteration": merged["iteration"],
                    "joint": merged["joint"],
                    "axis": axis,
                    "truth_mm": merged[f"{axis}_mm_truth"],
                    "trilaterated_mm": merged[f"{axis}_mm_tri"],
                }
            )
        )
    overlay = pd.concat(parts, ignore_index=True)
    return overlay.sort_values(["iteration", "joint", "axis"], kind="mergesort").reset_index(drop=True)


def analyze_artifacts(run_dir: Union[str, Path]) -> ArtifactReport:
    """Recompute every statistic of a run directory and write the report files"""
    run_dir = Path(run_dir)
    manifest = artifact_service.read_manifest(run_dir)
    config = validate_rig_config(manifest.config, source="manifest config")
    rig = layout_vertices(config.rig.l12, config.rig.l13, config.rig.l23)

    truth = artifact_service.read_table(
        run_dir / artifact_service.GROUND_TRUTH, artifact_service.GROUND_TRUTH_COLUMNS
    )
    trilaterated = artifact_service.read_table(
        run_dir / artifact_service.TRILATERATED, artifact_service.TRILATERATED_COLUMNS
    )
    raw = artifact_service.read_raw(run_dir, config.schedule.clients)
    events = artifact_service.read_events(run_dir)

    # accuracy against ground truth
    errors = _single_sensor_errors(rig, raw, truth)
    aligned = trilaterated.merge(truth, on=["iteration", "joint"], suffixes=("", "_truth"), how="inner")
    tri_errors = np.linalg.norm(
        aligned[["x_mm", "y_mm", "z_mm"]].to_numpy() - aligned[["x_mm_truth", "y_mm_truth", "z_mm_truth"]].to_numpy(),
        axis=1,
    )
    errors[TRILATERATION] = tri_errors
    methods = {name: _method_accuracy(values) for name, values in errors.items()}
    ranked = [name for name, m in methods.items() if m.median_mm is not None]
    winner = min(ranked, key=lambda name: methods[name].median_mm) if ranked else None
    accuracy = ArtifactAccuracy(
        methods=methods,
        winner=winner,
        max_trilateration_error_mm=float(tri_errors.max()) if tri_errors.size else None,
    )

    trace_diff = None
    if len(aligned):
        truth_aligned = aligned[["iteration", "joint", "x_mm_truth", "y_mm_truth", "z_mm_truth"]].rename(
            columns={"x_mm_truth": "x_mm", "y_mm_truth": "y_mm", "z_mm_truth": "z_mm"}
        )
        try:
            trace_diff = trace_diff_std(aligned[["iteration", "joint", "x_mm", "y_mm", "z_mm"]], truth_aligned)
        except InsufficientSamples as e:
            logger.warning(f"Skipping trace comparison: {e.detail}")

    # timing from the arrival log
    error_set = timing_errors(arrivals_from_events(events), config.schedule)
    timing = timing_report(error_set.errors, config.schedule, sequence_gaps=len(error_set.gaps))
    violations = sum(
        1
        for row in events.itertuples(index=False)
        if int(row.server_time_us) < 0 or slot_for(config.schedule, int(row.server_time_us)) != int(row.client)
    )

    report = ArtifactReport(
        iterations_planned=config.iterations,
        iterations_trilaterated=int(trilaterated["iteration"].nunique()) if len(trilaterated) else 0,
        trilaterated_rows=len(trilaterated),
        accuracy=accuracy,
        trace_diff=trace_diff,
        timing=timing,
        slot_violations=violations,
        slots_respected=violations == 0,
    )

    artifact_service.write_json(run_dir / artifact_service.REPORT, report.model_dump(mode="json"))
    artifact_service.write_frame(run_dir / artifact_service.TRACE_OVERLAY, trace_overlay(truth, trilaterated))
    artifact_service.write_frame(
        run_dir / artifact_service.TIMING_HISTOGRAM,
        pd.DataFrame([b.model_dump() for b in timing.histogram]),
    )
    artifact_service.write_frame(
        run_dir / artifact_service.TIMING_ERRORS,
        pd.DataFrame(
            [{"client": e.client, "seq": e.seq, "error_ms": e.error_ms} for e in error_set.errors],
            columns=["client", "seq", "error_ms"],
        ),
    )
    logger.info(
        f"Analysis of {run_dir}: {report.trilaterated_rows} trilaterated rows, "
        f"{timing.fraction_within_1ms:.2%} of frames within 1 ms"
    )
    return report
