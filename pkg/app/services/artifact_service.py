"""
Reading and writing run directories.

Tables are CSV through pandas, the arrival log is JSONL and every JSON document
is written with sorted keys so identical runs produce identical bytes.
"""

import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
from pydantic import ValidationError

from app.core.exceptions import CorruptArtifact, MissingArtifact, OutputNotWritable
from app.schemas.frame import JOINT_ORDER
from app.schemas.session import RunManifest, SessionArtifacts

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
GROUND_TRUTH = "ground_truth.csv"
TRILATERATED = "trilaterated.csv"
EVENTS = "events.jsonl"
SUMMARY = "summary.json"
REPORT = "report.json"
TRACE_OVERLAY = "trace_overlay.csv"
TIMING_HISTOGRAM = "timing_histogram.csv"
TIMING_ERRORS = "timing_errors.csv"

GROUND_TRUTH_COLUMNS = ["iteration", "joint", "x_mm", "y_mm", "z_mm", "capture_time_us"]
TRILATERATED_COLUMNS = ["iteration", "joint", "x_mm", "y_mm", "z_mm", "server_time_us"]
RAW_COLUMNS = ["iteration", "seq", "client_ts_us", "joint", "depth_mm", "theta1_rad", "theta2_rad"]
EVENT_KEYS = ("client", "seq", "server_time_us")


def raw_name(client_id: int) -> str:
    return f"raw_k{client_id}.csv"


def write_json(path: Path, document: Any) -> None:
    try:
        path.write_text(json.dumps(document, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputNotWritable(path, e.strerror or str(e))


def read_json(path: Path) -> Any:
    if not path.is_file():
        raise MissingArtifact(path.name)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CorruptArtifact(path.name, str(e))


def write_table(path: Path, rows: List[Any], columns: List[str]) -> None:
    frame = pd.DataFrame([asdict(row) if not isinstance(row, dict) else row for row in rows], columns=columns)
    write_frame(path, frame)


def write_frame(path: Path, frame: pd.DataFrame) -> None:
    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        raise OutputNotWritable(path, e.strerror or str(e))


def read_table(path: Path, columns: Optional[List[str]] = None) -> pd.DataFrame:
    if not path.is_file():
        raise MissingArtifact(path.name)
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise CorruptArtifact(path.name, str(e))
    missing = [c for c in columns or [] if c not in frame.columns]
    if missing:
        raise CorruptArtifact(path.name, f"missing columns {missing}")
    return frame


def raw_rows(artifacts: SessionArtifacts, client_id: int) -> List[Dict[str, Any]]:
    rows: List[Dict[str, Any]] = []
    for received in artifacts.raw_frames.get(client_id, []):
        frame = received.frame
        for joint, m in zip(JOINT_ORDER, frame.joints):
            rows.append(
                {
                    "iteration": received.iteration,
                    "seq": frame.seq,
                    "client_ts_us": frame.client_ts,
                    "joint": joint.value,
                    "depth_mm": m.depth,
                    "theta1_rad": m.theta1,
                    "theta2_rad": m.theta2,
                }
            )
    return rows


def write_artifacts(artifacts: SessionArtifacts, out_dir: Union[str, Path], manifest: RunManifest) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputNotWritable(out, e.strerror or str(e))

    write_json(out / MANIFEST, manifest.model_dump(mode="json"))
    write_table(out / GROUND_TRUTH, artifacts.ground_truth, GROUND_TRUTH_COLUMNS)
    write_table(out / TRILATERATED, artifacts.trilaterated, TRILATERATED_COLUMNS)
    for client_id in sorted(artifacts.raw_frames):
        write_table(out / raw_name(client_id), raw_rows(artifacts, client_id), RAW_COLUMNS)
    try:
        with (out / EVENTS).open("w", encoding="utf-8") as f:
            for event in artifacts.events:
                f.write(json.dumps(asdict(event), sort_keys=True) + "\n")
    except OSError as e:
        raise OutputNotWritable(out / EVENTS, e.strerror or str(e))
    write_json(out / SUMMARY, artifacts.summary.model_dump(mode="json"))

    logger.info(f"Wrote session artifacts to {out}")
    return out


def _event_record(line_no: int, line: str) -> Dict[str, int]:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorruptArtifact(EVENTS, f"line {line_no}: {e}")
    if not isinstance(record, dict) or not all(isinstance(record.get(k), int) for k in EVENT_KEYS):
        raise CorruptArtifact(EVENTS, f"line {line_no}: expected integer {', '.join(EVENT_KEYS)}")
    return {k: record[k] for k in EVENT_KEYS}


def read_events(run_dir: Union[str, Path]) -> pd.DataFrame:
    path = Path(run_dir) / EVENTS
    if not path.is_file():
        raise MissingArtifact(EVENTS)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as e:
        raise CorruptArtifact(EVENTS, str(e))
    records = [_event_record(n, line) for n, line in enumerate(lines, start=1) if line.strip()]
    return pd.DataFrame(records, columns=list(EVENT_KEYS))


def read_manifest(run_dir: Union[str, Path]) -> RunManifest:
    try:
        return RunManifest.model_validate(read_json(Path(run_dir) / MANIFEST))
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"])
        raise CorruptArtifact(MANIFEST, f"'{key}': {first['msg']}")


def read_raw(run_dir: Union[str, Path], client_ids: List[int]) -> Dict[int, pd.DataFrame]:
    return {client_id: read_table(Path(run_dir) / raw_name(client_id), RAW_COLUMNS) for client_id in client_ids}
