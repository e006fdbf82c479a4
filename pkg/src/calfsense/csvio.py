"""CSV persistence for sessions and feature matrices.

Session files have the header ``t_s,ch01,...,ch16,label``: time in seconds
with exactly six decimals (microsecond resolution), voltages with ten
decimals, and the motion code (or an empty cell) per row. Files are UTF-8
with LF line endings.
"""

from __future__ import annotations

import csv
import os
import re
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import CHANNEL_NAMES, N_CHANNELS, MotionLabel, Session
from .errors import MalformedHeader, NonNumericCell, RowArity

SESSION_HEADER = ("t_s",) + CHANNEL_NAMES + ("label",)
FEATURE_NAMES = ("mean", "rms", "std", "energy")
FEATURE_HEADER = ("label", "subject", "set") + tuple(
    f"{ch}_{name}" for ch in CHANNEL_NAMES for name in FEATURE_NAMES
)

_NAME_RE = re.compile(r"^(?P<subject>.+)_(?P<motion>A\d{1,2}|REST)_(?P<set>[1-4])$")


def session_filename(subject_id: str, motion: MotionLabel, set_index: int) -> str:
    return f"{subject_id}_{motion.value}_{set_index}.csv"


def _format_time(ts_us: int) -> str:
    sign = "-" if ts_us < 0 else ""
    q, r = divmod(abs(int(ts_us)), 1_000_000)
    return f"{sign}{q}.{r:06d}"


def write_csv(session: Session, path) -> None:
    label = session.motion.value if session.motion is not None else ""
    lines = [",".join(SESSION_HEADER)]
    for ts, row in zip(session.timestamps_us.tolist(), session.volts.tolist()):
        cells = ",".join(f"{v:.10f}" for v in row)
        lines.append(f"{_format_time(ts)},{cells},{label}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_csv(
    path,
    subject_id: Optional[str] = None,
    set_index: Optional[int] = None,
    sample_rate_hz: Optional[float] = None,
) -> Session:
    """Read a session file.

    Subject and set default to the values encoded in a
    ``subject_motion_set.csv`` file name. The motion is the first non-empty
    label cell. Without ``sample_rate_hz`` the rate is inferred from the
    first and last timestamps.

    Raises:
        MalformedHeader, RowArity, NonNumericCell: with the 1-based line number.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SESSION_HEADER:
            raise MalformedHeader(f"expected header {','.join(SESSION_HEADER)}", row=1)
        ts, volts, labels = [], [], []
        width = len(SESSION_HEADER)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise RowArity(f"expected {width} cells, got {len(row)}", row=lineno)
            try:
                t = float(row[0])
                vals = [float(c) for c in row[1 : 1 + N_CHANNELS]]
            except ValueError:
                bad = next(c for c in row[: 1 + N_CHANNELS] if not _is_number(c))
                raise NonNumericCell(f"non-numeric cell {bad!r}", row=lineno) from None
            ts.append(int(round(t * 1e6)))
            volts.append(vals)
            labels.append(row[-1].strip())

    motion = next((MotionLabel.parse(l) for l in labels if l), None)
    m = _NAME_RE.match(path.stem)
    if subject_id is None:
        subject_id = m.group("subject") if m else path.stem
    if set_index is None:
        set_index = int(m.group("set")) if m else 1
    ts_arr = np.array(ts, dtype=np.int64)
    if sample_rate_hz is None:
        if ts_arr.size >= 2 and ts_arr[-1] > ts_arr[0]:
            sample_rate_hz = (ts_arr.size - 1) / ((ts_arr[-1] - ts_arr[0]) / 1e6)
        else:
            sample_rate_hz = 60.0
    return Session(
        subject_id,
        motion,
        set_index,
        ts_arr,
        np.array(volts, dtype=float).reshape(len(volts), N_CHANNELS),
        None,
        sample_rate_hz,
    )


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def write_feature_csv(path, features: np.ndarray, labels: Sequence, subjects: Sequence,
                      sets: Sequence) -> None:
    features = np.asarray(features, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURE_HEADER)
        for row, lab, subj, st in zip(features, labels, subjects, sets):
            lab = lab.value if isinstance(lab, MotionLabel) else str(lab)
            w.writerow([lab, subj, int(st)] + [repr(float(v)) for v in row])


def write_rows(path, header: Sequence[str], rows) -> None:
    """Plain CSV writer shared by reports (LF line endings)."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)
