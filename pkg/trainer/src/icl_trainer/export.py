"""Prediction export: benchmark stream files in, record files out.

The benchmark's ``gen`` command materializes every evaluation task as a
stream file (``#fields: scenario_id replication i x y y_clean m``, one row
per demonstration point i = 0..T).  Export replays those exact points through
the trained model — token k of the prompt is (x_k, y_{k-1}) — and records the
prediction at each query point as one row of the benchmark's record format
(``#fields: learner_id scenario_id replication t x_query y_true y_pred``,
t = demonstrations conditioned on).  Because (x_query, y_true) are copied
from the stream file verbatim at full float64 precision, the produced records
pass the benchmark's replay validation by construction.

Export is deterministic given (checkpoint, stream file): inference runs in
eval mode under ``torch.no_grad`` with fixed float32 arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from icl_trainer.model import DecoderRegressor, tokens_from_xy

__all__ = [
    "StreamError",
    "Stream",
    "read_stream_file",
    "export_records",
    "write_record_file",
]

STREAM_FIELDS = ("scenario_id", "replication", "i", "x", "y", "y_clean", "m")
RECORD_FIELDS = ("learner_id", "scenario_id", "replication", "t", "x_query", "y_true", "y_pred")
RECORD_HEADER = "#fields: " + " ".join(RECORD_FIELDS)


class StreamError(ValueError):
    """Malformed stream file or a request the file cannot satisfy."""


@dataclass
class Stream:
    """One task's demonstration points as read from a stream file."""

    scenario_id: str
    replication: int
    m: int
    xs: np.ndarray
    ys: np.ndarray
    ys_clean: np.ndarray


def read_stream_file(path) -> dict[tuple[str, int], Stream]:
    """Parse a stream file into Streams keyed by (scenario_id, replication)."""
    raw: dict[tuple[str, int], list[tuple[int, float, float, float, int]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#fields:"):
            raise StreamError(f"{path}:1: missing '#fields:' header")
        declared = tuple(first[len("#fields:"):].split())
        if declared != STREAM_FIELDS:
            raise StreamError(f"{path}:1: unexpected field list {list(declared)}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 7:
                raise StreamError(
                    f"{path}:{lineno}: expected 7 tab-separated fields, got {len(parts)}"
                )
            try:
                sid = parts[0]
                rep, i, m = int(parts[1]), int(parts[2]), int(parts[6])
                x, y, y_clean = float(parts[3]), float(parts[4]), float(parts[5])
            except ValueError as exc:
                raise StreamError(f"{path}:{lineno}: {exc}") from exc
            if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(y_clean)):
                raise StreamError(f"{path}:{lineno}: non-finite value")
            raw.setdefault((sid, rep), []).append((i, x, y, y_clean, m))
    streams: dict[tuple[str, int], Stream] = {}
    for (sid, rep), rows in raw.items():
        rows.sort()
        if [r[0] for r in rows] != list(range(len(rows))):
            raise StreamError(f"{path}: stream ({sid!r}, {rep}) has gaps or duplicate indices")
        orders = {r[4] for r in rows}
        if len(orders) != 1:
            raise StreamError(f"{path}: stream ({sid!r}, {rep}) mixes orders {sorted(orders)}")
        streams[(sid, rep)] = Stream(
            scenario_id=sid,
            replication=rep,
            m=orders.pop(),
            xs=np.array([r[1] for r in rows]),
            ys=np.array([r[2] for r in rows]),
            ys_clean=np.array([r[3] for r in rows]),
        )
    return streams


def export_records(
    model: DecoderRegressor,
    streams: dict[tuple[str, int], Stream],
    learner_id: str,
    scenario_id: str,
    reps: int | None = None,
    t_max: int | None = None,
    batch: int = 64,
) -> list[tuple]:
    """Predictions of ``model`` on a scenario's streams, as record rows.

    Produces one row per (replication, t) for t = 1..t_max (default: every
    point the streams carry).  ``reps`` restricts to replications 0..reps-1,
    which must all be present.  A single causal forward pass per task yields
    the prediction at every t at once.
    """
    if not learner_id or any(c.isspace() for c in learner_id):
        raise ValueError(f"learner_id must be non-empty without whitespace: {learner_id!r}")
    selected = sorted(
        (key[1], s) for key, s in streams.items() if key[0] == scenario_id
    )
    if not selected:
        have = sorted({key[0] for key in streams})
        raise StreamError(f"no streams for scenario {scenario_id!r}; file(s) carry {have}")
    if reps is not None:
        by_rep = dict(selected)
        missing = [r for r in range(reps) if r not in by_rep]
        if missing:
            raise StreamError(
                f"scenario {scenario_id!r}: replications {missing[:10]} not in the stream file"
            )
        selected = [(r, by_rep[r]) for r in range(reps)]
    lengths = {len(s.xs) for _, s in selected}
    if len(lengths) != 1:
        raise StreamError(f"scenario {scenario_id!r}: streams have mixed lengths {sorted(lengths)}")
    n_points = lengths.pop()
    horizon = n_points - 1
    if horizon < 1:
        raise StreamError(f"scenario {scenario_id!r}: streams carry no query points")
    t_max = horizon if t_max is None else t_max
    if not 1 <= t_max <= horizon:
        raise StreamError(f"t_max must lie in [1, {horizon}], got {t_max}")

    model.eval()
    rows: list[tuple] = []
    with torch.no_grad():
        for start in range(0, len(selected), batch):
            chunk = selected[start:start + batch]
            xs = torch.tensor(np.stack([s.xs for _, s in chunk]), dtype=torch.float32)
            ys = torch.tensor(np.stack([s.ys for _, s in chunk]), dtype=torch.float32)
            preds = model(tokens_from_xy(xs, ys)).numpy()
            for row_i, (rep, s) in enumerate(chunk):
                for t in range(1, t_max + 1):
                    rows.append(
                        (learner_id, scenario_id, rep, t,
                         float(s.xs[t]), float(s.ys[t]), float(preds[row_i, t]))
                    )
    return rows


def write_record_file(rows, path, comment: str | None = None) -> int:
    """Write record rows in the benchmark's format; returns the row count."""
    lines = []
    for i, (learner, sid, rep, t, x_query, y_true, y_pred) in enumerate(rows):
        if rep < 0 or t < 1:
            raise ValueError(f"row {i}: bad indices replication={rep} t={t}")
        if not all(math.isfinite(v) for v in (x_query, y_true, y_pred)):
            raise ValueError(f"row {i}: non-finite value")
        lines.append(
            f"{learner}\t{sid}\t{rep}\t{t}\t{x_query:.17g}\t{y_true:.17g}\t{y_pred:.17g}\n"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(RECORD_HEADER + "\n")
        if comment:
            fh.write(f"# {comment}\n")
        fh.writelines(lines)
    return len(lines)
