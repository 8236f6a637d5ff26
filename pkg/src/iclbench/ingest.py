"""Prediction wire format: one row per (learner, scenario, replication, t).

The format is UTF-8 text, newline-delimited, tab-separated, with a single
header line.  Floats are written with 17 significant digits so that float64
values round-trip bit-exactly.  This file format is the only contract between
the benchmark and external learners: anything that can produce these rows can
be scored.

    #fields: learner_id scenario_id replication t x_query y_true y_pred

``t`` counts demonstrations conditioned on (1..T); ``x_query`` / ``y_true``
are the query input and its noisy observation, which must match the
environment's deterministic replay for (scenario_id, replication, t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np

from iclbench.environment import Scenario, SeedPolicy, sample_task

__all__ = [
    "DataError",
    "PredictionRecord",
    "RecordSet",
    "Dataset",
    "TaskStream",
    "ValidationReport",
    "write_records",
    "read_records",
    "write_streams",
    "read_streams",
    "validate_against_environment",
    "REPLAY_TOL",
]

FIELDS = ("learner_id", "scenario_id", "replication", "t", "x_query", "y_true", "y_pred")
HEADER = "#fields: " + " ".join(FIELDS)
STREAM_FIELDS = ("scenario_id", "replication", "i", "x", "y", "y_clean", "m")
STREAM_HEADER = "#fields: " + " ".join(STREAM_FIELDS)
REPLAY_TOL = 1e-9


class DataError(Exception):
    """Malformed or inconsistent prediction data (message carries line numbers)."""


@dataclass(frozen=True)
class PredictionRecord:
    """A single learner prediction after t demonstrations."""

    learner_id: str
    scenario_id: str
    replication: int
    t: int
    x_query: float
    y_true: float
    y_pred: float


@dataclass
class RecordSet:
    """Column-oriented records for one (learner, scenario) group."""

    learner_id: str
    scenario_id: str
    replication: np.ndarray
    t: np.ndarray
    x_query: np.ndarray
    y_true: np.ndarray
    y_pred: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[PredictionRecord]:
        for i in range(len(self.t)):
            yield PredictionRecord(
                self.learner_id,
                self.scenario_id,
                int(self.replication[i]),
                int(self.t[i]),
                float(self.x_query[i]),
                float(self.y_true[i]),
                float(self.y_pred[i]),
            )


@dataclass
class Dataset:
    """All record groups read from one source, keyed by (learner, scenario)."""

    groups: dict[tuple[str, str], RecordSet] = field(default_factory=dict)

    def __len__(self) -> int:
        return sum(len(g) for g in self.groups.values())

    def learners(self) -> list[str]:
        return sorted({k[0] for k in self.groups})

    def scenarios(self) -> list[str]:
        return sorted({k[1] for k in self.groups})

    def get(self, learner_id: str, scenario_id: str) -> RecordSet:
        return self.groups[(learner_id, scenario_id)]


def _iter_plain(records) -> Iterator[PredictionRecord]:
    if isinstance(records, Dataset):
        for group in records.groups.values():
            yield from group
    elif isinstance(records, RecordSet):
        yield from records
    else:
        for r in records:
            if isinstance(r, RecordSet):
                yield from r
            else:
                yield r


def write_records(records, path, comment: str | None = None) -> int:
    """Write records (iterable / RecordSet / Dataset); returns the row count.

    Values are validated before anything is written: non-finite floats and
    out-of-range indices are hard errors.  ``comment`` becomes a `# `-prefixed
    line after the field header (readers skip it).
    """
    rows = []
    for i, r in enumerate(_iter_plain(records)):
        if not r.learner_id or any(c.isspace() for c in r.learner_id):
            raise DataError(f"record {i}: learner_id must be non-empty without whitespace")
        if r.replication < 0 or r.t < 1:
            raise DataError(f"record {i}: bad indices replication={r.replication} t={r.t}")
        for name in ("x_query", "y_true", "y_pred"):
            if not math.isfinite(getattr(r, name)):
                raise DataError(f"record {i}: non-finite {name}")
        rows.append(
            f"{r.learner_id}\t{r.scenario_id}\t{r.replication}\t{r.t}"
            f"\t{r.x_query:.17g}\t{r.y_true:.17g}\t{r.y_pred:.17g}\n"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(HEADER + "\n")
        if comment:
            fh.write(f"# {comment}\n")
        fh.writelines(rows)
    return len(rows)


def read_records(
    path,
    scenarios: Mapping[str, Scenario] | Iterable[Scenario] | None = None,
    seeds: SeedPolicy | None = None,
) -> Dataset:
    """Read and validate a record file into a Dataset.

    Duplicate keys, malformed rows, and non-finite values are hard errors with
    line numbers.  When ``scenarios`` is given, scenario ids and t bounds are
    checked; when ``seeds`` is also given, every row's (x_query, y_true) must
    match the environment replay within REPLAY_TOL.
    """
    scenario_map = _as_scenario_map(scenarios)
    columns: dict[tuple[str, str], list[tuple[int, int, float, float, float]]] = {}
    seen: set[tuple[str, str, int, int]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#fields:"):
            raise DataError(f"{path}:1: missing '#fields:' header")
        declared = first[len("#fields:"):].split()
        if tuple(declared) != FIELDS:
            raise DataError(f"{path}:1: unexpected field list {declared}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 7:
                raise DataError(f"{path}:{lineno}: expected 7 tab-separated fields, got {len(parts)}")
            learner, scenario_id = parts[0], parts[1]
            try:
                rep, t = int(parts[2]), int(parts[3])
                x_query, y_true, y_pred = float(parts[4]), float(parts[5]), float(parts[6])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if rep < 0:
                raise DataError(f"{path}:{lineno}: negative replication {rep}")
            if t < 1:
                raise DataError(f"{path}:{lineno}: t must be >= 1, got {t}")
            if not (math.isfinite(x_query) and math.isfinite(y_true) and math.isfinite(y_pred)):
                raise DataError(f"{path}:{lineno}: non-finite value")
            if scenario_map is not None:
                s = scenario_map.get(scenario_id)
                if s is None:
                    raise DataError(f"{path}:{lineno}: unknown scenario {scenario_id!r}")
                if t > s.T:
                    raise DataError(f"{path}:{lineno}: t={t} exceeds horizon T={s.T}")
                if rep >= s.replications:
                    raise DataError(
                        f"{path}:{lineno}: replication {rep} outside the scenario's "
                        f"{s.replications} replications"
                    )
            key = (learner, scenario_id, rep, t)
            if key in seen:
                raise DataError(f"{path}:{lineno}: duplicate key {key}")
            seen.add(key)
            columns.setdefault((learner, scenario_id), []).append(
                (rep, t, x_query, y_true, y_pred)
            )
    dataset = Dataset()
    for (learner, scenario_id), rows in columns.items():
        arr = np.array(rows, dtype=np.float64)
        dataset.groups[(learner, scenario_id)] = RecordSet(
            learner_id=learner,
            scenario_id=scenario_id,
            replication=arr[:, 0].astype(np.int64),
            t=arr[:, 1].astype(np.int64),
            x_query=arr[:, 2],
            y_true=arr[:, 3],
            y_pred=arr[:, 4],
        )
    if seeds is not None:
        if scenario_map is None:
            raise ValueError("replay validation needs scenario definitions")
        report = validate_against_environment(dataset, seeds, scenario_map.values())
        if report.total_mismatches:
            raise DataError(
                f"{path}: {report.total_mismatches} rows disagree with the environment "
                f"replay (first: {report.first_mismatch})"
            )
    return dataset


def _as_scenario_map(scenarios) -> dict[str, Scenario] | None:
    if scenarios is None:
        return None
    if isinstance(scenarios, Mapping):
        return dict(scenarios)
    return {s.id: s for s in scenarios}


@dataclass
class TaskStream:
    """One task's full demonstration stream as read back from a stream file.

    Unlike prediction records (t >= 1), streams carry every point i = 0..T,
    including the first demonstration — external consumers replaying exact
    prompts need it.
    """

    scenario_id: str
    replication: int
    m: int
    xs: np.ndarray
    ys: np.ndarray
    ys_clean: np.ndarray


def write_streams(tasks, path, comment: str | None = None) -> int:
    """Write full task streams, one row per (replication, point index).

    Same conventions as the prediction format: UTF-8, tab-separated, 17
    significant digits, `#fields:` header.  Returns the row count.
    """
    rows = []
    for task in tasks:
        for i in range(len(task.xs)):
            rows.append(
                f"{task.scenario_id}\t{task.replication}\t{i}"
                f"\t{task.xs[i]:.17g}\t{task.ys[i]:.17g}\t{task.ys_clean[i]:.17g}"
                f"\t{task.m}\n"
            )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(STREAM_HEADER + "\n")
        if comment:
            fh.write(f"# {comment}\n")
        fh.writelines(rows)
    return len(rows)


def read_streams(path) -> dict[tuple[str, int], TaskStream]:
    """Read a stream file back into TaskStreams keyed by (scenario, replication)."""
    raw: dict[tuple[str, int], list[tuple[int, float, float, float, int]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#fields:"):
            raise DataError(f"{path}:1: missing '#fields:' header")
        declared = first[len("#fields:"):].split()
        if tuple(declared) != STREAM_FIELDS:
            raise DataError(f"{path}:1: unexpected field list {declared}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 7:
                raise DataError(f"{path}:{lineno}: expected 7 tab-separated fields, got {len(parts)}")
            try:
                sid = parts[0]
                rep, i, m = int(parts[1]), int(parts[2]), int(parts[6])
                x, y, y_clean = float(parts[3]), float(parts[4]), float(parts[5])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(y_clean)):
                raise DataError(f"{path}:{lineno}: non-finite value")
            raw.setdefault((sid, rep), []).append((i, x, y, y_clean, m))
    out: dict[tuple[str, int], TaskStream] = {}
    for (sid, rep), rows in raw.items():
        rows.sort()
        idx = [r[0] for r in rows]
        if idx != list(range(len(rows))):
            raise DataError(
                f"{path}: stream ({sid!r}, {rep}) has gaps or duplicates in its point indices"
            )
        ms = {r[4] for r in rows}
        if len(ms) != 1:
            raise DataError(f"{path}: stream ({sid!r}, {rep}) mixes order classes {sorted(ms)}")
        out[(sid, rep)] = TaskStream(
            scenario_id=sid,
            replication=rep,
            m=ms.pop(),
            xs=np.array([r[1] for r in rows]),
            ys=np.array([r[2] for r in rows]),
            ys_clean=np.array([r[3] for r in rows]),
        )
    return out


@dataclass
class ValidationReport:
    """Replay-validation summary: per-scenario mismatch counts (report-only)."""

    mismatches: dict[str, int]
    checked: dict[str, int]
    unknown_scenarios: list[str]
    first_mismatch: str | None = None

    @property
    def total_mismatches(self) -> int:
        return sum(self.mismatches.values()) + len(self.unknown_scenarios)

    @property
    def ok(self) -> bool:
        return self.total_mismatches == 0


def validate_against_environment(
    dataset: Dataset,
    seeds: SeedPolicy,
    scenarios: Iterable[Scenario],
    tol: float = REPLAY_TOL,
) -> ValidationReport:
    """Check every record's (x_query, y_true) against the deterministic replay.

    A record with t demonstrations queries the task's point of index t, whose
    noisy observation is the stream value at the same index.  Order of records
    does not matter.  Returns counts; never raises on mismatches.
    """
    scenario_map = {s.id: s for s in scenarios}
    mismatches: dict[str, int] = {}
    checked: dict[str, int] = {}
    unknown: list[str] = []
    first: str | None = None
    task_cache: dict[tuple[str, int], tuple[np.ndarray, np.ndarray]] = {}
    for (learner, scenario_id), rs in sorted(dataset.groups.items()):
        s = scenario_map.get(scenario_id)
        if s is None:
            unknown.append(scenario_id)
            continue
        bad = 0
        for rep in np.unique(rs.replication):
            key = (scenario_id, int(rep))
            if key not in task_cache:
                task = sample_task(s, int(rep), seeds)
                task_cache[key] = (task.xs, task.ys)
            xs, ys = task_cache[key]
            mask = rs.replication == rep
            ts = rs.t[mask]
            dx = np.abs(rs.x_query[mask] - xs[ts])
            dy = np.abs(rs.y_true[mask] - ys[ts])
            wrong = (dx > tol) | (dy > tol)
            bad += int(wrong.sum())
            if first is None and wrong.any():
                i = int(np.argmax(wrong))
                first = (
                    f"learner={learner} scenario={scenario_id} replication={int(rep)} "
                    f"t={int(ts[i])}"
                )
        mismatches[scenario_id] = mismatches.get(scenario_id, 0) + bad
        checked[scenario_id] = checked.get(scenario_id, 0) + len(rs)
    return ValidationReport(
        mismatches=mismatches, checked=checked, unknown_scenarios=unknown, first_mismatch=first
    )
