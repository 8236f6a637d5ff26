"""Command-line pipeline around the benchmark.

    gen              materialize task streams + ground-truth records
    baselines        run the Bayesian/IC learners, write prediction records
    ingest-validate  check external record files against the replay
    metrics          error curves (and optional prediction-difference curves)
    profile          performance ratios, MPR tables, performance profiles
    risk             Bayes/excess risk curves and the suboptimality report
    plot             render CSVs (needs matplotlib; CSVs stay authoritative)
    repro            end-to-end pipelines for the benchmark's figure layouts

Every output table starts with a `# config_hash:` line — the SHA-256 (first
16 hex digits) of the canonical JSON of all semantic parameters, so identical
configs are guaranteed to reproduce byte-identical files.  Exit codes:
0 success, 1 bad configuration, 2 bad data, 3 numerical failure.

The ICLBENCH_OUT environment variable overrides the default output directory
(and nothing else); an explicit --out flag always wins.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from iclbench.baselines import LEARNERS, sweep_scenario, to_records
from iclbench.environment import (
    Scenario,
    SeedPolicy,
    load_scenarios,
    sample_task,
    scenario_grid_default,
)
from iclbench.ingest import (
    DataError,
    PredictionRecord,
    read_records,
    validate_against_environment,
    write_records,
    write_streams,
)
from iclbench.metrics import (
    DEFAULT_Q_GRID,
    DEFAULT_TAU_GRID,
    ErrorCurve,
    UnattainableRequirement,
    error_curve,
    mean_performance_ratio,
    squared_prediction_difference,
)
from iclbench.riskinfo import (
    ExcessFloor,
    bayes_risk_curve,
    excess_risk_curve,
    fit_excess_floor,
    lower_bound,
    necessary_conditions,
    suboptimality,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    """Invalid flags or configuration; the message names the offending field."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse's own failures to exit code 1
        raise ConfigError(message)


# --------------------------------------------------------------------------
# shared plumbing


def config_hash(params: dict) -> str:
    """First 16 hex digits of the SHA-256 over canonical JSON."""
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def write_csv(path, columns, rows, hash_: str) -> None:
    lines = [f"# config_hash: {hash_}", ",".join(columns)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {path} ({len(rows)} rows)")


def _resolve_out(args) -> Path:
    out = args.out
    if out is None:
        out = os.environ.get("ICLBENCH_OUT", "out")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_grid(spec: str) -> list[Scenario]:
    if spec == "default9":
        return scenario_grid_default()
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"--scenarios: no such file {spec!r} (or use 'default9')")
    try:
        return load_scenarios(path)
    except ValueError as exc:
        raise ConfigError(f"--scenarios {spec!r}: {exc}") from exc


def _scenario_params(scenarios) -> list[dict]:
    return [asdict(s) for s in sorted(scenarios, key=lambda s: s.id)]


def _check_reps(args, scenarios) -> int | None:
    if args.reps is None:
        return None
    if args.reps < 1:
        raise ConfigError(f"--reps must be >= 1, got {args.reps}")
    cap = min(s.replications for s in scenarios)
    if args.reps > cap:
        raise ConfigError(
            f"--reps {args.reps} exceeds the smallest scenario's replications ({cap})"
        )
    return args.reps


def _parse_learners(text: str, allowed=LEARNERS, flag="--learners") -> list[str]:
    names = [x.strip() for x in text.split(",") if x.strip()]
    if not names:
        raise ConfigError(f"{flag}: empty learner list")
    bad = [n for n in names if allowed is not None and n not in allowed]
    if bad:
        raise ConfigError(f"{flag}: unknown learners {bad}; choose from {list(allowed)}")
    return names


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"{flag}: {exc}") from exc
    if not vals:
        raise ConfigError(f"{flag}: empty list")
    return vals


def _read_record_files(paths, scenarios=None, seeds=None):
    """Read several record files into one {(learner, scenario): RecordSet} map,
    rejecting groups split across files (merging would hide duplicate keys)."""
    groups = {}
    for path in paths:
        try:
            ds = read_records(path, scenarios=scenarios, seeds=seeds)
        except OSError as exc:
            raise ConfigError(f"--records: {exc}") from exc
        for key, rs in ds.groups.items():
            if key in groups:
                raise DataError(
                    f"{path}: group {key} already supplied by an earlier file"
                )
            groups[key] = rs
    return groups


def _curves_by_scenario(groups) -> dict[str, dict[str, ErrorCurve]]:
    out: dict[str, dict[str, ErrorCurve]] = {}
    for (learner, sid), rs in groups.items():
        out.setdefault(sid, {})[learner] = error_curve(rs)
    return out


# --------------------------------------------------------------------------
# gen / baselines (worker-pool friendly)


def _gen_one(s: Scenario, master_seed: int, reps: int | None, out: str, hash_: str) -> str:
    seeds = SeedPolicy(master_seed=master_seed)
    R = s.replications if reps is None else reps
    tasks = [sample_task(s, rep, seeds) for rep in range(R)]
    stream_path = Path(out) / f"streams-{s.id}.tsv"
    n_stream = write_streams(tasks, stream_path, comment=f"config_hash: {hash_}")
    # the ground truth doubles as a prediction record: y_pred is the clean target
    rows = [
        PredictionRecord(
            learner_id="TRUTH",
            scenario_id=s.id,
            replication=task.replication,
            t=t,
            x_query=float(task.xs[t]),
            y_true=float(task.ys[t]),
            y_pred=float(task.ys_clean[t]),
        )
        for task in tasks
        for t in range(1, len(task.xs))
    ]
    rec_path = Path(out) / f"records-TRUTH-{s.id}.tsv"
    n_rec = write_records(rows, rec_path, comment=f"config_hash: {hash_}")
    return f"wrote {stream_path} ({n_stream} rows)\nwrote {rec_path} ({n_rec} rows)"


def _baselines_one(
    s: Scenario, master_seed: int, reps: int | None, learners: tuple[str, ...], out: str, hash_: str
) -> str:
    seeds = SeedPolicy(master_seed=master_seed)
    sweep = sweep_scenario(s, seeds, n_reps=reps)
    lines = []
    for learner in learners:
        path = Path(out) / f"records-{learner}-{s.id}.tsv"
        n = write_records(to_records(sweep, learner), path, comment=f"config_hash: {hash_}")
        lines.append(f"wrote {path} ({n} rows)")
    return "\n".join(lines)


def _run_pool(jobs: int, fn, argtuples) -> list[str]:
    if jobs <= 1 or len(argtuples) <= 1:
        return [fn(*a) for a in argtuples]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*argtuples)))


def cmd_gen(args) -> int:
    scenarios = _load_grid(args.scenarios)
    reps = _check_reps(args, scenarios)
    out = _resolve_out(args)
    hash_ = config_hash(
        {
            "cmd": "gen",
            "scenarios": _scenario_params(scenarios),
            "master_seed": args.master_seed,
            "reps": reps,
        }
    )
    work = [(s, args.master_seed, reps, str(out), hash_) for s in sorted(scenarios, key=lambda s: s.id)]
    for line in _run_pool(args.jobs, _gen_one, work):
        print(line)
    return EXIT_OK


def cmd_baselines(args) -> int:
    scenarios = _load_grid(args.scenarios)
    reps = _check_reps(args, scenarios)
    learners = tuple(_parse_learners(args.learners))
    out = _resolve_out(args)
    hash_ = config_hash(
        {
            "cmd": "baselines",
            "scenarios": _scenario_params(scenarios),
            "master_seed": args.master_seed,
            "reps": reps,
            "learners": list(learners),
        }
    )
    work = [
        (s, args.master_seed, reps, learners, str(out), hash_)
        for s in sorted(scenarios, key=lambda s: s.id)
    ]
    for line in _run_pool(args.jobs, _baselines_one, work):
        print(line)
    return EXIT_OK


# --------------------------------------------------------------------------
# ingest-validate


def cmd_ingest_validate(args) -> int:
    scenarios = _load_grid(args.scenarios)
    seeds = SeedPolicy(master_seed=args.master_seed)
    total_bad = 0
    for path in args.records:
        try:
            ds = read_records(path, scenarios=scenarios)
        except OSError as exc:
            raise ConfigError(f"--records: {exc}") from exc
        report = validate_against_environment(ds, seeds, scenarios, tol=args.tol)
        for sid in sorted(report.checked):
            print(
                f"{path}\t{sid}\tchecked={report.checked[sid]}"
                f"\tmismatches={report.mismatches.get(sid, 0)}"
            )
        if report.first_mismatch:
            print(f"{path}\tfirst mismatch: {report.first_mismatch}")
        total_bad += report.total_mismatches
    if total_bad:
        print(f"FAIL: {total_bad} rows disagree with the environment replay")
        return EXIT_DATA
    print("OK: all records match the environment replay")
    return EXIT_OK


# --------------------------------------------------------------------------
# metrics / profile


def cmd_metrics(args) -> int:
    groups = _read_record_files(args.records)
    hash_ = config_hash(
        {
            "cmd": "metrics",
            "records": sorted(_file_digest(p) for p in args.records),
            "spd_reference": args.spd_reference,
        }
    )
    out = _resolve_out(args)
    rows = []
    for (learner, sid), rs in sorted(groups.items()):
        curve = error_curve(rs)
        for i in range(curve.T):
            rows.append((learner, sid, i + 1, curve.mse[i], curve.stderr[i], curve.n_reps))
    write_csv(out / "curves.csv", ("learner_id", "scenario_id", "t", "mse", "stderr", "n_reps"), rows, hash_)

    if args.spd_reference:
        ref = args.spd_reference
        spd_rows = []
        for (learner, sid), rs in sorted(groups.items()):
            if learner == ref:
                continue
            if (ref, sid) not in groups:
                raise DataError(f"--spd-reference {ref!r}: no records for scenario {sid!r}")
            spd = squared_prediction_difference(rs, groups[(ref, sid)])
            for i in range(spd.T):
                spd_rows.append((learner, ref, sid, i + 1, spd.mse[i], spd.stderr[i], spd.n_reps))
        write_csv(
            out / "spd.csv",
            ("learner_id", "reference_id", "scenario_id", "t", "spd", "stderr", "n_reps"),
            spd_rows,
            hash_,
        )
    return EXIT_OK


def _profile_tables(curves_by_scenario, q_grid, comparison, reference, tau_grid, hash_, out, prefix=""):
    mpr_rows, ratio_rows, profile_rows = [], [], []
    for b in comparison:
        for Q in q_grid:
            try:
                res = mean_performance_ratio(
                    b, Q, curves_by_scenario, reference, comparison, tau_grid=tau_grid
                )
            except UnattainableRequirement as exc:
                log.warning("profile: %s at Q=%g skipped: %s", b, Q, exc)
                continue
            mpr_rows.append((b, Q, res.mpr, res.mpr_coverage, len(res.ratios), len(res.excluded)))
            for sid in sorted(res.ratios):
                ratio_rows.append((b, Q, sid, res.ratios[sid]))
            for tau, rho in zip(res.tau_grid, res.profile):
                profile_rows.append((b, Q, tau, rho))
    if not mpr_rows:
        raise UnattainableRequirement(
            "no (learner, Q) combination produced a defined performance ratio"
        )
    write_csv(
        out / f"{prefix}mpr.csv",
        ("learner_id", "Q", "mpr", "mpr_coverage", "n_scenarios", "n_excluded"),
        mpr_rows,
        hash_,
    )
    write_csv(out / f"{prefix}ratios.csv", ("learner_id", "Q", "scenario_id", "ratio"), ratio_rows, hash_)
    write_csv(out / f"{prefix}profiles.csv", ("learner_id", "Q", "tau", "rho"), profile_rows, hash_)


def cmd_profile(args) -> int:
    comparison = _parse_learners(args.comparison, allowed=None, flag="--comparison")
    if args.reference is not None:
        reference = _parse_learners(args.reference, allowed=None, flag="--reference")
    else:
        # the benchmark layouts pool the subject learner and the strongest
        # classical baseline, which is how the comparison lists are ordered
        reference = comparison[: min(2, len(comparison))]
    if args.Q is not None and args.q_grid is not None:
        raise ConfigError("--Q and --q-grid are mutually exclusive")
    if args.Q is not None:
        q_grid = [args.Q]
    elif args.q_grid is not None:
        q_grid = _parse_floats(args.q_grid, "--q-grid")
    else:
        q_grid = list(DEFAULT_Q_GRID)
    if not all(0.0 < q < 1.0 for q in q_grid):
        raise ConfigError(f"quantile orders must lie in (0, 1), got {q_grid}")
    tau_grid = (
        _parse_floats(args.tau_grid, "--tau-grid") if args.tau_grid else list(DEFAULT_TAU_GRID)
    )

    groups = _read_record_files(args.records)
    curves = _curves_by_scenario(groups)
    have = {learner for by in curves.values() for learner in by}
    missing = [b for b in set(comparison) | set(reference) if b not in have]
    if missing:
        raise DataError(f"no records for learners {sorted(missing)} in the supplied files")

    hash_ = config_hash(
        {
            "cmd": "profile",
            "records": sorted(_file_digest(p) for p in args.records),
            "q_grid": q_grid,
            "tau_grid": tau_grid,
            "comparison": comparison,
            "reference": reference,
        }
    )
    out = _resolve_out(args)
    _profile_tables(curves, q_grid, comparison, reference, tau_grid, hash_, out)
    return EXIT_OK


# --------------------------------------------------------------------------
# risk


def cmd_risk(args) -> int:
    scenarios = _load_grid(args.scenarios)
    by_id = {s.id: s for s in scenarios}
    if args.scenario not in by_id:
        raise ConfigError(f"--scenario: {args.scenario!r} not in the grid {sorted(by_id)}")
    s = by_id[args.scenario]
    reps = _check_reps(args, [s])
    seeds = SeedPolicy(master_seed=args.master_seed)
    out = _resolve_out(args)

    params = {
        "cmd": "risk",
        "scenario": asdict(s),
        "master_seed": args.master_seed,
        "reps": reps,
        "learner": args.learner,
        "t_bar": args.t_bar,
        "delta_xs": args.delta_xs,
        "q_grid": _parse_floats(args.q_grid, "--q-grid") if args.q_grid else None,
        "records": _file_digest(args.records) if args.records else None,
    }
    hash_ = config_hash(params)

    if args.learner and not args.records:
        raise ConfigError("--learner needs --records with that learner's predictions")

    if args.learner:
        groups = _read_record_files([args.records])
        key = (args.learner, s.id)
        if key not in groups:
            raise DataError(
                f"{args.records}: no records for learner {args.learner!r} "
                f"on scenario {s.id!r}"
            )
        rs = groups[key]
        n_reps = reps if reps is not None else int(rs.replication.max()) + 1
        sweep = sweep_scenario(s, seeds, n_reps=n_reps)
        curve = excess_risk_curve(rs, s, sweep=sweep)
    else:
        curve = bayes_risk_curve(s, n_reps=reps, seeds=seeds)

    rows = []
    for t in range(curve.T + 1):
        rows.append(
            (
                s.id,
                curve.learner_id,
                t,
                curve.bayes_risk[t],
                curve.bayes_stderr[t],
                curve.excess_risk[t] if curve.excess_risk is not None else None,
                curve.excess_stderr[t] if curve.excess_stderr is not None else None,
                curve.learner_nll[t] if curve.learner_nll is not None else None,
                curve.oracle_ce[t] if curve.oracle_ce is not None else None,
            )
        )
    suffix = f"-{args.learner}" if args.learner else ""
    write_csv(
        out / f"risk-{s.id}{suffix}.csv",
        (
            "scenario_id",
            "learner_id",
            "t",
            "bayes_risk",
            "bayes_stderr",
            "excess_risk",
            "excess_stderr",
            "learner_nll",
            "oracle_ce",
        ),
        rows,
        hash_,
    )

    if not args.learner:
        return EXIT_OK

    if args.delta_xs is not None:
        t_bar = args.t_bar if args.t_bar is not None else min(100, curve.T)
        floor = ExcessFloor(t_bar=t_bar, delta_xs=args.delta_xs)
    else:
        floor = fit_excess_floor(curve, t_bar=args.t_bar)
    q_grid = params["q_grid"]
    if q_grid is None:
        finite = curve.bayes_risk[np.isfinite(curve.bayes_risk)]
        lo = max(float(finite.min()) * 1.05, 1e-12)
        hi = max(float(curve.bayes_risk[1]), lo * 10.0)
        q_grid = [float(q) for q in np.geomspace(lo, hi, 10)]

    sub_rows = []
    for q in q_grid:
        rep = suboptimality(q, curve)
        try:
            lb = lower_bound(q, floor, curve)
            cond1, cond2 = necessary_conditions(q, floor, curve)
        except ValueError as exc:
            log.warning("risk: lower bound undefined at q=%g: %s", q, exc)
            lb, cond1, cond2 = math.nan, None, None
        sub_rows.append(
            (s.id, args.learner, q, rep.n_bma, rep.subopt, lb, cond1, cond2, floor.t_bar, floor.delta_xs)
        )
    write_csv(
        out / f"subopt-{s.id}-{args.learner}.csv",
        (
            "scenario_id",
            "learner_id",
            "q",
            "n_bma",
            "subopt",
            "lower_bound",
            "condition1",
            "condition2",
            "t_bar",
            "delta_xs",
        ),
        sub_rows,
        hash_,
    )
    return EXIT_OK


# --------------------------------------------------------------------------
# plot / repro


def cmd_plot(args) -> int:
    try:
        from iclbench import plots
    except ImportError as exc:  # matplotlib missing
        raise ConfigError(
            f"plotting needs matplotlib (pip install 'iclbench[plots]'): {exc}"
        ) from exc
    inputs = [
        (args.curves, plots.plot_curves),
        (args.spd, plots.plot_spd),
        (args.profiles, plots.plot_profiles),
        (args.mpr, plots.plot_mpr),
        (args.risk, plots.plot_risk),
    ]
    chosen = [(p, fn) for p, fn in inputs if p]
    if not chosen:
        raise ConfigError("nothing to plot: pass --curves/--spd/--profiles/--mpr/--risk")
    out = _resolve_out(args)
    for path, fn in chosen:
        if not Path(path).exists():
            raise ConfigError(f"no such file: {path}")
        written = fn(path, out, fmt=args.format)
        for w in written:
            print(f"wrote {w}")
    return EXIT_OK


def _repro_sweeps(scenarios, seeds, reps):
    return {s.id: sweep_scenario(s, seeds, n_reps=reps) for s in sorted(scenarios, key=lambda s: s.id)}


def cmd_repro(args) -> int:
    scenarios = _load_grid(args.scenarios)
    reps = _check_reps(args, scenarios)
    seeds = SeedPolicy(master_seed=args.master_seed)
    out = _resolve_out(args)
    subject = args.subject
    params = {
        "cmd": "repro",
        "figure": args.figure,
        "scenarios": _scenario_params(scenarios),
        "master_seed": args.master_seed,
        "reps": reps,
        "subject": subject,
        "records": _file_digest(args.icl_records) if args.icl_records else None,
    }
    hash_ = config_hash(params)

    subject_groups = {}
    if args.icl_records:
        subject_groups = _read_record_files(
            [args.icl_records], scenarios=scenarios, seeds=seeds
        )
        have = {learner for learner, _ in subject_groups}
        if subject not in have:
            raise DataError(
                f"--icl-records: no records for subject {subject!r} (found {sorted(have)})"
            )

    if args.figure in ("1", "2") and subject not in LEARNERS and not args.icl_records:
        raise ConfigError(
            f"--figure {args.figure} needs --icl-records with {subject!r} predictions "
            f"(or pass --subject with one of the built-in learners {list(LEARNERS)})"
        )

    if args.figure == "3a":
        sweeps = _repro_sweeps(scenarios, seeds, reps)
        rows = []
        for sid, sweep in sweeps.items():
            for learner in LEARNERS:
                curve = error_curve(to_records(sweep, learner))
                for i in range(curve.T):
                    rows.append((learner, sid, i + 1, curve.mse[i], curve.stderr[i], curve.n_reps))
        write_csv(
            out / "fig3a-curves.csv",
            ("learner_id", "scenario_id", "t", "mse", "stderr", "n_reps"),
            rows,
            hash_,
        )
        return _maybe_plot(args, out, curves=out / "fig3a-curves.csv")

    if args.figure == "3b":
        sweeps = _repro_sweeps(scenarios, seeds, reps)
        rows = []
        others = ["AIC", "BIC", "BMC", "ENSEMBLE"]
        for sid, sweep in sweeps.items():
            ref_records = to_records(sweep, "BMA")
            sets = [(name, to_records(sweep, name)) for name in others]
            if (subject, sid) in subject_groups:
                sets.append((subject, subject_groups[(subject, sid)]))
            for name, rs in sets:
                spd = squared_prediction_difference(rs, ref_records)
                for i in range(spd.T):
                    rows.append((name, "BMA", sid, i + 1, spd.mse[i], spd.stderr[i], spd.n_reps))
        write_csv(
            out / "fig3b-spd.csv",
            ("learner_id", "reference_id", "scenario_id", "t", "spd", "stderr", "n_reps"),
            rows,
            hash_,
        )
        return _maybe_plot(args, out, spd=out / "fig3b-spd.csv")

    # figures 1 and 2 need learner curves: baselines from sweeps, subject from
    # records (or a built-in learner standing in for it)
    sweeps = _repro_sweeps(scenarios, seeds, reps)
    curves: dict[str, dict[str, ErrorCurve]] = {}
    for sid, sweep in sweeps.items():
        curves[sid] = {
            learner: error_curve(to_records(sweep, learner)) for learner in LEARNERS
        }
    for (learner, sid), rs in subject_groups.items():
        curves.setdefault(sid, {})[learner] = error_curve(rs)

    if args.figure == "1":
        _profile_tables(
            curves,
            list(DEFAULT_Q_GRID),
            comparison=[subject, "BMA"],
            reference=[subject],
            tau_grid=list(DEFAULT_TAU_GRID),
            hash_=hash_,
            out=out,
            prefix="fig1-",
        )
        return _maybe_plot(args, out, mpr=out / "fig1-mpr.csv")

    if args.figure == "2":
        q_grid = [args.Q] if args.Q is not None else [0.2, 0.4, 0.6, 0.8]
        _profile_tables(
            curves,
            q_grid,
            comparison=[subject, "AIC", "BIC", "BMC"],
            reference=[subject, "AIC"],
            tau_grid=list(DEFAULT_TAU_GRID),
            hash_=hash_,
            out=out,
            prefix="fig2-",
        )
        return _maybe_plot(args, out, profiles=out / "fig2-profiles.csv")

    raise ConfigError(f"--figure: unknown figure {args.figure!r}")


def _maybe_plot(args, out, **csvs) -> int:
    if not args.plot:
        return EXIT_OK
    plot_args = argparse.Namespace(
        curves=None, spd=None, profiles=None, mpr=None, risk=None,
        out=str(out), format="pdf",
    )
    for k, v in csvs.items():
        setattr(plot_args, k, str(v))
    return cmd_plot(plot_args)


# --------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(
        prog="iclbench",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, reps=True, jobs=False):
        p.add_argument("--scenarios", default="default9",
                       help="'default9' or a path to a scenario TOML file")
        p.add_argument("--master-seed", type=int, default=0,
                       help="root seed for all task replications (default 0)")
        p.add_argument("--out", default=None,
                       help="output directory (default $ICLBENCH_OUT or ./out)")
        if reps:
            p.add_argument("--reps", type=int, default=None,
                           help="override the number of replications per scenario")
        if jobs:
            p.add_argument("--jobs", type=int, default=1,
                           help="worker processes across scenarios (default 1)")

    p = sub.add_parser("gen", help="materialize task streams and ground-truth records")
    common(p, jobs=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("baselines", help="run baseline learners, write prediction records")
    common(p, jobs=True)
    p.add_argument("--learners", default="BMA,AIC,BIC,BMC,ENSEMBLE",
                   help=f"comma list from {list(LEARNERS)}")
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("ingest-validate", help="validate record files against the replay")
    p.add_argument("--records", nargs="+", required=True, help="record files to check")
    p.add_argument("--scenarios", default="default9")
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-9,
                   help="replay tolerance for x_query/y_true (default 1e-9)")
    p.set_defaults(func=cmd_ingest_validate)

    p = sub.add_parser("metrics", help="error curves from record files")
    p.add_argument("--records", nargs="+", required=True)
    p.add_argument("--spd-reference", default=None,
                   help="also write squared prediction differences against this learner")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("profile", help="performance ratios, MPR, and profiles")
    p.add_argument("--records", nargs="+", required=True)
    p.add_argument("--Q", type=float, default=None, help="single quantile order in (0,1)")
    p.add_argument("--q-grid", default=None, help="comma list of quantile orders")
    p.add_argument("--comparison", required=True,
                   help="comma list of learners whose best sample complexity is the denominator")
    p.add_argument("--reference", default=None,
                   help="learners pooled for the requirement quantile "
                        "(default: first two of --comparison)")
    p.add_argument("--tau-grid", default=None,
                   help="comma list of ratio thresholds (default: 60 points on [1, 3])")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("risk", help="Bayes/excess risk curves and suboptimality report")
    common(p)
    p.add_argument("--scenario", required=True, help="scenario id within the grid")
    p.add_argument("--learner", default=None, help="learner id inside --records")
    p.add_argument("--records", default=None, help="record file with the learner's predictions")
    p.add_argument("--t-bar", type=int, default=None,
                   help="first step the excess floor applies to (default min(100, T))")
    p.add_argument("--delta-xs", type=float, default=None,
                   help="fix the excess floor instead of fitting it")
    p.add_argument("--q-grid", default=None,
                   help="comma list of risk requirements (default: 10 geometric points)")
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("plot", help="render CSV tables (requires matplotlib)")
    p.add_argument("--curves", default=None)
    p.add_argument("--spd", default=None)
    p.add_argument("--profiles", default=None)
    p.add_argument("--mpr", default=None)
    p.add_argument("--risk", default=None)
    p.add_argument("--format", default="pdf", choices=("pdf", "svg", "png"))
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("repro", help="end-to-end figure pipelines")
    common(p)
    p.add_argument("--figure", required=True, choices=("1", "2", "3a", "3b"))
    p.add_argument("--icl-records", default=None,
                   help="record file with the subject learner's predictions")
    p.add_argument("--subject", default="ICL",
                   help="learner id the figure is about (default ICL; a built-in "
                        "learner name works as a records-free stand-in)")
    p.add_argument("--Q", type=float, default=None, help="restrict figure 2 to one quantile")
    p.add_argument("--plot", action="store_true", help="also render the CSVs")
    p.set_defaults(func=cmd_repro)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, UnattainableRequirement) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
