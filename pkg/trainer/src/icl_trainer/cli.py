"""Command-line interface.

    icl-trainer train    --scenario eps0.3-w1 --preset desk --out model.pt
    icl-trainer export   --checkpoint model.pt --streams streams-eps0.3-w1.tsv \\
                         --out records-ICL-eps0.3-w1.tsv
    icl-trainer info     --checkpoint model.pt
    icl-trainer moments  --scenario eps0.3-w1 --n 1000000 [--streams FILE]

Exit codes: 0 success, 1 configuration/usage error, 2 data error or training
divergence.  Scenario parameters come from the default-grid id convention
(``eps<noise var>-w<weight var>``) or, for anything else, a scenario TOML
file via --scenario-config.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import fields

import numpy as np
import torch

from icl_trainer.config import (
    ScenarioParams,
    TrainConfig,
    load_scenario_params,
    parse_grid_scenario_id,
)
from icl_trainer.export import (
    StreamError,
    export_records,
    read_stream_file,
    write_record_file,
)
from icl_trainer.sampling import PromptSampler
from icl_trainer.training import (
    TrainingDiverged,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep control of the exit code
        raise ConfigError(message)


def _scenario_params(args) -> ScenarioParams:
    try:
        if args.scenario_config:
            return load_scenario_params(args.scenario_config, args.scenario)
        return parse_grid_scenario_id(args.scenario)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"--scenario: {exc}") from exc


_PRESETS = ("reference", "desk")
_OVERRIDE_FIELDS = (
    "layers", "heads", "embed_dim", "T_train", "batch", "lr",
    "iterations", "curriculum_step", "curriculum_period", "seed",
)


def _build_config(args) -> TrainConfig:
    scenario = _scenario_params(args)
    overrides = {
        name: getattr(args, name) for name in _OVERRIDE_FIELDS
        if getattr(args, name) is not None
    }
    try:
        if args.preset == "desk":
            return TrainConfig.desk(scenario, **overrides)
        return TrainConfig(scenario=scenario, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_train(args) -> int:
    cfg = _build_config(args)
    print(f"training configuration ({args.preset} preset):")
    for f in fields(cfg):
        print(f"  {f.name} = {getattr(cfg, f.name)}")
    checkpoint = train(
        cfg, log_every=args.log_every,
        log=lambda line: print(line, flush=True),
    )
    model, _, _ = _rebuild(checkpoint)
    final = evaluate(model, cfg, n_prompts=args.eval_prompts)
    checkpoint["eval_loss"] = final
    save_checkpoint(checkpoint, args.out)
    print(f"final training loss {checkpoint['final_loss']:.5f}, "
          f"objective on {args.eval_prompts} fresh prompts {final:.5f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _rebuild(checkpoint):
    from icl_trainer.model import DecoderRegressor

    cfg = TrainConfig.from_dict(checkpoint["config"])
    model = DecoderRegressor(cfg.layers, cfg.heads, cfg.embed_dim)
    model.load_state_dict(checkpoint["state_dict"])
    model.eval()
    return model, cfg, checkpoint


def cmd_export(args) -> int:
    model, cfg, _ = load_checkpoint(args.checkpoint)
    streams = {}
    for path in args.streams:
        try:
            part = read_stream_file(path)
        except OSError as exc:
            raise ConfigError(f"--streams: {exc}") from exc
        overlap = streams.keys() & part.keys()
        if overlap:
            raise StreamError(f"{path}: streams {sorted(overlap)[:5]} already supplied")
        streams.update(part)
    scenario_id = args.scenario or cfg.scenario.id
    rows = export_records(
        model, streams, args.learner_id, scenario_id,
        reps=args.reps, t_max=args.t_max, batch=args.batch,
    )
    n = write_record_file(rows, args.out, comment=f"checkpoint: {args.checkpoint}")
    print(f"wrote {args.out} ({n} rows)")
    return EXIT_OK


def cmd_info(args) -> int:
    _, cfg, raw = load_checkpoint(args.checkpoint)
    for f in fields(cfg):
        print(f"{f.name} = {getattr(cfg, f.name)}")
    print(f"final_loss = {raw.get('final_loss'):.6g}")
    if "eval_loss" in raw:
        print(f"eval_loss = {raw['eval_loss']:.6g}")
    history = raw.get("loss_history")
    if history is not None and len(history) >= 1000:
        first, last = float(np.mean(history[:1000])), float(np.mean(history[-1000:]))
        print(f"loss_history = {len(history)} iterations, "
              f"first 1k mean {first:.6g}, last 1k mean {last:.6g}")
    return EXIT_OK


_MOMENT_PROMPT_LEN = 128


def cmd_moments(args) -> int:
    scenario = _scenario_params(args)
    sampler = PromptSampler(scenario)
    gen = torch.Generator().manual_seed(args.seed)
    n_prompts = max(2, -(-args.n // _MOMENT_PROMPT_LEN))
    clusters: list[tuple[np.ndarray, np.ndarray]] = []
    while len(clusters) < n_prompts:
        b = min(4096, n_prompts - len(clusters))
        xs, ys, _ = sampler.sample(gen, b, _MOMENT_PROMPT_LEN, dtype=torch.float64)
        clusters.extend(zip(xs.numpy(), ys.numpy()))
    stats = _moment_stats(clusters)
    print(f"sampler moments over {n_prompts} prompts "
          f"({n_prompts * _MOMENT_PROMPT_LEN} points):")
    for name, (value, se) in stats.items():
        print(f"  {name:8s} {value:+.6f}  (se {se:.6f})")
    if args.streams:
        ref = _stream_clusters(args.streams)
        ref_stats = _moment_stats(ref)
        print(f"stream file moments over {len(ref)} tasks "
              f"({sum(len(x) for x, _ in ref)} points), with two-sample z:")
        worst = 0.0
        for name, (value, se) in ref_stats.items():
            v, s = stats[name]
            z = abs(v - value) / math.hypot(s, se)
            worst = max(worst, z)
            print(f"  {name:8s} {value:+.6f}  (se {se:.6f})  z = {z:.2f}")
        print(f"max |z| = {worst:.2f}")
        return EXIT_OK if worst <= 3.0 else EXIT_DATA
    return EXIT_OK


def _stream_clusters(paths) -> list[tuple[np.ndarray, np.ndarray]]:
    clusters = []
    for path in paths:
        for stream in read_stream_file(path).values():
            clusters.append((stream.xs, stream.ys))
    if len(clusters) < 2:
        raise StreamError("need at least two streams to estimate standard errors")
    return clusters


def _moment_stats(clusters) -> dict[str, tuple[float, float]]:
    """First and second moments of (x, y) with cluster-robust standard errors.

    Points within one task share the drawn function, so they are far from
    independent; treating them as such understates the uncertainty of E[y]
    and friends by an order of magnitude.  Each cluster (one prompt or one
    stream) contributes a single mean per moment, and the standard error is
    taken across clusters.
    """
    per = {name: [] for name in ("E[x]", "E[y]", "E[x^2]", "E[y^2]", "E[xy]")}
    for xs, ys in clusters:
        per["E[x]"].append(xs.mean())
        per["E[y]"].append(ys.mean())
        per["E[x^2]"].append((xs**2).mean())
        per["E[y^2]"].append((ys**2).mean())
        per["E[xy]"].append((xs * ys).mean())
    out: dict[str, tuple[float, float]] = {}
    n = len(clusters)
    for name, means in per.items():
        arr = np.asarray(means)
        out[name] = (float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(n)))
    return out


def build_parser() -> _Parser:
    parser = _Parser(prog="icl-trainer", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def scenario_flags(p):
        p.add_argument("--scenario", required=True, help="scenario id")
        p.add_argument("--scenario-config", default=None,
                       help="scenario TOML file (for ids outside the default grid)")

    p = sub.add_parser("train", help="train a model on fresh prompts")
    scenario_flags(p)
    p.add_argument("--preset", choices=_PRESETS, default="desk",
                   help="base recipe before overrides (default: desk)")
    p.add_argument("--layers", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--t-train", dest="T_train", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--curriculum-step", dest="curriculum_step", type=int)
    p.add_argument("--curriculum-period", dest="curriculum_period", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--log-every", type=int, default=1000)
    p.add_argument("--eval-prompts", type=int, default=2048)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export", help="export predictions on benchmark streams")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--streams", required=True, nargs="+")
    p.add_argument("--scenario", default=None,
                   help="scenario id to export (default: the checkpoint's)")
    p.add_argument("--learner-id", default="ICL")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--t-max", dest="t_max", type=int, default=None)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("info", help="print a checkpoint's configuration")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("moments", help="sampler moment diagnostics")
    scenario_flags(p)
    p.add_argument("--n", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--streams", nargs="+", default=None,
                   help="compare against points from these stream files")
    p.set_defaults(func=cmd_moments)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return EXIT_CONFIG
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StreamError, TrainingDiverged, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
