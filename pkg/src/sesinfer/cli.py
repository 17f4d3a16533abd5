"""Command-line operator surface.

Subcommands cover the whole pipeline: ``synth`` writes a seeded world,
``preprocess``/``featurize`` turn raw files into samples, ``pretrain-embed``
and ``train`` fit the model, ``evaluate``/``predict`` consume the
checkpoint, ``sweep`` re-runs train/evaluate along one parameter axis and
``report`` merges metric tables into plot-ready CSV plus figures.

Errors exit non-zero with a single machine-parseable line on stderr.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, RunConfig, load_config
from .ingest import FormatError


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="key=value config file (defaults used when omitted)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sesinfer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic world")
    _add_common(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--agents", type=int, default=None)
    p.add_argument("--weeks", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("preprocess", help="stay points, activities and labels from raw files")
    _add_common(p)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("featurize", help="tokenized weekly samples from preprocess output")
    _add_common(p)
    p.add_argument("--in-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("pretrain-embed", help="skip-gram pretraining of indicator embeddings")
    _add_common(p)
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("train", help="pretrain branches then joint-train the classifier")
    _add_common(p)
    p.add_argument("--samples", required=True)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("evaluate", help="classification + clustering metrics for a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("predict", help="per-sample class predictions")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("sweep", help="re-run train/evaluate across one parameter axis")
    _add_common(p)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("report", help="merge metric CSVs and render figures")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out-dir", required=True)

    return parser


def _config_from(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    overrides: dict[str, str] = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    cfg = cfg.with_overrides(overrides)
    cfg.validate()
    return cfg


def _cmd_synth(args) -> int:
    from .pipeline import world_config
    from .synth import generate_world, write_world

    flag_overrides = {
        "n_agents": args.agents,
        "weeks_per_agent": args.weeks,
        "num_classes": args.classes,
        "schedule_noise": args.noise,
        "seed": args.seed,
    }
    cfg = _config_from(args)
    cfg = cfg.with_overrides({k: str(v) for k, v in flag_overrides.items() if v is not None})
    cfg.validate()
    wcfg = world_config(cfg)
    paths = write_world(args.out_dir, generate_world(wcfg), wcfg)
    with open(os.path.join(args.out_dir, "world_config.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"# config={cfg.hash()}\n")
        fh.write(cfg.text())
    print(f"world written: {paths['trajectories']}")
    return 0


def _cmd_preprocess(args) -> int:
    from .pipeline import run_preprocess

    stats = run_preprocess(_config_from(args), args.data_dir, args.out_dir)
    print(" ".join(f"{k}={v}" for k, v in stats.items()))
    return 0


def _cmd_featurize(args) -> int:
    from .pipeline import run_featurize

    stats = run_featurize(_config_from(args), args.in_dir, args.out, force=args.force)
    print(" ".join(f"{k}={v}" for k, v in stats.items()))
    return 0


def _cmd_pretrain_embed(args) -> int:
    from .pipeline import run_pretrain_embed

    stats = run_pretrain_embed(_config_from(args), args.samples, args.out, force=args.force)
    print(" ".join(f"{k}={v}" for k, v in stats.items()))
    return 0


def _cmd_train(args) -> int:
    from .pipeline import run_train

    stats = run_train(
        _config_from(args), args.samples, args.out_dir,
        embeddings_path=args.embeddings, force=args.force,
    )
    print(" ".join(f"{k}={v:.4f}" for k, v in stats.items()))
    return 0


def _cmd_evaluate(args) -> int:
    from .pipeline import run_evaluate

    rows = run_evaluate(
        _config_from(args), args.checkpoint, args.samples, args.labels, args.out, force=args.force,
    )
    for task, c_or_k, metric, value in rows:
        print(f"{task} {c_or_k} {metric}={value:.4f}")
    return 0


def _cmd_predict(args) -> int:
    from .pipeline import run_predict

    n = run_predict(_config_from(args), args.checkpoint, args.samples, args.out, force=args.force)
    print(f"predicted {n} samples -> {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    from .pipeline import run_sweep

    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values is empty")
    run_sweep(_config_from(args), args.data_dir, args.param, values, args.out_dir)
    print(f"sweep written: {os.path.join(args.out_dir, 'sweep_metrics.csv')}")
    return 0


def _cmd_report(args) -> int:
    from .report import run_report

    for path in run_report(args.run_dir, args.out_dir):
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "featurize": _cmd_featurize,
    "pretrain-embed": _cmd_pretrain_embed,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"error: format: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single-line operator errors
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
