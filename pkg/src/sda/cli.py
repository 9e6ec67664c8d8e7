"""Command-line interface.

    sda prepare   --config cfg.txt            similarity matrices + balanced set
    sda evaluate  --config cfg.txt            cross-validated metrics report
    sda rank      --config cfg.txt --top-k K  ranked candidate associations
    sda run-all   --config cfg.txt            prepare + evaluate + rank
    sda holdout   --config cfg.txt            held-out positive recovery check

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import pipeline
from .config import PipelineConfig, effective_config_text, load_config
from .errors import ConfigError, DataError, NumericError
from .util import atomic_write_text

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="sda", description="snoRNA-disease association prediction pipeline"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("prepare", "build similarity matrices and the balanced pair set"),
        ("evaluate", "run stratified cross-validation and write the report"),
        ("rank", "train on the full balanced set and rank unknown pairs"),
        ("run-all", "prepare, evaluate, and rank in one run"),
        ("holdout", "hold out known positives and check their recovery"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--top-k", type=int, dest="top_k", help="ranked pairs per disease")
        p.add_argument(
            "--mode", choices=("paper-faithful", "strict-folds"),
            help="similarity handling across folds",
        )
        p.add_argument("--strict", action="store_true", help="treat warnings as errors")
        p.add_argument("--output-dir", dest="output_dir", help="artifact directory")
        p.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE",
            help="override any config key (repeatable)",
        )
    return parser


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides: dict[str, object] = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got '{item}'")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.top_k is not None:
        overrides["top_k"] = args.top_k
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.strict:
        overrides["strict"] = True
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    return load_config(args.config, overrides)


def _echo_config(cfg: PipelineConfig) -> str:
    path = os.path.join(cfg.output_dir, "effective-config.txt")
    atomic_write_text(path, effective_config_text(cfg))
    return path


def _print_descriptor(prepared: pipeline.PreparedData) -> None:
    d = prepared.descriptor
    print(
        f"dataset {d.name}: {d.n_snornas} snoRNAs x {d.n_diseases} diseases, "
        f"{d.n_known} known associations, balanced set {len(prepared.pairs)} pairs "
        f"(k={prepared.k_used})"
    )


def cmd_prepare(cfg: PipelineConfig) -> int:
    _echo_config(cfg)
    prepared = pipeline.prepare(cfg)
    paths = pipeline.write_prepared(prepared, cfg.output_dir)
    _print_descriptor(prepared)
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_evaluate(cfg: PipelineConfig) -> int:
    _echo_config(cfg)
    prepared = pipeline.prepare(cfg)
    report = pipeline.evaluate(prepared, cfg)
    paths = pipeline.write_report(report, cfg.output_dir)
    _print_descriptor(prepared)
    print(
        f"mode={report.mode} mean roc_auc={report.mean['roc_auc']:.4f} "
        f"auprc={report.mean['auprc']:.4f} accuracy={report.mean['accuracy']:.4f} "
        f"f1={report.mean['f1']:.4f}"
    )
    for p in paths:
        print(f"wrote {p}")
    return 0


def _rank_and_write(prepared, cfg: PipelineConfig) -> tuple[int, list[str]]:
    from sda.boost import save_gbdt
    from sda.svm import save_svm

    models = pipeline.train_final(prepared, cfg)
    save_gbdt(models[0], os.path.join(cfg.output_dir, "gbdt_model.json"))
    save_svm(models[1], os.path.join(cfg.output_dir, "svm_model.json"))
    predictions, exhausted = pipeline.rank_candidates(prepared, cfg, models=models)
    pipeline.write_rankings(predictions, cfg.output_dir)
    return len(predictions), exhausted


def cmd_rank(cfg: PipelineConfig) -> int:
    _echo_config(cfg)
    prepared = pipeline.prepare(cfg)
    n_rows, exhausted = _rank_and_write(prepared, cfg)
    _print_descriptor(prepared)
    for disease_id in exhausted:
        print(f"disease '{disease_id}' has no unknown pairs; zero rows ranked")
    print(f"ranked top {cfg.top_k} per disease: {n_rows} rows")
    print(f"wrote {os.path.join(cfg.output_dir, 'rankings.csv')}")
    return 0


def cmd_run_all(cfg: PipelineConfig) -> int:
    _echo_config(cfg)
    stage = "prepare"
    try:
        prepared = pipeline.prepare(cfg)
        pipeline.write_prepared(prepared, cfg.output_dir)
        _print_descriptor(prepared)

        stage = "evaluate"
        report = pipeline.evaluate(prepared, cfg)
        pipeline.write_report(report, cfg.output_dir)
        print(
            f"mode={report.mode} mean roc_auc={report.mean['roc_auc']:.4f} "
            f"auprc={report.mean['auprc']:.4f}"
        )

        stage = "rank"
        n_rows, exhausted = _rank_and_write(prepared, cfg)
        for disease_id in exhausted:
            print(f"disease '{disease_id}' has no unknown pairs; zero rows ranked")
        print(f"ranked top {cfg.top_k} per disease: {n_rows} rows")
    except (ConfigError, DataError, NumericError) as exc:
        raise type(exc)(f"[stage: {stage}] {exc}") from exc
    return 0


def cmd_holdout(cfg: PipelineConfig) -> int:
    _echo_config(cfg)
    result = pipeline.holdout_inference_check(cfg)
    path = os.path.join(cfg.output_dir, "holdout_report.json")
    atomic_write_text(path, json.dumps(result, indent=2, sort_keys=True) + "\n")
    print(
        f"held out {result['n_held_out']} positives: mean percentile "
        f"{result['mean_percentile']:.2f}, {result['fraction_in_top_k']:.2%} in top "
        f"{result['top_k']}"
    )
    if result["excluded_diseases"]:
        print(f"excluded diseases: {', '.join(result['excluded_diseases'])}")
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "prepare": cmd_prepare,
    "evaluate": cmd_evaluate,
    "rank": cmd_rank,
    "run-all": cmd_run_all,
    "holdout": cmd_holdout,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _config_from_args(args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 1
    except DataError as exc:
        log.error("data error: %s", exc)
        return 2
    except NumericError as exc:
        log.error("numeric error: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
