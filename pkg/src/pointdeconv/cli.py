"""Command-line interface: train, generate, evaluate, synth.

Exit codes: 0 success, 1 validation error (bad flags, bad config, bad
input files), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as config_mod
from . import data as data_mod
from . import metrics as metrics_mod
from . import report as report_mod
from .autodiff import AutodiffError
from .config import ConfigError
from .data import DataError
from .geometry import GeometryError
from .metrics import MetricError
from .training import TrainingError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="pointdeconv")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the adversarial training loop")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--resume", default=None, help="checkpoint to resume from")
    p_train.add_argument("--out", default="runs", help="output directory")

    p_gen = sub.add_parser("generate", help="sample clouds from a checkpoint")
    p_gen.add_argument("--checkpoint", required=True)
    p_gen.add_argument("--count", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--resolution", default="all",
                       help="point count of one stage, or 'all'")

    p_eval = sub.add_parser("evaluate", help="compare generated vs reference sets")
    p_eval.add_argument("--generated", required=True)
    p_eval.add_argument("--reference", required=True)
    p_eval.add_argument("--metrics", default="all",
                        help="comma list of jsd,mmd_cd,mmd_emd,cov_cd,cov_emd,"
                             "nna_cd,nna_emd, or 'all'")
    p_eval.add_argument("--report", required=True)
    p_eval.add_argument("--grid", type=int, default=28)
    p_eval.add_argument("--no-figures", action="store_true")

    p_synth = sub.add_parser("synth", help="write a synthetic corpus")
    p_synth.add_argument("--kind", required=True,
                         choices=["sphere", "plane", "two-clusters"])
    p_synth.add_argument("--count", type=int, required=True)
    p_synth.add_argument("--points", type=int, required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    return parser


def _cmd_train(args) -> int:
    from .training import train

    cfg = config_mod.load(args.config)
    out_dir = Path(args.out)
    train(cfg, out_dir, resume_from=args.resume)
    report_mod.render_loss_curves(out_dir / "loss_curves.png",
                                  out_dir / "loss_log.txt")
    return 0


def _cmd_generate(args) -> int:
    from .checkpoint import load_checkpoint
    from .generator import sample_latent

    state = load_checkpoint(args.checkpoint)
    cfg = state.cfg
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.resolution == "all":
        wanted = list(cfg.stage_points)
    else:
        res = int(args.resolution)
        if res not in cfg.stage_points:
            raise ConfigError(f"resolution {res} not in {cfg.stage_points}")
        wanted = [res]
    latents = sample_latent(args.seed, args.count, cfg.latent_dim, cfg.latent_std)
    for i, z in enumerate(latents):
        clouds = state.generator.generate(z)
        for res, cloud in zip(cfg.stage_points, clouds):
            if res in wanted:
                data_mod.save_xyz(out_dir / f"sample_{i:05d}_r{res}.xyz", cloud)
    return 0


def _parse_metric_list(spec: str):
    all_metrics = ("jsd", "mmd_cd", "mmd_emd", "cov_cd", "cov_emd",
                   "nna_cd", "nna_emd")
    if spec == "all":
        return all_metrics
    chosen = tuple(t.strip() for t in spec.split(",") if t.strip())
    for name in chosen:
        if name not in all_metrics:
            raise MetricError(f"unknown metric '{name}'")
    return chosen


def _cmd_evaluate(args) -> int:
    gen = data_mod.load_directory(args.generated).clouds
    ref = data_mod.load_directory(args.reference).clouds
    which = _parse_metric_list(args.metrics)
    report = metrics_mod.evaluate_sets(gen, ref, which=which, grid=args.grid)
    report_path = Path(args.report)
    if report_path.parent != Path(""):
        report_path.parent.mkdir(parents=True, exist_ok=True)
    report_mod.write_report(report_path, report)
    if not args.no_figures:
        stem = report_path.with_suffix("")
        report_mod.render_metric_figure(f"{stem}_metrics.png", report)
        report_mod.render_cloud_preview(f"{stem}_clouds.png", gen, ref)
    return 0


def _cmd_synth(args) -> int:
    corpus = data_mod.synth_corpus(args.kind, args.count, args.points, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, cloud in zip(corpus.names, corpus.clouds):
        data_mod.save_xyz(out_dir / f"{name}.xyz", cloud)
    return 0


_COMMANDS = {"train": _cmd_train, "generate": _cmd_generate,
             "evaluate": _cmd_evaluate, "synth": _cmd_synth}

_VALIDATION_ERRORS = (ConfigError, DataError, GeometryError, MetricError,
                      FileNotFoundError, NotADirectoryError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingError, AutodiffError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
