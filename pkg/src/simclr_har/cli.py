"""Command-line entry point: ``simclr-har {run,sweep,gradcheck}``.

Settings resolve in three layers: built-in defaults, then an optional YAML
config file (``--config``), then command-line flags. Unknown config keys are
rejected. Exit codes: 0 success, 1 gradient check failed, 2 bad config,
3 data problem, 4 training diverged.
"""

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import yaml

from . import data as D
from . import model as M
from . import train as T
from .augment import ALL_KINDS, TransformError, TransformPipeline, parse_pipeline_spec
from .metrics import confusion_to_csv, per_class_f1
from .sweep import CSV, SVG_HEATMAP, SweepConfig, SweepError, render_report, run_sweep

log = logging.getLogger("simclr_har")

EXIT_OK = 0
EXIT_GRADCHECK = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

OUT_ENV = "SIMCLR_HAR_OUT"
DEFAULT_OUT = "simclr_har_out"

PUBLISHED = "published setting"
CHOSEN = "chosen where the source is silent"
PLUMBING = "artifact plumbing"


class ConfigError(ValueError):
    pass


def _key(default, help, source, flag=None, type=None):
    return dataclasses.field(default=default, metadata={"help": help, "source": source,
                                                        "flag": flag, "type": type})


@dataclasses.dataclass
class ExperimentConfig:
    data: str = _key("synthetic", "'synthetic' or a MotionSense root directory", PLUMBING, "--data", str)
    synthetic_per_class: int = _key(100, "synthetic windows per class", PLUMBING)
    synthetic_classes: int = _key(3, "number of synthetic classes", PLUMBING)
    accel: str = _key("user", "MotionSense channels: 'user' or 'total' acceleration", CHOSEN)
    test_subjects: list = _key(tuple(D.DEFAULT_TEST_SUBJECTS), "held-out subject ids", CHOSEN,
                               type=list)
    standardize: bool = _key(False, "z-score channels with training-side statistics", PLUMBING)
    pipeline: str = _key("rotate", "comma-separated transform stages", PUBLISHED + " (best single transform)",
                         "--pipeline", str)
    protocol: str = _key(T.FINETUNE, "linear, finetune or supervised", PUBLISHED, "--protocol", str)
    epochs: int = _key(200, "pretraining epochs", PUBLISHED, "--epochs", int)
    batch: int = _key(512, "pretraining batch size", PUBLISHED, "--batch", int)
    lr: float = _key(0.1, "pretraining base learning rate (cosine-decayed SGD)", CHOSEN, "--lr", float)
    temperature: float = _key(0.1, "NT-Xent temperature", CHOSEN, "--temperature", float)
    eval_epochs: int = _key(50, "evaluation / supervised epochs", PUBLISHED)
    eval_batch: int = _key(512, "evaluation batch size", CHOSEN)
    eval_lr: float = _key(None, "evaluation learning rate; null picks 0.03 (SGD, linear) or 0.001 (Adam)",
                          PUBLISHED, type=float)
    seed: int = _key(0, "base seed", PLUMBING, "--seed", int)
    out: str = _key(None, f"output directory; defaults to ${OUT_ENV} or ./{DEFAULT_OUT}", PLUMBING, "--out", str)
    jobs: int = _key(1, "sweep worker processes", PLUMBING, "--jobs", int)
    resume: bool = _key(False, "sweep: reuse runs already on disk", PLUMBING, "--resume", bool)
    grid: str = _key("all", "sweep axes: 'all' or comma-separated transform kinds", PUBLISHED + " (9x9 grid)",
                     "--grid", str)
    runs_per_cell: int = _key(5, "sweep runs per cell", PUBLISHED)

    def validate(self):
        try:
            parse_pipeline_spec(self.pipeline)
            if self.grid != "all":
                parse_pipeline_spec(self.grid)
        except TransformError as exc:
            raise ConfigError(str(exc)) from None
        if self.protocol not in T.PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r} (valid: {', '.join(T.PROTOCOLS)})")
        if self.accel not in ("user", "total"):
            raise ConfigError(f"accel must be 'user' or 'total', got {self.accel!r}")
        for name in ("epochs", "batch", "eval_epochs", "eval_batch", "jobs", "runs_per_cell",
                     "synthetic_per_class", "synthetic_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        return self

    @property
    def out_dir(self):
        return Path(self.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)

    def pretrain_config(self):
        return T.PretrainConfig(self.epochs, self.batch, self.lr, self.temperature,
                                TransformPipeline.from_spec(self.pipeline, self.seed), self.seed)

    def eval_config(self, protocol=None):
        return T.EvalConfig(protocol or self.protocol, self.eval_epochs, self.eval_lr,
                            self.eval_batch, self.seed)

    def as_dict(self):
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        out["test_subjects"] = [int(s) for s in self.test_subjects]
        return out


CONFIG_KEYS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def load_config(path=None, overrides=None):
    """Defaults, then the YAML file at ``path``, then ``overrides`` (None values ignored)."""
    values = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a key/value mapping")
        unknown = sorted(set(loaded) - set(CONFIG_KEYS))
        if unknown:
            raise ConfigError(f"unknown config key(s) in {path}: {', '.join(map(str, unknown))}")
        values.update(loaded)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for name, v in values.items():
        want = CONFIG_KEYS[name].metadata["type"] or type(CONFIG_KEYS[name].default)
        if v is None or want is type(None):
            continue
        if want is float and isinstance(v, int) and not isinstance(v, bool):
            values[name] = float(v)
        elif want is list and isinstance(v, (list, tuple)):
            values[name] = [int(s) for s in v]
        elif not isinstance(v, want) or (want is int and isinstance(v, bool)):
            raise ConfigError(f"config key {name!r} expects {want.__name__}, got {v!r}")
    return ExperimentConfig(**values).validate()


# Data
# --------------------------------------------------------------------------

def load_split(cfg):
    if cfg.data == "synthetic":
        windows = D.synth_dataset(cfg.synthetic_per_class, cfg.synthetic_classes, seed=cfg.seed)
    else:
        windows = D.windows_from_series(D.load_motionsense(cfg.data, accel=cfg.accel))
    split = D.split_by_subject(windows, cfg.test_subjects)
    if cfg.standardize:
        split = D.standardize(split)
    log.info("data: %d train windows (%d subjects), %d test windows (%d subjects)",
             len(split.train), len(split.train_subjects), len(split.test), len(split.test_subjects))
    return split


# Commands
# --------------------------------------------------------------------------

def run_stem(cfg):
    pipe = "none" if cfg.protocol == T.SUPERVISED else cfg.pipeline.replace(",", "-")
    return f"{pipe}_{cfg.protocol}_s{cfg.seed}"


def _f1_summary(cfg, result):
    lines = [
        f"protocol={cfg.protocol}",
        f"pipeline={'none' if cfg.protocol == T.SUPERVISED else cfg.pipeline}",
        f"seed={cfg.seed}",
        f"weighted_f1={result.f1!r}",
    ]
    for name, v in zip(D.CLASS_NAMES, per_class_f1(result.confusion)):
        lines.append(f"f1.{name}={float(v)!r}")
    return "\n".join(lines) + "\n"


def cmd_run(cfg):
    """Pretrain then evaluate (or train the supervised baseline); write all artifacts."""
    split = load_split(cfg)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    stem = out / run_stem(cfg)
    (out / f"{stem.name}.config.yaml").write_text(yaml.safe_dump(cfg.as_dict(), sort_keys=True), encoding="utf-8")
    if cfg.protocol == T.SUPERVISED:
        result = T.supervised_baseline(split, cfg.eval_config())
    else:
        x = D.stack(split.train)[0]
        pre = T.pretrain_simclr(x, cfg.pretrain_config())
        pre.save(f"{stem}.pretrain.json")
        M.save_params(f"{stem}.pretrain", pre.params, {"stage": "pretrain", "pipeline": cfg.pipeline})
        result = T.evaluate_protocol(pre.params, split, cfg.eval_config())
    result.record.save(f"{stem}.{cfg.protocol}.json")
    M.save_params(f"{stem}.{cfg.protocol}", result.record.params, {"stage": cfg.protocol})
    with open(f"{stem}.confusion.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(confusion_to_csv(result.confusion, D.CLASS_NAMES))
    Path(f"{stem}.f1.txt").write_text(_f1_summary(cfg, result), encoding="utf-8")
    print(f"weighted F1 {result.f1:.4f}  ({cfg.protocol}, pipeline {cfg.pipeline}, seed {cfg.seed})")
    print(f"artifacts: {out}/{stem.name}.*")
    return EXIT_OK


def sweep_config(cfg):
    if cfg.protocol not in (T.LINEAR, T.FINETUNE):
        raise ConfigError("sweep protocol must be linear or finetune")
    kinds = ALL_KINDS if cfg.grid == "all" else parse_pipeline_spec(cfg.grid)
    try:
        return SweepConfig(kinds, cfg.runs_per_cell, cfg.protocol, cfg.pretrain_config(),
                           cfg.eval_config(), cfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_sweep(cfg):
    """Transformation-pair grid; writes per-run JSON, a CSV table and an SVG heatmap."""
    sc = sweep_config(cfg)
    n = len(sc.kinds)
    print(f"sweep: {n}x{n} = {len(sc.cells)} cells x {sc.runs_per_cell} runs = {sc.planned_runs} planned runs "
          f"({sc.protocol})")
    split = load_split(cfg)
    out = cfg.out_dir
    report = run_sweep(split, sc, out_dir=out, jobs=cfg.jobs, resume=cfg.resume)
    render_report(report, CSV, out / "sweep_grid.csv")
    render_report(report, SVG_HEATMAP, out / "sweep_grid.svg")
    n_failed = len(report.failed_cells)
    print(f"spread (max - min cell mean): {report.spread:.4f}")
    if n_failed:
        print(f"warning: {n_failed} cell(s) failed and are marked NA", file=sys.stderr)
    print(f"artifacts: {out}/sweep_grid.csv, {out}/sweep_grid.svg")
    return EXIT_OK


def cmd_gradcheck(instances=20, fault=False):
    """Finite-difference check of every backward kernel; 0 iff all under tolerance."""
    from .verify import TOLERANCE, run_gradcheck_suite

    results = run_gradcheck_suite(n_instances=instances, fault=fault)
    width = max(map(len, results))
    ok = True
    for name, err in results.items():
        passed = err < TOLERANCE
        ok &= passed
        print(f"{name:<{width}}  max_rel_err={err:.3e}  {'ok' if passed else 'FAIL'}")
    print(f"tolerance {TOLERANCE:g}: {'all kernels pass' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_GRADCHECK


# Argument parsing
# --------------------------------------------------------------------------

def _config_epilog():
    lines = ["config keys (YAML file via --config; flags override the file):"]
    for name, f in CONFIG_KEYS.items():
        default = f.default if f.default is not None else "null"
        flag = f"  [{f.metadata['flag']}]" if f.metadata["flag"] else ""
        lines.append(f"  {name} = {default}{flag}")
        lines.append(f"      {f.metadata['help']}; source: {f.metadata['source']}")
    return "\n".join(lines)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="simclr-har",
        description="Contrastive pretraining for tri-axial activity recognition.",
        epilog=f"exit codes: 0 ok, 1 gradcheck failure, 2 config error, 3 data error, 4 divergence. "
               f"Default output root: ${OUT_ENV} or ./{DEFAULT_OUT}.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file of config keys")
    for name, f in CONFIG_KEYS.items():
        flag = f.metadata["flag"]
        if flag is None:
            continue
        default = f.default if f.default is not None else "null"
        text = f"{f.metadata['help']} (default: {default}; {f.metadata['source']})"
        if f.metadata["type"] is bool:
            common.add_argument(flag, dest=name, action="store_true", default=None, help=text)
        else:
            common.add_argument(flag, dest=name, type=f.metadata["type"], default=None, help=text)

    fmt = argparse.RawDescriptionHelpFormatter
    sub.add_parser("run", parents=[common], help="pretrain + evaluate one configuration",
                   epilog=_config_epilog(), formatter_class=fmt)
    sub.add_parser("sweep", parents=[common], help="transformation-pair grid",
                   epilog=_config_epilog(), formatter_class=fmt)
    gc = sub.add_parser("gradcheck", help="finite-difference check of every backward kernel")
    gc.add_argument("--instances", type=int, default=20, help="random instances per kernel (default: 20)")
    gc.add_argument("--fault", action="store_true", help="perturb analytic gradients to prove the check bites")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.command == "gradcheck":
        return cmd_gradcheck(args.instances, args.fault)
    overrides = {name: getattr(args, name) for name in CONFIG_KEYS if hasattr(args, name)}
    try:
        cfg = load_config(args.config, overrides)
        return cmd_run(cfg) if args.command == "run" else cmd_sweep(cfg)
    except (ConfigError, TransformError, SweepError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except T.TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (D.DataError, T.TrainingError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
