"""Grid of ordered transformation pairs, each cell pretrained and evaluated several times.

Cell ``(i, j)`` pretrains with the pipeline ``[kind_i, kind_j]`` and is scored
by the weighted F1 of the configured evaluation protocol. Every run has its
own seed ``derive_seed(base_seed, i, j, r)`` where ``i`` and ``j`` index into
the full list of transform kinds, so a sub-grid reproduces the matching cells
of the full grid and the result never depends on worker count or order.

Each finished run is written to ``<out>/runs/<first>__<second>__r<r>.json``
straight away; a resumed sweep reads those back instead of recomputing.
"""

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import train as T
from .augment import ALL_KINDS, TransformKind, TransformPipeline, derive_seed, parse_pipeline_spec
from .data import stack

log = logging.getLogger(__name__)

CSV = "csv"
SVG_HEATMAP = "svg"


class SweepError(RuntimeError):
    pass


@dataclass
class SweepConfig:
    """``kinds`` picks the axes (both axes use the same kinds, in this order)."""

    kinds: tuple = ALL_KINDS
    runs_per_cell: int = 5
    protocol: str = T.LINEAR
    pretrain: T.PretrainConfig = field(default_factory=T.PretrainConfig)
    evaluation: T.EvalConfig = None
    base_seed: int = 0

    def __post_init__(self):
        self.kinds = tuple(parse_pipeline_spec(self.kinds) if isinstance(self.kinds, str) else self.kinds)
        if not self.kinds:
            raise ValueError("sweep grid needs at least one transform kind")
        if len(set(self.kinds)) != len(self.kinds):
            raise ValueError("duplicate kinds in sweep grid")
        if self.runs_per_cell < 1:
            raise ValueError("runs_per_cell must be >= 1")
        if self.protocol not in (T.LINEAR, T.FINETUNE):
            raise ValueError(f"sweep protocol must be linear or finetune, got {self.protocol!r}")
        if self.evaluation is None:
            self.evaluation = T.EvalConfig(self.protocol, encoder=self.pretrain.encoder)
        elif self.evaluation.protocol != self.protocol:
            self.evaluation = T.EvalConfig(self.protocol, self.evaluation.epochs, None,
                                           self.evaluation.batch_size, self.evaluation.seed,
                                           self.evaluation.encoder)

    @property
    def cells(self):
        return [(a, b) for a in self.kinds for b in self.kinds]

    @property
    def planned_runs(self):
        return len(self.cells) * self.runs_per_cell

    def echo(self):
        pre = self.pretrain.echo()
        pre.pop("pipeline")
        pre.pop("seed")
        ev = self.evaluation.echo()
        ev.pop("seed")
        return {
            "kinds": [k.value for k in self.kinds],
            "runs_per_cell": self.runs_per_cell,
            "protocol": self.protocol,
            "base_seed": self.base_seed,
            "pretrain": pre,
            "evaluation": ev,
        }


@dataclass
class RunTask:
    first: TransformKind
    second: TransformKind
    run: int
    seed: int
    pretrain: T.PretrainConfig
    evaluation: T.EvalConfig

    @property
    def key(self):
        return f"{self.first.value}__{self.second.value}__r{self.run}"


def plan(config):
    """One task per (cell, run), in row-major order."""
    tasks = []
    for a, b in config.cells:
        i, j = ALL_KINDS.index(a), ALL_KINDS.index(b)
        for r in range(config.runs_per_cell):
            seed = derive_seed(config.base_seed, i, j, r)
            pipeline = TransformPipeline((a, b), seed, config.pretrain.pipeline.params)
            tasks.append(RunTask(a, b, r, seed,
                                 replace(config.pretrain, pipeline=pipeline, seed=seed),
                                 replace(config.evaluation, seed=seed)))
    return tasks


@dataclass
class CellResult:
    first: TransformKind
    second: TransformKind
    scores: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    runs: list = field(default_factory=list)

    @property
    def failed(self):
        return bool(self.errors)

    @property
    def degenerate(self):
        # both stages identity: the two views are the same window
        return self.first is TransformKind.IDENTITY and self.second is TransformKind.IDENTITY

    @property
    def mean(self):
        return float("nan") if self.failed or not self.scores else float(np.mean(self.scores))

    @property
    def std(self):
        if self.failed or not self.scores:
            return float("nan")
        return float(np.std(self.scores, ddof=1)) if len(self.scores) > 1 else 0.0


@dataclass
class SweepReport:
    kinds: tuple
    cells: dict
    config: dict
    started: str = ""
    finished: str = ""

    def cell(self, first, second):
        return self.cells[(first, second)]

    def means(self):
        """``[len(kinds), len(kinds)]`` array of cell means, NaN for failed cells."""
        return np.array([[self.cells[(a, b)].mean for b in self.kinds] for a in self.kinds])

    def row_averages(self):
        """Mean of each row's cell means, ignoring failed cells."""
        out = []
        for row in self.means():
            ok = row[~np.isnan(row)]
            out.append(float(np.mean(ok)) if ok.size else float("nan"))
        return out

    @property
    def spread(self):
        m = self.means()
        ok = m[~np.isnan(m)]
        return float(ok.max() - ok.min()) if ok.size else float("nan")

    @property
    def failed_cells(self):
        return [k for k, c in self.cells.items() if c.failed]

    @property
    def degenerate_cells(self):
        return [k for k, c in self.cells.items() if c.degenerate]

    def to_dict(self):
        rows = []
        for (a, b), c in self.cells.items():
            rows.append({
                "first": a.value, "second": b.value,
                "mean": None if math.isnan(c.mean) else c.mean,
                "std": None if math.isnan(c.std) else c.std,
                "scores": c.scores, "errors": c.errors, "runs": c.runs,
                "failed": c.failed, "degenerate": c.degenerate,
            })
        return {
            "config": self.config,
            "started": self.started,
            "finished": self.finished,
            "kinds": [k.value for k in self.kinds],
            "row_averages": [None if math.isnan(v) else v for v in self.row_averages()],
            "spread": None if math.isnan(self.spread) else self.spread,
            "cells": rows,
        }


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


_WORKER_SPLIT = None


def _init_worker(split):
    global _WORKER_SPLIT
    _WORKER_SPLIT = split


def _execute(task, split=None):
    split = _WORKER_SPLIT if split is None else split
    started = _now()
    t0 = time.perf_counter()
    out = {"key": task.key, "first": task.first.value, "second": task.second.value,
           "run": task.run, "seed": task.seed, "started": started}
    try:
        pre = T.pretrain_simclr(stack(split.train)[0], task.pretrain)
        result = T.evaluate_protocol(pre.params, split, task.evaluation)
        out.update(f1=float(result.f1), pretrain_final_loss=pre.losses[-1],
                   eval_final_loss=result.record.losses[-1])
    except (T.TrainingError, ValueError, ArithmeticError) as exc:
        out["error"] = f"{type(exc).__name__}: {exc}"
    out["duration_s"] = time.perf_counter() - t0
    out["finished"] = _now()
    return out


def _write_json(path, obj):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def run_sweep(split, config, out_dir=None, jobs=1, resume=False):
    """Run every (cell, run) of ``config`` on ``split`` and assemble a :class:`SweepReport`.

    With ``out_dir`` each run is persisted as soon as it finishes. ``resume``
    reuses runs already on disk, provided the stored sweep config matches.
    Runs that raise a training error are recorded as failures; the sweep
    carries on.
    """
    tasks = plan(config)
    echo = config.echo()
    started = _now()
    done = {}
    run_dir = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        run_dir = out_dir / "runs"
        run_dir.mkdir(parents=True, exist_ok=True)
        cfg_path = out_dir / "sweep_config.json"
        if resume and cfg_path.exists():
            stored = json.loads(cfg_path.read_text(encoding="utf-8"))
            if stored != json.loads(json.dumps(echo)):
                raise SweepError(f"{cfg_path} was written by a different sweep config; refusing to resume")
        _write_json(cfg_path, echo)
        if resume:
            for t in tasks:
                p = run_dir / f"{t.key}.json"
                if p.exists():
                    done[t.key] = json.loads(p.read_text(encoding="utf-8"))
    elif resume:
        raise SweepError("resume needs an output directory")

    todo = [t for t in tasks if t.key not in done]
    log.info("sweep: %d planned runs, %d already complete, %d to run",
             len(tasks), len(tasks) - len(todo), len(todo))

    def record(res):
        done[res["key"]] = res
        if run_dir is not None:
            _write_json(run_dir / f"{res['key']}.json", res)
        status = f"f1={res['f1']:.4f}" if "f1" in res else f"FAILED {res['error']}"
        log.info("run %s (%d/%d) %s", res["key"], len(done), len(tasks), status)

    if jobs <= 1 or len(todo) <= 1:
        for t in todo:
            record(_execute(t, split))
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(split,)) as pool:
            for res in pool.map(_execute, todo):
                record(res)

    cells = {}
    for a, b in config.cells:
        cells[(a, b)] = CellResult(a, b)
    for t in tasks:
        res = done[t.key]
        c = cells[(t.first, t.second)]
        c.runs.append(res)
        if "f1" in res:
            c.scores.append(res["f1"])
        else:
            c.errors.append(res["error"])
    report = SweepReport(config.kinds, cells, echo, started, _now())
    if report.failed_cells:
        log.warning("%d of %d cells failed", len(report.failed_cells), len(cells))
    if out_dir is not None:
        _write_json(out_dir / "sweep_report.json", report.to_dict())
    return report


# Rendering
# --------------------------------------------------------------------------

def _pct(v):
    return "NA" if math.isnan(v) else f"{100 * v:.1f}"


def report_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["transform_1"] + [k.value for k in report.kinds] + ["row_avg"])
    for a, row, avg in zip(report.kinds, report.means(), report.row_averages()):
        w.writerow([a.value] + [_pct(v) for v in row] + [_pct(avg)])
    return buf.getvalue()


# low -> high colour ramp (dark blue, teal, yellow)
_RAMP = np.array([[68, 1, 84], [33, 145, 140], [253, 231, 37]], dtype=float)


def _colour(t):
    t = min(max(t, 0.0), 1.0) * (len(_RAMP) - 1)
    i = min(int(t), len(_RAMP) - 2)
    rgb = _RAMP[i] + (t - i) * (_RAMP[i + 1] - _RAMP[i])
    return "#%02x%02x%02x" % tuple(int(round(c)) for c in rgb)


def report_svg(report, cell=56):
    """Self-contained SVG heatmap; the last column holds the row averages."""
    kinds = report.kinds
    means = report.means()
    avgs = np.array(report.row_averages())
    vals = np.concatenate([means.ravel(), avgs])
    ok = vals[~np.isnan(vals)]
    lo, hi = (float(ok.min()), float(ok.max())) if ok.size else (0.0, 1.0)
    left, top = 80, 70
    n = len(kinds)
    width = left + (n + 1) * cell + 20
    height = top + n * cell + 20
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<text x="{left}" y="18" font-size="14">weighted F1 (%), protocol: '
           f'{report.config.get("protocol", "")}</text>']
    for j, name in enumerate([k.value for k in kinds] + ["row_avg"]):
        x = left + j * cell + cell / 2
        out.append(f'<text x="{x:.1f}" y="{top - 8}" text-anchor="middle">{name}</text>')
    for i, a in enumerate(kinds):
        y = top + i * cell
        out.append(f'<text x="{left - 6}" y="{y + cell / 2 + 4:.1f}" text-anchor="end">{a.value}</text>')
        for j, v in enumerate(list(means[i]) + [avgs[i]]):
            x = left + j * cell
            if math.isnan(v):
                fill, ink = "#d0d0d0", "#000000"
            else:
                t = 0.5 if hi == lo else (v - lo) / (hi - lo)
                fill, ink = _colour(t), ("#000000" if t > 0.6 else "#ffffff")
            stroke = ' stroke="#000000" stroke-width="2"' if j == n else ' stroke="#ffffff"'
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}"{stroke}/>')
            out.append(f'<text x="{x + cell / 2:.1f}" y="{y + cell / 2 + 4:.1f}" text-anchor="middle" '
                       f'fill="{ink}">{_pct(v)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_report(report, fmt, path):
    """Write ``report`` to ``path`` as CSV or SVG heatmap; returns the path."""
    if fmt == CSV:
        text = report_csv(report)
    elif fmt == SVG_HEATMAP:
        text = report_svg(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path
