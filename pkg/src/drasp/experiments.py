"""Method comparison, segment-size sweep and scatter export over synthbench."""
from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics as mt
from . import synthbench as sb
from .config import ExperimentConfig
from .model import MOSModel, load_checkpoint, save_checkpoint, train

log = logging.getLogger(__name__)

TABLE_VERSION = 1
METRICS = ("mse", "lcc", "srcc", "ktau")
COMPARE_COLUMNS = ("method", "head", "seed", *METRICS, "best_epoch", "status")
SWEEP_COLUMNS = ("n", "head", "seed", *METRICS, "best_epoch", "status")
SCATTER_COLUMNS = ("system_id", "head", "predicted", "truth")


def load_dataset(exp: ExperimentConfig) -> sb.Dataset:
    if exp.dataset:
        return sb.load(exp.dataset)
    return sb.generate(exp.bench)


def system_predictions(model: MOSModel, dataset: sb.Dataset, split: str) -> dict[str, dict[str, float]]:
    """Per head, the mean prediction of each system over its clips in ``split``."""
    examples = dataset.examples(split, model.config.heads)
    preds = model.predict(examples)
    ids = [e.system_id for e in examples]
    return {h: mt.system_aggregate(zip(ids, p)) for h, p in preds.items()}


def evaluate(model: MOSModel, dataset: sb.Dataset, split: str = "test") -> mt.MetricReport:
    truth = sb.system_truth(dataset, split)
    per_head = {h: mt.system_metrics(agg, truth)
                for h, agg in system_predictions(model, dataset, split).items()}
    return mt.MetricReport(per_head, len(truth))


def run_one(dataset: sb.Dataset, exp: ExperimentConfig, method: str, seed: int,
            segment_size: int | None = None, checkpoint: str | None = None) -> dict:
    """Train and evaluate one (method, seed[, n]) configuration.

    Returns a result dict; failures are captured in ``status`` rather than raised.
    """
    result = {"method": method, "seed": seed, "n": segment_size, "status": "ok",
              "best_epoch": 0, "metrics": {}, "history": []}
    try:
        overrides = {"pooling": method}
        if segment_size is not None:
            overrides["segment_size"] = segment_size
        model_cfg = dataclasses.replace(exp.model, d_in=dataset.config.d_in, **overrides)
        train_cfg = dataclasses.replace(exp.train, seed=seed)
        model = MOSModel(model_cfg, seed=seed)
        heads = model_cfg.heads
        fit = train(model, dataset.examples("train", heads), dataset.examples("val", heads), train_cfg)
        result["best_epoch"] = fit.best_epoch
        result["history"] = [(r.epoch, r.train_loss, r.val_loss) for r in fit.history]
        result["metrics"] = evaluate(model, dataset, exp.split).per_head
        if model.pool.fusion is not None:
            result["fusion"] = (float(model.pool.fusion.alpha.value), float(model.pool.fusion.beta.value))
        if checkpoint:
            save_checkpoint(checkpoint, model, train_cfg)
    except Exception as exc:  # recorded as a failed row
        log.warning("run %s seed %s failed: %s", method, seed, exc)
        result["status"] = f"error: {type(exc).__name__}: {exc}".replace("\t", " ").replace("\n", " ")
    return result


def _run_job(args):
    return run_one(*args)


def run_jobs(jobs: Sequence[tuple], workers: int) -> list[dict]:
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else repr(float(v))
    return str(v)


def _rows(results: list[dict], key: str, heads: Sequence[str]) -> list[tuple]:
    rows = []
    for r in results:
        for h in heads:
            m = r["metrics"].get(h, {})
            vals = tuple(float(m.get(k, math.nan)) for k in METRICS)
            rows.append((r[key], h, r["seed"], *vals, r["best_epoch"], r["status"]))
    return rows


def write_table(path, kind: str, exp: ExperimentConfig, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# drasp-{kind} v{TABLE_VERSION}", f"# config: {exp.echo()}", "\t".join(columns)]
    lines += ["\t".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def read_table(path) -> list[dict[str, str]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    header = lines[0].split("\t")
    return [dict(zip(header, ln.split("\t"))) for ln in lines[1:]]


def summarize(rows: list[tuple], group_cols: int = 2) -> list[tuple]:
    """Mean and population std over seeds of each metric, per (group, head)."""
    groups: dict[tuple, list[tuple]] = {}
    for row in rows:
        groups.setdefault(row[:group_cols], []).append(row)
    out = []
    for key, members in groups.items():
        ok = [m for m in members if m[-1] == "ok"]
        stats = []
        for i in range(len(METRICS)):
            vals = np.array([m[3 + i] for m in ok])
            stats += [float(vals.mean()), float(vals.std())] if len(vals) else [math.nan, math.nan]
        out.append((*key, len(ok), len(members) - len(ok), *stats))
    return out


def summary_columns(first: str) -> tuple[str, ...]:
    cols = [first, "head", "runs_ok", "runs_failed"]
    for m in METRICS:
        cols += [f"{m}_mean", f"{m}_std"]
    return tuple(cols)


def compare(exp: ExperimentConfig, out_dir, dataset: sb.Dataset | None = None) -> dict:
    """Train every method for every seed; writes compare.tsv and compare_summary.tsv."""
    out_dir = Path(out_dir)
    dataset = dataset if dataset is not None else load_dataset(exp)
    jobs = []
    for method in exp.methods:
        for seed in exp.seeds:
            ckpt = str(out_dir / "checkpoints" / f"{method}-seed{seed}.npz") if exp.save_checkpoints else None
            jobs.append((dataset, exp, method, seed, None, ckpt))
    results = run_jobs(jobs, exp.workers)
    rows = _rows(results, "method", exp.model.heads)
    write_table(out_dir / "compare.tsv", "compare", exp, COMPARE_COLUMNS, rows)
    summary = summarize(rows)
    write_table(out_dir / "compare_summary.tsv", "compare-summary", exp, summary_columns("method"), summary)
    return {"results": results, "rows": rows, "summary": summary}


def sweep_segment(exp: ExperimentConfig, out_dir, n_values: Sequence[int] | None = None,
                  dataset: sb.Dataset | None = None) -> dict:
    """DRASP trained once per (segment length, seed); writes sweep.tsv and sweep_summary.tsv."""
    out_dir = Path(out_dir)
    dataset = dataset if dataset is not None else load_dataset(exp)
    n_values = tuple(n_values if n_values is not None else exp.n_values)
    jobs = [(dataset, exp, "drasp", seed, n, None) for n in n_values for seed in exp.seeds]
    results = run_jobs(jobs, exp.workers)
    rows = _rows(results, "n", exp.model.heads)
    write_table(out_dir / "sweep.tsv", "sweep", exp, SWEEP_COLUMNS, rows)
    summary = summarize(rows)
    write_table(out_dir / "sweep_summary.tsv", "sweep-summary", exp, summary_columns("n"), summary)
    return {"results": results, "rows": rows, "summary": summary}


def scatter_rows(model: MOSModel, dataset: sb.Dataset, split: str = "test") -> list[tuple]:
    truth = sb.system_truth(dataset, split)
    rows = []
    for head, agg in system_predictions(model, dataset, split).items():
        for system_id in sorted(truth):
            rows.append((system_id, head, agg[system_id], truth[system_id]))
    return rows


def export_scatter(checkpoint, exp: ExperimentConfig, out_dir,
                   dataset: sb.Dataset | None = None) -> Path:
    model, _ = load_checkpoint(checkpoint)
    dataset = dataset if dataset is not None else load_dataset(exp)
    path = Path(out_dir) / "scatter.tsv"
    write_table(path, "scatter", exp, SCATTER_COLUMNS, scatter_rows(model, dataset, exp.split))
    return path
