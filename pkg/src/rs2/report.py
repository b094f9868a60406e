"""Sweep execution and the CSV/SVG reports built from it."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from rs2 import sampling
from rs2.config import ExperimentSpec
from rs2.core import ConfigError
from rs2.harness import RunConfig, RunRecord, prepare_data, read_record_csv, run, time_to_accuracy
from rs2.theory import (
    ConvergenceInputs,
    GeneralizationInputs,
    convergence_bound,
    convex_bound,
    generalization_bound,
)

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("method", "r", "seeds", "completed", "mean_acc", "std_acc", "min_acc", "max_acc", "acc_pct")
TTA_COLUMNS = ("method", "r", "seed", "target", "time_ms")


def run_name(cfg: RunConfig) -> str:
    return f"{cfg.method}_r{cfg.r:g}_seed{cfg.seed}"


def _run_cell(cfg: RunConfig) -> RunRecord:
    try:
        return run(cfg)
    except Exception as exc:  # recorded per run, never aborts the sweep
        return RunRecord(complete=False, error=f"{type(exc).__name__}: {exc}")


def format_pm(mean: float, std: float) -> str:
    """Percent mean and spread in the ``91.7±0.5`` style."""
    return f"{100 * mean:.1f}±{100 * std:.1f}"


def summarize(rows) -> list[dict]:
    """Aggregate ``(method, r, seed, final_acc, complete)`` tuples per cell.

    Spread is the sample (n-1) standard deviation, 0 for a single seed.
    """
    cells: dict[tuple[str, float], list] = {}
    for method, r, seed, acc, complete in rows:
        cells.setdefault((method, r), []).append((seed, acc, complete))
    out = []
    for (method, r), items in cells.items():
        accs = [a for _, a, ok in items if ok and not math.isnan(a)]
        mean = statistics.fmean(accs) if accs else float("nan")
        std = statistics.stdev(accs) if len(accs) > 1 else 0.0
        out.append(
            {
                "method": method,
                "r": f"{r:g}",
                "seeds": len(items),
                "completed": len(accs),
                "mean_acc": f"{mean:.6f}",
                "std_acc": f"{std:.6f}",
                "min_acc": f"{min(accs):.6f}" if accs else "nan",
                "max_acc": f"{max(accs):.6f}" if accs else "nan",
                "acc_pct": format_pm(mean, std) if accs else "-",
            }
        )
    return out


def _write_rows(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    path.write_text(buf.getvalue())


def run_experiment(spec: ExperimentSpec) -> int:
    """Run every (method, r, seed) cell and write the reports.

    Returns the process exit status: 0 only if every run completed and every
    report file was written.
    """
    spec.validate()
    out = spec.out_dir
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    cells = list(spec.cells())
    if spec.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(spec.workers, len(cells))) as pool:
            records = list(pool.map(_run_cell, cells))
    else:
        records = [_run_cell(cfg) for cfg in cells]

    failed = 0
    summary_rows, tta_rows, meta_runs = [], [], []
    for cfg, rec in zip(cells, records):
        name = run_name(cfg)
        (runs_dir / f"{name}.csv").write_text(rec.to_csv())
        final = {
            "method": cfg.method,
            "r": cfg.r,
            "seed": cfg.seed,
            "rounds": cfg.rounds,
            "batch_size": cfg.batch_size,
            "steps": rec.steps,
            "complete": rec.complete,
            "error": rec.error,
            "final_accuracy": rec.final_accuracy,
            "final_grad_norm_sq": rec.final_grad_norm_sq,
            "final_train_loss": rec.final_train_loss,
            "final_test_loss": rec.final_test_loss,
            "generalization_gap": rec.final_test_loss - rec.final_train_loss,
            "weights_digest": rec.weights_digest,
        }
        (runs_dir / f"{name}.final.json").write_text(json.dumps(final, indent=2, sort_keys=True) + "\n")
        if not rec.complete:
            failed += 1
            log.error("run %s failed: %s", name, rec.error)
        summary_rows.append((cfg.method, cfg.r, cfg.seed, rec.final_accuracy, rec.complete))
        for target, ms in time_to_accuracy(rec, spec.targets).items():
            tta_rows.append(
                {"method": cfg.method, "r": f"{cfg.r:g}", "seed": cfg.seed, "target": f"{target:g}",
                 "time_ms": "" if ms is None else f"{ms:.3f}"}
            )
        meta_runs.append(
            {"name": name, "total_selection_ms": rec.total_selection_ms, "total_train_ms": rec.total_train_ms}
        )

    _write_rows(out / "summary.csv", SUMMARY_COLUMNS, summarize(summary_rows))
    if spec.targets:
        _write_rows(out / "time_to_accuracy.csv", TTA_COLUMNS, tta_rows)
    if spec.plots:
        from rs2 import plotting

        plotting.accuracy_vs_time(
            {run_name(c): r for c, r in zip(cells, records) if r.entries}, out / "accuracy_vs_time.svg"
        )
        plotting.lr_schedules(spec.base, out / "lr_schedule.svg", prepare_data_len(spec.base))
    meta = {
        "started_utc": started,
        "elapsed_s": time.perf_counter() - t0,
        "settings": {k: (list(v) if isinstance(v, tuple) else v) for k, v in spec.settings.items()},
        "runs": meta_runs,
        "failed": failed,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return 0 if failed == 0 else 1


def prepare_data_len(cfg: RunConfig) -> int:
    train, _ = prepare_data(cfg)
    return len(train)


def summary_from_run_csvs(out_dir) -> list[dict]:
    """Rebuild the summary table from the per-run CSV files alone."""
    rows = []
    for path in sorted(Path(out_dir, "runs").glob("*.csv")):
        stem = path.stem
        method, rest = stem.rsplit("_r", 1)
        r_text, seed_text = rest.split("_seed")
        rec = read_record_csv(path)
        meta = json.loads(path.with_suffix(".final.json").read_text())
        rows.append((method, float(r_text), int(seed_text), rec.final_accuracy, meta["complete"]))
    return summarize(rows)


@dataclass
class TheoryRow:
    r: float
    N: int | None
    iterations: float
    convergence_bound: float
    convex_bound: float | None
    generalization_bound: float | None
    measured_grad_norm_sq: float | None = None
    measured_gen_gap: float | None = None


def theory_report(
    beta: float,
    sigma: float,
    b: int,
    T: int,
    X: int,
    delta0: float,
    r_values=(0.1, 0.2, 0.3, 0.5, 1.0),
    w0_dist: float | None = None,
    N_values=(),
    C: float | None = None,
    beta_f: float | None = None,
    L_f: float | None = None,
    method: str = "rs2_without_replacement",
    measured: dict | None = None,
) -> list[TheoryRow]:
    """Bound values over a sweep of ``r`` (and optionally ``N``).

    ``measured`` is a run's ``*.final.json`` payload; its values are attached
    to the row with the matching ``r``.
    """
    with_gen = bool(N_values) or C is not None
    if with_gen:
        if method in sampling.IMPORTANCE_KINDS:
            raise ConfigError(
                f"the generalization bound needs data-independent batch selection; {method} is data-dependent"
            )
        if None in (C, beta_f, L_f) or not N_values:
            raise ConfigError("generalization bound needs N, C, beta_f and L_f")
        if C * beta_f >= 1.0:
            raise ConfigError(f"C={C} must be below 1/beta_f={1.0 / beta_f}")
    rows = []
    for r in r_values:
        conv = ConvergenceInputs(beta, sigma, b, r, T, X, delta0)
        for N in (N_values or (None,)):
            gen = None
            if with_gen:
                gen = generalization_bound(GeneralizationInputs(N, C, beta_f, L_f, r, T, X))
            row = TheoryRow(
                r=r,
                N=N,
                iterations=conv.iterations,
                convergence_bound=convergence_bound(conv),
                convex_bound=None if w0_dist is None else convex_bound(conv, w0_dist),
                generalization_bound=gen,
            )
            if measured and math.isclose(measured.get("r", -1), r):
                row.measured_grad_norm_sq = measured.get("final_grad_norm_sq")
                row.measured_gen_gap = measured.get("generalization_gap")
            rows.append(row)
    return rows


def theory_rows_csv(rows: list[TheoryRow]) -> str:
    buf = io.StringIO()
    cols = list(asdict(rows[0]).keys()) if rows else []
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v)) for k, v in asdict(row).items()})
    return buf.getvalue()
