"""Post-hoc analysis of a run directory, and the phase-ablation sweep."""

from __future__ import annotations

import csv
import json
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .experiment import run_experiment, write_csv, write_json
from .metrics import confidence_histogram, pr_curve
from .pipeline import ABLATIONS, compose

REQUIRED = ("config.ini", "report.json", "partition.csv")
_CONF_RE = re.compile(r"^confidence_(\d+)_(\w+)\.csv$")


class MissingArtifactError(FileNotFoundError):
    pass


def _read_confidences(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    conf = np.array([float(r["confidence"]) for r in rows])
    noisy = np.array([int(r["is_noisy"]) for r in rows], dtype=bool)
    return conf, noisy


def phase_confidence_files(run_dir) -> list[tuple[int, str, Path]]:
    found = []
    for p in Path(run_dir).iterdir():
        m = _CONF_RE.match(p.name)
        if m:
            found.append((int(m.group(1)), m.group(2), p))
    return sorted(found)


def build_report(run_dir, bins: int = 20) -> dict:
    """Per-phase PR curves and confidence histograms for a finished run.

    Writes ``pr_curve_<i>_<kind>.csv`` (recall, precision), ``histogram_<i>_<kind>.csv``
    (``bins`` rows per group, clean then noisy) and ``summary.json``; returns the summary.
    The AUC after phase i scores the cumulative composition of phases 1..i.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise MissingArtifactError(f"{run_dir}: not a directory")
    phases = phase_confidence_files(run_dir)
    missing = [name for name in REQUIRED if not (run_dir / name).exists()]
    if not phases:
        missing.append("confidence_<i>_<phase>.csv")
    if missing:
        raise MissingArtifactError(
            f"{run_dir}: missing artifacts {', '.join(missing)} "
            f"(expected {', '.join(REQUIRED)} and confidence_<i>_<phase>.csv from `run`)"
        )
    report = json.loads((run_dir / "report.json").read_text())
    per_phase = []
    for i, kind, path in phases:
        conf, noisy = _read_confidences(path)
        tag = f"{i}_{kind}"
        entry = {"index": i, "phase": kind, "composition": "->".join(report["phases"][:i])}
        if noisy.any() and not noisy.all():
            curve = pr_curve(conf, noisy)
            entry["pr_auc"] = round(curve.auc, 6)
            write_csv(run_dir / f"pr_curve_{tag}.csv", ["recall", "precision"], curve.rows())
        else:
            entry["pr_auc"] = None
        edges, clean, noisy_counts = confidence_histogram(conf, noisy, bins)
        rows = [(edges[b], edges[b + 1], group, int(counts[b]))
                for group, counts in (("clean", clean), ("noisy", noisy_counts))
                for b in range(bins)]
        write_csv(run_dir / f"histogram_{tag}.csv", ["bin_lo", "bin_hi", "group", "count"], rows)
        per_phase.append(entry)
    summary = {"report": report, "phases": per_phase}
    write_json(run_dir / "summary.json", summary)
    return summary


ABLATION_LABELS = {"1": "NL-SelNL-SelPL", "2": "NL-SelNL", "3": "NL-SelPL", "4": "NL"}


def _ablation_job(args):
    cfg, key, out = args
    cfg = replace(cfg, phases=compose(cfg.phases, ABLATIONS[key]))
    res = run_experiment(cfg, out)
    return key, res.report


def run_ablation(cfg, out_dir, workers: int = 1) -> list[dict]:
    """Run variants #1-#4 (full, -SelPL, -SelNL, NL only) into ``out_dir/ablation_<k>``.

    Every variant shares the master seed, hence the same data and noise.
    Writes ``ablation.csv`` and returns one row per variant.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    have = {p.kind for p in cfg.phases}
    if not {"NL", "SelNL", "SelPL"} <= have:
        raise ValueError("ablation needs NL, SelNL and SelPL phase settings in the config")
    jobs = [(cfg, key, out_dir / f"ablation_{key}") for key in ABLATIONS]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = dict(ex.map(_ablation_job, jobs))
    else:
        results = dict(map(_ablation_job, jobs))
    rows = []
    for key in ABLATIONS:
        rep = results[key]
        rows.append({
            "variant": f"#{key}",
            "phases": ABLATION_LABELS[key],
            "accuracy": rep["final_test_acc"],
            "estimated_noise": rep["estimated_noise"],
            "recall": rep["recall"],
            "precision": rep["precision"],
        })
    header = list(rows[0])
    write_csv(out_dir / "ablation.csv", header, ([r[h] for h in header] for r in rows))
    return rows


def format_table(rows) -> str:
    header = list(rows[0])
    cells = [[("-" if v is None else f"{v:.2f}" if isinstance(v, float) else str(v)) for v in r.values()]
             for r in rows]
    widths = [max(len(h), *(len(c[i]) for c in cells)) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)

