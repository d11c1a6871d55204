"""Report emission: CSV rows, JSON-lines block records, gnuplot columns."""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import asdict
from pathlib import Path

from .metrics import MetricsReport

NUMERIC = (int, float)


def csv_text(reports: list[MetricsReport], aggregate: bool = False) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["row", *MetricsReport.ROW_FIELDS], lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow({"row": "run", **r.row()})
    if aggregate and reports:
        rows = [r.row() for r in reports]
        mean, stdev = {"row": "mean"}, {"row": "stdev"}
        for key in MetricsReport.ROW_FIELDS:
            vals = [row[key] for row in rows]
            if key == "seed" or not all(isinstance(v, NUMERIC) and not isinstance(v, bool)
                                        for v in vals):
                same = len(set(vals)) == 1
                mean[key] = stdev[key] = vals[0] if same else "*"
                continue
            mean[key] = round(statistics.fmean(vals), 6)
            stdev[key] = round(statistics.stdev(vals), 6) if len(vals) > 1 else 0.0
        w.writerow(mean)
        w.writerow(stdev)
    return buf.getvalue()


def jsonl_text(report: MetricsReport) -> str:
    lines = []
    for b in report.block_log:
        rec = asdict(b)
        rec["seed"] = report.seed
        lines.append(json.dumps(rec, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def gnuplot_text(report: MetricsReport) -> str:
    out = ["# index commit_ms valid invalid duplicates hops"]
    for b in report.block_log:
        out.append(f"{b.index} {b.commit_ms:.6f} {b.valid} {b.invalid} {b.duplicates} {b.hops}")
    return "\n".join(out) + "\n"


def emit(reports: list[MetricsReport], out_dir: str | Path, *, aggregate: bool = False,
         gnuplot: bool = True) -> list[Path]:
    """Write runs.csv plus per-seed blocks-<seed>.jsonl (and .dat) files."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    written = [d / "runs.csv"]
    written[0].write_text(csv_text(reports, aggregate))
    for r in reports:
        p = d / f"blocks-{r.protocol}-n{r.n}-s{r.seed}.jsonl"
        p.write_text(jsonl_text(r))
        written.append(p)
        if gnuplot:
            g = p.with_suffix(".dat")
            g.write_text(gnuplot_text(r))
            written.append(g)
    return written


def summary(r: MetricsReport) -> str:
    return (f"{r.protocol} n={r.n} t={r.t} beta={r.beta} {r.adversary} seed={r.seed}: "
            f"{r.blocks} blocks, {r.valid_tx_per_sec:.1f} valid tx/s, "
            f"inter-block {r.inter_block_ms:.1f} ms, commit latency "
            f"{r.commit_latency_mean_ms:.1f} ms, valid/block {r.valid_tx_per_block:.1f}, "
            f"invalid/block {r.invalid_tx_per_block:.1f}, verifiers "
            f"{r.verif_min}-{r.verif_max} (mean {r.verif_mean:.2f}), hops {r.hops_min}-{r.hops_max}")
