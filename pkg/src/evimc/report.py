"""Report payloads (JSON/CSV text) and atomic file output."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

from .engine import Analysis, EviResult
from .oracle import AdditivityRow, OracleEstimate

__all__ = [
    "evi_report",
    "fit_report",
    "plot_data_rows",
    "plot_data_csv",
    "emit_plot_data",
    "scenario_csv",
    "additivity_csv",
    "oracle_entry",
    "dumps",
    "table_text",
    "write_atomic",
]


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=True) + "\n"


def evi_report(analysis: Analysis, results: Sequence[EviResult]) -> dict:
    model = analysis.model
    z = analysis.z
    queries = []
    for r in results:
        q = {
            "label": r.evidence.label,
            "evidence": r.evidence.to_dict(),
            "preposterior_mean": r.preposterior.mean,
            "preposterior_variance": r.preposterior.variance,
            "evi": r.evi,
            "method": r.method,
        }
        if r.quadrature_evi is not None:
            q["quadrature_evi"] = r.quadrature_evi
        queries.append(q)
    r2 = {model.decision_names[f.decision]: f.r_squared for f in analysis.fits}
    return {
        "model_title": model.title,
        "value_units": model.value_units,
        "seed": analysis.config.seed,
        "N": analysis.config.sample_size,
        "star": analysis.star,
        "plus": analysis.plus,
        "decision_means": dict(zip(model.decision_names, map(float, analysis.table.means))),
        "mu_prime": z.mu_prime,
        "sample_mu_prime": z.sample_mu_prime,
        "sigma2_prime": z.sigma2_prime,
        "contributions": {name: float(c) for name, c in zip(z.names, z.contributions)},
        "r_squared": r2,
        "low_r_squared": sorted(analysis.low_r_squared),
        "warnings": list(analysis.warnings),
        "queries": queries,
    }


def fit_report(analysis: Analysis) -> list[dict]:
    out = []
    for f in analysis.fits:
        out.append({
            "decision": analysis.model.decision_names[f.decision],
            "alpha": f.alpha,
            "betas": {name: float(b) for name, b in zip(analysis.model.variable_names, f.betas)},
            "r_squared": f.r_squared,
            "residual_variance": f.residual_variance,
        })
    return out


def plot_data_rows(results: Iterable[EviResult]) -> list[tuple[str, float, float]]:
    rows = [(r.evidence.label, r.evi, r.preposterior.sd) for r in results]
    rows.sort(key=lambda row: row[0])
    rows.sort(key=lambda row: -row[1])
    return rows


def plot_data_csv(results: Iterable[EviResult]) -> str:
    """``label,evi,preposterior_sd`` sorted by descending EVI, ties by label."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "evi", "preposterior_sd"])
    for label, evi, sd in plot_data_rows(results):
        w.writerow([label, _fmt(evi), _fmt(sd)])
    return buf.getvalue()


def emit_plot_data(results: Sequence[EviResult], path) -> Path:
    if not results:
        raise ValueError("no results to write")
    return write_atomic(path, plot_data_csv(results))


def scenario_csv(analysis: Analysis) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", *analysis.model.variable_names, *analysis.model.decision_names])
    rows = analysis.scenarios.rows
    values = analysis.table.values
    for s in range(rows.shape[0]):
        w.writerow([s, *map(_fmt, rows[s]), *map(_fmt, values[s])])
    return buf.getvalue()


def additivity_csv(rows: Sequence[AdditivityRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variable", "evi_engine", "evi_oracle", "oracle_se"])
    for r in rows:
        w.writerow([r.variable, _fmt(r.evi_engine),
                    "" if r.evi_oracle is None else _fmt(r.evi_oracle),
                    "" if r.oracle_se is None else _fmt(r.oracle_se)])
    return buf.getvalue()


def oracle_entry(label: str, engine_evi: float, est: OracleEstimate | None, reason: str = "") -> dict:
    if est is None:
        return {"query": label, "engine_evi": engine_evi, "method": None, "skipped": reason}
    return {"query": label, "engine_evi": engine_evi, **est.to_dict()}


def table_text(analysis: Analysis, results: Sequence[EviResult]) -> str:
    model = analysis.model
    units = model.value_units or "value units"
    lines = [
        model.title or "(untitled model)",
        f"seed={analysis.config.seed}  N={analysis.config.sample_size}  "
        f"best={analysis.star}  runner-up={analysis.plus}",
        f"prior z: mean={analysis.z.mu_prime:.6g}  variance={analysis.z.sigma2_prime:.6g}",
        "",
    ]
    rows = plot_data_rows(results)
    width = max([len("evidence")] + [len(r[0]) for r in rows])
    lines.append(f"{'rank':>4}  {'evidence':<{width}}  {'EVI (' + units + ')':>16}  {'prepost. sd':>12}")
    for i, (label, evi, sd) in enumerate(rows, 1):
        lines.append(f"{i:>4}  {label:<{width}}  {evi:>16.6f}  {sd:>12.6f}")
    for w in analysis.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def write_atomic(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
