"""Suite reports and their deterministic serialisation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

SIG_DIGITS = 12


def canonical(obj: Any) -> Any:
    """Plain JSON types with floats rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return canonical(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return float(f"{v:.{SIG_DIGITS}g}")
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any) -> str:
    return json.dumps(canonical(obj), sort_keys=True, indent=2) + "\n"


@dataclass
class Plot:
    xlabel: str
    ylabel: str
    series: dict = field(default_factory=dict)
    logx: bool = True
    logy: bool = True


@dataclass
class Report:
    suite: str
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    plots: dict = field(default_factory=dict)
    config: dict | None = None

    def check(self, name: str, passed: bool, **details) -> bool:
        self.checks.append({"name": name, "pass": bool(passed), **details})
        return bool(passed)

    def table(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        self.tables[name] = (list(header), [list(r) for r in rows])

    def plot(self, name: str, xlabel: str, ylabel: str, x, y, label: str = "value",
             logx: bool = True, logy: bool = True) -> None:
        p = self.plots.setdefault(name, Plot(xlabel, ylabel, logx=logx, logy=logy))
        p.series[label] = (np.asarray(x, dtype=float).tolist(), np.asarray(y, dtype=float).tolist())

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_dict(self) -> dict:
        out = {"suite": self.suite, "pass": self.passed, "checks": self.checks,
               "tables": sorted(self.tables), "plots": sorted(self.plots)}
        if self.config is not None:
            out["config"] = self.config
        return out


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([canonical(v) for v in r])
    return buf.getvalue()


def plot_files(name: str, plot: Plot) -> dict[str, str]:
    """Two-column CSV per series: ``<name>.csv`` for one series, ``<name>.<label>.csv`` otherwise."""
    out = {}
    for label, (x, y) in plot.series.items():
        fname = f"{name}.csv" if len(plot.series) == 1 else f"{name}.{label}.csv"
        out[fname] = _csv_text([plot.xlabel, plot.ylabel], zip(x, y))
    return out


def write(report: Report, outdir: str | Path, figures: bool = False) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    p = outdir / f"{report.suite}.json"
    p.write_text(dumps(report.to_dict()))
    written.append(p)
    for name, (header, rows) in sorted(report.tables.items()):
        p = outdir / f"{report.suite}.{name}.csv"
        p.write_text(_csv_text(header, rows))
        written.append(p)
    for name, plot in sorted(report.plots.items()):
        for fname, text in plot_files(name, plot).items():
            p = outdir / "plots" / f"{report.suite}.{fname}"
            p.parent.mkdir(exist_ok=True)
            p.write_text(text)
            written.append(p)
        if figures:
            from .plotting import render

            written.append(render(plot, outdir / "plots" / f"{report.suite}.{name}.png", f"{report.suite}: {name}"))
    return written


def summary_lines(reports: Sequence[Report]) -> list[str]:
    lines = ["suite\tcheck\tresult"]
    for r in reports:
        for c in r.checks:
            lines.append(f"{r.suite}\t{c['name']}\t{'PASS' if c['pass'] else 'FAIL'}")
    return lines
