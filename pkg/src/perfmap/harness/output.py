"""Persisting results: CSV tables, gnuplot scripts, PNG figures and the run manifest."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from perfmap.harness.experiments import Curve, ExperimentResult, Table


def write_tables(out: Path, tables) -> list:
    paths = []
    for table in tables:
        path = out / table.filename
        path.write_text(table.to_csv())
        paths.append(path)
    return paths


def _gnuplot_quote(text: str) -> str:
    return "'" + text.replace("'", "''") + "'"


def gnuplot_script(curve: Curve, tables: dict) -> str:
    lines = [
        "set datafile separator ','",
        "set terminal svg size 800,560",
        f"set output {_gnuplot_quote(curve.name + '.svg')}",
        f"set title {_gnuplot_quote(curve.title)}",
        f"set xlabel {_gnuplot_quote(curve.xlabel)}",
        f"set ylabel {_gnuplot_quote(curve.ylabel)}",
        "set key left top autotitle columnhead",
    ]
    if curve.logx:
        lines.append("set logscale x")
    if curve.logy:
        lines.append("set logscale y")
    style = "points pt 7 ps 0.5" if curve.points else "lines"
    parts = []
    for s in curve.series:
        cols = tables[s.table].columns
        x, y = cols.index(s.x) + 1, cols.index(s.y) + 1
        if s.where is None:
            using = f"{x}:{y}"
        else:
            wc = cols.index(s.where[0]) + 1
            using = f"(${wc}=={s.where[1]} ? ${x} : 1/0):{y}"
        parts.append(f"{_gnuplot_quote(tables[s.table].filename)} using {using} with {style} "
                     f"title {_gnuplot_quote(s.label)}")
    lines.append("plot " + ", \\\n     ".join(parts))
    return "\n".join(lines) + "\n"


def write_gnuplot(out: Path, curves, tables: dict) -> list:
    paths = []
    for curve in curves:
        path = out / f"{curve.name}.gp"
        path.write_text(gnuplot_script(curve, tables))
        paths.append(path)
    return paths


def render_figures(out: Path, curves, tables: dict) -> list:
    """One PNG per curve, drawn with the non-interactive Agg backend."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for curve in curves:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for s in curve.series:
            table: Table = tables[s.table]
            x, y = table.column(s.x).astype(float), table.column(s.y).astype(float)
            if s.where is not None:
                keep = table.column(s.where[0]) == s.where[1]
                x, y = x[keep], y[keep]
            if curve.logy or curve.logx:
                ok = (y > 0 if curve.logy else True) & (x > 0 if curve.logx else True)
                x, y = x[ok], y[ok]
            if curve.points:
                ax.plot(x, y, "o", ms=3, label=s.label)
            else:
                ax.plot(x, y, lw=1, label=s.label)
        if curve.logx:
            ax.set_xscale("log")
        if curve.logy:
            ax.set_yscale("log")
        ax.set_title(curve.title)
        ax.set_xlabel(curve.xlabel)
        ax.set_ylabel(curve.ylabel)
        if len(curve.series) <= 12:
            ax.legend(fontsize=8)
        fig.tight_layout()
        path = out / f"{curve.name}.png"
        fig.savefig(path, dpi=110, metadata={"Software": None})
        plt.close(fig)
        paths.append(path)
    return paths


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_outputs(out: Path, result: ExperimentResult, figures: bool = True) -> list:
    out.mkdir(parents=True, exist_ok=True)
    tables = {t.name: t for t in result.tables}
    paths = write_tables(out, result.tables)
    paths += write_gnuplot(out, result.curves, tables)
    if figures:
        paths += render_figures(out, result.curves, tables)
    return paths


def write_manifest(out: Path, config, seed: int, paths, wall_clock: float, version: str, summary: dict) -> Path:
    manifest = {
        "version": version,
        "experiment": config.experiment,
        "seed": seed,
        "config": config.to_dict(),
        "config_sha256": config.digest(),
        "artifacts": [
            {"file": p.name, "sha256": sha256_file(p), "bytes": p.stat().st_size} for p in paths
        ],
        "summary": summary,
        "wall_clock_seconds": round(wall_clock, 3),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
