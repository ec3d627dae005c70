"""Deterministic SVG figures built from persisted trajectories."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .io import RunManifest, read_record

__all__ = ["emit_plots"]

_CORE = ("norm", "energy")


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "confined-qdyn"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def _save(fig, path: Path, plt) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def _rate_plot(plt, name, sups: dict[str, float], rate: dict, path: Path) -> Path:
    lams = np.array(sorted(float(k) for k in sups))
    vals = np.array([sups[f"{lam:g}"] for lam in lams])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(lams, vals, "o", label="sup over t")
    slope, intercept = rate["slope"], rate["intercept"]
    if np.isfinite(slope):
        fine = np.geomspace(lams[0], lams[-1], 50)
        ax.loglog(fine, np.exp(intercept) * fine**slope, "-", label=f"fit slope {slope:.3f}")
    ax.set_xlabel("lambda")
    ax.set_ylabel(name)
    ax.set_title(f"{name} vs lambda")
    ax.legend()
    return _save(fig, path, plt)


def _trace_plot(plt, name, records, path: Path, relative=False) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    for lam, rec in records:
        y = np.asarray(rec[name], dtype=float)
        if relative and y[0] != 0:
            y = y / y[0]
        ax.plot(rec.times, y, label=f"lambda={lam:g}")
    ax.set_xlabel("t")
    ax.set_ylabel(f"{name}(t)/{name}(0)" if relative else name)
    ax.legend()
    return _save(fig, path, plt)


def emit_plots(manifest: RunManifest, out_dir=None) -> list[Path]:
    """Rate plots for fitted series, ``q(t)`` traces and diagnostic traces.

    Missing CSVs are skipped with a warning appended to ``manifest.warnings``.
    Returns the written paths (empty when there is nothing to plot).
    """
    records = []
    for key, path in sorted(manifest.files.items(), key=lambda kv: float(kv[0])):
        if not Path(path).is_file():
            manifest.warnings.append(f"plot: missing trajectory file {path}")
            continue
        records.append((float(key), read_record(path)))
    if not records and not manifest.rates:
        manifest.warnings.append("plot: no series to plot")
        return []

    plt = _pyplot()
    out = Path(out_dir if out_dir is not None else Path(next(iter(manifest.files.values()), ".")).parent)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, rate in sorted(manifest.rates.items()):
        sups = manifest.sup_values.get(name)
        if not sups:
            manifest.warnings.append(f"plot: no sup values for {name}")
            continue
        written.append(_rate_plot(plt, name, sups, rate, out / f"rate_{name}.svg"))
    if records:
        names = [n for n in records[0][1].names if n not in _CORE]
        for name in names:
            if not all(name in rec.series for _, rec in records):
                manifest.warnings.append(f"plot: series {name} missing for some lambda")
                continue
            if name == "q":
                written.append(_trace_plot(plt, name, records, out / "q_traces.svg", relative=True))
            else:
                written.append(_trace_plot(plt, name, records, out / f"trace_{name}.svg"))
    return written
