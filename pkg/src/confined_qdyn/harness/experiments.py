"""The two lambda-sweep experiments and their pass/fail verdicts.

E1 compares full-space evolution with the Dirichlet-tube evolution on one
box grid.  E2 compares the normal-bundle operator with its effective
(product) limit on one ``(s, y)`` grid.  Each lambda is an independent task;
the manifest is built afterwards from the persisted CSVs only.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import __version__
from ..diagnostics import (
    cutoff_mass,
    difference_norm,
    fit_rate,
    moment_diagnostics,
    q_value,
    tail_mass_f3,
    thin_gradient_norm,
)
from ..operators import (
    Region,
    build_dirichlet_hamiltonian,
    build_effective_hamiltonian,
    build_fullspace_hamiltonian,
    build_normalbundle_hamiltonian,
    build_tangential_observable,
    fullspace_grid,
    normal_bundle_grid,
    region_mask,
)
from ..oracles import gaussian_moment, run_validation
from ..propagation import PropagatorConfig, make_standard_state, propagate_many
from .config import ExperimentConfig
from .io import RunManifest, discover_trajectories, read_record, trajectory_path, write_record

__all__ = [
    "run_e1",
    "run_e2",
    "run_validate",
    "run_experiment",
    "fit_directory",
    "e1_grid",
    "e2_grid",
    "FITTED_SERIES",
    "CRITERIA",
]

log = logging.getLogger(__name__)

FITTED_SERIES = {"e1": ("cutoff_mass", "dirichlet_error"), "e2": ("err",)}
CRITERIA = {
    "validate": ("A1", "A2"),
    "e1": ("A1", "A2", "A3", "A4", "A8"),
    "e2": ("A1", "A2", "A5", "A6", "A7", "A8"),
}
DRIFT_LIMIT = 1e-6
RUNTIME_LIMIT = {"e1": 15 * 60.0, "e2": 30 * 60.0}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def e1_grid(cfg: ExperimentConfig, lam: float, curve):
    """Box grid holding the curve with a ``3 delta`` margin and resolving ``(lambda^2 omega)^(-1/2)``."""
    pos = curve.position(np.linspace(0.0, curve.length, 4 * curve.sample_count, endpoint=False))
    lo, hi = pos.min(axis=0), pos.max(axis=0)
    center = 0.5 * (lo + hi)
    if cfg.half_width is None:
        half_width = float(np.max(hi - center)) + 3.0 * cfg.delta
    else:
        half_width = cfg.half_width
    if cfg.box_count is None:
        h_max = (lam**2 * cfg.omega) ** -0.5 / 6.0
        count = int(math.ceil(2.0 * half_width / h_max)) - 1
    else:
        count = cfg.box_count
    return fullspace_grid(half_width, count, tuple(center))


def e2_grid(cfg: ExperimentConfig, curve):
    return normal_bundle_grid(curve, cfg.ns, cfg.ny, cfg.normal_extent())


def _drift(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.max(np.abs(values - values[0])) / max(abs(values[0]), 1e-300))


def _per_state(fn):
    """Memoise ``fn(psi)`` for the most recent state (observers share one evaluation per step)."""
    last = [None, None]

    def wrapped(psi):
        if last[0] is not psi:
            last[0], last[1] = psi, fn(psi)
        return last[1]

    return wrapped


def _reverse(H, final, psi0, pcfg) -> float:
    """Propagate ``final`` back over the same time span and return the distance to ``psi0``."""
    _, back = propagate_many({"psi": (H, final)}, pcfg, direction=-1)
    return psi0.grid.norm(back["psi"].values - psi0.values)


def _e1_task(cfg: ExperimentConfig, lam: float) -> dict:
    start = time.perf_counter()
    curve, profile, tube = cfg.curve(), cfg.profile(), cfg.tube()
    grid = e1_grid(cfg, lam, curve)
    H = build_fullspace_hamiltonian(grid, curve, profile, lam)
    Hd = build_dirichlet_hamiltonian(grid, curve, profile, lam, tube)
    state = dict(k0=cfg.k0, w_s=cfg.w_s, s0=cfg.s0, tube=tube)
    psi0 = make_standard_state(grid, curve, profile, lam, "fullspace", **state)
    psid = make_standard_state(grid, curve, profile, lam, "tube_dirichlet", **state)

    outside = Region("d_ge", cfg.epsilon)
    inside = region_mask(grid, Region("d_le", cfg.epsilon), curve)

    fs_moments = _per_state(lambda psi: moment_diagnostics(psi, lam, profile=profile, curve=curve))

    def moments(states):
        return fs_moments(states["fullspace"])

    observers = [
        ("cutoff_mass", lambda s: cutoff_mass(s["fullspace"], outside, curve)),
        ("dirichlet_error", lambda s: grid.norm(inside * (s["fullspace"].values - s["dirichlet"].values))),
        ("grad_norm2", lambda s: moments(s)["grad_norm2"]),
        ("w_expectation", lambda s: moments(s)["w_expectation"]),
        ("thin_grad", lambda s: thin_gradient_norm(s["fullspace"], curve, cfg.epsilon, cfg.delta)),
    ]
    pcfg = PropagatorConfig(cfg.dt(lam), cfg.T, cfg.solver_tol, solver=cfg.solver)
    meta = {"lambda": lam, "grid": grid.spec(), "config_hash": cfg.config_hash()}
    record, final = propagate_many({"fullspace": (H, psi0), "dirichlet": (Hd, psid)}, pcfg, observers, meta)
    path = write_record(record, trajectory_path(cfg.output_dir, "e1", lam))
    scalars = {
        "grid_count": grid.axis1.count,
        "dt": pcfg.dt,
        "norm_drift": max(_drift(record["norm"]), _drift(record["norm_dirichlet"])),
        "energy_drift": max(_drift(record["energy"]), _drift(record["energy_dirichlet"])),
        "reversal_error": _reverse(H, final["fullspace"], psi0, pcfg),
        "h_psi0_scaled": grid.norm(H.apply(psi0.values)) / lam**2,
        "mu": float(record["energy"][0]) / lam**2,
        "w_scaled_sup": record.sup("w_expectation") * lam**2,
        "grad_scaled_sup": 0.5 * record.sup("grad_norm2") / lam**2,
        "thin_grad_scaled_sup": record.sup("thin_grad") / math.sqrt(lam),
        "runtime_seconds": time.perf_counter() - start,
    }
    return {"lambda": lam, "path": str(path), "scalars": scalars}


def _e2_task(cfg: ExperimentConfig, lam: float) -> dict:
    start = time.perf_counter()
    curve, profile, tube = cfg.curve(), cfg.profile(), cfg.tube()
    grid = e2_grid(cfg, curve)
    L = build_normalbundle_hamiltonian(grid, curve, profile, lam, tube)
    L0 = build_effective_hamiltonian(grid, curve, profile, lam)
    Q = build_tangential_observable(grid, curve, tube, lam)
    psi0 = make_standard_state(grid, curve, profile, lam, "normal_bundle", k0=cfg.k0, w_s=cfg.w_s, s0=cfg.s0)

    nb_moments = _per_state(lambda psi: moment_diagnostics(psi, lam))

    def moments(states):
        return nb_moments(states["full"])

    observers = [
        ("err", lambda s: difference_norm(s["full"], s["effective"])),
        ("q", lambda s: q_value(s["full"], Q)),
        ("n2", lambda s: moments(s)["n2"]),
        ("y2", lambda s: moments(s)["y2"]),
        ("dy_norm2", lambda s: moments(s)["dy_norm2"]),
        ("dx_norm2_scaled", lambda s: moments(s)["dx_norm2_scaled"]),
        ("f3_tail", lambda s: tail_mass_f3(s["full"], lam, cfg.s_exp)),
        ("mu", lambda s: L.expectation(s["full"]) / lam**2),
    ]
    pcfg = PropagatorConfig(cfg.dt(lam), cfg.T, cfg.solver_tol, solver=cfg.solver)
    meta = {"lambda": lam, "grid": grid.spec(), "config_hash": cfg.config_hash()}
    record, final = propagate_many({"full": (L, psi0), "effective": (L0, psi0)}, pcfg, observers, meta)
    path = write_record(record, trajectory_path(cfg.output_dir, "e2", lam))
    scalars = {
        "dt": pcfg.dt,
        "norm_drift": max(_drift(record["norm"]), _drift(record["norm_effective"])),
        "energy_drift": max(_drift(record["energy"]), _drift(record["energy_effective"])),
        "reversal_error": _reverse(L, final["full"], psi0, pcfg),
        "l_psi0_scaled": grid.norm(L.apply(psi0.values)) / lam**2,
        "q0": float(record["q"][0]),
        "q_growth": float(np.max(record["q"]) / record["q"][0]),
        "runtime_seconds": time.perf_counter() - start,
    }
    return {"lambda": lam, "path": str(path), "scalars": scalars}


_TASKS = {"e1": _e1_task, "e2": _e2_task}


def _workers(n_tasks: int) -> int:
    raw = os.environ.get("CONFINED_QDYN_THREADS", "").strip()
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ValueError(f"CONFINED_QDYN_THREADS must be an integer, got {raw!r}") from None
        if cap < 1:
            raise ValueError("CONFINED_QDYN_THREADS must be >= 1")
    else:
        cap = n_tasks
    return max(1, min(cap, n_tasks))


def _sweep(cfg: ExperimentConfig) -> list[dict]:
    task = _TASKS[cfg.experiment]
    workers = _workers(len(cfg.lambdas))
    if workers == 1:
        return [task(cfg, lam) for lam in cfg.lambdas]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, [cfg] * len(cfg.lambdas), cfg.lambdas))


def _sup_table(experiment: str, files: dict[float, Path]) -> dict[str, dict[float, float]]:
    records = {lam: read_record(path) for lam, path in files.items()}
    names = [n for n in next(iter(records.values())).names if n not in ("norm", "energy")]
    return {name: {lam: rec.sup(name) for lam, rec in records.items()} for name in names}


def fit_directory(directory, noise_floor: float = 1e-12) -> tuple[str, dict[str, dict], dict[str, dict[float, float]]]:
    """Re-fit the rate series from the CSVs in ``directory`` alone."""
    experiment, files = discover_trajectories(directory)
    sups = _sup_table(experiment, files)
    rates = {}
    for name in FITTED_SERIES[experiment]:
        points = sorted(sups[name].items())
        rates[name] = fit_rate(points, noise_floor=noise_floor).as_dict()
    return experiment, rates, sups


def _floored(values: list[float], floor: float) -> list[float]:
    return [max(v, floor) for v in values]


def _strictly_decreasing(values, floor) -> bool:
    # two values both at the noise floor count as decreasing
    v = _floored(values, floor)
    return all(b < a or (a <= floor and b <= floor) for a, b in zip(v, v[1:]))


def _non_increasing(values, floor=0.0) -> bool:
    v = _floored(values, floor)
    return all(b <= a for a, b in zip(v, v[1:]))


def _verdict(passed: bool, **detail) -> dict:
    return {"passed": bool(passed), **detail}


def _oracle_verdicts(reports: list[dict]) -> dict[str, dict]:
    by_name = {r["name"]: r for r in reports}
    a1_names = [n for n in by_name if n not in ("dt_halving_ratio", "time_reversal")]
    return {
        "A1": _verdict(all(by_name[n]["pass_flag"] for n in a1_names), checks={n: by_name[n]["pass_flag"] for n in a1_names}),
        "A2_validation": _verdict(
            by_name["dt_halving_ratio"]["pass_flag"] and by_name["time_reversal"]["pass_flag"],
            dt_halving_ratio=by_name["dt_halving_ratio"]["measured"],
            time_reversal=by_name["time_reversal"]["measured"],
        ),
    }


def _propagator_verdict(per_lambda: dict[str, dict], validation: dict) -> dict:
    worst = {k: max(p[k] for p in per_lambda.values()) for k in ("norm_drift", "energy_drift", "reversal_error")}
    ok = all(v <= DRIFT_LIMIT for v in worst.values()) and validation["passed"]
    return _verdict(ok, **worst, dt_halving_ratio=validation["dt_halving_ratio"])


def _e1_verdicts(cfg, sups, per_lambda, runtime) -> dict:
    lams = list(cfg.lambdas)
    floor = cfg.noise_floor
    ratio = lams[0] / lams[-1]
    cut = [sups["cutoff_mass"][lam] for lam in lams]
    derr = [sups["dirichlet_error"][lam] for lam in lams]
    wscaled = [per_lambda[_key(lam)]["w_scaled_sup"] for lam in lams]
    cut_ratio = max(cut[-1], floor) / max(cut[0], floor)
    derr_ratio = max(derr[-1], floor) / max(derr[0], floor)
    return {
        "A3": _verdict(
            _strictly_decreasing(cut, floor) and (cut_ratio <= ratio or cut[-1] <= floor) and runtime <= RUNTIME_LIMIT["e1"],
            sup_values=cut, ratio=cut_ratio, threshold=ratio, runtime_seconds=runtime,
        ),
        "A4": _verdict(
            _non_increasing(derr, floor) and (derr_ratio <= ratio**0.25 or derr[-1] <= floor),
            sup_values=derr, ratio=derr_ratio, threshold=ratio**0.25,
        ),
        "A8": _verdict(max(wscaled) <= 2.0 * wscaled[0], w_scaled_sup=wscaled, bound=2.0 * wscaled[0]),
    }


def _spread(values) -> float:
    return max(values) / min(values)


def _e2_verdicts(cfg, sups, per_lambda, runtime) -> dict:
    lams = list(cfg.lambdas)
    floor = cfg.noise_floor
    ratio = lams[0] / lams[-1]
    err = [sups["err"][lam] for lam in lams]
    err_ratio = max(err[-1], floor) / max(err[0], floor)
    pl = [per_lambda[_key(lam)] for lam in lams]
    q_growth = [p["q_growth"] for p in pl]
    q_ref = gaussian_moment("p2", cfg.w_s, cfg.k0) + 1.0
    q0_rel = [abs(p["q0"] - q_ref) / q_ref for p in pl]
    y2 = [sups["y2"][lam] for lam in lams]
    n2 = [sups["n2"][lam] for lam in lams]
    dy = [sups["dy_norm2"][lam] for lam in lams]
    dx = [math.sqrt(sups["dx_norm2_scaled"][lam]) for lam in lams]
    f3 = sups["f3_tail"][lams[-1]]
    lpsi = [p["l_psi0_scaled"] for p in pl]
    return {
        "A5": _verdict(
            _strictly_decreasing(err, floor) and (err_ratio <= ratio**0.5 or err[-1] <= floor) and runtime <= RUNTIME_LIMIT["e2"],
            sup_values=err, ratio=err_ratio, threshold=ratio**0.5, runtime_seconds=runtime,
        ),
        "A6": _verdict(
            _spread(q_growth) < 2.0 and max(q0_rel) <= 0.01,
            q_growth=q_growth, spread=_spread(q_growth), q0=[p["q0"] for p in pl], q0_reference=q_ref, q0_rel_err=q0_rel,
        ),
        "A7": _verdict(
            _spread(y2) < 2.0 and _spread(dy) < 2.0 and _non_increasing(dx) and f3 <= 1e-4,
            y2_sup=y2, y2_spread=_spread(y2), dy_norm2_sup=dy, dy_spread=_spread(dy),
            dx_scaled_sup=dx, f3_tail_at_max_lambda=f3, n2_sup=n2, n2_spread=_spread(n2),
        ),
        "A8": _verdict(max(lpsi) <= 2.0 * lpsi[0], l_psi0_scaled=lpsi, bound=2.0 * lpsi[0]),
    }


def _key(lam: float) -> str:
    return f"{lam:g}"


def _validation_block(manifest: RunManifest) -> dict:
    reports = [r.as_dict() for r in run_validation()]
    manifest.oracle_reports = reports
    verdicts = _oracle_verdicts(reports)
    manifest.verdicts["A1"] = verdicts["A1"]
    return verdicts["A2_validation"]


def run_validate(cfg: ExperimentConfig | None = None) -> RunManifest:
    """Oracle gate: A1 plus the validation-problem part of A2."""
    manifest = RunManifest("validate", cfg.as_dict() if cfg else {}, started=_now(), tool_version=__version__)
    start = time.perf_counter()
    manifest.verdicts["A2"] = _validation_block(manifest)
    manifest.runtime_seconds = time.perf_counter() - start
    manifest.finished = _now()
    if cfg is not None:
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
        manifest.save(Path(cfg.output_dir) / "manifest.json")
    return manifest


def _run_sweep(cfg: ExperimentConfig, verdicts_fn) -> RunManifest:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg.experiment, cfg.as_dict(), started=_now(), tool_version=__version__)
    start = time.perf_counter()
    validation = _validation_block(manifest)
    results = _sweep(cfg)
    runtime = time.perf_counter() - start

    files = {r["lambda"]: Path(r["path"]) for r in results}
    manifest.files = {_key(lam): str(p) for lam, p in files.items()}
    manifest.per_lambda = {_key(r["lambda"]): r["scalars"] for r in results}
    sups = _sup_table(cfg.experiment, files)
    manifest.sup_values = {name: {_key(lam): v for lam, v in table.items()} for name, table in sups.items()}
    for name in FITTED_SERIES[cfg.experiment]:
        manifest.rates[name] = fit_rate(sorted(sups[name].items()), noise_floor=cfg.noise_floor).as_dict()
    manifest.verdicts["A2"] = _propagator_verdict(manifest.per_lambda, validation)
    manifest.verdicts.update(verdicts_fn(cfg, sups, manifest.per_lambda, runtime))
    manifest.runtime_seconds = runtime
    manifest.finished = _now()
    manifest.save(out / "manifest.json")
    return manifest


def run_e1(cfg: ExperimentConfig) -> RunManifest:
    """Full-space vs Dirichlet-tube sweep: confinement decay and Dirichlet comparison."""
    if cfg.experiment != "e1":
        raise ValueError(f"run_e1 needs experiment=e1, got {cfg.experiment}")
    return _run_sweep(cfg, _e1_verdicts)


def run_e2(cfg: ExperimentConfig) -> RunManifest:
    """Normal-bundle vs effective-operator sweep with energy and moment diagnostics."""
    if cfg.experiment != "e2":
        raise ValueError(f"run_e2 needs experiment=e2, got {cfg.experiment}")
    return _run_sweep(cfg, _e2_verdicts)


def run_experiment(cfg: ExperimentConfig) -> RunManifest:
    return {"e1": run_e1, "e2": run_e2, "validate": run_validate}[cfg.experiment](cfg)
