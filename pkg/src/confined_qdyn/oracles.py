"""Independent references used to validate the propagator and the estimators.

Nothing here calls the Crank-Nicolson code: the exponential is taken from a
dense eigendecomposition, the oscillator energy from a tridiagonal
eigensolve, and Gaussian moments from closed forms.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .operators import Axis, Grid2D, OperatorMatrix, discrete_laplacian

__all__ = [
    "OracleReport",
    "ho_ground_energy",
    "ho_grid_ground_energy",
    "dense_expm_evolve",
    "gaussian_moment",
    "validation_problem",
    "run_validation",
]

DENSE_LIMIT = 2500


@dataclass(frozen=True)
class OracleReport:
    name: str
    measured: float
    reference: float
    abs_err: float
    rel_err: float
    pass_flag: bool
    tolerance: float
    criterion: str = "abs"

    @classmethod
    def compare(cls, name, measured, reference, tolerance, criterion="abs"):
        abs_err = abs(measured - reference)
        rel_err = abs_err / abs(reference) if reference != 0 else math.inf
        err = abs_err if criterion == "abs" else rel_err
        return cls(name, float(measured), float(reference), float(abs_err), float(rel_err), bool(err <= tolerance), tolerance, criterion)

    def as_dict(self) -> dict:
        return asdict(self)


def ho_ground_energy(omega: float) -> float:
    """Ground energy ``omega/2`` of ``(-d^2/dy^2 + omega^2 y^2)/2``."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    return 0.5 * omega


def ho_grid_ground_energy(omega: float, y_max: float = 8.0, count: int = 256) -> float:
    """Lowest eigenvalue of the three-point oscillator on ``[-y_max, y_max]``."""
    h = 2.0 * y_max / (count + 1)
    y = -y_max + h * np.arange(1, count + 1)
    diag = 1.0 / h**2 + 0.5 * omega**2 * y**2
    off = np.full(count - 1, -0.5 / h**2)
    return float(sla.eigh_tridiagonal(diag, off, select="i", select_range=(0, 0), eigvals_only=True)[0])


def dense_expm_evolve(H: OperatorMatrix, psi0, t: float):
    """``exp(-i t H) psi0`` from a dense Hermitian eigendecomposition.

    Works in the grid's weighted inner product by symmetrising with the square
    root of the weight.  Returns an array of grid shape, or a ``WaveFunction``
    when given one.
    """
    if H.dimension > DENSE_LIMIT:
        raise ValueError(f"dense exponential limited to dimension {DENSE_LIMIT}, got {H.dimension}")
    values = np.ravel(getattr(psi0, "values", psi0)).astype(complex)
    root = np.sqrt(H.grid.weights.ravel())
    dense = H.matrix.toarray()
    sym = (root[:, None] * dense) / root[None, :]
    sym = 0.5 * (sym + sym.conj().T)
    evals, evecs = np.linalg.eigh(sym)
    coeff = evecs.conj().T @ (root * values)
    out = (evecs @ (np.exp(-1j * t * evals) * coeff)) / root
    out = out.reshape(H.grid.shape)
    if hasattr(psi0, "values"):
        return type(psi0)(out, psi0.grid, psi0.normalized_flag)
    return out


def gaussian_moment(kind: str, width: float, k0: float = 0.0, a: float | None = None) -> float:
    """Closed-form moments of a Gaussian packet whose density has standard deviation ``width``.

    ``"x2"`` is the second moment, ``"p2"`` the mean squared momentum of
    ``exp(i k0 x - x^2/(4 width^2))`` and ``"tail_beyond"`` the probability of
    ``|x| > a``.
    """
    if not width > 0:
        raise ValueError("width must be positive")
    if kind == "x2":
        return width**2
    if kind == "p2":
        return k0**2 + 1.0 / (4.0 * width**2)
    if kind == "tail_beyond":
        if a is None:
            raise ValueError("tail_beyond needs the threshold a")
        return math.erfc(a / (math.sqrt(2.0) * width))
    raise ValueError(f"unknown moment kind {kind!r}")


def validation_problem(count: int = 24):
    """Small generic Hamiltonian and initial state shared by the validation checks."""
    grid = Grid2D(Axis("x1", -3.0, 3.0, count), Axis("x2", -3.0, 3.0, count))
    x, y = grid.mesh()
    potential = 0.25 * (x**2 + 2.0 * y**2) + 0.3 * np.sin(x) * np.cos(0.7 * y) + 0.1 * x * y
    H = OperatorMatrix(-0.5 * discrete_laplacian(grid) + sp.diags(potential.ravel()), grid, name="validation")
    psi = np.exp(-((x - 0.4) ** 2 + (y + 0.2) ** 2) / 1.2 + 1j * (0.8 * x - 0.5 * y))
    psi = psi / grid.norm(psi)
    return H, psi


def run_validation(t_final: float = 0.5, dt: float = 1e-3) -> list[OracleReport]:
    """All oracle checks gating a build, with their tolerances."""
    from .propagation import CrankNicolson, PropagatorConfig, WaveFunction, propagate_many

    start = time.perf_counter()
    reports = []
    H, psi0 = validation_problem()
    grid = H.grid
    ref = dense_expm_evolve(H, psi0, t_final)

    def cn_error(step):
        stepper = CrankNicolson(H, step, tol=1e-12)
        v = psi0.copy()
        for _ in range(int(round(t_final / step))):
            v = stepper.step(v)
        return grid.norm(v - ref), v

    err, final = cn_error(dt)
    reports.append(OracleReport.compare("cn_vs_dense_expm", err, 0.0, 1e-3))
    err2, _ = cn_error(2 * dt)
    reports.append(OracleReport("dt_halving_ratio", err2 / err, 4.0, abs(err2 / err - 4.0), abs(err2 / err - 4.0) / 4.0,
                                bool(3.0 <= err2 / err <= 5.0), 1.0, "range[3,5]"))

    backward = CrankNicolson(H, -dt, tol=1e-12)
    v = final
    for _ in range(int(round(t_final / dt))):
        v = backward.step(v)
    reports.append(OracleReport.compare("time_reversal", grid.norm(v - psi0), 0.0, 1e-6))

    wf = WaveFunction(psi0, grid, True)
    record, _ = propagate_many({"psi": (H, wf)}, PropagatorConfig(dt, t_final))
    reports.append(OracleReport.compare("norm_drift", float(np.max(np.abs(record["norm"] - 1.0))), 0.0, 1e-6))
    e = record["energy"]
    reports.append(OracleReport.compare("energy_drift", float(np.max(np.abs(e - e[0])) / abs(e[0])), 0.0, 1e-6))

    half = dense_expm_evolve(H, dense_expm_evolve(H, psi0, 0.5 * t_final), 0.5 * t_final)
    reports.append(OracleReport.compare("expm_semigroup", grid.norm(half - ref), 0.0, 1e-10))

    reports.append(OracleReport.compare("ho_grid_ground_energy", ho_grid_ground_energy(1.0), ho_ground_energy(1.0), 1e-3))

    for kind, width, k0, a in [("x2", 1 / math.sqrt(2), 0.0, None), ("p2", 0.5, 2.0, None), ("tail_beyond", 1 / math.sqrt(2), 0.0, 1.5)]:
        reports.append(OracleReport.compare(f"gaussian_{kind}", gaussian_moment(kind, width, k0, a),
                                            _gaussian_quadrature(kind, width, k0, a), 1e-6))

    elapsed = time.perf_counter() - start
    reports.append(OracleReport.compare("runtime_seconds", elapsed, 0.0, 60.0))
    return reports


def _gaussian_quadrature(kind, width, k0, a):
    """Numerical integral of the same Gaussian moments (independent of the closed forms)."""
    from scipy.integrate import quad

    def amp(x):
        return np.exp(-(x**2) / (4 * width**2))

    norm = quad(lambda x: amp(x) ** 2, -np.inf, np.inf)[0]
    if kind == "x2":
        return quad(lambda x: x**2 * amp(x) ** 2, -np.inf, np.inf)[0] / norm
    if kind == "p2":
        # |d/dx (e^{ik0 x} amp)|^2 = (k0^2 + (x/(2 w^2))^2) amp^2
        return quad(lambda x: (k0**2 + (x / (2 * width**2)) ** 2) * amp(x) ** 2, -np.inf, np.inf)[0] / norm
    return 2.0 * quad(lambda x: amp(x) ** 2, a, np.inf)[0] / norm
