"""Measured quantities: cutoff norms, overlaps, moments, q(t), tails and rate fits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .operators import OperatorMatrix, Region, forward_difference, region_mask

if TYPE_CHECKING:
    from .geometry import Curve
    from .operators import ConfinementProfile
    from .propagation import WaveFunction

__all__ = [
    "TrajectoryRecord",
    "RateFit",
    "cutoff_mass",
    "evolution_overlap",
    "difference_norm",
    "moment_diagnostics",
    "q_value",
    "tail_mass_f3",
    "thin_gradient_norm",
    "fit_rate",
    "NORMAL_BUNDLE_MOMENTS",
    "FULLSPACE_MOMENTS",
]

NORMAL_BUNDLE_MOMENTS = ("n2", "y2", "dy_norm2", "dx_norm2_scaled")
FULLSPACE_MOMENTS = ("grad_norm2", "w_expectation")


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    series: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for name, values in self.series.items():
            if len(values) != len(self.times):
                raise ValueError(f"series {name!r} has {len(values)} entries, expected {len(self.times)}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.series[name]

    def sup(self, name: str) -> float:
        return float(np.max(np.abs(self.series[name])))

    @property
    def names(self) -> list[str]:
        return list(self.series)


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through ``(log lambda, log err)``."""

    slope: float
    intercept: float
    r_squared: float
    points: tuple[tuple[float, float], ...]
    excluded: tuple[tuple[float, float], ...] = ()

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "points": [list(p) for p in self.points],
            "excluded": [list(p) for p in self.excluded],
        }


def cutoff_mass(psi: "WaveFunction", region: Region, curve: "Curve | None" = None) -> float:
    """``|F_region psi|`` with a sharp cutoff."""
    mask = region_mask(psi.grid, region, curve)
    return psi.grid.norm(mask * psi.values)


def _same_grid(a: "WaveFunction", b: "WaveFunction") -> None:
    if a.grid is not b.grid and (a.grid.spec() != b.grid.spec() or not np.array_equal(a.grid.weights, b.grid.weights)):
        raise ValueError("states live on different grids")


def evolution_overlap(psi_a: "WaveFunction", psi_b: "WaveFunction") -> complex:
    """Weighted inner product ``<psi_a, psi_b>``."""
    _same_grid(psi_a, psi_b)
    return psi_a.grid.inner(psi_a.values, psi_b.values)


def difference_norm(psi_a: "WaveFunction", psi_b: "WaveFunction") -> float:
    """``|psi_a - psi_b|`` from ``2 - 2 Re<psi_a, psi_b>`` (both normalised)."""
    value = 2.0 - 2.0 * evolution_overlap(psi_a, psi_b).real
    return float(np.sqrt(max(value, 0.0)))


def _tangential_derivative_norm2(psi: "WaveFunction") -> float:
    # derivative norms assume a flat grid (unit weight)
    grid = psi.grid
    ds = forward_difference(grid.axis1) @ psi.values
    return float(np.sum(np.abs(ds) ** 2) * grid.cell)


def _normal_derivative_norm2(psi: "WaveFunction") -> float:
    grid = psi.grid
    dy = forward_difference(grid.axis2) @ psi.values.T
    return float(np.sum(np.abs(dy) ** 2) * grid.cell)


def moment_diagnostics(
    psi: "WaveFunction",
    lam: float,
    which: Iterable[str] | None = None,
    profile: "ConfinementProfile | None" = None,
    curve: "Curve | None" = None,
) -> dict[str, float]:
    """Moments bounded uniformly in lambda by the energy estimates.

    On a normal-bundle grid: ``n2 = <(y/lambda)^2>``, ``y2 = <y^2>``,
    ``dy_norm2 = |d_y psi|^2`` and ``dx_norm2_scaled = |d_s psi|^2 / lambda^2``.
    On a full-space grid: ``grad_norm2 = |grad psi|^2`` and
    ``w_expectation = <psi, W psi>`` (needs ``profile`` and ``curve``).
    Requesting a moment the grid does not support raises ``ValueError``.
    """
    grid = psi.grid
    if grid.is_normal_bundle:
        available = NORMAL_BUNDLE_MOMENTS
    elif grid.is_fullspace:
        available = FULLSPACE_MOMENTS
    else:
        raise ValueError("moments need a normal-bundle or full-space grid")
    wanted = tuple(available if which is None else which)
    bad = [w for w in wanted if w not in available]
    if bad:
        raise ValueError(f"moment(s) {bad} undefined on this grid (available: {available})")

    out: dict[str, float] = {}
    dens = grid.weights * np.abs(psi.values) ** 2 * grid.cell
    if grid.is_normal_bundle:
        _, y = grid.mesh()
        if "y2" in wanted or "n2" in wanted:
            y2 = float(np.sum(dens * y**2))
            if "y2" in wanted:
                out["y2"] = y2
            if "n2" in wanted:
                out["n2"] = y2 / lam**2
        if "dy_norm2" in wanted:
            out["dy_norm2"] = _normal_derivative_norm2(psi)
        if "dx_norm2_scaled" in wanted:
            out["dx_norm2_scaled"] = _tangential_derivative_norm2(psi) / lam**2
    else:
        if "grad_norm2" in wanted:
            out["grad_norm2"] = _tangential_derivative_norm2(psi) + _normal_derivative_norm2(psi)
        if "w_expectation" in wanted:
            if profile is None or curve is None:
                raise ValueError("w_expectation needs the confinement profile and the curve")
            d, _, _ = grid.tube_coordinates(curve)
            out["w_expectation"] = float(np.sum(dens * profile.confining_potential(d)))
    return {k: out[k] for k in wanted}


def q_value(psi: "WaveFunction", Qbar: OperatorMatrix) -> float:
    """``<psi, Qbar psi>``, the tangential-energy observable."""
    if Qbar.grid is not psi.grid and Qbar.grid.spec() != psi.grid.spec():
        raise ValueError("Qbar was built on a different grid")
    return Qbar.expectation(psi)


def tail_mass_f3(psi: "WaveFunction", lam: float, s_exp: float = 0.5) -> float:
    """Probability ``|(1 - F3) psi|^2`` outside ``|y| < lambda**(1 - s_exp)``."""
    if not 0 < s_exp < 1:
        raise ValueError(f"s_exp must lie in (0, 1), got {s_exp}")
    inside = region_mask(psi.grid, Region("f3", s_exp, lam))
    return psi.grid.norm((1.0 - inside) * psi.values) ** 2


def thin_gradient_norm(psi: "WaveFunction", curve: "Curve", inner: float, outer: float) -> float:
    """``|F(inner <= d <= outer) grad psi|`` on a full-space grid.

    The gradient uses second-order central differences at the nodes, so the
    sharp annulus cutoff can be applied pointwise.
    """
    grid = psi.grid
    if not grid.is_fullspace:
        raise ValueError("thin_gradient_norm needs a full-space grid")
    if not 0 <= inner < outer:
        raise ValueError(f"need 0 <= inner < outer, got {inner}, {outer}")
    d, _, _ = grid.tube_coordinates(curve)
    mask = (d >= inner) & (d <= outer)
    gx, gy = np.gradient(psi.values, grid.axis1.spacing, grid.axis2.spacing)
    return float(np.sqrt(np.sum(mask * (np.abs(gx) ** 2 + np.abs(gy) ** 2)) * grid.cell))


def fit_rate(points, noise_floor: float | None = None) -> RateFit:
    """Fit ``log err = slope * log lambda + intercept``.

    Parameters
    ----------
    points : sequence of (lambda, err)
        At least three points with strictly increasing lambda.
    noise_floor : float, optional
        When given, points with ``err < noise_floor`` (including zeros) are
        excluded instead of rejected.  With fewer than two points left the
        fit is undefined and NaNs are returned.
    """
    pts = [(float(l), float(e)) for l, e in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    lams = np.array([p[0] for p in pts])
    if np.any(np.diff(lams) <= 0):
        raise ValueError("lambda values must be strictly increasing")
    if noise_floor is None:
        if any(e <= 0 for _, e in pts):
            raise ValueError("errors must be positive; floor them at the noise level first")
        used, excluded = pts, []
    else:
        used = [p for p in pts if p[1] >= noise_floor and p[1] > 0]
        excluded = [p for p in pts if not (p[1] >= noise_floor and p[1] > 0)]
    if len(used) < 2:
        return RateFit(float("nan"), float("nan"), float("nan"), tuple(used), tuple(excluded))
    x = np.log([p[0] for p in used])
    y = np.log([p[1] for p in used])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - float(np.sum(resid**2)) / ss_tot)
    return RateFit(float(slope), float(intercept), r2, tuple(used), tuple(excluded))
