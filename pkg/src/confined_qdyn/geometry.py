"""Closed plane curves, their tubular neighbourhoods and the normal-bundle metric.

A :class:`Curve` is stored through an analytic parameterisation ``r(theta)``,
``theta in [0, 2*pi)``, together with a high-accuracy arclength table.  All
public evaluators take the arclength ``s`` (periodic with period ``length``).

The unit normal is the tangent rotated by +90 degrees.  For counter-clockwise
curves this is the inward normal and convex curves have positive curvature,
so the tangential metric factor of the tube coordinates ``(s, n)`` is
``a(s, n) = 1 - curvature(s) * n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "CurveKind",
    "Curve",
    "TubeParams",
    "make_curve",
    "tubular_map",
    "distance_to_curve",
    "tube_coordinates",
    "metric_factor",
    "geometric_potential",
]

TWO_PI = 2.0 * np.pi
MIN_SAMPLES = 256

# Gauss-Legendre rule used for every arclength integral
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


class CurveKind(str, Enum):
    circle = "circle"
    ellipse = "ellipse"
    perturbed_circle = "perturbed_circle"


def _derivatives(kind: CurveKind, params: tuple[float, ...], theta):
    """Return r, r', r'' at ``theta`` as arrays of shape (..., 2)."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    if kind is CurveKind.circle:
        (R,) = params
        r = np.stack([R * c, R * s], axis=-1)
        r1 = np.stack([-R * s, R * c], axis=-1)
        r2 = -r
    elif kind is CurveKind.ellipse:
        a, b = params
        r = np.stack([a * c, b * s], axis=-1)
        r1 = np.stack([-a * s, b * c], axis=-1)
        r2 = -r
    else:
        R, amp, mode = params
        rho = R * (1.0 + amp * np.cos(mode * theta))
        rho1 = -R * amp * mode * np.sin(mode * theta)
        rho2 = -R * amp * mode**2 * np.cos(mode * theta)
        radial = np.stack([c, s], axis=-1)
        tang = np.stack([-s, c], axis=-1)
        r = rho[..., None] * radial
        r1 = rho1[..., None] * radial + rho[..., None] * tang
        r2 = rho2[..., None] * radial + 2.0 * rho1[..., None] * tang - rho[..., None] * radial
    return r, r1, r2


@dataclass(frozen=True, eq=False)
class Curve:
    """Arclength-parameterised closed plane curve.

    Build instances with :func:`make_curve`.  Evaluators accept scalars or
    arrays of arclength values and wrap them into ``[0, length)``.
    """

    kind: CurveKind
    params: tuple[float, ...]
    sample_count: int
    length: float = field(init=False)
    _theta_nodes: np.ndarray = field(init=False, repr=False)
    _s_nodes: np.ndarray = field(init=False, repr=False)
    _kappa_hat: np.ndarray = field(init=False, repr=False)
    max_curvature: float = field(init=False)

    def __post_init__(self):
        m = self.sample_count
        theta_nodes = np.linspace(0.0, TWO_PI, m + 1)
        panel = self._panel_integrals(theta_nodes[:-1], theta_nodes[1:])
        s_nodes = np.concatenate([[0.0], np.cumsum(panel)])
        object.__setattr__(self, "_theta_nodes", theta_nodes)
        object.__setattr__(self, "_s_nodes", s_nodes)
        object.__setattr__(self, "length", float(s_nodes[-1]))
        # curvature on a uniform arclength table; derivatives are spectral
        s_uniform = np.arange(m) * self.length / m
        kappa = self._kappa_theta(self.theta_of_s(s_uniform))
        object.__setattr__(self, "_kappa_hat", np.fft.rfft(kappa) / m)
        dense = np.linspace(0.0, TWO_PI, 8 * m, endpoint=False)
        object.__setattr__(self, "max_curvature", float(np.max(np.abs(self._kappa_theta(dense)))))

    # -- arclength machinery -------------------------------------------------
    def _speed(self, theta):
        _, r1, _ = _derivatives(self.kind, self.params, theta)
        return np.hypot(r1[..., 0], r1[..., 1])

    def _panel_integrals(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        nodes = mid[..., None] + half[..., None] * _GL_X
        return half * np.sum(self._speed(nodes) * _GL_W, axis=-1)

    def _s_of_theta(self, theta):
        """Arclength from theta=0, for theta in [0, 2*pi]."""
        dtheta = TWO_PI / self.sample_count
        k = np.clip((theta // dtheta).astype(int), 0, self.sample_count - 1)
        return self._s_nodes[k] + self._panel_integrals(self._theta_nodes[k], theta)

    def theta_of_s(self, s):
        """Curve parameter at arclength ``s`` (Newton on the arclength table)."""
        s = np.mod(np.asarray(s, dtype=float), self.length)
        theta = np.interp(s, self._s_nodes, self._theta_nodes)
        for _ in range(8):
            step = (self._s_of_theta(theta) - s) / self._speed(theta)
            theta = np.clip(theta - step, 0.0, TWO_PI)
            if np.all(np.abs(step) < 1e-15):
                break
        return theta

    def s_of_theta(self, theta):
        return self._s_of_theta(np.mod(np.asarray(theta, dtype=float), TWO_PI))

    def _kappa_theta(self, theta):
        _, r1, r2 = _derivatives(self.kind, self.params, theta)
        cross = r1[..., 0] * r2[..., 1] - r1[..., 1] * r2[..., 0]
        return cross / np.hypot(r1[..., 0], r1[..., 1]) ** 3

    # -- evaluators -----------------------------------------------------------
    def position(self, s):
        r, _, _ = _derivatives(self.kind, self.params, self.theta_of_s(s))
        return r

    def tangent(self, s):
        _, r1, _ = _derivatives(self.kind, self.params, self.theta_of_s(s))
        return r1 / np.hypot(r1[..., 0], r1[..., 1])[..., None]

    def normal(self, s):
        t = self.tangent(s)
        return np.stack([-t[..., 1], t[..., 0]], axis=-1)

    def curvature(self, s):
        return self._kappa_theta(self.theta_of_s(s))

    def curvature_derivative(self, s, order: int = 1):
        """d^order curvature / ds^order by trigonometric interpolation."""
        s = np.asarray(s, dtype=float)
        m = self.sample_count
        k = np.arange(self._kappa_hat.size)
        omega = TWO_PI * k / self.length
        coef = self._kappa_hat * (1j * omega) ** order
        weights = np.full(k.size, 2.0)
        weights[0] = 1.0
        if m % 2 == 0:
            weights[-1] = 1.0
        phase = np.exp(1j * np.multiply.outer(s, omega))
        return np.real(phase @ (weights * coef))


@dataclass(frozen=True)
class TubeParams:
    """Half-width ``delta`` of the tube, cutoff radius ``epsilon`` and the metric clamp."""

    delta: float
    epsilon: float
    a_min: float = 0.5

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"tube delta must be positive, got {self.delta}")
        if not 0 < self.epsilon < self.delta:
            raise ValueError(f"need 0 < epsilon < delta, got epsilon={self.epsilon}, delta={self.delta}")
        if not 0 < self.a_min < 1:
            raise ValueError(f"a_min must lie in (0, 1), got {self.a_min}")

    def check(self, curve: Curve) -> None:
        """Reject tubes on which the tubular map is not injective."""
        if self.delta * curve.max_curvature >= 1.0:
            raise ValueError(
                f"tube half-width delta={self.delta} must be below 1/max|curvature|"
                f" = {1.0 / curve.max_curvature:.6g}"
            )


def make_curve(kind, params, sample_count: int = 1024) -> Curve:
    """Build an arclength-parameterised closed curve.

    Parameters
    ----------
    kind : {"circle", "ellipse", "perturbed_circle"}
    params : sequence of float
        ``[R]`` for a circle, ``[a, b]`` (``a >= b``) for an ellipse and
        ``[R, amplitude, mode]`` for ``R * (1 + amplitude*cos(mode*theta))``.
    sample_count : int
        Size of the internal arclength table, at least 256.
    """
    kind = CurveKind(kind)
    params = tuple(float(p) for p in params)
    if sample_count < MIN_SAMPLES:
        raise ValueError(f"sample_count must be >= {MIN_SAMPLES}, got {sample_count}")
    expected = {CurveKind.circle: 1, CurveKind.ellipse: 2, CurveKind.perturbed_circle: 3}[kind]
    if len(params) != expected:
        raise ValueError(f"{kind.value} takes {expected} parameters, got {len(params)}")
    if kind is CurveKind.circle and not params[0] > 0:
        raise ValueError("circle radius must be positive")
    if kind is CurveKind.ellipse:
        a, b = params
        if not (a > 0 and b > 0):
            raise ValueError("ellipse semi-axes must be positive")
        if a < b:
            raise ValueError("ellipse requires a >= b")
    if kind is CurveKind.perturbed_circle:
        R, amp, mode = params
        if not R > 0:
            raise ValueError("perturbed_circle radius must be positive")
        if not 0 <= amp < 1:
            # amp >= 1 lets the radius reach zero: the curve self-intersects
            raise ValueError("perturbed_circle amplitude must lie in [0, 1)")
        if mode != int(mode) or mode < 1:
            raise ValueError("perturbed_circle mode must be a positive integer")
    return Curve(kind, params, int(sample_count))


def tubular_map(curve: Curve, s, n):
    """Point ``position(s) + n * normal(s)`` of the plane."""
    n = np.asarray(n, dtype=float)
    return curve.position(s) + n[..., None] * curve.normal(s)


def _golden_section(f, lo, hi, tol=1e-13, max_iter=200):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo.copy(), hi.copy()
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if np.max(b - a) < tol:
            break
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - invphi * (b - a)
        new_d = a + invphi * (b - a)
        # reuse one interior evaluation per branch
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        fc_next = np.where(left, np.nan, fd)
        fd_next = np.where(left, fc, np.nan)
        need_c = np.isnan(fc_next)
        need_d = np.isnan(fd_next)
        if need_c.any():
            fc_next[need_c] = f(c_next, need_c)
        if need_d.any():
            fd_next[need_d] = f(d_next, need_d)
        c, d, fc, fd = c_next, d_next, fc_next, fd_next
    return 0.5 * (a + b)


def distance_to_curve(curve: Curve, x, chunk: int = 2048):
    """Distance from ``x`` to the curve and the arclength of the nearest point.

    A coarse scan over the arclength table brackets the nearest point, which
    is then refined by golden-section search on the curve parameter.  Ties
    are resolved towards the smallest arclength.

    Parameters
    ----------
    x : array_like, shape (2,) or (N, 2)

    Returns
    -------
    d, s_star : float or ndarray
    """
    pts = np.asarray(x, dtype=float)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    m = curve.sample_count
    s_table = np.arange(m) * curve.length / m
    theta_table = curve.theta_of_s(s_table)
    table = curve.position(s_table)

    d_out = np.empty(len(pts))
    s_out = np.empty(len(pts))
    for start in range(0, len(pts), chunk):
        block = pts[start:start + chunk]
        dist = np.hypot(block[:, None, 0] - table[None, :, 0], block[:, None, 1] - table[None, :, 1])
        nearest = dist.min(axis=1)
        # first table entry within rounding of the minimum: ties go to the smallest s
        k = np.argmax(dist <= nearest[:, None] * (1.0 + 1e-12), axis=1)
        d_coarse = dist[np.arange(len(block)), k]

        lo = np.where(k > 0, theta_table[k - 1], theta_table[-1] - TWO_PI)
        hi = np.where(k < m - 1, theta_table[(k + 1) % m], TWO_PI)

        def f(theta, mask=None, block=block):
            p = block if mask is None else block[mask]
            r, _, _ = _derivatives(curve.kind, curve.params, theta if mask is None else theta[mask])
            return np.hypot(p[:, 0] - r[:, 0], p[:, 1] - r[:, 1])

        theta_star = _golden_section(f, lo, hi)
        # the distance is flat at its minimum; polish with Newton on (r - x).r' = 0
        for _ in range(4):
            r, r1, r2 = _derivatives(curve.kind, curve.params, theta_star)
            off = r - block
            g = np.einsum("ij,ij->i", off, r1)
            dg = np.einsum("ij,ij->i", r1, r1) + np.einsum("ij,ij->i", off, r2)
            step = np.where(dg > 0, g / np.where(dg > 0, dg, 1.0), 0.0)
            theta_star = np.clip(theta_star - step, lo, hi)
        d_fine = f(theta_star)
        s_fine = np.mod(curve.s_of_theta(np.mod(theta_star, TWO_PI)), curve.length)
        # a distance that is flat across the whole bracket is a tie (e.g. the
        # centre of a circle): keep the table point, which has the smallest s
        flat_tol = 1e-12 * np.maximum(1.0, d_coarse)
        flat = (np.abs(f(lo) - d_coarse) < flat_tol) & (np.abs(f(hi) - d_coarse) < flat_tol)
        keep = flat | (d_fine > d_coarse)
        d_out[start:start + chunk] = np.where(keep, d_coarse, d_fine)
        s_out[start:start + chunk] = np.where(keep, s_table[k], s_fine)
    if scalar:
        return float(d_out[0]), float(s_out[0])
    return d_out, s_out


def tube_coordinates(curve: Curve, x):
    """Return ``(d, s_star, n)`` with ``n`` the signed normal coordinate of ``x``."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    d, s_star = distance_to_curve(curve, pts)
    offset = pts - curve.position(s_star)
    n = np.einsum("ij,ij->i", offset, curve.normal(s_star))
    return d, s_star, n


def metric_factor(curve: Curve, s, n, a_min: float = 0.5):
    """Tangential metric factor ``max(1 - curvature(s) * n, a_min)``."""
    return np.maximum(1.0 - curve.curvature(s) * np.asarray(n, dtype=float), a_min)


def geometric_potential(kappa, dkappa, d2kappa, n, a):
    """Potential produced by conjugating ``-Laplacian/2`` with ``a**(1/2)``.

    With ``a = 1 - kappa*n`` the flattened tube Laplacian reads
    ``-1/2 d_s a^-2 d_s - 1/2 d_n^2 + V_geom`` with

        V_geom = -kappa^2/(8 a^2) - n kappa''/(4 a^3) - 5 n^2 kappa'^2/(8 a^4).

    ``a`` is passed in so the clamped metric factor can be used off the tube.
    """
    return (
        -(kappa**2) / (8.0 * a**2)
        - n * d2kappa / (4.0 * a**3)
        - 5.0 * n**2 * dkappa**2 / (8.0 * a**4)
    )
