import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from confined_qdyn.diagnostics import (
    TrajectoryRecord,
    cutoff_mass,
    difference_norm,
    evolution_overlap,
    fit_rate,
    moment_diagnostics,
    q_value,
    tail_mass_f3,
    thin_gradient_norm,
)
from confined_qdyn.geometry import TubeParams
from confined_qdyn.operators import (
    Region,
    build_tangential_observable,
    fullspace_grid,
    normal_bundle_grid,
    oscillator_1d,
)
from confined_qdyn.oracles import gaussian_moment
from confined_qdyn.propagation import WaveFunction, make_standard_state

TUBE = TubeParams(0.5, 0.3)


@pytest.fixture(scope="module")
def box():
    return fullspace_grid(2.5, 119)


@pytest.fixture(scope="module")
def nb_grid(circle):
    return normal_bundle_grid(circle, 128, 127, 8.0)


@pytest.fixture(scope="module")
def fs_state(box, circle, profile):
    return make_standard_state(box, circle, profile, 4.0, "fullspace", tube=TUBE)


@pytest.fixture(scope="module")
def nb_state(nb_grid, circle, profile):
    return make_standard_state(nb_grid, circle, profile, 4.0)


def transverse_ground(grid, omega=1.0):
    _, y = grid.mesh()
    return WaveFunction(np.exp(-0.5 * omega * y**2), grid).normalized()


def test_record_rejects_ragged_series():
    with pytest.raises(ValueError):
        TrajectoryRecord(np.arange(3), {"a": np.ones(2)})
    rec = TrajectoryRecord(np.arange(3), {"a": np.array([1.0, -4.0, 2.0])})
    assert rec.sup("a") == 4.0


def test_cutoff_mass_whole_and_disjoint(box, circle, fs_state):
    assert cutoff_mass(fs_state, Region("d_ge", 0.0), circle) == pytest.approx(fs_state.norm(), abs=1e-14)
    assert cutoff_mass(fs_state, Region("d_ge", TUBE.delta), circle) == 0.0


@settings(max_examples=30, deadline=None)
@given(eps=st.floats(0.01, 1.5))
def test_cutoff_masses_partition_the_norm(box, circle, fs_state, eps):
    region = Region("d_ge", eps)
    m1 = cutoff_mass(fs_state, region, circle)
    m2 = cutoff_mass(fs_state, region.complement(), circle)
    assert m1 <= fs_state.norm() + 1e-15
    assert m1**2 + m2**2 == pytest.approx(fs_state.norm() ** 2, abs=1e-10)


def test_overlap_examples(nb_grid, nb_state):
    assert evolution_overlap(nb_state, nb_state) == pytest.approx(1.0, abs=1e-12)
    assert difference_norm(nb_state, nb_state) == 0.0
    # ground and first excited oscillator modes differ in parity
    _, vecs = np.linalg.eigh(oscillator_1d(nb_grid.axis2, 1.0).toarray())
    s, _ = nb_grid.mesh()
    tang = np.exp(-((s - 3.0) ** 2))
    a = WaveFunction(tang * vecs[:, 0][None, :], nb_grid).normalized()
    b = WaveFunction(tang * vecs[:, 1][None, :], nb_grid).normalized()
    assert abs(evolution_overlap(a, b)) < 1e-10
    assert difference_norm(a, b) == pytest.approx(np.sqrt(2.0), abs=1e-10)


def test_overlap_rejects_grid_mismatch(nb_state, circle, profile):
    other = make_standard_state(normal_bundle_grid(circle, 64, 127, 8.0), circle, profile, 4.0)
    with pytest.raises(ValueError):
        evolution_overlap(nb_state, other)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_overlap_cauchy_schwarz(nb_grid, seed):
    rng = np.random.default_rng(seed)
    a = WaveFunction(rng.normal(size=nb_grid.shape) + 1j * rng.normal(size=nb_grid.shape), nb_grid)
    b = WaveFunction(rng.normal(size=nb_grid.shape), nb_grid)
    assert abs(evolution_overlap(a, b)) <= a.norm() * b.norm() * (1 + 1e-12)


def test_transverse_moments(nb_grid):
    psi = transverse_ground(nb_grid)
    m = moment_diagnostics(psi, 4.0, ["y2", "n2", "dy_norm2"])
    # forward differences at hy = 1/8 shift dy_norm2 by about 0.2%
    assert m["y2"] == pytest.approx(gaussian_moment("x2", 1 / np.sqrt(2)), rel=5e-3)
    assert m["n2"] == pytest.approx(0.03125, rel=5e-3)
    assert m["dy_norm2"] == pytest.approx(0.5, rel=5e-3)


def test_tangential_moment_of_standard_state(nb_state):
    m = moment_diagnostics(nb_state, 4.0, ["dx_norm2_scaled"])
    assert m["dx_norm2_scaled"] == pytest.approx(gaussian_moment("p2", 0.5, 2.0) / 16, rel=0.01)
    assert m["dx_norm2_scaled"] == pytest.approx(5 / 16, rel=0.01)


def test_fullspace_moments(box, circle, profile):
    # delta = 0.9 keeps the cut out of the Gaussian so the free moments apply:
    # lambda^2 <W> ~ omega/4 for the transverse Gaussian; grad^2 ~ lambda^2 omega/2 + p^2
    wide = make_standard_state(box, circle, profile, 4.0, "fullspace", tube=TubeParams(0.9, 0.3))
    m = moment_diagnostics(wide, 4.0, profile=profile, curve=circle)
    assert 16 * m["w_expectation"] == pytest.approx(0.25, rel=0.1)
    assert m["grad_norm2"] == pytest.approx(8.0 + 5.0, rel=0.15)


def test_moments_reject_wrong_grid(box, nb_state, fs_state):
    with pytest.raises(ValueError):
        moment_diagnostics(nb_state, 4.0, ["grad_norm2"])
    with pytest.raises(ValueError):
        moment_diagnostics(fs_state, 4.0, ["n2"])
    with pytest.raises(ValueError):
        moment_diagnostics(fs_state, 4.0, ["w_expectation"])


def test_q_value_examples(nb_grid, circle, profile, wide_tube):
    Q = build_tangential_observable(nb_grid, circle, wide_tube, 4.0)
    psi = make_standard_state(nb_grid, circle, profile, 4.0)
    assert q_value(psi, Q) == pytest.approx(gaussian_moment("p2", 0.5, 2.0) + 1.0, rel=0.01)
    # wide, momentum-free packets approach the lower bound 1
    wide = make_standard_state(nb_grid, circle, profile, 4.0, k0=0.0, w_s=1.0)
    assert 1.0 <= q_value(wide, Q) <= 1.0 + 1 / (4 * 1.0**2) + 1e-3
    other = build_tangential_observable(normal_bundle_grid(circle, 64, 127, 8.0), circle, wide_tube, 4.0)
    with pytest.raises(ValueError):
        q_value(psi, other)


def test_f3_tail_of_transverse_ground_state(nb_grid):
    psi = transverse_ground(nb_grid)
    tail = tail_mass_f3(psi, 16.0, 0.5)
    # |y| > 4 for the density exp(-y^2)/sqrt(pi)
    reference = 2 * quad(lambda y: np.exp(-(y**2)) / np.sqrt(np.pi), 4.0, np.inf)[0]
    assert tail < 1e-4
    # the sharp threshold lands on a grid node, so the Riemann sum overshoots
    assert reference <= tail <= 2 * reference
    assert gaussian_moment("tail_beyond", 1 / np.sqrt(2), a=4.0) == pytest.approx(reference, rel=1e-10)


def test_f3_tail_limits(nb_grid):
    psi = transverse_ground(nb_grid)
    # s_exp -> 0 leaves |y| < lambda with lambda beyond the grid edge
    assert tail_mass_f3(psi, 16.0, 1e-9) == 0.0
    _, y = nb_grid.mesh()
    outside = WaveFunction(np.where(np.abs(y) > 4.0, 1.0, 0.0), nb_grid).normalized()
    assert tail_mass_f3(outside, 16.0, 0.5) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ValueError):
        tail_mass_f3(psi, 16.0, 1.0)


def test_thin_gradient_norm(box, circle, fs_state):
    inner_half = thin_gradient_norm(fs_state, circle, 0.0, 0.3)
    outer_half = thin_gradient_norm(fs_state, circle, 0.3, 0.5)
    whole = thin_gradient_norm(fs_state, circle, 0.0, 10.0)
    assert outer_half < inner_half < whole
    with pytest.raises(ValueError):
        thin_gradient_norm(fs_state, circle, 0.5, 0.3)


@pytest.mark.parametrize(
    "points, slope",
    [
        ([(2, 0.2), (4, 0.1), (8, 0.05)], -1.0),
        ([(2, 0.3), (4, 0.3), (8, 0.3)], 0.0),
        ([(2, 0.4), (4, 0.336), (8, 0.283)], -0.25),
    ],
)
def test_fit_rate_examples(points, slope):
    fit = fit_rate(points)
    assert fit.slope == pytest.approx(slope, abs=1e-2)
    assert 0.0 <= fit.r_squared <= 1.0
    if slope != -0.25:
        assert fit.r_squared == pytest.approx(1.0)


def test_fit_rate_errors_and_noise_floor():
    with pytest.raises(ValueError):
        fit_rate([(2, 0.1), (4, 0.05)])
    with pytest.raises(ValueError):
        fit_rate([(2, 0.1), (2, 0.05), (8, 0.01)])
    with pytest.raises(ValueError):
        fit_rate([(2, 0.1), (4, 0.0), (8, 0.01)])
    fit = fit_rate([(2, 0.1), (4, 0.05), (8, 1e-15)], noise_floor=1e-12)
    assert fit.slope == pytest.approx(-1.0)
    assert fit.excluded == ((8.0, 1e-15),)
    empty = fit_rate([(2, 0.0), (4, 0.0), (8, 0.1)], noise_floor=1e-12)
    assert np.isnan(empty.slope)


@settings(max_examples=50, deadline=None)
@given(
    rate=st.floats(-3, 1),
    scale=st.floats(1e-6, 10.0),
    lams=st.lists(st.floats(1.0, 100.0), min_size=3, max_size=6, unique=True),
)
def test_fit_rate_recovers_power_laws(rate, scale, lams):
    lams = sorted(lams)
    if np.min(np.diff(np.log(lams))) < 1e-3:
        return
    fit = fit_rate([(l, scale * l**rate) for l in lams])
    assert fit.slope == pytest.approx(rate, abs=1e-8)
    assert 0.0 <= fit.r_squared <= 1.0
