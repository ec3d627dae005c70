import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from confined_qdyn.geometry import (
    TubeParams,
    distance_to_curve,
    geometric_potential,
    make_curve,
    metric_factor,
    tube_coordinates,
    tubular_map,
)

CURVES = [("circle", [1.0]), ("ellipse", [1.5, 1.0]), ("perturbed_circle", [1.0, 0.1, 3])]


@pytest.fixture(scope="module", params=CURVES, ids=[c[0] for c in CURVES])
def curve(request):
    kind, params = request.param
    return make_curve(kind, params, 1024)


def test_circle_length_and_curvature():
    c = make_curve("circle", [1.0], 1024)
    assert c.length == pytest.approx(2 * np.pi, abs=1e-12)
    s = np.linspace(0, c.length, 97)
    np.testing.assert_allclose(c.curvature(s), 1.0, atol=1e-12)
    np.testing.assert_allclose(c.position(0.0), [1.0, 0.0], atol=1e-14)


def test_ellipse_vertex_curvature_matches_finite_difference_frenet():
    c = make_curve("ellipse", [1.5, 1.0], 4096)
    assert c.curvature(0.0) == pytest.approx(1.5, rel=1e-10)
    # independent check: second difference of the position at the vertex
    h = 1e-4
    r_pp = (c.position(h) - 2 * c.position(0.0) + c.position(-h)) / h**2
    assert np.linalg.norm(r_pp) == pytest.approx(1.5, rel=1e-6)


def test_zero_perturbation_reproduces_circle():
    circle = make_curve("circle", [1.0], 1024)
    flat = make_curve("perturbed_circle", [1.0, 0.0, 3], 1024)
    s = np.linspace(0, circle.length, 61)
    assert flat.length == pytest.approx(circle.length, abs=1e-10)
    for name in ("position", "tangent", "normal", "curvature"):
        np.testing.assert_allclose(getattr(flat, name)(s), getattr(circle, name)(s), atol=1e-10)


def test_unit_tangent_and_periodicity(curve):
    s = np.linspace(0, curve.length, 500, endpoint=False)
    np.testing.assert_allclose(np.linalg.norm(curve.tangent(s), axis=-1), 1.0, atol=1e-10)
    np.testing.assert_allclose(curve.position(s + curve.length), curve.position(s), atol=1e-10)


def test_frenet_consistency(curve):
    s = np.linspace(0, curve.length, 200, endpoint=False)
    h = 1e-4
    dt = (curve.tangent(s + h) - curve.tangent(s - h)) / (2 * h)
    np.testing.assert_allclose(dt, curve.curvature(s)[:, None] * curve.normal(s), atol=1e-6)


def test_normal_is_tangent_rotated_and_inward_on_circle():
    c = make_curve("circle", [2.0])
    s = np.linspace(0, c.length, 40)
    t, n = c.tangent(s), c.normal(s)
    np.testing.assert_allclose(n, np.stack([-t[:, 1], t[:, 0]], axis=-1))
    # inward: normal points to the centre
    np.testing.assert_allclose(n, -c.position(s) / 2.0, atol=1e-12)
    np.testing.assert_allclose(c.curvature(s), 0.5, atol=1e-12)


def test_curvature_derivative_matches_finite_difference():
    c = make_curve("ellipse", [1.5, 1.0], 2048)
    s = np.linspace(0.1, c.length - 0.1, 50)
    h = 1e-4
    fd1 = (c.curvature(s + h) - c.curvature(s - h)) / (2 * h)
    fd2 = (c.curvature(s + h) - 2 * c.curvature(s) + c.curvature(s - h)) / h**2
    np.testing.assert_allclose(c.curvature_derivative(s, 1), fd1, atol=1e-6)
    np.testing.assert_allclose(c.curvature_derivative(s, 2), fd2, atol=1e-4)


@pytest.mark.parametrize(
    "kind, params, samples",
    [
        ("circle", [1.0], 100),
        ("circle", [-1.0], 1024),
        ("ellipse", [1.0, 1.5], 1024),
        ("perturbed_circle", [1.0, 1.0, 3], 1024),
        ("perturbed_circle", [1.0, 0.1, 2.5], 1024),
        ("circle", [1.0, 2.0], 1024),
    ],
)
def test_make_curve_rejects_invalid(kind, params, samples):
    with pytest.raises(ValueError):
        make_curve(kind, params, samples)


def test_tube_params_validation(circle):
    with pytest.raises(ValueError):
        TubeParams(0.5, 0.5)
    with pytest.raises(ValueError):
        TubeParams(0.5, 0.3, a_min=1.0)
    with pytest.raises(ValueError):
        TubeParams(1.0, 0.3).check(circle)
    TubeParams(0.9, 0.8).check(circle)


def test_tubular_map_examples(circle):
    np.testing.assert_allclose(tubular_map(circle, 0.0, 0.1), [0.9, 0.0], atol=1e-14)
    np.testing.assert_allclose(tubular_map(circle, 0.0, 0.0), [1.0, 0.0], atol=1e-14)
    e = make_curve("ellipse", [1.5, 1.0], 4096)
    s_minor = e.s_of_theta(np.pi / 2)
    np.testing.assert_allclose(tubular_map(e, s_minor, 0.2), [0.0, 0.8], atol=1e-10)


def test_distance_examples(circle):
    d, s = distance_to_curve(circle, [2.0, 0.0])
    assert d == pytest.approx(1.0, abs=1e-12) and s == pytest.approx(0.0, abs=1e-9)
    d, s = distance_to_curve(circle, [0.0, 0.0])
    assert d == pytest.approx(1.0, abs=1e-12) and s == 0.0
    e = make_curve("ellipse", [1.5, 1.0], 4096)
    d, _ = distance_to_curve(e, [3.0, 0.0])
    assert d == pytest.approx(1.5, abs=1e-10)


def test_distance_agrees_with_dense_sampling(curve):
    rng = np.random.default_rng(1)
    pts = rng.uniform(-2.5, 2.5, size=(40, 2))
    d, _ = distance_to_curve(curve, pts)
    dense = curve.position(np.linspace(0, curve.length, 200_000, endpoint=False))
    brute = np.min(np.linalg.norm(pts[:, None, :] - dense[None], axis=-1), axis=1)
    assert np.all(d <= brute + 1e-12)
    np.testing.assert_allclose(d, brute, atol=1e-8)


def test_round_trip(curve):
    delta = 0.9 / curve.max_curvature
    rng = np.random.default_rng(2)
    s = rng.uniform(0, curve.length, 2000)
    n = rng.uniform(-delta, delta, 2000)
    d, s_star, n_back = tube_coordinates(curve, tubular_map(curve, s, n))
    np.testing.assert_allclose(d, np.abs(n), atol=1e-6)
    gap = np.abs((s_star - s + 0.5 * curve.length) % curve.length - 0.5 * curve.length)
    assert gap.max() < 1e-6
    np.testing.assert_allclose(n_back, n, atol=1e-6)


def test_tubular_map_injective_on_tube(curve):
    delta = 0.9 / curve.max_curvature
    rng = np.random.default_rng(3)
    m = 10_000
    s1, s2 = rng.uniform(0, curve.length, (2, m))
    n1, n2 = rng.uniform(-delta, delta, (2, m))
    # force a share of near-coincident pairs so the check is not vacuous
    s2[: m // 2] = s1[: m // 2] + rng.normal(0, 1e-8, m // 2)
    n2[: m // 2] = n1[: m // 2] + rng.normal(0, 1e-8, m // 2)
    x1, x2 = tubular_map(curve, s1, n1), tubular_map(curve, s2, n2)
    same_image = np.linalg.norm(x1 - x2, axis=-1) < 1e-9
    ds = np.abs((s1 - s2 + 0.5 * curve.length) % curve.length - 0.5 * curve.length)
    same_pre = (ds < 1e-7) & (np.abs(n1 - n2) < 1e-7)
    assert np.all(same_pre[same_image])


def test_metric_factor_examples(circle, ellipse):
    assert metric_factor(circle, 0.0, 0.1) == pytest.approx(0.9)
    assert metric_factor(circle, 0.0, 0.8) == pytest.approx(0.5)
    s = np.linspace(0, ellipse.length, 50)
    np.testing.assert_allclose(metric_factor(ellipse, s, 0.0), 1.0)


@settings(max_examples=60, deadline=None)
@given(s=st.floats(0, 7), n=st.floats(-0.6, 0.6))
def test_metric_factor_is_one_plus_order_n(s, n):
    c = make_curve("ellipse", [1.5, 1.0])
    a = metric_factor(c, s, n)
    assert abs(a - 1.0) <= c.max_curvature * abs(n) + 1e-12


def test_geometric_potential_matches_symbolic_flattening():
    """Conjugate the tube Laplacian by a^(1/2) symbolically and read off the potential."""
    s, n = sympy.symbols("s n", real=True)
    kappa = sympy.Function("kappa")(s)
    f = sympy.Function("f")(s, n)
    a = 1 - kappa * n
    psi = f / sympy.sqrt(a)
    # Laplacian in the tube coordinates: metric a^2 ds^2 + dn^2
    lap = (sympy.diff(sympy.diff(psi, s) / a, s) + sympy.diff(a * sympy.diff(psi, n), n)) / a
    conjugated = sympy.sqrt(a) * (-lap / 2)
    flat = -sympy.diff(sympy.diff(f, s) / a**2, s) / 2 - sympy.diff(f, n, 2) / 2
    v = sympy.simplify((conjugated - flat) / f)

    k, k1, k2 = sympy.symbols("k k1 k2")
    v = v.subs(sympy.Derivative(kappa, (s, 2)), k2).subs(sympy.Derivative(kappa, s), k1).subs(kappa, k)
    fn = sympy.lambdify((k, k1, k2, n), v, "numpy")
    rng = np.random.default_rng(4)
    kk, kk1, kk2 = rng.uniform(-1, 1, (3, 50))
    nn = rng.uniform(-0.4, 0.4, 50)
    expected = fn(kk, kk1, kk2, nn)
    got = geometric_potential(kk, kk1, kk2, nn, 1 - kk * nn)
    np.testing.assert_allclose(got, expected, rtol=1e-10, atol=1e-12)


def test_geometric_potential_on_circle_tends_to_minus_one_eighth(circle):
    n = np.array([0.0, 1e-3, 1e-6])
    v = geometric_potential(1.0, 0.0, 0.0, n, metric_factor(circle, 0.0, n))
    np.testing.assert_allclose(v, -1 / 8, atol=1e-3)
    assert v[0] == pytest.approx(-1 / 8, abs=1e-15)
