import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from twospeed.dissipation import (asymmetric_scalar, eval_R1, from_config, gauge_of_ball,
                                  gauge_of_ellipsoid, gauge_of_polytope, ramp, ramp_prime,
                                  regularize, stability_slack, weighted_l1)
from twospeed.potentials import ConfigurationError

HEX = [[np.cos(a), np.sin(a)] for a in np.arange(6) * np.pi / 3]
POTENTIALS = {
    "l1": weighted_l1([1.0, 2.0]),
    "l1_scalar": weighted_l1([0.7]),
    "asym": asymmetric_scalar(2.0, 1.0),
    "ball": gauge_of_ball(1.5, 2),
    "ellipsoid": gauge_of_ellipsoid([[2.0, 0.5], [0.5, 1.0]]),
    "square": gauge_of_polytope([[1, 1], [1, -1], [-1, 1], [-1, -1]]),
    "hexagon": gauge_of_polytope(HEX),
    "triangle": gauge_of_polytope([[2.0, 0.0], [-1.0, 1.0], [-1.0, -1.0]]),
}
NAMES = sorted(POTENTIALS)


def _samples(m, n=1000, seed=0, scale=10.0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, m)) * rng.uniform(0.0, scale, size=(n, 1))


def test_values_examples():
    assert eval_R1(weighted_l1([1, 1]), np.array([1.0, -2.0])) == pytest.approx(3.0)
    a = asymmetric_scalar(2.0, 1.0)
    assert eval_R1(a, np.array([1.0])) == pytest.approx(2.0)
    assert eval_R1(a, np.array([-1.0])) == pytest.approx(1.0)
    assert eval_R1(gauge_of_ball(1.0, 2), np.array([3.0, 4.0])) == pytest.approx(5.0)


def test_polytope_gauge_of_square_is_max_norm():
    sq = POTENTIALS["square"]
    z = _samples(2, 200)
    assert np.allclose(sq.value(z), np.abs(z).max(axis=1))


def test_slack_examples():
    l1 = weighted_l1([1, 1])
    assert stability_slack(l1, np.array([0.5, -1.0])) <= 0
    assert stability_slack(l1, np.array([1.2, 0.0])) == pytest.approx(0.2)
    assert stability_slack(l1, np.zeros(2)) < 0


def test_gauge_requires_interior_origin():
    with pytest.raises(ConfigurationError):
        gauge_of_polytope([[1.0, 0.0], [2.0, 1.0], [2.0, -1.0]])
    with pytest.raises(ConfigurationError):
        gauge_of_ellipsoid([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ConfigurationError):
        gauge_of_ball(0.0)
    with pytest.raises(ConfigurationError):
        from_config({"kind": "friction"})


def test_from_config_kinds():
    assert from_config({"kind": "weighted_l1", "alpha": [1, 2]}).m == 2
    assert from_config({"kind": "asymmetric_scalar", "alpha": 2, "beta": 1}).interval == (-1, 2)
    assert from_config({"kind": "gauge", "set": "polytope", "vertices": HEX}).m == 2


@pytest.mark.parametrize("name", NAMES)
def test_homogeneity_subadditivity_and_growth(name):
    p = POTENTIALS[name]
    rng = np.random.default_rng(1)
    z = _samples(p.m, 1000)
    w = _samples(p.m, 1000, seed=2)
    a = rng.uniform(0.0, 10.0, size=1000)
    Rz = p.value(z)
    assert np.all(np.abs(p.value(a[:, None] * z) - a * Rz) <= 1e-12 * (1 + np.abs(a * Rz)))
    assert np.all(p.value(z + w) <= p.value(z) + p.value(w) + 1e-12)
    nz = np.linalg.norm(z, axis=1)
    assert np.all(p.c1 * nz <= Rz + 1e-12)
    assert np.all(Rz <= p.c2 * nz + 1e-12)
    assert np.all(Rz[nz > 0] > 0)


@pytest.mark.parametrize("name", NAMES)
def test_stability_duality(name):
    p = POTENTIALS[name]
    rng = np.random.default_rng(3)
    sig = rng.uniform(-2.5, 2.5, size=(200, p.m))
    members = sig[np.array([stability_slack(p, s) <= 0 for s in sig])]
    assert len(members) > 0
    z = _samples(p.m, 200, seed=4)
    assert np.all(members @ z.T <= p.value(z)[None, :] + 1e-10)
    assert stability_slack(p, np.zeros(p.m)) <= 0


@pytest.mark.parametrize("name", ["ball", "ellipsoid", "hexagon"])
def test_gauge_slack_sign_matches_membership(name):
    p = POTENTIALS[name]
    rng = np.random.default_rng(5)
    sig = rng.uniform(-2.0, 2.0, size=(60, p.m))
    for s in sig:
        slack = stability_slack(p, s)
        if abs(slack) > 1e-6:
            assert (slack <= 0) == bool(p.contains(s))


def test_stability_set_symmetry_of_l1():
    p = weighted_l1([1.0, 2.0])
    s = np.array([0.7, -1.9])
    assert stability_slack(p, s) == pytest.approx(stability_slack(p, -s))
    assert stability_slack(p, s) == pytest.approx(stability_slack(p, np.array([-0.7, -1.9])))


def test_ramp_bounds():
    s = np.linspace(0, 3, 3001)
    for d in (0.5, 0.1):
        phi = ramp(s, d)
        assert np.all(np.maximum(s - 2 * d, 0) <= phi + 1e-15)
        assert np.all(phi <= np.maximum(s - d, 0) + 1e-15)
        dp = ramp_prime(s, d)
        assert np.all((0 <= dp) & (dp <= 1))
        assert np.all(np.diff(dp) >= -1e-15)


@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("delta", [0.1, 0.01])
def test_regularization_displays(name, delta):
    p = POTENTIALS[name]
    R = regularize(p, delta)
    z = _samples(p.m, 1000, seed=6)
    nz = np.linalg.norm(z, axis=1)
    v = R.value(z)
    assert np.all(np.maximum(p.c1 * nz - 2 * delta, 0.0) <= v + 1e-12)
    assert np.all(v <= p.c2 * nz + 1e-12)
    defect = np.abs(np.sum(R.gradient(z) * z, axis=1) - v)
    assert np.all(defect <= 2 * delta + 1e-12)
    assert np.all(np.abs(v - p.value(z)) <= 2 * delta + 1e-12)
    assert np.all(np.linalg.norm(R.gradient(z), axis=1) <= p.c2 + 1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_regularization_smooth_at_origin(name):
    p = POTENTIALS[name]
    R = regularize(p, 0.05)
    zero = np.zeros(p.m)
    assert R.value(zero) == 0.0
    assert np.allclose(R.gradient(zero), 0.0)
    z = _samples(p.m, 100, seed=7, scale=0.3)
    h = 1e-6
    for c in range(p.m):
        e = np.zeros(p.m)
        e[c] = h
        fd = (R.value(z + e) - R.value(z - e)) / (2 * h)
        assert np.allclose(fd, R.gradient(z)[:, c], atol=1e-6)
        fdg = (R.gradient(z + e) - R.gradient(z - e)) / (2 * h)
        assert np.allclose(fdg, R.hessian(z)[:, :, c], atol=1e-3 * (1 + np.abs(R.hessian(z)).max()))


@pytest.mark.parametrize("name", NAMES)
def test_regularization_convex_on_segments(name):
    p = POTENTIALS[name]
    R = regularize(p, 0.1)
    a, b = _samples(p.m, 300, seed=8, scale=1.0), _samples(p.m, 300, seed=9, scale=1.0)
    for th in (0.25, 0.5, 0.75):
        mid = R.value(th * a + (1 - th) * b)
        assert np.all(mid <= th * R.value(a) + (1 - th) * R.value(b) + 1e-12)


def test_regularization_converges_in_delta():
    p = POTENTIALS["l1"]
    z = _samples(2, 500, seed=10)
    errs = [np.abs(regularize(p, d).value(z) - p.value(z)).max() for d in (0.2, 0.1, 0.05)]
    assert errs[0] > errs[1] > errs[2]


def test_regularize_rejects_nonpositive_delta():
    with pytest.raises(ValueError):
        regularize(weighted_l1([1.0]), 0.0)


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=200, deadline=None)
@given(name=st.sampled_from(NAMES), data=st.data())
def test_property_sublinear(name, data):
    p = POTENTIALS[name]
    z = data.draw(arrays(float, p.m, elements=finite))
    w = data.draw(arrays(float, p.m, elements=finite))
    a = data.draw(st.floats(0.0, 10.0))
    Rz = float(p.value(z))
    assert abs(float(p.value(a * z)) - a * Rz) <= 1e-12 * (1 + abs(a * Rz))
    assert float(p.value(z + w)) <= Rz + float(p.value(w)) + 1e-9 * (1 + Rz)


@settings(max_examples=200, deadline=None)
@given(name=st.sampled_from(NAMES), delta=st.floats(1e-3, 1.0), data=st.data())
def test_property_regularized_bounds(name, delta, data):
    p = POTENTIALS[name]
    z = data.draw(arrays(float, p.m, elements=st.floats(-50, 50)))
    R = regularize(p, delta)
    v = float(R.value(z))
    nz = float(np.linalg.norm(z))
    tol = 1e-12 * (1 + nz)
    assert max(p.c1 * nz - 2 * delta, 0.0) <= v + tol
    assert v <= p.c2 * nz + tol
    assert abs(float(R.gradient(z) @ z) - v) <= 2 * delta + tol
