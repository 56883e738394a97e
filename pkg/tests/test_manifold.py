import numpy as np
import pytest

from asyncpgo import manifold as mf


def make_point(rng, tags):
    blocks = []
    for tag in tags:
        if tag[0] == "rotation":
            blocks.append(mf.random_rotation(rng, tag[1]))
        elif tag[0] == "stiefel":
            blocks.append(mf.random_stiefel(rng, tag[2], tag[1]))
        else:
            blocks.append(rng.standard_normal(tag[1]))
    return mf.ManifoldPoint(tuple(tags), tuple(blocks))


def random_tangent(rng, x):
    ambient = [rng.standard_normal(b.shape) for b in x.blocks]
    return mf.project_tangent(x, ambient)


TAGS = (("stiefel", 3, 5), ("rotation", 3), ("euclidean", 4), ("stiefel", 2, 2))


def test_inner_zero_vector(rng):
    x = make_point(rng, TAGS)
    z = mf.zero_tangent(x)
    assert mf.inner(z, z) == 0.0


def test_inner_symmetry(rng):
    x = make_point(rng, TAGS)
    a, b = random_tangent(rng, x), random_tangent(rng, x)
    assert mf.inner(a, b) == pytest.approx(mf.inner(b, a), abs=1e-14)


def test_inner_hand_value():
    # single 2x2 euclidean block: <I, diag(2,3)> = 5
    x = mf.ManifoldPoint((("euclidean", (2, 2)),), (np.zeros((2, 2)),))
    a = mf.TangentVector(x, (np.eye(2),))
    b = mf.TangentVector(x, (np.diag([2.0, 3.0]),))
    assert mf.inner(a, b) == pytest.approx(5.0, abs=1e-15)


def test_inner_shape_mismatch(rng):
    x = make_point(rng, TAGS)
    a = random_tangent(rng, x)
    y = make_point(rng, (("stiefel", 3, 5),))
    b = random_tangent(rng, y)
    with pytest.raises(mf.ManifoldError):
        mf.inner(a, b)


def test_project_symmetric_at_identity():
    y = np.eye(3)
    v = np.array([[1.0, 2.0, 0.5], [2.0, -1.0, 0.25], [0.5, 0.25, 3.0]])  # symmetric
    out = mf.stiefel_project_tangent(y, v)
    assert np.allclose(out, 0.0, atol=1e-14)


def test_project_skew_at_identity():
    y = np.eye(3)
    v = np.array([[0.0, 1.0, -2.0], [-1.0, 0.0, 0.5], [2.0, -0.5, 0.0]])
    out = mf.stiefel_project_tangent(y, v)
    assert np.allclose(out, v, atol=1e-14)


def test_projection_idempotent(rng):
    for _ in range(20):
        x = make_point(rng, TAGS)
        ambient = [rng.standard_normal(b.shape) for b in x.blocks]
        once = mf.project_tangent(x, ambient)
        twice = mf.project_tangent(x, once.blocks)
        for a, b in zip(once.blocks, twice.blocks):
            assert np.max(np.abs(a - b)) <= 1e-12


def test_projection_orthogonal_and_nonexpansive(rng):
    # <P(v), xi> == <v, xi> for tangent xi, and ||P(v)|| <= ||v||
    for _ in range(20):
        x = make_point(rng, TAGS)
        ambient = [rng.standard_normal(b.shape) for b in x.blocks]
        pv = mf.project_tangent(x, ambient)
        xi = random_tangent(rng, x)
        lhs = mf.inner(pv, xi)
        rhs = sum(float(np.sum(a * b)) for a, b in zip(ambient, xi.blocks))
        assert lhs == pytest.approx(rhs, abs=1e-10)
        norm_ambient = np.sqrt(sum(float(np.sum(a * a)) for a in ambient))
        assert mf.norm(pv) <= norm_ambient + 1e-12


def test_projection_rejects_invalid_point(rng):
    x = make_point(rng, (("stiefel", 3, 5),))
    bad = mf.ManifoldPoint.__new__(mf.ManifoldPoint)
    object.__setattr__(bad, "tags", x.tags)
    object.__setattr__(bad, "blocks", (x.blocks[0] * 2.0,))
    with pytest.raises(mf.ManifoldError):
        mf.project_tangent(bad, [np.zeros((5, 3))])


def test_retract_zero_is_identity(rng):
    x = make_point(rng, TAGS)
    out = mf.retract(x, mf.zero_tangent(x))
    for a, b in zip(out.blocks, x.blocks):
        assert np.max(np.abs(a - b)) <= 1e-14


def test_retract_euclidean_is_addition():
    x = mf.ManifoldPoint((("euclidean", 3),), (np.zeros(3),))
    eta = mf.TangentVector(x, (np.array([1.0, 2.0, 3.0]),))
    out = mf.retract(x, eta)
    assert np.array_equal(out.blocks[0], np.array([1.0, 2.0, 3.0]))


def test_retract_orthonormality(rng):
    for _ in range(50):
        y = mf.random_stiefel(rng, 5, 3)
        xi = mf.stiefel_project_tangent(y, rng.standard_normal((5, 3)))
        out = mf.stiefel_retract(y, xi)
        assert mf.orthonormality_defect(out) <= 1e-12


def test_retract_first_order(rng):
    # ||Retr(x, t eta) - (x + t eta)|| = O(t^2)
    y = mf.random_stiefel(rng, 5, 3)
    xi = mf.stiefel_project_tangent(y, rng.standard_normal((5, 3)))
    errs = []
    for t in (1e-2, 1e-3, 1e-4):
        out = mf.stiefel_retract(y, t * xi)
        errs.append(np.linalg.norm(out - (y + t * xi)))
    assert errs[1] <= errs[0] * 1.5e-2
    assert errs[2] <= errs[1] * 1.5e-2


def test_retract_derivative_matches_tangent(rng):
    # central finite differences of t -> Retr(x, t eta) at t = 0
    t = 1e-5
    for _ in range(10):
        x = make_point(rng, TAGS)
        eta = random_tangent(rng, x)
        plus = mf.retract(x, mf.TangentVector(x, tuple(t * b for b in eta.blocks)))
        minus = mf.retract(x, mf.TangentVector(x, tuple(-t * b for b in eta.blocks)))
        num = sum(float(np.sum(((a - b) / (2 * t) - e) ** 2)) for a, b, e in zip(plus.blocks, minus.blocks, eta.blocks))
        rel = np.sqrt(num) / max(mf.norm(eta), 1e-300)
        assert rel <= 1e-6


def test_rotation_retract_stays_special(rng):
    r = mf.random_rotation(rng, 3)
    xi = mf.stiefel_project_tangent(r, 0.3 * rng.standard_normal((3, 3)))
    out = mf.rotation_retract(r, xi)
    assert np.linalg.det(out) > 0
    assert mf.orthonormality_defect(out) <= 1e-12


def test_displacement_bound_zero_tangent(rng):
    x = make_point(rng, TAGS)
    assert mf.retraction_displacement_bound(x, mf.zero_tangent(x)) == 0.0


def test_displacement_bound_euclidean_is_one(rng):
    x = mf.ManifoldPoint((("euclidean", 4),), (rng.standard_normal(4),))
    eta = mf.TangentVector(x, (rng.standard_normal(4),))
    assert mf.retraction_displacement_bound(x, eta) == pytest.approx(1.0, abs=1e-12)


def test_displacement_bound_monte_carlo(rng):
    # 1000 samples on Stiefel(3,5): the measured ratio stays within alpha = 1
    worst = 0.0
    for _ in range(1000):
        y = mf.random_stiefel(rng, 5, 3)
        xi = mf.stiefel_project_tangent(y, rng.standard_normal((5, 3)))
        xi *= rng.uniform(0.01, 2.0) / max(np.linalg.norm(xi), 1e-300)
        x = mf.ManifoldPoint((("stiefel", 3, 5),), (y,))
        eta = mf.TangentVector(x, (xi,))
        worst = max(worst, mf.retraction_displacement_bound(x, eta))
    assert worst <= 1.0 + 1e-12


def test_reorthonormalize_trigger(rng):
    y = mf.random_stiefel(rng, 5, 3)
    drifted = y + 1e-6 * rng.standard_normal((5, 3))
    fixed = mf.reorthonormalize(drifted)
    assert mf.orthonormality_defect(fixed) <= 1e-12
    clean = mf.reorthonormalize(y)
    assert clean is y  # below the trigger: unchanged object


def test_invalid_tags():
    with pytest.raises(mf.ManifoldError):
        mf.ManifoldPoint((("stiefel", 4, 5),), (np.zeros((5, 4)),))
    with pytest.raises(mf.ManifoldError):
        mf.ManifoldPoint((("rotation", 3),), (np.eye(3) * 2,))
