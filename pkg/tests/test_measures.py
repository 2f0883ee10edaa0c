import json

import numpy as np
import pytest

from mdelab.errors import (
    DimensionMismatch,
    EmptyMeasure,
    FiberCountMismatch,
    MassMismatch,
    NegativeWeight,
)
from mdelab.measures import (
    AffineMap,
    FiberedMeasure,
    dirac,
    disintegrate,
    fiber_product,
    load_measure,
    make_measure,
    measure_from_arrays,
    measure_from_document,
    measure_to_document,
    mixture,
    pushforward,
    save_measure,
)


def test_duplicate_atoms_merge():
    m = make_measure([(0, 0.5), (0, 0.5)])
    assert m.atoms() == [((0.0,), 1.0)]


def test_valid_atoms_unchanged():
    m = make_measure([(0, 0.5), (1, 0.5)])
    assert m.atoms() == [((0.0,), 0.5), ((1.0,), 0.5)]


def test_mass_mismatch():
    with pytest.raises(MassMismatch):
        make_measure([(0, 0.3), (1, 0.8)])


def test_validation_errors():
    with pytest.raises(NegativeWeight):
        make_measure([(0, -0.5), (1, 1.5)])
    with pytest.raises(EmptyMeasure):
        make_measure([])
    with pytest.raises(ValueError):
        make_measure([(np.nan, 1.0)])


def test_signed_zero_merges():
    m = make_measure([(-0.0, 0.5), (0.0, 0.5)])
    assert m.size == 1


def test_atoms_sorted_lexicographically():
    m = make_measure([((1, 0), 0.25), ((0, 5), 0.25), ((0, -1), 0.5)])
    assert [p for p, _ in m.atoms()] == [(0.0, -1.0), (0.0, 5.0), (1.0, 0.0)]


def test_tiny_atoms_pruned_and_renormalized():
    m = measure_from_arrays([[0.0], [1.0]], [1.0 - 1e-17, 1e-17])
    assert m.size == 1 and m.weights[0] == 1.0


def test_pushforward_examples():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(5, 2))
    m = measure_from_arrays(pts, np.full(5, 0.2))
    assert pushforward(m, lambda x: x) == m
    assert pushforward(dirac(0.0), lambda x: x + 1) == dirac(1.0)
    sym = make_measure([(-1, 0.5), (1, 0.5)])
    assert pushforward(sym, lambda x: x**2) == dirac(1.0)


def test_pushforward_dimension_check():
    with pytest.raises(DimensionMismatch):
        pushforward(dirac([0.0, 0.0]), AffineMap(np.eye(3)))
    out = pushforward(dirac([1.0, 2.0]), AffineMap([[1.0, 1.0]], [0.5]))
    assert out == dirac(3.5)


def test_pushforward_linear_in_mass():
    rng = np.random.default_rng(1)
    fn = AffineMap(rng.normal(size=(2, 2)), rng.normal(size=2))
    for _ in range(20):
        m1 = measure_from_arrays(rng.normal(size=(3, 2)), np.full(3, 1 / 3))
        m2 = measure_from_arrays(rng.normal(size=(4, 2)), np.full(4, 0.25))
        alpha = rng.random()
        lhs = pushforward(mixture([m1, m2], [alpha, 1 - alpha]), fn)
        rhs = mixture([pushforward(m1, fn), pushforward(m2, fn)], [alpha, 1 - alpha])
        assert lhs.allclose(rhs, atol=1e-12)


def test_disintegrate_examples():
    j = make_measure([((0, 7), 1.0)])
    f = disintegrate(j, 1)
    assert f.base == dirac(0.0) and f.fibers[0] == dirac(7.0)

    j = make_measure([((0, 2), 0.5), ((0, 3), 0.5)])
    f = disintegrate(j, 1)
    assert f.base == dirac(0.0) and f.fibers[0] == make_measure([(2, 0.5), (3, 0.5)])

    j = make_measure([((0, 2), 0.25), ((1, 3), 0.75)])
    f = disintegrate(j, 1)
    assert f.base == make_measure([(0, 0.25), (1, 0.75)])
    assert f.fibers[0] == dirac(2.0) and f.fibers[1] == dirac(3.0)


def test_fiber_product_examples():
    v = 0.3
    assert fiber_product(dirac(0.0), [dirac(v)]).flatten() == dirac([0.0, v])
    base = make_measure([(0, 0.5), (1, 0.5)])
    flat = fiber_product(base, [dirac(v), dirac(v)]).flatten()
    assert flat == make_measure([((0, v), 0.5), ((1, v), 0.5)])
    fib = make_measure([(2, 0.5), (5, 0.5)])
    fm = fiber_product(dirac(0.0), [fib])
    assert fm.flatten() == make_measure([((0, 2), 0.5), ((0, 5), 0.5)])
    assert disintegrate(fm.flatten(), 1) == fm


def test_fibered_validation():
    with pytest.raises(FiberCountMismatch):
        fiber_product(make_measure([(0, 0.5), (1, 0.5)]), [dirac(0.0)])
    with pytest.raises(ValueError):
        FiberedMeasure(dirac(0.0), (dirac(0.0),), "acceleration")
    with pytest.raises(DimensionMismatch):
        fiber_product(make_measure([(0, 0.5), (1, 0.5)]), [dirac(0.0), dirac([0.0, 1.0])])


def test_round_trips_random():
    rng = np.random.default_rng(2)
    for _ in range(50):
        k, n, m = rng.integers(1, 6), rng.integers(1, 3), rng.integers(1, 3)
        # reuse base points so several atoms share a head
        heads = np.round(rng.normal(size=(k, n)), 1)
        pts = np.hstack([heads[rng.integers(0, k, size=8)], rng.normal(size=(8, m))])
        joint = measure_from_arrays(pts, rng.dirichlet(np.ones(8)))
        fm = disintegrate(joint, n)
        assert abs(fm.base.mass - 1) < 1e-12
        assert fm.flatten().allclose(joint, atol=1e-12)
        assert disintegrate(fm.flatten(), n).base.allclose(fm.base, atol=1e-12)
        # first marginal of the flattened joint is the base
        marg = pushforward(fm.flatten(), lambda p: p[:, :n])
        assert marg.allclose(fm.base, atol=1e-12)


def test_document_round_trip(tmp_path):
    m = make_measure([((0.1, -2.5), 0.3), ((1 / 3, 0.0), 0.7)])
    assert measure_from_document(json.loads(json.dumps(measure_to_document(m)))) == m
    save_measure(m, tmp_path / "m.json")
    assert load_measure(tmp_path / "m.json") == m
    with pytest.raises(DimensionMismatch):
        measure_from_document({"dim": 2, "atoms": [[0.0, 1.0]]})
    with pytest.raises(ValueError):
        measure_from_document({"atoms": []})


def test_radius_and_integrate():
    m = make_measure([((3, 4), 0.5), ((0, 1), 0.5)])
    assert m.radius() == 5.0
    assert m.integrate(lambda p: p[:, 0]) == 1.5
