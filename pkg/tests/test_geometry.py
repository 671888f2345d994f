import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weakkam.errors import InvalidInputError
from weakkam.geometry import (
    Configuration,
    IntegerShift,
    Permutation,
    dist_weak,
    dist_weak_bruteforce,
    empirical_norm,
    is_equivalent,
    load_configuration,
    save_configuration,
    torus_sq_dist,
    wrap,
)

from conftest import random_configuration


def test_wrap_examples():
    assert np.allclose(wrap(Configuration([[0.25]])).positions, [[0.25]])
    assert np.allclose(wrap(Configuration([[1.75]])).positions, [[0.75]])
    assert np.allclose(wrap(Configuration([[-0.3, 2.0]])).positions, [[0.7, 0.0]])


def test_wrap_is_integer_shift():
    cfg = Configuration([[1.75, -0.3], [5.0, 0.25]])
    w = wrap(cfg)
    assert np.all((w.positions >= 0) & (w.positions < 1))
    diff = cfg.positions - w.positions
    assert np.allclose(diff, np.round(diff))


def test_configuration_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        Configuration([[np.nan]])
    with pytest.raises(InvalidInputError):
        Configuration([[np.inf, 0.0]])


def test_torus_sq_dist_examples():
    assert torus_sq_dist([0.1], [0.1]) == 0.0
    assert torus_sq_dist([0.9], [0.1]) == pytest.approx(0.04, abs=1e-15)
    assert torus_sq_dist([0.0, 0.5], [0.5, 0.0]) == pytest.approx(0.5, abs=1e-15)


def test_torus_sq_dist_range_and_tie():
    # value is capped at d/4; the half-period tie keeps the distance exact
    assert torus_sq_dist([0.0], [0.5]) == pytest.approx(0.25)
    assert torus_sq_dist([0.3, 0.8], [0.8, 0.3]) == pytest.approx(0.5)


def test_dist_weak_identity_and_quotient(rng):
    a = random_configuration(rng, 5, 2)
    assert dist_weak(a, a) == 0.0
    perm = Permutation(rng.permutation(5))
    shift = IntegerShift(rng.integers(-4, 5, size=(5, 2)))
    b = a.permuted(perm).shifted(shift)
    assert dist_weak(a, b) <= 1e-12


def test_dist_weak_frozen_two_particle_case():
    # brute force over both relabelings and nearest lifts gives 0.05
    a = Configuration([[0.0], [0.5]])
    b = Configuration([[0.45], [0.95]])
    assert dist_weak(a, b) == pytest.approx(0.05, abs=1e-12)


def test_dist_weak_shape_mismatch():
    with pytest.raises(InvalidInputError):
        dist_weak(Configuration([[0.0]]), Configuration([[0.0], [0.5]]))
    with pytest.raises(InvalidInputError):
        dist_weak(Configuration([[0.0]]), Configuration([[0.0, 0.0]]))


def test_dist_weak_matches_bruteforce(rng):
    for n in (2, 3, 4, 5, 6):
        for _ in range(8):
            a = random_configuration(rng, n, 2)
            b = random_configuration(rng, n, 2)
            assert dist_weak(a, b) == pytest.approx(dist_weak_bruteforce(a, b), abs=1e-12)


def test_dist_weak_symmetry_triangle(rng):
    for _ in range(200):
        n = int(rng.integers(1, 7))
        d = int(rng.integers(1, 4))
        a, b, c = (random_configuration(rng, n, d) for _ in range(3))
        dab, dba = dist_weak(a, b), dist_weak(b, a)
        assert dab == pytest.approx(dba, abs=1e-9)
        assert dab <= dist_weak(a, c) + dist_weak(c, b) + 1e-9


def test_projection_is_one_lipschitz(rng):
    for _ in range(100):
        n, d = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        a = random_configuration(rng, n, d)
        b = random_configuration(rng, n, d)
        assert dist_weak(a, b) <= empirical_norm(a.positions - b.positions) + 1e-12


@settings(max_examples=60, deadline=None)
@given(
    data=st.lists(st.floats(-5, 5), min_size=2, max_size=8),
    shift=st.integers(-3, 3),
)
def test_dist_weak_invariance_property(data, shift):
    pos = np.asarray(data)[:, None]
    a = Configuration(pos)
    b = Configuration(pos[::-1] + shift)
    assert dist_weak(a, b) <= 1e-9


def test_is_equivalent():
    a = Configuration([[0.2], [0.7]])
    assert is_equivalent(a, a, 1e-9)
    assert is_equivalent(a, Configuration([[1.2], [-0.3]]), 1e-9)
    assert not is_equivalent(Configuration([[0.0]]), Configuration([[0.5]]), 1e-9)


def test_permutation_validation():
    with pytest.raises(InvalidInputError):
        Permutation([0, 0, 1])


def test_configuration_csv_roundtrip(tmp_path, rng):
    cfg = random_configuration(rng, 4, 3)
    path = tmp_path / "cfg.csv"
    save_configuration(path, cfg)
    header = path.read_text().splitlines()[0]
    assert header == "x0,x1,x2"
    loaded = load_configuration(path)
    assert np.array_equal(loaded.positions, cfg.positions)
