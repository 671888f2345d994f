import numpy as np
import pytest
from scipy.optimize import minimize

from weakkam.errors import InvalidInputError
from weakkam.geometry import Configuration, empirical_inner
from weakkam.models import (
    TrigPotential,
    cosine_potential,
    eval_H,
    eval_L,
    eval_Lc,
    free_model,
    grad_H,
    grad_L,
    mechanical_model,
    parse_model_file,
    write_model_file,
    zero_potential,
)

from conftest import random_configuration, random_model


def test_cosine_potential_values():
    V = cosine_potential(1)
    assert V(np.array([0.0])) == pytest.approx(0.0, abs=1e-15)
    assert V(np.array([0.5])) == pytest.approx(-2.0, abs=1e-15)
    assert V.max_on_grid() <= 1e-12


def test_trig_potential_gradient_fd(rng):
    V = TrigPotential(dim=2, modes=(((1, 0), 0.3, -0.2), ((1, -2), -0.5, 0.1)))
    x = rng.uniform(-2, 2, size=(7, 2))
    g = V.grad(x)
    e = 1e-6
    for j in range(2):
        dx = np.zeros(2)
        dx[j] = e
        fd = (V(x + dx) - V(x - dx)) / (2 * e)
        assert np.allclose(g[:, j], fd, atol=1e-7)


def test_eval_L_examples(cosine_model):
    free = free_model(1)
    m = Configuration([[0.3]])
    assert eval_L(free, m, np.zeros((1, 1))) == 0.0

    # coincident particles with W(0) = 0 see only the zero self-interaction
    W = TrigPotential(dim=1, modes=(((0,), -1.0, 0.0), ((1,), 1.0, 0.0)))
    model = mechanical_model(1, interaction=W)
    coincident = Configuration([[0.2], [0.2], [0.2]])
    assert eval_L(model, coincident, np.zeros((3, 1))) == pytest.approx(0.0, abs=1e-14)

    m5 = Configuration([[0.5]])
    assert eval_L(cosine_model, m5, np.zeros((1, 1))) == pytest.approx(2.0, abs=1e-14)


def test_eval_Lc_examples():
    model = free_model(1, c=1.0)
    m = Configuration([[0.1]])
    v = np.array([[-1.0]])
    assert eval_Lc(model, m, v) == pytest.approx(-0.5, abs=1e-15)
    assert eval_Lc(model.with_c(0.0), m, v) == eval_L(model, m, v)

    m4 = Configuration(np.linspace(0, 1, 4, endpoint=False)[:, None])
    v4 = -np.ones((4, 1))
    assert eval_Lc(model, m4, v4) == pytest.approx(-0.5, abs=1e-15)


def test_grad_L_free_and_self_interaction(rng):
    free = free_model(2)
    m = random_configuration(rng, 3, 2)
    v = rng.normal(size=(3, 2))
    dx, dv = grad_L(free, m, v)
    assert np.all(dx == 0)
    assert np.array_equal(dv, v)

    # single particle: interaction gradient cancels against its mirror
    W = TrigPotential(dim=1, modes=(((0,), -0.7, 0.0), ((1,), 0.4, 0.3)))
    model = mechanical_model(1, interaction=W, require_nonpositive=False)
    m1 = Configuration([[0.37]])
    dx1, _ = grad_L(model, m1, np.zeros((1, 1)))
    assert np.allclose(dx1, 0.0, atol=1e-15)


def test_grad_L_matches_finite_differences(rng):
    model = random_model(rng, dim=2)
    n = 4
    pos = rng.uniform(-1, 1, size=(n, 2))
    vel = rng.normal(size=(n, 2))
    m = Configuration(pos)
    dx, dv = grad_L(model, m, vel)
    e = 1e-5
    for i in range(n):
        for j in range(2):
            for which, arr, grad in (("x", pos, dx), ("v", vel, dv)):
                plus, minus = arr.copy(), arr.copy()
                plus[i, j] += e
                minus[i, j] -= e
                if which == "x":
                    fp = eval_L(model, Configuration(plus), vel)
                    fm = eval_L(model, Configuration(minus), vel)
                else:
                    fp = eval_L(model, m, plus)
                    fm = eval_L(model, m, minus)
                fd_euclid = (fp - fm) / (2 * e)
                assert grad[i, j] == pytest.approx(n * fd_euclid, rel=1e-6, abs=1e-7)


def test_eval_H_examples(cosine_model):
    free = free_model(1)
    m = Configuration([[0.4]])
    assert eval_H(free, m, np.zeros((1, 1))) == 0.0
    m5 = Configuration([[0.5]])
    assert eval_H(cosine_model, m5, np.array([[1.0]])) == pytest.approx(-1.5, abs=1e-14)


def test_eval_H_matches_numerical_legendre(rng):
    model = random_model(rng, dim=1)
    n = 3
    m = random_configuration(rng, n, 1)
    p = rng.normal(size=(n, 1))

    def objective(flat):
        v = flat.reshape(n, 1)
        return empirical_inner(p, v) + eval_L(model, m, v)

    res = minimize(objective, np.zeros(n), method="BFGS", options={"gtol": 1e-12})
    assert eval_H(model, m, p) == pytest.approx(-res.fun, abs=1e-6)
    assert np.allclose(res.x.reshape(n, 1), -p, atol=1e-6)


def test_grad_H_duality(rng):
    model = random_model(rng, dim=2)
    m = random_configuration(rng, 4, 2)
    p = rng.normal(size=(4, 2))
    dxH, dpH = grad_H(model, m, p)
    assert np.array_equal(dpH, p)
    dxL, _ = grad_L(model, m, -p)
    assert np.allclose(dxH, -dxL, atol=1e-10)
    assert np.allclose(grad_H(free_model(2), m, p)[0], 0.0)


def test_fenchel_young(rng):
    model = random_model(rng, dim=1)
    for _ in range(50):
        m = random_configuration(rng, 3, 1)
        v = rng.normal(size=(3, 1))
        p = rng.normal(size=(3, 1))
        slack = eval_L(model, m, v) + eval_H(model, m, p) + empirical_inner(p, v)
        assert slack >= -1e-12
        # equality at the dual pair p = -v
        tight = eval_L(model, m, v) + eval_H(model, m, -v) + empirical_inner(-v, v)
        assert abs(tight) <= 1e-12


def test_invariances(rng):
    model = random_model(rng, dim=2)
    m = random_configuration(rng, 5, 2)
    v = rng.normal(size=(5, 2))
    base = eval_L(model, m, v)

    shift = rng.integers(-3, 4, size=(5, 2)).astype(float)
    shifted = eval_L(model, Configuration(m.positions + shift), v)
    assert shifted == pytest.approx(base, abs=1e-12 * (1 + abs(base)))

    perm = rng.permutation(5)
    permuted = eval_L(model, Configuration(m.positions[perm]), v[perm])
    assert permuted == base  # bitwise, via sorted reductions


def test_model_builder_rejects_positive_potential():
    V_pos = TrigPotential(dim=1, modes=(((1,), 1.0, 0.0),))
    with pytest.raises(InvalidInputError):
        mechanical_model(1, external=V_pos)
    model = mechanical_model(1, external=V_pos, require_nonpositive=False)
    assert model.external.max_on_grid() > 0.5


def test_shape_errors(cosine_model):
    m = Configuration([[0.1], [0.2]])
    with pytest.raises(InvalidInputError):
        eval_L(cosine_model, m, np.zeros((3, 1)))
    with pytest.raises(InvalidInputError):
        eval_H(cosine_model, m, np.zeros((2, 2)))


def test_model_file_roundtrip(tmp_path, rng):
    model = random_model(rng, dim=2)
    path = tmp_path / "model.txt"
    write_model_file(path, model)
    loaded = parse_model_file(path)
    assert loaded.dim == model.dim
    assert np.array_equal(loaded.c, model.c)
    assert loaded.external.modes == model.external.modes
    assert loaded.interaction.modes == model.interaction.modes

    m = random_configuration(rng, 3, 2)
    v = rng.normal(size=(3, 2))
    assert eval_Lc(loaded, m, v) == eval_Lc(model, m, v)


def test_zero_potential_is_zero(rng):
    Z = zero_potential(2)
    x = rng.normal(size=(5, 2))
    assert np.all(Z(x) == 0)
    assert np.all(Z.grad(x) == 0)
    assert Z.sup_bound() == 0
