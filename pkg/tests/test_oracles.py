import numpy as np
import pytest

from weakkam.errors import UnsupportedModelError
from weakkam.models import TrigPotential, cosine_potential, zero_potential
from weakkam.oracles import critical_drift, oracle_hbar_1d

from conftest import random_nonpositive_potential


def test_free_drift_closed_form():
    V = zero_potential(1)
    assert oracle_hbar_1d(V, 1.0) == pytest.approx(0.5, abs=1e-9)
    assert oracle_hbar_1d(V, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert oracle_hbar_1d(V, -2.0) == pytest.approx(2.0, abs=1e-9)


def test_cosine_pinned_regime():
    V = cosine_potential(1)
    assert oracle_hbar_1d(V, 0.0) == pytest.approx(0.0, abs=1e-10)
    assert oracle_hbar_1d(V, 1.0) == pytest.approx(0.0, abs=1e-10)  # inside |c| <= c*


def test_cosine_critical_drift_analytic():
    # sqrt(2 (0 - V)) = 2 |sin(pi x)| integrates to 4/pi over a period
    V = cosine_potential(1)
    assert critical_drift(V) == pytest.approx(4.0 / np.pi, abs=1e-6)


def test_supercritical_value_solves_rotation_equation():
    V = cosine_potential(1)
    hbar = oracle_hbar_1d(V, 2.0)
    assert hbar > 0
    xs = (np.arange(200000) + 0.5) / 200000
    integral = np.mean(np.sqrt(2.0 * (hbar - V(xs[:, None]))))
    assert integral == pytest.approx(2.0, abs=1e-6)


def test_monotone_and_convex_in_drift(rng):
    V = random_nonpositive_potential(rng, 1)
    cs = np.linspace(0.0, 3.0, 13)
    vals = np.array([oracle_hbar_1d(V, c) for c in cs])
    assert np.all(np.diff(vals) >= -1e-12)
    second = vals[:-2] - 2 * vals[1:-1] + vals[2:]
    assert np.all(second >= -1e-8)


def test_unsupported_models():
    with pytest.raises(UnsupportedModelError):
        oracle_hbar_1d(zero_potential(2), 1.0)
    V_pos = TrigPotential(dim=1, modes=(((1,), 0.3, 0.0),))
    with pytest.raises(UnsupportedModelError):
        oracle_hbar_1d(V_pos, 1.0)
