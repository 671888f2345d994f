import numpy as np
import pytest

from weakkam.audit import audit_assumptions
from weakkam.errors import InvalidInputError
from weakkam.models import TrigPotential, cosine_potential, free_model, mechanical_model


def test_free_model_is_clean():
    report = audit_assumptions(free_model(1), n_probes=500, radius=2.0, seed=1)
    assert report.gamma_lower == 0.5
    assert report.K_L_upper == 0.0
    assert report.ok


def test_cosine_model_constants_and_probes():
    model = mechanical_model(1, external=cosine_potential(1))
    report = audit_assumptions(model, n_probes=2000, radius=2.0, seed=2)
    assert report.gamma_lower == 0.5
    # sup |V''| = 4 pi^2 for the unit cosine well; coefficient sum gives
    # (2 pi)^2 * (1) from the k=1 mode with |a| = 1
    assert report.K_L_upper == pytest.approx(4 * np.pi**2)
    assert report.K_L_upper >= 4 * np.pi**2 - 1e-12
    assert report.ok


def test_positive_potential_violates_iii():
    V_pos = TrigPotential(dim=1, modes=(((1,), 0.5, 0.0),))
    model = mechanical_model(1, external=V_pos, require_nonpositive=False)
    report = audit_assumptions(model, n_probes=500, radius=1.0, seed=3)
    assert any(v.assumption == "iii" for v in report.violations)
    assert all(v.margin < 0 for v in report.violations)


def test_interacting_model_clean():
    model = mechanical_model(
        1, external=cosine_potential(1), interaction=cosine_potential(1, depth=0.5)
    )
    report = audit_assumptions(model, n_probes=2000, radius=3.0, seed=4, n_particles=5)
    assert report.ok
    assert report.K_L_upper == pytest.approx(4 * np.pi**2 * 1.25)


def test_n_probes_validation():
    with pytest.raises(InvalidInputError):
        audit_assumptions(free_model(1), n_probes=0, radius=1.0, seed=0)
