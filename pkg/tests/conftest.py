import numpy as np
import pytest

from weakkam.geometry import Configuration
from weakkam.models import cosine_potential, free_model, mechanical_model


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


@pytest.fixture
def cosine_model():
    """N-particle model with V(x) = -(1 - cos 2 pi x), no interaction, c = 0."""
    return mechanical_model(1, external=cosine_potential(1), c=0.0)


def random_configuration(rng, n, d, scale=3.0):
    return Configuration(rng.uniform(-scale, scale, size=(n, d)))


def random_nonpositive_potential(rng, dim, n_modes=2, amp=1.0):
    """Random smooth V <= 0 as a sum of -alpha (1 - cos(2 pi k.x - phi)) wells."""
    modes = [((0,) * dim, 0.0, 0.0)]
    total = 0.0
    for _ in range(n_modes):
        k = tuple(int(v) for v in rng.integers(-2, 3, size=dim))
        if all(c == 0 for c in k):
            k = (1,) + (0,) * (dim - 1)
        alpha = float(rng.uniform(0.1, amp))
        phi = float(rng.uniform(0, 2 * np.pi))
        total += alpha
        modes.append((k, alpha * np.cos(phi), alpha * np.sin(phi)))
    modes[0] = ((0,) * dim, -total, 0.0)
    from weakkam.models import TrigPotential

    return TrigPotential(dim=dim, modes=tuple(modes))


def random_model(rng, dim=1, with_interaction=True, c=None):
    V = random_nonpositive_potential(rng, dim)
    W = random_nonpositive_potential(rng, dim, n_modes=1, amp=0.4) if with_interaction else None
    if c is None:
        c = rng.uniform(-1, 1, size=dim)
    return mechanical_model(dim, external=V, interaction=W, c=c)


__all__ = ["random_configuration", "random_nonpositive_potential", "random_model",
           "free_model"]
