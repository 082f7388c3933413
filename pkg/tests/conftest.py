import numpy as np
import pytest

from bohmlab import DomainSpec, HermiteSuperposition1D, PhysicalParams


@pytest.fixture(scope="session")
def ho_state():
    """The oscillator ground + second-excited superposition (nodes at
    (0, (n+1/2)pi) and (+-1, n pi))."""
    return HermiteSuperposition1D.counterexample()


@pytest.fixture(scope="session")
def line1d():
    return DomainSpec(d=1)


@pytest.fixture(scope="session")
def params1d():
    return PhysicalParams(masses=(1.0,), nu=1)


def fd_hamiltonian_residual(model, q, t, potential, h=1e-4):
    """|i hbar dpsi/dt - H psi| with the Laplacian taken by centered
    differences of the model's own gradient field."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    d = q.size
    s = model.evaluate(q, t)
    hbar = model.params.hbar
    masses = model.params.mass_per_coordinate
    lap_term = 0.0
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        gp = np.asarray(model.evaluate(q + e, t).grad)[k]
        gm = np.asarray(model.evaluate(q - e, t).grad)[k]
        lap_term += (hbar**2 / (2.0 * masses[k])) * (gp - gm) / (2.0 * h)
    Hpsi = -lap_term + potential(q) * s.psi
    return abs(1j * hbar * s.dpsi_dt - Hpsi), abs(Hpsi)
