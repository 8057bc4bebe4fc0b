"""Supporting runs on the n_c = 1 Hamiltonian beyond the acceptance settings."""

import pytest

from paramtrace.cli import RunSpec, run

BASE = dict(matrix="hamiltonian", nc=1, m=2000, sigma=0.005, n_psi=0, nt=100, reference=True, out=None)


@pytest.mark.slow
def test_periodic_error_stagnates_with_larger_sketch():
    # 80 vectors do not cover the clusters of near-degenerate levels; 160 do
    err = run(RunSpec(**BASE, n_omega=160))["l1_error"]
    assert err <= 1e-5


@pytest.mark.slow
def test_dirichlet_boundary_at_acceptance_settings():
    # without the periodic degeneracies 80 vectors suffice, but the spectrum
    # then has no gap, so the guard has nothing to remove
    on = run(RunSpec(**BASE, n_omega=80, boundary="dirichlet"))["l1_error"]
    assert on <= 1e-4
    off = run(RunSpec(**{**BASE, "sigma": 0.004}, n_omega=80, boundary="dirichlet", guard=False))["l1_error"]
    on4 = run(RunSpec(**{**BASE, "sigma": 0.004}, n_omega=80, boundary="dirichlet"))["l1_error"]
    assert on4 > off / 10
