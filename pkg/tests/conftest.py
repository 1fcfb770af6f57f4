import numpy as np
import pytest

import jacobi_spectra as js

ACCEPT_SEED = 42
LADDER_SIZES = (250, 500, 1000, 2000)


def two_atom(b: complex = 0.5 + 0.3j, a: complex = 1.0, c: complex = 1.0):
    """Symmetric two-atom law: the diagonal entry takes values +/-b."""
    atoms = (js.CoefficientTriple(a, b, c), js.CoefficientTriple(a, -b, c))
    return js.DiscreteAtoms(atoms, (0.5, 0.5))


@pytest.fixture(scope="session")
def two_atom_dist():
    return two_atom()


@pytest.fixture(scope="session")
def warm_kernels(two_atom_dist):
    """Compile every jitted kernel once so timed tests measure algorithm
    runtime, not JIT latency."""
    seq = js.sample_sequence(two_atom_dist, 16, seed=0)
    js.propagate(seq, 0.1 + 0.2j)
    js.solution_pair(seq, 0.1 + 0.2j)
    js.lyapunov_pair(two_atom_dist, 0.1j, 64, 1, seed=0)
    J = js.build_jacobi(seq)
    js.eigenvalues(J)
    js.singular_values(J)
    js.char_poly_logabs(J, np.array([5.0 + 0.0j]))
    js.logabs_det(J)
    P = js.build_periodic(seq)
    js.eigenvalues(P)
    js.logabs_det(P)
    return True


@pytest.fixture(scope="session")
def ladder_samples(two_atom_dist):
    """Spectra of one sequence per size, shared by the measure-level
    acceptance checks (the n=2000 solve dominates the suite's runtime)."""
    out = {}
    for n in LADDER_SIZES:
        seq = js.sample_sequence(two_atom_dist, n, seed=ACCEPT_SEED)
        out[n] = js.eigenvalues(js.build_jacobi(seq))
    return out
