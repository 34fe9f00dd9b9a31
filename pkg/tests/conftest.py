import numpy as np
import pytest

from uhdspike import PopulationSpectrum

ACCEPTANCE = {}


def record(criterion, passed, detail=""):
    """Called from the acceptance tests; summarized at the end of the run."""
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_spectrum(rng, p=1000, max_atoms=4, lo=0.5, hi=5.0):
    k = int(rng.integers(1, max_atoms + 1))
    vals = rng.uniform(lo, hi, k)
    mult = rng.multinomial(p - k, np.ones(k) / k) + 1
    return PopulationSpectrum(vals, mult)


@pytest.fixture
def two_atom():
    return PopulationSpectrum.from_atoms([(2.0, 500), (1.0, 500)])
