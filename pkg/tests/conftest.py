import math

import numpy as np
import pytest

from nessent import FermiWindow, SingleImpurity, Transparent
from nessent.symbols import build_toeplitz_correlation

_CRITERIA: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[num])


@pytest.fixture
def criterion():
    """Record and print one PASS/FAIL line per acceptance criterion, then assert."""

    def report(num: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {num:2d}: {detail}"
        _CRITERIA[num] = line
        print(line)
        assert ok, line

    return report


# Reference point used by most large-L comparisons: eps0 = t, k_fr = pi/2, dk = 0.1.
REF_WINDOW = FermiWindow(k_fl=math.pi / 2 + 0.1, k_fr=math.pi / 2)
REF_SCATTERER = SingleImpurity(1.0)


class SpectrumCache:
    """Session-wide cache of Toeplitz correlation spectra (eigh dominates runtime)."""

    def __init__(self):
        self._store = {}

    def get(self, window, scatterer, L):
        key = (window.k_fl, window.k_fr, repr(scatterer), int(L))
        if key not in self._store:
            self._store[key] = build_toeplitz_correlation(window, scatterer, int(L))
        return self._store[key]

    def reference(self, L):
        return self.get(REF_WINDOW, REF_SCATTERER, L)

    def equilibrium(self, L, k0=math.pi / 2):
        return self.get(FermiWindow(k0, k0), Transparent(), L)


@pytest.fixture(scope="session")
def spectra():
    return SpectrumCache()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)
