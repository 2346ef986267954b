"""Shared test utilities: finite-difference harness and acceptance reporting."""

import os

import numpy as np
import pytest


def central_fd(f, x, eps=1e-5):
    """Central finite-difference gradient of scalar f at x, shape of x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = f(x)
        flat[i] = keep - eps
        lo = f(x)
        flat[i] = keep
        gf[i] = (hi - lo) / (2.0 * eps)
    return g


def rel_error(analytic, fd):
    """Sup-norm error of analytic vs fd, relative to the fd magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    scale = max(np.abs(fd).max(), 1e-10)
    return float(np.abs(analytic - fd).max() / scale)


@pytest.fixture
def fd_check():
    def check(f, x, analytic, tol, eps=1e-5):
        fd = central_fd(f, x, eps)
        err = rel_error(analytic, fd)
        assert err < tol, f"gradient mismatch: rel error {err:.3e} >= {tol:g}"
        return err
    return check


# -- acceptance criteria reporting ------------------------------------------------

_acceptance_lines = []


def record_criterion(num, ok, detail):
    line = f"ACCEPTANCE CRITERION {num}: {'PASS' if ok else 'FAIL'} ({detail})"
    _acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def artifact_dir(tmp_path_factory):
    """Directory for expensive shared artifacts.

    Set NERFREG_TEST_CACHE to a path to persist trained checkpoints and
    datasets across pytest sessions while iterating.
    """
    cache = os.environ.get("NERFREG_TEST_CACHE")
    if cache:
        os.makedirs(cache, exist_ok=True)
        return cache
    return str(tmp_path_factory.mktemp("artifacts"))
