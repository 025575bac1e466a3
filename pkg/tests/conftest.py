from pathlib import Path

import numpy as np
import pytest

from mpvae.model import Hyper, init_params

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def jitter_biases(params, rng, scale=0.3):
    """Random biases keep rectifier pre-activations off exact zeros."""
    for mlp in (params.psi, params.phi, params.theta):
        for b in mlp.biases:
            b[:] = rng.standard_normal(b.shape) * scale
    return params


@pytest.fixture
def tiny_model(rng):
    hyper = Hyper(latent_dim=2, hidden=(6, 5), dropout=0.0, m_train=4, sparse_labels=True)
    params = init_params(3, 2, hyper, rng)
    params.cov.B = rng.standard_normal((2, 2)) * 0.5
    return jitter_biases(params, rng)


def record(number, title, passed, detail=""):
    """Queue one acceptance line for the end-of-run summary, then return ``passed``."""
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"[{status}] criterion {number}: {title}" + (f" ({detail})" if detail else ""))
    ACCEPTANCE_LINES.sort(key=lambda s: int(s.split("criterion ")[1].split(":")[0]))
    return passed
