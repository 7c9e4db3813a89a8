import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from csgan_eeg.dataset import EpochSet
from csgan_eeg.synthetic import make_subject

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.function_scoped_fixture, HealthCheck.too_slow])
settings.load_profile("default")

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_set():
    """4-class, 8-channel, 200-sample set with class-specific covariance."""
    return make_subject(n_trials=40, n_channels=8, n_classes=4, n_samples=200, seed=3)


@pytest.fixture
def set_2b():
    return make_subject(n_trials=30, n_channels=3, n_classes=2, n_samples=1000, seed=5)


def random_spd(rng, n, cond=50.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(rng.uniform(0, np.log(cond), n))
    return (Q * w) @ Q.T


def make_set(x, labels, **kw):
    return EpochSet(epochs=np.asarray(x, dtype=np.float32), labels=labels, **kw)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(RESULTS, key=lambda r: r[0]):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
