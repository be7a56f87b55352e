import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

os.environ.setdefault("PROXPTY_DETERMINISTIC", "1")

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_field(rng, shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def exact_problem(seed=0, n=8, size=20, K=9, probe_kind="focused"):
    """Noise-free float64 problem (no float32 storage) for trajectory tests.

    Returns ``(data, probe, obj)`` where ``data`` carries ``positions`` and
    ``amplitudes`` exactly like a Dataset.
    """
    from types import SimpleNamespace

    from proxpty import model, sim

    rng = np.random.default_rng(seed)
    amp, phase = rng.random((size, size)), rng.random((size, size))
    obj = sim.synth_object(amp, phase, 1.0)
    c = (size - n) / (2.0 * np.sqrt(K)) * 0.9
    pos = sim.fermat_positions(c, K, (n, n), (size, size))
    probe = sim.make_probe(probe_kind, n, n / 4) * 30.0
    y = np.abs(model.forward(probe, obj, pos))
    data = SimpleNamespace(positions=pos, amplitudes=y, truth_probe=probe, truth_object=obj)
    return data, probe, obj


def noisy_problem(seed=0, n=8, size=20, K=9, max_counts=1e3):
    data, probe, obj = exact_problem(seed, n, size, K)
    rng = np.random.default_rng(seed + 1)
    data.amplitudes = np.sqrt(rng.poisson(data.amplitudes ** 2 * max_counts / (data.amplitudes ** 2).max()))
    return data, probe, obj
