import cmath

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_field
from proxpty import metrics
from proxpty.model import ScanPositions


def test_fit_ambiguity_examples(rng):
    o = random_field(rng, (5, 5))
    assert metrics.fit_ambiguity(o, o) == pytest.approx(1.0, abs=1e-15)
    assert metrics.fit_ambiguity(o, o / 2j) == pytest.approx(2j, abs=1e-14)
    with pytest.raises(ValueError):
        metrics.fit_ambiguity(o, np.zeros_like(o))


def test_fit_ambiguity_matches_real_least_squares(rng):
    o_hat = random_field(rng, (7, 6))
    o = random_field(rng, (7, 6))
    # ||o_hat - (ar + i ai) o||^2 as a real 2-parameter least-squares problem
    A = np.column_stack([np.concatenate([o.real.ravel(), o.imag.ravel()]),
                         np.concatenate([-o.imag.ravel(), o.real.ravel()])])
    b = np.concatenate([o_hat.real.ravel(), o_hat.imag.ravel()])
    (ar, ai), *_ = np.linalg.lstsq(A, b, rcond=None)
    assert abs(metrics.fit_ambiguity(o_hat, o) - complex(ar, ai)) <= 1e-10


def test_rmse_examples(rng):
    o = random_field(rng, (4, 4))
    assert metrics.rmse(o, o) == pytest.approx(0, abs=1e-15)
    assert metrics.rmse(o, 3 * cmath.exp(1j * cmath.pi / 7) * o) == pytest.approx(0, abs=1e-15)
    a = np.array([[1.0, 0.0]])
    b = np.array([[0.0, 1.0]])
    assert metrics.fit_ambiguity(a, b) == 0
    assert metrics.rmse(a, b) == 1.0
    with pytest.raises(ValueError):
        metrics.rmse(np.zeros((2, 2)), o[:2, :2])


@given(st.integers(0, 2**32 - 1))
def test_rmse_scalar_invariance_and_optimality(seed):
    rng = np.random.default_rng(seed)
    o_hat = random_field(rng, (6, 6))
    o = o_hat + random_field(rng, (6, 6), 0.3)
    c = complex(*rng.standard_normal(2)) or 1.0
    assert abs(metrics.rmse(o_hat, c * o) - metrics.rmse(o_hat, o)) <= 1e-12
    a = metrics.fit_ambiguity(o_hat, o)
    best = np.linalg.norm(o_hat - a * o)
    for _ in range(5):
        other = a + complex(*rng.standard_normal(2)) * 0.1
        assert np.linalg.norm(o_hat - other * o) >= best
    assert metrics.rmse(o_hat, o) >= 0


def test_rmse_mask(rng):
    o_hat = random_field(rng, (4, 4))
    o = o_hat.copy()
    o[0, 0] += 5
    mask = np.ones((4, 4), bool)
    mask[0, 0] = False
    assert metrics.rmse(o_hat, o, mask) == pytest.approx(0, abs=1e-15)
    assert metrics.rmse(o_hat, o) > 0.1


def test_illuminated_mask_threshold():
    pos = ScanPositions((2, 2), (4, 4), [[0, 0], [1, 1]])
    probe = np.array([[1.0, 0.1], [0.1, 0.1]])
    mask = metrics.illuminated_mask(probe, pos)
    assert mask[0, 0] and mask[1, 1] and not mask[0, 1] and not mask[3, 3]
    assert metrics.illuminated_mask(probe, pos, threshold=0.0).sum() == 16
