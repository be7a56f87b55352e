"""Noise models: negative log-likelihoods, Wirtinger gradients, MAP estimates.

Two models are supported. ``GAUSSIAN`` treats the measured amplitude as
Gaussian, ``POISSON`` treats the measured intensity as Poisson. All functions
operate entry-wise on arrays of any shape (single fields or position stacks)
and reduce to scalars with plain ``np.sum`` in C order.

The proximal convention throughout is ``argmin_x lam*L(x) + ||x - v||^2``.
"""

from dataclasses import dataclass

import numpy as np

from .model import phase_factor

GAUSSIAN = "gaussian"
POISSON = "poisson"

DEFAULT_EPSILON = 1e-8


@dataclass(frozen=True)
class NoiseModel:
    kind: str = POISSON
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, POISSON):
            raise ValueError(f"unknown noise model {self.kind!r}")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")

    @classmethod
    def parse(cls, name, epsilon=DEFAULT_EPSILON):
        key = name.strip().lower()
        aliases = {"g": GAUSSIAN, "gaussian": GAUSSIAN, "p": POISSON, "poisson": POISSON}
        if key not in aliases:
            raise ValueError(f"unknown noise model {name!r}")
        return cls(aliases[key], epsilon)


def _check(y, x):
    if np.shape(y) != np.shape(x):
        raise ValueError(f"shape mismatch: amplitudes {np.shape(y)} vs wavefields {np.shape(x)}")


def _abs2(x):
    return x.real ** 2 + x.imag ** 2


def nll(y, x, model):
    """Negative log-likelihood of wavefields ``x`` given measured amplitudes ``y``.

    Gaussian: sum (y - |x|)^2. Poisson: sum |x|^2 - (y^2 + eps) ln(|x|^2 + eps),
    the additive data-only constant dropped, so the value can be negative.
    """
    _check(y, x)
    y = np.asarray(y, dtype=np.float64)
    if model.kind == GAUSSIAN:
        return float(np.sum((y - np.abs(x)) ** 2))
    eps = model.epsilon
    i = _abs2(x)
    return float(np.sum(i - (y * y + eps) * np.log(i + eps)))


def grad_nll(y, x, model):
    """Wirtinger gradient dL/dx* so that dL = 2 Re <grad, dx>."""
    _check(y, x)
    y = np.asarray(y, dtype=np.float64)
    if model.kind == GAUSSIAN:
        return x - y * phase_factor(x)
    eps = model.epsilon
    if eps <= 0:
        raise ValueError("Poisson gradient needs epsilon > 0")
    return x - x * ((y * y + eps) / (_abs2(x) + eps))


def _poisson_modulus(lam, y, mag, eps, newton_steps=4):
    """Positive root of (1+lam) r^3 - |v| r^2 + (eps - lam y^2) r - |v| eps.

    That cubic is the stationarity condition of the per-pixel Poisson prox.
    At eps = 0 its root is the closed form below; for eps > 0 a few Newton
    steps from there converge to machine precision.
    """
    r = (mag + np.sqrt(mag * mag + 4.0 * lam * (1.0 + lam) * y * y)) / (2.0 * (1.0 + lam))
    if eps == 0:
        return r
    a = 1.0 + lam
    c1 = eps - lam * y * y
    for _ in range(newton_steps):
        f = ((a * r - mag) * r + c1) * r - mag * eps
        df = (3.0 * a * r - 2.0 * mag) * r + c1
        step = np.divide(f, df, out=np.zeros_like(r), where=df > 0)
        r = np.maximum(r - step, 0.0)
    return r


def map_estimate(lam, y, v, model):
    """Minimiser of lam*L(x) + |x - v|^2 per entry.

    The phase of ``v`` is kept (zero where ``v`` is zero); only the modulus
    moves toward the measurement. ``lam = 0`` returns ``v``. The Poisson
    modulus uses the same ``epsilon`` as :func:`nll`.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    _check(y, v)
    y = np.asarray(y, dtype=np.float64)
    if np.any(y < 0):
        raise ValueError("negative amplitudes")
    v = np.asarray(v, dtype=np.complex128)
    if lam == 0:
        return v.copy()
    mag = np.abs(v)
    if model.kind == GAUSSIAN:
        r = (lam * y + mag) / (1.0 + lam)
    else:
        r = _poisson_modulus(lam, y, mag, model.epsilon)
    return r * phase_factor(v)


def q_upper_bound(z, x, lam, y, model, nll_x=None, grad_x=None):
    """Quadratic majoriser of the likelihood around ``x`` evaluated at ``z``.

    ``nll_x`` and ``grad_x`` may be passed to reuse values already computed
    at ``x``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    _check(z, x)
    if nll_x is None:
        nll_x = nll(y, x, model)
    if grad_x is None:
        grad_x = grad_nll(y, x, model)
    d = z - x
    return nll_x + 2.0 * float(np.sum((np.conj(grad_x) * d).real)) + float(np.sum(_abs2(d))) / lam
