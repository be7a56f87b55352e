"""Iterative reconstruction engines built from the two constraint projections.

Five engines share one state record and one stepping interface:

``er``     error reduction: modulus projection, then translation projection.
``dm``     difference map, i.e. ADMM with both constraints as indicators.
``pm``     proximal minimisation: MAP amplitude estimate, then translation
           projection, fixed ``lambda``.
``madmm``  ADMM with the likelihood prox and a shrinking ``lambda`` whenever
           the dual stack stops moving.
``apg``    accelerated proximal gradient with majoriser backtracking.

Every ``step_*`` mutates and returns the state and appends one trace record.
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import estimators as est
from .metrics import TraceRecord, illuminated_mask, rmse
from .model import forward, project_modulus, project_translation

ALGORITHMS = ("er", "dm", "pm", "madmm", "apg")

# (beta, delta) when not given explicitly
_SCHEDULE_DEFAULTS = {"madmm": (0.7, 1e-5), "apg": (0.5, 0.1)}


class NonFiniteStateError(RuntimeError):
    pass


@dataclass
class EngineConfig:
    algorithm: str = "apg"
    noise_model: est.NoiseModel = field(default_factory=est.NoiseModel)
    lambda0: float = 1.0
    beta: Optional[float] = None
    delta: Optional[float] = None
    t_max: int = 100
    inner_iters: int = 1
    momentum: bool = True
    max_backtracks: int = 20
    seed: int = 0
    probe_radius: Optional[float] = None
    probe_update_start: int = 0

    def __post_init__(self):
        self.algorithm = self.algorithm.lower()
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        beta, delta = _SCHEDULE_DEFAULTS.get(self.algorithm, (0.5, 0.1))
        if self.beta is None:
            self.beta = beta
        if self.delta is None:
            self.delta = delta
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        if self.t_max < 0:
            raise ValueError("t_max must be nonnegative")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")
        if self.probe_update_start < 0:
            raise ValueError("probe_update_start must be nonnegative")
        if self.max_backtracks < 0:
            raise ValueError("max_backtracks must be nonnegative")


@dataclass
class ReconstructionState:
    """Engine state.

    ``x`` is the current exit-wave stack. For ``dm`` and ``madmm`` the
    translation-consistent stack lives in ``z`` and the scaled dual in
    ``u``; the difference-map variable is ``w = z + u``.
    """

    probe: np.ndarray
    obj: np.ndarray
    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    x_prev: np.ndarray
    lambda_t: float
    y: np.ndarray
    positions: object
    t: int = 0
    trace: list = field(default_factory=list)
    best_nll: float = float("inf")
    best_probe: Optional[np.ndarray] = None
    best_obj: Optional[np.ndarray] = None

    def consistent_stack(self, algorithm):
        """The stack equal to forward(probe, obj) for the given engine."""
        return self.z if algorithm in ("dm", "madmm") else self.x


def disk_probe(shape, radius, energy):
    """Flat centred disk scaled to total power ``energy``."""
    rows, cols = shape
    yy, xx = np.mgrid[:rows, :cols]
    disk = (np.hypot(yy - rows // 2, xx - cols // 2) <= radius).astype(np.complex128)
    return disk * np.sqrt(energy / disk.sum())


def init_state(data, config, probe_init=None, object_init=None):
    """Initial guesses and stacks for ``data`` (a :class:`~proxpty.dataset.Dataset`).

    Without ``probe_init`` the probe is a disk of radius ``config.probe_radius``
    (default a quarter of the window) whose power matches the mean measured
    pattern energy. Without ``object_init`` the object is uniformly one.
    """
    positions = data.positions
    y = np.asarray(data.amplitudes, dtype=np.float64)
    if probe_init is None:
        radius = config.probe_radius or positions.probe_shape[0] / 4
        probe = disk_probe(positions.probe_shape, radius, float(np.sum(y * y)) / len(positions))
    else:
        probe = np.array(probe_init, dtype=np.complex128)
    if object_init is None:
        obj = np.ones(positions.object_shape, dtype=np.complex128)
    else:
        obj = np.array(object_init, dtype=np.complex128)
    x = forward(probe, obj, positions)
    return ReconstructionState(
        probe=probe, obj=obj, x=x, z=x.copy(), u=np.zeros_like(x), x_prev=x.copy(),
        lambda_t=float(config.lambda0), y=y, positions=positions,
    )


def _finish(state, config, current, **extra):
    value = est.nll(state.y, current, config.noise_model)
    state.t += 1
    state.trace.append(TraceRecord(t=state.t, nll=value, lambda_t=extra.pop("lam", state.lambda_t), **extra))
    if value < state.best_nll:
        state.best_nll = value
        state.best_probe = state.probe.copy()
        state.best_obj = state.obj.copy()
    return state


def _project(state, config, v):
    return project_translation(v, state.probe, state.obj, state.positions, config.inner_iters,
                               update_probe=state.t >= config.probe_update_start)


def step_er(state, config):
    z = project_modulus(state.x, state.y)
    state.x, state.probe, state.obj = _project(state, config, z)
    state.z = z
    return _finish(state, config, state.x)


def step_pm(state, config):
    z = est.map_estimate(state.lambda_t, state.y, state.x, config.noise_model)
    state.x, state.probe, state.obj = _project(state, config, z)
    state.z = z
    return _finish(state, config, state.x)


def step_dm(state, config):
    """One difference-map update of ``w = z + u``, then ``z = Pi_g(w)``."""
    z, u = state.z, state.u
    x = project_modulus(z - u, state.y)
    w = (z + u) + x - z
    state.z, state.probe, state.obj = _project(state, config, w)
    state.u = w - state.z
    state.x = x
    return _finish(state, config, state.z)


def step_madmm(state, config):
    lam = state.lambda_t
    u = state.u
    x = est.map_estimate(lam, state.y, state.z - u, config.noise_model)
    z, state.probe, state.obj = _project(state, config, x + u)
    u_new = u + x - z
    norm = np.linalg.norm(u_new)
    residual = float(np.linalg.norm(u_new - u) / norm) if norm > 0 else 0.0
    state.x, state.z, state.u = x, z, u_new
    if residual < config.delta:
        state.lambda_t = lam * config.beta
    return _finish(state, config, z, lam=lam, dual_residual=residual)


def momentum_weight(t):
    return t / (t + 3.0)


def step_apg(state, config):
    """Proximal gradient step from the extrapolated point with backtracking.

    A candidate is accepted once its likelihood is no larger than the
    quadratic majoriser around the extrapolated point. After
    ``max_backtracks`` rejections the last candidate is accepted anyway and
    the record is flagged ``exhausted``.
    """
    model = config.noise_model
    y = state.y
    omega = momentum_weight(state.t) if config.momentum else 0.0
    w = state.x + omega * (state.x - state.x_prev) if omega else state.x
    nll_w = est.nll(y, w, model)
    grad_w = est.grad_nll(y, w, model)
    lam = state.lambda_t
    backtracks = 0
    exhausted = False
    while True:
        z, probe, obj = _project(state, config, w - lam * grad_w)
        if est.nll(y, z, model) <= est.q_upper_bound(z, w, lam, y, model, nll_w, grad_w):
            break
        if backtracks == config.max_backtracks:
            exhausted = True
            break
        lam *= config.beta
        backtracks += 1
    state.x_prev = state.x
    state.x, state.z = z, z
    state.probe, state.obj = probe, obj
    state.lambda_t = lam if lam >= config.delta else config.lambda0
    return _finish(state, config, z, lam=lam, backtracks=backtracks, exhausted=exhausted)


STEPS = {"er": step_er, "dm": step_dm, "pm": step_pm, "madmm": step_madmm, "apg": step_apg}


def run(data, config, probe_init=None, object_init=None, ground_truth=None,
        rmse_mask=None, callback=None):
    """Run ``config.t_max`` iterations of the configured engine.

    With ``ground_truth`` (the true object) every trace record carries the
    RMSE over ``rmse_mask``, by default the pixels illuminated by the true
    probe (or covered by any window if the dataset has no true probe).
    Returns ``(state, trace)``.
    """
    state = init_state(data, config, probe_init, object_init)
    step = STEPS[config.algorithm]
    if ground_truth is not None and rmse_mask is None:
        rmse_mask = default_mask(data)
    start = time.perf_counter()
    for _ in range(config.t_max):
        step(state, config)
        if not (np.all(np.isfinite(state.probe)) and np.all(np.isfinite(state.obj))):
            raise NonFiniteStateError(
                f"{config.algorithm}: non-finite probe/object at iteration {state.t}"
            )
        rec = state.trace[-1]
        rec.wall_time = time.perf_counter() - start
        if ground_truth is not None:
            rec.rmse = rmse(ground_truth, state.obj, rmse_mask)
        if callback is not None:
            callback(state)
    return state, state.trace


def default_mask(data):
    if data.truth_probe is not None:
        return illuminated_mask(data.truth_probe, data.positions)
    return data.positions.coverage()
