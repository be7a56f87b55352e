"""Reconstruction error with scalar-ambiguity correction, and trace records."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# fraction of the peak accumulated probe power that counts as illuminated
ILLUMINATION_THRESHOLD = 0.1


def fit_ambiguity(o_hat, o):
    """Complex scalar ``a`` minimising ||o_hat - a*o||."""
    o_hat = np.asarray(o_hat)
    o = np.asarray(o)
    if o_hat.shape != o.shape:
        raise ValueError(f"shape mismatch {o_hat.shape} vs {o.shape}")
    norm2 = float(np.vdot(o, o).real)
    if norm2 == 0:
        raise ValueError("reconstruction is identically zero")
    return complex(np.vdot(o, o_hat) / norm2)


def rmse(o_hat, o, mask=None):
    """||o_hat - a*o|| / ||o_hat|| with ``a`` from :func:`fit_ambiguity`.

    ``o_hat`` is the ground truth. Only the global complex scale is fitted;
    a linear phase ramp between the two is left in the error. ``mask``
    restricts the comparison to selected pixels.
    """
    o_hat = np.asarray(o_hat)
    o = np.asarray(o)
    if o_hat.shape != o.shape:
        raise ValueError(f"shape mismatch {o_hat.shape} vs {o.shape}")
    if mask is not None:
        o_hat = o_hat[mask]
        o = o[mask]
    ref = np.linalg.norm(o_hat)
    if ref == 0:
        raise ValueError("ground truth is identically zero")
    a = fit_ambiguity(o_hat, o)
    return float(np.linalg.norm(o_hat - a * o) / ref)


def illuminated_mask(probe, positions, threshold=ILLUMINATION_THRESHOLD):
    """Object pixels whose summed probe power reaches ``threshold`` of the peak."""
    power = np.zeros(positions.object_shape)
    p2 = np.abs(probe) ** 2
    nr, nc = positions.probe_shape
    for r, c in positions.offsets:
        power[r:r + nr, c:c + nc] += p2
    return power >= threshold * power.max()


@dataclass
class TraceRecord:
    t: int
    nll: float
    lambda_t: float
    rmse: Optional[float] = None
    dual_residual: Optional[float] = None
    backtracks: int = 0
    wall_time: float = 0.0
    exhausted: bool = field(default=False, compare=False)
