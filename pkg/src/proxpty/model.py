"""Ptychographic forward model and the two constraint projections.

Fields are plain 2-D complex128 numpy arrays; position stacks are 3-D arrays
of shape ``(K, rows, cols)``. The Fourier transform is unitary so that its
adjoint is its inverse and the collective updates below are exact
least-squares solutions.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft

from . import kernels

# relative floor on update denominators, see update_object
DENOMINATOR_FLOOR = 1e-9


class GeometryError(ValueError):
    """Scan windows inconsistent with the probe or object shape."""


def _workers():
    return 1 if kernels.deterministic() else kernels.thread_count()


def _check_finite(field):
    if not np.all(np.isfinite(field)):
        raise ValueError("field contains non-finite values")


def fft2_unitary(field):
    """2-D DFT over the last two axes scaled by 1/sqrt(rows*cols)."""
    field = np.asarray(field)
    if field.size == 0:
        raise ValueError("empty field")
    _check_finite(field)
    return scipy.fft.fft2(field, norm="ortho", workers=_workers())


def ifft2_unitary(field):
    field = np.asarray(field)
    if field.size == 0:
        raise ValueError("empty field")
    _check_finite(field)
    return scipy.fft.ifft2(field, norm="ortho", workers=_workers())


@dataclass(frozen=True)
class ScanPositions:
    """Integer top-left window corners of the probe inside the object frame.

    ``offsets`` has shape ``(K, 2)`` holding ``(row, col)`` pairs.
    """

    probe_shape: tuple
    object_shape: tuple
    offsets: np.ndarray

    def __post_init__(self):
        offsets = np.asarray(self.offsets)
        if offsets.ndim != 2 or offsets.shape[1] != 2 or len(offsets) < 1:
            raise GeometryError("offsets must be a non-empty (K, 2) array")
        if not np.issubdtype(offsets.dtype, np.integer):
            if not np.array_equal(offsets, np.round(offsets)):
                raise GeometryError("offsets must be whole pixels")
        offsets = offsets.astype(np.int64)
        offsets.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "probe_shape", tuple(int(n) for n in self.probe_shape))
        object.__setattr__(self, "object_shape", tuple(int(n) for n in self.object_shape))
        pr, pc = self.probe_shape
        orows, ocols = self.object_shape
        if min(pr, pc, orows, ocols) < 1:
            raise GeometryError("shapes must be positive")
        r, c = offsets[:, 0], offsets[:, 1]
        bad = (r < 0) | (c < 0) | (r + pr > orows) | (c + pc > ocols)
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise GeometryError(
                f"window {k} at {tuple(offsets[k])} leaves the {orows}x{ocols} object"
            )

    def __len__(self):
        return len(self.offsets)

    def __eq__(self, other):
        if not isinstance(other, ScanPositions):
            return NotImplemented
        return (
            self.probe_shape == other.probe_shape
            and self.object_shape == other.object_shape
            and np.array_equal(self.offsets, other.offsets)
        )

    def window(self, i):
        if not 0 <= i < len(self.offsets):
            raise IndexError(f"position index {i} out of range for K={len(self)}")
        r, c = self.offsets[i]
        return slice(r, r + self.probe_shape[0]), slice(c, c + self.probe_shape[1])

    def coverage(self):
        """Boolean mask of object pixels inside at least one window."""
        mask = np.zeros(self.object_shape, dtype=bool)
        for r, c in self.offsets:
            mask[r:r + self.probe_shape[0], c:c + self.probe_shape[1]] = True
        return mask


def extract(obj, positions, i):
    """Copy of the object window seen at position ``i``."""
    return np.array(obj[positions.window(i)], dtype=np.complex128)


def extract_all(obj, positions):
    return kernels.extract_patches(obj, positions.offsets, positions.probe_shape)


def embed_accumulate(buffer, positions, i, patch):
    """Add ``patch`` into ``buffer`` at window ``i`` (adjoint of extract)."""
    patch = np.asarray(patch)
    if patch.shape != positions.probe_shape:
        raise ValueError(f"patch shape {patch.shape} != probe shape {positions.probe_shape}")
    if buffer.shape != positions.object_shape:
        raise ValueError("buffer does not match the object shape")
    buffer[positions.window(i)] += patch
    return buffer


def _check_probe(probe, positions):
    if np.shape(probe) != positions.probe_shape:
        raise ValueError(f"probe shape {np.shape(probe)} != {positions.probe_shape}")


def forward(probe, obj, positions, i=None):
    """Far-field exit wave at position ``i``, or the whole stack if ``i`` is None."""
    _check_probe(probe, positions)
    if np.shape(obj) != positions.object_shape:
        raise ValueError(f"object shape {np.shape(obj)} != {positions.object_shape}")
    if i is None:
        return fft2_unitary(probe * extract_all(obj, positions))
    return fft2_unitary(probe * extract(obj, positions, i))


def phase_factor(v):
    """v/|v| with the convention 0 where v == 0."""
    mag = np.abs(v)
    out = np.zeros_like(v, dtype=np.result_type(v, np.complex128))
    nz = mag > 0
    out[nz] = v[nz] / mag[nz]
    return out


def project_modulus(v, y):
    """Replace the modulus of ``v`` by ``y`` keeping its phase."""
    y = np.asarray(y, dtype=np.float64)
    if np.shape(v) != y.shape:
        raise ValueError("amplitude and wavefield shapes differ")
    if np.any(y < 0):
        raise ValueError("negative amplitudes")
    v = np.asarray(v, dtype=np.complex128)
    mag = np.abs(v)
    nz = mag > 0
    ratio = np.zeros_like(mag)
    ratio[nz] = y[nz] / mag[nz]
    # a modulus already equal to y up to rounding is left alone, which makes
    # the projection exactly idempotent
    ratio[np.abs(ratio - 1.0) <= 4 * np.finfo(np.float64).eps] = 1.0
    return ratio * v


def _floored_divide(num, den):
    floor = DENOMINATOR_FLOOR * den.max()
    if floor <= 0:
        raise ValueError("no illumination: update denominator is zero everywhere")
    return num / np.maximum(den, floor)


def _object_from_back(probe, back, positions, parallel=None):
    num, den = kernels.accumulate_object(probe, back, positions.offsets, positions.object_shape, parallel)
    return _floored_divide(num, den)


def _probe_from_back(obj, back, positions, parallel=None):
    num, den = kernels.accumulate_probe(obj, back, positions.offsets, parallel)
    return _floored_divide(num, den)


def _check_stack(v_stack, positions):
    if np.shape(v_stack) != (len(positions),) + positions.probe_shape:
        raise ValueError(f"stack shape {np.shape(v_stack)} does not match {len(positions)} positions")


def update_object(probe, v_stack, positions, parallel=None):
    """Least-squares object for fixed probe: argmin_o sum_i ||F P S_i o - v_i||^2.

    Pixels whose accumulated probe power falls below ``DENOMINATOR_FLOOR``
    times its maximum are divided by that floor instead, which leaves
    never-illuminated pixels at exactly zero.
    """
    _check_probe(probe, positions)
    _check_stack(v_stack, positions)
    return _object_from_back(probe, ifft2_unitary(v_stack), positions, parallel)


def update_probe(obj, v_stack, positions, parallel=None):
    """Least-squares probe for fixed object, floored like ``update_object``."""
    if np.shape(obj) != positions.object_shape:
        raise ValueError("object shape mismatch")
    _check_stack(v_stack, positions)
    return _probe_from_back(obj, ifft2_unitary(v_stack), positions, parallel)


def project_translation(v_stack, probe, obj, positions, inner_iters=1, parallel=None,
                        update_probe=True):
    """Collective probe/object projection of a wavefield stack.

    Alternates the object and probe least-squares updates ``inner_iters``
    times, object first, then re-propagates. With ``update_probe=False`` only
    the object is refitted. Returns ``(projected_stack, probe, obj)``; the
    inputs are not modified.
    """
    if inner_iters < 1:
        raise ValueError("inner_iters must be >= 1")
    _check_stack(v_stack, positions)
    back = ifft2_unitary(v_stack)
    for _ in range(inner_iters):
        obj = _object_from_back(probe, back, positions, parallel)
        if update_probe:
            probe = _probe_from_back(obj, back, positions, parallel)
    return forward(probe, obj, positions), probe, obj
