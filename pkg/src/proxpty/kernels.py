"""Backend selection and position-parallel dispatch for the window kernels.

The compiled ``_ckernels`` module is used when importable; otherwise (or with
``PROXPTY_BACKEND=python``) the numpy fallback is used. ``BACKEND`` names the
active implementation.

Reductions over scan positions run in one of two modes. Deterministic mode
accumulates every window in scan order into one buffer. Parallel mode splits
the positions into ``threads`` contiguous chunks, accumulates each chunk into
a private buffer on a worker thread and sums the buffers in chunk order, so
the result depends on the thread count but never on scheduling.
"""

import os
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

if _ckernels is not None and os.environ.get("PROXPTY_BACKEND", "").lower() != "python":
    _impl = _ckernels
    BACKEND = "cython"
else:
    _impl = _pykernels
    BACKEND = "python"

# below this many accumulated pixels threading costs more than it saves
_PARALLEL_MIN_WORK = 1 << 18

_pool = None
_pool_size = 0
_pool_lock = threading.Lock()


def get_backend(name=None):
    """Return the kernel module called ``name`` ("cython" or "python")."""
    if name is None:
        return _impl
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        return _ckernels
    if name == "python":
        return _pykernels
    raise ValueError(f"unknown backend {name!r}")


def thread_count():
    raw = os.environ.get("PROXPTY_THREADS")
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    n = int(raw)
    if n < 1:
        raise ValueError("PROXPTY_THREADS must be a positive integer")
    return n


def deterministic():
    return os.environ.get("PROXPTY_DETERMINISTIC", "0") == "1"


def _executor(n):
    # benchmark cells may call in from several threads; an old pool is left
    # to drain rather than shut down under a concurrent user
    global _pool, _pool_size
    with _pool_lock:
        if _pool is None or _pool_size != n:
            _pool = ThreadPoolExecutor(max_workers=n, thread_name_prefix="proxpty")
            _pool_size = n
        return _pool


def _chunks(K, work, parallel):
    if parallel is None:
        parallel = not deterministic()
    n = thread_count() if parallel else 1
    if n <= 1 or work < _PARALLEL_MIN_WORK:
        n = 1
    n = min(n, K)
    bounds = np.linspace(0, K, n + 1).round().astype(int)
    return [(bounds[j], bounds[j + 1]) for j in range(n)]


def _offsets(offsets):
    return np.ascontiguousarray(offsets, dtype=np.int64)


def extract_patches(obj, offsets, shape, out=None):
    """Stack of ``shape``-sized windows of ``obj`` at each offset."""
    offsets = _offsets(offsets)
    if out is None:
        out = np.empty((len(offsets),) + tuple(shape), dtype=np.complex128)
    _impl.extract_patches(np.ascontiguousarray(obj, dtype=np.complex128), offsets, out)
    return out


def _reduce(kernel, shape_num, offsets, args, parallel):
    K = len(offsets)
    spans = _chunks(K, K * args[-1].shape[1] * args[-1].shape[2], parallel)

    def work(span):
        lo, hi = span
        num = np.zeros(shape_num, dtype=np.complex128)
        den = np.zeros(shape_num, dtype=np.float64)
        kernel(num, den, *args[:-1], args[-1][lo:hi], offsets[lo:hi])
        return num, den

    if len(spans) == 1:
        return work(spans[0])
    parts = list(_executor(len(spans)).map(work, spans))
    num, den = parts[0]
    for n_, d_ in parts[1:]:
        num += n_
        den += d_
    return num, den


def accumulate_object(probe, back, offsets, object_shape, parallel=None):
    """Numerator and denominator of the collective object update."""
    offsets = _offsets(offsets)
    probe = np.ascontiguousarray(probe, dtype=np.complex128)
    back = np.ascontiguousarray(back, dtype=np.complex128)
    return _reduce(_impl.accumulate_object, tuple(object_shape), offsets, (probe, back), parallel)


def accumulate_probe(obj, back, offsets, parallel=None):
    """Numerator and denominator of the collective probe update."""
    offsets = _offsets(offsets)
    obj = np.ascontiguousarray(obj, dtype=np.complex128)
    back = np.ascontiguousarray(back, dtype=np.complex128)
    return _reduce(_impl.accumulate_probe, back.shape[1:], offsets, (obj, back), parallel)


def embed_add(buf, offsets, patches):
    """Add each patch into ``buf`` at its window, in place."""
    if buf.dtype != np.complex128 or not buf.flags.c_contiguous:
        raise TypeError("buffer must be C-contiguous complex128")
    _impl.embed_add(buf, _offsets(offsets), np.ascontiguousarray(patches, dtype=np.complex128))
    return buf
