import os
import subprocess
import sys
import threading

import numpy as np
import pytest

from conftest import random_field
from proxpty import _pykernels, kernels

BACKENDS = ["python"] + (["cython"] if kernels._ckernels is not None else [])


def setup(rng, K=30, n=8, size=32):
    offsets = np.ascontiguousarray(rng.integers(0, size - n + 1, (K, 2)), dtype=np.int64)
    obj = random_field(rng, (size, size))
    probe = random_field(rng, (n, n))
    back = random_field(rng, (K, n, n))
    return offsets, obj, probe, back


def naive_object(probe, back, offsets, shape):
    num = np.zeros(shape, complex)
    den = np.zeros(shape)
    n = probe.shape[0]
    for (r, c), b in zip(offsets, back):
        num[r:r + n, c:c + n] += np.conj(probe) * b
        den[r:r + n, c:c + n] += np.abs(probe) ** 2
    return num, den


@pytest.mark.parametrize("name", BACKENDS)
def test_backend_matches_naive_loops(rng, name):
    impl = kernels.get_backend(name)
    offsets, obj, probe, back = setup(rng)
    out = np.empty(back.shape, complex)
    impl.extract_patches(obj, offsets, out)
    for k, (r, c) in enumerate(offsets):
        np.testing.assert_array_equal(out[k], obj[r:r + 8, c:c + 8])
    num = np.zeros(obj.shape, complex)
    den = np.zeros(obj.shape)
    impl.accumulate_object(num, den, probe, back, offsets)
    ref_num, ref_den = naive_object(probe, back, offsets, obj.shape)
    np.testing.assert_allclose(num, ref_num, atol=1e-12)
    np.testing.assert_allclose(den, ref_den, atol=1e-12)
    pnum = np.zeros(probe.shape, complex)
    pden = np.zeros(probe.shape)
    impl.accumulate_probe(pnum, pden, obj, back, offsets)
    patches = np.array([obj[r:r + 8, c:c + 8] for r, c in offsets])
    np.testing.assert_allclose(pnum, np.sum(np.conj(patches) * back, axis=0), atol=1e-12)
    np.testing.assert_allclose(pden, np.sum(np.abs(patches) ** 2, axis=0), atol=1e-12)
    buf = np.zeros(obj.shape, complex)
    impl.embed_add(buf, offsets, back)
    ref = np.zeros(obj.shape, complex)
    for (r, c), b in zip(offsets, back):
        ref[r:r + 8, c:c + 8] += b
    np.testing.assert_allclose(buf, ref, atol=1e-12)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
def test_backends_agree(rng):
    offsets, obj, probe, back = setup(rng, K=100)
    results = []
    for name in BACKENDS:
        impl = kernels.get_backend(name)
        num = np.zeros(obj.shape, complex)
        den = np.zeros(obj.shape)
        impl.accumulate_object(num, den, probe, back, offsets)
        pnum = np.zeros(probe.shape, complex)
        pden = np.zeros(probe.shape)
        impl.accumulate_probe(pnum, pden, obj, back, offsets)
        results.append((num, den, pnum, pden))
    for a, b in zip(*results):
        assert np.linalg.norm(a - b) <= 1e-12 * np.linalg.norm(a)


@pytest.mark.parametrize("threads", ["2", "3", "7"])
def test_parallel_reduction_agrees(rng, monkeypatch, threads):
    monkeypatch.setenv("PROXPTY_THREADS", threads)
    monkeypatch.setattr(kernels, "_PARALLEL_MIN_WORK", 0)
    offsets, obj, probe, back = setup(rng, K=50)
    det = kernels.accumulate_object(probe, back, offsets, obj.shape, parallel=False)
    par = kernels.accumulate_object(probe, back, offsets, obj.shape, parallel=True)
    for a, b in zip(det, par):
        assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(a)
    det = kernels.accumulate_probe(obj, back, offsets, parallel=False)
    par = kernels.accumulate_probe(obj, back, offsets, parallel=True)
    for a, b in zip(det, par):
        assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(a)
    again = kernels.accumulate_probe(obj, back, offsets, parallel=True)
    assert again[0].tobytes() == par[0].tobytes()


def test_concurrent_callers(rng, monkeypatch):
    monkeypatch.setenv("PROXPTY_THREADS", "3")
    monkeypatch.setattr(kernels, "_PARALLEL_MIN_WORK", 0)
    offsets, obj, probe, back = setup(rng, K=40)
    ref = kernels.accumulate_object(probe, back, offsets, obj.shape, parallel=False)
    errors = []

    def worker():
        for _ in range(20):
            num, _ = kernels.accumulate_object(probe, back, offsets, obj.shape, parallel=True)
            errors.append(np.linalg.norm(num - ref[0]) / np.linalg.norm(ref[0]))

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(errors) == 80 and max(errors) <= 1e-10


def test_thread_count_env(monkeypatch):
    monkeypatch.delenv("PROXPTY_THREADS", raising=False)
    assert kernels.thread_count() == (os.cpu_count() or 1)
    monkeypatch.setenv("PROXPTY_THREADS", "5")
    assert kernels.thread_count() == 5
    monkeypatch.setenv("PROXPTY_THREADS", "0")
    with pytest.raises(ValueError):
        kernels.thread_count()


def test_get_backend():
    assert kernels.get_backend("python") is _pykernels
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_backend_env_forces_fallback():
    env = dict(os.environ, PROXPTY_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import proxpty.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_embed_add_rejects_bad_buffer(rng):
    offsets, obj, probe, back = setup(rng)
    with pytest.raises(TypeError):
        kernels.embed_add(np.zeros(obj.shape, np.complex64), offsets, back)
