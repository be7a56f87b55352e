"""Pure-numpy fallback for the window kernels in ``_ckernels.pyx``.

Signatures and accumulation order match the compiled module exactly.
"""

import numpy as np


def extract_patches(obj, offsets, out):
    nr, nc = out.shape[1:]
    for k, (r0, c0) in enumerate(offsets):
        out[k] = obj[r0:r0 + nr, c0:c0 + nc]


def embed_add(buf, offsets, patches):
    nr, nc = patches.shape[1:]
    for k, (r0, c0) in enumerate(offsets):
        buf[r0:r0 + nr, c0:c0 + nc] += patches[k]


def accumulate_object(num, den, probe, back, offsets):
    nr, nc = probe.shape
    weight = np.conj(probe)
    power = probe.real ** 2 + probe.imag ** 2
    for k, (r0, c0) in enumerate(offsets):
        num[r0:r0 + nr, c0:c0 + nc] += weight * back[k]
        den[r0:r0 + nr, c0:c0 + nc] += power


def accumulate_probe(num, den, obj, back, offsets):
    nr, nc = num.shape
    for k, (r0, c0) in enumerate(offsets):
        patch = obj[r0:r0 + nr, c0:c0 + nc]
        num += np.conj(patch) * back[k]
        den += patch.real ** 2 + patch.imag ** 2
