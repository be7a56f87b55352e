"""Synthetic ptychography datasets: objects, probes, Fermat scans and noise.

Intensities are scaled so the brightest detector pixel over the whole scan
equals ``max_counts``, then either Poisson-sampled or rounded to whole
counts. Random draws for position ``i`` come from a generator seeded with
``(seed, i)`` so the dataset does not depend on evaluation order.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import ScanPositions, forward

FERMAT_ANGLE = 2.4
DEFAULT_AMP_MIN = 0.1


@dataclass
class SimulationSpec:
    phase_range: float = 1.0
    probe_kind: str = "focused"
    probe_radius: float = 3.7
    probe_size: int = 64
    c: float = 4.0
    K: int = 1261
    max_counts: float = 1e4
    noise: str = "poisson"
    seed: int = 0
    amp_min: float = DEFAULT_AMP_MIN
    pad_to_fit: bool = True

    def __post_init__(self):
        if not self.max_counts > 0:
            raise ValueError("max_counts must be positive")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not self.c > 0:
            raise ValueError("Fermat constant c must be positive")
        if self.noise not in ("poisson", "none"):
            raise ValueError(f"unknown noise kind {self.noise!r}")
        if self.probe_kind not in ("focused", "disk"):
            raise ValueError(f"unknown probe kind {self.probe_kind!r}")
        if self.probe_size < 1 or not self.probe_radius > 0:
            raise ValueError("probe size and radius must be positive")


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def fermat_displacements(c, K):
    """Spiral points r = c*sqrt(i), theta = 2.4*i for i = 1..K, as (row, col)."""
    i = np.arange(1, K + 1, dtype=np.float64)
    r = c * np.sqrt(i)
    theta = FERMAT_ANGLE * i
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def fermat_positions(c, K, probe_shape, object_shape, center=None):
    """Fermat-spiral scan rounded to whole pixels around ``center``.

    ``center`` defaults to the object centre. Raises ``GeometryError`` if any
    window leaves the object.
    """
    if center is None:
        center = (object_shape[0] / 2, object_shape[1] / 2)
    pts = round_half_away(np.asarray(center, dtype=np.float64) + fermat_displacements(c, K))
    half = np.array([probe_shape[0] // 2, probe_shape[1] // 2])
    return ScanPositions(probe_shape, object_shape, pts.astype(np.int64) - half)


def _normalise(img):
    img = np.asarray(img, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi == lo:
        return None
    return (img - lo) / (hi - lo)


def synth_object(amp_image, phase_image, phase_range, amp_min=DEFAULT_AMP_MIN):
    """Complex object |o| in [amp_min, 1] and arg(o) in [0, phase_range].

    Both images are min-max normalised; a constant amplitude image maps to 1
    and a constant phase image to 0.
    """
    if np.shape(amp_image) != np.shape(phase_image):
        raise ValueError("amplitude and phase images differ in shape")
    a = _normalise(amp_image)
    amp = np.ones(np.shape(amp_image)) if a is None else amp_min + (1.0 - amp_min) * a
    ph = _normalise(phase_image)
    phase = np.zeros(np.shape(phase_image)) if ph is None else phase_range * ph
    return amp * np.exp(1j * phase)


def make_probe(kind, size, radius):
    """Unit-energy probe on a ``size`` x ``size`` grid.

    ``disk``: flat disk of the given radius. ``focused``: far-field disk
    aperture transformed to the sample plane, with the aperture chosen so the
    focal spot's half width at half maximum is ``radius`` pixels.
    """
    yy, xx = np.mgrid[:size, :size]
    if kind == "disk":
        d = np.hypot(yy - (size - 1) / 2, xx - (size - 1) / 2)
        probe = (d <= radius).astype(np.complex128)
    elif kind == "focused":
        f = np.fft.fftfreq(size) * size
        fr = np.hypot(*np.meshgrid(f, f, indexing="ij"))
        # Airy FWHM = 1.03 * size / (2 * aperture radius)
        aperture = 1.03 * size / (4.0 * radius)
        pupil = (fr <= aperture).astype(np.complex128)
        probe = np.fft.fftshift(np.fft.ifft2(pupil))
    else:
        raise ValueError(f"unknown probe kind {kind!r}")
    energy = np.sum(np.abs(probe) ** 2)
    if energy == 0:
        raise ValueError("probe radius too small for the grid")
    return probe / np.sqrt(energy)


def simulate_measurements(probe, obj, positions, max_counts, noise="poisson", seed=0):
    """Measured and true amplitude stacks plus the intensity scale applied.

    Returns ``(y, y_true, scale)`` where ``y_true**2`` is the noise-free
    intensity scaled to peak at ``max_counts`` and ``y**2`` holds whole
    counts (Poisson draws, or rounded intensities when ``noise="none"``).
    """
    if not max_counts > 0:
        raise ValueError("max_counts must be positive")
    if noise not in ("poisson", "none"):
        raise ValueError(f"unknown noise kind {noise!r}")
    raw = np.abs(forward(probe, obj, positions)) ** 2
    peak = raw.max()
    if peak <= 0:
        raise ValueError("all simulated intensities are zero")
    scale = max_counts / peak
    intensity = raw * scale
    if noise == "poisson":
        counts = np.empty_like(intensity)
        for i in range(len(intensity)):
            rng = np.random.default_rng([seed, i])
            counts[i] = rng.poisson(intensity[i])
    else:
        counts = round_half_away(intensity)
    return np.sqrt(counts), np.sqrt(intensity), float(scale)


def snr(y, y_true):
    """Intensity signal-to-noise ratio in dB; ``inf`` for an exact match."""
    y = np.asarray(y, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.float64)
    if y.shape != y_true.shape:
        raise ValueError("shape mismatch")
    signal = np.sum((y_true ** 2) ** 2)
    noise = np.sum((y ** 2 - y_true ** 2) ** 2)
    if noise == 0:
        return float("inf")
    return float(10.0 * np.log10(signal / noise))


def phantom_images(size=128, seed=0):
    """Deterministic stand-ins for natural amplitude and phase images.

    The amplitude image is a scene of overlapping smooth-edged ellipses on a
    graded background; the phase image mixes oriented stripe textures with a
    few blocks. Both are uint8 in [0, 255].
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[:size, :size] / size
    amp = 0.3 + 0.4 * yy
    for _ in range(12):
        cy, cx = rng.uniform(0.1, 0.9, 2)
        ay, ax = rng.uniform(0.04, 0.25, 2)
        rot = rng.uniform(0, np.pi)
        u = (yy - cy) * np.cos(rot) + (xx - cx) * np.sin(rot)
        v = -(yy - cy) * np.sin(rot) + (xx - cx) * np.cos(rot)
        inside = expit(-12.0 * ((u / ay) ** 2 + (v / ax) ** 2 - 1.0))
        amp = amp * (1 - inside) + rng.uniform(0, 1) * inside
    phase = np.zeros((size, size))
    for _ in range(5):
        cy, cx = rng.uniform(0.2, 0.8, 2)
        w = rng.uniform(0.1, 0.3)
        k = rng.uniform(20, 60)
        rot = rng.uniform(0, np.pi)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * w * w))
        phase += blob * (0.5 + 0.5 * np.sin(k * (yy * np.cos(rot) + xx * np.sin(rot))))
    for _ in range(4):
        y0, x0 = rng.integers(0, size * 3 // 4, 2)
        h, w = rng.integers(size // 10, size // 4, 2)
        phase[y0:y0 + h, x0:x0 + w] += rng.uniform(0.3, 1.0)

    def to_u8(img):
        img = (img - img.min()) / (img.max() - img.min())
        return np.round(255 * img).astype(np.uint8)

    return to_u8(amp), to_u8(phase)


def padded_scan(amp_image, phase_image, c, K, probe_size, pad_to_fit=True):
    """Fermat scan centred on the source images, padding them if needed.

    Images are extended by mirror reflection just enough for every window to
    fit. Returns ``(amp, phase, positions)``.
    """
    rows, cols = np.shape(amp_image)
    center = np.array([rows / 2, cols / 2])
    corners = round_half_away(center + fermat_displacements(c, K)).astype(np.int64) - probe_size // 2
    lo = np.maximum(0, -corners.min(axis=0))
    hi = np.maximum(0, corners.max(axis=0) + probe_size - np.array([rows, cols]))
    if np.any(lo) or np.any(hi):
        if not pad_to_fit:
            return amp_image, phase_image, fermat_positions(c, K, (probe_size,) * 2, (rows, cols), center)
        widths = ((lo[0], hi[0]), (lo[1], hi[1]))
        amp_image = np.pad(amp_image, widths, mode="symmetric")
        phase_image = np.pad(phase_image, widths, mode="symmetric")
    shape = np.shape(amp_image)
    positions = fermat_positions(c, K, (probe_size,) * 2, shape, center + lo)
    return amp_image, phase_image, positions


def simulate(spec, amp_image=None, phase_image=None):
    """Build a full dataset from a :class:`SimulationSpec` and source images."""
    from .dataset import Dataset

    if amp_image is None or phase_image is None:
        amp_image, phase_image = phantom_images(128, spec.seed)
    amp_image, phase_image, positions = padded_scan(
        amp_image, phase_image, spec.c, spec.K, spec.probe_size, spec.pad_to_fit
    )
    obj = synth_object(amp_image, phase_image, spec.phase_range, spec.amp_min)
    probe = make_probe(spec.probe_kind, spec.probe_size, spec.probe_radius)
    y, y_true, scale = simulate_measurements(probe, obj, positions, spec.max_counts, spec.noise, spec.seed)
    return Dataset(
        positions=positions,
        amplitudes=y,
        truth_object=obj,
        truth_probe=probe * np.sqrt(scale),
        truth_amplitudes=y_true,
        scale_factor=scale,
        snr_db=snr(y, y_true),
        seed=spec.seed,
    )
