"""Image and trace files: PGM, raw float32 fields, trace CSV, run manifests."""

import csv
import math
import re
from pathlib import Path

import numpy as np

TRACE_COLUMNS = ("t", "nll", "rmse", "lambda", "dual_residual", "backtracks", "wall_time")


class PGMError(ValueError):
    pass


def read_pgm(path):
    """Read a P2 (ASCII) or P5 (binary) PGM with maxval up to 65535."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMError(f"{path}: not a PGM file")
    # header: magic, width, height, maxval, each separated by whitespace/comments
    tokens = []
    pos = 2
    while len(tokens) < 3:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\d+)").match(data, pos)
        if m is None:
            raise PGMError(f"{path}: malformed header")
        tokens.append(int(m.group(2)))
        pos = m.end()
    width, height, maxval = tokens
    if not 0 < maxval < 65536 or width < 1 or height < 1:
        raise PGMError(f"{path}: unsupported header values")
    if magic == b"P2":
        values = np.array(data[pos:].split(), dtype=np.int64)
        if values.size < width * height:
            raise PGMError(f"{path}: truncated pixel data")
        img = values[: width * height].reshape(height, width)
    else:
        pos += 1  # single whitespace byte before the raster
        dtype = ">u2" if maxval > 255 else "u1"
        count = width * height
        nbytes = count * np.dtype(dtype).itemsize
        if len(data) - pos < nbytes:
            raise PGMError(f"{path}: truncated pixel data")
        img = np.frombuffer(data, dtype=dtype, count=count, offset=pos).reshape(height, width)
    return img.astype(np.uint16 if maxval > 255 else np.uint8)


def write_pgm(path, img, maxval=None):
    """Binary PGM; 16-bit (big-endian) when ``maxval`` exceeds 255."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise PGMError("PGM images are 2-D")
    if maxval is None:
        maxval = 65535 if img.dtype == np.uint16 else 255
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(img, dtype=dtype).tobytes())


def _to_u16(values):
    return np.floor(np.clip(values, 0, 65535) + 0.5).astype(np.uint16)


def field_paths(prefix):
    prefix = str(prefix)
    return {
        "amplitude_raw": Path(prefix + "_amplitude.f32"),
        "phase_raw": Path(prefix + "_phase.f32"),
        "shape": Path(prefix + "_shape.txt"),
        "amplitude_pgm": Path(prefix + "_amplitude.pgm"),
        "phase_pgm": Path(prefix + "_phase.pgm"),
    }


def export_field(prefix, field):
    """Write amplitude/phase of ``field`` as raw float32 and 16-bit PGM.

    Raw files are little-endian float32, row-major, with ``<prefix>_shape.txt``
    holding ``rows cols``. The amplitude PGM is min-max scaled (a constant
    amplitude maps to 32768); the phase PGM maps [-pi, pi] onto [0, 65535].
    """
    field = np.asarray(field)
    if field.ndim != 2 or not np.all(np.isfinite(field)):
        raise ValueError("field must be a finite 2-D array")
    paths = field_paths(prefix)
    amp = np.abs(field)
    phase = np.angle(field)
    amp.astype("<f4").tofile(paths["amplitude_raw"])
    phase.astype("<f4").tofile(paths["phase_raw"])
    paths["shape"].write_text(f"{field.shape[0]} {field.shape[1]}\n")
    lo, hi = amp.min(), amp.max()
    if hi > lo:
        amp_img = _to_u16((amp - lo) / (hi - lo) * 65535)
    else:
        amp_img = np.full(field.shape, 32768, dtype=np.uint16)
    write_pgm(paths["amplitude_pgm"], amp_img, 65535)
    write_pgm(paths["phase_pgm"], _to_u16((phase + np.pi) / (2 * np.pi) * 65535), 65535)
    return paths


def load_field(prefix):
    """Complex field from the raw amplitude/phase pair written by export_field.

    ``prefix`` may also be the path of either raw file.
    """
    prefix = re.sub(r"_(amplitude|phase)\.f32$", "", str(prefix))
    paths = field_paths(prefix)
    rows, cols = (int(v) for v in paths["shape"].read_text().split())
    amp = np.fromfile(paths["amplitude_raw"], dtype="<f4")
    phase = np.fromfile(paths["phase_raw"], dtype="<f4")
    if amp.size != rows * cols or phase.size != rows * cols:
        raise ValueError(f"{prefix}: raw size does not match {rows}x{cols}")
    return (amp.astype(np.float64) * np.exp(1j * phase.astype(np.float64))).reshape(rows, cols)


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for rec in trace:
            writer.writerow([
                _cell(rec.t), _cell(float(rec.nll)), _cell(rec.rmse), _cell(float(rec.lambda_t)),
                _cell(rec.dual_residual), _cell(rec.backtracks), _cell(float(rec.wall_time)),
            ])


def read_trace(path):
    """Trace CSV as a list of dicts; empty cells become None."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out = {}
            for key, raw in row.items():
                if raw == "":
                    out[key] = None
                elif key in ("t", "backtracks"):
                    out[key] = int(raw)
                else:
                    out[key] = float(raw)
            rows.append(out)
    return rows


def write_manifest(path, items):
    lines = []
    for key, value in items.items():
        if isinstance(value, float) and not math.isfinite(value):
            value = str(value)
        text = str(value)
        if "\n" in text:
            raise ValueError(f"manifest value for {key!r} spans lines")
        lines.append(f"{key}={text}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key] = value
    return out
