"""File formats for experiment outputs: CSV, 16-bit PGM, WAV, manifests."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import ConfigError

__all__ = [
    "write_csv",
    "write_pgm16",
    "read_wav",
    "write_wav",
    "sha256_file",
    "write_manifest",
]

CSV_FORMAT = "%.17g"


def write_csv(path, array, header=""):
    """Write a 1-D or 2-D array as CSV with full double precision."""
    arr = np.atleast_2d(np.asarray(array, dtype=float))
    np.savetxt(path, arr, fmt=CSV_FORMAT, delimiter=",",
               header=header, comments="# " if header else "")
    return Path(path)


def write_pgm16(path, field):
    """Write a nonnegative field as a 16-bit binary PGM image.

    The field is normalized by its maximum; the scale is returned so a
    sidecar can record it and the absolute values stay recoverable.
    """
    arr = np.asarray(field, dtype=float)
    if arr.ndim != 2:
        raise ConfigError("PGM output needs a 2-D field")
    peak = np.abs(arr).max()
    scale = peak if peak > 0 else 1.0
    img = np.round(np.abs(arr) / scale * 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode())
        fh.write(img.tobytes())
    return scale


def read_wav(path):
    """Read a mono WAV file; returns (samples as float in [-1, 1], fs)."""
    fs, data = wavfile.read(path)
    if data.ndim != 1:
        raise ConfigError(
            f"{path}: expected mono audio, got {data.shape[1]} channels"
        )
    if data.dtype == np.int16:
        data = data / 32768.0
    elif data.dtype == np.int32:
        data = data / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        data = data.astype(float)
    else:
        raise ConfigError(f"{path}: unsupported WAV sample format {data.dtype}")
    return data, float(fs)


def write_wav(path, samples, fs, pcm16=False):
    """Write mono audio as float32 WAV, or 16-bit PCM when requested."""
    x = np.asarray(samples, dtype=float)
    if pcm16:
        peak = np.abs(x).max()
        if peak > 1.0:
            x = x / peak
        wavfile.write(path, int(fs), np.round(x * 32767).astype(np.int16))
    else:
        wavfile.write(path, int(fs), x.astype(np.float32))
    return Path(path)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command, config, inputs, outputs, elapsed, version,
                   extra=None):
    """Write a JSON run manifest.

    ``inputs`` maps labels to file paths (hashed here); ``outputs`` is a
    list of produced files (hashed too, so reproducibility is checkable).
    """
    doc = {
        "command": command,
        "config": config,
        "inputs": {k: {"path": str(p), "sha256": sha256_file(p)}
                   for k, p in inputs.items()},
        "outputs": [{"path": str(p), "sha256": sha256_file(p)}
                    for p in outputs],
        "elapsed_s": elapsed,
        "version": version,
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return Path(path)
