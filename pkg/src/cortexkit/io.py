"""File outputs: CSV, binary PGM images, model snapshots, run manifests."""

from __future__ import annotations

import csv
import json
import struct
import subprocess
import time
from dataclasses import dataclass, field

import numpy as np

SNAPSHOT_MAGIC = b"CKSNAP1\x00"


def write_csv(path, header, rows) -> None:
    """RFC-4180 CSV with CRLF line endings and a header row."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def write_pgm(path, values: np.ndarray, lo=None, hi=None) -> None:
    """Binary 8-bit PGM; values map linearly from [lo, hi] to 0..255.

    Defaults take the data range; a constant image writes all zeros.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {values.shape}")
    lo = float(values.min()) if lo is None else float(lo)
    hi = float(values.max()) if hi is None else float(hi)
    if hi > lo:
        scaled = (values - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(values)
    pixels = np.clip(np.rint(scaled * 255.0), 0, 255).astype(np.uint8)
    height, width = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


# ---------------------------------------------------------------------------
# model snapshots: little-endian binary of named float64 arrays


def save_model(path, kind: str, config: dict, arrays: dict) -> None:
    """Layout: magic, kind, JSON config, then each named array as
    (u16 name length, name, u8 ndim, u32 dims..., row-major f64 data)."""
    kind_b = kind.encode("utf-8")
    config_b = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(struct.pack("<I", len(kind_b)))
        f.write(kind_b)
        f.write(struct.pack("<I", len(config_b)))
        f.write(config_b)
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            name_b = name.encode("utf-8")
            f.write(struct.pack("<H", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.tobytes())


def load_model(path):
    with open(path, "rb") as f:
        magic = f.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a model snapshot (bad magic)")
        (kind_len,) = struct.unpack("<I", f.read(4))
        kind = f.read(kind_len).decode("utf-8")
        (config_len,) = struct.unpack("<I", f.read(4))
        config = json.loads(f.read(config_len).decode("utf-8"))
        (count,) = struct.unpack("<I", f.read(4))
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            n_bytes = 8 * int(np.prod(shape)) if ndim else 8
            data = np.frombuffer(f.read(n_bytes), dtype="<f8").reshape(shape)
            arrays[name] = data.copy()
    return kind, config, arrays


# ---------------------------------------------------------------------------
# run manifests


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


@dataclass
class RunManifest:
    """Everything needed to reproduce a run and check its outputs.

    Files in `outputs` reproduce byte for byte when the run is replayed with
    the same seed (when `deterministic` is true); `timing_outputs` carry
    measured wall-clock values and are exempt.
    """

    experiment: str
    seed: int
    params: dict
    git: str = field(default_factory=git_describe)
    wall_time_s: float = 0.0
    deterministic: bool = True
    outputs: list = field(default_factory=list)
    timing_outputs: list = field(default_factory=list)

    def write(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.__dict__, f, indent=2, sort_keys=True)
            f.write("\n")


def load_manifest(path) -> RunManifest:
    with open(path) as f:
        return RunManifest(**json.load(f))


class ManifestTimer:
    """Context manager stamping wall time into a manifest on exit."""

    def __init__(self, manifest: RunManifest):
        self.manifest = manifest

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self.manifest

    def __exit__(self, *exc):
        self.manifest.wall_time_s = time.perf_counter() - self._t0
        return False
