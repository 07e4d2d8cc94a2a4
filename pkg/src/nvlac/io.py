"""Data products: CSV, JSON, binary PPM heatmaps and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from datetime import datetime, timezone

import numpy as np


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) if not isinstance(x, str) else x for x in row])
    return buf.getvalue().encode("utf-8")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def json_bytes(obj) -> bytes:
    return (json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n").encode("utf-8")


# dark blue -> white -> dark red
_RAMP = np.array([[0.0, 0.0, 0.35], [1.0, 1.0, 1.0], [0.55, 0.0, 0.0]])


def ppm_bytes(values, vmin=None, vmax=None, scale=1) -> tuple[bytes, dict]:
    """Binary P6 image of a 2-D array with a linear three-stop colour ramp.

    Row 0 of ``values`` becomes the bottom image row.  Returns the image and
    the min/max used for the ramp.
    """
    z = np.asarray(values, dtype=float)
    lo = float(np.nanmin(z)) if vmin is None else float(vmin)
    hi = float(np.nanmax(z)) if vmax is None else float(vmax)
    span = hi - lo if hi > lo else 1.0
    t = np.clip((z - lo) / span, 0.0, 1.0) * 2.0
    k = np.minimum(t.astype(int), 1)
    frac = (t - k)[..., None]
    rgb = _RAMP[k] * (1 - frac) + _RAMP[k + 1] * frac
    img = np.round(rgb * 255).astype(np.uint8)[::-1]
    if scale > 1:
        img = img.repeat(scale, axis=0).repeat(scale, axis=1)
    h, w = img.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + img.tobytes(), {"min": lo, "max": hi, "width": w, "height": h}


def read_ppm(data: bytes) -> np.ndarray:
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def utc_now():
    return datetime.now(timezone.utc).isoformat()


class OutputSet:
    """Collects products in memory and writes them together at the end."""

    def __init__(self):
        self.files = {}

    def add(self, name, data: bytes):
        self.files[name] = data

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        written = []
        for name, data in self.files.items():
            path = os.path.join(out_dir, name)
            with open(path, "wb") as fh:
                fh.write(data)
            written.append({"path": name, "sha256": sha256_bytes(data)})
        return written


def write_manifest(out_dir, command, config_text, version, started, outputs, extra=None):
    manifest = {
        "command": command,
        "tool_version": version,
        "config_text": config_text,
        "config_sha256": sha256_bytes(config_text.encode("utf-8")),
        "started": started,
        "finished": utc_now(),
        "outputs": outputs,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "wb") as fh:
        fh.write(json_bytes(manifest))
    return path


def verify_manifest(out_dir):
    """True when every listed output exists and matches its recorded hash."""
    with open(os.path.join(out_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    for entry in manifest["outputs"]:
        path = os.path.join(out_dir, entry["path"])
        if not os.path.exists(path) or sha256_file(path) != entry["sha256"]:
            return False
    return True
