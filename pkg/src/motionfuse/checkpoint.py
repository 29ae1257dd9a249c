"""Checkpoint container and frame image export.

TSVC layout: magic "TSVC", little-endian u32 version, u64 manifest byte
length, a UTF-8 JSON manifest listing [{name, shape, offset}] entries
(offsets into the blob section), then the raw little-endian float32 blobs
in manifest order. Parameter names are "<set>/<param>".

Frames export as binary PGM (P5) for grayscale and PPM (P6) for RGB, with
[-1, 1] mapped to [0, 255] by round-half-up.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import model, ops

_MAGIC = b"TSVC"
_VERSION = 1
_HEAD = struct.Struct("<IQ")


def save_param_sets(path, param_sets: dict[str, ops.ParamSet]):
    entries = []
    blobs = []
    offset = 0
    for sname, ps in param_sets.items():
        for pname, value in ps.items():
            blob = np.ascontiguousarray(value, dtype="<f4").tobytes()
            entries.append(
                {"name": f"{sname}/{pname}", "shape": list(value.shape), "offset": offset}
            )
            blobs.append(blob)
            offset += len(blob)
    manifest = json.dumps(entries, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(_HEAD.pack(_VERSION, len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def load_param_sets(path) -> dict[str, ops.ParamSet]:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a TSVC checkpoint")
    version, mlen = _HEAD.unpack_from(raw, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    start = 4 + _HEAD.size
    manifest = json.loads(raw[start : start + mlen].decode())
    blob_start = start + mlen
    sets: dict[str, ops.ParamSet] = {}
    for entry in manifest:
        sname, pname = entry["name"].split("/", 1)
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        value = np.frombuffer(
            raw, dtype="<f4", count=count, offset=blob_start + entry["offset"]
        ).reshape(shape)
        sets.setdefault(sname, ops.ParamSet()).add(pname, value.copy())
    return sets


def config_sidecar(path) -> Path:
    return Path(str(path) + ".config.json")


def save_model(path, bundle: model.ModelBundle):
    """Checkpoint + JSON config sidecar, enough to rebuild the bundle."""
    save_param_sets(path, bundle.param_sets())
    cfg = bundle.config
    config_sidecar(path).write_text(
        json.dumps(
            {
                "ngf": cfg.ngf,
                "latent_c": cfg.latent_c,
                "latent_m": cfg.latent_m,
                "scales": cfg.scales,
                "kernel_size": cfg.kernel_size,
                "classes": cfg.classes,
                "size": cfg.size,
                "channels": cfg.channels,
            },
            sort_keys=True,
        )
    )


def load_model(path) -> model.ModelBundle:
    sidecar = config_sidecar(path)
    if not sidecar.exists():
        raise ValueError(f"{path}: missing config sidecar {sidecar}")
    cfg = model.ModelConfig(**json.loads(sidecar.read_text()))
    sets = load_param_sets(path)
    expected = {"enc_c", "gen_c", "enc_m", "gen_m", "lstm"}
    if set(sets) != expected:
        raise ValueError(f"{path}: parameter sets {sorted(sets)} != {sorted(expected)}")
    return model.ModelBundle(config=cfg, **sets)


def save_classifier(path, params: ops.ParamSet, cfg: model.ModelConfig):
    save_param_sets(path, {"cls": params})
    config_sidecar(path).write_text(
        json.dumps(
            {
                "ngf": cfg.ngf,
                "latent_c": cfg.latent_c,
                "latent_m": cfg.latent_m,
                "scales": cfg.scales,
                "kernel_size": cfg.kernel_size,
                "classes": cfg.classes,
                "size": cfg.size,
                "channels": cfg.channels,
                "kind": "classifier",
            },
            sort_keys=True,
        )
    )


def load_classifier(path):
    sidecar = config_sidecar(path)
    if not sidecar.exists():
        raise ValueError(f"{path}: missing config sidecar {sidecar}")
    meta = json.loads(sidecar.read_text())
    meta.pop("kind", None)
    cfg = model.ModelConfig(**meta)
    sets = load_param_sets(path)
    if set(sets) != {"cls"}:
        raise ValueError(f"{path}: expected a classifier checkpoint")
    return sets["cls"], cfg


def frame_to_bytes(frame: np.ndarray) -> bytes:
    """One (C, H, W) frame in [-1, 1] -> binary PGM/PPM payload."""
    c, h, w = frame.shape
    levels = np.clip(np.floor((frame + 1.0) * 0.5 * 255.0 + 0.5), 0, 255).astype(np.uint8)
    if c == 1:
        header = f"P5\n{w} {h}\n255\n".encode()
        return header + levels[0].tobytes()
    if c == 3:
        header = f"P6\n{w} {h}\n255\n".encode()
        return header + np.moveaxis(levels, 0, 2).tobytes()
    raise ValueError(f"cannot export frame with {c} channels")


def export_frames(frames: np.ndarray, out_dir, prefix: str = "frame") -> list[Path]:
    """Write every (C, H, W) frame of a clip as frame_000.pgm / .ppm files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = "pgm" if frames.shape[1] == 1 else "ppm"
    paths = []
    for t in range(frames.shape[0]):
        p = out_dir / f"{prefix}_{t:03d}.{ext}"
        p.write_bytes(frame_to_bytes(frames[t]))
        paths.append(p)
    return paths
