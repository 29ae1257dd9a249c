"""Procedural generator of labeled shape-motion video clips.

Each clip shows one anti-aliased shape (rectangle, disc, triangle or cross)
over a flat or gradient background, animated by one of eight parametric
motion classes. Everything — shape, background, motion parameters — derives
from a single 64-bit seed, so clips and whole datasets are bit-reproducible.

Frames are float32 in [-1, 1], rendered at 4x supersampling and average-
pooled, which keeps sub-pixel motion smooth. Datasets are stored in the SMV1
container (see `write_dataset`) with a JSON manifest sidecar.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import SeededRng, split_seed

SUPERSAMPLE = 4

MOTION_CLASSES = (
    "translate-horizontal",
    "rotate",
    "static",
    "small-jitter",
    "translate-vertical",
    "diagonal",
    "scale-oscillate",
    "parabolic-bounce",
)

SHAPE_NAMES = ("rectangle", "disc", "triangle", "cross")

# ids: 0-2 flat levels, 3 horizontal ramp, 4 vertical ramp, 5 diagonal ramp
BACKGROUND_COUNT = 6

_MAGIC = b"SMV1"
_HEADER = struct.Struct("<7I")
_CLIP_HEADER = struct.Struct("<HQ")


@dataclass(frozen=True)
class ClipSpec:
    frames: int = 10
    size: int = 32
    channels: int = 1

    def __post_init__(self):
        if self.frames < 2:
            raise ValueError(f"need at least 2 frames, got {self.frames}")
        if self.size < 16 or self.size % 2:
            raise ValueError(f"frame size must be even and >= 16, got {self.size}")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")


@dataclass
class VideoClip:
    frames: np.ndarray  # (T, C, H, W) float32 in [-1, 1]
    action: int
    action_name: str
    shape_id: int
    background_id: int
    seed: int


def class_names(classes) -> list[str]:
    """Resolve an int (first K of the registry) or an explicit name list."""
    if isinstance(classes, int):
        if not 1 <= classes <= len(MOTION_CLASSES):
            raise ValueError(f"class count must be in 1..{len(MOTION_CLASSES)}")
        return list(MOTION_CLASSES[:classes])
    names = list(classes)
    for name in names:
        if name not in MOTION_CLASSES:
            raise ValueError(f"unknown motion class {name!r}")
    return names


def _supergrid(size: int):
    coords = (np.arange(size * SUPERSAMPLE, dtype=np.float64) + 0.5) / SUPERSAMPLE
    return np.meshgrid(coords, coords, indexing="ij")  # (y, x) in pixel units


def _shape_coverage(shape_id, cx, cy, half, aspect, angle, scl, size):
    yy, xx = _supergrid(size)
    dx, dy = xx - cx, yy - cy
    ca, sa = np.cos(-angle), np.sin(-angle)
    xr = (dx * ca - dy * sa) / scl
    yr = (dx * sa + dy * ca) / scl
    name = SHAPE_NAMES[shape_id]
    if name == "rectangle":
        inside = (np.abs(xr) <= half) & (np.abs(yr) <= half * aspect)
    elif name == "disc":
        inside = xr * xr + yr * yr <= half * half
    elif name == "triangle":
        # equilateral, apex up, circumradius `half`
        top = yr >= -half
        left = (np.sqrt(3.0) * xr + yr) <= half
        right = (-np.sqrt(3.0) * xr + yr) <= half
        inside = top & left & right
    else:  # cross
        arm = half * 0.38
        inside = ((np.abs(xr) <= arm) & (np.abs(yr) <= half)) | (
            (np.abs(yr) <= arm) & (np.abs(xr) <= half)
        )
    cov = inside.astype(np.float64)
    ss = SUPERSAMPLE
    return cov.reshape(size, ss, size, ss).mean(axis=(1, 3))


# fixed palette per background id: three flat levels and three ramps
def _background(background_id, size):
    yy, xx = np.meshgrid(
        np.linspace(0.0, 1.0, size), np.linspace(0.0, 1.0, size), indexing="ij"
    )
    if background_id == 0:
        return np.full((size, size), -0.75)
    if background_id == 1:
        return np.full((size, size), -0.5)
    if background_id == 2:
        return np.full((size, size), -0.25)
    if background_id == 3:
        return -0.55 + 0.4 * (xx - 0.5)
    if background_id == 4:
        return -0.55 + 0.4 * (yy - 0.5)
    return -0.55 + 0.4 * (xx + yy - 1.0) * 0.5


def _signed(rng, lo, hi):
    mag = lo + rng.uniforms() * (hi - lo)
    return mag if rng.uniforms() < 0.5 else -mag


def _motion_track(name, rng, spec, half, overrides):
    """Per-frame (cx, cy, angle, scale) arrays for one motion class."""
    t_idx = np.arange(spec.frames, dtype=np.float64)
    size = spec.size
    margin = 1.5
    zeros = np.zeros(spec.frames)
    ones = np.ones(spec.frames)
    overrides = overrides or {}

    def pick(key, draw):
        return float(overrides[key]) if key in overrides else float(draw())

    def start_inside(travel_x=0.0, travel_y=0.0, pad=0.0):
        reach = margin + half + pad
        lo_x = reach + max(0.0, -travel_x)
        hi_x = size - reach - max(0.0, travel_x)
        lo_y = reach + max(0.0, -travel_y)
        hi_y = size - reach - max(0.0, travel_y)
        if lo_x > hi_x or lo_y > hi_y:
            raise ValueError(
                f"shape of half-extent {half:.1f} too large for {size}px frame "
                f"(travel {travel_x:.1f}, {travel_y:.1f})"
            )
        cx = lo_x + rng.uniforms() * (hi_x - lo_x)
        cy = lo_y + rng.uniforms() * (hi_y - lo_y)
        return cx, cy

    if name == "translate-horizontal":
        vx = pick("vx", lambda: _signed(rng, 1.0, 1.5))
        cx, cy = start_inside(travel_x=vx * (spec.frames - 1))
        return cx + vx * t_idx, cy + zeros, zeros, ones
    if name == "translate-vertical":
        vy = pick("vy", lambda: _signed(rng, 1.0, 1.5))
        cx, cy = start_inside(travel_y=vy * (spec.frames - 1))
        return cx + zeros, cy + vy * t_idx, zeros, ones
    if name == "diagonal":
        vx = pick("vx", lambda: _signed(rng, 0.7, 1.1))
        vy = pick("vy", lambda: _signed(rng, 0.7, 1.1))
        cx, cy = start_inside(vx * (spec.frames - 1), vy * (spec.frames - 1))
        return cx + vx * t_idx, cy + vy * t_idx, zeros, ones
    if name == "rotate":
        omega = pick("omega", lambda: _signed(rng, np.deg2rad(6.0), np.deg2rad(10.0)))
        phase = rng.uniforms() * 2 * np.pi
        cx, cy = start_inside()
        return cx + zeros, cy + zeros, phase + omega * t_idx, ones
    if name == "static":
        cx, cy = start_inside()
        return cx + zeros, cy + zeros, zeros, ones
    if name == "small-jitter":
        amp = pick("amplitude", lambda: 0.45 + rng.uniforms() * 0.3)
        cx, cy = start_inside(pad=amp)
        jx = (rng.uniforms((spec.frames,)) * 2.0 - 1.0) * amp
        jy = (rng.uniforms((spec.frames,)) * 2.0 - 1.0) * amp
        return cx + jx, cy + jy, zeros, ones
    if name == "scale-oscillate":
        amp = pick("amplitude", lambda: 0.12 + rng.uniforms() * 0.1)
        period = 6.0 + rng.uniforms() * 6.0
        phase = rng.uniforms() * 2 * np.pi
        cx, cy = start_inside(pad=half * amp)
        scl = 1.0 + amp * np.sin(2 * np.pi * t_idx / period + phase)
        return cx + zeros, cy + zeros, zeros, scl
    if name == "parabolic-bounce":
        period = 6.0 + rng.uniforms() * 3.0
        bounce = pick("height", lambda: 2.5 + rng.uniforms() * 2.5)
        vx = pick("vx", lambda: _signed(rng, 0.3, 0.6))
        cx, cy = start_inside(travel_x=vx * (spec.frames - 1), travel_y=-bounce)
        tau = (t_idx % period) / period
        arc = 4.0 * tau * (1.0 - tau) * bounce
        return cx + vx * t_idx, cy - arc, zeros, ones
    raise ValueError(f"unknown motion class {name!r}")


def gen_clip(
    action,
    seed: int,
    spec: ClipSpec = ClipSpec(),
    shape_id=None,
    background_id=None,
    motion_params=None,
) -> VideoClip:
    """Render one clip, fully determined by (action, seed, spec).

    `shape_id`, `background_id` and `motion_params` override the seed-drawn
    choices; they exist for targeted tests and demos.
    """
    if isinstance(action, str):
        if action not in MOTION_CLASSES:
            raise ValueError(f"unknown motion class {action!r}")
        name, action_idx = action, MOTION_CLASSES.index(action)
    else:
        action_idx = int(action)
        if not 0 <= action_idx < len(MOTION_CLASSES):
            raise ValueError(f"action index {action_idx} out of range")
        name = MOTION_CLASSES[action_idx]

    rng = SeededRng(seed)
    shape = int(shape_id) if shape_id is not None else rng.integers(0, len(SHAPE_NAMES))
    bg_id = (
        int(background_id) if background_id is not None else rng.integers(0, BACKGROUND_COUNT)
    )
    # appearance factors come from small fixed palettes so held-out clips
    # recombine values already seen in training rather than novel ones
    half = spec.size * (0.16 + 0.03 * rng.integers(0, 3))
    aspect = (0.75, 1.0, 1.25)[rng.integers(0, 3)]
    fg = (0.5, 0.7, 0.9)[rng.integers(0, 3)]

    cxs, cys, angles, scales = _motion_track(name, rng, spec, half, motion_params)
    bg = _background(bg_id, spec.size)

    frames = np.empty((spec.frames, spec.channels, spec.size, spec.size), dtype=np.float32)
    if spec.channels == 3:
        fg_rgb = np.clip(fg + (rng.uniforms((3,)) - 0.5) * 0.2, -1.0, 1.0)
    for t in range(spec.frames):
        cov = _shape_coverage(
            shape, cxs[t], cys[t], half, aspect, angles[t], scales[t], spec.size
        )
        if spec.channels == 1:
            frames[t, 0] = bg * (1.0 - cov) + fg * cov
        else:
            for ch in range(3):
                frames[t, ch] = bg * (1.0 - cov) + fg_rgb[ch] * cov
    np.clip(frames, -1.0, 1.0, out=frames)
    return VideoClip(
        frames=frames,
        action=action_idx,
        action_name=name,
        shape_id=shape,
        background_id=bg_id,
        seed=seed,
    )


def difference_map(clip, t: int) -> np.ndarray:
    """Forward difference frames[t] - frames[t-1] for 1 <= t < T.

    Computed in float64, where the difference of two float32 frames is
    exact, so frames[t-1] + difference_map(clip, t) reproduces frames[t].
    """
    frames = clip.frames if isinstance(clip, VideoClip) else clip
    if not 1 <= t < frames.shape[0]:
        raise ValueError(f"t must be in [1, {frames.shape[0]}), got {t}")
    return frames[t].astype(np.float64) - frames[t - 1].astype(np.float64)


@dataclass
class Dataset:
    clips: np.ndarray  # (N, T, C, H, W) float32
    labels: np.ndarray  # (N,) int
    seeds: np.ndarray  # (N,) uint64
    classes: list[str]
    train_ids: list[int]
    test_ids: list[int]

    @property
    def spec(self) -> ClipSpec:
        _, t, c, h, _ = self.clips.shape
        return ClipSpec(frames=t, size=h, channels=c)


def manifest_path(path) -> Path:
    return Path(str(path) + ".manifest.json")


def gen_dataset(classes, clips_per_class: int, master_seed: int, spec: ClipSpec, path) -> dict:
    """Generate a balanced dataset, write the SMV1 file + manifest, return the manifest.

    Clip ids run class-major; each clip's seed is `split_seed(master_seed, id)`.
    The train/test split is 80/20 within every class, by clip id.
    """
    names = class_names(classes)
    if clips_per_class < 1:
        raise ValueError("need at least one clip per class")
    clips, labels, seeds = [], [], []
    train_ids, test_ids = [], []
    n_train = int(round(clips_per_class * 0.8))
    for ci, name in enumerate(names):
        for j in range(clips_per_class):
            clip_id = ci * clips_per_class + j
            seed = split_seed(master_seed, clip_id)
            clip = gen_clip(name, seed, spec)
            clips.append(clip.frames)
            labels.append(ci)
            seeds.append(seed)
            (train_ids if j < n_train else test_ids).append(clip_id)
    data = np.stack(clips)
    manifest = {
        "classes": names,
        "clips": [
            {"id": i, "action": int(labels[i]), "seed": int(seeds[i])}
            for i in range(len(labels))
        ],
        "split": {"train": train_ids, "test": test_ids},
    }
    write_dataset(path, data, np.asarray(labels), np.asarray(seeds, dtype=np.uint64))
    manifest_path(path).write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return manifest


def write_dataset(path, clips: np.ndarray, labels, seeds):
    """SMV1 container: magic, 7 LE u32 header fields, then per clip a u16
    label, u64 seed and T*C*H*W LE f32 values in (frame, channel, row) order."""
    n, t, c, h, w = clips.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(_HEADER.pack(1, n, t, c, h, w, 0))
        for i in range(n):
            fh.write(_CLIP_HEADER.pack(int(labels[i]), int(seeds[i])))
            fh.write(np.ascontiguousarray(clips[i], dtype="<f4").tobytes())


def load_dataset(path) -> Dataset:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not an SMV1 container")
    version, n, t, c, h, w, dtype = _HEADER.unpack_from(raw, 4)
    if version != 1 or dtype != 0:
        raise ValueError(f"{path}: unsupported SMV1 version {version} / dtype {dtype}")
    clips = np.empty((n, t, c, h, w), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    seeds = np.empty(n, dtype=np.uint64)
    offset = 4 + _HEADER.size
    frame_bytes = t * c * h * w * 4
    for i in range(n):
        labels[i], seeds[i] = _CLIP_HEADER.unpack_from(raw, offset)
        offset += _CLIP_HEADER.size
        clips[i] = np.frombuffer(raw, dtype="<f4", count=t * c * h * w, offset=offset).reshape(
            t, c, h, w
        )
        offset += frame_bytes
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes ({len(raw) - offset})")

    mpath = manifest_path(path)
    if mpath.exists():
        manifest = json.loads(mpath.read_text())
        classes = manifest["classes"]
        train_ids = list(manifest["split"]["train"])
        test_ids = list(manifest["split"]["test"])
    else:
        classes = [MOTION_CLASSES[i] for i in sorted(set(labels.tolist()))]
        train_ids, test_ids = list(range(n)), []
    return Dataset(
        clips=clips,
        labels=labels,
        seeds=seeds,
        classes=classes,
        train_ids=train_ids,
        test_ids=test_ids,
    )
