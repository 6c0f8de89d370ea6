"""Portable multi-resolution slide container.

A slide is a directory holding ``manifest.json`` plus lossless RGBA PNG
tiles under ``tiles/L{level}/{col}_{row}.png``. Level 0 is full
resolution; every further level halves it (downsamples are powers of
two) until the whole image fits in a single tile. Reduced levels are
integer 2^k box filters of level 0, so a brute-force block average
reproduces them exactly.

Synthetic slides (white background, elliptical tissue blobs, small
cell dots) can be generated together with a ``truth.json`` sidecar for
testing the downstream mask/screening pipeline without vendor files.
"""

from __future__ import annotations

import json
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

MANIFEST_NAME = "manifest.json"
TRUTH_NAME = "truth.json"
CONTAINER_VERSION = 1
DEFAULT_TILE_SIZE = 256
DEFAULT_TILE_CACHE_CAPACITY = 512

WHITE = (255, 255, 255)


class PyramidError(Exception):
    """Base class for slide container problems."""


class FormatError(PyramidError):
    """Container is missing pieces or they cannot be parsed."""


class GeometryError(PyramidError):
    """Manifest geometry violates the container invariants."""


class LevelError(PyramidError):
    """Requested pyramid level does not exist."""


@dataclass(frozen=True)
class LevelInfo:
    """Geometry of one pyramid level."""

    downsample: int  # level-0 px per level px, power of two
    width: int
    height: int
    cols: int
    rows: int


class TileCache:
    """Fixed-capacity LRU cache for decoded tiles, safe across threads."""

    def __init__(self, capacity: int = DEFAULT_TILE_CACHE_CAPACITY):
        self.capacity = int(capacity)
        self._tiles: OrderedDict[tuple[int, int, int], np.ndarray] = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key: tuple[int, int, int]) -> np.ndarray | None:
        with self._lock:
            tile = self._tiles.get(key)
            if tile is not None:
                self._tiles.move_to_end(key)
            return tile

    def put(self, key: tuple[int, int, int], tile: np.ndarray) -> None:
        with self._lock:
            self._tiles[key] = tile
            self._tiles.move_to_end(key)
            while len(self._tiles) > self.capacity:
                self._tiles.popitem(last=False)

    def __len__(self) -> int:
        with self._lock:
            return len(self._tiles)


def plan_levels(width: int, height: int, tile_size: int) -> list[LevelInfo]:
    """Level geometry for an image: halve until one tile holds everything."""
    levels = []
    downsample = 1
    while True:
        lw = -(-width // downsample)
        lh = -(-height // downsample)
        levels.append(
            LevelInfo(
                downsample=downsample,
                width=lw,
                height=lh,
                cols=-(-lw // tile_size),
                rows=-(-lh // tile_size),
            )
        )
        if lw <= tile_size and lh <= tile_size:
            return levels
        downsample *= 2


class PyramidSlide:
    """Open handle on a slide container; reads tiles lazily.

    Concurrent reads are safe: decoded tiles go through an internally
    locked LRU cache and nothing else is mutated after construction.
    """

    def __init__(self, path, cache_capacity: int = DEFAULT_TILE_CACHE_CAPACITY):
        self.path = Path(path)
        manifest_path = self.path / MANIFEST_NAME
        if not manifest_path.is_file():
            raise FormatError(f"no {MANIFEST_NAME} in {self.path}")
        try:
            manifest = json.loads(manifest_path.read_text("utf-8"))
        except (OSError, ValueError) as exc:
            raise FormatError(f"unreadable manifest: {exc}") from exc
        self._load_manifest(manifest)
        self._cache = TileCache(cache_capacity)

    def _load_manifest(self, manifest) -> None:
        try:
            version = manifest["version"]
            self.width = int(manifest["width"])
            self.height = int(manifest["height"])
            self.tile_size = int(manifest["tile_size"])
            raw_levels = manifest["levels"]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"manifest missing fields: {exc}") from exc
        if version != CONTAINER_VERSION:
            raise FormatError(f"unsupported container version {version!r}")
        if self.width <= 0 or self.height <= 0 or self.tile_size <= 0:
            raise GeometryError("width, height and tile_size must be positive")
        if not raw_levels:
            raise GeometryError("manifest declares no levels")

        levels = []
        for entry in raw_levels:
            ds = entry["downsample"]
            if ds != int(ds) or int(ds) < 1 or int(ds) & (int(ds) - 1):
                raise GeometryError(f"downsample {ds} is not a power of 2")
            levels.append(
                LevelInfo(
                    downsample=int(ds),
                    width=int(entry["width"]),
                    height=int(entry["height"]),
                    cols=int(entry["cols"]),
                    rows=int(entry["rows"]),
                )
            )
        if levels[0].downsample != 1:
            raise GeometryError("level 0 must have downsample 1")
        for prev, cur in zip(levels, levels[1:]):
            if cur.downsample <= prev.downsample:
                raise GeometryError("downsamples must be strictly increasing")
        for info in levels:
            if info.width != -(-self.width // info.downsample) or info.height != -(
                -self.height // info.downsample
            ):
                raise GeometryError(
                    f"level {info.downsample}x dimensions inconsistent with slide extent"
                )
            if info.cols * self.tile_size < info.width or info.rows * self.tile_size < info.height:
                raise GeometryError(f"level {info.downsample}x tile grid too small")
        self.levels = levels

    @property
    def dimensions(self) -> tuple[int, int]:
        return self.width, self.height

    def best_level_for_downsample(self, target: float) -> int:
        """Highest-resolution level whose downsample does not exceed target."""
        best = 0
        for i, info in enumerate(self.levels):
            if info.downsample <= target:
                best = i
        return best

    def _tile(self, level: int, col: int, row: int) -> np.ndarray:
        key = (level, col, row)
        tile = self._cache.get(key)
        if tile is not None:
            return tile
        tile_path = self.path / "tiles" / f"L{level}" / f"{col}_{row}.png"
        try:
            with Image.open(tile_path) as img:
                tile = np.asarray(img.convert("RGBA"))
        except OSError as exc:
            raise FormatError(f"missing or corrupt tile {tile_path}") from exc
        if tile.shape != (self.tile_size, self.tile_size, 4):
            raise FormatError(f"tile {tile_path} has wrong shape {tile.shape}")
        tile.setflags(write=False)
        self._cache.put(key, tile)
        return tile

    def read_region(
        self, level: int, origin: tuple[int, int], size: tuple[int, int]
    ) -> np.ndarray:
        """Decode an arbitrary region, stitched seamlessly from tiles.

        Parameters
        ----------
        level : int
            Pyramid level to read from.
        origin : (x, y)
            Top-left corner in level-0 pixels (may be negative or
            beyond the extent).
        size : (w, h)
            Output size in level pixels.

        Returns
        -------
        numpy.ndarray
            (h, w, 4) uint8 RGBA buffer. Anything outside the slide
            extent is opaque white.
        """
        if not 0 <= level < len(self.levels):
            raise LevelError(f"level {level} out of range 0..{len(self.levels) - 1}")
        w, h = int(size[0]), int(size[1])
        if w <= 0 or h <= 0:
            raise ValueError("region size must be positive")
        info = self.levels[level]
        lx = int(origin[0]) // info.downsample
        ly = int(origin[1]) // info.downsample

        out = np.full((h, w, 4), 255, dtype=np.uint8)
        vx0, vy0 = max(lx, 0), max(ly, 0)
        vx1, vy1 = min(lx + w, info.width), min(ly + h, info.height)
        if vx0 >= vx1 or vy0 >= vy1:
            return out

        ts = self.tile_size
        for row in range(vy0 // ts, (vy1 - 1) // ts + 1):
            for col in range(vx0 // ts, (vx1 - 1) // ts + 1):
                tile = self._tile(level, col, row)
                tx0, ty0 = max(vx0, col * ts), max(vy0, row * ts)
                tx1, ty1 = min(vx1, (col + 1) * ts), min(vy1, (row + 1) * ts)
                out[ty0 - ly : ty1 - ly, tx0 - lx : tx1 - lx] = tile[
                    ty0 - row * ts : ty1 - row * ts, tx0 - col * ts : tx1 - col * ts
                ]
        return out


def open_slide(path, cache_capacity: int = DEFAULT_TILE_CACHE_CAPACITY) -> PyramidSlide:
    """Open a slide container directory without loading any pixels."""
    return PyramidSlide(path, cache_capacity=cache_capacity)


def box_downsample(level0: np.ndarray, downsample: int) -> np.ndarray:
    """Integer box filter straight from level 0.

    Each output pixel is the floored mean of its downsample-by-downsample
    block, clipped at the image edge; this is the exact content of the
    stored reduced levels.
    """
    if downsample == 1:
        return level0.copy()
    h, w = level0.shape[:2]
    row_idx = np.arange(0, h, downsample)
    col_idx = np.arange(0, w, downsample)
    sums = np.add.reduceat(
        np.add.reduceat(level0.astype(np.int64), row_idx, axis=0), col_idx, axis=1
    )
    row_counts = np.minimum(row_idx + downsample, h) - row_idx
    col_counts = np.minimum(col_idx + downsample, w) - col_idx
    counts = row_counts[:, None] * col_counts[None, :]
    return (sums // counts[..., None]).astype(np.uint8)


def write_container(level0: np.ndarray, tile_size: int, out_dir) -> PyramidSlide:
    """Write a level-0 RGBA raster out as a full pyramid container."""
    if level0.ndim != 3 or level0.shape[2] != 4 or level0.dtype != np.uint8:
        raise ValueError("level0 must be an (h, w, 4) uint8 array")
    out_dir = Path(out_dir)
    height, width = level0.shape[:2]
    levels = plan_levels(width, height, tile_size)

    out_dir.mkdir(parents=True, exist_ok=True)
    for idx, info in enumerate(levels):
        arr = box_downsample(level0, info.downsample)
        padded = np.full((info.rows * tile_size, info.cols * tile_size, 4), 255, np.uint8)
        padded[: info.height, : info.width] = arr
        level_dir = out_dir / "tiles" / f"L{idx}"
        level_dir.mkdir(parents=True, exist_ok=True)
        for row in range(info.rows):
            for col in range(info.cols):
                tile = padded[
                    row * tile_size : (row + 1) * tile_size,
                    col * tile_size : (col + 1) * tile_size,
                ]
                Image.fromarray(tile, "RGBA").save(level_dir / f"{col}_{row}.png")

    manifest = {
        "version": CONTAINER_VERSION,
        "width": width,
        "height": height,
        "tile_size": tile_size,
        "levels": [
            {
                "downsample": info.downsample,
                "width": info.width,
                "height": info.height,
                "cols": info.cols,
                "rows": info.rows,
            }
            for info in levels
        ],
    }
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n", "utf-8")
    return PyramidSlide(out_dir)


# --- Synthetic slides -------------------------------------------------------


@dataclass(frozen=True)
class Blob:
    """Axis-aligned elliptical tissue patch."""

    cx: int
    cy: int
    rx: int
    ry: int
    color: tuple[int, int, int]


@dataclass(frozen=True)
class Dot:
    """Small dark disk standing in for a cell."""

    cx: int
    cy: int
    r: int


@dataclass
class SyntheticSpec:
    """Fully deterministic recipe for a synthetic slide."""

    width: int
    height: int
    tile_size: int = DEFAULT_TILE_SIZE
    seed: int = 0
    background: tuple[int, int, int] = WHITE
    dot_color: tuple[int, int, int] = (80, 50, 140)
    noise: int = 0  # +/- per-channel speckle inside blobs
    blobs: list[Blob] = field(default_factory=list)
    dots: list[Dot] = field(default_factory=list)

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0 or self.tile_size <= 0:
            raise ValueError("width, height and tile_size must be positive")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        for blob in self.blobs:
            if blob.rx <= 0 or blob.ry <= 0:
                raise ValueError(f"blob radii must be positive: {blob}")
            if (
                blob.cx - blob.rx < 0
                or blob.cy - blob.ry < 0
                or blob.cx + blob.rx >= self.width
                or blob.cy + blob.ry >= self.height
            ):
                raise ValueError(f"blob out of bounds: {blob}")
        for dot in self.dots:
            if dot.r <= 0:
                raise ValueError(f"dot radius must be positive: {dot}")
            if (
                dot.cx - dot.r < 0
                or dot.cy - dot.r < 0
                or dot.cx + dot.r >= self.width
                or dot.cy + dot.r >= self.height
            ):
                raise ValueError(f"dot out of bounds: {dot}")

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "tile_size": self.tile_size,
            "seed": self.seed,
            "background": list(self.background),
            "dot_color": list(self.dot_color),
            "noise": self.noise,
            "blobs": [
                {"cx": b.cx, "cy": b.cy, "rx": b.rx, "ry": b.ry, "color": list(b.color)}
                for b in self.blobs
            ],
            "dots": [{"cx": d.cx, "cy": d.cy, "r": d.r} for d in self.dots],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        try:
            spec = cls(
                width=int(data["width"]),
                height=int(data["height"]),
                tile_size=int(data.get("tile_size", DEFAULT_TILE_SIZE)),
                seed=int(data.get("seed", 0)),
                background=tuple(data.get("background", WHITE)),
                dot_color=tuple(data.get("dot_color", (80, 50, 140))),
                noise=int(data.get("noise", 0)),
                blobs=[
                    Blob(int(b["cx"]), int(b["cy"]), int(b["rx"]), int(b["ry"]), tuple(b["color"]))
                    for b in data.get("blobs", [])
                ],
                dots=[Dot(int(d["cx"]), int(d["cy"]), int(d["r"])) for d in data.get("dots", [])],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"bad synthetic spec: {exc}") from exc
        spec.validate()
        return spec


def render_level0(spec: SyntheticSpec) -> np.ndarray:
    """Rasterize a spec to its full-resolution RGBA array."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    img = np.empty((spec.height, spec.width, 3), dtype=np.uint8)
    img[:] = spec.background

    for blob in spec.blobs:
        x0, x1 = blob.cx - blob.rx, blob.cx + blob.rx + 1
        y0, y1 = blob.cy - blob.ry, blob.cy + blob.ry + 1
        ys, xs = np.ogrid[y0:y1, x0:x1]
        inside = ((xs - blob.cx) / blob.rx) ** 2 + ((ys - blob.cy) / blob.ry) ** 2 <= 1.0
        patch = img[y0:y1, x0:x1]
        if spec.noise:
            speckle = rng.integers(
                -spec.noise, spec.noise + 1, size=patch.shape, dtype=np.int16
            )
            shaded = np.clip(np.asarray(blob.color, np.int16) + speckle, 0, 255)
            patch[inside] = shaded[inside].astype(np.uint8)
        else:
            patch[inside] = blob.color

    for dot in spec.dots:
        x0, x1 = dot.cx - dot.r, dot.cx + dot.r + 1
        y0, y1 = dot.cy - dot.r, dot.cy + dot.r + 1
        ys, xs = np.ogrid[y0:y1, x0:x1]
        inside = (xs - dot.cx) ** 2 + (ys - dot.cy) ** 2 <= dot.r**2
        img[y0:y1, x0:x1][inside] = spec.dot_color

    rgba = np.empty((spec.height, spec.width, 4), dtype=np.uint8)
    rgba[..., :3] = img
    rgba[..., 3] = 255
    return rgba


def generate_synthetic_slide(spec: SyntheticSpec, out_dir) -> dict:
    """Render a spec into a container plus a ground-truth sidecar.

    Returns the sidecar dict (blob/dot geometry in level-0 coordinates),
    which is also written to ``truth.json`` inside the container.
    """
    out_dir = Path(out_dir)
    level0 = render_level0(spec)
    write_container(level0, spec.tile_size, out_dir)
    truth = spec.to_dict()
    (out_dir / TRUTH_NAME).write_text(json.dumps(truth, indent=2) + "\n", "utf-8")
    return truth


def load_truth(slide_dir) -> dict:
    """Read the ground-truth sidecar of a synthetic slide."""
    truth_path = Path(slide_dir) / TRUTH_NAME
    if not truth_path.is_file():
        raise FormatError(f"no {TRUTH_NAME} in {slide_dir}")
    return json.loads(truth_path.read_text("utf-8"))


# Palette of plausible stain tones: clearly darker than the white
# background so the overview threshold separates them.
_TISSUE_TONES = [
    (225, 170, 200),
    (205, 150, 190),
    (190, 140, 170),
    (230, 185, 185),
    (200, 160, 210),
]


def random_synthetic_spec(
    seed: int,
    width: int = 1024,
    height: int = 1024,
    tile_size: int = DEFAULT_TILE_SIZE,
    n_blobs: int = 3,
    n_dots: int = 20,
    noise: int = 6,
) -> SyntheticSpec:
    """Seeded random spec; dots are placed inside blobs, like cells in tissue."""
    rng = np.random.default_rng(seed)
    blobs = []
    for _ in range(n_blobs):
        rx = int(rng.integers(width // 16, max(width // 6, width // 16 + 1)))
        ry = int(rng.integers(height // 16, max(height // 6, height // 16 + 1)))
        cx = int(rng.integers(rx, width - rx))
        cy = int(rng.integers(ry, height - ry))
        color = _TISSUE_TONES[int(rng.integers(len(_TISSUE_TONES)))]
        blobs.append(Blob(cx, cy, rx, ry, color))
    dots = []
    if blobs:
        for _ in range(n_dots):
            blob = blobs[int(rng.integers(len(blobs)))]
            r = int(rng.integers(3, 8))
            # rejection-free placement: sample inside the inscribed box
            half_w = max(int(blob.rx / math.sqrt(2)) - r - 1, 1)
            half_h = max(int(blob.ry / math.sqrt(2)) - r - 1, 1)
            cx = blob.cx + int(rng.integers(-half_w, half_w + 1))
            cy = blob.cy + int(rng.integers(-half_h, half_h + 1))
            dots.append(Dot(cx, cy, r))
    return SyntheticSpec(
        width=width,
        height=height,
        tile_size=tile_size,
        seed=seed,
        noise=noise,
        blobs=blobs,
        dots=dots,
    )
