"""Guided screening: find tissue on the overview, grid it, walk it.

The pipeline is threshold -> morphological closing -> grid projection.
The overview level is converted to integer luminance, split by an Otsu
threshold (tissue is darker than the white background), closed with a
square structuring element, and a level-0 grid is projected on top.
Grid cells that contain enough tissue form the screening plan, ordered
left to right, top to bottom, so a rater can sweep every relevant field
of view at full zoom without skipping any.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .pyramid import PyramidSlide

DEFAULT_OVERVIEW_DOWNSAMPLE = 32
DEFAULT_SE_RADIUS = 2  # mask px
DEFAULT_CELL_SIZE = 1024  # level-0 px, one viewport at full zoom
DEFAULT_OCCUPANCY_MIN = 0.05

Rect = tuple[int, int, int, int]


@dataclass(frozen=True)
class OtsuResult:
    threshold: int
    degenerate: bool  # all mass in a single bin; no split exists


def otsu_threshold(histogram) -> OtsuResult:
    """Threshold maximizing between-class variance, exact integer arithmetic.

    Pixels with gray < t count as tissue. The split quality
    w0*w1*(mu0-mu1)^2 is compared as the exact rational
    (s0*w1 - s1*w0)^2 / (w0*w1), so ties resolve deterministically to
    the smallest t with no float rounding involved.
    """
    hist = np.asarray(histogram, dtype=np.int64)
    if hist.ndim != 1 or hist.size != 256:
        raise ValueError("histogram must have 256 bins")
    if (hist < 0).any():
        raise ValueError("histogram counts must be non-negative")
    total = int(hist.sum())
    if total == 0:
        raise ValueError("histogram is empty")
    nonzero = np.flatnonzero(hist)
    if nonzero.size == 1:
        return OtsuResult(int(nonzero[0]), True)

    counts = [int(c) for c in hist]
    total_moment = sum(i * c for i, c in enumerate(counts))
    best_t = 0
    best_num, best_den = -1, 1
    w0 = 0
    s0 = 0
    for t in range(256):
        w1 = total - w0
        if w0 > 0 and w1 > 0:
            num = (s0 * w1 - (total_moment - s0) * w0) ** 2
            den = w0 * w1
            if num * best_den > best_num * den:
                best_t, best_num, best_den = t, num, den
        w0 += counts[t]
        s0 += t * counts[t]
    return OtsuResult(best_t, False)


def morphological_close(mask: np.ndarray, se_radius: int) -> np.ndarray:
    """Dilate then erode with a (2r+1)-square element, borders padded false.

    Computed on a padded plane so the result matches the ideal
    infinite-plane closing: extensive (never removes tissue) and
    idempotent.
    """
    if se_radius < 0:
        raise ValueError("se_radius must be >= 0")
    mask = np.asarray(mask, dtype=bool)
    if se_radius == 0:
        return mask.copy()
    r = se_radius
    h, w = mask.shape
    side = 2 * r + 1
    dilated = np.zeros((h + 2 * r, w + 2 * r), dtype=bool)
    for dy in range(side):
        for dx in range(side):
            dilated[dy : dy + h, dx : dx + w] |= mask
    closed = np.ones((h, w), dtype=bool)
    for dy in range(side):
        for dx in range(side):
            closed &= dilated[dy : dy + h, dx : dx + w]
    return closed


def rgb_to_luminance(rgba: np.ndarray) -> np.ndarray:
    """Integer Rec.601 luma: (299 R + 587 G + 114 B) // 1000."""
    rgb = rgba[..., :3].astype(np.int32)
    return (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2]) // 1000


@dataclass
class TissueMask:
    """Binary tissue map at overview resolution (True = tissue)."""

    grid: np.ndarray  # bool, overview-level dimensions
    overview_level: int
    scale: int  # level-0 px per mask px
    level0_width: int
    level0_height: int
    otsu: OtsuResult

    @property
    def tissue_fraction(self) -> float:
        return float(self.grid.mean()) if self.grid.size else 0.0

    def to_image(self) -> Image.Image:
        """Bilevel bitmap, tissue white on black."""
        return Image.fromarray(self.grid.astype(np.uint8) * 255, "L").convert("1")


def compute_tissue_mask(
    slide: PyramidSlide,
    overview_downsample_target: int = DEFAULT_OVERVIEW_DOWNSAMPLE,
    se_radius: int = DEFAULT_SE_RADIUS,
) -> TissueMask:
    """Threshold + close the overview level of an open slide.

    A degenerate histogram (single gray value, e.g. an all-white slide)
    yields an all-false mask.
    """
    level = slide.best_level_for_downsample(overview_downsample_target)
    info = slide.levels[level]
    overview = slide.read_region(level, (0, 0), (info.width, info.height))
    lum = rgb_to_luminance(overview)
    hist = np.bincount(lum.ravel(), minlength=256)
    otsu = otsu_threshold(hist)
    if otsu.degenerate:
        grid = np.zeros(lum.shape, dtype=bool)
    else:
        grid = morphological_close(lum < otsu.threshold, se_radius)
    return TissueMask(
        grid=grid,
        overview_level=level,
        scale=info.downsample,
        level0_width=slide.width,
        level0_height=slide.height,
        otsu=otsu,
    )


@dataclass
class ScreeningPlan:
    """Row-major list of tissue-bearing fields of view plus a cursor."""

    slide_id: int | None
    cell_size: int
    occupancy_min: float
    cells: list[Rect]
    cursor: int = 0

    def to_json_dict(self) -> dict:
        return {
            "cell_size": self.cell_size,
            "occupancy_min": self.occupancy_min,
            "cells": [{"x": x, "y": y, "w": w, "h": h} for x, y, w, h in self.cells],
        }

    def export_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_json_dict(), handle, indent=2)


def build_screening_plan(
    mask: TissueMask,
    cell_size: int = DEFAULT_CELL_SIZE,
    occupancy_min: float = DEFAULT_OCCUPANCY_MIN,
    slide_id: int | None = None,
) -> ScreeningPlan:
    """Project a level-0 grid and keep cells meeting the occupancy rule.

    The grid is anchored at (0,0); edge cells are clipped to the slide
    extent, never dropped. A cell is kept when the fraction of mask
    pixels touching it that are tissue is at least ``occupancy_min``,
    so any occupancy_min <= 1/cell-pixel-count degrades to "one tissue
    pixel suffices". Kept cells are ordered ascending row, then column.
    """
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    if not 0 < occupancy_min <= 1:
        raise ValueError("occupancy_min must be in (0, 1]")
    width, height = mask.level0_width, mask.level0_height
    scale = mask.scale
    grid_h, grid_w = mask.grid.shape
    cells: list[Rect] = []
    n_rows = -(-height // cell_size)
    n_cols = -(-width // cell_size)
    for row in range(n_rows):
        y = row * cell_size
        ch = min(cell_size, height - y)
        my0 = y // scale
        my1 = min(-(-(y + ch) // scale), grid_h)
        for col in range(n_cols):
            x = col * cell_size
            cw = min(cell_size, width - x)
            mx0 = x // scale
            mx1 = min(-(-(x + cw) // scale), grid_w)
            window = mask.grid[my0:my1, mx0:mx1]
            if window.size and float(window.mean()) >= occupancy_min:
                cells.append((x, y, cw, ch))
    return ScreeningPlan(
        slide_id=slide_id, cell_size=cell_size, occupancy_min=occupancy_min, cells=cells
    )


def navigate(plan: ScreeningPlan, direction: str) -> Rect | None:
    """Move the cursor and return the now-current field of view.

    ``next`` advances and returns the newly issued cell, or None once
    the plan is exhausted. ``prev`` steps back (saturating at the
    start). ``current`` re-reads without moving. None from ``prev`` or
    ``current`` means nothing has been issued yet.
    """
    n = len(plan.cells)
    if direction == "next":
        if plan.cursor >= n:
            return None
        cell = plan.cells[plan.cursor]
        plan.cursor += 1
        return cell
    if direction == "prev":
        plan.cursor = max(plan.cursor - 1, 0)
        return plan.cells[plan.cursor - 1] if plan.cursor > 0 else None
    if direction == "current":
        return plan.cells[plan.cursor - 1] if plan.cursor > 0 else None
    raise ValueError(f"direction must be next/prev/current, got {direction!r}")


def progress(plan: ScreeningPlan) -> float:
    """Fraction of the plan issued; an empty plan is vacuously complete."""
    if not plan.cells:
        return 1.0
    return plan.cursor / len(plan.cells)
