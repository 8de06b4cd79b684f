"""
Color-polarization filter array (CPFA) sampling and interpolation demosaicing.

The default tile is a 2x2 Bayer arrangement (R G / G B) of 2x2 polarizer
blocks (90 45 / 135 0)::

    90:r  45:r  90:g  45:g
   135:r   0:r 135:g   0:g
    90:g  45:g  90:b  45:b
   135:g   0:g 135:b   0:b
"""
import json
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .core import ANGLES, CHANNELS, as_plane, as_stack

TILE = 4


@dataclass(frozen=True)
class CpfaPattern:
    # 16 (angle, channel) cells, row-major over the 4x4 tile
    cells: tuple

    def __post_init__(self):
        cells = tuple((int(a), str(c)) for a, c in self.cells)
        if len(cells) != TILE * TILE:
            raise ValueError(f"pattern needs {TILE * TILE} cells, got {len(cells)}")
        for a, c in cells:
            if a not in ANGLES or c not in CHANNELS:
                raise ValueError(f"invalid pattern cell {a}:{c}")
        for a in ANGLES:
            if sum(1 for cell in cells if cell[0] == a) != 4:
                raise ValueError(f"angle {a} must appear exactly 4 times per tile")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def default(cls):
        pol = ((90, 45), (135, 0))
        bayer = (("r", "g"), ("g", "b"))
        return cls(tuple((pol[y % 2][x % 2], bayer[y // 2][x // 2])
                         for y in range(TILE) for x in range(TILE)))

    def cell(self, y, x):
        return self.cells[(y % TILE) * TILE + (x % TILE)]

    def angle_offset(self, angle):
        """(dy, dx) of the 2x2 sub-lattice carrying ``angle``."""
        pos = {(y % 2, x % 2) for y in range(TILE) for x in range(TILE)
               if self.cell(y, x)[0] == angle}
        if len(pos) != 1:
            raise ValueError(f"angle {angle} does not sit on a single 2x2 sub-lattice")
        return pos.pop()

    def to_strings(self):
        return [f"{a}:{c}" for a, c in self.cells]

    @classmethod
    def from_strings(cls, items):
        cells = []
        for item in items:
            a, c = str(item).split(":")
            cells.append((int(a), c))
        return cls(tuple(cells))

    def to_json(self):
        return json.dumps(self.to_strings())

    @classmethod
    def from_json(cls, text):
        return cls.from_strings(json.loads(text))


@dataclass(frozen=True)
class CpfaRaw:
    plane: np.ndarray
    pattern: CpfaPattern

    def __post_init__(self):
        plane = as_plane(self.plane)
        _check_tiles(*plane.shape)
        object.__setattr__(self, "plane", plane)

    @property
    def shape(self):
        return self.plane.shape


@dataclass(frozen=True)
class Bayer:
    """Channel at each of the four positions of a 2x2 CFA period."""
    layout: tuple  # ((c00, c01), (c10, c11))

    def channel_mask(self, channel, h, w):
        m = np.zeros((h, w), dtype=bool)
        for dy in range(2):
            for dx in range(2):
                if self.layout[dy][dx] == channel:
                    m[dy::2, dx::2] = True
        return m

    def __str__(self):
        return "".join(c for row in self.layout for c in row).upper()


def _check_tiles(h, w):
    if h % TILE or w % TILE:
        raise ValueError(f"dims {h}x{w} not divisible by {TILE}")


def build_masks(pattern, h, w):
    """
    Binary sampling masks, one per (angle, channel) pair.

    Returns an array of shape ``(4, 3, h, w)``; summing over the first two
    axes gives all ones.
    """
    _check_tiles(h, w)
    masks = np.zeros((4, 3, h, w))
    for y in range(TILE):
        for x in range(TILE):
            a, c = pattern.cell(y, x)
            masks[ANGLES.index(a), CHANNELS.index(c), y::TILE, x::TILE] = 1.0
    return masks


def mosaic(stack, pattern=None):
    """Forward CPFA model: every pixel keeps the one sample its filter passes."""
    pattern = pattern or CpfaPattern.default()
    stack = as_stack(stack)
    h, w = stack.shape[-2:]
    _check_tiles(h, w)
    plane = np.empty((h, w))
    for y in range(TILE):
        for x in range(TILE):
            a, c = pattern.cell(y, x)
            plane[y::TILE, x::TILE] = stack[ANGLES.index(a), CHANNELS.index(c), y::TILE, x::TILE]
    return CpfaRaw(plane=plane, pattern=pattern)


def extract_angle_cfa(raw, angle):
    """
    Pull the pixels behind one polarizer angle into a half-resolution Bayer
    image. Pure permutation, no resampling.

    Returns
    -------
    (np.ndarray, Bayer)
        the ``(h/2, w/2)`` CFA plane and its 2x2 color layout.
    """
    dy, dx = raw.pattern.angle_offset(angle)
    cfa = raw.plane[dy::2, dx::2].copy()
    layout = tuple(tuple(raw.pattern.cell(2 * yy + dy, 2 * xx + dx)[1] for xx in range(2))
                   for yy in range(2))
    return cfa, Bayer(layout)


def _tent(radius):
    k = radius - np.abs(np.arange(-radius + 1, radius), dtype=np.float64)
    return k / radius


def _normalized_interp(sparse, mask, radius):
    # separable tent of half-width `radius` == lattice period: exact linear
    # interpolation between same-lattice samples, clamp-to-edge borders
    k = _tent(radius)
    num = correlate1d(correlate1d(sparse, k, axis=-2, mode="nearest"), k, axis=-1, mode="nearest")
    den = correlate1d(correlate1d(mask, k, axis=-2, mode="nearest"), k, axis=-1, mode="nearest")
    return num / den


def cfa_demosaic_bilinear(cfa, descriptor):
    """
    Classic bilinear Bayer demosaic.

    Measured samples pass through untouched; a missing channel is the mean of
    the nearest same-channel neighbors (2 horizontal/vertical or 4 diagonal
    for r/b, 4 cross neighbors for g).
    """
    cfa = as_plane(cfa)
    h, w = cfa.shape
    if h % 2 or w % 2:
        raise ValueError(f"CFA dims {h}x{w} not divisible by 2")
    out = np.empty((3, h, w))
    for j, c in enumerate(CHANNELS):
        m = descriptor.channel_mask(c, h, w)
        if not m.any():
            raise ValueError(f"Bayer layout {descriptor} has no {c} samples")
        filled = _normalized_interp(np.where(m, cfa, 0.0), m.astype(np.float64), 2)
        out[j] = np.where(m, cfa, filled)
    return out


def convert_raw_to_halfres(raw):
    """Four half-resolution full-color images, one per polarizer angle."""
    return np.stack([cfa_demosaic_bilinear(*extract_angle_cfa(raw, a)) for a in ANGLES])


def cpfa_demosaic_bilinear(raw):
    """
    Full-resolution baseline demosaic: each (angle, channel) sparse plane is
    interpolated independently from its own samples.
    """
    h, w = raw.shape
    masks = build_masks(raw.pattern, h, w)
    out = np.empty((4, 3, h, w))
    for i in range(4):
        for j in range(3):
            m = masks[i, j]
            if not m.any():
                raise ValueError(f"pattern has no {ANGLES[i]}:{CHANNELS[j]} samples")
            filled = _normalized_interp(raw.plane * m, m, TILE)
            out[i, j] = np.where(m > 0, raw.plane, filled)
    return out
