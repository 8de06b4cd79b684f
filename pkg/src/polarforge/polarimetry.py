"""
Stokes parameters, degree / angle of polarization, and the inverse synthesis.

Sign convention: ``s1 = I90 - I0`` and ``s2 = I135 - I45``. Much of the
literature uses the opposite sign for ``s1``; with this convention the angle
of polarization is offset by pi/2 from the physical e-vector orientation.
Everything in this package is internally consistent with it.

All functions work per color channel and per pixel.
"""
from dataclasses import dataclass

import numpy as np

from .core import as_stack

DOP_EPS = 1e-8
# polarized magnitude below this fraction of s0 is rounding noise: no defined angle
AOP_FLOOR = 1e-12


@dataclass(frozen=True)
class Stokes:
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    @property
    def shape(self):
        return self.s0.shape


@dataclass(frozen=True)
class PolarParams:
    dop: np.ndarray
    aop: np.ndarray


def average_image(stack):
    return as_stack(stack).mean(axis=0)


def compute_stokes(stack):
    i0, i45, i90, i135 = as_stack(stack)
    s0 = (i0 + i45 + i90 + i135) / 2.0
    return Stokes(s0=s0, s1=i90 - i0, s2=i135 - i45)


def wrap_angle(theta):
    """Map angles onto the half-open half circle [0, pi)."""
    t = np.mod(theta, np.pi)
    # mod can round up to exactly pi for tiny negative inputs
    return np.where(t >= np.pi, 0.0, t)


def angular_distance(a, b):
    """pi-periodic distance between two orientation fields, in radians."""
    d = np.abs(np.mod(np.asarray(a) - np.asarray(b), np.pi))
    return np.minimum(d, np.pi - d)


def compute_params(stokes):
    """
    Degree and angle of linear polarization.

    ``dop = |(s1, s2)| / max(s0, 1e-8)`` clamped to [0, 1]; ``aop`` is half of
    ``atan2(s2, s1)`` wrapped into [0, pi), and 0 where ``s1 = s2 = 0`` (up
    to rounding, ``|(s1, s2)| <= 1e-12 * s0``).
    """
    s0, s1, s2 = stokes.s0, stokes.s1, stokes.s2
    mag = np.hypot(s1, s2)
    dop = np.clip(mag / np.maximum(s0, DOP_EPS), 0.0, 1.0)
    aop = wrap_angle(0.5 * np.arctan2(s2, s1))
    aop = np.where(mag <= AOP_FLOOR * np.maximum(s0, DOP_EPS), 0.0, aop)
    return PolarParams(dop=dop, aop=aop)


def stokes_from_params(s0, params):
    s0 = np.asarray(s0, dtype=np.float64)
    lin = s0 * params.dop
    return Stokes(s0=s0, s1=lin * np.cos(2 * params.aop), s2=lin * np.sin(2 * params.aop))


def synthesize_from_stokes(stokes):
    """Exact inverse of :func:`compute_stokes` for stacks obeying I0 + I90 = I45 + I135."""
    s0, s1, s2 = stokes.s0, stokes.s1, stokes.s2
    return np.stack([(s0 - s1) / 2, (s0 - s2) / 2, (s0 + s1) / 2, (s0 + s2) / 2])


def synthesize_from_params(s0, params):
    """
    Build the four polarized images from total intensity, DoP and AoP.

    Parameters
    ----------
    s0: np.ndarray
        total intensity, shape ``(3, H, W)``, non-negative.
    params: PolarParams
        dop in [0, 1] and aop in [0, pi), same shape as ``s0``.

    Returns
    -------
    np.ndarray
        polar stack ``(4, 3, H, W)``; all samples are >= 0.
    """
    stack = synthesize_from_stokes(stokes_from_params(s0, params))
    # |s1|, |s2| <= s0 up to rounding; keep the postcondition exact
    return np.maximum(stack, 0.0)


def consistency_project(stack):
    """
    Minimum-L2 projection onto I0 + I90 = I45 + I135, followed by clamping
    negatives to zero.

    Clamping can reintroduce a violation of at most the correction size at
    pixels where a corrected sample went below zero.
    """
    i0, i45, i90, i135 = as_stack(stack)
    d = (i0 + i90 - i45 - i135) / 4.0
    out = np.stack([i0 - d, i45 + d, i90 - d, i135 + d])
    return np.maximum(out, 0.0)


def identity_residual(stack):
    i0, i45, i90, i135 = as_stack(stack)
    return float(np.max(np.abs((i0 + i90) - (i45 + i135))))
