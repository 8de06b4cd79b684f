"""
Two-stage recurrent joint demosaicing / super-resolution.

Stage ``f`` (coherence reconstructor) works at fixed resolution and restores
the spatial and physical consistency of a polar stack; stage ``g``
(resolution enhancer) doubles the resolution in the Stokes domain. A CPFA raw
is first split into four half-resolution color images, then every round runs
``f`` followed by ``g``: round one lands back at the raw resolution (the
demosaiced output), each further round doubles it.

Both stages are plain ``stack -> stack`` callables, so a learned realization
can replace either one without touching the driver.
"""
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import median_filter, shift as spline_shift

from .core import ANGLES, as_stack, check_finite, resample_bilinear, upsample2x
from .mosaic import convert_raw_to_halfres, cpfa_demosaic_bilinear
from .polarimetry import Stokes, compute_stokes, consistency_project, synthesize_from_stokes


@dataclass(frozen=True)
class StageConfig:
    f_median_radius: int = 0
    f_denoise: bool = False
    g_sharpen: bool = False
    rounds: int = 0

    def __post_init__(self):
        if self.f_median_radius not in (0, 1, 2):
            raise ValueError(f"f_median_radius must be 0, 1 or 2, got {self.f_median_radius}")
        if self.rounds < 0:
            raise ValueError(f"rounds must be >= 0, got {self.rounds}")

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        keys = {"f_median_radius", "f_denoise", "g_sharpen", "rounds"}
        unknown = set(d) - keys
        if unknown:
            raise ValueError(f"unknown StageConfig keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class PidsrOutput:
    demosaiced: np.ndarray
    super_resolved: np.ndarray = None
    intermediates: list = field(default_factory=list)

    @property
    def scales(self):
        """Every emitted stack, demosaiced first, keyed by SR factor."""
        out = {1: self.demosaiced}
        if self.super_resolved is not None:
            k = self.super_resolved.shape[-1] // self.demosaiced.shape[-1]
            out[k] = self.super_resolved
        return out


def _median(a, radius):
    if radius == 0:
        return a
    size = 2 * radius + 1
    # filter each plane separately, never across channels
    return median_filter(a, size=(1, size, size), mode="nearest")


def _physical(stokes):
    """
    Clip a Stokes field to what four images in [0, 1] can produce:
    0 <= s0 <= 2 and |(s1, s2)| <= min(s0, 2 - s0).
    """
    s0 = np.clip(stokes.s0, 0.0, 2.0)
    bound = np.minimum(s0, 2.0 - s0)
    mag = np.hypot(stokes.s1, stokes.s2)
    scale = np.where(mag > bound, bound / np.maximum(mag, 1e-300), 1.0)
    return Stokes(s0=s0, s1=stokes.s1 * scale, s2=stokes.s2 * scale)


def halfres_phases(pattern):
    """
    Sampling offset of each angle image produced by the half-resolution
    conversion, in half-resolution pixels, relative to the center of the 2x2
    polarizer block all four are nominally assigned to.
    """
    return tuple(tuple(d / 2.0 - 0.25 for d in pattern.angle_offset(a)) for a in ANGLES)


def register(stack, phases):
    """
    Resample each angle image onto the common grid.

    ``phases[i] = (dy, dx)`` says image ``i`` was sampled at ``(y + dy, x + dx)``;
    the output holds every image's value at ``(y, x)`` (cubic spline,
    clamp-to-edge).
    """
    stack = as_stack(stack)
    out = np.empty_like(stack)
    for i, (dy, dx) in enumerate(phases):
        for j in range(stack.shape[1]):
            if dy == 0 and dx == 0:
                out[i, j] = stack[i, j]
            else:
                out[i, j] = spline_shift(stack[i, j], (dy, dx), order=3, mode="nearest")
    return out


def stage_f(stack, config=None, phases=None):
    """
    Intra-resolution reconstruction.

    When ``phases`` is given the angle images are first registered onto a
    common grid, which removes the checkerboard the half-resolution
    conversion leaves in s1 and s2. Then s1 and s2 (and s0 when
    ``f_denoise``) are median-filtered, the four images are resynthesized
    from the Stokes field, projected onto the polarization identity and
    clamped to [0, 1]. Constant stacks are fixed points.
    """
    config = config or StageConfig()
    stack = as_stack(stack)
    if phases is not None:
        stack = register(stack, phases)
    st = compute_stokes(stack)
    r = config.f_median_radius
    s0 = _median(st.s0, r) if config.f_denoise else st.s0
    filtered = _physical(Stokes(s0=s0, s1=_median(st.s1, r), s2=_median(st.s2, r)))
    out = consistency_project(synthesize_from_stokes(filtered))
    return np.clip(out, 0.0, 1.0)


def _guided_boost(stokes_up, amount=0.5):
    # high-frequency detail of the upsampled s0 guide, applied to s0 only;
    # s1/s2 scale with s0 so DoP and AoP are untouched
    smooth = median_filter(stokes_up.s0, size=(1, 3, 3), mode="nearest")
    s0 = np.clip(stokes_up.s0 + amount * (stokes_up.s0 - smooth), 0.0, 2.0)
    ratio = np.where(stokes_up.s0 > 0, s0 / np.maximum(stokes_up.s0, 1e-300), 0.0)
    return Stokes(s0=s0, s1=stokes_up.s1 * ratio, s2=stokes_up.s2 * ratio)


def stage_g(stack, config=None):
    """
    Cross-resolution enhancement in residual form.

    The per-image bilinear 2x upsample is corrected by the residual towards
    the image set synthesized from the bilinearly upsampled Stokes field.
    Upsampling is linear, so the result keeps I0 + I90 = I45 + I135.
    """
    config = config or StageConfig()
    stack = as_stack(stack)
    interp = upsample2x(stack)
    st = compute_stokes(stack)
    up = Stokes(s0=upsample2x(st.s0), s1=upsample2x(st.s1), s2=upsample2x(st.s2))
    if config.g_sharpen:
        up = _guided_boost(up)
    up = _physical(up)
    residual = synthesize_from_stokes(up) - interp
    return np.clip(interp + residual, 0.0, 1.0)


def run_rounds(stack, rounds, config=None, keep=None, phases=None):
    """
    Feed a stack through ``rounds`` f -> g rounds, doubling each time.
    ``phases`` applies to the first round's input only.
    """
    config = config or StageConfig()
    out = as_stack(stack)
    for r in range(rounds):
        t = stage_f(out, config, phases if r == 0 else None)
        if keep is not None:
            keep.append(t)
        out = stage_g(t, config)
    return out


def run_pidsr(raw, config=None, keep_intermediates=False):
    """
    Joint demosaicing and super-resolution of a CPFA raw.

    Returns the demosaiced stack at the raw's resolution and, for
    ``config.rounds >= 1``, the stack super-resolved by ``2 ** rounds``.
    """
    config = config or StageConfig()
    keep = [] if keep_intermediates else None
    halfres = convert_raw_to_halfres(raw)
    phases = halfres_phases(raw.pattern)
    demosaiced = check_finite(run_rounds(halfres, 1, config, keep, phases), "demosaiced stack")
    sr = None
    if config.rounds >= 1:
        sr = check_finite(run_rounds(demosaiced, config.rounds, config, keep), "super-resolved stack")
    return PidsrOutput(demosaiced=demosaiced, super_resolved=sr, intermediates=keep or [])


def run_sequential_baseline(raw, n):
    """Demosaic with the bilinear CPFA baseline, then upsample every image independently."""
    if n < 0:
        raise ValueError(f"rounds must be >= 0, got {n}")
    out = cpfa_demosaic_bilinear(raw)
    h, w = out.shape[-2:]
    return resample_bilinear(out, h * 2 ** n, w * 2 ** n)
