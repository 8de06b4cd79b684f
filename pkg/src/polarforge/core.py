"""
Image containers and the resampling / finite-difference kernels shared by
every other module.

Conventions
-----------
Images are plain ``float64`` numpy arrays; the last two axes are always
(height, width).

* plane        -- ``(H, W)``
* color image  -- ``(3, H, W)``, channels ordered r, g, b
* polar stack  -- ``(4, 3, H, W)``, polarizer angles ordered 0, 45, 90, 135

Every kernel here acts on the trailing two axes, so the same call works on a
single plane, a color image or a whole stack.
"""
import numpy as np

ANGLES = (0, 45, 90, 135)
CHANNELS = ("r", "g", "b")


def as_plane(data):
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"plane must be 2-D, got shape {a.shape}")
    if a.size == 0:
        raise ValueError("empty plane")
    return a


def as_color(data):
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 3 or a.shape[0] != 3:
        raise ValueError(f"color image must have shape (3, H, W), got {a.shape}")
    if a.shape[1] == 0 or a.shape[2] == 0:
        raise ValueError("empty plane")
    return a


def as_stack(data):
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 4 or a.shape[:2] != (4, 3):
        raise ValueError(f"polar stack must have shape (4, 3, H, W), got {a.shape}")
    if a.shape[2] == 0 or a.shape[3] == 0:
        raise ValueError("empty plane")
    return a


def constant_stack(value, height, width):
    return np.full((4, 3, height, width), float(value))


def check_finite(a, what="output"):
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"non-finite samples in {what}")
    return a


def _axis_weights(n_in, n_out):
    # half-pixel centers: out pixel i sits at source coordinate (i + 0.5) * n_in / n_out - 0.5
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resample_bilinear(src, out_h, out_w):
    """
    Bilinear resize of the trailing two axes with half-pixel-center alignment
    and clamp-to-edge borders.

    Parameters
    ----------
    src: np.ndarray
        array of shape ``(..., H, W)``.
    out_h, out_w: int
        target height and width.

    Returns
    -------
    np.ndarray
        array of shape ``(..., out_h, out_w)``.
    """
    src = np.asarray(src, dtype=np.float64)
    if src.ndim < 2 or src.shape[-1] == 0 or src.shape[-2] == 0:
        raise ValueError("empty plane")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output dims must be >= 1, got {out_h}x{out_w}")
    h, w = src.shape[-2:]
    if (h, w) == (out_h, out_w):
        return src.copy()

    lo, hi, f = _axis_weights(h, out_h)
    f = f[:, None]
    tmp = src[..., lo, :] * (1.0 - f) + src[..., hi, :] * f

    lo, hi, f = _axis_weights(w, out_w)
    return tmp[..., lo] * (1.0 - f) + tmp[..., hi] * f


def upsample2x(src):
    h, w = np.shape(src)[-2:]
    return resample_bilinear(src, 2 * h, 2 * w)


def downsample_area(src, factor):
    """Mean over non-overlapping ``factor x factor`` blocks of the trailing two axes."""
    src = np.asarray(src, dtype=np.float64)
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    h, w = src.shape[-2:]
    if h == 0 or w == 0:
        raise ValueError("empty plane")
    if h % factor or w % factor:
        raise ValueError(f"dimension not divisible by factor: {h}x{w} by {factor}")
    if factor == 1:
        return src.copy()
    blocks = src.reshape(*src.shape[:-2], h // factor, factor, w // factor, factor)
    return blocks.mean(axis=(-3, -1))


def gradient_l1(a, b):
    """
    Gradient loss between ``a`` and ``b``: mean absolute difference of the
    forward x-gradients plus the same for the y-gradients.

    Each axis is averaged over its own valid positions (the last column for x,
    the last row for y drop out). Leading axes are pooled into the means.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    total = 0.0
    if d.shape[-1] > 1:
        total += np.mean(np.abs(np.diff(d, axis=-1)))
    if d.shape[-2] > 1:
        total += np.mean(np.abs(np.diff(d, axis=-2)))
    return float(total)
