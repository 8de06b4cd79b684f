"""
Reconstruction quality: PSNR, SSIM, angular MAE, error rate, the three
training-loss terms as plain measures, and a table-shaped evaluation report.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from .core import as_stack, gradient_l1
from .polarimetry import angular_distance, compute_params, compute_stokes

LOSS_WEIGHTS = (1.0, 10.0, 10.0)  # image, Stokes, polarization

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

REPORT_VERSION = 1
PSNR_QUANTITIES = ("I0", "I45", "I90", "I135", "S0", "p")
QUANTITIES = PSNR_QUANTITIES + ("theta",)


def _pair(x, gt):
    x = np.asarray(x, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if x.shape != gt.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {gt.shape}")
    return x, gt


def psnr(x, gt):
    """PSNR in dB with peak 1.0; ``inf`` when the images are identical."""
    x, gt = _pair(x, gt)
    mse = np.mean((x - gt) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(1.0 / mse))


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_plane(x, y, win):
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2

    def filt(a):
        return convolve2d(a, win, mode="valid")

    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cxy = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def ssim(x, gt):
    """
    Single-scale SSIM (11x11 Gaussian window, sigma 1.5, K1 = 0.01,
    K2 = 0.03, dynamic range 1), averaged over valid window positions and
    then over channels. Accepts a plane or a ``(C, H, W)`` image.
    """
    x, gt = _pair(x, gt)
    if x.shape[-1] < SSIM_WINDOW or x.shape[-2] < SSIM_WINDOW:
        raise ValueError(f"image {x.shape[-2]}x{x.shape[-1]} smaller than the "
                         f"{SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    win = gaussian_window()
    xs = x.reshape(-1, *x.shape[-2:])
    gs = gt.reshape(-1, *gt.shape[-2:])
    return float(np.mean([_ssim_plane(a, b, win) for a, b in zip(xs, gs)]))


def mae_angular(theta, theta_gt):
    """Mean pi-periodic angular error, in degrees."""
    theta, theta_gt = _pair(theta, theta_gt)
    return float(np.degrees(np.mean(angular_distance(theta, theta_gt))))


def error_rate(v, v_gt, period=None):
    """
    ``sum|v - v_gt| / sum(v)`` over every sample.

    With ``period`` set, the absolute difference is taken on the circle of
    that circumference (used for normalized AoP, period 1).
    """
    v, v_gt = _pair(v, v_gt)
    denom = np.sum(v)
    if not denom > 0:
        raise ValueError("degenerate denominator")
    if period is None:
        diff = np.abs(v - v_gt)
    else:
        d = np.mod(v - v_gt, period)
        diff = np.minimum(d, period - d)
    return float(np.sum(diff) / denom)


def _l1(a, b):
    return float(np.mean(np.abs(a - b)))


@dataclass(frozen=True)
class LossTerms:
    img: float
    stokes: float
    pol: float
    total: float


def loss_terms(pred, gt):
    """
    Image, Stokes and polarization loss terms and their weighted total
    (weights 1, 10, 10). L1 terms are means; the AoP term uses the
    pi-periodic distance.
    """
    pred, gt = _pair(as_stack(pred), as_stack(gt))
    i0, i45, i90, i135 = pred
    l_img = _l1(i0 + i90, i45 + i135) + gradient_l1(pred, gt)

    sp, sg = compute_stokes(pred), compute_stokes(gt)
    l_stokes = gradient_l1(sp.s0, sg.s0) + _l1(np.stack([sp.s1, sp.s2]), np.stack([sg.s1, sg.s2]))

    pp, pg = compute_params(sp), compute_params(sg)
    l_pol = _l1(pp.dop, pg.dop) + float(np.mean(angular_distance(pp.aop, pg.aop)))

    w1, w2, w3 = LOSS_WEIGHTS
    return LossTerms(img=l_img, stokes=l_stokes, pol=l_pol,
                     total=w1 * l_img + w2 * l_stokes + w3 * l_pol)


@dataclass
class EvalReport:
    scale: str
    method: str
    scene_count: int = 1
    entries: dict = field(default_factory=dict)
    channel_aggregation: str = "mean"

    def to_dict(self):
        rows = {}
        for q in QUANTITIES:
            e = dict(self.entries[q])
            if "psnr" in e and math.isinf(e["psnr"]):
                e["psnr"] = None
            rows[q] = e
        return {
            "version": REPORT_VERSION,
            "scale": self.scale,
            "method": self.method,
            "scene_count": self.scene_count,
            "channel_aggregation": self.channel_aggregation,
            "metrics": rows,
        }

    @classmethod
    def from_dict(cls, d):
        entries = {}
        for q, e in d["metrics"].items():
            e = dict(e)
            if "psnr" in e and e["psnr"] is None:
                e["psnr"] = math.inf
            entries[q] = e
        return cls(scale=d["scale"], method=d["method"], scene_count=d["scene_count"],
                   entries=entries, channel_aggregation=d.get("channel_aggregation", "mean"))


def _psnr_entry(x, gt):
    value = psnr(x, gt)
    return {"psnr": value, "ssim": ssim(x, gt), "identical": math.isinf(value)}


def evaluate(pred, gt, scale_tag="demosaic", method_name="unknown"):
    """Fill a report with PSNR/SSIM on each image, S0 and DoP, and MAE on AoP."""
    pred, gt = _pair(as_stack(pred), as_stack(gt))
    entries = {}
    for name, x, y in zip(PSNR_QUANTITIES[:4], pred, gt):
        entries[name] = _psnr_entry(x, y)
    sp, sg = compute_stokes(pred), compute_stokes(gt)
    entries["S0"] = _psnr_entry(sp.s0, sg.s0)
    pp, pg = compute_params(sp), compute_params(sg)
    entries["p"] = _psnr_entry(pp.dop, pg.dop)
    entries["theta"] = {"mae_deg": mae_angular(pp.aop, pg.aop)}
    return EvalReport(scale=scale_tag, method=method_name, entries=entries)


def aggregate(reports):
    """
    Unweighted mean of per-scene reports.

    PSNR of identical scenes is infinite and is left out of the mean;
    ``identical`` is true only when every scene was identical and
    ``identical_count`` records how many were.
    """
    if not reports:
        raise ValueError("no reports to aggregate")
    scales = {r.scale for r in reports}
    if len(scales) != 1:
        raise ValueError(f"cannot aggregate reports across scales {sorted(scales)}")
    n = sum(r.scene_count for r in reports)
    entries = {}
    for q in PSNR_QUANTITIES:
        vals = [r.entries[q] for r in reports]
        finite = [v["psnr"] for v in vals if not math.isinf(v["psnr"])]
        identical = sum(1 for v in vals if math.isinf(v["psnr"]))
        entries[q] = {
            "psnr": float(np.mean(finite)) if finite else math.inf,
            "ssim": float(np.mean([v["ssim"] for v in vals])),
            "identical": identical == len(vals),
            "identical_count": identical,
        }
    entries["theta"] = {"mae_deg": float(np.mean([r.entries["theta"]["mae_deg"] for r in reports]))}
    methods = sorted({r.method for r in reports})
    return EvalReport(scale=reports[0].scale, method="+".join(methods), scene_count=n, entries=entries)
