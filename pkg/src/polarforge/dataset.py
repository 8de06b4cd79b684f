"""
Procedural ground-truth scenes, LR/HR/raw sample generation and on-disk
formats.

Scenes are continuous fields over the unit square sampled at pixel centers,
so the same spec rendered at different sizes shows the same content. All
per-pixel randomness comes from a stateless hash of (seed, stream, x, y);
nothing depends on generation order or thread count.

On disk a polar stack is twelve single-channel files named
``I{000|045|090|135}_{r|g|b}.{png|pfm}``; a sample is a directory holding a
versioned ``manifest.json``, the HR and LR ground-truth stacks, the CPFA raw
and the pattern.
"""
import json
import os
import re
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core import ANGLES, CHANNELS, as_stack, downsample_area
from .mosaic import CpfaPattern, mosaic
from .polarimetry import PolarParams, synthesize_from_params, wrap_angle

MANIFEST_VERSION = 1
FORMATS = ("png16", "pfm")
EXTENSIONS = {"png16": ".png", "pfm": ".pfm"}
KINDS = ("gradient", "blobs", "texture", "piecewise")

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_STREAM_NOISE = 0x6E6F697365


class DatasetError(Exception):
    pass


class MissingFileError(DatasetError, FileNotFoundError):
    pass


class DimensionMismatchError(DatasetError, ValueError):
    pass


class CorruptFileError(DatasetError, ValueError):
    pass


class InconsistentFormatError(DatasetError, ValueError):
    pass


# --------------------------------------------------------------------------
# counter-based RNG


def _mix64(z):
    # splitmix64 finalizer, wrapping uint64 arithmetic
    z = z.astype(np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def hash_uniform(seed, stream, x, y):
    """Uniform [0, 1) samples keyed by (seed, stream, x, y); broadcasts over x, y."""
    x = np.asarray(x, dtype=np.int64).astype(np.uint64)
    y = np.asarray(y, dtype=np.int64).astype(np.uint64)
    golden = np.uint64(0x9E3779B97F4A7C15)
    with np.errstate(over="ignore"):
        h = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * golden + np.uint64(stream & 0xFFFFFFFF))
        h = _mix64(h ^ (x * np.uint64(0xD1B54A32D192ED03)))
        h = _mix64(h ^ (y * np.uint64(0xABC98388FB8FAC03)))
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def hash_normal(seed, stream, x, y):
    u1 = hash_uniform(seed, 2 * stream, x, y)
    u2 = hash_uniform(seed, 2 * stream + 1, x, y)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


# --------------------------------------------------------------------------
# scenes


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    height: int = 64
    width: int = 64
    kind: str = "texture"
    p_range: tuple = (0.05, 0.5)
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}; expected one of {KINDS}")
        if self.height < 1 or self.width < 1:
            raise ValueError(f"invalid dims {self.height}x{self.width}")
        lo, hi = (float(v) for v in self.p_range)
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"p_range must satisfy 0 <= lo <= hi <= 1, got {self.p_range}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        object.__setattr__(self, "p_range", (lo, hi))

    def to_dict(self):
        d = asdict(self)
        d["p_range"] = list(self.p_range)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["p_range"] = tuple(d.get("p_range", (0.05, 0.5)))
        return cls(**d)


def _grid(h, w):
    v = (np.arange(h) + 0.5) / h
    u = (np.arange(w) + 0.5) / w
    return np.meshgrid(u, v)


def _value_noise(seed, stream, u, v, freq):
    """Smooth lattice noise in [0, 1]; lattice fixed in scene coordinates."""
    gu, gv = u * freq, v * freq
    iu, iv = np.floor(gu).astype(np.int64), np.floor(gv).astype(np.int64)
    fu, fv = gu - iu, gv - iv
    fu = fu * fu * (3 - 2 * fu)
    fv = fv * fv * (3 - 2 * fv)
    c00 = hash_uniform(seed, stream, iu, iv)
    c10 = hash_uniform(seed, stream, iu + 1, iv)
    c01 = hash_uniform(seed, stream, iu, iv + 1)
    c11 = hash_uniform(seed, stream, iu + 1, iv + 1)
    top = c00 * (1 - fu) + c10 * fu
    bot = c01 * (1 - fu) + c11 * fu
    return top * (1 - fv) + bot * fv


def _fractal(seed, stream, u, v, base, octaves=3):
    total, norm, amp = 0.0, 0.0, 1.0
    for k in range(octaves):
        total = total + amp * _value_noise(seed, stream + k, u, v, base * 2 ** k)
        norm += amp
        amp *= 0.5
    return total / norm


def _unit(rng):
    phi = rng.uniform(0, 2 * np.pi)
    return np.cos(phi), np.sin(phi)


def _squash(f):
    return 0.5 + 0.5 * np.tanh(f)


def _ramp(rng, u, v):
    # linear ramp spanning [0, 1] across the unit square in a random direction
    a, b = _unit(rng)
    r = a * (u - 0.5) + b * (v - 0.5)
    return r / (abs(a) + abs(b)) + 0.5


def _blobs(rng, u, v, count):
    f = 0.0
    for _ in range(count):
        cu, cv = rng.uniform(0, 1, size=2)
        width = rng.uniform(0.08, 0.2)
        f = f + rng.uniform(-1, 1) * np.exp(-((u - cu) ** 2 + (v - cv) ** 2) / (2 * width ** 2))
    return f


def _soft_cells(rng, u, v, count, tau=0.0015):
    sites = rng.uniform(0, 1, size=(count, 2))
    d2 = np.stack([(u - su) ** 2 + (v - sv) ** 2 for su, sv in sites])
    d2 = d2 - d2.min(axis=0)
    w = np.exp(-d2 / tau)
    return w / w.sum(axis=0)


def _fields(spec, u, v):
    # scene-level parameters come from a seeded generator and never depend on
    # the sampling grid, so every resolution sees the same scene
    rng = np.random.default_rng([spec.seed, KINDS.index(spec.kind)])
    s = spec.seed
    theta_sweep = rng.uniform(1.1, 1.6) * np.pi
    theta0 = rng.uniform(0, np.pi)

    if spec.kind == "gradient":
        lum = 0.55 * _ramp(rng, u, v) + 0.3 * _ramp(rng, u, v)
        pol = _ramp(rng, u, v)
        theta = theta0 + theta_sweep * _ramp(rng, u, v)
    elif spec.kind == "blobs":
        lum = _squash(_blobs(rng, u, v, 6) + 0.3 * _ramp(rng, u, v))
        pol = _squash(_blobs(rng, u, v, 4))
        theta = theta0 + theta_sweep * _ramp(rng, u, v) + 0.6 * _blobs(rng, u, v, 3)
    elif spec.kind == "texture":
        lum = _fractal(s, 10, u, v, 4.0, octaves=4)
        pol = _fractal(s, 20, u, v, 3.0, octaves=2)
        theta = theta0 + theta_sweep * _ramp(rng, u, v) + np.pi * (_fractal(s, 30, u, v, 3.0, octaves=2) - 0.5)
    else:  # piecewise
        w = _soft_cells(rng, u, v, 10)
        k = w.shape[0]
        lum = np.tensordot(rng.uniform(0, 1, size=k), w, axes=1)
        pol = np.tensordot(rng.uniform(0, 1, size=k), w, axes=1)
        cell_theta = rng.uniform(0, np.pi, size=k)
        doubled = np.arctan2(np.tensordot(np.sin(2 * cell_theta), w, axes=1),
                             np.tensordot(np.cos(2 * cell_theta), w, axes=1))
        theta = 0.5 * doubled + theta_sweep * _ramp(rng, u, v)

    lum = 0.12 + 0.8 * np.clip(lum, 0.0, 1.0)
    tints = []
    for c in range(3):
        base = rng.uniform(0.75, 1.0)
        tints.append(base * (0.85 + 0.15 * _value_noise(s, 40 + c, u, v, 2.0)))
    s0 = np.stack([lum * t for t in tints])

    lo, hi = spec.p_range
    dop = lo + (hi - lo) * np.clip(pol, 0.0, 1.0)
    aop = wrap_angle(theta)
    return s0, np.stack([dop] * 3), np.stack([aop] * 3)


def synth_scene(spec):
    """
    Ground-truth total intensity and polarization parameters for a scene.

    Returns
    -------
    (np.ndarray, PolarParams)
        ``s0`` of shape ``(3, H, W)`` in (0, 1) and the matching DoP/AoP.
    """
    u, v = _grid(spec.height, spec.width)
    s0, dop, aop = _fields(spec, u, v)
    return s0, PolarParams(dop=dop, aop=aop)


def _f32(a):
    # values stored on disk are float32; keep the in-memory copy identical
    return np.asarray(a, dtype=np.float32).astype(np.float64)


@dataclass
class Sample:
    spec: SceneSpec
    rounds: int
    gt_hr: np.ndarray
    gt_lr: np.ndarray
    raw: object  # CpfaRaw


def simulate_pair(spec, rounds=0, pattern=None):
    """
    In-memory sample: HR ground truth at the scene's size, LR ground truth
    area-downsampled by ``2 ** rounds``, and the (optionally noisy) raw
    mosaiced from the LR stack.
    """
    pattern = pattern or CpfaPattern.default()
    k = 2 ** rounds
    if spec.height % (4 * k) or spec.width % (4 * k):
        raise ValueError(f"scene dims {spec.height}x{spec.width} not divisible by 4*2^{rounds} = {4 * k}")
    s0, params = synth_scene(spec)
    gt_hr = _f32(synthesize_from_params(s0, params))
    gt_lr = _f32(downsample_area(gt_hr, k)) if k > 1 else gt_hr.copy()
    raw = mosaic(gt_lr, pattern)
    if spec.noise_sigma > 0:
        h, w = raw.shape
        yy, xx = np.mgrid[0:h, 0:w]
        noisy = raw.plane + spec.noise_sigma * hash_normal(spec.seed, _STREAM_NOISE, xx, yy)
        raw = type(raw)(plane=_f32(np.clip(noisy, 0.0, 1.0)), pattern=pattern)
    return Sample(spec=spec, rounds=rounds, gt_hr=gt_hr, gt_lr=gt_lr, raw=raw)


# --------------------------------------------------------------------------
# file formats


def _atomic_write(path, data):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode_pfm(plane):
    plane = np.asarray(plane)
    h, w = plane.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    # rows stored bottom to top; negative scale marks little-endian
    return header + np.flipud(plane).astype("<f4").tobytes()


def _read_pfm(path):
    with open(path, "rb") as f:
        data = f.read()
    m = re.match(rb"(P[fF])\s+(\d+)\s+(\d+)\s+(-?[0-9.eE+-]+)\s", data)
    if m is None:
        raise CorruptFileError(f"{path}: corrupt PFM header")
    kind, w, h, scale = m.group(1), int(m.group(2)), int(m.group(3)), float(m.group(4))
    if kind != b"Pf":
        raise CorruptFileError(f"{path}: expected single-channel PFM, got {kind.decode()}")
    if scale == 0:
        raise CorruptFileError(f"{path}: corrupt PFM header (zero scale)")
    dtype = "<f4" if scale < 0 else ">f4"
    body = data[m.end():]
    if len(body) != 4 * w * h:
        raise CorruptFileError(f"{path}: expected {4 * w * h} data bytes, found {len(body)}")
    return np.flipud(np.frombuffer(body, dtype=dtype).reshape(h, w)).astype(np.float64)


def _encode_png16(plane):
    import io
    q = np.round(np.clip(plane, 0.0, 1.0) * 65535.0).astype(np.uint16)
    buf = io.BytesIO()
    Image.fromarray(q).save(buf, format="PNG")
    return buf.getvalue()


def _read_png16(path):
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("I;16", "I;16B", "I;16L", "I"):
                raise CorruptFileError(f"{path}: expected 16-bit grayscale PNG, got mode {im.mode}")
            a = np.array(im)
    except (OSError, SyntaxError) as exc:
        raise CorruptFileError(f"{path}: corrupt PNG ({exc})") from exc
    return a.astype(np.float64) / 65535.0


def save_plane(path, plane, fmt):
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    _atomic_write(path, _encode_pfm(plane) if fmt == "pfm" else _encode_png16(plane))


def load_plane(path, shape=None):
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"missing file: {path}")
    if path.suffix == ".pfm":
        a = _read_pfm(path)
    elif path.suffix == ".png":
        a = _read_png16(path)
    else:
        raise InconsistentFormatError(f"{path}: unsupported extension {path.suffix!r}")
    if shape is not None and a.shape != tuple(shape):
        raise DimensionMismatchError(f"{path}: dims {a.shape[0]}x{a.shape[1]}, expected {shape[0]}x{shape[1]}")
    return a


def stack_filenames(fmt):
    ext = EXTENSIONS[fmt]
    return [[f"I{a:03d}_{c}{ext}" for c in CHANNELS] for a in ANGLES]


def save_stack(path, stack, fmt="pfm"):
    """Write the twelve planes of a stack into directory ``path``."""
    stack = as_stack(stack)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for i, row in enumerate(stack_filenames(fmt)):
        for j, name in enumerate(row):
            save_plane(path / name, stack[i, j], fmt)


def load_stack(path, fmt="pfm", shape=None):
    """Read a stack written by :func:`save_stack`, optionally checking ``(H, W)``."""
    path = Path(path)
    names = stack_filenames(fmt)
    missing = [n for row in names for n in row if not (path / n).exists()]
    if missing:
        raise MissingFileError(f"{path}: missing files: {', '.join(missing)}")
    out = None
    for i, row in enumerate(names):
        for j, name in enumerate(row):
            plane = load_plane(path / name, shape)
            if out is None:
                shape = plane.shape
                out = np.empty((4, 3, *shape))
            out[i, j] = plane
    return out


_STACK_NAME = re.compile(r"^I(000|045|090|135)_([rgb])\.(png|pfm)$")


def load_external_dir(path):
    """
    Load a directory of twelve ``I{angle}_{channel}`` planes in one format.
    Measured data is returned as is; no consistency is enforced.
    """
    path = Path(path)
    if not path.is_dir():
        raise MissingFileError(f"not a directory: {path}")
    present = sorted(p.name for p in path.iterdir() if p.is_file())
    exts = {n.rsplit(".", 1)[-1] for n in present if _STACK_NAME.match(n)}
    if len(exts) > 1:
        raise InconsistentFormatError(f"{path}: inconsistent format, found {sorted(exts)}")
    fmt = {"png": "png16", "pfm": "pfm"}.get(exts.pop() if exts else "pfm")
    expected = {n for row in stack_filenames(fmt) for n in row}
    missing = sorted(expected - set(present))
    extra = sorted(n for n in present if n not in expected and _STACK_NAME.match(n))
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing: {', '.join(missing)}")
        if extra:
            parts.append(f"unexpected: {', '.join(extra)}")
        raise MissingFileError(f"{path}: " + "; ".join(parts))
    return load_stack(path, fmt)


# --------------------------------------------------------------------------
# manifests


@dataclass
class SampleManifest:
    path: Path
    fmt: str
    rounds: int
    scene: SceneSpec
    pattern: CpfaPattern
    hr_shape: tuple
    lr_shape: tuple
    files: dict

    @property
    def root(self):
        return self.path.parent

    @property
    def name(self):
        return self.root.name

    def resolve(self, key):
        return self.root / self.files[key]

    def to_dict(self):
        return {
            "version": MANIFEST_VERSION,
            "format": self.fmt,
            "rounds": self.rounds,
            "scene": self.scene.to_dict(),
            "pattern": self.pattern.to_strings(),
            "dims": {"hr": list(self.hr_shape), "lr": list(self.lr_shape), "raw": list(self.lr_shape)},
            "files": dict(self.files),
        }

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        if not path.exists():
            raise MissingFileError(f"missing file: {path}")
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise CorruptFileError(f"{path}: invalid JSON ({exc})") from exc
        if d.get("version") != MANIFEST_VERSION:
            raise CorruptFileError(f"{path}: unsupported manifest version {d.get('version')!r}")
        return cls(path=path, fmt=d["format"], rounds=d["rounds"],
                   scene=SceneSpec.from_dict(d["scene"]),
                   pattern=CpfaPattern.from_strings(d["pattern"]),
                   hr_shape=tuple(d["dims"]["hr"]), lr_shape=tuple(d["dims"]["lr"]),
                   files=d["files"])

    def load_gt(self, which):
        shape = self.hr_shape if which == "gt_hr" else self.lr_shape
        return load_stack(self.resolve(which), self.fmt, shape)

    def load_raw(self):
        from .mosaic import CpfaRaw
        plane = load_plane(self.resolve("raw"), self.lr_shape)
        return CpfaRaw(plane=plane, pattern=self.pattern)


def write_sample(sample, out_dir, fmt="pfm"):
    """Persist a :class:`Sample` and its manifest under ``out_dir``."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = EXTENSIONS[fmt]
    files = {"gt_hr": "gt_hr", "gt_lr": "gt_lr", "raw": f"raw{ext}", "pattern": "pattern.json"}
    save_stack(out_dir / files["gt_hr"], sample.gt_hr, fmt)
    save_stack(out_dir / files["gt_lr"], sample.gt_lr, fmt)
    save_plane(out_dir / files["raw"], sample.raw.plane, fmt)
    _atomic_write(out_dir / files["pattern"], (sample.raw.pattern.to_json() + "\n").encode())
    manifest = SampleManifest(path=out_dir / "manifest.json", fmt=fmt, rounds=sample.rounds,
                              scene=sample.spec, pattern=sample.raw.pattern,
                              hr_shape=sample.gt_hr.shape[-2:], lr_shape=sample.gt_lr.shape[-2:],
                              files=files)
    text = json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n"
    _atomic_write(manifest.path, text.encode())
    return manifest


def make_pair(spec, rounds=0, out_dir=None, fmt="pfm", pattern=None):
    """
    Generate a sample and, when ``out_dir`` is given, write it to disk.

    Returns the in-memory :class:`Sample` and the manifest (``None`` when
    nothing was written).
    """
    sample = simulate_pair(spec, rounds, pattern)
    manifest = None
    if out_dir is not None:
        try:
            manifest = write_sample(sample, out_dir, fmt)
        except OSError as exc:
            raise DatasetError(f"writing sample to {out_dir}: {exc}") from exc
    return sample, manifest
