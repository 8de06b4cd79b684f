"""
Command-line entry point.

    polarforge simulate     --seed 7 --size 128 --rounds 1 --out data/
    polarforge reconstruct  --manifest data/scene_000007 --method pidsr --rounds 1 --out recon/
    polarforge eval         --manifest data/scene_000007 --pred recon/ --report report.json
    polarforge experiment   err-gap --count 20 --report gap.json

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
4 numerical failure (non-finite values in an output).
"""
import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import experiments
from .core import CHANNELS, check_finite
from .dataset import (FORMATS, KINDS, DatasetError, DimensionMismatchError, SampleManifest, SceneSpec, load_plane,
                      load_stack, make_pair, save_plane, save_stack, stack_filenames, _atomic_write)
from .metrics import aggregate, evaluate
from .mosaic import CpfaPattern, CpfaRaw, cpfa_demosaic_bilinear
from .pipeline import StageConfig, run_pidsr, run_sequential_baseline
from .polarimetry import compute_params, compute_stokes

CLI_VERSION = 1
METHODS = ("pidsr", "bilinear", "sequential")
EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(Exception):
    pass


def _default_jobs():
    try:
        return max(1, int(os.environ.get("POLARFORGE_JOBS", "1")))
    except ValueError:
        return 1


def _pool_map(fn, items, jobs):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _clean(obj):
    # strict JSON: non-finite floats become null
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _write_json(path, payload):
    text = json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, text.encode())


def _load_pattern(path):
    if path is None:
        return CpfaPattern.default()
    p = Path(path)
    if not p.exists():
        raise DatasetError(f"missing file: {p}")
    try:
        return CpfaPattern.from_json(p.read_text())
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"invalid pattern file {p}: {exc}") from exc


def _stage_config(args):
    if getattr(args, "config", None):
        p = Path(args.config)
        if not p.exists():
            raise DatasetError(f"missing file: {p}")
        cfg = StageConfig.from_json(p.read_text())
        return StageConfig(**{**asdict(cfg), "rounds": args.rounds})
    return StageConfig(f_median_radius=args.median_radius, f_denoise=args.denoise,
                       g_sharpen=args.sharpen, rounds=args.rounds)


def _args_echo(args):
    # jobs never changes results, so it stays out of outputs
    skip = {"func", "jobs"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# --------------------------------------------------------------------------
# simulate


def cmd_simulate(args):
    k = 2 ** args.rounds
    if args.size % (4 * k):
        raise ConfigError(f"--size {args.size} must be divisible by 4*2^rounds = {4 * k}")
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    pattern = _load_pattern(args.pattern)
    out = Path(args.out)
    specs = [SceneSpec(seed=args.seed + i, height=args.size, width=args.size, kind=args.kind,
                       p_range=tuple(args.p_range), noise_sigma=args.noise)
             for i in range(args.count)]

    def one(spec):
        _, manifest = make_pair(spec, args.rounds, out / f"scene_{spec.seed:06d}", args.format, pattern)
        return manifest.path

    for path in _pool_map(one, specs, args.jobs):
        print(path)
    return EXIT_OK


# --------------------------------------------------------------------------
# reconstruct


def _scale_dir(k):
    return "demosaic" if k == 1 else f"x{k}"


def _write_outputs(dest, stack, fmt):
    check_finite(stack, str(dest))
    save_stack(dest, stack, fmt)
    st = compute_stokes(stack)
    params = compute_params(st)
    derived = dest / "derived"
    derived.mkdir(parents=True, exist_ok=True)
    # always float: s0 and aop leave [0, 1]
    for name, arr in (("s0", st.s0), ("dop", params.dop), ("aop", params.aop)):
        for j, c in enumerate(CHANNELS):
            save_plane(derived / f"{name}_{c}.pfm", arr[j], "pfm")


def _reconstruct_one(raw, name, args, config, out_root):
    method = args.method
    if method == "pidsr":
        res = run_pidsr(raw, config)
        outputs = res.scales
    elif method == "bilinear":
        outputs = {1: cpfa_demosaic_bilinear(raw)}
    else:
        outputs = {1: cpfa_demosaic_bilinear(raw)}
        if args.rounds >= 1:
            outputs[2 ** args.rounds] = run_sequential_baseline(raw, args.rounds)
    for k, stack in outputs.items():
        check_finite(stack, f"{name} {_scale_dir(k)} output")
    dest = out_root / name
    for k, stack in sorted(outputs.items()):
        _write_outputs(dest / _scale_dir(k), stack, args.format)
    info = {
        "version": CLI_VERSION,
        "method": method,
        "rounds": args.rounds,
        "stage_config": asdict(config),
        "format": args.format,
        "scales": [_scale_dir(k) for k in sorted(outputs)],
        "dims": {_scale_dir(k): list(s.shape[-2:]) for k, s in sorted(outputs.items())},
    }
    _write_json(dest / "reconstruction.json", info)
    return dest


def cmd_reconstruct(args):
    if args.method == "bilinear" and args.rounds > 0:
        raise ConfigError("--method bilinear produces no super-resolved output; use --rounds 0")
    if not args.manifest and not args.raw:
        raise ConfigError("give --manifest or --raw")
    if args.manifest and args.raw:
        raise ConfigError("--manifest and --raw are mutually exclusive")
    config = _stage_config(args)
    out = Path(args.out)

    jobs = []
    if args.manifest:
        for m in args.manifest:
            manifest = SampleManifest.load(m)
            jobs.append((manifest.name, manifest.load_raw))
    else:
        pattern = _load_pattern(args.pattern)
        for r in args.raw:
            path = Path(r)
            jobs.append((path.stem, lambda path=path: CpfaRaw(plane=load_plane(path), pattern=pattern)))

    def one(job):
        name, loader = job
        return _reconstruct_one(loader(), name, args, config, out)

    for dest in _pool_map(one, jobs, args.jobs):
        print(dest)
    return EXIT_OK


# --------------------------------------------------------------------------
# eval


def _is_stack_dir(path, fmt):
    return (path / stack_filenames(fmt)[0][0]).exists()


def _pred_scales(pred_dir, manifest):
    """Map scale tag -> prediction directory for one scene."""
    fmt = manifest.fmt
    if _is_stack_dir(pred_dir, fmt):
        return {None: pred_dir}
    found = {}
    for sub in sorted(p for p in pred_dir.iterdir() if p.is_dir()):
        if (sub.name == "demosaic" or sub.name.startswith("x")) and _is_stack_dir(sub, fmt):
            found[sub.name] = sub
    if not found:
        raise DatasetError(f"no reconstruction stacks found in {pred_dir}")
    return found


def _eval_scene(manifest, pred_root, method):
    pred_dir = pred_root / manifest.name if (pred_root / manifest.name).is_dir() else pred_root
    k = 2 ** manifest.rounds
    gt_tags = {"demosaic": "gt_lr"}
    if k > 1:
        gt_tags[f"x{k}"] = "gt_hr"
    reports = []
    for tag, path in _pred_scales(pred_dir, manifest).items():
        if tag is None:
            pred = load_stack(path, manifest.fmt)
            dims = tuple(pred.shape[-2:])
            if dims == tuple(manifest.lr_shape):
                tag = "demosaic"
            elif dims == tuple(manifest.hr_shape) and k > 1:
                tag = f"x{k}"
            else:
                raise ConfigError(f"scale mismatch: prediction {dims[0]}x{dims[1]} matches neither "
                                  f"demosaic {tuple(manifest.lr_shape)} nor x{k} {tuple(manifest.hr_shape)}")
        else:
            if tag not in gt_tags:
                raise ConfigError(f"scale mismatch: prediction scale {tag} but ground truth "
                                  f"{manifest.name} provides {' and '.join(gt_tags)}")
            shape = manifest.lr_shape if tag == "demosaic" else manifest.hr_shape
            try:
                pred = load_stack(path, manifest.fmt, shape)
            except DimensionMismatchError as exc:
                raise ConfigError(f"scale mismatch for {tag}: {exc}") from exc
        gt = manifest.load_gt(gt_tags[tag])
        reports.append(evaluate(pred, gt, tag, method))
    return reports


def cmd_eval(args):
    manifests = [SampleManifest.load(m) for m in args.manifest]
    pred_root = Path(args.pred)
    if not pred_root.is_dir():
        raise DatasetError(f"missing prediction directory: {pred_root}")
    method = args.method or "unknown"

    per_scene = _pool_map(lambda m: _eval_scene(m, pred_root, method), manifests, args.jobs)
    scenes = []
    by_scale = {}
    for manifest, reports in zip(manifests, per_scene):
        scenes.append({"scene": manifest.name, "seed": manifest.scene.seed,
                       "reports": [r.to_dict() for r in reports]})
        for r in reports:
            by_scale.setdefault(r.scale, []).append(r)
    payload = {
        "version": CLI_VERSION,
        "config": _args_echo(args),
        "scenes": scenes,
        "aggregate": {tag: aggregate(rs).to_dict() for tag, rs in sorted(by_scale.items())},
    }
    _write_json(args.report, payload)
    return EXIT_OK


# --------------------------------------------------------------------------
# experiment


def _csv_rows(result):
    name = result["experiment"]
    if name == "err-vs-res":
        return ["size", "S0", "p", "theta"], [[e["size"], e["S0"], e["p"], e["theta"]] for e in result["entries"]]
    if name == "err-gap":
        return ["seed", "kind", "S0", "p", "theta"], [[r["seed"], r["kind"], r["S0"], r["p"], r["theta"]]
                                                      for r in result["per_scene"]]
    arms = ("demosaiced_input", "gt_input") if name == "input-quality" else ("pidsr", "sequential")
    header = ["seed", "kind"] + [f"{a}_{m}" for a in arms for m in ("psnr_s0", "mae_theta_deg")]
    rows = [[r["seed"], r["kind"]] + [r[a][m] for a in arms for m in ("psnr_s0", "mae_theta_deg")]
            for r in result["per_scene"]]
    return header, rows


def cmd_experiment(args):
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    k = 2 ** args.rounds
    name = args.name
    noise = tuple(args.noise)
    if name == "err-vs-res":
        sizes = sorted(args.sizes)
        bad = [s for s in sizes if s % 4]
        if bad:
            raise ConfigError(f"sizes must be divisible by 4: {bad}")
        spec = SceneSpec(seed=args.seed, height=sizes[0], width=sizes[0], kind=args.kind or "texture",
                         p_range=tuple(args.p_range), noise_sigma=noise[0])
        result = experiments.err_vs_res(spec, sizes, jobs=args.jobs)
    else:
        size = args.size
        need = 4 * (k if name in ("input-quality", "complementarity") else 1)
        if size % need:
            raise ConfigError(f"--size {size} must be divisible by {need}")
        kinds = (args.kind,) if args.kind else KINDS
        specs = experiments.scene_suite(args.count, args.seed, size, kinds, noise, tuple(args.p_range))
        if name == "err-gap":
            result = experiments.err_gap(specs, jobs=args.jobs)
        elif name == "input-quality":
            result = experiments.input_quality(specs, args.rounds, jobs=args.jobs)
        else:
            result = experiments.complementarity(specs, args.rounds, jobs=args.jobs)
    result["cli_config"] = _args_echo(args)
    _write_json(args.report, result)
    if args.csv:
        header, rows = _csv_rows(result)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(Path(args.csv), buf.getvalue().encode())
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="polarforge", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--jobs", type=int, default=_default_jobs(),
                       help="worker threads (default: $POLARFORGE_JOBS or 1)")

    def stage_flags(p):
        p.add_argument("--rounds", type=int, default=0, help="SR rounds; output scale 2^rounds")
        p.add_argument("--median-radius", type=int, default=StageConfig.f_median_radius, choices=(0, 1, 2))
        p.add_argument("--denoise", action="store_true", help="median-filter s0 in stage f")
        p.add_argument("--sharpen", action="store_true", help="guided detail boost in stage g")
        p.add_argument("--config", help="StageConfig JSON (overrides the stage flags except --rounds)")

    p = sub.add_parser("simulate", help="generate synthetic samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=128, help="HR size; the raw is size / 2^rounds")
    p.add_argument("--rounds", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--kind", choices=KINDS, default="texture")
    p.add_argument("--p-range", type=float, nargs=2, default=(0.05, 0.5), metavar=("LO", "HI"))
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian sigma added to the raw")
    p.add_argument("--pattern", help="pattern JSON (16 'angle:channel' strings)")
    p.add_argument("--format", choices=FORMATS, default="pfm")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="demosaic / super-resolve raw images")
    p.add_argument("--manifest", nargs="+", help="sample manifests or sample directories")
    p.add_argument("--raw", nargs="+", help="standalone raw planes (.pfm or .png)")
    p.add_argument("--pattern", help="pattern JSON for --raw inputs")
    p.add_argument("--method", choices=METHODS, default="pidsr")
    p.add_argument("--format", choices=FORMATS, default="pfm")
    p.add_argument("--out", required=True)
    stage_flags(p)
    common(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="score reconstructions against ground truth")
    p.add_argument("--manifest", nargs="+", required=True)
    p.add_argument("--pred", required=True, help="reconstruction root or a single stack directory")
    p.add_argument("--method", help="method name recorded in the report")
    p.add_argument("--report", default="-", help="output JSON (default: stdout)")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run a verification experiment")
    p.add_argument("name", choices=("err-gap", "input-quality", "err-vs-res", "complementarity"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--sizes", type=int, nargs="+", default=list(experiments.DEFAULT_SIZES))
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--p-range", type=float, nargs=2, default=(0.05, 0.5), metavar=("LO", "HI"))
    p.add_argument("--noise", type=float, nargs="+", default=[0.0], help="noise levels cycled over scenes")
    p.add_argument("--report", default="-")
    p.add_argument("--csv")
    common(p)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "rounds", 0) < 0:
        parser.error("--rounds must be >= 0")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"polarforge: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"polarforge: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, OSError) as exc:
        print(f"polarforge: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"polarforge: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
