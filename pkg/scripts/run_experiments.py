"""
Run the four verification experiments and write JSON and CSV results.

    python3 scripts/run_experiments.py --out results/ --jobs 4
"""
import argparse
import json
import time
from pathlib import Path

from polarforge.cli import main as cli_main


def run(name, out, jobs, extra):
    t0 = time.perf_counter()
    code = cli_main(["experiment", name, "--report", str(out / f"{name}.json"),
                     "--csv", str(out / f"{name}.csv"), "--jobs", str(jobs), *extra])
    if code:
        raise SystemExit(f"{name} failed with exit code {code}")
    result = json.loads((out / f"{name}.json").read_text())
    print(f"{name:<16} {time.perf_counter() - t0:6.1f}s  {json.dumps(result.get('mean', result.get('entries')))}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    common = ["--seed", str(args.seed), "--count", str(args.count)]
    run("err-gap", out, args.jobs, common + ["--size", "64"])
    run("err-vs-res", out, args.jobs, ["--seed", str(args.seed), "--sizes", "64", "128", "256", "512"])
    run("input-quality", out, args.jobs, common + ["--size", "128", "--rounds", "1"])
    run("complementarity", out, args.jobs, common + ["--size", "128", "--rounds", "1", "--noise", "0", "0.01"])


if __name__ == "__main__":
    main()
