"""Compiled vs numpy kernel timings.

    python benchmarks/bench_kernels.py [--rows N] [--json out.json]
"""
import argparse
import json

from delta6.bench import kernel_bench
from delta6.design import compute_spec
from delta6.geometry import DesignParams
from delta6 import kernels


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--spec", action="store_true", help="also time a full 41^3 x 7^3 design sweep")
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args()
    res = kernel_bench(n_rows=args.rows, repeat=args.repeat)
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in res["backends"]) + f"{'speedup':>10}")
    for name, row in res["kernels"].items():
        cells = "".join(f"{row[b] * 1e3:>10.2f}ms" for b in res["backends"])
        sp = f"{row['speedup']:>9.1f}x" if "speedup" in row else ""
        print(f"{name:<22}{cells}{sp}")
    if args.spec:
        res["design_sweep_s"] = {}
        for b in kernels.available():
            r = compute_spec(DesignParams(), 41, 7, backend=b)
            res["design_sweep_s"][b] = r.elapsed_s
            print(f"design sweep 41^3 x 7^3 [{b}]: {r.elapsed_s:.2f} s")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(res, fh, indent=2)


if __name__ == "__main__":
    main()
