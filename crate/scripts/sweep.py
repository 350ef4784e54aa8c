#!/usr/bin/env python3
"""Run streamsolve-bench once per configuration and merge the CSV rows.

Every configuration gets its own process so no state leaks between runs.
The ratio column is recomputed over the merged rows, pairing async and
sync runs of the same solver, stencil and grid.
"""

import argparse
import csv
import io
import itertools
import subprocess
import sys
from pathlib import Path

STENCILS = {
    "5": (2, 5),
    "9": (2, 9),
    "7": (3, 7),
    "27": (3, 27),
}


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--bin", default="target/release/streamsolve-bench")
    p.add_argument("--solvers", default="cg,tfqmr")
    p.add_argument("--modes", default="async,sync")
    p.add_argument("--stencils", default="5,9,7,27", help="point counts")
    p.add_argument("--grids-2d", default="16,32,64")
    p.add_argument("--grids-3d", default="8,16")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--warmups", type=int, default=1)
    p.add_argument("--delay-us", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-it", type=int, default=20)
    p.add_argument("--out", default="-")
    return p.parse_args()


def configs(a):
    for solver, points in itertools.product(a.solvers.split(","), a.stencils.split(",")):
        dim, pts = STENCILS[points]
        grids = a.grids_2d if dim == 2 else a.grids_3d
        for grid, mode in itertools.product(grids.split(","), a.modes.split(",")):
            yield solver, mode, dim, pts, grid


def run_one(a, solver, mode, dim, points, grid):
    cmd = [
        a.bin,
        "--solver", solver,
        "--mode", mode,
        "--dim", str(dim),
        "--points", str(points),
        "--grid", grid,
        "--reps", str(a.reps),
        "--warmups", str(a.warmups),
        "--delay-us", str(a.delay_us),
        "--seed", str(a.seed),
        "--max-it", str(a.max_it),
        "--format", "csv",
    ]
    out = subprocess.run(cmd, capture_output=True, text=True)
    if out.returncode != 0:
        sys.stderr.write(f"failed ({out.returncode}): {' '.join(cmd)}\n{out.stderr}")
        return None
    return list(csv.DictReader(io.StringIO(out.stdout)))


def fill_ratios(rows):
    key = lambda r: (r["solver"], r["dim"], r["points"], r["grid"])
    by_mode = {(key(r), r["mode"]): float(r["min_s"]) for r in rows}
    for r in rows:
        a = by_mode.get((key(r), "async"))
        s = by_mode.get((key(r), "sync"))
        r["ratio"] = f"{a / s}" if a is not None and s else ""


def main():
    a = parse_args()
    if not Path(a.bin).exists():
        sys.exit(f"no benchmark binary at {a.bin}; run cargo build --release first")
    rows, failed = [], 0
    for cfg in configs(a):
        got = run_one(a, *cfg)
        if got is None:
            failed += 1
            continue
        rows.extend(got)
        print(" ".join(map(str, cfg)), file=sys.stderr)
    if not rows:
        sys.exit("no successful runs")
    fill_ratios(rows)
    sink = sys.stdout if a.out == "-" else open(a.out, "w", newline="")
    w = csv.DictWriter(sink, fieldnames=list(rows[0].keys()))
    w.writeheader()
    w.writerows(rows)
    if sink is not sys.stdout:
        sink.close()
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
