#!/usr/bin/env python3
"""Export Green tables: an interval, a d=2 box and the d=3 whole-lattice profile along an axis.

    python3 scripts/green_tables.py OUTDIR
"""
import sys
from pathlib import Path

import numpy as np

from gglab.green import Domain, infinite_volume_green, lattice_green_bessel, srw_green_exact
from gglab.lattice import build_box
from gglab.snapshots import write_green_csv, write_table


def main(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_green_csv(out / "green_interval_16.csv", srw_green_exact(Domain.interval(16)))
    write_green_csv(out / "green_box_d2_N4.csv", srw_green_exact(build_box(2, 4)).to("occupation"))
    box = build_box(3, 24)
    r = np.arange(1, 21)
    targets = [(int(k), 0, 0) for k in r]
    rec = infinite_volume_green(box, targets)
    bes = [lattice_green_bessel(t) for t in targets]
    write_table(out / "green_d3_axis.csv", ["r", "G_recovered", "G_bessel", "r_G"], zip(r, rec, bes, r * rec),
                {"normalization": "visits", "N": 24, "limit": 3 / (2 * np.pi)})


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "green_tables")
