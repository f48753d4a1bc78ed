"""Power-law fit of ExPC versus coupling from a coupling_g scan directory.

    python scripts/fit_g_scaling.py out/fig3_gscan
"""

import argparse
import csv
import sys
from pathlib import Path

from dualdrag.analytics import power_law_fit


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("run_dir", type=Path)
    args = parser.parse_args()
    tables = sorted(args.run_dir.glob("scan_*.csv"))
    if not tables:
        print(f"no scan tables in {args.run_dir}", file=sys.stderr)
        return 1
    print("label,slope,a,r_squared,n_used")
    for path in tables:
        with open(path, newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if r["expc"] not in ("", "nan")]
        fit = power_law_fit([float(r["param"]) for r in rows], [float(r["expc"]) for r in rows])
        print(f"{path.stem[5:]},{fit.slope:.4g},{fit.a:.4g},{fit.r_squared:.4g},{fit.n_used}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
