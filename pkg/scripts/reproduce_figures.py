"""Regenerate the figure tables (fig2/fig3/fig4, convergence, QC summary).

Thin wrapper over ``spinnoise sweep`` that also prints the headline numbers:
squeezed/coherent SNR ratios at the lowest and highest density. Run::

    python3 scripts/reproduce_figures.py --out runs/desk
    python3 scripts/reproduce_figures.py --out runs/full --full-scale --workers 4
"""
import argparse
import math
import sys
from collections import defaultdict
from pathlib import Path

from spinnoise.cli import main as cli_main
from spinnoise.io import read_csv_rows


def headline(out: Path):
    rows = read_csv_rows(out / "fig2.csv")
    eta = defaultdict(dict)
    for r in rows:
        key = (float(r["power_mw"]), float(r["density_per_cm3"]))
        eta[key][r["squeezed"]] = float(r["eta85_avgfit"])
    print(f"{'P/mW':>6s}{'n/cm^-3':>10s}{'ratio/dB':>10s}")
    for (p, n), v in sorted(eta.items()):
        if "0" in v and "1" in v:
            print(f"{p:>6.1f}{n:>10.2g}{10 * math.log10(v['1'] / v['0']):>10.2f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--config")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--full-scale", action="store_true", help="100 spectra per point")
    args = ap.parse_args()
    argv = ["sweep", "--out", args.out, "--workers", str(args.workers)]
    if args.config:
        argv += ["--config", args.config]
    if args.full_scale:
        argv.append("--paper-scale")
    code = cli_main(argv)
    if (Path(args.out) / "fig2.csv").exists():
        headline(Path(args.out))
    return code


if __name__ == "__main__":
    sys.exit(main())
