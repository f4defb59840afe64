"""Print the steady-state MSD table written by ``gmrf-mtl run fig4.cfg``."""
import argparse
import csv

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("summary", nargs="?", default="results/fig4_summary.csv")
args = parser.parse_args()

with open(args.summary, newline="") as fh:
    rows = list(csv.DictReader(fh))
base = next(float(r["steady_msd_db"]) for r in rows if r["algorithm"] == "noncooperative")
print(f"{'algorithm':<24}{'MSD (dB)':>10}{'vs noncoop':>12}{'trials':>8}")
for r in rows:
    db = float(r["steady_msd_db"])
    print(f"{r['algorithm']:<24}{db:>10.2f}{db - base:>12.2f}{r['n_ok']:>8}")
