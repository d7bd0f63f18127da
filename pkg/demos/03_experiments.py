"""Reproduce the convergence and quality experiments as CSV files.

* chains: 10,000 random blocks per quality, compressed once and then iterated
  to their fixed points; per-step mean distance moved and the signs of the
  two error differences.
* psnr: how far the fixed-point image drifts from an ordinary single JPEG of
  the same picture, per quality.

Both are thin wrappers over the ``jpegfix`` command line.

Run:  python3 demos/03_experiments.py [--out demo_out] [--samples 10000]
"""

import argparse
import csv
from pathlib import Path

from skimage import data

from jpegfix.cli import main
from jpegfix.planes import ImagePlanes, store_pnm

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--out", default="demo_out")
parser.add_argument("--samples", type=int, default=10_000)
args = parser.parse_args()
out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)

chains = out / "chains.csv"
main(["chains", "--samples", str(args.samples), "--quality", "50,75,90", "--csv", str(chains)])
with chains.open() as fh:
    rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
print()
print("mean distance moved per step (0 once every block has settled):")
for quality in ("50", "75", "90"):
    curve = [float(r["delta_mean"]) for r in rows if r["quality"] == quality]
    print(f"  q{quality}: " + " ".join(f"{v:.3f}" for v in curve))

camera = out / "camera.pgm"
store_pnm(ImagePlanes.gray(data.camera()), camera)
print()
main(["psnr", str(camera), "--qualities", "10,30,50,70,90,100", "--csv", str(out / "psnr.csv")])
print(f"\nCSV files are in {out}/")
