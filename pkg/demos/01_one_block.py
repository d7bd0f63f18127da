"""Follow one 8x8 block to its JPEG fixed point.

Compress and decompress the same block over and over with one quantization
table. Each pass either moves the block or leaves it alone; once it stops
moving it never moves again. Along the way the quantization error (epsilon)
and the rounding error (eta) interleave and shrink:

    epsilon_0 >= eta_1 >= epsilon_1 >= eta_2 >= ...

Run:  python3 demos/01_one_block.py [--quality 50] [--seed 3]
"""

import argparse

import numpy as np

from jpegfix.blockmath import jpeg_block_transform
from jpegfix.fixpoint import iterate_block
from jpegfix.jfif import standard_tables

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--quality", type=int, default=50)
parser.add_argument("--seed", type=int, default=3)
args = parser.parse_args()

q = standard_tables(args.quality)[0]
rng = np.random.default_rng(args.seed)

# pick a block that takes a few steps, so there is something to watch
for _ in range(1000):
    block = rng.integers(0, 256, (8, 8), dtype=np.uint8)
    result = iterate_block(block, q)
    if result.iterations >= 4:
        break

print(f"quality {args.quality}, luma DC step {q[0, 0]}")
print("starting block:")
print(block)
print()
print(f"{'t':>3} {'epsilon_t':>12} {'eta_t':>12} {'delta_t':>10} {'changed':>8}")
for t, eps, eta, delta, changed in result.trace.rows():
    eta_s = "" if np.isnan(eta) else f"{eta:12.6f}"
    print(f"{t:>3} {eps:12.6f} {eta_s:>12} {delta:10.4f} {changed:>8}")

x = result.fixpoint
print()
print(f"fixed point reached after {result.iterations} moves:")
print(x)
print("one more round changes",
      int(np.count_nonzero(jpeg_block_transform(x, q) != x)), "pixels")
print("distance from start to fixed point:",
      round(float(np.linalg.norm(block.astype(float) - x)), 3))
