"""Check the fixed-point theory by brute force on a tiny JPEG.

With 2x2 blocks and 16 grey levels there are only 65,536 blocks, so every
claim can be checked on every block: the images of repeated compression shrink
into each other, every block settles, the shrinking stops exactly at the set
of fixed points, and blocks far enough apart never share a fixed point.

The last run changes the rounding rule on purpose. With a level shift of 8 and
ties rounded upward the walk can bounce between two blocks forever, which is
why one tie rule has to be used consistently.

Run:  python3 demos/04_mini_model.py
"""

from jpegfix.fixpoint import MiniModel, enumerate_mini_model

for q in (1, 2, 3, 5):
    r = enumerate_mini_model(MiniModel(q=q))
    print(f"step {q}: image sizes {r.omega_sizes}")
    print(f"        {r.fixed_count} fixed points, every block settles within {r.tau_max} steps,"
          f" max distance to its fixed point {r.delta:.3f}")
    print(f"        far pairs sharing a fixed point: {r.separation_violations}"
          f"  -> {'PASS' if r.passed else 'FAIL'}")

print()
bad = enumerate_mini_model(MiniModel(q=1, shift=8, tie_break="half-up"))
print("shift 8, ties rounded up:", "PASS" if bad.passed else "FAIL")
a, b = bad.cycles[0]
print(f"  {a} -> {b} -> {a} -> ...")
