"""Fixed-point iteration of the JPEG block transform.

Blocks are iterated in batches; each block records, per step t, the
coefficient quantization error epsilon_t, the reconstruction error eta_t,
the step length delta_t = ||x_t - x_{t+1}|| and the number of changed
pixels. A block converges at step K when x_{K+1} == x_K; its trace holds rows
t = 0 .. K+1, the last row coming from one extra confirming application.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .blockmath import (
    LEVEL_SHIFT,
    _round_half_away,
    _round_half_up,
    as_pixel_blocks,
    as_quant_table,
    dct_basis,
    transform_parts,
)
from .planes import Plane, assemble_blocks, atomic_write, split_blocks

DEFAULT_MAX_ITER = 64


class ConvergenceError(RuntimeError):
    """A block failed to reach a fixed point or fell into a cycle.

    Carries the offending block indices and the batch telemetry gathered so
    far so the failure can be inspected.
    """

    def __init__(self, message, blocks=None, result=None):
        super().__init__(message)
        self.blocks = blocks
        self.result = result


@dataclass(frozen=True)
class ConvergenceTrace:
    epsilon: np.ndarray
    eta: np.ndarray
    delta: np.ndarray
    changed_pixels: np.ndarray

    def __len__(self):
        return len(self.epsilon)

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.epsilon))

    def rows(self):
        for t in range(len(self)):
            yield (t, float(self.epsilon[t]), float(self.eta[t]),
                   float(self.delta[t]), int(self.changed_pixels[t]))


@dataclass(frozen=True)
class FixpointResult:
    fixpoint: np.ndarray
    iterations: int
    trace: ConvergenceTrace
    converged: bool


@dataclass(frozen=True)
class BatchResult:
    """Telemetry for a stack of blocks iterated together.

    ``epsilon``, ``eta``, ``delta`` and ``changed`` are (N, steps) arrays;
    columns past a block's own K+1 repeat its converged state, and ``eta``
    column 0 is NaN. ``grid_shape`` is set when the blocks came from a plane.
    """

    start: np.ndarray
    fixpoints: np.ndarray
    iterations: np.ndarray
    epsilon: np.ndarray
    eta: np.ndarray
    delta: np.ndarray
    changed: np.ndarray
    converged: np.ndarray
    grid_shape: tuple = field(default=None)

    def __len__(self):
        return len(self.iterations)

    def trace(self, i) -> ConvergenceTrace:
        i = self._flat(i)
        n = min(int(self.iterations[i]) + 2, self.epsilon.shape[1])
        return ConvergenceTrace(
            self.epsilon[i, :n], self.eta[i, :n], self.delta[i, :n], self.changed[i, :n]
        )

    def result(self, i) -> FixpointResult:
        i = self._flat(i)
        return FixpointResult(
            fixpoint=self.fixpoints[i],
            iterations=int(self.iterations[i]),
            trace=self.trace(i),
            converged=bool(self.converged[i]),
        )

    __getitem__ = result

    def _flat(self, i):
        if isinstance(i, tuple):
            if self.grid_shape is None:
                raise IndexError("batch has no grid shape")
            return int(np.ravel_multi_index(i, self.grid_shape))
        return int(i)


def _norm(d: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(d * d, axis=(-2, -1)))


def iterate_blocks(blocks, q, max_iter: int = DEFAULT_MAX_ITER, *, strict: bool = True,
                   **transform_kw) -> BatchResult:
    """Iterate the JPEG transform on every block of a (N, 8, 8) stack.

    Stops once every block satisfies x_{t+1} == x_t exactly and one further
    confirming application has been recorded. With ``strict`` a
    :class:`ConvergenceError` is raised if any block has not converged after
    ``max_iter`` applications or revisits x_{t-1} (a 2-cycle); otherwise those
    blocks are returned with ``converged`` False.

    ``transform_kw`` is passed to :func:`jpegfix.blockmath.transform_parts`
    (used by the mini model; leave empty for 8-bit JPEG).
    """
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    if transform_kw:
        x = np.asarray(blocks, dtype=np.float64)
    else:
        x = as_pixel_blocks(blocks).astype(np.float64)
        q = as_quant_table(q)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"expected a (N, n, n) stack, got shape {x.shape}")
    n_blocks = x.shape[0]
    start = x.copy()

    eps_rows, eta_rows, delta_rows, changed_rows = [], [], [], []
    conv_at = np.full(n_blocks, -1, dtype=np.int64)
    cycling = np.zeros(n_blocks, dtype=bool)
    prev = None
    prev_lattice = None
    t = 0
    while True:
        parts = transform_parts(x, q, **transform_kw)
        nxt = parts.output
        eps_rows.append(parts.epsilon)
        if prev_lattice is None:
            eta_rows.append(np.full(n_blocks, np.nan))
        else:
            # |x_t - recon_{t-1}| evaluated through the orthonormal DCT
            eta_rows.append(_norm(parts.coeffs - prev_lattice))
        diff = x - nxt
        delta_rows.append(_norm(diff))
        changed_rows.append(np.count_nonzero(diff, axis=(-2, -1)))

        same = delta_rows[-1] == 0.0
        conv_at[(conv_at < 0) & same] = t
        if prev is not None:
            back = np.all(nxt == prev, axis=(-2, -1)) & ~same
            cycling |= back & (conv_at < 0)

        pending = (conv_at < 0) & ~cycling
        if pending.any():
            if t + 1 >= max_iter:
                break
        elif t > conv_at.max():
            # every converged block now has its confirming row K+1
            break
        prev, prev_lattice, x = x, parts.lattice, nxt
        t += 1

    done = conv_at >= 0
    iterations = np.where(done, conv_at, t + 1)
    # converged blocks satisfy x == T(x); others report their last iterate
    fixpoints = x.astype(np.uint8)
    result = BatchResult(
        start=start.astype(np.uint8),
        fixpoints=fixpoints,
        iterations=iterations,
        epsilon=np.stack(eps_rows, axis=1),
        eta=np.stack(eta_rows, axis=1),
        delta=np.stack(delta_rows, axis=1),
        changed=np.stack(changed_rows, axis=1),
        converged=done,
    )
    if strict and not done.all():
        bad = np.flatnonzero(~done)
        kind = "2-cycle" if cycling[bad].any() else f"no fixed point within {max_iter} iterations"
        raise ConvergenceError(
            f"{len(bad)} block(s) failed to converge ({kind}); first index {bad[0]}",
            blocks=bad,
            result=result,
        )
    return result


def iterate_block(b, q, max_iter: int = DEFAULT_MAX_ITER) -> FixpointResult:
    """Iterate one 8x8 block to its fixed point; see :func:`iterate_blocks`."""
    b = as_pixel_blocks(b)
    if b.ndim != 2:
        raise ValueError(f"expected a single 8x8 block, got shape {b.shape}")
    return iterate_blocks(b[None], q, max_iter).result(0)


def iterate_plane(p: Plane, q, max_iter: int = DEFAULT_MAX_ITER):
    """Replace every 8x8 block of a grid-aligned plane by its fixed point.

    Returns the fixed-point plane and the per-block :class:`BatchResult`,
    indexable by ``(block_row, block_col)``.
    """
    grid = split_blocks(p)
    rows, cols = grid.shape[:2]
    res = iterate_blocks(grid.reshape(-1, 8, 8), q, max_iter)
    res = BatchResult(**{**res.__dict__, "grid_shape": (rows, cols)})
    return assemble_blocks(res.fixpoints.reshape(rows, cols, 8, 8)), res


# -- trace export -----------------------------------------------------------

TRACE_COLUMNS = ("block_id", "t", "epsilon", "eta", "delta", "changed_pixels")


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def trace_csv(results) -> str:
    """Per-step trace rows as CSV text.

    ``results`` is a :class:`BatchResult` or a sequence of
    :class:`FixpointResult`; ``eta`` is empty at t = 0.
    """
    if isinstance(results, BatchResult):
        traces = [results.trace(i) for i in range(len(results))]
    else:
        traces = [r.trace for r in results]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for block_id, tr in enumerate(traces):
        for t, eps, eta, delta, changed in tr.rows():
            w.writerow((block_id, t, _fmt(eps), _fmt(eta), _fmt(delta), changed))
    return buf.getvalue()


def write_trace_csv(results, path) -> None:
    atomic_write(path, trace_csv(results).encode())


# -- separation (distinct fixed points) ---------------------------------------

@dataclass(frozen=True)
class SeparationVerdict:
    distance: float
    hypothesis_holds: bool
    fixed_points_differ: bool

    @property
    def contradiction(self) -> bool:
        """True if the blocks were far enough apart yet share a fixed point."""
        return self.hypothesis_holds and not self.fixed_points_differ


def separation_check(x, x_other, q, delta_bound: float,
                     max_iter: int = DEFAULT_MAX_ITER) -> SeparationVerdict:
    """Test whether two blocks farther apart than ``2 * delta_bound`` reach
    different fixed points.

    Both blocks should already be JPEG outputs (one transform applied).
    """
    a = as_pixel_blocks(x)
    b = as_pixel_blocks(x_other)
    res = iterate_blocks(np.stack([a, b]), q, max_iter)
    dist = float(_norm(a.astype(np.float64) - b.astype(np.float64)))
    return SeparationVerdict(
        distance=dist,
        hypothesis_holds=2.0 * delta_bound < dist,
        fixed_points_differ=not np.array_equal(res.fixpoints[0], res.fixpoints[1]),
    )


def estimate_delta(q, samples: int = 1_000_000, seed: int = 0,
                   batch: int = 50_000, max_iter: int = DEFAULT_MAX_ITER) -> float:
    """Largest observed distance from a uniform random block to its fixed point.

    An empirical lower estimate of the global bound; the exact value is out of
    reach at 8x8 scale.
    """
    rng = np.random.default_rng(seed)
    q = as_quant_table(q)
    best = 0.0
    left = samples
    while left > 0:
        n = min(batch, left)
        blocks = rng.integers(0, 256, size=(n, 8, 8), dtype=np.uint8)
        res = iterate_blocks(blocks, q, max_iter)
        d = _norm(blocks.astype(np.float64) - res.fixpoints)
        best = max(best, float(d.max()))
        left -= n
    return best


# -- exhaustive mini model ----------------------------------------------------

def _round_half_even(x):
    return np.round(x)


TIE_BREAKS = {
    "half-away": _round_half_away,
    "half-up": _round_half_up,
    "half-even": _round_half_even,
}


@dataclass(frozen=True)
class MiniModel:
    """A down-scaled JPEG transform whose whole block space can be enumerated.

    ``n`` x ``n`` blocks with samples in [0, pixel_max], an n-point orthonormal
    DCT and one scalar quantization step. ``shift`` is the level shift and
    ``tie_break`` the pixel rounding rule; the defaults mirror the 8x8 path
    without the shift. Other tie rules exist as negative controls.
    """

    n: int = 2
    pixel_max: int = 15
    q: int = 1
    shift: float = 0.0
    tie_break: str = "half-away"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("block size must be positive")
        if self.pixel_max < 0:
            raise ValueError("pixel range must be non-negative")
        if self.q < 1:
            raise ValueError("quantization step must be >= 1")
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"unknown tie_break {self.tie_break!r}")

    @property
    def basis(self) -> np.ndarray:
        return dct_basis(self.n).matrix

    @property
    def size(self) -> int:
        return (self.pixel_max + 1) ** (self.n * self.n)

    def transform_kw(self) -> dict:
        return dict(shift=self.shift, lo=0, hi=self.pixel_max,
                    pixel_round=TIE_BREAKS[self.tie_break])

    def blocks(self, index: np.ndarray) -> np.ndarray:
        """Decode enumeration indices into (len, n, n) blocks (base pixel_max+1 digits)."""
        base = self.pixel_max + 1
        k = self.n * self.n
        digits = (np.asarray(index)[:, None] // base ** np.arange(k)) % base
        return digits.reshape(-1, self.n, self.n)

    def index(self, blocks: np.ndarray) -> np.ndarray:
        base = self.pixel_max + 1
        k = self.n * self.n
        flat = np.asarray(blocks).reshape(-1, k).astype(np.int64)
        return flat @ (base ** np.arange(k, dtype=np.int64))


@dataclass
class MiniModelReport:
    model: MiniModel
    omega_sizes: list
    nested: bool
    successor: np.ndarray
    fixed_points: np.ndarray
    steps: np.ndarray
    converged: np.ndarray
    stabilized: bool
    tau_max: int
    delta: float
    delta_sq: int
    max_shared_distance: float
    separation_violations: int
    cycles: list
    counterexamples: list

    @property
    def fixed_count(self) -> int:
        return len(self.fixed_points)

    @property
    def all_converged(self) -> bool:
        return bool(self.converged.all())

    @property
    def passed(self) -> bool:
        return (self.nested and self.all_converged and self.stabilized
                and self.separation_violations == 0)


def enumerate_mini_model(m: MiniModel, budget: int = 10**7) -> MiniModelReport:
    """Run the mini transform on every block and check the fixed-point theory.

    Builds the successor map, the nested chain of image sets
    Omega_{t+1} = T(Omega_t) up to stabilization, per-block steps to a fixed
    point, the exact maximum distance ``delta`` from a block to its fixed
    point, and an exhaustive check that no two once-transformed blocks farther
    apart than ``2 * delta`` share a fixed point.
    """
    total = m.size
    if total > budget:
        raise ValueError(f"mini model has {total} blocks, above the budget of {budget}")
    everything = np.arange(total, dtype=np.int64)
    blocks = m.blocks(everything)
    out = transform_parts(blocks.astype(np.float64), float(m.q), **m.transform_kw()).output
    succ = m.index(out)

    # nested image sets
    omega = everything
    sizes = [len(omega)]
    nested = True
    for _ in range(total + 1):
        nxt = np.unique(succ[omega])
        nested &= bool(np.isin(nxt, omega, assume_unique=True).all())
        if len(nxt) == len(omega) and np.array_equal(nxt, omega):
            break
        omega = nxt
        sizes.append(len(omega))
    chain_len = len(sizes) - 1

    fixed = np.flatnonzero(succ == everything)
    stabilized = np.array_equal(omega, fixed)

    # per-block walk to the fixed point
    cur = everything.copy()
    steps = np.zeros(total, dtype=np.int64)
    active = succ[cur] != cur
    for _ in range(chain_len + 2):
        if not active.any():
            break
        cur[active] = succ[cur[active]]
        steps[active] += 1
        active = succ[cur] != cur
    converged = ~active

    cycles = []
    two = np.flatnonzero((succ[succ] == everything) & (succ != everything))
    for i in two[:5]:
        cycles.append((blocks[i].tolist(), blocks[succ[i]].tolist()))

    counterexamples = []
    if not converged.all():
        for i in np.flatnonzero(~converged)[:5]:
            counterexamples.append(blocks[i].tolist())

    diffs = (blocks - m.blocks(cur)).reshape(total, -1).astype(np.int64)
    dist_sq = np.sum(diffs * diffs, axis=1)
    delta_sq = int(dist_sq[converged].max()) if converged.any() else 0

    violations, max_shared_sq = _separation_violations(m, succ, cur, converged, delta_sq)

    return MiniModelReport(
        model=m,
        omega_sizes=sizes,
        nested=nested,
        successor=succ,
        fixed_points=fixed,
        steps=steps,
        converged=converged,
        stabilized=bool(stabilized),
        tau_max=int(steps.max()) if total else 0,
        delta=math.sqrt(delta_sq),
        delta_sq=delta_sq,
        max_shared_distance=math.sqrt(max_shared_sq),
        separation_violations=violations,
        cycles=cycles,
        counterexamples=counterexamples,
    )


def _separation_violations(m, succ, fixed_of, converged, delta_sq, chunk=2048):
    """Count pairs in Omega_1 sharing a fixed point while farther apart than 2*delta.

    Squared distances are integers, so the comparison d^2 > 4 delta^2 is exact.
    """
    omega1 = np.unique(succ)
    omega1 = omega1[converged[omega1]]
    fp = fixed_of[omega1]
    order = np.argsort(fp, kind="stable")
    omega1, fp = omega1[order], fp[order]
    bounds = np.flatnonzero(np.diff(fp)) + 1
    groups = np.split(np.arange(len(omega1)), bounds)
    pts = m.blocks(omega1).reshape(len(omega1), -1).astype(np.int64)
    limit = 4 * delta_sq
    violations = 0
    max_sq = 0
    for g in groups:
        if len(g) < 2:
            continue
        v = pts[g]
        for s in range(0, len(g), chunk):
            a = v[s : s + chunk]
            d = a[:, None, :] - v[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", d, d)
            max_sq = max(max_sq, int(d2.max()))
            violations += int(np.count_nonzero(d2 > limit))
    # each unordered pair was counted twice
    return violations // 2, max_sq
