"""Command-line front end.

Exit codes: 0 success / intact, 1 tampered or a failed check, 2 usage,
I/O or parse error. Set ``JPEGFIX_THREADS`` to cap worker threads used by the
experiment commands.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .blockmath import jpeg_transform
from .fixpoint import ConvergenceError, MiniModel, TIE_BREAKS, enumerate_mini_model, iterate_blocks
from .jfif import JpegError, decode_baseline, encode_baseline, standard_tables
from .planes import (
    GRAYSCALE,
    ImagePlanes,
    PnmParseError,
    assemble_blocks,
    atomic_write,
    crop_to_block_grid,
    format_pnm,
    parse_pnm,
    psnr,
    split_blocks,
)
from .tamper import fixpoint_image, resolve_tables, verify

EXIT_OK = 0
EXIT_TAMPERED = 1
EXIT_ERROR = 2
CHAINS_SCHEMA = "# jpegfix chains v1"
PSNR_SCHEMA = "# jpegfix psnr v1"
MINI_SCHEMA = "# jpegfix mini-oracle v1"
SLACK = 1e-9


class CliError(Exception):
    pass


@dataclass
class ExperimentConfig:
    command: str
    inputs: list = field(default_factory=list)
    output: str = None
    qualities: list = field(default_factory=list)
    samples: int = 10_000
    seed: int = 0
    max_iter: int = 64
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples < 1:
            raise CliError("sample count must be >= 1")
        bad = [q for q in self.qualities if not 1 <= q <= 100]
        if bad:
            raise CliError(f"qualities must lie in 1..100, got {bad}")
        if self.max_iter < 1:
            raise CliError("max-iter must be >= 1")


def _quality(text):
    try:
        q = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"quality must be an integer, got {text!r}") from None
    if not 1 <= q <= 100:
        raise argparse.ArgumentTypeError(f"quality must lie in 1..100, got {q}")
    return q


def _quality_list(text):
    return [_quality(t) for t in text.split(",") if t.strip()]


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _threads():
    v = os.environ.get("JPEGFIX_THREADS")
    if v:
        return max(1, int(v))
    return min(4, os.cpu_count() or 1)


def _map(fn, items):
    """Ordered parallel map; results do not depend on scheduling."""
    items = list(items)
    n = min(_threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as ex:
        return list(ex.map(fn, items))


def load_image(path):
    """Read a PNM or JPEG file; JPEG input also returns its per-plane tables."""
    data = Path(path).read_bytes()
    if data[:2] == b"\xFF\xD8":
        return decode_baseline(data)
    if data[:2] in (b"P5", b"P6"):
        return parse_pnm(data), None
    raise CliError(f"{path}: not a PGM/PPM or JPEG file")


def _write_text(path, text):
    atomic_write(path, text.encode())


def _percentiles(values, ps=(50, 90, 99)):
    return {p: float(np.percentile(values, p)) for p in ps}


# -- fixpoint -------------------------------------------------------------------

def cmd_fixpoint(args) -> int:
    cfg = ExperimentConfig("fixpoint", [args.input], args.output,
                           [args.quality] if args.quality else [], max_iter=args.max_iter)
    img, file_tables = load_image(args.input)
    if args.quality is not None:
        tables = resolve_tables(img, args.quality)
    elif file_tables is not None:
        tables = file_tables
    else:
        raise CliError("--quality is required for PNM input")
    img = crop_to_block_grid(img)
    fixed, results = fixpoint_image(img, tables, cfg.max_iter)
    iters = np.concatenate([r.iterations for r in results])
    width = max(r.changed.shape[1] for r in results)
    per_pass = np.zeros(width, dtype=np.int64)
    for r in results:
        per_pass[: r.changed.shape[1]] += r.changed.sum(axis=0)
    pc = _percentiles(iters)
    print(f"{img.width}x{img.height} {img.mode}, {len(iters)} blocks")
    print(f"iterations per block: median {pc[50]:g}, p90 {pc[90]:g}, p99 {pc[99]:g}, max {iters.max()}")
    for t, n in enumerate(per_pass, start=1):
        print(f"pass {t}: {n} pixels changed")
        if n == 0:
            break
    stream = encode_baseline(fixed, tables[0], tables[1] if len(tables) > 1 else None)
    if cfg.output:
        atomic_write(cfg.output, stream)
        print(f"wrote {cfg.output} ({len(stream)} bytes)")
    if args.pnm:
        atomic_write(args.pnm, format_pnm(fixed))
    check = verify(decode_baseline(stream)[0], tables=tables)
    print(f"verification: {check.verdict}")
    return EXIT_OK if check.verdict == "intact" else EXIT_TAMPERED


# -- verify -----------------------------------------------------------------------

def cmd_verify(args) -> int:
    img, tables = load_image(args.input)
    if args.quality is not None:
        tables = resolve_tables(img, args.quality)
    elif tables is None:
        raise CliError("--quality is required for PNM input (JPEG files carry their tables)")
    report = verify(img, tables=tables)
    if args.report:
        _write_text(args.report, report.to_json())
    if args.mask:
        atomic_write(args.mask, format_pnm(report.mask_plane()))
    print(f"{report.verdict}: {report.changed_block_count} of {report.total_blocks} blocks changed")
    return EXIT_OK if report.verdict == "intact" else EXIT_TAMPERED


# -- chains experiment -----------------------------------------------------------------

CHAINS_COLUMNS = (
    "quality", "t", "converged", "delta_mean", "delta_p50", "delta_p90", "delta_max",
    "eps_minus_eta_next_min", "eps_minus_eta_next_negative",
    "eps_next_minus_eta_next_max", "eps_next_minus_eta_next_positive",
)


def chain_statistics(res):
    """Per-step aggregates over a batch: one dict per t = 0 .. max iterations."""
    eps, eta, delta = res.epsilon, res.eta, res.delta
    rows = []
    for t in range(int(res.iterations.max()) + 1):
        gap_prev = eps[:, t] - eta[:, t + 1]
        gap_next = eps[:, t + 1] - eta[:, t + 1]
        d = delta[:, t]
        rows.append({
            "t": t,
            "converged": int(np.count_nonzero(res.iterations <= t)),
            "delta_mean": float(d.mean()),
            "delta_p50": float(np.percentile(d, 50)),
            "delta_p90": float(np.percentile(d, 90)),
            "delta_max": float(d.max()),
            "eps_minus_eta_next_min": float(gap_prev.min()),
            "eps_minus_eta_next_negative": int(np.count_nonzero(gap_prev < -SLACK)),
            "eps_next_minus_eta_next_max": float(gap_next.max()),
            "eps_next_minus_eta_next_positive": int(np.count_nonzero(gap_next > SLACK)),
        })
    return rows


def run_chains(cfg: ExperimentConfig):
    """Random blocks, one JPEG transform, then iterate; aggregates per quality."""
    const = cfg.flags.get("constant_block")

    def one(quality):
        q = standard_tables(quality)[0]
        # each quality draws from its own stream so results do not depend on order
        rng = np.random.default_rng([cfg.seed, quality])
        if const is None:
            blocks = rng.integers(0, 256, size=(cfg.samples, 8, 8), dtype=np.uint8)
        else:
            blocks = np.full((cfg.samples, 8, 8), const, dtype=np.uint8)
        start = jpeg_transform(blocks, q)
        res = iterate_blocks(start, q, cfg.max_iter)
        return quality, res, chain_statistics(res)

    return _map(one, cfg.qualities)


def chains_csv(outcomes) -> str:
    buf = io.StringIO()
    buf.write(CHAINS_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CHAINS_COLUMNS)
    for quality, _, rows in outcomes:
        for r in rows:
            w.writerow([quality] + [repr(r[c]) if isinstance(r[c], float) else r[c]
                                    for c in CHAINS_COLUMNS[1:]])
    return buf.getvalue()


def cmd_chains(args) -> int:
    cfg = ExperimentConfig("chains", [], args.csv, args.quality, args.samples, args.seed,
                           args.max_iter, {"constant_block": args.constant_block})
    outcomes = run_chains(cfg)
    bad = 0
    for quality, res, rows in outcomes:
        it = res.iterations
        neg = sum(r["eps_minus_eta_next_negative"] for r in rows)
        pos = sum(r["eps_next_minus_eta_next_positive"] for r in rows)
        bad += neg + pos
        print(f"quality {quality}: {res.converged.mean():.2%} converged, "
              f"iterations median {np.median(it):g} max {it.max()}, "
              f"chain violations {neg} + {pos}")
    text = chains_csv(outcomes)
    if cfg.output:
        _write_text(cfg.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if bad == 0 else EXIT_TAMPERED


# -- PSNR experiment -----------------------------------------------------------------------

def spearman(x, y) -> float:
    """Rank correlation with average ranks for ties."""
    def ranks(v):
        v = np.asarray(v, dtype=np.float64)
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v))
        r[order] = np.arange(len(v), dtype=np.float64)
        for val in np.unique(v):
            idx = v == val
            r[idx] = r[idx].mean()
        return r
    rx, ry = ranks(x), ranks(y)
    if len(rx) < 2 or rx.std() == 0 or ry.std() == 0:
        return float("nan")
    return float(np.corrcoef(rx, ry)[0, 1])


def run_psnr(img: ImagePlanes, cfg: ExperimentConfig):
    img = crop_to_block_grid(img)
    luma = img.planes[0]

    def one(quality):
        tables = resolve_tables(img, quality)
        single = assemble_blocks(jpeg_transform(split_blocks(luma), tables[0]))
        fixed, results = fixpoint_image(img, tables, cfg.max_iter)
        iters = int(max(r.iterations.max() for r in results))
        return quality, psnr(fixed.planes[0], single), iters

    return _map(one, cfg.qualities)


def cmd_psnr(args) -> int:
    cfg = ExperimentConfig("psnr", [args.input], args.csv, args.qualities, max_iter=args.max_iter)
    img, _ = load_image(args.input)
    rows = run_psnr(img, cfg)
    finite = [r for r in rows if math.isfinite(r[1])]
    for q, db, _ in rows:
        if not math.isfinite(db):
            print(f"quality {q}: fixed point equals the single-JPEG image; row omitted")
    buf = io.StringIO()
    buf.write(PSNR_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("quality", "psnr_db", "iterations"))
    for q, db, it in finite:
        w.writerow((q, repr(db), it))
        print(f"quality {q}: {db:.3f} dB after {it} iterations")
    rho = spearman([r[0] for r in finite], [r[1] for r in finite])
    print(f"rank correlation (quality vs PSNR): {rho:.3f}")
    if cfg.output:
        _write_text(cfg.output, buf.getvalue())
    return EXIT_OK


# -- mini-model oracle ---------------------------------------------------------------------

MINI_COLUMNS = ("n", "range", "q", "shift", "tie_break", "omega_sizes", "fixed_points",
                "tau_max", "delta", "max_shared_distance", "nested", "all_converged",
                "stabilized", "separation_violations", "verdict")


def cmd_mini_oracle(args) -> int:
    buf = io.StringIO()
    buf.write(MINI_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MINI_COLUMNS)
    failed = False
    for q in args.q:
        m = MiniModel(n=args.n, pixel_max=args.range, q=q, shift=args.shift,
                      tie_break=args.tie_break)
        try:
            rep = enumerate_mini_model(m)
        except ValueError as e:
            raise CliError(str(e)) from None
        verdict = "PASS" if rep.passed else "FAIL"
        failed |= not rep.passed
        w.writerow((m.n, m.pixel_max, q, m.shift, m.tie_break,
                    ";".join(map(str, rep.omega_sizes)), rep.fixed_count, rep.tau_max,
                    repr(rep.delta), repr(rep.max_shared_distance), rep.nested,
                    rep.all_converged, rep.stabilized, rep.separation_violations, verdict))
        print(f"q={q}: {verdict}  |fixed|={rep.fixed_count} tau_max={rep.tau_max} "
              f"delta={rep.delta:.6g} chain={rep.omega_sizes}")
        if not rep.passed:
            print(f"q={q}: nested={rep.nested} converged={rep.all_converged} "
                  f"stabilized={rep.stabilized} separation_violations={rep.separation_violations}",
                  file=sys.stderr)
            for a, b in rep.cycles:
                print(f"q={q}: counterexample cycle {a} <-> {b}", file=sys.stderr)
            for blk in rep.counterexamples:
                print(f"q={q}: non-converging block {blk}", file=sys.stderr)
    if args.csv:
        _write_text(args.csv, buf.getvalue())
    return EXIT_TAMPERED if failed else EXIT_OK


# -- entry point -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jpegfix", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fixpoint", help="make a tamper-evident JPEG from a PNM or JPEG file")
    f.add_argument("input")
    f.add_argument("--quality", "-q", type=_quality,
                   help="JPEG quality 1..100 (default for JPEG input: its own tables)")
    f.add_argument("-o", "--output", help="output .jpg path")
    f.add_argument("--pnm", help="also write the fixed-point image as PGM/PPM")
    f.add_argument("--max-iter", type=int, default=64)
    f.set_defaults(func=cmd_fixpoint)

    v = sub.add_parser("verify", help="check a tamper-evident image; exit 0 intact, 1 tampered")
    v.add_argument("input")
    v.add_argument("--quality", "-q", type=_quality,
                   help="override the tables (required for PNM input)")
    v.add_argument("--report", help="write a JSON report here")
    v.add_argument("--mask", help="write a PGM overlay of flagged blocks here")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("chains", help="convergence telemetry on random 8x8 blocks")
    c.add_argument("--samples", "-n", type=int, default=10_000)
    c.add_argument("--quality", type=_quality_list, default=[50, 75, 90],
                   help="comma-separated qualities (default 50,75,90)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--max-iter", type=int, default=64)
    c.add_argument("--constant-block", type=int, choices=range(256), metavar="0..255",
                   help="use constant blocks of this value instead of random ones")
    c.add_argument("--csv", help="write aggregates here (default: stdout)")
    c.set_defaults(func=cmd_chains)

    s = sub.add_parser("psnr", help="PSNR between fixed-point and single-JPEG images")
    s.add_argument("input")
    s.add_argument("--qualities", type=_quality_list, default=[30, 50, 70, 90])
    s.add_argument("--max-iter", type=int, default=64)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_psnr)

    m = sub.add_parser("mini-oracle", help="exhaustive check on a down-scaled transform")
    m.add_argument("--n", type=int, default=2)
    m.add_argument("--range", type=int, default=15, help="largest pixel value")
    m.add_argument("--q", type=_int_list, default=[1, 2, 3, 5])
    m.add_argument("--shift", type=float, default=0.0, help="level shift (negative controls)")
    m.add_argument("--tie-break", choices=sorted(TIE_BREAKS), default="half-away",
                   help="pixel rounding tie rule (negative controls)")
    m.add_argument("--csv")
    m.set_defaults(func=cmd_mini_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, JpegError, PnmParseError, OSError) as e:
        print(f"jpegfix {args.command}: error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except ConvergenceError as e:
        print(f"jpegfix {args.command}: {e}", file=sys.stderr)
        return EXIT_TAMPERED


if __name__ == "__main__":
    sys.exit(main())
