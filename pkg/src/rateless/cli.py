"""Command-line front end.

Every command writes its outputs plus ``manifest.json`` into ``--out``.
The manifest stores the argument list with the seed resolved, so
``rateless replay manifest.json`` regenerates byte-identical files.

Exit codes: 0 success, 2 validation failure or nonconvergence,
3 no code exists at the requested rate, 4 I/O or parse error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as rio
from . import tables
from .capacity import CodeSpec, ThresholdMode, threshold_schedule
from .closed_form import RateTooHigh, design_2x2, design_3x3
from .optimizer import OptimizerConfig, optimize_gain_matrix, shortfall_report
from .power_alloc import allocate_powers, verify_allocation
from .simulator import DITHER_ALPHABETS, SimConfig, simulate_dithered_repetition

log = logging.getLogger("rateless")

EXIT_OK, EXIT_INVALID, EXIT_NO_CODE, EXIT_IO = 0, 2, 3, 4
SEED_ENV = "RATELESS_SEED"
# a closed-form design counts as exact below this percent shortfall
DESIGN_TOL_PCT = 1e-6
ALLOC_TOL = 1e-9


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"error: {SEED_ENV}={raw!r} is not an integer")


class _Run:
    """Collects output files for one command and writes the manifest."""

    def __init__(self, args, argv):
        self.command = args.command if args.command != "tables" else f"tables {args.which}"
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.argv = argv
        self.seed = getattr(args, "seed", None)
        self.files: list[str] = []
        self.extra: dict = {}

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_text(text)
        self.files.append(name)
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write(name, rio.dumps_json(obj))

    def finish(self, code: int) -> int:
        manifest = {
            "command": self.command,
            "argv": self.argv,
            "seed": self.seed,
            "version": __version__,
            "exit_code": code,
            "outputs": {f: rio.sha256_file(self.out / f) for f in sorted(self.files)},
            **self.extra,
        }
        rio.write_json(self.out / "manifest.json", manifest)
        return code


def _print_grid(title: str, text: str):
    print(title)
    print(text, end="")


# --- commands -----------------------------------------------------------------

def cmd_design(args, run: _Run) -> int:
    n = int(args.size[0])
    G = design_2x2(args.rate, args.power) if n == 2 else design_3x3(args.rate, args.power)
    spec = CodeSpec(args.rate, n, n, G.power, 1.0)
    rep = shortfall_report(G, spec, threshold_schedule(spec, ThresholdMode.IDEAL))
    run.write_json("gain_matrix.json", G.to_dict())
    run.write("shortfall.csv", rio.shortfall_csv(rep))
    rounded = rio.shortfall_csv(rep, decimals=2)
    run.write("shortfall_rounded.csv", rounded)

    print(f"{args.size} design, R = {args.rate:g}, P = {G.power:.6g}")
    print("squared magnitudes:")
    for row in G.mag ** 2:
        print("  " + "  ".join(f"{v:10.6f}" for v in row))
    print("phases (rad):")
    for row in G.phase:
        print("  " + "  ".join(f"{v:10.6f}" for v in row))
    print(f"unitarity residual {rep.unitarity_residual:.3e}, max shortfall {rep.max_shortfall:.3e}%")
    ok = rep.max_shortfall < DESIGN_TOL_PCT
    run.extra["max_shortfall_pct"] = rep.max_shortfall
    return EXIT_OK if ok else EXIT_INVALID


def cmd_optimize(args, run: _Run) -> int:
    power = args.power if args.power is not None else 2.0 ** args.rate - 1.0
    spec = CodeSpec(args.rate, args.layers, args.blocks, power, args.noise_var)
    schedule = None
    if args.thresholds != "auto":
        schedule = threshold_schedule(spec, args.thresholds)
    cfg = OptimizerConfig(
        max_iterations=args.max_iterations,
        restarts=args.restarts,
        seed=args.seed,
        orth_weight=args.orth_weight,
        target=args.target,
        workers=args.workers,
        stop_at_target=args.stop_at_target,
    )
    G, rep = optimize_gain_matrix(spec, cfg, schedule)
    run.write_json("gain_matrix.json", G.to_dict())
    run.write("shortfall.csv", rio.shortfall_csv(rep))
    rounded = rio.shortfall_csv(rep, decimals=2)
    run.write("shortfall_rounded.csv", rounded)
    _print_grid("percent shortfall (rows: layer, columns: blocks)", rounded)
    print(f"max shortfall {rep.max_shortfall:.4g}%  status {rep.status}")
    run.extra.update(status=rep.status, max_shortfall_pct=rep.max_shortfall)
    return EXIT_OK if rep.status == "success" else EXIT_INVALID


def _spec_from_rate_args(args) -> CodeSpec:
    rate = args.rate if args.rate is not None else args.per_layer_rate * args.layers
    power = args.power if args.power is not None else 2.0 ** rate - 1.0
    return CodeSpec(rate, args.layers, args.blocks, power, args.noise_var)


def cmd_allocate(args, run: _Run) -> int:
    alloc = allocate_powers(_spec_from_rate_args(args))
    resid = float(np.max(np.abs(verify_allocation(alloc))))
    run.write_json("allocation.json", alloc.to_dict())
    run.write("allocation.csv", rio.allocation_csv(alloc))
    rounded = rio.allocation_csv(alloc, decimals=2)
    run.write("allocation_rounded.csv", rounded)
    _print_grid("per-layer powers (rows: layer, columns: block)", rounded)
    sums = alloc.powers.sum(axis=1)
    print(f"row sums {np.min(sums):.6g}..{np.max(sums):.6g}, max MI residual {resid:.2e} bits")
    run.extra["max_residual_bits"] = resid
    return EXIT_OK if resid < ALLOC_TOL else EXIT_INVALID


def cmd_tables(args, run: _Run) -> int:
    which = args.which
    if which == "loss":
        grid = tables.loss_table(args.rate, args.max_layers, args.max_blocks)
        rows = [f"L={L}" for L in range(1, grid.shape[0] + 1)]
        cols = [f"m={m}" for m in range(2, grid.shape[1] + 2)]
        full = rio.grid_csv(grid, rows, cols, corner="layers")
        rounded = rio.grid_csv(grid, rows, cols, corner="layers", decimals=2)
        title = f"layering loss in dB at R = {args.rate:g}"
    elif which == "shortfall":
        G = rio.read_gain_matrix(args.gain_matrix) if args.gain_matrix else None
        rep = tables.reference_shortfall(G, args.rate)
        full, rounded = rio.shortfall_csv(rep), rio.shortfall_csv(rep, decimals=2)
        title = "percent shortfall at layered-bound thresholds"
    elif which == "powers":
        alloc = allocate_powers(_spec_from_rate_args(args))
        full, rounded = rio.allocation_csv(alloc), rio.allocation_csv(alloc, decimals=2)
        title = "per-layer powers"
    else:
        data = tables.efficiency_curves(args.max_rate, args.points)
        full = _plain_csv(["base_rate", "mid", "linear"], data, None)
        rounded = _plain_csv(["base_rate", "mid", "linear"], data, 4)
        title = "efficiency lower bounds"
    run.write(f"{which}.csv", full)
    run.write(f"{which}_rounded.csv", rounded)
    _print_grid(title, rounded)
    return EXIT_OK


def _plain_csv(header, data, decimals) -> str:
    lines = [",".join(header)]
    lines += [",".join(rio._fmt(v, decimals) for v in row) for row in data]
    return "\n".join(lines) + "\n"


def _sim_csv(runs) -> str:
    L = runs[0][1].analytic_sinr.shape[1]
    lines = [",".join(["at_m", "grid", "m"] + [f"l={l}" for l in range(1, L + 1)])]
    for at_m, rep in runs:
        for name, grid in (("empirical", rep.empirical_sinr), ("analytic", rep.analytic_sinr),
                           ("relative_se", rep.relative_se)):
            for m, row in enumerate(grid, start=1):
                lines.append(",".join([str(at_m), name, str(m)] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


def cmd_simulate(args, run: _Run) -> int:
    alloc = rio.read_allocation(args.allocation)
    M = alloc.blocks
    if args.m == "all":
        ms = list(range(1, M + 1))
    else:
        try:
            ms = [int(args.m)]
        except ValueError:
            raise ValueError(f"--m must be an integer or 'all', got {args.m!r}")
        if not 1 <= ms[0] <= M:
            raise ValueError(f"--m must be in 1..{M}")
    runs = []
    for m in ms:
        cfg = SimConfig(alloc, args.num_symbols, args.seed, alloc.thresholds[m],
                        dither=args.dither, workers=args.workers)
        rep = simulate_dithered_repetition(cfg)
        runs.append((m, rep))
        err = np.abs(rep.relative_error[m - 1])
        print(f"m={m}: SINR from {m} blocks {rep.empirical_sinr[m - 1].round(4).tolist()} "
              f"vs analytic {rep.analytic_sinr[m - 1].round(4).tolist()}, "
              f"max |rel err| {100 * err.max():.3f}% (5 SE {500 * rep.relative_se[m - 1].max():.3f}%); "
              f"block correlation {rep.max_offdiag_corr:.4f}; "
              f"whole grid within 5 SE: {'yes' if rep.within(5.0) else 'no'}")
    run.write_json("simulation.json", {"runs": [{"at_m": m, **r.to_dict()} for m, r in runs]})
    run.write("simulation.csv", _sim_csv(runs))
    ok = all(r.within(5.0) for _, r in runs)
    run.extra["within_5_se"] = ok
    return EXIT_OK if ok else EXIT_INVALID


def cmd_replay(args) -> int:
    manifest = rio.load_json(args.manifest)
    try:
        argv, expected = list(manifest["argv"]), manifest["outputs"]
    except (KeyError, TypeError) as exc:
        raise rio.ParseError(f"{args.manifest}: not a manifest (missing {exc})") from exc
    out = Path(args.out)
    code = main(argv + ["--out", str(out)])
    got = rio.load_json(out / "manifest.json")["outputs"]
    same = True
    for name, digest in sorted(expected.items()):
        match = got.get(name) == digest
        same &= match
        print(f"{'same' if match else 'DIFFERENT':9s} {name}")
    if set(got) != set(expected):
        same = False
        print("output file sets differ")
    print("replay reproduced every output" if same else "replay mismatch")
    return code if same else EXIT_INVALID


# --- parser -------------------------------------------------------------------

def _add_rate_args(p, *, per_layer: bool):
    g = p.add_mutually_exclusive_group(required=True) if per_layer else p
    g.add_argument("--rate", type=float, help="ceiling rate R (b/s/Hz, complex symbol)")
    if per_layer:
        g.add_argument("--per-layer-rate", type=float, help="rate per layer R/L")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rateless", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def out_arg(p):
        p.add_argument("-o", "--out", default=".", help="output directory (default: .)")

    p = sub.add_parser("design", help="closed-form perfect 2x2 or 3x3 gain matrix")
    p.add_argument("--size", choices=("2x2", "3x3"), required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--power", type=float, default=None, help="power P (default 2^R - 1)")
    out_arg(p)

    p = sub.add_parser("optimize", help="numerically optimised gain matrix")
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--blocks", type=int, required=True)
    p.add_argument("--power", type=float, default=None, help="power P (default 2^R - 1)")
    p.add_argument("--noise-var", type=float, default=1.0)
    p.add_argument("--thresholds", choices=("auto", "ideal", "layered_bound"), default="auto",
                   help="auto: ideal when L = M, layered bound otherwise")
    p.add_argument("--seed", type=int, default=None, help=f"default: ${SEED_ENV} or 0")
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--max-iterations", type=int, default=2000)
    p.add_argument("--orth-weight", type=float, default=1.0)
    p.add_argument("--target", type=float, default=None, help="success threshold in percent")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--stop-at-target", action="store_true")
    out_arg(p)

    p = sub.add_parser("allocate", help="per-block layer powers for dithered repetition")
    _add_rate_args(p, per_layer=True)
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--blocks", type=int, required=True)
    p.add_argument("--power", type=float, default=None, help="power P (default 2^R - 1)")
    p.add_argument("--noise-var", type=float, default=1.0)
    out_arg(p)

    p = sub.add_parser("tables", help="regenerate reference tables and curves")
    tsub = p.add_subparsers(dest="which", required=True)
    t = tsub.add_parser("loss", help="layering loss in dB")
    t.add_argument("--rate", type=float, default=5.0)
    t.add_argument("--max-layers", type=int, default=9)
    t.add_argument("--max-blocks", type=int, default=10)
    out_arg(t)
    t = tsub.add_parser("shortfall", help="percent shortfall of a gain matrix")
    t.add_argument("--gain-matrix", default=None, help="JSON file (default: the reference 10x3)")
    t.add_argument("--rate", type=float, default=5.0)
    out_arg(t)
    t = tsub.add_parser("powers", help="per-layer power table")
    t.add_argument("--rate", type=float, default=None)
    t.add_argument("--per-layer-rate", type=float, default=2.0)
    t.add_argument("--layers", type=int, default=4)
    t.add_argument("--blocks", type=int, default=5)
    t.add_argument("--power", type=float, default=255.0)
    t.add_argument("--noise-var", type=float, default=1.0)
    out_arg(t)
    t = tsub.add_parser("efficiency", help="efficiency lower-bound curves")
    t.add_argument("--max-rate", type=float, default=4.0)
    t.add_argument("--points", type=int, default=200)
    out_arg(t)

    p = sub.add_parser("simulate", help="Monte Carlo SINR check of an allocation")
    p.add_argument("--allocation", required=True, help="allocation JSON from 'allocate'")
    p.add_argument("--m", default="all", help="block count whose threshold sets the gain, or 'all'")
    p.add_argument("--num-symbols", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None, help=f"default: ${SEED_ENV} or 0")
    p.add_argument("--dither", choices=DITHER_ALPHABETS, default="pm1")
    p.add_argument("--workers", type=int, default=1)
    out_arg(p)

    p = sub.add_parser("replay", help="rerun a manifest and compare output digests")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", default="replay", help="output directory (default: replay)")
    return parser


def _strip_out(argv: list[str]) -> list[str]:
    """Argument list without --out, which does not affect file contents."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a in ("-o", "--out"):
            skip = True
        elif not a.startswith(("--out=", "-v", "--verbose")):
            out.append(a)
    return out


COMMANDS = {"design": cmd_design, "optimize": cmd_optimize, "allocate": cmd_allocate,
            "tables": cmd_tables, "simulate": cmd_simulate}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            return cmd_replay(args)
        canon = _strip_out(argv)
        if hasattr(args, "seed"):
            if args.seed is None:
                args.seed = _default_seed()
                canon += ["--seed", str(args.seed)]
        run = _Run(args, canon)
        return run.finish(COMMANDS[args.command](args, run))
    except RateTooHigh as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CODE
    except (rio.ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
