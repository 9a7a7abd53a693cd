"""Command-line front end: simulate, scatter, ccdf, test, calibrate, power.

Exit status is 0 on success, 1 on usage or input errors and 2 on numerical
failures. Every output file starts with '#' provenance lines.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibrate import (REFERENCE_NULL, CalibrationError, NullModel, calibrate,
                        run_power, test_sample)
from .core import build_wave_grid, read_pattern, write_pattern
from .inference import FitError
from .simulate import MODELS, ModelConfig, SimulationError, replicate_rng, simulate
from .spectral import read_sample, scaled_ccdf, spectral_sample, write_sample

log = logging.getLogger("hyperlrt")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _header(args, **extra) -> list[str]:
    items = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    items.update(extra)
    return [f"hyperlrt {__version__}"] + [f"{k}={v}" for k, v in sorted(items.items())]


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w"), True


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}")


# ---------------------------------------------------------------------------
# subcommands


def _config(args) -> ModelConfig:
    return ModelConfig(
        model=args.model, dim=args.dim, box_length=args.length, intensity=args.intensity,
        count=args.count, volume_fraction=args.volume_fraction, alpha=args.alpha,
        thin=args.thin,
    )


def cmd_simulate(args) -> int:
    config = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for rep in range(args.reps):
        pattern = simulate(config, replicate_rng(args.seed, rep))
        write_pattern(out / f"pattern_{rep:05d}.txt", pattern, _header(args, rep=rep))
    return 0


def cmd_scatter(args) -> int:
    pattern = read_pattern(args.inp)
    grid = build_wave_grid(pattern.dim, pattern.box_length, args.cutoff)
    sample = spectral_sample(pattern, grid, source=str(args.inp))
    write_sample(sys.stdout if args.out in (None, "-") else args.out, sample, _header(args))
    return 0


def cmd_ccdf(args) -> int:
    samples = [read_sample(p) for p in args.inp]
    sizes = {len(s) for s in samples}
    if len(sizes) != 1:
        raise ValueError("all samples must share one wave grid")
    xs = np.array([s.x for s in samples])
    if args.index is not None:
        xs = xs[:, [args.index]]
    # scale each wave vector by its own replicate mean before pooling
    scaled = xs / xs.mean(axis=0)
    z, ccdf = scaled_ccdf(scaled.ravel(), points=args.points)
    fh, close = _open_out(args.out)
    try:
        for h in _header(args):
            fh.write(f"# {h}\n")
        fh.write("z,ccdf\n")
        for a, b in zip(z, ccdf):
            fh.write(f"{float(a)!r},{float(b)!r}\n")
    finally:
        if close:
            fh.close()
    return 0


def cmd_test(args) -> int:
    sample = read_sample(args.inp)
    null = NullModel.read(args.null) if args.null else REFERENCE_NULL
    report = test_sample(sample, null, args.level)
    print(f"# hyperlrt {__version__} null={report.null_id} level={args.level}")
    for line in report.lines():
        print(line)
    return 0


def cmd_calibrate(args) -> int:
    null = calibrate(args.dim, args.length, args.cutoff, args.reps, args.seed, t=args.t,
                     workers=args.workers, cache_dir=args.cache_dir)
    null.write(args.out)
    log.info("p0=%.4f dof=%.4f", null.p0, null.dof)
    return 0


def cmd_power(args) -> int:
    null = NullModel.read(args.null) if args.null else REFERENCE_NULL
    config = ModelConfig(args.model, dim=args.dim, box_length=max(args.length_list),
                         alpha=args.alpha)
    table = run_power(config, args.thin_list, args.length_list, args.reps, args.level, null,
                      cutoff=args.cutoff, seed=args.seed, workers=args.workers)
    header = _header(args, null=null.id, failures=int(table.failures.sum()))
    if args.out in (None, "-"):
        for h in header:
            print(f"# {h}")
        print("s," + ",".join(f"L={L:g}" for L in table.lengths))
        for i, s in enumerate(table.s_values):
            print(f"{s!r}," + ",".join(f"{r:.6g}" for r in table.rates[i]))
    else:
        table.to_csv(args.out, header)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hyperlrt", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hyperlrt {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="write simulated point patterns")
    s.add_argument("--model", choices=MODELS, required=True)
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--length", type=float, default=35.0)
    s.add_argument("--intensity", type=float, default=1.0)
    s.add_argument("--count", type=int, default=None, help="RSA sphere count")
    s.add_argument("--volume-fraction", type=float, default=None, help="RSA packing fraction")
    s.add_argument("--alpha", type=float, default=3.0, help="matching Poisson intensity")
    s.add_argument("--thin", type=float, default=1.0, help="retention probability")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("scatter", help="scattering intensities of a pattern")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--cutoff", type=float, default=0.75)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_scatter)

    s = sub.add_parser("ccdf", help="scaled complementary distribution of intensities")
    s.add_argument("--in", dest="inp", nargs="+", required=True)
    s.add_argument("--index", type=int, default=None, help="single wave-vector row")
    s.add_argument("--points", type=int, default=200)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_ccdf)

    s = sub.add_parser("test", help="likelihood-ratio test on a kappa,x sample")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--null", default=None, help="null-model JSON (default: reference)")
    s.add_argument("--level", type=float, default=0.05)
    s.set_defaults(func=cmd_test)

    s = sub.add_parser("calibrate", help="Monte-Carlo null model for one wave grid")
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--length", type=float, required=True)
    s.add_argument("--cutoff", type=float, default=0.75)
    s.add_argument("--reps", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--t", type=float, default=1.0, help="null scale (T is scale free)")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--cache-dir", default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("power", help="rejection rates for thinned matchings")
    s.add_argument("--model", choices=("matching",), default="matching")
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--alpha", type=float, default=3.0)
    s.add_argument("--thin-list", type=_float_list, required=True,
                   help="values of s = 1 - retention")
    s.add_argument("--length-list", type=_float_list, required=True)
    s.add_argument("--reps", type=int, default=500)
    s.add_argument("--level", type=float, default=0.05)
    s.add_argument("--cutoff", type=float, default=0.75)
    s.add_argument("--null", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_power)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FitError, CalibrationError, SimulationError, ArithmeticError) as exc:
        print(f"hyperlrt: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"hyperlrt: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
