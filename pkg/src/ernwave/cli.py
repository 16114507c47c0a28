"""Command line entry point: ``ernwave run|converge|fit|charge``."""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .config import load_config
from .diagnostics import FIT_HEADER, DataError, FluxRangeError, ResolutionError, fit_power_law
from .evolution import EvolutionError
from .geometry import DomainError, InversionError
from .io import format_value, read_csv_columns
from .modes import ConfigurationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _floats(text, what):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigurationError(f"{what} must be a comma-separated list of numbers") from None


def _window(text):
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise ConfigurationError(f"window must look like A:B, got {text!r}") from None


def _outdir(args, cfg):
    out = args.output or cfg.output.dir
    if not out:
        raise ConfigurationError("no output directory: pass -o DIR or set output.dir")
    return out


def cmd_run(args):
    from .pipeline import execute, write_products

    cfg = load_config(args.config)
    prod = execute(cfg)
    write_products(prod, _outdir(args, cfg))
    if prod.mms_error is not None:
        print(f"manufactured max error {prod.mms_error:.6e}")
    for name, f in prod.fits:
        print(f"{name}: exponent {f.exponent:.6g} +- {f.stderr:.2g}")
    return EXIT_OK


def cmd_converge(args):
    from .pipeline import convergence_study, write_convergence

    cfg = load_config(args.config)
    levels = _floats(args.levels, "--levels")
    out = _outdir(args, cfg)
    t0 = time.time()
    rows, results = convergence_study(cfg, levels)
    write_convergence(rows, results, cfg, levels, out, time.time() - t0)
    for q, hc, hm, hf, order in rows:
        print(f"{q} ({hc:g},{hm:g},{hf:g}): order {order:.4g}")
    return EXIT_OK


def cmd_fit(args):
    window = _window(args.window) if args.window else None
    try:
        header, cols = read_csv_columns(args.input)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {args.input}: {exc.strerror}") from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    xname = args.x or header[0]
    for name in (args.quantity, xname):
        if name not in cols:
            raise ConfigurationError(
                f"no column {name!r} in {args.input}; available: {', '.join(header)}")
    try:
        t = np.array(cols[xname], dtype=float)
        y = np.abs(np.array(cols[args.quantity], dtype=float))
    except ValueError as exc:
        raise DataError(f"non-numeric entry: {exc}") from exc
    fit = fit_power_law(t, y, window)
    row = fit.row(args.quantity)
    target = os.path.join(os.path.dirname(os.path.abspath(args.input)), "fits.csv")
    try:
        fresh = not os.path.exists(target) or os.path.getsize(target) == 0
        with open(target, "a") as fh:
            if fresh:
                fh.write(FIT_HEADER + "\n")
            fh.write(",".join(format_value(v) for v in row) + "\n")
    except OSError as exc:
        raise ConfigurationError(f"cannot append to {target}: {exc.strerror}") from exc
    print(FIT_HEADER)
    print(",".join(format_value(v) for v in row))
    return EXIT_OK


def cmd_charge(args):
    from .pipeline import charge_study, write_charge

    cfg = load_config(args.config)
    eps = _floats(args.eps, "--eps")
    out = _outdir(args, cfg)
    t0 = time.time()
    rep, series, cfgs = charge_study(cfg, eps)
    write_charge(rep, series, cfgs, out, time.time() - t0)
    print(f"shift(eps={eps[0]:g}) = {rep.shift_a:.6e}")
    print(f"shift(eps={eps[1]:g}) = {rep.shift_b:.6e}")
    print(f"ratio = {rep.ratio:.6g}  ({rep.message})")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ernwave", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="evolve one configuration and write all products")
    r.add_argument("-c", "--config", required=True)
    r.add_argument("-o", "--output")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("converge", help="refinement study over 2:1 spacings")
    c.add_argument("-c", "--config", required=True)
    c.add_argument("--levels", required=True, help="comma-separated spacings, e.g. 0.2,0.1,0.05")
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_converge)

    f = sub.add_parser("fit", help="power-law fit of one CSV column")
    f.add_argument("-i", "--input", required=True)
    f.add_argument("--quantity", required=True)
    f.add_argument("--window", help="A:B in the abscissa column")
    f.add_argument("--x", help="abscissa column (default: first column)")
    f.set_defaults(func=cmd_fit)

    q = sub.add_parser("charge", help="epsilon-squared scaling of the horizon charge shift")
    q.add_argument("-c", "--config", required=True)
    q.add_argument("--eps", required=True, help="two amplitudes, e.g. 0.05,0.025")
    q.add_argument("-o", "--output")
    q.set_defaults(func=cmd_charge)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, FluxRangeError, DomainError) as exc:
        print(f"ernwave: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EvolutionError, ResolutionError, InversionError, DataError, ArithmeticError,
            FloatingPointError) as exc:
        print(f"ernwave: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
