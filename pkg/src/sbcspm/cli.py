"""Command-line front end; every subcommand writes CSV."""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from .analysis import (
    arrival_time,
    expected_weight,
    expected_weight_d1,
    expected_weight_d2,
    sce_bound,
    traditional_bound,
)
from .channel import ChannelParams
from .config import POLICIES, SCHEMES, SimConfig
from .sim import ROW_FIELDS, simulate, sweep
from .spm import InvariantError


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".10g")
    return str(value)


def write_csv(out, header, rows):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("list must not be empty")
    return vals


def _common(sp, single_point: bool):
    sp.add_argument("--scheme", choices=[s for s in SCHEMES], default="sbc")
    sp.add_argument("--K", type=int, default=240)
    sp.add_argument("--N", type=int, default=8, help="sub-block count (sbc only)")
    if single_point:
        ch = sp.add_mutually_exclusive_group(required=True)
        ch.add_argument("--p", type=float, help="crossover probability")
        ch.add_argument("--capacity", type=float, help="target BSC capacity")
        rate = sp.add_mutually_exclusive_group()
        rate.add_argument("--lambda", dest="lam", type=float, help="bit arrival rate [bits/s]")
        rate.add_argument("--gamma", type=float, help="lambda / mu")
    sp.add_argument("--mu", type=float, default=1.0, help="channel symbol rate [symbols/s]")
    sp.add_argument("--epsilon", type=float, default=1e-3)
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--policy", choices=POLICIES, default="lowest",
                    help="which arrived sub-block gets spare slots (sbc only)")
    sp.add_argument("--jobs", type=int, default=None, help="worker processes (default: $SBCSPM_JOBS or 1)")
    sp.add_argument("--out", default="-", help="output path, '-' for stdout")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sbcspm", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="one operating point")
    _common(sp, single_point=True)

    sp = sub.add_parser("sweep", help="capacity x gamma grid")
    _common(sp, single_point=False)
    sp.add_argument("--gammas", type=float_list, required=True)
    sp.add_argument("--capacities", type=float_list, required=True)

    sp = sub.add_parser("bounds", help="arrival time and decoding-time lower bounds vs gamma")
    sp.add_argument("--K", type=int, default=240)
    sp.add_argument("--mu", type=float, default=1.0)
    sp.add_argument("--capacity", type=float, required=True)
    sp.add_argument("--gammas", type=float_list, required=True)
    sp.add_argument("--out", default="-")

    sp = sub.add_parser("weight", help="expected update factor and derivatives over a P0 grid")
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--grid-step", type=float, default=1e-3)
    sp.add_argument("--out", default="-")
    return ap


def _config(args, ap, p, lam) -> SimConfig:
    try:
        return SimConfig(K=args.K, N=args.N, p=p, lam=lam, mu=args.mu, epsilon=args.epsilon,
                         trials=args.trials, seed=args.seed, scheme=args.scheme, policy=args.policy)
    except ValueError as exc:
        ap.error(str(exc))


def cmd_simulate(args, ap):
    if args.p is not None:
        if not 0.0 < args.p < 0.5:
            ap.error(f"--p must lie in (0, 1/2), got {args.p}")
        p = args.p
    else:
        if not 0.0 < args.capacity < 1.0:
            ap.error(f"--capacity must lie in (0, 1), got {args.capacity}")
        p = ChannelParams.from_capacity(args.capacity).p
    if args.lam is not None:
        lam = args.lam
    else:
        lam = (1.0 if args.gamma is None else args.gamma) * args.mu
    row = simulate(_config(args, ap, p, lam), args.jobs)
    return ROW_FIELDS, [[row[k] for k in ROW_FIELDS]]


def cmd_sweep(args, ap):
    if any(not 0.0 < c < 1.0 for c in args.capacities):
        ap.error("every capacity must lie in (0, 1)")
    if any(g <= 0 for g in args.gammas):
        ap.error("every gamma must be positive")
    base = _config(args, ap, 0.25, args.mu)
    rows = sweep(base, args.gammas, args.capacities, jobs=args.jobs)
    return ROW_FIELDS, [[r[k] for k in ROW_FIELDS] for r in rows]


def cmd_bounds(args, ap):
    C = args.capacity
    if not 0.0 < C < 1.0:
        ap.error("--capacity must lie in (0, 1)")
    if args.K < 1 or args.mu <= 0 or any(g <= 0 for g in args.gammas):
        ap.error("K, mu and every gamma must be positive")
    rows = []
    for g in args.gammas:
        lam = g * args.mu
        rows.append([g, arrival_time(args.K, lam), traditional_bound(args.K, lam, args.mu, C),
                     sce_bound(args.K, lam, args.mu, C)])
    return ("gamma", "K_over_lambda", "traditional_bound", "sce_bound"), rows


def cmd_weight(args, ap):
    if not 0.0 < args.p < 0.5:
        ap.error("--p must lie in (0, 1/2)")
    n = round(1.0 / args.grid_step)
    if n < 2 or abs(n * args.grid_step - 1.0) > 1e-9:
        ap.error("--grid-step must divide 1 evenly")
    P0 = np.arange(n + 1) / n
    ew = expected_weight(P0, args.p)
    d1 = expected_weight_d1(P0, args.p)
    d2 = expected_weight_d2(P0, args.p)
    best = int(np.argmax(ew))
    rows = [[P0[i], ew[i], d1[i], d2[i], i == best] for i in range(n + 1)]
    return ("P0", "E_w", "d1", "d2", "is_argmax"), rows


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "bounds": cmd_bounds, "weight": cmd_weight}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        header, rows = COMMANDS[args.command](args, ap)
    except InvariantError as exc:
        print(f"sbcspm: internal invariant violated: {exc}", file=sys.stderr)
        return 1
    if args.out == "-":
        write_csv(sys.stdout, header, rows)
    else:
        with open(args.out, "w", newline="") as fh:
            write_csv(fh, header, rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
