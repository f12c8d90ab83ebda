"""Command-line front end: ``simulate``, ``alloc``, ``cost`` and ``compare``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from fractions import Fraction
from pathlib import Path

from .allocation import QUOTA_MODES, plan_allocation
from .cache import CacheInvariantError
from .cost import cost_model, latent_frames
from .packer import POLICY_KINDS, CachePolicy
from .simulator import GenerationTrace, SimConfig, load_config, run


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or fraction: {text!r}") from None


def _frames(args) -> int:
    return latent_frames(args.frames) if args.unit == "video" else args.frames


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="packcache", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the toy generator and write a trace CSV")
    sim.add_argument("--config", required=True, help="key=value or .json config file")
    sim.add_argument("--out", default="-", help="trace CSV path ('-' for stdout)")
    sim.add_argument("--stats-out", help="per-step region statistics CSV")
    sim.add_argument("--summary-out", help="JSON summary record")
    sim.add_argument("--seed", type=int, help="override the config seed")

    al = sub.add_parser("alloc", help="print an allocation plan")
    al.add_argument("--w", type=int, required=True, help="window capacity W")
    al.add_argument("--b-one", type=int, default=4084, help="one-frame token budget")
    al.add_argument("--rho", type=_fraction, help="use the normalized geometric kernel")
    al.add_argument("--b-min", type=_fraction, help="uniform minimum quota (FIFO truncation)")
    al.add_argument("--quota-mode", choices=QUOTA_MODES, default="none")
    al.add_argument("--quota-frames", type=int, default=3)

    co = sub.add_parser("cost", help="closed-form attended-key tables")
    co.add_argument("--policy", choices=POLICY_KINDS + ("all",), default="all")
    co.add_argument("--frames", type=int, default=13)
    co.add_argument("--unit", choices=("latent", "video"), default="latent")
    co.add_argument("--tokens", type=int, default=4084, help="tokens per latent frame")
    co.add_argument("--anchors", type=int, default=4333, help="prompt + conditioning tokens")
    co.add_argument("--window", type=int, default=4)
    co.add_argument("--sliding-window", type=int, default=1)
    co.add_argument("--keep-prob", type=_fraction, default=Fraction(1))

    cmp_ = sub.add_parser("compare", help="run all three policies on one seed")
    cmp_.add_argument("--config", required=True)
    cmp_.add_argument("--out", default="-")
    cmp_.add_argument("--sliding-window", type=int, default=1)
    cmp_.add_argument("--seed", type=int)
    return ap


def _open_out(path: str):
    if path == "-":
        return sys.stdout, False
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline=""), True


def _load(args) -> SimConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_simulate(args) -> int:
    trace = run(_load(args))
    fh, close = _open_out(args.out)
    try:
        trace.write_csv(fh)
    finally:
        if close:
            fh.close()
    if args.stats_out:
        with open(args.stats_out, "w", newline="") as fh:
            trace.write_region_stats(fh)
    if args.summary_out:
        with open(args.summary_out, "w") as fh:
            json.dump(trace.summary(), fh, indent=2, default=str)
    return 0


def cmd_alloc(args) -> int:
    plan = plan_allocation(
        args.w,
        args.b_one,
        source="geometric" if args.rho is not None else "closed_form",
        rho=args.rho if args.rho is not None else Fraction(1, 2),
        quota_mode=args.quota_mode,
        quota_frames=args.quota_frames,
        b_min=args.b_min,
    )
    print(plan)
    if plan.effective_window < args.w:
        print(f"effective_window={plan.effective_window}")
    return 0


def _fmt(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{float(x):.3f}"


def cmd_cost(args) -> int:
    frames = _frames(args)
    kinds = POLICY_KINDS if args.policy == "all" else (args.policy,)
    tables = {}
    for kind in kinds:
        w = args.sliding_window if kind == "sliding" else args.window
        tables[kind] = cost_model(kind, frames, args.tokens, w, args.anchors, args.keep_prob)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    header = ["frame"]
    for kind in kinds:
        header += [f"{kind}_per_frame", f"{kind}_cumulative"]
    writer.writerow(header)
    for t in range(frames):
        row = [t + 1]
        for kind in kinds:
            row += [_fmt(tables[kind].per_frame[t]), _fmt(tables[kind].cumulative[t])]
        writer.writerow(row)
    if "full" in tables:
        for kind in kinds:
            if kind == "full":
                continue
            total = tables["full"].total / tables[kind].total
            last = tables["full"].last() / tables[kind].last()
            print(f"# speedup full/{kind}: total={float(total):.3f} last={float(last):.3f}")
    return 0


def cmd_compare(args) -> int:
    base = _load(args)
    policies = {
        "full": CachePolicy.full(),
        "sliding": CachePolicy.sliding(window=args.sliding_window),
        "packcache": base.policy if base.policy.kind == "packcache" else CachePolicy.packcache(),
    }
    traces: dict[str, GenerationTrace] = {
        name: run(base.replace(policy=p)) for name, p in policies.items()
    }
    fh, close = _open_out(args.out)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["frame_index"]
        for name in policies:
            header += [f"{name}_attended", f"{name}_occupancy"]
        writer.writerow(header)
        for i in range(base.num_latent_frames):
            row = [i + 1]
            for name in policies:
                r = traces[name].frames[i]
                row += [r.attended_key_count, r.cache_occupancy]
            writer.writerow(row)
    finally:
        if close:
            fh.close()
    return 0


COMMANDS = {"simulate": cmd_simulate, "alloc": cmd_alloc, "cost": cmd_cost, "compare": cmd_compare}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"packcache: {exc}", file=sys.stderr)
        return 1
    except CacheInvariantError as exc:
        print(f"packcache: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"packcache: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
