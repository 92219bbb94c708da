"""Command-line front end.

Every bound-producing subcommand prints a report, as aligned text by
default or as canonical JSON with --json. Exit codes: 0 on success, 2 on
input errors, 3 on numerical failures.
"""

import argparse
import json
import sys
import time

import numpy as np

from .errors import InputError, NumericalError
from .graph import autolip, autolip_sequential
from .io import load_graph_json, load_lnm, random_cnn, random_net, save_lnm
from .lower import (
    AnnealingSchedule,
    SearchDomain,
    annealing_lower_bound,
    dataset_lower_bound,
    grid_lower_bound,
    load_points_csv,
)
from .report import BoundReport, jsonify
from .seqlip import ideal_net, seqlip_exact, seqlip_greedy
from .spectral import PowerConfig, frobenius_upper_bound, top_k_singular


def _emit_report(report: BoundReport, as_json: bool, started: float) -> None:
    report.wall_time_s = time.perf_counter() - started
    if as_json:
        print(report.to_json(canonical=True))
    else:
        print(report.pretty())


def _emit_doc(doc: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(jsonify(doc), sort_keys=True, separators=(",", ":")))
    else:
        for key in doc:
            print(f"{key:<11}: {jsonify(doc[key])}")


def _domain_from_args(pairs, dim) -> SearchDomain | None:
    if not pairs:
        return None
    if len(pairs) == 1:
        lo, hi = pairs[0]
        return SearchDomain.cube(dim, lo, hi)
    if len(pairs) != dim:
        raise InputError(
            f"--domain given {len(pairs)} intervals but the input has {dim} axes"
        )
    lows = np.array([p[0] for p in pairs])
    highs = np.array([p[1] for p in pairs])
    return SearchDomain(lows, highs)


def _cmd_autolip(args) -> int:
    started = time.perf_counter()
    net = load_lnm(args.model)
    _emit_report(autolip_sequential(net), args.json, started)
    return 0


def _cmd_seqlip(args) -> int:
    started = time.perf_counter()
    net = load_lnm(args.model)
    if args.mode == "exact":
        report = seqlip_exact(net, rank=args.rank, width_limit=args.width_limit)
    else:
        report = seqlip_greedy(net, rank=args.rank, restarts=args.restarts,
                               steps=args.steps, seed=args.seed)
    _emit_report(report, args.json, started)
    return 0


def _cmd_lower(args) -> int:
    started = time.perf_counter()
    net = load_lnm(args.model)
    dim = int(np.prod(net.input_shape))
    domain = _domain_from_args(args.domain, dim)
    if args.method == "grid":
        report = grid_lower_bound(net, domain, resolution=args.resolution)
    elif args.method == "annealing":
        schedule = AnnealingSchedule(proposals=args.proposals, seed=args.seed)
        report = annealing_lower_bound(net, domain, schedule)
    else:
        if not args.points:
            raise InputError("--points FILE.csv is required for --method dataset")
        report = dataset_lower_bound(net, load_points_csv(args.points))
    _emit_report(report, args.json, started)
    return 0


def _cmd_spectra(args) -> int:
    net = load_lnm(args.model)
    if not 0 <= args.layer < len(net.affine):
        raise InputError(
            f"--layer must index one of {len(net.affine)} affine layers"
        )
    cfg = PowerConfig(seed=args.seed)
    triplets = top_k_singular(net.affine[args.layer], args.topk, cfg)
    doc = {
        "layer": args.layer,
        "topk": args.topk,
        "seed": args.seed,
        "triplets": [
            {
                "s": t.s,
                "u": t.u.ravel(),
                "v": t.v.ravel(),
                "iterations": t.iterations,
                "converged": t.converged,
                "zero_operator": t.zero_operator,
            }
            for t in triplets
        ],
    }
    if args.json:
        print(json.dumps(jsonify(doc), sort_keys=True, separators=(",", ":")))
    else:
        print(json.dumps(jsonify(doc), sort_keys=True, indent=2))
    return 0


def _cmd_frobenius(args) -> int:
    started = time.perf_counter()
    net = load_lnm(args.model)
    _emit_report(frobenius_upper_bound(net), args.json, started)
    return 0


def _cmd_gen(args) -> int:
    if args.ideal is not None:
        k, n, r = int(args.ideal[0]), int(args.ideal[1]), float(args.ideal[2])
        net = ideal_net(k, n, r, seed=args.seed)
        kind = "ideal"
    elif args.mlp is not None:
        widths = [int(w) for w in args.mlp.split(",") if w]
        net = random_net(widths, seed=args.seed)
        kind = "mlp"
    else:
        net = random_cnn(int(args.cnn), seed=args.seed)
        kind = "cnn"
    save_lnm(net, args.out)
    _emit_doc(
        {
            "command": "gen",
            "kind": kind,
            "depth": net.depth,
            "seed": args.seed,
            "input_shape": list(net.input_shape),
            "output_shape": list(net.output_shape),
            "path": args.out,
        },
        args.json,
    )
    return 0


def _cmd_graph(args) -> int:
    started = time.perf_counter()
    g = load_graph_json(args.graph)
    trace = autolip(g)
    report = BoundReport(
        method="autolip/graph",
        direction="upper",
        value=trace.value,
        params={
            "per_node": trace.per_node,
            "constant_nodes": [i for i, c in enumerate(trace.constant_mask) if c],
            "output": g.output,
        },
    )
    _emit_report(report, args.json, started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipbound",
        description="Upper and lower estimates of network Lipschitz constants",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("autolip", help="operator-norm product upper bound")
    p.add_argument("model")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_autolip)

    p = sub.add_parser("seqlip", help="gate-split upper bound / estimate")
    p.add_argument("model")
    p.add_argument("--mode", choices=["exact", "greedy"], required=True)
    p.add_argument("--rank", type=int, default=200)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--width-limit", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_seqlip)

    p = sub.add_parser("lower", help="search-based lower bounds")
    p.add_argument("model")
    p.add_argument("--method", choices=["grid", "annealing", "dataset"],
                   required=True)
    p.add_argument("--domain", type=float, nargs=2, action="append",
                   metavar=("LO", "HI"))
    p.add_argument("--resolution", type=int, default=10)
    p.add_argument("--proposals", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_lower)

    p = sub.add_parser("spectra", help="top singular triplets of one layer")
    p.add_argument("model")
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--topk", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_spectra)

    p = sub.add_parser("frobenius", help="Frobenius-norm product upper bound")
    p.add_argument("model")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_frobenius)

    p = sub.add_parser("gen", help="generate a model file")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ideal", nargs=3, metavar=("K", "N", "R"))
    group.add_argument("--mlp", metavar="W1,W2,...")
    group.add_argument("--cnn", type=int, metavar="DEPTH")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("graph", help="bound propagation on a graph JSON file")
    p.add_argument("graph")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_graph)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (InputError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
