"""Command-line entry point: ``hdgeom <subcommand> ...``.

Exit status is 0 on success, 1 on invalid input and 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import attention, evaluation, fitting, geometry, losses, matching, plotting, synth
from .errors import NumericalError, ValidationError


def _emit(text: str, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=1) + "\n"


def _weights(args) -> losses.LossWeights:
    return losses.LossWeights.load(args.weights) if args.weights else losses.LossWeights()


def cmd_generate(args):
    cfg = synth.ScenarioConfig(kind=args.kind, n_instances=args.n, n_points=args.points,
                               lane_gap=args.gap, noise_sigma=args.noise, seed=args.seed)
    _emit(geometry.dumps_map(synth.generate_scenario(cfg)), args.output)


def cmd_perturb(args):
    m = geometry.load_map(args.input)
    _emit(geometry.dumps_map(synth.perturb(m, args.sigma, args.seed)), args.output)


def cmd_match(args):
    pred, gt = geometry.load_map(args.pred), geometry.load_map(args.gt)
    result = matching.hungarian_match(pred, gt)
    payload = result.to_dict()
    payload["cost"] = matching.matched_cost(pred, gt, result)
    _emit(_json(payload), args.output)


def cmd_loss(args):
    pred, gt = geometry.load_map(args.pred), geometry.load_map(args.gt)
    match = matching.hungarian_match(pred, gt)
    breakdown = losses.total_loss(pred, gt, match, _weights(args))
    _emit(_json(breakdown.to_dict()), args.output)


def cmd_gradcheck(args):
    w = _weights(args)
    reports = [fitting.gradcheck(seed, w, n_instances=args.instances, n_points=args.points,
                                 sigma=args.sigma).to_dict()
               for seed in range(args.seed, args.seed + args.seeds)]
    passed = all(r["passed"] for r in reports)
    _emit(_json({"passed": passed, "reports": reports}), args.output)
    return 0 if passed else 2


def cmd_fit(args):
    init, gt = geometry.load_map(args.init), geometry.load_map(args.gt)
    cfg = fitting.FitConfig(iterations=args.iterations, step_size=args.step_size,
                            weights=_weights(args), rematch_every=args.rematch_every,
                            record_every=args.record_every)
    try:
        final, trace = fitting.fit(init, gt, cfg)
    except NumericalError as exc:
        if args.trace and exc.trace is not None:
            _emit(exc.trace.to_csv(), args.trace)
        raise
    _emit(geometry.dumps_map(final), args.output)
    if args.trace:
        _emit(trace.to_csv(), args.trace)
    if args.plot:
        plotting.render_trace(trace, args.plot)


def cmd_eval(args):
    pred, gt = geometry.load_map(args.pred), geometry.load_map(args.gt)
    result = evaluation.map_score(pred, gt)
    _emit(_json(result.to_dict()), args.output)
    if args.csv:
        _emit(result.to_csv(), args.csv)


def cmd_masks(args):
    blocks = [("shape", attention.build_shape_mask(args.n, args.points)),
              ("relation", attention.build_relation_mask(args.n, args.points))]
    lines = []
    for name, mask in blocks:
        lines.append(f"# {name} mask (N={args.n}, N_v={args.points})")
        lines.extend("".join(str(int(v)) for v in row) for row in mask)
    _emit("\n".join(lines) + "\n", args.output)


def cmd_render(args):
    if not args.output:
        raise ValidationError("render needs -o <file.svg>")
    plotting.render(geometry.load_map(args.input), args.output, title=args.title,
                    show_points=args.points)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--weights", help="LossWeights JSON file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-o", "--output", help="output path (stdout when omitted)")

    parser = argparse.ArgumentParser(prog="hdgeom", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="synthetic ground-truth map")
    p.add_argument("--kind", choices=[k.value for k in synth.ScenarioKind], default="parallel")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--gap", type=float, default=0.1)
    p.add_argument("--noise", type=float, default=0.0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("perturb", parents=[common], help="add Gaussian coordinate noise")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--sigma", type=float, default=0.02)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("match", parents=[common], help="point-order-agnostic matching")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("loss", parents=[common], help="loss breakdown after matching")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--instances", type=int, default=3)
    p.add_argument("--points", type=int, default=6)
    p.add_argument("--sigma", type=float, default=0.02)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("fit", parents=[common], help="gradient-descent polyline fitting")
    p.add_argument("--init", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iterations", type=int, default=fitting.FitConfig.iterations)
    p.add_argument("--step-size", type=float, default=fitting.FitConfig.step_size)
    p.add_argument("--rematch-every", type=int, default=fitting.FitConfig.rematch_every)
    p.add_argument("--record-every", type=int, default=fitting.FitConfig.record_every)
    p.add_argument("--trace", help="CSV trace path")
    p.add_argument("--plot", help="SVG plot of the trace")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", parents=[common], help="Chamfer AP / mAP")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--csv", help="also write class,threshold,AP,mAP rows here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("masks", parents=[common], help="print shape/relation attention masks")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--points", type=int, required=True)
    p.set_defaults(func=cmd_masks)

    p = sub.add_parser("render", parents=[common], help="SVG rendering of a map")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--title")
    p.add_argument("--points", action="store_true", help="mark polyline vertices")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with np.errstate(all="ignore"):
            code = args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
