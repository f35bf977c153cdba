"""Command line interface.

Exit codes: 0 success, 2 validation/config errors, 3 numeric failures.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import NumericError, ValidationError
from .runner import default_output_root, run_scenario
from .scenario import bundled_scenario, bundled_scenarios, scenario_from_file


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _load_scenario(ref: str):
    """A scenario reference is a config file path if one exists, otherwise
    the name of a bundled scenario."""
    p = Path(ref)
    if p.is_file():
        return scenario_from_file(p)
    names = sorted(bundled_scenarios())
    if ref in names:
        from .scenario import parse_scenario

        return parse_scenario(bundled_scenario(ref))
    raise ValidationError(
        f"no such file or bundled scenario: {ref!r} (bundled: {', '.join(names)})"
    )


def _cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario)
    out_root = default_output_root(args.out)
    result = run_scenario(scenario, out_root, threads=args.threads)
    for entry in result.manifest["outputs"]:
        print(f"{entry['kind']}: {Path(result.out_dir) / entry['path']}")
        if entry.get("figure"):
            print(f"  figure: {Path(result.out_dir) / entry['figure']}")
    print(f"manifest: {Path(result.out_dir) / 'manifest.json'}")
    return 0


def _cmd_validate(args) -> int:
    _load_scenario(args.scenario)
    print("ok")
    return 0


def _cmd_list(args) -> int:
    for name, blurb in sorted(bundled_scenarios().items()):
        print(f"{name}: {blurb}")
    return 0


_HEADER_KINDS = [
    ("sigma2,H_cond", "profile"),
    ("sigma2,div", "divergence"),
    ("sigma2,eig_1", "fisher"),
    ("t,x_1", "trajectories"),
    ("step,N_j", "game"),
]


def _sniff_kind(path: Path) -> str:
    if path.suffix == ".json":
        return "tree"
    with open(path) as f:
        header = f.readline().strip()
    for prefix, kind in _HEADER_KINDS:
        if header.startswith(prefix):
            return kind
    raise ValidationError(f"{path}: unrecognized artifact header {header!r}")


def _cmd_render(args) -> int:
    from . import report

    in_path = Path(args.artifact)
    if not in_path.is_file():
        raise ValidationError(f"no such file: {in_path}")
    out_path = Path(args.out) if args.out else in_path.with_suffix(".svg")
    kind = _sniff_kind(in_path)
    if kind == "tree":
        dist = schedule = None
        if args.scenario:
            sc = _load_scenario(args.scenario)
            dist = sc.distribution
            schedule = sc.schedule
        direction = None
        if args.direction:
            direction = [float(v) for v in args.direction.split(",")]
        report.render_tree(in_path, out_path, dist=dist, schedule=schedule,
                           direction=direction)
    else:
        fn = {
            "profile": report.render_profile,
            "divergence": report.render_divergence,
            "fisher": report.render_fisher,
            "trajectories": report.render_trajectories,
            "game": report.render_game,
        }[kind]
        fn(in_path, out_path)
    print(f"{kind}: {out_path}")
    return 0


def _cmd_twentyq(args) -> int:
    from .discretegame import balanced_universe, play_oracle, write_game_csv

    universe = balanced_universe(args.n)
    element = None
    if args.element is not None:
        if not 0 <= args.element < args.n:
            raise ValidationError(f"--element must be in [0, {args.n})")
        element = universe.elements[args.element]
    result = play_oracle(
        universe, true_element=element, policy=args.policy, seed=args.seed
    )
    if args.out_file:
        write_game_csv(result, args.out_file)
        print(f"game: {args.out_file}")
    else:
        print("step,N_j,answer,delta_H_bits")
        for s in result.steps:
            print(f"{s.step},{s.consistent_count},{s.answer},{s.delta_h_bits!r}")
    print(
        f"total: {result.total_delta_h_bits} expected bits, "
        f"{result.total_realized_bits} realized bits, "
        f"{len(result.steps)} questions"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scorelab",
        description="Exact-score diffusion laboratory: entropy-rate estimators, "
        "fixed-point trees, and discrete-game comparisons on tractable "
        "distributions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write its artifacts")
    p_run.add_argument("scenario", help="config file path or bundled scenario name")
    p_run.add_argument("--out", default=None,
                       help="output root (default: $SCORELAB_OUTPUT_ROOT or ./scorelab-out)")
    p_run.add_argument("--threads", type=_positive_int, default=1)
    p_run.set_defaults(fn=_cmd_run)

    p_val = sub.add_parser("validate", help="check a scenario config")
    p_val.add_argument("scenario")
    p_val.set_defaults(fn=_cmd_validate)

    p_list = sub.add_parser("list-scenarios", help="list bundled scenarios")
    p_list.set_defaults(fn=_cmd_list)

    p_render = sub.add_parser("render", help="render a figure from an artifact file")
    p_render.add_argument("artifact")
    p_render.add_argument("--out", default=None, help="SVG output path")
    p_render.add_argument("--scenario", default=None,
                          help="scenario for density context behind tree plots")
    p_render.add_argument("--direction", default=None,
                          help="comma separated projection direction for D > 2 trees")
    p_render.set_defaults(fn=_cmd_render)

    p_game = sub.add_parser("twentyq", help="play one oracle question game")
    p_game.add_argument("--n", type=_positive_int, default=16,
                        help="universe size (power of 2)")
    p_game.add_argument("--policy", default="lazy-random",
                        choices=["lazy-random", "fixed-element"])
    p_game.add_argument("--element", type=int, default=None,
                        help="index of the true element (default: drawn from seed)")
    p_game.add_argument("--seed", type=int, default=0)
    p_game.add_argument("--out-file", default=None, help="write CSV here instead of stdout")
    p_game.set_defaults(fn=_cmd_twentyq)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        for msg in getattr(exc, "messages", None) or [str(exc)]:
            print(f"error: {msg}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
