"""Command-line interface.

Subcommands: plan a single trial, evaluate a suite, run ablations, render a
stored trace. Exit codes: 0 ok, 2 planning failure, 3 oracle failure,
4 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import harness, raster
from .baselines import PivotConfig, RrtConfig
from .errors import OracleFailure, TrialAbort
from .gridmap import compute_free_set, extract_local_egocentric
from .optimizer import PlannerConfig, PlanTrace
from .oracle import HttpOracleConfig, ScriptedOracleConfig
from .projection import AffordanceContext, ObstacleMapPlus
from .scene import SceneError, TrialSetup, load_scene_file, load_task_file

EXIT_OK = 0
EXIT_PLANNING = 2
EXIT_ORACLE = 3
EXIT_CONFIG = 4

ORACLE_URL_ENV = "BASEPLACE_ORACLE_URL"


def _add_oracle_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--oracle", choices=("scripted", "http"), default="scripted")
    p.add_argument("--oracle-url", default=None,
                   help=f"HTTP oracle endpoint (or ${ORACLE_URL_ENV})")
    p.add_argument("--noise", type=float, default=0.05,
                   help="scripted oracle corruption rate epsilon")
    p.add_argument("--oracle-seed", type=int, default=7)


def _oracle_config(args):
    if args.oracle == "http":
        url = args.oracle_url or os.environ.get(ORACLE_URL_ENV)
        if not url:
            raise SceneError(
                f"http oracle needs --oracle-url or ${ORACLE_URL_ENV}"
            )
        return HttpOracleConfig(url=url)
    return ScriptedOracleConfig(noise_epsilon=args.noise, seed=args.oracle_seed)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="baseplace",
        description="Affordance-guided base placement planning and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run one planning trial")
    p.add_argument("--scene", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--method", default="full",
                   help=f"one of {', '.join(harness.BASE_METHODS)}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="directory for the trace")
    p.add_argument("--rrt-iters", type=int, default=5000)
    _add_oracle_args(p)

    p = sub.add_parser("eval", help="run the evaluation suite")
    p.add_argument("--suite", default=None, help="suite JSON (default: packaged)")
    p.add_argument("--methods", default=",".join(harness.BASE_METHODS),
                   help="comma-separated method ids")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--base-seed", type=int, default=2024)
    p.add_argument("--out", default=None, help="directory for report and traces")
    p.add_argument("--rrt-iters", type=int, default=1500,
                   help="RRT* budget for suite trials")
    _add_oracle_args(p)

    p = sub.add_parser("ablate", help="run an ablation study")
    p.add_argument("--mode", choices=("alpha", "projection"), required=True)
    p.add_argument("--suite", default=None)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--base-seed", type=int, default=2024)
    p.add_argument("--out", default=None)
    _add_oracle_args(p)

    p = sub.add_parser("render", help="render a stored trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=int, default=3)
    return parser


def cmd_plan(args) -> int:
    scene = load_scene_file(args.scene)
    task = load_task_file(args.task)
    spec = harness.make_method(args.method)
    trace = harness.run_trial(
        scene, task, args.seed, spec, _oracle_config(args),
        rrt_config=RrtConfig(max_iters=args.rrt_iters),
    )
    trace.scene_path = os.path.abspath(args.scene)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "trace.json")
        trace.save(path)
        print(f"trace written to {path}")
    ev = trace.evaluation
    if ev.get("skip"):
        print(f"trial skipped: {ev.get('detail', '')}")
        return EXIT_ORACLE if ev.get("abort") == "oracle_failure" else EXIT_PLANNING
    final = trace.final_world
    print(
        f"placement: x={final['x']:.3f} y={final['y']:.3f} theta={final['theta']:.3f}"
    )
    print(f"success: {ev['success']} ({ev['reason']})")
    return EXIT_OK


def cmd_eval(args) -> int:
    suite = harness.load_suite(args.suite or harness.packaged_suite_path())
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    report = harness.run_suite(
        suite,
        methods,
        trials_per_task=args.trials,
        base_seed=args.base_seed,
        oracle_config=_oracle_config(args),
        rrt_config=RrtConfig(max_iters=args.rrt_iters),
        out_dir=args.out,
    )
    print(report.to_text())
    if args.out:
        print(f"\nreport and traces written to {args.out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    suite = harness.load_suite(args.suite or harness.packaged_suite_path())
    runner = harness.ablate_alpha if args.mode == "alpha" else harness.ablate_projection
    report = runner(
        suite,
        trials_per_task=args.trials,
        base_seed=args.base_seed,
        oracle_config=_oracle_config(args),
        out_dir=args.out,
    )
    print(report.to_text())
    if args.mode == "alpha":
        print("\nfinal-placement spread per setting:")
        for method in report.methods:
            print(f"  {method:22s} {harness.placement_spread(report, method):.4f}")
    if args.out:
        print(f"\nreport and traces written to {args.out}")
    return EXIT_OK


def cmd_render(args) -> int:
    trace = PlanTrace.load(args.trace)
    if not trace.scene_path or not os.path.exists(trace.scene_path):
        raise SceneError(
            "trace does not reference a readable scene file (scene_path)"
        )
    scene = load_scene_file(trace.scene_path)
    os.makedirs(args.out, exist_ok=True)

    if trace.iterations:
        images = harness.render_heatmap(trace, scene, scale=args.scale)
        for name, image in images:
            raster.write_ppm(os.path.join(args.out, f"heatmap_{name}.ppm"), image)
        setup = TrialSetup.from_dict(trace.setup)
        local = extract_local_egocentric(
            scene.composed_grid(setup), setup.robot_start, trace.local_grid["size"]
        )
        context = harness.context_from_dict(trace.context)
        if context.selected_index is not None:
            from .projection import build_fan

            bearing = context.directions[context.selected_index - 1].bearing
            context.fan = build_fan(context.centroid, bearing, local)
        markers = trace.iterations[-1].marker_positions()
        omp = ObstacleMapPlus(grid=local, context=context, candidates=tuple(markers))
        raster.write_ppm(
            os.path.join(args.out, "obstacle_map_plus.ppm"), omp.render(args.scale)
        )
        with open(os.path.join(args.out, "obstacle_map_plus.svg"), "w") as f:
            f.write(omp.to_svg(args.scale))
        print(f"wrote {len(images) + 1} rasters (plus SVG) to {args.out}")
    else:
        setup = TrialSetup.from_dict(trace.setup)
        world = scene.composed_grid(setup)
        context = AffordanceContext(
            footprint=np.empty((0, 2), dtype=int), centroid=np.zeros(2)
        )
        candidates = []
        if trace.final_world:
            candidates.append((0, trace.final_world["x"], trace.final_world["y"]))
        omp = ObstacleMapPlus(
            grid=world,
            context=context,
            robot_xy=(setup.robot_start.x, setup.robot_start.y),
            robot_heading=setup.robot_start.theta,
            candidates=tuple(candidates),
        )
        raster.write_ppm(
            os.path.join(args.out, "placement.ppm"), omp.render(args.scale)
        )
        print(f"wrote placement raster to {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    handlers = {
        "plan": cmd_plan,
        "eval": cmd_eval,
        "ablate": cmd_ablate,
        "render": cmd_render,
    }
    try:
        return handlers[args.command](args)
    except OracleFailure as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except TrialAbort as exc:
        print(f"planning failure: {exc}", file=sys.stderr)
        return EXIT_PLANNING
    except (SceneError, ValueError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
