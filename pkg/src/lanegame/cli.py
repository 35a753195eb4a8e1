"""Command-line entry point: run, sweep, field and validate."""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .field import build_scene, sample_grid
from .sim import log_summary, log_table, simulate
from .world import (STYLES, OverrideError, Scenario, ScenarioError, UnknownScenario,
                    apply_overrides, dump_scenario, read_document, scenario_from_dict)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_UNKNOWN_SCENARIO = 3
EXIT_INVALID_OVERRIDE = 4
EXIT_INVALID_SCENARIO = 5
EXIT_WRITE_FAILURE = 6


class CliError(Exception):
    def __init__(self, category: str, code: int, message: str):
        super().__init__(message)
        self.category = category
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError("usage", EXIT_USAGE, message)


# -- scenario resolution -------------------------------------------------------

def resolve(ref: str, overrides: list[str] | None = None,
            styles: list[str] | None = None) -> Scenario:
    """Load ``ref``, apply overrides and style assignments, and validate."""
    try:
        doc = read_document(ref)
    except UnknownScenario as exc:
        raise CliError("unknown-scenario", EXIT_UNKNOWN_SCENARIO, str(exc)) from None
    except (ScenarioError, OSError) as exc:
        raise CliError("invalid-scenario", EXIT_INVALID_SCENARIO, str(exc)) from None
    try:
        base = scenario_from_dict(doc)
    except (ScenarioError, ValueError, TypeError) as exc:
        raise CliError("invalid-scenario", EXIT_INVALID_SCENARIO, str(exc)) from None
    if not overrides and not styles:
        return base
    try:
        sc = scenario_from_dict(apply_overrides(doc, overrides or []))
        return sc.with_styles(style_map(sc, styles or []))
    except (ScenarioError, ValueError, TypeError) as exc:
        raise CliError("invalid-override", EXIT_INVALID_OVERRIDE, str(exc)) from None


def obstacle_names(sc: Scenario) -> list[str]:
    return [v.name for v in sc.others if v.role == "obstacle"]


def style_map(sc: Scenario, items: list[str]) -> dict[str, str]:
    """``LABEL`` applies to every obstacle vehicle; ``NAME=LABEL`` to one."""
    out = {}
    for item in items:
        name, sep, label = item.partition("=")
        targets = [name] if sep else obstacle_names(sc)
        label = label if sep else name
        if label not in STYLES:
            raise OverrideError(f"style {label!r}: must be one of {STYLES}")
        for t in targets:
            out[t] = label
    return out


# -- output --------------------------------------------------------------------

def write_atomic(path: Path, data: str | bytes) -> None:
    """Write via a sibling temp file and rename so readers never see partial files."""
    mode = "wb" if isinstance(data, bytes) else "w"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        try:
            with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8",
                                                                  "newline": "\n"})) as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise CliError("write-failure", EXIT_WRITE_FAILURE, f"{path}: {exc}") from None


def save_plot(fn, path: Path, *args, **kwargs) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.stem}.", suffix=".png")
        os.close(fd)
        try:
            fn(*args, tmp, **kwargs)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise CliError("write-failure", EXIT_WRITE_FAILURE, f"{path}: {exc}") from None


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_jsonable) + "\n"


def _jsonable(obj):
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


# -- subcommands -----------------------------------------------------------------

def _run_files(sc: Scenario, out: Path, stem: str, plot: bool) -> dict:
    log = simulate(sc)
    summary = log_summary(log, sc.params.loop.lane_change_epsilon)
    write_atomic(out / f"{stem}.log.tsv", log_table(log))
    write_atomic(out / f"{stem}.summary.json", to_json(summary))
    if plot:
        from . import plotting
        marks = sc.road.lane_marks()
        save_plot(plotting.plot_trajectories, out / f"{stem}.trajectories.png", log,
                  lane_marks=marks)
        save_plot(plotting.plot_velocities, out / f"{stem}.velocities.png", log)
        save_plot(plotting.plot_accelerations, out / f"{stem}.accelerations.png", log)
    return summary


def cmd_run(args) -> int:
    sc = resolve(args.scenario_ref, args.set, args.style)
    summary = _run_files(sc, Path(args.out), sc.name, args.plot)
    changes = ", ".join(f"{c['from']}->{c['to']} at t={c['t']:g}s x={c['x']:.1f}m"
                        for c in summary["lane_changes"]) or "none"
    print(f"{sc.name}: first decision {summary['first_decision']}; lane changes: {changes}; "
          f"min gap {_fmt_gap(summary['min_gap'])}; {summary['stop_reason']}")
    return EXIT_OK


def _fmt_gap(g):
    return "n/a" if g is None else f"{g:.2f}m"


def _sweep_one(job):
    sc, out, stem, plot = job
    return _run_files(sc, out, stem, plot)


SWEEP_COLUMNS = ("first_decision", "lane_changes", "first_change_t", "first_change_x",
                 "last_change_t", "last_change_x", "min_gap", "final_gap_ahead", "collision",
                 "stop_reason")


def cmd_sweep(args) -> int:
    base = resolve(args.scenario_ref, args.set, args.style)
    names = obstacle_names(base)
    if not names:
        raise CliError("invalid-scenario", EXIT_INVALID_SCENARIO,
                       f"{base.name}: no obstacle vehicles to sweep")
    out = Path(args.out)
    combos = list(itertools.product(STYLES, repeat=len(names)))
    jobs = []
    for combo in combos:
        stem = "-".join([base.name] + [f"{n}_{s}" for n, s in zip(names, combo)])
        jobs.append((base.with_styles(dict(zip(names, combo))), out / "runs", stem, args.plot))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_sweep_one, jobs))
    else:
        summaries = [_sweep_one(j) for j in jobs]
    header = list(names) + list(SWEEP_COLUMNS)
    lines = ["\t".join(header)]
    for combo, s in zip(combos, summaries):
        ch = s["lane_changes"]
        first, last = (ch[0], ch[-1]) if ch else ({}, {})
        row = list(combo) + [
            s["first_decision"], str(len(ch)),
            _cell(first.get("t")), _cell(first.get("x")),
            _cell(last.get("t")), _cell(last.get("x")),
            _cell(s["min_gap"]), _cell(s["final_gap_ahead"]),
            str(s["collision"]).lower(), s["stop_reason"],
        ]
        lines.append("\t".join(row))
    table = "\n".join(lines) + "\n"
    write_atomic(out / f"{base.name}.sweep.tsv", table)
    sys.stdout.write(table)
    return EXIT_OK


def _cell(v) -> str:
    return "-" if v is None else f"{v:.9g}"


def cmd_field(args) -> int:
    sc = resolve(args.scenario_ref, args.set, args.style)
    road = sc.road
    movers = [] if args.no_vehicles else [(v.state, v.style) for v in sc.others]
    scene = build_scene(road, movers, sc.params.field, sc.geometry.width)
    if args.no_road:
        scene = type(scene)(scene.obstacles, ())
    if args.time:
        scene = scene.advanced(args.time)
    x_range = tuple(args.x_range) if args.x_range else (0.0, min(road.length, 150.0))
    y_range = tuple(args.y_range) if args.y_range else (-road.half_width, road.half_width)
    try:
        grid = sample_grid(scene, x_range, y_range, args.resolution)
    except ValueError as exc:
        raise CliError("usage", EXIT_USAGE, str(exc)) from None
    out = Path(args.out)
    write_atomic(out / f"{sc.name}.field.txt", grid.to_text())
    from . import plotting
    save_plot(plotting.plot_grid, out / f"{sc.name}.field.png", grid, surface=args.surface)
    print(f"{sc.name}: {grid.values.shape[1]}x{grid.values.shape[0]} grid, "
          f"max {grid.values.max():.6g}, min {grid.values.min():.6g}")
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = resolve(args.scenario_ref, args.set, args.style)
    sys.stdout.write(dump_scenario(sc))
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lanegame", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, outputs=True):
        p.add_argument("scenario", nargs="?", help="bundled name (case1..case3) or YAML path")
        p.add_argument("--scenario", dest="scenario_opt", metavar="NAME|PATH")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-path override, repeatable")
        p.add_argument("--style", action="append", default=[], metavar="[NAME=]LABEL",
                       help="style for every obstacle vehicle, or NAME=LABEL for one")
        p.add_argument("--seed", type=int, default=None,
                       help="reserved; every command is deterministic")
        if outputs:
            p.add_argument("--out", default="out", metavar="DIR")
            p.add_argument("--plot", action="store_true", help="also render PNG figures")

    p = sub.add_parser("run", help="simulate one scenario")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="simulate every obstacle style combination")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("field", help="sample the potential field on a grid")
    common(p)
    p.add_argument("--x-range", type=float, nargs=2, metavar=("X0", "X1"))
    p.add_argument("--y-range", type=float, nargs=2, metavar=("Y0", "Y1"))
    p.add_argument("--resolution", type=float, default=0.5)
    p.add_argument("--time", type=float, default=0.0,
                   help="advance vehicles at constant speed before sampling")
    p.add_argument("--surface", action="store_true", help="3-D surface instead of a heatmap")
    p.add_argument("--no-road", action="store_true", help="leave out lane-line terms")
    p.add_argument("--no-vehicles", action="store_true", help="leave out vehicle terms")
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("validate", help="check a scenario and print the resolved document")
    common(p, outputs=False)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.scenario and args.scenario_opt and args.scenario != args.scenario_opt:
            raise CliError("usage", EXIT_USAGE, "scenario given twice with different values")
        args.scenario_ref = args.scenario or args.scenario_opt
        if not args.scenario_ref:
            raise CliError("usage", EXIT_USAGE, "a scenario is required")
        if getattr(args, "jobs", 1) < 1:
            raise CliError("usage", EXIT_USAGE, "--jobs must be >= 1")
        return args.func(args)
    except CliError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
