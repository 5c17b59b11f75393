"""Command-line experiment driver.

``rispsc solve``    optimise one configuration and write the solution as JSON
``rispsc sweep``    objective versus power, user count, antenna count or budget
``rispsc ratemap``  optimised rate of a single probe user over a grid

Exit status is 0 on success, 2 for usage or configuration errors and 3 for
failures while solving.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .beamforming import PartitionError
from .channel import ChannelSet, build_channel_set
from .scenario import (DEPLOYMENTS, MA_SCHEMES, USER_CASES, AngleSet, ConfigError,
                       NetworkScenario, ValidationError, geometry_angles, scenario_from_config,
                       scenario_to_config)
from .semantic import ProfileError
from .system import SystemModel, iter_power_continuation, optimize

__all__ = ["main", "SweepSpec", "SweepRow", "run_sweep", "summarize_sweep", "rate_map",
           "sweep_scenario"]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
SWEEP_VARS = ("power", "users", "antennas", "budget")
SWEEP_FIELDS = ("value", "scheme", "deployment", "trial", "objective_bps", "iterations", "wall_ms")
_CONFIG_ERRORS = (ConfigError, ValidationError, ProfileError, PartitionError)


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: every value x scheme x deployment x trial is solved once.

    ``deployments`` entries are preset names; ``None`` keeps the RIS layout of
    the configuration.  Trial ``t`` uses seed ``seed + t``.
    """

    variable: str
    values: tuple[float, ...]
    schemes: tuple[str, ...] = ("ssd",)
    deployments: tuple[str | None, ...] = (None,)
    trials: int = 1
    seed: int = 0
    user_case: str | None = None

    def __post_init__(self) -> None:
        if self.variable not in SWEEP_VARS:
            raise ValidationError(f"cannot sweep {self.variable!r}; choose from {SWEEP_VARS}")
        if not self.values:
            raise ValidationError("sweep needs at least one value")
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        for s in self.schemes:
            if s not in MA_SCHEMES:
                raise ValidationError(f"unknown scheme {s!r}")
        for d in self.deployments:
            if d is not None and d not in DEPLOYMENTS:
                raise ValidationError(f"unknown deployment {d!r}")
        if self.user_case is not None and self.user_case not in USER_CASES:
            raise ValidationError(f"unknown user case {self.user_case!r}")
        if self.variable in ("users", "antennas"):
            for v in self.values:
                if float(v) != int(v) or v < 1:
                    raise ValidationError(f"{self.variable} values must be positive integers")


@dataclass(frozen=True)
class SweepRow:
    value: float
    scheme: str
    deployment: str
    trial: int
    objective_bps: float
    iterations: int
    wall_ms: float

    def sort_key(self):
        return (self.deployment, self.scheme, self.trial, self.value)


def _set(cfg: dict, section: str, key: str, value) -> None:
    cfg.setdefault(section, {})[key] = value


def sweep_scenario(cfg: dict, spec: SweepSpec, deployment: str | None, scheme: str,
                   trial: int, value: float | None = None) -> NetworkScenario:
    """Scenario of one sweep cell, built from a copy of the base configuration."""
    cfg = copy.deepcopy(cfg)
    _set(cfg, "geometry", "seed", spec.seed + trial)
    _set(cfg, "solver", "ma_scheme", scheme)
    if spec.user_case is not None:
        _set(cfg, "geometry", "user_case", spec.user_case)
    if deployment is not None:
        _set(cfg, "geometry", "deployment", deployment)
        cfg["geometry"].pop("ris_positions", None)
    if value is not None:
        if spec.variable == "power":
            _set(cfg, "rf", "power_w", float(value))
        elif spec.variable == "users":
            if cfg.get("geometry", {}).get("user_positions") is not None:
                raise ConfigError("a users sweep needs generated user positions")
            _set(cfg, "rf", "K", int(value))
        elif spec.variable == "antennas":
            _set(cfg, "rf", "N", int(value))
        else:
            _set(cfg, "semantic", "budget", float(value))
    return scenario_from_config(cfg)


def _sweep_task(args) -> list[SweepRow]:
    cfg, spec, deployment, scheme, trial = args
    label = deployment or "config"
    rows = []
    if spec.variable == "power":
        scenario = sweep_scenario(cfg, spec, deployment, scheme, trial)
        model = SystemModel(scenario, scheme=scheme)
        tick = time.perf_counter()
        for i, sol in iter_power_continuation(scenario, spec.values, model=model):
            now = time.perf_counter()
            rows.append(SweepRow(float(spec.values[i]), scheme, label, trial, sol.objective,
                                 sol.iterations, (now - tick) * 1e3))
            tick = now
        return rows
    for v in spec.values:
        tick = time.perf_counter()
        sol = optimize(sweep_scenario(cfg, spec, deployment, scheme, trial, v))
        rows.append(SweepRow(float(v), scheme, label, trial, sol.objective, sol.iterations,
                             (time.perf_counter() - tick) * 1e3))
    return rows


def run_sweep(cfg: dict, spec: SweepSpec, jobs: int = 1) -> list[SweepRow]:
    """Solve every sweep cell; rows come back sorted.

    Power sweeps solve the budgets of one (scheme, deployment, trial) in
    ascending order, each warm-started from the one below, so the objective
    never decreases with power within a trial.
    """
    tasks = [(cfg, spec, d, s, t) for d in spec.deployments for s in spec.schemes
             for t in range(spec.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_sweep_task, tasks))
    else:
        chunks = [_sweep_task(t) for t in tasks]
    return sorted((r for chunk in chunks for r in chunk), key=SweepRow.sort_key)


def summarize_sweep(rows: Sequence[SweepRow]) -> list[dict]:
    """Mean and standard deviation over trials for each (deployment, scheme, value)."""
    groups: dict[tuple, list[SweepRow]] = {}
    for r in rows:
        groups.setdefault((r.deployment, r.scheme, r.value), []).append(r)
    out = []
    for (dep, scheme, value), rs in sorted(groups.items()):
        obj = np.array([r.objective_bps for r in rs])
        out.append({
            "value": value, "scheme": scheme, "deployment": dep, "trials": len(rs),
            "mean_objective_bps": float(obj.mean()), "std_objective_bps": float(obj.std()),
            "mean_iterations": float(np.mean([r.iterations for r in rs])),
            "mean_wall_ms": float(np.mean([r.wall_ms for r in rs])),
        })
    return out


def _probe_channels(channels: ChannelSet, k: int) -> ChannelSet:
    return ChannelSet(channels.G, channels.h[:, k:k + 1], channels.gain[:, k:k + 1],
                      channels.m1, channels.m2)


def _probe_angles(angles: AngleSet, k: int) -> AngleSet:
    return AngleSet(angles.bs_departure, angles.ris_arrival, angles.ris_departure[:, k:k + 1])


def rate_map(scenario: NetworkScenario, width: int, height: int, *,
             shadowing: bool = False) -> list[tuple[float, float, float]]:
    """Optimised semantic-aware rate of one probe user at each grid cell centre.

    The probe takes the first user's semantic profile.  Shadow fading is off
    unless ``shadowing`` is set, in which case one draw per RIS-probe link is
    taken from the scenario seed.  Rows are ``(x, y, rate_bps)``, ordered by
    ``y`` then ``x``.
    """
    if width < 2 or height < 2:
        raise ValidationError("rate map grid needs at least 2 x 2 points")
    area = scenario.area_m
    xs = (np.arange(width) + 0.5) * area / width
    ys = (np.arange(height) + 0.5) * area / height
    gx, gy = np.meshgrid(xs, ys)
    probes = tuple((float(x), float(y), scenario.user_height_m)
                   for x, y in zip(gx.ravel(), gy.ravel()))
    batch = scenario.replace(n_users=len(probes), user_positions=probes,
                             profiles=(scenario.profiles[0],) * len(probes))
    angles = geometry_angles(batch)
    channels = build_channel_set(batch, angles, shadowing=shadowing)
    single = scenario.replace(n_users=1, user_positions=(probes[0],),
                              profiles=(scenario.profiles[0],),
                              max_users_per_ris=1)
    rows = []
    for k, (x, y, _) in enumerate(probes):
        probe = single.replace(user_positions=(probes[k],))
        model = SystemModel(probe, _probe_channels(channels, k), _probe_angles(angles, k))
        rows.append((x, y, optimize(probe, model=model).objective))
    return rows


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------

def _read_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: configuration root must be an object")
    return cfg


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _summary(scenario: NetworkScenario, sol) -> str:
    lines = [
        f"scheme {sol.scheme}, K={scenario.n_users}, L={scenario.n_ris}, N={scenario.n_bs}, "
        f"P={scenario.power_w:g} W",
        f"sum semantic-aware rate {sol.objective / 1e6:.4f} Mbit/s after {sol.iterations} "
        f"iterations ({'converged' if sol.converged else 'not converged'})",
        f"{'user':>4} {'ris':>8} {'rho':>7} {'power_w':>9} {'rate_mbps':>10}",
    ]
    for k in range(scenario.n_users):
        ris = ",".join(str(l) for l in np.flatnonzero(sol.x[k])) or "-"
        lines.append(f"{k:>4} {ris:>8} {sol.rho[k]:>7.4f} {sol.p[k]:>9.4f} "
                     f"{sol.rates[k] / 1e6:>10.4f}")
    if sol.degenerate:
        lines.append("matched-filter fallback for users " + ",".join(map(str, sol.degenerate)))
    return "\n".join(lines) + "\n"


def cmd_solve(args) -> int:
    cfg = _read_config(args.config)
    if args.seed is not None:
        _set(cfg, "geometry", "seed", args.seed)
    scenario = scenario_from_config(cfg)
    sol = optimize(scenario)
    doc = sol.to_dict()
    doc["scenario"] = scenario_to_config(scenario)
    _write(args.output, json.dumps(doc, indent=1) + "\n")
    if not args.quiet:
        sys.stdout.write(_summary(scenario, sol))
    return EXIT_OK


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _mean_path(path: str) -> str:
    p = Path(path)
    return str(p.with_name(p.stem + "_mean" + (p.suffix or ".csv")))


def _number_list(text: str, name: str) -> tuple[float, ...]:
    items = [t for t in (s.strip() for s in text.split(",")) if t]
    try:
        return tuple(float(t) for t in items)
    except ValueError as exc:
        raise ValidationError(f"{name}: {exc}") from exc


def cmd_sweep(args) -> int:
    cfg = _read_config(args.config)
    deployments = tuple(None if d == "config" else d for d in args.deployments.split(",") if d)
    spec = SweepSpec(
        variable=args.var,
        values=_number_list(args.values, "--values"),
        schemes=tuple(s.strip().lower() for s in args.schemes.split(",") if s.strip()),
        deployments=deployments or (None,),
        trials=args.trials,
        seed=args.seed if args.seed is not None else int(cfg.get("geometry", {}).get("seed", 0)),
        user_case=args.case,
    )
    rows = run_sweep(cfg, spec, jobs=args.jobs)
    _write(args.output, _csv_text(SWEEP_FIELDS, [
        (f"{r.value:g}", r.scheme, r.deployment, r.trial, repr(r.objective_bps), r.iterations,
         f"{r.wall_ms:.3f}") for r in rows]))
    summary = summarize_sweep(rows)
    if args.output != "-":
        fields = list(summary[0])
        _write(_mean_path(args.output), _csv_text(fields, [
            [f"{s['value']:g}", s["scheme"], s["deployment"], s["trials"],
             repr(s["mean_objective_bps"]), repr(s["std_objective_bps"]),
             f"{s['mean_iterations']:.3f}", f"{s['mean_wall_ms']:.3f}"] for s in summary]))
    if not args.quiet:
        for s in summary:
            print(f"{s['deployment']:>12} {s['scheme']:>5} {s['value']:>10g} "
                  f"{s['mean_objective_bps'] / 1e6:10.4f} +- {s['std_objective_bps'] / 1e6:.4f} Mbit/s")
    return EXIT_OK


def _grid(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise ValidationError(f"--grid expects WxH, got {text!r}") from exc
    return w, h


def cmd_ratemap(args) -> int:
    cfg = _read_config(args.config)
    if args.seed is not None:
        _set(cfg, "geometry", "seed", args.seed)
    if args.deployment is not None:
        _set(cfg, "geometry", "deployment", args.deployment)
        cfg["geometry"].pop("ris_positions", None)
    if args.scheme is not None:
        _set(cfg, "solver", "ma_scheme", args.scheme)
    scenario = scenario_from_config(cfg)
    w, h = _grid(args.grid)
    rows = rate_map(scenario, w, h, shadowing=args.shadow)
    _write(args.output, _csv_text(("x", "y", "rate_bps"),
                                  [(repr(x), repr(y), repr(r)) for x, y, r in rows]))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse already exits with status 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rispsc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="optimise one configuration")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--output", required=True, help="solution JSON path ('-' for stdout)")
    p.add_argument("--seed", type=int, help="override geometry.seed (re-draws users and shadowing)")
    p.add_argument("-q", "--quiet", action="store_true", help="skip the printed summary")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="objective versus one parameter")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--var", required=True, choices=SWEEP_VARS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--schemes", default="ssd", help="comma-separated subset of " + ",".join(MA_SCHEMES))
    p.add_argument("--deployments", default="config",
                   help="comma-separated presets; 'config' keeps the configured layout")
    p.add_argument("--case", choices=USER_CASES, help="user distribution")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, help="first trial seed (default geometry.seed)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("-o", "--output", required=True, help="per-trial CSV; means go to <stem>_mean.csv")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ratemap", help="rate of a single probe user over a grid")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--grid", default="50x50", help="WxH probe points")
    p.add_argument("--deployment", choices=DEPLOYMENTS)
    p.add_argument("--scheme", choices=MA_SCHEMES)
    p.add_argument("--seed", type=int)
    p.add_argument("--shadow", action="store_true", help="draw shadow fading for probe links")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_ratemap)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"rispsc: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # solver failures become a distinct exit status
        print(f"rispsc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
