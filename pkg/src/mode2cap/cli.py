"""Command-line front end: PLR curves, capacity, sweeps, simulation, and
analytic-vs-simulation validation, emitted as CSV or JSON.

Flag precedence is flags > config file > built-in defaults.  Exit codes:
0 success, 2 usage or configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .analytic import capacity, capacity_sweep, plr
from .config import (
    ConfigError,
    ScenarioConfig,
    TrafficIntensityError,
    validate_config,
)
from .sim import SimConfig, run as sim_run, validate_sim_config

# CLI sweep names -> ScenarioConfig fields
SWEEP_PARAMETERS = {
    "nu": "repetitions_nu",
    "bandwidth_b": "num_subchannels_b",
    "lambda": "lambda_rate",
    "plr_target": "plr_target",
}

_BELOW_MEASURABLE = 1e-6


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter: a CLI name plus its value list."""

    name: str
    values: tuple[float, ...]

    @property
    def field(self) -> str:
        return SWEEP_PARAMETERS[self.name]


def parse_sweep(text: str) -> SweepSpec:
    """Parse NAME=START..STOP[:STEP] (inclusive) or NAME=v1,v2,... ."""
    if "=" not in text:
        raise ConfigError(f"sweep spec needs NAME=RANGE, got {text!r}")
    name, _, spec = text.partition("=")
    name = name.strip()
    if name not in SWEEP_PARAMETERS:
        raise ConfigError(
            f"unknown sweep parameter {name!r} (choose from {sorted(SWEEP_PARAMETERS)})")
    integral = name in ("nu", "bandwidth_b")
    conv = int if integral else float
    try:
        if ".." in spec:
            lo_text, _, rest = spec.partition("..")
            hi_text, _, step_text = rest.partition(":")
            lo, hi = conv(lo_text), conv(hi_text)
            step = conv(step_text) if step_text else (1 if integral else 1.0)
            if step <= 0:
                raise ConfigError(f"sweep step must be positive in {text!r}")
            values = []
            v = lo
            while v <= hi + (0 if integral else 1e-12 * max(abs(hi), 1.0)):
                values.append(conv(v))
                v += step
        else:
            values = [conv(part) for part in spec.split(",") if part.strip()]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot parse sweep spec {text!r}: {exc}") from exc
    if not values:
        raise ConfigError(f"sweep spec {text!r} produced no values")
    return SweepSpec(name=name, values=tuple(values))


def parse_lambda_list(chunks: Sequence[str] | None) -> list[float]:
    values: list[float] = []
    for chunk in chunks or []:
        for part in chunk.split(","):
            part = part.strip()
            if part:
                try:
                    values.append(float(part))
                except ValueError as exc:
                    raise ConfigError(f"bad lambda value {part!r}") from exc
    return values


def load_scenario(args: argparse.Namespace) -> ScenarioConfig:
    """Config file merged under CLI overrides, validated."""
    data: dict = {}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    if getattr(args, "phi", None) is not None:
        data["phi"] = args.phi
    return validate_config(data)


def format_value(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def emit_rows(columns: Sequence[str], rows: Sequence[Sequence], args) -> None:
    """Write rows as CSV (17 significant digits, LF endings) or JSON."""
    if args.format == "json":
        payload = [dict(zip(columns, row)) for row in rows]
        text = json.dumps(payload, indent=2) + "\n"
    else:
        lines = [",".join(columns)]
        lines += [",".join(format_value(v) for v in row) for row in rows]
        text = "\n".join(lines) + "\n"
    _write_output(text, args)


def _write_output(text: str, args) -> None:
    if args.out is not None:
        Path(args.out).write_text(text, newline="")
    else:
        sys.stdout.write(text)


def write_sidecar(args, scenario: ScenarioConfig, extra: dict | None = None) -> None:
    """Log the fully-resolved configuration next to the output file."""
    if args.out is None:
        return
    payload = {"command": args.command, "scenario": scenario.__dict__}
    if extra:
        payload.update(extra)
    Path(str(args.out) + ".config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _plr_worker(payload: tuple[float, ScenarioConfig]):
    lam, cfg = payload
    return plr(lam, cfg)


def _map_parallel(worker, payloads, workers: int):
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(worker, payloads))
    return [worker(p) for p in payloads]


def cmd_plr(args) -> int:
    cfg = load_scenario(args)
    lambdas = parse_lambda_list(args.lambda_list)
    points = _map_parallel(_plr_worker, [(lam, cfg) for lam in lambdas], args.workers)
    rows = [
        (pt.lambda_rate, pt.plr, pt.error_estimate,
         "model_validity" if pt.validity_warning else "")
        for pt in points
    ]
    emit_rows(("lambda", "plr", "error_estimate", "validity_flag"), rows, args)
    write_sidecar(args, cfg, {"lambda": lambdas})
    return 0


def cmd_capacity(args) -> int:
    cfg = load_scenario(args)
    specs = [parse_sweep(text) for text in args.vary or []]
    if any(spec.name == "lambda" for spec in specs):
        raise ConfigError("lambda cannot be swept for capacity; it is the solved quantity")
    if not specs:
        result = capacity(cfg)
        rows = [(result.capacity, ";".join(result.flags))]
        emit_rows(("capacity", "flag"), rows, args)
    else:
        grid = {spec.field: list(spec.values) for spec in specs}
        results = capacity_sweep(cfg, grid, workers=args.workers)
        columns = tuple(spec.name for spec in specs) + ("capacity", "flag")
        rows = []
        for overrides, result in results:
            swept = tuple(overrides[field] for field in
                          (spec.field for spec in specs))
            rows.append(swept + (result.capacity, ";".join(result.flags)))
        rows.sort(key=lambda row: row[:len(specs)])
        emit_rows(columns, rows, args)
    write_sidecar(args, cfg, {"vary": [f"{s.name}={list(s.values)}" for s in specs]})
    return 0


def _build_sim_config(args, cfg: ScenarioConfig) -> SimConfig:
    return validate_sim_config(SimConfig(
        scenario=cfg,
        num_ues=args.num_ues,
        num_slots=args.slots,
        seed=args.seed,
        replications=args.replications,
    ))


def cmd_simulate(args) -> int:
    cfg = load_scenario(args)
    sim_cfg = _build_sim_config(args, cfg)
    report = sim_run(sim_cfg, workers=args.workers)
    _write_output(report.to_json(), args)
    write_sidecar(args, cfg, {
        "num_ues": sim_cfg.num_ues,
        "num_slots": sim_cfg.num_slots,
        "seed": sim_cfg.seed,
        "replications": sim_cfg.replications,
    })
    return 0


def cmd_validate(args) -> int:
    cfg = load_scenario(args)
    lambdas = parse_lambda_list(args.lambda_list)
    rows = []
    for lam in lambdas:
        analytic_pt = plr(lam, cfg)
        sim_cfg = _build_sim_config(args, cfg.with_lambda(lam))
        report = sim_run(sim_cfg, workers=args.workers)
        sim_plr = report.plr_estimate
        ratio = analytic_pt.plr / sim_plr if sim_plr > 0 else math.nan
        flags = []
        if analytic_pt.plr < _BELOW_MEASURABLE and sim_plr < _BELOW_MEASURABLE:
            flags.append("below_measurable")
        if analytic_pt.validity_warning:
            flags.append("model_validity")
        rows.append((lam, analytic_pt.plr, sim_plr,
                     report.confidence_interval_95, ratio, ";".join(flags)))
    emit_rows(("lambda", "plr_analytic", "plr_sim", "ci", "ratio", "flag"),
              rows, args)
    write_sidecar(args, cfg, {
        "lambda": lambdas,
        "num_ues": args.num_ues,
        "num_slots": args.slots,
        "seed": args.seed,
        "replications": args.replications,
    })
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mode2cap",
        description="Packet loss rate and capacity for sporadic broadcast "
                    "traffic on a multichannel slotted random-access sidelink.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", metavar="PATH", help="JSON scenario config")
        p.add_argument("--out", metavar="PATH", help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel workers for independent evaluations")

    def sim_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--slots", type=int, default=20000, help="slots per replication")
        p.add_argument("--seed", type=int, default=1, help="base RNG seed")
        p.add_argument("--replications", type=int, default=4)
        p.add_argument("--num-ues", type=int, default=400, dest="num_ues")
        p.add_argument("--phi", type=float, default=None,
                       help="override UE density, 1/m")

    p_plr = sub.add_parser("plr", help="PLR over a list of loads")
    common(p_plr)
    p_plr.add_argument("--lambda", dest="lambda_list", action="append",
                       metavar="LIST", help="comma-separated loads, 1/s (repeatable)")

    for name in ("capacity", "sweep"):
        p_cap = sub.add_parser(name, help="capacity, optionally over a parameter grid")
        common(p_cap)
        p_cap.add_argument("--vary", action="append", metavar="NAME=START..STOP[:STEP]",
                           help="sweep spec; repeat for a grid "
                                f"(names: {', '.join(sorted(SWEEP_PARAMETERS))})")
        p_cap.set_defaults(func=cmd_capacity)

    p_sim = sub.add_parser("simulate", help="Monte Carlo run, JSON report")
    common(p_sim)
    sim_flags(p_sim)

    p_val = sub.add_parser("validate", help="analytic vs simulated PLR side by side")
    common(p_val)
    sim_flags(p_val)
    p_val.add_argument("--lambda", dest="lambda_list", action="append",
                       metavar="LIST", help="comma-separated loads, 1/s (repeatable)")

    p_plr.set_defaults(func=cmd_plr)
    p_sim.set_defaults(func=cmd_simulate)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError("workers out of range (need at least 1)")
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrafficIntensityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
