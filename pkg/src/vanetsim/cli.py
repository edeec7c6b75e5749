"""Batch command-line front end: scenario JSON in, machine-readable report out.

Exit codes: 0 success, 1 statistical mismatch (compare only), 2 input
error, 3 internal numerical error. All randomness flows from --seed (or
the scenario's seed when the flag is omitted).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .analysis import (
    analytic_report,
    expected_download_time,
    expected_throughput_class,
    expected_throughput_continuous,
)
from .encounters import monte_carlo_throughput, simulate_download_time
from .errors import (
    InvalidParameterError,
    NoProgressError,
    NumericalError,
    SchemaError,
)
from .fountain import FileSpec, LtScheme, SolitonParams, UniformScheme, packets_needed
from .pmf_opt import optimize_pmf, probabilities_decrease_with_speed
from .traffic import (
    ContinuousVelocityDist,
    MixtureVelocityDist,
    Scenario,
    mean_inverse_speed,
    scenario_from_dict,
)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

Z_LIMIT = 4.0

_CSV_HELP = (
    "CSV output is a flat two-column table (key,value); keys are dotted "
    "paths into the JSON report, list entries indexed as key[i]. Floats "
    "are printed with 9 significant digits in both formats."
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vanetsim",
        description=(
            "Highway content-distribution toolkit: analyze closed-form "
            "throughput, run Monte Carlo trip simulations, cross-validate "
            "the two, optimize velocity-class probabilities, and project "
            "or simulate file download times."
        ),
        epilog=_CSV_HELP + " Exit codes: 0 ok, 1 statistical mismatch "
        "(compare), 2 input error, 3 numerical error.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, scenario: bool = True):
        if scenario:
            p.add_argument("scenario", help="path to a scenario JSON file")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--format", choices=["json", "csv"], default="json")
        p.add_argument("--output", default=None, help="write the report here instead of stdout")

    p = sub.add_parser("analyze", help="closed-form expectations for a scenario")
    add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo throughput estimate")
    add_common(p)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument(
        "--observer-v",
        type=float,
        default=None,
        help="observer speed (default: first forward class / forward support midpoint)",
    )

    p = sub.add_parser("compare", help="analytic vs simulated throughput, exit 1 on mismatch")
    add_common(p)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--corrupt-analytic", type=float, default=1.0, help=argparse.SUPPRESS)

    p = sub.add_parser("optimize-pmf", help="throughput-maximizing class probabilities")
    add_common(p, scenario=False)
    p.add_argument("--speeds", required=True, help="comma-separated class speeds, e.g. 80,90,100")

    p = sub.add_parser("download-time", help="projected and simulated file download time")
    add_common(p)
    p.add_argument("--K", type=int, required=True, dest="k", help="number of file blocks")
    p.add_argument("--epsilon", type=float, default=0.01, help="decode-failure target")
    p.add_argument("--scheme", choices=["uniform", "lt"], default="uniform")
    p.add_argument("--lt-c", type=float, default=0.1)
    p.add_argument("--lt-delta", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--observer-v", type=float, default=None)
    return parser


def _load_scenario(path: str) -> tuple[Scenario, str]:
    data = Path(path).read_bytes()
    digest = "sha256:" + hashlib.sha256(data).hexdigest()
    doc = json.loads(data.decode("utf-8"))
    if not isinstance(doc, dict):
        raise SchemaError("$", "expected an object")
    return scenario_from_dict(doc), digest


def _forward_support(scenario: Scenario) -> tuple[float, float]:
    vel = scenario.velocity
    if isinstance(vel, ContinuousVelocityDist):
        comps = [vel]
    elif isinstance(vel, MixtureVelocityDist):
        comps = [c for c, w in zip(vel.components, vel.weights) if w > 0]
    else:
        raise InvalidParameterError("not a continuous distribution")
    for comp in comps:
        if comp.support[0] > 0:
            return comp.support
    raise InvalidParameterError("no forward traffic component to observe")


def _default_observer(scenario: Scenario) -> float:
    if scenario.is_discrete:
        for cls in scenario.velocity.classes:
            if cls.v > 0:
                return cls.v
        raise InvalidParameterError("no forward class to observe")
    a, b = _forward_support(scenario)
    return 0.5 * (a + b)


def _observer_sampler(scenario: Scenario, fixed: float | None):
    """Per-trial observer speed: fixed, or drawn from the forward traffic."""
    if fixed is not None:
        value = float(fixed)
        return lambda rng: value
    if scenario.is_discrete:
        forward = [c for c in scenario.velocity.classes if c.v > 0 and c.p > 0]
        if not forward:
            raise InvalidParameterError("no forward class to observe")
        total = sum(c.p for c in forward)
        cum = np.cumsum([c.p / total for c in forward])
        speeds = [c.v for c in forward]

        def draw(rng: np.random.Generator) -> float:
            i = int(np.searchsorted(cum, rng.random(), side="right"))
            return speeds[min(i, len(speeds) - 1)]

        return draw
    a, b = _forward_support(scenario)
    return lambda rng: float(rng.uniform(a, b))


def _z_score(diff: float, std_error: float, scale: float) -> float:
    # a zero-variance estimate still gets a finite, comparable score
    eff = max(std_error, 1e-12 * max(1.0, abs(scale)))
    return diff / eff


def _cmd_analyze(args) -> tuple[str, int, dict, int]:
    scenario, digest = _load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else scenario.seed
    report = analytic_report(scenario)
    if scenario.is_discrete:
        results = {
            "kind": "discrete",
            "packet_rate": scenario.packet_rate,
            "classes": [
                {
                    "index": row.index,
                    "v": row.v,
                    "p": row.p,
                    "density": row.density,
                    "expected_encounters": row.expected_encounters,
                    "expected_packets": row.expected_packets,
                    "expected_throughput": row.expected_throughput,
                }
                for row in report.per_class
            ],
            "average_throughput": report.average_throughput,
            "rho_bar": report.rho_bar,
            "mean_cars": report.mean_cars,
            "system_throughput": report.system_throughput,
        }
    else:
        results = {
            "kind": "continuous",
            "packet_rate": scenario.packet_rate,
            "average_throughput": report.average_throughput,
            "mean_inverse_speed": mean_inverse_speed(scenario.velocity),
            "mean_cars": report.mean_cars,
            "car_density": report.mean_cars / scenario.d,
            "system_throughput": report.system_throughput,
        }
    return digest, seed, results, EXIT_OK


def _cmd_simulate(args) -> tuple[str, int, dict, int]:
    scenario, digest = _load_scenario(args.scenario)
    if args.trials < 2:
        raise InvalidParameterError("--trials must be >= 2")
    seed = args.seed if args.seed is not None else scenario.seed
    observer = args.observer_v if args.observer_v is not None else _default_observer(scenario)
    rng = np.random.default_rng(seed)
    est = monte_carlo_throughput(scenario, observer, args.trials, rng)
    results = {
        "observer_v": observer,
        "trials": est.trials,
        "mean_throughput": est.mean,
        "std_error": est.std_error,
    }
    return digest, seed, results, EXIT_OK


def _cmd_compare(args) -> tuple[str, int, dict, int]:
    scenario, digest = _load_scenario(args.scenario)
    if args.trials < 2:
        raise InvalidParameterError("--trials must be >= 2")
    seed = args.seed if args.seed is not None else scenario.seed
    rng = np.random.default_rng(seed)
    rows = []
    if scenario.is_discrete:
        kind = "discrete"
        for i, cls in enumerate(scenario.velocity.classes):
            if cls.v <= 0:
                continue  # only forward observers traverse the segment
            analytic = expected_throughput_class(scenario, i) * args.corrupt_analytic
            est = monte_carlo_throughput(scenario, cls.v, args.trials, rng)
            rows.append(
                {
                    "label": f"class[{i}]",
                    "observer_v": cls.v,
                    "analytic": analytic,
                    "simulated": est.mean,
                    "std_error": est.std_error,
                    "z": _z_score(est.mean - analytic, est.std_error, analytic),
                }
            )
    else:
        kind = "continuous"
        analytic = expected_throughput_continuous(scenario) * args.corrupt_analytic
        a, b = _forward_support(scenario)
        width = b - a
        for obs in (a + 0.1 * width, 0.5 * (a + b), b - 0.1 * width):
            est = monte_carlo_throughput(scenario, obs, args.trials, rng)
            rows.append(
                {
                    "label": f"observer_v={obs:g}",
                    "observer_v": obs,
                    "analytic": analytic,
                    "simulated": est.mean,
                    "std_error": est.std_error,
                    "z": _z_score(est.mean - analytic, est.std_error, analytic),
                }
            )
    max_abs_z = max(abs(row["z"]) for row in rows)
    passed = max_abs_z <= Z_LIMIT
    results = {
        "kind": kind,
        "trials": args.trials,
        "rows": rows,
        "max_abs_z": max_abs_z,
        "z_limit": Z_LIMIT,
        "passed": passed,
    }
    return digest, seed, results, EXIT_OK if passed else EXIT_MISMATCH


def _cmd_optimize_pmf(args) -> tuple[str, int, dict, int]:
    try:
        speeds = [float(tok) for tok in args.speeds.split(",") if tok.strip()]
    except ValueError as exc:
        raise InvalidParameterError(f"--speeds: {exc}") from exc
    if len(speeds) < 2:
        raise InvalidParameterError("--speeds needs at least two classes")
    digest = "sha256:" + hashlib.sha256(args.speeds.encode("utf-8")).hexdigest()
    seed = args.seed if args.seed is not None else 0
    sol = optimize_pmf(speeds)
    results = {
        "speeds": speeds,
        "p": list(sol.p),
        "p_sorted": list(sol.p_sorted),
        "sort_index": list(sol.sort_index),
        "objective": sol.objective,
        "active_set_size": sol.active_set_size,
        "kkt_nu": sol.kkt_nu,
        "kkt_residual": sol.kkt_residual,
        "monotone_in_speed": probabilities_decrease_with_speed(sol, speeds),
    }
    return digest, seed, results, EXIT_OK


def _cmd_download_time(args) -> tuple[str, int, dict, int]:
    scenario, digest = _load_scenario(args.scenario)
    if args.k < 1:
        raise InvalidParameterError("--K must be >= 1")
    if args.trials < 1:
        raise InvalidParameterError("--trials must be >= 1")
    seed = args.seed if args.seed is not None else scenario.seed
    if args.scheme == "uniform":
        scheme = UniformScheme()
    else:
        scheme = LtScheme(SolitonParams(c=args.lt_c, delta=args.lt_delta, epsilon=args.epsilon))
    file = FileSpec(k=args.k, l=64)
    projection = expected_download_time(scenario, file, args.epsilon, scheme)
    rng = np.random.default_rng(seed)
    draw_observer = _observer_sampler(scenario, args.observer_v)
    times = np.empty(args.trials)
    packets = np.empty(args.trials)
    segments = np.empty(args.trials)
    for i in range(args.trials):
        observer = draw_observer(rng)
        t, n, s = simulate_download_time(scenario, observer, file, scheme, rng)
        times[i], packets[i], segments[i] = t, n, s
    std_error = float(times.std(ddof=1) / math.sqrt(args.trials)) if args.trials > 1 else 0.0
    results = {
        "k": args.k,
        "epsilon": args.epsilon,
        "scheme": args.scheme,
        "trials": args.trials,
        "packets_needed": packets_needed(args.k, args.epsilon, scheme),
        "projected_time": projection,
        "simulated_mean_time": float(times.mean()),
        "simulated_std_error": std_error,
        "mean_packets": float(packets.mean()),
        "mean_segments": float(segments.mean()),
    }
    return digest, seed, results, EXIT_OK


_COMMANDS = {
    "analyze": _cmd_analyze,
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "optimize-pmf": _cmd_optimize_pmf,
    "download-time": _cmd_download_time,
}


def _nine_digits(obj):
    """Round every float to 9 significant digits, recursively."""
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: _nine_digits(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_nine_digits(v) for v in obj]
    return obj


def _flatten(prefix: str, obj, rows: list[tuple[str, object]]):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, obj))


def _render(report: dict, fmt: str) -> str:
    report = _nine_digits(report)
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
    rows: list[tuple[str, object]] = []
    _flatten("", report, rows)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["key", "value"])
    for key, value in rows:
        if isinstance(value, float):
            value = f"{value:.9g}"
        writer.writerow([key, value])
    return buf.getvalue()


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    start = time.perf_counter()
    try:
        digest, seed, results, code = _COMMANDS[args.command](args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvalidParameterError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, NoProgressError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    report = {
        "command": args.command,
        "scenario_digest": digest,
        "seed": seed,
        "wall_time": time.perf_counter() - start,
        "results": results,
    }
    try:
        text = _render(report, args.format)
    except ValueError as exc:  # non-finite values refused by the serializer
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return code


def entrypoint():
    sys.exit(main(sys.argv[1:]))
