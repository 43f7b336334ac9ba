"""Command-line front door.

Subcommands: validate, run, drift (simulate|design|fit), compose, certify,
bench.  Exit codes are frozen for CI use:

  0  success / compliant session
  1  validation or check failures (schema issues, failed conditions,
     failed scenarios)
  2  IO, format, or numeric input errors
  3  session outcome soft_violation
  4  session outcome hard_violation

``--format json`` emits machine-readable reports; ABC_COLOR={auto,never}
controls ANSI color in table output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .bench import aggregate, load_suite, score_suite
from .certification import CertificationStream, SprtConfig
from .composition import ChainSpec, chain_bounds, check_conditions, compose_chain
from .dynamics import (
    DesignSpec,
    OUParams,
    design_gamma_approx,
    fit_ou,
    load_trajectory,
    save_trajectory,
    simulate_ou,
    solve_design_gamma,
    tail_probability,
)
from .errors import ContractError, DanglingConstraintRef, FormatError, InvalidStep
from .generator import generate_suite
from .model import ActionRecord, ExecutionTrace, validate_contract
from .monitor import run_session
from .parser import PipelineContract, load_document

EXIT_OK = 0
EXIT_ISSUES = 1
EXIT_INPUT = 2
EXIT_SOFT = 3
EXIT_HARD = 4


def _color_enabled() -> bool:
    mode = os.environ.get("ABC_COLOR", "auto")
    if mode == "never":
        return False
    return sys.stdout.isatty()


def _paint(text: str, code: str) -> str:
    if not _color_enabled():
        return text
    return f"\033[{code}m{text}\033[0m"


def _emit(payload, fmt: str, render) -> None:
    if fmt == "json":
        print(json.dumps(payload, indent=2))
    else:
        print(render(payload))


def _load_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    try:
        contract = load_document(args.contract)
    except ContractError as exc:
        span = getattr(exc, "span", None)
        if args.format == "json":
            payload = {"contract": args.contract, "valid": False,
                       "issues": [{"element": getattr(exc, "field", None) or "document",
                                   "rule": type(exc).__name__,
                                   "message": str(exc),
                                   "severity": "error",
                                   "span": str(span) if span else None}]}
            sys.stderr.write(json.dumps(payload, indent=2) + "\n")
        else:
            location = f" at {span}" if span else ""
            print(f"error{location}: {exc}", file=sys.stderr)
        return EXIT_ISSUES
    if isinstance(contract, PipelineContract):
        issues = []
        for stage in contract.stages:
            issues.extend(validate_contract(stage.contract))
    else:
        issues = validate_contract(contract)
    errors = [i for i in issues if i.severity == "error"]
    payload = {"contract": args.contract,
               "issues": [{"element": i.element, "rule": i.rule,
                           "message": i.message, "severity": i.severity}
                          for i in issues],
               "valid": not errors}
    if args.format == "json":
        stream = sys.stderr if errors else sys.stdout
        stream.write(json.dumps(payload, indent=2) + "\n")
    else:
        for issue in issues:
            print(str(issue), file=sys.stderr if issue.severity == "error" else sys.stdout)
        verdict = "valid" if not errors else "invalid"
        print(f"{args.contract}: {_paint(verdict, '32' if not errors else '31')}")
    return EXIT_OK if not errors else EXIT_ISSUES


def cmd_run(args) -> int:
    contract = load_document(args.contract)
    doc = _load_json(args.trace)
    trace = ExecutionTrace.from_dict(doc)
    boundaries = doc.get("boundaries")
    if isinstance(contract, PipelineContract):
        composed = compose_chain([s.contract for s in contract.stages],
                                 list(contract.handoffs))
        report = run_session(composed, trace, hook=None, boundaries=boundaries)
    else:
        report = run_session(contract, trace, hook=None)

    output = report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(output + "\n")
    if args.format == "json" or not args.out:
        print(output)
    else:
        print(f"outcome: {report.outcome}  theta: {report.metrics.theta:.4f}")
    return {"compliant": EXIT_OK, "soft_violation": EXIT_SOFT,
            "hard_violation": EXIT_HARD}[report.outcome]


def cmd_drift_simulate(args) -> int:
    params = OUParams(alpha=args.alpha, gamma=args.gamma, sigma=args.sigma, d0=args.d0)
    times, values = simulate_ou(params, horizon=args.horizon, dt=args.dt,
                                seed=args.seed, clamp_zero=args.clamp_zero)
    if args.out:
        save_trajectory(args.out, times, values)
        print(f"wrote {len(values)} samples to {args.out}")
    else:
        for t, v in zip(times, values):
            print(f"{t:.6g},{v:.6g}")
    return EXIT_OK


def cmd_drift_design(args) -> int:
    spec = DesignSpec(d_max=args.dmax, epsilon=args.epsilon)
    gamma = solve_design_gamma(args.alpha, args.sigma, spec)
    approx = design_gamma_approx(args.alpha, args.sigma, spec)
    eta = args.dmax - args.alpha / gamma
    check = tail_probability(OUParams(args.alpha, gamma, args.sigma), eta) \
        if args.sigma > 0 else 0.0
    payload = {"gamma_min": gamma, "gamma_approx": approx,
               "stationary_mean": args.alpha / gamma, "eta": eta,
               "tail_probability_at_gamma_min": check}
    _emit(payload, args.format,
          lambda p: (f"gamma_min       {p['gamma_min']:.6f}\n"
                     f"gamma_approx    {p['gamma_approx']:.6f}\n"
                     f"stationary mean {p['stationary_mean']:.6f}\n"
                     f"tail prob check {p['tail_probability_at_gamma_min']:.3e}"))
    return EXIT_OK


def cmd_drift_fit(args) -> int:
    times, values = load_trajectory(args.csv)
    fit = fit_ou(list(zip(times, values)))
    payload = {"gamma_hat": fit.gamma_hat, "d_star_hat": fit.d_star_hat,
               "r_squared": fit.r_squared, "degenerate": fit.degenerate}
    _emit(payload, args.format,
          lambda p: (f"gamma_hat  {p['gamma_hat']:.6f}\n"
                     f"d_star_hat {p['d_star_hat']:.6f}\n"
                     f"r_squared  {p['r_squared']:.4f}"
                     + ("\n(degenerate: constant trajectory)" if p["degenerate"] else "")))
    return EXIT_OK


def cmd_compose(args) -> int:
    pipeline = load_document(args.pipeline)
    if not isinstance(pipeline, PipelineContract):
        print("compose expects a pipeline document", file=sys.stderr)
        return EXIT_INPUT

    samples, actions = [], []
    if args.witnesses:
        states_path = os.path.join(args.witnesses, "states.json")
        actions_path = os.path.join(args.witnesses, "actions.json")
        if os.path.exists(states_path):
            samples = _load_json(states_path)
        if os.path.exists(actions_path):
            actions = [ActionRecord(label=a["label"], payload=a.get("payload", {}))
                       for a in _load_json(actions_path)]

    reports = []
    for i in range(len(pipeline.stages) - 1):
        a = pipeline.stages[i].contract
        b = pipeline.stages[i + 1].contract
        report = check_conditions(a, b, pipeline.handoffs[i], samples, actions)
        reports.append(report)

    bounds = chain_bounds(ChainSpec.from_pipeline(pipeline))
    payload = {
        "pipeline": pipeline.name,
        "handoffs": [r.to_dict() for r in reports],
        "chain_bounds": bounds.to_dict(),
    }

    def render(p) -> str:
        lines = [f"pipeline: {p['pipeline']}"]
        for i, rep in enumerate(p["handoffs"]):
            lines.append(f"handoff {i}:")
            for key in ("C1", "C2", "C3", "C4"):
                entry = rep[key]
                mark = _paint("pass", "32") if entry["passed"] else _paint("FAIL", "31")
                lines.append(f"  {key}: {mark}" + (
                    f"  witnesses: {entry['witnesses']}" if entry["witnesses"] else ""))
        cb = p["chain_bounds"]
        lines.append(f"p_chain >= {cb['p_chain_lower']:.4f}   "
                     f"delta_chain <= {cb['delta_chain_upper']:.4f}   "
                     f"p_frechet >= {cb['p_frechet_lower']:.4f}")
        return "\n".join(lines)

    _emit(payload, args.format, render)
    return EXIT_OK if all(r.all_pass for r in reports) else EXIT_ISSUES


def _read_observations(path: str) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read().strip()
    if not text:
        return []
    if text.startswith("["):
        return [bool(x) for x in json.loads(text)]
    return [bool(int(line)) for line in text.splitlines() if line.strip()]


def cmd_certify(args) -> int:
    cfg = SprtConfig(p0=args.p0, p1=args.p1, alpha_err=args.alpha_err,
                     beta_err=args.beta_err)
    stream = CertificationStream(cfg, window=args.window)
    observations = _read_observations(args.observations)
    for x in observations:
        stream.feed(x)
    payload = {
        "observations": len(observations),
        "decisions": [{"n": n, "decision": d} for n, d in stream.decisions],
        "state": stream.state.to_dict(),
    }
    _emit(payload, args.format, lambda p: "\n".join(
        [f"observations: {p['observations']}"]
        + [f"decision after n={d['n']}: {d['decision']}" for d in p["decisions"]]
        + [f"current: n={p['state']['n']} log_lambda={p['state']['log_lambda']:.4f} "
           f"({p['state']['decision']})"]))
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.generate:
        manifest = generate_suite(args.suite, seed=args.seed)
        print(f"generated {len(manifest['scenarios'])} scenarios in {args.suite}")
        return EXIT_OK
    scenarios = load_suite(args.suite)
    scores = score_suite(scenarios, jobs=args.jobs)
    summary = aggregate(scores)
    if args.format == "json":
        payload = summary.to_dict()
        payload["scenarios"] = [s.to_dict() for s in scores]
        print(json.dumps(payload, indent=2))
    else:
        print(summary.to_table())
        failed = [s for s in scores if not s.passed]
        print(f"\n{len(scores) - len(failed)}/{len(scores)} scenarios passed; "
              f"overall detection accuracy "
              f"{summary.overall['detection_accuracy']:.4f}")
        for s in failed:
            print(_paint(f"FAIL {s.scenario_id}: {'; '.join(s.reasons)}", "31"))
    return EXIT_OK if all(s.passed for s in scores) else EXIT_ISSUES


# ---------------------------------------------------------------------------
# Argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agentcontracts",
        description="Behavioral contract toolkit: validate contracts, replay "
                    "sessions, analyze drift dynamics, check composition, "
                    "certify compliance, run benchmarks.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a contract document")
    p.add_argument("contract")
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="replay a trace through the session monitor")
    p.add_argument("contract")
    p.add_argument("trace", help="JSON file with states/actions (and boundaries "
                                 "for pipeline contracts)")
    p.add_argument("--hook", choices=("none",), default="none",
                   help="recovery hook (only 'none' from the CLI; hooks are code)")
    p.add_argument("--out", help="write the session report JSON here")
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("drift", help="drift dynamics tools")
    drift_sub = p.add_subparsers(dest="drift_command", required=True)

    ps = drift_sub.add_parser("simulate", help="simulate a drift trajectory")
    ps.add_argument("--alpha", type=float, required=True)
    ps.add_argument("--gamma", type=float, required=True)
    ps.add_argument("--sigma", type=float, required=True)
    ps.add_argument("--d0", type=float, default=0.0)
    ps.add_argument("--horizon", type=float, default=50.0)
    ps.add_argument("--dt", type=float, default=0.01)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--clamp-zero", action="store_true")
    ps.add_argument("--out", help="CSV output path (columns t, D)")
    ps.set_defaults(func=cmd_drift_simulate)

    pd = drift_sub.add_parser("design", help="solve the minimum recovery rate")
    pd.add_argument("--alpha", type=float, required=True)
    pd.add_argument("--sigma", type=float, required=True)
    pd.add_argument("--dmax", type=float, required=True)
    pd.add_argument("--epsilon", type=float, required=True)
    pd.add_argument("--format", choices=("json", "table"), default="table")
    pd.set_defaults(func=cmd_drift_design)

    pf = drift_sub.add_parser("fit", help="fit the mean-reversion model to a CSV trajectory")
    pf.add_argument("csv")
    pf.add_argument("--format", choices=("json", "table"), default="table")
    pf.set_defaults(func=cmd_drift_fit)

    p = sub.add_parser("compose", help="check composition conditions and chain bounds")
    p.add_argument("pipeline")
    p.add_argument("--witnesses", help="directory with states.json / actions.json")
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("certify", help="stream observations through the sequential test")
    p.add_argument("observations", help="JSON array or one 0/1 per line")
    p.add_argument("--p0", type=float, default=0.90)
    p.add_argument("--p1", type=float, default=0.95)
    p.add_argument("--alpha-err", type=float, default=0.05)
    p.add_argument("--beta-err", type=float, default=0.05)
    p.add_argument("--window", type=int, default=None,
                   help="experimental sliding-window variant")
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("bench", help="score a scenario suite (or generate one)")
    p.add_argument("suite", help="suite directory (with manifest.json)")
    p.add_argument("--generate", action="store_true",
                   help="generate a synthetic suite into the directory")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (json.JSONDecodeError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FormatError, DanglingConstraintRef, InvalidStep) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ContractError as exc:
        span = getattr(exc, "span", None)
        location = f" at {span}" if span else ""
        print(f"error{location}: {exc}", file=sys.stderr)
        return EXIT_ISSUES


if __name__ == "__main__":
    sys.exit(main())
