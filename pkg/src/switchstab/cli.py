"""Command-line front-end.

Exit codes: 0 all checks pass, 1 a criterion is violated, 2 input error,
3 divergence during simulation.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import benchmark, criteria, generators, io
from .certificates import NotHurwitzError, build_certificates, uniform_constants, verify_certificate_sampled
from .family import validate_family
from .generators import GenerationError, GeneratorSpec
from .signals import InvalidSignalError, InadmissibleTransitionError
from .simulator import DivergenceError, check_bound, integrate, trajectory_rows

EXIT_OK, EXIT_VIOLATED, EXIT_INPUT, EXIT_DIVERGED = 0, 1, 2, 3

ALL_CRITERIA = ("dwell", "adt", "mdadt", "mixed", "asymptotic", "unified")

# reproduction tolerances
LHS_TOL = 0.002
TAIL_PSI_RANGE = (0.081, 0.086)
ADT_THRESHOLD_REF, ADT_THRESHOLD_TOL = 0.7703, 1e-4
MIXED_THRESHOLD_REF, MIXED_THRESHOLD_TOL = 34.52, 0.05
EXAMPLE_PERIODS = 100
BURST_NMAX = 20


class InputError(ValueError):
    pass


def _floats(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="switchstab", description="Stability checks for switched systems.")
    p.add_argument("command", choices=("analyze", "simulate", "generate", "reproduce"))
    p.add_argument("--config", help="JSON file of flag defaults (keys are flag names)")
    p.add_argument("--family")
    p.add_argument("--signal")
    p.add_argument("--certs")
    p.add_argument("--criteria", default="unified")
    p.add_argument("--window", type=float, default=criteria.DEFAULT_WINDOW)
    p.add_argument("--samples", type=int, default=criteria.DEFAULT_SAMPLES)
    p.add_argument("--step", type=float, default=1e-2)
    p.add_argument("--method", choices=("rk4", "exact"), default="rk4")
    p.add_argument("--x0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (default: current directory; reproduce writes files only when given)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--strict", type=float, help="tolerance override for the reproduction LHS row")
    # class parameters
    p.add_argument("--class", dest="signal_class", choices=generators.CLASSES)
    p.add_argument("--T", type=float, default=None, help="horizon for generation")
    p.add_argument("--N0", type=float)
    p.add_argument("--tau-a", dest="tau_a", type=float)
    p.add_argument("--tau-d", dest="tau_d", type=float)
    p.add_argument("--T0", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--eta", help="comma-separated occupation fractions")
    p.add_argument("--mdadt-N0", dest="mdadt_N0", help="comma-separated per-mode chatter bounds")
    p.add_argument("--mdadt-tau-a", dest="mdadt_tau_a", help="comma-separated per-mode dwell times")
    p.add_argument("--safety", type=float, default=0.95)
    p.add_argument("--nmax", type=int, default=BURST_NMAX)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--k0", type=float)
    p.add_argument("--k0p", type=float)
    p.add_argument("--mean-hold", dest="mean_hold", type=float, default=1.0)
    return p


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"--config: {exc}") from None
        known = {a.dest for a in parser._actions}
        unknown = sorted(k for k in (key.replace("-", "_") for key in data) if k not in known)
        if unknown:
            raise InputError(f"--config: unknown keys {unknown}")
        parser.set_defaults(**{k.replace("-", "_"): v for k, v in data.items()})
        args = parser.parse_args(argv)
    if not 0 < args.window <= 1:
        raise InputError("--window must lie in ]0, 1]")
    if args.step <= 0:
        raise InputError("--step must be positive")
    return args


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_family(args):
    if not args.family:
        raise InputError("--family is required")
    fam = io.read_family(args.family)
    problems = validate_family(fam)
    if problems:
        raise InputError("family: " + "; ".join(problems))
    return fam


def _load_certs(args, fam):
    if args.certs:
        cs = io.read_certs(args.certs)
    elif fam.is_linear:
        cs = build_certificates(fam)
    else:
        raise InputError("--certs is required for nonlinear families")
    problems = cs.validate(fam)
    if problems:
        raise InputError("certificates: " + "; ".join(problems))
    return cs


def _per_mode(text, fam, flag):
    vals = _floats(text)
    if vals is None:
        raise InputError(f"{flag} is required")
    if len(vals) == 1:
        vals = vals * fam.n
    if len(vals) != fam.n:
        raise InputError(f"{flag}: expected {fam.n} values, got {len(vals)}")
    return dict(zip(fam.ids, vals))


def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise InputError(f"--{n.replace('_', '-')} is required")


def _echo(report: criteria.CriterionReport) -> str:
    verdict = "satisfied" if report.satisfied else "violated"
    return f"{report.criterion}: {verdict} margin={io.fmt(report.margin)}"


# analyze


def _run_criterion(name, args, fam, sig, cs):
    part, graph = fam.partition, fam.graph
    if name == "dwell":
        _need(args, "tau_d")
        return [criteria.check_dwell_time(sig, args.tau_d)]
    if name == "adt":
        _need(args, "N0", "tau_a")
        return [criteria.check_adt(sig, args.N0, args.tau_a)]
    if name == "mdadt":
        N0 = _per_mode(args.mdadt_N0, fam, "--mdadt-N0")
        tau = _per_mode(args.mdadt_tau_a, fam, "--mdadt-tau-a")
        return [criteria.check_mdadt(sig, N0, tau)]
    if name == "mixed":
        _need(args, "N0", "tau_a", "T0", "rho")
        return [
            criteria.check_adt(sig, args.N0, args.tau_a),
            criteria.check_unstable_budget(sig, part, args.T0, args.rho),
        ]
    if name == "asymptotic":
        return [criteria.check_asymptotic(sig, cs(), part, graph, args.window, args.samples)]
    if name == "unified":
        return [criteria.check_unified(sig, cs(), part, graph, args.window, args.samples)]
    raise InputError(f"unknown criterion {name!r}")


def cmd_analyze(args) -> int:
    names = [c.strip() for c in args.criteria.split(",") if c.strip()]
    bad = [c for c in names if c not in ALL_CRITERIA]
    if bad or not names:
        raise InputError(f"--criteria: unknown {bad}; choose from {','.join(ALL_CRITERIA)}")
    fam = _load_family(args)
    if not args.signal:
        raise InputError("--signal is required")
    sig = io.read_signal(args.signal)
    sig.check_admissible(fam.graph)
    if max(sig.modes) > fam.n:
        raise InputError(f"signal uses mode {max(sig.modes)} but the family has {fam.n}")
    cache = {}

    def certs():
        if "cs" not in cache:
            cache["cs"] = _load_certs(args, fam)
        return cache["cs"]

    if args.certs or any(n in ("asymptotic", "unified") for n in names):
        certs()
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(lambda n: _run_criterion(n, args, fam, sig, certs), names))
    out = _out_dir(args)
    ok = True
    for reports in results:
        for rep in reports:
            io.write_report(rep, out / f"report_{rep.criterion}.json")
            print(_echo(rep))
            ok &= rep.satisfied
    if "cs" in cache:
        ts = criteria.tail_times(sig.horizon, 1.0, args.samples)
        header, rows = io.trace_rows(sig, cache["cs"], fam.partition, fam.graph, ts)
        io.write_csv(out / "trace.csv", header, rows)
    return EXIT_OK if ok else EXIT_VIOLATED


# simulate


def cmd_simulate(args) -> int:
    fam = _load_family(args)
    if not args.signal:
        raise InputError("--signal is required")
    sig = io.read_signal(args.signal)
    sig.check_admissible(fam.graph)
    cs = _load_certs(args, fam)
    if args.x0 is None:
        x0 = np.zeros(fam.dimension)
        x0[0] = 1.0
    else:
        x0 = np.array(_floats(args.x0))
        if x0.size != fam.dimension:
            raise InputError(f"--x0: expected {fam.dimension} values, got {x0.size}")
    out = _out_dir(args)
    header = ["t", "mode"] + [f"x_{i}" for i in range(1, fam.dimension + 1)] + ["V", "psi", "bound"]
    try:
        traj = integrate(fam, sig, x0, args.step, args.method)
        code = None
    except DivergenceError as exc:
        traj = exc.trajectory
        code = EXIT_DIVERGED
        print(f"divergence at t={io.fmt(exc.t)}", file=sys.stderr)
    rep = check_bound(traj, sig, cs)
    io.write_csv(out / "trajectory.csv", header, trajectory_rows(traj, rep))
    summary = {
        "passed": rep.passed,
        "max_excess": rep.max_excess,
        "worst_ratio": rep.worst_ratio,
        "witness_t": rep.witness_t,
        "tolerance": rep.tolerance,
        "diverged": code == EXIT_DIVERGED,
    }
    (out / "bound.json").write_text(json.dumps(io._clean(summary), indent=1, sort_keys=True) + "\n")
    print(f"bound: {'pass' if rep.passed else 'fail'} worst_ratio={io.fmt(rep.worst_ratio)}")
    if code is not None:
        return code
    return EXIT_OK if rep.passed else EXIT_VIOLATED


# generate


def _spec_from_args(args) -> GeneratorSpec:
    if args.config and args.signal_class is None:
        raise InputError("--class is required")
    if args.signal_class is None:
        raise InputError("--class is required")
    c = args.signal_class
    params = {}
    if c in ("adt", "mixed"):
        _need(args, "N0", "tau_a")
        params.update(N0=args.N0, tau_a=args.tau_a, safety=args.safety)
    if c == "mixed":
        _need(args, "T0", "rho")
        params.update(T0=args.T0, rho=args.rho)
    if c == "dwell":
        _need(args, "tau_d")
        params["tau_d"] = args.tau_d
    if c == "mdadt":
        params.update(N0=_floats(args.mdadt_N0), tau_a=_floats(args.mdadt_tau_a), safety=args.safety)
        if params["N0"] is None or params["tau_a"] is None:
            raise InputError("--mdadt-N0 and --mdadt-tau-a are required")
    if c == "asymptotic":
        _need(args, "nu", "eta")
        params.update(nu=args.nu, eta=_floats(args.eta))
    if c == "burst":
        params.update(epsilon=args.epsilon, n_max=args.nmax)
    if c == "sqrt_growth":
        _need(args, "k0", "k0p")
        params.update(k0=args.k0, k0p=args.k0p)
    if c == "random":
        params["mean_hold"] = args.mean_hold
    if c == "burst":
        horizon = 2.0 ** (args.nmax + 1)
    elif c == "example":
        horizon = args.T if args.T is not None else EXAMPLE_PERIODS * generators.example_period()
    else:
        horizon = args.T if args.T is not None else 100.0
    return GeneratorSpec(c, params, horizon, args.seed)


def _verify(spec: GeneratorSpec, sig, fam) -> list[criteria.CriterionReport]:
    p, c = spec.params, spec.signal_class
    if c == "dwell":
        return [criteria.check_dwell_time(sig, p["tau_d"])]
    if c == "adt":
        return [criteria.check_adt(sig, p["N0"], p["tau_a"])]
    if c == "mdadt":
        return [criteria.check_mdadt(sig, generators._per_mode(p["N0"], fam), generators._per_mode(p["tau_a"], fam))]
    if c == "mixed":
        return [
            criteria.check_adt(sig, p["N0"], p["tau_a"]),
            criteria.check_unstable_budget(sig, fam.partition, p["T0"], p["rho"]),
        ]
    if c == "asymptotic":
        eta = generators._per_mode(p["eta"], fam)
        est = criteria.estimate_limits(sig, fam.graph, fam.partition)
        # the realised statistics should sit near the requested ones
        worst = max(abs(est.eta[j][k] - eta[j]) for j in fam.ids for k in (0, 1))
        worst = max(worst, max(abs(v - p["nu"]) / p["nu"] for v in est.nu))
        tol = 0.1
        return [criteria.CriterionReport("asymptotic_targets", worst <= tol, tol - worst, None, dict(p))]
    if c == "burst":
        T = sig.horizon
        ts = criteria.tail_times(T)
        nu_min = float((sig.segment_index(ts) / ts).min())
        ratio = sig.tail_ratio(T).ratio
        ok = nu_min >= 1 and 0.49 <= ratio <= 0.5
        return [
            criteria.CriterionReport(
                "burst", ok, min(nu_min - 1, 0.5 - ratio), None, dict(p), details={"nu_liminf": nu_min, "tail_ratio": ratio}
            )
        ]
    return [criteria.CriterionReport(c, True, math.inf, None, dict(p))]


def cmd_generate(args) -> int:
    spec = _spec_from_args(args)
    if args.family:
        fam = _load_family(args)
    else:
        fam = benchmark.family() if spec.signal_class != "burst" else None
    sig = generators.generate(spec, fam)
    out = _out_dir(args)
    path = out / "signal.json"
    io.write_signal(sig, path)
    (out / "generator.json").write_text(json.dumps(spec.to_dict(), indent=1) + "\n")
    back = io.read_signal(path)
    same = back == sig
    print(f"round-trip: {'identical' if same else 'MISMATCH'} ({sig.n_switches} switches, horizon {io.fmt(sig.horizon)})")
    ok = same
    for rep in _verify(spec, back, fam):
        print(_echo(rep))
        ok &= rep.satisfied
    return EXIT_OK if ok else EXIT_VIOLATED


# reproduce


def reproduction_rows(strict: float | None = None) -> list[tuple[str, str, str, str]]:
    """Rows ``(name, value, reference, status)`` of the benchmark reproduction."""
    rows = []

    def row(name, value, ref, status):
        rows.append((name, value if isinstance(value, str) else io.fmt(value), ref, status))

    def tol_status(ok, label):
        return f"PASS({label})" if ok else f"FAIL({label})"

    published = benchmark.certificates()
    fam = benchmark.family()
    for j, lam in sorted(benchmark.LAMBDAS.items()):
        row(f"lambda_{j}", lam, "given", "ECHO")
    for (i, j), mu in sorted(benchmark.MU.items()):
        row(f"mu_{i}_{j}", mu, "given", "ECHO")
    check = verify_certificate_sampled(published, fam, n_samples=2000, n_flow_samples=200)
    row("certificate_check", check.worst_mu_slack if not check.mu_ok else check.worst_decay_slack,
        "slack >= 0", "PASS" if check.passed else "FAIL")

    uc = uniform_constants(benchmark.uniform_certificates(), fam.partition)
    for name, val, ref in (("lambda_s", uc.lambda_s, 0.9389), ("lambda_u", uc.lambda_u, 0.7301), ("mu", uc.mu, 2.0611)):
        row(f"uniform_{name}", val, f"{ref}", tol_status(val == ref, "exact"))

    thr = criteria.adt_threshold(uc.mu, uc.lambda_s)
    row("adt_threshold", thr, f"{ADT_THRESHOLD_REF}", tol_status(abs(thr - ADT_THRESHOLD_REF) <= ADT_THRESHOLD_TOL, f"±{ADT_THRESHOLD_TOL:g}"))
    mthr = criteria.mixed_adt_threshold(uc.mu, uc.lambda_s, uc.lambda_u, benchmark.RHO)
    row("mixed_threshold", mthr, f"{MIXED_THRESHOLD_REF}", tol_status(abs(mthr - MIXED_THRESHOLD_REF) <= MIXED_THRESHOLD_TOL, f"±{MIXED_THRESHOLD_TOL:g}"))
    inconsistent = benchmark.TAU_A < mthr
    row("FLAG_tau_a_below_mixed_threshold", benchmark.TAU_A, f"< {mthr:.2f}", "FLAG" if inconsistent else "OK")

    lhs = stated_lhs()
    tol = LHS_TOL if strict is None else strict
    row("asymptotic_LHS", lhs, f"reference {benchmark.STATED_LHS}", tol_status(abs(lhs - benchmark.STATED_LHS) <= tol, f"±{tol:g}"))

    fam_e, cs_e, sig = generators.gen_example(EXAMPLE_PERIODS * generators.example_period())
    unified = criteria.check_unified(sig, cs_e, fam_e.partition, fam_e.graph)
    tail = -unified.margin
    lo, hi = TAIL_PSI_RANGE
    row("tail_Psi", tail, f"[{lo}, {hi}]", tol_status(lo <= tail <= hi, "range"))
    row("unified_verdict", "violated" if not unified.satisfied else "satisfied", "violated",
        "PASS" if not unified.satisfied else "FAIL")

    burst = generators.gen_burst(1e-3, BURST_NMAX)
    T = burst.horizon
    ts = criteria.tail_times(T)
    nu_min = float((burst.segment_index(ts) / ts).min())
    ratio = burst.tail_ratio(T).ratio
    row("burst_switches", float(burst.n_switches), f"{int(T)}", tol_status(burst.n_switches == int(T), "exact"))
    row("burst_nu_liminf", nu_min, ">= 1", tol_status(nu_min >= 1, "bound"))
    row("burst_tail_ratio", ratio, "[0.49, 0.50]", tol_status(0.49 <= ratio <= 0.5, "range"))
    return rows


def stated_lhs() -> float:
    """Separated-limits left-hand side from the stated constants and statistics."""
    uc = uniform_constants(benchmark.uniform_certificates(), benchmark.family().partition)
    nu = 1 / benchmark.TAU_A
    eta = benchmark.ETA
    # every transition fraction carries the same uniform constant and they sum to 1
    return nu * math.log(uc.mu) - uc.lambda_s * eta[1] + uc.lambda_u * (eta[2] + eta[3])


def cmd_reproduce(args) -> int:
    rows = reproduction_rows(args.strict)
    width = max(len(r[0]) for r in rows)
    print(f"{'quantity':<{width}}  {'value':>18}  {'reference':<20}  status")
    for name, val, ref, status in rows:
        print(f"{name:<{width}}  {val:>18}  {ref:<20}  {status}")
    if args.out:
        out = _out_dir(args)
        fam, cs, sig = generators.gen_example(EXAMPLE_PERIODS * generators.example_period())
        io.write_family(fam, out / "family.json")
        io.write_certs(cs, out / "certs.json")
        io.write_signal(sig, out / "signal.json")
        io.write_csv(out / "reproduce.csv", ["quantity", "value", "reference", "status"], rows)
    failed = [r for r in rows if r[3].startswith("FAIL")]
    return EXIT_OK if not failed else EXIT_VIOLATED


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "generate": cmd_generate, "reproduce": cmd_reproduce}

INPUT_ERRORS = (
    InputError,
    io.FormatError,
    InvalidSignalError,
    InadmissibleTransitionError,
    GenerationError,
    NotHurwitzError,
    KeyError,
    ValueError,
)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        # argparse usage errors
        return EXIT_INPUT if exc.code else EXIT_OK
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
