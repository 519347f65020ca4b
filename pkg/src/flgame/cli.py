"""Command-line front end: ``flg <command> ...``.

Exit codes: 0 success, 1 a checked property failed, 2 bad usage or input.
"""

from __future__ import annotations

import argparse
import io
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import bounds
from .constructions import GENERATORS, ConstructionError
from .core import InstanceError, dump_instance, format_profile, load_instance, parse_profile, social_cost, to_json
from .dynamics import AuditError, charging_audit, run_ibr
from .equilibria import (MODES, NotStrongError, coalition_dynamics, enumerate_equilibria,
                         metric_spoa_audit, spoa_peeling_certificate)
from .optimum import CapExceeded, ratios, social_optimum


class UsageError(Exception):
    pass


class ClaimFailed(Exception):
    pass


@dataclass
class CommandResult:
    exit_code: int
    stdout: str
    artifacts: list[str] = field(default_factory=list)


def fmt(x) -> str:
    """Six significant digits, printed as a Python float (so 1 prints as 1.0)."""
    if x is None:
        return "undefined"
    x = float(x)
    if not math.isfinite(x):
        return repr(x)
    return repr(float("%.6g" % x))


def _alpha(text: str) -> float:
    if text.lower() in ("e", "euler"):
        return math.e
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha {text!r}") from None
    if not value >= 1:
        raise argparse.ArgumentTypeError("alpha must be >= 1")
    return value


def _range(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    try:
        if len(parts) == 2:
            return float(parts[0]), float(parts[1]), 10_001
        if len(parts) == 3:
            return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"bad range {text!r}; expected a:b or a:b:steps")


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(t)) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def _read_instance(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    return load_instance(text)


def _write(path: str, text: str, result_files: list[str]):
    Path(path).write_text(text, encoding="utf-8")
    result_files.append(path)


def _start_profile(inst, text: Optional[str]):
    if text is None or text == "opt":
        return social_optimum(inst).assignment
    return inst.check_profile(parse_profile(text))


def _profile_or_first_strong(inst, text: Optional[str], alpha: float, mode: str):
    if text is not None:
        return inst.check_profile(parse_profile(text))
    found = enumerate_equilibria(inst, alpha, kind="strong", mode=mode)
    if not found:
        raise UsageError("instance has no strong equilibrium at this alpha; pass --profile")
    return found[0]


# --- commands -------------------------------------------------------------

def cmd_opt(args, out, files):
    inst = _read_instance(args.instance)
    sol = social_optimum(inst, node_cap=args.node_cap, jobs=args.jobs)
    out.write(f"open={format_profile(sol.open_set)} cost={fmt(sol.cost)}\n")
    out.write(f"assignment={format_profile(sol.assignment)}\n")


def cmd_cost(args, out, files):
    inst = _read_instance(args.instance)
    prof = inst.check_profile(parse_profile(args.profile))
    br = social_cost(inst, prof)
    out.write("agent,node,connection,share,cost\n")
    for i, v in enumerate(prof):
        out.write(f"{i},{v},{fmt(br.per_agent_connection[i])},{fmt(br.per_agent_share[i])},"
                  f"{fmt(br.per_agent_cost[i])}\n")
    out.write(f"social_cost={fmt(br.social_cost)}\n")


def _order(text: str):
    if text in ("round-robin", "facility-consecutive"):
        return text
    return [int(t) for t in text.split(",")]


def cmd_ibr(args, out, files):
    inst = _read_instance(args.instance)
    start = _start_profile(inst, args.start)
    trace = run_ibr(inst, start, _order(args.order), args.max_steps)
    if args.csv:
        _write(args.csv, trace.to_csv(), files)
    c0 = social_cost(inst, start).social_cost
    c1 = social_cost(inst, trace.final).social_cost
    out.write(f"start={format_profile(start)} final={format_profile(trace.final)}\n")
    ratio = c1 / c0 if c0 > 0 else None
    out.write(f"steps={len(trace.steps)} converged={str(trace.converged).lower()} "
              f"start_cost={fmt(c0)} final_cost={fmt(c1)} ratio={fmt(ratio)}\n")
    if not trace.converged:
        raise ClaimFailed("best response dynamics hit the step cap")


def cmd_nash(args, out, files):
    inst = _read_instance(args.instance)
    eqs = enumerate_equilibria(inst, args.alpha, kind="nash", jobs=args.jobs)
    out.write(f"nash_equilibria={len(eqs)}\n")
    for s in eqs[: args.limit]:
        out.write(f"{format_profile(s)} cost={fmt(social_cost(inst, s).social_cost)}\n")


def cmd_strong(args, out, files):
    inst = _read_instance(args.instance)
    eqs = enumerate_equilibria(inst, args.alpha, kind="strong", mode=args.mode, jobs=args.jobs)
    out.write(f"strong_equilibria={len(eqs)}\n")
    for s in eqs[: args.limit]:
        out.write(f"{format_profile(s)} cost={fmt(social_cost(inst, s).social_cost)}\n")


def cmd_sdyn(args, out, files):
    inst = _read_instance(args.instance)
    start = inst.check_profile(parse_profile(args.start))
    res = coalition_dynamics(inst, start, args.alpha, args.mode, args.max_steps, seed=args.seed)
    out.write(f"status={res.status} steps={res.steps} profile={format_profile(res.profile)}\n")
    if res.cycle is not None:
        cyc = res.cycle
        out.write(f"cycle_length={len(cyc.moves)} dam_max={fmt(cyc.dam_max)} "
                  f"telescoping={fmt(cyc.telescoping_product)}\n")
        for p in cyc.profiles:
            out.write(f"  {format_profile(p)}\n")
    if args.json:
        _write(args.json, to_json(res) + "\n", files)
    if res.status == "cap":
        raise ClaimFailed("coalition dynamics hit the step cap without a fixpoint or cycle")


def cmd_ratios(args, out, files):
    inst = _read_instance(args.instance)
    strong = args.kind == "strong"
    eqs = enumerate_equilibria(inst, args.alpha, kind=args.kind, mode=args.mode, jobs=args.jobs)
    rep = ratios(inst, eqs, args.alpha, strong=strong, opt=social_optimum(inst, jobs=args.jobs))
    if args.csv:
        _write(args.csv, rep.CSV_HEADER + "\n" + rep.csv_row() + "\n", files)
    if rep.status != "ok":
        out.write(f"status={rep.status} count={rep.equilibrium_count} opt={fmt(rep.opt_cost)}\n")
        return
    if strong:
        out.write(f"pos={fmt(rep.pos)} spoa={fmt(rep.spoa)}\n")
    else:
        out.write(f"pos={fmt(rep.pos)} poa={fmt(rep.poa)}\n")


_GEN_PARAMS = {
    "two-node": lambda a: dict(n=a.n if a.n is not None else 4, beta=a.beta),
    "nonmetric-pos": lambda a: dict(n=a.n if a.n is not None else 3, eps=a.eps, delta=a.delta),
    "metric-pos": lambda a: dict(n=a.n if a.n is not None else 16, p_remain=a.p, eps=a.eps),
    "cycle6": lambda a: dict(),
    "spoa-lb": lambda a: dict(n=a.n if a.n is not None else 3, alpha=a.alpha, eps=a.eps),
}


def cmd_gen(args, out, files):
    params = _GEN_PARAMS[args.name](args)
    inst, rep = GENERATORS[args.name](**params)
    text = dump_instance(inst, rep.header_lines())
    if args.output:
        _write(args.output, text, files)
    else:
        out.write(text)
        return
    out.write(f"generator={args.name} nodes={inst.node_count} agents={inst.n} oracle=pass\n")


def _curve_output(curve: bounds.BoundCurve, args, out, files):
    if args.csv:
        _write(args.csv, curve.to_csv(), files)
    else:
        out.write(curve.to_csv().rsplit("#", 1)[0])
    out.write(f"# argmax={fmt(curve.argmax)} max={fmt(curve.max)}\n")


def cmd_bound(args, out, files):
    name = args.function
    if name == "pos-lb-table":
        ns = args.n or [10 ** 2, 10 ** 4, 10 ** 6, 10 ** 8]
        rows = []
        for n in ns:
            lam = args.lam if args.lam is not None else n
            if args.maximize_r:
                r, val = bounds.pos_lb_best(n, lam, args.eps or 0.0)
            else:
                k = math.isqrt(n)
                r = k - math.ceil(args.p * k) if k * k == n else 0
                val = bounds.pos_lb_table(n, args.p, False, lam, args.eps or 0.0)
            rows.append((n, r, val))
        j = max(range(len(rows)), key=lambda t: rows[t][2])
        csv = "x,f,r\n" + "".join(f"{n},{v!r},{r}\n" for n, r, v in rows)
        if args.csv:
            _write(args.csv, csv + f"# argmax={rows[j][0]} max={rows[j][2]!r}\n", files)
        else:
            out.write(csv)
        out.write(f"# argmax={rows[j][0]} max={fmt(rows[j][2])}\n")
        return
    kw = {}
    if args.range is not None:
        a, b, steps = args.range
        kw = dict(a=a, b=b, points=max(steps, 10_000))
    if name == "pos-ub":
        curve = bounds.pos_ub_curve(tol=args.tol, **kw)
    elif name == "pos-lb-asym":
        curve = bounds.pos_lb_asymptotic_curve(tol=args.tol, **kw)
    else:
        curve = bounds.metric_spoa_ub_curve(alpha=args.alpha, gamma=args.gamma, tol=args.tol, **kw)
    _curve_output(curve, args, out, files)


def cmd_audit(args, out, files):
    inst = _read_instance(args.instance)
    if args.kind == "charging":
        start = _start_profile(inst, args.start)
        trace = run_ibr(inst, start, _order(args.order))
        state = charging_audit(inst, trace, start)
        out.write(f"charging: {'pass' if state.passed else 'FAIL'} steps={len(trace.steps)} "
                  f"total_charge={fmt(state.total_charge)} cost_increase={fmt(state.cost_increase)}\n")
        for v in state.violations:
            out.write(f"  violation: {v}\n")
        if args.json:
            _write(args.json, to_json(state) + "\n", files)
        passed = state.passed
    elif args.kind == "spoa-cert":
        prof = _profile_or_first_strong(inst, args.profile, args.alpha, "single-target")
        cert = spoa_peeling_certificate(inst, prof, alpha=args.alpha)
        out.write(f"spoa-cert: {'pass' if cert.passed else 'FAIL'} profile={format_profile(prof)} "
                  f"alpha={fmt(args.alpha)}\n")
        for f in cert.facilities:
            out.write(f"  facility={f.facility} misconnected={len(f.misconnected)} "
                      f"lhs={fmt(f.misconnected_cost)} bound={fmt(f.bound)} slack={fmt(f.slack)}\n")
        if args.json:
            _write(args.json, to_json(cert) + "\n", files)
        passed = cert.passed
    else:
        prof = _profile_or_first_strong(inst, args.profile, args.alpha, "joint")
        audit = metric_spoa_audit(inst, prof, alpha=args.alpha)
        out.write(f"metric-spoa: {'pass' if audit.passed else 'FAIL'} profile={format_profile(prof)} "
                  f"alpha={fmt(args.alpha)} reference_max={fmt(audit.reference_max)}\n")
        for f in audit.facilities:
            worst = min((c.slack for c in f.checks if c.asserted), default=0.0)
            out.write(f"  facility={f.facility} case={f.case} ratio={fmt(f.ratio)} bound={fmt(f.bound)} "
                      f"min_slack={fmt(worst)}\n")
        if args.json:
            _write(args.json, to_json(audit) + "\n", files)
        passed = audit.passed
    if not passed:
        raise ClaimFailed(f"{args.kind} audit failed")


# --- parser ---------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flg", description="Facility location games with fair cost sharing.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_instance(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("instance", help="instance file")
        return sp

    sp = with_instance("opt", "exact social optimum")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--node-cap", type=int, default=20)
    sp.set_defaults(func=cmd_opt)

    sp = with_instance("cost", "cost breakdown of a profile")
    sp.add_argument("profile", help="comma-separated node indices")
    sp.set_defaults(func=cmd_cost)

    sp = with_instance("ibr", "iterated best response")
    sp.add_argument("--start", default="opt", help="profile or 'opt' (default)")
    sp.add_argument("--order", default="round-robin",
                    help="round-robin, facility-consecutive or an explicit agent list")
    sp.add_argument("--max-steps", type=int, default=None)
    sp.add_argument("--csv", help="write the step trace here")
    sp.set_defaults(func=cmd_ibr)

    for name, func, help_text in (("nash", cmd_nash, "enumerate pure Nash equilibria"),
                                  ("strong", cmd_strong, "enumerate strong equilibria")):
        sp = with_instance(name, help_text)
        sp.add_argument("--alpha", type=_alpha, default=1.0)
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--limit", type=int, default=20, help="profiles to list")
        if name == "strong":
            sp.add_argument("--mode", choices=MODES, default="joint")
        sp.set_defaults(func=func)

    sp = with_instance("sdyn", "coalition improvement dynamics")
    sp.add_argument("--start", required=True, help="comma-separated node indices")
    sp.add_argument("--alpha", type=_alpha, default=1.0)
    sp.add_argument("--mode", choices=MODES, default="joint")
    sp.add_argument("--max-steps", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=None, help="randomize move choice")
    sp.add_argument("--json")
    sp.set_defaults(func=cmd_sdyn)

    sp = with_instance("ratios", "PoS / PoA / SPoA against the exact optimum")
    sp.add_argument("--kind", choices=("nash", "strong"), default="nash")
    sp.add_argument("--alpha", type=_alpha, default=1.0)
    sp.add_argument("--mode", choices=MODES, default="joint")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_ratios)

    sp = sub.add_parser("gen", help="generate a certified worst-case instance")
    sp.add_argument("name", choices=sorted(GENERATORS))
    sp.add_argument("--n", type=int)
    sp.add_argument("--alpha", type=_alpha, default=math.e)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--p", type=float, default=0.27, help="remaining-batch fraction")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("bound", help="evaluate and maximize a bound function")
    sp.add_argument("function", choices=("pos-ub", "pos-lb-asym", "pos-lb-table", "metric-spoa-ub"))
    sp.add_argument("--range", type=_range)
    sp.add_argument("--n", type=_int_list, help="comma-separated sizes for pos-lb-table")
    sp.add_argument("--p", type=float, default=0.27, help="remaining-batch fraction")
    sp.add_argument("--maximize-r", action="store_true")
    sp.add_argument("--lam", type=int)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--alpha", type=_alpha, default=math.e)
    sp.add_argument("--gamma", type=float, default=bounds.EULER_GAMMA)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("audit", help="proof audits")
    sp.add_argument("kind", choices=("charging", "spoa-cert", "metric-spoa"))
    sp.add_argument("instance")
    sp.add_argument("--start", default="opt", help="charging: IBR start profile or 'opt'")
    sp.add_argument("--order", default="round-robin")
    sp.add_argument("--profile", help="equilibrium to certify (default: first strong one)")
    sp.add_argument("--alpha", type=_alpha, default=1.0)
    sp.add_argument("--json")
    sp.set_defaults(func=cmd_audit)
    return p


def run(argv: Sequence[str]) -> CommandResult:
    out = io.StringIO()
    files: list[str] = []
    try:
        args = build_parser().parse_args(list(argv))
        args.func(args, out, files)
        code = 0
    except ClaimFailed as exc:
        out.write(f"error: {exc}\n")
        code = 1
    except ConstructionError as exc:
        out.write(f"error: {exc}\n")
        code = 1
    except (UsageError, InstanceError, CapExceeded, NotStrongError, AuditError, ValueError) as exc:
        out.write(f"error: {exc}\n")
        code = 2
    return CommandResult(code, out.getvalue(), files)


def main(argv: Optional[Sequence[str]] = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    if any(a in ("-h", "--help") for a in argv):
        build_parser().parse_args(list(argv))
        return 0
    res = run(argv)
    (sys.stderr if res.exit_code == 2 else sys.stdout).write(res.stdout)
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
