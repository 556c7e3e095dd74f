"""Command line surface: one subcommand per operation family.

Configuration comes from an optional flat key=value file overridden by
flags. Every output embeds the tool version and a hash of the effective
configuration, and identical configuration plus seed reproduces outputs
byte for byte.

Exit codes: 0 success, 2 domain/validation error, 3 resource error,
64 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, fields

from . import __version__
from .errors import DomainError, ToolError
from .modulus_builder import (balance_report, build_plan, plan_from_json,
                              plan_to_json, residue_sets, sweep_balance,
                              toy_plan)
from .moments import (ap_error_sum, bracket_value, default_ell,
                      default_epsilon_prime, fourth_moment, moment2,
                      positivity_functional, theta_moment)
from .pair_hunt import gap_statistics, hunt, scan_interval
from .primes import cached_sieve, sieve
from .sieve_weights import WeightParams, tuple_spec, weight
from .smooth import (build_rho, count_class_one_smooth, psi_exact,
                     psi_ratio_report, restricted_smooth_sum)

EXIT_OK = 0
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we want 64
        raise UsageError(message)


@dataclass
class Config:
    """Tool configuration; every numeric field must be positive."""

    prime_cache: str = ""
    table_limit: int = 1_000_000
    memory_budget: int = 1 << 31
    c: float = 4.0
    c_q: float = 0.1
    sweep_exponent: float = 10.0
    rho_step: float = 2.0 ** -12
    seed: int = 0
    samples: int = 100_000
    fmt: str = "csv"

    def validate(self) -> None:
        for name in ("table_limit", "memory_budget", "c", "c_q",
                     "sweep_exponent", "rho_step", "samples"):
            if getattr(self, name) <= 0:
                raise DomainError(f"config field {name} must be positive")
        if self.seed < 0:
            raise DomainError("config field seed must be nonnegative")
        if self.fmt not in ("csv", "json"):
            raise DomainError("output format must be csv or json")

    def digest(self) -> str:
        lines = sorted(f"{k}={v}" for k, v in asdict(self).items())
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]


def _config_from_file(path: str) -> dict:
    known = {f.name: f.type for f in fields(Config)}
    casts = {"prime_cache": str, "fmt": str, "table_limit": int,
             "memory_budget": int, "seed": int, "samples": int,
             "c": float, "c_q": float, "sweep_exponent": float,
             "rho_step": float}
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DomainError(f"bad config line: {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise DomainError(f"unknown config key {key!r}")
            out[key] = casts[key](value)
    return out


def _load_config(args) -> Config:
    values = {}
    if getattr(args, "config", None):
        values.update(_config_from_file(args.config))
    for name in ("table_limit", "c", "c_q", "seed", "rho_step", "prime_cache"):
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    if getattr(args, "format", None):
        values["fmt"] = args.format
    cfg = Config(**values)
    cfg.validate()
    return cfg


def _table(cfg: Config, need: int | None = None):
    limit = max(cfg.table_limit, need or 2)
    if cfg.prime_cache:
        return cached_sieve(limit, cfg.prime_cache,
                            memory_budget=cfg.memory_budget)
    return sieve(limit, memory_budget=cfg.memory_budget)


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _emit_csv(out, cfg: Config, header, rows) -> None:
    out.write(f"# apgaps={__version__} config={cfg.digest()}\n")
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(_fmt_cell(v) for v in row) + "\n")


def _emit_json(out, cfg: Config, payload: dict) -> None:
    doc = {"meta": {"tool": "apgaps", "version": __version__,
                    "config": cfg.digest()}}
    doc.update(payload)
    out.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _load_plan(path: str):
    with open(path) as fh:
        record = json.load(fh)
    return plan_from_json(record.get("plan", record))


def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise DomainError(f"expected a comma-separated integer list: {text!r}") from exc


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_sieve(args, cfg, out):
    table = _table(cfg, args.limit)
    _emit_csv(out, cfg, ["limit", "primes"], [(args.limit,
              int(len(table.primes_upto(args.limit))))])


def _cmd_rho(args, cfg, out):
    table = build_rho(args.u_max, cfg.rho_step)
    grid = table.grid()
    rows = ((float(u), float(v)) for u, v in zip(grid, table.values))
    _emit_csv(out, cfg, ["u", "rho"], rows)


def _cmd_psi(args, cfg, out):
    if args.u is not None:
        rho_table = build_rho(max(2.0, args.u + 1.0), cfg.rho_step)
        prime_table = _table(cfg, args.y)
        rep = psi_ratio_report(args.y, args.u, rho_table, prime_table)
        _emit_csv(out, cfg, ["x", "y", "exact", "rho_estimate", "ratio"],
                  [(rep.x, rep.y, rep.exact, rep.rho_estimate, rep.ratio)])
        return
    if args.x is None:
        raise UsageError("psi needs --x or --u")
    value = psi_exact(args.x, args.y, table=_table(cfg, args.y))
    _emit_csv(out, cfg, ["x", "y", "exact"], [(args.x, args.y, value)])


def _cmd_smoothsum(args, cfg, out):
    if args.primes:
        allowed = set(_parse_ints(args.primes))
        qualifying = lambda p: p in allowed
    elif args.one_mod:
        q = args.one_mod
        qualifying = lambda p: p % q == 1
    else:
        qualifying = lambda p: True
    if args.one_mod and not args.x_cut and not args.tail:
        value = count_class_one_smooth(args.x, args.one_mod,
                                       table=_table(cfg, args.x))
        _emit_csv(out, cfg, ["x", "q", "count"], [(args.x, args.one_mod, value)])
        return
    result = restricted_smooth_sum(args.x, args.y, qualifying, tail=args.tail,
                                   x_cut=args.x_cut,
                                   table=_table(cfg, args.y))
    _emit_csv(out, cfg, ["x", "y", "value", "truncation_bound"],
              [(args.x, args.y, result.value, result.truncation_bound)])


def _plan_payload(plan) -> dict:
    sets = residue_sets(plan)
    return {"plan": plan_to_json(plan),
            "sets": {"in_class": sets.in_count, "off_class": sets.off_count},
            "phi_ratio": plan.phi_ratio, "log_q": plan.log_q_total}


def _cmd_build_q(args, cfg, out):
    if args.toy:
        plan = toy_plan(args.q, args.a, h_bound=args.H,
                        extra_primes=_parse_ints(args.extras or ""))
    else:
        table = _table(cfg, int(args.H))
        plan = build_plan(args.q, args.a, args.H, table, p0=args.p0, c=cfg.c)
    _emit_json(out, cfg, _plan_payload(plan))


def _cmd_sweep_q(args, cfg, out):
    table = _table(cfg, int(args.x_top))
    reports = sweep_balance(args.q, args.a, args.x_top, table,
                            exponent=cfg.sweep_exponent, c=cfg.c,
                            points=args.points)
    rows = [(r.h_bound, r.in_count, r.off_count, r.h_over_log_h,
             r.phi_scaled_h, r.off_ratio, r.balance_ratio,
             int(r.below_target_regime)) for r in reports]
    _emit_csv(out, cfg, ["H", "in_class", "off_class", "h_over_log_h",
                         "phi_scaled_h", "off_ratio", "balance_ratio",
                         "below_target_regime"], rows)


def _cmd_weights(args, cfg, out):
    plan = _load_plan(args.plan)
    spec = tuple_spec(plan, _parse_ints(args.shifts))
    params = WeightParams.from_plan(plan, args.cutoff, args.power)
    rows = ((n, weight(spec, n, params))
            for n in range(args.n_lo, args.n_hi + 1))
    _emit_csv(out, cfg, ["n", "weight"], rows)


def _cmd_moments(args, cfg, out):
    plan = _load_plan(args.plan)
    shifts = _parse_ints(args.shifts)
    result = moment2(plan, shifts, args.n, args.cutoff, args.ell,
                     samples=getattr(args, "samples", None), seed=cfg.seed)
    rows = [("moment2", result.measured, result.predicted,
             result.measured / result.predicted)]
    if args.h is not None:
        table = _table(cfg, max(cfg.table_limit,
                                math.isqrt(2 * plan.q_int() * args.n + args.h)))
        tm = theta_moment(plan, shifts, args.h, args.n, args.cutoff, args.ell,
                          table)
        rows.append((f"theta[{args.h}]:{tm.case}", tm.measured, tm.predicted,
                     tm.measured / tm.predicted))
    if args.fourth:
        fm = fourth_moment(plan, shifts, args.n, args.cutoff, args.ell)
        rows.append(("fourth", fm.measured, fm.majorant,
                     fm.measured / fm.majorant))
    _emit_csv(out, cfg, ["quantity", "measured", "predicted", "ratio"], rows)


def _report_to_payload(report) -> dict:
    return {
        "n_top": report.n_top, "cutoff": report.cutoff,
        "epsilon": report.epsilon, "epsilon_prime": report.epsilon_prime,
        "k": report.k, "ell": report.ell,
        "shifts": list(report.shifts),
        "in_count": report.in_count, "off_count": report.off_count,
        "moment2": {"measured": report.moment2_measured,
                    "predicted": report.moment2_predicted},
        "theta_measured": {str(h): v for h, v in report.theta_measured.items()},
        "theta_predicted": {str(h): v for h, v in report.theta_predicted.items()},
        "bracket": report.bracket,
        "functional": {"measured": report.functional_measured,
                       "predicted": report.functional_predicted},
    }


def _cmd_functional(args, cfg, out):
    plan = _load_plan(args.plan)
    shifts = _parse_ints(args.shifts)
    need = math.isqrt(2 * plan.q_int() * args.n + int(plan.h_bound)) + 1
    table = _table(cfg, max(cfg.table_limit, need))
    report = positivity_functional(plan, shifts, args.n, args.cutoff,
                                   args.ell, table)
    _emit_json(out, cfg, {"functional_report": _report_to_payload(report),
                          "plan": plan_to_json(plan)})


def _cmd_bv_sum(args, cfg, out):
    plan = _load_plan(args.plan)
    table = _table(cfg, 3 * plan.q_int() * args.n)
    value = ap_error_sum(plan, args.n, args.d_max, table)
    scale = args.n * math.log(args.n)
    _emit_csv(out, cfg, ["n", "d_max", "sum", "sum_over_n_log_n"],
              [(args.n, args.d_max, value, value / scale)])


def _cmd_hunt(args, cfg, out):
    table = _table(cfg, max(cfg.table_limit, math.isqrt(args.limit) + 1))
    records = hunt(args.q, args.a, args.limit, args.max_gap, table)
    rows = ((r.first, r.second, r.gap, r.ratio) for r in records)
    _emit_csv(out, cfg, ["first", "second", "gap", "gap_over_log"], rows)


def _cmd_scan(args, cfg, out):
    plan = _load_plan(args.plan)
    n_hi = args.n_hi if args.n_hi is not None else args.n
    need = math.isqrt(plan.q_int() * n_hi + int(plan.h_bound)) + 1
    table = _table(cfg, max(cfg.table_limit, need))
    rows = []
    for n in range(args.n, n_hi + 1):
        s = scan_interval(plan, n, table)
        first = s.pair[0] if s.pair else None
        second = s.pair[1] if s.pair else None
        rows.append((s.n, s.in_count, s.off_count, int(s.forced), first,
                     second, s.gap))
    _emit_csv(out, cfg, ["n", "in_class", "off_class", "forced", "first",
                         "second", "gap"], rows)


def _cmd_gaps(args, cfg, out):
    table = _table(cfg, max(cfg.table_limit, math.isqrt(args.limit) + 1))
    stats = gap_statistics(args.q, args.a, args.limit, table)
    rows = [("gap", g, c) for g, c in stats.histogram.items()]
    rows += [("cumulative", y, c) for y, c in stats.cumulative]
    _emit_csv(out, cfg, ["kind", "key", "count"], rows)


def _cmd_report(args, cfg, out):
    table = _table(cfg, int(args.H))
    plan = build_plan(args.q, args.a, args.H, table, c=cfg.c)
    sets = residue_sets(plan)
    balance = balance_report(plan, sets)
    k = args.k
    ell = args.ell if args.ell is not None else default_ell(k)
    epsilon = args.epsilon
    log_n = plan.h_bound / epsilon
    eps_prime = default_epsilon_prime(epsilon, cfg.c_q)
    bracket = bracket_value(plan, sets, log_n, k, ell, eps_prime)
    payload = {
        "plan": plan_to_json(plan),
        "balance": {
            "in_class": balance.in_count, "off_class": balance.off_count,
            "h_over_log_h": balance.h_over_log_h,
            "phi_scaled_h": balance.phi_scaled_h,
            "off_ratio": balance.off_ratio,
            "balance_ratio": balance.balance_ratio,
            "below_target_regime": balance.below_target_regime,
        },
        "functional_predicted": {
            "k": k, "ell": ell, "epsilon": epsilon,
            "epsilon_prime": eps_prime, "log_n": log_n, "bracket": bracket,
            "note": "measured sums are out of reach here: the modulus is too "
                    "large to enumerate, so only the closed-form side is "
                    "reported",
        },
    }
    _emit_json(out, cfg, payload)


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False,
                                     argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="flat key=value configuration file")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--output", help="write to this path instead of stdout")
    common.add_argument("--table-limit", dest="table_limit", type=int)
    common.add_argument("--prime-cache", dest="prime_cache")
    common.add_argument("--c", type=float, help="size allowance for log Q")
    common.add_argument("--c-q", dest="c_q", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--step", dest="rho_step", type=float)

    parser = _Parser(prog="apgaps", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command")

    def add(name):
        return sub.add_parser(name, parents=[common])

    p = add("sieve")
    p.add_argument("--limit", type=int, required=True)

    p = add("rho")
    p.add_argument("--u-max", dest="u_max", type=float, required=True)

    p = add("psi")
    p.add_argument("--x", type=int)
    p.add_argument("--y", type=int, required=True)
    p.add_argument("--u", type=float)

    p = add("smoothsum")
    p.add_argument("--x", type=int, required=True)
    p.add_argument("--y", type=int, default=2)
    p.add_argument("--primes", help="comma-separated allowed primes")
    p.add_argument("--one-mod", dest="one_mod", type=int,
                   help="allow only primes = 1 mod this q")
    p.add_argument("--tail", action="store_true")
    p.add_argument("--x-cut", dest="x_cut", type=int)

    p = add("build-q")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--a", type=int, required=True)
    p.add_argument("--H", type=float, required=True)
    p.add_argument("--p0", type=int)
    p.add_argument("--toy", action="store_true")
    p.add_argument("--extras", help="extra primes for a toy plan")

    p = add("sweep-q")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--a", type=int, required=True)
    p.add_argument("--x-top", dest="x_top", type=float, required=True)
    p.add_argument("--points", type=int, default=7)

    p = add("weights")
    p.add_argument("--plan", required=True)
    p.add_argument("--shifts", required=True)
    p.add_argument("--cutoff", type=float, required=True)
    p.add_argument("--power", type=int, required=True)
    p.add_argument("--n-lo", dest="n_lo", type=int, required=True)
    p.add_argument("--n-hi", dest="n_hi", type=int, required=True)

    p = add("moments")
    p.add_argument("--plan", required=True)
    p.add_argument("--shifts", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--cutoff", type=float, required=True)
    p.add_argument("--ell", type=int, required=True)
    p.add_argument("--h", type=int)
    p.add_argument("--fourth", action="store_true")
    p.add_argument("--samples", type=int)

    p = add("functional")
    p.add_argument("--plan", required=True)
    p.add_argument("--shifts", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--cutoff", type=float, required=True)
    p.add_argument("--ell", type=int, required=True)

    p = add("bv-sum")
    p.add_argument("--plan", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d-max", dest="d_max", type=int, required=True)

    p = add("hunt")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--a", type=int, required=True)
    p.add_argument("--limit", type=int, required=True)
    p.add_argument("--max-gap", dest="max_gap", type=int, required=True)

    p = add("scan")
    p.add_argument("--plan", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--n-hi", dest="n_hi", type=int)

    p = add("gaps")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--a", type=int, required=True)
    p.add_argument("--limit", type=int, required=True)

    p = add("report")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--a", type=int, required=True)
    p.add_argument("--H", type=float, required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--ell", type=int)
    p.add_argument("--epsilon", type=float, default=0.5)

    return parser


_HANDLERS = {
    "sieve": _cmd_sieve,
    "rho": _cmd_rho,
    "psi": _cmd_psi,
    "smoothsum": _cmd_smoothsum,
    "build-q": _cmd_build_q,
    "sweep-q": _cmd_sweep_q,
    "weights": _cmd_weights,
    "moments": _cmd_moments,
    "functional": _cmd_functional,
    "bv-sum": _cmd_bv_sum,
    "hunt": _cmd_hunt,
    "scan": _cmd_scan,
    "gaps": _cmd_gaps,
    "report": _cmd_report,
}


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not args.command:
        print("usage error: a subcommand is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _load_config(args)
        handler = _HANDLERS[args.command]
        output = getattr(args, "output", None)
        if output:
            with open(output, "w") as out:
                handler(args, cfg, out)
        else:
            handler(args, cfg, sys.stdout)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ToolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_OK


def main() -> None:
    try:
        code = run()
    except BrokenPipeError:
        code = EXIT_OK
    sys.exit(code)


if __name__ == "__main__":
    main()
