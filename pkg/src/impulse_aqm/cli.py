"""Command-line front end.

    python -m impulse_aqm threshold --criterion average --gamma 0 --alpha 0.5 --b 0.5 --lambda 2
    python -m impulse_aqm simulate  --config run.cfg --out trace.csv
    python -m impulse_aqm verify    --criterion discounted --a 0.2 --b 0.5 --alpha 1.3 --lambda 2 --rho 1
    python -m impulse_aqm figure    --a 0.2 --b 0.5 --alpha 1.3 --lambda 2 --rho 1 --lo 0.05 --hi 3 --n 500

Options may also come from a ``key = value`` file (``#`` starts a comment)
passed with ``--config``; command-line flags win.  Exit codes: 0 success,
2 configuration error, 3 no threshold root, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict

import numpy as np

from . import average, discounted, netsim, verify
from .errors import DomainError, NoRootError, AmbiguousRootError, ParameterError, ValidationError
from .model import CriterionParams, FlowParams, NetworkSpec

EXIT_OK, EXIT_CONFIG, EXIT_NOROOT, EXIT_VERIFY = 0, 2, 3, 4


class ConfigError(Exception):
    pass


def read_config(path: str) -> dict[str, str]:
    """Parse a flat ``key = value`` file."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


class Options:
    """Merged file + flag options with typed, key-named accessors."""

    def __init__(self, values: dict):
        self.values = {k: v for k, v in values.items() if v is not None}

    def has(self, key):
        return key in self.values

    def text(self, key, default=None):
        v = self.values.get(key, default)
        if v is None:
            raise ConfigError(f"missing required key '{key}'")
        return str(v)

    def num(self, key, default=None, check=None, desc=""):
        raw = self.values.get(key, default)
        if raw is None:
            raise ConfigError(f"missing required key '{key}'")
        try:
            v = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"key '{key}' must be a number, got {raw!r}") from None
        if check is not None and not check(v):
            raise ConfigError(f"key '{key}' violates constraint {desc}: {v}")
        return v

    def nums(self, key, default=None):
        raw = self.values.get(key, default)
        if raw is None:
            raise ConfigError(f"missing required key '{key}'")
        if isinstance(raw, (int, float)):
            return [float(raw)]
        try:
            return [float(s) for s in str(raw).split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"key '{key}' must be a comma-separated list of numbers") from None

    def matrix(self, key):
        raw = self.values.get(key)
        if raw is None:
            return None
        try:
            return [[int(s) for s in row.split(",")] for row in str(raw).split(";") if row.strip()]
        except ValueError:
            raise ConfigError(f"key '{key}' must look like '1,0,1; 1,1,0'") from None


# -- shared builders --------------------------------------------------------

def _criterion(o: Options) -> str:
    crit = o.text("criterion", "average")
    if crit not in ("average", "discounted"):
        raise ConfigError(f"key 'criterion' must be 'average' or 'discounted', got {crit!r}")
    return crit


def _params(o: Options, crit: str, need_a=True):
    a = o.num("a", None if need_a else 1.0, lambda v: v > 0, "a > 0")
    b = o.num("b", None, lambda v: 0 < v < 1, "0 < b < 1")
    gamma = o.num("gamma", 0.0, lambda v: 0 <= v <= 1, "0 <= gamma <= 1")
    alpha = o.num("alpha", None, lambda v: v > 0 and v != 1, "alpha > 0, alpha != 1")
    lam = o.num("lambda", None, lambda v: v >= 0, "lambda >= 0")
    rho = None
    if crit == "discounted":
        rho = o.num("rho", None, lambda v: v > 0, "rho > 0")
        if gamma != 0:
            raise ConfigError("key 'gamma' must be 0 under the discounted criterion")
        if not 1 < alpha < 2:
            raise ConfigError("key 'alpha' must lie in (1, 2) under the discounted criterion")
    return FlowParams(a, b, gamma), CriterionParams(alpha, lam, rho)


def _solve(fp, cp, crit):
    if crit == "average":
        return average.threshold_avg(fp, cp)
    return discounted.solve_threshold_disc(discounted.DiscountedParams.from_params(fp, cp))


def solution_to_dict(sol) -> dict:
    if isinstance(sol, average.AverageSolution):
        return {"criterion": "average", "x_bar": sol.x_bar, "g": sol.g,
                "flow": asdict(sol.flow), "crit": asdict(sol.crit)}
    out = {"criterion": "discounted", "x_bar": sol.x_bar, "w1": sol.w1, "params": asdict(sol.params)}
    if sol.pin is not None:
        out["pin"] = list(sol.pin)
    return out


def solution_from_dict(d: dict):
    if d["criterion"] == "average":
        return average.AverageSolution(d["x_bar"], d["g"], FlowParams(**d["flow"]), CriterionParams(**d["crit"]))
    pin = tuple(d["pin"]) if d.get("pin") else None
    return discounted.DiscountedSolution(d["x_bar"], d["w1"], discounted.DiscountedParams(**d["params"]), pin=pin)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(rows, header, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])


def _emit(text: str, path: str | None, stdout):
    if path and path != "-":
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)


# -- commands ---------------------------------------------------------------

def cmd_threshold(o: Options, stdout) -> int:
    crit = _criterion(o)
    fp, cp = _params(o, crit, need_a=crit == "discounted")
    sol = _solve(fp, cp, crit)
    stdout.write(json.dumps(solution_to_dict(sol)) + "\n")
    return EXIT_OK


def _network(o: Options, alpha: float) -> NetworkSpec:
    routing = o.matrix("routing")
    if routing is None:
        routing = [[1]]
        weights = [o.num("lambda", None, lambda v: v >= 0, "lambda >= 0")]
    else:
        weights = o.nums("link_weights")
    n = len(routing[0]) if routing else 0
    a, b, g = (_per_flow(o.nums(k, d), n, k) for k, d in (("a", None), ("b", None), ("gamma", 0.0)))
    flows = [FlowParams(a[i], b[i], g[i]) for i in range(n)]
    return NetworkSpec(routing, weights, flows, alpha)


def _per_flow(vals, n, key):
    if len(vals) == 1:
        return vals * n
    if len(vals) != n:
        raise ConfigError(f"key '{key}' needs 1 or {n} values, got {len(vals)}")
    return vals


def _policies(o: Options, net: NetworkSpec, crit: str, rho):
    kind = o.text("policy", "threshold")
    prices = netsim.decouple_prices(net)
    pols = []
    for k, fp in enumerate(net.flows):
        def opt_xbar():
            if o.has("x_bar"):
                return o.num("x_bar", check=lambda v: v > 0, desc="x_bar > 0")
            return _solve(fp, CriterionParams(net.alpha, float(prices[k]), rho), crit).x_bar

        if kind == "threshold":
            pols.append(netsim.Threshold(opt_xbar()))
        elif kind == "red":
            xb = None if all(o.has(f"red_{s}") for s in ("min_th", "max_th")) else opt_xbar()
            pols.append(netsim.Red(
                o.num("red_min_th", None if xb is None else 0.8 * xb),
                o.num("red_max_th", None if xb is None else 1.2 * xb),
                o.num("red_p_max", 0.5),
                o.num("red_dt", 0.01),
            ))
        elif kind == "fixed_period":
            pols.append(netsim.FixedPeriod(o.num("tau", None, lambda v: v > 0, "tau > 0")))
        elif kind == "none":
            pols.append(netsim.NoImpulse())
        else:
            raise ConfigError(f"key 'policy' must be threshold|red|fixed_period|none, got {kind!r}")
    return tuple(pols)


TRACE_HEADER = ["time", "flow", "rate_before", "rate_after", "impulse_count", "cumulative_reward"]


def cmd_simulate(o: Options, stdout) -> int:
    crit = _criterion(o)
    alpha = o.num("alpha", None, lambda v: v > 0 and v != 1, "alpha > 0, alpha != 1")
    rho = o.num("rho", None, lambda v: v > 0, "rho > 0") if crit == "discounted" or o.has("rho") else None
    net = _network(o, alpha)
    pols = _policies(o, net, crit, rho)
    x0 = _per_flow(o.nums("x0", 1.0), net.n, "x0")
    seed = int(o.num("seed", 0, lambda v: v == int(v) and v >= 0, "nonnegative integer"))
    cfg = netsim.SimConfig(net, pols, tuple(x0), o.num("horizon", None, lambda v: v > 0, "horizon > 0"),
                           crit, rho, seed, o.num("warmup", 0.0))
    rep = netsim.simulate(cfg)
    if o.has("out"):
        buf = io.StringIO()
        write_csv(
            [(e.time, e.flow, e.rate_before, e.rate_after, e.count, e.cumulative_reward) for e in rep.events],
            TRACE_HEADER, buf,
        )
        _emit(buf.getvalue(), o.text("out"), stdout)
    summary = json.dumps(rep.to_dict(), indent=1) + "\n"
    _emit(summary, o.values.get("summary"), stdout)
    return EXIT_OK


def run_verification(fp, cp, crit, perturbation=None) -> dict:
    """Run every check for one parameter set; returns a JSON-ready bundle."""
    sol = _solve(fp, cp, crit)
    if perturbation:
        field, factor = perturbation
        sol = verify.perturb(sol, field, factor)
    prof = verify.profile_for(sol)
    bundle = {"solution": solution_to_dict(sol), "checks": {}}
    checks = bundle["checks"]
    scan = verify.bellman_scan(prof, tol=1e-6)
    checks["bellman_scan"] = {**scan.to_dict(), "passed": scan.passed}
    xs = np.geomspace(sol.x_bar / 50, sol.x_bar * 0.95, 40)
    if crit == "average":
        dev = verify.fd_check(lambda x: float(prof.h0(x)), lambda x: float(prof.dh0(x)), xs)
        checks["fd_check"] = {"max_deviation": dev, "tol": 1e-6, "passed": dev <= 1e-6}
    else:
        dev = verify.fd_check(sol.W_tilde, sol.dW_tilde, xs)
        checks["fd_check"] = {"max_deviation": dev, "tol": 1e-5, "passed": dev <= 1e-5}
        v, s = verify.pasting_check(sol)
        checks["pasting_check"] = {"value": v, "slope": s, "tol": 1e-7, "passed": v <= 1e-7 and s <= 1e-7}
    flow = sol.flow if crit == "average" else sol.params.flow
    crit_p = sol.crit if crit == "average" else sol.params.crit
    gs = verify.grid_search_threshold(flow, crit_p, crit, center=sol.x_bar)
    checks["grid_search"] = {"best": gs.best, "x_bar": sol.x_bar, "log_step": gs.log_step,
                             "unimodal": gs.unimodal, "passed": gs.within_one_step(sol.x_bar)}
    bundle["passed"] = all(c["passed"] for c in checks.values())
    return bundle


def cmd_verify(o: Options, stdout) -> int:
    crit = _criterion(o)
    fp, cp = _params(o, crit, need_a=True)
    pert = None
    if o.has("inject_perturbation"):
        spec = o.text("inject_perturbation")
        try:
            field, factor = spec.split(":")
            pert = (field.strip(), float(factor))
        except ValueError:
            raise ConfigError("key 'inject_perturbation' must look like 'g:1.01'") from None
        allowed = {"average": ("g", "x_bar"), "discounted": ("w1", "x_bar")}[crit]
        if pert[0] not in allowed:
            raise ConfigError(f"key 'inject_perturbation' field {pert[0]!r} does not apply to {crit}")
    bundle = run_verification(fp, cp, crit, pert)
    stdout.write(json.dumps(bundle, indent=1) + "\n")
    return EXIT_OK if bundle["passed"] else EXIT_VERIFY


FIGURE_HEADER = ["x", "W", "z", "v_infl"]


def cmd_figure(o: Options, stdout) -> int:
    fp, cp = _params(o, "discounted")
    sol = _solve(fp, cp, "discounted")
    lo = o.num("lo", 0.05, lambda v: v > 0, "lo > 0")
    hi = o.num("hi", 3.0, lambda v: v > lo, "hi > lo")
    n = int(o.num("n", 500, lambda v: v >= 2 and v == int(v), "integer >= 2"))
    table = discounted.diagnostic_curves(np.linspace(lo, hi, n), discounted.ValueFunctionW(sol))
    buf = io.StringIO()
    write_csv(table.tolist(), FIGURE_HEADER, buf)
    _emit(buf.getvalue(), o.values.get("out"), stdout)
    return EXIT_OK


# -- entry point ------------------------------------------------------------

_PARAM_FLAGS = ["a", "b", "gamma", "alpha", "lambda", "rho", "criterion"]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="impulse_aqm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        for f in _PARAM_FLAGS:
            p.add_argument(f"--{f}", dest=f.replace("-", "_"))
        return p

    common(sub.add_parser("threshold", help="optimal threshold as JSON"))
    p = common(sub.add_parser("simulate", help="simulate a policy; CSV trace + JSON summary"))
    for f in ["policy", "x-bar", "x0", "horizon", "seed", "warmup", "routing", "link-weights",
              "red-min-th", "red-max-th", "red-p-max", "red-dt", "tau", "out", "summary"]:
        p.add_argument(f"--{f}", dest=f.replace("-", "_"))
    p = common(sub.add_parser("verify", help="run the verification suite"))
    p.add_argument("--inject-perturbation", dest="inject_perturbation", metavar="FIELD:FACTOR")
    p = common(sub.add_parser("figure", help="diagnostic curves of the discounted value function"))
    for f in ["lo", "hi", "n", "out"]:
        p.add_argument(f"--{f}", dest=f)
    return ap


COMMANDS = {"threshold": cmd_threshold, "simulate": cmd_simulate, "verify": cmd_verify, "figure": cmd_figure}


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        values = read_config(args.config) if args.config else {}
        values.update({k: v for k, v in flags.items() if v is not None})
        return COMMANDS[args.command](Options(values), stdout)
    except (ConfigError, ParameterError, ValidationError, DomainError, OSError) as e:
        stderr.write(f"error: {e}\n")
        return EXIT_CONFIG
    except (NoRootError, AmbiguousRootError) as e:
        stderr.write(f"error: {e}\n")
        return EXIT_NOROOT


if __name__ == "__main__":
    sys.exit(main())
