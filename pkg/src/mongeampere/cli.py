"""Command line entry point: solve, re-verify, and the estimate and smoothing demos."""

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict, fields

import numpy as np

from . import nash_moser as nm
from .grid import Grid2D, GridError, read_field, write_field
from .metric import MetricError
from .problem import ProblemError, ScaledOperator, build_problem
from .strip import StripError, StripParams
from .verify import VerifyError, core_grid, verify

SCHEMA = 1
EXIT_OK, EXIT_ERROR, EXIT_STALLED = 0, 1, 2


class ConfigError(ValueError):
    pass


# -- configuration ---------------------------------------------------------------------

PROBLEM_KEYS = {"mode": str, "K": str, "coeffs": list, "f": str, "metric": str, "heights": list,
                "chart": list, "epsilon": float, "x0": float, "y0": float}
SCHEDULE_KEYS = {f.name: f.type for f in fields(nm.Schedule)}
STRIP_KEYS = {f.name: float for f in fields(StripParams)}
RUN_KEYS = {"nx": int, "ny": int, "seed": int, "bc": str, "closure": str, "out": str}
_CASTS = {"float": float, "int": int, "str": str, float: float, int: int, str: str, list: list}


def parse_config_text(text):
    """JSON object, or one `key = value` (or `key: value`) per line with # comments.

    Values are read as JSON when possible, so lists and numbers need no quoting."""
    text = text.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
    out = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":"
        if sep not in line:
            raise ConfigError(f"line {ln}: expected `key = value`")
        key, val = (s.strip() for s in line.split(sep, 1))
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val.strip("'\"")
    return out


def _cast(key, value, kind):
    kind = _CASTS.get(kind, kind)
    if kind is list:
        if not isinstance(value, list):
            raise ConfigError(f"field {key!r}: expected a list, got {value!r}")
        return value
    if kind is int and isinstance(value, float) and value.is_integer():
        value = int(value)
    if kind in (int, float) and isinstance(value, bool):
        raise ConfigError(f"field {key!r}: expected a number, got {value!r}")
    try:
        out = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"field {key!r}: cannot read {value!r} as {kind.__name__}")
    if kind is int and out != value:
        raise ConfigError(f"field {key!r}: expected an integer, got {value!r}")
    return out


def resolve_config(raw):
    """Split a flat mapping into typed problem, schedule, strip and run settings."""
    cfg = {"problem": {}, "schedule": {}, "strip": {}, "run": {"nx": 65, "ny": 65, "seed": 0}}
    for key, value in raw.items():
        if key.startswith("strip."):
            name = key[len("strip."):]
            if name not in STRIP_KEYS:
                raise ConfigError(f"field {key!r}: unknown strip parameter")
            cfg["strip"][name] = _cast(key, value, float)
        elif key in PROBLEM_KEYS:
            cfg["problem"][key] = _cast(key, value, PROBLEM_KEYS[key])
        elif key in SCHEDULE_KEYS:
            cfg["schedule"][key] = _cast(key, value, SCHEDULE_KEYS[key])
        elif key in RUN_KEYS:
            cfg["run"][key] = _cast(key, value, RUN_KEYS[key])
        else:
            raise ConfigError(f"field {key!r}: unknown configuration key")
    return cfg


def _overrides(args):
    out = {}
    for flag, key in (("epsilon", "epsilon"), ("mu", "mu"), ("tau", "tau"), ("n0", "n0"),
                      ("theta0", "theta0"), ("max_iter", "max_iter"), ("tol", "tol"), ("seed", "seed")):
        v = getattr(args, flag, None)
        if v is not None:
            out[key] = v
    if getattr(args, "grid", None):
        out["nx"], out["ny"] = args.grid
    return out


def load_config(args, mode=None):
    raw = {}
    if args.config:
        if not os.path.isfile(args.config):
            raise ConfigError(f"field 'config': file {args.config!r} does not exist")
        with open(args.config) as fh:
            raw = parse_config_text(fh.read())
    raw.update(_overrides(args))
    if mode is not None:
        if raw.get("mode", mode) != mode:
            raise ConfigError(f"field 'mode': {raw['mode']!r} conflicts with the {mode} subcommand")
        raw["mode"] = mode
    return raw


class Setup:
    """Validated objects built from a resolved config."""

    def __init__(self, raw):
        self.raw = dict(raw)
        cfg = resolve_config(raw)
        self.cfg = cfg
        try:
            self.spec = build_problem(cfg["problem"])
        except (ProblemError, MetricError) as exc:
            raise ConfigError(f"problem: {exc}")
        try:
            self.schedule = nm.Schedule(**cfg["schedule"])
        except (nm.ScheduleError, TypeError) as exc:
            raise ConfigError(f"schedule: {exc}")
        try:
            strip = StripParams(**{**cfg["strip"], "y0": self.spec.y0})
        except StripError as exc:
            raise ConfigError(f"strip: {exc}")
        run = cfg["run"]
        try:
            self.base = Grid2D.box(self.spec.x0, self.spec.y0, run["nx"], run["ny"])
        except GridError as exc:
            raise ConfigError(f"field 'nx'/'ny': {exc}")
        self.opts = nm.StepOptions(bc=run.get("bc", "dirichlet"), closure=run.get("closure", "causal"),
                                   strip=strip)
        self.seed = run["seed"]

    def resolved(self):
        """Everything needed to rebuild the run, as plain JSON."""
        return {"problem": self.cfg["problem"], "schedule": asdict(self.schedule),
                "strip": asdict(self.opts.strip), "run": {**self.cfg["run"], "bc": self.opts.bc,
                                                          "closure": self.opts.closure}}


def flatten_resolved(res):
    out = dict(res["problem"])
    out.update(res["schedule"])
    out.update({f"strip.{k}": v for k, v in res["strip"].items() if k != "y0"})
    out.update(res["run"])
    return out


# -- JSON output -----------------------------------------------------------------------

def clean(obj):
    """NaN and infinities become null so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return clean(obj.item())
    return obj


def dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_out(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"field 'out': cannot create {path!r}: {exc}")
    if not os.access(path, os.W_OK):
        raise ConfigError(f"field 'out': {path!r} is not writable")
    return path


# -- subcommands -----------------------------------------------------------------------

def _consistency(rep, spec, w):
    """Independent core residual against eps^5 |Phi(w)| on the same nodes."""
    from .problem import phi_apply
    ph = phi_apply(ScaledOperator(spec, w.grid), w).values
    ix, iy = core_grid(w.grid, spec)
    est = spec.epsilon ** 5 * float(np.abs(ph[np.ix_(ix, iy)]).max())
    got = rep.ma_residual_core.sup
    ratio = got / est if est > 0 else (1.0 if got == 0 else math.inf)
    return {"phi_estimate_core_sup": est, "ratio": ratio,
            "within_10x": bool(est == got or 0.1 <= ratio <= 10.0 or max(got, est) < 1e-15)}


def cmd_solve(args, mode):
    raw = load_config(args, mode)
    setup = Setup(raw)
    out = _ensure_out(args.out)
    op = ScaledOperator(setup.spec, setup.base)
    t0 = time.perf_counter()
    result = nm.run(op, setup.schedule, setup.base, setup.opts)
    elapsed = time.perf_counter() - t0
    with open(os.path.join(out, "run.jsonl"), "w") as fh:
        fh.write("".join(json.dumps(clean(r), sort_keys=True) + "\n" for r in result.log))
    write_field(os.path.join(out, "w.field"), result.w)
    dump_json(os.path.join(out, "config.json"), setup.resolved())
    norms_f = [r["norm_f0"] for r in result.log]
    report = {"schema": SCHEMA, "mode": mode, "problem": setup.spec.name, "status": result.status,
              "message": result.message, "iterations": len(result.log) - 1, "final_n": result.state.n,
              "norm_f_first": norms_f[0], "norm_f_final": norms_f[-1],
              "normalization": {"A": setup.spec.A.tolist(), "d": setup.spec.d},
              "fallbacks": result.state.fallbacks}
    if result.status != "aborted":
        rep = verify(result.w, setup.spec)
        report["verification"] = rep.to_dict()
        report["consistency"] = _consistency(rep, setup.spec, result.w)
    dump_json(os.path.join(out, "report.json"), report)
    print(f"{result.status} after {report['iterations']} steps, |f| {norms_f[0]:.3e} -> "
          f"{norms_f[-1]:.3e} ({elapsed:.2f} s); output in {out}", file=sys.stderr)
    if result.status == "converged":
        return EXIT_OK
    if result.status == "stalled":
        return EXIT_STALLED
    print(f"error: run aborted: {result.message}", file=sys.stderr)
    return EXIT_ERROR


def cmd_verify(args):
    out = args.out
    paths = {n: os.path.join(out, n) for n in ("config.json", "w.field", "report.json")}
    for name, p in paths.items():
        if not os.path.isfile(p):
            raise ConfigError(f"field 'out': {name} missing in {out!r}")
    with open(paths["config.json"]) as fh:
        setup = Setup(flatten_resolved(json.load(fh)))
    try:
        w = read_field(paths["w.field"])
    except (GridError, ValueError) as exc:
        raise ConfigError(f"field 'w.field': {exc}")
    with open(paths["report.json"]) as fh:
        saved = json.load(fh)
    rep = verify(w, setup.spec)
    cons = _consistency(rep, setup.spec, w)
    old = (saved.get("verification") or {}).get("ma_residual_core", {}).get("sup")
    new = rep.ma_residual_core.sup
    agrees = old is not None and (new <= 10 * old + 1e-300)
    result = {"schema": SCHEMA, "verification": rep.to_dict(), "consistency": cons,
              "saved_core_sup": old, "matches_saved": agrees}
    dump_json(os.path.join(out, "verify.json"), result)
    print(json.dumps(clean(result), sort_keys=True))
    return EXIT_OK if agrees and cons["within_10x"] else EXIT_STALLED


def cmd_check_estimates(args):
    from .coeffs import CoefficientSet
    from .grid import ScalarField
    from .profiles import bump
    from .strip import build_multipliers, check_energy_inequality, extend_to_strip, strip_conditions
    raw = load_config(args)
    setup = Setup({k: v for k, v in raw.items() if k != "mode"} | {"mode": "curvature"})
    rng = np.random.default_rng(setup.seed)
    rect = Grid2D.box(setup.spec.x0, setup.spec.y0, setup.base.nx, setup.base.ny)
    ok = True
    for theta in args.theta or [1e-2, 1e-3, 1e-4]:
        p = StripParams(**{**asdict(setup.opts.strip), "theta": theta})
        c = extend_to_strip(CoefficientSet.gallerstedt(rect), p)
        mult = build_multipliers(c, p)
        S = c.grid
        X, Y = S.mesh()
        conds = {k: {"value": v, "holds": h} for k, (v, h) in strip_conditions(c, p).items()}
        print(json.dumps(clean({"theta": theta, "strip_conditions": conds}), sort_keys=True))
        for k in range(args.probes):
            cx, cy = rng.uniform(-0.4, 0.4) * S.x_max, rng.uniform(-0.5, 0.5) * S.y_max
            rx, ry = rng.uniform(0.2, 0.45) * S.x_max, rng.uniform(0.2, 0.4) * S.y_max
            kx = rng.uniform(0, 3)
            u = ScalarField(S, bump(np.sqrt(((X - cx) / rx) ** 2 + ((Y - cy) / ry) ** 2))
                            * np.cos(kx * X))
            rep = check_energy_inequality(c, mult, u, theta)
            ok &= bool(rep.passed)
            print(json.dumps(clean({"theta": theta, "probe": k, "energy_ratio": rep.ratio,
                                    "positive": rep.passed}), sort_keys=True))
    return EXIT_OK if ok else EXIT_STALLED


def cmd_demo_smoothing(args):
    from .grid import ScalarField
    from .smoothing import power_law_probe, smoothing_constants
    raw = load_config(args)
    seed = int(raw.get("seed", 0))
    rng = np.random.default_rng(seed)
    n = args.size
    g = Grid2D(-1.0, 1.0, -1.0, 1.0, n, n)
    probes = [power_law_probe(g, s, rng) for s in (0, 1, 2) for _ in range(3)]
    probes.append(ScalarField(g, np.ones(g.shape)))
    rep = smoothing_constants(args.gammas, probes)
    out = {"schema": SCHEMA, "seed": seed, "gammas": rep.gammas,
           "constants": {f"{a}{b}": v for (a, b), v in rep.constants.items()},
           "slopes": {f"{a}{b}": v for (a, b), v in rep.slopes.items()},
           "decay_slopes": {f"{a}{b}": v for (a, b), v in rep.decay_slopes.items()},
           "spread": {"".join(map(str, k)): v for k, v in rep.spread.items()},
           "passed": rep.passed}
    if args.out:
        dump_json(os.path.join(_ensure_out(args.out), "smoothing.json"), out)
    print(json.dumps(clean(out), sort_keys=True))
    return EXIT_OK if rep.passed else EXIT_STALLED


# -- entry point -----------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="mongeampere", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="run"):
        sp.add_argument("--config", help="flat key-value or JSON config file")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--grid", nargs=2, type=int, metavar=("NX", "NY"))
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--mu", type=float)
        sp.add_argument("--tau", type=float)
        sp.add_argument("--n0", type=int)
        sp.add_argument("--theta0", type=float)
        sp.add_argument("--max-iter", dest="max_iter", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--seed", type=int)

    common(sub.add_parser("solve-curvature", help="prescribed Gauss curvature near a degenerate point"))
    common(sub.add_parser("solve-embedding", help="isometric embedding of a metric via ds^2 - dz^2 flat"))
    sp = sub.add_parser("verify", help="re-verify a saved run directory")
    sp.add_argument("--out", required=True)
    sp = sub.add_parser("check-estimates", help="energy inequality on the strip with random probes")
    common(sp)
    sp.add_argument("--probes", type=int, default=20)
    sp.add_argument("--theta", type=float, action="append")
    sp = sub.add_parser("demo-smoothing", help="measured smoothing constants")
    common(sp, out_default=None)
    sp.add_argument("--size", type=int, default=129)
    sp.add_argument("--gammas", type=float, nargs="+", default=[2.0, 4.0, 8.0, 16.0])
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve-curvature":
            return cmd_solve(args, "curvature")
        if args.command == "solve-embedding":
            return cmd_solve(args, "embedding")
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "check-estimates":
            return cmd_check_estimates(args)
        return cmd_demo_smoothing(args)
    except (ConfigError, VerifyError, StripError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
