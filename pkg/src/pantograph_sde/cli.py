"""Command-line harness: ``pantograph-sde <command> --config FILE``.

Config files are flat ``key = value`` lines.  Keys before the first section
header apply to every command; a ``[command]`` section overrides them for that
command.  Unknown keys and sections are rejected.  Example::

    problem = linear
    a = -2
    b = 0.5
    c = 0.5
    d = 0.5
    q = 0.5
    theta = 0.5
    seed = 1

    [convergence]
    T = 1
    N = 16, 32, 64, 128
    paths = 500

Exit status: 0 success, 2 configuration error, 3 numerical failure,
4 self-test failure.
"""

import argparse
import configparser
import csv
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .analysis import (consistency_orders, fit_order, ms_curve, stability_fit,
                       stability_report, strong_error, tail_indices)
from .brownian import BrownianPath, sample_ensemble
from .errors import ConfigError, NumericalError, PantographError
from .mesh import build_uniform, refine
from .model import BUILTIN, builtin
from .scheme import SchemeConfig, integrate, integrate_batch

COMMANDS = ("analyze", "simulate", "convergence", "consistency", "stability-fit",
            "self-test")

PROBLEM_KEYS = {
    "linear": {"a", "b", "c", "d", "q"},
    "drift_only": {"a", "b", "q"},
    "ou": {"a", "sigma"},
}
OPTIONAL_PROBLEM_KEYS = {"linear": {"x0"}, "drift_only": {"x0"}, "ou": {"x0", "q"}}

COMMON_KEYS = {"problem", "a", "b", "c", "d", "q", "sigma", "x0", "theta", "T", "h",
               "N", "paths", "seed", "workers", "chunk", "tol", "max_iter", "out"}
COMMAND_KEYS = {
    "analyze": set(),
    "simulate": {"output"},
    "convergence": {"fine_factor"},
    "consistency": {"fine_factor", "anchor", "zeta", "antithetic"},
    "stability-fit": {"t_min", "t_max", "samples"},
    "self-test": set(),
}

INT_KEYS = {"paths", "seed", "workers", "chunk", "max_iter", "fine_factor", "samples"}
FLOAT_KEYS = {"a", "b", "c", "d", "q", "sigma", "x0", "theta", "T", "tol", "anchor",
              "zeta", "t_min", "t_max"}
LIST_KEYS = {"h", "N"}


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


# --------------------------------------------------------------------------
# configuration

def read_config(text):
    """Parse config text into ``{section: {key: raw string}}``.

    The unnamed leading section is returned under ``""``.
    """
    parser = configparser.ConfigParser(interpolation=None, default_section="\0",
                                       inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[\0common]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    out = {}
    for name in parser.sections():
        key = "" if name == "\0common" else name
        if key and key not in COMMANDS:
            raise ConfigError(f"unknown section [{key}]")
        allowed = COMMON_KEYS | (COMMAND_KEYS[key] if key else set())
        if not key:
            allowed = COMMON_KEYS | set().union(*COMMAND_KEYS.values())
        for k in parser[name]:
            if k not in allowed:
                raise ConfigError(f"unknown key {k!r} in section [{key or 'common'}]")
        out[key] = dict(parser[name])
    return out


def _convert(key, raw):
    try:
        if key in INT_KEYS:
            return int(raw)
        if key in FLOAT_KEYS:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if key in LIST_KEYS:
            conv = int if key == "N" else float
            return [conv(s) for s in raw.replace(",", " ").split()]
        if key == "antithetic":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None
    return raw


class ExperimentConfig(dict):
    """Validated settings for one command (a dict with attribute access)."""

    def __getattr__(self, key):
        try:
            return self[key]
        except KeyError:
            raise AttributeError(key) from None

    def problem(self):
        name = self["problem"]
        params = {k: self[k] for k in PROBLEM_KEYS[name] | OPTIONAL_PROBLEM_KEYS[name]
                  if k in self}
        return builtin(name, **params)

    def scheme(self):
        return SchemeConfig(theta=self["theta"], tol=self["tol"], max_iter=self["max_iter"])

    def steps(self):
        """Step sizes from ``h`` or ``N``, largest first."""
        if "h" in self:
            hs = list(self["h"])
        elif "N" in self:
            hs = [self["T"] / n for n in self["N"]]
        else:
            raise ConfigError("need a step list: h = ... or N = ...")
        return sorted(hs, reverse=True)

    def echo(self):
        # the output directory is left out so reruns elsewhere compare equal
        return [f"{k} = {self[k] if not isinstance(self[k], list) else ', '.join(map(str, self[k]))}"
                for k in sorted(self) if k != "out"]


DEFAULTS = {"theta": 0.5, "T": 1.0, "x0": 1.0, "paths": 1000, "workers": 1,
            "chunk": 250, "tol": 1e-12, "max_iter": 50, "out": ".",
            "fine_factor": 16, "anchor": 0.5, "zeta": 1.0, "antithetic": True,
            "output": "mean_square", "samples": 40}


def build_config(command, sections, overrides=None):
    # top-level keys meant for other commands are ignored here
    merged = {k: v for k, v in sections.get("", {}).items()
              if k in COMMON_KEYS | COMMAND_KEYS[command]}
    merged.update(sections.get(command, {}))
    relevant = COMMON_KEYS | COMMAND_KEYS[command]
    cfg = ExperimentConfig({k: v for k, v in DEFAULTS.items() if k in relevant})
    for k, raw in merged.items():
        cfg[k] = _convert(k, raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    validate(command, cfg)
    return cfg


def validate(command, cfg):
    if command == "self-test":
        return
    name = cfg.get("problem")
    if name is None:
        raise ConfigError("missing key: problem")
    if name not in BUILTIN:
        raise ConfigError(f"unknown problem {name!r}; choose from {sorted(BUILTIN)}")
    for k in PROBLEM_KEYS[name]:
        if k not in cfg:
            raise ConfigError(f"problem {name} needs key {k!r}")
    for k in {"a", "b", "c", "d", "q", "sigma"} - PROBLEM_KEYS[name] - OPTIONAL_PROBLEM_KEYS[name]:
        if k in cfg:
            raise ConfigError(f"key {k!r} does not apply to problem {name}")
    if "q" in cfg and not (0 < cfg["q"] < 1):
        raise ConfigError("q must lie in (0, 1)")
    if not (0 <= cfg["theta"] <= 1):
        raise ConfigError("theta must lie in [0, 1]")
    if cfg["T"] <= 0:
        raise ConfigError("T must be positive")
    if cfg["tol"] <= 0 or cfg["max_iter"] < 1:
        raise ConfigError("tol must be positive and max_iter >= 1")
    if cfg["workers"] < 1 or cfg["chunk"] < 1:
        raise ConfigError("workers and chunk must be >= 1")
    if command == "analyze":
        return
    if "seed" not in cfg:
        raise ConfigError("a seed is required (config key or --seed)")
    if cfg["seed"] < 0 or cfg["seed"] >= 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg["paths"] < 1:
        raise ConfigError("paths must be >= 1")
    if "h" in cfg and "N" in cfg:
        raise ConfigError("give either h or N, not both")
    if any(h <= 0 or h >= 1 for h in cfg.get("h", [])):
        raise ConfigError("every step must satisfy 0 < h < 1")
    if any(n < 1 for n in cfg.get("N", [])):
        raise ConfigError("every N must be >= 1")
    if command in ("convergence", "consistency"):
        if len(cfg.steps()) < 3:
            raise ConfigError(f"{command} needs at least three step sizes")
        if cfg["fine_factor"] < 1:
            raise ConfigError("fine_factor must be >= 1")
    if command == "consistency":
        if not (0 < cfg["zeta"] <= 1):
            raise ConfigError("zeta must lie in (0, 1]")
        if cfg["antithetic"] and cfg["paths"] % 2:
            raise ConfigError("antithetic sampling needs an even path count")
    if command in ("simulate", "stability-fit"):
        if len(cfg.steps()) != 1:
            raise ConfigError(f"{command} needs exactly one step size")
    if command == "simulate":
        if cfg["output"] not in ("mean_square", "paths"):
            raise ConfigError("output must be mean_square or paths")
    if command == "stability-fit":
        lo = cfg.get("t_min", cfg["T"] / 10)
        hi = cfg.get("t_max", cfg["T"])
        if not (1 < lo < hi <= cfg["T"]):
            raise ConfigError("need 1 < t_min < t_max <= T")
        if cfg["samples"] < 8:
            raise ConfigError("stability-fit needs at least 8 tail samples")


# --------------------------------------------------------------------------
# output

def write_csv(path, header, rows, cfg, command, extra=()):
    """Write one CSV with a ``#`` metadata block followed by a header row."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# pantograph-sde {__version__}\n")
        fh.write(f"# command = {command}\n")
        for line in cfg.echo():
            fh.write(f"# {line}\n")
        for line in extra:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _out(cfg, name):
    os.makedirs(cfg["out"], exist_ok=True)
    return os.path.join(cfg["out"], name)


# --------------------------------------------------------------------------
# commands

def cmd_analyze(cfg):
    k = cfg.problem().constants
    rep = stability_report(k.a, k.b, k.c, k.d, cfg.problem().q)
    print(f"alpha       {fmt(rep.alpha) if rep.alpha is not None else 'none (NO_REAL_ROOT)'}")
    print(f"ms_stable   {rep.ms_stable}")
    print(f"as_stable   {rep.as_stable}")
    print(f"as_rate     {fmt(rep.as_rate) if rep.as_rate is not None else '-'}")
    write_csv(_out(cfg, "analyze.csv"),
              ["alpha", "ms_stable", "as_stable", "as_rate", "flags"],
              [[rep.alpha, rep.ms_stable, rep.as_stable, rep.as_rate,
                ";".join(sorted(rep.flags))]], cfg, "analyze")
    return rep


def cmd_simulate(cfg):
    p, sc = cfg.problem(), cfg.scheme()
    h = cfg.steps()[0]
    N = int(round(cfg["T"] / h))
    if cfg["output"] == "mean_square":
        curve = ms_curve(p, cfg["T"], N, sc, cfg["paths"], cfg["seed"],
                         cfg["workers"], cfg["chunk"])
        path = write_csv(_out(cfg, "mean_square.csv"), ["time", "mean_square", "stderr"],
                         zip(curve.t, curve.ms, curve.stderr), cfg, "simulate",
                         [f"sup_mean_square = {fmt(curve.sup_ms)}"])
        print(f"wrote {path}")
        return curve
    mesh = refine(build_uniform(cfg["T"], N), p.q)
    header = ["time"] + [f"x{i + 1}" for i in range(p.d)]
    written = []
    for i in range(cfg["paths"]):
        W = sample_ensemble(cfg["seed"], [i], p.m, mesh.points)
        Y = integrate_batch(p, mesh, W, sc)[0]
        rows = ([t] + list(y) for t, y in zip(mesh.points, Y))
        written.append(write_csv(_out(cfg, f"path_{i:05d}.csv"), header, rows, cfg,
                                 "simulate", [f"path_index = {i}"]))
    print(f"wrote {len(written)} trajectory files to {cfg['out']}")
    return written


def _print_fit(label, fit):
    lo, hi = fit.ci95
    print(f"{label}: slope {fit.slope:.4f}  95% CI [{lo:.4f}, {hi:.4f}]  "
          f"residual {fit.residual:.3g}")


def cmd_convergence(cfg):
    res = strong_error(cfg.problem(), cfg["theta"], cfg.steps(), cfg["paths"], cfg["seed"],
                       T=cfg["T"], fine_factor=cfg["fine_factor"], workers=cfg["workers"],
                       chunk=cfg["chunk"], cfg=cfg.scheme())
    fit = res.fit
    write_csv(_out(cfg, "convergence.csv"), ["h", "rms_error", "stderr"], fit.rows(), cfg,
              "convergence", [f"slope = {fmt(fit.slope)}", f"h_ref = {fmt(res.h_ref)}"])
    _print_fit("strong order", fit)
    return res


def cmd_consistency(cfg):
    res = consistency_orders(cfg.problem(), cfg["theta"], cfg.steps(), cfg["paths"],
                             cfg["seed"], t_anchor=cfg["anchor"], zeta=cfg["zeta"],
                             antithetic=cfg["antithetic"], fine_factor=cfg["fine_factor"],
                             horizon=None, workers=cfg["workers"], chunk=cfg["chunk"],
                             cfg=cfg.scheme())
    flags = [f"flags = {';'.join(sorted(res.flags))}"]
    avg_slope = res.avg_fit.slope if res.avg_fit else None
    write_csv(_out(cfg, "consistency_mean.csv"), ["h", "mean_defect", "stderr", "max_over_n"],
              zip(res.h, res.mean_defect, res.mean_stderr, res.max_mean_defect), cfg,
              "consistency", flags + [f"slope = {fmt(avg_slope)}",
                                      f"fit_h = {', '.join(fmt(h) for h in res.surviving)}"])
    write_csv(_out(cfg, "consistency_rms.csv"), ["h", "rms_defect", "stderr", "max_over_n"],
              zip(res.h, res.rms_defect, res.rms_stderr, res.max_rms_defect), cfg,
              "consistency", [f"slope = {fmt(res.ms_fit.slope)}"])
    if res.avg_fit:
        _print_fit("average order", res.avg_fit)
    else:
        print("average order: fewer than three step sizes above the noise floor")
    if res.flags:
        print(f"flags: {', '.join(sorted(res.flags))}")
    _print_fit("mean-square order", res.ms_fit)
    return res


def cmd_stability_fit(cfg):
    p = cfg.problem()
    lo = cfg.get("t_min", cfg["T"] / 10)
    hi = cfg.get("t_max", cfg["T"])
    rep, curve, fit = stability_fit(p, cfg["T"], cfg.steps()[0], cfg.scheme(), cfg["paths"],
                                    cfg["seed"], window=(lo, hi), count=cfg["samples"],
                                    workers=cfg["workers"], chunk=cfg["chunk"])
    idx = tail_indices(curve.t, lo, hi, cfg["samples"])
    write_csv(_out(cfg, "stability_fit.csv"), ["t", "mean_square", "stderr"],
              zip(curve.t[idx], curve.ms[idx], curve.stderr[idx]), cfg, "stability-fit",
              [f"slope = {fmt(fit.slope)}", f"alpha = {fmt(rep.alpha)}",
               f"sup_mean_square = {fmt(curve.sup_ms)}"])
    print(f"fitted mean-square slope {fit.slope:.4f} on [{lo:g}, {hi:g}]")
    print(f"closed-form alpha        {rep.alpha if rep.alpha is not None else 'none'}")
    return rep


def cmd_self_test(cfg):
    """Desk-scale checks; returns the number of failures."""
    from .analysis import alpha_ms, check_as_stable, check_ms_stable, series_error
    from .model import drift_only, linear
    from .oracle import PantographSeries
    from scipy.optimize import brentq

    checks = []

    def check(name, ok):
        checks.append(ok)
        print(f"{'PASS' if ok else 'FAIL'}  {name}")

    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(200):
        q = rng.uniform(0.1, 0.9)
        b, d = rng.uniform(0.01, 1, 2)
        c = rng.uniform(0, 1)
        a = -rng.uniform(0.01, 3) - (b + 2 * c * c) / 2
        lead, delay = 2 * a + b + 2 * c * c, b + 2 * d * d
        root = brentq(lambda x: lead + delay * q ** x, -200, 200, xtol=1e-14)
        worst = max(worst, abs(root - alpha_ms(a, b, c, d, q)))
    check("alpha closed form vs root finder", worst < 1e-10)
    ok, rate = check_as_stable(-2, .5, .5, .5, .5)
    check("predicates on (-2, .5, .5, .5, q=.5)",
          ok and check_ms_stable(-2, .5, .5, .5) and abs(rate + 0.2924812503605781) < 1e-12)
    check("boundary a+b+c^2+d^2 = 0 is unstable", not check_ms_stable(-1, .5, .5, .5))

    zero = linear(0, 0, 0, 0, 0.5, x0=1.5)
    mesh = refine(build_uniform(1.0, 16), 0.5)
    tr = integrate(zero, mesh, BrownianPath(1, 3), SchemeConfig(theta=0.5))
    check("f = g = 0 keeps x0", bool(np.all(tr.values == 1.5)))

    a1 = sample_ensemble(5, [0, 1], 1, mesh.points)
    a2 = sample_ensemble(5, [0, 1], 1, mesh.points)
    check("Brownian determinism", np.array_equal(a1, a2))

    s = PantographSeries(-1, .5, .5, 1.0, 4).coefficients
    check("series coefficients", list(s[:4]) == [1.0, -0.5, 0.1875, -0.0546875])
    fit = series_error(drift_only(-1, .5, .5), [2.0 ** -k for k in range(3, 9)])
    check("drift-only order vs series", 0.8 <= fit.slope <= 1.2)

    res = strong_error(linear(-2, .5, .5, .5, .5), 0.5, [2.0 ** -k for k in range(3, 7)],
                       200, seed=1, fine_factor=8, chunk=200)
    check("strong order (small run)", 0.3 <= res.fit.slope <= 0.8)
    return checks.count(False)


HANDLERS = {"analyze": cmd_analyze, "simulate": cmd_simulate,
            "convergence": cmd_convergence, "consistency": cmd_consistency,
            "stability-fit": cmd_stability_fit, "self-test": cmd_self_test}


def make_parser():
    ap = argparse.ArgumentParser(prog="pantograph-sde", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="config file (key = value, [command] sections)")
    ap.add_argument("--seed", type=int, help="master seed (overrides config)")
    ap.add_argument("--workers", type=int, help="worker processes (overrides config)")
    ap.add_argument("--out", help="output directory (overrides config)")
    ap.add_argument("--version", action="version", version=__version__)
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        sections = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    sections = read_config(fh.read())
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        elif args.command != "self-test":
            raise ConfigError("--config is required")
        cfg = build_config(args.command, sections,
                           {"seed": args.seed, "workers": args.workers, "out": args.out})
        if args.command != "self-test":
            cfg.problem()
    except (ConfigError, PantographError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    start = time.perf_counter()
    try:
        result = HANDLERS[args.command](cfg)
    except NumericalError as exc:
        print(f"numerical failure [{exc.code}]: {exc}", file=sys.stderr)
        return 3
    if args.command == "self-test" and result:
        print(f"{result} self-test check(s) failed", file=sys.stderr)
        return 4
    print(f"done in {time.perf_counter() - start:.1f} s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
