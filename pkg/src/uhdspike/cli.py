"""Command-line frontend.

Every command reads a JSON config (``--config``), writes into ``--out`` and is
a pure function of (config, seed, tool version). Exit codes: 0 success,
1 verification failure, 2 bad input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import warnings
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .equivalents import counting_function, density_curve, law_for_model, quantiles, solve_m
from .errors import (
    BracketFailure, ConfigError, EigensolverFailure, InsufficientGrid, NonConvergence,
    QuadratureFailure, SpikeModelError, WrongBranch,
)
from .model import model_from_document, model_to_document, validate_assumptions
from .montecarlo import DISTRIBUTIONS, RATE_TARGETS, SweepTemplate, sweep_and_fit
from .reference_mp import mp_law, mp_m, mp_outlier
from .rng import GENERATOR_VERSION
from .spikes import WeightSequence, explained_variance, predict_outliers, weighted_projection_sum

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (NonConvergence, BracketFailure, QuadratureFailure, WrongBranch,
                  EigensolverFailure)

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}

MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["n", "p", "spectrum"],
    "properties": {
        "n": {"type": "integer", "minimum": 2},
        "p": {"type": "integer", "minimum": 3},
        "spectrum": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "atoms": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "type": "object", "additionalProperties": False,
                        "required": ["value", "mult"],
                        "properties": {"value": {"type": "number", "exclusiveMinimum": 0},
                                       "mult": _POS_INT},
                    },
                },
                "sigmas": {"type": "array", "minItems": 1, "items": _NUM},
            },
            "oneOf": [{"required": ["atoms"]}, {"required": ["sigmas"]}],
        },
        "spikes": {"type": "array", "maxItems": 32, "items": {"type": "number", "exclusiveMinimum": 0}},
        "varpi": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "varsigma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "basis": {
            "oneOf": [
                {"const": "identity"},
                {"type": "object", "additionalProperties": False, "required": ["haar"],
                 "properties": {"haar": {"type": "integer", "minimum": 0}}},
            ],
        },
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": MODEL_SCHEMA,
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "version": {"type": "string"},
        "weights": {"type": "string"},
        "density": {"type": "object", "additionalProperties": False,
                    "properties": {"grid": {"type": "integer"}}},
        "quantiles": {"type": "object", "additionalProperties": False,
                      "properties": {"n": {"type": "integer"}}},
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n_grid", "reps"],
            "properties": {
                "alpha": {"type": "number", "exclusiveMinimum": 1},
                "c": {"type": "number", "exclusiveMinimum": 0},
                "n_grid": {"type": "array", "items": {"type": "integer", "minimum": 2}},
                "reps": {"oneOf": [{"type": "integer"},
                                   {"type": "array", "items": {"type": "integer"}}]},
                "distribution": {"enum": list(DISTRIBUTIONS)},
                "quantities": {"type": "array", "items": {"enum": sorted(RATE_TARGETS)}},
                "nonoutlier_offset": _POS_INT,
                "weights": {"enum": ["sigma", "ones"]},
            },
        },
    },
}

DEFAULT_QUANTITIES = ("outlier_location", "alignment", "delocalization", "edge_sticking",
                      "projection_sum", "explained_variance")


def fmt(x):
    """Floats at 17 significant digits."""
    return format(float(x), ".17g")


class Context:
    def __init__(self, config, seed, out, threads):
        self.config = config
        self.seed = seed
        self.out = Path(out)
        self.threads = threads

    @property
    def config_hash(self):
        blob = json.dumps({"config": self.config, "seed": self.seed}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def meta(self):
        return {"tool": "uhdspike", "version": __version__, "seed": self.seed,
                "config_sha256": self.config_hash, "generator": GENERATOR_VERSION}

    def write_csv(self, name, header, rows, footer=()):
        buf = io.StringIO()
        for k, v in self.meta().items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
        for line in footer:
            buf.write(f"# {line}\n")
        self._write(name, buf.getvalue())

    def write_json(self, name, payload):
        doc = {"meta": self.meta(), **payload}
        self._write(name, json.dumps(_plain(doc), indent=2, sort_keys=False) + "\n")

    def _write(self, name, text):
        self.out.mkdir(parents=True, exist_ok=True)
        with open(self.out / name, "w", newline="") as fh:
            fh.write(text)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc


def _model(ctx):
    if "model" not in ctx.config:
        raise ConfigError("config has no 'model' section")
    try:
        return model_from_document(ctx.config["model"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"invalid model: {exc}") from exc


def read_weights(path, p):
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.DictReader(line for line in fh if not line.startswith("#"))]
        ells = np.array([float(r["ell"]) for r in rows])
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read weights CSV {path}: {exc}") from exc
    if ells.size != p:
        raise ConfigError(f"weights CSV has {ells.size} rows, expected p={p}")
    return ells


# ---------------------------------------------------------------------------
# commands


def cmd_predict(ctx, args):
    model = _model(ctx)
    weights_path = args.weights or ctx.config.get("weights")
    ells = read_weights(weights_path, model.p) if weights_path else None
    law = law_for_model(model)
    report = validate_assumptions(model, law)
    preds = predict_outliers(law, model)
    wseq = None
    if ells is not None:
        try:
            wseq = WeightSequence(ells)
        except SpikeModelError as exc:
            raise ConfigError(str(exc)) from exc
    spikes = []
    for o, win in zip(preds, report.spikes):
        entry = o.as_dict()
        entry["window"] = [win.lower, win.upper]
        if o.a is not None:
            entry["explained_variance"] = explained_variance(law, model, o.i)
            if wseq is not None:
                try:
                    entry["projection_sum"] = weighted_projection_sum(law, model, o.i, wseq)
                except SpikeModelError as exc:
                    raise ConfigError(str(exc)) from exc
        if not o.admissible:
            print(f"warning: spike {o.i} (sigma_tilde={o.sigma_tilde:.6g}) is outside the "
                  f"admissible window {win.lower:.6g} < sigma_tilde < {win.upper:.6g}",
                  file=sys.stderr)
        spikes.append(entry)
    if not (report.spectrum_lower_ok and report.spectrum_upper_ok):
        print("warning: population spectrum violates the declared varsigma bounds",
              file=sys.stderr)
    gam = quantiles(law, model.n)
    payload = {
        "phi": model.phi,
        "edges": _edges(law),
        "spikes": spikes,
        "separation": [{"i": i, "j": j, "ok": ok} for i, j, ok in report.separations],
        "spectrum_bounds_ok": report.spectrum_lower_ok and report.spectrum_upper_ok,
    }
    ctx.write_json("predictions.json", payload)
    ctx.write_csv("quantiles.csv", ["i", "gamma_i"], [(i + 1, g) for i, g in enumerate(gam)])
    return EXIT_OK


def _edges(law):
    return {"gamma_minus": law.gamma_minus, "gamma_plus": law.gamma_plus,
            "c1": law.c1, "c2": law.c2, "m1": law.m1}


def cmd_density(ctx, args):
    model = _model(ctx)
    K = args.grid if args.grid is not None else ctx.config.get("density", {}).get("grid", 200)
    if K < 1:
        raise ConfigError("grid size K must be positive")
    law = law_for_model(model)
    curve = density_curve(law, K)
    mass = law.mass
    ctx.write_csv("density.csv", ["E", "rho"], zip(curve.grid, curve.values),
                  footer=[f"mass={fmt(mass)}", f"grid_mass={fmt(curve.mass)}"])
    ctx.write_json("edges.json", _edges(law))
    return EXIT_OK


def cmd_quantiles(ctx, args):
    model = _model(ctx)
    n = args.n if args.n is not None else ctx.config.get("quantiles", {}).get("n", model.n)
    if n < 1:
        raise ConfigError("quantile count must be positive")
    law = law_for_model(model)
    gam = quantiles(law, n)
    ctx.write_csv("quantiles.csv", ["i", "gamma_i"], [(i + 1, g) for i, g in enumerate(gam)])
    return EXIT_OK


def _sweep_settings(ctx):
    sw = ctx.config.get("sweep")
    if sw is None:
        raise ConfigError("config has no 'sweep' section")
    n_grid = sw["n_grid"]
    reps = sw["reps"]
    reps = [reps] * len(n_grid) if isinstance(reps, int) else reps
    if len(n_grid) < 3 or len(reps) != len(n_grid):
        raise InsufficientGrid("n_grid needs at least 3 points and one reps entry per point")
    if min(reps) < 3:
        raise InsufficientGrid("reps must be at least 3 at every grid point")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise InsufficientGrid("n_grid must be strictly increasing")
    return sw, n_grid, reps


def run_sweep(ctx):
    sw, n_grid, reps = _sweep_settings(ctx)
    model = _model(ctx)
    alpha = sw.get("alpha", math.log(model.p) / math.log(model.n))
    template = SweepTemplate.from_model(model, alpha, sw.get("c", 1.0))
    quantities = tuple(sw.get("quantities", DEFAULT_QUANTITIES))
    return sweep_and_fit(
        template, n_grid, reps, quantities, seed=ctx.seed,
        distribution=sw.get("distribution", "gaussian"), threads=ctx.threads,
        nonoutlier_offset=sw.get("nonoutlier_offset", 5), weights=sw.get("weights", "sigma"),
    ), quantities


def _write_sweep(ctx, result, quantities):
    rows = result.summary_rows(quantities)
    ctx.write_csv("trials.csv", ["n", "p", "quantity", "median_err", "q25", "q75", "reps"], rows)
    ctx.write_json("ratefit.json", {"alpha": result.alpha,
                                    "fits": [f.as_dict() for f in result.fits.values()]})


def cmd_simulate(ctx, args):
    result, quantities = run_sweep(ctx)
    _write_sweep(ctx, result, quantities)
    return EXIT_OK


def verification_checks(result):
    """Threshold checks on a sweep: magnitudes at every grid point plus rate fits."""
    checks = []

    def add(name, ok, detail):
        checks.append({"check": name, "pass": bool(ok), "detail": detail})

    def med(pt, q):
        v = pt.values(q)
        return float(np.median(v)) if v.size else float("nan")

    pts = result.points
    if "outlier_location" in result.fits:
        meds = [med(pt, "outlier_location") for pt in pts]
        fit = result.fits["outlier_location"]
        add("outlier_location_rate",
            all(b < a for a, b in zip(meds, meds[1:])) and -0.7 <= fit.slope <= -0.3,
            {"medians": meds, "slope": fit.slope})
    if any(pt.values("alignment").size for pt in pts):
        rows = [(med(pt, "alignment"), 5 * pt.p ** -0.5) for pt in pts]
        add("alignment_magnitude", all(m <= b for m, b in rows), {"median_vs_bound": rows})
    if any(pt.values("delocalization").size for pt in pts):
        rows = [(med(pt, "delocalization"), 20 * math.log(pt.p) / pt.p) for pt in pts]
        ok = all(m <= b for m, b in rows)
        if "delocalization" in result.fits:
            fit = result.fits["delocalization"]
            ok = ok and abs(fit.slope + result.alpha) <= 0.3
        add("delocalization", ok, {"median_vs_bound": rows})
    if any(pt.values("edge_sticking").size for pt in pts):
        rows = [(med(pt, "edge_sticking"), 10 * pt.n ** (-2 / 3)) for pt in pts]
        ok = all(m <= b for m, b in rows)
        if "edge_sticking" in result.fits:
            ok = ok and abs(result.fits["edge_sticking"].slope + 2 / 3) <= 0.25
        add("edge_sticking", ok, {"median_vs_bound": rows})
    for q in ("projection_sum", "explained_variance"):
        if any(pt.values(q).size for pt in pts):
            rows = [(med(pt, q), 5 * pt.n ** -0.25) for pt in pts]
            add(f"{q}_magnitude", all(m <= b for m, b in rows), {"median_vs_bound": rows})
    return checks


def cmd_verify(ctx, args):
    result, quantities = run_sweep(ctx)
    _write_sweep(ctx, result, quantities)
    checks = verification_checks(result)
    ctx.write_json("verify.json", {"checks": checks})
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['check']}")
    return EXIT_OK if all(c["pass"] for c in checks) else EXIT_FAIL


def mp_check_rows(phi):
    """General solver vs. closed-form Marchenko-Pastur quantities."""
    from .equivalents import equivalent_law
    from .model import PopulationSpectrum

    law = equivalent_law(PopulationSpectrum.from_atoms([(1.0, 1)]), phi)
    ref = mp_law(phi)
    rows = [("gamma_minus", law.gamma_minus, ref.gamma_minus),
            ("gamma_plus", law.gamma_plus, ref.gamma_plus),
            ("c1", law.c1, ref.c1), ("c2", law.c2, ref.c2)]
    mid = 0.5 * (ref.gamma_minus + ref.gamma_plus)
    for z in (ref.gamma_plus + 1.0, mid, mid + 0.5j, max(ref.gamma_minus - 0.25, 0.05)):
        m, mr = solve_m(law, z), mp_m(phi, z)
        rows.append((f"Re m({z})", m.real, mr.real))
        rows.append((f"Im m({z})", m.imag, mr.imag))
    s = math.sqrt(phi)
    for k in (3, 4, 8):
        d = k * s / 2
        a_ref, b_ref = mp_outlier(phi, d)
        x = -s / (1 + d)
        a = law.f(x)
        b = -x * law.f(x, 1) / a
        rows.append((f"a(d={d:.6g})", float(a), a_ref))
        rows.append((f"b(d={d:.6g})", float(b), b_ref))
    return rows


def cmd_mp_check(ctx, args):
    if not args.phi > 1:
        raise ConfigError("--phi must exceed 1")
    rows = mp_check_rows(args.phi)
    worst = 0.0
    print(f"{'quantity':<28}{'solver':>24}{'closed form':>24}{'abs diff':>12}")
    for name, got, want in rows:
        diff = abs(got - want)
        worst = max(worst, diff)
        print(f"{name:<28}{fmt(got):>24}{fmt(want):>24}{diff:>12.2e}")
    ok = worst <= 1e-10
    print(f"max abs diff {worst:.3e}: {'OK' if ok else 'MISMATCH'}")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "density": cmd_density,
    "quantiles": cmd_quantiles,
    "mp-check": cmd_mp_check,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads; affects speed only")
    parser = argparse.ArgumentParser(prog="uhdspike", parents=[common])
    parser.add_argument("--version", action="version", version=f"uhdspike {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("predict", parents=[common], help="outlier and projection predictions")
    p.add_argument("--weights", help="CSV with column 'ell' (p rows)")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo sweep and rate fits")
    sub.add_parser("verify", parents=[common], help="sweep plus threshold checks")
    p = sub.add_parser("density", parents=[common], help="density on an edge-clustered grid")
    p.add_argument("--grid", type=int)
    p = sub.add_parser("quantiles", parents=[common], help="quantiles gamma_1..gamma_N")
    p.add_argument("--n", type=int)
    p = sub.add_parser("mp-check", parents=[common], help="compare solver with MP closed forms")
    p.add_argument("--phi", type=float, required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else {}
        if args.command not in ("mp-check",) and not args.config:
            raise ConfigError(f"'{args.command}' needs --config")
        seed = args.seed if args.seed is not None else config.get("seed", 0)
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        ctx = Context(config, seed, args.out, args.threads)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return COMMANDS[args.command](ctx, args)
    except (ConfigError, InsufficientGrid) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SpikeModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
