"""Command-line entry point.

Configuration is a line-oriented ``key = value`` document. Keys before the
first section header belong to the top-level run settings; ``[sweep]`` and
``[kernel]`` hold the experiment settings. Every key can be overridden on the
command line with ``--set key=value`` (``--set sweep.n_paths=1000`` for keys
inside a section).

Example::

    command = sweep
    d = 1
    s = 0.5
    seed = 7

    [sweep]
    eps_list = 0.25, 0.2, 0.15, 0.1, 0.07, 0.05
    n_paths = 1000000
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from kinharnack import __version__
from kinharnack.core import Params, evaluation_points, make_geometry, scaled_domain
from kinharnack.harnack import (
    DEFAULT_EPS,
    InsufficientDataError,
    SweepConfig,
    SweepRow,
    Tolerances,
    ratio_trend,
)
from kinharnack import harnack, spectral
from kinharnack.rng import RngStream
from kinharnack.stable import empirical_charfn, sample_increments, stable_symbol
from kinharnack.walker import (
    WalkConfig,
    combined_sigma,
    coupled_occupations,
    dump_traces,
    estimate_f_exit,
    estimate_f_occupation,
)

log = logging.getLogger("kinharnack")

COMMANDS = ("sweep", "kernel", "validate")
SWEEP_HEADER = ["eps", "f0", "f0_err", "fzeta", "fzeta_err", "ratio", "ratio_err", "censored_frac"]
EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
_ROOT = "run"


class ConfigError(ValueError):
    """Malformed configuration text, unknown key, or out-of-range value."""


# --------------------------------------------------------------------------
# schema


def _u64(v):
    return v == int(v) and 0 <= v < 2**64


def _pos(v):
    return math.isfinite(v) and v > 0


def _eps_list(text):
    parts = text.strip().strip("[]").replace(",", " ").split()
    return tuple(float(p) for p in parts)


def _optional(conv):
    def parse(text):
        return None if text.strip().lower() in ("", "auto", "none") else conv(text)

    return parse


def _int(text):
    val = float(text)
    if val != int(val):
        raise ValueError(f"{text!r} is not an integer")
    return int(val) if abs(val) < 2**53 else int(text)


# key -> (parser, default, predicate, range description)
_SCHEMA = {
    _ROOT: {
        "command": (str, "sweep", lambda v: v in COMMANDS, "one of sweep, kernel, validate"),
        "d": (_int, 1, lambda v: v >= 1, "a positive integer"),
        "s": (float, 0.5, lambda v: 0 < v < 1, "(0, 1)"),
        "seed": (_int, 0, _u64, "[0, 2^64)"),
        "output_dir": (str, "out", lambda v: bool(v), "a nonempty path"),
        "workers": (_int, 1, lambda v: v >= 1, "a positive integer"),
    },
    "sweep": {
        "eps_list": (_eps_list, DEFAULT_EPS, lambda v: len(v) > 0, "a nonempty decreasing list in (0, 1/4]"),
        "n_paths": (_int, 1_000_000, lambda v: v >= 1, "a positive integer"),
        "dt": (float, 1e-3, _pos, "a positive real"),
        "max_time": (float, 64.0, _pos, "a positive real"),
        "tol_lower": (float, 0.3, lambda v: v >= 0, "a nonnegative real"),
        "tol_upper": (float, 0.3, lambda v: v >= 0, "a nonnegative real"),
        "tol_theorem": (float, 0.35, lambda v: v >= 0, "a nonnegative real"),
        "trace_paths": (_int, 0, lambda v: 0 <= v <= 1000, "[0, 1000]"),
    },
    "kernel": {
        "t": (float, 1.0, _pos, "a positive real"),
        "x_extent": (_optional(float), None, lambda v: v is None or _pos(v), "a positive real or auto"),
        "v_extent": (_optional(float), None, lambda v: v is None or _pos(v), "a positive real or auto"),
        "nx": (_optional(_int), None, lambda v: v is None or (v >= 2 and v % 2 == 0), "an even integer >= 2 or auto"),
        "nv": (_optional(_int), None, lambda v: v is None or (v >= 2 and v % 2 == 0), "an even integer >= 2 or auto"),
    },
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: Params
    seed: int
    output_dir: Path
    workers: int
    sweep: SweepConfig
    kernel_t: float
    grid_spec: spectral.GridSpec
    trace_paths: int
    values: dict

    def to_dict(self) -> dict:
        """Fully resolved configuration, by section."""
        out = {}
        for sec, keys in self.values.items():
            out[sec] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in keys.items()}
        return out


def _split_key(key: str) -> tuple[str, str]:
    if "." in key:
        sec, name = key.split(".", 1)
        return sec.strip(), name.strip()
    return _ROOT, key.strip()


def _raw_sections(text: str) -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"), strict=True,
                                   default_section="\0defaults")
    cp.optionxform = str
    try:
        cp.read_string(f"[{_ROOT}]\n" + text)
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"line {exc.lineno - 1}: duplicate section [{exc.section}]") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"line {exc.lineno - 1}: duplicate key {exc.option!r}") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] - 1
        line = text.splitlines()[lineno - 1].strip()
        raise ConfigError(f"line {lineno}: cannot parse {line!r} (expected key = value)") from None
    return {sec: dict(cp.items(sec)) for sec in cp.sections()}


def parse_config(text: str, overrides=()) -> RunConfig:
    """Parse a configuration document; ``overrides`` are ``key=value`` strings applied on top."""
    raw = _raw_sections(text)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, val = item.split("=", 1)
        sec, name = _split_key(key)
        raw.setdefault(sec, {})[name] = val.strip()

    values = {}
    for sec, entries in raw.items():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key in entries:
            if key not in _SCHEMA[sec]:
                where = "" if sec == _ROOT else f" in [{sec}]"
                raise ConfigError(f"unknown key {key!r}{where}")
    for sec, keys in _SCHEMA.items():
        values[sec] = {}
        for key, (conv, default, ok, desc) in keys.items():
            label = key if sec == _ROOT else f"{sec}.{key}"
            if key in raw.get(sec, {}):
                text_val = raw[sec][key]
                try:
                    val = conv(text_val)
                except (ValueError, OverflowError):
                    raise ConfigError(f"key {label!r}: cannot read {text_val!r}; expected {desc}") from None
            else:
                val = default
            if not ok(val):
                raise ConfigError(f"key {label!r} = {val!r} is out of range; expected {desc}")
            values[sec][key] = val
    return _build(values)


def _build(values: dict) -> RunConfig:
    top, sw, kn = values[_ROOT], values["sweep"], values["kernel"]
    try:
        params = Params(top["d"], top["s"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        walk = WalkConfig(sw["dt"], sw["max_time"], sw["n_paths"], top["seed"])
    except ValueError as exc:
        raise ConfigError(f"[sweep]: {exc}") from None
    try:
        sweep = SweepConfig(params, sw["eps_list"], walk,
                            Tolerances(sw["tol_lower"], sw["tol_upper"], sw["tol_theorem"]))
    except ValueError as exc:
        raise ConfigError(f"key 'sweep.eps_list': {exc}") from None
    dflt = spectral.default_grid_spec(kn["t"], params)
    grid = spectral.GridSpec(kn["x_extent"] or dflt.x_extent, kn["v_extent"] or dflt.v_extent, kn["nx"], kn["nv"])
    return RunConfig(top["command"], params, top["seed"], Path(top["output_dir"]), top["workers"], sweep,
                     kn["t"], grid, sw["trace_paths"], values)


# --------------------------------------------------------------------------
# manifest and outputs


@dataclass(frozen=True)
class Manifest:
    version: str
    command: str
    config: dict
    seed: int
    duration_s: float
    checks: dict

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> Manifest:
        return cls(**json.loads(text))


def format_decimal(x: float) -> str:
    """Positional notation with 17 significant digits."""
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if x == 0:
        return "0.0000000000000000"
    exponent = int(f"{x:.16e}".split("e")[1])
    return np.format_float_positional(x, precision=16 - exponent, unique=False, trim="k")


def write_sweep_csv(rows: list[SweepRow], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            vals = [r.eps, r.f0.mean, r.f0.stderr, r.fzeta.mean, r.fzeta.stderr, r.ratio, r.ratio_err, r.censored_frac]
            w.writerow([format_decimal(float(v)) for v in vals])
    return path


def _verdict_objects(rows, cfg: SweepConfig) -> list[dict]:
    names = ("lower_bound", "upper_bound", "theorem_ratio")
    checks = (harnack.check_lemma_lower, harnack.check_lemma_upper, harnack.check_theorem)
    tols = (cfg.tolerances.lower, cfg.tolerances.upper, cfg.tolerances.theorem)
    out = []
    for name, fn, tol in zip(names, checks, tols):
        try:
            out.append(fn(rows, cfg.params, tol).to_dict())
        except InsufficientDataError as exc:
            out.append({"name": name, "fitted_slope": None, "slope_err": None, "threshold": None,
                        "required": None, "pass": False, "error": str(exc)})
    return out


def sweep_checks(rows: list[SweepRow], cfg: SweepConfig, verdicts: list[dict]) -> dict:
    """Pass/fail map of everything a sweep asserts."""
    checks = {f"verdict:{v['name']}": bool(v["pass"]) for v in verdicts}
    for r in rows:
        ok0, okz = r.cross_check()
        checks[f"cross_estimator:eps={r.eps:g}:origin"] = ok0
        checks[f"cross_estimator:eps={r.eps:g}:zeta"] = okz
        checks[f"max_principle:eps={r.eps:g}"] = all(
            -3 * e.stderr <= e.mean <= 1 + 3 * e.stderr for e in r.estimates().values()
        )
        checks[f"censoring:eps={r.eps:g}"] = not any(e.flagged for e in r.estimates().values())
    try:
        checks["ratio_trend"] = ratio_trend(rows).passed
    except InsufficientDataError:
        checks["ratio_trend"] = False
    return checks


# --------------------------------------------------------------------------
# commands


def _cmd_sweep(cfg: RunConfig) -> dict:
    def progress(row):
        log.info("eps=%g f0=%.4g+-%.2g fzeta=%.4g+-%.2g", row.eps, row.f0.mean, row.f0.stderr,
                 row.fzeta.mean, row.fzeta.stderr)

    rows = harnack.run_sweep(cfg.sweep, workers=cfg.workers, progress=progress)
    write_sweep_csv(rows, cfg.output_dir / "sweep.csv")
    verdicts = _verdict_objects(rows, cfg.sweep)
    (cfg.output_dir / "verdicts.json").write_text(json.dumps(verdicts, indent=2) + "\n")
    if cfg.trace_paths:
        geom = make_geometry(cfg.sweep.eps_list[0], cfg.params)
        dump_traces(cfg.output_dir / "traces.csv", evaluation_points(cfg.params)[0], geom, cfg.params,
                    dataclasses.replace(cfg.sweep.walk, seed=harnack.job_seed(cfg.seed, 0, 0)), cfg.trace_paths)
    return sweep_checks(rows, cfg.sweep, verdicts)


def _cmd_kernel(cfg: RunConfig) -> dict:
    grid = spectral.kernel_grid(cfg.kernel_t, cfg.params, cfg.grid_spec)
    spectral.write_kernel_csv(grid, cfg.output_dir / "kernel_grid.csv")
    mass = grid.mass()
    return {
        "kernel:mass": abs(mass - 1) <= 1e-3,
        "kernel:invariance": spectral.check_invariance(grid) <= 1e-6,
    }


def validation_checks(params: Params, seed: int, workers: int = 1) -> dict:
    """Reduced-size property suite: sampler symbol, spectral identities, estimator cross-check, coupling."""
    checks = {}
    n = 200_000
    cases = [(params, 1.0)]
    if params.d == 1:
        cases += [(Params(1, 0.25), 1.0), (Params(2, 0.5), 0.5)]
    for k, (p, dt) in enumerate(cases):
        x = sample_increments(p, dt, RngStream(seed, k), n)
        ok = True
        for f in (0.5, 1.0, 2.0):
            xi = np.full(p.d, f / math.sqrt(p.d))
            ok &= abs(empirical_charfn(x, xi) - stable_symbol(p, dt, xi)) <= 3 / math.sqrt(n)
        checks[f"stable_symbol:d={p.d}:s={p.s:g}:dt={dt:g}"] = bool(ok)

    grid = spectral.kernel_grid(1.0, params)
    checks["spectral:mass"] = abs(grid.mass() - 1) <= 1e-3
    checks["spectral:invariance"] = spectral.check_invariance(grid) <= 1e-6
    if params.d == 1:
        spec = spectral.GridSpec(0.5, 0.5) if params.s < 0.5 else None
        checks["spectral:scaling"] = spectral.check_scaling(1.0, 0.5, params, spec) <= 0.02
        nodes, marg = spectral.v_marginal_spectral(1.0, params, 64.0, 4608)
        ok = True
        for xv in (0.0, 0.5, 1.0, 2.0):
            i = int(np.argmin(np.abs(nodes - xv)))
            ok &= abs(marg[i] / spectral.v_integrated_kernel(1.0, [nodes[i]], params) - 1) <= 0.02
        checks["spectral:v_marginal"] = bool(ok)

    geom = make_geometry(0.25, params)
    walk = WalkConfig(1e-3, 64.0, 100_000, seed)
    for name, p in zip(("origin", "zeta"), evaluation_points(params)):
        a = estimate_f_exit(p, geom, params, walk, workers)
        b = estimate_f_occupation(p, geom, params, walk, workers)
        checks[f"cross_estimator:{name}"] = abs(a.mean - b.mean) <= 3 * combined_sigma(a, b)
    large = geom.with_domain(scaled_domain(0.5, params))
    small_b, large_b = coupled_occupations(evaluation_points(params)[0], geom, large, params,
                                           WalkConfig(1e-3, 64.0, 10_000, seed), workers)
    checks["coupled_monotonicity"] = bool(np.all(small_b.occupation <= large_b.occupation))
    return {k: bool(v) for k, v in checks.items()}


def _cmd_validate(cfg: RunConfig) -> dict:
    return validation_checks(cfg.params, cfg.seed, cfg.workers)


_DISPATCH = {"sweep": _cmd_sweep, "kernel": _cmd_kernel, "validate": _cmd_validate}


def run(cfg: RunConfig) -> int:
    """Execute the configured command; 0 iff every executed check passes."""
    start = time.perf_counter()
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        checks = _DISPATCH[cfg.command](cfg)
    except Exception as exc:  # any module error becomes a structured message and nonzero exit
        _report_error(exc)
        return EXIT_RUNTIME
    manifest = Manifest(__version__, cfg.command, cfg.to_dict(), cfg.seed, time.perf_counter() - start, checks)
    (cfg.output_dir / "manifest.json").write_text(manifest.to_json() + "\n")
    failed = [k for k, v in checks.items() if not v]
    for k in failed:
        log.warning("check failed: %s", k)
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _report_error(exc: Exception):
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kinharnack", description="Harnack counterexample experiments for the "
                                 "fractional Kolmogorov equation.")
    ap.add_argument("config", nargs="?", type=Path, help="key = value configuration file")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a configuration key (section.key inside a section); repeatable")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        text = args.config.read_text() if args.config else ""
        cfg = parse_config(text, args.overrides)
    except (ConfigError, OSError) as exc:
        _report_error(exc)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
