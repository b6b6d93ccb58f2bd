"""Command-line front end: ``analyze``, ``simulate`` and ``sweep``.

Exit codes: 0 success, 2 configuration error, 3 a Hopf hypothesis fails,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import expr as ex
from . import spectral as sp
from .bifcoef import BifurcationResult, bifurcation_result
from .hopf import HopfError, HopfReport, full_report
from .mocsim import BlowUpError, SimConfig, SimConfigError, default_t_end, measure_amplitude_law, run, seed_orbit
from .model import SpecError, SystemSpec, builtin_example

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_NUMERICAL = 0, 2, 3, 4

DEFAULTS = {
    "grid_n": 512,
    "k_max": 20,
    "dx": 1.0 / 400,
    "cfl": 0.9,
    "lambda_range": [0.0, 3.0],
    "region": {"re": [-3.0, 1.0], "im": [-16.0, 16.0]},
    "probes": [0.0, 0.5, 1.0],
}

_TOP_KEYS = {"system", "builtin", "analysis", "simulation", "sweep"}
_SYSTEM_KEYS = {"n", "m", "speeds", "rhs", "reflection", "params", "name", "anchor"}
_BUILTIN_KEYS = {"name", "gamma"}
_ANALYSIS_KEYS = {"lambda_range", "region", "k_max", "grid_n"}
_REGION_KEYS = {"re", "im"}
_SIM_KEYS = {"lambda", "lambda_offset", "dx", "cfl", "t_end", "initial", "probes", "forcing"}
_SWEEP_KEYS = {"offsets", "t_end", "dx", "cfl"}


class ConfigError(ValueError):
    pass


class HypothesisFailure(Exception):
    def __init__(self, names):
        super().__init__(", ".join(names))
        self.names = list(names)


# ------------------------------------------------------------------ config


def _check_keys(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path} is not valid JSON: {err}") from err
    _check_keys(doc, _TOP_KEYS, "config")
    if ("system" in doc) == ("builtin" in doc):
        raise ConfigError("config needs exactly one of 'system' or 'builtin'")
    if "system" in doc:
        _check_keys(doc["system"], _SYSTEM_KEYS, "system")
    else:
        _check_keys(doc["builtin"], _BUILTIN_KEYS, "builtin")
    if "analysis" in doc:
        _check_keys(doc["analysis"], _ANALYSIS_KEYS, "analysis")
        if "region" in doc["analysis"]:
            _check_keys(doc["analysis"]["region"], _REGION_KEYS, "analysis.region")
    if "simulation" in doc:
        _check_keys(doc["simulation"], _SIM_KEYS, "simulation")
        init = doc["simulation"].get("initial")
        if isinstance(init, dict):
            _check_keys(init, {"seed_orbit"}, "simulation.initial")
            _check_keys(init["seed_orbit"], {"epsilon"}, "simulation.initial.seed_orbit")
    if "sweep" in doc:
        _check_keys(doc["sweep"], _SWEEP_KEYS, "sweep")
    return doc


def build_spec(doc: dict) -> SystemSpec:
    try:
        if "builtin" in doc:
            b = doc["builtin"]
            if b.get("name") != "example_sec6":
                raise ConfigError(f"unknown builtin system {b.get('name')!r}")
            return builtin_example(float(b.get("gamma", -1.0)))
        s = doc["system"]
        missing = [k for k in ("n", "m", "speeds", "rhs", "reflection") if k not in s]
        if missing:
            raise ConfigError(f"system is missing {', '.join(missing)}")
        anchor = s.get("anchor")
        if anchor is not None:
            anchor = (int(anchor[0]) - 1, float(anchor[1]))
        return SystemSpec.from_strings(
            n=int(s["n"]), m=int(s["m"]), speeds=s["speeds"], rhs=s["rhs"],
            reflection=s["reflection"], params=s.get("params", {}),
            name=s.get("name", "system"), anchor=anchor,
        )
    except (SpecError, ex.ExprError) as err:
        raise ConfigError(f"system: {err}") from err
    except (TypeError, ValueError, IndexError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"system: malformed entry ({err})") from err


def _analysis_settings(doc: dict) -> dict:
    a = doc.get("analysis", {})
    region = a.get("region", DEFAULTS["region"])
    out = {
        "lambda_range": [float(v) for v in a.get("lambda_range", DEFAULTS["lambda_range"])],
        "region": ([float(v) for v in region.get("re", DEFAULTS["region"]["re"])],
                   [float(v) for v in region.get("im", DEFAULTS["region"]["im"])]),
        "k_max": int(a.get("k_max", DEFAULTS["k_max"])),
        "grid_n": int(a.get("grid_n", DEFAULTS["grid_n"])),
    }
    lo, hi = out["lambda_range"]
    if not lo < hi:
        raise ConfigError("analysis.lambda_range must be increasing")
    for name, (a0, a1) in zip(("re", "im"), out["region"]):
        if not a0 < a1:
            raise ConfigError(f"analysis.region.{name} must be increasing")
    if out["grid_n"] < 64:
        raise ConfigError("analysis.grid_n must be at least 64")
    return out


# ------------------------------------------------------------------ output


def _write(path: Path, text: str):
    """Atomic write with LF line endings."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(value) -> str:
    if isinstance(value, bool) or value is None:
        return str(value).lower() if isinstance(value, bool) else "null"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


def format_report(doc: dict) -> str:
    """Human-readable rendering of a report document (as stored in report.json)."""
    lines = [f"system: {doc['system']['name']}"]
    h = doc["hopf"]
    lines.append(f"lambda0: {_fmt(h['lambda0'])}")
    lines.append(f"omega0: {_fmt(h['omega0'])}")
    for key in ("model_hypotheses", "geometric_simplicity", "algebraic_simplicity", "transversality",
                "nonresonance", "dissipativity"):
        sec = h[key]
        detail = ", ".join(f"{k}={_fmt(v)}" for k, v in sec.items() if k != "ok")
        lines.append(f"{key}: {'pass' if sec['ok'] else 'FAIL'} ({detail})")
    lines.append(f"verdict: {'pass' if h['verdict'] else 'FAIL'}")
    b = doc.get("bifurcation")
    if b:
        for key in ("alpha", "beta", "beta_rescaled", "curvature", "direction", "bifurcating_side", "v0_max"):
            lines.append(f"{key}: {_fmt(b[key])}")
        lines.append(f"conventions: {b['conventions']}")
    return "\n".join(lines) + "\n"


def _to_builtin(obj):
    if isinstance(obj, dict):
        return {k: _to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_builtin(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _spectrum_csv(spec: SystemSpec, lam0: float, region) -> str:
    re, im = region
    pairs = None
    for shift in (0.0, 1e-3, -2e-3, 5e-3):
        try:
            q = sp.SpectrumQuery(lam0, (re[0] + shift, re[1] + shift), (im[0] + shift, im[1] - shift))
            pairs = sp.find_eigenvalues(spec, q)
            break
        except sp.BoundaryTooCloseError:
            continue
    if pairs is None:
        raise sp.BoundaryTooCloseError("spectrum region boundary passes through eigenvalues")
    rows = ["re_mu,im_mu,winding"] + [f"{float(p.mu.real)!r},{float(p.mu.imag)!r},{p.winding_multiplicity}" for p in pairs]
    return "\n".join(rows) + "\n"


def _eigenfunction_csv(pair: sp.EigenPair) -> str:
    rows = ["function,x,component,re,im"]
    for label, g in (("v0", pair.v), ("w0", pair.w)):
        for j in range(g.n):
            for x, val in zip(g.x, g.values[j]):
                rows.append(f"{label},{float(x)!r},{j + 1},{float(val.real)!r},{float(val.imag)!r}")
    return "\n".join(rows) + "\n"


class _Out:
    def __init__(self, args):
        self.quiet = args.quiet
        self.json = args.json

    def text(self, s: str):
        if not self.quiet and not self.json:
            sys.stdout.write(s)

    def machine(self, doc: dict):
        if self.json and not self.quiet:
            sys.stdout.write(json.dumps(doc, indent=2, sort_keys=False) + "\n")


# ---------------------------------------------------------------- commands


def _analyze(spec: SystemSpec, settings: dict) -> tuple[HopfReport, BifurcationResult | None, dict]:
    report = full_report(spec, settings["lambda_range"], settings["region"], settings["k_max"], settings["grid_n"])
    result = bifurcation_result(spec, report) if report.verdict else None
    doc = {
        "system": {"name": spec.name, **spec.to_config()},
        "hopf": report.to_dict(),
        "bifurcation": result.to_dict() if result is not None else None,
    }
    return report, result, _to_builtin(doc)


def cmd_analyze(args) -> int:
    doc = load_config(args.config)
    spec = build_spec(doc)
    settings = _analysis_settings(doc)
    out_dir = Path(args.out)
    report, result, rep = _analyze(spec, settings)
    _write(out_dir / "report.json", json.dumps(rep, indent=2) + "\n")
    _write(out_dir / "spectrum.csv", _spectrum_csv(spec, report.lambda0, settings["region"]))
    _write(out_dir / "eigenfunction.csv", _eigenfunction_csv(report.pair))
    out = _Out(args)
    out.text(format_report(rep))
    out.machine(rep)
    if not report.verdict:
        raise HypothesisFailure(report.failed)
    return EXIT_OK


def _sim_config(doc: dict, spec: SystemSpec, need_result) -> tuple[SimConfig, BifurcationResult | None]:
    s = doc.get("simulation")
    if s is None:
        raise ConfigError("config has no 'simulation' section")
    init = s.get("initial")
    if init is None:
        raise ConfigError("simulation.initial is required")
    seeded = isinstance(init, dict)
    result = None
    if seeded or "lambda_offset" in s:
        result = need_result()
    if ("lambda" in s) == ("lambda_offset" in s):
        raise ConfigError("simulation needs exactly one of 'lambda' or 'lambda_offset'")
    lam = float(s["lambda"]) if "lambda" in s else result.lambda0 + float(s["lambda_offset"])
    dx = float(s.get("dx", DEFAULTS["dx"]))
    N = round(1 / dx)
    x = np.linspace(0.0, 1.0, N + 1)
    if seeded:
        eps = init["seed_orbit"].get("epsilon", "auto")
        if eps == "auto":
            eps = result.epsilon(lam)
            if math.isnan(eps):
                raise ConfigError("epsilon 'auto' needs lambda on the bifurcating side")
        initial = seed_orbit(result, float(eps), x)
    else:
        try:
            initial = [ex.parse(str(e), ["x", "lambda", *spec.params]) for e in init]
        except ex.ExprError as err:
            raise ConfigError(f"simulation.initial: {err}") from err
    forcing = None
    if "forcing" in s:
        try:
            forcing = [ex.parse(str(e), ["x", "t", "lambda", *spec.params]) for e in s["forcing"]]
        except ex.ExprError as err:
            raise ConfigError(f"simulation.forcing: {err}") from err
    if "t_end" in s:
        t_end = float(s["t_end"])
    elif result is not None:
        t_end = default_t_end(result, lam - result.lambda0)
    else:
        t_end = 100.0
    try:
        cfg = SimConfig(spec=spec, lam=lam, t_end=t_end, initial=initial, dx=dx,
                        cfl=float(s.get("cfl", DEFAULTS["cfl"])),
                        probes=tuple(float(p) for p in s.get("probes", DEFAULTS["probes"])),
                        forcing=forcing, omega_hint=result.omega0 if result is not None else None)
    except SimConfigError as err:
        raise ConfigError(f"simulation: {err}") from err
    return cfg, result


def _result_loader(doc, spec):
    cache = {}

    def get():
        if "r" not in cache:
            report, result, _ = _analyze(spec, _analysis_settings(doc))
            if result is None:
                raise HypothesisFailure(report.failed)
            cache["r"] = result
        return cache["r"]

    return get


def cmd_simulate(args) -> int:
    doc = load_config(args.config)
    spec = build_spec(doc)
    cfg, result = _sim_config(doc, spec, _result_loader(doc, spec))
    ts = run(cfg)
    m = ts.measure()
    out_dir = Path(args.out)
    _write(out_dir / "timeseries.csv", ts.to_csv())
    summary = f"lambda={cfg.lam!r}\ndt={cfg.dt!r}\nsamples={ts.t.size}\n" + m.summary()
    _write(out_dir / "measure.txt", summary)
    out = _Out(args)
    out.text(summary)
    out.machine({"lambda": cfg.lam, "dt": cfg.dt, "samples": int(ts.t.size),
                 **_to_builtin({k: getattr(m, k) for k in ("probe_x", "component", "amplitude", "frequency",
                                                           "rate", "drift", "mean")})})
    return EXIT_OK


def _parse_offsets(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise ConfigError(f"bad --offsets value: {err}") from err


def cmd_sweep(args) -> int:
    doc = load_config(args.config)
    spec = build_spec(doc)
    sweep = doc.get("sweep", {})
    offsets = _parse_offsets(args.offsets) if args.offsets is not None else [float(o) for o in sweep.get("offsets", [])]
    if not offsets:
        raise ConfigError("no offsets given")
    result = _result_loader(doc, spec)()
    law = measure_amplitude_law(spec, result, offsets, dx=float(sweep.get("dx", DEFAULTS["dx"])),
                                cfl=float(sweep.get("cfl", DEFAULTS["cfl"])),
                                t_end=float(sweep["t_end"]) if "t_end" in sweep else None, jobs=args.jobs)
    _write(Path(args.out) / "amplitude_law.csv", law.to_csv())
    out = _Out(args)
    out.text(law.to_csv() + f"fitted_exponent={law.exponent!r}\nfitted_prefactor={law.prefactor!r}\n")
    out.machine({"exponent": law.exponent, "prefactor": law.prefactor, "omega0": law.omega0,
                 "rows": [_to_builtin(r.__dict__) for r in law.rows]})
    return EXIT_OK


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperhopf", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON configuration file")
    common.add_argument("--out", default="./out", help="output directory (default ./out)")
    common.add_argument("--quiet", action="store_true", help="suppress stdout")
    common.add_argument("--json", action="store_true", help="print the machine report only")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="check hypotheses, compute alpha and beta")
    sub.add_parser("simulate", parents=[common], help="run the time-domain simulator")
    p = sub.add_parser("sweep", parents=[common], help="measure the amplitude law")
    p.add_argument("--offsets", help="comma-separated lambda offsets from lambda0")
    p.add_argument("--jobs", type=int, default=1, help="concurrent simulations")
    return parser


_COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisFailure as err:
        print(f"hypothesis failed: {err}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except HopfError as err:
        print(f"hypothesis failed: {err.hypothesis}: {err}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (sp.SpectralError, BlowUpError, FloatingPointError, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
