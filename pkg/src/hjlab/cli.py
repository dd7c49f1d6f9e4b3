"""Command-line orchestrator: ``hjlab {profile,vss,evolve,verify,trace,sweep}``.

A run is described by one JSON document (see ``config.schema.json``); flags
override its fields.  Exit codes: 0 pass, 1 check failure or divergence,
2 configuration error.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigurationError, DivergenceError, HJLabError, InvalidParameterError, RegimeError
from .estimates import (
    check_boundary_rate,
    check_gradient_bound,
    check_growth_bound,
    check_lower_rates,
    check_mass_dissipation,
    check_off_support_decay,
    check_profile_invariants,
)
from .profiles import ShootingConfig, save_profile, solve_halfspace_profile, solve_vss_profile
from .scaling import scaling_params
from .solver import Grid, InitialData, Trajectory, run, signed_run
from .trace import REGULAR, UNDECIDED, classify_points, estimate_regular_part, q_le_1_trace_boundedness

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
COMMANDS = ("profile", "vss", "evolve", "verify", "trace", "sweep")
CHECKS = ("versa", "pluc", "ita", "expo", "nej", "fer", "mass", "boundary_rate", "pai_visa")
NEEDS_RUN = ("evolve", "verify", "trace")

# used for sections a run needs but the config leaves out: the half-line
# problem u0 = +inf on x > 0, truncated at 1e2 < 1e3 < 1e4
DEFAULT_RUN = {
    "grid": {"geometry": "cartesian1d", "x_min": -4.0, "x_max": 6.0, "n_cells": 1001},
    "initial": {"kind": "infinite_on", "intervals": [[0.0, "inf"]], "ladder": [1e2, 1e3, 1e4]},
    "time": {"t_end": 0.25, "t_min": 1e-3, "ratio": 1.3},
}


class ConfigError(ConfigurationError):
    """Every violation found while building a RunConfig."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{e['field']}: {e['message']}" for e in self.errors))


def _err(field, message):
    return {"field": field, "message": message}


def schema() -> dict:
    return json.loads(resources.files("hjlab").joinpath("config.schema.json").read_text())


# ---------------------------------------------------------------------------
# parsing


def parse_values(text: str) -> list[float]:
    """``"1.2:0.1:1.9"`` (inclusive range), ``"1,2,3"`` or a single number."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range {text!r} must be start:step:stop")
        a, step, b = (float(s) for s in parts)
        if not step > 0 or b < a:
            raise ValueError(f"range {text!r} needs step > 0 and stop >= start")
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        # rounding keeps 1.2 + 3*0.1 from printing as 1.5000000000000002
        return [round(a + k * step, 12) for k in range(n)]
    return [float(s) for s in text.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hjlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON run configuration")
        sp.add_argument("--q", help="exponent; for sweep also start:step:stop or a comma list")
        sp.add_argument("--dim", type=int, help="space dimension N")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--checks", "--check", dest="checks", help="comma-separated check ids")
        sp.add_argument("--jobs", type=int, help="worker processes (default: available CPUs)")
        sp.add_argument("--json-errors", action="store_true", help="print violations as JSON on stdout")
        sp.add_argument("--eta-min", type=float)
        sp.add_argument("--eta-max", type=float)
        sp.add_argument("--run", dest="run_dir", type=Path, help="existing trajectory directory (verify, trace)")
    return ap


def _apply_flags(cfg: dict, ns: argparse.Namespace, errors: list) -> dict:
    cfg["command"] = ns.command
    params = cfg.setdefault("params", {})
    if ns.q is not None:
        try:
            values = parse_values(ns.q)
        except ValueError as exc:
            errors.append(_err("--q", str(exc)))
            values = []
        if ns.command == "sweep":
            cfg.setdefault("sweep", {})["q"] = values
            if values:
                params["q"] = values[0]
        elif len(values) == 1:
            params["q"] = values[0]
        elif values:
            errors.append(_err("--q", "a list of q values is only meaningful for sweep"))
    if ns.dim is not None:
        params["N"] = ns.dim
    if ns.checks is not None:
        cfg["checks"] = [c.strip() for c in ns.checks.split(",") if c.strip()]
    if ns.jobs is not None:
        cfg["jobs"] = ns.jobs
    if ns.out is not None:
        cfg["out"] = str(ns.out)
    if ns.run_dir is not None:
        cfg["run_dir"] = str(ns.run_dir)
    for key in ("eta_min", "eta_max"):
        v = getattr(ns, key)
        if v is not None:
            cfg.setdefault("profile", {})[key] = v
    if "sweep" in cfg and "q" in cfg["sweep"] and "q" not in params and cfg["sweep"]["q"]:
        params["q"] = cfg["sweep"]["q"][0]
    return cfg


def _schema_errors(cfg: dict) -> list:
    out = []
    validator = jsonschema.Draft202012Validator(schema())
    for e in sorted(validator.iter_errors(cfg), key=lambda e: (list(map(str, e.absolute_path)), e.message)):
        path = ".".join(str(p) for p in e.absolute_path)
        if e.validator == "required":
            missing = [k for k in e.validator_value if k not in e.instance]
            for k in missing:
                out.append(_err(f"{path}.{k}" if path else k, "required field is missing"))
        else:
            out.append(_err(path or "<root>", e.message))
    return out


def _semantic_errors(cfg: dict) -> list:
    out = []
    cmd = cfg.get("command")
    job = cfg.get("sweep", {}).get("job", _default_job(cfg)) if cmd == "sweep" else cmd
    if job in NEEDS_RUN and not (job != "evolve" and "run_dir" in cfg) and "t_end" not in cfg.get("time", {}):
        out.append(_err("time.t_end", f"required for {job}"))
    if job == "verify" and not cfg.get("checks"):
        out.append(_err("checks", "verify needs at least one check"))
    if job == "trace" and "points" not in cfg.get("trace", {}):
        out.append(_err("trace.points", "required for trace"))
    grid = cfg.get("grid", {})
    if grid.get("geometry") == "cartesian1d" and "x_min" not in grid:
        out.append(_err("grid.x_min", "required for cartesian1d grids"))
    init = cfg.get("initial", {})
    kind = init.get("kind")
    need = {"function": ["values"], "gaussian": ["amplitude", "sigma"], "indicator": ["intervals", "height"],
            "infinite_on": ["intervals", "ladder"]}.get(kind, [])
    for key in need:
        if key not in init:
            out.append(_err(f"initial.{key}", f"required for {kind} data"))
    if cmd == "sweep" and not any(cfg.get("sweep", {}).get(k) for k in ("q", "masses", "ladder_heights")):
        out.append(_err("sweep", "needs at least one non-empty axis (q, masses, ladder_heights)"))
    return out


def _apply_defaults(cfg: dict) -> None:
    cmd = cfg["command"]
    job = cfg.get("sweep", {}).get("job", _default_job(cfg)) if cmd == "sweep" else cmd
    if job not in NEEDS_RUN or (job != "evolve" and "run_dir" in cfg):
        return
    if "grid" not in cfg and "initial" not in cfg:
        cfg["grid"] = copy.deepcopy(DEFAULT_RUN["grid"])
        cfg["initial"] = copy.deepcopy(DEFAULT_RUN["initial"])
    if "time" not in cfg:
        cfg["time"] = copy.deepcopy(DEFAULT_RUN["time"])


def _default_job(cfg: dict) -> str:
    return "verify" if cfg.get("checks") else "evolve"


def parse_config(argv=None) -> dict:
    """Flags (and an optional ``--config`` file) to a validated RunConfig dict.

    Raises ConfigError carrying every violation, not just the first.
    """
    ns = build_parser().parse_args(argv)
    errors: list = []
    cfg: dict = {}
    if ns.config is not None:
        try:
            cfg = json.loads(Path(ns.config).read_text())
        except FileNotFoundError:
            errors.append(_err("--config", f"file not found: {ns.config}"))
        except json.JSONDecodeError as exc:
            errors.append(_err("--config", f"invalid JSON: {exc}"))
        if not isinstance(cfg, dict):
            errors.append(_err("--config", "top level must be an object"))
            cfg = {}
    cfg = _apply_flags(cfg, ns, errors)
    _apply_defaults(cfg)
    errors += _schema_errors(cfg)
    try:
        errors += _semantic_errors(cfg)
    except (AttributeError, TypeError):
        pass  # malformed sections are already reported by the schema pass
    if errors:
        raise ConfigError(errors)
    return _resolve_paths(cfg)


def _resolve_paths(cfg: dict) -> dict:
    cfg = copy.deepcopy(cfg)
    cfg["out"] = str(Path(cfg.get("out", f"hjlab_{cfg['command']}")).resolve())
    if "run_dir" in cfg:
        cfg["run_dir"] = str(Path(cfg["run_dir"]).resolve())
    return cfg


# ---------------------------------------------------------------------------
# building objects from a config


def _ext(v) -> float:
    return float(v) if not isinstance(v, str) else (math.inf if v == "inf" else -math.inf)


def make_grid(cfg: dict) -> Grid:
    g = cfg["grid"]
    N = cfg["params"].get("N", 1)
    if g["geometry"] == "radial":
        return Grid.radial(g["x_max"], g["n_cells"], N)
    if N != 1:
        raise ConfigError([_err("params.N", "cartesian1d grids need N = 1; use a radial grid")])
    return Grid.cartesian(g["x_min"], g["x_max"], g["n_cells"])


def make_initial(cfg: dict, grid: Grid) -> InitialData:
    d = cfg["initial"]
    kind = d["kind"]
    if kind == "function":
        values = np.asarray(d["values"], dtype=float)
        if values.size != grid.x.size:
            raise ConfigError([_err("initial.values", f"has {values.size} entries, grid has {grid.x.size} nodes")])
        return InitialData.function(values)
    if kind == "gaussian":
        c, s = d.get("center", 0.0), d["sigma"]
        return InitialData.function(d["amplitude"] * np.exp(-((grid.x - c) / s) ** 2))
    if kind == "dirac":
        return InitialData.dirac(mass=d.get("mass", 1.0), width=d.get("width"), center=d.get("center", 0.0),
                                 ladder=d.get("ladder"))
    intervals = [(_ext(a), _ext(b)) for a, b in d["intervals"]]
    if kind == "indicator":
        return InitialData.indicator(intervals, d["height"])
    return InitialData.infinite_on(intervals, d["ladder"])


def _intervals(cfg: dict, traj: Trajectory | None = None):
    ivs = cfg.get("initial", {}).get("intervals")
    if ivs is None and traj is not None:
        # a loaded run remembers the data it was started from
        ivs = (traj.metadata.get("initial_data") or {}).get("intervals")
    return [(_ext(a), _ext(b)) for a, b in ivs or []]


def evolve(cfg: dict) -> Trajectory:
    grid = make_grid(cfg)
    spec = make_initial(cfg, grid)
    t = cfg["time"]
    opts = {k: t[k] for k in ("dt_rel", "dt_max") if k in t}
    for key in ("scheme", "diffusion"):
        if key in cfg:
            opts[key] = cfg[key]
    q = cfg["params"]["q"]
    kw = dict(t_min=t.get("t_min", 1e-4), ratio=t.get("ratio", 1.3), **opts)
    if cfg.get("signed", False):
        return signed_run(grid, spec, q, t["t_end"], **kw)
    return run(grid, spec, q, t["t_end"], **kw)


def _trajectory(cfg: dict, out: Path) -> Trajectory:
    if "run_dir" in cfg and cfg["command"] != "evolve":
        return Trajectory.load(cfg["run_dir"])
    traj = evolve(cfg)
    traj.save(out / "run")
    return traj


def _tuples(opts: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in opts.items()}


def _dirichlet_margin(traj: Trajectory) -> tuple[float, float]:
    """Default audit window: drop a band of width 6√t_end next to each Dirichlet end."""
    g = traj.grid
    band = min(6.0 * math.sqrt(float(traj.times[-1])), 0.25 * (g.x_max - g.x_min))
    lo = g.x_min if g.is_radial else g.x_min + band
    return lo, g.x_max - band


def run_check(name: str, traj: Trajectory | None, cfg: dict):
    p = scaling_params(cfg["params"]["q"], cfg["params"].get("N", 1))
    opts = _tuples(cfg.get("check_options", {}).get(name, {}))
    intervals = _intervals(cfg, traj)
    try:
        if name == "pai_visa":
            return check_profile_invariants(solve_halfspace_profile(p, _shooting(cfg)))
        if name == "mass":
            return check_mass_dissipation(traj, **opts)
        if name == "versa":
            opts.setdefault("x_range", _dirichlet_margin(traj))
            return check_gradient_bound(traj, p, **opts)
        if name == "pluc":
            return check_growth_bound(traj, p, **opts)
        if name in ("ita", "expo"):
            opts.setdefault("support", intervals)
            if name == "ita":
                opts.pop("x0", None)
            return check_off_support_decay(traj, **opts)
        if name == "nej":
            opts.setdefault("singular_set", intervals)
            return check_lower_rates(traj, p, mode="interior", **opts)
        if name == "fer":
            return check_lower_rates(traj, p, mode="point", **opts)
        if name == "boundary_rate":
            if "boundary_point" not in opts:
                ends = [e for iv in intervals for e in iv if math.isfinite(e)]
                if not ends:
                    raise ConfigError([_err("check_options.boundary_rate.boundary_point", "required")])
                opts["boundary_point"] = ends[0]
            return check_boundary_rate(traj, p, **opts)
    except TypeError as exc:
        raise ConfigError([_err(f"check_options.{name}", str(exc))]) from exc
    raise ConfigError([_err("checks", f"unknown check {name!r}")])


def _shooting(cfg: dict) -> ShootingConfig:
    prof = cfg.get("profile", {})
    return ShootingConfig(**{k: prof[k] for k in ("eta_min", "eta_max", "rtol") if k in prof})


# ---------------------------------------------------------------------------
# jobs


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _job_profile(cfg: dict, out: Path) -> dict:
    p = scaling_params(cfg["params"]["q"], cfg["params"].get("N", 1))
    if cfg["command"] == "vss":
        prof = solve_vss_profile(p, _shooting(cfg))
        save_profile(prof, out / "vss")
    else:
        prof = solve_halfspace_profile(p, _shooting(cfg))
        save_profile(prof, out / "profile")
    return {"pass": True, "f0": prof.f0, "shooting_parameter": prof.shooting_parameter,
            "tail_constant": prof.tail_constant, "growth_constant": prof.growth_constant}


def _job_evolve(cfg: dict, out: Path) -> dict:
    traj = _trajectory(cfg, out)
    return {"pass": True, "steps": traj.metadata.get("steps"), "n_snapshots": int(traj.times.size),
            "final_mass": float(traj.mass[-1]) if traj.mass is not None else None}


def _job_verify(cfg: dict, out: Path) -> dict:
    needs_traj = any(c != "pai_visa" for c in cfg["checks"])
    traj = _trajectory(cfg, out) if needs_traj else None
    reports = [run_check(name, traj, cfg).to_dict() for name in cfg["checks"]]
    _dump(out / "checks.json", reports)
    failed = [r["check_id"] for r in reports if not r["pass"]]
    return {"pass": not failed, "failed": failed, "checks": {r["check_id"]: r["pass"] for r in reports}}


def _job_trace(cfg: dict, out: Path) -> dict:
    traj = _trajectory(cfg, out)
    tr = cfg["trace"]
    h = traj.grid.spacing
    eps = tr.get("epsilons", [max(5 * h, 0.05)])
    window = tuple(tr["t_window"]) if "t_window" in tr else None
    q = cfg["params"]["q"]
    p = scaling_params(q, cfg["params"].get("N", 1)) if q > 1 else None
    report = classify_points(traj, tr["points"], eps, window, p=p)
    report.to_csv(out / "trace.csv")
    result = report.to_dict()
    if "mass_region" in tr:
        reg = estimate_regular_part(traj, tr["mass_region"], t_window=window)
        result["regular_mass"] = {"region": tr["mass_region"], "mass": reg.mass, "initial_mass": traj.initial_mass,
                                  "cauchy": reg.cauchy, "status": reg.status}
    if q <= 1:
        result["q_le_1"] = q_le_1_trace_boundedness(traj, tr["points"], eps, window).to_dict()
    _dump(out / "trace.json", result)
    labels = {str(pt["x"]): pt["classification"] for pt in result["points"]}
    return {"pass": UNDECIDED not in labels.values(), "classifications": labels,
            "all_regular": all(v == REGULAR for v in labels.values()),
            "regular_mass": result.get("regular_mass", {}).get("mass")}


JOBS = {"profile": _job_profile, "vss": _job_profile, "evolve": _job_evolve, "verify": _job_verify,
        "trace": _job_trace}


def run_job(cfg: dict) -> tuple[int, dict]:
    """Run one non-sweep job into ``cfg["out"]``; returns (exit code, report)."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "FAILED").unlink(missing_ok=True)
    _dump(out / "config.json", {k: v for k, v in cfg.items() if k not in ("out", "run_dir", "jobs")})
    base = {"command": cfg["command"], "q": cfg["params"]["q"], "N": cfg["params"].get("N", 1)}
    try:
        report = {**base, **JOBS[cfg["command"]](cfg, out)}
        code = EXIT_PASS if report["pass"] else EXIT_FAIL
    except ConfigError as exc:
        report, code = {**base, "pass": False, "errors": exc.errors}, EXIT_CONFIG
    except (InvalidParameterError, RegimeError, ConfigurationError) as exc:
        report, code = {**base, "pass": False, "errors": [_err(type(exc).__name__, str(exc))]}, EXIT_CONFIG
    except (DivergenceError, HJLabError, FloatingPointError) as exc:
        report, code = {**base, "pass": False, "errors": [_err(type(exc).__name__, str(exc))]}, EXIT_FAIL
        (out / "FAILED").write_text(f"{type(exc).__name__}: {exc}\n")
    report["exit_code"] = code
    _dump(out / "report.json", report)
    return code, _plain(report)


def _timed_job(cfg: dict):
    t0 = time.perf_counter()
    code, report = run_job(cfg)
    return code, report, time.perf_counter() - t0


def expand_sweep(cfg: dict) -> list[dict]:
    """One config per point of the q × masses × ladder_heights product."""
    sw = cfg.get("sweep", {})
    job = sw.get("job", _default_job(cfg))
    qs = sw.get("q") or [cfg["params"]["q"]]
    masses = sw.get("masses") or [None]
    heights = sw.get("ladder_heights") or [None]
    out = Path(cfg["out"])
    jobs = []
    for k, (q, m, hgt) in enumerate(itertools.product(qs, masses, heights)):
        c = copy.deepcopy({key: v for key, v in cfg.items() if key not in ("sweep", "jobs")})
        c["command"] = job
        c["params"]["q"] = q
        name = f"job{k:03d}_q{q:g}"
        init = c.get("initial")
        if m is not None and init is not None and init["kind"] == "dirac":
            init.pop("ladder", None)
            init["mass"] = m
            name += f"_m{m:g}"
        if hgt is not None and init is not None:
            if init["kind"] == "infinite_on":
                init["ladder"] = [hgt]
            else:
                init["height"] = hgt
            name += f"_h{hgt:g}"
        c["out"] = str(out / name)
        c["name"] = name
        jobs.append(c)
    return jobs


def run_sweep(cfg: dict) -> tuple[int, dict]:
    """Run every sweep point on a worker pool; writes ``summary.json`` and ``timings.json``."""
    jobs = expand_sweep(cfg)
    workers = cfg.get("jobs") or os.cpu_count() or 1
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    named = [(c.pop("name"), c) for c in jobs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_timed_job, [c for _, c in named]))
    else:
        results = [_timed_job(c) for _, c in named]
    entries = [{"name": name, "exit_code": code, "pass": rep["pass"], "report": rep}
               for (name, _), (code, rep, _) in zip(named, results)]
    codes = [e["exit_code"] for e in entries]
    code = EXIT_CONFIG if EXIT_CONFIG in codes else (EXIT_FAIL if EXIT_FAIL in codes else EXIT_PASS)
    summary = {"jobs": entries, "pass": code == EXIT_PASS, "n_jobs": len(entries),
               "n_failed": sum(1 for e in entries if not e["pass"])}
    timings = {"wall_seconds": {name: dt for (name, _), (_, _, dt) in zip(named, results)}, "workers": workers}
    if cfg.get("deterministic", True) is False:
        summary["metadata"] = {"timings": timings}
    _dump(out / "summary.json", summary)
    _dump(out / "timings.json", timings)
    return code, summary


def dispatch(cfg: dict) -> int:
    if cfg["command"] == "sweep":
        return run_sweep(cfg)[0]
    return run_job(cfg)[0]


def _report_errors(errors, as_json: bool) -> None:
    if as_json:
        print(json.dumps({"errors": errors}, indent=2, sort_keys=True))
    else:
        for e in errors:
            print(f"hjlab: config error: {e['field']}: {e['message']}", file=sys.stderr)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    as_json = "--json-errors" in argv
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        _report_errors(exc.errors, as_json)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_CONFIG if exc.code else EXIT_PASS
    code = dispatch(cfg)
    if code == EXIT_CONFIG:
        report = json.loads((Path(cfg["out"]) / ("summary.json" if cfg["command"] == "sweep" else "report.json")).read_text())
        errs = report.get("errors") or [e for j in report.get("jobs", []) for e in j["report"].get("errors", [])]
        _report_errors(errs, as_json)
    return code


if __name__ == "__main__":
    sys.exit(main())
