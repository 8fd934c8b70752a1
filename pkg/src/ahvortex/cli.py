"""Command-line front end: config resolution, run orchestration and output bundles.

Subcommands: ``validate-coupling``, ``solve``, ``oracle-radial``, ``sweep`` and
``thermo``. A run writes ``<outdir>/manifest.json``, ``report.json``,
``fields/*.csv`` and (plane runs with sources) ``shells.csv``.

Exit codes: 0 success, 1 configuration error, 2 Bradlow violation,
3 no convergence, 4 failed coupling checks.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .coupling import check_plane_conditions, model_from_selector, validate_coupling
from .diagnostics import full_report
from .elliptic import SolverOptions, solve
from .fields import assemble_fields
from .geometry import ConfigError, DomainSpec, GridField, VortexConfiguration, load_configuration
from .oracle import ShootingError, shoot_radial
from .thermo import ThermoConfig, partition_function, write_weights_csv

EXIT_OK, EXIT_CONFIG, EXIT_BRADLOW, EXIT_NOCONV, EXIT_CHECK = 0, 1, 2, 3, 4
OUTPUT_ROOT_ENV = "AHVORTEX_OUTPUT_ROOT"
SWEEP_AXES = ("m", "grid", "M", "N", "B", "kT", "box")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "ahvortex-runs"))


@dataclass
class RunConfig:
    """Fully resolved inputs of a solve run (plain JSON-compatible values)."""

    domain: str = "torus"
    box: tuple = (5.0, 10.0)
    grid: tuple = (256, 256)
    vortices: str = ""
    model: str = "classical"
    algorithm: str = "newton"
    tol: float = 1e-9
    max_iters: Optional[int] = None
    force: bool = False
    core_scale: float = 1.0
    branch: str = "plus"
    seed: Optional[int] = None
    out: Optional[str] = None
    emit_fields: bool = True
    emit_report: bool = True
    emit_shells: bool = True
    kT: float = 2 * math.pi
    B: float = 0.0
    n_max: int = 200

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.box = _pair(cfg.box, float, "box")
        cfg.grid = _pair(cfg.grid, int, "grid")
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["box"], d["grid"] = list(self.box), list(self.grid)
        return d

    def resolve(self):
        """Build and validate ``(DomainSpec, VortexConfiguration, model, SolverOptions)``."""
        if self.branch not in ("plus", "minus"):
            raise ConfigError(f"branch must be plus or minus, got {self.branch!r}")
        spec = DomainSpec(self.domain, tuple(self.box), tuple(self.grid))
        config = load_configuration(self.vortices).reduced(spec)
        try:
            model = model_from_selector(self.model)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        opts = SolverOptions(algorithm=self.algorithm, max_iters=self.max_iters,
                             residual_tol=float(self.tol), force=bool(self.force),
                             core_scale=float(self.core_scale))
        return spec, config, model, opts

    def canonical(self) -> "RunConfig":
        """Copy with the configuration inlined so the manifest is self-contained."""
        config = load_configuration(self.vortices)
        return replace(self, vortices=config.to_inline())

    def outdir(self) -> Path:
        if self.out:
            return Path(self.out)
        d = self.canonical().to_dict()
        d.pop("out")
        tag = hashlib.sha1(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]
        return output_root() / f"run-{tag}"


def _pair(value, typ, name):
    if isinstance(value, (int, float, str)):
        value = [value, value]
    try:
        a, b = value
        return (typ(a), typ(b))
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number or a pair, got {value!r}") from None


def load_config_file(path) -> dict:
    """Flat JSON object of config keys; a manifest is accepted and its ``run_config`` used."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    if "run_config" in data:
        data = data["run_config"]
    return data


def _initial_guess(spec: DomainSpec, seed: Optional[int]):
    if seed is None:
        return None
    rng = np.random.default_rng(seed)
    return 1e-3 * rng.standard_normal(spec.grid)


def _write_fields(outdir: Path, sol, fs) -> list:
    fdir = outdir / "fields"
    fdir.mkdir(parents=True, exist_ok=True)
    names = []
    for name, field in fs.items():
        field.to_csv(fdir / f"{name}.csv")
        names.append(name)
    GridField(sol.domain, sol.phi.values).to_csv(fdir / "phi.csv")
    names.append("phi")
    (fdir / "index.json").write_text(_dump({"fields": names}), encoding="utf-8")
    return names


def run_solve(cfg: RunConfig, quiet: bool = False) -> int:
    """Solve, assemble fields, diagnose and write the output bundle."""
    def err(msg):
        if not quiet:
            print(msg, file=sys.stderr)

    try:
        cfg = cfg.canonical()
        spec, config, model, opts = cfg.resolve()
        outdir = cfg.outdir()
        outdir.mkdir(parents=True, exist_ok=True)
    except (ConfigError, ValueError, OSError) as exc:
        err(f"configuration error: {exc}")
        return EXIT_CONFIG

    manifest = {
        "tool": "ahvortex", "version": __version__, "run_config": cfg.to_dict(),
        "resolved": {"domain": spec.to_dict(), "configuration": config.to_dict(),
                     "solver": opts.to_dict(), "model": model.name},
    }
    (outdir / "manifest.json").write_text(_dump(manifest), encoding="utf-8")

    sol = solve(spec, config, model, opts, initial=_initial_guess(spec, cfg.seed))
    shells = outdir / "shells.csv" if (cfg.emit_shells and spec.kind == "plane") else None
    report = full_report(sol, model, config, branch=cfg.branch, shells_csv=shells)
    if cfg.emit_report:
        (outdir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")

    if sol.feasibility == "bradlow_violated":
        bound = spec.area / (2 * math.pi)
        msg = (f"Bradlow bound violated: |M - N| = {abs(config.M - config.N)} but it must be "
               f"below |S|/2pi = {spec.area:g}/2pi = {bound:.2f}")
        if opts.force:
            msg += "; forced solve failed: " + "; ".join(sol.notes)
        else:
            msg += "; rerun with --force to attempt anyway"
        err(msg)
        return EXIT_BRADLOW
    if not sol.converged:
        err(f"solver did not converge (residual {sol.final_residual:.3g} after "
            f"{sol.iterations} iterations); " + "; ".join(sol.notes))
        return EXIT_NOCONV
    if cfg.emit_fields:
        _write_fields(outdir, sol, assemble_fields(sol, model, cfg.branch))
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweeps


def _line_points(count, y_frac, spec: DomainSpec):
    (o1, o2), (L1, L2) = spec.origin, spec.lengths
    # plane points stay in the middle half of the box, away from the boundary
    span = L1 if spec.kind == "torus" else 0.5 * L1
    start = o1 if spec.kind == "torus" else o1 + 0.25 * L1
    return [(start + (i + 0.5) * span / count, o2 + y_frac * L2) for i in range(count)]


def counted_configuration(M: int, N: int, spec: DomainSpec) -> str:
    """Evenly spaced vortices on one horizontal line and antivortices on another."""
    if M < 0 or N < 0:
        raise ConfigError("counts must be non-negative")
    vort = _line_points(M, 0.25 if spec.kind == "torus" else 0.375, spec) if M else []
    anti = _line_points(N, 0.75 if spec.kind == "torus" else 0.625, spec) if N else []
    return VortexConfiguration(tuple(vort), tuple(anti)).to_inline()


def sweep_point(base: RunConfig, axis: str, value, outdir: str) -> RunConfig:
    """Template with one axis set to ``value``."""
    cfg = replace(base, out=outdir)
    if axis == "m":
        cfg.model = "classical" if str(value) == "classical" else f"m:{int(value)}"
    elif axis == "grid":
        cfg.grid = _pair(value, int, "grid")
    elif axis == "box":
        cfg.box = _pair(value, float, "box")
    elif axis in ("M", "N"):
        spec = DomainSpec(cfg.domain, tuple(cfg.box), tuple(cfg.grid))
        cur = load_configuration(cfg.vortices)
        M, N = (int(value), cur.N) if axis == "M" else (cur.M, int(value))
        cfg.vortices = counted_configuration(M, N, spec)
    elif axis == "B":
        cfg.B = float(value)
    elif axis == "kT":
        cfg.kT = float(value)
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    return cfg


def _run_point(args):
    cfg, axis, value = args
    t0 = time.perf_counter()
    row = {"parameter": axis, "value": value, "chern": "", "thom": "", "energy": "",
           "residual": "", "energy_error": "", "decay_rate": "", "log_Z": ""}
    try:
        if axis in ("B", "kT"):
            spec = DomainSpec(cfg.domain, tuple(cfg.box), tuple(cfg.grid))
            tcfg = ThermoConfig(spec.area, cfg.kT, cfg.B, cfg.n_max)
            rep = partition_function(tcfg)
            Path(cfg.out).mkdir(parents=True, exist_ok=True)
            Path(cfg.out, "manifest.json").write_text(
                _dump({"tool": "ahvortex", "version": __version__, "run_config": cfg.to_dict()}))
            Path(cfg.out, "report.json").write_text(_dump(rep.to_dict()))
            code = EXIT_OK
            row.update(energy=rep.U, log_Z=rep.log_Z)
        else:
            code = run_solve(cfg, quiet=True)
            rp = Path(cfg.out) / "report.json"
            if rp.is_file():
                rep = json.loads(rp.read_text())
                row.update(chern=rep["chern_charge"], thom=rep["thom_charge_total"],
                           energy=rep["total_energy"],
                           residual=rep["residual_summary"].get("reduced_linf", ""),
                           energy_error=rep["errors"].get("energy_rel", ""),
                           decay_rate=rep["decay_rate"] if rep["decay_rate"] is not None else "")
    except (ConfigError, ValueError, OSError) as exc:
        code = EXIT_CONFIG
        row["error"] = str(exc)
    row["exit_code"] = code
    row["runtime"] = time.perf_counter() - t0
    return row


SWEEP_COLUMNS = ("parameter", "value", "exit_code", "chern", "thom", "energy", "residual",
                 "energy_error", "decay_rate", "log_Z", "runtime", "error")


def run_sweep(base: RunConfig, axis: str, values, jobs: int = 1, outdir=None) -> int:
    """One bundle per value under ``outdir/<axis>-<value>`` plus ``aggregate.csv``."""
    values = list(values)
    if axis not in SWEEP_AXES:
        print(f"configuration error: sweep axis must be one of {', '.join(SWEEP_AXES)}", file=sys.stderr)
        return EXIT_CONFIG
    if not values:
        print("configuration error: empty sweep axis", file=sys.stderr)
        return EXIT_CONFIG
    root = Path(outdir) if outdir else output_root() / f"sweep-{axis}"
    root.mkdir(parents=True, exist_ok=True)
    tasks = []
    try:
        for v in values:
            tasks.append((sweep_point(base, axis, v, str(root / f"{axis}-{v}")), axis, v))
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_point, tasks))
    else:
        rows = [_run_point(t) for t in tasks]
    with open(root / "aggregate.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, restval="")
        wr.writeheader()
        for r in rows:
            wr.writerow(r)
    failed = sum(r["exit_code"] != EXIT_OK for r in rows)
    if failed:
        print(f"{failed} of {len(rows)} sweep points failed", file=sys.stderr)
    return EXIT_CONFIG if failed == len(rows) else EXIT_OK


# ---------------------------------------------------------------------------
# other subcommands


def run_oracle(model_sel: str, multiplicity: int, r_max, tol: float, outdir) -> int:
    try:
        model = model_from_selector(model_sel)
        prof = shoot_radial(model, multiplicity, r_max=r_max, tol=tol)
    except (OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShootingError as exc:
        print(f"shooting failed: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    out = Path(outdir) if outdir else output_root() / f"oracle-{model.name}-{multiplicity}"
    out.mkdir(parents=True, exist_ok=True)
    r, v = prof.r_nodes, prof.v_values
    w = model.w_log(v)
    dv = prof.slope(r)
    dens = w * w + 0.25 * model.sF_log(v) * dv * dv
    with open(out / "profile.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["r", "v", "w", "energy_density"])
        for row in zip(r, v, w, dens):
            wr.writerow([repr(float(x)) for x in row])
    (out / "summary.json").write_text(_dump(prof.summary()), encoding="utf-8")
    return EXIT_OK


def run_validate(model_sel: str, lam, samples: int) -> int:
    try:
        model = model_from_selector(model_sel)
    except (OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    general = validate_coupling(model, samples=samples, lam=lam)
    plane = check_plane_conditions(model, samples=samples)
    print(_dump({"model": model.name, "admissibility": general.to_dict(),
                 "plane_conditions": plane.to_dict()}), end="")
    return EXIT_OK if general.passed and plane.passed else EXIT_CHECK


def run_thermo(area, kT, B, n_max, weights_csv=None, out=None) -> int:
    try:
        cfg = ThermoConfig(area, kT, B, n_max)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = _dump(partition_function(cfg).to_dict())
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    if weights_csv:
        write_weights_csv(cfg, weights_csv)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

_S = argparse.SUPPRESS


def _add_run_flags(p):
    p.add_argument("--config", help="JSON file of config keys (a manifest.json also works)")
    p.add_argument("--domain", choices=("torus", "plane"), default=_S)
    p.add_argument("--box", type=float, nargs="+", default=_S, help="side length(s)")
    p.add_argument("--grid", type=int, nargs="+", default=_S, help="grid size(s)")
    p.add_argument("--vortices", default=_S, help="inline 'v:x,y;a:x,y' string or file path")
    p.add_argument("--model", default=_S, help="classical | m:<int> | custom:<path>")
    p.add_argument("--algorithm", choices=("newton", "picard", "monotone"), default=_S)
    p.add_argument("--tol", type=float, default=_S)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=_S)
    p.add_argument("--force", action="store_true", default=_S)
    p.add_argument("--branch", choices=("plus", "minus"), default=_S)
    p.add_argument("--seed", type=int, default=_S)
    p.add_argument("--out", default=_S)
    p.add_argument("--no-fields", dest="emit_fields", action="store_false", default=_S)
    p.add_argument("--no-shells", dest="emit_shells", action="store_false", default=_S)


def build_config(ns) -> RunConfig:
    data = load_config_file(ns.config) if getattr(ns, "config", None) else {}
    keys = {f.name for f in fields(RunConfig)}
    for k, v in vars(ns).items():
        if k in keys:
            data[k] = v[0] if isinstance(v, list) and len(v) == 1 else v
    return RunConfig.from_dict(data)


def _parse_values(axis: str, text: str) -> list:
    vals = [t.strip() for t in text.split(",") if t.strip()]
    if axis in ("B", "kT", "box"):
        return [float(v) for v in vals]
    if axis == "m":
        return [v if v == "classical" else int(v) for v in vals]
    return [int(v) for v in vals]


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ahvortex", description="Generalized vortex-antivortex solver")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-coupling", help="check admissibility and plane conditions")
    p.add_argument("--model", default="classical")
    p.add_argument("--lam", type=float, default=None, help="enable the integral condition")
    p.add_argument("--samples", type=int, default=4096)

    p = sub.add_parser("solve", help="solve one configuration and write an output bundle")
    _add_run_flags(p)

    p = sub.add_parser("oracle-radial", help="radial shooting profile for a single vortex")
    p.add_argument("--model", default="classical")
    p.add_argument("--multiplicity", type=int, default=1)
    p.add_argument("--r-max", dest="r_max", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", default=None)

    p = sub.add_parser("sweep", help="run a one-axis parameter sweep")
    _add_run_flags(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--kT", dest="kT", type=float, default=_S)
    p.add_argument("--B", dest="B", type=float, default=_S)

    p = sub.add_parser("thermo", help="partition function of the quantized spectrum")
    p.add_argument("--area", type=float, required=True)
    p.add_argument("--kT", type=float, required=True)
    p.add_argument("--B", type=float, default=0.0)
    p.add_argument("--nmax", type=int, default=200)
    p.add_argument("--weights-csv", dest="weights_csv", default=None)
    p.add_argument("--out", default=None)
    return ap


def main(argv=None) -> int:
    ns = make_parser().parse_args(argv)
    if ns.command == "validate-coupling":
        return run_validate(ns.model, ns.lam, ns.samples)
    if ns.command == "oracle-radial":
        return run_oracle(ns.model, ns.multiplicity, ns.r_max, ns.tol, ns.out)
    if ns.command == "thermo":
        return run_thermo(ns.area, ns.kT, ns.B, ns.nmax, ns.weights_csv, ns.out)
    try:
        cfg = build_config(ns)
    except (ConfigError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if ns.command == "solve":
        return run_solve(cfg)
    try:
        values = _parse_values(ns.axis, ns.values)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_sweep(replace(cfg, out=None), ns.axis, values, ns.jobs, getattr(ns, "out", None))


if __name__ == "__main__":
    sys.exit(main())
