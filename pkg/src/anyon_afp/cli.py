"""Command-line front end: ``anyon-afp --config run.json``.

The config is JSON (schema in :data:`CONFIG_SCHEMA`).  Every run writes
``manifest.json`` listing the config, the Townes constants used, each
assertion with pass/fail, per-stage wall-clock times and a SHA-256 digest of
every emitted file.  Exit status: 0 if all assertions pass, 1 on a failed
assertion or numerical failure, 2 on a config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .energy import HartreeParams, PhysicsParams, energy_afp
from .experiments import (
    FLOOR_SLACK, critical_sweep, default_gstar_config, estimate_gstar, gn_optimizer_convergence, hartree_rate_study, subcritical_sweep,
    supercritical_sweep, write_points_csv,
)
from .fieldio import dump_field
from .grid import make_grid
from .minimizer import SolverConfig, minimize
from .townes import constants, export_profile, solve_townes, solve_townes_relaxation, townes
from .validation import gradient_suite, hardy_suite, inequality_suite, kernel_suite

COMMANDS = ("townes", "minimize", "gstar", "sweep-sub", "sweep-crit", "sweep-super",
            "hartree-rates", "gn-weakfield", "validate")

_SOLVER_KEYS = {f.name for f in fields(SolverConfig)}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "physics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "beta": {"type": "number", "minimum": 0},
                "g": {"type": "number"},
                "s": {"type": "number", "exclusiveMinimum": 0},
                "trap_on": {"type": "boolean"},
                "R": {"type": "number", "minimum": 0},
                "hartree": {
                    "type": ["object", "null"],
                    "additionalProperties": False,
                    "properties": {
                        "nu": {"type": "number", "exclusiveMinimum": 0},
                        "N": {"type": "number", "minimum": 1},
                        "W": {"enum": ["gaussian"]},
                    },
                },
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {} for k in sorted(_SOLVER_KEYS)},
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 16},
                "box_length": {"anyOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "auto"}]},
            },
        },
        "experiment": {"type": "object"},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer"},
        "emit_fields": {"type": "boolean"},
        "compat_pi2": {"type": "boolean"},
    },
}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["artifact_version", "config", "townes_constants", "assertions", "timings", "files", "status"],
    "properties": {
        "artifact_version": {"type": "string"},
        "config": {"type": "object"},
        "townes_constants": {"type": "object"},
        "assertions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "passed"],
                "properties": {"name": {"type": "string"}, "passed": {"type": "boolean"}},
            },
        },
        "timings": {"type": "object", "additionalProperties": {"type": "number"}},
        "files": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["path", "sha256", "bytes"],
                "properties": {
                    "path": {"type": "string"},
                    "sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
                    "bytes": {"type": "integer"},
                },
            },
        },
        "status": {"enum": ["pass", "fail"]},
        "created": {"type": "string"},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    physics: PhysicsParams = field(default_factory=PhysicsParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    grid: dict = field(default_factory=lambda: {"n": 128, "box_length": "auto"})
    output_dir: str = "out"
    seed: int = 0
    emit_fields: bool = False
    compat_pi2: bool = False
    experiment: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config error at {path}: {exc.message}") from None
        ph = dict(data.get("physics", {}))
        hp = ph.pop("hartree", None)
        compat = bool(data.get("compat_pi2", False))
        try:
            physics = PhysicsParams(**ph, hartree=HartreeParams(**hp) if hp else None, compat_pi2=compat)
            solver = SolverConfig(**data.get("solver", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config error: {exc}") from None
        grid = {"n": 128, "box_length": "auto", **data.get("grid", {})}
        n = grid["n"]
        if n & (n - 1):
            raise ConfigError(f"config error at grid.n: n must be a power of two, got {n}")
        return cls(
            command=data["command"], physics=physics, solver=solver, grid=grid,
            output_dir=data.get("output_dir", "out"), seed=int(data.get("seed", 0)),
            emit_fields=bool(data.get("emit_fields", False)), compat_pi2=compat,
            experiment=dict(data.get("experiment", {})), raw=data,
        )

    def make_grid(self, rms_radius: float = 1.0):
        L = self.grid["box_length"]
        if L == "auto":
            L = 16.0 * rms_radius
        return make_grid(int(self.grid["n"]), float(L))


class Manifest:
    """Collects assertions, timings and files; written once at the end."""

    def __init__(self, cfg: RunConfig, out_dir: Path):
        self.cfg = cfg
        self.out = out_dir
        self.assertions: list[dict] = []
        self.timings: dict[str, float] = {}
        self.files: list[Path] = []
        self.extra: dict = {}

    def check(self, name: str, passed: bool, value=None, target=None, tolerance=None) -> bool:
        self.assertions.append({
            "name": name, "passed": bool(passed), "value": _jsonable(value),
            "target": _jsonable(target), "tolerance": _jsonable(tolerance),
        })
        return bool(passed)

    def add_file(self, path) -> None:
        self.files.append(Path(path))

    def stage(self, name: str):
        manifest = self

        class _Timer:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                manifest.timings[name] = time.perf_counter() - self.t
                return False

        return _Timer()

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def to_dict(self) -> dict:
        inventory = []
        for p in self.files:
            data = p.read_bytes()
            inventory.append({
                "path": str(p.relative_to(self.out)), "sha256": hashlib.sha256(data).hexdigest(),
                "bytes": len(data),
            })
        return {
            "artifact_version": __version__,
            "config": self.cfg.raw,
            "townes_constants": townes(self.cfg.physics.s).consts.to_dict(),
            "assertions": self.assertions,
            "timings": self.timings,
            "files": inventory,
            "results": _jsonable(self.extra),
            "status": "pass" if self.passed else "fail",
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }

    def write(self) -> Path:
        doc = self.to_dict()
        jsonschema.validate(doc, MANIFEST_SCHEMA)
        path = self.out / "manifest.json"
        path.write_text(json.dumps(doc, indent=2))
        return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "to_dict"):
        return _jsonable(v.to_dict())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return None
    if isinstance(v, np.ndarray):
        return None
    return v


# ---------------------------------------------------------------------------
# commands


def _cmd_townes(cfg: RunConfig, m: Manifest) -> None:
    tol = float(cfg.experiment.get("tol", 1e-9))
    with m.stage("solve"):
        prof = solve_townes(tol=tol)
        amp_relax = solve_townes_relaxation()
    with m.stage("constants"):
        c = constants(prof, cfg.physics.s)
    for p in export_profile(prof, c, m.out / "townes_profile"):
        m.add_file(p)
    target = 2 * np.pi * 1.86
    m.check("g_star0_band", abs(c.g_star0 / target - 1) <= 5e-3, c.g_star0, target, 5e-3)
    m.check("grad_q0_sq", abs(c.grad_q0_sq - 1) <= 1e-3, c.grad_q0_sq, 1.0, 1e-3)
    m.check("pohozaev_l4", abs(c.l4_q0 * c.g_star0 / 2 - 1) <= 5e-3, c.l4_q0, 2 / c.g_star0, 5e-3)
    m.check("relaxation_agreement", abs(amp_relax - prof.amplitude) <= 1e-6, amp_relax, prof.amplitude, 1e-6)
    m.check("ode_residual", prof.residual <= tol, prof.residual, 0.0, tol)


def _cmd_minimize(cfg: RunConfig, m: Manifest) -> None:
    grid = cfg.make_grid()
    hartree = cfg.physics.hartree is not None
    with m.stage("minimize"):
        res = minimize(cfg.physics, cfg.solver, grid, hartree=hartree)
    m.extra["energy"] = res.energy.to_dict()
    m.extra["iterations"] = res.iterations
    m.extra["status"] = res.status
    m.extra["eps_inv_grad"] = res.eps_inv_grad
    m.extra["residual"] = res.residual
    hist = m.out / "history.csv"
    hist.write_text("iteration,energy\n" + "".join(f"{i},{e!r}\n" for i, e in enumerate(res.history)))
    m.add_file(hist)
    if cfg.emit_fields:
        for p in dump_field(res.u_final, grid, m.out / "u_final.bin"):
            m.add_file(p)
    m.check("converged", res.converged, res.status)


def _cmd_gstar(cfg: RunConfig, m: Manifest) -> None:
    betas = cfg.experiment.get("betas", [0.0, 0.05, 0.1, 0.2])
    rows = []
    with m.stage("gstar"):
        for b in betas:
            cfg_g = SolverConfig(**{**asdict(default_gstar_config()), **cfg.raw.get("solver", {})})
            est = estimate_gstar(float(b), cfg=cfg_g)
            rows.append({"beta": b, "value": est.value, "lower_bound": est.lower_bound,
                         "upper_bound": est.upper_bound, "converged": est.converged})
            if b <= 0.3:
                m.check(f"gstar_band[beta={b}]", est.in_band(), est.value, [est.lower_bound, est.upper_bound * 1.05])
            if b >= 2:
                m.check(f"flux_floor[beta={b}]", est.above_flux_floor(), est.value, 4 * np.pi * b, FLOOR_SLACK)
            m.check(f"witness_reproduces[beta={b}]", abs(est.witness_quotient - est.value) <= 1e-6 * est.value,
                    est.witness_quotient, est.value, 1e-6)
            if cfg.emit_fields:
                for p in dump_field(est.certificate, est.grid, m.out / f"gstar_witness_beta{b}.bin"):
                    m.add_file(p)
    m.add_file(write_points_csv(rows, m.out / "gstar.csv"))


def _sweep_common(cfg: RunConfig, m: Manifest, res, exp_tol: float, pref_tol: float | None, name: str) -> None:
    m.add_file(write_points_csv(res.points, m.out / f"{name}.csv"))
    m.extra[name] = res.to_dict()
    fit = res.fit
    m.check(f"{name}_fit_available", fit is not None, None if fit is None else fit.n_points, ">= 4 points")
    if fit is None:
        return
    m.check(f"{name}_r_squared", fit.r_squared >= 0.98, fit.r_squared, 0.98)
    tgt = res.targets["exponent"]
    m.check(f"{name}_exponent", abs(fit.exponent - tgt) <= exp_tol, fit.exponent, tgt, exp_tol)
    if pref_tol is not None:
        pt = res.targets["prefactor"]
        m.check(f"{name}_prefactor", abs(fit.prefactor / pt - 1) <= pref_tol, fit.prefactor, pt, pref_tol)


def _solver_for_sweep(cfg: RunConfig) -> SolverConfig | None:
    return cfg.solver if "solver" in cfg.raw else None


def _cmd_sweep_sub(cfg: RunConfig, m: Manifest, threads: int) -> None:
    with m.stage("sweep"):
        res = subcritical_sweep(cfg.physics.s, cfg=_solver_for_sweep(cfg), threads=threads)
    _sweep_common(cfg, m, res, 0.02, None, "subcritical")
    good = [p for p in res.points if p.converged]
    if good:
        ratio = good[-1].energy_measured / good[-1].energy_predicted
        m.check("subcritical_energy_ratio", abs(ratio - 1) <= 0.1, ratio, 1.0, 0.1)
        d = [p.h1_distance_to_townes for p in good]
        m.check("subcritical_h1_decreasing", bool(np.all(np.diff(d) < 0)), d)


def _cmd_sweep_crit(cfg: RunConfig, m: Manifest, threads: int) -> None:
    betas = cfg.experiment.get("beta_schedule", [0.2, 0.1, 0.05, 0.025])
    with m.stage("sweep"):
        res = critical_sweep(cfg.physics.s, betas, cfg=_solver_for_sweep(cfg), threads=threads)
    _sweep_common(cfg, m, res, 0.05, 0.15, "critical")


def _cmd_sweep_super(cfg: RunConfig, m: Manifest, threads: int) -> None:
    c = townes(cfg.physics.s).consts
    frac = float(cfg.experiment.get("tau0_fraction", 0.25))
    betas = cfg.experiment.get("beta_schedule", [0.2, 0.1, 0.05, 0.025])
    with m.stage("sweep"):
        res = supercritical_sweep(cfg.physics.s, frac * c.g_star0 * c.a0, betas, cfg=_solver_for_sweep(cfg),
                                  threads=threads)
    _sweep_common(cfg, m, res, 0.05, 0.2, "supercritical")
    if cfg.experiment.get("probe_instability", True):
        with m.stage("instability_probe"):
            probe = supercritical_sweep(cfg.physics.s, 2 * c.g_star0 * c.a0, [betas[0]],
                                        cfg=_solver_for_sweep(cfg), probe_instability=True)
        m.extra["instability_probe"] = probe.to_dict()
        m.check("instability_reported", probe.aborted, probe.abort_info)


def _cmd_hartree(cfg: RunConfig, m: Manifest) -> None:
    nu = float(cfg.experiment.get("nu", 0.5))
    eta = float(cfg.experiment.get("eta", 0.5))
    Ns = cfg.experiment.get("N_schedule", [2**k for k in range(4, 11)])
    with m.stage("hartree"):
        out = hartree_rate_study(nu, eta, Ns)
    m.add_file(write_points_csv(out["fixed_field"], m.out / "hartree_fixed_field.csv"))
    m.add_file(write_points_csv(out["ground_state"], m.out / "hartree_ground_state.csv"))
    m.extra["hartree"] = {k: v for k, v in out.items() if k not in ("fixed_field", "ground_state")}
    m.check("smearing_slope", out["smear_fit"].exponent <= -nu + 0.1, out["smear_fit"].exponent, -nu, 0.1)
    m.check("regularization_slope", out["regularization_fit"].exponent <= -eta + 0.1,
            out["regularization_fit"].exponent, -eta, 0.1)
    m.check("ground_state_gap_monotone", out["gap_monotone"], [r["gap"] for r in out["ground_state"]])


def _cmd_gn_weakfield(cfg: RunConfig, m: Manifest) -> None:
    betas = cfg.experiment.get("beta_schedule", [0.2, 0.1, 0.05])
    with m.stage("gn_weakfield"):
        rows = gn_optimizer_convergence(betas)
    m.add_file(write_points_csv(rows, m.out / "gn_weakfield.csv"))
    d = [r["h1_distance"] for r in rows]
    m.check("distances_decreasing", bool(np.all(np.diff(d) < 0)), d)
    m.check("smallest_beta_distance", d[-1] <= 0.05, d[-1], 0.05)
    for r in rows:
        m.check(f"gstar_band[beta={r['beta']}]", r["in_band"], r["gstar"], [r["lower_bound"], r["upper_bound"]])


def _cmd_validate(cfg: RunConfig, m: Manifest) -> None:
    quick = bool(cfg.experiment.get("quick", False))
    suites = [
        ("kernel", lambda: kernel_suite()),
        ("gradient", lambda: gradient_suite(n_fields=4 if quick else 20, n_dirs=4 if quick else 20)),
        ("inequalities", lambda: inequality_suite(n_fields=40 if quick else 200)),
        ("hardy", lambda: hardy_suite()),
    ]
    for name, fn in suites:
        with m.stage(name):
            for c in fn():
                m.check(c.name, c.passed, c.value, None, c.tolerance)
    grid = make_grid(128, 16.0)
    u = np.exp(-grid.radius**2 / 2) / np.sqrt(np.pi)
    e = energy_afp(u.astype(complex), grid, PhysicsParams())
    m.check("harmonic_gaussian_energy", abs(e.total - 2) <= 1e-6, e.total, 2.0, 1e-6)


def run(config_path: str | Path, threads: int | None = None, output: str | None = None,
        emit_fields: bool | None = None, compat_pi2: bool | None = None) -> tuple[int, Path | None]:
    """Execute a config file; returns ``(exit_status, manifest_path)``."""
    try:
        data = json.loads(Path(config_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2, None
    if not isinstance(data, dict):
        print("config error at <root>: expected a JSON object", file=sys.stderr)
        return 2, None
    if output is not None:
        data["output_dir"] = output
    if emit_fields:
        data["emit_fields"] = True
    if compat_pi2:
        data["compat_pi2"] = True
    try:
        cfg = RunConfig.from_dict(data)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2, None
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"config error at output_dir: {exc}", file=sys.stderr)
        return 2, None
    if not os.access(out, os.W_OK):
        print(f"config error at output_dir: {out} is not writable", file=sys.stderr)
        return 2, None
    m = Manifest(cfg, out)
    threads = threads or 1
    handlers = {
        "townes": lambda: _cmd_townes(cfg, m),
        "minimize": lambda: _cmd_minimize(cfg, m),
        "gstar": lambda: _cmd_gstar(cfg, m),
        "sweep-sub": lambda: _cmd_sweep_sub(cfg, m, threads),
        "sweep-crit": lambda: _cmd_sweep_crit(cfg, m, threads),
        "sweep-super": lambda: _cmd_sweep_super(cfg, m, threads),
        "hartree-rates": lambda: _cmd_hartree(cfg, m),
        "gn-weakfield": lambda: _cmd_gn_weakfield(cfg, m),
        "validate": lambda: _cmd_validate(cfg, m),
    }
    try:
        handlers[cfg.command]()
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        m.check("numerical_failure", False, f"{type(exc).__name__}: {exc}")
    path = m.write()
    return (0 if m.passed else 1), path


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="anyon-afp", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker processes for sweeps")
    ap.add_argument("--output", help="override output_dir")
    ap.add_argument("--emit-fields", action="store_true", help="write binary field dumps")
    ap.add_argument("--compat-pi2", action="store_true", help="use the 1/(pi^2 R^2) mollifier normalization")
    args = ap.parse_args(argv)
    status, path = run(args.config, args.threads, args.output, args.emit_fields, args.compat_pi2)
    if path is not None:
        print(f"manifest: {path} ({'pass' if status == 0 else 'fail'})")
    return status


if __name__ == "__main__":
    sys.exit(main())
