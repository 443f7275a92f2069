"""Command-line front end: verification suites and experiments with JSON reports.

Usage::

    schwarzlab {identities,lemma2,continuation,penrose} [--config PATH]
               [--out PATH] [--seed INT] [--bandlimit INT] [--mass FLOAT]

Settings are resolved in the order defaults, config file, environment
(``SCHWARZLAB_CONFIG``, ``SCHWARZLAB_OUT``, ``SCHWARZLAB_SEED``,
``SCHWARZLAB_BANDLIMIT``, ``SCHWARZLAB_MASS``), command-line flags.  Exit
codes: 0 all criteria pass, 1 a criterion fails or the computation raises,
2 the configuration is invalid.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .ambient import AmbientGeometry, AmbientPoint, Rotation, ricci_norm, static_residual
from .continuation import (
    fd_mass_derivative,
    first_order_mass_check,
    isometric_continuation,
    metric_sup,
)
from .errors import SchwarzlabError
from .mass import first_variation_rhs, mass_scale, penrose_check, quasilocal_mass
from .sphere import ScalarField, SphereGrid, re_ylm
from .surface import (
    TangentField,
    build_surface,
    codazzi_residual,
    gauss_curvature,
    import_surface,
    potential_gradient_residual,
    potential_laplace_residual,
)

SCHEMA_VERSION = 1
ENV_PREFIX = "SCHWARZLAB_"
EXPERIMENTS = ("identities", "lemma2", "continuation", "penrose")
RANDOM_FIELD_LAW = {"algorithm": "numpy-pcg64-standard-normal-real-harmonics", "version": 1}

DEFAULT_TOLERANCES = {
    "residual_abs": 1e-10,
    "min_decay": 50.0,
    "gauss_bonnet": 1e-8,
    "first_variation_congruent": 1e-6,
    "first_variation_synthetic": 1e-3,
    "rhs_abs": 1e-12,
    "drift_rel": 1e-7,
    "penrose_rel": 1e-8,
    "fd_rel": 1e-6,
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field {field_name!r}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    """Validated experiment settings.

    ``surface`` and ``reference`` are preset strings: ``"round r0"``,
    ``"perturbed r0 amp Ylm"`` (e.g. ``Y22`` or ``Y10,3``) or ``"file PATH"``
    (a record written by :func:`schwarzlab.export_surface`).  Without a
    reference the pair is congruent: ``Sigma'`` is the surface and ``Sigma``
    a seeded rotation of it.  ``speed`` is ``"random"``, ``"one"``,
    ``"zero"`` or ``"constant c"``.
    """

    experiment: str = "identities"
    schema_version: int = SCHEMA_VERSION
    mass: float = 1.0
    bandlimit: int = 15
    seed: int = 0
    surface: str = "round 3"
    reference: str | None = None
    speed: str = "random"
    s_max: float = 0.05
    steps: int = 50
    fd_s_max: float = 0.01
    fd_steps: int = 5
    epsilon: float = 0.05
    h_floor: float = 0.2
    random_lmax: int = 6
    random_decay: float = 2.0
    random_field: dict = field(default_factory=lambda: dict(RANDOM_FIELD_LAW))
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    output: str | None = None
    log: str | None = None

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {self.schema_version!r}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
        if not isinstance(self.bandlimit, int) or self.bandlimit < 7:
            raise ConfigError("bandlimit", f"must be an integer >= 7, got {self.bandlimit!r}")
        if not np.isfinite(self.mass) or self.mass < 0:
            raise ConfigError("mass", "must be finite and >= 0")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        for name in ("s_max", "fd_s_max", "epsilon", "h_floor", "random_decay"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be > 0")
        if self.steps < 1:
            raise ConfigError("steps", "must be >= 1")
        if self.fd_steps < 2:
            raise ConfigError("fd_steps", "must be >= 2")
        if self.random_lmax < 0:
            raise ConfigError("random_lmax", "must be >= 0")
        if self.random_field != RANDOM_FIELD_LAW:
            raise ConfigError("random_field", f"only {RANDOM_FIELD_LAW} is supported")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError("tolerances", f"unknown entries {sorted(unknown)}")
        for k, v in self.tolerances.items():
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"tolerances.{k}", "must be > 0")
        parse_surface_spec(self.surface, "surface")
        if self.reference is not None:
            parse_surface_spec(self.reference, "reference")
        parse_speed(self.speed)
        return self

    def to_dict(self):
        return asdict(self)


_MODE = re.compile(r"^Y(?:(\d)(-?\d)|(\d+),(-?\d+))$")


def _positive(r0):
    if not r0 > 0:
        raise ValueError(f"radius {r0} must be positive")
    return r0


def parse_surface_spec(spec: str, name: str = "surface"):
    """``("round", r0)``, ``("perturbed", r0, amp, l, m)`` or ``("file", path)``."""
    if not isinstance(spec, str) or not spec.split():
        raise ConfigError(name, "expected a preset string")
    kind, *args = spec.split()
    try:
        if kind == "round" and len(args) == 1:
            return ("round", _positive(float(args[0])))
        if kind == "perturbed" and len(args) == 3:
            mm = _MODE.match(args[2])
            if mm is None:
                raise ValueError(f"mode {args[2]!r} is not of the form Ylm or Yl,m")
            l, m = (int(g) for g in (mm.group(1, 2) if mm.group(1) else mm.group(3, 4)))
            if abs(m) > l:
                raise ValueError("need |m| <= l")
            amp = float(args[1])
            if not abs(amp) < 1:
                raise ValueError("need |amp| < 1 for a radial graph")
            return ("perturbed", _positive(float(args[0])), amp, l, m)
        if kind == "file" and len(args) == 1:
            return ("file", args[0])
    except ValueError as exc:
        raise ConfigError(name, str(exc)) from None
    raise ConfigError(name, f"unrecognized preset {spec!r}")


def parse_speed(spec: str):
    kind, *args = str(spec).split()
    if kind in ("random", "one", "zero") and not args:
        return kind, None
    if kind == "constant" and len(args) == 1:
        try:
            return kind, float(args[0])
        except ValueError:
            pass
    raise ConfigError("speed", f"unrecognized speed {spec!r}")


def load_config(experiment: str, path=None, env=None, overrides=None) -> ExperimentConfig:
    """Merge defaults, a JSON config file, environment and explicit overrides."""
    env = os.environ if env is None else env
    data = {}
    path = path or env.get(ENV_PREFIX + "CONFIG")
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a JSON object")
        if "schema_version" not in data:
            raise ConfigError("schema_version", "missing")
    casts = {"seed": int, "bandlimit": int, "mass": float, "out": str}
    for key, cast in casts.items():
        raw = env.get(ENV_PREFIX + key.upper())
        if raw is not None:
            try:
                data["output" if key == "out" else key] = cast(raw)
            except ValueError:
                raise ConfigError(key, f"environment value {raw!r} is invalid") from None
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    data["experiment"] = experiment
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(data.pop("tolerances", {}) or {})
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    try:
        cfg = ExperimentConfig(tolerances=tol, **data)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None
    return cfg.validate()


# -- building inputs ------------------------------------------------------------------


def make_surface(spec: str, ambient: AmbientGeometry, grid: SphereGrid, name="surface"):
    parsed = parse_surface_spec(spec, name)
    if parsed[0] == "round":
        return build_surface(ambient, grid, ScalarField.constant(grid, parsed[1]))
    if parsed[0] == "perturbed":
        _, r0, amp, l, m = parsed
        if l > grid.L:
            raise ConfigError(name, f"mode degree {l} exceeds the bandlimit {grid.L}")
        return build_surface(ambient, grid, ScalarField(grid, r0 * (1 + amp * re_ylm(grid, l, m))))
    try:
        text = Path(parsed[1]).read_text()
    except OSError as exc:
        raise ConfigError(name, f"cannot read {parsed[1]}: {exc}") from None
    surf = import_surface(text, grid)
    return build_surface(ambient, grid, surf.rho)


class _Inputs:
    """Seeded pair and speed; draws happen in a fixed order (rotation, F, P)."""

    def __init__(self, cfg: ExperimentConfig, L=None):
        self.cfg = cfg
        self.ambient = AmbientGeometry(cfg.mass)
        self.grid = SphereGrid(cfg.bandlimit if L is None else L)
        rng = np.random.default_rng(cfg.seed)
        self.rotation = Rotation.random(rng)
        base = make_surface(cfg.surface, self.ambient, self.grid)
        if cfg.reference is None:
            self.sigma_prime = base
            self.sigma = base.rotated(self.rotation)
        else:
            self.sigma = base
            self.sigma_prime = make_surface(cfg.reference, self.ambient, self.grid, "reference")
        kind, c = parse_speed(cfg.speed)
        f = self._random(rng)
        if kind == "random":
            self.F = ScalarField(self.grid, 1.0 + 0.5 * f.values / max(f.sup(), 1e-300))
        else:
            self.F = ScalarField.constant(self.grid, {"one": 1.0, "zero": 0.0}.get(kind, c))
        self.P = TangentField(
            self.sigma_prime,
            cfg.epsilon * self._random(rng).values,
            cfg.epsilon * self._random(rng).values,
        )

    def _random(self, rng):
        return ScalarField.random(self.grid, rng, self.cfg.random_lmax, self.cfg.random_decay)


def _criterion(name, value, tolerance, passed, relation):
    return {
        "name": name,
        "value": float(value),
        "tolerance": float(tolerance),
        "relation": relation,
        "pass": bool(passed),
    }


def _sup(*fields):
    return max(float(np.max(np.abs(getattr(f, "values", f)))) for f in fields)


# -- experiments ----------------------------------------------------------------------


def _residuals(surf):
    _, gauss = gauss_curvature(surf)
    p = AmbientPoint.from_cartesian(surf.X)
    return {
        "static_equation": _sup(static_residual(surf.ambient, p)),
        "gauss": _sup(gauss),
        "codazzi": _sup(*codazzi_residual(surf)),
        "laplace_potential": _sup(potential_laplace_residual(surf)),
        "normal_derivative_potential": _sup(*potential_gradient_residual(surf)),
        "gauss_bonnet": abs(surf.integrate(surf.K) - 4 * np.pi),
    }


def run_identities(cfg: ExperimentConfig) -> dict:
    """Residual sup-norms at bandlimits ``L`` and ``2L + 1`` with decay factors."""
    L = cfg.bandlimit
    tol = cfg.tolerances
    coarse = _residuals(_Inputs(cfg, L).sigma_prime)
    fine = _residuals(_Inputs(cfg, 2 * L + 1).sigma_prime)
    rows, criteria = {}, []
    for key in coarse:
        decay = coarse[key] / fine[key] if fine[key] > 0 else None
        rows[key] = {"coarse": coarse[key], "fine": fine[key], "decay": decay}
        if key == "gauss_bonnet":
            criteria.append(
                _criterion(key, fine[key], tol["gauss_bonnet"], fine[key] <= tol["gauss_bonnet"], "fine <= tol")
            )
            continue
        ok = fine[key] <= tol["residual_abs"] or (decay is not None and decay >= tol["min_decay"])
        criteria.append(
            _criterion(key, fine[key], tol["residual_abs"], ok, "fine <= tol or decay >= min_decay")
        )
        criteria[-1]["decay"] = decay
        criteria[-1]["min_decay"] = tol["min_decay"]
    return {"bandlimits": [L, 2 * L + 1], "residuals": rows, "criteria": criteria}


def run_lemma2(cfg: ExperimentConfig) -> dict:
    """Finite-difference ``E'(0)`` against the first-variation integral."""
    inp = _Inputs(cfg)
    tol = cfg.tolerances
    sigma, sigma_prime, F = inp.sigma, inp.sigma_prime, inp.F
    scale = mass_scale(sigma)
    family = isometric_continuation(sigma, sigma_prime, F, cfg.fd_s_max, cfg.fd_steps, two_sided=True,
                                    h_floor=cfg.h_floor)
    fd, fd_err = fd_mass_derivative(family)
    rhs = first_variation_rhs(sigma, sigma_prime, F)
    diff = abs(fd - rhs)
    criteria = [
        _criterion("congruent_fd_vs_rhs", diff, tol["first_variation_congruent"] * scale,
                   diff <= tol["first_variation_congruent"] * scale, "|fd - rhs| <= tol * scale"),
    ]
    if cfg.reference is None:
        criteria.append(_criterion("congruent_rhs_zero", abs(rhs), tol["rhs_abs"], abs(rhs) <= tol["rhs_abs"],
                                   "|rhs| <= tol"))
    out = {
        "scale": scale,
        "congruent": {"fd": fd, "fd_error": fd_err, "rhs": rhs, "difference": diff},
    }
    if np.min(F.values) > 0:
        chk = first_order_mass_check(sigma_prime, F, inp.P)
        sdiff = abs(chk["fd"] - chk["rhs"])
        rel = sdiff / abs(chk["rhs"]) if chk["rhs"] != 0 else sdiff
        out["synthetic"] = {
            "fd": chk["fd"], "fd_error": chk["fd_error"], "rhs": chk["rhs"],
            "difference": sdiff, "relative": rel, "trace_check": chk["trace_check"],
        }
        criteria.append(_criterion("synthetic_fd_vs_rhs", rel, tol["first_variation_synthetic"],
                                   rel <= tol["first_variation_synthetic"], "|fd - rhs| / |rhs| <= tol"))
    else:
        out["synthetic"] = {"skipped": "the synthetic first-order family needs F > 0"}
    out["criteria"] = criteria
    return out


def run_continuation(cfg: ExperimentConfig, log=None) -> dict:
    """Isometric continuation with drift, ``E'(0)`` and Penrose-consistency checks."""
    inp = _Inputs(cfg)
    tol = cfg.tolerances
    drift_tol = tol["drift_rel"] * metric_sup(inp.sigma_prime)
    family = isometric_continuation(inp.sigma, inp.sigma_prime, inp.F, cfg.s_max, cfg.steps,
                                    drift_tol=drift_tol, h_floor=cfg.h_floor, log=log)
    scale = family.scale
    drift = float(np.max(family.drifts))
    criteria = [_criterion("drift", drift, drift_tol, drift <= drift_tol, "max drift <= tol * |g|_sup")]
    if len(family.records) >= 5:
        fd, fd_err = fd_mass_derivative(family)
        criteria.append(_criterion("fd_mass_derivative", abs(fd), tol["fd_rel"] * scale,
                                   abs(fd) <= tol["fd_rel"] * scale, "|E'(0)| <= tol * scale"))
    else:
        fd, fd_err = None, None
    gated = [r for r in family.records if r.sigma_convex and r.sigma_prime_mean_convex]
    e_min = min((r.E for r in gated), default=0.0)
    criteria.append(_criterion("penrose_consistency", e_min, tol["penrose_rel"] * scale,
                               e_min >= -tol["penrose_rel"] * scale, "min E >= -tol * scale"))
    return {
        "scale": scale,
        "ds": family.ds,
        "steps": len(family.records) - 1,
        "max_drift": drift,
        "drift_tol": drift_tol,
        "E_min": float(np.min(family.E)),
        "E_final": float(family.E[-1]),
        "fd_mass_derivative": fd,
        "fd_error": fd_err,
        "penrose_steps_checked": len(gated),
        "criteria": criteria,
    }


def ricci_monotonicity(m: float, rng: np.random.Generator, n: int = 1000) -> dict:
    """``|Ric|^2`` decreases in ``r`` on ``n`` random pairs in ``(2m, 20m]``."""
    geom = AmbientGeometry(m)
    lo, hi = (2 * m, 20 * m) if m > 0 else (0.1, 20.0)
    r = lo + (hi - lo) * (1.0 - rng.random((n, 2)))
    r1, r2 = np.min(r, axis=1), np.max(r, axis=1)
    a, b = ricci_norm(geom, r1), ricci_norm(geom, r2)
    ok = (a > b) | (r1 == r2) if m > 0 else (a >= b)
    return {"pairs": n, "violations": int(np.sum(~ok))}


def run_penrose(cfg: ExperimentConfig) -> dict:
    """Mass, hypotheses and sign verdict for one pair, plus the Ricci-norm check."""
    inp = _Inputs(cfg)
    rep = quasilocal_mass(inp.sigma, inp.sigma_prime)
    verdict = penrose_check(rep, cfg.tolerances["penrose_rel"])
    mono = ricci_monotonicity(cfg.mass, np.random.default_rng(cfg.seed))
    criteria = [
        _criterion("penrose", rep.E, verdict.tolerance, verdict.status != "violated", "E >= -tol * scale"),
        _criterion("ricci_norm_monotone", mono["violations"], 1, mono["violations"] == 0, "violations == 0"),
    ]
    criteria[0]["status"] = verdict.status
    return {"mass": rep.to_dict(), "verdict": verdict.to_dict(), "ricci_monotonicity": mono, "criteria": criteria}


# -- entry point ----------------------------------------------------------------------


def _header():
    return {
        "program": "schwarzlab",
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def run(cfg: ExperimentConfig, log=None) -> dict:
    """Run the configured experiment; returns ``{"header", "body"}``."""
    runners = {"identities": run_identities, "lemma2": run_lemma2, "penrose": run_penrose}
    if cfg.experiment == "continuation":
        results = run_continuation(cfg, log=log)
    else:
        results = runners[cfg.experiment](cfg)
    body = {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "results": results,
        "pass": all(c["pass"] for c in results["criteria"]),
    }
    return {"header": _header(), "body": body}


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schwarzlab", description=__doc__.split("\n")[0])
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="JSON config file (schema_version %d)" % SCHEMA_VERSION)
    parser.add_argument("--out", help="report path (default: stdout)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--bandlimit", type=int)
    parser.add_argument("--mass", type=float)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(
            args.experiment,
            args.config,
            overrides={"seed": args.seed, "bandlimit": args.bandlimit, "mass": args.mass, "output": args.out},
        )
    except ConfigError as exc:
        print(f"schwarzlab: configuration error: {exc}", file=sys.stderr)
        return 2
    log_path = cfg.log
    if log_path is None and cfg.output and cfg.experiment == "continuation":
        log_path = str(Path(cfg.output).with_suffix(".steps.jsonl"))
    try:
        if log_path:
            with open(log_path, "w") as log:
                report = run(cfg, log=log)
        else:
            report = run(cfg)
    except ConfigError as exc:
        print(f"schwarzlab: configuration error: {exc}", file=sys.stderr)
        return 2
    except SchwarzlabError as exc:
        print(f"schwarzlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    text = _dump(report)
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)
    failed = [c["name"] for c in report["body"]["results"]["criteria"] if not c["pass"]]
    if failed:
        print(f"schwarzlab: failed criteria: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
