"""Command-line front end: flat key=value configs in, CSV tables out.

Subcommands
    simulate     one trajectory; writes final_state.csv (and trajectory.csv)
    convergence  temporal or spatial strong-error study; convergence.csv
    blowup       first-moment table over step counts; blowup.csv
    compare      tamed exponential Euler vs backward Euler; compare.csv

Every output directory also gets manifest.json (config echo, content hash,
seed) and, where wall-clock is measured, a separate *_timing.csv -- timing
never goes into the data CSVs so reruns are byte-identical.

Exit codes: 0 success, 2 config error, 3 solver error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .dynamics import Scheme, SchemeConfig, SolverError, evolve
from .experiments import (
    ExperimentPlan,
    blowup_table,
    compare_schemes,
    initial_field,
    strong_spatial_error,
    strong_temporal_error,
)
from .noise import NoiseKind, NoiseSpec, sample_path, save_path
from .spectral import BasisSpec, save_field

__all__ = ["main", "ConfigError", "parse_config_text"]

PROG = "stochch"


class ConfigError(Exception):
    pass


_SCHEMES = {s.value: s for s in Scheme}
_NOISE_KINDS = {
    "white": NoiseKind.WHITE,
    "trace_class_log": NoiseKind.TRACE_CLASS_LOG,
    "smooth_log": NoiseKind.SMOOTH_LOG,
    "noncommuting_sine": NoiseKind.NONCOMMUTING_SINE,
}

# every key any command may read; unknown keys are rejected outright
KNOWN_KEYS = {
    "dim", "N", "n_grid", "T", "M", "M.list",
    "noise.kind", "noise.seed", "noise.cache",
    "scheme", "scheme.list", "tau.list", "tau.ref",
    "samples", "ic.preset", "out.dir", "mode",
    "N.list", "N.ref", "nonlinearity", "trajectory",
    "newton.tol", "newton.max_iter",
}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; '#' comments; unknown/duplicate keys rejected."""
    cfg: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        if key in cfg:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {ln}: empty value for {key!r}")
        cfg[key] = value
    return cfg


def _parse_float(s: str) -> float:
    """Floats, plus dyadic shorthand like 2^-9."""
    s = s.strip()
    if "^" in s:
        base, exp = s.split("^", 1)
        return float(base) ** float(exp)
    return float(s)


def _parse_int(s: str) -> int:
    v = int(s.strip())
    return v


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int_list(s: str) -> list[int]:
    out: list[int] = []
    for part in s.split(","):
        part = part.strip()
        if ".." in part:
            a, b = (int(p) for p in part.split("..", 1))
            out.extend(range(a, b + 1))
        else:
            out.append(int(part))
    return out


class _Config:
    """Typed accessors over the raw key/value map with config-error wrapping."""

    def __init__(self, raw: dict):
        self.raw = raw

    def _get(self, key, parse, default):
        if key not in self.raw:
            if default is _REQUIRED:
                raise ConfigError(f"missing required key {key!r}")
            return default
        try:
            return parse(self.raw[key])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None

    def int_(self, key, default=None):
        return self._get(key, _parse_int, default)

    def float_(self, key, default=None):
        return self._get(key, _parse_float, default)

    def bool_(self, key, default=None):
        return self._get(key, _parse_bool, default)

    def str_(self, key, default=None):
        return self._get(key, str.strip, default)

    def floats(self, key, default=None):
        return self._get(
            key, lambda s: [_parse_float(p) for p in s.split(",") if p.strip()], default
        )

    def ints(self, key, default=None):
        return self._get(key, _parse_int_list, default)

    def scheme(self, key, default=None):
        def parse(s):
            name = s.strip().lower()
            if name not in _SCHEMES:
                raise ValueError(f"choose from {sorted(_SCHEMES)}")
            return _SCHEMES[name]

        return self._get(key, parse, default)

    def noise_kind(self, key, default=None):
        def parse(s):
            name = s.strip().lower()
            if name not in _NOISE_KINDS:
                raise ValueError(f"choose from {sorted(_NOISE_KINDS)}")
            return _NOISE_KINDS[name]

        return self._get(key, parse, default)


_REQUIRED = object()


def _config_hash(raw: dict, seed: int) -> str:
    canonical = "\n".join(f"{k}={raw[k]}" for k in sorted(raw)) + f"\nseed={seed}"
    return hashlib.sha256(canonical.encode()).hexdigest()


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv_text(header: list[str], rows, manifest_hash: str) -> str:
    lines = [f"# config_sha256={manifest_hash}", ",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _write_manifest(out_dir: Path, raw: dict, seed: int, mhash: str, extra=None):
    payload = {
        "config": dict(sorted(raw.items())),
        "config_sha256": mhash,
        "master_seed": seed,
        "sample_seed_rule": "SeedSequence((master_seed, sample_index)) -> uint64",
        "package_version": __version__,
    }
    if extra:
        payload.update(extra)
    _write_atomic(out_dir / "manifest.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _resolve_seed(cfg: _Config, args) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.int_("noise.seed", 0)


def _basis(cfg: _Config) -> BasisSpec:
    try:
        return BasisSpec(cfg.int_("dim", 1), cfg.int_("N", _REQUIRED))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _plan_common(cfg: _Config, seed: int) -> dict:
    return dict(
        dim=cfg.int_("dim", 1),
        N=cfg.int_("N", _REQUIRED),
        noise_kind=cfg.noise_kind("noise.kind", NoiseKind.TRACE_CLASS_LOG),
        ic=cfg.str_("ic.preset", "cos_pi"),
        T=cfg.float_("T", 1.0),
        samples=cfg.int_("samples", _REQUIRED),
        master_seed=seed,
        nonlinearity=cfg.bool_("nonlinearity", True),
        n_grid=cfg.int_("n_grid", None),
        newton_tol=cfg.float_("newton.tol", 1e-12),
        newton_max_iter=cfg.int_("newton.max_iter", 50),
    )


def cmd_simulate(cfg: _Config, args, out_dir: Path, seed: int, mhash: str) -> None:
    basis = _basis(cfg)
    try:
        kind = cfg.noise_kind("noise.kind", NoiseKind.TRACE_CLASS_LOG)
        scheme_cfg = SchemeConfig(
            T=cfg.float_("T", 1.0),
            M=cfg.int_("M", _REQUIRED),
            scheme=cfg.scheme("scheme", Scheme.TAMED_EXP_EULER),
            newton_tol=cfg.float_("newton.tol", 1e-12),
            newton_max_iter=cfg.int_("newton.max_iter", 50),
            nonlinearity=cfg.bool_("nonlinearity", True),
            n_grid=cfg.int_("n_grid", None),
        )
        X0 = initial_field(basis, cfg.str_("ic.preset", "cos_pi"))
        path = sample_path(NoiseSpec(kind, basis), scheme_cfg.T, scheme_cfg.M, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    record = cfg.bool_("trajectory", False)
    result = evolve(X0, path, scheme_cfg, record_trajectory=record)
    if record:
        final, trajectory = result
    else:
        final, trajectory = result, None

    out_dir.mkdir(parents=True, exist_ok=True)
    save_field(final.field, out_dir / "final_state.csv")
    if trajectory is not None:
        rows = [
            [m, f.mean, *map(float, f.coeffs)] for m, f in enumerate(trajectory)
        ]
        header = ["step", "mean"] + [f"c{k}" for k in range(1, basis.n_modes + 1)]
        _write_atomic(out_dir / "trajectory.csv", _csv_text(header, rows, mhash))
    if cfg.bool_("noise.cache", False):
        save_path(path, out_dir / "noise_path.bin")
    _write_manifest(
        out_dir, cfg.raw, seed, mhash,
        extra={"diverged": final.diverged, "diverged_at": final.diverged_at},
    )


def cmd_convergence(cfg: _Config, args, out_dir: Path, seed: int, mhash: str) -> None:
    mode = cfg.str_("mode", "temporal")
    if mode not in ("temporal", "spatial"):
        raise ConfigError(f"mode must be temporal or spatial, got {mode!r}")
    common = _plan_common(cfg, seed)
    try:
        if mode == "temporal":
            plan = ExperimentPlan(
                taus=tuple(cfg.floats("tau.list", _REQUIRED)),
                tau_ref=cfg.float_("tau.ref", _REQUIRED),
                schemes=(cfg.scheme("scheme", Scheme.TAMED_EXP_EULER),),
                **common,
            )
            report = strong_temporal_error(plan, workers=args.workers)
            hname = "tau"
        else:
            tau = cfg.floats("tau.list", _REQUIRED)
            plan = ExperimentPlan(
                taus=tuple(tau),
                tau_ref=tau[0],
                n_list=tuple(cfg.ints("N.list", _REQUIRED)),
                n_ref=cfg.int_("N.ref", _REQUIRED),
                schemes=(cfg.scheme("scheme", Scheme.TAMED_EXP_EULER),),
                **common,
            )
            report = strong_spatial_error(plan, workers=args.workers)
            hname = "lambda_N"
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [
        [h, e, s, report.samples]
        for h, e, s in zip(report.h, report.errors, report.stderrs)
    ]
    rows.append(["slope", report.slope, report.slope_stderr, report.fit_residual])
    _write_atomic(
        out_dir / "convergence.csv",
        _csv_text([hname, "error", "stderr", "samples"], rows, mhash),
    )
    trows = [[h, w] for h, w in zip(report.h, report.wallclock_s)]
    trows.append(["reference", report.ref_wallclock_s])
    _write_atomic(
        out_dir / "convergence_timing.csv",
        _csv_text([hname, "wallclock_s"], trows, mhash),
    )
    _write_manifest(out_dir, cfg.raw, seed, mhash)


def cmd_blowup(cfg: _Config, args, out_dir: Path, seed: int, mhash: str) -> None:
    try:
        table = blowup_table(
            cfg.ints("M.list", list(range(1, 21))),
            samples=cfg.int_("samples", 20),
            master_seed=seed,
            scheme=cfg.scheme("scheme", Scheme.PLAIN_EXP_EULER),
            dim=cfg.int_("dim", 1),
            N=cfg.int_("N", 100),
            noise_kind=cfg.noise_kind("noise.kind", NoiseKind.TRACE_CLASS_LOG),
            ic=cfg.str_("ic.preset", "cos_pi_20"),
            T=cfg.float_("T", 1.0),
            n_grid=cfg.int_("n_grid", None),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = list(zip(table.m_values, (float(v) for v in table.mean_norms)))
    _write_atomic(out_dir / "blowup.csv", _csv_text(["M", "mean_norm"], rows, mhash))
    _write_manifest(out_dir, cfg.raw, seed, mhash)


def cmd_compare(cfg: _Config, args, out_dir: Path, seed: int, mhash: str) -> None:
    schemes = cfg.raw.get("scheme.list", "tamed,bem")
    names = [s.strip().lower() for s in schemes.split(",")]
    if sorted(names) != ["bem", "tamed"]:
        raise ConfigError(f"compare needs scheme.list = tamed,bem, got {schemes!r}")
    common = _plan_common(cfg, seed)
    try:
        plan = ExperimentPlan(
            taus=tuple(cfg.floats("tau.list", _REQUIRED)),
            tau_ref=cfg.float_("tau.ref", _REQUIRED),
            schemes=(Scheme.TAMED_EXP_EULER, Scheme.BACKWARD_EULER),
            **common,
        )
        report = compare_schemes(plan, workers=args.workers)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [
        [t, et, eb]
        for t, et, eb in zip(report.taus, report.errors_tamed, report.errors_bem)
    ]
    _write_atomic(
        out_dir / "compare.csv",
        _csv_text(["tau", "error_teem", "error_bem"], rows, mhash),
    )
    _write_atomic(
        out_dir / "compare_timing.csv",
        _csv_text(
            ["scheme", "wallclock_s"],
            [["teem", report.time_tamed_s], ["bem", report.time_bem_s],
             ["reference", report.ref_wallclock_s]],
            mhash,
        ),
    )
    _write_manifest(out_dir, cfg.raw, seed, mhash)


_COMMANDS = {
    "simulate": cmd_simulate,
    "convergence": cmd_convergence,
    "blowup": cmd_blowup,
    "compare": cmd_compare,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Stochastic Cahn-Hilliard spectral Galerkin experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override noise.seed")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default=None, help="override out.dir")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = _Config(parse_config_text(text))
        seed = _resolve_seed(cfg, args)
        if seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        out_dir = Path(args.out or cfg.str_("out.dir", "out"))
        mhash = _config_hash(cfg.raw, seed)
        # commands validate the whole config and finish computing before the
        # first write; a config error never leaves files behind
        _COMMANDS[args.command](cfg, args, out_dir, seed, mhash)
    except ConfigError as exc:
        print(f"{PROG}: config-error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"{PROG}: solver-error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"{PROG}: io-error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
