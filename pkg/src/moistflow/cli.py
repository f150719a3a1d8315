"""Configuration parsing, run orchestration, and the command-line entry
points: ``run``, ``check``, ``resume``, and ``export-plot``.

Config files are plain UTF-8 ``key = value`` lines with dotted keys and
``#`` comments.  Unknown keys are errors (no silent typos), every key has a
documented default, and each run writes an echo file listing every consumed
key so runs are reproducible from their outputs alone.  Exit codes: 0 on
success, 1 on runtime failure, 2 on usage or configuration errors.  The
environment variable MOISTFLOW_OUT overrides the output directory.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import os
import shutil
import sys
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import spectral_ops as sp
from .fields import PhysConstants, load_state, make_grid, save_state
from .presets import PRESET_NAMES, preset_initial
from .solver import Simulation, SolverConfig, V_R_PROFILES


class ConfigError(ValueError):
    """Configuration-file problem; maps to exit code 2."""


_CONSTANT_KEYS = ("R_d", "R_v", "c_pd", "c_pv", "c_l", "c_ev", "c_cd", "c_cn",
                  "c_ac", "c_cr", "p_ref", "L_ref", "T_ref", "q_vs_star",
                  "q_ac", "q_cn", "mu", "lambda", "kappa", "g")

_ATM = PhysConstants()


def _schema() -> dict:
    """key -> (type tag, default).  Type tags: int, float, bool, str, data."""
    s = {
        "grid.nx": ("int", 16),
        "grid.ny": ("int", 16),
        "grid.nz": ("int", 17),
        "constants.set": ("str", "atmospheric"),
    }
    for key in _CONSTANT_KEYS:
        attr = "lam" if key == "lambda" else key
        s[f"constants.{key}"] = ("float", float(getattr(_ATM, attr)))
    for var in ("T", "v", "c", "r"):
        s[f"boundary.{var}.alpha_bottom"] = ("float", 0.0)
        s[f"boundary.{var}.alpha_top"] = ("float", 0.0)
        s[f"boundary.{var}.value_bottom"] = ("data", "preset")
        s[f"boundary.{var}.value_top"] = ("data", "preset")
    s.update({
        "microphysics.q_vs.kind": ("str", "default"),
        "solver.dt": ("float", 1.0e-3),
        "solver.t_end": ("float", 1.0e-2),
        "solver.mode": ("str", "direct"),
        "solver.picard_tol": ("float", 1.0e-8),
        "solver.picard_max_iters": ("int", 12),
        "solver.dealias": ("bool", True),
        "solver.v_r_profile": ("str", "constant"),
        "solver.v_r_scale": ("float", 1.0),
        "solver.checkpoint_every": ("int", 0),
        "solver.snapshot_every": ("int", 0),
        "solver.record_states_every": ("int", 0),
        "solver.max_dt_halvings": ("int", 2),
        "solver.psi_dt_mode": ("str", "fd"),
        "ic.preset": ("str", "equilibrium"),
        "ic.T0": ("float", 0.0),          # 0 -> use constants.T_ref
        "ic.rho0": ("float", 0.0),        # 0 -> p_ref / (R_d T0)
        "ic.amplitude": ("float", 0.0),   # 0 -> preset default
        "ic.sat_ratio": ("float", 1.1),
        "ic.qc_seed": ("float", 1.0e-3),
        "ic.qr_seed": ("float", 5.0e-4),
        "run.seed": ("int", 0),
        "run.threads": ("int", 1),
        "diagnostics.strict_positivity": ("bool", False),
        "output.dir": ("str", "out"),
    })
    return s


SCHEMA = _schema()


def _parse_modes(text: str, where: str) -> dict:
    """Mode-table syntax: 'modes: k1,k2,re,im; k1,k2,re,im; ...'.

    Each entry contributes re*cos(pi(k1 x + k2 y)) + im*sin(pi(k1 x + k2 y))
    to the boundary field; the Hermitian pair of coefficients is added
    automatically so the field is real.
    """
    body = text.split(":", 1)[1]
    beta: dict = {}
    for chunk in body.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = [p.strip() for p in chunk.split(",")]
        if len(parts) != 4:
            raise ConfigError(f"{where}: mode entry needs k1,k2,re,im: {chunk!r}")
        try:
            k1, k2 = int(parts[0]), int(parts[1])
            re, im = float(parts[2]), float(parts[3])
        except ValueError as exc:
            raise ConfigError(f"{where}: bad mode entry {chunk!r}: {exc}") from exc
        if (k1, k2) == (0, 0):
            if im != 0.0:
                raise ConfigError(f"{where}: mean mode (0,0) must have im = 0")
            beta[(0, 0)] = beta.get((0, 0), 0.0) + re
        else:
            beta[(k1, k2)] = beta.get((k1, k2), 0.0) + (re - 1j * im) / 2.0
            beta[(-k1, -k2)] = beta.get((-k1, -k2), 0.0) + (re + 1j * im) / 2.0
    return beta


def _format_data(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, dict):
        entries = []
        seen = set()
        for (k1, k2), amp in sorted(value.items()):
            if (k1, k2) in seen:
                continue
            if (k1, k2) == (0, 0):
                entries.append(f"0,0,{float(np.real(amp))!r},0")
                continue
            seen.add((-k1, -k2))
            re = float(2.0 * np.real(amp))
            im = float(-2.0 * np.imag(amp))
            entries.append(f"{k1},{k2},{re!r},{im!r}")
        return "modes: " + "; ".join(entries)
    return repr(float(value))


def _coerce(key: str, text: str, where: str):
    kind = SCHEMA[key][0]
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind == "data":
            if text == "preset":
                return "preset"
            if text.startswith("modes"):
                return _parse_modes(text, where)
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse value for {key}: {exc}") from exc


@dataclass
class RunConfig:
    """Fully resolved configuration: every schema key has a value."""

    values: dict
    explicit: set = dc_field(default_factory=set)
    path: str = ""

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        """Equality of effective configurations (canonical echo form)."""
        return isinstance(other, RunConfig) and self.echo_text() == other.echo_text()

    def constants(self) -> PhysConstants:
        if self["constants.set"] == "nondimensional":
            base = PhysConstants.nondimensional()
        elif self["constants.set"] == "atmospheric":
            base = PhysConstants()
        else:
            raise ConfigError(f"{self.path}: unknown constants.set "
                              f"{self['constants.set']!r}")
        kwargs = {}
        for key in _CONSTANT_KEYS:
            attr = "lam" if key == "lambda" else key
            full = f"constants.{key}"
            kwargs[attr] = (self[full] if full in self.explicit
                            else getattr(base, attr))
        try:
            return PhysConstants(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"{self.path}: {exc}") from exc

    def solver_config(self) -> SolverConfig:
        try:
            return SolverConfig(
                dt=self["solver.dt"], t_end=self["solver.t_end"],
                mode=self["solver.mode"], picard_tol=self["solver.picard_tol"],
                picard_max_iters=self["solver.picard_max_iters"],
                dealias=self["solver.dealias"],
                v_r_profile=self["solver.v_r_profile"],
                v_r_scale=self["solver.v_r_scale"],
                checkpoint_every=self["solver.checkpoint_every"],
                snapshot_every=self["solver.snapshot_every"],
                record_states_every=self["solver.record_states_every"],
                max_dt_halvings=self["solver.max_dt_halvings"],
                strict_positivity=self["diagnostics.strict_positivity"],
                psi_dt_mode=self["solver.psi_dt_mode"],
            )
        except ValueError as exc:
            raise ConfigError(f"{self.path}: {exc}") from exc

    def echo_text(self) -> str:
        """Every consumed key with its effective value, in a form parse_config
        accepts; reparsing an echo reproduces the configuration exactly."""
        constants = self.constants()
        lines = ["# resolved configuration (all keys, defaults included)"]
        for key in SCHEMA:
            v = self.values[key]
            if key.startswith("constants.") and key != "constants.set":
                attr = "lam" if key == "constants.lambda" else key.split(".", 1)[1]
                v = getattr(constants, attr)
            if isinstance(v, bool):
                text = "true" if v else "false"
            elif SCHEMA[key][0] == "data":
                text = _format_data(v)
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"


def parse_config(path) -> RunConfig:
    """Parse and validate a config file; raises ConfigError with file/line
    information on unknown keys, bad types, or invariant violations."""
    values = {k: v for k, (_, v) in SCHEMA.items()}
    explicit = set()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, text = (part.strip() for part in line.split("=", 1))
        where = f"{path}:{lineno}"
        if key not in SCHEMA:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in explicit:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        values[key] = _coerce(key, text, where)
        explicit.add(key)

    rc = RunConfig(values=values, explicit=explicit, path=str(path))
    _validate(rc)
    return rc


def _validate(rc: RunConfig) -> None:
    path = rc.path
    nx, ny, nz = rc["grid.nx"], rc["grid.ny"], rc["grid.nz"]
    try:
        make_grid(nx, ny, nz)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    rc.constants()
    rc.solver_config()
    for var in ("T", "v", "c", "r"):
        ab = rc[f"boundary.{var}.alpha_bottom"]
        at = rc[f"boundary.{var}.alpha_top"]
        if ab > 0.0:
            raise ConfigError(f"{path}: boundary.{var}.alpha_bottom = {ab} "
                              f"violates the wall sign condition (must be <= 0)")
        if at < 0.0:
            raise ConfigError(f"{path}: boundary.{var}.alpha_top = {at} "
                              f"violates the wall sign condition (must be >= 0)")
    if rc["ic.preset"] not in PRESET_NAMES:
        raise ConfigError(f"{path}: unknown ic.preset {rc['ic.preset']!r}")
    if rc["microphysics.q_vs.kind"] != "default":
        raise ConfigError(f"{path}: only the 'default' saturation closure is "
                          f"file-configurable; plug closures in via the API")
    if rc["solver.v_r_profile"] not in V_R_PROFILES:
        raise ConfigError(f"{path}: unknown solver.v_r_profile "
                          f"{rc['solver.v_r_profile']!r}")


def build_simulation(rc: RunConfig):
    """Construct (Simulation, initial State) from a parsed config."""
    grid = make_grid(rc["grid.nx"], rc["grid.ny"], rc["grid.nz"])
    constants = rc.constants()
    alphas = {var: (rc[f"boundary.{var}.alpha_bottom"],
                    rc[f"boundary.{var}.alpha_top"]) for var in ("T", "v", "c", "r")}
    params = {"T0": rc["ic.T0"], "rho0": rc["ic.rho0"],
              "sat_ratio": rc["ic.sat_ratio"], "qc_seed": rc["ic.qc_seed"],
              "qr_seed": rc["ic.qr_seed"], "seed": rc["run.seed"]}
    if rc["ic.amplitude"] > 0.0:
        params["amplitude"] = rc["ic.amplitude"]
    state, bspec = preset_initial(rc["ic.preset"], grid, constants,
                                  alphas=alphas, params=params)
    for var in ("T", "v", "c", "r"):
        for side, attr in (("bottom", "data_bottom"), ("top", "data_top")):
            override = rc[f"boundary.{var}.value_{side}"]
            if override != "preset":
                setattr(bspec[var], attr, override)
    echo = rc.echo_text()
    sim = Simulation(grid, constants, bspec, rc.solver_config(),
                     config_hash=hashlib.sha256(echo.encode()).hexdigest())
    sim.config_echo = echo
    return sim, state


def _resolve_out(rc: RunConfig, cli_out: str | None) -> str:
    env = os.environ.get("MOISTFLOW_OUT")
    return cli_out or env or rc["output.dir"]


def _cmd_run(args) -> int:
    rc = parse_config(args.config)
    out = _resolve_out(rc, args.out)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.echo"), "w", encoding="utf-8") as fh:
        fh.write(rc.echo_text())
    sim, state = build_simulation(rc)
    sp.set_workers(rc["run.threads"])
    traj = sim.run(state, out_dir=out)
    final_dir = os.path.join(out, "final_state")
    save_state(final_dir, traj.final_state)
    shutil.copy(os.path.join(out, "config.echo"),
                os.path.join(final_dir, "config.echo"))
    with open(os.path.join(final_dir, "meta.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"time={traj.final_state.time!r}\nstep={traj.steps}\n"
                 f"config_hash={sim.config_hash}\n")
    print(f"run complete: {traj.steps} steps to t={traj.final_state.time:g}, "
          f"outputs in {out}")
    return 0


def _cmd_check(args) -> int:
    rc = parse_config(args.config)
    build_simulation(rc)
    print(f"config ok: grid {rc['grid.nx']}x{rc['grid.ny']}x{rc['grid.nz']}, "
          f"preset {rc['ic.preset']}, mode {rc['solver.mode']}, "
          f"dt {rc['solver.dt']:g}, t_end {rc['solver.t_end']:g}")
    return 0


def _cmd_resume(args) -> int:
    ckpt = args.checkpoint
    echo_path = os.path.join(ckpt, "config.echo")
    if not os.path.exists(echo_path):
        raise ConfigError(f"{ckpt}: no config.echo found; not a resumable "
                          f"checkpoint directory")
    rc = parse_config(echo_path)
    out = _resolve_out(rc, args.out)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.echo"), "w", encoding="utf-8") as fh:
        fh.write(rc.echo_text())
    sim, _ = build_simulation(rc)
    state = load_state(ckpt)
    sp.set_workers(rc["run.threads"])
    traj = sim.run(state, out_dir=out)
    final_dir = os.path.join(out, "final_state")
    save_state(final_dir, traj.final_state)
    shutil.copy(os.path.join(out, "config.echo"),
                os.path.join(final_dir, "config.echo"))
    with open(os.path.join(final_dir, "meta.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"time={traj.final_state.time!r}\nstep={traj.steps}\n"
                 f"config_hash={sim.config_hash}\n")
    print(f"resumed to t={traj.final_state.time:g}, outputs in {out}")
    return 0


def _cmd_export_plot(args) -> int:
    src = os.path.join(args.csvdir, "diagnostics.csv")
    dst = os.path.join(args.csvdir, "diagnostics_long.csv")
    with open(src, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    idx_time = header.index("time")
    idx_step = header.index("step")
    with open(dst, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "step", "variable", "value"])
        for row in rows:
            for col, val in zip(header, row):
                if col in ("time", "step"):
                    continue
                w.writerow([row[idx_time], row[idx_step], col, val])
    print(f"wrote {dst}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="moistflow",
        description="Pseudo-spectral moist-air channel simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a simulation from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_check = sub.add_parser("check", help="validate a config without running")
    p_check.add_argument("config")
    p_check.set_defaults(func=_cmd_check)

    p_res = sub.add_parser("resume", help="continue from a checkpoint directory")
    p_res.add_argument("checkpoint")
    p_res.add_argument("--out", default=None)
    p_res.set_defaults(func=_cmd_resume)

    p_exp = sub.add_parser("export-plot",
                           help="emit a long-format CSV for plotting tools")
    p_exp.add_argument("csvdir")
    p_exp.set_defaults(func=_cmd_export_plot)

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures
        print(f"error: {exc}", file=sys.stderr)
        return 1
