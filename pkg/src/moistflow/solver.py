"""Time integration of the homogenized moist-air system.

One step advances density along characteristics of the frozen velocity,
then updates velocity, temperature, and mixing ratios with an implicit
constant-coefficient diffusion solve against an explicit right-hand side
assembled from the frozen state.  Iterating that frozen-coefficient map to
a fixed point is the Picard mode; applying it once is the direct (IMEX)
production mode.  Variable-coefficient mass factors are handled by solving
with their domain mean and lagging the deviation into the explicit side,
so the converged fixed point satisfies the full variable-mass update.
"""

from __future__ import annotations

import os
import time as _time
import warnings
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from . import spectral_ops as sp
from .boundary import BoundarySpec, build_factors
from .fields import (Grid, PhysConstants, ScalarField, State, VectorField,
                     save_state)
from .microphysics import SaturationClosure


class StepRejected(RuntimeError):
    """Raised when a step fails (Picard non-convergence or non-finite
    output); the caller may retry with a smaller dt."""


V_R_PROFILES = {
    "constant": (lambda z: np.ones_like(z),
                 lambda z: np.zeros_like(z)),
    "bump": (lambda z: 1.0 + z**2 * (1.0 - z)**2,
             lambda z: 2.0 * z * (1.0 - z)**2 - 2.0 * z**2 * (1.0 - z)),
}


@dataclass
class SolverConfig:
    dt: float = 1.0e-3
    t_end: float = 1.0e-2
    mode: str = "direct"            # "picard" | "direct"
    picard_tol: float = 1.0e-8
    picard_max_iters: int = 12
    dealias: bool = True
    v_r_profile: str = "constant"   # terminal rain-fall speed profile
    v_r_scale: float = 1.0
    checkpoint_every: int = 0
    snapshot_every: int = 0
    record_states_every: int = 0
    max_dt_halvings: int = 2
    strict_positivity: bool = False
    psi_dt_mode: str = "fd"         # "fd" | "analytic" (needs registered rates)

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.t_end < 0.0:
            raise ValueError("t_end must be nonnegative")
        if self.mode not in ("picard", "direct"):
            raise ValueError(f"unknown solver mode {self.mode!r}")
        if self.picard_tol <= 0.0:
            raise ValueError("picard_tol must be positive")
        if self.picard_max_iters < 1:
            raise ValueError("picard_max_iters must be >= 1")
        if self.v_r_profile not in V_R_PROFILES:
            raise ValueError(f"unknown V_r profile {self.v_r_profile!r}")


@dataclass
class PicardReport:
    """Per-step record of the fixed-point iteration in the sup-L2 +
    dt-weighted H1 metric."""

    increments: list = dc_field(default_factory=list)   # per-iteration dicts
    ratios: list = dc_field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    @property
    def final_ratio(self) -> float:
        return self.ratios[-1] if self.ratios else 0.0

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.ratios)) if self.ratios else 0.0


@dataclass
class RhsBundle:
    """Explicit right-hand sides, one named term per mechanism, so each
    contribution is retrievable for debugging.  Totals are the plain sums
    of the stored terms."""

    momentum: dict
    temperature: dict
    vapor: dict
    cloud: dict
    rain: dict
    p: np.ndarray
    Q_m: np.ndarray
    Q_th: np.ndarray
    source_arrays: dict
    lap_u: tuple = None       # frozen Laplacian of (v1, v2, w)
    grad_div: tuple = None    # frozen grad(div u)
    lap_T: np.ndarray = None  # frozen Laplacian of frak_T

    def total(self, which: str) -> np.ndarray:
        terms = getattr(self, which)
        out = None
        for v in terms.values():
            out = v.copy() if out is None else out + v
        return out

    def momentum_total(self):
        out = [None, None, None]
        for v in self.momentum.values():
            for i in range(3):
                out[i] = v[i].copy() if out[i] is None else out[i] + v[i]
        return tuple(out)


@dataclass
class Trajectory:
    """Summary of a run: final state, diagnostics rows, recorded snapshots."""

    final_state: State
    rows: list
    states: list                  # [(step, State)] when recording is on
    steps: int
    rejections: int
    config: SolverConfig
    wall_time: float


class Simulation:
    """One integration context: grid, constants, boundary data, closure.

    A simulation instance is single-writer (run() owns the state); separate
    instances may run concurrently.
    """

    def __init__(self, grid: Grid, constants: PhysConstants,
                 boundary_spec: BoundarySpec, config: SolverConfig,
                 closure: SaturationClosure | None = None,
                 forcing: dict | None = None, config_hash: str = ""):
        boundary_spec.validate()
        self.grid = grid
        self.constants = constants
        self.bspec = boundary_spec
        self.config = config
        self.closure = closure or SaturationClosure(constants)
        self.forcing = forcing or {}
        self.config_hash = config_hash
        self.bases = sp.make_bases(grid)
        vr_fn, dvr_fn = V_R_PROFILES[config.v_r_profile]
        self.v_r = (config.v_r_scale * vr_fn(grid.z))[None, None, :]
        self.dz_v_r = (config.v_r_scale * dvr_fn(grid.z))[None, None, :]
        if config.psi_dt_mode == "analytic":
            for var, vb in boundary_spec.variables.items():
                if vb.time_dependent and vb.rate_bottom is None and vb.rate_top is None:
                    raise ValueError(
                        f"psi_dt_mode='analytic' requires registered rate "
                        f"callables for time-dependent boundary data ({var!r})")
        self._static_factors = None
        if not boundary_spec.time_dependent:
            self._static_factors = build_factors(boundary_spec, grid, 0.0)
        self._positivity_fixes = 0
        self._rejections = 0
        self.config_echo = ""

    # -- helpers ----------------------------------------------------------

    def factors_at(self, t: float, dt: float | None = None) -> dict:
        if self._static_factors is not None:
            return self._static_factors
        return build_factors(self.bspec, self.grid, t, dt)

    def _deriv_fields(self, vals: np.ndarray, basis, order: int = 1,
                      dealias: bool = False) -> dict:
        """Spectral derivatives of a field, as physical arrays."""
        modal = sp.to_modal_values(vals, basis)
        if dealias:
            modal = sp.dealias_modal(modal, basis)
        out = {
            "x": sp.to_phys_values(sp.dx_modal(modal, basis), basis),
            "y": sp.to_phys_values(sp.dy_modal(modal, basis), basis),
        }
        mz = sp.dz_modal(modal, basis)
        out["z"] = sp.to_phys_values(mz, basis.other)
        if order >= 2:
            out["xx"] = sp.to_phys_values(sp.dx_modal(sp.dx_modal(modal, basis), basis), basis)
            out["yy"] = sp.to_phys_values(sp.dy_modal(sp.dy_modal(modal, basis), basis), basis)
            out["zz"] = sp.to_phys_values(sp.dz_modal(mz, basis.other), basis)
            out["xy"] = sp.to_phys_values(sp.dy_modal(sp.dx_modal(modal, basis), basis), basis)
            out["xz"] = sp.to_phys_values(sp.dx_modal(mz, basis.other), basis.other)
            out["yz"] = sp.to_phys_values(sp.dy_modal(mz, basis.other), basis.other)
        return out

    @staticmethod
    def _taylor_eval(vals, derivs, dx, dy, dz, order: int = 2):
        """Evaluate a field at displaced points via its Taylor series; the
        departure-point evaluator of the semi-Lagrangian step (displacements
        are a fraction of a cell at the CFL numbers this scheme targets)."""
        out = vals + dx * derivs["x"] + dy * derivs["y"] + dz * derivs["z"]
        if order >= 2:
            out = out + 0.5 * (dx * dx * derivs["xx"] + dy * dy * derivs["yy"]
                               + dz * dz * derivs["zz"]) \
                      + dx * dy * derivs["xy"] + dx * dz * derivs["xz"] \
                      + dy * dz * derivs["yz"]
        return out

    # -- density transport --------------------------------------------------

    def density_step(self, state: State, u_frozen: VectorField, dt: float) -> ScalarField:
        """Advance log rho_d along backtracked characteristics of the frozen
        velocity: RK2 midpoint foot, second-order Taylor interpolation at the
        foot, and a midpoint-rule quadrature of the divergence integral.
        Positivity of rho_d is automatic in the log form."""
        g = self.grid
        neu, diri = self.bases.neumann, self.bases.dirichlet
        u1, u2, w = (c.values for c in u_frozen.components())
        wall_w = max(float(np.max(np.abs(w[:, :, 0]))), float(np.max(np.abs(w[:, :, -1]))))
        if wall_w > 1.0e-8 * (1.0 + float(np.max(np.abs(w)))):
            raise ValueError("frozen velocity violates the no-penetration condition")

        if not (np.any(u1) or np.any(u2) or np.any(w)):
            return state.log_rho_d.copy()

        du1 = self._deriv_fields(u1, neu, order=1)
        du2 = self._deriv_fields(u2, neu, order=1)
        dw = self._deriv_fields(w, diri, order=1)
        hx, hy = -0.5 * dt * u1, -0.5 * dt * u2
        hz = -0.5 * dt * w
        um1 = self._taylor_eval(u1, du1, hx, hy, hz, order=1)
        um2 = self._taylor_eval(u2, du2, hx, hy, hz, order=1)
        umw = self._taylor_eval(w, dw, hx, hy, hz, order=1)

        dx_f, dy_f = -dt * um1, -dt * um2
        foot_z = np.clip(g.z[None, None, :] - dt * umw, 0.0, 1.0)
        overshoot = np.max(np.abs((g.z[None, None, :] - dt * umw) - foot_z))
        if overshoot > dt * max(float(np.max(np.abs(w))), 1e-300):
            warnings.warn(f"characteristic feet clamped to the channel "
                          f"(overshoot {overshoot:.3e})")
        dz_f = foot_z - g.z[None, None, :]

        dlog = self._deriv_fields(state.log_rho_d.values, neu, order=2)
        log_at_foot = self._taylor_eval(state.log_rho_d.values, dlog,
                                        dx_f, dy_f, dz_f, order=2)

        divu = sp.div(u_frozen, self.bases).values
        ddiv = self._deriv_fields(divu, neu, order=1)
        div_mid = self._taylor_eval(divu, ddiv, 0.5 * dx_f, 0.5 * dy_f,
                                    0.5 * dz_f, order=1)
        return ScalarField(g, log_at_foot - dt * div_mid)

    # -- explicit right-hand sides ------------------------------------------

    def assemble_rhs(self, frozen: State, rho_vals: np.ndarray, factors: dict,
                     t_new: float | None = None) -> RhsBundle:
        """Evaluate the frozen-state right-hand sides of the homogenized
        system: advection, sedimentation, pressure gradient, gravity, the
        B/psi lifting corrections, and the clipped phase-change sources."""
        c = self.constants
        g = self.grid
        neu, diri = self.bases.neumann, self.bases.dirichlet
        dealias = self.config.dealias

        fT, fv, fc, fr = factors["T"], factors["v"], factors["c"], factors["r"]
        u1, u2, w = (comp.values for comp in frozen.u.components())

        # frozen-velocity derivatives, divergence, and the second-order
        # pieces the mean-coefficient splitting lags into the explicit side
        m_u1 = sp.to_modal_values(u1, neu)
        m_u2 = sp.to_modal_values(u2, neu)
        m_w = sp.to_modal_values(w, diri)
        if dealias:
            m_u1 = sp.dealias_modal(m_u1, neu)
            m_u2 = sp.dealias_modal(m_u2, neu)
            m_w = sp.dealias_modal(m_w, diri)

        def deriv_from_modal(modal, basis):
            mz = sp.dz_modal(modal, basis)
            return {"x": sp.to_phys_values(sp.dx_modal(modal, basis), basis),
                    "y": sp.to_phys_values(sp.dy_modal(modal, basis), basis),
                    "z": sp.to_phys_values(mz, basis.other)}

        du1 = deriv_from_modal(m_u1, neu)
        du2 = deriv_from_modal(m_u2, neu)
        dw = deriv_from_modal(m_w, diri)
        div_modal = (sp.dx_modal(m_u1, neu) + sp.dy_modal(m_u2, neu)
                     + sp.dz_modal(m_w, diri))
        div_u = sp.to_phys_values(div_modal, neu)
        lap_u = (sp.to_phys_values(-neu.eigenvalues * m_u1, neu),
                 sp.to_phys_values(-neu.eigenvalues * m_u2, neu),
                 sp.to_phys_values(-diri.eigenvalues * m_w, diri))
        grad_div = (sp.to_phys_values(sp.dx_modal(div_modal, neu), neu),
                    sp.to_phys_values(sp.dy_modal(div_modal, neu), neu),
                    sp.to_phys_values(sp.dz_modal(div_modal, neu), diri))

        # homogenized scalars: lifted field G = frak + psi and derivatives
        lifted = {}
        lap_T = None
        for name, field_, fac in (("T", frozen.frak_T, fT),
                                  ("v", frozen.frak_q_v, fv),
                                  ("c", frozen.frak_q_c, fc),
                                  ("r", frozen.frak_q_r, fr)):
            modal = sp.to_modal_values(field_.values, neu)
            if dealias:
                modal = sp.dealias_modal(modal, neu)
            d = deriv_from_modal(modal, neu)
            if name == "T":
                lap_T = sp.to_phys_values(-neu.eigenvalues * modal, neu)
            psi = fac.psi
            if psi.is_zero:
                G = field_.values
                Gx, Gy, Gz = d["x"], d["y"], d["z"]
            else:
                G = field_.values + fac.psi_values
                Gx, Gy = d["x"] + psi.dx_values(), d["y"] + psi.dy_values()
                Gz = d["z"] + fac.psi_dz
            lifted[name] = {"G": G, "x": Gx, "y": Gy, "z": Gz, "frak": field_.values}

        # dehomogenized physical variables from the frozen state
        T_o = fT.binv_profile * lifted["T"]["G"]
        q_o = {n: factors[n].binv_profile * lifted[n]["G"] for n in ("v", "c", "r")}

        qv_p = np.maximum(q_o["v"], 0.0)
        qc_p = np.maximum(q_o["c"], 0.0)
        qr_p = np.maximum(q_o["r"], 0.0)
        T_p = np.maximum(T_o, 0.0)

        Q_m = 1.0 + qv_p + qc_p + qr_p
        gam = c.gamma
        Q_th = (c.c_pd / gam
                + (c.c_pv / gam + c.c_pv / c.c_pd * c.R_d - c.R_v) * qv_p
                + (c.c_l / gam + c.c_l / c.c_pd * c.R_d) * (qc_p + qr_p))
        Q_cp = -c.R_d - c.R_v * q_o["v"]
        Q_1 = c.c_pv - c.c_l - c.R_v
        Q_2 = c.L_ref - (c.c_pv - c.c_l) * c.T_ref

        p = rho_vals * (c.R_d + c.R_v * q_o["v"]) * T_o
        q_vs = self.closure(p, T_o)

        denom = 1.0 + qv_p + qc_p + qr_p
        pos = lambda a: (np.abs(a) + a) * 0.5
        S_ev = c.c_ev * T_p * (c.R_d + c.R_v * qv_p) / denom * pos(q_vs - qv_p) * qr_p
        S_cd = c.c_cd * (qv_p - q_vs) * qc_p + c.c_cn * pos(q_o["v"] - q_vs) * c.q_cn
        S_ac = c.c_ac * pos(q_o["c"] - c.q_ac)
        S_cr = c.c_cr * qc_p * qr_p

        forcing = {}
        if self.forcing and t_new is not None:
            forcing = {k: fn(t_new) for k, fn in self.forcing.items()}

        # momentum ----------------------------------------------------------
        dp = self._deriv_fields(p, neu)
        rQm = rho_vals * Q_m
        drag = rho_vals * q_o["r"] * self.v_r
        momentum = {
            "pressure_gradient": (-dp["x"], -dp["y"], -dp["z"]),
            "advection": (-rQm * (u1 * du1["x"] + u2 * du1["y"] + w * du1["z"]),
                          -rQm * (u1 * du2["x"] + u2 * du2["y"] + w * du2["z"]),
                          -rQm * (u1 * dw["x"] + u2 * dw["y"] + w * dw["z"])),
            "sedimentation_drag": (drag * du1["z"], drag * du2["z"], drag * dw["z"]),
            "gravity": (np.zeros(g.shape), np.zeros(g.shape), -rQm * c.g),
        }
        if any(k in forcing for k in ("u1", "u2", "w")):
            zero = np.zeros(g.shape)
            momentum["forcing"] = (forcing.get("u1", zero), forcing.get("u2", zero),
                                   forcing.get("w", zero))

        # temperature ---------------------------------------------------------
        lT = lifted["T"]
        G_T, ap_T = lT["G"], fT.dz_log_b
        qrV = c.c_l * q_o["r"] * self.v_r
        temperature = {
            "advection": -Q_th * (u1 * lT["x"] + u2 * lT["y"] + w * lT["z"]),
            "sedimentation": qrV * (lT["z"] - ap_T * G_T),
            "robin_correction": (Q_th * w * ap_T * G_T
                                 + c.kappa * (-2.0 * ap_T * lT["z"]
                                              + fT.dzz_binv_b * G_T
                                              + fT.psi_laplacian)),
            "compression": Q_cp * G_T * div_u,
            "phase_heat": -(Q_1 * G_T + Q_2 * fT.b_profile) * (S_ev - S_cd),
        }
        if not fT.psi.is_zero or fT.psi_rate is not None:
            temperature["psi_tendency"] = -Q_th * fT.psi_dt
        if "T" in forcing:
            temperature["forcing"] = forcing["T"]

        # moisture ------------------------------------------------------------
        def moisture_terms(name, fac, source_term, fkey):
            l = lifted[name]
            G, ap = l["G"], fac.dz_log_b
            terms = {
                "advection": -(u1 * l["x"] + u2 * l["y"] + w * l["z"]),
                "robin_correction": (w * ap * G - 2.0 * ap * l["z"]
                                     + fac.dzz_binv_b * G + fac.psi_laplacian),
                "sources": fac.b_profile * source_term,
            }
            if not fac.psi.is_zero or fac.psi_rate is not None:
                terms["psi_tendency"] = -fac.psi_dt
            if fkey in forcing:
                terms["forcing"] = forcing[fkey]
            return terms

        vapor = moisture_terms("v", fv, S_ev - S_cd, "qv")
        cloud = moisture_terms("c", fc, S_cd - S_ac - S_cr, "qc")
        rain = moisture_terms("r", fr, S_ac + S_cr - S_ev, "qr")

        lr = lifted["r"]
        dz_log_rho = sp.to_phys_values(
            sp.dz_modal(sp.to_modal_values(np.log(rho_vals), neu), neu), diri)
        rain["sedimentation"] = (self.v_r * lr["z"]
                                 + lr["G"] * (self.dz_v_r
                                              + self.v_r * dz_log_rho
                                              - self.v_r * fr.dz_log_b))

        for eq, terms in (("temperature", temperature), ("vapor", vapor),
                          ("cloud", cloud), ("rain", rain)):
            for tname, arr in terms.items():
                if not np.all(np.isfinite(arr)):
                    raise FloatingPointError(f"non-finite RHS term {eq}.{tname}")
        for tname, arrs in momentum.items():
            for arr in arrs:
                if not np.all(np.isfinite(arr)):
                    raise FloatingPointError(f"non-finite RHS term momentum.{tname}")

        return RhsBundle(momentum, temperature, vapor, cloud, rain, p, Q_m, Q_th,
                         {"S_ev": S_ev, "S_cd": S_cd, "S_ac": S_ac, "S_cr": S_cr,
                          "q_vs": q_vs},
                         lap_u=lap_u, grad_div=grad_div, lap_T=lap_T)

    # -- one frozen-coefficient update ---------------------------------------

    def _scalar_solve(self, g_vals: np.ndarray, a: float, basis) -> np.ndarray:
        modal = sp.to_modal_values(g_vals, basis)
        if self.config.dealias:
            modal = sp.dealias_modal(modal, basis)
        return sp.to_phys_values(modal / (1.0 + a * basis.eigenvalues), basis)

    def _vector_solve(self, g1, g2, g3, a_mu, a_mulam):
        neu, diri = self.bases.neumann, self.bases.dirichlet
        m1 = sp.to_modal_values(g1, neu)
        m2 = sp.to_modal_values(g2, neu)
        m3 = sp.to_modal_values(g3, diri)
        if self.config.dealias:
            m1 = sp.dealias_modal(m1, neu)
            m2 = sp.dealias_modal(m2, neu)
            m3 = sp.dealias_modal(m3, diri)
        gdiv = sp.dx_modal(m1, neu) + sp.dy_modal(m2, neu) + sp.dz_modal(m3, diri)
        d = gdiv / (1.0 + (a_mu + a_mulam) * neu.eigenvalues)
        den_n = 1.0 + a_mu * neu.eigenvalues
        u1 = (m1 + a_mulam * sp.dx_modal(d, neu)) / den_n
        u2 = (m2 + a_mulam * sp.dy_modal(d, neu)) / den_n
        u3 = (m3 + a_mulam * sp.dz_modal(d, neu)) / (1.0 + a_mu * diri.eigenvalues)
        return (sp.to_phys_values(u1, neu), sp.to_phys_values(u2, neu),
                sp.to_phys_values(u3, diri))

    def linear_step(self, frozen: State, current: State, dt: float,
                    factors: dict | None = None) -> State:
        """Backward-Euler update of the associated linear system: implicit
        constant-coefficient diffusion, explicit frozen right-hand sides,
        mean-coefficient mass factors with the deviation lagged on the
        frozen iterate.  ``frozen`` must already carry the advanced density."""
        c = self.constants
        g = self.grid
        if factors is None:
            factors = self.factors_at(current.time, dt)
        rho_vals = np.exp(frozen.log_rho_d.values)
        rhs = self.assemble_rhs(frozen, rho_vals, factors, t_new=current.time + dt)

        # moisture first, then temperature, then momentum (declared splitting
        # order; the right-hand sides all come from the same frozen state)
        new_q = {}
        for name, cur, fro in (("vapor", current.frak_q_v, frozen.frak_q_v),
                               ("cloud", current.frak_q_c, frozen.frak_q_c),
                               ("rain", current.frak_q_r, frozen.frak_q_r)):
            gv = cur.values + dt * rhs.total(name)
            new_q[name] = self._scalar_solve(gv, dt, self.bases.neumann)

        # temperature: divide by the mass factor, solve with the domain-mean
        # diffusivity, lag the deviation times the frozen Laplacian
        Q_th = rhs.Q_th
        nu_T = c.kappa / Q_th
        nu_T_bar = float(np.mean(nu_T))
        gT = current.frak_T.values + dt * (rhs.total("temperature") / Q_th
                                           + (nu_T - nu_T_bar) * rhs.lap_T)
        new_T = self._scalar_solve(gT, nu_T_bar * dt, self.bases.neumann)

        # momentum: same mean-coefficient splitting for both viscous operators
        M = rho_vals * rhs.Q_m
        nu = c.mu / M
        nul = (c.mu + c.lam) / M
        nu_bar = float(np.mean(nu))
        nul_bar = float(np.mean(nul))
        I = rhs.momentum_total()
        cur_u = (current.u.v1.values, current.u.v2.values, current.u.w.values)
        gu = [cur_u[i] + dt * (I[i] / M
                               + (nu - nu_bar) * rhs.lap_u[i]
                               + (nul - nul_bar) * rhs.grad_div[i])
              for i in range(3)]
        u1, u2, u3 = self._vector_solve(gu[0], gu[1], gu[2],
                                        nu_bar * dt, nul_bar * dt)

        for arr in (u1, u2, u3, new_T, new_q["vapor"], new_q["cloud"], new_q["rain"]):
            if not np.all(np.isfinite(arr)):
                raise StepRejected("non-finite fields after linear step")

        u_new = VectorField(ScalarField(g, u1), ScalarField(g, u2), ScalarField(g, u3))
        return State(frozen.log_rho_d, u_new, ScalarField(g, new_T),
                     ScalarField(g, new_q["vapor"]), ScalarField(g, new_q["cloud"]),
                     ScalarField(g, new_q["rain"]), current.time + dt)

    # -- metric for increments ------------------------------------------------

    def _m_norm_parts(self, a: State, b: State, dt: float) -> dict:
        """Increment size per variable in the sup-L2 + dt-weighted H1 metric
        (the one-step discretization of L-inf(L2) intersect L2(H1))."""
        neu, diri = self.bases.neumann, self.bases.dirichlet
        entries = {}
        tot_l2 = tot_h1 = 0.0

        def add(name, da, basis):
            nonlocal tot_l2, tot_h1
            modal = sp.to_modal_values(da, basis)
            l2s = sp.modal_sobolev_sq(modal, basis, 0)
            h1s = sp.modal_sobolev_sq(modal, basis, 1)
            entries[name] = np.sqrt(l2s) + np.sqrt(dt * h1s)
            tot_l2 += l2s
            tot_h1 += h1s

        add("u1", a.u.v1.values - b.u.v1.values, neu)
        add("u2", a.u.v2.values - b.u.v2.values, neu)
        add("w", a.u.w.values - b.u.w.values, diri)
        add("T", a.frak_T.values - b.frak_T.values, neu)
        add("qv", a.frak_q_v.values - b.frak_q_v.values, neu)
        add("qc", a.frak_q_c.values - b.frak_q_c.values, neu)
        add("qr", a.frak_q_r.values - b.frak_q_r.values, neu)
        entries["u"] = entries["u1"] + entries["u2"] + entries["w"]
        entries["total"] = float(np.sqrt(tot_l2) + np.sqrt(dt * tot_h1))
        return entries

    def _state_scale(self, s: State) -> float:
        """Cheap size estimate of the iterated fields (floor for the
        convergence test); RMS times the domain-volume factor."""
        vol = np.sqrt(self.grid.volume)
        total = 0.0
        for f in (s.u.v1, s.u.v2, s.u.w, s.frak_T,
                  s.frak_q_v, s.frak_q_c, s.frak_q_r):
            total += float(np.mean(f.values ** 2))
        return vol * np.sqrt(total)

    # -- the solution map and its fixed point ---------------------------------

    def picard_solve(self, state: State, dt: float,
                     max_iters: int | None = None):
        """Iterate the frozen-coefficient map (density transport, RHS
        assembly, linear solves) to its fixed point.  Stops when the metric
        increment drops below picard_tol relative to the first increment;
        raises StepRejected on non-convergence.  With max_iters == 1 this is
        by definition the direct mode and no convergence test is applied."""
        cfg = self.config
        iters = cfg.picard_max_iters if max_iters is None else max_iters
        factors = self.factors_at(state.time, dt)
        report = PicardReport()
        floor = 1.0e-14 * (1.0 + self._state_scale(state))

        x_prev = state
        first = None
        for m in range(1, iters + 1):
            log_rho_new = self.density_step(state, x_prev.u, dt)
            frozen = replace(x_prev, log_rho_d=log_rho_new)
            x_new = self.linear_step(frozen, state, dt, factors)
            parts = self._m_norm_parts(x_new, x_prev, dt)
            inc = parts["total"]
            report.increments.append(parts)
            report.iterations = m
            if m >= 2:
                prev_inc = report.increments[-2]["total"]
                if prev_inc > 0.0:
                    report.ratios.append(inc / prev_inc)
            if first is None:
                first = inc
            if iters == 1:
                report.converged = True
                return x_new, report
            if inc <= max(cfg.picard_tol * first, floor):
                report.converged = True
                return x_new, report
            if not np.isfinite(inc) or inc > 1.0e3 * max(first, floor):
                raise StepRejected(
                    f"Picard iteration diverging at dt={dt:g} "
                    f"(increment {inc:.3e} after {m} iterations)")
            x_prev = x_new
        raise StepRejected(
            f"Picard iteration did not converge in {iters} iterations at dt={dt:g}")

    def direct_step(self, state: State, dt: float) -> State:
        """Single IMEX update: one application of the frozen-coefficient map
        (identical, bit for bit, to picard_solve with one iteration)."""
        umax = max(float(np.max(np.abs(c.values))) for c in state.u.components())
        h = min(self.grid.dx, self.grid.dy, self.grid.dz_spacing)
        if umax * dt / h > 1.0:
            warnings.warn(f"advective CFL {umax * dt / h:.2f} exceeds 1")
        new_state, _ = self.picard_solve(state, dt, max_iters=1)
        return new_state

    # -- positivity fixer (off by default) ------------------------------------

    def _apply_positivity_fix(self, state: State, factors: dict) -> State:
        from .boundary import dehomogenize, homogenize
        w = self.grid.quad_weights()
        rho = np.exp(state.log_rho_d.values)
        out = {}
        for attr, var in (("frak_q_v", "v"), ("frak_q_c", "c"), ("frak_q_r", "r")):
            q = dehomogenize(getattr(state, attr), factors[var]).values
            neg = np.minimum(q, 0.0)
            if not np.any(neg):
                out[attr] = getattr(state, attr)
                continue
            self._positivity_fixes += 1
            pos = np.maximum(q, 0.0)
            deficit = -float(np.sum(rho * neg * w))
            total_pos = float(np.sum(rho * pos * w))
            scale = 1.0 - deficit / total_pos if total_pos > deficit else 0.0
            fixed = ScalarField(self.grid, pos * scale)
            out[attr] = homogenize(fixed, factors[var])
        return replace(state, **out)

    # -- run loop --------------------------------------------------------------

    def _advance(self, state: State, dt: float, depth: int = 0):
        try:
            if self.config.mode == "picard":
                return self.picard_solve(state, dt)
            return self.direct_step(state, dt), None
        except StepRejected:
            if depth >= self.config.max_dt_halvings:
                raise
            self._rejections += 1
            half, rep1 = self._advance(state, 0.5 * dt, depth + 1)
            out, rep2 = self._advance(half, 0.5 * dt, depth + 1)
            return out, (rep2 or rep1)

    def run(self, initial: State, out_dir: str | None = None) -> Trajectory:
        """Advance to t_end, emitting one diagnostics row per step (plus the
        initial row), with snapshots and checkpoints on the configured
        cadence.  Rejected steps are retried at half the step size."""
        from . import diagnostics as dg

        cfg = self.config
        writer = timings = None
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            writer = dg.DiagnosticsWriter(os.path.join(out_dir, "diagnostics.csv"))
            timings = open(os.path.join(out_dir, "timings.csv"), "w", encoding="utf-8")
            timings.write("step,wall_seconds\n")

        t0 = _time.perf_counter()
        state = initial
        factors = self.factors_at(state.time, cfg.dt)
        rows = []
        states = []
        self._rejections = 0
        step = 0

        def record(report, wall):
            row = dg.compute_row(state, factors, self.bases, step=step,
                                 picard_report=report, wall_clock=wall)
            rows.append(row)
            if writer is not None:
                writer.emit(row)
            if timings is not None:
                timings.write(f"{step},{wall!r}\n")
            if cfg.record_states_every and step % cfg.record_states_every == 0:
                states.append((step, state.copy()))
            if cfg.snapshot_every and out_dir and step % cfg.snapshot_every == 0:
                snap = os.path.join(out_dir, f"snapshot_{step:06d}")
                save_state(snap, state)
            if cfg.checkpoint_every and out_dir and step > 0 \
                    and step % cfg.checkpoint_every == 0:
                self._write_checkpoint(out_dir, step, state)

        record(None, 0.0)
        n_steps = int(round((cfg.t_end - initial.time) / cfg.dt))
        for _ in range(max(n_steps, 0)):
            tic = _time.perf_counter()
            try:
                state, report = self._advance(state, cfg.dt)
            except StepRejected as exc:
                raise RuntimeError(f"unrecoverable step rejection at "
                                   f"t={state.time:g}: {exc}") from exc
            if self.config.strict_positivity:
                factors = self.factors_at(state.time, cfg.dt)
                state = self._apply_positivity_fix(state, factors)
            step += 1
            factors = self.factors_at(state.time, cfg.dt)
            record(report, _time.perf_counter() - tic)

        if cfg.checkpoint_every and out_dir:
            self._write_checkpoint(out_dir, step, state)
        if timings is not None:
            timings.close()
        if writer is not None:
            writer.close()
        if self._positivity_fixes:
            warnings.warn(f"positivity fixer active on {self._positivity_fixes} "
                          f"field updates")
        return Trajectory(state, rows, states, step, self._rejections, cfg,
                          _time.perf_counter() - t0)

    def _write_checkpoint(self, out_dir: str, step: int, state: State):
        path = os.path.join(out_dir, "checkpoints", f"step_{step:06d}")
        save_state(path, state)
        with open(os.path.join(path, "meta.txt"), "w", encoding="utf-8") as fh:
            fh.write(f"time={state.time!r}\nstep={step}\n"
                     f"config_hash={self.config_hash}\n")
        if self.config_echo:
            with open(os.path.join(path, "config.echo"), "w",
                      encoding="utf-8") as fh:
                fh.write(self.config_echo)
