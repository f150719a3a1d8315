"""Run monitors: Sobolev norms, conservation and sign diagnostics, CSV
emission, and the two-run continuous-dependence probe.

The monitored quantities mirror the regularity class of the local solution:
H2 control of velocity, temperature, mixing ratios, sqrt(rho_d), and
log(rho_d), dry-air mass, total water content, field minima, and the L2
norms of the negative parts of the physical (dehomogenized) variables.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import spectral_ops as sp
from .boundary import dehomogenize
from .fields import ScalarField, State

COLUMNS = (
    "step", "time", "picard_iterations", "picard_final_ratio",
    "l2_u", "h1_u", "h2_u",
    "l2_T", "h1_T", "h2_T",
    "l2_qv", "h1_qv", "h2_qv",
    "l2_qc", "h1_qc", "h2_qc",
    "l2_qr", "h1_qr", "h2_qr",
    "l2_sqrt_rho", "h1_sqrt_rho", "h2_sqrt_rho",
    "l2_log_rho", "h1_log_rho", "h2_log_rho",
    "dry_mass", "total_water",
    "min_T", "min_qv", "min_qc", "min_qr", "min_rho",
    "neg_T", "neg_qv", "neg_qc", "neg_qr",
)


@dataclass
class DiagnosticsRow:
    step: int
    time: float
    picard_iterations: int
    picard_final_ratio: float
    norms: dict                 # name -> (l2, h1, h2)
    dry_mass: float
    total_water: float
    minima: dict                # name -> min value
    negative_norms: dict        # name -> ||f-||_2
    wall_clock: float = 0.0     # kept out of the CSV so runs stay bitwise reproducible

    def csv_values(self):
        vals = [self.step, repr(self.time), self.picard_iterations,
                repr(self.picard_final_ratio)]
        for name in ("u", "T", "qv", "qc", "qr", "sqrt_rho", "log_rho"):
            vals.extend(repr(x) for x in self.norms[name])
        vals.append(repr(self.dry_mass))
        vals.append(repr(self.total_water))
        for name in ("T", "qv", "qc", "qr", "rho"):
            vals.append(repr(self.minima[name]))
        for name in ("T", "qv", "qc", "qr"):
            vals.append(repr(self.negative_norms[name]))
        return vals


def sobolev_norm(f: ScalarField, order: int, bases: sp.BasisPair,
                 kind: str = sp.NEUMANN) -> float:
    """H^k norm, k in {0, 1, 2}: one term per distinct multi-index, spectral
    derivatives, exact quadrature of the modal representation."""
    if order not in (0, 1, 2):
        raise ValueError("sobolev_norm supports orders 0, 1, 2 only")
    basis = bases.neumann if kind == sp.NEUMANN else bases.dirichlet
    modal = sp.to_modal_values(f.values, basis)
    return float(np.sqrt(sp.modal_sobolev_sq(modal, basis, order)))


def _norm_triplet(vals: np.ndarray, basis) -> tuple:
    modal = sp.to_modal_values(vals, basis)
    return tuple(float(np.sqrt(sp.modal_sobolev_sq(modal, basis, k)))
                 for k in (0, 1, 2))


def negativity_monitor(state: State, factors: dict, bases: sp.BasisPair) -> tuple:
    """L2 norms of the negative parts of the physical T, q_v, q_c, q_r
    (the sign statements concern the dehomogenized variables)."""
    w = state.grid.quad_weights()
    out = []
    for attr, var in (("frak_T", "T"), ("frak_q_v", "v"),
                      ("frak_q_c", "c"), ("frak_q_r", "r")):
        phys = dehomogenize(getattr(state, attr), factors[var]).values
        neg = (np.abs(phys) - phys) * 0.5
        out.append(float(np.sqrt(np.sum(neg * neg * w))))
    return tuple(out)


def compute_row(state: State, factors: dict, bases: sp.BasisPair, step: int,
                picard_report=None, wall_clock: float = 0.0) -> DiagnosticsRow:
    g = state.grid
    neu, diri = bases.neumann, bases.dirichlet
    rho = np.exp(state.log_rho_d.values)

    phys = {}
    for attr, var, name in (("frak_T", "T", "T"), ("frak_q_v", "v", "qv"),
                            ("frak_q_c", "c", "qc"), ("frak_q_r", "r", "qr")):
        phys[name] = dehomogenize(getattr(state, attr), factors[var]).values

    tri = {}
    comp = [_norm_triplet(c.values, b) for c, b in
            ((state.u.v1, neu), (state.u.v2, neu), (state.u.w, diri))]
    tri["u"] = tuple(float(np.sqrt(sum(t[k] ** 2 for t in comp))) for k in range(3))
    for name in ("T", "qv", "qc", "qr"):
        tri[name] = _norm_triplet(phys[name], neu)
    tri["sqrt_rho"] = _norm_triplet(np.sqrt(rho), neu)
    tri["log_rho"] = _norm_triplet(state.log_rho_d.values, neu)

    w = g.quad_weights()
    dry_mass = float(np.sum(rho * w))
    total_water = float(np.sum(rho * (phys["qv"] + phys["qc"] + phys["qr"]) * w))

    minima = {name: float(np.min(phys[name])) for name in ("T", "qv", "qc", "qr")}
    minima["rho"] = float(np.min(rho))
    neg = {}
    for name in ("T", "qv", "qc", "qr"):
        nvals = (np.abs(phys[name]) - phys[name]) * 0.5
        neg[name] = float(np.sqrt(np.sum(nvals * nvals * w)))

    iters = picard_report.iterations if picard_report is not None else 0
    ratio = picard_report.final_ratio if picard_report is not None else 0.0
    return DiagnosticsRow(step=step, time=state.time, picard_iterations=iters,
                          picard_final_ratio=ratio, norms=tri, dry_mass=dry_mass,
                          total_water=total_water, minima=minima,
                          negative_norms=neg, wall_clock=wall_clock)


class DiagnosticsWriter:
    """Append-only CSV emitter; header written once, column order frozen,
    RFC-4180 quoting (values are plain numerics, so never quoted)."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._fh, quoting=csv.QUOTE_MINIMAL)
        self._writer.writerow(COLUMNS)
        self._fh.flush()

    def emit(self, row: DiagnosticsRow) -> None:
        self._writer.writerow(row.csv_values())
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


@dataclass
class StabilityReport:
    """Continuous-dependence measurement between two runs."""

    times: np.ndarray
    delta_rho: np.ndarray
    delta_fields: np.ndarray        # combined L2 of (u, frak_T, frak_q_j)
    cumulative_h1: np.ndarray       # running dt-weighted sum of H1 differences
    growth_rate: float              # fitted C in c * exp(C t)
    envelope_coef: float            # max delta / (exp(C t) * delta(0))
    initial_delta: float


def _combined_l2(a: State, b: State, bases: sp.BasisPair) -> tuple:
    neu, diri = bases.neumann, bases.dirichlet
    l2 = h1 = 0.0
    for fa, fb, basis in ((a.u.v1, b.u.v1, neu), (a.u.v2, b.u.v2, neu),
                          (a.u.w, b.u.w, diri), (a.frak_T, b.frak_T, neu),
                          (a.frak_q_v, b.frak_q_v, neu),
                          (a.frak_q_c, b.frak_q_c, neu),
                          (a.frak_q_r, b.frak_q_r, neu)):
        modal = sp.to_modal_values(fa.values - fb.values, basis)
        l2 += sp.modal_sobolev_sq(modal, basis, 0)
        h1 += sp.modal_sobolev_sq(modal, basis, 1)
    return np.sqrt(l2), h1


def stability_probe(run_a, run_b, bases: sp.BasisPair) -> StabilityReport:
    """Difference trajectory of two runs with identical configuration and
    perturbed initial data; fits a log-linear growth rate and reports the
    exponential-envelope constant."""
    if run_a.config != run_b.config:
        raise ValueError("stability probe requires identical run configurations")
    if len(run_a.states) != len(run_b.states) or not run_a.states:
        raise ValueError("runs must record states on the same cadence")

    times, drho, dfields, cum = [], [], [], []
    running = 0.0
    dt = run_a.config.dt
    grid = run_a.final_state.grid
    w = grid.quad_weights()
    for (sa, a), (sb, b) in zip(run_a.states, run_b.states):
        if sa != sb:
            raise ValueError("recorded steps are not aligned")
        times.append(a.time)
        dr = np.exp(a.log_rho_d.values) - np.exp(b.log_rho_d.values)
        drho.append(float(np.sqrt(np.sum(dr * dr * w))))
        l2, h1sq = _combined_l2(a, b, bases)
        dfields.append(float(l2))
        running += dt * h1sq
        cum.append(running)

    times = np.asarray(times)
    dfields = np.asarray(dfields)
    drho = np.asarray(drho)
    cum = np.sqrt(np.asarray(cum))

    mask = dfields > 0.0
    if np.count_nonzero(mask) >= 2:
        slope, intercept = np.polyfit(times[mask], np.log(dfields[mask]), 1)
    else:
        slope, intercept = 0.0, -np.inf
    d0 = dfields[0] if dfields[0] > 0.0 else max(float(np.max(dfields)), 1e-300)
    envelope = float(np.max(dfields / (np.exp(slope * times) * d0)))
    return StabilityReport(times=times, delta_rho=drho, delta_fields=dfields,
                           cumulative_h1=cum, growth_rate=float(slope),
                           envelope_coef=envelope, initial_delta=float(dfields[0]))
