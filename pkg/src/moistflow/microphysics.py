"""Warm-rain bulk microphysics: saturation closure and phase-change rates.

The four rates (rain evaporation, condensation, auto-conversion, collection)
come in a raw form and a clipped form.  The clipped form replaces selected
arguments by their nonnegative parts, exactly where the approximation system
places them: the condensation nucleation term and the auto-conversion
threshold deliberately keep unclipped arguments.  Whenever all inputs are
nonnegative the two forms coincide.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .fields import (PhysConstants, ScalarField, check_physical,
                     check_same_grid, negative_part, positive_part)


def _pos(a: np.ndarray) -> np.ndarray:
    return (np.abs(a) + a) * 0.5


@dataclass
class SaturationClosure:
    """Saturation mixing ratio q_vs(p, T).

    Any closure must be nonnegative, bounded by q_vs_star, Lipschitz in
    (p, T) with the documented constants, and vanish for T <= 0.  The
    default closure is

        q_vs = q_vs_star * s(T) * p_ref / (p_ref + p+),
        s(T) = clip(2 T^2 / (T^2 + T_ref^2), 0, 1),  s(T) = 0 for T <= 0,

    which satisfies all of the above by construction.  User closures are
    sample-audited at registration.
    """

    constants: PhysConstants
    kind: str = "default"
    func: Callable = dc_field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == "default":
            self.func = self._default
        elif self.func is None:
            raise ValueError("user-plugged closure requires a callable")
        else:
            self._audit()

    def _default(self, p: np.ndarray, T: np.ndarray) -> np.ndarray:
        c = self.constants
        s = np.where(T > 0.0,
                     np.clip(2.0 * T * T / (T * T + c.T_ref ** 2), 0.0, 1.0),
                     0.0)
        return c.q_vs_star * s * c.p_ref / (c.p_ref + _pos(p))

    def lipschitz_bounds(self) -> tuple:
        """Documented (L_p, L_T) bounds on the partial difference quotients.

        For the default closure |dq/dp| <= q_vs_star / p_ref and
        |dq/dT| <= 1.3 q_vs_star / T_ref (the factor 3*sqrt(3)/4 < 1.3
        bounds the maximum slope of s)."""
        c = self.constants
        return (c.q_vs_star / c.p_ref, 1.3 * c.q_vs_star / c.T_ref)

    def _audit(self, samples: int = 400):
        """Sampled bound/sign audit for user-plugged closures."""
        c = self.constants
        rng = np.random.default_rng(0)
        p = np.abs(rng.normal(scale=3.0 * c.p_ref, size=samples))
        T = rng.normal(scale=3.0 * c.T_ref, size=samples)
        q = np.asarray(self.func(p, T))
        if np.any(q < 0.0) or np.any(q > c.q_vs_star * (1.0 + 1e-12)):
            raise ValueError("saturation closure violates 0 <= q_vs <= q_vs_star")
        if np.any(q[T <= 0.0] != 0.0):
            raise ValueError("saturation closure must vanish for T <= 0")

    def __call__(self, p: np.ndarray, T: np.ndarray) -> np.ndarray:
        return self.func(p, T)


def saturation_q_vs(p: ScalarField, T: ScalarField,
                    closure: SaturationClosure) -> ScalarField:
    check_physical(p, T)
    grid = check_same_grid(p, T)
    if np.any(p.values <= 0.0):
        raise ValueError("saturation closure requires positive pressure")
    return ScalarField(grid, closure(p.values, T.values))


@dataclass
class SourceBundle:
    """Evaluated microphysics rates on the grid.

    In clipped form S_ev, S_ac, S_cr are nonnegative by construction;
    S_cd carries no sign constraint (its condensation term may reverse).
    """

    S_ev: ScalarField
    S_cd: ScalarField
    S_ac: ScalarField
    S_cr: ScalarField
    clipped: bool
    q_vs_used: ScalarField


def sources(T: ScalarField, q_v: ScalarField, q_c: ScalarField, q_r: ScalarField,
            q_vs: ScalarField, constants: PhysConstants,
            clipped: bool = True) -> SourceBundle:
    """Evaluate the four phase-change rates.

    Raw form:
        S_ev = c_ev T (R_d + R_v q_v)/(1 + q_v + q_c + q_r) (q_vs - q_v)+ q_r
        S_cd = c_cd (q_v - q_vs) q_c + c_cn (q_v - q_vs)+ q_cn
        S_ac = c_ac (q_c - q_ac)+
        S_cr = c_cr q_c q_r
    Clipped form uses T+, q_j+ exactly where the approximation system puts
    them; the nucleation term and S_ac keep unclipped arguments.
    """
    check_physical(T, q_v, q_c, q_r, q_vs)
    grid = check_same_grid(T, q_v, q_c, q_r, q_vs)
    c = constants
    Tv, qv, qc, qr, qs = T.values, q_v.values, q_c.values, q_r.values, q_vs.values

    if clipped:
        Tp, qvp, qcp, qrp = _pos(Tv), _pos(qv), _pos(qc), _pos(qr)
        denom = 1.0 + qvp + qcp + qrp  # >= 1 always
        S_ev = c.c_ev * Tp * (c.R_d + c.R_v * qvp) / denom * _pos(qs - qvp) * qrp
        S_cd = c.c_cd * (qvp - qs) * qcp + c.c_cn * _pos(qv - qs) * c.q_cn
        S_ac = c.c_ac * _pos(qc - c.q_ac)
        S_cr = c.c_cr * qcp * qrp
    else:
        denom = 1.0 + qv + qc + qr
        if np.any(denom <= 0.0):
            raise ValueError("raw sources: moisture denominator 1 + q_v + q_c + q_r <= 0")
        S_ev = c.c_ev * Tv * (c.R_d + c.R_v * qv) / denom * _pos(qs - qv) * qr
        S_cd = c.c_cd * (qv - qs) * qc + c.c_cn * _pos(qv - qs) * c.q_cn
        S_ac = c.c_ac * _pos(qc - c.q_ac)
        S_cr = c.c_cr * qc * qr

    return SourceBundle(ScalarField(grid, S_ev), ScalarField(grid, S_cd),
                        ScalarField(grid, S_ac), ScalarField(grid, S_cr),
                        clipped, q_vs)


def water_exchange_residual(bundle: SourceBundle) -> ScalarField:
    """Sum of the three moisture right-hand sides; telescopes to zero, so
    phase changes conserve total water internally."""
    ev, cd = bundle.S_ev.values, bundle.S_cd.values
    ac, cr = bundle.S_ac.values, bundle.S_cr.values
    res = (ev - cd) + (cd - ac - cr) + (ac + cr - ev)
    return ScalarField(bundle.S_ev.grid, res)


def growth_bound_constant(constants: PhysConstants) -> float:
    """Constant C with |S_j| <= C (1 + max(|T|, |q_v|, |q_c|, |q_r|)^2)
    for the clipped rates.

    The evaporation prefactor is bounded by c_ev (R_d + R_v) q_vs_star since
    q_v+/(1 + q_v+) <= 1 and (q_vs - q_v+)+ <= q_vs_star; the remaining rates
    are at most quadratic with the listed coefficients.
    """
    c = constants
    return max(c.c_ev * (c.R_d + c.R_v) * c.q_vs_star,
               c.c_cd * (1.0 + c.q_vs_star),
               c.c_cn * (1.0 + c.q_vs_star) * c.q_cn,
               c.c_ac * (1.0 + c.q_ac),
               c.c_cr)
