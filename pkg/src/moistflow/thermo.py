"""Constitutive and thermodynamic closures for moist air.

All operations are pure, pointwise, and thread-safe.  The Q-factors are the
coefficient fields multiplying time derivatives, compression, and phase-heat
terms in the temperature and momentum equations; in clipped form every
mixing-ratio argument passes through its nonnegative part, which makes the
momentum mass factor bounded below by one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import (PhysConstants, ScalarField, check_physical,
                     check_same_grid, positive_part)


@dataclass
class QFactors:
    """Coefficient fields Q_m, Q_th, Q_cp plus the scalar phase-heat
    coefficients Q_1 and Q_2 (constants by the algebraic collapse of the
    mixed gas constant against the mixed heat capacity)."""

    Q_m: ScalarField
    Q_th: ScalarField
    Q_cp: ScalarField
    Q_1: float
    Q_2: float
    clipped: bool


def mixed_heat_capacity(q_v: ScalarField, q_c: ScalarField, q_r: ScalarField,
                        constants: PhysConstants) -> ScalarField:
    """c_nu = c_pd + c_pv q_v + c_l (q_c + q_r)."""
    check_physical(q_v, q_c, q_r)
    grid = check_same_grid(q_v, q_c, q_r)
    vals = (constants.c_pd + constants.c_pv * q_v.values
            + constants.c_l * (q_c.values + q_r.values))
    return ScalarField(grid, vals)


def mixed_gas_constant(q_v: ScalarField, q_c: ScalarField, q_r: ScalarField,
                       constants: PhysConstants) -> ScalarField:
    """sigma = ((c_pv/c_pd) R_d - R_v) q_v + (c_l/c_pd) R_d (q_c + q_r)."""
    check_physical(q_v, q_c, q_r)
    grid = check_same_grid(q_v, q_c, q_r)
    c = constants
    vals = ((c.c_pv / c.c_pd * c.R_d - c.R_v) * q_v.values
            + (c.c_l / c.c_pd) * c.R_d * (q_c.values + q_r.values))
    return ScalarField(grid, vals)


def latent_heat(T: ScalarField, constants: PhysConstants) -> ScalarField:
    """L(T) = L_ref + (c_pv - c_l)(T - T_ref)."""
    check_physical(T)
    c = constants
    return ScalarField(T.grid, c.L_ref + (c.c_pv - c.c_l) * (T.values - c.T_ref))


def pressure(rho_d: ScalarField, q_v: ScalarField, T: ScalarField,
             constants: PhysConstants) -> ScalarField:
    """p = rho_d (R_d + R_v q_v) T."""
    check_physical(rho_d, q_v, T)
    grid = check_same_grid(rho_d, q_v, T)
    if np.any(rho_d.values <= 0.0):
        raise ValueError("pressure requires strictly positive dry-air density")
    vals = rho_d.values * (constants.R_d + constants.R_v * q_v.values) * T.values
    return ScalarField(grid, vals)


def potential_temperature(T: ScalarField, p: ScalarField,
                          constants: PhysConstants) -> ScalarField:
    """theta = T (p_ref / p)^((gamma-1)/gamma)."""
    check_physical(T, p)
    grid = check_same_grid(T, p)
    if np.any(p.values <= 0.0):
        raise ValueError("potential temperature requires positive pressure")
    expo = (constants.gamma - 1.0) / constants.gamma
    return ScalarField(grid, T.values * (constants.p_ref / p.values) ** expo)


def moist_density(rho_d: ScalarField, q_v: ScalarField, q_c: ScalarField,
                  q_r: ScalarField) -> ScalarField:
    """rho = rho_d (1 + q_v + q_c + q_r)."""
    check_physical(rho_d, q_v, q_c, q_r)
    grid = check_same_grid(rho_d, q_v, q_c, q_r)
    return ScalarField(grid, rho_d.values * (1.0 + q_v.values + q_c.values + q_r.values))


def q_factors(q_v: ScalarField, q_c: ScalarField, q_r: ScalarField,
              constants: PhysConstants, clipped: bool) -> QFactors:
    """Evaluate the Q coefficient fields.

    In clipped mode the mixing ratios are replaced by their nonnegative
    parts before the affine formulas, so Q_m >= 1 holds for arbitrary
    inputs.  Q_th always uses the c_l/c_pd coefficient form.
    """
    check_physical(q_v, q_c, q_r)
    grid = check_same_grid(q_v, q_c, q_r)
    c = constants
    if clipped:
        q_v, q_c, q_r = positive_part(q_v), positive_part(q_c), positive_part(q_r)
    qv, qc, qr = q_v.values, q_c.values, q_r.values
    gamma = c.gamma

    Q_m = 1.0 + qv + qc + qr
    Q_th = (c.c_pd / gamma
            + (c.c_pv / gamma + c.c_pv / c.c_pd * c.R_d - c.R_v) * qv
            + (c.c_l / gamma + c.c_l / c.c_pd * c.R_d) * (qc + qr))
    Q_cp = -c.R_d - c.R_v * qv
    Q_1 = c.c_pv - c.c_l - c.R_v
    Q_2 = c.L_ref - (c.c_pv - c.c_l) * c.T_ref
    return QFactors(ScalarField(grid, Q_m), ScalarField(grid, Q_th),
                    ScalarField(grid, Q_cp), Q_1, Q_2, clipped)
