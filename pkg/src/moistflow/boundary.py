"""Robin-wall machinery: exponential lifting factors, the smooth cutoff,
the Fourier extension of boundary data, and homogenization of temperature
and mixing ratios.

A Robin condition dz F = alpha (F_b - F) at a wall becomes a homogeneous
Neumann condition for frak_F = B F - psi, where B = exp(A) with a quadratic
A(z) whose endpoint slopes reproduce the alpha coefficients, and psi is an
interior extension whose wall-normal derivative equals alpha B F_b exactly.
Factor construction is pure; factors are immutable once built and safe to
share across threads.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable, Mapping

import numpy as np

from .fields import Grid, ScalarField, check_physical, check_same_grid

BOUNDARY_VARS = ("T", "v", "c", "r")


# ---------------------------------------------------------------------------
# Smooth cutoff: 1 on (0, 1/4], 0 on [3/4, 1), C-infinity transition between.
# ---------------------------------------------------------------------------

def _phi(s):
    out = np.zeros_like(s, dtype=float)
    pos = s > 0.0
    with np.errstate(over="ignore", under="ignore", divide="ignore"):
        out[pos] = np.exp(-1.0 / s[pos])
    return out


def _phi_d1(s):
    out = np.zeros_like(s, dtype=float)
    pos = s > 0.0
    with np.errstate(over="ignore", under="ignore", divide="ignore"):
        sp = s[pos]
        out[pos] = np.exp(-1.0 / sp) / sp**2
    return out


def _phi_d2(s):
    out = np.zeros_like(s, dtype=float)
    pos = s > 0.0
    with np.errstate(over="ignore", under="ignore", divide="ignore"):
        sp = s[pos]
        out[pos] = np.exp(-1.0 / sp) * (1.0 / sp**4 - 2.0 / sp**3)
    return out


def _chi0_all(z: np.ndarray):
    """chi0 and its first two z-derivatives; plateau values are exact."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0.0) or np.any(z > 1.0):
        raise ValueError("cutoff argument z must lie in [0, 1]")
    b = (0.75 - z) / 0.5
    p, q = _phi(b), _phi(1.0 - b)
    p1, q1 = _phi_d1(b), -_phi_d1(1.0 - b)
    p2, q2 = _phi_d2(b), _phi_d2(1.0 - b)
    den = p + q

    chi = np.ones_like(z)
    d1 = np.zeros_like(z)
    d2 = np.zeros_like(z)
    mid = (z > 0.25) & (z < 0.75)
    g = p[mid] / den[mid]
    gp = (p1[mid] * q[mid] - p[mid] * q1[mid]) / den[mid] ** 2
    gpp = ((p2[mid] * q[mid] - p[mid] * q2[mid]) / den[mid] ** 2
           - 2.0 * (p1[mid] * q[mid] - p[mid] * q1[mid])
           * (p1[mid] + q1[mid]) / den[mid] ** 3)
    chi[mid] = g
    d1[mid] = -2.0 * gp        # chain rule, db/dz = -2
    d2[mid] = 4.0 * gpp
    chi[z >= 0.75] = 0.0
    return chi, d1, d2


def cutoff_chi0(z):
    """The cutoff itself: 1 on (0, 1/4], 0 on [3/4, 1), smooth monotone
    decreasing in between (exp-based transition, fixed for reproducibility)."""
    scalar = np.isscalar(z)
    chi, _, _ = _chi0_all(np.atleast_1d(np.asarray(z, dtype=float)))
    return float(chi[0]) if scalar else chi


# ---------------------------------------------------------------------------
# Robin lifting profile A, B = exp(A).
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RobinProfile:
    """Quadratic lifting exponent A(z) = -(ab/2)(1-z)^2 + (at/2) z^2.

    Endpoint slopes are A'(0) = ab and A'(1) = at, which is what converts
    the Robin condition on F into a pure derivative condition on B F.
    """

    alpha_bottom: float
    alpha_top: float

    def A(self, z):
        z = np.asarray(z, dtype=float)
        return (-0.5 * self.alpha_bottom * (1.0 - z) ** 2
                + 0.5 * self.alpha_top * z ** 2)

    def A_prime(self, z):
        z = np.asarray(z, dtype=float)
        return self.alpha_bottom * (1.0 - z) + self.alpha_top * z

    @property
    def A_second(self) -> float:
        return self.alpha_top - self.alpha_bottom

    def B(self, z):
        return np.exp(self.A(z))

    def dzz_Binv_times_B(self, z):
        """(d2/dz2 of B^-1) * B = A'^2 - A''."""
        return self.A_prime(z) ** 2 - self.A_second


def robin_profile(alpha_bottom: float, alpha_top: float,
                  validate: bool = True, var: str = "") -> RobinProfile:
    """Build the lifting profile; validates the wall sign condition
    (alpha <= 0 at z=0, alpha >= 0 at z=1) unless explicitly waived."""
    label = f" for variable {var!r}" if var else ""
    if validate:
        if alpha_bottom > 0.0:
            raise ValueError(
                f"sign condition violated{label}: alpha_bottom must be <= 0 "
                f"at z=0, got {alpha_bottom}")
        if alpha_top < 0.0:
            raise ValueError(
                f"sign condition violated{label}: alpha_top must be >= 0 "
                f"at z=1, got {alpha_top}")
    return RobinProfile(float(alpha_bottom), float(alpha_top))


# ---------------------------------------------------------------------------
# Extension operator: boundary data -> interior field with exact wall slope.
# ---------------------------------------------------------------------------

class BoundaryExtension:
    """Interior extension of wall data pairs.

    Each horizontal Fourier mode k of the bottom data contributes
    -(beta/|k|) e^(i pi k.x) e^(-|k| z) (a linear beta z ramp for the mean
    mode); top data mirrors this with e^(-|k|(1-z)).  The two halves are
    blended with the cutoff, whose plateaus leave the wall-normal
    derivative at each wall exactly equal to that wall's data.  The decay
    rate is the integer magnitude |k| while phases carry pi k, following
    the construction convention; only the wall-derivative identity matters.
    """

    def __init__(self, grid: Grid, beta_bottom: np.ndarray, beta_top: np.ndarray):
        self.grid = grid
        self.beta_bottom = np.asarray(beta_bottom, dtype=complex)
        self.beta_top = np.asarray(beta_top, dtype=complex)
        if self.beta_bottom.shape != (grid.nx, grid.ny):
            raise ValueError("beta arrays must be (nx, ny) coefficient grids")
        k1 = np.fft.fftfreq(grid.nx, d=1.0 / grid.nx)
        k2 = np.fft.fftfreq(grid.ny, d=1.0 / grid.ny)
        self.kmag = np.sqrt(k1[:, None] ** 2 + k2[None, :] ** 2)
        self.is_zero = (not np.any(self.beta_bottom)) and (not np.any(self.beta_top))
        self._cache: dict = {}

    # profiles per mode: value / first / second z-derivative
    def _phi0(self, z, deriv):
        km = self.kmag[:, :, None]
        zz = z[None, None, :]
        with np.errstate(under="ignore"):
            decay = np.exp(-km * zz)
        b = self.beta_bottom[:, :, None]
        if deriv == 0:
            prof = np.where(km == 0.0, zz + 0j, -decay / np.where(km == 0.0, 1.0, km))
        elif deriv == 1:
            prof = np.where(km == 0.0, 1.0 + 0j, decay)
        else:
            prof = np.where(km == 0.0, 0.0 + 0j, -km * decay)
        return b * prof

    def _phi1(self, z, deriv):
        km = self.kmag[:, :, None]
        zz = z[None, None, :]
        with np.errstate(under="ignore"):
            decay = np.exp(-km * (1.0 - zz))
        b = self.beta_top[:, :, None]
        if deriv == 0:
            prof = np.where(km == 0.0, zz + 0j, decay / np.where(km == 0.0, 1.0, km))
        elif deriv == 1:
            prof = np.where(km == 0.0, 1.0 + 0j, decay)
        else:
            prof = np.where(km == 0.0, 0.0 + 0j, km * decay)
        return b * prof

    def mode_profiles(self, z: np.ndarray, deriv: int = 0) -> np.ndarray:
        """Complex modal profiles of the blended extension (or its z
        derivatives) on an arbitrary node set z."""
        z = np.asarray(z, dtype=float)
        chi, chi1, chi2 = _chi0_all(z)
        chi = chi[None, None, :]
        chi1 = chi1[None, None, :]
        chi2 = chi2[None, None, :]
        if deriv == 0:
            return chi * self._phi0(z, 0) + (1.0 - chi) * self._phi1(z, 0)
        if deriv == 1:
            return (chi1 * (self._phi0(z, 0) - self._phi1(z, 0))
                    + chi * self._phi0(z, 1) + (1.0 - chi) * self._phi1(z, 1))
        if deriv == 2:
            return (chi2 * (self._phi0(z, 0) - self._phi1(z, 0))
                    + 2.0 * chi1 * (self._phi0(z, 1) - self._phi1(z, 1))
                    + chi * self._phi0(z, 2) + (1.0 - chi) * self._phi1(z, 2))
        raise ValueError("deriv must be 0, 1, or 2")

    def _assemble(self, key: str) -> np.ndarray:
        if key in self._cache:
            return self._cache[key]
        g = self.grid
        if self.is_zero:
            out = np.zeros(g.shape)
        else:
            if key == "lap":
                modal = (self.mode_profiles(g.z, 2)
                         - (np.pi ** 2) * (self.kmag ** 2)[:, :, None]
                         * self.mode_profiles(g.z, 0))
            elif key in ("dx", "dy"):
                n = g.nx if key == "dx" else g.ny
                kap = np.pi * np.fft.fftfreq(n, d=1.0 / n)
                shape = (-1, 1, 1) if key == "dx" else (1, -1, 1)
                modal = 1j * kap.reshape(shape) * self.mode_profiles(g.z, 0)
            else:
                modal = self.mode_profiles(g.z, int(key))
            out = np.real(np.fft.ifft2(modal, axes=(0, 1), norm="forward"))
        self._cache[key] = out
        return out

    def values(self) -> np.ndarray:
        return self._assemble("0")

    def dz_values(self) -> np.ndarray:
        return self._assemble("1")

    def dx_values(self) -> np.ndarray:
        return self._assemble("dx")

    def dy_values(self) -> np.ndarray:
        return self._assemble("dy")

    def laplacian_values(self) -> np.ndarray:
        """Analytic Laplacian (horizontal -pi^2 |k|^2 plus exact d2/dz2);
        the extension is not band-limited in z, so this avoids cosine-series
        truncation entirely."""
        return self._assemble("lap")

    def field(self) -> ScalarField:
        return ScalarField(self.grid, self.values())

    def scaled(self, factor: float) -> "BoundaryExtension":
        return BoundaryExtension(self.grid, factor * self.beta_bottom,
                                 factor * self.beta_top)

    def minus(self, other: "BoundaryExtension") -> "BoundaryExtension":
        return BoundaryExtension(self.grid, self.beta_bottom - other.beta_bottom,
                                 self.beta_top - other.beta_top)


def _coefficients_from(data, grid: Grid) -> np.ndarray:
    """Normalize boundary data (scalar, coefficient array, or mode table)
    into an (nx, ny) coefficient grid."""
    beta = np.zeros((grid.nx, grid.ny), dtype=complex)
    if data is None:
        return beta
    if np.isscalar(data):
        beta[0, 0] = complex(data)
        return beta
    if isinstance(data, Mapping):
        for (k1, k2), amp in data.items():
            if abs(k1) > grid.nx // 2 or abs(k2) > grid.ny // 2:
                warnings.warn(f"boundary mode ({k1},{k2}) unresolvable on "
                              f"{grid.nx}x{grid.ny} grid; truncated")
                continue
            beta[k1 % grid.nx, k2 % grid.ny] += complex(amp)
        return beta
    arr = np.asarray(data)
    if arr.shape != (grid.nx, grid.ny):
        raise ValueError("boundary data array must be (nx, ny)")
    if np.isrealobj(arr):
        return np.fft.fft2(arr, norm="forward").astype(complex)
    return arr.astype(complex)


def build_extension(h_bottom, h_top, grid: Grid) -> BoundaryExtension:
    """Extension operator on coefficient/scalar/physical data; linear in
    (h_bottom, h_top)."""
    return BoundaryExtension(grid, _coefficients_from(h_bottom, grid),
                             _coefficients_from(h_top, grid))


def extend(h_bottom, h_top, grid: Grid) -> ScalarField:
    """The extension as a physical field on the grid; its analytic wall
    derivatives match the data exactly (see BoundaryExtension.dz_values)."""
    return build_extension(h_bottom, h_top, grid).field()


# ---------------------------------------------------------------------------
# Per-variable boundary specification and homogenization factors.
# ---------------------------------------------------------------------------

@dataclass
class VariableBoundary:
    """Robin coefficients and data for one variable.  Data entries may be
    scalars, coefficient arrays, mode tables, or callables of time; an
    optional analytic rate callable supplies d/dt of the data."""

    alpha_bottom: float = 0.0
    alpha_top: float = 0.0
    data_bottom: object = 0.0
    data_top: object = 0.0
    rate_bottom: Callable | None = None
    rate_top: Callable | None = None

    @property
    def time_dependent(self) -> bool:
        return callable(self.data_bottom) or callable(self.data_top)


@dataclass
class BoundarySpec:
    """Robin data for temperature and the three mixing ratios."""

    variables: dict = dc_field(default_factory=lambda: {
        v: VariableBoundary() for v in BOUNDARY_VARS})

    def __getitem__(self, var: str) -> VariableBoundary:
        return self.variables[var]

    def validate(self):
        for var, vb in self.variables.items():
            robin_profile(vb.alpha_bottom, vb.alpha_top, validate=True, var=var)

    @property
    def time_dependent(self) -> bool:
        return any(vb.time_dependent for vb in self.variables.values())


class HomogenizationFactors:
    """Everything the homogenized equations need for one variable: B and its
    logarithmic derivative on the grid, the psi extension (with analytic
    derivatives), and the psi time derivative."""

    def __init__(self, var: str, profile: RobinProfile, grid: Grid,
                 psi: BoundaryExtension, psi_rate: BoundaryExtension | None = None):
        self.var = var
        self.profile = profile
        self.grid = grid
        z = grid.z
        self.b_profile = profile.B(z)[None, None, :]
        self.binv_profile = 1.0 / self.b_profile
        self.dz_log_b = profile.A_prime(z)[None, None, :]
        self.dzz_binv_b = profile.dzz_Binv_times_B(z)[None, None, :]
        self.psi = psi
        self.psi_rate = psi_rate

    @property
    def psi_values(self) -> np.ndarray:
        return self.psi.values()

    @property
    def psi_dz(self) -> np.ndarray:
        return self.psi.dz_values()

    @property
    def psi_laplacian(self) -> np.ndarray:
        return self.psi.laplacian_values()

    @property
    def psi_dt(self) -> np.ndarray:
        if self.psi_rate is None:
            return np.zeros(self.grid.shape)
        return self.psi_rate.values()

    @property
    def is_identity(self) -> bool:
        return (self.profile.alpha_bottom == 0.0 and self.profile.alpha_top == 0.0
                and self.psi.is_zero)


def _eval_data(data, t: float):
    return data(t) if callable(data) else data


def build_factors(spec: BoundarySpec, grid: Grid, t: float = 0.0,
                  dt: float | None = None, validate: bool = True) -> dict:
    """Build homogenization factors for every variable at time t.

    psi is the extension of alpha * exp(A) * F_b per wall.  For
    time-dependent data without a registered analytic rate, d/dt psi is
    finite-differenced from evaluations at t and t + dt (dt required).
    """
    factors = {}
    for var, vb in spec.variables.items():
        prof = robin_profile(vb.alpha_bottom, vb.alpha_top, validate=validate, var=var)
        scale_b = vb.alpha_bottom * float(prof.B(0.0))
        scale_t = vb.alpha_top * float(prof.B(1.0))

        def lifted(bottom_data, top_data):
            beta_b = scale_b * _coefficients_from(bottom_data, grid)
            beta_t = scale_t * _coefficients_from(top_data, grid)
            return BoundaryExtension(grid, beta_b, beta_t)

        psi = lifted(_eval_data(vb.data_bottom, t), _eval_data(vb.data_top, t))
        psi_rate = None
        if vb.rate_bottom is not None or vb.rate_top is not None:
            psi_rate = lifted(
                vb.rate_bottom(t) if vb.rate_bottom is not None else 0.0,
                vb.rate_top(t) if vb.rate_top is not None else 0.0)
        elif vb.time_dependent:
            if dt is None or dt <= 0.0:
                raise ValueError("time-dependent boundary data requires dt for "
                                 "the finite-difference psi rate")
            psi_next = lifted(_eval_data(vb.data_bottom, t + dt),
                              _eval_data(vb.data_top, t + dt))
            psi_rate = psi_next.minus(psi).scaled(1.0 / dt)
        factors[var] = HomogenizationFactors(var, prof, grid, psi, psi_rate)
    return factors


def homogenize(F: ScalarField, factors: HomogenizationFactors) -> ScalarField:
    """frak_F = B F - psi."""
    check_physical(F)
    if F.grid != factors.grid:
        raise ValueError("field grid does not match homogenization factors")
    return ScalarField(F.grid, factors.b_profile * F.values - factors.psi_values)


def dehomogenize(frak_F: ScalarField, factors: HomogenizationFactors) -> ScalarField:
    """Exact inverse F = B^-1 (frak_F + psi)."""
    check_physical(frak_F)
    if frak_F.grid != factors.grid:
        raise ValueError("field grid does not match homogenization factors")
    return ScalarField(frak_F.grid,
                       factors.binv_profile * (frak_F.values + factors.psi_values))


# ---------------------------------------------------------------------------
# Trace-norm bound check for the extension.
# ---------------------------------------------------------------------------

@dataclass
class TraceEntry:
    norm_psi: float
    norm_data: float
    ratio: float


@dataclass
class TraceReport:
    entries: dict  # s -> TraceEntry


def _boundary_norm_sq(beta_b: np.ndarray, beta_t: np.ndarray, s: int) -> float:
    nx, ny = beta_b.shape
    k1 = np.fft.fftfreq(nx, d=1.0 / nx)
    k2 = np.fft.fftfreq(ny, d=1.0 / ny)
    w = (1.0 + np.pi ** 2 * (k1[:, None] ** 2 + k2[None, :] ** 2)) ** s
    return 4.0 * float(np.sum(w * (np.abs(beta_b) ** 2 + np.abs(beta_t) ** 2)))


def _psi_integer_norms(ext: BoundaryExtension, refine: int = 4):
    """(H1, H2) norms of the extension from analytic derivative profiles on
    a Simpson-refined vertical quadrature grid."""
    g = ext.grid
    nfine = refine * (g.nz - 1) + 1
    z = np.linspace(0.0, 1.0, nfine)
    h = z[1] - z[0]
    w = np.ones(nfine)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= h / 3.0

    f0 = ext.mode_profiles(z, 0)
    f1 = ext.mode_profiles(z, 1)
    f2 = ext.mode_profiles(z, 2)
    i0 = np.sum(np.abs(f0) ** 2 * w, axis=2)
    i1 = np.sum(np.abs(f1) ** 2 * w, axis=2)
    i2 = np.sum(np.abs(f2) ** 2 * w, axis=2)

    nx, ny = g.nx, g.ny
    k1 = np.pi * np.fft.fftfreq(nx, d=1.0 / nx)[:, None]
    k2 = np.pi * np.fft.fftfreq(ny, d=1.0 / ny)[None, :]
    ksq = k1 ** 2 + k2 ** 2
    l2_sq = 4.0 * np.sum(i0)
    h1_sq = l2_sq + 4.0 * np.sum(ksq * i0 + i1)
    h2_sq = h1_sq + 4.0 * np.sum(
        (k1 ** 4 + k2 ** 4 + k1 ** 2 * k2 ** 2) * i0 + ksq * i1 + i2)
    return np.sqrt(h1_sq), np.sqrt(h2_sq)


def trace_norm_check(psi: BoundaryExtension, h_bottom, h_top) -> TraceReport:
    """Empirical constants in the trace-lifting bound: the ratio of the
    extension's H^(s+3/2) norm to the data's H^s boundary norm, s in {0, 1}.

    Half-integer norms are the empirical functionals
    H^(3/2) = sqrt(H1 * H2) and H^(5/2) = H2 * sqrt(H2 / H1) (log-linear
    interpolation/extrapolation in the order); the report is meant for
    finiteness and resolution-stability checks, not sharp constants.
    """
    g = psi.grid
    beta_b = _coefficients_from(h_bottom, g)
    beta_t = _coefficients_from(h_top, g)
    entries = {}
    if psi.is_zero:
        for s in (0, 1):
            nd = np.sqrt(_boundary_norm_sq(beta_b, beta_t, s))
            entries[s] = TraceEntry(0.0, nd, 0.0)
        return TraceReport(entries)
    h1, h2 = _psi_integer_norms(psi)
    psi_norm = {0: np.sqrt(h1 * h2), 1: h2 * np.sqrt(h2 / h1)}
    for s in (0, 1):
        nd = np.sqrt(_boundary_norm_sq(beta_b, beta_t, s))
        ratio = psi_norm[s] / nd if nd > 0.0 else 0.0
        entries[s] = TraceEntry(float(psi_norm[s]), float(nd), float(ratio))
    return TraceReport(entries)
