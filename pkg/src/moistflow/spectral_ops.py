"""Spectral differential operators and implicit solvers on the channel.

Horizontal directions are Fourier (period 2, so mode k carries wavenumber
pi*k); the vertical uses the Laplacian eigenbases of the channel: cosine
series cos(m pi z) for fields with homogeneous Neumann walls (horizontal
velocity, temperature, mixing ratios) and sine series sin(m pi z) for the
no-penetration vertical velocity.  Both modal arrays are stored with shape
(nx, ny, nz); the sine array keeps rows m = 0 and m = nz-1 identically
zero (the Nyquist sine mode vanishes on the collocation grid).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import rfft2, irfft2, dct, dst

from .fields import Grid, ScalarField, VectorField, SPECTRAL, check_same_grid, check_physical

NEUMANN = "neumann_z"
DIRICHLET = "dirichlet_z"

_WORKERS = 1


def set_workers(n: int) -> None:
    """Number of worker threads handed to scipy.fft (1 keeps runs bitwise
    reproducible by construction; pocketfft results do not depend on it)."""
    global _WORKERS
    _WORKERS = max(1, int(n))


class Basis:
    """Transform plans and Laplacian eigenvalues for one wall behavior.

    Eigenvalues are pi^2 (k1^2 + k2^2 + m^2) laid out on the modal grid;
    they are nonnegative and nondecreasing in each mode index.  Instances
    are immutable after construction and safe to share across threads.
    """

    def __init__(self, grid: Grid, kind: str):
        if kind not in (NEUMANN, DIRICHLET):
            raise ValueError(f"unknown basis kind {kind!r}")
        self.grid = grid
        self.kind = kind
        kx_int = np.fft.fftfreq(grid.nx, d=1.0 / grid.nx)  # integers
        ky_int = np.fft.rfftfreq(grid.ny, d=1.0 / grid.ny)  # real-transform half
        mz = np.arange(grid.nz)
        self.kappa_x = (np.pi * kx_int)[:, None, None]
        self.kappa_y = (np.pi * ky_int)[None, :, None]
        self.kappa_z = (np.pi * mz)[None, None, :]
        self.eigenvalues = self.kappa_x**2 + self.kappa_y**2 + self.kappa_z**2
        kx_cut = grid.nx // 3
        ky_cut = grid.ny // 3
        mz_cut = (2 * (grid.nz - 1)) // 3
        self.dealias_mask = ((np.abs(kx_int)[:, None, None] <= kx_cut)
                             & (np.abs(ky_int)[None, :, None] <= ky_cut)
                             & (mz[None, None, :] <= mz_cut))
        # Parseval multiplicity of each retained ky column (conjugate pairs
        # are folded by the real transform except ky = 0 and the Nyquist)
        wy = np.full(ky_int.shape, 2.0)
        wy[0] = 1.0
        if grid.ny % 2 == 0:
            wy[-1] = 1.0
        self.ky_multiplicity = wy[None, :, None]
        self.other: "Basis" = None  # filled by make_bases


@dataclass(frozen=True)
class BasisPair:
    neumann: Basis
    dirichlet: Basis


def make_bases(grid: Grid) -> BasisPair:
    neu = Basis(grid, NEUMANN)
    diri = Basis(grid, DIRICHLET)
    neu.other = diri
    diri.other = neu
    return BasisPair(neu, diri)


# ---------------------------------------------------------------------------
# Array-level transforms.  values: real (nx, ny, nz); modal: complex same shape.
# ---------------------------------------------------------------------------

def to_modal_values(values: np.ndarray, basis: Basis) -> np.ndarray:
    nz = basis.grid.nz
    hat = rfft2(values, axes=(0, 1), norm="forward", workers=_WORKERS)
    if basis.kind == NEUMANN:
        c = dct(hat, type=1, axis=2, workers=_WORKERS)
        out = np.empty_like(c)
        out[..., 0] = c[..., 0] / (2 * (nz - 1))
        out[..., 1:nz - 1] = c[..., 1:nz - 1] / (nz - 1)
        out[..., nz - 1] = c[..., nz - 1] / (2 * (nz - 1))
        return out
    out = np.zeros(hat.shape, dtype=complex)
    out[..., 1:nz - 1] = dst(hat[..., 1:nz - 1], type=1, axis=2, workers=_WORKERS) / (nz - 1)
    return out


def to_phys_values(modal: np.ndarray, basis: Basis) -> np.ndarray:
    nz = basis.grid.nz
    if basis.kind == NEUMANN:
        y = modal.copy()
        y[..., 1:nz - 1] *= 0.5
        vals = dct(y, type=1, axis=2, workers=_WORKERS)
    else:
        vals = np.zeros(modal.shape, dtype=complex)
        vals[..., 1:nz - 1] = dst(modal[..., 1:nz - 1], type=1, axis=2, workers=_WORKERS) / 2.0
    return irfft2(vals, s=(basis.grid.nx, basis.grid.ny), axes=(0, 1),
                  norm="forward", workers=_WORKERS)


def dx_modal(modal: np.ndarray, basis: Basis) -> np.ndarray:
    return modal * (1j * basis.kappa_x)


def dy_modal(modal: np.ndarray, basis: Basis) -> np.ndarray:
    return modal * (1j * basis.kappa_y)


def dz_modal(modal: np.ndarray, basis: Basis) -> np.ndarray:
    """Differentiate in z; the result lives in the complementary basis."""
    nz = basis.grid.nz
    if basis.kind == NEUMANN:
        out = -basis.kappa_z * modal
        out[..., nz - 1] = 0.0  # Nyquist sine mode vanishes on the grid
        return out
    return basis.kappa_z * modal


def dealias_modal(modal: np.ndarray, basis: Basis) -> np.ndarray:
    return modal * basis.dealias_mask


# ---------------------------------------------------------------------------
# Field-level operators (physical in, physical out).
# ---------------------------------------------------------------------------

def _basis_for(f: ScalarField, bases: BasisPair, kind: str) -> Basis:
    return bases.neumann if kind == NEUMANN else bases.dirichlet


def to_spectral(f: ScalarField, basis: Basis) -> ScalarField:
    check_physical(f)
    return ScalarField(f.grid, to_modal_values(f.values, basis),
                       space=SPECTRAL, basis=basis.kind)


def to_physical(f: ScalarField, basis: Basis) -> ScalarField:
    if f.is_physical:
        return f
    if f.basis != basis.kind:
        raise ValueError(f"basis mismatch: field is {f.basis}, requested {basis.kind}")
    return ScalarField(f.grid, to_phys_values(f.values, basis))


def grad(f: ScalarField, bases: BasisPair, kind: str = NEUMANN) -> VectorField:
    """Spectral gradient.  For a Neumann-basis scalar the vertical component
    is a sine series, matching the VectorField wall convention."""
    check_physical(f)
    basis = _basis_for(f, bases, kind)
    modal = to_modal_values(f.values, basis)
    gx = to_phys_values(dx_modal(modal, basis), basis)
    gy = to_phys_values(dy_modal(modal, basis), basis)
    gz = to_phys_values(dz_modal(modal, basis), basis.other)
    g = f.grid
    return VectorField(ScalarField(g, gx), ScalarField(g, gy), ScalarField(g, gz))


def div(u: VectorField, bases: BasisPair) -> ScalarField:
    """Divergence of a (Neumann, Neumann, Dirichlet) vector field; the result
    is a cosine series whose (0,0,0) mode is exactly zero, so its volume
    integral vanishes identically."""
    check_physical(u.v1, u.v2, u.w)
    neu, diri = bases.neumann, bases.dirichlet
    m1 = to_modal_values(u.v1.values, neu)
    m2 = to_modal_values(u.v2.values, neu)
    mw = to_modal_values(u.w.values, diri)
    d = dx_modal(m1, neu) + dy_modal(m2, neu) + dz_modal(mw, diri)
    return ScalarField(u.grid, to_phys_values(d, neu))


def dz(f: ScalarField, basis: Basis) -> ScalarField:
    check_physical(f)
    modal = to_modal_values(f.values, basis)
    return ScalarField(f.grid, to_phys_values(dz_modal(modal, basis), basis.other))


def laplacian(f: ScalarField, basis: Basis) -> ScalarField:
    check_physical(f)
    modal = to_modal_values(f.values, basis)
    return ScalarField(f.grid, to_phys_values(-basis.eigenvalues * modal, basis))


def advect(u: VectorField, f: ScalarField, bases: BasisPair,
           kind: str = NEUMANN, dealias: bool = True) -> ScalarField:
    """Pointwise u . grad f with spectral gradients; the product is 2/3-rule
    dealiased (and f is truncated before differentiation)."""
    check_physical(u.v1, f)
    check_same_grid(u.v1, f)
    basis = _basis_for(f, bases, kind)
    modal = to_modal_values(f.values, basis)
    if dealias:
        modal = dealias_modal(modal, basis)
    gx = to_phys_values(dx_modal(modal, basis), basis)
    gy = to_phys_values(dy_modal(modal, basis), basis)
    gz = to_phys_values(dz_modal(modal, basis), basis.other)
    prod = u.v1.values * gx + u.v2.values * gy + u.w.values * gz
    if dealias:
        pm = dealias_modal(to_modal_values(prod, basis), basis)
        prod = to_phys_values(pm, basis)
    return ScalarField(f.grid, prod)


def modal_sobolev_sq(modal: np.ndarray, basis: Basis, order: int) -> float:
    """Squared Sobolev norm of order <= 2 from modal coefficients (Parseval,
    one term per distinct multi-index).

    Horizontal modes integrate to 4 |a|^2 each over the doubly periodic
    cross-section; vertical cosine modes carry weight 1 (mean) or 1/2, sine
    modes 1/2.  z-differentiation swaps the parity weight, and the sine
    Nyquist row is invisible on the grid so it carries weight zero.
    """
    if order not in (0, 1, 2):
        raise ValueError("sobolev order must be 0, 1, or 2")
    nz = basis.grid.nz
    cw = np.full(nz, 0.5)
    cw[0] = 1.0
    sw = np.full(nz, 0.5)
    sw[0] = 0.0
    sw[-1] = 0.0
    if basis.kind == NEUMANN:
        w_even, w_odd = cw, sw   # even # of z-derivatives -> cosine weights
    else:
        w_even, w_odd = sw, cw
    a2 = np.abs(modal) ** 2 * basis.ky_multiplicity
    kx2 = basis.kappa_x ** 2
    ky2 = basis.kappa_y ** 2
    kz2 = basis.kappa_z ** 2
    total = 4.0 * np.sum(a2 * w_even)
    if order >= 1:
        total += 4.0 * np.sum(a2 * w_even * (kx2 + ky2))
        total += 4.0 * np.sum(a2 * w_odd * kz2)
    if order >= 2:
        total += 4.0 * np.sum(a2 * w_even * (kx2**2 + ky2**2 + kx2 * ky2))
        total += 4.0 * np.sum(a2 * w_odd * kz2 * (kx2 + ky2))
        total += 4.0 * np.sum(a2 * w_even * kz2 ** 2)
    return float(total)


def helmholtz_solve(g: ScalarField, a: float, basis: Basis) -> ScalarField:
    """Solve (I - a * Laplacian) f = g by modal division; exact inverse of
    the forward operator on resolved modes, uniformly invertible for a >= 0."""
    if a < 0.0:
        raise ValueError("helmholtz coefficient a must be nonnegative")
    check_physical(g)
    modal = to_modal_values(g.values, basis) / (1.0 + a * basis.eigenvalues)
    return ScalarField(g.grid, to_phys_values(modal, basis))


def vector_helmholtz_solve(G: VectorField, a_mu: float, a_mulam: float,
                           bases: BasisPair) -> VectorField:
    """Solve (I - a_mu * Lap - a_mulam * grad div) u = G.

    Uses the divergence/solenoidal modal split: the divergence coefficient
    solves a scalar Helmholtz problem with coefficient a_mu + a_mulam, after
    which each component is a diagonal division.  Horizontal components are
    cosine series in z, the vertical one a sine series.
    """
    if a_mu < 0.0 or a_mu + a_mulam < 0.0:
        raise ValueError("ill-posed coefficient combination in vector Helmholtz solve")
    check_physical(G.v1, G.v2, G.w)
    neu, diri = bases.neumann, bases.dirichlet
    g1 = to_modal_values(G.v1.values, neu)
    g2 = to_modal_values(G.v2.values, neu)
    g3 = to_modal_values(G.w.values, diri)

    gdiv = dx_modal(g1, neu) + dy_modal(g2, neu) + dz_modal(g3, diri)
    d = gdiv / (1.0 + (a_mu + a_mulam) * neu.eigenvalues)

    denom_n = 1.0 + a_mu * neu.eigenvalues
    u1 = (g1 + a_mulam * dx_modal(d, neu)) / denom_n
    u2 = (g2 + a_mulam * dy_modal(d, neu)) / denom_n
    u3 = (g3 + a_mulam * dz_modal(d, neu)) / (1.0 + a_mu * diri.eigenvalues)

    g = G.grid
    return VectorField(ScalarField(g, to_phys_values(u1, neu)),
                       ScalarField(g, to_phys_values(u2, neu)),
                       ScalarField(g, to_phys_values(u3, diri)))
