"""Average-field Pauli and Hartree energies, current, and functional gradient.

All quantities are evaluated on a :class:`~anyon_afp.grid.Grid`.  The magnetic
kinetic energy is assembled as ``sum_j ||(-i d_j + beta A_j) u||^2`` with
spectral derivatives; the plain/cross/A-squared split is reported alongside.

The gradient convention is ``dE[u](phi) = 2 Re <G[u], phi>``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .grid import Grid, fft2, gradient, ifft2, integrate, norm
from .kernel import KernelConfig, scalar_convolution, vector_potential

NORM_TOL = 1e-8


@dataclass(frozen=True)
class HartreeParams:
    """Smeared two-body interaction ``W_{N^nu}(x) = N^{2 nu} W(N^nu x)``.

    ``W`` is the unit-mass, unit-variance Gaussian ``exp(-|x|^2/2)/(2 pi)``.
    """

    nu: float = 0.5
    N: float = 1.0
    W: str = "gaussian"

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.N >= 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.W != "gaussian":
            raise ValueError(f"unknown smearing profile {self.W!r}")

    @property
    def inverse_width(self) -> float:
        return float(self.N) ** self.nu

    def symbol(self, grid: Grid) -> np.ndarray:
        return np.exp(-grid.k_squared() / (2 * self.inverse_width**2))


@dataclass(frozen=True)
class PhysicsParams:
    """Model parameters.

    ``g > 0`` is attractive.  ``R`` is the mollification radius of the
    magnetic kernel (0 for the bare kernel).
    """

    beta: float = 0.0
    g: float = 0.0
    s: float = 2.0
    trap_on: bool = True
    R: float = 0.0
    hartree: HartreeParams | None = None
    compat_pi2: bool = False
    padding_factor: int = 2

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not self.s > 0:
            raise ValueError(f"trap exponent s must be positive, got {self.s}")
        if self.R < 0:
            raise ValueError(f"R must be >= 0, got {self.R}")

    @property
    def kernel(self) -> KernelConfig:
        return KernelConfig(self.padding_factor, self.R, self.compat_pi2)

    def with_(self, **kw) -> "PhysicsParams":
        return replace(self, **kw)


@dataclass
class EnergyBreakdown:
    total: float
    kinetic_plain: float
    cross: float
    a_squared: float
    kinetic_magnetic: float
    potential: float
    quartic: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class _State:
    """Intermediate fields shared by energy and gradient."""

    rho: np.ndarray
    du: np.ndarray
    A: np.ndarray
    V: np.ndarray | float
    smeared: np.ndarray
    breakdown: EnergyBreakdown = field(repr=False)


def trap_potential(grid: Grid, s: float) -> np.ndarray:
    return grid.radius ** s


def current(u: np.ndarray, grid: Grid) -> np.ndarray:
    """``J = Im(conj(u) grad u)``, shape ``(2, n, n)``."""
    du = gradient(np.asarray(u, dtype=complex), grid)
    return np.imag(np.conj(u)[None] * du)


def smear(rho: np.ndarray, grid: Grid, hp: HartreeParams) -> np.ndarray:
    """``W_{N^nu} * rho`` by periodic frequency-space convolution."""
    return ifft2(hp.symbol(grid) * fft2(rho)).real


def _check_normalized(u: np.ndarray, grid: Grid) -> None:
    nrm = norm(u, grid)
    if abs(nrm**2 - 1) > NORM_TOL:
        raise ValueError(f"u is not normalized (||u||^2 = {nrm**2:.12g})")


def _state(u: np.ndarray, grid: Grid, p: PhysicsParams, hartree: bool) -> _State:
    u = grid.check_field(np.asarray(u, dtype=complex), "u")
    h2 = grid.h**2
    rho = np.abs(u) ** 2
    du = gradient(u, grid)
    if p.beta != 0:
        A = vector_potential(rho, grid, p.kernel, check_sign=False)
    else:
        A = np.zeros((2,) + u.shape)
    V = trap_potential(grid, p.s) if p.trap_on else 0.0

    kin_plain = h2 * float(np.sum(np.abs(du) ** 2))
    J = np.imag(np.conj(u)[None] * du)
    cross = 2 * p.beta * h2 * float(np.sum(A * J))
    a_sq = p.beta**2 * h2 * float(np.sum((A[0] ** 2 + A[1] ** 2) * rho))
    cov = -1j * du + p.beta * A * u[None]
    kin_mag = h2 * float(np.sum(np.abs(cov) ** 2))
    pot = h2 * float(np.sum(V * rho)) if p.trap_on else 0.0
    if hartree:
        if p.hartree is None:
            raise ValueError("Hartree energy requires hartree parameters")
        smeared = smear(rho, grid, p.hartree)
    else:
        smeared = rho
    quartic = -0.5 * p.g * h2 * float(np.sum(smeared * rho))
    bd = EnergyBreakdown(
        total=kin_mag + pot + quartic, kinetic_plain=kin_plain, cross=cross, a_squared=a_sq,
        kinetic_magnetic=kin_mag, potential=pot, quartic=quartic,
    )
    return _State(rho=rho, du=du, A=A, V=V, smeared=smeared, breakdown=bd)


def energy_afp(u: np.ndarray, grid: Grid, p: PhysicsParams, require_normalized: bool = True) -> EnergyBreakdown:
    """Average-field Pauli energy of a normalized field."""
    if require_normalized:
        _check_normalized(u, grid)
    return _state(u, grid, p, hartree=False).breakdown


def energy_afh(u: np.ndarray, grid: Grid, p: PhysicsParams, require_normalized: bool = True) -> EnergyBreakdown:
    """Average-field Hartree energy: smeared attraction, mollified kernel."""
    if p.hartree is None:
        raise ValueError("Hartree energy requires hartree parameters")
    if require_normalized:
        _check_normalized(u, grid)
    return _state(u, grid, p, hartree=True).breakdown


def _gradient(u: np.ndarray, grid: Grid, p: PhysicsParams, hartree: bool) -> tuple[np.ndarray, EnergyBreakdown]:
    u = np.asarray(u, dtype=complex)
    st = _state(u, grid, p, hartree)
    cov = -1j * st.du + p.beta * st.A * u[None]
    # sum_j (-i d_j + beta A_j) cov_j
    out = np.zeros_like(u)
    dcov0 = gradient(cov[0], grid)[0]
    dcov1 = gradient(cov[1], grid)[1]
    out += -1j * (dcov0 + dcov1) + p.beta * (st.A[0] * cov[0] + st.A[1] * cov[1])
    if p.trap_on:
        out += st.V * u
    out -= p.g * st.smeared * u
    if p.beta != 0:
        j_beta = np.imag(np.conj(u)[None] * st.du) + p.beta * st.A * st.rho[None]
        out -= 2 * p.beta * scalar_convolution(j_beta, grid, p.kernel) * u
    return out, st.breakdown


def grad_afp(u: np.ndarray, grid: Grid, p: PhysicsParams, require_normalized: bool = True) -> np.ndarray:
    """Functional gradient ``G[u]`` of the Pauli energy."""
    if require_normalized:
        _check_normalized(u, grid)
    return _gradient(u, grid, p, hartree=False)[0]


def grad_afh(u: np.ndarray, grid: Grid, p: PhysicsParams, require_normalized: bool = True) -> np.ndarray:
    """Functional gradient of the Hartree energy."""
    if p.hartree is None:
        raise ValueError("Hartree energy requires hartree parameters")
    if require_normalized:
        _check_normalized(u, grid)
    return _gradient(u, grid, p, hartree=True)[0]


def energy_and_gradient(u: np.ndarray, grid: Grid, p: PhysicsParams, hartree: bool = False):
    """``(G[u], breakdown)`` in one pass, without the normalization check."""
    return _gradient(u, grid, p, hartree)


def gn_quotient(u: np.ndarray, grid: Grid, beta: float = 0.0, R: float = 0.0,
                padding_factor: int = 2) -> float:
    """Magnetic kinetic energy over ``(1/2) int |u|^4``."""
    _check_normalized(u, grid)
    p = PhysicsParams(beta=beta, g=0.0, trap_on=False, R=R, padding_factor=padding_factor)
    bd = energy_afp(u, grid, p)
    q4 = 0.5 * integrate(np.abs(u) ** 4, grid)
    if not q4 > 0:
        raise ValueError("quartic norm vanishes")
    return float(bd.kinetic_magnetic / q4)


def modulus_kinetic(u: np.ndarray, grid: Grid) -> float:
    """``int |grad |u||^2`` in the pointwise form ``(Re(conj(u) du)/|u|)^2``.

    This is the representation used in the diamagnetic inequality and is
    well defined where ``u`` vanishes (the integrand is set to 0 there).
    """
    u = np.asarray(u, dtype=complex)
    du = gradient(u, grid)
    mod = np.abs(u)
    num = np.real(np.conj(u)[None] * du)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(mod > 0, num / np.where(mod > 0, mod, 1.0), 0.0)
    return float(integrate(np.sum(q**2, axis=0), grid))
