"""Self-generated vector potential ``A[rho] = grad_perp(log|x|) * rho``.

The convolution is done in frequency space on a zero-padded grid using the
Fourier transform of the logarithm truncated at a radius that covers every
difference ``x - y`` between two box points.  Within that range the
truncated kernel equals the true kernel, so the result is exact for densities
that are band-limited and supported in the box (no far-field tail is lost).
The transform of the truncated logarithm is an entire function, so sampling
it on the padded lattice is well defined at ``k = 0``.

``A`` itself does not decay (``|A| ~ m/|x|``), so a plain periodic spectral
curl on the box would see a jump at the boundary.  :func:`curl` and
:func:`divergence` subtract a smooth reference field that matches the
harmonic far field, whose curl and divergence are known in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy import integrate
from scipy.special import gammainc, j0, j1

from .grid import Grid, fft2, gradient, ifft2

@dataclass(frozen=True)
class KernelConfig:
    """Convolution settings.

    Parameters
    ----------
    padding_factor : int
        Size of the padded grid relative to the box, 2 or 4.  With 2 the
        kernel is built once on a 4x grid and folded onto the 2x grid.
    R : float
        Disk-mollification radius; 0 gives the bare kernel.
    compat_pi2 : bool
        Use the ``1/(pi^2 R^2)`` mollifier normalization instead of the
        unit-mass ``1/(pi R^2)``.  This scales ``A_R`` by ``1/pi``.
    """

    padding_factor: int = 2
    R: float = 0.0
    compat_pi2: bool = False

    def __post_init__(self):
        if self.padding_factor not in (2, 4):
            raise ValueError(f"padding_factor must be 2 or 4, got {self.padding_factor}")
        if self.R < 0:
            raise ValueError(f"regularization radius must be >= 0, got {self.R}")

    def check(self, grid: Grid) -> None:
        if self.R > 0 and self.R >= grid.box_length / 4:
            raise ValueError(f"R = {self.R} must be < box_length/4 = {grid.box_length / 4}")


def _log_truncated_hat(k: np.ndarray, rt: float) -> np.ndarray:
    """Fourier transform of ``log|x| * 1(|x| < rt)``."""
    out = np.empty_like(k)
    small = k * rt < 1e-3
    ks = k[~small]
    x = ks * rt
    out[~small] = 2 * np.pi * (rt * np.log(rt) * j1(x) / ks + (j0(x) - 1.0) / ks**2)
    # series: pi rt^2 (log rt - 1/2) - pi k^2 rt^4 (log rt - 1/4)/8 + ...
    kk = k[small]
    out[small] = np.pi * rt**2 * (np.log(rt) - 0.5) - np.pi * kk**2 * rt**4 * (np.log(rt) - 0.25) / 8
    return out


def _mollifier_hat(k: np.ndarray, R: float) -> np.ndarray:
    """Transform of the unit-mass disk indicator ``1(B_R)/(pi R^2)``."""
    x = k * R
    out = np.ones_like(k)
    nz = x > 1e-8
    out[nz] = 2 * j1(x[nz]) / x[nz]
    return out


def _wavenumbers(n: int, length: float) -> tuple[np.ndarray, np.ndarray]:
    k = 2 * np.pi * np.fft.fftfreq(n, d=length / n)
    kd = k.copy()
    kd[n // 2] = 0.0
    return k, kd


@lru_cache(maxsize=32)
def _symbols(n: int, box_length: float, padding_factor: int, R: float, compat_pi2: bool):
    """Frequency symbols of ``grad_perp w`` on the padded grid, shape (2, M, M)."""
    h = box_length / n
    rt = np.sqrt(2.0) * box_length + 2 * h + R
    fine = 4 * n
    k, kd = _wavenumbers(fine, fine * h)
    kmag = np.hypot(k[:, None], k[None, :])
    what = _log_truncated_hat(kmag, rt)
    if R > 0:
        what = what * _mollifier_hat(kmag, R)
        if compat_pi2:
            what = what / np.pi
    # grad_perp = (-d2, d1)
    sym = np.stack([-1j * kd[None, :] * what, 1j * kd[:, None] * what])
    if padding_factor == 4:
        return sym / h**2
    # fold the real-space kernel from the 4x grid onto the 2x grid
    kern = ifft2(sym).real / h**2
    m = 2 * n
    idx = np.r_[0:n, fine - n:fine]
    small = kern[:, idx][:, :, idx]
    small[:, n, :] = 0.0
    small[:, :, n] = 0.0
    # exact antisymmetry so the discrete convolution has an exact adjoint
    flip = np.roll(small[:, ::-1, ::-1], 1, axis=(1, 2))
    small = 0.5 * (small - flip)
    assert small.shape == (2, m, m)
    return fft2(small)


def _pad(f: np.ndarray, m: int) -> np.ndarray:
    n = f.shape[-1]
    out = np.zeros(f.shape[:-2] + (m, m), dtype=f.dtype)
    out[..., :n, :n] = f
    return out


def _symbols_for(grid: Grid, cfg: KernelConfig) -> np.ndarray:
    cfg.check(grid)
    return _symbols(grid.n, grid.box_length, cfg.padding_factor, float(cfg.R), bool(cfg.compat_pi2))


def vector_potential(rho: np.ndarray, grid: Grid, cfg: KernelConfig = KernelConfig(),
                     check_sign: bool = True) -> np.ndarray:
    """``A[rho]`` (or ``A_R[rho]``), returned with shape ``(2, n, n)``.

    Raises if ``rho`` has significantly negative entries.
    """
    rho = grid.check_field(rho, "density")
    if np.iscomplexobj(rho):
        raise TypeError("density must be real")
    if check_sign and rho.size and rho.min() < -1e-12 * max(1.0, float(np.abs(rho).max())):
        raise ValueError("density has negative entries")
    sym = _symbols_for(grid, cfg)
    m = sym.shape[-1]
    rh = fft2(_pad(rho, m))
    n = grid.n
    out = ifft2(sym * rh[None]).real
    # padded grid starts at the box corner; results for box points sit in [:n, :n]
    return out[:, :n, :n] * grid.h**2


def scalar_convolution(F: np.ndarray, grid: Grid, cfg: KernelConfig = KernelConfig()) -> np.ndarray:
    """``(grad_perp w ⋆ F)(x) = int grad_perp w(x - y) . F(y) dy``."""
    F = grid.check_field(F, "vector field")
    if F.shape[0] != 2:
        raise ValueError("F must have shape (2, n, n)")
    sym = _symbols_for(grid, cfg)
    m = sym.shape[-1]
    Fh = fft2(_pad(np.asarray(F, dtype=float), m))
    out = ifft2(sym[0] * Fh[0] + sym[1] * Fh[1]).real
    return out[: grid.n, : grid.n] * grid.h**2


# ---------------------------------------------------------------------------
# curl / divergence with far-field subtraction


def _far_field_basis(z: np.ndarray, order: int, sigma: float):
    """Smoothed multipole fields ``phi_k(r) z^{-k-1}`` and their ``d/dzbar``.

    ``phi_k = 1 - exp(-x) sum_{j<=k} x^j/j!`` with ``x = |z|^2/sigma^2``
    vanishes to order ``|z|^{2k+2}`` at the origin, so each basis field is
    smooth.  For ``F = A2 + i A1`` one has ``dF/dzbar = (curl + i div)/2``.
    """
    r2 = np.abs(z) ** 2
    x = r2 / sigma**2
    ex = np.exp(-x)
    zs = np.where(r2 > 0, z, 1.0)
    fields, dbar = [], []
    for k in range(order + 1):
        phi = gammainc(k + 1, x)
        fields.append(np.where(r2 > 0, phi / zs ** (k + 1), 0.0))
        # dphi/dzbar / z^{k+1} = exp(-x) zbar^k / (k! sigma^{2k+2})
        dbar.append(ex * np.conj(z) ** k / (factorial(k) * sigma ** (2 * k + 2)))
    return fields, dbar


@lru_cache(maxsize=16)
def _far_field_setup(n: int, box_length: float, order: int):
    grid = Grid(n, box_length)
    x1, x2 = grid.coords
    z = x1 + 1j * x2
    sigma = box_length / 16
    fields, dbar = _far_field_basis(z, order, sigma)
    half = box_length / 2
    band = np.maximum(np.abs(x1), np.abs(x2)) >= 0.75 * half
    design = np.stack([f[band] for f in fields], axis=1)
    colscale = np.linalg.norm(design, axis=0)
    return band, design / colscale, colscale, np.stack(fields), np.stack(dbar)


def _split_far_field(A: np.ndarray, grid: Grid, order: int = 20):
    """Return ``(A - A_ref, curl_ref, div_ref)``."""
    band, design, colscale, fields, dbar = _far_field_setup(grid.n, grid.box_length, order)
    F = A[1] + 1j * A[0]
    scale = max(float(np.abs(F[band]).max()), 1e-300)
    coef, *_ = np.linalg.lstsq(design, F[band] / scale, rcond=None)
    coef = coef * scale / colscale
    Fref = np.tensordot(coef, fields, axes=1)
    D = 2 * np.tensordot(coef, dbar, axes=1)
    Aref = np.stack([Fref.imag, Fref.real])
    return A - Aref, D.real, D.imag


def curl(A: np.ndarray, grid: Grid, far_field: bool = True) -> np.ndarray:
    """``d1 A2 - d2 A1`` by spectral differentiation.

    With ``far_field=True`` a fitted harmonic far field is removed first so
    that non-decaying potentials such as ``A[rho]`` are handled accurately.
    """
    A = grid.check_field(A, "vector field")
    if far_field:
        rest, c_ref, _ = _split_far_field(np.asarray(A, dtype=float), grid)
    else:
        rest, c_ref = A, 0.0
    d1 = gradient(rest[1], grid)[0]
    d2 = gradient(rest[0], grid)[1]
    return d1 - d2 + c_ref


def divergence(A: np.ndarray, grid: Grid, far_field: bool = True) -> np.ndarray:
    """``d1 A1 + d2 A2``, with the same far-field treatment as :func:`curl`."""
    A = grid.check_field(A, "vector field")
    if far_field:
        rest, _, d_ref = _split_far_field(np.asarray(A, dtype=float), grid)
    else:
        rest, d_ref = A, 0.0
    return gradient(rest[0], grid)[0] + gradient(rest[1], grid)[1] + d_ref


# ---------------------------------------------------------------------------
# radial oracle


def enclosed_mass(r_tab: np.ndarray, rho_tab: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """``m(r) = 2 pi int_0^r rho(t) t dt`` for the piecewise-linear interpolant.

    The integrand is quadratic on each table interval, so the integral is
    evaluated exactly.  Beyond the table ``rho`` is held at its last value.
    """
    r_tab = np.asarray(r_tab, float)
    rho_tab = np.asarray(rho_tab, float)
    a, b = r_tab[:-1], r_tab[1:]
    slope = np.diff(rho_tab) / np.diff(r_tab)

    def partial(x, i):
        ai, ra, si = a[i], rho_tab[i], slope[i]
        return ra * (x**2 - ai**2) / 2 + si * ((x**3 - ai**3) / 3 - ai * (x**2 - ai**2) / 2)

    idx_all = np.arange(a.size)
    cum = np.concatenate([[0.0], np.cumsum(partial(b, idx_all))])
    radii = np.asarray(radii, float)
    x = np.clip(radii, r_tab[0], r_tab[-1])
    i = np.clip(np.searchsorted(r_tab, x, side="right") - 1, 0, a.size - 1)
    m = cum[i] + partial(x, i)
    beyond = radii > r_tab[-1]
    m = np.where(beyond, cum[-1] + rho_tab[-1] * (radii**2 - r_tab[-1] ** 2) / 2, m)
    return 2 * np.pi * m


def radial_oracle(r_tab: np.ndarray, rho_tab, grid: Grid, center=(0.0, 0.0)) -> np.ndarray:
    """``A(x) = x_perp m(|x|)/|x|^2`` for a radial density.

    ``rho_tab`` is either samples on ``r_tab`` or a callable ``rho(r)``.
    """
    r_tab = np.asarray(r_tab, float)
    x1, x2 = grid.coords
    x1 = x1 - center[0]
    x2 = x2 - center[1]
    r = np.hypot(x1, x2)
    if r_tab[-1] < r.max() - 1e-12:
        raise ValueError(f"r_max = {r_tab[-1]} does not cover the grid (need {r.max():.4g})")
    if callable(rho_tab):
        def f(t):
            return rho_tab(t) * t
        uniq, inv = np.unique(r, return_inverse=True)
        masses = np.empty_like(uniq)
        acc, prev = 0.0, 0.0
        for i, rr in enumerate(uniq):
            if rr > prev:
                acc += integrate.quad(f, prev, rr, limit=200, epsabs=1e-15, epsrel=1e-12)[0]
                prev = rr
            masses[i] = acc
        m = 2 * np.pi * masses[inv].reshape(r.shape)
    else:
        m = enclosed_mass(r_tab, np.asarray(rho_tab, float), r)
    with np.errstate(invalid="ignore", divide="ignore"):
        fac = np.where(r > 0, m / np.where(r > 0, r, 1.0) ** 2, 0.0)
    return np.stack([-x2 * fac, x1 * fac])


def hardy_ratio(u: np.ndarray, grid: Grid, cfg: KernelConfig = KernelConfig()) -> float:
    """``||A[|u|^2] u|| / (||u||^2 ||grad|u|||)``."""
    rho = np.abs(u) ** 2
    A = vector_potential(rho, grid, cfg)
    num = np.sqrt(grid.h**2 * np.sum((A[0] ** 2 + A[1] ** 2) * rho))
    mod = np.sqrt(rho)
    g = gradient(mod, grid)
    den = grid.h**2 * np.sum(rho) * np.sqrt(grid.h**2 * np.sum(g**2))
    return float(num / den)
