"""Energy minimization on the unit L2 sphere and blow-up diagnostics.

The iteration is a preconditioned projected gradient descent::

    r = G[u] - mu u,          mu = Re <u, G[u]>
    d = P r,                  P = (-Delta + c)^{-1}
    u <- normalize(u - tau d)

with a Barzilai-Borwein trial step refined by Armijo backtracking, so that
every accepted step lowers the energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .energy import EnergyBreakdown, PhysicsParams, energy_and_gradient
from .fieldio import dump_field, load_field
from .grid import Grid, fft2, gradient, ifft2, inner, norm, normalize
from .townes import sample_on_grid, townes

INIT_KINDS = ("gaussian", "townes", "file")


@dataclass(frozen=True)
class SolverConfig:
    """Minimizer settings.

    ``init_scale`` is the Gaussian width or the Townes length ``ell``;
    ``init_path`` names a field dump for ``init_kind="file"``.
    """

    max_iters: int = 5000
    energy_tol: float = 1e-13
    grad_tol: float = 1e-7
    precond_shift: float = 1.0
    step0: float = 0.5
    backtrack_factor: float = 0.5
    init_kind: str = "gaussian"
    init_scale: float = 1.0
    init_path: str | None = None
    armijo: float = 1e-4
    max_backtracks: int = 40
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("energy_tol", "grad_tol", "precond_shift", "step0", "init_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.1 < self.backtrack_factor < 0.9:
            raise ValueError("backtrack_factor must lie in (0.1, 0.9)")
        if self.init_kind not in INIT_KINDS:
            raise ValueError(f"init_kind must be one of {INIT_KINDS}, got {self.init_kind!r}")
        if self.init_kind == "file" and not self.init_path:
            raise ValueError("init_kind='file' needs init_path")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class MinimizeResult:
    u_final: np.ndarray
    energy: EnergyBreakdown
    iterations: int
    converged: bool
    eps_inv_grad: float
    history: list = field(default_factory=list)
    diverged: bool = False
    status: str = ""
    mu: float = float("nan")
    residual: float = float("nan")
    grid: Grid | None = field(default=None, repr=False)


def initial_state(grid: Grid, cfg: SolverConfig, s: float = 2.0) -> np.ndarray:
    if cfg.init_kind == "gaussian":
        w = cfg.init_scale
        u = np.exp(-grid.radius**2 / (2 * w * w)).astype(complex)
        return normalize(u, grid)
    if cfg.init_kind == "townes":
        return sample_on_grid(townes(s).profile, grid, cfg.init_scale)
    u, g0 = load_field(cfg.init_path)
    if (g0.n, g0.box_length) != (grid.n, grid.box_length):
        raise ValueError("initial field was stored on a different grid")
    return normalize(u, grid)


def precondition(r: np.ndarray, grid: Grid, shift: float) -> np.ndarray:
    return ifft2(fft2(r) / (grid.k_squared_deriv() + shift))


def centroid(u: np.ndarray, grid: Grid) -> np.ndarray:
    rho = np.abs(u) ** 2
    x1, x2 = grid.coords
    m = rho.sum()
    return np.array([(x1 * rho).sum() / m, (x2 * rho).sum() / m])


def translate(u: np.ndarray, grid: Grid, shift) -> np.ndarray:
    """``u(x - shift)`` by a Fourier phase (exact for band-limited fields)."""
    k = grid.wavenumbers
    ph = np.exp(-1j * (k[:, None] * shift[0] + k[None, :] * shift[1]))
    return ifft2(fft2(u) * ph)


def _grad_norm(u: np.ndarray, grid: Grid) -> float:
    du = gradient(u, grid)
    return float(np.sqrt(grid.h**2 * np.sum(np.abs(du) ** 2)))


def minimize(p: PhysicsParams, cfg: SolverConfig, grid: Grid, u0: np.ndarray | None = None,
             hartree: bool = False) -> MinimizeResult:
    """Minimize the Pauli (or, with ``hartree=True``, Hartree) energy.

    Divergence (collapse below the grid resolution) is reported through
    ``diverged`` and ``status`` rather than raised.
    """
    if hartree and p.hartree is None:
        raise ValueError("Hartree minimization requires hartree parameters")
    u = normalize(np.asarray(u0 if u0 is not None else initial_state(grid, cfg, p.s), dtype=complex), grid)
    h2 = grid.h**2
    # collapse: the core 2*eps has shrunk to half its start and below 8 points
    resolve_len = min(4 * grid.h, 0.5 / _grad_norm(u, grid))

    def evaluate(v):
        G, bd = energy_and_gradient(v, grid, p, hartree)
        mu = float(np.real(h2 * np.vdot(v, G)))
        return G, bd, mu

    G, bd, mu = evaluate(u)
    history = [bd.total]
    tau = cfg.step0
    prev = None
    converged = diverged = False
    status = "max_iters reached"
    it = 0
    res_norm = float("nan")
    for it in range(1, cfg.max_iters + 1):
        r = G - mu * u
        res_norm = norm(r, grid)
        d = precondition(r, grid, cfg.precond_shift)
        d -= np.real(h2 * np.vdot(u, d)) * u
        slope = 2 * float(np.real(h2 * np.vdot(r, d)))
        if prev is not None:
            s_vec = u - prev[0]
            y_vec = d - prev[1]
            sy = float(np.real(np.vdot(s_vec, y_vec)))
            if sy > 0:
                tau = float(np.real(np.vdot(s_vec, s_vec))) / sy
        tau = min(max(tau, 1e-6 * cfg.step0), 1e3 * cfg.step0)

        # round-off level of the energy, from the magnitudes of its parts
        e_floor = 64 * np.finfo(float).eps * (
            abs(bd.kinetic_magnetic) + abs(bd.potential) + abs(bd.quartic) + 1.0)
        accepted = False
        tau_try = tau
        for _ in range(cfg.max_backtracks):
            trial = normalize(u - tau_try * d, grid)
            G_t, bd_t, mu_t = evaluate(trial)
            if bd_t.total <= bd.total - cfg.armijo * tau_try * slope:
                accepted = True
                break
            if cfg.armijo * tau_try * slope < e_floor and bd_t.total <= bd.total + e_floor:
                # below the energy's resolution: accept only if stationarity improves
                if norm(G_t - mu_t * trial, grid) < res_norm:
                    accepted = True
                    break
            tau_try *= cfg.backtrack_factor
        tau = tau_try
        if not accepted:
            # no decrease possible at working precision
            if res_norm <= cfg.grad_tol * (1 + abs(mu)):
                converged = True
                status = "converged (line search at precision floor)"
            else:
                status = "line search failed"
            break

        prev = (u, d)
        e_old = bd.total
        u, G, bd, mu = trial, G_t, bd_t, mu_t
        if not p.trap_on:
            c = centroid(u, grid)
            if np.hypot(*c) > 0.25 * grid.h:
                u_c = normalize(translate(u, grid, -c), grid)
                G_c, bd_c, mu_c = evaluate(u_c)
                if bd_c.total <= bd.total:
                    u, G, bd, mu = u_c, G_c, bd_c, mu_c
                    prev = None
        history.append(bd.total)

        if cfg.checkpoint_every and cfg.checkpoint_dir and it % cfg.checkpoint_every == 0:
            Path(cfg.checkpoint_dir).mkdir(parents=True, exist_ok=True)
            dump_field(u, grid, Path(cfg.checkpoint_dir) / f"checkpoint_{it:06d}.bin")

        eps = 1.0 / _grad_norm(u, grid)
        if eps < resolve_len:
            diverged = True
            status = "diverged: collapse under-resolved / unstable regime"
            break
        rel_dec = abs(e_old - bd.total) / (1 + abs(bd.total))
        res_now = norm(G - mu * u, grid)
        if rel_dec <= cfg.energy_tol and res_now <= cfg.grad_tol * (1 + abs(mu)):
            converged = True
            res_norm = res_now
            status = "converged"
            break
    else:
        res_norm = norm(G - mu * u, grid)

    return MinimizeResult(
        u_final=u, energy=bd, iterations=it, converged=converged,
        eps_inv_grad=1.0 / _grad_norm(u, grid), history=history, diverged=diverged,
        status=status, mu=mu, residual=res_norm, grid=grid,
    )


@dataclass
class Alignment:
    theta: float
    shift: tuple[float, float]
    shift_cells: tuple[int, int]
    distance: float
    u_aligned: np.ndarray = field(repr=False)


def h1_distance(u: np.ndarray, v: np.ndarray, grid: Grid) -> float:
    d = u - v
    dd = gradient(d, grid)
    return float(np.sqrt(grid.h**2 * (np.sum(np.abs(d) ** 2) + np.sum(np.abs(dd) ** 2))))


def align(u: np.ndarray, reference: np.ndarray, grid: Grid) -> Alignment:
    """Translate by the centroid difference (whole cells) and fix the phase.

    The phase ``theta = -arg <reference, u_shifted>`` minimizes
    ``||e^{i theta} u_shifted - reference||`` and makes
    ``int reference * Im(e^{i theta} u_shifted) = 0`` for real references.
    """
    if np.shape(u) != np.shape(reference):
        raise ValueError("align: fields live on different grids")
    delta = centroid(u, grid) - centroid(reference, grid)
    cells = tuple(int(c) for c in np.rint(delta / grid.h))
    us = np.roll(u, (-cells[0], -cells[1]), axis=(0, 1))
    ov = inner(reference, us, grid)
    theta = float(-np.angle(ov)) if abs(ov) > 0 else 0.0
    ua = np.exp(1j * theta) * us
    return Alignment(
        theta=theta, shift=(cells[0] * grid.h, cells[1] * grid.h), shift_cells=cells,
        distance=h1_distance(ua, reference, grid), u_aligned=ua,
    )


def blowup_length(result: MinimizeResult | np.ndarray, grid: Grid | None = None,
                  mode: str = "grad_inverse", s: float = 2.0, require_converged: bool = True) -> float:
    """Concentration length of a state.

    ``grad_inverse``: ``||grad u||^{-1}`` (``||grad Q0|| = 1``, so a Townes
    profile at scale ``ell`` returns ``ell``).  ``variational``: the ``ell``
    minimizing ``|| |u| - ell^{-1} Q0(. / ell) ||``, centered at the centroid.
    """
    if isinstance(result, MinimizeResult):
        if require_converged and not result.converged:
            raise ValueError("blow-up length requires a converged result")
        u = result.u_final
        grid = grid or result.grid
    else:
        u = np.asarray(result)
    if grid is None:
        raise ValueError("grid required")
    eps = 1.0 / _grad_norm(u, grid)
    if mode == "grad_inverse":
        return eps
    if mode != "variational":
        raise ValueError(f"unknown mode {mode!r}")
    prof = townes(s).profile
    mod = np.abs(u)
    c = centroid(u, grid)
    x1, x2 = grid.coords
    r = np.hypot(x1 - c[0], x2 - c[1])

    def dist(log_ell):
        ell = np.exp(log_ell)
        q = prof(r / ell)
        q = q / np.sqrt(grid.h**2 * np.sum(q**2))
        return grid.h**2 * np.sum((mod - q) ** 2)

    res = optimize.minimize_scalar(dist, bounds=(np.log(eps / 4), np.log(eps * 4)), method="bounded",
                                   options={"xatol": 1e-10})
    return float(np.exp(res.x))
