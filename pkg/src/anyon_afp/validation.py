"""Invariant suites shared by the ``validate`` command and the tests.

Every suite returns a list of :class:`Check` records rather than raising, so
callers can report all failures at once.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .energy import (
    HartreeParams, PhysicsParams, energy_afh, energy_afp, energy_and_gradient, modulus_kinetic,
)
from .grid import Grid, integrate, make_grid, normalize
from .kernel import KernelConfig, curl, divergence, radial_oracle, vector_potential
from .townes import townes


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def random_field(grid: Grid, rng: np.random.Generator, n_bumps: int = 3, spread: float | None = None) -> np.ndarray:
    """Normalized sum of modulated Gaussians, decayed well inside the box."""
    L = grid.box_length
    spread = L / 10 if spread is None else spread
    x1, x2 = grid.coords
    u = np.zeros((grid.n, grid.n), complex)
    for _ in range(n_bumps):
        c = rng.normal(size=2) * spread
        w = rng.uniform(0.05, 0.1) * L
        k = rng.normal(size=2) * 1.5 / (w)
        amp = rng.normal() + 1j * rng.normal()
        u += amp * np.exp(-((x1 - c[0]) ** 2 + (x2 - c[1]) ** 2) / (2 * w * w) + 1j * (k[0] * x1 + k[1] * x2))
    return normalize(u, grid)


def smooth_density_corpus(grid: Grid) -> list[tuple[str, np.ndarray]]:
    x1, x2 = grid.coords
    r2 = x1**2 + x2**2
    # Townes density at scale 0.6 so its exponential tail has decayed at the box edge
    q = townes().profile(np.sqrt(r2) / 0.6) ** 2
    return [
        ("gaussian", np.exp(-r2) / np.pi),
        ("offset_anisotropic", np.exp(-((x1 - 0.7) ** 2 / 1.5 + (x2 + 0.3) ** 2 / 0.6))),
        ("two_bumps", np.exp(-((x1 - 1) ** 2 + x2**2) * 2) + 0.5 * np.exp(-((x1 + 1) ** 2 + (x2 - 1) ** 2))),
        ("townes_squared", q / integrate(q, grid)),
    ]


def kernel_suite(grid: Grid | None = None) -> list[Check]:
    """Curl identity, zero divergence, and Newton-oracle agreement."""
    grid = grid or make_grid(256, 16.0)
    checks = []
    for name, rho in smooth_density_corpus(grid):
        A = vector_potential(rho, grid)
        err = float(np.abs(curl(A, grid) - 2 * np.pi * rho).max())
        tol = 1e-5
        checks.append(Check(f"curl_identity[{name}]", err <= tol, err, tol))
        dv = float(np.abs(divergence(A, grid)).max())
        checks.append(Check(f"divergence_free[{name}]", dv <= 1e-8, dv, 1e-8))
    rt = np.linspace(0.0, grid.box_length, 40001)
    for name, f in [("gaussian", lambda t: np.exp(-t * t) / np.pi),
                    ("townes_squared", None)]:
        if f is None:
            prof = townes().profile
            g0 = townes().consts.g_star0
            f = lambda t: prof(t) ** 2 / g0  # noqa: E731
        x1, x2 = grid.coords
        rho = f(np.hypot(x1, x2))
        A = vector_potential(rho, grid)
        Ao = radial_oracle(rt, f, grid)
        rel = float(np.abs(A - Ao).max() / np.abs(Ao).max())
        checks.append(Check(f"newton_oracle[{name}]", rel <= 1e-3, rel, 1e-3))
    return checks


def gradient_suite(grid: Grid | None = None, n_fields: int = 20, n_dirs: int = 20, seed: int = 0,
                   eps: float = 1e-5, tol: float = 1e-5,
                   betas=(0.0, 0.1), gs=(0.0, 5.0), hartree_modes=(False, True)) -> list[Check]:
    """Central finite differences of the energy against ``2 Re <G, phi>``."""
    grid = grid or make_grid(64, 16.0)
    rng = np.random.default_rng(seed)
    checks = []
    for hartree in hartree_modes:
        for beta in betas:
            for g in gs:
                p = PhysicsParams(beta=beta, g=g, R=0.1 if hartree else 0.0,
                                  hartree=HartreeParams(0.5, 16.0) if hartree else None)
                energy = energy_afh if hartree else energy_afp
                worst = 0.0
                for _ in range(n_fields):
                    u = random_field(grid, rng)
                    G, _ = energy_and_gradient(u, grid, p, hartree)
                    for _ in range(n_dirs):
                        phi = random_field(grid, rng) * (rng.normal() + 1j * rng.normal())
                        ep = energy(u + eps * phi, grid, p, require_normalized=False).total
                        em = energy(u - eps * phi, grid, p, require_normalized=False).total
                        fd = (ep - em) / (2 * eps)
                        an = 2 * float(np.real(grid.h**2 * np.vdot(G, phi)))
                        worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
                checks.append(Check(f"gradient_fd[hartree={hartree},beta={beta},g={g}]", worst <= tol, worst, tol))
    return checks


def inequality_suite(grid: Grid | None = None, n_fields: int = 200, betas=(0.0, 0.5, 1.0, 2.0),
                     seed: int = 1, slack: float = 1e-8) -> list[Check]:
    """Diamagnetic, Bogomol'nyi and Gagliardo-Nirenberg inequalities."""
    grid = grid or make_grid(64, 16.0)
    rng = np.random.default_rng(seed)
    gstar = townes().consts.g_star0
    worst = {"diamagnetic": -np.inf, "bogomolnyi": -np.inf, "gagliardo_nirenberg": -np.inf}
    for _ in range(n_fields):
        u = random_field(grid, rng)
        mod_kin = modulus_kinetic(u, grid)
        q4 = integrate(np.abs(u) ** 4, grid)
        for beta in betas:
            bd = energy_afp(u, grid, PhysicsParams(beta=beta, trap_on=False))
            worst["diamagnetic"] = max(worst["diamagnetic"], mod_kin - bd.kinetic_magnetic)
            worst["bogomolnyi"] = max(worst["bogomolnyi"], 2 * np.pi * beta * q4 - bd.kinetic_magnetic)
            if beta == 0:
                worst["gagliardo_nirenberg"] = max(worst["gagliardo_nirenberg"], 0.5 * gstar * q4 - bd.kinetic_plain)
    return [Check(f"inequality[{k}]", v <= slack, float(v), slack,
                  "max violation (positive means violated)") for k, v in worst.items()]


def hardy_suite(grid: Grid | None = None, n_fields: int = 50, seed: int = 2) -> list[Check]:
    """The Hardy-type ratio stays below one fitted constant on the corpus."""
    from .kernel import hardy_ratio

    grid = grid or make_grid(64, 16.0)
    rng = np.random.default_rng(seed)
    ratios = np.array([hardy_ratio(random_field(grid, rng), grid, KernelConfig()) for _ in range(n_fields)])
    bound = float(ratios.max())
    return [Check("hardy_ratio_bounded", bool(np.isfinite(bound) and bound < 10.0), bound, 10.0,
                  f"median {np.median(ratios):.3g}")]
