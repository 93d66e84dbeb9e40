"""Townes soliton: the positive radial solution of ``-Q'' - Q'/r + Q - Q**3 = 0``.

The profile is found by shooting on ``Q(0)`` with bisection, integrating the
radial ODE with DOP853.  Beyond a matching radius the solution is continued
by the decaying Bessel tail ``c*K0(r)``, where the cubic term is below
round-off.  A second, independent solve by collocation (``solve_bvp``) is
available as a cross-check.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.special import i0, i1, k0, k1

from .grid import Grid, integrate as grid_integrate

R_START = 1e-4
DEFAULT_R_MAX = 24.0
R_MATCH = 10.0


def _rhs(r, y):
    q, p, _ = y
    return [p, -p / r + q - q**3, q * q * r]


def _series_start(a: float, r0: float = R_START) -> list[float]:
    # Q = a + c r^2 + ..., with c = (a - a^3)/4 from the regular expansion.
    c = (a - a**3) / 4.0
    return [a + c * r0**2, 2 * c * r0, 0.5 * a * a * r0**2]


def _crosses_zero(r, y):
    return y[0]


_crosses_zero.terminal = True


def _turns_up(r, y):
    return y[1]


_turns_up.terminal = True


def _shoot(a: float, r_end: float, dense: bool = False):
    return integrate.solve_ivp(
        _rhs,
        (R_START, r_end),
        _series_start(a),
        method="DOP853",
        rtol=1e-13,
        atol=1e-16,
        events=None if dense else [_crosses_zero, _turns_up],
        dense_output=dense,
    )


@dataclass
class RadialProfile:
    """Tabulated Townes profile plus the continuous interpolant it came from.

    ``r`` is a graded mesh on ``[0, r_max]`` and ``q`` the values ``Q(r)``.
    """

    r: np.ndarray
    q: np.ndarray
    r_max: float
    amplitude: float
    r_match: float
    tail_coeff: float
    residual: float
    meta: dict = field(default_factory=dict)
    _sol: object = field(default=None, repr=False)
    _mass_match: float = field(default=0.0, repr=False)

    def __call__(self, r) -> np.ndarray:
        """Evaluate ``Q`` at arbitrary radii (vectorized)."""
        r = np.abs(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        inner = r <= self.r_match
        if not np.any(inner):
            pass
        elif self._sol is None:
            out[inner] = np.interp(r[inner], self.r, self.q)
        else:
            rr = np.maximum(r[inner], R_START)
            out[inner] = self._sol(rr.ravel())[0].reshape(rr.shape)
            tiny = r[inner] < R_START
            if np.any(tiny):
                a = self.amplitude
                out[inner] = np.where(tiny, a + (a - a**3) / 4 * r[inner] ** 2, out[inner])
        out[~inner] = self.tail_coeff * k0(np.maximum(r[~inner], 1e-300))
        return out

    def derivative(self, r) -> np.ndarray:
        r = np.abs(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        inner = r <= self.r_match
        if np.any(inner):
            rr = np.maximum(r[inner], R_START)
            out[inner] = self._sol(rr.ravel())[1].reshape(rr.shape)
        out[~inner] = -self.tail_coeff * k1(r[~inner])
        return out

    def enclosed(self, r) -> np.ndarray:
        """``int_0^r Q(t)^2 t dt`` (no 2*pi factor)."""
        r = np.abs(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        inner = r <= self.r_match
        if np.any(inner):
            rr = np.maximum(r[inner], R_START)
            out[inner] = self._sol(rr.ravel())[2].reshape(rr.shape)
        ro = r[~inner]
        c2 = self.tail_coeff**2
        rm = self.r_match
        out[~inner] = self._mass_match + c2 * (_tk0sq(ro) - _tk0sq(rm))
        return out


def _tk0sq(t):
    # antiderivative of t*K0(t)^2
    return 0.5 * t**2 * (k0(t) ** 2 - k1(t) ** 2)


def _residual(profile: RadialProfile, r_lo: float = 0.05, npts: int = 4001) -> float:
    """Max ODE residual on a uniform interior mesh.

    ``Q''`` is obtained by 8th-order central differences of the interpolated
    ``Q'``, so this does not reuse the integrator's right-hand side.
    """
    r = np.linspace(r_lo, profile.r_max - 0.5, npts)
    dr = r[1] - r[0]
    offs = np.arange(-4, 5)
    w = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
    pts = r[:, None] + offs[None, :] * dr
    p = profile.derivative(pts.ravel()).reshape(pts.shape)
    qpp = p @ w / dr
    q = profile(r)
    res = qpp + profile.derivative(r) / r - q + q**3
    return float(np.max(np.abs(res)))


def solve_townes(
    tol: float = 1e-9,
    bracket: tuple[float, float] = (2.0, 2.5),
    r_max: float = DEFAULT_R_MAX,
    n_mesh: int = 4001,
) -> RadialProfile:
    """Shooting solve for the Townes profile.

    Parameters
    ----------
    tol : float
        Required max-norm ODE residual, in ``[1e-12, 1e-6]``.
    bracket : (float, float)
        Initial interval for ``Q(0)``.  The lower end must produce a solution
        that turns upward, the upper end one that crosses zero.
    """
    if not 1e-12 <= tol <= 1e-6:
        raise ValueError(f"tol must lie in [1e-12, 1e-6], got {tol}")
    lo, hi = map(float, bracket)

    def crosses(a):
        # None: trajectory undecided within the probe range (bracket converged)
        s = _shoot(a, 30.0)
        if s.t_events[0].size:
            return True
        if s.t_events[1].size:
            return False
        return None

    if crosses(lo) is not False or crosses(hi) is not True:
        raise ValueError(f"bisection bracket [{lo}, {hi}] does not enclose the ground state")
    while hi - lo > 4 * np.finfo(float).eps * hi:
        mid = 0.5 * (lo + hi)
        side = crosses(mid)
        if side is None:
            lo = hi = mid
            break
        if side:
            hi = mid
        else:
            lo = mid
    a = 0.5 * (lo + hi)

    # Near r_match the solution is linear: Q = c K0 + d I0.  The I0 part is
    # the residual shooting error; keep only the decaying component.
    r_match = R_MATCH
    sol = _shoot(a, r_match + 1e-9, dense=True).sol
    q_m, p_m, _ = sol(r_match)
    basis = np.array([[k0(r_match), i0(r_match)], [-k1(r_match), i1(r_match)]])
    c, d = np.linalg.solve(basis, [q_m, p_m])

    t = np.linspace(0.0, 1.0, n_mesh)
    r = r_max * t**2
    prof = RadialProfile(
        r=r, q=np.empty_like(r), r_max=r_max, amplitude=a, r_match=r_match,
        tail_coeff=float(c), residual=np.nan, _sol=sol,
    )
    prof._mass_match = float(sol(r_match)[2])
    prof.q[:] = prof(r)
    prof.residual = _residual(prof)
    prof.meta = {
        "method": "shooting+bisection (DOP853)",
        "bracket_final": [lo, hi],
        "growing_mode_coeff": float(d),
    }
    if prof.residual > tol:
        raise RuntimeError(f"Townes residual {prof.residual:.2e} exceeds tol {tol:.1e}")
    if prof.q[-1] > 1e-10 * prof.q[0]:
        raise RuntimeError("profile has not decayed to 1e-10 Q(0) at r_max; increase r_max")
    return prof


def solve_townes_relaxation(r_max: float = DEFAULT_R_MAX, tol: float = 1e-10) -> float:
    """Independent collocation solve; returns the amplitude ``Q(0)``.

    The far boundary carries the Robin condition of the ``K0`` tail.
    """

    def f(r, y):
        return np.vstack([y[1], y[0] - y[0] ** 3])

    def bc(ya, yb):
        return np.array([ya[1], yb[1] + k1(r_max) / k0(r_max) * yb[0]])

    r = np.linspace(0.0, r_max, 400)
    guess = np.vstack([2.2 / np.cosh(r), -2.2 * np.tanh(r) / np.cosh(r)])
    S = np.array([[0.0, 0.0], [0.0, -1.0]])
    sol = integrate.solve_bvp(f, bc, r, guess, S=S, tol=tol, max_nodes=200_000)
    if sol.status != 0:
        raise RuntimeError(f"relaxation solve failed: {sol.message}")
    return float(sol.sol(0.0)[0])


@dataclass
class TownesConstants:
    g_star0: float
    s: float
    q_s: float
    a0: float
    grad_q0_sq: float
    l4_q0: float
    amplitude: float

    def to_dict(self) -> dict:
        return asdict(self)


def _quad(f, a=0.0, b=np.inf, points=None):
    val, _ = integrate.quad(f, a, b, limit=400, epsabs=1e-14, epsrel=1e-12, points=points)
    return val


def constants(profile: RadialProfile, s: float = 2.0, r_cut: float | None = None) -> TownesConstants:
    """Radial quadratures for ``g*(0)``, ``Q_s``, ``A_0`` and friends.

    ``A_0`` uses Newton's theorem: for a radial density the self-generated
    potential has magnitude ``m(r)/r`` with ``m`` the enclosed mass.

    Integrals run to infinity along the Bessel tail unless ``r_cut`` is
    given, in which case the profile is treated as zero beyond it.
    """
    if not s > 0:
        raise ValueError(f"trap exponent s must be positive, got {s}")
    rm = profile.r_match
    upper = np.inf if r_cut is None else float(r_cut)

    def split(f):
        if upper <= rm:
            return _quad(f, 0.0, upper)
        return _quad(f, 0.0, rm) + _quad(f, rm, upper)

    def qf(t):
        return float(profile(np.array([t]))[0])

    def dqf(t):
        return float(profile.derivative(np.array([t]))[0])

    l2 = 2 * np.pi * split(lambda t: qf(t) ** 2 * t)
    # enclosed mass from the ODE state should agree with direct quadrature
    l2_state = 2 * np.pi * float(profile.enclosed(np.array([min(upper, 200.0)]))[0])
    grad = 2 * np.pi * split(lambda t: dqf(t) ** 2 * t) / l2
    l4 = 2 * np.pi * split(lambda t: qf(t) ** 4 * t) / l2**2
    qs = 0.5 * s * 2 * np.pi * split(lambda t: t**s * qf(t) ** 2 * t) / l2

    def a0_integrand(t):
        m = 2 * np.pi * float(profile.enclosed(np.array([t]))[0]) / l2
        return (m / t) ** 2 * qf(t) ** 2 / l2 * t

    a0 = 2 * np.pi * split(a0_integrand)
    if abs(l2 - l2_state) > 1e-8 * l2:
        raise RuntimeError(f"L2 mass mismatch between quadrature ({l2}) and ODE state ({l2_state})")
    return TownesConstants(
        g_star0=l2, s=float(s), q_s=qs, a0=a0, grad_q0_sq=grad, l4_q0=l4,
        amplitude=profile.amplitude,
    )


def sample_on_grid(
    profile: RadialProfile,
    grid: Grid,
    scale: float = 1.0,
    center: tuple[float, float] = (0.0, 0.0),
    g_star0: float | None = None,
) -> np.ndarray:
    """``x -> scale**-1 * Q0((x - center)/scale)`` sampled and L2-normalized."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    if 2 * scale / grid.h < 8:
        raise ValueError(
            f"scale {scale} resolved by only {2 * scale / grid.h:.1f} points across the core (need >= 8)"
        )
    x1, x2 = grid.coords
    r = np.hypot(x1 - center[0], x2 - center[1]) / scale
    u = profile(r).astype(complex)
    nrm = np.sqrt(grid_integrate(np.abs(u) ** 2, grid).real)
    return u / nrm


@dataclass
class TownesData:
    """Profile plus constants, as used by the rest of the package."""

    profile: RadialProfile
    consts: TownesConstants


_CACHE: dict = {}


def townes(s: float = 2.0) -> TownesData:
    """Cached default profile and constants for trap exponent ``s``."""
    if "profile" not in _CACHE:
        _CACHE["profile"] = solve_townes()
    key = ("c", float(s))
    if key not in _CACHE:
        _CACHE[key] = constants(_CACHE["profile"], s)
    return TownesData(_CACHE["profile"], _CACHE[key])


def export_profile(profile: RadialProfile, consts: TownesConstants, path: str | Path) -> list[Path]:
    """Write ``(r, Q(r))`` as two-column text plus a JSON sidecar."""
    path = Path(path)
    txt = path.with_suffix(".txt")
    np.savetxt(txt, np.column_stack([profile.r, profile.q]), fmt="%.17e", header="r Q(r)")
    side = path.with_suffix(".json")
    side.write_text(json.dumps({
        "constants": consts.to_dict(),
        "solver": {
            "amplitude": profile.amplitude,
            "r_max": profile.r_max,
            "r_match": profile.r_match,
            "tail_coeff": profile.tail_coeff,
            "residual": profile.residual,
            **profile.meta,
        },
    }, indent=2))
    return [txt, side]
