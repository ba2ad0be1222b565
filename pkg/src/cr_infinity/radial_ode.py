"""Radial ODE systems along one geodesic.

* Riccati equation S' = -S^2 - R_dr for the shape operator.
* Jacobi system for the component functions eta^i of a normal Jacobi field,
  solved directly (adaptive Dormand-Prince 5(4)) and through its integral
  (Duhamel) form by Picard iteration.
* Volume density log(lambda) = int trace S.
* Scalar limit ODEs f'' - f = h and f'' - f/4 = h.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp

from .scenarios import CurvatureProfile

__all__ = [
    "NumericalFailure",
    "RiccatiBlowUp",
    "ShapePath",
    "JacobiPath",
    "VolumePath",
    "ScalarLimitPath",
    "make_grid",
    "integrate_riccati",
    "integrate_jacobi",
    "integrate_jacobi_duhamel",
    "jacobi_initial_data",
    "integrate_volume",
    "integrate_scalar_limits",
    "cumulative_tail",
    "BLOWUP_NORM",
    "JACOBI_ATOL",
]

BLOWUP_NORM = 1e6
# Absolute tolerance for the Jacobi system. It is tiny on purpose: the
# derivatives eta' decay like e^{-2r} and their tails are integrated to get
# eta_r - eta with relative accuracy far below double-precision round-off of eta.
JACOBI_ATOL = 1e-60


class NumericalFailure(RuntimeError):
    """Integrator failure (tolerance not met, NaN)."""


class EnvelopeViolation(ValueError):
    """A scenario input exceeds its declared decay envelope."""


class RiccatiBlowUp(ValueError):
    """Shape operator left the admissible range: focal point or invalid input."""

    def __init__(self, r: float):
        super().__init__(f"shape operator norm exceeded {BLOWUP_NORM:g} at r = {r:.6g}")
        self.r = r


def make_grid(r_max: float, spacing: float = 0.01) -> np.ndarray:
    """Uniform reporting grid on [0, r_max] with step close to ``spacing``."""
    steps = max(int(round(r_max / spacing)), 16)
    return np.linspace(0.0, r_max, steps + 1)


@dataclass(frozen=True, eq=False)
class ShapePath:
    grid: np.ndarray
    S: np.ndarray  # (N, m, m)
    symmetry_drift: float

    @property
    def trace(self) -> np.ndarray:
        return np.trace(self.S, axis1=1, axis2=2)

    @property
    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.S, ord=2, axis=(1, 2))

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.S)


@dataclass(frozen=True, eq=False)
class JacobiPath:
    grid: np.ndarray
    eta: np.ndarray  # (N, m)
    deta: np.ndarray  # (N, m)
    v: np.ndarray
    S0: np.ndarray
    method: str = "direct"

    @property
    def n(self) -> int:
        return (self.eta.shape[1] - 1) // 2

    def weights(self) -> np.ndarray:
        """Frame weights e^r, e^{r/2}, ... on the grid, shape (N, m)."""
        c = np.array([1.0] + [0.5] * (2 * self.n))
        return np.exp(self.grid[:, None] * c)

    def Y(self) -> np.ndarray:
        """Components of Y_v in (J d_r, E_1..E_2n)."""
        return self.weights() * self.eta

    def SY(self) -> np.ndarray:
        """Components of S Y_v = Y_v' in (J d_r, E_1..E_2n)."""
        c = np.array([1.0] + [0.5] * (2 * self.n))
        return self.weights() * (self.deta + c * self.eta)


@dataclass(frozen=True, eq=False)
class VolumePath:
    grid: np.ndarray
    log_lam: np.ndarray

    @property
    def lam(self) -> np.ndarray:
        return np.exp(self.log_lam)


@dataclass(frozen=True, eq=False)
class ScalarLimitPath:
    kind: str
    grid: np.ndarray
    f: np.ndarray
    h: np.ndarray
    alpha: float
    tail_bound: float
    residual: np.ndarray  # f - alpha e^{c r}, evaluated in split form
    residual_uncertainty: np.ndarray
    truncation_bound: float = 0.0  # envelope tail beyond r_max (before extension)


def _check_solution(sol, what: str):
    if not sol.success:
        raise NumericalFailure(f"{what}: {sol.message}")
    if not np.all(np.isfinite(sol.y)):
        raise NumericalFailure(f"{what}: non-finite values")


# ---------------------------------------------------------------- Riccati


def integrate_riccati(
    S0, profile: CurvatureProfile, r_max: float, tol: float = 1e-10, grid=None
) -> ShapePath:
    """Integrate S' = -S^2 - R_dr(r) from S(0) = S0 and sample on ``grid``."""
    S0 = np.asarray(S0, dtype=float)
    m = profile.dim
    if S0.shape != (m, m):
        raise ValueError(f"S0 must be {m}x{m}")
    if np.max(np.abs(S0 - S0.T)) > 1e-12:
        raise ValueError("S0 must be symmetric")
    if np.min(np.linalg.eigvalsh(S0)) < -1e-12:
        raise ValueError("S0 must be positive semi-definite")
    if not (r_max > 0 and tol > 0):
        raise ValueError("r_max and tol must be positive")
    grid = make_grid(r_max) if grid is None else np.asarray(grid, dtype=float)
    drift = [0.0]

    def rhs(r, y):
        S = y.reshape(m, m)
        drift[0] = max(drift[0], float(np.max(np.abs(S - S.T))))
        S = 0.5 * (S + S.T)
        return (-(S @ S) - profile.jacobi_operator(r)).ravel()

    def blowup(r, y):
        return BLOWUP_NORM - np.max(np.abs(y))

    blowup.terminal = True
    sol = solve_ivp(
        rhs, (0.0, grid[-1]), S0.ravel(), method="RK45", rtol=tol, atol=tol * 1e-3,
        dense_output=True, events=blowup, first_step=min(1e-3, r_max / 10),
    )
    if sol.status == 1:
        raise RiccatiBlowUp(float(sol.t_events[0][0]))
    _check_solution(sol, "Riccati integration")
    S = sol.sol(grid).T.reshape(-1, m, m)
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    return ShapePath(grid=grid, S=S, symmetry_drift=drift[0])


# ---------------------------------------------------------------- Jacobi


def jacobi_initial_data(v, S0) -> tuple[np.ndarray, np.ndarray]:
    """Initial values (eta(0), eta'(0)) for Y_v(0) = v, Y_v'(0) = S0 v."""
    v = np.asarray(v, dtype=float)
    S0 = np.asarray(S0, dtype=float)
    c = np.array([1.0] + [0.5] * (v.size - 1))
    return v.copy(), S0 @ v - c * v


def _damping(m: int) -> np.ndarray:
    return np.array([2.0] + [1.0] * (m - 1))


def integrate_jacobi(
    v, S0, profile: CurvatureProfile, r_max: float, tol: float = 1e-10, grid=None
) -> JacobiPath:
    """Solve eta'' + c eta' = u(r) eta, c = (2, 1, ..., 1), by adaptive RK45."""
    v = np.asarray(v, dtype=float)
    m = profile.dim
    if v.shape != (m,):
        raise ValueError(f"v must have {m} components")
    grid = make_grid(r_max) if grid is None else np.asarray(grid, dtype=float)
    e0, de0 = jacobi_initial_data(v, S0)
    c = _damping(m)

    def rhs(r, y):
        eta, deta = y[:m], y[m:]
        return np.concatenate([deta, -c * deta + profile.u(r) @ eta])

    sol = solve_ivp(
        rhs, (0.0, grid[-1]), np.concatenate([e0, de0]), method="RK45",
        rtol=tol, atol=JACOBI_ATOL, dense_output=True, first_step=min(1e-3, r_max / 10),
    )
    _check_solution(sol, "Jacobi integration")
    y = sol.sol(grid).T
    return JacobiPath(grid=grid, eta=y[:, :m], deta=y[:, m:], v=v, S0=np.asarray(S0, float))


def _conv_exp(g: np.ndarray, grid: np.ndarray, rate: float) -> np.ndarray:
    """int_0^r e^{-rate (r - s)} g(s) ds on a uniform grid (columns of g)."""
    w = np.exp(rate * grid)[:, None]
    return cumulative_simpson(w * g, x=grid, axis=0, initial=0.0) / w


def integrate_jacobi_duhamel(
    v, S0, profile: CurvatureProfile, r_max: float, quad_tol: float = 1e-12,
    grid=None, max_sweeps: int = 500,
) -> JacobiPath:
    """Picard iteration of the integral form of the Jacobi system.

    eta(r)   = eta(0) + eta'(0) (1 - e^{-2r})/2 + int_0^r (1 - e^{-2(r-s)})/2 (u eta)_0 ds
    eta^j(r) = eta^j(0) + eta^j'(0) (1 - e^{-r}) + int_0^r (1 - e^{-(r-s)}) (u eta)_j ds
    """
    v = np.asarray(v, dtype=float)
    m = profile.dim
    grid = make_grid(r_max) if grid is None else np.asarray(grid, dtype=float)
    e0, de0 = jacobi_initial_data(v, S0)
    c = _damping(m)
    U = profile.u(grid)
    decay = np.exp(-grid[:, None] * c)
    free = e0 + de0 * (1.0 - decay) / c
    eta = free.copy()
    deta = de0 * decay
    for _ in range(max_sweeps):
        g = np.einsum("nik,nk->ni", U, eta)
        G = cumulative_simpson(g, x=grid, axis=0, initial=0.0)
        K = np.empty_like(g)
        K[:, :1] = _conv_exp(g[:, :1], grid, 2.0)
        K[:, 1:] = _conv_exp(g[:, 1:], grid, 1.0)
        new = free + (G - K) / c
        deta = de0 * decay + K
        diff = float(np.max(np.abs(new - eta)))
        eta = new
        if diff < quad_tol:
            break
    else:
        raise NumericalFailure(
            f"Picard iteration did not converge in {max_sweeps} sweeps (last change {diff:.3g})"
        )
    return JacobiPath(
        grid=grid, eta=eta, deta=deta, v=v, S0=np.asarray(S0, float), method="duhamel"
    )


# ---------------------------------------------------------------- volume


def integrate_volume(shape: ShapePath) -> VolumePath:
    """log lambda(r) = int_0^r trace S."""
    log_lam = cumulative_simpson(shape.trace, x=shape.grid, initial=0.0)
    return VolumePath(grid=shape.grid, log_lam=log_lam)


# ---------------------------------------------------------------- scalar limits


def cumulative_tail(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """int_r^{x[-1]} y ds for every grid r (Simpson, accumulated from the end)."""
    rev = cumulative_simpson(y[::-1], x=-x[::-1], axis=0, initial=0.0)
    return rev[::-1]


def integrate_scalar_limits(
    kind: str,
    f0: float,
    f0p: float,
    source,
    r_max: float,
    tol: float = 1e-10,
    grid=None,
    envelope: tuple[float, float] | None = None,
) -> ScalarLimitPath:
    """Solve f'' - c^2 f = h (c = 1 for ``"f"``, 1/2 for ``"fj"``) and its limit.

    The limit coefficient is alpha = lim e^{-c r} f(r):

        f : alpha   = (f(0) + f'(0) + int_0^inf e^{-s} h) / 2
        fj: alpha^j = f(0)/2 + f'(0) + int_0^inf e^{-s/2} h

    ``envelope = (K, m)`` declares |h(r)| <= K e^{(2-m) r}. The improper
    integral is evaluated on the grid extended past r_max (the source is a
    known callable) until the envelope bound on the remainder, reported as
    ``tail_bound``, is below round-off; ``truncation_bound`` is the envelope
    bound on the part beyond r_max. The residual
    f - alpha e^{c r} is evaluated in the split variation-of-constants form,
    free of the cancellation between two exponentially large numbers.
    """
    if kind not in ("f", "fj"):
        raise ValueError("kind must be 'f' or 'fj'")
    c = 1.0 if kind == "f" else 0.5
    grid = make_grid(r_max) if grid is None else np.asarray(grid, dtype=float)
    h = np.asarray(source(grid), dtype=float)
    if envelope is None:
        K, m = 0.0, math.inf
    else:
        K, m = envelope
    env = K * np.exp((2.0 - m) * grid) if K > 0 else np.zeros_like(grid)
    if np.any(np.abs(h) > env * (1 + 1e-12) + 1e-300):
        raise EnvelopeViolation("source term violates its declared envelope")
    if K > 0 and not (m + c > 2.0):
        raise ValueError(
            f"source envelope e^((2-m)r) with m = {m} is too slow for the {kind} limit (need m > {2 - c})"
        )

    def rhs(r, y):
        return [y[1], c * c * y[0] + float(source(r))]

    sol = solve_ivp(rhs, (0.0, grid[-1]), [f0, f0p], method="RK45", rtol=tol,
                    atol=tol * 1e-3, dense_output=True)
    _check_solution(sol, "scalar limit ODE")
    f = sol.sol(grid)[0]

    em, ep = np.exp(-c * grid), np.exp(c * grid)
    # Extend the source tail past r_max until the envelope mass left out is
    # below round-off, so the residual series is not biased near r_max.
    step = grid[1] - grid[0]
    R = grid[-1]
    if K > 0:
        L = min(39.0 / (m + c - 2.0), 4000.0)
        ext = R + step * np.arange(1, int(np.ceil(L / step)) + 1)
        rr = np.concatenate([grid, ext])
        hh = np.concatenate([h, np.asarray(source(ext), dtype=float)])
        tail_bound = K * math.exp((2.0 - m - c) * rr[-1]) / (m + c - 2.0)
        truncation = K * math.exp((2.0 - m - c) * R) / (m + c - 2.0)
    else:
        rr, hh = grid, h
        tail_bound = truncation = 0.0
    tail_in = cumulative_tail(np.exp(-c * rr) * hh, rr)[: grid.size]  # int_r^inf e^{-cs} h
    head = cumulative_simpson(ep * h, x=grid, initial=0.0)  # int_0^r e^{cs} h
    if kind == "f":
        alpha = 0.5 * (f0 + f0p + tail_in[0])
        residual = -0.5 * ep * tail_in + em * (0.5 * (f0 - f0p) - 0.5 * head)
        unc = 0.5 * ep * tail_bound
    else:
        alpha = 0.5 * f0 + f0p + tail_in[0]
        residual = -ep * tail_in + em * (0.5 * f0 - f0p - head)
        unc = ep * tail_bound
    return ScalarLimitPath(
        kind=kind, grid=grid, f=f, h=h, alpha=float(alpha), tail_bound=float(tail_bound),
        residual=residual, residual_uncertainty=unc, truncation_bound=float(truncation),
    )
