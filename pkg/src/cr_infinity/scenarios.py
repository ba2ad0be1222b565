"""Curvature profiles along a radial geodesic and scenario configuration.

A profile is described by the deviation Delta(r) = R_dr(r) - diag(-1, -1/4, ...)
of the Jacobi operator in the radially parallel frame {J d_r, E_1..E_2n}.
The coefficient functions used by the Jacobi system are

    u[i, k](r) = -Delta[i, k](r) * w_k(r) / w_i(r),   w_0 = e^r, w_j = e^{r/2},

which gives u[0,0] = -(sec(d_r, J d_r) + 1), u[0,k] = -e^{-r/2} Delta[0,k],
u[k,0] = -e^{r/2} Delta[k,0], u[j,j] = -(sec(d_r, E_j) + 1/4).
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Callable

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "ConfigWarning",
    "CurvatureProfile",
    "ModelProfile",
    "RandomProfile",
    "WarpedProfile",
    "WarpSpec",
    "PerturbedSinh",
    "model_profile",
    "random_profile",
    "warped_profile",
    "model_jacobi_diagonal",
    "model_sphere_shape",
    "validate_profile",
    "Scenario",
    "load_scenario",
    "parse_scenario",
]


class ConfigError(ValueError):
    """Invalid scenario or profile parameters."""


class ConfigWarning(UserWarning):
    """Scenario is runnable but outside the range covered by a theorem."""


def model_jacobi_diagonal(n: int) -> np.ndarray:
    return np.array([-1.0] + [-0.25] * (2 * n))


def _weights_log(n: int, r: np.ndarray) -> np.ndarray:
    """log w_i(r), shape (..., 2n+1)."""
    r = np.asarray(r, dtype=float)
    c = np.array([1.0] + [0.5] * (2 * n))
    return r[..., None] * c


class CurvatureProfile:
    """Base class: subclasses implement :meth:`deviation`.

    Attributes ``a, C0, b, C1`` are the declared decay constants; ``math.inf``
    for ``a``/``b`` marks the exact model.
    """

    n: int
    a: float
    C0: float
    b: float
    C1: float
    source_const: float = 0.0

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    @property
    def m_source(self) -> float:
        return min(self.a, self.b)

    def deviation(self, r) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def jacobi_operator(self, r) -> np.ndarray:
        """Matrix R[i, k] = R(d_r, F_i, d_r, F_k), F = (J d_r, E_1, ...)."""
        D = self.deviation(r)
        return D + np.diag(model_jacobi_diagonal(self.n))

    def u(self, r) -> np.ndarray:
        """Coefficient matrix u[..., i, k] at r (scalar or array)."""
        D = self.deviation(r)
        lw = _weights_log(self.n, r)
        return -D * np.exp(lw[..., None, :] - lw[..., :, None])

    def u_entry(self, i: int, k: int, r) -> float | np.ndarray:
        return self.u(r)[..., i, k]

    def source(self, r, j: int = 0) -> np.ndarray:
        """Source term h (j=0) or h^j (j>=1) for the scalar limit ODEs."""
        return np.zeros_like(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class ModelProfile(CurvatureProfile):
    n: int
    a: float = math.inf
    C0: float = 0.0
    b: float = math.inf
    C1: float = 0.0

    def deviation(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.zeros(r.shape + (self.dim, self.dim))


def model_profile(n: int) -> ModelProfile:
    if n < 1:
        raise ConfigError("n must be >= 1")
    return ModelProfile(n)


def _modulation(kappa: float, omega, phase, r) -> np.ndarray:
    return (1.0 + kappa * np.sin(omega * r + phase)) / (1.0 + kappa)


@dataclass(frozen=True, eq=False)
class RandomProfile(CurvatureProfile):
    """Delta[i,k](r) = A[i,k] e^{-a r} (1 + kappa sin(omega[i,k] r + phase[i,k])) / (1 + kappa).

    The bounded modulation never changes sign, so the deviation saturates its
    exponential envelope and decay rates can be read off cleanly. All phases
    are pi/2, so the deviation equals the amplitude matrix at r = 0. Sources are
    h^j(r) = s_j e^{(2 - m) r}, m = min(a, b), with |s_j| <= (1 - margin)(C0 + C1).
    """

    n: int
    a: float
    C0: float
    b: float
    C1: float
    seed: int
    amplitude: np.ndarray
    omega: np.ndarray
    phase: np.ndarray
    kappa: float
    source_amp: np.ndarray
    source_const: float = 0.0

    def deviation(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)[..., None, None]
        return self.amplitude * np.exp(-self.a * r) * _modulation(
            self.kappa, self.omega, self.phase, r
        )

    def source(self, r, j: int = 0) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        m = self.m_source
        return self.source_amp[j] * np.exp((2.0 - m) * r)


def random_profile(
    n: int,
    a: float,
    C0: float,
    b: float,
    C1: float,
    seed: int,
    margin: float = 0.1,
    kappa: float = 0.3,
) -> RandomProfile:
    """Seeded perturbation of the model with decay rate ``a``.

    The symmetric amplitude matrix has operator norm ``(1 - margin) * C0`` so
    the deviation norm stays below ``C0 e^{-a r}`` by the given margin.
    A negative margin deliberately breaks the envelope (used to exercise
    input validation).
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    if not (a > 0.5):
        raise ConfigError(f"decay rate a must exceed 1/2, got {a}")
    if not (b > 0):
        raise ConfigError(f"decay rate b must be positive, got {b}")
    if not (C0 > 0) or not (C1 > 0):
        raise ConfigError("constants C0 and C1 must be positive")
    m = 2 * n + 1
    rng = np.random.default_rng(seed)
    # A = D P D with P > 0 entrywise and D a sign matrix: any entrywise modulation
    # in (0, 1] then cannot raise the operator norm (Perron-Frobenius monotonicity)
    P = rng.uniform(0.3, 1.0, (m, m))
    P = np.triu(P) + np.triu(P, 1).T
    sgn = rng.choice([-1.0, 1.0], m)
    A = sgn[:, None] * P * sgn[None, :]
    A *= (1.0 - margin) * C0 / np.linalg.norm(A, 2)
    om = rng.uniform(0.5, 1.5, (m, m))
    om = np.triu(om) + np.triu(om, 1).T
    # all modulations peak together at r = 0, where the envelope margin is attained
    ph = np.full((m, m), 0.5 * np.pi)
    sc = C0 + C1
    s_amp = (1.0 - margin) * sc * rng.choice([-1.0, 1.0], m) * rng.uniform(0.5, 1.0, m)
    return RandomProfile(
        n=n,
        a=float(a),
        C0=float(C0),
        b=float(b),
        C1=float(C1),
        seed=int(seed),
        amplitude=A,
        omega=om,
        phase=ph,
        kappa=kappa,
        source_const=sc,
        source_amp=s_amp,
    )


@dataclass(frozen=True)
class PerturbedSinh:
    """r -> sinh(c (r + 1)) (1 + eps e^{-rate r}), with analytic second derivative."""

    c: float = 1.0
    eps: float = 0.0
    rate: float = 2.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.sinh(self.c * (r + 1)) * (1 + self.eps * np.exp(-self.rate * r))

    def second(self, r):
        r = np.asarray(r, dtype=float)
        s = np.sinh(self.c * (r + 1))
        ds = self.c * np.cosh(self.c * (r + 1))
        dds = self.c**2 * s
        p = 1 + self.eps * np.exp(-self.rate * r)
        dp = -self.rate * self.eps * np.exp(-self.rate * r)
        ddp = self.rate**2 * self.eps * np.exp(-self.rate * r)
        return dds * p + 2 * ds * dp + s * ddp


@dataclass(frozen=True)
class WarpSpec:
    """Warp functions along J d_r (A) and along the E_j (B)."""

    A: Callable = field(default_factory=lambda: PerturbedSinh(1.0))
    B: Callable = field(default_factory=lambda: PerturbedSinh(0.5))
    fd_step: float = 1e-4
    analytic: bool = False


def _second_derivative(f, r, h, analytic):
    if analytic and hasattr(f, "second"):
        return f.second(r)
    return (f(r + h) - 2.0 * f(r) + f(r - h)) / h**2


@dataclass(frozen=True)
class WarpedProfile(CurvatureProfile):
    """Doubly warped radial metric dr^2 + A^2 theta^2 + B^2 gamma."""

    n: int
    warp: WarpSpec
    a: float = math.inf
    C0: float = 0.0
    b: float = math.inf
    C1: float = 0.0

    def curvatures(self, r):
        r = np.asarray(r, dtype=float)
        w = self.warp
        KA = -_second_derivative(w.A, r, w.fd_step, w.analytic) / w.A(r)
        KB = -_second_derivative(w.B, r, w.fd_step, w.analytic) / w.B(r)
        return KA, KB

    def deviation(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        KA, KB = self.curvatures(r)
        diag = np.stack([KA + 1.0] + [KB + 0.25] * (2 * self.n), axis=-1)
        out = np.zeros(r.shape + (self.dim, self.dim))
        idx = np.arange(self.dim)
        out[..., idx, idx] = diag
        return out


def warped_profile(
    n: int, warp: WarpSpec, r_max: float = 30.0, a: float = math.inf, C0: float = 0.0
) -> WarpedProfile:
    if n < 1:
        raise ConfigError("n must be >= 1")
    rr = np.linspace(0.0, r_max, 301)
    for name, f in (("A", warp.A), ("B", warp.B)):
        if np.any(f(rr) <= 0):
            raise ConfigError(f"warp {name} must be positive on [0, {r_max}]")
    return WarpedProfile(n=n, warp=warp, a=a, C0=C0)


def model_sphere_shape(n: int, r0: float = 1.0) -> np.ndarray:
    """Shape operator of the model geodesic sphere of radius r0."""
    if r0 <= 0:
        raise ConfigError("model sphere radius must be positive")
    return np.diag([1.0 / math.tanh(r0)] + [0.5 / math.tanh(r0 / 2)] * (2 * n))


# relative slack for round-off when a profile saturates its envelope exactly
ROUND_TOL = 1e-12


def validate_profile(profile: CurvatureProfile, grid: np.ndarray) -> dict:
    """Check the declared decay envelopes of a profile on a grid.

    Returns a dict with per-check margins (positive means the bound holds).
    """
    D = profile.deviation(grid)
    sym = float(np.max(np.abs(D - np.swapaxes(D, -1, -2)))) if D.size else 0.0
    if profile.C0 == 0.0:
        env = np.zeros_like(grid)
    else:
        env = profile.C0 * np.exp(-profile.a * grid)
    dev_norm = np.linalg.norm(D, ord=2, axis=(-2, -1))
    if profile.C0 == 0.0:
        margin = -float(np.max(dev_norm))
    else:
        margin = float(np.min(1.0 - dev_norm / env))
    U = profile.u(grid)
    ok_entries = True
    if profile.C0 > 0:
        a = profile.a
        bound = np.empty_like(U)
        bound[...] = (profile.C0 * np.exp(-a * grid))[:, None, None]
        bound[:, 0, 1:] = (profile.C0 * np.exp(-(a + 0.5) * grid))[:, None]
        bound[:, 1:, 0] = (profile.C0 * np.exp(-(a - 0.5) * grid))[:, None]
        ok_entries = bool(np.all(np.abs(U) <= bound * (1 + ROUND_TOL)))
    else:
        ok_entries = bool(np.all(np.abs(U) <= 1e-6))
    return {
        "symmetry_defect": sym,
        "deviation_margin": margin,
        "u_entries_within_envelope": ok_entries,
        "ok": sym <= 1e-14 and ok_entries and (margin >= -ROUND_TOL or profile.C0 == 0 and margin >= -1e-6),
    }


# ---------------------------------------------------------------- scenarios

_SCHEMA: dict[str, dict[str, Any]] = {
    "scenario": {
        "kind": "model",
        "n": 1,
        "seed": 0,
        "points": 1,
        "extract": True,
        "coframe_check": True,
        "epsilon": 0.25,
    },
    "decay": {"a": None, "C0": None, "b": None, "C1": None, "margin": 0.1},
    "warp": {"A_eps": 0.0, "A_rate": 2.0, "B_eps": 0.0, "B_rate": 2.0, "fd_step": 1e-4},
    "integration": {"r_max": 30.0, "tol": 1e-10, "grid": 0.01},
    "initial": {"shape_operator": "model_sphere(1)", "basis": "standard"},
    "output": {"dir": "out", "series": None},
}

KINDS = ("model", "random", "warped")
SERIES = (
    "shape_norm",
    "trace_S",
    "volume",
    "coframe_eta",
    "coframe_eta_j",
    "eta_error",
    "eta_j_error",
    "metric_remainder",
    "nijenhuis",
    "scalar_f",
    "scalar_fj",
)


@dataclass
class Scenario:
    """Fully validated run specification."""

    kind: str
    n: int
    seed: int
    points: int
    extract: bool
    coframe_check: bool
    epsilon: float
    a: float
    C0: float
    b: float
    C1: float
    margin: float
    warp: dict
    r_max: float
    tol: float
    grid: float
    shape_operator: Any
    basis: Any
    out_dir: str
    series: list[str]
    warnings: list[str] = field(default_factory=list)

    def S0(self) -> np.ndarray:
        so = self.shape_operator
        if isinstance(so, str):
            return model_sphere_shape(self.n, _parse_sphere(so))
        return np.array(so, dtype=float)

    def basis_matrix(self) -> np.ndarray:
        """Columns are the boundary basis vectors in the frame (J nu, e_1..e_2n)."""
        if isinstance(self.basis, str):
            return np.eye(2 * self.n + 1)
        return np.array(self.basis, dtype=float).T

    def make_profile(self, point: int = 0) -> CurvatureProfile:
        if self.kind == "model":
            return model_profile(self.n)
        if self.kind == "random":
            return random_profile(
                self.n, self.a, self.C0, self.b, self.C1,
                seed=self.seed + point, margin=self.margin,
            )
        w = self.warp
        spec = WarpSpec(
            A=PerturbedSinh(1.0, w["A_eps"], w["A_rate"]),
            B=PerturbedSinh(0.5, w["B_eps"], w["B_rate"]),
            fd_step=w["fd_step"],
            analytic=True,
        )
        return warped_profile(self.n, spec, r_max=self.r_max + 1.0, a=self.a, C0=self.C0)

    def to_document(self) -> dict:
        """TOML-shaped document that parses back to this scenario."""
        decay: dict[str, Any] = {"margin": self.margin}
        if self.kind == "random":
            decay.update(a=self.a, C0=self.C0, b=self.b, C1=self.C1)
        elif self.kind == "warped" and math.isfinite(self.a):
            decay.update(a=self.a, C0=self.C0)
        return {
            "scenario": {"kind": self.kind, "n": self.n, "seed": self.seed,
                         "points": self.points, "extract": self.extract,
                         "coframe_check": self.coframe_check, "epsilon": self.epsilon},
            "decay": decay,
            "warp": dict(self.warp),
            "integration": {"r_max": self.r_max, "tol": self.tol, "grid": self.grid},
            "initial": {"shape_operator": self.shape_operator, "basis": self.basis},
            "output": {"dir": self.out_dir, "series": list(self.series)},
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("a", "b"):
            if math.isinf(d[k]):
                d[k] = "inf"
        return d


_SPHERE = re.compile(r"^\s*model_sphere\(\s*([0-9.eE+-]+)\s*\)\s*$")


def _parse_sphere(text: str) -> float:
    m = _SPHERE.match(text)
    if not m:
        raise ConfigError(
            f"[initial] shape_operator: expected 'model_sphere(r0)' or a matrix, got {text!r}"
        )
    r0 = float(m.group(1))
    if not r0 > 0:
        raise ConfigError(f"[initial] shape_operator: model sphere radius must be positive, got {r0}")
    return r0


def _number(section, key, value, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[{section}] {key}: expected a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"[{section}] {key}: must be positive, got {value!r}")
    return float(value)


def parse_scenario(doc: dict) -> Scenario:
    """Validate a parsed TOML document and apply defaults."""
    merged: dict[str, dict[str, Any]] = {}
    for section, defaults in _SCHEMA.items():
        given = doc.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = set(given) - set(defaults)
        if unknown:
            raise ConfigError(f"[{section}] unknown field(s): {', '.join(sorted(unknown))}")
        merged[section] = {**defaults, **given}
    extra = set(doc) - set(_SCHEMA)
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")

    sc = merged["scenario"]
    kind = sc["kind"]
    if kind not in KINDS:
        raise ConfigError(f"[scenario] kind: expected one of {KINDS}, got {kind!r}")
    n = sc["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ConfigError(f"[scenario] n: expected a positive integer, got {n!r}")
    for key in ("seed", "points"):
        if isinstance(sc[key], bool) or not isinstance(sc[key], int) or sc[key] < 0:
            raise ConfigError(f"[scenario] {key}: expected a non-negative integer")
    if sc["points"] < 1:
        raise ConfigError("[scenario] points: must be >= 1")
    eps = _number("scenario", "epsilon", sc["epsilon"], positive=True)
    if not eps < n + 0.5:
        raise ConfigError(f"[scenario] epsilon: must lie in (0, n + 1/2), got {eps}")

    dc = merged["decay"]
    warns: list[str] = []
    if kind == "random":
        for key in ("a", "C0", "b", "C1"):
            if dc[key] is None:
                raise ConfigError(f"[decay] {key}: required for kind = 'random'")
            _number("decay", key, dc[key], positive=True)
        a, C0, b, C1 = (float(dc[k]) for k in ("a", "C0", "b", "C1"))
    elif kind == "warped" and (dc["a"] is not None or dc["C0"] is not None):
        for key in ("a", "C0"):
            if dc[key] is None:
                raise ConfigError(f"[decay] {key}: a perturbed warp needs both a and C0")
            _number("decay", key, dc[key], positive=True)
        a, C0 = float(dc["a"]), float(dc["C0"])
        b, C1 = math.inf, 0.0
    else:
        for key in ("a", "C0", "b", "C1"):
            if dc[key] is not None:
                _number("decay", key, dc[key])
        a = b = math.inf
        C0 = C1 = 0.0
    margin = _number("decay", "margin", dc["margin"])
    if sc["extract"] and not a > 0.5:
        raise ConfigError(
            f"[decay] a = {a}: extracting the limiting coframe needs decay order a > 1/2"
        )
    if sc["coframe_check"] and not a > 1.0:
        msg = f"[decay] a = {a}: the coframe rank conclusion requires a > 1 (no theorem)"
        warns.append(msg)
        warnings.warn(msg, ConfigWarning, stacklevel=2)

    wp = merged["warp"]
    for key in wp:
        _number("warp", key, wp[key])

    it = merged["integration"]
    r_max = _number("integration", "r_max", it["r_max"], positive=True)
    tol = _number("integration", "tol", it["tol"], positive=True)
    grid = _number("integration", "grid", it["grid"], positive=True)
    if r_max / grid < 16:
        raise ConfigError("[integration] grid: spacing too coarse for r_max (need >= 16 steps)")

    ini = merged["initial"]
    so = ini["shape_operator"]
    m = 2 * n + 1
    if isinstance(so, str):
        _parse_sphere(so)
    else:
        S = np.array(so, dtype=float)
        if S.shape != (m, m):
            raise ConfigError(f"[initial] shape_operator: expected a {m}x{m} matrix")
        if np.max(np.abs(S - S.T)) > 1e-12:
            raise ConfigError("[initial] shape_operator: matrix must be symmetric")
        if np.min(np.linalg.eigvalsh(S)) < -1e-12:
            raise ConfigError("[initial] shape_operator: matrix must be positive semi-definite")
        so = S.tolist()
    basis = ini["basis"]
    if isinstance(basis, str):
        if basis != "standard":
            raise ConfigError(f"[initial] basis: expected 'standard' or a matrix, got {basis!r}")
    else:
        B = np.array(basis, dtype=float)
        if B.shape != (m, m):
            raise ConfigError(f"[initial] basis: expected {m} vectors of length {m}")
        if np.linalg.matrix_rank(B, tol=1e-10) < m:
            raise ConfigError("[initial] basis: vectors are linearly dependent")
        basis = B.tolist()

    out = merged["output"]
    series = out["series"]
    if series is None:
        series = list(SERIES)
    else:
        bad = [s for s in series if s not in SERIES]
        if bad:
            raise ConfigError(f"[output] series: unknown quantities {bad}; choose from {SERIES}")
    return Scenario(
        kind=kind, n=n, seed=sc["seed"], points=sc["points"], extract=bool(sc["extract"]),
        coframe_check=bool(sc["coframe_check"]), epsilon=eps, a=a, C0=C0, b=b, C1=C1,
        margin=margin, warp=dict(wp), r_max=r_max, tol=tol, grid=grid,
        shape_operator=so, basis=basis, out_dir=str(out["dir"]), series=list(series),
        warnings=warns,
    )


def load_scenario(path) -> Scenario:
    """Read and validate a scenario TOML file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"scenario file not found: {p}")
    try:
        doc = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return parse_scenario(doc)
