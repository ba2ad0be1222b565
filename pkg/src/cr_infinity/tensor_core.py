"""Exact linear algebra of the complex hyperbolic model.

Vectors live in R^(2n+2) with the orthonormal J-frame
(d_r, J d_r, E_1, ..., E_2n). J maps basis vector 2k to 2k+1 (0-based) and
2k+1 to -2k, so the first complex pair is (d_r, J d_r).

Sign convention: R(X, Y, Z, T) = g(R(X, Y)Z, T) with sec(X, Y) = R(X, Y, X, Y)
for orthonormal X, Y. Under this convention the model tensor below has
holomorphic sectional curvature -1 and totally real sectional curvature -1/4.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "JFrame",
    "complex_structure",
    "apply_J",
    "eval_R0",
    "R0_tensor",
    "eval_Phi",
    "verify_appendix_identities",
]


def complex_structure(dim: int) -> np.ndarray:
    """Matrix of J on R^dim for the standard pairing (e_{2k} -> e_{2k+1})."""
    if dim <= 0 or dim % 2:
        raise ValueError(f"ambient dimension must be positive and even, got {dim}")
    J = np.zeros((dim, dim))
    for k in range(0, dim, 2):
        J[k + 1, k] = 1.0
        J[k, k + 1] = -1.0
    return J


def apply_J(X: np.ndarray) -> np.ndarray:
    """Apply J to a vector (or to the last axis of an array of vectors)."""
    X = np.asarray(X, dtype=float)
    if X.shape[-1] % 2:
        raise ValueError(f"ambient dimension must be even, got {X.shape[-1]}")
    out = np.empty_like(X)
    out[..., 1::2] = X[..., 0::2]
    out[..., 0::2] = -X[..., 1::2]
    return out


@dataclass(frozen=True)
class JFrame:
    """Orthonormal J-frame {d_r, J d_r, E_1..E_2n} of R^(2n+2)."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def dim(self) -> int:
        return 2 * self.n + 2

    @property
    def labels(self) -> list[str]:
        return ["d_r", "Jd_r"] + [f"E{j}" for j in range(1, 2 * self.n + 1)]

    def basis(self, label: str) -> np.ndarray:
        e = np.zeros(self.dim)
        e[self.labels.index(label)] = 1.0
        return e

    @property
    def gram(self) -> np.ndarray:
        return np.eye(self.dim)

    @property
    def omega(self) -> np.ndarray:
        """Pairing constants omega_ij = g(E_i, J E_j) on the E-block."""
        J = complex_structure(self.dim)[2:, 2:]
        return J.copy()  # g(E_i, J E_j) = (J)_{ij}


def _check_same_dim(*vs: np.ndarray) -> int:
    dims = {v.shape[-1] for v in vs}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")
    d = dims.pop()
    if d % 2:
        raise ValueError(f"ambient dimension must be even, got {d}")
    return d


def eval_R0(X, Y, Z, T) -> float | np.ndarray:
    """Model curvature tensor of constant holomorphic sectional curvature -1.

    R0(X,Y,Z,T) = 1/4 [ g(X,T)g(Y,Z) - g(X,Z)g(Y,T) + g(X,JT)g(Y,JZ)
                        - g(X,JZ)g(Y,JT) + 2 g(X,JY)g(T,JZ) ]

    Broadcasts over leading axes.
    """
    X, Y, Z, T = (np.asarray(v, dtype=float) for v in (X, Y, Z, T))
    _check_same_dim(X, Y, Z, T)

    def g(a, b):
        return np.sum(a * b, axis=-1)

    JY, JZ, JT = apply_J(Y), apply_J(Z), apply_J(T)
    return 0.25 * (
        g(X, T) * g(Y, Z)
        - g(X, Z) * g(Y, T)
        + g(X, JT) * g(Y, JZ)
        - g(X, JZ) * g(Y, JT)
        + 2.0 * g(X, JY) * g(T, JZ)
    )


def R0_tensor(dim: int) -> np.ndarray:
    """Components R0[a, b, c, d] = R0(e_a, e_b, e_c, e_d)."""
    I = np.eye(dim)
    J = complex_structure(dim)  # column b is J e_b, so g(e_a, J e_b) = J[a, b]
    return 0.25 * (
        np.einsum("ad,bc->abcd", I, I)
        - np.einsum("ac,bd->abcd", I, I)
        + np.einsum("ad,bc->abcd", J, J)
        - np.einsum("ac,bd->abcd", J, J)
        + 2.0 * np.einsum("ab,dc->abcd", J, J)
    )


def eval_Phi(X, radial) -> np.ndarray:
    """Phi X = J X - g(X, d_r) J d_r + g(X, J d_r) d_r."""
    X = np.asarray(X, dtype=float)
    radial = np.asarray(radial, dtype=float)
    _check_same_dim(X, radial)
    if abs(np.linalg.norm(radial) - 1.0) > 1e-12:
        raise ValueError("radial vector must be unit")
    Jr = apply_J(radial)
    return (
        apply_J(X)
        - np.tensordot(X, radial, axes=([-1], [0]))[..., None] * Jr
        + np.tensordot(X, Jr, axes=([-1], [0]))[..., None] * radial
    )


IDENTITY_NAMES = (
    "R0(dr,Jdr,Yv,SYu) = -1/2 g(SYu,JYv)",
    "R0(dr,Yv,SYu,Jdr) = 1/4 g(SYu,JYv)",
    "R0(dr,W,dr,Jdr) = -g(W,Jdr)",
    "R0(dr,Yv,dr,X) = -1/4 g(Yv,X), g(X,Jdr)=0",
    "R0(dr,Ej,Yv,SYu) = 1/4 g(SYu,Jdr)g(Yv,JEj) - 1/4 g(SYu,JEj)g(Yv,Jdr)",
    "R0(dr,Yv,SYu,Ej) = 1/4 g(SYu,Jdr)g(Yv,JEj) + 1/2 g(SYu,JEj)g(Yv,Jdr)",
    "R0(dr,W,dr,Ej) = -1/4 g(W,Ej)",
    "R0(dr,Yv,dr,X) = -1/4 g(Yv,X) - 3/4 g(SYu,JEj)g(Yv,Jdr), g(X,Jdr)=g(SYu,JEj)",
)


def verify_appendix_identities(
    n: int, trials: int, seed: int, scale: float = 1.0, zero: bool = False
) -> dict:
    """Check the eight curvature identities used for the contact and CR limits.

    Sampled vectors Y_u, Y_v, S Y_u are orthogonal to d_r. The placeholders for
    covariant derivatives satisfy the constraints the derivations rely on:
    the derivative of J d_r has no J d_r component, and the derivative of E_j
    has J d_r component g(S Y_u, J E_j).

    Returns
    -------
    dict
        ``residuals`` maps identity label to the maximum absolute residual,
        ``max_residual`` is the overall maximum; ``seed`` and ``trials`` echo
        the inputs.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    frame = JFrame(n)
    d = frame.dim
    rng = np.random.default_rng(seed)
    dr = frame.basis("d_r")
    Jdr = frame.basis("Jd_r")
    worst = np.zeros(len(IDENTITY_NAMES))

    def g(a, b):
        return float(a @ b)

    def sample_perp():
        v = scale * rng.standard_normal(d)
        v[0] = 0.0
        return v * (not zero)

    for _ in range(trials):
        Yu, Yv, SYu = sample_perp(), sample_perp(), sample_perp()
        W = scale * rng.standard_normal(d) * (not zero)
        X = scale * rng.standard_normal(d) * (not zero)
        X = X - g(X, Jdr) * Jdr
        j = int(rng.integers(2, d))
        Ej = np.zeros(d)
        Ej[j] = 1.0
        JEj, JYv = apply_J(Ej), apply_J(Yv)
        X2 = scale * rng.standard_normal(d) * (not zero)
        X2 = X2 - g(X2, Jdr) * Jdr + g(SYu, JEj) * Jdr
        pairs = (
            (eval_R0(dr, Jdr, Yv, SYu), -0.5 * g(SYu, JYv)),
            (eval_R0(dr, Yv, SYu, Jdr), 0.25 * g(SYu, JYv)),
            (eval_R0(dr, W, dr, Jdr), -g(W, Jdr)),
            (eval_R0(dr, Yv, dr, X), -0.25 * g(Yv, X)),
            (
                eval_R0(dr, Ej, Yv, SYu),
                0.25 * g(SYu, Jdr) * g(Yv, JEj) - 0.25 * g(SYu, JEj) * g(Yv, Jdr),
            ),
            (
                eval_R0(dr, Yv, SYu, Ej),
                0.25 * g(SYu, Jdr) * g(Yv, JEj) + 0.5 * g(SYu, JEj) * g(Yv, Jdr),
            ),
            (eval_R0(dr, W, dr, Ej), -0.25 * g(W, Ej)),
            (
                eval_R0(dr, Yv, dr, X2),
                -0.25 * g(Yv, X2) - 0.75 * g(SYu, JEj) * g(Yv, Jdr),
            ),
        )
        res = np.array([abs(float(lhs) - rhs) for lhs, rhs in pairs])
        worst = np.maximum(worst, res)
    return {
        "n": n,
        "trials": trials,
        "seed": seed,
        "scale": scale,
        "residuals": dict(zip(IDENTITY_NAMES, worst.tolist())),
        "max_residual": float(worst.max()),
    }
