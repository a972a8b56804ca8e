"""Hermite function basis, least-squares expansion and reconstruction of beats."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


def hermite_polynomial(n: int, x):
    """Physicists' Hermite polynomial H_n(x) by the plain three-term recurrence.

    Intended for low orders only; values grow like 2^n n!.
    """
    if n < 0:
        raise ValueError("order must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = 2.0 * x
    for k in range(2, n + 1):
        h_prev, h = h, 2.0 * x * h - 2.0 * (k - 1) * h_prev
    return h if h.ndim else float(h)


def hermite_function_direct(n: int, t, delta: float):
    """phi_n(t, delta) evaluated literally as H_n(t/delta) times the Gaussian and 1/sqrt(delta 2^n n! sqrt(pi)).

    Overflows for large ``n``; used to cross-check :func:`build_basis`.
    """
    t = np.asarray(t, dtype=np.float64)
    norm = 1.0 / math.sqrt(delta * 2.0 ** n * math.factorial(n) * math.sqrt(math.pi))
    return norm * np.exp(-t ** 2 / (2.0 * delta ** 2)) * hermite_polynomial(n, t / delta)


def hermite_functions(L: int, t, delta: float) -> np.ndarray:
    """Columns phi_0..phi_{L-1} on grid ``t`` via the normalized recurrence."""
    t = np.asarray(t, dtype=np.float64)
    x = t / delta
    phi = np.empty((t.size, L), dtype=np.float64)
    phi[:, 0] = math.pi ** -0.25 / math.sqrt(delta) * np.exp(-0.5 * x ** 2)
    if L > 1:
        phi[:, 1] = math.sqrt(2.0) * x * phi[:, 0]
    for n in range(2, L):
        phi[:, n] = math.sqrt(2.0 / n) * x * phi[:, n - 1] - math.sqrt((n - 1) / n) * phi[:, n - 2]
    return phi


@dataclass(frozen=True)
class HermiteBasis:
    L: int
    delta: float
    M: int
    phi: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1, dtype=np.float64)

    @cached_property
    def _qr(self):
        q, r = np.linalg.qr(self.phi, mode="reduced")
        diag = np.abs(np.diag(r))
        if diag.min() <= diag.max() * self.phi.shape[0] * np.finfo(float).eps:
            raise np.linalg.LinAlgError("Hermite basis matrix is rank deficient")
        return q, r

    def prefix(self, L: int) -> "HermiteBasis":
        if not 1 <= L <= self.L:
            raise ValueError("prefix order out of range")
        return HermiteBasis(L, self.delta, self.M, self.phi[:, :L])


def build_basis(L: int = 60, delta: float = 10.0, M: int = 100) -> HermiteBasis:
    if L < 1 or delta <= 0 or M < 1:
        raise ValueError("L, delta and M must be positive")
    t = np.arange(-M, M + 1, dtype=np.float64)
    phi = hermite_functions(L, t, delta)
    phi.setflags(write=False)
    return HermiteBasis(int(L), float(delta), int(M), phi)


@dataclass(frozen=True)
class HermiteCoeffs:
    c: np.ndarray
    residual_nrmse: float


def fit_matrix(beats: np.ndarray, basis: HermiteBasis) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares coefficients for a stack of beats (rows) via the basis QR factors.

    Returns ``(coeffs, residual_nrmse)``.
    """
    a = np.atleast_2d(np.asarray(beats, dtype=np.float64))
    if a.shape[1] != basis.phi.shape[0]:
        raise ValueError(f"beat length {a.shape[1]} != 2M+1 = {basis.phi.shape[0]}")
    q, r = basis._qr
    c = np.linalg.solve(r, q.T @ a.T).T
    resid = a - c @ basis.phi.T
    norms = np.linalg.norm(a, axis=1)
    rn = np.linalg.norm(resid, axis=1)
    nrmse = np.divide(rn, norms, out=np.zeros_like(rn), where=norms > 0)
    return c, nrmse


def fit_coefficients(beat, basis: HermiteBasis) -> HermiteCoeffs:
    c, nrmse = fit_matrix(np.asarray(beat)[None, :], basis)
    return HermiteCoeffs(c[0], float(nrmse[0]))


def reconstruct(coeffs, basis: HermiteBasis) -> np.ndarray:
    c = coeffs.c if isinstance(coeffs, HermiteCoeffs) else np.asarray(coeffs, dtype=np.float64)
    if c.shape != (basis.L,):
        raise ValueError(f"expected {basis.L} coefficients, got {c.shape}")
    return basis.phi @ c
