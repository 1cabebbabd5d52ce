"""Lanczos solver for shifted Hermitian systems ``(A - z) u = b``.

One Krylov basis built from ``b`` serves every shift ``z``: the Galerkin
solution is ``u(z) = |b| V (T - z)^{-1} e_1`` with ``T`` the Lanczos
tridiagonal, and its residual norm is ``|b| beta_k |e_k^T (T - z)^{-1} e_1|``.
The basis is fully reorthogonalized (two Gram-Schmidt passes) so the residual
estimate stays honest and results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded


class ConvergenceError(RuntimeError):
    """The Krylov iteration did not meet its residual target."""

    def __init__(self, message: str, best_residual: float, iterations: int):
        super().__init__(message)
        self.best_residual = best_residual
        self.iterations = iterations


@dataclass
class LanczosBasis:
    vectors: np.ndarray  # (k, n) orthonormal rows
    alpha: np.ndarray  # (k,)
    beta: np.ndarray  # (k,) beta[j] couples v_j and v_{j+1}; beta[k-1] is the residual coupling
    norm_b: float
    exhausted: bool  # invariant subspace reached

    @property
    def size(self) -> int:
        return self.alpha.shape[0]

    def coefficients(self, z: complex) -> np.ndarray:
        """``|b| (T - z)^{-1} e_1``."""
        k = self.size
        ab = np.zeros((3, k), dtype=complex)
        ab[0, 1:] = self.beta[: k - 1]
        ab[1, :] = self.alpha - z
        ab[2, : k - 1] = self.beta[: k - 1]
        rhs = np.zeros(k, dtype=complex)
        rhs[0] = self.norm_b
        return solve_banded((1, 1), ab, rhs)

    def residual_estimate(self, z: complex) -> float:
        if self.exhausted:
            return 0.0
        y = self.coefficients(z)
        return float(self.beta[self.size - 1] * abs(y[-1]))

    def solution(self, z: complex) -> np.ndarray:
        return self.coefficients(z) @ self.vectors

    def quadratic_form(self, z: complex) -> complex:
        """``<b, (A - z)^{-1} b>`` in the Euclidean inner product."""
        return complex(self.norm_b * self.coefficients(z)[0])

    def ritz(self) -> tuple[np.ndarray, np.ndarray]:
        """Ritz values and the squared first components of the Ritz vectors."""
        from scipy.linalg import eigh_tridiagonal

        theta, s = eigh_tridiagonal(self.alpha, self.beta[: self.size - 1])
        return theta, s[0, :] ** 2


def lanczos(
    matvec: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    shifts: Sequence[complex],
    tol: float = 1e-10,
    max_iterations: int | None = None,
    check_every: int = 8,
) -> LanczosBasis:
    """Grow a Lanczos basis until every shift meets ``|r| <= tol |b|``.

    Raises ``ConvergenceError`` carrying the worst residual if
    ``max_iterations`` is reached first.
    """
    b = np.asarray(b, dtype=complex).reshape(-1)
    n = b.size
    max_iterations = n if max_iterations is None else min(max_iterations, n)
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return LanczosBasis(np.zeros((1, n), dtype=complex), np.zeros(1), np.zeros(1), 0.0, True)
    shifts = list(shifts)

    cap = min(max_iterations, 64)
    V = np.zeros((cap, n), dtype=complex)
    alpha = np.zeros(cap)
    beta = np.zeros(cap)
    V[0] = b / norm_b
    scale = 0.0
    k = 0
    while True:
        w = matvec(V[k])
        a = float(np.vdot(V[k], w).real)
        w = w - a * V[k]
        if k > 0:
            w = w - beta[k - 1] * V[k - 1]
        for _ in range(2):
            w = w - (V[: k + 1].conj() @ w) @ V[: k + 1]
        bk = float(np.linalg.norm(w))
        alpha[k] = a
        beta[k] = bk
        scale = max(scale, abs(a), bk)
        k += 1
        exhausted = bk <= 1e-14 * max(scale, 1.0) or k >= n
        basis = LanczosBasis(V[:k], alpha[:k].copy(), beta[:k].copy(), norm_b, exhausted)
        if exhausted:
            return basis
        if k % check_every == 0 or k >= max_iterations:
            worst = max(basis.residual_estimate(z) for z in shifts) / norm_b
            if worst <= tol:
                return basis
            if k >= max_iterations:
                raise ConvergenceError(
                    f"Lanczos stopped at {k} iterations with relative residual {worst:.3e} > {tol:.1e}",
                    worst,
                    k,
                )
        if k >= cap:
            cap = min(2 * cap, max_iterations + 1, n)
            V = np.concatenate([V, np.zeros((cap - V.shape[0], n), dtype=complex)])
            alpha = np.concatenate([alpha, np.zeros(cap - alpha.shape[0])])
            beta = np.concatenate([beta, np.zeros(cap - beta.shape[0])])
        V[k] = w / bk
