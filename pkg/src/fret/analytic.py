"""Exact finite-epsilon quantities by matrix-geometric formulas.

For a kernel with per-transition Laplace transforms, the matrices

    Phi_fl(s)[i, j] = p_{ij,fl} * E[e^{-s kappa} | i -> j, flag = fl]

turn trajectory sums into matrix products: summing the geometric series
over flagless prefixes gives the transform of the first-rare-event time
exactly, substochastic powers give the survival function of the step
count, and powers of Phi_0(s) give the joint survival/transform.  These
are no-Monte-Carlo oracles for the statistical verifiers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .chain import StochasticMatrix
from .smp import MarkovRenewalKernel, _as_probs


class SingularSystem(Exception):
    """The geometric series does not converge (spectral radius >= 1)."""


@dataclass(frozen=True, eq=False)
class FlagTransformMatrix:
    """Phi_fl(s): per-transition probability times sojourn transform."""

    s: float
    flag: int
    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)


def flag_transform(kernel: MarkovRenewalKernel, s: float,
                   flag: int) -> FlagTransformMatrix:
    if s < 0:
        raise ValueError("s must be nonnegative")
    if flag not in (0, 1):
        raise ValueError("flag must be 0 or 1")
    lap = kernel.laplace_table(s)[:, :, flag]
    return FlagTransformMatrix(
        s=s, flag=flag, entries=kernel.joint_probs[:, :, flag] * lap
    )


def spectral_radius(matrix: np.ndarray, iterations: int = 50,
                    tol: float = 1e-10) -> float:
    """Power-iteration estimate of the spectral radius of a nonnegative matrix."""
    m = matrix.shape[0]
    v = np.full(m, 1.0 / m)
    rho = 0.0
    for _ in range(iterations):
        w = matrix @ v
        nxt = float(w.max())
        if nxt == 0.0:
            return 0.0
        w /= nxt
        if abs(nxt - rho) < tol:
            return nxt
        rho, v = nxt, w
    return rho


def _matrix_power_apply(matrix: np.ndarray, n: int) -> np.ndarray:
    """matrix ** n by repeated squaring (n >= 0)."""
    m = matrix.shape[0]
    result = np.eye(m)
    base = matrix.copy()
    k = int(n)
    while k:
        if k & 1:
            result = result @ base
        k >>= 1
        if k:
            base = base @ base
    return result


def exact_laplace_xi(kernel: MarkovRenewalKernel, q, s: float) -> float:
    """E e^{-s xi} = q (I - Phi_0(s))^{-1} Phi_1(s) 1, exactly.

    Requires s > 0 (or a reachable rare event) so the flagless transform
    has spectral radius below one; checked by power iteration before the
    solve, which uses an LU factorisation rather than an explicit inverse.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    probs = _as_probs(q, kernel.m)
    phi0 = flag_transform(kernel, s, 0).entries
    phi1 = flag_transform(kernel, s, 1).entries
    rho = spectral_radius(phi0)
    if rho >= 1.0 - 1e-12:
        raise SingularSystem(
            f"flagless transform has spectral radius {rho:.6f} >= 1"
        )
    m = kernel.m
    rhs = phi1 @ np.ones(m)
    try:
        x = linalg.solve(np.eye(m) - phi0, rhs)
    except linalg.LinAlgError as exc:  # pragma: no cover
        raise SingularSystem(
            f"I - Phi_0(s) numerically singular (spectral radius {rho:.6f})"
        ) from exc
    return float(probs @ x)


def survival_nu_exact(kernel: MarkovRenewalKernel, q, n: int) -> float:
    """P{nu > n} = q M^n 1 with M the substochastic flagless matrix."""
    if n < 0:
        raise ValueError("n must be >= 0")
    probs = _as_probs(q, kernel.m)
    M = kernel.survival_matrix()
    return float(probs @ _matrix_power_apply(M, n) @ np.ones(kernel.m))


def joint_survival_transform(kernel: MarkovRenewalKernel, q, s: float,
                             n: int) -> float:
    """E I(nu > n) e^{-s (kappa_1 + .. + kappa_n)} = q Phi_0(s)^n 1.

    Defined for s >= 0; at s = 0 it degenerates to the survival function
    of nu.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if s < 0:
        raise ValueError("s must be nonnegative")
    probs = _as_probs(q, kernel.m)
    phi0 = flag_transform(kernel, s, 0).entries
    return float(probs @ _matrix_power_apply(phi0, n) @ np.ones(kernel.m))


def exact_laplace_kappa(kernel: MarkovRenewalKernel, q, s: float,
                        n: int) -> float:
    """E e^{-s (kappa_1 + .. + kappa_n)} = q (Phi_0(s) + Phi_1(s))^n 1."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if s < 0:
        raise ValueError("s must be nonnegative")
    probs = _as_probs(q, kernel.m)
    phi = flag_transform(kernel, s, 0).entries + \
        flag_transform(kernel, s, 1).entries
    return float(probs @ _matrix_power_apply(phi, n) @ np.ones(kernel.m))


def tilted_survival_chain(kernel: MarkovRenewalKernel) -> StochasticMatrix:
    """Normalised flagless chain p~_{ij} = p_{ij,0} / (1 - p_i).

    The chain conditioned on the rare event not occurring at the next
    step; its entries differ from the embedded chain's by at most
    2 p_i / (1 - p_i) per row.
    """
    M = kernel.survival_matrix()
    stay = M.sum(axis=1)
    if np.any(stay <= 0):
        raise ValueError("some state raises the flag with probability 1")
    return StochasticMatrix(M / stay[:, None])
