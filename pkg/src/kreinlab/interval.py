"""Closed-form engine for ``d^2/dx^2`` on the interval ``(0, ell)``.

Everything here is exact up to quadrature: the Dirichlet resolvent kernel,
the Poisson (harmonic-extension) operator, the Dirichlet-to-Neumann matrices
and the resolvent of an extension with boundary datum ``(Pi, B)``.

The boundary space is ``R^2`` (values at ``0`` and ``ell``) with unit weights.
Fluxes use the inward convention ``gamma_1 u = (u'(0), -u'(ell))``.

Hyperbolic quotients are evaluated through ``exp``/``expm1`` so that large
``sqrt(lambda) * ell`` does not overflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, ResolutionError, ShiftError
from .markov import BoundaryProjector

__all__ = [
    "IntervalConfig",
    "rd_kernel",
    "poisson_eval",
    "dtn_exact",
    "poisson_adjoint_exact",
    "dirichlet_apply_exact",
    "krein_apply_exact",
    "simpson",
    "default_grid",
]

SMALL_LAMBDA = 1e-12
QUAD_TOL = 1e-9
MAX_REFINE = 6


@dataclass(frozen=True)
class IntervalConfig:
    """Interval length and quadrature resolution (Simpson subintervals)."""

    ell: float = 1.0
    quad_points: int = 2048

    def __post_init__(self):
        if not (np.isfinite(self.ell) and self.ell > 0):
            raise DomainError("ell must be positive")
        if int(self.quad_points) != self.quad_points or self.quad_points < 16:
            raise DomainError("quad_points must be an integer >= 16")
        if self.quad_points % 2:
            object.__setattr__(self, "quad_points", int(self.quad_points) + 1)


def default_grid(cfg: IntervalConfig, n: int = 257) -> np.ndarray:
    return np.linspace(0.0, cfg.ell, n)


def _check_lambda(lam):
    if not np.isfinite(lam) or lam < 0:
        raise DomainError("lambda must be a nonnegative finite number")


def _check_points(x, ell, name="x"):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > ell) or not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must lie in [0, {ell}]")
    return x


def _rd_kernel_array(lam, x, y, ell):
    lo = np.minimum(x, y)
    hi = np.maximum(x, y)
    if lam < SMALL_LAMBDA:
        return (ell - hi) * lo / ell
    s = np.sqrt(lam)
    # sinh(s(ell-hi)) sinh(s lo) / (s sinh(s ell))
    num = np.expm1(-2 * s * (ell - hi)) * np.expm1(-2 * s * lo)
    return np.exp(-s * (hi - lo)) * num / (2 * s * -np.expm1(-2 * s * ell))


def rd_kernel(lam: float, x, y, cfg: IntervalConfig):
    """Kernel of the Dirichlet resolvent ``(-d^2/dx^2 + lambda)^{-1}``.

    Accepts scalars or broadcastable arrays for ``x`` and ``y``.

    Examples
    --------
    >>> rd_kernel(0.0, 0.5, 0.25, IntervalConfig(1.0))
    0.125
    """
    _check_lambda(lam)
    x = _check_points(x, cfg.ell)
    y = _check_points(y, cfg.ell, "y")
    out = _rd_kernel_array(lam, x, y, cfg.ell)
    return float(out) if out.ndim == 0 else out


def _poisson_weights(lam, x, ell):
    """Values at ``x`` of the harmonic extensions of ``e_1`` and ``e_2``."""
    if lam < SMALL_LAMBDA:
        return 1.0 - x / ell, x / ell
    s = np.sqrt(lam)
    den = -np.expm1(-2 * s * ell)
    left = np.exp(-s * x) * -np.expm1(-2 * s * (ell - x)) / den
    right = np.exp(-s * (ell - x)) * -np.expm1(-2 * s * x) / den
    return left, right


def poisson_eval(lam: float, xi, x, cfg: IntervalConfig):
    """Solution of ``w'' = lambda w`` on ``(0, ell)`` with ``w(0), w(ell) = xi``."""
    _check_lambda(lam)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (2,) or not np.all(np.isfinite(xi)):
        raise DomainError("xi must be two finite numbers")
    x = _check_points(x, cfg.ell)
    left, right = _poisson_weights(lam, x, cfg.ell)
    out = left * xi[0] + right * xi[1]
    return float(out) if np.ndim(out) == 0 else out


def dtn_exact(lam: float, cfg: IntervalConfig) -> np.ndarray:
    """Dirichlet-to-Neumann matrix: boundary data to inward flux of its extension."""
    _check_lambda(lam)
    ell = cfg.ell
    if lam < SMALL_LAMBDA:
        return np.array([[-1.0, 1.0], [1.0, -1.0]]) / ell
    s = np.sqrt(lam)
    den = -np.expm1(-2 * s * ell)
    off = 2 * s * np.exp(-s * ell) / den  # s / sinh(s ell)
    diag = -s * (1 + np.exp(-2 * s * ell)) / den  # -s coth(s ell)
    return np.array([[diag, off], [off, diag]])


def simpson(values: np.ndarray, a, b) -> np.ndarray:
    """Composite Simpson rule along the last axis on a uniform grid over ``[a, b]``."""
    n = values.shape[-1] - 1
    if n < 2 or n % 2:
        raise DomainError("Simpson needs an even number of subintervals")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    h = (np.asarray(b, dtype=float) - np.asarray(a, dtype=float)) / n
    return (values @ w) * h / 3.0


def _sample(u: Callable, y: np.ndarray) -> np.ndarray:
    vals = np.asarray(u(y), dtype=float)
    if vals.shape != y.shape:
        vals = np.broadcast_to(vals, y.shape).astype(float)
    if not np.all(np.isfinite(vals)):
        raise DomainError("u returned non-finite values")
    return vals


def _refine(compute, n0: int, what: str):
    n = n0
    prev = compute(n)
    for _ in range(MAX_REFINE):
        n *= 2
        cur = compute(n)
        if np.max(np.abs(cur - prev)) < QUAD_TOL:
            return cur
        prev = cur
    raise ResolutionError(f"{what}: quadrature did not settle below {QUAD_TOL:g} by {n} subintervals")


def poisson_adjoint_exact(lam: float, u: Callable, cfg: IntervalConfig) -> np.ndarray:
    """Pairings ``(int G e_1 u, int G e_2 u)``; equals the inward flux of ``R^D u``."""
    _check_lambda(lam)

    def compute(n):
        y = np.linspace(0.0, cfg.ell, n + 1)
        left, right = _poisson_weights(lam, y, cfg.ell)
        uy = _sample(u, y)
        return simpson(np.vstack([left * uy, right * uy]), 0.0, cfg.ell)

    return _refine(compute, cfg.quad_points, "Poisson adjoint")


def dirichlet_apply_exact(lam: float, u: Callable, xs: Optional[np.ndarray], cfg: IntervalConfig) -> np.ndarray:
    """Samples of ``R^D_lambda u`` at ``xs``; each integral is split at the kernel kink."""
    _check_lambda(lam)
    xs = default_grid(cfg) if xs is None else _check_points(xs, cfg.ell, "xs")
    ell = cfg.ell

    def compute(n):
        t = np.linspace(0.0, 1.0, n + 1)
        yl = xs[:, None] * t[None, :]
        yr = xs[:, None] + (ell - xs)[:, None] * t[None, :]
        kl = _rd_kernel_array(lam, xs[:, None], yl, ell) * _sample(u, yl)
        kr = _rd_kernel_array(lam, xs[:, None], yr, ell) * _sample(u, yr)
        return simpson(kl, 0.0, xs) + simpson(kr, xs, ell)

    return _refine(compute, cfg.quad_points, "Dirichlet resolvent")


def krein_apply_exact(
    pi: BoundaryProjector,
    B,
    lam: float,
    u: Callable,
    xs: Optional[np.ndarray] = None,
    cfg: IntervalConfig = IntervalConfig(),
) -> np.ndarray:
    """Samples of the extension resolvent ``R_lambda u`` at ``xs``.

    ``R = R^D + G V (V^T (B - P_lambda) V)^{-1} V^T G*`` where ``V`` spans
    ``range(pi)`` and ``B`` is the 2x2 boundary operator.
    """
    if not lam > 0:
        raise DomainError("lambda must be positive")
    xs = default_grid(cfg) if xs is None else _check_points(xs, cfg.ell, "xs")
    rd = dirichlet_apply_exact(lam, u, xs, cfg)
    V = pi.basis(2)
    if V.shape[1] == 0:
        return rd
    B = np.asarray(B, dtype=float)
    if B.shape != (2, 2):
        raise DomainError("B must be a 2x2 matrix")
    middle = V.T @ (B - dtn_exact(lam, cfg)) @ V
    if np.linalg.cond(middle) > 1e12:
        raise ShiftError(f"B - P_lambda is singular on range(Pi) at lambda={lam:g}", (lam,))
    coeff = V @ np.linalg.solve(middle, V.T @ poisson_adjoint_exact(lam, u, cfg))
    left, right = _poisson_weights(lam, xs, cfg.ell)
    return rd + left * coeff[0] + right * coeff[1]
