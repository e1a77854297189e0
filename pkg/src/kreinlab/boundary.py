"""Builders for Markovian boundary data.

Boundary operators act on ``L^2(Gamma, W)``; their Gram matrices ``W B`` are
what the Markov criteria inspect.  On a closed loop of boundary nodes the
discrete Laplace-Beltrami operator is the weighted second difference along
the loop.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .discrete import DiscreteElliptic
from .errors import ContractViolation, DomainError
from .markov import BoundaryForm, reassemble_form

__all__ = [
    "BoundaryGeometry",
    "DegenerateBoundaryWarning",
    "boundary_geometry",
    "boundary_laplacian",
    "fractional_power",
    "wentzell_B",
    "levy_circulant_B",
    "mean_value_projector",
    "mixed_dn_projector",
    "jump_killing_B",
]


class DegenerateBoundaryWarning(UserWarning):
    """A two-point boundary has no intrinsic Laplace-Beltrami operator."""


@dataclass(frozen=True, eq=False)
class BoundaryGeometry:
    """Two endpoints, or a closed loop with node arc positions and weights.

    For a loop, ``segments[k]`` is the length from node ``k`` to node ``k+1``
    (cyclically) and ``weights[k]`` is the mean of the two segments at ``k``.
    """

    kind: str
    weights: np.ndarray
    segments: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if self.kind not in ("two_point", "loop"):
            raise DomainError(f"unknown boundary kind {self.kind!r}")
        if np.any(w <= 0):
            raise DomainError("boundary weights must be positive")
        object.__setattr__(self, "weights", w)
        if self.kind == "loop":
            seg = np.asarray(self.segments, dtype=float)
            if seg.shape != w.shape or np.any(seg <= 0):
                raise DomainError("loop segments must be positive, one per node")
            object.__setattr__(self, "segments", seg)

    @classmethod
    def two_point(cls):
        return cls("two_point", np.ones(2))

    @classmethod
    def uniform_loop(cls, nb: int, length: float):
        if nb < 3 or length <= 0:
            raise DomainError("a loop needs at least 3 nodes and positive length")
        seg = np.full(nb, length / nb)
        return cls("loop", seg.copy(), seg)

    @classmethod
    def from_segments(cls, segments):
        seg = np.asarray(segments, dtype=float)
        return cls("loop", 0.5 * (seg + np.roll(seg, 1)), seg)

    @property
    def nb(self) -> int:
        return self.weights.size

    @property
    def degenerate(self) -> bool:
        return self.kind == "two_point"

    @property
    def length(self) -> float:
        return float(self.segments.sum()) if self.kind == "loop" else float(self.weights.sum())

    @property
    def uniform(self) -> bool:
        return self.kind == "loop" and np.ptp(self.segments) <= 1e-12 * self.segments.max()


def boundary_geometry(disc: DiscreteElliptic) -> BoundaryGeometry:
    """Boundary geometry of an assembled grid."""
    if disc.dim == 1:
        return BoundaryGeometry.two_point()
    pts = disc.coords[disc.boundary]
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    return BoundaryGeometry.from_segments(seg)


def boundary_laplacian(geom: BoundaryGeometry) -> np.ndarray:
    """Discrete ``-Delta_LB`` on ``L^2(Gamma, W)``: ``W^{-1}`` times the second-difference Gram matrix.

    A two-point boundary yields the zero matrix and a
    :class:`DegenerateBoundaryWarning`.
    """
    if geom.degenerate:
        warnings.warn("two-point boundary: no boundary Laplacian, returning zero", DegenerateBoundaryWarning, stacklevel=2)
        return np.zeros((geom.nb, geom.nb))
    nb = geom.nb
    c = 1.0 / geom.segments
    G = np.diag(c + np.roll(c, 1))
    idx = np.arange(nb)
    G[idx, (idx + 1) % nb] -= c
    G[(idx + 1) % nb, idx] -= c
    return G / geom.weights[:, None]


def fractional_power(Mtx, s: float, weights=None, tol: float = 1e-10) -> np.ndarray:
    """``Mtx^s`` by spectral mapping, for ``Mtx`` symmetric w.r.t. ``diag(weights)``."""
    if not 0 < s <= 1:
        raise DomainError("s must lie in (0, 1]")
    M = np.atleast_2d(np.asarray(Mtx, dtype=float))
    if s == 1:
        return M.copy()
    w = np.ones(M.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    r = np.sqrt(w)
    S = r[:, None] * M / r[None, :]
    scale = max(np.abs(S).max(), 1e-300)
    if np.abs(S - S.T).max() > 1e-10 * scale:
        raise ContractViolation("matrix is not symmetric w.r.t. the weights")
    ev, U = np.linalg.eigh(0.5 * (S + S.T))
    if ev.min() < -tol * max(1.0, np.abs(ev).max()):
        raise ContractViolation(f"matrix has a negative eigenvalue {ev.min():.3g}")
    ev = np.clip(ev, 0.0, None)
    P = (U * ev**s) @ U.T
    P = 0.5 * (P + P.T)
    return P / r[:, None] * r[None, :]


def _need_loop(geom):
    if geom.kind != "loop":
        raise DomainError("this builder needs a loop boundary")


def wentzell_B(geom: BoundaryGeometry, b1: float, bs: float, b0: float, s: float = 0.5) -> BoundaryForm:
    """``B = b1 (-Delta_LB) + bs (-Delta_LB)^s + b0`` on the full trace space."""
    _need_loop(geom)
    if min(b1, bs, b0) < 0:
        raise DomainError("Wentzell coefficients must be nonnegative")
    if not 0 < s < 1:
        raise DomainError("s must lie in (0, 1)")
    L = boundary_laplacian(geom)
    B = b1 * L + b0 * np.eye(geom.nb)
    if bs:
        B = B + bs * fractional_power(L, s, geom.weights)
    return BoundaryForm.full(_w_symmetrize(B, geom.weights), geom.weights)


def _w_symmetrize(B, w):
    F = w[:, None] * B
    return 0.5 * (F + F.T) / w[:, None]


def levy_circulant_B(geom: BoundaryGeometry, c: float, nu: Sequence[float]) -> BoundaryForm:
    """Translation-invariant generator on a uniform loop.

    ``(B h)(x) = c (-Delta_LB h)(x) - 1/2 sum_y (h(x+y) - 2 h(x) + h(x-y)) nu(y)``
    where ``nu[k]`` is the mass of the shift by ``k`` nodes.
    """
    _need_loop(geom)
    if not geom.uniform:
        raise DomainError("the circulant generator needs a uniform loop")
    nu = np.asarray(nu, dtype=float)
    nb = geom.nb
    if nu.shape != (nb,):
        raise DomainError(f"nu must have one entry per shift ({nb})")
    if c < 0 or np.any(nu < 0):
        raise DomainError("c and nu must be nonnegative")
    if nu[0] != 0:
        raise DomainError("nu must vanish at the zero shift")
    if np.abs(nu - np.roll(nu[::-1], 1)).max() > 1e-14 * max(1.0, nu.max()):
        raise DomainError("nu must be symmetric under y -> -y")
    row = -nu.copy()
    row[0] = nu.sum()
    idx = np.arange(nb)
    J = row[(idx[None, :] - idx[:, None]) % nb]
    B = c * boundary_laplacian(geom) + J
    return BoundaryForm.full(_w_symmetrize(B, geom.weights), geom.weights)


def mean_value_projector(geom: BoundaryGeometry) -> Callable[[float], BoundaryForm]:
    """Factory ``b -> (Pi, b Pi)`` with ``Pi`` the projection onto constant traces."""
    w = geom.weights

    def make(b: float) -> BoundaryForm:
        return BoundaryForm.mean_value(float(b), w)

    return make


def mixed_dn_projector(geom: BoundaryGeometry, mask) -> BoundaryForm:
    """Traces supported on ``mask`` with zero boundary form there (Neumann on ``mask``, Dirichlet elsewhere)."""
    idx = sorted(set(int(i) for i in mask))
    if not idx:
        raise DomainError("empty mask: use the Zero projector (Dirichlet) instead")
    if len(idx) >= geom.nb:
        raise DomainError("full mask: use the Full projector (Neumann) instead")
    if idx[0] < 0 or idx[-1] >= geom.nb:
        raise DomainError("mask index outside the boundary")
    return BoundaryForm.mask(idx, geom.nb, None, geom.weights)


def jump_killing_B(geom: BoundaryGeometry, J, kappa) -> BoundaryForm:
    """Full-trace datum with form ``sum_{i<j} J_ij (h_i - h_j)^2 + sum_i kappa_i h_i^2``."""
    J = np.asarray(J, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    nb = geom.nb
    if J.shape != (nb, nb) or kappa.shape != (nb,):
        raise DomainError("J must be nb x nb and kappa of length nb")
    if np.any(J < 0) or np.any(kappa < 0):
        raise DomainError("jump weights and killing must be nonnegative")
    if np.abs(J - J.T).max() > 0 or np.any(np.diag(J) != 0):
        raise DomainError("J must be symmetric with zero diagonal")
    F = reassemble_form(J, kappa)
    return BoundaryForm.full(F / geom.weights[:, None], geom.weights)
