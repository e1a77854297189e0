"""Extension generators and resolvents built from boundary data ``(Pi, B)``.

Two independent constructions are provided.

* Direct elimination: minimize the extension form ``F_N(u) + f_b(gamma_0 u)``
  over admissible boundary values (``gamma_0 u = V c``).  Boundary nodes carry
  no mass, so this Schur complement gives the interior generator.
* Krein formula: ``R = R^D + K V (V^T W (B - P_lambda) V)^{-1} V^T W K*``.

Both act on interior vectors with the mass inner product.  Boundary values of
a domain element are recovered by the elimination map ``u_b = E u_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .discrete import (
    DiscreteElliptic,
    dirichlet_resolvent,
    dtn_discrete,
    flux_trace,
    poisson_discrete,
    spd_solve,
)
from .errors import ContractViolation, DegenerateElimination, DomainError, ShiftError
from .markov import BoundaryForm, ExtensionClass, classify, classify_2d

__all__ = [
    "ExtensionOperator",
    "QuadraticForm",
    "ResolventRecovery",
    "build_extension",
    "krein_resolvent",
    "generator_from_resolvent",
    "extension_form",
    "extract_boundary_form",
    "boundary_form_from_resolvent",
    "wentzell_residual",
    "extend_to_boundary",
    "theta_report",
    "resolvent_condition",
    "classify_extension",
]

SHIFT_RETRY = (1.0, 10.0, 100.0)
SINGULAR_COND = 1e12


def classify_extension(disc: DiscreteElliptic, bf: BoundaryForm) -> ExtensionClass:
    """Markov verdict for boundary data on ``disc`` (two-point rules on the interval)."""
    if disc.dim == 1 and bf.nb == 2 and bf.projector.kind in ("zero", "full", "rank_one", "mask"):
        return classify_2d(bf, disc.domain.ell)
    return classify(bf)


def _check_dims(disc: DiscreteElliptic, bf: BoundaryForm):
    if bf.nb != disc.nb:
        raise DomainError(f"boundary form has {bf.nb} nodes, the grid boundary has {disc.nb}")
    if np.abs(bf.weights - disc.weights).max() > 1e-12 * disc.weights.max():
        raise DomainError("boundary form weights differ from the grid boundary weights")


@dataclass(frozen=True, eq=False)
class ExtensionOperator:
    """Interior generator of the extension with boundary datum ``boundary_form``.

    ``elimination`` maps interior values to the boundary values of the
    corresponding domain element.
    """

    generator: np.ndarray
    boundary_form: BoundaryForm
    provenance: str
    classification: ExtensionClass
    elimination: np.ndarray
    mass: np.ndarray
    agreement: Optional[float] = None

    @property
    def form_matrix(self) -> np.ndarray:
        """Interior form matrix ``-M A`` (symmetric)."""
        S = -self.mass[:, None] * self.generator
        return 0.5 * (S + S.T)


def _interior_schur(disc: DiscreteElliptic, bf: BoundaryForm):
    """Eliminated form ``S``, elimination map ``E`` and the killing vector ``S 1``."""
    V = bf.basis()
    ni = disc.ni
    if V.shape[1] == 0:
        return disc.Q_ii.copy(), np.zeros((disc.nb, ni)), disc.Q_ii.sum(axis=1)
    WB = bf.form_matrix
    Y = V.T @ (disc.Q_bb + WB) @ V
    Y = 0.5 * (Y + Y.T)
    ev = np.linalg.eigvalsh(Y)
    if np.abs(ev).min() <= 1e-12 * max(np.abs(ev).max(), 1.0):
        raise DegenerateElimination(
            "degenerate elimination: construct via krein_resolvent at a shift lambda>0 and recover the generator"
        )
    T = V.T @ disc.Q_bi
    C = np.linalg.solve(Y, T)
    E = -V @ C
    S = disc.Q_ii - T.T @ C
    S = 0.5 * (S + S.T)
    # killing vector S 1 without cancellation: S 1 = Q_ib (E 1 - 1)
    ones_b = np.ones(disc.nb)
    coeff, *_ = np.linalg.lstsq(V, ones_b, rcond=None)
    if np.abs(V @ coeff - ones_b).max() <= 1e-12:
        gap = -V @ np.linalg.solve(Y, V.T @ (WB @ ones_b))
    else:
        gap = E @ np.ones(ni) - ones_b
    kill = disc.Q_ib @ gap
    off = S - np.diag(np.diag(S))
    S[np.diag_indices(ni)] = kill - off.sum(axis=1)
    return S, E, kill


def build_extension(disc: DiscreteElliptic, bf: BoundaryForm, via: str = "direct") -> ExtensionOperator:
    """Generator of the extension with boundary datum ``bf``.

    Parameters
    ----------
    via : {"direct", "krein", "both"}
        ``direct`` eliminates boundary unknowns from the extension form;
        ``krein`` inverts the Krein resolvent at a shift; ``both`` runs the two
        and records their relative disagreement in ``agreement``.
    """
    _check_dims(disc, bf)
    if via not in ("direct", "krein", "both"):
        raise DomainError(f"unknown construction {via!r}")
    cls = classify_extension(disc, bf)
    E = None
    A_direct = A_krein = None
    if via in ("direct", "both"):
        S, E, _ = _interior_schur(disc, bf)
        A_direct = -S / disc.mass[:, None]
    if via in ("krein", "both"):
        A_krein, lam = generator_from_resolvent(disc, bf)
        if E is None:
            E = _elimination_from_resolvent(disc, bf, lam)
    agreement = None
    if via == "both":
        scale = resolvent_condition(A_direct, disc.mass, 1.0)
        agreement = float(np.linalg.norm(A_direct - A_krein) / (np.linalg.norm(A_direct) * scale))
    A = A_direct if A_direct is not None else A_krein
    return ExtensionOperator(A, bf, via, cls, E, disc.mass.copy(), agreement)


def _elimination_from_resolvent(disc, bf, lam):
    """Boundary values of ``R_lambda f`` as a function of its interior values."""
    V = bf.basis()
    if V.shape[1] == 0:
        return np.zeros((disc.nb, disc.ni))
    # domain elements are Dirichlet-free parts plus K_lambda V c; boundary value V c
    K = poisson_discrete(disc, lam)
    mid_inv = _middle_inverse(disc, bf, lam, K @ V)
    if mid_inv is None:
        raise ShiftError(f"Krein middle block singular at lambda={lam:g}", (lam,))
    R = krein_resolvent(disc, bf, lam)
    # boundary trace of R f equals V mid^{-1} V^T K^T M f
    trace_map = V @ mid_inv @ (V.T @ (K.T * disc.mass[None, :]))
    return np.linalg.solve(R.T, trace_map.T).T


def _middle_block(disc, bf, lam):
    V = bf.basis()
    WP = disc.weights[:, None] * dtn_discrete(disc, lam)
    mid = V.T @ (bf.form_matrix - WP) @ V
    return 0.5 * (mid + mid.T)


def _middle_inverse(disc, bf, lam, KV):
    """Inverse of the middle block, or ``None`` when it is singular.

    Null directions of the middle block that ``KV`` also annihilates are
    traces invisible from the interior (for instance rectangle corners); they
    do not affect the resolvent and are dropped by a pseudo-inverse.
    """
    mid = _middle_block(disc, bf, lam)
    ev, U = np.linalg.eigh(mid)
    top = np.abs(ev).max(initial=0.0)
    if top == 0.0:
        return None
    null = np.abs(ev) <= top / SINGULAR_COND
    if not null.any():
        return np.linalg.inv(mid)
    if np.linalg.norm(KV @ U[:, null]) > 1e-10 * max(np.linalg.norm(KV), 1e-300):
        return None
    Ur = U[:, ~null]
    return (Ur / ev[~null]) @ Ur.T


def _krein_at(disc, bf, lam):
    RD = dirichlet_resolvent(disc, lam)
    V = bf.basis()
    if V.shape[1] == 0:
        return RD
    KV = poisson_discrete(disc, lam) @ V
    mid_inv = _middle_inverse(disc, bf, lam, KV)
    if mid_inv is None:
        return None
    return RD + KV @ mid_inv @ (KV.T * disc.mass[None, :])


def krein_resolvent(disc: DiscreteElliptic, bf: BoundaryForm, lam: float) -> np.ndarray:
    """Resolvent ``(-A + lambda)^{-1}`` of the extension by the Krein formula.

    If ``B - P_lambda`` is singular on ``range(Pi)`` the formula is evaluated at
    the first usable shift ``mu`` in ``(1, 10, 100)`` and transported back with
    ``R_lambda = R_mu (I - (mu - lambda) R_mu)^{-1}``.
    """
    _check_dims(disc, bf)
    if not (np.isfinite(lam) and lam > 0):
        raise DomainError("lambda must be positive")
    R = _krein_at(disc, bf, lam)
    if R is not None:
        return R
    tried = [lam]
    for mu in SHIFT_RETRY:
        if mu == lam:
            continue
        tried.append(mu)
        Rm = _krein_at(disc, bf, mu)
        if Rm is None:
            continue
        T = np.eye(disc.ni) - (mu - lam) * Rm
        if np.linalg.cond(T) > SINGULAR_COND:
            break
        return np.linalg.solve(T.T, Rm.T).T
    raise ShiftError(f"Krein middle block singular; tried lambda in {tried}", tuple(tried))


def resolvent_condition(A: np.ndarray, mass: np.ndarray, lam: float) -> float:
    """2-norm condition number of ``-A + lambda`` in the mass-symmetrized frame."""
    s = np.sqrt(mass)
    Sym = s[:, None] * (-A + lam * np.eye(A.shape[0])) / s[None, :]
    ev = np.abs(np.linalg.eigvalsh(0.5 * (Sym + Sym.T)))
    return float(ev.max() / ev.min())


def generator_from_resolvent(disc: DiscreteElliptic, bf: BoundaryForm, lambdas: Sequence[float] = (1.0, 10.0)):
    """``A = lambda - R_lambda^{-1}`` at the first shift with a well-conditioned resolvent.

    Returns the generator and the shift used.
    """
    last = None
    for lam in lambdas:
        try:
            R = krein_resolvent(disc, bf, lam)
        except ShiftError as exc:
            last = exc
            continue
        if np.linalg.cond(R) > SINGULAR_COND:
            continue
        Rinv = np.linalg.solve(R, np.eye(disc.ni))
        A = lam * np.eye(disc.ni) - Rinv
        S = disc.mass[:, None] * A
        A = 0.5 * (S + S.T) / disc.mass[:, None]
        return A, lam
    raise ShiftError(f"no usable shift among {tuple(lambdas)}", tuple(lambdas)) from last


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """Extension form ``F_N + f_b(gamma_0 ., gamma_0 .)`` on global vectors.

    ``basis`` spans the admissible boundary values; a global vector is in the
    form domain when its trace lies in ``range(basis)``.
    """

    Q_ext: np.ndarray
    basis: np.ndarray
    disc: DiscreteElliptic = field(repr=False)

    def __call__(self, u, v=None) -> float:
        u = np.asarray(u, dtype=float)
        v = u if v is None else np.asarray(v, dtype=float)
        return float(u @ self.Q_ext @ v)

    def admissible(self, u, tol: float = 1e-10) -> bool:
        h = self.disc.trace(u)
        if self.basis.shape[1] == 0:
            return bool(np.abs(h).max(initial=0.0) <= tol)
        c, *_ = np.linalg.lstsq(self.basis, h, rcond=None)
        return bool(np.abs(self.basis @ c - h).max() <= tol * max(1.0, np.abs(h).max()))

    def project(self, u) -> np.ndarray:
        """Replace the trace of ``u`` by its Euclidean projection on the admissible set."""
        u = np.array(u, dtype=float)
        h = self.disc.trace(u)
        if self.basis.shape[1] == 0:
            u[self.disc.boundary] = 0.0
        else:
            c, *_ = np.linalg.lstsq(self.basis, h, rcond=None)
            u[self.disc.boundary] = self.basis @ c
        return u

    def reduced(self) -> np.ndarray:
        """Form matrix in coordinates ``(u_interior, c)`` with trace ``basis @ c``."""
        d = self.disc
        T = np.zeros((d.N, d.ni + self.basis.shape[1]))
        T[d.interior, : d.ni] = np.eye(d.ni)
        T[d.boundary, d.ni :] = self.basis
        Z = T.T @ self.Q_ext @ T
        return 0.5 * (Z + Z.T)

    def generator(self) -> np.ndarray:
        """Interior generator obtained by eliminating the boundary coordinates."""
        d = self.disc
        Z = self.reduced()
        r = self.basis.shape[1]
        S = Z[: d.ni, : d.ni]
        if r:
            S = S - Z[: d.ni, d.ni :] @ np.linalg.solve(Z[d.ni :, d.ni :], Z[d.ni :, : d.ni])
        return -0.5 * (S + S.T) / d.mass[:, None]


def extension_form(disc: DiscreteElliptic, bf: BoundaryForm) -> QuadraticForm:
    """Form ``Q + (W B)`` inserted on the boundary rows and columns."""
    _check_dims(disc, bf)
    Q_ext = disc.Q.copy()
    b = disc.boundary
    Q_ext[np.ix_(b, b)] += bf.form_matrix
    return QuadraticForm(Q_ext, bf.basis(), disc)


def _global_harmonic(disc: DiscreteElliptic) -> np.ndarray:
    """``(N, nb)`` matrix of harmonic extensions of the boundary unit vectors."""
    H = np.zeros((disc.N, disc.nb))
    H[disc.interior] = poisson_discrete(disc, 0.0)
    H[disc.boundary] = np.eye(disc.nb)
    return H


def extract_boundary_form(disc: DiscreteElliptic, A: ExtensionOperator):
    """Boundary forms ``f_A(h1, h2) = F_A(K_0 h1, K_0 h2)`` and ``f_b = f_A + (W P_0 h1, h2)``.

    Both are returned as ``nb x nb`` Gram matrices restricted to the admissible
    traces (zero on the ``W``-orthogonal complement).  The form of ``A`` is
    rebuilt from its boundary datum and checked against the stored generator.

    For the Dirichlet extension the admissible trace space is ``{0}``; the
    sentinel result is a pair of ``0 x 0`` arrays.
    """
    bf = A.boundary_form
    if bf.projector.kind == "zero":
        return np.zeros((0, 0)), np.zeros((0, 0))
    form = extension_form(disc, bf)
    G = form.generator()
    gap = np.abs(G - A.generator).max()
    if gap > 1e-8 * max(1.0, np.abs(A.generator).max()):
        raise ContractViolation(f"operator does not match its boundary datum (gap {gap:.3g})")
    Pi = bf.projector_matrix
    H = _global_harmonic(disc) @ Pi
    f_A = H.T @ form.Q_ext @ H
    f_A = 0.5 * (f_A + f_A.T)
    WP0 = disc.weights[:, None] * dtn_discrete(disc, 0.0)
    f_b = f_A + Pi.T @ WP0 @ Pi
    return f_A, 0.5 * (f_b + f_b.T)


@dataclass
class ResolventRecovery:
    """Outcome of recovering a boundary form from a resolvent family.

    Attributes
    ----------
    f_resolvent : array
        Extrapolated limit of the Yosida forms on harmonic extensions.
    f_A, f_b : array
        Boundary form of the extension and its Markov part, after removing
        the interior elimination (``0 x 0`` when the trace space is empty).
    rank : int
        Dimension of the recovered admissible trace space.
    spread : float
        Difference between the two highest-order extrapolants (error bar).
    sequence : list of arrays
        Raw Yosida forms on harmonic extensions, one per shift.
    monotone_slack : float
        Smallest eigenvalue of successive differences (negative = violation).
    note : str
    """

    f_resolvent: np.ndarray
    f_A: np.ndarray
    f_b: np.ndarray
    rank: int
    spread: float
    sequence: list
    lambdas: tuple
    monotone_slack: float
    note: str = ""


def _neville_at_zero(xs, ys):
    """Polynomial extrapolation of ``ys`` (stacked arrays) to ``x = 0``."""
    P = [np.array(y, dtype=float) for y in ys]
    xs = list(xs)
    n = len(xs)
    for k in range(1, n):
        for i in range(n - k):
            P[i] = (xs[i + k] * P[i] - xs[i] * P[i + 1]) / (xs[i + k] - xs[i])
    return P[0]


def boundary_form_from_resolvent(
    resolvent_family: Callable[[float], np.ndarray],
    disc: DiscreteElliptic,
    lambdas: Sequence[float] = (1e3, 2e3, 4e3, 7e3, 1e4),
    order: int = 4,
    tol: float = 1e-8,
) -> ResolventRecovery:
    """Recover the boundary form of an extension from its resolvents.

    The Yosida forms ``lambda <G h, M (I - lambda R_lambda) G h>`` on discrete
    harmonic extensions ``G h`` must be non-decreasing in ``lambda``; their
    limit is extrapolated polynomially in ``1 / lambda`` using the last
    ``order + 1`` shifts.

    On the grid the boundary carries no mass, so the limit is the interior
    form ``X - X V Y^{-1} V^T X`` with ``X = Q_bi Q_ii^{-1} Q_ib`` and
    ``Y = V^T (Q_bb + W B) V``.  ``V Y^{-1} V^T`` is solved for through the
    pseudo-inverse of ``X`` and ``W B`` is read off ``Y``.  The boundary datum
    is identifiable when ``Q_ib`` has full column rank (always on the
    interval); otherwise the recovered form is the part visible from the
    interior.
    """
    lambdas = tuple(float(l) for l in lambdas)
    if len(lambdas) < 2 or any(b <= a for a, b in zip(lambdas, lambdas[1:])) or lambdas[0] <= 0:
        raise DomainError("lambdas must be a positive increasing grid with at least two shifts")
    G = poisson_discrete(disc, 0.0)
    MG = disc.mass[:, None] * G
    seq = []
    for lam in lambdas:
        R = resolvent_family(lam)
        F = lam * (G.T @ MG - lam * MG.T @ (R @ G))
        seq.append(0.5 * (F + F.T))
    scale = max(1.0, max(np.abs(F).max() for F in seq))
    slack = min(np.linalg.eigvalsh(b - a).min() for a, b in zip(seq, seq[1:]))
    if slack < -tol * scale:
        raise ContractViolation(
            f"Yosida forms decrease by {-slack:.3g}: input is not the resolvent of a positive extension"
        )
    k = min(order + 1, len(lambdas))
    inv = [1.0 / l for l in lambdas]
    limit = _neville_at_zero(inv[-k:], seq[-k:])
    if k > 2:
        lower = _neville_at_zero(inv[-(k - 1):], seq[-(k - 1):])
    else:
        lower = seq[-1]
    spread = float(np.abs(limit - lower).max())
    limit = 0.5 * (limit + limit.T)

    X = disc.Q_bi @ spd_solve(disc.Q_ii, disc.Q_ib)
    X = 0.5 * (X + X.T)
    Xp = np.linalg.pinv(X, rcond=1e-10, hermitian=True)
    Gm = Xp @ (X - limit) @ Xp
    Gm = 0.5 * (Gm + Gm.T)
    ev, U = np.linalg.eigh(Gm)
    keep = np.abs(ev) > max(1e-6 * np.abs(ev).max(initial=0.0), 1e3 * spread * np.abs(np.diag(Xp)).max() ** 2, 1e-14)
    rank = int(keep.sum())
    note = ""
    if np.linalg.matrix_rank(X, tol=1e-10 * np.abs(X).max()) < disc.nb:
        note = "boundary datum only partially identifiable from the interior (Q_ib rank deficient)"
    if rank == 0:
        empty = np.zeros((0, 0))
        return ResolventRecovery(limit, empty, empty, 0, spread, seq, lambdas, float(slack), "boundary domain empty (Dirichlet)")
    V = U[:, keep]
    Y = np.diag(1.0 / ev[keep])
    VtWBV = Y - V.T @ disc.Q_bb @ V
    w = disc.weights
    # coordinates of the W-orthogonal projection onto range(V)
    L = np.linalg.solve(V.T @ (w[:, None] * V), V.T * w[None, :])
    P = V @ L
    f_b = L.T @ VtWBV @ L
    f_b = 0.5 * (f_b + f_b.T)
    WP0 = w[:, None] * dtn_discrete(disc, 0.0)
    f_A = f_b - P.T @ WP0 @ P
    return ResolventRecovery(limit, 0.5 * (f_A + f_A.T), f_b, rank, spread, seq, lambdas, float(slack), note)


def extend_to_boundary(op: ExtensionOperator, u_int) -> np.ndarray:
    """Boundary values of the domain element with interior values ``u_int``."""
    return op.elimination @ np.asarray(u_int, dtype=float)


def wentzell_residual(disc: DiscreteElliptic, bf: BoundaryForm, u, return_scale: bool = False):
    """Weak boundary-condition defect ``max_h |f(gamma_0 u, h) - <flux u, h>_W|``.

    ``h`` runs over the (unit-normalized) basis of the admissible traces.
    With ``return_scale`` also returns ``(flux_scale, roundoff_scale)``: the
    norm of the weighted flux ``W flux(u)`` and of ``|Q| |u|`` on boundary
    rows, both over the same basis.
    """
    _check_dims(disc, bf)
    u = np.asarray(u, dtype=float)
    V = bf.basis()
    V = V / np.linalg.norm(V, axis=0, keepdims=True) if V.shape[1] else V
    Wflux = disc.weights * (flux_trace(disc) @ u)
    r = V.T @ (bf.form_matrix @ disc.trace(u) - Wflux)
    res = float(np.abs(r).max(initial=0.0))
    if not return_scale:
        return res
    flux_scale = float(np.abs(V.T @ Wflux).max(initial=0.0))
    rows = np.abs(disc.Q[disc.boundary]) @ np.abs(u) + np.abs(bf.form_matrix) @ np.abs(disc.trace(u))
    round_scale = float(np.abs(np.abs(V).T @ rows).max(initial=0.0))
    return res, (flux_scale, round_scale)


def theta_report(disc: DiscreteElliptic, bf: BoundaryForm) -> np.ndarray:
    """``Theta_B = B - Pi P_0 Pi``, the operator-side coordinate of the datum."""
    Pi = bf.projector_matrix
    return bf.B - Pi @ dtn_discrete(disc, 0.0) @ Pi
