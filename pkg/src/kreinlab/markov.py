"""Boundary data (projector, boundary operator) and Markov decision procedures.

A boundary datum is a pair ``(Pi, B)``: an orthogonal projector ``Pi`` on the
boundary space ``L^2(Gamma, W)`` (``W`` the diagonal boundary quadrature
weights) and a symmetric operator ``B`` on ``range(Pi)``.  The associated
boundary form is ``f(xi, zeta) = xi^T (W B) zeta`` for ``xi, zeta`` in the
range of ``Pi``.

On a finite set a symmetric form is a Dirichlet form exactly when its matrix
has non-positive off-diagonal entries and non-negative row sums.  The
functions here decide that criterion (:func:`is_markov_generator`), check it by
direct exponentiation (:func:`brute_force_markov`), split a Markov form into
jump and killing parts (:func:`beurling_deny_split`), and classify two-point
boundary data for the interval (:func:`classify_2d`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContractViolation, DomainError, NumericError

__all__ = [
    "BoundaryProjector",
    "BoundaryForm",
    "ExtensionClass",
    "MarkovVerdict",
    "BruteForceVerdict",
    "E0",
    "E1",
    "E2",
    "classify_2d",
    "classify",
    "is_markov_generator",
    "brute_force_markov",
    "beurling_deny_split",
    "reassemble_form",
    "form_contraction_check",
]

INEQ_TOL = 1e-12
BRUTE_TOL = 1e-8

E0 = np.array([1.0, 1.0]) / np.sqrt(2.0)
E1 = np.array([1.0, 0.0])
E2 = np.array([0.0, 1.0])

_KINDS = ("zero", "full", "rank_one", "mask", "mean_value")


def _as_weights(weights, nb):
    if weights is None:
        return np.ones(nb)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != nb:
        raise DomainError(f"expected {nb} boundary weights, got {w.shape[0]}")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise DomainError("boundary weights must be finite and strictly positive")
    return w


@dataclass(frozen=True, eq=False)
class BoundaryProjector:
    """Orthogonal projector on ``L^2(Gamma, W)`` selecting admissible traces.

    Use the constructors :meth:`zero`, :meth:`full`, :meth:`rank_one`,
    :meth:`mask` and :meth:`mean_value` rather than the raw initializer.
    """

    kind: str
    vector: Optional[np.ndarray] = None
    indices: Optional[tuple] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown projector kind {self.kind!r}")
        if self.kind == "rank_one":
            v = np.asarray(self.vector, dtype=float).reshape(-1)
            if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise DomainError("RankOne vector must have unit Euclidean norm")
            object.__setattr__(self, "vector", v)
        if self.kind == "mask":
            if not self.indices:
                raise DomainError("Mask projector needs a nonempty index set")
            object.__setattr__(self, "indices", tuple(sorted(int(i) for i in set(self.indices))))
        if self.kind == "mean_value":
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if w.size == 0 or np.any(w <= 0):
                raise DomainError("MeanValue weights must be strictly positive")
            object.__setattr__(self, "weights", w)

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def full(cls):
        return cls("full")

    @classmethod
    def rank_one(cls, v):
        return cls("rank_one", vector=np.asarray(v, dtype=float))

    @classmethod
    def mask(cls, indices):
        return cls("mask", indices=tuple(indices))

    @classmethod
    def mean_value(cls, weights):
        return cls("mean_value", weights=np.asarray(weights, dtype=float))

    def basis(self, nb: int) -> np.ndarray:
        """Columns spanning ``range(Pi)`` (not normalized), shape ``(nb, r)``."""
        if self.kind == "zero":
            return np.zeros((nb, 0))
        if self.kind == "full":
            return np.eye(nb)
        if self.kind == "rank_one":
            if self.vector.shape[0] != nb:
                raise DomainError(f"RankOne vector has length {self.vector.shape[0]}, boundary has {nb} nodes")
            return self.vector.reshape(nb, 1).copy()
        if self.kind == "mask":
            if max(self.indices) >= nb or min(self.indices) < 0:
                raise DomainError("Mask index outside the boundary")
            return np.eye(nb)[:, list(self.indices)]
        if self.weights.shape[0] != nb:
            raise DomainError("MeanValue weights do not match the boundary size")
        return np.ones((nb, 1))

    def matrix(self, weights) -> np.ndarray:
        """The ``W``-orthogonal projector ``V (V^T W V)^{-1} V^T W``."""
        nb = len(weights)
        w = _as_weights(weights, nb)
        V = self.basis(nb)
        if V.shape[1] == 0:
            return np.zeros((nb, nb))
        G = V.T @ (w[:, None] * V)
        return V @ np.linalg.solve(G, V.T * w[None, :])

    def contains_constants(self, nb: int) -> bool:
        if self.kind in ("full", "mean_value"):
            return True
        if self.kind == "zero":
            return False
        if self.kind == "mask":
            return len(self.indices) == nb
        v = self.vector
        return bool(np.allclose(v, v[0], atol=1e-12) and abs(v[0]) > 0)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "rank_one":
            d["vector"] = [float(x) for x in self.vector]
        if self.kind == "mask":
            d["indices"] = list(self.indices)
        if self.kind == "mean_value":
            d["weights"] = [float(x) for x in self.weights]
        return d


@dataclass(frozen=True, eq=False)
class BoundaryForm:
    """A boundary datum ``(Pi, B)`` with boundary weights ``W``.

    ``B`` is stored as an ``nb x nb`` operator satisfying ``Pi B Pi = B``; the
    form matrix (the Gram matrix of ``f``) is ``W B`` and must be symmetric.
    """

    projector: BoundaryProjector
    B: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        nb = B.shape[0]
        if B.shape != (nb, nb):
            raise DomainError("B must be square")
        if not np.all(np.isfinite(B)):
            raise DomainError("B has non-finite entries")
        w = _as_weights(self.weights, nb)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "weights", w)
        F = w[:, None] * B
        scale = max(1.0, np.abs(F).max())
        if np.abs(F - F.T).max() > 1e-12 * scale:
            raise DomainError("W.B is not symmetric")
        P = self.projector.matrix(w)
        if np.abs(P @ B @ P - B).max() > 1e-10 * max(1.0, np.abs(B).max()):
            raise DomainError("B does not act on range(Pi): Pi B Pi != B")

    # constructors -----------------------------------------------------
    @classmethod
    def zero(cls, nb: int = 2, weights=None):
        return cls(BoundaryProjector.zero(), np.zeros((nb, nb)), weights)

    @classmethod
    def full(cls, B, weights=None):
        return cls(BoundaryProjector.full(), np.asarray(B, dtype=float), weights)

    @classmethod
    def rank_one(cls, v, b: float, weights=None):
        proj = BoundaryProjector.rank_one(v)
        nb = proj.vector.shape[0]
        w = _as_weights(weights, nb)
        return cls(proj, b * proj.matrix(w), w)

    @classmethod
    def mask(cls, indices, nb: int, B_sub=None, weights=None):
        proj = BoundaryProjector.mask(indices)
        B = np.zeros((nb, nb))
        if B_sub is not None:
            idx = list(proj.indices)
            B[np.ix_(idx, idx)] = np.asarray(B_sub, dtype=float)
        return cls(proj, B, weights)

    @classmethod
    def mean_value(cls, b: float, weights):
        w = np.asarray(weights, dtype=float)
        proj = BoundaryProjector.mean_value(w)
        return cls(proj, b * proj.matrix(w), w)

    # views ------------------------------------------------------------
    @property
    def nb(self) -> int:
        return self.B.shape[0]

    @property
    def form_matrix(self) -> np.ndarray:
        """Gram matrix ``W B`` of the boundary form."""
        F = self.weights[:, None] * self.B
        return 0.5 * (F + F.T)

    @property
    def projector_matrix(self) -> np.ndarray:
        return self.projector.matrix(self.weights)

    def basis(self) -> np.ndarray:
        return self.projector.basis(self.nb)

    def scalar(self) -> float:
        """Coefficient ``b`` of a rank-one datum ``B = b Pi``."""
        if self.projector.kind not in ("rank_one", "mean_value"):
            raise ContractViolation("scalar() is defined for rank-one projectors only")
        V = self.basis()
        v = V[:, 0]
        return float(v @ (self.weights * (self.B @ v)) / (v @ (self.weights * v)))

    def evaluate(self, xi, zeta=None) -> float:
        xi = np.asarray(xi, dtype=float)
        zeta = xi if zeta is None else np.asarray(zeta, dtype=float)
        return float(xi @ self.form_matrix @ zeta)

    def scaled(self, c: float) -> "BoundaryForm":
        return BoundaryForm(self.projector, c * self.B, self.weights)

    def to_dict(self) -> dict:
        return {
            "projector": self.projector.to_dict(),
            "B": self.B.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoundaryForm":
        p = d["projector"]
        proj = BoundaryProjector(
            p["kind"],
            vector=None if "vector" not in p else np.asarray(p["vector"]),
            indices=None if "indices" not in p else tuple(p["indices"]),
            weights=None if "weights" not in p else np.asarray(p["weights"]),
        )
        return cls(proj, np.asarray(d["B"], dtype=float), np.asarray(d["weights"], dtype=float))


@dataclass(frozen=True)
class ExtensionClass:
    markovian: bool
    conservative_recurrent: bool
    transient: bool
    description: str
    reasons: tuple = ()

    def __post_init__(self):
        if self.markovian and self.conservative_recurrent == self.transient:
            raise ContractViolation("a Markovian extension is either recurrent or transient")


@dataclass
class MarkovVerdict:
    ok: bool
    reasons: list
    witness: Optional[tuple] = None

    def __bool__(self):
        return self.ok


@dataclass
class BruteForceVerdict:
    ok: bool
    witness: Optional[dict] = None
    max_violation: float = 0.0
    checked: int = 0

    def __bool__(self):
        return self.ok


# --- two-point classification -----------------------------------------------

def _match_unit(v, candidates, tol=INEQ_TOL):
    for name, e in candidates:
        if np.abs(v - e).max() <= tol or np.abs(v + e).max() <= tol:
            return name
    return None


def classify_2d(bf: BoundaryForm, ell: float) -> ExtensionClass:
    """Classify a two-point boundary datum on the interval ``(0, ell)``.

    Full projector: Markovian iff ``b11 + b12 >= 0``, ``b12 + b22 >= 0`` and
    ``b12 <= 0``.  Rank-one ``v (x) v``: Markovian iff ``v`` is one of
    ``e0, e1, e2`` (up to sign) and ``b >= 0``.  The extension is recurrent
    iff the constants are admissible and annihilated by the form.
    """
    if bf.nb != 2:
        raise DomainError("classify_2d needs a two-point boundary")
    if ell <= 0:
        raise DomainError("ell must be positive")
    tol = INEQ_TOL
    kind = bf.projector.kind
    F = bf.form_matrix

    if kind == "zero":
        return ExtensionClass(True, False, True, "Dirichlet")

    if kind == "full":
        b11, b12, b22 = F[0, 0], F[0, 1], F[1, 1]
        reasons = []
        if b11 + b12 < -tol:
            reasons.append(f"b11 + b12 = {b11 + b12:.6g} < 0")
        if b12 + b22 < -tol:
            reasons.append(f"b12 + b22 = {b12 + b22:.6g} < 0")
        if b12 > tol:
            reasons.append(f"b12 = {b12:.6g} > 0")
        markov = not reasons
        annihilates = abs(b11 + b12) <= tol and abs(b12 + b22) <= tol
        P0 = np.array([[-1.0, 1.0], [1.0, -1.0]]) / ell
        if np.abs(F).max() <= tol:
            desc = "Neumann"
        elif np.abs(F - P0).max() <= 1e-10 * max(1.0, 1.0 / ell):
            desc = "Krein extension"
        elif annihilates:
            desc = "Feller (bc11), conservative"
        elif abs(b12) <= tol:
            desc = "Robin"
        else:
            desc = "Feller (bc11)"
        rec = markov and annihilates
        return ExtensionClass(markov, rec, markov and not rec, desc, tuple(reasons))

    if kind in ("rank_one", "mean_value", "mask"):
        if kind == "mask":
            idx = bf.projector.indices
            if len(idx) == 2:
                return classify_2d(BoundaryForm.full(bf.B, bf.weights), ell)
            v = E1 if idx == (0,) else E2
        else:
            v = bf.basis()[:, 0]
            v = v / np.linalg.norm(v)
        Vm = v.reshape(2, 1)
        b = float((Vm.T @ F @ Vm)[0, 0])
        which = _match_unit(v, [("e0", E0), ("e1", E1), ("e2", E2)])
        reasons = []
        if which is None:
            reasons.append(f"v = ({v[0]:.6g}, {v[1]:.6g}) is not one of e0, e1, e2")
        if b < -tol:
            reasons.append(f"b = {b:.6g} < 0")
        markov = not reasons
        rec = markov and which == "e0" and abs(b) <= tol
        if which == "e0":
            desc = "periodic-type (bc12)" if abs(b) <= tol else "periodic-type (bc12) with killing"
        elif which in ("e1", "e2"):
            end = "ell" if which == "e1" else "0"
            desc = f"mixed Dirichlet-Neumann (Dirichlet at {end})" if abs(b) <= tol else f"Robin/Dirichlet (Dirichlet at {end})"
        else:
            desc = "Feller (bc12)"
        return ExtensionClass(markov, rec, markov and not rec, desc, tuple(reasons))

    raise DomainError(f"unsupported projector {kind!r}")


def _indicator_shaped(v, tol=1e-12):
    nz = np.abs(v) > tol
    if not nz.any():
        return False
    vals = v[nz]
    return bool(np.all(np.abs(vals - vals[0]) <= tol * max(1.0, abs(vals[0]))))


def classify(bf: BoundaryForm) -> ExtensionClass:
    """Classify a boundary datum of any size.

    The projector must leave its range invariant under the unit contraction
    (true for Zero, Full, Mask, MeanValue, and RankOne along an indicator)
    and the boundary form restricted to that range must be Markovian.
    """
    kind = bf.projector.kind
    nb = bf.nb
    if kind == "zero":
        return ExtensionClass(True, False, True, "Dirichlet")
    F = bf.form_matrix
    reasons = []
    if kind == "full":
        verdict = is_markov_generator(bf.B, bf.weights)
        reasons.extend(verdict.reasons)
        desc = "Neumann" if np.abs(F).max() <= INEQ_TOL else "Wentzell-type (full trace)"
    elif kind == "mask":
        idx = list(bf.projector.indices)
        verdict = is_markov_generator(F[np.ix_(idx, idx)])
        reasons.extend(verdict.reasons)
        desc = "mixed Dirichlet-Neumann" if np.abs(F).max() <= INEQ_TOL else "mixed Dirichlet-Wentzell"
    else:
        v = bf.basis()[:, 0]
        if kind == "rank_one" and not _indicator_shaped(v):
            reasons.append("range(Pi) is not stable under the unit contraction")
        b = bf.scalar()
        if b < -INEQ_TOL:
            reasons.append(f"b = {b:.6g} < 0")
        desc = "mean-value" if kind == "mean_value" or _indicator_shaped(v) and np.all(np.abs(v) > 0) else "rank-one"
    markov = not reasons
    ones = np.ones(nb)
    scale = max(1.0, np.abs(F).max())
    rec = markov and bf.projector.contains_constants(nb) and np.abs(F @ ones).max() <= 1e-10 * scale
    return ExtensionClass(markov, rec, markov and not rec, desc, tuple(reasons))


# --- finite-set Markov criteria -----------------------------------------------

def _weighted(M, weights):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ContractViolation("matrix must be square")
    if weights is None:
        return M
    w = _as_weights(weights, M.shape[0])
    return w[:, None] * M


def is_markov_generator(M, weights=None, tol: float = INEQ_TOL) -> MarkovVerdict:
    """Decide whether ``W M`` is the matrix of a Dirichlet form on a finite set.

    True iff every off-diagonal entry is ``<= 0`` and every row sum is
    ``>= 0``.  Both are tested with tolerance ``tol`` relative to
    ``max(1, max|W M|)``.  The first violated condition is reported.
    """
    F = _weighted(M, weights)
    scale = max(1.0, np.abs(F).max())
    if np.abs(F - F.T).max() > 1e-12 * scale:
        raise ContractViolation("W.M is not symmetric")
    thr = tol * scale
    off = F - np.diag(np.diag(F))
    if off.size and off.max() > thr:
        i, j = np.unravel_index(np.argmax(off), off.shape)
        return MarkovVerdict(False, [f"off-diagonal entry ({i}, {j}) = {off[i, j]:.6g} > 0"], ("offdiag", int(i), int(j), float(off[i, j])))
    rows = F.sum(axis=1)
    if rows.min() < -thr:
        i = int(np.argmin(rows))
        return MarkovVerdict(False, [f"row sum {i} = {rows[i]:.6g} < 0"], ("rowsum", i, float(rows[i])))
    return MarkovVerdict(True, [])


def _sym_eig(M, mass):
    """Eigen-decomposition of ``M`` symmetric w.r.t. ``diag(mass)``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[0]
    m = np.ones(n) if mass is None else np.asarray(mass, dtype=float)
    if np.any(m <= 0):
        raise ContractViolation("mass must be positive")
    s = np.sqrt(m)
    S = s[:, None] * M / s[None, :]
    scale = max(1.0, np.abs(S).max())
    if np.abs(S - S.T).max() > 1e-10 * scale:
        raise ContractViolation("matrix is not symmetric w.r.t. the mass")
    try:
        w, U = np.linalg.eigh(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    return w, U, s


def brute_force_markov(
    M,
    times: Sequence[float] = (1e-3, 1e-2, 0.1, 1.0),
    n_samples: int = 32,
    tol: float = BRUTE_TOL,
    seed: int = 0,
    mass=None,
) -> BruteForceVerdict:
    """Check ``0 <= u <= 1  =>  0 <= exp(-t M) u <= 1`` by direct evolution.

    ``M`` is a non-negative operator, symmetric w.r.t. ``diag(mass)``.  The
    test corpus is the constant vector, every coordinate indicator and
    ``n_samples`` seeded uniform vectors.  An entry counts as a violation only
    when it leaves ``[0, 1]`` by more than ``tol``.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    if any(t <= 0 for t in times):
        raise DomainError("times must be positive")
    w, U, s = _sym_eig(M, mass)
    n = w.shape[0]
    rng = np.random.default_rng(seed)
    corpus = np.hstack([np.ones((n, 1)), np.eye(n), rng.uniform(0.0, 1.0, size=(n, n_samples))])
    worst = 0.0
    for t in times:
        ex = np.exp(np.minimum(-t * w, 700.0))
        E = (U * ex[None, :]) @ U.T
        E = E / s[:, None] * s[None, :]
        Y = E @ corpus
        lo = -Y.min()
        hi = Y.max() - 1.0
        worst = max(worst, lo, hi)
        if lo > tol or hi > tol:
            if lo >= hi:
                k = np.unravel_index(np.argmin(Y), Y.shape)
                kind = "negative"
            else:
                k = np.unravel_index(np.argmax(Y), Y.shape)
                kind = "exceeds one"
            return BruteForceVerdict(
                False,
                {"t": float(t), "u": corpus[:, k[1]].copy(), "column": int(k[1]), "entry": int(k[0]), "value": float(Y[k]), "kind": kind},
                float(max(lo, hi)),
                corpus.shape[1],
            )
    return BruteForceVerdict(True, None, float(max(worst, 0.0)), corpus.shape[1])


def beurling_deny_split(M, weights=None, check: bool = True):
    """Split a finite Dirichlet form into jump weights ``J`` and killing ``kappa``.

    ``u^T (W M) u = sum_{i<j} J_ij (u_i - u_j)^2 + sum_i kappa_i u_i^2``.
    """
    F = _weighted(M, weights)
    if check:
        verdict = is_markov_generator(M, weights)
        if not verdict:
            raise ContractViolation("not a Markov form: " + "; ".join(verdict.reasons))
    F = 0.5 * (F + F.T)
    J = np.maximum(-(F - np.diag(np.diag(F))), 0.0)
    kappa = F.sum(axis=1)
    return J, kappa


def reassemble_form(J, kappa) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    return np.diag(J.sum(axis=1) + np.asarray(kappa, dtype=float)) - J


def form_contraction_check(Q, u, tol: float = 1e-10) -> bool:
    """Whether ``F(u_#) <= F(u)`` for the unit contraction ``u_# = (0 v u) ^ 1``."""
    Q = np.asarray(Q, dtype=float)
    u = np.asarray(u, dtype=float)
    Qs = 0.5 * (Q + Q.T)
    lam_min = np.linalg.eigvalsh(Qs).min()
    if lam_min < -1e-10 * max(1.0, np.abs(Qs).max()):
        raise ContractViolation(f"form matrix is not positive semidefinite (min eigenvalue {lam_min:.3g})")
    us = np.clip(u, 0.0, 1.0)
    return bool(us @ Qs @ us <= u @ Qs @ u + tol)
