"""Heat semigroups of interior generators and their Markov-type verdicts.

A generator ``A`` acts on interior vectors and is symmetric with respect to
the diagonal mass ``M``.  ``exp(tA)`` is formed from the eigendecomposition of
``M^{1/2} A M^{-1/2}``, so the semigroup law holds to round-off.  Kernels are
densities with respect to ``M``: ``kappa(t, x_i, x_j) = exp(tA)_ij / m_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .discrete import DiscreteElliptic, dirichlet_generator
from .errors import ContractViolation, DomainError, NumericError
from .krein import build_extension, classify_extension
from .markov import BoundaryForm, beurling_deny_split, is_markov_generator

__all__ = [
    "Semigroup",
    "SemigroupReport",
    "SandwichVerdict",
    "SupBoundVerdict",
    "YosidaForm",
    "heat_kernel",
    "markov_verify",
    "verify_extension",
    "sandwich_check",
    "kernel_sup_bound",
    "yosida_form",
]

IRREDUCIBLE_REL = 1e-12
IRREDUCIBLE_T = 0.1


class Semigroup:
    """Spectral representation of ``exp(tA)`` for a mass-symmetric generator.

    Eigenvalues within round-off of zero (``|ev| <= 64 eps ||A||``) are set
    to zero so that conservative semigroups keep ``exp(tA) 1 = 1`` at large
    ``t``.
    """

    def __init__(self, A, mass):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        m = np.asarray(mass, dtype=float).reshape(-1)
        if A.shape != (m.size, m.size):
            raise DomainError("generator and mass sizes differ")
        if np.any(m <= 0):
            raise DomainError("mass must be positive")
        s = np.sqrt(m)
        Sym = s[:, None] * A / s[None, :]
        scale = max(np.abs(Sym).max(), 1e-300)
        if np.abs(Sym - Sym.T).max() > 1e-10 * scale:
            raise ContractViolation("generator is not symmetric w.r.t. the mass")
        try:
            ev, U = np.linalg.eigh(0.5 * (Sym + Sym.T))
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"eigendecomposition failed: {exc}") from exc
        ev = np.where(np.abs(ev) <= 64 * np.finfo(float).eps * np.abs(ev).max(), 0.0, ev)
        self.eigenvalues = ev
        self._U = U
        self._s = s
        self.mass = m

    def matrix(self, t: float) -> np.ndarray:
        if not t > 0:
            raise DomainError("t must be positive")
        ex = np.exp(np.minimum(t * self.eigenvalues, 700.0))
        E = (self._U * ex[None, :]) @ self._U.T
        return E / self._s[:, None] * self._s[None, :]

    def kernel(self, t: float) -> np.ndarray:
        ex = np.exp(np.minimum(t * self.eigenvalues, 700.0))
        K = (self._U * ex[None, :]) @ self._U.T / (self._s[:, None] * self._s[None, :])
        return 0.5 * (K + K.T)

    def apply(self, t: float, u) -> np.ndarray:
        return self.matrix(t) @ np.asarray(u, dtype=float)

    def trace(self, t: float) -> float:
        return float(np.exp(t * self.eigenvalues).sum())


def heat_kernel(A, mass, t: float) -> np.ndarray:
    """Symmetric kernel of ``exp(tA)`` with respect to the mass ``M``."""
    if not t > 0:
        raise DomainError("t must be positive")
    return Semigroup(A, mass).kernel(t)


@dataclass
class SemigroupReport:
    """Markov-type verdicts of a semigroup with numeric witnesses.

    ``classification`` is ``"recurrent"`` or ``"transient"`` for Markov
    semigroups and ``None`` otherwise.  ``flagged`` is set when the form
    criterion and the semigroup disagree about conservativeness.
    """

    positivity_preserving: bool
    positivity_witness: Optional[dict]
    sub_markov: bool
    sub_markov_witness: Optional[dict]
    conservative: bool
    conservative_deviation: float
    resolvent_deviation: float
    irreducible: bool
    min_kernel_entry: float
    classification: Optional[str]
    times_checked: tuple
    tolerance: float
    conservative_tolerance: float
    flagged: bool = False
    notes: list = field(default_factory=list)

    @property
    def markovian(self) -> bool:
        return self.positivity_preserving and self.sub_markov

    def to_dict(self) -> dict:
        strip = lambda w: None if w is None else {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in w.items()}
        return {
            "markovian": self.markovian,
            "positivity_preserving": self.positivity_preserving,
            "positivity_witness": strip(self.positivity_witness),
            "sub_markov": self.sub_markov,
            "sub_markov_witness": strip(self.sub_markov_witness),
            "conservative": self.conservative,
            "conservative_deviation": self.conservative_deviation,
            "resolvent_deviation": self.resolvent_deviation,
            "irreducible": self.irreducible,
            "min_kernel_entry": self.min_kernel_entry,
            "classification": self.classification,
            "times_checked": list(self.times_checked),
            "tolerance": self.tolerance,
            "flagged": self.flagged,
            "notes": list(self.notes),
        }


def markov_verify(
    A,
    mass,
    times: Sequence[float] = (0.01, 0.1, 1.0),
    n_samples: int = 32,
    seed: int = 0,
    tol: float = 1e-8,
    conservative_tol: float = 1e-10,
    recurrent: Optional[bool] = None,
) -> SemigroupReport:
    """Check ``0 <= u <= 1 => 0 <= exp(tA) u <= 1`` and related properties.

    Parameters
    ----------
    recurrent : bool, optional
        Verdict of the form criterion (the extension form annihilates the
        constants).  When omitted, ``A 1 = 0`` is used, which is the same
        criterion expressed through the generator.
    """
    sg = Semigroup(A, mass)
    n = sg.mass.size
    rng = np.random.default_rng(seed)
    corpus = np.hstack([np.ones((n, 1)), np.eye(n), rng.uniform(0.0, 1.0, size=(n, n_samples))])
    pos_w = sub_w = None
    dev = 0.0
    for t in times:
        E = sg.matrix(t)
        Y = E @ corpus
        dev = max(dev, float(np.abs(Y[:, 0] - 1.0).max()))
        if pos_w is None and Y.min() < -tol:
            i, j = np.unravel_index(np.argmin(Y), Y.shape)
            pos_w = {"t": float(t), "u": corpus[:, j].copy(), "entry": int(i), "value": float(Y[i, j])}
        if sub_w is None and Y.max() > 1 + tol:
            i, j = np.unravel_index(np.argmax(Y), Y.shape)
            sub_w = {"t": float(t), "u": corpus[:, j].copy(), "entry": int(i), "value": float(Y[i, j])}
    conservative = dev <= conservative_tol
    lam = 1.0
    R1 = np.linalg.solve(-np.asarray(A, dtype=float) + lam * np.eye(n), np.ones(n))
    res_dev = float(np.abs(lam * R1 - 1.0).max())
    K = sg.kernel(IRREDUCIBLE_T)
    kmin = float(K.min())
    irreducible = kmin > IRREDUCIBLE_REL * K.max()
    notes = []
    if recurrent is None:
        A = np.asarray(A, dtype=float)
        recurrent = bool(np.abs(A @ np.ones(n)).max() <= 1e-10 * max(1.0, np.abs(A).max()))
    flagged = False
    markov = pos_w is None and sub_w is None
    if markov and recurrent != conservative:
        flagged = True
        notes.append(f"form criterion says recurrent={recurrent} but max|exp(tA)1 - 1| = {dev:.3g}")
    if markov and (res_dev <= conservative_tol) != conservative:
        notes.append(f"resolvent criterion deviation {res_dev:.3g} disagrees with the semigroup")
    classification = ("recurrent" if recurrent else "transient") if markov else None
    return SemigroupReport(
        positivity_preserving=pos_w is None,
        positivity_witness=pos_w,
        sub_markov=sub_w is None,
        sub_markov_witness=sub_w,
        conservative=conservative and markov,
        conservative_deviation=dev,
        resolvent_deviation=res_dev,
        irreducible=bool(irreducible),
        min_kernel_entry=kmin,
        classification=classification,
        times_checked=tuple(float(t) for t in times),
        tolerance=tol,
        conservative_tolerance=conservative_tol,
        flagged=flagged,
        notes=notes,
    )


def verify_extension(disc: DiscreteElliptic, bf: BoundaryForm, **opts) -> SemigroupReport:
    """:func:`markov_verify` on the extension generator, with the form-level recurrence verdict."""
    op = build_extension(disc, bf)
    cls = op.classification
    return markov_verify(op.generator, disc.mass, recurrent=cls.conservative_recurrent if cls.markovian else None, **opts)


@dataclass
class SandwichVerdict:
    ok: bool
    lower_ok: bool
    upper_ok: bool
    worst_lower: float
    worst_upper: float
    times: tuple
    slack: float


def sandwich_check(
    disc: DiscreteElliptic, bf: BoundaryForm, t_list: Sequence[float] = (0.05, 0.5), slack: float = 1e-10
) -> SandwichVerdict:
    """Entrywise ``kappa_D <= kappa_A <= kappa_N`` at each time, on interior nodes.

    ``worst_lower`` is ``min(kappa_A - kappa_D)`` and ``worst_upper`` is
    ``min(kappa_N - kappa_A)``; each side passes when it is ``>= -slack``.
    """
    if not classify_extension(disc, bf).markovian:
        raise ContractViolation("the kernel sandwich is only claimed for Markovian extensions")
    A = build_extension(disc, bf).generator
    N = build_extension(disc, BoundaryForm.full(np.zeros((disc.nb, disc.nb)), disc.weights)).generator
    D = dirichlet_generator(disc)
    sgA, sgN, sgD = Semigroup(A, disc.mass), Semigroup(N, disc.mass), Semigroup(D, disc.mass)
    lo = up = np.inf
    for t in t_list:
        kA = sgA.kernel(t)
        lo = min(lo, float((kA - sgD.kernel(t)).min()))
        up = min(up, float((sgN.kernel(t) - kA).min()))
    return SandwichVerdict(lo >= -slack and up >= -slack, lo >= -slack, up >= -slack, lo, up, tuple(t_list), slack)


@dataclass
class SupBoundVerdict:
    ok: bool
    c0_min: float
    c0: Optional[float]
    c1: float
    t: float


def kernel_sup_bound(
    disc: DiscreteElliptic, bf: BoundaryForm, t: float, c0: Optional[float] = None, c1: float = 1.5
) -> SupBoundVerdict:
    """Check ``kappa_A(t,x,y) <= c0 max(t^{-d/2}, 1) exp(-|x-y|^2 / (4 c1 mu1 t))``.

    Returns the smallest feasible ``c0``; the verdict passes when the given
    ``c0`` is at least that value (always, when ``c0`` is omitted).
    """
    if not 1.0 < c1 < 2.0:
        raise DomainError("c1 must lie in (1, 2)")
    if not t > 0:
        raise DomainError("t must be positive")
    if not classify_extension(disc, bf).markovian:
        raise ContractViolation("the kernel bound is only claimed for Markovian extensions")
    A = build_extension(disc, bf).generator
    K = heat_kernel(A, disc.mass, t)
    x = disc.interior_coords
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=-1)
    envelope = max(t ** (-disc.dim / 2), 1.0) * np.exp(-d2 / (4 * c1 * disc.mu1 * t))
    c0_min = float((K / envelope).max())
    return SupBoundVerdict(c0 is None or c0 >= c0_min, c0_min, c0, c1, t)


@dataclass
class YosidaForm:
    """Bounded form ``lambda M (I - lambda R_lambda)`` and its jump/killing split.

    ``killing_density`` is the killing part per unit mass divided by
    ``lambda``; it lies in ``[0, 1]`` for Markov generators.
    """

    matrix: np.ndarray
    lam: float
    split_ok: bool
    jump: Optional[np.ndarray]
    killing: Optional[np.ndarray]
    killing_density: Optional[np.ndarray]
    reason: str = ""

    def __call__(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ self.matrix @ u)


def yosida_form(A, mass, lam: float) -> YosidaForm:
    if not lam > 0:
        raise DomainError("lambda must be positive")
    A = np.asarray(A, dtype=float)
    m = np.asarray(mass, dtype=float)
    n = m.size
    R = np.linalg.solve(-A + lam * np.eye(n), np.eye(n))
    F = lam * m[:, None] * (np.eye(n) - lam * R)
    F = 0.5 * (F + F.T)
    verdict = is_markov_generator(F)
    if not verdict.ok:
        return YosidaForm(F, lam, False, None, None, None, "; ".join(verdict.reasons))
    J, kappa = beurling_deny_split(F, check=False)
    return YosidaForm(F, lam, True, J, kappa, kappa / (lam * m))
