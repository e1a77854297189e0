"""Conservative finite-volume discretization of ``div(a grad)``.

Two layouts are provided.

* Interval ``(0, ell)``: ``n`` cells of width ``h = ell / n`` with one unknown
  at each cell centre, plus the two endpoints as boundary nodes joined to the
  outer cell centres through half-cells.  Endpoint weights are 1.
* Rectangle ``(0, Lx) x (0, Ly)``: vertex-centred grid with ``nx x ny``
  interior nodes.  Every perimeter node, corners included, is a boundary node;
  the perimeter is ordered counterclockwise from ``(0, 0)``.  Boundary weights
  are arc lengths (mean of the two adjacent perimeter segments).

The stiffness matrix ``Q`` is the Gram matrix of the Neumann form
``u -> sum_edges c_e (u_i - u_j)^2`` over all nodes, so ``Q 1 = 0`` exactly.
Only interior nodes carry mass; boundary values enter through ``Q_ib``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg as sla
from scipy import sparse

from .errors import DomainError, NumericError

__all__ = [
    "COEFFICIENTS",
    "Domain1D",
    "Domain2D",
    "DiscreteElliptic",
    "assemble",
    "dirichlet_generator",
    "dirichlet_resolvent",
    "poisson_discrete",
    "poisson_adjoint",
    "flux_trace",
    "interior_operator",
    "dtn_discrete",
    "harmonic_extension",
    "plim_sequence",
    "spd_solve",
]

MAX_N_1D = 4096
MAX_N_2D = 64

COEFFICIENTS = {
    "constant": (lambda x: np.ones_like(x), lambda x, y: np.ones_like(x)),
    "smooth": (
        lambda x: 1.0 + 0.5 * np.sin(2 * np.pi * x),
        lambda x, y: 1.0 + 0.5 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y),
    ),
    "layered": (
        lambda x: np.where(x < 0.5, 1.0, 4.0),
        lambda x, y: np.where(y < 0.5, 1.0, 4.0),
    ),
}


def _coefficient(a, dim):
    if a is None:
        return COEFFICIENTS["constant"][dim - 1]
    if isinstance(a, str):
        if a not in COEFFICIENTS:
            raise DomainError(f"unknown coefficient preset {a!r}; choose from {sorted(COEFFICIENTS)}")
        return COEFFICIENTS[a][dim - 1]
    if np.isscalar(a):
        c = float(a)
        return (lambda x: np.full_like(x, c)) if dim == 1 else (lambda x, y: np.full_like(x, c))
    if callable(a):
        return a
    raise DomainError("coefficient must be a preset name, a number or a callable")


def _check_ellipticity(vals, mu0, mu1):
    vals = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise DomainError("coefficient has non-finite samples")
    lo = vals.min() if mu0 is None else mu0
    hi = vals.max() if mu1 is None else mu1
    if not lo > 0:
        raise DomainError(f"ellipticity lower bound must be positive, got {lo:g}")
    if vals.min() < lo * (1 - 1e-12) or vals.max() > hi * (1 + 1e-12):
        raise DomainError(f"coefficient leaves [{lo:g}, {hi:g}]: range [{vals.min():g}, {vals.max():g}]")
    return float(lo), float(hi)


@dataclass(frozen=True)
class Domain1D:
    """Interval ``(0, ell)`` split into ``n`` cells."""

    ell: float = 1.0
    n: int = 100
    a: Union[str, float, Callable, None] = "constant"
    mu0: Optional[float] = None
    mu1: Optional[float] = None

    def __post_init__(self):
        if not self.ell > 0:
            raise DomainError("ell must be positive")
        if int(self.n) != self.n or not 1 <= self.n <= MAX_N_1D:
            raise DomainError(f"n must be an integer in [1, {MAX_N_1D}]")
        mids = np.linspace(0.0, self.ell, 2 * self.n + 1)
        lo, hi = _check_ellipticity(_coefficient(self.a, 1)(mids), self.mu0, self.mu1)
        object.__setattr__(self, "mu0", lo)
        object.__setattr__(self, "mu1", hi)


@dataclass(frozen=True)
class Domain2D:
    """Rectangle ``(0, Lx) x (0, Ly)`` with ``nx x ny`` interior nodes."""

    Lx: float = 1.0
    Ly: float = 1.0
    nx: int = 16
    ny: int = 16
    a: Union[str, float, Callable, None] = "constant"
    mu0: Optional[float] = None
    mu1: Optional[float] = None

    def __post_init__(self):
        if not (self.Lx > 0 and self.Ly > 0):
            raise DomainError("side lengths must be positive")
        for m in (self.nx, self.ny):
            if int(m) != m or not 3 <= m <= MAX_N_2D:
                raise DomainError(f"grid counts must be integers in [3, {MAX_N_2D}]")
        X, Y = np.meshgrid(np.linspace(0, self.Lx, 2 * self.nx + 3), np.linspace(0, self.Ly, 2 * self.ny + 3), indexing="ij")
        lo, hi = _check_ellipticity(_coefficient(self.a, 2)(X, Y), self.mu0, self.mu1)
        object.__setattr__(self, "mu0", lo)
        object.__setattr__(self, "mu1", hi)


@dataclass(frozen=True, eq=False)
class DiscreteElliptic:
    """Assembled stiffness, mass and trace data over interior and boundary nodes.

    Attributes
    ----------
    Q : (N, N) array
        Neumann stiffness over all nodes in global order.
    interior, boundary : int arrays
        Global indices of interior nodes and of boundary nodes (boundary in
        loop order).
    mass : (ni,) array
        Interior cell volumes.
    weights : (nb,) array
        Boundary quadrature weights.
    coords : (N, d) array
        Node positions.
    arc : (nb,) array
        Arc-length coordinate of each boundary node (1D: 0 and ell).
    """

    Q: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    mass: np.ndarray
    weights: np.ndarray
    coords: np.ndarray
    arc: np.ndarray
    dim: int
    domain: Union[Domain1D, Domain2D]
    perimeter: float
    _blocks: dict = field(default_factory=dict, repr=False)

    @property
    def ni(self) -> int:
        return self.interior.size

    @property
    def nb(self) -> int:
        return self.boundary.size

    @property
    def N(self) -> int:
        return self.Q.shape[0]

    def _block(self, key):
        if key not in self._blocks:
            rows = self.interior if key[0] == "i" else self.boundary
            cols = self.interior if key[1] == "i" else self.boundary
            self._blocks[key] = np.ascontiguousarray(self.Q[np.ix_(rows, cols)])
        return self._blocks[key]

    @property
    def Q_ii(self):
        return self._block("ii")

    @property
    def Q_ib(self):
        return self._block("ib")

    @property
    def Q_bi(self):
        return self._block("bi")

    @property
    def Q_bb(self):
        return self._block("bb")

    @property
    def mu1(self) -> float:
        return self.domain.mu1

    @property
    def interior_coords(self) -> np.ndarray:
        return self.coords[self.interior]

    def embed(self, u_int, u_bnd=None) -> np.ndarray:
        """Global vector from interior values and boundary values (default 0)."""
        u = np.zeros(self.N) if np.ndim(u_int) == 1 else np.zeros((self.N,) + np.shape(u_int)[1:])
        u[self.interior] = u_int
        if u_bnd is not None:
            u[self.boundary] = u_bnd
        return u

    def trace(self, u) -> np.ndarray:
        """Restriction of a global vector to the boundary nodes."""
        return np.asarray(u)[self.boundary]


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def _assemble_1d(dom: Domain1D) -> DiscreteElliptic:
    n, ell = dom.n, dom.ell
    h = ell / n
    a = _coefficient(dom.a, 1)
    x = np.r_[0.0, (np.arange(n) + 0.5) * h, ell]
    ax = a(x)
    lengths = np.diff(x)
    cond = _harmonic(ax[:-1], ax[1:]) / lengths
    i = np.arange(n + 1)
    C = sparse.coo_matrix((cond, (i, i + 1)), shape=(n + 2, n + 2))
    C = (C + C.T).tocsr()
    Q = (sparse.diags(np.asarray(C.sum(axis=1)).ravel()) - C).toarray()
    return DiscreteElliptic(
        Q=Q,
        interior=np.arange(1, n + 1),
        boundary=np.array([0, n + 1]),
        mass=np.full(n, h),
        weights=np.ones(2),
        coords=x[:, None],
        arc=np.array([0.0, ell]),
        dim=1,
        domain=dom,
        perimeter=2.0,
    )


def _loop_indices(nx, ny):
    """Global indices (row-major over (i, j), shape (nx+2, ny+2)) along the perimeter."""
    X, Y = nx + 1, ny + 1
    idx = lambda i, j: i * (ny + 2) + j
    loop = [idx(i, 0) for i in range(0, X)]
    loop += [idx(X, j) for j in range(0, Y)]
    loop += [idx(i, Y) for i in range(X, 0, -1)]
    loop += [idx(0, j) for j in range(Y, 0, -1)]
    return np.array(loop)


def _assemble_2d(dom: Domain2D) -> DiscreteElliptic:
    nx, ny, Lx, Ly = dom.nx, dom.ny, dom.Lx, dom.Ly
    hx, hy = Lx / (nx + 1), Ly / (ny + 1)
    a = _coefficient(dom.a, 2)
    xs = np.arange(nx + 2) * hx
    ys = np.arange(ny + 2) * hy
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    A = a(X, Y)
    gid = np.arange((nx + 2) * (ny + 2)).reshape(nx + 2, ny + 2)
    rows, cols, vals = [], [], []
    # horizontal edges (i, j) -- (i+1, j); dual segment is vertical
    dual = np.full(ny + 2, hy)
    dual[[0, -1]] = hy / 2
    c = _harmonic(A[:-1, :], A[1:, :]) * dual[None, :] / hx
    rows.append(gid[:-1, :].ravel())
    cols.append(gid[1:, :].ravel())
    vals.append(c.ravel())
    # vertical edges (i, j) -- (i, j+1)
    dual = np.full(nx + 2, hx)
    dual[[0, -1]] = hx / 2
    c = _harmonic(A[:, :-1], A[:, 1:]) * dual[:, None] / hy
    rows.append(gid[:, :-1].ravel())
    cols.append(gid[:, 1:].ravel())
    vals.append(c.ravel())
    r, cc, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    N = gid.size
    C = sparse.coo_matrix((v, (r, cc)), shape=(N, N))
    C = (C + C.T).tocsr()
    Q = (sparse.diags(np.asarray(C.sum(axis=1)).ravel()) - C).toarray()

    interior = gid[1:-1, 1:-1].ravel()
    boundary = _loop_indices(nx, ny)
    coords = np.column_stack([X.ravel(), Y.ravel()])
    pts = coords[boundary]
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    weights = 0.5 * (seg + np.roll(seg, 1))
    arc = np.r_[0.0, np.cumsum(seg)[:-1]]
    return DiscreteElliptic(
        Q=Q,
        interior=interior,
        boundary=boundary,
        mass=np.full(interior.size, hx * hy),
        weights=weights,
        coords=coords,
        arc=arc,
        dim=2,
        domain=dom,
        perimeter=float(seg.sum()),
    )


def assemble(domain: Union[Domain1D, Domain2D]) -> DiscreteElliptic:
    """Assemble the stiffness, mass and boundary data of a domain."""
    if isinstance(domain, Domain1D):
        return _assemble_1d(domain)
    if isinstance(domain, Domain2D):
        return _assemble_2d(domain)
    raise DomainError(f"unsupported domain type {type(domain).__name__}")


def spd_solve(A: np.ndarray, B: np.ndarray, refine: int = 1) -> np.ndarray:
    """Solve with a symmetric positive definite matrix via Cholesky.

    ``refine`` steps of iterative refinement keep small solution entries
    accurate to a few ulps, which the boundary-flux formulas rely on.
    """
    try:
        factor = sla.cho_factor(A, check_finite=False)
        X = sla.cho_solve(factor, B, check_finite=False)
        for _ in range(refine):
            X = X + sla.cho_solve(factor, B - A @ X, check_finite=False)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise NumericError(f"singular or indefinite system: {exc}") from exc
    if not np.all(np.isfinite(X)):
        raise NumericError("solve produced non-finite values")
    return X


def _check_lambda(lam):
    if not (np.isfinite(lam) and lam >= 0):
        raise DomainError("lambda must be a nonnegative finite number")


def dirichlet_generator(disc: DiscreteElliptic) -> np.ndarray:
    """``A_D = -M^{-1} Q_ii``, symmetric w.r.t. the interior mass."""
    return -disc.Q_ii / disc.mass[:, None]


def dirichlet_resolvent(disc: DiscreteElliptic, lam: float) -> np.ndarray:
    """``(-A_D + lambda)^{-1} = (Q_ii + lambda M)^{-1} M``."""
    _check_lambda(lam)
    return spd_solve(disc.Q_ii + lam * np.diag(disc.mass), np.diag(disc.mass))


def poisson_discrete(disc: DiscreteElliptic, lam: float) -> np.ndarray:
    """Map boundary values ``h`` to the interior solution of ``(Q_ii + lambda M) u = -Q_ib h``."""
    _check_lambda(lam)
    return -spd_solve(disc.Q_ii + lam * np.diag(disc.mass), disc.Q_ib)


def poisson_adjoint(disc: DiscreteElliptic, lam: float) -> np.ndarray:
    """Adjoint of the Poisson operator from ``L^2(M)`` to ``L^2(W)``: ``W^{-1} K^T M``."""
    K = poisson_discrete(disc, lam)
    return (K.T * disc.mass[None, :]) / disc.weights[:, None]


def flux_trace(disc: DiscreteElliptic) -> np.ndarray:
    """Inward conormal flux ``-W^{-1} (Q u)|_boundary`` as an ``(nb, N)`` matrix.

    With ``L = interior_operator(disc)`` the identity
    ``<-L u, v>_M = u^T Q v + <flux(u), v|_boundary>_W`` holds exactly.
    """
    return -disc.Q[disc.boundary, :] / disc.weights[:, None]


def interior_operator(disc: DiscreteElliptic) -> np.ndarray:
    """``div(a grad)`` at interior nodes for a global vector: ``-M^{-1} (Q u)|_interior``."""
    return -disc.Q[disc.interior, :] / disc.mass[:, None]


def _sum_except_each(K: np.ndarray) -> np.ndarray:
    """Column ``b`` holds the row sums of ``K`` without column ``b`` (no subtraction)."""
    pre = np.cumsum(np.hstack([np.zeros((K.shape[0], 1)), K[:, :-1]]), axis=1)
    suf = np.cumsum(K[:, ::-1], axis=1)[:, ::-1]
    suf = np.hstack([suf[:, 1:], np.zeros((K.shape[0], 1))])
    return pre + suf


def dtn_discrete(disc: DiscreteElliptic, lam: float) -> np.ndarray:
    """Dirichlet-to-Neumann matrix ``-W^{-1}(Q_bb - Q_bi (Q_ii + lambda M)^{-1} Q_ib)``.

    The Schur complement is formed from edge conductances and nonnegative
    Poisson weights only.  Its diagonal uses ``1 - (K h)_j = lambda (R^D 1)_j +
    sum_{c != b} K_jc`` instead of subtracting nearly equal numbers, so that
    exactly reproduced cases (linear data in 1D) stay exact to round-off.
    """
    K = poisson_discrete(disc, lam)
    C_bi = -disc.Q_bi
    C_bb = -(disc.Q_bb - np.diag(np.diag(disc.Q_bb)))
    if lam > 0:
        deficit = spd_solve(disc.Q_ii + lam * np.diag(disc.mass), lam * disc.mass)
    else:
        deficit = np.zeros(disc.ni)
    S = -C_bb - C_bi @ K
    others = _sum_except_each(K) + deficit[:, None]
    S[np.diag_indices_from(S)] = np.einsum("bj,jb->b", C_bi, others) + C_bb.sum(axis=1)
    S = 0.5 * (S + S.T)
    return -S / disc.weights[:, None]


def harmonic_extension(disc: DiscreteElliptic, h, lam: float = 0.0) -> np.ndarray:
    """Global vector equal to ``h`` on the boundary and ``K_lambda h`` inside."""
    h = np.asarray(h, dtype=float)
    return disc.embed(poisson_discrete(disc, lam) @ h, h)


def plim_sequence(disc: DiscreteElliptic, h, alphas=(1e2, 1e3, 1e4)) -> np.ndarray:
    """``alpha (<K_0 h, K_alpha h>_M - <1, K_alpha h^2>_M)`` for each ``alpha``.

    The values tend to ``(P_0 h, h)_W`` as ``alpha`` grows.
    """
    h = np.asarray(h, dtype=float)
    k0 = poisson_discrete(disc, 0.0) @ h
    out = []
    for alpha in alphas:
        Ka = poisson_discrete(disc, alpha)
        out.append(alpha * (k0 @ (disc.mass * (Ka @ h)) - disc.mass @ (Ka @ h**2)))
    return np.array(out)
