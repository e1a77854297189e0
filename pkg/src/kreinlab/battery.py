"""Seeded collections of boundary data used by the verification runs.

Random two-point cases keep a margin of at least 0.05 from every Markov
inequality (and rank-one directions at least 0.15 rad from the special
vectors), so the discrete verdict cannot flip under round-off.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .boundary import (
    boundary_geometry,
    jump_killing_B,
    levy_circulant_B,
    mean_value_projector,
    mixed_dn_projector,
    wentzell_B,
)
from .discrete import DiscreteElliptic, dtn_discrete
from .markov import E0, E1, E2, BoundaryForm

__all__ = ["BatteryCase", "named_two_point", "two_point_battery", "loop_battery", "well_posed", "battery_for"]

MARGIN = 0.05
ANGLE_MARGIN = 0.15


@dataclass(frozen=True)
class BatteryCase:
    name: str
    form: BoundaryForm
    family: str


def _p0(ell):
    return np.array([[-1.0, 1.0], [1.0, -1.0]]) / ell


def named_two_point(ell: float = 1.0) -> List[BatteryCase]:
    theta = np.array([[2.0, -0.5], [-0.5, 2.0]])
    P0 = _p0(ell)
    z = np.zeros((2, 2))
    return [
        BatteryCase("neumann", BoundaryForm.full(z), "full"),
        BatteryCase("dirichlet", BoundaryForm.zero(2), "zero"),
        BatteryCase("robin_1", BoundaryForm.full(np.eye(2)), "full"),
        BatteryCase("robin_0.5", BoundaryForm.full(0.5 * np.eye(2)), "full"),
        BatteryCase("krein", BoundaryForm.full(P0), "full"),
        BatteryCase("theta_counterexample", BoundaryForm.full(theta + P0), "full"),
        BatteryCase("conservative_jump_0.5", BoundaryForm.full(-0.5 * P0), "full"),
        BatteryCase("conservative_jump_2", BoundaryForm.full(-2.0 * P0), "full"),
        BatteryCase("periodic", BoundaryForm.rank_one(E0, 0.0), "rank_one"),
        BatteryCase("periodic_killed", BoundaryForm.rank_one(E0, 1.0), "rank_one"),
        BatteryCase("mixed_left", BoundaryForm.rank_one(E1, 0.0), "rank_one"),
        BatteryCase("mixed_right", BoundaryForm.rank_one(E2, 0.0), "rank_one"),
    ]


def _draw(lo, hi, rng):
    """Uniform draw from ``[lo, hi]``."""
    return float(rng.uniform(lo, hi))


def _random_full(rng, markov: bool) -> np.ndarray:
    if markov:
        b12 = 0.0 if rng.uniform() < 0.15 else -_draw(MARGIN, 2.0, rng)
        k1 = 0.0 if rng.uniform() < 0.25 else _draw(MARGIN, 2.0, rng)
        k2 = 0.0 if rng.uniform() < 0.25 else _draw(MARGIN, 2.0, rng)
        return np.array([[-b12 + k1, b12], [b12, -b12 + k2]])
    if rng.uniform() < 0.5:
        b12 = _draw(MARGIN, 2.0, rng)
        b11, b22 = rng.uniform(-1.0, 3.0, size=2)
    else:
        b12 = -_draw(0.0, 2.0, rng)
        b11 = -b12 - _draw(MARGIN, 2.0, rng)
        b22 = -b12 + rng.uniform(-2.0, 2.0)
        if rng.uniform() < 0.5:
            b11, b22 = b22, b11
    return np.array([[b11, b12], [b12, b22]])


def _random_direction(rng, special: bool):
    if special:
        v = [E0, E1, E2][int(rng.integers(3))]
        return v if rng.uniform() < 0.5 else -v
    specials = np.array([np.pi / 4, 0.0, np.pi / 2])
    while True:
        a = rng.uniform(0.0, np.pi)
        d = np.abs(((a - specials[:, None] + np.pi / 2) % np.pi) - np.pi / 2).min()
        if d >= ANGLE_MARGIN:
            return np.array([np.cos(a), np.sin(a)])


def two_point_battery(seed: int = 0, n_random: int = 100, ell: float = 1.0) -> List[BatteryCase]:
    """Named cases plus ``n_random`` seeded random cases over Full and RankOne."""
    rng = np.random.default_rng(seed)
    cases = named_two_point(ell)
    for k in range(n_random):
        markov = bool(rng.uniform() < 0.5)
        if rng.uniform() < 0.6:
            cases.append(BatteryCase(f"full_{k}", BoundaryForm.full(_random_full(rng, markov)), "full"))
        else:
            v = _random_direction(rng, special=markov or rng.uniform() < 0.5)
            if markov:
                b = 0.0 if rng.uniform() < 0.2 else _draw(MARGIN, 3.0, rng)
            else:
                b = -_draw(MARGIN, 2.0, rng) if rng.uniform() < 0.5 else _draw(0.0, 3.0, rng)
            cases.append(BatteryCase(f"rank_one_{k}", BoundaryForm.rank_one(v, b), "rank_one"))
    return cases


def loop_battery(disc: DiscreteElliptic, seed: int = 0) -> List[BatteryCase]:
    """Named boundary data on the rectangle's boundary loop."""
    geom = boundary_geometry(disc)
    nb = disc.nb
    w = disc.weights
    rng = np.random.default_rng(seed)
    mv = mean_value_projector(geom)
    WP0 = w[:, None] * dtn_discrete(disc, 0.0)
    bottom = [i for i in range(nb) if disc.coords[disc.boundary[i], 1] == 0.0]
    J = np.zeros((nb, nb))
    for _ in range(nb):
        i, j = rng.choice(nb, size=2, replace=False)
        J[i, j] = J[j, i] = rng.uniform(0.1, 1.0)
    kappa = np.where(rng.uniform(size=nb) < 0.3, rng.uniform(0.1, 1.0, size=nb), 0.0)
    nu = np.zeros(nb)
    nu[1] = nu[-1] = 0.5
    if geom.uniform:
        levy = [BatteryCase("levy_nn", levy_circulant_B(geom, 0.0, nu), "full")]
    else:
        levy = []
    return [
        BatteryCase("neumann", BoundaryForm.full(np.zeros((nb, nb)), w), "full"),
        BatteryCase("dirichlet", BoundaryForm.zero(nb, w), "zero"),
        BatteryCase("robin_1", BoundaryForm.full(np.eye(nb), w), "full"),
        BatteryCase("krein", BoundaryForm.full(WP0 / w[:, None], w), "full"),
        BatteryCase("conservative_jump_1", BoundaryForm.full(-WP0 / w[:, None], w), "full"),
        BatteryCase("wentzell_local", wentzell_B(geom, 1.0, 0.0, 0.0), "full"),
        BatteryCase("wentzell_fractional", wentzell_B(geom, 0.5, 1.0, 0.0, 0.5), "full"),
        BatteryCase("wentzell_killed", wentzell_B(geom, 0.5, 0.5, 1.0, 0.5), "full"),
        *levy,
        BatteryCase("mean_value_0", mv(0.0), "mean_value"),
        BatteryCase("mean_value_1", mv(1.0), "mean_value"),
        BatteryCase("mixed_bottom", mixed_dn_projector(geom, bottom), "mask"),
        BatteryCase("jump_killing", jump_killing_B(geom, J, kappa), "full"),
    ]


def well_posed(disc: DiscreteElliptic, bf: BoundaryForm, lambdas: Sequence[float] = (0.5, 1.0, 5.0), cond_max: float = 1e10) -> bool:
    """Whether elimination and every Krein middle block are well conditioned."""
    V = bf.basis()
    if V.shape[1] == 0:
        return True
    Y = V.T @ (disc.Q_bb + bf.form_matrix) @ V
    if np.linalg.cond(Y) > cond_max:
        return False
    for lam in lambdas:
        mid = V.T @ (bf.form_matrix - disc.weights[:, None] * dtn_discrete(disc, lam)) @ V
        if np.linalg.cond(mid) > cond_max:
            return False
    return True


def battery_for(disc: DiscreteElliptic, seed: int = 0, n_random: int = 100) -> List[BatteryCase]:
    """Battery matched to the grid, restricted to well-posed cases."""
    if disc.dim == 1:
        cases = two_point_battery(seed, n_random, disc.domain.ell)
    else:
        cases = loop_battery(disc, seed)
    return [c for c in cases if well_posed(disc, c.form)]
