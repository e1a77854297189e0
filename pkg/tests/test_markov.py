import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from kreinlab.errors import ContractViolation, DomainError
from kreinlab.interval import IntervalConfig, dtn_exact
from kreinlab.markov import (
    E0,
    E1,
    E2,
    BoundaryForm,
    BoundaryProjector,
    beurling_deny_split,
    brute_force_markov,
    classify,
    classify_2d,
    form_contraction_check,
    is_markov_generator,
    reassemble_form,
)

P0 = dtn_exact(0.0, IntervalConfig(1.0))
THETA = np.array([[2.0, -0.5], [-0.5, 2.0]])


def random_symmetric(rng, n, markov):
    """Symmetric matrix kept >= 0.05 away from the Markov boundary either way."""
    J = rng.uniform(0.05, 1.0, size=(n, n)) * (rng.uniform(size=(n, n)) < 0.6)
    J = np.triu(J, 1)
    J = J + J.T
    kappa = rng.uniform(0.05, 1.0, size=n) * (rng.uniform(size=n) < 0.5)
    F = reassemble_form(J, kappa)
    if markov:
        return F
    i, j = rng.choice(n, size=2, replace=False)
    if rng.uniform() < 0.5:
        # push one off-diagonal entry positive
        bump = F[i, j] * -1 + rng.uniform(0.05, 1.0)
        F[i, j] += bump
        F[j, i] += bump
    else:
        # make one row sum negative through the diagonal
        F[i, i] -= F[i].sum() + rng.uniform(0.05, 1.0)
    return F


class TestProjector:
    def test_rank_one_norm(self):
        with pytest.raises(DomainError):
            BoundaryProjector.rank_one([1.0, 1.0])

    def test_mask_nonempty(self):
        with pytest.raises(DomainError):
            BoundaryProjector.mask([])

    def test_mean_value_positive(self):
        with pytest.raises(DomainError):
            BoundaryProjector.mean_value([1.0, 0.0])

    @pytest.mark.parametrize(
        "proj",
        [
            BoundaryProjector.full(),
            BoundaryProjector.zero(),
            BoundaryProjector.mask([0, 2]),
            BoundaryProjector.rank_one(np.array([1.0, 2.0, 2.0]) / 3),
            BoundaryProjector.mean_value([0.5, 1.0, 2.0]),
        ],
    )
    def test_weighted_orthogonal_projector(self, proj):
        w = np.array([0.5, 1.0, 2.0])
        P = proj.matrix(w)
        np.testing.assert_allclose(P @ P, P, atol=1e-14)
        np.testing.assert_allclose(w[:, None] * P, (w[:, None] * P).T, atol=1e-14)


class TestBoundaryForm:
    def test_asymmetric_rejected(self):
        with pytest.raises(DomainError):
            BoundaryForm.full([[1.0, 2.0], [0.0, 1.0]])

    def test_weighted_symmetry(self):
        w = np.array([1.0, 2.0])
        F = np.array([[1.0, -0.5], [-0.5, 3.0]])
        bf = BoundaryForm.full(F / w[:, None], w)
        np.testing.assert_allclose(bf.form_matrix, F)

    def test_range_invariance(self):
        with pytest.raises(DomainError):
            BoundaryForm(BoundaryProjector.rank_one(E1), np.eye(2))

    def test_mean_value_scalar(self):
        bf = BoundaryForm.mean_value(2.0, [1.0, 3.0])
        assert bf.scalar() == pytest.approx(2.0)
        assert bf.evaluate(np.ones(2)) == pytest.approx(2.0 * 4.0)

    def test_round_trip(self):
        bf = BoundaryForm.rank_one(E0, 0.3)
        back = BoundaryForm.from_dict(bf.to_dict())
        np.testing.assert_allclose(back.B, bf.B)
        assert back.projector.kind == "rank_one"


class TestClassify2D:
    def test_neumann(self):
        c = classify_2d(BoundaryForm.full(np.zeros((2, 2))), 1.0)
        assert (c.markovian, c.conservative_recurrent, c.description) == (True, True, "Neumann")

    def test_krein(self):
        c = classify_2d(BoundaryForm.full(P0), 1.0)
        assert not c.markovian
        assert c.description == "Krein extension"
        assert any("b12" in r and "> 0" in r for r in c.reasons)

    def test_generic_rank_one(self):
        c = classify_2d(BoundaryForm.rank_one([0.6, 0.8], 1.0), 1.0)
        assert not c.markovian

    def test_dirichlet(self):
        c = classify_2d(BoundaryForm.zero(), 1.0)
        assert c.markovian and c.transient and c.description == "Dirichlet"

    @pytest.mark.parametrize(
        "v, b, markov, recurrent",
        [(E0, 0.0, True, True), (E0, 1.0, True, False), (-E0, 0.0, True, True), (E1, 0.0, True, False),
         (E2, 2.0, True, False), (E1, -0.5, False, False), (E0, -0.1, False, False)],
    )
    def test_rank_one_cases(self, v, b, markov, recurrent):
        c = classify_2d(BoundaryForm.rank_one(v, b), 1.0)
        assert (c.markovian, c.conservative_recurrent) == (markov, recurrent)

    @pytest.mark.parametrize(
        "B, markov",
        [([[1, 0], [0, 1]], True), ([[1, -1], [-1, 1]], True), ([[2, -1], [-1, 0.5]], False),
         ([[1, 0.2], [0.2, 1]], False), ([[0.5, -0.5], [-0.5, 3]], True)],
    )
    def test_full_inequalities(self, B, markov):
        assert classify_2d(BoundaryForm.full(np.array(B, float)), 1.0).markovian is markov

    def test_theta_counterexample(self):
        assert is_markov_generator(THETA).ok
        B = THETA + P0
        np.testing.assert_allclose(B, [[1.0, 0.5], [0.5, 1.0]])
        assert not classify_2d(BoundaryForm.full(B), 1.0).markovian

    @given(
        b11=st.floats(-3, 3), b12=st.floats(-3, 3), b22=st.floats(-3, 3), c=st.floats(1e-3, 1e3),
    )
    def test_scale_invariance(self, b11, b12, b22, c):
        B = np.array([[b11, b12], [b12, b22]])
        bf = BoundaryForm.full(B)
        # stay off the tolerance band of each inequality
        margins = np.array([b11 + b12, b12 + b22, b12])
        if np.any(np.abs(margins) < 1e-9):
            return
        assert classify_2d(bf, 1.0).markovian == classify_2d(bf.scaled(c), 1.0).markovian

    @given(b11=st.floats(-3, 3), b12=st.floats(-3, 3), b22=st.floats(-3, 3))
    def test_agrees_with_finite_criterion(self, b11, b12, b22):
        B = np.array([[b11, b12], [b12, b22]])
        assert classify_2d(BoundaryForm.full(B), 1.0).markovian == is_markov_generator(B).ok

    @given(b=st.floats(0, 5))
    def test_dichotomy(self, b):
        for bf in (BoundaryForm.full(-b * P0), BoundaryForm.rank_one(E0, b), BoundaryForm.full(b * np.eye(2))):
            c = classify_2d(bf, 1.0)
            assert c.markovian
            assert c.conservative_recurrent != c.transient


class TestClassifyGeneral:
    def test_mean_value(self):
        w = np.array([0.5, 1.0, 1.0, 0.5])
        assert classify(BoundaryForm.mean_value(0.0, w)).conservative_recurrent
        assert classify(BoundaryForm.mean_value(1.0, w)).transient

    def test_rank_one_non_indicator(self):
        v = np.array([1.0, 2.0, 2.0]) / 3
        assert not classify(BoundaryForm.rank_one(v, 1.0)).markovian

    def test_rank_one_indicator(self):
        v = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)
        c = classify(BoundaryForm.rank_one(v, 0.0))
        assert c.markovian and c.transient

    def test_mask(self):
        c = classify(BoundaryForm.mask([0, 1], 3, [[1.0, -1.0], [-1.0, 1.0]]))
        assert c.markovian and c.transient


class TestIsMarkovGenerator:
    @pytest.mark.parametrize(
        "M, expected",
        [([[1, -1], [-1, 1]], True), ([[1, 1], [1, 1]], False), ([[2, -0.5], [-0.5, 2]], True), ([[1, -2], [-2, 1]], False)],
    )
    def test_examples(self, M, expected):
        assert is_markov_generator(np.array(M, float)).ok is expected

    def test_asymmetric(self):
        with pytest.raises(ContractViolation):
            is_markov_generator(np.array([[1.0, -1.0], [0.0, 1.0]]))

    def test_reason_names_entry(self):
        v = is_markov_generator(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert v.witness[0] == "offdiag" and "(0, 1)" in v.reasons[0]


class TestBruteForce:
    def test_diagonal(self):
        assert brute_force_markov(np.diag([1.0, 2.0])).ok

    def test_positive_offdiagonal(self):
        v = brute_force_markov(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert not v.ok
        u = v.witness["u"]
        out = expm(-v.witness["t"] * np.array([[1.0, 1.0], [1.0, 1.0]])) @ u
        assert out.min() < -1e-8 or out.max() > 1 + 1e-8

    def test_theta_extension(self):
        assert not brute_force_markov(THETA + P0).ok

    def test_mass_symmetrized(self):
        m = np.array([1.0, 3.0])
        F = np.array([[1.0, -1.0], [-1.0, 1.0]])
        assert brute_force_markov(F / m[:, None], mass=m).ok

    def test_matches_scipy_expm(self):
        rng = np.random.default_rng(3)
        F = random_symmetric(rng, 5, True)
        t = 0.37
        E = expm(-t * F)
        v = brute_force_markov(F, times=(t,))
        assert v.ok and v.max_violation <= 1e-8
        assert E.min() >= -1e-12

    def test_seeded(self):
        rng = np.random.default_rng(0)
        F = random_symmetric(rng, 6, False)
        a = brute_force_markov(F, seed=4)
        b = brute_force_markov(F, seed=4)
        assert a.ok == b.ok and a.max_violation == b.max_violation

    @pytest.mark.parametrize("seed", range(4))
    def test_agrees_with_criterion(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            F = random_symmetric(rng, n, bool(rng.uniform() < 0.5))
            assert is_markov_generator(F).ok == brute_force_markov(F, seed=seed).ok


class TestBeurlingDeny:
    def test_example(self):
        J, kappa = beurling_deny_split(np.array([[2.0, -1.0], [-1.0, 3.0]]))
        assert J[0, 1] == 1.0
        np.testing.assert_allclose(kappa, [1.0, 2.0])

    @pytest.mark.parametrize("M, J12, kappa", [([[1, -1], [-1, 1]], 1.0, [0, 0]), ([[1, 0], [0, 1]], 0.0, [1, 1])])
    def test_pure_parts(self, M, J12, kappa):
        J, k = beurling_deny_split(np.array(M, float))
        assert J[0, 1] == J12
        np.testing.assert_allclose(k, kappa)

    def test_non_markov(self):
        with pytest.raises(ContractViolation):
            beurling_deny_split(np.array([[1.0, 1.0], [1.0, 1.0]]))

    @given(seed=st.integers(0, 10_000), n=st.integers(2, 8))
    @settings(max_examples=40)
    def test_reassembly(self, seed, n):
        rng = np.random.default_rng(seed)
        F = random_symmetric(rng, n, True)
        J, kappa = beurling_deny_split(F)
        u = rng.normal(size=n)
        jump = 0.5 * sum(J[i, j] * (u[i] - u[j]) ** 2 for i in range(n) for j in range(n))
        assert abs(u @ F @ u - (jump + kappa @ u**2)) <= 1e-10 * max(1.0, abs(u @ F @ u))
        np.testing.assert_allclose(reassemble_form(J, kappa), F, atol=1e-14)


class TestContraction:
    def test_neumann_stiffness(self):
        Q = np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]]) * 4
        rng = np.random.default_rng(1)
        for _ in range(50):
            assert form_contraction_check(Q, rng.normal(scale=2.0, size=3))

    def test_inside_unit_cube(self):
        Q = np.array([[2.0, -1.0], [-1.0, 2.0]])
        assert form_contraction_check(Q, np.array([0.2, 0.9]))

    @pytest.mark.parametrize("eps", [0.5, 0.1, 0.01])
    def test_krein_form_violation(self, eps):
        # Krein form on the interval: F(u) = int u'^2 - (u(0) - u(1))^2.
        # The linear u from 1 down to -eps has F(u) = 0; clamping flattens the
        # tail, so F(u_#) is close to eps > 0.
        n = 100
        h = 1.0 / n
        L = (np.diag(np.r_[1, 2 * np.ones(n - 1), 1]) - np.eye(n + 1, k=1) - np.eye(n + 1, k=-1)) / h
        Q = L.copy()
        Q[np.ix_([0, n], [0, n])] += P0
        u = 1.0 - (1.0 + eps) * np.linspace(0, 1, n + 1)
        assert not form_contraction_check(Q, u)
        us = np.clip(u, 0, 1)
        assert us @ Q @ us - u @ Q @ u == pytest.approx(eps, rel=0.1)

    def test_linear_extension_equality(self):
        # u = harmonic extension of (1 + eps, 1): both sides vanish
        n = 20
        h = 1.0 / n
        L = (np.diag(np.r_[1, 2 * np.ones(n - 1), 1]) - np.eye(n + 1, k=1) - np.eye(n + 1, k=-1)) / h
        Q = L.copy()
        Q[np.ix_([0, n], [0, n])] += P0
        x = np.linspace(0, 1, n + 1)
        u = 1.1 - 0.1 * x
        assert abs(u @ Q @ u) < 1e-12
        assert form_contraction_check(Q, u)

    def test_not_psd(self):
        with pytest.raises(ContractViolation):
            form_contraction_check(np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros(2))
