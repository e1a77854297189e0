import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kreinlab.battery import battery_for
from kreinlab.boundary import boundary_geometry, wentzell_B
from kreinlab.discrete import Domain1D, Domain2D, assemble, dirichlet_generator, dtn_discrete
from kreinlab.errors import ContractViolation, DegenerateElimination, DomainError, ShiftError
from kreinlab.krein import (
    boundary_form_from_resolvent,
    build_extension,
    extend_to_boundary,
    extension_form,
    extract_boundary_form,
    generator_from_resolvent,
    krein_resolvent,
    resolvent_condition,
    theta_report,
    wentzell_residual,
)
from kreinlab.markov import E0, E1, BoundaryForm


@pytest.fixture(scope="module")
def d1():
    return assemble(Domain1D(1.0, 40))


@pytest.fixture(scope="module")
def d2():
    return assemble(Domain2D(1.0, 1.0, 8, 8))


def direct_resolvent(A, lam):
    return np.linalg.inv(-A + lam * np.eye(A.shape[0]))


def robin(disc, beta=1.0):
    return BoundaryForm.full(beta * np.eye(disc.nb), disc.weights)


class TestDirectConstruction:
    def test_neumann_matches_global_stiffness(self, d1):
        A = build_extension(d1, BoundaryForm.full(np.zeros((2, 2)))).generator
        assert np.abs(A @ np.ones(d1.ni)).max() <= 1e-12 * np.abs(A).max()

    def test_dirichlet_is_interior_operator(self, d1):
        A = build_extension(d1, BoundaryForm.zero(2)).generator
        np.testing.assert_allclose(A, dirichlet_generator(d1), atol=1e-12 * np.abs(A).max())

    @pytest.mark.parametrize("beta", [0.5, 1.0, 4.0])
    def test_robin_killing_at_endpoints_only(self, d1, beta):
        A = build_extension(d1, robin(d1, beta)).generator
        loss = -(d1.mass * (A @ np.ones(d1.ni)))
        assert loss[1:-1] == pytest.approx(0.0, abs=1e-10)
        assert loss[0] > 0 and loss[-1] > 0

    def test_form_generator_agrees(self, d2):
        bf = wentzell_B(boundary_geometry(d2), 0.5, 1.0, 0.2)
        A = build_extension(d2, bf).generator
        np.testing.assert_allclose(extension_form(d2, bf).generator(), A, atol=1e-10 * np.abs(A).max())

    def test_generator_mass_symmetric(self, d2):
        A = build_extension(d2, robin(d2)).generator
        S = d2.mass[:, None] * A
        np.testing.assert_allclose(S, S.T, atol=1e-12 * np.abs(S).max())

    def test_degenerate_elimination_names_fallback(self, d2):
        P0 = dtn_discrete(d2, 0.0)
        bf = BoundaryForm.full(P0, d2.weights)
        with pytest.raises(DegenerateElimination, match="krein_resolvent"):
            build_extension(d2, bf)
        A = build_extension(d2, bf, via="krein").generator
        assert np.all(np.isfinite(A))

    def test_mismatched_boundary_rejected(self, d2):
        with pytest.raises(DomainError):
            build_extension(d2, BoundaryForm.full(np.eye(2)))

    def test_unknown_route(self, d1):
        with pytest.raises(DomainError):
            build_extension(d1, robin(d1), via="magic")


class TestKreinFormula:
    @pytest.mark.parametrize("lam", [0.5, 1.0, 5.0])
    @pytest.mark.parametrize("dim", [1, 2])
    def test_matches_direct_on_battery(self, d1, d2, dim, lam):
        disc = d1 if dim == 1 else d2
        for case in battery_for(disc, seed=3, n_random=20):
            A = build_extension(disc, case.form).generator
            R = krein_resolvent(disc, case.form, lam)
            ref = direct_resolvent(A, lam)
            cond = resolvent_condition(A, disc.mass, lam)
            assert np.linalg.norm(R - ref) <= 1e-8 * cond * max(1.0, np.linalg.norm(ref)), case.name

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.1, 20.0), st.floats(0.1, 20.0))
    def test_resolvent_identity(self, lam, mu):
        disc = assemble(Domain1D(1.0, 16))
        bf = BoundaryForm.full(np.array([[1.0, -0.3], [-0.3, 0.5]]))
        Rl, Rm = krein_resolvent(disc, bf, lam), krein_resolvent(disc, bf, mu)
        lhs = Rl - Rm
        rhs = (mu - lam) * Rl @ Rm
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(Rl).max())

    def test_singular_middle_is_an_eigenvalue(self, d1):
        # B = P_1 kills the middle block at lambda = 1, which is then an eigenvalue
        bf = BoundaryForm.full(dtn_discrete(d1, 1.0))
        A = build_extension(d1, bf).generator
        assert np.abs(np.linalg.eigvals(A) - 1.0).min() <= 1e-8
        with pytest.raises(ShiftError) as info:
            krein_resolvent(d1, bf, 1.0)
        assert info.value.lambdas[0] == 1.0 and len(info.value.lambdas) >= 2

    def test_invisible_traces_dropped(self, d2):
        bf = BoundaryForm.full(dtn_discrete(d2, 0.0), d2.weights)
        A = build_extension(d2, bf, via="krein").generator
        R = krein_resolvent(d2, bf, 0.5)
        np.testing.assert_allclose(R, direct_resolvent(A, 0.5), atol=1e-8 * np.abs(R).max())

    def test_nonpositive_shift(self, d1):
        with pytest.raises(DomainError):
            krein_resolvent(d1, robin(d1), 0.0)

    def test_generator_from_resolvent(self, d1):
        bf = BoundaryForm.rank_one(E0, 0.0)
        A, lam = generator_from_resolvent(d1, bf)
        assert lam == 1.0
        ref = build_extension(d1, bf).generator
        np.testing.assert_allclose(A, ref, atol=1e-8 * np.abs(ref).max())

    def test_dual_agreement_recorded(self, d2):
        op = build_extension(d2, robin(d2), via="both")
        assert op.agreement is not None and op.agreement <= 1e-12

    def test_shift_error_carries_lambdas(self):
        err = ShiftError("x", (1.0, 10.0))
        assert err.lambdas == (1.0, 10.0)


class TestBoundaryFormRecovery:
    def test_extract_robin_1d(self, d1):
        op = build_extension(d1, robin(d1, 2.0))
        _, f_b = extract_boundary_form(d1, op)
        np.testing.assert_allclose(f_b, 2.0 * np.eye(2), atol=1e-10)

    def test_extract_wentzell_2d(self, d2):
        bf = wentzell_B(boundary_geometry(d2), 1.0, 0.5, 0.1)
        _, f_b = extract_boundary_form(d2, build_extension(d2, bf))
        np.testing.assert_allclose(f_b, bf.form_matrix, atol=1e-9 * np.abs(bf.form_matrix).max())

    def test_extract_dirichlet_sentinel(self, d1):
        f_A, f_b = extract_boundary_form(d1, build_extension(d1, BoundaryForm.zero(2)))
        assert f_A.shape == (0, 0) and f_b.shape == (0, 0)

    def test_extract_rejects_foreign_generator(self, d1):
        op = build_extension(d1, robin(d1))
        other = build_extension(d1, BoundaryForm.full(np.zeros((2, 2))))
        forged = type(op)(other.generator, op.boundary_form, "forged", op.classification, op.elimination, op.mass)
        with pytest.raises(ContractViolation):
            extract_boundary_form(d1, forged)

    @pytest.mark.parametrize(
        "bf",
        [
            BoundaryForm.full(np.eye(2)),
            BoundaryForm.full(np.array([[1.5, -0.5], [-0.5, 0.7]])),
            BoundaryForm.rank_one(E0, 0.0),
            BoundaryForm.rank_one(E1, 0.3),
        ],
        ids=["robin", "jump", "periodic", "mixed"],
    )
    def test_resolvent_route_1d(self, bf):
        disc = assemble(Domain1D(1.0, 8))
        A = build_extension(disc, bf).generator
        rec = boundary_form_from_resolvent(lambda lam: direct_resolvent(A, lam), disc)
        assert rec.rank == bf.basis().shape[1]
        np.testing.assert_allclose(rec.f_b, bf.form_matrix, atol=1e-6)
        assert rec.monotone_slack >= -1e-10

    def test_resolvent_route_dirichlet(self):
        disc = assemble(Domain1D(1.0, 8))
        A = dirichlet_generator(disc)
        rec = boundary_form_from_resolvent(lambda lam: direct_resolvent(A, lam), disc)
        assert rec.rank == 0 and "Dirichlet" in rec.note

    def test_resolvent_route_rejects_nonmonotone(self):
        disc = assemble(Domain1D(1.0, 8))
        A = dirichlet_generator(disc)
        with pytest.raises(ContractViolation):
            boundary_form_from_resolvent(lambda lam: direct_resolvent(A, 1e7 / lam), disc)

    def test_resolvent_route_bad_grid(self, d1):
        with pytest.raises(DomainError):
            boundary_form_from_resolvent(lambda lam: None, d1, lambdas=(10.0, 1.0))

    def test_theta_of_krein_vanishes(self, d1):
        bf = BoundaryForm.full(dtn_discrete(d1, 0.0))
        assert np.abs(theta_report(d1, bf)).max() <= 1e-14


class TestWentzellCondition:
    @pytest.mark.parametrize("dim", [1, 2])
    def test_eigenvectors_satisfy_weak_condition(self, d1, d2, dim):
        disc = d1 if dim == 1 else d2
        for case in battery_for(disc, seed=1, n_random=10):
            op = build_extension(disc, case.form)
            _, U = np.linalg.eig(op.generator)
            for k in range(0, U.shape[1], max(1, U.shape[1] // 6)):
                u = disc.embed(U[:, k].real, extend_to_boundary(op, U[:, k].real))
                res, (flux, rnd) = wentzell_residual(disc, case.form, u, return_scale=True)
                assert res <= 1e-8 * max(flux, rnd), case.name

    def test_robin_pointwise(self, d1):
        beta = 1.7
        op = build_extension(d1, robin(d1, beta))
        u_int = np.linalg.eigh(-d1.mass[:, None] * op.generator)[1][:, 0]
        from kreinlab.discrete import flux_trace

        u = d1.embed(u_int, extend_to_boundary(op, u_int))
        np.testing.assert_allclose(beta * d1.trace(u), flux_trace(d1) @ u, atol=1e-10)
