import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kreinlab.battery import battery_for, named_two_point, two_point_battery, well_posed
from kreinlab.boundary import (
    BoundaryGeometry,
    DegenerateBoundaryWarning,
    boundary_geometry,
    boundary_laplacian,
    fractional_power,
    jump_killing_B,
    levy_circulant_B,
    mean_value_projector,
    mixed_dn_projector,
    wentzell_B,
)
from kreinlab.discrete import Domain1D, Domain2D, assemble
from kreinlab.errors import ContractViolation, DomainError
from kreinlab.markov import beurling_deny_split, classify, is_markov_generator


@pytest.fixture(scope="module")
def d2():
    return assemble(Domain2D(2.0, 1.0, 8, 6))


@pytest.fixture(scope="module")
def loop(d2):
    return boundary_geometry(d2)


class TestGeometry:
    def test_loop_from_grid(self, d2, loop):
        assert loop.kind == "loop" and loop.nb == d2.nb
        assert loop.length == pytest.approx(6.0)
        np.testing.assert_allclose(loop.weights, d2.weights)

    def test_interval_two_point(self):
        g = boundary_geometry(assemble(Domain1D(1.0, 10)))
        assert g.degenerate and g.nb == 2

    def test_uniform_flag(self, loop):
        assert BoundaryGeometry.uniform_loop(8, 4.0).uniform
        assert not loop.uniform

    @pytest.mark.parametrize("seg", [[1.0, -1.0, 1.0], [1.0, 0.0, 1.0]])
    def test_bad_segments(self, seg):
        with pytest.raises(DomainError):
            BoundaryGeometry.from_segments(seg)


class TestLaplacian:
    def test_uniform_stencil(self):
        L = boundary_laplacian(BoundaryGeometry.uniform_loop(4, 4.0))
        np.testing.assert_allclose(L[0], [2.0, -1.0, 0.0, -1.0])

    def test_annihilates_constants_and_w_symmetric(self, loop):
        L = boundary_laplacian(loop)
        assert np.abs(L @ np.ones(loop.nb)).max() <= 1e-12 * np.abs(L).max()
        F = loop.weights[:, None] * L
        np.testing.assert_allclose(F, F.T, atol=1e-12)

    def test_fourier_eigenvalues(self):
        nb, length = 16, 2 * np.pi
        ev = np.sort(np.linalg.eigvalsh(boundary_laplacian(BoundaryGeometry.uniform_loop(nb, length))))
        h = length / nb
        k = np.arange(nb)
        ref = np.sort((2 - 2 * np.cos(2 * np.pi * k / nb)) / h**2)
        np.testing.assert_allclose(ev, ref, atol=1e-12)

    def test_two_point_warns(self):
        with pytest.warns(DegenerateBoundaryWarning):
            L = boundary_laplacian(BoundaryGeometry.two_point())
        assert not L.any()


class TestFractionalPower:
    def test_diagonal(self):
        np.testing.assert_allclose(fractional_power(np.diag([4.0, 9.0]), 0.5), np.diag([2.0, 3.0]))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(3, 12), st.floats(0.1, 0.9))
    def test_semigroup_of_powers(self, nb, s):
        g = BoundaryGeometry.from_segments(np.linspace(0.5, 1.5, nb))
        L = boundary_laplacian(g)
        Ps = fractional_power(L, s, g.weights)
        Pt = fractional_power(L, 1 - s, g.weights)
        np.testing.assert_allclose(Ps @ Pt, L, atol=1e-9 * np.abs(L).max())

    def test_negative_rejected(self):
        with pytest.raises(ContractViolation):
            fractional_power(np.diag([1.0, -1.0]), 0.5)

    @pytest.mark.parametrize("s", [0.0, 1.5])
    def test_exponent_range(self, s):
        with pytest.raises(DomainError):
            fractional_power(np.eye(2), s)


class TestBuilders:
    @pytest.mark.parametrize("b1,bs,b0,s", [(1.0, 0.0, 0.0, 0.5), (0.0, 1.0, 0.0, 0.3), (0.5, 0.5, 2.0, 0.7)])
    def test_wentzell_markov(self, loop, b1, bs, b0, s):
        bf = wentzell_B(loop, b1, bs, b0, s)
        assert is_markov_generator(bf.B, loop.weights).ok
        assert classify(bf).conservative_recurrent == (b0 == 0)

    def test_wentzell_local_has_no_long_jumps(self, loop):
        F = wentzell_B(loop, 1.0, 0.0, 0.0).form_matrix
        J, kappa = beurling_deny_split(F)
        idx = np.arange(loop.nb)
        far = np.abs(((idx[:, None] - idx[None, :] + loop.nb // 2) % loop.nb) - loop.nb // 2) > 1
        assert not J[far].any() and np.abs(kappa).max() <= 1e-12

    def test_wentzell_fractional_is_nonlocal(self, loop):
        J, _ = beurling_deny_split(wentzell_B(loop, 0.0, 1.0, 0.0).form_matrix)
        assert (J > 1e-12).sum() > 2 * loop.nb

    def test_wentzell_needs_loop(self):
        with pytest.raises(DomainError):
            wentzell_B(BoundaryGeometry.two_point(), 1.0, 0.0, 0.0)

    def test_levy_nearest_neighbour(self):
        nu = np.zeros(6)
        nu[1] = nu[-1] = 0.5
        bf = levy_circulant_B(BoundaryGeometry.uniform_loop(6, 6.0), 0.0, nu)
        np.testing.assert_allclose(bf.B[0], [1.0, -0.5, 0.0, 0.0, 0.0, -0.5])

    @pytest.mark.parametrize(
        "nu",
        [[0.0, 1.0, 0.0, 0.0], [1.0, 0.5, 0.0, 0.5], [0.0, -0.5, 0.0, -0.5]],
        ids=["asymmetric", "zero_shift", "negative"],
    )
    def test_levy_rejects(self, nu):
        with pytest.raises(DomainError):
            levy_circulant_B(BoundaryGeometry.uniform_loop(4, 4.0), 0.0, nu)

    def test_levy_needs_uniform(self, loop):
        with pytest.raises(DomainError):
            levy_circulant_B(loop, 0.0, np.zeros(loop.nb))

    @pytest.mark.parametrize("b", [0.0, 2.0])
    def test_mean_value(self, loop, b):
        bf = mean_value_projector(loop)(b)
        one = np.ones(loop.nb)
        assert bf.evaluate(one) == pytest.approx(b * loop.weights.sum())
        assert classify(bf).markovian

    def test_mixed_dn(self, loop):
        bf = mixed_dn_projector(loop, [0, 1, 2])
        assert bf.basis().shape[1] == 3 and not bf.form_matrix.any()

    @pytest.mark.parametrize("mask,hint", [([], "Zero"), (None, "Full")])
    def test_mixed_dn_guidance(self, loop, mask, hint):
        mask = range(loop.nb) if mask is None else mask
        with pytest.raises(DomainError, match=hint):
            mixed_dn_projector(loop, mask)

    def test_jump_killing_on_constants(self, loop):
        rng = np.random.default_rng(1)
        J = rng.uniform(0, 1, (loop.nb, loop.nb))
        J = np.triu(J, 1) + np.triu(J, 1).T
        kappa = rng.uniform(0, 1, loop.nb)
        bf = jump_killing_B(loop, J, kappa)
        assert bf.evaluate(np.ones(loop.nb)) == pytest.approx(kappa.sum())
        J2, k2 = beurling_deny_split(bf.form_matrix)
        np.testing.assert_allclose(J2, J, atol=1e-12)
        np.testing.assert_allclose(k2, kappa, atol=1e-12)

    def test_jump_killing_rejects_negative(self, loop):
        with pytest.raises(DomainError):
            jump_killing_B(loop, -np.ones((loop.nb, loop.nb)) + np.eye(loop.nb), np.zeros(loop.nb))


class TestBattery:
    def test_size_and_determinism(self):
        a = two_point_battery(seed=7)
        b = two_point_battery(seed=7)
        assert len(a) >= 100
        assert [c.name for c in a] == [c.name for c in b]
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.form.B, y.form.B)

    def test_both_verdicts_present(self):
        from kreinlab.markov import classify_2d

        flags = [classify_2d(c.form, 1.0).markovian for c in two_point_battery(seed=0)]
        assert 30 <= sum(flags) <= len(flags) - 30

    def test_named_cases(self):
        names = {c.name for c in named_two_point()}
        assert {"neumann", "dirichlet", "krein", "periodic", "theta_counterexample"} <= names

    def test_filtered_cases_well_posed(self, d2):
        cases = battery_for(d2)
        assert len(cases) >= 8
        assert all(well_posed(d2, c.form) for c in cases)
