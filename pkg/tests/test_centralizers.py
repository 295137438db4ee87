import numpy as np
import pytest

from qevents import (DensityState, InvariantViolation, PartitionOfUnity,
                     ambient_representative, centralizer, diagonal_algebra,
                     equal_span, expect_onto_center, expect_onto_centralizer,
                     full_matrix_algebra, incoherence_defect, operator_norm)

from _helpers import random_density, random_hermitian, random_unitary, rng

M2 = full_matrix_algebra(2)
E11 = np.diag([1.0, 0.0]).astype(complex)
E22 = np.diag([0.0, 1.0]).astype(complex)
SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PLUS = DensityState(np.full((2, 2), 0.5, dtype=complex))
RHO_37 = DensityState(np.diag([0.3, 0.7]).astype(complex))


class TestAmbientRepresentative:
    def test_full_ambient_returns_the_state_itself(self):
        Q = ambient_representative(M2, RHO_37)
        np.testing.assert_allclose(Q, RHO_37.matrix, atol=1e-12)

    def test_diagonal_ambient_keeps_only_the_diagonal(self):
        Q = ambient_representative(diagonal_algebra(2), PLUS)
        np.testing.assert_allclose(Q, 0.5 * np.eye(2), atol=1e-12)

    def test_representative_reproduces_the_state_on_the_algebra(self):
        gen = rng(19)
        for dim in (2, 4):
            state = random_density(gen, dim)
            D = diagonal_algebra(dim)
            Q = ambient_representative(D, state)
            for B in D.basis:
                lhs = np.trace(Q @ B)
                assert lhs == pytest.approx(state.expect(B), abs=1e-10)


class TestCentralizerStructure:
    def test_nondegenerate_diagonal_state(self):
        rep = centralizer(M2, RHO_37)
        assert rep.centralizer.algebra_dim == 2
        assert rep.center.algebra_dim == 2
        assert len(rep.central_projections) == 2
        assert equal_span(rep.centralizer, diagonal_algebra(2))[0]

    def test_maximally_mixed_state_has_full_centralizer(self):
        mixed = DensityState(np.eye(2, dtype=complex) / 2)
        rep = centralizer(M2, mixed)
        assert rep.centralizer.algebra_dim == 4
        assert rep.center.algebra_dim == 1

    def test_pure_superposition(self):
        rep = centralizer(M2, PLUS)
        # commutant of a rank-one projection: span{P, 1-P}
        assert rep.centralizer.algebra_dim == 2
        assert rep.center.algebra_dim == 2
        P = PLUS.matrix
        for A in rep.centralizer.basis:
            assert operator_norm(A @ P - P @ A) < 1e-9

    def test_generic_state_centralizer_is_maximal_abelian(self):
        gen = rng(29)
        for dim in (3, 5):
            state = random_density(gen, dim)
            rep = centralizer(full_matrix_algebra(dim), state)
            assert rep.centralizer.algebra_dim == dim
            assert rep.center.algebra_dim == dim

    def test_atoms_are_orthogonal_projections_resolving_identity(self):
        gen = rng(41)
        state = random_density(gen, 4)
        rep = centralizer(full_matrix_algebra(4), state)
        total = sum(rep.central_projections)
        np.testing.assert_allclose(total, np.eye(4), atol=1e-8)
        for i, P in enumerate(rep.central_projections):
            np.testing.assert_allclose(P @ P, P, atol=1e-8)
            for Qp in rep.central_projections[i + 1:]:
                assert operator_norm(P @ Qp) < 1e-8


class TestConditionalExpectations:
    def test_pinching_formula_for_full_ambient(self):
        # E on the centralizer of a faithful state = pinching by its eigenprojections
        gen = rng(53)
        state = random_density(gen, 3)
        A = random_hermitian(gen, 3)
        E = expect_onto_centralizer(full_matrix_algebra(3), state, A)
        pinched = sum(P @ A @ P for P in state.spectral().projections)
        np.testing.assert_allclose(E, pinched, atol=1e-9)

    def test_center_valued_weights_on_superposition(self):
        # phi concentrates on one atom; the projection is averaged to a scalar
        out = expect_onto_center(M2, PLUS, E11)
        np.testing.assert_allclose(out, 0.5 * np.eye(2), atol=1e-12)
        out2 = expect_onto_centralizer(M2, PLUS, E11)
        np.testing.assert_allclose(out2, 0.5 * np.eye(2), atol=1e-12)

    def test_diagonal_state_fixes_diagonal_operators(self):
        A = np.diag([2.0, -1.0]).astype(complex)
        np.testing.assert_allclose(expect_onto_centralizer(M2, RHO_37, A), A, atol=1e-10)
        np.testing.assert_allclose(expect_onto_center(M2, RHO_37, A), A, atol=1e-10)

    def test_axioms_on_random_instances(self):
        gen = rng(61)
        for _ in range(20):
            dim = int(gen.integers(2, 5))
            ambient = full_matrix_algebra(dim)
            state = random_density(gen, dim)
            rep = centralizer(ambient, state)
            A = random_hermitian(gen, dim)
            E = expect_onto_centralizer(ambient, state, A, report=rep)
            # fixes the target algebra
            for B in rep.centralizer.basis:
                np.testing.assert_allclose(
                    expect_onto_centralizer(ambient, state, B, report=rep), B, atol=1e-8)
            # preserves the state
            assert state.expect(E) == pytest.approx(state.expect(A), abs=1e-9)
            # Schwarz positivity: E(A)^* E(A) <= E(A^* A)
            gap = expect_onto_centralizer(ambient, state, A.conj().T @ A, report=rep) \
                - E.conj().T @ E
            assert np.linalg.eigvalsh((gap + gap.conj().T) / 2).min() > -1e-8

    def test_operator_outside_ambient_rejected(self):
        with pytest.raises(InvariantViolation, match="ambient"):
            expect_onto_centralizer(diagonal_algebra(2), RHO_37, SX)

    def test_rank_deficient_state_still_averages_to_unit_weights(self):
        # states with a zero-weight atom: the map must still send 1 to 1
        pure = DensityState(np.diag([1.0, 0.0]).astype(complex))
        out = expect_onto_center(M2, pure, np.eye(2, dtype=complex))
        np.testing.assert_allclose(out, np.eye(2), atol=1e-10)


class TestIncoherenceDefect:
    def test_frozen_two_level_example(self):
        part = PartitionOfUnity(("+", "-"), (E11, E22))
        d = incoherence_defect(M2, PLUS, part, SX)
        assert d.lhs == pytest.approx(1.0, abs=1e-12)
        assert d.bound == pytest.approx(4.0, rel=1e-12)
        assert d.delta_prime == pytest.approx(0.5, rel=1e-12)

    def test_vanishes_when_the_state_is_already_incoherent(self):
        part = PartitionOfUnity(("+", "-"), (E11, E22))
        d = incoherence_defect(M2, RHO_37, part, SX)
        assert d.lhs == pytest.approx(0.0, abs=1e-12)
        assert d.delta_prime == pytest.approx(0.0, abs=1e-10)

    def test_bound_holds_on_random_instances(self):
        gen = rng(67)
        from _helpers import random_partition
        for _ in range(40):
            dim = int(gen.integers(2, 6))
            state = random_density(gen, dim)
            part = random_partition(gen, dim, int(gen.integers(2, dim + 1)))
            A = random_hermitian(gen, dim)
            d = incoherence_defect(full_matrix_algebra(dim), state, part, A)
            assert d.lhs <= d.bound + 1e-9

    def test_centralizer_variant_also_bounds(self):
        part = PartitionOfUnity(("+", "-"), (E11, E22))
        d = incoherence_defect(M2, PLUS, part, SX, use_center=False)
        assert d.lhs <= d.bound + 1e-12


class TestUnitaryCovariance:
    def test_centralizer_transforms_with_the_state(self):
        gen = rng(71)
        state = random_density(gen, 3)
        U = random_unitary(gen, 3)
        moved = DensityState(U @ state.matrix @ U.conj().T)
        rep = centralizer(full_matrix_algebra(3), state)
        rep_moved = centralizer(full_matrix_algebra(3), moved)
        rotated = [U @ P @ U.conj().T for P in rep.central_projections]
        # same atom set up to ordering
        for P in rotated:
            best = min(operator_norm(P - Qp) for Qp in rep_moved.central_projections)
            assert best < 1e-7
