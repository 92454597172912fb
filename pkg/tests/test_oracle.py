import numpy as np
import pytest

from ssfit.oracle import BarrierQuery, _BarrierNlp, barrier_solve, barrier_value, region_feasible
from ssfit.regions import cone, disk, eig_membership, half_plane, left_half_plane
from ssfit.transform import transformed_constraints


def spectrum_matrix(rng, eigs_real, eigs_complex=()):
    """Real matrix with the given real eigenvalues and conjugate pairs."""
    blocks = [np.array([[lam]]) for lam in eigs_real]
    for z in eigs_complex:
        a, b = z.real, z.imag
        blocks.append(np.array([[a, b], [-b, a]]))
    n = sum(b.shape[0] for b in blocks)
    J = np.zeros((n, n))
    off = 0
    for b in blocks:
        k = b.shape[0]
        J[off:off + k, off:off + k] = b
        off += k
    V = rng.standard_normal((n, n)) + 3.0 * np.eye(n)
    return V @ J @ np.linalg.inv(V)


class TestBarrierAnalytic:
    def test_disk_scalar_value(self):
        q = BarrierQuery(disk(1.0, 0.0), np.array([[0.5]]), 0.1 * np.eye(2))
        value = barrier_value(q)
        assert value == pytest.approx(0.2, abs=2e-3)

    def test_weight_scaling(self):
        A = np.array([[0.5]])
        v1 = barrier_value(BarrierQuery(disk(1.0, 0.0), A, 0.1 * np.eye(2),
                                        np.array([[1.0]])))
        v2 = barrier_value(BarrierQuery(disk(1.0, 0.0), A, 0.1 * np.eye(2),
                                        np.array([[2.0]])))
        assert v2 == pytest.approx(2.0 * v1, rel=1e-2)

    def test_eigenvalue_outside_gives_inf(self):
        q = BarrierQuery(disk(1.0, 0.0), np.array([[1.2]]), 1e-3 * np.eye(2))
        assert barrier_value(q) == np.inf

    def test_feasible_p_returned_definite(self):
        q = BarrierQuery(half_plane(0.0), np.array([[0.8]]), 0.05 * np.eye(1))
        res = barrier_solve(q)
        assert res.feasible
        assert np.min(np.linalg.eigvalsh(res.p_matrix)) > 0


class TestRegionFeasible:
    def test_sublevel_membership(self):
        q = BarrierQuery(disk(1.0, 0.0), np.array([[0.5]]), 0.1 * np.eye(2))
        assert region_feasible(q, 1.0)       # 0.2 <= 1
        assert not region_feasible(q, 10.0)  # 0.2 > 0.1

    def test_monotone_in_epsilon(self):
        rng = np.random.default_rng(30)
        A = spectrum_matrix(rng, [0.5], [complex(0.3, 0.2)])
        q = BarrierQuery(disk(0.9, 0.0), A, 1e-3 * np.eye(A.shape[0] * 2))
        feas = [region_feasible(q, eps)
                for eps in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)]
        # once feasible at some epsilon, feasible at every smaller epsilon
        assert feas == sorted(feas)
        assert feas[-1]

    def test_epsilon_validation(self):
        q = BarrierQuery(half_plane(0.0), np.array([[1.0]]), 0.1 * np.eye(1))
        with pytest.raises(ValueError):
            region_feasible(q, 0.0)


class TestJordanCounterexample:
    def test_infeasible_for_all_shifts(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        region = left_half_plane(0.0)
        for shift in (0.0, 1e-4, 1e-2):
            q = BarrierQuery(region, A, shift * np.eye(2))
            assert barrier_value(q) == np.inf

    def test_relaxed_feasible_strictly_inside(self):
        # diagonalizable spectrum strictly inside the left half-plane is
        # feasible for the relaxed system (zero shift, P floored)
        rng = np.random.default_rng(31)
        A = spectrum_matrix(rng, [-0.5], [complex(-1.0, 0.7)])
        q = BarrierQuery(left_half_plane(0.0), A, 0.0)
        assert barrier_value(q) < np.inf


class TestOracleAgreement:
    @pytest.mark.parametrize("region,inside,outside", [
        (half_plane(0.1),
         ([0.5, 0.9], [complex(0.7, 0.4)]),
         ([-0.2, 0.9], [complex(0.7, 0.4)])),
        (disk(0.9, 0.0),
         ([0.5, -0.3], [complex(0.2, 0.5)]),
         ([1.3, 0.5], [complex(0.2, 0.5)])),
        (cone(1.0, 0.0),
         ([0.4, 1.0], [complex(0.8, 0.3)]),
         ([0.4, 1.0], [complex(0.3, 0.9)])),
    ])
    def test_agreement_with_direct_spectrum(self, region, inside, outside):
        rng = np.random.default_rng(32)
        for _ in range(5):
            A_in = spectrum_matrix(rng, *inside)
            assert eig_membership(region, A_in)
            q = BarrierQuery(region, A_in, 1e-4 * np.eye(A_in.shape[0] * region.m))
            assert region_feasible(q, 1e-4)
            A_out = spectrum_matrix(rng, *outside)
            assert not eig_membership(region, A_out)
            q = BarrierQuery(region, A_out, 1e-4 * np.eye(A_out.shape[0] * region.m))
            assert barrier_value(q) == np.inf


class TestPipelineEquivalence:
    def test_fast_path_matches_generic_transform(self):
        # the assembled NLP must agree with the generic constraint-system
        # route at random factor points
        rng = np.random.default_rng(33)
        A = spectrum_matrix(rng, [0.4, -0.2, 0.6])
        q = BarrierQuery(disk(0.9, 0.0), A, 1e-3 * np.eye(6))
        nlp = _BarrierNlp(q, 1e-5)
        system = nlp.system()
        for _ in range(10):
            x = rng.standard_normal(nlp.dim)
            x[nlp.lower_bounds() > -np.inf] = rng.uniform(0.2, 1.5)
            phi = system.unpack(np.concatenate([np.zeros(0), x]))
            g_t, _ = transformed_constraints(phi, system)
            assert np.allclose(nlp.equality(x), g_t, rtol=1e-12, atol=1e-12)

    def test_analytic_derivatives_match_fd(self):
        from ssfit.nlp import preflight_gradients

        rng = np.random.default_rng(34)
        A = spectrum_matrix(rng, [0.3], [complex(0.1, 0.4)])
        q = BarrierQuery(half_plane(0.0), A, 0.01 * np.eye(3))
        nlp = _BarrierNlp(q, 1e-5)
        worst = preflight_gradients(nlp.problem(), nlp.initial_point(), n_points=5)
        assert worst <= 1e-5
