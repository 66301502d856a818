import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import centroid, gaussian_blob
from morphcolor import grid
from morphcolor.errors import NonDiffeomorphicError, SizeError
from morphcolor.morphing import (MorphParams, compose_map, image_sequence_step, linear_path,
                                 morph, path_energy, sequence_solve, trajectories)
from morphcolor.registration import (CG_RTOL, _dct_preconditioner, _pcg, elastic_gradient,
                                     elastic_matrix, elastic_potential, register,
                                     registration_energy)

MU = 0.025


def dense_sequence_solution(a, f0, fk):
    """Assemble tridiag(-1, 1 + a_k, -a_k) densely and solve it."""
    m = len(a)
    A = np.zeros((m, m))
    for r in range(m):
        A[r, r] = 1.0 + a[r]
        if r > 0:
            A[r, r - 1] = -1.0
        if r < m - 1:
            A[r, r + 1] = -a[r]
    rhs = np.zeros(m)
    rhs[0] += f0
    rhs[-1] += a[-1] * fk
    return np.linalg.solve(A, rhs)


class TestParams:
    def test_lambda_defaults_to_mu(self):
        assert MorphParams(mu=0.05).lam == 0.05

    @pytest.mark.parametrize("kwargs", [
        {"mu": 0.0}, {"mu": 0.1, "lam": -1.0}, {"k_steps": 1}, {"pyramid_levels": 0},
        {"outer_iterations": 0}, {"reg_iterations": 0}, {"energy_tol": -1.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            MorphParams(**kwargs)


class TestElasticPotential:
    def test_zero(self):
        assert elastic_potential(np.zeros((2, 5, 5)), 1.0, 1.0) == 0.0

    def test_shear(self):
        x = grid.identity_grid((6, 6))
        v = np.stack([x[1], np.zeros((6, 6))])
        mu, lam = 0.3, 0.7
        # eps = [[0, 1/2], [1/2, 0]] wherever the column difference exists
        assert elastic_potential(v, mu, lam) == pytest.approx(6 * 5 * mu / 2)

    def test_dilation(self):
        x = grid.identity_grid((6, 6))
        mu, lam = 0.3, 0.7
        # eps = Id on the interior (5x5 cells); the last row/column only carries one unit strain
        interior = 25 * (2 * mu + 2 * lam)
        edges = 10 * (mu + lam / 2)
        assert elastic_potential(x, mu, lam) == pytest.approx(interior + edges)

    @settings(max_examples=30, deadline=None)
    @given(c1=st.floats(-10, 10), c2=st.floats(-10, 10))
    def test_translations_cost_nothing(self, c1, c2):
        v = np.stack([np.full((4, 5), c1), np.full((4, 5), c2)])
        assert elastic_potential(v, MU, MU) == 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        v = rng.standard_normal((2, 5, 6))
        g = elastic_gradient(v, 0.4, 0.9)
        h = 1e-6
        for idx in [(0, 1, 2), (1, 4, 5), (0, 0, 0), (1, 2, 3)]:
            e = np.zeros_like(v)
            e[idx] = h
            fd = (elastic_potential(v + e, 0.4, 0.9) - elastic_potential(v - e, 0.4, 0.9)) / (2 * h)
            assert g[idx] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_sparse_operator_matches_stencil(self):
        v = np.random.default_rng(7).standard_normal((2, 7, 9))
        a = elastic_matrix((7, 9), 0.3, 0.8)
        np.testing.assert_allclose(a @ v.ravel(), elastic_gradient(v, 0.3, 0.8).ravel(),
                                   atol=1e-13)
        assert abs(a - a.T).max() == 0.0


def test_pcg_reaches_relative_residual():
    rng = np.random.default_rng(8)
    shape = (12, 10)
    a = elastic_matrix(shape, MU, MU)
    data = rng.random(2 * 120) * 1e-2
    b = rng.standard_normal(2 * 120)

    def apply_h(w):
        return a @ w + data * w + 1e-6 * w

    x = _pcg(apply_h, b, _dct_preconditioner(shape, MU, MU, float(data.mean())), CG_RTOL, 500)
    assert np.linalg.norm(apply_h(x) - b) <= CG_RTOL * np.linalg.norm(b)


class TestPathEnergy:
    def test_constant_images_zero_path(self):
        images = [np.full((5, 5), 0.2)] * 4
        path = [np.zeros((2, 5, 5))] * 3
        assert path_energy(images, path, MorphParams(k_steps=3)) == 0.0

    def test_single_step(self):
        rng = np.random.default_rng(1)
        i0, i1 = rng.random((2, 6, 6))
        e = path_energy([i0, i1], [np.zeros((2, 6, 6))], MorphParams())
        assert e == pytest.approx(np.sum((i1 - i0) ** 2))

    def test_sum_of_registration_objectives(self):
        rng = np.random.default_rng(2)
        images = list(rng.random((4, 6, 6)))
        path = list(rng.normal(scale=0.5, size=(3, 2, 6, 6)))
        p = MorphParams(mu=0.1, k_steps=3)
        expected = sum(registration_energy(images[k], images[k - 1], path[k - 1], 0.1, 0.1)
                       for k in range(1, 4))
        assert path_energy(images, path, p) == pytest.approx(expected)

    def test_mismatch(self):
        with pytest.raises(SizeError):
            path_energy([np.zeros((4, 4))] * 3, [np.zeros((2, 4, 4))], MorphParams())


class TestRegister:
    def test_identical_images_do_not_move(self):
        f = gaussian_blob((16, 16), (8, 8), 3.0)
        v = register(f, f, np.zeros((2, 16, 16)), MorphParams())
        assert not v.any()

    def test_translation_recovered_multilevel(self, blob_pair):
        moving, fixed = blob_pair
        params = MorphParams(mu=MU)
        pyr = [(fixed, moving)]
        for _ in range(2):
            pyr.append(tuple(grid.restrict(f) for f in pyr[-1]))
        v = np.zeros((2,) + pyr[-1][0].shape)
        for f, m in reversed(pyr):
            if v.shape[1:] != f.shape:
                v = grid.prolong_displacement(v, f.shape)
            v = register(f, m, v, params)
        support = fixed > 0.1
        assert abs(v[0][support].mean() - 2.0) <= 0.5
        assert abs(v[1][support].mean()) <= 0.5

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_energy_never_increases(self, seed):
        rng = np.random.default_rng(seed)
        fixed = gaussian_blob((24, 24), (12, 13), 4.0)
        moving = gaussian_blob((24, 24), (11, 12), 4.0)
        # smooth random start
        coarse = rng.normal(scale=0.8, size=(2, 6, 6))
        v0 = grid.prolong_displacement(coarse, (24, 24)) / 4.0
        p = MorphParams(mu=MU)
        before = registration_energy(fixed, moving, v0, MU, MU)
        v = register(fixed, moving, v0, p)
        assert registration_energy(fixed, moving, v, MU, MU) <= before


class TestTrajectories:
    def test_identity(self):
        xs = trajectories([np.zeros((2, 5, 5))] * 3)
        assert len(xs) == 4
        for x in xs:
            np.testing.assert_array_equal(x, grid.identity_grid((5, 5)))

    def test_last_step_translation(self):
        t = np.array([1.0, -2.0])
        path = [np.zeros((2, 8, 8)), np.zeros((2, 8, 8)), np.broadcast_to(t[:, None, None], (2, 8, 8))]
        xs = trajectories(path)
        x = grid.identity_grid((8, 8))
        expected = np.stack([np.clip(x[0] - 1.0, 1, 8), np.clip(x[1] + 2.0, 1, 8)])
        np.testing.assert_allclose(xs[2], expected)
        np.testing.assert_allclose(xs[0], expected)

    def test_two_translations_compose(self):
        t1, t2 = np.array([1.0, 0.5]), np.array([-0.5, 1.0])
        path = [np.broadcast_to(t[:, None, None], (2, 10, 10)).copy() for t in (t1, t2)]
        phi = compose_map(path)
        x = grid.identity_grid((10, 10))
        inner = (slice(3, -3), slice(3, -3))
        np.testing.assert_allclose(phi[0][inner], (x[0] - 0.5)[inner], atol=1e-12)
        np.testing.assert_allclose(phi[1][inner], (x[1] - 1.5)[inner], atol=1e-12)

    def test_single_translation_map(self):
        t = np.array([2.0, 1.0])
        phi = compose_map([np.broadcast_to(t[:, None, None], (2, 9, 9)).copy()])
        x = grid.identity_grid((9, 9))
        np.testing.assert_allclose(phi[:, 3:, 3:], (x - t[:, None, None])[:, 3:, 3:])


class TestSequenceSolve:
    def test_two_steps_is_average(self):
        f = sequence_solve(np.ones((1, 3)), np.array([0.0, 1.0, 2.0]), np.array([1.0, 3.0, 5.0]))
        np.testing.assert_allclose(f[0], [0.5, 2.0, 3.5])

    def test_unit_weights_give_linear_interpolation(self):
        k = 6
        f = sequence_solve(np.ones(k - 1), 0.2, 1.4)
        np.testing.assert_allclose(f, 0.2 + np.arange(1, k) / k * 1.2, atol=1e-14)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            k = int(rng.integers(2, 9))
            a = rng.uniform(0.2, 5.0, size=k - 1)
            f0, fk = rng.standard_normal(2)
            got = sequence_solve(a, f0, fk)
            np.testing.assert_allclose(got, dense_sequence_solution(a, f0, fk), atol=1e-10)


class TestImageSequenceStep:
    def test_identity_k2_average(self):
        rng = np.random.default_rng(4)
        t, r = rng.random((2, 6, 7))
        images = image_sequence_step([np.zeros((2, 6, 7))] * 2, t, r)
        np.testing.assert_allclose(images[1], (t + r) / 2, atol=1e-14)

    @pytest.mark.parametrize("k", [2, 3, 5, 8])
    def test_identity_linear_interpolation(self, k):
        rng = np.random.default_rng(k)
        t, r = rng.random((2, 8, 8))
        images = image_sequence_step([np.zeros((2, 8, 8))] * k, t, r)
        for j, img in enumerate(images):
            np.testing.assert_allclose(img, t + j / k * (r - t), atol=1e-10)

    def test_endpoints_pinned(self):
        rng = np.random.default_rng(5)
        t, r = rng.random((2, 8, 8))
        path = [rng.normal(scale=0.05, size=(2, 8, 8)) for _ in range(3)]
        images = image_sequence_step(path, t, r)
        assert np.array_equal(images[0], t) and np.array_equal(images[-1], r)

    def test_idempotent(self):
        rng = np.random.default_rng(6)
        t, r = rng.random((2, 8, 8))
        path = [rng.normal(scale=0.05, size=(2, 8, 8)) for _ in range(4)]
        first = image_sequence_step(path, t, r)
        second = image_sequence_step(path, first[0], first[-1])
        for a, b in zip(first, second):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_folded_step_rejected(self):
        x = grid.identity_grid((8, 8))
        # reflection of the row axis, determinant -1
        fold = np.stack([2.0 * x[0], np.zeros((8, 8))])
        path = [np.zeros((2, 8, 8)), fold]
        with pytest.raises(NonDiffeomorphicError):
            image_sequence_step(path, np.zeros((8, 8)), np.ones((8, 8)))


class TestMorph:
    def test_identity_pair(self):
        f = gaussian_blob((32, 32), (15, 17), 5.0)
        images, path = morph(f, f.copy(), MorphParams(k_steps=4, pyramid_levels=2))
        assert max(np.abs(v).max() for v in path) <= 1e-3
        assert path_energy(images, path, MorphParams(k_steps=4)) <= 1e-10 * np.sum(f * f)
        for img in images:
            np.testing.assert_allclose(img, f, atol=1e-10)

    def test_linear_path(self):
        t, r = np.zeros((4, 4)), np.ones((4, 4))
        images = linear_path(t, r, 4)
        assert [float(i.mean()) for i in images] == [0.0, 0.25, 0.5, 0.75, 1.0]

    def test_energy_monotone_and_midpoint(self, blob_pair):
        moving, fixed = blob_pair
        energies = []
        params = MorphParams(mu=MU, k_steps=4, pyramid_levels=3)
        images, path = morph(moving, fixed, params,
                             callback=lambda lvl, sw, e: energies.append((lvl, sw, e)))
        assert images[0] is not None and np.array_equal(images[0], moving)
        assert np.array_equal(images[-1], fixed)
        for (l0, _, e0), (l1, _, e1) in zip(energies, energies[1:]):
            if l0 == l1:
                assert e1 <= e0 * (1 + 1e-8)
        mid = centroid(images[2])
        assert np.linalg.norm(mid - np.array([33.0, 32.0])) <= 1.0
        phi = compose_map(path)
        disp = grid.identity_grid(fixed.shape) - phi
        support = fixed > 0.1
        assert abs(disp[0][support].mean() - 2.0) <= 0.5

    def test_symmetric_pair(self, blob_pair):
        moving, fixed = blob_pair
        params = MorphParams(mu=MU, k_steps=4, pyramid_levels=3)
        fwd = path_energy(*morph(moving, fixed, params), params)
        bwd = path_energy(*morph(fixed, moving, params), params)
        assert abs(fwd - bwd) <= 0.1 * fwd

    def test_size_mismatch(self):
        with pytest.raises(SizeError):
            morph(np.zeros((8, 8)), np.zeros((8, 9)), MorphParams())
