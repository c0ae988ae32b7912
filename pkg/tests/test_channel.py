"""Channel synthesis: ULA responses, ray draws, subchannels and assembly."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicmb.channel import (FadingProfile, PairPaths, PathSet, SystemGeometry, assemble_channel,
                           compact_factors, compact_svd, draw_paths, draw_paths_batch, dump_matrix,
                           flatten_paths, load_matrix, numerical_rank, realize, subchannel_matrix,
                           theoretical_rank, ula_response)
from bicmb.errors import ConfigError


class TestUlaResponse:
    def test_broadside(self):
        np.testing.assert_allclose(ula_response(0.0, 4), 0.5 * np.ones(4))

    def test_endfire_half_wavelength(self):
        np.testing.assert_allclose(ula_response(np.pi / 2, 2), np.array([1, -1]) / np.sqrt(2), atol=1e-15)

    def test_matches_elementwise_formula(self):
        phi, N, d = np.pi / 6, 8, 0.5
        expected = [np.exp(1j * 2 * np.pi * d * n * np.sin(phi)) / np.sqrt(N) for n in range(N)]
        np.testing.assert_allclose(ula_response(phi, N, d), expected, atol=1e-15)
        # sin = 1/2 gives phase steps of pi/2
        np.testing.assert_allclose(np.angle(ula_response(phi, N)[1] / ula_response(phi, N)[0]), np.pi / 2)

    def test_zero_antennas(self):
        with pytest.raises(ValueError):
            ula_response(0.1, 0)

    @given(st.floats(-np.pi / 2, np.pi / 2), st.integers(1, 300), st.floats(0.05, 2.0))
    def test_unit_norm(self, phi, N, d):
        assert abs(np.linalg.norm(ula_response(phi, N, d)) - 1) < 1e-12

    def test_batched_shape(self):
        assert ula_response(np.zeros((3, 5)), 7).shape == (3, 5, 7)


class TestGeometryAndProfile:
    def test_multi_user_rf_defaults(self):
        g = SystemGeometry("multi-user", M_t=2, N_t=64, N_r=16, K=2, N_s=3)
        assert (g.N_t_rf, g.N_r_rf) == (12, 6)

    @pytest.mark.parametrize("kwargs, key", [
        (dict(N_s=3, N_r_rf=2), "N_r_rf"),
        (dict(N_r=4, N_s=2, N_r_rf=5), "N_r_rf"),
        (dict(N_t=2, N_s=2, N_t_rf=3, N_r_rf=4), "N_t_rf"),
        (dict(K=2), "K"),
        (dict(N_t=0), "N_t"),
        (dict(d_lambda=0.0), "d_lambda"),
        (dict(mode="broadcast"), "mode"),
    ])
    def test_invalid_geometry_names_key(self, kwargs, key):
        with pytest.raises(ConfigError) as info:
            SystemGeometry(**kwargs)
        assert info.value.key == key

    def test_multi_user_single_rau_per_user(self):
        with pytest.raises(ConfigError):
            SystemGeometry("multi-user", M_r=2, K=2)

    def test_profile_validation(self):
        with pytest.raises(ConfigError):
            FadingProfile([[0, 1]], [[0.0, 0.0]])
        with pytest.raises(ConfigError):
            FadingProfile([[1, 2]], [[0.0]])
        with pytest.raises(ConfigError):
            FadingProfile([[1]], [[np.nan]])
        p = FadingProfile([[1]], [[-np.inf]])
        assert p.beta[0, 0] == 0.0

    def test_profile_is_immutable(self):
        p = FadingProfile.homogeneous(2, 2)
        with pytest.raises(ValueError):
            p.L[0, 0] = 5

    def test_profile_shape_must_match_geometry(self):
        g = SystemGeometry(M_t=2, M_r=1)
        with pytest.raises(ConfigError):
            FadingProfile.homogeneous(2, 2).check(g)

    def test_db_conversion(self):
        p = FadingProfile([[2, 2], [2, 2]], [[-20, -35], [-35, -20]])
        assert abs(p.beta[0, 1] - 3.1623e-4) < 1e-8
        assert p.beta[0, 0] == pytest.approx(0.01)


class TestDrawPaths:
    def test_deterministic(self):
        p = FadingProfile.homogeneous(2, 3, L=3)
        a, b = draw_paths(p, 42), draw_paths(p, 42)
        for ij in p.pairs():
            for x, y in zip(a[ij], b[ij]):
                assert np.array_equal(x, y)

    def test_pair_streams_are_independent_of_profile_size(self):
        # pair (0, 0) draws the same rays whether or not other pairs exist
        small = draw_paths(FadingProfile.homogeneous(1, 1, L=2), 7)
        big = draw_paths(FadingProfile.homogeneous(2, 2, L=2), 7)
        assert np.array_equal(small[0, 0].gains, big[0, 0].gains)

    def test_counts_and_angle_range(self):
        p = FadingProfile([[1, 4], [2, 3]], np.zeros((2, 2)))
        paths = draw_paths(p, 1)
        assert paths.total_paths() == 10
        for ij in p.pairs():
            assert len(paths[ij].gains) == p.L[ij]
            assert np.all(np.abs(paths[ij].aoa) <= np.pi / 2)
            assert np.all(np.abs(paths[ij].aod) <= np.pi / 2)

    def test_batch_of_one_equals_single_draw(self):
        p = FadingProfile.homogeneous(2, 2, L=3)
        one, batch = draw_paths(p, 9), draw_paths_batch(p, 9, 1)
        for ij in p.pairs():
            assert np.array_equal(one[ij].gains, batch[ij].gains[0])
            assert np.array_equal(one[ij].aoa, batch[ij].aoa[0])
            assert np.array_equal(one[ij].aod, batch[ij].aod[0])

    @pytest.mark.parametrize("L, target, tol", [(1, 1.0, 0.02), (4, 4.0, 0.05)])
    def test_gain_power_mean(self, L, target, tol):
        draws = draw_paths_batch(FadingProfile.homogeneous(1, 1, L=L), 2024, 100_000)[0, 0]
        power = np.sum(np.abs(draws.gains) ** 2, axis=-1)
        assert abs(power.mean() - target) < tol

    @pytest.mark.parametrize("L", [1, 2, 4])
    def test_ray_power_gamma_statistics(self, L):
        # 2 * sum |alpha|^2 is chi-squared with 2L degrees of freedom: Gamma(L, 2)
        draws = draw_paths_batch(FadingProfile.homogeneous(1, 1, L=L), 11 + L, 100_000)[0, 0]
        x = 2 * np.sum(np.abs(draws.gains) ** 2, axis=-1)
        assert abs(x.mean() / (2 * L) - 1) < 0.02
        assert abs(x.var() / (4 * L) - 1) < 0.05


def _random_paths(rng, L):
    return PairPaths((rng.standard_normal(L) + 1j * rng.standard_normal(L)) / np.sqrt(2),
                     rng.uniform(-np.pi / 2, np.pi / 2, L), rng.uniform(-np.pi / 2, np.pi / 2, L))


class TestSubchannel:
    def test_single_ray_is_rank_one(self):
        p = _random_paths(np.random.default_rng(0), 1)
        H = subchannel_matrix(p, 16, 32)
        assert numerical_rank(H) == 1
        assert np.sum(np.abs(H) ** 2) == pytest.approx(16 * 32 * abs(p.gains[0]) ** 2, rel=1e-12)

    def test_zero_gains(self):
        p = _random_paths(np.random.default_rng(1), 3)._replace(gains=np.zeros(3, complex))
        assert not np.any(subchannel_matrix(p, 8, 8))

    def test_matches_explicit_sum(self):
        rng = np.random.default_rng(2)
        p = _random_paths(rng, 3)
        H = sum(g * np.outer(ula_response(a, 8), ula_response(d, 12).conj())
                for g, a, d in zip(p.gains, p.aoa, p.aod))
        np.testing.assert_allclose(subchannel_matrix(p, 8, 12), np.sqrt(96 / 3) * H, atol=1e-13)

    def test_singular_values_approach_ray_gains(self):
        rng = np.random.default_rng(3)
        errs = []
        for _ in range(50):
            p = _random_paths(rng, 3)
            s = np.linalg.svd(subchannel_matrix(p, 64, 256), compute_uv=False)[:3]
            ref = np.sort(np.sqrt(256 * 64 / 3) * np.abs(p.gains))[::-1]
            errs.append(np.max(np.abs(s - ref) / ref))
        assert np.median(errs) < 0.05


class TestAssembly:
    def test_block_energy_identity(self):
        g = SystemGeometry(M_t=3, M_r=2, N_t=16, N_r=8)
        p = FadingProfile(np.array([[1, 2, 3], [2, 2, 1]]), np.array([[-20, -25, -30], [-10, -40, -20.0]]))
        ch = realize(g, p, 5)
        assert np.sum(np.abs(ch.H) ** 2) == pytest.approx(ch.block_energy(), rel=1e-10)

    def test_zeroed_block(self):
        g = SystemGeometry(M_t=2, M_r=1, N_t=8, N_r=4)
        ch = realize(g, FadingProfile([[2, 2]], [[-20, -np.inf]]), 3)
        assert not np.any(ch.H[:, 8:])
        assert np.any(ch.H[:, :8])

    @pytest.mark.parametrize("N_t", [64, 128])
    def test_rank_equals_total_paths(self, N_t):
        g = SystemGeometry(M_t=2, M_r=2, N_t=N_t, N_r=N_t // 2)
        p = FadingProfile.homogeneous(2, 2, L=2)
        for seed in range(5):
            assert numerical_rank(realize(g, p, seed).H) == theoretical_rank(p) == 8

    def test_theoretical_rank(self):
        assert theoretical_rank(FadingProfile.homogeneous(1, 3, L=2)) == 6
        assert theoretical_rank(FadingProfile([[5]], [[0.0]])) == 5
        assert theoretical_rank(FadingProfile([[3, 9], [1, 1]], np.zeros((2, 2))), user=0) == 12

    def test_multi_user_row_blocks(self):
        g = SystemGeometry("multi-user", M_t=2, N_t=16, N_r=4, K=2, N_s=1)
        ch = realize(g, FadingProfile.homogeneous(2, 2), 0)
        assert ch.H.shape == (8, 32)
        assert np.array_equal(ch.user_channel(1), ch.H[4:])
        assert len(ch.user_channels) == 2

    def test_gain_count_mismatch(self):
        g = SystemGeometry(N_t=8, N_r=4)
        p = FadingProfile.homogeneous(1, 1, L=2)
        bad = PathSet({(0, 0): _random_paths(np.random.default_rng(0), 3)})
        with pytest.raises(ValueError):
            assemble_channel(g, p, bad)


class TestCompactSvd:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.integers(1, 2), st.integers(1, 2), st.integers(1, 3))
    def test_matches_dense_svd(self, seed, M_r, M_t, L):
        g = SystemGeometry(M_t=M_t, M_r=M_r, N_t=16, N_r=8)
        p = FadingProfile(np.full((M_r, M_t), L), np.random.default_rng(seed).uniform(-30, -10, (M_r, M_t)))
        ch = realize(g, p, seed)
        R, d, T = compact_factors(g, p, *flatten_paths(p, ch.paths))
        np.testing.assert_allclose(R @ np.diag(d) @ T.conj().T, ch.H, atol=1e-12)
        U, s, V = compact_svd(R, d, T)
        dense = np.linalg.svd(ch.H, compute_uv=False)[:s.size]
        np.testing.assert_allclose(s, dense, rtol=1e-9, atol=1e-12 * dense[0])
        np.testing.assert_allclose(U @ np.diag(s) @ V.conj().T, ch.H, atol=1e-10)


def test_matrix_dump_round_trip(tmp_path):
    H = realize(SystemGeometry(N_t=8, N_r=4), FadingProfile.homogeneous(1, 1), 0).H
    dump_matrix(H, tmp_path / "h.txt")
    assert np.array_equal(load_matrix(tmp_path / "h.txt"), H)
