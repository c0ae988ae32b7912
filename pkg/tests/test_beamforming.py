"""SVD beamformers and hybrid block diagonalization."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicmb.beamforming import (BeamformerSet, aligned_svd, effective_channel_report, hybrid_bd_mu,
                               svd_beamformers_su)
from bicmb.channel import FadingProfile, SystemGeometry, realize
from bicmb.errors import InfeasibleConfigurationError


def mu_setup(N_s, seed, K=2, M=2, N_t=64, N_r=16, L=2):
    g = SystemGeometry("multi-user", M_t=M, N_t=N_t, N_r=N_r, K=K, N_s=N_s)
    ch = realize(g, FadingProfile.homogeneous(K, M, L=L), seed)
    return g, ch


class TestAlignedSvd:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.integers(1, 6), st.integers(1, 6))
    def test_reconstructs_with_phase_convention(self, seed, r, c):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((r, c)) + 1j * rng.standard_normal((r, c))
        U, s, V = aligned_svd(A)
        np.testing.assert_allclose(U @ np.diag(s) @ V.conj().T, A, atol=1e-12)
        mags = np.abs(V)
        first = np.argmax(mags > 1e-12 * mags.max(axis=0), axis=0)
        ref = V[first, np.arange(V.shape[1])]
        assert np.all(np.abs(ref.imag) < 1e-12) and np.all(ref.real > 0)

    def test_reproducible(self):
        A = realize(SystemGeometry(N_t=16, N_r=8), FadingProfile.homogeneous(1, 1, L=3), 0).H
        a, b = aligned_svd(A), aligned_svd(A.copy())
        for x, y in zip(a, b):
            assert np.array_equal(x, y)


class TestSingleUser:
    @pytest.mark.parametrize("N_s", [1, 2, 4])
    def test_orthonormal_and_diagonal(self, N_s):
        g = SystemGeometry(M_t=2, M_r=2, N_t=32, N_r=16)
        H = realize(g, FadingProfile.homogeneous(2, 2), 3).H
        bf = svd_beamformers_su(H, N_s)
        np.testing.assert_allclose(bf.U_ns.conj().T @ bf.U_ns, np.eye(N_s), atol=1e-10)
        np.testing.assert_allclose(bf.V_ns.conj().T @ bf.V_ns, np.eye(N_s), atol=1e-10)
        E = bf.U_ns.conj().T @ H @ bf.V_ns
        np.testing.assert_allclose(np.diag(E).real, bf.lam, rtol=1e-10)
        assert np.all(np.diff(bf.lam) <= 0) and np.all(bf.lam >= 0)
        report = effective_channel_report(bf, H)
        assert report["intersymbol_leakage_ratio"] < 1e-20

    def test_diagonal_channel(self):
        bf = svd_beamformers_su(np.diag([3.0, 2.0, 1.0]).astype(complex), 2)
        np.testing.assert_allclose(bf.lam, [3.0, 2.0])
        np.testing.assert_allclose(np.abs(bf.V_ns), np.eye(3)[:, :2], atol=1e-12)

    def test_permutation_channel(self):
        bf = svd_beamformers_su(np.array([[0, 1], [1, 0]], dtype=complex), 2)
        np.testing.assert_allclose(bf.lam, [1.0, 1.0])

    def test_too_many_streams(self):
        H = realize(SystemGeometry(N_t=16, N_r=8), FadingProfile.homogeneous(1, 1, L=2), 0).H
        with pytest.raises(ValueError, match="rank 2"):
            svd_beamformers_su(H, 3)


class TestHybridBD:
    @pytest.mark.parametrize("N_s", [1, 2, 3])
    def test_column_normalization_and_power(self, N_s):
        g, ch = mu_setup(N_s, seed=1, L=3)
        bf = hybrid_bd_mu(ch.user_channels, g)
        F = bf.precoder()
        np.testing.assert_allclose(np.linalg.norm(F, axis=0), 1.0, atol=1e-12)
        assert np.linalg.norm(F) ** 2 == pytest.approx(g.K * N_s)
        assert bf.F_rf.shape == (g.M * g.N_t, g.N_t_rf)
        assert bf.F_bb.shape == (g.N_t_rf, g.K * N_s)
        assert all(W.shape == (g.N_r, g.N_r_rf) for W in bf.W_rf)
        assert all(W.shape == (g.N_r_rf, N_s) for W in bf.W_bb)
        np.testing.assert_array_equal(bf.P, np.eye(g.K * N_s))

    @pytest.mark.parametrize("N_s", [1, 3])
    def test_interference_removed(self, N_s):
        g, ch = mu_setup(N_s, seed=2)
        bf = hybrid_bd_mu(ch.user_channels, g)
        for u in effective_channel_report(bf, ch.user_channels)["users"]:
            assert u["interuser_leakage_ratio"] < 1e-18
            assert u["intersymbol_leakage_ratio"] < 1e-18

    def test_sigma_is_effective_diagonal(self):
        g, ch = mu_setup(2, seed=3)
        bf = hybrid_bd_mu(ch.user_channels, g)
        for k, H_k in enumerate(ch.user_channels):
            E = bf.effective_matrix(k, H_k)
            np.testing.assert_allclose(np.diag(E[:, 2 * k:2 * k + 2]), bf.sigma[k], rtol=1e-10)

    def test_combiners_have_orthonormal_columns(self):
        # keeps the post-combining noise white with variance N_0
        g, ch = mu_setup(2, seed=4)
        bf = hybrid_bd_mu(ch.user_channels, g)
        for W_rf, W_bb in zip(bf.W_rf, bf.W_bb):
            W = W_rf @ W_bb
            np.testing.assert_allclose(W.conj().T @ W, np.eye(2), atol=1e-12)

    @pytest.mark.parametrize("seed", [5, 6, 7])
    def test_single_user_matches_fully_digital_svd(self, seed):
        g = SystemGeometry("multi-user", M_t=2, N_t=32, N_r=16, K=1, N_s=2)
        ch = realize(g, FadingProfile.homogeneous(1, 2, L=3), seed)
        bf = hybrid_bd_mu(ch.user_channels, g)
        digital = svd_beamformers_su(ch.user_channels[0], 2)
        np.testing.assert_allclose(bf.sigma[0], digital.lam, rtol=1e-6)

    def test_mismatched_precoder_leaks(self):
        g, ch = mu_setup(1, seed=9)
        bf = hybrid_bd_mu(ch.user_channels, g)
        rng = np.random.default_rng(0)
        Q, _ = np.linalg.qr(rng.standard_normal(bf.F_bb.shape) + 1j * rng.standard_normal(bf.F_bb.shape))
        bad = dataclasses.replace(bf, F_bb=Q)
        for u in effective_channel_report(bad, ch.user_channels)["users"]:
            assert u["interuser_leakage_ratio"] > 1e-3

    def test_zero_user_channel_is_infeasible(self):
        g = SystemGeometry("multi-user", M_t=1, N_t=32, N_r=8, K=2, N_s=1)
        ch = realize(g, FadingProfile([[2], [2]], [[-np.inf], [-20.0]]), 0)
        with pytest.raises(InfeasibleConfigurationError) as info:
            hybrid_bd_mu(ch.user_channels, g)
        assert info.value.user == 0

    def test_wrong_user_count(self):
        g, ch = mu_setup(1, seed=0)
        with pytest.raises(ValueError):
            hybrid_bd_mu(ch.user_channels[:1], g)


def test_report_on_single_user_set_type():
    bf = BeamformerSet(np.eye(2), np.eye(2), np.array([2.0, 1.0]))
    report = effective_channel_report(bf, np.diag([2.0, 1.0]))
    assert report["desired_gains"] == [2.0, 1.0]
    assert report["intersymbol_leakage"] == 0.0
