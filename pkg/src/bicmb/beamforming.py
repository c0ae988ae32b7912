"""Single-user SVD beamforming and multi-user hybrid block diagonalization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import RANK_RTOL, SystemGeometry
from .errors import InfeasibleConfigurationError


def aligned_svd(A: np.ndarray, full_matrices: bool = False):
    """SVD with a fixed phase convention.

    The first non-negligible entry of every right singular vector is made
    real-positive and the paired left vector is rotated to match, so the
    factorization is reproducible.  Returns ``(U, s, V)`` (``V`` not ``V^H``).
    """
    U, s, Vh = np.linalg.svd(A, full_matrices=full_matrices)
    V = Vh.conj().T
    mags = np.abs(V)
    first = np.argmax(mags > 1e-12 * mags.max(axis=0, initial=0.0), axis=0)
    ref = V[first, np.arange(V.shape[1])]
    phase = np.ones_like(ref)
    nz = np.abs(ref) > 0
    phase[nz] = ref[nz] / np.abs(ref[nz])
    V = V * phase.conj()
    k = min(U.shape[1], V.shape[1])
    U = U.copy()
    U[:, :k] *= phase[:k].conj()
    return U, s, V


def _rank(s: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


@dataclass(frozen=True)
class BeamformerSet:
    """Single-user precoder ``V_ns``, combiner ``U_ns`` and gains ``lam``."""

    V_ns: np.ndarray
    U_ns: np.ndarray
    lam: np.ndarray

    @property
    def N_s(self) -> int:
        return self.lam.size


def svd_beamformers_su(H: np.ndarray, N_s: int) -> BeamformerSet:
    U, s, V = aligned_svd(H)
    rank = _rank(s)
    if N_s > rank:
        raise ValueError(f"N_s={N_s} exceeds the numerical rank {rank} of H")
    return BeamformerSet(V[:, :N_s], U[:, :N_s], s[:N_s].copy())


@dataclass(frozen=True)
class MuBeamformerSet:
    """Hybrid precoders/combiners for ``K`` users.

    ``F_rf`` (``M*N_t x N_t_rf``) and ``F_bb`` (``N_t_rf x K*N_s``) are shared;
    ``W_rf[k]`` and ``W_bb[k]`` are user ``k``'s combiners.  ``sigma[k, s]``
    is the gain of stream ``s`` of user ``k`` after combining (in stream
    order, not sorted).  Power
    allocation is the identity.
    """

    F_rf: np.ndarray
    F_bb: np.ndarray
    W_rf: tuple
    W_bb: tuple
    sigma: np.ndarray
    P: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.P is None:
            object.__setattr__(self, "P", np.eye(self.F_bb.shape[1]))

    @property
    def K(self) -> int:
        return len(self.W_rf)

    @property
    def N_s(self) -> int:
        return self.sigma.shape[1]

    def precoder(self) -> np.ndarray:
        return self.F_rf @ self.F_bb

    def effective_matrix(self, k: int, H_k: np.ndarray) -> np.ndarray:
        """``W_bb_k^H W_rf_k^H H_k F_rf F_bb`` (``N_s x K*N_s``)."""
        return self.W_bb[k].conj().T @ self.W_rf[k].conj().T @ H_k @ self.precoder()


def hybrid_bd_mu(channels: Sequence[np.ndarray], geometry: SystemGeometry) -> MuBeamformerSet:
    """Two-stage hybrid block-diagonalization beamforming.

    RF combiners come from each user's dominant left singular subspace, the RF
    precoder from the dominant right subspace of the stacked RF-combined
    channel, and the baseband stage nulls every other user's baseband channel
    before a per-user SVD.
    """
    K, N_s = geometry.K, geometry.N_s
    N_t_rf, N_r_rf = geometry.N_t_rf, geometry.N_r_rf
    if len(channels) != K:
        raise ValueError(f"expected {K} user channels, got {len(channels)}")
    scale = 1.0 / np.sqrt(geometry.N_t)

    W_rf = []
    for H_k in channels:
        U_k, _, _ = aligned_svd(scale * H_k)
        W_rf.append(U_k[:, :N_r_rf])
    H_comp = np.vstack([W.conj().T @ H_k for W, H_k in zip(W_rf, channels)])
    _, _, V_comp = aligned_svd(scale * H_comp)
    if V_comp.shape[1] < N_t_rf:
        _, _, V_comp = aligned_svd(scale * H_comp, full_matrices=True)
    F_rf = V_comp[:, :N_t_rf]
    H_bb = [W.conj().T @ H_k @ F_rf for W, H_k in zip(W_rf, channels)]

    F_bb = np.zeros((N_t_rf, K * N_s), dtype=complex)
    W_bb = []
    for k in range(K):
        others = [H_bb[l] for l in range(K) if l != k]
        if others:
            _, s_o, V_o = aligned_svd(np.vstack(others), full_matrices=True)
            null = V_o[:, _rank(s_o):]
        else:
            null = np.eye(N_t_rf, dtype=complex)
        if null.shape[1] < N_s:
            raise InfeasibleConfigurationError(
                f"user {k}: null space of other users has dimension {null.shape[1]} < N_s={N_s}", user=k)
        U_p, s_p, V_p = aligned_svd(H_bb[k] @ null)
        if _rank(s_p) < N_s or (s_p.size and s_p[0] == 0):
            raise InfeasibleConfigurationError(
                f"user {k}: projected baseband channel has rank {_rank(s_p)} < N_s={N_s}", user=k)
        F_bb[:, k * N_s:(k + 1) * N_s] = null @ V_p[:, :N_s]
        W_bb.append(U_p[:, :N_s])

    F_bb = F_bb / np.linalg.norm(F_rf @ F_bb, axis=0)

    sigma = np.empty((K, N_s))
    for k in range(K):
        own = W_bb[k].conj().T @ H_bb[k] @ F_bb[:, k * N_s:(k + 1) * N_s]
        # own is diag(s_p) up to column scaling, so its diagonal is real positive
        sigma[k] = np.abs(np.diag(own))
    return MuBeamformerSet(F_rf, F_bb, tuple(W_rf), tuple(W_bb), sigma)


def effective_channel_report(beamformers, channels) -> dict:
    """Desired gains and leakage powers of the post-beamforming channel.

    ``channels`` is ``H`` for a :class:`BeamformerSet` or the list of user
    channels for a :class:`MuBeamformerSet`.  Leakage powers are sums of
    squared magnitudes; ratios are taken against the desired power.
    """
    if isinstance(beamformers, BeamformerSet):
        H = np.asarray(channels)
        E = beamformers.U_ns.conj().T @ H @ beamformers.V_ns
        En = E / np.linalg.norm(H)
        diag = np.diag(E)
        off = En - np.diag(np.diag(En))
        return {
            "desired_gains": np.abs(diag).tolist(),
            "intersymbol_leakage": float(np.sum(np.abs(off) ** 2)),
            "intersymbol_leakage_ratio": float(np.sum(np.abs(E - np.diag(diag)) ** 2) / np.sum(np.abs(diag) ** 2)),
        }

    N_s = beamformers.N_s
    users = []
    for k, H_k in enumerate(channels):
        E = beamformers.effective_matrix(k, H_k)
        own = E[:, k * N_s:(k + 1) * N_s]
        other = np.delete(E, np.s_[k * N_s:(k + 1) * N_s], axis=1)
        desired = float(np.sum(np.abs(np.diag(own)) ** 2))
        own_power = float(np.sum(np.abs(own) ** 2))
        isi = float(np.sum(np.abs(own - np.diag(np.diag(own))) ** 2))
        iui = float(np.sum(np.abs(other) ** 2))
        users.append({
            "user": k,
            "desired_gains": np.abs(np.diag(own)).tolist(),
            "intersymbol_leakage": isi,
            "interuser_leakage": iui,
            "intersymbol_leakage_ratio": isi / desired if desired else float("inf"),
            "interuser_leakage_ratio": iui / own_power if own_power else float("inf"),
        })
    return {"users": users}
