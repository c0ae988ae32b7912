"""Distributed mm-Wave channel synthesis.

Subchannels between a receive RAU ``i`` and a transmit RAU ``j`` follow a
single-ray-per-cluster Saleh-Valenzuela model over ULAs::

    H_ij = sqrt(N_t * N_r / L_ij) * sum_l alpha_l a_r(theta_l) a_t(phi_l)^H

and the full channel stacks the blocks ``sqrt(beta_ij) * H_ij``.  In
multi-user mode row ``k`` of the fading profile describes user ``k``, who owns
a single receive RAU, so the stacked matrix splits into per-user row blocks
``H_k = [sqrt(beta_k1) H_k1 ... sqrt(beta_kM) H_kM]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence, Union

import numpy as np

from .errors import ConfigError

SINGLE_USER = "single-user"
MULTI_USER = "multi-user"

RANK_RTOL = 1e-8

SeedLike = Union[int, Sequence[int]]

# spawn-key prefix separating path streams from data streams of the same seed
PATH_STREAM = 1


@dataclass(frozen=True)
class SystemGeometry:
    """Antenna, RAU, RF-chain and stream counts for one scenario.

    In multi-user mode ``M_t`` is the number of base-station RAUs (``M``) and
    each of the ``K`` users has one RAU, so ``M_r`` is forced to 1.  RF-chain
    counts default to twice the stream count they must carry.
    """

    mode: str = SINGLE_USER
    M_t: int = 1
    M_r: int = 1
    N_t: int = 64
    N_r: int = 32
    K: int = 1
    N_s: int = 1
    N_t_rf: int | None = None
    N_r_rf: int | None = None
    d_lambda: float = 0.5

    def __post_init__(self):
        if self.mode not in (SINGLE_USER, MULTI_USER):
            raise ConfigError(f"mode must be {SINGLE_USER!r} or {MULTI_USER!r}, got {self.mode!r}", key="mode")
        for name in ("M_t", "M_r", "N_t", "N_r", "K", "N_s"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}", key=name)
        if self.mode == SINGLE_USER and self.K != 1:
            raise ConfigError("single-user mode requires K = 1", key="K")
        if self.mode == MULTI_USER and self.M_r != 1:
            raise ConfigError("multi-user mode uses one RAU per user (M_r = 1)", key="M_r")
        if not self.d_lambda > 0:
            raise ConfigError(f"d_lambda must be positive, got {self.d_lambda!r}", key="d_lambda")
        if self.N_t_rf is None:
            object.__setattr__(self, "N_t_rf", 2 * self.K * self.N_s)
        if self.N_r_rf is None:
            object.__setattr__(self, "N_r_rf", 2 * self.N_s)
        if not self.N_s <= self.N_r_rf <= self.M_r * self.N_r:
            raise ConfigError(
                f"need N_s <= N_r_rf <= M_r*N_r, got N_s={self.N_s}, N_r_rf={self.N_r_rf}, "
                f"M_r*N_r={self.M_r * self.N_r}",
                key="N_r_rf",
            )
        if not self.K * self.N_s <= self.N_t_rf <= self.M_t * self.N_t:
            raise ConfigError(
                f"need K*N_s <= N_t_rf <= M_t*N_t, got K*N_s={self.K * self.N_s}, "
                f"N_t_rf={self.N_t_rf}, M_t*N_t={self.M_t * self.N_t}",
                key="N_t_rf",
            )

    @property
    def multi_user(self) -> bool:
        return self.mode == MULTI_USER

    @property
    def M(self) -> int:
        """Transmit RAU count under its multi-user name."""
        return self.M_t

    @property
    def profile_shape(self) -> tuple[int, int]:
        return (self.K, self.M_t) if self.multi_user else (self.M_r, self.M_t)

    @property
    def rx_dim(self) -> int:
        """Rows of one receiver's channel matrix."""
        return self.M_r * self.N_r

    @property
    def tx_dim(self) -> int:
        return self.M_t * self.N_t


def _readonly(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FadingProfile:
    """Path counts ``L`` and large-scale coefficients ``beta_db`` per RAU pair.

    Rows index receive RAUs (single-user) or users (multi-user); columns index
    transmit RAUs.  ``-inf`` dB zeroes a block.
    """

    L: np.ndarray
    beta_db: np.ndarray

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.L))
        beta_db = np.atleast_2d(np.asarray(self.beta_db, dtype=float))
        if L.ndim != 2 or beta_db.ndim != 2:
            raise ConfigError("L and beta_db must be matrices", key="L")
        if L.shape != beta_db.shape:
            raise ConfigError(f"L shape {L.shape} differs from beta_db shape {beta_db.shape}", key="beta_db")
        if not np.all(np.equal(np.mod(L, 1), 0)) or np.any(L < 1):
            raise ConfigError("every path count L must be an integer >= 1", key="L")
        if np.any(np.isnan(beta_db)) or np.any(beta_db == np.inf):
            raise ConfigError("beta_db entries must be finite or -inf", key="beta_db")
        object.__setattr__(self, "L", _readonly(L.astype(int)))
        object.__setattr__(self, "beta_db", _readonly(beta_db))

    @classmethod
    def homogeneous(cls, rows: int, cols: int, L: int = 2, beta_db: float = -20.0) -> "FadingProfile":
        return cls(np.full((rows, cols), L), np.full((rows, cols), float(beta_db)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.L.shape

    @property
    def beta(self) -> np.ndarray:
        """Linear-scale coefficients."""
        return 10.0 ** (self.beta_db / 10.0)

    def pairs(self) -> Iterator[tuple[int, int]]:
        rows, cols = self.shape
        for i in range(rows):
            for j in range(cols):
                yield i, j

    def check(self, geometry: SystemGeometry) -> None:
        if self.shape != geometry.profile_shape:
            raise ConfigError(
                f"profile shape {self.shape} does not match geometry {geometry.profile_shape}", key="L"
            )


class PairPaths(NamedTuple):
    gains: np.ndarray
    aoa: np.ndarray
    aod: np.ndarray


@dataclass(frozen=True)
class PathSet:
    """Ray gains and angles for every RAU pair, indexed ``paths[i, j]``."""

    pairs: dict = field(repr=False)

    def __getitem__(self, ij) -> PairPaths:
        return self.pairs[tuple(ij)]

    def total_paths(self) -> int:
        return sum(len(p.gains) for p in self.pairs.values())


def pair_rng(seed: SeedLike, i: int, j: int) -> np.random.Generator:
    """Independent stream for RAU pair ``(i, j)`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(PATH_STREAM, i, j)))


def draw_paths(profile: FadingProfile, seed: SeedLike) -> PathSet:
    """Draw CN(0,1) gains and uniform [-pi/2, pi/2] angles for every pair.

    Each pair uses its own derived stream, so the draw for ``(i, j)`` does not
    depend on the other pairs or on execution order.
    """
    pairs = {}
    for i, j in profile.pairs():
        n = int(profile.L[i, j])
        rng = pair_rng(seed, i, j)
        gains = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
        aoa = rng.uniform(-np.pi / 2, np.pi / 2, n)
        aod = rng.uniform(-np.pi / 2, np.pi / 2, n)
        pairs[i, j] = PairPaths(_readonly(gains), _readonly(aoa), _readonly(aod))
    return PathSet(pairs)


def draw_paths_batch(profile: FadingProfile, seed: SeedLike, n: int) -> dict:
    """``n`` independent draws per pair from the same per-pair streams.

    Returns ``{(i, j): PairPaths}`` with arrays of shape ``(n, L_ij)``.  With
    ``n == 1`` the values equal :func:`draw_paths` under the same seed.
    """
    out = {}
    for i, j in profile.pairs():
        L = int(profile.L[i, j])
        rng = pair_rng(seed, i, j)
        # (L, n) blocks transposed, so n == 1 reproduces the draw_paths layout
        re = rng.standard_normal((L, n)).T
        im = rng.standard_normal((L, n)).T
        aoa = rng.uniform(-np.pi / 2, np.pi / 2, (L, n)).T
        aod = rng.uniform(-np.pi / 2, np.pi / 2, (L, n)).T
        out[i, j] = PairPaths((re + 1j * im) / np.sqrt(2.0), aoa, aod)
    return out


def ula_response(phi, N: int, d_lambda: float = 0.5) -> np.ndarray:
    """Unit-norm ULA response; shape ``np.shape(phi) + (N,)``."""
    if N < 1:
        raise ValueError(f"antenna count must be >= 1, got {N}")
    phi = np.asarray(phi, dtype=float)
    n = np.arange(N)
    phase = 2.0 * np.pi * d_lambda * np.sin(phi)[..., None] * n
    return np.exp(1j * phase) / np.sqrt(N)


def subchannel_matrix(paths: PairPaths, N_r: int, N_t: int, d_lambda: float = 0.5) -> np.ndarray:
    """Normalized ``N_r x N_t`` subchannel for one RAU pair."""
    gains = np.asarray(paths.gains)
    L = gains.shape[-1]
    a_r = ula_response(paths.aoa, N_r, d_lambda)  # (..., L, N_r)
    a_t = ula_response(paths.aod, N_t, d_lambda)
    H = np.einsum("...l,...lr,...lt->...rt", gains, a_r, a_t.conj())
    return np.sqrt(N_t * N_r / L) * H


@dataclass(frozen=True)
class ChannelRealization:
    """Assembled channel for one draw.

    ``H`` is the stacked matrix: ``M_r*N_r x M_t*N_t`` for a single user, or the
    ``K*N_r x M*N_t`` concatenation of the user row blocks in multi-user mode.
    """

    geometry: SystemGeometry
    profile: FadingProfile
    paths: PathSet
    H: np.ndarray
    blocks: dict = field(repr=False)
    seed: object = None

    def user_channel(self, k: int) -> np.ndarray:
        """``H_k`` for user ``k`` (the whole ``H`` in single-user mode)."""
        if not self.geometry.multi_user:
            if k != 0:
                raise IndexError("single-user realization has only user 0")
            return self.H
        n = self.geometry.N_r
        return self.H[k * n:(k + 1) * n]

    @property
    def user_channels(self) -> list[np.ndarray]:
        return [self.user_channel(k) for k in range(self.geometry.K)]

    def block_energy(self) -> float:
        """``sum_ij beta_ij ||H_ij||_F^2`` from the unscaled subchannels."""
        beta = self.profile.beta
        return float(sum(beta[ij] * np.sum(np.abs(Hij) ** 2) for ij, Hij in self.blocks.items()))


def assemble_channel(geometry: SystemGeometry, profile: FadingProfile, paths: PathSet,
                     seed=None) -> ChannelRealization:
    profile.check(geometry)
    rows, cols = profile.shape
    for i, j in profile.pairs():
        if len(paths[i, j].gains) != profile.L[i, j]:
            raise ValueError(f"pair ({i}, {j}) has {len(paths[i, j].gains)} gains, profile says {profile.L[i, j]}")
    N_r, N_t = geometry.N_r, geometry.N_t
    beta = profile.beta
    H = np.zeros((rows * N_r, cols * N_t), dtype=complex)
    blocks = {}
    for i, j in profile.pairs():
        Hij = subchannel_matrix(paths[i, j], N_r, N_t, geometry.d_lambda)
        blocks[i, j] = _readonly(Hij)
        H[i * N_r:(i + 1) * N_r, j * N_t:(j + 1) * N_t] = np.sqrt(beta[i, j]) * Hij
    return ChannelRealization(geometry, profile, paths, _readonly(H), blocks, seed)


def realize(geometry: SystemGeometry, profile: FadingProfile, seed: SeedLike) -> ChannelRealization:
    """Draw paths under ``seed`` and assemble the channel."""
    return assemble_channel(geometry, profile, draw_paths(profile, seed), seed=seed)


def theoretical_rank(profile: FadingProfile, user: int | None = None) -> int:
    """Number of usable subchannels ``L_t``: total paths, or one user's row."""
    if user is None:
        return int(profile.L.sum())
    return int(profile.L[user].sum())


def numerical_rank(H: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(H, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def flatten_paths(profile: FadingProfile, paths: PathSet):
    """Per-ray arrays in pair order: (gains, aoa, aod)."""
    keys = list(profile.pairs())
    return (np.concatenate([paths[k].gains for k in keys]),
            np.concatenate([paths[k].aoa for k in keys]),
            np.concatenate([paths[k].aod for k in keys]))


def compact_factors(geometry: SystemGeometry, profile: FadingProfile, gains, aoa, aod):
    """Factor the channel as ``R @ diag(d) @ T^H`` without forming it.

    ``gains``, ``aoa`` and ``aod`` are ray arrays in :func:`flatten_paths`
    order with optional leading batch axes.  ``R`` has one column per ray
    holding ``a_r`` in its receive RAU's rows (likewise ``T``), and ``d`` holds
    the per-ray scale ``sqrt(beta_ij * N_t * N_r / L_ij) * alpha``.  Every
    ray contributes one column, so ``H`` has at most ``L_t`` nonzero singular
    values and they can be read off an ``L_t x L_t`` core.
    """
    N_r, N_t = geometry.N_r, geometry.N_t
    row_of, col_of, scale = [], [], []
    beta = profile.beta
    for i, j in profile.pairs():
        n = int(profile.L[i, j])
        row_of += [i] * n
        col_of += [j] * n
        scale += [np.sqrt(beta[i, j] * N_t * N_r / n)] * n
    row_of, col_of = np.array(row_of), np.array(col_of)
    gains = np.asarray(gains)
    batch = gains.shape[:-1]
    L_t = gains.shape[-1]
    rows_total = profile.shape[0] * N_r
    cols_total = profile.shape[1] * N_t
    R = np.zeros(batch + (rows_total, L_t), dtype=complex)
    T = np.zeros(batch + (cols_total, L_t), dtype=complex)
    a_r = np.swapaxes(ula_response(aoa, N_r, geometry.d_lambda), -1, -2)
    a_t = np.swapaxes(ula_response(aod, N_t, geometry.d_lambda), -1, -2)
    for col in range(L_t):
        i, j = row_of[col], col_of[col]
        R[..., i * N_r:(i + 1) * N_r, col] = a_r[..., :, col]
        T[..., j * N_t:(j + 1) * N_t, col] = a_t[..., :, col]
    d = gains * np.array(scale)
    return R, d, T


def compact_svd(R, d, T):
    """Thin SVD of ``R diag(d) T^H`` through QR of the ray factors.

    Returns ``(U, s, V)`` with ``L_t`` columns, singular values descending.
    """
    Qr, Rr = np.linalg.qr(R)
    Qt, Rt = np.linalg.qr(T)
    core = (Rr * d[..., None, :]) @ np.conj(np.swapaxes(Rt, -1, -2))
    Uc, s, Vch = np.linalg.svd(core)
    return Qr @ Uc, s, Qt @ np.conj(np.swapaxes(Vch, -1, -2))


def dump_matrix(H: np.ndarray, path) -> None:
    """Write a complex matrix as text: a ``rows cols`` header, then one line
    per row with real and imaginary parts interleaved."""
    H = np.atleast_2d(H)
    flat = np.empty((H.shape[0], 2 * H.shape[1]))
    flat[:, 0::2] = H.real
    flat[:, 1::2] = H.imag
    with open(path, "w") as fh:
        fh.write(f"{H.shape[0]} {H.shape[1]}\n")
        np.savetxt(fh, flat, fmt="%.17g")


def load_matrix(path) -> np.ndarray:
    with open(path) as fh:
        rows, cols = (int(v) for v in fh.readline().split())
        flat = np.loadtxt(fh, ndmin=2).reshape(rows, 2 * cols)
    return flat[:, 0::2] + 1j * flat[:, 1::2]
