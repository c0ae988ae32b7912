"""Closed-form diversity analysis, union bounds and BER-slope estimation.

Channel energy ``Theta = ||H||_F^2`` is modelled as ``N_r * N_t`` times a sum
of independent Gamma variables ``Psi_ij ~ G(L_ij, beta_ij / L_ij)`` (the
per-pair ray power ``sum_l |alpha_l|^2 / L_ij`` for CN(0,1) gains), which is
collapsed into a single Gamma by Welch-Satterthwaite moment matching.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .channel import (FadingProfile, MULTI_USER, SINGLE_USER, SystemGeometry, draw_paths_batch,
                      ula_response)
from .convcode import CodeSpec, DistanceSpectrum, error_events
from .errors import InsufficientDataError, SpectrumNotFoundError

DEFAULT_TRUNCATION = 8
SLOPE_WINDOW_DB = 10.0
MIN_ERRORS = 100


@dataclass(frozen=True)
class GammaApprox:
    """Gamma law with shape ``k`` and scale ``theta``."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"shape and scale must be positive, got {self.shape}, {self.scale}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def variance(self) -> float:
        return self.shape * self.scale ** 2

    def mgf_neg(self, c):
        """``E[exp(-c X)] = (1 + theta c)^(-k)`` for ``c >= 0``."""
        return (1.0 + self.scale * np.asarray(c, dtype=float)) ** (-self.shape)

    def to_dict(self) -> dict:
        return {"shape": self.shape, "scale": self.scale}


def welch_satterthwaite(shapes, scales) -> GammaApprox:
    """Moment-matched Gamma for a sum of independent ``G(shape_i, scale_i)``."""
    shapes = np.asarray(shapes, dtype=float).ravel()
    scales = np.asarray(scales, dtype=float).ravel()
    keep = scales > 0
    if not keep.any():
        raise ValueError("every component has zero scale; the sum is identically zero")
    mean = np.sum(shapes[keep] * scales[keep])
    var = np.sum(shapes[keep] * scales[keep] ** 2)
    return GammaApprox(float(mean ** 2 / var), float(var / mean))


def gamma_approx_su(profile: FadingProfile) -> GammaApprox:
    """``k = (sum beta)^2 / sum(beta^2 / L)``, ``theta = sum(beta^2 / L) / sum beta``."""
    beta = profile.beta
    L = profile.L.astype(float)
    if not np.any(beta > 0):
        raise ValueError("all large-scale coefficients are zero; the Gamma approximation is undefined")
    return welch_satterthwaite(L, beta / L)


def gamma_approx_mu(profile: FadingProfile, user: int) -> GammaApprox:
    """``kappa_k = M^2 / sum_j 1/L_kj``, ``theta_k = sum_j (1/L_kj) / M``."""
    if not 0 <= user < profile.shape[0]:
        raise IndexError(f"user {user} outside 0..{profile.shape[0] - 1}")
    inv = 1.0 / profile.L[user].astype(float)
    M = inv.size
    return GammaApprox(float(M ** 2 / inv.sum()), float(inv.sum() / M))


def diversity_gain(profile: FadingProfile, mode: str = SINGLE_USER, user: Optional[int] = None) -> float:
    if mode == SINGLE_USER:
        return gamma_approx_su(profile).shape
    if mode == MULTI_USER:
        if user is None:
            raise ValueError("multi-user diversity gain needs a user index")
        return gamma_approx_mu(profile, user).shape
    raise ValueError(f"unknown mode {mode!r}")


def channel_energy(H) -> float:
    """``Theta = ||H||_F^2``."""
    H = np.asarray(H)
    return float(np.vdot(H, H).real)


def pair_energy(gains, aoa, aod, N_r: int, N_t: int, d_lambda: float = 0.5) -> np.ndarray:
    """``||H_ij||_F^2`` from ray parameters without forming ``H_ij``.

    Uses the ray Gram matrices, so the cost is ``O(L^2 (N_r + N_t))`` per
    realization.  Leading axes of the inputs are batch axes.
    """
    gains = np.asarray(gains)
    L = gains.shape[-1]
    a_r = ula_response(aoa, N_r, d_lambda)
    a_t = ula_response(aod, N_t, d_lambda)
    G_r = a_r.conj() @ np.swapaxes(a_r, -1, -2)   # [p, q] = a_r,p^H a_r,q
    G_t = a_t @ np.swapaxes(a_t.conj(), -1, -2)   # [p, q] = a_t,q^H a_t,p
    w = gains.conj()[..., :, None] * gains[..., None, :]
    e = np.sum(w * G_r * G_t, axis=(-2, -1)).real
    return (N_t * N_r / L) * e


def sample_channel_energy(geometry: SystemGeometry, profile: FadingProfile, n: int, seed,
                          user: Optional[int] = None) -> np.ndarray:
    """``n`` draws of ``Theta`` (of ``H_k`` when ``user`` is given).

    Paths come from the per-pair seeded streams of the channel module.
    """
    profile.check(geometry)
    draws = draw_paths_batch(profile, seed, n)
    beta = profile.beta
    theta = np.zeros(n)
    for (i, j), p in draws.items():
        if user is not None and i != user:
            continue
        if beta[i, j] == 0:
            continue
        theta += beta[i, j] * pair_energy(p.gains, p.aoa, p.aod, geometry.N_r, geometry.N_t, geometry.d_lambda)
    return theta


@dataclass(frozen=True)
class BoundParams:
    """Constants of the pairwise-error bound.

    ``L_t`` is the number of usable subchannels (total rays, or the user's
    row total).  For multi-user bounds ``beta`` is the user's mean linear
    large-scale coefficient.
    """

    d_min: float
    N_s: int
    L_t: int
    N_t: int
    N_r: int
    alpha_min: int = 1
    K: int = 1
    multi_user: bool = False
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha_min < 1:
            raise ValueError(f"alpha_min must be >= 1, got {self.alpha_min}")
        if self.N_s > self.L_t:
            raise ValueError(f"N_s={self.N_s} exceeds the {self.L_t} available subchannels")

    def snr_coefficient(self, gamma: GammaApprox) -> float:
        """``c`` such that the PEP bound reads ``(1/2)(1 + c * snr)^(-k)``."""
        if self.multi_user:
            # E{x x^H} = I/(K N_s), N_0 = 1/SNR, Theta_k ~ beta N_r N_t X
            return (gamma.scale * self.beta * self.N_r * self.N_t * self.d_min ** 2 * self.alpha_min
                    / (4.0 * self.K * self.L_t))
        # unit-energy symbols, N_0 = N_t/SNR, Theta ~ N_r N_t X
        return gamma.scale * self.N_r * self.d_min ** 2 * self.alpha_min * self.N_s / (4.0 * self.L_t)

    @classmethod
    def from_geometry(cls, geometry: SystemGeometry, profile: FadingProfile, d_min: float,
                      user: Optional[int] = None, alpha_min: int = 1) -> "BoundParams":
        if geometry.multi_user:
            if user is None:
                raise ValueError("multi-user bound parameters need a user index")
            row = profile.beta[user]
            return cls(d_min, geometry.N_s, int(profile.L[user].sum()), geometry.N_t, geometry.N_r,
                       alpha_min, geometry.K, True, float(row.mean()))
        return cls(d_min, geometry.N_s, int(profile.L.sum()), geometry.N_t, geometry.N_r, alpha_min)


def pep_bound(params: BoundParams, gamma: GammaApprox, snr):
    """``(1/2) (1 + c snr)^(-k)`` with ``c`` from :meth:`BoundParams.snr_coefficient`."""
    snr = np.asarray(snr, dtype=float)
    return 0.5 * (1.0 + params.snr_coefficient(gamma) * snr) ** (-gamma.shape)


def pep_bound_high_snr(params: BoundParams, gamma: GammaApprox, snr):
    """Power-law asymptote ``(1/2) (c snr)^(-k)``."""
    snr = np.asarray(snr, dtype=float)
    return 0.5 * (params.snr_coefficient(gamma) * snr) ** (-gamma.shape)


@dataclass(frozen=True)
class UnionBound:
    snr_db: np.ndarray
    bound: np.ndarray
    d_free: int
    d_max: int          # largest distance included (truncation depth d_max - d_free)
    weight_sum: int     # sum of W_I(d) over the included distances

    @property
    def truncation_depth(self) -> int:
        return self.d_max - self.d_free


def ber_union_bound(spectrum: Optional[DistanceSpectrum], params: BoundParams, gamma: GammaApprox,
                    snr_db, k_c: int = 1, depth: int = DEFAULT_TRUNCATION) -> UnionBound:
    """Truncated union bound ``(1/k_c) sum_d W_I(d) PEP(d)`` for ``d <= d_free + depth``.

    With ``alpha_min`` fixed the PEP term does not depend on ``d``, so the
    bound is the PEP times the summed input weight of the included events.
    """
    if spectrum is None:
        raise SpectrumNotFoundError("no distance spectrum supplied")
    d_free = spectrum.d_free
    d_hi = d_free + depth
    if spectrum.d_max < d_hi:
        raise SpectrumNotFoundError(
            f"spectrum only reaches d={spectrum.d_max}; the bound needs d <= {d_hi}")
    w = int(sum(spectrum.input_weight[d_free:d_hi + 1]))
    snr_db = np.asarray(snr_db, dtype=float)
    pep = pep_bound(params, gamma, 10.0 ** (snr_db / 10.0))
    return UnionBound(snr_db, w * pep / k_c, d_free, d_hi, w)


def event_alpha_min(plan, code: CodeSpec, d_max: int, n_info: int) -> int:
    """Smallest per-subchannel usage over every error event of weight
    ``<= d_max`` placed at every start time inside an ``n_info``-bit frame."""
    best = None
    n_steps = n_info + code.memory
    sub = plan.subchannel()
    for ev in error_events(code, d_max):
        ones = np.flatnonzero(ev.outputs)
        span = len(ev.inputs)
        starts = np.arange(0, n_steps - span + 1)
        if starts.size == 0:
            continue
        pos = code.n_out * starts[:, None] + ones[None, :]
        s = sub[pos]
        usage = np.stack([(s == c).sum(axis=1) for c in range(plan.N_s)], axis=1)
        m = int(usage.min())
        best = m if best is None else min(best, m)
        if best == 0:
            break
    if best is None:
        raise SpectrumNotFoundError(f"no error event of weight <= {d_max} fits in {n_info} bits")
    return best


@dataclass
class BerCurve:
    """Per-SNR bit-error statistics for one user."""

    snr_db: np.ndarray
    bit_errors: np.ndarray
    bits: np.ndarray
    frames: np.ndarray
    converged: np.ndarray
    user: int = 0
    seed: Optional[int] = None
    fingerprint: str = ""
    point_seeds: list = field(default_factory=list)

    def __post_init__(self):
        self.snr_db = np.asarray(self.snr_db, dtype=float)
        self.bit_errors = np.asarray(self.bit_errors, dtype=np.int64)
        self.bits = np.asarray(self.bits, dtype=np.int64)
        self.frames = np.asarray(self.frames, dtype=np.int64)
        self.converged = np.asarray(self.converged, dtype=bool)
        if np.any(self.bit_errors > self.bits):
            raise ValueError("bit errors exceed bits simulated")

    @property
    def ber(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.bits > 0, self.bit_errors / np.maximum(self.bits, 1), np.nan)

    def stderr(self) -> np.ndarray:
        """Binomial standard error of each point."""
        p = self.ber
        return np.sqrt(p * (1 - p) / np.maximum(self.bits, 1))


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    n_points: int
    window: tuple


def fit_diversity_slope(curve, window: Optional[Sequence[float]] = None,
                        min_errors: int = MIN_ERRORS) -> SlopeFit:
    """Negated least-squares slope of ``log10(BER)`` against ``log10(SNR)``.

    Without ``window`` the fit uses the top 10 dB of the points that carry at
    least ``min_errors`` bit errors.  An explicit window must contain at least
    three points, every one of them with ``min_errors`` errors.
    """
    snr_db = np.asarray(curve.snr_db, dtype=float)
    errors = np.asarray(curve.bit_errors)
    ber = np.asarray(curve.ber, dtype=float)
    if window is None:
        ok = (errors >= min_errors) & (ber > 0)
        if not ok.any():
            raise InsufficientDataError(f"no point has {min_errors} bit errors")
        hi = snr_db[ok].max()
        window = (hi - SLOPE_WINDOW_DB, hi)
        sel = ok & (snr_db >= window[0]) & (snr_db <= window[1])
    else:
        lo, hi = window
        sel = (snr_db >= lo) & (snr_db <= hi)
        short = sel & ((errors < min_errors) | ~(ber > 0))
        if short.any():
            raise InsufficientDataError(
                f"points at {snr_db[short].tolist()} dB have fewer than {min_errors} bit errors")
    if sel.sum() < 3:
        raise InsufficientDataError(
            f"need >= 3 points in window {tuple(window)}, found {int(sel.sum())}")
    fit = stats.linregress(snr_db[sel] / 10.0, np.log10(ber[sel]))
    return SlopeFit(float(-fit.slope), float(fit.stderr), float(fit.intercept), int(sel.sum()),
                    (float(window[0]), float(window[1])))


def bound_dominates(bound: float, bit_errors: int, bits: int, confidence: float = 0.99) -> bool:
    """One-sided binomial test that the true BER does not exceed ``bound``.

    Fails only when ``bit_errors`` errors out of ``bits`` would be less likely
    than ``1 - confidence`` under a BER equal to the bound.
    """
    if bound >= 1.0 or bit_errors == 0:
        return True
    p_value = stats.binom.sf(bit_errors - 1, bits, bound)
    return bool(p_value >= 1.0 - confidence)
