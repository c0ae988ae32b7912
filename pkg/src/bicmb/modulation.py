"""Gray-labelled constellations and per-bit ML metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class ModulationSpec:
    """Constellation ``points[label]`` with ``m`` label bits, bit 0 the MSB."""

    name: str
    m: int
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        if pts.shape != (1 << self.m,):
            raise ValueError(f"{self.name}: expected {1 << self.m} points, got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @cached_property
    def label_bits(self) -> np.ndarray:
        """``(2^m, m)`` bit matrix of every label."""
        labels = np.arange(1 << self.m)
        return ((labels[:, None] >> (self.m - 1 - np.arange(self.m))) & 1).astype(np.uint8)

    @cached_property
    def subsets(self) -> np.ndarray:
        """``subsets[i, b]`` lists the labels whose bit ``i`` equals ``b``."""
        half = 1 << (self.m - 1)
        out = np.empty((self.m, 2, half), dtype=np.intp)
        for i in range(self.m):
            for b in (0, 1):
                out[i, b] = np.flatnonzero(self.label_bits[:, i] == b)
        return out

    @property
    def average_energy(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    @property
    def d_min(self) -> float:
        diff = np.abs(self.points[:, None] - self.points[None, :])
        return float(diff[~np.eye(diff.shape[0], dtype=bool)].min())


def _gray_pam(bits_per_axis: int) -> np.ndarray:
    """Amplitude levels indexed by the Gray label of each level."""
    n = 1 << bits_per_axis
    levels = np.arange(-(n - 1), n, 2, dtype=float)
    gray = np.arange(n) ^ (np.arange(n) >> 1)
    out = np.empty(n)
    out[gray] = levels
    return out


def bpsk() -> ModulationSpec:
    return ModulationSpec("bpsk", 1, np.array([1.0, -1.0]))


def qam16() -> ModulationSpec:
    axis = _gray_pam(2)
    labels = np.arange(16)
    pts = axis[labels >> 2] + 1j * axis[labels & 3]
    return ModulationSpec("16qam", 4, pts / np.sqrt(10.0))


MODULATIONS = {"bpsk": bpsk, "16qam": qam16}


def get_modulation(name: str) -> ModulationSpec:
    try:
        return MODULATIONS[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown modulation {name!r}; choose from {sorted(MODULATIONS)}") from None


def map_symbols(bits, mod: ModulationSpec, N_s: int = 1) -> np.ndarray:
    """Map transmit-ordered bits to symbols, shape ``(..., T, N_s)``.

    Bit ``p`` sits at ``p = (t * N_s + s) * m + i``: symbol time ``t``,
    subchannel ``s``, label position ``i``.
    """
    bits = np.asarray(bits, dtype=np.intp)
    n = bits.shape[-1]
    if n % (mod.m * N_s):
        raise ValueError(f"{n} bits do not fill whole symbols on {N_s} subchannels with m={mod.m}")
    groups = bits.reshape(bits.shape[:-1] + (n // (mod.m * N_s), N_s, mod.m))
    weights = 1 << (mod.m - 1 - np.arange(mod.m))
    labels = groups @ weights
    return mod.points[labels]


def bit_metrics(y, gain, mod: ModulationSpec) -> np.ndarray:
    """ML bit metrics ``min_{x in subset(i, b)} |y - gain * x|^2``.

    ``y`` has shape ``(..., T, N_s)`` and ``gain`` broadcasts against it.
    Returns ``(..., T * N_s * m, 2)`` in transmit bit order.
    """
    y = np.asarray(y)
    scaled = np.asarray(gain)[..., None] * mod.points
    dist = np.abs(y[..., None] - scaled) ** 2  # (..., T, N_s, 2^m)
    if mod.m == 1:
        met = dist[..., None, :]
    else:
        met = dist[..., mod.subsets].min(axis=-1)  # (..., T, N_s, m, 2)
    return met.reshape(y.shape[:-2] + (-1, 2))


def ml_bit_metric(y: complex, gain: float, i: int, b: int, mod: ModulationSpec) -> float:
    """Metric of a single observation for label bit ``i`` taking value ``b``."""
    if not 0 <= i < mod.m:
        raise ValueError(f"bit position {i} out of range for m={mod.m}")
    subset = mod.points[mod.subsets[i, b]]
    return float(np.min(np.abs(y - gain * subset) ** 2))
