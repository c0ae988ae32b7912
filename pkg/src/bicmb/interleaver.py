"""Bit interleavers mapping coded bits onto (time, subchannel, label bit)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .convcode import CodeSpec
from .errors import ConstraintViolationError


@dataclass(frozen=True)
class InterleaverPlan:
    """Coded bit ``k`` is sent at transmit position ``perm[k]``.

    Transmit position ``p`` decomposes as ``p = (t * N_s + s) * m + i``.
    """

    perm: np.ndarray = field(repr=False)
    N_s: int
    m: int
    seed: object = None
    kind: str = "round-robin"

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.intp)
        perm.setflags(write=False)
        object.__setattr__(self, "perm", perm)

    @property
    def n_bits(self) -> int:
        return self.perm.size

    @property
    def n_times(self) -> int:
        return self.n_bits // (self.N_s * self.m)

    def positions(self):
        """``(t, s, i)`` arrays indexed by coded bit."""
        sym, i = np.divmod(self.perm, self.m)
        t, s = np.divmod(sym, self.N_s)
        return t, s, i

    def subchannel(self) -> np.ndarray:
        return (self.perm // self.m) % self.N_s

    def symbol(self) -> np.ndarray:
        return self.perm // self.m

    def interleave(self, coded) -> np.ndarray:
        coded = np.asarray(coded)
        out = np.empty_like(coded)
        out[..., self.perm] = coded
        return out

    def deinterleave(self, tx) -> np.ndarray:
        return np.asarray(tx)[..., self.perm]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_bits": self.n_bits, "N_s": self.N_s, "m": self.m,
                "seed": self.seed, "perm": self.perm.tolist()}


def _check(n_bits: int, N_s: int, m: int, code: CodeSpec) -> int:
    if N_s > code.d_free:
        raise ConstraintViolationError(
            f"N_s={N_s} streams exceed the code's free distance {code.d_free}; "
            "the interleaver design rule requires d_free ≥ N_s")
    if n_bits <= 0 or n_bits % (N_s * m):
        raise ValueError(f"{n_bits} coded bits are not divisible by N_s*m = {N_s * m}")
    return n_bits // (N_s * m)


def build_interleaver(n_bits: int, N_s: int, m: int, seed=None, code: CodeSpec = CodeSpec()) -> InterleaverPlan:
    """Round-robin coded bits over subchannels, then scatter each substream
    over its own symbol times and label positions at random.

    Coded bit ``k`` goes to subchannel ``k mod N_s``; the ``j``-th bit of a
    substream lands at time ``p_s[j mod T]`` so that consecutive substream
    bits always occupy different symbols.
    """
    T = _check(n_bits, N_s, m, code)
    rng = np.random.default_rng(seed)
    k = np.arange(n_bits)
    s = k % N_s
    j = k // N_s
    time_perm = np.stack([rng.permutation(T) for _ in range(N_s)])       # (N_s, T)
    bit_perm = np.argsort(rng.random((N_s, T, m)), axis=-1)              # (N_s, T, m)
    t = time_perm[s, j % T]
    i = bit_perm[s, t, j // T]
    perm = (t * N_s + s) * m + i
    return InterleaverPlan(perm, N_s, m, seed, "round-robin")


def build_blocked_interleaver(n_bits: int, N_s: int, m: int, seed=None,
                              code: CodeSpec = CodeSpec()) -> InterleaverPlan:
    """Random interleaver that keeps runs of consecutive coded bits on one
    subchannel: substream ``s`` carries coded bits ``s*T*m .. (s+1)*T*m - 1``.
    Useful only to reproduce what breaks when the design rules are ignored.
    """
    T = _check(n_bits, N_s, m, code)
    rng = np.random.default_rng(seed)
    k = np.arange(n_bits)
    s, slot = np.divmod(k, T * m)
    slot_perm = np.stack([rng.permutation(T * m) for _ in range(N_s)])
    t, i = np.divmod(slot_perm[s, slot], m)
    perm = (t * N_s + s) * m + i
    return InterleaverPlan(perm, N_s, m, seed, "blocked")


def validate_interleaver(plan: InterleaverPlan) -> dict:
    """Check bijectivity, distinct symbols for consecutive coded bits, and
    that every window of ``N_s*m`` consecutive coded bits reaches every
    subchannel."""
    n = plan.n_bits
    bijection = bool(np.array_equal(np.sort(plan.perm), np.arange(n)))
    sym = plan.symbol()
    criterion1 = bool(np.all(sym[1:] != sym[:-1]))
    w = plan.N_s * plan.m
    sub = plan.subchannel()
    if w > n:
        coverage = False
    else:
        onehot = np.zeros((plan.N_s, n + 1), dtype=np.int64)
        onehot[sub, np.arange(1, n + 1)] = 1
        csum = np.cumsum(onehot, axis=1)
        per_window = csum[:, w:] - csum[:, :n - w + 1]
        coverage = bool(np.all(per_window > 0))
    return {"bijection": bijection, "criterion1": criterion1, "window_coverage": coverage}


def subchannel_usage(plan: InterleaverPlan, coded_positions) -> np.ndarray:
    """How often each subchannel carries the given coded bits (``alpha_s``)."""
    sub = plan.subchannel()[np.asarray(coded_positions, dtype=np.intp)]
    return np.bincount(sub, minlength=plan.N_s)
