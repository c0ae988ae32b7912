"""Feedforward convolutional codes: encoding, Viterbi decoding and the
error-event distance spectrum used by the union bound."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import SpectrumNotFoundError

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None


@dataclass(frozen=True)
class CodeSpec:
    """Rate ``1/len(generators)`` feedforward code, generators in octal.

    The most significant tap multiplies the current input bit.  Frames are
    terminated with ``memory`` zero tail bits.
    """

    generators: tuple = (0o133, 0o171)
    constraint_length: int = 7

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(int(g) for g in self.generators))
        if self.constraint_length < 1:
            raise ValueError("constraint_length must be >= 1")
        for g in self.generators:
            if g <= 0 or g >= 1 << self.constraint_length:
                raise ValueError(f"generator {g:o} does not fit constraint length {self.constraint_length}")

    @property
    def memory(self) -> int:
        return self.constraint_length - 1

    @property
    def n_states(self) -> int:
        return 1 << self.memory

    @property
    def n_out(self) -> int:
        return len(self.generators)

    @property
    def k_c(self) -> int:
        """Input bits per trellis step."""
        return 1

    @property
    def d_free(self) -> int:
        return _d_free(self)

    def coded_length(self, n_info: int) -> int:
        return self.n_out * (n_info + self.memory)

    def taps(self) -> np.ndarray:
        """Binary tap matrix ``(n_out, constraint_length)``; column 0 is the
        current input."""
        K = self.constraint_length
        return np.array([[(g >> (K - 1 - d)) & 1 for d in range(K)] for g in self.generators], dtype=np.uint8)


def conv_encode(bits, code: CodeSpec = CodeSpec()) -> np.ndarray:
    """Encode and terminate; output length ``n_out * (n + memory)``.

    Accepts a batch ``(..., n)``.  Output bits are ordered step by step, the
    generator outputs of one step adjacent.
    """
    u = np.asarray(bits, dtype=np.uint8)
    if u.shape[-1] == 0:
        raise ValueError("cannot encode an empty message")
    m = code.memory
    pad = np.zeros(u.shape[:-1] + (m,), dtype=np.uint8)
    u_pad = np.concatenate([pad, u, pad], axis=-1)
    steps = u.shape[-1] + m
    taps = code.taps()
    out = np.zeros(u.shape[:-1] + (steps, code.n_out), dtype=np.uint8)
    for g in range(code.n_out):
        for d in range(code.constraint_length):
            if taps[g, d]:
                out[..., g] ^= u_pad[..., m - d:m - d + steps]
    return out.reshape(u.shape[:-1] + (steps * code.n_out,))


@dataclass(frozen=True)
class Trellis:
    next_state: np.ndarray  # (S, 2)
    output: np.ndarray      # (S, 2) output label, generator 0 in the MSB
    pred: np.ndarray        # (S, 2) predecessor of state ns via branch b
    pred_label: np.ndarray  # (S, 2) output label on that branch
    weight: np.ndarray      # (S, 2) Hamming weight of the output label


@lru_cache(maxsize=None)
def trellis(code: CodeSpec) -> Trellis:
    # state bit (memory-1) holds the most recent input
    m, n_out, S = code.memory, code.n_out, code.n_states
    taps = code.taps()
    next_state = np.zeros((S, 2), dtype=np.intp)
    output = np.zeros((S, 2), dtype=np.intp)
    for s in range(S):
        for u in (0, 1):
            reg = [u] + [(s >> (m - 1 - d)) & 1 for d in range(m)]
            label = 0
            for g in range(n_out):
                label = (label << 1) | (int(np.dot(taps[g], reg)) & 1)
            next_state[s, u] = (u << (m - 1)) | (s >> 1) if m else 0
            output[s, u] = label
    pred = np.zeros((S, 2), dtype=np.intp)
    pred_label = np.zeros((S, 2), dtype=np.intp)
    for ns in range(S):
        u = ns >> (m - 1) if m else 0
        for b in (0, 1):
            p = ((ns << 1) & (S - 1)) | b if m else 0
            pred[ns, b] = p
            pred_label[ns, b] = output[p, u]
    weight = np.vectorize(lambda x: bin(int(x)).count("1"))(output)
    return Trellis(next_state, output, pred, pred_label, weight)


def viterbi_decode(metrics, code: CodeSpec = CodeSpec(), plan=None, n_coded: int | None = None,
                   backend: str = "auto") -> np.ndarray:
    """Minimum-metric path through the terminated trellis.

    ``metrics[..., k, b]`` is the cost of coded bit ``k`` taking value ``b``.
    With ``plan`` the metrics are in transmitted (interleaved) order and are
    deinterleaved first; ``n_coded`` then drops padding beyond the codeword.
    On equal path metrics the branch from the lower-numbered predecessor wins.
    Returns the information bits, tail removed.

    ``backend`` selects the compiled kernel (``"numba"``), the vectorized
    reference (``"numpy"``) or the fastest available (``"auto"``).
    """
    metrics = np.asarray(metrics, dtype=float)
    if metrics.ndim < 2 or metrics.shape[-1] != 2:
        raise ValueError(f"metrics must have shape (..., n_coded, 2), got {metrics.shape}")
    if plan is not None:
        if metrics.shape[-2] != plan.n_bits:
            raise ValueError(f"metrics cover {metrics.shape[-2]} positions, plan has {plan.n_bits}")
        metrics = metrics[..., plan.perm, :]
    if n_coded is not None:
        metrics = metrics[..., :n_coded, :]
    batch = metrics.shape[:-2]
    n = metrics.shape[-2]
    n_out, m = code.n_out, code.memory
    if m < 1:
        raise ValueError("Viterbi decoding needs a code with memory >= 1")
    if n % n_out or n // n_out <= m:
        raise ValueError(f"{n} coded positions is not a terminated codeword of this code")
    steps = n // n_out
    B = int(np.prod(batch, dtype=int))
    met = np.ascontiguousarray(metrics.reshape(B, steps, n_out, 2))
    tr = trellis(code)
    if backend == "auto":
        backend = "numba" if njit is not None else "numpy"
    if backend == "numba":
        if njit is None:
            raise ValueError("numba backend requested but numba is not installed")
        bits = _acs(met, tr.pred_label, m)
    elif backend == "numpy":
        bits = _viterbi_numpy(met, tr, code)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return bits.reshape(batch + (steps - m,))


def _viterbi_numpy(met, tr: Trellis, code: CodeSpec) -> np.ndarray:
    B, steps, n_out, _ = met.shape
    S, m = code.n_states, code.memory
    labels = np.arange(1 << n_out)
    label_bits = (labels[:, None] >> (n_out - 1 - np.arange(n_out))) & 1
    pm = np.full((B, S), np.inf)
    pm[:, 0] = 0.0
    decisions = np.empty((steps, B, S), dtype=bool)
    for t in range(steps):
        mt = met[:, t]
        lm = np.zeros((B, labels.size))
        for g in range(n_out):
            lm += mt[:, g, label_bits[:, g]]
        cand = pm[:, tr.pred] + lm[:, tr.pred_label]
        pick = cand[..., 1] < cand[..., 0]
        pm = np.where(pick, cand[..., 1], cand[..., 0])
        decisions[t] = pick
    state = np.zeros(B, dtype=np.intp)
    bits = np.empty((B, steps), dtype=np.uint8)
    rows = np.arange(B)
    for t in range(steps - 1, -1, -1):
        b = decisions[t, rows, state]
        bits[:, t] = state >> (m - 1)
        state = tr.pred[state, b.astype(np.intp)]
    return bits[:, :steps - m]


def _acs(met, pred_label, memory):
    # predecessors of state u*S/2 + j are 2j and 2j+1 for either input u
    B, steps, n_out, _ = met.shape
    S = pred_label.shape[0]
    half = S // 2
    n_labels = 1 << n_out
    out = np.empty((B, steps - memory), np.uint8)
    dec = np.empty((steps, S), np.uint8)
    pm = np.empty(S)
    new = np.empty(S)
    lm = np.empty(n_labels)
    for f in range(B):
        for s in range(S):
            pm[s] = np.inf
        pm[0] = 0.0
        for t in range(steps):
            for lab in range(n_labels):
                acc = 0.0
                for g in range(n_out):
                    acc += met[f, t, g, (lab >> (n_out - 1 - g)) & 1]
                lm[lab] = acc
            for j in range(half):
                a = pm[2 * j]
                b = pm[2 * j + 1]
                for u in range(2):
                    ns = u * half + j
                    c0 = a + lm[pred_label[ns, 0]]
                    c1 = b + lm[pred_label[ns, 1]]
                    if c1 < c0:
                        new[ns] = c1
                        dec[t, ns] = 1
                    else:
                        new[ns] = c0
                        dec[t, ns] = 0
            pm, new = new, pm
        s = 0
        for t in range(steps - 1, -1, -1):
            if t < steps - memory:
                out[f, t] = s >> (memory - 1)
            s = ((s << 1) & (S - 1)) | dec[t, s]
    return out


if njit is not None:
    _acs = njit(cache=True, nogil=True)(_acs)


@dataclass(frozen=True)
class DistanceSpectrum:
    """Error events leaving and re-merging with the zero state.

    ``count[d]`` is the number of events at output weight ``d`` and
    ``input_weight[d]`` their summed input weight, for ``d <= d_max``.
    """

    d_max: int
    count: tuple
    input_weight: tuple

    @property
    def d_free(self) -> int:
        return next(d for d, a in enumerate(self.count) if a > 0)

    def rows(self):
        """``(d, A_d, W_I(d))`` for every distance with at least one event."""
        return [(d, a, w) for d, (a, w) in enumerate(zip(self.count, self.input_weight)) if a > 0]

    def to_dict(self) -> dict:
        return {
            "d_free": self.d_free,
            "d_max": self.d_max,
            "rows": [{"d": d, "A_d": a, "W_I": w} for d, a, w in self.rows()],
        }


def distance_spectrum(code: CodeSpec, d_max: int) -> DistanceSpectrum:
    """Enumerate error events breadth-first over trellis depth, pruning any
    partial path whose output weight already exceeds ``d_max``."""
    tr = trellis(code)
    S = code.n_states
    D = d_max + 1
    count = np.zeros(D, dtype=np.int64)
    in_weight = np.zeros(D, dtype=np.int64)
    cnt = np.zeros((S, D), dtype=np.int64)
    wsum = np.zeros((S, D), dtype=np.int64)
    s0, w0 = tr.next_state[0, 1], tr.weight[0, 1]
    if w0 <= d_max:
        if s0 == 0:
            count[w0] += 1
            in_weight[w0] += 1
        else:
            cnt[s0, w0] = 1
            wsum[s0, w0] = 1
    max_depth = (d_max + 1) * S + 1
    depth = 0
    while cnt.any():
        depth += 1
        if depth > max_depth:
            raise RuntimeError("error-event search does not terminate; the code may be catastrophic")
        new_cnt = np.zeros_like(cnt)
        new_wsum = np.zeros_like(wsum)
        for s in np.flatnonzero(cnt.any(axis=1)):
            for u in (0, 1):
                ns, w = tr.next_state[s, u], tr.weight[s, u]
                if w > d_max:
                    continue
                c = cnt[s, :D - w]
                ws = wsum[s, :D - w] + u * c
                if ns == 0:
                    count[w:] += c
                    in_weight[w:] += ws
                else:
                    new_cnt[ns, w:] += c
                    new_wsum[ns, w:] += ws
        cnt, wsum = new_cnt, new_wsum
    if not count.any():
        raise SpectrumNotFoundError(f"no error event with output weight <= {d_max}")
    return DistanceSpectrum(d_max, tuple(int(c) for c in count), tuple(int(w) for w in in_weight))


@lru_cache(maxsize=None)
def _d_free(code: CodeSpec) -> int:
    d_max = code.n_out * code.constraint_length
    while True:
        try:
            return distance_spectrum(code, d_max).d_free
        except SpectrumNotFoundError:
            d_max *= 2


@dataclass(frozen=True)
class ErrorEvent:
    inputs: tuple   # input bits from divergence until re-merge
    outputs: tuple  # coded bits over the same steps
    distance: int
    input_weight: int


def error_events(code: CodeSpec, d_max: int) -> list[ErrorEvent]:
    """All error events with output weight ``<= d_max`` (depth-first)."""
    tr = trellis(code)
    n_out = code.n_out
    events = []

    def label_bits(label):
        return tuple((label >> (n_out - 1 - g)) & 1 for g in range(n_out))

    stack = [(int(tr.next_state[0, 1]), (1,), label_bits(tr.output[0, 1]), int(tr.weight[0, 1]))]
    while stack:
        s, ins, outs, d = stack.pop()
        if d > d_max:
            continue
        if s == 0:
            events.append(ErrorEvent(ins, outs, d, sum(ins)))
            continue
        for u in (0, 1):
            stack.append((int(tr.next_state[s, u]), ins + (u,),
                          outs + label_bits(tr.output[s, u]), d + int(tr.weight[s, u])))
    events.sort(key=lambda e: (e.distance, e.inputs))
    return events
