"""Monte Carlo BER engine for single-user and multi-user BICMB links.

Each frame draws a fresh channel, builds the beamformers, sends every user's
encoded, interleaved and mapped bits over the resulting scalar subchannels,
and Viterbi-decodes from ML bit metrics.  Single-user links use unit-energy
symbols with ``N_0 = N_t / SNR``; multi-user links use symbol energy
``1 / (K N_s)`` with ``N_0 = 1 / SNR``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import BerCurve
from .beamforming import hybrid_bd_mu
from .channel import (FadingProfile, SystemGeometry, compact_factors, compact_svd, draw_paths,
                      flatten_paths, realize, theoretical_rank)
from .convcode import CodeSpec, conv_encode, viterbi_decode
from .errors import ConfigError, ConstraintViolationError
from .interleaver import InterleaverPlan, build_blocked_interleaver, build_interleaver
from .modulation import ModulationSpec, bit_metrics, get_modulation, map_symbols

log = logging.getLogger(__name__)

DATA_STREAM = 0
INTERLEAVER_STREAM = 2

INTERLEAVERS = {"round-robin": build_interleaver, "blocked": build_blocked_interleaver}
CSV_COLUMNS = ("snr_db", "user", "ber", "bit_errors", "bits", "frames", "converged")


@dataclass(frozen=True)
class SimConfig:
    """Everything that determines a sweep.  Results are a pure function of it."""

    geometry: SystemGeometry
    profile: FadingProfile
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    code: CodeSpec = CodeSpec()
    modulation: str = "bpsk"
    max_frames: int = 10000
    target_bit_errors: int = 100
    seed: int = 0
    info_bits: int = 120
    coded: bool = True
    chunk_frames: int = 64
    interleaver: str = "round-robin"

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        self.profile.check(self.geometry)
        if not self.snr_db:
            raise ConfigError("snr_db grid is empty", key="snr_db")
        if any(np.isnan(self.snr_db)) or any(b <= a for a, b in zip(self.snr_db, self.snr_db[1:])):
            raise ConfigError("snr_db grid must be strictly increasing", key="snr_db")
        for name in ("max_frames", "target_bit_errors", "info_bits", "chunk_frames"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1", key=name)
        if self.interleaver not in INTERLEAVERS:
            raise ConfigError(f"interleaver must be one of {sorted(INTERLEAVERS)}", key="interleaver")
        try:
            get_modulation(self.modulation)
        except ValueError as exc:
            raise ConfigError(str(exc), key="modulation") from None
        g = self.geometry
        if self.coded and g.N_s > self.code.d_free:
            raise ConstraintViolationError(
                f"N_s={g.N_s} streams exceed the code's free distance {self.code.d_free}; "
                "the interleaver design rule requires d_free ≥ N_s")
        for k in range(g.K):
            rank = theoretical_rank(self.profile, k if g.multi_user else None)
            if g.N_s > rank:
                raise ConfigError(f"N_s={g.N_s} exceeds the {rank} available subchannels"
                                  + (f" of user {k}" if g.multi_user else ""), key="N_s")
        if self.coded:
            # raises ConstraintViolationError when N_s > d_free
            self.plan

    @cached_property
    def mod(self) -> ModulationSpec:
        return get_modulation(self.modulation)

    @property
    def n_coded(self) -> int:
        return self.code.coded_length(self.info_bits) if self.coded else self.info_bits

    @property
    def n_tx(self) -> int:
        """Transmitted bits per user and frame, padded to whole symbol vectors."""
        per = self.geometry.N_s * self.mod.m
        return -(-self.n_coded // per) * per

    @cached_property
    def plan(self) -> Optional[InterleaverPlan]:
        if not self.coded:
            return None
        seed = np.random.SeedSequence(self.seed, spawn_key=(INTERLEAVER_STREAM,))
        return INTERLEAVERS[self.interleaver](self.n_tx, self.geometry.N_s, self.mod.m, seed, self.code)

    def snr_index(self, snr_db: float) -> int:
        try:
            return self.snr_db.index(float(snr_db))
        except ValueError:
            raise ValueError(f"{snr_db} dB is not on the configured grid {self.snr_db}") from None


@dataclass(frozen=True)
class FrameResult:
    bit_errors: int
    bits: int
    user_errors: tuple
    gains: np.ndarray = field(repr=False)  # (K, N_s) effective subchannel gains
    seed: tuple = ()


def frame_seed(config: SimConfig, snr_idx: int, frame_idx: int) -> tuple:
    return (int(config.seed), int(snr_idx), int(frame_idx))


def _noise_var(config: SimConfig, snr_db: float) -> float:
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    snr = 10.0 ** (snr_db / 10.0)
    return 1.0 / snr if config.geometry.multi_user else config.geometry.N_t / snr


def _su_gains(config: SimConfig, seeds) -> np.ndarray:
    """``lambda_1..N_s`` for each frame seed, via the compact ray factorization."""
    g, p = config.geometry, config.profile
    flat = [flatten_paths(p, draw_paths(p, s)) for s in seeds]
    gains, aoa, aod = (np.stack(x) for x in zip(*flat))
    R, d, T = compact_factors(g, p, gains, aoa, aod)
    _, s, _ = compact_svd(R, d, T)
    return s[:, None, :g.N_s]


def _mu_frame(config: SimConfig, seed) -> tuple:
    """Effective ``(K, N_s, K*N_s)`` matrices and ``(K, N_s)`` gains."""
    g = config.geometry
    ch = realize(g, config.profile, seed)
    bf = hybrid_bd_mu(ch.user_channels, g)
    E = np.stack([bf.effective_matrix(k, H_k) for k, H_k in enumerate(ch.user_channels)])
    return E, bf.sigma


def _simulate_chunk(config: SimConfig, snr_idx: int, start: int, n: int) -> list[FrameResult]:
    g, mod = config.geometry, config.mod
    K, N_s = g.K, g.N_s
    snr_db = config.snr_db[snr_idx]
    N0 = _noise_var(config, snr_db)
    seeds = [frame_seed(config, snr_idx, f) for f in range(start, start + n)]

    info = np.empty((n, K, config.info_bits), dtype=np.uint8)
    pad = np.empty((n, K, config.n_tx - config.n_coded), dtype=np.uint8)
    noise = np.empty((n, K, config.n_tx // (N_s * mod.m), N_s), dtype=complex)
    for f, s in enumerate(seeds):
        rng = np.random.default_rng(np.random.SeedSequence(s, spawn_key=(DATA_STREAM,)))
        info[f] = rng.integers(0, 2, info.shape[1:], dtype=np.uint8)
        pad[f] = rng.integers(0, 2, pad.shape[1:], dtype=np.uint8)
        noise[f] = (rng.standard_normal(noise.shape[1:]) + 1j * rng.standard_normal(noise.shape[1:])) / np.sqrt(2)
    noise *= np.sqrt(N0)

    coded = conv_encode(info, config.code) if config.coded else info
    tx = np.concatenate([coded, pad], axis=-1)
    if config.plan is not None:
        tx = config.plan.interleave(tx)
    x = map_symbols(tx, mod, N_s)                           # (n, K, T, N_s)

    if g.multi_user:
        scale = 1.0 / np.sqrt(K * N_s)
        E, gains = zip(*(_mu_frame(config, s) for s in seeds))
        E, gains = np.stack(E), np.stack(gains)             # (n, K, N_s, K*N_s), (n, K, N_s)
        x_all = x.transpose(0, 2, 1, 3).reshape(n, -1, K * N_s)   # all users' streams per time
        y = scale * np.einsum("fkij,ftj->fkti", E, x_all) + noise
        eff = scale * gains
    else:
        gains = _su_gains(config, seeds)                   # (n, 1, N_s)
        y = gains[:, :, None, :] * x + noise
        eff = gains

    metrics = bit_metrics(y, eff[:, :, None, :], mod)       # (n, K, n_tx, 2)
    if config.coded:
        decoded = viterbi_decode(metrics, config.code, config.plan, config.n_coded)
    else:
        decoded = (metrics[..., :config.info_bits, 1] < metrics[..., :config.info_bits, 0]).astype(np.uint8)
    errs = np.count_nonzero(decoded != info, axis=-1)        # (n, K)
    return [FrameResult(int(e.sum()), K * config.info_bits, tuple(int(v) for v in e), gains[f], seeds[f])
            for f, e in enumerate(errs)]


def run_frame(config: SimConfig, snr_db: float, frame_index: int) -> FrameResult:
    """Simulate one frame; deterministic in ``(config.seed, snr_db, frame_index)``."""
    return _simulate_chunk(config, config.snr_index(snr_db), frame_index, 1)[0]


def _point(config: SimConfig, snr_idx: int, pool: Optional[ThreadPoolExecutor], threads: int):
    """Run chunks until every user reaches the error target or frames run out.

    Chunks may finish in any order but are reduced in chunk order, and the
    stop decision is only taken at chunk boundaries, so the outcome does not
    depend on ``threads``.
    """
    K = config.geometry.K
    C = config.chunk_frames
    n_chunks = -(-config.max_frames // C)
    errors = np.zeros(K, dtype=np.int64)
    frames = 0

    def job(c):
        start = c * C
        return _simulate_chunk(config, snr_idx, start, min(C, config.max_frames - start))

    next_chunk = 0
    pending = []
    while True:
        while pool is not None and len(pending) < threads and next_chunk < n_chunks:
            pending.append(pool.submit(job, next_chunk))
            next_chunk += 1
        if pool is None:
            if next_chunk >= n_chunks:
                break
            results = job(next_chunk)
            next_chunk += 1
        else:
            if not pending:
                break
            results = pending.pop(0).result()
        for r in results:
            errors += r.user_errors
        frames += len(results)
        if np.all(errors >= config.target_bit_errors):
            break
    for fut in pending:
        fut.cancel()
    return errors, frames


def sweep(config: SimConfig, threads: int = 1) -> list[BerCurve]:
    """One :class:`BerCurve` per user over the configured SNR grid."""
    K = config.geometry.K
    n_pts = len(config.snr_db)
    errors = np.zeros((K, n_pts), dtype=np.int64)
    frames = np.zeros(n_pts, dtype=np.int64)
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for i, snr in enumerate(config.snr_db):
            t0 = time.perf_counter()
            errors[:, i], frames[i] = _point(config, i, pool, threads)
            log.info("snr %.2f dB: %d frames, errors %s (%.1f s)", snr, frames[i], errors[:, i].tolist(),
                     time.perf_counter() - t0)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    bits = frames * config.info_bits
    return [BerCurve(np.array(config.snr_db), errors[k], bits, frames, errors[k] >= config.target_bit_errors,
                     user=k, seed=config.seed, point_seeds=[[config.seed, i] for i in range(n_pts)])
            for k in range(K)]


def format_ber_csv(curves) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in curves:
        for j in range(c.snr_db.size):
            w.writerow([repr(float(c.snr_db[j])), c.user, f"{c.ber[j]:.10e}", int(c.bit_errors[j]),
                        int(c.bits[j]), int(c.frames[j]), int(bool(c.converged[j]))])
    return buf.getvalue()


def write_ber_csv(curves, path) -> None:
    Path(path).write_text(format_ber_csv(curves))


def _flag(text) -> bool:
    text = (text or "0").strip().lower()
    if text in ("1", "true"):
        return True
    if text in ("0", "false"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_ber_csv(path) -> dict:
    """Curves keyed by user from a file written by :func:`write_ber_csv`."""
    rows: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ()) - {"frames", "converged", "user"}
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for r in reader:
            rows.setdefault(int(r.get("user") or 0), []).append(r)
    curves = {}
    for user, rs in rows.items():
        curves[user] = BerCurve(
            [float(r["snr_db"]) for r in rs], [int(r["bit_errors"]) for r in rs], [int(r["bits"]) for r in rs],
            [int(r.get("frames") or 0) for r in rs], [_flag(r.get("converged")) for r in rs], user=user)
    return curves


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_manifest(path, config_dict: dict, outputs, wall_time: float, extra: Optional[dict] = None) -> dict:
    manifest = {
        "version": version_string(),
        "config": config_dict,
        "seed": config_dict.get("simulation", {}).get("seed"),
        "outputs": [str(o) for o in outputs],
        "wall_time_s": round(wall_time, 3),
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
