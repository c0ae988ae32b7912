"""Command-line entry point: ``bicmb <subcommand> ...``.

Every subcommand writes into ``<out>/<config-hash>/`` and prints the paths it
wrote.  Exit codes: 0 success, 1 validation report failed, 2 invalid config
or input, 3 infeasible scenario.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .analysis import (BoundParams, ber_union_bound, event_alpha_min, fit_diversity_slope,
                       gamma_approx_mu, gamma_approx_su)
from .channel import RANK_RTOL, realize, theoretical_rank
from .config import config_hash, config_to_dict, load_config, with_overrides
from .convcode import distance_spectrum
from .errors import ConfigError, ConstraintViolationError, InfeasibleConfigurationError, InsufficientDataError
from .interleaver import validate_interleaver
from .linksim import read_ber_csv, sweep, write_ber_csv, write_manifest

log = logging.getLogger("bicmb")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3


def parse_range(text: str) -> tuple:
    """``a:b:step`` → inclusive grid; ``a:b`` → ``(a, b)``."""
    parts = [float(p) for p in text.split(":")]
    if len(parts) == 2:
        return tuple(parts)
    if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
        raise argparse.ArgumentTypeError(f"expected a:b:step with step > 0 and b >= a, got {text!r}")
    a, b, step = parts
    n = int(np.floor((b - a) / step + 1e-9)) + 1
    return tuple(round(a + i * step, 10) for i in range(n))


def _window(text: str) -> tuple:
    parts = parse_range(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}")
    return parts


def _load(args):
    config = load_config(args.config)
    config = with_overrides(config, seed=getattr(args, "seed", None),
                            max_frames=getattr(args, "max_frames", None), snr_db=getattr(args, "snr", None))
    run_dir = Path(args.out) / config_hash(config)
    run_dir.mkdir(parents=True, exist_ok=True)
    return config, run_dir


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_simulate(args) -> int:
    config, run_dir = _load(args)
    t0 = time.perf_counter()
    curves = sweep(config, threads=args.threads)
    csv_path = run_dir / "ber.csv"
    write_ber_csv(curves, csv_path)
    manifest = run_dir / "manifest.json"
    write_manifest(manifest, config_to_dict(config), [csv_path, manifest], time.perf_counter() - t0,
                   {"threads": args.threads, "config_hash": config_hash(config),
                    "frame_seed_rule": "SeedSequence([seed, snr_index, frame_index])"})
    unconverged = [float(s) for c in curves for s, ok in zip(c.snr_db, c.converged) if not ok]
    if unconverged:
        log.warning("points below the error target (max_frames reached): %s dB", sorted(set(unconverged)))
    print(csv_path)
    print(manifest)
    return EXIT_OK


def _bound_rows(config):
    g, p = config.geometry, config.profile
    spectrum = distance_spectrum(config.code, config.code.d_free + 8)
    d_min = config.mod.d_min
    users = range(g.K) if g.multi_user else [None]
    out = []
    for u in users:
        gamma = gamma_approx_mu(p, u) if g.multi_user else gamma_approx_su(p)
        params = BoundParams.from_geometry(g, p, d_min, user=u)
        ub = ber_union_bound(spectrum, params, gamma, config.snr_db, k_c=config.code.k_c)
        out.append((0 if u is None else u, gamma, params, ub))
    return spectrum, out


def cmd_bound(args) -> int:
    config, run_dir = _load(args)
    spectrum, rows = _bound_rows(config)
    csv_path = run_dir / "bound.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db", "user", "bound"])
        for user, _, _, ub in rows:
            for s, b in zip(ub.snr_db, ub.bound):
                w.writerow([repr(float(s)), user, f"{b:.10e}"])
    report = {
        "spectrum": spectrum.to_dict(),
        "alpha_min_used": 1,
        "users": [{"user": u, "gamma": gm.to_dict(), "snr_coefficient": pr.snr_coefficient(gm),
                   "truncation_depth": ub.truncation_depth, "d_max": ub.d_max, "weight_sum": ub.weight_sum}
                  for u, gm, pr, ub in rows],
    }
    if config.plan is not None:
        report["alpha_min_measured"] = event_alpha_min(config.plan, config.code, config.code.d_free + 2,
                                                       config.info_bits)
    json_path = run_dir / "bound.json"
    _write_json(json_path, report)
    print(csv_path)
    print(json_path)
    return EXIT_OK


def diversity_report(config) -> dict:
    g, p = config.geometry, config.profile
    if g.multi_user:
        users = []
        for k in range(g.K):
            gm = gamma_approx_mu(p, k)
            users.append({"user": k, "D_G": gm.shape, "shape": gm.shape, "scale": gm.scale})
        return {"mode": g.mode, "users": users}
    gm = gamma_approx_su(p)
    return {"mode": g.mode, "D_G": gm.shape, "shape": gm.shape, "scale": gm.scale,
            "L_t": theoretical_rank(p)}


def cmd_diversity(args) -> int:
    config, run_dir = _load(args)
    report = diversity_report(config)
    path = run_dir / "diversity.json"
    _write_json(path, report)
    print(json.dumps(report, sort_keys=True))
    print(path)
    return EXIT_OK


def cmd_channel_stats(args) -> int:
    config, run_dir = _load(args)
    g, p = config.geometry, config.profile
    csv_path = run_dir / "channel_stats.csv"
    ranks = []
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["realization", "user", "index", "singular_value"])
        for r in range(args.realizations):
            ch = realize(g, p, (config.seed, r))
            mats = ch.user_channels if g.multi_user else [ch.H]
            for u, H in enumerate(mats):
                s = np.linalg.svd(H, compute_uv=False)
                ranks.append(int(np.sum(s > RANK_RTOL * s[0])) if s[0] > 0 else 0)
                for i, v in enumerate(s[:args.keep]):
                    w.writerow([r, u, i, f"{v:.10e}"])
    users = range(g.K) if g.multi_user else [None]
    summary = {
        "realizations": args.realizations,
        "theoretical_rank": [theoretical_rank(p, u) for u in users],
        "numerical_rank_min": int(min(ranks)),
        "numerical_rank_max": int(max(ranks)),
        "rank_rtol": RANK_RTOL,
    }
    json_path = run_dir / "channel_stats.json"
    _write_json(json_path, summary)
    print(json.dumps(summary, sort_keys=True))
    print(csv_path)
    return EXIT_OK


def cmd_validate_interleaver(args) -> int:
    config, run_dir = _load(args)
    if config.plan is None:
        raise ConfigError("uncoded configurations have no interleaver", key="simulation.coded")
    report = validate_interleaver(config.plan)
    report["alpha_min_d_free"] = event_alpha_min(config.plan, config.code, config.code.d_free, config.info_bits)
    report["N_s"] = config.geometry.N_s
    report["d_free"] = config.code.d_free
    path = run_dir / "interleaver.json"
    _write_json(path, report)
    print(json.dumps(report, sort_keys=True))
    print(path)
    ok = report["bijection"] and report["criterion1"] and report["window_coverage"]
    return EXIT_OK if ok else EXIT_FAILED


def cmd_slope(args) -> int:
    try:
        curves = read_ber_csv(args.csv)
    except (ValueError, KeyError) as exc:
        raise InsufficientDataError(f"cannot read {args.csv}: {exc}") from None
    users = [args.user] if args.user is not None else sorted(curves)
    out = []
    for u in users:
        if u not in curves:
            raise InsufficientDataError(f"user {u} not present in {args.csv}")
        fit = fit_diversity_slope(curves[u], args.window, min_errors=args.min_errors)
        out.append({"user": u, "slope": fit.slope, "stderr": fit.stderr, "n_points": fit.n_points,
                    "window": list(fit.window)})
    print(json.dumps(out, sort_keys=True))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        _write_json(Path(args.out) / "slope.json", out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bicmb", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="TOML config file")
        p.add_argument("--out", default="runs", help="output root (default: runs)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--snr", type=parse_range, help="override the SNR grid, a:b:step in dB")
        p.set_defaults(func=func)
        return p

    p = with_config("simulate", cmd_simulate, "Monte Carlo BER sweep")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--max-frames", type=int, help="override frames per SNR point")
    with_config("bound", cmd_bound, "union-bound BER curves")
    with_config("diversity", cmd_diversity, "closed-form diversity gains")
    p = with_config("channel-stats", cmd_channel_stats, "singular-value spectra and numerical rank")
    p.add_argument("--realizations", type=int, default=100)
    p.add_argument("--keep", type=int, default=32, help="singular values kept per realization")
    with_config("validate-interleaver", cmd_validate_interleaver, "interleaver design-rule report")

    p = sub.add_parser("slope", help="fit the diversity slope of a BER CSV")
    p.add_argument("csv")
    p.add_argument("--window", type=_window, help="SNR window a:b in dB (default: top 10 dB)")
    p.add_argument("--user", type=int)
    p.add_argument("--min-errors", type=int, default=100)
    p.add_argument("--out", help="also write slope.json here")
    p.set_defaults(func=cmd_slope)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except InfeasibleConfigurationError as exc:
        log.error("infeasible scenario: %s", exc)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        log.error("config error%s: %s", f" [{exc.key}]" if exc.key else "", exc)
        return EXIT_CONFIG
    except (ConstraintViolationError, InsufficientDataError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
