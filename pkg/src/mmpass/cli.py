"""Command-line entry points for the experiment drivers.

Subcommands mirror the drivers: rate-vs-power, outage, convergence,
field-map and scaling write CSVs to the output directory; validate and
oracle run quick self-checks (properties and brute-force cross-checks)
and exit nonzero on any failure.  The output directory defaults to
./out, overridable with --out-dir or the MMPASS_OUT_DIR environment
variable.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from dataclasses import replace

import numpy as np

from . import bench
from .config import ScenarioConfig, build_scenario, config_hash, load_config


def _parse_powers(values):
    return [float(v) for v in values]


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=int(args.seed))
    return cfg.validate()


def _out_dir(args) -> str:
    return args.out_dir or os.environ.get("MMPASS_OUT_DIR", "out")


def add_common(p):
    p.add_argument("--config", help="YAML config file (defaults otherwise)")
    p.add_argument("--seed", type=int, help="override the config RNG seed")
    p.add_argument("--out-dir", help="output directory (or MMPASS_OUT_DIR)")
    p.add_argument("--scheme", action="append", dest="schemes",
                   help="restrict to a scheme (repeatable)")


def cmd_rate_vs_power(args) -> int:
    cfg = _load(args)
    powers = _parse_powers(args.powers or ["0", "5", "10", "15", "20"])
    result = bench.run_rate_vs_power(cfg, powers, schemes=args.schemes)
    path = result.write_csv(_out_dir(args))
    print(f"wrote {path} ({len(result.rows)} rows)")
    return 0


def cmd_outage(args) -> int:
    cfg = _load(args)
    powers = _parse_powers(args.powers
                           or [str(p) for p in range(-22, -1, 2)])
    result = bench.run_outage(cfg, powers, threshold_rate=args.threshold,
                              trials=args.trials)
    path = result.write_csv(_out_dir(args))
    print(f"wrote {path} ({len(result.rows)} rows)")
    try:
        p_mm = bench.power_at_outage(result, "MM", 1e-2)
        p_sm = bench.power_at_outage(result, "SM-TDMA", 1e-2)
        print(f"power at 1e-2 outage: MM {p_mm:.2f} dBW, "
              f"SM-TDMA {p_sm:.2f} dBW (saving {p_sm - p_mm:.2f} dB)")
    except ValueError:
        print("outage curves do not cross 1e-2 on this power grid")
    return 0


def cmd_convergence(args) -> int:
    cfg = _load(args)
    result = bench.run_convergence(cfg, schemes=args.schemes)
    path = result.write_csv(_out_dir(args))
    print(f"wrote {path} ({len(result.rows)} rows)")
    return 0


def cmd_field_map(args) -> int:
    cfg = _load(args)
    result = bench.run_field_map(cfg, grid_res=args.grid_res)
    path = result.write_csv(_out_dir(args))
    iy = int(np.argmin(np.abs(result.ys - cfg.d_y / 2)))
    metrics = bench.xcut_lobe_metrics(result.xs, result.grid_db[iy])
    print(f"wrote {path}; main lobe at x={metrics.peak_x:.2f} m, "
          f"HPBW {metrics.half_power_width:.2f} m, "
          f"sidelobe -{metrics.sidelobe_suppression_db:.1f} dB")
    return 0


def cmd_scaling(args) -> int:
    cfg = _load(args)
    result = bench.run_scaling(cfg, schemes=args.schemes)
    path = result.write_csv(_out_dir(args))
    print(f"wrote {path} ({len(result.rows)} rows)")
    return 0


def cmd_validate(args) -> int:
    """Fast invariant checks over a freshly built scenario."""
    cfg = _load(args)
    failures = []
    scn = build_scenario(cfg)

    from .channel import assemble
    from .multiuser import optimize_scenario
    lam_ok = True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = optimize_scenario(scn, "pa-mm")
        for slot in res.slots:
            deployed = replace(
                scn.with_modes(scn.num_modes),
                users=scn.users[slot.user_indices],
                noise=scn.noise[slot.user_indices],
                placements=slot.placements)
            rx = np.zeros((len(slot.user_indices), 3))
            for k_local in range(len(slot.user_indices)):
                for cand in slot.candidates.values():
                    if k_local in cand.users:
                        rx[k_local] = cand.rx_world[cand.users.index(k_local)]
                        break
                else:
                    rx[k_local] = [0.0, 0.0, 1.0]
            cm = assemble(deployed, rx)
            if cm.lam.min() < 0 or cm.lam.max() > 1 + 1e-9:
                lam_ok = False
    _check(failures, "polarization mask entries within [0, 1]", lam_ok)
    _check(failures, "FP trace nondecreasing",
           bool(np.all(np.diff(res.trace) >= -1e-9)))
    _check(failures, "rates finite and nonnegative",
           bool(np.all(np.isfinite(res.report.per_user_rate))
                and np.all(res.report.per_user_rate >= 0)))

    from .geometry import Orientation
    rng = np.random.default_rng(0)
    ok = True
    for _ in range(200):
        o = Orientation(rng.uniform(-np.pi / 2, np.pi / 2),
                        rng.uniform(-np.pi / 2, np.pi / 2))
        r = o.gcs_from_lcs()
        ok &= bool(np.allclose(r @ r.T, np.eye(3), atol=1e-12))
        ok &= bool(abs(np.linalg.det(r) - 1) < 1e-12)
    _check(failures, "port frames orthonormal, det +1", ok)

    for line in failures:
        print("FAIL:", line)
    if not failures:
        print(f"validate: all checks passed (config {config_hash(cfg)})")
    return 1 if failures else 0


def cmd_oracle(args) -> int:
    """Brute-force cross-checks of the closed-form rules."""
    cfg = _load(args)
    failures = []
    scn = build_scenario(cfg, users=np.zeros((2, 3)))
    from .placement import LinkModel, optimal_position
    link = LinkModel(scn)
    wg = scn.waveguides[0]
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for _ in range(10):
        user = np.array([rng.uniform(2, wg.length - 1),
                         rng.uniform(0, cfg.d_y), 0.0])
        x_star, _ = optimal_position(user, wg, scn.alpha_a)
        xs = np.arange(0.0, user[0] + 1e-9, 0.001)
        gains = link.gain(1, xs, user)
        worst = max(worst, abs(x_star - xs[np.argmax(gains)]))
    _check(failures, f"position rule vs 1 mm search (worst {worst*100:.2f} cm)",
           worst < 0.02)

    from scipy.optimize import linear_sum_assignment
    import itertools
    ok = True
    for trial in range(20):
        t_rng = np.random.default_rng((cfg.seed, trial))
        size = int(t_rng.integers(2, 6))
        table = t_rng.uniform(0, 10, size=(size, size))
        rows, cols = linear_sum_assignment(table, maximize=True)
        best = max(sum(table[i, p[i]] for i in range(size))
                   for p in itertools.permutations(range(size)))
        ok &= bool(abs(table[rows, cols].sum() - best) < 1e-9)
    _check(failures, "assignment equals exhaustive search", ok)

    for line in failures:
        print("FAIL:", line)
    if not failures:
        print(f"oracle: all cross-checks passed (config {config_hash(cfg)})")
    return 1 if failures else 0


def _check(failures, label, ok):
    print(("PASS: " if ok else "FAIL: ") + label)
    if not ok:
        failures.append(label)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mmpass",
        description="Desk-scale simulator and optimizer for multi-mode "
                    "pinching-antenna systems")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rate-vs-power", help="sum rate over a power grid")
    add_common(p)
    p.add_argument("--powers", nargs="+", help="power grid in dBW")
    p.set_defaults(func=cmd_rate_vs_power)

    p = sub.add_parser("outage", help="Monte Carlo outage curves")
    add_common(p)
    p.add_argument("--powers", nargs="+", help="power grid in dBW")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--threshold", type=float, default=1.0,
                   help="outage rate threshold, bits/s/Hz")
    p.set_defaults(func=cmd_outage)

    p = sub.add_parser("convergence", help="per-iteration sum-rate traces")
    add_common(p)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("field-map", help="normalized floor intensity map")
    add_common(p)
    p.add_argument("--grid-res", type=float, default=0.01,
                   help="x resolution in meters")
    p.set_defaults(func=cmd_field_map)

    p = sub.add_parser("scaling", help="sum rate vs array and user counts")
    add_common(p)
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("validate", help="run the invariant self-checks")
    add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="brute-force cross-checks")
    add_common(p)
    p.set_defaults(func=cmd_oracle)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
