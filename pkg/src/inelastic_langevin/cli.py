"""Command-line surface.

Subcommands:

* ``simulate``      emit path CSVs for either route;
* ``verify``        run one verification family (lemma1 | prop2 | prop3 |
                    bm | lemma4) and emit a JSON report;
* ``crosscheck``    run both routes and the two-sample comparison;
* ``counterexample``  build / verify / export the deterministic example;
* ``acceptance``    run the full gate suite.

Exit codes: 0 all gates passed; 1 usage or configuration error; 2 a
numerical gate failed; 3 a horizon/resource limit was hit.

Flags override config-file values; every report embeds the effective
config and seed.  The environment variable INELASTIC_LANGEVIN_OUT sets
the default output directory.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import runner, serialize
from .errors import ConfigError, GateError, HorizonError, SimulationError
from .integrator import IntegratorConfig, simulate_sde
from .paths import RngStream, TimeGrid, sample_brownian
from .recovery import build_recovery, verify_boundary_intervals
from .runner import RunConfig, KNOWN_KEYS
from .stat_tests import brownian_battery
from . import counterexample as cx

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_GATE = 2
EXIT_HORIZON = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inelastic-langevin",
        description="Reflected-Langevin simulation and verification toolkit",
        exit_on_error=False,
    )
    parser.add_argument("--config", help="JSON config file (flags override it)")
    parser.add_argument("--dt", type=float)
    parser.add_argument("--t-max", dest="t_max", type=float)
    parser.add_argument("--paths", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--k", type=int)
    parser.add_argument("--out")
    parser.add_argument("--workers", type=int)

    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", exit_on_error=False,
                         help="emit per-path CSV artifacts")
    sim.add_argument("--method", choices=["construction", "sde"])

    ver = sub.add_parser("verify", exit_on_error=False,
                         help="run one verification family")
    ver.add_argument("kind", choices=["lemma1", "prop2", "prop3", "bm", "lemma4"])

    sub.add_parser("crosscheck", exit_on_error=False,
                   help="compare the two routes in law")

    cxp = sub.add_parser("counterexample", exit_on_error=False,
                         help="deterministic non-uniqueness example")
    cxp.add_argument("kind", choices=["build", "verify", "export"])

    sub.add_parser("acceptance", exit_on_error=False,
                   help="run the full acceptance gate suite")
    return parser


def _effective_config(args) -> RunConfig:
    values = dict()
    if args.config:
        values.update(serialize.load_config_file(args.config, KNOWN_KEYS))
    for key in ("dt", "t_max", "paths", "seed", "epsilon", "k", "out", "workers"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if getattr(args, "method", None):
        values["method"] = args.method
    return RunConfig(**values)


def _cmd_simulate(cfg: RunConfig) -> int:
    out = serialize.output_dir(cfg.out)
    for i in range(cfg.paths):
        if cfg.method == "construction":
            bundle = runner.make_bundle(cfg.seed, i, cfg.dt, cfg.t_max, exact_pair=True)
            serialize.write_bundle_csv(bundle, out / f"path{i:04d}")
        else:
            trace = simulate_sde(IntegratorConfig(
                dt=cfg.dt, t_max=cfg.t_max, stream=RngStream(cfg.seed, i)))
            serialize.write_trace_csv(trace, out / f"path{i:04d}_trace.csv")
            serialize.write_events_csv(trace.events, out / f"path{i:04d}_events.csv")
    print(f"wrote {cfg.paths} {cfg.method} path(s) to {out}")
    return EXIT_OK


def _verify_bm(cfg: RunConfig) -> dict:
    """Battery on the clock-side Brownian part of construction bundles."""
    passed = 0
    for i in range(cfg.paths):
        bundle = runner.make_bundle(cfg.seed, i, cfg.dt, cfg.t_max)
        if bundle.tc.K >= 100 and brownian_battery(bundle.B).pass_:
            passed += 1
    rate = passed / cfg.paths
    return {"battery_pass_rate": rate, "paths": cfg.paths, "pass": rate >= 0.95}


def _verify_lemma4(cfg: RunConfig) -> dict:
    """Inserted-stretch geometry on direct traces with fresh auxiliaries."""
    worst_measure = -np.inf
    sign_ok = True
    n = int(round(cfg.t_max / cfg.dt))
    grid = TimeGrid(0.0, cfg.dt, n)
    slack = 3.0 * np.sqrt(cfg.dt * np.log(1.0 / cfg.dt))
    for i in range(cfg.paths):
        trace = simulate_sde(IntegratorConfig(
            dt=cfg.dt, t_max=cfg.t_max, stream=RngStream(cfg.seed, i)))
        bp = sample_brownian(grid, RngStream(cfg.seed, i, channel="bprime"))
        art = build_recovery(trace.X, trace.V, trace.A, trace.B, bp,
                             window=cfg.t_max)
        rep = verify_boundary_intervals(art, trace.X, slack)
        worst_measure = max(worst_measure, rep["measure_residual"])
        sign_ok &= rep["w_sign_ok"] and rep["x_pullback_max"] == 0.0
    bound = 2.0 * cfg.dt
    ok = worst_measure <= bound and sign_ok
    return {"max_measure_residual": worst_measure, "bound": bound,
            "sign_audits_ok": bool(sign_ok), "paths": cfg.paths, "pass": bool(ok)}


def _cmd_verify(cfg: RunConfig, kind: str) -> int:
    out = serialize.output_dir(cfg.out)
    if kind == "lemma1":
        rep = runner.gate_time_shift(cfg.seed, cfg.paths, cfg.dt, cfg.t_max)
    elif kind == "prop2":
        rep = runner.gate_noise_recovery(cfg.seed, cfg.paths, cfg.dt, cfg.t_max)
    elif kind == "prop3":
        rep = runner.gate_solution_recovery(cfg.seed, cfg.paths, cfg.dt, cfg.t_max)
    elif kind == "bm":
        rep = _verify_bm(cfg)
    else:
        rep = _verify_lemma4(cfg)
    report = serialize.write_report(out / f"verify_{kind}.json", f"verify {kind}",
                                    cfg.to_dict(), rep, rep["pass"])
    print(json.dumps(report, indent=2))
    return EXIT_OK if rep["pass"] else EXIT_GATE


def _cmd_crosscheck(cfg: RunConfig) -> int:
    out = serialize.output_dir(cfg.out)
    rep = runner.gate_cross_check(
        seed=cfg.seed,
        batteries=min(cfg.paths, 200),
        ks_paths=max(cfg.paths * 10, 1000),
        ks_dt=cfg.dt,
    )
    report = serialize.write_report(out / "crosscheck.json", "crosscheck",
                                    cfg.to_dict(), rep, rep["pass"])
    print(json.dumps(report, indent=2))
    return EXIT_OK if rep["pass"] else EXIT_GATE


def _cmd_counterexample(cfg: RunConfig, kind: str) -> int:
    out = serialize.output_dir(cfg.out)
    spec = cx.CounterexampleSpec(k=cfg.k)
    phi = cx.build_phi(spec)
    if kind == "build":
        rep = {"k": cfg.k, "margin": phi.margin,
               "condition_number": phi.condition_number,
               "glue_residual": phi.glue_residual, "pass": True}
    elif kind == "verify":
        rep = runner.gate_counterexample(k=cfg.k)
    else:
        u = spec.grid()
        xa, xb = cx.candidate_solutions(spec, phi)
        serialize.write_columns_csv(
            out / "counterexample.csv",
            ["u", "alpha", "beta", "phi", "F", "X_alpha", "X_beta"],
            [u, cx.alpha_eval(u, spec), cx.beta_eval(u, spec), phi(u),
             cx.force(u, phi), xa.position(u, phi), xb.position(u, phi)],
        )
        rep = {"k": cfg.k, "exported": "counterexample.csv",
               "condition_number": phi.condition_number, "pass": True}
    report = serialize.write_report(out / f"counterexample_{kind}.json",
                                    f"counterexample {kind}", cfg.to_dict(),
                                    rep, rep["pass"])
    print(json.dumps(report, indent=2))
    return EXIT_OK if rep["pass"] else EXIT_GATE


def _cmd_acceptance(cfg: RunConfig) -> int:
    out = serialize.output_dir(cfg.out)
    results = runner.run_acceptance(seed=cfg.seed)
    serialize.write_report(out / "acceptance.json", "acceptance",
                           cfg.to_dict(), results, results["pass"])
    return EXIT_OK if results["pass"] else EXIT_GATE


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except (argparse.ArgumentError, SystemExit) as exc:
        code = getattr(exc, "code", None)
        if isinstance(exc, SystemExit) and code == 0:
            return EXIT_OK  # --help
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _effective_config(args)
        if args.command == "simulate":
            return _cmd_simulate(cfg)
        if args.command == "verify":
            return _cmd_verify(cfg, args.kind)
        if args.command == "crosscheck":
            return _cmd_crosscheck(cfg)
        if args.command == "counterexample":
            return _cmd_counterexample(cfg, args.kind)
        return _cmd_acceptance(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HorizonError as exc:
        print(f"horizon exhausted: {exc}", file=sys.stderr)
        return EXIT_HORIZON
    except GateError as exc:
        print(f"gate failed: {exc}", file=sys.stderr)
        return EXIT_GATE
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GATE


if __name__ == "__main__":
    sys.exit(main())
