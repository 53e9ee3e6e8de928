"""Command-line front end.

Exit codes: 0 ok, 1 replay mismatch, 2 invalid input, 3 I/O failure,
4 insufficient data. Diagnostics go to standard error; standard output
stays empty.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Any

from . import __version__
from .adversary import (
    MIN_TRIALS,
    build_attack_set,
    estimate_miss_probability,
)
from .analysis import (
    InsufficientDataError,
    alpha_of_config,
    correlation_length,
    empirical_autocorrelation,
    exact_autocorrelation,
    fit_correlation_length,
    fourier_by_quadrature,
    gap_variance,
    marginal_uniformity_test,
    offsets,
    spectral_report,
)
from .experiments import lc_table, sweep_cell
from .reporting import RunManifest, rounded, sha256, write_csv, write_json
from .sampler import (
    STRATEGIES,
    InvalidConfigError,
    SamplingConfig,
    Schedule,
    build_schedule,
    iter_offsets,
    validate_config,
)
from .seeding import derive_seed, make_rng

EXIT_OK, EXIT_MISMATCH, EXIT_INVALID, EXIT_IO, EXIT_INSUFFICIENT = 0, 1, 2, 3, 4


class UsageError(ValueError):
    pass


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _read_json(path: str | Path) -> Any:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON ({exc})") from exc


def _load_config(path: str) -> tuple[SamplingConfig, str, dict]:
    raw = _read_json(path)
    try:
        config = SamplingConfig.from_dict(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: malformed config ({exc})") from exc
    return config, raw.get("strategy", "jwr"), raw


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _sidecar(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def cmd_generate(args, manifest: RunManifest) -> int:
    config, strategy, raw = _load_config(args.config)
    strategy = args.strategy or strategy
    validate_config(config, strategy)
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    sched = build_schedule(strategy, config, args.seed, args.n)
    out = Path(args.out)
    sched.save(out)
    manifest.config = dict(raw, strategy=strategy, n=args.n)
    manifest.record(out)
    return EXIT_OK


def cmd_validate(args, manifest: RunManifest | None) -> int:
    config, strategy, _ = _load_config(args.config)
    validate_config(config, args.strategy or strategy)
    _err(f"{args.config}: valid")
    return EXIT_OK


def _schedule_source(args) -> tuple[SamplingConfig, str, Schedule | None, dict]:
    if args.schedule:
        sched = Schedule.load(args.schedule)
        return sched.config, sched.strategy, sched, {"schedule": args.schedule}
    if not args.config:
        raise UsageError("analyze needs --schedule or --config")
    config, strategy, raw = _load_config(args.config)
    strategy = args.strategy or strategy
    validate_config(config, strategy)
    return config, strategy, None, dict(raw, strategy=strategy)


def cmd_analyze(args, manifest: RunManifest) -> int:
    config, strategy, sched, resolved = _schedule_source(args)
    out = Path(args.out)
    which = args.which
    resolved.update(which=which, format=args.format)
    manifest.config = resolved
    if sched is None and which in ("autocorr", "gaps"):
        sched = build_schedule(strategy, config, args.seed, args.n)
        resolved["n"] = args.n
    if which == "marginal":
        return _analyze_marginal(args, config, strategy, sched, out, manifest)
    if which == "autocorr":
        return _analyze_autocorr(args, config, sched, out, manifest)
    if which == "gaps":
        return _analyze_gaps(args, config, sched, out, manifest)
    return _analyze_spectral(args, config, strategy, out, manifest)


def _analyze_marginal(args, config, strategy, sched, out, manifest) -> int:
    rows = []
    if sched is not None:
        res = marginal_uniformity_test(offsets(sched), config.t, config.mode)
        rows.append(("pooled", res.statistic, res.p_value, res.n))
    else:
        indices = sorted(int(i) for i in args.index.split(","))
        rng = make_rng(derive_seed(args.seed, "marginal"))
        stream = iter_offsets(strategy, config, args.trials, rng)
        for i in range(max(indices) + 1):
            b = next(stream)
            if i in indices:
                res = marginal_uniformity_test(b, config.t, config.mode)
                rows.append((i, res.statistic, res.p_value, res.n))
        manifest.config.update(trials=args.trials, index=indices)
    header = ("index", "statistic", "p_value", "n")
    if args.format == "csv":
        write_csv(out, header, rows)
    else:
        write_json(out, {"tests": [dict(zip(header, r)) for r in rows], "mode": config.mode})
    manifest.record(out)
    manifest.summary = {"min_p_value": min(r[2] for r in rows)}
    return EXIT_OK


def _analyze_autocorr(args, config, sched, out, manifest) -> int:
    if sched.strategy != "jwr":
        raise InsufficientDataError("autocorrelation needs a jittered (jwr) schedule")
    alpha = alpha_of_config(config) if config.discrete and config.t == 2 else None
    curve = empirical_autocorrelation(offsets(sched), args.max_lag, alpha=alpha)
    if alpha is None and config.discrete:
        curve.theoretical = exact_autocorrelation(config, args.max_lag)
    try:
        l_fit = fit_correlation_length(curve)
    except InsufficientDataError:
        l_fit = None
    summary = {
        "alpha": alpha,
        "l_c_theory": correlation_length(alpha) if alpha is not None and 0 < alpha < 0.5 else None,
        "l_c_fit": l_fit,
        "n": curve.n,
        "block_len": curve.block_len,
        "lc_table": lc_table(),
    }
    header = ("lag", "empirical", "theoretical", "stderr")
    rows = list(zip(curve.lags, curve.empirical, curve.theoretical, curve.stderr))
    if args.format == "csv":
        write_csv(out, header, rows)
        side = write_json(_sidecar(out, ".summary.json"), summary)
        manifest.record(out, side)
    else:
        write_json(out, dict(summary, curve=[dict(zip(header, r)) for r in rows]))
        manifest.record(out)
    manifest.summary = summary
    return EXIT_OK


def _analyze_gaps(args, config, sched, out, manifest) -> int:
    var = gap_variance(sched)
    alpha = None
    if sched.strategy == "jwr" and config.discrete and config.t == 2:
        alpha = alpha_of_config(config)
    report = {"strategy": sched.strategy, "gap_variance": var, "n": len(sched), "alpha_theory": alpha}
    if args.format == "csv":
        write_csv(out, tuple(report), [tuple(report.values())])
    else:
        write_json(out, report)
    manifest.record(out)
    manifest.summary = report
    return EXIT_OK


def _analyze_spectral(args, config, strategy, out, manifest) -> int:
    if strategy != "jwr":
        raise UsageError("spectral analysis applies to jittered (jwr) configs")
    rep = spectral_report(config, max_k=args.max_k, steps=args.steps)
    if config.discrete:
        oracle = [None] * len(rep.ks)
    else:
        oracle = [fourier_by_quadrature(config, int(k)) for k in rep.ks]
    header = ("k", "d_real", "d_imag", "d_quadrature")
    rows = list(zip(rep.ks, rep.d.real, rep.d.imag, oracle))
    tv_rows = list(zip(range(len(rep.tv)), rep.tv, rep.tv_bound))
    summary = rep.to_dict()
    if args.format == "csv":
        write_csv(out, header, rows)
        tv_path = write_csv(_sidecar(out, ".tv.csv"), ("n", "tv", "bound"), tv_rows)
        side = write_json(_sidecar(out, ".summary.json"), summary)
        manifest.record(out, tv_path, side)
    else:
        write_json(out, dict(summary, d=[dict(zip(header, r)) for r in rows],
                             tv=[dict(zip(("n", "tv", "bound"), r)) for r in tv_rows]))
        manifest.record(out)
    manifest.summary = {"spectral_gap_modulus": rep.slem, "tv_constant": rep.tv_constant}
    return EXIT_OK


def cmd_attack(args, manifest: RunManifest) -> int:
    config, strategy, raw = _load_config(args.config)
    strategy = args.strategy or strategy
    validate_config(config, strategy)
    if args.trials < MIN_TRIALS:
        raise UsageError(f"--trials must be at least {MIN_TRIALS}")
    spec = _read_json(args.attack)
    horizon = args.horizon if args.horizon is not None else spec.get("horizon")
    attack = build_attack_set(spec, horizon, config.mode)
    horizons = [float(h) if not config.discrete else int(h) for h in args.horizons.split(",")] if args.horizons else None
    exact = config.discrete and not args.no_exact
    curve = estimate_miss_probability(strategy, config, attack, args.trials, args.seed, horizons, exact=exact)
    header = ["strategy", "horizon", "measure", "trials", "misses", "p_hat", "wilson_lo", "wilson_hi"]
    if exact:
        header.append("exact_dp")
    rows = []
    for p in curve.points:
        row = [strategy, p.horizon, p.measure, p.trials, p.misses, p.p_hat, p.wilson_lo, p.wilson_hi]
        if exact:
            row.append(p.exact)
        rows.append(row)
    out = Path(args.out)
    write_csv(out, header, rows)
    fit_path = write_json(_sidecar(out, ".fit.json"), curve.fit_summary())
    manifest.config = dict(raw, strategy=strategy, attack=attack.to_dict(), trials=args.trials,
                           horizons=[p.horizon for p in curve.points])
    manifest.record(out, fit_path)
    manifest.summary = curve.fit_summary()
    return EXIT_OK


def cmd_sweep(args, manifest: RunManifest) -> int:
    grid = _read_json(args.grid)
    cells = [{"alpha": a} for a in grid.get("alpha", [])] + list(grid.get("cells", []))
    if not cells:
        raise UsageError("sweep grid has no cells")
    steps = int(grid.get("steps", 10**6))
    max_lag = int(grid.get("max_lag", 10))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results, failures = [], []
    for idx, params in enumerate(cells):
        path = out_dir / f"cell_{idx:03d}.json"
        key = {"params": params, "seed": args.seed, "steps": steps, "max_lag": max_lag}
        if path.exists():
            prior = json.loads(path.read_text())
            if prior.get("key") == rounded(key) and "result" in prior:
                results.append((idx, prior["result"]))
                manifest.record(path)
                continue
        try:
            res = sweep_cell(params, args.seed, steps, max_lag)
        except (ValueError, InsufficientDataError) as exc:
            failures.append({"cell": idx, "params": params, "error": str(exc)})
            _err(f"cell {idx} failed: {exc}")
            continue
        write_json(path, {"key": key, "result": res})
        manifest.record(path)
        results.append((idx, json.loads(path.read_text())["result"]))
    header = ("alpha", "l_c_theory", "autocorr_fit_l_c", "gap_variance_empirical", "miss_slope", "t", "t_p", "cell")
    agg = write_csv(out_dir / "aggregate.csv", header,
                    [[r.get(h) for h in header[:-1]] + [idx] for idx, r in results])
    manifest.record(agg)
    if failures:
        fail_path = write_json(out_dir / "failures.json", failures)
        manifest.record(fail_path)
    manifest.config = {"grid": grid, "steps": steps, "max_lag": max_lag}
    manifest.summary = {"cells": len(cells), "succeeded": len(results), "failed": len(failures)}
    if not results:
        _err("every sweep cell failed")
        return EXIT_INVALID
    return EXIT_OK


def cmd_replay(args, manifest: RunManifest | None) -> int:
    prior = RunManifest.load(args.manifest)
    here = os.getcwd()
    os.chdir(prior.cwd or here)
    try:
        code = main(prior.argv)
    finally:
        os.chdir(here)
    if code != EXIT_OK:
        return code
    bad = [p for p, digest in prior.outputs.items() if not Path(p).exists() or sha256(p) != digest]
    for p in bad:
        _err(f"replay mismatch: {p}")
    if not bad:
        _err(f"replay reproduced {len(prior.outputs)} output(s) exactly")
    return EXIT_MISMATCH if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jitter-reflect", description="Jittered frame sampling with reflection.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, out=True):
        if config:
            p.add_argument("--config", help="sampling config JSON")
        p.add_argument("--seed", type=int, default=0, help="master seed (u64)")
        if out:
            p.add_argument("--out", required=True, help="output path")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--strategy", choices=STRATEGIES, default=None)

    p = sub.add_parser("generate", help="write a schedule JSON")
    common(p)
    p.add_argument("--n", type=int, default=1000, help="number of timestamps")

    p = sub.add_parser("validate", help="check a sampling config")
    common(p, out=False)

    p = sub.add_parser("analyze", help="statistics of a schedule or config")
    common(p)
    p.add_argument("--schedule", help="schedule JSON (instead of --config)")
    p.add_argument("--which", choices=("marginal", "autocorr", "gaps", "spectral"), required=True)
    p.add_argument("--n", type=int, default=10**6, help="schedule length when generating")
    p.add_argument("--trials", type=int, default=10**5, help="independent schedules for marginal tests")
    p.add_argument("--index", default="0,1,5,50", help="step indices for marginal tests")
    p.add_argument("--max-lag", type=int, default=10)
    p.add_argument("--max-k", type=int, default=64)
    p.add_argument("--steps", type=int, default=200, help="TV decay steps")

    p = sub.add_parser("attack", help="estimate miss probability against an attack set")
    common(p)
    p.add_argument("--attack", required=True, help="attack spec JSON")
    p.add_argument("--trials", type=int, default=10**4)
    p.add_argument("--horizon", type=float, default=None, help="override the attack horizon")
    p.add_argument("--horizons", default=None, help="comma-separated evaluation horizons (multiples of t)")
    p.add_argument("--no-exact", action="store_true", help="skip the exact recursion column")

    p = sub.add_parser("sweep", help="run a parameter grid")
    common(p, config=False)
    p.add_argument("--grid", required=True, help="grid JSON with 'alpha' and/or 'cells'")

    p = sub.add_parser("replay", help="re-run a manifest and compare outputs")
    p.add_argument("manifest")
    return parser


COMMANDS = {
    "generate": cmd_generate,
    "validate": cmd_validate,
    "analyze": cmd_analyze,
    "attack": cmd_attack,
    "sweep": cmd_sweep,
    "replay": cmd_replay,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "horizon", None) is not None and float(args.horizon).is_integer():
        args.horizon = int(args.horizon)
    writes = args.command not in ("validate", "replay")
    manifest = None
    if writes:
        manifest = RunManifest(args.command, argv, {}, getattr(args, "seed", None), __version__, cwd=os.getcwd())
    start = time.perf_counter()
    try:
        code = COMMANDS[args.command](args, manifest)
    except InvalidConfigError as exc:
        _err("invalid config:")
        for name, msg in exc.errors:
            _err(f"  {name}: {msg}")
        return EXIT_INVALID
    except InsufficientDataError as exc:
        _err(f"insufficient data: {exc}")
        return EXIT_INSUFFICIENT
    except (UsageError, ValueError, KeyError) as exc:
        _err(f"invalid input: {exc}")
        return EXIT_INVALID
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO
    if manifest is not None and manifest.outputs:
        manifest.duration_s = time.perf_counter() - start
        target = Path(args.out) / "manifest.json" if args.command == "sweep" else _manifest_path(Path(args.out))
        try:
            manifest.save(target)
        except OSError as exc:
            _err(f"I/O error: {exc}")
            return EXIT_IO
        _err(f"wrote {len(manifest.outputs)} output(s); manifest {target}")
    return code


if __name__ == "__main__":
    sys.exit(main())
