"""Command-line front end for the random-periodic-solution experiments.

Subcommands: simulate, pullback, periodicity, converge, contraction.
Configuration is a flat key=value file, overridable by command-line flags
(flags win). Every run writes its outputs, a gnuplot script, and a manifest
(resolved config + seed + library version) into the output directory; the
exit code is 0 iff every pass/fail check in the run passed.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    contraction_constant,
    ms_error,
    numerical_contraction_test,
    write_convergence_csv,
)
from .integrator import ThetaScheme, simulate_ensemble
from .models import ModelCatalogEntry, catalog_entry
from .periodic import (
    PullbackError,
    _ensemble_noise,
    initial_value_independence,
    periodicity_check_pullback,
    periodicity_check_shifted,
    pullback_converge,
)

__all__ = ["main"]

_FLOAT_FMT = "{:.17g}"


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    """Flat key=value text; '#' starts a comment; later keys win."""
    cfg = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def _floats(text):
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _resolve_model(cfg) -> ModelCatalogEntry:
    name = cfg.get("model", "cubic_multiplicative")
    params = {
        key.split(".", 1)[1]: float(value)
        for key, value in cfg.items()
        if key.startswith("model.")
    }
    return catalog_entry(name, **params)


def _resolve_scheme(cfg) -> ThetaScheme:
    theta = float(cfg.get("theta", 1.0))
    if "dt" in cfg:
        dt = float(cfg["dt"])
    elif "level" in cfg:
        dt = 2.0 ** -int(cfg["level"])
    else:
        dt = 0.1
    return ThetaScheme(
        theta=theta,
        dt=dt,
        newton_tol=float(cfg.get("newton_tol", 1e-5)),
        newton_max_iter=int(cfg.get("newton_max_iter", 50)),
    )


def _write_manifest(out: Path, cfg: dict, command: str):
    lines = [f"command={command}", f"version={__version__}"]
    lines += [f"{k}={v}" for k, v in sorted(cfg.items())]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def _write_plot_script(out: Path, name: str, lines: list[str]):
    header = [
        "# gnuplot script; run: gnuplot " + name,
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set grid",
    ]
    (out / name).write_text("\n".join(header + lines) + "\n")


def _chunked_shared_noise_paths(problem, scheme, start, n_steps, x0s, incs, jobs):
    """Simulate several initial values under one shared noise path, chunked.

    Results are concatenated in initial-value order; per-path values are
    independent of the chunking, so any worker count gives identical output.
    """
    n = x0s.shape[0]
    jobs = max(1, min(jobs, n))
    size = (n + jobs - 1) // jobs
    chunks = [(lo, min(lo + size, n)) for lo in range(0, n, size)]

    def run(lo, hi):
        _, states, _ = simulate_ensemble(
            problem, scheme, start, n_steps, x0s[lo:hi], incs, record=True
        )
        return states

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(lambda c: run(*c), chunks))
    else:
        parts = [run(*c) for c in chunks]
    return np.concatenate(parts, axis=0)


def run_simulate(cfg: dict, out: Path, jobs: int) -> bool:
    entry = _resolve_model(cfg)
    problem = entry.problem
    scheme = _resolve_scheme(cfg)
    seed = int(cfg.get("seed", 0))
    k = int(cfg.get("k", 5))
    horizon = float(cfg.get("horizon", 0.0))
    xis = _floats(cfg.get("initial_values", "0.6,0,-0.6"))
    start = -k * problem.period
    n_steps = round((horizon - start) / scheme.dt)
    x0s = np.array(xis, dtype=float)[:, None]
    times = start + scheme.dt * np.arange(n_steps + 1)
    if n_steps == 0:
        states = np.repeat(x0s[:, None, :], 1, axis=1)
    else:
        incs = _ensemble_noise(
            seed, scheme.dt, (start, horizon), problem.noise_dim, 1
        )
        states = _chunked_shared_noise_paths(
            problem, scheme, start, n_steps, x0s, incs, jobs
        )
    csv_path = out / "trajectories.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"xi_{_FLOAT_FMT.format(v)}" for v in xis])
        for j, t in enumerate(times):
            w.writerow(
                [_FLOAT_FMT.format(t)]
                + [_FLOAT_FMT.format(states[i, j, 0]) for i in range(len(xis))]
            )
    _write_plot_script(
        out,
        "trajectories.gp",
        [
            "plot "
            + ", ".join(
                f"'trajectories.csv' using 1:{i + 2} with lines"
                for i in range(len(xis))
            )
        ],
    )
    return True


def run_pullback(cfg: dict, out: Path, jobs: int) -> bool:
    entry = _resolve_model(cfg)
    scheme = _resolve_scheme(cfg)
    seed = int(cfg.get("seed", 0))
    try:
        result = pullback_converge(
            entry.problem,
            scheme,
            t_eval=float(cfg.get("t_eval", 0.0)),
            xi=_floats(cfg.get("xi", "0.6")),
            tolerance=float(cfg.get("tolerance", 1e-3)),
            k_max=int(cfg.get("k_max", 20)),
            ensemble=int(cfg.get("ensemble", 100)),
            seed=seed,
        )
    except PullbackError as exc:
        print(f"pullback: FAILED ({exc})", file=sys.stderr)
        return False
    with open(out / "pullback.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x"])
        for t, x in zip(result.sample_times, result.states):
            w.writerow([_FLOAT_FMT.format(t), _FLOAT_FMT.format(x[0])])
        w.writerow(["k_used", result.k_used])
        w.writerow(["l2_gap", _FLOAT_FMT.format(result.l2_gap)])
        w.writerow(["converged", int(result.converged)])
    _write_plot_script(out, "pullback.gp", ["plot 'pullback.csv' using 1:2 with lines"])
    print(f"pullback: converged k={result.k_used} gap={result.l2_gap:.3g}")
    return result.converged


def run_periodicity(cfg: dict, out: Path, jobs: int) -> bool:
    entry = _resolve_model(cfg)
    problem = entry.problem
    scheme = _resolve_scheme(cfg)
    seed = int(cfg.get("seed", 0))
    k = int(cfg.get("k", 5))
    window = _floats(cfg.get("window", f"{-2 * problem.period},0"))
    shifted = periodicity_check_shifted(
        problem,
        scheme,
        k=k,
        xi=_floats(cfg.get("xi", "0.6")),
        window=(window[0], window[1]),
        seed=seed,
        threshold=float(cfg.get("threshold", 1e-2)),
    )
    pullback = periodicity_check_pullback(
        problem,
        scheme,
        x0=_floats(cfg.get("x0", "-0.2")),
        horizon=float(cfg.get("horizon", 5 * problem.period)),
        seed=seed,
        threshold=float(cfg.get("threshold", 1e-2)),
    )
    with open(out / "periodicity_shifted.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "path", "shifted_path"])
        for t, a, b in zip(shifted.times, shifted.reference, shifted.shifted):
            w.writerow([_FLOAT_FMT.format(t)] + [_FLOAT_FMT.format(v[0]) for v in (a, b)])
        w.writerow(["sup_gap", _FLOAT_FMT.format(shifted.sup_gap), ""])
    with open(out / "periodicity_pullback.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "curve"])
        for t, v in zip(pullback.times, pullback.reference):
            w.writerow([_FLOAT_FMT.format(t), _FLOAT_FMT.format(v[0])])
        w.writerow(["period_deviation", _FLOAT_FMT.format(pullback.sup_gap)])
    _write_plot_script(
        out,
        "periodicity.gp",
        [
            "plot 'periodicity_shifted.csv' using 1:2 with lines, "
            "'periodicity_shifted.csv' using 1:3 with lines",
            "pause -1",
            "plot 'periodicity_pullback.csv' using 1:2 with lines",
        ],
    )
    print(
        f"periodicity: shifted gap={shifted.sup_gap:.3g} "
        f"({'pass' if shifted.passed else 'FAIL'}), "
        f"pullback deviation={pullback.sup_gap:.3g} "
        f"({'pass' if pullback.passed else 'FAIL'})"
    )
    return shifted.passed and pullback.passed


def run_converge(cfg: dict, out: Path, jobs: int) -> bool:
    entry = _resolve_model(cfg)
    report = ms_error(
        entry.problem,
        theta=float(cfg.get("theta", 1.0)),
        levels=_ints(cfg.get("levels", "6,7,8,9,10")),
        reference_level=int(cfg.get("reference_level", 12)),
        ensemble=int(cfg.get("ensemble", 200)),
        t_start=float(cfg.get("t_start", -4.0)),
        t_end=float(cfg.get("t_end", 4.0)),
        seed=int(cfg.get("seed", 0)),
        xi=_floats(cfg.get("xi", "0.6")),
        newton_tol=float(cfg.get("newton_tol", 1e-5)),
        jobs=jobs,
    )
    write_convergence_csv(report, out / "convergence.csv")
    _write_plot_script(
        out,
        "convergence.gp",
        [
            "set logscale xy 2",
            "plot 'convergence.csv' using 2:3 with linespoints",
        ],
    )
    print(f"converge: slope={report.fitted_slope:.4f} intercept={report.intercept:.4f}")
    return bool(np.isfinite(report.fitted_slope))


def run_contraction(cfg: dict, out: Path, jobs: int) -> bool:
    entry = _resolve_model(cfg)
    problem = entry.problem
    scheme = _resolve_scheme(cfg)
    consts = contraction_constant(
        problem.lambda_min,
        problem.one_sided_lipschitz,
        scheme.theta,
        problem.moment_exponent,
        scheme.dt,
    )
    test = numerical_contraction_test(
        problem,
        scheme,
        xi=_floats(cfg.get("xi", "0.6")),
        eta=_floats(cfg.get("eta", "-0.6")),
        k=int(cfg.get("k", 15)),
        ensemble=int(cfg.get("ensemble", 200)),
        seed=int(cfg.get("seed", 0)),
    )
    with open(out / "contraction.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "mean_square_gap", "envelope"])
        for j, g, e in zip(test.steps, test.gap_series, test.envelope):
            w.writerow([j, _FLOAT_FMT.format(g), _FLOAT_FMT.format(e)])
        w.writerow(["c_delta", _FLOAT_FMT.format(consts.c_delta), ""])
        w.writerow(["exact_rate", _FLOAT_FMT.format(consts.exact_rate), ""])
    _write_plot_script(
        out,
        "contraction.gp",
        [
            "set logscale y",
            "plot 'contraction.csv' using 1:2 with lines, "
            "'contraction.csv' using 1:3 with lines",
        ],
    )
    print(
        f"contraction: c_delta={consts.c_delta:.6g} "
        f"({'pass' if test.passed else 'FAIL'})"
    )
    return test.passed


_COMMANDS = {
    "simulate": run_simulate,
    "pullback": run_pullback,
    "periodicity": run_periodicity,
    "converge": run_converge,
    "contraction": run_contraction,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rpsde",
        description="Random periodic solutions of dissipative SDEs via theta methods",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out", type=str, default=".")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (repeatable)",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = {}
    try:
        if args.config:
            cfg.update(load_config(args.config))
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            cfg[key.strip()] = value.strip()
        if args.seed is not None:
            cfg["seed"] = str(args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_manifest(out, cfg, args.command)
        ok = _COMMANDS[args.command](cfg, out, max(1, args.jobs))
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
