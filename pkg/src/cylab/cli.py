"""Command line front end.

Usage: ``cylab SUBCOMMAND --config FILE [--seed N] [--out DIR] [--paths N]``.

Each subcommand writes into ``<output_dir>/<subcommand>/``.  All outputs are
computed in memory first and written only once the run has succeeded, so a
failing run leaves no artifacts behind.  Exit codes:

==  ==========================================
0   success
1   the run finished but its check failed
2   bad command line
3   unreadable or invalid config
4   unknown scenario
5   dimension mismatch between config and scenario
==  ==========================================
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

import numpy as np

from . import gronwall, metrics, paths, solver
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .hilbert import DomainError
from .noise import characteristic_function, sample_bundle, uniform_grid
from .scenarios import DimensionMismatch, UnknownScenario, build_problem, list_scenarios

SCHEMA_VERSION = 1
SUBCOMMANDS = ("noise-check", "calculus-check", "metrics", "solve", "converge", "uniqueness",
               "gronwall")

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_CONFIG, EXIT_SCENARIO, EXIT_DIMENSION = 0, 1, 2, 3, 4, 5


def blob_sha1(data: bytes) -> str:
    """Hash in the same form git uses for blobs."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _pmap(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- subcommands
# Each returns (artifacts: {filename: text}, summary: dict, passed: bool).


def _solve_one(problem, cfg, seed):
    grid = uniform_grid(cfg.T, cfg.n_steps)
    st = solver.euler_peano_solve(problem, sample_bundle(problem.noise, grid, seed), cfg.epsilon)
    increasing = all(a < b for a, b in zip(st.update_times, st.update_times[1:]))
    return seed, st.max_residual, len(st.update_times), increasing, st.path


def cmd_solve(cfg, problem):
    seeds = range(cfg.seed_base, cfg.seed_base + cfg.n_paths)
    results = _pmap(partial(_solve_one, problem, cfg), seeds, cfg.workers)
    rows = [(s, r, u, int(inc)) for s, r, u, inc, _ in results]
    first = results[0][4]
    path_rows = [(t, *v) for t, v in zip(first.grid, first.values)]
    residual_max = max(r for _, r, *_ in results)
    passed = residual_max < cfg.epsilon and all(inc for *_, inc, _ in results)
    passed = bool(passed)
    return ({"solve_summary.csv": _csv_text(["seed", "residual_max", "n_updates", "increasing"], rows),
             "solve_path.csv": _csv_text(["time"] + [f"coord_{k}" for k in range(problem.d_H)],
                                         path_rows)},
            {"residual_max": residual_max, "epsilon": cfg.epsilon}, passed)


def cmd_converge(cfg, problem):
    grid = uniform_grid(cfg.T, cfg.n_steps)
    study = solver.convergence_study(problem, cfg.epsilon_list, cfg.n_paths, grid, cfg.seed_base)
    keys = ["epsilon", "ducp", "std_error", "residual_max", "mean_updates"]
    rows = [[r[k] for k in keys] for r in study["rows"]]
    return ({"converge.csv": _csv_text(keys, rows)},
            {"monotone": study["monotone"]}, bool(study["monotone"]))


def _uniq_one(problem, cfg, seed):
    bundle = sample_bundle(problem.noise, uniform_grid(cfg.T, cfg.n_steps), seed)
    res = solver.uniqueness_check(problem, bundle, solver.picard_route(1.0),
                                  solver.picard_route(2.0), tol=1e-6)
    return seed, res.gap, res.ok


def cmd_uniqueness(cfg, problem):
    seeds = range(cfg.seed_base, cfg.seed_base + cfg.n_paths)
    rows = _pmap(partial(_uniq_one, problem, cfg), seeds, cfg.workers)
    gap = max(g for _, g, _ in rows)
    return ({"uniqueness.csv": _csv_text(["seed", "gap", "ok"], [(s, g, int(o)) for s, g, o in rows])},
            {"max_gap": gap}, all(o for *_, o in rows))


PROBE_SEED = 7


def cmd_noise_check(cfg, problem):
    model = problem.noise
    # n_paths independent increments over [0, T]: one bundle on a stretched grid
    grid = uniform_grid(cfg.T * cfg.n_paths, cfg.n_paths)
    inc = sample_bundle(model, grid, cfg.seed_base).increments
    probes = np.random.default_rng(PROBE_SEED).standard_normal((5, model.d_U))
    probes /= np.linalg.norm(probes, axis=1, keepdims=True)
    rows = []
    for p, u in enumerate(probes):
        emp = np.mean(np.exp(1j * inc @ u))
        exact = characteristic_function(model, u, cfg.T)
        rows.append((p, emp.real, emp.imag, exact.real, exact.imag, abs(emp - exact)))
    worst = max(r[-1] for r in rows)
    return ({"noise_check.csv": _csv_text(
        ["probe", "empirical_re", "empirical_im", "exact_re", "exact_im", "abs_error"], rows)},
        {"max_abs_error": worst}, bool(worst < 0.01))


def cmd_calculus_check(cfg, problem):
    """Exact grid identities on random paths: Ito remainder vs quadratic variation."""
    gen = np.random.default_rng(cfg.seed_base)
    grid = uniform_grid(cfg.T, cfg.n_steps)
    rows = []
    for p in range(cfg.n_paths):
        X = paths.GridPath(grid, gen.standard_normal((grid.size, problem.d_H)))
        err = np.max(np.abs(paths.ito_remainder(X).values[:, 0] - paths.quadratic_variation(X).values[:, 0]))
        rows.append((p, float(err)))
    worst = max(e for _, e in rows)
    return ({"calculus_check.csv": _csv_text(["path", "ito_qv_error"], rows)},
            {"max_error": worst}, bool(worst < 1e-10))


def _coupled_samplers(problem, cfg):
    grid = uniform_grid(cfg.T, cfg.n_steps)

    def approx(seed):
        return solver.euler_peano_solve(problem, sample_bundle(problem.noise, grid, seed),
                                        cfg.epsilon).path

    def exact(seed):
        return solver.picard_solve(problem, sample_bundle(problem.noise, grid, seed)).path

    return approx, exact


def cmd_metrics(cfg, problem):
    X, Y = _coupled_samplers(problem, cfg)
    reports = [metrics.estimate_ducp(X, Y, cfg.T, cfg.n_paths, cfg.seed_base)]
    for strategy in metrics.STRATEGIES:
        reports.append(metrics.estimate_dem(X, Y, cfg.T, cfg.n_paths, strategy=strategy,
                                            seed_base=cfg.seed_base))
    reports.append(metrics.estimate_rho_em(X, Y, cfg.T, cfg.n_paths, seed_base=cfg.seed_base))
    data = [r.to_json() for r in reports]
    keys = ["metric", "strategy", "value", "std_error", "n_paths", "seed_base"]
    return ({"metrics.json": _json_text({"schema_version": SCHEMA_VERSION, "estimates": data}),
             "metrics.csv": _csv_text(keys, [[d[k] for k in keys] for d in data])},
            {"ducp": reports[0].value}, True)


def cmd_gronwall(cfg, problem):
    reports = gronwall.run_families(cfg.n_paths, cfg.n_steps, seed=cfg.seed_base)
    data = [r.to_json() for r in reports]
    rows = [(d["family"], d["n_paths"], d["violations"], d["worst_margin"]) for d in data]
    violating = []
    for r in reports:
        if r.violations:
            fam = gronwall.FAMILIES[r.family](cfg.n_paths, cfg.n_steps, seed=cfg.seed_base)
            violating += [(r.family, p, j, float(v)) for p in r.violating_indices
                          for j, v in enumerate(fam[p])]
    total = sum(r.violations for r in reports)
    return ({"gronwall.json": _json_text({"schema_version": SCHEMA_VERSION, "families": data,
                                          "violations": total}),
             "gronwall.csv": _csv_text(["family", "n_paths", "violations", "worst_margin"], rows),
             "gronwall_violations.csv": _csv_text(["family", "path_index", "step", "value"],
                                                  violating)},
            {"violations": total}, total == 0)


COMMANDS = {
    "noise-check": cmd_noise_check,
    "calculus-check": cmd_calculus_check,
    "metrics": cmd_metrics,
    "solve": cmd_solve,
    "converge": cmd_converge,
    "uniqueness": cmd_uniqueness,
    "gronwall": cmd_gronwall,
}


def _manifest(subcommand, cfg, artifacts, summary, passed):
    config_text = dump_config(cfg)
    return {
        "schema_version": SCHEMA_VERSION,
        "subcommand": subcommand,
        "config": config_text,
        "config_sha1": blob_sha1(config_text.encode()),
        "seeds": {"seed_base": cfg.seed_base, "n_paths": cfg.n_paths},
        "artifacts": {name: blob_sha1(text.encode()) for name, text in sorted(artifacts.items())},
        "summary": summary,
        "passed": passed,
    }


def run(subcommand: str, config_path, seed: int | None = None, out: str | None = None,
        n_paths: int | None = None, stderr=None) -> int:
    """Execute one subcommand; returns the process exit code."""
    stderr = stderr or sys.stderr
    if subcommand not in COMMANDS:
        print(f"error: unknown subcommand {subcommand!r}", file=stderr)
        return EXIT_USAGE
    try:
        cfg: ExperimentConfig = load_config(config_path)
        cfg = cfg.with_overrides(seed_base=seed, output_dir=out, n_paths=n_paths)
    except ConfigError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_CONFIG
    try:
        problem = build_problem(cfg)
    except UnknownScenario as exc:
        print(f"error: unknown scenario {exc.args[0]!r}", file=stderr)
        return EXIT_SCENARIO
    except DimensionMismatch as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_DIMENSION
    except DomainError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_CONFIG

    artifacts, summary, passed = COMMANDS[subcommand](cfg, problem)
    manifest = _manifest(subcommand, cfg, artifacts, summary, passed)
    out_dir = Path(cfg.output_dir) / subcommand
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in artifacts.items():
        (out_dir / name).write_text(text)
    (out_dir / "manifest.json").write_text(_json_text(manifest))
    print(f"{subcommand}: {'ok' if passed else 'FAILED'} {json.dumps(summary, sort_keys=True)}")
    return EXIT_OK if passed else EXIT_FAILED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cylab", description="cylindrical Levy SPDE experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list-scenarios", help="print the registered scenarios")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI experiment config")
        p.add_argument("--seed", type=int, help="override seed_base")
        p.add_argument("--out", help="override output_dir")
        p.add_argument("--paths", type=int, help="override n_paths")
    args = parser.parse_args(argv)
    if args.command == "list-scenarios":
        for name, desc in list_scenarios():
            print(f"{name}\t{desc}")
        return EXIT_OK
    return run(args.command, args.config, seed=args.seed, out=args.out, n_paths=args.paths)


if __name__ == "__main__":
    sys.exit(main())
