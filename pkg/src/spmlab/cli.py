"""Command-line front end: ``spmlab verify|run|study CONFIG``.

Exit codes: 0 success, 1 a check or step failed, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .conditions import check_all
from .config import Config, ConfigError, load_config
from .experiments import StudySpec, map_paths, run_study
from .noise import verify_h2
from .nonlinearity import check_h1
from .operators import check_sub_markov, gamma_transform, gamma_transform_quadrature
from .solver import StepFailure, Trajectory, simulate
from .spaces import l2_isometry_check, riesz_isometry_check

logger = logging.getLogger("spmlab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
MANIFEST = "manifest.json"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, data):
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(outdir: Path, cfg: Config, command: str, seed: int, artifacts: list[Path],
                   timings: dict, extra: dict | None = None) -> Path:
    data = {
        "tool": "spmlab",
        "version": __version__,
        "command": command,
        "config": cfg.source,
        "config_sha256": cfg.sha256,
        "seed": seed,
        "artifacts": {p.name: _sha256(p) for p in sorted(artifacts)},
        "timings_s": timings,
    }
    if extra:
        data.update(extra)
    path = outdir / MANIFEST
    _write_json(path, data)
    return path


def _output_dir(cfg: Config, override: str | None) -> Path:
    out = Path(override if override is not None else cfg.run.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------- verify


def verify_reports(cfg: Config, seed: int, samples: int | None = None) -> tuple[dict, bool]:
    """Run every check bundled by ``verify``; returns ``(reports, all_passed)``."""
    samples = cfg.verify_samples if samples is None else samples
    gen, psi, B, cas = cfg.gen, cfg.psi, cfg.noise, cfg.cascade
    rng = np.random.default_rng(seed)
    fields = [gen.synthesize(rng.standard_normal(gen.size)) for _ in range(samples)]

    riesz = [riesz_isometry_check(gen, u) for u in fields]
    l2 = [l2_isometry_check(gen, u) for u in fields]
    gamma_err = 0.0
    for r in (1.0, 2.0):
        for u in fields[: min(len(fields), 20)]:
            diff = gamma_transform_quadrature(gen, r, u) - gamma_transform(gen, r, u)
            gamma_err = max(gamma_err, float(np.max(np.abs(diff))) / max(1.0, float(np.max(np.abs(u)))))
    sub = check_sub_markov(gen)
    h1 = check_h1(psi, seed=seed)
    h2 = verify_h2(gen, B, samples, seed=seed, T=cas.T if cas.T > 0 else 1.0)
    conds = check_all(gen, psi, B, cas.nu, samples, seed, T=cas.T if cas.T > 0 else 1.0)

    reports = {
        "riesz_isometry": {"pass": all(r.passed for r in riesz), "samples": len(riesz),
                           "max_gap": max((r.gap for r in riesz), default=0.0),
                           "max_roundtrip_error": max((r.roundtrip_error for r in riesz), default=0.0)},
        "l2_isometry": {"pass": all(r.passed for r in l2), "samples": len(l2),
                        "max_gap": max((r.gap for r in l2), default=0.0)},
        "gamma_transform": {"pass": gamma_err <= 1e-6, "max_error": gamma_err},
        "sub_markov": sub.to_dict(),
        "h1": h1.to_dict(),
        "h2": h2.to_dict(),
        "conditions": [c.to_dict() for c in conds],
    }
    ok = (reports["riesz_isometry"]["pass"] and reports["l2_isometry"]["pass"] and reports["gamma_transform"]["pass"]
          and sub.passed and h1.passed and h2.passed
          and all(c.passed is not False for c in conds if c.applicable))
    return reports, bool(ok)


def cmd_verify(config, seed=None, output=None, samples=None) -> int:
    t0 = time.perf_counter()
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = cfg.seed if seed is None else seed
    out = _output_dir(cfg, output)
    reports, ok = verify_reports(cfg, seed, samples)
    path = out / "verify.json"
    _write_json(path, {"pass": ok, **reports})
    elapsed = time.perf_counter() - t0
    write_manifest(out, cfg, "verify", seed, [path], {"verify": elapsed, "total": elapsed}, {"status": "ok" if ok else "fail"})
    for name in ("riesz_isometry", "l2_isometry", "gamma_transform", "sub_markov", "h1", "h2"):
        print(f"{name:18s} {'PASS' if reports[name]['pass'] else 'FAIL'}")
    for c in reports["conditions"]:
        verdict = "n/a" if not c["applicable"] else ("PASS" if c["pass"] else "FAIL")
        print(f"{c['condition']:18s} {verdict}")
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------- run


def _precheck(cfg: Config, seed: int) -> list[str]:
    problems = []
    if not check_h1(cfg.psi, seed=seed).passed:
        problems.append(f"Psi {cfg.psi.name} is not nondecreasing, Lipschitz and zero at 0")
    if not check_sub_markov(cfg.gen).passed:
        problems.append("generator semigroup is not sub-Markovian")
    if not verify_h2(cfg.gen, cfg.noise, 100, seed=seed, T=cfg.cascade.T if cfg.cascade.T > 0 else 1.0).passed:
        problems.append("noise operator exceeds its claimed Lipschitz or growth constant")
    return problems


def cmd_run(config, seed=None, paths=None, threads=None, output=None, force=False) -> int:
    t0 = time.perf_counter()
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = cfg.seed if seed is None else seed
    paths = cfg.run.paths if paths is None else paths
    threads = cfg.run.threads if threads is None else threads
    if paths < 1 or threads < 1:
        print("error: --paths and --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    out = _output_dir(cfg, output)
    timings = {}
    problems = _precheck(cfg, seed)
    timings["verify"] = time.perf_counter() - t0
    if problems and not force:
        for p in problems:
            print(f"error: {p} (use --force to run anyway)", file=sys.stderr)
        return EXIT_FAIL

    def one(path):
        try:
            return simulate(cfg.gen, cfg.psi, cfg.noise, cfg.cascade, path=path, seed=seed)
        except StepFailure as exc:
            return exc

    t1 = time.perf_counter()
    results = map_paths(one, paths, threads)
    timings["simulate"] = time.perf_counter() - t1
    t2 = time.perf_counter()
    artifacts = []
    failures = []
    for p, res in enumerate(results):
        traj = res if isinstance(res, Trajectory) else res.partial
        if not isinstance(res, Trajectory):
            failures.append({"path": p, "step": res.step, "residual": res.residual, "message": str(res)})
        if traj is None:
            continue
        artifacts.append(_write_trace(out / f"trace_path{p:04d}.csv", traj))
        if cfg.run.states:
            path = out / f"states_path{p:04d}.csv"
            with open(path, "w", newline="") as fh:
                traj.states_to_csv(fh)
            artifacts.append(path)
    timings["write"] = time.perf_counter() - t2
    timings["total"] = time.perf_counter() - t0
    extra = {"paths": paths, "threads": threads, "status": "step_failure" if failures else "ok"}
    if failures:
        extra["failures"] = failures
    if problems:
        extra["forced_past"] = problems
    write_manifest(out, cfg, "run", seed, artifacts, timings, extra)
    for f in failures:
        print(f"error: path {f['path']} failed at step {f['step']}: {f['message']}", file=sys.stderr)
    print(f"wrote {len(artifacts)} file(s) to {out}")
    return EXIT_FAIL if failures else EXIT_OK


def _write_trace(path: Path, traj: Trajectory) -> Path:
    with open(path, "w", newline="") as fh:
        traj.to_csv(fh)
    return path


# --------------------------------------------------------------------------- study


def cmd_study(config, axis=None, seed=None, paths=None, threads=None, output=None) -> int:
    t0 = time.perf_counter()
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    axis = axis or cfg.study.axis
    if axis not in ("lambda", "nu", "dt"):
        print(f"error: study axis must be lambda, nu or dt, got {axis!r}", file=sys.stderr)
        return EXIT_CONFIG
    if axis not in cfg.study.values:
        print(f"error: config has no study.{axis} value list", file=sys.stderr)
        return EXIT_CONFIG
    seed = cfg.seed if seed is None else seed
    try:
        spec = StudySpec(
            gen=cfg.gen, psi=cfg.psi, noise=cfg.noise, base=cfg.cascade, axis=axis,
            values=cfg.study.values[axis], paths=cfg.study.paths if paths is None else paths,
            seed=seed, threads=cfg.run.threads if threads is None else threads,
        )
    except ValueError as exc:
        print(f"error: study.{axis}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _output_dir(cfg, output)
    t1 = time.perf_counter()
    try:
        report = run_study(spec)
    except ValueError as exc:
        print(f"error: study.{axis}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StepFailure as exc:
        print(f"error: path {exc.path} failed at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    elapsed = time.perf_counter() - t1
    report.write(out)
    stem = f"study_{axis}"
    artifacts = [out / f"{stem}.json", out / f"{stem}.csv", out / f"{stem}_long.csv"]
    write_manifest(out, cfg, "study", seed, artifacts,
                   {"study": elapsed, "total": time.perf_counter() - t0},
                   {"axis": axis, "paths": spec.paths, "threads": spec.threads,
                    "status": "ok" if report.passed else "fail"})
    print(f"{axis} study: slope {report.slope:.3f} ± {report.slope_halfwidth:.3f} "
          f"(threshold {report.threshold}) {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_FAIL


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spmlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--output", help="output directory (created if missing)")
        return p

    v = common(sub.add_parser("verify", help="check operators, Psi, noise and the four variational conditions"))
    v.add_argument("--samples", type=int, help="sample count for the randomized checks")
    r = common(sub.add_parser("run", help="simulate paths and write trajectory CSVs"))
    r.add_argument("--paths", type=int)
    r.add_argument("--threads", type=int)
    r.add_argument("--force", action="store_true", help="run even if the pre-checks fail")
    s = common(sub.add_parser("study", help="Cauchy or time-step refinement study"))
    s.add_argument("--axis", choices=("lambda", "nu", "dt"))
    s.add_argument("--paths", type=int)
    s.add_argument("--threads", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify":
        return cmd_verify(args.config, args.seed, args.output, args.samples)
    if args.command == "run":
        return cmd_run(args.config, args.seed, args.paths, args.threads, args.output, args.force)
    return cmd_study(args.config, args.axis, args.seed, args.paths, args.threads, args.output)


if __name__ == "__main__":
    sys.exit(main())
