"""Command line entry point.

::

    skewprod run --suite example3 --paths 512 --seed 42 --out results/
    skewprod run --config run.cfg --seed 9
    skewprod calibrate --seeds 200 --out calib/

Exit status of ``run``: 0 when every verdict matches its expected polarity,
1 when one deviates, 2 on a configuration error, 3 on a simulation or I/O
error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, InvalidNumeric, SkewProductError, UnknownScenario
from .scenarios import SCENARIO_NAMES
from .suites import SUITE_SCENARIO, SUITES, RunParams, run

log = logging.getLogger("skewprod")

SCHEMA_VERSION = "skewprod.report/1"
FORMATS = ("csv", "json")
MAX_DUMP_BYTES = 64 * 2**20
EXIT_OK, EXIT_DEVIATION, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

DEFAULTS = {"dt": 1e-3, "horizon": 1.0, "paths": 512, "seed": 42, "alpha": 0.01,
            "out": "skewprod-out", "format": "json", "dump-paths": False, "workers": 1}


@dataclass(frozen=True)
class RunSpec:
    scenario: str
    suite: str
    dt: float = 1e-3
    horizon: float = 1.0
    n_paths: int = 512
    seed: int = 42
    alpha: float = 0.01
    out: str = "skewprod-out"
    formats: tuple = ("json",)
    dump_paths: bool = False
    workers: int = 1

    @property
    def params(self) -> RunParams:
        return RunParams(dt=self.dt, horizon=self.horizon, n_paths=self.n_paths, seed=self.seed,
                         alpha=self.alpha, workers=self.workers)

    def identity(self) -> dict:
        """Fields that determine the results (not where or how fast they are produced)."""
        return {"suite": self.suite, "scenario": self.scenario, "dt": self.dt,
                "horizon": self.horizon, "n_paths": self.n_paths, "seed": self.seed,
                "alpha": self.alpha}


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("_", "-")
        if key == "n-paths":
            key = "paths"
        if key not in DEFAULTS and key not in ("suite", "scenario"):
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _number(key, value, kind):
    try:
        if kind is int:
            if isinstance(value, str):
                f = float(value)
                if not f.is_integer():
                    raise ValueError
                return int(f)
            return int(value)
        x = float(value)
    except (TypeError, ValueError):
        raise InvalidNumeric(key, value) from None
    if not math.isfinite(x):
        raise InvalidNumeric(key, value, "not finite")
    return x


def _bool(key, value):
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off", ""):
        return False
    raise InvalidNumeric(key, value, "expected a boolean")


def resolve(values: dict) -> RunSpec:
    """Validate merged settings (defaults < file < flags) into a RunSpec."""
    v = {**DEFAULTS, **{k: x for k, x in values.items() if x is not None}}
    dt = _number("dt", v["dt"], float)
    horizon = _number("horizon", v["horizon"], float)
    n_paths = _number("paths", v["paths"], int)
    seed = _number("seed", v["seed"], int)
    alpha = _number("alpha", v["alpha"], float)
    workers = _number("workers", v["workers"], int)
    if not dt > 0:
        raise InvalidNumeric("dt", dt, "must be positive")
    if not horizon >= dt:
        raise InvalidNumeric("horizon", horizon, "must be at least dt")
    n = round(horizon / dt)
    if abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise InvalidNumeric("horizon", horizon, "must be a multiple of dt")
    if n_paths < 1:
        raise InvalidNumeric("paths", n_paths, "must be at least 1")
    if not 0 < alpha < 1:
        raise InvalidNumeric("alpha", alpha, "must lie in (0, 1)")
    if workers < 1:
        raise InvalidNumeric("workers", workers, "must be at least 1")

    suite, scenario = v.get("suite"), v.get("scenario")
    if suite is not None and suite not in SUITES + ("all",):
        raise UnknownScenario(f"unknown suite {suite!r}; expected one of {SUITES + ('all',)}")
    if scenario is not None and scenario not in SCENARIO_NAMES + ("all",):
        raise UnknownScenario(f"unknown scenario {scenario!r}; expected one of {SCENARIO_NAMES}")
    by_scenario = {s: k for k, s in SUITE_SCENARIO.items()}
    if suite is None:
        suite = "all" if scenario in (None, "all") else by_scenario[scenario]
    expected_scenario = "all" if suite == "all" else SUITE_SCENARIO[suite]
    if scenario is not None and scenario != expected_scenario:
        raise ConfigError(f"suite {suite!r} runs scenario {expected_scenario!r}, not {scenario!r}")

    fmt = v["format"]
    formats = tuple(f.strip() for f in (fmt.split(",") if isinstance(fmt, str) else fmt) if f.strip())
    bad = [f for f in formats if f not in FORMATS]
    if bad or not formats:
        raise ConfigError(f"unknown format(s) {bad or fmt!r}; expected a subset of {FORMATS}")
    return RunSpec(scenario=expected_scenario, suite=suite, dt=dt, horizon=horizon,
                   n_paths=n_paths, seed=seed, alpha=alpha, out=str(v["out"]),
                   formats=tuple(sorted(set(formats))),
                   dump_paths=_bool("dump-paths", v["dump-paths"]), workers=workers)


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--suite", help=f"one of {', '.join(SUITES)}, all")
    p.add_argument("--scenario", help=f"one of {', '.join(SCENARIO_NAMES)}")
    p.add_argument("--dt", help="time step (default 1e-3)")
    p.add_argument("--horizon", help="final time (default 1)")
    p.add_argument("--paths", help="number of paths (default 512)")
    p.add_argument("--seed", help="root seed (default 42)")
    p.add_argument("--alpha", help="significance level (default 0.01)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", help="comma-separated subset of csv,json (default json)")
    p.add_argument("--dump-paths", action="store_true", default=None,
                   help="write one CSV trace per path")
    p.add_argument("--workers", help="worker processes for path simulation (default 1)")


def parse_config(argv=None) -> RunSpec:
    """Parse ``run`` arguments (with or without the leading ``run``) into a RunSpec."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "run":
        argv = argv[1:]
    p = argparse.ArgumentParser(prog="skewprod run")
    _add_run_flags(p)
    ns = p.parse_args(argv)
    values = read_config_file(ns.config) if ns.config else {}
    flags = {k.replace("_", "-"): x for k, x in vars(ns).items() if k != "config"}
    values.update({k: x for k, x in flags.items() if x is not None})
    return resolve(values)


# -- output -------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def report_rows(results) -> list[dict]:
    rows = []
    for res in results:
        for e in res.entries:
            r = e.report
            rows.append({"name": r.name, "statistic": r.statistic, "null_scale": r.null_scale,
                         "z_score": r.z_score, "p_value": r.p_value, "verdict": r.verdict,
                         "expected": e.expected, "tolerance": r.tolerance, "alpha": r.alpha,
                         "kind": r.kind, "null_value": r.null_value,
                         "as_expected": e.as_expected, "detail": r.detail})
    return rows


def report_json(spec: RunSpec, results) -> str:
    doc = {"schema": SCHEMA_VERSION, "version": __version__, "run": spec.identity(),
           "ok": all(r.ok for r in results), "reports": report_rows(results)}
    return json.dumps(_jsonable(doc), indent=2) + "\n"


def summary_table(spec: RunSpec, results) -> str:
    lines = [f"skewprod {__version__}  suite={spec.suite}  dt={spec.dt:g}  horizon={spec.horizon:g}"
             f"  paths={spec.n_paths}  seed={spec.seed}  alpha={spec.alpha:g}", ""]
    fmt = "{:<58} {:>7} {:>8} {:>12} {:>10} {:>10}  {}"
    lines.append(fmt.format("test", "verdict", "expected", "statistic", "z", "p", "status"))
    for row in report_rows(results):
        status = "" if row["expected"] is None else ("ok" if row["as_expected"] else "DEVIATES")
        lines.append(fmt.format(row["name"], row["verdict"], row["expected"] or "-",
                                f"{row['statistic']:.5g}", f"{row['z_score']:.4g}",
                                f"{row['p_value']:.3g}", status))
    ok = all(r.ok for r in results)
    lines += ["", "all verdicts as expected" if ok else "SOME VERDICTS DEVIATE FROM EXPECTATION"]
    return "\n".join(lines) + "\n"


def write_report_csv(path: Path, results):
    cols = ["name", "verdict", "expected", "statistic", "null_scale", "z_score", "p_value",
            "tolerance", "alpha", "kind"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in report_rows(results):
            w.writerow(["" if row[c] is None else row[c] for c in cols])


def state_columns(values: np.ndarray) -> list[str]:
    """Row-major names of the flattened state entries."""
    shape = values.shape[1:]
    if shape == ():
        return ["x"]
    if shape == (2,):
        return ["x1", "x2"]
    if shape == (2, 2):
        return ["x11", "x12", "x21", "x22"]
    return [f"x{i}" for i in range(int(np.prod(shape)))]


def dump_paths(out: Path, results, limit_bytes=MAX_DUMP_BYTES) -> int:
    written = budget = 0
    for res in results:
        for name, ens in res.ensembles.items():
            d = out / "paths" / name
            d.mkdir(parents=True, exist_ok=True)
            for i, p in zip(ens.path_indices, ens.paths):
                flat = p.values.reshape(len(p.values), -1)
                size = flat.size * 25 + len(flat) * 25
                if budget + size > limit_bytes:
                    log.warning("path dump stopped at %d files (size guard %d bytes)", written,
                                limit_bytes)
                    return written
                table = np.column_stack([p.times, flat])
                header = ",".join(["time"] + state_columns(p.values))
                np.savetxt(d / f"path_{i:05d}.csv", table, delimiter=",", header=header,
                           comments="", fmt="%.17g")
                budget += size
                written += 1
    return written


def run_suite(spec: RunSpec) -> int:
    """Run the suites in ``spec`` and write artifacts; returns the exit status."""
    try:
        results = run(spec.suite, spec.params)
    except SkewProductError as exc:
        log.error("simulation failed: %s", exc)
        return EXIT_RUNTIME
    try:
        out = Path(spec.out)
        out.mkdir(parents=True, exist_ok=True)
        if "json" in spec.formats:
            (out / "report.json").write_text(report_json(spec, results))
        if "csv" in spec.formats:
            write_report_csv(out / "report.csv", results)
        summary = summary_table(spec, results)
        (out / "summary.txt").write_text(summary)
        if spec.dump_paths:
            dump_paths(out, results)
    except OSError as exc:
        log.error("could not write results: %s", exc)
        return EXIT_RUNTIME
    sys.stdout.write(summary)
    return EXIT_OK if all(r.ok for r in results) else EXIT_DEVIATION


# -- calibration -----------------------------------------------------------------

def _calibration_seed(args):
    seed, params = args
    results = run("all", replace(params, seed=seed))
    return [(e.report.name, e.report.p_value) for r in results for e in r.entries
            if e.null_true and e.report.kind == "test" and math.isfinite(e.report.p_value)]


def calibrate(n_seeds=200, first_seed=10_000, params=None, workers=1, level=0.01, band=0.015):
    """Empirical rejection rate of every null-true test over fresh seeds."""
    params = params or RunParams()
    jobs = [(first_seed + i, params) for i in range(n_seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            per_seed = list(ex.map(_calibration_seed, jobs))
    else:
        per_seed = [_calibration_seed(j) for j in jobs]
    counts: dict[str, list] = {}
    for rows in per_seed:
        for name, p in rows:
            counts.setdefault(name, []).append(p)
    tests = []
    for name, ps in counts.items():
        k, n = int(np.sum(np.array(ps) < level)), len(ps)
        # compare counts, not rates: 5/200 - 0.01 is 0.015000000000000001 in floats
        within = abs(k - level * n) <= band * n + 1e-9
        tests.append({"name": name, "n": n, "rejections": k, "rejection_rate": k / n,
                      "within_band": bool(within)})
    return {"schema": "skewprod.calibration/1", "seeds": [first_seed, first_seed + n_seeds - 1],
            "n_paths": params.n_paths, "dt": params.dt, "horizon": params.horizon,
            "level": level, "band": band, "ok": all(t["within_band"] for t in tests),
            "tests": tests}


def _calibrate_main(argv) -> int:
    p = argparse.ArgumentParser(prog="skewprod calibrate")
    p.add_argument("--seeds", type=int, default=200)
    p.add_argument("--first-seed", type=int, default=10_000)
    p.add_argument("--paths", type=int, default=512)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="skewprod-calibration")
    ns = p.parse_args(argv)
    params = RunParams(dt=ns.dt, horizon=ns.horizon, n_paths=ns.paths)
    try:
        doc = calibrate(ns.seeds, ns.first_seed, params, ns.workers)
    except SkewProductError as exc:
        log.error("calibration failed: %s", exc)
        return EXIT_RUNTIME
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "calibration.json").write_text(json.dumps(_jsonable(doc), indent=2) + "\n")
    for t in doc["tests"]:
        flag = "ok" if t["within_band"] else "OUT OF BAND"
        print(f"{t['name']:<70} {t['rejection_rate']:6.3f}  {flag}")
    return EXIT_OK if doc["ok"] else EXIT_DEVIATION


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in ("-V", "--version"):
        print(__version__)
        return EXIT_OK
    if argv and argv[0] == "calibrate":
        return _calibrate_main(argv[1:])
    if not argv or argv[0] in ("-h", "--help"):
        print(__doc__)
        return EXIT_OK
    try:
        spec = parse_config(argv)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_CONFIG
    return run_suite(spec)


if __name__ == "__main__":
    sys.exit(main())
