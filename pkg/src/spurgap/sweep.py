"""Configuration-driven experiment grids: evaluate the accuracy gap per
(mu1, mu2) cell for each (zeta, eps, threat, pipeline) combination and write
one CSV per combination plus a manifest.

Cell seeds derive from the base seed and the cell coordinates through a
stable hash, so sweeps are reproducible cell-by-cell regardless of worker
count or execution order.
"""

import concurrent.futures
import csv
import hashlib
import io
import itertools
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import adversarial_train, evaluate, fit_logistic, two_stage_proxy
from .perturbation import ThreatModel, scale_budget
from .population import sample, two_attribute_population
from .theory import SolverOptions, balanced_test_accuracy, theoretical_gap

__all__ = [
    "Pipeline",
    "ExperimentPoint",
    "PointResult",
    "GapGrid",
    "ConfigError",
    "CSV_COLUMNS",
    "stable_seed",
    "default_config",
    "load_config",
    "run_point",
    "run_sweep",
]

CSV_COLUMNS = ("mu1", "mu2", "zeta", "eps", "threat", "pipeline", "gap",
               "clean_acc", "perturbed_acc", "tau", "c", "residual", "status")

SEED_RULE = ("cell seed = (base_seed XOR blake2b-64(repr((mu1, mu2, zeta, "
             "eps_inf, threat, pipeline, role)))) masked to 63 bits; roles "
             "are 'train' and 'test' for empirical pipelines")


class ConfigError(ValueError):
    """A sweep configuration that cannot be run."""


class Pipeline(Enum):
    THEORY = "theory"
    PROXY = "proxy"
    ADVTRAIN = "advtrain"

    @classmethod
    def coerce(cls, value) -> "Pipeline":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError as err:
            raise ConfigError(
                f"unknown pipeline: {value!r} (expected theory, proxy, advtrain)"
            ) from err


@dataclass(frozen=True)
class ExperimentPoint:
    """One sweep cell: population geometry, threat, pipeline, and sizes."""

    mu1: float
    mu2: float
    zeta: float
    eps_inf: float
    threat: ThreatModel
    pipeline: Pipeline
    n_train: int = 100_000
    n_test: int = 100_000
    seed: int = 0
    sigma1: float = 1.0
    sigma2: float = 1.0

    def __post_init__(self):
        if self.mu1 <= 0 or self.mu2 <= 0:
            raise ConfigError("mu1 and mu2 must be positive")
        if not 0.5 <= self.zeta <= 1.0:
            raise ConfigError("zeta must lie in [0.5, 1]")
        if self.eps_inf < 0:
            raise ConfigError("eps_inf must be nonnegative")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ConfigError("variances must be positive")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("sample sizes must be positive")
        object.__setattr__(self, "threat", ThreatModel.coerce(self.threat))
        object.__setattr__(self, "pipeline", Pipeline.coerce(self.pipeline))

    def population(self):
        return two_attribute_population(
            self.mu1, self.mu2, self.zeta, self.sigma1, self.sigma2
        )


@dataclass(frozen=True)
class PointResult:
    """One CSV row; empirical pipelines leave the solver fields empty.

    ``diagnostics`` carries the full fixed-point records (value, residual,
    iterations, candidate roots) for theory cells; it is summarized into the
    manifest rather than the CSV, whose schema is fixed.
    """

    point: ExperimentPoint
    gap: float | None
    clean_acc: float | None
    perturbed_acc: float | None
    tau: float | None
    c: float | None
    residual: float | None
    status: str
    diagnostics: dict | None = None

    def csv_row(self) -> list[str]:
        p = self.point
        cells = [p.mu1, p.mu2, p.zeta, p.eps_inf, p.threat.value,
                 p.pipeline.value, self.gap, self.clean_acc,
                 self.perturbed_acc, self.tau, self.c, self.residual]
        return [_fmt(v) for v in cells] + [self.status]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))  # shortest round-trip, numpy scalars included
    return str(value)


def stable_seed(base: int, *parts) -> int:
    """63-bit seed: base XOR a stable 64-bit hash of the remaining parts."""
    digest = hashlib.blake2b(repr(tuple(parts)).encode(), digest_size=8).digest()
    return (int(base) ^ int.from_bytes(digest, "little")) & (2**63 - 1)


def run_point(point: ExperimentPoint,
              opts: SolverOptions | None = None) -> PointResult:
    """Evaluate one cell; failures mark the cell instead of raising."""
    try:
        if point.pipeline is Pipeline.THEORY:
            return _run_theory(point, opts)
        return _run_empirical(point)
    except Exception as err:  # noqa: BLE001 - cell-level isolation
        return PointResult(point, None, None, None, None, None, None,
                           f"error: {err}")


def _run_theory(point, opts):
    report = theoretical_gap(point.population(), point.eps_inf, point.threat, opts)
    return PointResult(
        point=point,
        gap=report.gap,
        clean_acc=report.clean_balanced,
        perturbed_acc=report.perturbed_balanced,
        tau=report.tau.value,
        c=report.c.value,
        residual=max(report.tau.residual, report.c.residual),
        status="ok",
        diagnostics={"tau": report.tau.to_dict(), "c": report.c.to_dict()},
    )


def _run_empirical(point):
    spec = point.population()
    coords = (point.mu1, point.mu2, point.zeta, point.eps_inf,
              point.threat.value, point.pipeline.value)
    train = sample(spec, point.n_train, stable_seed(point.seed, *coords, "train"))
    test = sample(spec.balanced_variant(), point.n_test,
                  stable_seed(point.seed, *coords, "test"))
    eps = scale_budget(point.eps_inf, spec.dim, point.threat)
    if point.pipeline is Pipeline.PROXY:
        clean_model, shifted_model = two_stage_proxy(train, eps, point.threat)
    else:
        clean_model = fit_logistic(train)
        shifted_model = adversarial_train(train, eps, point.threat)
    _, clean_groups = evaluate(clean_model, test)
    _, shifted_groups = evaluate(shifted_model, test)
    clean_bal = balanced_test_accuracy(clean_groups)
    shifted_bal = balanced_test_accuracy(shifted_groups)
    return PointResult(
        point=point,
        gap=shifted_bal - clean_bal,
        clean_acc=clean_bal,
        perturbed_acc=shifted_bal,
        tau=None,
        c=None,
        residual=None,
        status="ok",
    )


@dataclass
class GapGrid:
    """Gap values arranged on the (mu1, mu2) axes; values[i, j] belongs to
    (mu1_axis[j], mu2_axis[i]). Failed cells hold NaN."""

    mu1_axis: np.ndarray
    mu2_axis: np.ndarray
    values: np.ndarray
    metadata: dict

    @classmethod
    def from_results(cls, results, metadata) -> "GapGrid":
        mu1_axis = np.array(sorted({r.point.mu1 for r in results}))
        mu2_axis = np.array(sorted({r.point.mu2 for r in results}))
        values = np.full((mu2_axis.size, mu1_axis.size), np.nan)
        for r in results:
            i = int(np.searchsorted(mu2_axis, r.point.mu2))
            j = int(np.searchsorted(mu1_axis, r.point.mu1))
            if r.gap is not None:
                values[i, j] = r.gap
        return cls(mu1_axis, mu2_axis, values, dict(metadata))

    @classmethod
    def from_csv(cls, path) -> "GapGrid":
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
                raise ConfigError(f"{path}: unexpected CSV schema")
            rows = list(reader)
        if not rows:
            raise ConfigError(f"{path}: empty grid file")
        mu1_axis = np.array(sorted({float(r["mu1"]) for r in rows}))
        mu2_axis = np.array(sorted({float(r["mu2"]) for r in rows}))
        values = np.full((mu2_axis.size, mu1_axis.size), np.nan)
        for r in rows:
            i = int(np.searchsorted(mu2_axis, float(r["mu2"])))
            j = int(np.searchsorted(mu1_axis, float(r["mu1"])))
            if r["status"] == "ok" and r["gap"]:
                values[i, j] = float(r["gap"])
        head = rows[0]
        metadata = {key: head[key] for key in ("zeta", "eps", "threat", "pipeline")}
        return cls(mu1_axis, mu2_axis, values, metadata)


def default_config() -> dict:
    """The standard theory sweep: 11x11 mu grid, four correlation levels,
    both threats, eps_inf = 0.01."""
    axis = [0.5 + 0.25 * k for k in range(11)]
    return {
        "mu1": axis,
        "mu2": axis,
        "zeta": [0.6, 0.9, 0.95, 0.99],
        "eps_inf": [0.01],
        "threat": ["l2", "linf"],
        "pipeline": ["theory"],
        "n_train": 100_000,
        "n_test": 100_000,
        "seed": 0,
        "sigma1": 1.0,
        "sigma2": 1.0,
    }


_AXIS_KEYS = ("mu1", "mu2", "zeta", "eps_inf", "threat", "pipeline")
_SCALAR_KEYS = ("n_train", "n_test", "seed", "sigma1", "sigma2")


def load_config(source) -> dict:
    """Normalize a config mapping or JSON file path; raises ConfigError."""
    if isinstance(source, (str, Path)):
        try:
            with open(source, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}") from err
        except json.JSONDecodeError as err:
            raise ConfigError(f"config is not valid JSON: {err}") from err
    else:
        doc = dict(source)
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - set(_AXIS_KEYS) - set(_SCALAR_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    config = default_config()
    config.update(doc)
    for key in _AXIS_KEYS:
        value = config[key]
        if not isinstance(value, (list, tuple)):
            value = [value]
        if len(value) == 0:
            raise ConfigError(f"config axis {key!r} must be nonempty")
        config[key] = list(value)
    config["threat"] = [ThreatModel.coerce(t).value for t in config["threat"]]
    config["pipeline"] = [Pipeline.coerce(p).value for p in config["pipeline"]]
    # fail fast on invalid cell values before launching workers
    _build_points(config)
    return config


def _build_points(config) -> list[ExperimentPoint]:
    try:
        return [
            ExperimentPoint(
                mu1=float(mu1), mu2=float(mu2), zeta=float(zeta),
                eps_inf=float(eps_inf), threat=threat, pipeline=pipeline,
                n_train=int(config["n_train"]), n_test=int(config["n_test"]),
                seed=int(config["seed"]),
                sigma1=float(config["sigma1"]), sigma2=float(config["sigma2"]),
            )
            for pipeline, threat, zeta, eps_inf in _combos(config)
            for mu1 in config["mu1"]
            for mu2 in config["mu2"]
        ]
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err


def _combos(config):
    return itertools.product(
        config["pipeline"], config["threat"], config["zeta"], config["eps_inf"]
    )


def _grid_filename(pipeline, threat, zeta, eps_inf) -> str:
    return f"gap_{pipeline}_{threat}_zeta{zeta!r}_eps{eps_inf!r}.csv"


def _results_csv(results) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for result in results:
        writer.writerow(result.csv_row())
    return buf.getvalue().encode("utf-8")


def run_sweep(config, out_dir, jobs: int = 1,
              opts: SolverOptions | None = None) -> dict:
    """Run every combination and write CSVs plus ``manifest.json``.

    Returns the manifest dictionary. Output bytes depend only on the config,
    never on ``jobs`` or completion order.
    """
    config = load_config(config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for pipeline, threat, zeta, eps_inf in _combos(config):
        cells = [
            ExperimentPoint(
                mu1=float(mu1), mu2=float(mu2), zeta=float(zeta),
                eps_inf=float(eps_inf), threat=threat, pipeline=pipeline,
                n_train=int(config["n_train"]), n_test=int(config["n_test"]),
                seed=int(config["seed"]),
                sigma1=float(config["sigma1"]), sigma2=float(config["sigma2"]),
            )
            for mu1 in config["mu1"]
            for mu2 in config["mu2"]
        ]
        results = _map_cells(cells, jobs, opts)
        payload = _results_csv(results)
        name = _grid_filename(pipeline, threat, zeta, eps_inf)
        (out_dir / name).write_bytes(payload)
        n_failed = sum(r.status != "ok" for r in results)
        entry = {
            "name": name,
            "pipeline": pipeline,
            "threat": threat,
            "zeta": zeta,
            "eps_inf": eps_inf,
            "rows": len(results),
            "failed_cells": n_failed,
            "sha256": hashlib.sha256(payload).hexdigest(),
        }
        summary = _solver_summary(results)
        if summary is not None:
            entry["solver"] = summary
        files.append(entry)
    manifest = {
        "version": __version__,
        "config": config,
        "config_sha256": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()
        ).hexdigest(),
        "seed_rule": SEED_RULE,
        "l2_budget_rule": "applied l2 budget is sqrt(d) * eps_inf",
        "files": files,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def _solver_summary(results) -> dict | None:
    """Fixed-point diagnostics rolled up per grid file."""
    records = [r.diagnostics for r in results if r.diagnostics]
    if not records:
        return None
    residuals = [rec[k]["residual"] for rec in records for k in ("tau", "c")]
    iterations = [rec[k]["iterations"] for rec in records for k in ("tau", "c")]
    multi_root = sum(len(rec["c"]["candidates"]) > 1 for rec in records)
    return {
        "max_residual": max(residuals),
        "max_iterations": max(iterations),
        "cells_with_multiple_roots": multi_root,
    }


def _run_point_task(args):
    point, opts = args
    return run_point(point, opts)


def _map_cells(cells, jobs, opts):
    if jobs <= 1:
        return [run_point(p, opts) for p in cells]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_point_task, [(p, opts) for p in cells],
                             chunksize=8))
