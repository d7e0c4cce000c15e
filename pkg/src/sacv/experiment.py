"""Leave-one-stratum-out experiment runner, benchmark presets and report emission.

One *job* is a (held-out stratum, validation strategy, learner, ensemble size)
coordinate. A job runs the hyperparameter sweep, keeps the top ``r``
configurations, builds each requested final model and evaluates it at every
threshold setting, uncertainty metric and triage budget. Every combination
becomes one flat record; failures become records too, with ``status="error"``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import (ClusterSpec, PartitionedData, SyntheticSpec, concat,
                      generate_synthetic, load_csv, partition_leave_one_stratum,
                      sample_synthetic, standardize)
from .detection import DEFAULT_Q_LEVELS, FIXED_TAU, calibrate_cfar, classify, evaluate
from .ensemble import as_ensemble, base_member_scores, child_seed
from .errors import ParameterError, SacvError
from .learners import KINDS, predict_scores
from .selection import (FINAL_STRATEGIES, STRATEGIES, HyperparamGrid, finalize, rank_top_r,
                        run_cv)
from .uncertainty import (DEFAULT_THETA_LEVELS, METRICS, apply_oracle_correction, calibrate_triage,
                          flag_uncertain_negatives, fn_precision, mean_metric, var_metric)

DEFAULT_ENSEMBLE_SIZES = (1, 5, 10)

# --------------------------------------------------------------------------
# benchmark presets

PRESET_FAULT_COUNTS = {"chiller": 6, "ahu_spring": 11, "power_ft": 4}


def paired_symptom_spec(n_fault: int, seed: int = 0, *, name: str = "synthetic",
                        normal_n: int = 3000, fault_n: int = 150, primary: float = 5.5,
                        unique: float = 8.0, ood_shift: float = 5.0,
                        noise_dims: int = 2) -> SyntheticSpec:
    """Benchmark with ``n_fault`` strata, the last of which is the hard OOD one.

    Dev stratum i shifts its own feature i by ``unique`` and a primary feature
    shared with its partner (strata 2j and 2j+1) by ``primary``. With both
    partners present a tree prefers the shared feature; once a partner is
    rotated out, the unique feature wins. The OOD stratum only shows the unique
    symptoms of two paired strata, so it sits off the dev hull (all dev centers
    share a total primary shift of ``primary``; the OOD center has none).
    """
    kd = n_fault - 1
    if kd < 2:
        raise ParameterError("a paired-symptom benchmark needs at least 3 fault strata")
    groups = (kd + 1) // 2
    d = kd + groups + noise_dims
    specs = []
    for i in range(kd):
        c = np.zeros(d)
        c[i] = unique
        c[kd + i // 2] = primary
        specs.append(ClusterSpec(tuple(c.tolist()), 1.0, fault_n, f"FT-{i + 1}"))
    c = np.zeros(d)
    c[0] = ood_shift
    c[2 if kd >= 4 else 1] = ood_shift
    ood = f"FT-{n_fault}"
    specs.append(ClusterSpec(tuple(c.tolist()), 1.0, fault_n, ood))
    normal = ClusterSpec(tuple([0.0] * d), 1.0, normal_n)
    return SyntheticSpec(d, tuple(specs), normal, (ood,), seed, 0.3, name)


def make_benchmarks(seed: int = 0) -> dict[str, SyntheticSpec]:
    """The three presets: chiller-like (6 strata), AHU-spring-like (11), power-like (4)."""
    return {name: paired_symptom_spec(k, seed, name=name) for name, k in PRESET_FAULT_COUNTS.items()}


# --------------------------------------------------------------------------
# configuration


def _floats(values, what: str) -> tuple[float, ...]:
    try:
        out = tuple(float(v) for v in values)
    except (TypeError, ValueError):
        raise ParameterError(f"{what} must be a list of numbers") from None
    if not out:
        raise ParameterError(f"{what} must not be empty")
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    held_out: object = "designated"
    strategies: tuple = STRATEGIES
    final_strategies: tuple = FINAL_STRATEGIES
    learners: tuple = ("tree",)
    ensemble_sizes: tuple = DEFAULT_ENSEMBLE_SIZES
    grids: dict = field(default_factory=dict)
    q_levels: tuple = DEFAULT_Q_LEVELS
    fixed_tau: bool = True
    theta_levels: tuple = DEFAULT_THETA_LEVELS
    metrics: tuple = METRICS
    r: int = 5
    ood_penalty: float = 1.0
    id_test_fraction: float = 0.3
    standardize: bool = True
    seed: int = 0
    output_dir: str = "out"
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        for name in ("strategies", "final_strategies", "learners", "ensemble_sizes",
                     "q_levels", "theta_levels", "metrics"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        grids = {}
        for kind in self.learners:
            g = self.grids.get(kind)
            if g is None:
                grids[kind] = HyperparamGrid.default(kind)
            elif isinstance(g, HyperparamGrid):
                grids[kind] = g
            else:
                grids[kind] = HyperparamGrid.from_dict({"kind": kind, **g})
        object.__setattr__(self, "grids", grids)
        self.validate()

    def validate(self) -> None:
        def subset(values, allowed, what):
            if not values:
                raise ParameterError(f"{what} must not be empty")
            bad = [v for v in values if v not in allowed]
            if bad:
                raise ParameterError(f"unknown {what} {bad}; expected a subset of {list(allowed)}")
            if len(set(values)) != len(values):
                raise ParameterError(f"duplicate entries in {what}")

        subset(self.strategies, STRATEGIES, "strategies")
        subset(self.final_strategies, FINAL_STRATEGIES, "final_strategies")
        subset(self.learners, KINDS, "learners")
        subset(self.metrics, METRICS, "metrics")
        if not self.ensemble_sizes or any(int(t) != t or t < 1 for t in self.ensemble_sizes):
            raise ParameterError("ensemble_sizes must be a non-empty list of positive integers")
        _floats(self.q_levels, "q_levels")
        _floats(self.theta_levels, "theta_levels")
        if any(not 0.0 < q < 1.0 for q in self.q_levels):
            raise ParameterError("every q level must lie in (0, 1)")
        if any(not 0.0 <= t < 1.0 for t in self.theta_levels):
            raise ParameterError("every theta level must lie in (0, 1), or be 0 for the baseline")
        for kind, g in self.grids.items():
            if not 1 <= self.r <= len(g):
                raise ParameterError(f"r={self.r} outside [1, {len(g)}] for the {kind} grid")
        if not 0.0 < self.id_test_fraction < 1.0:
            raise ParameterError("id_test_fraction must lie in (0, 1)")
        if not isinstance(self.held_out, str) and not list(self.held_out):
            raise ParameterError("held_out must be 'designated', 'all' or a non-empty list")
        if isinstance(self.held_out, str) and self.held_out not in ("designated", "all"):
            raise ParameterError(f"held_out must be 'designated', 'all' or a list, got {self.held_out!r}")
        if len(self.dataset) != 1 or next(iter(self.dataset)) not in ("preset", "synthetic", "csv"):
            raise ParameterError("dataset must have exactly one of the keys 'preset', 'synthetic', 'csv'")
        if "preset" in self.dataset and self.dataset["preset"] not in PRESET_FAULT_COUNTS:
            raise ParameterError(f"unknown preset {self.dataset['preset']!r}; "
                                 f"expected one of {sorted(PRESET_FAULT_COUNTS)}")
        if "synthetic" in self.dataset:
            SyntheticSpec.from_dict(self.dataset["synthetic"]).validate()

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__ if f != "base_dir"}
        unknown = set(doc) - known
        if unknown:
            raise ParameterError(f"unknown config keys {sorted(unknown)}")
        if "dataset" not in doc:
            raise ParameterError("config needs a 'dataset' entry")
        kw = dict(doc)
        if isinstance(kw.get("held_out"), list):
            kw["held_out"] = tuple(str(h) for h in kw["held_out"])
        try:
            return cls(**kw, base_dir=str(base_dir))
        except TypeError as exc:
            raise ParameterError(f"malformed config: {exc}") from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ParameterError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ParameterError(f"{path}: config must be a JSON object")
        return cls.from_dict(doc, path.parent)

    def to_dict(self) -> dict:
        """Canonical form: grids expanded, tuples as lists, no filesystem base."""
        return {
            "dataset": self.dataset,
            "held_out": self.held_out if isinstance(self.held_out, str) else list(self.held_out),
            "strategies": list(self.strategies),
            "final_strategies": list(self.final_strategies),
            "learners": list(self.learners),
            "ensemble_sizes": [int(t) for t in self.ensemble_sizes],
            "grids": {k: {"configs": g.to_dict()["configs"]} for k, g in self.grids.items()},
            "q_levels": [float(q) for q in self.q_levels],
            "fixed_tau": bool(self.fixed_tau),
            "theta_levels": [float(t) for t in self.theta_levels],
            "metrics": list(self.metrics),
            "r": int(self.r),
            "ood_penalty": float(self.ood_penalty),
            "id_test_fraction": float(self.id_test_fraction),
            "standardize": bool(self.standardize),
            "seed": int(self.seed),
            "output_dir": self.output_dir,
        }

    def fingerprint(self) -> str:
        doc = self.to_dict()
        doc.pop("output_dir")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def settings(self) -> list[tuple[str, Optional[float]]]:
        out = [(f"tau={FIXED_TAU:g}", None)] if self.fixed_tau else []
        return out + [(f"q={q:g}", float(q)) for q in self.q_levels]


# --------------------------------------------------------------------------
# data


def load_partitions(cfg: ExperimentConfig) -> list[tuple[str, object]]:
    """(held-out label, PartitionedData or the error that prevented building it)."""
    src = cfg.dataset
    if "csv" in src:
        path = Path(src["csv"])
        if not path.is_absolute():
            path = Path(cfg.base_dir) / path
        ds = load_csv(path)
        designated = ()
    else:
        spec = (make_benchmarks(cfg.seed)[src["preset"]] if "preset" in src
                else SyntheticSpec.from_dict(src["synthetic"]))
        if cfg.held_out == "designated":
            return [(spec.ood_strata[0] if len(spec.ood_strata) == 1 else "+".join(spec.ood_strata),
                     _guard(lambda: generate_synthetic(spec)))]
        ds = sample_synthetic(spec)
        designated = spec.ood_strata
    if cfg.held_out == "designated":
        if not designated:
            raise ParameterError("a csv dataset has no designated OOD stratum; use 'all' or a list")
    strata = ds.fault_strata if cfg.held_out == "all" else list(cfg.held_out)
    out = []
    for h, name in enumerate(strata):
        seed = child_seed(cfg.seed, 0, h)
        out.append((name, _guard(lambda: partition_leave_one_stratum(
            ds, name, cfg.id_test_fraction, seed))))
    return out


def _guard(fn):
    try:
        return fn()
    except (SacvError, ValueError, RuntimeError) as exc:
        return exc


def check_provenance(part: PartitionedData) -> None:
    """No test row may appear in the development set."""
    dev = part.dev.row_ids
    for name, test in (("test_id", part.test_id), ("test_ood", part.test_ood)):
        assert np.intersect1d(dev, test.row_ids).size == 0, f"{name} rows leaked into dev"
    assert not set(part.held_out_strata) & set(part.dev.fault_strata), "held-out stratum in dev"


# --------------------------------------------------------------------------
# records

RECORD_FIELDS = (
    "held_out", "strategy", "final_strategy", "learner", "ensemble_size", "config_rank",
    "config_index", "setting", "q", "metric", "theta", "status", "error",
    "tau", "u_threshold", "fnr_id", "fpr_id", "fnr_ood", "fpr_ood",
    "fn_baseline", "fn_remaining", "n_flagged", "fn_precision",
    "val_id_score", "val_ood_fnr", "rank_score", "seed", "cell_seed",
)


@dataclass(frozen=True)
class Job:
    index: int
    held_out: str
    strategy: str
    learner: str
    ensemble_size: int
    seed: int
    cell_seed: int


def _blank(job: Job, cfg: ExperimentConfig, **kw) -> dict:
    rec = dict.fromkeys(RECORD_FIELDS)
    rec.update(held_out=job.held_out, strategy=job.strategy, learner=job.learner,
               ensemble_size=job.ensemble_size, seed=job.seed, cell_seed=job.cell_seed, error="")
    rec.update(kw)
    return rec


def _cell_coords(cfg: ExperimentConfig, final_strategies=None, ranks=None):
    for fs in final_strategies or cfg.final_strategies:
        for rank in ranks or range(1, cfg.r + 1):
            for setting, q in cfg.settings():
                for metric in cfg.metrics:
                    for theta in cfg.theta_levels:
                        yield fs, rank, setting, q, metric, float(theta)


def error_records(job: Job, cfg: ExperimentConfig, exc: BaseException, final_strategies=None,
                  ranks=None) -> list[dict]:
    msg = f"{type(exc).__name__}: {exc}"
    return [_blank(job, cfg, final_strategy=fs, config_rank=rank, setting=setting, q=q,
                   metric=metric, theta=theta, status="error", error=msg)
            for fs, rank, setting, q, metric, theta in _cell_coords(cfg, final_strategies, ranks)]


def evaluate_final(job: Job, cfg: ExperimentConfig, part: PartitionedData, fm, cv, rank: int) -> list[dict]:
    """All threshold/metric/theta records for one final model."""
    dev, test = part.dev, concat([part.test_id, part.test_ood])
    n_id = part.test_id.n
    ens = as_ensemble(fm.scorer)
    dev_s = predict_scores(fm.scorer, dev.features)
    test_s = predict_scores(fm.scorer, test.features)
    n_base = len(ens.base_models())
    dev_m = test_m = None
    if "VAR" in cfg.metrics and n_base >= 2:
        dev_m = base_member_scores(ens, dev.features)
        test_m = base_member_scores(ens, test.features)
    dev_neg = dev_s[dev.labels == 0]
    out = []
    for setting, q in cfg.settings():
        tau = FIXED_TAU if q is None else calibrate_cfar(dev_neg, q)
        dev_pred = classify(dev_s, tau)
        test_pred = classify(test_s, tau)
        m_id = evaluate(test_pred[:n_id], part.test_id.labels)
        m_ood = evaluate(test_pred[n_id:], part.test_ood.labels)
        base_fn = int(np.count_nonzero((test_pred == 0) & (test.labels == 1)))
        common = dict(final_strategy=fm.strategy, config_rank=rank, config_index=cv.config_index,
                      setting=setting, q=q, tau=float(tau), fnr_id=m_id.fnr, fpr_id=m_id.fpr,
                      fnr_ood=m_ood.fnr, fpr_ood=m_ood.fpr, fn_baseline=base_fn,
                      val_id_score=cv.val_id_score, val_ood_fnr=cv.val_ood_fnr,
                      rank_score=cv.combined_rank_score)
        for metric in cfg.metrics:
            if metric == "MEAN":
                u_dev, u_test = mean_metric(dev_s, tau).u, mean_metric(test_s, tau).u
            elif dev_m is None:
                for theta in cfg.theta_levels:
                    out.append(_blank(job, cfg, **common, metric=metric, theta=float(theta),
                                      status="not_applicable",
                                      error=f"variance needs >= 2 base learners, final model has {n_base}"))
                continue
            else:
                u_dev, u_test = var_metric(dev_m).u, var_metric(test_m).u
            for theta in cfg.theta_levels:
                u_thr = calibrate_triage(dev_pred, u_dev, float(theta))
                flagged = flag_uncertain_negatives(test_pred, u_test, u_thr)
                _, remaining = apply_oracle_correction(test_pred, flagged, test.labels)
                out.append(_blank(job, cfg, **common, metric=metric, theta=float(theta), status="ok",
                                  u_threshold=u_thr, fn_remaining=remaining,
                                  n_flagged=int(flagged.size),
                                  fn_precision=fn_precision(flagged, test.labels)))
    return out


def run_job(args) -> dict:
    """Execute one job; never raises for data/model errors."""
    job, cfg, part = args
    t0 = time.perf_counter()
    ledger = {"job": job.index, "held_out": job.held_out, "strategy": job.strategy,
              "learner": job.learner, "ensemble_size": job.ensemble_size,
              "cell_seed": job.cell_seed, "cv": [], "top": []}
    if isinstance(part, BaseException):
        recs = error_records(job, cfg, part)
        ledger["wall_time"] = time.perf_counter() - t0
        return {"records": recs, "ledger": ledger}
    try:
        check_provenance(part)
        grid = cfg.grids[job.learner]
        results = run_cv(part.dev, job.strategy, grid, job.ensemble_size, job.cell_seed,
                         ood_penalty=cfg.ood_penalty)
        top = rank_top_r(results, cfg.r)
    except (SacvError, ValueError, RuntimeError, ArithmeticError) as exc:
        ledger["wall_time"] = time.perf_counter() - t0
        return {"records": error_records(job, cfg, exc), "ledger": ledger}
    ledger["cv"] = [c.to_dict() for c in results]
    ledger["top"] = [c.config_index for c in top]
    recs = []
    for fs in cfg.final_strategies:
        for rank, cv in enumerate(top, start=1):
            try:
                fm = finalize(part.dev, cv, fs, job.ensemble_size, job.cell_seed, job.learner)
                if fs == "refit_all":
                    assert fm.train_fingerprint == part.dev.fingerprint(), "refit data is not the dev set"
                recs.extend(evaluate_final(job, cfg, part, fm, cv, rank))
            except (SacvError, ValueError, RuntimeError, ArithmeticError) as exc:
                recs.extend(error_records(job, cfg, exc, [fs], [rank]))
    ledger["wall_time"] = time.perf_counter() - t0
    return {"records": recs, "ledger": ledger}


def plan_jobs(cfg: ExperimentConfig, partitions) -> list[tuple[Job, ExperimentConfig, object]]:
    jobs = []
    for h, (name, part) in enumerate(partitions):
        if not isinstance(part, BaseException) and cfg.standardize:
            part = standardize(part)
        for strategy in cfg.strategies:
            for learner in cfg.learners:
                for T in cfg.ensemble_sizes:
                    key = (h, STRATEGIES.index(strategy), KINDS.index(learner), int(T))
                    job = Job(len(jobs), name, strategy, learner, int(T), cfg.seed,
                              child_seed(cfg.seed, 1, *key))
                    jobs.append((job, cfg, part))
    return jobs


@dataclass
class ExperimentReport:
    config: dict
    fingerprint: str
    records: list = field(default_factory=list)
    jobs: list = field(default_factory=list)

    @property
    def n_errors(self) -> int:
        return sum(r["status"] == "error" for r in self.records)

    def to_dict(self) -> dict:
        return {"fingerprint": self.fingerprint, "config": self.config,
                "columns": list(RECORD_FIELDS), "records": self.records, "jobs": self.jobs}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentReport":
        return cls(doc["config"], doc["fingerprint"], list(doc["records"]), list(doc.get("jobs", [])))


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Run the full sweep; ``jobs > 1`` spreads jobs over worker processes.

    Results are merged in job order, so the report does not depend on ``jobs``.
    """
    partitions = load_partitions(cfg)
    planned = plan_jobs(cfg, partitions)
    if jobs > 1 and len(planned) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(run_job, planned))
    else:
        outputs = [run_job(p) for p in planned]
    report = ExperimentReport(cfg.to_dict(), cfg.fingerprint())
    for out in outputs:
        report.records.extend(out["records"])
        report.jobs.append(out["ledger"])
    return report


# --------------------------------------------------------------------------
# emission


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def report_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for rec in records:
        w.writerow([_cell(rec.get(k)) for k in RECORD_FIELDS])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def emit_report(report: ExperimentReport, out_dir, formats=("json", "csv")) -> list[Path]:
    """Write ``report.json``, ``report.csv`` and ``config.fingerprint`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        p = out / "report.json"
        p.write_text(json.dumps(_json_safe(report.to_dict()), indent=1), encoding="utf-8")
        written.append(p)
    if "csv" in formats:
        p = out / "report.csv"
        p.write_text(report_csv(report.records), encoding="utf-8")
        written.append(p)
    p = out / "config.fingerprint"
    p.write_text(report.fingerprint + "\n", encoding="utf-8")
    written.append(p)
    return written


def load_report(path) -> ExperimentReport:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    for rec in doc["records"]:
        if rec.get("u_threshold") == "inf":
            rec["u_threshold"] = float("inf")
    return ExperimentReport.from_dict(doc)


def filter_records(records, where: dict) -> list[dict]:
    """Keep records whose fields match every ``key=value`` pair (compared as CSV text)."""
    for k in where:
        if k not in RECORD_FIELDS:
            raise ParameterError(f"unknown report column {k!r}")
    return [r for r in records if all(_cell(r.get(k)) == v for k, v in where.items())]
