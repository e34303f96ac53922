"""Experiment orchestration: synthetic runs, image datasets, geometry probes.

Every experiment compares SSmC under the configured group with the SSC
baseline, which is the same pipeline run with the trivial group. Trials
and lambda values fan out to a thread pool; results are reduced in
(trial, method, lambda) order, so reports do not depend on scheduling.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__, kernels
from .clustering import build_affinity, score_clustering, spectral_cluster
from .datasets import Preprocessing, ingest_image_dataset, subsample_per_label
from .geometry import (BoundParams, conjecture_probe, geometry_report, theorem_event_frequency)
from .group_algebra import GroupRepresentation, rep_from_descriptor, trivial_rep
from .solver import SolverConfig
from .synthetic import (correlated_seeds, generate_submodule_basis, perturb_dataset,
                        sample_orbit_model, sample_semi_random)

log = logging.getLogger(__name__)

METHODS = ("SSmC", "SSC")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _schema():
    return json.loads(resources.files("ssmc").joinpath("schema/config.schema.json").read_text())


@dataclass
class SyntheticSpec:
    num_seeds: int = 2
    points_per_submodule: int = 32
    support: str = "full"           # or "blocks": disjoint invariant coordinate sets
    model: str = "semi_random"      # or "orbit"
    scramble: bool = False
    specific_weight: float | None = None
    noise_sigma: float = 0.0


@dataclass
class ExperimentConfig:
    mode: str
    group: dict = field(default_factory=lambda: {"kind": "cyclic_shift", "n1": 8, "n2": 8})
    solver: dict = field(default_factory=dict)
    formulation: str = "exact"
    lambda_grid: list = field(default_factory=list)
    num_clusters: int = 2
    trials: int = 1
    base_seed: int = 0
    n_jobs: int = 1
    output_dir: str = "ssmc_out"
    preprocessing: dict = field(default_factory=dict)
    synthetic: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    geometry: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(doc, _schema())
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{path}: {exc.message}") from None
        cfg = cls(**doc)
        if cfg.formulation == "regularized" and not cfg.lambda_grid:
            raise ConfigError("lambda_grid must be nonempty in regularized mode")
        if cfg.mode == "dataset" and not cfg.dataset:
            raise ConfigError("dataset mode needs a 'dataset' section")
        try:
            cfg.rep()
            cfg.solver_config(None)
            cfg.prep()
            SyntheticSpec(**cfg.synthetic)
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def rep(self) -> GroupRepresentation:
        return rep_from_descriptor(self.group)

    def prep(self) -> Preprocessing:
        return Preprocessing.from_dict(self.preprocessing)

    def lambdas(self) -> list:
        """The grid in ascending order (``[None]`` in exact mode)."""
        if self.formulation == "exact":
            return [None]
        return sorted(float(v) for v in self.lambda_grid)

    def solver_config(self, lam) -> SolverConfig:
        return SolverConfig.from_dict({**self.solver, "reg_lambda": lam})


@dataclass
class MethodResult:
    descriptor: dict
    trial_errors: list              # best-lambda error per trial; None for failed trials
    best_lambda: list
    per_lambda_errors: list         # trial x lambda; None where the solve failed
    failed_trials: list
    nonconverged_solves: list       # per trial, at the best lambda
    mean: float | None
    std: float | None

    @property
    def num_failed(self) -> int:
        return len(self.failed_trials)


@dataclass
class ExperimentReport:
    mode: str
    config: dict
    versions: dict
    lambda_grid: list
    results: dict                   # method -> MethodResult, or per-size dicts for datasets
    table: list = field(default_factory=list)
    timing: dict | None = None
    timestamp: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.timing is None:
            d.pop("timing")
        if self.timestamp is None:
            d.pop("timestamp")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def versions() -> dict:
    return {"ssmc": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "kernel_backend": kernels.BACKEND}


def best_lambda_index(errors) -> int | None:
    """Argmin over the grid, ties to the smaller lambda (grid sorted ascending)."""
    best = None
    for j, e in enumerate(errors):
        if e is not None and (best is None or e < errors[best]):
            best = j
    return best


def _trial_seeds(base_seed: int, trial: int):
    """(data, sampling, clustering) seeds for one trial."""
    state = np.random.SeedSequence([base_seed, trial]).generate_state(3)
    return tuple(int(s) for s in state)


class _TraceSink:
    """Thread-safe JSON-lines writer."""

    def __init__(self, path):
        self._fh = open(path, "w")
        self._lock = threading.Lock()

    def bind(self, **context):
        def emit(rec):
            line = json.dumps({**context, **rec}, sort_keys=True)
            with self._lock:
                self._fh.write(line + "\n")
        return emit

    def close(self):
        self._fh.close()


@dataclass
class RunOptions:
    trace_path: Path | None = None
    save_affinity: Path | None = None
    timestamps: bool = True


def _cluster_once(X, labels, rep, cfg: ExperimentConfig, lam, L, seed, trace):
    """One (method, lambda) run; returns (error or None, nonconverged, W)."""
    aff = build_affinity(X, rep, cfg.solver_config(lam), trace=trace)
    nonconv = int((~aff.converged & ~aff.failed).sum())
    if aff.num_failed:
        return None, nonconv, aff.W
    res = spectral_cluster(aff.W, L, seed=seed)
    return float(score_clustering(res.assignments, labels)), nonconv, aff.W


def _run_methods(units, cfg, opts, sink, tag):
    """Run ``units`` = [(trial, X, labels, L, seed)] for both methods over the grid.

    Returns ``{method: MethodResult}`` and the wall time per method.
    """
    lams = cfg.lambdas()
    reps = {}
    jobs = []
    for trial, X, labels, L, seed in units:
        n = X.shape[0]
        group = cfg.rep()
        if group.n != n:
            raise ConfigError(f"group acts on R^{group.n}, data live in R^{n}")
        # the baseline is the same pipeline with the one-element group
        reps["SSmC"], reps["SSC"] = group, trivial_rep(n)
        for m in METHODS:
            for j, lam in enumerate(lams):
                jobs.append((trial, m, j, lam, X, labels, L, seed))

    def work(job):
        trial, m, j, lam, X, labels, L, seed = job
        trace = None
        if sink is not None:
            trace = sink.bind(**tag, trial=trial, method=m, reg_lambda=lam)
        t0 = time.perf_counter()
        out = _cluster_once(X, labels, reps[m], cfg, lam, L, seed, trace)
        return out, time.perf_counter() - t0

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            outs = list(pool.map(work, jobs))
    else:
        outs = [work(job) for job in jobs]

    cells = {(job[0], job[1], job[2]): out for job, out in zip(jobs, outs)}
    trials = [u[0] for u in units]
    results, wall = {}, {}
    for m in METHODS:
        per_lam, best, errs, failed, nonconv = [], [], [], [], []
        wall[m] = sum(cells[(t, m, j)][1] for t in trials for j in range(len(lams)))
        for t in trials:
            row = [cells[(t, m, j)][0][0] for j in range(len(lams))]
            per_lam.append(row)
            b = best_lambda_index(row)
            if b is None:
                failed.append(t)
                errs.append(None)
                best.append(None)
                nonconv.append(None)
                continue
            errs.append(row[b])
            best.append(lams[b])
            nonconv.append(cells[(t, m, b)][0][1])
            if opts.save_affinity is not None:
                opts.save_affinity.mkdir(parents=True, exist_ok=True)
                name = f"{tag.get('prefix', '')}{m}_trial{t}.csv"
                np.savetxt(opts.save_affinity / name, cells[(t, m, b)][0][2],
                           delimiter=",", fmt="%.17e")
        ok = [e for e in errs if e is not None]
        if failed:
            log.warning("%s: %d trial(s) failed and are excluded from the mean", m, len(failed))
        results[m] = MethodResult(
            reps[m].to_descriptor() if m == "SSmC" else {"kind": "trivial", "n": reps[m].n},
            errs, best, per_lam, failed, nonconv,
            float(np.mean(ok)) if ok else None, float(np.std(ok)) if ok else None)
    return results, wall


# --- synthetic -----------------------------------------------------------------------

def invariant_blocks(rep: GroupRepresentation, L: int) -> list:
    """Split the coordinate orbits of a permutation representation into ``L`` groups.

    Each group is a union of whole orbits, hence an invariant coordinate
    set; orbits are dealt out in contiguous runs of equal count.
    """
    if rep.perms is None:
        raise ConfigError("'blocks' support needs a permutation representation")
    seen = np.full(rep.n, -1)
    orbits = []
    for i in range(rep.n):
        if seen[i] >= 0:
            continue
        orbit = np.unique(rep.perms[:, i])
        seen[orbit] = len(orbits)
        orbits.append(orbit)
    per = len(orbits) // L
    if per == 0:
        raise ConfigError(f"{len(orbits)} coordinate orbits cannot host {L} disjoint submodules")
    return [np.concatenate(orbits[k * per:(k + 1) * per]) for k in range(L)]


def make_synthetic(cfg: ExperimentConfig, trial: int):
    spec = SyntheticSpec(**cfg.synthetic)
    rep = cfg.rep()
    L = cfg.num_clusters
    s_data, s_sample, _ = _trial_seeds(cfg.base_seed, trial)
    sub = np.random.SeedSequence(s_data).generate_state(L + 1)
    supports = invariant_blocks(rep, L) if spec.support == "blocks" else [None] * L
    if spec.specific_weight is not None:
        seeds = correlated_seeds(rep.n, L, spec.num_seeds, spec.specific_weight, int(sub[L]))
        for k, sup in enumerate(supports):
            if sup is not None:
                mask = np.zeros(rep.n, dtype=bool)
                mask[sup] = True
                seeds[k][~mask] = 0.0
        bases = [generate_submodule_basis(rep, spec.num_seeds, seeds=s) for s in seeds]
    else:
        bases = [generate_submodule_basis(rep, spec.num_seeds, int(sub[k]), support=supports[k])
                 for k in range(L)]
    counts = [spec.points_per_submodule] * L
    if spec.model == "orbit":
        ds = sample_orbit_model(bases, counts, s_sample, scramble=spec.scramble)
    else:
        if spec.scramble:
            raise ConfigError("scramble requires the orbit model")
        ds = sample_semi_random(bases, counts, s_sample)
    return perturb_dataset(ds, spec.noise_sigma, s_sample + 1)


def _finish(report: ExperimentReport, t0, opts: RunOptions):
    if opts.timestamps:
        report.timing = {**(report.timing or {}), "total_seconds": time.perf_counter() - t0}
        report.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    else:
        report.timing = None
    return report


def run_synthetic_experiment(cfg: ExperimentConfig, opts: RunOptions | None = None,
                             sink: _TraceSink | None = None) -> ExperimentReport:
    opts = opts or RunOptions()
    t0 = time.perf_counter()
    units = []
    for trial in range(cfg.trials):
        ds = make_synthetic(cfg, trial)
        units.append((trial, ds.X, ds.labels, cfg.num_clusters, _trial_seeds(cfg.base_seed, trial)[2]))
    results, wall = _run_methods(units, cfg, opts, sink, {})
    table = [{"method": m, "mean_error": results[m].mean, "std_error": results[m].std,
              "failed_trials": results[m].num_failed} for m in METHODS]
    report = ExperimentReport("synthetic", cfg.to_dict(), versions(), cfg.lambdas(),
                              {m: asdict(r) for m, r in results.items()}, table,
                              timing={f"{m}_seconds": w for m, w in wall.items()})
    return _finish(report, t0, opts)


# --- image datasets ---------------------------------------------------------------------

def run_dataset_experiment(cfg: ExperimentConfig, opts: RunOptions | None = None,
                           sink: _TraceSink | None = None) -> ExperimentReport:
    """Subsample images per subject without replacement and compare both methods.

    The table has one row per method and one column per requested number
    of images per subject, holding the mean error over trials.
    """
    opts = opts or RunOptions()
    t0 = time.perf_counter()
    X_all, labels_all, _ = ingest_image_dataset(cfg.dataset["manifest"], cfg.prep())
    subjects = cfg.dataset.get("subjects")
    if subjects is None:
        subjects = np.unique(labels_all).tolist()
    L = len(subjects)
    results, timing = {}, {}
    for size in cfg.dataset["images_per_subject"]:
        units = []
        for trial in range(cfg.trials):
            _, s_sample, s_cluster = _trial_seeds(cfg.base_seed, trial)
            rng = np.random.default_rng([s_sample, size])
            idx = subsample_per_label(labels_all, size, rng, subjects)
            units.append((trial, X_all[:, idx], labels_all[idx], L, s_cluster))
        res, wall = _run_methods(units, cfg, opts, sink, {"images_per_subject": size,
                                                          "prefix": f"n{size}_"})
        results[str(size)] = {m: asdict(r) for m, r in res.items()}
        timing[str(size)] = wall
    table = []
    for m in METHODS:
        row = {"method": m}
        for size in cfg.dataset["images_per_subject"]:
            row[str(size)] = results[str(size)][m]["mean"]
        table.append(row)
    report = ExperimentReport("dataset", cfg.to_dict(), versions(), cfg.lambdas(), results,
                              table, timing=timing)
    return _finish(report, t0, opts)


# --- geometry ----------------------------------------------------------------------------

def run_geometry_experiment(cfg: ExperimentConfig, opts: RunOptions | None = None) -> dict:
    """Conjecture probe, Monte Carlo event frequencies and pairwise conditions.

    Returns a JSON-ready dict; the conjecture rows are re-checked for
    dominance before emission.
    """
    opts = opts or RunOptions()
    t0 = time.perf_counter()
    g = cfg.geometry
    nd = int(g.get("num_directions", 2000))
    steps = int(g.get("descent_steps", 100))
    params = BoundParams(float(g.get("t", 1.0)), float(g.get("Delta", 1.0)))
    out = {"mode": "geometry", "config": cfg.to_dict(), "versions": versions(),
           "notes": ["in-radius estimates are upper bounds on the true in-radius; "
                     "condition flags computed from them are optimistic",
                     "probability bounds are reported under both readings of the exponent"]}
    seeds = np.random.SeedSequence(cfg.base_seed).generate_state(3)

    conj = g.get("conjecture")
    if conj:
        fit = conjecture_probe(conj.get("N_G_values", [1, 2, 4, 8]), int(conj.get("beta", 2)),
                               float(conj.get("N_over_d", 8.0)), int(conj.get("trials", 5)),
                               seed=int(seeds[0]), n1=conj.get("n1"), num_directions=nd,
                               descent_steps=steps)
        if not all(r["r_hat"] >= r["r_hat_ssc"] for r in fit.rows):
            raise RuntimeError("dominance violated in conjecture rows")
        out["conjecture_fit"] = fit.to_dict()

    ev = g.get("event")
    if ev:
        rep = cfg.rep()
        k_seed, l_seed = (int(s) for s in np.random.SeedSequence(int(seeds[1])).generate_state(2))
        Qk = generate_submodule_basis(rep, int(ev.get("num_seeds", 2)), k_seed)
        Ql = generate_submodule_basis(rep, int(ev.get("num_seeds", 2)), l_seed)
        rows = []
        for t in ev.get("t_values", [params.t]):
            p = BoundParams(float(t), params.Delta)
            f = theorem_event_frequency(Qk, Ql, rep, p, int(ev.get("trials", 10_000)),
                                        seed=int(seeds[2]), N_k=int(ev.get("N_k", 32)))
            rows.append({"t": float(t), "Delta": params.Delta, "d_k": Qk.dim, "d_ell": Ql.dim,
                         **asdict(f)})
        out["event_frequencies"] = rows

    if g.get("pairwise"):
        ds = make_synthetic(cfg, 0)
        rpt = geometry_report(ds.bases, ds.X, ds.labels, params, seed=int(seeds[0]),
                              num_directions=nd, descent_steps=steps)
        out["pairwise"] = rpt.to_dict()

    if opts.timestamps:
        out["timing"] = {"total_seconds": time.perf_counter() - t0}
        out["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return out


# --- emission ---------------------------------------------------------------------------

def write_table(rows: list, path):
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def write_outputs(result, out_dir) -> Path:
    """``report.json`` plus ``tables.csv`` or ``conjecture.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(result, ExperimentReport):
        (out / "report.json").write_text(result.to_json())
        write_table(result.table, out / "tables.csv")
    else:
        (out / "report.json").write_text(json.dumps(result, indent=2, sort_keys=True))
        fit = result.get("conjecture_fit")
        if fit:
            write_table([{k: r[k] for k in ("N_G", "trial", "r_hat", "r_hat_ssc")}
                         for r in fit["rows"]], out / "conjecture.csv")
    return out
