"""Trial orchestration, mean curves and parameter sweeps."""
from __future__ import annotations

import csv
import hashlib
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from ..errors import SPPDMError
from ..metrics import (
    RunTrace,
    TheoryConstants,
    constants_for,
    plateau_level,
    trace_baseline,
    trace_sppdm,
    write_constants,
)
from ..oracles import generate_regression, write_dataset_csv
from ..solver import write_state_csv
from .config import ExperimentConfig, serialize_config

__all__ = ["TrialResult", "TrialError", "trial_seeds", "run_trial", "run_experiment", "mean_curves", "sweep"]

_SPPDM_FAMILY = ("sppdm", "sppd", "ppdm", "ppd")


@dataclass
class TrialResult:
    trial: int
    algorithm: str
    trace: RunTrace
    checksum: str
    elapsed: float
    constants: TheoryConstants | None


class TrialError(SPPDMError):
    """A solver or oracle failure, labelled with the trial and algorithm."""

    def __init__(self, trial, algorithm, cause):
        self.trial, self.algorithm, self.cause = trial, algorithm, cause
        super().__init__(f"trial {trial}, algorithm {algorithm}: {type(cause).__name__}: {cause}")


def trial_seeds(seed: int, trials: int) -> List[Dict[str, int]]:
    """Independent ``data``, ``init`` and ``stream`` seeds for every trial."""
    out = []
    for child in np.random.SeedSequence(seed).spawn(trials):
        data, init, stream = (int(v) for v in child.generate_state(3, dtype=np.uint32))
        out.append({"data": data, "init": init, "stream": stream})
    return out


def _checksum(x: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(x, dtype="<f8").tobytes()).hexdigest()


def run_trial(cfg: ExperimentConfig, trial: int, out_dir: Path | None = None) -> List[TrialResult]:
    seeds = trial_seeds(cfg.run.seed, trial + 1)[trial]
    p = cfg.problem
    problem, data = generate_regression(
        np.random.default_rng(seeds["data"]), N=p.N, m=p.m, n=p.n, S=p.S, rho=p.rho,
        noise_sd=p.noise_sd, l1_weight=p.l1_weight, box=(p.box_lo, p.box_hi), L=p.L, mu=p.mu,
    )
    graph = cfg.build_graph()
    x0 = np.random.default_rng(seeds["init"]).uniform(-0.1, 0.1, size=(p.N, p.n))
    tdir = None
    if out_dir is not None:
        tdir = out_dir / f"trial_{trial:02d}"
        tdir.mkdir(parents=True, exist_ok=True)
        if cfg.run.save_data:
            write_dataset_csv(data, tdir / "data")
    results = []
    for alg in cfg.solver.algorithms:
        scfg = cfg.solver_config(alg, seed=seeds["stream"])
        t0 = time.perf_counter()
        tc = None
        try:
            if alg in _SPPDM_FAMILY:
                tc = constants_for(problem, graph, scfg, sigma5=cfg.solver.sigma5)
                if not tc.feasible:
                    warnings.warn(f"{alg}: convergence conditions not met ({', '.join(tc.violated())})",
                                  stacklevel=2)
                phi_tau = tc.tau if cfg.run.phi else None
                trace, state = trace_sppdm(problem, graph, scfg, x0, every=cfg.run.every, phi_tau=phi_tau,
                                           phi_tol=cfg.run.phi_tol, wall_clock=cfg.run.wall_clock)
                final = state.x
                if tdir is not None:
                    write_state_csv(state, tdir / f"{alg}_state.csv")
            else:
                step = cfg.solver.pg_extra_step if alg == "pg-extra-metropolis" else None
                trace, state = _baseline(alg, problem, graph, scfg, x0, cfg, step)
                final = state.x
        except SPPDMError as exc:
            raise TrialError(trial, alg, exc) from exc
        elapsed = time.perf_counter() - t0
        trace.meta.update({"trial": str(trial), "algorithm": alg})
        res = TrialResult(trial, alg, trace, _checksum(final), elapsed, tc)
        if tdir is not None:
            trace.to_csv(tdir / f"{alg}.csv")
            if tc is not None:
                write_constants(tc, tdir / f"{alg}_constants.txt")
        results.append(res)
    return results


def _baseline(alg, problem, graph, scfg, x0, cfg, step):
    return trace_baseline(alg, problem, graph, scfg, x0, every=cfg.run.every,
                          wall_clock=cfg.run.wall_clock, step=step)


def mean_curves(results: Sequence[TrialResult]) -> Dict[str, RunTrace]:
    """Arithmetic mean of every metric over trials, per algorithm and iteration."""
    by_alg: Dict[str, List[RunTrace]] = {}
    for r in results:
        by_alg.setdefault(r.algorithm, []).append(r.trace)
    out = {}
    for alg, traces in by_alg.items():
        mean = RunTrace(meta={"algorithm": alg, "trials": str(len(traces))})
        cols = ("stationarity", "consensus", "q_gap", "phi", "ax_norm2", "wall_ms")
        stacked = {c: np.mean([t.column(c) for t in traces], axis=0) for c in cols}
        for idx, k in enumerate(traces[0].iters):
            mean.append(k, *(float(stacked[c][idx]) for c in cols))
        out[alg] = mean
    return out


def _write_summary(results, path: Path):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "algorithm", "stationarity", "consensus", "checksum"])
        for r in results:
            w.writerow([r.trial, r.algorithm, repr(r.trace.stationarity[-1]), repr(r.trace.consensus[-1]), r.checksum])


def run_experiment(cfg: ExperimentConfig, out_dir: Path | str | None = None, write: bool = True) -> List[TrialResult]:
    """Run every configured algorithm on every trial and export CSVs.

    Outputs: ``trial_XX/<alg>.csv`` traces, ``mean_<alg>.csv`` curves,
    ``summary.csv`` and the resolved ``config.ini``.  Timing columns are zero
    unless ``wall_clock`` is set, so reruns are byte-identical.
    """
    out = None
    if write:
        out = Path(out_dir) if out_dir is not None else cfg.output_dir()
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(serialize_config(cfg))
    trials = range(cfg.run.trials)
    if cfg.run.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.run.workers) as pool:
            chunks = list(pool.map(run_trial, [cfg] * len(trials), trials, [out] * len(trials)))
    else:
        chunks = [run_trial(cfg, t, out) for t in trials]
    results = [r for chunk in chunks for r in chunk]
    if out is not None:
        for alg, tr in mean_curves(results).items():
            tr.to_csv(out / f"mean_{alg}.csv")
        _write_summary(results, out / "summary.csv")
    return results


def _slug(value) -> str:
    return str(value).replace("/", "_").replace(" ", "")


def sweep(cfg: ExperimentConfig, param: str, values: Sequence, out_dir: Path | str | None = None,
          write: bool = True) -> List[Dict[str, object]]:
    """Rerun the experiment for every value of ``param``.

    Each value gets its own ``sweep_<param>_<value>`` directory; a
    ``plateau.csv`` row per (value, algorithm) holds the mean stationarity
    over the last 10% of iterations of the mean curve.
    """
    out = Path(out_dir) if out_dir is not None else cfg.output_dir()
    rows = []
    key = param.split(".")[-1]
    for v in values:
        sub = cfg.with_param(param, v)
        sub_dir = out / f"sweep_{key}_{_slug(v)}"
        results = run_experiment(sub, sub_dir, write=write)
        for alg, tr in mean_curves(results).items():
            rows.append({"param": key, "value": str(v), "algorithm": alg,
                         "plateau": plateau_level(tr.column("stationarity")[1:])})
    if write:
        out.mkdir(parents=True, exist_ok=True)
        with (out / "plateau.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["param", "value", "algorithm", "plateau"])
            for r in rows:
                w.writerow([r["param"], r["value"], r["algorithm"], repr(r["plateau"])])
    return rows
