"""Monte-Carlo experiment orchestration.

Every random quantity is drawn from a substream keyed by
``(seed, experiment, role, ...)`` through :class:`numpy.random.SeedSequence`,
so changing trial counts never perturbs the trials that remain, and
results do not depend on worker scheduling.
"""
from __future__ import annotations

import csv
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import estimation, learners, reduced, theory
from .config import ExperimentConfig
from .datagen import AgentDataModel
from .exceptions import (DivergenceError, IllConditionedEstimateError,
                         UnstableStepsizeError)
from .gmrf import sample_tasks
from .graph import WeightMixture, build_laplacian, random_topology, read_edge_list

log = logging.getLogger(__name__)

# substream roles
_TASKS, _NOISE, _PROFILE, _ESTIMATION = 0, 1, 2, 3


def _exp_id(cfg):
    return zlib.crc32(cfg.experiment.encode())


def substream(seed, *key):
    """Independent generator for ``key`` under master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


@dataclass
class Setup:
    """Quantities shared read-only by every trial of an experiment."""

    topology: object
    laplacian: object
    sigma_u2: np.ndarray
    sigma_v2: np.ndarray

    @property
    def K(self):
        return self.topology.num_agents


def build_setup(cfg: ExperimentConfig) -> Setup:
    if cfg.topology_file:
        topo = read_edge_list(cfg.topology_file)
    else:
        mix = WeightMixture(cfg.mixture_p, tuple(cfg.mixture_hi_lo), tuple(cfg.mixture_lo_hi))
        topo = random_topology(cfg.K, cfg.max_degree, mix, np.random.default_rng(cfg.topology_seed))
    if topo.num_agents != cfg.K:
        raise ValueError(f"topology has {topo.num_agents} agents but config says K={cfg.K}")
    L = build_laplacian(topo)
    pseed = cfg.seed if cfg.profile_seed is None else cfg.profile_seed
    rng = substream(pseed, _exp_id(cfg), _PROFILE)
    su2 = rng.uniform(*cfg.sigma_u_range, size=cfg.K)
    sv2 = rng.uniform(*cfg.sigma_v_range, size=cfg.K)
    return Setup(topo, L, su2, sv2)


def iteration_budget(mu, sigma_u2, time_constants=20.0):
    return int(math.ceil(time_constants / (mu * float(np.min(sigma_u2)))))


def check_stability(cfg: ExperimentConfig, setup: Setup):
    """Refuse stepsizes for which the recursions are not mean-square stable."""
    h = float(np.max(setup.sigma_u2))
    mus = list(cfg.mu_list) + list(cfg.estimation_mu_list)
    for M in cfg.M_list:
        for mu in mus:
            if mu * h * (M + 2) >= 2:
                raise UnstableStepsizeError(
                    f"mu={mu:g} is unstable for LMS with M={M} and max sigma_u^2={h:g}: "
                    f"need mu < {2 / (h * (M + 2)):.4g}"
                )
    if cfg.experiment == "msd_comparison":
        lim = 2.0 / (h + setup.laplacian.spectral_norm())
        for mu in cfg.mu_list:
            if mu >= lim:
                raise UnstableStepsizeError(
                    f"mu={mu:g} is unstable for the multitask recursion: need mu < 2/(max sigma_u^2 + ||L||) = {lim:.4g}"
                )


def _models(tasks, su2, sv2):
    return [AgentDataModel(float(su2[k]), float(sv2[k]), tasks[k]) for k in range(len(su2))]


def _noncoop_snapshot(cfg, tasks, su2, sv2, mu, rng):
    n = iteration_budget(mu, su2, cfg.time_constants)
    if cfg.engine == "reduced":
        return reduced.noncoop_final_states(tasks, su2, sv2, mu, n, rng)
    res = learners.run_learner(learners.LearnerConfig(mu, iterations=n), _models(tasks, su2, sv2), rng)
    return res.final.W


# ---------------------------------------------------------------- estimation


def _estimation_metric(kind, W, setup):
    if kind == "covariance":
        S = estimation.project_covariance(estimation.empirical_covariance(W))
        return estimation.spectral_error(S, setup.laplacian.pinv)
    est = estimation.estimate_from_states(W)
    return estimation.spectral_error(est.L_hat, setup.laplacian.entries)


def _estimation_trial(args):
    cfg, setup, kind, M, j, n = args
    eid = _exp_id(cfg)
    tasks = sample_tasks(setup.laplacian, M, substream(cfg.seed, eid, _TASKS, M, j)).values
    out = {}
    if n == 0 and cfg.include_benchmark:
        try:
            out[0.0] = ("ok", _estimation_metric(kind, tasks, setup))
        except IllConditionedEstimateError:
            out[0.0] = ("illcond", None)
    for mu in cfg.mu_list:
        # common random numbers across stepsizes: same noise key for every mu
        rng = substream(cfg.seed, eid, _NOISE, M, j, n)
        try:
            W = _noncoop_snapshot(cfg, tasks, setup.sigma_u2, setup.sigma_v2, mu, rng)
            out[mu] = ("ok", _estimation_metric(kind, W, setup))
        except DivergenceError:
            out[mu] = ("diverged", None)
        except IllConditionedEstimateError:
            out[mu] = ("illcond", None)
    return M, j, n, out


def _map(cfg, fn, jobs):
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
    return [fn(job) for job in jobs]


def _summarise(values):
    v = np.asarray(values, dtype=float)
    n = len(v)
    if n == 0:
        return float("nan"), float("nan")
    mean = float(v.mean())
    se = float(v.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return mean, se


def _db(x):
    return 10.0 * math.log10(x) if x > 0 else float("-inf")


def _run_estimation(cfg, kind, setup=None):
    setup = setup or build_setup(cfg)
    check_stability(cfg, setup)
    jobs = [(cfg, setup, kind, M, j, n)
            for M in cfg.M_list for j in range(cfg.trials_task) for n in range(cfg.trials_noise)]
    results = _map(cfg, _estimation_trial, jobs)
    cells = {}
    for M, j, n, out in sorted(results, key=lambda r: r[:3]):
        for mu, (status, val) in out.items():
            c = cells.setdefault((mu, M), {"vals": [], "diverged": 0, "illcond": 0})
            if status == "ok":
                c["vals"].append(val)
            else:
                c[status] += 1
    rows = []
    for (mu, M), c in sorted(cells.items(), key=lambda kv: (kv[0][1], -kv[0][0] if kv[0][0] else -np.inf)):
        mean, se = _summarise(c["vals"])
        rows.append({
            "mu": mu, "M": M, "mean_err": mean, "stderr": se,
            "n_ok": len(c["vals"]), "n_failed": c["diverged"] + c["illcond"],
            "mean_err_db": _db(mean) if len(c["vals"]) else float("nan"),
            "n_diverged": c["diverged"], "n_illcond": c["illcond"],
            "source": "benchmark" if mu == 0.0 else "noncooperative",
        })
    return rows


def run_covariance_error_experiment(cfg: ExperimentConfig, setup=None):
    """Mean ``||Q Sigma_hat Q - L^dagger||^2`` per ``(mu, M)``; ``mu = 0`` rows are the true-task benchmark."""
    return _run_estimation(cfg, "covariance", setup)


def run_laplacian_error_experiment(cfg: ExperimentConfig, setup=None):
    """Mean ``||L_hat - L||^2`` per ``(mu, M)``; ``mu = 0`` rows are the true-task benchmark."""
    return _run_estimation(cfg, "laplacian", setup)


# ---------------------------------------------------------------- MSD


def _algorithms(cfg):
    algos = ["noncooperative", "consensus", "multitask_true"]
    algos += [f"multitask_est_{mu_e:g}" for mu_e in cfg.estimation_mu_list]
    return algos


def _msd_series(cfg, tasks, su2, sv2, mu, mode, matrix, rng):
    n = iteration_budget(mu, su2, cfg.time_constants)
    if cfg.engine == "reduced":
        return reduced.network_msd(tasks, su2, sv2, mu, n, rng, mode=mode, matrix=matrix,
                                   record_every=cfg.record_every)
    conf = learners.LearnerConfig(mu, mode=mode, matrix=matrix, iterations=n)
    res = learners.run_learner(conf, _models(tasks, su2, sv2), rng,
                               recorders=[learners.MSDRecorder(tasks)], record_every=cfg.record_every)
    its, msd = res.iterations, res.records["msd"]
    # keep the regular grid only, matching the reduced engine
    keep = its % cfg.record_every == 0
    return its[keep], msd[keep]


def _msd_trial(args):
    cfg, setup, M, mu, j, n = args
    eid = _exp_id(cfg)
    su2, sv2 = setup.sigma_u2, setup.sigma_v2
    tasks = sample_tasks(setup.laplacian, M, substream(cfg.seed, eid, _TASKS, M, j)).values
    C = learners.metropolis_weights(setup.topology)
    runs = {
        "noncooperative": ("noncooperative", None),
        "consensus": ("consensus", C),
        "multitask_true": ("multitask", setup.laplacian.entries),
    }
    out, diag = {}, {}
    for e, mu_e in enumerate(cfg.estimation_mu_list):
        name = f"multitask_est_{mu_e:g}"
        try:
            W = _noncoop_snapshot(cfg, tasks, su2, sv2, mu_e, substream(cfg.seed, eid, _ESTIMATION, M, j, n, e))
            L_hat = estimation.estimate_from_states(W).L_hat
            runs[name] = ("multitask", L_hat)
            diag[name] = estimation.spectral_error(L_hat, setup.laplacian.entries)
        except DivergenceError:
            out[name] = ("diverged", None)
        except IllConditionedEstimateError:
            out[name] = ("illcond", None)
    for a, name in enumerate(_algorithms(cfg)):
        if name not in runs:
            continue
        mode, mat = runs[name]
        rng = substream(cfg.seed, eid, _NOISE, M, j, n, a)
        try:
            out[name] = ("ok", _msd_series(cfg, tasks, su2, sv2, mu, mode, mat, rng))
        except DivergenceError:
            out[name] = ("diverged", None)
    return M, mu, j, n, out, diag


def run_msd_experiment(cfg: ExperimentConfig, setup=None):
    """MSD learning curves for every algorithm, averaged over trials.

    Returns
    -------
    series : list of dict
        One row per ``(algorithm, mu, M, iteration)``.
    summary : list of dict
        Steady-state MSD per algorithm: mean over trials of the average
        of the last ``steady_fraction`` of each learning curve.
    """
    setup = setup or build_setup(cfg)
    check_stability(cfg, setup)
    jobs = [(cfg, setup, M, mu, j, n) for M in cfg.M_list for mu in cfg.mu_list
            for j in range(cfg.trials_task) for n in range(cfg.trials_noise)]
    results = _map(cfg, _msd_trial, jobs)
    acc = {}
    for M, mu, j, n, out, diag in sorted(results, key=lambda r: r[:4]):
        for name, (status, val) in out.items():
            c = acc.setdefault((name, mu, M), {"curves": [], "its": None, "failed": 0, "lerr": []})
            if status == "ok":
                its, msd = val
                c["its"] = its
                c["curves"].append(msd)
                if name in diag:
                    c["lerr"].append(diag[name])
            else:
                c["failed"] += 1
    series, summary = [], []
    order = {a: i for i, a in enumerate(_algorithms(cfg))}
    for (name, mu, M), c in sorted(acc.items(), key=lambda kv: (kv[0][2], kv[0][1], order[kv[0][0]])):
        n_ok = len(c["curves"])
        if n_ok:
            curves = np.vstack(c["curves"])
            mean_curve = curves.mean(axis=0)
            for it, m in zip(c["its"], mean_curve):
                series.append({"algorithm": name, "mu": mu, "M": M, "iteration": int(it),
                               "msd": float(m), "msd_db": _db(float(m)),
                               "n_ok": n_ok, "n_failed": c["failed"]})
            w = max(1, int(round(cfg.steady_fraction * curves.shape[1])))
            steady = curves[:, -w:].mean(axis=1)
            mean, se = _summarise(steady)
        else:
            mean = se = float("nan")
        summary.append({"algorithm": name, "mu": mu, "M": M, "steady_msd": mean, "stderr": se,
                        "steady_msd_db": _db(mean) if n_ok else float("nan"),
                        "n_ok": n_ok, "n_failed": c["failed"],
                        "laplacian_err": float(np.mean(c["lerr"])) if c["lerr"] else float("nan")})
    return series, summary


# ---------------------------------------------------------------- steady state


def _steady_trial(args):
    cfg, setup, M, mu, j = args
    eid = _exp_id(cfg)
    tasks = sample_tasks(setup.laplacian, M, substream(cfg.seed, eid, _TASKS, M, j)).values
    errs, failed = [], 0
    for n in range(cfg.trials_noise):
        rng = substream(cfg.seed, eid, _NOISE, M, j, n)
        try:
            W = _noncoop_snapshot(cfg, tasks, setup.sigma_u2, setup.sigma_v2, mu, rng)
            errs.append((W - tasks).reshape(-1))
        except DivergenceError:
            failed += 1
    return M, mu, j, errs, failed


def run_steady_state_experiment(cfg: ExperimentConfig, setup=None):
    """Compare the empirical error-covariance trace of non-cooperative LMS with ``tr(Pi)``.

    For each task realisation the sample covariance of ``W_i - W_o`` is
    taken across noise trials; its trace is averaged over realisations.
    """
    setup = setup or build_setup(cfg)
    check_stability(cfg, setup)
    jobs = [(cfg, setup, M, mu, j) for M in cfg.M_list for mu in cfg.mu_list for j in range(cfg.trials_task)]
    results = _map(cfg, _steady_trial, jobs)
    rows = []
    for M in cfg.M_list:
        models = _models(np.zeros((cfg.K, M)), setup.sigma_u2, setup.sigma_v2)
        for mu in cfg.mu_list:
            traces, n_ok, n_failed = [], 0, 0
            for rM, rmu, j, errs, failed in results:
                if rM != M or rmu != mu:
                    continue
                n_ok += len(errs)
                n_failed += failed
                if len(errs) >= 2:
                    E = np.vstack(errs)
                    traces.append(float(E.var(axis=0, ddof=1).sum()))
            ss = theory.SteadyStateModel.from_models(models, mu)
            gauss = float(np.sum(M * theory.lms_gaussian_steady_variance(setup.sigma_u2, setup.sigma_v2, mu, M)))
            emp, se = _summarise(traces)
            rows.append({"mu": mu, "M": M, "empirical_trace": emp, "stderr": se,
                         "lyapunov_trace": ss.trace, "gaussian_trace": gauss,
                         "rel_diff": abs(emp - ss.trace) / ss.trace,
                         "n_ok": n_ok, "n_failed": n_failed})
    return rows


# ---------------------------------------------------------------- output


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows, path, columns=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = columns or (list(rows[0].keys()) if rows else [])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])
    return path


ESTIMATION_COLUMNS = ["mu", "M", "mean_err", "stderr", "n_ok", "n_failed",
                      "mean_err_db", "n_diverged", "n_illcond", "source"]
SERIES_COLUMNS = ["algorithm", "mu", "M", "iteration", "msd", "msd_db", "n_ok", "n_failed"]
SUMMARY_COLUMNS = ["algorithm", "mu", "M", "steady_msd", "stderr", "steady_msd_db",
                   "n_ok", "n_failed", "laplacian_err"]
STEADY_COLUMNS = ["mu", "M", "empirical_trace", "stderr", "lyapunov_trace", "gaussian_trace",
                  "rel_diff", "n_ok", "n_failed"]


def run_experiment(cfg: ExperimentConfig):
    """Run ``cfg`` and write its CSV (and optional SVG) outputs.

    Returns a dict mapping output kind to path.
    """
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    label = cfg.label
    paths = {}
    setup = build_setup(cfg)
    log.info("experiment %s: K=%d, lambda_2=%.4g, ||L||=%.4g", label, setup.K,
             setup.laplacian.algebraic_connectivity, setup.laplacian.spectral_norm())
    if cfg.experiment in ("covariance_error", "laplacian_error"):
        fn = run_covariance_error_experiment if cfg.experiment == "covariance_error" else run_laplacian_error_experiment
        rows = fn(cfg, setup)
        paths["results"] = write_csv(rows, out_dir / f"{label}_results.csv", ESTIMATION_COLUMNS)
        if cfg.plot:
            from .plotting import plot_estimation
            paths["plot"] = plot_estimation(rows, out_dir / f"{label}_results.svg", cfg.experiment)
    elif cfg.experiment == "msd_comparison":
        series, summary = run_msd_experiment(cfg, setup)
        paths["results"] = write_csv(series, out_dir / f"{label}_results.csv", SERIES_COLUMNS)
        paths["summary"] = write_csv(summary, out_dir / f"{label}_summary.csv", SUMMARY_COLUMNS)
        if cfg.plot:
            from .plotting import plot_msd
            paths["plot"] = plot_msd(series, out_dir / f"{label}_results.svg")
    else:
        rows = run_steady_state_experiment(cfg, setup)
        paths["results"] = write_csv(rows, out_dir / f"{label}_results.csv", STEADY_COLUMNS)
    return paths
