"""Experiment orchestration: build, evolve, verify, and write artifacts.

A run produces five files in the output directory:
  kernels.json       final (k, theta) per scheme
  evolution.csv      scheme, t, node_index, node_coord, prior_mean, prior_std,
                     post_mean, post_std
  paths.csv          sample paths (kind=gp), finite training trajectories
                     (kind=gcn), and the training targets (kind=train)
  oracle_report.json Monte-Carlo vs analytic discrepancies
  summary.json       invariant checks with numbers, plus the resolved config
Outputs are byte-identical across reruns with the same config and seed.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .activations import moments, numeric_moment_oracle
from .config import ExperimentConfig, OracleSpec
from .dsl import graphsage_kernels, graphsage_nodewise_kernels, program_from_json, run_program
from .dynamics import EvolutionSolver, posterior_full, sample_paths
from .graphs import GraphSpec, TrainSplit, identity_features, induced_subgraph
from .oracle import (
    FiniteGcnConfig,
    empirical_mask_check,
    empirical_output_covariance,
    train_finite_gcn,
)
from .recursion import (
    KernelPair,
    LayerWithReplacement,
    LayerWithoutReplacement,
    NodeWise,
    NoSampling,
    gcn_kernels,
    mask_with_replacement,
    mask_without_replacement,
    uniform_probabilities,
)
from .config import ConfigError

__all__ = ["run_experiment", "check_experiment", "EVOLUTION_COLUMNS", "PATH_COLUMNS"]

EVOLUTION_COLUMNS = (
    "scheme",
    "t",
    "node_index",
    "node_coord",
    "prior_mean",
    "prior_std",
    "post_mean",
    "post_std",
)
PATH_COLUMNS = ("kind", "scheme", "t", "path_index", "node_index", "node_coord", "value")

LIMIT_TIME_FACTOR = 1e3  # t_inf solves decay_rate * t = LIMIT_TIME_FACTOR for the slowest mode


def _worker_count(n_jobs: int) -> int:
    cap = os.environ.get("GNTK_THREADS", "")
    try:
        cap_val = int(cap) if cap else 4
    except ValueError:
        cap_val = 4
    return max(1, min(n_jobs, cap_val))


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: str, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1, sort_keys=False)
        fh.write("\n")


def _compute_kernels(config: ExperimentConfig, graph, c0, scheme_spec) -> KernelPair:
    scheme = scheme_spec.build(graph, config.hyper.n_layers)
    arch = config.architecture
    if arch == "gcn":
        return gcn_kernels(graph, c0, config.hyper, scheme)
    if arch == "graphsage":
        if isinstance(scheme, NoSampling):
            return graphsage_kernels(graph, c0, config.hyper)
        if isinstance(scheme, NodeWise):
            return graphsage_nodewise_kernels(graph, c0, config.hyper, scheme.fanout)
        raise ConfigError("unsupported_scheme", "graphsage supports none/node_wise schemes")
    if isinstance(arch, dict):
        if "program_file" in arch:
            path = arch["program_file"]
            if not os.path.isabs(path):
                path = os.path.join(config.config_dir, path)
            if not os.path.exists(path):
                raise ConfigError("program_not_found", f"program file not found: {path}")
            with open(path, "r", encoding="utf-8") as fh:
                program = program_from_json(json.load(fh))
        else:
            program = program_from_json(arch["program"])
        state = run_program(program, graph=graph, c0=c0.c0)
        return KernelPair(k=state.k, theta=state.theta, layer=0)
    raise ConfigError("invalid_architecture", f"unsupported architecture {arch!r}")


def _scatter(values_b, values_c, split: TrainSplit) -> np.ndarray:
    out = np.empty(split.n_nodes)
    out[split.train_idx] = values_b
    out[split.rest_idx] = values_c
    return out


def _scheme_payload(config, graph, c0, split, spec, scheme_index):
    """Everything one scheme contributes: kernels, evolution rows, paths rows."""
    kernels = _compute_kernels(config, graph, c0, spec)
    kernels.validate()
    solver = EvolutionSolver(kernels, split, config.eta)
    lam_min = solver.min_positive_eigenvalue()
    grid = list(config.time_grid)
    t_limit = LIMIT_TIME_FACTOR * split.train_idx.size / (config.eta * lam_min)
    if config.append_limit_time and t_limit > grid[-1]:
        grid.append(t_limit)

    coords = graph.coords if graph.coords is not None else np.arange(graph.n_nodes, dtype=float)
    evolution_rows = []
    path_rows = []
    prior_t0_dev = None
    final_post_mean = None
    for t_index, t in enumerate(grid):
        state = solver.state_at(t)
        prior_mean = _scatter(state.mu_b, state.mu_c, split)
        prior_var = _scatter(np.diag(state.k_bb), np.diag(state.k_cc), split)
        prior_std = np.sqrt(np.clip(prior_var, 0.0, None))
        post_mean_bc, post_cov = posterior_full(state, split, config.epsilon)
        n_b = split.train_idx.size
        post_mean = _scatter(post_mean_bc[:n_b], post_mean_bc[n_b:], split)
        post_var = _scatter(np.diag(post_cov)[:n_b], np.diag(post_cov)[n_b:], split)
        post_std = np.sqrt(np.clip(post_var, 0.0, None))
        for node in range(graph.n_nodes):
            evolution_rows.append(
                (
                    spec.label,
                    _fmt(t),
                    str(node),
                    _fmt(coords[node]),
                    _fmt(prior_mean[node]),
                    _fmt(prior_std[node]),
                    _fmt(post_mean[node]),
                    _fmt(post_std[node]),
                )
            )
        if t == 0.0:
            full_cov = state.covariance()
            order = np.concatenate([split.train_idx, split.rest_idx])
            ref = kernels.k[np.ix_(order, order)]
            prior_t0_dev = float(np.abs(full_cov - ref).max())
        if t_index == len(grid) - 1:
            final_post_mean = post_mean
        if config.n_paths:
            seed = np.random.SeedSequence((config.seed, 100 + scheme_index, t_index))
            draws = sample_paths(state, config.n_paths, seed)
            for path_index, draw in enumerate(draws):
                values = _scatter(draw[:n_b], draw[n_b:], split)
                for node in range(graph.n_nodes):
                    path_rows.append(
                        (
                            "gp",
                            spec.label,
                            _fmt(t),
                            str(path_index),
                            str(node),
                            _fmt(coords[node]),
                            _fmt(values[node]),
                        )
                    )

    mu_c_lim, _ = solver.limit()
    lim_full = _scatter(split.y_b, mu_c_lim, split)
    final_dev = float(np.abs(final_post_mean - lim_full).max())
    summary = {
        "label": spec.label,
        "kernel_min_eig_k": float(np.linalg.eigvalsh(0.5 * (kernels.k + kernels.k.T)).min()),
        "kernel_min_eig_theta": float(np.linalg.eigvalsh(0.5 * (kernels.theta + kernels.theta.T)).min()),
        "theta_bb_lam_min": lam_min,
        "theta_bb_rank_deficient": solver.rank_deficient,
        "t_max": grid[-1],
        "prior_t0_max_dev_from_kernel": prior_t0_dev,
        "posterior_final_max_dev_from_limit": final_dev,
        "posterior_final_max_dev_from_targets": float(
            np.abs(final_post_mean[split.train_idx] - split.y_b).max()
        ),
    }
    return kernels, evolution_rows, path_rows, summary


def _finite_rows(config: ExperimentConfig, graph, split, coords):
    spec = config.finite
    if spec is None or spec.n_trials == 0:
        return [], None
    cfg_widths = spec.widths
    if cfg_widths[0] != graph.n_nodes:
        raise ConfigError("bad_config", "finite_gcn widths[0] must equal the node count")
    x0 = np.eye(graph.n_nodes)
    # map each grid time onto a gradient-descent step count (one step advances
    # the flow by finite.eta / eta units of GP time)
    steps_per_time = [int(round(t * config.eta / spec.eta)) for t in config.time_grid]
    eligible = [(t, s) for t, s in zip(config.time_grid, steps_per_time) if s <= spec.max_steps]
    if not eligible:
        return [], None
    max_step = max(s for _, s in eligible)
    rows = []
    final_losses = []
    for trial in range(spec.n_trials):
        cfg = FiniteGcnConfig(
            widths=cfg_widths,
            hyper=config.hyper,
            n_trials=1,
            seed=int(np.random.SeedSequence((config.seed, 999, trial)).generate_state(1)[0]),
        )
        traj = train_finite_gcn(graph, x0, cfg, split, spec.eta, max_step)
        for t, step in eligible:
            if step >= traj.shape[0]:
                continue  # trajectory stopped early (divergence guard)
            f = traj[step]
            for node in range(graph.n_nodes):
                rows.append(
                    (
                        "gcn",
                        "",
                        _fmt(t),
                        str(trial),
                        str(node),
                        _fmt(coords[node]),
                        _fmt(f[node]),
                    )
                )
        resid = traj[-1][split.train_idx] - split.y_b
        final_losses.append(float(0.5 * np.mean(resid**2)))
    info = {
        "n_trials": spec.n_trials,
        "eta": spec.eta,
        "max_step": max_step,
        "final_train_losses": final_losses,
    }
    return rows, info


def _oracle_report(config: ExperimentConfig, graph, split) -> dict:
    spec = config.oracles
    if spec is None:
        return {"skipped": True}
    report: dict = {"skipped": False}
    seed = config.seed

    probe = np.array([[1.1, 0.4], [0.4, 0.8]])
    moment_report = {}
    for kind in ("relu", "erf"):
        exact = moments(probe, kind)
        est = numeric_moment_oracle(probe, kind, spec.moment_samples, seed=seed + 17)
        moment_report[kind] = {
            "n_samples": spec.moment_samples,
            "max_abs_err_c": float(np.abs(est.c - exact.c).max()),
            "max_abs_err_c_dot": float(np.abs(est.c_dot - exact.c_dot).max()),
        }
    report["moment_mc"] = moment_report

    n = 10
    rng = np.random.default_rng(seed + 23)
    r = rng.standard_normal((n, n))
    c = r @ r.T / n + 0.5 * np.ones((n, n)) + 0.5 * np.eye(n)
    mask_report = {}
    with_repl = LayerWithReplacement(p=uniform_probabilities(n), n_samples=5)
    emp = empirical_mask_check(with_repl, c, spec.mask_draws, seed=seed + 29)
    target = mask_with_replacement(with_repl.p, with_repl.n_samples) * c
    mask_report["with_replacement"] = {
        "n_draws": spec.mask_draws,
        "max_rel_err": float((np.abs(emp - target) / np.abs(target)).max()),
    }
    without = LayerWithoutReplacement(q=np.full(n, 0.5))
    emp = empirical_mask_check(without, c, spec.mask_draws, seed=seed + 31)
    target = mask_without_replacement(without.q) * c
    mask_report["without_replacement"] = {
        "n_draws": spec.mask_draws,
        "max_rel_err": float((np.abs(emp - target) / np.abs(target)).max()),
    }
    report["mask_mc"] = mask_report

    if config.architecture == "gcn":
        m = min(spec.finite_nodes, graph.n_nodes)
        sub = induced_subgraph(graph, np.arange(m))
        c0 = identity_features(m)
        analytic = gcn_kernels(sub, c0, config.hyper, NoSampling())
        cfg = FiniteGcnConfig(
            widths=(m, spec.finite_width, 1),
            hyper=config.hyper,
            scheme=NoSampling(),
            n_trials=spec.finite_trials,
            seed=seed + 37,
        )
        emp = empirical_output_covariance(sub, np.eye(m), cfg, n_columns=spec.finite_columns)
        report["finite_width"] = {
            "n_nodes": m,
            "width": spec.finite_width,
            "n_trials": spec.finite_trials,
            "n_columns": spec.finite_columns,
            "rel_frobenius_err": float(
                np.linalg.norm(emp - analytic.k) / np.linalg.norm(analytic.k)
            ),
        }
    return report


def run_experiment(config: ExperimentConfig, out_dir: str | None = None) -> dict:
    """Execute a validated config; returns the summary payload."""
    out = out_dir or config.out_dir
    os.makedirs(out, exist_ok=True)
    graph = config.build_graph()
    c0 = config.build_features(graph)
    split = config.build_split(graph)
    coords = graph.coords if graph.coords is not None else np.arange(graph.n_nodes, dtype=float)

    jobs = list(enumerate(config.schemes))
    results = [None] * len(jobs)
    workers = _worker_count(len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_scheme_payload, config, graph, c0, split, spec, idx): idx
                for idx, spec in jobs
            }
            for future, idx in futures.items():
                results[idx] = future.result()
    else:
        for idx, spec in jobs:
            results[idx] = _scheme_payload(config, graph, c0, split, spec, idx)

    evolution_rows = []
    path_rows = []
    kernels_payload = {}
    scheme_summaries = []
    kernel_mats = {}
    for (idx, spec), payload in zip(jobs, results):
        kernels, evo, paths, summary = payload
        evolution_rows.extend(evo)
        path_rows.extend(paths)
        kernels_payload[spec.label] = {
            "k": kernels.k.tolist(),
            "theta": kernels.theta.tolist(),
        }
        kernel_mats[spec.label] = kernels
        scheme_summaries.append(summary)

    for node, (idx, y) in enumerate(zip(split.train_idx, split.y_b)):
        path_rows.append(
            ("train", "", _fmt(0.0), "-1", str(int(idx)), _fmt(coords[idx]), _fmt(y))
        )

    finite_rows, finite_info = _finite_rows(config, graph, split, coords)
    path_rows.extend(finite_rows)

    oracle_report = _oracle_report(config, graph, split)

    labels = [spec.label for _, spec in jobs]
    pairwise = {}
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            d = float(
                np.linalg.norm(kernel_mats[labels[i]].k - kernel_mats[labels[j]].k)
            )
            pairwise[f"{labels[i]}|{labels[j]}"] = d

    row_sums = graph.adjacency.sum(axis=1)
    summary = {
        "graph": {
            "n_nodes": graph.n_nodes,
            "row_sums_min": float(row_sums.min()),
            "row_sums_max": float(row_sums.max()),
            "row_sums_unique": sorted(set(float(v) for v in np.unique(row_sums))),
        },
        "schemes": scheme_summaries,
        "pairwise_kernel_frobenius": pairwise,
        "finite_gcn": finite_info,
        "checks": {
            "prior_t0_exact": all(s["prior_t0_max_dev_from_kernel"] == 0.0 for s in scheme_summaries),
            "posterior_final_matches_targets_1e-4": all(
                s["posterior_final_max_dev_from_targets"] <= 1e-4 for s in scheme_summaries
            ),
        },
        "seed": config.seed,
        "resolved_config": config.raw,
    }

    _write_json(os.path.join(out, "kernels.json"), kernels_payload)
    _write_csv(os.path.join(out, "evolution.csv"), EVOLUTION_COLUMNS, evolution_rows)
    _write_csv(os.path.join(out, "paths.csv"), PATH_COLUMNS, path_rows)
    _write_json(os.path.join(out, "oracle_report.json"), oracle_report)
    _write_json(os.path.join(out, "summary.json"), summary)
    return summary


def check_experiment(config: ExperimentConfig) -> dict:
    """Validate a config against its graph without running; returns the echo payload."""
    graph = config.build_graph()
    config.build_features(graph)
    split = config.build_split(graph)
    for spec in config.schemes:
        scheme = spec.build(graph, config.hyper.n_layers)
        if isinstance(scheme, (LayerWithReplacement, LayerWithoutReplacement)):
            vec = scheme.p if isinstance(scheme, LayerWithReplacement) else scheme.q
            if vec.size != graph.n_nodes:
                raise ConfigError(
                    "invalid_sampling_prob",
                    f"scheme {spec.label!r} has {vec.size} probabilities for {graph.n_nodes} nodes",
                )
    return {
        "valid": True,
        "n_nodes": graph.n_nodes,
        "n_train": int(split.train_idx.size),
        "eta": config.eta,
        "epsilon": config.epsilon,
        "hyper": {
            "sigma_w2": config.hyper.sigma_w2,
            "sigma_b2": config.hyper.sigma_b2,
            "n_layers": config.hyper.n_layers,
            "activation": config.hyper.activation,
        },
        "schemes": [spec.label for spec in config.schemes],
        "time_grid": list(config.time_grid),
        "seed": config.seed,
        "out_dir": config.out_dir,
        "resolved_config": config.raw,
    }
