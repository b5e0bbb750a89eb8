"""Experiment orchestration: sweeps, output files, and few-shot evaluation.

A sweep is the cross product of the configured axes (alpha, set size,
contact distance, c_e, c_d) with the seed list, enumerated in that order
with seeds innermost. Run k trains with seed hash64(master_seed, k):
a run's seed depends only on its position in the enumeration, so
rerunning the same config reproduces every output byte for byte.

Outputs under output_dir:
    qd.csv                 one row per run (row order = run order)
    traces/run_XXXXX.csv   per-iteration, per-policy training trace
    checkpoints/run_XXXXX.json   final policy set
    kshot.csv              few-shot evaluation rows (per-seed + aggregate)

Worker count for sweep runs comes from the DIVSET_WORKERS environment
variable (default 1); results are assembled in run order regardless.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import ConfigError, ExperimentConfig
from .envs import Always, Perturbation, UnreachableGoalError, perturb
from .kshot import KShotConfig, KShotResult, kshot_evaluate
from .policy_set import PolicySet, policy_set_to_json
from .seeding import hash64
from .strategies import StrategyConfig, StrategyKind
from .training import TrainTrace, train_exact, train_sampled

__all__ = [
    "WORKERS_ENV",
    "QD_COLUMNS",
    "TRACE_COLUMNS",
    "KSHOT_COLUMNS",
    "RunSpec",
    "enumerate_runs",
    "run_single",
    "run_experiment",
    "run_kshot",
]

WORKERS_ENV = "DIVSET_WORKERS"
BASELINE_METHOD = "baseline"
PERTURB_ATTEMPTS = 8

QD_COLUMNS = [
    "strategy",
    "alpha",
    "n",
    "l0",
    "seed",
    "extrinsic_value_mean",
    "extrinsic_value_per_policy",
    "diversity_score",
]
TRACE_COLUMNS = [
    "iteration",
    "policy",
    "extrinsic_value",
    "sigma_mu",
    "diversity_mean",
    "diversity_mean_exact",
    "objective_value",
]
KSHOT_COLUMNS = [
    "method",
    "strategy_params",
    "perturbation",
    "magnitude",
    "seed",
    "ratio",
    "abs_return",
    "baseline_return",
    "ci_low",
    "ci_high",
]


@dataclass(frozen=True)
class RunSpec:
    run_index: int
    alpha: float
    set_size: int
    contact_distance: float
    c_e: float
    c_d: float
    seed_label: int
    train_seed: int


def _axis(values, default) -> tuple:
    return tuple(values) if values is not None else (default,)


def enumerate_runs(config: ExperimentConfig) -> list[RunSpec]:
    axes = (
        _axis(config.sweep.alpha, config.strategy.alpha),
        _axis(config.sweep.set_size, config.set_size),
        _axis(config.sweep.contact_distance, config.diversity.contact_distance),
        _axis(config.sweep.c_e, config.strategy.c_e),
        _axis(config.sweep.c_d, config.strategy.c_d),
        config.seeds,
    )
    return [
        RunSpec(
            run_index=k,
            alpha=alpha,
            set_size=n,
            contact_distance=l0,
            c_e=c_e,
            c_d=c_d,
            seed_label=seed_label,
            train_seed=hash64(config.master_seed, k),
        )
        for k, (alpha, n, l0, c_e, c_d, seed_label) in enumerate(itertools.product(*axes))
    ]


def strategy_descriptor(cfg: StrategyConfig) -> str:
    if cfg.kind == StrategyKind.SMERL:
        return f"{cfg.kind.value}(c_d={cfg.c_d!r})"
    if cfg.kind == StrategyKind.REVERSE_SMERL:
        return f"{cfg.kind.value}(c_d={cfg.c_d!r})"
    if cfg.kind == StrategyKind.MULTI_OBJECTIVE:
        return f"{cfg.kind.value}(c_e={cfg.c_e!r})"
    return cfg.kind.value


def _train(config: ExperimentConfig, spec: RunSpec) -> tuple[PolicySet, TrainTrace]:
    mdp, _ = config.environment.build()
    dcfg = dataclasses.replace(config.diversity, contact_distance=spec.contact_distance)
    scfg = dataclasses.replace(
        config.strategy, alpha=spec.alpha, c_e=spec.c_e, c_d=spec.c_d
    )
    tcfg = config.trainer.instantiate(spec.train_seed)
    train = train_exact if config.trainer.mode == "exact" else train_sampled
    return train(mdp, spec.set_size, dcfg, scfg, tcfg)


def run_single(
    config: ExperimentConfig, spec: RunSpec
) -> tuple[list[str], list[list[str]], str]:
    """One sweep run: returns (qd row, trace rows, checkpoint JSON)."""
    pset, trace = _train(config, spec)
    final = trace.records[-1]
    scfg = dataclasses.replace(
        config.strategy, alpha=spec.alpha, c_e=spec.c_e, c_d=spec.c_d
    )
    qd_row = [
        strategy_descriptor(scfg),
        repr(float(spec.alpha)),
        str(spec.set_size),
        repr(float(spec.contact_distance)),
        str(spec.seed_label),
        repr(float(final.extrinsic_values.mean())),
        json.dumps([float(v) for v in final.extrinsic_values]),
        repr(float(final.diversity_mean)),
    ]
    trace_rows = []
    for rec in trace.records:
        for i in range(spec.set_size):
            trace_rows.append(
                [
                    str(rec.iteration),
                    str(i),
                    repr(float(rec.extrinsic_values[i])),
                    repr(float(rec.sigma_mu[i])),
                    repr(float(rec.diversity_mean)),
                    repr(float(rec.diversity_mean_exact)),
                    repr(float(rec.objective_value)),
                ]
            )
    return qd_row, trace_rows, policy_set_to_json(pset)


def _run_single_task(args: tuple) -> tuple[list[str], list[list[str]], str]:
    return run_single(*args)


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def run_experiment(config: ExperimentConfig) -> Path:
    """Run the full sweep and write qd.csv, traces, and checkpoints."""
    out = Path(config.output_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    specs = enumerate_runs(config)
    tasks = [(config, spec) for spec in specs]
    workers = _worker_count()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_single_task, tasks))
    else:
        results = [_run_single_task(t) for t in tasks]

    qd_rows = []
    for spec, (qd_row, trace_rows, ckpt) in zip(specs, results):
        qd_rows.append(qd_row)
        name = f"run_{spec.run_index:05d}"
        _write_csv(out / "traces" / f"{name}.csv", TRACE_COLUMNS, trace_rows)
        (out / "checkpoints" / f"{name}.json").write_text(ckpt)
    qd_path = out / "qd.csv"
    _write_csv(qd_path, QD_COLUMNS, qd_rows)
    return qd_path


def _perturbation_descriptor(p: Perturbation) -> str:
    if isinstance(p.schedule, Always):
        return p.kind.value
    s = p.schedule
    return f"{p.kind.value}@Periodic(period={s.period},duration={s.duration},start={s.start})"


def _perturb_with_retries(mdp, p: Perturbation, master_seed: int, tag: tuple, grid_spec):
    last_err = None
    for attempt in range(PERTURB_ATTEMPTS):
        try:
            return perturb(mdp, p, hash64(master_seed, "perturb", *tag, attempt), grid_spec=grid_spec)
        except UnreachableGoalError as exc:
            last_err = exc
    raise RuntimeError(
        f"{_perturbation_descriptor(p)} magnitude {p.magnitude} left no reachable "
        f"reward in {PERTURB_ATTEMPTS} attempts: {last_err}"
    )


def _kshot_rows(
    method: str, params: str, p: Perturbation, result: KShotResult
) -> list[list[str]]:
    rows = []
    desc = _perturbation_descriptor(p)
    mag = repr(float(p.magnitude))
    for t in range(len(result.per_seed_ratios)):
        rows.append(
            [
                method,
                params,
                desc,
                mag,
                str(t),
                repr(float(result.per_seed_ratios[t])),
                repr(float(result.per_seed_returns[t].mean())),
                repr(float(result.per_seed_baseline_returns[t].mean())),
                "",
                "",
            ]
        )
    rows.append(
        [
            method,
            params,
            desc,
            mag,
            "all",
            repr(float(result.ratio_mean)),
            repr(float(result.abs_return_mean)),
            repr(float(result.baseline_return_mean)),
            repr(float(result.ci_low)),
            repr(float(result.ci_high)),
        ]
    )
    return rows


def run_kshot(config: ExperimentConfig) -> Path:
    """Train per-method and baseline sets, evaluate under perturbations.

    Evaluation episode streams are derived without the method name, so
    every method (and the baseline against itself) sees identical
    environment randomness for a given perturbation.
    """
    if config.kshot is None:
        raise ConfigError("config has no kshot section")
    ks = config.kshot
    mdp, grid_spec = config.environment.build()
    kcfg = KShotConfig(
        k_select=ks.k_select,
        n_eval=ks.n_eval,
        horizon=ks.horizon,
        n_train_seeds=ks.n_train_seeds,
        ci_level=ks.ci_level,
        bootstrap_resamples=ks.bootstrap_resamples,
    )

    def train_set(strategy: StrategyConfig, set_size: int, seed: int) -> PolicySet:
        tcfg = config.trainer.instantiate(seed)
        train = train_exact if config.trainer.mode == "exact" else train_sampled
        pset, _ = train(mdp, set_size, config.diversity, strategy, tcfg)
        return pset

    baseline_strategy = StrategyConfig(kind=StrategyKind.NO_DIVERSITY)
    baselines = [
        train_set(baseline_strategy, 1, hash64(config.master_seed, "kshot-train", "baseline", t))
        for t in range(ks.n_train_seeds)
    ]
    sets_by_method = {
        m.name: [
            train_set(
                m.strategy,
                m.set_size,
                hash64(config.master_seed, "kshot-train", "method", m.name, t),
            )
            for t in range(ks.n_train_seeds)
        ]
        for m in ks.methods
    }

    rows: list[list[str]] = []
    for p_idx, ps in enumerate(ks.perturbations):
        for m_idx, magnitude in enumerate(ps.magnitudes):
            p = Perturbation(kind=ps.kind, magnitude=magnitude, schedule=ps.schedule)
            pmdp = _perturb_with_retries(
                mdp, p, config.master_seed, (p_idx, m_idx), grid_spec
            )
            eval_seed = hash64(config.master_seed, "kshot-eval", p_idx, m_idx)
            rows.extend(
                _kshot_rows(
                    BASELINE_METHOD,
                    strategy_descriptor(baseline_strategy),
                    p,
                    kshot_evaluate(baselines, pmdp, baselines, kcfg, eval_seed),
                )
            )
            for m in ks.methods:
                params = (
                    f"{strategy_descriptor(m.strategy)},"
                    f"alpha={m.strategy.alpha!r},n={m.set_size}"
                )
                result = kshot_evaluate(
                    sets_by_method[m.name], pmdp, baselines, kcfg, eval_seed
                )
                rows.extend(_kshot_rows(m.name, params, p, result))

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    kshot_path = out / "kshot.csv"
    _write_csv(kshot_path, KSHOT_COLUMNS, rows)
    return kshot_path
