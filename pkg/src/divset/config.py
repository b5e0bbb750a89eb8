"""Experiment configuration: JSON schema, validation, and builders.

A config file fully determines an experiment: environment, diversity
objective, constraint strategy, trainer settings, sweep axes, seeds, and
an optional few-shot evaluation section. Parsing is strict: unknown keys,
missing keys, and out-of-range values raise ConfigError with the dotted
path of the offending entry, so a typo fails fast instead of silently
running the default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .diversity import DiversityConfig, DiversityKind, RewardScaling
from .envs import (
    Always,
    FeatureKind,
    GridSpec,
    Periodic,
    PerturbationKind,
    Schedule,
    build_chain,
    build_gridworld,
)
from .mdp import Criterion, TabularMdp
from .policy_set import MovingAverageConfig
from .strategies import StrategyConfig, StrategyKind
from .training import ExactTrainConfig, FtlMode, SampleTrainConfig

__all__ = [
    "ConfigError",
    "EnvironmentSettings",
    "TrainerSettings",
    "SweepSettings",
    "KShotMethod",
    "PerturbationSettings",
    "KShotSettings",
    "ExperimentConfig",
    "parse_config",
    "load_config",
]


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def _check_keys(path: str, d: dict, required: set[str], optional: set[str]) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object, got {type(d).__name__}")
    missing = required - d.keys()
    if missing:
        raise ConfigError(f"{path}: missing required key(s) {sorted(missing)}")
    unknown = d.keys() - required - optional
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")


def _number(path: str, value, lo=None, hi=None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    x = float(value)
    if lo is not None and x < lo:
        raise ConfigError(f"{path}: {x} is below the minimum {lo}")
    if hi is not None and x > hi:
        raise ConfigError(f"{path}: {x} is above the maximum {hi}")
    return x


def _integer(path: str, value, lo=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"{path}: {value} is below the minimum {lo}")
    return value


def _string(path: str, value, choices=None) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ConfigError(f"{path}: {value!r} is not one of {sorted(choices)}")
    return value


def _enum(path: str, value, enum_cls):
    name = _string(path, value, {e.value for e in enum_cls})
    return enum_cls(name)


def _cell(path: str, value) -> tuple[int, int]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    ):
        raise ConfigError(f"{path}: expected [row, col] integers, got {value!r}")
    return (value[0], value[1])


@dataclass(frozen=True)
class EnvironmentSettings:
    kind: str  # "gridworld" or "chain"
    grid: GridSpec | None = None
    chain_length: int = 2
    chain_end_reward: float = 0.0
    chain_feature_kind: FeatureKind = FeatureKind.XY_COORDINATES
    chain_discount: float = 0.99

    def build(self) -> tuple[TabularMdp, GridSpec | None]:
        if self.kind == "gridworld":
            assert self.grid is not None
            return build_gridworld(self.grid), self.grid
        mdp = build_chain(
            self.chain_length,
            self.chain_feature_kind,
            end_reward=self.chain_end_reward,
            discount=self.chain_discount,
        )
        return mdp, None


@dataclass(frozen=True)
class TrainerSettings:
    mode: str  # "exact" or "sampled"
    exact: ExactTrainConfig | None = None
    sampled: SampleTrainConfig | None = None

    def instantiate(self, seed: int) -> ExactTrainConfig | SampleTrainConfig:
        base = self.exact if self.mode == "exact" else self.sampled
        assert base is not None
        return dataclasses.replace(base, seed=seed)


@dataclass(frozen=True)
class SweepSettings:
    alpha: tuple[float, ...] | None = None
    set_size: tuple[int, ...] | None = None
    contact_distance: tuple[float, ...] | None = None
    c_e: tuple[float, ...] | None = None
    c_d: tuple[float, ...] | None = None


@dataclass(frozen=True)
class KShotMethod:
    name: str
    strategy: StrategyConfig
    set_size: int


@dataclass(frozen=True)
class PerturbationSettings:
    kind: PerturbationKind
    magnitudes: tuple[float, ...]
    schedule: Schedule


@dataclass(frozen=True)
class KShotSettings:
    methods: tuple[KShotMethod, ...]
    perturbations: tuple[PerturbationSettings, ...]
    k_select: int = 10
    n_eval: int = 40
    horizon: int = 200
    n_train_seeds: int = 5
    ci_level: float = 0.95
    bootstrap_resamples: int = 2000


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int
    output_dir: str
    seeds: tuple[int, ...]
    environment: EnvironmentSettings
    diversity: DiversityConfig
    strategy: StrategyConfig
    set_size: int
    trainer: TrainerSettings
    sweep: SweepSettings
    kshot: KShotSettings | None = None


def _parse_environment(d: dict) -> EnvironmentSettings:
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError("environment: missing required key(s) ['type']")
    kind = _string("environment.type", d["type"], {"gridworld", "chain"})
    if kind == "chain":
        _check_keys(
            "environment",
            d,
            {"type", "length"},
            {"end_reward", "feature_kind", "discount"},
        )
        return EnvironmentSettings(
            kind="chain",
            chain_length=_integer("environment.length", d["length"], lo=2),
            chain_end_reward=_number("environment.end_reward", d.get("end_reward", 0.0)),
            chain_feature_kind=_enum(
                "environment.feature_kind", d.get("feature_kind", "XYCoordinates"), FeatureKind
            ),
            chain_discount=_number("environment.discount", d.get("discount", 0.99), lo=0.0, hi=1.0),
        )
    _check_keys(
        "environment",
        d,
        {"type", "width", "height", "goals"},
        {"walls", "slip_prob", "feature_kind", "start", "discount", "base_reward"},
    )
    walls = d.get("walls", [])
    if not isinstance(walls, list):
        raise ConfigError("environment.walls: expected a list of [row, col] cells")
    goals = d["goals"]
    if not isinstance(goals, list) or not goals:
        raise ConfigError("environment.goals: expected a nonempty list of [row, col, value]")
    goal_cells = {}
    for i, entry in enumerate(goals):
        if not isinstance(entry, (list, tuple)) or len(entry) != 3:
            raise ConfigError(f"environment.goals[{i}]: expected [row, col, value], got {entry!r}")
        cell = _cell(f"environment.goals[{i}]", entry[:2])
        goal_cells[cell] = _number(f"environment.goals[{i}].value", entry[2])
    start = d.get("start")
    spec = GridSpec(
        width=_integer("environment.width", d["width"], lo=1),
        height=_integer("environment.height", d["height"], lo=1),
        walls=frozenset(_cell(f"environment.walls[{i}]", w) for i, w in enumerate(walls)),
        goal_cells=goal_cells,
        slip_prob=_number("environment.slip_prob", d.get("slip_prob", 0.0), lo=0.0, hi=1.0),
        feature_kind=_enum(
            "environment.feature_kind", d.get("feature_kind", "XYCoordinates"), FeatureKind
        ),
        start=None if start is None else _cell("environment.start", start),
        discount=_number("environment.discount", d.get("discount", 0.99), lo=0.0, hi=1.0),
        base_reward=_number("environment.base_reward", d.get("base_reward", 0.0), lo=0.0),
    )
    return EnvironmentSettings(kind="gridworld", grid=spec)


def _parse_diversity(d: dict) -> DiversityConfig:
    _check_keys(
        "diversity",
        d,
        {"kind"},
        {"contact_distance", "attractive_power", "repulsive_power", "attractive_coeff", "scaling"},
    )
    kind = _enum("diversity.kind", d["kind"], DiversityKind)
    try:
        return DiversityConfig(
            kind=kind,
            contact_distance=_number("diversity.contact_distance", d.get("contact_distance", 1.0)),
            attractive_power=_number("diversity.attractive_power", d.get("attractive_power", 3.0)),
            repulsive_power=_number("diversity.repulsive_power", d.get("repulsive_power", 0.0)),
            attractive_coeff=_number("diversity.attractive_coeff", d.get("attractive_coeff", 0.5)),
            scaling=_enum("diversity.scaling", d.get("scaling", "PaperExact"), RewardScaling),
        )
    except ValueError as exc:
        raise ConfigError(f"diversity: {exc}") from exc


def _parse_strategy(d: dict, path: str = "strategy") -> StrategyConfig:
    _check_keys(path, d, {"kind"}, {"alpha", "c_d", "c_e"})
    try:
        return StrategyConfig(
            kind=_enum(f"{path}.kind", d["kind"], StrategyKind),
            alpha=_number(f"{path}.alpha", d.get("alpha", 0.9), lo=0.0, hi=1.0),
            c_d=_number(f"{path}.c_d", d.get("c_d", 0.5), lo=0.0),
            c_e=_number(f"{path}.c_e", d.get("c_e", 0.7), lo=0.0, hi=1.0),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_moving_average(d: dict, path: str) -> MovingAverageConfig:
    return MovingAverageConfig(
        value_decay=_number(f"{path}.value_decay", d.get("value_decay", 0.9), lo=0.0, hi=1.0),
        feature_decay=_number(
            f"{path}.feature_decay", d.get("feature_decay", 0.99), lo=0.0, hi=1.0
        ),
    )


def _parse_trainer(d: dict) -> TrainerSettings:
    if not isinstance(d, dict) or "mode" not in d:
        raise ConfigError("trainer: missing required key(s) ['mode']")
    mode = _string("trainer.mode", d["mode"], {"exact", "sampled"})
    if mode == "exact":
        _check_keys(
            "trainer",
            d,
            {"mode"},
            {
                "outer_iterations",
                "criterion",
                "lagrange_lr",
                "ftl_mode",
                "value_decay",
                "feature_decay",
                "policy_init",
                "best_response_tol",
            },
        )
        cfg = ExactTrainConfig(
            outer_iterations=_integer("trainer.outer_iterations", d.get("outer_iterations", 200), lo=1),
            criterion=_enum("trainer.criterion", d.get("criterion", "average"), Criterion),
            lagrange_lr=_number("trainer.lagrange_lr", d.get("lagrange_lr", 1.0), lo=0.0),
            ftl_mode=_enum("trainer.ftl_mode", d.get("ftl_mode", "MovingAverage"), FtlMode),
            moving_average=_parse_moving_average(d, "trainer"),
            policy_init=_string("trainer.policy_init", d.get("policy_init", "random"), {"random", "uniform"}),
            best_response_tol=_number("trainer.best_response_tol", d.get("best_response_tol", 1e-9), lo=0.0),
        )
        return TrainerSettings(mode="exact", exact=cfg)
    _check_keys(
        "trainer",
        d,
        {"mode"},
        {
            "total_episodes",
            "episode_length",
            "policy_lr",
            "value_lr",
            "entropy_weight",
            "n_step",
            "lagrange_lr",
            "lagrange_optimizer",
            "value_decay",
            "feature_decay",
            "eval_every",
        },
    )
    cfg = SampleTrainConfig(
        total_episodes=_integer("trainer.total_episodes", d.get("total_episodes", 2000), lo=1),
        episode_length=_integer("trainer.episode_length", d.get("episode_length", 200), lo=1),
        policy_lr=_number("trainer.policy_lr", d.get("policy_lr", 0.5), lo=0.0),
        value_lr=_number("trainer.value_lr", d.get("value_lr", 0.2), lo=0.0),
        entropy_weight=_number("trainer.entropy_weight", d.get("entropy_weight", 0.01), lo=0.0),
        n_step=_integer("trainer.n_step", d.get("n_step", 5), lo=1),
        lagrange_lr=_number("trainer.lagrange_lr", d.get("lagrange_lr", 1e-3), lo=0.0),
        lagrange_optimizer=_string(
            "trainer.lagrange_optimizer", d.get("lagrange_optimizer", "adam"), {"adam", "sgd"}
        ),
        moving_average=_parse_moving_average(d, "trainer"),
        eval_every=_integer("trainer.eval_every", d.get("eval_every", 100), lo=1),
    )
    return TrainerSettings(mode="sampled", sampled=cfg)


def _parse_axis(path: str, value, parse_one) -> tuple | None:
    if value is None:
        return None
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a nonempty list")
    return tuple(parse_one(f"{path}[{i}]", v) for i, v in enumerate(value))


def _parse_sweep(d: dict) -> SweepSettings:
    _check_keys("sweep", d, set(), {"alpha", "set_size", "contact_distance", "c_e", "c_d"})
    return SweepSettings(
        alpha=_parse_axis("sweep.alpha", d.get("alpha"), lambda p, v: _number(p, v, lo=0.0, hi=1.0)),
        set_size=_parse_axis("sweep.set_size", d.get("set_size"), lambda p, v: _integer(p, v, lo=1)),
        contact_distance=_parse_axis(
            "sweep.contact_distance", d.get("contact_distance"), lambda p, v: _number(p, v)
        ),
        c_e=_parse_axis("sweep.c_e", d.get("c_e"), lambda p, v: _number(p, v, lo=0.0, hi=1.0)),
        c_d=_parse_axis("sweep.c_d", d.get("c_d"), lambda p, v: _number(p, v, lo=0.0)),
    )


def _parse_schedule(d: dict, path: str) -> Schedule:
    _check_keys(path, d, {"type"}, {"period", "duration", "start"})
    kind = _string(f"{path}.type", d["type"], {"Always", "Periodic"})
    if kind == "Always":
        return Always()
    try:
        return Periodic(
            period=_integer(f"{path}.period", d.get("period", 1), lo=1),
            duration=_integer(f"{path}.duration", d.get("duration", 1), lo=0),
            start=_integer(f"{path}.start", d.get("start", 0), lo=0),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_kshot(d: dict) -> KShotSettings:
    _check_keys(
        "kshot",
        d,
        {"methods", "perturbations"},
        {"k_select", "n_eval", "horizon", "n_train_seeds", "ci_level", "bootstrap_resamples"},
    )
    raw_methods = d["methods"]
    if not isinstance(raw_methods, list) or not raw_methods:
        raise ConfigError("kshot.methods: expected a nonempty list")
    methods = []
    for i, m in enumerate(raw_methods):
        path = f"kshot.methods[{i}]"
        _check_keys(path, m, {"name", "strategy", "set_size"}, set())
        methods.append(
            KShotMethod(
                name=_string(f"{path}.name", m["name"]),
                strategy=_parse_strategy(m["strategy"], f"{path}.strategy"),
                set_size=_integer(f"{path}.set_size", m["set_size"], lo=1),
            )
        )
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ConfigError("kshot.methods: method names must be unique")
    raw_perturbations = d["perturbations"]
    if not isinstance(raw_perturbations, list) or not raw_perturbations:
        raise ConfigError("kshot.perturbations: expected a nonempty list")
    perturbations = []
    for i, p in enumerate(raw_perturbations):
        path = f"kshot.perturbations[{i}]"
        _check_keys(path, p, {"kind", "magnitudes"}, {"schedule"})
        kind = _enum(f"{path}.kind", p["kind"], PerturbationKind)
        magnitudes = _parse_axis(f"{path}.magnitudes", p["magnitudes"], lambda q, v: _number(q, v))
        schedule = (
            _parse_schedule(p["schedule"], f"{path}.schedule") if "schedule" in p else Always()
        )
        perturbations.append(
            PerturbationSettings(kind=kind, magnitudes=magnitudes, schedule=schedule)
        )
    return KShotSettings(
        methods=tuple(methods),
        perturbations=tuple(perturbations),
        k_select=_integer("kshot.k_select", d.get("k_select", 10), lo=1),
        n_eval=_integer("kshot.n_eval", d.get("n_eval", 40), lo=1),
        horizon=_integer("kshot.horizon", d.get("horizon", 200), lo=1),
        n_train_seeds=_integer("kshot.n_train_seeds", d.get("n_train_seeds", 5), lo=1),
        ci_level=_number("kshot.ci_level", d.get("ci_level", 0.95), lo=0.0, hi=1.0),
        bootstrap_resamples=_integer("kshot.bootstrap_resamples", d.get("bootstrap_resamples", 2000), lo=1),
    )


def parse_config(d: dict) -> ExperimentConfig:
    _check_keys(
        "config",
        d,
        {"master_seed", "output_dir", "environment", "diversity", "strategy", "trainer"},
        {"seeds", "set_size", "sweep", "kshot"},
    )
    seeds = d.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("config.seeds: expected a nonempty list of integers")
    config = ExperimentConfig(
        master_seed=_integer("config.master_seed", d["master_seed"]),
        output_dir=_string("config.output_dir", d["output_dir"]),
        seeds=tuple(_integer(f"config.seeds[{i}]", s) for i, s in enumerate(seeds)),
        environment=_parse_environment(d["environment"]),
        diversity=_parse_diversity(d["diversity"]),
        strategy=_parse_strategy(d["strategy"]),
        set_size=_integer("config.set_size", d.get("set_size", 2), lo=1),
        trainer=_parse_trainer(d["trainer"]),
        sweep=_parse_sweep(d.get("sweep", {})),
        kshot=_parse_kshot(d["kshot"]) if "kshot" in d else None,
    )
    try:
        config.environment.build()
    except Exception as exc:
        raise ConfigError(f"environment: cannot build ({exc})") from exc
    return config


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: top level must be a JSON object")
    return parse_config(raw)
