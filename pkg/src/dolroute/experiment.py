"""End-to-end routing experiment: world, data, training and evaluation.

One JSON-serializable :class:`ExperimentConfig` fixes the road map,
candidate routes, fleet and context distribution.  Every random stream is
derived from an explicit integer seed so reruns are bitwise identical.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .datagen import (
    DEFAULT_XI, ContextRanges, FleetTemplate, assemble_dataset, generate_contexts, rollout_raw_data,
    scenario_from_context, selection_plan,
)
from .greedy import Cardinality
from .predictor import Predictor, TrainConfig, select_routes
from .simulator import RoadGraph, evaluate_selection, generate_candidate_routes, grid_map, partition_graph, rollout
from .submodular import BasisFamily, CoverageObjective


@dataclass
class ExperimentConfig:
    grid_rows: int = 8
    grid_cols: int = 8
    spacing: float = 200.0
    n_routes: int = 15
    removal_fraction: float = 0.9
    route_seed: int = 0
    n_partitions: int = 9
    gammas: tuple = (0.001, 0.5, 1.0)
    n_uavs: int = 10
    n_select: int = 3
    n_samples: int = 500
    repeats: int = 5
    pair_budget: int = 30
    subset_budget: int = 30
    xi: float = DEFAULT_XI
    train_fraction: float = 0.8
    eval_repeats: int = 5
    fleet: FleetTemplate = field(default_factory=lambda: FleetTemplate(laps=1.5))
    contexts: dict = field(default_factory=lambda: {"cluster_spread": 150.0})
    train: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=3e-3, baseline="greedy"))
    two_stage_epochs: int = 200
    dol_epochs: int = 100

    def __post_init__(self):
        if self.n_routes < 1 or self.n_partitions < 1 or self.n_uavs < 1:
            raise ValueError("n_routes, n_partitions and n_uavs must be positive")
        if not 1 <= self.n_select <= self.n_routes:
            raise ValueError("n_select must lie in [1, n_routes]")
        if self.n_samples < 0 or self.repeats < 1 or self.eval_repeats < 1:
            raise ValueError("n_samples must be >= 0 and repeat counts >= 1")
        if not 0.0 <= self.removal_fraction < 1.0:
            raise ValueError("removal_fraction must lie in [0, 1)")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError("train_fraction must lie in (0, 1]")
        self.gammas = tuple(float(g) for g in self.gammas)

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["gammas"] = list(self.gammas)
        d["fleet"] = self.fleet.to_dict()
        d["train"] = self.train.to_dict()
        d["contexts"] = dict(self.contexts)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        d = dict(d)
        if "fleet" in d:
            d["fleet"] = FleetTemplate.from_dict(d["fleet"])
        if "train" in d:
            d["train"] = TrainConfig.from_dict(d["train"])
        return cls(**d)


@dataclass
class World:
    graph: RoadGraph
    routes: object
    partition: object
    objective: CoverageObjective
    system: Cardinality
    ranges: ContextRanges


def build_world(cfg: ExperimentConfig) -> World:
    g = grid_map(cfg.grid_rows, cfg.grid_cols, cfg.spacing)
    routes = generate_candidate_routes(g, cfg.n_routes, cfg.removal_fraction, np.random.default_rng(cfg.route_seed))
    part = partition_graph(g, cfg.n_partitions)
    obj = CoverageObjective(routes, part, BasisFamily(cfg.gammas))
    return World(g, routes, part, obj, Cardinality(cfg.n_select), ContextRanges.for_graph(g, **cfg.contexts))


def _streams(seed: int, n: int):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def generate_records(cfg: ExperimentConfig, world: World, seed: int):
    """Contexts, selection plan and raw rollout records for ``cfg.n_samples`` contexts."""
    s_ctx, s_plan, s_roll = _streams(seed, 3)
    zs = generate_contexts(cfg.n_samples, cfg.n_uavs, world.ranges, np.random.default_rng(s_ctx))
    plan = selection_plan(cfg.n_routes, cfg.n_select, np.random.default_rng(s_plan),
                          cfg.pair_budget, cfg.subset_budget)
    roll_seeds = _streams(s_roll, max(len(zs), 1))
    return [rollout_raw_data(z, plan, world.graph, world.routes, world.partition, cfg.fleet,
                             cfg.repeats, seed=roll_seeds[k], dim_w=int(np.prod(world.objective.shape)))
            for k, z in enumerate(zs)]


def build_dataset(cfg: ExperimentConfig, world: World, seed: int):
    """``(records, samples, train_idx, test_idx)``."""
    records = generate_records(cfg, world, seed)
    samples, tr, te = assemble_dataset(records, world.objective, cfg.xi, cfg.train_fraction, seed=seed)
    return records, samples, tr, te


def stack(samples, idx=None):
    idx = range(len(samples)) if idx is None else idx
    Z = np.array([samples[i].z for i in idx], dtype=float)
    W = np.array([samples[i].w for i in idx], dtype=float)
    return Z, W


class Evaluator:
    """Fresh mission rollouts for held-out contexts, shared by every method.

    All methods are scored on the same outcomes (common random numbers), so
    differences come from the route choices alone.
    """

    def __init__(self, cfg: ExperimentConfig, world: World, contexts, seed: int):
        self.world = world
        self.contexts = [np.asarray(z, dtype=float) for z in contexts]
        seeds = _streams(seed, max(len(self.contexts), 1) * cfg.eval_repeats)
        self.outcomes = []
        for k, z in enumerate(self.contexts):
            scn = scenario_from_context(z, world.graph, world.routes, world.partition, cfg.fleet)
            self.outcomes.append([rollout(scn, seeds[k * cfg.eval_repeats + j]) for j in range(cfg.eval_repeats)])

    def score(self, selections):
        """Per-context mean UAVs recharged for one selection per context."""
        return np.array([np.mean([evaluate_selection(sel, o, self.world.routes) for o in outs])
                         for sel, outs in zip(selections, self.outcomes)])

    def predictor_selections(self, predictor: Predictor):
        return [select_routes(predictor, z, self.world.objective, self.world.system) for z in self.contexts]

    def random_selections(self, seed: int):
        rng = np.random.default_rng(seed)
        n = len(self.world.routes)
        return [tuple(sorted(int(i) for i in rng.choice(n, self.world.system.limit, replace=False)))
                for _ in self.contexts]


def method_config(cfg: ExperimentConfig, method: str, seed: int, **overrides) -> TrainConfig:
    epochs = cfg.dol_epochs if method == "dol" else cfg.two_stage_epochs
    d = asdict(cfg.train)
    d.update(epochs=epochs, seed=seed)
    d.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**d)
