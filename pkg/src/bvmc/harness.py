"""Reference marginals, KL evaluation, and multi-run experiment
orchestration with confidence intervals and CSV reporting.

KL is aggregated as the mean over per-variable marginal divergences, with
the estimate smoothed additively (epsilon 1e-6, renormalized) so unvisited
values early in a run stay finite. Confidence intervals use the normal
approximation over repeats.
"""

from __future__ import annotations

import math
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping

from .model import (
    GraphicalModel,
    MarginalEstimate,
    ModelError,
    condition,
    exact_marginals,
    gen_job_search,
    gen_student_curriculum,
    parse_model,
)
from .mcmc import Chain, ChainConfig

KL_EPSILON = 1e-6
Z_95 = 1.959963984540054


def kl_divergence(
    reference: MarginalEstimate,
    estimate: MarginalEstimate,
    epsilon: float = KL_EPSILON,
) -> float:
    """Mean over variables of sum_v p_ref(v) ln(p_ref(v) / p_est(v)), with the
    estimate smoothed by an additive epsilon and renormalized."""
    if reference.names != estimate.names:
        raise ModelError("marginal estimates cover different variables")
    total = 0.0
    for p_row, q_row in zip(reference.probs, estimate.probs):
        if len(p_row) != len(q_row):
            raise ModelError("marginal row shapes differ")
        q_norm = sum(q_row) + epsilon * len(q_row)
        acc = 0.0
        for p, q in zip(p_row, q_row):
            if p > 0.0:
                acc += p * math.log(p * q_norm / (q + epsilon))
        total += acc
    return total / max(1, len(reference.probs))


def reference_marginals(
    model: GraphicalModel,
    evidence: Mapping[int, int] | None = None,
    mode: str = "exact",
    steps: int = 1_000_000,
    seed: int = 0,
    cap: int | None = None,
) -> MarginalEstimate:
    """Ground-truth marginals: exact enumeration, or a long plain-Gibbs run
    when the state space is out of enumeration reach."""
    evidence = dict(evidence or {})
    if mode == "exact":
        return exact_marginals(model, evidence, cap=cap)
    if mode != "long_gibbs":
        raise ModelError(f"unknown reference mode {mode!r}")
    reduced = condition(model, evidence) if evidence else model
    config = ChainConfig(kind="vanilla", steps=steps, burn_in=min(steps // 10, 10000), seed=seed)
    chain = Chain(reduced, config)
    snapshot = None
    for snapshot in chain.run():
        pass
    reduced_rows = dict(zip(snapshot.estimate.names, snapshot.estimate.probs))
    names, rows = [], []
    for v in model.variables:
        names.append(v.name)
        if v.id in evidence:
            row = [0.0] * v.domain_size
            row[evidence[v.id]] = 1.0
            rows.append(tuple(row))
        else:
            rows.append(reduced_rows[v.name])
    return MarginalEstimate(tuple(names), tuple(rows), snapshot.estimate.sample_count)


# ---------------------------------------------------------------------------
# Experiment specification


@dataclass(frozen=True)
class ChainSpec:
    name: str
    kind: str
    alpha: float = 1.0
    orbit_mode: str = "pra"
    n_chains: int = 3
    max_block: int = 2


@dataclass(frozen=True)
class ExperimentSpec:
    model: str  # "job-search", "student-curriculum", or a model file path
    configs: tuple[ChainSpec, ...]
    n: int = 5
    edge_prob: float = 1.0
    weight_low: float = 0.5
    weight_high: float = 2.5
    w3: float = 0.8
    friend_prob: float = 0.0
    weight_pool: tuple[float, ...] = (0.4, 0.9, 1.5, 2.2)
    w: float = 0.6
    evidence_fraction: float = 0.0
    partitions: str = "heuristic"  # or a partition candidate file path
    reference: str = "exact"
    reference_steps: int = 1_000_000
    n_repeats: int = 5
    seed: int = 0
    seeds: tuple[int, ...] = ()
    steps: int = 20_000
    burn_in: int = 1_000
    checkpoints: tuple[int, ...] = (5_000, 10_000, 20_000)
    thin: int = 1

    def __post_init__(self):
        if self.n_repeats < 1:
            raise ModelError("n_repeats must be >= 1")
        if list(self.checkpoints) != sorted(self.checkpoints) or not self.checkpoints:
            raise ModelError("checkpoints must be ascending and non-empty")
        if self.checkpoints[-1] > self.steps:
            raise ModelError("last checkpoint exceeds step budget")
        if not self.configs:
            raise ModelError("experiment needs at least one chain config")
        if self.seeds and len(self.seeds) != self.n_repeats:
            raise ModelError("explicit seed list length must equal n_repeats")


def build_experiment_model(spec: ExperimentSpec) -> GraphicalModel:
    if spec.model == "job-search":
        return gen_job_search(
            spec.n, spec.edge_prob, spec.weight_low, spec.weight_high, spec.w3, spec.seed
        )
    if spec.model == "student-curriculum":
        return gen_student_curriculum(
            spec.n, spec.friend_prob, spec.weight_pool, spec.w, spec.seed
        )
    with open(spec.model, encoding="utf-8") as fh:
        return parse_model(fh.read())


def draw_evidence(
    model: GraphicalModel, fraction: float, seed
) -> dict[int, int]:
    """Clamp floor(fraction * n) variables, chosen and valued uniformly."""
    count = int(fraction * model.n_vars)
    if count == 0:
        return {}
    rng = random.Random(seed)
    chosen = rng.sample(range(model.n_vars), count)
    return {v: rng.randrange(model.variables[v].domain_size) for v in sorted(chosen)}


# ---------------------------------------------------------------------------
# Running


@dataclass
class RunRecord:
    config: str
    repeat: int
    checkpoint: int
    elapsed_ms: float
    kl: float


@dataclass
class CurvePoint:
    checkpoint: int
    mean_elapsed_ms: float
    mean_kl: float
    ci_lo: float
    ci_hi: float


@dataclass
class KLCurve:
    config: str
    points: list[CurvePoint]

    def final(self) -> CurvePoint:
        return self.points[-1]


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    reference: MarginalEstimate
    curves: dict[str, KLCurve]
    records: list[RunRecord]
    stage_seconds: dict[str, float]


def _repeat_seed(spec: ExperimentSpec, repeat: int) -> str:
    if spec.seeds:
        return str(spec.seeds[repeat])
    return f"{spec.seed}:rep{repeat}"


def _run_single(args) -> list[RunRecord]:
    model, spec, chain_spec, repeat, reference, partitions = args
    seed = f"{_repeat_seed(spec, repeat)}:{chain_spec.name}"
    gcd = math.gcd(*spec.checkpoints)
    config = ChainConfig(
        kind=chain_spec.kind,
        alpha=chain_spec.alpha,
        steps=spec.checkpoints[-1],
        burn_in=spec.burn_in,
        seed=seed,
        orbit_mode=chain_spec.orbit_mode,
        report_every=gcd,
        thin=spec.thin,
        n_chains=chain_spec.n_chains,
        max_block=chain_spec.max_block,
    )
    wanted = set(spec.checkpoints)
    records = []
    chain = Chain(model, config, partitions)
    for snapshot in chain.run():
        if snapshot.step in wanted:
            records.append(
                RunRecord(
                    chain_spec.name,
                    repeat,
                    snapshot.step,
                    snapshot.elapsed_ms,
                    kl_divergence(reference, snapshot.estimate),
                )
            )
    return records


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> ExperimentResult:
    """Full protocol: build the model, clamp evidence, compute the reference,
    run every config for every repeat, and aggregate KL curves with 95%
    confidence intervals (normal approximation over repeats). Deterministic
    given the seed (or an explicit per-repeat seed list)."""
    stage_seconds: dict[str, float] = {}
    t_start = time.perf_counter()
    t0 = t_start
    base = build_experiment_model(spec)
    stage_seconds["generate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    evidence = draw_evidence(base, spec.evidence_fraction, f"{spec.seed}:evidence")
    model = condition(base, evidence) if evidence else base
    stage_seconds["condition"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    reference = reference_marginals(
        model,
        mode=spec.reference,
        steps=spec.reference_steps,
        seed=f"{spec.seed}:reference",
    )
    stage_seconds["reference"] = time.perf_counter() - t0

    partitions = None
    if spec.partitions != "heuristic":
        from .partition import parse_partition_set

        with open(spec.partitions, encoding="utf-8") as fh:
            partitions = parse_partition_set(fh.read(), model)

    tasks = [
        (model, spec, chain_spec, repeat, reference, partitions)
        for chain_spec in spec.configs
        for repeat in range(spec.n_repeats)
    ]
    t0 = time.perf_counter()
    records: list[RunRecord] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for chunk in pool.map(_run_single, tasks):
                records.extend(chunk)
    else:
        for task in tasks:
            records.extend(_run_single(task))
    stage_seconds["chains"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    curves = {}
    for chain_spec in spec.configs:
        points = []
        for checkpoint in spec.checkpoints:
            kls = [
                r.kl
                for r in records
                if r.config == chain_spec.name and r.checkpoint == checkpoint
            ]
            ms = [
                r.elapsed_ms
                for r in records
                if r.config == chain_spec.name and r.checkpoint == checkpoint
            ]
            mean = sum(kls) / len(kls)
            if len(kls) > 1:
                var = sum((k - mean) ** 2 for k in kls) / (len(kls) - 1)
                half = Z_95 * math.sqrt(var / len(kls))
            else:
                half = 0.0
            points.append(
                CurvePoint(checkpoint, sum(ms) / len(ms), mean, mean - half, mean + half)
            )
        curves[chain_spec.name] = KLCurve(chain_spec.name, points)
    stage_seconds["aggregate"] = time.perf_counter() - t0
    stage_seconds["total"] = time.perf_counter() - t_start
    return ExperimentResult(spec, reference, curves, records, stage_seconds)


# ---------------------------------------------------------------------------
# Text formats


def write_kl_csv(result: ExperimentResult) -> str:
    lines = ["config,checkpoint,axis,mean_kl,ci_lo,ci_hi"]
    for curve in result.curves.values():
        for p in curve.points:
            lines.append(
                f"{curve.config},{p.checkpoint},samples,{p.mean_kl!r},{p.ci_lo!r},{p.ci_hi!r}"
            )
        for p in curve.points:
            lines.append(
                f"{curve.config},{p.mean_elapsed_ms:.3f},ms,{p.mean_kl!r},{p.ci_lo!r},{p.ci_hi!r}"
            )
    return "\n".join(lines) + "\n"


def write_raw_csv(result: ExperimentResult) -> str:
    lines = ["config,repeat,checkpoint,elapsed_ms,kl"]
    for r in result.records:
        lines.append(
            f"{r.config},{r.repeat},{r.checkpoint},{r.elapsed_ms:.3f},{r.kl!r}"
        )
    return "\n".join(lines) + "\n"


_GLOBAL_KEYS = {
    "model": str,
    "partitions": str,
    "n": int,
    "edge_prob": float,
    "weight_low": float,
    "weight_high": float,
    "w3": float,
    "friend_prob": float,
    "w": float,
    "evidence_fraction": float,
    "reference": str,
    "reference_steps": int,
    "n_repeats": int,
    "seed": int,
    "steps": int,
    "burn_in": int,
    "thin": int,
}

_CONFIG_KEYS = {
    "name": str,
    "chain": str,
    "alpha": float,
    "orbit_mode": str,
    "k": int,
    "max_block": int,
}


def parse_experiment_spec(text: str) -> ExperimentSpec:
    """Line-oriented key=value format with one [config] section per chain."""
    globals_: dict = {}
    sections: list[dict] = []
    current = globals_
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[config]":
            sections.append({})
            current = sections[-1]
            continue
        if "=" not in line:
            raise ModelError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        in_config = current is not globals_
        if in_config:
            if key not in _CONFIG_KEYS:
                raise ModelError(f"line {lineno}: unknown config key {key!r}")
            current[key] = _CONFIG_KEYS[key](value)
        elif key in ("checkpoints", "weight_pool", "seeds"):
            current[key] = tuple(
                (float if key == "weight_pool" else int)(tok)
                for tok in value.replace(",", " ").split()
            )
        elif key in _GLOBAL_KEYS:
            current[key] = _GLOBAL_KEYS[key](value)
        else:
            raise ModelError(f"line {lineno}: unknown key {key!r}")

    configs = []
    for i, section in enumerate(sections):
        if "chain" not in section:
            raise ModelError(f"[config] section {i} missing 'chain'")
        kind = section.pop("chain")
        name = section.pop("name", f"{kind}-{i}")
        n_chains = section.pop("k", 3)
        configs.append(ChainSpec(name=name, kind=kind, n_chains=n_chains, **section))
    if "model" not in globals_:
        raise ModelError("experiment spec missing 'model'")
    return ExperimentSpec(configs=tuple(configs), **globals_)
