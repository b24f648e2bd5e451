"""Command-line surface: generate benchmark models, propose partitions,
compute symmetries, run chains, and evaluate KL convergence.

Exit codes: 0 success, 1 usage error, 2 runtime error. All randomness flows
from --seed; the BVMC_STATE_CAP environment variable overrides enumeration
caps.
"""

from __future__ import annotations

import argparse
import sys

from . import harness, mcmc, model as model_mod, partition as partition_mod, symmetry


class UsageError(SystemExit):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"bvmc: usage error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load_model(path: str) -> model_mod.GraphicalModel:
    return model_mod.parse_model(_read(path))


def _load_evidence(path: str | None, model):
    if path is None:
        return {}
    return model_mod.parse_evidence(_read(path), model)


def _resolve_partitions(args, model) -> list[partition_mod.BlockPartition]:
    if getattr(args, "singleton_partition", False):
        return [partition_mod.singleton_partition(model)]
    if getattr(args, "partitions", None):
        return partition_mod.parse_partition_set(_read(args.partitions), model)
    count = getattr(args, "k", None) or getattr(args, "count", 1)
    return partition_mod.generate_block_partitions(
        model, args.max_block, count, seed=args.seed
    )


def cmd_gen(args) -> int:
    if args.domain == "job-search":
        m = model_mod.gen_job_search(
            args.n, args.edge_prob, args.weight_low, args.weight_high, args.w3, args.seed
        )
    else:
        pool = [float(tok) for tok in args.weight_pool.replace(",", " ").split()]
        m = model_mod.gen_student_curriculum(
            args.n, args.friend_prob, pool, args.w, args.seed
        )
    _write(args.output, model_mod.serialize_model(m))
    return 0


def cmd_partitions(args) -> int:
    m = _load_model(args.model)
    parts = partition_mod.generate_block_partitions(
        m, args.max_block, args.count, seed=args.seed
    )
    _write(args.output, partition_mod.serialize_partition_set(m, parts))
    return 0


def cmd_symmetries(args) -> int:
    m = _load_model(args.model)
    clausal = partition_mod.normalize_if_needed(m)
    parts = _resolve_partitions(args, m)
    sections = []
    for part in parts:
        bvs = partition_mod.BlockValueSet(m, part)
        g = symmetry.build_bv_graph(clausal, part)
        if args.export_graph:
            _write(args.export_graph, symmetry.export_colored_graph(g))
        gens = symmetry.find_automorphism_generators(g, args.budget)
        syms = symmetry.extract_bv_symmetries(g, gens, bvs)
        digest = partition_mod.partition_hash(m, part)
        sections.append(symmetry.serialize_symmetries(digest, syms))
    _write(args.output, "".join(sections))
    return 0


def cmd_exact(args) -> int:
    m = _load_model(args.model)
    evidence = _load_evidence(args.evidence, m)
    est = model_mod.exact_marginals(m, evidence, cap=args.cap)
    _write(args.output, est.serialize())
    return 0


def cmd_run(args) -> int:
    m = _load_model(args.model)
    evidence = _load_evidence(args.evidence, m)
    if evidence:
        m = model_mod.condition(m, evidence)
    config = mcmc.ChainConfig(
        kind=args.chain,
        alpha=args.alpha,
        steps=args.steps,
        burn_in=args.burn_in,
        seed=args.seed,
        orbit_mode=args.orbit_mode,
        report_every=args.report_every,
        thin=args.thin,
        n_chains=args.k,
        max_block=args.max_block,
    )
    partitions = None
    if args.chain in ("bv", "aggregate"):
        partitions = _resolve_partitions(args, m)
    chain = mcmc.Chain(m, config, partitions)
    hashes = ",".join(
        partition_mod.partition_hash(m, p) for p in chain.partitions
    )
    lines = [
        f"# chain={args.chain}",
        f"# alpha={args.alpha!r}",
        f"# seed={args.seed}",
        f"# partitions={hashes or 'none'}",
        "step,elapsed_ms,var,value,prob",
    ]
    for snap in chain.run():
        for name, row in zip(snap.estimate.names, snap.estimate.probs):
            for value, prob in enumerate(row):
                lines.append(
                    f"{snap.step},{snap.elapsed_ms:.3f},{name},{value},{prob!r}"
                )
    _write(args.output, "\n".join(lines) + "\n")
    return 0


def cmd_eval(args) -> int:
    spec = harness.parse_experiment_spec(_read(args.spec))
    result = harness.run_experiment(spec, jobs=args.jobs)
    _write(args.output, harness.write_kl_csv(result))
    if args.raw:
        _write(args.raw, harness.write_raw_csv(result))
    return 0


def cmd_orbit(args) -> int:
    from .group import orbit_enumerate

    m = _load_model(args.model)
    parts = _resolve_partitions(args, m)
    state = _parse_state(args.state, m)
    groups = mcmc.build_groups(m, parts)
    merged: set = {tuple(state)}
    for grp in groups:
        for s in list(merged):
            merged |= orbit_enumerate(grp, s, cap=args.cap)
    for s in sorted(merged):
        print(" ".join(f"{v.name}={x}" for v, x in zip(m.variables, s)))
    return 0


def _parse_state(text: str, m) -> list[int]:
    state = [None] * m.n_vars
    for token in text.replace(",", " ").split():
        name, value = token.rsplit("=", 1)
        state[m.var_id(name)] = int(value)
    if any(x is None for x in state):
        missing = [v.name for v, x in zip(m.variables, state) if x is None]
        raise model_mod.ModelError(f"state missing variables: {', '.join(missing)}")
    m.check_state(state)
    return state


def _add_partition_source(p, with_count=False):
    p.add_argument("--partitions", help="partition candidate file")
    p.add_argument(
        "--singleton-partition", action="store_true", help="one block per variable"
    )
    p.add_argument("--max-block", type=int, default=2, help="heuristic block size cap")
    if with_count:
        p.add_argument("--count", type=int, default=1, help="heuristic partitions to draw")


def build_parser() -> Parser:
    parser = Parser(
        prog="bvmc",
        description="Block-value symmetry detection and orbital MCMC inference.",
        epilog="BVMC_STATE_CAP overrides the exact-enumeration state cap.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a benchmark model")
    p.add_argument("--domain", required=True, choices=("job-search", "student-curriculum"))
    p.add_argument("--n", type=int, required=True, help="number of objects")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--edge-prob", type=float, default=1.0)
    p.add_argument("--weight-low", type=float, default=0.5)
    p.add_argument("--weight-high", type=float, default=2.5)
    p.add_argument("--w3", type=float, default=0.8)
    p.add_argument("--friend-prob", type=float, default=0.0)
    p.add_argument("--weight-pool", default="0.4 0.9 1.5 2.2")
    p.add_argument("--w", type=float, default=0.6)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("partitions", help="propose candidate block partitions")
    p.add_argument("--model", required=True)
    p.add_argument("--max-block", type=int, default=2)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_partitions)

    p = sub.add_parser("symmetries", help="compute block-value symmetry generators")
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, help="node-expansion budget for the search")
    p.add_argument("--export-graph", help="also write the colored graph to this path")
    _add_partition_source(p, with_count=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_symmetries)

    p = sub.add_parser("exact", help="exact marginals by enumeration")
    p.add_argument("--model", required=True)
    p.add_argument("--evidence")
    p.add_argument("--cap", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("run", help="run one chain and write marginal snapshots")
    p.add_argument("--model", required=True)
    p.add_argument("--chain", default="vanilla", choices=mcmc.CHAIN_KINDS)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=10000)
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--orbit-mode", default="pra", choices=("pra", "exact"))
    p.add_argument("--report-every", type=int)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--k", type=int, default=3, help="aggregate sub-chain count")
    p.add_argument("--evidence")
    _add_partition_source(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="run a multi-repeat experiment, write kl.csv")
    p.add_argument("--spec", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--raw", help="also write per-repeat records to this path")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("orbit", help="enumerate the orbit of a state (debug)")
    p.add_argument("--model", required=True)
    p.add_argument("--state", required=True, help="full assignment, e.g. 'A=1,B=0'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=1 << 16)
    _add_partition_source(p, with_count=True)
    p.set_defaults(func=cmd_orbit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code or 0
    try:
        return args.func(args)
    except (BrokenPipeError, KeyboardInterrupt):
        return 2
    except Exception as exc:  # noqa: BLE001 - single stable error surface
        print(f"bvmc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
