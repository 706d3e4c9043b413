"""Command-line interface.

Subcommands: gen (sample instances), solve (train MCCFR), eval (NashConv),
sim (episode metrics), report (merge runs into the family CSV), ablate
(the 2x2 shaping/trembling grid with per-checkpoint NashConv).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import verifier
from .engine import ProcessingRule
from .game import GameInstance
from .generate import GenerationError, generate_matched_instances
from .harness import (
    CSV_SCHEMA_VERSION,
    MetricsSummary,
    default_output_root,
    run_record_to_row,
    simulate,
    straightforward_policy,
    three_bidder_rules,
    three_bidder_sampling,
    tiny_rules,
    tiny_sampling,
    two_bidder_rules,
    two_bidder_sampling,
    write_family_csv,
)
from .policy import Policy, modal_policy
from .solver import SolverConfig, save_checkpoint, train
from .tree import compile_game

FAMILIES = {
    "2p": (two_bidder_rules, two_bidder_sampling),
    "3p": (three_bidder_rules, three_bidder_sampling),
    "tiny": (tiny_rules, tiny_sampling),
}


class CliError(RuntimeError):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _rule_variants(rule: str) -> list[ProcessingRule]:
    if rule == "both":
        return [ProcessingRule.DROP_BY_BIDDER, ProcessingRule.DROP_BY_LICENSE]
    return [ProcessingRule(rule)]


def _parse_budget(budget: str) -> dict:
    """'30000' means iterations; '120s' means wall-clock seconds."""
    if budget.endswith("s"):
        return {"iterations": None, "seconds": float(budget[:-1])}
    return {"iterations": int(budget), "seconds": None}


def _load_instance(path: str) -> GameInstance:
    p = Path(path)
    if not p.exists():
        raise CliError(f"instance file not found: {path}", code=2)
    return GameInstance.load(p)


def _load_policy(path: str, cg) -> Policy:
    if path == "straightforward":
        return straightforward_policy(cg)
    p = Path(path)
    if not p.exists():
        raise CliError(f"policy file not found: {path}", code=2)
    return Policy.load(p)


def cmd_gen(args) -> dict:
    rules_fn, sampling_fn = FAMILIES[args.family]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = [rules_fn(rule) for rule in _rule_variants(args.rule)]
    written = []
    for k in range(args.samples):
        config = sampling_fn(num_types=args.types, seed=args.seed + k)
        try:
            instances = generate_matched_instances(config, variants)
        except GenerationError as exc:
            raise CliError(
                f"generation failed for sample {k}: {exc} (stats: {exc.stats})"
            )
        for inst in instances:
            path = out / f"{inst.instance_id}.json"
            inst.save(path)
            written.append(str(path))
    return {"instances": written}


def cmd_solve(args) -> dict:
    instance = _load_instance(args.instance)
    cg = compile_game(instance)
    config = SolverConfig(
        seed=args.seed,
        tremble_epsilon=0.0 if args.no_trembling else args.tremble,
        penalty_enabled=not args.no_penalties,
        num_checkpoints=args.checkpoints,
        **_parse_budget(args.budget),
    )
    result = train(cg, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    avg = result.average_policy
    modal = modal_policy(avg)
    avg.save(out / "avg_policy.json")
    modal.save(out / "modal_policy.json")
    for cp in result.checkpoints:
        save_checkpoint(out / f"checkpoint_{cp.iteration:09d}.json", cg, cp)
    meta = {
        "instance_id": instance.instance_id,
        "seed": args.seed,
        "iterations": result.iterations_run,
        "wall_clock_s": result.wall_clock_s,
        "entropy_bits": verifier.policy_entropy(avg),
        "infostates_per_player": cg.infostate_counts(),
    }
    with open(out / "solve_meta.json", "w") as f:
        json.dump(meta, f, indent=1)
    return meta


def cmd_eval(args) -> dict:
    instance = _load_instance(args.instance)
    cg = compile_game(instance)
    policy = _load_policy(args.policy, cg)
    report = verifier.nashconv(cg, policy, time_limit_s=args.budget_seconds)
    d = report.to_json_dict()
    d["instance_id"] = instance.instance_id
    d["policy"] = args.policy
    d["threshold"] = args.threshold
    d["converged"] = report.nashconv <= args.threshold
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as f:
            json.dump(d, f, indent=1)
    return d


def cmd_sim(args) -> dict:
    instance = _load_instance(args.instance)
    cg = compile_game(instance)
    policy = _load_policy(args.policy, cg)
    algorithm = (
        "straightforward" if args.policy == "straightforward" else args.algorithm
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    episode_log: list = []
    metrics = simulate(instance, policy, args.episodes, seed=args.seed,
                       algorithm=algorithm, episode_log=episode_log)
    d = metrics.to_json_dict()
    d["instance_id"] = instance.instance_id
    with open(out / "metrics.json", "w") as f:
        json.dump(d, f, indent=1)
    with open(out / "episodes.jsonl", "w") as f:
        for rec in episode_log:
            f.write(json.dumps(rec) + "\n")
    return d


def cmd_report(args) -> dict:
    runs = Path(args.runs)
    if not runs.is_dir():
        raise CliError(f"run directory not found: {args.runs}", code=2)
    rows = []
    for path in sorted(runs.rglob("*.json")):
        with open(path) as f:
            try:
                record = json.load(f)
            except json.JSONDecodeError:
                continue
        if "metrics" in record and "nashconv" in record:
            rows.append(run_record_to_row(record))
        elif "revenue" in record and "algorithm" in record:
            rows.append({
                "schema_version": CSV_SCHEMA_VERSION,
                "instance_id": record.get("instance_id", ""),
                "rule": record["rule"],
                "num_types": record["num_types"],
                "seed": record["seed"],
                "algorithm": record["algorithm"],
                "nashconv": record.get("nashconv", ""),
                "revenue": record["revenue"],
                "welfare": record["welfare"],
                "rounds": record["rounds"],
                "rounds_total": record["rounds_total"],
                "unsold": record["unsold"],
                "lotteries": record["lotteries"],
                "excluded": _excluded(record.get("nashconv"), args.threshold),
            })
    write_family_csv(args.out, rows)
    return {"rows": len(rows), "csv": args.out}


def _excluded(nashconv, threshold) -> bool:
    if nashconv is None:
        return False
    return float(nashconv) > threshold


def cmd_ablate(args) -> dict:
    """Train every (secondary rewards x trembling) variant and track NashConv
    at each checkpoint."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for path in args.instances:
        instance = _load_instance(path)
        cg = compile_game(instance)
        for seed in range(args.seeds):
            for penalties in (True, False):
                for trembling in (True, False):
                    config = SolverConfig(
                        seed=args.seed + seed,
                        penalty_enabled=penalties,
                        tremble_epsilon=args.tremble if trembling else 0.0,
                        num_checkpoints=args.checkpoints,
                        **_parse_budget(args.budget),
                    )
                    result = train(cg, config)
                    checkpoints = []
                    for cp in result.checkpoints:
                        pol = modal_policy(result.policy_at(cg, cp))
                        rep = verifier.nashconv(cg, pol)
                        checkpoints.append({
                            "iteration": cp.iteration,
                            "nashconv": rep.nashconv,
                            "entropy_bits": verifier.policy_entropy(
                                result.policy_at(cg, cp)
                            ),
                        })
                    records.append({
                        "instance_id": instance.instance_id,
                        "seed": args.seed + seed,
                        "secondary_rewards": penalties,
                        "trembling": trembling,
                        "checkpoints": checkpoints,
                    })
    with open(out / "ablation.json", "w") as f:
        json.dump({"schema_version": 1, "records": records}, f, indent=1)
    return {"records": len(records), "out": str(out / "ablation.json")}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clockauction",
        description="Clock auction games: generation, MCCFR, verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample game instances")
    p.add_argument("--family", choices=sorted(FAMILIES), default="2p")
    p.add_argument("--types", type=int, default=1)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--rule", default="both",
                   choices=["both", "drop_by_bidder", "drop_by_license"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=str(default_output_root() / "instances"))
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("solve", help="train MCCFR on an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--budget", default="100000",
                   help="iterations, or wall-clock like '120s'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tremble", type=float, default=0.01)
    p.add_argument("--no-trembling", action="store_true")
    p.add_argument("--no-penalties", action="store_true",
                   help="train without per-round secondary rewards")
    p.add_argument("--checkpoints", type=int, default=6)
    p.add_argument("--out", default=str(default_output_root() / "solve"))
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("eval", help="exact NashConv of a policy")
    p.add_argument("--instance", required=True)
    p.add_argument("--policy", required=True,
                   help="policy JSON path, or 'straightforward'")
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--budget-seconds", type=float, default=3600.0,
                   help="per-player best-response time limit")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sim", help="simulate episodes under a policy")
    p.add_argument("--instance", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--algorithm", default="mccfr",
                   help="algorithm tag recorded in the metrics")
    p.add_argument("--out", default=str(default_output_root() / "sim"))
    p.set_defaults(fn=cmd_sim)

    p = sub.add_parser("report", help="merge run records into the family CSV")
    p.add_argument("--runs", required=True)
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--out", default=str(default_output_root() / "family.csv"))
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("ablate",
                       help="2x2 grid over secondary rewards and trembling")
    p.add_argument("--instances", nargs="+", required=True)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", default="30000")
    p.add_argument("--tremble", type=float, default=0.01)
    p.add_argument("--checkpoints", type=int, default=6)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--out", default=str(default_output_root() / "ablation"))
    p.set_defaults(fn=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.fn(args)
    except CliError as exc:
        json.dump({"error": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return exc.code
    except Exception as exc:  # surface a machine-readable failure
        json.dump({"error": f"{type(exc).__name__}: {exc}"}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    json.dump(result, sys.stdout, indent=1)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
