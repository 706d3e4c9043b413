#!/usr/bin/env python3
"""Benchmark the MCCFR kernels: numba JIT vs the pure-Python fallback.

Runs the same seeded training workload in two subprocesses, one with
CLOCKAUCTION_NO_NUMBA=1, and reports iterations/second plus a digest of
the resulting tables (which must match bit for bit).

Usage: python benchmarks/bench_mccfr.py [--iterations N] [--types N]
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import textwrap

WORKLOAD = textwrap.dedent(
    """
    import hashlib
    import json
    import sys
    import time

    from clockauction.engine import ProcessingRule
    from clockauction.generate import generate_matched_instances
    from clockauction.harness import two_bidder_rules, two_bidder_sampling
    from clockauction.solver import SolverConfig, train
    from clockauction.tree import compile_game
    import clockauction._kernels as kernels

    iterations, num_types = int(sys.argv[1]), int(sys.argv[2])
    inst = generate_matched_instances(
        two_bidder_sampling(num_types, seed=1),
        [two_bidder_rules(ProcessingRule.DROP_BY_LICENSE)],
    )[0]
    cg = compile_game(inst)

    # Warm the JIT (or no-op under the fallback) outside the timed region.
    train(cg, SolverConfig(iterations=100, seed=0))

    start = time.monotonic()
    result = train(cg, SolverConfig(iterations=iterations, seed=42))
    elapsed = time.monotonic() - start

    cp = result.checkpoints[-1]
    digest = hashlib.sha256(
        cp.regrets.tobytes() + cp.strategy_sum.tobytes()
    ).hexdigest()
    print(json.dumps({
        "backend": "numba" if kernels.USE_NUMBA else "python",
        "infostates": cg.infostate_counts(),
        "nodes": cg.num_nodes,
        "iterations": iterations,
        "seconds": elapsed,
        "iters_per_second": iterations / elapsed,
        "digest": digest,
    }))
    """
)


def run_backend(no_numba: bool, iterations: int, types: int) -> dict:
    env = dict(os.environ)
    env["CLOCKAUCTION_NO_NUMBA"] = "1" if no_numba else "0"
    proc = subprocess.run(
        [sys.executable, "-c", WORKLOAD, str(iterations), str(types)],
        capture_output=True, text=True, env=env, check=True,
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--iterations", type=int, default=50_000,
                        help="iterations per timed run (pure Python is slow;"
                             " it gets iterations/50)")
    parser.add_argument("--types", type=int, default=3)
    args = parser.parse_args()

    fast = run_backend(False, args.iterations, args.types)
    slow = run_backend(True, max(args.iterations // 50, 500), args.types)

    print(f"game: {fast['infostates']} infostates, {fast['nodes']} nodes")
    for r in (fast, slow):
        print(f"  {r['backend']:>6}: {r['iters_per_second']:>12.0f} iters/s"
              f"  ({r['iterations']} iters in {r['seconds']:.2f}s)")
    speedup = fast["iters_per_second"] / slow["iters_per_second"]
    print(f"  speedup: {speedup:.1f}x")

    check_iters = max(args.iterations // 50, 500)
    a = run_backend(False, check_iters, args.types)
    b = run_backend(True, check_iters, args.types)
    same = a["digest"] == b["digest"]
    print(f"  table digests match at {check_iters} iters: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
