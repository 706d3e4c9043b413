"""Hot numeric kernels for external-sampling MCCFR.

Compiled with numba when available; setting ``CLOCKAUCTION_NO_NUMBA=1``
(or running without numba installed) selects a pure-Python fallback that
executes the very same function bodies, so both paths produce bit-identical
tables.  ``benchmarks/bench_mccfr.py`` compares the two.

Randomness is a hand-rolled splitmix64 stream carried in a 1-element
uint64 array, giving identical draws under both backends.
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("CLOCKAUCTION_NO_NUMBA", "") not in ("1", "true", "yes")
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if not USE_NUMBA:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_DOUBLE_SCALE = 1.0 / 9007199254740992.0  # 2**-53

# NOTE: cache=True is unusable here: reloading a cached build of the
# recursive _es_traverse dispatcher segfaults (observed with numba 0.66).
# Each process pays a few seconds of JIT compilation instead.


@njit(cache=False)
def rng_uniform(state):
    """splitmix64 step -> float64 uniform in [0, 1)."""
    state[0] = state[0] + _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return np.float64(z >> np.uint64(11)) * _DOUBLE_SCALE


@njit(cache=False)
def regret_matching(regrets, offset, n, out):
    """Current strategy: positive regrets normalized, else uniform."""
    total = 0.0
    for a in range(n):
        r = regrets[offset + a]
        if r > 0.0:
            total += r
    if total > 0.0:
        for a in range(n):
            r = regrets[offset + a]
            out[a] = r / total if r > 0.0 else 0.0
    else:
        u = 1.0 / n
        for a in range(n):
            out[a] = u
    return out


@njit(cache=False)
def _sample_index(probs, n, rng_state):
    u = rng_uniform(rng_state)
    acc = 0.0
    for i in range(n):
        acc += probs[i]
        if u < acc:
            return i
    return n - 1


@njit(cache=False)
def _es_traverse(node, updating, my_reach, weight,
                 kind, player, infoset, child_start, child_count,
                 child_node, child_prob, util,
                 inf_offset, regrets, strat_sum, visits,
                 tremble, rm_plus, rng_state):
    """One external-sampling pass below `node` for `updating`.

    Explores every action at the updating player's nodes (accumulating
    counterfactual regrets and reach-weighted strategy sums); samples one
    action at opponents' nodes (epsilon-uniform trembling) and one outcome
    at chance nodes.  Contributions are scaled by `weight` (linear CFR).
    """
    k = kind[node]
    if k == 2:  # terminal
        return util[node, updating]
    start = child_start[node]
    n = child_count[node]
    if k == 1:  # chance
        i = _sample_index(child_prob[start:start + n], n, rng_state)
        return _es_traverse(child_node[start + i], updating, my_reach, weight,
                            kind, player, infoset, child_start, child_count,
                            child_node, child_prob, util,
                            inf_offset, regrets, strat_sum, visits,
                            tremble, rm_plus, rng_state)
    sid = infoset[node]
    offset = inf_offset[sid]
    sigma = np.empty(n)
    regret_matching(regrets, offset, n, sigma)
    if player[node] == updating:
        visits[sid] += 1
        vals = np.empty(n)
        v = 0.0
        for a in range(n):
            vals[a] = _es_traverse(child_node[start + a], updating,
                                   my_reach * sigma[a], weight,
                                   kind, player, infoset, child_start,
                                   child_count, child_node, child_prob, util,
                                   inf_offset, regrets, strat_sum, visits,
                                   tremble, rm_plus, rng_state)
            v += sigma[a] * vals[a]
        for a in range(n):
            r = regrets[offset + a] + weight * (vals[a] - v)
            if rm_plus and r < 0.0:
                r = 0.0
            regrets[offset + a] = r
            strat_sum[offset + a] += weight * my_reach * sigma[a]
        return v
    # Opponent: sample, with probability `tremble` uniformly at random.
    if tremble > 0.0 and rng_uniform(rng_state) < tremble:
        a = int(rng_uniform(rng_state) * n)
        if a >= n:
            a = n - 1
    else:
        a = _sample_index(sigma, n, rng_state)
    return _es_traverse(child_node[start + a], updating, my_reach, weight,
                        kind, player, infoset, child_start, child_count,
                        child_node, child_prob, util,
                        inf_offset, regrets, strat_sum, visits,
                        tremble, rm_plus, rng_state)


@njit(cache=False)
def run_iterations(first_t, last_t, num_players,
                   kind, player, infoset, child_start, child_count,
                   child_node, child_prob, util,
                   inf_offset, regrets, strat_sum, visits,
                   tremble, rm_plus, linear, rng_state):
    """Iterations first_t..last_t inclusive, round-robin over players."""
    for t in range(first_t, last_t + 1):
        updating = (t - 1) % num_players
        weight = float(t) if linear else 1.0
        _es_traverse(0, updating, 1.0, weight,
                     kind, player, infoset, child_start, child_count,
                     child_node, child_prob, util,
                     inf_offset, regrets, strat_sum, visits,
                     tremble, rm_plus, rng_state)
