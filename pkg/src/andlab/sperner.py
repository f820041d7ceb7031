"""Witnessed antichain relaxations and the generalized Sperner bound.

A family ``A`` of subsets of {1..n} is rho-Sperner when every member
``A`` owns a witness ``B(A)`` disjoint from ``A`` with
``|B(A)| >= rho * (n - |A|)`` such that no superset of ``A`` in the
family meets ``B(A)``.  Classical antichains are the rho = 1 case with
``B(A)`` the complement.  The headline counting bound is

    |A| <= 2^n * n^(-1/2) / rho,

and the proof's engine is the permutation-chain statistic: for a uniform
random permutation, the number of prefix sets landing in the family has
tail P[count >= j + 1] <= (1 - rho)^j.

Subsets are bitmasks over a ground set of size n <= 24; exhaustive
operations carry tighter caps.  Witness synthesis is exact: the largest
admissible witness for ``A`` is the complement of the union of its
supersets inside the family, so a family admits a witness iff that
complement is large enough for every member.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Optional, Sequence

import numpy as np

from .util import csv_bytes, wilson_interval


class SearchBudgetError(RuntimeError):
    """The exact family search exceeded its node budget."""


def popcount(x: int) -> int:
    return bin(x).count("1")


@dataclass(frozen=True)
class SetFamily:
    n: int
    members: tuple[int, ...]
    witness: Optional[dict[int, int]] = None

    def __post_init__(self):
        if not (1 <= self.n <= 24):
            raise ValueError("ground set size must be in 1..24")
        full = (1 << self.n) - 1
        mem = tuple(self.members)
        if len(set(mem)) != len(mem):
            raise ValueError("family members must be distinct")
        for a in mem:
            if a & ~full:
                raise ValueError(f"member {a:#x} exceeds the ground set")
        object.__setattr__(self, "members", mem)
        if self.witness is not None:
            w = dict(self.witness)
            for a, b in w.items():
                if a not in mem:
                    raise ValueError("witness key is not a member")
                if a & b:
                    raise ValueError("witness must be disjoint from its member")
                if b & ~full:
                    raise ValueError("witness exceeds the ground set")
            object.__setattr__(self, "witness", w)

    def __len__(self) -> int:
        return len(self.members)

    @staticmethod
    def from_sets(n: int, sets: Sequence[Sequence[int]], witness=None) -> "SetFamily":
        def mask(s):
            m = 0
            for e in s:
                if not (1 <= e <= n):
                    raise ValueError("elements must lie in 1..n")
                m |= 1 << (e - 1)
            return m
        members = tuple(mask(s) for s in sets)
        w = {mask(a): mask(b) for a, b in witness.items()} if witness else None
        return SetFamily(n, members, w)

    def complement_witness(self) -> "SetFamily":
        full = (1 << self.n) - 1
        return SetFamily(self.n, self.members, {a: full & ~a for a in self.members})

    def to_json_dict(self) -> dict:
        doc = {"n": self.n, "members": list(self.members)}
        if self.witness is not None:
            doc["witness"] = {str(a): b for a, b in sorted(self.witness.items())}
        return doc


def is_rho_sperner(fam: SetFamily, rho: float) -> bool:
    """Validate the supplied witness map against the definition."""
    if fam.witness is None:
        raise ValueError("family carries no witness map")
    if not (0.0 < rho <= 1.0):
        raise ValueError("rho must lie in (0, 1]")
    members = set(fam.members)
    for a in fam.members:
        b = fam.witness[a]
        if popcount(b) < rho * (fam.n - popcount(a)):
            return False
        for ap in members:
            if ap & a == a and ap & b:
                return False
    return True


def sperner_bound(n: int, rho: float) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (0.0 < rho <= 1.0):
        raise ValueError("rho must lie in (0, 1]")
    return 2.0 ** n / math.sqrt(n) / rho


def synthesize_witness(n: int, members: Sequence[int], rho: float) -> Optional[dict[int, int]]:
    """Largest-candidate witness: B(A) = complement of the union of the
    supersets of A inside the family; None when some member falls short."""
    full = (1 << n) - 1
    out = {}
    for a in members:
        union = a
        for ap in members:
            if ap & a == a:
                union |= ap
        b = full & ~union
        if popcount(b) < rho * (n - popcount(a)):
            return None
        out[a] = b
    return out


def _upset_union_feasible(n: int, chosen_by_level: dict, a: int, rho: float) -> bool:
    union = a
    pa = popcount(a)
    for k, bucket in chosen_by_level.items():
        if k <= pa:
            continue
        for ap in bucket:
            if ap & a == a:
                union |= ap
    return n - popcount(union) >= rho * (n - pa)


def lym_mass(n: int, members: Sequence[int]) -> float:
    """sum over members of 1 / C(n, |A|) — the expected chain-hit count."""
    return sum(1.0 / math.comb(n, popcount(a)) for a in members)


def max_family_upper_bound(n: int, rho: float) -> float:
    """Fractional-knapsack relaxation of the chain-statistic inequality
    sum_k |A_k| / C(n,k) <= 1/rho: no rho-Sperner family can be larger."""
    budget = 1.0 / rho
    total = 0.0
    for c in sorted((math.comb(n, k) for k in range(n + 1)), reverse=True):
        take = min(1.0, budget)
        total += take * c
        budget -= take
        if budget <= 0:
            break
    return total


def _hopcroft_karp(adj: list[list[int]], n_right: int) -> int:
    """Maximum bipartite matching size (queue-based Hopcroft-Karp)."""
    INF = float("inf")
    n_left = len(adj)
    match_l = [-1] * n_left
    match_r = [-1] * n_right
    dist = [0.0] * n_left

    from collections import deque

    def bfs() -> bool:
        q = deque()
        for u in range(n_left):
            if match_l[u] == -1:
                dist[u] = 0.0
                q.append(u)
            else:
                dist[u] = INF
        found = False
        while q:
            u = q.popleft()
            for v in adj[u]:
                w = match_r[v]
                if w == -1:
                    found = True
                elif dist[w] == INF:
                    dist[w] = dist[u] + 1
                    q.append(w)
        return found

    def dfs(u: int) -> bool:
        for v in adj[u]:
            w = match_r[v]
            if w == -1 or (dist[w] == dist[u] + 1 and dfs(w)):
                match_l[u] = v
                match_r[v] = u
                return True
        dist[u] = INF
        return False

    matching = 0
    while bfs():
        for u in range(n_left):
            if match_l[u] == -1 and dfs(u):
                matching += 1
    return matching


def _max_antichain_size(n: int) -> int:
    """Width of the Boolean lattice by Dilworth: |P| minus the maximum
    matching of the strict-comparability bipartite graph."""
    total = 1 << n
    adj = []
    for a in range(total):
        row = []
        rest = ((total - 1) ^ a)
        # iterate strict supersets of a
        sup = rest
        while True:
            row.append(a | sup)
            if sup == 0:
                break
            sup = (sup - 1) & rest
        row.remove(a)  # drop the improper superset
        adj.append(row)
    return total - _hopcroft_karp(adj, total)


@dataclass
class _SearchState:
    best_size: int
    best_members: list[int]
    nodes: int = 0


def _family_search(n: int, rho: float, node_budget: int,
                   prove_below: Optional[float]) -> tuple[int, list[int]]:
    """Branch-and-bound over subsets in descending-size order.

    Processing larger sets first fixes each member's superset union at
    insertion time.  Bounds: remaining-candidate count and the fractional
    chain-statistic bound; with ``prove_below`` the search additionally
    prunes any branch that cannot exceed that threshold, which is enough
    to certify "no family exceeds the threshold" without exhausting the
    full tree.
    """
    order = sorted(range(1 << n), key=lambda a: (-popcount(a), a))
    combs = [math.comb(n, k) for k in range(n + 1)]
    # middle level is always feasible: warm incumbent
    mid = [a for a in order if popcount(a) == n // 2]
    state = _SearchState(len(mid), list(mid))
    total = len(order)
    # suffix_counts[i][k] = number of level-k subsets at positions >= i
    suffix_counts = [[0] * (n + 1) for _ in range(total + 1)]
    for i in range(total - 1, -1, -1):
        row = suffix_counts[i]
        row[:] = suffix_counts[i + 1]
        row[popcount(order[i])] += 1
    levels_by_size = sorted(range(n + 1), key=lambda k: -combs[k])

    def completion_bound(i: int, size: int, mass: float) -> float:
        budget = 1.0 / rho - mass
        if budget <= 0:
            return float(size)
        counts = suffix_counts[i]
        best = 0.0
        for k in levels_by_size:
            cnt = counts[k]
            if cnt == 0:
                continue
            take = min(cnt, budget * combs[k])
            best += take
            budget -= take / combs[k]
            if budget <= 0:
                break
        return size + min(best, total - i)

    chosen_by_level: dict[int, list[int]] = {}

    def dfs(i: int, size: int, mass: float):
        state.nodes += 1
        if state.nodes > node_budget:
            raise SearchBudgetError(
                f"family search exceeded {node_budget} nodes at n={n}, rho={rho}")
        if size > state.best_size:
            state.best_size = size
            state.best_members = [a for bucket in chosen_by_level.values() for a in bucket]
        if i >= total:
            return
        bound = completion_bound(i, size, mass)
        if prove_below is not None and bound <= prove_below:
            return
        if bound <= state.best_size:
            return
        a = order[i]
        pa = popcount(a)
        if _upset_union_feasible(n, chosen_by_level, a, rho):
            chosen_by_level.setdefault(pa, []).append(a)
            dfs(i + 1, size + 1, mass + 1.0 / combs[pa])
            chosen_by_level[pa].pop()
        dfs(i + 1, size, mass)

    dfs(0, 0, 0.0)
    return state.best_size, state.best_members


def exhaustive_max_family(n: int, rho: float,
                          node_budget: int = 20_000_000) -> tuple[int, SetFamily]:
    """Exact maximum rho-Sperner family size (with a witnessed example).

    rho = 1 reduces to the width of the Boolean lattice, computed by
    bipartite matching; otherwise a branch-and-bound search runs over the
    subset lattice (exponential: capped at n <= 12, and a node budget
    guards the rho < 1 path).
    """
    if n > 12:
        raise ValueError("exhaustive search capped at n <= 12")
    if not (0.0 < rho <= 1.0):
        raise ValueError("rho must lie in (0, 1]")
    if rho == 1.0:
        size = _max_antichain_size(n)
        members = [a for a in range(1 << n) if popcount(a) == n // 2]
        if len(members) != size:  # pragma: no cover - Sperner's theorem
            raise AssertionError("matching width disagrees with the middle level")
        fam = SetFamily(n, tuple(members)).complement_witness()
        return size, fam
    size, members = _family_search(n, rho, node_budget, prove_below=None)
    witness = synthesize_witness(n, members, rho)
    if witness is None:  # pragma: no cover - search maintains feasibility
        raise AssertionError("search returned an unwitnessable family")
    return size, SetFamily(n, tuple(members), witness)


def no_family_exceeds(n: int, rho: float, threshold: float,
                      node_budget: int = 20_000_000) -> bool:
    """Certify that every rho-Sperner family has size <= threshold.

    Runs the same branch-and-bound with sound pruning at the threshold;
    completing without finding a larger family is the certificate.
    """
    if rho == 1.0:
        return _max_antichain_size(n) <= threshold
    size, _ = _family_search(n, rho, node_budget, prove_below=threshold)
    return size <= threshold


# ---------------------------------------------------------------------------
# permutation-chain statistic


def _chain_hits(fam_members: frozenset[int], perm: Sequence[int]) -> int:
    hits = 0
    prefix = 0
    if 0 in fam_members:
        hits += 1
    for e in perm:
        prefix |= 1 << e
        if prefix in fam_members:
            hits += 1
    return hits


@dataclass(frozen=True)
class ChainTailTable:
    rows: tuple[tuple[int, float, float, float, float], ...]  # (j, est, lo, hi, bound)
    samples: int
    rho: float

    def to_csv(self, comments=()) -> bytes:
        return csv_bytes(("j", "estimate", "wilson_lo", "wilson_hi", "bound"),
                         self.rows, comments)


def lubell_chain_statistic(fam: SetFamily, rho: float, samples: int, seed: int,
                           z: float = 1.96) -> ChainTailTable:
    """Monte Carlo tail of the chain-hit count with Wilson intervals.

    Asserts the distributional claim estimate <= (1-rho)^j within three
    one-sigma Wilson half-widths (the claim is exact; sampling needs a
    statistical margin).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not is_rho_sperner(fam, rho):
        raise ValueError("family is not rho-Sperner for the given rho")
    rng = np.random.default_rng(seed)
    members = frozenset(fam.members)
    counts = np.zeros(fam.n + 2, dtype=np.int64)
    for _ in range(samples):
        perm = rng.permutation(fam.n)
        h = _chain_hits(members, perm)
        counts[h] += 1
    rows = []
    for j in range(0, fam.n + 1):
        tail = int(counts[j + 1:].sum())
        est = tail / samples
        lo, hi = wilson_interval(tail, samples, z)
        lo1, hi1 = wilson_interval(tail, samples, 1.0)
        sigma = (hi1 - lo1) / 2.0
        bound = (1.0 - rho) ** j
        if est > bound + 3.0 * sigma:
            raise AssertionError(
                f"chain tail estimate {est} exceeds (1-rho)^{j} = {bound} + 3 sigma")
        rows.append((j, est, lo, hi, bound))
    return ChainTailTable(tuple(rows), samples, rho)


def exact_chain_tail(fam: SetFamily) -> list[float]:
    """P[|A_sigma| >= j+1] for j = 0..n by full permutation enumeration (n <= 8)."""
    if fam.n > 8:
        raise ValueError("full enumeration capped at n <= 8")
    members = frozenset(fam.members)
    counts = np.zeros(fam.n + 2, dtype=np.int64)
    total = 0
    for perm in permutations(range(fam.n)):
        counts[_chain_hits(members, perm)] += 1
        total += 1
    return [float(counts[j + 1:].sum()) / total for j in range(fam.n + 1)]


def expected_chain_hits_exact(fam: SetFamily) -> float:
    """E|A_sigma| by the orbit count |{sigma : A in A_sigma}| = k!(n-k)!."""
    n = fam.n
    return sum(math.factorial(popcount(a)) * math.factorial(n - popcount(a))
               / math.factorial(n) for a in fam.members)
