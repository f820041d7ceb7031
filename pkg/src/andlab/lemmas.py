"""Deterministic verifiers for the eigenvalue-variation, almost-orthonormal,
geometric-resolvent, decay-propagation, continuity, and covering lemmas.

Each verifier returns a verdict object separating "hypotheses_met" from
"conclusion_holds": instances that break a hypothesis are reported, not
asserted on.  Conventions:

* decay exponents and the defect graph measure distance in the taxicab
  metric (integer weights, so shortest paths admit an exact oracle);
* "deep inside a box" margins are Chebyshev (box) distances, with sides
  flush against the ambient square not counting as boundary;
* rank-one bumps are added at a site index k of the fixed row-major site
  ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import (DyadicSquare, PotentialField, Site,
                       linf_dist_to_complement, site_sort_key)
from .operators import (HamiltonianMatrix, NearSingularError, ResolventMatrix,
                        assemble_hq, l1_distance_matrix, ordered_sites,
                        resolvent, _power_norm)
from .util import json_bytes


class NegativeCycleError(RuntimeError):
    """Defect edges pump value around a loop: the edge weight is too large
    relative to the defect spacing."""


class CoverageGapError(RuntimeError):
    """Some site is neither deep in a defect nor deep in a good square."""


# ---------------------------------------------------------------------------
# eigenvalue variation (rank-one bump moves an eigenvalue across a gap)


@dataclass(frozen=True)
class VariationInstance:
    matrix: np.ndarray
    k: int                       # bumped coordinate
    radii: tuple[float, float, float, float, float]
    i: int                       # 0-based indices into the descending spectrum
    j: int
    c_small: float = 0.01


@dataclass(frozen=True)
class MinmaxVerdict:
    hypotheses_met: bool
    conclusion_holds: Optional[bool]
    failed_hypotheses: tuple[str, ...]
    count_before: Optional[int] = None
    count_after: Optional[int] = None


def minmax_variation_check(inst: VariationInstance) -> MinmaxVerdict:
    """Check the gap/mass/alignment hypotheses and, when they hold, that the
    rank-one bump e_k (x) e_k strictly increases trace 1_[r1,inf)."""
    A = np.asarray(inst.matrix, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, atol=1e-12):
        raise ValueError("matrix must be symmetric")
    if not (0 <= inst.k < n and 0 <= inst.i <= inst.j < n):
        raise ValueError("indices out of range")
    r1, r2, r3, r4, r5 = inst.radii
    w, v = np.linalg.eigh(A)
    w = w[::-1]
    v = v[:, ::-1]
    lam_i, lam_j = w[inst.i], w[inst.j]
    lam_prev = w[inst.i - 1] if inst.i >= 1 else math.inf

    failed = []
    if not (0 < r1 < r2 < r3 < r4 < r5 < 1):
        failed.append("radii ordering")
    if not r1 <= inst.c_small * min(r3 * r5, r2 * r3 / r4):
        failed.append("r1 too large for c * min(r3 r5, r2 r3 / r4)")
    if not (0 < lam_j <= lam_i < r1 < r2 < lam_prev):
        failed.append("eigenvalue placement")
    if not v[inst.k, inst.j] ** 2 >= r3:
        failed.append("alignment v_{j,k}^2 >= r3")
    window = (w > r2) & (w < r5)
    if not float(np.sum(v[inst.k, window] ** 2)) <= r4:
        failed.append("window mass sum <= r4")
    if failed:
        return MinmaxVerdict(False, None, tuple(failed))

    before = int(np.sum(w >= r1))
    Ab = A.copy()
    Ab[inst.k, inst.k] += 1.0
    wb = np.linalg.eigh(Ab)[0]
    after = int(np.sum(wb >= r1))
    return MinmaxVerdict(True, after > before, (), before, after)


# ---------------------------------------------------------------------------
# almost orthonormal families


@dataclass(frozen=True)
class OrthonormalVerdict:
    hypothesis_met: bool
    bound_holds: bool
    m: int
    n: int
    max_gram_deviation: float


def almost_orthonormal_check(vectors) -> OrthonormalVerdict:
    """|v_i . v_j - delta_ij| <= (5n)^(-1/2) forces m <= (5 - sqrt 5) n / 2."""
    V = np.asarray(vectors, dtype=float)
    if V.ndim != 2 or V.shape[0] == 0:
        raise ValueError("need a nonempty list of equal-dimension vectors")
    m, n = V.shape
    gram = V @ V.T
    dev = float(np.abs(gram - np.eye(m)).max())
    hyp = dev <= (5 * n) ** -0.5
    bound = m <= (5 - math.sqrt(5)) * n / 2
    return OrthonormalVerdict(hyp, bound, m, n, dev)


# ---------------------------------------------------------------------------
# geometric resolvent identity


@dataclass(frozen=True)
class GriReport:
    exact_residual: float
    residual_ok: bool
    bound_witness: Optional[tuple[Site, Site]]
    bound_holds: bool
    rq_xy: float
    rqp_xy: float
    boundary_pairs: int


def gri_decompose(Q, Qp, V: PotentialField, lambda_bar: float, x, y) -> GriReport:
    """R_Q(x,y) = R_Q'(x,y) + sum over boundary pairs R_Q'(x,u) R_Q(v,y),
    verified on computed resolvents; also reports the dominating pair (u, v)
    certifying |R_Q(x,y)| <= |R_Q'(x,y)| + |Q| |R_Q'(x,u)| |R_Q(v,y)|."""
    q_sites = ordered_sites(Q)
    qp_sites = ordered_sites(Qp)
    qset, qpset = set(q_sites), set(qp_sites)
    if not qpset <= qset:
        raise ValueError("Q' must be contained in Q")
    x, y = Site(*x), Site(*y)
    if x not in qpset or y not in qset:
        raise ValueError("need x in Q' and y in Q")
    RQ = resolvent(assemble_hq(q_sites, V), lambda_bar)
    RQp = resolvent(assemble_hq(qp_sites, V), lambda_bar)
    rq = RQ.entry(x, y)
    rqp = RQp.entry(x, y) if y in qpset else 0.0

    total = 0.0
    witness = None
    witness_val = -1.0
    pairs = 0
    for u in qp_sites:
        for v in (Site(u.x + 1, u.y), Site(u.x - 1, u.y), Site(u.x, u.y + 1), Site(u.x, u.y - 1)):
            if v in qset and v not in qpset:
                pairs += 1
                a = RQp.entry(x, u)
                b = RQ.entry(v, y)
                total += a * b
                if abs(a * b) > witness_val:
                    witness_val, witness = abs(a * b), (u, v)
    residual = abs(rq - rqp - total)
    ok = residual <= 1e-8 * RQ.max_abs()
    if witness is None:
        bound_holds = rq == rqp
    else:
        bound_holds = abs(rq) <= abs(rqp) + len(q_sites) * witness_val + 1e-12
    return GriReport(residual, ok, witness, bound_holds, rq, rqp, pairs)


# ---------------------------------------------------------------------------
# defect graph distances


def deep_defect_sites(Q: DyadicSquare, defect: DyadicSquare) -> list[Site]:
    """Sites of the defect at Chebyshev depth >= side/8 from Q \\ defect."""
    need = defect.side / 8.0
    return [p for p in defect.sites() if linf_dist_to_complement(defect, Q, p) >= need]


def defect_exit_sites(Q: DyadicSquare, defect: DyadicSquare) -> list[Site]:
    """Sites of Q at taxicab distance exactly 1 from the defect box."""
    x0, y0, x1, y1 = defect.box()
    out = []
    for x in range(x0, x1 + 1):
        out.extend((Site(x, y0 - 1), Site(x, y1 + 1)))
    for y in range(y0, y1 + 1):
        out.extend((Site(x0 - 1, y), Site(x1 + 1, y)))
    return [p for p in out if Q.contains(p)]


class DefectGraph:
    """Complete taxicab graph on Q plus weight -L3 edges from deep defect
    sites to the defect's outside neighbours.

    Distances are computed by condensing each defect to an entry/exit pair
    (every deep-to-exit pair shares one weight, so the condensation is
    exact) and closing the small defect-to-defect hop matrix; a diagonal
    that drops below zero is a pumping cycle and raises.
    """

    def __init__(self, Q: DyadicSquare, defects: Sequence[DyadicSquare], L3: float):
        for d in defects:
            if not Q.contains_square(d):
                raise ValueError("defect squares must sit inside Q")
        for a in range(len(defects)):
            for b in range(a + 1, len(defects)):
                if defects[a].intersects(defects[b]):
                    raise ValueError("defect squares must be disjoint")
        self.Q = Q
        self.defects = tuple(defects)
        self.L3 = float(L3)
        self.sites = tuple(Q.sites())
        self.index = {p: i for i, p in enumerate(self.sites)}
        self.deep = [deep_defect_sites(Q, d) for d in defects]
        self.exits = [defect_exit_sites(Q, d) for d in defects]
        self.L2 = defects[0].side if defects else 0

    def explicit_edges(self):
        """Full edge list (u_index, v_index, weight) for oracle comparisons."""
        n = len(self.sites)
        base = l1_distance_matrix(self.sites)
        for i in range(n):
            for j in range(n):
                if i != j:
                    yield i, j, float(base[i, j])
        for deep, exit_ in zip(self.deep, self.exits):
            for a in deep:
                for b in exit_:
                    yield self.index[a], self.index[b], -self.L3

    def distance_matrix(self) -> np.ndarray:
        sites_xy = np.array(self.sites, dtype=np.int64)
        base = l1_distance_matrix(self.sites).astype(float)
        K = len(self.defects)
        if K == 0:
            return base

        def dist_to(points: list[Site]) -> np.ndarray:
            pxy = np.array(points, dtype=np.int64)
            return (np.abs(sites_xy[:, None, 0] - pxy[None, :, 0])
                    + np.abs(sites_xy[:, None, 1] - pxy[None, :, 1])).min(axis=1).astype(float)

        entry = np.stack([dist_to(d) for d in self.deep], axis=1)   # (n, K)
        exit_ = np.stack([dist_to(e) for e in self.exits], axis=0)  # (K, n)

        # hop[k, k']: exit defect k, walk to a deep site of k', take its edge
        hop = np.empty((K, K))
        for k in range(K):
            for kp in range(K):
                exy = np.array(self.exits[k], dtype=np.int64)
                dxy = np.array(self.deep[kp], dtype=np.int64)
                d = (np.abs(exy[:, None, 0] - dxy[None, :, 0])
                     + np.abs(exy[:, None, 1] - dxy[None, :, 1])).min()
                hop[k, kp] = -self.L3 + float(d)

        # min-plus closure over chains of <= K hops, with cycle detection
        chain = np.zeros((K, K))
        chain[:] = np.inf
        np.fill_diagonal(chain, 0.0)
        for _ in range(K):
            chain = np.minimum(chain, (chain[:, :, None] + hop[None, :, :]).min(axis=1))
        improved = (chain[:, :, None] + hop[None, :, :]).min(axis=1)
        if (improved < chain - 1e-12).any() or (np.diag(chain) < -1e-12).any():
            raise NegativeCycleError(
                f"defect edge weight {self.L3} pumps a negative cycle "
                f"(defect side {self.L2}); decrease L3 relative to the defect scale")

        # d(x, y) = min(|x-y|_1, entry + chain - L3 + exit)
        through = np.full_like(base, np.inf)
        for k1 in range(K):
            for k2 in range(K):
                cost = chain[k1, k2] - self.L3
                cand = entry[:, k1][:, None] + cost + exit_[k2][None, :]
                through = np.minimum(through, cand)
        return np.minimum(base, through)


@dataclass(frozen=True)
class DefectDistances:
    sites: tuple[Site, ...]
    matrix: np.ndarray
    graph: DefectGraph = field(repr=False, compare=False, default=None)

    def __call__(self, x, y) -> float:
        idx = {p: i for i, p in enumerate(self.sites)}
        return float(self.matrix[idx[Site(*x)], idx[Site(*y)]])


def defect_distance(Q: DyadicSquare, defects: Sequence[DyadicSquare], L3: float,
                    lower_constant: float = 4.0) -> DefectDistances:
    """All-pairs defect-graph distances with the sandwich
    |x-y| >= d(x,y) >= |x-y| - C K L2 asserted on every output (each defect
    shortcut saves at most its diameter plus the edge weight, so C = 4
    covers taxicab crossings)."""
    g = DefectGraph(Q, defects, L3)
    d = g.distance_matrix()
    base = l1_distance_matrix(g.sites).astype(float)
    if (d > base + 1e-9).any():
        raise AssertionError("defect distance exceeds the taxicab metric")
    slack = lower_constant * max(1, len(defects)) * (g.L2 if defects else 0)
    if (d < base - slack - 1e-9).any():
        raise AssertionError(
            f"defect distance drops more than C*K*L2 = {slack} below taxicab")
    return DefectDistances(g.sites, d, g)


# ---------------------------------------------------------------------------
# multiscale decay propagation


@dataclass(frozen=True)
class MultiscaleParams:
    eps: float
    delta: float
    scales: tuple[float, float, float, float, float, float, float]  # L0..L6
    m: float

    @property
    def m_tilde(self) -> float:
        return self.m - self.scales[5] ** (-self.delta)


@dataclass(frozen=True)
class MultiscaleVerdict:
    hypotheses_met: bool
    failed_hypotheses: tuple[str, ...]
    conclusion_margin: Optional[float]
    conclusion_holds: Optional[bool]
    m_tilde: float
    alpha_self_bound: Optional[float]
    good_square_count: int
    covered_by_defects: int
    scale_chain_ok: tuple[bool, ...] = ()


def _half_aligned_squares(Q: DyadicSquare, side: int) -> list[DyadicSquare]:
    log2 = side.bit_length() - 1
    if 1 << log2 != side:
        raise ValueError("side must be a power of two")
    step = max(side // 2, 1)
    x0, y0, x1, y1 = Q.box()
    out = []
    cx = (x0 // step) * step
    while cx + side - 1 <= x1:
        if cx >= x0:
            cy = (y0 // step) * step
            while cy + side - 1 <= y1:
                if cy >= y0:
                    out.append(DyadicSquare(Site(cx, cy), log2))
                cy += step
        cx += step
    return out


def multiscale_propagation_check(Q: DyadicSquare, V: PotentialField, lambda_bar: float,
                                 defects: Sequence[DyadicSquare],
                                 params: MultiscaleParams) -> MultiscaleVerdict:
    """Verify the decay-propagation hypotheses on a concrete instance, then
    compare the true R_Q against e^{L1 - m_tilde |x-y|} entrywise.

    Geometric scales L0, L2, L5 must be powers of two; bound exponents
    L1, L3, L4, L6 are real.  Coverage: every site is either deep (>= L2/8)
    in a defect or deep (>= L5/8) in a half-aligned L5-square whose own
    resolvent satisfies the small-scale bound e^{L6 - m d}.

    Gating hypotheses: parameter ordering, the decay-rate window, defect
    norms, and coverage.  The asymptotic scale chain L_k^{1-eps} >= L_{k+1}
    holds only for large scales (its constants are existential), so it is
    reported in ``scale_chain_ok`` rather than enforced on desk instances.
    """
    L0, L1, L2, L3, L4, L5, L6 = params.scales
    failed = []
    if not (params.eps > params.delta > 0):
        failed.append("need eps > delta > 0")
    chain = tuple(params.scales[k] ** (1 - params.eps) >= params.scales[k + 1] - 1e-12
                  for k in range(6))
    if not (1 >= params.m >= 2 * L5 ** (-params.delta)):
        failed.append("decay rate m outside [2 L5^-delta, 1]")
    if Q.side != int(L0):
        failed.append("Q side must equal L0")
    for sq, name in ((int(L0), "L0"), (int(L2), "L2"), (int(L5), "L5")):
        if sq & (sq - 1):
            failed.append(f"{name} must be a power of two")

    mt = params.m_tilde
    deep_cover: set[Site] = set()
    for d in defects:
        if d.side != int(L2):
            failed.append("defect side must equal L2")
            continue
        H_d = assemble_hq(d, V)
        try:
            R_d = resolvent(H_d, lambda_bar)
        except NearSingularError:
            failed.append(f"defect resolvent at {d.corner} is singular")
            continue
        if _power_norm(R_d.entries) > math.exp(L4):
            failed.append(f"defect resolvent norm exceeds e^L4 at {d.corner}")
        deep_cover.update(p for p in d.sites()
                          if linf_dist_to_complement(d, Q, p) >= L2 / 8.0)

    good_squares = []
    if not failed:
        for cand in _half_aligned_squares(Q, int(L5)):
            H_c = assemble_hq(cand, V)
            try:
                R_c = resolvent(H_c, lambda_bar)
            except NearSingularError:
                continue
            dmat = H_c.distances
            ok = np.all(np.abs(R_c.entries) <= np.exp(L6 - params.m * dmat))
            if ok:
                good_squares.append(cand)
        uncovered = []
        for p in Q.sites():
            if p in deep_cover:
                continue
            if not any(sq.contains(p) and linf_dist_to_complement(sq, Q, p) >= L5 / 8.0
                       for sq in good_squares):
                uncovered.append(p)
        if uncovered:
            raise CoverageGapError(
                f"{len(uncovered)} sites (first {uncovered[0]}) are neither deep in a "
                f"defect nor deep in a good L5-square")

    if failed:
        return MultiscaleVerdict(False, tuple(failed), None, None, mt, None,
                                 0, len(deep_cover), chain)

    H = assemble_hq(Q, V)
    R = resolvent(H, lambda_bar)
    dmat = H.distances
    logs = np.full_like(R.entries, -np.inf)
    nz = R.entries != 0.0
    logs[nz] = np.log(np.abs(R.entries[nz]))
    margin = float(np.min(L1 - mt * dmat - logs))
    dd = defect_distance(Q, defects, L3) if defects else None
    dgraph = dd.matrix if dd is not None else dmat.astype(float)
    alpha = float(np.max(np.exp(mt * dgraph + logs)))
    return MultiscaleVerdict(True, (), margin, margin >= 0.0, mt, alpha,
                             len(good_squares), len(deep_cover), chain)


# ---------------------------------------------------------------------------
# resolvent continuity in the spectral parameter


@dataclass(frozen=True)
class ContinuityVerdict:
    hypotheses_met: bool
    failed_hypotheses: tuple[str, ...]
    conclusion_holds: Optional[bool]
    contraction_ok: Optional[bool]
    max_ratio: Optional[float]
    allowed_radius: float


def resolvent_continuity_check(H: HamiltonianMatrix, lam: float, lam_prime: float,
                               alpha: float, beta: float,
                               c: float = 0.25) -> ContinuityVerdict:
    """If |R_lam| <= e^{alpha - beta d} entrywise and |lam' - lam| is inside
    the radius c beta |Q|^{-1} e^{-alpha}, then |R_lam'| <= 2 e^{alpha - beta d}.

    Hypothesis failures are reported in the verdict, not raised.  The
    fixed-point premise ||R_lam (lam' - lam)|| <= 1/2 is re-verified
    numerically whenever the radius is respected.
    """
    n = H.n
    radius = c * beta * math.exp(-alpha) / n
    failed = []
    try:
        R0 = resolvent(H, lam)
    except NearSingularError:
        return ContinuityVerdict(False, ("resolvent at lambda is singular",),
                                 None, None, None, radius)
    dmat = H.distances
    bound0 = np.exp(alpha - beta * dmat)
    if not np.all(np.abs(R0.entries) <= bound0):
        failed.append("entrywise decay hypothesis fails at lambda")
    if not abs(lam_prime - lam) < radius:
        failed.append("lambda' outside the continuity radius")
    if failed:
        return ContinuityVerdict(False, tuple(failed), None, None, None, radius)
    contraction = _power_norm(R0.entries) * abs(lam_prime - lam) <= 0.5
    try:
        R1 = resolvent(H, lam_prime)
    except NearSingularError:
        return ContinuityVerdict(True, (), False, contraction, math.inf, radius)
    ratio = float(np.max(np.abs(R1.entries) / bound0))
    return ContinuityVerdict(True, (), ratio <= 2.0, contraction, ratio, radius)


# ---------------------------------------------------------------------------
# covering lemma: disjointify enlarged squares around the inner ones


def _cover_margin_ok(inner: DyadicSquare, cover: DyadicSquare, Q: DyadicSquare,
                     L3: int) -> bool:
    if not cover.contains_square(inner):
        return False
    x0, y0, x1, y1 = cover.box()
    ix0, iy0, ix1, iy1 = inner.box()
    qx0, qy0, qx1, qy1 = Q.box()
    need = L3 / 8.0
    # sides flush with Q do not face any of Q \ cover
    if x0 > qx0 and ix0 - x0 + 1 < need:
        return False
    if x1 < qx1 and x1 - ix1 + 1 < need:
        return False
    if y0 > qy0 and iy0 - y0 + 1 < need:
        return False
    if y1 < qy1 and y1 - iy1 + 1 < need:
        return False
    return True


def _place_cover(Q: DyadicSquare, targets: Sequence[DyadicSquare], side: int) -> Optional[DyadicSquare]:
    """First half-aligned side-`side` square inside Q covering every target
    with the 1/8 margin (sides flush with Q are exempt), or None."""
    for cand in _half_aligned_squares(Q, side):
        if all(_cover_margin_ok(t, cand, Q, side) for t in targets):
            return cand
    return None


def _align_up(v: int, step: int) -> int:
    return -(-v // step) * step


def cover_disjointify(Q: DyadicSquare, inner_squares: Sequence[DyadicSquare],
                      K: int, alpha: int, L1: int,
                      growth_factor: int = 8) -> tuple[int, list[DyadicSquare]]:
    """Choose a dyadic scale L3 in [L1, alpha L1] and K disjoint half-aligned
    L3-squares covering every inner square with Chebyshev margin L3/8.

    Overlapping covers are merged by growing the scale by the configured
    factor and re-covering the merged groups; the scale budget alpha >= C^K
    makes the loop terminate before exceeding alpha * L1.
    """
    if K < 1 or len(inner_squares) > K:
        raise ValueError("need 1 <= len(inner_squares) <= K")
    if alpha & (alpha - 1) or L1 & (L1 - 1):
        raise ValueError("alpha and L1 must be dyadic (powers of two)")
    if alpha < growth_factor ** max(0, len(inner_squares) - 1):
        raise ValueError(f"alpha = {alpha} below the merge-loop budget "
                         f"{growth_factor}^(K-1)")
    sides = {sq.side for sq in inner_squares}
    if len(sides) > 1:
        raise ValueError("inner squares must share one side length")
    L2 = sides.pop() if sides else 1
    # scale chain L0 >= alpha L1 >= L1 >= alpha L2
    if alpha * L2 > L1:
        raise ValueError("need L1 >= alpha * L2")
    if alpha * L1 > Q.side:
        raise ValueError("need L0 >= alpha * L1")
    for sq in inner_squares:
        if not Q.contains_square(sq):
            raise ValueError("inner squares must sit inside Q")
        if not sq.is_half_aligned:
            raise ValueError("inner squares must be half-aligned")
    if not Q.is_half_aligned:
        raise ValueError("Q must be half-aligned")

    if growth_factor & (growth_factor - 1):
        raise ValueError("growth factor must be a power of two")
    L3 = L1
    groups: list[list[DyadicSquare]] = [[sq] for sq in inner_squares]
    while True:
        if L3 > alpha * L1:
            raise ValueError("geometric infeasibility: merge loop exhausted alpha * L1")
        placed = []
        feasible = True
        for g in groups:
            cand = _place_cover(Q, g, L3)
            if cand is None:
                feasible = False
                break
            placed.append(cand)
        if not feasible:
            L3 *= growth_factor
            continue
        overlap = None
        for a in range(len(placed)):
            for b in range(a + 1, len(placed)):
                if placed[a].intersects(placed[b]):
                    overlap = (a, b)
                    break
            if overlap:
                break
        if overlap is None:
            covers = placed
            break
        # merge the colliding groups and retry, growing only when a merged
        # group no longer fits at the current scale
        a, b = overlap
        groups[a] = groups[a] + groups[b]
        del groups[b]

    covers = _top_up_covers(Q, covers, K, L3)
    return L3, covers


def _top_up_covers(Q, covers, K, L3):
    if len(covers) == K:
        return covers
    log2 = L3.bit_length() - 1
    step = max(L3 // 2, 1)
    qx0, qy0, qx1, qy1 = Q.box()
    out = list(covers)
    cx = _align_up(qx0, step)
    while len(out) < K and cx + L3 - 1 <= qx1:
        cy = _align_up(qy0, step)
        while len(out) < K and cy + L3 - 1 <= qy1:
            cand = DyadicSquare(Site(cx, cy), log2)
            if all(not cand.intersects(c) for c in out):
                out.append(cand)
            cy += step
        cx += step
    if len(out) < K:
        raise ValueError(f"geometric infeasibility: cannot fit {K} disjoint "
                         f"side-{L3} squares in Q")
    return out


def verdict_to_json(verdict, margins: Optional[dict] = None) -> bytes:
    """Uniform {hypotheses_met, conclusion_holds, margins:{...}} emission."""
    doc = {
        "hypotheses_met": getattr(verdict, "hypotheses_met",
                                  getattr(verdict, "hypothesis_met", None)),
        "conclusion_holds": getattr(verdict, "conclusion_holds",
                                    getattr(verdict, "bound_holds", None)),
        "margins": margins or {},
    }
    for name in ("failed_hypotheses",):
        if hasattr(verdict, name):
            doc["margins"][name] = list(getattr(verdict, name))
    return json_bytes(doc)
