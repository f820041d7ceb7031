"""Lattice geometry: sites, dyadic squares, tilted rectangles, potentials.

Conventions used throughout the package:

* Sites are integer points ``(x, y)``.  Tilted coordinates are
  ``(s, t) = (x + y, x - y)``; the image of the lattice is
  ``{(s, t) : s - t even}``.
* A tilted rectangle ``R_{I,J}`` is the set of sites with ``s in I`` and
  ``t in J`` for integer intervals ``I``, ``J`` (endpoints inclusive).
* The diagonal ``D_k^+`` is ``{x + y = k}`` (constant ``s``) and ``D_k^-``
  is ``{x - y = k}`` (constant ``t``).
* Distances: lattice adjacency and decay/graph distances use the taxicab
  metric (integer-valued, exact in tests); "deep inside a box" margins
  use the Chebyshev metric; the barrier module uses Euclidean balls
  because its comparison function is built from ``|x|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple, Optional

from .util import bernoulli_bit, csv_bytes, json_bytes


class Site(NamedTuple):
    x: int
    y: int

    @property
    def s(self) -> int:
        return self.x + self.y

    @property
    def t(self) -> int:
        return self.x - self.y

    @staticmethod
    def from_tilted(s: int, t: int) -> "Site":
        if (s - t) % 2 != 0:
            raise ValueError(f"({s},{t}) is not a lattice point: s - t must be even")
        return Site((s + t) // 2, (s - t) // 2)


def l1_dist(a, b) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def linf_dist(a, b) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def euclid_dist(a, b) -> float:
    return ((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2) ** 0.5


def site_sort_key(site) -> tuple[int, int]:
    """Row-major ordering (y, then x); fixes matrix indexing everywhere."""
    return (site[1], site[0])


@dataclass(frozen=True)
class DyadicSquare:
    """Axis-aligned square ``corner + [0, 2^n)^2``."""

    corner: Site
    log2_side: int

    def __post_init__(self):
        if self.log2_side < 0:
            raise ValueError("log2_side must be >= 0")
        object.__setattr__(self, "corner", Site(*self.corner))

    @property
    def side(self) -> int:
        return 1 << self.log2_side

    @property
    def area(self) -> int:
        return self.side * self.side

    @property
    def is_half_aligned(self) -> bool:
        # corner coordinates divisible by side/2; trivially true for side 1
        if self.log2_side == 0:
            return True
        h = self.side // 2
        return self.corner.x % h == 0 and self.corner.y % h == 0

    def box(self) -> tuple[int, int, int, int]:
        """(x0, y0, x1, y1), inclusive."""
        return (self.corner.x, self.corner.y,
                self.corner.x + self.side - 1, self.corner.y + self.side - 1)

    def contains(self, site) -> bool:
        x0, y0, x1, y1 = self.box()
        return x0 <= site[0] <= x1 and y0 <= site[1] <= y1

    def sites(self) -> list[Site]:
        """All sites in row-major (y, x) order from the corner."""
        x0, y0, x1, y1 = self.box()
        return [Site(x, y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1)]

    def half(self) -> "DyadicSquare":
        """Concentric half square; the corner offset side/4 rounds down
        (toward the original corner) when not an integer."""
        if self.log2_side == 0:
            raise ValueError("cannot halve a side-1 square")
        off = self.side // 4
        return DyadicSquare(Site(self.corner.x + off, self.corner.y + off), self.log2_side - 1)

    def double(self) -> "DyadicSquare":
        """Concentric double square; the corner offset side/2 rounds down
        (toward the original corner) when not an integer."""
        off = self.side // 2
        return DyadicSquare(Site(self.corner.x - off, self.corner.y - off), self.log2_side + 1)

    def scaled(self, factor_log2: int) -> "DyadicSquare":
        sq = self
        for _ in range(factor_log2):
            sq = sq.double()
        for _ in range(-factor_log2):
            sq = sq.half()
        return sq

    def intersects(self, other: "DyadicSquare") -> bool:
        a = self.box()
        b = other.box()
        return not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1])

    def contains_square(self, other: "DyadicSquare") -> bool:
        a = self.box()
        b = other.box()
        return a[0] <= b[0] and a[1] <= b[1] and b[2] <= a[2] and b[3] <= a[3]


def box_linf_gap(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> int:
    """Chebyshev distance between two inclusive boxes (0 when they touch/overlap)."""
    dx = max(b[0] - a[2], a[0] - b[2], 0)
    dy = max(b[1] - a[3], a[1] - b[3], 0)
    return max(dx, dy)


def linf_dist_to_complement(square: DyadicSquare, outer: DyadicSquare, site) -> int:
    """Chebyshev distance from ``site`` to ``outer \\ square`` (inf -> large).

    Measures how deep a site sits inside ``square`` relative to the part of
    its boundary that faces ``outer``; sides flush with ``outer`` do not
    count, matching "dist(x, Q \\ Q')".
    """
    x0, y0, x1, y1 = square.box()
    ox0, oy0, ox1, oy1 = outer.box()
    gaps = []
    if x0 > ox0:
        gaps.append(site[0] - x0 + 1)
    if x1 < ox1:
        gaps.append(x1 - site[0] + 1)
    if y0 > oy0:
        gaps.append(site[1] - y0 + 1)
    if y1 < oy1:
        gaps.append(y1 - site[1] + 1)
    return min(gaps) if gaps else (ox1 - ox0 + 1)


_UNBOUNDED_MSG = "region must be bounded"


@dataclass(frozen=True)
class TiltedRectangle:
    """R_{I,J}: sites with s in I, t in J (inclusive intervals, None = infinite)."""

    s_interval: tuple[Optional[int], Optional[int]]
    t_interval: tuple[Optional[int], Optional[int]]

    @staticmethod
    def of(s_lo: int, s_hi: int, t_lo: int, t_hi: int) -> "TiltedRectangle":
        return TiltedRectangle((s_lo, s_hi), (t_lo, t_hi))

    @staticmethod
    def square_at(s_lo: int, t_lo: int, side: int) -> "TiltedRectangle":
        return TiltedRectangle.of(s_lo, s_lo + side - 1, t_lo, t_lo + side - 1)

    @property
    def is_bounded(self) -> bool:
        return all(v is not None for v in (*self.s_interval, *self.t_interval))

    def _require_bounded(self):
        if not self.is_bounded:
            raise ValueError(_UNBOUNDED_MSG)

    @property
    def s_len(self) -> int:
        self._require_bounded()
        return max(0, self.s_interval[1] - self.s_interval[0] + 1)

    @property
    def t_len(self) -> int:
        self._require_bounded()
        return max(0, self.t_interval[1] - self.t_interval[0] + 1)

    @property
    def is_empty(self) -> bool:
        return self.s_len == 0 or self.t_len == 0

    @property
    def is_square(self) -> bool:
        return self.s_len == self.t_len

    @property
    def side(self) -> int:
        if not self.is_square:
            raise ValueError("not a tilted square")
        return self.s_len

    def contains(self, site) -> bool:
        s, t = site[0] + site[1], site[0] - site[1]
        slo, shi = self.s_interval
        tlo, thi = self.t_interval
        return ((slo is None or slo <= s) and (shi is None or s <= shi)
                and (tlo is None or tlo <= t) and (thi is None or t <= thi))

    def sites(self) -> frozenset[Site]:
        self._require_bounded()
        out = []
        for s in range(self.s_interval[0], self.s_interval[1] + 1):
            # t must match the parity of s
            t0 = self.t_interval[0]
            t0 += (s - t0) % 2
            for t in range(t0, self.t_interval[1] + 1, 2):
                out.append(Site((s + t) // 2, (s - t) // 2))
        return frozenset(out)

    def site_count(self) -> int:
        """Parity-aware closed form: sum over s in I of #{t in J : t = s mod 2}."""
        self._require_bounded()
        if self.is_empty:
            return 0
        tlo, thi = self.t_interval
        total = 0
        for s in range(self.s_interval[0], self.s_interval[1] + 1):
            first = tlo + (s - tlo) % 2
            if first > thi:
                continue
            total += (thi - first) // 2 + 1
        return total

    def shifted(self, ds: int, dt: int) -> "TiltedRectangle":
        self._require_bounded()
        return TiltedRectangle.of(self.s_interval[0] + ds, self.s_interval[1] + ds,
                                  self.t_interval[0] + dt, self.t_interval[1] + dt)

    def double(self) -> "TiltedRectangle":
        """Concentric doubling (interval offsets round toward the lower ends)."""
        self._require_bounded()
        a, b = self.s_len, self.t_len
        return TiltedRectangle.of(self.s_interval[0] - a // 2, self.s_interval[0] - a // 2 + 2 * a - 1,
                                  self.t_interval[0] - b // 2, self.t_interval[0] - b // 2 + 2 * b - 1)

    def half(self) -> "TiltedRectangle":
        self._require_bounded()
        a, b = self.s_len, self.t_len
        if a < 2 or b < 2:
            raise ValueError("cannot halve")
        return TiltedRectangle.of(self.s_interval[0] + a // 4, self.s_interval[0] + a // 4 + a // 2 - 1,
                                  self.t_interval[0] + b // 4, self.t_interval[0] + b // 4 + b // 2 - 1)


def tilted_sites(rect: TiltedRectangle) -> frozenset[Site]:
    """Exactly the sites with s in I, t in J, s - t even."""
    return rect.sites()


def diagonal_slice(rect: TiltedRectangle, k: int, sign: str) -> frozenset[Site]:
    """``D_k^sign`` intersected with the rectangle; sign is '+' or '-'."""
    rect._require_bounded()
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    out = []
    if sign == "+":
        if not (rect.s_interval[0] <= k <= rect.s_interval[1]):
            return frozenset()
        tlo, thi = rect.t_interval
        t0 = tlo + (k - tlo) % 2
        for t in range(t0, thi + 1, 2):
            out.append(Site((k + t) // 2, (k - t) // 2))
    else:
        if not (rect.t_interval[0] <= k <= rect.t_interval[1]):
            return frozenset()
        slo, shi = rect.s_interval
        s0 = slo + (k - slo) % 2
        for s in range(s0, shi + 1, 2):
            out.append(Site((s + k) // 2, (s - k) // 2))
    return frozenset(out)


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class PotentialField:
    """Potential values V(x) in [0, 1] on a finite region.

    Frozen sites keep their prescribed {0, 1} values across re-sampling;
    free sites are fair Bernoulli bits derived site-wise from the seed, so
    the field is a pure function of (region, seed, frozen) independent of
    iteration order.
    """

    region: frozenset[Site]
    values: Mapping[Site, float]
    seed: int
    frozen: Mapping[Site, float] = field(default_factory=dict)

    def __post_init__(self):
        reg = frozenset(Site(*p) for p in self.region)
        object.__setattr__(self, "region", reg)
        vals = {Site(*p): float(v) for p, v in self.values.items()}
        object.__setattr__(self, "values", vals)
        frz = {Site(*p): float(v) for p, v in self.frozen.items()}
        object.__setattr__(self, "frozen", frz)
        if set(vals) != reg:
            raise ValueError("values must cover the region exactly")
        for p, v in vals.items():
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"potential value out of [0,1] at {p}: {v}")
        for p, v in frz.items():
            if p not in reg:
                raise ValueError(f"frozen site {p} outside region")
            if v not in (0.0, 1.0):
                raise ValueError(f"frozen value must be 0 or 1, got {v} at {p}")

    def __getitem__(self, site) -> float:
        return self.values[Site(*site)]

    def __contains__(self, site) -> bool:
        return Site(*site) in self.values

    def value(self, site) -> float:
        return self.values[Site(*site)]

    def support_ones(self) -> frozenset[Site]:
        return frozenset(p for p, v in self.values.items() if v == 1.0)

    def to_json_bytes(self) -> bytes:
        sites = sorted(self.region, key=site_sort_key)
        fsites = sorted(self.frozen, key=site_sort_key)
        doc = {
            "region": [[p.x, p.y] for p in sites],
            "values": [self.values[p] for p in sites],
            "seed": self.seed,
            "frozen": {
                "sites": [[p.x, p.y] for p in fsites],
                "values": [self.frozen[p] for p in fsites],
            },
        }
        return json_bytes(doc)

    @staticmethod
    def from_json(doc: dict) -> "PotentialField":
        region = [Site(x, y) for x, y in doc["region"]]
        values = dict(zip(region, doc["values"]))
        frozen = {Site(x, y): v for (x, y), v in
                  zip(doc["frozen"]["sites"], doc["frozen"]["values"])}
        return PotentialField(frozenset(region), values, doc["seed"], frozen)


def sample_potential(region: Iterable, seed: int, frozen: Optional[Mapping] = None) -> PotentialField:
    """Seeded Bernoulli(1/2) field on ``region`` with frozen-site overrides.

    Free-site bits come from a per-site hash of (seed, x, y): bit-exact
    reproducibility regardless of iteration order or thread schedule.
    """
    reg = frozenset(Site(*p) for p in region)
    frz = {Site(*p): float(v) for p, v in (frozen or {}).items()}
    for p, v in frz.items():
        if v not in (0.0, 1.0):
            raise ValueError(f"frozen value must be 0 or 1, got {v} at {p}")
        if p not in reg:
            raise ValueError(f"frozen site {p} outside region")
    values = {}
    for p in reg:
        if p in frz:
            values[p] = frz[p]
        else:
            values[p] = float(bernoulli_bit(seed, p.x, p.y))
    return PotentialField(reg, values, seed, frz)


def constant_potential(region: Iterable, value: float) -> PotentialField:
    """Deterministic constant field (seed recorded as 0)."""
    reg = frozenset(Site(*p) for p in region)
    v = float(value)
    frz = {p: v for p in reg} if v in (0.0, 1.0) else {}
    return PotentialField(reg, {p: v for p in reg}, 0, frz)


# ---------------------------------------------------------------------------
# sparsity along diagonals and delta-regularity


@dataclass(frozen=True)
class SparsityVerdict:
    sparse_plus: Optional[bool]
    sparse_minus: Optional[bool]
    worst_diagonal: Optional[int]
    worst_sign: Optional[str]
    worst_ratio: float
    delta: float

    @property
    def is_sparse(self) -> bool:
        checks = [v for v in (self.sparse_plus, self.sparse_minus) if v is not None]
        return all(checks)


def check_sparse(F: Iterable, rect: TiltedRectangle, delta: float, sign: str = "both") -> SparsityVerdict:
    """Diagonal-density test: sparse iff every diagonal has F-fraction <= delta."""
    if not (0.0 <= delta <= 1.0):
        raise ValueError("delta must lie in [0, 1]")
    if sign not in ("+", "-", "both"):
        raise ValueError("sign must be '+', '-' or 'both'")
    rect._require_bounded()
    fset = frozenset(Site(*p) for p in F)
    worst_ratio = 0.0
    worst_k = None
    worst_sign = None
    results: dict[str, Optional[bool]] = {"+": None, "-": None}
    for sg in ("+", "-"):
        if sign not in (sg, "both"):
            continue
        lo, hi = rect.s_interval if sg == "+" else rect.t_interval
        ok = True
        for k in range(lo, hi + 1):
            diag = diagonal_slice(rect, k, sg)
            if not diag:
                continue
            hits = sum(1 for p in diag if p in fset)
            ratio = hits / len(diag)
            if ratio > worst_ratio or worst_k is None:
                worst_ratio, worst_k, worst_sign = ratio, k, sg
            if hits > delta * len(diag):
                ok = False
        results[sg] = ok
    return SparsityVerdict(results["+"], results["-"], worst_k, worst_sign, worst_ratio, delta)


@dataclass(frozen=True)
class RegularityReport:
    defect_area: int
    witness: tuple[TiltedRectangle, ...]
    delta: float
    region_size: int
    mode: str

    @property
    def threshold(self) -> float:
        return self.delta * self.region_size

    @property
    def regular(self) -> Optional[bool]:
        # greedy gives a lower bound: it can certify non-regularity only
        if self.defect_area > self.threshold:
            return False
        return True if self.mode == "exact" else None


def _nonsparse_square_candidates(fset: frozenset[Site], eset: frozenset[Site], delta: float):
    """Tilted squares contained in E in which F is not delta-sparse.

    Every such square contains an F-site, so candidates are enumerated
    around F-sites; each is reported once, keyed by its geometry.
    """
    if not fset & eset:
        return []
    # group E by diagonals once, for fast per-candidate density checks
    smax = max(p.x + p.y for p in eset)
    smin = min(p.x + p.y for p in eset)
    tmax = max(p.x - p.y for p in eset)
    tmin = min(p.x - p.y for p in eset)
    side_cap = min(smax - smin + 1, tmax - tmin + 1)
    seen = set()
    out = []
    f_in_e = sorted(fset & eset, key=site_sort_key)
    e_lookup = eset
    for fp in f_in_e:
        fs, ft = fp.x + fp.y, fp.x - fp.y
        for side in range(1, side_cap + 1):
            for s0 in range(fs - side + 1, fs + 1):
                if s0 < smin or s0 + side - 1 > smax:
                    continue
                for t0 in range(ft - side + 1, ft + 1):
                    if t0 < tmin or t0 + side - 1 > tmax:
                        continue
                    key = (s0, t0, side)
                    if key in seen:
                        continue
                    seen.add(key)
                    rect = TiltedRectangle.square_at(s0, t0, side)
                    sites = rect.sites()
                    if not sites <= e_lookup:
                        continue
                    verdict = check_sparse(fset, rect, delta, "both")
                    if not verdict.is_sparse:
                        out.append((rect, sites))
    return out


def _greedy_packing(cands):
    chosen = []
    used: set[Site] = set()
    total = 0
    for rect, sites in sorted(cands, key=lambda c: (-len(c[1]), c[0].s_interval, c[0].t_interval)):
        if used.isdisjoint(sites):
            chosen.append(rect)
            used |= sites
            total += len(sites)
    return total, chosen


def _exact_packing(cands, node_budget: int):
    """Max total-site disjoint packing via branch-and-bound.

    Candidates are grouped by a contained F-anchor is unnecessary here;
    plain DFS over weight-sorted candidates with a remaining-capacity
    bound is enough at the documented instance sizes.
    """
    cands = sorted(cands, key=lambda c: (-len(c[1]), c[0].s_interval, c[0].t_interval))
    sites_list = [c[1] for c in cands]
    weights = [len(s) for s in sites_list]
    n = len(cands)
    best_total, best_sel = _greedy_packing(cands)
    best_sel_idx: list[int] = []
    if best_sel:
        # map greedy rects back to indices for a warm incumbent
        rect_to_idx = {id(c[0]): i for i, c in enumerate(cands)}
        best_sel_idx = [rect_to_idx[id(r)] for r in best_sel]
    nodes = 0

    def rest_capacity(i, used):
        # union of sites of remaining compatible candidates caps the gain
        free = set()
        for j in range(i, n):
            if used.isdisjoint(sites_list[j]):
                free |= sites_list[j] - used
        return len(free)

    def dfs(i, used, total, picked):
        nonlocal best_total, best_sel_idx, nodes
        nodes += 1
        if nodes > node_budget:
            raise RuntimeError("exact regularity search exceeded its node budget")
        if total > best_total:
            best_total, best_sel_idx = total, list(picked)
        if i >= n:
            return
        bound = total + min(sum(weights[j] for j in range(i, n)), rest_capacity(i, used))
        if bound <= best_total:
            return
        # branch: take i if compatible, then skip i
        if used.isdisjoint(sites_list[i]):
            picked.append(i)
            dfs(i + 1, used | sites_list[i], total + weights[i], picked)
            picked.pop()
        dfs(i + 1, used, total, picked)

    dfs(0, frozenset(), 0, [])
    return best_total, [cands[i][0] for i in best_sel_idx]


def regularity_defect(F: Iterable, E: Iterable, delta: float, mode: str = "exact",
                      cap: int = 4096, node_budget: int = 2_000_000) -> RegularityReport:
    """Largest total area of disjoint tilted squares inside E where F fails
    delta-sparseness (exact optimum, or a greedy certified lower bound).

    F is delta-regular in E iff the exact maximum is <= delta * |E|.
    """
    if mode not in ("exact", "greedy"):
        raise ValueError("mode must be 'exact' or 'greedy'")
    fset = frozenset(Site(*p) for p in F)
    eset = frozenset(Site(*p) for p in E)
    if mode == "exact" and len(eset) > cap:
        raise ValueError(f"exact mode supports at most {cap} sites, got {len(eset)}")
    cands = _nonsparse_square_candidates(fset, eset, delta)
    if mode == "greedy":
        total, chosen = _greedy_packing(cands)
    else:
        total, chosen = _exact_packing(cands, node_budget)
    return RegularityReport(total, tuple(chosen), delta, len(eset), mode)


def sites_to_csv(sites: Iterable) -> bytes:
    rows = [(p[0], p[1]) for p in sorted((Site(*q) for q in sites), key=site_sort_key)]
    return csv_bytes(("x", "y"), rows)
