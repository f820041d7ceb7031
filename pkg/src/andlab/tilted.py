"""Exact propagation of eigenfunction data across tilted rectangles.

In tilted coordinates (s, t) = (x + y, x - y) the eigenvalue equation
H psi = lambda psi at a lattice point (s, t) reads

    (4 + V_{s,t} - lambda) psi_{s,t}
        = psi_{s-1,t-1} + psi_{s+1,t+1} + psi_{s-1,t+1} + psi_{s+1,t-1},

and solving it for the north-east corner gives the recursion

    psi_{s,t} = (4 + V_{s-1,t-1} - lambda) psi_{s-1,t-1}
                - psi_{s-2,t} - psi_{s,t-2} - psi_{s-2,t-2},

which determines psi on all of R_{[1,a],[1,b]} from its west boundary
R_{[1,2],[1,b]} u R_{[1,a],[1,2]}.  All operations re-index a rectangle
to [1,a] x [1,b] internally and keep the corner parity, so the eight
endpoint-parity cases share one code path.

Two growth estimates are implemented as configurable checks, with the
constants as stated (their exponents are asymmetric between the growth
and the lambda-dependence bound; both forms are kept as written and the
asymmetry is intentional, not corrected here).

Long rectangles multiply values by O(s) per column; fields carry a
power-of-two exponent ledger, and the recursion rescales everything when
the running maximum threatens double-precision overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from .geometry import (DyadicSquare, PotentialField, Site, TiltedRectangle,
                       site_sort_key)
from .operators import HamiltonianMatrix, NearSingularError, Spectrum
from .util import csv_bytes

_RESCALE_LIMIT = 2.0 ** 900


def _norm_dims(rect: TiltedRectangle) -> tuple[int, int, int, int, int]:
    """(a, b, s_lo, t_lo, parity): normalized index (i, j) is a site iff
    (i - j) mod 2 == parity."""
    rect._require_bounded()
    a, b = rect.s_len, rect.t_len
    s_lo, t_lo = rect.s_interval[0], rect.t_interval[0]
    parity = (s_lo - t_lo) % 2
    return a, b, s_lo, t_lo, parity


def west_boundary_sites(rect: TiltedRectangle) -> frozenset[Site]:
    """del^w R_{[a,b],[c,d]} = R_{[a,a+1],[c,d]} u R_{[a,b],[c,c+1]}."""
    a, b, s_lo, t_lo, _ = _norm_dims(rect)
    strip_s = TiltedRectangle.of(s_lo, min(s_lo + 1, s_lo + a - 1), t_lo, t_lo + b - 1)
    strip_t = TiltedRectangle.of(s_lo, s_lo + a - 1, t_lo, min(t_lo + 1, t_lo + b - 1))
    return strip_s.sites() | strip_t.sites()


@dataclass(frozen=True)
class WestBoundaryData:
    rectangle: TiltedRectangle
    values: Mapping[Site, float]

    def __post_init__(self):
        vals = {Site(*p): float(v) for p, v in self.values.items()}
        object.__setattr__(self, "values", vals)
        expected = west_boundary_sites(self.rectangle)
        if set(vals) != expected:
            missing = expected - set(vals)
            extra = set(vals) - expected
            raise ValueError(
                f"boundary domain mismatch: missing {len(missing)}, extra {len(extra)} sites")

    def sup_norm(self) -> float:
        return max((abs(v) for v in self.values.values()), default=0.0)

    @staticmethod
    def zeros(rect: TiltedRectangle) -> "WestBoundaryData":
        return WestBoundaryData(rect, {p: 0.0 for p in west_boundary_sites(rect)})

    @staticmethod
    def from_function(rect: TiltedRectangle, fn: Callable[[Site], float]) -> "WestBoundaryData":
        return WestBoundaryData(rect, {p: float(fn(p)) for p in west_boundary_sites(rect)})

    @staticmethod
    def random(rect: TiltedRectangle, rng: np.random.Generator, scale: float = 1.0) -> "WestBoundaryData":
        sites = sorted(west_boundary_sites(rect), key=site_sort_key)
        vals = rng.uniform(-scale, scale, size=len(sites))
        return WestBoundaryData(rect, dict(zip(sites, vals)))


class TiltedField:
    """psi on a tilted rectangle; true values are ``array * 2**exponent``."""

    def __init__(self, rectangle: TiltedRectangle, array: np.ndarray, exponent: int,
                 lam: float, potential: PotentialField, residual: float):
        self.rectangle = rectangle
        self.array = array              # shape (a + 1, b + 1); [1..a, 1..b] used
        self.exponent = exponent
        self.lam = lam
        self.potential = potential
        self.residual = residual

    def _site_index(self, s: int, t: int) -> tuple[int, int]:
        a, b, s_lo, t_lo, parity = _norm_dims(self.rectangle)
        i, j = s - s_lo + 1, t - t_lo + 1
        if not (1 <= i <= a and 1 <= j <= b) or (i - j) % 2 != parity:
            raise KeyError(f"({s},{t}) not in the rectangle lattice")
        return i, j

    def value_tilted(self, s: int, t: int) -> float:
        i, j = self._site_index(s, t)
        return float(self.array[i, j]) * (2.0 ** self.exponent)

    def mantissa_tilted(self, s: int, t: int) -> float:
        i, j = self._site_index(s, t)
        return float(self.array[i, j])

    def value(self, site) -> float:
        p = Site(*site)
        return self.value_tilted(p.s, p.t)

    def _mask(self) -> np.ndarray:
        a, b, _, _, parity = _norm_dims(self.rectangle)
        ii, jj = np.meshgrid(np.arange(a + 1), np.arange(b + 1), indexing="ij")
        m = ((ii - jj) % 2 == parity)
        m[0, :] = False
        m[:, 0] = False
        return m

    def log_sup(self) -> float:
        """log of the sup norm over the rectangle (exponent-aware)."""
        vals = np.abs(self.array[self._mask()])
        top = float(vals.max(initial=0.0))
        if top == 0.0:
            return -math.inf
        return math.log(top) + self.exponent * math.log(2.0)

    def log_sup_west(self) -> float:
        a, b, s_lo, t_lo, _ = _norm_dims(self.rectangle)
        best = 0.0
        for p in west_boundary_sites(self.rectangle):
            best = max(best, abs(self.mantissa_tilted(p.s, p.t)))
        if best == 0.0:
            return -math.inf
        return math.log(best) + self.exponent * math.log(2.0)

    def sup_norm(self) -> float:
        ls = self.log_sup()
        return 0.0 if ls == -math.inf else math.exp(ls)

    def to_csv(self, comments=()) -> bytes:
        a, b, s_lo, t_lo, parity = _norm_dims(self.rectangle)
        rows = []
        for i in range(1, a + 1):
            for j in range(1, b + 1):
                if (i - j) % 2 == parity:
                    rows.append((s_lo + i - 1, t_lo + j - 1, float(self.array[i, j]), self.exponent))
        return csv_bytes(("s", "t", "value", "exponent"), rows, comments)


def extend_from_west(boundary: WestBoundaryData, V: PotentialField, lam: float) -> TiltedField:
    """Unique extension of west-boundary data with H psi = lambda psi on the
    interior R_{[2,a-1],[2,b-1]}; columns are filled in increasing s, then t,
    so every referenced value precedes its use."""
    rect = boundary.rectangle
    a, b, s_lo, t_lo, parity = _norm_dims(rect)
    if a < 3 or b < 3:
        raise ValueError("rectangle too thin: need a, b >= 3 for a nonempty interior")
    for p in rect.sites():
        if p not in V:
            raise ValueError(f"potential not defined at {p}")

    psi = np.zeros((a + 1, b + 1))
    exponent = 0
    for p, v in boundary.values.items():
        psi[p.s - s_lo + 1, p.t - t_lo + 1] = v

    pot = np.zeros((a + 1, b + 1))
    for i in range(1, a + 1):
        for j in range(1, b + 1):
            if (i - j) % 2 == parity:
                pot[i, j] = V[Site.from_tilted(s_lo + i - 1, t_lo + j - 1)]

    for i in range(3, a + 1):
        js = [j for j in range(3, b + 1) if (i - j) % 2 == parity]
        for j in js:
            psi[i, j] = ((4.0 + pot[i - 1, j - 1] - lam) * psi[i - 1, j - 1]
                         - psi[i - 2, j] - psi[i, j - 2] - psi[i - 2, j - 2])
        colmax = max((abs(psi[i, j]) for j in js), default=0.0)
        if colmax > _RESCALE_LIMIT:
            k = int(math.floor(math.log2(colmax))) - 400
            psi *= 2.0 ** (-k)
            exponent += k

    # interior residual of the original equation (same mantissa scale)
    resid = 0.0
    for i in range(2, a):
        for j in range(2, b):
            if (i - j) % 2 != parity:
                continue
            r = ((4.0 + pot[i, j] - lam) * psi[i, j]
                 - psi[i - 1, j - 1] - psi[i + 1, j + 1] - psi[i - 1, j + 1] - psi[i + 1, j - 1])
            resid = max(resid, abs(r))
    field = TiltedField(rect, psi, exponent, lam, V, resid)
    top = max(1.0, float(np.abs(psi).max()))
    if resid > 1e-9 * top:
        raise RuntimeError(f"extension residual {resid:.3e} exceeds 1e-9 * max|psi|")
    return field


@dataclass(frozen=True)
class GrowthVerdict:
    measured_log_ratio: float
    bound_log: float
    ok: bool


def growth_bound_check(field: TiltedField, growth_constant: float = 10.0) -> GrowthVerdict:
    """Compare sup-norm growth against e^{C b log a} (C configurable)."""
    west = field.log_sup_west()
    if west == -math.inf:
        raise ValueError("boundary is identically zero")
    a, b, *_ = _norm_dims(field.rectangle)
    measured = field.log_sup() - west
    bound = growth_constant * b * math.log(max(a, 2))
    return GrowthVerdict(measured, bound, measured <= bound)


@dataclass(frozen=True)
class SensitivityReport:
    sup_diff: float
    bound: float
    lambda_gap: float


def lambda_sensitivity(boundary: WestBoundaryData, V: PotentialField,
                       lambda0: float, lambda1: float,
                       sensitivity_constant: float = 10.0) -> SensitivityReport:
    """Sup distance between the two extensions sharing boundary data, with
    the reference bound e^{C a log b} * |boundary| * |lambda0 - lambda1|."""
    f0 = extend_from_west(boundary, V, lambda0)
    f1 = extend_from_west(boundary, V, lambda1)
    a, b, s_lo, t_lo, parity = _norm_dims(boundary.rectangle)
    scale0 = 2.0 ** f0.exponent
    scale1 = 2.0 ** f1.exponent
    diff = np.abs(f0.array * scale0 - f1.array * scale1)
    mask = f0._mask()
    sup_diff = float(diff[mask].max(initial=0.0))
    bnd = (math.exp(sensitivity_constant * a * math.log(max(b, 2)))
           * boundary.sup_norm() * abs(lambda0 - lambda1))
    return SensitivityReport(sup_diff, bnd, abs(lambda0 - lambda1))


def alternating_sum_check(field: TiltedField, s1: int, t1: int) -> float:
    """Residual of the alternating-sum identity

        psi_{s1,t1} + psi_{s1-2,t1}
            = sum_{0 <= k <= (t1-1)/2} (-1)^k (4 - lambda + V) psi_{s1-1, t1-1-2k}

    for fields vanishing on the two southern rows R_{[1,a],[1,2]} and
    (s1, t1) in R_{[3,a],[b-1,b]}.  Out-of-rectangle terms read as zero.
    """
    rect = field.rectangle
    a, b, s_lo, t_lo, parity = _norm_dims(rect)

    def psi_n(i: int, j: int) -> float:
        if 1 <= i <= a and 1 <= j <= b and (i - j) % 2 == parity:
            return float(field.array[i, j])
        return 0.0

    i1, j1 = s1 - s_lo + 1, t1 - t_lo + 1
    if not (3 <= i1 <= a and b - 1 <= j1 <= b and (i1 - j1) % 2 == parity):
        raise ValueError(f"({s1},{t1}) must lie in R_[3,a]x[b-1,b] on the lattice")
    south = TiltedRectangle.of(s_lo, s_lo + a - 1, t_lo, min(t_lo + 1, t_lo + b - 1))
    for p in south.sites():
        if field.mantissa_tilted(p.s, p.t) != 0.0:
            raise ValueError("field must vanish on the two southern rows")

    total = 0.0
    k = 0
    while 2 * k <= j1 - 1:
        j = j1 - 1 - 2 * k
        if j >= 1:
            v = field.potential[Site.from_tilted(s_lo + i1 - 2, t_lo + j - 1)]
            total += (-1) ** k * (4.0 - field.lam + v) * psi_n(i1 - 1, j)
        k += 1
    resid = abs(psi_n(i1, j1) + psi_n(i1 - 2, j1) - total)
    return resid * (2.0 ** field.exponent)


@dataclass(frozen=True)
class CrudeContinuationResult:
    found_square: DyadicSquare
    ratio_log: float
    bound_log: float
    ok: bool


def crude_continuation_check(Q: DyadicSquare, defects: list[DyadicSquare],
                             spec: Spectrum, eigenindex: int,
                             small_side: Optional[int] = None,
                             ratio_constant: float = 16.0) -> CrudeContinuationResult:
    """Best small square avoiding the doubled-defect geometry.

    Scans every side-L' square Q' with 2Q' inside Q minus the defects,
    returns the one maximizing the eigenvector's sup norm, and compares
    log(sup_{Q'} |psi| / sup_Q |psi|) against -C_K * L'.  With no defects
    the side must be given explicitly.
    """
    sides = {d.side for d in defects}
    if small_side is not None:
        sides.add(small_side)
    if len(sides) != 1:
        raise ValueError("defect squares and small_side must agree on one side length")
    return _crude_continuation(Q, defects, sides.pop(), spec, eigenindex, ratio_constant)


def _crude_continuation(Q, defects, lp, spec, eigenindex, ratio_constant):
    log2lp = lp.bit_length() - 1
    if 1 << log2lp != lp:
        raise ValueError("small side must be a power of two")
    psi = spec.eigenvectors[:, eigenindex]
    H = spec.source
    x0, y0, x1, y1 = Q.box()
    L = Q.side
    arr = np.zeros((L, L))
    for i, p in enumerate(H.sites):
        arr[p.x - x0, p.y - y0] = abs(psi[i])
    global_max = float(arr.max())

    best = None
    best_val = -1.0
    dboxes = [d.box() for d in defects]
    for cx in range(x0, x1 - lp + 2):
        for cy in range(y0, y1 - lp + 2):
            cand = DyadicSquare(Site(cx, cy), log2lp)
            dbl = cand.double()
            bx = dbl.box()
            if not (x0 <= bx[0] and y0 <= bx[1] and bx[2] <= x1 and bx[3] <= y1):
                continue
            if any(not (bx[2] < db[0] or db[2] < bx[0] or bx[3] < db[1] or db[3] < bx[1])
                   for db in dboxes):
                continue
            val = float(arr[cx - x0:cx - x0 + lp, cy - y0:cy - y0 + lp].max())
            if val > best_val:
                best_val, best = val, cand
    if best is None:
        raise ValueError("no admissible small square: geometry violation")
    if best_val == 0.0:
        raise NearSingularError("eigenvector vanishes on every admissible square")
    ratio_log = math.log(best_val / global_max)
    bound = -ratio_constant * lp
    return CrudeContinuationResult(best, ratio_log, bound, ratio_log >= bound)


def uc_support_count(Q: DyadicSquare, values: np.ndarray, threshold_log: float,
                     sites=None) -> int:
    """|{x in Q : |psi(x)| >= e^{threshold_log} * sup_{Q/2} |psi|}|."""
    sites = tuple(Q.sites()) if sites is None else tuple(sites)
    if len(sites) != len(values):
        raise ValueError("values must align with the square's site ordering")
    half = Q.half()
    half_max = 0.0
    for p, v in zip(sites, values):
        if half.contains(p):
            half_max = max(half_max, abs(float(v)))
    if half_max == 0.0:
        raise ValueError("psi vanishes identically on the concentric half square")
    thr = math.exp(threshold_log) * half_max
    return int(sum(1 for v in values if abs(float(v)) >= thr))
