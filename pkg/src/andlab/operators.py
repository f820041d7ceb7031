"""Restricted Hamiltonians H_Q, spectra, resolvents, and decay fits.

H = -Delta + V with (Delta u)(x) = sum_{|y-x|=1} (u(y) - u(x)), so the
restriction H_Q to a finite site set (zero boundary conditions) has
diagonal 4 + V(x) and off-diagonal -1 exactly between nearest neighbours
inside Q.  Site ordering is row-major by (y, x), fixed so serialized
matrices are reproducible.

Decay bounds are certified in the form |R(x, y)| <= exp(A - m * |x - y|)
with the taxicab distance |x - y|, which is integer-valued; the upper
envelope of log|R| against distance is therefore an exact per-distance
maximum.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .geometry import DyadicSquare, PotentialField, Site, site_sort_key
from .util import csv_bytes


class NearSingularError(RuntimeError):
    """lambda_bar is (nearly) an eigenvalue of H_Q; the resolvent blows up."""


def ordered_sites(Q) -> tuple[Site, ...]:
    if isinstance(Q, DyadicSquare):
        return tuple(Q.sites())
    return tuple(sorted((Site(*p) for p in Q), key=site_sort_key))


def l1_distance_matrix(sites: Sequence[Site]) -> np.ndarray:
    xy = np.array(sites, dtype=np.int64)
    return (np.abs(xy[:, None, 0] - xy[None, :, 0])
            + np.abs(xy[:, None, 1] - xy[None, :, 1]))


@dataclass(frozen=True)
class HamiltonianMatrix:
    sites: tuple[Site, ...]
    matrix: np.ndarray
    potential: PotentialField
    square: Optional[DyadicSquare] = None

    @cached_property
    def index(self) -> dict[Site, int]:
        return {p: i for i, p in enumerate(self.sites)}

    @property
    def n(self) -> int:
        return len(self.sites)

    @cached_property
    def norm_bound(self) -> float:
        """Gershgorin upper bound 8 + max V, used for relative tolerances."""
        vmax = max((self.potential[p] for p in self.sites), default=0.0)
        return 8.0 + vmax

    @cached_property
    def distances(self) -> np.ndarray:
        return l1_distance_matrix(self.sites)


def assemble_hq(Q, V: PotentialField) -> HamiltonianMatrix:
    """H_Q = 1_Q H 1_Q with couplings to the complement dropped."""
    sites = ordered_sites(Q)
    for p in sites:
        if p not in V:
            raise ValueError(f"potential not defined at {p}")
    n = len(sites)
    idx = {p: i for i, p in enumerate(sites)}
    h = np.zeros((n, n))
    for i, p in enumerate(sites):
        h[i, i] = 4.0 + V[p]
        for q in (Site(p.x + 1, p.y), Site(p.x, p.y + 1)):
            j = idx.get(q)
            if j is not None:
                h[i, j] = -1.0
                h[j, i] = -1.0
    return HamiltonianMatrix(sites, h, V, Q if isinstance(Q, DyadicSquare) else None)


def stencil_apply(H: HamiltonianMatrix, psi: np.ndarray) -> np.ndarray:
    """(H_Q psi)(x) = (4 + V(x)) psi(x) - sum of psi over in-Q neighbours,
    computed directly from the stencil (independent of the stored matrix)."""
    out = np.zeros_like(psi, dtype=float)
    idx = H.index
    for i, p in enumerate(H.sites):
        acc = (4.0 + H.potential[p]) * psi[i]
        for q in (Site(p.x + 1, p.y), Site(p.x - 1, p.y), Site(p.x, p.y + 1), Site(p.x, p.y - 1)):
            j = idx.get(q)
            if j is not None:
                acc -= psi[j]
        out[i] = acc
    return out


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray          # descending
    eigenvectors: np.ndarray         # columns match eigenvalues
    source: HamiltonianMatrix

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    def cluster_blocks(self, gap_tol: float = 1e-9) -> list[tuple[int, int]]:
        """Index ranges [a, b) of numerically clustered eigenvalues."""
        tol = gap_tol * max(1.0, self.source.norm_bound)
        blocks = []
        a = 0
        for i in range(1, self.n + 1):
            if i == self.n or self.eigenvalues[i - 1] - self.eigenvalues[i] > tol:
                blocks.append((a, i))
                a = i
        return blocks


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """First nonzero component of every eigenvector made positive."""
    v = vectors.copy()
    for k in range(v.shape[1]):
        col = v[:, k]
        nz = np.nonzero(np.abs(col) > 1e-12 * max(1.0, np.abs(col).max()))[0]
        pivot = nz[0] if len(nz) else 0
        if col[pivot] < 0:
            v[:, k] = -col
    return v


def eigendecompose(H: HamiltonianMatrix, tol: float = 1e-10) -> Spectrum:
    try:
        w, v = np.linalg.eigh(H.matrix)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - eigh on sym is robust
        cond = np.abs(H.matrix).sum(axis=1).max()
        raise RuntimeError(f"eigendecomposition failed (row-sum bound {cond:.3e})") from exc
    w = w[::-1]
    v = _fix_signs(v[:, ::-1])
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    resid = np.abs(H.matrix @ v - v * w[None, :]).max()
    if resid > tol * scale:
        raise RuntimeError(f"eigenpair residual {resid:.3e} exceeds {tol:.1e} * ||H||")
    gram = v.T @ v - np.eye(len(w))
    if np.abs(gram).max() > 1e-10:
        raise RuntimeError("eigenvector Gram matrix deviates from identity")
    if len(w) and (w[-1] < -tol * scale or w[0] > H.norm_bound + tol * scale):
        raise RuntimeError("spectrum escapes the Gershgorin window [0, 8 + max V]")
    return Spectrum(w, v, H)


def operator_norm(matrix: np.ndarray) -> float:
    """Spectral norm of a symmetric matrix (largest |eigenvalue|)."""
    return float(np.abs(sla.eigvalsh(matrix)).max()) if matrix.size else 0.0


def hs_norm(matrix: np.ndarray) -> float:
    return float(np.linalg.norm(matrix))


@dataclass(frozen=True)
class RealInterval:
    lo: float = -math.inf
    hi: float = math.inf
    closed_lo: bool = True
    closed_hi: bool = True

    def contains(self, x: float) -> bool:
        left = x >= self.lo if self.closed_lo else x > self.lo
        right = x <= self.hi if self.closed_hi else x < self.hi
        return left and right


def count_eigs(spec: Spectrum, interval: RealInterval) -> int:
    """trace 1_I(A): the number of eigenvalues in the interval."""
    return int(sum(1 for lam in spec.eigenvalues if interval.contains(float(lam))))


@dataclass(frozen=True)
class DecayFit:
    A: float
    m: float
    ls_intercept: float
    ls_slope: float
    degenerate: bool
    budget: Optional[float] = None

    def bound_at(self, dist) -> float:
        return self.A - self.m * dist


class ResolventMatrix:
    """R_Q = (H_Q - lambda_bar)^{-1}, dense and symmetric.

    Immutable by convention; ``fit`` caches the budget-free decay fit.
    """

    def __init__(self, hamiltonian: HamiltonianMatrix, lambda_bar: float,
                 entries: np.ndarray, spectral_gap: float):
        self.hamiltonian = hamiltonian
        self.lambda_bar = lambda_bar
        self.entries = entries
        self.spectral_gap = spectral_gap

    @property
    def sites(self) -> tuple[Site, ...]:
        return self.hamiltonian.sites

    @cached_property
    def fit(self) -> DecayFit:
        return decay_fit(self)

    def entry(self, x, y) -> float:
        i = self.hamiltonian.index[Site(*x)]
        j = self.hamiltonian.index[Site(*y)]
        return float(self.entries[i, j])

    def max_abs(self) -> float:
        return float(np.abs(self.entries).max())


def _power_norm(matrix: np.ndarray, iters: int = 60) -> float:
    """Deterministic power-iteration estimate of the spectral norm."""
    n = matrix.shape[0]
    v = np.ones(n) / math.sqrt(n)
    v += np.arange(n) * (1e-6 / max(1, n))
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = matrix @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        est = nw
    return float(est)


def resolvent(H: HamiltonianMatrix, lambda_bar: float,
              spectrum: Optional[Spectrum] = None,
              gap_rtol: float = 1e-12,
              residual_tol: float = 1e-8) -> ResolventMatrix:
    """Invert H_Q - lambda_bar, raising NearSingularError inside gap_rtol*||H||.

    With an explicit spectrum the inverse is assembled from eigenpairs
    (exactly symmetric); otherwise a symmetric solve is used and the
    spectral gap is estimated as 1 / ||R|| by power iteration.
    """
    n = H.n
    scale = H.norm_bound
    if spectrum is not None:
        gaps = np.abs(spectrum.eigenvalues - lambda_bar)
        gap = float(gaps.min()) if n else math.inf
        if gap <= gap_rtol * scale:
            raise NearSingularError(
                f"lambda_bar={lambda_bar} within {gap:.3e} of the spectrum")
        inv = (spectrum.eigenvectors / (spectrum.eigenvalues - lambda_bar)[None, :]) \
            @ spectrum.eigenvectors.T
        inv = (inv + inv.T) / 2.0
    else:
        shifted = H.matrix - lambda_bar * np.eye(n)
        try:
            inv = sla.solve(shifted, np.eye(n), assume_a="sym")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NearSingularError(f"H_Q - {lambda_bar} is singular") from exc
        inv = (inv + inv.T) / 2.0
        rnorm = _power_norm(inv)
        gap = 1.0 / rnorm if rnorm > 0 else math.inf
        if gap <= gap_rtol * scale:
            raise NearSingularError(
                f"lambda_bar={lambda_bar} within {gap:.3e} of the spectrum")
    resid = np.abs((H.matrix - lambda_bar * np.eye(n)) @ inv - np.eye(n)).max() if n else 0.0
    if resid > residual_tol:
        raise NearSingularError(
            f"resolvent residual {resid:.3e} exceeds {residual_tol:.1e}")
    return ResolventMatrix(H, lambda_bar, inv, gap)


def decay_envelope(R: ResolventMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-distance upper envelope of log|R| (distances with all-zero rows dropped)."""
    d = R.hamiltonian.distances
    a = np.abs(R.entries)
    dmax = int(d.max(initial=0))
    env = np.full(dmax + 1, -np.inf)
    np.maximum.at(env, d.ravel(), a.ravel())
    keep = env > 0.0
    dists = np.nonzero(keep)[0].astype(float)
    return dists, np.log(env[keep])


def certificate_margin(R: ResolventMatrix, A: float, m: float) -> float:
    """max over pairs of (log|R| + m*d - A); <= 0 means the bound is certified.

    Uses the same expression ordering as the fit construction so the
    certificate is an exact floating comparison.
    """
    dists, env = decay_envelope(R)
    if len(dists) == 0:
        return -math.inf
    return float(np.max(env + m * dists) - A)


def decay_fit(R: ResolventMatrix, budget: Optional[float] = None) -> DecayFit:
    """Certified exponential-decay pair (A, m) with |R(x,y)| <= e^{A - m d}.

    A(m) := max over pairs of (log|R| + m d) is the least valid prefactor at
    rate m.  With a budget the result is the largest m with A(m) <= budget;
    without one, the budget defaults to the larger of A(0) and the
    least-squares intercept of the envelope, which keeps the pair valid
    while maximizing the certified rate.
    """
    if np.all(R.entries == 0.0):
        raise ValueError("all-zero resolvent")
    dists, env = decay_envelope(R)
    a0 = float(env[dists == 0.0][0]) if np.any(dists == 0.0) else -math.inf
    positive = dists > 0
    if not np.any(positive):
        # single-site resolvent: rate is unconstrained, reported as m = 0
        # with the degenerate flag
        return DecayFit(a0, 0.0, a0, 0.0, True, budget)
    dpos, epos = dists[positive], env[positive]
    if len(dists) >= 2:
        slope, intercept = np.polyfit(dists, env, 1)
        ls_slope, ls_intercept = float(-slope), float(intercept)
    else:
        ls_slope, ls_intercept = 0.0, float(env.max())
    b = budget if budget is not None else max(a0, ls_intercept)
    if a0 > b:
        raise ValueError(f"budget {b} below log max |R| = {a0}")
    # A(m) = max(env + m * dists) is increasing in m; the largest feasible
    # rate is limited by the positive-distance entries only
    m_star = float(np.min((b - epos) / dpos))
    A = float(np.max(env + m_star * dists))
    return DecayFit(A, m_star, ls_intercept, ls_slope, False, budget)


def entrywise_decay_holds(R: ResolventMatrix, A: float, m: float) -> bool:
    return certificate_margin(R, A, m) <= 0.0


# ---------------------------------------------------------------------------
# exports

_MAGIC = b"ALAB1"


def matrix_to_binary(matrix: np.ndarray) -> bytes:
    """Compact layout: magic 'ALAB1', u32 rows, u32 cols, row-major f64 LE."""
    m = np.ascontiguousarray(matrix, dtype="<f8")
    return _MAGIC + struct.pack("<II", m.shape[0], m.shape[1]) + m.tobytes()


def matrix_from_binary(data: bytes) -> np.ndarray:
    if data[:5] != _MAGIC:
        raise ValueError("bad magic: not an ALAB1 matrix blob")
    rows, cols = struct.unpack("<II", data[5:13])
    return np.frombuffer(data[13:], dtype="<f8").reshape(rows, cols).copy()


def matrix_to_csv(sites: Sequence[Site], matrix: np.ndarray, comments=()) -> bytes:
    rows = []
    for i, p in enumerate(sites):
        for j, q in enumerate(sites):
            rows.append((p.x, p.y, q.x, q.y, float(matrix[i, j])))
    return csv_bytes(("x1", "y1", "x2", "y2", "value"), rows, comments)


def spectrum_to_csv(spec: Spectrum, comments=()) -> bytes:
    rows = [(k, float(lam)) for k, lam in enumerate(spec.eigenvalues)]
    return csv_bytes(("index", "eigenvalue"), rows, comments)
