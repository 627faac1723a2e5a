"""Equidistribution and Diophantine tooling for shift frequencies.

The discrepancy of a finite orbit is the worst deviation between its
empirical distribution and Lebesgue measure over axis-aligned boxes
[rho_1, beta_1] x ... x [rho_b, beta_b] with rho < beta.  In one dimension
the supremum is computed exactly from the sorted points (candidate
endpoints at data values, plus open-interval limits); in higher dimension
the same candidate construction runs per axis, optionally thinned to a
grid resolution, and the result is flagged as method "grid-bd".

Frequencies are certified against the Diophantine condition
||k . alpha|| >= tau / |k|^kappa by brute force up to a cutoff, and chosen
with a small continued-fraction expander.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
import numpy as np

from .operators import ShiftDynamics


@dataclass(frozen=True)
class DiscrepancyReport:
    """Worst empirical-vs-Lebesgue deviation over axis-aligned boxes.

    ``witness_low``/``witness_high`` bound the (possibly limiting) box where
    the supremum is approached; ``attained`` is False when the supremum is a
    limit of shrinking or open boxes rather than a member of the family.
    """

    n_points: int
    torus_dim: int
    value: float
    witness_low: tuple[float, ...]
    witness_high: tuple[float, ...]
    method: str  # exact-1d | grid-bd
    attained: bool
    grid_resolution: int | None = None


def _exact_1d(x: np.ndarray) -> tuple[float, tuple[float, float], bool]:
    n = x.size
    u, counts = np.unique(x, return_counts=True)
    cum = np.cumsum(counts)  # points <= u_j
    below = cum - counts  # points < u_j
    m = u.size

    # overshoot by closed boxes [u_i, u_j], i < j:
    #   (cum_j - below_i)/n - (u_j - u_i) splits into right_j + left_i
    best_over = -math.inf
    over_pair = (float(u[0]), float(u[0]))
    over_attained = True
    if m >= 2:
        right = cum / n - u
        left = u - below / n
        prefix = np.maximum.accumulate(left)[:-1]
        cand = right[1:] + prefix
        k = int(np.argmax(cand))
        best_over = float(cand[k])
        j = k + 1
        i = int(np.argmax(left[: j]))
        over_pair = (float(u[i]), float(u[j]))
    # the shrinking box [u_i, u_i + 0) approaches count_i / n
    k = int(np.argmax(counts))
    singleton = float(counts[k]) / n
    if singleton > best_over:
        best_over = singleton
        over_pair = (float(u[k]), float(u[k]))
        over_attained = False

    # deficit by open boxes with virtual endpoints at 0 and 1
    left_v = np.concatenate(([0.0], u - cum / n))
    right_v = np.concatenate((u - below / n, [0.0]))
    ends = np.concatenate((u, [1.0]))
    starts = np.concatenate(([0.0], u))
    prefix_min = np.minimum.accumulate(left_v)
    cand = right_v - prefix_min
    k = int(np.argmax(cand))
    best_def = float(cand[k])
    i = int(np.argmin(left_v[: k + 1]))
    def_pair = (float(starts[i]), float(ends[k]))

    if best_over >= best_def:
        return best_over, over_pair, over_attained
    return best_def, def_pair, False


def _axis_candidates(vals: np.ndarray, resolution: int | None) -> np.ndarray:
    u = np.unique(vals)
    if resolution is not None and u.size > resolution:
        idx = np.unique(np.linspace(0, u.size - 1, resolution).astype(int))
        u = u[idx]
    return u


def _grid_nd(
    pts: np.ndarray, resolution: int | None
) -> tuple[float, tuple, tuple, bool]:
    n, b = pts.shape
    axes = [_axis_candidates(pts[:, s], resolution) for s in range(b - 1)]

    best = -math.inf
    witness = ((0.0,) * b, (0.0,) * b)
    attained = True

    def scan_last(mask_closed, mask_open, area, lows, highs):
        nonlocal best, witness, attained
        # closed boxes on the last axis for the overshoot direction
        sub = pts[mask_closed, -1]
        if sub.size:
            u, counts = np.unique(sub, return_counts=True)
            cum = np.cumsum(counts)
            below = cum - counts
            right = cum / n - area * u
            left = area * u - below / n
            if u.size >= 2:
                prefix = np.maximum.accumulate(left)[:-1]
                cand = right[1:] + prefix
                k = int(np.argmax(cand))
                if cand[k] > best:
                    j = k + 1
                    i = int(np.argmax(left[: j]))
                    best = float(cand[k])
                    witness = (lows + (float(u[i]),), highs + (float(u[j]),))
                    attained = True
            k = int(np.argmax(counts))
            if counts[k] / n > best:
                best = float(counts[k]) / n
                witness = (lows + (float(u[k]),), highs + (float(u[k]),))
                attained = False
        # open boxes on the last axis for the deficit direction
        sub = pts[mask_open, -1]
        u, counts = (np.unique(sub, return_counts=True) if sub.size else
                     (np.empty(0), np.empty(0, dtype=int)))
        cum = np.cumsum(counts) if u.size else np.empty(0)
        below = cum - counts if u.size else np.empty(0)
        left_v = np.concatenate(([0.0], area * u - cum / n))
        right_v = np.concatenate((area * u - below / n, [area - sub.size / n]))
        ends = np.concatenate((u, [1.0]))
        starts = np.concatenate(([0.0], u))
        prefix_min = np.minimum.accumulate(left_v)
        cand = right_v - prefix_min
        k = int(np.argmax(cand))
        if cand[k] > best:
            i = int(np.argmin(left_v[: k + 1]))
            best = float(cand[k])
            witness = (lows + (float(starts[i]),), highs + (float(ends[k]),))
            attained = False

    def descend(axis, mask_closed, mask_open, area, lows, highs):
        if axis == b - 1:
            scan_last(mask_closed, mask_open, area, lows, highs)
            return
        cands = axes[axis]
        extended = np.concatenate(([0.0], cands, [1.0]))
        col = pts[:, axis]
        for ia, a in enumerate(extended[:-1]):
            for bb in extended[ia + 1 :]:
                if bb <= a:
                    continue
                closed = mask_closed & (col >= a) & (col <= bb)
                open_ = mask_open & (col > a) & (col < bb)
                descend(
                    axis + 1,
                    closed,
                    open_,
                    area * (bb - a),
                    lows + (float(a),),
                    highs + (float(bb),),
                )

    all_true = np.ones(n, dtype=bool)
    descend(0, all_true, all_true, 1.0, (), ())
    return best, witness[0], witness[1], attained


def discrepancy(
    points, grid_resolution: int | None = 32
) -> DiscrepancyReport:
    """Discrepancy of a finite sequence in [0, 1)^b.

    One-dimensional input is handled exactly; in higher dimension the scan
    runs over candidate box corners at (optionally thinned) data coordinate
    values, which attains the supremum for the counting part but is a lower
    bound once thinned.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 1 and pts.shape[1] > 1 and np.ndim(points) == 1:
        pts = pts.T
    n, b = pts.shape
    if n < 1:
        raise ValueError("need at least one point")
    if np.any(pts < 0.0) or np.any(pts >= 1.0):
        raise ValueError("points must lie in [0, 1)^b")
    if b == 1:
        value, (lo, hi), attained = _exact_1d(pts[:, 0])
        return DiscrepancyReport(
            n, 1, value, (lo,), (hi,), "exact-1d", attained
        )
    value, lows, highs, attained = _grid_nd(pts, grid_resolution)
    return DiscrepancyReport(
        n, b, value, lows, highs, "grid-bd", attained, grid_resolution
    )


def orbit_points(dynamics: ShiftDynamics, n_points: int) -> np.ndarray:
    """The orbit sequence f(1, x), ..., f(N, x) as an (N, b) array.

    Defined for dynamics driven by a single lattice index (d = 1)."""
    if not dynamics.lattice_dim_compatible(1):
        raise ValueError("orbit sequences need one-dimensional dynamics")
    sites = np.arange(1, n_points + 1, dtype=float)[:, None]
    return dynamics.orbit_array(sites)


@dataclass(frozen=True)
class DiophantineParams:
    kappa: float = 1.01
    tau: float = 0.3
    k_max: int = 10**6

    def __post_init__(self) -> None:
        if self.kappa < 1.0:
            raise ValueError("kappa must be at least 1")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")


@dataclass(frozen=True)
class DiophantineReport:
    passed: bool
    worst_k: tuple[int, ...]
    margin: float  # min over k of ||k.alpha|| |k|^kappa
    params: DiophantineParams


def _torus_distance(values: np.ndarray) -> np.ndarray:
    frac = np.mod(values, 1.0)
    return np.minimum(frac, 1.0 - frac)


def diophantine_check(
    alpha, params: DiophantineParams = DiophantineParams()
) -> DiophantineReport:
    """Brute-force certificate for ||k.alpha|| >= tau / |k|^kappa.

    Scans every integer vector with 0 < |k| <= k_max (sup norm); by the
    symmetry ||(-k).alpha|| = ||k.alpha|| only half the box is visited.
    """
    vec = np.atleast_1d(np.asarray(alpha, dtype=float))
    b = vec.size
    if b == 1:
        k = np.arange(1, params.k_max + 1, dtype=float)
        margins = _torus_distance(k * vec[0]) * k**params.kappa
        i = int(np.argmin(margins))
        worst = (i + 1,)
        margin = float(margins[i])
    else:
        margin = math.inf
        worst = (0,) * b
        rng = range(-params.k_max, params.k_max + 1)
        lead = range(0, params.k_max + 1)
        for k in itertools.product(lead, *[rng] * (b - 1)):
            if not any(k):
                continue
            if k[0] == 0 and next(c for c in k if c) < 0:
                continue
            size = max(abs(c) for c in k)
            dist = float(_torus_distance(np.dot(k, vec)))
            m = dist * size**params.kappa
            if m < margin:
                margin = m
                worst = tuple(k)
    return DiophantineReport(margin >= params.tau, worst, margin, params)


@dataclass(frozen=True)
class ContinuedFraction:
    value: float
    quotients: tuple[int, ...]
    convergents: tuple[tuple[int, int], ...]  # (p, q) with p/q -> value
    rational: bool


def continued_fraction(
    alpha: float, depth: int = 20, rational_tol: float = 1e-12
) -> ContinuedFraction:
    """Standard continued-fraction expansion of alpha in (0, 1).

    Stops early, flagging a rational, when the remainder vanishes to
    working precision.  Convergents p/q satisfy |alpha - p/q| < 1/q^2.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    quotients: list[int] = []
    convergents: list[tuple[int, int]] = []
    p_prev, q_prev = 1, 0
    p, q = 0, 1
    x = alpha
    rational = False
    for _ in range(depth):
        inv = 1.0 / x
        a = int(math.floor(inv))
        rem = inv - a
        if rem > 1.0 - rational_tol:  # guard against floor(1/x) landing low
            a += 1
            rem = 0.0
        quotients.append(a)
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        convergents.append((p, q))
        if rem < rational_tol or q * q > 1e15:
            rational = rem < rational_tol
            break
        x = rem
    return ContinuedFraction(alpha, tuple(quotients), tuple(convergents), rational)
