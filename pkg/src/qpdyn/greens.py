"""Finite-volume Green's functions and their good/bad classification.

The Green's function of a volume is G = (H_volume - z)^{-1} at a complex
energy z = E + i eps.  A box is *good* when |G(n, n')| decays at rate c2
for all pairs at sup-distance >= ceil(N/10), and *strongly good* when in
addition ||G|| <= exp(N^sigma).  Scans count centers whose translated box
fails strong goodness for some shape, and a log-log fit extracts the
sublinear exponent from counts across scales.

Volumes are dense and capped at desk scale (a few thousand points), where
direct factorisation is the most verifiable route.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from .lattice import Coords, ElementaryRegion, enumerate_shapes, tile_disjoint
from .operators import OperatorSpec, assemble, site_list

MAX_DENSE_POINTS = 4500


@dataclass(frozen=True)
class ComplexEnergy:
    """z = energy + i epsilon; epsilon = 1/T when tied to time averaging."""

    energy: float
    epsilon: float

    def __post_init__(self) -> None:
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be non-negative")

    @classmethod
    def from_time(cls, energy: float, horizon: float) -> "ComplexEnergy":
        return cls(energy, 1.0 / horizon)

    @property
    def z(self) -> complex:
        return complex(self.energy, self.epsilon)


def _as_complex(z) -> complex:
    if isinstance(z, ComplexEnergy):
        return z.z
    return complex(z)


@dataclass(frozen=True)
class GreensMatrix:
    """Dense resolvent of one volume with a solve-quality diagnostic.

    ``residual`` is ||(H - z) G - I|| (spectral norm for small volumes,
    Frobenius upper bound beyond 1024 points).
    """

    sites: tuple[Coords, ...]
    z: complex
    matrix: np.ndarray
    residual: float

    def entry(self, n: Coords, nprime: Coords) -> complex:
        i = self.sites.index(tuple(n))
        j = self.sites.index(tuple(nprime))
        return self.matrix[i, j]

    def norm(self) -> float:
        """Spectral norm of G, computed independently via SVD."""
        return float(np.linalg.norm(self.matrix, 2))


def greens(spec: OperatorSpec, region_or_points, z) -> GreensMatrix:
    """Solve (H_volume - z) G = I by dense LU factorisation."""
    zc = _as_complex(z)
    sites = site_list(region_or_points)
    if not sites:
        raise ValueError("region is empty")
    if len(sites) > MAX_DENSE_POINTS:
        raise ValueError(
            f"volume has {len(sites)} points; dense solves are capped at "
            f"{MAX_DENSE_POINTS}"
        )
    H = assemble(spec, sites)
    A = H.astype(np.complex128, copy=True)
    A[np.diag_indices(len(sites))] -= zc
    eye = np.eye(len(sites), dtype=np.complex128)
    singular = (
        f"volume is singular at z={zc}; use epsilon > 0 away from eigenvalues"
    )
    try:
        with np.errstate(divide="ignore", invalid="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            G = sla.solve(A, eye)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(singular) from exc
    if not np.isfinite(G).all():  # scipy may hand back inf/nan with a warning
        raise np.linalg.LinAlgError(singular)
    R = A @ G - eye
    if len(sites) <= 1024:
        residual = float(np.linalg.norm(R, 2))
    else:
        residual = float(np.linalg.norm(R))
    return GreensMatrix(sites, zc, G, residual)


def resolvent_norm(spec: OperatorSpec, region_or_points, z) -> float:
    """||G|| = 1 / dist(z, spectrum of the restriction), exact for the
    normal matrix H - z; computed from the Hermitian eigenvalues."""
    zc = _as_complex(z)
    H = assemble(spec, region_or_points)
    w = np.linalg.eigvalsh(H)
    dist = float(np.min(np.hypot(w - zc.real, zc.imag)))
    if dist == 0.0:
        return math.inf
    return 1.0 / dist


@dataclass(frozen=True)
class ClassificationParams:
    """Knobs of the good / strongly-good classification.

    ``c2`` is the decay rate demanded of Green's functions, at most the
    kernel rate c1 (default four fifths of it); ``sigma`` the norm exponent;
    ``xi`` the sub-box scale exponent; ``varsigma`` the sublinear-count
    exponent; ``eps_max`` the largest imaginary part probed; ``min_scale``
    the smallest admissible box size.
    """

    c2: float = 0.8
    sigma: float = 0.5
    xi: float = 0.5
    varsigma: float = 0.95  # near 1, yet small enough that the count bound
    # can actually fail at desk scales (N^(0.95-xi) < tile count at N ~ 100)
    eps_max: float = 1.0
    min_scale: int = 1

    def __post_init__(self) -> None:
        if self.c2 <= 0:
            raise ValueError("c2 must be positive")
        for name in ("sigma", "xi", "varsigma"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.eps_max <= 0:
            raise ValueError("eps_max must be positive")

    @classmethod
    def for_spec(cls, spec: OperatorSpec, **overrides) -> "ClassificationParams":
        overrides.setdefault("c2", 0.8 * spec.kernel.decay_rate)
        return cls(**overrides)


def pair_distance_threshold(size: int) -> int:
    # decay is demanded from |n - n'| >= N/10, rounded up to stay integral
    return max(1, math.ceil(size / 10.0))


@dataclass(frozen=True)
class DecayWitness:
    pair: tuple[Coords, Coords]
    value: float
    bound: float

    @property
    def margin(self) -> float:
        """log |G| - log bound; positive means the decay bound fails."""
        if self.value == 0.0:
            return -math.inf
        return math.log(self.value) - math.log(self.bound)


def _worst_decay_pair(
    sites: Sequence[Coords], G: np.ndarray, min_dist: int, c2: float
) -> DecayWitness | None:
    coords = np.asarray(sites, dtype=float)
    diff = np.abs(coords[:, None, :] - coords[None, :, :]).max(axis=2)
    mask = diff >= min_dist
    if not mask.any():
        return None
    absG = np.abs(G)
    with np.errstate(divide="ignore"):
        margin = np.where(mask, np.log(np.maximum(absG, 1e-300)) + c2 * diff, -np.inf)
    i, j = np.unravel_index(np.argmax(margin), margin.shape)
    d = diff[i, j]
    return DecayWitness(
        (tuple(sites[i]), tuple(sites[j])),
        float(absG[i, j]),
        math.exp(-c2 * d),
    )


@dataclass(frozen=True)
class BoxVerdict:
    """Classification record for one box at one complex energy."""

    region: ElementaryRegion
    z: complex
    norm: float
    norm_bound: float
    witness: DecayWitness | None
    good: bool
    strongly_good: bool

    @property
    def decay_margin(self) -> float:
        return self.witness.margin if self.witness is not None else -math.inf


def classify_box(
    spec: OperatorSpec,
    region: ElementaryRegion,
    z,
    params: ClassificationParams,
) -> BoxVerdict:
    """Good / strongly-good verdict for one elementary region."""
    zc = _as_complex(z)
    g = greens(spec, region, zc)
    witness = _worst_decay_pair(
        g.sites, g.matrix, pair_distance_threshold(region.size), params.c2
    )
    good = witness is None or witness.margin <= 0.0
    norm = resolvent_norm(spec, region, zc)
    norm_bound = math.exp(region.size**params.sigma)
    strongly_good = good and norm <= norm_bound
    return BoxVerdict(region, zc, norm, norm_bound, witness, good, strongly_good)


def is_good(
    spec: OperatorSpec, region: ElementaryRegion, z, c2: float
) -> tuple[bool, DecayWitness | None]:
    """Class-G check: |G(n,n')| <= exp(-c2 |n-n'|) for all pairs at
    sup-distance >= ceil(N/10).  Returns the verdict and the worst pair."""
    zc = _as_complex(z)
    g = greens(spec, region, zc)
    witness = _worst_decay_pair(
        g.sites, g.matrix, pair_distance_threshold(region.size), c2
    )
    return witness is None or witness.margin <= 0.0, witness


def is_strongly_good(
    spec: OperatorSpec, region: ElementaryRegion, z, c2: float, sigma: float
) -> bool:
    """Class-SG check: class G plus ||G|| <= exp(N^sigma)."""
    good, _ = is_good(spec, region, z, c2)
    if not good:
        return False
    return resolvent_norm(spec, region, z) <= math.exp(region.size**sigma)


@dataclass(frozen=True)
class BadSetReport:
    """Bad centers of one scan: n is bad when some shape of size N1
    translated to n fails strong goodness."""

    size: int
    sub_size: int
    z: complex
    bad_centers: tuple[Coords, ...]
    total_centers: int

    @property
    def count(self) -> int:
        return len(self.bad_centers)

    @property
    def fraction(self) -> float:
        return self.count / self.total_centers


def scan_centers(size: int, d: int) -> Iterable[Coords]:
    """Lexicographic centers of the scan cube [-N, N]^d."""
    return itertools.product(range(-size, size + 1), repeat=d)


def scan_boxes(
    spec: OperatorSpec,
    size: int,
    sub_size: int,
    z,
    params: ClassificationParams,
    centers: Iterable[Coords] | None = None,
) -> Iterable[tuple[Coords, int, BoxVerdict]]:
    """Exhaustive verdicts for every center in [-N, N]^d and every shape of
    size N1; yields (center, shape index, verdict).

    ``centers`` restricts the scan to a subset, letting a pool of workers
    split the cube into chunks while keeping center order deterministic."""
    if sub_size >= size:
        raise ValueError("sub-box size must be smaller than the scan size")
    d = spec.dimension
    shapes = enumerate_shapes(d, sub_size)
    zc = _as_complex(z)
    for center in centers if centers is not None else scan_centers(size, d):
        center = tuple(center)
        for shape_id, shape in enumerate(shapes):
            verdict = classify_box(spec, shape.translate(center), zc, params)
            yield center, shape_id, verdict


def bad_set(
    spec: OperatorSpec,
    size: int,
    sub_size: int,
    z,
    params: ClassificationParams,
    centers: Iterable[Coords] | None = None,
) -> BadSetReport:
    """Scan of [-N, N]^d for centers with a non-strongly-good shape."""
    if sub_size >= size:
        raise ValueError("sub-box size must be smaller than the scan size")
    d = spec.dimension
    shapes = enumerate_shapes(d, sub_size)
    zc = _as_complex(z)
    bad: list[Coords] = []
    total = 0
    for center in centers if centers is not None else scan_centers(size, d):
        center = tuple(center)
        total += 1
        for shape in shapes:
            if not is_strongly_good(
                spec, shape.translate(center), zc, params.c2, params.sigma
            ):
                bad.append(center)
                break
    return BadSetReport(size, sub_size, zc, tuple(bad), total)


@dataclass(frozen=True)
class SublinearFit:
    """delta = 1 - slope of log(count + 1) against log N."""

    delta: float
    slope: float
    slope_stderr: float
    residual_rms: float
    no_bad_boxes: bool


def fit_sublinear_exponent(counts: Sequence[tuple[int, int]]) -> SublinearFit:
    """Least-squares sublinear exponent from (N, bad count) pairs.

    Needs at least three scales.  All-zero counts cap delta at 1 and set
    the ``no_bad_boxes`` flag.
    """
    pts = [(int(n), int(c)) for n, c in counts]
    if len({n for n, _ in pts}) < 3:
        raise ValueError("need at least three scales to fit an exponent")
    if any(c < 0 for _, c in pts):
        raise ValueError("counts must be non-negative")
    if all(c == 0 for _, c in pts):
        return SublinearFit(1.0, 0.0, 0.0, 0.0, True)
    x = np.log([n for n, _ in pts])
    y = np.log([c + 1.0 for _, c in pts])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    resid = y - fitted
    dof = max(len(pts) - 2, 1)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(float(np.sum(resid**2)) / dof / sxx) if sxx > 0 else math.inf
    return SublinearFit(
        delta=1.0 - float(slope),
        slope=float(slope),
        slope_stderr=stderr,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        no_bad_boxes=False,
    )


def verify_resolvent_identity(
    spec: OperatorSpec, region1, region2, z
) -> float:
    """Deviation of the exact two-block resolvent identity.

    For disjoint volumes with union L,
    G_L = (G_1 + G_2) - (G_1 + G_2)(H_L - H_1 - H_2) G_L
    holds exactly; returns the relative spectral-norm deviation.
    """
    zc = _as_complex(z)
    sites1 = site_list(region1)
    sites2 = site_list(region2)
    if set(sites1) & set(sites2):
        raise ValueError("regions overlap")
    union = site_list(sites1 + sites2)
    G = greens(spec, union, zc).matrix
    idx1 = [union.index(p) for p in sites1]
    idx2 = [union.index(p) for p in sites2]
    n = len(union)
    B = np.zeros((n, n), dtype=np.complex128)
    B[np.ix_(idx1, idx1)] = greens(spec, sites1, zc).matrix
    B[np.ix_(idx2, idx2)] = greens(spec, sites2, zc).matrix
    H = assemble(spec, union).astype(np.complex128)
    coupling = np.zeros_like(H)
    coupling[np.ix_(idx1, idx2)] = H[np.ix_(idx1, idx2)]
    coupling[np.ix_(idx2, idx1)] = H[np.ix_(idx2, idx1)]
    rhs = B - B @ coupling @ G
    dev = np.linalg.norm(G - rhs, 2)
    return float(dev / max(1.0, np.linalg.norm(G, 2)))


def combes_thomas_probe(
    spec: OperatorSpec,
    radius: int,
    energy: float,
    epsilon: float = 0.0,
    source: Coords | None = None,
) -> float:
    """Measured off-diagonal decay rate of G on a cube of the given radius.

    Requires the energy to sit at distance >= 1 from the spectrum of the
    truncation.  Fits log |G(source, n)| against |n| over the annulus
    R/4 <= |n| <= R/2; a diagonal resolvent reports an infinite rate.
    """
    d = spec.dimension
    src = tuple(source) if source is not None else (0,) * d
    box = ElementaryRegion((0,) * d, radius)
    sites = site_list(box)
    H = assemble(spec, sites)
    w = np.linalg.eigvalsh(H)
    zc = complex(energy, epsilon)
    dist = float(np.min(np.hypot(w - energy, epsilon)))
    if dist < 1.0:
        raise ValueError(
            f"energy {energy} is at distance {dist:.3g} < 1 from the "
            "truncated spectrum"
        )
    A = H.astype(np.complex128, copy=True)
    A[np.diag_indices(len(sites))] -= zc
    rhs = np.zeros(len(sites), dtype=np.complex128)
    rhs[sites.index(src)] = 1.0
    col = sla.solve(A, rhs)
    lo, hi = math.ceil(radius / 4.0), radius // 2
    xs, ys = [], []
    for p, g in zip(sites, col):
        r = max(abs(c) for c in p)
        if lo <= r <= hi and abs(g) > 0.0:
            xs.append(r)
            ys.append(math.log(abs(g)))
    if not xs:
        return math.inf
    slope = np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)[0]
    rate = -float(slope)
    if rate <= 0.0:
        raise ArithmeticError(
            f"measured rate {rate:.3g} is not positive; the energy may be "
            "too close to the spectrum for this radius"
        )
    return rate


@dataclass(frozen=True)
class MultiscaleReport:
    """Outcome of the sub-box count vs whole-box decay experiment."""

    size: int
    sub_size: int
    bad_sub_boxes: int
    sub_box_total: int
    count_bound: float
    hypothesis_met: bool
    decay_holds: bool | None
    required_rate: float
    witness: DecayWitness | None

    @property
    def status(self) -> str:
        return "ok" if self.hypothesis_met else "hypothesis-not-met"


def multiscale_decay_check(
    spec: OperatorSpec,
    region: ElementaryRegion,
    z,
    params: ClassificationParams,
    slack: float | None = None,
) -> MultiscaleReport:
    """Count bad sub-boxes in the canonical tiling and, when the count is
    sublinear, test whether the host Green's function decays at rate
    c2 - slack (default slack c2/10) for pairs at distance >= ceil(N/10)."""
    zc = _as_complex(z)
    N = region.size
    M = int(N**params.xi)
    if M < 10:
        raise ValueError("sub-box scale N^xi must be at least 10")
    tiles = tile_disjoint(region, M)
    bad = 0
    for tile in tiles:
        good, _ = is_good(spec, tile, zc, params.c2)
        if not good:
            bad += 1
    bound = N**params.varsigma / N**params.xi
    met = bad <= bound
    decay_holds: bool | None = None
    witness = None
    rate = params.c2 - (slack if slack is not None else params.c2 / 10.0)
    if met:
        g = greens(spec, region, zc)
        witness = _worst_decay_pair(
            g.sites, g.matrix, pair_distance_threshold(N), rate
        )
        decay_holds = witness is None or witness.margin <= 0.0
    return MultiscaleReport(
        size=N,
        sub_size=M,
        bad_sub_boxes=bad,
        sub_box_total=len(tiles),
        count_bound=bound,
        hypothesis_met=met,
        decay_holds=decay_holds,
        required_rate=rate,
        witness=witness,
    )
