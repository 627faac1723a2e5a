"""Covariant long-range kernels, quasi-periodic potentials, and the
finite-volume Hermitian matrices they assemble into.

A kernel is a finite Toeplitz table S(k) indexed by lattice offsets and
validated against Hermiticity, S(k) = conj(S(-k)), and an exponential decay
envelope |S(k)| <= C1 exp(-c1 |k|).  The lattice operator is

    H(n, n') = S(n - n') / coupling + v(f^n(x)) [n = n']

where f is a torus shift and v a real trigonometric polynomial.  Specs are
immutable (and hashable, so eigendecompositions can be cached per spec).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .lattice import Coords, sup_norm

LINEAR_FORM = "linear-form"
RANK_ONE = "rank-one"
PRODUCT = "product"
_MODES = (LINEAR_FORM, RANK_ONE, PRODUCT)


def _freeze(mapping: Mapping) -> tuple:
    return tuple(sorted(mapping.items()))


@dataclass(frozen=True)
class KernelSpec:
    """Finite Toeplitz kernel with an exponential decay certificate.

    ``coefficients`` maps offsets k in Z^d to S(k); missing offsets are zero.
    Construction checks that the table is Hermitian (so assembled matrices
    are exactly Hermitian) and that every stored value respects the decay
    envelope given by ``decay_amplitude`` (C1) and ``decay_rate`` (c1).
    """

    dimension: int
    coefficients: tuple[tuple[Coords, complex], ...]
    decay_amplitude: float = math.e
    decay_rate: float = 1.0
    _table: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("dimension must be at least 1")
        if self.decay_amplitude <= 0 or self.decay_rate <= 0:
            raise ValueError("decay constants must be positive")
        table = {}
        for k, v in self.coefficients:
            k = tuple(int(c) for c in k)
            if len(k) != self.dimension:
                raise ValueError(f"offset {k} has the wrong dimension")
            table[k] = complex(v)
        for k, v in table.items():
            neg = tuple(-c for c in k)
            if neg not in table or table[neg] != v.conjugate():
                raise ValueError(f"kernel is not Hermitian at offset {k}")
            if any(k) and abs(v) > self.decay_amplitude * math.exp(
                -self.decay_rate * sup_norm(k)
            ):
                raise ValueError(f"kernel violates the decay envelope at {k}")
        object.__setattr__(
            self, "coefficients", tuple(sorted(table.items()))
        )
        object.__setattr__(self, "_table", table)

    @classmethod
    def zero(cls, dimension: int = 1) -> "KernelSpec":
        return cls(dimension, ())

    @classmethod
    def laplacian(cls, dimension: int = 1) -> "KernelSpec":
        """Nearest-neighbour hopping: S(+-e_i) = 1."""
        coeffs = {}
        for i in range(dimension):
            e = tuple(1 if j == i else 0 for j in range(dimension))
            coeffs[e] = 1.0
            coeffs[tuple(-c for c in e)] = 1.0
        return cls(dimension, _freeze(coeffs))

    @classmethod
    def toeplitz(
        cls,
        coefficients: Mapping[Coords, complex],
        decay_amplitude: float,
        decay_rate: float,
    ) -> "KernelSpec":
        """Kernel from an explicit offset table; the conjugate at -k is
        filled in when missing."""
        table = {tuple(k): complex(v) for k, v in coefficients.items()}
        for k, v in list(table.items()):
            table.setdefault(tuple(-c for c in k), v.conjugate())
        dimension = len(next(iter(table), (0,)))
        return cls(dimension, _freeze(table), decay_amplitude, decay_rate)

    def value(self, offset: Coords) -> complex:
        return self._table.get(offset, 0.0 + 0.0j)

    def offsets(self) -> Iterable[Coords]:
        return self._table.keys()

    def row_sum(self) -> float:
        """sup_n sum_k |S(k)|, exact for a finite table."""
        return sum(abs(v) for v in self._table.values())

    @property
    def is_real(self) -> bool:
        return all(v.imag == 0.0 for v in self._table.values())


@dataclass(frozen=True)
class PotentialSpec:
    """Real trigonometric polynomial on the torus T^b.

    v(theta) = constant + sum_k cos_k cos(2 pi k.theta)
                        + sum_k sin_k sin(2 pi k.theta)
    with real coefficients indexed by integer frequency vectors.
    """

    torus_dim: int
    constant: float = 0.0
    cosine: tuple[tuple[Coords, float], ...] = ()
    sine: tuple[tuple[Coords, float], ...] = ()

    def __post_init__(self) -> None:
        if self.torus_dim < 1:
            raise ValueError("torus dimension must be at least 1")
        for name in ("cosine", "sine"):
            terms = []
            for k, a in getattr(self, name):
                k = tuple(int(c) for c in k)
                if len(k) != self.torus_dim:
                    raise ValueError(f"frequency {k} has the wrong dimension")
                terms.append((k, float(a)))
            object.__setattr__(self, name, tuple(sorted(terms)))

    @classmethod
    def constant_value(cls, c: float, torus_dim: int = 1) -> "PotentialSpec":
        return cls(torus_dim, constant=c)

    @classmethod
    def cosine_series(
        cls, coefficients: Mapping[Coords, float], torus_dim: int | None = None
    ) -> "PotentialSpec":
        coeffs = {tuple(k): float(a) for k, a in coefficients.items()}
        b = torus_dim or len(next(iter(coeffs)))
        return cls(b, cosine=_freeze(coeffs))

    def __call__(self, theta: Sequence[float]) -> float:
        total = self.constant
        for k, a in self.cosine:
            total += a * math.cos(2.0 * math.pi * _dot(k, theta))
        for k, a in self.sine:
            total += a * math.sin(2.0 * math.pi * _dot(k, theta))
        return total

    def values(self, thetas: np.ndarray) -> np.ndarray:
        """Vectorised evaluation; ``thetas`` has shape (m, torus_dim)."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        out = np.full(thetas.shape[0], self.constant)
        for k, a in self.cosine:
            out += a * np.cos(2.0 * np.pi * (thetas @ np.asarray(k, dtype=float)))
        for k, a in self.sine:
            out += a * np.sin(2.0 * np.pi * (thetas @ np.asarray(k, dtype=float)))
        return out

    def sup_bound(self) -> float:
        """l1 coefficient bound on sup |v|."""
        return (
            abs(self.constant)
            + sum(abs(a) for _, a in self.cosine)
            + sum(abs(a) for _, a in self.sine)
        )


def _dot(k: Sequence[int], theta: Sequence[float]) -> float:
    return sum(ki * ti for ki, ti in zip(k, theta, strict=True))


@dataclass(frozen=True)
class ShiftDynamics:
    """Torus shift orbits n -> f^n(x).

    mode "linear-form": d = 1, any torus dimension b, f^n(x) = x + n alpha.
    mode "rank-one":    b = 1, any lattice dimension d, the phase advances
                        by n . alpha with one alpha component per axis.
    mode "product":     d = b, component-wise x_i + n_i alpha_i.
    """

    mode: str
    alpha: tuple[float, ...]
    phase: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        alpha = tuple(float(a) % 1.0 for a in self.alpha)
        phase = tuple(float(x) % 1.0 for x in self.phase)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "phase", phase)
        if self.mode == LINEAR_FORM and len(phase) != len(alpha):
            raise ValueError("linear-form needs one alpha per torus axis")
        if self.mode == RANK_ONE and len(phase) != 1:
            raise ValueError("rank-one drives a one-dimensional torus")
        if self.mode == PRODUCT and len(phase) != len(alpha):
            raise ValueError("product mode needs d = b")

    @property
    def torus_dim(self) -> int:
        return len(self.phase)

    def lattice_dim_compatible(self, d: int) -> bool:
        if self.mode == LINEAR_FORM:
            return d == 1
        if self.mode == RANK_ONE:
            return d == len(self.alpha)
        return d == len(self.alpha)

    def orbit(self, n: Sequence[int]) -> tuple[float, ...]:
        """f^n(x) for a lattice site n."""
        if self.mode == LINEAR_FORM:
            (k,) = n
            return tuple((x + k * a) % 1.0 for x, a in zip(self.phase, self.alpha))
        if self.mode == RANK_ONE:
            s = sum(k * a for k, a in zip(n, self.alpha, strict=True))
            return ((self.phase[0] + s) % 1.0,)
        return tuple(
            (x + k * a) % 1.0
            for x, k, a in zip(self.phase, n, self.alpha, strict=True)
        )

    def orbit_array(self, sites: np.ndarray) -> np.ndarray:
        """Orbit points for an (m, d) integer site array, shape (m, b)."""
        sites = np.atleast_2d(np.asarray(sites, dtype=float))
        alpha = np.asarray(self.alpha, dtype=float)
        phase = np.asarray(self.phase, dtype=float)
        if self.mode == LINEAR_FORM:
            return (phase[None, :] + sites[:, :1] * alpha[None, :]) % 1.0
        if self.mode == RANK_ONE:
            return (phase[0] + sites @ alpha)[:, None] % 1.0
        return (phase[None, :] + sites * alpha[None, :]) % 1.0

    def advanced(self, k: Sequence[int]) -> "ShiftDynamics":
        """Same dynamics started at the shifted phase f^k(x)."""
        return ShiftDynamics(self.mode, self.alpha, self.orbit(k))


@dataclass(frozen=True)
class OperatorSpec:
    """H = kernel / coupling + v(f^n(x)) on the diagonal."""

    kernel: KernelSpec
    potential: PotentialSpec
    dynamics: ShiftDynamics
    coupling: float = 1.0

    def __post_init__(self) -> None:
        if self.coupling <= 0:
            raise ValueError("coupling must be positive")
        if not self.dynamics.lattice_dim_compatible(self.kernel.dimension):
            raise ValueError(
                "shift dynamics are incompatible with the lattice dimension"
            )
        if self.potential.torus_dim != self.dynamics.torus_dim:
            raise ValueError("potential and dynamics torus dimensions differ")

    @property
    def dimension(self) -> int:
        return self.kernel.dimension

    @property
    def is_real(self) -> bool:
        return self.kernel.is_real

    @property
    def spectral_bound(self) -> float:
        """K with the spectrum inside [-K + 1, K - 1].

        Row-sum bound: sup_n sum_n' |H(n, n')| <= row_sum(S)/coupling
        + sup|v|, and the spectrum of a Hermitian operator lies within the
        sup row sum.
        """
        return (
            1.0
            + self.kernel.row_sum() / self.coupling
            + self.potential.sup_bound()
        )

    def potential_at(self, n: Coords) -> float:
        return self.potential(self.dynamics.orbit(n))

    def with_phase(self, phase: Sequence[float]) -> "OperatorSpec":
        dyn = ShiftDynamics(self.dynamics.mode, self.dynamics.alpha, tuple(phase))
        return OperatorSpec(self.kernel, self.potential, dyn, self.coupling)

    def fingerprint(self) -> str:
        import hashlib

        text = repr(
            (
                self.kernel.coefficients,
                self.kernel.decay_amplitude,
                self.kernel.decay_rate,
                self.potential.constant,
                self.potential.cosine,
                self.potential.sine,
                self.dynamics.mode,
                self.dynamics.alpha,
                self.dynamics.phase,
                self.coupling,
            )
        )
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def evaluate_potential(spec: OperatorSpec, n: Coords) -> float:
    """v(f^n(x)) by exact trig-polynomial evaluation at the orbit point."""
    return spec.potential_at(n)


def spectral_bound(spec: OperatorSpec) -> float:
    return spec.spectral_bound


def site_list(region_or_points) -> tuple[Coords, ...]:
    """Canonical (lexicographically sorted) site tuple for a region or an
    explicit iterable of lattice points."""
    if hasattr(region_or_points, "points"):
        pts = region_or_points.points()
    else:
        pts = region_or_points
    return tuple(sorted(tuple(int(c) for c in p) for p in pts))


def potential_values(spec: OperatorSpec, sites: Sequence[Coords]) -> np.ndarray:
    arr = np.asarray(sites, dtype=float)
    return spec.potential.values(spec.dynamics.orbit_array(arr))


def assemble(spec: OperatorSpec, region_or_points) -> np.ndarray:
    """Finite-volume matrix of H over the canonical site ordering.

    Returns a real array when the kernel table is real, complex otherwise;
    either way the matrix equals its conjugate transpose exactly because the
    kernel table is validated Hermitian.
    """
    sites = site_list(region_or_points)
    if not sites:
        raise ValueError("region is empty")
    n = len(sites)
    index = {p: i for i, p in enumerate(sites)}
    dtype = np.float64 if spec.is_real else np.complex128
    H = np.zeros((n, n), dtype=dtype)
    inv = 1.0 / spec.coupling
    for k, v in spec.kernel.coefficients:
        hop = v.real * inv if spec.is_real else v * inv
        if not any(k):
            H[np.diag_indices(n)] += hop
            continue
        for i, p in enumerate(sites):
            q = tuple(a - b for a, b in zip(p, k))
            j = index.get(q)
            if j is not None:
                H[i, j] += hop
    H[np.diag_indices(n)] += potential_values(spec, sites)
    return H


def free_laplacian(dimension: int = 1) -> OperatorSpec:
    """Pure nearest-neighbour hopping with zero potential."""
    return OperatorSpec(
        KernelSpec.laplacian(dimension),
        PotentialSpec.constant_value(0.0),
        _trivial_dynamics(dimension),
    )


def diagonal_model(
    potential: PotentialSpec, dynamics: ShiftDynamics, dimension: int = 1
) -> OperatorSpec:
    return OperatorSpec(KernelSpec.zero(dimension), potential, dynamics)


def almost_mathieu(
    lam: float, alpha: float, phase: float = 0.0
) -> OperatorSpec:
    """Nearest-neighbour hopping plus 2 lam cos(2 pi (x + n alpha))."""
    return OperatorSpec(
        KernelSpec.laplacian(1),
        PotentialSpec.cosine_series({(1,): 2.0 * lam}),
        ShiftDynamics(LINEAR_FORM, (alpha,), (phase,)),
    )


def _trivial_dynamics(dimension: int) -> ShiftDynamics:
    if dimension == 1:
        return ShiftDynamics(LINEAR_FORM, (0.0,), (0.0,))
    return ShiftDynamics(RANK_ONE, (0.0,) * dimension, (0.0,))


@dataclass
class StateVector:
    """Finitely supported complex amplitudes on Z^d."""

    amplitudes: dict[Coords, complex]

    def __post_init__(self) -> None:
        self.amplitudes = {
            tuple(int(c) for c in k): complex(v)
            for k, v in self.amplitudes.items()
        }

    @classmethod
    def delta(cls, site: Coords) -> "StateVector":
        return cls({tuple(site): 1.0 + 0.0j})

    @property
    def support(self) -> tuple[Coords, ...]:
        return tuple(sorted(self.amplitudes))

    @property
    def support_radius(self) -> int:
        return max(sup_norm(p) for p in self.amplitudes) if self.amplitudes else 0

    def norm_sq(self) -> float:
        return sum(abs(v) ** 2 for v in self.amplitudes.values())

    def dense(self, sites: Sequence[Coords]) -> np.ndarray:
        out = np.zeros(len(sites), dtype=np.complex128)
        for i, p in enumerate(sites):
            v = self.amplitudes.get(p)
            if v is not None:
                out[i] = v
        return out
