"""Second and fourth cumulants, from a model or from samples."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    DimensionMismatchError,
    InsufficientDataError,
    InvalidDataError,
    ModelViolationError,
    UndefinedMomentError,
)
from .mixing import as_matrix
from .tensors import SymMat, SymTen4, outer_power, packed_indices

__all__ = [
    "Exponential",
    "StudentT",
    "Gaussian",
    "Moments",
    "WithGaussianNoise",
    "SourceSpec",
    "CumulantPair",
    "source_moments",
    "population_cumulants",
    "sample_cumulants",
]


@dataclass(frozen=True)
class Exponential:
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("exponential rate must be positive")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # inverse CDF
        return -np.log1p(-rng.random(n)) / self.rate


@dataclass(frozen=True)
class StudentT:
    dof: float = 5.0

    def __post_init__(self):
        if not self.dof > 0:
            raise ValueError("degrees of freedom must be positive")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal(n)
        chi2 = rng.chisquare(self.dof, n)
        return z / np.sqrt(chi2 / self.dof)


@dataclass(frozen=True)
class Gaussian:
    variance: float = 1.0

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("gaussian variance must be positive")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.sqrt(self.variance) * rng.standard_normal(n)


@dataclass(frozen=True)
class Moments:
    """A source known only through its variance and fourth cumulant.

    Usable for population cumulants; it cannot be sampled.
    """

    variance: float = 1.0
    fourth_cumulant: float = 6.0

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("variance must be positive")

    def sample(self, rng, n):
        raise ModelViolationError("a Moments source has no distribution to sample from")


@dataclass(frozen=True)
class WithGaussianNoise:
    """``base + sqrt(noise_variance) * z`` with ``z`` standard normal and independent.

    Adding Gaussian noise changes the variance but no higher cumulant.
    """

    base: "Descriptor"
    noise_variance: float = 1.0

    def __post_init__(self):
        if self.noise_variance < 0:
            raise ValueError("noise variance must be non-negative")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        y = self.base.sample(rng, n)
        return y + np.sqrt(self.noise_variance) * rng.standard_normal(n)


Descriptor = Union[Exponential, StudentT, Gaussian, Moments, WithGaussianNoise]


def source_moments(d: Descriptor) -> tuple[float, float]:
    """Variance and fourth cumulant of a source descriptor."""
    if isinstance(d, Exponential):
        # cumulants of exp(rate) are (n-1)! / rate**n
        return 1.0 / d.rate**2, 6.0 / d.rate**4
    if isinstance(d, StudentT):
        nu = d.dof
        if nu <= 4:
            raise UndefinedMomentError(f"Student t with {nu} dof has no finite fourth moment")
        var = nu / (nu - 2.0)
        return var, 6.0 / (nu - 4.0) * var**2
    if isinstance(d, Gaussian):
        return float(d.variance), 0.0
    if isinstance(d, Moments):
        return float(d.variance), float(d.fourth_cumulant)
    if isinstance(d, WithGaussianNoise):
        var, k4 = source_moments(d.base)
        return var + float(d.noise_variance), k4
    raise TypeError(f"unknown source descriptor {d!r}")


@dataclass(frozen=True)
class SourceSpec:
    """Per-source distribution descriptors; at most one may be Gaussian."""

    entries: tuple

    def __init__(self, entries: Sequence[Descriptor]):
        object.__setattr__(self, "entries", tuple(entries))
        gauss = [j for j, e in enumerate(self.entries) if isinstance(e, Gaussian)]
        if len(gauss) > 1:
            raise ModelViolationError(f"at most one Gaussian source allowed, got {len(gauss)}")

    def check_recoverable(self) -> None:
        """Raise unless every non-Gaussian source has a nonzero fourth cumulant."""
        for j, e in enumerate(self.entries):
            if not isinstance(e, Gaussian) and source_moments(e)[1] == 0.0:
                raise ModelViolationError(f"source {j} is non-Gaussian with zero fourth cumulant")

    def __len__(self):
        return len(self.entries)

    @property
    def gaussian_index(self) -> Optional[int]:
        for j, e in enumerate(self.entries):
            if isinstance(e, Gaussian):
                return j
        return None

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        mom = [source_moments(e) for e in self.entries]
        return np.array([m[0] for m in mom]), np.array([m[1] for m in mom])

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw an ``n x J`` matrix of independent sources."""
        if not self.entries:
            return np.empty((n, 0))
        return np.column_stack([e.sample(rng, n) for e in self.entries])

    @classmethod
    def default(cls, J: int, gaussian_variance: float = 1.0, source=None) -> "SourceSpec":
        """``J-1`` non-Gaussian sources followed by one Gaussian."""
        source = Moments(1.0, 6.0) if source is None else source
        return cls([source] * (J - 1) + [Gaussian(gaussian_variance)])


@dataclass(frozen=True)
class CumulantPair:
    k2: SymMat
    k4: SymTen4
    provenance: str = "population"
    n: Optional[int] = None

    def __post_init__(self):
        if self.k2.dim != self.k4.dim:
            raise DimensionMismatchError("k2 and k4 dimensions differ")
        if self.provenance not in ("population", "sample"):
            raise ValueError("provenance must be 'population' or 'sample'")

    @property
    def dim(self) -> int:
        return self.k2.dim

    @property
    def is_sample(self) -> bool:
        return self.provenance == "sample"


def population_cumulants(A, spec: SourceSpec) -> CumulantPair:
    """Cumulants of ``x = A s``: ``k2 = sum sigma_j a_j^2``, ``k4 = sum lambda_j a_j^4``."""
    A = as_matrix(A)
    I, J = A.shape
    if len(spec) != J:
        raise DimensionMismatchError(f"{len(spec)} sources for a matrix with {J} columns")
    sigma, lam = spec.moments()
    k2 = SymMat.zeros(I)
    k4 = SymTen4.zeros(I)
    d2 = np.zeros_like(k2.data)
    d4 = np.zeros_like(k4.data)
    for j in range(J):
        a = A[:, j]
        d2 += sigma[j] * outer_power(a, 2).data
        if not isinstance(spec.entries[j], Gaussian):
            d4 += lam[j] * outer_power(a, 4).data
    return CumulantPair(SymMat(I, d2), SymTen4(I, d4), "population")


def sample_cumulants(X, block_size: int = 65536) -> CumulantPair:
    """Plug-in (divide-by-n) second and fourth cumulants of the rows of ``X``.

    Two passes: the mean first, then centred moments accumulated over row
    blocks in a fixed order.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidDataError("data must be a 2-D array")
    n, I = X.shape
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {n}")
    if I < 1:
        raise InvalidDataError("data has no columns")
    if not np.all(np.isfinite(X)):
        raise InvalidDataError("data contains non-finite values")

    mean = np.zeros(I)
    for start in range(0, n, block_size):
        mean += X[start:start + block_size].sum(axis=0)
    mean /= n

    idx2 = packed_indices(I, 2)
    idx4 = packed_indices(I, 4)
    s = np.zeros(len(idx2))
    m4 = np.zeros(len(idx4))
    for start in range(0, n, block_size):
        Z = X[start:start + block_size] - mean
        P = Z[:, idx2[:, 0]] * Z[:, idx2[:, 1]]
        s += P.sum(axis=0)
        m4 += np.einsum("ni,ni->i", Z[:, idx4[:, 0]] * Z[:, idx4[:, 1]], Z[:, idx4[:, 2]] * Z[:, idx4[:, 3]])
    s /= n
    m4 /= n

    S = SymMat(I, s).full()
    i, j, k, l = idx4.T
    k4 = m4 - (S[i, j] * S[k, l] + S[i, k] * S[j, l] + S[i, l] * S[j, k])
    return CumulantPair(SymMat(I, s), SymTen4(I, k4), "sample", n=n)
