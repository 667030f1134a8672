"""Sample generation and empirical concentration radii for the sample covariance.

Three zero-mean families are supported, all with covariance exactly equal to
the model's ground truth: Gaussian, Rademacher-coordinate sub-Gaussian, and
the uniform distribution on the sphere of radius sqrt(p) (scaled through the
covariance square root).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .spd import SpdMatrix, spectral_norm, sym
from .spectral import SpectralModel

FAMILIES = ("gaussian", "sub_gaussian_rademacher", "bounded_sphere")


def derived_rng(seed: int, *branch: int) -> np.random.Generator:
    """Independent stream for (seed, branch); reproducible under any order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, branch)]))


@dataclasses.dataclass(frozen=True)
class DatasetSpec:
    model: SpectralModel
    family: str
    n: int
    seed: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; pick one of {FAMILIES}")
        if self.n < 2:
            raise ValueError("need at least two samples")


@dataclasses.dataclass(frozen=True)
class Dataset:
    spec: DatasetSpec | None
    samples: np.ndarray
    sample_cov: SpdMatrix

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


def dataset_from_samples(samples: np.ndarray, spec: DatasetSpec | None = None) -> Dataset:
    """Wrap raw zero-mean samples; the covariance is the plain outer-product mean."""
    samples = np.asarray(samples, dtype=np.float64)
    cov = SpdMatrix(samples.T @ samples / samples.shape[0])
    return Dataset(spec, samples, cov)


def _raw_samples(rng: np.random.Generator, family: str, n: int, p: int) -> np.ndarray:
    if family == "gaussian":
        return rng.standard_normal((n, p))
    if family == "sub_gaussian_rademacher":
        return rng.integers(0, 2, size=(n, p)) * 2.0 - 1.0
    # bounded_sphere: sqrt(p) * uniform direction, isotropic with identity covariance
    z = rng.standard_normal((n, p))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z * math.sqrt(p)


def sample_dataset(spec: DatasetSpec, seed_branch: int | None = None) -> Dataset:
    """Draw n i.i.d. vectors with covariance equal to the model's ground truth.

    seed_branch derives an independent replication stream from the spec seed.
    """
    p = spec.model.dim
    rng = derived_rng(spec.seed) if seed_branch is None else derived_rng(spec.seed, seed_branch)
    raw = _raw_samples(rng, spec.family, spec.n, p)
    x = raw @ spec.model.sigma_star.sqrtm()
    return dataset_from_samples(x, spec)


@dataclasses.dataclass(frozen=True)
class ConcentrationEstimate:
    radius: float
    confidence_level: float
    replications: int


def _quantile_order_stat(values: np.ndarray, level: float) -> float:
    """Order statistic at ceil(level * R), clamped to the maximum."""
    r = len(values)
    k = min(math.ceil(level * r), r)
    return float(np.sort(values)[k - 1])


def estimate_delta_hat(spec: DatasetSpec, replications: int) -> ConcentrationEstimate:
    """Empirical (1 - 1/n)-quantile of the relative spectral deviation of Sigma-hat."""
    if replications < 20:
        raise ValueError("need at least 20 replications")
    snorm = spec.model.sigma_star.spectral_norm
    target = spec.model.sigma_star.entries
    devs = np.empty(replications)
    for k in range(replications):
        ds = sample_dataset(spec, seed_branch=k)
        devs[k] = spectral_norm(ds.sample_cov.entries - target) / snorm
    level = 1.0 - 1.0 / spec.n
    return ConcentrationEstimate(_quantile_order_stat(devs, level), level, replications)


def estimate_delta_tilde(
    spec: DatasetSpec, functional, replications: int
) -> ConcentrationEstimate:
    """Concentration radius of the rank-r projected, whitened sample covariance.

    The functional supplies the orthonormal limit factor V; the measured
    deviation is the spectral norm of V^T S^-1/2 (cov - S) S^-1/2 V.
    """
    if replications < 20:
        raise ValueError("need at least 20 replications")
    isqrt = spec.model.sigma_star.inv_sqrtm()
    vmat = functional.limit_v
    w = isqrt @ vmat  # p x r
    target = spec.model.sigma_star.entries
    devs = np.empty(replications)
    for k in range(replications):
        ds = sample_dataset(spec, seed_branch=k)
        proj = sym(w.T @ (ds.sample_cov.entries - target) @ w)
        devs[k] = spectral_norm(proj)
    level = 1.0 - 1.0 / spec.n
    return ConcentrationEstimate(_quantile_order_stat(devs, level), level, replications)


def save_dataset_csv(path, dataset: Dataset) -> None:
    """Write samples as n rows of p comma-separated values."""
    with open(path, "w") as fh:
        for row in dataset.samples:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def spec_to_json_dict(spec: DatasetSpec) -> dict:
    return {
        "family": spec.family,
        "n": spec.n,
        "seed": spec.seed,
        "model": {
            "mu": [float(x) for x in spec.model.group_values],
            "mult": [int(x) for x in spec.model.group_mults],
        },
    }
