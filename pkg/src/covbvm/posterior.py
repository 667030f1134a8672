"""Pseudo-posterior sampling for covariance matrices.

The Gaussian log-likelihood is used regardless of the data family.  With an
inverse Wishart prior the posterior is conjugate and sampled exactly via the
Bartlett decomposition; arbitrary density-evaluable priors go through a
random-walk Metropolis chain on the Cholesky factor, and vicinity-restricted
posteriors through exact rejection against a dominating conjugate proposal.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from typing import Callable

import numpy as np

from .datagen import Dataset, derived_rng
from .errors import (
    BadDegreesOfFreedom,
    BadDimension,
    NotPositiveDefinite,
    PoorMixing,
    RejectionStarved,
    UndefinedFlatness,
)
from .spd import SpdMatrix, spectral_norm, sym

_CHUNK = 4096


# ---------------------------------------------------------------------------
# Priors


@dataclasses.dataclass(frozen=True)
class InverseWishartPrior:
    """Inverse Wishart prior with scale G and degrees of freedom p + b - 1."""

    scale: SpdMatrix
    b: float = 2.0

    def __post_init__(self):
        if self.b <= 0:
            raise ValueError("shape offset b must be positive")

    @property
    def dim(self) -> int:
        return self.scale.dim

    def dof(self, p: int | None = None) -> float:
        return (self.dim if p is None else p) + self.b - 1.0

    def log_density(self, sigma: np.ndarray) -> float:
        """Unnormalized log density; raises if sigma is not SPD."""
        p = self.dim
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite("prior evaluated off the SPD cone") from exc
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
        inv = np.linalg.inv(sigma)
        return -0.5 * (2 * p + self.b) * logdet - 0.5 * float(
            np.sum(self.scale.entries * inv)
        )

    def log_density_batch(self, mats: np.ndarray) -> np.ndarray:
        """Unnormalized log density over a (M, p, p) stack of SPD matrices."""
        p = self.dim
        _, logdet = np.linalg.slogdet(mats)
        trace_term = np.einsum("ij,mji->m", self.scale.entries, np.linalg.inv(mats))
        return -0.5 * (2 * p + self.b) * logdet - 0.5 * trace_term


@dataclasses.dataclass(frozen=True)
class UniformVicinityPrior:
    """Uniform prior on the relative spectral-norm vicinity of a center matrix."""

    center: SpdMatrix
    delta: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("vicinity radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.dim

    def contains(self, sigma: np.ndarray) -> np.ndarray | bool:
        dev = spectral_norm(sym(sigma - self.center.entries))
        return dev <= self.delta * self.center.spectral_norm

    def log_density(self, sigma: np.ndarray) -> float:
        return 0.0 if self.contains(sigma) else -math.inf


@dataclasses.dataclass(frozen=True)
class GenericPrior:
    """Density-evaluable prior; sampler-only priors are not representable."""

    log_density_fn: Callable[[np.ndarray], float]
    name: str = "generic"

    def log_density(self, sigma: np.ndarray) -> float:
        return float(self.log_density_fn(sigma))


PriorSpec = InverseWishartPrior | UniformVicinityPrior | GenericPrior


def default_inverse_wishart_prior(p: int) -> InverseWishartPrior:
    """Near-flat conjugate prior: tiny scale, b = 2."""
    return InverseWishartPrior(SpdMatrix(0.01 * np.eye(p)), b=2.0)


# ---------------------------------------------------------------------------
# Likelihood


def log_likelihood(sigma: SpdMatrix | np.ndarray, data: Dataset) -> float:
    """Gaussian pseudo-log-likelihood of a covariance matrix given the data."""
    a = sigma.entries if isinstance(sigma, SpdMatrix) else np.asarray(sigma)
    n, p = data.n, data.dim
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("log-likelihood needs an SPD matrix") from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    # Tr(Sigma^-1 S) = || L^-1 S^1/2 ||_F^2; two triangular solves are enough
    half = np.linalg.solve(chol, data.sample_cov.entries)
    trace_term = float(np.trace(np.linalg.solve(chol, half.T)))
    return -0.5 * n * logdet - 0.5 * n * trace_term - 0.5 * n * p * math.log(2 * math.pi)


# ---------------------------------------------------------------------------
# Inverse Wishart sampling (Bartlett decomposition)


def _wishart_bartlett(chol: np.ndarray, dof: float, count: int, rng) -> np.ndarray:
    """Draws from Wishart(chol @ chol.T, dof) as a (count, p, p) stack."""
    p = chol.shape[0]
    a = np.zeros((count, p, p))
    il, jl = np.tril_indices(p, -1)
    if len(il):
        a[:, il, jl] = rng.standard_normal((count, len(il)))
    df = dof - np.arange(p)
    idx = np.arange(p)
    a[:, idx, idx] = np.sqrt(rng.chisquare(df, size=(count, p)))
    m = np.einsum("ij,cjk->cik", chol, a)
    return np.einsum("cik,cjk->cij", m, m)


def sample_inverse_wishart(
    scale: SpdMatrix, dof: float, count: int, seed: int, chunk: int = _CHUNK
) -> np.ndarray:
    """i.i.d. draws from the inverse Wishart with the given scale and dof.

    Samples the precision from Wishart(scale^-1, dof) via Bartlett and inverts;
    output is a symmetrized (count, p, p) stack.
    """
    p = scale.dim
    if dof <= p - 1:
        raise BadDegreesOfFreedom(f"dof {dof} must exceed p - 1 = {p - 1}")
    if count < 1:
        raise ValueError("count must be positive")
    inv_scale = scale.inv()
    chol = np.linalg.cholesky(sym(inv_scale))
    out = np.empty((count, p, p))
    rng = derived_rng(seed)
    for start in range(0, count, chunk):
        stop = min(start + chunk, count)
        w = _wishart_bartlett(chol, dof, stop - start, rng)
        out[start:stop] = sym(np.linalg.inv(w))
    return out


# ---------------------------------------------------------------------------
# Posterior samplers


@dataclasses.dataclass(frozen=True)
class ExactConjugate:
    pass


@dataclasses.dataclass(frozen=True)
class Metropolis:
    step_scale: float = 0.1
    burn_in: int = 2000
    thin: int = 5


@dataclasses.dataclass(frozen=True)
class RejectionInVicinity:
    delta_bar: float


@dataclasses.dataclass(frozen=True)
class PosteriorSampler:
    prior: PriorSpec
    data: Dataset
    method: ExactConjugate | Metropolis | RejectionInVicinity
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.method, ExactConjugate) and not isinstance(
            self.prior, InverseWishartPrior
        ):
            raise BadDimension("exact conjugate sampling needs an inverse Wishart prior")
        if (
            isinstance(self.prior, InverseWishartPrior)
            and self.prior.dim != self.data.dim
        ):
            raise BadDimension(
                f"prior dimension {self.prior.dim} != data dimension {self.data.dim}"
            )


@dataclasses.dataclass(frozen=True)
class PosteriorDraws:
    matrices: np.ndarray  # (M, p, p)
    warnings: tuple[str, ...] = ()
    seed_provenance: str = ""

    def __len__(self) -> int:
        return self.matrices.shape[0]


def conjugate_posterior_params(prior: InverseWishartPrior, data: Dataset):
    """Scale and dof of the exact inverse Wishart posterior."""
    n, p = data.n, data.dim
    scale = SpdMatrix(n * data.sample_cov.entries + prior.scale.entries)
    return scale, n + p + prior.b - 1.0


def _sample_exact(sampler: PosteriorSampler, count: int) -> PosteriorDraws:
    scale, dof = conjugate_posterior_params(sampler.prior, sampler.data)
    mats = sample_inverse_wishart(scale, dof, count, sampler.seed)
    return PosteriorDraws(mats, seed_provenance=f"exact_conjugate:{sampler.seed}")


def _chol_theta_to_matrix(theta: np.ndarray, p: int):
    """Map the free lower-triangle/log-diagonal vector to (L, Sigma, log|J|)."""
    lmat = np.zeros((p, p))
    il, jl = np.tril_indices(p, -1)
    lmat[il, jl] = theta[p:]
    diag = np.exp(theta[:p])
    lmat[np.arange(p), np.arange(p)] = diag
    sigma = lmat @ lmat.T
    # dSigma = 2^p prod L_ii^{p-i+1} dL, plus dL_ii = L_ii dtheta_i
    powers = p - np.arange(p)  # p, p-1, ..., 1
    log_jac = p * math.log(2.0) + float(np.sum((powers + 1) * np.log(diag)))
    return lmat, sigma, log_jac


def _log_target(theta: np.ndarray, sampler: PosteriorSampler, p: int) -> float:
    _, sigma, log_jac = _chol_theta_to_matrix(theta, p)
    try:
        lp = sampler.prior.log_density(sigma)
    except NotPositiveDefinite:
        return -math.inf
    if not np.isfinite(lp):
        return -math.inf
    return log_likelihood(sigma, sampler.data) + lp + log_jac


def _sample_metropolis(sampler: PosteriorSampler, count: int) -> PosteriorDraws:
    method: Metropolis = sampler.method
    p = sampler.data.dim
    rng = derived_rng(sampler.seed)
    d = p * (p + 1) // 2
    chol0 = np.linalg.cholesky(sampler.data.sample_cov.entries)
    theta = np.concatenate(
        [np.log(np.diag(chol0)), chol0[np.tril_indices(p, -1)]]
    )
    # For a vicinity prior the sample covariance may start outside the support;
    # fall back to the prior center.
    if not np.isfinite(_log_target(theta, sampler, p)):
        if isinstance(sampler.prior, UniformVicinityPrior):
            cc = np.linalg.cholesky(sampler.prior.center.entries)
            theta = np.concatenate([np.log(np.diag(cc)), cc[np.tril_indices(p, -1)]])
        if not np.isfinite(_log_target(theta, sampler, p)):
            raise RejectionStarved("no valid Metropolis starting point")
    step = method.step_scale
    cur_lp = _log_target(theta, sampler, p)
    total = method.burn_in + count * method.thin
    accepted_post = 0
    proposals_post = 0
    window_acc = 0
    window_len = 0
    mats = np.empty((count, p, p))
    kept = 0
    for it in range(total):
        prop = theta + step * rng.standard_normal(d)
        prop_lp = _log_target(prop, sampler, p)
        accept = math.log(rng.random()) < prop_lp - cur_lp
        if accept:
            theta, cur_lp = prop, prop_lp
        if it < method.burn_in:
            window_acc += accept
            window_len += 1
            if window_len == 100:
                rate = window_acc / window_len
                step *= math.exp(rate - 0.3)  # target 0.3 acceptance, frozen after burn-in
                window_acc = window_len = 0
        else:
            proposals_post += 1
            accepted_post += accept
            if (it - method.burn_in + 1) % method.thin == 0 and kept < count:
                _, sigma, _ = _chol_theta_to_matrix(theta, p)
                mats[kept] = sym(sigma)
                kept += 1
    notes = []
    rate = accepted_post / max(proposals_post, 1)
    if not 0.05 <= rate <= 0.95:
        msg = f"Metropolis acceptance rate {rate:.3f} outside [0.05, 0.95]"
        warnings.warn(msg, PoorMixing)
        notes.append(msg)
    return PosteriorDraws(
        mats[:kept], tuple(notes), seed_provenance=f"metropolis:{sampler.seed}"
    )


def _rejection_log_cap(sampler: PosteriorSampler, ref: InverseWishartPrior) -> float:
    """Upper bound for log(prior / reference conjugate prior) over the vicinity."""
    prior = sampler.prior
    if isinstance(prior, InverseWishartPrior) and prior == ref:
        return 0.0
    center = sampler.data.spec.model.sigma_star if sampler.data.spec else None
    if isinstance(prior, UniformVicinityPrior):
        center = prior.center
        delta = prior.delta
    else:
        delta = sampler.method.delta_bar
    if center is None:
        raise RejectionStarved("no vicinity center available for the rejection cap")
    snorm = center.spectral_norm
    lo = float(center.eigenvalues[0]) - delta * snorm
    if lo <= 0:
        raise RejectionStarved("vicinity touches the SPD boundary; cannot bound the envelope")
    p = center.dim
    # Weyl: each eigenvalue moves by at most delta * ||center|| inside the
    # vicinity, so -log ref density <= (2p+b)/2 sum log(mu_i + delta s) + Tr(G)/(2 lo)
    logdet_hi = float(np.sum(np.log(center.eigenvalues + delta * snorm)))
    neg_ref = 0.5 * (2 * p + ref.b) * logdet_hi + float(
        np.trace(ref.scale.entries)
    ) / (2.0 * lo)
    if isinstance(prior, UniformVicinityPrior):
        return neg_ref
    # generic prior: empirical envelope from a pilot batch, with a safety margin
    scale, dof = conjugate_posterior_params(ref, sampler.data)
    pilot = sample_inverse_wishart(scale, dof, 2000, sampler.seed + 104729)
    ratios = []
    for s in pilot:
        try:
            ratios.append(prior.log_density(s) - ref.log_density(s))
        except NotPositiveDefinite:
            continue
    if not ratios:
        raise RejectionStarved("pilot batch produced no density-evaluable draws")
    return float(np.max(ratios)) + math.log(10.0)


def _sample_rejection(sampler: PosteriorSampler, count: int) -> PosteriorDraws:
    method: RejectionInVicinity = sampler.method
    prior = sampler.prior
    ref = (
        prior
        if isinstance(prior, InverseWishartPrior)
        else default_inverse_wishart_prior(sampler.data.dim)
    )
    scale, dof = conjugate_posterior_params(ref, sampler.data)
    if isinstance(prior, UniformVicinityPrior):
        center, delta = prior.center, min(prior.delta, method.delta_bar)
    else:
        if sampler.data.spec is None:
            raise RejectionStarved("vicinity rejection needs a dataset with a model")
        center, delta = sampler.data.spec.model.sigma_star, method.delta_bar
    log_cap = _rejection_log_cap(sampler, ref)
    snorm = center.spectral_norm
    accepted = []
    proposed = 0
    n_acc = 0
    rng = derived_rng(sampler.seed, 1)
    batch_id = 0
    while n_acc < count:
        batch = min(max(count, _CHUNK), 4 * _CHUNK)
        draws = sample_inverse_wishart(
            scale, dof, batch, int(derived_rng(sampler.seed, 2, batch_id).integers(2**62))
        )
        batch_id += 1
        proposed += batch
        dev = spectral_norm(draws - center.entries)
        candidates = draws[dev <= delta * snorm]
        if len(candidates):
            if isinstance(prior, InverseWishartPrior):
                logw = np.zeros(len(candidates))
            elif isinstance(prior, UniformVicinityPrior):
                logw = -ref.log_density_batch(candidates)
            else:
                logw = np.array(
                    [prior.log_density(s) for s in candidates]
                ) - ref.log_density_batch(candidates)
            keep = np.log(rng.random(len(candidates)) + 1e-300) < logw - log_cap
            for s in candidates[keep]:
                accepted.append(s)
                n_acc += 1
                if n_acc == count:
                    break
        if proposed >= 20 * _CHUNK and n_acc / proposed < 1e-4:
            raise RejectionStarved(
                f"acceptance rate {n_acc / proposed:.2e} below 1e-4 "
                f"after {proposed} proposals"
            )
    return PosteriorDraws(
        np.array(accepted), seed_provenance=f"rejection:{sampler.seed}"
    )


def sample_posterior(sampler: PosteriorSampler, count: int) -> PosteriorDraws:
    """Draw count matrices from the pseudo-posterior described by the sampler."""
    if count < 1:
        raise ValueError("count must be positive")
    if isinstance(sampler.method, ExactConjugate):
        return _sample_exact(sampler, count)
    if isinstance(sampler.method, Metropolis):
        return _sample_metropolis(sampler, count)
    if isinstance(sampler.method, RejectionInVicinity):
        return _sample_rejection(sampler, count)
    raise TypeError(f"unknown sampling method {sampler.method!r}")


def default_sampler(prior: PriorSpec, data: Dataset, seed: int = 0) -> PosteriorSampler:
    """Natural sampling method for each prior kind."""
    if isinstance(prior, InverseWishartPrior):
        return PosteriorSampler(prior, data, ExactConjugate(), seed)
    if isinstance(prior, UniformVicinityPrior):
        return PosteriorSampler(prior, data, RejectionInVicinity(prior.delta), seed)
    if isinstance(prior, GenericPrior):
        return PosteriorSampler(prior, data, Metropolis(), seed)
    raise TypeError(f"unknown prior {prior!r}")


# ---------------------------------------------------------------------------
# Localization helpers


def vicinity_mask(
    matrices: np.ndarray, center: SpdMatrix, delta_bar: float
) -> np.ndarray:
    """Boolean mask of draws inside the relative spectral-norm vicinity."""
    dev = spectral_norm(matrices - center.entries)
    return dev <= delta_bar * center.spectral_norm


def localized_posterior_mass(
    sampler: PosteriorSampler, delta_bar: float, count: int
) -> float:
    """Monte Carlo posterior mass of the vicinity around the ground truth."""
    if delta_bar < 0:
        raise ValueError("delta_bar must be nonnegative")
    if sampler.data.spec is None:
        raise BadDimension("localized mass needs a dataset carrying its model")
    draws = sample_posterior(sampler, count)
    center = sampler.data.spec.model.sigma_star
    if delta_bar == 0.0:
        return 0.0
    return float(np.mean(vicinity_mask(draws.matrices, center, delta_bar)))


def localize_draws(
    draws: PosteriorDraws, center: SpdMatrix, delta_bar: float
) -> PosteriorDraws:
    """Restrict draws to the vicinity (the Monte Carlo localized posterior)."""
    mask = vicinity_mask(draws.matrices, center, delta_bar)
    return PosteriorDraws(
        draws.matrices[mask], draws.warnings, draws.seed_provenance + "|localized"
    )


# ---------------------------------------------------------------------------
# Draw export


def draws_to_csv(path, draws: PosteriorDraws) -> None:
    """One row per draw holding the p(p+1)/2 upper-triangle entries."""
    p = draws.matrices.shape[1]
    iu = np.triu_indices(p)
    with open(path, "w") as fh:
        for m in draws.matrices:
            fh.write(",".join(repr(float(x)) for x in m[iu]) + "\n")


def draws_from_csv(path, p: int) -> PosteriorDraws:
    iu = np.triu_indices(p)
    mats = []
    with open(path) as fh:
        for line in fh:
            vals = np.array([float(x) for x in line.split(",")])
            m = np.zeros((p, p))
            m[iu] = vals
            mats.append(m + m.T - np.diag(np.diag(m)))
    return PosteriorDraws(np.array(mats), seed_provenance=f"csv:{path}")
