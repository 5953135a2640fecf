import math

import numpy as np
from scipy import special, stats

from admkit.models import (
    THETA_FIELDS,
    EffectsBatch,
    HyperParams,
    PriorSpec,
    ProposalSpec,
    RandomEffects,
)

_LOCATIONS = ("mu_a", "mu_b", "mu_c", "mu_n")


def sample_effects_batch(theta: HyperParams, size: int, rng: np.random.Generator) -> EffectsBatch:
    """Draw `size` boards; a, b, c, n are log-normal and sigma0 is logit-normal.

    Draws come from one (5, size) block of standard normals, so board i only
    depends on column i.
    """
    z = rng.standard_normal((5, size))
    a = np.exp(theta.mu_a + theta.sigma_a * z[0])
    b = np.exp(theta.mu_b + theta.sigma_b * z[1])
    c = np.exp(theta.mu_c + theta.sigma_c * z[2])
    n = np.exp(theta.mu_n + theta.sigma_n * z[3])
    # eta / (1 + eta) with log eta normal
    sigma0 = special.expit(theta.mu_sigma0 + theta.sigma_sigma0 * z[4])
    return EffectsBatch(a=a, b=b, c=c, n=n, sigma0=sigma0)


def sample_effects(theta: HyperParams, rng: np.random.Generator) -> RandomEffects:
    return sample_effects_batch(theta, 1, rng).item(0)


def log_prior(theta: HyperParams, prior: PriorSpec | None = None) -> float:
    """Normal priors on the locations, Inverse-Gamma on each variance sigma^2.

    The chain moves on sigma, and the Inverse-Gamma density is evaluated at
    sigma^2 without a Jacobian term.
    """
    prior = prior or PriorSpec()
    if not theta.in_support:
        return -math.inf
    location_sd = math.sqrt(prior.location_variance)
    total = sum(float(stats.norm.logpdf(getattr(theta, name), loc=0.0, scale=location_sd)) for name in _LOCATIONS)
    total += float(stats.norm.logpdf(theta.mu_sigma0, loc=0.0, scale=math.sqrt(prior.sigma0_location_variance)))
    variances = np.array([getattr(theta, name) for name in THETA_FIELDS[1::2]]) ** 2
    total += float(np.sum(stats.invgamma.logpdf(variances, prior.scale_shape, scale=prior.scale_rate)))
    return total


def propose(theta_k: HyperParams, spec: ProposalSpec, rng: np.random.Generator) -> HyperParams:
    step = rng.standard_normal(len(THETA_FIELDS)) * np.sqrt(np.asarray(spec.diagonal))
    return HyperParams.from_array(theta_k.as_array() + step)


def log_proposal_density(theta_to: HyperParams, theta_from: HyperParams, spec: ProposalSpec) -> float:
    diff = theta_to.as_array() - theta_from.as_array()
    variances = np.asarray(spec.diagonal)
    fixed = variances == 0
    if np.any(diff[fixed] != 0):
        return -math.inf
    free = ~fixed
    return float(np.sum(stats.norm.logpdf(diff[free], scale=np.sqrt(variances[free]))))
