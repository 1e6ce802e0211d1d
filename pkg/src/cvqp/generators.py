"""Seeded synthetic instance families.

Three families: raw projection instances, CVaR-constrained portfolio
problems on mixture-of-Gaussians return scenarios, and quantile
regression rewritten as a CVQP.

All randomness flows through a counter-based Philox bit generator keyed
by the config seed, and every distribution is built from rng.random()
by explicit recipes (Box-Muller normals, chi-square from summed squared
normals).  Draw order is documented per generator, so instances are
reproducible bit for bit from (family, config) alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CvarSpec, CvqpProblem, sum_k_largest, tail_count

__all__ = [
    "make_rng",
    "uniform",
    "standard_normal",
    "student_t",
    "ProjectionConfig",
    "PortfolioConfig",
    "QuantileConfig",
    "gen_projection",
    "gen_portfolio",
    "gen_quantile",
    "sample_returns",
    "sample_quantile_data",
    "quantile_intercept",
]


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; identical streams across platforms."""
    return np.random.Generator(np.random.Philox(key=seed))


def uniform(rng: np.random.Generator, shape) -> np.ndarray:
    """U[0, 1) draws, row-major order."""
    return rng.random(np.prod(shape, dtype=int)).reshape(shape)


def standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """N(0, 1) draws via Box-Muller on consecutive uniform pairs.

    Each normal consumes exactly two uniforms: z = sqrt(-2 ln u1) *
    cos(2 pi u2) with u1 = 1 - rng.random() to keep the log away from 0.
    """
    count = int(np.prod(shape, dtype=int))
    u1 = 1.0 - rng.random(count)
    u2 = rng.random(count)
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return z.reshape(shape)


def student_t(rng: np.random.Generator, shape, dof: int) -> np.ndarray:
    """Student-t draws: z / sqrt(chi2_dof / dof), chi2 from dof squared normals.

    Draw order per sample batch: the numerator normals first, then dof
    further normal batches for the chi-square.
    """
    if dof < 1:
        raise ValueError(f"dof must be at least 1, got {dof}")
    z = standard_normal(rng, shape)
    chi2 = np.zeros(shape)
    for _ in range(dof):
        chi2 += standard_normal(rng, shape) ** 2
    return z / np.sqrt(chi2 / dof)


@dataclass(frozen=True)
class ProjectionConfig:
    """Infeasible-by-construction projection instances.

    v ~ U[0,1]^m; the bound is set to eta times the top-k sum of v, so
    eta in (0, 1) controls how deep the projection has to cut.
    """

    m: int
    beta: float = 0.95
    eta: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")


def gen_projection(config: ProjectionConfig) -> tuple[np.ndarray, CvarSpec]:
    """Draw order: the m entries of v, nothing else."""
    rng = make_rng(config.seed)
    v = uniform(rng, config.m)
    k = tail_count(config.beta, config.m)
    d = config.eta * sum_k_largest(v, k)
    return v, CvarSpec(k=k, d=d)


@dataclass(frozen=True)
class PortfolioConfig:
    """Long-only portfolio with a CVaR cap on scenario losses.

    Returns follow the two-component Gaussian mixture
    omega * N(nu * 1, I) + (1 - omega) * N(-nu * 1, sigma^2 I): mostly a
    mildly bullish regime, with a fat bearish tail when sigma > 1.
    """

    n_assets: int
    m_scenarios: int
    omega: float = 0.8
    nu: float = 0.2
    sigma: float = 2.0
    gamma: float = 1.0
    beta: float = 0.95
    kappa: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n_assets < 1 or self.m_scenarios < 1:
            raise ValueError("n_assets and m_scenarios must be at least 1")
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError(f"omega must lie in [0, 1], got {self.omega}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")


def sample_returns(config: PortfolioConfig) -> np.ndarray:
    """Scenario return matrix R, shape (m_scenarios, n_assets).

    Draw order: m regime uniforms, then the m*n standard normals (row
    major) shared by both regimes; scenario i uses nu + eps_i in the
    normal regime and -nu + sigma * eps_i in the stressed one.
    """
    m, n = config.m_scenarios, config.n_assets
    rng = make_rng(config.seed)
    calm = uniform(rng, m) < config.omega
    eps = standard_normal(rng, (m, n))
    return np.where(calm[:, None], config.nu + eps, -config.nu + config.sigma * eps)


def scaled_kappa(
    n_assets: int,
    nu: float = 0.2,
    sigma: float = 2.0,
    beta: float = 0.95,
    omega: float = 0.8,
    reference_n: int = 2000,
    reference_kappa: float = 0.3,
) -> float:
    """CVaR cap placed at a size-independent tightness for the mixture family.

    The uniform portfolio's population loss CVaR under the two-regime
    mixture is roughly nu + sigma * c(beta, omega) / sqrt(n): the stress
    regime dominates the tail, and diversification shrinks its volatility
    as 1/sqrt(n).  The default cap of 0.3 is feasible at the reference
    size n = 2000 but sits below the attainable CVaR range for small n,
    making the constraint set empty.  This returns the cap with the same
    margin relative to the uniform portfolio's CVaR at any size.
    """
    from scipy.stats import norm as _norm

    tail = 1.0 - beta
    if tail >= 1.0 - omega:
        raise ValueError("stress regime must contain the whole (1-beta) tail")

    def uniform_cvar(n: int) -> float:
        inner = 1.0 - tail / (1.0 - omega)
        lam = _norm.pdf(_norm.ppf(inner)) * (1.0 - omega) / tail
        return nu + sigma * lam / math.sqrt(n)

    return reference_kappa * uniform_cvar(n_assets) / uniform_cvar(reference_n)


def gen_portfolio(config: PortfolioConfig) -> CvqpProblem:
    """Markowitz-style objective, budget row pinned to 1, long-only box.

    P = gamma * Sigma with Sigma the biased (1/m) scenario covariance,
    q = -mu, and A = -R so that Ax holds per-scenario losses.
    """
    R = sample_returns(config)
    m, n = R.shape
    mu = R.mean(axis=0)
    Rc = R - mu
    Sigma = (Rc.T @ Rc) / m
    P = config.gamma * Sigma
    q = -mu
    A = -R
    B = np.vstack([np.ones((1, n)), np.eye(n)])
    l = np.concatenate([[1.0], np.zeros(n)])
    u = np.concatenate([[1.0], np.full(n, np.inf)])
    return CvqpProblem(P, q, A, B, l, u, beta=config.beta, kappa=config.kappa)


@dataclass(frozen=True)
class QuantileConfig:
    """Linear quantile regression as a CVQP.

    Features are standard normal, true coefficients shrink with index as
    1/sqrt(1+j), and noise is scaled Student-t with t_dof degrees of
    freedom.  tau is the target quantile level.
    """

    n_features: int
    m_samples: int
    tau: float = 0.9
    noise_scale: float = 0.1
    t_dof: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_features < 1 or self.m_samples < 1:
            raise ValueError("n_features and m_samples must be at least 1")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")
        if self.t_dof < 1:
            raise ValueError("t_dof must be at least 1")


def sample_quantile_data(config: QuantileConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Design matrix U (m, n), responses y, true coefficients.

    Draw order: the m*n feature normals (row major), the n coefficient
    normals, then the m Student-t noise samples.
    """
    m, n = config.m_samples, config.n_features
    rng = make_rng(config.seed)
    U = standard_normal(rng, (m, n))
    coef = standard_normal(rng, n) / np.sqrt(1.0 + np.arange(1, n + 1))
    noise = config.noise_scale * student_t(rng, m, config.t_dof)
    y = U @ coef + noise
    return U, y, coef


def gen_quantile(config: QuantileConfig) -> CvqpProblem:
    """Pinball-loss regression in CVaR epigraph form.

    Decision variables are (x, t, s): slope, epigraph value, and a scale
    pinned to 1 by the box row.  The objective mean(U)'x + t is linear
    (diagonal P of zeros) and the constraint bounds the CVaR at level tau
    of the rows -u_i'x - t + y_i * s by zero.  Minimizing recovers, up to
    an affine transform of the value, the tau-quantile fit of y on U.
    """
    U, y, _ = sample_quantile_data(config)
    m, n = U.shape
    P = np.zeros(n + 2)
    q = np.concatenate([U.mean(axis=0), [1.0], [0.0]])
    A = np.hstack([-U, -np.ones((m, 1)), y[:, None]])
    B = np.zeros((1, n + 2))
    B[0, -1] = 1.0
    bound = np.array([1.0])
    return CvqpProblem(P, q, A, B, bound, bound, beta=config.tau, kappa=0.0)


def quantile_intercept(U: np.ndarray, y: np.ndarray, x: np.ndarray, tau: float) -> float:
    """Pinball-optimal intercept for a fixed slope x.

    The minimizing offset is the k-th largest residual y - Ux with
    k = ceil((1-tau) m), i.e. the empirical tau-quantile.
    """
    z = np.asarray(y, dtype=float) - np.asarray(U, dtype=float) @ np.asarray(x, dtype=float)
    k = tail_count(tau, z.size)
    return float(np.partition(z, z.size - k)[z.size - k])
