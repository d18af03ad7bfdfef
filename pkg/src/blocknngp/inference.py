"""Bayesian inference for the spatial regression model.

Model: y = X beta + w + eps, eps ~ N(0, tau2 I), with w a zero-mean
block-conditional Gaussian field whose precision Q comes from the block
factors. Two samplers:

  full       Metropolis on theta = (sigma2, phi, tau2), Gibbs on beta,
             joint Gibbs on w through chol(Q + D^{-1}).
  collapsed  w integrated out; Metropolis on theta against the marginal
             y | beta, theta ~ N(X beta, Ctilde + D), Gibbs on beta,
             then w recovered per retained draw from N(Ff, F),
             F = (Q + D^{-1})^{-1}, f = D^{-1}(y - X beta).

theta moves as one block on the transformed scale (log sigma2, scaled
logit of phi, log tau2) with Jacobian correction; the proposal adapts a
global scale (Robbins-Monro toward 0.25 acceptance) and, in the second
half of burn-in, an empirical covariance shape. Both freeze at the end
of burn-in.

Marginal-likelihood pieces use the determinant identity
log|Ctilde + D| = log|Q + D^{-1}| - log|Q| + log|D| and the Woodbury form
(Ctilde + D)^{-1} = D^{-1} - D^{-1} (Q + D^{-1})^{-1} D^{-1}, so nothing
dense in n is ever formed.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, gammaln

from .blockgraph import BlockGraph
from .covariance import CovarianceSpec
from .factors import FactorStructure, log_det_ctilde
from .geometry import BlockPartition, LocationSet
from .sparse import BandedCholesky, SparsePrecision

THETA_NAMES = ("sigma2", "phi", "tau2")


@dataclass(frozen=True)
class PriorSpec:
    """Priors: Gaussian (or flat) beta, uniform phi, inverse-gamma variances."""

    beta_mean: np.ndarray | None = None   # None with beta_prec None = flat
    beta_prec: np.ndarray | None = None
    phi_bounds: tuple = (1.0, 30.0)
    sigma2_ig: tuple = (2.0, 1.0)
    tau2_ig: tuple = (2.0, 1.0)

    def __post_init__(self):
        a, b = self.phi_bounds
        if not (0 < a < b):
            raise ValueError("phi bounds must satisfy 0 < lower < upper")
        for nm, (sa, sb) in (("sigma2", self.sigma2_ig), ("tau2", self.tau2_ig)):
            if sa <= 0 or sb <= 0:
                raise ValueError(f"{nm} inverse-gamma parameters must be positive")


@dataclass(frozen=True)
class McmcConfig:
    n_iter: int = 5000
    burn_in: int = 1000
    n_chains: int = 3
    thin: int = 1
    seed: int = 0
    workers: int = 1
    max_w_draws: int = 1000
    adapt: bool = True
    base_step: tuple = (0.15, 0.3, 0.15)

    def __post_init__(self):
        if self.n_iter <= self.burn_in:
            raise ValueError("n_iter must exceed burn_in")
        if self.burn_in < 0 or self.thin < 1 or self.n_chains < 1:
            raise ValueError("bad chain configuration")

    @property
    def n_keep(self) -> int:
        return (self.n_iter - self.burn_in + self.thin - 1) // self.thin


@dataclass(frozen=True)
class ModelSpec:
    """Data, kernel family, priors, and blocking for one fit."""

    locs: LocationSet
    X: np.ndarray
    y: np.ndarray
    kind: str
    priors: PriorSpec
    partition: BlockPartition
    graph: BlockGraph

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        n = self.locs.n
        if X.shape[0] != n or y.shape[0] != n:
            raise ValueError("X and y must have one row per location")
        if X.shape[1] < 1:
            raise ValueError("X needs at least one column")
        if not np.all(np.isfinite(y)):
            raise ValueError("y must be finite")

    @property
    def n(self) -> int:
        return self.locs.n

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def beta_prior(self):
        p = self.p
        if self.priors.beta_prec is None:
            return np.zeros(p), np.zeros((p, p))
        return (np.asarray(self.priors.beta_mean, dtype=float),
                np.asarray(self.priors.beta_prec, dtype=float))


# ---------------------------------------------------------------------------
# theta transform and priors

def _theta_to_eta(theta, priors):
    a, b = priors.phi_bounds
    s2, phi, t2 = theta
    u = (phi - a) / (b - a)
    return np.array([np.log(s2), np.log(u) - np.log1p(-u), np.log(t2)])


def _eta_to_theta(eta, priors):
    a, b = priors.phi_bounds
    return np.array([np.exp(eta[0]), a + (b - a) * expit(eta[1]), np.exp(eta[2])])


def _log_jacobian(eta, priors):
    """log |d theta / d eta| for the elementwise transform."""
    a, b = priors.phi_bounds
    x = eta[1]
    # log(b-a) + log sigmoid(x) + log sigmoid(-x), written stably
    lj_phi = np.log(b - a) - np.logaddexp(0.0, -x) - np.logaddexp(0.0, x)
    return eta[0] + lj_phi + eta[2]


def _log_invgamma(x, a, b):
    return a * np.log(b) - gammaln(a) - (a + 1.0) * np.log(x) - b / x


def log_prior_theta(theta, priors: PriorSpec) -> float:
    s2, phi, t2 = theta
    a, b = priors.phi_bounds
    if not (a < phi < b) or s2 <= 0 or t2 <= 0:
        return -np.inf
    out = -np.log(b - a)
    out += _log_invgamma(s2, *priors.sigma2_ig)
    out += _log_invgamma(t2, *priors.tau2_ig)
    return float(out)


# ---------------------------------------------------------------------------
# target densities and Gibbs steps

def log_target_theta_full(theta, beta, w, model: ModelSpec, factors,
                          precision: SparsePrecision) -> float:
    """log prior(theta) + log N(y; X beta + w, tau2 I) + log N(w; 0, Q^{-1})."""
    lp = log_prior_theta(theta, model.priors)
    if not np.isfinite(lp):
        return -np.inf
    n = model.n
    t2 = theta[2]
    resid = model.y - model.X @ beta - w
    lp += -0.5 * (n * np.log(2.0 * np.pi * t2) + resid @ resid / t2)
    lp += -0.5 * (n * np.log(2.0 * np.pi) + log_det_ctilde(factors)
                  + precision.quad(w))
    return float(lp)


def log_target_theta_collapsed(theta, beta, model: ModelSpec, factors,
                               chol_p: BandedCholesky) -> float:
    """log prior(theta) + log N(y; X beta, Ctilde + D) via the Woodbury pieces.

    chol_p factors Q + D^{-1} at this theta.
    """
    lp = log_prior_theta(theta, model.priors)
    if not np.isfinite(lp):
        return -np.inf
    n = model.n
    t2 = theta[2]
    logdet = chol_p.logdet + log_det_ctilde(factors) + n * np.log(t2)
    r = model.y - model.X @ beta
    rt = r / t2
    quad = r @ rt - rt @ chol_p.solve(rt)
    lp += -0.5 * (n * np.log(2.0 * np.pi) + logdet + quad)
    return float(lp)


def _draw_gaussian_from_precision(prec_mat, b_vec, rng):
    """Sample N(A^{-1} b, A^{-1}) for a small dense SPD A."""
    try:
        cf = cho_factor(prec_mat, lower=True)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("design matrix rank deficient") from None
    mean = cho_solve(cf, b_vec)
    z = rng.standard_normal(b_vec.shape[0])
    from scipy.linalg import solve_triangular
    dev = solve_triangular(cf[0].T, z, lower=False)
    return mean + dev, mean, cf


def gibbs_beta_full(y, w, theta, model: ModelSpec, rng) -> np.ndarray:
    """Conjugate beta draw given w: N(Bb, B), B^{-1} = prior + X^T X / tau2."""
    t2 = theta[2]
    mu0, p0 = model.beta_prior()
    A = p0 + model.X.T @ model.X / t2
    b = p0 @ mu0 + model.X.T @ (y - w) / t2
    draw, _, _ = _draw_gaussian_from_precision(A, b, rng)
    return draw


def gibbs_w_full(y, beta, theta, precision: SparsePrecision, model: ModelSpec,
                 rng, chol_p: BandedCholesky | None = None):
    """Joint field draw: N(Ff, F), F = (Q + D^{-1})^{-1}, f = D^{-1}(y - X beta)."""
    t2 = theta[2]
    if chol_p is None:
        chol_p = _chol_q_plus_dinv(precision, t2)
    f = (y - model.X @ beta) / t2
    w = chol_p.solve(f) + chol_p.sample(rng)
    return w, chol_p


def gibbs_beta_collapsed(y, theta, model: ModelSpec, chol_p: BandedCholesky,
                         rng) -> np.ndarray:
    """Conjugate beta draw under the collapsed likelihood:
    N(Bb, B), B = (prior + X^T Sigma^{-1} X)^{-1}, b = prior terms + X^T Sigma^{-1} y."""
    t2 = theta[2]
    mu0, p0 = model.beta_prior()
    six = _sigma_inv_apply(model.X, t2, chol_p)
    A = p0 + model.X.T @ six
    b = p0 @ mu0 + six.T @ y
    draw, _, _ = _draw_gaussian_from_precision(A, b, rng)
    return draw


def _sigma_inv_apply(v, t2, chol_p):
    """(Ctilde + D)^{-1} v = D^{-1} v - D^{-1} (Q + D^{-1})^{-1} D^{-1} v."""
    vt = v / t2
    return vt - chol_p.solve(vt) / t2


def _chol_q_plus_dinv(precision: SparsePrecision, t2: float) -> BandedCholesky:
    mat = precision.mat + sp.identity(precision.n, format="csr") / t2
    return BandedCholesky(mat)


# ---------------------------------------------------------------------------
# adaptive block proposal

class _AdaptiveProposal:
    """Gaussian block RW on eta with scale and shape adaptation."""

    def __init__(self, base_sd, target=0.25):
        self.dim = len(base_sd)
        self.L = np.diag(base_sd)
        self.log_lam = 0.0
        self.target = target
        self._count = 0
        self._mean = np.zeros(self.dim)
        self._m2 = np.zeros((self.dim, self.dim))

    def propose(self, eta, rng):
        step = np.exp(self.log_lam) * (self.L @ rng.standard_normal(self.dim))
        return eta + step

    def update(self, eta, alpha, t, burn_in):
        gamma = (t + 1.0) ** -0.6
        self.log_lam += gamma * (alpha - self.target)
        self._count += 1
        d = eta - self._mean
        self._mean += d / self._count
        self._m2 += np.outer(d, eta - self._mean)
        if (t >= burn_in // 2 and t % 100 == 0
                and self._count > 10 * self.dim):
            cov = self._m2 / (self._count - 1)
            cov = cov * (2.38 ** 2 / self.dim) + 1e-10 * np.eye(self.dim)
            try:
                self.L = np.linalg.cholesky(cov)
                self.log_lam = 0.0
            except np.linalg.LinAlgError:
                pass


# ---------------------------------------------------------------------------
# sample container, accumulation, metrics

class _RunningLse:
    """Streaming log-sum-exp over draws, elementwise across observations."""

    def __init__(self, n):
        self.m = np.full(n, -np.inf)
        self.s = np.zeros(n)

    def add(self, x):
        m2 = np.maximum(self.m, x)
        with np.errstate(invalid="ignore"):
            scale = np.exp(self.m - m2)
        scale[~np.isfinite(scale)] = 0.0
        self.s = self.s * scale + np.exp(x - m2)
        self.m = m2

    def value(self):
        return self.m + np.log(self.s)


class _Accumulator:
    """Per-draw accumulation of field and pointwise-likelihood summaries."""

    def __init__(self, n, total_draws, max_w_draws):
        self.n = n
        self.count = 0
        self.sum_w = np.zeros(n)
        self.sum_w2 = np.zeros(n)
        self.sum_fit = np.zeros(n)
        self.sum_logp = np.zeros(n)
        self.sum_logp2 = np.zeros(n)
        self.lse_pos = _RunningLse(n)
        self.lse_neg = _RunningLse(n)
        self.stride = max(1, -(-total_draws // max_w_draws))
        self.w_draws = []
        self.w_theta = []
        self.w_beta = []

    def add(self, w, fitted, logp, theta, beta):
        if self.count % self.stride == 0:
            self.w_draws.append(w.copy())
            self.w_theta.append(np.array(theta))
            self.w_beta.append(np.array(beta))
        self.count += 1
        self.sum_w += w
        self.sum_w2 += w * w
        self.sum_fit += fitted
        self.sum_logp += logp
        self.sum_logp2 += logp * logp
        self.lse_pos.add(logp)
        self.lse_neg.add(-logp)


@dataclass
class PosteriorSamples:
    """Retained draws plus streaming summaries for metrics and prediction."""

    beta: np.ndarray            # (chains, T, p)
    theta: np.ndarray           # (chains, T, 3) as (sigma2, phi, tau2)
    w_mean: np.ndarray
    w_var: np.ndarray
    fitted_mean: np.ndarray
    w_draws: np.ndarray         # (D, n) thinned subset for prediction
    w_draw_theta: np.ndarray    # (D, 3) matching theta per stored w draw
    w_draw_beta: np.ndarray     # (D, p)
    accept_rate: np.ndarray     # (chains,)
    elapsed: dict
    n_draws: int
    loglik: dict                # streaming pieces for lpml / waic

    @property
    def n_chains(self) -> int:
        return self.theta.shape[0]

    def pooled_beta(self):
        return self.beta.reshape(-1, self.beta.shape[2])

    def pooled_theta(self):
        return self.theta.reshape(-1, 3)


def _merge_chains(chains, elapsed):
    beta = np.stack([c["beta"] for c in chains])
    theta = np.stack([c["theta"] for c in chains])
    n = chains[0]["acc"].n
    total = sum(c["acc"].count for c in chains)
    sum_w = sum(c["acc"].sum_w for c in chains)
    sum_w2 = sum(c["acc"].sum_w2 for c in chains)
    w_mean = sum_w / total
    w_var = sum_w2 / total - w_mean ** 2
    w_var = np.maximum(w_var, 0.0)
    fitted = sum(c["acc"].sum_fit for c in chains) / total
    lse_pos = np.stack([c["acc"].lse_pos.value() for c in chains])
    lse_neg = np.stack([c["acc"].lse_neg.value() for c in chains])
    loglik = {
        "sum_logp": sum(c["acc"].sum_logp for c in chains),
        "sum_logp2": sum(c["acc"].sum_logp2 for c in chains),
        "lse_pos": lse_pos,
        "lse_neg": lse_neg,
        "count": total,
    }
    return PosteriorSamples(
        beta=beta, theta=theta, w_mean=w_mean, w_var=w_var, fitted_mean=fitted,
        w_draws=np.concatenate([np.array(c["acc"].w_draws) for c in chains]),
        w_draw_theta=np.concatenate([np.array(c["acc"].w_theta) for c in chains]),
        w_draw_beta=np.concatenate([np.array(c["acc"].w_beta) for c in chains]),
        accept_rate=np.array([c["accept"] for c in chains]),
        elapsed=elapsed, n_draws=total, loglik=loglik)


# ---------------------------------------------------------------------------
# chain runners

def _init_state(model, rng):
    X, y = model.X, model.y
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    v = max(float(resid.var()), 1e-6)
    a, b = model.priors.phi_bounds
    theta = np.array([v / 2.0, (a + b) / 2.0, v / 2.0])
    return beta, theta


def _spec_for(model, theta):
    return CovarianceSpec(kind=model.kind, sigma2=float(theta[0]),
                          phi=float(theta[1]))


def _obs_loglik(y, fitted, t2):
    return -0.5 * (np.log(2.0 * np.pi * t2) + (y - fitted) ** 2 / t2)


def _run_chain_full(model, config, seed_seq, keep_iters):
    rng = np.random.default_rng(seed_seq)
    structure = FactorStructure(model.locs, model.partition, model.graph)
    beta, theta = _init_state(model, rng)
    eta = _theta_to_eta(theta, model.priors)
    factors = structure.factors(_spec_for(model, theta))
    precision = structure.precision(factors)
    chol_p = None
    w = np.zeros(model.n)
    prop = _AdaptiveProposal(config.base_step)
    T = config.n_keep
    out_beta = np.empty((T, model.p))
    out_theta = np.empty((T, 3))
    acc = _Accumulator(model.n, T, config.max_w_draws)
    accepted = 0
    kept = 0
    for t in range(config.n_iter):
        # theta block move
        eta_star = prop.propose(eta, rng)
        theta_star = _eta_to_theta(eta_star, model.priors)
        factors_star = structure.factors(_spec_for(model, theta_star))
        precision_star = structure.precision(factors_star)
        cur = log_target_theta_full(theta, beta, w, model, factors, precision) \
            + _log_jacobian(eta, model.priors)
        star = log_target_theta_full(theta_star, beta, w, model, factors_star,
                                     precision_star) \
            + _log_jacobian(eta_star, model.priors)
        alpha = min(1.0, np.exp(min(star - cur, 0.0))) if np.isfinite(star) else 0.0
        if rng.uniform() < alpha:
            eta, theta = eta_star, theta_star
            factors, precision = factors_star, precision_star
            chol_p = None
            if t >= config.burn_in:
                accepted += 1
        if config.adapt and t < config.burn_in:
            prop.update(eta, alpha, t, config.burn_in)
        # beta Gibbs
        beta = gibbs_beta_full(model.y, w, theta, model, rng)
        # w Gibbs
        w, chol_p = gibbs_w_full(model.y, beta, theta, precision, model, rng,
                                 chol_p)
        if t in keep_iters:
            out_beta[kept] = beta
            out_theta[kept] = theta
            kept += 1
            fitted = model.X @ beta + w
            logp = _obs_loglik(model.y, fitted, theta[2])
            acc.add(w, fitted, logp, theta, beta)
    denom = max(config.n_iter - config.burn_in, 1)
    return {"beta": out_beta, "theta": out_theta, "acc": acc,
            "accept": accepted / denom}


def _run_chain_collapsed(model, config, seed_seq, keep_iters):
    rng = np.random.default_rng(seed_seq)
    structure = FactorStructure(model.locs, model.partition, model.graph)
    beta, theta = _init_state(model, rng)
    eta = _theta_to_eta(theta, model.priors)
    factors = structure.factors(_spec_for(model, theta))
    precision = structure.precision(factors)
    chol_p = _chol_q_plus_dinv(precision, theta[2])
    prop = _AdaptiveProposal(config.base_step)
    T = config.n_keep
    out_beta = np.empty((T, model.p))
    out_theta = np.empty((T, 3))
    accepted = 0
    kept = 0
    for t in range(config.n_iter):
        eta_star = prop.propose(eta, rng)
        theta_star = _eta_to_theta(eta_star, model.priors)
        factors_star = structure.factors(_spec_for(model, theta_star))
        precision_star = structure.precision(factors_star)
        chol_star = _chol_q_plus_dinv(precision_star, theta_star[2])
        cur = log_target_theta_collapsed(theta, beta, model, factors, chol_p) \
            + _log_jacobian(eta, model.priors)
        star = log_target_theta_collapsed(theta_star, beta, model, factors_star,
                                          chol_star) \
            + _log_jacobian(eta_star, model.priors)
        alpha = min(1.0, np.exp(min(star - cur, 0.0))) if np.isfinite(star) else 0.0
        if rng.uniform() < alpha:
            eta, theta = eta_star, theta_star
            factors, precision, chol_p = factors_star, precision_star, chol_star
            if t >= config.burn_in:
                accepted += 1
        if config.adapt and t < config.burn_in:
            prop.update(eta, alpha, t, config.burn_in)
        beta = gibbs_beta_collapsed(model.y, theta, model, chol_p, rng)
        if t in keep_iters:
            out_beta[kept] = beta
            out_theta[kept] = theta
            kept += 1
    # recover w per retained draw; consecutive draws often share theta
    acc = recover_field_draws(model, out_theta[:kept], out_beta[:kept], rng,
                              config.max_w_draws, structure=structure)
    denom = max(config.n_iter - config.burn_in, 1)
    return {"beta": out_beta, "theta": out_theta, "acc": acc,
            "accept": accepted / denom}


def recover_field_draws(model: ModelSpec, theta_draws, beta_draws, rng,
                        max_w_draws: int = 1000, structure=None) -> "_Accumulator":
    """Sample w | theta, beta, y per draw from N(Ff, F).

    F = (Q + D^{-1})^{-1}, f = D^{-1}(y - X beta). Consecutive draws with
    identical theta (rejected proposals) reuse the factorization.
    """
    theta_draws = np.atleast_2d(np.asarray(theta_draws, dtype=float))
    beta_draws = np.atleast_2d(np.asarray(beta_draws, dtype=float))
    if structure is None:
        structure = FactorStructure(model.locs, model.partition, model.graph)
    acc = _Accumulator(model.n, theta_draws.shape[0], max_w_draws)
    cur_theta = None
    chol_r = None
    for i in range(theta_draws.shape[0]):
        th = theta_draws[i]
        if cur_theta is None or not np.array_equal(th, cur_theta):
            f_i = structure.factors(_spec_for(model, th))
            q_i = structure.precision(f_i)
            chol_r = _chol_q_plus_dinv(q_i, th[2])
            cur_theta = th.copy()
        b_i = beta_draws[i]
        f_vec = (model.y - model.X @ b_i) / th[2]
        w = chol_r.solve(f_vec) + chol_r.sample(rng)
        fitted = model.X @ b_i + w
        logp = _obs_loglik(model.y, fitted, th[2])
        acc.add(w, fitted, logp, th, b_i)
    return acc


def _run_mcmc(model, config, runner):
    t0 = time.perf_counter()
    keep = frozenset(range(config.burn_in, config.n_iter, config.thin))
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    if config.workers > 1 and config.n_chains > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futs = [pool.submit(runner, model, config, s, keep) for s in seeds]
            chains = [f.result() for f in futs]
    else:
        chains = [runner(model, config, s, keep) for s in seeds]
    elapsed = {"total": time.perf_counter() - t0}
    return _merge_chains(chains, elapsed)


def run_full_mcmc(model: ModelSpec, config: McmcConfig) -> PosteriorSamples:
    """Sampler with explicit field updates (theta MH, beta Gibbs, w Gibbs)."""
    return _run_mcmc(model, config, _run_chain_full)


def run_collapsed_mcmc(model: ModelSpec, config: McmcConfig) -> PosteriorSamples:
    """Marginal sampler on (theta, beta) with post-hoc field recovery."""
    return _run_mcmc(model, config, _run_chain_collapsed)


# ---------------------------------------------------------------------------
# posterior summaries and fit metrics

def mcse(draws: np.ndarray, n_batches: int | None = None) -> float:
    """Batch-means Monte Carlo standard error of a (chains, T) draw array.

    Default batch length ~ T^(2/3) so batch means stay near-independent
    under slow mixing.
    """
    draws = np.atleast_2d(draws)
    T = draws.shape[1]
    if n_batches is None:
        n_batches = int(round(T ** (1.0 / 3.0)))
    nb = min(n_batches, max(2, T // 2))
    nb = max(nb, 2)
    bs = T // nb
    means = [draws[c, i * bs:(i + 1) * bs].mean()
             for c in range(draws.shape[0]) for i in range(nb)]
    means = np.array(means)
    return float(means.std(ddof=1) / np.sqrt(means.size))


def posterior_summary(samples: PosteriorSamples) -> dict:
    """Per-parameter mean, sd, central 95% interval, and MCSE."""
    out = {}
    p = samples.beta.shape[2]
    for j in range(p):
        d = samples.beta[:, :, j]
        out[f"beta_{j}"] = _one_summary(d)
    for j, nm in enumerate(THETA_NAMES):
        out[nm] = _one_summary(samples.theta[:, :, j])
    return out


def _one_summary(d):
    flat = d.reshape(-1)
    return {"mean": float(flat.mean()), "sd": float(flat.std(ddof=1)),
            "q025": float(np.quantile(flat, 0.025)),
            "q975": float(np.quantile(flat, 0.975)),
            "mcse": mcse(d)}


def metrics(samples: PosteriorSamples, model: ModelSpec,
            holdout: tuple | None = None) -> dict:
    """Fit quality: RMSE on training data, LPML, WAIC, and RMSP on a
    holdout (coords, X, y) triple when given.

    LPML sums log CPO_i with CPO_i the harmonic mean of per-draw
    likelihoods; WAIC = -2 (lppd - p_waic) with p_waic the summed
    posterior variance of the pointwise log likelihood.
    """
    ll = samples.loglik
    T = ll["count"]
    y = model.y
    rmse = float(np.sqrt(np.mean((samples.fitted_mean - y) ** 2)))
    # lse over chains then combine: lse entries are per-chain log sums
    lse_pos = np.logaddexp.reduce(ll["lse_pos"], axis=0)
    lse_neg = np.logaddexp.reduce(ll["lse_neg"], axis=0)
    lpml = float(np.sum(np.log(T) - lse_neg))
    lppd = float(np.sum(lse_pos - np.log(T)))
    if T > 1:
        var_logp = (ll["sum_logp2"] - ll["sum_logp"] ** 2 / T) / (T - 1)
        p_waic = float(np.sum(np.maximum(var_logp, 0.0)))
    else:
        p_waic = 0.0
    waic = -2.0 * (lppd - p_waic)
    out = {"rmse": rmse, "lpml": lpml, "waic": waic, "p_waic": p_waic,
           "lppd": lppd}
    if holdout is not None:
        from .predict import predict_y
        coords_u, X_u, y_u = holdout
        pred = predict_y(coords_u, X_u, model.kind, model.locs, model.partition,
                         samples.w_draws, samples.w_draw_beta,
                         samples.w_draw_theta)
        out["rmsp"] = float(np.sqrt(np.mean((pred.mean - np.asarray(y_u)) ** 2)))
    return out
