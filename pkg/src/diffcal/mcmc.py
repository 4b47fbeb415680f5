"""Self-contained MCMC core: adaptive random-walk Metropolis and MALA.

The proposal covariance follows the running chain covariance (Haario-style)
with a global scale tuned by Robbins-Monro toward the target acceptance rate;
all adaptation freezes at the end of burn-in so the retained chain targets
the exact posterior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SamplerError


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 20000
    burn_in: int = 2000
    thin: int = 1
    chains: int = 1
    algorithm: str = "rwm"  # "rwm" or "mala"
    target_acceptance: float | None = None  # default 0.234 (rwm) / 0.574 (mala)
    initial_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1 or self.burn_in < 0 or self.thin < 1 or self.chains < 1:
            raise InvalidInputError("invalid MCMC sizes")
        if self.algorithm not in ("rwm", "mala"):
            raise InvalidInputError(f"unknown algorithm {self.algorithm!r}")

    @property
    def target(self) -> float:
        if self.target_acceptance is not None:
            return self.target_acceptance
        return 0.234 if self.algorithm == "rwm" else 0.574


def run_chain(log_post, x0, cfg: McmcConfig, rng, grad_log_post=None, init_sd=None):
    """One chain; returns (samples, log_posts, acceptance_rate) after burn-in/thinning.

    `log_post` maps a parameter vector to a (possibly -inf) log density.
    MALA additionally needs `grad_log_post`.  `init_sd` seeds the proposal
    covariance diagonal (e.g. prior standard deviations).
    """
    x = np.asarray(x0, dtype=float).copy()
    dim = x.size
    lp = log_post(x)
    if not np.isfinite(lp):
        raise InvalidInputError("initial point has non-finite log posterior")
    if cfg.algorithm == "mala" and grad_log_post is None:
        raise InvalidInputError("MALA needs grad_log_post")

    log_scale = np.log(cfg.initial_scale)
    mean = x.copy()
    cov = np.eye(dim) if init_sd is None else np.diag(np.asarray(init_sd, dtype=float) ** 2)
    chol = np.linalg.cholesky(cov)
    total = cfg.burn_in + cfg.iterations * cfg.thin
    samples = np.empty((cfg.iterations, dim))
    logps = np.empty(cfg.iterations)
    accepted_burn = 0
    accepted_main = 0
    kept = 0
    g = grad_log_post(x) if cfg.algorithm == "mala" else None

    for it in range(total):
        adapting = it < cfg.burn_in
        scale = np.exp(log_scale)
        if cfg.algorithm == "rwm":
            prop = x + scale * (chol @ rng.standard_normal(dim))
            lp_prop = log_post(prop)
            log_alpha = lp_prop - lp
        else:
            tau2 = scale**2
            mu_fwd = x + 0.5 * tau2 * g
            prop = mu_fwd + scale * rng.standard_normal(dim)
            lp_prop = log_post(prop)
            if np.isfinite(lp_prop):
                g_prop = grad_log_post(prop)
                mu_back = prop + 0.5 * tau2 * g_prop
                log_q_fwd = -np.sum((prop - mu_fwd) ** 2) / (2 * tau2)
                log_q_back = -np.sum((x - mu_back) ** 2) / (2 * tau2)
                log_alpha = lp_prop - lp + log_q_back - log_q_fwd
            else:
                log_alpha = -np.inf

        accept = np.log(rng.uniform()) < log_alpha
        if accept:
            x, lp = prop, lp_prop
            if cfg.algorithm == "mala":
                g = g_prop
            if adapting:
                accepted_burn += 1
            else:
                accepted_main += 1

        if adapting:
            # Robbins-Monro on the log proposal scale; binary accept feedback
            # keeps the chain exactly invariant to constant log-density shifts
            log_scale += (float(accept) - cfg.target) / (1 + it) ** 0.6
            # running covariance of the chain
            w = 1.0 / (it + 2)
            delta = x - mean
            mean = mean + w * delta
            cov = (1 - w) * cov + w * np.outer(delta, delta)
            if cfg.algorithm == "rwm" and it % 50 == 49:
                chol = np.linalg.cholesky(cov + 1e-10 * np.eye(dim))
            if it == cfg.burn_in - 1:
                if accepted_burn == 0:
                    raise SamplerError(
                        "no proposal accepted during burn-in; reduce the proposal "
                        "scale (initial_scale) or check the posterior"
                    )
                if cfg.algorithm == "rwm":
                    chol = np.linalg.cholesky(cov + 1e-10 * np.eye(dim))
        else:
            j = it - cfg.burn_in
            if (j + 1) % cfg.thin == 0:
                samples[kept] = x
                logps[kept] = lp
                kept += 1

    rate = accepted_main / max(total - cfg.burn_in, 1)
    return samples, logps, rate


def split_rhat(chains: list[np.ndarray]) -> np.ndarray:
    """Split-Rhat per parameter from >= 2 chains of equal length."""
    if len(chains) < 2:
        raise InvalidInputError("split-Rhat needs at least two chains")
    halves = []
    for c in chains:
        n = len(c) // 2
        halves.extend([c[:n], c[n : 2 * n]])
    arr = np.stack(halves)  # (m, n, dim)
    m, n, _ = arr.shape
    means = arr.mean(axis=1)
    b = n * means.var(axis=0, ddof=1)
    w = arr.var(axis=1, ddof=1).mean(axis=0)
    var_plus = (n - 1) / n * w + b / n
    return np.sqrt(var_plus / np.maximum(w, 1e-300))


def effective_sample_size(x: np.ndarray) -> float:
    """ESS of a 1-D chain via the initial-positive-sequence autocorrelation sum."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    xc = x - x.mean()
    var = np.dot(xc, xc) / n
    if var == 0:
        return float(n)
    acf = np.correlate(xc, xc, mode="full")[n - 1 :] / (n * var)
    s = 1.0
    for k in range(1, n):
        if acf[k] <= 0:
            break
        s += 2 * acf[k]
    return float(n / s)


def mc_standard_error(x: np.ndarray) -> float:
    """MCSE of the chain mean using the effective sample size."""
    return float(np.std(x, ddof=1) / np.sqrt(max(effective_sample_size(x), 1.0)))
