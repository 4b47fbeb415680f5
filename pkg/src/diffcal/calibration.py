"""Bayesian posterior sampling of simulation parameters from deformation data.

The likelihood lives in the surrogate's latent space: the predicted
deformation score u(beta) is penalized by the whitened norm
sum_j u_j^2 / lambda_j with the PCA eigenvalues as the velocity-norm proxy.
Optional terms: GP predictive variance inflation (surrogate error as a proper
Gaussian marginal) and a latent discrepancy u - xi * u_min with a narrow
prior on xi around one.  The posterior over (beta, xi) is pushed forward into
shape space by reconstructing the predicted initial velocity, converting it
to an initial momentum on the measurement, and integrating the geodesic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, lsmr

from .errors import IntegrationError, InvalidInputError, SamplerError
from .grid import gradient
from .kernels import KernelSpec, convolve_grid, kernel_matrix
from .mcmc import McmcConfig, run_chain, split_rhat
from .shapes import CurveShape, GridImage, LandmarkShape, Shape
from .shooting import ShootingConfig, hamiltonian, integrate_geodesic
from .surrogate import SurrogateModel, predict_latent, reconstruct_v0


# ---------------------------------------------------------------------------
# priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PriorComponent:
    dist: str  # "uniform" or "normal"
    a: float  # lo / mu
    b: float  # hi / sigma

    def __post_init__(self):
        if self.dist == "uniform":
            if not self.a < self.b:
                raise InvalidInputError(f"uniform prior needs lo < hi, got ({self.a}, {self.b})")
        elif self.dist == "normal":
            if not self.b > 0:
                raise InvalidInputError("normal prior needs sigma > 0")
        else:
            raise InvalidInputError(f"unknown prior distribution {self.dist!r}")

    def logpdf(self, x: float) -> float:
        if self.dist == "uniform":
            if self.a <= x <= self.b:
                return -np.log(self.b - self.a)
            return -np.inf
        z = (x - self.a) / self.b
        return -0.5 * z * z - np.log(self.b) - 0.5 * np.log(2 * np.pi)

    def dlogpdf(self, x: float) -> float:
        if self.dist == "uniform":
            return 0.0
        return -(x - self.a) / self.b**2

    def sample(self, rng) -> float:
        if self.dist == "uniform":
            return rng.uniform(self.a, self.b)
        return rng.normal(self.a, self.b)

    def mean(self) -> float:
        return 0.5 * (self.a + self.b) if self.dist == "uniform" else self.a

    def sd(self) -> float:
        if self.dist == "uniform":
            return (self.b - self.a) / np.sqrt(12.0)
        return self.b


@dataclass(frozen=True)
class PriorSpec:
    """Per-component priors on beta; xi components get normal(1, xi_sigma)."""

    beta: tuple
    xi_sigma: float = 0.1

    def __post_init__(self):
        if not self.beta:
            raise InvalidInputError("prior needs at least one beta component")
        if self.xi_sigma <= 0:
            raise InvalidInputError("xi_sigma must be positive")

    @property
    def n_beta(self) -> int:
        return len(self.beta)

    def xi_prior(self) -> PriorComponent:
        return PriorComponent("normal", 1.0, self.xi_sigma)

    def log_prior(self, beta: np.ndarray, xi: np.ndarray | None) -> float:
        lp = sum(c.logpdf(v) for c, v in zip(self.beta, beta))
        if xi is not None:
            xp = self.xi_prior()
            lp += sum(xp.logpdf(v) for v in xi)
        return lp

    def sample_beta(self, rng, n: int) -> np.ndarray:
        return np.stack([[c.sample(rng) for c in self.beta] for _ in range(n)])


@dataclass(frozen=True)
class LikelihoodSpec:
    """Observation scale and which likelihood terms are active.

    sigma is the L2 observation scale of the optional data term; the data
    term compares the measurement with its own pushforward under the
    surrogate-predicted deformation and costs one geodesic integration per
    evaluation, so it is off by default.
    """

    sigma: float = 0.1
    include_model_error: bool = False
    include_discrepancy: bool = False
    include_data_term: bool = False

    def __post_init__(self):
        if self.sigma <= 0:
            raise InvalidInputError("sigma must be positive")


@dataclass
class PosteriorChain:
    samples: np.ndarray  # (N, p + P') with beta first, then active xi
    log_post: np.ndarray  # (N,)
    acceptance_rate: float
    seed: int
    burn_in: int
    thinning: int
    n_beta: int
    param_names: list[str] = field(default_factory=list)
    rhat: np.ndarray | None = None

    def beta_samples(self) -> np.ndarray:
        return self.samples[:, : self.n_beta]

    def xi_samples(self) -> np.ndarray | None:
        if self.samples.shape[1] == self.n_beta:
            return None
        return self.samples[:, self.n_beta :]


# ---------------------------------------------------------------------------
# likelihood
# ---------------------------------------------------------------------------


def _latent_terms(beta, xi, model: SurrogateModel, spec: LikelihoodSpec):
    u_mean, u_var = predict_latent(model, beta)
    resid = u_mean - xi * model.u_min if xi is not None else u_mean
    lam = np.maximum(model.basis.explained_variance, 1e-300)
    denom = lam + u_var if spec.include_model_error else lam
    return resid, denom, u_mean


def log_likelihood(
    beta,
    xi,
    model: SurrogateModel,
    q_mes: Shape | None,
    spec: LikelihoodSpec,
    shooting_cfg: ShootingConfig | None = None,
) -> float:
    """Log likelihood of the measurement given (beta, xi), up to a constant.

    Deformation term: -1/2 sum_j [resid_j^2 / (lambda_j + s_j^2) +
    log(lambda_j + s_j^2)] with resid = u(beta) - xi * u_min when the
    discrepancy is active and s_j^2 the GP variance when model error is
    active.  The optional data term adds -1/(2 sigma^2) ||q_mes - f(beta)||^2
    through the pushforward of q_mes.
    """
    beta = np.asarray(beta, dtype=float)
    if xi is not None:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != model.u_min.shape:
            raise InvalidInputError(
                f"xi must have one entry per latent component ({model.u_min.size})"
            )
    resid, denom, u_mean = _latent_terms(beta, xi, model, spec)
    ll = -0.5 * float(np.sum(resid**2 / denom) + np.sum(np.log(denom)))
    if spec.include_data_term:
        if q_mes is None or shooting_cfg is None:
            raise InvalidInputError("data term needs q_mes and a shooting config")
        deformed = pushforward(model, u_mean, q_mes, shooting_cfg)
        ll += -0.5 / spec.sigma**2 * _l2_residual(deformed, q_mes)
    return ll


def _l2_residual(qa: Shape, qb: Shape) -> float:
    if isinstance(qa, GridImage):
        return float(np.sum((qa.values - qb.values) ** 2) * qa.geometry.cell_area)
    pa = qa.points if isinstance(qa, LandmarkShape) else qa.vertices
    pb = qb.points if isinstance(qb, LandmarkShape) else qb.vertices
    return float(np.sum((pa - pb) ** 2) / len(pa))


# ---------------------------------------------------------------------------
# velocity -> momentum conversion and pushforward
# ---------------------------------------------------------------------------


def velocity_to_momentum(q: Shape, v0: np.ndarray, kernel: KernelSpec, jitter: float = 1e-10):
    """Initial momentum on q whose induced velocity matches v0 at q's dofs.

    Points: solve the kernel Gram system.  Images: damped least squares on
    the linear map pi -> K * (-pi grad q), which is the same operator the
    training velocities came from.
    """
    if isinstance(q, (LandmarkShape, CurveShape)):
        pts = q.points if isinstance(q, LandmarkShape) else q.vertices
        v = np.asarray(v0, dtype=float).reshape(pts.shape)
        k = kernel_matrix(pts, pts, kernel)
        k[np.diag_indices_from(k)] += jitter
        return np.linalg.solve(k, v)
    if isinstance(q, GridImage):
        geom = q.geometry
        h, w = geom.shape
        g = gradient(q.values, geom)
        v = np.asarray(v0, dtype=float).reshape(h, w, 2)

        def matvec(pi_flat):
            m = -pi_flat.reshape(h, w)[..., None] * g
            return convolve_grid(m, geom, kernel).ravel()

        def rmatvec(u_flat):
            u = u_flat.reshape(h, w, 2)
            ku = convolve_grid(u, geom, kernel)
            return (-np.sum(g * ku, axis=-1)).ravel()

        op = LinearOperator((2 * h * w, h * w), matvec=matvec, rmatvec=rmatvec)
        sol = lsmr(op, v.ravel(), damp=np.sqrt(jitter), atol=1e-10, btol=1e-10, maxiter=1500)[0]
        return sol.reshape(h, w)
    raise InvalidInputError(f"unknown shape type {type(q)}")


def pushforward(model: SurrogateModel, u, q_mes: Shape, cfg: ShootingConfig) -> Shape:
    """Deform the measurement along the geodesic generated by a latent code."""
    v0 = reconstruct_v0(model, u)
    pi0 = velocity_to_momentum(q_mes, v0, cfg.kernel)
    return integrate_geodesic(q_mes, pi0, cfg)[-1][0]


# ---------------------------------------------------------------------------
# posterior sampling
# ---------------------------------------------------------------------------


def sample_posterior(
    prior: PriorSpec,
    lik: LikelihoodSpec | None,
    model: SurrogateModel | None,
    q_mes: Shape | None,
    cfg: McmcConfig,
    shooting_cfg: ShootingConfig | None = None,
) -> PosteriorChain:
    """Sample (beta[, xi]) from the posterior; `lik=None` samples the prior.

    Chains >= 2 run from distinct seeded starts and report split-Rhat; the
    returned samples concatenate the chains in order.
    """
    with_xi = lik is not None and lik.include_discrepancy
    if with_xi and model is None:
        raise InvalidInputError("discrepancy sampling needs a surrogate model")
    n_xi = model.u_min.size if with_xi else 0
    p = prior.n_beta
    xi_prior = prior.xi_prior()

    def log_post(x):
        beta = x[:p]
        xi = x[p:] if n_xi else None
        lp = prior.log_prior(beta, xi)
        if not np.isfinite(lp):
            return -np.inf
        if lik is not None:
            lp += log_likelihood(beta, xi, model, q_mes, lik, shooting_cfg)
        return lp

    grad = None
    if cfg.algorithm == "mala":
        if lik is not None and lik.include_data_term:
            raise InvalidInputError("MALA supports the latent likelihood only (no data term)")
        grad = _make_grad_log_post(prior, lik, model, n_xi)

    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)
    init_sd = np.array([c.sd() for c in prior.beta] + [xi_prior.sd()] * n_xi)
    all_samples, all_logps, rates = [], [], []
    for c in range(cfg.chains):
        rng = np.random.default_rng(seeds[c])
        x0 = np.array(
            [comp.mean() for comp in prior.beta] + [1.0] * n_xi, dtype=float
        )
        if c > 0:  # spread the extra chains over the prior
            x0 = np.array(
                [comp.sample(rng) for comp in prior.beta] + list(1.0 + 0.1 * rng.standard_normal(n_xi))
            )
        if not np.isfinite(log_post(x0)):
            x0 = np.array([comp.mean() for comp in prior.beta] + [1.0] * n_xi)
        s, lps, rate = run_chain(log_post, x0, cfg, rng, grad_log_post=grad, init_sd=init_sd)
        all_samples.append(s)
        all_logps.append(lps)
        rates.append(rate)

    names = [f"beta_{i + 1}" for i in range(p)] + [f"xi_{j + 1}" for j in range(n_xi)]
    rhat = split_rhat(all_samples) if cfg.chains >= 2 else None
    return PosteriorChain(
        samples=np.concatenate(all_samples),
        log_post=np.concatenate(all_logps),
        acceptance_rate=float(np.mean(rates)),
        seed=cfg.seed,
        burn_in=cfg.burn_in,
        thinning=cfg.thin,
        n_beta=p,
        param_names=names,
        rhat=rhat,
    )


def _make_grad_log_post(prior: PriorSpec, lik, model, n_xi):
    """Analytic gradient of the latent-space log posterior for MALA."""
    p = prior.n_beta
    xi_prior = prior.xi_prior()

    def grad(x):
        beta = x[:p]
        xi = x[p:] if n_xi else None
        g = np.array([c.dlogpdf(v) for c, v in zip(prior.beta, beta)])
        g_xi = np.array([xi_prior.dlogpdf(v) for v in xi]) if n_xi else np.empty(0)
        if lik is not None:
            gb, gx = _latent_loglik_grad(beta, xi, model, lik)
            g = g + gb
            if n_xi:
                g_xi = g_xi + gx
        return np.concatenate([g, g_xi])

    return grad


def _latent_loglik_grad(beta, xi, model: SurrogateModel, spec: LikelihoodSpec):
    """d log L / d beta and d log L / d xi for the latent Gaussian terms."""
    u_mean, u_var = predict_latent(model, beta)
    resid = u_mean - xi * model.u_min if xi is not None else u_mean
    lam = np.maximum(model.basis.explained_variance, 1e-300)
    denom = lam + u_var if spec.include_model_error else lam

    du_mean = np.empty((model.n_components, len(beta)))
    du_var = np.zeros((model.n_components, len(beta)))
    b = np.atleast_2d(np.asarray(beta, dtype=float))
    for j, gp in enumerate(model.gps):
        chol, alpha = gp._factorize()
        ks = (gp.signal_variance * np.exp(
            -0.5 * np.sum(((b - gp.x_train) / gp.lengthscales) ** 2, axis=1)
        ))
        dks = ks[:, None] * (gp.x_train - b) / gp.lengthscales**2  # (n, p)
        du_mean[j] = alpha @ dks
        if spec.include_model_error:
            from scipy.linalg import cho_solve

            kinv_ks = cho_solve(chol, ks)
            du_var[j] = -2.0 * kinv_ks @ dks

    g_beta = -(resid / denom) @ du_mean
    if spec.include_model_error:
        g_beta += np.sum(
            (0.5 * resid**2 / denom**2 - 0.5 / denom)[:, None] * du_var, axis=0
        )
    g_xi = (resid / denom) * model.u_min if xi is not None else np.empty(0)
    return g_beta, g_xi


def map_estimate(chain: PosteriorChain):
    """(beta, xi, log_post) of the highest-posterior retained sample."""
    if chain.samples.shape[0] == 0:
        raise InvalidInputError("empty chain")
    i = int(np.argmax(chain.log_post))
    beta = chain.samples[i, : chain.n_beta].copy()
    xi = chain.samples[i, chain.n_beta :].copy() if chain.samples.shape[1] > chain.n_beta else None
    return beta, xi, float(chain.log_post[i])


# ---------------------------------------------------------------------------
# posterior predictive pushforward
# ---------------------------------------------------------------------------


@dataclass
class PredictiveSummary:
    mean: Shape
    std: np.ndarray  # per-pixel / per-vertex standard deviation
    energies: np.ndarray  # deformation energy per retained draw
    n_draws: int
    n_skipped: int


def posterior_predictive(
    chain: PosteriorChain,
    model: SurrogateModel,
    q_mes: Shape,
    shooting_cfg: ShootingConfig,
    n_draws: int = 50,
    seed: int = 0,
    apply_discrepancy: bool = True,
) -> PredictiveSummary:
    """Push posterior draws forward into shape space.

    Each drawn (beta, xi) is mapped to its residual deformation code
    u(beta) - xi * u_min (when xi is present and `apply_discrepancy`), the
    velocity is reconstructed and converted to a momentum on q_mes, and the
    geodesic endpoint collected.  Draws whose integration blows up are
    skipped; more than 10% skips is an error.
    """
    n_total = chain.samples.shape[0]
    if n_draws > n_total:
        raise InvalidInputError(f"n_draws={n_draws} exceeds chain length {n_total}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(n_total, size=n_draws, replace=False)

    fields = []
    energies = []
    skipped = 0
    for i in idx:
        beta = chain.samples[i, : chain.n_beta]
        xi = chain.samples[i, chain.n_beta :] if chain.samples.shape[1] > chain.n_beta else None
        u_mean, _ = predict_latent(model, beta)
        u = u_mean - xi * model.u_min if (xi is not None and apply_discrepancy) else u_mean
        v0 = reconstruct_v0(model, u)
        try:
            pi0 = velocity_to_momentum(q_mes, v0, shooting_cfg.kernel)
            traj = integrate_geodesic(q_mes, pi0, shooting_cfg)
        except IntegrationError:
            skipped += 1
            continue
        endpoint = traj[-1][0]
        if isinstance(endpoint, GridImage):
            fields.append(endpoint.values)
        elif isinstance(endpoint, LandmarkShape):
            fields.append(endpoint.points)
        else:
            fields.append(endpoint.vertices)
        energies.append(2.0 * hamiltonian(q_mes, pi0, shooting_cfg.kernel))
    if skipped > 0.1 * n_draws:
        raise SamplerError(f"{skipped}/{n_draws} predictive draws failed to integrate")

    stack = np.stack(fields)
    mean_arr = stack.mean(axis=0)
    std_arr = stack.std(axis=0)
    if isinstance(q_mes, GridImage):
        mean_shape: Shape = GridImage(mean_arr, q_mes.box)
    elif isinstance(q_mes, LandmarkShape):
        mean_shape = LandmarkShape(mean_arr)
    else:
        mean_shape = CurveShape(mean_arr)
    return PredictiveSummary(
        mean=mean_shape,
        std=std_arr,
        energies=np.asarray(energies),
        n_draws=n_draws,
        n_skipped=skipped,
    )
