"""GP-PCA surrogate of the map from simulation parameters to initial velocities.

Pipeline: drop the worst-matching fraction of the registration database, run a
PCA on the flattened initial velocities, and regress each retained latent
coordinate on the simulation parameters with an independent anisotropic
squared-exponential Gaussian process.

Latent coordinate convention: directions and eigenvalues come from the
centered SVD, but the regressed score of a velocity v is its plain projection
``u = components @ v`` (no mean subtraction).  The stored ``mean`` is the
component-orthogonal remainder of the data mean, so
``reconstruct = mean + u @ components`` still reproduces the usual centered
reconstruction for training data, while ``u = 0`` corresponds to (nearly)
zero velocity.  The calibration likelihood relies on that: the whitened norm
``sum u_j^2 / lambda_j`` must vanish for the identity deformation, not for
the dataset's average deformation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import erf, erfinv

from .errors import InvalidInputError, ModelFormatError
from .optim import Adam

MODEL_FORMAT_VERSION = 1


@dataclass
class VelocityRecord:
    """One registered simulation: parameters, flattened v0, deformation energy."""

    beta: np.ndarray
    v0_flat: np.ndarray
    energy: float

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.v0_flat = np.asarray(self.v0_flat, dtype=float)
        if not (np.all(np.isfinite(self.beta)) and np.all(np.isfinite(self.v0_flat))):
            raise InvalidInputError("velocity record contains non-finite values")
        if not np.isfinite(self.energy) or self.energy < 0:
            raise InvalidInputError(f"energy must be finite and nonnegative, got {self.energy}")


def filter_worst(records: list[VelocityRecord], fraction: float = 0.10) -> list[VelocityRecord]:
    """Drop the ceil(fraction * n) records with the largest energies.

    Ties at the cutoff are broken by original index: earlier records are kept.
    The survivors keep their original order.
    """
    if not records:
        raise InvalidInputError("no records to filter")
    if not 0 <= fraction < 1:
        raise InvalidInputError(f"fraction must be in [0, 1), got {fraction}")
    k = int(np.ceil(fraction * len(records)))
    if k == 0:
        return list(records)
    order = sorted(range(len(records)), key=lambda i: (-records[i].energy, -i))
    dropped = set(order[:k])
    return [r for i, r in enumerate(records) if i not in dropped]


@dataclass
class PcaBasis:
    mean: np.ndarray  # component-orthogonal offset used in reconstruction
    components: np.ndarray  # (P, D), orthonormal rows
    explained_variance: np.ndarray  # (P,), non-increasing
    variance_fraction: float
    degenerate: bool = False

    def project(self, v: np.ndarray) -> np.ndarray:
        """Latent score of a velocity: plain projection onto the directions."""
        return self.components @ np.asarray(v, dtype=float)

    def reconstruct(self, u: np.ndarray) -> np.ndarray:
        return self.mean + np.asarray(u, dtype=float) @ self.components


def fit_pca(records: list[VelocityRecord], variance_fraction: float = 0.99) -> PcaBasis:
    """Centered SVD keeping the smallest count reaching the variance fraction."""
    if len(records) < 2:
        raise InvalidInputError("PCA needs at least two records")
    if not 0 < variance_fraction <= 1:
        raise InvalidInputError("variance_fraction must be in (0, 1]")
    x = np.stack([r.v0_flat for r in records])
    data_mean = x.mean(axis=0)
    centered = x - data_mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    variances = svals**2 / (len(records) - 1)
    total = variances.sum()
    if total <= 1e-300:
        comp = vt[:1]
        comp = comp * np.sign(comp[0, np.argmax(np.abs(comp[0]))] or 1.0)
        return PcaBasis(
            mean=data_mean - (comp @ data_mean) @ comp,
            components=comp,
            explained_variance=np.zeros(1),
            variance_fraction=variance_fraction,
            degenerate=True,
        )
    cum = np.cumsum(variances) / total
    p = int(np.searchsorted(cum, variance_fraction - 1e-12) + 1)
    p = min(p, len(variances))
    comps = vt[:p].copy()
    for j in range(p):  # deterministic sign: largest-magnitude entry positive
        k = np.argmax(np.abs(comps[j]))
        if comps[j, k] < 0:
            comps[j] = -comps[j]
    return PcaBasis(
        mean=data_mean - (comps @ data_mean) @ comps,
        components=comps,
        explained_variance=variances[:p].copy(),
        variance_fraction=variance_fraction,
    )


# ---------------------------------------------------------------------------
# Gaussian-process regression on a single latent coordinate
# ---------------------------------------------------------------------------


@dataclass
class GpModel:
    """Zero-mean GP on centered targets; the training mean is added back."""

    lengthscales: np.ndarray  # (p,), input units
    signal_variance: float
    nugget: float
    x_train: np.ndarray  # (n, p)
    y_train: np.ndarray  # (n,)
    _chol: tuple | None = field(default=None, repr=False)
    _alpha: np.ndarray | None = field(default=None, repr=False)

    @property
    def y_mean(self) -> float:
        return float(self.y_train.mean())

    def _factorize(self):
        if self._chol is None:
            k = _se_kernel(self.x_train, self.x_train, self.lengthscales, self.signal_variance)
            k[np.diag_indices_from(k)] += self.nugget
            self._chol = cho_factor(k, lower=True)
            self._alpha = cho_solve(self._chol, self.y_train - self.y_mean)
        return self._chol, self._alpha

    def predict(self, x: np.ndarray):
        """Posterior mean and variance at rows of x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        chol, alpha = self._factorize()
        ks = _se_kernel(x, self.x_train, self.lengthscales, self.signal_variance)
        mean = self.y_mean + ks @ alpha
        tmp = solve_triangular(chol[0], ks.T, lower=True)
        var = np.maximum(self.signal_variance - np.sum(tmp**2, axis=0), 1e-16 * self.signal_variance)
        return mean, var

    def log_marginal_likelihood(self) -> float:
        chol, alpha = self._factorize()
        n = len(self.y_train)
        yc = self.y_train - self.y_mean
        return float(
            -0.5 * yc @ alpha
            - np.sum(np.log(np.diag(chol[0])))
            - 0.5 * n * np.log(2 * np.pi)
        )


def _se_kernel(xa, xb, lengthscales, signal_variance):
    d = (xa[:, None, :] - xb[None, :, :]) / lengthscales
    return signal_variance * np.exp(-0.5 * np.sum(d**2, axis=-1))


def _lml_and_grad(x, y, log_ls, log_sv, nugget):
    """Log marginal likelihood and gradients in (log lengthscales, log signal var)."""
    ls = np.exp(log_ls)
    sv = np.exp(log_sv)
    n = len(y)
    diff = x[:, None, :] - x[None, :, :]
    sq = (diff / ls) ** 2
    k_signal = sv * np.exp(-0.5 * sq.sum(axis=-1))
    k = k_signal + nugget * np.eye(n)
    try:
        chol = cho_factor(k, lower=True)
    except np.linalg.LinAlgError:
        return -np.inf, np.zeros(len(ls) + 1)
    alpha = cho_solve(chol, y)
    lml = -0.5 * y @ alpha - np.sum(np.log(np.diag(chol[0]))) - 0.5 * n * np.log(2 * np.pi)
    kinv = cho_solve(chol, np.eye(n))
    w = np.outer(alpha, alpha) - kinv
    grads = np.empty(len(ls) + 1)
    for d in range(len(ls)):
        grads[d] = 0.5 * np.sum(w * (k_signal * sq[..., d]))
    grads[-1] = 0.5 * np.sum(w * k_signal)
    return float(lml), grads


def fit_gp(inputs, targets, restarts: int = 5, seed: int = 0, nugget: float = 1e-8) -> GpModel:
    """Anisotropic SE GP with hyperparameters from multi-start MLE.

    Log-space gradient ascent from `restarts` seeded initial points; the
    returned hyperparameters achieve an LML at least as high as every start.
    An ill-conditioned covariance escalates the nugget tenfold up to 1e-2.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float)
    if x.shape[0] != y.shape[0] or x.shape[0] < 3:
        raise InvalidInputError("GP fitting needs n >= 3 matching inputs/targets")
    rng = np.random.default_rng(seed)
    span = np.maximum(x.max(axis=0) - x.min(axis=0), 1e-8)
    yc = y - y.mean()  # the model carries the training mean separately
    var_y = max(float(np.var(y)), 1e-12)

    current_nugget = max(nugget, 1e-8)
    while True:
        best = (-np.inf, None, None)
        failed = False
        for r in range(restarts):
            if r == 0:
                log_ls = np.log(0.5 * span)
            else:
                log_ls = np.log(span * rng.uniform(0.1, 2.0, size=span.shape))
            log_sv = np.log(var_y * rng.uniform(0.5, 2.0)) if r else np.log(var_y)
            theta = np.append(log_ls, log_sv)
            lml0, _ = _lml_and_grad(x, yc, theta[:-1], theta[-1], current_nugget)
            if not np.isfinite(lml0):
                failed = True
                continue
            if lml0 > best[0]:
                best = (lml0, theta[:-1].copy(), theta[-1])
            adam = Adam(step_size=0.1)
            for _ in range(120):
                lml, grad = _lml_and_grad(x, yc, theta[:-1], theta[-1], current_nugget)
                if not np.isfinite(lml):
                    break
                if lml > best[0]:
                    best = (lml, theta[:-1].copy(), theta[-1])
                theta = adam.update(theta, -grad)  # ascent
                theta = np.clip(theta, -12.0, 12.0)
        if best[1] is not None and not failed:
            break
        current_nugget *= 10
        if current_nugget > 1e-2:
            raise InvalidInputError("GP covariance remained ill-conditioned up to nugget 1e-2")
    return GpModel(
        lengthscales=np.exp(best[1]),
        signal_variance=float(np.exp(best[2])),
        nugget=current_nugget,
        x_train=x,
        y_train=y,
    )


# ---------------------------------------------------------------------------
# surrogate model: PCA + per-component GPs
# ---------------------------------------------------------------------------


@dataclass
class SurrogateModel:
    basis: PcaBasis
    gps: list[GpModel]
    u_min: np.ndarray  # latent code of the lowest-energy training record
    training_summary: dict

    @property
    def n_components(self) -> int:
        return len(self.gps)


def build_surrogate(
    records: list[VelocityRecord],
    variance_fraction: float = 0.99,
    gp_restarts: int = 5,
    seed: int = 0,
) -> SurrogateModel:
    """Fit PCA and per-component GPs on an (already filtered) record set."""
    basis = fit_pca(records, variance_fraction)
    x = np.stack([r.beta for r in records])
    scores = np.stack([basis.project(r.v0_flat) for r in records])
    gps = [
        fit_gp(x, scores[:, j], restarts=gp_restarts, seed=seed + 1000 * j)
        for j in range(scores.shape[1])
    ]
    i_min = int(np.argmin([r.energy for r in records]))
    recon = np.stack([basis.reconstruct(s) for s in scores])
    resid = np.stack([r.v0_flat for r in records]) - recon
    summary = {
        "n_train": len(records),
        "n_components": scores.shape[1],
        "recon_var": resid.var(axis=0),
        "min_energy": float(records[i_min].energy),
    }
    return SurrogateModel(basis=basis, gps=gps, u_min=scores[i_min].copy(), training_summary=summary)


def predict_latent(model: SurrogateModel, beta) -> tuple[np.ndarray, np.ndarray]:
    """Per-component GP posterior mean and variance of the latent score at beta."""
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    means = np.empty(model.n_components)
    variances = np.empty(model.n_components)
    for j, gp in enumerate(model.gps):
        m, v = gp.predict(beta)
        means[j], variances[j] = m[0], v[0]
    return means, variances


def reconstruct_v0(model: SurrogateModel, u) -> np.ndarray:
    return model.basis.reconstruct(u)


def _gaussian_crps(mu, sigma, y):
    z = (y - mu) / sigma
    pdf = np.exp(-0.5 * z**2) / np.sqrt(2 * np.pi)
    cdf = 0.5 * (1 + erf(z / np.sqrt(2)))
    return sigma * (z * (2 * cdf - 1) + 2 * pdf - 1 / np.sqrt(np.pi))


def validation_report(model: SurrogateModel, held_out: list[VelocityRecord]) -> dict:
    """Aggregated accuracy/calibration metrics in the reconstructed space.

    NRMSE, NMAE, Q2 and CRPS are computed per output dimension (normalized by
    the held-out standard deviation where applicable) and averaged; IAE
    integrates |empirical - nominal| central-interval coverage over 99 levels;
    RRMSE is the global relative RMSE in percent.
    """
    if len(held_out) < 5:
        raise InvalidInputError("validation needs at least 5 held-out records")
    y_true = np.stack([r.v0_flat for r in held_out])
    preds = []
    variances = []
    recon_var = model.training_summary.get("recon_var", 0.0)
    comps = model.basis.components
    for r in held_out:
        u_mean, u_var = predict_latent(model, r.beta)
        preds.append(reconstruct_v0(model, u_mean))
        variances.append(u_var @ comps**2 + recon_var)
    y_pred = np.stack(preds)
    y_var = np.maximum(np.stack(variances), 1e-300)

    err = y_true - y_pred
    sd = y_true.std(axis=0)
    keep = sd > 1e-12 * max(1.0, np.abs(y_true).max())
    sd_k = sd[keep]
    rmse = np.sqrt(np.mean(err[:, keep] ** 2, axis=0))
    mae = np.mean(np.abs(err[:, keep]), axis=0)
    q2 = 1.0 - np.sum(err[:, keep] ** 2, axis=0) / np.sum(
        (y_true[:, keep] - y_true[:, keep].mean(axis=0)) ** 2, axis=0
    )
    crps = np.mean(_gaussian_crps(y_pred[:, keep], np.sqrt(y_var[:, keep]), y_true[:, keep]), axis=0)

    alphas = np.linspace(0.01, 0.99, 99)
    z = np.sqrt(2.0) * erfinv(alphas)
    cover = np.abs(err[:, keep, None]) <= z[None, None, :] * np.sqrt(y_var[:, keep, None])
    coverage = cover.mean(axis=0)  # (D_kept, 99)
    iae = np.trapezoid(np.abs(coverage - alphas[None, :]), alphas, axis=1)

    denom = np.sqrt(np.sum(y_true**2))
    return {
        "NRMSE": float(np.mean(rmse / sd_k)),
        "NMAE": float(np.mean(mae / sd_k)),
        "Q2": float(np.mean(q2)),
        "CRPS": float(np.mean(crps / sd_k)),
        "IAE": float(np.mean(iae)),
        "RRMSE": float(100.0 * np.sqrt(np.sum(err**2)) / denom) if denom > 0 else 0.0,
        "n_held_out": len(held_out),
    }


# ---------------------------------------------------------------------------
# serialization: versioned JSON with bit-exact doubles (hex floats)
# ---------------------------------------------------------------------------


def _enc(arr) -> list:
    a = np.asarray(arr, dtype=float)
    return [[v.hex() for v in row] for row in a] if a.ndim == 2 else [v.hex() for v in a]


def _dec(obj) -> np.ndarray:
    if obj and isinstance(obj[0], list):
        return np.array([[float.fromhex(v) for v in row] for row in obj])
    return np.array([float.fromhex(v) for v in obj])


def save_model(model: SurrogateModel, path) -> None:
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "basis": {
            "mean": _enc(model.basis.mean),
            "components": _enc(model.basis.components),
            "explained_variance": _enc(model.basis.explained_variance),
            "variance_fraction": model.basis.variance_fraction,
            "degenerate": model.basis.degenerate,
        },
        "gps": [
            {
                "lengthscales": _enc(gp.lengthscales),
                "signal_variance": gp.signal_variance.hex()
                if isinstance(gp.signal_variance, float)
                else float(gp.signal_variance).hex(),
                "nugget": float(gp.nugget).hex(),
                "x_train": _enc(gp.x_train),
                "y_train": _enc(gp.y_train),
            }
            for gp in model.gps
        ],
        "u_min": _enc(model.u_min),
        "training_summary": {
            k: (_enc(v) if isinstance(v, np.ndarray) else v)
            for k, v in model.training_summary.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> SurrogateModel:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or doc.get("version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported surrogate model document (version {doc.get('version')!r}, "
            f"expected {MODEL_FORMAT_VERSION})"
        )
    b = doc["basis"]
    basis = PcaBasis(
        mean=_dec(b["mean"]),
        components=np.atleast_2d(_dec(b["components"])),
        explained_variance=_dec(b["explained_variance"]),
        variance_fraction=b["variance_fraction"],
        degenerate=b["degenerate"],
    )
    gps = [
        GpModel(
            lengthscales=_dec(g["lengthscales"]),
            signal_variance=float.fromhex(g["signal_variance"]),
            nugget=float.fromhex(g["nugget"]),
            x_train=np.atleast_2d(_dec(g["x_train"])),
            y_train=_dec(g["y_train"]),
        )
        for g in doc["gps"]
    ]
    summary = {
        k: (_dec(v) if isinstance(v, list) else v) for k, v in doc["training_summary"].items()
    }
    return SurrogateModel(basis=basis, gps=gps, u_min=_dec(doc["u_min"]), training_summary=summary)
