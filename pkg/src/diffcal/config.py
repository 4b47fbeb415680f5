"""Run configuration: one YAML document drives every pipeline stage.

The schema is validated strictly (unknown keys are rejected) and every field
has a documented default; ``DIFFCAL_SEED`` in the environment overrides the
configured seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml

from .errors import InvalidInputError
from .kernels import KernelSpec
from .mcmc import McmcConfig
from .optim import OptimizerConfig
from .calibration import LikelihoodSpec, PriorComponent, PriorSpec
from .shapes import MatchKind, MatchSpec
from .shooting import Scheme, ShootingConfig

CONFIG_VERSION = 1


@dataclass
class KernelSection:
    lengthscale: float = 0.0625  # 2 / 32 on the unit square
    amplitude: float = 1.0


@dataclass
class ShootingSection:
    num_steps: int = 15
    scheme: str = "leapfrog"
    step_size: float = 0.1
    max_iters: int = 200
    grad_clip_norm: float = 10.0
    tolerance: float = 1e-6


@dataclass
class MatchSection:
    kind: str = "l2_image"
    weight: float | None = None  # defaults to 10 / sigma_match^2
    sigma_match: float = 0.05
    current_lengthscale: float = 0.2


@dataclass
class SurrogateSection:
    filter_fraction: float = 0.10
    variance_fraction: float = 0.99
    holdout_fraction: float = 0.20
    gp_restarts: int = 5


@dataclass
class LikelihoodSection:
    sigma: float = 0.1
    include_model_error: bool = True
    include_discrepancy: bool = False
    include_data_term: bool = False


@dataclass
class PriorsSection:
    beta: list = field(default_factory=list)  # [{dist, lo, hi} | {dist, mu, sigma}]
    xi_sigma: float = 0.1


@dataclass
class McmcSection:
    algorithm: str = "rwm"
    iterations: int = 20000
    burn_in: int = 5000
    thin: int = 1
    chains: int = 1
    target_acceptance: float | None = None
    initial_scale: float = 0.1


@dataclass
class PrealignSection:
    enabled: bool = False


@dataclass
class RunConfig:
    version: int = CONFIG_VERSION
    seed: int = 0
    kernel: KernelSection = field(default_factory=KernelSection)
    shooting: ShootingSection = field(default_factory=ShootingSection)
    match: MatchSection = field(default_factory=MatchSection)
    surrogate: SurrogateSection = field(default_factory=SurrogateSection)
    likelihood: LikelihoodSection = field(default_factory=LikelihoodSection)
    priors: PriorsSection = field(default_factory=PriorsSection)
    mcmc: McmcSection = field(default_factory=McmcSection)
    prealign: PrealignSection = field(default_factory=PrealignSection)


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise InvalidInputError(f"config section {path or 'root'} must be a mapping")
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise InvalidInputError(f"unknown config key(s) {sorted(unknown)} in {path or 'root'}")
    kwargs = {}
    for name, value in data.items():
        target = _SECTION_TYPES.get(name) if path == "" else None
        if target is not None and is_dataclass(target):
            kwargs[name] = _build(target, value, f"{path}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


_SECTION_TYPES = {
    "kernel": KernelSection,
    "shooting": ShootingSection,
    "match": MatchSection,
    "surrogate": SurrogateSection,
    "likelihood": LikelihoodSection,
    "priors": PriorsSection,
    "mcmc": McmcSection,
    "prealign": PrealignSection,
}


def load_config(path) -> RunConfig:
    """Parse and validate a YAML run configuration."""
    raw = yaml.safe_load(Path(path).read_text())
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise InvalidInputError(f"{path}: config must be a YAML mapping")
    if raw.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise InvalidInputError(
            f"{path}: unsupported config version {raw.get('version')!r} (expected {CONFIG_VERSION})"
        )
    cfg = _build(RunConfig, raw, "")
    env_seed = os.environ.get("DIFFCAL_SEED")
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError:
            raise InvalidInputError(f"DIFFCAL_SEED must be an integer, got {env_seed!r}")
    return cfg


def default_config_yaml() -> str:
    """A complete, commented example configuration."""
    return """\
version: 1
seed: 0
kernel:
  lengthscale: 0.0625        # velocity-kernel lengthscale (ambient units)
  amplitude: 1.0
shooting:
  num_steps: 15              # time steps on [0, 1]
  scheme: leapfrog           # leapfrog | rk2
  step_size: 0.1             # Adam step on the initial momentum
  max_iters: 200
  grad_clip_norm: 10.0
  tolerance: 1.0e-6          # relative loss-change stop
match:
  kind: l2_image             # l2_landmarks | l2_image | current_mmd
  weight: null               # null -> 10 / sigma_match^2
  sigma_match: 0.05
  current_lengthscale: 0.2   # current kernel (curves only)
surrogate:
  filter_fraction: 0.10      # drop this share of worst registrations
  variance_fraction: 0.99    # PCA variance kept
  holdout_fraction: 0.20     # validation split
  gp_restarts: 5
likelihood:
  sigma: 0.1                 # L2 observation scale (data term)
  include_model_error: true
  include_discrepancy: false
  include_data_term: false
priors:
  beta:
    - {dist: uniform, lo: 0.0, hi: 0.5}
    - {dist: uniform, lo: 0.0, hi: 0.5}
    - {dist: uniform, lo: 0.0, hi: 0.7}
    - {dist: uniform, lo: 0.0, hi: 0.7}
  xi_sigma: 0.1
mcmc:
  algorithm: rwm             # rwm | mala
  iterations: 20000
  burn_in: 5000
  thin: 1
  chains: 1
  target_acceptance: null
  initial_scale: 0.1
prealign:
  enabled: false
"""


# ---------------------------------------------------------------------------
# builders from config sections to library objects
# ---------------------------------------------------------------------------


def kernel_spec(cfg: RunConfig) -> KernelSpec:
    return KernelSpec(lengthscale=cfg.kernel.lengthscale, amplitude=cfg.kernel.amplitude)


def match_spec(cfg: RunConfig) -> MatchSpec:
    kind = {
        "l2_landmarks": MatchKind.L2_LANDMARKS,
        "l2_image": MatchKind.L2_IMAGE,
        "current_mmd": MatchKind.CURRENT_MMD,
    }.get(cfg.match.kind)
    if kind is None:
        raise InvalidInputError(f"unknown match kind {cfg.match.kind!r}")
    weight = cfg.match.weight
    if weight is None:
        weight = 10.0 / cfg.match.sigma_match**2
    current = KernelSpec(cfg.match.current_lengthscale) if kind is MatchKind.CURRENT_MMD else None
    return MatchSpec(kind=kind, weight=weight, current_kernel=current)


def shooting_config(cfg: RunConfig) -> ShootingConfig:
    scheme = {"leapfrog": Scheme.LEAPFROG, "rk2": Scheme.RK2}.get(cfg.shooting.scheme)
    if scheme is None:
        raise InvalidInputError(f"unknown scheme {cfg.shooting.scheme!r}")
    return ShootingConfig(
        kernel=kernel_spec(cfg),
        match=match_spec(cfg),
        num_steps=cfg.shooting.num_steps,
        scheme=scheme,
        optimizer=OptimizerConfig(
            step_size=cfg.shooting.step_size,
            max_iters=cfg.shooting.max_iters,
            grad_clip_norm=cfg.shooting.grad_clip_norm,
            tolerance=cfg.shooting.tolerance,
        ),
    )


def prior_spec(cfg: RunConfig) -> PriorSpec:
    comps = []
    for i, entry in enumerate(cfg.priors.beta):
        if not isinstance(entry, dict) or "dist" not in entry:
            raise InvalidInputError(f"priors.beta[{i}] must be a mapping with a 'dist' key")
        extra = set(entry) - {"dist", "lo", "hi", "mu", "sigma"}
        if extra:
            raise InvalidInputError(f"priors.beta[{i}]: unknown key(s) {sorted(extra)}")
        if entry["dist"] == "uniform":
            comps.append(PriorComponent("uniform", float(entry["lo"]), float(entry["hi"])))
        elif entry["dist"] == "normal":
            comps.append(PriorComponent("normal", float(entry["mu"]), float(entry["sigma"])))
        else:
            raise InvalidInputError(f"priors.beta[{i}]: unknown dist {entry['dist']!r}")
    if not comps:
        raise InvalidInputError("priors.beta must list at least one component")
    return PriorSpec(beta=tuple(comps), xi_sigma=cfg.priors.xi_sigma)


def likelihood_spec(cfg: RunConfig) -> LikelihoodSpec:
    s = cfg.likelihood
    return LikelihoodSpec(
        sigma=s.sigma,
        include_model_error=s.include_model_error,
        include_discrepancy=s.include_discrepancy,
        include_data_term=s.include_data_term,
    )


def mcmc_config(cfg: RunConfig) -> McmcConfig:
    m = cfg.mcmc
    return McmcConfig(
        iterations=m.iterations,
        burn_in=m.burn_in,
        thin=m.thin,
        chains=m.chains,
        algorithm=m.algorithm,
        target_acceptance=m.target_acceptance,
        initial_scale=m.initial_scale,
        seed=cfg.seed,
    )
