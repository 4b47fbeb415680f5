import pytest

from diffcal import config as cfgmod
from diffcal.errors import InvalidInputError
from diffcal.shapes import MatchKind
from diffcal.shooting import Scheme


def write(tmp_path, text):
    p = tmp_path / "config.yaml"
    p.write_text(text)
    return p


def test_default_config_parses_and_builds(tmp_path):
    p = write(tmp_path, cfgmod.default_config_yaml())
    cfg = cfgmod.load_config(p)
    assert cfg.version == 1
    spec = cfgmod.kernel_spec(cfg)
    assert spec.lengthscale == pytest.approx(0.0625)
    match = cfgmod.match_spec(cfg)
    assert match.kind is MatchKind.L2_IMAGE
    assert match.weight == pytest.approx(10.0 / 0.05**2)
    shooting = cfgmod.shooting_config(cfg)
    assert shooting.scheme is Scheme.LEAPFROG
    prior = cfgmod.prior_spec(cfg)
    assert prior.n_beta == 4
    mc = cfgmod.mcmc_config(cfg)
    assert mc.iterations == 20000


def test_unknown_keys_rejected(tmp_path):
    p = write(tmp_path, "version: 1\nbogus_key: 3\n")
    with pytest.raises(InvalidInputError, match="bogus_key"):
        cfgmod.load_config(p)
    p = write(tmp_path, "version: 1\nkernel:\n  lengthscale: 0.1\n  spam: 2\n")
    with pytest.raises(InvalidInputError, match="spam"):
        cfgmod.load_config(p)


def test_version_checked(tmp_path):
    p = write(tmp_path, "version: 99\n")
    with pytest.raises(InvalidInputError, match="version"):
        cfgmod.load_config(p)


def test_explicit_weight_wins_over_sigma(tmp_path):
    p = write(tmp_path, "version: 1\nmatch:\n  kind: l2_image\n  weight: 123.0\n")
    cfg = cfgmod.load_config(p)
    assert cfgmod.match_spec(cfg).weight == 123.0


def test_normal_prior_component(tmp_path):
    p = write(
        tmp_path,
        "version: 1\npriors:\n  beta:\n    - {dist: normal, mu: 0.3, sigma: 0.05}\n",
    )
    prior = cfgmod.prior_spec(cfgmod.load_config(p))
    assert prior.beta[0].dist == "normal"
    assert prior.beta[0].a == 0.3


def test_bad_prior_entries(tmp_path):
    p = write(tmp_path, "version: 1\npriors:\n  beta:\n    - {dist: uniform, lo: 0, hi: 1, junk: 2}\n")
    with pytest.raises(InvalidInputError, match="junk"):
        cfgmod.prior_spec(cfgmod.load_config(p))
    p = write(tmp_path, "version: 1\npriors:\n  beta: []\n")
    with pytest.raises(InvalidInputError):
        cfgmod.prior_spec(cfgmod.load_config(p))


def test_env_seed_override(tmp_path, monkeypatch):
    p = write(tmp_path, "version: 1\nseed: 5\n")
    assert cfgmod.load_config(p).seed == 5
    monkeypatch.setenv("DIFFCAL_SEED", "99")
    assert cfgmod.load_config(p).seed == 99
    monkeypatch.setenv("DIFFCAL_SEED", "abc")
    with pytest.raises(InvalidInputError):
        cfgmod.load_config(p)


def test_current_match_gets_kernel(tmp_path):
    p = write(
        tmp_path,
        "version: 1\nmatch:\n  kind: current_mmd\n  current_lengthscale: 0.33\n",
    )
    match = cfgmod.match_spec(cfgmod.load_config(p))
    assert match.kind is MatchKind.CURRENT_MMD
    assert match.current_kernel.lengthscale == 0.33
