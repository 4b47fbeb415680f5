import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffcal import Box, GridImage
from diffcal.errors import InvalidInputError
from diffcal import fileio


class TestGridFile:
    def test_round_trip_lossless(self, tmp_path):
        rng = np.random.default_rng(0)
        img = GridImage(rng.standard_normal((5, 7)) * 1e3, Box(0.1, -0.2, 2.0, 1.5))
        path = tmp_path / "img.grid"
        fileio.write_grid(path, img)
        back = fileio.read_grid(path)
        assert np.array_equal(back.values, img.values)
        assert back.box == img.box

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_round_trip_property(self, seed):
        import tempfile
        from pathlib import Path

        rng = np.random.default_rng(seed)
        img = GridImage(rng.standard_normal((3, 4)) * 10.0 ** rng.integers(-8, 8))
        with tempfile.TemporaryDirectory() as d:
            path = Path(d) / "img.grid"
            fileio.write_grid(path, img)
            assert np.array_equal(fileio.read_grid(path).values, img.values)

    def test_header_format(self, tmp_path):
        img = GridImage(np.zeros((3, 4)))
        path = tmp_path / "img.grid"
        fileio.write_grid(path, img)
        header = path.read_text().splitlines()[0]
        assert header.split()[:4] == ["#", "grid", "3", "4"]

    def test_rejects_malformed(self, tmp_path):
        p = tmp_path / "bad.grid"
        p.write_text("not a grid\n1 2 3\n")
        with pytest.raises(InvalidInputError):
            fileio.read_grid(p)
        p.write_text("# grid 2 2 0 0 1 1\n1 2\n")
        with pytest.raises(InvalidInputError):
            fileio.read_grid(p)
        p.write_text("# grid 2 2 0 0 1 1\n1 2\n3 nan\n")
        with pytest.raises(InvalidInputError):
            fileio.read_grid(p)


class TestSeriesAndPoints:
    def test_series_round_trip(self, tmp_path):
        t = np.linspace(0, 3, 11)
        y = np.sin(t)
        path = tmp_path / "curve.csv"
        fileio.write_series(path, t, y)
        t2, y2 = fileio.read_series(path)
        assert np.array_equal(t, t2)
        assert np.array_equal(y, y2)

    def test_read_curve_normalizes(self, tmp_path):
        path = tmp_path / "curve.csv"
        fileio.write_series(path, [10.0, 20.0, 30.0], [5.0, -5.0, 0.0])
        curve = fileio.read_curve(path)
        assert curve.vertices.min() == 0.0
        assert curve.vertices.max() == 1.0

    def test_series_needs_header(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("1,2\n3,4\n")
        with pytest.raises(InvalidInputError):
            fileio.read_series(p)

    def test_points_round_trip(self, tmp_path):
        pts = np.random.default_rng(1).normal(size=(6, 2))
        path = tmp_path / "p.csv"
        fileio.write_points(path, pts)
        assert np.array_equal(fileio.read_points(path), pts)


class TestBetasAndTables:
    def test_betas_round_trip(self, tmp_path):
        names = ["sim_000", "sim_001"]
        betas = np.array([[0.1, 0.2, 0.3, 0.4], [0.5, 0.6, 0.65, 0.7]])
        path = tmp_path / "betas.csv"
        fileio.write_betas(path, names, betas)
        n2, b2 = fileio.read_betas(path)
        assert n2 == names
        assert np.array_equal(b2, betas)

    def test_chain_round_trip(self, tmp_path):
        from diffcal.calibration import PosteriorChain

        rng = np.random.default_rng(2)
        chain = PosteriorChain(
            samples=rng.normal(size=(8, 3)),
            log_post=rng.normal(size=8),
            acceptance_rate=0.3,
            seed=0,
            burn_in=10,
            thinning=1,
            n_beta=2,
            param_names=["beta_1", "beta_2", "xi_1"],
        )
        path = tmp_path / "chain.csv"
        fileio.write_chain_csv(path, chain)
        names, samples, logps = fileio.read_chain_csv(path)
        assert names == chain.param_names
        assert np.array_equal(samples, chain.samples)
        assert np.array_equal(logps, chain.log_post)
