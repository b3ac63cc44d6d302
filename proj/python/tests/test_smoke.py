import json
import math
import os
import pathlib

import numpy as np
import pytest

import copula_dcc as cd

DATA = pathlib.Path(os.environ.get("CDG_TEST_DATA", pathlib.Path(__file__).resolve().parents[2] / "tests" / "data"))


def test_unconditional_sigma():
    assert cd.unconditional_sigma(5.410e-07, 0.0653, 0.8970) == pytest.approx(0.0038, abs=5e-5)


def test_garch_and_dcc_round_trip():
    rng = np.random.default_rng(3)
    r = 0.01 * rng.standard_normal(800)
    g = cd.fit_garch(r)
    assert g["alpha"] + g["beta"] < 1
    sigma, xi = cd.filter_variance(g, r)
    assert np.allclose(sigma * xi, r)

    xi3 = rng.standard_normal((600, 3))
    d = cd.fit_dcc(xi3)
    eps = cd.dcc_residuals(d, xi3, "eigen")
    assert eps.shape == (600, 3)


def test_decompose_and_errors():
    r = np.array([[1.0, 0.5], [0.5, 1.0]])
    for m in ["sqrt", "sqrt2", "cholesky", "eigen", "eigen2"]:
        x = cd.decompose(m, r, [0.01, 0.02])
        assert np.allclose(x @ x.T, r, atol=1e-12)
    with pytest.raises(cd.ConfigError):
        cd.decompose("nonsense", r)
    with pytest.raises(cd.MatrixError):
        cd.decompose("cholesky", np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_copula_and_cokurtosis():
    assert cd.copula_logdensity("ga", 0.0, 0.0, 0.3, 0.7) == pytest.approx(0.0, abs=1e-14)
    assert cd.cokurtosis22([1, -1, 1, -1], [1, 1, -1, -1]) == pytest.approx(1.0)
    aic, bic = cd.information_criteria(10.0, 3, 100)
    assert aic == -14.0
    assert bic == pytest.approx(-20 + 3 * math.log(100))


def test_residual_fit_nesting():
    rng = np.random.default_rng(7)
    z = rng.standard_normal((500, 3)) @ np.linalg.cholesky([[1, 0.5, 0.2], [0.5, 1, 0.3], [0.2, 0.3, 1]]).T
    ic = cd.fit_residual_model(z, "IC")
    gc = cd.fit_residual_model(z, "GC")
    pc = cd.fit_residual_model(z, "PC", "P1:ga:ga:ga")
    assert gc["loglik"] >= ic["loglik"] - 1e-6
    assert pc["loglik"] == pytest.approx(gc["loglik"], abs=1e-4)
    assert pc["spec"] == "P1:ga:ga:ga"
    rho = cd.model_correlation(gc, sections=60)
    assert rho.shape == (3, 3)
    assert abs(rho[0, 1] - 0.5) < 0.1
    assert math.isfinite(cd.residual_logdensity(gc, [0.1, -0.2, 0.3]))


def test_pipeline(tmp_path):
    config = {
        "data": str(DATA / "fx_synthetic.csv"),
        "split": "2020-07-01",
        "decomp": ["cholesky"],
        "menu": ["IC", "GC"],
        "resamples": 200,
        "out": str(tmp_path),
        "jobs": 1,
    }
    cd.run("fit", config)
    cd.run("report", config)
    report = (tmp_path / "report.csv").read_text().splitlines()
    assert len(report) == 1 + 2 * 2
    garch = json.loads((tmp_path / "garch.json").read_text())
    assert garch["provenance"]["config_hash"] == cd.config_hash(config)
    assert (tmp_path / "cokurtosis.csv").read_text().splitlines()[1].startswith("Group1-12,")
    with pytest.raises(cd.ConfigError):
        cd.run("fit", dict(config, split="not a date"))
