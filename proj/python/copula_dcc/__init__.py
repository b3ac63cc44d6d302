"""Copula-DCC-GARCH estimation and model comparison."""

import json

import numpy as np

from . import _core
from ._core import (
    ConfigError,
    DomainError,
    Error,
    EvalError,
    FitError,
    IngestError,
    MatrixError,
    ParamError,
    StatError,
    cokurtosis22,
    copula_logdensity,
    decompose,
    information_criteria,
    unconditional_sigma,
)

__version__ = _core.__version__

__all__ = [
    "ConfigError", "DomainError", "Error", "EvalError", "FitError", "IngestError", "MatrixError", "ParamError",
    "StatError", "cokurtosis22", "copula_logdensity", "config_hash", "dcc_residuals", "decompose", "filter_variance",
    "fit_dcc", "fit_garch", "fit_residual_model", "information_criteria", "model_correlation", "residual_logdensity",
    "run", "unconditional_sigma",
]


def _array(x, ndim):
    a = np.ascontiguousarray(x, dtype=float)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    return a


def fit_garch(returns, constrain_sigma0=True):
    """GARCH(1,1) fit of one return series; dict with omega, alpha, beta, sigma0, loglik."""
    return json.loads(_core.fit_garch(_array(returns, 1), constrain_sigma0))


def filter_variance(params, returns):
    """(sigma, xi) of a return series under fitted GARCH parameters."""
    return _core.filter_variance(json.dumps(params), _array(returns, 1))


def fit_dcc(xi):
    return json.loads(_core.fit_dcc(_array(xi, 2)))


def dcc_residuals(params, xi, method="cholesky", tau=50, sigma=None):
    s = None if sigma is None else _array(sigma, 2)
    return _core.dcc_residuals(json.dumps(params), _array(xi, 2), method, tau, s)


def fit_residual_model(data, item, spec=None):
    """Fits one menu item (IC, CIC, GC, CGC, TC, CTC, PC, CPC); PC/CPC need a spec like 'P1:ga:cl90:t'."""
    return json.loads(_core.fit_residual_model(_array(data, 2), item, spec))


def residual_logdensity(model, x):
    m = model["model"] if "model" in model else model
    return _core.residual_logdensity(json.dumps(m), list(map(float, x)))


def model_correlation(model, sections=100):
    m = model["model"] if "model" in model else model
    return _core.model_correlation(json.dumps(m), sections)


def config_hash(config):
    return _core.config_hash(json.dumps(config))


def run(command, config):
    """Runs one pipeline subcommand (ingest, fit, sweep, report) with a config dict."""
    fn = {"ingest": _core.cmd_ingest, "fit": _core.cmd_fit, "sweep": _core.cmd_sweep, "report": _core.cmd_report}
    if command not in fn:
        raise ValueError(f"unknown command {command!r}")
    fn[command](json.dumps(config))
