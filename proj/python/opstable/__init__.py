"""Operator-stable random fields with varying exponents.

Commands take a config (dict, JSON text or path) and return ``(code, report)``
with the exit-code convention of the command-line tool: 0 pass, 2 negative
verdict. Invalid configs raise ``ValueError``.
"""

import json
import os

from ._core import DomainError, NumericalError, log_cf, sample_standard, stable_K, tau
from . import _core

__all__ = [
    "DomainError", "NumericalError", "tau", "stable_K", "log_cf", "sample_standard",
    "validate", "check", "norm", "cf", "tangent", "sample",
]


def _text(config):
    if isinstance(config, dict):
        return json.dumps(config)
    if isinstance(config, (str, os.PathLike)) and os.path.exists(config):
        with open(config) as f:
            return f.read()
    return config


def _wrap(pair):
    code, report = pair
    return code, json.loads(report)


def validate(config):
    _core.validate(_text(config))


def check(config):
    return _wrap(_core.check(_text(config)))


def norm(config, t=None):
    return _wrap(_core.norm(_text(config), t))


def cf(config):
    return _wrap(_core.cf(_text(config)))


def tangent(config, k_max=None, u=None):
    return _wrap(_core.tangent(_text(config), k_max, u))


def sample(config, n_paths=None, seed=None):
    """Field paths as an array of shape (n_paths, n_grid, m) and the sidecar dict."""
    values, sidecar = _core.sample(_text(config), n_paths, seed)
    return values, json.loads(sidecar)
