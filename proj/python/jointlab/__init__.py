"""Joint longitudinal-survival models fitted by EM, with profile-likelihood inference.

Structured values (datasets, fits, scenarios, configs) are plain dicts with
the same layout as the command-line tool's JSON files.
"""

import json
import os

from . import _core
from ._core import JointlabError, chi_squared_quantile

__all__ = [
    "JointlabError",
    "chi_squared_quantile",
    "dataset_digest",
    "default_scenario",
    "fit",
    "import_csv",
    "information",
    "lr_statistic",
    "posterior",
    "profile_loglik",
    "replicate_study",
    "simulate",
    "total_loglik",
]

__version__ = _core.tool_version


def _dump(obj):
    if obj is None:
        return ""
    if isinstance(obj, str):
        return obj
    return json.dumps(obj, allow_nan=False)


def _threads(threads):
    if threads is not None:
        return int(threads)
    return int(os.environ.get("JOINTLAB_THREADS", "1"))


def default_scenario():
    return json.loads(_core.default_scenario())


def simulate(n, scenario=None, seed=None, threads=None):
    return json.loads(_core.simulate(_dump(scenario), n, seed, _threads(threads)))


def fit(data, config=None, init=None, threads=None):
    return json.loads(_core.fit(_dump(data), _dump(config), _dump(init), _threads(threads)))


def total_loglik(data, theta, hazard, points=20):
    return _core.total_loglik(_dump(data), _dump(theta), _dump(hazard), points)


def profile_loglik(data, theta, config=None):
    return _core.profile_loglik(_dump(data), _dump(theta), _dump(config))


def information(data, fit_result, scheme="central", c_h=1.0, level=0.95, threads=None):
    return json.loads(_core.information(_dump(data), _dump(fit_result), scheme, c_h, level, _threads(threads)))


def lr_statistic(data, fit_result, theta_0):
    return _core.lr_statistic(_dump(data), _dump(fit_result), _dump(theta_0))


def posterior(data, index, theta, hazard, points=20, adaptive=True):
    return _core.posterior(_dump(data), index, _dump(theta), _dump(hazard), points, adaptive)


def replicate_study(kind, n, replicates, scenario=None, seed=0, threads=None):
    return json.loads(_core.replicate_study(_dump(scenario), kind, n, replicates, seed, _threads(threads)))


def dataset_digest(data):
    return _core.dataset_digest(_dump(data))


def import_csv(measurements, paths, events, tau):
    return json.loads(_core.import_csv(str(measurements), str(paths), str(events), tau))
