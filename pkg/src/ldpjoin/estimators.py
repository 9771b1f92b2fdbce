"""scikit-learn style wrappers around the functional pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, column_or_1d

from ldpjoin.client import perturb_batch
from ldpjoin.hashing import derive_family
from ldpjoin.params import SketchParams
from ldpjoin.server import estimate_frequencies, ldp_join_sketch, ldp_join_sketch_plus, prisk_build


def _check_ids(values, name: str) -> np.ndarray:
    values = column_or_1d(np.asarray(values), warn=False)
    if values.dtype.kind not in "iu":
        raise ValueError(f"{name} must hold integer value ids, got dtype {values.dtype}")
    if values.dtype.kind == "i" and values.size and values.min() < 0:
        raise ValueError(f"{name} must hold non-negative value ids")
    return values.astype(np.uint64)


class LDPJoinSizeEstimator(BaseEstimator):
    """Private join-size estimate of two value columns.

    ``fit(a, b)`` perturbs every value, builds both sketches and stores the
    estimate in ``estimate_``. ``plus=True`` runs the two-phase variant, which
    needs ``domain`` (an array of candidate ids or an int ``D`` for ``range(D)``).
    """

    def __init__(self, k=18, m=1024, epsilon=4.0, seed=0, plus=False, rate=0.1, theta=0.001, domain=None):
        self.k = k
        self.m = m
        self.epsilon = epsilon
        self.seed = seed
        self.plus = plus
        self.rate = rate
        self.theta = theta
        self.domain = domain

    def _params(self) -> SketchParams:
        return SketchParams(self.k, self.m, self.epsilon, self.seed)

    def fit(self, a, b):
        params = self._params()
        if not params.epsilon > 0:
            raise ValueError("epsilon must be > 0 to debias the sketches")
        a, b = _check_ids(a, "a"), _check_ids(b, "b")
        rng = np.random.default_rng(self.seed)
        if self.plus:
            if self.domain is None:
                raise ValueError("plus=True needs the candidate domain")
            domain = np.arange(self.domain) if np.isscalar(self.domain) else self.domain
            self.result_ = ldp_join_sketch_plus(a, b, params, self.rate, self.theta, domain=domain, rng=rng)
        else:
            self.result_ = ldp_join_sketch(a, b, params, rng)
        self.estimate_ = float(self.result_.value)
        return self

    def predict(self, X=None) -> float:
        check_is_fitted(self, "estimate_")
        return self.estimate_


class PrivateFrequencyEstimator(BaseEstimator):
    """Frequency oracle: ``fit(values)`` then ``predict(ids)``."""

    def __init__(self, k=18, m=1024, epsilon=4.0, seed=0):
        self.k = k
        self.m = m
        self.epsilon = epsilon
        self.seed = seed

    def fit(self, values, y=None):
        params = SketchParams(self.k, self.m, self.epsilon, self.seed)
        if not params.epsilon > 0:
            raise ValueError("epsilon must be > 0 to debias the sketch")
        values = _check_ids(values, "values")
        family = derive_family(params)
        reports = perturb_batch(values, params, family, np.random.default_rng(self.seed))
        self.sketch_ = prisk_build(reports, params, family)
        self.n_samples_ = int(values.size)
        return self

    def predict(self, ids) -> np.ndarray:
        check_is_fitted(self, "sketch_")
        return estimate_frequencies(self.sketch_, _check_ids(ids, "ids"))
