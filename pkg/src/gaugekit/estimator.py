"""scikit-learn style front end.

The sensing matrix plays the role of ``X`` (one row per measurement) and the
measurements are ``y``; the recovered signal is stored in ``coef_`` so that
``predict(X) = X @ coef_`` reproduces the measurements.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .caratheodory import certify_bound
from .core import EQUALITY, SQUARED_L2, TRUNCATED_QUADRATIC, DataFit, Problem
from .families import build_family
from .solver import SolverConfig, solve, solve_tiny_nonconvex

__all__ = ["GaugeRegressor", "family_for_width"]


def family_for_width(family, n_features, params=None):
    """Build the gauge family matching ``n_features`` columns."""
    params = dict(params or {})
    if family == "PsdCone":
        p = int(round(np.sqrt(n_features)))
        if p * p != n_features:
            raise ValueError(f"PsdCone needs a square number of features, got {n_features}")
        params.setdefault("p", p)
    elif family == "TVGradient2D":
        if "H" not in params or "W" not in params:
            raise ValueError("TVGradient2D needs H and W in family_params")
        if params["H"] * params["W"] != n_features:
            raise ValueError(f"grid {params['H']}x{params['W']} does not match {n_features} features")
    elif family == "MeasureMass" and "grid" in params:
        pass
    else:
        params.setdefault("n", n_features)
    return build_family(family, **params)


class GaugeRegressor(RegressorMixin, BaseEstimator):
    """Gauge-regularized inverse problem solver with sparse output.

    Parameters
    ----------
    family : str, default="L1Ball"
        One of ``L1Ball``, ``MeasureMass``, ``NonnegOrthant``, ``PsdCone``,
        ``GeneralizedTV1D``, ``TVGradient2D``.
    family_params : dict, optional
        Extra constructor arguments (``H``/``W`` for grids, ``grid`` for
        measures).  The ambient size is taken from ``X``.
    fit_kind : str, default="SquaredL2"
        ``SquaredL2``, ``EqualityIndicator`` or ``TruncatedQuadratic``.
    reg_weight : float, default=1.0
    cap : float, default=1.0
        Saturation level of the truncated quadratic.
    sparsify : bool, default=True
        Reduce the solution to at most ``m - d + delta`` atoms.
    max_iters, dual_gap_tol, conic_radius :
        Forwarded to :class:`SolverConfig`.
    grid_points : int, default=31
        Grid resolution per axis for ``TruncatedQuadratic``.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    representation_ : AtomicRepresentation
    n_atoms_ : int
    result_ : SolveResult
    sparsify_report_ : SparsifyReport or None

    Examples
    --------
    >>> import numpy as np
    >>> est = GaugeRegressor(reg_weight=0.5).fit(np.eye(2), [2.0, 0.2])
    >>> est.coef_
    array([1.5, 0. ])
    """

    def __init__(
        self,
        family="L1Ball",
        family_params=None,
        fit_kind=SQUARED_L2,
        reg_weight=1.0,
        cap=1.0,
        sparsify=True,
        max_iters=500,
        dual_gap_tol=1e-10,
        conic_radius=None,
        grid_points=31,
    ):
        self.family = family
        self.family_params = family_params
        self.fit_kind = fit_kind
        self.reg_weight = reg_weight
        self.cap = cap
        self.sparsify = sparsify
        self.max_iters = max_iters
        self.dual_gap_tol = dual_gap_tol
        self.conic_radius = conic_radius
        self.grid_points = grid_points

    def _data_fit(self, y):
        if self.fit_kind == SQUARED_L2:
            return DataFit.squared_l2(y)
        if self.fit_kind == EQUALITY:
            return DataFit.equality(y)
        if self.fit_kind == TRUNCATED_QUADRATIC:
            return DataFit.truncated_quadratic(y, self.cap)
        raise ValueError(f"unknown fit_kind {self.fit_kind!r}")

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True, dtype=np.float64)
        gauge = family_for_width(self.family, X.shape[1], self.family_params)
        problem = Problem(gauge, X, self._data_fit(y), float(self.reg_weight))
        config = SolverConfig(
            max_iters=self.max_iters,
            dual_gap_tol=self.dual_gap_tol,
            conic_radius=self.conic_radius,
        )
        if self.fit_kind == TRUNCATED_QUADRATIC:
            result = solve_tiny_nonconvex(problem, {"points": self.grid_points}, config)
        else:
            result = solve(problem, config)
        rep, report = result.rep, None
        if self.sparsify:
            rep, report = certify_bound(result)
        self.result_ = result
        self.representation_ = rep
        self.sparsify_report_ = report
        self.coef_ = rep.assemble()
        self.n_atoms_ = rep.r
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_
