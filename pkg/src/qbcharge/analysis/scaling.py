"""Scaling laws across grids of fitted trajectories.

Couplings ``g`` are in units of the plasma frequency, rates and
frequencies are per collision. The laws are::

    frequency      Omega(g, q) = Omega_0 g^alpha [q (1-q)]^beta
    damping        Gamma(g, q) = Gamma_0 g^p [|q - 1/2|^delta + offset]
    charging rate  gamma(g, q) = gamma_0(q) g^p
    saturation     f(q) = a (1 - q) + b

The damping law is fitted in two stages: the coupling exponent comes from a
log regression with one intercept per q, and then (prefactor, asymmetry
exponent, offset) are fitted over q separately for each coupling, on
``Gamma / g^2``. The absolute value keeps the power real for q < 1/2.
"""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import RankDeficiencyError
from ._base import ScalingFit, check_design, check_samples_1d, multistart_fit, residual_covariance

FREQUENCY_LAW = "frequency_power_law"
DAMPING_LAW = "damping_power_law"
CHARGING_RATE_LAW = "charging_rate_power_law"
SATURATION_LAW = "saturation_level_linear"

MIN_POINTS = 6
MIN_DISTINCT = 3
# Damping rates are tabulated per coupling as Gamma / g^2.
REFERENCE_COUPLING_EXPONENT = 2.0


def _distinct(x, decimals=12) -> int:
    return len(np.unique(np.round(np.asarray(x, dtype=float), decimals)))


def _require_grid(g, q, min_points=MIN_POINTS, min_distinct=MIN_DISTINCT):
    if len(g) < min_points:
        raise RankDeficiencyError(f"need at least {min_points} points, got {len(g)}")
    if _distinct(g) < min_distinct or _distinct(q) < min_distinct:
        raise RankDeficiencyError(
            f"need at least {min_distinct} distinct couplings and populations, got "
            f"{_distinct(g)} and {_distinct(q)}")


def _check_positive(name, x):
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise ValueError(f"{name} must be positive and finite")


def _linear_fit(A, y):
    """Ordinary least squares with rank check and s^2 (A^T A)^-1 covariance."""
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise RankDeficiencyError(
            f"design matrix has rank {np.linalg.matrix_rank(A)} < {A.shape[1]} parameters")
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    dof = max(len(y) - A.shape[1], 1)
    cov = float(r @ r) / dof * np.linalg.inv(A.T @ A)
    return coef, cov, r


def _slice_exponents(g, qkeys, y) -> dict:
    """Log-log slope in g within each q slice that has two or more couplings."""
    out = {}
    for s in np.unique(qkeys):
        m = qkeys == s
        if _distinct(g[m]) >= 2:
            B = np.column_stack([np.ones(m.sum()), np.log(g[m])])
            c, *_ = np.linalg.lstsq(B, np.log(y[m]), rcond=None)
            out[float(s)] = float(c[1])
    return out


def _points(points, n_cols=3) -> np.ndarray:
    return check_design(np.asarray(points, dtype=float), n_cols)


class FrequencyScalingRegressor(RegressorMixin, BaseEstimator):
    """Log-linear fit of the oscillation frequency over (g, q).

    ``X`` has columns (g, q); ``y`` holds the fitted frequencies.
    """

    def fit(self, X, y):
        X = check_design(X, 2)
        y = check_samples_1d(y, "y")
        g, q = X[:, 0], X[:, 1]
        _require_grid(g, q)
        _check_positive("g", g)
        _check_positive("frequency", y)
        w = q * (1.0 - q)
        _check_positive("q(1-q)", w)
        A = np.column_stack([np.ones_like(g), np.log(g), np.log(w)])
        coef, cov, _ = _linear_fit(A, np.log(y))
        self.log_prefactor_, self.coupling_exponent_, self.population_exponent_ = map(float, coef)
        self.prefactor_ = math.exp(self.log_prefactor_)
        self.covariance_ = cov
        return self

    def predict(self, X):
        check_is_fitted(self, "prefactor_")
        X = check_design(X, 2)
        g, q = X[:, 0], X[:, 1]
        return self.prefactor_ * g ** self.coupling_exponent_ * (q * (1 - q)) ** self.population_exponent_

    def result(self) -> ScalingFit:
        check_is_fitted(self, "prefactor_")
        names = ("log_prefactor", "coupling_exponent", "population_exponent")
        return ScalingFit(
            law=FREQUENCY_LAW,
            params={"prefactor": self.prefactor_,
                    "coupling_exponent": self.coupling_exponent_,
                    "population_exponent": self.population_exponent_},
            covariance=self.covariance_, param_names=names)


def asymmetry_law(q, prefactor, exponent, offset):
    return prefactor * (np.abs(np.asarray(q, dtype=float) - 0.5) ** exponent + offset)


def _asymmetry_jacobian(q, prefactor, exponent, offset):
    u = np.abs(np.asarray(q, dtype=float) - 0.5)
    safe = np.where(u > 0, u, 1.0)
    pw = np.where(u > 0, safe ** exponent, 0.0)
    return np.column_stack([pw + offset, prefactor * pw * np.log(safe),
                            np.full_like(u, prefactor)])


def fit_asymmetry_law(q, y, n_starts=8):
    """Fit ``P (|q - 1/2|^delta + offset)`` to ``y``; returns (params, covariance, rms, converged)."""
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    if _distinct(np.abs(q - 0.5)) < 3:
        raise RankDeficiencyError("need at least 3 distinct |q - 1/2| values")
    u = np.abs(q - 0.5)
    starts = []
    for delta0 in (2.0, 1.5, 2.5, 1.0, 3.0, 1.8, 2.2, 4.0)[: max(1, n_starts)]:
        # P and P*offset enter linearly once delta is fixed.
        A = np.column_stack([u ** delta0, np.ones_like(u)])
        (p0, po), *_ = np.linalg.lstsq(A, y, rcond=None)
        if p0 <= 0:
            p0 = max(float(np.max(y)), 1e-12)
        starts.append([p0, delta0, po / p0])
    scale = [abs(starts[0][0]) or 1.0, 1.0, max(abs(starts[0][2]), 1e-2)]

    def res(p):
        return asymmetry_law(q, *p) - y

    opt = multistart_fit(res, starts, scale, lambda p: _asymmetry_jacobian(q, *p))
    r = res(opt.x)
    params = {"prefactor": float(opt.x[0]), "asymmetry_exponent": float(opt.x[1]),
              "offset": float(opt.x[2])}
    return params, residual_covariance(opt.jac, r), float(np.sqrt(np.mean(r ** 2))), opt.converged


class DampingScalingRegressor(RegressorMixin, BaseEstimator):
    """Two-stage fit of the damping rate over (g, q).

    Parameters
    ----------
    reference_exponent : float or None
        Power of g divided out before the per-coupling fits. None uses the
        fitted coupling exponent.
    """

    def __init__(self, reference_exponent=REFERENCE_COUPLING_EXPONENT, n_starts=8):
        self.reference_exponent = reference_exponent
        self.n_starts = n_starts

    def fit(self, X, y):
        X = check_design(X, 2)
        y = check_samples_1d(y, "y")
        g, q = X[:, 0], X[:, 1]
        _require_grid(g, q)
        _check_positive("g", g)
        _check_positive("damping", y)
        qkeys = np.round(q, 12)
        slices = np.unique(qkeys)
        # one intercept per q slice, shared slope in log g
        A = np.column_stack([np.log(g)] + [(qkeys == s).astype(float) for s in slices])
        coef, cov, _ = _linear_fit(A, np.log(y))
        self.coupling_exponent_ = float(coef[0])
        self.covariance_ = cov
        self.slices_ = [float(s) for s in slices]
        self.slice_exponents_ = _slice_exponents(g, qkeys, y)
        ref = self.coupling_exponent_ if self.reference_exponent is None else self.reference_exponent
        self.reference_exponent_ = float(ref)
        self.per_coupling_ = {}
        for gv in np.unique(np.round(g, 15)):
            m = np.isclose(g, gv, rtol=1e-12, atol=0)
            if _distinct(np.abs(q[m] - 0.5)) < 3:
                continue
            params, pcov, rms, ok = fit_asymmetry_law(q[m], y[m] / gv ** ref, self.n_starts)
            self.per_coupling_[float(gv)] = {**params, "covariance": pcov.tolist(),
                                             "residual_rms": rms, "converged": ok}
        return self

    def coupling(self, g) -> dict:
        """Per-coupling (prefactor, asymmetry_exponent, offset) for the grid value nearest ``g``."""
        check_is_fitted(self, "per_coupling_")
        if not self.per_coupling_:
            raise KeyError("no coupling had enough population values for a per-coupling fit")
        key = min(self.per_coupling_, key=lambda k: abs(math.log(k / g)))
        if not math.isclose(key, g, rel_tol=1e-9):
            raise KeyError(f"coupling {g} not in the fitted grid")
        return self.per_coupling_[key]

    def predict(self, X):
        check_is_fitted(self, "per_coupling_")
        X = check_design(X, 2)
        out = np.empty(len(X))
        for i, (gv, qv) in enumerate(X):
            p = self.coupling(gv)
            out[i] = gv ** self.reference_exponent_ * asymmetry_law(
                qv, p["prefactor"], p["asymmetry_exponent"], p["offset"])
        return out

    def result(self) -> ScalingFit:
        check_is_fitted(self, "per_coupling_")
        names = ("coupling_exponent",) + tuple(f"log_intercept_q={s:g}" for s in self.slices_)
        return ScalingFit(
            law=DAMPING_LAW,
            params={"coupling_exponent": self.coupling_exponent_},
            covariance=self.covariance_, param_names=names,
            extras={"reference_exponent": self.reference_exponent_,
                    "slice_exponents": {f"{k:g}": v for k, v in self.slice_exponents_.items()},
                    "per_coupling": {f"{k:g}": v for k, v in self.per_coupling_.items()}})


class ChargingRateScalingRegressor(RegressorMixin, BaseEstimator):
    """Power law of the incoherent charging rate in g, one prefactor per q."""

    def fit(self, X, y):
        X = check_design(X, 2)
        y = check_samples_1d(y, "y")
        g, q = X[:, 0], X[:, 1]
        if _distinct(g) < 2:
            raise RankDeficiencyError("need at least 2 distinct couplings")
        _check_positive("g", g)
        _check_positive("rate", y)
        qkeys = np.round(q, 12)
        slices = np.unique(qkeys)
        A = np.column_stack([np.log(g)] + [(qkeys == s).astype(float) for s in slices])
        coef, cov, _ = _linear_fit(A, np.log(y))
        self.coupling_exponent_ = float(coef[0])
        self.prefactors_ = {float(s): math.exp(c) for s, c in zip(slices, coef[1:])}
        self.prefactor_ = math.exp(float(np.mean(coef[1:])))
        self.covariance_ = cov
        self.slice_exponents_ = _slice_exponents(g, qkeys, y)
        return self

    def predict(self, X):
        check_is_fitted(self, "prefactors_")
        X = check_design(X, 2)
        return np.array([self.prefactors_[float(np.round(qv, 12))] * gv ** self.coupling_exponent_
                         for gv, qv in X])

    def result(self) -> ScalingFit:
        check_is_fitted(self, "prefactors_")
        names = ("coupling_exponent",) + tuple(f"log_prefactor_q={s:g}" for s in self.prefactors_)
        return ScalingFit(
            law=CHARGING_RATE_LAW,
            params={"prefactor": self.prefactor_, "coupling_exponent": self.coupling_exponent_},
            covariance=self.covariance_, param_names=names,
            extras={"prefactors": {f"{k:g}": v for k, v in self.prefactors_.items()},
                    "slice_exponents": {f"{k:g}": v for k, v in self.slice_exponents_.items()}})


class SaturationLevelRegressor(RegressorMixin, BaseEstimator):
    """Linear fit ``f = a (1 - q) + b`` of the saturation level against q."""

    def fit(self, X, y):
        q = check_samples_1d(X)
        y = check_samples_1d(y, "y")
        if _distinct(q) < 2:
            raise RankDeficiencyError("need at least 2 distinct populations")
        A = np.column_stack([1.0 - q, np.ones_like(q)])
        coef, cov, _ = _linear_fit(A, y)
        self.slope_, self.intercept_ = map(float, coef)
        self.covariance_ = cov
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        q = check_samples_1d(X)
        return self.slope_ * (1.0 - q) + self.intercept_

    def result(self) -> ScalingFit:
        check_is_fitted(self, "slope_")
        return ScalingFit(law=SATURATION_LAW, params={"a": self.slope_, "b": self.intercept_},
                          covariance=self.covariance_, param_names=("a", "b"))


def fit_frequency_scaling(points) -> ScalingFit:
    """``points`` rows are (g, q, omega)."""
    P = _points(points)
    return FrequencyScalingRegressor().fit(P[:, :2], P[:, 2]).result()


def fit_damping_scaling(points, reference_exponent=REFERENCE_COUPLING_EXPONENT) -> ScalingFit:
    """``points`` rows are (g, q, gamma)."""
    P = _points(points)
    return DampingScalingRegressor(reference_exponent).fit(P[:, :2], P[:, 2]).result()


def fit_charging_rate_scaling(points) -> ScalingFit:
    """``points`` rows are (g, q, gamma) from saturation fits."""
    P = _points(points)
    return ChargingRateScalingRegressor().fit(P[:, :2], P[:, 2]).result()


def fit_saturation_levels(points) -> ScalingFit:
    """``points`` rows are (q, f) or (g, q, f); couplings are pooled."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 2 and P.shape[1] == 3:
        P = P[:, 1:]
    P = _points(P, 2)
    return SaturationLevelRegressor().fit(P[:, 0], P[:, 1]).result()
