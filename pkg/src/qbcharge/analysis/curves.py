"""Fits of single stored-energy trajectories.

Two shapes are recognised. Coherent charging gives a damped oscillation
about half the well depth::

    dE(n) = A [1 - exp(-Gamma n) cos(Omega n)],   A = E_f / 2

and incoherent charging a monotone saturation::

    dE(n) = f [1 - exp(-gamma n)]

Energies are in units of E_f, so the default amplitude is 0.5.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.signal import find_peaks
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import ShapeMismatchError
from ._base import (DampedCosineFit, check_samples_1d, multistart_fit,
                    residual_covariance)

SMOOTH_WINDOW = 50
MIN_PROMINENCE = 0.05
MAX_RESIDUAL_RMS = 0.05


def damped_cosine(n, omega, gamma, amplitude=0.5):
    n = np.asarray(n, dtype=float)
    return amplitude * (1.0 - np.exp(-abs(gamma) * n) * np.cos(omega * n))


def damped_cosine_jacobian(n, omega, gamma, amplitude=0.5, free_amplitude=False):
    n = np.asarray(n, dtype=float)
    decay = np.exp(-abs(gamma) * n)
    cols = [amplitude * decay * n * np.sin(omega * n),
            np.sign(gamma) * amplitude * n * decay * np.cos(omega * n)]
    if free_amplitude:
        cols.append(1.0 - decay * np.cos(omega * n))
    return np.column_stack(cols)


def saturation_curve(n, level, rate):
    n = np.asarray(n, dtype=float)
    return level * (1.0 - np.exp(-abs(rate) * n))


def saturation_jacobian(n, level, rate):
    n = np.asarray(n, dtype=float)
    decay = np.exp(-abs(rate) * n)
    return np.column_stack([1.0 - decay, np.sign(rate) * level * n * decay])


def smooth(y, window: int = SMOOTH_WINDOW) -> np.ndarray:
    """Centered moving average; the window shrinks near the ends."""
    y = np.asarray(y, dtype=float)
    window = max(1, min(window, len(y)))
    if window == 1:
        return y.copy()
    c = np.concatenate([[0.0], np.cumsum(y)])
    half = window // 2
    idx = np.arange(len(y))
    lo = np.clip(idx - half, 0, len(y))
    hi = np.clip(idx - half + window, 0, len(y))
    return (c[hi] - c[lo]) / (hi - lo)


def find_extrema(y, window: int = SMOOTH_WINDOW, prominence: float = MIN_PROMINENCE):
    """Indices of maxima and minima of the smoothed curve with the given prominence."""
    s = smooth(y, window)
    maxima, _ = find_peaks(s, prominence=prominence)
    minima, _ = find_peaks(-s, prominence=prominence)
    return maxima, minima


def is_oscillatory(y, window: int = SMOOTH_WINDOW, prominence: float = MIN_PROMINENCE) -> bool:
    """True when the smoothed curve turns over at least once."""
    maxima, minima = find_extrema(y, window, prominence)
    return len(maxima) + len(minima) >= 1


def _damped_cosine_guess(n, y, amplitude):
    above = np.flatnonzero(y >= amplitude)
    maxima, _ = find_extrema(y)
    if len(maxima):
        omega0 = math.pi / max(n[maxima[0]], 1.0)
    elif len(above):
        omega0 = 0.5 * math.pi / max(n[above[0]], 1.0)
    else:
        omega0 = math.pi / max(n[-1], 1.0)
    gamma0 = 0.0
    if len(maxima) >= 2:
        h = y[maxima[:2]] - amplitude
        if np.all(h > 0):
            gamma0 = max(math.log(h[0] / h[1]) / (n[maxima[1]] - n[maxima[0]]), 0.0)
    return omega0, gamma0


class DampedCosineRegressor(RegressorMixin, BaseEstimator):
    """Least-squares fit of a damped cosine to a stored-energy curve.

    Parameters
    ----------
    amplitude : float
        Fixed oscillation amplitude (0.5 = half the well depth in E_f units).
    fit_amplitude : bool
        Let the amplitude float instead.
    n_starts : int
        Number of simplex starts around the heuristic guess.
    max_residual_rms : float
        Fits with a larger RMS residual are never reported as converged.
    check_shape : bool
        Raise :class:`ShapeMismatchError` unless the curve has at least two
        detectable extrema.
    """

    def __init__(self, amplitude=0.5, fit_amplitude=False, n_starts=8,
                 max_residual_rms=MAX_RESIDUAL_RMS, check_shape=True):
        self.amplitude = amplitude
        self.fit_amplitude = fit_amplitude
        self.n_starts = n_starts
        self.max_residual_rms = max_residual_rms
        self.check_shape = check_shape

    def fit(self, X, y):
        n = check_samples_1d(X)
        y = check_samples_1d(y, "y")
        if len(n) != len(y):
            raise ValueError("X and y have different lengths")
        if self.check_shape:
            maxima, minima = find_extrema(y)
            if len(maxima) + len(minima) < 2:
                raise ShapeMismatchError(
                    "no damped oscillation detected (need two extrema); "
                    "use a saturation fit for monotone curves")
        omega0, gamma0 = _damped_cosine_guess(n, y, self.amplitude)
        gscale = max(gamma0, 1e-3 * omega0)
        factors = [(1.0, 1.0), (1.0, 0.0), (0.97, 1.0), (1.03, 1.0),
                   (1.0, 10.0), (0.99, 0.1), (1.01, 3.0), (0.95, 0.3)]
        starts = []
        for fo, fg in factors[: max(1, self.n_starts)]:
            s = [omega0 * fo, (gamma0 or 1e-4 * omega0) * fg]
            if self.fit_amplitude:
                s.append(self.amplitude)
            starts.append(s)
        scale = [omega0, gscale] + ([self.amplitude] if self.fit_amplitude else [])

        if self.fit_amplitude:
            def res(p):
                return damped_cosine(n, p[0], p[1], p[2]) - y

            def jac(p):
                return damped_cosine_jacobian(n, p[0], p[1], p[2], free_amplitude=True)
        else:
            amp = self.amplitude

            def res(p):
                return damped_cosine(n, p[0], p[1], amp) - y

            def jac(p):
                return damped_cosine_jacobian(n, p[0], p[1], amp)

        opt = multistart_fit(res, starts, scale, jac)
        self.omega_ = abs(float(opt.x[0]))
        self.gamma_ = abs(float(opt.x[1]))
        self.amplitude_ = float(opt.x[2]) if self.fit_amplitude else float(self.amplitude)
        r = res(opt.x)
        self.residual_rms_ = float(np.sqrt(np.mean(r ** 2)))
        self.covariance_ = residual_covariance(opt.jac, r)
        self.grad_norm_ = opt.grad_norm
        self.converged_ = bool(opt.converged and self.residual_rms_ <= self.max_residual_rms)
        self.window_ = (int(n[0]), int(n[-1]) + 1)
        return self

    def predict(self, X):
        check_is_fitted(self, "omega_")
        return damped_cosine(check_samples_1d(X), self.omega_, self.gamma_, self.amplitude_)

    def result(self) -> DampedCosineFit:
        check_is_fitted(self, "omega_")
        return DampedCosineFit(self.omega_, self.gamma_, self.amplitude_,
                               self.residual_rms_, self.converged_, self.window_)


class SaturationRegressor(RegressorMixin, BaseEstimator):
    """Fit ``f [1 - exp(-gamma n)]`` to a monotone charging curve."""

    def __init__(self, n_starts=8, check_shape=True):
        self.n_starts = n_starts
        self.check_shape = check_shape

    def fit(self, X, y):
        n = check_samples_1d(X)
        y = check_samples_1d(y, "y")
        if self.check_shape and is_oscillatory(y):
            raise ShapeMismatchError(
                "curve oscillates; use the damped-cosine fit instead of a saturation fit")
        s = smooth(y)
        level0 = max(float(s.max()), 1e-12)
        reach = np.flatnonzero(s >= level0 * (1 - math.exp(-1)))
        rate0 = 1.0 / max(n[reach[0]] if len(reach) else n[-1], 1.0)
        factors = [(1.0, 1.0), (1.2, 0.7), (0.9, 1.3), (1.5, 0.4),
                   (1.0, 0.5), (1.1, 2.0), (2.0, 0.25), (0.8, 1.0)]
        starts = [(level0 * a, rate0 * b) for a, b in factors[: max(1, self.n_starts)]]

        def res(p):
            return saturation_curve(n, p[0], p[1]) - y

        opt = multistart_fit(res, starts, [level0, rate0],
                             lambda p: saturation_jacobian(n, p[0], p[1]))
        self.level_ = float(opt.x[0])
        self.rate_ = abs(float(opt.x[1]))
        r = res(opt.x)
        self.residual_rms_ = float(np.sqrt(np.mean(r ** 2)))
        self.covariance_ = residual_covariance(opt.jac, r)
        self.converged_ = bool(opt.converged)
        return self

    def predict(self, X):
        check_is_fitted(self, "level_")
        return saturation_curve(check_samples_1d(X), self.level_, self.rate_)


def _select(traj, window):
    n = np.asarray(traj.n, dtype=float)
    y = np.asarray(traj.stored_energy, dtype=float)
    if window is not None:
        lo, hi = window
        m = (n >= lo) & (n < hi)
        n, y = n[m], y[m]
    return n, y


def fit_damped_cosine(traj, window=None, **params) -> DampedCosineFit:
    """Fit the damped-cosine law to ``traj.stored_energy`` over ``[start, stop)``."""
    n, y = _select(traj, window)
    return DampedCosineRegressor(**params).fit(n, y).result()


def fit_saturation(traj, window=None, **params) -> tuple[float, float]:
    """Return ``(f, gamma)``: saturation level in E_f units and rate per collision."""
    n, y = _select(traj, window)
    est = SaturationRegressor(**params).fit(n, y)
    return est.level_, est.rate_


def first_maximum(traj) -> int | None:
    """Collision index of the first prominent maximum of the stored energy."""
    maxima, _ = find_extrema(traj.stored_energy)
    return int(traj.n[maxima[0]]) if len(maxima) else None


def period_window(traj, n_periods: float) -> tuple[int, int]:
    """``(0, stop)`` covering ``n_periods`` oscillations, from the first maximum."""
    n1 = first_maximum(traj)
    if n1 is None:
        raise ShapeMismatchError("no oscillation maximum found")
    return 0, int(round(2 * n1 * n_periods)) + 1
