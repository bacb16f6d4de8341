"""Shared fitting machinery: input validation, result records, multi-start optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize
from sklearn.utils.validation import check_array

GRAD_TOL = 1e-10
STEP_TOL = 1e-8


@dataclass(frozen=True)
class DampedCosineFit:
    omega: float
    gamma: float
    amplitude_scale: float
    residual_rms: float
    converged: bool
    window: tuple[int, int] | None = None


@dataclass(frozen=True)
class ScalingFit:
    law: str
    params: dict
    covariance: np.ndarray = field(repr=False)
    param_names: tuple = ()
    extras: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.params[key]

    def to_dict(self) -> dict:
        return {"law": self.law, "params": dict(self.params),
                "covariance": np.asarray(self.covariance).tolist(),
                "param_names": list(self.param_names), **self.extras}


def check_samples_1d(X, name="X") -> np.ndarray:
    """Accept shape (n,) or (n, 1) and return a flat float array."""
    X = check_array(X, ensure_2d=False, dtype=float, input_name=name)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"{name} must have a single column, got {X.shape[1]}")
        X = X[:, 0]
    return X


def check_design(X, n_cols: int) -> np.ndarray:
    X = check_array(X, dtype=float)
    if X.shape[1] != n_cols:
        raise ValueError(f"expected {n_cols} columns, got {X.shape[1]}")
    return X


@dataclass
class CurveOptimum:
    x: np.ndarray
    cost: float
    grad_norm: float
    step_norm: float
    jac: np.ndarray

    @property
    def converged(self) -> bool:
        return self.grad_norm < GRAD_TOL and self.step_norm < STEP_TOL


def multistart_fit(residuals, starts, scale, jacobian=None) -> CurveOptimum:
    """Minimize the mean squared residual over scaled parameters.

    Every start runs a Nelder-Mead simplex; the best end point is polished
    with a trust-region least-squares solver. Convergence is judged on the gradient of the
    mean squared residual and on the size of the next Gauss-Newton step,
    both in scaled coordinates. ``jacobian(params)`` is used when given;
    otherwise derivatives are taken by central differences.
    """
    scale = np.asarray(scale, dtype=float)

    def scaled_res(z):
        return residuals(z * scale)

    if jacobian is not None:
        def scaled_jac(z):
            return jacobian(z * scale) * scale
    else:
        def scaled_jac(z):
            return _jacobian(scaled_res, z)

    def msq(z):
        r = scaled_res(z)
        v = float(r @ r) / len(r)
        return v if np.isfinite(v) else np.inf

    best = None
    for s in starts:
        z0 = np.asarray(s, dtype=float) / scale
        out = minimize(msq, z0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-18, "maxiter": 4000 * len(z0),
                                "maxfev": 4000 * len(z0), "adaptive": len(z0) > 2})
        if best is None or out.fun < best.fun:
            best = out
    polished = least_squares(scaled_res, best.x, method="trf",
                             jac=scaled_jac if jacobian is not None else "3-point", xtol=1e-15,
                             ftol=1e-15, gtol=1e-15, max_nfev=2000)
    polished_msq = polished.cost * 2 / len(polished.fun)
    z = polished.x if polished_msq <= best.fun * (1 + 1e-9) else best.x
    z = _gauss_newton(scaled_res, scaled_jac, z)
    r = scaled_res(z)
    jac = scaled_jac(z)
    n = len(r)
    grad = 2.0 * jac.T @ r / n
    step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
    return CurveOptimum(x=z * scale, cost=float(r @ r) / n,
                        grad_norm=float(np.linalg.norm(grad)),
                        step_norm=float(np.linalg.norm(step) / max(np.linalg.norm(z), 1.0)),
                        jac=jac / scale)


def _gauss_newton(res, jac, z, max_iter=20):
    """Finish with plain Gauss-Newton steps.

    Near the optimum the mean squared residual is flat to rounding, so
    cost-based stopping rules halt early. A step is kept unless it raises
    the cost by more than rounding noise.
    """
    r = res(z)
    cost = float(r @ r)
    for _ in range(max_iter):
        step, *_ = np.linalg.lstsq(jac(z), -r, rcond=None)
        if not np.all(np.isfinite(step)):
            break
        z_new = z + step
        r_new = res(z_new)
        cost_new = float(r_new @ r_new)
        if not np.isfinite(cost_new) or cost_new > cost * (1 + 1e-12):
            break
        z, r, cost = z_new, r_new, cost_new
        if np.linalg.norm(step) <= 1e-14 * max(np.linalg.norm(z), 1.0):
            break
    return z


def _jacobian(fun, z, rel=1e-7):
    f0 = fun(z)
    jac = np.empty((len(f0), len(z)))
    for i in range(len(z)):
        h = rel * max(abs(z[i]), 1.0)
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        jac[:, i] = (fun(zp) - fun(zm)) / (2 * h)
    return jac


def residual_covariance(jac: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    """s^2 (J^T J)^-1 from the normal equations at the optimum."""
    n, p = jac.shape
    dof = max(n - p, 1)
    s2 = float(residuals @ residuals) / dof
    return s2 * np.linalg.pinv(jac.T @ jac)
