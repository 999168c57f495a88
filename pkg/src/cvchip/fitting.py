"""Damped Gauss-Newton (Levenberg-Marquardt) least squares with analytic Jacobians."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats


class FitError(RuntimeError):
    """Raised when a fit cannot be started or does not converge."""


@dataclass
class LeastSquaresResult:
    params: np.ndarray
    residuals: np.ndarray  # weighted
    jac: np.ndarray  # of the weighted residuals
    n_iter: int
    converged: bool

    @property
    def chi2(self) -> float:
        return float(self.residuals @ self.residuals)

    @property
    def dof(self) -> int:
        return self.residuals.size - self.params.size

    def covariance(self, absolute_sigma: bool = False) -> np.ndarray:
        """Parameter covariance; rescaled by the reduced chi-square unless ``absolute_sigma``."""
        jtj = self.jac.T @ self.jac
        cov = np.linalg.pinv(jtj)
        if not absolute_sigma:
            cov = cov * (self.chi2 / self.dof if self.dof > 0 else np.inf)
        return cov

    def gradient_norm(self) -> float:
        return float(np.linalg.norm(self.jac.T @ self.residuals))


def levenberg_marquardt(residual: Callable[[np.ndarray], np.ndarray],
                        jacobian: Callable[[np.ndarray], np.ndarray],
                        p0, max_iter: int = 200, xtol: float = 1e-10,
                        lam0: float = 1e-3, lam_factor: float = 10.0) -> LeastSquaresResult:
    """Minimize ``sum(residual(p)**2)``.

    The damping ``lam`` scales the diagonal of ``J^T J`` (Marquardt scaling)
    and is divided by ``lam_factor`` after an accepted step, multiplied after
    a rejected one.  Converges when the accepted step is below ``xtol``
    relative to the parameter norm, or when no step can lower the cost any
    further at floating-point resolution.
    """
    p = np.asarray(p0, dtype=float).copy()
    r = residual(p)
    if r.size < p.size:
        raise FitError(f"{r.size} residuals cannot determine {p.size} parameters")
    if not np.all(np.isfinite(r)):
        raise FitError("non-finite residuals at the starting point")
    cost = r @ r
    J = jacobian(p)
    lam = lam0
    for it in range(1, max_iter + 1):
        g = J.T @ r
        A = J.T @ J
        d = np.diag(A).copy()
        d[d <= 0] = 1.0
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(A + lam * np.diag(d), -g, rcond=None)[0]
            p_new = p + step
            r_new = residual(p_new)
            cost_new = r_new @ r_new if np.all(np.isfinite(r_new)) else np.inf
            if cost_new <= cost:
                break
            lam *= lam_factor
            if lam > 1e20:
                # cost is flat to machine precision around p
                return LeastSquaresResult(p, r, J, it, True)
        small = np.linalg.norm(step) <= xtol * (np.linalg.norm(p) + xtol)
        p, r, cost = p_new, r_new, cost_new
        J = jacobian(p)
        lam = max(lam / lam_factor, 1e-15)
        if small or cost == 0.0:
            return LeastSquaresResult(p, r, J, it, True)
    raise FitError(f"no convergence after {max_iter} iterations")


def confidence_halfwidth(se, dof: int | None, level: float = 0.95):
    """Two-sided interval half-width: normal quantile if ``dof`` is None, else Student t."""
    q = stats.norm.ppf(0.5 + level / 2) if dof is None else stats.t.ppf(0.5 + level / 2, dof)
    return q * np.asarray(se)

