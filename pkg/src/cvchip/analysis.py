"""Fits and entanglement inference on shot-noise-normalized data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .acquire import (DB_PER_NEPER, SHOT_NOISE_SE_DB, TimeTrace, VarianceTrace,
                      combine_db_uncertainty)
from .chip import SINC2_HALF_MAX, interaction_length_from_fwhm, shg_efficiency
from .fitting import FitError, confidence_halfwidth, levenberg_marquardt

PHASE_GRID_NODES = 32


def _wrap_half_pi(x):
    """Wrap an angle into [-pi/2, pi/2), i.e. modulo pi."""
    return np.mod(np.asarray(x) + np.pi / 2, np.pi) - np.pi / 2


def _db_se(value, se):
    """Statistical dB error of ``value`` with the shot-noise error added in quadrature."""
    return combine_db_uncertainty(DB_PER_NEPER * se / value, SHOT_NOISE_SE_DB)


# --- variance scans -------------------------------------------------------

@dataclass
class VarianceScanFit:
    """``V(t) = v_plus cos^2(a t + phi) + v_minus sin^2(a t + phi)``."""

    v_plus: float
    v_minus: float
    a: float
    phi: float
    se: dict
    identifiable: bool = True
    chi2: float = 0.0
    dof: int = 0

    def predict(self, t):
        if not self.identifiable:
            return np.full_like(np.asarray(t, dtype=float), self.v_plus)
        psi = self.a * np.asarray(t, dtype=float) + self.phi
        return self.v_plus * np.cos(psi) ** 2 + self.v_minus * np.sin(psi) ** 2

    @property
    def v_plus_db(self) -> float:
        return 10 * math.log10(self.v_plus)

    @property
    def v_minus_db(self) -> float:
        return 10 * math.log10(self.v_minus)

    @property
    def v_plus_db_se(self) -> float:
        return _db_se(self.v_plus, self.se["v_plus"])

    @property
    def v_minus_db_se(self) -> float:
        return _db_se(self.v_minus, self.se["v_minus"])

    def as_dict(self) -> dict:
        return {
            "model": "variance_scan",
            "parameters": {
                name: {"estimate": getattr(self, name), "se": self.se[name]}
                for name in ("v_plus", "v_minus", "a", "phi")
            },
            "v_plus_db": {"estimate": self.v_plus_db, "se": self.v_plus_db_se},
            "v_minus_db": {"estimate": self.v_minus_db, "se": self.v_minus_db_se},
            "identifiable": self.identifiable,
            "chi2": self.chi2,
            "dof": self.dof,
        }


def _scan_model(p, tau):
    vp, vm, a, ph = p
    psi = a * tau + ph
    return vp * np.cos(psi) ** 2 + vm * np.sin(psi) ** 2


def _scan_jacobian(p, tau):
    vp, vm, a, ph = p
    psi = a * tau + ph
    c2, s2 = np.cos(psi) ** 2, np.sin(psi) ** 2
    dpsi = (vm - vp) * np.sin(2 * psi)
    return np.column_stack([c2, s2, dpsi * tau, dpsi])


def _harmonic_scan(tau, y, w, a_grid):
    """Best scan rate for ``c0 + c1 cos(2 a t) + s1 sin(2 a t)`` over ``a_grid``."""
    best = None
    for a in a_grid:
        X = np.column_stack([np.ones_like(tau), np.cos(2 * a * tau), np.sin(2 * a * tau)])
        coef, *_ = np.linalg.lstsq(X * w[:, None], y * w, rcond=None)
        rss = float(np.sum((w * (X @ coef - y)) ** 2))
        if best is None or rss < best[0]:
            best = (rss, a, coef, X)
    return best


def fit_variance_scan(vt: VarianceTrace, a_guess: float | None = None,
                      weighted: bool = True) -> VarianceScanFit:
    """Fit a phase-scanned noise trace.

    The scan rate is located by a linear harmonic search (or taken from
    ``a_guess``), the phase by a 32-node grid with a linear solve for the two
    levels at each node, and everything is then refined by Levenberg-Marquardt.
    Standard errors come from the least-squares covariance scaled by the
    reduced chi-square.
    """
    t = np.asarray(vt.t, dtype=float)
    y = np.asarray(vt.variance, dtype=float)
    if t.size < 8:
        raise ValueError(f"need at least 8 points, got {t.size}")
    sigma = vt.se if weighted and np.all(vt.se > 0) else np.ones_like(y)
    w = 1.0 / sigma
    t0 = float(t.mean())
    tau = t - t0
    span = float(t.max() - t.min())
    if span <= 0:
        raise ValueError("scan has zero time span")

    if a_guess is not None:
        a_grid = np.array([abs(a_guess)])
    else:
        dt = np.diff(np.sort(t))
        dt_min = float(dt[dt > 0].min())
        a_lo, a_hi = np.pi / (2 * span), np.pi / (2 * dt_min)
        a_grid = np.arange(a_lo, a_hi, np.pi / (8 * span))
    rss, a0, coef, X = _harmonic_scan(tau, y, w, a_grid)

    # significance of the modulation, inflated for the number of frequencies tried
    dof_lin = max(t.size - 3, 1)
    cov_lin = np.linalg.pinv((X * w[:, None]).T @ (X * w[:, None])) * rss / dof_lin
    amp = math.hypot(coef[1], coef[2])
    amp_se = math.sqrt(max(0.5 * (cov_lin[1, 1] + cov_lin[2, 2]), 0.0))
    z_thr = max(3.0, math.sqrt(2 * math.log(max(a_grid.size, 1))) + 2.0)
    if amp <= 1e-12 * abs(coef[0]) or amp < z_thr * amp_se:
        mean = float(np.sum(w ** 2 * y) / np.sum(w ** 2))
        se_mean = math.sqrt(float(np.sum(w ** 2 * (y - mean) ** 2)) / max(t.size - 1, 1)
                            / float(np.sum(w ** 2)))
        return VarianceScanFit(mean, mean, math.nan, math.nan,
                               {"v_plus": se_mean, "v_minus": se_mean,
                                "a": math.nan, "phi": math.nan},
                               identifiable=False, dof=t.size - 1)

    best = None
    for ph in np.arange(PHASE_GRID_NODES) * np.pi / PHASE_GRID_NODES:
        psi = a0 * tau + ph
        B = np.column_stack([np.cos(psi) ** 2, np.sin(psi) ** 2])
        lev, *_ = np.linalg.lstsq(B * w[:, None], y * w, rcond=None)
        r = float(np.sum((w * (B @ lev - y)) ** 2))
        if best is None or r < best[0]:
            best = (r, np.array([lev[0], lev[1], a0, ph]))
    p0 = best[1]

    res = levenberg_marquardt(lambda p: w * (_scan_model(p, tau) - y),
                              lambda p: w[:, None] * _scan_jacobian(p, tau), p0)
    vp, vm, a, ph = res.params
    cov = res.covariance()
    if a < 0:
        a, ph = -a, -ph
        flip = np.diag([1.0, 1.0, -1.0, -1.0])
        cov = flip @ cov @ flip
    if vm > vp:
        vp, vm, ph = vm, vp, ph + np.pi / 2
        perm = np.array([1, 0, 2, 3])
        cov = cov[np.ix_(perm, perm)]
    # move the phase reference from t0 to t = 0
    T = np.eye(4)
    T[3, 2] = -t0
    cov = T @ cov @ T.T
    phi = float(np.mod(ph - a * t0, np.pi))
    if span * a < np.pi / 2:
        raise FitError("scan covers less than half a modulation period")
    if vm <= 0:
        raise FitError("fitted squeezed variance is not positive")
    se = dict(zip(("v_plus", "v_minus", "a", "phi"), np.sqrt(np.clip(np.diag(cov), 0, None))))
    return VarianceScanFit(float(vp), float(vm), float(a), phi,
                           {k: float(v) for k, v in se.items()},
                           chi2=res.chi2, dof=res.dof)


# --- squeezing versus pump power ------------------------------------------

@dataclass
class PowerSweepFit:
    """``V = eta exp(-+2 mu sqrt(P)) + 1 - eta`` fitted jointly to both branches in dB."""

    mu: float
    eta: float
    mu_se: float
    eta_se: float
    mu_ci: tuple[float, float]
    eta_ci: tuple[float, float]
    cov: np.ndarray
    chi2: float
    dof: int
    absolute_sigma: bool
    at_bound: bool = False  # eta pinned at 1 after an unconstrained estimate above it

    def as_dict(self) -> dict:
        return {
            "model": "power_sweep",
            "parameters": {
                "mu": {"estimate": self.mu, "se": self.mu_se, "ci95": list(self.mu_ci),
                       "unit": "mW^-1/2"},
                "eta": {"estimate": self.eta, "se": self.eta_se, "ci95": list(self.eta_ci)},
            },
            "chi2": self.chi2,
            "dof": self.dof,
            "absolute_sigma": self.absolute_sigma,
            "eta_at_bound": self.at_bound,
        }


def invert_squeezing_pair(v_minus: float, v_plus: float) -> tuple[float, float]:
    """Squeezing parameter and efficiency reproducing a (squeezed, anti-squeezed) pair."""
    if not (0 < v_minus < 1 < v_plus):
        raise ValueError("need v_minus < 1 < v_plus")
    y = (v_plus - 1.0) / (1.0 - v_minus)  # = exp(2r)
    r = 0.5 * math.log(y)
    return r, (v_plus - 1.0) / (y - 1.0)


def _sweep_arrays(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must be rows of (P, v_minus, v_plus)")
    return pts[:, 0], pts[:, 1], pts[:, 2]


def _sweep_model_db(p, sq):
    mu, eta = p
    e_m, e_p = np.exp(-2 * mu * sq), np.exp(2 * mu * sq)
    return np.concatenate([10 * np.log10(eta * e_m + 1 - eta),
                           10 * np.log10(eta * e_p + 1 - eta)])


def _sweep_jacobian_db(p, sq):
    mu, eta = p
    rows = []
    for s in (-1.0, 1.0):
        e = np.exp(2 * s * mu * sq)
        v = eta * e + 1 - eta
        rows.append(np.column_stack([DB_PER_NEPER * eta * 2 * s * sq * e / v,
                                     DB_PER_NEPER * (e - 1) / v]))
    return np.vstack(rows)


def fit_power_sweep(points, sigma_db=None, level: float = 0.95) -> PowerSweepFit:
    """Joint fit of squeezed and anti-squeezed levels versus pump power.

    ``points`` holds rows ``(P_mW, v_minus, v_plus)`` in shot-noise units.
    ``sigma_db`` is a scalar or an ``(n, 2)`` array of (minus, plus) dB
    errors; given, the intervals use it as absolute, otherwise the scatter of
    the residuals sets the scale and Student-t quantiles are used.
    """
    P, vm, vp = _sweep_arrays(points)
    if np.any(P < 0):
        raise ValueError("negative pump power")
    if np.any(vm <= 0) or np.any(vp <= 0):
        raise ValueError("variances must be positive")
    if not np.any(P > 0):
        raise FitError("no non-zero pump power: mu and eta are unidentifiable")
    if 2 * P.size < 2:
        raise FitError("fewer data than parameters")
    sq = np.sqrt(P)
    y = np.concatenate([10 * np.log10(vm), 10 * np.log10(vp)])
    if sigma_db is None:
        sig = np.ones_like(y)
    else:
        s = np.broadcast_to(np.asarray(sigma_db, dtype=float), (P.size, 2))
        sig = np.concatenate([s[:, 0], s[:, 1]])
        if np.any(sig <= 0):
            raise ValueError("sigma_db must be positive")
    w = 1.0 / sig

    guesses = []
    for Pi, a, b in zip(P, vm, vp):
        if Pi > 0 and a < 1 < b:
            r, eta = invert_squeezing_pair(a, b)
            guesses.append((r / math.sqrt(Pi), eta))
    p0 = np.median(np.array(guesses), axis=0) if guesses else np.array([0.02, 0.5])
    p0[1] = min(max(p0[1], 0.05), 1.0)

    res = levenberg_marquardt(lambda p: w * (_sweep_model_db(p, sq) - y),
                              lambda p: w[:, None] * _sweep_jacobian_db(p, sq), p0)
    mu, eta = res.params
    if mu < 0:
        # the model is symmetric under mu -> -mu with the branches exchanged
        raise FitError("fit converged to a negative gain coefficient")
    absolute = sigma_db is not None
    if res.dof <= 0 and not absolute:
        raise FitError("no residual degrees of freedom to estimate the error scale")
    cov = res.covariance(absolute_sigma=absolute)
    se = np.sqrt(np.diag(cov))
    if eta <= 0:
        raise FitError(f"fitted efficiency {eta:.4f} is not positive")
    at_bound = bool(eta > 1)
    if at_bound:
        if eta - 1 > 3 * se[1]:
            raise FitError(f"fitted efficiency {eta:.4f} exceeds 1 by more than 3 SE")
        # boundary estimate: refit mu with eta pinned at 1, keep the unconstrained errors
        res1 = levenberg_marquardt(
            lambda m: w * (_sweep_model_db((m[0], 1.0), sq) - y),
            lambda m: w[:, None] * _sweep_jacobian_db((m[0], 1.0), sq)[:, :1], [mu])
        mu, eta = float(res1.params[0]), 1.0
    hw = confidence_halfwidth(se, None if absolute else res.dof, level)
    return PowerSweepFit(float(mu), float(eta), float(se[0]), float(se[1]),
                         (float(mu - hw[0]), float(mu + hw[0])),
                         (float(eta - hw[1]), float(min(eta + hw[1], 1.0))),
                         cov, res.chi2, res.dof, absolute, at_bound)


# --- SHG tuning curve -----------------------------------------------------

@dataclass
class SHGFit:
    eta0: float
    lambda0: float
    fwhm: float
    se: dict
    ci: dict
    interaction_length: float
    interaction_length_se: float

    def as_dict(self) -> dict:
        params = {k: {"estimate": getattr(self, k), "se": self.se[k], "ci95": list(self.ci[k])}
                  for k in ("eta0", "lambda0", "fwhm")}
        params["interaction_length"] = {"estimate": self.interaction_length,
                                        "se": self.interaction_length_se, "unit": "cm"}
        return {"model": "shg", "parameters": params}


def _sinc(x):
    return np.sinc(x / np.pi)


def _shg_jacobian(p, lam):
    eta0, lam0, fwhm = p
    k = 2 * SINC2_HALF_MAX
    x = k * (lam - lam0) / fwhm
    s = _sinc(x)
    with np.errstate(invalid="ignore", divide="ignore"):
        ds = np.where(np.abs(x) < 1e-8, -x / 3.0, (np.cos(x) - s) / x)
    dy_dx = eta0 * 2 * s * ds
    return np.column_stack([s ** 2, dy_dx * (-k / fwhm), dy_dx * (-x / fwhm)])


def fit_shg_curve(points, length_anchor: tuple[float, float] = (0.5, 2.0),
                  level: float = 0.95) -> SHGFit:
    """Least-squares ``sinc^2`` fit to (wavelength nm, efficiency %/W) samples."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
        raise ValueError("need at least 4 (wavelength, efficiency) points")
    order = np.argsort(pts[:, 0])
    lam, y = pts[order, 0], pts[order, 1]
    k_max = int(np.argmax(y))
    if k_max == 0 or k_max == lam.size - 1:
        raise ValueError("samples do not bracket the efficiency maximum")

    lam0 = lam[k_max]
    span = lam[-1] - lam[0]
    step = float(np.min(np.diff(lam)))
    best = None
    for fwhm in np.geomspace(max(step, 1e-6), 2 * span, 200):
        s2 = _sinc(2 * SINC2_HALF_MAX * (lam - lam0) / fwhm) ** 2
        eta0 = float(s2 @ y / (s2 @ s2))
        r = float(np.sum((eta0 * s2 - y) ** 2))
        if best is None or r < best[0]:
            best = (r, np.array([eta0, lam0, fwhm]))

    res = levenberg_marquardt(lambda p: shg_efficiency(lam, *p) - y,
                              lambda p: _shg_jacobian(p, lam), best[1])
    eta0, lam0, fwhm = res.params
    fwhm = abs(fwhm)
    cov = res.covariance() if res.dof > 0 else np.full((3, 3), np.nan)
    se_arr = np.sqrt(np.clip(np.diag(cov), 0, None))
    hw = confidence_halfwidth(se_arr, max(res.dof, 1), level)
    names = ("eta0", "lambda0", "fwhm")
    vals = (eta0, lam0, fwhm)
    length = interaction_length_from_fwhm(fwhm, length_anchor)
    return SHGFit(float(eta0), float(lam0), float(fwhm),
                  {n: float(s) for n, s in zip(names, se_arr)},
                  {n: (float(v - h), float(v + h)) for n, v, h in zip(names, vals, hw)},
                  length, float(length * se_arr[2] / fwhm))


# --- loss correction and entanglement ----------------------------------------

def loss_correct(v_measured: float, eta_correction: float) -> float:
    """Undo a known loss ``eta_correction`` on a measured variance."""
    if not 0 < eta_correction <= 1:
        raise ValueError(f"eta_correction must lie in (0, 1], got {eta_correction}")
    if v_measured <= 0:
        raise ValueError("measured variance must be positive")
    v = 1.0 - (1.0 - v_measured) / eta_correction
    if v <= 0:
        raise ValueError(f"correcting {v_measured} by {eta_correction} gives an unphysical variance")
    return v


def combine_photocurrents(trace1: TimeTrace, trace2: TimeTrace, sn1, sn2, sign: int) -> TimeTrace:
    """``i1/sqrt(2 sn1) +- i2/sqrt(2 sn2)``: unit variance for two shot-noise inputs."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if trace1.samples.shape != trace2.samples.shape or trace1.sample_rate != trace2.sample_rate:
        raise ValueError("traces differ in length or sample rate")
    sn1, sn2 = getattr(sn1, "level", sn1), getattr(sn2, "level", sn2)
    combined = trace1.samples / math.sqrt(2 * sn1) + sign * trace2.samples / math.sqrt(2 * sn2)
    label = f"{trace1.name}{'+' if sign > 0 else '-'}{trace2.name}"
    return TimeTrace(trace1.t, combined, trace1.sample_rate, trace1.pump_on, label)


def inseparability_value(min_plus: float, min_minus: float) -> float:
    """Product-form criterion from the two minimized combined variances."""
    if min_plus < 0 or min_minus < 0:
        raise ValueError("variances must be non-negative")
    return math.sqrt(min_plus * min_minus)


@dataclass(frozen=True)
class QuadraturePositions:
    """Times at which both detectors sit on the squeezed / anti-squeezed quadratures."""

    t_squeezed: float
    t_antisqueezed: float
    offsets: dict = field(default_factory=dict)


@dataclass
class BranchResult:
    values: dict  # sign -> mean of the selected points
    se: dict  # sign -> sigma / sqrt(n)
    sign: int
    tie: bool

    @property
    def minimum(self) -> float:
        return self.values[self.sign]

    @property
    def minimum_se(self) -> float:
        return self.se[self.sign]


@dataclass
class InseparabilityReport:
    min_sum_plus: float
    min_sum_minus: float
    I: float
    I_se: float
    branches: dict
    offsets: dict

    @property
    def entangled(self) -> bool:
        """Point estimate below the separability bound (see ``significance``)."""
        return self.I < 1.0

    @property
    def significance(self) -> float:
        """Distance below the bound in standard errors."""
        return (1.0 - self.I) / self.I_se if self.I_se > 0 else math.inf

    def as_dict(self) -> dict:
        def branch(b: BranchResult):
            return {"values": {str(k): v for k, v in b.values.items()},
                    "se": {str(k): v for k, v in b.se.items()},
                    "sign": b.sign, "tie": b.tie,
                    "minimum_db": 10 * math.log10(b.minimum),
                    "minimum_db_se": _db_se(b.minimum, b.minimum_se)}
        return {
            "I": {"estimate": self.I, "se": self.I_se},
            "min_sum_plus": self.min_sum_plus,
            "min_sum_minus": self.min_sum_minus,
            "branches": {k: branch(v) for k, v in self.branches.items()},
            "quadrature_offsets_rad": self.offsets,
            "entangled": self.entangled,
            "significance_se": self.significance,
        }


def _points_around(vt: VarianceTrace, t_pos: float, n_points: int) -> np.ndarray:
    idx = np.argsort(np.abs(vt.t - t_pos), kind="stable")[:n_points]
    idx.sort()
    if idx.size < n_points:
        raise ValueError(f"fewer than {n_points} points near t = {t_pos}")
    spacing = np.diff(vt.t[idx])
    if spacing.size and np.max(spacing) > 1.5 * np.min(spacing):
        raise ValueError(f"points around t = {t_pos} are not contiguous")
    return idx


def inseparability(sum_traces: tuple[VarianceTrace, VarianceTrace],
                   positions: QuadraturePositions, n_points: int = 4) -> InseparabilityReport:
    """Evaluate the criterion from the summed and subtracted variance traces.

    ``sum_traces`` is ``(plus, minus)``, both normalized so that shot noise
    is 1.  Each branch averages ``n_points`` windows around its quadrature
    position and keeps the smaller of the two sign choices; the standard
    error of that average is the local scatter over ``sqrt(n_points)``.
    A tie (difference within the combined error) is flagged in the report.
    """
    plus, minus = sum_traces
    if not np.allclose(plus.t, minus.t):
        raise ValueError("sum and difference traces must share their time base")
    branches = {}
    for label, t_pos in (("antisqueezed", positions.t_antisqueezed),
                         ("squeezed", positions.t_squeezed)):
        idx = _points_around(plus, t_pos, n_points)
        values, ses = {}, {}
        for sign, vt in ((1, plus), (-1, minus)):
            pts = vt.variance[idx]
            values[sign] = float(pts.mean())
            ses[sign] = float(pts.std(ddof=1) / math.sqrt(n_points))
        sign = 1 if values[1] <= values[-1] else -1
        tie = abs(values[1] - values[-1]) <= math.hypot(ses[1], ses[-1])
        branches[label] = BranchResult(values, ses, sign, tie)
    m_plus = branches["antisqueezed"].minimum
    m_minus = branches["squeezed"].minimum
    I = inseparability_value(m_plus, m_minus)
    sn_rel = SHOT_NOISE_SE_DB / DB_PER_NEPER
    rel = [math.hypot(b.minimum_se / b.minimum, sn_rel) for b in branches.values()]
    I_se = 0.5 * I * math.hypot(*rel)
    return InseparabilityReport(m_plus, m_minus, I, I_se, branches, dict(positions.offsets))


def find_quadrature_positions(fit1: VarianceScanFit, fit2: VarianceScanFit,
                              vt: VarianceTrace, n_points: int = 4) -> QuadraturePositions:
    """Pick the times where both detectors are closest to a common quadrature.

    Phases come from fits of the two detectors' traces in the reference
    (separable) configuration.  Candidate times are midpoints between
    windows whose ``n_points`` neighbours are contiguous in ``vt``.
    """
    if not (fit1.identifiable and fit2.identifiable):
        raise ValueError("quadrature positions need identifiable phase fits")
    t = vt.t
    if t.size < n_points:
        raise ValueError("variance trace too short")
    step = float(np.min(np.diff(t)))
    half = n_points // 2
    cands = []
    for k in range(half - 1, t.size - half):
        block = t[k - half + 1:k + half + 1]
        if np.all(np.diff(block) < 1.5 * step):
            cands.append(0.5 * (t[k] + t[k + 1]) if n_points % 2 == 0 else t[k])
    if not cands:
        raise ValueError("no contiguous run of windows long enough")
    cands = np.array(cands)
    psi1 = fit1.a * cands + fit1.phi
    psi2 = fit2.a * cands + fit2.phi
    out = {}
    offsets = {}
    # anti-squeezed where cos^2 = 1 (psi = 0 mod pi), squeezed at psi = pi/2
    for label, target in (("antisqueezed", 0.0), ("squeezed", np.pi / 2)):
        d1 = _wrap_half_pi(psi1 - target)
        d2 = _wrap_half_pi(psi2 - target)
        k = int(np.argmin(d1 ** 2 + d2 ** 2))
        out[label] = float(cands[k])
        offsets[f"{label}_hd1"] = float(d1[k])
        offsets[f"{label}_hd2"] = float(d2[k])
    return QuadraturePositions(out["squeezed"], out["antisqueezed"], offsets)
