"""Pinball loss, offline linear quantile regression and its online gradient version.

Quantile forecasts correct the mean forecast: ``yq_t = yhat_t + beta_q' z_t``, so every model
here is fitted on the residuals ``r_t = y_t - yhat_t`` of the mean model.
"""
import itertools
import logging

import numpy as np
from scipy import linalg

from anl.types.defaults import Defaults
from anl.types.quantile import QrModel
from anl.util.exceptions import DataException

log = logging.getLogger(__name__)


def pinball(y, yq, q):
    """rho_q(y, yq) = (1{y < yq} - q) (yq - y); elementwise for arrays."""
    y = np.asarray(y, dtype=float)
    yq = np.asarray(yq, dtype=float)
    loss = (np.where(y < yq, 1.0, 0.0) - q) * (yq - y)
    return float(loss) if loss.ndim == 0 else loss


def _check_level(q):
    if not 0.0 < q < 1.0:
        raise ValueError("Quantile level must be in (0, 1), got %r" % q)


def _objective(r, Z, beta, q):
    return float(np.sum(pinball(r, Z @ beta, q)))


def _check_design(Z, n):
    if Z.ndim != 2 or Z.shape[0] != n:
        raise ValueError("Z must have one row per residual")
    d0 = Z.shape[1]
    if n < Defaults.qr_rows_per_covariate * d0:
        raise DataException("Quantile regression needs %d rows for %d covariates, got %d"
                            % (Defaults.qr_rows_per_covariate * d0, d0, n), 3, 30004)
    if not np.isfinite(Z).all():
        raise DataException("Non-finite quantile covariates", 3, 30009)
    constant = np.ptp(Z, axis=0) == 0
    intercepts = constant & (Z[0] != 0)
    if (constant & ~intercepts).any() or intercepts.sum() > 1:
        j = int(np.flatnonzero((constant & ~intercepts) | (intercepts & (np.cumsum(intercepts) > 1)))[0])
        raise DataException("Degenerate quantile covariate column %d" % j, 3, 30006)


def _vertex_refine(r, Z, q, beta, objective):
    """Try exact solutions interpolating d0 residuals near zero; keep the best, stop at an optimal one."""
    n, d0 = Z.shape
    u = r - Z @ beta
    candidates = np.argsort(np.abs(u), kind='stable')[:min(n, d0 + 2)]
    best_beta, best_obj = beta, objective
    for combo in itertools.combinations(candidates, d0):
        rows = list(combo)
        ZB = Z[rows]
        if np.linalg.matrix_rank(ZB) < d0:
            continue
        vertex = linalg.solve(ZB, r[rows])
        obj = _objective(r, Z, vertex, q)
        if obj > best_obj + 1e-12 * max(1.0, abs(best_obj)):
            continue
        best_beta, best_obj = vertex, obj
        others = np.ones(n, dtype=bool)
        others[rows] = False
        uo = r[others] - Z[others] @ vertex
        psi = np.where(uo > 0, q, q - 1.0)
        a = -linalg.solve(ZB.T, Z[others].T @ psi)
        if ((a >= q - 1.0 - 1e-9) & (a <= q + 1e-9)).all():
            return vertex, obj, True
    return best_beta, best_obj, False


def fit_offline_qr(residuals, Z, q, max_iter=Defaults.qr_max_iter, polish_steps=Defaults.qr_polish_steps,
                   tol=Defaults.qr_tolerance):
    """Minimize sum_t rho_q(r_t, beta' z_t) over beta.

    Iteratively reweighted least squares on a pinball loss smoothed over a width shrinking
    geometrically, then deterministic subgradient polishing, then an exact basic solution
    through the rows with the smallest residuals, accepted when it does not worsen the objective.
    """
    _check_level(q)
    r = np.asarray(residuals, dtype=float).reshape(-1)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    n = len(r)
    _check_design(Z, n)
    if not np.isfinite(r).all():
        raise DataException("Non-finite residuals", 3, 30009)

    scale = float(np.mean(np.abs(r - np.median(r))))
    if scale <= 0:
        scale = max(float(np.mean(np.abs(r))), 1.0)
    floor = scale * 1e-9
    width = scale

    beta = np.linalg.lstsq(Z, r, rcond=None)[0]
    best_beta, best_obj = beta, _objective(r, Z, beta, q)
    previous = best_obj
    for it in range(max_iter):
        u = r - Z @ beta
        w = np.where(u >= 0, q, 1.0 - q) / np.maximum(np.abs(u), width)
        Zw = Z * w[:, None]
        try:
            beta = linalg.solve(Zw.T @ Z, Zw.T @ r, assume_a='pos')
        except (linalg.LinAlgError, ValueError):
            beta = np.linalg.lstsq(Zw.T @ Z, Zw.T @ r, rcond=None)[0]
        obj = _objective(r, Z, beta, q)
        if obj < best_obj:
            best_beta, best_obj = beta, obj
        if width <= floor and abs(previous - obj) <= tol * max(obj, 1e-300):
            break
        previous = obj
        width = max(width * 0.7, floor)
    log.debug('fit_offline_qr(): q=%r irls iterations=%d objective=%.10g', q, it + 1, best_obj)

    beta = best_beta
    radius = scale * 0.1
    for k in range(polish_steps):
        g = Z.T @ (np.where(r < Z @ beta, 1.0, 0.0) - q)
        norm = np.linalg.norm(g)
        if norm == 0:
            break
        beta = beta - radius / np.sqrt(k + 1.0) * g / norm
        obj = _objective(r, Z, beta, q)
        if obj < best_obj:
            best_beta, best_obj = beta, obj
        else:
            beta = best_beta

    best_beta, best_obj, optimal = _vertex_refine(r, Z, q, best_beta, best_obj)
    if not optimal:
        log.debug('fit_offline_qr(): q=%r no optimal basic solution among candidates', q)
    return QrModel(q, best_beta)


def ogd_step(m, z, r, alpha):
    """One online gradient step on the pinball loss of residual r; the subgradient at a tie is 0."""
    if alpha <= 0:
        raise ValueError("Step size must be > 0, got %r" % alpha)
    z = np.asarray(z, dtype=float).reshape(-1)
    beta = m.beta
    prediction = float(beta @ z)
    if r < prediction:
        g = (1.0 - m.level) * z
    elif r > prediction:
        g = -m.level * z
    else:
        return m
    return QrModel(m.level, beta - alpha * g)


def predict_quantile(m, z, mean):
    return float(mean) + float(m.beta @ np.asarray(z, dtype=float).reshape(-1))


def sort_quantiles(levels, values):
    """Repair quantile crossing by sorting the values ascending."""
    levels = np.asarray(levels, dtype=float)
    values = np.asarray(values, dtype=float)
    if levels.shape != values.shape:
        raise ValueError("levels and values differ in length")
    if (np.diff(levels) <= 0).any():
        raise ValueError("levels must be strictly increasing")
    return np.sort(values)
