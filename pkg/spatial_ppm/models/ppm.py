"""
Inhomogeneous Poisson point process models

The log-linear intensity lambda(u) = exp(Z(u) beta) is fitted by maximum
pseudolikelihood on a Berman-Turner quadrature scheme: data points and masked cell
centers carry quadrature weights, and the Poisson process likelihood becomes a weighted
Poisson regression solved by iteratively reweighted least squares.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg, stats

from spatial_ppm.exceptions import InputError, NumericalError, RankDeficientError
from spatial_ppm.models.raster import lookup

_logger = logging.getLogger(__name__)

INTERCEPT = '(Intercept)'

# IRLS stopping rule: relative change of the log-likelihood, iteration cap
TOLERANCE = 1e-10
MAX_ITERATIONS = 100


@dataclass(frozen=True)
class Term:
    """A model column built from a named covariate image, optionally log-transformed"""
    covariate: str
    log: bool = False

    @property
    def label(self):
        return f"log({self.covariate})" if self.log else self.covariate

    def transform(self, values):
        values = np.asarray(values, dtype=float)
        if not self.log:
            return values
        with np.errstate(invalid='ignore', divide='ignore'):
            return np.where(values > 0, np.log(values), np.nan)


def _check_images(covariates, grid, terms):
    for term in terms:
        if term.covariate not in covariates:
            raise InputError(f"Covariate {term.covariate!r} has no image")
        if not covariates[term.covariate].same_grid(grid):
            raise InputError(f"Covariate {term.covariate!r} does not share the analysis grid")


def _design_at_cells(covariates, terms, rows, cols):
    columns = [np.ones(len(rows))]
    for term in terms:
        columns.append(term.transform(covariates[term.covariate].values[rows, cols]))
    return np.column_stack(columns)


@dataclass(frozen=True, eq=False)
class QuadratureScheme:
    """
    Data and dummy points with quadrature weights and covariate rows

    Parameters
    ----------
    xy : numpy.ndarray
        Quadrature points, data points first, shape (m, 2)
    is_data : numpy.ndarray
        Boolean indicator of data points
    weights : numpy.ndarray
        Quadrature weights in square kilometers
    Z : numpy.ndarray
        Covariate matrix, first column constant 1
    terms : tuple of Term
        Non-intercept columns of Z
    n_dropped : int
        Data points left out (unmasked cell or missing covariate)
    n_dummy_dropped : int
        Masked cells left out for a missing covariate
    """
    xy: np.ndarray
    is_data: np.ndarray
    weights: np.ndarray
    Z: np.ndarray
    terms: tuple
    n_dropped: int = 0
    n_dummy_dropped: int = 0

    @property
    def names(self):
        return (INTERCEPT,) + tuple(t.label for t in self.terms)

    @property
    def n_data(self):
        return int(self.is_data.sum())

    @property
    def response(self):
        """Berman-Turner responses: 1 / w for data points, 0 for dummy points"""
        return self.is_data / self.weights

    def drop(self, label):
        """Scheme without the column of the given term label"""
        names = self.names
        if label == INTERCEPT or label not in names:
            raise InputError(f"Cannot drop column {label!r}")
        j = names.index(label)
        terms = tuple(t for t in self.terms if t.label != label)
        return QuadratureScheme(self.xy, self.is_data, self.weights, np.delete(self.Z, j, axis=1),
                                terms, self.n_dropped, self.n_dummy_dropped)


def build_quadrature(data, covariates, grid, log_covariates=(), terms=None):
    """
    Berman-Turner quadrature scheme from data points and the masked cells of a grid

    Every quadrature point gets weight dx * dy / m, where m counts the quadrature points
    (one dummy plus any data points) in its cell.

    Parameters
    ----------
    data : PointPattern
    covariates : dict of str to PixelImage
        Covariate images on the analysis grid
    grid : PixelImage
        Analysis grid
    log_covariates : iterable of str, optional
        Covariates entering the model on the log scale
    terms : sequence of Term, optional
        Explicit model columns; overrides covariates order and log_covariates

    Returns
    -------
    QuadratureScheme
    """
    log_covariates = set(log_covariates)
    if terms is None:
        terms = [Term(name, name in log_covariates) for name in covariates]
    terms = tuple(terms)
    _check_images(covariates, grid, terms)

    rows, cols = np.nonzero(grid.mask)
    z_dummy = _design_at_cells(covariates, terms, rows, cols)
    dummy_ok = np.all(np.isfinite(z_dummy), axis=1)
    n_dummy_dropped = int((~dummy_ok).sum())
    if n_dummy_dropped:
        _logger.warning("Dropped %d of %d cells with a missing covariate from the quadrature",
                        n_dummy_dropped, len(rows))

    col, row, inside = grid.cell_index(data.xy)
    in_mask = inside & grid.mask[row, col]
    z_data = _design_at_cells(covariates, terms, row, col)
    data_ok = in_mask & np.all(np.isfinite(z_data), axis=1)
    n_dropped = int(data.n - data_ok.sum())
    if n_dropped:
        _logger.warning("Dropped %d of %d data points in unmasked cells or with a missing covariate",
                        n_dropped, data.n)

    cell_id = np.full(grid.mask.shape, -1)
    cell_id[rows[dummy_ok], cols[dummy_ok]] = np.arange(int(dummy_ok.sum()))
    data_cells = cell_id[row[data_ok], col[data_ok]]
    per_cell = 1 + np.bincount(data_cells, minlength=int(dummy_ok.sum()))
    cell_area = grid.dx * grid.dy

    xs, ys = grid.cell_centers()
    dummy_xy = np.column_stack([xs[cols[dummy_ok]], ys[rows[dummy_ok]]])
    xy = np.vstack([data.xy[data_ok], dummy_xy])
    is_data = np.concatenate([np.ones(len(data_cells), dtype=bool), np.zeros(len(dummy_xy), dtype=bool)])
    weights = cell_area / np.concatenate([per_cell[data_cells], per_cell])
    Z = np.vstack([z_data[data_ok], z_dummy[dummy_ok]])
    return QuadratureScheme(xy, is_data, weights, Z, terms, n_dropped, n_dummy_dropped)


@dataclass(frozen=True, eq=False)
class FittedModel:
    """
    Fitted log-linear Poisson intensity

    Parameters
    ----------
    terms : tuple of Term
        Non-intercept model columns
    beta : numpy.ndarray
        Coefficients, intercept first
    covariance : numpy.ndarray
        Inverse Fisher information at the estimate
    loglik : float
        Maximized weighted Poisson log-likelihood
    converged : bool
    iterations : int
    n_data, n_dropped : int
        Data points used and left out
    """
    terms: tuple
    beta: np.ndarray
    covariance: np.ndarray
    loglik: float = float('nan')
    converged: bool = True
    iterations: int = 0
    n_data: int = 0
    n_dropped: int = 0
    fitted_total: float = float('nan')
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def names(self):
        return (INTERCEPT,) + tuple(t.label for t in self.terms)

    @property
    def se(self):
        with np.errstate(invalid='ignore'):
            return np.sqrt(np.diag(self.covariance))

    @property
    def p_values(self):
        return np.array([wald_pvalue(b, s) if s > 0 and np.isfinite(s) else 1.0
                         for b, s in zip(self.beta, self.se)])

    @classmethod
    def from_coefficients(cls, coefficients, se=None, log_covariates=()):
        """
        Model from a coefficient table, e.g. to evaluate published estimates

        Parameters
        ----------
        coefficients : dict of str to float
            Intercept under INTERCEPT, other entries keyed by covariate name
        se : dict of str to float, optional
        log_covariates : iterable of str
        """
        log_covariates = set(log_covariates)
        names = [k for k in coefficients if k != INTERCEPT]
        terms = tuple(Term(k, k in log_covariates) for k in names)
        beta = np.array([coefficients[INTERCEPT]] + [coefficients[k] for k in names], dtype=float)
        sd = np.zeros_like(beta) if se is None else np.array(
            [se.get(INTERCEPT, 0.0)] + [se.get(k, 0.0) for k in names], dtype=float)
        return cls(terms, beta, np.diag(sd ** 2))

    def coefficient(self, name):
        return float(self.beta[self._column(name)])

    def _column(self, j):
        if isinstance(j, str):
            names = self.names
            if j not in names:
                raise InputError(f"Model has no column {j!r}")
            return names.index(j)
        return int(j)

    def to_dict(self):
        return {
            'coefficients': [
                {'name': n, 'beta': float(b), 'se': float(s), 'p': float(pv)}
                for n, b, s, pv in zip(self.names, self.beta, self.se, self.p_values)
            ],
            'loglik': self.loglik,
            'converged': self.converged,
            'iterations': self.iterations,
            'n_data': self.n_data,
            'n_dropped': self.n_dropped,
            'fitted_total': self.fitted_total,
        }


def wald_pvalue(beta_j, se_j):
    """
    Two-sided normal p-value of a Wald statistic

    Parameters
    ----------
    beta_j : float
        Coefficient estimate
    se_j : float
        Its standard error, positive

    Returns
    -------
    float
        2 * (1 - Phi(|beta_j / se_j|))
    """
    if not se_j > 0:
        raise InputError(f"Standard error must be positive, got {se_j}")
    return float(2.0 * stats.norm.sf(abs(beta_j / se_j)))


def _check_rank(Z, weights, names):
    scaled = Z * np.sqrt(weights)[:, None]
    norms = np.linalg.norm(scaled, axis=0)
    zero = norms == 0
    if np.any(zero):
        raise RankDeficientError([n for n, z in zip(names, zero) if z])
    _, r, pivot = linalg.qr(scaled / norms, mode='economic', pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(scaled.shape) * np.finfo(float).eps * diag[0]
    rank = int(np.sum(diag > tol))
    if rank < Z.shape[1]:
        raise RankDeficientError([names[k] for k in sorted(pivot[rank:])])


def _loglik(eta, is_data, weights):
    return float(np.sum(eta[is_data]) - np.sum(weights * np.exp(eta)))


def fit_ppm(q, max_iter=MAX_ITERATIONS, tol=TOLERANCE):
    """
    Maximum pseudolikelihood fit of a log-linear Poisson intensity

    Fisher scoring (IRLS) on the weighted Poisson log-likelihood
    sum_j w_j (y_j log lambda_j - lambda_j), with step halving when a step lowers it.

    Parameters
    ----------
    q : QuadratureScheme
    max_iter : int, optional
        Iteration cap, by default 100
    tol : float, optional
        Relative log-likelihood change that stops the iteration, by default 1e-10

    Returns
    -------
    FittedModel
        Non-convergence is reported by the converged flag, not raised
    """
    Z = q.Z
    w = q.weights
    y = q.response
    _check_rank(Z, w, q.names)

    beta = np.zeros(Z.shape[1])
    beta[0] = math.log(max(q.n_data, 1) / w.sum())
    eta = Z @ beta
    ll = _loglik(eta, q.is_data, w)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        mu = np.exp(eta)
        fisher_w = w * mu
        working = eta + (y - mu) / mu
        info = Z.T @ (fisher_w[:, None] * Z)
        try:
            target = linalg.solve(info, Z.T @ (fisher_w * working), assume_a='pos')
        except (linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"Singular information matrix at iteration {iterations}") from exc
        step = target - beta
        for _ in range(30):
            eta_new = Z @ (beta + step)
            ll_new = _loglik(eta_new, q.is_data, w)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * abs(ll):
                break
            step = step / 2
        beta = beta + step
        eta = eta_new
        change = abs(ll_new - ll) / max(abs(ll_new), 1e-300)
        ll = ll_new
        if change < tol:
            converged = True
            break
    if not converged:
        _logger.warning("IRLS did not converge after %d iterations", iterations)

    mu = np.exp(eta)
    info = Z.T @ ((w * mu)[:, None] * Z)
    try:
        covariance = linalg.inv(info)
    except (linalg.LinAlgError, ValueError):
        covariance = np.full(info.shape, np.nan)
    if not np.all(np.isfinite(beta)):
        raise NumericalError("Coefficient estimates are not finite")
    return FittedModel(
        terms=q.terms,
        beta=beta,
        covariance=covariance,
        loglik=ll,
        converged=converged,
        iterations=iterations,
        n_data=q.n_data,
        n_dropped=q.n_dropped,
        fitted_total=float(np.sum(w * mu)),
    )


def score_vector(m, q):
    """Gradient of the log-likelihood at the fitted coefficients: Z' (w (y - lambda))"""
    mu = np.exp(q.Z @ m.beta)
    return q.Z.T @ (q.is_data - q.weights * mu)


def coefficient_table(m):
    """Coefficients, standard errors and Wald p-values as a DataFrame"""
    return pd.DataFrame(
        {'coefficients': m.beta, 'std': m.se, 'p-value': m.p_values},
        index=pd.Index(m.names, name='term'),
    )


@dataclass(frozen=True)
class RemovalStep:
    """One backward elimination step"""
    name: str
    p_value: float


def stepwise_backward(q, alpha=0.05):
    """
    Backward elimination of the least significant covariate

    While the largest non-intercept p-value exceeds alpha, that covariate is dropped and
    the model refitted.

    Parameters
    ----------
    q : QuadratureScheme
        Scheme of the full model
    alpha : float, optional
        Significance threshold in (0, 1], by default 0.05

    Returns
    -------
    tuple
        Final FittedModel and the ordered list of RemovalStep
    """
    if not 0 < alpha <= 1:
        raise InputError(f"Significance threshold must lie in (0, 1], got {alpha}")
    trace = []
    model = fit_ppm(q)
    while len(model.names) > 1:
        p_values = model.p_values[1:]
        worst = int(np.argmax(p_values))
        if not p_values[worst] > alpha:
            break
        name = model.names[worst + 1]
        trace.append(RemovalStep(name, float(p_values[worst])))
        _logger.info("Removed %s (p-value %.4g)", name, p_values[worst])
        q = q.drop(name)
        model = fit_ppm(q)
    return model, trace


def _linear_predictor(m, z):
    eta = m.beta[0]
    for term, b in zip(m.terms, m.beta[1:]):
        if term.label not in z:
            raise InputError(f"No value given for {term.label!r}")
        eta += b * float(z[term.label])
    return eta


def intensity_at(m, z):
    """
    Fitted intensity for one covariate vector

    Parameters
    ----------
    m : FittedModel
    z : dict of str to float
        Values keyed by column label, already transformed (e.g. 'log(pop)')

    Returns
    -------
    float
    """
    return float(math.exp(_linear_predictor(m, z)))


def factor_decomposition(m, z):
    """Multiplicative factors exp(z_j beta_j) of the fitted intensity, intercept included"""
    factors = {INTERCEPT: math.exp(m.beta[0])}
    for term, b in zip(m.terms, m.beta[1:]):
        factors[term.label] = math.exp(b * float(z[term.label]))
    return factors


def predict_intensity(m, covariates, grid):
    """
    Fitted intensity on every masked cell

    Parameters
    ----------
    m : FittedModel
    covariates : dict of str to PixelImage
    grid : PixelImage

    Returns
    -------
    PixelImage
        exp(Z(u) beta); cells with a missing covariate carry no value
    """
    _check_images(covariates, grid, m.terms)
    rows, cols = np.nonzero(grid.mask)
    Z = _design_at_cells(covariates, m.terms, rows, cols)
    values = np.full(grid.mask.shape, np.nan)
    values[rows, cols] = np.exp(Z @ m.beta)
    return grid.with_values(values)


RESIDUAL_KINDS = ('raw', 'pearson', 'pearson_conventional')


def residuals(lambda_star, lambda_hat, kind='raw'):
    """
    Residual image comparing the kernel estimate with the fitted intensity

    Parameters
    ----------
    lambda_star : PixelImage
        Nonparametric intensity estimate
    lambda_hat : PixelImage
        Fitted intensity on the same grid
    kind : str, optional
        'raw' for s = lambda* - lambda_hat, 'pearson' for the relative gap s / lambda_hat,
        'pearson_conventional' for s / sqrt(lambda_hat)

    Returns
    -------
    PixelImage
        Cells where lambda_hat is zero carry no value under the Pearson kinds
    """
    if kind not in RESIDUAL_KINDS:
        raise InputError(f"Residual kind must be one of {RESIDUAL_KINDS}, got {kind!r}")
    if not lambda_star.same_grid(lambda_hat):
        raise InputError("Residual images must share the same grid")
    raw = lambda_star.values - lambda_hat.values
    if kind == 'raw':
        return lambda_star.with_values(raw)
    fitted = lambda_hat.values
    zero = lambda_hat.mask & (fitted == 0)
    if np.any(zero):
        _logger.warning("%d cells with zero fitted intensity have no Pearson residual", int(zero.sum()))
    with np.errstate(invalid='ignore', divide='ignore'):
        scale = fitted if kind == 'pearson' else np.sqrt(fitted)
        values = np.where(zero, np.nan, raw / scale)
    return lambda_star.with_values(values)


def intensity_derivative(m, z, j):
    """Analytic derivative of the fitted intensity with respect to column j: beta_j * lambda_hat"""
    col = m._column(j)
    return float(m.beta[col] * intensity_at(m, z))


def finite_difference_derivative(m, z, j, h=None):
    """Central finite difference of the fitted intensity in column j"""
    col = m._column(j)
    full = np.concatenate([[1.0], [float(z[t.label]) for t in m.terms]])
    h = h if h is not None else 1e-5 * max(1.0, abs(full[col]))
    up = full.copy()
    down = full.copy()
    up[col] += h
    down[col] -= h
    return float((math.exp(up @ m.beta) - math.exp(down @ m.beta)) / (2 * h))


def covariate_vector(m, covariates, u):
    """Transformed covariate values of the model columns at a location"""
    z = {}
    for term in m.terms:
        value = lookup(covariates[term.covariate], u)
        z[term.label] = float(term.transform(value)) if value is not None else float('nan')
    return z


def derivative_check(m, covariates, u, j):
    """
    Derivative of the fitted intensity at u with respect to column j

    Parameters
    ----------
    m : FittedModel
    covariates : dict of str to PixelImage
    u : PlanarPoint
    j : int or str
        Column index or label, 0 being the intercept

    Returns
    -------
    float
        beta_j * lambda_hat(u)
    """
    z = covariate_vector(m, covariates, u)
    if not all(np.isfinite(v) for v in z.values()):
        raise InputError(f"Covariates are missing at ({u.x}, {u.y})")
    analytic = intensity_derivative(m, z, j)
    numeric = finite_difference_derivative(m, z, j)
    scale = max(abs(analytic), abs(numeric), np.finfo(float).tiny)
    if abs(analytic - numeric) / scale > 1e-6:
        _logger.warning("Analytic and finite-difference derivatives disagree: %.10g vs %.10g", analytic, numeric)
    return analytic
