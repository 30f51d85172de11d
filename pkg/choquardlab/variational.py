"""Energy functional, quotient minimisation and the mountain-pass solver.

``J_λ(u) = ½ G(u)^2 - ‖u‖_HL^{2·2μ*} / (2·2μ*) - λ/(p+1) ∫ |u|^{p+1}`` with
``G(u)^2 = ‖∇u‖^2 + [u]_s^2``. For p = 1 solutions come from the quotient
``P_λ(u) = G(u)^2 - λ|u|_2^2`` on the sphere ``‖u‖_HL = 1``; for p > 1 from a
descent on the Nehari manifold.
"""
import logging
from dataclasses import asdict, dataclass, field as dataclass_field
from fractions import Fraction
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy import optimize
from scipy.sparse.linalg import cg
from tqdm.auto import tqdm

from choquardlab.choquard import ChoquardState, as_fraction, bubble_field, compute_exponents
from choquardlab.geometry import DomainMask
from choquardlab.operators import MixedForm
from choquardlab.spectral import EigenResult, first_eigen_fractional, first_eigen_mixed, operator_on_domain
from choquardlab.utility_functions import ConvergenceError, ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProblemParams:
    """Parameters of the Choquard problem.

    Attributes:
        n (int): Dimension, at least 3.
        s (float): Fractional order in (0, 1).
        mu (float): Riesz exponent in (0, n).
        p (float): Subcritical exponent in [1, 2*-1).
        lam (float): λ."""

    n: int
    s: float
    mu: float
    p: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ParameterError(f"fractional order s={self.s} must lie in (0, 1)")
        compute_exponents(self.n, self.mu)
        check_power(self.n, self.p)

    @property
    def critical(self) -> Fraction:
        return compute_exponents(self.n, self.mu)[0]

    @property
    def choquard_exponent(self) -> Fraction:
        return compute_exponents(self.n, self.mu)[1]


def check_power(n, p, strict_lower=False):
    """Raise ParameterError unless 1 <= p < 2*-1 (1 < p with ``strict_lower``)."""
    upper = Fraction(2 * n, n - 2) - 1
    p_exact = as_fraction(p)
    low_ok = p_exact > 1 if strict_lower else p_exact >= 1
    if not (low_ok and p_exact < upper):
        bracket = '(' if strict_lower else '['
        raise ParameterError(f"p={float(p)} must lie in {bracket}1, {float(upper):g}) for n={n}")


def mountain_pass_threshold(n, mu, s_hat):
    """Compactness level ``(n+2-μ)/(4n-2μ) · Ŝ^{(2n-μ)/(n+2-μ)}``.

    Returns:
        tuple: ``(coefficient, exponent, value)``; the first two as Fractions.

    Examples:
        >>> mountain_pass_threshold(3, 1, 1.0)[:2]
        (Fraction(2, 5), Fraction(5, 4))"""
    mu = as_fraction(mu)
    coefficient = (n + 2 - mu) / (4 * n - 2 * mu)
    exponent = (2 * n - mu) / (n + 2 - mu)
    value = None if s_hat is None else float(coefficient) * float(s_hat) ** float(exponent)
    return coefficient, exponent, value


@dataclass
class EnergyBreakdown:
    """Components of J_λ(u).

    Attributes:
        g_sq (float): G(u)^2.
        hl (float): ‖u‖_HL^{2·2μ*}.
        lp (float): ∫|u|^{p+1}.
        J (float): The energy.
        grad_norm (float): |J'(u)|_2, NaN when not requested."""

    g_sq: float
    hl: float
    lp: float
    J: float
    grad_norm: float = float('nan')

    def to_dict(self):
        return asdict(self)


@dataclass
class QuotientResult:
    """Outcome of a quotient minimisation at one λ.

    Attributes:
        lam (float): λ.
        S (float): S_{H,L}(λ) = P_λ(minimizer).
        minimizer (np.ndarray): Nonnegative field with ‖·‖_HL = 1.
        converged (bool): Euler-Lagrange residual within tolerance.
        history (list): Quotient value per accepted iterate.
        multiplier (float): Least-squares ν in Lψ - λψ = ν D[ψ]|ψ|^{2μ*-2}ψ.
        el_residual (float): Relative Euler-Lagrange residual.
        g_sq (float): G(minimizer)^2, so S(λ') = g_sq - λ' l2_sq for any λ'.
        l2_sq (float): |minimizer|_2^2.
        method (str): 'lbfgs' or 'projected'."""

    lam: float
    S: float
    minimizer: np.ndarray
    converged: bool
    history: List[float]
    multiplier: float
    el_residual: float
    g_sq: float
    l2_sq: float
    method: str

    def value_at(self, lam) -> float:
        """P_λ of the stored minimizer at another λ (affine in λ)."""
        return self.g_sq - lam * self.l2_sq

    def to_dict(self):
        return {'lambda': self.lam, 'S': self.S, 'converged': self.converged, 'multiplier': self.multiplier,
                'el_residual': self.el_residual, 'g_sq': self.g_sq, 'l2_sq': self.l2_sq,
                'iterations': len(self.history), 'method': self.method}


@dataclass
class FiberResult:
    """Maximum of t ↦ J(tu) over t > 0."""

    t: float
    J: float
    derivative: float
    g_sq: float


@dataclass
class SolveReport:
    """Outcome of the mountain-pass solver.

    ``field`` is the last iterate; every other attribute is a scalar or flag."""

    lam: float
    p: float
    level: float
    converged: bool
    iterations: int
    grad_relative: float
    energy: EnergyBreakdown
    field: np.ndarray = dataclass_field(repr=False)
    threshold: Optional[float] = None
    threshold_coefficient: Optional[Fraction] = None
    threshold_exponent: Optional[Fraction] = None
    below_threshold: Optional[bool] = None
    positive: bool = False
    min_inside: float = 0.0
    concentrated: bool = False
    effective_width: float = 0.0
    weak_form_residual: float = float('nan')
    nehari_residual: float = float('nan')
    geometry_ok: bool = False
    history: List[Dict] = dataclass_field(default_factory=list, repr=False)

    def to_dict(self, include_history=False):
        out = {key: value for key, value in self.__dict__.items() if key not in ('field', 'energy', 'history')}
        out['energy'] = self.energy.to_dict()
        if include_history:
            out['history'] = self.history
        return out


@dataclass
class CollapseReport:
    """Outcome of the unconstrained descent used in the nonexistence regime.

    Attributes:
        lam (float): λ.
        p (float): Exponent.
        start_sup (float): ‖u_0‖_∞ of the starting field.
        final_sup (float): ‖u‖_∞ of the last iterate.
        start_level (float): J_λ(u_0).
        level (float): J_λ of the last iterate.
        iterations (int): Accepted steps.
        trivial_collapse (bool): ``final_sup < collapse_ratio · start_sup``."""

    lam: float
    p: float
    start_sup: float
    final_sup: float
    start_level: float
    level: float
    iterations: int
    trivial_collapse: bool
    field: np.ndarray = dataclass_field(repr=False)
    history: List[Dict] = dataclass_field(default_factory=list, repr=False)

    def to_dict(self, include_history=False):
        out = {key: value for key, value in self.__dict__.items() if key not in ('field', 'history')}
        if include_history:
            out['history'] = self.history
        return out


def effective_width(field, grid) -> float:
    """Root-mean-square distance of ``field^2`` from its centroid."""
    n = grid.n
    weights = field ** 2
    total = float(np.sum(weights))
    if total == 0.0:
        return 0.0
    points = grid.points
    centroid = np.tensordot(weights, points, axes=(tuple(range(n)), tuple(range(n)))) / total
    return float(np.sqrt(np.sum(weights * np.sum((points - centroid) ** 2, axis=-1)) / total))


class VariationalProblem:
    """Energy, quotient and mountain-pass machinery on one domain.

    Args:
        mask (DomainMask): The domain.
        params (ProblemParams): n must match the grid.
        workers (int, optional): scipy.fft workers."""

    def __init__(self, mask: DomainMask, params: ProblemParams, workers=None):
        if params.n != mask.grid.n:
            raise ParameterError(f"params.n={params.n} does not match the grid dimension {mask.grid.n}")
        self.mask = mask
        self.grid = mask.grid
        self.params = params
        self.workers = workers
        self.form = MixedForm(mask, params.s, workers=workers)
        self.choquard = ChoquardState(mask, params.mu, workers)
        self.q = float(params.choquard_exponent)
        self._eigen = {}

    # ------------------------------------------------------------------
    # spectral markers
    # ------------------------------------------------------------------

    def eigen_mixed(self) -> EigenResult:
        if 'mixed' not in self._eigen:
            self._eigen['mixed'] = first_eigen_mixed(self.mask, self.params.s, workers=self.workers)
        return self._eigen['mixed']

    def eigen_fractional(self) -> EigenResult:
        if 'fractional' not in self._eigen:
            self._eigen['fractional'] = first_eigen_fractional(self.mask, self.params.s, workers=self.workers)
        return self._eigen['fractional']

    # ------------------------------------------------------------------
    # energy
    # ------------------------------------------------------------------

    def _resolve(self, lam, p):
        lam = self.params.lam if lam is None else float(lam)
        p = self.params.p if p is None else float(p)
        check_power(self.grid.n, p)
        return lam, p

    def _lp(self, u, p):
        return float(np.sum(np.abs(u) ** (p + 1.0)) * self.grid.cell_volume)

    def energy(self, u, lam=None, p=None, with_gradient=False) -> EnergyBreakdown:
        """J_λ(u) and its parts.

        Args:
            u (np.ndarray): Admissible field.
            lam (float, optional): λ, the problem's by default.
            p (float, optional): Exponent, the problem's by default.
            with_gradient (bool, optional): Also fill ``grad_norm``.

        Returns:
            EnergyBreakdown: The components.

        Raises:
            ParameterError: If p is outside [1, 2*-1)."""
        lam, p = self._resolve(lam, p)
        u = self.form.admissible(u)
        g_sq = self.form.mixed_norm_sq(u)
        hl, _ = self.choquard.hl_term(u)
        lp = self._lp(u, p)
        J = 0.5 * g_sq - hl / (2.0 * self.q) - lam * lp / (p + 1.0)
        grad_norm = float('nan')
        if with_gradient:
            grad_norm = np.sqrt(self.form.l2_sq(self.grad_energy(u, lam, p)))
        return EnergyBreakdown(g_sq, hl, lp, J, grad_norm)

    def grad_energy(self, u, lam=None, p=None) -> np.ndarray:
        """Nodal gradient g = Lu - D[u]|u|^{2μ*-2}u - λ|u|^{p-1}u, zero outside Ω."""
        lam, p = self._resolve(lam, p)
        u = self.form.admissible(u)
        lp_force = np.sign(u) * np.abs(u) ** p
        return self.mask.apply(self.form.apply(u) - self.choquard.choquard_force(u) - lam * lp_force)

    def nehari_residual(self, u, lam=None, p=None) -> float:
        """G(u)^2 - ‖u‖_HL^{2·2μ*} - λ∫|u|^{p+1}, zero on the Nehari manifold."""
        parts = self.energy(u, lam, p)
        lam, _ = self._resolve(lam, p)
        return parts.g_sq - parts.hl - lam * parts.lp

    def weak_form_residual(self, u, lam=None, p=None, n_tests=10, seed=0) -> float:
        """Max over random admissible φ of |<J'(u), φ>| relative to the size of its terms."""
        lam, p = self._resolve(lam, p)
        u = self.form.admissible(u)
        rng = np.random.default_rng(seed)
        operator_part = self.form.apply(u)
        choquard_part = self.choquard.choquard_force(u)
        power_part = lam * np.sign(u) * np.abs(u) ** p
        worst = 0.0
        for _ in range(n_tests):
            phi = self.mask.apply(rng.standard_normal(self.grid.shape))
            terms = [self.form.inner(operator_part, phi), self.form.inner(choquard_part, phi),
                     self.form.inner(power_part, phi)]
            scale = sum(abs(t) for t in terms)
            if scale == 0.0:
                continue
            worst = max(worst, abs(terms[0] - terms[1] - terms[2]) / scale)
        return worst

    # ------------------------------------------------------------------
    # quotient P_λ on ‖u‖_HL = 1
    # ------------------------------------------------------------------

    def normalize_hl(self, u) -> np.ndarray:
        norm = self.choquard.hl_norm(u)
        if norm == 0.0:
            raise ParameterError("cannot normalise the zero field")
        return self.form.admissible(u) / norm

    def quotient_value(self, u, lam) -> float:
        """P_λ(u/‖u‖_HL) = (G(u)^2 - λ|u|_2^2) / ‖u‖_HL^2."""
        u = self.form.admissible(u)
        return (self.form.mixed_norm_sq(u) - lam * self.form.l2_sq(u)) / self.choquard.hl_norm(u) ** 2

    def euler_lagrange(self, psi, lam):
        """Multiplier ν and relative residual of Lψ - λψ = ν D[ψ]|ψ|^{2μ*-2}ψ."""
        linear = self.form.apply(psi) - lam * self.form.admissible(psi)
        force = self.choquard.choquard_force(psi)
        nu = self.form.inner(linear, force) / self.form.inner(force, force)
        residual = np.sqrt(self.form.l2_sq(linear - nu * force))
        scale = np.sqrt(self.form.l2_sq(linear))
        return nu, float(residual / scale) if scale > 0 else float('inf')

    def _quotient_objective(self, lam):
        mask, cell, q = self.mask, self.grid.cell_volume, self.q

        def objective(x):
            u = mask.embed(x)
            Lu = self.form.apply(u)
            numerator = cell * (x @ Lu[mask.inside]) - lam * cell * (x @ x)
            hl, potential = self.choquard.hl_term(u)
            if hl <= 0.0:
                return np.inf, np.zeros_like(x)
            norm_sq = hl ** (1.0 / q)
            value = numerator / norm_sq
            force = self.choquard.choquard_force(u, potential)[mask.inside]
            grad = 2.0 * cell * ((Lu[mask.inside] - lam * x) - value * hl ** (1.0 / q - 1.0) * force) / norm_sq
            return value, grad

        return objective

    def _minimize_lbfgs(self, lam, start, max_iter):
        objective = self._quotient_objective(lam)
        history = []

        def record(x):
            history.append(objective(x)[0])

        result = optimize.minimize(objective, self.mask.restrict(start), jac=True, method='L-BFGS-B',
                                   callback=record,
                                   options={'maxiter': max_iter, 'maxcor': 30, 'ftol': 1e-15, 'gtol': 1e-14})
        logger.debug(f"L-BFGS-B at λ={lam:.6g}: {result.message}")
        return self.mask.embed(result.x), history

    def _minimize_projected(self, lam, start, max_iter, rtol=1e-13):
        u = self.normalize_hl(np.abs(start))
        value = self.quotient_value(u, lam)
        history = [value]
        step = 1.0 / float(np.max(self.form.diagonal()))
        stalled = 0
        for _ in range(max_iter):
            direction = self.form.apply(u) - lam * u
            tau = 2.0 * step
            while tau > 1e-16 * step:
                trial = self.normalize_hl(np.abs(u - tau * direction))
                trial_value = self.quotient_value(trial, lam)
                if trial_value < value:
                    break
                tau *= 0.5
            else:
                break
            decrease = value - trial_value
            u, value, step = trial, trial_value, tau
            history.append(value)
            stalled = stalled + 1 if decrease <= rtol * abs(value) else 0
            if stalled >= 5:
                break
        return u, history

    def quotient_minimize(self, lam, start=None, method='lbfgs', max_iter=5000, tol=1e-5) -> QuotientResult:
        """Minimise P_λ(u) = G(u)^2 - λ|u|_2^2 over ‖u‖_HL = 1.

        Args:
            lam (float): λ.
            start (np.ndarray, optional): Initial field; the first mixed eigenfield by default.
            method (str, optional): 'lbfgs' (L-BFGS-B on the 0-homogeneous quotient) or
                'projected' (backtracking projected gradient with |·| projection).
            max_iter (int, optional): Iteration budget. Defaults to 5000.
            tol (float, optional): Relative Euler-Lagrange residual for ``converged``.

        Returns:
            QuotientResult: The minimizer is nonnegative with ‖·‖_HL = 1."""
        if method not in ('lbfgs', 'projected'):
            raise ParameterError(f"unknown quotient method '{method}', expected 'lbfgs' or 'projected'")
        lam = float(lam)
        if start is None:
            start = self.eigen_mixed().eigenfield
        if method == 'lbfgs':
            u, history = self._minimize_lbfgs(lam, start, max_iter)
        else:
            u, history = self._minimize_projected(lam, start, max_iter)
        psi = self.normalize_hl(np.abs(u))
        g_sq = self.form.mixed_norm_sq(psi)
        l2_sq = self.form.l2_sq(psi)
        nu, residual = self.euler_lagrange(psi, lam)
        converged = residual <= tol
        if not converged:
            logger.warning(f"quotient minimisation at λ={lam:.6g} stopped at relative residual {residual:.3e}")
        return QuotientResult(lam, g_sq - lam * l2_sq, psi, converged, history, nu, residual, g_sq, l2_sq, method)

    def rescale_quotient_minimizer(self, result: QuotientResult) -> np.ndarray:
        """u = S^{(n-2)/(2n+4-2μ)} ψ, a solution of the p = 1 problem when S > 0."""
        n, mu = self.grid.n, self.params.mu
        if result.S <= 0.0:
            raise ParameterError(f"rescaling needs S > 0, got S={result.S:.6g}")
        return result.S ** ((n - 2.0) / (2.0 * n + 4.0 - 2.0 * mu)) * result.minimizer

    def lambda_star_scan(self, lams, method='lbfgs', left_continuity=True, floor=1e-6, max_iter=5000,
                         el_tol=1e-5):
        """S_{H,L}(λ) over an increasing grid and the detected threshold λ̂*.

        Each point is warm-started from the previous minimizer; since P_λ is
        affine in λ the previous minimizer is also a candidate at the new λ, so
        the reported S never increases along the grid. λ̂* is the first λ whose
        S falls below the λ = 0 plateau by more than
        ``max(3 × plateau scatter, floor · S(0))``.

        Args:
            lams (list): Strictly increasing positive λ values.
            method (str, optional): Quotient minimiser.
            left_continuity (bool, optional): Check left-continuity of S at λ̂*.
            floor (float, optional): Relative floor for the plateau tolerance.
            max_iter (int, optional): Budget per point.
            el_tol (float, optional): Relative Euler-Lagrange residual for ``converged``.

        Returns:
            tuple: ``(table, summary)``; a DataFrame with one row per λ and a dict."""
        lams = np.asarray(lams, dtype=float)
        if lams.size == 0 or np.any(np.diff(lams) <= 0) or lams[0] <= 0:
            raise ParameterError("the λ grid must be positive and strictly increasing")
        lambda_1 = self.eigen_mixed().eigenvalue
        lambda_1s = self.eigen_fractional().eigenvalue

        plateau = self.quotient_minimize(0.0, method=method, max_iter=max_iter, tol=el_tol)
        previous = plateau
        results = []
        for lam in tqdm(lams, desc='λ scan', leave=False):
            current = self.quotient_minimize(lam, start=previous.minimizer, method=method, max_iter=max_iter,
                                             tol=el_tol)
            if previous.value_at(lam) < current.S:
                nu, residual = self.euler_lagrange(previous.minimizer, lam)
                current = QuotientResult(lam, previous.value_at(lam), previous.minimizer, residual <= el_tol,
                                         current.history, nu, residual, previous.g_sq, previous.l2_sq, method)
            results.append(current)
            previous = current

        table = pd.DataFrame([r.to_dict() for r in results])
        table['lambda_over_lambda1'] = table['lambda'] / lambda_1
        in_plateau = table['lambda'] <= lambda_1s
        plateau_values = np.append(table.loc[in_plateau, 'S'].to_numpy(), plateau.S)
        scatter = float(np.max(plateau_values) - np.min(plateau_values))
        tolerance = max(3.0 * scatter, floor * abs(plateau.S))
        table['plateau_gap'] = plateau.S - table['S']
        table['below_plateau'] = table['plateau_gap'] > tolerance

        below = table.index[table['below_plateau']]
        lambda_hat = float(table.loc[below[0], 'lambda']) if len(below) else None
        summary = {
            'plateau': plateau.S,
            'plateau_scatter': scatter,
            'tolerance': tolerance,
            'lambda_1': lambda_1,
            'lambda_1s': lambda_1s,
            'lambda_hat': lambda_hat,
            'non_increasing': bool(np.all(np.diff(table['S'].to_numpy()) <= 0.0)),
            'bracket_ok': None if lambda_hat is None else bool(lambda_1s <= lambda_hat < lambda_1),
            'plateau_ok': bool(np.all(np.abs(table.loc[in_plateau, 'plateau_gap']) <= tolerance)),
            'ball_radius_exponent': (self.grid.n - 2.0) / (4.0 - self.params.mu),
        }
        if left_continuity and lambda_hat is not None:
            summary['left_continuity'] = self._left_continuity(results[below[0]], lambda_1, method, max_iter,
                                                               el_tol)
        logger.info(f"λ scan: plateau S(0)={plateau.S:.10g}, λ̂*={lambda_hat}, "
                    f"λ_1s={lambda_1s:.6g}, λ_1={lambda_1:.6g}")
        return table, summary

    def _left_continuity(self, at_hat: QuotientResult, lambda_1, method, max_iter, el_tol=1e-5):
        gaps = []
        for fraction in (1e-1, 1e-2, 1e-3):
            lam = at_hat.lam - fraction * lambda_1
            if lam <= 0:
                continue
            left = self.quotient_minimize(lam, start=at_hat.minimizer, method=method, max_iter=max_iter, tol=el_tol)
            gaps.append({'delta_over_lambda1': fraction, 'lambda': lam, 'gap': left.S - at_hat.S})
        shrinking = all(abs(b['gap']) <= abs(a['gap']) for a, b in zip(gaps, gaps[1:]))
        return {'gaps': gaps, 'shrinking': shrinking}

    # ------------------------------------------------------------------
    # fibering and mountain pass
    # ------------------------------------------------------------------

    def fibering_max(self, u, lam=None, p=None) -> FiberResult:
        """Unique t* > 0 with d/dt J(tu) = 0.

        After division by t the derivative is
        ``φ(t) = G^2 - λ t^{p-1} ∫|u|^{p+1} - t^{2·2μ*-2} ‖u‖_HL^{2·2μ*}``,
        decreasing in t for λ >= 0 and p > 1; for λ < 0 or p = 1 it is still
        decreasing once positive, so the root is unique. Found by brentq on a
        doubling bracket.

        Raises:
            ParameterError: For the zero field or when no positive root exists."""
        lam, p = self._resolve(lam, p)
        u = self.form.admissible(u)
        if not np.any(u):
            raise ParameterError("the fibering map of the zero field has no maximum")
        g_sq = self.form.mixed_norm_sq(u)
        hl, _ = self.choquard.hl_term(u)
        lp = self._lp(u, p)
        exponent = 2.0 * self.q - 2.0

        def phi(t):
            return g_sq - lam * lp * t ** (p - 1.0) - hl * t ** exponent

        if p == 1.0 and g_sq - lam * lp <= 0.0:
            raise ParameterError("G(u)^2 <= λ|u|_2^2: the fibering map has no positive maximum")
        lo, hi = 1.0, 1.0
        for _ in range(400):
            if phi(hi) < 0.0:
                break
            hi *= 2.0
        for _ in range(400):
            if phi(lo) > 0.0:
                break
            lo *= 0.5
        if not (phi(lo) > 0.0 > phi(hi)):
            raise ParameterError("could not bracket the fibering maximum")
        t = optimize.brentq(phi, lo, hi, xtol=np.finfo(float).tiny, rtol=4.0 * np.finfo(float).eps, maxiter=500)
        J = 0.5 * t ** 2 * g_sq - t ** (2.0 * self.q) * hl / (2.0 * self.q) - lam * t ** (p + 1.0) * lp / (p + 1.0)
        return FiberResult(t, J, t * phi(t), g_sq)

    def _project_to_nehari(self, u, lam, p):
        u = np.abs(self.form.admissible(u))
        fiber = self.fibering_max(u, lam, p)
        return fiber.t * u, fiber.J

    def mountain_pass_solve(self, lam=None, p=None, eps=None, start=None, max_iter=500, tol=1e-6,
                            s_hat=None, concentration_cells=2.0, armijo=1e-4) -> SolveReport:
        """Mountain-pass solution for 1 < p < 2*-1 by descent on the Nehari manifold.

        Each step solves ``L d = J'(w)`` (Sobolev gradient), takes
        ``u = |w - τ d|`` with Armijo backtracking on ``τ``, and rescales ``u``
        to its fibering maximum, so every iterate stays on the Nehari manifold.
        Non-convergence and concentration are reported through flags, never
        raised.

        Args:
            lam (float, optional): λ, the problem's by default.
            p (float, optional): Exponent in (1, 2*-1).
            eps (float, optional): Scale of the v_ε start, 4h by default.
            start (np.ndarray, optional): Explicit starting field.
            max_iter (int, optional): Outer iterations. Defaults to 500.
            tol (float, optional): Converged when |J'(w)|_2 <= tol |w|_2.
            s_hat (float, optional): Extrapolated Ŝ_{H,L,C} for the level threshold.
            concentration_cells (float, optional): Width, in units of h, below which
                the iterate counts as concentrated.
            armijo (float, optional): Sufficient decrease constant.

        Returns:
            SolveReport: Level, flags and diagnostics.

        Raises:
            ParameterError: For p outside (1, 2*-1) or λ <= 0; the λ <= 0 regime
                goes through :meth:`collapse_descent`."""
        lam, p = self._resolve(lam, p)
        check_power(self.grid.n, p, strict_lower=True)
        if lam <= 0.0:
            raise ParameterError(f"the mountain-pass solver needs λ > 0, got λ={lam:g}")
        h = self.grid.h
        if start is None:
            start = bubble_field(self.mask, 'v_eps', eps=4.0 * h if eps is None else eps)
        w, level = self._project_to_nehari(start, lam, p)
        A, M = operator_on_domain(self.form)
        inside = self.mask.inside

        history = []
        converged = False
        grad_relative = float('inf')
        tau = 1.0
        iteration = 0
        for iteration in range(1, max_iter + 1):
            g = self.grad_energy(w, lam, p)
            grad_relative = np.sqrt(self.form.l2_sq(g) / self.form.l2_sq(w))
            history.append({'iteration': iteration, 'J': level, 'grad_relative': grad_relative, 'tau': tau})
            if grad_relative <= tol:
                converged = True
                break
            d_inside, info = cg(A, g[inside], rtol=1e-10, atol=0.0, M=M, maxiter=20 * self.mask.count)
            if info < 0:
                logger.warning(f"Sobolev gradient solve failed (info={info})")
                break
            d = self.mask.embed(d_inside)
            slope = self.form.inner(g, d)
            tau = min(1.0, 2.0 * tau)
            accepted = False
            while tau > 1e-12:
                trial, trial_level = self._project_to_nehari(w - tau * d, lam, p)
                if trial_level <= level - armijo * tau * slope:
                    accepted = True
                    break
                tau *= 0.5
            if not accepted:
                logger.warning(f"mountain pass stalled at iteration {iteration}: no Armijo step")
                break
            w, level = trial, trial_level

        return self._solve_report(w, lam, p, level, converged, iteration, grad_relative, history,
                                  s_hat, concentration_cells)

    def _solve_report(self, w, lam, p, level, converged, iterations, grad_relative, history,
                      s_hat, concentration_cells):
        n, h = self.grid.n, self.grid.h
        energy = self.energy(w, lam, p, with_gradient=True)
        width = effective_width(w, self.grid)
        inside_values = w[self.mask.inside]
        coefficient, exponent, threshold = mountain_pass_threshold(n, self.params.mu, s_hat)

        rays = [self.energy(t * w, lam, p).J for t in (1e-3, 1.0, 1e3)]
        report = SolveReport(
            lam=lam, p=p, level=level, converged=converged, iterations=iterations,
            grad_relative=float(grad_relative), energy=energy, field=w, threshold=threshold,
            threshold_coefficient=coefficient, threshold_exponent=exponent,
            below_threshold=None if threshold is None else bool(level < threshold),
            positive=bool(np.min(inside_values) > 0.0), min_inside=float(np.min(inside_values)),
            concentrated=bool(width <= concentration_cells * h), effective_width=width,
            weak_form_residual=self.weak_form_residual(w, lam, p),
            nehari_residual=self.nehari_residual(w, lam, p),
            geometry_ok=bool(rays[0] > 0.0 and rays[2] < 0.0), history=history)
        if not converged:
            logger.warning(f"mountain pass at λ={lam:.6g}, p={p:g} not converged after {iterations} iterations "
                           f"(relative gradient {grad_relative:.3e})")
        if report.concentrated:
            logger.warning(f"mountain-pass iterate concentrated: effective width {width:.3g} <= "
                           f"{concentration_cells:g}h")
        logger.info(f"mountain pass level c={level:.10g}, threshold={threshold}")
        return report

    def collapse_descent(self, lam=None, p=None, eps=None, start=None, start_fraction=0.25, max_iter=200,
                         collapse_ratio=1e-6, armijo=1e-4) -> CollapseReport:
        """Sobolev-gradient descent on J_λ without the Nehari rescale.

        The start is ``start_fraction · t*(v) · v`` for the v_ε bubble ``v`` (or
        ``start``), on its fiber below the fibering maximum. Each step takes
        ``u = |u - τ d|`` with ``L d = J'(u)`` and Armijo backtracking on J_λ
        itself. The run stops at trivial collapse
        (``‖u‖_∞ < collapse_ratio · ‖u_0‖_∞``), when no step decreases J, or
        after ``max_iter`` steps.

        Args:
            lam (float, optional): λ, the problem's by default.
            p (float, optional): Exponent in (1, 2*-1).
            eps (float, optional): Scale of the v_ε start, 4h by default.
            start (np.ndarray, optional): Explicit direction for the start.
            start_fraction (float, optional): Position on the fiber relative to t*.
            max_iter (int, optional): Step budget. Defaults to 200.
            collapse_ratio (float, optional): Sup-norm ratio counted as collapse.
            armijo (float, optional): Sufficient decrease constant.

        Returns:
            CollapseReport: Sup norms, levels and the collapse flag."""
        lam, p = self._resolve(lam, p)
        check_power(self.grid.n, p, strict_lower=True)
        if not 0.0 < start_fraction < 1.0:
            raise ParameterError(f"start_fraction={start_fraction} must lie in (0, 1)")
        if start is None:
            start = bubble_field(self.mask, 'v_eps', eps=4.0 * self.grid.h if eps is None else eps)
        direction = np.abs(self.form.admissible(start))
        u = start_fraction * self.fibering_max(direction, lam, p).t * direction
        start_sup = sup = float(np.max(u))
        start_level = level = self.energy(u, lam, p).J
        A, M = operator_on_domain(self.form)
        inside = self.mask.inside

        history = [{'iteration': 0, 'J': level, 'sup': sup, 'tau': 0.0}]
        tau = 1.0
        iterations = 0
        while iterations < max_iter and sup >= collapse_ratio * start_sup:
            g = self.grad_energy(u, lam, p)
            d_inside, info = cg(A, g[inside], rtol=1e-10, atol=0.0, M=M, maxiter=20 * self.mask.count)
            if info < 0:
                logger.warning(f"Sobolev gradient solve failed (info={info})")
                break
            d = self.mask.embed(d_inside)
            slope = self.form.inner(g, d)
            if slope <= 0.0:
                break
            tau = min(1.0, 2.0 * tau)
            accepted = False
            while tau > 1e-12:
                trial = np.abs(u - tau * d)
                trial_level = self.energy(trial, lam, p).J
                if trial_level <= level - armijo * tau * slope:
                    accepted = True
                    break
                tau *= 0.5
            if not accepted:
                logger.warning(f"collapse descent stalled after {iterations} steps: no Armijo step")
                break
            u, level = trial, trial_level
            sup = float(np.max(u))
            iterations += 1
            history.append({'iteration': iterations, 'J': level, 'sup': sup, 'tau': tau})

        collapsed = bool(sup < collapse_ratio * start_sup)
        logger.info(f"collapse descent at λ={lam:g}, p={p:g}: ‖u‖∞ {start_sup:.4g} -> {sup:.4g} "
                    f"in {iterations} steps (trivial collapse: {collapsed})")
        return CollapseReport(lam, p, start_sup, sup, start_level, level, iterations, collapsed, u, history)


def require_converged(report, what):
    """Raise ConvergenceError carrying ``report`` when ``report.converged`` is false."""
    if not report.converged:
        raise ConvergenceError(f"{what} did not converge", best=report)
    return report
