"""Verification experiments: Pohozaev balance, scaling laws, bubble asymptotics and oracles.

Every experiment returns a pandas DataFrame (one row per sample) together with
scalar summaries; none of them raises on a failed property. Deciding what
counts as failure is left to the caller (the CLI turns summaries into exit
codes).
"""
import logging
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from scipy import integrate, optimize, special
from scipy.interpolate import RegularGridInterpolator
from tqdm.auto import tqdm

from choquardlab.choquard import (ChoquardState, as_fraction, bubble_energy, bubble_energy_estimate, bubble_field,
                                  compute_exponents, sobolev_bubble_norms)
from choquardlab.geometry import BoundaryPatches, DomainMask, Grid, Shape, boundary_patches, build_domain
from choquardlab.kernels import frac_constant, gagliardo_table, riesz_table
from choquardlab.operators import MixedForm
from choquardlab.spectral import first_eigen_local, first_eigen_mixed
from choquardlab.utility_functions import GridResolutionError, ParameterError
from choquardlab.variational import ProblemParams, VariationalProblem, effective_width

logger = logging.getLogger(__name__)

MIN_R_SQUARED = 0.98


# ----------------------------------------------------------------------
# Pohozaev identity
# ----------------------------------------------------------------------


@dataclass
class PohozaevTerms:
    """Term-by-term Pohozaev balance ``A + B = C1 + C2 + D1 + D2``.

    The combined identity (Pohozaev minus (n-2)/2 times Nehari) is reported
    alongside: ``(s-1)[u]_s^2 + D1 + D2 = -λ(n(1/(p+1) - 1/2) + 1) ∫|u|^{p+1}``."""

    A: float = 0.0
    B: float = 0.0
    C1: float = 0.0
    C2: float = 0.0
    D1: float = 0.0
    D2: float = 0.0
    combined_lhs: float = 0.0
    combined_rhs: float = 0.0
    nehari_residual: float = 0.0

    @property
    def residual(self) -> float:
        return (self.A + self.B) - (self.C1 + self.C2 + self.D1 + self.D2)

    @property
    def relative_residual(self) -> float:
        scale = max(abs(self.A), abs(self.B), abs(self.C1), abs(self.C2), abs(self.D1), abs(self.D2))
        return 0.0 if scale == 0.0 else abs(self.residual) / scale

    @property
    def combined_residual(self) -> float:
        return self.combined_lhs - self.combined_rhs

    def to_dict(self):
        out = asdict(self)
        out.update(residual=self.residual, relative_residual=self.relative_residual,
                   combined_residual=self.combined_residual)
        return out


def boundary_traces(u, mask: DomainMask, patches: BoundaryPatches, s=None):
    """Normal derivative and fractional trace of ``u`` at the patch points.

    ``u`` is interpolated (multilinear) at ``x - τν`` for ``τ ∈ {2h, 3h, 4h}``.
    The outward derivative is the derivative at ``τ = 0`` of the quadratic
    through the three samples, ``∂u/∂ν ≈ (7u(2h) - 12u(3h) + 5u(4h)) / (2h)``;
    the boundary value itself is not used, since the discrete field vanishes
    on the first exterior nodes rather than on ∂Ω. The trace ``u/δ^s`` is the
    linear extrapolation to ``τ → 0`` of ``u(x - τν)/τ^s`` from 2h and 4h.

    Returns:
        tuple: ``(dnu, trace)``; ``trace`` is None when ``s`` is None.

    Raises:
        GridResolutionError: If a sampling point lies outside Ω."""
    h = mask.grid.h
    samples = [patches.points - k * h * patches.normals for k in (2.0, 3.0, 4.0)]
    for points in samples:
        if np.any(mask.signed_distance(points) >= 0.0):
            raise GridResolutionError(
                f"boundary sampling at 4h = {4 * h:.4g} leaves the domain; refine the grid (m={mask.grid.m})")
    interpolator = RegularGridInterpolator((mask.grid.axis,) * mask.n, np.asarray(u, dtype=float),
                                           method='linear', bounds_error=True)
    u_near, u_mid, u_far = (interpolator(points) for points in samples)
    dnu = (7.0 * u_near - 12.0 * u_mid + 5.0 * u_far) / (2.0 * h)
    trace = None
    if s is not None:
        trace = 2.0 * u_near / (2.0 * h) ** s - u_far / (4.0 * h) ** s
    return dnu, trace


def pohozaev_terms(u, mask: DomainMask, patches: BoundaryPatches, lam, p, s=None, mu=None,
                   workers=None) -> PohozaevTerms:
    """Evaluate every term of the Pohozaev identity for a computed solution.

    Switching ``s`` off (None) drops C2 and D2 and uses the local form only;
    switching ``mu`` off drops the Choquard term A. Both off gives the
    classical Rellich-Pohozaev identity for ``-Δu = λ|u|^{p-1}u``.

    Args:
        u (np.ndarray): Solution on the grid.
        mask (DomainMask): Its domain.
        patches (BoundaryPatches): Quadrature of ∂Ω.
        lam (float): λ.
        p (float): Exponent of the power term.
        s (float, optional): Fractional order.
        mu (float, optional): Riesz exponent.
        workers (int, optional): scipy.fft workers.

    Returns:
        PohozaevTerms: All terms plus the combined identity and the Nehari residual."""
    n = mask.n
    u = mask.apply(np.asarray(u, dtype=float))
    if not np.any(u):
        return PohozaevTerms()
    form = MixedForm(mask, s=s, local=True, fractional=s is not None, workers=workers)
    dirichlet = form.dirichlet_energy(u)
    gagliardo = form.gagliardo_sq(u) if s is not None else 0.0
    lp = float(np.sum(np.abs(u) ** (p + 1.0)) * mask.grid.cell_volume)
    hl, q = 0.0, None
    if mu is not None:
        state = ChoquardState(mask, mu, workers)
        hl, _ = state.hl_term(u)
        q = state.q

    dnu, trace = boundary_traces(u, mask, patches, s)
    weight = patches.normal_dot_position()
    terms = PohozaevTerms(
        A=0.0 if q is None else (mu - 2.0 * n) / (2.0 * q) * hl,
        B=-lam * n / (p + 1.0) * lp,
        C1=(2.0 - n) / 2.0 * dirichlet,
        C2=0.0 if s is None else (2.0 * s - n) / 2.0 * gagliardo,
        D1=-0.5 * patches.integrate(dnu ** 2 * weight),
        D2=0.0 if s is None else -special.gamma(1.0 + s) ** 2 / 2.0 * patches.integrate(trace ** 2 * weight),
    )
    terms.combined_lhs = (0.0 if s is None else (s - 1.0) * gagliardo) + terms.D1 + terms.D2
    terms.combined_rhs = -lam * (n * (1.0 / (p + 1.0) - 0.5) + 1.0) * lp
    terms.nehari_residual = dirichlet + gagliardo - hl - lam * lp
    return terms


def refinement_orders(values, hs, reference=None):
    """Empirical convergence orders from a refinement ladder.

    With a reference the errors are ``|v_i - reference|``; without one the
    successive differences ``|v_i - v_{i+1}|`` are used.

    Returns:
        np.ndarray: ``log(e_i/e_{i+1}) / log(h_i/h_{i+1})``, one shorter than the errors."""
    values = np.asarray(values, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if reference is None:
        errors, steps = np.abs(np.diff(values)), hs[:-1]
    else:
        errors, steps = np.abs(values - reference), hs
    if len(errors) < 2:
        return np.array([])
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.log(errors[:-1] / errors[1:]) / np.log(steps[:-1] / steps[1:])


def manufactured_local_check(shape: Shape, n=2, L=1.0, m_list=(32, 64, 128), resolution=2048):
    """Rellich identity for the discrete first Dirichlet eigenfunction of -Δ.

    Returns:
        tuple: ``(table, orders)``; the table holds the relative residual per m."""
    rows = []
    for m in tqdm(m_list, desc='manufactured Pohozaev', leave=False):
        grid = Grid(n, L, m)
        mask = build_domain(shape, grid)
        eigen = first_eigen_local(mask)
        terms = pohozaev_terms(eigen.eigenfield, mask, boundary_patches(mask, resolution), eigen.eigenvalue, 1.0)
        rows.append({'m': m, 'h': grid.h, 'lambda_loc': eigen.eigenvalue, **terms.to_dict()})
    table = pd.DataFrame(rows)
    orders = refinement_orders(table['relative_residual'].to_numpy(), table['h'].to_numpy(), reference=0.0)
    return table, orders


# ----------------------------------------------------------------------
# Nonexistence criterion
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class NonexistenceVerdict:
    """Outcome of the star-shaped nonexistence test.

    Attributes:
        holds (bool): ``-λ (n(1/(p+1) - 1/2) + 1) >= 0``.
        corollary (bool): ``(p >= (n+2)/(n-2) and λ >= 0) or (p < (n+2)/(n-2) and λ <= 0)``.
        coefficient (Fraction): ``n(1/(p+1) - 1/2) + 1``."""

    holds: bool
    corollary: bool
    coefficient: Fraction

    def __bool__(self):
        return self.holds


def nonexistence_criterion(n, p, lam) -> NonexistenceVerdict:
    """Exact evaluation of the nonexistence inequality on star-shaped domains.

    The two forms agree except at ``p = (n+2)/(n-2)`` with ``λ < 0``, where the
    coefficient vanishes and only the inequality form holds.

    Examples:
        >>> bool(nonexistence_criterion(3, 2, 1))
        False"""
    if int(n) != n or n < 3:
        raise ParameterError(f"the criterion needs n >= 3, got n={n}")
    p = as_fraction(p)
    lam = as_fraction(lam)
    if p < 1:
        raise ParameterError(f"the criterion needs p >= 1, got p={float(p)}")
    coefficient = n * (Fraction(1) / (p + 1) - Fraction(1, 2)) + 1
    critical = Fraction(n + 2, n - 2)
    corollary = (p >= critical and lam >= 0) or (p < critical and lam <= 0)
    return NonexistenceVerdict(bool(-lam * coefficient >= 0), bool(corollary), coefficient)


# ----------------------------------------------------------------------
# slope fits
# ----------------------------------------------------------------------


@dataclass
class SlopeFit:
    """Log-log regression of ``values`` against ``samples``.

    ``conclusive`` needs at least 4 samples over at least one decade and
    R^2 >= 0.98; exponents are only asserted on conclusive fits."""

    samples: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    slope: float
    intercept: float
    target: float
    r_squared: float
    decades: float

    @property
    def deviation(self) -> float:
        return abs(self.slope - self.target) / abs(self.target)

    @property
    def conclusive(self) -> bool:
        return len(self.samples) >= 4 and self.decades >= 1.0 - 1e-9 and self.r_squared >= MIN_R_SQUARED

    def to_dict(self):
        return {'slope': self.slope, 'intercept': self.intercept, 'target': self.target,
                'deviation': self.deviation, 'r_squared': self.r_squared, 'decades': self.decades,
                'conclusive': self.conclusive, 'samples': len(self.samples)}


def fit_slope(samples, values, target) -> SlopeFit:
    """Least-squares line through ``(log samples, log values)``."""
    samples = np.asarray(samples, dtype=float)
    values = np.asarray(values, dtype=float)
    decades = float(np.log10(samples.max() / samples.min())) if len(samples) else 0.0
    if len(samples) < 2 or np.any(values <= 0):
        return SlopeFit(samples, values, float('nan'), float('nan'), float(target), 0.0, decades)
    x, y = np.log(samples), np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - float(np.sum((y - predicted) ** 2)) / total if total > 0 else 1.0
    return SlopeFit(samples, values, float(slope), float(intercept), float(target), r_squared, decades)


# ----------------------------------------------------------------------
# scaling law
# ----------------------------------------------------------------------


def smooth_bump(radius):
    """(1 - |x|^2/R^2)^3_+ as a radial profile of support radius ``radius``."""

    def profile(r):
        return np.clip(1.0 - (np.asarray(r) / radius) ** 2, 0.0, None) ** 3

    return profile


def scaling_experiment(mask: DomainMask, s, mu, ks=(1, 2, 4), radius=None, profile: Optional[Callable] = None,
                       workers=None):
    """Quotient parts of ``u_k(x) = k^{(n-2)/2} u(k(x - c))`` for each k.

    The local part ``‖∇u_k‖^2/‖u_k‖_HL^2`` is invariant under the critical
    rescaling; the fractional part scales like ``k^{2s-2}``.

    Args:
        mask (DomainMask): Domain; u is centred at its centre.
        s (float): Fractional order.
        mu (float): Riesz exponent.
        ks (tuple, optional): Scale factors. Defaults to (1, 2, 4).
        radius (float, optional): Support radius of u, 0.8·inradius by default.
        profile (callable, optional): Radial profile with support in ``[0, radius]``;
            the smooth bump by default.
        workers (int, optional): scipy.fft workers.

    Returns:
        tuple: ``(table, summary)``.

    Raises:
        ParameterError: If the support of some u_k leaves Ω."""
    n = mask.n
    ks = np.asarray(ks, dtype=float)
    radius = 0.8 * mask.inradius if radius is None else float(radius)
    if np.any(ks <= 0):
        raise ParameterError("scale factors must be positive")
    if radius / ks.min() >= mask.inradius:
        raise ParameterError(f"support radius {radius / ks.min():.4g} of u_k escapes the inscribed ball "
                             f"(radius {mask.inradius:.4g})")
    profile = smooth_bump(radius) if profile is None else profile
    form = MixedForm(mask, s, workers=workers)
    state = ChoquardState(mask, mu, workers)
    distance = mask.grid.radius(mask.center)

    rows = []
    for k in ks:
        u_k = mask.apply(k ** ((n - 2.0) / 2.0) * profile(k * distance))
        norm_sq = state.hl_norm(u_k) ** 2
        rows.append({'k': k, 'local_ratio': form.dirichlet_energy(u_k) / norm_sq,
                     'fractional_ratio': form.gagliardo_sq(u_k) / norm_sq})
    table = pd.DataFrame(rows)
    table['total'] = table['local_ratio'] + table['fractional_ratio']
    base = table.iloc[0]
    table['local_deviation'] = (table['local_ratio'] / base['local_ratio'] - 1.0).abs()
    table['fractional_scaling'] = table['fractional_ratio'] / base['fractional_ratio']
    table['fractional_target'] = (table['k'] / base['k']) ** (2.0 * s - 2.0)
    table['fractional_deviation'] = (table['fractional_scaling'] / table['fractional_target'] - 1.0).abs()
    summary = {
        'local_max_deviation': float(table['local_deviation'].max()),
        'fractional_max_deviation': float(table['fractional_deviation'].max()),
        'total_decreasing': bool(np.all(np.diff(table['total'].to_numpy()) < 0.0)),
    }
    return table, summary


# ----------------------------------------------------------------------
# bubble limit t -> 0
# ----------------------------------------------------------------------


def bubble_excess_exponent(n, s) -> float:
    """Exponent of G(V_t)^2 - ‖U‖^2 as t → 0 on a fixed bounded box.

    ``[U]_s`` is finite only for ``s > (4-n)/2``; below that the box seminorm of
    V_t decays like the truncation, ``t^{n-2}``. Both cases give
    ``min{n-2, 2-2s}``."""
    return float(min(n - 2.0, 2.0 - 2.0 * s))


def bubble_limit_experiment(n, s, ts=None, L=16.0, m=64, follow_scale=False, boxes=(4.0, 8.0, 16.0),
                            energy_m=96, energy=None, workers=None):
    """G(V_t)^2 = ‖U‖^2 + t^{2-2s}[U]_s^2 on whole-box grids.

    ‖U‖^2 is extrapolated from growing boxes as for the HLS constant
    (:func:`bubble_energy_estimate`). On the fixed grid the local part of V_t is
    Richardson-corrected with a second grid at 2m (local energies need no FFT),
    and the excess is measured against ``‖U‖^2 + a (L/t)^{2-n}``, the box-truncated
    whole-space energy with ``a`` from the same fit. With ``follow_scale`` the
    box shrinks with the bubble (half-width ``L·t``, same m) instead.

    Args:
        n (int): Dimension, at least 3.
        s (float): Fractional order.
        ts (list, optional): Scales, ``2^{-k}`` for k = 0..3 by default.
        L (float, optional): Box half-width (at t = 1 with ``follow_scale``).
        m (int, optional): Nodes per axis.
        follow_scale (bool, optional): Shrink the box with t.
        boxes (tuple, optional): Boxes for the ‖U‖^2 extrapolation.
        energy_m (int, optional): Nodes per axis for the ‖U‖^2 extrapolation.
        energy (HLSEstimate, optional): A precomputed ‖U‖^2 estimate; replaces
            ``boxes`` and ``energy_m``.
        workers (int, optional): scipy.fft workers.

    Returns:
        tuple: ``(table, summary)`` with the fitted decomposition ``a + b t^{2-2s}``
        and the log-log slope of the excess."""
    ts = np.asarray([2.0 ** -k for k in range(4)] if ts is None else ts, dtype=float)
    if np.any(ts <= 0):
        raise ParameterError("bubble scales must be positive")
    if energy is None:
        energy = bubble_energy_estimate(n, boxes, energy_m)
    u_norm = energy.value
    reference_grid = Grid(n, L, m)
    reference_form = MixedForm(DomainMask.whole_box(reference_grid), s, exterior='free', workers=workers)
    u_seminorm = reference_form.gagliardo_sq(bubble_field(reference_form.mask, 'V', masked=False))

    rows = []
    for t in tqdm(ts, desc='bubble limit', leave=False):
        grid = Grid(n, L * t, m) if follow_scale else reference_grid
        form = reference_form if grid is reference_grid else MixedForm(DomainMask.whole_box(grid), s,
                                                                         exterior='free', workers=workers)
        field_t = bubble_field(form.mask, 'V', t=t, masked=False)
        local, fractional = form.dirichlet_energy(field_t), form.gagliardo_sq(field_t)
        local_fine = bubble_energy(Grid(n, grid.L, 2 * m), t=t)
        local_refined = (4.0 * local_fine - local) / 3.0
        reference = u_norm + energy.truncation * (grid.L / t) ** (2.0 - n)
        rows.append({'t': t, 'L': grid.L, 'h': grid.h, 'local': local, 'local_fine': local_fine,
                     'local_refined': local_refined, 'fractional': fractional,
                     'g_sq': local_refined + fractional, 'truncated_reference': reference})
    table = pd.DataFrame(rows)

    powers = table['t'].to_numpy() ** (2.0 - 2.0 * s)
    design = np.column_stack([np.ones_like(powers), powers])
    a_fit, b_fit = np.linalg.lstsq(design, table['g_sq'].to_numpy(), rcond=None)[0]
    table['excess'] = table['g_sq'] - table['truncated_reference']
    table['predicted_excess'] = u_seminorm * powers
    table['excess_deviation'] = (table['excess'] / table['predicted_excess'] - 1.0).abs()
    target = 2.0 - 2.0 * s if follow_scale else bubble_excess_exponent(n, s)
    slope = fit_slope(table['t'], table['excess'], target)
    smallest = table.loc[table['t'].idxmin(), 'g_sq']
    summary = {
        'u_norm_sq': u_norm, 'u_norm_sq_error': energy.error, 'u_norm_truncation': energy.truncation,
        'u_seminorm_sq_box': u_seminorm, 'fit_a': float(a_fit), 'fit_b': float(b_fit),
        'slope': slope.to_dict(), 'limit_deviation': float(abs(smallest - u_norm) / u_norm),
        'follow_scale': follow_scale,
    }
    return table, summary


# ----------------------------------------------------------------------
# unattained infimum
# ----------------------------------------------------------------------


def infimum_trend(shape: Shape, n, s, mu, L, m_list, s_hat, method='lbfgs', max_iter=5000, workers=None):
    """S_{H,L}(0) minimizers under grid refinement, compared with Ŝ_{H,L,C}.

    At each m the λ = 0 quotient is minimised; the gap ``G(ψ)^2 - Ŝ`` is set
    against the seminorm ``[ψ]_s^2`` of the minimizer and its width. An infimum
    that is never attained shows as minimizers that narrow with h while the
    gap stays comparable to the seminorm. The trend is reported, not asserted.

    Args:
        shape (Shape): Domain.
        n (int): Dimension, at least 3.
        s (float): Fractional order.
        mu (float): Riesz exponent.
        L (float): Box half-width.
        m_list (list): Increasing node counts.
        s_hat (float): Extrapolated Ŝ_{H,L,C}.
        method (str, optional): Quotient minimiser.
        max_iter (int, optional): Budget per minimisation.
        workers (int, optional): scipy.fft workers.

    Returns:
        tuple: ``(table, summary)``; one row per m."""
    m_list = [int(m) for m in m_list]
    if len(m_list) < 2 or any(b <= a for a, b in zip(m_list, m_list[1:])):
        raise ParameterError("the refinement ladder needs at least two increasing m")
    params = ProblemParams(n, s, mu, p=1.0, lam=0.0)
    rows = []
    for m in tqdm(m_list, desc='infimum trend', leave=False):
        mask = build_domain(shape, Grid(n, L, m))
        problem = VariationalProblem(mask, params, workers)
        result = problem.quotient_minimize(0.0, method=method, max_iter=max_iter)
        psi = result.minimizer
        local, seminorm = problem.form.dirichlet_energy(psi), problem.form.gagliardo_sq(psi)
        width = effective_width(psi, mask.grid)
        gap = result.S - s_hat
        rows.append({'m': m, 'h': mask.grid.h, 'S': result.S, 'local': local, 'seminorm': seminorm,
                     'gap': gap, 'gap_over_seminorm': gap / seminorm, 'width': width,
                     'width_over_h': width / mask.grid.h, 'el_residual': result.el_residual,
                     'converged': result.converged})
    table = pd.DataFrame(rows)

    gaps, widths = table['gap'].to_numpy(), table['width'].to_numpy()
    summary = {
        's_hat': float(s_hat),
        'gap_positive': bool(np.all(gaps > 0.0)),
        'gap_shrinking': bool(np.all(np.diff(gaps) < 0.0)),
        'width_shrinking': bool(np.all(np.diff(widths) < 0.0)),
        'min_gap_over_seminorm': float(table['gap_over_seminorm'].min()),
    }
    logger.info(f"infimum trend over m={m_list}: gaps {gaps.tolist()}, widths {widths.tolist()}")
    return table, summary


# ----------------------------------------------------------------------
# v_eps asymptotics
# ----------------------------------------------------------------------


def lemma45_dimension_condition(n, s, mu, p):
    """Dimension threshold under which the mountain-pass level lies below the compactness level.

    ``n > max{min{2(p+3)/(p+1), 2 + μ/(p+1), 2(1 + (2-2s)/(p-1))}, 2(p+1)/p}``.

    Returns:
        tuple: ``(holds, threshold)`` with the threshold as a Fraction."""
    p, s, mu = as_fraction(p), as_fraction(s), as_fraction(mu)
    if p <= 1:
        raise ParameterError(f"the dimension condition needs p > 1, got p={float(p)}")
    inner = min(2 * (p + 3) / (p + 1), 2 + mu / (p + 1), 2 * (1 + (2 - 2 * s) / (p - 1)))
    threshold = max(inner, 2 * (p + 1) / p)
    return bool(n > threshold), threshold


def hls_ratio_of_bubble(n, mu, L=8.0, m=64, workers=None) -> float:
    """C(n,μ): the HLS quotient of V on the whole box ``[-L, L]^n``."""
    mask = DomainMask.whole_box(Grid(n, L, m))
    return ChoquardState(mask, mu, workers).hls_ratio(bubble_field(mask, 'V', masked=False))


def _fit_power_limit(eps, values, target):
    """Fit ``a + b ε^c``; returns (a, c, r_squared) or None when the fit fails."""
    shift, scale = float(values.mean()), float(values.std()) or 1.0
    y = (values - shift) / scale
    start = (y[0], (y[-1] - y[0]) / max(eps[-1] ** target - eps[0] ** target, 1e-300), target)
    try:
        params, _ = optimize.curve_fit(lambda e, a, b, c: a + b * e ** c, eps, y, p0=start, maxfev=20000)
    except (RuntimeError, optimize.OptimizeWarning) as e:
        logger.warning(f"power-law limit fit failed: {e}")
        return None
    predicted = params[0] + params[1] * eps ** params[2]
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - float(np.sum((y - predicted) ** 2)) / total if total > 0 else 1.0
    return shift + scale * float(params[0]), float(params[2]), r_squared


def radial_bubble_terms(s, p, eps, delta_c, outer) -> Dict[str, float]:
    """‖∇v_ε‖^2, [v_ε]_s^2 and |v_ε|_{p+1}^{p+1} of the n = 3 bubble by radial quadrature.

    With ``W = V_ε = c ε^{1/2} (ε^2 + r^2)^{-1/2}``, ``c = 3^{1/4}``, and η the
    quintic cutoff from ``δ = delta_c`` to ``R = outer``:

    * ``‖∇v_ε‖^2 = S^{3/2} - 4π ∫_δ^∞ r^2 W'^2 + 4π ∫_δ^R r^2 ((ηW)')^2``;
    * ``[v_ε]_s^2 = 8 ∫_0^∞ k^{2s} G(k)^2 dk`` for the sine transform
      ``G(k) = ∫_0^R r v_ε sin(kr) dr``, evaluated as
      ``c ε^{1/2} (ε K_1(kε) - g(R) cos(kR)/k) - ∫_δ^R (1-η) r W sin(kr) dr`` with
      ``g(r) = r (r^2 + ε^2)^{-1/2}``, up to a remainder below ``c ε^{5/2} / (2 R^2 k)``;
    * the Lebesgue term on pieces refined geometrically towards the origin.

    No grid is involved, so ε can go far below any mesh width.

    Args:
        s (float): Fractional order.
        p (float): Exponent of the power term.
        eps (float): Bubble scale.
        delta_c (float): Plateau radius of η.
        outer (float): Support radius of η.

    Returns:
        dict: ``grad_sq``, ``seminorm_sq`` and ``lp``.

    Raises:
        ParameterError: For s outside (0, 1) or unless ``0 < eps < delta_c < outer``."""
    if not 0.0 < s < 1.0:
        raise ParameterError(f"fractional order s={s} must lie in (0, 1)")
    if not 0.0 < eps < delta_c < outer:
        raise ParameterError(f"the radial bubble needs 0 < eps={eps} < delta_c={delta_c} < outer={outer}")
    a, b, e2 = float(delta_c), float(outer), float(eps) ** 2
    amplitude = 3.0 ** 0.25 * np.sqrt(eps)

    def cut(r):
        # scalar form of quintic_cutoff
        tau = min(max((r - a) / (b - a), 0.0), 1.0)
        return 1.0 - tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau ** 2)

    def cut_slope(r):
        tau = min(max((r - a) / (b - a), 0.0), 1.0)
        return -30.0 * tau ** 2 * (1.0 - tau) ** 2 / (b - a)

    def bubble(r):
        return amplitude / np.sqrt(e2 + r * r)

    def bubble_slope(r):
        return -amplitude * r / (e2 + r * r) ** 1.5

    def quad(f, lo, hi, epsabs=0.0, epsrel=1e-11, **kwargs):
        return integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=200, **kwargs)[0]

    def transform(k):
        shoulder = quad(lambda r: (1.0 - cut(r)) * r * bubble(r), a, b, epsabs=1e-13 * amplitude / k,
                        weight='sin', wvar=k)
        return amplitude * (eps * special.k1(k * eps) - b / np.sqrt(b * b + e2) * np.cos(k * b) / k) - shoulder

    def density(k):
        return k ** (2.0 * s) * transform(k) ** 2

    with warnings.catch_warnings():
        warnings.simplefilter('ignore', integrate.IntegrationWarning)
        tail = quad(lambda r: (r * bubble_slope(r)) ** 2, a, np.inf)
        shell = quad(lambda r: (r * (cut(r) * bubble_slope(r) + cut_slope(r) * bubble(r))) ** 2, a, b)
        grad_sq = sobolev_bubble_norms(3) + 4.0 * np.pi * (shell - tail)

        edges = [0.0] + [r for r in eps * 10.0 ** np.arange(16) if r < a] + [a, b]
        lp = 4.0 * np.pi * sum(quad(lambda r: r * r * (cut(r) * bubble(r)) ** (p + 1.0), lo, hi)
                               for lo, hi in zip(edges[:-1], edges[1:]))

        # one chunk per half-period of cos(kR) while the cutoff terms still oscillate
        period = np.pi / b
        k_lo, k_mid = 1e-3 / b, 24.0 * period
        k_hi = max(40.0 / eps, 2.0 * k_mid)
        nodes = np.unique(np.concatenate([np.geomspace(k_lo, period, 8), np.arange(period, k_mid, period),
                                          np.geomspace(k_mid, k_hi, 24)]))
        head = k_lo * density(k_lo) / (2.0 * s + 3.0)
        body = sum(quad(density, lo, hi, epsrel=1e-7) for lo, hi in zip(nodes[:-1], nodes[1:]))
    return {'grad_sq': float(grad_sq), 'seminorm_sq': float(8.0 * (head + body)), 'lp': float(lp)}


def lemma45_asymptotics(mask: DomainMask, s, mu, p, eps_list, delta_c=None, s_hat=None, c_bubble=None,
                        method='grid', workers=None):
    """Orders of ‖∇v_ε‖^2, [v_ε]_s^2 and |v_ε|_{p+1}^{p+1} as ε → 0.

    Targets: n-2 for ``‖∇v_ε‖^2`` minus its fitted limit, ``ν = min{n-2, 2-2s}``
    for the squared seminorm, and ``n - (n-2)(p+1)/2`` for the Lebesgue term.
    When ``s_hat`` and ``c_bubble`` are given, the fitted limit is compared with
    ``C^{(n-2)/(2n-μ)·n/2} Ŝ^{n/2}``.

    The 'grid' method evaluates v_ε on the mask's lattice, which confines ε to
    ``[4h, δ_c/4]``. The 'radial' method integrates the same profile
    with :func:`radial_bubble_terms` on ``0 < ε <= δ_c/4``, with the cutoff
    vanishing at the inradius as on the grid.

    Args:
        mask (DomainMask): Domain.
        s (float): Fractional order.
        mu (float): Riesz exponent.
        p (float): Exponent of the power term, p > 1.
        eps_list (list): At least four scales.
        delta_c (float, optional): Plateau radius of the cutoff, half the inradius by default.
        s_hat (float, optional): Extrapolated Ŝ_{H,L,C}.
        c_bubble (float, optional): C(n,μ) from :func:`hls_ratio_of_bubble`.
        method (str, optional): 'grid' or 'radial'. Defaults to 'grid'.
        workers (int, optional): scipy.fft workers.

    Returns:
        tuple: ``(table, summary)``.

    Raises:
        ParameterError: For fewer than four ε, ε outside the method's window or an
            unknown method."""
    n, h = mask.n, mask.grid.h
    compute_exponents(n, mu)
    if method not in ('grid', 'radial'):
        raise ParameterError(f"unknown lemma45 method '{method}', expected 'grid' or 'radial'")
    delta_c = 0.5 * mask.inradius if delta_c is None else float(delta_c)
    eps = np.sort(np.asarray(eps_list, dtype=float))
    if len(eps) < 4:
        raise ParameterError(f"at least four ε values are needed, got {len(eps)}")
    lower = 4.0 * h if method == 'grid' else 0.0
    if eps[0] <= 0.0 or eps[0] < lower - 1e-12 or eps[-1] > delta_c / 4.0 + 1e-12:
        raise ParameterError(f"ε range [{eps[0]:.4g}, {eps[-1]:.4g}] must lie in ({lower:.4g}, δ_c/4 = "
                             f"{delta_c / 4:.4g}]; refine m, enlarge the domain or use the radial method")
    rows = []
    if method == 'grid':
        form = MixedForm(mask, s, workers=workers)
        for e in tqdm(eps, desc='v_eps', leave=False):
            v = bubble_field(mask, 'v_eps', eps=e, delta_c=delta_c)
            rows.append({'eps': e, 'grad_sq': form.dirichlet_energy(v), 'seminorm_sq': form.gagliardo_sq(v),
                         'lp': float(np.sum(np.abs(v) ** (p + 1.0)) * mask.grid.cell_volume)})
    else:
        for e in tqdm(eps, desc='v_eps (radial)', leave=False):
            rows.append({'eps': e, **radial_bubble_terms(s, p, e, delta_c, mask.inradius)})
    table = pd.DataFrame(rows)

    nu = min(n - 2.0, 2.0 - 2.0 * s)
    limit_fit = _fit_power_limit(eps, table['grad_sq'].to_numpy(), n - 2.0)
    limit = None if limit_fit is None else limit_fit[0]
    gradient = (fit_slope(eps, table['grad_sq'] - limit, n - 2.0) if limit is not None
                else SlopeFit(eps, table['grad_sq'].to_numpy(), float('nan'), float('nan'), n - 2.0, 0.0, 0.0))
    seminorm = fit_slope(eps, table['seminorm_sq'], nu)
    lebesgue = fit_slope(eps, table['lp'], n - (n - 2.0) * (p + 1.0) / 2.0)

    prediction = None
    if s_hat is not None and c_bubble is not None:
        prediction = c_bubble ** ((n - 2.0) / (2.0 * n - mu) * n / 2.0) * s_hat ** (n / 2.0)
    holds, threshold = lemma45_dimension_condition(n, s, mu, p)
    summary = {
        'method': method, 'nu': nu, 'limit': limit,
        'limit_fit_exponent': None if limit_fit is None else limit_fit[1], 'prediction': prediction,
        'limit_deviation': None if prediction is None or limit is None else abs(limit - prediction) / prediction,
        'gradient': gradient.to_dict(), 'seminorm': seminorm.to_dict(), 'lebesgue': lebesgue.to_dict(),
        'dimension_condition': holds, 'dimension_threshold': threshold,
    }
    return table, summary


# ----------------------------------------------------------------------
# brute-force oracles
# ----------------------------------------------------------------------


class OracleSuite:
    """FFT paths against O(M^2) double sums on seeded random 8^n instances.

    Args:
        seed (int, optional): Seed of the random fields. Defaults to 0.
        tamper (callable, optional): Receives each kernel table before the
            symmetry check and returns the table to check.
        s (float, optional): Fractional order. Defaults to 0.5.
        n_pairs (int, optional): Random pairs per adjoint/gradient check. Defaults to 10.
        tolerances (dict, optional): Overrides of :attr:`TOLERANCES`.

    Examples:
        >>> suite = OracleSuite(seed=7)
        >>> table = suite.run()
        >>> suite.passed
        True"""

    TOLERANCES = {
        'riesz_fft': 1e-10,
        'hl_fft': 1e-10,
        'gagliardo_fft': 1e-10,
        'operator_fft': 1e-10,
        'self_adjoint': 1e-11,
        'form_operator': 1e-10,
        'gradient_fd': 1e-6,
        'kernel_symmetry': 0.0,
    }

    def __init__(self, seed=0, tamper: Optional[Callable] = None, s=0.5, n_pairs=10, m=8, tolerances=None):
        self.seed = seed
        self.tamper = tamper
        self.s = s
        self.n_pairs = n_pairs
        self.m = m
        self.tolerances = {**self.TOLERANCES, **(tolerances or {})}
        self.results: List[Dict] = []

    @property
    def passed(self) -> bool:
        return bool(self.results) and all(row['passed'] for row in self.results)

    def failed_checks(self):
        return sorted({f"{row['check']} (n={row['n']})" for row in self.results if not row['passed']})

    def _record(self, check, n, deviation):
        tolerance = self.tolerances[check]
        self.results.append({'check': check, 'n': n, 'max_deviation': float(deviation),
                             'tolerance': tolerance, 'passed': bool(deviation <= tolerance)})

    def run(self) -> pd.DataFrame:
        """Run every oracle for n = 1, 2, 3 and return one row per check."""
        self.results = []
        rng = np.random.default_rng(self.seed)
        for n in tqdm((1, 2, 3), desc='oracles', leave=False):
            grid = Grid(n, 1.0, self.m)
            mask = build_domain(Shape.box(0.5), grid)
            self._run_dimension(mask, n / 2.0, rng)
        table = pd.DataFrame(self.results)
        if not self.passed:
            logger.error(f"oracle failures: {', '.join(self.failed_checks())}")
        return table

    def _pair_lookup(self, table, offsets):
        size = 2 * table.grid.m
        return table.values[tuple(np.moveaxis(offsets % size, -1, 0))]

    def _run_dimension(self, mask, mu, rng):
        grid = mask.grid
        n, h, cell = grid.n, grid.h, grid.cell_volume
        index = np.indices(grid.shape).reshape(n, -1).T
        offsets = index[:, None, :] - index[None, :, :]
        distance = h * np.sqrt(np.sum(offsets ** 2, axis=-1))
        inside = mask.inside.reshape(-1)

        # Riesz potential
        rtable = riesz_table(grid, mu)
        kernel = np.full(distance.shape, rtable.center_value)
        np.power(distance, -mu, out=kernel, where=distance > 0)
        state = ChoquardState(mask, mu)
        w = mask.apply(rng.uniform(0.0, 1.0, grid.shape))
        direct = cell * kernel @ w.reshape(-1)
        fast = state.riesz_potential(w).reshape(-1)
        self._record('riesz_fft', n, np.max(np.abs(direct - fast)) / max(1.0, np.max(np.abs(direct))))

        if n >= 3:
            u = mask.apply(rng.uniform(-1.0, 1.0, grid.shape))
            density = np.abs(u.reshape(-1)) ** state.q
            direct_hl = cell ** 2 * density @ kernel @ density
            self._record('hl_fft', n, abs(direct_hl - state.hl_term(u)[0]) / abs(direct_hl))

        # Gagliardo form and operator
        gtable = gagliardo_table(grid, self.s)
        constant = frac_constant(n, self.s).value
        weights = self._pair_lookup(gtable, offsets)
        partner_sum = weights.sum(axis=1)
        form = MixedForm(mask, self.s)
        u = mask.apply(rng.uniform(-1.0, 1.0, grid.shape))
        flat = u.reshape(-1)
        pairs = 0.5 * cell ** 2 * np.sum((flat[:, None] - flat[None, :]) ** 2 * weights)
        outside = cell ** 2 * np.sum(flat ** 2 * (gtable.total - partner_sum)) + gtable.tail * cell * np.sum(flat ** 2)
        direct_sq = constant * (pairs + outside)
        self._record('gagliardo_fft', n, abs(direct_sq - form.gagliardo_sq(u)) / abs(direct_sq))

        links = (np.sum(np.abs(offsets), axis=-1) == 1).astype(float)
        matrix = (2.0 * n * np.eye(len(flat)) - links) / h ** 2
        matrix += constant * ((cell * gtable.total + gtable.tail) * np.eye(len(flat)) - cell * weights)
        matrix = matrix * inside[:, None] * inside[None, :]
        direct_op = matrix @ flat
        fast_op = form.apply(u).reshape(-1)
        self._record('operator_fft', n, np.max(np.abs(direct_op - fast_op)) / max(1.0, np.max(np.abs(direct_op))))

        # symmetry of the operator and consistency with the form
        adjoint, polar = 0.0, 0.0
        for _ in range(self.n_pairs):
            u = mask.apply(rng.uniform(-1.0, 1.0, grid.shape))
            v = mask.apply(rng.uniform(-1.0, 1.0, grid.shape))
            Lu_v, u_Lv = form.inner(form.apply(u), v), form.inner(u, form.apply(v))
            scale = np.sqrt(form.form_sq(u) * form.form_sq(v))
            adjoint = max(adjoint, abs(Lu_v - u_Lv) / scale)
            polar = max(polar, abs(Lu_v - form.bilinear(u, v)) / scale,
                        abs(form.inner(form.apply(u), u) - form.mixed_norm_sq(u)) / form.form_sq(u))
        self._record('self_adjoint', n, adjoint)
        self._record('form_operator', n, polar)

        if n >= 3:
            self._record('gradient_fd', n, self._gradient_check(mask, mu, rng))

        for table in (rtable, gtable):
            checked = table if self.tamper is None else self.tamper(table)
            self._record('kernel_symmetry', n, np.max(np.abs(checked.values - checked.reflected())))

    def _gradient_check(self, mask, mu, rng, step=1e-5):
        lambda_1 = first_eigen_mixed(mask, self.s).eigenvalue
        worst = 0.0
        for p, lam in ((1.0, 0.5 * lambda_1), (2.0, 1.0)):
            problem = VariationalProblem(mask, ProblemParams(mask.n, self.s, mu, p, lam))
            for _ in range(self.n_pairs):
                u = mask.apply(rng.uniform(-1.0, 1.0, mask.grid.shape))
                phi = mask.apply(rng.uniform(-1.0, 1.0, mask.grid.shape))
                difference = (problem.energy(u + step * phi).J - problem.energy(u - step * phi).J) / (2.0 * step)
                analytic = problem.form.inner(problem.grad_energy(u), phi)
                worst = max(worst, abs(difference - analytic) / max(abs(analytic), 1e-300))
        return worst
