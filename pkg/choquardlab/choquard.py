"""Choquard (Hartree) machinery: Riesz potential, HL norm and the bubble family.

The critical exponents are ``2* = 2n/(n-2)`` and ``2μ* = (2n-μ)/(n-2)``; the HL
norm is ``‖u‖_HL = (∬ |u(x)|^{2μ*} |u(y)|^{2μ*} / |x-y|^μ)^{1/(2·2μ*)}``.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List

import numpy as np
import pandas as pd
from scipy import special

from choquardlab.geometry import DomainMask, Grid, build_grid
from choquardlab.kernels import riesz_table
from choquardlab.operators import MixedForm
from choquardlab.utility_functions import ParameterError

logger = logging.getLogger(__name__)

BUBBLE_VARIANTS = ('U', 'V', 'v_eps')


def as_fraction(value) -> Fraction:
    """Exact rational for ints, Fractions and decimal floats (0.1 -> 1/10)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return Fraction(repr(float(value)))


def compute_exponents(n, mu):
    """Critical exponents (2*, 2μ*) as exact rationals.

    Args:
        n (int): Dimension, at least 3.
        mu (float): Riesz exponent in (0, n).

    Returns:
        tuple: ``(Fraction(2n, n-2), Fraction(2n-μ, n-2))``.

    Raises:
        ParameterError: If n < 3 or μ is outside (0, n).

    Examples:
        >>> compute_exponents(3, 1)
        (Fraction(6, 1), Fraction(5, 1))"""
    if int(n) != n or n < 3:
        raise ParameterError(f"critical exponents need n >= 3, got n={n}")
    mu = as_fraction(mu)
    if not 0 < mu < n:
        raise ParameterError(f"Riesz exponent mu={float(mu)} must lie in (0, n={n})")
    return Fraction(2 * n, n - 2), Fraction(2 * n, 1) / (n - 2) - mu / (n - 2)


def sobolev_constant(n):
    """Sharp Sobolev constant S = π n (n-2) (Γ(n/2)/Γ(n))^{2/n}."""
    return np.pi * n * (n - 2) * (special.gamma(n / 2.0) / special.gamma(n)) ** (2.0 / n)


def sobolev_bubble_norms(n):
    """‖∇V‖^2 = |V|_{2*}^{2*} = S^{n/2} for V = [n(n-2)]^{(n-2)/4} (1+|x|^2)^{-(n-2)/2}."""
    return sobolev_constant(n) ** (n / 2.0)


def bubble_gagliardo_sq(s):
    """[V]_s^2 over R^3 for 1/2 < s <= 1.

    The sine transform of ``r V(r)`` is ``3^{1/4} K_1(k)``, which gives
    ``[V]_s^2 = 2 √(3π) Γ(s+3/2) Γ(s-1/2) Γ(s+1/2) / Γ(s+1)``; at s = 1 this is
    ``‖∇V‖^2 = S^{3/2}``. For s <= 1/2 the seminorm is infinite.

    Raises:
        ParameterError: For s outside (1/2, 1]."""
    if not 0.5 < s <= 1.0:
        raise ParameterError(f"[V]_s is finite only for 1/2 < s <= 1, got s={s}")
    gammas = special.gamma(s + 1.5) * special.gamma(s - 0.5) * special.gamma(s + 0.5) / special.gamma(s + 1.0)
    return float(2.0 * np.sqrt(3.0 * np.pi) * gammas)


class ChoquardState:
    """Riesz potential and HL norm on a domain mask.

    Attributes:
        mask (DomainMask): Domain (or whole-box mask).
        mu (float): Riesz exponent.
        table (KernelTable): The |z|^{-μ} table.
        critical (Fraction): 2* (None when n < 3).
        choquard_exponent (Fraction): 2μ* (None when n < 3)."""

    def __init__(self, mask: DomainMask, mu, workers=None):
        self.mask = mask
        self.grid = mask.grid
        self.mu = float(mu)
        self.workers = workers
        self.table = riesz_table(self.grid, self.mu)
        self.critical = None
        self.choquard_exponent = None
        if self.grid.n >= 3:
            self.critical, self.choquard_exponent = compute_exponents(self.grid.n, self.mu)

    @property
    def q(self) -> float:
        """2μ* as a float."""
        if self.choquard_exponent is None:
            raise ParameterError(f"the HL norm needs n >= 3, grid has n={self.grid.n}")
        return float(self.choquard_exponent)

    def riesz_potential(self, w) -> np.ndarray:
        """D(x) = Σ_y K(x-y) w(y) h^n for every node of the box.

        Args:
            w (np.ndarray): Density on the grid (here ``|u|^{2μ*}``), zero outside Ω.

        Returns:
            np.ndarray: The potential, evaluated on the whole box."""
        w = self.mask.apply(np.asarray(w, dtype=float))
        return self.grid.cell_volume * self.table.convolve(w, self.workers)

    def hl_term(self, u):
        """Double integral ∬ |u|^{2μ*} |u|^{2μ*} / |x-y|^μ and the potential D[u].

        Returns:
            tuple: ``(value, D)``."""
        u = self.mask.apply(np.asarray(u, dtype=float))
        density = np.abs(u) ** self.q
        potential = self.riesz_potential(density)
        return float(np.sum(density * potential) * self.grid.cell_volume), potential

    def hl_norm(self, u) -> float:
        """‖u‖_HL = (hl_term)^{1/(2·2μ*)}."""
        value, _ = self.hl_term(u)
        return value ** (1.0 / (2.0 * self.q))

    def choquard_force(self, u, potential=None) -> np.ndarray:
        """D[u] |u|^{2μ*-2} u, the Choquard nonlinearity."""
        u = self.mask.apply(np.asarray(u, dtype=float))
        if potential is None:
            potential = self.riesz_potential(np.abs(u) ** self.q)
        return self.mask.apply(potential * np.sign(u) * np.abs(u) ** (self.q - 1.0))

    def lebesgue_norm(self, u, exponent) -> float:
        u = self.mask.apply(np.asarray(u, dtype=float))
        return float(np.sum(np.abs(u) ** exponent) * self.grid.cell_volume) ** (1.0 / exponent)

    def hls_ratio(self, u) -> float:
        """∬ |u|^{2μ*}|u|^{2μ*}|x-y|^{-μ} / |u|_{2*}^{2·2μ*}; at the bubble this is C(n,μ)."""
        value, _ = self.hl_term(u)
        return value / self.lebesgue_norm(u, float(self.critical)) ** (2.0 * self.q)


def bubble_profile(n, r):
    """V as a function of |x|: [n(n-2)]^{(n-2)/4} (1+r^2)^{-(n-2)/2}."""
    if n < 3:
        raise ParameterError(f"the bubble profile needs n >= 3, got n={n}")
    return (n * (n - 2.0)) ** ((n - 2.0) / 4.0) * (1.0 + np.asarray(r, dtype=float) ** 2) ** (-(n - 2.0) / 2.0)


def quintic_cutoff(r, inner, outer):
    """Radial C^2 cutoff: 1 for r <= inner, 0 for r >= outer, quintic smoothstep between."""
    if not 0.0 < inner < outer:
        raise ParameterError(f"cutoff radii must satisfy 0 < inner={inner} < outer={outer}")
    tau = np.clip((np.asarray(r, dtype=float) - inner) / (outer - inner), 0.0, 1.0)
    return 1.0 - tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau ** 2)


def bubble_field(mask: DomainMask, variant='V', t=1.0, x0=None, eps=None, delta_c=None, masked=True):
    """Nodal values of a bubble.

    ``U`` and ``V`` are the same profile (the constant in U is fixed to the V
    normalisation) evaluated as ``V_{t,x0}(x) = t^{(2-n)/2} V((x-x0)/t)``.
    ``v_eps`` is ``η V_ε`` centred at the domain centre, with η the quintic
    cutoff equal to 1 on ``B_{δ_c}`` and 0 outside the inscribed ball.

    Args:
        mask (DomainMask): Domain (or the whole-box mask).
        variant (str): 'U', 'V' or 'v_eps'.
        t (float): Scale for U/V.
        x0 (array-like, optional): Centre for U/V, origin by default.
        eps (float): Scale for v_eps.
        delta_c (float, optional): Plateau radius of η, half the inradius by default.
        masked (bool): Zero U/V outside Ω (v_eps is always masked).

    Returns:
        np.ndarray: The field on the grid.

    Raises:
        ParameterError: For an unknown variant, t <= 0, eps <= 0 or n < 3."""
    if variant not in BUBBLE_VARIANTS:
        raise ParameterError(f"unknown bubble variant '{variant}', expected one of {BUBBLE_VARIANTS}")
    grid = mask.grid
    n = grid.n
    if variant == 'v_eps':
        if eps is None or not eps > 0:
            raise ParameterError(f"v_eps needs eps > 0, got {eps}")
        radius = grid.radius(mask.center)
        outer = mask.inradius
        inner = 0.5 * outer if delta_c is None else float(delta_c)
        values = quintic_cutoff(radius, inner, outer) * eps ** ((2.0 - n) / 2.0) * bubble_profile(n, radius / eps)
        return mask.apply(values)
    if not t > 0:
        raise ParameterError(f"bubble scale t={t} must be positive")
    center = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    radius = grid.radius(center)
    values = t ** ((2.0 - n) / 2.0) * bubble_profile(n, radius / t)
    return mask.apply(values) if masked else values


@dataclass
class HLSEstimate:
    """A whole-space bubble quantity extrapolated from growing boxes.

    Attributes:
        value (float): Extrapolated value.
        error (float): Model-comparison error estimate.
        table (pd.DataFrame): Per-box values.
        monotone (bool): Whether the sequence moves one way.
        warnings (list): Diagnostic messages.
        truncation (float): Fitted coefficient of L^{2-n}, so the value on a box
            of half-width L is about ``value + truncation · L^{2-n}``."""

    value: float
    error: float
    table: pd.DataFrame
    monotone: bool
    warnings: List[str] = field(default_factory=list)
    truncation: float = 0.0

    def to_dict(self):
        return {'value': self.value, 'error': self.error, 'monotone': self.monotone, 'warnings': self.warnings,
                'truncation': self.truncation}


def bubble_quotient(grid: Grid, mu, t=1.0, x0=None, workers=None) -> float:
    """‖∇V_{t,x0}‖^2 / ‖V_{t,x0}‖_HL^2 on the whole box of ``grid``."""
    mask = DomainMask.whole_box(grid)
    form = MixedForm(mask, s=None, local=True, fractional=False, exterior='free', workers=workers)
    state = ChoquardState(mask, mu, workers)
    bubble = bubble_field(mask, 'V', t=t, x0=x0, masked=False)
    return form.dirichlet_energy(bubble) / state.hl_norm(bubble) ** 2


def bubble_energy(grid: Grid, t=1.0) -> float:
    """‖∇V_t‖^2 on the whole box of ``grid``."""
    mask = DomainMask.whole_box(grid)
    form = MixedForm(mask, s=None, local=True, fractional=False, exterior='free')
    return form.dirichlet_energy(bubble_field(mask, 'V', t=t, masked=False))


def _extrapolate_boxes(n, boxes, m, evaluate, column):
    """Fit ``Q(L, h) = Q* + a L^{2-n} + b h^2`` to ``evaluate(grid)`` over the boxes.

    The error is the change of Q* when the h^2 term is dropped and only the
    two largest boxes are used."""
    boxes = sorted(float(L) for L in boxes)
    if len(boxes) < 2:
        raise ParameterError("at least two boxes are needed to extrapolate")
    rows = []
    for L in boxes:
        grid = build_grid(n, L, m)
        value = evaluate(grid)
        rows.append({'L': L, 'm': m, 'h': grid.h, column: value})
        logger.info(f"{column} L={L:g}, m={m}: {value:.10g}")
    table = pd.DataFrame(rows)

    L_values = table['L'].to_numpy()
    h_values = table['h'].to_numpy()
    values = table[column].to_numpy()
    truncation = L_values ** (2.0 - n)
    two_term = np.column_stack([np.ones(2), truncation[-2:]])
    reduced, reduced_slope = np.linalg.lstsq(two_term, values[-2:], rcond=None)[0]
    if len(boxes) >= 3:
        design = np.column_stack([np.ones_like(L_values), truncation, h_values ** 2])
        extrapolated, slope = np.linalg.lstsq(design, values, rcond=None)[0][:2]
        error = abs(extrapolated - reduced)
    else:
        extrapolated, slope = reduced, reduced_slope
        error = abs(reduced - values[-1])
    extrapolated, slope, error = float(extrapolated), float(slope), float(error)

    steps = np.diff(values)
    monotone = bool(np.all(steps >= 0) or np.all(steps <= 0))
    warnings = []
    if not monotone:
        message = f"non-monotone {column} sequence {values.tolist()}; extrapolation is unreliable"
        logger.warning(message)
        warnings.append(message)
    table['extrapolated'] = extrapolated
    return HLSEstimate(extrapolated, error, table, monotone, warnings, slope)


def hls_constant_estimate(n, mu, boxes=(4.0, 8.0, 16.0), m=64, workers=None) -> HLSEstimate:
    """Estimate S_{H,L,C} from bubble quotients on growing boxes.

    The quotient ``‖∇V‖^2/‖V‖_HL^2`` is evaluated on the whole box ``[-L, L]^n``
    for each L at fixed m and fitted as ``Q = Q* + a L^{2-n} + b h^2``
    (truncation of the gradient tail plus second-order discretisation). The
    error estimate is the change of Q* when the h^2 term is dropped and only
    the two largest boxes are used.

    Args:
        n (int): Dimension, at least 3.
        mu (float): Riesz exponent.
        boxes (tuple, optional): Box half-widths. Defaults to (4, 8, 16).
        m (int, optional): Nodes per axis. Defaults to 64.
        workers (int, optional): scipy.fft workers.

    Returns:
        HLSEstimate: The extrapolated value, its error and the per-box table."""
    compute_exponents(n, mu)
    return _extrapolate_boxes(n, boxes, m, lambda grid: bubble_quotient(grid, mu, workers=workers), 'quotient')


def bubble_energy_estimate(n, boxes=(4.0, 8.0, 16.0), m=96) -> HLSEstimate:
    """Estimate ‖∇U‖^2 over R^n with the same box protocol as the HLS constant.

    Only the local energy is evaluated, so no FFT is involved and m can be
    larger than for the quotient. The continuum value is S^{n/2}
    (:func:`sobolev_bubble_norms`).

    Args:
        n (int): Dimension, at least 3.
        boxes (tuple, optional): Box half-widths. Defaults to (4, 8, 16).
        m (int, optional): Nodes per axis. Defaults to 96.

    Returns:
        HLSEstimate: The extrapolated energy, its error and the per-box table."""
    if int(n) != n or n < 3:
        raise ParameterError(f"the bubble energy needs n >= 3, got n={n}")
    return _extrapolate_boxes(int(n), boxes, m, bubble_energy, 'energy')
