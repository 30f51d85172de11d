"""Normalising constant C(n,s) and tabulated translation-invariant kernels.

Tables live in the wrapped FFT layout of a ``(2m)^n`` array: the entry for the
lattice offset ``k`` (``|k_i| <= m-1``) sits at index ``k mod 2m`` and the
slice at index ``m`` is zero. Zero-padding a field to ``(2m)^n`` then turns the
circular FFT product into the exact linear convolution over the box.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import integrate, special

from choquardlab.geometry import Grid
from choquardlab.utility_functions import ParameterError, QuadratureError

logger = logging.getLogger(__name__)

QUAD_RTOL = 1e-8
NEAR_FIELD_RADIUS = 16.0


def _check_order(s):
    if not 0.0 < s < 1.0:
        raise ParameterError(f"fractional order s={s} must lie in (0, 1)")


def sphere_area(n):
    """|S^{n-1}| = 2 pi^{n/2} / Gamma(n/2)."""
    return 2.0 * np.pi ** (n / 2.0) / special.gamma(n / 2.0)


@dataclass(frozen=True)
class FracConstant:
    """C(n,s) = (∫ (1 - cos z_1) / |z|^{n+2s} dz)^{-1}.

    Attributes:
        n (int): Dimension.
        s (float): Fractional order.
        value (float): The constant.
        relerr (float): Relative error estimate propagated from the quadratures.
        closed_form (float): The Gamma-function expression, kept for comparison."""

    n: int
    s: float
    value: float
    relerr: float
    closed_form: float


def frac_constant_closed_form(n, s):
    """2^{2s} s Γ(n/2+s) / (π^{n/2} Γ(1-s))."""
    return 4.0 ** s * s * special.gamma(n / 2.0 + s) / (np.pi ** (n / 2.0) * special.gamma(1.0 - s))


def _cos_remainder(t, s):
    # (t^2/2 - 1 + cos t) t^{-1-2s}, series form near 0 where the bracket cancels
    if t < 1e-2:
        t2 = t * t
        bracket = t2 * t2 * (1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0)
    else:
        bracket = 0.5 * t * t - 1.0 + np.cos(t)
    return bracket * t ** (-1.0 - 2.0 * s)


@lru_cache(maxsize=64)
def frac_constant(n, s) -> FracConstant:
    """Compute C(n,s) by quadrature of its defining integral.

    The transverse directions integrate out in closed form,
    ``∫_{R^{n-1}} (t^2 + |w|^2)^{-(n+2s)/2} dw = |t|^{-1-2s} A(n,s)`` with
    ``A = π^{(n-1)/2} Γ(1/2+s) / Γ(n/2+s)``, leaving
    ``I = 2 ∫_0^∞ (1 - cos t) t^{-1-2s} dt``. That integral is split at 1: on
    [0,1] the t^2/2 part is integrated analytically and the regularised
    remainder by adaptive quadrature; on [1,∞) the 1-term is analytic and the
    cosine term uses the Fourier-weighted rule.

    Args:
        n (int): Dimension, 1 to 3.
        s (float): Order in (0, 1).

    Returns:
        FracConstant: value with its relative error estimate.

    Raises:
        ParameterError: If s is outside (0, 1) or n outside 1..3.
        QuadratureError: If the quadrature misses the 1e-8 relative target; the
            partial value is attached.

    Examples:
        >>> round(frac_constant(1, 0.5).value, 7)
        0.3183099"""
    _check_order(s)
    if n not in (1, 2, 3):
        raise ParameterError(f"dimension n={n} must be 1, 2 or 3")
    s = float(s)

    head = 0.5 / (2.0 - 2.0 * s)
    remainder, remainder_err = integrate.quad(_cos_remainder, 0.0, 1.0, args=(s,),
                                              epsabs=1e-14, epsrel=1e-12, limit=200)
    far_one = 1.0 / (2.0 * s)
    far_cos, far_cos_err = integrate.quad(lambda t: t ** (-1.0 - 2.0 * s), 1.0, np.inf,
                                          weight='cos', wvar=1.0, epsabs=1e-13, limlst=200)
    one_dim = 2.0 * (head - remainder + far_one - far_cos)
    abserr = 2.0 * (remainder_err + far_cos_err)

    transverse = np.pi ** ((n - 1) / 2.0) * special.gamma(0.5 + s) / special.gamma(n / 2.0 + s)
    value = 1.0 / (transverse * one_dim)
    relerr = abserr / abs(one_dim)
    if not np.isfinite(value) or relerr > QUAD_RTOL:
        raise QuadratureError(f"C({n},{s}) quadrature reached only {relerr:.2e} relative error",
                              value=value, abserr=relerr * abs(value))
    return FracConstant(n, s, value, relerr, frac_constant_closed_form(n, s))


def ball_tail_coefficient(n, s, R):
    """∫_{|z|>R} |z|^{-n-2s} dz = |S^{n-1}| R^{-2s} / (2s)."""
    _check_order(s)
    return sphere_area(n) * R ** (-2.0 * s) / (2.0 * s)


def _cube_face_integral(n, exponent):
    """∫_{[0,1]^{n-1}} (1 + |u|^2)^{-exponent} du."""
    if n == 1:
        return 1.0
    if n == 2:
        return integrate.quad(lambda u: (1.0 + u * u) ** (-exponent), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]
    return integrate.nquad(lambda u, v: (1.0 + u * u + v * v) ** (-exponent), [[0.0, 1.0], [0.0, 1.0]],
                           opts={'epsabs': 1e-14, 'epsrel': 1e-12})[0]


@lru_cache(maxsize=64)
def cube_tail_coefficient(n, s, rho):
    """∫_{|z|_∞ > ρ} |z|^{-n-2s} dz.

    Splitting the exterior of the cube into 2n pyramids over its faces gives
    ``2n ρ^{-2s}/(2s) · 2^{n-1} ∫_{[0,1]^{n-1}} (1+|u|^2)^{-s-n/2} du``."""
    _check_order(s)
    return 2.0 * n * rho ** (-2.0 * s) / (2.0 * s) * 2.0 ** (n - 1) * _cube_face_integral(n, s + n / 2.0)


@lru_cache(maxsize=16)
def riesz_cell_average_factor(n, mu):
    """Q with (1/h^n) ∫_{[-h/2,h/2]^n} |z|^{-μ} dz = (h/2)^{-μ} Q.

    On the unit cube the pyramid over each face contributes the same amount:
    ``Q = n/(n-μ) ∫_{[0,1]^{n-1}} (1+|u|^2)^{-μ/2} du``."""
    return n / (n - mu) * _cube_face_integral(n, mu / 2.0)


def _smooth_cutoff(x):
    """C-infinity step: 1 on [0,1], 0 on [2,∞)."""
    x = np.asarray(x, dtype=float)
    left = np.where(x < 2.0, np.exp(-1.0 / np.maximum(2.0 - x, 1e-300)), 0.0)
    right = np.where(x > 1.0, np.exp(-1.0 / np.maximum(x - 1.0, 1e-300)), 0.0)
    return left / (left + right)


@lru_cache(maxsize=32)
def near_field_weight(n, s, R=NEAR_FIELD_RADIUS):
    """Second-order correction ψ_{n,s} for the excluded diagonal of |z|^{-n-2s}.

    Adding ``ψ h^{-n-2s}`` to each of the 2n nearest-neighbour weights makes the
    lattice sum reproduce the second moment of the continuum kernel, so the
    discrete form is exact on quadratics:
    ``ψ = 1/2 [ |S^{n-1}|/n ∫ r^{1-2s} χ(r/R) dr - Σ'_k k_1^2 |k|^{-n-2s} χ(|k|/R) ]``
    with a smooth cutoff χ. In 1D this is -ζ(2s-1).

    Args:
        n (int): Dimension.
        s (float): Order in (0, 1).
        R (float, optional): Cutoff radius in lattice units. Defaults to 16.

    Returns:
        float: ψ_{n,s}."""
    _check_order(s)
    head = R ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
    blend = integrate.quad(lambda r: r ** (1.0 - 2.0 * s) * _smooth_cutoff(r / R), R, 2.0 * R,
                           epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    continuum = sphere_area(n) / n * (head + blend)

    reach = int(np.ceil(2.0 * R))
    k = np.arange(-reach, reach + 1, dtype=float)
    mesh = np.meshgrid(*([k] * n), indexing='ij')
    r2 = sum(axis ** 2 for axis in mesh)
    nonzero = r2 > 0
    r = np.sqrt(r2[nonzero])
    lattice = np.sum(mesh[0][nonzero] ** 2 * r ** (-n - 2.0 * s) * _smooth_cutoff(r / R))
    return 0.5 * (continuum - lattice)


def _lattice_offsets(grid: Grid):
    """Integer offsets in wrapped layout, the |k|^2 array and the validity mask |k_i| <= m-1."""
    size = 2 * grid.m
    k = np.rint(np.fft.fftfreq(size, d=1.0 / size)).astype(np.int64)
    mesh = np.meshgrid(*([k] * grid.n), indexing='ij')
    r2 = sum(axis ** 2 for axis in mesh)
    valid = np.ones(r2.shape, dtype=bool)
    for axis in mesh:
        valid &= np.abs(axis) <= grid.m - 1
    return mesh, r2, valid


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Translation-invariant kernel on the lattice offsets of a grid.

    Attributes:
        grid (Grid): Host grid.
        kind (str): 'riesz' or 'gagliardo'.
        parameter (float): μ for riesz, s for gagliardo.
        values (np.ndarray): Wrapped ``(2m)^n`` table, read-only.
        tail (float): Far-field coefficient attributed to the diagonal (0 for riesz).
        center_value (float): Entry at offset 0.
        near_field (float): ψ_{n,s} for gagliardo, 0 for riesz."""

    grid: Grid
    kind: str
    parameter: float
    values: np.ndarray = field(repr=False)
    tail: float = 0.0
    center_value: float = 0.0
    near_field: float = 0.0

    @property
    def fft_shape(self):
        return (2 * self.grid.m,) * self.grid.n

    @property
    def total(self) -> float:
        """Σ of the table over all offsets."""
        return float(np.sum(self.values))

    @property
    def spectrum(self) -> np.ndarray:
        cached = self.__dict__.get('_spectrum')
        if cached is None:
            cached = sfft.rfftn(self.values, s=self.fft_shape)
            cached.setflags(write=False)
            object.__setattr__(self, '_spectrum', cached)
        return cached

    def offset_value(self, k) -> float:
        """K at integer lattice offset ``k``."""
        index = tuple(int(v) % (2 * self.grid.m) for v in np.atleast_1d(k))
        return float(self.values[index])

    def reflected(self) -> np.ndarray:
        """Table of K(-z) in the same wrapped layout."""
        axes = tuple(range(self.grid.n))
        return np.roll(np.flip(self.values, axis=axes), 1, axis=axes)

    def with_values(self, values):
        """Copy of the table with replaced entries, used for fault injection."""
        return KernelTable(self.grid, self.kind, self.parameter, np.array(values, dtype=float),
                           self.tail, self.center_value, self.near_field)

    def convolve(self, u, workers=None) -> np.ndarray:
        """Lattice sum ``Σ_y K(x - y) u(y)`` for every node x of the box.

        Args:
            u (np.ndarray): Field on the grid.
            workers (int, optional): Worker threads for scipy.fft.

        Returns:
            np.ndarray: The linear (non-periodic) convolution restricted to the box."""
        m = self.grid.m
        spectrum = sfft.rfftn(np.asarray(u, dtype=float), s=self.fft_shape, workers=workers)
        full = sfft.irfftn(spectrum * self.spectrum, s=self.fft_shape, workers=workers)
        return full[(slice(0, m),) * self.grid.n]


@lru_cache(maxsize=8)
def riesz_table(grid: Grid, mu) -> KernelTable:
    """Tabulate |z|^{-μ} on the lattice offsets of ``grid``.

    ``K(z) = |z|^{-μ}`` for ``z != 0``; ``K(0)`` is the average of ``|z|^{-μ}``
    over the cell ``[-h/2, h/2]^n``, which is finite for μ < n.

    Args:
        grid (Grid): Host grid.
        mu (float): Exponent with 0 < μ < n.

    Returns:
        KernelTable: Read-only table of kind 'riesz'.

    Raises:
        ParameterError: If μ is outside (0, n)."""
    mu = float(mu)
    if not 0.0 < mu < grid.n:
        raise ParameterError(f"Riesz exponent mu={mu} must lie in (0, n={grid.n}); "
                             "the kernel is not locally integrable otherwise")
    h = grid.h
    _, r2, valid = _lattice_offsets(grid)
    values = np.zeros(r2.shape)
    off_diagonal = valid & (r2 > 0)
    values[off_diagonal] = (h * np.sqrt(r2[off_diagonal])) ** (-mu)
    center = (h / 2.0) ** (-mu) * riesz_cell_average_factor(grid.n, mu)
    values[(0,) * grid.n] = center
    values.setflags(write=False)
    logger.debug(f"riesz table n={grid.n} m={grid.m} mu={mu}: K(0)={center:.6g}")
    return KernelTable(grid, 'riesz', mu, values, 0.0, center, 0.0)


@lru_cache(maxsize=8)
def gagliardo_table(grid: Grid, s) -> KernelTable:
    """Tabulate |z|^{-n-2s} with the near-field correction and far-field tail.

    ``W(0) = 0``. Every nearest neighbour ``±h e_i`` gets the extra weight
    ``ψ_{n,s} h^{-n-2s}`` (see :func:`near_field_weight`). Offsets beyond the
    table (outside the cube ``|z|_∞ < (m - 1/2)h``) only ever pair a box node
    with the zero exterior, so their total is attributed to the diagonal as
    ``T = ∫_{|z|_∞ > (m-1/2)h} |z|^{-n-2s} dz``.

    Args:
        grid (Grid): Host grid.
        s (float): Order in (0, 1).

    Returns:
        KernelTable: Read-only table of kind 'gagliardo'.

    Raises:
        ParameterError: If s is outside (0, 1)."""
    _check_order(s)
    s = float(s)
    n, h = grid.n, grid.h
    _, r2, valid = _lattice_offsets(grid)
    values = np.zeros(r2.shape)
    off_diagonal = valid & (r2 > 0)
    values[off_diagonal] = (h * np.sqrt(r2[off_diagonal])) ** (-n - 2.0 * s)

    psi = near_field_weight(n, s)
    correction = psi * h ** (-n - 2.0 * s)
    size = 2 * grid.m
    for i in range(n):
        for step in (1, size - 1):
            index = [0] * n
            index[i] = step
            values[tuple(index)] += correction

    tail = cube_tail_coefficient(n, s, (grid.m - 0.5) * h)
    values.setflags(write=False)
    logger.debug(f"gagliardo table n={n} m={grid.m} s={s}: psi={psi:.6g}, tail={tail:.6g}")
    return KernelTable(grid, 'gagliardo', s, values, tail, 0.0, psi)
