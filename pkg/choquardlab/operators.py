"""Discrete quadratic forms and the matrix-free mixed operator.

Every form carries the mass weight ``h^n`` so it approximates the continuum
integral. The operator is defined from the form: ``<Lu, v> h^n = a(u, v)`` for
every admissible ``v``, which makes the discrete operator exactly symmetric.

Two exterior models are supported:

* ``'dirichlet'``: u is zero outside Ω and outside the box. Links to outside
  nodes count, and the Gagliardo kernel beyond the table adds the analytic
  tail ``T u(x)^2``.
* ``'free'``: the box is treated as the whole space (regional forms), used for
  bubble quantities. Only pairs inside the box interact and there is no tail.
"""
import logging

import numpy as np

from choquardlab.geometry import DomainMask
from choquardlab.kernels import frac_constant, gagliardo_table
from choquardlab.utility_functions import ParameterError

logger = logging.getLogger(__name__)


class MixedForm:
    """The form a(u, v) of L = -Δ + (-Δ)^s on a domain mask, and its operator.

    Either part can be switched off, which gives the pure Dirichlet Laplacian
    or the pure fractional Laplacian with the same code path.

    Attributes:
        mask (DomainMask): The domain.
        s (float): Fractional order, ``None`` for a local-only form.
        local (bool): Include -Δ.
        fractional (bool): Include (-Δ)^s.
        exterior (str): 'dirichlet' or 'free'.
        workers (int): scipy.fft worker count."""

    def __init__(self, mask: DomainMask, s=None, local=True, fractional=True, exterior=None, workers=None):
        if exterior is None:
            exterior = 'free' if mask.free else 'dirichlet'
        if exterior not in ('dirichlet', 'free'):
            raise ParameterError(f"exterior model '{exterior}' must be 'dirichlet' or 'free'")
        if exterior == 'dirichlet' and mask.free:
            raise ParameterError("the whole-box mask has no exterior layer; use exterior='free'")
        if fractional and s is None:
            raise ParameterError("a fractional order s is needed when the fractional part is on")
        if not (local or fractional):
            raise ParameterError("at least one of the local and fractional parts must be on")

        self.mask = mask
        self.grid = mask.grid
        self.s = None if s is None else float(s)
        self.local = local
        self.fractional = fractional
        self.exterior = exterior
        self.workers = workers
        self.cell = self.grid.cell_volume

        self.table = None
        self.constant = None
        if self.s is not None:
            self.table = gagliardo_table(self.grid, self.s)
            self.constant = frac_constant(self.grid.n, self.s).value
            if exterior == 'dirichlet':
                # Σ over all lattice partners of a box node, table plus analytic tail
                self._self_weight = self.cell * self.table.total + self.table.tail
            else:
                # regional weight: partners inside the box only
                self._self_weight = self.cell * self.table.convolve(np.ones(self.grid.shape), self.workers)

    def __repr__(self):
        return (f"MixedForm(n={self.grid.n}, m={self.grid.m}, s={self.s}, local={self.local}, "
                f"fractional={self.fractional}, exterior='{self.exterior}')")

    # ------------------------------------------------------------------
    # helpers
    # ------------------------------------------------------------------

    def admissible(self, u) -> np.ndarray:
        """Zero the field outside Ω."""
        return self.mask.apply(np.asarray(u, dtype=float))

    def l2_sq(self, u) -> float:
        """|u|_2^2 = h^n Σ u^2 over Ω."""
        u = self.admissible(u)
        return float(np.sum(u * u) * self.cell)

    def inner(self, u, v) -> float:
        """<u, v> h^n."""
        return float(np.sum(self.admissible(u) * self.admissible(v)) * self.cell)

    def _pad_axis(self, u, axis):
        width = [(0, 0)] * u.ndim
        width[axis] = (1, 1)
        # edge padding gives zero difference across the box face (no link there)
        mode = 'constant' if self.exterior == 'dirichlet' else 'edge'
        return np.pad(u, width, mode=mode)

    def _require_fractional_table(self):
        if self.table is None:
            raise ParameterError("this form was built without a fractional order s")

    # ------------------------------------------------------------------
    # quadratic forms
    # ------------------------------------------------------------------

    def dirichlet_energy(self, u) -> float:
        """‖∇u‖^2 as Σ over grid links of (u_i - u_j)^2 / h^2 · h^n.

        In the Dirichlet model the links from inside nodes to outside nodes
        (value 0) are included.

        Args:
            u (np.ndarray): Field on the grid.

        Returns:
            float: The discrete Dirichlet energy.

        Examples:
            A single 1D node of value 1 with h = 0.25 has two links, each
            contributing (1/0.25)^2 · 0.25, so the energy is 8."""
        u = self.admissible(u)
        h = self.grid.h
        total = 0.0
        for axis in range(self.grid.n):
            total += float(np.sum(np.diff(self._pad_axis(u, axis), axis=axis) ** 2))
        return total / h ** 2 * self.cell

    def gagliardo_sq(self, u) -> float:
        """[u]_s^2 = (C(n,s)/2) ∬ |u(x) - u(y)|^2 / |x - y|^{n+2s} on the lattice.

        Uses ``Σ_{x,y} W(x-y) u(x) u(y) = <u, W * u>`` with the FFT convolution,
        so ``[u]^2 = C h^{2n} [W_tot Σu^2 - <u, W*u>] + C T h^n Σu^2`` in the
        Dirichlet model.

        Args:
            u (np.ndarray): Field on the grid.

        Returns:
            float: The discrete Gagliardo energy."""
        self._require_fractional_table()
        u = self.admissible(u)
        convolved = self.table.convolve(u, self.workers)
        diagonal = np.sum(self._self_weight * u * u)
        cross = self.cell * np.sum(u * convolved)
        return float(self.constant * self.cell * (diagonal - cross))

    def mixed_norm_sq(self, u) -> float:
        """G(u)^2 = ‖∇u‖^2 + [u]_s^2."""
        return self.dirichlet_energy(u) + self.gagliardo_sq(u)

    def form_sq(self, u) -> float:
        """a(u, u) for the parts that are switched on."""
        value = 0.0
        if self.local:
            value += self.dirichlet_energy(u)
        if self.fractional:
            value += self.gagliardo_sq(u)
        return value

    def bilinear(self, u, v) -> float:
        """a(u, v) by polarisation of the quadratic form."""
        u = self.admissible(u)
        v = self.admissible(v)
        return 0.25 * (self.form_sq(u + v) - self.form_sq(u - v))

    # ------------------------------------------------------------------
    # operator
    # ------------------------------------------------------------------

    def apply_local(self, u) -> np.ndarray:
        """-Δ_h u with the exterior model, masked to Ω."""
        u = self.admissible(u)
        out = np.zeros_like(u)
        core = slice(1, -1)
        for axis in range(self.grid.n):
            padded = self._pad_axis(u, axis)
            lower = [slice(None)] * u.ndim
            upper = [slice(None)] * u.ndim
            lower[axis] = slice(0, -2)
            upper[axis] = slice(2, None)
            middle = [slice(None)] * u.ndim
            middle[axis] = core
            out += 2.0 * padded[tuple(middle)] - padded[tuple(lower)] - padded[tuple(upper)]
        return self.mask.apply(out / self.grid.h ** 2)

    def apply_fractional(self, u) -> np.ndarray:
        """(-Δ)^s_h u = C [w_self u - h^n W * u], masked to Ω."""
        self._require_fractional_table()
        u = self.admissible(u)
        convolved = self.table.convolve(u, self.workers)
        return self.mask.apply(self.constant * (self._self_weight * u - self.cell * convolved))

    def apply_mixed(self, u) -> np.ndarray:
        """Lu for the switched-on parts; ``<Lu, v> h^n = a(u, v)``."""
        out = np.zeros(self.grid.shape)
        if self.local:
            out += self.apply_local(u)
        if self.fractional:
            out += self.apply_fractional(u)
        return out

    apply = apply_mixed

    def diagonal(self) -> np.ndarray:
        """Diagonal of the operator on the grid (Jacobi preconditioner)."""
        diag = np.zeros(self.grid.shape)
        if self.local:
            if self.exterior == 'dirichlet':
                diag += 2.0 * self.grid.n / self.grid.h ** 2
            else:
                links = np.zeros(self.grid.shape)
                for axis in range(self.grid.n):
                    count = np.full(self.grid.m, 2.0)
                    count[[0, -1]] = 1.0
                    shape = [1] * self.grid.n
                    shape[axis] = self.grid.m
                    links = links + count.reshape(shape)
                diag += links / self.grid.h ** 2
        if self.fractional:
            # W(0) = 0, so only the self weight remains
            diag += self.constant * self._self_weight
        return self.mask.apply(diag)
