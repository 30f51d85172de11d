"""First Dirichlet eigenpairs of the local, fractional and mixed operators.

The operator acts on the vector of inside-node values. LOBPCG with a Jacobi
preconditioner gives a first approximation, and inverse iteration with
preconditioned conjugate gradients polishes it to the residual tolerance.
"""
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg, lobpcg

from choquardlab.geometry import DomainMask
from choquardlab.operators import MixedForm
from choquardlab.utility_functions import ConvergenceError

logger = logging.getLogger(__name__)


@dataclass
class EigenResult:
    """First eigenpair of a discrete operator.

    Attributes:
        eigenvalue (float): Rayleigh quotient of the eigenfield.
        eigenfield (np.ndarray): Full-grid field, positive on Ω, ``h^n Σ u^2 = 1``.
        residual (float): ``|Lu - λu|_2`` in the weighted norm.
        iterations (int): LOBPCG iterations plus inverse-iteration steps.
        converged (bool): Residual within the tolerance.
        label (str): 'local', 'fractional' or 'mixed'."""

    eigenvalue: float
    eigenfield: np.ndarray
    residual: float
    iterations: int
    converged: bool
    label: str = ''

    def to_dict(self):
        return {'label': self.label, 'eigenvalue': self.eigenvalue, 'residual': self.residual,
                'relative_residual': self.residual / abs(self.eigenvalue),
                'iterations': self.iterations, 'converged': self.converged}


def operator_on_domain(form: MixedForm):
    """LinearOperator of ``form`` on inside nodes and its Jacobi preconditioner.

    Returns:
        tuple: ``(A, M)`` as scipy LinearOperators."""
    mask = form.mask
    size = mask.count

    def matvec(x):
        return form.apply(mask.embed(np.asarray(x).reshape(-1)))[mask.inside]

    diagonal = form.diagonal()[mask.inside]

    def precondition(x):
        x = np.asarray(x)
        if x.ndim == 2:
            return x / diagonal[:, None]
        return x / diagonal

    A = LinearOperator((size, size), matvec=matvec, dtype=float)
    M = LinearOperator((size, size), matvec=precondition, matmat=precondition, dtype=float)
    return A, M


def first_eigen(form: MixedForm, tol=1e-8, max_iter=10000, label='') -> EigenResult:
    """Smallest eigenvalue and positive eigenfunction of the operator of ``form``.

    Args:
        form (MixedForm): Form with the parts to include switched on.
        tol (float, optional): Relative residual ``|Lu - λu| / λ`` to reach. Defaults to 1e-8.
        max_iter (int, optional): Budget for LOBPCG plus inverse iteration. Defaults to 10000.
        label (str, optional): Name stored on the result.

    Returns:
        EigenResult: The first eigenpair.

    Raises:
        ConvergenceError: When the residual stays above ``tol · λ``; ``best``
            holds the last EigenResult."""
    mask = form.mask
    A, M = operator_on_domain(form)
    start = np.ones((mask.count, 1))

    with warnings.catch_warnings():
        # lobpcg warns on reaching maxiter; the polish below decides convergence
        warnings.simplefilter('ignore', UserWarning)
        values, vectors, history = lobpcg(A, start, M=M, tol=np.sqrt(tol), maxiter=min(max_iter, 500),
                                          largest=False, retResidualNormsHistory=True)
    iterations = len(history)
    x = vectors[:, 0] / np.linalg.norm(vectors[:, 0])
    Ax = A.matvec(x)
    eigenvalue = float(x @ Ax)
    residual = float(np.linalg.norm(Ax - eigenvalue * x))
    logger.debug(f"lobpcg {label}: λ={values[0]:.12g} after {iterations} iterations, residual {residual:.3e}")

    while residual > tol * eigenvalue and iterations < max_iter:
        y, info = cg(A, x, x0=x / eigenvalue, rtol=1e-3 * tol, atol=0.0, M=M, maxiter=10 * mask.count)
        if info < 0:
            break
        x = y / np.linalg.norm(y)
        Ax = A.matvec(x)
        eigenvalue = float(x @ Ax)
        residual = float(np.linalg.norm(Ax - eigenvalue * x))
        iterations += 1

    if np.sum(x) < 0:
        x = -x
    eigenfield = mask.embed(x / np.sqrt(mask.grid.cell_volume))
    converged = residual <= tol * eigenvalue
    result = EigenResult(eigenvalue, eigenfield, residual, iterations, converged, label)
    if not converged:
        raise ConvergenceError(f"first eigenpair ({label}) stalled at relative residual "
                               f"{residual / eigenvalue:.3e} after {iterations} iterations", best=result)
    logger.info(f"first eigenvalue ({label}, m={mask.grid.m}): {eigenvalue:.12g}")
    return result


def first_eigen_local(mask: DomainMask, tol=1e-8, max_iter=10000, workers=None) -> EigenResult:
    """λ_loc, first eigenvalue of -Δ with zero Dirichlet data."""
    form = MixedForm(mask, s=None, local=True, fractional=False, workers=workers)
    return first_eigen(form, tol, max_iter, label='local')


def first_eigen_fractional(mask: DomainMask, s, tol=1e-8, max_iter=10000, workers=None) -> EigenResult:
    """λ_{1,s}, first eigenvalue of (-Δ)^s with zero exterior data."""
    form = MixedForm(mask, s=s, local=False, fractional=True, workers=workers)
    return first_eigen(form, tol, max_iter, label='fractional')


def first_eigen_mixed(mask: DomainMask, s, tol=1e-8, max_iter=10000, workers=None) -> EigenResult:
    """λ_1, first eigenvalue of -Δ + (-Δ)^s with zero exterior data."""
    form = MixedForm(mask, s=s, workers=workers)
    return first_eigen(form, tol, max_iter, label='mixed')
