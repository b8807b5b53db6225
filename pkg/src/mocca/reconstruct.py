"""Image reconstruction from undersampled k-space with known sensitivities.

All solvers target the regularized normal equations

    (beta I + sum_j B_j^* B_j) m = sum_j B_j^* P y_j,   B_j = P F diag(s_j),

where ``s_j`` are the sum-of-squares normalized sensitivity maps.
"""
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft

from .calibration import SensitivitySet
from .errors import NumericalError
from .fourier import idft2_centered
from .lattice import CenteredGrid, centered_mod, embed_center
from .sampling import SamplingPattern

_AXES = (-2, -1)

__all__ = [
    "ReconConfig",
    "IterationResult",
    "ReconResult",
    "normal_rhs",
    "jacobi_richardson",
    "direct_block_solver",
    "group_indices",
    "finalize_sos",
    "invertibility_diagnostic",
    "coefficient_rank_test",
    "reconstruct",
]

log = logging.getLogger(__name__)


@dataclass
class ReconConfig:
    beta: float = 1e-3
    tol: float = 1e-9
    max_iter: int = 200
    solver: str = "auto"
    singular: str = "pinv"

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if self.solver not in ("auto", "iterative", "direct"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.singular not in ("pinv", "raise"):
            raise ValueError(f"unknown singular-group policy {self.singular!r}")


@dataclass
class IterationResult:
    image: np.ndarray
    iterations: int
    residuals: list
    converged: bool


@dataclass
class ReconResult:
    image: np.ndarray
    solver: str
    iterations: int = 0
    residuals: list = field(default_factory=list)
    converged: bool = True
    diagnostic: Optional[dict] = None


def _maps(sens):
    if isinstance(sens, SensitivitySet):
        return sens.normalized
    return np.asarray(sens)


def _mask(pattern):
    if isinstance(pattern, SamplingPattern):
        return pattern.mask
    return np.asarray(pattern, dtype=bool)


def _check(stack, mask, s):
    if stack.shape != s.shape:
        raise ValueError(f"stack shape {stack.shape} does not match sensitivities {s.shape}")
    if mask.shape != stack.shape[-2:]:
        raise ValueError(f"mask shape {mask.shape} does not match images {stack.shape[-2:]}")


def normal_rhs(stack, pattern, sens):
    """``sum_j conj(s_j) * idft2(P y_j)``, i.e. the right-hand side scaled by ``1/N^2``."""
    stack, mask, s = np.asarray(stack), _mask(pattern), _maps(sens)
    _check(stack, mask, s)
    return np.sum(np.conj(s) * idft2_centered(stack * mask), axis=0)


def jacobi_richardson(stack, pattern, sens, beta=1e-3, tol=1e-9, max_iter=200) -> IterationResult:
    """Weighted Jacobi-Richardson iteration.

    Starts from ``m_0 = normal_rhs`` and repeats

        y_{k+1} = ((1 - beta/N^2) I - P) F(s_j m_k) + P y_j
        m_{k+1} = sum_j conj(s_j) * F^{-1} y_{k+1}

    until ``max|m_k - m_{k-1}| <= tol`` or ``max_iter`` updates were made.
    ``residuals[k]`` is the 2-norm residual of the normal equations at ``m_k``;
    the last entry belongs to the returned image.
    """
    stack, mask, s = np.asarray(stack), _mask(pattern), _maps(sens)
    _check(stack, mask, s)
    N = stack.shape[-1]
    if not 0 <= beta < N * N:
        raise ValueError(f"beta must lie in [0, N^2) = [0, {N * N}), got {beta}")
    # Elementwise products commute with the fixed centered-to-standard index
    # roll, so the loop runs in standard FFT order and converts once at the end.
    shift = scipy.fft.ifftshift
    s_std = shift(s, axes=_AXES)
    sc = np.conj(s_std)
    y0 = shift(stack * mask, axes=_AXES)
    # y = coef * F(s m) + P y0, with coef = -beta/N^2 on P and 1 - beta/N^2 off P
    coef = np.where(shift(mask), -beta / (N * N), 1.0 - beta / (N * N))

    def step(m):
        # one coil at a time keeps the temporaries cache-sized
        out = np.zeros_like(m)
        for j in range(s_std.shape[0]):
            y = scipy.fft.fft2(s_std[j] * m, overwrite_x=True)
            y *= coef
            y += y0[j]
            z = scipy.fft.ifft2(y, overwrite_x=True)
            z *= sc[j]
            out += z
        return out

    m_prev = np.zeros(stack.shape[-2:], dtype=np.complex128)
    z = scipy.fft.ifft2(y0, axes=_AXES)
    z *= sc
    m = z.sum(axis=0)
    residuals = []
    k = 0
    m_next = None
    while np.max(np.abs(m - m_prev)) > tol and k < max_iter:
        m_next = step(m)
        residuals.append(N * N * np.linalg.norm(m_next - m))
        m_prev, m = m, m_next
        k += 1
    # residual of the returned iterate needs one more application
    residuals.append(N * N * np.linalg.norm(step(m) - m))
    converged = bool(np.max(np.abs(m - m_prev)) <= tol)
    if not converged:
        log.info("Jacobi-Richardson stopped after %d iterations without reaching tol=%g", k, tol)
    if beta == 0 and len(residuals) > 1:
        r = np.asarray(residuals)
        if np.any(np.diff(r) > 1e-9 * r[0] + 1e-300):
            log.warning("residual increased during iteration; data may not fit the model")
    return IterationResult(scipy.fft.fftshift(m), k, [float(r) for r in residuals], converged)


def _strides(pattern: SamplingPattern):
    if not isinstance(pattern, SamplingPattern) or not pattern.structured:
        raise ValueError("direct solver needs a structured sampling pattern (full, cols:S, rows-cols:A,B)")
    return pattern.row_stride, pattern.col_stride


def group_indices(N, row_stride, col_stride):
    """Array indices of the coupled pixel groups, shape ``(num_groups, g, 2)``.

    Pixels are coupled when their first indices differ by a multiple of
    ``N/row_stride`` and their second indices by a multiple of ``N/col_stride``.
    """
    a, b = row_stride, col_stride
    p, q = N // a, N // b
    i1 = np.arange(p)[:, None, None, None] + p * np.arange(a)[None, None, :, None]
    i2 = np.arange(q)[None, :, None, None] + q * np.arange(b)[None, None, None, :]
    i1, i2 = np.broadcast_arrays(i1, i2)
    return np.stack([i1.reshape(p * q, a * b), i2.reshape(p * q, a * b)], axis=-1)


def direct_block_solver(stack, pattern: SamplingPattern, sens, beta=1e-3, singular="pinv"):
    """Decoupled solve for regular lattices.

    Only samples on the regular lattice enter; extra ACS samples off the
    lattice are dropped, because they destroy the block structure.  Each pixel
    group ``g`` solves ``(g beta/N^2 I + S^* S) m = g * r`` where ``S`` is the
    ``N_c x g`` matrix of normalized sensitivities and ``r`` the gathered
    right-hand side.  Singular groups are handled by pseudoinverse
    (``singular="pinv"``, with a warning) or raise :class:`NumericalError`.
    """
    stack, s = np.asarray(stack), _maps(sens)
    a, b = _strides(pattern)
    N = stack.shape[-1]
    for stride in (a, b):
        if stride > 1 and N % (2 * stride):
            raise ValueError(f"direct solver needs N divisible by {2 * stride}, got N={N}")
    _check(stack, pattern.mask, s)
    lattice = pattern.regular_mask()
    R = normal_rhs(stack, lattice, s)
    g = a * b
    idx = group_indices(N, a, b)
    S = s[:, idx[..., 0], idx[..., 1]]            # (N_c, groups, g)
    S = np.moveaxis(S, 0, 1)                      # (groups, N_c, g)
    G = np.conj(np.swapaxes(S, 1, 2)) @ S
    G = G + (g * beta / (N * N)) * np.eye(g)
    rhs = g * R[idx[..., 0], idx[..., 1]]
    lam, U = np.linalg.eigh(G)
    top = lam[:, -1:]
    cutoff = 1e-12 * np.maximum(top, np.finfo(float).tiny)
    small = lam <= cutoff
    bad = np.any(small, axis=1)
    if np.any(bad):
        msg = f"{int(bad.sum())} of {len(bad)} pixel groups are singular"
        if singular == "raise":
            raise NumericalError(msg)
        warnings.warn(msg + "; using minimal-norm group solutions", RuntimeWarning, stacklevel=2)
    inv = np.where(small, 0.0, 1.0 / np.where(small, 1.0, lam))
    coef = np.einsum("gji,gj->gi", np.conj(U), rhs) * inv
    sol = np.einsum("gij,gj->gi", U, coef)
    m = np.zeros((N, N), dtype=np.complex128)
    m[idx[..., 0], idx[..., 1]] = sol
    return m


def finalize_sos(m, sens):
    """Move pixel phases into the sensitivities and return a unit-norm magnitude image.

    Returns ``(image, maps)`` where ``image = |m| / || |m| ||_2`` and
    ``maps = sign(m) * s`` (``sign(0) = 0``).
    """
    m = np.asarray(m)
    s = _maps(sens)
    mag = np.abs(m)
    sign = np.where(mag > 0, m / np.where(mag > 0, mag, 1.0), 0.0)
    norm = np.linalg.norm(mag)
    if norm == 0:
        raise NumericalError("cannot normalize an all-zero image")
    return mag / norm, sign * s


def invertibility_diagnostic(sens, pattern: SamplingPattern, rtol=1e-10):
    """Per-group rank report for structured patterns.

    For each coupled pixel group the ``N_c x g`` sensitivity matrix must have
    rank ``g`` for the unregularized system to be invertible.
    """
    s = _maps(sens)
    if not isinstance(pattern, SamplingPattern) or not pattern.structured:
        return {"available": False, "reason": "diagnostic unavailable for explicit patterns"}
    a, b = pattern.row_stride, pattern.col_stride
    N = s.shape[-1]
    if N % a or N % b:
        return {"available": False, "reason": f"strides do not divide N={N}"}
    idx = group_indices(N, a, b)
    S = np.moveaxis(s[:, idx[..., 0], idx[..., 1]], 0, 1)
    sv = np.linalg.svd(S, compute_uv=False)
    g = a * b
    if sv.shape[1] < g:
        smin = np.zeros(len(sv))
    else:
        smin = sv[:, g - 1]
    smax = sv[:, 0]
    deficient = smin <= rtol * np.maximum(smax, np.finfo(float).tiny)
    return {
        "available": True,
        "group_size": g,
        "num_groups": int(len(sv)),
        "min_singular_value": float(smin.min()),
        "num_rank_deficient": int(deficient.sum()),
        "invertible": bool(not deficient.any()),
    }


def coefficient_rank_test(coeffs, pattern, max_n=16):
    """Dense rank of the stacked coefficient-convolution matrix over acquired rows.

    The unregularized system with ``d > 0`` everywhere is invertible exactly
    when this rank equals ``N^2``.  Returns ``(rank, N**2)``.
    """
    mask = _mask(pattern)
    N = mask.shape[-1]
    if N > max_n:
        raise ValueError(f"dense rank test is limited to N <= {max_n}, got N={N}")
    c_full = embed_center(np.asarray(coeffs), N)
    nu1, nu2 = CenteredGrid(N).index_arrays()
    acquired = mask.ravel(order="F")
    nu1, nu2 = nu1[acquired], nu2[acquired]
    n1, n2 = CenteredGrid(N).index_arrays()
    i1 = centered_mod(nu1[:, None] - n1[None, :], N) + N // 2
    i2 = centered_mod(nu2[:, None] - n2[None, :], N) + N // 2
    blocks = [N * N * cj[i1, i2] for cj in c_full]
    return int(np.linalg.matrix_rank(np.vstack(blocks))), N * N


def reconstruct(stack, pattern: SamplingPattern, sens, cfg: ReconConfig = None) -> ReconResult:
    """Solve for the complex image with the configured solver.

    ``solver="auto"`` uses the direct solver for structured patterns when
    ``beta > 0`` and the iteration otherwise.
    """
    cfg = cfg or ReconConfig()
    solver = cfg.solver
    if solver == "auto":
        solver = "direct" if (pattern.structured and cfg.beta > 0) else "iterative"
    if solver == "direct":
        diag = invertibility_diagnostic(sens, pattern)
        m = direct_block_solver(stack, pattern, sens, cfg.beta, cfg.singular)
        return ReconResult(m, "direct", diagnostic=diag)
    res = jacobi_richardson(stack, pattern, sens, cfg.beta, cfg.tol, cfg.max_iter)
    return ReconResult(res.image, "iterative", res.iterations, res.residuals, res.converged)
