"""Centered 2-D DFT on the grid ``{-N/2, ..., N/2-1}^2``.

The forward transform is ``y[nu] = sum_n x[n] * w**(nu . n)`` with
``w = exp(-2j*pi/N)``; the inverse carries the ``1/N**2`` factor.  Both act on
the trailing two axes so a whole coil stack can be transformed at once.
"""
import numpy as np
import scipy.fft

from .lattice import CenteredGrid, embed_center

__all__ = ["dft2_centered", "idft2_centered", "synthesize_from_support", "synthesis_matrix"]

_AXES = (-2, -1)


def _check_even(x):
    n0, n1 = x.shape[-2:]
    if n0 != n1:
        raise ValueError(f"expected square images, got shape {x.shape}")
    if n0 % 2:
        raise ValueError(f"centered transforms need an even grid size, got {n0}")


def dft2_centered(x):
    x = np.asarray(x)
    _check_even(x)
    # for even N the centered-to-standard roll is N/2 in both directions
    return scipy.fft.fftshift(scipy.fft.fft2(scipy.fft.ifftshift(x, axes=_AXES), axes=_AXES), axes=_AXES)


def idft2_centered(y):
    y = np.asarray(y)
    _check_even(y)
    return scipy.fft.fftshift(scipy.fft.ifft2(scipy.fft.ifftshift(y, axes=_AXES), axes=_AXES), axes=_AXES)


def synthesize_from_support(c, N):
    """Evaluate trigonometric polynomials with centered ``L x L`` coefficients on ``Lambda_N``.

    Returns ``s[n] = sum_{r in Lambda_L} c[r] * w**(-r . n)``, computed as
    ``N**2 * idft2_centered`` of the zero-extended coefficients.

    Args:
        c: complex array of shape ``(..., L, L)`` with ``L`` odd.
        N: even output grid size, ``N >= L``.
    """
    c = np.asarray(c)
    L = c.shape[-1]
    if c.shape[-2] != L or L % 2 == 0:
        raise ValueError(f"coefficients must be odd-sized squares, got shape {c.shape}")
    if L > N:
        raise ValueError(f"support size L={L} exceeds grid size N={N}")
    return N * N * idft2_centered(embed_center(c, N))


def synthesis_matrix(L, N):
    """Dense ``W = (w**(-r . n))`` with rows ``n in Lambda_N``, columns ``r in Lambda_L``.

    Both index sets follow the column-major enumeration.  Meant for small
    ``N`` (tests and diagnostics).
    """
    n1, n2 = CenteredGrid(N).index_arrays()
    r1, r2 = CenteredGrid(L).index_arrays()
    phase = np.outer(n1, r1) + np.outer(n2, r2)
    return np.exp(2j * np.pi * phase / N)
