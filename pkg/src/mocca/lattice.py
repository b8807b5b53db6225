"""Centered square index sets and the vectorization convention.

A grid of size ``M`` covers ``{-floor(M/2), ..., floor((M-1)/2)}`` on each
axis.  Arrays holding grid data are stored as ``(M, M)`` numpy arrays where
grid index ``(n1, n2)`` lives at array position ``(n1 + floor(M/2),
n2 + floor(M/2))``.  Flattening uses column-major order (``n1`` fast,
``n2`` slow), see :func:`vec`.
"""
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CenteredGrid",
    "centered_mod",
    "enumerate_grid",
    "vec",
    "unvec",
    "embed_center",
    "crop_center",
]


@dataclass(frozen=True)
class CenteredGrid:
    size: int

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"grid size must be a positive integer, got {self.size!r}")

    @property
    def lo(self) -> int:
        return -(self.size // 2)

    @property
    def hi(self) -> int:
        return (self.size - 1) // 2

    @property
    def offset(self) -> int:
        """Array position of index 0 along each axis."""
        return self.size // 2

    def axis(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def __contains__(self, idx) -> bool:
        n1, n2 = idx
        return self.lo <= n1 <= self.hi and self.lo <= n2 <= self.hi

    def __len__(self) -> int:
        return self.size * self.size

    def enumerate(self) -> list:
        return enumerate_grid(self)

    def index_arrays(self):
        """Return ``(n1, n2)`` integer arrays of length ``size**2`` in enumeration order."""
        ax = self.axis()
        n2, n1 = np.meshgrid(ax, ax, indexing="ij")
        return n1.ravel(), n2.ravel()


def centered_mod(v, N: int):
    """Reduce an index pair modulo ``N`` into ``{-N/2, ..., N/2-1}``.

    Works on scalars and on integer arrays (elementwise).
    """
    if int(N) != N or N < 2 or N % 2:
        raise ValueError(f"N must be an even integer >= 2, got {N!r}")
    h = N // 2
    if isinstance(v, tuple) and all(np.isscalar(x) for x in v):
        return tuple(int((x + h) % N - h) for x in v)
    return (np.asarray(v) + h) % N - h


def enumerate_grid(grid: CenteredGrid) -> list:
    """All indices of ``grid`` in column-major order: ``n2`` outer, ``n1`` inner."""
    ax = range(grid.lo, grid.hi + 1)
    return [(n1, n2) for n2 in ax for n1 in ax]


def vec(a: np.ndarray) -> np.ndarray:
    """Column-major vectorization of the trailing two axes."""
    a = np.asarray(a)
    if a.ndim == 2:
        return a.ravel(order="F")
    lead = a.shape[:-2]
    return np.swapaxes(a, -1, -2).reshape(lead + (-1,))


def unvec(v: np.ndarray, size: int) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim == 1:
        return v.reshape((size, size), order="F")
    lead = v.shape[:-1]
    return np.swapaxes(v.reshape(lead + (size, size)), -1, -2)


def embed_center(a: np.ndarray, N: int) -> np.ndarray:
    """Zero-extend a centered ``(..., L, L)`` array onto the centered ``N x N`` grid."""
    L = a.shape[-1]
    if L > N:
        raise ValueError(f"cannot embed a grid of size {L} into size {N}")
    out = np.zeros(a.shape[:-2] + (N, N), dtype=np.result_type(a.dtype, np.complex128))
    start = N // 2 - L // 2
    out[..., start:start + L, start:start + L] = a
    return out


def crop_center(a: np.ndarray, L: int) -> np.ndarray:
    """Inverse of :func:`embed_center`: the centered ``L x L`` block of an ``N x N`` array."""
    N = a.shape[-1]
    if L > N:
        raise ValueError(f"cannot crop size {L} from size {N}")
    start = N // 2 - L // 2
    return a[..., start:start + L, start:start + L]
