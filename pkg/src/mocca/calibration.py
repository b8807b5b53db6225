"""Coil-sensitivity calibration from the fully sampled k-space center.

Each coil's sensitivity is a trigonometric polynomial with coefficients on the
centered ``L x L`` set.  Shifted ACS samples of all coils are arranged into a
block matrix whose (numerical) nullspace holds the stacked coefficients; the
maps follow by FFT synthesis and pixelwise sum-of-squares normalization.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import AcsCoverageError, NumericalError
from .fourier import synthesize_from_support
from .lattice import CenteredGrid, centered_mod, unvec, vec

__all__ = [
    "CalibrationConfig",
    "MoccaMatrix",
    "SensitivitySet",
    "CalibrationResult",
    "block_hankel",
    "acs_mask",
    "check_acs",
    "assemble_mocca",
    "smallest_singular_vectors",
    "auto_num_singular",
    "combine_singular_vectors",
    "build_sensitivities",
    "calibrate",
    "stacked",
]


@dataclass
class CalibrationConfig:
    """Parameters of the calibration stage.

    ``num_singular_vectors=None`` picks the count automatically (singular values
    below ``auto_ratio * sigma_max``).  ``d_threshold=None`` uses
    ``1e-8 * max(d)``.  ``alpha`` overrides the combination weights.
    """

    L: int = 5
    M: int = 20
    num_singular_vectors: Optional[int] = None
    d_threshold: Optional[float] = None
    singular_gap_ratio: float = 1e-6
    auto_ratio: float = 1e-2
    alpha: Optional[Sequence[complex]] = None
    method: str = "svd"

    def __post_init__(self):
        if self.L < 1 or self.L % 2 == 0:
            raise ValueError(f"L must be a positive odd integer, got {self.L}")
        if self.M < self.L:
            raise ValueError(f"M={self.M} must be at least L={self.L}")
        if self.num_singular_vectors is not None and self.num_singular_vectors < 1:
            raise ValueError("num_singular_vectors must be >= 1")
        if self.d_threshold is not None and self.d_threshold < 0:
            raise ValueError("d_threshold must be nonnegative")
        if not 0 < self.singular_gap_ratio < 1:
            raise ValueError("singular_gap_ratio must lie in (0, 1)")
        if self.method not in ("svd", "inverse_power"):
            raise ValueError(f"unknown SVD method {self.method!r}")

    @property
    def acs_size(self) -> int:
        return self.M + self.L - 1


@dataclass
class MoccaMatrix:
    matrix: np.ndarray
    num_coils: int
    block_rows: int
    block_cols: int

    def block(self, j: int, l: int) -> np.ndarray:
        r, c = self.block_rows, self.block_cols
        return self.matrix[j * r:(j + 1) * r, l * c:(l + 1) * c]

    @property
    def shape(self):
        return self.matrix.shape


@dataclass
class SensitivitySet:
    raw: np.ndarray
    normalized: np.ndarray
    d: np.ndarray
    d_plus: np.ndarray
    threshold: float

    @property
    def num_coils(self) -> int:
        return self.normalized.shape[0]


@dataclass
class CalibrationResult:
    coefficients: np.ndarray
    sensitivities: SensitivitySet
    singular_values: np.ndarray
    num_singular_used: int
    mocca: MoccaMatrix = field(repr=False)


def block_hankel(y, row_size, L, mask=None):
    """Matrix of wrapped k-space shifts ``y[(nu - r) mod Lambda_N]``.

    Rows run over ``nu`` in the centered grid of size ``row_size``, columns over
    ``r`` in ``Lambda_L``, both in column-major enumeration.  ``y`` may carry
    leading axes (e.g. coils); they are kept in front of the result.

    If ``mask`` is given, every referenced entry must be acquired.
    """
    y = np.asarray(y)
    N = y.shape[-1]
    nu1, nu2 = CenteredGrid(row_size).index_arrays()
    r1, r2 = CenteredGrid(L).index_arrays()
    i1 = centered_mod(nu1[:, None] - r1[None, :], N) + N // 2
    i2 = centered_mod(nu2[:, None] - r2[None, :], N) + N // 2
    if mask is not None and not np.all(np.asarray(mask)[i1, i2]):
        raise AcsCoverageError(
            f"k-space samples on Lambda_{{M+L-1}} (size {row_size + L - 1}) are not all acquired"
        )
    return y[..., i1, i2]


def acs_mask(N, size):
    """Boolean ``N x N`` mask that is true exactly on the centered block of the given size."""
    mask = np.zeros((N, N), dtype=bool)
    start = N // 2 - size // 2
    mask[start:start + size, start:start + size] = True
    return mask


def check_acs(mask, M, L):
    size = M + L - 1
    N = mask.shape[-1]
    if size > N:
        raise AcsCoverageError(f"Lambda_{{M+L-1}} of size {size} does not fit into N={N}")
    if not np.all(mask[acs_mask(N, size)]):
        raise AcsCoverageError(
            f"mask does not cover Lambda_{{M+L-1}} (centered {size}x{size} block, M={M}, L={L})"
        )


def assemble_mocca(stack, cfg: CalibrationConfig, mask=None) -> MoccaMatrix:
    """Build the ``M^2 N_c x L^2 N_c`` calibration matrix from the ACS samples.

    Off-diagonal block ``(j, l)`` is ``Y_j``; diagonal block ``j`` is
    ``-sum_{l != j} Y_l``.
    """
    stack = np.asarray(stack)
    if stack.ndim != 3:
        raise ValueError(f"expected a (coils, N, N) stack, got shape {stack.shape}")
    nc, N = stack.shape[0], stack.shape[-1]
    if nc < 2:
        raise ValueError("calibration needs at least two coils")
    if cfg.acs_size > N:
        raise AcsCoverageError(f"Lambda_{{M+L-1}} of size {cfg.acs_size} does not fit into N={N}")
    if mask is not None:
        check_acs(np.asarray(mask, dtype=bool), cfg.M, cfg.L)
    Y = block_hankel(stack, cfg.M, cfg.L)
    rows, cols = Y.shape[1], Y.shape[2]
    A = np.empty((nc * rows, nc * cols), dtype=np.complex128)
    for j in range(nc):
        band = A[j * rows:(j + 1) * rows]
        for l in range(nc):
            band[:, l * cols:(l + 1) * cols] = Y[j]
        # summing the other blocks (not total - Y_j) keeps the diagonal exact
        band[:, j * cols:(j + 1) * cols] = -np.sum(np.delete(Y, j, axis=0), axis=0)
    return MoccaMatrix(A, nc, rows, cols)


def _fix_phase(V):
    # rotate each column so its largest-magnitude entry is real positive
    k = np.argmax(np.abs(V), axis=0)
    lead = V[k, np.arange(V.shape[1])]
    return V * (np.abs(lead) / np.where(lead == 0, 1, lead))


def smallest_singular_vectors(A, num, method="svd"):
    """Right singular vectors for the ``num`` smallest singular values of ``A``.

    Returns ``(values, vectors)``: ascending singular values of length
    ``num`` and an ``(n, num)`` array of unit-norm columns, each rotated so its
    largest entry is real and positive.
    """
    A = A.matrix if isinstance(A, MoccaMatrix) else np.asarray(A)
    n = A.shape[1]
    if not 1 <= num <= n:
        raise ValueError(f"requested {num} singular vectors from a matrix with {n} columns")
    if method == "inverse_power":
        if num != 1:
            raise ValueError("inverse power iteration only yields the smallest singular vector")
        return _inverse_power(A)
    try:
        _, s, Vh = np.linalg.svd(A, full_matrices=A.shape[0] < n)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD of the calibration matrix failed: {exc}") from exc
    if s.size < n:
        s = np.concatenate([s, np.zeros(n - s.size)])
    order = np.argsort(s, kind="stable")[:num]
    V = Vh.conj().T[:, order]
    return s[order], _fix_phase(V)


def _inverse_power(A, iters=50, tol=1e-14):
    G = A.conj().T @ A
    n = G.shape[0]
    shift = np.finfo(float).eps * max(np.trace(G).real, 1.0)
    try:
        chol = np.linalg.cholesky(G + shift * np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"inverse iteration factorization failed: {exc}") from exc
    x = np.ones(n, dtype=np.complex128) / np.sqrt(n)
    for _ in range(iters):
        z = np.linalg.solve(chol.conj().T, np.linalg.solve(chol, x))
        z /= np.linalg.norm(z)
        done = np.linalg.norm(z - x * np.vdot(x, z)) < tol
        x = z
        if done:
            break
    sigma = np.linalg.norm(A @ x)
    return np.array([sigma]), _fix_phase(x[:, None])


def auto_num_singular(singular_values, ratio=1e-2):
    """Count of singular values below ``ratio * sigma_max``, clamped to ``[1, len]``."""
    s = np.asarray(singular_values)
    k = int(np.count_nonzero(s < ratio * s.max())) if s.size else 0
    return min(max(k, 1), s.size)


def combine_singular_vectors(vectors, L, num_coils, alpha=None):
    """Combine singular vectors into one unit-norm coefficient set, shape ``(N_c, L, L)``.

    By default the weights are ``alpha = V^* w`` where ``w`` carries a one at
    the zero frequency of every coil block, i.e. ``w`` is projected onto the
    span of the vectors.
    """
    V = np.asarray(vectors)
    if V.ndim == 1:
        V = V[:, None]
    if V.shape[0] != num_coils * L * L:
        raise ValueError(f"vectors of length {V.shape[0]} do not match N_c*L^2={num_coils * L * L}")
    if alpha is None:
        w = np.zeros(V.shape[0], dtype=np.complex128)
        w[(L * L - 1) // 2::L * L] = 1.0
        alpha = V.conj().T @ w
    else:
        alpha = np.asarray(alpha, dtype=np.complex128)
        if alpha.shape != (V.shape[1],):
            raise ValueError(f"need {V.shape[1]} combination weights, got {alpha.shape}")
    c = V @ alpha
    norm = np.linalg.norm(c)
    if norm <= np.finfo(float).tiny or norm <= 1e-14 * np.linalg.norm(alpha):
        raise NumericalError("singular-vector combination vanishes (vectors orthogonal to the weight vector)")
    c = c / norm
    return unvec(c.reshape(num_coils, L * L), L)


def build_sensitivities(coeffs, N, threshold=None) -> SensitivitySet:
    """Raw maps, sum-of-squares field and normalized maps from coefficients.

    ``threshold=None`` means ``1e-8 * max(d)``.  Pixels with ``d <= threshold``
    get zero normalized sensitivity.
    """
    coeffs = np.asarray(coeffs)
    raw = synthesize_from_support(coeffs, N)
    d = np.sum(np.abs(raw) ** 2, axis=0)
    eps = 1e-8 * d.max() if threshold is None else float(threshold)
    good = d > eps
    d_plus = np.zeros_like(d)
    d_plus[good] = 1.0 / d[good]
    normalized = np.sqrt(d_plus) * raw
    return SensitivitySet(raw, normalized, d, d_plus, eps)


def calibrate(stack, cfg: CalibrationConfig, mask=None) -> CalibrationResult:
    """Steps from ACS samples to normalized sensitivity maps.

    Without ``mask`` the acquired set is taken to be the samples that are
    nonzero in at least one coil, and ACS coverage is checked against it.
    """
    stack = np.asarray(stack)
    if stack.ndim != 3:
        raise ValueError(f"expected a (coils, N, N) stack, got shape {stack.shape}")
    nc, N = stack.shape[0], stack.shape[-1]
    if mask is None:
        mask = np.any(stack != 0, axis=0)
    A = assemble_mocca(stack, cfg, mask)
    n = A.shape[1]
    if cfg.method == "inverse_power":
        if cfg.num_singular_vectors not in (None, 1):
            raise ValueError("inverse power iteration supports a single singular vector")
        values, V = smallest_singular_vectors(A, 1, method="inverse_power")
        spectrum = values
        ns = 1
    else:
        spectrum, V = smallest_singular_vectors(A, n)
        ns = cfg.num_singular_vectors or auto_num_singular(spectrum, cfg.auto_ratio)
        ns = min(ns, n)
        V = V[:, :ns]
    coeffs = combine_singular_vectors(V, cfg.L, nc, cfg.alpha)
    sens = build_sensitivities(coeffs, N, cfg.d_threshold)
    return CalibrationResult(coeffs, sens, spectrum, ns, A)


def stacked(coeffs) -> np.ndarray:
    """Stack ``(N_c, L, L)`` coefficients into one vector in the matrix column order."""
    return vec(np.asarray(coeffs)).ravel()

