"""Synthetic multi-coil data that satisfies the discrete model exactly.

Random numbers come from PCG64 streams keyed by ``(seed, purpose)``.  Uniform
doubles are taken from ``Generator.random`` (top 53 bits of each 64-bit
output) and mapped to complex Gaussians with Box-Muller, so the fixtures can
be regenerated bit-for-bit elsewhere.
"""
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .fourier import dft2_centered, idft2_centered, synthesize_from_support
from .lattice import CenteredGrid
from .sampling import make_pattern

__all__ = [
    "PhantomSpec",
    "complex_gaussian",
    "random_coefficients",
    "boundary_sums",
    "random_magnetization",
    "magnetization_rank",
    "forward_model",
    "make_pattern",
    "sos_image",
    "simulate",
]

_COEFFS, _IMAGE, _NOISE = 1, 2, 3
_MAX_RETRIES = 100


@dataclass(frozen=True)
class PhantomSpec:
    N: int = 32
    num_coils: int = 4
    L: int = 3
    seed: int = 0
    magnetization_kind: str = "piecewise"
    sparse_fraction: float = 0.1
    noise_level: float = 0.0

    def __post_init__(self):
        if self.N % 2 or self.N < 2:
            raise ValueError(f"N must be even, got {self.N}")
        if self.L < 1 or self.L % 2 == 0 or self.L > self.N:
            raise ValueError(f"L must be odd with L <= N, got L={self.L}")
        if self.num_coils < 2:
            raise ValueError("need at least two coils")
        if self.magnetization_kind not in ("dense_random", "piecewise", "sparse"):
            raise ValueError(f"unknown magnetization kind {self.magnetization_kind!r}")
        if not 0 < self.sparse_fraction <= 1:
            raise ValueError("sparse_fraction must lie in (0, 1]")
        if self.noise_level < 0:
            raise ValueError("noise_level must be nonnegative")


def _stream(seed, purpose, attempt=0):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), purpose, attempt])))


def complex_gaussian(rng, shape):
    """Circularly symmetric complex normal samples with ``E|z|^2 = 1`` (Box-Muller)."""
    u1 = rng.random(shape)
    u2 = rng.random(shape)
    radius = np.sqrt(-2.0 * np.log1p(-u1))
    return radius * np.exp(2j * np.pi * u2) / np.sqrt(2.0)


def boundary_sums(c):
    """The four boundary sums of an ``(L, L)`` coefficient array (first index r1)."""
    c = np.abs(np.asarray(c))
    return np.array([c[-1, :].sum(), c[0, :].sum(), c[:, -1].sum(), c[:, 0].sum()])


def random_coefficients(spec: PhantomSpec):
    """Coefficients of shape ``(N_c, L, L)`` with nonvanishing boundary rows/columns, unit total norm."""
    shape = (spec.num_coils, spec.L, spec.L)
    for attempt in range(_MAX_RETRIES):
        c = complex_gaussian(_stream(spec.seed, _COEFFS, attempt), shape)
        if all(np.all(boundary_sums(cj) > 0) for cj in c):
            return c / np.linalg.norm(c)
    raise NumericalError("could not draw coefficients with full-degree boundary")


def magnetization_rank(m, L):
    """Rank of ``(w**(-n . l))`` over the support of ``m`` and ``l in Lambda_{2L-1}``."""
    N = m.shape[-1]
    grid = CenteredGrid(N)
    n1, n2 = grid.index_arrays()
    keep = (m.ravel(order="F") != 0)
    l1, l2 = CenteredGrid(2 * L - 1).index_arrays()
    V = np.exp(2j * np.pi * (np.outer(n1[keep], l1) + np.outer(n2[keep], l2)) / N)
    if V.shape[0] == 0:
        return 0
    return int(np.linalg.matrix_rank(V))


def _piecewise(rng, N):
    x = (np.arange(N) - N // 2) / N
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    m = np.zeros((N, N), dtype=np.complex128)
    # one large body covering the center, then a few inserts
    m[(X1 / 0.42) ** 2 + (X2 / 0.36) ** 2 <= 1] = 1.0 + 0.2 * complex_gaussian(rng, ())
    for _ in range(4):
        c1, c2 = 0.5 * rng.random(2) - 0.25
        a1, a2 = 0.04 + 0.12 * rng.random(2)
        inside = ((X1 - c1) / a1) ** 2 + ((X2 - c2) / a2) ** 2 <= 1
        m[inside] += 0.5 * complex_gaussian(rng, ())
    return m


def random_magnetization(spec: PhantomSpec):
    """Seeded test image; sparse kinds are redrawn until the rank hypothesis holds."""
    N, L = spec.N, spec.L
    target = (2 * L - 1) ** 2
    for attempt in range(_MAX_RETRIES):
        rng = _stream(spec.seed, _IMAGE, attempt)
        if spec.magnetization_kind == "dense_random":
            m = complex_gaussian(rng, (N, N))
            if np.all(m != 0):
                return m
            continue
        if spec.magnetization_kind == "piecewise":
            m = _piecewise(rng, N)
        else:
            count = max(1, int(round(spec.sparse_fraction * N * N)))
            m = np.zeros(N * N, dtype=np.complex128)
            support = rng.choice(N * N, size=count, replace=False)
            m[support] = complex_gaussian(rng, count)
            m = m.reshape(N, N)
        if 2 * L - 1 <= N and magnetization_rank(m, L) == target:
            return m
    raise NumericalError("could not draw a magnetization satisfying the rank condition")


def forward_model(m, coeffs, noise_level=0.0, seed=0):
    """Full k-space of every coil: ``dft2(m * s_j)`` plus optional complex white noise."""
    m = np.asarray(m)
    s = synthesize_from_support(coeffs, m.shape[-1])
    y = dft2_centered(m * s)
    if noise_level:
        y = y + noise_level * complex_gaussian(_stream(seed, _NOISE), y.shape)
    return y


def sos_image(stack):
    """Sum-of-squares combination of full k-space, scaled to unit 2-norm."""
    m = np.sqrt(np.sum(np.abs(idft2_centered(stack)) ** 2, axis=0))
    norm = np.linalg.norm(m)
    return m / norm if norm else m


def simulate(spec: PhantomSpec, pattern="cols:2", M=8):
    """Convenience bundle: ``(masked_stack, pattern, truth, m, coeffs, full_stack)``."""
    coeffs = random_coefficients(spec)
    m = random_magnetization(spec)
    full = forward_model(m, coeffs, spec.noise_level, spec.seed)
    pat = make_pattern(pattern, spec.N, M, spec.L)
    return full * pat.mask, pat, sos_image(full), m, coeffs, full
