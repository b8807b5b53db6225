"""Independent reference computations: explicit sums and dense matrices.

Nothing here calls the package's transforms; indices are rebuilt from
scratch so the package is checked against a second derivation.
"""
import numpy as np


def centered_axis(size):
    return np.arange(-(size // 2), (size - 1) // 2 + 1)


def grid_points(size):
    """Column-major enumeration: n1 fast, n2 slow."""
    ax = centered_axis(size)
    return [(n1, n2) for n2 in ax for n1 in ax]


def as_vector(img):
    N = img.shape[-1]
    h = N // 2
    return np.array([img[n1 + h, n2 + h] for n1, n2 in grid_points(N)])


def from_vector(v, N):
    h = N // 2
    img = np.zeros((N, N), dtype=complex)
    for k, (n1, n2) in enumerate(grid_points(N)):
        img[n1 + h, n2 + h] = v[k]
    return img


def dft_direct(x):
    """``y_nu = sum_n x_n exp(-2 pi i nu.n / N)`` evaluated term by term."""
    N = x.shape[0]
    ax = centered_axis(N)
    h = N // 2
    y = np.zeros((N, N), dtype=complex)
    for nu1 in ax:
        for nu2 in ax:
            acc = 0j
            for n1 in ax:
                for n2 in ax:
                    acc += x[n1 + h, n2 + h] * np.exp(-2j * np.pi * (nu1 * n1 + nu2 * n2) / N)
            y[nu1 + h, nu2 + h] = acc
    return y


def idft_direct(y):
    N = y.shape[0]
    return np.conj(dft_direct(np.conj(y))) / N**2


def synth_direct(c, N):
    """``s_n = sum_r c_r exp(+2 pi i r.n / N)`` over the odd support of ``c``."""
    L = c.shape[0]
    l = L // 2
    h = N // 2
    s = np.zeros((N, N), dtype=complex)
    for n1 in centered_axis(N):
        for n2 in centered_axis(N):
            acc = 0j
            for r1 in range(-l, l + 1):
                for r2 in range(-l, l + 1):
                    acc += c[r1 + l, r2 + l] * np.exp(2j * np.pi * (r1 * n1 + r2 * n2) / N)
            s[n1 + h, n2 + h] = acc
    return s


def dense_dft(N):
    pts = np.array(grid_points(N))
    return np.exp(-2j * np.pi * (pts @ pts.T) / N)


def dense_synthesis(L, N):
    n = np.array(grid_points(N))
    r = np.array(grid_points(L))
    return np.exp(2j * np.pi * (n @ r.T) / N)


def hankel_loops(y, M, L):
    """``Y[nu, r] = y_{(nu - r) mod N}`` with explicit wrap-around."""
    N = y.shape[0]
    h = N // 2
    rows = grid_points(M)
    cols = grid_points(L)
    Y = np.zeros((len(rows), len(cols)), dtype=complex)
    for i, (v1, v2) in enumerate(rows):
        for j, (r1, r2) in enumerate(cols):
            k1 = (v1 - r1 + h) % N
            k2 = (v2 - r2 + h) % N
            Y[i, j] = y[k1, k2]
    return Y


def mocca_dense(stack, M, L):
    """Block matrix with off-diagonal ``Y^(j)`` and diagonal ``-sum_{l != j} Y^(l)``."""
    Ys = [hankel_loops(y, M, L) for y in stack]
    nc = len(Ys)
    rows = []
    for j in range(nc):
        row = []
        for l in range(nc):
            if l == j:
                row.append(-sum(Ys[k] for k in range(nc) if k != j))
            else:
                row.append(Ys[j])
        rows.append(row)
    return np.block(rows)


def normal_system(stack, mask, sens, beta):
    """Dense ``(beta I + sum B^* B, sum B^* P y)`` with ``B_j = P F diag(s_j)``."""
    N = mask.shape[0]
    F = dense_dft(N)
    P = np.diag(as_vector(mask).astype(float))
    A = beta * np.eye(N * N, dtype=complex)
    b = np.zeros(N * N, dtype=complex)
    for y, s in zip(stack, sens):
        B = P @ F @ np.diag(as_vector(s))
        A += B.conj().T @ B
        b += B.conj().T @ (P @ as_vector(y))
    return A, b


def normal_solution(stack, mask, sens, beta):
    A, b = normal_system(stack, mask, sens, beta)
    return from_vector(np.linalg.pinv(A, rcond=1e-12, hermitian=True) @ b, mask.shape[0])


def sos_normalize(raw):
    d = np.sum(np.abs(raw) ** 2, axis=0)
    return raw / np.sqrt(d)


def random_maps(rng, num_coils, N):
    raw = rng.standard_normal((num_coils, N, N)) + 1j * rng.standard_normal((num_coils, N, N))
    return sos_normalize(raw)
