import numpy as np
import pytest

import oracles
from mocca.calibration import build_sensitivities
from mocca.errors import NumericalError
from mocca.fourier import idft2_centered
from mocca.phantom import PhantomSpec, random_coefficients, simulate, sos_image
from mocca.reconstruct import (
    ReconConfig,
    coefficient_rank_test,
    direct_block_solver,
    finalize_sos,
    group_indices,
    invertibility_diagnostic,
    jacobi_richardson,
    normal_rhs,
    reconstruct,
)
from mocca.sampling import SamplingPattern, make_pattern


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def smooth_maps(N, nc, seed=1):
    return build_sensitivities(random_coefficients(PhantomSpec(N=N, num_coils=nc, L=3, seed=seed)), N).normalized


def sup(a):
    return np.max(np.abs(a))


def test_normal_rhs_trivial_cases(rng):
    pat = make_pattern("full", 8, 4, 3)
    assert not np.any(normal_rhs(np.zeros((2, 8, 8), complex), pat, oracles.random_maps(rng, 2, 8)))
    y = crandn(rng, 1, 8, 8)
    assert np.allclose(normal_rhs(y, pat, np.ones((1, 8, 8))), idft2_centered(y[0]))


def test_normal_rhs_dense(rng):
    N = 8
    pat = make_pattern("cols:2", N, 2, 3)
    s = oracles.random_maps(rng, 2, N)
    y = crandn(rng, 2, N, N) * pat.mask
    _, b = oracles.normal_system(y, pat.mask, s, 0.0)
    assert np.allclose(oracles.as_vector(normal_rhs(y, pat, s)), b / N**2, atol=1e-12)


def test_normal_rhs_shape_mismatch(rng):
    with pytest.raises(ValueError):
        normal_rhs(crandn(rng, 2, 8, 8), make_pattern("full", 8, 2, 3), oracles.random_maps(rng, 3, 8))


def test_full_sampling_is_stationary(rng):
    pat = make_pattern("full", 8, 4, 3)
    s = oracles.random_maps(rng, 3, 8)
    y = crandn(rng, 3, 8, 8)
    res = jacobi_richardson(y, pat, s, beta=0.0, tol=1e-14, max_iter=50)
    assert sup(res.image - normal_rhs(y, pat, s)) <= 1e-12
    assert res.iterations <= 1 and res.converged


def test_zero_data_one_step(rng):
    res = jacobi_richardson(np.zeros((2, 8, 8), complex), make_pattern("cols:2", 8, 2, 3), oracles.random_maps(rng, 2, 8))
    assert not np.any(res.image) and res.iterations == 0


@pytest.mark.parametrize("beta", [0.0, 1e-3])
def test_iteration_matches_dense_oracle(rng, beta):
    N = 16
    pat = make_pattern("cols:2", N, 4, 3)
    s = smooth_maps(N, 3)
    y = crandn(rng, 3, N, N) * pat.mask
    res = jacobi_richardson(y, pat, s, beta=beta, tol=1e-13, max_iter=10000)
    assert res.converged
    assert sup(res.image - oracles.normal_solution(y, pat.mask, s, beta)) <= 1e-8


def test_phantom_iteration_matches_dense_oracle():
    spec = PhantomSpec(N=32, num_coils=4, L=3, seed=0)
    masked, pat, _, _, c, _ = simulate(spec, "cols:2", 8)
    s = build_sensitivities(c, 32).normalized
    res = jacobi_richardson(masked, pat, s, beta=0.0, tol=1e-13, max_iter=5000)
    assert res.converged
    assert sup(res.image - oracles.normal_solution(masked, pat.mask, s, 0.0)) <= 1e-8


def test_fixed_point_residual(rng):
    N, tol = 16, 1e-9
    pat = make_pattern("cols:2", N, 4, 3)
    s = smooth_maps(N, 3)
    y = crandn(rng, 3, N, N) * pat.mask
    res = jacobi_richardson(y, pat, s, beta=1e-3, tol=tol, max_iter=10000)
    A, b = oracles.normal_system(y, pat.mask, s, 1e-3)
    r = np.linalg.norm(A @ oracles.as_vector(res.image) - b)
    assert r <= 10 * tol * N**2
    assert np.isclose(res.residuals[-1], r, rtol=1e-6)


def test_residual_monotone_on_model_data(caplog):
    spec = PhantomSpec(N=32, num_coils=4, L=3, seed=2)
    masked, pat, _, _, c, _ = simulate(spec, "cols:2", 8)
    s = build_sensitivities(c, 32).normalized
    res = jacobi_richardson(masked, pat, s, beta=0.0, tol=1e-12, max_iter=300)
    r = np.array(res.residuals)
    assert np.all(np.diff(r) <= 1e-9 * r[0])
    assert "residual increased" not in caplog.text


def test_minimal_norm_solution(rng):
    N = 16
    pat = make_pattern("cols:2", N, 4, 3)
    s = oracles.random_maps(rng, 3, N)
    s[:, 5, 7] = 0
    s[:, 11, 2] = 0
    y = crandn(rng, 3, N, N) * pat.mask
    res = jacobi_richardson(y, pat, s, beta=0.0, tol=1e-13, max_iter=10000)
    A, b = oracles.normal_system(y, pat.mask, s, 0.0)
    assert np.linalg.matrix_rank(A) < N * N
    ref = oracles.from_vector(np.linalg.pinv(A, rcond=1e-10) @ b, N)
    assert sup(res.image - ref) <= 1e-8


@pytest.mark.parametrize("beta", [0.0, 1e-3, 5.0])
def test_spectral_window(rng, beta):
    N = 8
    mask = rng.random((N, N)) < 0.5
    s = oracles.random_maps(rng, 3, N)
    A, _ = oracles.normal_system(np.zeros((3, N, N)), mask, s, beta)
    ev = np.linalg.eigvalsh(A / N**2)
    assert ev.min() >= beta / N**2 - 1e-10 and ev.max() <= 1 + beta / N**2 + 1e-10


def test_beta_window_enforced(rng):
    with pytest.raises(ValueError):
        jacobi_richardson(crandn(rng, 2, 4, 4), make_pattern("full", 4, 1, 1), oracles.random_maps(rng, 2, 4), beta=16.0)
    with pytest.raises(ValueError):
        ReconConfig(beta=-1)


def test_group_indices_cols4():
    N = 16
    idx = group_indices(N, 1, 4)
    assert idx.shape == (N * N // 4, 4, 2)
    for grp in idx:
        assert len(set(grp[:, 0])) == 1
        cols = np.sort(grp[:, 1])
        # second indices spaced by N/4, i.e. l - 3N/8, l - N/8, l + N/8, l + 3N/8 about a midpoint
        assert np.all(np.diff(cols) == N // 4)
    flat = idx.reshape(-1, 2)
    assert len({tuple(p) for p in flat}) == N * N


def test_group_indices_rows_cols():
    N = 16
    idx = group_indices(N, 2, 2)
    for grp in idx:
        k, l = grp[0]
        assert {tuple(p) for p in grp} == {(k, l), (k + N // 2, l), (k, l + N // 2), (k + N // 2, l + N // 2)}


@pytest.mark.parametrize("kind", ["cols:2", "cols:4", "rows-cols:2,2", "rows-cols:2,3", "full"])
@pytest.mark.parametrize("beta", [0.0, 1e-3])
def test_direct_matches_dense_lattice_oracle(rng, kind, beta):
    N = 24 if kind == "rows-cols:2,3" else 16
    pat = make_pattern(kind, N, 4, 3)
    s = oracles.random_maps(rng, 8, N)
    y = crandn(rng, 8, N, N) * pat.mask
    m = direct_block_solver(y, pat, s, beta)
    lattice = pat.regular_mask()
    ref = oracles.normal_solution(y * lattice, lattice, s, beta)
    assert sup(m - ref) <= 1e-10


def test_direct_ignores_off_lattice_acs(rng):
    N = 16
    pat = make_pattern("cols:4", N, 4, 3)
    s = oracles.random_maps(rng, 4, N)
    y = crandn(rng, 4, N, N) * pat.mask
    a = direct_block_solver(y, pat, s, 1e-3)
    b = direct_block_solver(y * pat.regular_mask(), pat, s, 1e-3)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kind", ["cols:4", "rows-cols:2,2"])
def test_direct_iterative_agree(rng, kind):
    N = 16
    pat = make_pattern(kind, N, 4, 3)
    lattice = SamplingPattern(N, pat.regular_mask(), 0, pat.kind, pat.row_stride, pat.col_stride)
    s = oracles.random_maps(rng, 8, N)
    y = crandn(rng, 8, N, N) * lattice.mask
    assert invertibility_diagnostic(s, pat)["invertible"]
    d = direct_block_solver(y, pat, s, 0.0)
    it = jacobi_richardson(y, lattice, s, beta=0.0, tol=1e-12, max_iter=20000)
    assert it.converged
    assert sup(d - it.image) <= 1e-6


def test_direct_singular_groups(rng):
    N = 8
    pat = make_pattern("cols:2", N, 2, 3)
    s = np.repeat(oracles.random_maps(rng, 1, N), 2, axis=0) / np.sqrt(2)
    y = crandn(rng, 2, N, N) * pat.mask
    with pytest.warns(RuntimeWarning, match="singular"):
        m = direct_block_solver(y, pat, s, 0.0)
    lattice = pat.regular_mask()
    assert sup(m - oracles.normal_solution(y * lattice, lattice, s, 0.0)) <= 1e-10
    with pytest.raises(NumericalError):
        direct_block_solver(y, pat, s, 0.0, singular="raise")


def test_direct_preconditions(rng):
    s = oracles.random_maps(rng, 2, 12)
    y = crandn(rng, 2, 12, 12)
    with pytest.raises(ValueError):
        direct_block_solver(y, make_pattern("cols:4", 12, 4, 3), s)
    explicit = SamplingPattern(12, np.ones((12, 12), bool), 6)
    with pytest.raises(ValueError):
        direct_block_solver(y, explicit, s)


def test_finalize_sos(rng):
    u = rng.random((8, 8)) + 0.1
    u /= np.linalg.norm(u)
    s = oracles.random_maps(rng, 2, 8)
    img, maps = finalize_sos(u, s)
    assert np.allclose(img, u) and np.allclose(maps, s)
    img, maps = finalize_sos(1j * u, s)
    assert np.allclose(img, u) and np.allclose(maps, 1j * s)
    z = u.astype(complex)
    z[3, 3] = 0
    img, maps = finalize_sos(z, s)
    assert np.all(maps[:, 3, 3] == 0)
    assert np.isclose(np.linalg.norm(img), 1)
    with pytest.raises(NumericalError):
        finalize_sos(np.zeros((8, 8)), s)


def test_phantom_round_trip():
    spec = PhantomSpec(N=32, num_coils=4, L=3, seed=5)
    masked, pat, truth, _, c, full = simulate(spec, "cols:2", 8)
    s = build_sensitivities(c, 32).normalized
    res = reconstruct(masked, pat, s, ReconConfig(beta=0.0, tol=1e-13, max_iter=5000))
    img, _ = finalize_sos(res.image, s)
    assert np.max(np.abs(img - truth)) / truth.max() <= 1e-8
    assert np.allclose(truth, sos_image(full))


def test_diagnostic_reports(rng):
    N = 16
    pat = make_pattern("rows-cols:2,2", N, 4, 3)
    good = invertibility_diagnostic(oracles.random_maps(rng, 4, N), pat)
    assert good["available"] and good["invertible"] and good["min_singular_value"] > 0
    assert good["group_size"] == 4 and good["num_groups"] == N * N // 4
    one = invertibility_diagnostic(oracles.random_maps(rng, 1, N), pat)
    assert not one["invertible"] and one["num_rank_deficient"] == N * N // 4
    same = np.repeat(oracles.random_maps(rng, 1, N), 4, axis=0) / 2
    assert not invertibility_diagnostic(same, pat)["invertible"]
    explicit = SamplingPattern(N, np.ones((N, N), bool), 6)
    assert invertibility_diagnostic(same, explicit) == {"available": False, "reason": "diagnostic unavailable for explicit patterns"}


def test_coefficient_rank_test():
    spec = PhantomSpec(N=16, num_coils=4, L=3, seed=0)
    c = random_coefficients(spec)
    rank, full = coefficient_rank_test(c, make_pattern("cols:2", 16, 4, 3))
    assert rank == full == 256
    rank, _ = coefficient_rank_test(c[:1], make_pattern("cols:2", 16, 4, 3))
    assert rank < 256
    with pytest.raises(ValueError):
        coefficient_rank_test(c, make_pattern("cols:2", 32, 4, 3))


def test_auto_solver_choice(rng):
    N = 16
    pat = make_pattern("cols:2", N, 4, 3)
    s = oracles.random_maps(rng, 4, N)
    y = crandn(rng, 4, N, N) * pat.mask
    assert reconstruct(y, pat, s).solver == "direct"
    assert reconstruct(y, pat, s, ReconConfig(beta=0.0)).solver == "iterative"
    explicit = SamplingPattern(N, pat.mask, 6)
    assert reconstruct(y, explicit, s).solver == "iterative"


def test_default_parameters():
    cfg = ReconConfig()
    assert (cfg.beta, cfg.tol, cfg.max_iter, cfg.solver) == (1e-3, 1e-9, 200, "auto")
