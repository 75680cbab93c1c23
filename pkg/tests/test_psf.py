import numpy as np
import pytest

from conftest import load_code
from qrclean.degrade import gaussian_kernel
from qrclean.imgops import Kernel, center_crop, convolve_periodic, l2_dist_on, mirror_extend
from qrclean.psf import (
    PsfEstimateConfig,
    default_sizes,
    estimate_psf_full,
    laplacian_symbol,
    residual_score,
    select_kernel_scored,
    solve_periodic,
    truncate_and_normalize,
    uniform_psf,
)
from qrclean.qrgeom import c1_region, infer_geometry


def conv_circ(a, b):
    """Direct O(N^4) circular convolution, origin-aligned."""
    h, w = a.shape
    out = np.zeros_like(a)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for i in range(h):
                for j in range(w):
                    acc += a[i, j] * b[(y - i) % h, (x - j) % w]
            out[y, x] = acc
    return out


def corr_circ(r, b):
    """Adjoint of phi -> conv_circ(phi, b): circular correlation with b."""
    h, w = r.shape
    out = np.zeros_like(r)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for i in range(h):
                for j in range(w):
                    acc += b[i, j] * r[(y + i) % h, (x + j) % w]
            out[y, x] = acc
    return out


def neg_laplacian_periodic(phi):
    return 4 * phi - (
        np.roll(phi, 1, 0) + np.roll(phi, -1, 0) + np.roll(phi, 1, 1) + np.roll(phi, -1, 1)
    )


def quadratic_objective(phi, z, u1, lam):
    gx = np.roll(phi, -1, 1) - phi
    gy = np.roll(phi, -1, 0) - phi
    resid = conv_circ(phi, z) - u1
    return 0.5 * float(np.sum(gx * gx + gy * gy)) + 0.5 * lam * float(np.sum(resid * resid))


@pytest.fixture(scope="module")
def corner_pair():
    z = load_code("code1")
    g = infer_geometry(z)
    c1 = c1_region(g)
    return z, g, c1, center_crop(z, c1)


class TestLaplacianSymbol:
    def test_formula(self):
        h, w = 6, 9
        sym = laplacian_symbol((h, w))
        for l in range(h):
            for k in range(w):
                want = 4 - 2 * np.cos(2 * np.pi * k / w) - 2 * np.cos(2 * np.pi * l / h)
                assert abs(sym[l, k] - want) < 1e-12

    def test_matches_spatial_operator(self):
        rng = np.random.default_rng(67)
        phi = rng.standard_normal((8, 8))
        via_fft = np.real(np.fft.ifft2(laplacian_symbol((8, 8)) * np.fft.fft2(phi)))
        assert np.max(np.abs(via_fft - neg_laplacian_periodic(phi))) < 1e-10


class TestSolvePeriodic:
    def test_euler_lagrange_residual(self):
        # the solution must satisfy -L phi + lam * corr(conv(phi,z) - u1, z) = 0
        rng = np.random.default_rng(71)
        for lam in (1e2, 1e4):
            z = rng.random((12, 12))
            u1 = rng.random((12, 12))
            phi = solve_periodic(u1, z, lam)
            el = neg_laplacian_periodic(phi) + lam * corr_circ(conv_circ(phi, z) - u1, z)
            scale = lam * np.linalg.norm(corr_circ(u1, z))
            assert np.linalg.norm(el) / scale < 1e-8

    def test_local_optimality(self):
        rng = np.random.default_rng(73)
        z = rng.random((10, 10))
        u1 = rng.random((10, 10))
        lam = 500.0
        phi = solve_periodic(u1, z, lam)
        j0 = quadratic_objective(phi, z, u1, lam)
        for _ in range(100):
            pert = rng.standard_normal((10, 10)) * rng.choice([1e-4, 1e-2, 1.0])
            assert quadratic_objective(phi + pert, z, u1, lam) >= j0 - 1e-12

    def test_lambda_negative_rejected(self):
        with pytest.raises(ValueError):
            solve_periodic(np.ones((4, 4)), np.ones((4, 4)), -1.0)


class TestEstimatePsfFull:
    def test_lambda_zero_flat(self, corner_pair):
        _, _, c1, zc = corner_pair
        phi = estimate_psf_full(zc, zc, 0.0)
        assert phi.shape == zc.shape
        assert np.allclose(phi, 1.0 / zc.size, atol=0)

    def test_identity_case_peaks_at_center(self, corner_pair):
        # u1 == z: the estimate is a regularized delta with unit total mass
        _, _, _, zc = corner_pair
        phi = estimate_psf_full(zc, zc, 1e6)
        h, w = phi.shape
        assert phi[h // 2, w // 2] == phi.max()
        assert abs(phi.sum() - 1.0) < 1e-2

    @pytest.mark.xfail(
        strict=True,
        reason="with corners normalized to unit sum, the roughness term dominates "
        "most frequencies even at lambda1=1e6; the measured 3x3 center mass "
        "fraction is 0.078 (0.20 at 1e12), far below 0.9",
    )
    def test_identity_case_near_delta_concentration(self, corner_pair):
        _, _, _, zc = corner_pair
        phi = estimate_psf_full(zc, zc, 1e6)
        h, w = phi.shape
        cy, cx = h // 2, w // 2
        frac = np.abs(phi[cy - 1 : cy + 2, cx - 1 : cx + 2]).sum() / np.abs(phi).sum()
        assert frac >= 0.9

    @pytest.mark.xfail(
        strict=True,
        reason="full-field estimate carries ringing from near-null frequencies of "
        "the binary corner; measured relative L2 error vs the embedded true "
        "kernel is 0.62. Truncation+selection is what recovers the kernel "
        "(see test_blur_recovered_after_selection).",
    )
    def test_full_field_inversion_tight(self, corner_pair):
        z, _, c1, zc = corner_pair
        k = gaussian_kernel(7, 3.0)
        u1c = center_crop(convolve_periodic(z, k), c1)
        phi = estimate_psf_full(u1c, zc, 1e4)
        h, w = phi.shape
        cy, cx = h // 2, w // 2
        truth = np.zeros_like(phi)
        truth[cy - 3 : cy + 4, cx - 3 : cx + 4] = k.weights
        assert np.linalg.norm(phi - truth) / np.linalg.norm(truth) <= 0.05

    def test_shape_and_nonneg_lambda_checks(self, corner_pair):
        _, _, _, zc = corner_pair
        with pytest.raises(ValueError):
            estimate_psf_full(zc, zc, -1.0)
        from qrclean.imgops import DimensionError

        with pytest.raises(DimensionError):
            estimate_psf_full(zc, zc[:-1, :-1], 1e4)


class TestTruncateAndNormalize:
    def test_full_extent_identity(self):
        w = gaussian_kernel(9, 2.0).weights
        out = truncate_and_normalize(w, 9)
        assert np.allclose(out.weights, w, atol=1e-15)

    def test_delta_size_one(self):
        field = np.zeros((11, 11))
        field[5, 5] = 0.9
        field[5, 6] = 0.1
        assert np.array_equal(truncate_and_normalize(field, 1).weights, [[1.0]])

    def test_recovers_embedded_gaussian(self):
        rng = np.random.default_rng(79)
        field = rng.uniform(-1e-4, 1e-4, (33, 33))
        field[13:20, 13:20] += gaussian_kernel(7, 2.0).weights
        out = truncate_and_normalize(field, 7)
        assert np.abs(out.weights - gaussian_kernel(7, 2.0).weights).sum() <= 1e-2

    def test_clamps_negatives(self):
        field = np.full((5, 5), -1.0)
        field[2, 2] = 3.0
        out = truncate_and_normalize(field, 3)
        assert np.array_equal(out.weights, [[0, 0, 0], [0, 1, 0], [0, 0, 0]])

    def test_degenerate_block_rejected(self):
        with pytest.raises(ValueError):
            truncate_and_normalize(np.full((7, 7), -0.1), 3)

    def test_even_size_rejected(self):
        from qrclean.imgops import DimensionError

        with pytest.raises(DimensionError):
            truncate_and_normalize(np.ones((7, 7)) / 49, 4)


class TestSelectKernel:
    def test_identity_selects_delta(self, corner_pair):
        z, _, c1, zc = corner_pair
        phi_full = estimate_psf_full(zc, zc, 1e4)
        kern, scores = select_kernel_scored(phi_full, z, z, c1)
        assert kern.size == 1
        assert dict(scores)[1] < 1e-20

    def test_blur_recovered_after_selection(self, corner_pair):
        z, _, c1, zc = corner_pair
        k = gaussian_kernel(7, 3.0)
        u1 = convolve_periodic(z, k)
        phi_full = estimate_psf_full(center_crop(u1, c1), zc, 1e4)
        kern, _ = select_kernel_scored(phi_full, z, u1, c1)
        assert kern.size in (5, 7, 9)
        n = max(kern.size, 7)
        a = np.zeros((n, n))
        b = np.zeros((n, n))
        oa, ob = (n - kern.size) // 2, (n - 7) // 2
        a[oa : oa + kern.size, oa : oa + kern.size] = kern.weights
        b[ob : ob + 7, ob : ob + 7] = k.weights
        assert np.abs(a - b).sum() <= 0.1

    def test_single_candidate_size(self, corner_pair):
        z, _, c1, zc = corner_pair
        phi_full = estimate_psf_full(zc, zc, 1e4)
        kern, scores = select_kernel_scored(
            phi_full, z, z, c1, PsfEstimateConfig(candidate_sizes=(5,))
        )
        assert kern.size == 5
        assert [s for s, _ in scores] == [5]

    def test_scores_match_recomputation_bitwise(self, corner_pair):
        z, _, c1, zc = corner_pair
        k = gaussian_kernel(5, 1.5)
        u1 = convolve_periodic(z, k)
        phi_full = estimate_psf_full(center_crop(u1, c1), zc, 1e4)
        cfg = PsfEstimateConfig(candidate_sizes=(1, 3, 5, 7, 9))
        _, scores = select_kernel_scored(phi_full, z, u1, c1, cfg)
        for size, stored in scores:
            kern = truncate_and_normalize(phi_full, size)
            again = l2_dist_on(convolve_periodic(z, kern), u1, c1) ** 2
            assert again == stored

    def test_selected_kernel_satisfies_invariants(self, corner_pair):
        z, _, c1, zc = corner_pair
        k = gaussian_kernel(7, 3.0)
        u1 = convolve_periodic(z, k)
        phi_full = estimate_psf_full(center_crop(u1, c1), zc, 1e4)
        kern, _ = select_kernel_scored(phi_full, z, u1, c1)
        assert np.all(kern.weights >= 0)
        assert abs(kern.weights.sum() - 1.0) < 1e-12


class TestUniformPsf:
    def test_identity_selects_delta(self, corner_pair):
        z, _, c1, _ = corner_pair
        assert uniform_psf(z, z, c1).size == 1

    def test_flat_forward_model(self, corner_pair):
        z, _, c1, _ = corner_pair
        flat5 = Kernel(np.full((5, 5), 1.0 / 25))
        u1 = convolve_periodic(z, flat5)
        kern = uniform_psf(z, u1, c1)
        assert kern.size == 5
        assert np.allclose(kern.weights, 1.0 / 25)
        r5 = residual_score(flat5, z, u1, c1)
        for n in (3, 7):
            other = Kernel(np.full((n, n), 1.0 / (n * n)))
            assert r5 < residual_score(other, z, u1, c1)

    def test_fixed_size_list(self, corner_pair):
        z, _, c1, _ = corner_pair
        kern = uniform_psf(z, z, c1, sizes=(3,))
        assert kern.size == 3
        assert np.allclose(kern.weights, 1.0 / 9)

    def test_agrees_with_lambda_zero_estimate(self, corner_pair):
        # the flat field fed to selection is exactly the lambda1=0 estimate
        z, _, c1, zc = corner_pair
        flat = estimate_psf_full(zc, zc, 0.0)
        kern_a, _ = select_kernel_scored(flat, z, z, c1, PsfEstimateConfig(lambda1=0.0))
        kern_b = uniform_psf(z, z, c1)
        assert np.array_equal(kern_a.weights, kern_b.weights)


class TestDefaultSizes:
    def test_odd_progression(self):
        assert default_sizes(7) == (1, 3, 5, 7)
        assert default_sizes(8) == (1, 3, 5, 7)
        assert default_sizes(1) == (1,)
