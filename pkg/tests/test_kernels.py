"""Backend agreement and determinism of the hot Monte Carlo kernels."""

import numpy as np
import pytest

from annotation_incentives import kernels

KEY = 2**63 + 987654321  # exercises the full 64-bit seed range


def _both_backends():
    impls = [kernels.get_impl("numpy")]
    if kernels.numba_impl is not None:
        impls.append(kernels.get_impl("numba"))
    return impls


numba_required = pytest.mark.skipif(kernels.numba_impl is None,
                                    reason="numba backend unavailable")


class TestDeterminism:
    def test_uniform_stream_repeats(self):
        impl = kernels.active_impl
        assert np.array_equal(impl.uniforms(256, KEY, 10),
                              impl.uniforms(256, KEY, 10))

    def test_uniforms_counter_offset_consistent(self):
        impl = kernels.active_impl
        full = impl.uniforms(100, KEY, 0)
        tail = impl.uniforms(60, KEY, 40)
        assert np.array_equal(full[40:], tail)

    def test_uniforms_open_unit_interval(self):
        u = kernels.active_impl.uniforms(100000, KEY)
        assert u.min() > 0.0
        assert u.max() <= 1.0

    def test_gaussian_items_match_mean_noise_layout(self):
        impl = kernels.active_impl
        means = impl.gaussian_mean_noise(100, 8, KEY)
        items = impl.gaussian_items(100, KEY, 7)
        assert abs(items.mean() - means[7]) < 1e-14


@numba_required
class TestBackendAgreement:
    def test_uniforms_bit_identical(self):
        a = kernels.get_impl("numpy").uniforms(4096, KEY, 3)
        b = kernels.get_impl("numba").uniforms(4096, KEY, 3)
        assert np.array_equal(a, b)

    def test_gaussian_streams_agree(self):
        a = kernels.get_impl("numpy").gaussian_items(2048, KEY, 5)
        b = kernels.get_impl("numba").gaussian_items(2048, KEY, 5)
        np.testing.assert_allclose(a, b, atol=1e-14, rtol=0)

    def test_gaussian_mean_noise_agrees(self):
        a = kernels.get_impl("numpy").gaussian_mean_noise(128, 1000, KEY)
        b = kernels.get_impl("numba").gaussian_mean_noise(128, 1000, KEY)
        np.testing.assert_allclose(a, b, atol=1e-14, rtol=0)

    @pytest.mark.parametrize("kind,ctx,wts,theta", [
        (kernels.LATENT_FACTOR_CODE, [1.0], [1.0], 0.6),
        (kernels.LATENT_FACTOR_CODE, [0.8, 1.0], [0.3, 0.7], 0.4),
        (kernels.BT_TEMPERATURE_CODE, [2.0], [1.0], 0.5),
        (kernels.BT_TEMPERATURE_CODE, [1.0, 3.0], [0.5, 0.5], 0.7),
    ])
    def test_binary_paths_bit_identical(self, kind, ctx, wts, theta):
        ctx = np.asarray(ctx, dtype=np.float64)
        wts = np.asarray(wts, dtype=np.float64)
        out = []
        for impl in _both_backends():
            cnt, suc = impl.binary_sample_stats(kind, ctx, wts, theta, 150, 400, KEY)
            theta_hat = impl.binary_mle_batch(kind, ctx, 0.0, 1.0, cnt, suc, 1e-10)
            nz = impl.binary_nz_at(kind, ctx, cnt, suc, theta)
            out.append((cnt, suc, theta_hat, nz))
        (c1, s1, t1, z1), (c2, s2, t2, z2) = out
        assert np.array_equal(c1, c2)
        assert np.array_equal(s1, s2)
        assert np.array_equal(t1, t2)
        np.testing.assert_allclose(z1, z2, rtol=1e-12)

    def test_binary_items_match_stats(self):
        ctx = np.asarray([0.8, 1.0])
        wts = np.asarray([0.5, 0.5])
        for impl in _both_backends():
            groups, labels = impl.binary_items(
                kernels.LATENT_FACTOR_CODE, ctx, wts, 0.5, 200, KEY, rep=3)
            cnt, suc = impl.binary_sample_stats(
                kernels.LATENT_FACTOR_CODE, ctx, wts, 0.5, 200, 4, KEY)
            for g in range(2):
                assert cnt[3, g] == np.sum(groups == g)
                assert suc[3, g] == np.sum((groups == g) & (labels == 1))


class TestStatisticalSanity:
    def test_mean_noise_scales_with_n(self):
        impl = kernels.active_impl
        m = impl.gaussian_mean_noise(400, 4000, KEY)
        assert abs(m.mean()) < 4.0 / np.sqrt(400 * 4000)
        assert abs(m.std() * np.sqrt(400) - 1.0) < 0.05

    def test_binomial_counts_frequency(self):
        ctx = np.asarray([1.0])
        wts = np.asarray([1.0])
        cnt, suc = kernels.active_impl.binary_sample_stats(
            kernels.LATENT_FACTOR_CODE, ctx, wts, 0.5, 100, 5000, KEY)
        assert np.all(cnt == 100)
        p = suc.sum() / cnt.sum()
        assert abs(p - 0.75) < 4 * np.sqrt(0.75 * 0.25 / 500000)

    def test_mle_batch_boundary_cases(self):
        impl = kernels.active_impl
        ctx = np.asarray([1.0])
        cnt = np.asarray([[10], [10], [10]], dtype=np.int64)
        suc = np.asarray([[10], [0], [9]], dtype=np.int64)
        theta = impl.binary_mle_batch(
            kernels.LATENT_FACTOR_CODE, ctx, 0.0, 1.0, cnt, suc, 1e-10)
        assert theta[0] == 1.0
        assert theta[1] == 0.0
        assert abs(theta[2] - 0.8) < 1e-9
