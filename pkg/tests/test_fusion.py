import numpy as np
import pytest

from motionfuse import fusion
from motionfuse.tensor import SeededRng, ShapeError


def adaptive_conv_oracle(h, kern):
    """Per-pixel nested-loop reference with replicate padding.

    h: (C, H, W); kern: (H, W, n, n).
    """
    c_dim, hh, ww = h.shape
    n = kern.shape[-1]
    r = n // 2
    out = np.zeros_like(h)
    for c in range(c_dim):
        for a in range(hh):
            for b in range(ww):
                acc = 0.0
                for u in range(n):
                    for v in range(n):
                        ai = min(max(a + u - r, 0), hh - 1)
                        bi = min(max(b + v - r, 0), ww - 1)
                        acc += h[c, ai, bi] * kern[a, b, u, v]
                out[c, a, b] = acc
    return out


class TestExpandKernel:
    def test_outer_product(self):
        k = fusion.expand_kernel(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
        assert np.array_equal(k, [[3.0, 4.0], [6.0, 8.0]])

    def test_zero_vector_gives_zero_kernel(self):
        k = fusion.expand_kernel(np.zeros(5), SeededRng(0).normals((5,)))
        assert np.array_equal(k, np.zeros((5, 5)))

    def test_rank_at_most_one(self):
        rng = SeededRng(1)
        for _ in range(5):
            k = fusion.expand_kernel(rng.normals((7,)), rng.normals((7,)))
            assert np.linalg.matrix_rank(k) <= 1

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            fusion.expand_kernel(np.zeros(3), np.zeros(4))


class TestRecoverDense:
    def test_row_major_layout(self):
        w = np.zeros((1, 1, 4))
        w[0, 0] = [1.0, 2.0, 3.0, 4.0]
        assert np.array_equal(fusion.recover_dense(w, 0, 0), [[1.0, 2.0], [3.0, 4.0]])

    def test_round_trip(self):
        rng = SeededRng(2)
        kern = rng.normals((3, 3))
        flat = fusion.flatten_kernel(kern)
        field = np.broadcast_to(flat, (4, 4, 9)).copy()
        assert np.array_equal(fusion.recover_dense(field, 2, 1), kern)

    def test_recover_expand_consistency(self):
        rng = SeededRng(3)
        wv, wh = rng.normals((4, 4, 3)), rng.normals((4, 4, 3))
        flat = fusion.flatten_kernel(fusion.expand_kernel(wv, wh))
        assert np.array_equal(
            fusion.recover_dense(flat, 1, 2), fusion.expand_kernel(wv[1, 2], wh[1, 2])
        )

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            fusion.recover_dense(np.zeros((2, 2, 4)), 2, 0)


class TestAdaptiveConv:
    def test_identity_kernels_preserve_input_exactly(self):
        h = SeededRng(4).normals((3, 6, 6), dtype=np.float32)
        ident = fusion.identity_separable(6, 6, 3)
        out, _ = fusion.adaptive_conv_forward(h, ident)
        assert np.array_equal(out, h)

    def test_shift_kernel_moves_interior(self):
        h = SeededRng(5).normals((1, 5, 5))
        wv = np.zeros((5, 5, 3))
        wh = np.zeros((5, 5, 3))
        wv[..., 1] = 1.0  # vertical center
        wh[..., 2] = 1.0  # horizontal offset +1
        out, _ = fusion.adaptive_conv_forward(h, fusion.SeparableKernelField(wv, wh))
        assert np.allclose(out[:, :, :-1], h[:, :, 1:], atol=0)
        # replicate padding makes the last column repeat its own value
        assert np.allclose(out[:, :, -1], h[:, :, -1], atol=0)

    def test_matches_nested_loop_oracle(self):
        rng = SeededRng(6)
        h = rng.normals((1, 4, 4))
        flat = rng.normals((4, 4, 9))
        out, _ = fusion.adaptive_conv_forward(h, fusion.DenseKernelField(flat))
        ref = adaptive_conv_oracle(h, flat.reshape(4, 4, 3, 3))
        assert np.max(np.abs(out - ref)) < 1e-12

    def test_separable_equals_dense_expansion(self):
        rng = SeededRng(7)
        for _ in range(10):
            h = rng.normals((2, 5, 5), dtype=np.float32)
            wv = rng.normals((5, 5, 3), dtype=np.float32)
            wh = rng.normals((5, 5, 3), dtype=np.float32)
            sep, _ = fusion.adaptive_conv_forward(h, fusion.SeparableKernelField(wv, wh))
            dense = fusion.DenseKernelField(fusion.flatten_kernel(fusion.expand_kernel(wv, wh)))
            den, _ = fusion.adaptive_conv_forward(h, dense)
            denom = max(np.linalg.norm(den), 1e-12)
            assert np.linalg.norm(sep - den) / denom < 1e-6

    def test_linear_in_content(self):
        rng = SeededRng(8)
        h1 = rng.normals((2, 6, 6), dtype=np.float32)
        h2 = rng.normals((2, 6, 6), dtype=np.float32)
        field = fusion.SeparableKernelField(
            rng.normals((6, 6, 3), dtype=np.float32), rng.normals((6, 6, 3), dtype=np.float32)
        )
        a, b = 0.7, -1.3
        lhs, _ = fusion.adaptive_conv_forward(a * h1 + b * h2, field)
        r1, _ = fusion.adaptive_conv_forward(h1, field)
        r2, _ = fusion.adaptive_conv_forward(h2, field)
        rhs = a * r1 + b * r2
        assert np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-12) < 1e-6

    def test_channel_permutation_equivariance(self):
        rng = SeededRng(9)
        h = rng.normals((4, 5, 5))
        field = fusion.SeparableKernelField(rng.normals((5, 5, 3)), rng.normals((5, 5, 3)))
        perm = [2, 0, 3, 1]
        out, _ = fusion.adaptive_conv_forward(h, field)
        out_perm, _ = fusion.adaptive_conv_forward(h[perm], field)
        assert np.array_equal(out_perm, out[perm])

    def test_even_kernel_rejected(self):
        h = np.zeros((1, 4, 4))
        with pytest.raises(ValueError):
            fusion.adaptive_conv_forward(h, fusion.DenseKernelField(np.zeros((4, 4, 4))))

    def test_extent_mismatch(self):
        h = np.zeros((1, 4, 4))
        with pytest.raises(ShapeError):
            fusion.adaptive_conv_forward(h, fusion.DenseKernelField(np.zeros((5, 5, 9))))


class TestMaskBlend:
    def test_zero_mask_preserves_bits(self):
        rng = SeededRng(10)
        h = rng.normals((3, 4, 4), dtype=np.float32)
        ht = rng.normals((3, 4, 4), dtype=np.float32)
        out, _ = fusion.mask_blend_forward(h, ht, np.zeros((4, 4), dtype=np.float32))
        assert np.array_equal(out, h)

    def test_one_mask_selects_refined(self):
        rng = SeededRng(11)
        h = rng.normals((3, 4, 4), dtype=np.float32)
        ht = rng.normals((3, 4, 4), dtype=np.float32)
        out, _ = fusion.mask_blend_forward(h, ht, np.ones((4, 4), dtype=np.float32))
        assert np.array_equal(out, ht)

    def test_blend_value(self):
        h = np.full((1, 1, 1), 5.0)
        ht = np.full((1, 1, 1), 9.0)
        out, _ = fusion.mask_blend_forward(h, ht, np.full((1, 1), 0.25))
        assert out[0, 0, 0] == 6.0

    def test_out_of_range_mask_rejected_not_clamped(self):
        h = np.zeros((1, 2, 2))
        with pytest.raises(ValueError):
            fusion.mask_blend_forward(h, h, np.full((2, 2), 1.5))
        with pytest.raises(ValueError):
            fusion.mask_blend_forward(h, h, np.full((2, 2), -0.1))


class TestMaskActivation:
    def test_midpoint(self):
        m, _ = fusion.mask_activation_forward(np.array([0.0]))
        assert m[0] == 0.5

    def test_saturation(self):
        m, _ = fusion.mask_activation_forward(np.array([20.0, -20.0]))
        assert abs(m[0] - 1.0) < 1e-8 and abs(m[1]) < 1e-8

    def test_range_always_valid(self):
        m, _ = fusion.mask_activation_forward(SeededRng(12).normals((1000,)) * 50)
        assert np.min(m) >= 0.0 and np.max(m) <= 1.0


class TestFusePyramid:
    def _pyramid(self, rng, scales=(4, 8), channels=2, dtype=np.float32):
        pyr, kernels, masks = [], [], []
        for res in scales:
            pyr.append(rng.normals((channels, res, res), dtype=dtype))
            kernels.append(
                fusion.SeparableKernelField(
                    rng.normals((res, res, 3), dtype=dtype),
                    rng.normals((res, res, 3), dtype=dtype),
                )
            )
            masks.append((rng.uniforms((res, res)) * 0.9).astype(dtype))
        return pyr, kernels, masks

    def test_zero_masks_return_pyramid_unchanged(self):
        pyr, kernels, masks = self._pyramid(SeededRng(13))
        zero_masks = [np.zeros_like(m) for m in masks]
        refined, _ = fusion.fuse_pyramid_forward(pyr, kernels, zero_masks)
        for a, b in zip(refined, pyr):
            assert np.array_equal(a, b)

    def test_scale_independence(self):
        rng = SeededRng(14)
        pyr, kernels, masks = self._pyramid(rng)
        base, _ = fusion.fuse_pyramid_forward(pyr, kernels, masks)
        perturbed = [
            fusion.SeparableKernelField(kernels[0].wv + 1.0, kernels[0].wh.copy()),
            kernels[1],
        ]
        out, _ = fusion.fuse_pyramid_forward(pyr, perturbed, masks)
        assert not np.array_equal(out[0], base[0])
        assert np.array_equal(out[1], base[1])

    def test_matches_per_scale_composition(self):
        pyr, kernels, masks = self._pyramid(SeededRng(15))
        refined, _ = fusion.fuse_pyramid_forward(pyr, kernels, masks)
        for s in range(2):
            ht, _ = fusion.adaptive_conv_forward(pyr[s], kernels[s])
            expect, _ = fusion.mask_blend_forward(pyr[s], ht, masks[s])
            assert np.array_equal(refined[s], expect)

    def test_error_reports_scale_index(self):
        pyr, kernels, masks = self._pyramid(SeededRng(16))
        masks[1] = masks[1] + 5.0
        with pytest.raises(ValueError) as err:
            fusion.fuse_pyramid_forward(pyr, kernels, masks)
        assert "scale 1" in str(err.value)

    def test_length_mismatch(self):
        pyr, kernels, masks = self._pyramid(SeededRng(17))
        with pytest.raises(ValueError):
            fusion.fuse_pyramid_forward(pyr, kernels[:1], masks)


class TestKernelParamCount:
    def test_per_pixel_counts(self):
        assert fusion.kernel_param_count(17, 1, "dense", [64])["per_pixel"] == 289
        assert fusion.kernel_param_count(5, 1, "separable", [64])["per_pixel"] == 10
        assert fusion.kernel_param_count(5, 1, "dense", [64])["per_pixel"] == 25

    def test_multi_scale_totals(self):
        sep = fusion.kernel_param_count(5, 4, "separable", [8, 16, 32, 64])
        assert sep["total"] == 10 * (64 + 256 + 1024 + 4096) == 54_400
        dense = fusion.kernel_param_count(17, 1, "dense", [64])
        assert dense["total"] == 289 * 4096 == 1_183_744
        assert sep["total"] < 0.05 * dense["total"]

    def test_validation(self):
        with pytest.raises(ValueError):
            fusion.kernel_param_count(5, 2, "dense", [8])
        with pytest.raises(ValueError):
            fusion.kernel_param_count(5, 1, "sparse", [8])


def test_fusion_config_validation():
    fusion.FusionConfig(2, 3, (16, 32), (8, 8))
    with pytest.raises(ValueError):
        fusion.FusionConfig(2, 4, (16, 32), (8, 8))
    with pytest.raises(ValueError):
        fusion.FusionConfig(2, 3, (32, 16), (8, 8))
    with pytest.raises(ValueError):
        fusion.FusionConfig(2, 3, (16, 32), (8,))
    with pytest.raises(ValueError):
        fusion.FusionConfig(2, 3, (16, 32), (8, 8), padding_mode="zeros")


def test_mask_field_validates_range():
    fusion.MaskField(np.array([[0.0, 1.0]]))
    with pytest.raises(ValueError):
        fusion.MaskField(np.array([[1.2]]))
