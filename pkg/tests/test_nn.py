import itertools

import numpy as np
import pytest

from panfuse import nn
from panfuse.nn import ConvKernel


def conv_bruteforce(x, w, b):
    """Quintuple-loop reference for "same" zero-padded cross-correlation."""
    H, W, _ = x.shape
    kh, kw, c_in, c_out = w.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((H, W, c_out), dtype=np.float64)
    for y in range(H):
        for xx in range(W):
            for o in range(c_out):
                acc = float(b[o])
                for u in range(kh):
                    for v in range(kw):
                        yy, xc = y + u - ph, xx + v - pw
                        if 0 <= yy < H and 0 <= xc < W:
                            for i in range(c_in):
                                acc += w[u, v, i, o] * x[yy, xc, i]
                out[y, xx, o] = acc
    return out


def rel_err(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


class TestConvForward:
    def test_identity_kernel(self, nprng):
        x = nprng.uniform(-1, 1, (6, 7, 1))
        k = ConvKernel(np.ones((1, 1, 1, 1)), np.zeros(1))
        assert np.array_equal(nn.conv2d_same(x, k), x)

    def test_bias_only(self, nprng):
        x = nprng.uniform(-1, 1, (5, 5, 2))
        k = ConvKernel(np.zeros((3, 3, 2, 3)), np.full(3, 0.7))
        out = nn.conv2d_same(x, k)
        assert out.shape == (5, 5, 3)
        assert np.allclose(out, 0.7)

    @pytest.mark.parametrize("ksize", [1, 3, 5, 7, 9])
    def test_bruteforce_oracle(self, ksize, nprng):
        x = nprng.uniform(-1, 1, (8, 6, 3))
        w = nprng.uniform(-1, 1, (ksize, ksize, 3, 2))
        b = nprng.uniform(-1, 1, 2)
        out = nn.conv2d_same(x, ConvKernel(w, b))
        ref = conv_bruteforce(x, w, b)
        assert np.abs(out - ref).max() < 1e-6

    @pytest.mark.parametrize("ksize", [1, 3, 5, 7])
    def test_stable_mode_matches_oracle(self, ksize, nprng):
        x = nprng.uniform(-1, 1, (6, 6, 4))
        w = nprng.uniform(-1, 1, (ksize, ksize, 4, 3))
        b = nprng.uniform(-1, 1, 3)
        out = nn.conv2d_same(x, ConvKernel(w, b), stable=True)
        assert np.abs(out - conv_bruteforce(x, w, b)).max() < 1e-6

    def test_stable_mode_is_crop_invariant(self, nprng):
        # the pixel values inside a crop match the whole-image pass bit for bit
        x = nprng.uniform(-1, 1, (40, 40, 6)).astype(np.float32)
        k = ConvKernel(
            nprng.uniform(-1, 1, (3, 3, 6, 2)).astype(np.float32),
            nprng.uniform(-1, 1, 2).astype(np.float32),
        )
        full = nn.conv2d_same(x, k, stable=True)
        sub = nn.conv2d_same(np.ascontiguousarray(x[10:30, 5:35]), k, stable=True)
        assert np.array_equal(full[11:29, 6:34], sub[1:19, 1:29])

    def test_linearity_without_bias(self, nprng):
        x1 = nprng.uniform(-1, 1, (7, 7, 3))
        x2 = nprng.uniform(-1, 1, (7, 7, 3))
        k = ConvKernel(nprng.uniform(-1, 1, (5, 5, 3, 4)), np.zeros(4))
        a, b = 1.7, -0.45
        lhs = nn.conv2d_same(a * x1 + b * x2, k)
        rhs = a * nn.conv2d_same(x1, k) + b * nn.conv2d_same(x2, k)
        assert np.abs(lhs - rhs).max() < 1e-5

    def test_channel_mismatch_errors(self, nprng):
        x = nprng.uniform(-1, 1, (5, 5, 3))
        k = ConvKernel(np.zeros((3, 3, 2, 1)), np.zeros(1))
        with pytest.raises(ValueError):
            nn.conv2d_same(x, k)

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            ConvKernel(np.zeros((2, 3, 1, 1)), np.zeros(1))


class TestConvBackward:
    def test_zero_grad_out(self, nprng):
        x = nprng.uniform(-1, 1, (5, 5, 2))
        k = ConvKernel(nprng.uniform(-1, 1, (3, 3, 2, 2)), nprng.uniform(-1, 1, 2))
        gx, gw, gb = nn.conv2d_same_backward(x, k, np.zeros((5, 5, 2)))
        assert not gx.any() and not gw.any() and not gb.any()

    def test_identity_kernel_passthrough(self, nprng):
        x = nprng.uniform(-1, 1, (4, 6, 1))
        k = ConvKernel(np.ones((1, 1, 1, 1)), np.zeros(1))
        go = nprng.uniform(-1, 1, (4, 6, 1))
        gx, _, _ = nn.conv2d_same_backward(x, k, go)
        assert np.array_equal(gx, go)

    def test_grad_b_is_column_sum(self, nprng):
        x = nprng.uniform(-1, 1, (5, 4, 3))
        k = ConvKernel(nprng.uniform(-1, 1, (3, 3, 3, 2)), np.zeros(2))
        go = nprng.uniform(-1, 1, (5, 4, 2))
        _, _, gb = nn.conv2d_same_backward(x, k, go)
        assert np.allclose(gb, go.sum(axis=(0, 1)))

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_difference_sweep(self, seed):
        """Analytic gradients vs central differences over randomized shapes."""
        rng = np.random.default_rng(seed)
        H = int(rng.integers(3, 7))
        W = int(rng.integers(3, 7))
        c_in = int(rng.integers(1, 4))
        c_out = int(rng.integers(1, 4))
        ksize = int(rng.choice([1, 3, 5]))
        x = rng.uniform(-1, 1, (H, W, c_in))
        w = rng.uniform(-1, 1, (ksize, ksize, c_in, c_out))
        b = rng.uniform(-1, 1, c_out)
        go = rng.uniform(-1, 1, (H, W, c_out))
        k = ConvKernel(w, b)
        gx, gw, gb = nn.conv2d_same_backward(x, k, go)

        def scalar_loss(x_, w_, b_):
            return float(np.sum(nn.conv2d_same(x_, ConvKernel(w_, b_)) * go))

        h = 1e-3
        worst = 0.0
        # a handful of coordinates from each gradient component
        for _ in range(6):
            i = tuple(rng.integers(0, s) for s in x.shape)
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd = (scalar_loss(xp, w, b) - scalar_loss(xm, w, b)) / (2 * h)
            worst = max(worst, rel_err(fd, gx[i]))
        for _ in range(6):
            i = tuple(rng.integers(0, s) for s in w.shape)
            wp, wm = w.copy(), w.copy()
            wp[i] += h
            wm[i] -= h
            fd = (scalar_loss(x, wp, b) - scalar_loss(x, wm, b)) / (2 * h)
            worst = max(worst, rel_err(fd, gw[i]))
        for o in range(c_out):
            bp, bm = b.copy(), b.copy()
            bp[o] += h
            bm[o] -= h
            fd = (scalar_loss(x, w, bp) - scalar_loss(x, w, bm)) / (2 * h)
            worst = max(worst, rel_err(fd, gb[o]))
        assert worst < 1e-4

    def test_shape_mismatch_errors(self, nprng):
        x = nprng.uniform(-1, 1, (5, 5, 2))
        k = ConvKernel(np.zeros((3, 3, 2, 2)), np.zeros(2))
        with pytest.raises(ValueError):
            nn.conv2d_same_backward(x, k, np.zeros((4, 5, 2)))


class TestRelu:
    def test_all_negative(self):
        assert not nn.relu(np.full((3, 3, 2), -2.0)).any()

    def test_all_positive_identity(self, nprng):
        x = nprng.uniform(0.1, 1, (3, 3, 2))
        assert np.array_equal(nn.relu(x), x)

    def test_mixed_values(self):
        x = np.array([-1.0, 0.0, 2.5]).reshape(1, 1, 3)
        assert np.array_equal(nn.relu(x), np.array([0.0, 0.0, 2.5]).reshape(1, 1, 3))

    def test_backward_positive_passthrough(self, nprng):
        x = nprng.uniform(0.1, 1, (4, 4, 2))
        go = nprng.uniform(-1, 1, (4, 4, 2))
        assert np.array_equal(nn.relu_backward(x, go), go)

    def test_backward_negative_zero(self, nprng):
        x = nprng.uniform(-1, -0.1, (4, 4, 2))
        go = nprng.uniform(-1, 1, (4, 4, 2))
        assert not nn.relu_backward(x, go).any()

    def test_backward_zero_input_gives_zero(self):
        x = np.zeros((2, 2, 1))
        go = np.ones((2, 2, 1))
        assert not nn.relu_backward(x, go).any()

    def test_backward_finite_difference_away_from_zero(self, nprng):
        x = nprng.uniform(-1, 1, (5, 5, 3))
        x[np.abs(x) <= 1e-2] = 0.5  # keep away from the kink
        go = nprng.uniform(-1, 1, (5, 5, 3))
        g = nn.relu_backward(x, go)
        h = 1e-3
        worst = 0.0
        for _ in range(20):
            i = tuple(nprng.integers(0, s) for s in x.shape)
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd = (float(np.sum(nn.relu(xp) * go)) - float(np.sum(nn.relu(xm) * go))) / (2 * h)
            worst = max(worst, rel_err(fd, g[i]))
        assert worst < 1e-4


class TestConcatAdd:
    def test_concat_single_part(self, nprng):
        x = nprng.uniform(-1, 1, (4, 4, 3))
        assert np.array_equal(nn.concat_channels([x]), x)

    def test_concat_three_parts_slices_recover(self, nprng):
        parts = [nprng.uniform(-1, 1, (5, 5, 20)) for _ in range(3)]
        cat = nn.concat_channels(parts)
        assert cat.shape == (5, 5, 60)
        for i, p in enumerate(parts):
            assert np.array_equal(cat[:, :, 20 * i : 20 * (i + 1)], p)

    def test_concat_mismatched_heights(self, nprng):
        with pytest.raises(ValueError):
            nn.concat_channels([np.zeros((4, 4, 1)), np.zeros((5, 4, 1))])

    def test_concat_empty(self):
        with pytest.raises(ValueError):
            nn.concat_channels([])

    def test_add_identity_and_inverse(self, nprng):
        a = nprng.uniform(-1, 1, (4, 4, 2))
        assert np.array_equal(nn.add(a, np.zeros_like(a)), a)
        assert not nn.add(a, -a).any()

    def test_add_commutes(self, nprng):
        a = nprng.uniform(-1, 1, (4, 4, 2))
        b = nprng.uniform(-1, 1, (4, 4, 2))
        assert np.array_equal(nn.add(a, b), nn.add(b, a))

    def test_add_shape_mismatch(self):
        with pytest.raises(ValueError):
            nn.add(np.zeros((2, 2, 1)), np.zeros((2, 2, 2)))
