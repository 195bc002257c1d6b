import math

import numpy as np
import pytest

from panfuse import network, trainer
from panfuse.nn import ConvKernel
from panfuse.network import NetworkSpec, conv
from panfuse.raster import PatchPair, RasterStack
from panfuse.trainer import DivergenceError, TrainConfig, TrainState

from conftest import random_stack


def make_dataset(nprng, n, size=8, bands=2):
    """Targets are the MS slice of the input, i.e. a learnable copy task."""
    pairs = []
    for _ in range(n):
        inp = random_stack(nprng, size, size, bands + 1)
        tgt = RasterStack(inp.data[:, :, :bands])
        pairs.append(PatchPair(input=inp, target=tgt))
    return pairs


def single_conv_spec(bands):
    return NetworkSpec(bands=bands, shallow=(conv(1, 1, bands, "none"),), deep=())


def scalar_params(theta, dtype=np.float64):
    return (ConvKernel(np.full((1, 1, 1, 1), theta, dtype), np.zeros(1, dtype)),)


class TestBatchLoss:
    def test_identical_pairs_zero(self, nprng):
        outs = [nprng.uniform(0, 1, (4, 4, 2)) for _ in range(3)]
        assert trainer.batch_loss(outs, [o.copy() for o in outs]) == 0.0

    def test_single_sample_equals_sample_loss(self, nprng):
        out = nprng.uniform(0, 1, (4, 4, 2))
        tgt = nprng.uniform(0, 1, (4, 4, 2))
        assert trainer.batch_loss([out], [tgt]) == trainer.sample_loss(out, tgt)

    def test_constructed_losses_mean(self):
        # constant residual c over an n-element tensor gives loss n*c^2;
        # pick c_i so the per-sample losses are exactly {1, 2, 3, 4}
        n = 2 * 2 * 1
        outs, tgts = [], []
        for want in (1.0, 2.0, 3.0, 4.0):
            c = math.sqrt(want / n)
            outs.append(np.full((2, 2, 1), c))
            tgts.append(np.zeros((2, 2, 1)))
        assert trainer.batch_loss(outs, tgts) == pytest.approx(2.5, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            trainer.batch_loss([np.zeros((2, 2, 1))], [])


class TestClip:
    def _grads(self, values):
        return (ConvKernel(np.array(values, np.float64).reshape(1, 1, 1, -1),
                           np.zeros(len(values))),)

    def test_zero_unchanged(self):
        g = self._grads([0.0, 0.0])
        out = trainer.clip_gradients(g, 0.1)
        assert not out[0].weights.any()

    def test_norm_one_scaled_to_threshold(self):
        g = self._grads([0.6, 0.8])  # norm 1.0
        out = trainer.clip_gradients(g, 0.1)
        assert trainer.global_grad_norm(out) == pytest.approx(0.1, abs=1e-6)
        np.testing.assert_allclose(out[0].weights.ravel(), [0.06, 0.08], atol=1e-12)

    def test_below_threshold_untouched(self):
        g = self._grads([0.03, 0.04])  # norm 0.05
        out = trainer.clip_gradients(g, 0.1)
        assert out is g

    def test_joint_norm_across_weights_and_biases(self):
        g = (ConvKernel(np.full((1, 1, 1, 1), 3.0), np.array([4.0])),)  # joint norm 5
        out = trainer.clip_gradients(g, 0.1)
        assert out[0].weights.ravel()[0] == pytest.approx(0.06, abs=1e-12)
        assert out[0].bias[0] == pytest.approx(0.08, abs=1e-12)

    def test_exact_mode_amplifies_small_gradients(self):
        g = self._grads([0.03, 0.04])  # weight norm 0.05 -> rescaled UP to 0.1
        out = trainer.clip_gradients(g, 0.1, exact_eq17=True)
        wn = float(np.linalg.norm(out[0].weights))
        assert wn == pytest.approx(0.1, abs=1e-9)

    def test_exact_mode_separate_w_and_b_norms(self):
        g = (ConvKernel(np.full((1, 1, 1, 1), 3.0), np.array([4.0])),)
        out = trainer.clip_gradients(g, 0.1, exact_eq17=True)
        assert abs(out[0].weights.ravel()[0]) == pytest.approx(0.1, abs=1e-9)
        assert abs(out[0].bias[0]) == pytest.approx(0.1, abs=1e-9)

    def test_non_finite_gradient_raises(self):
        g = self._grads([np.inf, 0.0])
        with pytest.raises(DivergenceError):
            trainer.clip_gradients(g, 0.1)


class TestCmUpdate:
    def _state(self, theta, lr):
        params = scalar_params(theta)
        return TrainState(params=params, velocity=tuple(k.zeros_like() for k in params), lr=lr)

    def test_momentum_off_is_vanilla_sgd(self):
        cfg = TrainConfig(momentum=0.0, learning_rate=1.0)
        state = self._state(1.0, lr=1.0)
        grads = scalar_params(0.2)
        trainer.cm_update(state, grads, cfg)
        assert state.params[0].weights.ravel()[0] == 1.0 - 0.2

    def test_pure_momentum_drift(self):
        cfg = TrainConfig(momentum=0.9, learning_rate=0.1)
        state = self._state(1.0, lr=0.1)
        v0 = -0.05
        state.velocity[0].weights[...] = v0
        trainer.cm_update(state, scalar_params(0.0), cfg)
        assert state.velocity[0].weights.ravel()[0] == pytest.approx(0.9 * v0, abs=1e-15)
        assert state.params[0].weights.ravel()[0] == pytest.approx(1.0 + 0.9 * v0, abs=1e-15)

    def test_two_step_hand_trace(self):
        # theta0 = 1, g = 0.2 both steps, mu = 0.9, eps = 0.1:
        #   v1 = -0.02,  theta1 = 0.98
        #   v2 = 0.9*(-0.02) - 0.02 = -0.038, theta2 = 0.942
        cfg = TrainConfig(momentum=0.9, learning_rate=0.1)
        state = self._state(1.0, lr=0.1)
        trainer.cm_update(state, scalar_params(0.2), cfg)
        assert state.params[0].weights.ravel()[0] == pytest.approx(0.98, abs=1e-12)
        trainer.cm_update(state, scalar_params(0.2), cfg)
        assert state.velocity[0].weights.ravel()[0] == pytest.approx(-0.038, abs=1e-12)
        assert state.params[0].weights.ravel()[0] == pytest.approx(0.942, abs=1e-12)
        assert state.iteration == 2

    def test_mu_zero_bitwise_equals_sgd(self, nprng):
        cfg = TrainConfig(momentum=0.0, learning_rate=0.05)
        w0 = nprng.uniform(-1, 1, (3, 3, 2, 2)).astype(np.float32)
        g = nprng.uniform(-1, 1, (3, 3, 2, 2)).astype(np.float32)
        params = (ConvKernel(w0.copy(), np.zeros(2, np.float32)),)
        state = TrainState(params=params, velocity=(params[0].zeros_like(),), lr=0.05)
        trainer.cm_update(state, (ConvKernel(g, np.zeros(2, np.float32)),), cfg)
        manual = w0 + (-(np.float32(0.05) * g))
        assert np.array_equal(state.params[0].weights, manual)


class TestLrSchedule:
    def test_paper_defaults(self):
        cfg = TrainConfig()
        assert trainer.lr_at(0, cfg) == 0.1
        assert trainer.lr_at(59, cfg) == 0.1
        assert trainer.lr_at(60, cfg) == 0.05
        assert trainer.lr_at(300, cfg) == 0.1 * 0.5**5

    def test_non_increasing(self):
        cfg = TrainConfig()
        rates = [trainer.lr_at(e, cfg) for e in range(0, 400)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_negative_epoch(self):
        with pytest.raises(ValueError):
            trainer.lr_at(-1, TrainConfig())


class TestPlannedIterations:
    def test_full_scale_arithmetic(self):
        # 51648 patches at batch 64 -> 807 updates/epoch; 300 epochs is
        # 242100 updates, i.e. the advertised "about 250000"
        cfg = TrainConfig(batch_size=64, epochs=300)
        total = trainer.planned_iterations(51648, cfg)
        assert total == 300 * math.ceil(51648 / 64) == 242100
        assert abs(total - 250_000) / 250_000 < 0.05

    def test_short_final_batch_kept(self):
        cfg = TrainConfig(batch_size=10, epochs=1)
        assert trainer.planned_iterations(25, cfg) == 3


class TestTrainLoop:
    def test_convex_copy_problem_converges(self, nprng):
        dataset = make_dataset(nprng, 16, size=6, bands=2)
        spec = single_conv_spec(2)
        cfg = TrainConfig(
            batch_size=4, epochs=50, learning_rate=0.1, clip_threshold=0.1,
            loss_normalized=True, seed=3, checkpoint_interval=0,
        )
        state = trainer.train(dataset, spec, cfg)
        assert state.iteration == 200
        assert state.loss_history[-1] < 0.01 * state.loss_history[0]

    def test_loss_windows_non_increasing_after_decay(self, nprng):
        dataset = make_dataset(nprng, 16, size=6, bands=2)
        spec = single_conv_spec(2)
        cfg = TrainConfig(
            batch_size=4, epochs=80, learning_rate=0.1, clip_threshold=0.1,
            loss_normalized=True, seed=3, decay_interval=20, checkpoint_interval=0,
        )
        state = trainer.train(dataset, spec, cfg)
        first_decay_iter = 20 * 4  # 4 updates per epoch
        h = state.loss_history
        for i in range(first_decay_iter, len(h) - 50):
            assert h[i + 50] <= h[i] * 1.05

    def test_same_seed_identical_history(self, nprng):
        dataset = make_dataset(nprng, 12, size=6, bands=2)
        spec = single_conv_spec(2)
        cfg = TrainConfig(batch_size=4, epochs=5, seed=7, loss_normalized=True,
                          checkpoint_interval=0)
        h1 = trainer.train(dataset, spec, cfg).loss_history
        h2 = trainer.train(dataset, spec, cfg).loss_history
        assert h1 == h2

    def test_single_sample_mode_runs_and_is_deterministic(self, nprng):
        dataset = make_dataset(nprng, 12, size=6, bands=2)
        spec = single_conv_spec(2)
        cfg = TrainConfig(batch_size=4, epochs=3, seed=7, grad_mode="single_sample",
                          loss_normalized=True, checkpoint_interval=0)
        h1 = trainer.train(dataset, spec, cfg).loss_history
        h2 = trainer.train(dataset, spec, cfg).loss_history
        assert h1 == h2

    def test_clipped_norm_bounded_throughout(self, nprng):
        dataset = make_dataset(nprng, 8, size=6, bands=2)
        spec = single_conv_spec(2)
        cfg = TrainConfig(batch_size=4, epochs=10, seed=1, checkpoint_interval=0)
        observed = []
        trainer.train(dataset, spec, cfg,
                      step_callback=lambda s, g, pre: observed.append(
                          trainer.global_grad_norm(g)))
        assert observed
        assert max(observed) <= cfg.clip_threshold + 1e-6

    def test_divergence_reported_with_iteration(self, nprng):
        dataset = make_dataset(nprng, 8, size=6, bands=2)
        spec = single_conv_spec(2)
        cfg = TrainConfig(batch_size=4, epochs=2, seed=1, checkpoint_interval=0)
        state = trainer.init_state(spec, cfg)
        state.params[0].weights[0, 0, 0, 0] = np.inf  # poisoned parameter
        with pytest.raises(DivergenceError) as exc:
            trainer.train(dataset, spec, cfg, state=state)
        assert exc.value.iteration >= 0
        assert "iteration" in str(exc.value)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            trainer.train([], single_conv_spec(2), TrainConfig())

    def test_resume_reproduces_trajectory(self, tmp_path, nprng):
        dataset = make_dataset(nprng, 12, size=6, bands=2)
        spec = single_conv_spec(2)
        full_cfg = TrainConfig(batch_size=4, epochs=6, seed=9, loss_normalized=True,
                               checkpoint_interval=3)
        full = trainer.train(dataset, spec, full_cfg,
                             checkpoint_dir=str(tmp_path / "full"))

        half_cfg = TrainConfig(batch_size=4, epochs=3, seed=9, loss_normalized=True,
                               checkpoint_interval=3)
        trainer.train(dataset, spec, half_cfg, checkpoint_dir=str(tmp_path / "half"))
        spec2, resumed_state = trainer.load_train_state(str(tmp_path / "half"), "epoch_00003")
        resumed = trainer.train(dataset, spec2, full_cfg, state=resumed_state)

        assert resumed.loss_history == full.loss_history[len(full.loss_history) // 2 :]
        for a, b in zip(full.params, resumed.params):
            assert np.array_equal(a.weights, b.weights)
            assert np.array_equal(a.bias, b.bias)

    def test_log_csv_columns(self, tmp_path, nprng):
        dataset = make_dataset(nprng, 8, size=6, bands=2)
        spec = single_conv_spec(2)
        cfg = TrainConfig(batch_size=4, epochs=2, seed=1, checkpoint_interval=0)
        log = tmp_path / "loss.csv"
        trainer.train(dataset, spec, cfg, log_path=str(log))
        lines = log.read_text().strip().splitlines()
        assert lines[0] == "iteration,epoch,lr,batch_loss,grad_norm_preclip,clipped"
        assert len(lines) == 1 + 2 * 2  # header + 2 epochs x 2 batches
        first = lines[1].split(",")
        assert first[0] == "1" and first[1] == "0"
        assert first[5] in ("0", "1")


class TestConfigValidation:
    def test_bad_momentum(self):
        with pytest.raises(ValueError):
            TrainConfig(momentum=1.0)

    def test_bad_decay(self):
        with pytest.raises(ValueError):
            TrainConfig(decay_factor=0.0)

    def test_bad_grad_mode(self):
        with pytest.raises(ValueError):
            TrainConfig(grad_mode="full_batch")

    def test_bad_clip(self):
        with pytest.raises(ValueError):
            TrainConfig(clip_threshold=0.0)
