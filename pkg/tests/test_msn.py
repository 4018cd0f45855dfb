import math
from typing import Callable, Dict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from climregime.exceptions import ConfigError
from climregime.model.encoder import EncoderDims, EncoderParams, forward_pooled, init_params
from climregime.model.msn import (
    PrototypeBank,
    TrainConfig,
    ViewBatch,
    anchor_objective,
    batch_gradients,
    batch_loss,
    cross_entropy,
    entropy,
    init_bank,
    memax,
    prototype_probs,
)
from climregime.model.optim import AdamState, adamw_step, cosine_lr, ema_momentum_at

INPUT_DIM = 12
DIMS = EncoderDims(embed=6, hidden=7, latent=8)


def _encoder(seed: int) -> EncoderParams:
    params = init_params(DIMS, INPUT_DIM, seed=seed)
    rng = np.random.default_rng(seed + 50)
    params.patch_embed_b = rng.normal(scale=0.1, size=DIMS.embed)
    params.mlp1_b = rng.normal(scale=0.1, size=DIMS.hidden)
    params.mlp2_b = rng.normal(scale=0.1, size=DIMS.latent)
    return params


def _batch(batch_size: int, n_anchors: int, seed: int = 0) -> ViewBatch:
    rng = np.random.default_rng(seed)
    return ViewBatch(
        target_pooled=rng.normal(size=(batch_size, INPUT_DIM)),
        anchor_pooled=rng.normal(size=(batch_size, n_anchors, INPUT_DIM)),
    )


def _finite_differences(fn: Callable[[], float], arrays: Dict[str, np.ndarray], h: float = 1e-5):
    grads = {}
    for name, array in arrays.items():
        grad = np.zeros_like(array)
        for idx in np.ndindex(array.shape):
            original = array[idx]
            array[idx] = original + h
            plus = fn()
            array[idx] = original - h
            minus = fn()
            array[idx] = original
            grad[idx] = (plus - minus) / (2 * h)
        grads[name] = grad
    return grads


class TestPrototypeProbs:
    """Test soft prototype assignment"""

    def test_zero_latent_is_uniform(self):
        bank = init_bank(7, 4, seed=0)
        np.testing.assert_allclose(prototype_probs(np.zeros(4), bank, 0.1), np.full(7, 1 / 7))

    def test_two_prototypes(self):
        bank = PrototypeBank(np.eye(2))
        probs = prototype_probs(np.array([1.0, 0.0]), bank, 1.0)
        np.testing.assert_allclose(probs, [0.7310585786, 0.2689414214], atol=1e-9)

    def test_lower_temperature_sharpens(self):
        bank = init_bank(6, 5, seed=1)
        z = np.random.default_rng(2).normal(size=5)
        z /= np.linalg.norm(z)
        soft = prototype_probs(z, bank, 0.1)
        sharp = prototype_probs(z, bank, 0.025)
        assert sharp.max() > soft.max()
        assert entropy(sharp) < entropy(soft)

    def test_batched_rows_sum_to_one(self):
        bank = init_bank(5, 3, seed=0)
        probs = prototype_probs(np.random.default_rng(0).normal(size=(9, 3)), bank, 0.1)
        assert probs.shape == (9, 5)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0)

    def test_invalid_temperature(self):
        with pytest.raises(ConfigError):
            prototype_probs(np.zeros(3), init_bank(2, 3, seed=0), 0.0)

    def test_bank_rows_unit_norm(self):
        bank = init_bank(30, 16, seed=4)
        np.testing.assert_allclose(np.linalg.norm(bank.prototypes, axis=1), 1.0)
        with pytest.raises(ConfigError):
            init_bank(0, 16, seed=4)


class TestEntropyTerms:
    """Test cross-entropy and ME-MAX"""

    def test_uniform_cross_entropy(self):
        uniform = np.full(30, 1 / 30)
        assert math.isclose(float(cross_entropy(uniform, uniform)), math.log(30), rel_tol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(
        raw=st.lists(
            st.tuples(
                st.floats(min_value=0.01, max_value=10.0),
                st.floats(min_value=0.01, max_value=10.0),
            ),
            min_size=2,
            max_size=12,
        )
    )
    def test_cross_entropy_bounds_entropy(self, raw):
        p = np.array([a for a, _ in raw])
        q = np.array([b for _, b in raw])
        p /= p.sum()
        q /= q.sum()
        assert float(cross_entropy(p, q)) >= float(entropy(p)) - 1e-9

    @settings(max_examples=50, deadline=None)
    @given(raw=st.lists(st.floats(min_value=0.0, max_value=10.0), min_size=1, max_size=30))
    def test_memax_range(self, raw):
        p = np.array(raw)
        if p.sum() == 0:
            p = np.ones_like(p)
        p /= p.sum()
        value = memax(p)
        assert -1e-9 <= value <= math.log(len(p)) + 1e-9


class TestBatchLoss:
    """Test the batch objective"""

    def test_identical_branches_reduce_to_entropy(self):
        """Test that with one unmasked anchor per sample the loss is the mean entropy"""
        params = _encoder(0)
        batch = _batch(6, 1)
        batch = ViewBatch(batch.target_pooled, batch.target_pooled[:, None, :].copy())
        cfg = TrainConfig(n_prototypes=5, tau_anchor=0.2, tau_target=0.2, memax_weight=0.0)
        bank = init_bank(5, DIMS.latent, seed=1)
        loss, diag = batch_loss(params, params, bank, batch, cfg)
        assert math.isclose(loss, diag.mean_entropy, rel_tol=1e-12, abs_tol=1e-12)

    def test_single_sample(self):
        params = _encoder(0)
        cfg = TrainConfig(n_prototypes=3)
        loss, diag = batch_loss(params, params, init_bank(3, DIMS.latent, seed=0), _batch(1, 1), cfg)
        assert np.isfinite(loss)
        assert diag.target_assignments.shape == (1,)
        assert diag.n_degenerate == 0

    def test_loss_composition(self):
        cfg = TrainConfig(n_prototypes=5, memax_weight=0.7)
        loss, diag = batch_loss(_encoder(0), _encoder(1), init_bank(5, DIMS.latent, seed=2), _batch(8, 3), cfg)
        assert math.isclose(loss, diag.cross_entropy - 0.7 * diag.memax_anchor, rel_tol=1e-12)

    def test_memax_on_target(self):
        cfg = TrainConfig(n_prototypes=5, memax_weight=0.5, memax_on="target")
        loss, diag = batch_loss(_encoder(0), _encoder(1), init_bank(5, DIMS.latent, seed=2), _batch(8, 2), cfg)
        assert math.isclose(loss, diag.cross_entropy - 0.5 * diag.memax_target, rel_tol=1e-12)


class TestBatchGradients:
    """Test analytic gradients of the objective"""

    @pytest.mark.parametrize("seed", range(20))
    @pytest.mark.parametrize("memax_on", ["anchor", "target"])
    def test_matches_finite_differences(self, memax_on: str, seed: int):
        n_batch, n_anchors = 4, 2
        anchor, target = _encoder(seed), _encoder(seed + 100)
        bank = init_bank(5, DIMS.latent, seed=seed + 200)
        batch = _batch(n_batch, n_anchors, seed=seed + 300)
        cfg = TrainConfig(
            n_prototypes=5, tau_anchor=0.5, tau_target=0.25, memax_weight=0.8, memax_on=memax_on
        )

        grads = batch_gradients(anchor, target, bank, batch, cfg)

        target_probs = prototype_probs(forward_pooled(target, batch.target_pooled).z, bank, cfg.tau_target)
        target_rows = np.repeat(target_probs, n_anchors, axis=0)
        anchor_rows = batch.anchor_pooled.reshape(n_batch * n_anchors, -1)
        prototypes = bank.prototypes.copy()
        memax_target = grads.diagnostics.memax_target

        def objective() -> float:
            return anchor_objective(anchor, prototypes, anchor_rows, target_rows, cfg, memax_target)

        assert math.isclose(objective(), grads.diagnostics.loss, rel_tol=1e-12, abs_tol=1e-12)

        arrays = dict(anchor.tensors())
        arrays["prototypes"] = prototypes
        numeric = _finite_differences(objective, arrays)
        analytic = dict(grads.anchor.tensors())
        analytic["prototypes"] = grads.bank
        for name in arrays:
            np.testing.assert_allclose(analytic[name], numeric[name], rtol=1e-4, atol=1e-7)

    def test_linear_in_memax_weight(self):
        anchor, target = _encoder(0), _encoder(1)
        bank = init_bank(5, DIMS.latent, seed=2)
        batch = _batch(5, 2, seed=4)
        by_weight = [
            batch_gradients(anchor, target, bank, batch, TrainConfig(n_prototypes=5, memax_weight=w))
            for w in (0.0, 1.0, 2.0)
        ]
        np.testing.assert_allclose(
            by_weight[2].bank - by_weight[1].bank,
            by_weight[1].bank - by_weight[0].bank,
            rtol=0,
            atol=1e-10,
        )

    def test_thread_count_does_not_change_results(self):
        """Test that 1 and 2 workers give identical losses and gradients"""
        anchor, target = _encoder(0), _encoder(1)
        bank = init_bank(6, DIMS.latent, seed=2)
        batch = _batch(40, 2, seed=5)
        cfg = TrainConfig(n_prototypes=6)
        serial = batch_gradients(anchor, target, bank, batch, cfg, n_jobs=1)
        threaded = batch_gradients(anchor, target, bank, batch, cfg, n_jobs=2)
        assert serial.diagnostics.loss == threaded.diagnostics.loss
        np.testing.assert_array_equal(serial.bank, threaded.bank)
        for name, array in serial.anchor.tensors().items():
            np.testing.assert_array_equal(array, threaded.anchor.tensors()[name])

    def test_small_step_descends(self):
        anchor, target = _encoder(0), _encoder(1)
        bank = init_bank(5, DIMS.latent, seed=2)
        batch = _batch(6, 2, seed=6)
        cfg = TrainConfig(n_prototypes=5, tau_anchor=0.5, tau_target=0.25)
        grads = batch_gradients(anchor, target, bank, batch, cfg)

        step = 1e-5
        moved = anchor.copy()
        for name, array in moved.tensors().items():
            array -= step * grads.anchor.tensors()[name]
        moved_bank = PrototypeBank(bank.prototypes - step * grads.bank)

        target_probs = prototype_probs(forward_pooled(target, batch.target_pooled).z, bank, cfg.tau_target)
        target_rows = np.repeat(target_probs, 2, axis=0)
        anchor_rows = batch.anchor_pooled.reshape(12, -1)
        before = anchor_objective(anchor, bank.prototypes, anchor_rows, target_rows, cfg)
        after = anchor_objective(moved, moved_bank.prototypes, anchor_rows, target_rows, cfg)
        assert after < before


class TestTrainConfig:
    """Test training configuration validation"""

    def test_defaults_are_valid(self):
        TrainConfig().validate()

    @pytest.mark.parametrize(
        "overrides",
        [
            {"tau_target": 0.2, "tau_anchor": 0.1},
            {"n_prototypes": 0},
            {"memax_weight": -1.0},
            {"memax_on": "both"},
            {"ema_momentum": 1.5},
            {"ema_schedule": "linear"},
        ],
    )
    def test_invalid(self, overrides):
        with pytest.raises(ConfigError):
            TrainConfig(**overrides).validate()

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="Invalid train config"):
            TrainConfig.from_dict({"n_prototypes": 4, "warmup": 10})


class TestAdamW:
    """Test the optimizer step"""

    def test_zero_gradient_without_decay(self):
        params = {"w": np.array([1.0, -2.0])}
        new, state = adamw_step(params, {"w": np.zeros(2)}, AdamState(), lr=0.1, weight_decay=0.0)
        np.testing.assert_array_equal(new["w"], params["w"])
        assert state.step == 1

    def test_first_step_moves_by_learning_rate(self):
        params = {"w": np.array([1.0, 1.0, 1.0])}
        grads = {"w": np.array([0.5, -3.0, 1e-2])}
        new, _ = adamw_step(params, grads, AdamState(), lr=1e-3, weight_decay=0.0)
        np.testing.assert_allclose(new["w"], 1.0 - 1e-3 * np.sign(grads["w"]), rtol=0, atol=1e-8)

    def test_decoupled_decay(self):
        params = {"w": np.array([2.0]), "b": np.array([2.0])}
        zeros = {"w": np.zeros(1), "b": np.zeros(1)}
        new, _ = adamw_step(params, zeros, AdamState(), lr=0.5, weight_decay=0.1, decay_keys=["w"])
        np.testing.assert_allclose(new["w"], [1.9])
        np.testing.assert_array_equal(new["b"], [2.0])
        np.testing.assert_array_equal(params["w"], [2.0])

    def test_name_mismatch(self):
        with pytest.raises(ConfigError):
            adamw_step({"w": np.zeros(1)}, {"v": np.zeros(1)}, AdamState(), lr=0.1, weight_decay=0.0)


class TestSchedules:
    """Test learning-rate and EMA schedules"""

    def test_cosine_endpoints(self):
        assert math.isclose(cosine_lr(0, 10, 1e-3, 1e-5), 1e-3, rel_tol=1e-12)
        assert math.isclose(cosine_lr(9, 10, 1e-3, 1e-5), 1e-5, rel_tol=1e-12)
        assert math.isclose(cosine_lr(5, 11, 1e-3, 1e-5), (1e-3 + 1e-5) / 2, rel_tol=1e-12)

    def test_single_epoch(self):
        assert cosine_lr(0, 1, 1e-3, 1e-5) == 1e-3

    def test_epoch_out_of_range(self):
        with pytest.raises(ConfigError):
            cosine_lr(10, 10, 1e-3, 1e-5)

    def test_ema_schedules(self):
        assert ema_momentum_at(3, 10, 0.996, 1.0) == 0.996
        assert ema_momentum_at(0, 10, 0.996, 1.0, "cosine") == pytest.approx(0.996)
        assert ema_momentum_at(10, 10, 0.996, 1.0, "cosine") == pytest.approx(1.0)
        assert ema_momentum_at(5, 10, 0.9, 1.0, "cosine") == pytest.approx(0.95)
        with pytest.raises(ConfigError):
            ema_momentum_at(1, 10, 0.9, 1.0, "step")
