"""Tests for the pairwise comparison network: forward, gradients, training."""

import dataclasses
import math

import numpy as np
import pytest

from sere.features import EmbeddingSequence
from sere.network import (
    BN_EPS,
    CHECKPOINT_MAGIC,
    NetworkConfig,
    NetworkError,
    NetworkParams,
    RmsProp,
    TrainConfig,
    Variant,
    backward,
    backward_batch,
    evaluate_loss,
    forward,
    forward_batch,
    gradient_check,
    init_params,
    load_checkpoint,
    loss,
    save_checkpoint,
    train,
)
from sere.presence import MatrixMode, PresenceMatrix

from synth import make_dataset

ALL_VARIANTS = [
    NetworkConfig(variant=v, siamese=s, attention=a)
    for v in (Variant.SINGLE, Variant.MULTI)
    for s in (True, False)
    for a in (True, False)
]


def small_cfg(**overrides) -> NetworkConfig:
    base = dict(
        variant=Variant.SINGLE,
        siamese=True,
        attention=True,
        branch_layers=(8, 8),
        mlp_layers=(16, 8),
        dropout_rate=0.0,
    )
    base.update(overrides)
    return NetworkConfig(**base)


def random_params(cfg: NetworkConfig, input_dim: int, seed: int) -> NetworkParams:
    """Initialized params with biases and norm stats knocked off their defaults."""
    params = init_params(cfg, seed, input_dim)
    rng = np.random.default_rng(seed + 1)
    for name, tensor in params.tensors.items():
        if name.endswith(".bn_var"):
            params.tensors[name] = 0.5 + rng.uniform(0.0, 1.0, tensor.shape)
        else:
            params.tensors[name] = tensor + rng.normal(0.0, 0.3, tensor.shape)
    return params


def rand_pair(t_steps: int, dim: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    return rng.normal(size=(t_steps, dim)), rng.normal(size=(t_steps, dim))


def one_hot_target(seed: int = 0) -> PresenceMatrix:
    rng = np.random.default_rng(seed)
    rows = np.zeros((8, 3))
    rows[np.arange(8), rng.integers(0, 3, size=8)] = 1.0
    return PresenceMatrix(rows, MatrixMode.ONE_HOT)


class TestNetworkConfig:
    def test_defaults_match_architecture(self):
        cfg = NetworkConfig()
        assert cfg.branch_layers == (128, 128, 128)
        assert cfg.mlp_layers == (256, 128)
        assert cfg.dropout_rate == 0.5
        assert (cfg.categories, cfg.statuses) == (8, 3)
        assert cfg.n_towers == 1 and cfg.rows_per_tower == 8

    def test_multi_towers(self):
        cfg = NetworkConfig(variant=Variant.MULTI)
        assert cfg.n_towers == 8 and cfg.rows_per_tower == 1

    def test_validation(self):
        with pytest.raises(ValueError, match="dropout_rate"):
            NetworkConfig(dropout_rate=1.0)
        with pytest.raises(ValueError, match="layer sizes"):
            NetworkConfig(mlp_layers=(256, 0))

    def test_dict_roundtrip(self):
        for cfg in ALL_VARIANTS:
            assert NetworkConfig.from_dict(cfg.to_dict()) == cfg


class TestInitParams:
    def test_single_tower_tensor_names(self):
        params = init_params(NetworkConfig(), seed=0)
        names = set(params.tensors)
        for li in range(3):
            for part in ("W", "b", "bn_gamma", "bn_beta", "bn_mean", "bn_var"):
                assert f"tower0.branch{li}.{part}" in names
        for li in range(2):
            assert f"tower0.mlp{li}.W" in names
        assert "tower0.attention_f.W" in names
        assert "tower0.attention_v.W" in names
        assert not any(name.startswith("tower1.") for name in names)

    def test_branch_weights_shared_not_duplicated(self):
        # the siamese structure keeps ONE branch parameter set per tower;
        # both inputs pass through bitwise-identical weights by construction
        params = init_params(NetworkConfig(), seed=0)
        branch_w = [n for n in params.tensors if ".branch" in n and n.endswith(".W")]
        assert sorted(branch_w) == [f"tower0.branch{li}.W" for li in range(3)]

    def test_no_attention_drops_score_head(self):
        params = init_params(NetworkConfig(attention=False), seed=0)
        assert not any("attention_v" in n for n in params.tensors)
        assert "tower0.attention_f.W" in params.tensors

    def test_no_siamese_widens_mlp_input(self):
        params = init_params(NetworkConfig(siamese=False), seed=0)
        assert not any(".branch" in n for n in params.tensors)
        assert params.tensors["tower0.mlp0.W"].shape == (256, 256)

    def test_multi_has_eight_towers_of_width_three(self):
        params = init_params(NetworkConfig(variant=Variant.MULTI), seed=0)
        for m in range(8):
            assert params.tensors[f"tower{m}.attention_f.W"].shape == (128, 3)

    def test_seeded_determinism(self):
        assert init_params(NetworkConfig(), seed=5).equals(init_params(NetworkConfig(), seed=5))

    def test_initial_values(self):
        params = init_params(NetworkConfig(), seed=1)
        w = params.tensors["tower0.branch0.W"]
        assert np.all(np.abs(w) <= math.sqrt(6.0 / 128))
        assert np.all(params.tensors["tower0.branch0.b"] == 0.0)
        assert np.all(params.tensors["tower0.branch0.bn_gamma"] == 1.0)
        assert np.all(params.tensors["tower0.branch0.bn_var"] == 1.0)


class TestForward:
    @pytest.mark.parametrize("cfg", ALL_VARIANTS, ids=lambda c: f"{c.variant.value}-s{c.siamese:d}-a{c.attention:d}")
    def test_rows_are_distributions(self, cfg):
        cfg = dataclasses.replace(
            cfg, branch_layers=(8, 8), mlp_layers=(16, 8), dropout_rate=0.4
        )
        params = random_params(cfg, input_dim=16, seed=3)
        ea, eb = rand_pair(4, 16, seed=4)
        for training in (False, True):
            trace = forward(params, cfg, ea, eb, training=training, rng=7)
            rows = trace.pooled.rows
            assert rows.shape == (8, 3)
            assert np.all(rows >= 0.0)
            np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-6)
            assert trace.pooled.mode is MatrixMode.PROBABILISTIC

    def test_single_step_is_identity_pooling(self):
        for attention in (True, False):
            cfg = small_cfg(attention=attention)
            params = random_params(cfg, input_dim=16, seed=0)
            ea, eb = rand_pair(1, 16, seed=1)
            trace = forward(params, cfg, ea, eb)
            np.testing.assert_allclose(
                trace.pooled.rows, trace.step_predictions[0], atol=1e-12
            )

    def test_zero_scores_reduce_to_mean_pooling(self):
        # all attention scores equal -> uniform weights -> plain average,
        # identical to the attention-free configuration
        cfg_att = small_cfg(attention=True)
        params = random_params(cfg_att, input_dim=16, seed=5)
        params.tensors["tower0.attention_v.W"][:] = 0.0
        params.tensors["tower0.attention_v.b"][:] = 7.25  # equal, not zero
        cfg_plain = small_cfg(attention=False)
        plain_tensors = {
            n: t.copy() for n, t in params.tensors.items() if "attention_v" not in n
        }
        ea, eb = rand_pair(6, 16, seed=6)
        got = forward(params, cfg_att, ea, eb)
        want = forward(NetworkParams(plain_tensors), cfg_plain, ea, eb)
        np.testing.assert_allclose(got.pooled.rows, want.pooled.rows, atol=1e-12)
        np.testing.assert_allclose(
            got.pooled.rows, got.step_predictions.mean(axis=0), atol=1e-9
        )

    def test_uniform_weights_reported_without_attention(self):
        cfg = small_cfg(attention=False)
        params = random_params(cfg, input_dim=16, seed=2)
        trace = forward(params, cfg, *rand_pair(5, 16, seed=3))
        assert trace.attn_scores is None
        np.testing.assert_array_equal(trace.attn_weights, np.full((5, 8, 3), 0.2))

    def test_attention_weights_normalized_over_time(self):
        cfg = small_cfg()
        params = random_params(cfg, input_dim=16, seed=8)
        trace = forward(params, cfg, *rand_pair(7, 16, seed=9))
        np.testing.assert_allclose(trace.attn_weights.sum(axis=0), 1.0, atol=1e-12)

    def test_accepts_embedding_sequences(self):
        cfg = small_cfg()
        params = random_params(cfg, input_dim=16, seed=1)
        ea, eb = rand_pair(3, 16, seed=2)
        wrapped = forward(
            params,
            cfg,
            EmbeddingSequence("a", ea.astype(np.float32)),
            EmbeddingSequence("b", eb.astype(np.float32)),
        )
        bare = forward(params, cfg, ea.astype(np.float32), eb.astype(np.float32))
        np.testing.assert_array_equal(wrapped.pooled.rows, bare.pooled.rows)

    def test_shape_mismatch(self):
        cfg = small_cfg()
        params = random_params(cfg, input_dim=16, seed=1)
        with pytest.raises(NetworkError, match="must match"):
            forward(params, cfg, np.zeros((3, 16)), np.zeros((2, 16)))

    def test_wrong_input_dim_names_layer(self):
        cfg = small_cfg()
        params = random_params(cfg, input_dim=16, seed=1)
        with pytest.raises(NetworkError, match="tower0.branch0"):
            forward(params, cfg, np.zeros((3, 9)), np.zeros((3, 9)))

    def test_non_finite_activations_name_layer(self):
        cfg = small_cfg()
        params = random_params(cfg, input_dim=16, seed=1)
        params.tensors["tower0.mlp0.W"][0, 0] = np.inf
        with np.errstate(all="ignore"), pytest.raises(NetworkError, match="tower0.mlp0"):
            forward(params, cfg, *rand_pair(3, 16, seed=0))

    def test_training_dropout_needs_rng(self):
        cfg = small_cfg(dropout_rate=0.5)
        params = random_params(cfg, input_dim=16, seed=1)
        ea, eb = rand_pair(3, 16, seed=0)
        with pytest.raises(NetworkError, match="needs an rng"):
            forward(params, cfg, ea, eb, training=True)
        forward(params, cfg, ea, eb, training=True, rng=0)  # fine with rng

    def test_batch_matches_single(self):
        cfg = small_cfg()
        params = random_params(cfg, input_dim=16, seed=4)
        pairs = [rand_pair(3, 16, seed=s) for s in range(5)]
        ea = np.stack([p[0] for p in pairs])
        eb = np.stack([p[1] for p in pairs])
        batch = forward_batch(params, cfg, ea, eb, training=False)
        for i, (a, b) in enumerate(pairs):
            single = forward(params, cfg, a, b)
            np.testing.assert_allclose(batch.pooled[i], single.pooled.rows, atol=1e-12)


class TestBatchNorm:
    def test_batch_of_one_single_step_stays_finite(self):
        # one pair, one time step: batch variance is exactly zero and the
        # epsilon floor must keep the normalization finite
        cfg = small_cfg()
        params = random_params(cfg, input_dim=16, seed=0)
        ea, eb = rand_pair(1, 16, seed=1)
        trace = forward(params, cfg, ea, eb, training=True, rng=0)
        assert np.all(np.isfinite(trace.pooled.rows))

    def test_running_stats_updated_toward_batch(self):
        cfg = small_cfg()
        params = random_params(cfg, input_dim=16, seed=0)
        ds = make_dataset(n_clips=24, n_queries=4, t_steps=2, dim=16, seed=0)
        pairs = ds.training_pairs(per_side=1, seed=0)[:8]
        before = params.tensors["tower0.branch0.bn_mean"].copy()
        tcfg = TrainConfig(max_epochs=1, batch_size=4, validation_fraction=0.0, seed=0)
        trained, _ = train(pairs, ds.store, cfg, tcfg)
        after = trained.tensors["tower0.branch0.bn_mean"]
        assert not np.array_equal(before, after)


class TestLoss:
    def test_perfect_prediction_is_zero(self):
        target = one_hot_target(0)
        assert loss(target.rows, target) == 0.0

    def test_uniform_prediction(self):
        target = one_hot_target(1)
        uniform = np.full((8, 3), 1.0 / 3.0)
        assert math.isclose(loss(uniform, target), 8 * math.log(3), rel_tol=1e-12)

    def test_half_confidence_on_one_category(self):
        target = one_hot_target(2)
        y = target.rows.copy()
        true_col = int(np.argmax(y[0]))
        y[0] = 0.0
        y[0, true_col] = 0.5
        y[0, (true_col + 1) % 3] = 0.5
        assert math.isclose(loss(y, target), math.log(2), rel_tol=1e-12)

    def test_clamp_bounds_zero_probability(self):
        target = one_hot_target(3)
        y = 1.0 - target.rows  # zero mass on every true status
        got = loss(y, target)
        assert math.isclose(got, -8 * math.log(1e-12), rel_tol=1e-9)

    def test_accepts_presence_matrix(self):
        target = one_hot_target(4)
        pooled = PresenceMatrix(np.full((8, 3), 1.0 / 3.0), MatrixMode.PROBABILISTIC)
        assert math.isclose(loss(pooled, target), 8 * math.log(3), rel_tol=1e-12)


class TestBackward:
    def test_gradient_check_spot_variants(self):
        # extremes of the variant grid; the full sweep runs in the
        # acceptance suite at full input width
        for cfg in (
            small_cfg(),
            small_cfg(variant=Variant.MULTI, siamese=False, attention=False, branch_layers=(8,)),
        ):
            params = random_params(cfg, input_dim=16, seed=11)
            ea, eb = rand_pair(3, 16, seed=12)
            errors = gradient_check(params, cfg, ea, eb, one_hot_target(5).rows, coords_per_tensor=4)
            worst = max(errors.values())
            assert worst < 1e-3, (cfg, sorted(errors.items(), key=lambda kv: -kv[1])[:3])

    def test_fault_injection_is_detected(self):
        cfg = small_cfg()
        params = random_params(cfg, input_dim=16, seed=13)
        ea, eb = rand_pair(3, 16, seed=14)
        errors = gradient_check(
            params, cfg, ea, eb, one_hot_target(6).rows, coords_per_tensor=4, perturb=0.02
        )
        assert max(errors.values()) >= 1e-3

    def test_zero_learning_signal(self):
        cfg = small_cfg()
        params = random_params(cfg, input_dim=16, seed=15)
        ea, eb = rand_pair(3, 16, seed=16)
        trace = forward(params, cfg, ea, eb)
        grads = backward(params, cfg, trace, trace.pooled)
        norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        assert norm < 1e-8

    def test_duplicated_pair_doubles_gradient(self):
        cfg = small_cfg()
        params = random_params(cfg, input_dim=16, seed=17)
        ea, eb = rand_pair(3, 16, seed=18)
        target = one_hot_target(7).rows
        single = backward_batch(
            params, cfg, forward_batch(params, cfg, ea[None], eb[None], training=True, rng=None), target[None]
        )
        doubled = backward_batch(
            params,
            cfg,
            forward_batch(params, cfg, np.stack([ea, ea]), np.stack([eb, eb]), training=True, rng=None),
            np.stack([target, target]),
        )
        scale = max(float(np.abs(g).max()) for g in single.values())
        for name in single:
            np.testing.assert_allclose(
                doubled[name], 2.0 * single[name], rtol=1e-9, atol=1e-12 * scale
            )

    def test_gradients_cover_all_trainable_tensors(self):
        cfg = small_cfg()
        params = random_params(cfg, input_dim=16, seed=19)
        ea, eb = rand_pair(3, 16, seed=20)
        trace = forward(params, cfg, ea, eb)
        grads = backward(params, cfg, trace, one_hot_target(8))
        assert sorted(grads) == params.trainable_names()
        for name, g in grads.items():
            assert g.shape == params.tensors[name].shape


class TestRmsProp:
    def test_five_step_hand_oracle(self):
        lr, decay, eps = 1e-3, 0.9, 1e-8
        theta = 0.4
        params = NetworkParams({"w": np.array([theta])})
        opt = RmsProp(params, lr, decay, eps)
        s = 0.0
        for g in (1.0, -0.5, 2.0, 0.25, -1.0):
            opt.step(params, {"w": np.array([g])})
            s = decay * s + (1.0 - decay) * g * g
            theta = theta - lr * g / (math.sqrt(s) + eps)
            assert math.isclose(params.tensors["w"][0], theta, rel_tol=1e-15)

    def test_ignores_running_stats(self):
        params = NetworkParams({"w": np.zeros(2), "layer.bn_mean": np.zeros(2)})
        opt = RmsProp(params, 0.1)
        assert set(opt.accum) == {"w"}


class TestTrain:
    def _tiny(self, seed=0):
        ds = make_dataset(n_clips=30, n_queries=6, t_steps=2, dim=16, seed=seed)
        return ds, ds.training_pairs(per_side=1, seed=seed)

    def test_deterministic_same_seed(self):
        ds, pairs = self._tiny()
        cfg = small_cfg(dropout_rate=0.5)
        tcfg = TrainConfig(max_epochs=3, batch_size=16, seed=9)
        p1, r1 = train(pairs, ds.store, cfg, tcfg)
        p2, r2 = train(pairs, ds.store, cfg, tcfg)
        assert p1.equals(p2)
        assert r1.to_text() == r2.to_text()

    def test_different_seeds_differ(self):
        ds, pairs = self._tiny()
        cfg = small_cfg()
        p1, _ = train(pairs, ds.store, cfg, TrainConfig(max_epochs=1, seed=0))
        p2, _ = train(pairs, ds.store, cfg, TrainConfig(max_epochs=1, seed=1))
        assert not p1.equals(p2)

    def test_overfits_small_separable_set(self):
        # targets are a deterministic function of the embeddings, so the
        # network must be able to drive the loss to ~0; no held-out split
        ds = make_dataset(n_clips=30, n_queries=6, t_steps=2, dim=16, seed=0)
        pairs = ds.training_pairs(per_side=2, seed=0)[:64]
        cfg = small_cfg(branch_layers=(16, 16), mlp_layers=(32, 16))
        tcfg = TrainConfig(
            max_epochs=200, batch_size=16, learning_rate=3e-3,
            validation_fraction=0.0, seed=0,
        )
        params, report = train(pairs, ds.store, cfg, tcfg)
        final = evaluate_loss(params, cfg, pairs, ds.store)
        assert final < 0.05, f"final loss {final:.4f}, best epoch {report.best_epoch}"

    def test_zero_epochs_returns_initialization(self):
        ds, pairs = self._tiny()
        cfg = small_cfg()
        tcfg = TrainConfig(max_epochs=0, seed=4)
        params, report = train(pairs, ds.store, cfg, tcfg)
        assert report.best_epoch == 0
        assert report.phase1 == [] and report.phase2 == []
        init_rng = np.random.default_rng(np.random.SeedSequence(4).spawn(7)[4])
        assert params.equals(init_params(cfg, init_rng, input_dim=16))

    def test_two_phase_report(self):
        ds, pairs = self._tiny()
        cfg = small_cfg()
        tcfg = TrainConfig(max_epochs=4, batch_size=16, seed=2)
        _, report = train(pairs, ds.store, cfg, tcfg)
        assert len(report.phase1) == 4
        assert 1 <= report.best_epoch <= 4
        assert len(report.phase2) == report.best_epoch
        assert all(st.val_loss is not None for st in report.phase1)
        assert all(st.val_loss is None for st in report.phase2)
        text = report.to_text()
        assert f"best_epoch: {report.best_epoch}" in text
        assert "phase1" in text and "phase2" in text

    def test_divergence_reports_position(self):
        # RMSProp steps are roughly lr-sized regardless of gradient scale,
        # so the learning rate must overflow float64 outright
        ds, pairs = self._tiny()
        cfg = small_cfg()
        tcfg = TrainConfig(learning_rate=1e300, max_epochs=5, batch_size=16, seed=0)
        with np.errstate(all="ignore"), pytest.raises(NetworkError, match="diverged.*epoch"):
            train(pairs, ds.store, cfg, tcfg)

    def test_empty_pairs_rejected(self):
        ds, _ = self._tiny()
        with pytest.raises(ValueError, match="no training pairs"):
            train([], ds.store, small_cfg(), TrainConfig())

    def test_validation_split_must_leave_pairs(self):
        ds, pairs = self._tiny()
        with pytest.raises(ValueError, match="leaves no training pairs"):
            train(pairs[:2], ds.store, small_cfg(), TrainConfig(validation_fraction=0.9))

    def test_train_config_validation(self):
        with pytest.raises(ValueError, match="learning_rate"):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError, match="batch_size"):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError, match="validation_fraction"):
            TrainConfig(validation_fraction=1.0)

    def test_evaluate_loss_matches_per_pair_mean(self):
        ds, pairs = self._tiny()
        pairs = pairs[:5]
        cfg = small_cfg()
        params = random_params(cfg, input_dim=16, seed=21)
        per_pair = []
        for rec in pairs:
            trace = forward(params, cfg, ds.store.get(rec.id_a), ds.store.get(rec.id_b))
            per_pair.append(loss(trace.pooled, rec.target))
        want = sum(per_pair) / len(per_pair)
        got = evaluate_loss(params, cfg, pairs, ds.store)
        assert math.isclose(got, want, rel_tol=1e-12)
        chunked = evaluate_loss(params, cfg, pairs, ds.store, chunk=2)
        assert math.isclose(chunked, got, rel_tol=1e-12)

    def test_evaluate_loss_rejects_empty(self):
        ds, _ = self._tiny()
        with pytest.raises(ValueError, match="no pairs"):
            evaluate_loss(random_params(small_cfg(), 16, 0), small_cfg(), [], ds.store)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        for cfg in (NetworkConfig(), NetworkConfig(variant=Variant.MULTI, siamese=False)):
            params = init_params(cfg, seed=6)
            path = tmp_path / f"{cfg.variant.value}.serm"
            save_checkpoint(params, cfg, path)
            loaded, loaded_cfg = load_checkpoint(path)
            assert loaded_cfg == cfg
            assert set(loaded.tensors) == set(params.tensors)
            for name, tensor in params.tensors.items():
                np.testing.assert_array_equal(
                    loaded.tensors[name], tensor.astype(np.float32).astype(np.float64)
                )

    def test_second_save_is_byte_identical(self, tmp_path):
        # float32 on disk: a load/save cycle reproduces the file exactly
        cfg = small_cfg()
        params = random_params(cfg, input_dim=16, seed=7)
        first = tmp_path / "a.serm"
        save_checkpoint(params, cfg, first)
        loaded, _ = load_checkpoint(first)
        second = tmp_path / "b.serm"
        save_checkpoint(loaded, cfg, second)
        assert first.read_bytes() == second.read_bytes()

    def test_multi_checkpoint_has_eight_blocks(self, tmp_path):
        cfg = NetworkConfig(variant=Variant.MULTI)
        path = tmp_path / "m.serm"
        save_checkpoint(init_params(cfg, seed=0), cfg, path)
        loaded, _ = load_checkpoint(path)
        towers = {name.split(".", 1)[0] for name in loaded.tensors}
        assert towers == {f"tower{m}" for m in range(8)}

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.serm"
        save_checkpoint(init_params(small_cfg(), 0, 16), small_cfg(), path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(NetworkError, match="bad checkpoint magic"):
            load_checkpoint(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "v.serm"
        save_checkpoint(init_params(small_cfg(), 0, 16), small_cfg(), path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(NetworkError, match="version"):
            load_checkpoint(path)

    def test_truncation(self, tmp_path):
        path = tmp_path / "t.serm"
        save_checkpoint(init_params(small_cfg(), 0, 16), small_cfg(), path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 10])
        with pytest.raises(NetworkError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "x.serm"
        save_checkpoint(init_params(small_cfg(), 0, 16), small_cfg(), path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(NetworkError, match="trailing bytes"):
            load_checkpoint(path)

    def test_non_finite_tensor_rejected(self, tmp_path):
        cfg = small_cfg()
        params = init_params(cfg, 0, 16)
        params.tensors["tower0.mlp0.W"][0, 0] = np.nan
        path = tmp_path / "n.serm"
        save_checkpoint(params, cfg, path)
        with pytest.raises(NetworkError, match="non-finite parameter"):
            load_checkpoint(path)
