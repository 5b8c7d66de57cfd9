import numpy as np
import pytest

from ptde.core import Adam, Checkpoint, ParamStore, Rng, Tensor, load_checkpoint, save_checkpoint
from ptde.core.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint
from ptde.exceptions import CheckpointError, GradientError, ShapeError


class TestParamStore:
    """Named parameter registration and in-place state handling."""

    def test_duplicate_names_rejected(self, store):
        store.add("agent.w", np.zeros(2))
        with pytest.raises(KeyError, match="already registered"):
            store.add("agent.w", np.zeros(2))

    def test_prefix_queries_keep_registration_order(self, store):
        for name in ["gis.b", "agent.w", "gis.a"]:
            store.add(name, np.zeros(1))
        assert store.names("gis.") == ["gis.b", "gis.a"]
        assert store.has_prefix("agent.")
        assert not store.has_prefix("mixer.")
        assert len(store) == 3

    def test_strict_load_requires_every_name(self, store):
        store.add("a", np.zeros(2))
        store.add("b", np.zeros(2))
        with pytest.raises(CheckpointError, match="missing"):
            store.load_state({"a": np.ones(2)})
        store.load_state({"a": np.ones(2)}, strict=False)
        assert np.array_equal(store["a"].data, np.ones(2))
        assert np.array_equal(store["b"].data, np.zeros(2))

    def test_load_rejects_shape_mismatch(self, store):
        store.add("a", np.zeros((2, 3)))
        with pytest.raises(ShapeError):
            store.load_state({"a": np.zeros((3, 2))})

    def test_copy_from_is_bitwise_and_in_place(self, store):
        source = ParamStore()
        source.add("agent.w", np.random.default_rng(0).normal(size=(3, 3)))
        target = store.add("agent.w", np.zeros((3, 3)))
        store.copy_from(source, "agent.")
        assert store["agent.w"] is target
        assert np.array_equal(target.data, source["agent.w"].data)
        source["agent.w"].data += 1.0
        assert not np.array_equal(target.data, source["agent.w"].data)

    def test_freeze(self, store):
        store.add("gis.w", np.zeros(2))
        store.add("student.w", np.zeros(2))
        store.freeze("gis.")
        assert not store["gis.w"].requires_grad
        assert store["student.w"].requires_grad

    def test_clip_grad_norm(self, store):
        a = store.add("a", np.zeros(2))
        b = store.add("b", np.zeros(1))
        a.grad = np.array([3.0, 0.0])
        b.grad = np.array([4.0])
        assert store.clip_grad_norm(1.0) == pytest.approx(5.0)
        assert store.grad_norm() == pytest.approx(1.0)
        assert np.allclose(a.grad, [0.6, 0.0])

    def test_clip_leaves_small_gradients(self, store):
        a = store.add("a", np.zeros(2))
        a.grad = np.array([0.3, 0.4])
        store.clip_grad_norm(10.0)
        assert np.array_equal(a.grad, [0.3, 0.4])


class TestAdam:
    """Adam updates over a store."""

    def test_first_step_moves_by_the_learning_rate(self, store):
        x = store.add("x", np.array([1.0, -1.0]))
        ((x - 3.0) * (x - 3.0)).sum().backward()
        Adam(store, lr=0.1).step()
        assert np.allclose(x.data, [1.1, -0.9], atol=1e-6)
        # step zeroes the gradients
        assert np.array_equal(x.grad, [0.0, 0.0])

    def test_converges_on_a_quadratic(self, store):
        x = store.add("x", np.array([0.0, 5.0]))
        optimizer = Adam(store, lr=0.05)
        for _ in range(2000):
            ((x - 3.0) * (x - 3.0)).sum().backward()
            optimizer.step()
        assert np.allclose(x.data, 3.0, atol=0.05)

    def test_zero_gradient_leaves_parameters_unchanged(self, store):
        x = store.add("x", np.array([1.0, -2.0, 0.5]))
        before = x.data.copy()
        optimizer = Adam(store, lr=0.1)
        for _ in range(3):
            x.grad = np.zeros(3)
            optimizer.step()
        assert np.array_equal(x.data, before)

    def test_missing_gradient_is_an_error(self, store):
        store.add("x", np.zeros(2))
        with pytest.raises(GradientError, match="missing gradients"):
            Adam(store).step()

    def test_prefixes_and_frozen_parameters_are_skipped(self, store):
        student = store.add("student.w", np.zeros(1))
        teacher = store.add("gis.w", np.zeros(1))
        frozen = store.add("student.frozen", np.zeros(1), requires_grad=False)
        (student * 2.0 + teacher * 2.0).sum().backward()
        optimizer = Adam(store, lr=0.1, prefixes=("student.",))
        assert [name for name, _ in optimizer.parameters()] == ["student.w"]
        optimizer.step()
        assert student.data[0] != 0.0
        assert teacher.data[0] == 0.0
        assert frozen.data[0] == 0.0


class TestRng:
    """Splittable random streams."""

    def test_equal_seeds_give_equal_streams(self):
        assert np.array_equal(Rng(5).normal(size=10), Rng(5).normal(size=10))
        assert not np.array_equal(Rng(5).normal(size=10), Rng(6).normal(size=10))

    def test_children_do_not_depend_on_parent_draws(self):
        parent = Rng(5)
        before = parent.split(3).normal(size=4)
        parent.normal(size=1000)
        after = parent.split(3).normal(size=4)
        assert np.array_equal(before, after)

    def test_distinct_keys_give_distinct_streams(self):
        rng = Rng(5)
        draws = [child.random(size=8) for child in rng.splits(4)]
        for i in range(4):
            for j in range(i + 1, 4):
                assert not np.array_equal(draws[i], draws[j])
        assert rng.split(1).split(2).spawn_key == (1, 2)

    def test_categorical_frequencies(self):
        probs = np.tile([0.2, 0.5, 0.3], (20_000, 1))
        draws = Rng(0).categorical(probs)
        frequencies = np.bincount(draws, minlength=3) / len(draws)
        assert np.allclose(frequencies, [0.2, 0.5, 0.3], atol=0.015)

    def test_categorical_degenerate_rows(self):
        probs = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        assert np.array_equal(Rng(1).categorical(probs), [1, 0, 2])


class TestCheckpoint:
    """Checkpoint container encoding."""

    @pytest.fixture
    def checkpoint(self):
        values = np.random.default_rng(0).normal(size=(3, 4))
        values[0, 0] = np.nextafter(1.0, 2.0)
        params = {
            "agent.fc1.w": values,
            "agent.fc1.b": np.zeros(4),
            "mixer.scale": np.array(2.5),
            "empty": np.zeros((0, 3)),
        }
        return Checkpoint(params, config_hash="abc123")

    def test_round_trip_is_bit_exact(self, checkpoint):
        decoded = decode_checkpoint(encode_checkpoint(checkpoint))
        assert decoded.config_hash == "abc123"
        assert list(decoded.params) == list(checkpoint.params)
        for name, value in checkpoint.params.items():
            assert decoded.params[name].shape == value.shape
            assert decoded.params[name].tobytes() == value.tobytes()

    def test_from_store_filters_prefixes(self, store):
        store.add("agent.w", np.ones(2))
        store.add("student.w", np.ones(2))
        checkpoint = Checkpoint.from_store(store, ("agent.",), config_hash="h")
        assert list(checkpoint.params) == ["agent.w"]
        checkpoint.require("agent.")
        with pytest.raises(CheckpointError, match="gis."):
            checkpoint.require("agent.", "gis.")

    @pytest.mark.parametrize(
        "mutate, message",
        [
            (lambda data: b"NOTACKPT" + data[len(MAGIC) :], "bad magic"),
            (lambda data: data[:-1], "truncated"),
            (lambda data: data + b"\x00", "trailing"),
            (lambda data: data[: len(MAGIC)] + (99).to_bytes(4, "little") + data[len(MAGIC) + 4 :], "version"),
        ],
        ids=["magic", "truncated", "trailing", "version"],
    )
    def test_malformed_data_rejected(self, checkpoint, mutate, message):
        with pytest.raises(CheckpointError, match=message):
            decode_checkpoint(mutate(encode_checkpoint(checkpoint)))

    def test_save_and_load(self, checkpoint, tmp_path):
        path = save_checkpoint(tmp_path / "nested" / "stage1.ckpt", checkpoint)
        loaded = load_checkpoint(path)
        assert np.array_equal(loaded.params["agent.fc1.w"], checkpoint.params["agent.fc1.w"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_merge_prefers_other(self):
        merged = Checkpoint({"a": np.zeros(1)}, "h").merge(Checkpoint({"a": np.ones(1), "b": np.ones(1)}))
        assert merged.config_hash == "h"
        assert merged.params["a"][0] == 1.0
        assert "b" in merged.params


def test_tensor_values_is_a_flat_view():
    t = Tensor(np.arange(6.0).reshape(2, 3))
    t.values[0] = 9.0
    assert t.data[0, 0] == 9.0
