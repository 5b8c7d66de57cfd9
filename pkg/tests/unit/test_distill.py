import inspect

import numpy as np
import pytest

from ptde.config import DistillConfig
from ptde.core import Checkpoint, ParamStore, Rng, Tensor
from ptde.distill import (
    DISTILL_COLUMNS,
    DistillDataset,
    StudentExecutor,
    build_decentralized_policy,
    decode_dataset,
    encode_dataset,
    generate_dataset,
    load_dataset,
    load_teacher,
    save_dataset,
    train_student,
)
from ptde.envs import env_factory
from ptde.evaluation import restore_networks
from ptde.exceptions import CheckpointError, DatasetError, PrerequisiteError
from ptde.interfaces import LocalInfo
from ptde.nets import StudentNetwork, build_networks
from tests.utils import random_local


def untrained_checkpoint(config, spec, seed=0):
    store = ParamStore()
    networks = build_networks(spec, config.variant, config.nets, store, Rng(seed))
    return Checkpoint.from_store(store, networks.prefixes, config_hash="cafe" * 16)


@pytest.fixture
def tiny_spec(tiny_config):
    return env_factory(tiny_config.env).spec


@pytest.fixture
def teacher(tiny_config, tiny_spec):
    return untrained_checkpoint(tiny_config, tiny_spec)


def planted_dataset(spec, samples, np_rng, hidden=8, d_z=2):
    """Dataset whose targets come from a small fixed student."""
    local = random_local(spec, samples // spec.n_agents, np_rng)
    planted = StudentNetwork(ParamStore(), spec.local_dim, d_z, Rng(7), hidden=hidden)
    rows = local.n_rows
    return DistillDataset(
        local=local.as_array(),
        state=np_rng.normal(size=(rows, spec.state_dim)),
        z_target=planted(local).data,
        episode=np.repeat(np.arange(rows // spec.n_agents), spec.n_agents),
        step=np.zeros(rows, dtype=np.int64),
        agent=np.tile(np.arange(spec.n_agents), rows // spec.n_agents),
        obs_dim=spec.obs_dim,
        n_actions=spec.n_actions,
        n_agents=spec.n_agents,
        n_episodes=rows // spec.n_agents,
    )


class TestDatasetGeneration:
    """Greedy teacher rollouts recorded as (local, state, mean) samples."""

    def test_one_sample_per_agent_and_step(self, tiny_config, teacher):
        dataset = generate_dataset(teacher, tiny_config, 10, Rng(0))
        assert len(dataset) == 20
        assert dataset.n_episodes == 10
        assert dataset.config_hash == teacher.config_hash
        assert np.array_equal(dataset.agent, np.tile([0, 1], 10))
        assert np.array_equal(dataset.episode, np.repeat(np.arange(10), 2))
        assert np.all(dataset.step == 0)

    def test_three_agent_secret_slots(self, tiny_config):
        config = tiny_config.with_updates(env={"name": "secret_slots", "n_agents": 3, "n_actions": 3})
        spec = env_factory(config.env).spec
        dataset = generate_dataset(untrained_checkpoint(config, spec), config, 100, Rng(0))
        assert len(dataset) == 300
        assert dataset.n_agents == 3

    def test_multi_step_episodes_are_ordered(self, tiny_config):
        config = tiny_config.with_updates(env={"name": "grid_capture", "n_agents": 2, "grid_size": 4})
        spec = env_factory(config.env).spec
        dataset = generate_dataset(untrained_checkpoint(config, spec), config, 6, Rng(1))
        keys = np.stack([dataset.episode, dataset.step, dataset.agent], axis=1)
        assert np.all(np.diff(keys[:, 0]) >= 0)
        order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
        assert np.array_equal(order, np.arange(len(dataset)))
        assert len(dataset) % 2 == 0

    def test_targets_are_teacher_means(self, tiny_config, tiny_spec, teacher):
        dataset = generate_dataset(teacher, tiny_config, 8, Rng(2))
        networks = restore_networks(teacher, tiny_config, tiny_spec)
        message = networks.message.forward(dataset.local_info(np.arange(len(dataset))), dataset.state, sample=False)
        assert np.allclose(message.mu.data, dataset.z_target, atol=1e-12)
        assert np.all(dataset.state[:, : tiny_spec.n_agents * tiny_spec.n_actions].sum(axis=1) == 2.0)

    def test_same_stream_same_bytes(self, tiny_config, teacher):
        first = encode_dataset(generate_dataset(teacher, tiny_config, 10, Rng(5)))
        second = encode_dataset(generate_dataset(teacher, tiny_config, 10, Rng(5)))
        third = encode_dataset(generate_dataset(teacher, tiny_config, 10, Rng(6)))
        assert first == second
        assert first != third

    def test_requires_a_gis_teacher(self, tiny_config, tiny_spec):
        config = tiny_config.with_updates(variant="qmix_ugi")
        checkpoint = untrained_checkpoint(config, tiny_spec)
        with pytest.raises(PrerequisiteError, match="qmix_ugi"):
            generate_dataset(checkpoint, config, 4, Rng(0))

    def test_incomplete_checkpoint(self, tiny_config, tiny_spec, teacher):
        partial = Checkpoint({k: v for k, v in teacher.params.items() if not k.startswith("gis.")})
        with pytest.raises(CheckpointError, match="gis"):
            load_teacher(partial, tiny_config, tiny_spec)


class TestDatasetFile:
    def test_round_trip(self, tiny_config, teacher, tmp_path):
        dataset = generate_dataset(teacher, tiny_config, 10, Rng(0))
        save_dataset(tmp_path / "dataset.bin", dataset)
        loaded = load_dataset(tmp_path / "dataset.bin", expected_hash=teacher.config_hash)
        assert loaded.config_hash == dataset.config_hash
        for name in ("local", "state", "z_target", "episode", "step", "agent"):
            assert np.array_equal(getattr(loaded, name), getattr(dataset, name))
        sample = loaded.sample(3)
        assert isinstance(sample.local, LocalInfo)
        assert np.array_equal(sample.local.as_array()[0], dataset.local[3])

    @pytest.mark.parametrize(
        "corrupt, message",
        [
            (lambda data: b"NOTADSET" + data[8:], "bad magic"),
            (lambda data: data[:-8], "does not match"),
            (lambda data: data[:20], "truncated"),
        ],
    )
    def test_malformed_files(self, tiny_config, teacher, corrupt, message):
        data = encode_dataset(generate_dataset(teacher, tiny_config, 2, Rng(0)))
        with pytest.raises(DatasetError, match=message):
            decode_dataset(corrupt(data))

    def test_config_mismatch(self, tiny_config, teacher, tmp_path):
        save_dataset(tmp_path / "dataset.bin", generate_dataset(teacher, tiny_config, 2, Rng(0)))
        with pytest.raises(DatasetError, match="generated under config"):
            load_dataset(tmp_path / "dataset.bin", expected_hash="beef" * 16)
        with pytest.raises(DatasetError, match="not found"):
            load_dataset(tmp_path / "absent.bin")

    def test_rejects_non_finite_targets(self, spec, np_rng):
        dataset = planted_dataset(spec, 30, np_rng)
        with pytest.raises(DatasetError, match="finite"):
            DistillDataset(
                **{**dataset.__dict__, "z_target": np.full_like(dataset.z_target, np.nan)},
            )


class TestTrainStudent:
    """Offline regression of the student onto teacher means."""

    def test_recovers_a_planted_teacher(self, spec, np_rng):
        dataset = planted_dataset(spec, 2000, np_rng)
        config = DistillConfig(epochs=4000, batch_size=256, lr=3e-3, eval_every=100, patience=40)
        result = train_student(dataset, config, Rng(0), hidden=64)
        assert result.heldout_mse < 0.05 * float(np.var(dataset.z_target))
        assert result.heldout_mse < result.initial_heldout_mse

    def test_zero_epochs_returns_the_initialization(self, spec, np_rng):
        dataset = planted_dataset(spec, 60, np_rng)
        result = train_student(dataset, DistillConfig(epochs=0), Rng(3), hidden=16)
        fresh = ParamStore()
        StudentNetwork(fresh, spec.local_dim, 2, Rng(3).split(0), hidden=16)
        assert set(result.params) == set(fresh.names())
        for name in fresh:
            assert np.array_equal(result.params[name], fresh[name].data)
        assert len(result.history) == 1
        assert result.heldout_mse == result.initial_heldout_mse
        assert result.epochs_run == 0

    def test_history_and_best_parameters(self, spec, np_rng):
        dataset = planted_dataset(spec, 300, np_rng)
        config = DistillConfig(epochs=50, batch_size=32, lr=1e-2, eval_every=10, patience=100)
        result = train_student(dataset, config, Rng(0), hidden=16)
        assert list(result.history.columns) == DISTILL_COLUMNS
        assert result.history["epoch"].tolist() == [0, 10, 20, 30, 40, 50]
        assert result.heldout_mse == result.history["heldout_mse"].min()
        assert result.heldout_mse <= result.initial_heldout_mse

        store = ParamStore()
        student = StudentNetwork(store, spec.local_dim, 2, Rng(0), hidden=16)
        store.load_state(result.params)
        _, held = dataset.split(config.holdout_fraction, Rng(0).split(1))
        error = student(dataset.local[held]).data - dataset.z_target[held]
        assert np.mean(error**2) == pytest.approx(result.heldout_mse)

    def test_split_keeps_both_sides(self, spec, np_rng):
        dataset = planted_dataset(spec, 30, np_rng)
        train, held = dataset.split(0.1, Rng(0))
        assert len(held) == 3
        assert sorted(np.concatenate([train, held]).tolist()) == list(range(30))
        columns = ("local", "state", "z_target", "episode", "step", "agent")
        single = DistillDataset(**{**dataset.__dict__, **{name: getattr(dataset, name)[:1] for name in columns}})
        with pytest.raises(DatasetError, match="at least two"):
            single.split(0.5, Rng(0))


class TestDecentralizedPolicy:
    """The stage-1 agent with the student standing in for the message source."""

    def test_act_sees_only_local_information(self):
        assert list(inspect.signature(StudentExecutor.act).parameters) == ["self", "local", "hidden"]

    def test_student_message_replaces_the_teacher_message(self, tiny_config, tiny_spec, teacher, np_rng):
        constant = np.array([0.7, -1.3])
        params = {name: np.zeros_like(value) for name, value in self.student_params(tiny_config, tiny_spec).items()}
        params["student.mlp.fc2.bias"] = constant
        executor = build_decentralized_policy(teacher, params, tiny_config, tiny_spec)

        local = random_local(tiny_spec, 50, np_rng)
        hidden = executor.initial_hidden(local.n_rows)
        actions, _ = executor.act(local, hidden)

        networks = restore_networks(teacher, tiny_config, tiny_spec)
        message = Tensor(np.tile(constant, (local.n_rows, 1)))
        q, _ = networks.agent(local, hidden, message)
        assert np.array_equal(actions, q.data.argmax(axis=-1))

    def test_everything_is_frozen(self, tiny_config, tiny_spec, teacher):
        params = self.student_params(tiny_config, tiny_spec)
        executor = build_decentralized_policy(teacher, params, tiny_config, tiny_spec)
        assert not any(t.requires_grad for _, t in executor.agent.store.items())

    def test_missing_student_parameters(self, tiny_config, tiny_spec, teacher):
        params = self.student_params(tiny_config, tiny_spec)
        params.pop("student.mlp.fc1.weight")
        with pytest.raises(CheckpointError, match="student parameters missing"):
            build_decentralized_policy(teacher, params, tiny_config, tiny_spec)

    def test_non_gis_variant(self, tiny_config, tiny_spec):
        config = tiny_config.with_updates(variant="vdn")
        with pytest.raises(PrerequisiteError):
            build_decentralized_policy(untrained_checkpoint(config, tiny_spec), {}, config, tiny_spec)

    def test_message_width_must_match(self, tiny_config, tiny_spec, teacher):
        networks = restore_networks(teacher, tiny_config, tiny_spec)
        student = StudentNetwork(ParamStore(), tiny_spec.local_dim, 5, Rng(0))
        with pytest.raises(ValueError, match="5-dim"):
            StudentExecutor(networks.agent, student, tiny_spec.n_agents)

    @staticmethod
    def student_params(config, spec):
        store = ParamStore()
        StudentNetwork(store, spec.local_dim, config.nets.d_z, Rng(1), hidden=config.nets.student_hidden)
        return store.state_dict()
