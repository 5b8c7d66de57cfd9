import logging
import sys

import orjson
import pandas as pd
import pytest

from ptde.cli import build_parser, main
from ptde.config import Variant, config_hash, dump_config
from ptde.exceptions import DatasetError, PrerequisiteError, ProvenanceError
from ptde.harness import (
    DATASET,
    DISTILL_CURVE,
    EVAL_TABLE,
    METRICS,
    STAGE1_CKPT,
    STUDENT_CKPT,
    Experiment,
    launch_seeds,
    pipeline_commands,
    run_pipeline,
)
from ptde.utils import file_digest, read_table


@pytest.fixture
def restore_ptde_logger():
    """The CLI reconfigures the package logger."""
    root = logging.getLogger("ptde")
    level, handlers = root.level, list(root.handlers)
    yield
    root.handlers = handlers
    root.setLevel(level)


@pytest.fixture
def experiment(tiny_config, tmp_path):
    return Experiment(tiny_config, 0, tmp_path)


class TestStages:
    """Stage dispatch, prerequisites and provenance."""

    def test_pipeline_writes_every_artifact(self, experiment, tiny_config):
        table = experiment.pipeline()
        assert table["stage"].tolist() == ["stage1", "stage2"]
        assert pd.isna(table["prr"][0])

        digest = config_hash(tiny_config)
        assert experiment.run_dir == experiment.root / digest[:12] / "seed_0"
        manifest = orjson.loads(experiment.manifest_path.read_bytes())
        assert manifest["config_hash"] == digest
        assert manifest["seed"] == 0
        names = {STAGE1_CKPT, METRICS, DATASET, STUDENT_CKPT, DISTILL_CURVE, EVAL_TABLE}
        assert set(manifest["artifacts"]) == names
        for name in names:
            assert manifest["artifacts"][name] == file_digest(experiment.path(name))
        assert (experiment.root / digest[:12] / "config.json").read_bytes() == dump_config(tiny_config)

        _, recorded = read_table(experiment.path(EVAL_TABLE))
        assert recorded == digest

    def test_pipeline_is_deterministic(self, tiny_config, tmp_path):
        Experiment(tiny_config, 1, tmp_path / "a").pipeline()
        Experiment(tiny_config, 1, tmp_path / "b").pipeline()
        run = f"{config_hash(tiny_config)[:12]}/seed_1"
        for name in (STAGE1_CKPT, METRICS, DATASET, STUDENT_CKPT, DISTILL_CURVE, EVAL_TABLE):
            assert (tmp_path / "a" / run / name).read_bytes() == (tmp_path / "b" / run / name).read_bytes()

    def test_later_stages_need_a_checkpoint(self, experiment):
        with pytest.raises(PrerequisiteError, match="stage1.ckpt"):
            experiment.run("train2")
        with pytest.raises(PrerequisiteError):
            experiment.run("eval")

    def test_distill_needs_a_gis_variant(self, tiny_config, tmp_path):
        experiment = Experiment(tiny_config.with_updates(variant="vdn"), 0, tmp_path)
        with pytest.raises(PrerequisiteError, match="no GIS teacher"):
            experiment.distill()

    def test_stages_run_by_name(self, experiment):
        experiment.run("train1")
        result = experiment.run("train2")
        assert result.heldout_mse <= result.initial_heldout_mse
        table = experiment.run("eval")
        assert table["stage"].tolist() == ["stage1", "stage2"]
        assert experiment.path(EVAL_TABLE).exists()

    def test_unknown_stage(self, experiment):
        with pytest.raises(ValueError, match="unknown stage"):
            experiment.run("train3")

    def test_eval_without_distillation_for_plain_variants(self, tiny_config, tmp_path):
        experiment = Experiment(tiny_config.with_updates(variant="vdn"), 0, tmp_path)
        table = experiment.pipeline()
        assert table["stage"].tolist() == ["stage1"]
        assert not experiment.path(DATASET).exists()

    def test_modified_checkpoint_is_rejected(self, experiment):
        experiment.train1()
        with open(experiment.path(STAGE1_CKPT), "ab") as fh:
            fh.write(b"\0")
        with pytest.raises(ProvenanceError, match="modified"):
            experiment.distill()

    def test_foreign_manifest_is_rejected(self, experiment):
        experiment.train1()
        manifest = orjson.loads(experiment.manifest_path.read_bytes())
        manifest["config_hash"] = "0" * 64
        experiment.manifest_path.write_bytes(orjson.dumps(manifest))
        with pytest.raises(ProvenanceError, match="000000000000"):
            experiment.evaluate()

    def test_recorded_dataset_is_reused_and_checked(self, experiment):
        experiment.train1()
        first = experiment.distill()
        second = experiment.distill()
        assert first.heldout_mse == second.heldout_mse
        experiment.path(DATASET).write_bytes(b"PTDEDSET")
        with pytest.raises(DatasetError, match="modified"):
            experiment.distill()

    def test_retraining_invalidates_downstream_artifacts(self, experiment):
        experiment.pipeline()
        experiment.train1()
        manifest = orjson.loads(experiment.manifest_path.read_bytes())
        assert set(manifest["artifacts"]) == {STAGE1_CKPT, METRICS}
        with pytest.raises(PrerequisiteError, match="student.ckpt"):
            experiment.evaluate()


class TestMultiSeed:
    def test_pipeline_commands(self, tmp_path):
        commands = pipeline_commands("config.json", [0, 3], tmp_path)
        assert len(commands) == 2
        assert commands[1][:4] == [sys.executable, "-m", "ptde", "pipeline"]
        assert commands[1][commands[1].index("--seed") + 1] == "3"
        assert commands[0][-2:] == ["--out", str(tmp_path)]
        assert "--variant" not in commands[0]

    def test_pipeline_commands_per_variant(self, tmp_path):
        commands = pipeline_commands("config.json", [0, 1], tmp_path, variants=["qmix", "vdn_sgi"])
        assert len(commands) == 4
        pairs = [(c[c.index("--variant") + 1], c[c.index("--seed") + 1]) for c in commands]
        assert pairs == [("qmix", "0"), ("qmix", "1"), ("vdn_sgi", "0"), ("vdn_sgi", "1")]

    @pytest.mark.asyncio
    async def test_launch_seeds_reports_exit_codes(self):
        codes = await launch_seeds([["sh", "-c", "exit 0"], ["sh", "-c", "exit 3"]], jobs=2)
        assert codes == [0, 3]

    def test_run_pipeline_reports_all_seeds(self, tiny_config, tmp_path):
        summary = run_pipeline(tiny_config, tmp_path)
        assert summary["seeds"].tolist() == [2, 2]
        run = tmp_path / config_hash(tiny_config)[:12]
        assert (run / "report.csv").exists()
        assert (run / "report.txt").exists()

    def test_run_pipeline_covers_every_variant(self, tiny_config, tmp_path):
        config = tiny_config.with_updates(variants=[v.value for v in Variant], seeds=[0])
        summary = run_pipeline(config, tmp_path)
        centralized = summary[summary["stage"] == "stage1"]
        assert sorted(centralized["variant"]) == sorted(v.value for v in Variant)
        assert centralized["config_hash"].nunique() == len(Variant)
        distilled = summary.loc[summary["stage"] == "stage2", "variant"]
        assert sorted(distilled) == sorted(v.value for v in Variant if v.distillable)
        assert (tmp_path / "report.csv").exists()


class TestCLI:
    def test_stage_arguments(self):
        args = build_parser().parse_args(["distill", "--config", "c.json", "--seed", "2"])
        assert args.command == "distill"
        assert args.seed == 2
        assert args.out is None
        assert args.variant is None

    def test_stages_from_the_command_line(self, tiny_config, tmp_path, restore_ptde_logger):
        config_path = tmp_path / "config.json"
        config_path.write_bytes(dump_config(tiny_config))
        out = tmp_path / "runs"
        for command in ("train1", "distill", "eval"):
            assert main([command, "--config", str(config_path), "--seed", "0", "--out", str(out)]) == 0
        run = out / config_hash(tiny_config)[:12] / "seed_0"
        table, _ = read_table(run / EVAL_TABLE)
        assert table["stage"].tolist() == ["stage1", "stage2"]

    def test_unknown_variant_exits_with_2(self, tiny_config, tmp_path, restore_ptde_logger):
        config_path = tmp_path / "config.json"
        config_path.write_bytes(dump_config(tiny_config))
        assert main(["train1", "--config", str(config_path), "--variant", "qmix_xyz"]) == 2

    def test_missing_config_exits_with_2(self, tmp_path, restore_ptde_logger):
        assert main(["train1", "--config", str(tmp_path / "absent.json")]) == 2

    def test_empty_report_exits_with_2(self, tmp_path, restore_ptde_logger):
        assert main(["report", str(tmp_path)]) == 2

    def test_pipeline_then_report(self, tiny_config, tmp_path, capsys, restore_ptde_logger):
        config_path = tmp_path / "config.json"
        config_path.write_bytes(dump_config(tiny_config))
        out = tmp_path / "runs"
        assert main(["pipeline", "--config", str(config_path), "--seed", "0", "--out", str(out)]) == 0
        capsys.readouterr()
        assert main(["report", str(out)]) == 0
        assert "distilled" in capsys.readouterr().out
        assert (out / "report.csv").exists()
