# Experiment orchestration
#
# Every artifact of one (config, seed) lives in <output_dir>/<config_hash[:12]>/seed_<seed>/:
#   stage1.ckpt, metrics.csv (diagnostic.json on divergence)   train1
#   dataset.bin, student.ckpt, distill.csv                     distill
#   eval.csv                                                   eval
#   manifest.json   config, config hash, seed and the SHA-256 of every artifact above
# and <output_dir>/<config_hash[:12]>/config.json holds the config shared by its seeds.

import asyncio
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import orjson
import pandas as pd

from .config import ExperimentConfig, config_hash, dump_config
from .core.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .core.rng import Rng
from .distill import (
    DistillDataset,
    DistillResult,
    build_decentralized_policy,
    generate_dataset,
    load_dataset,
    save_dataset,
    train_student,
)
from .envs import env_factory
from .evaluation import TeacherExecutor, compute_prr, evaluate, restore_networks
from .exceptions import DatasetError, PrerequisiteError, ProvenanceError
from .interfaces import MultiAgentEnv
from .learners import train_stage1, train_stage1_ac
from .logging import get_logger, with_logging
from .report import EVAL_COLUMNS, MANIFEST_FILE, report
from .utils import file_digest, write_table

logger = get_logger("harness")

STAGE1_CKPT = "stage1.ckpt"
METRICS = "metrics.csv"
DATASET = "dataset.bin"
STUDENT_CKPT = "student.ckpt"
DISTILL_CURVE = "distill.csv"
EVAL_TABLE = "eval.csv"

# Artifacts made stale when an earlier stage is re-run
DOWNSTREAM = {
    "train1": (DATASET, STUDENT_CKPT, DISTILL_CURVE, EVAL_TABLE),
    "distill": (EVAL_TABLE,),
}

# Child stream keys of the seed's master Rng, after the stage-1 keys 0..4
DISTILL_STREAM = 5
FINAL_EVAL_STREAM = 6

STAGE_ALIASES = {"train1": "train1", "train2": "distill", "distill": "distill", "eval": "evaluate"}


class Experiment:
    """
    One (config, seed) run: artifact paths, provenance checks and the stage dispatch.

    Stages read their prerequisites from disk, so each can be run in a separate process.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        seed: int,
        output_dir: Optional[str | Path] = None,
        make_env: Optional[Callable[[], MultiAgentEnv]] = None,
    ):
        self.config = config
        self.seed = int(seed)
        self.config_hash = config_hash(config)
        self.root = Path(output_dir or config.output_dir)
        self.run_dir = self.root / self.config_hash[:12] / f"seed_{self.seed}"
        self.make_env = make_env or (lambda: env_factory(config.env))
        self.rng = Rng(self.seed)
        self.log = logger.bind(variant=config.variant.value, seed=self.seed, config_hash=self.config_hash[:12])

    def path(self, name: str) -> Path:
        return self.run_dir / name

    ### Manifest ###

    @property
    def manifest_path(self) -> Path:
        return self.path(MANIFEST_FILE)

    def read_manifest(self) -> Dict:
        """
        Raises:
            ProvenanceError: If the directory holds artifacts of another config
        """
        if not self.manifest_path.exists():
            return {
                "config": self.config.to_dict(),
                "config_hash": self.config_hash,
                "seed": self.seed,
                "artifacts": {},
            }
        manifest = orjson.loads(self.manifest_path.read_bytes())
        if manifest.get("config_hash") != self.config_hash:
            raise ProvenanceError(
                f"{self.run_dir} holds artifacts of config {str(manifest.get('config_hash'))[:12]}, "
                f"current config is {self.config_hash[:12]}"
            )
        return manifest

    def _write_manifest(self, manifest: Dict) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.manifest_path.write_bytes(orjson.dumps(manifest, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS))

    def record(self, stage: str, *names: str) -> None:
        """Store the digests of freshly written artifacts and forget those they make stale."""
        manifest = self.read_manifest()
        manifest["config"] = self.config.to_dict()
        artifacts = manifest.setdefault("artifacts", {})
        for stale in DOWNSTREAM.get(stage, ()):
            artifacts.pop(stale, None)
        for name in names:
            if self.path(name).exists():
                artifacts[name] = file_digest(self.path(name))
        self._write_manifest(manifest)

    def verify(self, name: str) -> Path:
        """
        Path of a recorded artifact whose bytes still match the manifest.

        Raises:
            PrerequisiteError: If the artifact was never produced
            ProvenanceError: If the file changed since it was recorded
        """
        path = self.path(name)
        recorded = self.read_manifest().get("artifacts", {}).get(name)
        if recorded is None or not path.exists():
            raise PrerequisiteError(f"{path} not found; run the stage that produces it first")
        if file_digest(path) != recorded:
            raise ProvenanceError(f"{path} was modified after it was recorded in {MANIFEST_FILE}")
        return path

    def load_checkpoint(self, name: str) -> Checkpoint:
        """
        Raises:
            PrerequisiteError: If the checkpoint does not exist
            ProvenanceError: If its header carries another config hash
        """
        checkpoint = load_checkpoint(self.verify(name))
        if checkpoint.config_hash != self.config_hash:
            raise ProvenanceError(
                f"{self.path(name)} was trained under config {checkpoint.config_hash[:12]}, "
                f"current config is {self.config_hash[:12]}"
            )
        return checkpoint

    ### Stages ###

    @with_logging
    def train1(self) -> Checkpoint:
        """Stage 1: train the variant and write its checkpoint and learning curve."""
        self.read_manifest()
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.root / self.config_hash[:12] / "config.json").write_bytes(dump_config(self.config))
        trainer = train_stage1_ac if self.config.variant.is_actor_critic else train_stage1
        checkpoint = trainer(self.config, self.seed, run_dir=self.run_dir, make_env=self.make_env)
        save_checkpoint(self.path(STAGE1_CKPT), checkpoint)
        self.record("train1", STAGE1_CKPT, METRICS)
        self.log.info("Stage 1 finished", {"checkpoint": str(self.path(STAGE1_CKPT))})
        return checkpoint

    def dataset(self, teacher: Checkpoint) -> DistillDataset:
        """The recorded teacher dataset, generated first if this run has none."""
        manifest = self.read_manifest()
        path = self.path(DATASET)
        recorded = manifest.get("artifacts", {}).get(DATASET)
        if recorded is not None:
            if not path.exists() or file_digest(path) != recorded:
                raise DatasetError(f"{path} was modified or removed after generation")
            return load_dataset(path, expected_hash=self.config_hash)
        rng = self.rng.split(DISTILL_STREAM).split(0)
        dataset = generate_dataset(teacher, self.config, self.config.distill.episodes, rng, make_env=self.make_env)
        save_dataset(path, dataset)
        self.record("dataset", DATASET)
        return load_dataset(path, expected_hash=self.config_hash)

    @with_logging
    def distill(self) -> DistillResult:
        """
        Stage 2: record the teacher dataset and fit the student offline.

        Raises:
            PrerequisiteError: If there is no stage-1 checkpoint or the variant is not a GIS variant
        """
        if not self.config.variant.distillable:
            raise PrerequisiteError(f"variant {self.config.variant.value} has no GIS teacher to distill")
        teacher = self.load_checkpoint(STAGE1_CKPT)
        dataset = self.dataset(teacher)
        student_rng = self.rng.split(DISTILL_STREAM).split(1)
        result = train_student(dataset, self.config.distill, student_rng, hidden=self.config.nets.student_hidden)
        save_checkpoint(self.path(STUDENT_CKPT), result.checkpoint(self.config_hash))
        write_table(self.path(DISTILL_CURVE), result.history, self.config_hash)
        self.record("distill", STUDENT_CKPT, DISTILL_CURVE)
        self.log.info(
            "Stage 2 finished",
            {"heldout_mse": result.heldout_mse, "initial_heldout_mse": result.initial_heldout_mse},
        )
        return result

    @with_logging
    def evaluate(self) -> pd.DataFrame:
        """
        Greedy evaluation of the centralized policy and, for GIS variants, the distilled one.

        Both executors see the same episode resets. The stage-2 row carries the PRR.
        """
        spec = self.make_env().spec
        teacher = self.load_checkpoint(STAGE1_CKPT)
        networks = restore_networks(teacher, self.config, spec)
        episodes, n_parallel = self.config.learner.eval_episodes, self.config.learner.n_parallel
        rng = self.rng.split(FINAL_EVAL_STREAM)

        centralized = evaluate(
            TeacherExecutor(networks, spec, sample_at_eval=self.config.nets.sample_at_eval),
            self.make_env,
            episodes,
            rng,
            n_parallel=n_parallel,
        )
        rows = [self._row("stage1", centralized.win_rate, centralized.mean_return, None)]
        if self.config.variant.distillable:
            student = self.load_checkpoint(STUDENT_CKPT)
            executor = build_decentralized_policy(teacher, student, self.config, spec)
            decentralized = evaluate(executor, self.make_env, episodes, rng, n_parallel=n_parallel)
            prr = compute_prr(decentralized.win_rate, centralized.win_rate)
            rows.append(self._row("stage2", decentralized.win_rate, decentralized.mean_return, prr))

        table = pd.DataFrame(rows, columns=EVAL_COLUMNS)
        write_table(self.path(EVAL_TABLE), table, self.config_hash)
        self.record("eval", EVAL_TABLE)
        self.log.info("Evaluation finished", {"rows": rows})
        return table

    def _row(self, stage: str, win_rate: float, mean_return: float, prr: Optional[float]) -> Dict:
        return {
            "variant": self.config.variant.value,
            "seed": self.seed,
            "stage": stage,
            "eval_win_rate": win_rate,
            "eval_return": mean_return,
            "prr": prr,
        }

    def run(self, stage: Optional[str] = None):
        """
        Run one stage ('train1', 'train2'/'distill' or 'eval'); defaults to the config's stage.

        Raises:
            ValueError: For an unknown stage name
        """
        stage = stage or self.config.stage
        if stage not in STAGE_ALIASES:
            raise ValueError(f"unknown stage {stage!r}; expected one of {sorted(STAGE_ALIASES)}")
        return getattr(self, STAGE_ALIASES[stage])()

    def pipeline(self) -> pd.DataFrame:
        """train1, then distill for GIS variants, then eval."""
        self.train1()
        if self.config.variant.distillable:
            self.distill()
        return self.evaluate()


### Multi-seed runs ###


def pipeline_commands(
    config_path: str | Path,
    seeds: Sequence[int],
    output_dir: str | Path,
    variants: Optional[Sequence[str]] = None,
) -> List[List[str]]:
    """One ``ptde pipeline`` command line per seed, or per (variant, seed) when variants are given."""
    commands = []
    for variant in variants or [None]:
        for seed in seeds:
            command = [sys.executable, "-m", "ptde", "pipeline", "--config", str(config_path), "--seed", str(seed)]
            if variant is not None:
                command += ["--variant", variant]
            commands.append(command + ["--out", str(output_dir)])
    return commands


async def launch_seeds(commands: Sequence[Sequence[str]], jobs: int = 1) -> List[int]:
    """
    Run seed commands as separate processes, at most ``jobs`` at a time.

    Returns:
        Exit codes in command order
    """
    semaphore = asyncio.Semaphore(max(1, jobs))

    async def run_one(command: Sequence[str]) -> int:
        async with semaphore:
            logger.info("Launching seed run", {"command": " ".join(command)})
            process = await asyncio.create_subprocess_exec(*command)
            code = await process.wait()
            if code != 0:
                logger.error("Seed run failed", {"command": " ".join(command), "exit_code": code})
            return code

    return list(await asyncio.gather(*(run_one(c) for c in commands)))


@with_logging
def run_pipeline(
    config: ExperimentConfig,
    output_dir: Optional[str | Path] = None,
    seeds: Optional[Sequence[int]] = None,
    jobs: int = 1,
    config_path: Optional[str | Path] = None,
) -> pd.DataFrame:
    """
    Full pipeline for every variant and seed, then the report.

    Runs happen in this process one after another unless ``jobs`` > 1 and the config
    file path is known, in which case each (variant, seed) becomes its own process.
    A single-variant report goes to that config's directory, a multi-variant one to the output root.

    Raises:
        RuntimeError: If a seed process exits with a non-zero code
    """
    root = Path(output_dir or config.output_dir)
    seeds = list(seeds or config.seeds)
    runs = config.expand_variants()
    if jobs > 1 and config_path is not None:
        variants = None if config.variants is None else [run.variant.value for run in runs]
        commands = pipeline_commands(config_path, seeds, root, variants)
        codes = asyncio.run(launch_seeds(commands, jobs))
        labels = [f"{run.variant.value}/seed_{seed}" for run in runs for seed in seeds]
        failed = [label for label, code in zip(labels, codes) if code != 0]
        if failed:
            raise RuntimeError(f"pipeline failed for {failed}")
    else:
        for run in runs:
            for seed in seeds:
                Experiment(run, seed, root).pipeline()
    dirs = [root / config_hash(run)[:12] for run in runs]
    return report(dirs, out_dir=dirs[0] if len(dirs) == 1 else root)
