# Result tables
# Aggregates per-seed eval.csv files into mean and population std per (config, variant, stage), plus the PRR row

from pathlib import Path
from typing import Dict, Iterable, List, Optional, Set

import numpy as np
import orjson
import pandas as pd

from .exceptions import ReportError
from .logging import get_logger, with_logging
from .utils import read_table

logger = get_logger("report")

EVAL_COLUMNS = ["variant", "seed", "stage", "eval_win_rate", "eval_return", "prr"]
REPORT_COLUMNS = [
    "config_hash",
    "variant",
    "stage",
    "seeds",
    "win_rate_mean",
    "win_rate_std",
    "return_mean",
    "return_std",
    "prr_mean",
    "prr_std",
]
EVAL_FILE = "eval.csv"
MANIFEST_FILE = "manifest.json"
STAGE_LABELS = {"stage1": "centralized", "stage2": "distilled"}


def _population_std(values: pd.Series) -> float:
    values = values.dropna()
    if len(values) < 2:
        return float("nan")
    return float(np.std(values.to_numpy(), ddof=0))


def expected_paths(result_dirs: Iterable[Path]) -> List[str]:
    return [str(Path(d) / "<config_hash>" / "seed_<seed>" / EVAL_FILE) for d in result_dirs]


def _expected_seeds(seed_dir: Path) -> Optional[Set[int]]:
    manifest = seed_dir / MANIFEST_FILE
    if not manifest.exists():
        return None
    return set(orjson.loads(manifest.read_bytes()).get("config", {}).get("seeds", []))


def load_eval_rows(result_dirs: Iterable[str | Path]) -> pd.DataFrame:
    """
    Collect every eval.csv below the result directories.

    Seeds listed in a run's manifest but lacking an eval.csv are logged as warnings;
    the table is built from what exists.

    Raises:
        ReportError: If no eval.csv is found, listing the paths that were expected
    """
    result_dirs = [Path(d) for d in result_dirs]
    frames: List[pd.DataFrame] = []
    found: Dict[Path, Set[int]] = {}
    expected: Dict[Path, Set[int]] = {}

    for root in result_dirs:
        for path in sorted(root.rglob(EVAL_FILE)):
            frame, digest = read_table(path)
            missing = set(EVAL_COLUMNS) - set(frame.columns)
            if missing:
                logger.warning("Skipping malformed eval file", {"path": str(path), "missing": sorted(missing)})
                continue
            frames.append(frame.assign(config_hash=digest))
            run_dir = path.parent.parent
            found.setdefault(run_dir, set()).update(int(s) for s in frame["seed"])
            seeds = _expected_seeds(path.parent)
            if seeds:
                expected.setdefault(run_dir, set()).update(seeds)

    if not frames:
        raise ReportError(f"no evaluation results found; expected files like {expected_paths(result_dirs)}")

    for run_dir, seeds in sorted(expected.items()):
        absent = sorted(seeds - found.get(run_dir, set()))
        if absent:
            logger.warning("Missing seeds, table is partial", {"run": str(run_dir), "seeds": absent})

    return pd.concat(frames, ignore_index=True)


def summarize(rows: pd.DataFrame) -> pd.DataFrame:
    """
    Per (config hash, variant, stage): seed count, mean and population std of win rate and return, and PRR.

    Runs of different configs are never pooled. Spreads over fewer than two seeds are NaN.
    """
    summary = (
        rows.groupby(["config_hash", "variant", "stage"], sort=True)
        .agg(
            seeds=("seed", "nunique"),
            win_rate_mean=("eval_win_rate", "mean"),
            win_rate_std=("eval_win_rate", _population_std),
            return_mean=("eval_return", "mean"),
            return_std=("eval_return", _population_std),
            prr_mean=("prr", "mean"),
            prr_std=("prr", _population_std),
        )
        .reset_index()
    )
    return summary[REPORT_COLUMNS]


def _mean_std(mean: float, std: float, percent: bool = False) -> str:
    if pd.isna(mean):
        return "N/A"
    if percent:
        return f"{100 * mean:.1f}%" + ("" if pd.isna(std) else f" ± {100 * std:.1f}%")
    return f"{mean:.3f}" + ("" if pd.isna(std) else f" ± {std:.3f}")


def format_report(summary: pd.DataFrame) -> str:
    """Aligned text table; win rate and return as mean ± std, PRR in percent."""
    display = pd.DataFrame(
        {
            "config": summary["config_hash"].map(lambda h: str(h)[:12]),
            "variant": summary["variant"],
            "execution": summary["stage"].map(lambda s: STAGE_LABELS.get(s, s)),
            "seeds": summary["seeds"],
            "win_rate": [_mean_std(m, s) for m, s in zip(summary["win_rate_mean"], summary["win_rate_std"])],
            "return": [_mean_std(m, s) for m, s in zip(summary["return_mean"], summary["return_std"])],
            "PRR": [_mean_std(m, s, percent=True) for m, s in zip(summary["prr_mean"], summary["prr_std"])],
        }
    )
    return display.to_string(index=False) + "\n"


@with_logging
def report(result_dirs: Iterable[str | Path], out_dir: Optional[str | Path] = None) -> pd.DataFrame:
    """
    Build the result table.

    Args:
        result_dirs: Output roots (or single run directories) to search for eval.csv files
        out_dir: Where report.csv and report.txt are written; nothing is written when None

    Returns:
        The summary table with REPORT_COLUMNS

    Raises:
        ReportError: If no evaluation artifacts exist
    """
    summary = summarize(load_eval_rows(result_dirs))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        summary.to_csv(out_dir / "report.csv", index=False, lineterminator="\n")
        (out_dir / "report.txt").write_text(format_report(summary))
        logger.info("Wrote report", {"path": str(out_dir), "rows": len(summary)})
    return summary
