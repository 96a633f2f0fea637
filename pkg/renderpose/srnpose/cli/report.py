import logging
from pathlib import Path

import pandas as pd

from srnpose.constants.constants import SUMMARY_FILE
from srnpose.constants.messages import ErrorMessages
from srnpose.errors import ConfigError

logger = logging.getLogger(__name__)

EVAL_DIR = 'eval'
KEY_COLUMNS = ['run', 'status', 'strategy', 'loss_kind']


def find_summary(run_dir: Path) -> Path | None:
    for candidate in (run_dir / EVAL_DIR / SUMMARY_FILE, run_dir / SUMMARY_FILE):
        if candidate.is_file():
            return candidate
    return None


def merge_runs(run_dirs) -> pd.DataFrame:
    """
    One table over several evaluation runs, rows ordered by (strategy, loss kind, run).
    A run without a summary gets a single row with status 'missing' instead of being dropped.
    :raises ConfigError: with fewer than two run directories
    """
    run_dirs = [Path(p) for p in run_dirs]
    if len(run_dirs) < 2: raise ConfigError(ErrorMessages.TOO_FEW_RUNS)
    frames = []
    for run_dir in run_dirs:
        summary = find_summary(run_dir)
        if summary is None:
            logger.warning(f"report: no {SUMMARY_FILE} under {run_dir}, marking the run as missing")
            frames.append(pd.DataFrame([{'run': str(run_dir), 'status': 'missing', 'strategy': '', 'loss_kind': ''}]))
            continue
        frame = pd.read_csv(summary)
        frame.insert(0, 'status', 'ok')
        frame.insert(0, 'run', str(run_dir))
        frames.append(frame)
    merged = pd.concat(frames, ignore_index=True, sort=False)
    merged[['strategy', 'loss_kind']] = merged[['strategy', 'loss_kind']].fillna('')
    merged = merged.sort_values(['strategy', 'loss_kind', 'run'], kind='mergesort').reset_index(drop=True)
    rest = [c for c in merged.columns if c not in KEY_COLUMNS]
    return merged[KEY_COLUMNS + rest]


def aligned_text(frame: pd.DataFrame) -> str:
    return frame.to_string(index=False, float_format=lambda v: f"{v:.4f}") + "\n"
