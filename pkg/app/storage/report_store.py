"""Experiment reports: YAML summaries and CSV tables."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union
import pandas as pd
import yaml
from pydantic import ValidationError
from app.config import settings
from app.errors import ContainerError
from app.models import BssScore, ComparisonReport, ExperimentReport, TuneTrace

logger = logging.getLogger(__name__)

SCORE_COLUMNS = ["source_index", "sdr_db", "sir_db", "sar_db"]
TRACE_COLUMNS = ["stage", "value", "r_e", "r_s", "r_n", "epochs_run", "final_loss"]


def scores_table(scores: Sequence[BssScore], average: BssScore) -> pd.DataFrame:
    """One row per source plus an ``average`` row."""
    rows: List[Dict[str, Any]] = [
        {col: getattr(s, col) for col in SCORE_COLUMNS} for s in scores
    ]
    rows.append(
        {"source_index": "average", "sdr_db": average.sdr_db,
         "sir_db": average.sir_db, "sar_db": average.sar_db}
    )
    return pd.DataFrame(rows, columns=SCORE_COLUMNS)


def trace_table(trace: TuneTrace) -> pd.DataFrame:
    """One row per trained candidate, gamma sweep first."""
    rows: List[Dict[str, Any]] = [
        {"stage": "gamma", "value": c.gamma, "r_e": c.r_e, "r_s": None, "r_n": None,
         "epochs_run": c.epochs_run, "final_loss": c.final_loss}
        for c in trace.gamma_candidates
    ]
    rows.extend(
        {"stage": "mu", "value": s.mu, "r_e": None, "r_s": s.r_s, "r_n": s.r_n,
         "epochs_run": s.epochs_run, "final_loss": s.final_loss}
        for s in trace.mu_steps
    )
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def comparison_table(comparison: ComparisonReport) -> pd.DataFrame:
    """Average SDR/SIR/SAR of both modes side by side."""
    df, joint = comparison.df_dnn.average, comparison.joint.average
    return pd.DataFrame(
        {
            "metric": ["SDR", "SIR", "SAR"],
            "df-dnn": [df.sdr_db, df.sir_db, df.sar_db],
            "joint": [joint.sdr_db, joint.sir_db, joint.sar_db],
        }
    )


def _dump_yaml(data: Any, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(data, f, sort_keys=False)
    return path


def _write_csv(table: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format=settings.float_format)
    return path


class ReportStore:
    """Writes run reports and reads archived tuning traces."""

    def write_report(self, report: ExperimentReport, run_dir: Union[str, Path]) -> List[Path]:
        """report.yaml (no wall-clock fields), timings.yaml and scores.csv."""
        run_dir = Path(run_dir)
        summary = report.model_dump(mode="json", exclude={"stage_seconds"})
        paths = [
            _dump_yaml(summary, run_dir / "report.yaml"),
            _dump_yaml(dict(report.stage_seconds), run_dir / "timings.yaml"),
            _write_csv(scores_table(report.scores, report.average), run_dir / "scores.csv"),
        ]
        logger.info(f"Report written to {run_dir}")
        return paths

    def write_trace(self, trace: TuneTrace, run_dir: Union[str, Path], index: int) -> List[Path]:
        """trace_<index>.yaml and trace_<index>.csv."""
        run_dir = Path(run_dir)
        return [
            _dump_yaml(trace.model_dump(mode="json"), run_dir / f"trace_{index}.yaml"),
            _write_csv(trace_table(trace), run_dir / f"trace_{index}.csv"),
        ]

    def write_comparison(self, comparison: ComparisonReport, out_dir: Union[str, Path]) -> Path:
        return _write_csv(comparison_table(comparison), Path(out_dir) / "comparison.csv")

    def read_trace(self, path: Union[str, Path]) -> TuneTrace:
        """Load a trace_<index>.yaml file."""
        try:
            with open(path) as f:
                return TuneTrace.model_validate(yaml.safe_load(f))
        except (yaml.YAMLError, ValidationError) as e:
            raise ContainerError(f"{path}: not a tuning trace: {e}") from e


report_store = ReportStore()
