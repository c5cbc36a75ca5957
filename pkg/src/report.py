"""
Evaluation report: structured JSON, a plot-ready CSV and the ASCII summary
table printed by the command line.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from .error_handler import ErrorHandler, FileWriteError
from .metrics import AnovaResult, DetectionF1, DetectionScore, SimilarityReport
from .pipeline import AblationRow, RuntimeStat

# Initialize Error Handling
error_handler = ErrorHandler()

REPORT_JSON = "eval_report.json"
REPORT_CSV = "eval_report.csv"
PLOT_COLUMNS = ["metric", "configuration", "value", "dispersion"]


@dataclass
class EvalReport:
    detection: Dict[str, DetectionScore] = field(default_factory=dict)
    f1: Dict[str, DetectionF1] = field(default_factory=dict)
    runtimes: Dict[str, RuntimeStat] = field(default_factory=dict)
    similarity: Optional[SimilarityReport] = None
    retrace: Dict[str, float] = field(default_factory=dict)
    anova: Dict[str, AnovaResult] = field(default_factory=dict)
    grid_search: List[Tuple[float, float]] = field(default_factory=list)
    review_load: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "detection": {k: asdict(v) for k, v in self.detection.items()},
            "f1": {k: asdict(v) for k, v in self.f1.items()},
            "runtimes": {k: asdict(v) for k, v in self.runtimes.items()},
            "similarity": None if self.similarity is None else self.similarity.to_dict(),
            "retrace": dict(self.retrace),
            "anova": {k: asdict(v) for k, v in self.anova.items()},
            "grid_search": [{"window_s": w, "f1": f} for w, f in self.grid_search],
            "review_load": dict(self.review_load),
        }


def from_ablation(rows: List[AblationRow]) -> EvalReport:
    report = EvalReport()
    for row in rows:
        report.detection[row.label] = row.score
        if row.runtime is not None:
            report.runtimes[row.label] = row.runtime
    return report


def plot_rows(report: EvalReport) -> pd.DataFrame:
    """Long-format rows (metric, configuration, value, dispersion)."""
    rows: List[Dict[str, Any]] = []

    def add(metric: str, configuration: str, value: float, dispersion: float = 0.0) -> None:
        rows.append(
            {"metric": metric, "configuration": configuration, "value": value, "dispersion": dispersion}
        )

    for name, stat in report.runtimes.items():
        add("T_C", name, stat.mean_s, stat.std_s)
    for name, score in report.detection.items():
        add("N_p", name, score.n_p)
        add("D_Acc", name, score.d_acc)
        add("X_i", name, score.n_valid)
        add("X", name, score.n_total)
    for name, f1 in report.f1.items():
        add("precision", name, f1.precision)
        add("recall", name, f1.recall)
        add("F1", name, f1.f1)
    if report.similarity is not None:
        for metric in ("ssim", "emd", "dtw_distance", "pcc"):
            add(metric, "cue_vs_retrace", getattr(report.similarity, metric))
    for metric, value in report.retrace.items():
        add(metric, "retrace", value)
    for name, result in report.anova.items():
        add("anova_F", name, result.f)
        add("anova_p", name, result.p)
    for window, f1 in report.grid_search:
        add("grid_F1", f"window_{window:.2f}s", f1)
    for name, load in report.review_load.items():
        add("review_frames", name, load["n_frames"])
        add("review_fraction", name, load["fraction"])
    return pd.DataFrame(rows, columns=PLOT_COLUMNS)


def summary_table(report: EvalReport) -> str:
    """One row per configuration with T_C, N_p, D_Acc and the counts behind them."""
    if not report.detection and not report.runtimes:
        return "(no results)"
    names = list(report.detection) or list(report.runtimes)
    records = []
    for name in names:
        score = report.detection.get(name)
        stat = report.runtimes.get(name)
        records.append(
            {
                "Configuration": name,
                "T_C (s)": f"{stat.mean_s:.3f} ± {stat.std_s:.3f}" if stat else "-",
                "N_p": f"{score.n_p:.3f}" if score else "-",
                "D_Acc": f"{score.d_acc:.3f}" if score else "-",
                "X_i": score.n_valid if score else "-",
                "X": score.n_total if score else "-",
            }
        )
    return pd.DataFrame(records).to_string(index=False)


def write_report(report: EvalReport, directory: str) -> Tuple[str, str]:
    out = Path(directory)
    json_path, csv_path = out / REPORT_JSON, out / REPORT_CSV
    try:
        out.mkdir(parents=True, exist_ok=True)
        json_path.write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )
        plot_rows(report).to_csv(csv_path, index=False)
    except OSError as e:
        raise FileWriteError(f"Cannot write evaluation report to '{directory}': {e}")
    error_handler.info(f"Evaluation report written to '{json_path}' and '{csv_path}'")
    return str(json_path), str(csv_path)
