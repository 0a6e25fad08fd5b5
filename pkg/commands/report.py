import json
import logging
from pathlib import Path
from typing import Any

from commands.run import CONFIG_FILE, MATRIX_FILE, METRICS_FILE
from config.config import Modality
from continual.metrics import REPORTED_MODALITIES, AccuracyMatrix, MetricsReport
from ui.tui import TUI
from utils.errors import ArtifactError
from utils.paths import atomic_write_text

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.csv"
REQUIRED_ARTIFACTS = (CONFIG_FILE, METRICS_FILE, MATRIX_FILE)


def _check_artifacts(run_dir: Path) -> None:
    missing = [name for name in REQUIRED_ARTIFACTS if not (run_dir / name).is_file()]
    if missing:
        raise ArtifactError(
            f"Run directory {run_dir} is missing {', '.join(missing)}",
            expected=list(REQUIRED_ARTIFACTS),
        )


def read_matrix_csv(path: Path) -> dict[Modality, AccuracyMatrix]:
    rows: dict[Modality, list[list[float]]] = {}
    lines = path.read_text(encoding="utf-8").splitlines()
    for line in lines[1:]:
        if not line.strip():
            continue
        modality, after_task, task, accuracy = line.split(",")
        matrix = rows.setdefault(Modality(modality), [])
        t, i = int(after_task), int(task)
        while len(matrix) <= t:
            matrix.append([])
        if i != len(matrix[t]):
            raise ArtifactError(f"{path.name} rows are out of order", expected=[MATRIX_FILE])
        matrix[t].append(float(accuracy))
    return {m: AccuracyMatrix(r) for m, r in rows.items()}


def summary_rows(metrics: dict[str, Any]) -> list[tuple[str, float | None, float | None]]:
    rows = []
    for modality in REPORTED_MODALITIES:
        entry = metrics.get(modality.value)
        if entry is None:
            continue
        rows.append((modality.value, entry.get("final_average_accuracy"), entry.get("final_forgetting")))
    return rows


def summary_csv(metrics: dict[str, Any]) -> str:
    lines = ["modality,average_accuracy,forgetting"]
    for modality, avg, fgt in summary_rows(metrics):
        lines.append(f"{modality},{'' if avg is None else repr(avg)},{'' if fgt is None else repr(fgt)}")
    return "\n".join(lines) + "\n"


def cmd_report(run_dir: Path, tui: TUI) -> dict[str, Any]:
    """打印每个模态最终的 Average Acc / Forgetting，并写出 summary.csv"""
    run_dir = Path(run_dir)
    _check_artifacts(run_dir)
    metrics = json.loads((run_dir / METRICS_FILE).read_text(encoding="utf-8"))

    recomputed = MetricsReport.from_matrices(read_matrix_csv(run_dir / MATRIX_FILE))
    for modality, _, _ in summary_rows(metrics):
        if recomputed.final(Modality(modality)) != (
            metrics[modality].get("final_average_accuracy"),
            metrics[modality].get("final_forgetting"),
        ):
            logger.warning(f"{METRICS_FILE} and {MATRIX_FILE} disagree for {modality}")

    tui.metrics_table(metrics, title=f"{run_dir.name} ({metrics.get('ablation', 'run')})")
    path = atomic_write_text(run_dir / SUMMARY_FILE, summary_csv(metrics))
    tui.wrote(path)
    return metrics
