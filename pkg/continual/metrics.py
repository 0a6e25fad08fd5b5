"""class-incremental 的标准指标。

a[t][i]：训练完任务 t 后在任务 i 测试集上的准确率（i ≤ t）。
AvgAcc(t) = mean_i a[t][i]；Forgetting(t) = mean_{i<t} (max_{i≤k≤t} a[k][i] - a[t][i])。
最大值包含第 t 行，所以 forgetting 不会是负数。
"""

from dataclasses import dataclass, field
from typing import Any, Sequence

from config.config import Modality
from utils.errors import MetricError

REPORTED_MODALITIES = (Modality.AUDIO, Modality.VISUAL, Modality.AUDIO_VISUAL)


@dataclass
class AccuracyMatrix:
    """下三角矩阵，第 t 行有 t+1 个元素"""

    rows: list[list[float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        for t, row in enumerate(self.rows):
            self._validate_row(t, row)

    @staticmethod
    def _validate_row(t: int, row: Sequence[float]) -> None:
        if len(row) != t + 1:
            raise MetricError(
                "Accuracy row has the wrong length",
                details={"task": t, "expected": t + 1, "actual": len(row)},
            )
        if any(not 0.0 <= a <= 1.0 for a in row):
            raise MetricError("Accuracy outside [0, 1]", details={"task": t})

    @property
    def tasks(self) -> int:
        return len(self.rows)

    def append(self, row: Sequence[float]) -> None:
        row = [float(a) for a in row]
        self._validate_row(len(self.rows), row)
        self.rows.append(row)

    def row(self, t: int) -> list[float]:
        if not 0 <= t < len(self.rows):
            raise MetricError("Accuracy row not recorded yet", details={"task": t, "recorded": len(self.rows)})
        return self.rows[t]

    def __getitem__(self, t: int) -> list[float]:
        return self.row(t)

    def to_list(self) -> list[list[float]]:
        return [list(r) for r in self.rows]


def average_accuracy(m: AccuracyMatrix, t: int) -> float:
    row = m.row(t)
    return sum(row) / (t + 1)


def forgetting(m: AccuracyMatrix, t: int) -> float:
    if t < 1:
        raise MetricError("Forgetting needs at least two tasks", details={"task": t})
    final = m.row(t)
    drops = [max(m.row(k)[i] for k in range(i, t + 1)) - final[i] for i in range(t)]
    return sum(drops) / t


@dataclass
class ModalityMetrics:
    average_accuracy: list[float] = field(default_factory=list)
    # 第 0 个任务没有 forgetting
    forgetting: list[float] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "average_accuracy": self.average_accuracy,
            "final_average_accuracy": self.average_accuracy[-1] if self.average_accuracy else None,
        }
        if self.forgetting:
            data["forgetting"] = self.forgetting
            data["final_forgetting"] = self.forgetting[-1]
        return data


@dataclass
class MetricsReport:
    modalities: dict[Modality, ModalityMetrics] = field(default_factory=dict)
    val_accuracy: dict[Modality, float] = field(default_factory=dict)

    @classmethod
    def from_matrices(cls, matrices: dict[Modality, AccuracyMatrix]) -> "MetricsReport":
        report = cls()
        for modality, m in matrices.items():
            metrics = ModalityMetrics()
            for t in range(m.tasks):
                metrics.average_accuracy.append(average_accuracy(m, t))
                if t >= 1:
                    metrics.forgetting.append(forgetting(m, t))
            report.modalities[modality] = metrics
        return report

    def final(self, modality: Modality) -> tuple[float | None, float | None]:
        metrics = self.modalities[modality]
        avg = metrics.average_accuracy[-1] if metrics.average_accuracy else None
        fgt = metrics.forgetting[-1] if metrics.forgetting else None
        return avg, fgt

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {m.value: metrics.to_dict() for m, metrics in self.modalities.items()}
        if self.val_accuracy:
            data["val_accuracy"] = {m.value: acc for m, acc in self.val_accuracy.items()}
        return data


def matrices_to_csv(matrices: dict[Modality, AccuracyMatrix]) -> str:
    lines = ["modality,after_task,task,accuracy"]
    for modality, m in matrices.items():
        for t, row in enumerate(m.rows):
            for i, acc in enumerate(row):
                lines.append(f"{modality.value},{t},{i},{acc!r}")
    return "\n".join(lines) + "\n"
