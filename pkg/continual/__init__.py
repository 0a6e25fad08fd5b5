from continual.buffer import RehearsalBuffer, buffer_update
from continual.events import TrainEvent, TrainEventType
from continual.metrics import (
    AccuracyMatrix,
    MetricsReport,
    ModalityMetrics,
    average_accuracy,
    forgetting,
    matrices_to_csv,
)
from continual.optim import Adam, AdamState, adam_step
from continual.trainer import ContinualTrainer, run_sequence
from data.splits import TaskSequence, TaskSpec, split_tasks

__all__ = [
    "RehearsalBuffer",
    "buffer_update",
    "TrainEvent",
    "TrainEventType",
    "AccuracyMatrix",
    "MetricsReport",
    "ModalityMetrics",
    "average_accuracy",
    "forgetting",
    "matrices_to_csv",
    "Adam",
    "AdamState",
    "adam_step",
    "ContinualTrainer",
    "run_sequence",
    "TaskSequence",
    "TaskSpec",
    "split_tasks",
]
