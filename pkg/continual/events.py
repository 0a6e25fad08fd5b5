import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from losses.total import LossBreakdown


class TrainEventType(str, Enum):
    # run lifecycle
    RUN_START = "run_start"
    RUN_END = "run_end"

    # task lifecycle
    TASK_START = "task_start"
    TASK_END = "task_end"

    STEP = "step"
    EVALUATION = "evaluation"


@dataclass
class TrainEvent:
    type: TrainEventType
    data: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"event": self.type.value, **self.data}, sort_keys=True)

    @classmethod
    def run_start(cls, tasks: list[list[int]], config: dict[str, Any]) -> "TrainEvent":
        return cls(type=TrainEventType.RUN_START, data={"tasks": tasks, "config": config})

    @classmethod
    def task_start(cls, task: int, class_ids: list[int], tokens: int, old_tokens: int) -> "TrainEvent":
        """tokens 已经扩充完成"""
        return cls(
            type=TrainEventType.TASK_START,
            data={"task": task, "class_ids": class_ids, "tokens": tokens, "old_tokens": old_tokens},
        )

    @classmethod
    def step(
        cls, task: int, epoch: int, step: int, losses: LossBreakdown, old_samples: int
    ) -> "TrainEvent":
        return cls(
            type=TrainEventType.STEP,
            data={
                "task": task,
                "epoch": epoch,
                "step": step,
                "old_samples": old_samples,
                "losses": losses.to_dict(),
            },
        )

    @classmethod
    def task_end(cls, task: int, steps: int, buffer: dict[str, int]) -> "TrainEvent":
        return cls(type=TrainEventType.TASK_END, data={"task": task, "steps": steps, "buffer": buffer})

    @classmethod
    def evaluation(cls, task: int, rows: dict[str, list[float]]) -> "TrainEvent":
        """rows: 每个模态在已见任务上的准确率，即 accuracy matrix 的第 task 行"""
        return cls(type=TrainEventType.EVALUATION, data={"task": task, "rows": rows})

    @classmethod
    def run_end(cls, metrics: dict[str, Any]) -> "TrainEvent":
        return cls(type=TrainEventType.RUN_END, data={"metrics": metrics})
