from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from utils.errors import ConfigError


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    class_ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.class_ids)


@dataclass(frozen=True)
class TaskSequence:
    tasks: tuple[TaskSpec, ...]

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for task in self.tasks:
            overlap = seen & set(task.class_ids)
            if overlap:
                raise ConfigError(
                    "Classes repeat across tasks",
                    details={"task_id": task.task_id, "classes": sorted(overlap)},
                )
            seen |= set(task.class_ids)

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self) -> Iterator[TaskSpec]:
        return iter(self.tasks)

    def __getitem__(self, index: int) -> TaskSpec:
        return self.tasks[index]

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(c for task in self.tasks for c in task.class_ids)

    def cumulative_classes(self, task_index: int) -> int:
        return sum(len(t) for t in self.tasks[: task_index + 1])

    def to_dict(self) -> list[dict[str, object]]:
        return [{"task_id": t.task_id, "class_ids": list(t.class_ids)} for t in self.tasks]


def split_tasks(class_ids: Sequence[int], num_tasks: int, seed: int) -> TaskSequence:
    """seeded shuffle 后切成连续的 num_tasks 段；不能整除时，余下的类别分给最前面的任务"""
    ids = [int(c) for c in class_ids]
    if len(set(ids)) != len(ids):
        raise ConfigError("Duplicate class ids in schedule")
    if num_tasks <= 0:
        raise ConfigError("Number of tasks must be positive", config_key="tasks")
    if num_tasks > len(ids):
        raise ConfigError(
            f"Cannot split {len(ids)} classes into {num_tasks} tasks",
            config_key="tasks",
        )
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    base, remainder = divmod(len(ids), num_tasks)

    tasks: list[TaskSpec] = []
    start = 0
    for t in range(num_tasks):
        size = base + (1 if t < remainder else 0)
        tasks.append(TaskSpec(task_id=t, class_ids=tuple(order[start : start + size])))
        start += size
    return TaskSequence(tuple(tasks))
