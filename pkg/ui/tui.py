from pathlib import Path
from typing import Any, Iterable

from rich import box
from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.rule import Rule
from rich.table import Table
from rich.text import Text
from rich.theme import Theme

from utils.paths import display_path_rel_to_cwd

CIGN_THEME = Theme(
    {
        # General
        "info": "cyan",
        "warning": "yellow",
        "error": "bright_red bold",
        "success": "green",
        "dim": "dim",
        "muted": "grey50",
        "border": "grey35",
        "highlight": "bold cyan",
        # Modalities
        "audio": "bright_magenta",
        "visual": "bright_blue",
        "audio_visual": "bright_white bold",
        # Numbers
        "metric": "white",
        "code": "white",
    }
)

MODALITY_LABELS = {"audio": "Audio", "visual": "Visual", "audio_visual": "Audio-Visual"}

_console: Console | None = None


def get_console() -> Console:
    global _console
    if _console is None:
        _console = Console(theme=CIGN_THEME, highlight=False)
    return _console


def _percent(value: float | None) -> str:
    """和论文表格一样用百分数，两位小数"""
    return "-" if value is None else f"{100.0 * value:.2f}"


class TUI:
    def __init__(self, console: Console | None = None, cwd: Path | None = None):
        self.console = console or get_console()
        self.cwd = cwd or Path.cwd()

    def print_welcome(self, title: str, lines: list[str]) -> None:
        body = "\n".join(lines)
        self.console.print(
            Panel(
                Text(body, style="code"),
                title=Text(title, style="highlight"),
                title_align="left",
                border_style="border",
                box=box.ROUNDED,
                padding=(1, 2),
            )
        )

    def error(self, message: str) -> None:
        self.console.print(f"[error]Error: {escape(message)}[/error]")

    def wrote(self, path: Path) -> None:
        self.console.print(f"[muted]wrote {display_path_rel_to_cwd(path, self.cwd)}[/muted]")

    def dataset_summary(
        self,
        name: str,
        path: Path,
        counts: dict[str, dict[int, int]],
        oracle_accuracy: float,
        crc32: int,
    ) -> None:
        table = Table(box=box.SIMPLE_HEAD, border_style="border", title=Text(name, style="highlight"))
        table.add_column("split", style="muted")
        table.add_column("classes", justify="right")
        table.add_column("samples", justify="right")
        for split, per_class in counts.items():
            table.add_row(split, str(len(per_class)), str(sum(per_class.values())))
        self.console.print(table)
        self.console.print(
            f"nearest-centroid accuracy [metric]{oracle_accuracy:.4f}[/metric]  "
            f"[muted]crc32={crc32}  {display_path_rel_to_cwd(path, self.cwd)}[/muted]"
        )

    def task_start(self, task: int, class_ids: list[int], tokens: int, old_tokens: int) -> None:
        self.console.print()
        self.console.print(
            Rule(Text.assemble((f"Task {task}", "highlight"), (f"  classes {class_ids}", "muted")))
        )
        self.console.print(f"[muted]tokens {tokens} ({old_tokens} old)[/muted]")

    def step(self, data: dict[str, Any]) -> None:
        losses = data["losses"]
        self.console.print(
            f"[muted]step {data['step']:>6}  epoch {data['epoch']:>3}  "
            f"total {losses['total']:.4f}  kl {losses['kl_old_tokens']:.4f}  "
            f"ce {losses['ce_new_tokens']:.4f}  ctl {losses['ctl_audio'] + losses['ctl_visual']:.4f}[/muted]"
        )

    def evaluation(self, task: int, rows: dict[str, list[float]]) -> None:
        table = Table(box=box.SIMPLE_HEAD, border_style="border")
        table.add_column(f"after task {task}", style="muted")
        for i in range(task + 1):
            table.add_column(f"task {i}", justify="right")
        for modality, row in rows.items():
            table.add_row(
                Text(MODALITY_LABELS.get(modality, modality), style=modality),
                *[_percent(a) for a in row],
            )
        self.console.print(table)

    def task_end(self, task: int, steps: int, buffer: dict[str, int]) -> None:
        self.console.print(
            f"[success]✓[/success] [muted]task {task}: {steps} steps, buffer {sum(buffer.values())} samples[/muted]"
        )

    def metrics_table(self, metrics: dict[str, Any], title: str = "Results") -> None:
        table = Table(box=box.ROUNDED, border_style="border", title=Text(title, style="highlight"))
        table.add_column("Modality")
        table.add_column("Average Acc", justify="right")
        table.add_column("Forgetting", justify="right")
        for modality, label in MODALITY_LABELS.items():
            entry = metrics.get(modality)
            if entry is None:
                continue
            table.add_row(
                Text(label, style=modality),
                _percent(entry.get("final_average_accuracy")),
                _percent(entry.get("final_forgetting")),
            )
        self.console.print(table)
        val = metrics.get("val_accuracy")
        if val:
            parts = ", ".join(f"{MODALITY_LABELS.get(m, m)} {_percent(a)}" for m, a in val.items())
            self.console.print(f"[muted]validation: {parts}[/muted]")

    def gradcheck_table(self, results: Iterable[dict[str, Any]], tolerance: float) -> None:
        table = Table(box=box.SIMPLE_HEAD, border_style="border", title=Text("Gradient check", style="highlight"))
        table.add_column("")
        table.add_column("name")
        table.add_column("kind", style="muted")
        table.add_column("max rel. error", justify="right")
        for r in results:
            ok = r["passed"]
            table.add_row(
                Text("✓" if ok else "✗", style="success" if ok else "error"),
                r["name"],
                r["kind"],
                Text(f"{r['max_rel_error']:.3e}", style="metric" if ok else "error"),
            )
        self.console.print(table)
        self.console.print(f"[muted]tolerance {tolerance:.0e}[/muted]")

    def sweep_table(self, param: str, rows: list[dict[str, Any]]) -> None:
        table = Table(box=box.ROUNDED, border_style="border", title=Text(f"Sweep over {param}", style="highlight"))
        table.add_column(param)
        for label in MODALITY_LABELS.values():
            table.add_column(f"{label} Acc", justify="right")
            table.add_column(f"{label} Fgt", justify="right")
        for row in rows:
            cells = [str(row["value"])]
            for modality in MODALITY_LABELS:
                cells.append(_percent(row.get(f"{modality}_average_accuracy")))
                cells.append(_percent(row.get(f"{modality}_forgetting")))
            table.add_row(*cells)
        self.console.print(table)
