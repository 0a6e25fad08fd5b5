from commands.gradcheck import cmd_gradcheck, run_gradcheck
from commands.report import cmd_report
from commands.run import cmd_run
from commands.sweep import cmd_sweep
from commands.synth import cmd_synth

__all__ = ["cmd_gradcheck", "run_gradcheck", "cmd_report", "cmd_run", "cmd_sweep", "cmd_synth"]
