"""
CLI Package
"""
from .main import main, run
from .commands import cmd_analyze, cmd_decode, cmd_banlist, cmd_simulate, cmd_config

__all__ = ["main", "run", "cmd_analyze", "cmd_decode", "cmd_banlist", "cmd_simulate", "cmd_config"]
