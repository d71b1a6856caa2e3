import logging
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

#### shared console section ##################################################

console = Console()

_configured = False


def configure_logging(verbose: bool = False) -> None:
    """Route the package loggers through rich"""
    global _configured
    level = logging.DEBUG if verbose else logging.WARNING
    root = logging.getLogger("stable_perturb")
    if not _configured:
        handler = RichHandler(console=console, show_path=False, rich_tracebacks=True)
        handler.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(handler)
        root.propagate = False
        _configured = True
    root.setLevel(level)


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """Child logger under the package namespace"""
    if not name:
        return logging.getLogger("stable_perturb")
    return logging.getLogger(f"stable_perturb.{name.split('.')[-1]}")
