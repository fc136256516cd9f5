"""
Configuração de logging com `rich`.

Os módulos usam `logging.getLogger(__name__)`; apenas o ponto de entrada
(main.py ou um `python3 -m process.<nome>`) chama `configure_logging`.
"""

import logging

from rich.console import Console
from rich.logging import RichHandler

console = Console()

_HANDLER_NAME = "popup-rich"


def configure_logging(level: str | int = "INFO") -> None:
    """Instala um único RichHandler no logger raiz (idempotente)."""
    root = logging.getLogger()
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO
    root.setLevel(level)
    for handler in root.handlers:
        if handler.get_name() == _HANDLER_NAME:
            handler.setLevel(level)
            return
    handler = RichHandler(console=console, show_path=False, rich_tracebacks=False)
    handler.set_name(_HANDLER_NAME)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(handler)
