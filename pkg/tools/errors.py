"""
Hierarquia de exceções do projeto.

Cada classe carrega o código de saída que o `main.py` devolve ao shell:
    0 sucesso, 1 uso/configuração, 2 erro de dados, 3 falha numérica.
"""


class PopupError(Exception):
    """Raiz de todas as exceções do projeto."""

    exit_code = 2


class ConfigError(PopupError):
    """Configuração inválida (chave desconhecida, valor fora do domínio)."""

    exit_code = 1


class DataError(PopupError):
    """Problema com arquivos ou dados de entrada."""

    exit_code = 2


class DatasetError(DataError):
    """Manifesto, checksum ou contagem inconsistente em um dataset."""


class CheckpointError(DataError):
    """Checkpoint ilegível, de versão desconhecida ou incompatível."""


class GeometryError(DataError):
    """Pré-condição geométrica violada (nuvem vazia, malha degenerada...)."""


class NotApplicableError(DataError):
    """O método não se aplica à entrada (ex.: baseline NN com contagem diferente)."""


class NumericError(PopupError):
    """Falha numérica: NaN, divergência, gradiente indisponível."""

    exit_code = 3


class ShapeError(NumericError):
    """Formas incompatíveis em uma operação do grafo."""

    def __init__(self, op: str, message: str):
        self.op = op
        super().__init__(f"[{op}] {message}")


class GraphError(NumericError):
    """Uso inválido do grafo (ex.: backward antes do forward)."""


class TrainingDivergedError(NumericError):
    """A perda virou NaN/inf; o último checkpoint bom fica em `checkpoint_path`."""

    def __init__(self, message: str, checkpoint_path: str | None = None):
        self.checkpoint_path = checkpoint_path
        super().__init__(message)


class SaliencyError(NumericError):
    """Gradiente em relação aos pontos de entrada não disponível."""
