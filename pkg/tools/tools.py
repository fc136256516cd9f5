"""
Este módulo contém ferramentas compartilhadas para gravar e ler tabelas,
escrever arquivos de forma atômica e resolver nomes de classes de objetos.

Classes:
    TableFile: Classe para carregar e salvar tabelas CSV ou Excel.
    ClassNameResolver: Classe auxiliar para converter nome/índice de classe.

Funções:
    atomic_write_bytes / atomic_write_text / atomic_write_json: gravação
    em arquivo temporário seguida de `os.replace`.
    sha256_file: checksum de um arquivo.

Exemplos de uso:
    # Salvar uma tabela respeitando a extensão
    TableFile("runs/loss_curve.csv").salvar_dados(df)

    # Resolver a classe informada na linha de comando
    class_id = ClassNameResolver.resolve("ball", ["box", "stick", "ball", "board"])
"""

import hashlib
import json
import os
import tempfile

import pandas as pd  # type: ignore

from tools.errors import ConfigError, DataError


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Grava `payload` em `path` via arquivo temporário + rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: str, payload, indent: int | None = 4) -> None:
    atomic_write_text(
        path, json.dumps(payload, ensure_ascii=False, indent=indent, allow_nan=False)
    )


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class TableFile:
    """
    Classe para carregar e salvar tabelas (DataFrame) em CSV ou Excel.
    O formato é escolhido pela extensão do arquivo.
    """

    def __init__(self, file_path: str, required_columns: list[str] | None = None):
        self.file_path = file_path
        self.required_columns = required_columns or []

    def carregar_dados(self) -> pd.DataFrame:
        """
        Carrega os dados do arquivo. Detecta o tipo do arquivo pela extensão.
        """
        if not os.path.exists(self.file_path):
            raise DataError(f"Arquivo não encontrado: {self.file_path}")
        lowered = self.file_path.lower()
        try:
            if lowered.endswith(".csv"):
                df = pd.read_csv(self.file_path)
            elif lowered.endswith(".xlsx"):
                df = pd.read_excel(self.file_path, engine="openpyxl")
            else:
                raise DataError(f"Formato de arquivo não suportado: {self.file_path}")
        except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as e:
            raise DataError(f"Erro ao carregar {self.file_path}: {e}") from e

        missing = [c for c in self.required_columns if c not in df.columns]
        if missing:
            raise DataError(
                f"Colunas {missing} não encontradas no arquivo {self.file_path}."
            )
        return df

    def salvar_dados(self, df: pd.DataFrame, index: bool = False) -> None:
        """
        Salva o DataFrame no arquivo, respeitando a extensão (.csv ou .xlsx).
        """
        lowered = self.file_path.lower()
        directory = os.path.dirname(os.path.abspath(self.file_path))
        os.makedirs(directory, exist_ok=True)
        if lowered.endswith(".csv"):
            atomic_write_text(self.file_path, df.to_csv(index=index, float_format="%.17g"))
        elif lowered.endswith(".xlsx"):
            fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".xlsx")
            os.close(fd)
            try:
                df.to_excel(tmp_path, index=index, engine="openpyxl")
                os.replace(tmp_path, self.file_path)
            finally:
                if os.path.exists(tmp_path):
                    os.remove(tmp_path)
        else:
            raise DataError(f"Formato de saída não suportado: {self.file_path}")


class ClassNameResolver:
    """
    Classe auxiliar para limpeza e validação de classes de objeto.
    """

    @staticmethod
    def clean(value: str) -> str:
        """Remove espaços e normaliza para minúsculas."""
        return str(value).strip().lower()

    @staticmethod
    def resolve(value: str | int, class_names: list[str] | tuple[str, ...]) -> int:
        """
        Converte um nome de classe ou um índice (texto ou inteiro) no índice
        da classe. Levanta ConfigError se não existir.
        """
        names = [ClassNameResolver.clean(n) for n in class_names]
        if isinstance(value, int):
            index = value
        else:
            cleaned = ClassNameResolver.clean(value)
            if cleaned in names:
                return names.index(cleaned)
            if not cleaned.lstrip("-").isdigit():
                raise ConfigError(
                    f"Classe desconhecida: {value!r}. Classes disponíveis: {list(class_names)}"
                )
            index = int(cleaned)
        if not 0 <= index < len(names):
            raise ConfigError(
                f"Índice de classe fora do intervalo: {index} (0..{len(names) - 1})"
            )
        return index
