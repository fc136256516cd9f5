"""
Leitura e escrita de nuvens de pontos e malhas.

Formatos:
    PLY  ascii e binary_little_endian, vértices com propriedades escalares
         extras (ex.: "saliency") e faces opcionais;
    XYZ  texto com três colunas separadas por espaço;
    OBJ  apenas triângulos; polígonos são triangulados em leque na leitura.
"""

from __future__ import annotations

import io
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from geometry.pointcloud import Mesh, PointCloud
from tools.errors import DataError
from tools.tools import atomic_write_bytes, atomic_write_text

logger = logging.getLogger(__name__)

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


@dataclass
class PlyData:
    points: np.ndarray
    properties: dict[str, np.ndarray] = field(default_factory=dict)
    faces: np.ndarray | None = None


@dataclass
class _Element:
    name: str
    count: int
    properties: list[tuple[str, str]] = field(default_factory=list)
    # (tipo do contador, tipo do índice) para a lista de faces
    list_types: tuple[str, str] | None = None


# ============================================================
# PLY
# ============================================================


def _parse_header(handle, path: str) -> tuple[str, list[_Element]]:
    first = handle.readline().strip()
    if first != b"ply":
        raise DataError(f"Arquivo PLY inválido (sem assinatura 'ply'): {path}")
    fmt = None
    elements: list[_Element] = []
    while True:
        raw = handle.readline()
        if not raw:
            raise DataError(f"Cabeçalho PLY sem 'end_header': {path}")
        tokens = raw.decode("ascii", errors="replace").split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "end_header":
            break
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append(_Element(tokens[1], int(tokens[2])))
        elif tokens[0] == "property":
            if not elements:
                raise DataError(f"Propriedade antes de 'element' em {path}")
            if tokens[1] == "list":
                elements[-1].list_types = (_PLY_TYPES[tokens[2]], _PLY_TYPES[tokens[3]])
            else:
                elements[-1].properties.append((tokens[2], _PLY_TYPES[tokens[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise DataError(f"Formato PLY não suportado ({fmt}) em {path}")
    return fmt, elements


def _read_binary_faces(handle, element: _Element, path: str) -> np.ndarray:
    count_type, index_type = element.list_types
    dtype = np.dtype([("n", "<" + count_type), ("v", "<" + index_type, (3,))])
    raw = handle.read(dtype.itemsize * element.count)
    if len(raw) != dtype.itemsize * element.count:
        raise DataError(f"PLY truncado nas faces: {path}")
    faces = np.frombuffer(raw, dtype=dtype)
    if np.any(faces["n"] != 3):
        raise DataError(f"PLY binário com faces não triangulares: {path}")
    return faces["v"].astype(np.int64)


def read_ply(path: str) -> PlyData:
    if not os.path.exists(path):
        raise DataError(f"Arquivo não encontrado: {path}")
    try:
        with open(path, "rb") as handle:
            fmt, elements = _parse_header(handle, path)
            vertex_table = None
            faces = None
            if fmt == "ascii":
                lines = handle.read().decode("ascii").splitlines()
                cursor = 0
                for element in elements:
                    block = lines[cursor: cursor + element.count]
                    cursor += element.count
                    if element.name == "vertex":
                        values = np.loadtxt(io.StringIO("\n".join(block)), ndmin=2)
                        vertex_table = {
                            name: values[:, i] for i, (name, _) in enumerate(element.properties)
                        }
                    elif element.name == "face":
                        faces = _fan_triangulate([[int(v) for v in line.split()[1:]] for line in block])
            else:
                for element in elements:
                    if element.name == "vertex":
                        dtype = np.dtype([(name, "<" + t) for name, t in element.properties])
                        raw = handle.read(dtype.itemsize * element.count)
                        if len(raw) != dtype.itemsize * element.count:
                            raise DataError(f"PLY truncado nos vértices: {path}")
                        table = np.frombuffer(raw, dtype=dtype)
                        vertex_table = {name: table[name].astype(np.float64) for name, _ in element.properties}
                    elif element.name == "face" and element.list_types is not None:
                        faces = _read_binary_faces(handle, element, path)
    except (ValueError, KeyError, UnicodeDecodeError, IndexError) as e:
        raise DataError(f"Erro ao ler PLY {path}: {e}") from e

    if vertex_table is None or not all(axis in vertex_table for axis in ("x", "y", "z")):
        raise DataError(f"PLY sem vértices x, y, z: {path}")
    points = np.stack([vertex_table["x"], vertex_table["y"], vertex_table["z"]], axis=1)
    extras = {k: v for k, v in vertex_table.items() if k not in ("x", "y", "z")}
    return PlyData(points=points, properties=extras, faces=faces)


def write_ply(
    path: str,
    points,
    properties: dict[str, np.ndarray] | None = None,
    faces: np.ndarray | None = None,
    binary: bool = True,
) -> None:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    properties = properties or {}
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0"]
    header.append(f"element vertex {len(points)}")
    header += ["property double x", "property double y", "property double z"]
    for name in properties:
        header.append(f"property double {name}")
    if faces is not None:
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        header.append(f"element face {len(faces)}")
        header.append("property list uchar int vertex_indices")
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")

    columns = [points[:, 0], points[:, 1], points[:, 2]] + [
        np.asarray(v, dtype=np.float64).reshape(-1) for v in properties.values()
    ]
    if binary:
        vdtype = np.dtype([(f"c{i}", "<f8") for i in range(len(columns))])
        table = np.empty(len(points), dtype=vdtype)
        for i, column in enumerate(columns):
            table[f"c{i}"] = column
        body = table.tobytes()
        if faces is not None:
            fdtype = np.dtype([("n", "u1"), ("v", "<i4", (3,))])
            ftable = np.empty(len(faces), dtype=fdtype)
            ftable["n"] = 3
            ftable["v"] = faces
            body += ftable.tobytes()
        atomic_write_bytes(path, head + body)
    else:
        stacked = np.stack(columns, axis=1)
        lines = [" ".join(f"{v:.17g}" for v in row) for row in stacked]
        if faces is not None:
            lines += [f"3 {a} {b} {c}" for a, b, c in faces]
        atomic_write_bytes(path, head + ("\n".join(lines) + "\n").encode("ascii"))


# ============================================================
# XYZ
# ============================================================


def read_xyz(path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise DataError(f"Arquivo não encontrado: {path}")
    try:
        return np.loadtxt(path, usecols=(0, 1, 2), ndmin=2, dtype=np.float64)
    except (ValueError, IndexError) as e:
        raise DataError(f"Erro ao ler XYZ {path}: {e}") from e


def write_xyz(path: str, points) -> None:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    atomic_write_text(path, "".join(f"{x:.17g} {y:.17g} {z:.17g}\n" for x, y, z in points))


# ============================================================
# OBJ
# ============================================================


def _fan_triangulate(polygons: list[list[int]]) -> np.ndarray:
    triangles = []
    for poly in polygons:
        if len(poly) < 3:
            raise ValueError(f"face com {len(poly)} vértices")
        for i in range(1, len(poly) - 1):
            triangles.append((poly[0], poly[i], poly[i + 1]))
    return np.asarray(triangles, dtype=np.int64).reshape(-1, 3)


def read_obj(path: str) -> Mesh:
    if not os.path.exists(path):
        raise DataError(f"Arquivo não encontrado: {path}")
    vertices: list[list[float]] = []
    polygons: list[list[int]] = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                tokens = line.split()
                if not tokens:
                    continue
                if tokens[0] == "v":
                    vertices.append([float(v) for v in tokens[1:4]])
                elif tokens[0] == "f":
                    poly = []
                    for token in tokens[1:]:
                        index = int(token.split("/")[0])
                        poly.append(index - 1 if index > 0 else len(vertices) + index)
                    polygons.append(poly)
        faces = _fan_triangulate(polygons)
    except ValueError as e:
        raise DataError(f"Erro ao ler OBJ {path}: {e}") from e
    return Mesh(np.asarray(vertices, dtype=np.float64).reshape(-1, 3), faces)


def write_obj(path: str, mesh: Mesh) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    atomic_write_text(path, "\n".join(lines) + "\n")


# ============================================================
# Despacho por extensão
# ============================================================


def load_point_cloud(path: str) -> PointCloud:
    """Carrega .ply, .xyz/.txt ou .npy como PointCloud."""
    lowered = path.lower()
    if lowered.endswith(".ply"):
        points = read_ply(path).points
    elif lowered.endswith((".xyz", ".txt")):
        points = read_xyz(path)
    elif lowered.endswith(".npy"):
        if not os.path.exists(path):
            raise DataError(f"Arquivo não encontrado: {path}")
        points = np.load(path, allow_pickle=False).astype(np.float64)
    else:
        raise DataError(f"Formato de nuvem não suportado: {path}")
    logger.debug("Nuvem %s carregada com %d pontos", path, len(points))
    return PointCloud(points)


def save_point_cloud(path: str, points, properties: dict[str, np.ndarray] | None = None) -> None:
    lowered = path.lower()
    if lowered.endswith(".ply"):
        write_ply(path, points, properties)
    elif lowered.endswith((".xyz", ".txt")):
        write_xyz(path, points)
    else:
        raise DataError(f"Formato de saída não suportado: {path}")
