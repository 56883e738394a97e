"""Reading and writing pose graphs in the g2o text dialect.

Supported records: VERTEX_SE2 / EDGE_SE2 (2D) and VERTEX_SE3:QUAT /
EDGE_SE3:QUAT (3D). Information matrices are reduced to isotropic scalar
weights: w_tran is the mean of the translation-block diagonal and w_rot the
mean of the rotation-block diagonal.
"""

from __future__ import annotations

import io
import warnings
from typing import Iterable, TextIO

import numpy as np

from .graph import PoseGraph, PoseId, RelativeMeasurement


class G2oParseError(ValueError):
    """Malformed g2o record; message carries the line number."""


def rot2d(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def quat_to_rot(qx: float, qy: float, qz: float, qw: float) -> np.ndarray:
    """Rotation matrix from a (not necessarily normalized) quaternion."""
    q = np.array([qx, qy, qz, qw], dtype=float)
    n = np.linalg.norm(q)
    if n == 0:
        raise ValueError("zero quaternion")
    x, y, z, w = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def rot_to_quat(r: np.ndarray) -> tuple[float, float, float, float]:
    """Quaternion (qx, qy, qz, qw) of a 3x3 rotation, Shepperd's method."""
    m = r
    tr = np.trace(m)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        w, x, y, z = 0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        w, x, y, z = (m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        w, x, y, z = (m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        w, x, y, z = (m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s
    return x, y, z, w


def _upper_tri_to_full(vals: list[float], n: int) -> np.ndarray:
    m = np.zeros((n, n))
    k = 0
    for i in range(n):
        for j in range(i, n):
            m[i, j] = m[j, i] = vals[k]
            k += 1
    return m


def parse_g2o(source: str | TextIO, dimension: int) -> PoseGraph:
    """Parse g2o text into a single-robot PoseGraph.

    Vertex ids need not be contiguous; gaps are remapped in sorted-id order
    (with a warning). Initial vertex estimates are retained for reference.
    """
    if dimension not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    stream = io.StringIO(source) if isinstance(source, str) else source
    vertices: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    raw_edges: list[tuple[int, int, np.ndarray, np.ndarray, float, float]] = []
    v_tag = "VERTEX_SE2" if dimension == 2 else "VERTEX_SE3:QUAT"
    e_tag = "EDGE_SE2" if dimension == 2 else "EDGE_SE3:QUAT"

    for lineno, line in enumerate(stream, start=1):
        tokens = line.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        tag = tokens[0]
        try:
            if tag == v_tag:
                if dimension == 2:
                    vid, x, y, th = int(tokens[1]), *map(float, tokens[2:5])
                    vertices[vid] = (rot2d(th), np.array([x, y]))
                else:
                    vid = int(tokens[1])
                    x, y, z, qx, qy, qz, qw = map(float, tokens[2:9])
                    vertices[vid] = (quat_to_rot(qx, qy, qz, qw), np.array([x, y, z]))
            elif tag == e_tag:
                i, j = int(tokens[1]), int(tokens[2])
                if dimension == 2:
                    dx, dy, dth = map(float, tokens[3:6])
                    info = _upper_tri_to_full(list(map(float, tokens[6:12])), 3)
                    rot, tran = rot2d(dth), np.array([dx, dy])
                    w_tran = float(np.mean(np.diag(info)[:2]))
                    w_rot = float(info[2, 2])
                else:
                    dx, dy, dz, qx, qy, qz, qw = map(float, tokens[3:10])
                    info = _upper_tri_to_full(list(map(float, tokens[10:31])), 6)
                    rot, tran = quat_to_rot(qx, qy, qz, qw), np.array([dx, dy, dz])
                    w_tran = float(np.mean(np.diag(info)[:3]))
                    w_rot = float(np.mean(np.diag(info)[3:]))
                raw_edges.append((i, j, rot, tran, w_rot, w_tran))
            # other record types are ignored
        except (ValueError, IndexError) as exc:
            raise G2oParseError(f"line {lineno}: malformed {tag} record: {exc}") from exc

    ids = sorted(set(vertices) | {i for i, _, _, _, _, _ in raw_edges} | {j for _, j, _, _, _, _ in raw_edges})
    if not ids:
        raise G2oParseError("no vertices or edges found")
    remap = {vid: k for k, vid in enumerate(ids)}
    if ids != list(range(len(ids))):
        warnings.warn("non-contiguous vertex ids remapped to 0..N-1", stacklevel=2)

    n = len(ids)
    init_rot = np.tile(np.eye(dimension), (n, 1, 1))
    init_tran = np.zeros((n, dimension))
    for vid, (rot, tran) in vertices.items():
        init_rot[remap[vid]] = rot
        init_tran[remap[vid]] = tran

    edges = [
        RelativeMeasurement(PoseId(0, remap[i]), PoseId(0, remap[j]), rot, tran, w_rot, w_tran)
        for i, j, rot, tran, w_rot, w_tran in raw_edges
    ]
    return PoseGraph(
        d=dimension,
        num_poses=n,
        edges=edges,
        initial_rotations=init_rot,
        initial_translations=init_tran,
    )


def parse_g2o_file(path, dimension: int) -> PoseGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_g2o(fh, dimension)


def write_g2o(
    out: TextIO,
    d: int,
    rotations: np.ndarray,
    translations: np.ndarray,
    edges: Iterable[RelativeMeasurement],
    pose_index,
) -> None:
    """Serialize vertices and edges to g2o text.

    `pose_index` maps a PoseId to the flat vertex id used in the file;
    weights are expanded into isotropic diagonal information matrices.
    """
    n = rotations.shape[0]
    for k in range(n):
        if d == 2:
            th = float(np.arctan2(rotations[k, 1, 0], rotations[k, 0, 0]))
            out.write(f"VERTEX_SE2 {k} {translations[k,0]:.17g} {translations[k,1]:.17g} {th:.17g}\n")
        else:
            qx, qy, qz, qw = rot_to_quat(rotations[k])
            t = translations[k]
            out.write(
                f"VERTEX_SE3:QUAT {k} {t[0]:.17g} {t[1]:.17g} {t[2]:.17g} "
                f"{qx:.17g} {qy:.17g} {qz:.17g} {qw:.17g}\n"
            )
    for e in edges:
        i, j = pose_index(e.from_id), pose_index(e.to_id)
        t = e.translation
        if d == 2:
            th = float(np.arctan2(e.rotation[1, 0], e.rotation[0, 0]))
            info = [e.w_tran, 0.0, 0.0, e.w_tran, 0.0, e.w_rot]
            vals = " ".join(f"{v:.17g}" for v in info)
            out.write(f"EDGE_SE2 {i} {j} {t[0]:.17g} {t[1]:.17g} {th:.17g} {vals}\n")
        else:
            qx, qy, qz, qw = rot_to_quat(e.rotation)
            diag = [e.w_tran] * 3 + [e.w_rot] * 3
            vals = []
            for a in range(6):
                for b in range(a, 6):
                    vals.append(diag[a] if a == b else 0.0)
            txt = " ".join(f"{v:.17g}" for v in vals)
            out.write(
                f"EDGE_SE3:QUAT {i} {j} {t[0]:.17g} {t[1]:.17g} {t[2]:.17g} "
                f"{qx:.17g} {qy:.17g} {qz:.17g} {qw:.17g} {txt}\n"
            )
