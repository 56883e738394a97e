"""Matrix-manifold primitives for products of rotation, Stiefel and Euclidean blocks.

A Stiefel block is an r x d matrix with orthonormal columns (r >= d); a
rotation block is the special case r == d with positive determinant. All
batched helpers accept arrays whose last two axes are the matrix dimensions,
so a whole trajectory of blocks is processed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

ORTHO_TOL = 1e-10  # orthonormality defect accepted on manifold points
TANGENT_TOL = 1e-10  # symmetric-part defect accepted on tangent vectors
REORTH_TRIGGER = 1e-9  # re-orthonormalize a block once drift exceeds this


class ManifoldError(ValueError):
    """Input violates a manifold or tangent-space invariant."""


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetric part (A + A^T) / 2 of the last two axes."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def orthonormality_defect(y: np.ndarray) -> np.ndarray:
    """Frobenius norm of Y^T Y - I per block; scalar for a single block."""
    d = y.shape[-1]
    g = np.swapaxes(y, -1, -2) @ y - np.eye(d)
    return np.linalg.norm(g, axis=(-2, -1))


def stiefel_project_tangent(y: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Project ambient V onto the tangent space at Y: V - Y sym(Y^T V)."""
    return v - y @ sym(np.swapaxes(y, -1, -2) @ v)


def polar_factor(a: np.ndarray) -> np.ndarray:
    """Nearest matrix with orthonormal columns, via thin SVD."""
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    return u @ vt


def stiefel_retract(y: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Polar retraction: orthonormal factor of Y + xi."""
    return polar_factor(y + xi)


def rotation_retract(r: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Polar retraction on SO(d); raises if the step leaves the component."""
    out = polar_factor(r + xi)
    if np.any(np.linalg.det(out) <= 0):
        raise ManifoldError("retraction step left the SO(d) component")
    return out


def reorthonormalize(y: np.ndarray) -> np.ndarray:
    """Snap blocks whose orthonormality drift exceeds the trigger."""
    defect = orthonormality_defect(y)
    if np.max(defect) <= REORTH_TRIGGER:
        return y
    return polar_factor(y)


def random_stiefel(rng: np.random.Generator, r: int, d: int, n: int | None = None) -> np.ndarray:
    """Random point(s) on St(d, r), uniform w.r.t. the Haar-induced measure."""
    shape = (r, d) if n is None else (n, r, d)
    return polar_factor(rng.standard_normal(shape))


def random_rotation(rng: np.random.Generator, d: int, n: int | None = None) -> np.ndarray:
    """Random rotation matrices in SO(d)."""
    q = random_stiefel(rng, d, d, n)
    det = np.linalg.det(q)
    if n is None:
        if det < 0:
            q[:, -1] *= -1.0
    else:
        q[det < 0, :, -1] *= -1.0
    return q


# --- tagged product-manifold points -----------------------------------------

# Block tags: ("rotation", d) | ("stiefel", d, r) | ("euclidean", r)
BlockTag = tuple


def _check_tag(tag: BlockTag) -> None:
    kind = tag[0]
    if kind == "rotation":
        d = tag[1]
        if d not in (2, 3):
            raise ManifoldError(f"rotation dimension must be 2 or 3, got {d}")
    elif kind == "stiefel":
        _, d, r = tag
        if d not in (2, 3) or not (d <= r <= 10):
            raise ManifoldError(f"stiefel requires d in {{2,3}}, d <= r <= 10, got d={d}, r={r}")
    elif kind == "euclidean":
        pass
    else:
        raise ManifoldError(f"unknown block tag {tag!r}")


@dataclass(frozen=True)
class ManifoldPoint:
    """Point on a product of rotation / Stiefel / Euclidean blocks."""

    tags: tuple[BlockTag, ...]
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.tags) != len(self.blocks):
            raise ManifoldError("tags and blocks length mismatch")
        for tag, b in zip(self.tags, self.blocks):
            _check_tag(tag)
            kind = tag[0]
            if kind in ("rotation", "stiefel"):
                if orthonormality_defect(b) > ORTHO_TOL:
                    raise ManifoldError("block violates orthonormality tolerance")
                if kind == "rotation" and np.linalg.det(b) <= 0:
                    raise ManifoldError("rotation block has non-positive determinant")

    def validate(self) -> None:
        self.__post_init__()


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector with block structure matching its base point."""

    base: ManifoldPoint
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.blocks) != len(self.base.blocks):
            raise ManifoldError("tangent blocks do not match base point")
        for tag, y, xi in zip(self.base.tags, self.base.blocks, self.blocks):
            if xi.shape != y.shape:
                raise ManifoldError("tangent block shape mismatch")
            if tag[0] in ("rotation", "stiefel"):
                if np.linalg.norm(sym(y.T @ xi)) > TANGENT_TOL:
                    raise ManifoldError("block is not tangent at its base")


def zero_tangent(x: ManifoldPoint) -> TangentVector:
    return TangentVector(x, tuple(np.zeros_like(b) for b in x.blocks))


def inner(a: TangentVector, b: TangentVector) -> float:
    """Frobenius inner product summed over blocks."""
    if a.base is not b.base and a.base.tags != b.base.tags:
        raise ManifoldError("tangent vectors live at different points")
    total = 0.0
    for xa, xb in zip(a.blocks, b.blocks):
        if xa.shape != xb.shape:
            raise ManifoldError("tangent block shape mismatch")
        total += float(np.sum(xa * xb))
    return total


def norm(a: TangentVector) -> float:
    return float(np.sqrt(inner(a, a)))


def project_tangent(x: ManifoldPoint, ambient: Sequence[np.ndarray]) -> TangentVector:
    """Orthogonal projection of ambient blocks onto the tangent space at x."""
    x.validate()
    out = []
    for tag, y, v in zip(x.tags, x.blocks, ambient):
        if v.shape != y.shape:
            raise ManifoldError("ambient block shape mismatch")
        if tag[0] in ("rotation", "stiefel"):
            out.append(stiefel_project_tangent(y, v))
        else:
            out.append(np.array(v, dtype=float, copy=True))
    return TangentVector(x, tuple(out))


def retract(x: ManifoldPoint, eta: TangentVector) -> ManifoldPoint:
    """Per-block polar retraction (vector addition on Euclidean blocks)."""
    if eta.base is not x and eta.base.tags != x.tags:
        raise ManifoldError("tangent vector not based at x")
    out = []
    for tag, y, xi in zip(x.tags, x.blocks, eta.blocks):
        if tag[0] == "rotation":
            out.append(rotation_retract(y, xi))
        elif tag[0] == "stiefel":
            out.append(stiefel_retract(y, xi))
        else:
            out.append(y + xi)
    return ManifoldPoint(x.tags, tuple(out))


def retraction_displacement_bound(x: ManifoldPoint, eta: TangentVector) -> float:
    """Measured ratio ||Retr_x(eta) - x|| / ||eta||; 0 for a zero tangent."""
    n = norm(eta)
    if n == 0.0:
        return 0.0
    moved = retract(x, eta)
    disp = np.sqrt(sum(float(np.sum((a - b) ** 2)) for a, b in zip(moved.blocks, x.blocks)))
    return disp / n
