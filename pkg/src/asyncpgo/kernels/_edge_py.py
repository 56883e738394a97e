"""Vectorized numpy implementation of the per-edge cost/gradient kernels.

This is the reference implementation and the fallback used when the compiled
extension is unavailable. Both implementations share one contract:

    Y : (N, r, d) float64, C-contiguous  -- orthonormal blocks per pose
    p : (N, r)    float64                -- lifted translations per pose
    out_idx, in_idx : (E,) int64         -- edge endpoints (tail, head)
    rot : (E, d, d), trans : (E, d)      -- measured relative rotation/translation
    w_rot, w_tran : (E,)                 -- per-edge weights

Gradients are *accumulated* into caller-provided (and caller-zeroed) arrays so
subsets of edges can be folded into one buffer.
"""

from __future__ import annotations

import numpy as np

from ..manifold import polar_factor, stiefel_project_tangent


def project_tangent_batch(Y: np.ndarray, V: np.ndarray) -> np.ndarray:
    return stiefel_project_tangent(Y, V)


def polar_retract_batch(A: np.ndarray) -> np.ndarray:
    return polar_factor(A)


def edge_cost(out_idx, in_idx, rot, trans, w_rot, w_tran, Y, p) -> float:
    if len(out_idx) == 0:
        return 0.0
    Yi = Y[out_idx]
    er = Y[in_idx] - Yi @ rot
    et = p[in_idx] - p[out_idx] - np.einsum("erd,ed->er", Yi, trans)
    c_rot = w_rot @ np.einsum("erd,erd->e", er, er)
    c_tran = w_tran @ np.einsum("er,er->e", et, et)
    return float(c_rot + c_tran)


def edge_grad(out_idx, in_idx, rot, trans, w_rot, w_tran, Y, p, GY, Gp) -> None:
    if len(out_idx) == 0:
        return
    Yi = Y[out_idx]
    er = Y[in_idx] - Yi @ rot
    et = p[in_idx] - p[out_idx] - np.einsum("erd,ed->er", Yi, trans)
    wr = (2.0 * w_rot)[:, None, None]
    wt2 = (2.0 * w_tran)[:, None]
    g_in_Y = wr * er
    g_out_Y = -(g_in_Y @ np.swapaxes(rot, -1, -2)) - (wt2 * et)[:, :, None] * trans[:, None, :]
    g_in_p = wt2 * et
    np.add.at(GY, out_idx, g_out_Y)
    np.add.at(GY, in_idx, g_in_Y)
    np.add.at(Gp, out_idx, -g_in_p)
    np.add.at(Gp, in_idx, g_in_p)


def edge_cost_grad(out_idx, in_idx, rot, trans, w_rot, w_tran, Y, p, GY, Gp) -> float:
    if len(out_idx) == 0:
        return 0.0
    Yi = Y[out_idx]
    er = Y[in_idx] - Yi @ rot
    et = p[in_idx] - p[out_idx] - np.einsum("erd,ed->er", Yi, trans)
    c_rot = w_rot @ np.einsum("erd,erd->e", er, er)
    c_tran = w_tran @ np.einsum("er,er->e", et, et)
    wr = (2.0 * w_rot)[:, None, None]
    wt2 = (2.0 * w_tran)[:, None]
    g_in_Y = wr * er
    g_out_Y = -(g_in_Y @ np.swapaxes(rot, -1, -2)) - (wt2 * et)[:, :, None] * trans[:, None, :]
    g_in_p = wt2 * et
    np.add.at(GY, out_idx, g_out_Y)
    np.add.at(GY, in_idx, g_in_Y)
    np.add.at(Gp, out_idx, -g_in_p)
    np.add.at(Gp, in_idx, g_in_p)
    return float(c_rot + c_tran)
