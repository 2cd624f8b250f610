"""Static grid topology: faces, block-CSR pattern, scatter index maps.

Everything here depends only on the padded grid shape and is cached, so
repeated simulations on the same grid skip the setup.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["GridTopology", "grid_topology"]


@dataclass(frozen=True)
class GridTopology:
    shape: tuple[int, int, int]
    face_L: np.ndarray       # (nf,) int32 lower cell per face
    face_R: np.ndarray       # (nf,) int32 upper cell
    face_axis: np.ndarray    # (nf,) int8 axis of the face normal
    indptr: np.ndarray       # (nc+1,) int32 cell-block CSR
    indices: np.ndarray      # (nnzb,) int32 sorted columns incl. diagonal
    diag_pos: np.ndarray     # (nc,) int32 position of the diagonal block
    blk_LL: np.ndarray       # (nf,) int32 positions of the four face blocks
    blk_LR: np.ndarray
    blk_RL: np.ndarray
    blk_RR: np.ndarray

    @property
    def n_cells(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    @property
    def n_faces(self) -> int:
        return self.face_L.size

    @property
    def nnzb(self) -> int:
        return self.indices.size


def _build(shape: tuple[int, int, int]) -> GridTopology:
    nx, ny, nz = shape
    nc = nx * ny * nz
    idx = np.arange(nc, dtype=np.int64).reshape(shape)

    face_L, face_R, face_axis = [], [], []
    for ax in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        L = idx[tuple(lo)].ravel()
        R = idx[tuple(hi)].ravel()
        face_L.append(L)
        face_R.append(R)
        face_axis.append(np.full(L.size, ax, dtype=np.int8))
    face_L = np.concatenate(face_L)
    face_R = np.concatenate(face_R)
    face_axis = np.concatenate(face_axis)

    rows = np.concatenate([np.arange(nc, dtype=np.int64), face_L, face_R])
    cols = np.concatenate([np.arange(nc, dtype=np.int64), face_R, face_L])
    order = np.lexsort((cols, rows))
    rows_s, cols_s = rows[order], cols[order]
    indptr = np.searchsorted(rows_s, np.arange(nc + 1)).astype(np.int32)
    indices = cols_s.astype(np.int32)

    keys = rows_s * nc + cols_s
    diag_pos = np.searchsorted(keys, np.arange(nc, dtype=np.int64) * nc + np.arange(nc)).astype(np.int32)
    blk_LL = diag_pos[face_L]
    blk_RR = diag_pos[face_R]
    blk_LR = np.searchsorted(keys, face_L * nc + face_R).astype(np.int32)
    blk_RL = np.searchsorted(keys, face_R * nc + face_L).astype(np.int32)

    return GridTopology(
        shape=shape,
        face_L=face_L.astype(np.int32),
        face_R=face_R.astype(np.int32),
        face_axis=face_axis,
        indptr=indptr,
        indices=indices,
        diag_pos=diag_pos,
        blk_LL=blk_LL,
        blk_LR=blk_LR,
        blk_RL=blk_RL,
        blk_RR=blk_RR,
    )


@lru_cache(maxsize=16)
def grid_topology(shape: tuple[int, int, int]) -> GridTopology:
    return _build(shape)
