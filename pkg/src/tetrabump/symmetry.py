"""Orientation-preserving tetrahedral symmetry machinery.

Twelve orthogonal signed-permutation matrices acting on R^3 (padded by the
identity for N > 3), the four tetrahedron vertices they permute, the
four-cone decomposition of space, and symmetrization of grid fields.

All group data is integer-exact; every structural claim (orthogonality,
determinant +1, closure, the stored multiplication table, vertex
permutations, subgroup identities) is verified with integer arithmetic when
the group object is built.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class IntegrityError(AssertionError):
    """Exact group/table structure failed a construction-time check."""


#: Tetrahedron vertices, |t_i| = sqrt(3), pairwise distance 2*sqrt(2).
VERTICES = np.array(
    [
        [1, 1, 1],
        [1, -1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
    ],
    dtype=np.int64,
)

#: The 12 rotation blocks.  T_1..T_4 are the identity and the three
#: axis-pair sign flips; T_5..T_12 are the eight threefold rotations.
MATRICES = np.array(
    [
        [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        [[1, 0, 0], [0, -1, 0], [0, 0, -1]],
        [[-1, 0, 0], [0, 1, 0], [0, 0, -1]],
        [[-1, 0, 0], [0, -1, 0], [0, 0, 1]],
        [[0, 1, 0], [0, 0, 1], [1, 0, 0]],
        [[0, 1, 0], [0, 0, -1], [-1, 0, 0]],
        [[0, -1, 0], [0, 0, 1], [-1, 0, 0]],
        [[0, -1, 0], [0, 0, -1], [1, 0, 0]],
        [[0, 0, 1], [1, 0, 0], [0, 1, 0]],
        [[0, 0, 1], [-1, 0, 0], [0, -1, 0]],
        [[0, 0, -1], [1, 0, 0], [0, -1, 0]],
        [[0, 0, -1], [-1, 0, 0], [0, 1, 0]],
    ],
    dtype=np.int64,
)

#: Stored 12x12 multiplication table (1-based): TABLE[i-1][j-1] = k with
#: T_i T_j = T_k.  Checked entry-for-entry against the matrix products.
MULT_TABLE = np.array(
    [
        [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12],
        [2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11],
        [3, 4, 1, 2, 7, 8, 5, 6, 11, 12, 9, 10],
        [4, 3, 2, 1, 8, 7, 6, 5, 12, 11, 10, 9],
        [5, 8, 6, 7, 9, 12, 10, 11, 1, 4, 2, 3],
        [6, 7, 5, 8, 10, 11, 9, 12, 2, 3, 1, 4],
        [7, 6, 8, 5, 11, 10, 12, 9, 3, 2, 4, 1],
        [8, 5, 7, 6, 12, 9, 11, 10, 4, 1, 3, 2],
        [9, 11, 12, 10, 1, 3, 4, 2, 5, 7, 8, 6],
        [10, 12, 11, 9, 2, 4, 3, 1, 6, 8, 7, 5],
        [11, 9, 10, 12, 3, 1, 2, 4, 7, 5, 6, 8],
        [12, 10, 9, 11, 4, 2, 1, 3, 8, 6, 5, 7],
    ],
    dtype=np.int64,
)

#: Half-space normals: y is in cone k iff n . y >= 0 for all rows n of
#: CONE_NORMALS[k-1].  Row sets follow the four-cone decomposition.
CONE_NORMALS = np.array(
    [
        [[0, 1, 1], [1, 0, 1], [1, 1, 0]],
        [[0, -1, -1], [1, -1, 0], [1, 0, -1]],
        [[-1, 0, -1], [-1, 1, 0], [0, 1, -1]],
        [[-1, -1, 0], [-1, 0, 1], [0, -1, 1]],
    ],
    dtype=np.int64,
)


def _verify_group() -> np.ndarray:
    """Exact construction-time checks; returns the vertex permutation table."""
    ident = np.eye(3, dtype=np.int64)
    for i, A in enumerate(MATRICES, start=1):
        if not np.array_equal(A.T @ A, ident):
            raise IntegrityError(f"T_{i} is not orthogonal")
        if round(np.linalg.det(A.astype(float))) != 1:
            raise IntegrityError(f"det T_{i} != +1")
    # matrix products reproduce the stored table
    for i in range(12):
        for j in range(12):
            prod = MATRICES[i] @ MATRICES[j]
            hits = [k for k in range(12) if np.array_equal(prod, MATRICES[k])]
            if len(hits) != 1 or hits[0] + 1 != MULT_TABLE[i, j]:
                raise IntegrityError(f"table entry ({i + 1},{j + 1}) disagrees with matrix product")
    # rows and columns are permutations; T_1 is the identity element
    want = np.arange(1, 13)
    for i in range(12):
        if not (np.array_equal(np.sort(MULT_TABLE[i]), want) and np.array_equal(np.sort(MULT_TABLE[:, i]), want)):
            raise IntegrityError("table row/column is not a permutation")
    if not (np.array_equal(MULT_TABLE[0], want) and np.array_equal(MULT_TABLE[:, 0], want)):
        raise IntegrityError("T_1 is not the identity")
    # vertex permutations t_{k_i} = T_k^{-1} t_i  (inverse = transpose, exact)
    vperm = np.zeros((12, 4), dtype=np.int64)
    for k in range(12):
        for i in range(4):
            img = MATRICES[k].T @ VERTICES[i]
            hits = [j for j in range(4) if np.array_equal(img, VERTICES[j])]
            if len(hits) != 1:
                raise IntegrityError(f"T_{k + 1}^-1 t_{i + 1} is not a vertex")
            vperm[k, i] = hits[0] + 1
    return vperm


@dataclass(frozen=True)
class TetraGroup:
    """Immutable bundle of verified group data."""

    matrices: np.ndarray = field(default_factory=lambda: MATRICES.copy())
    table: np.ndarray = field(default_factory=lambda: MULT_TABLE.copy())
    vertex_perm: np.ndarray = field(default_factory=lambda: _verify_group())

    def multiply(self, i: int, j: int) -> int:
        """Index k with T_i T_j = T_k (1-based)."""
        if not (1 <= i <= 12 and 1 <= j <= 12):
            raise IndexError("group indices are 1..12")
        return int(self.table[i - 1, j - 1])

    def inverse(self, i: int) -> int:
        row = self.table[i - 1]
        return int(np.where(row == 1)[0][0] + 1)

    def vertex_action(self, k: int, i: int) -> int:
        """Vertex index k_i with T_k^{-1} t_i = t_{k_i} (1-based)."""
        if not (1 <= k <= 12 and 1 <= i <= 4):
            raise IndexError("k in 1..12, i in 1..4")
        return int(self.vertex_perm[k - 1, i - 1])


GROUP = TetraGroup()


def multiply(i: int, j: int) -> int:
    return GROUP.multiply(i, j)


def vertex_action(k: int, i: int) -> int:
    return GROUP.vertex_action(k, i)


# --- cone decomposition -----------------------------------------------------

def cone_of(y) -> np.ndarray:
    """Smallest cone index (1..4) whose three half-space tests y satisfies.

    Accepts a single point of shape (3,) (or (N,), trailing coordinates
    ignored) or an array of points with last axis >= 3.
    """
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 1
    pts = np.atleast_2d(y)[..., :3]
    out = np.zeros(pts.shape[:-1], dtype=np.int64)
    for k in range(4, 0, -1):
        ok = np.all(pts @ CONE_NORMALS[k - 1].T >= 0.0, axis=-1)
        out = np.where(ok, k, out)
    # the four cones cover R^3, so out is never 0
    return int(out[0]) if scalar else out


def cone_of_max_weight(y) -> np.ndarray:
    """Cone index by the largest vertex weight t_i . y (smallest on ties).

    Independent characterization of the same decomposition, used to
    cross-validate the hyperplane tests.
    """
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 1
    pts = np.atleast_2d(y)[..., :3]
    scores = pts @ VERTICES.T.astype(float)
    out = np.argmax(scores, axis=-1) + 1  # argmax returns the first (smallest) index
    return int(out[0]) if scalar else out


def cone_tie_mask(y, tol: float = 1e-12) -> np.ndarray:
    """True where the max vertex weight is attained more than once."""
    pts = np.atleast_2d(np.asarray(y, dtype=float))[..., :3]
    scores = pts @ VERTICES.T.astype(float)
    top = np.max(scores, axis=-1, keepdims=True)
    return np.sum(scores >= top - tol, axis=-1) > 1


# --- exact action on centered cubic grids -----------------------------------

def _signed_permutation(A: np.ndarray):
    """Decompose an integer signed-permutation matrix A: (T y)_d = sign[d] * y[perm[d]]."""
    perm = np.zeros(3, dtype=int)
    sign = np.zeros(3, dtype=int)
    for d in range(3):
        nz = np.nonzero(A[d])[0]
        if nz.size != 1 or abs(A[d, nz[0]]) != 1:
            raise IntegrityError("matrix is not a signed permutation")
        perm[d] = nz[0]
        sign[d] = A[d, nz[0]]
    return perm, sign


_PERM_SIGN = [_signed_permutation(A) for A in MATRICES]


def apply_group_element(values: np.ndarray, k: int) -> np.ndarray:
    """Values of y -> u(T_k y) on the same centered cubic grid.

    The matrices are signed coordinate permutations and the grid is a
    symmetric cube, so the resampling is an exact index permutation (axis
    transpose plus axis reversals); no interpolation error is introduced.
    """
    if values.ndim != 3 or len(set(values.shape)) != 1:
        raise IntegrityError("group action needs a cubic value array")
    perm, sign = _PERM_SIGN[k - 1]
    # u-axis e is read at the output axis perm^{-1}... arranged via transpose:
    # out[i0,i1,i2] = u[j0,j1,j2] with j[e] = flip^(sign)[i[perm[e]]]
    v = values
    for e in range(3):
        if sign[e] < 0:
            v = np.flip(v, axis=e)
    axes = np.argsort(perm)
    return np.ascontiguousarray(np.transpose(v, axes=axes))


def trilinear_resample(values: np.ndarray, coords: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Trilinear interpolation fallback for grids that are not group-aligned.

    ``coords`` has shape (..., 3) in physical units; points outside the box
    clamp to the boundary value.
    """
    n = len(axis)
    delta = axis[1] - axis[0]
    f = (coords - axis[0]) / delta
    f = np.clip(f, 0.0, n - 1 - 1e-12)
    i0 = f.astype(int)
    w = f - i0
    out = np.zeros(coords.shape[:-1])
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                wt = (
                    (w[..., 0] if dx else 1 - w[..., 0])
                    * (w[..., 1] if dy else 1 - w[..., 1])
                    * (w[..., 2] if dz else 1 - w[..., 2])
                )
                out += wt * values[i0[..., 0] + dx, i0[..., 1] + dy, i0[..., 2] + dz]
    return out


def symmetrize_values(values: np.ndarray) -> np.ndarray:
    """Average of u(T_k y) over the 12 group elements (exact permutations)."""
    acc = values.astype(float).copy()
    for k in range(2, 13):
        acc += apply_group_element(values, k)
    return acc / 12.0


def symmetry_residual_values(values: np.ndarray) -> float:
    """max_k sup |u(T_k y) - u(y)| on the grid."""
    worst = 0.0
    for k in range(2, 13):
        worst = max(worst, float(np.max(np.abs(apply_group_element(values, k) - values))))
    return worst


#: index sets for the coset identity {T_1,T_5,T_9} = T_k^{-1}{T_k, T_k+4, T_k+8}
STABILIZER = (1, 5, 9)
FLIP_SUBGROUP = (1, 2, 3, 4)
