"""Staggered-grid incompressible flow operators on the square ``(0, S)^2``.

Velocity unknowns live on interior cell faces (MAC layout: x-velocity on
vertical faces, y-velocity on horizontal faces), pressure on cell centres,
with strong no-slip walls: normal boundary faces are identically zero and
tangential wall values enter through ghost reflection.  The discrete
divergence and gradient are exact negative adjoints under the uniform
``h^2`` inner products, so pressure does no work on discretely
divergence-free fields; convection is assembled in antisymmetrized form so
the trilinear form is skew-symmetric to rounding; the viscous operator is
symmetric positive definite and *defines* the discrete Dirichlet energy
``|grad u|^2 = <K u, u>``.  Those three structural facts combine into an
exact per-step kinetic-energy identity for the implicit momentum update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "FlowGrid",
    "build_flow_grid",
    "project_divergence_free",
    "smooth_initial_velocity",
    "convection_matrix",
    "convection_trilinear",
    "poincare_constant",
    "dual_norm_sq",
]


@dataclass
class FlowGrid:
    """Operators and index bookkeeping for one staggered grid.

    Attributes:
        N: cells per direction.
        h: mesh width ``S / N``.
        side: domain side length ``S``.
        n_u, n_v, n_c: unknown counts (x-faces, y-faces, cells).
        D: divergence, faces -> cells, entries ``+-1/h``.
        G: gradient, cells -> faces, ``G = -D^T`` (exact adjoint).
        K: vector Dirichlet "stiffness" (minus Laplacian) on faces; SPD.
        T: tuple of four cell-tensor gradient maps (T_xx, T_xy, T_yx, T_yy)
           with ``T_xx u + T_yy v`` equal to the divergence row-for-row.
        xu, yu, xv, yv: face-centre coordinates for sampling analytic data.
    """

    N: int
    h: float
    side: float
    n_u: int
    n_v: int
    n_c: int
    D: sp.csr_matrix
    G: sp.csr_matrix
    K: sp.csr_matrix
    T: Tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]
    xu: np.ndarray
    yu: np.ndarray
    xv: np.ndarray
    yv: np.ndarray
    _proj_lu: object = field(default=None, repr=False)
    _visc_lu: object = field(default=None, repr=False)

    # ---- inner products ---------------------------------------------------

    def ip(self, a: np.ndarray, c: np.ndarray) -> float:
        """L2 inner product of face fields: ``h^2 * a . c``."""
        return float(self.h * self.h * (a @ c))

    def norm_sq(self, a: np.ndarray) -> float:
        return self.ip(a, a)

    def grad_norm_sq(self, a: np.ndarray) -> float:
        """Discrete ``int |grad a|^2`` induced by the viscous operator."""
        return float(self.h * self.h * (a @ (self.K @ a)))

    def divergence(self, a: np.ndarray) -> np.ndarray:
        return self.D @ a

    def cell_velocity_gradient(self, a: np.ndarray) -> np.ndarray:
        """Velocity-gradient tensor per cell, shape ``(n_c, 2, 2)``;
        the trace equals the discrete divergence row-for-row."""
        Txx, Txy, Tyx, Tyy = self.T
        out = np.empty((self.n_c, 2, 2))
        out[:, 0, 0] = Txx @ a
        out[:, 0, 1] = Txy @ a
        out[:, 1, 0] = Tyx @ a
        out[:, 1, 1] = Tyy @ a
        return out

    def sample_faces(self, fx: Callable, fy: Callable) -> np.ndarray:
        """Sample an analytic vector field at the face centres."""
        return np.concatenate([fx(self.xu, self.yu), fy(self.xv, self.yv)])


def _u_index(N: int):
    # x-velocity on interior vertical faces: i = 0..N-2 (x=(i+1)h), j = 0..N-1
    return lambda i, j: i * N + j


def _v_index(N: int, n_u: int):
    # y-velocity on interior horizontal faces: i = 0..N-1, j = 0..N-2
    return lambda i, j: n_u + i * (N - 1) + j


def build_flow_grid(N: int, side: float = 1.0) -> FlowGrid:
    """Assemble divergence/gradient/viscous/tensor-gradient operators."""
    if N < 4:
        raise ValueError(f"flow grid needs at least 4 cells per side, got {N}")
    h = side / N
    n_u = (N - 1) * N
    n_v = N * (N - 1)
    n_c = N * N
    uid = _u_index(N)
    vid = _v_index(N, n_u)

    # ---- divergence -------------------------------------------------------
    rows, cols, vals = [], [], []
    for ci in range(N):
        for cj in range(N):
            c = ci * N + cj
            if ci <= N - 2:  # east u-face
                rows.append(c), cols.append(uid(ci, cj)), vals.append(1.0 / h)
            if ci >= 1:  # west u-face
                rows.append(c), cols.append(uid(ci - 1, cj)), vals.append(-1.0 / h)
            if cj <= N - 2:  # north v-face
                rows.append(c), cols.append(vid(ci, cj)), vals.append(1.0 / h)
            if cj >= 1:  # south v-face
                rows.append(c), cols.append(vid(ci, cj - 1)), vals.append(-1.0 / h)
    D = sp.csr_matrix((vals, (rows, cols)), shape=(n_c, n_u + n_v))
    G = (-D.T).tocsr()

    # ---- viscous (minus vector Laplacian, ghost-reflected no-slip) --------
    rows, cols, vals = [], [], []

    def lap_entry(r, c, v):
        rows.append(r), cols.append(c), vals.append(v / (h * h))

    for i in range(N - 1):
        for j in range(N):
            r = uid(i, j)
            diag = 4.0
            if i > 0:
                lap_entry(r, uid(i - 1, j), -1.0)
            if i < N - 2:
                lap_entry(r, uid(i + 1, j), -1.0)
            if j > 0:
                lap_entry(r, uid(i, j - 1), -1.0)
            else:
                diag += 1.0  # ghost u(-h/2) = -u(h/2) across the wall
            if j < N - 1:
                lap_entry(r, uid(i, j + 1), -1.0)
            else:
                diag += 1.0
            lap_entry(r, r, diag)
    for i in range(N):
        for j in range(N - 1):
            r = vid(i, j)
            diag = 4.0
            if j > 0:
                lap_entry(r, vid(i, j - 1), -1.0)
            if j < N - 2:
                lap_entry(r, vid(i, j + 1), -1.0)
            if i > 0:
                lap_entry(r, vid(i - 1, j), -1.0)
            else:
                diag += 1.0
            if i < N - 1:
                lap_entry(r, vid(i + 1, j), -1.0)
            else:
                diag += 1.0
            lap_entry(r, r, diag)
    K = sp.csr_matrix((vals, (rows, cols)), shape=(n_u + n_v, n_u + n_v))

    # ---- cell velocity-gradient tensor ------------------------------------
    # diagonal entries are the exact divergence pieces, off-diagonal entries
    # are centred differences of face-pair averages with ghost reflection
    rows_xx, cols_xx, vals_xx = [], [], []
    rows_yy, cols_yy, vals_yy = [], [], []
    for ci in range(N):
        for cj in range(N):
            c = ci * N + cj
            if ci <= N - 2:
                rows_xx.append(c), cols_xx.append(uid(ci, cj)), vals_xx.append(1.0 / h)
            if ci >= 1:
                rows_xx.append(c), cols_xx.append(uid(ci - 1, cj)), vals_xx.append(-1.0 / h)
            if cj <= N - 2:
                rows_yy.append(c), cols_yy.append(vid(ci, cj)), vals_yy.append(1.0 / h)
            if cj >= 1:
                rows_yy.append(c), cols_yy.append(vid(ci, cj - 1)), vals_yy.append(-1.0 / h)
    Txx = sp.csr_matrix((vals_xx, (rows_xx, cols_xx)), shape=(n_c, n_u + n_v))
    Tyy = sp.csr_matrix((vals_yy, (rows_yy, cols_yy)), shape=(n_c, n_u + n_v))

    rows_xy, cols_xy, vals_xy = [], [], []
    rows_yx, cols_yx, vals_yx = [], [], []
    for ci in range(N):
        for cj in range(N):
            c = ci * N + cj
            # du/dy at cell: difference of row-averaged u over rows cj+1, cj-1
            for jj, s in ((cj + 1, 1.0), (cj - 1, -1.0)):
                if 0 <= jj <= N - 1:
                    wgt = s / (4.0 * h)
                    refl = 1.0
                else:
                    jj = cj  # ghost row reflects the wall-adjacent row
                    wgt = s / (4.0 * h)
                    refl = -1.0
                for ii in (ci - 1, ci):
                    if 0 <= ii <= N - 2:
                        rows_xy.append(c), cols_xy.append(uid(ii, jj)), vals_xy.append(wgt * refl)
            # dv/dx at cell: difference of column-averaged v over columns ci+1, ci-1
            for ii, s in ((ci + 1, 1.0), (ci - 1, -1.0)):
                if 0 <= ii <= N - 1:
                    wgt = s / (4.0 * h)
                    refl = 1.0
                else:
                    ii = ci
                    wgt = s / (4.0 * h)
                    refl = -1.0
                for jj in (cj - 1, cj):
                    if 0 <= jj <= N - 2:
                        rows_yx.append(c), cols_yx.append(vid(ii, jj)), vals_yx.append(wgt * refl)
    Txy = sp.csr_matrix((vals_xy, (rows_xy, cols_xy)), shape=(n_c, n_u + n_v))
    Tyx = sp.csr_matrix((vals_yx, (rows_yx, cols_yx)), shape=(n_c, n_u + n_v))

    ih = np.arange(1, N) * h
    jh = (np.arange(N) + 0.5) * h
    xu, yu = np.meshgrid(ih, jh, indexing="ij")
    xv, yv = np.meshgrid(jh, ih, indexing="ij")

    return FlowGrid(
        N=N, h=h, side=side, n_u=n_u, n_v=n_v, n_c=n_c,
        D=D, G=G, K=K, T=(Txx, Txy, Tyx, Tyy),
        xu=xu.ravel(), yu=yu.ravel(), xv=xv.ravel(), yv=yv.ravel(),
    )


# --------------------------------------------------------------------------
# projection and smoothing
# --------------------------------------------------------------------------


def project_divergence_free(grid: FlowGrid, w: np.ndarray) -> np.ndarray:
    """L2-orthogonal projection onto the discretely divergence-free subspace.

    Solves ``(D G) p = D w`` (pressure Poisson, mean-zero gauge) and returns
    ``w - G p``.  Idempotent to rounding; gradients project to zero.
    """
    w = np.asarray(w, dtype=float)
    A = (grid.D @ grid.G).tocsc() * (-1.0)  # SPD up to constants
    ones = np.ones(grid.n_c)
    if grid._proj_lu is None:
        Aug = sp.bmat([[A, ones[:, None]], [ones[None, :], None]], format="csc")
        grid._proj_lu = spla.splu(Aug)
    sol = grid._proj_lu.solve(np.concatenate([-(grid.D @ w), [0.0]]))
    p = sol[:-1]
    return w - grid.G @ p


def smooth_initial_velocity(grid: FlowGrid, u0: np.ndarray, dt: float) -> np.ndarray:
    """One implicit Helmholtz step inside the divergence-free subspace:

        (u, v) + dt (grad u, grad v) = (u0, v)   for all div-free v,

    realized as a saddle-point solve.  Guarantees
    ``|u|^2 + dt |grad u|^2 <= |u0|^2`` (checked by the caller's tests).
    """
    if dt <= 0.0:
        raise ValueError(f"smoothing step needs dt > 0, got {dt}")
    u0 = np.asarray(u0, dtype=float)
    n = grid.n_u + grid.n_v
    h2 = grid.h * grid.h
    A = h2 * (sp.identity(n, format="csr") + dt * grid.K)
    ones = np.ones(grid.n_c)
    Aug = sp.bmat(
        [
            [A, h2 * grid.G, None],
            [h2 * grid.D, None, h2 * ones[:, None]],
            [None, h2 * ones[None, :], None],
        ],
        format="csc",
    )
    rhs = np.concatenate([h2 * u0, np.zeros(grid.n_c), [0.0]])
    sol = spla.splu(Aug).solve(rhs)
    return sol[:n]


# --------------------------------------------------------------------------
# convection
# --------------------------------------------------------------------------


def _plain_advection_matrix(grid: FlowGrid, vfield: np.ndarray) -> sp.csr_matrix:
    """Centred matrix of ``w -> (v . grad) w`` on faces (before antisymmetrization)."""
    N, h = grid.N, grid.h
    n = grid.n_u + grid.n_v
    uid = _u_index(N)
    vid = _v_index(N, grid.n_u)
    u = vfield[: grid.n_u].reshape(N - 1, N)
    v = vfield[grid.n_u :].reshape(N, N - 1)

    rows, cols, vals = [], [], []

    def add(r, c, val):
        if val != 0.0:
            rows.append(r), cols.append(c), vals.append(val)

    # --- u rows: vx = u at the face, vy = average of 4 neighbours ---
    for i in range(N - 1):
        for j in range(N):
            r = uid(i, j)
            vx = u[i, j]
            vy = 0.0
            for jv in (j - 1, j):
                if 0 <= jv <= N - 2:
                    vy += v[i, jv] + v[i + 1, jv]
            vy *= 0.25
            # vx * dw_u/dx (centred; boundary u-faces are zero)
            if i - 1 >= 0:
                add(r, uid(i - 1, j), -vx / (2 * h))
            if i + 1 <= N - 2:
                add(r, uid(i + 1, j), vx / (2 * h))
            # vy * dw_u/dy with ghost reflection at the walls
            if j - 1 >= 0:
                add(r, uid(i, j - 1), -vy / (2 * h))
            else:
                add(r, uid(i, j), vy / (2 * h))
            if j + 1 <= N - 1:
                add(r, uid(i, j + 1), vy / (2 * h))
            else:
                add(r, uid(i, j), -vy / (2 * h))

    # --- v rows: vy = v at the face, vx = average of 4 neighbours ---
    for i in range(N):
        for j in range(N - 1):
            r = vid(i, j)
            vy = v[i, j]
            vx = 0.0
            for iu in (i - 1, i):
                if 0 <= iu <= N - 2:
                    vx += u[iu, j] + u[iu, j + 1]
            vx *= 0.25
            if j - 1 >= 0:
                add(r, vid(i, j - 1), -vy / (2 * h))
            if j + 1 <= N - 2:
                add(r, vid(i, j + 1), vy / (2 * h))
            if i - 1 >= 0:
                add(r, vid(i - 1, j), -vx / (2 * h))
            else:
                add(r, vid(i, j), vx / (2 * h))
            if i + 1 <= N - 1:
                add(r, vid(i + 1, j), vx / (2 * h))
            else:
                add(r, vid(i, j), -vx / (2 * h))

    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def convection_matrix(grid: FlowGrid, vfield: np.ndarray) -> sp.csr_matrix:
    """Antisymmetrized convection operator ``C(v) = (A(v) - A(v)^T) / 2``.

    The induced trilinear form ``t(v; w1, w2) = h^2 w2 . C(v) w1`` is skew
    in its last two arguments to rounding, for every advecting field.
    """
    A = _plain_advection_matrix(grid, np.asarray(vfield, dtype=float))
    return ((A - A.T) * 0.5).tocsr()


def convection_trilinear(grid: FlowGrid, vfield, w1, w2) -> float:
    C = convection_matrix(grid, vfield)
    return grid.ip(np.asarray(w2, dtype=float), C @ np.asarray(w1, dtype=float))


# --------------------------------------------------------------------------
# Poincare constant and dual norm
# --------------------------------------------------------------------------


def scalar_dirichlet_stiffness(N: int, side: float = 1.0) -> sp.csr_matrix:
    """Cell-centred scalar minus-Laplacian with ghost-reflected walls."""
    h = side / N
    rows, cols, vals = [], [], []
    for i in range(N):
        for j in range(N):
            r = i * N + j
            diag = 4.0
            for ii, jj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                if 0 <= ii < N and 0 <= jj < N:
                    rows.append(r), cols.append(ii * N + jj), vals.append(-1.0 / (h * h))
                else:
                    diag += 1.0
            rows.append(r), cols.append(r), vals.append(diag / (h * h))
    return sp.csr_matrix((vals, (rows, cols)), shape=(N * N, N * N))


def poincare_constant(N: int, side: float = 1.0) -> Tuple[float, float]:
    """Discrete Poincare constant ``C_P = 1/sqrt(lambda_1)`` of the Dirichlet
    Laplacian on the side-``side`` square, together with ``lambda_1``."""
    S = scalar_dirichlet_stiffness(N, side)
    lam1 = float(spla.eigsh(S, k=1, sigma=0.0, which="LM", return_eigenvectors=False)[0])
    return 1.0 / math.sqrt(lam1), lam1


def dual_norm_sq(grid: FlowGrid, f: np.ndarray) -> float:
    """Square of the negative-Sobolev norm of a face field:
    ``sup_w (f, w)^2 / |grad w|^2 = h^2 f . K^{-1} f`` (one SPD solve)."""
    f = np.asarray(f, dtype=float)
    if not np.any(f):
        return 0.0
    if grid._visc_lu is None:
        grid._visc_lu = spla.splu(grid.K.tocsc())
    return float(grid.h * grid.h * (f @ grid._visc_lu.solve(f)))
