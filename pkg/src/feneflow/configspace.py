"""Configuration-space grids and operators for the spring ball ``D = B(0, sqrt(b))``.

The single-spring planar grid is polar: radii are mapped Gauss-Jacobi nodes
(no node at the origin or on the sphere ``|q| = sqrt(b)``), angles are
uniform.  The Jacobi weight exponent is chosen as ``b/2 - 1`` so that after
the substitution ``t = 2 r^2 / b - 1`` *both* families of moments that the
solver needs,

    int_D M(q) p(q) dq      and      int_D M(q) U'(|q|^2/2) p(q) dq,

are integrated exactly for polynomial ``p``.  All weighted operators come in
two flavours:

* node quadrature (mass matrix, Kramers stress, entropy integrals), and
* edge differences (Dirichlet stiffness, drag pairing, Fisher information),

where every edge carries a positive weight, so the stiffness is a symmetric
M-matrix whose kernel is exactly the constants.  Node-wise spectral/4th-order
gradients are provided separately for the integration-by-parts diagnostics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi

from .kinetic import (
    ChainGeometry,
    DomainError,
    InternalConsistencyError,
    RouseMatrix,
    fene_potential,
    maxwellian_normalizer,
)

__all__ = [
    "ConfigGrid",
    "ConfigOperators",
    "build_config_grid",
    "weighted_integral",
    "kramers_stress",
    "node_gradient",
    "ibp_residual",
    "IbpResult",
    "assemble_fp_operators",
    "spectral_gap",
    "grid_metadata_json",
    "grid_metadata_from_json",
]

MASS_TOL = 1e-8
MOMENT_TOL = 1e-6


class GridConstructionError(RuntimeError):
    """Raised when a freshly built grid fails its own acceptance checks."""


def _fornberg_weights(x0: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at ``x0`` on nodes ``x``."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5 = 1.0, c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def _radial_diff_matrix(r: np.ndarray, order: int = 4) -> sp.csr_matrix:
    """Sparse d/dr on the nonuniform radial nodes (``order+1``-point Fornberg stencils)."""
    n = len(r)
    width = min(order + 1, n)
    rows, cols, vals = [], [], []
    for i in range(n):
        lo = min(max(i - width // 2, 0), n - width)
        idx = np.arange(lo, lo + width)
        w = _fornberg_weights(r[i], r[idx], 1)
        rows.extend([i] * width)
        cols.extend(idx.tolist())
        vals.extend(w.tolist())
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass
class ConfigGrid:
    """Polar (d=2) or spherical (d=3) quadrature/difference grid for one spring.

    Attributes
    ----------
    geometry:      single-spring ChainGeometry this grid discretizes.
    r, theta:      radial Gauss-Jacobi nodes and uniform angles.
    w:             normalized node weights: ``sum(w * g)`` approximates
                   ``int_D M g dq`` (exactly, for polynomial ``g``).
    uprime:        ``U'(|q|^2/2)`` at the nodes.
    qx, qy[, qz]:  Cartesian node coordinates, flattened C-order.
    edges_a/b:     endpoint node indices of the difference edges.
    edge_w:        positive Dirichlet weights: ``sum(edge_w * dpsi^2)``
                   approximates ``int_D M |grad psi|^2 dq``.
    edge_gamma:    per-edge ``d x d`` geometric factors (flattened) such that
                   ``sum_e (sigma : Gamma_e) * dpsi_e`` approximates
                   ``int_D M (sigma q) . grad psi dq``.
    Z:             Maxwellian normalizer (cross-checked against closed form).
    """

    geometry: ChainGeometry
    N_r: int
    N_theta: int
    N_phi: int
    r: np.ndarray
    theta: np.ndarray
    w: np.ndarray
    uprime: np.ndarray
    qx: np.ndarray
    qy: np.ndarray
    qz: Optional[np.ndarray]
    edges_a: np.ndarray
    edges_b: np.ndarray
    edge_w: np.ndarray
    edge_gamma: Optional[np.ndarray]
    Z: float
    mass_defect: float
    moment_defect: float
    _radial_D: sp.csr_matrix
    _extra: dict

    @property
    def n_nodes(self) -> int:
        return self.w.size

    @property
    def d(self) -> int:
        return self.geometry.d

    @property
    def b(self) -> float:
        return self.geometry.b[0]


def _build_polar(geometry: ChainGeometry, N_r: int, N_theta: int) -> ConfigGrid:
    b = geometry.b[0]
    Z = maxwellian_normalizer(b, 2)

    # Radial rule: t = 2 r^2 / b - 1 turns  int_0^sqrt(b) g Mtilde r dr  into
    # (b/4) 2^{-b/2} int (1-t)^{b/2} g dt; Jacobi(alpha=b/2-1) nodes make both
    # the M- and the M U'-weighted polynomial moments exact.
    t, wt = roots_jacobi(N_r, b / 2.0 - 1.0, 0.0)
    order = np.argsort(t)
    t, wt = t[order], wt[order]
    r = np.sqrt(b * (1.0 + t) / 2.0)
    w_rad = (b / 4.0) * 2.0 ** (-b / 2.0) * wt * (1.0 - t)  # includes Mtilde * r * dr

    theta = 2.0 * math.pi * np.arange(N_theta) / N_theta
    dth = 2.0 * math.pi / N_theta

    w = np.repeat(w_rad, N_theta) * dth / Z
    rr = np.repeat(r, N_theta)
    th = np.tile(theta, N_r)
    qx = rr * np.cos(th)
    qy = rr * np.sin(th)
    _, uprime = fene_potential(0.5 * rr * rr, b)

    def mtil(rad):
        return (1.0 - rad * rad / b) ** (b / 2.0)

    # ---- difference edges -------------------------------------------------
    # radial edges (m, n) -> (m+1, n)
    m_idx = np.repeat(np.arange(N_r - 1), N_theta)
    n_idx = np.tile(np.arange(N_theta), N_r - 1)
    a_r = m_idx * N_theta + n_idx
    b_r = (m_idx + 1) * N_theta + n_idx
    rbar = 0.5 * (r[m_idx] + r[m_idx + 1])
    dr = r[m_idx + 1] - r[m_idx]
    w_edge_r = mtil(rbar) * rbar * dth / (Z * dr)
    er = np.stack([np.cos(theta[n_idx]), np.sin(theta[n_idx])], axis=1)
    qbar_r = rbar[:, None] * er
    gamma_r = (mtil(rbar) * rbar * dth / Z)[:, None] * (
        er[:, :, None] * qbar_r[:, None, :]
    ).reshape(-1, 4)

    # angular edges (m, n) -> (m, n+1 mod N_theta)
    m_idx = np.repeat(np.arange(N_r), N_theta)
    n_idx = np.tile(np.arange(N_theta), N_r)
    a_t = m_idx * N_theta + n_idx
    b_t = m_idx * N_theta + (n_idx + 1) % N_theta
    w_edge_t = w_rad[m_idx] * dth / (Z * r[m_idx] ** 2 * dth**2)
    thbar = theta[n_idx] + dth / 2.0
    et = np.stack([-np.sin(thbar), np.cos(thbar)], axis=1)
    qbar_t = r[m_idx][:, None] * np.stack([np.cos(thbar), np.sin(thbar)], axis=1)
    gamma_t = (w_rad[m_idx] / (Z * r[m_idx] * dth))[:, None] * (
        et[:, :, None] * qbar_t[:, None, :]
    ).reshape(-1, 4)

    edges_a = np.concatenate([a_r, a_t])
    edges_b = np.concatenate([b_r, b_t])
    edge_w = np.concatenate([w_edge_r, w_edge_t])
    edge_gamma = np.concatenate([gamma_r, gamma_t], axis=0)

    grid = ConfigGrid(
        geometry=geometry,
        N_r=N_r,
        N_theta=N_theta,
        N_phi=0,
        r=r,
        theta=theta,
        w=w,
        uprime=uprime,
        qx=qx,
        qy=qy,
        qz=None,
        edges_a=edges_a,
        edges_b=edges_b,
        edge_w=edge_w,
        edge_gamma=edge_gamma,
        Z=Z,
        mass_defect=0.0,
        moment_defect=0.0,
        _radial_D=_radial_diff_matrix(r),
        _extra={},
    )
    return grid


def _build_spherical(geometry: ChainGeometry, N_r: int, N_theta: int, N_phi: int) -> ConfigGrid:
    """d=3 grid: Gauss-Jacobi radii x Gauss-Legendre polar x uniform azimuth."""
    b = geometry.b[0]
    Z = maxwellian_normalizer(b, 3)

    t, wt = roots_jacobi(N_r, b / 2.0 - 1.0, 0.5)
    order = np.argsort(t)
    t, wt = t[order], wt[order]
    r = np.sqrt(b * (1.0 + t) / 2.0)
    # int g Mtilde r^2 dr = (b/4) 2^{-b/2} sqrt(b/2) int (1-t)^{b/2} (1+t)^{1/2} g dt
    w_rad = (b / 4.0) * 2.0 ** (-b / 2.0) * math.sqrt(b / 2.0) * wt * (1.0 - t)

    mu, wmu = np.polynomial.legendre.leggauss(N_theta)  # mu = cos(polar angle)
    phi = 2.0 * math.pi * np.arange(N_phi) / N_phi
    dphi = 2.0 * math.pi / N_phi

    R, MU, PH = np.meshgrid(r, mu, phi, indexing="ij")
    WR, WMU, _ = np.meshgrid(w_rad, wmu, np.full(N_phi, dphi), indexing="ij")
    w = (WR * WMU * dphi / Z).ravel()
    rr = R.ravel()
    st = np.sqrt(1.0 - MU.ravel() ** 2)
    qx = rr * st * np.cos(PH.ravel())
    qy = rr * st * np.sin(PH.ravel())
    qz = rr * MU.ravel()
    _, uprime = fene_potential(0.5 * rr * rr, b)

    def mtil(rad):
        return (1.0 - rad * rad / b) ** (b / 2.0)

    def nid(i, j, k):
        return (i * N_theta + j) * N_phi + k

    I, J, K = np.meshgrid(np.arange(N_r - 1), np.arange(N_theta), np.arange(N_phi), indexing="ij")
    a_r = nid(I, J, K).ravel()
    b_r = nid(I + 1, J, K).ravel()
    rbar = 0.5 * (r[I] + r[I + 1]).ravel()
    dr = (r[I + 1] - r[I]).ravel()
    w_edge_r = mtil(rbar) * rbar**2 * np.repeat(np.tile(wmu, N_r - 1), N_phi) * dphi / (Z * dr)

    I, J, K = np.meshgrid(np.arange(N_r), np.arange(N_theta - 1), np.arange(N_phi), indexing="ij")
    a_m = nid(I, J, K).ravel()
    b_m = nid(I, J + 1, K).ravel()
    # (1/r^2) |d_theta|^2 with mu = cos(theta) becomes ((1-mu^2)/r^2) |d_mu|^2
    mubar = 0.5 * (mu[J] + mu[J + 1]).ravel()
    dmu = (mu[J + 1] - mu[J]).ravel()
    w_edge_m = w_rad[I.ravel()] * (1.0 - mubar**2) * dphi / (Z * r[I.ravel()] ** 2 * dmu)

    I, J, K = np.meshgrid(np.arange(N_r), np.arange(N_theta), np.arange(N_phi), indexing="ij")
    a_p = nid(I, J, K).ravel()
    b_p = nid(I, J, (K + 1) % N_phi).ravel()
    sin2 = 1.0 - mu[J.ravel()] ** 2
    w_edge_p = w_rad[I.ravel()] * wmu[J.ravel()] / (Z * r[I.ravel()] ** 2 * sin2 * dphi)

    edges_a = np.concatenate([a_r, a_m, a_p])
    edges_b = np.concatenate([b_r, b_m, b_p])
    edge_w = np.concatenate([w_edge_r, w_edge_m, w_edge_p])

    return ConfigGrid(
        geometry=geometry,
        N_r=N_r,
        N_theta=N_theta,
        N_phi=N_phi,
        r=r,
        theta=np.arccos(mu[::-1]),
        w=w,
        uprime=uprime,
        qx=qx,
        qy=qy,
        qz=qz,
        edges_a=edges_a,
        edges_b=edges_b,
        edge_w=edge_w,
        edge_gamma=None,
        Z=Z,
        mass_defect=0.0,
        moment_defect=0.0,
        _radial_D=_radial_diff_matrix(r),
        _extra={"mu": mu, "wmu": wmu, "phi": phi},
    )


def build_config_grid(
    geometry: ChainGeometry, N_r: int, N_theta: int, N_phi: Optional[int] = None
) -> ConfigGrid:
    """Build and self-check the quadrature/difference grid for one spring.

    Raises
    ------
    GridConstructionError
        If the normalized mass misses 1 by more than 1e-8 or the second
        moment misses its closed form ``d*b/(b+d+2)`` by more than 1e-6
        (the raised message reports the measured defect).
    """
    if geometry.K != 1:
        raise ValueError("build_config_grid discretizes a single spring; use tensor products for chains")
    if N_r < 8 or N_theta < 8:
        raise ValueError(f"need at least 8 nodes per direction, got N_r={N_r}, N_theta={N_theta}")
    if geometry.d == 2:
        grid = _build_polar(geometry, N_r, N_theta)
    else:
        N_phi = N_phi if N_phi is not None else N_theta
        if N_phi < 8:
            raise ValueError(f"need at least 8 azimuthal bands, got {N_phi}")
        grid = _build_spherical(geometry, N_r, N_theta, N_phi)

    b, d = grid.b, grid.d
    mass = float(np.sum(grid.w))
    rr2 = grid.qx**2 + grid.qy**2 + (grid.qz**2 if grid.qz is not None else 0.0)
    m2 = float(np.sum(grid.w * rr2))
    m2_exact = d * b / (b + d + 2.0)
    grid.mass_defect = abs(mass - 1.0)
    grid.moment_defect = abs(m2 - m2_exact)
    if grid.mass_defect > MASS_TOL:
        raise GridConstructionError(
            f"normalized Maxwellian mass defect {grid.mass_defect:.3e} exceeds {MASS_TOL}"
        )
    if grid.moment_defect > MOMENT_TOL:
        raise GridConstructionError(
            f"second-moment defect {grid.moment_defect:.3e} exceeds {MOMENT_TOL} "
            f"(got {m2!r}, expected {m2_exact!r})"
        )
    return grid


# --------------------------------------------------------------------------
# node quadrature operators
# --------------------------------------------------------------------------


def weighted_integral(grid: ConfigGrid, field: np.ndarray) -> float:
    """``int_D M field dq`` by the grid's exact-moment quadrature."""
    field = np.asarray(field, dtype=float)
    if field.shape[-1] != grid.n_nodes:
        raise ValueError(f"field has {field.shape[-1]} nodes, grid has {grid.n_nodes}")
    return field @ grid.w


def kramers_stress(grid: ConfigGrid, psi_hat: np.ndarray, k: float) -> np.ndarray:
    """Kramers stress ``tau = k (int M psi U' q q^T dq - rho I)`` (symmetric).

    ``psi_hat`` may carry leading axes (e.g. one row per flow cell); the
    result then has shape ``(..., d, d)``.
    """
    psi_hat = np.asarray(psi_hat, dtype=float)
    d = grid.d
    coords = [grid.qx, grid.qy] + ([grid.qz] if d == 3 else [])
    wU = grid.w * grid.uprime
    rho = psi_hat @ grid.w
    tau = np.empty(psi_hat.shape[:-1] + (d, d))
    for a in range(d):
        for c in range(a, d):
            moment = psi_hat @ (wU * coords[a] * coords[c])
            tau[..., a, c] = moment
            tau[..., c, a] = moment
    for a in range(d):
        tau[..., a, a] -= rho
    return k * tau


# --------------------------------------------------------------------------
# node gradients and integration by parts
# --------------------------------------------------------------------------


def node_gradient(grid: ConfigGrid, field: np.ndarray) -> np.ndarray:
    """Cartesian gradient of a node field: spectral in the periodic angle(s),
    fourth-order one-sided-at-the-rim finite differences radially.

    Returns shape ``(d, n_nodes)``.
    """
    field = np.asarray(field, dtype=float)
    if grid.d == 2:
        F = field.reshape(grid.N_r, grid.N_theta)
        dFr = (grid._radial_D @ F).reshape(-1)
        k = np.fft.rfftfreq(grid.N_theta, d=1.0 / grid.N_theta) * 1j
        dFth = np.fft.irfft(k * np.fft.rfft(F, axis=1), n=grid.N_theta, axis=1).reshape(-1)
        rr = np.repeat(grid.r, grid.N_theta)
        th = np.tile(grid.theta, grid.N_r)
        cs, sn = np.cos(th), np.sin(th)
        gx = cs * dFr - sn * dFth / rr
        gy = sn * dFr + cs * dFth / rr
        return np.stack([gx, gy])
    # d = 3: Fornberg in r and mu, FFT in phi
    mu = grid._extra["mu"]
    F = field.reshape(grid.N_r, grid.N_theta, grid.N_phi)
    dFr = np.einsum("ij,jkl->ikl", grid._radial_D.toarray(), F)
    Dmu = _radial_diff_matrix(mu).toarray()
    dFmu = np.einsum("jk,ikl->ijl", Dmu, F)
    k = np.fft.rfftfreq(grid.N_phi, d=1.0 / grid.N_phi) * 1j
    dFph = np.fft.irfft(k * np.fft.rfft(F, axis=2), n=grid.N_phi, axis=2)
    R = grid.r[:, None, None]
    MU = mu[None, :, None]
    PH = grid._extra["phi"][None, None, :]
    st = np.sqrt(1.0 - MU**2)
    # grad = e_r d_r - (st/r) d_mu e_theta + e_phi / (r st) d_phi  (mu = cos theta)
    er = np.stack([st * np.cos(PH) + 0 * R, st * np.sin(PH) + 0 * R, MU + 0 * R * PH])
    eth = np.stack([MU * np.cos(PH) + 0 * R, MU * np.sin(PH) + 0 * R, -st + 0 * R * PH])
    eph = np.stack([-np.sin(PH) + 0 * R * MU, np.cos(PH) + 0 * R * MU, 0 * R * MU * PH])
    grad = er * dFr + eth * (-st / R) * dFmu + eph * dFph / (R * st)
    return grad.reshape(3, -1)


@dataclass(frozen=True)
class IbpResult:
    lhs: float
    rhs: float
    residual: float
    relative: float


def ibp_residual(grid: ConfigGrid, B: np.ndarray, phi_hat: np.ndarray) -> IbpResult:
    """Residual of the Maxwellian integration-by-parts identity.

    Checks ``int_D M (B q) . grad phi dq  =  int_D M phi U' q^T B q dq`` for
    a trace-free matrix ``B`` (both sides evaluated with the grid's own
    quadrature; the left side uses the node gradient).

    Raises
    ------
    DomainError
        If ``trace(B)`` is not numerically zero — the identity only holds
        trace-free (the divergence of ``q -> B q`` must vanish against the
        density part).
    """
    B = np.asarray(B, dtype=float)
    d = grid.d
    if B.shape != (d, d):
        raise ValueError(f"B must be {d}x{d}, got {B.shape}")
    if abs(np.trace(B)) > 1e-12 * (1.0 + np.abs(B).max()):
        raise DomainError(f"integration-by-parts identity needs trace(B)=0, got trace {np.trace(B)!r}")
    phi_hat = np.asarray(phi_hat, dtype=float)
    coords = np.stack([grid.qx, grid.qy] + ([grid.qz] if d == 3 else []))
    Bq = np.tensordot(B, coords, axes=1)
    grad = node_gradient(grid, phi_hat)
    lhs = float(np.sum(grid.w * np.sum(Bq * grad, axis=0)))
    qBq = np.sum(coords * Bq, axis=0)
    rhs = float(np.sum(grid.w * phi_hat * grid.uprime * qBq))
    residual = abs(lhs - rhs)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return IbpResult(lhs=lhs, rhs=rhs, residual=residual, relative=residual / scale)


# --------------------------------------------------------------------------
# assembled operators
# --------------------------------------------------------------------------


@dataclass
class ConfigOperators:
    """Weighted operators used by the coupled stepper.

    mass_diag:    node weights of ``int_D M . dq`` (diagonal mass form).
    q_stiffness:  CSR matrix of the Dirichlet form
                  ``psi -> sum_edges edge_w (psi_b - psi_a) (test_b - test_a)``
                  (symmetric positive semidefinite, kernel = constants).
    grid:         the underlying grid (edge arrays drive the drag pairing).
    rouse, lam, eps: coupling matrix and the scheme parameters they scale.
    """

    grid: ConfigGrid
    mass_diag: np.ndarray
    q_stiffness: sp.csr_matrix
    rouse: RouseMatrix
    lam: float
    eps: float

    def drag_rhs(self, sigma: np.ndarray, coeff_edges: np.ndarray) -> np.ndarray:
        """Assembled drag functional for one flow cell.

        Parameters
        ----------
        sigma : (d, d) velocity gradient at the cell.
        coeff_edges : per-edge cut-off coefficients (previous iterate).

        Returns the vector ``v`` with ``v . phi = int_D M (sigma q) beta . grad phi dq``
        in edge form, i.e. ``sum_e (sigma : Gamma_e) c_e (phi_b - phi_a)``.
        """
        g = self.grid
        flux = (g.edge_gamma @ sigma.reshape(4)) * coeff_edges
        v = np.zeros(g.n_nodes)
        np.add.at(v, g.edges_b, flux)
        np.add.at(v, g.edges_a, -flux)
        return v

    def stress_matrix(self, psi_hat: np.ndarray) -> np.ndarray:
        """Edge-difference stress ``C_hat`` with ``sigma : C_hat(psi)`` equal to the
        drag form tested on ``[F^L_delta]'(psi)`` (exact discrete pairing).

        Consistent with ``C(M psi)`` up to the integration-by-parts residual
        for trace-free contractions.  ``psi_hat`` may carry leading axes.
        """
        g = self.grid
        psi_hat = np.asarray(psi_hat, dtype=float)
        dpsi = psi_hat[..., g.edges_b] - psi_hat[..., g.edges_a]
        return (dpsi @ g.edge_gamma).reshape(psi_hat.shape[:-1] + (2, 2))


def assemble_fp_operators(
    grid: ConfigGrid, rouse: RouseMatrix, lam: float, eps: float
) -> ConfigOperators:
    """Assemble the Maxwellian-weighted mass and stiffness forms for one spring.

    The stiffness is built edge-wise, so symmetry is structural and constants
    are annihilated exactly; both facts are re-verified here (defect beyond
    1e-12 raises :class:`InternalConsistencyError`).
    """
    if lam <= 0.0 or eps < 0.0:
        raise ValueError(f"need lambda > 0 and eps >= 0, got lam={lam}, eps={eps}")
    n = grid.n_nodes
    a, bidx, wE = grid.edges_a, grid.edges_b, grid.edge_w
    rows = np.concatenate([a, bidx, a, bidx])
    cols = np.concatenate([a, bidx, bidx, a])
    vals = np.concatenate([wE, wE, -wE, -wE])
    S = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    sym_defect = abs(S - S.T).max()
    kernel_defect = np.abs(S @ np.ones(n)).max()
    scale = max(abs(S).max(), 1.0)
    if sym_defect > 1e-12 * scale or kernel_defect > 1e-12 * scale:
        raise InternalConsistencyError(
            f"stiffness defects: symmetry {sym_defect:.2e}, kernel {kernel_defect:.2e}"
        )
    return ConfigOperators(
        grid=grid, mass_diag=grid.w.copy(), q_stiffness=S, rouse=rouse, lam=lam, eps=eps
    )


def spectral_gap(ops: ConfigOperators) -> float:
    """Smallest nonzero Rayleigh quotient of (stiffness, mass): the discrete
    configuration-space relaxation rate surrogate."""
    M12 = 1.0 / np.sqrt(ops.mass_diag)
    S = ops.q_stiffness.toarray() * M12[:, None] * M12[None, :]
    eigs = np.linalg.eigvalsh(0.5 * (S + S.T))
    positive = eigs[eigs > 1e-10 * max(eigs.max(), 1.0)]
    if positive.size == 0:
        raise InternalConsistencyError("stiffness has no positive spectrum")
    return float(positive[0])


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def grid_metadata_json(grid: ConfigGrid) -> str:
    """Structured-text description of the grid (counts, b, Z, defects, tolerances)."""
    meta = {
        "kind": "fene-config-grid",
        "d": grid.d,
        "b": grid.b,
        "N_r": grid.N_r,
        "N_theta": grid.N_theta,
        "N_phi": grid.N_phi,
        "n_nodes": grid.n_nodes,
        "Z": grid.Z,
        "mass_defect": grid.mass_defect,
        "moment_defect": grid.moment_defect,
        "mass_tol": MASS_TOL,
        "moment_tol": MOMENT_TOL,
    }
    return json.dumps(meta, indent=2, sort_keys=True)


def grid_metadata_from_json(text: str) -> dict:
    meta = json.loads(text)
    if meta.get("kind") != "fene-config-grid":
        raise ValueError("not a configuration-grid description")
    return meta
