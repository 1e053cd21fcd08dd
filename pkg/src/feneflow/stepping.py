"""Discrete-in-time coupled update for the flow/configuration-density system.

One macro time step advances the pair ``(u, psi)`` implicitly:

* momentum: implicit Euler with antisymmetrized convection frozen at the
  previous velocity, viscous term and pressure implicit, and the polymer
  stress assembled as the exact adjoint of the configuration-space drag
  form evaluated on the fixed-point candidate density;
* configuration density: implicit Euler with upwind spatial transport by
  the *previous* velocity, spatial (centre-of-mass) diffusion, weighted
  configuration diffusion, and drag driven by the gradient of the *new*
  velocity, with the drag coefficient truncated through the two-sided
  cutoff and lagged to the previous fixed-point iterate.

The two solves are alternated to a fixed point; each inner solve is linear.
The configuration solve exploits the Kronecker structure

    K_x (x) M_q + M_x (x) S_q

by diagonalizing the mass-weighted configuration stiffness once per grid:
the monolithic system splits into one small sparse x-solve per
configuration eigenmode, which keeps million-unknown steps exact (direct
solves) without ever forming the full operator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .kinetic import (
    CutoffParams,
    RouseMatrix,
    entropy_eval,
    secant_cutoff_coefficient,
)
from .configspace import ConfigOperators, grid_metadata_json
from .flowspace import FlowGrid, convection_matrix

__all__ = [
    "StepParams",
    "SystemState",
    "FixedPointReport",
    "SmoothingReport",
    "CoupledStepper",
    "smooth_initial_density",
    "dt_schedule",
    "ScheduleError",
    "ConstructionError",
    "save_checkpoint",
    "load_checkpoint",
]


class ScheduleError(ValueError):
    """Raised when the cutoff-coupled time-step rule cannot be satisfied."""


class ConstructionError(RuntimeError):
    """Raised when a smoothed initial datum violates its guarantees."""


@dataclass(frozen=True)
class StepParams:
    """Physical and numerical parameters of one run.

    dt: macro time step.
    nu: kinematic viscosity.
    k: polymer stress scale (also weights the entropy in the free energy).
    lam: relaxation time of the chain.
    eps: centre-of-mass diffusion coefficient.
    cutoff: two-sided truncation levels (delta, L) for the drag coefficient.
    rouse: chain connectivity matrix.
    fp_tol: relative increment at which the inner fixed point is accepted.
    fp_max_iter: hard cap on inner iterations.
    """

    dt: float
    nu: float
    k: float
    lam: float
    eps: float
    cutoff: CutoffParams
    rouse: RouseMatrix
    fp_tol: float = 1.0e-12
    fp_max_iter: int = 80
    delta_schedule: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        for name in ("dt", "nu", "lam", "eps"):
            val = getattr(self, name)
            if not (val > 0.0) or not math.isfinite(val):
                raise ValueError(f"{name} must be positive and finite, got {val}")
        if self.k < 0.0:
            raise ValueError(f"stress scale k must be nonnegative, got {self.k}")
        if self.delta_schedule is not None:
            sched = tuple(self.delta_schedule)
            if not sched or any(not (0.0 < d < 1.0) for d in sched):
                raise ValueError("delta_schedule entries must lie in (0, 1)")
            if any(a < b for a, b in zip(sched, sched[1:])):
                raise ValueError("delta_schedule must be non-increasing")
            object.__setattr__(self, "delta_schedule", sched)

    def delta_at(self, n: int) -> float:
        """Regularization level for step ``n`` (1-based); a continuation
        schedule, when present, is read out step by step and then held."""
        if self.delta_schedule is None:
            return self.cutoff.delta
        return self.delta_schedule[min(max(n - 1, 0), len(self.delta_schedule) - 1)]


@dataclass
class SystemState:
    """Velocity (packed face vector), density (cells x config nodes), clock."""

    u: np.ndarray
    psi: np.ndarray
    t: float
    n: int

    def copy(self) -> "SystemState":
        return SystemState(self.u.copy(), self.psi.copy(), self.t, self.n)


@dataclass
class FixedPointReport:
    iterations: int
    converged: bool
    final_du: float = math.inf
    final_dpsi: float = math.inf
    increments: List[float] = field(default_factory=list)


@dataclass
class SmoothingReport:
    entropy_before: float
    entropy_after: float
    fisher_budget: float          # 4*dt*(fisher_x + fisher_q) of the output
    min_value: float
    mass_drift: float


# --------------------------------------------------------------------------
# x-space operators for the density transport
# --------------------------------------------------------------------------


def _cell_neumann_stiffness(N: int) -> sp.csr_matrix:
    """Unscaled 5-point stiffness on cells with no-flux walls; rows sum to 0.

    The edge form sum_edges (d_rho)(d_phi) equals the continuum
    ``int grad rho . grad phi`` because the 1/h^2 of the difference quotients
    cancels the h^2 cell measure.
    """
    main = np.full(N, 2.0)
    main[0] = main[-1] = 1.0
    S1 = sp.diags([main, -np.ones(N - 1), -np.ones(N - 1)], [0, -1, 1], format="csr")
    I = sp.identity(N, format="csr")
    return (sp.kron(S1, I) + sp.kron(I, S1)).tocsr()


def _upwind_advection(grid: FlowGrid, u: np.ndarray) -> sp.csr_matrix:
    """Donor-cell flux matrix, scaled so the weak transport term is
    ``phi . (Adv psi)`` alongside ``h^2/dt`` mass entries.

    Columns sum to zero exactly (each face moves mass between two rows), so
    total mass is conserved identically; rows applied to constants give
    ``h^2`` times the discrete divergence, which vanishes for projected
    velocities, so uniform densities are transported exactly.
    """
    N, h = grid.N, grid.h
    uu = np.asarray(u[: grid.n_u]).reshape(N - 1, N)
    vv = np.asarray(u[grid.n_u :]).reshape(N, N - 1)

    # vertical faces between cell (i, j) and (i+1, j)
    i, j = np.meshgrid(np.arange(N - 1), np.arange(N), indexing="ij")
    left = (i * N + j).ravel()
    right = ((i + 1) * N + j).ravel()
    U = uu.ravel()
    donor_v = np.where(U > 0.0, left, right)

    # horizontal faces between cell (i, j) and (i, j+1)
    i, j = np.meshgrid(np.arange(N), np.arange(N - 1), indexing="ij")
    bot = (i * N + j).ravel()
    top = (i * N + j + 1).ravel()
    V = vv.ravel()
    donor_h = np.where(V > 0.0, bot, top)

    rows = np.concatenate([left, right, bot, top])
    cols = np.concatenate([donor_v, donor_v, donor_h, donor_h])
    vals = np.concatenate([h * U, -h * U, h * V, -h * V])
    n_c = grid.n_c
    return sp.coo_matrix((vals, (rows, cols)), shape=(n_c, n_c)).tocsr()


# --------------------------------------------------------------------------
# Kronecker solve in the configuration eigenbasis
# --------------------------------------------------------------------------


class _QEig:
    """Eigendecomposition of the mass-weighted configuration stiffness.

    With ``S_hat = M^{-1/2} S M^{-1/2} = Q diag(evals) Q^T`` the monolithic
    system ``K_x Psi M + c M_x Psi S = R`` decouples into independent
    per-mode x-systems after the similarity transform below.
    """

    def __init__(self, ops: ConfigOperators):
        m = ops.mass_diag
        inv_sqrt_m = 1.0 / np.sqrt(m)
        S_hat = (ops.q_stiffness.multiply(inv_sqrt_m[:, None])).multiply(inv_sqrt_m[None, :])
        evals, Q = np.linalg.eigh(S_hat.toarray())
        self.inv_sqrt_m = inv_sqrt_m
        self.sqrt_m = np.sqrt(m)
        self.Q = np.ascontiguousarray(Q)
        self.evals = np.maximum(evals, 0.0)  # clip eigenvalue roundoff

    def to_modes(self, rhs_nodal: np.ndarray) -> np.ndarray:
        return (rhs_nodal * self.inv_sqrt_m[None, :]) @ self.Q

    def to_nodes(self, modes: np.ndarray) -> np.ndarray:
        return (modes @ self.Q.T) * self.inv_sqrt_m[None, :]


def _kron_solve(Kx: sp.csr_matrix, shift_scale: float, eig: _QEig,
                rhs_nodal: np.ndarray) -> np.ndarray:
    """Solve ``Kx Psi M_q + shift_scale * Psi S_q = R`` for nodal ``Psi``.

    All per-mode matrices are diagonal shifts of the same banded operator,
    so each mode costs one LAPACK banded factorization instead of a general
    sparse one.
    """
    from scipy.linalg import solve_banded

    R = eig.to_modes(rhs_nodal)
    Phi = np.empty_like(R)
    coo = Kx.tocoo()
    kl = int((coo.row - coo.col).max())
    ku = int((coo.col - coo.row).max())
    ab = np.zeros((kl + ku + 1, Kx.shape[0]))
    ab[ku + coo.row - coo.col, coo.col] = coo.data
    work = np.empty_like(ab)
    for jmode in range(R.shape[1]):
        np.copyto(work, ab)
        work[ku, :] += shift_scale * eig.evals[jmode]
        Phi[:, jmode] = solve_banded((kl, ku), work, R[:, jmode],
                                     overwrite_ab=True, check_finite=False)
    return eig.to_nodes(Phi)


# --------------------------------------------------------------------------
# the coupled stepper
# --------------------------------------------------------------------------


class CoupledStepper:
    """Advances ``(u, psi)`` one implicit step at a time on fixed grids."""

    def __init__(self, flow: FlowGrid, ops: ConfigOperators, params: StepParams):
        if ops.grid.d != 2:
            raise ValueError("the coupled stepper requires planar connector vectors (d = 2)")
        if ops.grid.edge_gamma is None:
            raise ValueError("configuration grid lacks drag geometry")
        self.flow = flow
        self.ops = ops
        self.params = params
        self.eig = _QEig(ops)
        self.Sx = _cell_neumann_stiffness(flow.N)
        # edge scatter: (config nodes) x (config edges), +1 at head, -1 at tail
        g = ops.grid
        n_e = g.edges_a.size
        self._scatter = sp.coo_matrix(
            (
                np.concatenate([np.ones(n_e), -np.ones(n_e)]),
                (np.concatenate([g.edges_b, g.edges_a]), np.concatenate([np.arange(n_e), np.arange(n_e)])),
            ),
            shape=(g.n_nodes, n_e),
        ).tocsr()
        self._gammaT = np.ascontiguousarray(g.edge_gamma.T)  # (4, n_e)
        # drag coefficient of the Rouse-weighted configuration diffusion;
        # single-spring chains carry coefficient A_11 / (2 lam)
        self._cq = float(ops.rouse.A[0][0]) / (2.0 * params.lam)

    # ---- norms ------------------------------------------------------------

    def psi_norm(self, psi: np.ndarray) -> float:
        """Weighted L2 norm over cells x configuration nodes."""
        h2 = self.flow.h * self.flow.h
        return math.sqrt(h2 * float(((psi * psi) @ self.ops.mass_diag).sum()))

    # ---- momentum ---------------------------------------------------------

    def _momentum_matrix(self, u_prev: np.ndarray, dt: float):
        fg = self.flow
        n = fg.n_u + fg.n_v
        h2 = fg.h * fg.h
        A = h2 * ((1.0 / dt) * sp.identity(n, format="csr")
                  + self.params.nu * fg.K
                  + convection_matrix(fg, u_prev))
        ones = np.ones(fg.n_c)
        Aug = sp.bmat(
            [
                [A, h2 * fg.G, None],
                [h2 * fg.D, None, h2 * ones[:, None]],
                [None, h2 * ones[None, :], None],
            ],
            format="csc",
        )
        return spla.splu(Aug)

    def _stress_force(self, C_hat: np.ndarray) -> np.ndarray:
        """Weak polymer force ``w -> -k sum_cells h^2 C_hat : grad w``."""
        fg = self.flow
        h2 = fg.h * fg.h
        Txx, Txy, Tyx, Tyy = fg.T
        out = Txx.T @ C_hat[:, 0, 0] + Txy.T @ C_hat[:, 0, 1] \
            + Tyx.T @ C_hat[:, 1, 0] + Tyy.T @ C_hat[:, 1, 1]
        return -self.params.k * h2 * out

    def _momentum_solve(self, lu, u_prev: np.ndarray, psi_candidate: np.ndarray,
                        f: Optional[np.ndarray], dt: float) -> np.ndarray:
        fg = self.flow
        h2 = fg.h * fg.h
        rhs = h2 * (u_prev / dt)
        if f is not None:
            rhs = rhs + h2 * f
        rhs = rhs + self._stress_force(self.ops.stress_matrix(psi_candidate))
        full = np.concatenate([rhs, np.zeros(fg.n_c), [0.0]])
        return lu.solve(full)[: fg.n_u + fg.n_v]

    def momentum_step(self, u_prev: np.ndarray, psi_candidate: np.ndarray,
                      f: Optional[np.ndarray] = None,
                      dt: Optional[float] = None) -> np.ndarray:
        """One implicit momentum solve against a frozen candidate density.

        Satisfies the discrete kinetic-energy identity exactly (to direct-
        solver residual): testing with the new velocity kills convection
        (skew) and pressure (adjoint gradient on a divergence-free field).
        """
        dt = self.params.dt if dt is None else dt
        lu = self._momentum_matrix(np.asarray(u_prev, dtype=float), dt)
        return self._momentum_solve(lu, np.asarray(u_prev, dtype=float),
                                    psi_candidate, f, dt)

    # ---- configuration density --------------------------------------------

    def _transport_matrix(self, u_transport: np.ndarray, dt: float) -> sp.csr_matrix:
        fg = self.flow
        h2 = fg.h * fg.h
        return ((h2 / dt) * sp.identity(fg.n_c, format="csr")
                + self.params.eps * self.Sx
                + _upwind_advection(fg, u_transport)).tocsr()

    def _drag_rhs(self, u_candidate: np.ndarray, coeff_field: np.ndarray,
                  delta: Optional[float] = None) -> np.ndarray:
        """Edge-based drag source, one row per cell.

        The per-edge coefficient is the divided difference of the density
        through the regularized entropy derivative, so that testing the
        result with that derivative telescopes to the plain density jump —
        the discrete chain rule behind the exact drag/stress cancellation.
        """
        g = self.ops.grid
        sig = self.flow.cell_velocity_gradient(u_candidate).reshape(-1, 4)
        sg = sig @ self._gammaT                      # (n_c, n_e): sigma : Gamma_e
        pa = coeff_field[:, g.edges_a]
        pb = coeff_field[:, g.edges_b]
        if delta is None:
            delta = self.params.cutoff.delta
        c = secant_cutoff_coefficient(pa, pb, self.params.cutoff.L, delta)
        return (sg * c) @ self._scatter.T            # scatter +head/-tail

    def fokker_planck_step(self, psi_prev: np.ndarray, u_candidate: np.ndarray,
                           u_transport: np.ndarray,
                           coeff_field: Optional[np.ndarray] = None,
                           dt: Optional[float] = None,
                           delta: Optional[float] = None) -> np.ndarray:
        """One implicit density solve.

        Transport (upwind) uses ``u_transport`` (previous macro step);
        drag uses the gradient of ``u_candidate`` (current candidate) with
        the truncated coefficient evaluated on ``coeff_field`` (previous
        fixed-point iterate; defaults to ``psi_prev``).
        """
        dt = self.params.dt if dt is None else dt
        if coeff_field is None:
            coeff_field = psi_prev
        fg = self.flow
        h2 = fg.h * fg.h
        Kx = self._transport_matrix(np.asarray(u_transport, dtype=float), dt)
        rhs = (h2 / dt) * psi_prev * self.ops.mass_diag[None, :]
        rhs = rhs + h2 * self._drag_rhs(np.asarray(u_candidate, dtype=float),
                                        coeff_field, delta)
        out = _kron_solve(Kx, self._cq * h2, self.eig, rhs)
        if not np.isfinite(out).all():
            raise FloatingPointError("density solve produced non-finite values")
        return out

    # ---- the coupled fixed point -------------------------------------------

    def coupled_step(self, state: SystemState, f: Optional[np.ndarray] = None
                     ) -> Tuple[SystemState, FixedPointReport]:
        """Alternate momentum and density solves to a joint fixed point.

        Both inner solves are linear: the nonlinearities (stress, drag
        coefficient) are evaluated on the previous iterate. At equilibrium
        data the first sweep reproduces the state exactly and the loop
        reports convergence after one iteration with zero increments.
        """
        p = self.params
        delta_n = p.delta_at(state.n + 1)
        lu = self._momentum_matrix(state.u, p.dt)
        u_it = state.u
        psi_it = state.psi
        floor = max(math.sqrt(self.flow.norm_sq(state.u)
                              + self.psi_norm(state.psi) ** 2), 1.0e-12)
        report = FixedPointReport(iterations=0, converged=False)
        for _ in range(p.fp_max_iter):
            u_star = self._momentum_solve(lu, state.u, psi_it, f, p.dt)
            psi_star = self.fokker_planck_step(state.psi, u_star, state.u,
                                               coeff_field=psi_it, delta=delta_n)
            # both increments are measured against the joint state scale:
            # a component that has relaxed to rounding level around zero must
            # not be judged relative to itself (the ratio of two noise vectors
            # does not contract)
            scale = max(math.sqrt(self.flow.norm_sq(u_star)
                                  + self.psi_norm(psi_star) ** 2), floor)
            du = math.sqrt(self.flow.norm_sq(u_star - u_it)) / scale
            dpsi = self.psi_norm(psi_star - psi_it) / scale
            u_it, psi_it = u_star, psi_star
            report.iterations += 1
            report.increments.append(max(du, dpsi))
            report.final_du, report.final_dpsi = du, dpsi
            if max(du, dpsi) <= p.fp_tol:
                report.converged = True
                break
        if not report.converged:
            raise RuntimeError(
                f"coupled fixed point stalled after {report.iterations} iterations "
                f"(last increment {report.increments[-1]:.3e})")
        return SystemState(u_it, psi_it, state.t + p.dt, state.n + 1), report


# --------------------------------------------------------------------------
# initial-data smoothing
# --------------------------------------------------------------------------


def smooth_initial_density(flow: FlowGrid, ops: ConfigOperators, psi0: np.ndarray,
                           dt: float, clip_level: float,
                           slack: float = 1.0e-8) -> Tuple[np.ndarray, SmoothingReport]:
    """Clip the raw density at ``clip_level`` and take one implicit
    unit-coefficient heat step in both variables.

    Guarantees, each checked and fatal on failure:
      * nonnegativity (the implicit operator is an M-matrix);
      * the weighted entropy does not increase;
      * the dissipation budget ``4 dt (fisher_x + fisher_q)`` of the output
        is bounded by the entropy of the input.
    """
    if dt <= 0.0:
        raise ValueError(f"smoothing step needs dt > 0, got {dt}")
    if clip_level <= 1.0:
        raise ValueError(f"clip level must exceed 1, got {clip_level}")
    psi0 = np.asarray(psi0, dtype=float)
    if psi0.min() < 0.0:
        raise ValueError("raw initial density must be nonnegative")
    g = ops.grid
    zeta0 = np.minimum(psi0, clip_level)

    h2 = flow.h * flow.h
    Kx = ((h2 / dt) * sp.identity(flow.n_c, format="csr")
          + _cell_neumann_stiffness(flow.N)).tocsr()
    eig = _QEig(ops)
    rhs = (h2 / dt) * zeta0 * ops.mass_diag[None, :]
    zeta1 = _kron_solve(Kx, h2, eig, rhs)

    m = ops.mass_diag
    ent0 = h2 * float((entropy_eval("F", np.maximum(psi0, 0.0))[0] @ m).sum())
    ent1 = h2 * float((entropy_eval("F", np.maximum(zeta1, 0.0))[0] @ m).sum())
    root = np.sqrt(np.maximum(zeta1, 0.0))
    # x-direction Fisher term: squared jumps across cell edges, q-weighted
    cube = root.reshape(flow.N, flow.N, g.n_nodes)
    fx = float(((np.diff(cube, axis=0) ** 2).sum(axis=(0, 1))
                + (np.diff(cube, axis=1) ** 2).sum(axis=(0, 1))) @ m)
    # q-direction Fisher term: weighted edge jumps, cell-summed
    dq = root[:, g.edges_b] - root[:, g.edges_a]
    fq = float(h2 * ((dq * dq) @ g.edge_w).sum()) if g.edge_w.size else 0.0
    fisher_budget = 4.0 * dt * (fx + fq)

    min_val = float(zeta1.min())
    mass_drift = abs(h2 * float((zeta1 @ m).sum()) - h2 * float((zeta0 @ m).sum()))
    scale = max(abs(ent0), 1.0)
    if min_val < -slack:
        raise ConstructionError(f"smoothed density dips to {min_val:.3e}")
    if ent1 > ent0 + slack * scale:
        raise ConstructionError(
            f"smoothing raised the entropy: {ent1:.6e} > {ent0:.6e}")
    if fisher_budget > ent0 + slack * scale:
        raise ConstructionError(
            f"dissipation budget {fisher_budget:.6e} exceeds entropy {ent0:.6e}")
    return zeta1, SmoothingReport(ent0, ent1, fisher_budget, min_val, mass_drift)


# --------------------------------------------------------------------------
# time-step schedule and checkpoints
# --------------------------------------------------------------------------


def dt_schedule(L: float, C0: float, horizon: float,
                floor: float = 1.0e-8) -> Tuple[float, int]:
    """Largest admissible step ``dt <= C0 / (L log L)`` dividing the horizon.

    Returns ``(dt, n_steps)`` with ``n_steps * dt == horizon`` exactly.
    Requires ``L > e`` so the rule is monotone (larger cutoff, smaller step).
    """
    if L <= math.e:
        raise ScheduleError(f"the step rule needs L > e (so log L > 1), got L={L}")
    if C0 <= 0.0 or horizon <= 0.0:
        raise ScheduleError("C0 and the horizon must be positive")
    dt_max = C0 / (L * math.log(L))
    n = max(1, math.ceil(horizon / dt_max - 1.0e-12))
    dt = horizon / n
    if dt < floor:
        raise ScheduleError(
            f"schedule for L={L} needs dt={dt:.3e} below the floor {floor:.1e}")
    return dt, n


_CHECKPOINT_KIND = "fene-coupled-state"
_CHECKPOINT_VERSION = 1


def save_checkpoint(path: str, state: SystemState, params: StepParams,
                    flow: FlowGrid, ops: ConfigOperators) -> None:
    """Bit-exact state snapshot plus enough metadata to refuse a mismatched
    grid on reload."""
    meta = {
        "kind": _CHECKPOINT_KIND,
        "version": _CHECKPOINT_VERSION,
        "t": state.t,
        "n": state.n,
        "flow": {"N": flow.N, "side": flow.side},
        "config": json.loads(grid_metadata_json(ops.grid)),
        "params": {
            "dt": params.dt, "nu": params.nu, "k": params.k,
            "lam": params.lam, "eps": params.eps,
            "L": params.cutoff.L, "delta": params.cutoff.delta,
        },
    }
    np.savez(path, u=state.u, psi=state.psi,
             meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8))


def load_checkpoint(path: str, flow: Optional[FlowGrid] = None,
                    ops: Optional[ConfigOperators] = None
                    ) -> Tuple[SystemState, dict]:
    """Restore a snapshot; verifies grid shapes when grids are supplied."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("kind") != _CHECKPOINT_KIND:
            raise ValueError(f"{path} is not a coupled-state checkpoint")
        u = data["u"].copy()
        psi = data["psi"].copy()
    if flow is not None and (meta["flow"]["N"] != flow.N
                             or meta["flow"]["side"] != flow.side):
        raise ValueError("checkpoint flow grid does not match the current grid")
    if ops is not None:
        grid = getattr(ops, "grid", ops)  # accept ConfigOperators or bare grid
        if json.loads(grid_metadata_json(grid)) != meta["config"]:
            raise ValueError("checkpoint configuration grid does not match")
    return SystemState(u=u, psi=psi, t=float(meta["t"]), n=int(meta["n"])), meta
