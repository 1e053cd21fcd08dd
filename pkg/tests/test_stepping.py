"""Coupled stepper: the equilibrium fixed point, mass conservation, the
discrete energy identities, the initial-data smoothing contract, the step
schedule and checkpointing."""

import math

import numpy as np
import pytest

from feneflow import (
    ChainGeometry,
    ConstructionError,
    CoupledStepper,
    CutoffParams,
    RouseMatrix,
    ScheduleError,
    StepParams,
    SystemState,
    assemble_fp_operators,
    build_config_grid,
    build_flow_grid,
    dt_schedule,
    entropy_eval,
    load_checkpoint,
    momentum_energy_residual,
    project_divergence_free,
    save_checkpoint,
    smooth_initial_density,
)
from feneflow.stepping import _cell_neumann_stiffness, _upwind_advection


@pytest.fixture(scope="module")
def small():
    """A deliberately small coupled system so every test is cheap."""
    flow = build_flow_grid(10)
    grid = build_config_grid(ChainGeometry(K=1, d=2, b=(4.0,)), N_r=12, N_theta=12)
    params = StepParams(dt=0.01, nu=1.0, k=1.0, lam=0.5, eps=0.1,
                        cutoff=CutoffParams(L=5.0, delta=1e-4),
                        rouse=RouseMatrix.for_chain(1))
    ops = assemble_fp_operators(grid, params.rouse, lam=params.lam, eps=params.eps)
    return flow, ops, params, CoupledStepper(flow, ops, params)


def equilibrium_state(flow, ops):
    return SystemState(u=np.zeros(flow.n_u + flow.n_v),
                       psi=np.ones((flow.n_c, ops.grid.n_nodes)), t=0.0, n=0)


def perturbed_state(flow, ops, rng, amp=0.3):
    u = project_divergence_free(flow, amp * rng.standard_normal(flow.n_u + flow.n_v))
    psi = 1.0 + amp * ops.grid.qx[None, :] / math.sqrt(ops.grid.b) \
        * (1.0 + 0.2 * rng.standard_normal(flow.n_c))[:, None]
    return SystemState(u=u, psi=psi, t=0.0, n=0)


# --------------------------------------------------------------------------
# fixed point and conservation
# --------------------------------------------------------------------------


def test_equilibrium_is_one_iteration_fixed_point(small):
    flow, ops, params, stepper = small
    state, report = stepper.coupled_step(equilibrium_state(flow, ops))
    assert report.converged and report.iterations == 1
    assert report.final_du <= 1e-12 and report.final_dpsi <= 1e-12
    assert np.abs(state.u).max() <= 1e-13
    assert np.abs(state.psi - 1.0).max() <= 1e-12
    assert state.n == 1 and state.t == pytest.approx(params.dt)


def test_equilibrium_stays_put_over_many_steps(small):
    flow, ops, _, stepper = small
    state = equilibrium_state(flow, ops)
    for _ in range(5):
        state, _ = stepper.coupled_step(state)
    assert np.abs(state.u).max() <= 1e-12
    assert np.abs(state.psi - 1.0).max() <= 1e-11


def test_density_equation_residual(small, rng):
    # summing the density solve over configuration nodes with unit weights
    # must reproduce the cell advection-diffusion equation for rho exactly
    flow, ops, params, stepper = small
    u = project_divergence_free(flow, rng.standard_normal(flow.n_u + flow.n_v))
    psi_prev = 1.0 + 0.4 * rng.random((flow.n_c, ops.grid.n_nodes))
    psi_new = stepper.fokker_planck_step(psi_prev, u, u)
    rho_prev = psi_prev @ ops.mass_diag
    rho_new = psi_new @ ops.mass_diag
    h2 = flow.h**2
    Kx = (h2 / params.dt) * np.eye(flow.n_c) + params.eps * stepper.Sx.toarray() \
        + _upwind_advection(flow, u).toarray()
    residual = Kx @ rho_new - (h2 / params.dt) * rho_prev
    assert np.abs(residual).max() <= 1e-10


def test_uniform_density_is_transparent_to_flow(small, rng):
    # rho == 1 solves its own equation for any divergence-free transport
    flow, ops, _, stepper = small
    u = project_divergence_free(flow, rng.standard_normal(flow.n_u + flow.n_v))
    psi_new = stepper.fokker_planck_step(np.ones((flow.n_c, ops.grid.n_nodes)), u, u)
    rho = psi_new @ ops.mass_diag
    assert np.abs(rho - 1.0).max() <= 1e-8


def test_total_mass_conserved(small, rng):
    flow, ops, _, stepper = small
    state = perturbed_state(flow, ops, rng)
    total0 = flow.h**2 * float((state.psi @ ops.mass_diag).sum())
    for _ in range(3):
        state, _ = stepper.coupled_step(state)
    total = flow.h**2 * float((state.psi @ ops.mass_diag).sum())
    assert abs(total - total0) <= 1e-10 * abs(total0)


def test_density_stays_essentially_nonnegative(small, rng):
    flow, ops, _, stepper = small
    state = perturbed_state(flow, ops, rng, amp=0.5)
    state.psi = np.clip(state.psi, 0.0, None)
    for _ in range(3):
        state, _ = stepper.coupled_step(state)
    assert state.psi.min() >= -1e-8


# --------------------------------------------------------------------------
# energy structure
# --------------------------------------------------------------------------


def free_energy_of(flow, ops, state, k, kind, L=None, delta=None):
    ent_nodes = entropy_eval(kind, np.maximum(state.psi, 0.0), L=L, delta=delta)[0]
    ent = flow.h**2 * float((ent_nodes @ ops.mass_diag).sum())
    return flow.norm_sq(state.u) + 2.0 * k * ent


def test_free_energy_monotone_regularized(small, rng):
    # || u ||^2 + 2 k int M F^L_delta(psi) never increases without forcing
    flow, ops, params, stepper = small
    state = perturbed_state(flow, ops, rng, amp=0.5)
    state.psi = np.clip(state.psi, 0.0, None)
    prev = free_energy_of(flow, ops, state, params.k, "FLdelta",
                          L=params.cutoff.L, delta=params.cutoff.delta)
    for _ in range(6):
        state, _ = stepper.coupled_step(state)
        cur = free_energy_of(flow, ops, state, params.k, "FLdelta",
                             L=params.cutoff.L, delta=params.cutoff.delta)
        assert cur <= prev * (1.0 + 1e-12) + 1e-12
        prev = cur


def test_free_energy_monotone_unregularized_in_the_bulk(small, rng):
    # when the density stays inside (delta, L) the plain-entropy functional
    # decreases as well (both entropies agree there)
    flow, ops, params, stepper = small
    state = perturbed_state(flow, ops, rng, amp=0.3)
    prev = free_energy_of(flow, ops, state, params.k, "F")
    for _ in range(6):
        state, _ = stepper.coupled_step(state)
        assert state.psi.min() > params.cutoff.delta
        assert state.psi.max() < params.cutoff.L
        cur = free_energy_of(flow, ops, state, params.k, "F")
        assert cur <= prev * (1.0 + 1e-12) + 1e-12
        prev = cur


def test_momentum_energy_identity(small, rng):
    flow, ops, params, stepper = small
    state = perturbed_state(flow, ops, rng, amp=0.4)
    u_new = stepper.momentum_step(state.u, state.psi)
    C_hat = ops.stress_matrix(state.psi)
    sigma = flow.cell_velocity_gradient(u_new)
    pairing = flow.h**2 * float(np.sum(C_hat * sigma))
    res = momentum_energy_residual(flow, state.u, u_new, pairing,
                                   params.dt, params.nu, params.k)
    assert res <= 1e-10 * max(1.0, flow.norm_sq(state.u))


def test_stress_force_linear_in_k(small, rng):
    flow, ops, params, stepper = small
    import dataclasses
    state = perturbed_state(flow, ops, rng, amp=0.4)
    base = stepper.momentum_step(state.u, state.psi)
    free = CoupledStepper(flow, ops, dataclasses.replace(params, k=0.0)) \
        .momentum_step(state.u, state.psi)
    double = CoupledStepper(flow, ops, dataclasses.replace(params, k=2.0)) \
        .momentum_step(state.u, state.psi)
    np.testing.assert_allclose(double - free, 2.0 * (base - free), atol=1e-12)


def test_beta_saturation_inactive_for_moderate_data(small, rng):
    # the one-sided cut-off never engages when the density stays below L
    flow, ops, params, stepper = small
    state = perturbed_state(flow, ops, rng, amp=0.3)
    new_state, _ = stepper.coupled_step(state)
    assert new_state.psi.max() < params.cutoff.L


# --------------------------------------------------------------------------
# fixed-point robustness
# --------------------------------------------------------------------------


def test_non_finite_input_is_detected(small):
    flow, ops, _, stepper = small
    psi = np.ones((flow.n_c, ops.grid.n_nodes))
    psi[0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        stepper.fokker_planck_step(psi, np.zeros(flow.n_u + flow.n_v),
                                   np.zeros(flow.n_u + flow.n_v))


def test_fixed_point_stall_raises(small, rng):
    import dataclasses
    flow, ops, params, _ = small
    impatient = dataclasses.replace(params, fp_max_iter=1, fp_tol=1e-16)
    stepper = CoupledStepper(flow, ops, impatient)
    with pytest.raises(RuntimeError, match="stalled"):
        stepper.coupled_step(perturbed_state(flow, ops, rng, amp=0.5))


def test_step_params_validation():
    good = dict(dt=0.01, nu=1.0, k=1.0, lam=0.5, eps=0.1,
                cutoff=CutoffParams(L=5.0, delta=1e-4),
                rouse=RouseMatrix.for_chain(1))
    StepParams(**good)
    for key, bad in [("dt", 0.0), ("nu", 0.0), ("k", -1.0), ("lam", 0.0), ("eps", -0.1)]:
        with pytest.raises(ValueError):
            StepParams(**{**good, key: bad})


def test_delta_schedule_validation_and_lookup():
    base = dict(dt=0.01, nu=1.0, k=1.0, lam=0.5, eps=0.1,
                cutoff=CutoffParams(L=5.0, delta=1e-4),
                rouse=RouseMatrix.for_chain(1))
    p = StepParams(**base, delta_schedule=(1e-2, 1e-3, 1e-3))
    assert p.delta_at(1) == 1e-2
    assert p.delta_at(2) == 1e-3
    assert p.delta_at(50) == 1e-3   # clamps at the last entry
    assert StepParams(**base).delta_at(7) == 1e-4  # no schedule: fixed delta
    with pytest.raises(ValueError):
        StepParams(**base, delta_schedule=(1e-3, 1e-2))  # must not increase
    with pytest.raises(ValueError):
        StepParams(**base, delta_schedule=(1.5,))


# --------------------------------------------------------------------------
# initial-data smoothing
# --------------------------------------------------------------------------


def test_smoothing_contract(small, rng):
    flow, ops, _, _ = small
    psi0 = 1.0 + 0.8 * rng.random((flow.n_c, ops.grid.n_nodes))
    zeta, report = smooth_initial_density(flow, ops, psi0, dt=0.01, clip_level=5.0)
    assert report.min_value >= -1e-8
    assert report.entropy_after <= report.entropy_before + 1e-8
    assert report.fisher_budget <= report.entropy_before + 1e-8
    assert report.mass_drift <= 1e-10
    assert zeta.shape == psi0.shape


def test_smoothing_clips_at_the_level(small):
    flow, ops, _, _ = small
    psi0 = np.ones((flow.n_c, ops.grid.n_nodes))
    psi0[:, 0] = 100.0   # a spike far above the clip level
    zeta, _ = smooth_initial_density(flow, ops, psi0, dt=0.01, clip_level=5.0)
    assert zeta.max() <= 5.0 + 1e-12


def test_smoothing_equilibrium_passthrough(small):
    flow, ops, _, _ = small
    psi0 = np.ones((flow.n_c, ops.grid.n_nodes))
    zeta, report = smooth_initial_density(flow, ops, psi0, dt=0.01, clip_level=5.0)
    np.testing.assert_allclose(zeta, 1.0, atol=1e-11)
    assert report.fisher_budget <= 1e-10


def test_smoothing_rejects_bad_input(small):
    flow, ops, _, _ = small
    ones = np.ones((flow.n_c, ops.grid.n_nodes))
    with pytest.raises(ValueError):
        smooth_initial_density(flow, ops, -ones, dt=0.01, clip_level=5.0)
    with pytest.raises(ValueError):
        smooth_initial_density(flow, ops, ones, dt=0.0, clip_level=5.0)
    with pytest.raises(ValueError):
        smooth_initial_density(flow, ops, ones, dt=0.01, clip_level=0.5)


def test_smoothing_failure_is_construction_error():
    assert issubclass(ConstructionError, RuntimeError)


# --------------------------------------------------------------------------
# step schedule
# --------------------------------------------------------------------------


def test_dt_schedule_exact_division():
    dt, n = dt_schedule(L=math.e**2, C0=2.0 * math.e**2, horizon=3.0)
    assert dt == 1.0 and n == 3


def test_dt_schedule_frozen_case():
    # dt_max = 1 / (100 log 100) = 0.002171472409516259 -> 461 steps over [0, 1]
    dt, n = dt_schedule(L=100.0, C0=1.0, horizon=1.0)
    assert n == 461
    assert dt == pytest.approx(1.0 / 461.0, abs=1e-18)
    assert dt <= 0.002171472409516259
    assert n * dt == 1.0


def test_dt_schedule_monotone_in_cutoff():
    dts = [dt_schedule(L, 1.0, 1.0)[0] for L in (3.0, 10.0, 100.0, 1000.0)]
    assert all(a >= b for a, b in zip(dts, dts[1:]))


def test_dt_schedule_errors():
    with pytest.raises(ScheduleError, match="needs L > e"):
        dt_schedule(L=2.0, C0=1.0, horizon=1.0)
    with pytest.raises(ScheduleError):
        dt_schedule(L=100.0, C0=-1.0, horizon=1.0)
    with pytest.raises(ScheduleError, match="below the floor"):
        dt_schedule(L=100.0, C0=1e-12, horizon=1.0)


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


def test_checkpoint_round_trip(small, rng, tmp_path):
    flow, ops, params, stepper = small
    state = perturbed_state(flow, ops, rng)
    state, _ = stepper.coupled_step(state)
    path = str(tmp_path / "state.npz")
    save_checkpoint(path, state, params, flow, ops)
    restored, meta = load_checkpoint(path, flow=flow, ops=ops)
    assert np.array_equal(restored.u, state.u)          # bit-exact
    assert np.array_equal(restored.psi, state.psi)
    assert restored.t == state.t and restored.n == state.n
    assert meta["params"]["dt"] == params.dt
    assert meta["config"]["n_nodes"] == ops.grid.n_nodes


def test_checkpoint_grid_mismatch(small, rng, tmp_path):
    flow, ops, params, _ = small
    state = equilibrium_state(flow, ops)
    path = str(tmp_path / "state.npz")
    save_checkpoint(path, state, params, flow, ops)
    other = build_flow_grid(12)
    with pytest.raises(ValueError, match="does not match"):
        load_checkpoint(path, flow=other)


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = str(tmp_path / "other.npz")
    np.savez(path, u=np.zeros(3), psi=np.zeros((2, 2)),
             meta=np.frombuffer(b'{"kind": "something"}', dtype=np.uint8))
    with pytest.raises(ValueError, match="checkpoint"):
        load_checkpoint(path)


def test_cell_stiffness_annihilates_constants():
    S = _cell_neumann_stiffness(8)
    assert np.abs(S @ np.ones(64)).max() == 0.0
    assert abs(S - S.T).max() == 0.0
