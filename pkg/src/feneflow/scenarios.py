"""Run configurations, the scenario library, and the end-to-end run loop.

A run is: parse/validate a configuration, build grids and operators, smooth
the raw initial data, march the coupled stepper over the horizon while
accumulating the energy ledger, and evaluate the inequality verdicts.  All
of it is deterministic for a fixed configuration and seed, so ledgers are
byte-identical across repeat runs on one platform.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import diagnostics as dg
from .configspace import ConfigGrid, ConfigOperators, assemble_fp_operators, build_config_grid
from .flowspace import FlowGrid, build_flow_grid, dual_norm_sq, poincare_constant, smooth_initial_velocity
from .kinetic import ChainGeometry, CutoffParams, RouseMatrix, bakry_emery_kappa
from .stepping import (
    CoupledStepper,
    SmoothingReport,
    StepParams,
    SystemState,
    dt_schedule,
    save_checkpoint,
    smooth_initial_density,
)

__all__ = [
    "SCENARIOS",
    "RunConfig",
    "ConfigError",
    "parse_config",
    "emit_config",
    "RunResult",
    "run_scenario",
    "emit_ledger",
]

SCENARIOS = ("equilibrium", "decay", "couette", "forced")


class ConfigError(ValueError):
    """Invalid run configuration; ``violations`` lists every failed rule."""

    def __init__(self, violations: List[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass
class RunConfig:
    """Everything a run needs, JSON keys = field names.

    Exactly one of ``dt`` / ``C0`` is required (both present is allowed and
    cross-checked: an explicit ``dt`` above ``C0 / (L log L)`` warns, and is
    rejected under strict validation).
    """

    scenario: str = "decay"
    # chain geometry
    K: int = 1
    d: int = 2
    b: float = 4.0
    # physics
    nu: float = 1.0
    k: float = 1.0
    lam: float = 0.5
    eps: float = 0.1
    rouse: Optional[List[List[float]]] = None
    # scheme
    T: float = 2.0
    dt: Optional[float] = 0.01
    C0: Optional[float] = None
    L: float = 5.0
    delta: float = 1.0e-4
    clip_level: Optional[float] = None    # smoothing clip; defaults to L
    N_x: int = 20
    N_r: int = 20
    N_theta: int = 20
    side: float = 1.0
    fp_tol: float = 1.0e-12
    fp_max_iter: int = 80
    record_every: int = 1
    seed: int = 0
    # scenario parameters
    amplitude: float = 0.1            # decay: density perturbation a in 1 + a q_x / sqrt(b)
    stream_amplitude: float = 0.25    # decay: stream-function scale
    force_amplitude: float = 1.0      # couette / forced: body-force scale

    def validate(self, strict: bool = False) -> List[str]:
        v: List[str] = []
        if self.scenario not in SCENARIOS:
            v.append(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.K != 1:
            v.append("only single-spring chains (K = 1) are wired end to end")
        if self.d != 2:
            v.append("the coupled run needs planar connectors (d = 2)")
        if self.b <= 2.0:
            v.append(f"b = {self.b}: gamma = b/2 must exceed 1 for finite entropy moments")
        for name in ("nu", "lam", "eps", "T", "side"):
            if not (getattr(self, name) > 0.0):
                v.append(f"{name} must be positive, got {getattr(self, name)}")
        if self.k < 0.0:
            v.append(f"k must be nonnegative, got {self.k}")
        if not (self.L > 1.0):
            v.append(f"cutoff level must exceed 1, got L = {self.L}")
        if not (0.0 < self.delta < 1.0):
            v.append(f"regularization level must lie in (0, 1), got delta = {self.delta}")
        if self.delta >= self.L:
            v.append(f"need delta < L, got {self.delta} >= {self.L}")
        if self.clip_level is not None and self.clip_level <= 1.0:
            v.append(f"clip_level must exceed 1, got {self.clip_level}")
        if self.dt is None and self.C0 is None:
            v.append("one of dt / C0 is required")
        if self.dt is not None and self.dt <= 0.0:
            v.append(f"dt must be positive, got {self.dt}")
        if self.C0 is not None and self.C0 <= 0.0:
            v.append(f"C0 must be positive, got {self.C0}")
        if self.dt is not None and self.C0 is not None and self.L > 1.0:
            cap = self.C0 / (self.L * math.log(self.L))
            if self.dt > cap * (1.0 + 1.0e-12):
                msg = (f"dt = {self.dt} exceeds the step rule C0/(L log L) = {cap:.6g}")
                if strict:
                    v.append(msg)
                else:
                    warnings.warn(msg, stacklevel=2)
        if self.N_x < 4:
            v.append(f"N_x must be at least 4, got {self.N_x}")
        if self.N_r < 8 or self.N_theta < 8:
            v.append("configuration grid needs N_r >= 8 and N_theta >= 8")
        if self.record_every < 1:
            v.append(f"record_every must be >= 1, got {self.record_every}")
        if self.rouse is not None:
            arr = np.asarray(self.rouse, dtype=float)
            if arr.shape != (self.K, self.K):
                v.append(f"rouse matrix must be {self.K}x{self.K}, got {arr.shape}")
        return v


def parse_config(text: str, strict: bool = False) -> RunConfig:
    """JSON text -> validated RunConfig; unknown keys and every violated
    invariant are reported together."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"configuration is not valid JSON: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["configuration must be a JSON object"])
    known = set(RunConfig.__dataclass_fields__)
    unknown = sorted(set(raw) - known)
    violations = [f"unknown key {k!r}" for k in unknown]
    cfg = RunConfig(**{k: v for k, v in raw.items() if k in known})
    violations += cfg.validate(strict=strict)
    if violations:
        raise ConfigError(violations)
    return cfg


def emit_config(cfg: RunConfig) -> str:
    return json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# scenario library
# --------------------------------------------------------------------------


def _decay_velocity(cfg: RunConfig, fg: FlowGrid):
    """Curl of ``a [g(x) g(y)]^2`` with ``g(s) = 4 s (1 - s)`` on the unit
    square (rescaled to the configured side): divergence-free, vanishing to
    second order at the walls."""
    a, S = cfg.stream_amplitude, cfg.side

    def g(s):
        return 4.0 * s * (1.0 - s)

    def gp(s):
        return 4.0 - 8.0 * s

    def ux(x, y):
        return a * g(x / S) ** 2 * 2.0 * g(y / S) * gp(y / S) / S

    def uy(x, y):
        return -a * 2.0 * g(x / S) * gp(x / S) * g(y / S) ** 2 / S

    return fg.sample_faces(ux, uy)


def _scenario_data(cfg: RunConfig, fg: FlowGrid, grid: ConfigGrid, rng: np.random.Generator
                   ) -> Tuple[np.ndarray, np.ndarray, Optional[Callable[[float], np.ndarray]]]:
    """Raw ``(u0, psi0, forcing)`` for the configured scenario.

    Every density is mass-one at each cell; equilibrium and decay carry no
    forcing.
    """
    n_uv = fg.n_u + fg.n_v
    ones = np.ones((fg.n_c, grid.n_nodes))
    if cfg.scenario == "equilibrium":
        return np.zeros(n_uv), ones, None
    if cfg.scenario == "decay":
        psi0 = 1.0 + cfg.amplitude * grid.qx / math.sqrt(cfg.b)
        return _decay_velocity(cfg, fg), ones * psi0[None, :], None
    if cfg.scenario == "couette":
        # steady body force along x, varying across the channel: a shear
        # band with the no-slip walls retained
        amp, S = cfg.force_amplitude, cfg.side
        fvec = fg.sample_faces(lambda x, y: amp * np.sin(2.0 * np.pi * y / S),
                               lambda x, y: np.zeros_like(x))
        return np.zeros(n_uv), ones, lambda t: fvec
    if cfg.scenario == "forced":
        amp, S = cfg.force_amplitude, cfg.side
        ph1, ph2 = rng.uniform(0.0, 2.0 * math.pi, size=2)
        base1 = fg.sample_faces(lambda x, y: amp * np.sin(2.0 * np.pi * y / S + ph1),
                                lambda x, y: np.zeros_like(x))
        base2 = fg.sample_faces(lambda x, y: np.zeros_like(x),
                                lambda x, y: amp * np.sin(2.0 * np.pi * x / S + ph2))
        omega = 2.0 * math.pi / cfg.T
        return np.zeros(n_uv), ones, \
            lambda t: math.cos(omega * t) * base1 + math.sin(omega * t) * base2
    raise ConfigError([f"unknown scenario {cfg.scenario!r}"])


# --------------------------------------------------------------------------
# the run loop
# --------------------------------------------------------------------------


@dataclass
class RunResult:
    config: RunConfig
    state: SystemState
    ledger: dg.EnergyLedger
    decay: Optional[dg.DecayVerdict]
    exit_status: int
    verdicts: Dict[str, bool]
    gamma0: float
    poincare: float
    kappa: float
    B2: float
    initial_budget: float
    decay_times: np.ndarray
    decay_energies: np.ndarray
    smoothing: SmoothingReport
    dt: float
    n_steps: int


def _resolve_dt(cfg: RunConfig) -> Tuple[float, int]:
    if cfg.dt is not None:
        n = max(1, round(cfg.T / cfg.dt))
        if abs(n * cfg.dt - cfg.T) > 1.0e-9 * max(cfg.T, 1.0):
            warnings.warn(f"dt = {cfg.dt} does not divide T = {cfg.T}; "
                          f"running {n} steps to t = {n * cfg.dt:.6g}", stacklevel=2)
        return cfg.dt, n
    return dt_schedule(cfg.L, cfg.C0, cfg.T)


def run_scenario(cfg: RunConfig, out_dir: Optional[str] = None,
                 progress: Optional[Callable[[int, int], None]] = None) -> RunResult:
    """Execute one configured run end to end.

    Returns the final state, the complete ledger, the decay verdict (decay
    scenario only) and an exit status: 0 when every applicable verdict
    holds, 2 otherwise.  Stepper failures propagate with the step index.
    """
    violations = cfg.validate()
    if violations:
        raise ConfigError(violations)
    dt, n_steps = _resolve_dt(cfg)

    geometry = ChainGeometry(K=cfg.K, d=cfg.d, b=(cfg.b,) * cfg.K)
    rouse = RouseMatrix(tuple(tuple(row) for row in cfg.rouse)) if cfg.rouse \
        else RouseMatrix.for_chain(cfg.K)
    grid = build_config_grid(geometry, N_r=cfg.N_r, N_theta=cfg.N_theta)
    ops = assemble_fp_operators(grid, rouse, lam=cfg.lam, eps=cfg.eps)
    fg = build_flow_grid(cfg.N_x, side=cfg.side)
    params = StepParams(dt=dt, nu=cfg.nu, k=cfg.k, lam=cfg.lam, eps=cfg.eps,
                        cutoff=CutoffParams(delta=cfg.delta, L=cfg.L),
                        rouse=rouse, fp_tol=cfg.fp_tol, fp_max_iter=cfg.fp_max_iter)
    stepper = CoupledStepper(fg, ops, params)
    rng = np.random.default_rng(cfg.seed)

    u0_raw, psi0_raw, forcing = _scenario_data(cfg, fg, grid, rng)

    # data smoothing: velocity through one implicit constrained Helmholtz
    # step, density through clipping plus one unit-coefficient heat step
    u0 = smooth_initial_velocity(fg, u0_raw, dt)
    clip = cfg.clip_level if cfg.clip_level is not None else cfg.L
    psi0, smooth_rep = smooth_initial_density(fg, ops, psi0_raw, dt, clip)

    cp, _ = poincare_constant(cfg.N_x, cfg.side)
    kappa, _ = bakry_emery_kappa(geometry)
    g0 = dg.gamma0(cfg.nu, cp, kappa, rouse.a0, cfg.lam)

    # data-only majorant: raw velocity, full-horizon forcing, raw entropy
    ent_raw = dg.relative_entropy(fg, grid, psi0_raw)
    f_samples: List[Optional[np.ndarray]] = []
    f_dual_sum = 0.0
    for j in range(1, n_steps + 1):
        fj = forcing((j - 0.5) * dt) if forcing is not None else None
        f_samples.append(fj)
        if fj is not None:
            f_dual_sum += dt * dual_norm_sq(fg, fj)
    B2 = fg.norm_sq(u0_raw) + f_dual_sum / cfg.nu + 2.0 * cfg.k * ent_raw
    initial_budget = fg.norm_sq(u0_raw) + 2.0 * cfg.k * ent_raw

    state = SystemState(u=u0, psi=psi0, t=0.0, n=0)
    ledger = dg.EnergyLedger()
    visc_hist = fx_hist = fq_hist = 0.0
    times = [0.0]
    energies = [dg.decay_energy(fg, grid, state.u, state.psi, cfg.k)]

    def record(fp_iters: int) -> None:
        ent = dg.relative_entropy(fg, grid, state.psi)
        fx = dg.fisher_x(fg, grid, state.psi)
        fq = dg.fisher_q(fg, grid, state.psi)
        rho = state.psi @ grid.w
        ledger.append(
            t=state.t,
            kinetic=0.5 * fg.norm_sq(state.u),
            entropy=ent,
            fisher_x=fx,
            fisher_q=fq,
            free_energy=0.5 * fg.norm_sq(state.u) + cfg.k * ent,
            energy_lhs=(fg.norm_sq(state.u) + cfg.nu * visc_hist + cfg.k * ent
                        + cfg.k * cfg.eps * fx_hist
                        + (rouse.a0 * cfg.k / (4.0 * cfg.lam)) * fq_hist),
            B2=B2,
            rho_min=float(rho.min()),
            rho_max=float(rho.max()),
            psi_min=float(state.psi.min()),
            fp_iters=fp_iters,
            beta_saturation_fraction=float((state.psi > cfg.L).mean()),
        )

    record(0)
    for j in range(1, n_steps + 1):
        try:
            state, rep = stepper.coupled_step(state, f_samples[j - 1])
        except Exception as exc:
            raise RuntimeError(f"step {j}/{n_steps} failed: {exc}") from exc
        visc_hist += dt * fg.grad_norm_sq(state.u)
        fx_hist += dt * dg.fisher_x(fg, grid, state.psi)
        fq_hist += dt * dg.fisher_q(fg, grid, state.psi)
        times.append(state.t)
        energies.append(dg.decay_energy(fg, grid, state.u, state.psi, cfg.k))
        if j % cfg.record_every == 0 or j == n_steps:
            record(rep.iterations)
        if progress is not None:
            progress(j, n_steps)

    # ---- verdicts ----------------------------------------------------------
    verdicts: Dict[str, bool] = {}
    ok_energy, _ = dg.energy_inequality_check(ledger)
    verdicts["energy_inequality"] = ok_energy
    verdicts["mass_conservation"] = bool(
        max(abs(ledger.column("rho_min") - 1.0).max(),
            abs(ledger.column("rho_max") - 1.0).max()) <= 1.0e-8)
    verdicts["nonnegativity"] = bool(ledger.column("psi_min").min() >= -1.0e-8)
    decay = None
    if cfg.scenario == "decay":
        decay = dg.decay_verdict(times, energies, initial_budget, g0)
        verdicts["exponential_decay"] = decay.satisfied

    exit_status = 0 if all(verdicts.values()) else 2
    result = RunResult(
        config=cfg, state=state, ledger=ledger, decay=decay,
        exit_status=exit_status, verdicts=verdicts, gamma0=g0, poincare=cp,
        kappa=kappa, B2=B2, initial_budget=initial_budget,
        decay_times=np.asarray(times), decay_energies=np.asarray(energies),
        smoothing=smooth_rep, dt=dt, n_steps=n_steps,
    )
    if out_dir is not None:
        _write_outputs(result, out_dir, fg, ops, params)
    return result


def emit_ledger(ledger: dg.EnergyLedger, path: str) -> None:
    ledger.write(path)


def _write_outputs(result: RunResult, out_dir: str, fg: FlowGrid,
                   ops: ConfigOperators, params: StepParams) -> None:
    import os

    os.makedirs(out_dir, exist_ok=True)
    emit_ledger(result.ledger, os.path.join(out_dir, "ledger.tsv"))
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        fh.write(emit_config(result.config))
    save_checkpoint(os.path.join(out_dir, "final_state.npz"),
                    result.state, params, fg, ops)
    summary = {
        "exit_status": result.exit_status,
        "verdicts": result.verdicts,
        "gamma0": result.gamma0,
        "poincare": result.poincare,
        "kappa": result.kappa,
        "B2": result.B2,
        "initial_budget": result.initial_budget,
        "dt": result.dt,
        "n_steps": result.n_steps,
        "final_time": result.state.t,
        "final_energy": float(result.decay_energies[-1]),
        "smoothing": {
            "entropy_before": result.smoothing.entropy_before,
            "entropy_after": result.smoothing.entropy_after,
            "fisher_budget": result.smoothing.fisher_budget,
        },
    }
    if result.decay is not None:
        summary["decay"] = {
            "final_energy": result.decay.final_energy,
            "bound_at_final_time": result.decay.bound_at_final_time,
            "gamma0": result.decay.gamma0,
            "fitted_rate": result.decay.fitted_rate,
            "satisfied": result.decay.satisfied,
        }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
