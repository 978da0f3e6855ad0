"""Experiment driver: the four reference test cases as subcommands.

Every run writes a ``run_meta.txt`` with the full configuration, so any
output can be reproduced bit-identically. Exit code is nonzero when the
nonlinear solver fails to converge or a bounds audit detects NaNs.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
import warnings
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__, diagnostics as diag, model
from .dgspace import DGSpace
from .ldg_ops import DiffusionTensor, assemble_core
from .mesh import Rectangle, TimeGrid, build_structured_mesh
from .model import InitialData, ProblemCoefficients
from .solver import BackwardEulerSolver, NewtonDivergenceError, SolverConfig


@dataclass
class RunConfig:
    """Discretization and solver parameters of one experiment run."""

    testcase: str = ""
    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0
    nx: int = 4
    ny: int = 4
    degree: int = 2
    tau: float = 1e-3
    final_time: float = 0.05
    epsilon: float = 0.0
    eta0: float = 10.0
    gamma_F: float = 0.5
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    outdir: str = "out"
    seed: int = 0
    tau_rule: bool = False  # tau = min(1e-2, h^(degree+1)) for wave sweeps

    @property
    def domain(self) -> Rectangle:
        return Rectangle(self.x0, self.x1, self.y0, self.y1)

    def solver_config(self, check_tau: bool = True) -> SolverConfig:
        return SolverConfig(
            epsilon=self.epsilon,
            tol=self.newton_tol,
            max_iterations=self.newton_max_iter,
            check_tau_stability=check_tau,
        )

    def resolved_tau(self, h: float) -> float:
        if self.tau_rule:
            return min(1e-2, h ** (self.degree + 1))
        return self.tau

    def meta_lines(self) -> list[str]:
        lines = [f"version = {__version__}"]
        for f in dc_fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return lines


def load_config_file(path: str) -> dict:
    """Flat ``key = value`` file; '#' starts a comment."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def _apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    for key, val in overrides.items():
        if not hasattr(cfg, key):
            raise ValueError(f"unknown config key {key!r}")
        cur = getattr(cfg, key)
        if isinstance(cur, bool):
            setattr(cfg, key, str(val).lower() in ("1", "true", "yes"))
        elif isinstance(cur, int):
            setattr(cfg, key, int(val))
        elif isinstance(cur, float):
            setattr(cfg, key, float(val))
        else:
            setattr(cfg, key, str(val))
    return cfg


def write_meta(outdir: Path, cfg: RunConfig, extra: Optional[dict] = None):
    lines = cfg.meta_lines()
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    (outdir / "run_meta.txt").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# shared run machinery


@dataclass
class TransientResult:
    state: object
    trace: diag.EntropyTrace
    trajectory: list
    reports: list
    bounds_clean: bool
    q_overshoot_time: Optional[float]
    snapshots: dict


def run_transient(
    cfg: RunConfig,
    coeffs: ProblemCoefficients,
    initial: InitialData,
    snapshot_times: tuple = (),
    record_trace: bool = True,
    check_tau: bool = True,
    stop_when: Optional[Callable] = None,
) -> TransientResult:
    mesh = build_structured_mesh(cfg.domain, cfg.nx, cfg.ny)
    space = DGSpace(mesh, cfg.degree)
    mats = assemble_core(mesh, space, coeffs.D, eta0=cfg.eta0, gamma_F=cfg.gamma_F)
    solver = BackwardEulerSolver(mats, coeffs, cfg.solver_config(check_tau))
    state = solver.initialize(initial)
    tau = cfg.resolved_tau(mesh.h_max())
    grid = TimeGrid.with_step(cfg.final_time, tau)
    area = cfg.domain.area

    trace = diag.EntropyTrace()
    trajectory = []
    if record_trace and not coeffs.has_sources:
        Sp0, Sq0 = diag.initial_entropy_integrals(initial, coeffs, space)
        trace.times.append(0.0)
        trace.S_p.append(Sp0)
        trace.S_q.append(Sq0)
        trace.sigma_p_norm2.append(float(state.Sigma_p.coef @ state.Sigma_p.coef))
        trace.sigma_q_norm2.append(float(state.Sigma_q.coef @ state.Sigma_q.coef))
        trace.jump_p.append(float(state.W_p.coef @ (mats.J @ state.W_p.coef)))
        trace.jump_q.append(float(state.W_q.coef @ (mats.J @ state.W_q.coef)))
        trace.dg_p.append(0.0)
        trace.dg_q.append(0.0)

    mean_p, max_p, mean_q, max_q = diag.mean_and_max(state, coeffs, area)
    trajectory.append(
        {"step": 0, "t": 0.0, "mean_p": mean_p, "max_p": max_p,
         "mean_q": mean_q, "max_q": max_q}
    )

    snapshots = {}
    remaining = sorted(snapshot_times)
    bounds_clean = True
    q_overshoot_time = None
    reports = []
    for tau_n in grid.steps:
        state, rep = solver.advance(state, float(tau_n))
        reports.append(rep)
        if record_trace and not coeffs.has_sources:
            diag.record_entropy(trace, state, coeffs, mats, cfg.epsilon)
        audit = diag.bounds_audit(state, coeffs)
        bounds_clean = bounds_clean and audit.clean
        if audit.q_exceeds_equilibrium and q_overshoot_time is None:
            q_overshoot_time = state.t
        mean_p, max_p, mean_q, max_q = diag.mean_and_max(state, coeffs, area)
        trajectory.append(
            {"step": state.step_index, "t": state.t, "mean_p": mean_p,
             "max_p": max_p, "mean_q": mean_q, "max_q": max_q}
        )
        while remaining and state.t >= remaining[0] - 0.5 * float(tau_n):
            snapshots[remaining.pop(0)] = state
        if stop_when is not None and stop_when(state, trajectory):
            break
    return TransientResult(
        state=state,
        trace=trace,
        trajectory=trajectory,
        reports=reports,
        bounds_clean=bounds_clean,
        q_overshoot_time=q_overshoot_time,
        snapshots=snapshots,
    )


def _sweep_record(cfg, coeffs, initial, exact_p, exact_q, grad_p, grad_q):
    """One convergence run: solve to T and measure all four errors."""
    mesh = build_structured_mesh(cfg.domain, cfg.nx, cfg.ny)
    space = DGSpace(mesh, cfg.degree)
    mats = assemble_core(mesh, space, coeffs.D, eta0=cfg.eta0, gamma_F=cfg.gamma_F)
    solver = BackwardEulerSolver(mats, coeffs, cfg.solver_config(check_tau=False))
    state = solver.initialize(initial)
    h = mesh.h_max()
    tau = cfg.resolved_tau(h)
    grid = TimeGrid.with_step(cfg.final_time, tau)
    state, reports = solver.run(state, grid)
    T = cfg.final_time
    Ep = coeffs.E_p
    Eq = coeffs.E_q
    rec = diag.ErrorRecord(h=h, degree=cfg.degree, tau=tau)
    rec.E_p = diag.primal_error(state.W_p, lambda x: exact_p(x, T), lambda w: model.u_p(w, Ep))
    rec.E_q = diag.primal_error(state.W_q, lambda x: exact_q(x, T), lambda w: model.u_q(w, Eq))
    rec.E_sigp = diag.flux_error(state.Sigma_p, lambda x: grad_p(x, T))
    rec.E_sigq = diag.flux_error(state.Sigma_q, lambda x: grad_q(x, T))
    return rec, reports


# ---------------------------------------------------------------------------
# test case 1: manufactured-solution convergence


def run_testcase1(cfg: RunConfig, sweep: str = "h",
                  mesh_sizes=(4, 8, 16, 32), degrees=(1, 2, 3, 4, 5)) -> list:
    """Space-convergence study with the linear-in-time manufactured solution.

    ``sweep='h'`` refines the mesh at fixed degree; ``sweep='p'`` raises the
    degree on the coarsest mesh.
    """
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    case = model.make_separable_linear_case(DiffusionTensor.isotropic(1.0))
    records = []
    if sweep == "h":
        for nx in mesh_sizes:
            c = _clone(cfg, nx=nx, ny=nx)
            rec, _ = _sweep_record(
                c, case.coeffs, case.initial,
                case.exact_p, case.exact_q, case.exact_grad_p, case.exact_grad_q,
            )
            records.append(rec)
        diag.write_errors_csv(outdir / "errors.csv", records)
    else:
        rows = []
        for ell in degrees:
            c = _clone(cfg, degree=ell)
            rec, _ = _sweep_record(
                c, case.coeffs, case.initial,
                case.exact_p, case.exact_q, case.exact_grad_p, case.exact_grad_q,
            )
            records.append(rec)
            rows.append(rec)
        with open(outdir / "errors.csv", "w") as f:
            f.write("ell,h,tau,E_p,E_q,E_sigp,E_sigq\n")
            for r in rows:
                f.write(
                    f"{r.degree},{r.h:.16e},{r.tau:.16e},{r.E_p:.16e},"
                    f"{r.E_q:.16e},{r.E_sigp:.16e},{r.E_sigq:.16e}\n"
                )
    write_meta(outdir, cfg, {"sweep": sweep})
    return records


# ---------------------------------------------------------------------------
# test case 2: traveling wave


def wave_coefficients() -> ProblemCoefficients:
    wave = model.TravelingWave(lambda_p=0.1, mu_pq=1.0, kappa_p=0.1)
    return ProblemCoefficients(
        lambda_p=0.1, lambda_q=0.1, mu_pq=1.0, kappa_p=0.1,
        D=DiffusionTensor.isotropic(wave.diffusion),
    )


def wave_mesh_dims(n_elements: int) -> tuple[int, int]:
    """Square-celled grid of the 20 x 5 wave domain with the given count."""
    ny = int(round(math.sqrt(n_elements / 8)))
    nx = 4 * ny
    if 2 * nx * ny != n_elements:
        raise ValueError(f"{n_elements} elements do not fit a 4:1 square-cell grid")
    return nx, ny


def _wave_initial(coeffs) -> InitialData:
    def p0(x):
        return model.traveling_wave_exact(coeffs, x, 0.0)[0]

    def q0(x):
        return model.traveling_wave_exact(coeffs, x, 0.0)[1]

    return InitialData(p0=p0, q0=q0)


def run_testcase2_convergence(cfg: RunConfig, element_counts=(72, 288, 648, 1152)):
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    coeffs = wave_coefficients()
    initial = _wave_initial(coeffs)

    def exact(which, x, t):
        vals = model.traveling_wave_exact(coeffs, x, t)
        return {"p": vals[0], "q": vals[1], "gp": vals[2], "gq": vals[3]}[which]

    records = []
    for nel in element_counts:
        nx, ny = wave_mesh_dims(nel)
        c = _clone(cfg, nx=nx, ny=ny, x0=-10.0, x1=10.0, y0=0.0, y1=5.0,
                   final_time=1.0, tau_rule=True)
        rec, _ = _sweep_record(
            c, coeffs, initial,
            lambda x, t: exact("p", x, t), lambda x, t: exact("q", x, t),
            lambda x, t: exact("gp", x, t), lambda x, t: exact("gq", x, t),
        )
        records.append(rec)
    diag.write_errors_csv(outdir / "errors.csv", records)
    write_meta(outdir, cfg, {"element_counts": element_counts})
    return records


def run_testcase2_long(cfg: RunConfig) -> dict:
    """Long wave run (default T=5, 72 elements) with entropy monitoring."""
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    coeffs = wave_coefficients()
    initial = _wave_initial(coeffs)
    result = run_transient(cfg, coeffs, initial, record_trace=True)
    T = result.state.t
    Ep_err = diag.primal_error(
        result.state.W_p,
        lambda x: model.traveling_wave_exact(coeffs, x, T)[0],
        lambda w: model.u_p(w, coeffs.E_p),
    )
    Eq_err = diag.primal_error(
        result.state.W_q,
        lambda x: model.traveling_wave_exact(coeffs, x, T)[1],
        lambda w: model.u_q(w, coeffs.E_q),
    )
    tau = cfg.resolved_tau(0.0)
    check = diag.entropy_step_check(
        result.trace, coeffs, tau, cfg.domain.area, epsilon=cfg.epsilon
    )
    slacks = _per_step_slacks(result.trace, coeffs, tau, cfg.domain.area)
    diag.write_entropy_csv(outdir / "entropy.csv", result.trace, slacks)
    diag.write_trajectory_csv(outdir / "trajectory.csv", result.trajectory)
    diag.write_vtk(outdir / f"fields_t{T:g}.vtk", result.state, coeffs)
    write_meta(outdir, cfg, {
        "E_p_final": Ep_err, "E_q_final": Eq_err,
        "entropy_check_passed": check.passed,
        "entropy_min_slack": check.min_slack_step,
        "bounds_clean": result.bounds_clean,
        "max_newton_iterations": max(r.iterations for r in result.reports),
    })
    return {
        "E_p": Ep_err, "E_q": Eq_err, "entropy": check, "result": result,
    }


def _per_step_slacks(trace, coeffs, tau, area):
    Cf = model.reaction_bound_constant(coeffs)
    Eq = coeffs.equilibrium_q
    Sq = np.asarray(trace.S_q)
    slack = [np.nan]
    for n in range(len(Sq) - 1):
        slack.append(Sq[n] + Cf * Eq * tau * area - (1.0 - Cf * tau) * Sq[n + 1])
    return slack


# ---------------------------------------------------------------------------
# test case 3: stable equilibrium behaviors


def equilibrium_coefficients(kind: str, diffusion: float = 0.0375) -> ProblemCoefficients:
    if kind == "focus":
        return ProblemCoefficients(
            lambda_p=0.2, lambda_q=4.5, mu_pq=1.0, kappa_p=4.0,
            D=DiffusionTensor.isotropic(diffusion),
        )
    if kind == "node":
        return ProblemCoefficients(
            lambda_p=0.1, lambda_q=0.1, mu_pq=1.0, kappa_p=0.1,
            D=DiffusionTensor.isotropic(diffusion),
        )
    raise ValueError(f"unknown equilibrium kind {kind!r}")


def run_testcase3(cfg: RunConfig, kinds=("focus", "node")) -> dict:
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    out = {}
    for kind in kinds:
        coeffs = equilibrium_coefficients(kind)
        classified = model.node_focus_classifier(coeffs)
        initial = InitialData(
            p0=lambda x, c=coeffs: np.full(len(x), 39.0 / 40.0 * c.E_p),
            q0=lambda x, c=coeffs: c.E_q / 2.0 * np.exp(-x[:, 0] ** 2),
        )
        result = run_transient(cfg, coeffs, initial, record_trace=True,
                               check_tau=False)
        diag.write_trajectory_csv(outdir / f"trajectory_{kind}.csv", result.trajectory)
        diag.write_entropy_csv(outdir / f"entropy_{kind}.csv", result.trace)
        diag.write_vtk(outdir / f"fields_{kind}_t{result.state.t:g}.vtk",
                       result.state, coeffs)
        out[kind] = {"classified": classified, "result": result,
                     "equilibrium": (coeffs.lambda_q / coeffs.mu_pq, coeffs.E_q)}
    write_meta(outdir, cfg, {"kinds": kinds})
    return out


# ---------------------------------------------------------------------------
# test case 4: diffusion regimes on the quadrant domain


def quadrant_selector(x: np.ndarray) -> np.ndarray:
    """Quadrant tags of the (-2,2)^2 domain: 1=SW, 2=SE, 3=NW, 4=NE."""
    tags = np.ones(len(x), dtype=int)
    east = x[:, 0] > 0
    north = x[:, 1] > 0
    tags[east & ~north] = 2
    tags[~east & north] = 3
    tags[east & north] = 4
    return tags


def anisotropy_direction(x: np.ndarray) -> np.ndarray:
    """Unit field ((1-y)^2 + x^4)^(-1/2) (1-y, x^2)."""
    ax = 1.0 - x[:, 1]
    ay = x[:, 0] ** 2
    norm = np.sqrt(ax**2 + ay**2)
    return np.column_stack([ax / norm, ay / norm])


def tc4_diffusion(variant: int) -> DiffusionTensor:
    if variant == 1:
        return DiffusionTensor.isotropic(5e-2)
    if variant == 2:
        return DiffusionTensor.isotropic(1e-2)
    if variant == 3:
        return DiffusionTensor.piecewise_isotropic(
            quadrant_selector, {1: 1e-3, 2: 1e-2, 3: 5e-3, 4: 5e-2}
        )
    if variant == 4:

        def fn(x):
            tags = quadrant_selector(x)
            out = np.zeros((len(x), 2, 2))
            iso = np.where(tags == 1, 1e-3, np.where(tags == 2, 1e-2, 0.0))
            out[:, 0, 0] = iso
            out[:, 1, 1] = iso
            upper = tags >= 3
            if np.any(upper):
                a = anisotropy_direction(x[upper])
                base = np.where(tags[upper] == 3, 1e-3, 1e-2)
                aa = 5e-3 * np.einsum("nc,nd->ncd", a, a)
                out[upper, 0, 0] = base + aa[:, 0, 0]
                out[upper, 0, 1] = aa[:, 0, 1]
                out[upper, 1, 0] = aa[:, 1, 0]
                out[upper, 1, 1] = base + aa[:, 1, 1]
            return out

        return DiffusionTensor(fn, d_upd=1e-3, d_max=1.5e-2 + 5e-3,
                               description="tc4 anisotropic")
    raise ValueError(f"unknown tc4 variant {variant}")


def run_testcase4(cfg: RunConfig, variant: int = 2,
                  snapshot_times=(5.0, 10.0, 15.0),
                  stop_on_overshoot: bool = False) -> TransientResult:
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    coeffs = ProblemCoefficients(
        lambda_p=0.1, lambda_q=0.1, mu_pq=1.0, kappa_p=0.1,
        D=tc4_diffusion(variant),
    )
    initial = InitialData(
        p0=lambda x: np.ones(len(x)),
        q0=lambda x: 0.5 * np.exp(-10.0 * (x[:, 0] ** 2 + x[:, 1] ** 2)),
    )
    stop = None
    if stop_on_overshoot:
        def stop(state, trajectory):
            return trajectory[-1]["max_q"] > coeffs.E_q

    result = run_transient(cfg, coeffs, initial, snapshot_times=snapshot_times,
                           record_trace=True, check_tau=False, stop_when=stop)
    diag.write_trajectory_csv(outdir / f"trajectory_tc4_{variant}.csv",
                              result.trajectory)
    for t_snap, st in result.snapshots.items():
        diag.write_vtk(outdir / f"fields_t{t_snap:g}.vtk", st, coeffs)
        diag.sample_fields_csv(outdir / f"fields_t{t_snap:g}.csv", st, coeffs)
    if not result.snapshots:
        diag.write_vtk(outdir / f"fields_t{result.state.t:g}.vtk",
                       result.state, coeffs)
    write_meta(outdir, cfg, {
        "variant": variant,
        "q_overshoot_time": result.q_overshoot_time,
        "bounds_clean": result.bounds_clean,
    })
    return result


# ---------------------------------------------------------------------------
# property-check sweep


def run_checks(cfg: RunConfig) -> int:
    """Randomized operator and model property sweep; returns #failures."""
    from . import checks

    return checks.run_all(seed=cfg.seed, verbose=True)


# ---------------------------------------------------------------------------
# argument parsing


def _clone(cfg: RunConfig, **kw) -> RunConfig:
    vals = {f.name: getattr(cfg, f.name) for f in dc_fields(cfg)}
    vals.update(kw)
    return RunConfig(**vals)


_TESTCASE_DEFAULTS = {
    "tc1-h": dict(x0=0, x1=1, y0=0, y1=1, degree=2, tau=1e-3, final_time=0.05),
    "tc1-p": dict(x0=0, x1=1, y0=0, y1=1, nx=4, ny=4, tau=1e-3, final_time=0.05),
    "tc2-conv": dict(x0=-10, x1=10, y0=0, y1=5, degree=3, final_time=1.0,
                     tau_rule=True),
    "tc2-long": dict(x0=-10, x1=10, y0=0, y1=5, nx=12, ny=3, degree=2,
                     tau=0.1, final_time=5.0),
    "tc3": dict(x0=-10, x1=10, y0=0, y1=5, nx=24, ny=6, degree=2,
                tau=5e-3, final_time=25.0),
    "tc4": dict(x0=-2, x1=2, y0=-2, y1=2, nx=20, ny=20, degree=2,
                tau=5e-3, final_time=15.0),
    "check": dict(),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heterodimer-ldg",
        description="Structure-preserving LDG experiments for the two-state "
                    "conversion system",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _TESTCASE_DEFAULTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--outdir", default=None)
        p.add_argument("--degree", type=int, default=None)
        p.add_argument("--tau", type=float, default=None)
        p.add_argument("--final-time", type=float, default=None)
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--eta0", type=float, default=None)
        p.add_argument("--gamma-F", dest="gamma_F", type=float, default=None)
        p.add_argument("--newton-tol", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--nx", type=int, default=None)
        p.add_argument("--ny", type=int, default=None)
        if name == "tc1-h":
            p.add_argument("--meshes", default="4,8,16,32",
                           help="comma-separated nx values")
        if name == "tc1-p":
            p.add_argument("--degrees", default="1,2,3,4,5")
        if name == "tc2-conv":
            p.add_argument("--elements", default="72,288,648,1152")
        if name == "tc3":
            p.add_argument("--kinds", default="focus,node")
        if name == "tc4":
            p.add_argument("--variant", type=int, default=2)
            p.add_argument("--stop-on-overshoot", action="store_true")
    return parser


def config_from_args(args) -> RunConfig:
    cfg = RunConfig(testcase=args.command)
    _apply_overrides(cfg, _TESTCASE_DEFAULTS[args.command])
    if getattr(args, "config", None):
        _apply_overrides(cfg, load_config_file(args.config))
    cli_keys = ("outdir", "degree", "tau", "final_time", "epsilon", "eta0",
                "gamma_F", "newton_tol", "seed", "nx", "ny")
    for key in cli_keys:
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = config_from_args(args)
    t0 = time.perf_counter()
    try:
        if args.command == "tc1-h":
            meshes = tuple(int(s) for s in args.meshes.split(","))
            records = run_testcase1(cfg, sweep="h", mesh_sizes=meshes)
            for r in records:
                print(f"h={r.h:.4e} E_p={r.E_p:.4e} E_q={r.E_q:.4e} "
                      f"E_sigp={r.E_sigp:.4e} E_sigq={r.E_sigq:.4e}")
        elif args.command == "tc1-p":
            degrees = tuple(int(s) for s in args.degrees.split(","))
            records = run_testcase1(cfg, sweep="p", degrees=degrees)
            for r in records:
                print(f"ell={r.degree} E_p={r.E_p:.4e} E_sigp={r.E_sigp:.4e}")
        elif args.command == "tc2-conv":
            counts = tuple(int(s) for s in args.elements.split(","))
            records = run_testcase2_convergence(cfg, element_counts=counts)
            for r in records:
                print(f"h={r.h:.4e} E_p={r.E_p:.4e} E_q={r.E_q:.4e}")
        elif args.command == "tc2-long":
            out = run_testcase2_long(cfg)
            print(f"E_p={out['E_p']:.4e} E_q={out['E_q']:.4e} "
                  f"entropy_ok={out['entropy'].passed}")
        elif args.command == "tc3":
            kinds = tuple(args.kinds.split(","))
            out = run_testcase3(cfg, kinds=kinds)
            for kind, data in out.items():
                tr = data["result"].trajectory[-1]
                print(f"{kind}: classified={data['classified']} "
                      f"mean_q(T)={tr['mean_q']:.4f}")
        elif args.command == "tc4":
            result = run_testcase4(cfg, variant=args.variant,
                                   stop_on_overshoot=args.stop_on_overshoot)
            print(f"q_overshoot_time={result.q_overshoot_time} "
                  f"bounds_clean={result.bounds_clean}")
        elif args.command == "check":
            failures = run_checks(cfg)
            return 1 if failures else 0
    except NewtonDivergenceError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"bounds audit failure: {exc}", file=sys.stderr)
        return 3
    print(f"[{args.command}] done in {time.perf_counter() - t0:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
