"""Acceptance gate: one test per criterion, at the stated tolerances.

Each test prints a single PASS/FAIL line. The expensive experiment runs are
shared through module-scoped fixtures; the full module reproduces the
convergence, traveling-wave, equilibrium and diffusion-regime studies at
their reference configurations, so expect roughly 45-60 minutes of
single-core runtime.
"""

import math
import time
import warnings

import numpy as np
import pytest

from heterodimer_ldg import cli, diagnostics as diag, model
from heterodimer_ldg.dgspace import DGSpace
from heterodimer_ldg.ldg_ops import (
    DiffusionTensor,
    assemble_core,
    div_ldg,
    grad_ldg,
)
from heterodimer_ldg.mesh import Rectangle, build_structured_mesh
from heterodimer_ldg.model import InitialData, ProblemCoefficients
from heterodimer_ldg.solver import BackwardEulerSolver, SolverConfig
from heterodimer_ldg.dgspace import DGField

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

FIG1A_EP = {4: 6.7666e-3, 8: 9.2947e-4, 16: 1.1861e-4, 32: 1.4932e-5}
FIG1C_ESP = {4: 1.9427e-1, 8: 5.7444e-2, 16: 1.5031e-2, 32: 3.8e-3}
FIG2A_EP_L5 = 6.4379e-5
FIG4A_EP = {72: 6.7302e-3, 288: 3.9786e-4}
TABLE_EP_T5 = 8.01e-2
TABLE_EQ_T5 = 8.45e-2


def _report(num: int, passed: bool, detail: str):
    print(f"ACCEPTANCE {num}: {'PASS' if passed else 'FAIL'} - {detail}")
    return passed


# ---------------------------------------------------------------------------
# shared runs


@pytest.fixture(scope="module")
def tc1_h_sweep(tmp_path_factory):
    cfg = cli.RunConfig(
        testcase="tc1-h", degree=2, tau=1e-3, final_time=0.05,
        outdir=str(tmp_path_factory.mktemp("tc1h")),
    )
    t0 = time.perf_counter()
    records = cli.run_testcase1(cfg, sweep="h", mesh_sizes=(4, 8, 16, 32))
    return records, time.perf_counter() - t0


@pytest.fixture(scope="module")
def tc1_p_sweep(tmp_path_factory):
    cfg = cli.RunConfig(
        testcase="tc1-p", nx=4, ny=4, tau=1e-3, final_time=0.05,
        outdir=str(tmp_path_factory.mktemp("tc1p")),
    )
    return cli.run_testcase1(cfg, sweep="p", degrees=tuple(range(1, 9)))


@pytest.fixture(scope="module")
def tc2_conv(tmp_path_factory):
    cfg = cli.RunConfig(
        testcase="tc2-conv", degree=3, final_time=1.0, tau_rule=True,
        outdir=str(tmp_path_factory.mktemp("tc2conv")),
    )
    return cli.run_testcase2_convergence(cfg, element_counts=(72, 288))


def _tc2_long(outdir, tau):
    cfg = cli.RunConfig(
        testcase="tc2-long", x0=-10, x1=10, y0=0, y1=5, nx=12, ny=3,
        degree=2, tau=tau, final_time=5.0, outdir=str(outdir),
    )
    return cli.run_testcase2_long(cfg)


@pytest.fixture(scope="module")
def tc2_long_runs(tmp_path_factory):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out_large = _tc2_long(tmp_path_factory.mktemp("tc2long"), 0.1)
    tau_warned = any("tau" in str(w.message) for w in caught)
    with warnings.catch_warnings(record=True) as caught_small:
        warnings.simplefilter("always")
        out_small = _tc2_long(tmp_path_factory.mktemp("tc2long_s"), 0.05)
    tau_warned_small = any("tau" in str(w.message) for w in caught_small)
    return out_large, tau_warned, out_small, tau_warned_small


@pytest.fixture(scope="module")
def tc3_runs(tmp_path_factory):
    cfg = cli.RunConfig(
        testcase="tc3", x0=-10, x1=10, y0=0, y1=5, nx=24, ny=6,
        degree=2, tau=5e-3, final_time=25.0,
        outdir=str(tmp_path_factory.mktemp("tc3")),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return cli.run_testcase3(cfg, kinds=("focus", "node"))


@pytest.fixture(scope="module")
def tc4_low_diffusion(tmp_path_factory):
    cfg = cli.RunConfig(
        testcase="tc4", x0=-2, x1=2, y0=-2, y1=2, nx=20, ny=20,
        degree=2, tau=5e-3, final_time=15.0,
        outdir=str(tmp_path_factory.mktemp("tc4")),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return cli.run_testcase4(cfg, variant=2, stop_on_overshoot=True)


# ---------------------------------------------------------------------------
# criteria


def test_criterion_1_tc1_primal_errors(tc1_h_sweep):
    records, elapsed = tc1_h_sweep
    ratios = [r.E_p / FIG1A_EP[nx] for r, nx in zip(records, (4, 8, 16, 32))]
    hs = [r.h for r in records]
    orders = diag.observed_orders(hs, [r.E_p for r in records])
    ok = (
        all(1 / 1.5 <= rt <= 1.5 for rt in ratios)
        and all(2.75 <= o <= 3.25 for o in orders)
        and elapsed <= 300.0
    )
    assert _report(
        1, ok,
        f"E_p ratios {[f'{r:.3f}' for r in ratios]}, orders "
        f"{[f'{o:.2f}' for o in orders]}, runtime {elapsed:.0f}s (<=300)",
    )


def test_criterion_2_tc1_flux_errors(tc1_h_sweep):
    records, _ = tc1_h_sweep
    ratios = [r.E_sigp / FIG1C_ESP[nx] for r, nx in zip(records, (4, 8, 16, 32))]
    hs = [r.h for r in records]
    orders = diag.observed_orders(hs, [r.E_sigp for r in records])
    slope = diag.least_squares_order(hs, [r.E_sigp for r in records])
    # the first mesh pair is pre-asymptotic in the reference data as well
    # (its order there is 1.758); gate the asymptotic pairs and the slope
    ok = (
        all(1 / 1.5 <= rt <= 1.5 for rt in ratios)
        and all(1.8 <= o <= 2.2 for o in orders[1:])
        and 1.8 <= slope <= 2.2
    )
    assert _report(
        2, ok,
        f"E_sigp ratios {[f'{r:.3f}' for r in ratios]}, orders "
        f"{[f'{o:.2f}' for o in orders]}, lsq slope {slope:.2f}",
    )


def test_criterion_3_tc1_degree_convergence(tc1_p_sweep):
    records = tc1_p_sweep
    errs = np.array([r.E_p for r in records])
    monotone = bool(np.all(np.diff(errs) < 0))
    near_ref = errs[4] <= 2.0 * FIG2A_EP_L5
    # spectral decay: at least half a decade per degree on average
    slope = np.polyfit(np.arange(1, 9), np.log10(errs), 1)[0]
    ok = monotone and near_ref and slope <= -0.5
    assert _report(
        3, ok,
        f"monotone={monotone}, E_p(5)={errs[4]:.3e} (<= {2*FIG2A_EP_L5:.3e}), "
        f"decay slope {slope:.2f} decades/degree",
    )


def test_criterion_4_wave_constants():
    wave = model.TravelingWave(lambda_p=0.1, mu_pq=1.0, kappa_p=0.1)
    coeffs = ProblemCoefficients(
        0.1, 0.1, 1.0, 0.1, D=DiffusionTensor.isotropic(wave.diffusion)
    )
    Cf = model.reaction_bound_constant(coeffs)
    ok = (
        abs(wave.diffusion - 0.0375) <= 1e-15
        and abs(wave.speed - 0.375) <= 1e-15
        and abs(Cf - 5.157) <= 0.01
    )
    assert _report(
        4, ok, f"d={wave.diffusion}, v={wave.speed}, C_f={Cf:.4f} (5.157 +/- 0.01)"
    )


def test_criterion_5_wave_convergence(tc2_conv):
    records = tc2_conv
    ratios = [r.E_p / FIG4A_EP[n] for r, n in zip(records, (72, 288))]
    order = diag.observed_orders(
        [r.h for r in records], [r.E_p for r in records]
    )[0]
    ok = all(1 / 1.5 <= rt <= 1.5 for rt in ratios) and order >= 3.5
    assert _report(
        5, ok,
        f"E_p ratios {[f'{r:.3f}' for r in ratios]}, observed order {order:.2f}",
    )


def test_criterion_6_long_wave_errors(tc2_long_runs):
    out_large, _, _, _ = tc2_long_runs
    rp = out_large["E_p"] / TABLE_EP_T5
    rq = out_large["E_q"] / TABLE_EQ_T5
    clean = out_large["result"].bounds_clean
    ok = 0.75 <= rp <= 1.25 and 0.75 <= rq <= 1.25 and clean
    assert _report(
        6, ok,
        f"E_p={out_large['E_p']:.4e} (ratio {rp:.3f}), "
        f"E_q={out_large['E_q']:.4e} (ratio {rq:.3f}), bounds clean={clean}",
    )


def test_criterion_7_entropy_monitor(tc2_long_runs):
    out_large, warned_large, out_small, warned_small = tc2_long_runs
    ok = (
        warned_large  # tau = 0.1 exceeds 1/(2 C_f) ~ 0.097
        and not warned_small
        and out_large["entropy"].passed
        and out_small["entropy"].passed
        and out_large["entropy"].min_slack_step >= -1e-10
        and out_small["entropy"].min_slack_step >= -1e-10
    )
    assert _report(
        7, ok,
        f"tau-warning@0.1={warned_large}, none@0.05={not warned_small}, "
        f"min slack {out_large['entropy'].min_slack_step:.3e} / "
        f"{out_small['entropy'].min_slack_step:.3e}",
    )


def test_criterion_8_newton_correctness(tc2_long_runs, rng=None):
    rng = np.random.default_rng(8)
    mesh = build_structured_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), 1, 1)
    space = DGSpace(mesh, 1)
    D = DiffusionTensor.isotropic(0.0375)
    coeffs = ProblemCoefficients(0.1, 0.1, 1.0, 0.1, D=D)
    mats = assemble_core(mesh, space, D)
    solver = BackwardEulerSolver(mats, coeffs, SolverConfig(check_tau_stability=False))
    init = InitialData(
        p0=lambda x: 0.4 + 0.1 * x[:, 0], q0=lambda x: 0.5 + 0.2 * x[:, 1]
    )
    state = solver.initialize(init)
    n = space.n_scalar
    tau = 0.01
    worst = 0.0
    for _ in range(10):
        Wp = state.W_p.coef + 0.3 * rng.standard_normal(n)
        Wq = state.W_q.coef + 0.3 * rng.standard_normal(n)
        cache = solver.residual_cache(Wp, Wq, state, tau, tau)
        K = solver.jacobian(cache, tau).toarray()
        Kfd = np.zeros_like(K)
        h = 1e-6
        for j in range(2 * n):
            dp = np.zeros(n)
            dq = np.zeros(n)
            (dp if j < n else dq)[j % n] = h
            Gp1, Gq1 = solver.residual(Wp + dp, Wq + dq, state, tau, tau)
            Gp0, Gq0 = solver.residual(Wp - dp, Wq - dq, state, tau, tau)
            Kfd[:, j] = np.concatenate([Gp1 - Gp0, Gq1 - Gq0]) / (2 * h)
        worst = max(worst, np.abs(K - Kfd).max() / np.abs(Kfd).max())

    out_large, *_ = tc2_long_runs
    iters = [r.iterations for r in out_large["result"].reports]
    ok = worst <= 1e-6 and max(iters) <= 10
    assert _report(
        8, ok,
        f"FD Jacobian max rel err {worst:.2e} (<=1e-6), "
        f"max Newton iterations {max(iters)} (<=10) over {len(iters)} steps",
    )


def test_criterion_9_operator_properties(rng=None):
    rng = np.random.default_rng(9)
    mesh = build_structured_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), 4, 4)
    space = DGSpace(mesh, 2)
    D = DiffusionTensor.isotropic(2.0)
    mats = assemble_core(mesh, space, D, gamma_F=0.5)

    worst_adj = 0.0
    for _ in range(10):
        w = DGField(space, "scalar", rng.standard_normal(space.n_scalar))
        r = DGField(space, "vector", rng.standard_normal(space.n_vector))
        lhs = div_ldg(mats, r).coef @ w.coef + r.coef @ grad_ldg(mats, w).coef
        worst_adj = max(
            worst_adj, abs(lhs) / (np.linalg.norm(r.coef) * np.linalg.norm(w.coef))
        )

    op = (mats.B.T @ mats.M_D @ mats.B).toarray()
    asym = np.abs(op - op.T).max() / max(np.abs(op).max(), 1.0)

    cont = space.project_scalar(
        lambda x: 0.3 + x[:, 0] - 2 * x[:, 1] + x[:, 0] * x[:, 1]
    )
    jker = np.abs(mats.J @ cont.coef).max()

    sets = {
        "wave": ProblemCoefficients(0.1, 0.1, 1.0, 0.1, D=DiffusionTensor.isotropic(0.0375)),
        "focus": ProblemCoefficients(0.2, 4.5, 1.0, 4.0, D=DiffusionTensor.isotropic(0.0375)),
        "node": ProblemCoefficients(0.1, 0.1, 1.0, 0.1, D=DiffusionTensor.isotropic(1e-2)),
    }
    res_min = np.inf
    for c in sets.values():
        p = np.linspace(1e-6, 1 - 1e-6, 200) * c.equilibrium_p
        q = np.linspace(1e-6, 50.0, 200) * c.equilibrium_q
        P, Q = np.meshgrid(p, q)
        res_min = min(
            res_min, model.reaction_bound_residual(P.ravel(), Q.ravel(), c).min()
        )

    ok = worst_adj <= 1e-12 and asym <= 1e-12 and jker <= 1e-10 and res_min >= 0.0
    assert _report(
        9, ok,
        f"adjointness {worst_adj:.2e}, symmetry {asym:.2e}, "
        f"J-kernel {jker:.2e}, min entropy-bound residual {res_min:.3e}",
    )


def _crossings(values, level):
    v = np.asarray(values) - level
    return int(np.sum(np.abs(np.diff(np.sign(v))) > 1))


def test_criterion_10_qualitative_dynamics(tc3_runs, tc4_low_diffusion):
    focus = tc3_runs["focus"]
    node = tc3_runs["node"]
    q_eq_focus = focus["equilibrium"][1]
    traj_f = focus["result"].trajectory
    mean_q_f = [row["mean_q"] for row in traj_f]
    crossings = _crossings(mean_q_f, q_eq_focus)
    settled = abs(mean_q_f[-1] - q_eq_focus) <= 0.01 * q_eq_focus

    traj_n = node["result"].trajectory
    mean_q_n = np.array([row["mean_q"] for row in traj_n])
    mean_p_n = np.array([row["mean_p"] for row in traj_n])
    # after the transient the approach is monotone: past the last extremum
    # of mean q, both trajectories move one-way toward (0.1, 0.9)
    dq = np.diff(mean_q_n)
    sign_changes = np.nonzero(np.diff(np.sign(dq[np.abs(dq) > 1e-12])))[0]
    tail_start = len(mean_q_n) // 2
    tail_q = mean_q_n[tail_start:]
    tail_p = mean_p_n[tail_start:]
    node_monotone = bool(
        np.all(np.diff(tail_q) >= -1e-9) and np.all(np.diff(tail_p) <= 1e-9)
    )
    node_target = (
        abs(mean_q_n[-1] - 0.9) < 0.02 and abs(mean_p_n[-1] - 0.1) < 0.02
    )

    overshoot = tc4_low_diffusion.q_overshoot_time
    ok = (
        focus["classified"] == "focus"
        and crossings >= 2
        and settled
        and node["classified"] == "node"
        and node_monotone
        and node_target
        and overshoot is not None
        and overshoot < 15.0
    )
    assert _report(
        10, ok,
        f"focus: {crossings} crossings of {q_eq_focus:.3f}, settled={settled}; "
        f"node: monotone tail={node_monotone}, target={node_target}; "
        f"low-diffusion overshoot at t={overshoot}",
    )
