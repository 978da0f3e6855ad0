import math
from pathlib import Path

import numpy as np
import pytest

from heterodimer_ldg import diagnostics as diag, model
from heterodimer_ldg.dgspace import DGField, DGSpace
from heterodimer_ldg.ldg_ops import DiffusionTensor, assemble_core
from heterodimer_ldg.mesh import Rectangle, build_structured_mesh
from heterodimer_ldg.model import InitialData, ProblemCoefficients
from heterodimer_ldg.solver import BackwardEulerSolver, SolverConfig


def equilibrium_state(nx=4, ny=2, degree=2):
    mesh = build_structured_mesh(Rectangle(-10.0, 10.0, 0.0, 5.0), nx, ny)
    space = DGSpace(mesh, degree)
    D = DiffusionTensor.isotropic(0.0375)
    coeffs = ProblemCoefficients(0.1, 0.1, 1.0, 0.1, D=D)
    mats = assemble_core(mesh, space, D)
    solver = BackwardEulerSolver(mats, coeffs, SolverConfig(check_tau_stability=False))
    init = InitialData(
        p0=lambda x: np.full(len(x), 0.1), q0=lambda x: np.full(len(x), 0.9)
    )
    return solver.initialize(init), coeffs, mats, space, solver


class TestPrimalError:
    def test_projection_residual_for_polynomial_exact(self, unit_square_mesh):
        space = DGSpace(unit_square_mesh, 2)
        # w_h built so that u_p(w_h) is close to a representable function:
        # compare against the projected field itself -> error ~ 0
        target = lambda x: 0.3 + 0.2 * x[:, 0]
        w = space.project_scalar(lambda x: model.s_p_prime(target(x), 1.0))
        # the transform of a projected transform of affine data stays within
        # projection error of the data; a degree-<=ell exact comparison:
        err = diag.primal_error(w, target, lambda wv: model.u_p(wv, 1.0))
        assert err < 1e-4

    def test_error_against_represented_field_is_roundoff(self, unit_square_mesh):
        space = DGSpace(unit_square_mesh, 3)
        w = space.project_scalar(lambda x: 0.1 + 0.2 * x[:, 0] - 0.3 * x[:, 1] ** 2)
        rule = diag._error_rule(space)
        uvals = model.u_p(rule.scalar_values(w.coef), 1.0)
        flat = uvals.ravel().copy()

        def exact(pts):
            return flat

        assert diag.primal_error(w, exact, lambda wv: model.u_p(wv, 1.0)) < 1e-13

    def test_flux_error_sign_convention(self, unit_square_mesh):
        # sigma approximates the NEGATIVE gradient: for exact grad g and
        # sigma = -g the reported error vanishes
        space = DGSpace(unit_square_mesh, 2)
        g = lambda x: np.column_stack([np.full(len(x), 2.0), np.full(len(x), -1.0)])
        sigma = space.project_vector(lambda x: -g(x))
        assert diag.flux_error(sigma, g) < 1e-13
        # equilibrium: sigma = 0 and constant exact -> error equals |sigma|
        zero_sigma = DGField.zeros(space, "vector")
        zg = lambda x: np.zeros((len(x), 2))
        assert diag.flux_error(zero_sigma, zg) == 0.0

    def test_error_quadrature_insensitive(self, unit_square_mesh):
        space = DGSpace(unit_square_mesh, 2)
        w = space.project_scalar(lambda x: np.sin(x[:, 0]) + 0.2 * x[:, 1])
        exact = lambda x: model.u_p(np.sin(x[:, 0]) + 0.2 * x[:, 1] + 0.05, 1.0)
        e1 = diag.primal_error(w, exact, lambda wv: model.u_p(wv, 1.0), extra_exactness=2)
        e2 = diag.primal_error(w, exact, lambda wv: model.u_p(wv, 1.0), extra_exactness=8)
        assert abs(e1 - e2) / e2 < 1e-3


class TestConvergenceTable:
    def test_exact_cubic_orders(self):
        hs = [0.4, 0.2, 0.1]
        records = [
            diag.ErrorRecord(h=h, degree=2, tau=1e-3, E_p=2.0 * h**3,
                             E_q=1.5 * h**3, E_sigp=h**2, E_sigq=h**2)
            for h in hs
        ]
        rows = diag.convergence_table(records)
        assert rows[0]["order_p"] == ""
        for row in rows[1:]:
            assert row["order_p"] == pytest.approx(3.0, abs=1e-12)
            assert row["order_sigp"] == pytest.approx(2.0, abs=1e-12)

    def test_needs_two_records(self):
        with pytest.raises(ValueError):
            diag.convergence_table([diag.ErrorRecord(h=0.1, degree=1, tau=1e-3)])

    def test_random_sequences_match_regression_oracle(self, rng):
        hs = np.array([0.4, 0.2, 0.1, 0.05])
        for _ in range(10):
            order = rng.uniform(1.0, 4.0)
            c = rng.uniform(0.5, 2.0)
            errs = c * hs**order
            pair = diag.observed_orders(hs, errs)
            assert np.allclose(pair, order, rtol=1e-12)
            slope = diag.least_squares_order(hs, errs)
            # independent oracle: polyfit in log-log
            ref = np.polyfit(np.log(hs), np.log(errs), 1)[0]
            assert slope == pytest.approx(ref, rel=1e-9)


class TestEntropyMonitor:
    def test_equilibrium_trace_flat_and_checked(self):
        state, coeffs, mats, space, solver = equilibrium_state()
        trace = diag.EntropyTrace()
        Sp0, Sq0 = diag.entropy_integrals(state, coeffs)
        trace.times.append(0.0)
        trace.S_p.append(Sp0)
        trace.S_q.append(Sq0)
        trace.sigma_p_norm2.append(0.0)
        trace.sigma_q_norm2.append(0.0)
        trace.jump_p.append(0.0)
        trace.jump_q.append(0.0)
        trace.dg_p.append(0.0)
        trace.dg_q.append(0.0)
        tau = 0.05
        st = state
        for _ in range(4):
            st, _ = solver.advance(st, tau)
            diag.record_entropy(trace, st, coeffs, mats)
        assert np.all(np.asarray(trace.S_p) >= -1e-12)
        assert np.all(np.asarray(trace.S_q) >= -1e-12)
        res = diag.entropy_step_check(trace, coeffs, tau, domain_area=100.0)
        assert res.passed
        # equilibrium: both sides constant, slack equals C_f E_q tau |Omega|
        Cf = model.reaction_bound_constant(coeffs)
        expect = Cf * coeffs.equilibrium_q * tau * 100.0
        assert res.min_slack_step == pytest.approx(expect, rel=1e-6)

    def test_corrupted_trace_detected(self):
        state, coeffs, mats, space, solver = equilibrium_state()
        trace = diag.EntropyTrace()
        for t in (0.0, 0.05, 0.1):
            diag.record_entropy(trace, state, coeffs, mats)
            trace.times[-1] = t
        # corrupt: inflate the q-entropy mid-run (as if q scaled by 10)
        trace.S_q[2] = trace.S_q[2] * 10 + 50.0
        res = diag.entropy_step_check(trace, coeffs, 0.05, domain_area=100.0)
        assert not res.passed
        assert any(kind == "q-recursion" for kind, _, _ in res.violations)

    def test_sources_rejected(self):
        case = model.make_separable_linear_case(DiffusionTensor.isotropic(1.0))
        with pytest.raises(ValueError):
            diag.entropy_step_check(diag.EntropyTrace(), case.coeffs, 0.1, 1.0)


class TestBoundsAudit:
    def test_transformed_state_always_clean(self):
        state, coeffs, *_ = equilibrium_state()
        report = diag.bounds_audit(state, coeffs)
        assert report.clean
        assert 0.0 < report.min_p <= report.max_p < coeffs.E_p
        assert report.min_q > 0.0

    def test_raw_projection_flags_overshoot(self):
        # an unconstrained projection of discontinuous data overshoots
        mesh = build_structured_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), 4, 4)
        space = DGSpace(mesh, 3)
        D = DiffusionTensor.isotropic(0.0375)
        coeffs = ProblemCoefficients(0.1, 0.1, 1.0, 0.1, D=D)
        p_raw = space.project_scalar(
            lambda x: np.where(x[:, 0] < 0.5, 1.0, 0.0) * coeffs.E_p
        )
        q_raw = space.project_scalar(
            lambda x: np.where(x[:, 0] > 0.5, 0.9, 0.0)
        )
        report = diag.bounds_audit_fields(p_raw, q_raw, coeffs)
        assert not report.clean
        assert report.min_q < 0.0 or report.max_p > coeffs.E_p

    def test_nan_raises(self):
        state, coeffs, *_ = equilibrium_state()
        state.W_p.coef[0] = np.nan
        with pytest.raises(FloatingPointError):
            diag.bounds_audit(state, coeffs)


class TestWriters:
    def test_errors_csv_roundtrip(self, tmp_path):
        records = [
            diag.ErrorRecord(h=0.4, degree=2, tau=1e-3, E_p=1e-2, E_q=2e-2,
                             E_sigp=1e-1, E_sigq=2e-1),
            diag.ErrorRecord(h=0.2, degree=2, tau=1e-3, E_p=1.25e-3, E_q=2.5e-3,
                             E_sigp=2.5e-2, E_sigq=5e-2),
        ]
        path = tmp_path / "errors.csv"
        diag.write_errors_csv(path, records)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("h,ell,tau,E_p")
        assert len(lines) == 3
        # determinism: rewriting produces identical bytes
        blob1 = path.read_bytes()
        diag.write_errors_csv(path, records)
        assert path.read_bytes() == blob1

    def test_entropy_and_trajectory_csv(self, tmp_path):
        trace = diag.EntropyTrace()
        for i, t in enumerate((0.0, 0.1)):
            trace.times.append(t)
            trace.S_p.append(1.0 + i)
            trace.S_q.append(2.0)
            trace.sigma_p_norm2.append(0.0)
            trace.sigma_q_norm2.append(0.0)
            trace.jump_p.append(0.0)
            trace.jump_q.append(0.0)
            trace.dg_p.append(0.0)
            trace.dg_q.append(0.0)
        diag.write_entropy_csv(tmp_path / "entropy.csv", trace, [np.nan, 0.5])
        text = (tmp_path / "entropy.csv").read_text()
        assert text.splitlines()[0] == "step,t,S_total,S_p,S_q,slack"
        rows = [
            {"step": 0, "t": 0.0, "mean_p": 0.1, "max_p": 0.2, "mean_q": 0.3,
             "max_q": 0.4}
        ]
        diag.write_trajectory_csv(tmp_path / "trajectory.csv", rows)
        assert "mean_q" in (tmp_path / "trajectory.csv").read_text()

    def test_vtk_writer_structure(self, tmp_path):
        state, coeffs, *_ = equilibrium_state(nx=2, ny=1)
        path = tmp_path / "fields.vtk"
        diag.write_vtk(path, state, coeffs)
        text = path.read_text().splitlines()
        assert text[0].startswith("# vtk DataFile")
        assert "DATASET UNSTRUCTURED_GRID" in text
        nel = state.W_p.space.n_elements
        assert f"POINTS {3 * nel} double" in text
        assert f"CELLS {nel} {4 * nel}" in text
        assert "SCALARS p double 1" in text
        assert "SCALARS q double 1" in text
        # all q samples near the equilibrium value
        qi = text.index("SCALARS q double 1") + 2
        qvals = [float(v) for v in text[qi : qi + 3 * nel]]
        assert all(abs(v - 0.9) < 1e-6 for v in qvals)

    def test_fields_csv(self, tmp_path):
        state, coeffs, *_ = equilibrium_state(nx=2, ny=1)
        diag.sample_fields_csv(tmp_path / "fields.csv", state, coeffs)
        lines = (tmp_path / "fields.csv").read_text().splitlines()
        assert lines[0] == "x,y,p,q"
        assert len(lines) > 10


class TestMeanMax:
    def test_equilibrium_values(self):
        state, coeffs, mats, space, solver = equilibrium_state()
        mean_p, max_p, mean_q, max_q = diag.mean_and_max(state, coeffs, 100.0)
        assert mean_p == pytest.approx(0.1, rel=1e-9)
        assert mean_q == pytest.approx(0.9, rel=1e-9)
        assert max_q == pytest.approx(0.9, rel=1e-6)
