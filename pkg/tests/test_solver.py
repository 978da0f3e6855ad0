import numpy as np
import pytest

from heterodimer_ldg import diagnostics as diag, model
from heterodimer_ldg.dgspace import DGField, DGSpace
from heterodimer_ldg.ldg_ops import DiffusionTensor, assemble_core
from heterodimer_ldg.mesh import Rectangle, TimeGrid, build_structured_mesh
from heterodimer_ldg.model import InitialData, ProblemCoefficients
from heterodimer_ldg.solver import (
    BackwardEulerSolver,
    DegenerateSigmaSystemError,
    NewtonDivergenceError,
    NonlinearMass,
    SolverConfig,
    assemble_nonlinear_mass,
    newton_step_two_field,
)


def small_setup(degree=1, nx=1, ny=1, d=0.0375):
    mesh = build_structured_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), nx, ny)
    space = DGSpace(mesh, degree)
    D = DiffusionTensor.isotropic(d)
    coeffs = ProblemCoefficients(0.1, 0.1, 1.0, 0.1, D=D)
    mats = assemble_core(mesh, space, D)
    solver = BackwardEulerSolver(mats, coeffs, SolverConfig(check_tau_stability=False))
    return mesh, space, coeffs, mats, solver


class TestNonlinearMass:
    def test_p_kind_constant_weight(self):
        # W = 0 with E_p = 1 and D = I gives weight s_p''(1/2) = 4
        mesh = build_structured_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), 2, 2)
        space = DGSpace(mesh, 1)
        D = DiffusionTensor.isotropic(1.0)
        coeffs = ProblemCoefficients(
            1.0, 1.0, 0.5, 1.0, D=D, transform_scale_p=1.0, transform_scale_q=1.0
        )
        mats = assemble_core(mesh, space, D)
        W = DGField.zeros(space)
        N = assemble_nonlinear_mass(mats, coeffs, "p", W)
        expect = 4.0 * np.eye(2 * space.n_loc)
        assert np.abs(N.blocks - expect).max() < 1e-12

    def test_q_kind_constant_weight(self):
        mesh = build_structured_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), 2, 2)
        space = DGSpace(mesh, 1)
        D = DiffusionTensor.isotropic(1.0)
        coeffs = ProblemCoefficients(0.1, 0.1, 1.0, 0.1, D=D)  # E_q = 0.9
        mats = assemble_core(mesh, space, D)
        N = assemble_nonlinear_mass(mats, coeffs, "q", DGField.zeros(space))
        assert np.abs(N.blocks - np.eye(2 * space.n_loc) / 0.9).max() < 1e-12

    def test_p_kind_eigenvalue_floor(self, rng):
        # s_p''(p) D is uniformly positive definite: blocks >= 4/E_p d_upd
        mesh, space, coeffs, mats, _ = small_setup(degree=2, nx=2, ny=2)
        W = DGField(space, "scalar", rng.standard_normal(space.n_scalar))
        N = assemble_nonlinear_mass(mats, coeffs, "p", W)
        floor = 4.0 / coeffs.E_p * coeffs.D.d_upd
        for blk in N.blocks:
            lam = np.linalg.eigvalsh(0.5 * (blk + blk.T))
            assert lam.min() >= floor * (1 - 1e-10)

    def test_directional_derivative_vs_fd(self, rng):
        mesh, space, coeffs, mats, _ = small_setup(degree=1)
        n = space.n_scalar
        W = DGField(space, "scalar", 0.5 * rng.standard_normal(n))
        sigma = rng.standard_normal(space.n_vector)
        direction = rng.standard_normal(n)
        for kind in ("p", "q"):
            N = assemble_nonlinear_mass(mats, coeffs, kind, W)
            act = N.derivative_action(sigma, direction)
            h = 1e-6
            Np = assemble_nonlinear_mass(
                mats, coeffs, kind, DGField(space, "scalar", W.coef + h * direction)
            )
            Nm = assemble_nonlinear_mass(
                mats, coeffs, kind, DGField(space, "scalar", W.coef - h * direction)
            )
            fd = (Np.apply(sigma) - Nm.apply(sigma)) / (2 * h)
            assert np.abs(act - fd).max() / np.abs(fd).max() < 1e-6

    def test_q_degenerate_block_raises(self):
        mesh, space, coeffs, mats, _ = small_setup(degree=1)
        # unbounded q (large positive w) makes the entropy weights vanish
        f = space.project_scalar(lambda x: np.full(len(x), 40.0))
        with pytest.raises(DegenerateSigmaSystemError):
            assemble_nonlinear_mass(mats, coeffs, "q", f)
        # the q -> 0 tail (large negative w) is not degenerate
        g = space.project_scalar(lambda x: np.full(len(x), -40.0))
        assemble_nonlinear_mass(mats, coeffs, "q", g)

    def test_kind_validation(self):
        mesh, space, coeffs, mats, _ = small_setup()
        with pytest.raises(ValueError):
            assemble_nonlinear_mass(mats, coeffs, "x", DGField.zeros(space))


class TestNewton:
    def test_equilibrium_fixed_point(self):
        mesh, space, coeffs, mats, solver = small_setup(degree=2, nx=2, ny=2)
        init = InitialData(
            p0=lambda x: np.full(len(x), 0.1), q0=lambda x: np.full(len(x), 0.9)
        )
        state = solver.initialize(init)
        new_state, rep = solver.advance(state, 0.01)
        assert rep.iterations == 1
        assert rep.increment_norms[-1] <= 1e-12

    def test_jacobian_vs_finite_differences(self, rng):
        mesh, space, coeffs, mats, solver = small_setup(degree=1)
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
        assert worst <= 1e-6

    def test_quadratic_residual_contraction(self):
        mesh, space, coeffs, mats, solver = small_setup(degree=1, nx=2, ny=2)
        init = InitialData(
            p0=lambda x: 0.3 + 0.2 * x[:, 0] * (1 - x[:, 0]),
            q0=lambda x: 0.6 + 0.2 * np.sin(2 * x[:, 1]),
        )
        state = solver.initialize(init)
        _, rep = solver.advance(state, 0.05)
        res = rep.residual_norms
        assert len(res) >= 3
        # superlinear: successive ratios shrink
        r1 = res[1] / res[0]
        r2 = res[2] / res[1]
        assert r2 < 0.5 * r1

    def test_one_field_matches_two_field(self, rng):
        mesh, space, coeffs, mats, solver = small_setup(degree=1)
        init = InitialData(
            p0=lambda x: 0.4 + 0.1 * x[:, 0], q0=lambda x: 0.5 + 0.2 * x[:, 1]
        )
        state = solver.initialize(init)
        n = space.n_scalar
        tau = 0.01
        Wp = state.W_p.coef + 0.2 * rng.standard_normal(n)
        Wq = state.W_q.coef + 0.2 * rng.standard_normal(n)
        cache = solver.residual_cache(Wp, Wq, state, tau, tau)
        import scipy.sparse.linalg as spla

        K = solver.jacobian(cache, tau).tocsc()
        delta = spla.spsolve(K, -np.concatenate([cache.G_p, cache.G_q]))
        Wp1, Wq1 = Wp + delta[:n], Wq + delta[n:]
        Wp2, Wq2, _, _ = newton_step_two_field(
            solver, Wp, Wq, cache.Sigma_p.copy(), cache.Sigma_q.copy(),
            state, tau, tau,
        )
        assert np.abs(Wp1 - Wp2).max() < 1e-11
        assert np.abs(Wq1 - Wq2).max() < 1e-11

    def test_gauss_seidel_matches_coupled_direct(self, rng):
        mesh, space, coeffs, mats, solver = small_setup(degree=2, nx=4, ny=4)
        init = InitialData(
            p0=lambda x: 0.4 + 0.1 * np.cos(x[:, 0]),
            q0=lambda x: 0.5 + 0.2 * x[:, 1],
        )
        state = solver.initialize(init)
        tau = 0.05
        cache = solver.residual_cache(
            state.W_p.coef, state.W_q.coef, state, tau, tau
        )
        A_p, A_q, B_pq, B_qp = solver.jacobian_blocks(cache, tau)
        rhs_p, rhs_q = -cache.G_p, -cache.G_q
        dp, dq = solver._solve_coupled(A_p, A_q, B_pq, B_qp, rhs_p, rhs_q)
        import scipy.sparse as sp
        import scipy.sparse.linalg as spla

        K = sp.bmat([[A_p, B_pq], [B_qp, A_q]], format="csc")
        ref = spla.spsolve(K, np.concatenate([rhs_p, rhs_q]))
        n = space.n_scalar
        scale = max(np.abs(ref).max(), 1e-30)
        assert np.abs(dp - ref[:n]).max() / scale < 1e-9
        assert np.abs(dq - ref[n:]).max() / scale < 1e-9

    def test_nonconvergence_error_carries_report(self):
        mesh, space, coeffs, mats, solver = small_setup(degree=1, nx=2, ny=2)
        solver.cfg = SolverConfig(
            tol=1e-300, max_iterations=2, check_tau_stability=False
        )
        init = InitialData(
            p0=lambda x: 0.4 + 0.1 * x[:, 0], q0=lambda x: 0.5 + 0.2 * x[:, 1]
        )
        state = solver.initialize(init)
        with pytest.raises(NewtonDivergenceError) as exc:
            solver.advance(state, 0.1)
        assert exc.value.report.iterations == 2

    def test_eq21a_residual_after_convergence(self):
        mesh, space, coeffs, mats, solver = small_setup(degree=2, nx=2, ny=2)
        init = InitialData(
            p0=lambda x: 0.3 + 0.1 * x[:, 0], q0=lambda x: 0.7 + 0.1 * x[:, 1]
        )
        state = solver.initialize(init)
        new_state, rep = solver.advance(state, 0.02)
        # flux equation residual: N(W) Sigma + C W = 0
        N_p = assemble_nonlinear_mass(mats, coeffs, "p", new_state.W_p)
        res = N_p.apply(new_state.Sigma_p.coef) + mats.C @ new_state.W_p.coef
        assert np.linalg.norm(res) <= 10 * solver.cfg.tol

    def test_structural_positivity_along_run(self):
        mesh, space, coeffs, mats, solver = small_setup(degree=2, nx=4, ny=2)
        init = InitialData(
            p0=lambda x: 0.9 * np.ones(len(x)),
            q0=lambda x: 0.45 * np.exp(-x[:, 0] ** 2),
        )
        state = solver.initialize(init)
        for _ in range(5):
            state, _ = solver.advance(state, 0.05)
            audit = diag.bounds_audit(state, coeffs)
            assert audit.clean
            assert 0.0 < audit.min_p <= audit.max_p < coeffs.E_p
            assert audit.min_q > 0.0


class TestTauWarning:
    def test_warning_when_tau_large(self, wave_coefficients):
        mesh = build_structured_mesh(Rectangle(-10.0, 10.0, 0.0, 5.0), 4, 1)
        space = DGSpace(mesh, 1)
        mats = assemble_core(mesh, space, wave_coefficients.D)
        solver = BackwardEulerSolver(mats, wave_coefficients,
                                     SolverConfig(check_tau_stability=True))
        init = InitialData(
            p0=lambda x: np.full(len(x), 0.1), q0=lambda x: np.full(len(x), 0.9)
        )
        state = solver.initialize(init)
        Cf = model.reaction_bound_constant(wave_coefficients)
        assert 0.1 >= 1.0 / (2 * Cf)  # 0.097 threshold
        with pytest.warns(UserWarning, match="tau"):
            _, rep = solver.advance(state, 0.1)
        assert rep.tau_warning

    def test_no_warning_when_tau_small(self, wave_coefficients, recwarn):
        mesh = build_structured_mesh(Rectangle(-10.0, 10.0, 0.0, 5.0), 4, 1)
        space = DGSpace(mesh, 1)
        mats = assemble_core(mesh, space, wave_coefficients.D)
        solver = BackwardEulerSolver(mats, wave_coefficients,
                                     SolverConfig(check_tau_stability=True))
        init = InitialData(
            p0=lambda x: np.full(len(x), 0.1), q0=lambda x: np.full(len(x), 0.9)
        )
        state = solver.initialize(init)
        _, rep = solver.advance(state, 0.05)
        assert not rep.tau_warning
        assert not any("tau" in str(w.message) for w in recwarn.list)


class TestInitialize:
    def test_midpoint_transforms_to_zero(self):
        mesh, space, coeffs, mats, solver = small_setup(degree=2, nx=2, ny=2)
        Ep, Eq = coeffs.E_p, coeffs.E_q
        init = InitialData(
            p0=lambda x: np.full(len(x), Ep / 2.0),
            q0=lambda x: np.full(len(x), Eq),
        )
        state = solver.initialize(init)
        assert np.abs(state.W_p.coef).max() < 1e-11
        assert np.abs(state.W_q.coef).max() < 1e-11

    def test_gaussian_initial_data_reproduced(self):
        # q_0 = E_q/2 exp(-x^2): the transform of the clamped projection is
        # quadratic in x, hence exactly representable at degree 2
        mesh = build_structured_mesh(Rectangle(-10.0, 10.0, 0.0, 5.0), 24, 6)
        space = DGSpace(mesh, 2)
        D = DiffusionTensor.isotropic(0.0375)
        coeffs = ProblemCoefficients(0.1, 0.1, 1.0, 0.1, D=D)
        mats = assemble_core(mesh, space, D)
        solver = BackwardEulerSolver(mats, coeffs,
                                     SolverConfig(check_tau_stability=False))
        init = InitialData(
            p0=lambda x: np.full(len(x), 39.0 / 40.0 * coeffs.E_p),
            q0=lambda x: coeffs.E_q / 2.0 * np.exp(-x[:, 0] ** 2),
        )
        state = solver.initialize(init)
        wq = space.scalar_values(state.W_q)
        got = model.u_q(wq, coeffs.E_q)
        pts = space.phys_points.reshape(-1, 2)
        data = (coeffs.E_q / 2.0 * np.exp(-pts[:, 0] ** 2)).reshape(got.shape)
        # the transformed data is quadratic in x where the clamp is inactive,
        # hence exactly representable at degree 2: the start state reproduces
        # the clamped data at quadrature points to round-off there, and the
        # clamped projection up to its own projection error
        clamp_free = (data > 1e-4 * coeffs.E_q).all(axis=1)
        assert clamp_free.sum() > 20
        assert np.abs(got - data)[clamp_free].max() < 1e-12
        Uq = DGField(space, "scalar", state.U_q_prev)
        proj = np.clip(space.scalar_values(Uq), 1e-8 * coeffs.E_q, None)
        assert np.abs(got - proj)[clamp_free].max() < 1e-2

    def test_rejects_inadmissible_initial_data(self):
        mesh, space, coeffs, mats, solver = small_setup()
        bad = InitialData(
            p0=lambda x: np.full(len(x), 2.0), q0=lambda x: np.zeros(len(x))
        )
        with pytest.raises(ValueError):
            solver.initialize(bad)

    def test_prev_projections_are_plain_data_projections(self):
        mesh, space, coeffs, mats, solver = small_setup(degree=2, nx=2, ny=2)
        init = InitialData(
            p0=lambda x: 0.2 + 0.05 * x[:, 0], q0=lambda x: 0.5 + 0.1 * x[:, 1]
        )
        state = solver.initialize(init)
        expect_p = space.project_scalar(init.p0).coef
        expect_q = space.project_scalar(init.q0).coef
        assert np.abs(state.U_p_prev - expect_p).max() < 1e-14
        assert np.abs(state.U_q_prev - expect_q).max() < 1e-14


class TestEntropyInequality:
    def test_per_step_q_entropy_bound(self, wave_coefficients):
        # source-free wave run with tau < 1/(2 C_f)
        mesh = build_structured_mesh(Rectangle(-10.0, 10.0, 0.0, 5.0), 12, 3)
        space = DGSpace(mesh, 2)
        mats = assemble_core(mesh, space, wave_coefficients.D)
        solver = BackwardEulerSolver(mats, wave_coefficients, SolverConfig())
        init = InitialData(
            p0=lambda x: model.traveling_wave_exact(wave_coefficients, x, 0.0)[0],
            q0=lambda x: model.traveling_wave_exact(wave_coefficients, x, 0.0)[1],
        )
        state = solver.initialize(init)
        Cf = model.reaction_bound_constant(wave_coefficients)
        tau = 0.05
        assert tau < 1.0 / (2 * Cf)
        area = 100.0
        Eq = wave_coefficients.equilibrium_q
        Sq_prev = diag.initial_entropy_integrals(init, wave_coefficients, space)[1]
        for _ in range(8):
            state, _ = solver.advance(state, tau)
            Sq = diag.entropy_integrals(state, wave_coefficients)[1]
            slack = Sq_prev + Cf * Eq * tau * area - (1 - Cf * tau) * Sq
            assert slack >= -1e-10
            Sq_prev = Sq


class TestPenalizedSystem:
    def test_epsilon_positive_jacobian_solvable(self, rng):
        mesh = build_structured_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), 2, 2)
        space = DGSpace(mesh, 2)
        D = DiffusionTensor.isotropic(0.0375)
        coeffs = ProblemCoefficients(0.1, 0.1, 1.0, 0.1, D=D)
        mats = assemble_core(mesh, space, D)
        cfg = SolverConfig(epsilon=1e-3, check_tau_stability=False)
        solver = BackwardEulerSolver(mats, coeffs, cfg)
        init = InitialData(
            p0=lambda x: 0.4 + 0.1 * x[:, 0], q0=lambda x: 0.5 + 0.2 * x[:, 1]
        )
        state = solver.initialize(init)
        n = space.n_scalar
        for _ in range(3):
            Wp = state.W_p.coef + 0.3 * rng.standard_normal(n)
            Wq = state.W_q.coef + 0.3 * rng.standard_normal(n)
            cache = solver.residual_cache(Wp, Wq, state, 0.01, 0.01)
            K = solver.jacobian(cache, 0.01).toarray()
            assert np.linalg.cond(K) < 1e12
        # the contribution itself is SPD
        A = solver._epsA.toarray()
        assert np.all(np.linalg.eigvalsh(0.5 * (A + A.T)) > 0)
        # a full step converges
        state2, rep = solver.advance(state, 0.01)
        assert rep.final_residual <= 10 * cfg.tol or rep.increment_norms[-1] <= cfg.tol

    def test_overflow_guard_is_solver_visible(self):
        mesh, space, coeffs, mats, solver = small_setup()
        init = InitialData(
            p0=lambda x: np.full(len(x), 0.5), q0=lambda x: np.full(len(x), 0.9)
        )
        state = solver.initialize(init)
        big = np.full(space.n_scalar, 1e4)
        with pytest.raises(model.TransformOverflowError):
            solver.residual_cache(state.W_p.coef, big, state, 0.1, 0.1)


class TestRunLoop:
    def test_run_over_time_grid(self):
        mesh, space, coeffs, mats, solver = small_setup(degree=1, nx=2, ny=2)
        init = InitialData(
            p0=lambda x: np.full(len(x), 0.1), q0=lambda x: np.full(len(x), 0.9)
        )
        state = solver.initialize(init)
        grid = TimeGrid.uniform(0.1, 5)
        final, reports = solver.run(state, grid)
        assert final.step_index == 5
        assert final.t == pytest.approx(0.1)
        assert len(reports) == 5
