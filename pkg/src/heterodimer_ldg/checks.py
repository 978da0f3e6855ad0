"""Randomized property sweep behind the ``check`` subcommand.

Each check prints one line; the return value counts failures. These mirror
the structural identities the scheme is built on: operator adjointness,
penalty kernel, symmetry of the composed diffusion operator, the reaction
entropy bound, Jacobian consistency, and transform roundtrips.
"""

from __future__ import annotations

import numpy as np

from . import model
from .dgspace import DGField, DGSpace
from .ldg_ops import DiffusionTensor, assemble_core, div_ldg, grad_ldg
from .mesh import Rectangle, build_structured_mesh
from .solver import BackwardEulerSolver, SolverConfig


def _report(name: str, passed: bool, detail: str = "") -> int:
    status = "ok" if passed else "FAIL"
    print(f"  [{status}] {name}" + (f" ({detail})" if detail else ""))
    return 0 if passed else 1


def run_all(seed: int = 0, verbose: bool = True) -> int:
    rng = np.random.default_rng(seed)
    failures = 0
    mesh = build_structured_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), 4, 4)
    space = DGSpace(mesh, 2)
    D = DiffusionTensor.isotropic(1.0)
    mats = assemble_core(mesh, space, D)

    # adjointness of the discrete gradient/divergence pair
    w = DGField(space, "scalar", rng.standard_normal(space.n_scalar))
    r = DGField(space, "vector", rng.standard_normal(space.n_vector))
    lhs = div_ldg(mats, r).coef @ w.coef + r.coef @ grad_ldg(mats, w).coef
    scale = max(np.linalg.norm(r.coef) * np.linalg.norm(w.coef), 1.0)
    failures += _report("gradient/divergence adjointness", abs(lhs) / scale <= 1e-12,
                        f"residual {abs(lhs)/scale:.2e}")

    # symmetry of the composed second-order operator
    op = (mats.B.T @ mats.M_D @ mats.B).toarray()
    asym = np.abs(op - op.T).max()
    failures += _report("composed diffusion operator symmetry", asym <= 1e-12,
                        f"asymmetry {asym:.2e}")

    # jump penalty kernel contains continuous interpolants
    aff = space.project_scalar(lambda x: 1.7 * x[:, 0] - 0.3 * x[:, 1] + 0.5)
    jres = np.abs(mats.J @ aff.coef).max()
    failures += _report("penalty kernel on continuous field", jres <= 1e-11,
                        f"max residual {jres:.2e}")

    # reaction entropy bound on dense admissible grids
    coeff_sets = {
        "wave": model.ProblemCoefficients(0.1, 0.1, 1.0, 0.1,
                                          D=DiffusionTensor.isotropic(0.0375)),
        "focus": model.ProblemCoefficients(0.2, 4.5, 1.0, 4.0,
                                           D=DiffusionTensor.isotropic(0.0375)),
        "node": model.ProblemCoefficients(0.1, 0.1, 1.0, 0.1,
                                          D=DiffusionTensor.isotropic(1e-2)),
    }
    for name, coeffs in coeff_sets.items():
        pg = np.linspace(1e-6, 1.0 - 1e-6, 200) * coeffs.equilibrium_p
        qg = np.linspace(1e-6, 50.0, 200) * coeffs.equilibrium_q
        P, Q = np.meshgrid(pg, qg)
        res = model.reaction_bound_residual(P.ravel(), Q.ravel(), coeffs)
        failures += _report(f"reaction entropy bound [{name}]", res.min() >= 0.0,
                            f"min residual {res.min():.3e}")

    # coupled Jacobian against central finite differences
    mesh2 = build_structured_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), 1, 1)
    space2 = DGSpace(mesh2, 1)
    coeffs = coeff_sets["wave"]
    mats2 = assemble_core(mesh2, space2, coeffs.D)
    sol = BackwardEulerSolver(mats2, coeffs, SolverConfig(check_tau_stability=False))
    init = model.InitialData(p0=lambda x: 0.4 + 0.1 * x[:, 0],
                             q0=lambda x: 0.5 + 0.2 * x[:, 1])
    state = sol.initialize(init)
    n = space2.n_scalar
    tau = 0.01
    worst = 0.0
    for _ in range(5):
        Wp = state.W_p.coef + 0.3 * rng.standard_normal(n)
        Wq = state.W_q.coef + 0.3 * rng.standard_normal(n)
        cache = sol.residual_cache(Wp, Wq, state, tau, tau)
        K = sol.jacobian(cache, tau).toarray()
        Kfd = np.zeros_like(K)
        h = 1e-6
        for j in range(2 * n):
            dp = np.zeros(n)
            dq = np.zeros(n)
            (dp if j < n else dq)[j % n] = h
            Gp1, Gq1 = sol.residual(Wp + dp, Wq + dq, state, tau, tau)
            Gp0, Gq0 = sol.residual(Wp - dp, Wq - dq, state, tau, tau)
            Kfd[:, j] = np.concatenate([Gp1 - Gp0, Gq1 - Gq0]) / (2 * h)
        worst = max(worst, np.abs(K - Kfd).max() / np.abs(Kfd).max())
    failures += _report("Newton Jacobian vs finite differences", worst <= 1e-6,
                        f"max rel err {worst:.2e}")

    # transform roundtrips
    ws = rng.uniform(-40.0, 40.0, 1000)
    Ep = 1.3
    p, comp = model.u_p(ws, Ep), model.u_p_complement(ws, Ep)
    back = model.s_p_prime(p, Ep, complement=comp)
    err_p = np.abs(back - ws).max() / 40.0
    ws_q = rng.uniform(-30.0, 30.0, 1000)
    err_q = np.abs(model.s_q_prime(model.u_q(ws_q, 0.9), 0.9) - ws_q).max() / 30.0
    failures += _report("transform roundtrips", err_p <= 1e-9 and err_q <= 1e-12,
                        f"p {err_p:.2e}, q {err_q:.2e}")

    if verbose:
        print(("all checks passed" if failures == 0
               else f"{failures} check(s) FAILED"))
    return failures
