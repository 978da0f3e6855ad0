"""Backward Euler time stepping with a one-field Newton solver.

Each implicit step solves the coupled nonlinear system for the transformed
variables (W_p, W_q); the auxiliary flux unknowns are eliminated through
the block-diagonal entropy-weighted vector mass, whose inverse is applied
per element. The eliminated form keeps the Jacobian sparse with at most
distance-2 element coupling, which a sparse direct factorization handles.
"""

from __future__ import annotations

import time as _time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import model
from .dgspace import DGField, DGSpace
from .ldg_ops import LDGMatrices, assemble_A_LDG
from .mesh import TimeGrid
from .model import InitialData, ProblemCoefficients, TransformOverflowError

Q_CONDITION_LIMIT = 1e14


class DegenerateSigmaSystemError(RuntimeError):
    """The entropy-weighted flux system degenerated (q grew too large)."""


def _vv_table(space: DGSpace) -> np.ndarray:
    """Flattened basis product table (nq, n_loc^2), cached on the space."""
    tab = getattr(space, "_vv_flat", None)
    if tab is None:
        V = space.ref_vals
        tab = np.einsum("ga,gb->gab", V, V).reshape(V.shape[0], -1)
        space._vv_flat = tab
    return tab


class NewtonDivergenceError(RuntimeError):
    def __init__(self, message: str, report: "NewtonReport"):
        super().__init__(message)
        self.report = report


@dataclass
class SolverConfig:
    epsilon: float = 0.0
    tol: float = 1e-10
    max_iterations: int = 50
    max_damping: int = 30
    check_tau_stability: bool = True
    delta_clamp: float = 1e-8
    # max-norm trust region on the transformed-variable update: keeps the
    # iterates out of the transform's saturated range, where the entropy
    # weights degenerate to round-off; inactive for regular step sizes
    max_w_step: float = 10.0
    # Jacobian-only floor on the u' mass weight (relative to the transform
    # scale): in saturated regions the true weight underflows and its rows
    # turn into round-off noise that poisons the Newton direction. The
    # residual is never modified, so converged solutions are unaffected.
    u_prime_floor: float = 1e-12
    # box |w| <= w_box enforced on accepted iterates (value space): beyond
    # |w| ~ 37 the transform saturates at double precision, so states are
    # equivalent there, while unbounded drift makes the entropy weights
    # degenerate (e^{|w|} factors) and poisons the flux Jacobian
    w_box: float = 45.0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("Newton tolerance must be positive")
        if self.epsilon < 0:
            raise ValueError("penalty parameter must be nonnegative")
        if self.max_w_step <= 0:
            raise ValueError("max_w_step must be positive")


@dataclass
class NewtonReport:
    iterations: int = 0
    final_residual: float = np.inf
    increment_norms: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    damping_activations: int = 0
    wall_time: float = 0.0
    tau_warning: bool = False


@dataclass
class StepState:
    """Transformed unknowns plus the projected previous-step concentrations."""

    W_p: DGField
    W_q: DGField
    Sigma_p: DGField
    Sigma_q: DGField
    U_p_prev: np.ndarray
    U_q_prev: np.ndarray
    t: float = 0.0
    step_index: int = 0


class NonlinearMass:
    """Entropy-weighted vector mass N(W) of one species: block diagonal,
    invertible per element, with a closed-form directional derivative."""

    def __init__(self, space: DGSpace, pair: model.EntropyPair, kind: str,
                 w_values: np.ndarray, D_volume: np.ndarray):
        self.space = space
        self.pair = pair
        self.kind = kind
        self.w_values = w_values
        self.D_volume = D_volume
        n = space.n_loc
        nel = space.n_elements
        V = space.ref_vals
        w_ref = space.quad.tri_weights
        weight = pair.s_second_of_w(w_values)  # (Nel, nq)
        if not np.isfinite(weight).all():
            raise model.TransformOverflowError(
                f"entropy weight overflow in the {kind}-species mass"
            )
        WD = (w_ref[None, :, None, None] * weight[:, :, None, None]) * D_volume
        nq = len(w_ref)
        VV = _vv_table(space)  # (nq, n*n)
        flat = np.matmul(WD.reshape(nel, nq, 4).transpose(0, 2, 1), VV)
        # flat[e, (c,d), (a,b)] -> blocks[e, (a,c), (b,d)]
        blocks = flat.reshape(nel, 2, 2, n, n).transpose(0, 3, 1, 4, 2)
        self.blocks = blocks.reshape(nel, 2 * n, 2 * n)
        try:
            self.inv_blocks = np.linalg.inv(self.blocks)
        except np.linalg.LinAlgError as exc:
            raise DegenerateSigmaSystemError(
                f"singular {kind}-species flux block: {exc}"
            )
        if kind == "q":
            # Degeneration means vanishing entropy weights (q grows without
            # bound), i.e. N_q nearly singular relative to the orthonormal
            # mass scale. Large weights in the q -> 0 tail are harmless.
            inv_norm = float(np.abs(self.inv_blocks).sum(axis=2).max())
            if inv_norm > Q_CONDITION_LIMIT:
                raise DegenerateSigmaSystemError(
                    f"degenerate sigma_q system (inverse norm {inv_norm:.2e})"
                )

    def apply(self, vec: np.ndarray) -> np.ndarray:
        n2 = self.blocks.shape[1]
        v = vec.reshape(-1, n2)
        return np.einsum("eij,ej->ei", self.blocks, v).ravel()

    def solve(self, vec: np.ndarray) -> np.ndarray:
        n2 = self.blocks.shape[1]
        v = vec.reshape(-1, n2)
        return np.einsum("eij,ej->ei", self.inv_blocks, v).ravel()

    def derivative_blocks(self, sigma_coef: np.ndarray) -> np.ndarray:
        """Blocks of d/dW [N(W) Sigma] at fixed Sigma: (Nel, 2n, n)."""
        space = self.space
        n = space.n_loc
        nel = space.n_elements
        V = space.ref_vals
        w_ref = space.quad.tri_weights
        sig = sigma_coef.reshape(nel, n, 2)
        sig_vals = np.matmul(sig.transpose(0, 2, 1), V.T) * space.scale[:, None, None]
        # sig_vals[e, c, g]; D sigma contracted over the tensor column
        Dsig = np.einsum("egcd,edg->ecg", self.D_volume, sig_vals)
        cw = self.pair.s_second_dw(self.w_values)  # (Nel, nq)
        t = Dsig * (w_ref[None, None, :] * cw[:, None, :])
        flat = np.matmul(t, _vv_table(space))  # (nel, 2, n*n)
        blk = flat.reshape(nel, 2, n, n).transpose(0, 2, 1, 3)
        return blk.reshape(nel, 2 * n, n)

    def derivative_action(self, sigma_coef: np.ndarray, direction: np.ndarray):
        """Directional derivative d/dh N(W + h V) Sigma at h = 0."""
        n = self.space.n_loc
        blk = self.derivative_blocks(sigma_coef)
        d = direction.reshape(-1, n)
        return np.einsum("eij,ej->ei", blk, d).ravel()


def assemble_nonlinear_mass(
    mats: LDGMatrices, coeffs: ProblemCoefficients, kind: str, W: DGField
) -> NonlinearMass:
    """Public constructor for the entropy-weighted vector mass operator."""
    if kind not in ("p", "q"):
        raise ValueError("kind must be 'p' or 'q'")
    space = mats.space
    w_vals = space.scalar_values(W)
    if not np.isfinite(w_vals).all():
        raise ValueError("non-finite transformed state")
    return NonlinearMass(space, coeffs.entropy_pair(kind), kind, w_vals, mats.D_volume)


# ---------------------------------------------------------------------------


class _FrozenPattern:
    """CSR pattern with a slot map for repeated numeric refills.

    An optional dof relabeling is baked into the slot map, so refills
    produce the permuted matrix directly.
    """

    def __init__(self, rows: np.ndarray, cols: np.ndarray, n: int,
                 relabel: Optional[np.ndarray] = None):
        if relabel is not None:
            rows = relabel[rows]
            cols = relabel[cols]
        keys = rows.astype(np.int64) * n + cols.astype(np.int64)
        uniq = np.unique(keys)
        self.slots = np.searchsorted(uniq, keys)
        self.indices = (uniq % n).astype(np.int32)
        self.indptr = np.searchsorted(uniq, np.arange(n + 1) * n).astype(np.int32)
        self.nnz = len(uniq)
        self.shape = (n, n)

    def build(self, values: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.slots, weights=values, minlength=self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


@dataclass
class _ResidualCache:
    w_vals_p: np.ndarray
    w_vals_q: np.ndarray
    u_vals_p: np.ndarray
    u_vals_q: np.ndarray
    N_p: NonlinearMass
    N_q: NonlinearMass
    Sigma_p: np.ndarray
    Sigma_q: np.ndarray
    U_p: np.ndarray
    U_q: np.ndarray
    F_p: np.ndarray
    F_q: np.ndarray
    G_p: np.ndarray
    G_q: np.ndarray

    @property
    def res_p(self) -> float:
        return float(np.linalg.norm(self.G_p))

    @property
    def res_q(self) -> float:
        return float(np.linalg.norm(self.G_q))

    @property
    def res_total(self) -> float:
        return float(np.hypot(self.res_p, self.res_q))


class BackwardEulerSolver:
    """Implicit stepper bound to one discretization and coefficient set."""

    def __init__(self, mats: LDGMatrices, coeffs: ProblemCoefficients,
                 cfg: Optional[SolverConfig] = None):
        self.mats = mats
        self.coeffs = coeffs
        self.cfg = cfg or SolverConfig()
        self.space = mats.space
        self.pair_p = coeffs.entropy_pair("p")
        self.pair_q = coeffs.entropy_pair("q")
        space = self.space
        n = space.n_loc
        nel = space.n_elements
        self._V = space.ref_vals
        self._VV = np.einsum("ga,gb->gab", self._V, self._V)
        self._VVf = self._VV.reshape(self._VV.shape[0], -1)
        # per-element coefficients of the constant-1 field
        self._unit_constant_coef = (
            np.einsum("g,ga->a", space.quad.tri_weights, self._V)[None, :]
            * np.sqrt(space.jac_det)[:, None]
        )
        self._wref = space.quad.tri_weights
        self._sqrt_det = np.sqrt(space.jac_det)
        self._phys_flat = space.phys_points.reshape(-1, 2)

        if self.cfg.epsilon > 0:
            self._epsA = self.cfg.epsilon * assemble_A_LDG(mats)
        else:
            self._epsA = None

        # Frozen per-species Jacobian pattern: distance-2 couplings from the
        # eliminated flux term, penalty couplings, reaction/mass diagonal.
        # Padded neighbor slots carry zero values; remapping them onto the
        # element's own diagonal block keeps them out of the sparsity pattern.
        nbr = mats.neighbors.copy()
        nbr = np.where(nbr < 0, np.arange(nel)[:, None], nbr)
        loc = np.arange(n)
        NW = space.n_scalar
        colblk = (nbr[:, :, None] * n + loc[None, None, :]).reshape(nel, 4 * n)
        r1 = np.broadcast_to(colblk[:, :, None], (nel, 4 * n, 4 * n)).ravel()
        c1 = np.broadcast_to(colblk[:, None, :], (nel, 4 * n, 4 * n)).ravel()
        r2 = np.broadcast_to(colblk[:, :, None], (nel, 4 * n, n)).ravel()
        own = np.arange(nel)[:, None] * n + loc[None, :]
        c2 = np.broadcast_to(own[:, None, :], (nel, 4 * n, n)).ravel()
        r3 = np.broadcast_to(own[:, :, None], (nel, n, n)).ravel()
        c3 = np.broadcast_to(own[:, None, :], (nel, n, n)).ravel()
        Jcoo = mats.J.tocoo()
        self._J_data = Jcoo.data.copy()
        sp_rows = [r1, r2, r3, Jcoo.row]
        sp_cols = [c1, c2, c3, Jcoo.col]
        if self._epsA is not None:
            Acoo = self._epsA.tocoo()
            sp_rows.append(Acoo.row)
            sp_cols.append(Acoo.col)
            self._epsA_data = Acoo.data.copy()
        else:
            self._epsA_data = None
        self.pattern = _FrozenPattern(
            np.concatenate(sp_rows), np.concatenate(sp_cols), NW
        )
        # bandwidth-reducing relabeling for the per-species factorizations
        from scipy.sparse.csgraph import reverse_cuthill_mckee

        pat = sp.csr_matrix(
            (np.ones(self.pattern.nnz), self.pattern.indices, self.pattern.indptr),
            shape=(NW, NW),
        )
        self._perm = np.asarray(
            reverse_cuthill_mckee(pat, symmetric_mode=True), dtype=np.int64
        )

    # -- pointwise helpers --------------------------------------------------

    def _project_values(self, vals: np.ndarray) -> np.ndarray:
        """Exact L2 projection of per-quadrature-point values (orthonormal)."""
        return (
            np.einsum("eg,g,ga->ea", vals, self._wref, self._V)
            * self._sqrt_det[:, None]
        ).ravel()

    def _source_vector(self, which: str, t_new: float) -> Optional[np.ndarray]:
        src = self.coeffs.source_p if which == "p" else self.coeffs.source_q
        if src is None:
            return None
        vals = np.asarray(src(self._phys_flat, t_new), dtype=float)
        return self._project_values(vals.reshape(self.space.n_elements, -1))

    # -- residual -----------------------------------------------------------

    def residual_cache(self, Wp: np.ndarray, Wq: np.ndarray, state: StepState,
                       tau: float, t_new: float) -> _ResidualCache:
        space, mats = self.space, self.mats
        nel, n = space.n_elements, space.n_loc
        wv_p = (Wp.reshape(nel, n) @ self._V.T) * space.scale[:, None]
        wv_q = (Wq.reshape(nel, n) @ self._V.T) * space.scale[:, None]
        u_p = self.pair_p.u(wv_p)
        u_q = self.pair_q.u(wv_q)  # may raise TransformOverflowError
        N_p = NonlinearMass(space, self.pair_p, "p", wv_p, mats.D_volume)
        N_q = NonlinearMass(space, self.pair_q, "q", wv_q, mats.D_volume)
        Sig_p = -N_p.solve(mats.C @ Wp)
        Sig_q = -N_q.solve(mats.C @ Wq)
        U_p = self._project_values(u_p)
        U_q = self._project_values(u_q)
        f_p, f_q = model.reaction(u_p, u_q, self.coeffs)
        F_p = self._project_values(f_p)
        F_q = self._project_values(f_q)
        g_p = self._source_vector("p", t_new)
        g_q = self._source_vector("q", t_new)
        if g_p is not None:
            F_p += g_p
        if g_q is not None:
            F_q += g_q

        def one(W, Sig, U, F, U_prev):
            G = (U - U_prev) / tau - mats.C.T @ Sig + mats.J @ W - F
            if self._epsA is not None:
                G += self._epsA @ W
            return G

        G_p = one(Wp, Sig_p, U_p, F_p, state.U_p_prev)
        G_q = one(Wq, Sig_q, U_q, F_q, state.U_q_prev)
        return _ResidualCache(
            wv_p, wv_q, u_p, u_q, N_p, N_q, Sig_p, Sig_q, U_p, U_q,
            F_p, F_q, G_p, G_q,
        )

    def residual(self, Wp, Wq, state, tau, t_new):
        """Coupled one-field residual vectors (G_p, G_q)."""
        cache = self.residual_cache(Wp, Wq, state, tau, t_new)
        return cache.G_p, cache.G_q

    # -- Jacobian -----------------------------------------------------------

    def _species_values(self, N: NonlinearMass, Sigma: np.ndarray,
                        u_prime_vals: np.ndarray, dff_vals: np.ndarray,
                        tau: float) -> list[np.ndarray]:
        """Value arrays of A_* = eps A + (1/tau) M[u'] + C^T N^-1 C + P + J
        - M[df/d* u'], in the frozen pattern's group order."""
        mats = self.mats
        Ct = mats.C_dense.transpose(0, 2, 1)
        T1 = np.matmul(N.inv_blocks, mats.C_dense)
        S = np.matmul(Ct, T1)
        # with Sigma = -N^-1 C W, the derivative of C^T N^-1 C W contributes
        # + C^T N^-1 (dN/dW)[Sigma]
        Gblk = N.derivative_blocks(Sigma)
        P = np.matmul(T1.transpose(0, 2, 1), Gblk)
        wdiag = self._wref[None, :] * (u_prime_vals / tau - dff_vals)
        n = self.space.n_loc
        Mdiag = np.matmul(wdiag, self._VVf).reshape(-1, n, n)
        values = [S.ravel(), P.ravel(), Mdiag.ravel(), self._J_data]
        if self._epsA_data is not None:
            values.append(self._epsA_data)
        return values

    def jacobian_blocks(self, cache: _ResidualCache, tau: float):
        """Diagonal species matrices and the block-diagonal reaction
        couplings of the Newton system."""
        nel = self.space.n_elements
        up_prime = self.pair_p.u_prime(cache.w_vals_p)
        uq_prime = self.pair_q.u_prime(cache.w_vals_q)
        (dfp_dp, dfp_dq), (dfq_dp, dfq_dq) = model.reaction_jacobian(
            cache.u_vals_p, cache.u_vals_q, self.coeffs
        )
        floor_p = self.cfg.u_prime_floor * self.coeffs.E_p
        floor_q = self.cfg.u_prime_floor * self.coeffs.E_q
        A_p = self.pattern.build(
            np.concatenate(
                self._species_values(
                    cache.N_p, cache.Sigma_p, np.maximum(up_prime, floor_p),
                    dfp_dp * up_prime, tau,
                )
            )
        )
        A_q = self.pattern.build(
            np.concatenate(
                self._species_values(
                    cache.N_q, cache.Sigma_q, np.maximum(uq_prime, floor_q),
                    dfq_dq * uq_prime, tau,
                )
            )
        )
        cpl_pq = -np.einsum(
            "eg,gab->eab", self._wref[None, :] * (dfp_dq * uq_prime), self._VV
        )
        cpl_qp = -np.einsum(
            "eg,gab->eab", self._wref[None, :] * (dfq_dp * up_prime), self._VV
        )
        NW = self.space.n_scalar
        B_pq = sp.bsr_matrix(
            (cpl_pq, np.arange(nel), np.arange(nel + 1)), shape=(NW, NW)
        ).tocsr()
        B_qp = sp.bsr_matrix(
            (cpl_qp, np.arange(nel), np.arange(nel + 1)), shape=(NW, NW)
        ).tocsr()
        return A_p, A_q, B_pq, B_qp

    def jacobian(self, cache: _ResidualCache, tau: float) -> sp.csr_matrix:
        """Full coupled Jacobian of (G_p, G_q) wrt (W_p, W_q)."""
        A_p, A_q, B_pq, B_qp = self.jacobian_blocks(cache, tau)
        return sp.bmat([[A_p, B_pq], [B_qp, A_q]], format="csr")

    # -- Newton iteration ---------------------------------------------------

    def _factor(self, A: sp.csr_matrix):
        perm = self._perm
        Ap = A[perm][:, perm].tocsc()
        lu = spla.splu(Ap, permc_spec="NATURAL", options={"SymmetricMode": True})

        def solve(b):
            x = np.empty_like(b)
            x[perm] = lu.solve(b[perm])
            return x

        return solve

    def _solve_coupled(self, A_p, A_q, B_pq, B_qp, rhs_p, rhs_q):
        """Direct per-species factorizations plus block Gauss-Seidel on the
        reaction coupling, iterated to direct-solve accuracy.

        The couplings carry a factor tau relative to the diagonal blocks, so
        the iteration contracts fast; if it stalls, the coupled system is
        factored as a whole instead.
        """
        solve_p = self._factor(A_p)
        solve_q = self._factor(A_q)
        scale = max(float(np.linalg.norm(rhs_p)), float(np.linalg.norm(rhs_q)), 1e-300)
        dp = solve_p(rhs_p)
        dq = solve_q(rhs_q - B_qp @ dp)
        res_prev = np.inf
        for _ in range(40):
            r_p = rhs_p - A_p @ dp - B_pq @ dq
            r_q = rhs_q - A_q @ dq - B_qp @ dp
            res = float(np.hypot(np.linalg.norm(r_p), np.linalg.norm(r_q)))
            if res <= 1e-12 * scale:
                return dp, dq
            if res >= 0.5 * res_prev:
                # stagnation: accept at inexact-Newton forcing accuracy (the
                # nonlinear stopping test is evaluated on exact residuals, so
                # the step tolerance is unaffected), else factor the coupled
                # system as a whole
                if res <= 1e-6 * scale:
                    return dp, dq
                break
            res_prev = res
            dp = dp + solve_p(r_p)
            dq = dq + solve_q(rhs_q - A_q @ dq - B_qp @ dp)
        K = sp.bmat([[A_p, B_pq], [B_qp, A_q]], format="csc")
        lu = spla.splu(K)
        delta = lu.solve(np.concatenate([rhs_p, rhs_q]))
        nW = self.space.n_scalar
        return delta[:nW], delta[nW:]

    def _project_box(self, W: np.ndarray) -> np.ndarray:
        """Pin fully saturated elements to the constant +/- w_box field.

        Beyond |w| ~ 37 the transforms saturate at double precision, so an
        element whose values all sit past the box represents the same
        concentrations as the constant-box element while its unbounded
        drift degenerates the entropy weights. Replacing it by the exact
        constant is idempotent and leaves transition elements untouched,
        so the residual stays continuous along the line search.
        """
        box = self.cfg.w_box
        space = self.space
        vals = (W.reshape(space.n_elements, space.n_loc) @ self._V.T)
        vals *= space.scale[:, None]
        hi = vals.min(axis=1) >= box
        lo = vals.max(axis=1) <= -box
        if not (hi.any() or lo.any()):
            return W
        out = W.reshape(space.n_elements, space.n_loc).copy()
        const_coef = self._unit_constant_coef  # projection of the constant 1
        out[hi] = box * const_coef[hi]
        out[lo] = -box * const_coef[lo]
        return out.ravel()

    def newton_step(self, Wp, Wq, cache, state, tau, t_new):
        """One damped Newton iteration; returns the accepted point."""
        A_p, A_q, B_pq, B_qp = self.jacobian_blocks(cache, tau)
        try:
            dWp, dWq = self._solve_coupled(
                A_p, A_q, B_pq, B_qp, -cache.G_p, -cache.G_q
            )
        except RuntimeError as exc:
            raise NewtonDivergenceError(f"linear solve failed: {exc}", NewtonReport())

        res_old = cache.res_total
        dmax = max(np.abs(dWp).max(), np.abs(dWq).max(), 1e-300)
        step = min(1.0, self.cfg.max_w_step / dmax)
        dampings = 0
        best = None
        for _ in range(self.cfg.max_damping + 1):
            Wp_t = self._project_box(Wp + step * dWp)
            Wq_t = self._project_box(Wq + step * dWq)
            try:
                trial = self.residual_cache(Wp_t, Wq_t, state, tau, t_new)
                res_new = trial.res_total
            except (TransformOverflowError, DegenerateSigmaSystemError):
                res_new = np.inf
            if np.isfinite(res_new) and (res_new <= res_old or res_new <= self.cfg.tol):
                best = (Wp_t, Wq_t, trial)
                break
            step *= 0.5
            dampings += 1
        if best is None:
            raise NewtonDivergenceError(
                f"residual increased after {self.cfg.max_damping} dampings "
                f"(residual {res_old:.3e})",
                NewtonReport(),
            )
        Wp_t, Wq_t, trial = best
        inc = float(
            np.hypot(np.linalg.norm(Wp_t - Wp), np.linalg.norm(Wq_t - Wq))
        )
        return Wp_t, Wq_t, trial, inc, dampings

    # -- time stepping ------------------------------------------------------

    def advance(self, state: StepState, tau: float) -> tuple[StepState, NewtonReport]:
        """Take one backward Euler step of size tau."""
        if tau <= 0:
            raise ValueError("time step must be positive")
        report = NewtonReport()
        t0 = _time.perf_counter()
        if (
            self.cfg.check_tau_stability
            and not self.coeffs.has_sources
            and self.coeffs.upsilon_pq > 0
        ):
            Cf = model.reaction_bound_constant(self.coeffs)
            if tau >= 1.0 / (2.0 * Cf):
                report.tau_warning = True
                warnings.warn(
                    f"time step tau={tau:g} violates the entropy-stability "
                    f"hypothesis tau < 1/(2*C_f) = {1.0 / (2.0 * Cf):g}",
                    stacklevel=2,
                )
        t_new = state.t + tau
        Wp = state.W_p.coef.copy()
        Wq = state.W_q.coef.copy()
        cache = self.residual_cache(Wp, Wq, state, tau, t_new)
        converged = False
        for it in range(1, self.cfg.max_iterations + 1):
            try:
                Wp, Wq, cache, inc, dampings = self.newton_step(
                    Wp, Wq, cache, state, tau, t_new
                )
            except NewtonDivergenceError as exc:
                exc.report = report
                report.wall_time = _time.perf_counter() - t0
                raise
            res_sum = cache.res_p + cache.res_q
            report.iterations = it
            report.increment_norms.append(inc)
            report.residual_norms.append(res_sum)
            report.damping_activations += dampings
            if min(inc, abs(res_sum)) <= self.cfg.tol:
                converged = True
                break
        report.final_residual = cache.res_p + cache.res_q
        report.wall_time = _time.perf_counter() - t0
        if not converged:
            raise NewtonDivergenceError(
                f"Newton did not converge in {self.cfg.max_iterations} iterations "
                f"(residual {report.final_residual:.3e})",
                report,
            )
        space = self.space
        new_state = StepState(
            W_p=DGField(space, "scalar", Wp),
            W_q=DGField(space, "scalar", Wq),
            Sigma_p=DGField(space, "vector", cache.Sigma_p),
            Sigma_q=DGField(space, "vector", cache.Sigma_q),
            U_p_prev=cache.U_p.copy(),
            U_q_prev=cache.U_q.copy(),
            t=t_new,
            step_index=state.step_index + 1,
        )
        return new_state, report

    # -- initialization -----------------------------------------------------

    def initialize(self, initial: InitialData) -> StepState:
        """Project initial data and build the clamped Newton starting guess.

        The previous-step vectors are the plain projections of the data, as
        the scheme prescribes. The Newton start transforms the clamped data
        pointwise and projects the result: where the data saturates
        exponentially this yields the near-linear transformed profile the
        converged state actually has, while a transform of the projected
        data would start from flat clamped tails far from it.
        """
        space, coeffs, cfg = self.space, self.coeffs, self.cfg
        initial.validate(coeffs, self._phys_flat)
        nel = space.n_elements
        p0 = np.asarray(initial.p0(self._phys_flat), dtype=float).reshape(nel, -1)
        q0 = np.asarray(initial.q0(self._phys_flat), dtype=float).reshape(nel, -1)
        U_p_prev = self._project_values(p0)
        U_q_prev = self._project_values(q0)

        Ep, Eq = coeffs.E_p, coeffs.E_q
        d = cfg.delta_clamp
        p_clamped = np.clip(p0, d * Ep, (1.0 - d) * Ep)
        q_clamped = np.clip(q0, d * Eq, None)
        Wp = self._project_values(model.s_p_prime(p_clamped, Ep))
        Wq = self._project_values(model.s_q_prime(q_clamped, Eq))

        N_p = NonlinearMass(
            space, self.pair_p, "p",
            space.scalar_values(DGField(space, "scalar", Wp)), self.mats.D_volume,
        )
        N_q = NonlinearMass(
            space, self.pair_q, "q",
            space.scalar_values(DGField(space, "scalar", Wq)), self.mats.D_volume,
        )
        Sig_p = -N_p.solve(self.mats.C @ Wp)
        Sig_q = -N_q.solve(self.mats.C @ Wq)
        return StepState(
            W_p=DGField(space, "scalar", Wp),
            W_q=DGField(space, "scalar", Wq),
            Sigma_p=DGField(space, "vector", Sig_p),
            Sigma_q=DGField(space, "vector", Sig_q),
            U_p_prev=U_p_prev,
            U_q_prev=U_q_prev,
        )

    def run(
        self,
        initial_state: StepState,
        grid: TimeGrid,
        callback: Optional[Callable[[StepState, NewtonReport], None]] = None,
    ) -> tuple[StepState, list[NewtonReport]]:
        """Step through a full time grid, optionally reporting each step."""
        state = initial_state
        reports = []
        for tau in grid.steps:
            state, rep = self.advance(state, float(tau))
            reports.append(rep)
            if callback is not None:
                callback(state, rep)
        return state, reports


# ---------------------------------------------------------------------------
# module-level wrappers matching the operation map


def initialize(
    mats: LDGMatrices,
    coeffs: ProblemCoefficients,
    initial: InitialData,
    cfg: Optional[SolverConfig] = None,
) -> StepState:
    return BackwardEulerSolver(mats, coeffs, cfg).initialize(initial)


def advance(
    state: StepState,
    mats: LDGMatrices,
    coeffs: ProblemCoefficients,
    cfg: SolverConfig,
    tau: float,
):
    return BackwardEulerSolver(mats, coeffs, cfg).advance(state, tau)


# ---------------------------------------------------------------------------
# two-field Newton step (cross-validation of the eliminated form)


def newton_step_two_field(
    solver: BackwardEulerSolver,
    Wp: np.ndarray,
    Wq: np.ndarray,
    Sp: np.ndarray,
    Sq: np.ndarray,
    state: StepState,
    tau: float,
    t_new: float,
):
    """One undamped Newton iteration on the full (Sigma, W) system.

    Returns (W_p, W_q, Sigma_p, Sigma_q) at the next iterate. Used to
    validate that eliminating the flux unknowns leaves the W-iterates
    unchanged.
    """
    mats, space = solver.mats, solver.space
    nel = space.n_elements
    NW, NR = space.n_scalar, space.n_vector
    cache = solver.residual_cache(Wp, Wq, state, tau, t_new)
    up_prime = solver.pair_p.u_prime(cache.w_vals_p)
    uq_prime = solver.pair_q.u_prime(cache.w_vals_q)
    (dfp_dp, dfp_dq), (dfq_dp, dfq_dq) = model.reaction_jacobian(
        cache.u_vals_p, cache.u_vals_q, solver.coeffs
    )

    def mass(diag_vals):
        blocks = np.einsum(
            "eg,gab->eab", solver._wref[None, :] * diag_vals, solver._VV
        )
        return sp.bsr_matrix(
            (blocks, np.arange(nel), np.arange(nel + 1)), shape=(NW, NW)
        ).tocsr()

    pieces = {}
    for star, N, Sig in (("p", cache.N_p, Sp), ("q", cache.N_q, Sq)):
        Gmat = sp.bsr_matrix(
            (N.derivative_blocks(Sig), np.arange(nel), np.arange(nel + 1)),
            shape=(NR, NW),
        ).tocsr()
        Nmat = sp.bsr_matrix(
            (N.blocks, np.arange(nel), np.arange(nel + 1)), shape=(NR, NR)
        ).tocsr()
        pieces[star] = (Nmat, Gmat)

    M_dpp = mass(dfp_dp * up_prime)
    M_dpq = mass(dfp_dq * uq_prime)
    M_dqp = mass(dfq_dp * up_prime)
    M_dqq = mass(dfq_dq * uq_prime)
    Mu_p = mass(up_prime / tau)
    Mu_q = mass(uq_prime / tau)
    Awp = Mu_p + mats.J - M_dpp
    Awq = Mu_q + mats.J - M_dqq
    if solver._epsA is not None:
        Awp = Awp + solver._epsA
        Awq = Awq + solver._epsA

    Np_, Gp_ = pieces["p"]
    Nq_, Gq_ = pieces["q"]
    K = sp.bmat(
        [
            [Np_, Gp_ + mats.C, None, None],
            [-mats.C.T, Awp, None, -M_dpq],
            [None, None, Nq_, Gq_ + mats.C],
            [None, -M_dqp, -mats.C.T, Awq],
        ],
        format="csc",
    )
    rhs = np.concatenate(
        [
            Gp_ @ Wp,
            Mu_p @ Wp - M_dpp @ Wp - M_dpq @ Wq
            - (cache.U_p - state.U_p_prev) / tau + cache.F_p,
            Gq_ @ Wq,
            Mu_q @ Wq - M_dqp @ Wp - M_dqq @ Wq
            - (cache.U_q - state.U_q_prev) / tau + cache.F_q,
        ]
    )
    x = spla.spsolve(K, rhs)
    Sp_new = x[:NR]
    Wp_new = x[NR : NR + NW]
    Sq_new = x[NR + NW : 2 * NR + NW]
    Wq_new = x[2 * NR + NW :]
    return Wp_new, Wq_new, Sp_new, Sq_new
