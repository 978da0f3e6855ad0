"""Error norms, entropy monitors, bound audits and convergence tables.

Error norms are evaluated with a quadrature rule two polynomial degrees
above the assembly rule, so the reported values are insensitive to the
integration error of the non-polynomial transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import model
from .dgspace import DGField, DGSpace, eval_modal_basis
from .ldg_ops import LDGMatrices
from .model import ProblemCoefficients
from .solver import StepState


@dataclass
class ErrorRecord:
    """Final-time L2 errors of one run at one resolution."""

    h: float
    degree: int
    tau: float
    E_p: float = np.nan
    E_q: float = np.nan
    E_sigp: float = np.nan
    E_sigq: float = np.nan

    def as_row(self) -> dict:
        return {
            "h": self.h,
            "ell": self.degree,
            "tau": self.tau,
            "E_p": self.E_p,
            "E_q": self.E_q,
            "E_sigp": self.E_sigp,
            "E_sigq": self.E_sigq,
        }


class _ErrorRule:
    """Cached elevated-order evaluation tables for one space."""

    def __init__(self, space: DGSpace, extra: int = 2):
        self.space = space
        self.pts, self.w, self.vals, self.phys = space.error_context(extra)

    def scalar_values(self, coef: np.ndarray) -> np.ndarray:
        c = coef.reshape(self.space.n_elements, self.space.n_loc)
        return np.einsum("ea,ga->eg", c, self.vals) * self.space.scale[:, None]

    def vector_values(self, coef: np.ndarray) -> np.ndarray:
        c = coef.reshape(self.space.n_elements, self.space.n_loc, 2)
        return (
            np.einsum("eac,ga->egc", c, self.vals) * self.space.scale[:, None, None]
        )

    def integral(self, vals: np.ndarray) -> float:
        return float(np.einsum("eg,g,e->", vals, self.w, self.space.jac_det))

    def flat_points(self) -> np.ndarray:
        return self.phys.reshape(-1, 2)


def _error_rule(space: DGSpace, extra: int = 2) -> _ErrorRule:
    cache = getattr(space, "_error_rules", None)
    if cache is None:
        cache = {}
        space._error_rules = cache
    if extra not in cache:
        cache[extra] = _ErrorRule(space, extra)
    return cache[extra]


def primal_error(
    field_w: DGField,
    exact: Callable[[np.ndarray], np.ndarray],
    transform: Callable[[np.ndarray], np.ndarray],
    extra_exactness: int = 2,
) -> float:
    """L2 distance between the exact concentration and u(w_h) at final time."""
    rule = _error_rule(field_w.space, extra_exactness)
    wv = rule.scalar_values(field_w.coef)
    uv = transform(wv)
    ev = np.asarray(exact(rule.flat_points()), dtype=float).reshape(uv.shape)
    return math.sqrt(rule.integral((uv - ev) ** 2))


def flux_error(
    field_sigma: DGField,
    exact_grad: Callable[[np.ndarray], np.ndarray],
    extra_exactness: int = 2,
) -> float:
    """L2 norm of grad(exact) + sigma_h (sigma approximates the negative
    gradient)."""
    rule = _error_rule(field_sigma.space, extra_exactness)
    sv = rule.vector_values(field_sigma.coef)
    gv = np.asarray(exact_grad(rule.flat_points()), dtype=float).reshape(sv.shape)
    diff = gv + sv
    return math.sqrt(rule.integral(np.einsum("egc,egc->eg", diff, diff)))


def field_l2_norm(field: DGField) -> float:
    return field.l2_norm()


# ---------------------------------------------------------------------------
# entropy monitoring


@dataclass
class EntropyTrace:
    """Per-step entropy and dissipation history of a transient run."""

    times: list = field(default_factory=list)
    S_p: list = field(default_factory=list)
    S_q: list = field(default_factory=list)
    sigma_p_norm2: list = field(default_factory=list)
    sigma_q_norm2: list = field(default_factory=list)
    jump_p: list = field(default_factory=list)
    jump_q: list = field(default_factory=list)
    dg_p: list = field(default_factory=list)
    dg_q: list = field(default_factory=list)

    @property
    def S_total(self) -> np.ndarray:
        return np.asarray(self.S_p) + np.asarray(self.S_q)


def entropy_integrals(state: StepState, coeffs: ProblemCoefficients) -> tuple[float, float]:
    """Entropy functionals of the current transformed state."""
    space = state.W_p.space
    rule = _error_rule(space)
    wp = rule.scalar_values(state.W_p.coef)
    wq = rule.scalar_values(state.W_q.coef)
    sp_vals = model.s_p_of_w(wp, coeffs.E_p)
    sq_vals = model.s_q_of_w(wq, coeffs.E_q)
    return rule.integral(sp_vals), rule.integral(sq_vals)


def initial_entropy_integrals(
    initial: model.InitialData, coeffs: ProblemCoefficients, space: DGSpace,
    clamp: float = 1e-14,
) -> tuple[float, float]:
    """Entropy of the continuous initial data (clamped to the open range)."""
    rule = _error_rule(space)
    pts = rule.flat_points()
    nel = space.n_elements
    p0 = np.clip(
        np.asarray(initial.p0(pts), dtype=float),
        clamp * coeffs.E_p,
        (1.0 - clamp) * coeffs.E_p,
    ).reshape(nel, -1)
    q0 = np.clip(np.asarray(initial.q0(pts), dtype=float), clamp * coeffs.E_q, None)
    q0 = q0.reshape(nel, -1)
    sp_vals = model.s_p(p0, coeffs.E_p)
    sq_vals = model.s_q(q0, coeffs.E_q)
    return rule.integral(sp_vals), rule.integral(sq_vals)


def record_entropy(
    trace: EntropyTrace,
    state: StepState,
    coeffs: ProblemCoefficients,
    mats: LDGMatrices,
    epsilon: float = 0.0,
) -> None:
    from .ldg_ops import dg_norm

    Sp, Sq = entropy_integrals(state, coeffs)
    trace.times.append(state.t)
    trace.S_p.append(Sp)
    trace.S_q.append(Sq)
    trace.sigma_p_norm2.append(float(state.Sigma_p.coef @ state.Sigma_p.coef))
    trace.sigma_q_norm2.append(float(state.Sigma_q.coef @ state.Sigma_q.coef))
    trace.jump_p.append(float(state.W_p.coef @ (mats.J @ state.W_p.coef)))
    trace.jump_q.append(float(state.W_q.coef @ (mats.J @ state.W_q.coef)))
    if epsilon > 0.0:
        trace.dg_p.append(dg_norm(mats, state.W_p) ** 2)
        trace.dg_q.append(dg_norm(mats, state.W_q) ** 2)
    else:
        trace.dg_p.append(0.0)
        trace.dg_q.append(0.0)


@dataclass
class EntropyCheckResult:
    passed: bool
    min_slack_step: float
    min_slack_aggregate: float
    violations: list


def entropy_step_check(
    trace: EntropyTrace,
    coeffs: ProblemCoefficients,
    tau: float,
    domain_area: float,
    quasi_uniformity: float = 1.0,
    final_time: Optional[float] = None,
    epsilon: float = 0.0,
    tol: float = 1e-10,
) -> EntropyCheckResult:
    """Per-step entropy inequalities along a source-free run.

    Checks, for every step, the q-entropy recursion
    ``(1 - C_f tau) S_q^{n+1} <= S_q^n + C_f E_q tau |Omega|`` and the
    aggregate stability bound with the q-flux dissipation term dropped (its
    constant involves an unknowable exponential factor, and dropping a
    nonnegative left-hand term weakens the inequality without invalidating
    it). Violations are reported, not raised.
    """
    if coeffs.has_sources:
        raise ValueError("the entropy monitor applies to source-free runs only")
    Cf = model.reaction_bound_constant(coeffs)
    Eq = coeffs.equilibrium_q
    Sq = np.asarray(trace.S_q)
    Sp = np.asarray(trace.S_p)
    if final_time is None:
        final_time = trace.times[-1] if trace.times else 0.0
    C_ast = math.exp(1.5 * Cf * quasi_uniformity * final_time) * (
        Sq[0] + 2.0 * Eq * domain_area * Cf * final_time
    )
    dupd = coeffs.D.d_upd

    violations = []
    min_step = np.inf
    min_agg = np.inf
    for nidx in range(len(Sq) - 1):
        lhs = (1.0 - Cf * tau) * Sq[nidx + 1]
        rhs = Sq[nidx] + Cf * Eq * tau * domain_area
        slack = rhs - lhs
        min_step = min(min_step, slack)
        if slack < -tol:
            violations.append(("q-recursion", nidx + 1, slack))
        lhs2 = (
            Sp[nidx + 1]
            + Sq[nidx + 1]
            + epsilon * tau * (trace.dg_p[nidx + 1] + trace.dg_q[nidx + 1])
            + 4.0 / coeffs.E_p * dupd * tau * trace.sigma_p_norm2[nidx + 1]
            + tau * (trace.jump_p[nidx + 1] + trace.jump_q[nidx + 1])
        )
        rhs2 = Sp[nidx] + Sq[nidx] + Cf * tau * (Eq * domain_area + C_ast)
        slack2 = rhs2 - lhs2
        min_agg = min(min_agg, slack2)
        if slack2 < -tol:
            violations.append(("aggregate", nidx + 1, slack2))
    return EntropyCheckResult(
        passed=not violations,
        min_slack_step=float(min_step),
        min_slack_aggregate=float(min_agg),
        violations=violations,
    )


# ---------------------------------------------------------------------------
# bound audits


@dataclass
class BoundsReport:
    min_p: float
    max_p: float
    min_q: float
    max_q: float
    violations_p: int
    violations_q: int
    q_exceeds_equilibrium: bool

    @property
    def clean(self) -> bool:
        return self.violations_p == 0 and self.violations_q == 0


def bounds_audit(state: StepState, coeffs: ProblemCoefficients) -> BoundsReport:
    """Min/max of the transformed concentrations over quadrature points.

    States built through the entropy transforms satisfy the bounds
    structurally; NaNs signal solver failure and raise.
    """
    space = state.W_p.space
    rule = _error_rule(space)
    wp = rule.scalar_values(state.W_p.coef)
    wq = rule.scalar_values(state.W_q.coef)
    if not (np.isfinite(wp).all() and np.isfinite(wq).all()):
        raise FloatingPointError("NaN in transformed state")
    p = model.u_p(wp, coeffs.E_p)
    q = model.u_q(wq, coeffs.E_q)
    return BoundsReport(
        min_p=float(p.min()),
        max_p=float(p.max()),
        min_q=float(q.min()),
        max_q=float(q.max()),
        violations_p=int(np.sum((p <= 0) | (p >= coeffs.E_p))),
        violations_q=int(np.sum(q <= 0)),
        q_exceeds_equilibrium=bool(q.max() > coeffs.E_q),
    )


def bounds_audit_fields(
    p_field: DGField, q_field: DGField, coeffs: ProblemCoefficients
) -> BoundsReport:
    """Audit raw (untransformed) concentration fields, e.g. plain L2
    projections, which can overshoot the physical bounds."""
    space = p_field.space
    rule = _error_rule(space)
    p = rule.scalar_values(p_field.coef)
    q = rule.scalar_values(q_field.coef)
    if not (np.isfinite(p).all() and np.isfinite(q).all()):
        raise FloatingPointError("NaN in concentration field")
    return BoundsReport(
        min_p=float(p.min()),
        max_p=float(p.max()),
        min_q=float(q.min()),
        max_q=float(q.max()),
        violations_p=int(np.sum((p < 0) | (p > coeffs.E_p))),
        violations_q=int(np.sum(q < 0)),
        q_exceeds_equilibrium=bool(q.max() > coeffs.E_q),
    )


def mean_and_max(state: StepState, coeffs: ProblemCoefficients, domain_area: float):
    """Spatial mean and max of both concentrations."""
    space = state.W_p.space
    rule = _error_rule(space)
    p = model.u_p(rule.scalar_values(state.W_p.coef), coeffs.E_p)
    q = model.u_q(rule.scalar_values(state.W_q.coef), coeffs.E_q)
    return (
        rule.integral(p) / domain_area,
        float(p.max()),
        rule.integral(q) / domain_area,
        float(q.max()),
    )


# ---------------------------------------------------------------------------
# convergence tables


def observed_orders(h: Sequence[float], errors: Sequence[float]) -> np.ndarray:
    """Pairwise orders log(E_i/E_{i+1}) / log(h_i/h_{i+1})."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


def least_squares_order(h: Sequence[float], errors: Sequence[float]) -> float:
    """Global slope of log E versus log h."""
    h = np.log(np.asarray(h, dtype=float))
    e = np.log(np.asarray(errors, dtype=float))
    A = np.column_stack([h, np.ones_like(h)])
    slope, _ = np.linalg.lstsq(A, e, rcond=None)[0]
    return float(slope)


def convergence_table(records: Sequence[ErrorRecord]) -> list[dict]:
    """Rows with errors and pairwise observed orders, CSV-ready."""
    if len(records) < 2:
        raise ValueError("need at least two records with distinct h")
    recs = sorted(records, key=lambda r: -r.h)
    hs = [r.h for r in recs]
    rows = []
    for i, r in enumerate(recs):
        row = r.as_row()
        for key, attr in (
            ("order_p", "E_p"),
            ("order_q", "E_q"),
            ("order_sigp", "E_sigp"),
            ("order_sigq", "E_sigq"),
        ):
            if i == 0:
                row[key] = ""
            else:
                e0, e1 = getattr(recs[i - 1], attr), getattr(recs[i], attr)
                row[key] = math.log(e0 / e1) / math.log(hs[i - 1] / hs[i])
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# artifact writers


def write_errors_csv(path, records: Sequence[ErrorRecord]) -> None:
    if len(records) == 1:
        rows = [records[0].as_row()]
        rows[0].update(order_p="", order_q="", order_sigp="", order_sigq="")
    else:
        rows = convergence_table(records)
    cols = [
        "h", "ell", "tau", "E_p", "E_q", "E_sigp", "E_sigq",
        "order_p", "order_q", "order_sigp", "order_sigq",
    ]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for row in rows:
            f.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def write_entropy_csv(path, trace: EntropyTrace, slacks: Optional[Sequence[float]] = None):
    with open(path, "w") as f:
        f.write("step,t,S_total,S_p,S_q,slack\n")
        for i, t in enumerate(trace.times):
            slack = "" if slacks is None or i >= len(slacks) else _fmt(slacks[i])
            f.write(
                f"{i},{_fmt(t)},{_fmt(trace.S_p[i] + trace.S_q[i])},"
                f"{_fmt(trace.S_p[i])},{_fmt(trace.S_q[i])},{slack}\n"
            )


def write_trajectory_csv(path, rows: Sequence[dict]) -> None:
    cols = ["step", "t", "mean_p", "max_p", "mean_q", "max_q"]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for row in rows:
            f.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{v:.16e}"


def sample_fields_csv(path, state: StepState, coeffs: ProblemCoefficients) -> None:
    """Per-quadrature-point samples (x, y, p, q)."""
    space = state.W_p.space
    rule = _error_rule(space)
    pts = rule.flat_points()
    p = model.u_p(rule.scalar_values(state.W_p.coef), coeffs.E_p).ravel()
    q = model.u_q(rule.scalar_values(state.W_q.coef), coeffs.E_q).ravel()
    with open(path, "w") as f:
        f.write("x,y,p,q\n")
        for (x, y), pv, qv in zip(pts, p, q):
            f.write(f"{x:.16e},{y:.16e},{pv:.16e},{qv:.16e}\n")


def write_vtk(path, state: StepState, coeffs: ProblemCoefficients, title="fields"):
    """Legacy ASCII VTK unstructured grid with per-element vertex samples.

    Vertices are duplicated per element so the discontinuous fields render
    faithfully.
    """
    space = state.W_p.space
    mesh = space.mesh
    nel = mesh.n_elements
    ref_corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    vals = eval_modal_basis(space.degree, ref_corners)  # (3, nloc)
    cp = state.W_p.coef.reshape(nel, space.n_loc)
    cq = state.W_q.coef.reshape(nel, space.n_loc)
    wp = (cp @ vals.T) * space.scale[:, None]
    wq = (cq @ vals.T) * space.scale[:, None]
    p = model.u_p(wp, coeffs.E_p)
    q = model.u_q(wq, coeffs.E_q)
    coords = mesh.element_coords()  # (nel, 3, 2)

    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"{title}\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {3 * nel} double\n")
        for e in range(nel):
            for v in range(3):
                f.write(f"{coords[e, v, 0]:.12e} {coords[e, v, 1]:.12e} 0.0\n")
        f.write(f"CELLS {nel} {4 * nel}\n")
        for e in range(nel):
            f.write(f"3 {3 * e} {3 * e + 1} {3 * e + 2}\n")
        f.write(f"CELL_TYPES {nel}\n")
        for _ in range(nel):
            f.write("5\n")
        f.write(f"POINT_DATA {3 * nel}\n")
        for name, arr in (("p", p), ("q", q)):
            f.write(f"SCALARS {name} double 1\n")
            f.write("LOOKUP_TABLE default\n")
            for e in range(nel):
                for v in range(3):
                    f.write(f"{arr[e, v]:.12e}\n")
