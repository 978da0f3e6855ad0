"""Discontinuous piecewise-polynomial spaces on triangle meshes.

The scalar space uses an orthonormal modal (Dubiner-type) basis on the
reference triangle, so every element mass matrix is the identity and the
vector-space mass matrix inverse is trivial. Quadrature is a collapsed
tensor Gauss-Legendre x Gauss-Jacobi rule, exact to any requested degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import eval_jacobi, roots_jacobi, roots_legendre

from .mesh import SimplicialMesh

MAX_DEGREE = 15


def _jacobi_norm(n: int, alpha: int, beta: int) -> float:
    """L2 norm^2 of P_n^{(alpha,beta)} on [-1,1] with weight (1-x)^a (1+x)^b."""
    num = (
        math.lgamma(n + alpha + 1)
        + math.lgamma(n + beta + 1)
        - math.lgamma(n + alpha + beta + 1)
        - math.lgamma(n + 1)
    )
    return 2.0 ** (alpha + beta + 1) / (2 * n + alpha + beta + 1) * math.exp(num)


def _jacobi_on(n, alpha, beta, x):
    """Orthonormal Jacobi polynomial values."""
    return eval_jacobi(n, alpha, beta, x) / math.sqrt(_jacobi_norm(n, alpha, beta))


def _jacobi_on_deriv(n, alpha, beta, x):
    """Derivative of the orthonormal Jacobi polynomial."""
    if n == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    scale = 0.5 * (n + alpha + beta + 1) / math.sqrt(_jacobi_norm(n, alpha, beta))
    return scale * eval_jacobi(n - 1, alpha + 1, beta + 1, x)


def basis_index_pairs(degree: int) -> list[tuple[int, int]]:
    """Modal index pairs (i, j), i + j <= degree, ordered by total degree."""
    return [(i, d - i) for d in range(degree + 1) for i in range(d + 1)]


def _collapsed_coords(points: np.ndarray):
    """Map unit-triangle points to collapsed (a, b) coordinates."""
    r = 2.0 * points[:, 0] - 1.0
    s = 2.0 * points[:, 1] - 1.0
    b = s
    denom = 1.0 - b
    safe = denom > 1e-12
    a = np.where(safe, 2.0 * (1.0 + r) / np.where(safe, denom, 1.0) - 1.0, -1.0)
    return a, b


def eval_modal_basis(degree: int, points: np.ndarray, derivs: bool = False):
    """Evaluate the orthonormal basis (and gradients) at unit-triangle points.

    Returns values (N, n_loc) and, if requested, gradients (N, n_loc, 2).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    a, b = _collapsed_coords(points)
    pairs = basis_index_pairs(degree)
    n_loc = len(pairs)
    vals = np.empty((len(points), n_loc))
    grads = np.empty((len(points), n_loc, 2)) if derivs else None

    one_m_b = 1.0 - b
    sqrt2 = math.sqrt(2.0)
    for k, (i, j) in enumerate(pairs):
        fa = _jacobi_on(i, 0, 0, a)
        gb = _jacobi_on(j, 2 * i + 1, 0, b)
        pow_i = one_m_b**i
        vals[:, k] = 2.0 * sqrt2 * fa * gb * pow_i
        if derivs:
            dfa = _jacobi_on_deriv(i, 0, 0, a)
            dgb = _jacobi_on_deriv(j, 2 * i + 1, 0, b)
            pow_im1 = one_m_b ** (i - 1) if i >= 1 else np.zeros_like(b)
            psi_r = 2.0 * sqrt2 * dfa * gb * pow_im1
            psi_s = sqrt2 * (
                dfa * (1.0 + a) * pow_im1 * gb
                + fa * (dgb * pow_i - (i * gb * pow_im1 if i >= 1 else 0.0))
            )
            # unit-triangle derivatives: d/dx = 2 d/dr on top of the value
            # scale 2 already applied; (r,s) = (2x-1, 2y-1)
            grads[:, k, 0] = 4.0 * psi_r
            grads[:, k, 1] = 4.0 * psi_s
    if derivs:
        return vals, grads
    return vals


def triangle_rule(exactness: int):
    """Collapsed-coordinate rule on the unit triangle, exact to ``exactness``."""
    n = max(1, (exactness + 2) // 2)
    gx, gw = roots_legendre(n)
    s_pts = 0.5 * (gx + 1.0)
    s_w = 0.5 * gw
    jx, jw = roots_jacobi(n, 1.0, 0.0)
    t_pts = 0.5 * (jx + 1.0)
    t_w = 0.25 * jw
    S, T = np.meshgrid(s_pts, t_pts, indexing="ij")
    pts = np.column_stack([(S * (1.0 - T)).ravel(), T.ravel()])
    w = np.outer(s_w, t_w).ravel()
    return pts, w


def edge_rule(exactness: int):
    """Gauss-Legendre rule on [0, 1]."""
    n = max(1, (exactness + 2) // 2)
    gx, gw = roots_legendre(n)
    return 0.5 * (gx + 1.0), 0.5 * gw


@dataclass(frozen=True)
class QuadratureRule:
    """Reference-triangle and reference-edge quadrature."""

    tri_points: np.ndarray
    tri_weights: np.ndarray
    edge_points: np.ndarray
    edge_weights: np.ndarray
    volume_exactness: int
    edge_exactness: int

    @staticmethod
    def for_degree(degree: int, volume_exactness=None, edge_exactness=None):
        vex = 2 * degree + 4 if volume_exactness is None else volume_exactness
        eex = 2 * degree + 2 if edge_exactness is None else edge_exactness
        tp, tw = triangle_rule(vex)
        ep, ew = edge_rule(eex)
        return QuadratureRule(tp, tw, ep, ew, vex, eex)

    def __post_init__(self):
        if np.any(self.tri_weights <= 0) or np.any(self.edge_weights <= 0):
            raise ValueError("quadrature weights must be positive")


class DGSpace:
    """Scalar space of discontinuous P_degree polynomials (and its vector twin).

    Scalar dof layout: element-major, ``e * n_loc + a``. Vector fields store
    the two components interleaved: ``(e * n_loc + a) * 2 + c``.
    """

    def __init__(
        self,
        mesh: SimplicialMesh,
        degree: int,
        volume_exactness: Optional[int] = None,
        edge_exactness: Optional[int] = None,
    ):
        if degree < 1 or degree > MAX_DEGREE:
            raise ValueError(f"degree must be in [1, {MAX_DEGREE}], got {degree}")
        self.mesh = mesh
        self.degree = degree
        self.n_loc = (degree + 1) * (degree + 2) // 2
        self.n_elements = mesh.n_elements
        self.n_scalar = self.n_loc * self.n_elements
        self.n_vector = 2 * self.n_scalar
        self.quad = QuadratureRule.for_degree(degree, volume_exactness, edge_exactness)

        self.ref_vals, self.ref_grads = eval_modal_basis(
            degree, self.quad.tri_points, derivs=True
        )

        # affine maps
        xy = mesh.element_coords()
        v0 = xy[:, 0]
        J = np.stack([xy[:, 1] - v0, xy[:, 2] - v0], axis=-1)  # (Nel, 2, 2)
        self.jac = J
        self.jac_det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        self.jac_inv = (
            np.stack(
                [
                    np.stack([J[:, 1, 1], -J[:, 0, 1]], axis=-1),
                    np.stack([-J[:, 1, 0], J[:, 0, 0]], axis=-1),
                ],
                axis=1,
            )
            / self.jac_det[:, None, None]
        )
        self.scale = 1.0 / np.sqrt(self.jac_det)  # per-element basis scaling
        self.v0 = v0
        # physical volume quadrature points: (Nel, nq, 2)
        self.phys_points = v0[:, None, :] + np.einsum(
            "qk,ekl->eql", self.quad.tri_points, np.transpose(J, (0, 2, 1))
        )
        # modal differentiation matrices (exact): D[k, j] = (psi_k, d psi_j)
        w = self.quad.tri_weights
        self.diff_x = np.einsum("g,gk,gj->kj", w, self.ref_vals, self.ref_grads[:, :, 0])
        self.diff_y = np.einsum("g,gk,gj->kj", w, self.ref_vals, self.ref_grads[:, :, 1])

    # -- reference helpers -------------------------------------------------

    def eval_ref(self, points: np.ndarray, derivs: bool = False):
        return eval_modal_basis(self.degree, points, derivs=derivs)

    def ref_second_derivs(self):
        """Reference second-derivative tables at the volume quadrature points.

        Returns (Hxx, Hxy, Hyy), each (nq, n_loc).
        """
        gx = self.ref_grads[:, :, 0]
        gy = self.ref_grads[:, :, 1]
        hxx = gx @ self.diff_x
        hxy = gy @ self.diff_x
        hyy = gy @ self.diff_y
        return hxx, hxy, hyy

    # -- projections and evaluation ---------------------------------------

    def project_scalar(self, f: Callable[[np.ndarray], np.ndarray]) -> "DGField":
        pts = self.phys_points.reshape(-1, 2)
        vals = np.asarray(f(pts), dtype=float).reshape(self.n_elements, -1)
        bad = ~np.isfinite(vals).all(axis=1)
        if bad.any():
            raise ValueError(
                f"non-finite values at quadrature points of element {int(np.argmax(bad))}"
            )
        w = self.quad.tri_weights
        coef = np.einsum(
            "eg,g,ga->ea", vals, w, self.ref_vals
        ) * np.sqrt(self.jac_det)[:, None]
        return DGField(self, "scalar", coef.ravel())

    def project_vector(self, g: Callable[[np.ndarray], np.ndarray]) -> "DGField":
        pts = self.phys_points.reshape(-1, 2)
        vals = np.asarray(g(pts), dtype=float)
        if vals.shape != (len(pts), 2):
            raise ValueError("vector function must return an (N, 2) array")
        if not np.isfinite(vals).all():
            bad = int(np.argmax(~np.isfinite(vals).all(axis=1)) // self.quad.tri_points.shape[0])
            raise ValueError(f"non-finite values at quadrature points of element {bad}")
        vals = vals.reshape(self.n_elements, -1, 2)
        w = self.quad.tri_weights
        coef = np.einsum(
            "egc,g,ga->eac", vals, w, self.ref_vals
        ) * np.sqrt(self.jac_det)[:, None, None]
        return DGField(self, "vector", coef.reshape(-1))

    def scalar_values(self, field: "DGField") -> np.ndarray:
        """Field values at all volume quadrature points, (Nel, nq)."""
        c = field.coef.reshape(self.n_elements, self.n_loc)
        return np.einsum("ea,ga->eg", c, self.ref_vals) * self.scale[:, None]

    def scalar_gradients(self, field: "DGField") -> np.ndarray:
        """Piecewise gradient values at volume quadrature points, (Nel, nq, 2)."""
        c = field.coef.reshape(self.n_elements, self.n_loc)
        ref = np.einsum("ea,gad->egd", c, self.ref_grads)
        return np.einsum("edk,egd->egk", self.jac_inv, ref) * self.scale[:, None, None]

    def vector_values(self, field: "DGField") -> np.ndarray:
        """Vector-field values at volume quadrature points, (Nel, nq, 2)."""
        c = field.coef.reshape(self.n_elements, self.n_loc, 2)
        return np.einsum("eac,ga->egc", c, self.ref_vals) * self.scale[:, None, None]

    def integrate(self, values: np.ndarray) -> float:
        """Integrate per-quadrature-point values (Nel, nq) over the domain."""
        return float(
            np.einsum("eg,g,e->", values, self.quad.tri_weights, self.jac_det)
        )

    def evaluate(self, field: "DGField", element: int, ref_point) -> np.ndarray:
        if element < 0 or element >= self.n_elements:
            raise IndexError(f"element {element} out of range [0, {self.n_elements})")
        vals = self.eval_ref(np.atleast_2d(ref_point))
        if field.kind == "scalar":
            c = field.coef.reshape(self.n_elements, self.n_loc)[element]
            return (vals @ c * self.scale[element])[0]
        c = field.coef.reshape(self.n_elements, self.n_loc, 2)[element]
        return (np.einsum("ga,ac->gc", vals, c) * self.scale[element])[0]

    def error_context(self, extra_exactness: int = 2):
        """Elevated-order evaluation context for error norms."""
        pts, w = triangle_rule(self.quad.volume_exactness + extra_exactness)
        vals = self.eval_ref(pts)
        phys = self.v0[:, None, :] + np.einsum(
            "qk,ekl->eql", pts, np.transpose(self.jac, (0, 2, 1))
        )
        return pts, w, vals, phys


@dataclass
class DGField:
    """Coefficient vector over the scalar or vector DG space."""

    space: DGSpace
    kind: str  # "scalar" | "vector"
    coef: np.ndarray

    def __post_init__(self):
        expected = self.space.n_scalar if self.kind == "scalar" else self.space.n_vector
        self.coef = np.asarray(self.coef, dtype=float)
        if self.coef.shape != (expected,):
            raise ValueError(
                f"{self.kind} field needs {expected} coefficients, got {self.coef.shape}"
            )

    def copy(self) -> "DGField":
        return DGField(self.space, self.kind, self.coef.copy())

    @staticmethod
    def zeros(space: DGSpace, kind: str = "scalar") -> "DGField":
        n = space.n_scalar if kind == "scalar" else space.n_vector
        return DGField(space, kind, np.zeros(n))

    def l2_norm(self) -> float:
        """L2(Omega) norm; equals the coefficient 2-norm (orthonormal basis)."""
        return float(np.linalg.norm(self.coef))
