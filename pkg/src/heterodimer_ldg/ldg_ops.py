"""Discrete LDG operators on triangle meshes.

Assembles the mixed-form matrices (gradient/divergence with jump liftings,
jump penalty, diffusion-weighted coupling) and the H2-type inner product
with discrete Hessian liftings. The scalar basis is orthonormal per
element, so both mass matrices are identities and the reduced operator is
simply ``C = M_D B``.

Facet conventions: each interior facet is owned by the element listed
first (K1); the stored unit normal points out of K1. Boundary facets carry
no jump or lifting terms (homogeneous Neumann data).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .dgspace import DGField, DGSpace
from .mesh import SimplicialMesh, facet_mesh_sizes

_EDGE_VERTS = ((0, 1), (1, 2), (2, 0))


class DiffusionTensor:
    """Symmetric 2x2 diffusion tensor field with ellipticity bounds."""

    def __init__(
        self,
        fn: Callable[[np.ndarray], np.ndarray],
        d_upd: Optional[float] = None,
        d_max: Optional[float] = None,
        description: str = "custom",
    ):
        self._fn = fn
        self.description = description
        if d_upd is None or d_max is None:
            est_lo, est_hi = self._estimate_bounds()
            d_upd = est_lo if d_upd is None else d_upd
            d_max = est_hi if d_max is None else d_max
        self.d_upd = float(d_upd)
        self.d_max = float(d_max)

    def _estimate_bounds(self, n: int = 400):
        rng = np.random.default_rng(7)
        pts = rng.uniform(-1.0, 1.0, size=(n, 2))
        D = self.evaluate(pts)
        tr = D[:, 0, 0] + D[:, 1, 1]
        det = D[:, 0, 0] * D[:, 1, 1] - D[:, 0, 1] * D[:, 1, 0]
        disc = np.sqrt(np.maximum(0.25 * tr**2 - det, 0.0))
        return float((0.5 * tr - disc).min()), float((0.5 * tr + disc).max())

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        D = np.asarray(self._fn(x), dtype=float)
        if D.shape != (len(x), 2, 2):
            raise ValueError("diffusion evaluator must return an (N, 2, 2) array")
        return D

    @staticmethod
    def isotropic(d: float) -> "DiffusionTensor":
        if d <= 0:
            raise ValueError("isotropic diffusion coefficient must be positive")

        def fn(x):
            out = np.zeros((len(x), 2, 2))
            out[:, 0, 0] = d
            out[:, 1, 1] = d
            return out

        return DiffusionTensor(fn, d_upd=d, d_max=d, description=f"{d:g}*I")

    @staticmethod
    def constant(matrix) -> "DiffusionTensor":
        M = np.asarray(matrix, dtype=float)
        if M.shape != (2, 2) or abs(M[0, 1] - M[1, 0]) > 1e-14:
            raise ValueError("constant diffusion tensor must be symmetric 2x2")
        lam = np.linalg.eigvalsh(M)
        if lam[0] <= 0:
            raise ValueError("constant diffusion tensor must be positive definite")

        def fn(x):
            return np.broadcast_to(M, (len(x), 2, 2)).copy()

        return DiffusionTensor(fn, d_upd=lam[0], d_max=lam[1], description="const")

    @staticmethod
    def piecewise_isotropic(
        selector: Callable[[np.ndarray], np.ndarray], values: dict[int, float]
    ) -> "DiffusionTensor":
        """Isotropic coefficient chosen per region tag (evaluated pointwise)."""
        vals = dict(values)
        if any(v <= 0 for v in vals.values()):
            raise ValueError("all region coefficients must be positive")

        def fn(x):
            tags = np.asarray(selector(x), dtype=int)
            d = np.zeros(len(x))
            for tag, v in vals.items():
                d[tags == tag] = v
            out = np.zeros((len(x), 2, 2))
            out[:, 0, 0] = d
            out[:, 1, 1] = d
            return out

        return DiffusionTensor(
            fn,
            d_upd=min(vals.values()),
            d_max=max(vals.values()),
            description="piecewise isotropic",
        )


def check_spd_samples(D: DiffusionTensor, points: np.ndarray):
    """Verify symmetry and positive definiteness at sample points."""
    vals = D.evaluate(points)
    asym = np.abs(vals[:, 0, 1] - vals[:, 1, 0])
    if np.any(asym > 1e-12 * max(D.d_max, 1.0)):
        i = int(np.argmax(asym))
        raise ValueError(f"diffusion tensor not symmetric at point {points[i]}")
    det = vals[:, 0, 0] * vals[:, 1, 1] - vals[:, 0, 1] * vals[:, 1, 0]
    bad = (vals[:, 0, 0] <= 0) | (det <= 0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(f"diffusion tensor not positive definite at point {points[i]}")


@dataclass
class FacetTables:
    """Per-interior-facet quadrature and basis trace tables."""

    k1: np.ndarray
    k2: np.ndarray
    normal: np.ndarray  # (nf, 2), outward from K1
    h: np.ndarray  # mesh-size function values
    weights: np.ndarray  # (nf, ne) physical quadrature weights
    points: np.ndarray  # (nf, ne, 2) physical quadrature points
    trace1: np.ndarray  # (nf, ne, nloc) basis traces from K1 (scaled)
    trace2: np.ndarray
    grad1: Optional[np.ndarray] = None  # (nf, ne, nloc, 2) physical grad traces
    grad2: Optional[np.ndarray] = None


def _build_facet_tables(
    mesh: SimplicialMesh, space: DGSpace, gradients: bool = False
) -> FacetTables:
    fac = mesh.interior_facets
    nf = len(fac)
    k1, le1, k2 = fac[:, 0], fac[:, 1], fac[:, 2]
    t, w = space.quad.edge_points, space.quad.edge_weights
    coords = mesh.element_coords()
    a_idx = np.array([_EDGE_VERTS[le][0] for le in le1])
    b_idx = np.array([_EDGE_VERTS[le][1] for le in le1])
    pa = coords[k1, a_idx]
    pb = coords[k1, b_idx]
    pts = pa[:, None, :] + t[None, :, None] * (pb - pa)[:, None, :]
    weights = mesh.facet_length[:, None] * w[None, :]

    def side_tables(k):
        ref = np.einsum(
            "fkl,fgl->fgk", space.jac_inv[k], pts - space.v0[k][:, None, :]
        )
        flat = ref.reshape(-1, 2)
        if gradients:
            V, G = space.eval_ref(flat, derivs=True)
            V = V.reshape(nf, len(t), -1) * space.scale[k][:, None, None]
            G = G.reshape(nf, len(t), -1, 2)
            G = np.einsum("fdk,fgad->fgak", space.jac_inv[k], G)
            G *= space.scale[k][:, None, None, None]
            return V, G
        V = space.eval_ref(flat).reshape(nf, len(t), -1)
        return V * space.scale[k][:, None, None], None

    V1, G1 = side_tables(k1)
    V2, G2 = side_tables(k2)
    return FacetTables(
        k1=k1,
        k2=k2,
        normal=mesh.facet_normal,
        h=facet_mesh_sizes(mesh),
        weights=weights,
        points=pts,
        trace1=V1,
        trace2=V2,
        grad1=G1,
        grad2=G2,
    )


def _neighbor_structure(mesh: SimplicialMesh):
    """nbr[e] = [e, adjacent...] padded with -1, plus each facet's slots."""
    nel = mesh.n_elements
    nbr = np.full((nel, 4), -1, dtype=np.int64)
    nbr[:, 0] = np.arange(nel)
    count = np.ones(nel, dtype=np.int64)
    fac = mesh.interior_facets
    slot_in_k1 = np.zeros(len(fac), dtype=np.int64)
    slot_in_k2 = np.zeros(len(fac), dtype=np.int64)
    for f in range(len(fac)):
        k1, k2 = int(fac[f, 0]), int(fac[f, 2])
        slot_in_k1[f] = count[k1]
        nbr[k1, count[k1]] = k2
        count[k1] += 1
        slot_in_k2[f] = count[k2]
        nbr[k2, count[k2]] = k1
        count[k2] += 1
    return nbr, slot_in_k1, slot_in_k2


@dataclass
class LDGMatrices:
    """Assembled discrete operators plus the workspace shared by the solver.

    Dense row blocks group the rows of B and C by test element; the column
    slots follow ``neighbors`` (self first, -1 padding for missing sides).
    """

    mesh: SimplicialMesh
    space: DGSpace
    D: DiffusionTensor
    eta0: float
    gamma_F: float
    M_I: sp.csr_matrix
    B: sp.csr_matrix
    J: sp.csr_matrix
    M_D: sp.csr_matrix
    C: sp.csr_matrix
    eta_F: np.ndarray
    facets: FacetTables
    D_volume: np.ndarray
    MD_blocks: np.ndarray
    B_dense: np.ndarray
    C_dense: np.ndarray
    neighbors: np.ndarray
    A_LDG: Optional[sp.csr_matrix] = None
    _facets_grad: Optional[FacetTables] = None

    @property
    def n_scalar(self) -> int:
        return self.space.n_scalar

    def facet_tables_with_gradients(self) -> FacetTables:
        if self._facets_grad is None:
            self._facets_grad = _build_facet_tables(self.mesh, self.space, True)
        return self._facets_grad


def _side_tensor(D, mesh, facets, side: int):
    """D on one side of each facet (nudged off material interfaces)."""
    k = facets.k1 if side == 1 else facets.k2
    centroids = mesh.centroids()[k]
    mid = mesh.facet_midpoint
    pts = mid + 1e-8 * (centroids - mid)
    return D.evaluate(pts)


def assemble_core(
    mesh: SimplicialMesh,
    space: DGSpace,
    D: DiffusionTensor,
    eta0: float = 10.0,
    gamma_F: float = 0.5,
) -> LDGMatrices:
    """Assemble every static operator of the mixed discretization."""
    if eta0 <= 0:
        raise ValueError(f"eta0 must be positive, got {eta0}")
    if not (0.0 <= gamma_F <= 1.0):
        raise ValueError(f"gamma_F must lie in [0, 1], got {gamma_F}")
    n = space.n_loc
    nel = space.n_elements
    nq = len(space.quad.tri_weights)
    NW = space.n_scalar
    NR = space.n_vector

    vol_pts = space.phys_points.reshape(-1, 2)
    check_spd_samples(D, vol_pts)
    Dvol = D.evaluate(vol_pts).reshape(nel, nq, 2, 2)

    facets = _build_facet_tables(mesh, space)
    nfac = len(facets.k1)
    nrm = facets.normal

    ell = space.degree
    a1 = np.einsum("fi,fij,fj->f", nrm, _side_tensor(D, mesh, facets, 1), nrm)
    a2 = np.einsum("fi,fij,fj->f", nrm, _side_tensor(D, mesh, facets, 2), nrm)
    eta_F = eta0 * ell**2 * 2.0 * a1 * a2 / (a1 + a2)

    w_ref = space.quad.tri_weights
    V = space.ref_vals
    # physical gradients; the orthonormal scale cancels in all mass-type terms
    Gphys = np.einsum("edk,gad->egak", space.jac_inv, space.ref_grads)

    # volume part of B: (grad_h w, phi)
    Bvol = np.einsum("g,egbc,ga->eacb", w_ref, Gphys, V)

    nbr, slot1, slot2 = _neighbor_structure(mesh)
    B_dense = np.zeros((nel, 2 * n, 4 * n))
    B_dense[:, :, :n] = Bvol.reshape(nel, 2 * n, n)

    # facet part of B: -(jump(w)_N, mean(phi))
    wf = facets.weights
    V1, V2 = facets.trace1, facets.trace2
    n1 = facets.normal
    for test_side, Vt, wt in ((1, V1, gamma_F), (2, V2, 1.0 - gamma_F)):
        rows_el = facets.k1 if test_side == 1 else facets.k2
        for trial_side, Vs, sgn in ((1, V1, 1.0), (2, V2, -1.0)):
            blk = -wt * np.einsum(
                "fg,fga,fgb,fc->facb", wf, Vt, Vs, sgn * n1, optimize=True
            )
            if trial_side == test_side:
                slots = np.zeros(nfac, dtype=np.int64)
            else:
                slots = slot1 if test_side == 1 else slot2
            np.add.at(
                B_dense,
                (
                    rows_el[:, None, None],
                    np.broadcast_to(
                        np.arange(2 * n)[None, :, None], (nfac, 2 * n, n)
                    ),
                    np.broadcast_to(
                        slots[:, None, None] * n + np.arange(n)[None, None, :],
                        (nfac, 2 * n, n),
                    ),
                ),
                blk.reshape(nfac, 2 * n, n),
            )

    # D-weighted vector mass blocks
    WD = w_ref[None, :, None, None] * Dvol
    MD_blocks = np.einsum("ga,gb,egcd->eacbd", V, V, WD, optimize=True)
    MD_blocks = MD_blocks.reshape(nel, 2 * n, 2 * n)

    C_dense = np.einsum("eij,ejk->eik", MD_blocks, B_dense)

    # sparse matrices from the dense row blocks
    rows_blk = np.arange(nel)[:, None] * 2 * n + np.arange(2 * n)[None, :]
    col_idx = (nbr[:, :, None] * n + np.arange(n)[None, None, :]).reshape(nel, 4 * n)
    valid = np.repeat(nbr >= 0, n, axis=1)

    def dense_rows_to_csr(dense):
        r = np.broadcast_to(rows_blk[:, :, None], (nel, 2 * n, 4 * n))
        c = np.broadcast_to(col_idx[:, None, :], (nel, 2 * n, 4 * n))
        m = np.broadcast_to(valid[:, None, :], (nel, 2 * n, 4 * n))
        mat = sp.coo_matrix((dense[m], (r[m], c[m])), shape=(NR, NW)).tocsr()
        mat.sum_duplicates()
        return mat

    B = dense_rows_to_csr(B_dense)
    C = dense_rows_to_csr(C_dense)
    M_D = sp.bsr_matrix(
        (MD_blocks, np.arange(nel), np.arange(nel + 1)), shape=(NR, NR)
    ).tocsr()
    M_I = sp.identity(NR, format="csr")

    # jump penalty J
    scale_J = eta_F / facets.h
    S11 = np.einsum("fg,fga,fgb->fab", wf, V1, V1)
    S12 = np.einsum("fg,fga,fgb->fab", wf, V1, V2)
    S22 = np.einsum("fg,fga,fgb->fab", wf, V2, V2)
    rows, cols, vals = [], [], []
    loc = np.arange(n)
    for ka, kb, Sab, sgn in (
        (facets.k1, facets.k1, S11, 1.0),
        (facets.k1, facets.k2, S12, -1.0),
        (facets.k2, facets.k1, np.transpose(S12, (0, 2, 1)), -1.0),
        (facets.k2, facets.k2, S22, 1.0),
    ):
        r = np.broadcast_to(
            ka[:, None, None] * n + loc[None, :, None], (nfac, n, n)
        )
        c = np.broadcast_to(kb[:, None, None] * n + loc[None, None, :], (nfac, n, n))
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append((sgn * scale_J[:, None, None] * Sab).ravel())
    J = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(NW, NW),
    ).tocsr()
    J.sum_duplicates()

    return LDGMatrices(
        mesh=mesh,
        space=space,
        D=D,
        eta0=eta0,
        gamma_F=gamma_F,
        M_I=M_I,
        B=B,
        J=J,
        M_D=M_D,
        C=C,
        eta_F=eta_F,
        facets=facets,
        D_volume=Dvol,
        MD_blocks=MD_blocks,
        B_dense=B_dense,
        C_dense=C_dense,
        neighbors=nbr,
    )


# ---------------------------------------------------------------------------
# discrete gradient / divergence


def grad_ldg(mats: LDGMatrices, w: DGField) -> DGField:
    """Lifted discrete gradient of a scalar field."""
    if w.kind != "scalar":
        raise ValueError("grad_ldg expects a scalar field")
    return DGField(mats.space, "vector", mats.B @ w.coef)


def div_ldg(mats: LDGMatrices, r: DGField) -> DGField:
    """Discrete divergence, the negative adjoint of the discrete gradient."""
    if r.kind != "vector":
        raise ValueError("div_ldg expects a vector field")
    return DGField(mats.space, "scalar", -(mats.B.T @ r.coef))


# ---------------------------------------------------------------------------
# H2-type inner product with Hessian liftings


def _hessian_rows(mats: LDGMatrices) -> sp.csr_matrix:
    """Modal coefficients of the lifted discrete Hessian, rows in the
    4-component matrix space, columns in the scalar space."""
    space, mesh = mats.space, mats.mesh
    n = space.n_loc
    nel = space.n_elements
    NW = space.n_scalar
    loc = np.arange(n)

    facets = mats.facet_tables_with_gradients()
    nfac = len(facets.k1)
    wf = facets.weights
    V1, V2 = facets.trace1, facets.trace2
    G1, G2 = facets.grad1, facets.grad2
    n1 = facets.normal

    hxx, hxy, hyy = space.ref_second_derivs()
    Href = np.stack(
        [np.stack([hxx, hxy], axis=-1), np.stack([hxy, hyy], axis=-1)], axis=-2
    )  # (nq, n, 2, 2)
    Hphys = np.einsum(
        "ecd,gjcb,ebk->egjdk", space.jac_inv, Href, space.jac_inv, optimize=True
    )
    w_ref = space.quad.tri_weights
    V = space.ref_vals
    Hvol = np.einsum("g,ga,egjdk->eadkj", w_ref, V, Hphys, optimize=True)

    rows, cols, vals = [], [], []
    e_ids = np.arange(nel)
    comp = (2 * np.arange(2)[:, None] + np.arange(2)[None, :]).reshape(-1)
    r = (
        (e_ids[:, None, None, None] * n + loc[None, :, None, None]) * 4
        + comp[None, None, :, None]
    )
    c = e_ids[:, None, None, None] * n + loc[None, None, None, :]
    shape = (nel, n, 4, n)
    rows.append(np.broadcast_to(r, shape).ravel())
    cols.append(np.broadcast_to(c, shape).ravel())
    vals.append(Hvol.reshape(shape).ravel())

    sides = ((facets.k1, V1, G1, 1.0), (facets.k2, V2, G2, -1.0))
    for kb, Vb, Gb, _sb in sides:  # test side (matrix-valued Theta)
        for ka, Va, Ga, sa in sides:  # trial side (lambda)
            blkG = 0.5 * np.einsum(
                "fg,fga,fgjd,fk->fadkj", wf, Vb, Ga, sa * n1, optimize=True
            )
            blkB = 0.5 * np.einsum(
                "fg,fgak,fgj,fd->fadkj", wf, Gb, Va, sa * n1, optimize=True
            )
            contrib = blkB - blkG
            r = (
                (kb[:, None, None, None] * n + loc[None, :, None, None]) * 4
                + comp[None, None, :, None]
            )
            c = ka[:, None, None, None] * n + loc[None, None, None, :]
            shape = (nfac, n, 4, n)
            rows.append(np.broadcast_to(r, shape).ravel())
            cols.append(np.broadcast_to(c, shape).ravel())
            vals.append(contrib.reshape(shape).ravel())

    H = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(4 * NW, NW),
    ).tocsr()
    H.sum_duplicates()
    return H


def assemble_A_LDG(mats: LDGMatrices) -> sp.csr_matrix:
    """Matrix of the H2-type inner product: L2 + lifted gradient + lifted
    Hessian parts plus h^-1 gradient-jump and h^-3 value-jump penalties.

    For degree 1 the Hessian terms vanish identically and a warning is
    emitted; lifting means use weight 1/2 on both sides.
    """
    if mats.A_LDG is not None:
        return mats.A_LDG
    space = mats.space
    n = space.n_loc
    NW = space.n_scalar
    loc = np.arange(n)
    if space.degree < 2:
        warnings.warn(
            "H2-type inner product with degree 1: Hessian terms are zero",
            stacklevel=2,
        )

    H = _hessian_rows(mats)

    facets = mats.facet_tables_with_gradients()
    nfac = len(facets.k1)
    wf = facets.weights
    hF = facets.h
    sides_g = ((facets.k1, facets.grad1, 1.0), (facets.k2, facets.grad2, -1.0))
    rows, cols, vals = [], [], []
    for ka, Ga, sa in sides_g:
        for kb, Gb, sbb in sides_g:
            S = np.einsum("fg,fgad,fgbd->fab", wf, Ga, Gb, optimize=True)
            r = np.broadcast_to(
                ka[:, None, None] * n + loc[None, :, None], (nfac, n, n)
            )
            c = np.broadcast_to(
                kb[:, None, None] * n + loc[None, None, :], (nfac, n, n)
            )
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append((sa * sbb / hF[:, None, None] * S).ravel())
    J_grad = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(NW, NW),
    ).tocsr()

    sides_v = ((facets.k1, facets.trace1, 1.0), (facets.k2, facets.trace2, -1.0))
    rows, cols, vals = [], [], []
    for ka, Va, sa in sides_v:
        for kb, Vb, sbb in sides_v:
            S = np.einsum("fg,fga,fgb->fab", wf, Va, Vb, optimize=True)
            r = np.broadcast_to(
                ka[:, None, None] * n + loc[None, :, None], (nfac, n, n)
            )
            c = np.broadcast_to(
                kb[:, None, None] * n + loc[None, None, :], (nfac, n, n)
            )
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append((sa * sbb / hF[:, None, None] ** 3 * S).ravel())
    J_val = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(NW, NW),
    ).tocsr()

    A = sp.identity(NW, format="csr") + mats.B.T @ mats.B + H.T @ H + J_grad + J_val
    mats.A_LDG = sp.csr_matrix(A)
    return mats.A_LDG


def dg_norm(mats: LDGMatrices, field: DGField) -> float:
    """Broken H2-type norm: L2, piecewise gradient and Hessian, plus
    h^-1/2 gradient-jump and h^-3/2 value-jump facet terms."""
    if field.kind != "scalar":
        raise ValueError("dg_norm expects a scalar field")
    space = mats.space
    nel, n = space.n_elements, space.n_loc
    c = field.coef.reshape(nel, n)
    w_ref = space.quad.tri_weights

    total = float(field.coef @ field.coef)

    Gphys = np.einsum("edk,gad->egak", space.jac_inv, space.ref_grads)
    gvals = np.einsum("ea,egak->egk", c, Gphys)
    total += float(np.einsum("g,egk,egk->", w_ref, gvals, gvals))

    hxx, hxy, hyy = space.ref_second_derivs()
    Href = np.stack(
        [np.stack([hxx, hxy], axis=-1), np.stack([hxy, hyy], axis=-1)], axis=-2
    )
    Hphys = np.einsum(
        "ecd,gjcb,ebk->egjdk", space.jac_inv, Href, space.jac_inv, optimize=True
    )
    hvals = np.einsum("ej,egjdk->egdk", c, Hphys)
    total += float(np.einsum("g,egdk,egdk->", w_ref, hvals, hvals))

    facets = mats.facet_tables_with_gradients()
    tr1 = np.einsum("fga,fa->fg", facets.trace1, c[facets.k1])
    tr2 = np.einsum("fga,fa->fg", facets.trace2, c[facets.k2])
    jump_v = tr1 - tr2
    total += float(np.einsum("fg,fg->", facets.weights / facets.h[:, None] ** 3, jump_v**2))

    g1 = np.einsum("fgad,fa->fgd", facets.grad1, c[facets.k1])
    g2 = np.einsum("fgad,fa->fgd", facets.grad2, c[facets.k2])
    jump_g = g1 - g2
    total += float(
        np.einsum("fg,fgd->", facets.weights / facets.h[:, None], jump_g**2)
    )
    return float(np.sqrt(total))


def ldg_inner_product(mats: LDGMatrices, u: DGField, v: DGField) -> float:
    """Evaluate the H2-type inner product through its assembled matrix."""
    A = assemble_A_LDG(mats)
    return float(u.coef @ (A @ v.coef))
