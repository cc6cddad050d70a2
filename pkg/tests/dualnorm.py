"""Test-tree oracle for the dual norm of the PDE residual.

Approximates || R^pde ||_{W^{-1,tt}} from below by maximizing
< R^pde, v > / || v ||_{1,tt'} over a cubic velocity space on a uniformly
refined mesh; for tt' = 2 the maximizer is obtained by a single H^1 solve,
otherwise a few reweighted-Gram ascent iterations are used.  Any candidate
yields a lower bound of the true dual norm, so the value reported here is a
lower bound up to the discrete-subspace gap.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from rheoafem.constitutive import Exponents
from rheoafem.fespace import _GRAD_LAMBDA, locate_point
from rheoafem.mesh import Mesh, _edge_key, uniform_refine
from rheoafem.quadrature import triangle_rule
from rheoafem.solver import DiscreteState, strong_convection_at_rule


def p3_basis_and_grad(bary):
    """Nodal P3 basis on the reference triangle: 3 vertices, 6 edge nodes
    (two per edge), 1 interior node."""
    lam = np.asarray(bary, dtype=float)
    n = lam.shape[0]
    vals = np.empty((n, 10))
    grads = np.empty((n, 10, 2))
    gl = _GRAD_LAMBDA

    def prod_rule(fvals, parts):
        # derivative of a product of barycentric factors
        out = np.zeros((n, 2))
        for i in range(len(parts)):
            rest = np.ones(n)
            for j, (lj, _) in enumerate(parts):
                if j != i:
                    rest = rest * (parts[j][1](lam[:, parts[j][0]]))
            li, fi = parts[i]
            out += (rest * fi(lam[:, li], deriv=True))[:, None] * gl[li]
        return out

    def lin(c):
        def f(x, deriv=False):
            return np.full_like(x, 3.0) if deriv else 3.0 * x - c
        return f

    def ident(x, deriv=False):
        return np.ones_like(x) if deriv else x

    idx = 0
    for i in range(3):  # vertex functions: 1/2 li (3li - 1)(3li - 2)
        parts = [(i, ident), (i, lin(1.0)), (i, lin(2.0))]
        vals[:, idx] = 0.5 * lam[:, i] * (3 * lam[:, i] - 1) * (3 * lam[:, i] - 2)
        grads[:, idx] = 0.5 * prod_rule(None, parts)
        idx += 1
    for k in range(3):  # two nodes on edge k (between vertices k+1, k+2)
        a, b = (k + 1) % 3, (k + 2) % 3
        for (i, j) in ((a, b), (b, a)):
            # 9/2 li lj (3 li - 1), node at 2/3 towards vertex i
            parts = [(i, ident), (j, ident), (i, lin(1.0))]
            vals[:, idx] = 4.5 * lam[:, i] * lam[:, j] * (3 * lam[:, i] - 1)
            grads[:, idx] = 4.5 * prod_rule(None, parts)
            idx += 1
    parts = [(0, ident), (1, ident), (2, ident)]
    vals[:, idx] = 27.0 * lam[:, 0] * lam[:, 1] * lam[:, 2]
    grads[:, idx] = 27.0 * prod_rule(None, parts)
    return vals, grads


class P3Space:
    """Minimal vector P3 space with zero boundary values."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        nv = mesh.num_vertices
        edge_keys = sorted(mesh.edges().keys())
        edge_id = {e: i for i, e in enumerate(edge_keys)}
        ne = len(edge_keys)
        self.n_nodes = nv + 2 * ne + mesh.num_triangles
        self.elem_nodes = np.empty((mesh.num_triangles, 10), dtype=np.int64)
        boundary = set(mesh.boundary_vertices())
        bnodes = set(boundary)
        for t, tri in enumerate(mesh.triangles):
            self.elem_nodes[t, :3] = tri
            idx = 3
            for k in range(3):
                a, b = tri[(k + 1) % 3], tri[(k + 2) % 3]
                e = edge_id[_edge_key(a, b)]
                # node order per edge: towards a first, then towards b
                n1 = nv + 2 * e + (0 if a < b else 1)
                n2 = nv + 2 * e + (1 if a < b else 0)
                self.elem_nodes[t, idx] = n1
                self.elem_nodes[t, idx + 1] = n2
                idx += 2
            self.elem_nodes[t, 9] = nv + 2 * ne + t
        for e in mesh.boundary_edges:
            i = edge_id[e]
            bnodes.add(nv + 2 * i)
            bnodes.add(nv + 2 * i + 1)
        free_nodes = np.array(sorted(set(range(self.n_nodes)) - bnodes))
        dofs = np.concatenate([2 * free_nodes, 2 * free_nodes + 1])
        self.free = np.sort(dofs)
        self.full_to_free = np.full(2 * self.n_nodes, -1, dtype=np.int64)
        self.full_to_free[self.free] = np.arange(len(self.free))

        p = mesh.vertices[mesh.triangles]
        B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        invT = np.empty_like(B)
        invT[:, 0, 0] = B[:, 1, 1]
        invT[:, 0, 1] = -B[:, 1, 0]
        invT[:, 1, 0] = -B[:, 0, 1]
        invT[:, 1, 1] = B[:, 0, 0]
        self.invBT = invT / det[:, None, None]

    def tables(self, rule):
        vals, gref = p3_basis_and_grad(rule.points)
        gphys = np.einsum("eij,qbj->eqbi", self.invBT, gref)
        return vals, gphys


def _coarse_samples(state: DiscreteState, fine: Mesh, rule):
    """Values of (S, conv, P, f) of the coarse state at fine rule points."""
    from rheoafem import solver
    from rheoafem.fespace import p2_basis, p2_grad

    coarse = state.space
    p = fine.vertices[fine.triangles]
    pts = np.einsum("qb,ebi->eqi", rule.points, p)       # (ntf, nq, 2)
    nloc = coarse.mesh.vertices[coarse.mesh.triangles]
    S = np.empty(pts.shape[:2] + (3,))
    conv = np.empty(pts.shape[:2] + (2,))
    pvals = np.empty(pts.shape[:2])
    ucoef = state.U.local_coeffs()
    for ef in range(fine.num_triangles):
        ec = fine.ancestor(ef, coarse.mesh)
        pc = nloc[ec]
        T = np.column_stack([pc[1] - pc[0], pc[2] - pc[0]])
        lam12 = np.linalg.solve(T, (pts[ef] - pc[0]).T).T
        bary = np.column_stack([1 - lam12.sum(axis=1), lam12])
        phi = p2_basis(bary)
        gphys = np.einsum("ij,qbj->qbi", coarse.inv_jacobians()[ec], p2_grad(bary))
        uv = np.einsum("qb,bc->qc", phi, ucoef[ec])
        ug = np.einsum("bc,qbi->qci", ucoef[ec], gphys)
        D = solver.sym_grad(ug)
        S[ef] = state.law.stress(D)
        conv[ef] = strong_convection_at_rule(uv, ug)
        pv, _ = state.P.evaluate(ec, bary)
        pvals[ef] = pv
    fv = state.f.at_points(pts)
    return S, conv, pvals, fv


def residual_dualnorm_oracle(state: DiscreteState, exps: Exponents,
                             ascent_iters: int = 6) -> float:
    """Lower bound of || R^pde ||_{W^{-1,tt}} via a refined cubic space."""
    fine = uniform_refine(state.space.mesh, 1)
    p3 = P3Space(fine)
    rule = triangle_rule(10)
    vals, gphys = p3.tables(rule)
    S, conv, pvals, fv = _coarse_samples(state, fine, rule)
    w = 2.0 * fine.areas()
    wq = w[:, None] * rule.weights[None, :]

    # rho[(a, c)] = int S : D(phi_a e_c) + conv_c phi_a - p d_c phi_a - f_c phi_a
    Sfull = np.empty(S.shape[:2] + (2, 2))
    Sfull[..., 0, 0] = S[..., 0]
    Sfull[..., 1, 1] = S[..., 1]
    Sfull[..., 0, 1] = Sfull[..., 1, 0] = S[..., 2]
    r_loc = np.einsum("eq,eqij,eqaj->eai", wq, Sfull, gphys)
    r_loc += np.einsum("eq,qa,eqc->eac", wq, vals, conv - fv)
    r_loc -= np.einsum("eq,eqac,eq->eac", wq, gphys, pvals)
    rho_full = np.zeros(2 * p3.n_nodes)
    dmap = np.empty((fine.num_triangles, 20), dtype=np.int64)
    dmap[:, 0::2] = 2 * p3.elem_nodes
    dmap[:, 1::2] = 2 * p3.elem_nodes + 1
    np.add.at(rho_full, dmap, r_loc.reshape(-1, 20))
    rho = rho_full[p3.free]
    if np.linalg.norm(rho) == 0.0:
        return 0.0

    # W^{1,2} Gram (mass + grad-grad), vector-valued, on free dofs
    gg = np.einsum("eq,eqai,eqbi->eab", wq, gphys, gphys)
    mm = np.einsum("eq,qa,qb->eab", wq, vals, vals)
    scal = gg + mm
    local = np.zeros((fine.num_triangles, 20, 20))
    local[:, 0::2, 0::2] = scal
    local[:, 1::2, 1::2] = scal
    rows = np.repeat(dmap, 20, axis=1).reshape(-1)
    cols = np.tile(dmap, (1, 20)).reshape(-1)
    rmap = p3.full_to_free
    rr, cc = rmap[rows], rmap[cols]
    keep = (rr >= 0) & (cc >= 0)
    n = len(p3.free)
    A = sp.coo_matrix((local.reshape(-1)[keep], (rr[keep], cc[keep])),
                      shape=(n, n)).tocsc()
    lu = spla.splu(A)

    ttc = exps.t_tilde_conj

    def wnorm(coeffs_free):
        full = np.zeros(2 * p3.n_nodes)
        full[p3.free] = coeffs_free
        nodal = full.reshape(-1, 2)[p3.elem_nodes]
        vv = np.einsum("qb,ebc->eqc", vals, nodal)
        gv = np.einsum("ebc,eqbi->eqci", nodal, gphys)
        integ = ((vv**2).sum(axis=2) ** (ttc / 2.0)
                 + (gv**2).sum(axis=(2, 3)) ** (ttc / 2.0))
        return float((wq * integ).sum() ** (1.0 / ttc))

    z = lu.solve(rho)
    best = float(rho @ z) / wnorm(z)
    if abs(ttc - 2.0) < 1e-12:
        return best
    # reweighted ascent for tt' != 2
    v = z
    for _ in range(ascent_iters):
        full = np.zeros(2 * p3.n_nodes)
        full[p3.free] = v
        nodal = full.reshape(-1, 2)[p3.elem_nodes]
        gv = np.einsum("ebc,eqbi->eqci", nodal, gphys)
        weight = np.maximum((gv**2).sum(axis=(2, 3)), 1e-12) ** ((ttc - 2.0) / 2.0)
        gg_w = np.einsum("eq,eqai,eqbi->eab", wq * weight, gphys, gphys)
        scal_w = gg_w + mm
        local = np.zeros((fine.num_triangles, 20, 20))
        local[:, 0::2, 0::2] = scal_w
        local[:, 1::2, 1::2] = scal_w
        Aw = sp.coo_matrix((local.reshape(-1)[keep], (rr[keep], cc[keep])),
                           shape=(n, n)).tocsc()
        try:
            v = spla.splu(Aw).solve(rho)
        except RuntimeError:
            break
        best = max(best, float(rho @ v) / wnorm(v))
    return best
