"""Residual-based a posteriori indicators for the regularized problem.

Per element E the PDE indicator consists of three parts:

  * the interior residual  || h (-div P_S S + B[U,U] + grad P - f) ||_tt,E ^tt
    with the *projected* stress P_S S (elementwise L2 projection onto P1),
    whose divergence is well defined elementwise even when the raw stress
    divergence fails to be integrable for r < 2;
  * the normal flux jumps  || h^(1/tt) [[P_S S - P id]] ||_tt,dE ^tt with
    jumps across boundary sides set to zero;
  * the stress projection defect  || S - P_S S ||_tt,E ^tt, localized to E so
    that the element values sum to the global bound.

The incompressibility indicator is || div U ||_t,E ^t, and the oscillation
combines the data term (forcing minus its elementwise L2 projection onto
P_{2l-1}) with the same projection defect.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constitutive import Exponents, graph_indicator_EA, tensor_norm
from .fespace import ElementPolyField, FunctionSpacePair, project_stress
from .quadrature import edge_rule, monomial_integral, triangle_rule
from .solver import DiscreteState, physical_points, strong_convection_at_rule, sym_grad

JUMP_RULE_DEGREE = 4      # Gauss degree 2*ell on each side
OSC_RULE_DEGREE = 10      # data term quadrature


@dataclass
class IndicatorField:
    """Per-element indicator values plus their totals."""

    pde: np.ndarray
    ic: np.ndarray
    osc: np.ndarray
    interior: np.ndarray
    jump: np.ndarray
    defect: np.ndarray
    E_pde: float
    E_ic: float
    E_total: float
    E_A: float
    exps: Exponents

    def element_total(self) -> np.ndarray:
        """E(U, P, S; E) = pde + ic entries, the marking quantity."""
        return self.pde + self.ic

    def validate(self) -> None:
        for name, arr in (("pde", self.pde), ("ic", self.ic), ("osc", self.osc)):
            if not np.isfinite(arr).all() or (arr < 0).any():
                raise ValueError(f"indicator array {name} not finite/nonnegative")


def projected_stress(state: DiscreteState, rule=None) -> ElementPolyField:
    space = state.space
    rule = space.rule() if rule is None else rule
    return project_stress(space, state.stress_samples(rule), rule)


def _interior_term(space: FunctionSpacePair, exps: Exponents,
                   residual_at_rule: np.ndarray, rule) -> np.ndarray:
    """|| h * residual ||_tt,E ^tt per element for (nt, nq, 2) samples."""
    tt = exps.t_tilde
    mag = np.sqrt((residual_at_rule**2).sum(axis=2))
    h = space.mesh.mesh_sizes()
    w = 2.0 * space.mesh.areas()
    return h**tt * (w[:, None] * rule.weights[None, :] * mag**tt).sum(axis=1)


def interior_residual_samples(state: DiscreteState, rule,
                              proj: ElementPolyField | None = None) -> np.ndarray:
    """-div P_S S^n(DU) + B[U,U] + grad P - f at the rule points."""
    space = state.space
    proj = projected_stress(state, rule) if proj is None else proj
    div_proj = proj.elementwise_divergence()          # (nt, 2), constant
    uv, ug = state.U.at_rule(rule)
    conv = strong_convection_at_rule(uv, ug)
    _, gradp = state.P.at_rule(rule)
    fv = state.f.at_points(physical_points(space, rule))
    return -div_proj[:, None, :] + conv + gradp - fv


def _edge_barycentric(tri, edge_sorted, s):
    """Barycentric coords in `tri` of points at parameter s along the side."""
    k = [i for i in range(3) if set(np.delete(tri, i)) == set(edge_sorted)][0]
    a, b = (k + 1) % 3, (k + 2) % 3
    sloc = s if tri[a] == edge_sorted[0] else 1.0 - s
    bary = np.zeros((len(s), 3))
    bary[:, a] = 1.0 - sloc
    bary[:, b] = sloc
    return bary


def jump_terms(state: DiscreteState, exps: Exponents, rule=None,
               proj: ElementPolyField | None = None) -> np.ndarray:
    """|| h^(1/tt) [[P_S S - P id]] ||_tt,dE ^tt accumulated per element.

    Interior sides contribute to both adjacent elements; the normal points
    from the lower- to the higher-index triangle; boundary jumps vanish.
    The side weight is h_S = |S| (equivalent to the mesh-size function on
    the side up to shape-regularity constants).
    """
    space = state.space
    mesh = space.mesh
    tt = exps.t_tilde
    rule = space.rule() if rule is None else rule
    proj = projected_stress(state, rule) if proj is None else proj
    erule = edge_rule(JUMP_RULE_DEGREE)
    out = np.zeros(mesh.num_triangles)
    tris = mesh.triangles
    for edge, t1, t2 in mesh.interior_sides():
        va, vb = mesh.vertices[edge[0]], mesh.vertices[edge[1]]
        tangent = vb - va
        length = float(np.linalg.norm(tangent))
        normal = np.array([tangent[1], -tangent[0]]) / length
        traces = []
        for t in (t1, t2):
            bary = _edge_barycentric(tris[t], edge, erule.points)
            T = proj.evaluate(t, bary).copy()          # (nq, 3)
            pvals, _ = state.P.evaluate(t, bary)
            T[:, 0] -= pvals
            T[:, 1] -= pvals
            traces.append(T)
        J = traces[0] - traces[1]
        jn = np.stack([J[:, 0] * normal[0] + J[:, 2] * normal[1],
                       J[:, 2] * normal[0] + J[:, 1] * normal[1]], axis=1)
        mag = np.sqrt((jn**2).sum(axis=1))
        contrib = length * (length * (erule.weights * mag**tt).sum())
        out[t1] += contrib
        out[t2] += contrib
    return out


def defect_terms(state: DiscreteState, exps: Exponents, rule=None,
                 proj: ElementPolyField | None = None) -> np.ndarray:
    """|| S - P_S S ||_tt,E ^tt per element (localized projection defect)."""
    space = state.space
    rule = space.rule() if rule is None else rule
    S = state.stress_samples(rule)
    proj = projected_stress(state, rule) if proj is None else proj
    mag = tensor_norm(S - proj.at_rule(rule))
    w = 2.0 * space.mesh.areas()
    return (w[:, None] * rule.weights[None, :] * mag**exps.t_tilde).sum(axis=1)


def _pde_pieces(state: DiscreteState, exps: Exponents):
    space = state.space
    rule = space.rule()
    proj = projected_stress(state, rule)
    interior = _interior_term(
        space, exps, interior_residual_samples(state, rule, proj), rule)
    jump = jump_terms(state, exps, rule, proj)
    defect = defect_terms(state, exps, rule, proj)
    return interior, jump, defect


def element_pde_indicator(state: DiscreteState, exps: Exponents,
                          element: int) -> float:
    return float(pde_indicators(state, exps)[element])


def pde_indicators(state: DiscreteState, exps: Exponents) -> np.ndarray:
    interior, jump, defect = _pde_pieces(state, exps)
    return interior + jump + defect


def element_ic_indicator(state: DiscreteState, exps: Exponents,
                         element: int) -> float:
    return float(ic_indicators(state, exps)[element])


def ic_indicators(state: DiscreteState, exps: Exponents) -> np.ndarray:
    """|| div U ||_t,E ^t per element."""
    space = state.space
    rule = space.rule()
    _, ug = state.U.at_rule(rule)
    divu = np.abs(ug[..., 0, 0] + ug[..., 1, 1])
    w = 2.0 * space.mesh.areas()
    return (w[:, None] * rule.weights[None, :] * divu**exps.t).sum(axis=1)


_P3_EXPS = [(a, b) for a in range(4) for b in range(4 - a)]


def _p3_moment_matrix():
    n = len(_P3_EXPS)
    M = np.empty((n, n))
    for i, (a1, b1) in enumerate(_P3_EXPS):
        for j, (a2, b2) in enumerate(_P3_EXPS):
            M[i, j] = monomial_integral(a1 + a2, b1 + b2)
    return np.linalg.inv(M)


_P3_MINV = _p3_moment_matrix()


def oscillation_terms(state: DiscreteState, exps: Exponents) -> np.ndarray:
    """min over P_{2l-1} data approximations, realized as the elementwise L2
    projection of f, plus the stress projection defect."""
    space = state.space
    tt = exps.t_tilde
    rule = triangle_rule(OSC_RULE_DEGREE)
    fv = state.f.at_points(physical_points(space, rule))   # (nt, nq, 2)
    xy = rule.points[:, 1:]
    basis = np.stack([xy[:, 0] ** a * xy[:, 1] ** b for a, b in _P3_EXPS], axis=1)
    # element L2 projection in reference coordinates; the area factors cancel
    moments = np.einsum("q,eqc,qm->ecm", rule.weights, fv, basis)
    coeffs = np.einsum("mn,ecn->ecm", _P3_MINV, moments)
    fproj = np.einsum("ecm,qm->eqc", coeffs, basis)
    mag = np.sqrt(((fv - fproj) ** 2).sum(axis=2))
    h = space.mesh.mesh_sizes()
    w = 2.0 * space.mesh.areas()
    data = h**tt * (w[:, None] * rule.weights[None, :] * mag**tt).sum(axis=1)
    return data + defect_terms(state, exps)


def oscillation(state: DiscreteState, exps: Exponents, element: int) -> float:
    return float(oscillation_terms(state, exps)[element])


def assemble_indicators(state: DiscreteState, exps: Exponents) -> IndicatorField:
    """All per-element indicators, their totals, and the graph indicator."""
    space = state.space
    rule = space.rule()
    interior, jump, defect = _pde_pieces(state, exps)
    pde = interior + jump + defect
    ic = ic_indicators(state, exps)
    osc = oscillation_terms(state, exps)
    ea = graph_indicator_EA(state.law.graph, exps,
                            state.strain_samples(rule),
                            state.stress_samples(rule), space.mesh, rule)
    field = IndicatorField(
        pde=pde, ic=ic, osc=osc, interior=interior, jump=jump, defect=defect,
        E_pde=float(pde.sum()), E_ic=float(ic.sum()),
        E_total=float(pde.sum() + ic.sum()), E_A=ea, exps=exps)
    field.validate()
    return field


def unprojected_divergence_term(state: DiscreteState, exps: Exponents) -> np.ndarray:
    """Diagnostic only: || h div S^n(DU) ||_tt,E ^tt with the *raw* stress.

    For shear-thinning laws this quantity need not stay bounded under
    refinement, which is precisely why the shipped indicator projects the
    stress first.
    """
    space = state.space
    exps_tt = exps.t_tilde
    rule = space.rule()
    law = state.law

    # second derivatives of the P2 basis are constant per element
    from .fespace import _GRAD_LAMBDA

    ref_hess = np.zeros((6, 2, 2))
    for i in range(3):
        ref_hess[i] = 4.0 * np.outer(_GRAD_LAMBDA[i], _GRAD_LAMBDA[i])
    for k in range(3):
        a, b = (k + 1) % 3, (k + 2) % 3
        ref_hess[3 + k] = 4.0 * (np.outer(_GRAD_LAMBDA[a], _GRAD_LAMBDA[b])
                                 + np.outer(_GRAD_LAMBDA[b], _GRAD_LAMBDA[a]))
    invBT = space.inv_jacobians()
    hess = np.einsum("eik,bkl,ejl->ebij", invBT, ref_hess, invBT)
    nodal = state.U.local_coeffs()                     # (nt, 6, 2)
    d2u = np.einsum("ebc,ebij->ecij", nodal, hess)     # d_i d_j U_c

    # G_j = d_j D(U) as symmetric components (11, 22, 12), constant per element
    G = np.empty((space.mesh.num_triangles, 2, 3))
    for j in range(2):
        G[:, j, 0] = d2u[:, 0, 0, j]
        G[:, j, 1] = d2u[:, 1, 1, j]
        G[:, j, 2] = 0.5 * (d2u[:, 0, 1, j] + d2u[:, 1, 0, j])

    D = state.strain_samples(rule)                     # (nt, nq, 3)
    a_fac, b_fac = law.stress_derivative(D)
    from .constitutive import tensor_dot

    div = np.zeros(D.shape[:2] + (2,))
    for j in range(2):
        Gj = np.broadcast_to(G[:, None, j, :], D.shape)
        dS = a_fac[..., None] * Gj + (b_fac * tensor_dot(D, Gj))[..., None] * D
        if j == 0:   # (div S)_i += d_0 S_{i0}
            div[..., 0] += dS[..., 0]
            div[..., 1] += dS[..., 2]
        else:        # (div S)_i += d_1 S_{i1}
            div[..., 0] += dS[..., 2]
            div[..., 1] += dS[..., 1]
    mag = np.sqrt((div**2).sum(axis=2))
    h = space.mesh.mesh_sizes()
    w = 2.0 * space.mesh.areas()
    return h**exps_tt * (w[:, None] * rule.weights[None, :] * mag**exps_tt).sum(axis=1)
