"""Mixed velocity/pressure finite element spaces on a triangulation.

Velocity is always continuous vector-valued P2 vanishing on the boundary
(degree ell = 2).  The pressure is either continuous P1 (Taylor-Hood) or
piecewise constant P0, both with a single zero-mean constraint that is
enforced at the solver level through a Lagrange multiplier.

Node order per element: the three vertices, then the midpoints of the edges
opposite vertex 0, 1, 2.  Velocity dofs are component-major per node
(node k owns dofs 2k and 2k+1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh, _edge_key
from .quadrature import QuadratureRule, triangle_rule

VELOCITY_DEGREE = 2  # ell

_GRAD_LAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def p2_basis(bary: np.ndarray) -> np.ndarray:
    """P2 Lagrange basis values; bary (..., 3) -> (..., 6)."""
    lam = np.asarray(bary, dtype=float)
    out = np.empty(lam.shape[:-1] + (6,))
    for i in range(3):
        out[..., i] = lam[..., i] * (2.0 * lam[..., i] - 1.0)
    for k in range(3):
        a, b = (k + 1) % 3, (k + 2) % 3
        out[..., 3 + k] = 4.0 * lam[..., a] * lam[..., b]
    return out


def p2_grad(bary: np.ndarray) -> np.ndarray:
    """P2 basis gradients in reference coordinates; (..., 3) -> (..., 6, 2)."""
    lam = np.asarray(bary, dtype=float)
    out = np.empty(lam.shape[:-1] + (6, 2))
    for i in range(3):
        out[..., i, :] = (4.0 * lam[..., i] - 1.0)[..., None] * _GRAD_LAMBDA[i]
    for k in range(3):
        a, b = (k + 1) % 3, (k + 2) % 3
        out[..., 3 + k, :] = 4.0 * (
            lam[..., a][..., None] * _GRAD_LAMBDA[b]
            + lam[..., b][..., None] * _GRAD_LAMBDA[a])
    return out


def p1_basis(bary: np.ndarray) -> np.ndarray:
    return np.asarray(bary, dtype=float)


class FESpaceError(Exception):
    pass


@dataclass
class FunctionSpacePair:
    """Velocity/pressure pair with dof maps and element geometry."""

    mesh: Mesh
    pair: str                      # "taylor_hood" | "p2p0" | "p2p2" (diagnostic)
    node_coords: np.ndarray        # (n_vnodes, 2) velocity node coordinates
    elem_vnodes: np.ndarray        # (nt, 6) velocity node ids per element
    boundary_nodes: np.ndarray     # sorted ids of Dirichlet velocity nodes
    free_dofs: np.ndarray          # full velocity dof ids that are unknowns
    full_to_free: np.ndarray       # (2*n_vnodes,) -> free index or -1
    elem_pdofs: np.ndarray         # (nt, npl) pressure dof ids per element
    n_pressure: int
    pressure_degree: int           # jmath: 1 (TH/P2->2) or 0 (P2P0)
    quad_degree: int = 2 * VELOCITY_DEGREE + 2
    _cache: dict = field(default_factory=dict, repr=False)

    # -- geometry ------------------------------------------------------------

    @property
    def num_velocity_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def num_velocity_dofs(self) -> int:
        """Velocity dofs before applying the boundary condition."""
        return 2 * self.num_velocity_nodes

    @property
    def num_free_velocity_dofs(self) -> int:
        return len(self.free_dofs)

    def inv_jacobians(self) -> np.ndarray:
        """(nt, 2, 2) inverse-transpose Jacobians of the affine element maps."""
        if "invBT" not in self._cache:
            p = self.mesh.vertices[self.mesh.triangles]
            B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
            det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
            invT = np.empty_like(B)  # transposed adjugate over det = B^{-T}
            invT[:, 0, 0] = B[:, 1, 1]
            invT[:, 0, 1] = -B[:, 1, 0]
            invT[:, 1, 0] = -B[:, 0, 1]
            invT[:, 1, 1] = B[:, 0, 0]
            invT /= det[:, None, None]
            self._cache["invBT"] = invT
        return self._cache["invBT"]

    def rule(self, degree: int | None = None) -> QuadratureRule:
        return triangle_rule(self.quad_degree if degree is None else degree)

    def basis_tables(self, rule: QuadratureRule):
        """(values (nq, 6), reference gradients (nq, 6, 2)) for the rule."""
        key = ("tab", rule.degree, len(rule.points))
        if key not in self._cache:
            self._cache[key] = (p2_basis(rule.points), p2_grad(rule.points))
        return self._cache[key]

    def physical_grads(self, rule: QuadratureRule) -> np.ndarray:
        """(nt, nq, 6, 2) physical gradients of P2 basis at rule points."""
        key = ("pgrad", rule.degree, len(rule.points))
        if key not in self._cache:
            _, gref = self.basis_tables(rule)
            self._cache[key] = np.einsum("eij,qbj->eqbi", self.inv_jacobians(), gref)
        return self._cache[key]

    def pressure_values(self, rule: QuadratureRule) -> np.ndarray:
        """(nq, npl) pressure basis values at rule points."""
        if self.pressure_degree == 0:
            return np.ones((len(rule.points), 1))
        if self.pressure_degree == 1:
            return p1_basis(rule.points)
        return p2_basis(rule.points)

    def pressure_grads(self, rule: QuadratureRule) -> np.ndarray:
        """(nt, nq, npl, 2) physical pressure basis gradients."""
        nq = len(rule.points)
        if self.pressure_degree == 0:
            return np.zeros((self.mesh.num_triangles, nq, 1, 2))
        gref = (np.broadcast_to(_GRAD_LAMBDA, (nq, 3, 2))
                if self.pressure_degree == 1 else p2_grad(rule.points))
        return np.einsum("eij,qbj->eqbi", self.inv_jacobians(), gref)

    def pressure_integrals(self) -> np.ndarray:
        """c_j = int Q_j dx, used for the zero-mean constraint."""
        if "pint" not in self._cache:
            c = np.zeros(self.n_pressure)
            rule = self.rule(2)
            vals = self.pressure_values(rule)
            w = 2.0 * self.mesh.areas()
            contrib = w[:, None] * (rule.weights[:, None] * vals).sum(axis=0)[None, :]
            np.add.at(c, self.elem_pdofs, contrib)
            self._cache["pint"] = c
        return self._cache["pint"]

    def velocity_dof_map(self) -> np.ndarray:
        """(nt, 12) full velocity dof ids, local order (node, component)."""
        if "vdofs" not in self._cache:
            nodes = self.elem_vnodes
            dofs = np.empty((len(nodes), 12), dtype=np.int64)
            dofs[:, 0::2] = 2 * nodes
            dofs[:, 1::2] = 2 * nodes + 1
            self._cache["vdofs"] = dofs
        return self._cache["vdofs"]


def build_space(mesh: Mesh, pair: str = "taylor_hood",
                quad_degree: int | None = None) -> FunctionSpacePair:
    """Construct a mixed space on the mesh; pair is 'taylor_hood' or 'p2p0'."""
    if pair not in ("taylor_hood", "p2p0"):
        raise FESpaceError(f"unsupported finite element pair {pair!r}")
    return _build(mesh, pair, quad_degree)


def equal_order_p2_space(mesh: Mesh) -> FunctionSpacePair:
    """P2/P2 equal-order pair. Deliberately not inf-sup stable; only used as
    a negative control in stability diagnostics."""
    return _build(mesh, "p2p2", None)


def _build(mesh, pair, quad_degree):
    nv = mesh.num_vertices
    edge_keys = sorted(mesh.edges().keys())
    edge_id = {e: nv + i for i, e in enumerate(edge_keys)}
    coords = np.vstack([
        mesh.vertices,
        0.5 * (mesh.vertices[[a for a, _ in edge_keys]]
               + mesh.vertices[[b for _, b in edge_keys]]),
    ])

    tris = mesh.triangles
    elem_vnodes = np.empty((len(tris), 6), dtype=np.int64)
    elem_vnodes[:, :3] = tris
    for k in range(3):
        a, b = (k + 1) % 3, (k + 2) % 3
        elem_vnodes[:, 3 + k] = [
            edge_id[_edge_key(t[a], t[b])] for t in tris]

    bnodes = set(mesh.boundary_vertices())
    for e in mesh.boundary_edges:
        bnodes.add(edge_id[e])
    boundary_nodes = np.array(sorted(bnodes), dtype=np.int64)

    n_nodes = len(coords)
    constrained = np.zeros(2 * n_nodes, dtype=bool)
    constrained[2 * boundary_nodes] = True
    constrained[2 * boundary_nodes + 1] = True
    free_dofs = np.nonzero(~constrained)[0]
    full_to_free = np.full(2 * n_nodes, -1, dtype=np.int64)
    full_to_free[free_dofs] = np.arange(len(free_dofs))

    if pair == "taylor_hood":
        elem_pdofs = tris.copy()
        n_pressure, pdeg = nv, 1
    elif pair == "p2p0":
        elem_pdofs = np.arange(len(tris), dtype=np.int64)[:, None]
        n_pressure, pdeg = len(tris), 0
    else:  # p2p2 diagnostic pair
        elem_pdofs = elem_vnodes.copy()
        n_pressure, pdeg = n_nodes, 2

    space = FunctionSpacePair(
        mesh=mesh, pair=pair, node_coords=coords, elem_vnodes=elem_vnodes,
        boundary_nodes=boundary_nodes, free_dofs=free_dofs,
        full_to_free=full_to_free, elem_pdofs=elem_pdofs,
        n_pressure=n_pressure, pressure_degree=pdeg)
    if quad_degree is not None:
        space.quad_degree = quad_degree
    return space


# -- fields -------------------------------------------------------------------


@dataclass
class VelocityField:
    """P2 vector field given by coefficients in the full dof numbering."""

    space: FunctionSpacePair
    coeffs: np.ndarray  # (2 * n_vnodes,)

    def __post_init__(self):
        if len(self.coeffs) != self.space.num_velocity_dofs:
            raise FESpaceError("velocity coefficient length mismatch")

    def local_coeffs(self) -> np.ndarray:
        """(nt, 6, 2) per-element nodal values."""
        c = self.coeffs.reshape(-1, 2)
        return c[self.space.elem_vnodes]

    def evaluate(self, element: int, bary) -> tuple[np.ndarray, np.ndarray]:
        """Value (2,) and gradient (2, 2) with grad[i, j] = d u_i / d x_j."""
        bary = np.asarray(bary, dtype=float)
        phi = p2_basis(bary)
        gref = p2_grad(bary)
        gphys = np.einsum("ij,bj->bi", self.space.inv_jacobians()[element], gref)
        nodal = self.local_coeffs()[element]  # (6, 2)
        value = phi @ nodal
        grad = np.einsum("bc,bi->ci", nodal, gphys)
        return value, grad

    def at_rule(self, rule: QuadratureRule):
        """Values (nt, nq, 2) and gradients (nt, nq, 2, 2) at rule points."""
        phi, _ = self.space.basis_tables(rule)
        gphys = self.space.physical_grads(rule)
        nodal = self.local_coeffs()
        vals = np.einsum("qb,ebc->eqc", phi, nodal)
        grads = np.einsum("ebc,eqbi->eqci", nodal, gphys)
        return vals, grads


@dataclass
class PressureField:
    space: FunctionSpacePair
    coeffs: np.ndarray  # (n_pressure,)

    def __post_init__(self):
        if len(self.coeffs) != self.space.n_pressure:
            raise FESpaceError("pressure coefficient length mismatch")

    def evaluate(self, element: int, bary) -> tuple[float, np.ndarray]:
        bary = np.atleast_2d(np.asarray(bary, dtype=float))
        sp = self.space
        if sp.pressure_degree == 0:
            vals = np.full(len(bary), self.coeffs[sp.elem_pdofs[element, 0]])
            grad = np.zeros((len(bary), 2))
        else:
            basis = p1_basis(bary) if sp.pressure_degree == 1 else p2_basis(bary)
            local = self.coeffs[sp.elem_pdofs[element]]
            vals = basis @ local
            gref = (np.broadcast_to(_GRAD_LAMBDA, (len(bary), 3, 2))
                    if sp.pressure_degree == 1 else p2_grad(bary))
            gphys = np.einsum("ij,qbj->qbi", sp.inv_jacobians()[element], gref)
            grad = np.einsum("b,qbi->qi", local, gphys)
        return np.squeeze(vals), np.squeeze(grad)

    def at_rule(self, rule: QuadratureRule):
        """Values (nt, nq) and gradients (nt, nq, 2) at rule points."""
        sp = self.space
        vals_b = sp.pressure_values(rule)
        local = self.coeffs[sp.elem_pdofs]
        vals = np.einsum("qb,eb->eq", vals_b, local)
        grads = np.einsum("eb,eqbi->eqi", local, sp.pressure_grads(rule))
        return vals, grads


@dataclass
class ElementPolyField:
    """Discontinuous per-element polynomial field in the P1 barycentric
    basis; used for the projected stress (components S11, S22, S12)."""

    space: FunctionSpacePair
    coeffs: np.ndarray  # (nt, ncomp, 3)

    def evaluate(self, element: int, bary) -> np.ndarray:
        bary = np.asarray(bary, dtype=float)
        return np.einsum("cb,...b->...c", self.coeffs[element], bary)

    def at_rule(self, rule: QuadratureRule) -> np.ndarray:
        return np.einsum("ecb,qb->eqc", self.coeffs, rule.points)

    def elementwise_divergence(self) -> np.ndarray:
        """(nt, 2) constant divergence per element of the symmetric tensor
        with components (S11, S22, S12)."""
        glam = np.einsum("eij,bj->ebi", self.space.inv_jacobians(), _GRAD_LAMBDA)
        d = np.einsum("ecb,ebi->eci", self.coeffs, glam)  # (nt, comp, deriv)
        div = np.empty((len(self.coeffs), 2))
        div[:, 0] = d[:, 0, 0] + d[:, 2, 1]  # d1 S11 + d2 S12
        div[:, 1] = d[:, 2, 0] + d[:, 1, 1]  # d1 S12 + d2 S22
        return div


# -- interpolation and projection ----------------------------------------------


def interpolate_velocity(space: FunctionSpacePair, fn) -> VelocityField:
    """Nodal interpolation of a callable fn(x, y) -> (u1, u2)."""
    vals = np.array([fn(x, y) for x, y in space.node_coords], dtype=float)
    return VelocityField(space, vals.reshape(-1))


def zero_velocity(space: FunctionSpacePair) -> VelocityField:
    return VelocityField(space, np.zeros(space.num_velocity_dofs))


def project_stress(space: FunctionSpacePair, stress_at_rule,
                   rule: QuadratureRule | None = None) -> ElementPolyField:
    """Elementwise L2 projection of a quadrature-sampled symmetric tensor
    field onto P1 per element.

    stress_at_rule is either an (nt, nq, 3) array of samples at the rule
    points or a callable rule -> such an array.
    """
    rule = space.rule() if rule is None else rule
    samples = stress_at_rule(rule) if callable(stress_at_rule) else stress_at_rule
    nt = space.mesh.num_triangles
    if samples.shape[0] != nt or samples.shape[1] != len(rule.points):
        raise FESpaceError("stress sample shape mismatch")
    # b_i = int_E S lam_i dx = 2|E| sum_q w_q S_q lam_i(q);  M = |E|(I+J)/12,
    # so  a = 24 (I - J/4) sum_q w_q S_q lam_q  (the area cancels).
    moments = np.einsum("q,eqc,qb->ecb", rule.weights, samples, rule.points)
    coeffs = 24.0 * (moments - 0.25 * moments.sum(axis=2, keepdims=True))
    return ElementPolyField(space, coeffs)


def project_pressure(space: FunctionSpacePair, q_at_rule,
                     rule: QuadratureRule | None = None) -> PressureField:
    """Local projection onto the pressure space: elementwise mean for P0,
    a local element-based quasi-interpolant for continuous pressures (each
    vertex takes the value at that vertex of the P1 L2-projection on its
    lowest-index adjacent element, which reproduces pressure-space members).
    """
    rule = space.rule() if rule is None else rule
    samples = q_at_rule(rule) if callable(q_at_rule) else np.asarray(q_at_rule)
    if space.pressure_degree == 0:
        means = (rule.weights[None, :] * samples).sum(axis=1) / rule.weights.sum()
        return PressureField(space, means)
    if space.pressure_degree != 1:
        raise FESpaceError("local pressure projection defined for TH and P2P0")
    moments = np.einsum("q,eq,qb->eb", rule.weights, samples, rule.points)
    local = 24.0 * (moments - 0.25 * moments.sum(axis=1, keepdims=True))
    coeffs = np.zeros(space.n_pressure)
    owner = np.full(space.n_pressure, np.iinfo(np.int64).max, dtype=np.int64)
    tris = space.mesh.triangles
    for e in range(len(tris)):
        for k, v in enumerate(tris[e]):
            if e < owner[v]:
                owner[v] = e
                coeffs[v] = local[e, k]
    return PressureField(space, coeffs)


def transfer_velocity(field: VelocityField, fine: FunctionSpacePair) -> VelocityField:
    """Exact re-interpolation of a coarse velocity into a refined space
    (legal by nestedness of the P2 spaces)."""
    coarse = field.space
    fmesh, cmesh = fine.mesh, coarse.mesh
    node_elem = np.zeros(fine.num_velocity_nodes, dtype=np.int64)
    for e in range(fmesh.num_triangles):
        node_elem[fine.elem_vnodes[e]] = e
    coeffs = np.zeros(fine.num_velocity_dofs)
    pc_all = cmesh.vertices[cmesh.triangles]
    for n, x in enumerate(fine.node_coords):
        anc = fmesh.ancestor(int(node_elem[n]), cmesh)
        pc = pc_all[anc]
        T = np.column_stack([pc[1] - pc[0], pc[2] - pc[0]])
        lam12 = np.linalg.solve(T, x - pc[0])
        bary = np.array([1.0 - lam12.sum(), lam12[0], lam12[1]])
        val, _ = field.evaluate(anc, bary)
        coeffs[2 * n: 2 * n + 2] = val
    return VelocityField(fine, coeffs)


def transfer_pressure(field: PressureField, fine: FunctionSpacePair) -> PressureField:
    coarse = field.space
    if coarse.pressure_degree == 0:
        par = np.array([fine.mesh.ancestor(e, coarse.mesh)
                        for e in range(fine.mesh.num_triangles)])
        return PressureField(fine, field.coeffs[par])
    v2e = np.zeros(fine.mesh.num_vertices, dtype=np.int64)
    for e, tri in enumerate(fine.mesh.triangles):
        v2e[tri] = e
    pc_all = coarse.mesh.vertices[coarse.mesh.triangles]
    coeffs = np.zeros(fine.n_pressure)
    for v, x in enumerate(fine.mesh.vertices):
        anc = fine.mesh.ancestor(int(v2e[v]), coarse.mesh)
        pc = pc_all[anc]
        T = np.column_stack([pc[1] - pc[0], pc[2] - pc[0]])
        lam12 = np.linalg.solve(T, x - pc[0])
        bary = np.array([1.0 - lam12.sum(), lam12[0], lam12[1]])
        val, _ = field.evaluate(anc, bary)
        coeffs[v] = val
    return PressureField(fine, coeffs)


def locate_point(mesh: Mesh, x, tol: float = 1e-12):
    """Brute-force point location; returns (element, barycentric)."""
    x = np.asarray(x, dtype=float)
    p = mesh.vertices[mesh.triangles]
    T = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    rhs = x[None, :] - p[:, 0]
    det = T[:, 0, 0] * T[:, 1, 1] - T[:, 0, 1] * T[:, 1, 0]
    l1 = (T[:, 1, 1] * rhs[:, 0] - T[:, 0, 1] * rhs[:, 1]) / det
    l2 = (-T[:, 1, 0] * rhs[:, 0] + T[:, 0, 0] * rhs[:, 1]) / det
    l0 = 1.0 - l1 - l2
    ok = (l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol)
    if not ok.any():
        raise FESpaceError(f"point {x} outside the mesh")
    e = int(np.nonzero(ok)[0][0])
    return e, np.array([l0[e], l1[e], l2[e]])


# -- norms ---------------------------------------------------------------------


def velocity_norm(field: VelocityField, s: float = 2.0, elements=None,
                  seminorm: bool = False, degree: int | None = None) -> float:
    """W^{1,s} norm (or |.|_{1,s} seminorm) of a velocity field."""
    sp = field.space
    rule = sp.rule(degree)
    vals, grads = field.at_rule(rule)
    gq = (np.abs(grads) ** 2).sum(axis=(2, 3)) ** (s / 2.0)
    vq = (np.abs(vals) ** 2).sum(axis=2) ** (s / 2.0)
    integrand = gq if seminorm else gq + vq
    w = 2.0 * sp.mesh.areas()
    if elements is not None:
        mask = np.zeros(sp.mesh.num_triangles, dtype=bool)
        mask[list(elements)] = True
        w = np.where(mask, w, 0.0)
    return float((w[:, None] * rule.weights[None, :] * integrand).sum() ** (1.0 / s))


def lebesgue_norm(space: FunctionSpacePair, samples_at_rule, s: float,
                  elements=None, rule: QuadratureRule | None = None) -> float:
    """L^s norm of a sampled scalar/vector/tensor field (last axes reduced
    with the Frobenius norm)."""
    rule = space.rule() if rule is None else rule
    samples = samples_at_rule(rule) if callable(samples_at_rule) else samples_at_rule
    mag = np.sqrt((np.asarray(samples) ** 2).reshape(
        samples.shape[0], samples.shape[1], -1).sum(axis=2))
    w = 2.0 * space.mesh.areas()
    if elements is not None:
        mask = np.zeros(space.mesh.num_triangles, dtype=bool)
        mask[list(elements)] = True
        w = np.where(mask, w, 0.0)
    return float((w[:, None] * rule.weights[None, :] * mag**s).sum() ** (1.0 / s))


# -- inf-sup constant ------------------------------------------------------------


def inf_sup_constant(space: FunctionSpacePair) -> float:
    """Discrete inf-sup constant at s = 2: the smallest generalized singular
    value of the divergence operator between the H^1_0 velocity metric and
    the L^2 zero-mean pressure metric."""
    import scipy.linalg as sla

    from .solver import assemble_divergence, assemble_velocity_h1, assemble_pressure_mass

    B = assemble_divergence(space)          # (n_pressure, n_free)
    A = assemble_velocity_h1(space)         # (n_free, n_free) grad-grad Gram
    M = assemble_pressure_mass(space)       # (n_pressure, n_pressure)
    if B.shape[1] == 0:
        return 0.0
    Bd = B.toarray()
    Ad = A.toarray()
    Md = M.toarray()
    S = Bd @ np.linalg.solve(Ad, Bd.T)
    c = space.pressure_integrals()
    Z = sla.null_space(c[None, :])          # basis of the zero-mean subspace
    Sz = Z.T @ S @ Z
    Mz = Z.T @ Md @ Z
    try:
        eig = sla.eigh(Sz, Mz, eigvals_only=True)
    except sla.LinAlgError as exc:
        raise FESpaceError(f"inf-sup eigenproblem failed: {exc}") from exc
    return float(np.sqrt(max(eig[0], 0.0)))
