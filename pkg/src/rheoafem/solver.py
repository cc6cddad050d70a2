"""Assembly and solution of the regularized Galerkin saddle-point problem.

The discrete system couples the momentum equations (tested with the free
velocity basis), the continuity equations (tested with every pressure basis
function) and a single Lagrange multiplier row enforcing the zero pressure
mean.  Convection enters in the skew-symmetrized (Temam) form

    B[v, w, h] = 1/2 int (v . grad) w . h - (v . grad) h . w dx,

which vanishes for w = h regardless of pointwise divergence-freedom.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constitutive import RegularizedLaw
from .fespace import (FunctionSpacePair, PressureField, VelocityField,
                      build_space, transfer_pressure, transfer_velocity)
from .forcing import ForcingField
from .quadrature import QuadratureRule


class SolverError(Exception):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


# -- symmetric-gradient helpers -------------------------------------------------


def sym_grad(grads: np.ndarray) -> np.ndarray:
    """(..., 2, 2) velocity gradients -> (..., 3) symmetric parts."""
    out = np.empty(grads.shape[:-2] + (3,))
    out[..., 0] = grads[..., 0, 0]
    out[..., 1] = grads[..., 1, 1]
    out[..., 2] = 0.5 * (grads[..., 0, 1] + grads[..., 1, 0])
    return out


def physical_points(space: FunctionSpacePair, rule: QuadratureRule) -> np.ndarray:
    """(nt, nq, 2) physical coordinates of the rule points."""
    p = space.mesh.vertices[space.mesh.triangles]
    return np.einsum("qb,ebi->eqi", rule.points, p)


# -- bilinear building blocks ----------------------------------------------------


def _scatter(space, rows_full, cols_full, vals, shape, row_map=None, col_map=None):
    rows = rows_full if row_map is None else row_map[rows_full]
    cols = cols_full if col_map is None else col_map[cols_full]
    keep = (rows >= 0) & (cols >= 0)
    return sp.coo_matrix(
        (vals[keep], (rows[keep], cols[keep])), shape=shape).tocsr()


def assemble_velocity_h1(space: FunctionSpacePair) -> sp.csr_matrix:
    """Gradient Gram matrix int grad V : grad W dx on the free dofs."""
    rule = space.rule(4)
    g = space.physical_grads(rule)        # (nt, nq, 6, 2)
    w = 2.0 * space.mesh.areas()
    node_block = np.einsum("q,eqai,eqbi,e->eab", rule.weights, g, g, w)
    nE = space.mesh.num_triangles
    local = np.zeros((nE, 12, 12))
    local[:, 0::2, 0::2] = node_block
    local[:, 1::2, 1::2] = node_block
    dofs = space.velocity_dof_map()
    rows = np.repeat(dofs, 12, axis=1).reshape(-1)
    cols = np.tile(dofs, (1, 12)).reshape(-1)
    n = space.num_free_velocity_dofs
    return _scatter(space, rows, cols, local.reshape(-1), (n, n),
                    row_map=space.full_to_free, col_map=space.full_to_free)


def assemble_pressure_mass(space: FunctionSpacePair) -> sp.csr_matrix:
    rule = space.rule(4)
    q = space.pressure_values(rule)      # (nq, npl)
    w = 2.0 * space.mesh.areas()
    local = np.einsum("q,qa,qb,e->eab", rule.weights, q, q, w)
    pd = space.elem_pdofs
    npl = pd.shape[1]
    rows = np.repeat(pd, npl, axis=1).reshape(-1)
    cols = np.tile(pd, (1, npl)).reshape(-1)
    n = space.n_pressure
    return _scatter(space, rows, cols, local.reshape(-1), (n, n))


def assemble_divergence(space: FunctionSpacePair) -> sp.csr_matrix:
    """B[j, i] = int Q_j div V_i dx on the free velocity dofs."""
    rule = space.rule(4)
    g = space.physical_grads(rule)
    q = space.pressure_values(rule)
    w = 2.0 * space.mesh.areas()
    # div of basis (node a, comp c) is d_c phi_a
    local = np.einsum("q,qj,eqac,e->ejac", rule.weights, q, g, w)
    nE, npl = space.mesh.num_triangles, q.shape[1]
    pd = space.elem_pdofs
    vd = space.velocity_dof_map().reshape(nE, 6, 2)
    rows = np.repeat(pd[:, :, None], 12, axis=2).reshape(-1)
    cols = np.repeat(vd.reshape(nE, 1, 12), npl, axis=1).reshape(-1)
    n = space.num_free_velocity_dofs
    return _scatter(space, rows, cols, local.reshape(-1),
                    (space.n_pressure, n), col_map=space.full_to_free)


def assemble_load(space: FunctionSpacePair, f: ForcingField,
                  rule: QuadratureRule | None = None) -> np.ndarray:
    rule = space.rule() if rule is None else rule
    pts = physical_points(space, rule)
    fv = f.at_points(pts)                 # (nt, nq, 2)
    phi, _ = space.basis_tables(rule)
    w = 2.0 * space.mesh.areas()
    local = np.einsum("q,qa,eqc,e->eac", rule.weights, phi, fv, w)
    out = np.zeros(space.num_velocity_dofs)
    np.add.at(out, space.velocity_dof_map(), local.reshape(-1, 12))
    return out[space.free_dofs]


# -- convection -------------------------------------------------------------------


def trilinear_form(v: VelocityField, w: VelocityField, h: VelocityField,
                   degree: int | None = None) -> float:
    """B[v, w, h] = 1/2 int (v . grad) w . h - (v . grad) h . w dx."""
    space = v.space
    rule = space.rule(degree if degree is not None else 3 * 2)
    vv, _ = v.at_rule(rule)
    wv, wg = w.at_rule(rule)
    hv, hg = h.at_rule(rule)
    conv_w = np.einsum("eqj,eqcj->eqc", vv, wg)   # (v . grad) w
    conv_h = np.einsum("eqj,eqcj->eqc", vv, hg)
    integrand = 0.5 * ((conv_w * hv).sum(axis=2) - (conv_h * wv).sum(axis=2))
    wts = 2.0 * space.mesh.areas()
    return float((wts[:, None] * rule.weights[None, :] * integrand).sum())


def strong_convection_at_rule(u_vals: np.ndarray, u_grads: np.ndarray) -> np.ndarray:
    """(u . grad) u + 1/2 u div u from values (..., 2) and gradients
    (..., 2, 2); the strong form consistent with the Temam trilinear form."""
    conv = np.einsum("...j,...cj->...c", u_vals, u_grads)
    divu = u_grads[..., 0, 0] + u_grads[..., 1, 1]
    return conv + 0.5 * divu[..., None] * u_vals


def strong_convection(v: VelocityField, element: int, bary) -> np.ndarray:
    vals, grads = v.evaluate(element, bary)
    return strong_convection_at_rule(vals[None, :], grads[None, :, :])[0]


# -- nonlinear system --------------------------------------------------------------


@dataclass
class SolverOptions:
    tol_newton: float = 1e-9
    max_newton: int = 40
    damping: float = 1e-4          # sufficient-decrease parameter
    min_step: float = 2.0**-16
    continuation_steps: int = 4
    quad_degree: int | None = None
    verbose: bool = False


@dataclass
class DiscreteState:
    """One converged Galerkin iterate."""

    space: FunctionSpacePair
    U: VelocityField
    P: PressureField
    law: RegularizedLaw
    f: ForcingField
    n: int
    residual_norm: float
    energy: float
    newton_iters: int = 0
    multiplier: float = 0.0

    def stress_samples(self, rule: QuadratureRule) -> np.ndarray:
        """(nt, nq, 3) samples of S^n(DU) at the rule points."""
        _, grads = self.U.at_rule(rule)
        return self.law.stress(sym_grad(grads))

    def strain_samples(self, rule: QuadratureRule) -> np.ndarray:
        _, grads = self.U.at_rule(rule)
        return sym_grad(grads)

    def divergence_defect(self) -> float:
        """max_j |int Q_j div U| / (||U||_1 ||Q_j||), the discrete
        divergence-free defect."""
        from .fespace import velocity_norm

        space = self.space
        B = assemble_divergence(space)
        M = assemble_pressure_mass(space)
        qnorm = np.sqrt(M.diagonal())
        unorm = max(velocity_norm(self.U, 2.0), 1e-300)
        vals = np.abs(B @ self.U.coeffs[space.free_dofs])
        return float((vals / (qnorm * unorm)).max())


class _System:
    """Caches the dof layout and assembles residual/Jacobian pairs."""

    def __init__(self, space: FunctionSpacePair, law: RegularizedLaw,
                 f: ForcingField, quad_degree=None):
        self.space = space
        self.law = law
        self.rule = space.rule(quad_degree)
        self.nfree = space.num_free_velocity_dofs
        self.np_ = space.n_pressure
        self.size = self.nfree + self.np_ + 1
        self.B = assemble_divergence(space)
        self.cvec = space.pressure_integrals()
        self.load = assemble_load(space, f, self.rule)
        self.weights = 2.0 * space.mesh.areas()
        self.phi, _ = space.basis_tables(self.rule)
        self.grads = space.physical_grads(self.rule)   # (nt, nq, 6, 2)
        self.vdofs = space.velocity_dof_map()
        self.pvals = space.pressure_values(self.rule)

    def split(self, x):
        u = x[: self.nfree]
        p = x[self.nfree: self.nfree + self.np_]
        mu = x[-1]
        return u, p, mu

    def fields(self, x):
        u, p, mu = self.split(x)
        coeffs = np.zeros(self.space.num_velocity_dofs)
        coeffs[self.space.free_dofs] = u
        return VelocityField(self.space, coeffs), PressureField(self.space, p), mu

    def _velocity_at_rule(self, coeffs):
        nodal = coeffs.reshape(-1, 2)[self.space.elem_vnodes]
        vals = np.einsum("qb,ebc->eqc", self.phi, nodal)
        grads = np.einsum("ebc,eqbi->eqci", nodal, self.grads)
        return vals, grads

    def residual(self, x) -> np.ndarray:
        U, P, mu = self.fields(x)
        uv, ug = self._velocity_at_rule(U.coeffs)
        D = sym_grad(ug)
        S = self.law.stress(D)
        wq = self.weights[:, None] * self.rule.weights[None, :]

        # stress + convection tested with the velocity basis
        sgrad = np.einsum("eq,eqij,eqaj->eqai", wq, _unpack(S), self.grads)
        conv_w = np.einsum("eqj,eqcj->eqc", uv, ug)
        r_loc = sgrad + 0.5 * np.einsum("eq,qa,eqc->eqac", wq, self.phi, conv_w)
        r_loc -= 0.5 * np.einsum("eq,eqaj,eqj,eqc->eqac", wq, self.grads, uv, uv)
        r_full = np.zeros(self.space.num_velocity_dofs)
        np.add.at(r_full, self.vdofs.reshape(-1, 12),
                  r_loc.sum(axis=1).reshape(-1, 12))
        ru = r_full[self.space.free_dofs] - self.load
        u, p, _ = self.split(x)
        ru -= self.B.T @ p
        rp = self.B @ u + mu * self.cvec
        rmu = self.cvec @ p
        return np.concatenate([ru, rp, [rmu]])

    def jacobian(self, x, picard=False) -> sp.csr_matrix:
        U, P, mu = self.fields(x)
        uv, ug = self._velocity_at_rule(U.coeffs)
        D = sym_grad(ug)
        a, b = self.law.stress_derivative(D)
        wq = self.weights[:, None] * self.rule.weights[None, :]
        g = self.grads
        nE = self.space.mesh.num_triangles

        # stress block: D(phi_b e_d):D(phi_a e_c) =
        #   1/2 [(grad phi_a . grad phi_b) delta_cd + (grad phi_a)_d (grad phi_b)_c]
        gg = np.einsum("eq,eqai,eqbi->eab", wq * a, g, g)
        gx = np.einsum("eq,eqad,eqbc->eabdc", 0.5 * wq * a, g, g)
        local = np.zeros((nE, 6, 2, 6, 2))
        for c in range(2):
            local[:, :, c, :, c] += 0.5 * gg
        local += np.transpose(gx, (0, 1, 4, 2, 3))  # -> (e, a, c, b, d)
        if not picard:
            Dg = np.einsum("eqij,eqaj->eqai", _unpack(D), g)  # (D . grad phi_a)_i
            local += np.einsum("eq,eqac,eqbd->eacbd", wq * b, Dg, Dg)

        # convection linearization
        conv_u = np.einsum("eqj,eqcj->eqc", uv, ug)           # (U.grad)U
        ugradphi = np.einsum("eqj,eqbj->eqb", uv, g)           # U.grad phi_b
        if picard:
            cross = np.zeros((nE, 6, 2, 6, 2))
        else:
            cross = 0.5 * np.einsum("eq,qa,qb,eqcd->eacbd",
                                    wq, self.phi, self.phi, ug)
            cross -= 0.5 * np.einsum("eq,eqad,qb,eqc->eacbd",
                                     wq, g, self.phi, uv)
        diag = 0.5 * np.einsum("eq,qa,eqb->eab", wq, self.phi, ugradphi)
        diag -= 0.5 * np.einsum("eq,eqa,qb->eab", wq, ugradphi, self.phi)
        for c in range(2):
            cross[:, :, c, :, c] += diag
        local += cross

        dofs = self.vdofs
        rows = np.repeat(dofs, 12, axis=1).reshape(-1)
        cols = np.tile(dofs, (1, 12)).reshape(-1)
        fmap = self.space.full_to_free
        r = fmap[rows]
        c_ = fmap[cols]
        keep = (r >= 0) & (c_ >= 0)
        Juu = sp.coo_matrix((local.reshape(-1)[keep], (r[keep], c_[keep])),
                            shape=(self.nfree, self.nfree)).tocsr()
        return sp.bmat([
            [Juu, -self.B.T, None],
            [self.B, None, self.cvec[:, None]],
            [None, self.cvec[None, :], None],
        ], format="csc")


def _unpack(T3: np.ndarray) -> np.ndarray:
    """(..., 3) symmetric components -> (..., 2, 2) full tensors."""
    out = np.empty(T3.shape[:-1] + (2, 2))
    out[..., 0, 0] = T3[..., 0]
    out[..., 1, 1] = T3[..., 1]
    out[..., 0, 1] = T3[..., 2]
    out[..., 1, 0] = T3[..., 2]
    return out


def linear_solve(A, rhs: np.ndarray) -> np.ndarray:
    """Sparse direct solve with a residual check and one refinement step."""
    A = sp.csc_matrix(A)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    x = lu.solve(rhs)
    scale = np.linalg.norm(rhs)
    if scale > 0:
        res = rhs - A @ x
        if np.linalg.norm(res) > 1e-12 * scale:
            x = x + lu.solve(res)
        res = rhs - A @ x
        if not np.isfinite(x).all() or np.linalg.norm(res) > 1e-10 * scale:
            raise SolverError("linear solve did not reach the required residual")
    return x


def _energy(system: _System, x) -> float:
    U, _, _ = system.fields(x)
    _, ug = system._velocity_at_rule(U.coeffs)
    D = sym_grad(ug)
    S = system.law.stress(D)
    from .constitutive import tensor_dot

    wq = system.weights[:, None] * system.rule.weights[None, :]
    return float((wq * tensor_dot(S, D)).sum())


def solve_discrete(mesh_or_space, pair: str, law: RegularizedLaw,
                   f: ForcingField, opts: SolverOptions | None = None,
                   warm_start=None, n: int | None = None) -> DiscreteState:
    """Solve the regularized Galerkin problem with damped Newton, Picard
    fallback and smoothing-parameter continuation."""
    opts = opts or SolverOptions()
    if isinstance(mesh_or_space, FunctionSpacePair):
        space = mesh_or_space
    else:
        space = build_space(mesh_or_space, pair,
                            quad_degree=opts.quad_degree)

    x0 = np.zeros(space.num_free_velocity_dofs + space.n_pressure + 1)
    if warm_start is not None:
        U0, P0 = warm_start
        if U0.space is not space:
            U0 = transfer_velocity(U0, space)
            P0 = transfer_pressure(P0, space)
        x0[: space.num_free_velocity_dofs] = U0.coeffs[space.free_dofs]
        x0[space.num_free_velocity_dofs: -1] = P0.coeffs

    def run_ladder(x, laws):
        system = None
        total = 0
        res = np.inf
        tol = np.inf
        for law_j in laws:
            system = _System(space, law_j, f, opts.quad_degree)
            tol = opts.tol_newton * max(1.0, np.linalg.norm(system.load))
            x, iters, res = _newton(system, x, tol, opts)
            total += iters
        return x, system, total, res, tol

    # a warm start usually lands in the Newton basin directly; fall back to
    # the smoothing-parameter ladder when it does not
    ladders = []
    if warm_start is not None:
        ladders.append((x0, [law]))
    ladders.append((np.zeros_like(x0), _continuation_sequence(law, opts)))
    last_exc = None
    for x_init, laws in ladders:
        x, system, total_iters, res_norm, tol = run_ladder(x_init, laws)
        if res_norm <= tol:
            U, P, mu = system.fields(x)
            return DiscreteState(space, U, P, law, f, n or law.n, res_norm,
                                 _energy(system, x), total_iters, mu)
        U, P, mu = system.fields(x)
        last_exc = SolverError(
            f"nonlinear solver stalled at residual {res_norm:.3e} (tol {tol:.3e})",
            state=DiscreteState(space, U, P, law, f, n or law.n, res_norm,
                                _energy(system, x), total_iters, mu))
    raise last_exc


def _continuation_sequence(law: RegularizedLaw, opts: SolverOptions):
    """Solve a ladder of more strongly smoothed laws before the target.

    The target smoothing scale is law.tau, except for the identity scheme
    whose raw law is approached through simple-tau surrogates whenever the
    differential stiffness blows up near zero strain.
    """
    steps = opts.continuation_steps
    if steps <= 0 or not hasattr(law, "with_tau"):
        return [law]
    if law.scheme == "identity":
        d0 = float(law.scalar_deriv(np.asarray(1e-8)))
        d1 = float(law.scalar_deriv(np.asarray(1.0)))
        if not np.isfinite(d0) or d0 > 100.0 * max(d1, 1e-30):
            target = 1e-3
        else:
            return [law]
    else:
        target = law.tau
        if target >= 0.5:
            return [law]
    taus = np.geomspace(0.5, target, steps + 1)[:-1]
    return [law.with_tau(float(t)) for t in taus] + [law]


def _newton(system: _System, x, tol, opts: SolverOptions):
    """Damped Newton with a Picard (frozen-coefficient) fallback; iterates
    are only replaced by strictly better ones."""
    F = system.residual(x)
    norm = np.linalg.norm(F)
    it = 0
    use_picard = False
    while norm > tol and it < opts.max_newton:
        try:
            J = system.jacobian(x, picard=use_picard)
            dx = linear_solve(J, -F)
        except SolverError:
            if use_picard:
                break
            use_picard = True
            continue
        accepted = None
        alpha = 1.0
        while alpha >= opts.min_step:
            xn = x + alpha * dx
            Fn = system.residual(xn)
            nn = np.linalg.norm(Fn)
            if np.isfinite(nn) and nn <= (1.0 - opts.damping * alpha) * norm:
                accepted = (xn, Fn, nn)
                break
            alpha *= 0.5
        it += 1
        if accepted is None:
            if use_picard:
                break
            use_picard = True
            continue
        x, F, norm = accepted
        if use_picard and alpha > 0.25:
            use_picard = False  # Picard made good progress: retry Newton
    return x, it, norm
