"""Maximal monotone r-graphs, regularized constitutive laws, and the
graph-approximation indicator.

All supported graphs are isotropic: the tensor law is S = S*(|D|) D/|D| for a
scalar monotone curve S*.  The scalar graph is stored as an ordered list of
curve segments (monotone function pieces plus vertical jump segments), which
is what the pointwise graph-distance minimization walks along.

Tensor fields are passed around as arrays with a trailing axis of length 3
holding the symmetric components (S11, S22, S12).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class ConstitutiveError(Exception):
    pass


# -- exponent bookkeeping ------------------------------------------------------


@dataclass(frozen=True)
class Exponents:
    """The integrability exponents attached to an r-graph problem."""

    r: float
    r_conj: float
    r_tilde: float
    t: float
    t_tilde: float
    t_conj: float
    t_tilde_conj: float
    d: int = 2

    @property
    def low_range(self) -> bool:
        return self.r <= 3.0 * self.d / (self.d + 2.0)


def make_exponents(r: float, d: int = 2, t: float | None = None) -> Exponents:
    """Populate all exponents for a given r (and optionally a custom t)."""
    lower = 2.0 * d / (d + 1.0)
    if r <= lower:
        raise ConstitutiveError(
            f"r = {r} outside the admissible range ({lower}, inf) for d = {d}")
    r_conj = r / (r - 1.0)
    if r <= 3.0 * d / (d + 2.0):
        r_tilde = 0.5 * d * r / (d - r)
        if t is None:
            t = 0.5 * (lower + r)
        if not lower < t < r:
            raise ConstitutiveError(f"t = {t} must lie in ({lower}, {r})")
        t_tilde = 0.5 * d * t / (d - t)
    else:
        t = r
        r_tilde = r_conj
        t_tilde = r_conj
    return Exponents(r=r, r_conj=r_conj, r_tilde=r_tilde, t=t, t_tilde=t_tilde,
                     t_conj=t / (t - 1.0), t_tilde_conj=t_tilde / (t_tilde - 1.0),
                     d=d)


# -- tensor helpers -------------------------------------------------------------


def tensor_norm(T: np.ndarray) -> np.ndarray:
    """Frobenius norm of symmetric tensors stored as (..., 3)."""
    T = np.asarray(T, dtype=float)
    return np.sqrt(T[..., 0] ** 2 + T[..., 1] ** 2 + 2.0 * T[..., 2] ** 2)


def tensor_dot(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Frobenius inner product A : B for (..., 3) symmetric tensors."""
    return (A[..., 0] * B[..., 0] + A[..., 1] * B[..., 1]
            + 2.0 * A[..., 2] * B[..., 2])


# -- scalar curve segments -------------------------------------------------------


@dataclass(frozen=True)
class FuncSegment:
    """Graph piece {(m, value(m)) : m_lo <= m <= m_hi}; m_hi may be inf."""

    m_lo: float
    m_hi: float
    value: callable
    deriv: callable


@dataclass(frozen=True)
class VertSegment:
    """Vertical jump {(m, s) : s_lo <= s <= s_hi}."""

    m: float
    s_lo: float
    s_hi: float


def _power_branch(c: float, kappa: float, q: float):
    """The branch S(m) = c (kappa^2 + m^2)^((q-2)/2) m and its derivative."""

    def value(m):
        m = np.asarray(m, dtype=float)
        if kappa == 0.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = c * np.where(m > 0, m, 1.0) ** (q - 1.0)
            return np.where(m > 0, out, 0.0)
        return c * (kappa**2 + m**2) ** ((q - 2.0) / 2.0) * m

    def deriv(m):
        m = np.asarray(m, dtype=float)
        if kappa == 0.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = c * (q - 1.0) * np.where(m > 0, m, 1.0) ** (q - 2.0)
            fill = 0.0 if q > 2.0 else (c * (q - 1.0) if q == 2.0 else np.inf)
            return np.where(m > 0, out, fill)
        return (c * (kappa**2 + m**2) ** ((q - 4.0) / 2.0)
                * ((q - 1.0) * m**2 + kappa**2))

    def inverse(s):
        if s <= 0.0:
            return 0.0
        if kappa == 0.0:
            return float((s / c) ** (1.0 / (q - 1.0)))
        from scipy.optimize import brentq

        hi = 1.0
        while value(hi) < s:
            hi *= 2.0
        return float(brentq(lambda m: value(m) - s, 0.0, hi, xtol=1e-14))

    return value, deriv, inverse


# -- graph models ----------------------------------------------------------------


class GraphModel:
    """A maximal monotone r-graph built from a scalar monotone curve."""

    kind: str = "abstract"

    def segments(self) -> list:
        raise NotImplementedError

    def selection_scalar(self, m):
        """The scalar selection S*(m) (with S*(0) = 0 at jumps)."""
        raise NotImplementedError

    def selection_deriv(self, m):
        """a.e. derivative of the scalar selection."""
        raise NotImplementedError

    def breakpoints(self) -> list[float]:
        """m-values where the scalar selection is not smooth."""
        return [0.0]

    def jumps(self) -> list[tuple[float, float]]:
        """(position, size) of the discontinuities of the odd-extended
        scalar selection at nonnegative positions."""
        return []

    def scalar_inverse(self, s: float) -> float:
        """Some m with S*(m) >= s (used to cap distance searches)."""
        raise NotImplementedError

    def growth_constants(self, exps: Exponents):
        """(c1, k, c2, m) with |S| <= c1 m^(r-1) + k and S m >= c2 m^r - m."""
        raise NotImplementedError

    def selection(self, D: np.ndarray) -> np.ndarray:
        """Tensor selection S*(|D|) D/|D| for (..., 3) input."""
        D = np.asarray(D, dtype=float)
        m = tensor_norm(D)
        safe = np.where(m > 0, m, 1.0)
        return (np.where(m > 0, self.selection_scalar(m) / safe, 0.0))[..., None] * D

    def regularized(self, scheme: str, n: int, tau0: float = 1.0) -> "RegularizedLaw":
        return make_regularized(self, scheme, n, tau0)


class Newtonian(GraphModel):
    kind = "newtonian"

    def __init__(self, nu: float):
        if nu <= 0:
            raise ConstitutiveError("viscosity must be positive")
        self.nu = float(nu)
        self.sigma = 0.0

    def segments(self):
        return [FuncSegment(0.0, np.inf, lambda m: 2.0 * self.nu * np.asarray(m, float),
                            lambda m: np.full_like(np.asarray(m, float), 2.0 * self.nu))]

    def selection_scalar(self, m):
        return 2.0 * self.nu * np.asarray(m, dtype=float)

    def selection_deriv(self, m):
        return np.full_like(np.asarray(m, dtype=float), 2.0 * self.nu)

    def breakpoints(self):
        return [0.0]

    def scalar_inverse(self, s):
        return s / (2.0 * self.nu)

    def growth_constants(self, exps):
        if abs(exps.r - 2.0) > 1e-12:
            raise ConstitutiveError("a Newtonian law is a 2-graph only")
        return 2.0 * self.nu, 0.0, 2.0 * self.nu, 0.0


class PowerLaw(GraphModel):
    kind = "power_law"

    def __init__(self, consistency: float, exponent: float, kappa: float = 0.0):
        if consistency <= 0 or exponent <= 1:
            raise ConstitutiveError("need consistency > 0 and exponent > 1")
        self.c = float(consistency)
        self.q = float(exponent)
        self.kappa = float(kappa)
        self.sigma = 0.0
        self._value, self._deriv, self._inverse = _power_branch(
            self.c, self.kappa, self.q)

    def segments(self):
        return [FuncSegment(0.0, np.inf, self._value, self._deriv)]

    def selection_scalar(self, m):
        return self._value(m)

    def selection_deriv(self, m):
        return self._deriv(m)

    def scalar_inverse(self, s):
        return self._inverse(s)

    def growth_constants(self, exps):
        return _power_growth_constants(self.c, self.kappa, self.q, exps.r, 0.0)


def _power_growth_constants(c, kappa, q, r, sigma):
    if abs(q - r) > 1e-12:
        raise ConstitutiveError(f"branch exponent {q} incompatible with r = {r}")
    if r <= 2.0:
        c1, k = c, sigma
        c2 = c * 2.0 ** ((r - 2.0) / 2.0)
        m = c2 * kappa**r
    else:
        c1 = 2.0 * c * 2.0 ** ((r - 2.0) / 2.0)
        k = sigma + c * 2.0 ** ((r - 2.0) / 2.0) * kappa ** (r - 1.0)
        c2, m = c, 0.0
    return c1, k, c2, m


class HerschelBulkley(GraphModel):
    """Yield stress sigma at rest plus a power branch above it."""

    kind = "herschel_bulkley"

    def __init__(self, sigma: float, consistency: float, exponent: float,
                 kappa: float = 0.0):
        if sigma < 0:
            raise ConstitutiveError("yield stress must be nonnegative")
        self.sigma = float(sigma)
        self.c = float(consistency)
        self.q = float(exponent)
        self.kappa = float(kappa)
        self._bvalue, self._bderiv, self._binverse = _power_branch(
            self.c, self.kappa, self.q)

    def segments(self):
        segs = []
        if self.sigma > 0:
            segs.append(VertSegment(0.0, 0.0, self.sigma))
        segs.append(FuncSegment(
            0.0, np.inf,
            lambda m: np.where(np.asarray(m, float) > 0,
                               self.sigma + self._bvalue(m), 0.0),
            self._bderiv))
        return segs

    def selection_scalar(self, m):
        m = np.asarray(m, dtype=float)
        return np.where(m > 0, self.sigma + self._bvalue(m), 0.0)

    def selection_deriv(self, m):
        return self._bderiv(m)

    def scalar_inverse(self, s):
        return self._binverse(max(s - self.sigma, 0.0))

    def jumps(self):
        # the odd extension jumps from -sigma to +sigma at the origin
        return [(0.0, 2.0 * self.sigma)] if self.sigma > 0 else []

    def growth_constants(self, exps):
        return _power_growth_constants(self.c, self.kappa, self.q, exps.r, self.sigma)


class Bingham(HerschelBulkley):
    """Rigid below the yield stress, Navier-Stokes above: S = sigma + 2 nu m."""

    kind = "bingham"

    def __init__(self, nu: float, sigma: float):
        if nu <= 0:
            raise ConstitutiveError("viscosity must be positive")
        super().__init__(sigma=sigma, consistency=2.0 * nu, exponent=2.0)
        self.nu = float(nu)


class Plateau(GraphModel):
    """Continuous law: lower power branch, a stress plateau, upper branch."""

    kind = "plateau"

    def __init__(self, sigma, c1, q1, kappa1, c2, q2, kappa2):
        self.sigma = float(sigma)
        self.b1 = _power_branch(float(c1), float(kappa1), float(q1))
        self.b2 = _power_branch(float(c2), float(kappa2), float(q2))
        self.c2_, self.q2_, self.kappa2_ = float(c2), float(q2), float(kappa2)
        self.delta1 = self.b1[2](self.sigma)
        self.delta2 = self.b2[2](self.sigma)
        if not self.delta1 <= self.delta2:
            raise ConstitutiveError("plateau endpoints out of order")

    def segments(self):
        return [
            FuncSegment(0.0, self.delta1, self.b1[0], self.b1[1]),
            FuncSegment(self.delta1, self.delta2,
                        lambda m: np.full_like(np.asarray(m, float), self.sigma),
                        lambda m: np.zeros_like(np.asarray(m, float))),
            FuncSegment(self.delta2, np.inf, self.b2[0], self.b2[1]),
        ]

    def selection_scalar(self, m):
        m = np.asarray(m, dtype=float)
        return np.where(m < self.delta1, self.b1[0](m),
                        np.where(m < self.delta2, self.sigma, self.b2[0](m)))

    def selection_deriv(self, m):
        m = np.asarray(m, dtype=float)
        return np.where(m < self.delta1, self.b1[1](m),
                        np.where(m < self.delta2, 0.0, self.b2[1](m)))

    def breakpoints(self):
        return [0.0, self.delta1, self.delta2]

    def scalar_inverse(self, s):
        if s <= self.sigma:
            return self.delta2
        return self.b2[2](s)

    def growth_constants(self, exps):
        c1, k, c2, m = _power_growth_constants(
            self.c2_, self.kappa2_, self.q2_, exps.r, self.sigma)
        # below the upper branch the law is bounded by sigma, above it the
        # power bound applies; coercivity loses the [0, delta2] strip
        return c1, k + self.sigma, c2, m + c2 * self.delta2 ** exps.r


class PlateauWithJump(Plateau):
    """Plateau followed by a stress jump at its right endpoint."""

    kind = "plateau_with_jump"

    def __init__(self, sigma, c1, q1, kappa1, c2, q2, kappa2, delta2):
        GraphModel.__init__(self)
        self.sigma = float(sigma)
        self.b1 = _power_branch(float(c1), float(kappa1), float(q1))
        self.b2 = _power_branch(float(c2), float(kappa2), float(q2))
        self.c2_, self.q2_, self.kappa2_ = float(c2), float(q2), float(kappa2)
        self.delta1 = self.b1[2](self.sigma)
        self.delta2 = float(delta2)
        self.s_top = float(self.b2[0](self.delta2))
        if not self.delta1 <= self.delta2:
            raise ConstitutiveError("plateau endpoints out of order")
        if self.s_top < self.sigma:
            raise ConstitutiveError("jump must go upward (S2(delta2) >= sigma)")

    def segments(self):
        return [
            FuncSegment(0.0, self.delta1, self.b1[0], self.b1[1]),
            FuncSegment(self.delta1, self.delta2,
                        lambda m: np.full_like(np.asarray(m, float), self.sigma),
                        lambda m: np.zeros_like(np.asarray(m, float))),
            VertSegment(self.delta2, self.sigma, self.s_top),
            FuncSegment(self.delta2, np.inf, self.b2[0], self.b2[1]),
        ]

    def selection_scalar(self, m):
        m = np.asarray(m, dtype=float)
        return np.where(m < self.delta1, self.b1[0](m),
                        np.where(m < self.delta2, self.sigma, self.b2[0](m)))

    def jumps(self):
        return [(self.delta2, self.s_top - self.sigma)]

    def growth_constants(self, exps):
        c1, k, c2, m = _power_growth_constants(
            self.c2_, self.kappa2_, self.q2_, exps.r, self.sigma)
        return c1, k + self.sigma + self.s_top, c2, m + c2 * self.delta2 ** exps.r


def make_graph(kind: str, **params) -> GraphModel:
    table = {cls.kind: cls for cls in
             (Newtonian, PowerLaw, Bingham, HerschelBulkley, Plateau,
              PlateauWithJump)}
    try:
        cls = table[kind]
    except KeyError:
        raise ConstitutiveError(f"unknown graph kind {kind!r}") from None
    return cls(**params)


# -- regularized laws ------------------------------------------------------------


class RegularizedLaw:
    """Strictly monotone continuous law S^n approximating a graph."""

    scheme: str = "abstract"

    def __init__(self, graph: GraphModel, n: int, tau0: float = 1.0):
        if n < 1:
            raise ConstitutiveError("approximation index must be >= 1")
        self.graph = graph
        self.n = int(n)
        self.tau0 = float(tau0)
        self.tau = float(tau0) / float(n)
        if self.tau <= 0:
            raise ConstitutiveError("smoothing parameter must be positive")

    def scalar_value(self, m):
        raise NotImplementedError

    def scalar_deriv(self, m):
        raise NotImplementedError

    def psi(self, m):
        """S^n(m)/m with the continuous extension at m = 0."""
        m = np.asarray(m, dtype=float)
        tiny = 1e-13
        safe = np.where(m > tiny, m, tiny)
        return np.where(m > tiny, self.scalar_value(safe) / safe,
                        self.scalar_deriv(np.full_like(m, tiny)))

    def stress(self, D: np.ndarray) -> np.ndarray:
        """S^n(D) for (..., 3) symmetric tensors."""
        D = np.asarray(D, dtype=float)
        return self.psi(tensor_norm(D))[..., None] * D

    def stress_derivative(self, D: np.ndarray):
        """Factors (a, b) of dS/dD[H] = a H + b (D:H) D at each input."""
        D = np.asarray(D, dtype=float)
        m = tensor_norm(D)
        tiny = 1e-13
        safe = np.where(m > tiny, m, tiny)
        a = self.psi(m)
        b = np.where(m > tiny, (self.scalar_deriv(safe) - a) / safe**2, 0.0)
        return a, b

    def growth_constants(self, exps: Exponents):
        return self.graph.growth_constants(exps)

    def with_n(self, n: int) -> "RegularizedLaw":
        return type(self)(self.graph, n, self.tau0)

    def with_tau(self, tau: float) -> "RegularizedLaw":
        return type(self)(self.graph, 1, tau)


class Identity(RegularizedLaw):
    """S^n = S* for graphs whose selection is already continuous and
    strictly monotone (no approximation error: the graph indicator vanishes).
    """

    scheme = "identity"

    def __init__(self, graph, n=1, tau0=1.0):
        super().__init__(graph, max(n, 1), tau0)
        if graph.jumps() or isinstance(graph, Plateau):
            raise ConstitutiveError(
                "identity regularization needs a continuous strictly "
                f"monotone selection; {graph.kind!r} has none")

    def scalar_value(self, m):
        return self.graph.selection_scalar(m)

    def scalar_deriv(self, m):
        return self.graph.selection_deriv(m)

    def with_tau(self, tau):
        """Smoothed surrogate used for continuation."""
        return SimpleTau(self.graph, 1, tau)


class SimpleTau(RegularizedLaw):
    """S^tau(m) = base(m) + sigma m / sqrt(m^2 + tau^2) for yield laws; for
    purely power-law graphs the kernel width tau smooths the branch instead
    (effective kappa = sqrt(kappa^2 + tau^2))."""

    scheme = "simple_tau"

    def __init__(self, graph, n, tau0=1.0):
        super().__init__(graph, n, tau0)
        if isinstance(graph, HerschelBulkley):
            self._base_value, self._base_deriv, _ = _power_branch(
                graph.c, graph.kappa, graph.q)
            self._sigma = graph.sigma
        elif isinstance(graph, Newtonian):
            self._base_value = lambda m: 2.0 * graph.nu * np.asarray(m, float)
            self._base_deriv = lambda m: np.full_like(
                np.asarray(m, float), 2.0 * graph.nu)
            self._sigma = 0.0
        elif isinstance(graph, PowerLaw):
            keff = math.sqrt(graph.kappa**2 + self.tau**2)
            self._base_value, self._base_deriv, _ = _power_branch(
                graph.c, keff, graph.q)
            self._sigma = 0.0
        else:
            raise ConstitutiveError(
                f"simple_tau regularization undefined for {graph.kind!r}")

    def scalar_value(self, m):
        m = np.asarray(m, dtype=float)
        out = self._base_value(m)
        if self._sigma:
            out = out + self._sigma * m / np.sqrt(m**2 + self.tau**2)
        return out

    def scalar_deriv(self, m):
        m = np.asarray(m, dtype=float)
        out = self._base_deriv(m)
        if self._sigma:
            out = out + self._sigma * self.tau**2 / (m**2 + self.tau**2) ** 1.5
        return out


class Mollified(RegularizedLaw):
    """Convolution of the odd-extended scalar selection with the hat kernel
    of width 1/n.

    The convolution integral is evaluated with Gauss panels split at the
    kernel kink and at the (window-dependent) breakpoints of the selection,
    so the value is continuous in the argument; the derivative carries the
    matching Leibniz terms (selection jumps weighted by the kernel), hence
    it is the exact derivative of the implemented value away from the
    finitely many arguments where a breakpoint enters or leaves the window.
    """

    scheme = "mollified"
    _GAUSS = 12

    def __init__(self, graph, n, tau0=1.0):
        super().__init__(graph, n, tau0)
        self.width = self.tau  # kernel width tau0/n
        x, w = np.polynomial.legendre.leggauss(self._GAUSS)
        self._gx = 0.5 * (x + 1.0)  # nodes on [0, 1]
        self._gw = 0.5 * w
        bp = {0.0}
        for b in self.graph.breakpoints():
            bp.add(float(b))
            bp.add(-float(b))
        self._breaks = np.array(sorted(bp))
        self._jumps = []
        for b, size in self.graph.jumps():
            self._jumps.append((float(b), float(size)))
            if b != 0.0:
                self._jumps.append((-float(b), float(size)))

    def _odd_selection(self, s):
        sign = np.sign(s)
        return sign * self.graph.selection_scalar(np.abs(s))

    def _odd_deriv(self, s):
        return self.graph.selection_deriv(np.abs(s))

    def _panels(self, m):
        """Sub-panel endpoints in kernel coordinates, (npts, nb + 3);
        cut at the selection breakpoints and at the kernel kink u = 0."""
        m = np.asarray(m, dtype=float)
        cuts = np.clip((self._breaks[None, :] - m[:, None]) / self.width, -1.0, 1.0)
        cuts = np.concatenate([cuts, np.zeros((len(m), 1))], axis=1)
        ends = np.concatenate([
            np.full((len(m), 1), -1.0), np.sort(cuts, axis=1),
            np.full((len(m), 1), 1.0)], axis=1)
        return ends

    def _convolve(self, m, fn):
        shape = np.shape(m)
        m = np.atleast_1d(np.asarray(m, dtype=float)).reshape(-1)
        ends = self._panels(m)
        lo = ends[:, :-1]
        half = 0.5 * (ends[:, 1:] - lo)
        # nodes u[p, k, g] in kernel coordinates, then s = m + width * u
        u = lo[:, :, None] + (ends[:, 1:] - lo)[:, :, None] * self._gx
        s = m[:, None, None] + self.width * u
        kern = np.maximum(1.0 - np.abs(u), 0.0)
        vals = fn(s) * kern
        out = np.einsum("pk,g,pkg->p", half, self._gw * 2.0, vals)
        return out.reshape(shape) if shape else float(out[0])

    def scalar_value(self, m):
        return self._convolve(m, self._odd_selection)

    def scalar_deriv(self, m):
        out = self._convolve(m, self._odd_deriv)
        marr = np.atleast_1d(np.asarray(m, dtype=float))
        extra = np.zeros_like(marr)
        for b, size in self._jumps:
            u = (b - marr) / self.width
            extra += size * np.maximum(1.0 - np.abs(u), 0.0) / self.width
        extra = extra.reshape(np.shape(m)) if np.shape(m) else float(extra[0])
        return out + extra

    def growth_constants(self, exps):
        c1, k, c2, mm = self.graph.growth_constants(exps)
        r = exps.r
        grow = max(1.0, 2.0 ** (r - 2.0))
        return c1 * grow, k + c1 * grow, c2 * 2.0 ** (-r), mm + c2


class PlateauInterp(RegularizedLaw):
    """Piecewise law with a linear bridge replacing the plateau (and, for
    jump graphs, a steep linear piece replacing the jump)."""

    scheme = "plateau_interp"

    def __init__(self, graph, n, tau0=1.0):
        super().__init__(graph, n, tau0)
        if not isinstance(graph, Plateau):
            raise ConstitutiveError(
                f"plateau_interp regularization undefined for {graph.kind!r}")
        eps = self.tau
        s_lo = max(graph.sigma - eps, 0.0)
        self._m_lo = graph.b1[2](s_lo)
        self._s_lo = s_lo
        knots_m = [self._m_lo]
        knots_s = [s_lo]
        if isinstance(graph, PlateauWithJump):
            s_mid = min(graph.sigma + eps, 0.5 * (graph.sigma + graph.s_top))
            knots_m.append(graph.delta2)
            knots_s.append(s_mid)
            m_hi = graph.b2[2](graph.s_top + eps)
            m_hi = max(m_hi, graph.delta2 + eps**2)
            knots_m.append(m_hi)
            knots_s.append(float(graph.b2[0](m_hi)))
        else:
            m_hi = graph.b2[2](graph.sigma + eps)
            knots_m.append(m_hi)
            knots_s.append(graph.sigma + eps)
        self._m_hi = m_hi
        self._knots_m = np.asarray(knots_m)
        self._knots_s = np.asarray(knots_s)
        self._branch1 = graph.b1
        self._branch2 = graph.b2

    def scalar_value(self, m):
        m = np.asarray(m, dtype=float)
        bridge = np.interp(m, self._knots_m, self._knots_s)
        return np.where(m <= self._m_lo, self._branch1[0](m),
                        np.where(m >= self._m_hi, self._branch2[0](m), bridge))

    def scalar_deriv(self, m):
        m = np.asarray(m, dtype=float)
        slopes = np.diff(self._knots_s) / np.diff(self._knots_m)
        idx = np.clip(np.searchsorted(self._knots_m, m) - 1, 0, len(slopes) - 1)
        return np.where(m <= self._m_lo, self._branch1[1](m),
                        np.where(m >= self._m_hi, self._branch2[1](m), slopes[idx]))

    def growth_constants(self, exps):
        c1, k, c2, mm = self.graph.growth_constants(exps)
        # the bridge stays below the upper-branch values at m_hi
        return c1, k + 1.0 / self.n, c2, mm + c2 * self._m_hi ** exps.r


_SCHEMES = {cls.scheme: cls for cls in (Identity, SimpleTau, Mollified,
                                        PlateauInterp)}


def make_regularized(graph: GraphModel, scheme: str, n: int,
                     tau0: float = 1.0) -> RegularizedLaw:
    try:
        cls = _SCHEMES[scheme]
    except KeyError:
        raise ConstitutiveError(f"unknown regularization scheme {scheme!r}") from None
    return cls(graph, n, tau0)


def selection(graph: GraphModel, D: np.ndarray) -> np.ndarray:
    return graph.selection(D)


def regularized_stress(law: RegularizedLaw, D: np.ndarray) -> np.ndarray:
    return law.stress(D)


# -- pointwise graph distance -----------------------------------------------------


def _func_segment_cap(graph, seg, mD_max, mS_max):
    if np.isfinite(seg.m_hi):
        return seg.m_hi
    return max(mD_max, graph.scalar_inverse(mS_max), seg.m_lo) + 1.0


def scalar_graph_distance_many(graph: GraphModel, exps: Exponents,
                               mD, mS, samples: int = 129,
                               golden_iters: int = 70) -> np.ndarray:
    """Vectorized inf over the scalar curve of |mD-m|^r + |mS-s|^r' for
    arrays of nonnegative magnitudes."""
    mD = np.atleast_1d(np.asarray(mD, dtype=float))
    mS = np.atleast_1d(np.asarray(mS, dtype=float))
    r, rc = exps.r, exps.r_conj
    best = np.full(mD.shape, np.inf)

    for seg in graph.segments():
        if isinstance(seg, VertSegment):
            s = np.clip(mS, seg.s_lo, seg.s_hi)
            cand = np.abs(mD - seg.m) ** r + np.abs(mS - s) ** rc
            np.minimum(best, cand, out=best)
            continue
        hi = _func_segment_cap(graph, seg, float(mD.max(initial=0.0)),
                               float(mS.max(initial=0.0)))
        if hi <= seg.m_lo:
            hi = seg.m_lo
        grid = np.linspace(seg.m_lo, hi, samples)
        vals = seg.value(grid)

        def objective(m):
            return (np.abs(mD - m) ** r
                    + np.abs(mS - seg.value(np.maximum(m, seg.m_lo))) ** rc)

        obj_grid = (np.abs(mD[..., None] - grid) ** r
                    + np.abs(mS[..., None] - vals) ** rc)
        arg = np.argmin(obj_grid, axis=-1)
        lo_i = np.maximum(arg - 1, 0)
        hi_i = np.minimum(arg + 1, samples - 1)
        lo = grid[lo_i]
        up = grid[hi_i]
        # golden-section refinement of the bracketed minimum, elementwise
        x1 = up - _INV_PHI * (up - lo)
        x2 = lo + _INV_PHI * (up - lo)
        f1 = objective(x1)
        f2 = objective(x2)
        for _ in range(golden_iters):
            take1 = f1 < f2
            up = np.where(take1, x2, up)
            lo = np.where(take1, lo, x1)
            x1n = np.where(take1, up - _INV_PHI * (up - lo), x2)
            x2n = np.where(take1, x1, lo + _INV_PHI * (up - lo))
            f1n = np.where(take1, objective(x1n), f2)
            f2n = np.where(take1, f1, objective(x2n))
            x1, x2, f1, f2 = x1n, x2n, f1n, f2n
        cand = np.minimum(np.minimum(f1, f2),
                          np.minimum(objective(grid[lo_i]), objective(grid[hi_i])))
        np.minimum(best, cand, out=best)
    return best


def _distance_fixed_direction(graph, exps, nD, nS, cos_angle):
    """Distance when the graph direction e sweeps the arc between D and S."""
    r, rc = exps.r, exps.r_conj
    theta = math.acos(min(1.0, max(-1.0, cos_angle)))

    def at_angle(alpha):
        # e at angle alpha from D (towards S): |D - m e|, |S - s e| depend
        # only on the projections below
        cD, cS = math.cos(alpha), math.cos(theta - alpha)

        def obj(m, s):
            dd = max(nD**2 + m**2 - 2.0 * m * nD * cD, 0.0)
            ss = max(nS**2 + s**2 - 2.0 * s * nS * cS, 0.0)
            return dd ** (r / 2.0) + ss ** (rc / 2.0)

        best = np.inf
        for seg in graph.segments():
            if isinstance(seg, VertSegment):
                grid_s = np.linspace(seg.s_lo, seg.s_hi, 65)
                best = min(best, min(obj(seg.m, s) for s in grid_s))
            else:
                hi = _func_segment_cap(graph, seg, nD, nS)
                grid = np.linspace(seg.m_lo, max(hi, seg.m_lo), 129)
                vals = seg.value(grid)
                best = min(best, min(obj(m, s) for m, s in zip(grid, vals)))
        return best

    alphas = np.linspace(0.0, theta, 33)
    return min(at_angle(a) for a in alphas)


def graph_distance(graph: GraphModel, exps: Exponents, D, S) -> float:
    """inf over (delta, sigma) in the tensor graph of
    |D - delta|^r + |S - sigma|^r'."""
    D = np.asarray(D, dtype=float).reshape(3)
    S = np.asarray(S, dtype=float).reshape(3)
    nD = float(tensor_norm(D))
    nS = float(tensor_norm(S))
    if nD < 1e-300 or nS < 1e-300:
        return float(scalar_graph_distance_many(graph, exps, [nD], [nS])[0])
    cosang = float(tensor_dot(D, S)) / (nD * nS)
    if cosang > 1.0 - 1e-12:
        return float(scalar_graph_distance_many(graph, exps, [nD], [nS])[0])
    return float(_distance_fixed_direction(graph, exps, nD, nS, cosang))


def graph_indicator_EA(graph: GraphModel, exps: Exponents, D_samples,
                       S_samples, mesh, rule) -> float:
    """Quadrature approximation of the integral over the domain of the
    pointwise graph distance of (D, S)."""
    D = np.asarray(D_samples, dtype=float)
    S = np.asarray(S_samples, dtype=float)
    if D.shape != S.shape or D.shape[-1] != 3:
        raise ConstitutiveError("field sample shapes must match, (..., 3)")
    mD = tensor_norm(D)
    mS = tensor_norm(S)
    par = tensor_dot(D, S)
    aligned = par >= (1.0 - 1e-10) * mD * mS
    dist = np.empty(mD.shape)
    flat_ok = aligned.reshape(-1)
    dist.reshape(-1)[flat_ok] = scalar_graph_distance_many(
        graph, exps, mD.reshape(-1)[flat_ok], mS.reshape(-1)[flat_ok])
    if not flat_ok.all():
        idx = np.nonzero(~flat_ok)[0]
        flatD = D.reshape(-1, 3)
        flatS = S.reshape(-1, 3)
        for i in idx:
            dist.reshape(-1)[i] = graph_distance(graph, exps, flatD[i], flatS[i])
    w = 2.0 * mesh.areas()
    return float((w[:, None] * rule.weights[None, :] * dist).sum())


def graph_distance_bound_simple_tau(nu: float, sigma: float, tau: float) -> float:
    """Consolidated pointwise envelope for the distance of (D, S^tau(D)) to
    a Bingham graph: the maximum of the squared case bounds, including the
    4 nu^(2/3) sigma^(1/3) tau^(2/3) branch."""
    if nu <= 0 or tau <= 0:
        raise ConstitutiveError("need nu > 0 and tau > 0")
    if sigma == 0.0:
        return 0.0
    return max(tau,
               (sigma / (4.0 * nu)) ** (1.0 / 6.0) * tau ** (1.0 / 3.0),
               2.0 * nu ** (1.0 / 3.0) * sigma ** (1.0 / 6.0) * tau ** (1.0 / 3.0)) ** 2
