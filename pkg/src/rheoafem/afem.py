"""The adaptive loop: SOLVE -> ESTIMATE -> (MARK + REFINE mesh) or refine
the constitutive approximation, whichever error source dominates.

The branch rule compares the finite element total E_total = E_pde + E_ic
against the graph indicator E_A: the mesh is refined when E_total >= E_A,
otherwise the approximation index n is incremented (tau_{n} = tau_0 / n).
Marking uses the maximum strategy, which satisfies the bulk criterion with
g = identity since the marked set always contains an argmax element.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .constitutive import Exponents, GraphModel, make_exponents, make_regularized
from .estimator import IndicatorField, assemble_indicators
from .forcing import ForcingField
from .mesh import Mesh, refine
from .solver import DiscreteState, SolverError, SolverOptions, solve_discrete


class AfemError(Exception):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class AfemConfig:
    graph: GraphModel
    forcing: ForcingField
    r: float = 2.0
    t: float | None = None
    scheme: str = "simple_tau"
    tau0: float = 1.0
    pair: str = "taylor_hood"
    marking_theta: float = 0.5
    g_rule: str = "identity"
    max_iterations: int = 30
    target_total: float = 0.0
    solver: SolverOptions = dc_field(default_factory=SolverOptions)

    def __post_init__(self):
        if not 0.0 < self.marking_theta <= 1.0:
            raise AfemError("marking theta must lie in (0, 1]")
        if self.max_iterations < 1:
            raise AfemError("need at least one iteration")
        if self.g_rule != "identity":
            raise AfemError(f"unsupported marking rule g = {self.g_rule!r}")

    def exponents(self) -> Exponents:
        return make_exponents(self.r, d=2, t=self.t)


@dataclass
class TraceRow:
    k: int
    n: int
    elements: int
    dofs: int
    E_pde: float
    E_ic: float
    E_total: float
    E_A: float
    energy: float
    kind: str        # refinement branch chosen at this step: mesh | graph
    seconds: float


@dataclass
class AfemTrace:
    rows: list[TraceRow]
    truncated: bool = False

    def validate(self) -> None:
        """Check the structural trace invariants."""
        for a, b in zip(self.rows, self.rows[1:]):
            if b.n < a.n:
                raise AfemError("approximation index decreased")
            graph_step = a.E_total < a.E_A
            if graph_step != (b.n == a.n + 1):
                raise AfemError("graph refinement out of sync with indicators")
            if (a.kind == "mesh") != (a.E_total >= a.E_A):
                raise AfemError("branch kind out of sync with indicators")


def mark(indicators, theta: float) -> set[int]:
    """Maximum marking: all elements within theta of the largest indicator.

    The marked set contains an argmax, hence the largest unmarked indicator
    never exceeds the largest marked one (bulk criterion with g = identity).
    Returns the empty set when every indicator vanishes.
    """
    eta = (indicators.element_total()
           if isinstance(indicators, IndicatorField) else np.asarray(indicators))
    if len(eta) == 0:
        raise AfemError("empty indicator field")
    top = float(eta.max())
    if top <= 0.0:
        return set()
    return set(np.nonzero(eta >= theta * top)[0].tolist())


def afem_step(state: DiscreteState, indicators: IndicatorField,
              config: AfemConfig):
    """One adaptive step: refine the dominating error source and re-solve
    with the previous solution as a (nested) warm start.

    Returns (kind, new_state) with kind in {"mesh", "graph"}.
    """
    warm = (state.U, state.P)
    if indicators.E_total >= indicators.E_A:
        marked = mark(indicators, config.marking_theta)
        if not marked:
            return "mesh", state
        new_mesh = refine(state.space.mesh, marked)
        new_state = solve_discrete(new_mesh, config.pair, state.law,
                                   config.forcing, config.solver,
                                   warm_start=warm, n=state.n)
        return "mesh", new_state
    law = make_regularized(config.graph, config.scheme, state.n + 1, config.tau0)
    new_state = solve_discrete(state.space.mesh, config.pair, law,
                               config.forcing, config.solver,
                               warm_start=warm, n=state.n + 1)
    return "graph", new_state


def afem_run(config: AfemConfig, mesh: Mesh, callback=None):
    """Run the adaptive loop; returns (trace, final_state).

    The loop stops once E_total + E_A <= target_total (or when every
    indicator vanishes); hitting max_iterations sets trace.truncated.
    """
    from .fespace import build_space
    from .mesh import uniform_refine

    exps = config.exponents()
    rows: list[TraceRow] = []
    law = make_regularized(config.graph, config.scheme, 1, config.tau0)

    # the saddle-point system needs at least as many velocity unknowns as
    # zero-mean pressure modes; very coarse macro meshes (e.g. the
    # 2-triangle square with Taylor-Hood) fail this and are pre-refined
    for _ in range(4):
        probe = build_space(mesh, config.pair)
        if probe.num_free_velocity_dofs >= probe.n_pressure:
            break
        mesh = uniform_refine(mesh, 1)
    else:
        raise AfemError("initial mesh leaves the mixed space rank-deficient")

    state = None
    kind = "mesh"
    for k in range(config.max_iterations):
        tic = time.perf_counter()
        if state is None:
            try:
                state = solve_discrete(mesh, config.pair, law, config.forcing,
                                       config.solver)
            except SolverError as exc:
                raise AfemError(f"SOLVE failed at step {k}: {exc}",
                                trace=AfemTrace(rows, truncated=True)) from exc
        field = assemble_indicators(state, exps)
        kind = "mesh" if field.E_total >= field.E_A else "graph"
        rows.append(TraceRow(
            k=k, n=state.n, elements=state.space.mesh.num_triangles,
            dofs=state.space.num_free_velocity_dofs + state.space.n_pressure,
            E_pde=field.E_pde, E_ic=field.E_ic, E_total=field.E_total,
            E_A=field.E_A, energy=state.energy, kind=kind,
            seconds=time.perf_counter() - tic))
        if callback is not None:
            callback(k, state, field)
        if field.E_total + field.E_A <= config.target_total:
            return AfemTrace(rows), state
        if k == config.max_iterations - 1:
            break
        prev = state
        try:
            kind, state = afem_step(state, field, config)
        except SolverError as exc:
            raise AfemError(f"SOLVE failed at step {k + 1}: {exc}",
                            trace=AfemTrace(rows, truncated=True)) from exc
        if state is prev:
            return AfemTrace(rows), state  # nothing marked: indicators zero
        mesh = state.space.mesh
    return AfemTrace(rows, truncated=True), state
