"""Run configuration: a small INI-style format with full validation.

Grammar (documented here, exercised in tests/test_config.py):

  * '#' starts a comment (anywhere on a line);
  * section headers are lines of the form  [section] ;
  * entries are  key = value  lines inside a section;
  * keys may not repeat within their section.

Sections/keys (defaults in parentheses):

  [problem]  geometry (unit_square) | l_shape | path to a mesh file,
             r (2.0), t (optional), pair (taylor_hood | p2p0)
  [graph]    kind (newtonian) + the law parameters: nu, sigma, consistency,
             exponent, kappa, c1, q1, kappa1, c2, q2, kappa2, delta2,
             regularization (simple_tau | mollified | plateau_interp |
             identity), tau0 (1.0)
  [forcing]  kind (zero) + parameters: fx, fy, amplitude, cx, cy, tilt, nu
  [afem]     theta (0.5), max_iterations (30), target_total (0.0)
  [solver]   tol_newton (1e-9), max_newton (40), continuation_steps (4),
             damping (1e-4), quad_degree (optional)
  [output]   dir (out)
  [run]      seed (0)

Every violation is collected with its line and column; parsing either
returns a fully validated RunConfig or raises ConfigError listing all of
them.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .afem import AfemConfig
from .constitutive import ConstitutiveError, make_graph, make_regularized
from .forcing import make_forcing
from .mesh import Mesh, geometry as make_geometry, read_mesh
from .solver import SolverOptions


class ConfigError(Exception):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


_GRAPH_PARAM_KEYS = {
    "newtonian": {"nu"},
    "power_law": {"consistency", "exponent", "kappa"},
    "bingham": {"nu", "sigma"},
    "herschel_bulkley": {"sigma", "consistency", "exponent", "kappa"},
    "plateau": {"sigma", "c1", "q1", "kappa1", "c2", "q2", "kappa2"},
    "plateau_with_jump": {"sigma", "c1", "q1", "kappa1", "c2", "q2", "kappa2",
                          "delta2"},
}

_FORCING_PARAM_KEYS = {
    "zero": set(),
    "constant": {"fx", "fy"},
    "rotational": {"amplitude", "cx", "cy"},
    "sinusoidal": set(),
    "shear": {"amplitude", "tilt"},
    "manufactured": {"nu"},
}

_KNOWN_KEYS = {
    "problem": {"geometry", "r", "t", "pair"},
    "graph": (set.union(*_GRAPH_PARAM_KEYS.values())
              | {"kind", "regularization", "tau0"}),
    "forcing": set.union(*_FORCING_PARAM_KEYS.values()) | {"kind"},
    "afem": {"theta", "max_iterations", "target_total"},
    "solver": {"tol_newton", "max_newton", "continuation_steps", "damping",
               "quad_degree"},
    "output": {"dir"},
    "run": {"seed"},
}


@dataclass
class RunConfig:
    """Validated configuration of one adaptive run."""

    mesh: Mesh
    geometry: str
    afem: AfemConfig
    output_dir: str = "out"
    seed: int = 0
    raw: dict = field(default_factory=dict)


@dataclass
class _Entry:
    value: str
    line: int
    col: int


def _parse_entries(text: str, problems: list[str]) -> dict[str, dict[str, _Entry]]:
    sections: dict[str, dict[str, _Entry]] = {}
    current = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            if current not in _KNOWN_KEYS:
                problems.append(
                    f"line {lineno}, col {line.index('[') + 1}: "
                    f"unknown section [{current}]")
                current = None
            else:
                sections.setdefault(current, {})
            continue
        if "=" not in line:
            problems.append(f"line {lineno}, col 1: expected 'key = value'")
            continue
        if current is None:
            problems.append(f"line {lineno}, col 1: entry outside any section")
            continue
        key, value = line.split("=", 1)
        col = len(key) - len(key.lstrip()) + 1
        key = key.strip()
        value = value.strip()
        if key in sections[current]:
            prev = sections[current][key]
            problems.append(
                f"line {lineno}, col {col}: duplicate key '{key}' in "
                f"[{current}] (first set at line {prev.line})")
            continue
        if key not in _KNOWN_KEYS[current]:
            problems.append(
                f"line {lineno}, col {col}: unknown key '{key}' in [{current}]")
            continue
        sections[current][key] = _Entry(value, lineno, col)
    return sections


class _Reader:
    """Typed access to parsed entries, accumulating all violations."""

    def __init__(self, sections, problems):
        self.sections = sections
        self.problems = problems

    def get(self, section, key, default=None):
        entry = self.sections.get(section, {}).get(key)
        return entry.value if entry is not None else default

    def where(self, section, key):
        entry = self.sections.get(section, {}).get(key)
        return (f"line {entry.line}, col {entry.col}" if entry
                else f"[{section}] {key}")

    def number(self, section, key, default, kind=float, check=None, describe=""):
        raw = self.get(section, key)
        if raw is None:
            value = default
        else:
            try:
                value = kind(raw)
            except ValueError:
                self.problems.append(
                    f"{self.where(section, key)}: '{raw}' is not a valid "
                    f"{kind.__name__} for {key}")
                return default
        if value is not None and check is not None and not check(value):
            self.problems.append(
                f"{self.where(section, key)}: {key} = {value} out of range"
                + (f" ({describe})" if describe else ""))
        return value

    def choice(self, section, key, default, options):
        raw = self.get(section, key, default)
        if raw not in options:
            self.problems.append(
                f"{self.where(section, key)}: {key} must be one of "
                f"{sorted(options)}, got '{raw}'")
            return default
        return raw


def parse_config(text: str, overrides=()) -> RunConfig:
    """Parse and validate; raises ConfigError listing every violation."""
    problems: list[str] = []
    sections = _parse_entries(text, problems)

    for item in overrides:
        if "=" not in item:
            problems.append(f"override '{item}': expected section.key=value")
            continue
        path, value = item.split("=", 1)
        if "." not in path:
            problems.append(f"override '{item}': expected section.key=value")
            continue
        sec, key = path.split(".", 1)
        sec, key = sec.strip(), key.strip()
        if sec not in _KNOWN_KEYS or key not in _KNOWN_KEYS.get(sec, set()):
            problems.append(f"override '{item}': unknown key {sec}.{key}")
            continue
        sections.setdefault(sec, {})[key] = _Entry(value.strip(), 0, 0)

    rd = _Reader(sections, problems)

    geometry = rd.get("problem", "geometry", "unit_square")
    mesh = None
    if geometry in ("unit_square", "l_shape"):
        mesh = make_geometry(geometry)
    elif os.path.exists(geometry):
        try:
            mesh = read_mesh(geometry)
        except Exception as exc:
            problems.append(f"{rd.where('problem', 'geometry')}: "
                            f"failed to read mesh file '{geometry}': {exc}")
    else:
        problems.append(f"{rd.where('problem', 'geometry')}: geometry must be "
                        f"unit_square, l_shape or an existing mesh file, "
                        f"got '{geometry}'")

    r = rd.number("problem", "r", 2.0, float,
                  check=lambda v: v > 4.0 / 3.0,
                  describe="need r > 2d/(d+1) = 4/3 for d = 2")
    t = rd.number("problem", "t", None, float)
    pair = rd.choice("problem", "pair", "taylor_hood", {"taylor_hood", "p2p0"})

    gkind = rd.choice("graph", "kind", "newtonian", set(_GRAPH_PARAM_KEYS))
    gparams = {}
    for key in _GRAPH_PARAM_KEYS.get(gkind, set()):
        val = rd.number("graph", key, None, float)
        if val is not None:
            gparams[key] = val
    for key in ("nu", "sigma"):
        if key in gparams and gparams[key] < 0:
            problems.append(f"{rd.where('graph', key)}: {key} must be >= 0")
    for key, entry in sections.get("graph", {}).items():
        if key in {"kind", "regularization", "tau0"}:
            continue
        if key not in _GRAPH_PARAM_KEYS.get(gkind, set()):
            problems.append(f"line {entry.line}, col {entry.col}: key '{key}' "
                            f"does not apply to graph kind '{gkind}'")
    scheme = rd.choice("graph", "regularization", "simple_tau",
                       {"simple_tau", "mollified", "plateau_interp", "identity"})
    tau0 = rd.number("graph", "tau0", 1.0, float, check=lambda v: v > 0,
                     describe="tau0 must be positive")

    fkind = rd.choice("forcing", "kind", "zero", set(_FORCING_PARAM_KEYS))
    fparams = {}
    for key in _FORCING_PARAM_KEYS.get(fkind, set()):
        val = rd.number("forcing", key, None, float)
        if val is not None:
            fparams[key] = val
    for key, entry in sections.get("forcing", {}).items():
        if key != "kind" and key not in _FORCING_PARAM_KEYS.get(fkind, set()):
            problems.append(f"line {entry.line}, col {entry.col}: key '{key}' "
                            f"does not apply to forcing kind '{fkind}'")

    theta = rd.number("afem", "theta", 0.5, float,
                      check=lambda v: 0.0 < v <= 1.0,
                      describe="theta must lie in (0, 1]")
    max_iterations = rd.number("afem", "max_iterations", 30, int,
                               check=lambda v: v >= 1)
    target_total = rd.number("afem", "target_total", 0.0, float,
                             check=lambda v: v >= 0.0)

    solver = SolverOptions(
        tol_newton=rd.number("solver", "tol_newton", 1e-9, float,
                             check=lambda v: v > 0),
        max_newton=rd.number("solver", "max_newton", 40, int,
                             check=lambda v: v >= 1),
        continuation_steps=rd.number("solver", "continuation_steps", 4, int,
                                     check=lambda v: v >= 0),
        damping=rd.number("solver", "damping", 1e-4, float,
                          check=lambda v: 0 < v < 1),
        quad_degree=rd.number("solver", "quad_degree", None, int,
                              check=lambda v: v >= 2),
    )

    output_dir = rd.get("output", "dir", "out")
    seed = rd.number("run", "seed", 0, int)

    graph = None
    forcing = None
    if not problems:
        try:
            graph = make_graph(gkind, **gparams)
        except (ConstitutiveError, TypeError) as exc:
            problems.append(f"[graph]: {exc}")
        try:
            forcing = make_forcing(fkind, **fparams)
        except (ValueError, TypeError) as exc:
            problems.append(f"[forcing]: {exc}")
    if graph is not None and not problems:
        try:
            make_regularized(graph, scheme, 1, tau0)
        except ConstitutiveError as exc:
            problems.append(f"[graph] regularization: {exc}")
        from .constitutive import make_exponents

        try:
            exps = make_exponents(r, d=2, t=t)
        except ConstitutiveError as exc:
            problems.append(f"[problem]: {exc}")
        else:
            try:
                graph.growth_constants(exps)
            except ConstitutiveError as exc:
                problems.append(f"[graph]: {exc}")

    if problems:
        raise ConfigError(problems)

    afem = AfemConfig(
        graph=graph, forcing=forcing, r=r, t=t, scheme=scheme, tau0=tau0,
        pair=pair, marking_theta=theta, max_iterations=max_iterations,
        target_total=target_total, solver=solver)
    return RunConfig(mesh=mesh, geometry=geometry, afem=afem,
                     output_dir=output_dir, seed=seed,
                     raw={s: {k: e.value for k, e in entries.items()}
                          for s, entries in sections.items()})
