import numpy as np
import pytest

from rheoafem.constitutive import (
    Bingham, ConstitutiveError, FuncSegment, Mollified, Newtonian, Plateau,
    PlateauWithJump, PowerLaw, VertSegment, graph_distance,
    graph_distance_bound_simple_tau, graph_indicator_EA, make_exponents,
    make_graph, make_regularized, scalar_graph_distance_many, selection,
    tensor_norm,
)
from rheoafem.mesh import unit_square
from rheoafem.quadrature import triangle_rule


# -- exponents -------------------------------------------------------------------


def test_exponents_low_range():
    e = make_exponents(1.5, d=2)
    assert e.r_conj == pytest.approx(3.0)
    assert e.r_tilde == pytest.approx(3.0)
    assert e.t == pytest.approx(17.0 / 12.0)
    assert e.t_tilde == pytest.approx(17.0 / 7.0)
    assert e.low_range


def test_exponents_high_range():
    e = make_exponents(2.0, d=2)
    assert e.t == pytest.approx(2.0)
    assert e.t_tilde == pytest.approx(2.0)
    assert e.r_tilde == pytest.approx(2.0)
    assert not e.low_range


def test_exponents_d3():
    e = make_exponents(3.0, d=3)
    assert e.r_tilde == pytest.approx(1.5)
    assert e.t == pytest.approx(3.0)
    assert e.t_tilde == pytest.approx(1.5)


def test_exponents_conjugate_identities():
    for r in (1.4, 1.5, 1.9, 2.0, 2.5, 4.0):
        e = make_exponents(r)
        assert abs(1.0 / e.r + 1.0 / e.r_conj - 1.0) < 1e-14
        assert abs(1.0 / e.t + 1.0 / e.t_conj - 1.0) < 1e-14
        assert abs(1.0 / e.t_tilde + 1.0 / e.t_tilde_conj - 1.0) < 1e-14


def test_exponents_reject_out_of_range():
    with pytest.raises(ConstitutiveError):
        make_exponents(1.2, d=2)
    with pytest.raises(ConstitutiveError):
        make_exponents(4.0 / 3.0, d=2)


# -- selections -------------------------------------------------------------------


def test_bingham_selection_at_zero():
    g = Bingham(nu=1.0, sigma=1.0)
    assert np.allclose(selection(g, np.zeros(3)), 0.0)


def test_bingham_selection_formula():
    g = Bingham(nu=1.0, sigma=1.0)
    D = np.array([1.0, -1.0, 0.0])  # diag(1, -1), |D| = sqrt(2)
    S = selection(g, D)
    assert np.allclose(S, (1.0 / np.sqrt(2.0) + 2.0) * D, atol=1e-14)


def test_newtonian_selection_linear():
    g = Newtonian(nu=1.0)
    rng = np.random.default_rng(0)
    D = rng.normal(size=(5, 3))
    assert np.allclose(selection(g, D), 2.0 * D, atol=1e-14)


# -- regularized laws -------------------------------------------------------------


def test_simple_tau_at_zero():
    law = make_regularized(Bingham(nu=1.0, sigma=1.0), "simple_tau", n=3)
    assert np.allclose(law.stress(np.zeros(3)), 0.0)


def test_simple_tau_magnitude():
    law = make_regularized(Bingham(nu=1.0, sigma=1.0), "simple_tau", n=10)  # tau=0.1
    D = np.array([1.0, 0.0, 0.0])  # |D| = 1
    S = law.stress(D)
    assert tensor_norm(S) == pytest.approx(2.0 + 1.0 / np.sqrt(1.01), rel=1e-12)


def test_mollified_newtonian_is_exact():
    law = make_regularized(Newtonian(nu=1.3), "mollified", n=2)
    m = np.array([0.0, 0.1, 1.0, 7.5])
    assert np.allclose(law.scalar_value(m), 2.6 * m, atol=1e-12)
    assert np.allclose(law.scalar_deriv(m), 2.6, atol=1e-12)


def test_mollified_is_odd_and_zero_at_zero():
    law = make_regularized(Bingham(nu=0.7, sigma=2.0), "mollified", n=4)
    m = np.linspace(0.0, 2.0, 41)
    assert np.allclose(law.scalar_value(-m), -law.scalar_value(m), atol=1e-12)
    assert abs(law.scalar_value(0.0)) < 1e-12


def test_mollified_matches_exact_convolution_away_from_jump():
    # for |m| >= width the hat-kernel average of sigma + 2 nu |s| is exact:
    # S^n(m) = sigma + 2 nu m  plus the kernel second moment times 0
    law = make_regularized(Bingham(nu=1.0, sigma=1.0), "mollified", n=5)
    m = np.array([0.5, 1.0, 3.0])
    assert np.allclose(law.scalar_value(m), 1.0 + 2.0 * m, atol=1e-12)


def test_mollified_derivative_consistent_fd():
    law = make_regularized(Bingham(nu=1.0, sigma=1.0), "mollified", n=3)
    rng = np.random.default_rng(1)
    for m in rng.uniform(0.01, 2.0, 12):
        h = 1e-7
        fd = (law.scalar_value(m + h) - law.scalar_value(m - h)) / (2 * h)
        assert fd == pytest.approx(float(law.scalar_deriv(m)), rel=2e-6, abs=1e-8)


def test_regularized_laws_strictly_monotone():
    exps = make_exponents(2.0)
    laws = [
        make_regularized(Bingham(nu=1.0, sigma=1.0), "simple_tau", n=7),
        make_regularized(Bingham(nu=0.5, sigma=2.0), "mollified", n=3),
        make_regularized(make_graph(
            "plateau", sigma=1.0, c1=2.0, q1=2.0, kappa1=0.5,
            c2=1.0, q2=2.0, kappa2=0.0), "plateau_interp", n=4),
        make_regularized(PowerLaw(consistency=1.0, exponent=1.5), "simple_tau", n=9),
    ]
    rng = np.random.default_rng(7)
    D1 = rng.normal(size=(10_000, 3))
    D2 = rng.normal(size=(10_000, 3))
    for law in laws:
        S1 = law.stress(D1)
        S2 = law.stress(D2)
        prod = ((S1 - S2)[:, 0] * (D1 - D2)[:, 0]
                + (S1 - S2)[:, 1] * (D1 - D2)[:, 1]
                + 2.0 * (S1 - S2)[:, 2] * (D1 - D2)[:, 2])
        assert (prod > 0).all(), law.scheme


def test_growth_and_coercivity_constants():
    cases = [
        (make_regularized(Bingham(nu=1.0, sigma=1.5), "simple_tau", n=5), 2.0),
        (make_regularized(Bingham(nu=1.0, sigma=1.5), "mollified", n=5), 2.0),
        (make_regularized(PowerLaw(consistency=2.0, exponent=1.5, kappa=0.1),
                          "simple_tau", n=5), 1.5),
        (make_regularized(make_graph(
            "plateau", sigma=1.0, c1=2.0, q1=2.0, kappa1=0.5,
            c2=1.0, q2=2.0, kappa2=0.0), "plateau_interp", n=4), 2.0),
    ]
    rng = np.random.default_rng(3)
    for law, r in cases:
        exps = make_exponents(r)
        c1, k, c2, mt = law.growth_constants(exps)
        m = np.concatenate([rng.uniform(0, 1e-3, 200),
                            rng.uniform(0, 5.0, 600),
                            rng.uniform(5.0, 100.0, 200)])
        S = law.scalar_value(m)
        assert (S <= c1 * m ** (r - 1.0) + k + 1e-12).all(), law.scheme
        assert (S * m >= c2 * m**r - mt - 1e-12).all(), law.scheme


# -- graph distance ----------------------------------------------------------------


def test_graph_distance_on_graph_points():
    g = Bingham(nu=1.0, sigma=1.0)
    exps = make_exponents(2.0)
    # on the vertical segment at D = 0 (|S| = 0.5 <= sigma)
    assert graph_distance(g, exps, np.zeros(3), np.array([0.35, 0.35, 0.0])) \
        == pytest.approx(0.0, abs=1e-10)
    # on the affine branch: |S| = sigma + 2 nu |D|
    D = np.array([1.0, 0.0, 0.0])
    S = 3.0 * D
    assert graph_distance(g, exps, D, S) == pytest.approx(0.0, abs=1e-10)


def test_graph_distance_hand_value():
    # (|D|, |S|) = (0, 2): minimizer delta = 0.4 on the branch S = 1 + 2 delta,
    # giving 5 delta^2 - 4 delta + 1 = 0.2
    g = Bingham(nu=1.0, sigma=1.0)
    exps = make_exponents(2.0)
    S = np.array([2.0, 0.0, 0.0])
    assert graph_distance(g, exps, np.zeros(3), S) == pytest.approx(0.2, rel=1e-9)


def _brute_force_distance(graph, exps, mD, mS, npts=100_000):
    r, rc = exps.r, exps.r_conj
    best = np.inf
    for seg in graph.segments():
        if isinstance(seg, VertSegment):
            s = np.linspace(seg.s_lo, seg.s_hi, 4001)
            best = min(best, float(np.min(
                np.abs(mD - seg.m) ** r + np.abs(mS - s) ** rc)))
        else:
            hi = seg.m_hi if np.isfinite(seg.m_hi) else max(
                mD, graph.scalar_inverse(mS)) + 1.0
            m = np.linspace(seg.m_lo, hi, npts)
            s = seg.value(m)
            best = min(best, float(np.min(
                np.abs(mD - m) ** r + np.abs(mS - s) ** rc)))
    return best


@pytest.mark.parametrize("graph,r", [
    (Bingham(nu=1.0, sigma=1.0), 2.0),
    (make_graph("plateau", sigma=1.0, c1=2.0, q1=2.0, kappa1=0.3,
                c2=0.5, q2=2.0, kappa2=0.0), 2.0),
])
def test_graph_distance_against_brute_force(graph, r):
    exps = make_exponents(r)
    rng = np.random.default_rng(11)
    mD = rng.uniform(0.0, 3.0, 100)
    mS = rng.uniform(0.0, 5.0, 100)
    fast = scalar_graph_distance_many(graph, exps, mD, mS)
    for i in range(100):
        oracle = _brute_force_distance(graph, exps, mD[i], mS[i])
        if oracle > 1e-8:
            assert fast[i] == pytest.approx(oracle, rel=1e-6)
        else:
            assert fast[i] <= oracle + 1e-8


def test_graph_distance_jump_graph():
    g = make_graph("plateau_with_jump", sigma=1.0, c1=2.0, q1=2.0, kappa1=0.3,
                   c2=3.0, q2=2.0, kappa2=0.0, delta2=0.8)
    exps = make_exponents(2.0)
    # points on the vertical jump segment have distance 0
    D = np.array([0.8, 0.0, 0.0])
    S = np.array([1.7, 0.0, 0.0])  # sigma=1 <= 1.7 <= S2(0.8) = 3*0.8^... = 2.4*0.8
    assert 1.0 <= 1.7 <= float(g.b2[0](0.8))
    assert graph_distance(g, exps, D, S) == pytest.approx(0.0, abs=1e-10)


def test_graph_distance_nonparallel_r2():
    # for r = r' = 2 the direction optimization has a closed form; check the
    # generic path against it on non-parallel tensors
    g = Bingham(nu=1.0, sigma=1.0)
    exps = make_exponents(2.0)
    rng = np.random.default_rng(5)
    for _ in range(10):
        D = rng.normal(size=3)
        S = rng.normal(size=3)
        val = graph_distance(g, exps, D, S)
        # closed form: min over curve of |D|^2+m^2+|S|^2+s^2-2|mD+sS|
        nD2 = D[0]**2 + D[1]**2 + 2 * D[2]**2
        nS2 = S[0]**2 + S[1]**2 + 2 * S[2]**2
        best = np.inf
        for seg in g.segments():
            if isinstance(seg, VertSegment):
                ms = np.full(2001, seg.m)
                ss = np.linspace(seg.s_lo, seg.s_hi, 2001)
            else:
                hi = seg.m_hi if np.isfinite(seg.m_hi) else 6.0
                ms = np.linspace(seg.m_lo, hi, 20001)
                ss = seg.value(ms)
            dot = np.sqrt(np.maximum(
                (ms * D[0] + ss * S[0])**2 + (ms * D[1] + ss * S[1])**2
                + 2 * (ms * D[2] + ss * S[2])**2, 0.0))
            best = min(best, float(np.min(nD2 + nS2 + ms**2 + ss**2 - 2 * dot)))
        assert val == pytest.approx(best, rel=2e-3, abs=1e-6)


# -- the simple-tau envelope --------------------------------------------------------


def test_envelope_examples():
    assert graph_distance_bound_simple_tau(1.0, 0.0, 0.01) == 0.0
    env = graph_distance_bound_simple_tau(1.0, 1.0, 1e-3)
    assert env == pytest.approx(4.0 * 1e-3 ** (2.0 / 3.0), rel=1e-12)
    ratio = (graph_distance_bound_simple_tau(1.0, 1.0, 1e-3)
             / graph_distance_bound_simple_tau(1.0, 1.0, 5e-4))
    assert ratio == pytest.approx(2.0 ** (2.0 / 3.0), rel=1e-12)


def test_simple_tau_distance_within_envelope():
    nu, sigma = 1.0, 1.0
    g = Bingham(nu=nu, sigma=sigma)
    exps = make_exponents(2.0)
    grid = np.logspace(-6, 3, 120)
    for tau in (1e-1, 1e-2, 1e-3, 1e-4):
        law = make_regularized(g, "simple_tau", n=1, tau0=tau)
        mS = law.scalar_value(grid)
        dist = scalar_graph_distance_many(g, exps, grid, mS)
        env = graph_distance_bound_simple_tau(nu, sigma, tau)
        assert (dist <= 1.1 * env).all()


# -- mollified distance bound -------------------------------------------------------


def test_mollified_distance_bound():
    g = Bingham(nu=1.0, sigma=1.0)
    exps = make_exponents(2.0)
    for n in (2, 5, 20):
        law = make_regularized(g, "mollified", n=n)
        m = np.linspace(0.0, 4.0, 200)
        dist = scalar_graph_distance_many(g, exps, m, law.scalar_value(m))
        # the kernel smoothing moves points at most 1/n along the shear axis
        assert dist.max() <= (1.0 / n) ** exps.r + 1e-6


# -- the integrated indicator -------------------------------------------------------


def _rule_and_mesh():
    mesh = unit_square()
    return mesh, triangle_rule(4)


def test_indicator_zero_for_on_graph_fields():
    mesh, rule = _rule_and_mesh()
    g = Bingham(nu=1.0, sigma=1.0)
    exps = make_exponents(2.0)
    rng = np.random.default_rng(2)
    D = rng.normal(size=(mesh.num_triangles, len(rule.points), 3))
    S = g.selection(D)
    val = graph_indicator_EA(g, exps, D, S, mesh, rule)
    assert val == pytest.approx(0.0, abs=1e-9)


def test_indicator_constant_fields_hand_value():
    mesh, rule = _rule_and_mesh()
    g = Bingham(nu=1.0, sigma=1.0)
    exps = make_exponents(2.0)
    shape = (mesh.num_triangles, len(rule.points), 3)
    D = np.zeros(shape)
    S = np.zeros(shape)
    S[..., 0] = 2.0  # |S| = 2 pointwise, distance 0.2, area 1
    val = graph_indicator_EA(g, exps, D, S, mesh, rule)
    assert val == pytest.approx(0.2, rel=1e-9)


def test_indicator_decreases_with_tau():
    mesh, rule = _rule_and_mesh()
    g = Bingham(nu=1.0, sigma=1.0)
    exps = make_exponents(2.0)
    rng = np.random.default_rng(8)
    D = rng.normal(size=(mesh.num_triangles, len(rule.points), 3))
    vals = []
    for n in (1, 2, 4, 8, 16):
        law = make_regularized(g, "simple_tau", n=n)
        vals.append(graph_indicator_EA(g, exps, D, law.stress(D), mesh, rule))
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 0.05 * vals[0]


def test_plateau_interp_brackets_plateau():
    g = make_graph("plateau", sigma=1.0, c1=2.0, q1=2.0, kappa1=0.5,
                   c2=1.0, q2=2.0, kappa2=0.0)
    exps = make_exponents(2.0)
    for n in (2, 8, 32):
        law = make_regularized(g, "plateau_interp", n=n)
        m = np.linspace(0.0, 3.0, 400)
        dist = scalar_graph_distance_many(g, exps, m, law.scalar_value(m))
        assert dist.max() <= (2.0 / n) ** 2 + 1e-9


def test_simple_tau_rejects_nonpositive_tau():
    with pytest.raises(ConstitutiveError):
        make_regularized(Bingham(nu=1.0, sigma=1.0), "simple_tau", n=1, tau0=0.0)
