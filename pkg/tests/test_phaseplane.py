import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from rilab.errors import DegenerateCriticalPoint, DomainError
from rilab.params import GasParams, is_relevant, lambda_circ
from rilab.phaseplane import (
    PhasePoint,
    chart_rhs,
    classified_points,
    classify,
    critical_points,
    evaluate_FGD,
    infinity_chart_field,
    lazarus_W,
    linearization,
    partials,
    slope_ordering,
    triple_point_V,
)

import oracles

# frozen from the Newton and finite-difference oracles at (3, 1.4, 1.05)
P9_REF = (-0.1286925113411822, -0.8713074886588178)
W9_REF = 2.159841262948426
R2_REF = 1.7537645159715876
L1_REF = -3.1869095436814354
L2_REF = 2.3977636831767697
E1_REF = 4.005258644579772
E2_REF = 9.589931871437976


def relevant_params():
    return st.tuples(st.sampled_from([2, 3]), st.floats(1.05, 10.0), st.floats(0.02, 0.98)).map(
        lambda t: (t[0], t[1], 1.0 + t[2] * (lambda_circ(t[0], t[1]) - 1.0))
    ).filter(lambda t: is_relevant(*t))


def test_F_vanishes_on_axis():
    p = GasParams.isentropic(3, 1.4, 1.05)
    V = np.linspace(-3, 2, 51)
    F, G, D = evaluate_FGD(V, np.zeros_like(V), p)
    assert np.all(F == 0.0)
    # the field definition gives G(V, 0) = -V (1 + V)(lam + V)
    np.testing.assert_allclose(G, -V * (1 + V) * (1.05 + V), rtol=1e-13, atol=1e-14)
    for z in (0.0, -1.0, -1.05):
        assert evaluate_FGD(z, 0.0, p)[1] == pytest.approx(0.0, abs=1e-15)


def test_F_G_match_linear_system_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.choice([2, 3]))
        gamma = float(rng.uniform(1.1, 4.0))
        lam = float(rng.uniform(1.01, 1.5))
        p = GasParams.isentropic(n, gamma, lam)
        V, C = rng.uniform(-2, 1), rng.uniform(-2, 2)
        F, G, D = evaluate_FGD(V, C, p)
        x = float(rng.uniform(0.1, 5))
        _, dV, dC = oracles.linear_system_rates(V, C, n, gamma, lam, x=x)
        assert -lam * x * D * dV == pytest.approx(G, rel=1e-9, abs=1e-12)
        assert -lam * x * D * dC == pytest.approx(F, rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(V=st.floats(-3.0, 2.0), gamma=st.floats(1.05, 10.0), lam=st.floats(1.001, 2.0), n=st.sampled_from([2, 3]))
def test_proportional_on_sonic_lines(V, gamma, lam, n):
    p = GasParams.isentropic(n, gamma, lam)
    for s in (1.0, -1.0):
        F, G, D = evaluate_FGD(V, s * (1 + V), p)
        scale = 1.0 + abs(F) + abs(G)
        assert abs(F + s * 0.5 * (gamma - 1) * G) <= 1e-10 * scale
        assert abs(D) <= 1e-12 * (1 + V * V)


def test_partials_reference():
    p = GasParams.isentropic(3, 1.4, 1.05)
    pd = partials(*P9_REF, p)
    fd = oracles.fd_partials(*P9_REF, 3, 1.4, 1.05)
    assert (pd.F_V, pd.F_C, pd.G_V, pd.G_C) == pytest.approx(fd, rel=1e-8)
    # published six-digit approximations
    assert pd.F_C == pytest.approx(1.518352, rel=1e-4)
    assert pd.G_C == pytest.approx(0.237122, rel=1e-4)
    assert pd.G_V == pytest.approx(1.705489, rel=1e-4)


def test_partials_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.choice([2, 3]))
        gamma, lam = float(rng.uniform(1.1, 4)), float(rng.uniform(1.01, 1.6))
        V, C = float(rng.uniform(-0.9, 0.5)), float(rng.uniform(-2, 2))
        p = GasParams.isentropic(n, gamma, lam)
        pd = partials(V, C, p)
        fd = oracles.fd_partials(V, C, n, gamma, lam)
        for a, b in zip((pd.F_V, pd.F_C, pd.G_V, pd.G_C), fd):
            assert a == pytest.approx(b, rel=1e-6, abs=1e-8)
    F_V = partials(np.linspace(-0.9, 0.9, 7), np.zeros(7), GasParams.isentropic(3, 1.4, 1.05)).F_V
    assert np.all(F_V == 0.0)


def test_critical_points_reference():
    p = GasParams.isentropic(3, 1.4, 1.05)
    pts = critical_points(p)
    assert pts["P4"].location.V == pytest.approx(-0.65625, rel=1e-14)
    assert pts["P9"].location.V == pytest.approx(-0.128693, rel=1e-5)
    assert pts["P7"].location.V == pytest.approx(-0.971307, rel=1e-5)
    assert p.derived.V_star == pytest.approx(-1 / 12, rel=1e-14)
    assert pts["P9"].location.C == pytest.approx(-0.871307, rel=1e-5)
    assert pts["P1"].location == PhasePoint(0.0, 0.0)
    assert pts["P9"].location.V == pytest.approx(P9_REF[0], rel=1e-12)


def test_critical_points_match_newton_oracle():
    rng = np.random.default_rng(2)
    done = 0
    while done < 20:
        n = 2 if done % 2 else 3
        gamma = float(rng.uniform(1.1, 3.0))
        lam = 1.0 + float(rng.uniform(0.05, 0.95)) * (lambda_circ(n, gamma) - 1.0)
        if not is_relevant(n, gamma, lam):
            continue
        done += 1
        roots = oracles.newton_critical_points(n, gamma, lam)
        pts = critical_points(GasParams.isentropic(n, gamma, lam))
        for lab in ("P1", "P3", "P4", "P5", "P6", "P7", "P8", "P9"):
            loc = pts[lab].location
            d = min(math.hypot(loc.V - a, loc.C - b) for a, b in roots)
            assert d <= 1e-10 * max(1.0, abs(loc.V)), (lab, n, gamma, lam, d)


def test_double_root_at_gamma_three():
    p = GasParams.isentropic(3, 3.0, 1.5)
    Vm, Vp = triple_point_V(p)
    assert Vm == pytest.approx(Vp, abs=1e-7)
    pts = critical_points(p, check_ordering=False)
    assert pts["P9"].kind == "degenerate"


def test_non_isentropic_rejected():
    with pytest.raises(DomainError):
        critical_points(GasParams(3, 1.4, 1.05, -0.2))


def test_classification_reference():
    p = GasParams.isentropic(3, 1.4, 1.05)
    pts = classified_points(p)
    p9 = pts["P9"]
    assert p9.kind == "node" and pts["P8"].kind == "node"
    assert p9.W == pytest.approx(W9_REF, rel=1e-12)
    assert p9.R2 == pytest.approx(R2_REF, rel=1e-12)
    assert (p9.L1, p9.L2, p9.E1, p9.E2) == pytest.approx((L1_REF, L2_REF, E1_REF, E2_REF), rel=1e-12)
    # published approximations
    assert p9.W == pytest.approx(2.159844, rel=1e-4)
    assert p9.L1 == pytest.approx(-3.18705, rel=1e-4)
    assert p9.L2 == pytest.approx(2.39785, rel=1e-4)
    assert p9.E1 == pytest.approx(4.00542, rel=1e-4)
    assert p9.E2 == pytest.approx(9.59030, rel=1e-4)
    assert p9.W == pytest.approx(lazarus_W(p, "P9"), rel=1e-12)
    assert pts["P5"].kind == "saddle" and pts["P4"].kind == "saddle"
    assert pts["P5"].W == pytest.approx(lazarus_W(p, "P5"), rel=1e-10)
    assert pts["P5"].W < 0.0
    assert pts["P1"].kind == "star" and pts["P1"].W is None
    assert pts["P+inf"].kind == "at-infinity-saddle"


def test_classification_oracle_eigenvalues():
    # E are the eigenvalues of the Jacobian scaled by 1/G_C
    p = GasParams.isentropic(3, 1.4, 1.05)
    FV, FC, GV, GC = oracles.fd_partials(*P9_REF, 3, 1.4, 1.05)
    ev = np.sort(np.linalg.eigvals(np.array([[GV, GC], [FV, FC]])).real) / GC
    p9 = classified_points(p)["P9"]
    assert (p9.E1, p9.E2) == pytest.approx(tuple(ev), rel=1e-7)


def test_degenerate_discriminant_raises():
    from scipy.optimize import brentq

    def r2(lam):
        q = GasParams.isentropic(3, 2.0, lam)
        return linearization(critical_points(q, check_ordering=False)["P7"].location, q)[1]

    lam0 = brentq(r2, 1.16, 1.17, xtol=1e-15)
    q = GasParams.isentropic(3, 2.0, lam0)
    with pytest.raises(DegenerateCriticalPoint):
        classify(critical_points(q, check_ordering=False)["P7"], q)
    q = GasParams.isentropic(3, 2.0, lam0 + 1e-3)
    assert classify(critical_points(q, check_ordering=False)["P7"], q).kind in ("node", "saddle", "focus")


@settings(max_examples=200, deadline=None)
@given(relevant_params())
def test_algebraic_identities(t):
    n, gamma, lam = t
    p = GasParams.isentropic(n, gamma, lam)
    pts = classified_points(p)
    for lab in ("P6", "P7", "P8", "P9"):
        loc = pts[lab].location
        assert loc.C**2 == pytest.approx((1 + loc.V) ** 2, rel=1e-10)
    for lab in ("P8", "P9"):
        cp = pts[lab]
        pd = partials(cp.location.V, cp.location.C, p)
        assert cp.W == pytest.approx(cp.E1 * cp.E2 * pd.G_C**2, rel=1e-10)
        assert cp.kind == "node"
    assert pts["P9"].W == pytest.approx(lazarus_W(p, "P9"), rel=1e-10)
    assert pts["P5"].W == pytest.approx(lazarus_W(p, "P5"), rel=1e-10)
    # saddle exactly when V_- < V_4; relevance alone does not force this ordering
    V5, V7 = pts["P5"].location.V, pts["P7"].location.V
    assert pts["P5"].kind == ("saddle" if V7 < V5 else "node")


def test_P5_saddle_near_lambda_one():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.choice([2, 3]))
        gamma = float(rng.uniform(1.05, 10.0))
        lam = 1.0 + 1e-3 * (lambda_circ(n, gamma) - 1.0)
        assert classified_points(GasParams.isentropic(n, gamma, lam))["P5"].kind == "saddle"


def test_P5_node_inside_relevant_band():
    p = GasParams.isentropic(2, 1.125, 1.035)
    assert is_relevant(2, 1.125, 1.035)
    pts = classified_points(p)
    assert pts["P7"].location.V > pts["P5"].location.V
    assert pts["P5"].kind == "node"


def test_slope_ordering_reference():
    so = slope_ordering(GasParams.isentropic(3, 1.4, 1.05))
    assert so.holds
    assert so.g_ratio == pytest.approx(-7.19245, rel=1e-4)
    assert so.L1 == pytest.approx(-3.18705, rel=1e-4)
    assert so.L2 == pytest.approx(2.39785, rel=1e-4)
    assert list(so.as_tuple()) == sorted(so.as_tuple())


@settings(max_examples=100, deadline=None)
@given(relevant_params())
def test_slope_ordering_property(t):
    so = slope_ordering(GasParams.isentropic(*t))
    assert so.holds and so.L1 < -1.0


def test_mirrored_slopes_at_P8():
    p = GasParams.isentropic(3, 1.4, 1.05)
    pts = classified_points(p)
    assert pts["P8"].L1 == pytest.approx(-pts["P9"].L1, rel=1e-12)
    assert pts["P8"].L2 == pytest.approx(-pts["P9"].L2, rel=1e-12)


def test_infinity_chart_reference():
    p = GasParams.isentropic(3, 1.4, 1.05)
    ch = infinity_chart_field(p)
    assert ch.A == 2.0
    # B = (-1/12)(11/12)(1.05 - 1/12) = -319/4320 exactly
    assert ch.B == pytest.approx(-319 / 4320, rel=1e-13)
    assert ch.stable_slope == pytest.approx(5 * -4320 / 319, rel=1e-13)
    assert ch.w_exponent == pytest.approx(-2 / 1.05)
    assert ch.c_exponent == pytest.approx(1 / 1.05)


def test_chart_stable_direction_is_invariant():
    p = GasParams.isentropic(3, 1.4, 1.05)
    ch = infinity_chart_field(p)
    z = 1e-8
    w = z / ch.stable_slope
    dw, dz, _, _ = chart_rhs(w, z, p)
    assert dz / dw == pytest.approx(ch.stable_slope, rel=1e-6)
    # linearized eigenvalues: n along w, -2 along the stable direction
    assert dz / z == pytest.approx(-2.0, rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(V=st.floats(-0.9, -0.01), C=st.floats(-3, -0.2))
def test_chart_matches_primal_field(V, C):
    p = GasParams.isentropic(3, 1.4, 1.05)
    assume(abs((1 + V) ** 2 - C * C) > 1e-3)
    F, G, D = evaluate_FGD(V, C, p)
    z = C**-2
    dw, dz, _, _ = chart_rhs(V - p.derived.V_star, z, p)
    # dC/dV in both coordinates
    dCdV = F / G if abs(G) > 1e-12 else None
    assume(dCdV is not None and abs(dw) > 1e-12)
    assert (-0.5 * C**3 * dz) / dw == pytest.approx(dCdV, rel=1e-9)
