"""Trajectories of the desingularized similarity field.

All traces integrate ``(dV/ds, dC/ds, dlnx/ds) = sigma * (G, F, -lam D)``.
The lower half-plane ``C < 0`` corresponds to ``x > 0``; the upper half is
obtained by the reflection ``(V, C, x) -> (V, -C, -x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import (
    BarrierExit,
    BisectionStall,
    DomainError,
    KinkAtOrigin,
    NoNodeCapture,
    NonMonotone,
    NotThroughOrigin,
)
from .params import GasParams, is_relevant, lambda_circ
from .phaseplane import classify, critical_points, evaluate_FGD, partials

RTOL = 1e-10
ATOL = 1e-16
SEED_DIST = 1e-5
NODE_RADIUS = 1e-7
DS = 0.005
CHART_SWITCH_C2 = 25.0
DEPART_RADIUS = 1e-2
Z_END = 1e-12
BISECT_STEPS = 80
MAX_STAGES = 30
S_MAX = 400.0


@dataclass
class Trajectory:
    """Sampled solution curve.

    ``lnx`` holds ``ln|x|`` and ``xsign`` the sign of ``x`` (0 at P1).
    Endpoint samples at critical points carry ``s = -inf`` or ``+inf``.
    """

    s: np.ndarray
    V: np.ndarray
    C: np.ndarray
    lnx: np.ndarray
    xsign: np.ndarray
    F: np.ndarray
    G: np.ndarray
    D: np.ndarray
    branch: str
    start: str
    end: str
    sigma: int = -1
    meta: dict = field(default_factory=dict)

    @classmethod
    def build(cls, s, V, C, lnx, xsign, params, branch, start, end, sigma, meta=None):
        V = np.asarray(V, dtype=float)
        C = np.asarray(C, dtype=float)
        F, G, D = evaluate_FGD(V, C, params)
        xs = np.broadcast_to(np.asarray(xsign, dtype=float), V.shape).copy()
        return cls(
            np.asarray(s, dtype=float), V, C, np.asarray(lnx, dtype=float), xs,
            np.atleast_1d(F), np.atleast_1d(G), np.atleast_1d(D),
            branch, start, end, sigma, dict(meta or {}),
        )

    def __len__(self):
        return len(self.V)

    @property
    def x(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return self.xsign * np.exp(self.lnx)

    def take(self, idx) -> "Trajectory":
        return replace(
            self,
            s=self.s[idx], V=self.V[idx], C=self.C[idx], lnx=self.lnx[idx],
            xsign=self.xsign[idx], F=self.F[idx], G=self.G[idx], D=self.D[idx],
            meta=dict(self.meta),
        )

    def reversed(self) -> "Trajectory":
        return replace(self.take(slice(None, None, -1)), start=self.end, end=self.start)

    def to_csv(self, path) -> None:
        from .io import write_csv

        rows = zip(self.s, self.V, self.C, self.lnx, self.D, self.F, self.G, [self.branch] * len(self))
        write_csv(path, ["s", "V", "C", "lnx", "D", "F", "G", "branch"], rows)


@dataclass(frozen=True)
class BarrierReport:
    beta: float
    beta1: float
    beta2: float
    propA: bool
    propB: bool
    propC: bool
    crossing_V: float | None = None
    phi_end: float | None = None
    dphi_end: float | None = None
    psi_start: float | None = None
    psi_end: float | None = None

    @property
    def all_hold(self) -> bool:
        return self.propA and self.propB and self.propC


def desingularized_field(V, C, params: GasParams, sigma: int = -1):
    """Return ``(dV/ds, dC/ds, dlnx/ds)``."""
    F, G, D = evaluate_FGD(V, C, params)
    return sigma * G, sigma * F, -sigma * params.lam * D


def _require_relevant(params: GasParams):
    if not params.is_isentropic:
        raise DomainError("traces require the isentropic kappa")
    if not is_relevant(params.n, params.gamma, params.lam):
        raise DomainError(
            f"(n, gamma, lambda) = ({params.n}, {params.gamma}, {params.lam}) is not relevant"
        )


def _node(params: GasParams):
    pts = critical_points(params)
    return pts, classify(pts["P9"], params)


def _node_tail(params: GasParams, V, C, p9):
    """Increment ``ln|x|(P9) - ln|x|(V, C)`` from the linearization at P9.

    The offset is split along the eigenvectors of the Jacobian of
    ``(G, F)``; each mode contributes ``lam * a_i * (grad D . v_i) / e_i``.
    """
    loc = p9.location
    pd = partials(loc.V, loc.C, params)
    J = np.array([[pd.G_V, pd.G_C], [pd.F_V, pd.F_C]])
    evals, evecs = np.linalg.eig(J)
    evals = evals.real
    evecs = evecs.real
    a = np.linalg.solve(evecs, np.array([V - loc.V, C - loc.C]))
    gradD = np.array([2.0 * (1.0 + loc.V), -2.0 * loc.C])
    d = gradD @ evecs
    return float(params.lam * np.sum(a * d / evals))


def _stretched_grid(sol, t0, t1, step):
    """Grid with spacing ``step / max(1, C^2)`` so it joins the chart sampling smoothly."""
    fine = np.linspace(t0, t1, max(2, int(40 * (t1 - t0) / step)) + 1)
    w = np.maximum(1.0, sol(fine)[1] ** 2)
    u = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(fine))])
    n = max(2, int(math.ceil(u[-1] / step)) + 1)
    return np.interp(np.linspace(0.0, u[-1], n), u, fine)


def _uniform_samples(sol, t0, t1, step):
    n = max(2, int(math.ceil(abs(t1 - t0) / step)) + 1)
    t = np.linspace(t0, t1, n)
    return t, sol(t)


# barrier construction ------------------------------------------------------

def barrier_coefficients(params: GasParams):
    """``(beta, beta1, beta2)`` of the trapping parabolas ``V = -b C^2``."""
    n, eps, lam, mu = params.n, params.gamma - 1.0, params.lam, params.lam - 1.0
    beta = 2.0 * mu / (eps * lam)
    beta1 = 2.0 * (2.0 + n * eps) / (n * lam * eps**2)
    pts = critical_points(params, check_ordering=False)
    if pts["P9"].present:
        V9 = pts["P9"].location.V
        beta2 = -V9 / (1.0 + V9) ** 2
    else:
        beta2 = math.nan
    return beta, beta1, beta2


def parabola_aux(b: float, Z, params: GasParams):
    """Sign function of the field across the parabola ``V = -b C^2`` at ``C^2 = Z``.

    Equals ``-(G + 2 b C F) / (b Z)`` evaluated on the parabola with ``C < 0``.
    """
    Z = np.asarray(Z, dtype=float)
    C = -np.sqrt(Z)
    V = -b * Z
    F, G, _ = evaluate_FGD(V, C, params)
    return -(G + 2.0 * b * Z * F / C) / (b * Z)


def parabola_poly(b: float, Z, params: GasParams):
    """Closed-form quadratic equal to :func:`parabola_aux` when ``n = 3``."""
    eps, mu, lam = params.gamma - 1.0, params.lam - 1.0, params.lam
    Z = np.asarray(Z, dtype=float)
    return (
        (2.0 * eps + 1.0) * b**2 * Z**2
        + (1.0 + ((mu - 2.0) * eps - (mu + 2.0)) * b) * Z
        + (lam - 2.0 * mu / (b * eps))
    )


def barrier_check(params: GasParams, crossing_V: float | None = None, grid: int = 1000) -> BarrierReport:
    """Evaluate the three trapping properties of the vertical trajectory.

    (A) ``beta1 > beta > beta2``; (B) the aux function of the outer parabola
    is positive on ``(0, Z5)``; (C) the aux function of the inner parabola is
    negative on ``(0, Z9)``.
    """
    beta, beta1, beta2 = barrier_coefficients(params)
    propA = bool(beta1 > beta > beta2)
    pts = critical_points(params, check_ordering=False)
    aux = parabola_poly if params.n == 3 else parabola_aux
    propB = propC = False
    phi_end = dphi = psi0 = psi_end = None
    if pts["P5"].present:
        Z5 = pts["P5"].location.C ** 2
        Zg = np.linspace(0.0, Z5, grid + 2)[1:-1]
        propB = bool(np.all(aux(beta1, Zg, params) > 0.0))
        phi_end = float(aux(beta1, Z5, params))
        h = 1e-6 * Z5
        dphi = float((aux(beta1, Z5 + h, params) - aux(beta1, Z5 - h, params)) / (2.0 * h))
        propB = propB and dphi < 0.0
    if pts["P9"].present:
        Z9 = pts["P9"].location.C ** 2
        Zg = np.linspace(0.0, Z9, grid + 2)[1:-1]
        propC = bool(np.all(aux(beta2, Zg, params) < 0.0))
        psi0 = float(parabola_poly(beta2, 0.0, params)) if params.n == 3 else float(aux(beta2, 1e-12 * Z9, params))
        psi_end = float(aux(beta2, Z9, params))
        propC = propC and psi0 < 0.0
    return BarrierReport(beta, beta1, beta2, propA, propB, propC, crossing_V, phi_end, dphi, psi0, psi_end)


# Sigma: P1 -> P9 -----------------------------------------------------------

def _seed(params: GasParams, ell):
    d0 = SEED_DIST
    if ell is None:
        beta = barrier_coefficients(params)[0]
        return -beta * d0 * d0, -d0
    ell = float(ell)
    if ell == 0.0 or not math.isfinite(ell):
        raise DomainError("finite slopes must be nonzero; use ell=None for the vertical branch")
    # point on C = ell V at distance d0 with C < 0
    C0 = -d0 * abs(ell) / math.hypot(1.0, ell)
    return C0 / ell, C0


def trace_sigma(params: GasParams, ell: float | None = None, check_barrier: bool = True) -> Trajectory:
    """Trace the lower-half trajectory leaving P1 until capture by P9.

    ``ell=None`` selects the vertical trajectory seeded on ``V = -beta C^2``;
    a finite ``ell`` seeds along ``C = ell V``. The returned ``lnx`` is
    relative (0 at the seed) until :func:`recover_x` anchors it.
    """
    _require_relevant(params)
    pts, p9 = _node(params)
    V9, C9 = p9.location.V, p9.location.C
    V5 = pts["P5"].location.V
    beta, beta1, beta2 = barrier_coefficients(params)
    lam = params.lam
    sigma = -1

    def rhs(s, y):
        F, G, D = evaluate_FGD(y[0], y[1], params)
        return [sigma * G, sigma * F, -sigma * lam * D]

    def ev_node(s, y):
        return math.hypot(y[0] - V9, y[1] - C9) - NODE_RADIUS

    ev_node.terminal = True

    def ev_sonic(s, y):
        if math.hypot(y[0] - V9, y[1] - C9) < 10 * NODE_RADIUS:
            return 1.0
        return (1.0 + y[0]) ** 2 - y[1] ** 2

    ev_sonic.terminal = True
    ev_sonic.direction = -1

    def ev_G(s, y):
        return evaluate_FGD(y[0], y[1], params)[1]

    def ev_far(s, y):
        return y[0] ** 2 + y[1] ** 2 - 100.0

    ev_far.terminal = True

    def ev_pi1(s, y):
        return y[0] + beta1 * y[1] ** 2

    def ev_pi2(s, y):
        return y[0] + beta2 * y[1] ** 2

    V0, C0 = _seed(params, ell)
    sol = solve_ivp(
        rhs, [0.0, S_MAX], [V0, C0, 0.0], method="DOP853", rtol=RTOL, atol=ATOL,
        events=[ev_node, ev_sonic, ev_G, ev_far, ev_pi1, ev_pi2], dense_output=True,
    )
    s_end = sol.t[-1]
    s, Y = _uniform_samples(sol.sol, 0.0, s_end, DS)
    V, C, lnx = Y

    report = None
    if ell is None and check_barrier:
        # the vertical branch must stay strictly between the parabolas while V > V9
        for k, name in ((4, "Pi_1"), (5, "Pi_2")):
            for te, ye in zip(sol.t_events[k], sol.y_events[k]):
                if ye[0] > V9 and te > 0.0:
                    rep = barrier_check(params)
                    raise BarrierExit(
                        f"trajectory crossed {name} at V={ye[0]:.6g}, C={ye[1]:.6g}",
                        location=(float(ye[0]), float(ye[1])), report=rep,
                    )
        mask = V > V9
        inside = (-beta1 * C[mask] ** 2 < V[mask]) & (V[mask] < -beta2 * C[mask] ** 2)
        if not np.all(inside):
            i = int(np.flatnonzero(mask)[np.argmin(inside)])
            raise BarrierExit(
                "sample outside the barrier region",
                location=(float(V[i]), float(C[i])), report=barrier_check(params),
            )

    if len(sol.t_events[0]) == 0:
        loc = (float(sol.y[0, -1]), float(sol.y[1, -1]))
        if len(sol.t_events[1]):
            raise NoNodeCapture(f"crossed a sonic line away from P9 at V={loc[0]:.6g}, C={loc[1]:.6g}", loc)
        raise NoNodeCapture(f"not captured by P9 (stopped at V={loc[0]:.6g}, C={loc[1]:.6g})", loc)

    # G crossings and eye-region trapping
    F, G, D = evaluate_FGD(V, C, params)
    eye = (G < 0.0) & (F > 0.0) & (V > V5) & (V < V9)
    # V where the trajectory last crossed {G = 0} before entering the eye
    crossing_V = float(sol.y_events[2][-1][0]) if len(sol.y_events[2]) else None
    if eye.any():
        first = int(np.argmax(eye))
        if not np.all(eye[first:]):
            bad = first + int(np.argmin(eye[first:]))
            raise NoNodeCapture("eye region did not trap the trajectory", (float(V[bad]), float(C[bad])))
    else:
        raise NoNodeCapture("trajectory never entered the eye region", (float(V[-1]), float(C[-1])))

    tail = _node_tail(params, V[-1], C[-1], p9)
    s = np.concatenate([[-np.inf], s, [np.inf]])
    V = np.concatenate([[0.0], V, [V9]])
    C = np.concatenate([[0.0], C, [C9]])
    lnx = np.concatenate([[-np.inf], lnx, [lnx[-1] + tail]])
    xsign = np.ones_like(V)
    xsign[0] = 0.0

    slope = approach_slope(V[1:-1], C[1:-1], V9, C9)
    meta = {
        "ell": ell,
        "crossing_V": crossing_V,
        "approach_slope": slope,
        "L1": p9.L1,
        "s_capture": float(s_end),
    }
    if ell is None:
        meta["barrier"] = barrier_check(params, crossing_V=crossing_V)
    return Trajectory.build(s, V, C, lnx, xsign, params, "Sigma" if ell is None else f"Perturbed({ell:g})", "P1", "P9", sigma, meta)


def approach_slope(V, C, V0, C0, decade=(NODE_RADIUS, 10 * NODE_RADIUS)):
    """Least-squares slope ``dC/dV`` over samples whose distance to ``(V0, C0)`` lies in ``decade``."""
    r = np.hypot(V - V0, C - C0)
    lo, hi = decade
    m = (r >= lo * (1 - 1e-9)) & (r <= hi)
    if m.sum() < 3:
        idx = np.argsort(r)[:10]
        m = np.zeros_like(r, dtype=bool)
        m[idx] = True
    dv = V[m] - V0
    dc = C[m] - C0
    return float(np.sum(dv * dc) / np.sum(dv * dv))


# Sigma': P9 -> P-inf -------------------------------------------------------

class _Run:
    """One forward shot of Sigma' with its solution pieces."""

    def __init__(self, outcome, pieces):
        self.outcome = outcome
        self.pieces = pieces  # list of ("primal" | "chart", OdeSolution, t0, t1)


def _shoot(params: GasParams, state, chart: bool, z_end: float) -> _Run:
    d = params.derived
    n, lam = params.n, params.lam
    Vs = d.V_star
    pieces = []

    def prim(s, y):
        F, G, D = evaluate_FGD(y[0], y[1], params)
        return [G, F, -lam * D]

    def chart_rhs(t, y):
        w, z = y[0], y[1]
        V = Vs + w
        v = 1.0 + V
        h = V * v * (lam + V)
        f = d.k1 * v * v - d.k2 * v + d.k3
        return [n * w - z * h, -2.0 * z * (1.0 - f * z), -lam * (v * v * z - 1.0), z]

    if not chart:
        V0, C0, l0, s0 = state
        eG = lambda s, y: evaluate_FGD(y[0], y[1], params)[1]
        eF = lambda s, y: evaluate_FGD(y[0], y[1], params)[0]
        eV = lambda s, y: y[0] - Vs
        eB = lambda s, y: y[1] ** 2 - CHART_SWITCH_C2
        for e, dr in ((eG, -1), (eF, 1), (eV, 1), (eB, 1)):
            e.terminal = True
            e.direction = dr
        sol = solve_ivp(prim, [s0, s0 + S_MAX], [V0, C0, l0], method="DOP853",
                        rtol=1e-12, atol=1e-15, events=[eG, eF, eV, eB], dense_output=True)
        pieces.append(("primal", sol.sol, s0, sol.t[-1]))
        for i, name in enumerate("GFV"):
            if len(sol.t_events[i]):
                return _Run(name, pieces)
        if not len(sol.t_events[3]):
            return _Run("stall", pieces)
        V, C, l = sol.y[:, -1]
        state = (V - Vs, 1.0 / C**2, l, sol.t[-1])

    w0, z0, l0, s0 = state
    cG = lambda t, y: n * y[0] - y[1] * (Vs + y[0]) * (1 + Vs + y[0]) * (lam + Vs + y[0])
    cV = lambda t, y: y[0]
    cZ = lambda t, y: y[1] - z_end
    for e, dr in ((cG, -1), (cV, 1), (cZ, -1)):
        e.terminal = True
        e.direction = dr
    sol = solve_ivp(chart_rhs, [0.0, 200.0], [w0, z0, l0, s0], method="DOP853",
                    rtol=1e-12, atol=1e-30, events=[cG, cV, cZ], dense_output=True)
    pieces.append(("chart", sol.sol, 0.0, sol.t[-1]))
    if len(sol.t_events[0]):
        return _Run("G", pieces)
    if len(sol.t_events[1]):
        return _Run("V", pieces)
    if len(sol.t_events[2]):
        # reached the end of the chart: classify by the side of the stable subspace
        w, z = sol.y[0, -1], sol.y[1, -1]
        slope = d.B / (n + d.A)
        return _Run("G" if (w - slope * z) * np.sign(slope) > 0 else "V", pieces)
    return _Run("stall", pieces)


def _side(outcome):
    return {"G": "G", "F": "FV", "V": "FV"}.get(outcome, outcome)


def _bisect(make_state, lo, hi, chart, params, z_end):
    """Bisect ``u`` in ``[lo, hi]`` down to float resolution.

    Returns the two shots that bracket the connection.
    """
    r_lo = _shoot(params, make_state(lo), chart, z_end)
    r_hi = _shoot(params, make_state(hi), chart, z_end)
    a, b = _side(r_lo.outcome), _side(r_hi.outcome)
    if a == b or "stall" in (a, b):
        raise BisectionStall(f"bracket ends exit the same way ({a}, {b})")
    for _ in range(BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        if mid <= min(lo, hi) or mid >= max(lo, hi):
            break
        r = _shoot(params, make_state(mid), chart, z_end)
        side = _side(r.outcome)
        if side == a:
            lo, r_lo = mid, r
        elif side == b:
            hi, r_hi = mid, r
        else:
            raise BisectionStall(f"unexpected outcome {r.outcome!r} during bisection")
    return r_lo, r_hi


def _handoff(r_lo: _Run, r_hi: _Run, B_slope: float, rel: float = 1e-6):
    """Last chart state where the bracketing shots still agree to ``rel``.

    Both chart pieces are compared at equal chart time; the returned
    triple is ``(tau, state_lo, w_hi)`` with ``w_hi`` taken on the same
    transversal ``z = z_lo``.
    """
    ka, sa, _, ta1 = r_lo.pieces[-1]
    kb, sb, _, tb1 = r_hi.pieces[-1]
    if ka != "chart" or kb != "chart":
        return None
    tau = np.linspace(0.0, min(ta1, tb1), 20001)
    Ya, Yb = sa(tau), sb(tau)
    za = Ya[1]
    sep = np.abs(Ya[0] - Yb[0]) / (np.abs(B_slope) * za) + np.abs(za - Yb[1]) / za
    bad = np.flatnonzero(sep > rel)
    last = (bad[0] - 1) if len(bad) else len(tau) - 1
    if last <= 0:
        return None
    y = Ya[:, last]
    zt = y[1]
    tb = tau[last]
    f = lambda t: sb(t)[1] - zt
    lo, hi = max(0.0, tb - 0.05), min(tb1, tb + 0.05)
    if f(lo) * f(hi) < 0:
        tb = brentq(f, lo, hi, xtol=1e-14)
    return float(tau[last]), y, float(sb(tb)[0])


def _collect(run: _Run, params: GasParams, t_stop=None):
    """Sample a run's pieces as (s, V, C, lnx) arrays."""
    Vs = params.derived.V_star
    out = []
    for k, (kind, sol, t0, t1) in enumerate(run.pieces):
        if kind == "primal":
            t = _stretched_grid(sol, t0, t1, DS)
            Y = sol(t)
            arr = np.vstack([t, Y[0], Y[1], Y[2]])
        else:
            te = t1 if t_stop is None else t_stop
            t, Y = _uniform_samples(sol, t0, te, DS)
            arr = np.vstack([Y[3], Vs + Y[0], -1.0 / np.sqrt(Y[1]), Y[2]])
        # consecutive pieces share their junction point
        out.append(arr if k == 0 else arr[:, 1:])
    return np.hstack(out)


def trace_sigma_prime(params: GasParams, z_end: float = Z_END) -> Trajectory:
    """Trace the unique trajectory from P9 to ``P-inf`` by staged bisection.

    Stage one bisects the departure angle on a circle around P9 between the
    directions leaving the region through ``{G = 0}`` and through
    ``{F = 0}``/``{V = V_star}``. Once the two bracketing shots separate in
    the chart ``w = V - V_star``, ``z = C**-2``, the next stage bisects ``w``
    on the transversal ``z = const`` where they still agree.
    """
    _require_relevant(params)
    _, p9 = _node(params)
    V9, C9 = p9.location.V, p9.location.C
    d = params.derived
    r = DEPART_RADIUS
    B_slope = d.B / (params.n + d.A)

    def on_circle(th):
        return V9 + r * math.cos(th), C9 + r * math.sin(th)

    pd = partials(V9, C9, params)
    thG0 = math.atan(-pd.G_V / pd.G_C)
    thF0 = math.atan(-pd.F_V / pd.F_C)
    # directions pointing into C < C9 (angles in (-pi, 0))
    thG0 = thG0 - math.pi if thG0 > 0 else thG0
    thF0 = thF0 - math.pi if thF0 > 0 else thF0
    fG = lambda t: evaluate_FGD(*on_circle(t), params)[1]
    fF = lambda t: evaluate_FGD(*on_circle(t), params)[0]
    thG = brentq(fG, thG0 - 0.3, thG0 + 0.3, xtol=1e-15)
    thF = brentq(fF, thF0 - 0.3, thF0 + 0.3, xtol=1e-15)
    lo, hi = sorted((thG, thF))
    pad = 1e-9
    lo, hi = lo + pad, hi - pad

    segments = []
    stage_z = []
    r_lo, r_hi = _bisect(lambda th: (*on_circle(th), 0.0, 0.0), lo, hi, False, params, z_end)
    prev_z = math.inf
    for stage in range(MAX_STAGES):
        ho = _handoff(r_lo, r_hi, B_slope)
        if ho is None:
            raise BisectionStall(f"stage {stage}: bracketing shots separate before the chart")
        t_h, y_h, w_other = ho
        z_h = float(y_h[1])
        if z_h > 0.5 * prev_z:
            raise BisectionStall(f"stage {stage}: no progress toward P-inf (z = {z_h:.3e})")
        segments.append((r_lo, t_h))
        stage_z.append(z_h)
        if z_h <= z_end * (1.0 + 1e-6):
            break
        prev_z = z_h
        l_h, s_h = float(y_h[2]), float(y_h[3])
        w_lo, w_hi = float(y_h[0]), w_other
        if w_lo == w_hi:
            w_hi = w_lo + abs(w_lo) * 1e-15
        r_lo, r_hi = _bisect(lambda w: (w, z_h, l_h, s_h), w_lo, w_hi, True, params, z_end)
    else:
        raise BisectionStall("stage budget exhausted")

    # forward samples from the departure circle outward
    parts = []
    for k, (run, t_stop) in enumerate(segments):
        arr = _collect(run, params, t_stop)
        if k > 0:
            arr = arr[:, 1:]
        parts.append(arr)
    fwd = np.hstack(parts)

    # backward fill from the departure point to P9
    V0, C0 = fwd[1, 0], fwd[2, 0]

    def back(s, y):
        F, G, D = evaluate_FGD(y[0], y[1], params)
        return [G, F, -params.lam * D]

    def ev_node(s, y):
        return math.hypot(y[0] - V9, y[1] - C9) - NODE_RADIUS

    ev_node.terminal = True
    sb = solve_ivp(back, [0.0, -S_MAX], [V0, C0, 0.0], method="DOP853", rtol=1e-12, atol=ATOL,
                   events=[ev_node], dense_output=True)
    if not len(sb.t_events[0]):
        raise NoNodeCapture("backward fill did not return to P9")
    tb, Yb = _uniform_samples(sb.sol, sb.t[-1], 0.0, DS)
    tail = _node_tail(params, Yb[0, 0], Yb[1, 0], p9)
    bwd = np.vstack([tb, Yb[0], Yb[1], Yb[2]])[:, :-1]

    s = np.concatenate([[-np.inf], bwd[0], fwd[0]])
    V = np.concatenate([[V9], bwd[1], fwd[1]])
    C = np.concatenate([[C9], bwd[2], fwd[2]])
    lnx = np.concatenate([[bwd[3, 0] + tail], bwd[3], fwd[3]])

    # measured in chart variables; V itself cannot resolve w near V_star
    w_end, z_last = float(y_h[0]), float(y_h[1])
    meta = {
        "stages": len(segments),
        "stage_z": stage_z,
        "z_end": z_last,
        "stable_deviation": float(abs(w_end - B_slope * z_last) / (abs(B_slope) * z_last)),
    }
    traj = Trajectory.build(s, V, C, lnx, np.ones_like(V), params, "SigmaPrime", "P9", "P-inf", 1, meta)
    return traj


def tail_exponents(traj: Trajectory, params: GasParams, decades: float = 2.0):
    """Log-log slopes of ``|V - V_star|`` and ``|C|`` against ``|x|`` over the last decades."""
    fin = np.isfinite(traj.lnx)
    lnx = traj.lnx[fin]
    m = lnx >= lnx[-1] - decades * math.log(10.0)
    w = np.abs(traj.V[fin][m] - params.derived.V_star)
    c = np.abs(traj.C[fin][m])
    pw = np.polyfit(lnx[m], np.log(w), 1)[0]
    pc = np.polyfit(lnx[m], np.log(c), 1)[0]
    return float(pw), float(pc)


# x recovery and assembly ---------------------------------------------------

def recover_x(traj: Trajectory, anchor: tuple[float, float]) -> Trajectory:
    """Shift ``ln|x|`` so that the sample at parameter ``s0`` sits at ``x0``.

    ``s0`` may be ``+-inf`` to anchor at an endpoint critical point.
    Raises :class:`NonMonotone` unless ``ln|x|`` strictly increases along
    the stored orientation.
    """
    s0, x0 = anchor
    if x0 == 0.0 or not math.isfinite(x0):
        raise DomainError("anchor x must be finite and nonzero")
    hit = np.flatnonzero(traj.s == s0)
    if len(hit):
        l_at = traj.lnx[hit[0]]
        sg = traj.xsign[hit[0]]
    else:
        fin = np.isfinite(traj.s)
        l_at = float(np.interp(s0, traj.s[fin], traj.lnx[fin]))
        sg = traj.xsign[fin][0]
    if sg != 0.0 and np.sign(x0) != sg:
        raise DomainError("anchor sign inconsistent with the branch half-plane")
    out = traj.take(slice(None))
    out.lnx = traj.lnx - l_at + math.log(abs(x0))
    check_monotone(out)
    return out


def check_monotone(traj: Trajectory) -> None:
    fin = np.isfinite(traj.lnx)
    dl = np.diff(traj.lnx[fin])
    if np.any(dl <= 0.0):
        i = int(np.argmax(dl <= 0.0))
        raise NonMonotone(f"ln|x| not strictly increasing near sample {i} of {traj.branch}")


def mirror(traj: Trajectory) -> Trajectory:
    """Reflect ``(V, C, x) -> (V, -C, -x)``."""
    out = traj.take(slice(None))
    out.C = -traj.C
    out.F = -traj.F
    out.xsign = -traj.xsign
    rename = {"P9": "P8", "P-inf": "P+inf", "P8": "P9", "P+inf": "P-inf"}
    out.start = rename.get(traj.start, traj.start)
    out.end = rename.get(traj.end, traj.end)
    out.branch = traj.branch + "Mirror" if not traj.branch.endswith("Mirror") else traj.branch[:-6]
    return out


def origin_limits(traj: Trajectory):
    """``(nu, omega)``: limits of ``V/x`` and ``C/x`` as ``x -> 0``.

    Linear Richardson extrapolation in ``x`` over the decade of smallest
    sampled ``|x|`` on the branch.
    """
    if traj.start != "P1" and traj.end != "P1":
        raise NotThroughOrigin(f"branch {traj.branch} does not contain P1")
    fin = np.isfinite(traj.lnx) & (traj.xsign != 0)
    x = traj.x[fin]
    ax = np.abs(x)
    m = ax <= ax.min() * 10.0
    if m.sum() < 3:
        m = np.argsort(ax)[:5]
    pv = np.polyfit(x[m], traj.V[fin][m] / x[m], 1)
    pc = np.polyfit(x[m], traj.C[fin][m] / x[m], 1)
    return float(pv[1]), float(pc[1])


def _concat(parts, params, branch, start, end):
    keys = ["s", "V", "C", "lnx", "xsign", "F", "G", "D"]
    arrs = {k: np.concatenate([getattr(p, k) for p in parts]) for k in keys}
    return Trajectory(branch=branch, start=start, end=end, sigma=0, meta={}, **arrs)


def assemble_gamma(params: GasParams, ell: float | None = None, x9: float = 1.0,
                   sigma_prime: Trajectory | None = None, slope_tol: float = 1e-2) -> Trajectory:
    """Assemble the global curve over ``x`` in ``(-inf, inf)``.

    Vertical case: ``P+inf -> P8 -> P1 -> P9 -> P-inf`` from Sigma', Sigma
    and their mirrors. Finite ``ell``: the lower branch is the trace with
    slope ``ell`` and the upper branch mirrors the trace with slope
    ``-ell``, rescaled in ``x`` so that ``C/x`` is continuous at P1.
    """
    if x9 <= 0.0:
        raise DomainError("x9 must be positive")
    lower = recover_x(trace_sigma(params, ell), (np.inf, x9))
    sp = sigma_prime if sigma_prime is not None else trace_sigma_prime(params)
    sp = recover_x(sp, (-np.inf, x9))
    if ell is None:
        upper = lower
        shift = 0.0
    else:
        upper = recover_x(trace_sigma(params, -ell), (np.inf, x9))
        nu_l, om_l = origin_limits(lower)
        nu_u, om_u = origin_limits(upper)
        a = om_l / om_u
        shift = math.log(a)
        slope_l = om_l / nu_l
        slope_u = -om_u / nu_u  # slope of the mirrored branch
        if abs(slope_l - slope_u) > slope_tol * max(1.0, abs(slope_l)):
            raise KinkAtOrigin(f"entry slope {slope_u:.6g} differs from exit slope {slope_l:.6g}")
    up = mirror(upper)
    up.lnx = up.lnx - shift
    spm = mirror(sp)
    spm.lnx = spm.lnx - shift
    # order by increasing x: upper pieces run with decreasing |x|
    upper_sp = spm.reversed().take(slice(None, -1))  # P+inf ... (drop P8 duplicate)
    upper_br = up.reversed().take(slice(None, -1))    # P8 ... (drop P1 duplicate)
    lower_sp = sp.take(slice(1, None))                # drop P9 duplicate
    g = _concat([upper_sp, upper_br, lower, lower_sp], params, "Gamma" if ell is None else "GammaTilde", "P+inf", "P-inf")
    g.meta.update({"ell": ell, "x9": x9, "upper_scale": math.exp(shift)})
    check_global_monotone(g)
    return g


def check_global_monotone(traj: Trajectory) -> None:
    """``x`` must increase strictly along the assembled curve."""
    x = traj.x
    fin = np.isfinite(x)
    if np.any(np.diff(x[fin]) <= 0.0):
        i = int(np.argmax(np.diff(x[fin]) <= 0.0))
        raise NonMonotone(f"x not strictly increasing near sample {i}")


def stagnation_points(traj: Trajectory) -> list[float]:
    """Nonzero ``x`` where ``V`` changes sign, by linear interpolation in ``ln|x|``."""
    out = []
    V, l, sg = traj.V, traj.lnx, traj.xsign
    for i in range(len(V) - 1):
        if sg[i] == 0 or sg[i + 1] == 0 or not (np.isfinite(l[i]) and np.isfinite(l[i + 1])):
            continue
        if sg[i] != sg[i + 1]:
            continue
        if V[i] == 0.0 or V[i] * V[i + 1] < 0.0:
            t = 0.0 if V[i] == 0.0 else V[i] / (V[i] - V[i + 1])
            out.append(float(sg[i] * math.exp(l[i] + t * (l[i + 1] - l[i]))))
    return out


def stagnation_path(xbar: float, t, lam: float):
    """Radius ``r(t) = (t / xbar)**(1/lam)`` of the particle path with ``x = xbar``."""
    t = np.asarray(t, dtype=float)
    return (t / xbar) ** (1.0 / lam)


def reduced_residual(traj: Trajectory) -> np.ndarray:
    """Scaled residual of ``dC/dV = F/G`` over consecutive sample pairs.

    The means of ``F`` and ``G`` over each panel of three samples use the
    nonuniform Simpson rule; the residual ``|dC G - dV F|`` is divided by
    ``(|F| + |G|) ds max(1, |F| + |G|)``.
    """
    fin = np.isfinite(traj.s)
    s, V, C, F, G = traj.s[fin], traj.V[fin], traj.C[fin], traj.F[fin], traj.G[fin]
    i = np.arange(0, len(s) - 2, 2)
    h0 = s[i + 1] - s[i]
    h1 = s[i + 2] - s[i + 1]
    ok = (h0 > 0) & (h1 > 0)
    i, h0, h1 = i[ok], h0[ok], h1[ok]
    H = h0 + h1

    def simpson(f):
        return H / 6.0 * ((2.0 - h1 / h0) * f[i] + H**2 / (h0 * h1) * f[i + 1] + (2.0 - h0 / h1) * f[i + 2])

    Fi, Gi = simpson(F) / H, simpson(G) / H
    dV = V[i + 2] - V[i]
    dC = C[i + 2] - C[i]
    mag = np.abs(Fi) + np.abs(Gi)
    return np.abs(dC * Gi - dV * Fi) / (mag * H * np.maximum(1.0, mag))


def sufficient_lambda(n: int, gamma: float, tol: float = 1e-6, trace: bool = False) -> float:
    """Largest lambda in ``(1, lambda_circ)`` passing relevance and the barrier checks.

    Bisection assumes the passing set is an interval ``(1, lam_max)``. With
    ``trace=True`` the vertical trace must also be captured without
    leaving the barrier region.
    """
    def ok(lam):
        if not is_relevant(n, gamma, lam):
            return False
        p = GasParams.isentropic(n, gamma, lam)
        if not barrier_check(p).all_hold:
            return False
        if trace:
            try:
                trace_sigma(p)
            except (BarrierExit, NoNodeCapture):
                return False
        return True

    lo = 1.0 + 1e-6
    hi = lambda_circ(n, gamma)
    if not ok(lo):
        return 1.0
    if ok(hi * (1 - 2e-9)):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
