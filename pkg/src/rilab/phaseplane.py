"""Similarity field, critical points and their classification.

The similarity ODEs read ``V' = -G/(lam x D)`` and ``C' = -F/(lam x D)``
with polynomial numerators ``F``, ``G`` and the sonic determinant
``D = (1+V)^2 - C^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateCriticalPoint, DomainError, OrderingViolation
from .params import GasParams, is_relevant

PRESENCE_TOL = 1e-12
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class PhasePoint:
    V: float
    C: float


@dataclass(frozen=True)
class PartialDerivatives:
    F_V: float
    F_C: float
    G_V: float
    G_C: float


@dataclass(frozen=True)
class CriticalPoint:
    """A critical point of the similarity field.

    ``at_infinity`` marks the points ``P+inf``/``P-inf`` whose ``C``
    coordinate is stored as ``+-inf``; they are handled in the chart
    ``w = V - V_star``, ``z = C**-2``.
    """

    label: str
    location: PhasePoint | None
    kind: str
    at_infinity: bool = False
    W: float | None = None
    R2: float | None = None
    L1: float | None = None
    L2: float | None = None
    E1: float | None = None
    E2: float | None = None

    @property
    def present(self) -> bool:
        return self.kind not in ("absent", "degenerate")


def evaluate_FGD(V, C, params: GasParams):
    """Return ``(F, G, D)`` at ``(V, C)``; arrays broadcast."""
    d = params.derived
    lam, n = params.lam, params.n
    V = np.asarray(V, dtype=float)
    C = np.asarray(C, dtype=float)
    v = 1.0 + V
    C2 = C * C
    D = v * v - C2
    G = n * C2 * (V - d.V_star) - V * v * (lam + V)
    if d.alpha == 0.0:
        bracket = C2
    else:
        bracket = C2 * (1.0 + d.alpha / v)
    F = C * (bracket - d.k1 * v * v + d.k2 * v - d.k3)
    if F.ndim == 0:
        return float(F), float(G), float(D)
    return F, G, D


def partials(V, C, params: GasParams) -> PartialDerivatives:
    """Analytic partial derivatives of ``F`` and ``G``."""
    d = params.derived
    lam, n = params.lam, params.n
    V = np.asarray(V, dtype=float)
    C = np.asarray(C, dtype=float)
    v = 1.0 + V
    C2 = C * C
    a = d.alpha
    F_C = 3.0 * C2 * (1.0 + a / v) - d.k1 * v * v + d.k2 * v - d.k3
    F_V = C * (-C2 * a / (v * v) - 2.0 * d.k1 * v + d.k2)
    G_C = 2.0 * n * C * (V - d.V_star)
    G_V = n * C2 - (v * (lam + V) + V * (lam + V) + V * v)
    out = [F_V, F_C, G_V, G_C]
    if F_V.ndim == 0:
        out = [float(x) for x in out]
    return PartialDerivatives(*out)


def g_curve(V, params: GasParams):
    """``C^2`` along the nontrivial branch of ``{G = 0}``."""
    d = params.derived
    V = np.asarray(V, dtype=float)
    return V * (1.0 + V) * (params.lam + V) / (params.n * (V - d.V_star))


def triple_point_V(params: GasParams) -> tuple[float, float] | None:
    """``(V_-, V_+)`` where ``{G = 0}`` meets the sonic lines, or ``None``.

    The radicand is compared with ``-PRESENCE_TOL``; within the tolerance
    the double root is returned.
    """
    n, g, lam, kap = params.n, params.gamma, params.lam, params.kappa
    m, mu = n - 1, lam - 1.0
    b = (g - 2.0) * mu + kap - m * g
    rad = (g - 2.0) ** 2 * mu**2 - 2.0 * (g * m * (g + 2.0) - kap * (g - 2.0)) * mu + (g * m + kap) ** 2
    scale = max(1.0, b * b)
    if rad < -PRESENCE_TOL * scale:
        return None
    s = math.sqrt(max(rad, 0.0))
    return (b - s) / (2.0 * m * g), (b + s) / (2.0 * m * g)


def critical_points(params: GasParams, check_ordering: bool | None = None) -> dict[str, CriticalPoint]:
    """Locate ``P1``-``P9`` and ``P+inf``/``P-inf`` in closed form.

    Points whose radicand is negative are returned with kind ``absent``;
    radicands within ``PRESENCE_TOL`` of zero give kind ``degenerate``.
    Unless ``check_ordering`` is False, the ordering
    ``-1 < V_-, V_4 < V_+ < V_star < 0`` is enforced for relevant
    parameters and :class:`OrderingViolation` raised otherwise.
    """
    if not params.is_isentropic:
        raise DomainError("critical points are located for the isentropic kappa only")
    n, g, lam = params.n, params.gamma, params.lam
    d = params.derived
    pts: dict[str, CriticalPoint] = {}
    pts["P1"] = CriticalPoint("P1", PhasePoint(0.0, 0.0), "unclassified")
    pts["P2"] = CriticalPoint("P2", PhasePoint(-1.0, 0.0), "unclassified")
    pts["P3"] = CriticalPoint("P3", PhasePoint(-lam, 0.0), "unclassified")

    V4 = -2.0 * lam / (2.0 + n * (g - 1.0))
    g4 = float(g_curve(V4, params))
    if g4 < -PRESENCE_TOL:
        pts["P4"] = CriticalPoint("P4", None, "absent")
        pts["P5"] = CriticalPoint("P5", None, "absent")
    elif g4 <= PRESENCE_TOL:
        pts["P4"] = CriticalPoint("P4", PhasePoint(V4, 0.0), "degenerate")
        pts["P5"] = CriticalPoint("P5", PhasePoint(V4, 0.0), "degenerate")
    else:
        C4 = math.sqrt(g4)
        pts["P4"] = CriticalPoint("P4", PhasePoint(V4, C4), "unclassified")
        pts["P5"] = CriticalPoint("P5", PhasePoint(V4, -C4), "unclassified")

    roots = triple_point_V(params)
    labels = {"P6": (0, 1.0), "P7": (0, -1.0), "P8": (1, 1.0), "P9": (1, -1.0)}
    for lab, (i, sgn) in labels.items():
        if roots is None:
            pts[lab] = CriticalPoint(lab, None, "absent")
            continue
        Vr = roots[i]
        gv = float(g_curve(Vr, params)) if Vr != d.V_star else -1.0
        if gv < -PRESENCE_TOL:
            pts[lab] = CriticalPoint(lab, None, "absent")
            continue
        # on the sonic lines C^2 = (1 + V)^2
        Cr = sgn * abs(1.0 + Vr)
        kind = "degenerate" if roots[1] - roots[0] <= PRESENCE_TOL else "unclassified"
        pts[lab] = CriticalPoint(lab, PhasePoint(Vr, Cr), kind)

    pts["P+inf"] = CriticalPoint("P+inf", PhasePoint(d.V_star, math.inf), "at-infinity-saddle", at_infinity=True)
    pts["P-inf"] = CriticalPoint("P-inf", PhasePoint(d.V_star, -math.inf), "at-infinity-saddle", at_infinity=True)

    if check_ordering is None:
        check_ordering = is_relevant(n, g, lam)
    if check_ordering:
        Vm = pts["P7"].location.V if pts["P7"].present else math.nan
        Vp = pts["P9"].location.V if pts["P9"].present else math.nan
        ok = -1.0 < Vm and -1.0 < V4 and Vm < Vp and V4 < Vp and Vp < d.V_star < 0.0
        if not ok:
            raise OrderingViolation(
                f"ordering -1 < V_-, V_4 < V_+ < V_* < 0 fails: V_-={Vm}, V_4={V4}, V_+={Vp}, V_*={d.V_star}"
            )
    return pts


def linearization(p: PhasePoint, params: GasParams) -> tuple[float, float, float]:
    """Wronskian ``W``, discriminant ``R2`` and trace ``F_C + G_V`` at ``p``."""
    pd = partials(p.V, p.C, params)
    W = pd.F_C * pd.G_V - pd.F_V * pd.G_C
    tr = pd.F_C + pd.G_V
    return W, tr * tr - 4.0 * W, tr


def classify(cp: CriticalPoint, params: GasParams) -> CriticalPoint:
    """Fill ``W``, ``R2``, slopes and exponents and assign the kind.

    The exponents satisfy ``|E1| < |E2|`` and ``L1`` uses the same sign
    choice as ``E1``; trajectories entering a node generically do so with
    slope ``L1``.
    """
    if cp.at_infinity:
        return replace(cp, kind="at-infinity-saddle")
    if not cp.present:
        return cp
    if cp.label == "P1":
        return replace(cp, kind="star")
    if cp.label in ("P2", "P3"):
        return cp
    p = cp.location
    pd = partials(p.V, p.C, params)
    W = pd.F_C * pd.G_V - pd.F_V * pd.G_C
    tr = pd.F_C + pd.G_V
    R2 = tr * tr - 4.0 * W
    scale = max(tr * tr, abs(W), 1e-300)
    if abs(R2) <= DEGENERATE_TOL * scale:
        raise DegenerateCriticalPoint(f"{cp.label}: discriminant {R2:.3e} vanishes")
    if R2 < 0.0:
        return replace(cp, W=W, R2=R2, kind="focus")
    R = math.sqrt(R2)
    cand = []
    for s in (-1.0, 1.0):
        E = (tr + s * R) / (2.0 * pd.G_C)
        L = (pd.F_C - pd.G_V + s * R) / (2.0 * pd.G_C)
        cand.append((abs(E), E, L))
    cand.sort(key=lambda t: t[0])
    (_, E1, L1), (_, E2, L2) = cand
    kind = "node" if W > 0.0 else "saddle"
    return replace(cp, W=W, R2=R2, E1=E1, E2=E2, L1=L1, L2=L2, kind=kind)


def classified_points(params: GasParams, check_ordering: bool | None = None) -> dict[str, CriticalPoint]:
    """:func:`critical_points` followed by :func:`classify` on each point."""
    pts = critical_points(params, check_ordering=check_ordering)
    return {k: classify(v, params) for k, v in pts.items()}


def lazarus_W(params: GasParams, at: str) -> float:
    """Product form of the Wronskian at ``P9`` or ``P5``."""
    pts = critical_points(params, check_ordering=False)
    K = params.derived.K
    V7 = pts["P7"].location.V
    V9 = pts["P9"].location.V
    V5 = pts["P5"].location.V
    C5 = pts["P5"].location.C
    C9 = pts["P9"].location.C
    if at == "P9":
        return K * C9**2 * (V9 - V5) * (V9 - V7)
    if at == "P5":
        return K * C5**2 * (V5 - V7) * (V5 - V9)
    raise ValueError(f"product form available at P5 or P9, not {at!r}")


@dataclass(frozen=True)
class SlopeOrdering:
    """The chain ``-G_V/G_C < L1 < -F_V/F_C < -1 < 0 < L2`` at P9."""

    g_ratio: float
    L1: float
    f_ratio: float
    L2: float
    holds: bool

    def as_tuple(self):
        return (self.g_ratio, self.L1, self.f_ratio, -1.0, 0.0, self.L2)


def slope_ordering(params: GasParams) -> SlopeOrdering:
    pts = critical_points(params)
    p9 = classify(pts["P9"], params)
    pd = partials(p9.location.V, p9.location.C, params)
    gr = -pd.G_V / pd.G_C
    fr = -pd.F_V / pd.F_C
    holds = p9.kind == "node" and gr < p9.L1 < fr < -1.0 < 0.0 < p9.L2
    return SlopeOrdering(gr, p9.L1, fr, p9.L2, bool(holds))


@dataclass(frozen=True)
class InfinityChart:
    """Linearized field at ``(w, z) = (0, 0)`` for ``w = V - V_star``, ``z = C**-2``."""

    A: float
    B: float
    n: int
    lam: float

    @property
    def stable_slope(self) -> float:
        """Slope of the stable subspace ``z = slope * w``."""
        return (self.n + self.A) / self.B

    @property
    def w_exponent(self) -> float:
        """Exponent of ``|V - V_star| ~ |x|**p`` along the stable direction."""
        return -self.A / self.lam

    @property
    def c_exponent(self) -> float:
        """Exponent of ``|C| ~ |x|**p`` along the stable direction."""
        return self.A / (2.0 * self.lam)

    def linear_dzdw(self, w, z):
        return self.A * np.asarray(z) / (self.B * np.asarray(z) - self.n * np.asarray(w))


def infinity_chart_field(params: GasParams) -> InfinityChart:
    if not params.is_isentropic:
        raise DomainError("the chart near V_star is set up for the isentropic kappa only")
    d = params.derived
    return InfinityChart(d.A, d.B, params.n, params.lam)


def chart_rhs(w, z, params: GasParams, sigma: float = 1.0):
    """Full (nonlinear) field in the chart, rescaled by ``dtau = ds / z``.

    Returns ``(dw/dtau, dz/dtau, dlnx/dtau, ds/dtau)``.
    """
    d = params.derived
    lam, n = params.lam, params.n
    V = d.V_star + w
    v = 1.0 + V
    h = V * v * (lam + V)
    f = d.k1 * v * v - d.k2 * v + d.k3
    a = 1.0 + d.alpha / v
    dw = sigma * (n * w - z * h)
    dz = -2.0 * sigma * z * (a - f * z)
    dlnx = -sigma * lam * (v * v * z - 1.0)
    return dw, dz, dlnx, z
