"""Shock jumps in similarity variables and the Hugoniot locus of a trajectory.

Jump relations are imposed in the shock frame variables ``(v, c, R)`` with
``v = 1 + V``: conservation of ``R v``, ``R (v^2 + c^2/gamma)`` and
``v^2/2 + c^2/(gamma - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AtPole, DomainError, InsufficientOverlap, NoAdmissibleBranch, SonicAhead
from .params import GasParams

SONIC_TOL = 1e-14
GAP_TOL = 1e-6
MIN_LEVELS = 10
ENDPOINT_EXCLUSION = 1e-4


@dataclass(frozen=True)
class State:
    V: float
    C: float
    R: float


@dataclass(frozen=True)
class ShockPair:
    ahead: State
    behind: State
    admissible: bool
    entropy_jump: float


def entropy_proxy(C, R, gamma: float):
    """``c^2 / (gamma R^(gamma-1))`` in similarity units."""
    return np.asarray(C) ** 2 / (gamma * np.asarray(R) ** (gamma - 1.0))


def log_entropy_ratio(M2: float, gamma: float) -> float:
    """``ln(S_behind / S_ahead)`` of a normal shock with squared Mach number ``M2``.

    Weak shocks use the cubic-order series to avoid cancellation.
    """
    g = gamma
    d = M2 - 1.0
    if abs(d) < 1e-3:
        a3 = 2.0 * g * (g - 1.0) / (3.0 * (g + 1.0) ** 2)
        a4 = -2.0 * g**2 * (g - 1.0) / (g + 1.0) ** 3
        a5 = 2.0 * g * (g - 1.0) * (11.0 * g**2 + 1.0) / (5.0 * (g + 1.0) ** 4)
        return d**3 * (a3 + d * (a4 + d * a5))
    return math.log1p(2.0 * g / (g + 1.0) * d) - g * math.log1p(2.0 * d / ((g - 1.0) * M2 + 2.0))


def fluxes(s: State, gamma: float) -> np.ndarray:
    """Mass, momentum and energy fluxes of a state."""
    v, c, R = 1.0 + s.V, s.C, s.R
    return np.array([R * v, R * (v * v + c * c / gamma), 0.5 * v * v + c * c / (gamma - 1.0)])


def rh_jump(ahead: State, gamma: float, strict: bool = False) -> ShockPair:
    """Behind state of the compressive jump from ``ahead``.

    An exactly sonic ahead state returns the identity pair with
    ``admissible=False`` (or raises :class:`NoAdmissibleBranch` when
    ``strict``). Subsonic ahead states raise :class:`SonicAhead`.
    """
    if gamma <= 1.0:
        raise DomainError("gamma must exceed 1")
    v0, c0, R0 = 1.0 + ahead.V, ahead.C, ahead.R
    if R0 <= 0.0:
        raise DomainError("ahead density must be positive")
    excess = v0 * v0 - c0 * c0
    if abs(excess) <= SONIC_TOL * max(v0 * v0, c0 * c0, 1e-300):
        if strict:
            raise NoAdmissibleBranch("sonic ahead state: only the identity jump exists")
        return ShockPair(ahead, ahead, False, 0.0)
    if excess < 0.0:
        raise SonicAhead(f"ahead state is subsonic: v^2 - c^2 = {excess:.3e}")
    g = gamma
    v1 = ((g - 1.0) * v0 * v0 + 2.0 * c0 * c0) / ((g + 1.0) * v0)
    c1sq = (g - 1.0) * (0.5 * v0 * v0 + c0 * c0 / (g - 1.0) - 0.5 * v1 * v1)
    c1 = math.copysign(math.sqrt(c1sq), c0) if c0 != 0.0 else math.sqrt(c1sq)
    R1 = R0 * v0 / v1
    behind = State(v1 - 1.0, c1, R1)
    S0 = float(entropy_proxy(c0, R0, g))
    dS = S0 * math.expm1(log_entropy_ratio(v0 * v0 / (c0 * c0), g)) if c0 != 0.0 else math.inf
    below_sonic = c1 * c1 > v1 * v1
    admissible = bool(R1 > R0 and dS > 0.0 and below_sonic)
    return ShockPair(ahead, behind, admissible, dS)


def jump_residual(pair: ShockPair, gamma: float) -> float:
    """Largest relative mismatch of the three conserved fluxes."""
    fa, fb = fluxes(pair.ahead, gamma), fluxes(pair.behind, gamma)
    return float(np.max(np.abs(fa - fb) / np.maximum(np.abs(fa), 1e-300)))


def sigma_h(slope: float, gamma: float) -> float:
    """Slope of the Hugoniot locus of a curve arriving at a sonic point with ``slope``."""
    pole = (gamma - 3.0) / 4.0
    if abs(slope - pole) <= 1e-14 * max(1.0, abs(pole)):
        raise AtPole(f"slope {slope} is the pole of the slope map")
    h = 0.5 * (gamma - 1.0)
    return h + (gamma + 1.0) * (slope - h) / (gamma - 3.0 - 4.0 * slope)


@dataclass
class HugoniotLocus:
    x: np.ndarray
    V_ahead: np.ndarray
    C_ahead: np.ndarray
    R_ahead: np.ndarray
    V_behind: np.ndarray
    C_behind: np.ndarray
    R_behind: np.ndarray
    entropy_jump: np.ndarray
    admissible: np.ndarray
    endpoint: tuple[float, float]
    max_residual: float
    meta: dict

    def __len__(self):
        return len(self.x)

    def take(self, idx) -> "HugoniotLocus":
        arr = {k: getattr(self, k)[idx] for k in
               ("x", "V_ahead", "C_ahead", "R_ahead", "V_behind", "C_behind", "R_behind", "entropy_jump", "admissible")}
        return HugoniotLocus(**arr, endpoint=self.endpoint, max_residual=self.max_residual, meta=dict(self.meta))

    def to_csv(self, path) -> None:
        from .io import write_csv

        rows = zip(self.x, self.V_ahead, self.C_ahead, self.V_behind, self.C_behind, self.entropy_jump)
        write_csv(path, ["x", "V_ahead", "C_ahead", "V_behind", "C_behind", "entropy_jump"], rows)


def hugoniot_locus(sigma_traj, params: GasParams, c0: float | None = None) -> HugoniotLocus:
    """Jump every supersonic sample of the P1-P9 branch with ``0 < x < x9``.

    ``sigma_traj`` must carry anchored ``ln x``; the ahead density follows
    from the adiabatic integral with ``R = 1`` at P9 unless ``c0`` is given.
    """
    from .flowfield import density_similarity

    g = params.gamma
    tr = sigma_traj
    fin = np.isfinite(tr.lnx) & (tr.xsign > 0)
    x = tr.x[fin]
    V, C = tr.V[fin], tr.C[fin]
    if c0 is None:
        k9 = int(np.argmax(x))
        c0 = (tr.C[-1] / math.exp(tr.lnx[-1])) ** 2 if np.isfinite(tr.lnx[-1]) else (C[k9] / x[k9]) ** 2
    R = density_similarity(C, x, c0, g)
    sup = (1.0 + V) ** 2 > C * C * (1.0 + 1e-12)
    rows = []
    res = 0.0
    for xi, Vi, Ci, Ri in zip(x[sup], V[sup], C[sup], R[sup]):
        pair = rh_jump(State(Vi, Ci, Ri), g)
        res = max(res, jump_residual(pair, g))
        b = pair.behind
        rows.append((xi, Vi, Ci, Ri, b.V, b.C, b.R, pair.entropy_jump, pair.admissible))
    arr = np.array([r[:8] for r in rows]).T
    adm = np.array([r[8] for r in rows], dtype=bool)
    V9, C9 = float(tr.V[-1]), float(tr.C[-1])
    loc = HugoniotLocus(*arr, adm, (V9, C9), res, {})
    loc.meta["slope_near_endpoint"] = locus_slope(loc)
    return loc


def locus_slope(locus: HugoniotLocus, decade=(1e-7, 1e-6)) -> float:
    """Least-squares slope of the behind curve over the last decade before its endpoint."""
    V9, C9 = locus.endpoint
    r_ahead = np.hypot(locus.V_ahead - V9, locus.C_ahead - C9)
    m = (r_ahead >= decade[0] * (1 - 1e-9)) & (r_ahead <= decade[1])
    if m.sum() < 3:
        m = np.argsort(r_ahead)[:10]
    dv = locus.V_behind[m] - V9
    dc = locus.C_behind[m] - C9
    return float(np.sum(dv * dc) / np.sum(dv * dv))


@dataclass(frozen=True)
class IntersectionVerdict:
    """Outcome of comparing the locus with the P9-to-infinity branch.

    ``kind`` is ``"NoIntersection"`` or ``"Intersection"``; ``x_s`` is the
    locus parameter of the first crossing.
    """

    kind: str
    matched_levels: int
    min_gap: float | None
    min_distance: float
    x_s: float | None = None
    note: str = ""


def intersection_test(locus: HugoniotLocus, curve, tol: float = GAP_TOL,
                      exclusion: float = ENDPOINT_EXCLUSION) -> IntersectionVerdict:
    """Compare the behind curve of ``locus`` against ``curve`` at matched ``C`` levels.

    ``curve`` needs arrays ``V`` and ``C``. Locus samples within
    ``exclusion`` of the shared endpoint are ignored. Levels of the locus
    outside the ``C`` range of ``curve`` cannot meet it and count as
    separated; the minimum Euclidean distance is reported as well.
    """
    if len(locus) < MIN_LEVELS:
        raise InsufficientOverlap(f"locus has {len(locus)} samples; need at least {MIN_LEVELS}")
    V9, C9 = locus.endpoint
    Vl, Cl, xl = locus.V_behind, locus.C_behind, locus.x
    keep = np.hypot(Vl - V9, Cl - C9) > exclusion
    Vl, Cl, xl = Vl[keep], Cl[keep], xl[keep]
    Vc = np.asarray(curve.V, dtype=float)
    Cc = np.asarray(curve.C, dtype=float)
    ok = np.isfinite(Vc) & np.isfinite(Cc)
    Vc, Cc = Vc[ok], Cc[ok]
    far = np.hypot(Vc - V9, Cc - C9) > exclusion
    Vc_far, Cc_far = Vc[far], Cc[far]
    if len(Vl) == 0 or len(Vc_far) == 0:
        raise InsufficientOverlap("nothing left after excluding the shared endpoint")
    # minimum distance over a subsample of the curve
    step = max(1, len(Vc_far) // 4000)
    dmin = float(np.min(np.hypot(Vl[:, None] - Vc_far[None, ::step], Cl[:, None] - Cc_far[None, ::step])))

    order = np.argsort(Cc_far)
    Cs, Vs = Cc_far[order], Vc_far[order]
    inside = (Cl >= Cs[0]) & (Cl <= Cs[-1])
    n_match = int(inside.sum())
    if n_match == 0:
        return IntersectionVerdict("NoIntersection", 0, None, dmin, None, "C ranges do not overlap")
    if n_match < MIN_LEVELS:
        raise InsufficientOverlap(f"only {n_match} matched C levels")
    gap = Vl[inside] - np.interp(Cl[inside], Cs, Vs)
    xi = xl[inside]
    hit = np.abs(gap) < tol
    sign_change = np.flatnonzero(np.sign(gap[:-1]) * np.sign(gap[1:]) < 0)
    if hit.any() or len(sign_change):
        k = int(np.argmax(hit)) if hit.any() else int(sign_change[0])
        return IntersectionVerdict("Intersection", n_match, float(np.min(np.abs(gap))), dmin, float(xi[k]))
    j = int(np.argmin(np.abs(gap)))
    return IntersectionVerdict("NoIntersection", n_match, float(gap[j]), dmin)
