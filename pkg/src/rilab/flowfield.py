"""Physical fields reconstructed from an assembled similarity trajectory.

With ``x = t / r**lam`` the flow is ``rho = r**kappa R(x)``,
``u = -(r / (lam t)) V(x)`` and ``c = -(r / (lam t)) C(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .errors import AtSingularity, DivergentIntegral, DomainError, NotThroughOrigin, VacuumEncounter
from .integrator import Trajectory, origin_limits
from .params import GasParams
from .phaseplane import evaluate_FGD

SONIC_BAND = 1e-6


@dataclass(frozen=True)
class CollapseProfile:
    """Limits of ``V/x`` and ``C/x`` at ``x = 0`` and the collapse amplitudes."""

    nu: float
    omega: float
    ell: float | None
    vertical: bool

    def u_coefficient(self, lam: float) -> float:
        """Coefficient of ``u(0, r) = coef * r**(1 - lam)``."""
        return -self.nu / lam

    def c_coefficient(self, lam: float) -> float:
        """Coefficient of ``c(0, r) = coef * r**(1 - lam)``."""
        return -self.omega / lam


def collapse_profile(traj: Trajectory, vertical: bool | None = None) -> CollapseProfile:
    """Collapse limits ``nu``, ``omega`` and ``ell = omega / nu``.

    For the vertical branch ``nu`` is set to 0 and ``ell`` to ``None``.
    """
    if "P1" not in (traj.start, traj.end) and not np.any(traj.xsign == 0):
        raise NotThroughOrigin(f"branch {traj.branch} does not contain P1")
    if vertical is None:
        vertical = traj.meta.get("ell", 0.0) is None
    part = traj
    if np.any(traj.xsign == 0) and "P1" not in (traj.start, traj.end):
        i0 = int(np.flatnonzero(traj.xsign == 0)[0])
        part = traj.take(slice(i0, None))
        part.start = "P1"
    nu, omega = origin_limits(part)
    if vertical:
        return CollapseProfile(0.0, omega, None, True)
    return CollapseProfile(nu, omega, omega / nu, False)


def density_similarity(C, x, c0: float, gamma: float):
    """``R = ((C/x)^2 / c0)**(1/(gamma-1))`` from the adiabatic integral."""
    C = np.asarray(C, dtype=float)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = C / x
    if np.any(~np.isfinite(q)) or np.any(q == 0.0):
        raise VacuumEncounter("C/x vanished or is undefined")
    return (q * q / c0) ** (1.0 / (gamma - 1.0))


@dataclass(frozen=True)
class FlowSample:
    t: np.ndarray
    r: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    c: np.ndarray
    p: np.ndarray
    e: np.ndarray
    S_proxy: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        """Temperature proxy, reported as the specific internal energy."""
        return self.e


class _Side:
    """Cubic Hermite interpolation of (V, C) in ``ln|x|`` on one side of ``x = 0``.

    Node slopes come from the similarity ODE; within ``SONIC_BAND`` of the
    sonic lines, where ``G/D`` and ``F/D`` are ill-conditioned, the monotone
    PCHIP slopes are used instead.
    """

    def __init__(self, lnx, V, C, nu, omega, V_star, lam, sign, params=None):
        self.lnx = lnx
        self.sign = sign
        dV = PchipInterpolator(lnx, V).derivative()(lnx)
        dC = PchipInterpolator(lnx, C).derivative()(lnx)
        if params is not None:
            F, G, D = evaluate_FGD(V, C, params)
            ok = np.abs(D) > SONIC_BAND
            dV[ok] = -G[ok] / (lam * D[ok])
            dC[ok] = -F[ok] / (lam * D[ok])
        self.iV = CubicHermiteSpline(lnx, V, dV, extrapolate=False)
        self.iC = CubicHermiteSpline(lnx, C, dC, extrapolate=False)
        self.nu, self.omega = nu, omega
        self.V_star, self.lam = V_star, lam
        x0 = sign * math.exp(lnx[0])
        self.x0, self.qv0, self.qc0 = x0, V[0] / x0, C[0] / x0
        self.x1 = math.exp(lnx[-1])
        self.w1, self.C1 = V[-1] - V_star, C[-1]

    def __call__(self, lx):
        lx = np.asarray(lx, dtype=float)
        V = np.asarray(self.iV(lx), dtype=float)
        C = np.asarray(self.iC(lx), dtype=float)
        lo = lx < self.lnx[0]
        if np.any(lo):
            # linear model of V/x and C/x near x = 0
            x = self.sign * np.exp(lx[lo])
            f = x / self.x0
            V[lo] = x * (self.nu + (self.qv0 - self.nu) * f)
            C[lo] = x * (self.omega + (self.qc0 - self.omega) * f)
        hi = lx > self.lnx[-1]
        if np.any(hi):
            # stable-subspace laws near the point at infinity
            ratio = np.exp(lx[hi]) / self.x1
            V[hi] = self.V_star + self.w1 * ratio ** (-2.0 / self.lam)
            C[hi] = self.C1 * ratio ** (1.0 / self.lam)
        return V, C


class FlowField:
    """Evaluator of the physical flow built from a global trajectory.

    The free constant of the adiabatic integral is fixed so that ``R = 1``
    at ``x = x9``; ``S = p / rho**gamma`` then equals ``c0 / (lam^2 gamma)``.
    """

    def __init__(self, gamma_traj: Trajectory, params: GasParams):
        if not params.is_isentropic:
            raise DomainError("field reconstruction requires the isentropic kappa")
        self.params = params
        self.traj = gamma_traj
        g = gamma_traj
        fin = np.isfinite(g.lnx) & np.isfinite(g.C) & (g.xsign != 0)
        x9 = float(g.meta.get("x9", 1.0))
        self.x9 = x9
        # anchor: the P9 sample sits at x = x9 on the lower side
        d = params.derived
        lower = fin & (g.xsign > 0)
        upper = fin & (g.xsign < 0)
        i0 = int(np.flatnonzero(g.xsign == 0)[0])
        lower_branch = g.take(slice(i0, None))
        lower_branch.start = "P1"
        nu, omega = origin_limits(lower_branch)
        if g.meta.get("ell", 0.0) is None:
            nu = 0.0
        self.profile = CollapseProfile(nu, omega, None if g.meta.get("ell") is None else omega / nu, g.meta.get("ell") is None)
        p9 = np.argmin(np.abs(g.lnx[lower] - math.log(x9)))
        C9 = g.C[lower][p9]
        self.c0 = (C9 / x9) ** 2
        q = g.C[fin] / g.x[fin]
        if np.any(q == 0.0) or not np.all(np.isfinite(q)):
            raise VacuumEncounter("C/x vanishes on a sampled branch")
        self.min_Cx = float(np.min(np.abs(q)))
        lam = params.lam
        self.sides = {
            1: _Side(g.lnx[lower], g.V[lower], g.C[lower], nu, omega, d.V_star, lam, 1.0, params),
            -1: _Side(g.lnx[upper][::-1], g.V[upper][::-1], g.C[upper][::-1], nu, omega, d.V_star, lam, -1.0, params),
        }

    @property
    def R0(self) -> float:
        """``R`` at ``x = 0``."""
        return float((self.profile.omega**2 / self.c0) ** (1.0 / (self.params.gamma - 1.0)))

    @property
    def entropy(self) -> float:
        """Exact value of ``p / rho**gamma``."""
        return self.c0 / (self.params.lam**2 * self.params.gamma)

    def similarity(self, x):
        """``(V, C, R)`` at similarity coordinates ``x`` (``x = 0`` allowed)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        V = np.zeros_like(x)
        C = np.zeros_like(x)
        R = np.full_like(x, self.R0)
        for sg, side in self.sides.items():
            m = np.sign(x) == sg
            if np.any(m):
                Vs, Cs = side(np.log(np.abs(x[m])))
                V[m], C[m] = Vs, Cs
                R[m] = density_similarity(Cs, x[m], self.c0, self.params.gamma)
        return V, C, R

    def evaluate(self, t, r) -> FlowSample:
        """Physical state on a grid of ``(t, r)`` (broadcast)."""
        t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
        t = t.ravel()
        r = r.ravel()
        if np.any(r < 0.0):
            raise DomainError("radius must be non-negative")
        if np.any((t == 0.0) & (r == 0.0)):
            raise AtSingularity("(t, r) = (0, 0) is the collapse point")
        p = self.params
        lam, g, kap = p.lam, p.gamma, p.kappa
        rho = np.empty_like(t)
        u = np.empty_like(t)
        c = np.empty_like(t)
        z = t == 0.0
        if np.any(z):
            rz = r[z]
            amp = rz ** (1.0 - lam) / lam
            u[z] = -self.profile.nu * amp
            c[z] = -self.profile.omega * amp
            rho[z] = self.R0 * rz**kap
        nz = ~z
        if np.any(nz):
            tt, rr = t[nz], r[nz]
            x = np.empty_like(tt)
            pos = rr > 0.0
            x[pos] = tt[pos] / rr[pos] ** lam
            V, C, R = self.similarity(np.where(pos, x, 1.0))
            fac = rr / (lam * tt)
            u[nz] = -fac * V
            c[nz] = -fac * C
            with np.errstate(divide="ignore"):
                rho[nz] = rr**kap * R
            if np.any(~pos):
                # r = 0 at t != 0: limits V -> V_star, C r -> finite
                self._center(tt[~pos], rho, u, c, np.flatnonzero(nz)[~pos])
        pr = rho * c * c / g
        e = c * c / (g * (g - 1.0))
        return FlowSample(t, r, rho, u, c, pr, e, pr / rho**g)

    def _center(self, tt, rho, u, c, idx):
        lam, g = self.params.lam, self.params.gamma
        for k, t in zip(idx, tt):
            side = self.sides[1 if t > 0 else -1]
            # C ~ C1 (|x|/x1)**(1/lam) as |x| -> inf keeps c finite at r = 0
            cc = -side.C1 * (abs(t) / side.x1) ** (1.0 / lam) / (lam * t)
            c[k] = cc
            u[k] = 0.0
            rho[k] = (cc * cc / (g * self.entropy)) ** (1.0 / (g - 1.0))


def verify_isentropy(field: FlowField, t, r) -> float:
    """Maximum relative deviation of ``p / rho**gamma`` from its exact value."""
    fs = field.evaluate(t, r)
    return float(np.max(np.abs(fs.S_proxy / field.entropy - 1.0)))


def exponent_check(params: GasParams) -> tuple[bool, bool]:
    """``(kappa + n > 0, lam < 1 + (kappa + n)/2)``."""
    s = params.kappa + params.n
    return s > 0.0, params.lam < 1.0 + 0.5 * s


def _gl_integrate(f, a, b, panels, order=8):
    """Composite Gauss-Legendre in ``ln r`` over ``[a, b]``."""
    xg, wg = leggauss(order)
    edges = np.linspace(math.log(a), math.log(b), panels + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    s = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xg[None, :]
    r = np.exp(s).ravel()
    vals = f(r).reshape(panels, order, -1)
    jac = (0.5 * (hi - lo) * np.exp(s))[:, :, None]
    return np.sum(vals * jac * wg[None, :, None], axis=(0, 1))


@dataclass(frozen=True)
class Integrals:
    mass: float
    momentum: float
    energy: float
    signed_momentum: float
    refinement_error: float


def conserved_integrals(field: FlowField, t: float, r_max: float, panels: int = 60,
                        inner: float = 1e-8) -> Integrals:
    """Local mass, momentum magnitude and energy on ``(0, r_max)``.

    The integrals over ``(r_max * inner, r_max)`` use composite
    Gauss-Legendre on logarithmic panels; below that the integrand is
    continued by its local power law. ``refinement_error`` is the relative
    difference against ten times as many panels.
    """
    p = field.params
    ok1, ok2 = exponent_check(p)
    if not (ok1 and ok2):
        raise DivergentIntegral(f"exponent check failed (kappa+n>0: {ok1}, lambda bound: {ok2})")
    if r_max <= 0.0:
        raise DomainError("r_max must be positive")
    m = p.n - 1

    def integrand(r):
        fs = field.evaluate(np.full_like(r, t), r)
        rm = r**m
        return np.stack([
            fs.rho * rm,
            fs.rho * np.abs(fs.u) * rm,
            fs.rho * (0.5 * fs.u**2 + fs.e) * rm,
            fs.rho * fs.u * rm,
        ], axis=-1)

    a = r_max * inner

    def total(npan):
        body = _gl_integrate(integrand, a, r_max, npan)
        f1 = integrand(np.array([a]))[0]
        f2 = integrand(np.array([a * 1.01]))[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            expo = np.log(np.abs(f2) / np.abs(f1)) / math.log(1.01)
        tail = np.where(f1 != 0.0, f1 * a / (expo + 1.0), 0.0)
        if np.any((f1 != 0.0) & (expo <= -1.0)):
            raise DivergentIntegral("integrand not integrable at r = 0")
        return body + tail

    coarse = total(panels)
    fine = total(10 * panels)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(fine != 0.0, np.abs(coarse - fine) / np.abs(fine), np.abs(coarse - fine))
    return Integrals(float(fine[0]), float(fine[1]), float(fine[2]), float(fine[3]), float(np.max(rel)))


def density_rate_gradient_part(field: FlowField, r) -> np.ndarray:
    """``-rho u_r`` at ``t = 0``: ``-(1/lam) r**(kappa-lam) R(0) (lam-1) nu``."""
    p = field.params
    r = np.asarray(r, dtype=float)
    return -(1.0 / p.lam) * r ** (p.kappa - p.lam) * field.R0 * (p.lam - 1.0) * field.profile.nu


def material_density_rate(field: FlowField, r) -> np.ndarray:
    """Full ``rho_t + u rho_r = -rho (u_r + m u / r)`` at ``t = 0``.

    Equals ``(nu / lam) (n - lam) R(0) r**(kappa - lam)``.
    """
    p = field.params
    r = np.asarray(r, dtype=float)
    return (field.profile.nu / p.lam) * (p.n - p.lam) * field.R0 * r ** (p.kappa - p.lam)


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.abs(x)), np.log(np.abs(y)), 1)[0])


def asymptotics_report(field: FlowField, r=None) -> dict:
    """Fitted blowup exponents at ``t = 0`` and small-``r`` behavior at ``t = +-1``."""
    p = field.params
    r = np.logspace(-6, -2, 41) if r is None else np.asarray(r)
    fs0 = field.evaluate(np.zeros_like(r), r)
    out = {
        "rho_exponent": {"value": loglog_slope(r, fs0.rho), "target": p.kappa},
        "c_exponent": {"value": loglog_slope(r, fs0.c), "target": 1.0 - p.lam},
    }
    if field.profile.nu != 0.0:
        out["u_exponent"] = {"value": loglog_slope(r, fs0.u), "target": 1.0 - p.lam}
    for t in (1.0, -1.0):
        fs = field.evaluate(np.full_like(r, t), r)
        out[f"u_over_r_t{t:+g}"] = {
            "value": float(fs.u[0] / r[0]),
            "target": float(-p.derived.V_star / (p.lam * t)),
        }
        out[f"c_bounded_t{t:+g}"] = {"value": float(np.max(np.abs(fs.c))), "target": None}
    return out
