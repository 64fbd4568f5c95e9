"""Parameter validation, derived constants and lambda thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

GAMMA_MAX = 100.0
GAMMA_PLUS = 3.0 * (13.0 + 4.0 * math.sqrt(10.0))
GUARD = 1e-9


def _check_n_gamma(n, gamma):
    if n not in (2, 3):
        raise DomainError(f"n must be 2 or 3, got {n!r}")
    if not (math.isfinite(gamma) and 1.0 < gamma <= GAMMA_MAX):
        raise DomainError(f"gamma must lie in (1, {GAMMA_MAX:g}], got {gamma!r}")


def kappa_isentropic(gamma: float, lam: float) -> float:
    """Density exponent that makes the flow globally isentropic.

    Returns ``-2 (lam - 1) / (gamma - 1)``.
    """
    if not (math.isfinite(gamma) and gamma > 1.0):
        raise DomainError(f"gamma must exceed 1, got {gamma!r}")
    if not (math.isfinite(lam) and lam > 1.0):
        raise DomainError(f"lambda must exceed 1, got {lam!r}")
    return -2.0 * (lam - 1.0) / (gamma - 1.0)


@dataclass(frozen=True)
class GasParams:
    """Similarity parameter tuple ``(n, gamma, lam, kappa)``."""

    n: int
    gamma: float
    lam: float
    kappa: float

    def __post_init__(self):
        _check_n_gamma(self.n, self.gamma)
        if not (math.isfinite(self.lam) and self.lam > 1.0):
            raise DomainError(f"lambda must exceed 1, got {self.lam!r}")
        if not math.isfinite(self.kappa):
            raise DomainError("kappa must be finite")

    @classmethod
    def isentropic(cls, n: int, gamma: float, lam: float) -> "GasParams":
        """Build the tuple with ``kappa`` set to its isentropic value."""
        _check_n_gamma(n, gamma)
        return cls(int(n), float(gamma), float(lam), kappa_isentropic(gamma, lam))

    @property
    def is_isentropic(self) -> bool:
        return self.kappa == kappa_isentropic(self.gamma, self.lam)

    @property
    def derived(self) -> "DerivedConstants":
        return DerivedConstants.from_params(self)


@dataclass(frozen=True)
class DerivedConstants:
    """Scalars derived from a :class:`GasParams` tuple.

    ``A`` and ``B`` are the coefficients of the chart near ``V = V_star``,
    ``K`` is the factor in the product form of the Wronskian.
    """

    m: int
    mu: float
    eps: float
    V_star: float
    k1: float
    k2: float
    k3: float
    alpha: float
    A: float
    B: float
    K: float

    @classmethod
    def from_params(cls, p: GasParams) -> "DerivedConstants":
        n, g, lam, kap = p.n, p.gamma, p.lam, p.kappa
        m = n - 1
        mu = lam - 1.0
        eps = g - 1.0
        if p.is_isentropic:
            # exact cancellations for the isentropic exponent
            V_star = -2.0 * mu / (n * eps)
            alpha = 0.0
        else:
            V_star = (kap - 2.0 * mu) / (n * g)
            alpha = (mu + kap * eps / 2.0) / g
        k1 = 1.0 + m * eps / 2.0
        k2 = (m * eps + (g - 3.0) * mu) / 2.0
        k3 = eps * mu / 2.0
        if alpha == 0.0:
            A = 2.0
        elif V_star == -1.0:
            A = math.inf
        else:
            A = 2.0 * (1.0 + alpha / (1.0 + V_star))
        B = V_star * (1.0 + V_star) * (lam + V_star)
        K = m * (n * eps + 2.0)
        return cls(m, mu, eps, V_star, k1, k2, k3, alpha, A, B, K)


@dataclass(frozen=True)
class ThresholdReport:
    """Upper bounds on lambda for fixed ``(n, gamma)``.

    ``q_n_positive`` and ``relevant`` are ``None`` when no lambda was given.
    """

    n: int
    gamma: float
    lambda_tilde: float
    lambda_hat: float
    lambda_check: float
    lambda_star: float
    lambda_circ: float
    q_n_positive: bool | None = None
    relevant: bool | None = None


def lambda_tilde(n: int, gamma: float) -> float:
    """Bound from finiteness of the local mass, momentum and energy."""
    return 1.0 + 0.5 * n * (1.0 - 1.0 / gamma)


def lambda_hat(n: int, gamma: float) -> float:
    """Lower root of the discriminant of the triple-point quadratic."""
    eps = gamma - 1.0
    return 1.0 + (n - 1) * eps / ((gamma + 1.0) + math.sqrt(8.0 * eps))


def lambda_check(n: int, gamma: float) -> float:
    """Upper root of the same discriminant (``inf`` at ``gamma = 3``)."""
    eps = gamma - 1.0
    den = (gamma + 1.0) - math.sqrt(8.0 * eps)
    if abs(den) < 1e-14:
        return math.inf
    return 1.0 + (n - 1) * eps / den


def lambda_star(n: int, gamma: float) -> float:
    if n == 3 and gamma >= GAMMA_PLUS:
        return lambda_tilde(3, gamma)
    return lambda_hat(n, gamma)


def lambda_circ(n: int, gamma: float) -> float:
    """Largest lambda for which ``V_4 < V_+`` is guaranteed."""
    if n == 2:
        if gamma <= 2.0:
            return lambda_hat(2, gamma)
        return gamma * math.sqrt(2.0) / (gamma + math.sqrt(2.0) - 1.0)
    if gamma <= 5.0 / 3.0:
        return lambda_star(3, gamma)
    return (3.0 * gamma - 1.0) / (math.sqrt(3.0) * (gamma - 1.0) + 2.0)


def q_n(n: int, gamma: float, lam: float) -> float:
    """Scaled discriminant of the triple-point quadratic."""
    m, eps, mu = n - 1, gamma - 1.0, lam - 1.0
    return (eps - 2.0) ** 2 * mu**2 - 2.0 * m * eps * (eps + 2.0) * mu + m**2 * eps**2


def lambda_thresholds(n: int, gamma: float, lam: float | None = None) -> ThresholdReport:
    """Evaluate every lambda threshold for ``(n, gamma)``.

    If ``lam`` is given, the report also carries the sign of ``q_n`` and
    the relevance flag at that lambda.
    """
    _check_n_gamma(n, gamma)
    q_pos = rel = None
    if lam is not None:
        q_pos = q_n(n, gamma, lam) > 0.0
        rel = is_relevant(n, gamma, lam)
    return ThresholdReport(
        n=n,
        gamma=gamma,
        lambda_tilde=lambda_tilde(n, gamma),
        lambda_hat=lambda_hat(n, gamma),
        lambda_check=lambda_check(n, gamma),
        lambda_star=lambda_star(n, gamma),
        lambda_circ=lambda_circ(n, gamma),
        q_n_positive=q_pos,
        relevant=rel,
    )


def discriminant_sides(n: int, gamma: float, lam: float) -> tuple[float, float]:
    """Left and right sides of the inequality equivalent to ``R^2 > 0`` at P9."""
    _check_n_gamma(n, gamma)
    g, mu = gamma, lam - 1.0
    q = q_n(n, gamma, lam)
    if q < 0.0:
        raise DomainError(f"q_{n} = {q:.3e} < 0: parameters outside the admissible band")
    sq = math.sqrt(q)
    if n == 2:
        lhs = 4.0 * (g - 2.0) * ((g + 1.0) * mu - (g - 1.0)) * sq
        rhs = (
            (-4.0 * g**3 + 25.0 * g**2 - 34.0 * g + 1.0) * mu**2
            + 2.0 * (g**2 - 1.0) * (4.0 * g - 3.0) * mu
            - (4.0 * g - 9.0) * (g - 1.0) ** 2
        )
    else:
        lhs = (3.0 * g - 5.0) * ((g + 1.0) * mu - 2.0 * (g - 1.0)) * sq
        rhs = (
            -(3.0 * g - 5.0) * (g**2 - 5.0 * g + 2.0) * mu**2
            + 12.0 * (g - 1.0) ** 2 * (g + 1.0) * mu
            - 4.0 * (3.0 * g - 5.0) * (g - 1.0) ** 2
        )
    return lhs, rhs


def discriminant_positive(n: int, gamma: float, lam: float) -> bool:
    """Whether the node discriminant at P9 is positive."""
    lhs, rhs = discriminant_sides(n, gamma, lam)
    return lhs < rhs


def is_relevant(n: int, gamma: float, lam: float) -> bool:
    """``1 < lam < lambda_circ`` (with a guard band) and ``R^2 > 0`` at P9."""
    _check_n_gamma(n, gamma)
    if not (math.isfinite(lam) and lam > 1.0 + GUARD):
        return False
    if lam >= lambda_circ(n, gamma) * (1.0 - GUARD):
        return False
    try:
        return discriminant_positive(n, gamma, lam)
    except DomainError:
        return False
