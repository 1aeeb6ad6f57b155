"""System and error-target configuration shared by all bound modules.

K potential single-antenna users, K_a of them active (fixed or Binom(K, p_a)),
L receive antennas, blocklength n, payload J bits, per-codeword energy at most
nP with unit noise variance.  The codebook size M = 2^J only ever enters the
formulas through ln M and M^t factors, so it is kept in log form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

from . import numerics

__all__ = [
    "KnownKa",
    "RandomKa",
    "SystemParams",
    "PowerPoint",
    "ErrorTargets",
    "BoundResult",
    "PPRIME_DIVISORS",
    "pprime_grid",
    "p0_power_violation",
    "power_tail_prob",
    "eb_db",
    "binary_entropy_bits",
]

LN2 = math.log(2.0)

#: default P' = P / c search grid; near-P values matter at large n where the
#: chi-square tail sharpens.
PPRIME_DIVISORS = (1.005, 1.01, 1.02, 1.05, 1.1, 1.2, 1.5, 2.0)


@dataclass(frozen=True)
class KnownKa:
    ka: int

    def __post_init__(self):
        if self.ka < 1:
            raise ValueError("K_a must be >= 1")


@dataclass(frozen=True)
class RandomKa:
    pa: float

    def __post_init__(self):
        if not 0.0 <= self.pa <= 1.0:
            raise ValueError("p_a must lie in [0, 1]")


@dataclass(frozen=True)
class SystemParams:
    n: int
    J: int
    K: int
    L: int
    activity: KnownKa | RandomKa

    def __post_init__(self):
        if self.n < 1 or self.J < 1 or self.K < 1 or self.L < 1:
            raise ValueError("n, J, K, L must all be >= 1")
        if isinstance(self.activity, KnownKa) and self.activity.ka > self.K:
            raise ValueError(f"K_a={self.activity.ka} exceeds K={self.K}")

    @property
    def ln_m(self) -> float:
        return self.J * LN2

    @property
    def ka(self) -> int:
        if not isinstance(self.activity, KnownKa):
            raise ValueError("K_a is random for this configuration")
        return self.activity.ka

    @property
    def pa(self) -> float:
        if not isinstance(self.activity, RandomKa):
            raise ValueError("K_a is fixed for this configuration")
        return self.activity.pa

    def to_dict(self) -> dict:
        d = {"n": self.n, "J": self.J, "K": self.K, "L": self.L}
        if isinstance(self.activity, KnownKa):
            d["ka"] = self.activity.ka
        else:
            d["pa"] = self.activity.pa
        return d

    @staticmethod
    def from_dict(d: dict) -> "SystemParams":
        if "ka" in d and d.get("ka") is not None:
            act: KnownKa | RandomKa = KnownKa(int(d["ka"]))
        else:
            act = RandomKa(float(d["pa"]))
        return SystemParams(n=int(d["n"]), J=int(d["J"]), K=int(d["K"]),
                            L=int(d["L"]), activity=act)


@dataclass(frozen=True)
class PowerPoint:
    """Maximum per-symbol power P and codebook design variance P' < P."""

    P: float
    Pprime: float

    def __post_init__(self):
        if not (0.0 < self.Pprime < self.P):
            raise ValueError(f"need 0 < P' < P, got P'={self.Pprime}, P={self.P}")


@dataclass(frozen=True)
class ErrorTargets:
    """PUPE target, or a (misdetection, false-alarm) pair."""

    eps: float | None = None
    eps_md: float | None = None
    eps_fa: float | None = None

    def __post_init__(self):
        if self.eps is not None:
            if not 0.0 < self.eps < 1.0:
                raise ValueError("PUPE target must lie in (0, 1)")
            if self.eps_md is not None or self.eps_fa is not None:
                raise ValueError("give either a PUPE target or an MD/FA pair")
        else:
            if self.eps_md is None or self.eps_fa is None:
                raise ValueError("MD/FA mode needs both targets")
            for v in (self.eps_md, self.eps_fa):
                if not 0.0 < v < 1.0:
                    raise ValueError("MD/FA targets must lie in (0, 1)")

    @staticmethod
    def pupe(eps: float) -> "ErrorTargets":
        return ErrorTargets(eps=eps)

    @staticmethod
    def md_fa(eps_md: float, eps_fa: float) -> "ErrorTargets":
        return ErrorTargets(eps_md=eps_md, eps_fa=eps_fa)

    @property
    def is_pupe(self) -> bool:
        return self.eps is not None

    def vector(self) -> tuple:
        return (self.eps,) if self.is_pupe else (self.eps_md, self.eps_fa)


@dataclass
class BoundResult:
    """Value of a bound (or of a minimum-E_b search) plus diagnostics."""

    value: float
    per_t_terms: list = field(default_factory=list)
    argmin_params: dict = field(default_factory=dict)
    p: float | None = None
    eb_db: float | None = None
    feasible: bool = True
    flags: dict = field(default_factory=dict)

    def argmin_json(self) -> str:
        return json.dumps(self.argmin_params, sort_keys=True)


def pprime_grid(P: float, divisors=PPRIME_DIVISORS) -> tuple:
    return tuple(P / c for c in divisors)


def power_tail_prob(n_eff: int, energy_budget: float, pprime: float) -> float:
    """P[||c||^2 > energy budget] for c with n_eff i.i.d. CN(0, P') entries."""
    return numerics.reg_upper_gamma(n_eff, energy_budget / pprime)


def p0_power_violation(sp: SystemParams, pp: PowerPoint) -> float:
    """Power-constraint slack p0 = (number of active users) * chi-square tail.

    K_a * (1 - P(n, nP/P')) with known K_a; p_a K * (same) when K_a is
    Binom(K, p_a).
    """
    tail = power_tail_prob(sp.n, sp.n * pp.P, pp.Pprime)
    if isinstance(sp.activity, KnownKa):
        return sp.activity.ka * tail
    return sp.activity.pa * sp.K * tail


def eb_db(sp: SystemParams, P: float) -> float:
    """Energy-per-bit nP/J in dB (unit noise variance)."""
    return 10.0 * math.log10(sp.n * P / sp.J)


def binary_entropy_bits(p: float) -> float:
    """h2(p) in bits, with 0 log 0 = 0."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -(p * math.log2(p) + (1.0 - p) * math.log2(1.0 - p))
