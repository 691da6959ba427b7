"""Parameter arithmetic for the two convergence regimes.

``which=1`` is the pathwise regime (sup-deviation in probability), ``which=2``
the relative-entropy regime (strong L1 convergence of marginals).

Floats are read as the decimals they print as and all arithmetic is done in
:class:`fractions.Fraction`, so boundary cases such as ``m = (1+θ)/(1-2θ)``
are decided exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from numbers import Real


class RegimeError(ValueError):
    pass


class InfeasibleError(RegimeError):
    def __init__(self, msg: str, reasons: list[str] | None = None):
        super().__init__(msg)
        self.reasons = reasons or [msg]


@dataclass(frozen=True)
class Check:
    name: str
    lhs: Real
    relation: str
    rhs: Real

    @property
    def passed(self) -> bool:
        a, b = self.lhs, self.rhs
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[self.relation]

    def describe(self) -> str:
        return f"{self.name}: {float(self.lhs):.6g} {self.relation} {float(self.rhs):.6g}"


@dataclass(frozen=True)
class Verdict:
    which: int
    checks: tuple[Check, ...]

    @property
    def feasible(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def violations(self) -> list[str]:
        return [c.describe() for c in self.checks if not c.passed]


@dataclass(frozen=True)
class Interval:
    lo: Real
    hi: Real
    lo_open: bool = True
    hi_open: bool = True

    @property
    def empty(self) -> bool:
        if self.lo_open or self.hi_open:
            return not self.lo < self.hi
        return not self.lo <= self.hi

    def __contains__(self, x) -> bool:
        above = self.lo < x if self.lo_open else self.lo <= x
        below = x < self.hi if self.hi_open else x <= self.hi
        return above and below

    @property
    def midpoint(self):
        return (self.lo + self.hi) / 2


def exact(x):
    """Read a float as the decimal it prints as, so 0.4 means 2/5."""
    if isinstance(x, float):
        return Fraction(repr(x))
    return x


def _which(which: int) -> int:
    if which not in (1, 2):
        raise RegimeError(f"which must be 1 or 2, got {which}")
    return which


def m_threshold(theta):
    return (1 + theta) / (1 - 2 * theta)


def check_feasible(theta, alpha, m, which: int = 1) -> Verdict:
    """Constraints on ``(θ, α, m)``: ``m > (1+θ)/(1-2θ)`` when ``which=1``, ``>=`` when ``which=2``."""
    _which(which)
    theta, alpha, m = exact(theta), exact(alpha), exact(m)
    checks = [
        Check("theta > 0", theta, ">", 0),
        Check("theta < 1/2", theta, "<", Fraction(1, 2)),
        Check("alpha > 0", alpha, ">", 0),
        Check("alpha < theta/2", alpha, "<", theta / 2),
        Check("m >= 1", m, ">=", 1),
    ]
    if int(m) != m:
        checks.append(Check("m integer", m, "<=", int(m)))
    if 0 < theta < Fraction(1, 2):
        rel = ">" if which == 1 else ">="
        checks.append(Check("m vs (1+theta)/(1-2theta)", m, rel, m_threshold(theta)))
    return Verdict(which, tuple(checks))


def _require(theta, alpha, m, which):
    v = check_feasible(theta, alpha, m, which)
    if not v.feasible:
        raise InfeasibleError("infeasible (theta, alpha, m): " + "; ".join(v.violations), v.violations)


def lln_slack(theta, alpha, m):
    """``-2α + m(1-2θ) - 1``, the numerator shared by the γ and η bounds."""
    theta, alpha, m = exact(theta), exact(alpha), exact(m)
    return -2 * alpha + m * (1 - 2 * theta) - 1


def gamma_terms(theta, alpha, m, which: int = 1) -> tuple:
    theta, alpha, m = exact(theta), exact(alpha), exact(m)
    first = alpha / 3 if _which(which) == 1 else 2 * alpha / 7
    return first, lln_slack(theta, alpha, m) / (4 * m + 4)


def gamma_interval(theta, alpha, m, which: int = 1) -> Interval:
    _require(theta, alpha, m, which)
    bound = min(gamma_terms(theta, alpha, m, which))
    iv = Interval(0, bound)
    if iv.empty:
        raise InfeasibleError(f"gamma interval (0, {float(bound):.6g}) is empty")
    return iv


def eta_terms(theta, alpha, m, gamma) -> tuple:
    theta, alpha, m, gamma = exact(theta), exact(alpha), exact(m), exact(gamma)
    return theta - 2 * alpha, -(4 * m + 4) * gamma + lln_slack(theta, alpha, m)


def eta_interval(theta, alpha, m, gamma, which: int = 1) -> Interval:
    """``(0, cap]`` when ``which=1``; ``(5γ, cap)`` when ``which=2``."""
    gamma = exact(gamma)
    g_iv = gamma_interval(theta, alpha, m, which)
    if gamma not in g_iv:
        raise RegimeError(f"gamma={float(gamma):.6g} outside (0, {float(g_iv.hi):.6g})")
    cap = min(eta_terms(theta, alpha, m, gamma))
    iv = Interval(0, cap, hi_open=False) if which == 1 else Interval(5 * gamma, cap)
    if iv.empty:
        raise InfeasibleError(f"eta interval ({float(iv.lo):.6g}, {float(cap):.6g}) is empty")
    return iv


def beta_terms(alpha, gamma, eta) -> tuple:
    alpha, gamma, eta = exact(alpha), exact(gamma), exact(eta)
    return 2 * alpha / gamma - 6, eta / gamma - 4


def beta_bound(alpha, gamma, eta):
    b = min(beta_terms(alpha, gamma, eta))
    if not b > 1:
        raise InfeasibleError(f"beta bound {float(b):.6g} is not > 1")
    return b


@dataclass(frozen=True)
class RegimeParams:
    theta: Real
    alpha: Real
    m: int
    gamma: Real
    eta: Real
    N: int
    eps: float
    which: int
    beta: Real | None = None
    gamma_hi: Real | None = None
    eta_lo: Real | None = None
    eta_hi: Real | None = None
    checks: tuple[Check, ...] = field(default=(), repr=False)

    @property
    def threshold(self) -> float:
        """Deviation threshold ``N^{-α}``."""
        return self.N ** (-float(self.alpha))

    def as_row(self) -> dict:
        row = {k: v for k, v in asdict(self).items() if k != "checks"}
        return {k: (float(v) if isinstance(v, Fraction) else v) for k, v in row.items()}


def certificate(p: RegimeParams) -> list[Check]:
    """Every inequality of the chosen regime, evaluated at ``p``."""
    th, al, m, g, e = p.theta, p.alpha, p.m, p.gamma, p.eta
    checks = list(check_feasible(th, al, m, p.which).checks)
    gt = gamma_terms(th, al, m, p.which)
    et = eta_terms(th, al, m, g)
    checks += [
        Check("gamma > 0", g, ">", 0),
        Check("gamma < " + ("alpha/3" if p.which == 1 else "2alpha/7"), g, "<", gt[0]),
        Check("gamma < (-2alpha+m(1-2theta)-1)/(4m+4)", g, "<", gt[1]),
        Check("eta > " + ("0" if p.which == 1 else "5gamma"), e, ">", 0 if p.which == 1 else 5 * g),
    ]
    rel = "<=" if p.which == 1 else "<"
    checks += [
        Check("eta vs theta-2alpha", e, rel, et[0]),
        Check("eta vs -(4m+4)gamma-2alpha+m(1-2theta)-1", e, rel, et[1]),
    ]
    if p.which == 2:
        bt = beta_terms(al, g, e)
        checks += [
            Check("beta > 1", p.beta, ">", 1),
            Check("beta <= 2alpha/gamma-6", p.beta, "<=", bt[0]),
            Check("beta <= eta/gamma-4", p.beta, "<=", bt[1]),
        ]
    return checks


def plan(theta, alpha, m, N: int, which: int = 1, gamma=None, eta=None) -> RegimeParams:
    """Pick γ and η at their interval midpoints (unless given), β at its maximum.

    The mollifier width is ``ε = N^{-γ}``.
    """
    theta, alpha, m = exact(theta), exact(alpha), exact(m)
    g_iv = gamma_interval(theta, alpha, m, which)
    g = g_iv.midpoint if gamma is None else exact(gamma)
    e_iv = eta_interval(theta, alpha, m, g, which)
    e = e_iv.midpoint if eta is None else exact(eta)
    if e not in e_iv:
        raise RegimeError(f"eta={float(e):.6g} outside the admissible interval")
    beta = beta_bound(alpha, g, e) if which == 2 else None
    p = RegimeParams(
        theta=theta, alpha=alpha, m=int(m), gamma=g, eta=e, N=int(N),
        eps=float(N) ** (-float(g)), which=which, beta=beta,
        gamma_hi=g_iv.hi, eta_lo=e_iv.lo, eta_hi=e_iv.hi,
    )
    checks = certificate(p)
    failed = [c.describe() for c in checks if not c.passed]
    if failed:
        raise InfeasibleError("planned parameters fail: " + "; ".join(failed), failed)
    return RegimeParams(**{**p.__dict__, "checks": tuple(checks)})


def format_certificate(p: RegimeParams) -> str:
    """Aligned human-readable table followed by one JSON line."""
    checks = p.checks or tuple(certificate(p))
    w = max(len(c.name) for c in checks)
    name = "pathwise" if p.which == 1 else "relative-entropy"
    lines = [f"Regime certificate, which={p.which} ({name}), N={p.N}, eps={p.eps:.6g}"]
    for c in checks:
        lines.append(
            f"  {c.name:<{w}}  {float(c.lhs):>12.6g} {c.relation:<2} {float(c.rhs):<12.6g} "
            f"{'PASS' if c.passed else 'FAIL'}"
        )
    row = p.as_row()
    row["all_pass"] = all(c.passed for c in checks)
    lines.append(json.dumps(row, sort_keys=True))
    return "\n".join(lines)
