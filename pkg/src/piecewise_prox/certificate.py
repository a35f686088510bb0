"""Step-size certification from the structural constants.

Given the constants (L_g, G, F0, C, J, eps0, s0, R0, w0, d) the certificate
evaluates the decrease constants

    A      = L_g (G + sqrt(d) F0)
    kappa1 = s C w0 (eps0 - s L_g (1 - w0) (G + F0))
    kappa2 = J - 2 s F0 (G + F0)
    kappa0 = min(kappa1, kappa2)
    kappa  = kappa0 - s (s L_g (G + sqrt(d) F0) + G) (G + sqrt(d) F0)

and the admissible step-size range

    s1    = min( s0 / (G + F0),
                 eps0 / (L_g (1 - w0) (G + F0)),
                 J / (F0 G + G^2 / 2),
                 J / (2 F0 (G + F0)),
                 sup { s : kappa(s) > 0 } )
    s_max = min( s1,  eps0 / (L_g (G + sqrt(d) F0)),  1 / L_g )

+inf sentinels in C or J drop the corresponding terms: without continuous
endpoints the eps0 terms are not required, without discontinuous endpoints the
J terms vanish.  The kappa-positivity term is solved for exactly (kappa is
concave in s with kappa(0) <= 0 boundary), so the certificate guarantees that
every s < s_max makes kappa, kappa0, kappa1, kappa2 simultaneously positive.
For constants with C w0 eps0 <= G (G + sqrt(d) F0) no positive step satisfies
kappa > 0 and the certificate reports s_max = 0 (infeasible).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

__all__ = ["CertificateError", "StepSizeCertificate", "certify_step_size"]


class CertificateError(ValueError):
    pass


@dataclass(frozen=True)
class StepSizeCertificate:
    L_g: float
    G: float
    F0: float
    C: float
    J: float
    eps0: Optional[float]
    s0: float
    R0: float
    w0: float
    d: int
    A: float
    terms: dict = field(repr=False)
    s1: float
    s_max: float
    binding_term: str

    @property
    def feasible(self) -> bool:
        return self.s_max > 0.0

    def kappas(self, s: float):
        """(kappa, kappa0, kappa1, kappa2) evaluated at step size s."""
        if s <= 0:
            raise ValueError("step size must be positive")
        sqd = math.sqrt(self.d)
        if math.isinf(self.C):
            k1 = math.inf
        else:
            eps0 = self.eps0 if self.eps0 is not None else math.inf
            k1 = s * self.C * self.w0 * (eps0 - s * self.L_g * (1.0 - self.w0) * (self.G + self.F0))
        k2 = self.J - 2.0 * s * self.F0 * (self.G + self.F0) if math.isfinite(self.J) else math.inf
        k0 = min(k1, k2)
        if math.isinf(k0):
            kappa = math.inf
        else:
            kappa = k0 - s * (s * self.L_g * (self.G + sqd * self.F0) + self.G) * (self.G + sqd * self.F0)
        return kappa, k0, k1, k2

    def is_certified(self, s: float) -> bool:
        return 0.0 < s < self.s_max

    def describe(self) -> str:
        lines = [
            "step-size certificate",
            f"  inputs: L_g={self.L_g:g} G={self.G:g} F0={self.F0:g} C={self.C:g} "
            f"J={self.J:g} eps0={self.eps0 if self.eps0 is not None else 'n/a'} "
            f"s0={self.s0:g} R0={self.R0:g} w0={self.w0:g} d={self.d}",
            f"  A = {self.A:g}",
        ]
        for name, val in self.terms.items():
            lines.append(f"  term {name}: {val:g}")
        lines.append(f"  s1 = {self.s1:g}")
        lines.append(f"  s_max = {self.s_max:g}")
        lines.append(f"  binding term: {self.binding_term}")
        if self.feasible:
            ks = self.kappas(0.5 * self.s_max)
            lines.append(
                f"  at s = s_max/2: kappa={ks[0]:g} kappa0={ks[1]:g} "
                f"kappa1={ks[2]:g} kappa2={ks[3]:g}"
            )
        else:
            lines.append("  infeasible: no positive step size certifies a kappa decrease")
        return "\n".join(lines)


def certify_step_size(L_g: float, G: float, F0: float, C: float = math.inf,
                      J: float = math.inf, eps0: Optional[float] = None,
                      s0: float = math.inf, R0: float = math.inf,
                      w0: float = 0.5, d: int = 1) -> StepSizeCertificate:
    """Evaluate the certified step-size range and decrease constants.

    C and J accept +inf sentinels when no endpoint of the matching kind
    exists.  eps0 is mandatory whenever C is finite (continuous endpoints
    present); R0 is carried for reporting only.
    """
    for name, v in (("L_g", L_g), ("G", G), ("F0", F0), ("w0", w0)):
        if v < 0 or not math.isfinite(v):
            raise CertificateError(f"{name} must be finite and nonnegative")
    if L_g <= 0:
        raise CertificateError("L_g must be positive")
    if not 0.0 < w0 <= 1.0:
        raise CertificateError("w0 must lie in (0, 1]")
    if d < 1:
        raise CertificateError("d must be at least 1")
    if C <= 0 or J <= 0 or s0 <= 0:
        raise CertificateError("C, J, s0 must be positive (or +inf sentinels)")
    if math.isfinite(C) and eps0 is None:
        raise CertificateError(
            "eps0 is required when continuous endpoints are present (C finite)"
        )
    if eps0 is not None and eps0 <= 0:
        raise CertificateError("eps0 must be positive")

    sqd = math.sqrt(d)
    D = G + sqd * F0
    A = L_g * D
    terms: dict[str, float] = {}

    if math.isfinite(s0) and G + F0 > 0:
        terms["s0/(G+F0)"] = s0 / (G + F0)
    if math.isfinite(C) and w0 < 1.0 and (G + F0) > 0:
        terms["eps0/(L_g(1-w0)(G+F0))"] = eps0 / (L_g * (1.0 - w0) * (G + F0))
    if math.isfinite(J):
        denom = F0 * G + 0.5 * G * G
        if denom > 0:
            terms["J/(F0 G + G^2/2)"] = J / denom
        denom = 2.0 * F0 * (G + F0)
        if denom > 0:
            terms["J/(2 F0 (G+F0))"] = J / denom
    if math.isfinite(C) or math.isfinite(J):
        terms["kappa-positivity"] = _kappa_root(L_g, G, F0, C, J, eps0, w0, d)
    if math.isfinite(C):
        terms["eps0/(L_g(G+sqrt(d)F0))"] = eps0 / (L_g * D) if D > 0 else math.inf
    terms["1/L_g"] = 1.0 / L_g

    s1_names = [n for n in terms if n not in ("eps0/(L_g(G+sqrt(d)F0))", "1/L_g")]
    s1 = min((terms[n] for n in s1_names), default=math.inf)
    s_max = min(terms.values())
    binding = min(terms, key=lambda n: terms[n])
    return StepSizeCertificate(L_g, G, F0, C, J, eps0, s0, R0, w0, d,
                               A, terms, s1, s_max, binding)


def _kappa_root(L_g, G, F0, C, J, eps0, w0, d) -> float:
    """sup { s > 0 : kappa(s) > 0 }; 0 when the set is empty.

    kappa is concave in s.  With continuous endpoints kappa(0) = 0 and
    kappa'(0+) = C w0 eps0 - G (G + sqrt(d) F0) decides feasibility; with only
    jumps kappa(0) = J > 0 and a positive root always exists.
    """
    sqd = math.sqrt(d)
    D = G + sqd * F0

    def kappa(s: float) -> float:
        if math.isinf(C):
            k1 = math.inf
        else:
            k1 = s * C * w0 * (eps0 - s * L_g * (1.0 - w0) * (G + F0))
        k2 = J - 2.0 * s * F0 * (G + F0) if math.isfinite(J) else math.inf
        k0 = min(k1, k2)
        return k0 - s * (s * L_g * D + G) * D

    if math.isfinite(C):
        slope0 = C * w0 * eps0 - G * D
        if slope0 <= 0:
            return 0.0
    # doubling search for a sign change, then bisection
    hi = 1.0 / L_g
    for _ in range(200):
        if kappa(hi) < 0:
            break
        hi *= 2.0
    else:
        return math.inf
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if kappa(mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo
