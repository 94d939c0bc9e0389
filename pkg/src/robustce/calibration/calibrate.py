"""Pick the robustness budget from a Gaussian perturbation model.

If the realised perturbation is ``N(0, sigma^2 I_k)``, the probability that
it lands inside the uncertainty set of radius ``rho`` is

* l2:   ``alpha = F_chi2_k(rho^2 / sigma^2)``
* linf: ``alpha = (2 Phi(rho / sigma) - 1) ** k``

Any two of (alpha, rho, sigma) determine the third. The bound is
conservative: a robust CE stays valid at least with probability alpha, and
usually more, because the set only needs to cover the perturbations that
could actually flip the model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .special import chi2_cdf, chi2_ppf, norm_cdf, norm_ppf

CAVEAT = ("conservative bound: alpha is the probability that a Gaussian perturbation stays inside "
          "the uncertainty set, which lower-bounds the probability that the counterfactual stays valid")

NORMS = ("l2", "linf")


class CalibrationError(ValueError):
    """Malformed query or a result outside the meaningful range."""


@dataclass(frozen=True)
class CalibrationQuery:
    k: int
    norm: str = "l2"
    alpha: float | None = None
    rho: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.norm not in NORMS:
            raise CalibrationError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if not isinstance(self.k, int) or isinstance(self.k, bool) or self.k < 1:
            raise CalibrationError("k must be a positive integer")
        missing = [n for n in ("alpha", "rho", "sigma") if getattr(self, n) is None]
        if len(missing) > 1:
            raise CalibrationError(
                f"exactly one of alpha, rho, sigma must be unknown; got {len(missing)} unknown")
        # alpha = 0 only arises as the answer for rho = 0
        if self.alpha is not None and not 0.0 <= self.alpha < 1.0:
            raise CalibrationError("alpha must lie in (0, 1)")
        if self.rho is not None and not (self.rho >= 0 and math.isfinite(self.rho)):
            raise CalibrationError("rho must be a finite nonnegative number")
        if self.sigma is not None and not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise CalibrationError("sigma must be a finite positive number")

    @property
    def unknown(self) -> str | None:
        return next((n for n in ("alpha", "rho", "sigma") if getattr(self, n) is None), None)

    def to_dict(self) -> dict:
        return {"k": self.k, "norm": self.norm, "alpha": self.alpha, "rho": self.rho, "sigma": self.sigma}


def coverage(rho: float, sigma: float, k: int, norm: str) -> float:
    """Probability that ``N(0, sigma^2 I_k)`` falls inside the radius-``rho`` ball."""
    if rho == 0:
        return 0.0
    z = rho / sigma
    if norm == "l2":
        return chi2_cdf(z * z, k)
    inner = 2.0 * norm_cdf(z) - 1.0
    return inner ** k


def scaled_radius(alpha: float, k: int, norm: str) -> float:
    """``rho / sigma`` at which the coverage equals ``alpha``."""
    if norm == "l2":
        return math.sqrt(chi2_ppf(alpha, k))
    # Phi^{-1}((alpha^{1/k} + 1) / 2) via its upper tail, which avoids cancellation near alpha = 1
    tail = -0.5 * math.expm1(math.log(alpha) / k)
    return -norm_ppf(tail)


def calibrate(q: CalibrationQuery) -> CalibrationQuery:
    """Fill in the single unknown of ``q``."""
    unknown = q.unknown
    if unknown is None:
        raise CalibrationError("exactly one of alpha, rho, sigma must be unknown; got 0 unknown")
    if unknown != "alpha" and q.alpha == 0.0:
        raise CalibrationError("alpha must lie in (0, 1)")
    if unknown == "alpha":
        a = coverage(q.rho, q.sigma, q.k, q.norm)
        # rho = 0 gives the degenerate alpha = 0; anything that rounds to 1 is uninformative
        if not 0.0 <= a < 1.0 or (a == 0.0 and q.rho > 0):
            raise CalibrationError(f"computed alpha {a!r} is outside (0, 1); rho/sigma is out of range")
        return replace(q, alpha=a)
    z = scaled_radius(q.alpha, q.k, q.norm)
    if not (z > 0 and math.isfinite(z)):
        raise CalibrationError(f"alpha {q.alpha!r} gives a degenerate radius ratio {z!r}")
    if unknown == "rho":
        return replace(q, rho=q.sigma * z)
    if q.rho == 0:
        raise CalibrationError("rho = 0 cannot reach a positive alpha for any sigma")
    return replace(q, sigma=q.rho / z)
