"""Weight and phase construction with grid-certified inequalities.

The weight grows inside the cutoff radius a and saturates beyond it:

    mu(r) = (r+1)**(2k) - (r+1)**(2k0)                      for r <= a,
    mu(r) = mu(a) + (a+1)**(1-2s) - (r+1)**(1-2s)           for r >= a,

with a = a0 * h**(-m), a0 = tau0**ell.  The phase is flat beyond a:

    phi'(r) = tau * ((r+1)**(-k) - (a+1)**(-k))  for r <= a,  0 for r >= a,

with tau = tau0 in the Lipschitz regime and tau = tau0 * theta**(2 alpha/3)
* h**(-1/3), theta = h**(2/(alpha+3)), in the Hölder regime.

The audit quantities are

    A  = (mu * phi'**2)',
    B1 = (r+1)**(-beta) mu + p mu'                                  (Lipschitz),
    B1 = theta**(alpha-1) (r+1)**(-beta) mu + (p + (r+1)**(-beta)) mu'  (Hölder),
    B2 = (mu * phi'')**2 / (phi' mu / h + mu')                      (Lipschitz),
    B2 = (mu * (theta**alpha (r+1)**(-beta) / h + |phi''|))**2
         / (phi' mu / h + mu')                                      (Hölder),

and certification verifies, on a dense logarithmic grid with refinement
around r = a, the margin families

    weight_monotone:    2 mu / r - mu' >= 0,
    weight_quotient_j:  K_j a**(2kj) (r+1)**(2s) - mu**j / mu' >= 0,
    carleman_main:      A - C (B1 + B2) + (E/2) mu' >= 0,
    carleman_2d:        A - h**2 r**(-3) mu - C (B1 + B2) + (2E/3) mu' >= 0,

the last one only in dimension two, on r >= r_min > 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import (EvaluationError, InvalidConfigError, InvalidInputError,
                     SearchExhaustedError, SingularPointError)
from .potentials import theta_for

LIPSCHITZ = "lipschitz"
HOLDER = "holder"

F_MONOTONE = "weight_monotone"
F_QUOTIENT = "weight_quotient_j{j}"
F_MAIN = "carleman_main"
F_2D = "carleman_2d"


def min_ell(k, beta, s, margin=1.05):
    """Smallest admissible exponent ell (with margin) for a0 = tau0**ell."""
    gap = beta - 2.0 * k - 2.0 * s
    if gap <= 0:
        raise InvalidConfigError(
            f"beta - 2k - 2s = {gap:.6g} must be positive before choosing ell")
    return max(2.0 / k, 2.0 / gap) * margin


@dataclass(frozen=True)
class CarlemanConfig:
    """Parameter pack tying the weight/phase construction together."""

    regularity: str
    beta: float
    alpha: Optional[float]
    k: float
    k0: float
    s: float
    tau0: float
    ell: float
    m: float
    E: float
    h: float
    d: int

    def __post_init__(self):
        if self.regularity not in (LIPSCHITZ, HOLDER):
            raise InvalidConfigError(
                f"regularity must be '{LIPSCHITZ}' or '{HOLDER}', got {self.regularity!r}")
        if not self.E > 0:
            raise InvalidConfigError(f"E must be positive, got {self.E}")
        if not 0.0 < self.h <= 1.0:
            raise InvalidConfigError(f"h must lie in (0, 1], got {self.h}")
        if self.d < 2:
            raise InvalidConfigError(f"d must be at least 2, got {self.d}")
        if not self.tau0 > 0:
            raise InvalidConfigError(f"tau0 must be positive, got {self.tau0}")
        if not self.s > 0.5:
            raise InvalidConfigError(f"s below lower bound 1/2 (got {self.s})")
        if self.regularity == LIPSCHITZ:
            if not self.beta > 1.0:
                raise InvalidConfigError(
                    f"Lipschitz regime needs beta > 1, got {self.beta}")
            s_hi = 0.25 * min(3.0, self.beta + 1.0)
            if not self.s < s_hi:
                raise InvalidConfigError(
                    f"s above upper bound {s_hi:.6g} (got {self.s})")
            k_req = 0.25 * min(1.0, self.beta - 1.0)
            if abs(self.k - k_req) > 1e-12:
                raise InvalidConfigError(
                    f"Lipschitz regime fixes k = min(1, beta-1)/4 = {k_req:.6g}, got {self.k}")
            if self.k0 != 0.0:
                raise InvalidConfigError("Lipschitz regime fixes k0 = 0")
            if self.m != 0.0:
                raise InvalidConfigError("Lipschitz regime fixes m = 0")
        else:
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise InvalidConfigError(
                    f"Hölder regime needs alpha in (0, 1), got {self.alpha}")
            if self.beta != 4.0:
                raise InvalidConfigError("Hölder regime fixes beta = 4")
            if not self.s < 0.75:
                raise InvalidConfigError(f"s above upper bound 3/4 (got {self.s})")
            if (self.k, self.k0) not in ((1.0, 0.5), (0.5, 0.0)):
                raise InvalidConfigError(
                    f"Hölder regime allows (k, k0) in {{(1, 1/2), (1/2, 0)}}, "
                    f"got ({self.k}, {self.k0})")
            if self.m != 2.0:
                raise InvalidConfigError("Hölder regime fixes m = 2")
        if not self.k * self.ell > 2.0:
            raise InvalidConfigError(
                f"k*ell must exceed 2, got {self.k * self.ell:.6g}")
        gap = self.beta - 2.0 * self.k - 2.0 * self.s
        if not gap * self.ell > 2.0:
            raise InvalidConfigError(
                f"(beta - 2k - 2s)*ell must exceed 2, got {gap * self.ell:.6g}")

    @classmethod
    def lipschitz(cls, beta, s, tau0, ell, E, h, d=3):
        k = 0.25 * min(1.0, beta - 1.0)
        return cls(LIPSCHITZ, beta, None, k, 0.0, s, tau0, ell, 0.0, E, h, d)

    @classmethod
    def holder(cls, alpha, s, tau0, ell, E, h, d=3, k=1.0):
        k0 = {1.0: 0.5, 0.5: 0.0}.get(k)
        if k0 is None:
            raise InvalidConfigError(f"Hölder k must be 1 or 1/2, got {k}")
        return cls(HOLDER, 4.0, alpha, k, k0, s, tau0, ell, 2.0, E, h, d)

    @property
    def theta(self):
        if self.regularity != HOLDER:
            return None
        return theta_for(self.h, self.alpha)

    @property
    def tau(self):
        if self.regularity == LIPSCHITZ:
            return self.tau0
        return self.tau0 * self.theta ** (2.0 * self.alpha / 3.0) * self.h ** (-1.0 / 3.0)

    @property
    def a0(self):
        return self.tau0 ** self.ell

    @property
    def a(self):
        return self.a0 * self.h ** (-self.m)


@dataclass(frozen=True)
class WeightFunction:
    """Piecewise closed-form weight mu with its derivative."""

    k: float
    k0: float
    s: float
    a: float

    def below(self, r):
        r = np.asarray(r, dtype=float)
        return (r + 1.0) ** (2 * self.k) - (r + 1.0) ** (2 * self.k0)

    def above(self, r):
        r = np.asarray(r, dtype=float)
        cap = (self.a + 1.0) ** (2 * self.k) - (self.a + 1.0) ** (2 * self.k0)
        return cap + (self.a + 1.0) ** (1 - 2 * self.s) - (r + 1.0) ** (1 - 2 * self.s)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.a, self.below(r), self.above(r))

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        lo = (2 * self.k * (r + 1.0) ** (2 * self.k - 1)
              - 2 * self.k0 * (r + 1.0) ** (2 * self.k0 - 1))
        hi = (2 * self.s - 1.0) * (r + 1.0) ** (-2 * self.s)
        return np.where(r < self.a, lo, hi)


@dataclass(frozen=True)
class PhaseFunction:
    """Phase phi with closed-form antiderivative, flat beyond r = a."""

    k: float
    a: float
    tau: float

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        val = self.tau * ((r + 1.0) ** (-self.k) - (self.a + 1.0) ** (-self.k))
        return np.where(r >= self.a, 0.0, np.maximum(val, 0.0))

    def second_derivative(self, r):
        r = np.asarray(r, dtype=float)
        val = -self.k * self.tau * (r + 1.0) ** (-self.k - 1.0)
        return np.where(r >= self.a, 0.0, val)

    def value(self, r):
        r = np.asarray(r, dtype=float)
        rc = np.minimum(r, self.a)
        if self.k == 1.0:
            ramp = np.log(rc + 1.0) - rc / (self.a + 1.0)
        else:
            ramp = (((rc + 1.0) ** (1 - self.k) - 1.0) / (1 - self.k)
                    - rc * (self.a + 1.0) ** (-self.k))
        return self.tau * ramp

    def __call__(self, r):
        return self.value(r)

    @property
    def max_phi(self):
        return float(self.value(self.a))


def build_weight(config):
    """Weight function for a validated configuration."""
    return WeightFunction(config.k, config.k0, config.s, config.a)


def build_phase(config):
    """Phase function for a validated configuration."""
    return PhaseFunction(config.k, config.a, config.tau)


# ---------------------------------------------------------------------------
# Audits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditValues:
    """Pointwise audit quantities at radii away from r = a."""

    r: np.ndarray
    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    lhs_main: np.ndarray
    lhs_2d: np.ndarray


def a_value(r, weight, phase):
    """(mu phi'**2)' from the closed-form branch derivatives."""
    r = np.asarray(r, dtype=float)
    mu = weight(r)
    mup = weight.derivative(r)
    p1 = phase.derivative(r)
    p2 = phase.second_derivative(r)
    return mup * p1 ** 2 + 2.0 * mu * p1 * p2


def audit_at(r, config, weight, phase, envelope_p, C):
    """Evaluate A, B1, B2 and the certified left-hand sides at radii r.

    r may be a scalar or an array; all points must be positive and distinct
    from the cutoff radius a.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r <= 0):
        raise InvalidInputError("audit radii must be positive")
    if np.any(r == config.a):
        raise SingularPointError(
            f"audit undefined at the singular radius r = a = {config.a:.6g}")
    mu = weight(r)
    mup = weight.derivative(r)
    if np.any(mup <= 0):
        raise EvaluationError("internal invariant violated: mu' <= 0 on the grid")
    p1 = phase.derivative(r)
    p2 = phase.second_derivative(r)
    A = mup * p1 ** 2 + 2.0 * mu * p1 * p2
    p_r = np.asarray(envelope_p(r), dtype=float)
    h, E, beta = config.h, config.E, config.beta
    denom = p1 * mu / h + mup
    if config.regularity == LIPSCHITZ:
        B1 = (r + 1.0) ** (-beta) * mu + p_r * mup
        B2 = (mu * p2) ** 2 / denom
    else:
        th = config.theta
        B1 = th ** (config.alpha - 1.0) * (r + 1.0) ** (-beta) * mu \
            + (p_r + (r + 1.0) ** (-beta)) * mup
        B2 = (mu * (th ** config.alpha * (r + 1.0) ** (-beta) / h + np.abs(p2))) ** 2 / denom
    B = B1 + B2
    lhs_main = A - C * B + 0.5 * E * mup
    lhs_2d = A - h ** 2 * r ** (-3.0) * mu - C * B + (2.0 * E / 3.0) * mup
    for name, arr in (("A", A), ("B1", B1), ("B2", B2),
                      ("lhs_main", lhs_main), ("lhs_2d", lhs_2d)):
        if not np.all(np.isfinite(arr)):
            bad = r[~np.isfinite(arr)][0]
            raise EvaluationError(f"audit value {name} is not finite at r={bad:.6g}")
    return AuditValues(r=r, A=A, B1=B1, B2=B2, lhs_main=lhs_main, lhs_2d=lhs_2d)


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Logarithmic certification grid with refinement around r = a."""

    points_per_decade: int = 200
    span_factor: float = 10.0
    r_floor: float = 1e-6
    near_a_count: int = 48
    near_a_inner: float = 8e-7
    near_a_outer: float = 0.5

    def refined(self, factor=2):
        return replace(self, points_per_decade=self.points_per_decade * factor)


def certification_grid(spec, a, r_min=0.0):
    """Sample points on (r_min, span_factor*a], excluding r = a."""
    if spec.points_per_decade < 200:
        raise InvalidInputError(
            f"grid too sparse: need >= 200 points per decade, got {spec.points_per_decade}")
    if spec.span_factor < 10.0:
        raise InvalidInputError(
            f"grid span must reach 10a, got span_factor {spec.span_factor}")
    lo = r_min if r_min > 0 else spec.r_floor
    hi = spec.span_factor * a
    if hi <= lo:
        raise InvalidInputError("grid upper end must exceed its lower end")
    decades = math.log10(hi / lo)
    n = max(2, int(math.ceil(decades * spec.points_per_decade)) + 1)
    base = np.geomspace(lo, hi, n)
    offs = np.geomspace(spec.near_a_inner, spec.near_a_outer, spec.near_a_count)
    cluster = np.concatenate([a * (1.0 - offs), a * (1.0 + offs)])
    cluster = cluster[(cluster > lo) & (cluster <= hi)]
    grid = np.unique(np.concatenate([base, cluster]))
    return grid[grid != a]


@dataclass(frozen=True)
class FamilySummary:
    name: str
    min_margin: float
    argmin_r: float


@dataclass(frozen=True)
class Certificate:
    """Grid-verified margins for the weight/phase inequality families."""

    config: CarlemanConfig
    C_used: float
    r_min: float
    tau0_found: float
    passed: bool
    families: tuple
    constants: dict
    grid: Optional[np.ndarray] = None
    margins: Optional[dict] = None
    search_history: tuple = ()

    def family(self, name):
        for fam in self.families:
            if fam.name == name:
                return fam
        raise KeyError(name)

    def worst(self):
        return min(self.families, key=lambda f: f.min_margin)

    def to_json(self):
        cfg = {
            "regularity": self.config.regularity,
            "alpha": self.config.alpha,
            "beta": self.config.beta,
            "k": self.config.k,
            "k0": self.config.k0,
            "s": self.config.s,
            "tau0": self.config.tau0,
            "ell": self.config.ell,
            "m": self.config.m,
            "E": self.config.E,
            "h": self.config.h,
            "d": self.config.d,
            "r_min": self.r_min,
            "constants": self.constants,
        }
        doc = {
            "config": cfg,
            "C_used": self.C_used,
            "families": [
                {"name": f.name, "min_margin": f.min_margin, "argmin_r": f.argmin_r}
                for f in self.families
            ],
            "tau0_found": self.tau0_found,
            "passed": self.passed,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        cfg = dict(doc["config"])
        r_min = cfg.pop("r_min")
        constants = cfg.pop("constants")
        config = CarlemanConfig(**cfg)
        fams = tuple(FamilySummary(f["name"], f["min_margin"], f["argmin_r"])
                     for f in doc["families"])
        return cls(config=config, C_used=doc["C_used"], r_min=r_min,
                   tau0_found=doc["tau0_found"], passed=doc["passed"],
                   families=fams, constants=constants)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def certify(config, envelope_p, C, grid_spec=None, r_min=None,
            mollifier_constants=None):
    """Verify every margin family on a dense grid and return the record.

    ``r_min`` defaults to 0 for d >= 3 and to 1 in dimension two, where the
    two-dimensional family is certified on r >= r_min > 0 only.
    """
    if grid_spec is None:
        grid_spec = GridSpec()
    if r_min is None:
        r_min = 1.0 if config.d == 2 else 0.0
    if config.d == 2 and r_min <= 0:
        raise InvalidInputError("dimension two requires a positive left endpoint")
    if C <= 0:
        raise InvalidInputError("audit constant C must be positive")
    grid = certification_grid(grid_spec, config.a, r_min)
    weight = build_weight(config)
    phase = build_phase(config)
    audit = audit_at(grid, config, weight, phase, envelope_p, C)
    mu = weight(grid)
    mup = weight.derivative(grid)
    k, k0, s, a = config.k, config.k0, config.s, config.a
    # headroom keeps the margin strictly positive where the recorded constant
    # is the exact asymptotic ratio (the quotient margin is identically zero
    # there in exact arithmetic, so bare floats would sign-flip on noise)
    K0 = max(1.0 / (2.0 * (k - k0)), 1.0 / (2.0 * s - 1.0)) * (1.0 + 1e-6)
    margins = {F_MONOTONE: 2.0 * mu / grid - mup}
    c26 = []
    for j in (0, 1, 2):
        Kj = K0 * ((a + 1.0) / a) ** (2 * k * j)
        c26.append(Kj)
        margins[F_QUOTIENT.format(j=j)] = (
            Kj * a ** (2 * k * j) * (grid + 1.0) ** (2 * s) - mu ** j / mup)
    margins[F_MAIN] = audit.lhs_main
    if config.d == 2:
        margins[F_2D] = audit.lhs_2d
    families = []
    for name in sorted(margins):
        arr = margins[name]
        if not np.all(np.isfinite(arr)):
            bad = grid[~np.isfinite(arr)][0]
            raise EvaluationError(f"margin {name} is not finite at r={bad:.6g}")
        idx = int(np.argmin(arr))
        families.append(FamilySummary(name, float(arr[idx]), float(grid[idx])))
    passed = all(f.min_margin >= 0.0 for f in families)
    constants = {"c26": c26, "mollifier": mollifier_constants}
    return Certificate(config=config, C_used=float(C), r_min=float(r_min),
                       tau0_found=config.tau0, passed=passed,
                       families=tuple(families), constants=constants,
                       grid=grid, margins=margins)


def search_tau0(config_template, envelope_p, C, grid_spec=None, tau0_max=4096.0,
                r_min=None, mollifier_constants=None):
    """Double tau0 from 4 until certification passes.

    Returns the first passing certificate, carrying the failed attempts in
    ``search_history``.  Raises SearchExhaustedError with the last attempt's
    worst margin and its location when no tau0 <= tau0_max is admissible.
    """
    if tau0_max < 4.0:
        raise InvalidInputError(f"tau0_max must be at least 4, got {tau0_max}")
    history = []
    tau0 = 4.0
    last = None
    while tau0 <= tau0_max:
        cfg = replace(config_template, tau0=tau0)
        cert = certify(cfg, envelope_p, C, grid_spec, r_min, mollifier_constants)
        worst = cert.worst()
        history.append((tau0, worst.name, worst.min_margin, worst.argmin_r))
        if cert.passed:
            return replace(cert, search_history=tuple(history))
        last = cert
        tau0 *= 2.0
    worst = last.worst()
    raise SearchExhaustedError(
        f"no admissible tau0 <= {tau0_max:g}: family {worst.name} has margin "
        f"{worst.min_margin:.6g} at r={worst.argmin_r:.6g}",
        worst_margin=worst.min_margin, worst_r=worst.argmin_r,
        family=worst.name, history=history)


def search_tau0_with_fallback(config_template, envelope_p, C, grid_spec=None,
                              tau0_max=4096.0, r_min=None,
                              mollifier_constants=None):
    """Two-dimensional Hölder search that retries with (k, k0) = (1/2, 0).

    The steep weight (k = 1) certifies only for small h; outside that regime
    the shallow pair takes over.  Returns (certificate, used_fallback).
    """
    try:
        cert = search_tau0(config_template, envelope_p, C, grid_spec, tau0_max,
                           r_min, mollifier_constants)
        return cert, False
    except SearchExhaustedError:
        if (config_template.d == 2 and config_template.regularity == HOLDER
                and config_template.k == 1.0):
            ell = max(config_template.ell,
                      min_ell(0.5, config_template.beta, config_template.s))
            fallback = replace(config_template, k=0.5, k0=0.0, ell=ell)
            cert = search_tau0(fallback, envelope_p, C, grid_spec, tau0_max,
                               r_min, mollifier_constants)
            return cert, True
        raise


def largest_passing_h(config_template, h_values, envelope_p, C, grid_spec=None,
                      tau0_max=64.0, r_min=None):
    """Largest h in the given collection whose certification search passes.

    Returns (h0, results) where results maps each tried h to True/False;
    h0 is None when every h fails.
    """
    results = {}
    h0 = None
    for h in sorted(set(h_values), reverse=True):
        cfg = replace(config_template, h=h)
        try:
            search_tau0(cfg, envelope_p, C, grid_spec, tau0_max, r_min)
            results[h] = True
            if h0 is None:
                h0 = h
        except SearchExhaustedError:
            results[h] = False
    return h0, results


def recommended_audit_constant(model, kernel=None, floor=6.0):
    """Audit constant C large enough to absorb the model's regularity constants.

    In the Lipschitz regime the derivative bound is at most the two-sided
    constant of the model; in the Hölder regime the smoothing-error constants
    enter through the kernel moments, quadratically in the squared audit term.
    """
    hc = model.holder_const
    if model.alpha >= 1.0:
        return max(floor, 3.0, hc)
    if kernel is None:
        from .potentials import bump_kernel
        kernel = bump_kernel()
    m_a = kernel.moment_alpha(model.alpha)
    m_ad = kernel.moment_alpha_deriv(model.alpha)
    return max(floor, hc * m_ad, 3.0 * (1.0 + hc * m_a) ** 2)
