"""Sweeps in h, certificate-backed upper bounds, and scaling-law fits.

A passing certificate yields a fully computable bound on the log resolvent
norm: with a = a0 h**(-m) and the phase rebuilt at each h,

    log M(h) = max(phi)/h + log(C0 a**2 / h),
    g_bound(h) = log 4 + 2 log M(h),

where C0 is the certified audit constant.  Measured g values are fitted in
log-norm space against the candidate growth shapes

    lipschitz: C / h,     holder(alpha): C h**(-4/(alpha+3)) log(1/h),
    linfty:    C h**(-4/3) log(1/h),

each with a free intercept.  The frequency and time maps translate the
bounds into high-frequency resolvent growth psi(lambda) and local energy
decay rates omega(t).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .carleman import Certificate, build_phase
from .errors import AccuracyError, InvalidInputError, ResolventLabError
from .radial import AngularSector, UniformGridSpec, weighted_resolvent_norm

LIP = "lipschitz"
HOL = "holder"
LINF = "linfty"


# ---------------------------------------------------------------------------
# Bound shapes and fitting
# ---------------------------------------------------------------------------

def _shape(kind, alpha, h):
    h = np.asarray(h, dtype=float)
    if kind == LIP:
        return 1.0 / h
    if kind == HOL:
        return h ** (-4.0 / (alpha + 3.0)) * np.log(1.0 / h)
    if kind == LINF:
        return h ** (-4.0 / 3.0) * np.log(1.0 / h)
    raise InvalidInputError(f"unknown bound shape {kind!r}")


def _growth_key(kind, alpha):
    if kind == LIP:
        return (1.0, 0)
    if kind == HOL:
        return (4.0 / (alpha + 3.0), 1)
    return (4.0 / 3.0, 1)


@dataclass(frozen=True)
class BoundModel:
    """One fitted growth law g(h) = C * shape(h) + intercept."""

    kind: str
    alpha: Optional[float]
    C: float
    intercept: float = 0.0

    def shape(self, h):
        return _shape(self.kind, self.alpha, h)

    def evaluate(self, h):
        return self.C * self.shape(h) + self.intercept


@dataclass(frozen=True)
class FitResult:
    kind: str
    alpha: Optional[float]
    C: float
    intercept: float
    residual: float
    degenerate: bool

    def model(self):
        return BoundModel(self.kind, self.alpha, self.C, self.intercept)


@dataclass(frozen=True)
class FitOutcome:
    fits: tuple
    best: FitResult
    degenerate: bool
    eps: float
    sign: int


def _fit_one(kind, alpha, h, g):
    x = _shape(kind, alpha, h)
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, g, rcond=None)
    res = float(np.sqrt(np.mean((g - design @ coef) ** 2)))
    span = float(np.max(x) - np.min(x))
    degenerate = coef[0] * span <= 1e-9 * max(1.0, float(np.mean(np.abs(g))))
    return FitResult(kind, alpha, float(coef[0]), float(coef[1]), res,
                     bool(degenerate))


def fit_models(result, candidates, eps=None, sign=None):
    """Least-squares fit of measured g against each candidate shape.

    ``result`` is a SweepResult or a sequence of (h, g) pairs.  Sweep rows
    are restricted to a single (eps, sign) group: the one given, or the
    first group in row order with at least four successful rows.  Ties in
    residual go to the slowest-growing shape.
    """
    if hasattr(result, "rows"):
        groups = {}
        order = []
        for row in result.rows:
            if row.status != "ok":
                continue
            key = (row.eps, row.sign)
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append((row.h, row.g_measured))
        if eps is not None or sign is not None:
            order = [k for k in order
                     if (eps is None or k[0] == eps) and (sign is None or k[1] == sign)]
        chosen = None
        for key in order:
            if len(groups[key]) >= 4:
                chosen = key
                break
        if chosen is None:
            raise InvalidInputError(
                "fit needs at least 4 successful rows at a single eps")
        pairs = groups[chosen]
        eps_used, sign_used = chosen
    else:
        pairs = [(float(h), float(g)) for h, g in result]
        if len(pairs) < 4:
            raise InvalidInputError("fit needs at least 4 data points")
        eps_used, sign_used = float("nan"), 0
    h = np.array([p[0] for p in pairs])
    g = np.array([p[1] for p in pairs])
    fits = []
    for cand in candidates:
        kind, alpha = (cand, None) if isinstance(cand, str) else (cand[0], cand[1])
        if kind == HOL and alpha is None:
            raise InvalidInputError("holder candidate needs an alpha")
        fits.append(_fit_one(kind, alpha, h, g))
    best_res = min(f.residual for f in fits)
    tol = 1e-9 * (1.0 + best_res)
    tied = [f for f in fits if f.residual <= best_res + tol]
    best = min(tied, key=lambda f: _growth_key(f.kind, f.alpha))
    return FitOutcome(fits=tuple(fits), best=best,
                      degenerate=all(f.degenerate for f in fits),
                      eps=eps_used, sign=sign_used)


# ---------------------------------------------------------------------------
# Certificate-backed bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CertifiedBound:
    """Computable bound from a passing certificate, recomposed per h."""

    certificate: Certificate
    C0: float
    h_values: tuple
    g_values: tuple

    def log_m(self, h):
        cfg = replace(self.certificate.config, h=float(h))
        phase = build_phase(cfg)
        return phase.max_phi / h + math.log(self.C0 * cfg.a ** 2 / h)

    def g_bound(self, h):
        return math.log(4.0) + 2.0 * self.log_m(float(h))


def bound_from_certificate(certificate, h_values):
    """Evaluate the composed bound at each h; requires a passing certificate."""
    if not certificate.passed:
        raise InvalidInputError("bound composition needs a passing certificate")
    hs = tuple(float(h) for h in h_values)
    if not hs or any(not 0.0 < h <= 1.0 for h in hs):
        raise InvalidInputError("h values must lie in (0, 1] and be nonempty")
    bound = CertifiedBound(certificate=certificate, C0=certificate.C_used,
                           h_values=hs, g_values=())
    values = tuple(bound.g_bound(h) for h in hs)
    if not all(math.isfinite(v) for v in values):
        raise InvalidInputError("composed bound is not finite on the sweep")
    return replace(bound, g_values=values)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridPolicy:
    """Turns a query into a uniform operator grid and a sector cap.

    The default step h/20 sits a factor two inside the h/10 assembly rule so
    that halving it moves the measured g by well under 1e-2.
    """

    tail_tol: float = 1e-4
    dr_factor: float = 0.05
    l_max: int = 8
    r_min: float = 0.0
    r_max_floor: float = 0.0

    def r_max_for(self, query):
        r_tail = self.tail_tol ** (-1.0 / (2.0 * query.s)) - 1.0
        lam = AngularSector(query.d, self.l_max, query.h).lambda_value
        r_turn = math.sqrt(max(lam, 0.0) / query.E)
        return max(r_tail, 4.0 * r_turn, self.r_max_floor)

    def grid_for(self, query):
        r_min = self.r_min
        if query.d == 2 and r_min <= 0.0:
            r_min = 1.0
        return UniformGridSpec(dr=self.dr_factor * query.h,
                               r_max=self.r_max_for(query),
                               r_min=r_min, tail_tol=self.tail_tol)


@dataclass(frozen=True)
class SweepRow:
    h: float
    eps: float
    sign: int
    g_measured: Optional[float]
    g_bound: Optional[float]
    sectors: int
    l_max: int
    runtime_ms: float
    status: str


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    fit: Optional[FitOutcome]
    bound_respected: Optional[bool]


def sweep(query_template, h_values, eps_values, grid_policy=None,
          certificate=None, signs=(1, -1), seed=0, threads=1):
    """Measure g over the (h, eps, sign) product, with optional bound columns.

    h values must be sorted descending in (0, 1].  Rows whose norm estimate
    fails are marked and the sweep continues; a sweep with no successful row
    raises.  Output rows are ordered by (descending h, eps, sign) so runs
    are reproducible.
    """
    hs = [float(h) for h in h_values]
    if not hs:
        raise InvalidInputError("h_values must not be empty")
    if any(not 0.0 < h <= 1.0 for h in hs):
        raise InvalidInputError("h values must lie in (0, 1]")
    if sorted(hs, reverse=True) != hs:
        raise InvalidInputError("h_values must be sorted descending")
    eps_list = [float(e) for e in eps_values]
    if not eps_list:
        raise InvalidInputError("eps_values must not be empty")
    if grid_policy is None:
        grid_policy = GridPolicy()
    bound = bound_from_certificate(certificate, hs) if certificate else None
    rows = []
    for h in hs:
        g_b = bound.g_bound(h) if bound else None
        for eps in sorted(eps_list):
            for sign in sorted(signs, reverse=True):
                query = replace(query_template, h=h, eps=eps, sign=sign)
                start = time.perf_counter()
                try:
                    est = weighted_resolvent_norm(
                        query, grid_policy.grid_for(query), grid_policy.l_max,
                        seed=seed, threads=threads)
                    ms = 1000.0 * (time.perf_counter() - start)
                    rows.append(SweepRow(h, eps, sign, est.g_value, g_b,
                                         len(est.sector_values), est.l_max_used,
                                         ms, "ok"))
                except ResolventLabError as exc:
                    ms = 1000.0 * (time.perf_counter() - start)
                    rows.append(SweepRow(h, eps, sign, None, g_b, 0,
                                         grid_policy.l_max, ms,
                                         f"failed: {exc}"))
    ok = [row for row in rows if row.status == "ok"]
    if not ok:
        raise AccuracyError("every sweep row failed")
    respected = None
    if bound is not None:
        respected = (len(ok) == len(rows)
                     and all(row.g_measured <= row.g_bound for row in ok))
    return SweepResult(rows=tuple(rows), fit=None, bound_respected=respected)


# ---------------------------------------------------------------------------
# Serialization of sweep artifacts
# ---------------------------------------------------------------------------

def _fmt(value):
    return "" if value is None else repr(float(value))


def write_sweep_csv(result, path):
    lines = ["h,eps,sign,g_measured,g_bound,sectors,lmax,runtime_ms,status"]
    for row in result.rows:
        sign = "+" if row.sign > 0 else "-"
        status = "ok" if row.status == "ok" else "failed"
        lines.append(",".join([
            repr(row.h), repr(row.eps), sign, _fmt(row.g_measured),
            _fmt(row.g_bound), str(row.sectors), str(row.l_max),
            f"{row.runtime_ms:.3f}", status]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary_json(result, path):
    doc = {
        "rows": [
            {"h": row.h, "eps": row.eps, "sign": row.sign,
             "g_measured": row.g_measured, "g_bound": row.g_bound,
             "sectors": row.sectors, "lmax": row.l_max, "status": row.status}
            for row in result.rows
        ],
        "bound_respected": result.bound_respected,
        "fit": None,
    }
    if result.fit is not None:
        doc["fit"] = {
            "best": {"kind": result.fit.best.kind,
                     "alpha": result.fit.best.alpha,
                     "C": result.fit.best.C,
                     "intercept": result.fit.best.intercept,
                     "residual": result.fit.best.residual},
            "candidates": [
                {"kind": f.kind, "alpha": f.alpha, "C": f.C,
                 "intercept": f.intercept, "residual": f.residual,
                 "degenerate": f.degenerate}
                for f in result.fit.fits
            ],
            "degenerate": result.fit.degenerate,
            "eps": result.fit.eps,
            "sign": result.fit.sign,
        }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_plotdata_tsv(result, path):
    blocks = []
    series = {}
    for row in result.rows:
        if row.status != "ok":
            continue
        key = (row.eps, row.sign)
        series.setdefault(key, []).append((row.h, row.g_measured))
    for (eps, sign), pairs in sorted(series.items()):
        label = f"# series: g_measured eps={eps!r} sign={'+' if sign > 0 else '-'}"
        body = "\n".join(f"{h!r}\t{g!r}" for h, g in pairs)
        blocks.append(label + "\n" + body)
    bound_pairs = sorted({(row.h, row.g_bound) for row in result.rows
                          if row.g_bound is not None}, reverse=True)
    if bound_pairs:
        body = "\n".join(f"{h!r}\t{g!r}" for h, g in bound_pairs)
        blocks.append("# series: g_bound\n" + body)
    with open(path, "w") as fh:
        fh.write("\n\n".join(blocks) + "\n")


# ---------------------------------------------------------------------------
# Corollary maps
# ---------------------------------------------------------------------------

_CLASSES = (LIP, HOL, LINF)


@dataclass(frozen=True)
class PsiTable:
    lambdas: np.ndarray
    psi: np.ndarray
    h: np.ndarray
    E: float


def psi_map(regularity_class, lambda_values, lambda0, alpha=None):
    """High-frequency growth exponents psi(lambda) with the h substitution.

    Returns psi per class together with the matching semiclassical data
    h = lambda0/lambda and energy E = lambda0**2.
    """
    if regularity_class not in _CLASSES:
        raise InvalidInputError(
            f"unknown regularity class {regularity_class!r}; valid: {_CLASSES}")
    lam = np.atleast_1d(np.asarray(lambda_values, dtype=float))
    if not lambda0 > 0:
        raise InvalidInputError("lambda0 must be positive")
    if np.any(lam < lambda0):
        raise InvalidInputError("lambda values must be at least lambda0")
    if regularity_class == LIP:
        psi = lam.copy()
    elif regularity_class == HOL:
        if alpha is None or not 0.0 < alpha < 1.0:
            raise InvalidInputError("holder class needs alpha in (0, 1)")
        psi = lam ** (4.0 / (alpha + 3.0)) * np.log(lam + 1.0)
    else:
        psi = lam ** (4.0 / 3.0) * np.log(lam + 1.0)
    return PsiTable(lambdas=lam, psi=psi, h=lambda0 / lam, E=lambda0 ** 2)


def omega_map(regularity_class, t_values, alpha=None, radial=False):
    """Local energy decay rates omega(t); radial variants drop the loglog."""
    if regularity_class not in _CLASSES:
        raise InvalidInputError(
            f"unknown regularity class {regularity_class!r}; valid: {_CLASSES}")
    t = np.atleast_1d(np.asarray(t_values, dtype=float))
    if np.any(t <= math.e ** math.e):
        raise InvalidInputError("t values must exceed e**e")
    logt = np.log(t)
    if regularity_class == LIP:
        return 1.0 / logt
    if regularity_class == HOL:
        if alpha is None or not 0.0 < alpha < 1.0:
            raise InvalidInputError("holder class needs alpha in (0, 1)")
        expo = (alpha + 3.0) / 4.0
    else:
        expo = 0.75
    if radial:
        return logt ** (-expo)
    return (np.log(logt) / logt) ** expo
