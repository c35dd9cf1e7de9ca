"""Model nonlinearities and the standard assumptions on them.

Holds the double-well potential F = F1 + F2 (regular quartic or logarithmic),
the proliferation function P, and the truncation function h that gates the
first control, together with their derivatives up to the orders the solvers
and the adjoint need. ``validate_assumptions`` spot-checks the data against
the standard assumptions (A1)-(A4); failures become report entries, never
exceptions, so that deliberately broken configurations remain constructible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

REGULAR = "regular"
LOGARITHMIC = "logarithmic"


@dataclass(frozen=True)
class ModelParams:
    """Hyperbolic relaxation alpha, viscosity tau, chemotactic sensitivity chi."""

    alpha: float
    tau: float
    chi: float


@dataclass(frozen=True)
class PotentialSpec:
    """Double-well potential choice.

    regular      F(r) = (1 - r^2)^2 / 4 on all of R
    logarithmic  F(r) = (1+r)ln(1+r) + (1-r)ln(1-r) - k1 r^2 on (-1, 1),
                 with the boundary value 2 ln 2 - k1 at r = +-1 and k1 > 1
                 so the well is nonconvex.

    Logarithmic evaluations are safeguarded: the argument is clamped to
    [-1 + safeguard_eps, 1 - safeguard_eps] before the closed forms are
    applied. The separation property keeps trajectories away from +-1, so
    the safeguard only protects transient Newton iterates.
    """

    kind: str = REGULAR
    k1: float = 2.0
    safeguard_eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in (REGULAR, LOGARITHMIC):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if not (0.0 < self.safeguard_eps < 0.5):
            raise ValueError("safeguard_eps must lie in (0, 0.5)")

    @property
    def domain(self) -> tuple[float, float]:
        if self.kind == LOGARITHMIC:
            return (-1.0, 1.0)
        return (-np.inf, np.inf)


def _wrap(values, scalar_input):
    values = np.asarray(values, dtype=float)
    if scalar_input:
        return float(values)
    return values


def potential(spec: PotentialSpec, r, order: int = 0, safeguarded: bool = True):
    """Evaluate F or one of its first three derivatives.

    For the logarithmic kind the argument is clamped into the safeguarded
    domain unless ``safeguarded=False``, in which case the closed form is
    evaluated directly (the boundary value at r = +-1 is the finite limit
    2 ln 2 - k1 for order 0).
    """
    if not 0 <= order <= 3:
        raise ValueError("order must be in 0..3")
    scalar = np.isscalar(r) or np.ndim(r) == 0
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("potential argument must be finite")

    if spec.kind == REGULAR:
        if order == 0:
            out = 0.25 * (1.0 - r * r) ** 2
        elif order == 1:
            out = r**3 - r
        elif order == 2:
            out = 3.0 * r * r - 1.0
        else:
            out = 6.0 * r
        return _wrap(out, scalar)

    k1 = spec.k1
    if safeguarded:
        rc = np.clip(r, -1.0 + spec.safeguard_eps, 1.0 - spec.safeguard_eps)
    else:
        rc = r
    with np.errstate(divide="ignore", invalid="ignore"):
        if order == 0:
            onp, onm = 1.0 + rc, 1.0 - rc
            out = (onp * np.log(np.maximum(onp, 0.0))
                   + onm * np.log(np.maximum(onm, 0.0)) - k1 * rc * rc)
            # 0 * log 0 -> 0 gives the finite limit 2 ln 2 - k1 at r = +-1
            out = np.where(np.abs(rc) == 1.0, 2.0 * np.log(2.0) - k1, out)
            out = np.where(np.abs(rc) > 1.0, np.inf, out)
        elif order == 1:
            out = np.log((1.0 + rc) / (1.0 - rc)) - 2.0 * k1 * rc
        elif order == 2:
            out = 2.0 / (1.0 - rc * rc) - 2.0 * k1
        else:
            out = 1.0 / (1.0 - rc) ** 2 - 1.0 / (1.0 + rc) ** 2
    return _wrap(out, scalar)


def potential_part(spec: PotentialSpec, r, part: str, order: int = 0):
    """Evaluate the convex part F1 or the smooth perturbation F2 alone.

    The regular kind is split as F1 = r^4/4, F2 = 1/4 - r^2/2, so that
    F1 >= 0 with F1(0) = 0 while F1 + F2 reproduces the quartic well
    exactly. The logarithmic kind keeps its entropy term as F1.
    """
    if part not in ("convex", "smooth"):
        raise ValueError("part must be 'convex' or 'smooth'")
    scalar = np.isscalar(r) or np.ndim(r) == 0
    r = np.asarray(r, dtype=float)
    if spec.kind == REGULAR:
        if part == "convex":
            out = [0.25 * r**4, r**3, 3.0 * r * r, 6.0 * r][order]
        else:
            out = [0.25 - 0.5 * r * r, -r, np.full_like(r, -1.0),
                   np.zeros_like(r)][order]
        return _wrap(out, scalar)
    rc = np.clip(r, -1.0 + spec.safeguard_eps, 1.0 - spec.safeguard_eps)
    if part == "convex":
        with np.errstate(divide="ignore"):
            out = [(1.0 + rc) * np.log(1.0 + rc) + (1.0 - rc) * np.log(1.0 - rc),
                   np.log((1.0 + rc) / (1.0 - rc)),
                   2.0 / (1.0 - rc * rc),
                   1.0 / (1.0 - rc) ** 2 - 1.0 / (1.0 + rc) ** 2][order]
    else:
        k1 = spec.k1
        out = [-k1 * rc * rc, -2.0 * k1 * rc, np.full_like(rc, -2.0 * k1),
               np.zeros_like(rc)][order]
    return _wrap(out, scalar)


def _smoothstep(t, order: int):
    """C^2 quintic smoothstep 6t^5 - 15t^4 + 10t^3, clamped to [0, 1]."""
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 0.0, 1.0)
    if order == 0:
        return np.where(t <= 0.0, 0.0,
                        np.where(t >= 1.0, 1.0,
                                 tc**3 * (10.0 + tc * (-15.0 + 6.0 * tc))))
    if order == 1:
        inner = 30.0 * tc * tc * (1.0 - tc) ** 2
        return np.where((t <= 0.0) | (t >= 1.0), 0.0, inner)
    inner = 60.0 * tc * (1.0 - tc) * (1.0 - 2.0 * tc)
    return np.where((t <= 0.0) | (t >= 1.0), 0.0, inner)


@dataclass(frozen=True)
class NonlinearitySpec:
    """Shapes of the proliferation function P and the truncation function h.

    Both are quintic smoothsteps: P rises from 0 to p0 across p_interval,
    h rises from 0 to 1 across h_interval (anchors h(-1) = 0, h(1) = 1 for
    the default interval). The quintic is the lowest-order polynomial that
    is C^2 with Lipschitz first and second differences, so (A3)/(A4) hold
    by construction whenever p0 >= 0.
    """

    p0: float = 0.5
    p_interval: tuple[float, float] = (-1.0, 1.0)
    h_interval: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        for name in ("p_interval", "h_interval"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} endpoints must be increasing")
            object.__setattr__(self, name, (float(lo), float(hi)))


def _smoothstep_on(interval, amplitude, r, order):
    lo, hi = interval
    scale = 1.0 / (hi - lo)
    scalar = np.isscalar(r) or np.ndim(r) == 0
    t = (np.asarray(r, dtype=float) - lo) * scale
    out = amplitude * _smoothstep(t, order) * scale**order
    return _wrap(out, scalar)


def proliferation(spec: NonlinearitySpec, r, order: int = 0):
    """P and its first two derivatives; P(r) = p0 for r past the interval."""
    if not 0 <= order <= 2:
        raise ValueError("order must be in 0..2")
    return _smoothstep_on(spec.p_interval, spec.p0, r, order)


def truncation(spec: NonlinearitySpec, r, order: int = 0):
    """Truncation function h with h(-1) = 0, h(1) = 1 on the default interval."""
    if not 0 <= order <= 2:
        raise ValueError("order must be in 0..2")
    return _smoothstep_on(spec.h_interval, 1.0, r, order)


@dataclass
class AssumptionCheck:
    tag: str
    description: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[AssumptionCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[AssumptionCheck]:
        return [c for c in self.checks if not c.passed]

    def add(self, tag, description, passed, detail=""):
        self.checks.append(AssumptionCheck(tag, description, bool(passed), detail))


def _lipschitz_ratio(fn, points):
    """Largest sampled difference quotient |f(a)-f(b)| / |a-b|."""
    vals = fn(points)
    num = np.abs(np.diff(vals))
    den = np.abs(np.diff(points))
    return float(np.max(num / den))


def validate_assumptions(params: ModelParams, pot: PotentialSpec,
                         nl: NonlinearitySpec) -> ValidationReport:
    """Spot-check the model data against assumptions (A1)-(A4).

    Checks are numeric samples, not proofs: positivity of the constants,
    nonnegativity/boundedness of P and h, finite sampled Lipschitz ratios
    of P, P', h, h', F2', and the convex-part anchors F1 >= 0, F1(0) = 0.
    """
    report = ValidationReport()

    bad = [n for n in ("alpha", "tau", "chi") if getattr(params, n) <= 0]
    report.add("A1", "alpha, tau, chi are positive constants", not bad,
               f"non-positive: {', '.join(bad)}" if bad else "")

    lo, hi = pot.domain
    if pot.kind == LOGARITHMIC:
        sample = np.linspace(-1.0 + 1e-3, 1.0 - 1e-3, 401)
    else:
        sample = np.linspace(-2.5, 2.5, 401)
    f1_zero = potential_part(pot, 0.0, "convex", 0)
    f1_vals = potential_part(pot, sample, "convex", 0)
    f2_lip = _lipschitz_ratio(lambda r: potential_part(pot, r, "smooth", 1), sample)
    k1_ok = pot.kind != LOGARITHMIC or pot.k1 > 1.0
    a2_ok = (abs(f1_zero) < 1e-14 and np.all(f1_vals >= -1e-14)
             and np.isfinite(f2_lip) and k1_ok)
    details = []
    if abs(f1_zero) >= 1e-14:
        details.append(f"F1(0) = {f1_zero:g} != 0")
    if not np.all(f1_vals >= -1e-14):
        details.append("F1 takes negative values")
    if not np.isfinite(f2_lip):
        details.append("F2' Lipschitz ratio not finite")
    if not k1_ok:
        details.append(f"logarithmic well needs k1 > 1, got k1 = {pot.k1:g}")
    report.add("A2", "F = F1 + F2 with convex F1 >= 0, F1(0) = 0, smooth F2",
               a2_ok, "; ".join(details))

    wide = np.linspace(-4.0, 4.0, 801)
    p_vals = proliferation(nl, wide, 0)
    p_lip = _lipschitz_ratio(lambda r: proliferation(nl, r, 0), wide)
    pp_lip = _lipschitz_ratio(lambda r: proliferation(nl, r, 1), wide)
    p_ok = (nl.p0 >= 0 and np.all(p_vals >= -1e-14)
            and np.all(p_vals <= max(nl.p0, 0.0) + 1e-14)
            and np.isfinite(p_lip) and np.isfinite(pp_lip))
    report.add("A3", "P is C^2, nonnegative, bounded, with P, P' Lipschitz",
               p_ok, "" if p_ok else f"p0 = {nl.p0:g}, sup |P| = {np.max(np.abs(p_vals)):g}")

    h_vals = truncation(nl, wide, 0)
    h_lip = _lipschitz_ratio(lambda r: truncation(nl, r, 0), wide)
    hp_lip = _lipschitz_ratio(lambda r: truncation(nl, r, 1), wide)
    h_ok = (np.all(h_vals >= -1e-14) and np.all(h_vals <= 1.0 + 1e-14)
            and np.isfinite(h_lip) and np.isfinite(hp_lip))
    report.add("A4", "h is C^2, nonnegative, bounded, with h, h' Lipschitz",
               h_ok, "" if h_ok else f"h range [{np.min(h_vals):g}, {np.max(h_vals):g}]")

    return report
