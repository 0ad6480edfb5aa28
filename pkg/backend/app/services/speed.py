"""
Deterministic speed function v^n(t), length functionals ell(n), ell_t(n)
and the coming-down-from-infinity classification.

v^n(t) is defined implicitly by  int_{v^n(t)}^n dq / psi(q) = t.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy import integrate

from ..core import config
from ..core.errors import BadParameter, HorizonExceeded, QuadratureFailure
from .measures import (
    CoalescentMeasure,
    LambdaAtoms,
    LambdaBeta,
    LambdaBolthausenSznitman,
    PsiEvaluator,
    XiAtoms,
)

logger = logging.getLogger(__name__)

ONE_STAR_TRUNCATION = 1e8
CDI_GRID = (1e3, 1e4, 1e5, 1e6)
CDI_MARGIN = 0.05
MAX_ROOT_ITERATIONS = 200


def _log_quad(f, a: float, b: float, rel_tol: float) -> float:
    """int_a^b f(q) dq, integrated in u = ln q."""
    if b <= a:
        return 0.0
    res = integrate.quad(
        lambda u: f(math.exp(u)) * math.exp(u),
        math.log(a), math.log(b),
        epsabs=0.0, epsrel=rel_tol, limit=200, full_output=1,
    )
    value, abserr = res[0], res[1]
    if len(res) > 3 and abserr > 1e3 * rel_tol * max(abs(value), 1e-300):
        raise QuadratureFailure(f"quadrature stalled on [{a}, {b}]: {res[3]}")
    return value


class SpeedSolver:
    def __init__(self, psi: PsiEvaluator, n: int, root_rel_tol: Optional[float] = None):
        if n < 1:
            raise BadParameter(f"n must be >= 1, got {n}")
        self.psi = psi
        self.n = int(n)
        self.root_rel_tol = root_rel_tol or config.ROOT_REL_TOL
        self._quad_tol = max(min(psi.quadrature_rel_tol, 1e-10), 1e-13)
        self._horizon: Optional[float] = None

    def inverse_speed_integral(self, lo: float, hi: Optional[float] = None) -> float:
        """int_lo^hi dq / psi(q), hi defaulting to n."""
        hi = self.n if hi is None else hi
        return _log_quad(lambda q: 1.0 / self.psi(q), lo, hi, self._quad_tol)

    def horizon(self) -> float:
        """Time at which v^n reaches 1."""
        if self._horizon is None:
            self._horizon = self.inverse_speed_integral(1.0)
        return self._horizon

    def v_of_t(self, t: float) -> float:
        return v_of_t(self, t)

    def ell(self, t: Optional[float] = None) -> float:
        return ell(self, t)

    def ell_time_domain(self, t: float) -> float:
        """int_0^t v^n(u) du by direct time quadrature."""
        if t <= 0:
            return 0.0
        value, _ = integrate.quad(self.v_of_t, 0.0, t, epsabs=0.0, epsrel=1e-10, limit=200)
        return value


def v_of_t(s: SpeedSolver, t: float) -> float:
    """Solve int_v^n dq/psi = t by bracketed Newton (dv/dt = -psi(v))."""
    t = float(t)
    if t < 0:
        raise BadParameter(f"t must be nonnegative, got {t}")
    if t == 0.0:
        return float(s.n)
    horizon = s.horizon()
    if t > horizon:
        raise HorizonExceeded(f"v^{s.n}({t}) < 1 (horizon {horizon:.6g})")
    # residuals below the quadrature accuracy are not resolvable
    tol = max(s.root_rel_tol, s._quad_tol) * max(t, 1.0)

    lo, hi = 1.0, float(s.n)  # F(lo) >= t >= F(hi) = 0
    # initial guess from the Kingman-like local rate at n
    v = min(max(s.n / (1.0 + t * s.psi(s.n) / s.n), lo), hi)
    for _ in range(MAX_ROOT_ITERATIONS):
        residual = s.inverse_speed_integral(v) - t
        if abs(residual) <= tol:
            return v
        if residual > 0:
            lo = v
        else:
            hi = v
        step = v + residual * s.psi(v)
        if lo < step < hi:
            v = step
        else:
            v = math.sqrt(lo * hi)
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            return v
    logger.warning(f"root finding for v^{s.n}({t}) stopped after {MAX_ROOT_ITERATIONS} iterations")
    return v


def ell(s: SpeedSolver, t: Optional[float] = None) -> float:
    """ell(n) = int_1^n q/psi(q) dq, or ell_t(n) = int_{v^n(t)}^n q/psi(q) dq."""
    if s.n == 1:
        return 0.0
    lo = 1.0 if t is None else s.v_of_t(t)
    return _log_quad(lambda q: q / s.psi(q), lo, s.n, s._quad_tol)


def one_star(psi: PsiEvaluator, truncation: float = ONE_STAR_TRUNCATION) -> float:
    """Truncated limit of the horizon as n -> infinity (finite under CDI)."""
    return _log_quad(lambda q: 1.0 / psi(q), 1.0, truncation, max(min(psi.quadrature_rel_tol, 1e-10), 1e-13))


@dataclass(frozen=True)
class CdiVerdict:
    cdi: str  # yes / no / unknown
    basis: str  # analytic / numeric
    exponents: Optional[Dict[float, float]] = None
    asymptotic_exponent: Optional[float] = None


def comes_down_check(m: CoalescentMeasure, psi: Optional[PsiEvaluator] = None) -> CdiVerdict:
    """Coming down from infinity iff int_a^infinity dq/psi(q) < infinity."""
    part = m.nontrivial_part
    if part is None or m.kingman_mass > 0.0:
        # psi(q) >= kingman_mass q^2 / 2
        return CdiVerdict("yes", "analytic")
    if isinstance(part, LambdaBeta):
        return CdiVerdict("yes", "analytic")
    if isinstance(part, (LambdaBolthausenSznitman, LambdaAtoms, XiAtoms)):
        # psi grows like q log q or linearly
        return CdiVerdict("no", "analytic")

    psi = psi or PsiEvaluator(m)
    qs = np.asarray(CDI_GRID)
    values = np.array([psi(q) for q in qs])
    log_q, log_psi = np.log(qs), np.log(values)
    slopes = np.diff(log_psi) / np.diff(log_q)
    mids = np.exp((log_q[1:] + log_q[:-1]) / 2.0)
    exponents = {float(q): float(e) for q, e in zip(mids, slopes)}
    # slowly varying corrections (q log q) show up as e = a + b / ln q
    design = np.vstack([np.ones_like(mids), 1.0 / np.log(mids)]).T
    intercept = float(np.linalg.lstsq(design, slopes, rcond=None)[0][0])
    bounded_ratio = values[-1] / qs[-1] < 1.01 * values[-2] / qs[-2]

    if np.all(slopes >= 1.0 + CDI_MARGIN) and intercept >= 1.0 + CDI_MARGIN:
        verdict = "yes"
    elif np.all(slopes <= 1.0 - CDI_MARGIN) or intercept <= 1.0 - CDI_MARGIN or bounded_ratio:
        verdict = "no"
    else:
        verdict = "unknown"
    logger.debug(f"tail exponents {exponents}, asymptotic {intercept:.3f} -> {verdict}")
    return CdiVerdict(verdict, "numeric", exponents, intercept)
