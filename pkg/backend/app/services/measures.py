"""
Driving measures Xi on the infinite simplex and their analytic functionals.

A measure is split into its Kingman atom (mass at the origin) and a
nontrivial part, which is either a Lambda-type family (Beta,
Bolthausen-Sznitman, finite atoms, sampled density) or a finite list of
Xi-atoms. The functionals evaluated here are psi, psi-bar, the
regularity integral and the Lambda block-merger rates.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError
from scipy import integrate, special

from ..core import config
from ..core.errors import (
    BadParameter,
    BarUnsupported,
    ConfigError,
    MassViolation,
    QuadratureFailure,
    RateOverflow,
    SimplexViolation,
    UnsupportedMeasure,
)
from ..schemas.schemas import MeasureDescription

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-12
MASS_TOL = 1e-12
SERIES_CUTOFF = 1e-3
OVERFLOW_THRESHOLD = 1e300


@dataclass(frozen=True)
class SimplexPoint:
    coordinates: Tuple[float, ...]

    @classmethod
    def of(cls, coordinates) -> "SimplexPoint":
        coords = tuple(float(x) for x in coordinates)
        for x in coords:
            if not (0.0 <= x <= 1.0):
                raise SimplexViolation(f"coordinate {x} outside [0, 1]")
        for a, b in zip(coords, coords[1:]):
            if b > a + SIMPLEX_TOL:
                raise SimplexViolation(f"coordinates not nonincreasing: {coords}")
        if sum(coords) > 1.0 + SIMPLEX_TOL:
            raise SimplexViolation(f"coordinates sum to {sum(coords)} > 1: {coords}")
        # trailing zeros carry no information
        trimmed = tuple(x for x in coords if x > 0.0)
        return cls(trimmed)

    @property
    def is_origin(self) -> bool:
        return not self.coordinates

    @property
    def total(self) -> float:
        return math.fsum(self.coordinates)

    @property
    def sum_squares(self) -> float:
        return math.fsum(x * x for x in self.coordinates)


@dataclass(frozen=True)
class LambdaBeta:
    alpha: float
    name = "beta"


@dataclass(frozen=True)
class LambdaBolthausenSznitman:
    name = "bolthausen_sznitman"

    @property
    def alpha(self) -> float:
        # Lambda = Beta(1, 1) = uniform on [0, 1]
        return 1.0


@dataclass(frozen=True)
class LambdaAtoms:
    atoms: Tuple[Tuple[float, float], ...]
    name = "lambda_atoms"


@dataclass(frozen=True)
class LambdaDensityTable:
    """Piecewise-linear density on [grid[0], grid[-1]], zero elsewhere,
    already scaled to total mass 1 - kingman_mass."""

    grid: Tuple[float, ...]
    density: Tuple[float, ...]
    name = "lambda_density"


@dataclass(frozen=True)
class XiAtoms:
    atoms: Tuple[Tuple[SimplexPoint, float], ...]
    name = "xi_atoms"


NontrivialPart = Union[LambdaBeta, LambdaBolthausenSznitman, LambdaAtoms, LambdaDensityTable, XiAtoms]


@dataclass(frozen=True)
class CoalescentMeasure:
    kingman_mass: float
    nontrivial_part: Optional[NontrivialPart] = None

    @property
    def family(self) -> str:
        if self.nontrivial_part is None:
            return "kingman"
        return self.nontrivial_part.name

    @property
    def nontrivial_mass(self) -> float:
        return 1.0 - self.kingman_mass

    @property
    def is_lambda_type(self) -> bool:
        return not isinstance(self.nontrivial_part, XiAtoms)

    def describe(self) -> Dict:
        """Structured-text form accepted back by validate_measure."""
        part = self.nontrivial_part
        doc = {"family": self.family, "kingman_mass": self.kingman_mass}
        if isinstance(part, LambdaBeta):
            doc["alpha"] = part.alpha
        elif isinstance(part, LambdaAtoms):
            doc["atoms"] = [[x, w] for x, w in part.atoms]
        elif isinstance(part, XiAtoms):
            doc["atoms"] = [[list(p.coordinates), w] for p, w in part.atoms]
        elif isinstance(part, LambdaDensityTable):
            doc["grid"] = list(part.grid)
            doc["density"] = list(part.density)
        return doc


@dataclass(frozen=True)
class RegularityResult:
    value: float
    infinite: bool = False


@dataclass(frozen=True)
class MergerRates:
    b: int
    rates: np.ndarray = field(repr=False)  # rates[k - 2] = lambda_{b,k}
    total: float

    def rate(self, k: int) -> float:
        return float(self.rates[k - 2])


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate_measure(raw) -> CoalescentMeasure:
    """Parse a measure description (dict or MeasureDescription) and check
    every invariant. Duplicate atoms are aggregated, atoms are sorted."""
    if isinstance(raw, CoalescentMeasure):
        raw = raw.describe()
    if not isinstance(raw, MeasureDescription):
        try:
            raw = MeasureDescription.model_validate(raw)
        except ValidationError as e:
            raise ConfigError(_first_error(e)) from e

    family = raw.family
    default_mass = 1.0 if family == "kingman" else 0.0
    c = float(raw.kingman_mass if raw.kingman_mass is not None else default_mass)
    if not (0.0 <= c <= 1.0 + MASS_TOL):
        raise MassViolation(f"kingman_mass {c} outside [0, 1]")
    c = min(c, 1.0)

    if family == "kingman":
        if abs(c - 1.0) > MASS_TOL:
            raise MassViolation(f"pure Kingman measure needs kingman_mass 1, got {c}")
        return CoalescentMeasure(kingman_mass=1.0)

    if c >= 1.0 - MASS_TOL:
        raise MassViolation(f"family {family} has no mass left next to kingman_mass {c}")

    if family == "beta":
        if raw.alpha is None or not (1.0 < raw.alpha < 2.0):
            raise BadParameter(f"Beta alpha must lie in (1, 2), got {raw.alpha}")
        return CoalescentMeasure(c, LambdaBeta(float(raw.alpha)))

    if family == "bolthausen_sznitman":
        return CoalescentMeasure(c, LambdaBolthausenSznitman())

    if family == "lambda_atoms":
        merged: Dict[float, float] = {}
        for x, w in raw.atoms or []:
            x, w = float(x), float(w)
            if not (0.0 < x <= 1.0):
                raise SimplexViolation(f"Lambda atom location {x} outside (0, 1]")
            if w <= 0.0:
                raise MassViolation(f"atom weight must be positive, got {w}")
            merged[x] = merged.get(x, 0.0) + w
        if not merged:
            raise BadParameter("lambda_atoms needs at least one atom")
        atoms = tuple(sorted(merged.items()))
        _check_mass(c, math.fsum(w for _, w in atoms))
        return CoalescentMeasure(c, LambdaAtoms(atoms))

    if family == "xi_atoms":
        merged_xi: Dict[SimplexPoint, float] = {}
        for coords, w in raw.atoms or []:
            if isinstance(coords, (int, float)):
                coords = [coords]
            point = SimplexPoint.of(coords)
            if point.is_origin:
                raise SimplexViolation("the origin belongs to kingman_mass, not to the Xi atoms")
            w = float(w)
            if w <= 0.0:
                raise MassViolation(f"atom weight must be positive, got {w}")
            merged_xi[point] = merged_xi.get(point, 0.0) + w
        if not merged_xi:
            raise BadParameter("xi_atoms needs at least one atom")
        atoms_xi = tuple(sorted(merged_xi.items(), key=lambda a: a[0].coordinates))
        _check_mass(c, math.fsum(w for _, w in atoms_xi))
        return CoalescentMeasure(c, XiAtoms(atoms_xi))

    if family == "lambda_density":
        grid = np.asarray(raw.grid or [], dtype=float)
        dens = np.asarray(raw.density or [], dtype=float)
        if grid.size < 2 or grid.size != dens.size:
            raise BadParameter("lambda_density needs matching grid and density of length >= 2")
        if grid[0] <= 0.0 or grid[-1] > 1.0 or np.any(np.diff(grid) <= 0):
            raise SimplexViolation("density grid must be strictly increasing inside (0, 1]")
        if np.any(dens < 0):
            raise BadParameter("density values must be nonnegative")
        mass = integrate.trapezoid(dens, grid)
        if mass <= 0.0:
            raise BadParameter("density table has zero mass")
        scaled = dens * ((1.0 - c) / mass)
        return CoalescentMeasure(c, LambdaDensityTable(tuple(grid.tolist()), tuple(scaled.tolist())))

    raise BadParameter(f"unknown measure family {family}")


def _check_mass(kingman_mass: float, weight: float):
    total = kingman_mass + weight
    if abs(total - 1.0) > MASS_TOL:
        raise MassViolation(f"total mass {total!r} != 1 (kingman_mass {kingman_mass}, atoms {weight})")


def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    loc = ".".join(str(p) for p in err.get("loc", ()))
    if err.get("type") == "extra_forbidden":
        return f"unknown key '{loc}'"
    return f"{loc}: {err.get('msg')}"


# ---------------------------------------------------------------------------
# integrand kernels
# ---------------------------------------------------------------------------

def _psi_kernel(q: float, x: float) -> float:
    """(e^{-qx} - 1 + qx) / x^2 with a 4-term series near qx = 0."""
    qx = q * x
    if qx < SERIES_CUTOFF:
        return q * q * (0.5 - qx / 6.0 + qx * qx / 24.0 - qx * qx * qx / 120.0)
    return (math.expm1(-qx) + qx) / (x * x)


def _dpsi_kernel(q: float, x: float) -> float:
    """d/dq of _psi_kernel: (1 - e^{-qx}) / x."""
    qx = q * x
    if qx < SERIES_CUTOFF:
        return q * (1.0 - qx / 2.0 + qx * qx / 6.0 - qx * qx * qx / 24.0)
    return -math.expm1(-qx) / x


def _bar_kernel(q: float, x: float) -> float:
    """((1 - x)^q - 1 + qx) / x^2, binomial series for small x."""
    if x >= 1.0:
        return q - 1.0
    if x < SERIES_CUTOFF and q * x < SERIES_CUTOFF:
        c2 = q * (q - 1.0)
        c3 = c2 * (q - 2.0)
        c4 = c3 * (q - 3.0)
        c5 = c4 * (q - 4.0)
        return c2 / 2.0 - c3 * x / 6.0 + c4 * x * x / 24.0 - c5 * x * x * x / 120.0
    return (math.exp(q * math.log1p(-x)) - 1.0 + q * x) / (x * x)


def _panel_edges(q: float) -> List[float]:
    # the kernels change on the scale x ~ 1/q
    lo = min(0.5, 1.0 / max(q, 1.0))
    # exact decades above lo; no sliver panels next to lo or 1
    decades = 10.0 ** np.arange(math.ceil(math.log10(lo)), 0)
    inner = [float(d) for d in decades if lo * (1.0 + 1e-9) < d < 1.0 - 1e-9]
    return [0.0, lo] + inner + [1.0]


def _quad(f, a: float, b: float, rel_tol: float, **kwargs) -> float:
    if b <= a:
        return 0.0
    res = integrate.quad(f, a, b, epsabs=0.0, epsrel=rel_tol, limit=200, full_output=1, **kwargs)
    value, abserr = res[0], res[1]
    if len(res) > 3 and abserr > 1e3 * rel_tol * max(abs(value), 1e-300):
        raise QuadratureFailure(f"adaptive refinement stalled on [{a}, {b}]: {res[3]}")
    return value


def _beta_integral(kernel, q: float, alpha: float, rel_tol: float) -> float:
    """int_0^1 kernel(q, x) x^{1-alpha} (1-x)^{alpha-1} dx / B(2-alpha, alpha)"""
    edges = _panel_edges(q)
    a1, a2 = 1.0 - alpha, alpha - 1.0
    total = 0.0
    for i, (lo, hi) in enumerate(zip(edges, edges[1:])):
        if i == 0:
            total += _quad(lambda x: kernel(q, x) * (1.0 - x) ** a2, lo, hi, rel_tol, weight="alg", wvar=(a1, 0.0))
        elif hi == 1.0:
            total += _quad(lambda x: kernel(q, x) * x ** a1, lo, hi, rel_tol, weight="alg", wvar=(0.0, a2))
        else:
            total += _quad(lambda x: kernel(q, x) * x ** a1 * (1.0 - x) ** a2, lo, hi, rel_tol)
    return total / special.beta(2.0 - alpha, alpha)


def _density_integral(kernel, q: float, part: LambdaDensityTable, rel_tol: float) -> float:
    grid = np.asarray(part.grid)
    dens = np.asarray(part.density)
    cuts = [e for e in _panel_edges(q) if grid[0] < e < grid[-1]]
    edges = np.unique(np.concatenate([grid, cuts]))

    def f(x):
        return kernel(q, x) * float(np.interp(x, grid, dens))

    return math.fsum(_quad(f, lo, hi, rel_tol) for lo, hi in zip(edges, edges[1:]))


def _nontrivial_integral(measure: CoalescentMeasure, kernel, q: float, rel_tol: float, xi_ok: bool = True) -> float:
    part = measure.nontrivial_part
    if part is None:
        return 0.0
    if isinstance(part, (LambdaBeta, LambdaBolthausenSznitman)):
        return measure.nontrivial_mass * _beta_integral(kernel, q, part.alpha, rel_tol)
    if isinstance(part, LambdaAtoms):
        return math.fsum(w * kernel(q, x) for x, w in part.atoms)
    if isinstance(part, LambdaDensityTable):
        return _density_integral(kernel, q, part, rel_tol)
    if isinstance(part, XiAtoms) and xi_ok:
        # sum_i x_i^2 kernel(q, x_i) = sum_i (e^{-q x_i} - 1 + q x_i)
        return math.fsum(
            w * math.fsum(x * x * kernel(q, x) for x in p.coordinates) / p.sum_squares
            for p, w in part.atoms
        )
    raise BarUnsupported(f"psi-bar is defined for Lambda-type measures only, not {measure.family}")


# ---------------------------------------------------------------------------
# psi
# ---------------------------------------------------------------------------

class PsiEvaluator:
    """psi / psi-bar of one measure with an idempotent memo.

    The memo is a plain dict keyed by (variant, q); concurrent writers store
    identical values, so no locking is needed.
    """

    def __init__(self, measure: CoalescentMeasure, quadrature_rel_tol: Optional[float] = None):
        self.measure = measure
        self.quadrature_rel_tol = quadrature_rel_tol or config.QUAD_REL_TOL
        self._cache: Dict[Tuple[str, float], float] = {}

    def __call__(self, q: float, variant: str = "standard") -> float:
        return psi(self, q, variant)

    def derivative(self, q: float) -> float:
        """psi'(q) = kingman_mass * q + int sum_i x_i (1 - e^{-q x_i}) / sum_i x_i^2 Xi'(dx)"""
        q = float(q)
        if q < 0:
            raise BadParameter(f"q must be nonnegative, got {q}")
        key = ("derivative", q)
        if key not in self._cache:
            m = self.measure
            self._cache[key] = m.kingman_mass * q + _nontrivial_integral(
                m, _dpsi_kernel, q, self.quadrature_rel_tol
            )
        return self._cache[key]

    def cached_table(self) -> List[Tuple[float, float]]:
        return sorted((q, v) for (variant, q), v in self._cache.items() if variant == "standard")


def psi(ev: PsiEvaluator, q: float, variant: str = "standard") -> float:
    """psi_Xi(q) (variant 'standard') or psi-bar(q) (variant 'bar')."""
    q = float(q)
    if q < 0 or math.isnan(q):
        raise BadParameter(f"q must be nonnegative, got {q}")
    if variant not in ("standard", "bar"):
        raise BadParameter(f"unknown psi variant {variant}")
    m = ev.measure
    if variant == "bar" and not m.is_lambda_type:
        raise BarUnsupported(f"psi-bar is defined for Lambda-type measures only, not {m.family}")
    key = (variant, q)
    cached = ev._cache.get(key)
    if cached is not None:
        return cached
    if q == 0.0:
        value = 0.0
    elif variant == "standard":
        # the origin atom contributes its analytic limit exactly
        value = m.kingman_mass * q * q / 2.0 + _nontrivial_integral(m, _psi_kernel, q, ev.quadrature_rel_tol)
    else:
        # Kingman part contributes q(q-1)/2 per unit mass
        value = m.kingman_mass * q * (q - 1.0) / 2.0 + _nontrivial_integral(
            m, _bar_kernel, q, ev.quadrature_rel_tol, xi_ok=False
        )
    ev._cache[key] = value
    return value


def bolthausen_sznitman_psi(q: float) -> float:
    """Closed form of int_0^1 (e^{-qx} - 1 + qx) / x^2 dx."""
    if q == 0:
        return 0.0
    return q * (special.exp1(q) + math.log(q) + np.euler_gamma) - q - math.expm1(-q)


def complete_monotonicity_check(ev: PsiEvaluator, q_grid=None, orders: int = 4) -> Dict[int, bool]:
    """Spot check that psi' is a Bernstein function (psi'' completely monotone):
    the k-th divided differences of sampled psi' carry the sign (-1)^(k+1)."""
    if q_grid is None:
        q_grid = np.geomspace(0.5, 64.0, 8)
    q = np.asarray(q_grid, dtype=float)
    table = np.array([ev.derivative(x) for x in q])
    scale = np.max(np.abs(table))
    verdict = {}
    diffs = table
    for k in range(1, orders + 1):
        diffs = (diffs[1:] - diffs[:-1]) / (q[k:] - q[:-k])
        sign = 1.0 if k % 2 == 1 else -1.0
        spacing = np.min(np.diff(q))
        noise = 16.0 * ev.quadrature_rel_tol * scale / spacing ** k
        verdict[k] = bool(np.all(sign * diffs >= -noise))
    return verdict


# ---------------------------------------------------------------------------
# regularity integral (R)
# ---------------------------------------------------------------------------

def regularity_integral(m: CoalescentMeasure) -> RegularityResult:
    part = m.nontrivial_part
    if part is None:
        return RegularityResult(0.0)
    if isinstance(part, XiAtoms):
        value = math.fsum(w * p.total ** 2 / p.sum_squares for p, w in part.atoms)
        if not math.isfinite(value) or value > OVERFLOW_THRESHOLD:
            return RegularityResult(math.inf, infinite=True)
        return RegularityResult(value)
    if isinstance(part, LambdaAtoms):
        return RegularityResult(math.fsum(w for _, w in part.atoms))
    if isinstance(part, LambdaDensityTable):
        return RegularityResult(float(integrate.trapezoid(part.density, part.grid)))
    return RegularityResult(m.nontrivial_mass)


# ---------------------------------------------------------------------------
# Lambda block-merger rates
# ---------------------------------------------------------------------------

class LambdaRateModel:
    """lambda_{b,k} of a Lambda-type measure, Kingman atom included at k = 2.

    Beta / Bolthausen-Sznitman rates use the log-Gamma closed form and
    a closed-form total rate; atoms are summed exactly; density tables are
    integrated on a refined fixed grid, so the consistency recursion holds
    up to rounding. Products C(b, k) * lambda_{b,k} are formed in log space.
    """

    DENSITY_POINTS = 2001

    def __init__(self, measure: CoalescentMeasure):
        if not measure.is_lambda_type:
            raise UnsupportedMeasure(f"block rates need a Lambda-type measure, not {measure.family}")
        self.measure = measure
        self.c = measure.kingman_mass
        self.part = measure.nontrivial_part
        self._totals: Dict[int, float] = {}
        self._density_cache: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        if isinstance(self.part, (LambdaBeta, LambdaBolthausenSznitman)):
            a = self.part.alpha
            self._log_w = math.log(measure.nontrivial_mass)
            self._log_b0 = math.lgamma(2.0 - a) + math.lgamma(a)
        if isinstance(self.part, LambdaDensityTable):
            grid = np.asarray(self.part.grid)
            xs = np.unique(np.concatenate([grid, np.geomspace(grid[0], grid[-1], self.DENSITY_POINTS)]))
            self._xs = xs
            self._fx = np.interp(xs, grid, np.asarray(self.part.density))

    def _density(self, b: int) -> Tuple[np.ndarray, np.ndarray]:
        """(lambda_{b,k}, C(b,k) lambda_{b,k}) for k = 2..b by trapezoid rule."""
        cached = self._density_cache.get(b)
        if cached is None:
            xs, fx = self._xs, self._fx
            k = np.arange(2, b + 1)[:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                log_term = (k - 2) * np.log(xs) + np.where(k == b, 0.0, (b - k) * np.log1p(-xs))
            log_c = _log_binomial(b)[:, None]
            rates = integrate.trapezoid(np.exp(log_term) * fx, xs, axis=1)
            terms = integrate.trapezoid(np.exp(log_term + log_c) * fx, xs, axis=1)
            if len(self._density_cache) > 256:
                self._density_cache.clear()
            cached = (rates, terms)
            self._density_cache[b] = cached
        return cached

    def rate(self, b: int, k: int) -> float:
        if not (2 <= k <= b):
            raise BadParameter(f"need 2 <= k <= b, got k={k}, b={b}")
        value = 0.0
        if self.part is not None:
            value = math.exp(self._log_binomial_free(b, k))
        if k == 2:
            value += self.c
        return value

    def _log_binomial_free(self, b: int, k: int) -> float:
        # log lambda_{b,k}, Kingman atom excluded
        part = self.part
        if isinstance(part, (LambdaBeta, LambdaBolthausenSznitman)):
            a = part.alpha
            return self._log_w + math.lgamma(k - a) + math.lgamma(b - k + a) - math.lgamma(b) - self._log_b0
        if isinstance(part, LambdaAtoms):
            return self._log_atoms(b, k, 0.0)
        value = self._density(b)[0][k - 2]
        return math.log(value) if value > 0.0 else -math.inf

    def _log_atoms(self, b: int, k: int, shift: float) -> float:
        """log(e^shift * lambda_{b,k}) for a list of Lambda atoms."""
        total = 0.0
        for x, w in self.part.atoms:
            if x >= 1.0:
                if k == b:
                    total += w * math.exp(shift)
            else:
                total += w * math.exp(shift + (k - 2) * math.log(x) + (b - k) * math.log1p(-x))
        return math.log(total) if total > 0.0 else -math.inf

    def term(self, b: int, k: int) -> float:
        """C(b, k) * lambda_{b,k}: rate of a merger of one given-size group."""
        log_c = math.lgamma(b + 1) - math.lgamma(k + 1) - math.lgamma(b - k + 1)
        value = 0.0
        part = self.part
        if isinstance(part, (LambdaBeta, LambdaBolthausenSznitman)):
            value = math.exp(log_c + self._log_binomial_free(b, k))
        elif isinstance(part, LambdaAtoms):
            value = math.exp(self._log_atoms(b, k, log_c))
        elif isinstance(part, LambdaDensityTable):
            value = float(self._density(b)[1][k - 2])
        if k == 2:
            value += self.c * b * (b - 1) / 2.0
        return value

    def rates(self, b: int) -> np.ndarray:
        part = self.part
        k = np.arange(2, b + 1, dtype=float)
        if isinstance(part, LambdaDensityTable):
            out = np.array(self._density(b)[0], copy=True)
        elif isinstance(part, (LambdaBeta, LambdaBolthausenSznitman)):
            a = part.alpha
            out = np.exp(
                self._log_w + special.gammaln(k - a) + special.gammaln(b - k + a)
                - special.gammaln(b) - self._log_b0
            )
        elif isinstance(part, LambdaAtoms):
            out = np.zeros(b - 1)
            for x, w in part.atoms:
                out += w * np.power(x, k - 2) * np.power(1.0 - x, b - k)
        else:
            out = np.zeros(b - 1)
        out[0] += self.c
        return out

    def total(self, b: int) -> float:
        """lambda_b = sum_k C(b, k) lambda_{b,k}"""
        if b < 2:
            return 0.0
        cached = self._totals.get(b)
        if cached is not None:
            return cached
        part = self.part
        value = self.c * b * (b - 1) / 2.0
        if isinstance(part, (LambdaBeta, LambdaBolthausenSznitman)):
            a = part.alpha
            value += math.exp(
                self._log_w + math.log(b - 1) + math.lgamma(b + a - 1.0) - math.lgamma(b) - math.lgamma(a + 1.0)
            )
        elif isinstance(part, LambdaAtoms):
            for x, w in part.atoms:
                if x >= 1.0:
                    value += w
                    continue
                # (1 - (1-x)^b - b x (1-x)^{b-1}) / x^2
                no_merger = -math.expm1(b * math.log1p(-x)) - b * x * math.exp((b - 1) * math.log1p(-x))
                value += w * no_merger / (x * x)
        elif isinstance(part, LambdaDensityTable):
            value += float(np.sum(self._density(b)[1]))
        if not math.isfinite(value):
            raise RateOverflow(f"total merger rate overflows at b={b}")
        self._totals[b] = value
        return value

    def sample_k(self, b: int, u: float) -> int:
        """Inverse-CDF draw of the merger size k given u ~ U(0, 1)."""
        if self.part is None:
            return 2
        target = u * self.total(b)
        if isinstance(self.part, LambdaDensityTable):
            weights = np.cumsum(self._density(b)[1])
            weights[0] += self.c * b * (b - 1) / 2.0
            return int(min(np.searchsorted(weights, target, side="right"), b - 2)) + 2
        acc = 0.0
        last_positive = 2
        for k in range(2, b + 1):
            term = self.term(b, k)
            if term > 0.0:
                last_positive = k
            acc += term
            if acc >= target:
                return k
        return last_positive


def _log_binomial(b: int) -> np.ndarray:
    k = np.arange(2, b + 1)
    return special.gammaln(b + 1) - special.gammaln(k + 1) - special.gammaln(b - k + 1)


def _weighted_sum(b: int, rates: np.ndarray, factor=1.0) -> float:
    with np.errstate(divide="ignore"):
        return float(np.sum(factor * np.exp(_log_binomial(b) + np.log(rates))))


def merger_rates(m: CoalescentMeasure, b: int) -> MergerRates:
    if b < 2:
        raise BadParameter(f"b must be >= 2, got {b}")
    model = LambdaRateModel(m)
    rates = model.rates(b)
    if np.any(rates < 0):
        raise RateOverflow(f"negative block rate at b={b}")
    total = _weighted_sum(b, rates)
    if not math.isfinite(total):
        raise RateOverflow(f"total merger rate overflows at b={b}")
    return MergerRates(b=b, rates=rates, total=total)


def block_drift(m: CoalescentMeasure, b: int) -> float:
    """sum_k (k-1) C(b,k) lambda_{b,k}, equal to psi-bar(b) for integer b."""
    r = merger_rates(m, b)
    return _weighted_sum(b, r.rates, np.arange(1, b))
