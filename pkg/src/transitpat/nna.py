"""Clark-Evans nearest-neighbour analysis of a stop network.

The nearest-neighbour index compares the observed mean nearest-neighbour
distance with the mean expected under complete spatial randomness at the same
density::

    R = r_obs / r_exp,   r_exp = 1 / (2 sqrt(rho)),   rho = N / A
    z = (r_obs - r_exp) / se,   se = 0.26136 / sqrt(N rho)

Values of R below 1 indicate clustering, near 1 randomness and above 1
dispersion. For large networks ``z`` is far in the tail, so p-values are kept
as base-10 logarithms.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import geo

CE_STD_ERROR_CONSTANT = 0.26136
DEFAULT_ALPHA = 0.01
DEFAULT_BINS = 50

# Beyond this |z| the asymptotic tail series is used instead of erfc.
ASYMPTOTIC_Z = 8.0

_LN10 = math.log(10.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def log_normal_sf(z: float) -> float:
    """Natural log of the standard normal upper tail Q(z) = P(Z > z) for z >= 0.

    Uses ``erfc`` up to ``ASYMPTOTIC_Z`` and the series
    Q(z) ~ phi(z)/z * (1 - 1/z^2 + 3/z^4) beyond it, so extreme tails never
    underflow.
    """
    z = abs(float(z))
    if z <= ASYMPTOTIC_Z:
        return math.log(0.5 * math.erfc(z / math.sqrt(2.0)))
    z2 = z * z
    return -0.5 * z2 - _LOG_SQRT_2PI - math.log(z) + math.log1p(-1.0 / z2 + 3.0 / (z2 * z2))


def log10_two_tailed_p(z: float) -> float:
    """log10 of the two-tailed p-value 2 Q(|z|), capped at 0."""
    return min(0.0, (math.log(2.0) + log_normal_sf(abs(z))) / _LN10)


def format_log10_p(log10_p: float, digits: int = 3) -> str:
    """Render a log10 p-value as ``m.mme-XXXX`` without leaving log space."""
    if log10_p == 0.0:
        return "1"
    exponent = math.floor(log10_p)
    mantissa = 10.0 ** (log10_p - exponent)
    if round(mantissa, digits - 1) >= 10.0:
        mantissa /= 10.0
        exponent += 1
    return f"{mantissa:.{digits - 1}f}e{exponent:+03d}"


def mean_nn_distance(distances) -> float:
    d = np.asarray(distances, dtype=float)
    if d.size == 0:
        raise ValueError("mean of an empty distance list")
    if (d < 0).any():
        raise ValueError("distances must be non-negative")
    return float(d.mean())


def expected_nn_distance(n: int, area: float) -> float:
    """Mean nearest-neighbour distance under complete spatial randomness."""
    if not area > 0:
        raise ValueError(f"area must be positive, got {area}")
    if n < 1:
        raise ValueError(f"point count must be positive, got {n}")
    return 1.0 / (2.0 * math.sqrt(n / area))


def nni(r_bar_a: float, r_bar_e: float) -> float:
    if not r_bar_e > 0:
        raise ValueError(f"expected distance must be positive, got {r_bar_e}")
    return r_bar_a / r_bar_e


def standard_error(n: int, rho: float) -> float:
    return CE_STD_ERROR_CONSTANT / math.sqrt(n * rho)


def z_test(r_bar_a: float, r_bar_e: float, n: int, rho: float) -> tuple[float, float]:
    """Return ``(z, log10 two-tailed p)``."""
    if n < 2:
        raise ValueError(f"z-test needs at least 2 points, got {n}")
    if not rho > 0:
        raise ValueError(f"density must be positive, got {rho}")
    z = (r_bar_a - r_bar_e) / standard_error(n, rho)
    return z, log10_two_tailed_p(z)


def density_from_expected(r_bar_e: float) -> float:
    """Invert ``r_exp = 1 / (2 sqrt(rho))``."""
    return 1.0 / (4.0 * r_bar_e * r_bar_e)


def histogram(distances, bins: int = DEFAULT_BINS) -> list[tuple[float, float, int]]:
    """Equal-width bins spanning [0, max distance]."""
    d = np.asarray(distances, dtype=float)
    top = float(d.max()) if d.size else 0.0
    counts, edges = np.histogram(d, bins=bins, range=(0.0, top if top > 0 else 1.0))
    return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


@dataclass
class NnaResult:
    r_bar_A: float
    r_bar_E: float
    R: float
    sigma_rE: float
    z: float
    log10_p_two_tailed: float
    N: int
    area: float
    rho: float
    area_method: str
    alpha: float = DEFAULT_ALPHA
    histogram: list = field(default_factory=list)

    @property
    def p_value_str(self) -> str:
        return format_log10_p(self.log10_p_two_tailed)

    @property
    def significant(self) -> bool:
        return self.log10_p_two_tailed < math.log10(self.alpha)

    @property
    def pattern(self) -> str:
        if not self.significant:
            return "random"
        return "clustered" if self.R < 1 else "dispersed"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["histogram"] = [
            {"bin_lower_m": lo, "bin_upper_m": hi, "count": c} for lo, hi, c in self.histogram
        ]
        out["p_value"] = self.p_value_str
        out["significant"] = self.significant
        out["pattern"] = self.pattern
        return out


def analyse_points(points, area_method: str = "convex_hull", histogram_bins: int = DEFAULT_BINS,
                   alpha: float = DEFAULT_ALPHA) -> NnaResult:
    """Nearest-neighbour statistics for projected points (metres)."""
    xy = geo.as_xy(points)
    if len(xy) < 3:
        raise ValueError("nearest-neighbour analysis needs at least 3 points")
    dist = geo.nearest_neighbor_distances(xy)
    sa = geo.study_area(xy, area_method)
    r_a = mean_nn_distance(dist)
    r_e = expected_nn_distance(sa.n_points, sa.area)
    z, log10_p = z_test(r_a, r_e, sa.n_points, sa.density)
    return NnaResult(
        r_bar_A=r_a,
        r_bar_E=r_e,
        R=nni(r_a, r_e),
        sigma_rE=standard_error(sa.n_points, sa.density),
        z=z,
        log10_p_two_tailed=log10_p,
        N=sa.n_points,
        area=sa.area,
        rho=sa.density,
        area_method=area_method,
        alpha=alpha,
        histogram=histogram(dist, histogram_bins),
    )


def run_nna(stops: Sequence, area_method: str = "convex_hull",
            histogram_bins: int = DEFAULT_BINS, alpha: float = DEFAULT_ALPHA,
            reference: tuple[float, float] | None = None) -> NnaResult:
    """Project stops around their mean coordinate and run the analysis."""
    coords = [(s.latitude, s.longitude) for s in stops]
    if reference is None:
        reference = geo.reference_point(coords)
    return analyse_points(geo.project_array(coords, reference), area_method, histogram_bins, alpha)


def statistic_from_summary(r_bar_a: float, r_bar_e: float, n: int) -> dict:
    """Recompute the test statistic from published summary values.

    Density is recovered by inverting the expected-distance formula, which is
    all that the summary values determine. Returns every intermediate.
    """
    rho = density_from_expected(r_bar_e)
    se = standard_error(n, rho)
    z, log10_p = z_test(r_bar_a, r_bar_e, n, rho)
    return {
        "r_bar_A": r_bar_a,
        "r_bar_E": r_bar_e,
        "N": n,
        "rho": rho,
        "area": n / rho,
        "sigma_rE": se,
        "R": nni(r_bar_a, r_bar_e),
        "z": z,
        "log10_p_two_tailed": log10_p,
        "p_value": format_log10_p(log10_p),
    }
