"""Causal action, constraint functionals and Euler-Lagrange residuals."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .measure import DiscreteMeasure
from .spectral import CfsPoint


@dataclass(frozen=True)
class ActionParams:
    kappa: float = 0.0
    nu: float | None = None  # None: estimate from the measure
    bound_C: float | None = None
    probes: int = 64
    probe_radius: float | None = None  # None: half the median point norm
    seed: int = 0

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.bound_C is not None and self.bound_C <= 0:
            raise ValueError("bound_C must be positive")


def fsum2(weights, mat) -> float:
    """sum_ij w_i w_j mat_ij in a fixed order."""
    w = np.asarray(weights, dtype=float)
    return math.fsum((w[:, None] * w[None, :] * mat).ravel())


def action(m: DiscreteMeasure, p: ActionParams | None = None) -> float:
    lag, _ = m.pair_tables()
    return fsum2(m.weights, lag)


def boundedness_functional(m: DiscreteMeasure) -> float:
    _, w2 = m.pair_tables()
    return fsum2(m.weights, w2)


def trace_integral(m: DiscreteMeasure) -> float:
    return math.fsum(m.weights * m.traces())


def ell_support(m: DiscreteMeasure, kappa: float = 0.0) -> np.ndarray:
    """ell evaluated at every atom."""
    lag, w2 = m.pair_tables()
    mat = lag + kappa * w2
    return np.array([math.fsum(row * m.weights) for row in mat])


def ell_many(xs, m: DiscreteMeasure, kappa: float = 0.0) -> np.ndarray:
    xs = list(xs)
    if not xs:
        return np.zeros(0)
    mat = m.lag(xs, m.points, kappa)
    return np.array([math.fsum(row * m.weights) for row in mat])


def ell(x, m: DiscreteMeasure, kappa: float = 0.0) -> float:
    return float(ell_many([x], m, kappa)[0])


@dataclass
class NuEstimate:
    nu: float
    spread: float
    per_point: list
    excluded: list = field(default_factory=list)


def estimate_nu(m: DiscreteMeasure, kappa: float = 0.0, tol: float = 1e-14) -> NuEstimate:
    """Weighted mean of 2 ell / tr over the support."""
    if m.mode == "compact":
        return NuEstimate(0.0, 0.0, [0.0] * len(m.support))
    ells = ell_support(m, kappa)
    trs = m.traces()
    scale = max(1.0, float(np.max(np.abs(trs)))) if len(trs) else 1.0
    used, excluded, vals, wts = [], [], [], []
    for i in m.support:
        if abs(trs[i]) <= tol * scale:
            excluded.append(i)
            continue
        used.append(i)
        vals.append(2 * ells[i] / trs[i])
        wts.append(m.weights[i])
    if not vals:
        return NuEstimate(float("nan"), float("nan"), [], excluded)
    nu = math.fsum(np.multiply(vals, wts)) / math.fsum(wts)
    return NuEstimate(nu, float(max(vals) - min(vals)), vals, excluded)


@dataclass
class ElReport:
    mode: str
    ell_values: list
    trace_values: list
    nu_estimate: float
    nu_spread: float
    residual_constancy: float
    residual_minimality: float
    g_mean: float
    probe_min: float
    probe_count: int
    probe_radius: float
    seed: int
    excluded_points: list = field(default_factory=list)
    note: str = "minimality is checked on sampled probe points only"

    @property
    def residual(self) -> float:
        return max(self.residual_constancy, self.residual_minimality)

    def to_dict(self) -> dict:
        return asdict(self)


def _median_norm(m: DiscreteMeasure) -> float:
    norms = [m.points[i].norm() for i in m.support]
    return float(np.median(norms)) if norms else 1.0


def sample_probes(m: DiscreteMeasure, k: int, radius: float, rng: np.random.Generator) -> list:
    """Half the probes near support points, half drawn at the typical scale."""
    if m.mode == "compact":
        if m.kernel.sampler is None:
            return [m.points[i] for i in m.support]
        return list(m.kernel.sampler(rng, k))
    supp = m.support
    shape = m.points[supp[0]].psi.shape
    probes = []
    psi_scale = float(np.median([np.linalg.norm(m.points[i].psi, 2) for i in supp]))
    for j in range(k):
        z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        z /= np.linalg.norm(z, 2)
        if j % 2 == 0:
            base = m.points[supp[(j // 2) % len(supp)]].psi
            bnorm = max(np.linalg.norm(base, 2), 1e-300)
            step = rng.uniform(0.0, 1.0) * radius / (2 * bnorm)
            probes.append(CfsPoint(base + step * z))
        else:
            probes.append(CfsPoint(psi_scale * rng.uniform(0.5, 1.5) * z))
    return probes


def el_residual(m: DiscreteMeasure, p: ActionParams | None = None) -> ElReport:
    p = p or ActionParams()
    supp = m.support
    ells = ell_support(m, p.kappa)
    trs = m.traces()
    if m.mode == "compact":
        nu_est = NuEstimate(0.0, 0.0, [])
    else:
        nu_est = estimate_nu(m, p.kappa)
    nu = p.nu if p.nu is not None else nu_est.nu
    if not np.isfinite(nu):
        nu = 0.0
    g = ells[supp] - nu * trs[supp]
    wts = m.weights[supp]
    g_mean = math.fsum(g * wts) / math.fsum(wts)
    constancy = float(np.max(np.abs(g - g_mean))) if len(g) else 0.0

    rng = np.random.default_rng(p.seed)
    if m.mode == "compact":
        radius = 0.0
    else:
        radius = p.probe_radius if p.probe_radius is not None else 0.5 * _median_norm(m)
    probes = sample_probes(m, p.probes, radius, rng)
    if probes:
        pg = ell_many(probes, m, p.kappa) - nu * np.array([m.trace_of(y) for y in probes])
        probe_min = float(np.min(pg))
    else:
        probe_min = float("inf")
    minimality = max(0.0, g_mean - probe_min)
    return ElReport(
        mode=m.mode,
        ell_values=[float(v) for v in ells[supp]],
        trace_values=[float(v) for v in trs[supp]],
        nu_estimate=float(nu),
        nu_spread=float(nu_est.spread) if np.isfinite(nu_est.spread) else float("nan"),
        residual_constancy=constancy,
        residual_minimality=float(minimality),
        g_mean=float(g_mean),
        probe_min=probe_min,
        probe_count=len(probes),
        probe_radius=float(radius),
        seed=p.seed,
        excluded_points=list(nu_est.excluded),
    )
