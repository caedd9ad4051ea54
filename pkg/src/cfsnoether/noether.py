"""Surface layer integrals, symmetry checks and conservation verdicts."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import null_space

from .action import ell_many
from .measure import MERGE_TOL, DiscreteMeasure, Region, measure_equal, pushforward
from .variations import TAU_MATCH, PointFlow, UnitaryConjugation, Variation


class PreconditionError(ValueError):
    """A check was asked for on inputs that violate its assumptions."""


def _fsum(a) -> float:
    return math.fsum(np.ravel(a))


def _images(v: Variation, m: DiscreteMeasure, idx, tau):
    return [v.apply(i, m.points[i], tau) for i in idx]


def _region(m, omega) -> tuple[list[int], list[int]]:
    if not isinstance(omega, Region):
        omega = Region(omega)
    omega.validate(m)
    return list(omega.indices), omega.complement(m)


def surface_layer_integral(m: DiscreteMeasure, omega, v: Variation, tau: float,
                           kappa: float = 0.0) -> float:
    """Sum over x in Omega, y in M minus Omega of L(Phi x, y) - L(x, Phi y)."""
    inside, outside = _region(m, omega)
    if not inside or not outside or tau == 0:
        return 0.0
    w_in, w_out = m.weights[inside], m.weights[outside]
    x = [m.points[i] for i in inside]
    y = [m.points[j] for j in outside]
    first = m.lag(_images(v, m, inside, tau), y, kappa)
    second = m.lag(x, _images(v, m, outside, tau), kappa)
    return _fsum(w_in[:, None] * w_out[None, :] * (first - second))


@dataclass
class IdentityTerms:
    lhs: float
    middle: float
    surface: float
    residual: float
    scale: float

    def to_dict(self):
        return asdict(self)


def identity_terms(m: DiscreteMeasure, omega, v: Variation, tau: float,
                   kappa: float = 0.0) -> IdentityTerms:
    """Evaluate both sides of the surface layer identity independently.

    lhs    = sum_{x in M} sum_{y in Omega} (L(Phi x, y) - L(x, y))
    middle = sum_{x in Omega} (ell(Phi x) - ell(x))
    The identity states lhs = middle - surface.
    """
    inside, outside = _region(m, omega)
    supp = m.support
    w = m.weights
    pts = m.points
    phi_all = _images(v, m, supp, tau)

    moved = m.lag(phi_all, [pts[j] for j in inside], kappa)
    still = m.lag([pts[i] for i in supp], [pts[j] for j in inside], kappa)
    ws, wi = w[supp], w[inside]
    lhs_terms = ws[:, None] * wi[None, :] * np.stack([moved, -still])
    lhs = _fsum(lhs_terms)

    phi_in = [phi_all[supp.index(i)] for i in inside]
    ell_moved = ell_many(phi_in, m, kappa)
    ell_still = ell_many([pts[i] for i in inside], m, kappa)
    mid_terms = wi * np.stack([ell_moved, -ell_still])
    middle = _fsum(mid_terms)

    surface = surface_layer_integral(m, Region(inside), v, tau, kappa)
    scale = _fsum(np.abs(lhs_terms)) + _fsum(np.abs(mid_terms)) + abs(surface)
    if inside and outside:
        wo = w[outside]
        scale += _fsum(np.abs(wi[:, None] * wo[None, :] * m.lag(phi_in, [pts[j] for j in outside], kappa)))
    return IdentityTerms(lhs, middle, surface, abs(lhs - (middle - surface)), scale)


def identity_residual(m, omega, v, tau, kappa=0.0) -> float:
    return identity_terms(m, omega, v, tau, kappa).residual


def is_lagrangian_symmetry(v: Variation, m: DiscreteMeasure, taus, kappa: float = 0.0,
                           tol: float = 1e-10):
    """Check L(x, Phi_tau y) = L(Phi_{-tau} x, y) on all support pairs."""
    supp = m.support
    pts = [m.points[i] for i in supp]
    worst = 0.0
    for tau in taus:
        left = m.lag(pts, _images(v, m, supp, tau), kappa)
        right = m.lag(_images(v, m, supp, -tau), pts, kappa)
        scale = 1.0 + float(np.max(np.abs(left)))
        worst = max(worst, float(np.max(np.abs(left - right))) / scale)
    return worst <= tol, worst


def is_measure_symmetry(v: Variation, m: DiscreteMeasure, taus, tol: float = MERGE_TOL):
    results = {}
    for tau in taus:
        img = pushforward(m, lambda i, x: v.apply(i, x, tau), tol)
        results[float(tau)] = measure_equal(img, m, tol)
    return all(results.values()), results


def gis_residual(v: Variation, m: DiscreteMeasure, omega, tau: float, kappa: float = 0.0):
    """(lag_residual, trace_residual) of the integrated symmetry conditions."""
    inside, _ = _region(m, omega)
    supp = m.support
    ws, wi = m.weights[supp], m.weights[inside]
    pts_in = [m.points[j] for j in inside]
    moved = m.lag(_images(v, m, supp, tau), pts_in, kappa)
    still = m.lag([m.points[i] for i in supp], pts_in, kappa)
    lag = _fsum(ws[:, None] * wi[None, :] * np.stack([moved, -still]))
    tr_new = np.array([m.trace_of(x) for x in _images(v, m, inside, tau)])
    tr_old = np.array([m.trace_of(x) for x in pts_in])
    return lag, _fsum(wi * np.stack([tr_new, -tr_old]))


@dataclass
class ConservationVerdict:
    derivative_estimate: float
    fd_step: float
    richardson: bool
    error_estimate: float
    scale: float
    tolerance: float
    el_residual: float
    passed: bool
    profile: list = field(default_factory=list)
    kind: str = "ok"
    detail: str = ""

    def to_dict(self):
        return asdict(self)


def _action_scale(m: DiscreteMeasure, inside, kappa) -> float:
    lag, w2 = m.pair_tables()
    mat = lag + kappa * w2
    w = m.weights
    return _fsum(np.abs(w[inside][:, None] * w[None, :] * mat[inside, :]))


def _default_step(v: Variation):
    if v.exact_taus is not None:
        pos = [t for t in v.exact_taus if t > TAU_MATCH]
        if not pos:
            raise PreconditionError("tau table has no positive entry")
        h = min(pos)
        rich = any(abs(t - h / 2) <= TAU_MATCH for t in v.exact_taus)
        return h, rich
    return 1e-3 * v.tau_max, True


def _central(fn, h: float, richardson: bool):
    """Central difference at h (and h/2 with Richardson); returns (d, err, samples)."""
    fp, fm = fn(h), fn(-h)
    d1 = (fp - fm) / (2 * h)
    samples = [(-h, fm), (0.0, fn(0.0)), (h, fp)]
    if not richardson:
        return d1, abs(d1) * 0.0, samples
    gp, gm = fn(h / 2), fn(-h / 2)
    d2 = (gp - gm) / h
    samples[1:1] = [(-h / 2, gm)]
    samples[-1:-1] = [(h / 2, gp)]
    d = (4 * d2 - d1) / 3
    return d, abs(d - d2), samples


def _verdict(d, err, h, rich, samples, scale, el_res, tol_abs, tol_rel, slack, kind="ok", detail=""):
    tol = tol_abs + tol_rel * scale + slack * el_res
    return ConservationVerdict(
        derivative_estimate=float(d), fd_step=float(h), richardson=bool(rich),
        error_estimate=float(err), scale=float(scale), tolerance=float(tol),
        el_residual=float(el_res), passed=bool(np.isfinite(d) and abs(d) <= tol),
        profile=[[float(t), float(s)] for t, s in samples], kind=kind, detail=detail,
    )


def noether_derivative(m: DiscreteMeasure, omega, v: Variation, kappa: float = 0.0,
                       h: float | None = None, richardson: bool | None = None,
                       el_residual: float = 0.0, tol_abs: float = 1e-12,
                       tol_rel: float = 1e-6, slack: float = 10.0) -> ConservationVerdict:
    """d/dtau at 0 of the surface layer integral, with a pass/fail verdict."""
    inside, _ = _region(m, omega)
    h0, rich0 = _default_step(v)
    if h is None:
        h = h0
    if richardson is None:
        richardson = rich0
    if isinstance(v, UnitaryConjugation) and v.is_central():
        samples = [(0.0, 0.0)]
        return _verdict(0.0, 0.0, h, False, samples, 0.0, el_residual, tol_abs, tol_rel, slack,
                        detail="central generator: the variation is the identity")
    fn = lambda t: surface_layer_integral(m, inside, v, t, kappa)
    d, err, samples = _central(fn, h, richardson)
    scale = max(v.rate(), 1e-300) * _action_scale(m, inside, kappa)
    if v.exact_taus is not None:
        scale = _action_scale(m, inside, kappa) / h
    return _verdict(d, err, h, richardson, samples, scale, el_residual, tol_abs, tol_rel, slack)


@dataclass(eq=False)
class KillingVariation:
    """A measure symmetry f_tau paired with unitaries U_tau = exp(i tau A)."""

    flow: Variation
    unitaries: UnitaryConjugation
    K: np.ndarray | None = None  # columns span the exceptional subspace

    def complement_basis(self, f: int) -> np.ndarray:
        if self.K is None or np.size(self.K) == 0:
            return np.eye(f, dtype=complex)
        k = np.asarray(self.K, dtype=complex).reshape(f, -1)
        return null_space(k.conj().T)

    def mismatch(self, m: DiscreteMeasure, taus) -> float:
        """max ||psi(f_tau x) u - psi(x) U_tau^{-1} u|| over u in a basis of K-perp."""
        basis = self.complement_basis(m.hilbert_dim)
        worst = 0.0
        for tau in taus:
            uinv = self.unitaries.unitary(-tau)
            for i in m.support:
                x = m.points[i]
                fx = self.flow.apply(i, x, tau)
                e = fx.psi @ basis - x.psi @ uinv @ basis
                worst = max(worst, float(np.max(np.abs(e))) if e.size else 0.0)
        return worst


def killing_conservation_derivative(m: DiscreteMeasure, omega, kv: KillingVariation,
                                    kappa: float = 0.0, el_residual: float = 0.0,
                                    tol_abs: float = 1e-12, tol_rel: float = 1e-6,
                                    slack: float = 10.0, check_tol: float = 1e-9):
    """Derivative of the four-term surface layer sum of a Killing symmetry."""
    inside, _ = _region(m, omega)
    h_f, rich_f = _default_step(kv.flow)
    taus = [t for t in (kv.flow.exact_taus or (h_f, -h_f)) if abs(t) > TAU_MATCH]
    ok, _ = is_measure_symmetry(kv.flow, m, taus)
    tr_ok = all(
        abs(m.trace_of(kv.flow.apply(i, m.points[i], t)) - m.trace_of(m.points[i])) <= check_tol
        for t in taus for i in m.support
    )
    if not (ok and tr_ok):
        return _verdict(float("nan"), float("nan"), h_f, rich_f, [], 0.0, el_residual,
                        tol_abs, tol_rel, slack, kind="precondition",
                        detail="f_tau is not a trace-preserving measure symmetry")
    mismatch = kv.mismatch(m, taus)
    h_u, _ = _default_step(kv.unitaries)
    d_f, e_f, s_f = _central(lambda t: surface_layer_integral(m, inside, kv.flow, t, kappa), h_f, rich_f)
    if kv.unitaries.is_central():
        d_u, e_u = 0.0, 0.0
    else:
        d_u, e_u, _ = _central(lambda t: surface_layer_integral(m, inside, kv.unitaries, t, kappa),
                               h_u, True)
    d = d_f - d_u
    scale = _action_scale(m, inside, kappa) * (1.0 / h_f + kv.unitaries.rate())
    v = _verdict(d, e_f + e_u, h_f, rich_f, s_f, scale, el_residual, tol_abs, tol_rel, slack,
                 detail=f"flow part {d_f:.6e}, unitary part {d_u:.6e}, K-perp mismatch {mismatch:.3e}")
    if mismatch > check_tol * (1 + max(np.linalg.norm(m.points[i].psi) for i in m.support)):
        v.kind = "precondition"
        v.passed = False
    return v


def _atom_map(m: DiscreteMeasure, v: Variation, tau: float, tol: float):
    supp = m.support
    target = {}
    for i in supp:
        y = v.apply(i, m.points[i], tau)
        hits = [j for j in supp if m.distance(y, m.points[j]) <= tol]
        if len(hits) != 1:
            raise PreconditionError(f"atom {i} does not map onto a unique atom at tau={tau}")
        target[i] = hits[0]
    if len(set(target.values())) != len(supp):
        raise PreconditionError("flow is not bijective on the support")
    return target


@dataclass
class VolumeReduction:
    surface: float
    volume_form: float
    residual: float
    scale: float
    mean_ell_form: float | None

    def to_dict(self):
        return asdict(self)


def volume_reduction_check(m: DiscreteMeasure, omega, v: Variation, tau: float,
                           kappa: float = 0.0, tol: float = MERGE_TOL) -> VolumeReduction:
    """Compare the surface layer with the ell-weighted volume difference."""
    inside, _ = _region(m, omega)
    target = _atom_map(m, v, tau, tol)
    for i, j in target.items():
        if abs(m.weights[i] - m.weights[j]) > tol:
            raise PreconditionError("flow does not preserve the weights")
    ells = ell_many(m.points, m, kappa)
    image = {target[i] for i in inside}
    region = set(inside)
    gained = sorted(image - region)
    lost = sorted(region - image)
    terms = [m.weights[j] * ells[j] for j in gained] + [-m.weights[j] * ells[j] for j in lost]
    volume_form = math.fsum(terms)
    surface = surface_layer_integral(m, inside, v, tau, kappa)
    scale = math.fsum(abs(t) for t in terms) + abs(surface) + _action_scale(m, inside, kappa)
    supp = m.support
    spread = float(np.ptp(ells[supp])) if supp else 0.0
    mean_form = None
    if spread <= 1e-12 * (1 + float(np.max(np.abs(ells[supp])))):
        ell_bar = float(np.mean(ells[supp]))
        mean_form = ell_bar * (math.fsum(m.weights[j] for j in gained) - math.fsum(m.weights[j] for j in lost))
    return VolumeReduction(surface, volume_form, abs(surface - volume_form), scale, mean_form)
