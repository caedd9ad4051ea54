"""Minkowski continuum computations for the conserved current and energy.

Momentum conventions: k = (k0, kvec), the lower shell point of mass m is
k_- = (-omega, kvec) with omega = sqrt(m^2 + |kvec|^2), and
Qhat(k) = a(k^2) kslash / |k| + b(k^2) on the lower cone k^2 > 0, k0 < 0.

One-sided slopes of a + b at a shell are derivatives with respect to q^2,
taken from below and from above; c_beta is their sum.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, special

from .dirac import GAMMA, GAMMA0, IDENTITY, lower_reference, omega, projected_spinor, slash, spin_product


class OutsideConeError(ValueError):
    pass


class NegativeSlopeError(ValueError):
    pass


class LemmaPreconditionError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


# ------------------------------------------------------------ models

@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear interpolation on knots with linear extrapolation at both ends."""

    knots: tuple
    values: tuple

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if len(k) < 2 or np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing (at least two)")
        if len(self.values) != len(k):
            raise ValueError("one value per knot")

    def __call__(self, s):
        k = np.asarray(self.knots)
        v = np.asarray(self.values)
        s = np.asarray(s, dtype=float)
        out = np.interp(s, k, v)
        lo = s < k[0]
        hi = s > k[-1]
        out = np.where(lo, v[0] + (s - k[0]) * (v[1] - v[0]) / (k[1] - k[0]), out)
        out = np.where(hi, v[-1] + (s - k[-1]) * (v[-1] - v[-2]) / (k[-1] - k[-2]), out)
        return out

    def one_sided(self, s0: float, tol: float = 1e-12):
        """(slope below, slope above) at s0; s0 may sit on a knot."""
        k = np.asarray(self.knots)
        v = np.asarray(self.values)
        j = int(np.searchsorted(k, s0))
        on_knot = j < len(k) and abs(k[j] - s0) <= tol * max(1.0, abs(s0))
        seg = lambda i: (v[i + 1] - v[i]) / (k[i + 1] - k[i])
        nseg = len(k) - 1
        if on_knot:
            below = seg(max(j - 1, 0))
            above = seg(min(j, nseg - 1))
        else:
            i = min(max(j - 1, 0), nseg - 1)
            below = above = seg(i)
        return float(below), float(above)


@dataclass
class QhatModel:
    masses: np.ndarray
    weights: np.ndarray
    a: Callable
    b: Callable
    slopes: list | None = None  # [(below, above)] of a + b in q^2 per shell
    knots: tuple = ()  # q^2 values where a or b may kink
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        self.weights = np.ones_like(self.masses) if self.weights is None else np.asarray(self.weights, dtype=float)
        if np.any(self.masses <= 0):
            raise ValueError("masses must be positive")
        if len(self.weights) != len(self.masses) or np.any(self.weights <= 0):
            raise ValueError("one positive weight per mass required")
        if self.slopes is not None and len(self.slopes) != len(self.masses):
            raise ValueError("one slope pair per mass required")

    @property
    def generations(self) -> int:
        return len(self.masses)

    def h(self, s):
        return self.a(s) + self.b(s)

    def shell_slopes(self, beta: int):
        """(below, above) slopes of a + b at the shell; tabulated or measured."""
        if self.slopes is not None:
            return tuple(float(x) for x in self.slopes[beta])
        return measured_slopes(self, beta)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "masses": self.masses.tolist(), "weights": self.weights.tolist()}
        out.update(self.params)
        if self.slopes is not None:
            out["slopes"] = [{"below": b, "above": a} for b, a in self.slopes]
        return out


def measured_slopes(model: QhatModel, beta: int, rel: float = 1e-5):
    """One-sided difference quotients of a + b at m_beta^2 (Richardson in the step)."""
    s0 = model.masses[beta] ** 2
    d = rel * s0
    h0 = float(model.h(s0))
    out = []
    for sign in (-1.0, 1.0):
        d1 = (float(model.h(s0 + sign * d)) - h0) / (sign * d)
        d2 = (float(model.h(s0 + sign * d / 2)) - h0) / (sign * d / 2)
        out.append(2 * d2 - d1)
    return tuple(out)


def sampled_model(masses, q2, a_vals, b_vals, weights=None, slopes=None) -> QhatModel:
    """Model from sampled (q^2, a, b) curves, interpolated piecewise linearly."""
    q2 = tuple(float(x) for x in q2)
    a = PiecewiseLinear(q2, tuple(float(x) for x in a_vals))
    b = PiecewiseLinear(q2, tuple(float(x) for x in b_vals))
    params = {"curves": {"q2": list(q2), "a": list(a.values), "b": list(b.values)}}
    model = QhatModel(masses, weights, a, b, slopes=None, knots=q2, kind="sampled", params=params)
    table = []
    for beta, m in enumerate(model.masses):
        ba, aa = a.one_sided(m * m)
        bb, ab = b.one_sided(m * m)
        table.append((ba + bb, aa + ab))
    model.slopes = table if slopes is None else [tuple(map(float, x)) for x in slopes]
    return model


def piecewise_linear_model(masses, below, above, floor: float = 1.0, a0: float = 0.5,
                           weights=None) -> QhatModel:
    """a + b piecewise linear in q^2 with minima equal to ``floor`` on every shell.

    ``below[beta] <= 0 <= above[beta]`` are the slopes next to shell beta.
    Between neighbouring shells a + b rises to a tent.
    """
    masses = np.asarray(masses, dtype=float)
    order = np.argsort(masses)
    if np.any(order != np.arange(len(masses))):
        raise ValueError("masses must be increasing")
    below = np.asarray(below, dtype=float)
    above = np.asarray(above, dtype=float)
    shells = masses ** 2
    knots, vals = [0.0], [floor - below[0] * shells[0]]
    for beta, s in enumerate(shells):
        knots.append(s)
        vals.append(floor)
        if beta + 1 < len(shells):
            s2 = shells[beta + 1]
            up, down = above[beta], -below[beta + 1]
            if up + down > 0:
                apex = (up * s + down * s2) / (up + down)
                if s < apex < s2:
                    knots.append(apex)
                    vals.append(floor + up * (apex - s))
    tail = shells[-1] * 10.0
    knots.append(tail)
    vals.append(floor + above[-1] * (tail - shells[-1]))
    a_vals = [a0] * len(knots)
    b_vals = [v - a0 for v in vals]
    model = sampled_model(masses, knots, a_vals, b_vals, weights)
    model.kind = "sampled"
    return model


def smooth_model(masses, curvature: float = 0.2, floor: float = 1.0, a0: float = 0.5,
                 weights=None) -> QhatModel:
    """Smooth a + b = floor + curvature * prod (q^2 - m^2)^2; every c_beta is 0."""
    shells = np.asarray(masses, dtype=float) ** 2

    def h(s):
        s = np.asarray(s, dtype=float)
        return floor + curvature * np.prod([(s - t) ** 2 for t in shells], axis=0)

    a = lambda s: np.full(np.shape(s), a0, dtype=float)
    b = lambda s: h(s) - a0
    params = {"curvature": curvature, "floor": floor, "a0": a0}
    return QhatModel(masses, weights, a, b, slopes=[(0.0, 0.0)] * len(shells),
                     knots=tuple(shells.tolist()), kind="smooth", params=params)


def consistent_model(masses, weights, kappa0: float = 1.0, steepness: float = 0.5,
                     floor: float = 1.0, a0: float = 0.5) -> QhatModel:
    """Piecewise-linear model with rho_beta m_beta c_beta = kappa0 for all beta."""
    masses = np.asarray(masses, dtype=float)
    weights = np.asarray(weights, dtype=float)
    c = kappa0 / (weights * masses)
    below = -steepness * np.ones_like(masses)
    above = steepness + c
    return piecewise_linear_model(masses, below, above, floor, a0, weights)


def model_from_dict(d: dict) -> QhatModel:
    kind = d.get("kind", "sampled")
    weights = d.get("weights")
    slopes = d.get("slopes")
    if slopes is not None:
        slopes = [(float(s["below"]), float(s["above"])) for s in slopes]
    if kind == "smooth":
        model = smooth_model(d["masses"], d.get("curvature", 0.2), d.get("floor", 1.0), d.get("a0", 0.5), weights)
        if slopes is not None:
            model.slopes = slopes
        return model
    cur = d["curves"]
    return sampled_model(d["masses"], cur["q2"], cur["a"], cur["b"], weights, slopes)


def qhat_eval(model: QhatModel, k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    s = k[..., 0] ** 2 - np.sum(k[..., 1:] ** 2, axis=-1)
    if np.any(s <= 0) or np.any(k[..., 0] >= 0):
        raise OutsideConeError("Qhat is only defined inside the lower mass cone")
    a = np.asarray(model.a(s))[..., None, None]
    b = np.asarray(model.b(s))[..., None, None]
    return a * slash(k) / np.sqrt(s)[..., None, None] + b * IDENTITY


def c_beta(model: QhatModel, beta: int, tol: float = 1e-12) -> float:
    below, above = model.shell_slopes(beta)
    c = below + above
    if c < -tol * max(1.0, abs(below), abs(above)):
        raise NegativeSlopeError(f"c_{beta} = {c} is negative: the model is not admissible")
    return max(c, 0.0)


def _boost(rapidity: float, axis: int = 1) -> np.ndarray:
    lam = np.eye(4)
    ch, sh = math.cosh(rapidity), math.sinh(rapidity)
    lam[0, 0] = lam[axis, axis] = ch
    lam[0, axis] = lam[axis, 0] = sh
    return lam


def state_stability_check(model: QhatModel, q2_grid=None, tol: float = 1e-10) -> dict:
    """Check a >= 0, Lorentz invariance and a + b minimal on the shells."""
    shells = model.masses ** 2
    if q2_grid is None:
        q2_grid = np.linspace(1e-3 * shells.min(), 4 * shells.max(), 4001)
    q2_grid = np.sort(np.concatenate([np.asarray(q2_grid, dtype=float), shells]))
    a_vals = np.asarray(model.a(q2_grid))
    h_vals = np.asarray(model.h(q2_grid))
    shell_vals = np.asarray(model.h(shells), dtype=float)
    h_min = float(np.min(h_vals))
    scale = 1.0 + float(np.max(np.abs(shell_vals)))
    a_ok = bool(np.min(a_vals) >= -tol * scale)
    equal_ok = bool(np.ptp(shell_vals) <= tol * scale)
    minimal_ok = bool(h_min >= float(np.min(shell_vals)) - tol * scale)
    # Lorentz invariance: Qhat at boosted momenta uses the same a, b
    rng = np.random.default_rng(0)
    lorentz = 0.0
    for _ in range(4):
        m = rng.choice(model.masses) * rng.uniform(0.7, 1.3)
        kv = rng.normal(size=3) * 0.3
        k = np.concatenate([[-math.sqrt(m * m + kv @ kv)], kv])
        kb = _boost(rng.uniform(-0.5, 0.5)) @ k
        s1, s2 = k[0] ** 2 - kv @ kv, kb[0] ** 2 - kb[1:] @ kb[1:]
        lorentz = max(lorentz, abs(float(model.h(s1)) - float(model.h(s2))))
    lorentz_ok = lorentz <= 1e-9 * scale
    cs, c_ok, slope_dev = [], True, []
    for beta in range(model.generations):
        below, above = model.shell_slopes(beta)
        cs.append(below + above)
        c_ok &= below + above >= -tol * max(1.0, abs(below), abs(above))
        mb, ma = measured_slopes(model, beta)
        slope_dev.append(max(abs(mb - below), abs(ma - above)))
    slopes_ok = bool(max(slope_dev) <= 1e-6 * (1 + max(abs(np.asarray(cs)).max(), 1.0)))
    passed = a_ok and equal_ok and minimal_ok and lorentz_ok and bool(c_ok) and slopes_ok
    return {
        "passed": bool(passed),
        "a_nonnegative": a_ok,
        "lorentz_invariant": bool(lorentz_ok),
        "lorentz_deviation": lorentz,
        "shell_values": shell_vals.tolist(),
        "shell_values_equal": equal_ok,
        "minimal_on_shells": minimal_ok,
        "grid_minimum": h_min,
        "c_beta": [float(c) for c in cs],
        "c_nonnegative": bool(c_ok),
        "slope_table_matches_curve": slopes_ok,
        "slope_deviation": [float(x) for x in slope_dev],
        "grid_points": int(len(q2_grid)),
    }


def consistency_check(model: QhatModel, tol: float = 1e-12) -> dict:
    prods = np.array([model.weights[b] * model.masses[b] * c_beta(model, b) for b in range(model.generations)])
    devs = []
    for i in range(len(prods)):
        for j in range(i + 1, len(prods)):
            ref = max(abs(prods[i]), abs(prods[j]), 1e-300)
            devs.append({"pair": [i, j], "relative_deviation": float(abs(prods[i] - prods[j]) / ref)})
    worst = max((d["relative_deviation"] for d in devs), default=0.0)
    return {"products": prods.tolist(), "deviations": devs, "max_deviation": worst, "passed": bool(worst <= tol)}


# ------------------------------------------------------------ packets and grids

@dataclass(frozen=True)
class WavePacket:
    """chi(kvec) = amplitude exp(-|k|^2 / (2 sigma^2)) (kslash_- + m) s."""

    mass: float
    sigma: float = 0.4
    amplitude: float = 1.0
    spinor: tuple = tuple(lower_reference(0).tolist())
    generation: int = 0

    def __post_init__(self):
        if self.mass <= 0 or self.sigma <= 0:
            raise ValueError("mass and sigma must be positive")
        if len(self.spinor) != 4:
            raise ValueError("reference spinor must have 4 components")

    @property
    def s(self) -> np.ndarray:
        return np.asarray(self.spinor, dtype=complex)

    def profile(self, k):
        k = np.asarray(k, dtype=float)
        return self.amplitude * np.exp(-0.5 * (k / self.sigma) ** 2)

    def chi(self, kvec) -> np.ndarray:
        kvec = np.asarray(kvec, dtype=float)
        r = np.linalg.norm(kvec, axis=-1)
        return self.profile(r)[..., None] * projected_spinor(self.mass, kvec, self.s)

    def scaled(self, c: float) -> "WavePacket":
        return WavePacket(self.mass, self.sigma, self.amplitude * c, self.spinor, self.generation)

    def to_dict(self) -> dict:
        return {"mass": self.mass, "sigma": self.sigma, "amplitude": self.amplitude,
                "spinor": [[complex(z).real, complex(z).imag] for z in self.spinor],
                "generation": self.generation}

    @classmethod
    def from_dict(cls, d: dict) -> "WavePacket":
        sp = d.get("spinor")
        spinor = tuple(lower_reference(0).tolist()) if sp is None else tuple(complex(a, b) for a, b in sp)
        return cls(float(d["mass"]), float(d.get("sigma", 0.4)), float(d.get("amplitude", 1.0)),
                   spinor, int(d.get("generation", 0)))


@dataclass(frozen=True)
class Grid:
    radial: int = 256  # momentum nodes for closed forms
    reach: float = 10.0  # momentum cutoff in units of sigma
    theta: int = 8
    phi: int = 8
    position_k: int = 512
    position_r: int = 512
    r_decay: float = 40.0  # position cutoff in units of 1/m (and 1/sigma)
    direct_radial: int = 96
    direct_nodes: int = 48  # Gauss nodes per k0 segment
    window: float = 0.5  # k0 window half width in units of the smallest mass
    cone_fraction: float = 0.9


def _gauss(a: float, b: float, n: int):
    x, w = leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _directions(nt: int, nph: int):
    ct, wt = leggauss(nt)
    ph = 2 * np.pi * (np.arange(nph) + 0.5) / nph
    st = np.sqrt(1 - ct ** 2)
    dirs = np.stack([
        np.outer(st, np.cos(ph)).ravel(),
        np.outer(st, np.sin(ph)).ravel(),
        np.repeat(ct, nph),
    ], axis=1)
    wts = np.repeat(wt, nph) * (2 * np.pi / nph)
    return dirs, wts


def _shell_integral(packet: WavePacket, grid: Grid, power: int) -> float:
    """int d^3k/(2 pi)^3 omega^power <chi|chi> with explicit spinors."""
    k, wk = _gauss(0.0, grid.reach * packet.sigma, grid.radial)
    dirs, wd = _directions(grid.theta, grid.phi)
    kvec = k[:, None, None] * dirs[None, :, :]
    chi = packet.chi(kvec)
    sp = spin_product(chi, chi).real
    w = omega(packet.mass, k)
    ang = sp @ wd
    return math.fsum(wk * k ** 2 * w ** power * ang) / (2 * np.pi) ** 3


def _radial_transforms(packet: WavePacket, grid: Grid, powers):
    """F_p(r) = int d^3k/(2pi)^3 omega^p phi(k) e^{ikx} and F_p'(r) on r nodes."""
    m = packet.mass
    k, wk = _gauss(0.0, grid.reach * packet.sigma, grid.position_k)
    rmax = grid.r_decay * max(1.0 / m, 1.0 / packet.sigma)
    r, wr = _gauss(0.0, rmax, grid.position_r)
    phi = packet.profile(k)
    kr = np.outer(r, k)
    sin, cos = np.sin(kr), np.cos(kr)
    out = {}
    for p in powers:
        g = wk * phi * omega(m, k) ** p * k
        f = (sin @ g) / (2 * np.pi ** 2 * r)
        df = ((cos * k[None, :]) @ g - (sin @ g) / r) / (2 * np.pi ** 2 * r)
        out[p] = (f, df)
    return r, wr, out


def _bilinears(packet: WavePacket):
    s = packet.s
    return float(np.vdot(s, s).real), float(np.vdot(s, GAMMA0 @ s).real)


def current_closed(model: QhatModel, packet: WavePacket, grid: Grid = Grid()) -> dict:
    """J_bb = rho (c/2) int omega <chi|chi>, and its position-space form."""
    beta = packet.generation
    _check_packet(model, packet)
    c = c_beta(model, beta)
    rho = model.weights[beta]
    m = packet.mass
    momentum = rho * 0.5 * c * _shell_integral(packet, grid, 1)
    r, wr, F = _radial_transforms(packet, grid, (0, 1))
    (f0, d0), (f1, _) = F[0], F[1]
    ss, sgs = _bilinears(packet)
    dens = (m * m * f0 ** 2 + f1 ** 2 + d0 ** 2) * ss - 2 * m * f0 * f1 * sgs
    norm_x = 4 * np.pi * math.fsum(wr * r ** 2 * dens)  # int <psi|gamma0 psi> d^3x
    position = -rho * 0.5 * m * c * norm_x
    return {"momentum_form": momentum, "position_form": position, "c_beta": c,
            "density_integral": norm_x,
            "relative_difference": _rel(momentum, position)}


def energy_closed(model: QhatModel, packet: WavePacket, grid: Grid = Grid()) -> dict:
    """E_b = -rho (c/2) int omega^2 <chi|chi>, and the T00 position form."""
    beta = packet.generation
    _check_packet(model, packet)
    c = c_beta(model, beta)
    rho = model.weights[beta]
    m = packet.mass
    momentum = -rho * 0.5 * c * _shell_integral(packet, grid, 2)
    r, wr, F = _radial_transforms(packet, grid, (0, 1, 2))
    (f0, d0), (f1, d1), (f2, _) = F[0], F[1], F[2]
    ss, sgs = _bilinears(packet)
    re_psi_dt = (m * m * f0 * f1 + f1 * f2 + d0 * d1) * ss - m * (f0 * f2 + f1 * f1) * sgs
    t00 = -4 * np.pi * math.fsum(wr * r ** 2 * re_psi_dt)  # int -Im <psi|gamma0 d_t psi>
    position = -rho * 0.5 * m * c * t00
    cur = current_closed(model, packet, grid)["momentum_form"]
    return {"momentum_form": momentum, "position_form": position, "c_beta": c,
            "t00_integral": t00, "relative_difference": _rel(momentum, position),
            "bound_holds": bool(abs(momentum) >= m * abs(cur) * (1 - 1e-12))}


def _rel(a, b):
    return float(abs(a - b) / max(abs(a), abs(b), 1e-300))


def _check_packet(model: QhatModel, packet: WavePacket):
    beta = packet.generation
    if not 0 <= beta < model.generations:
        raise ValueError(f"packet generation {beta} not in the model")
    if abs(model.masses[beta] - packet.mass) > 1e-12 * model.masses[beta]:
        raise ValueError("packet mass does not match its generation's shell")


# ------------------------------------------------------------ direct current

def _segment_nodes(u: float, v: float, poles, eta: float, n: int):
    """Gauss nodes on [u, v], graded toward whichever endpoint is a pole."""
    near = lambda z: any(abs(z - p) <= 1e-14 * max(1.0, abs(p)) for p in poles)
    pu, pv = near(u), near(v)
    if pu and pv:
        mid = 0.5 * (u + v)
        x1, w1 = _segment_nodes(u, mid, [u], eta, n)
        x2, w2 = _segment_nodes(mid, v, [v], eta, n)
        return np.concatenate([x1, x2]), np.concatenate([w1, w2])
    if not (pu or pv):
        return _gauss(u, v, n)
    length = v - u
    t, wt = _gauss(0.0, math.log1p(length / eta), n)
    d = eta * np.expm1(t)
    dw = eta * np.exp(t) * wt
    return (u + d, dw) if pu else (v - d, dw)


def _direct_bilinears(pa: WavePacket, pb: WavePacket, k, grid: Grid):
    dirs, wd = _directions(grid.theta, grid.phi)
    kvec = k[:, None, None] * dirs[None, :, :]
    ca, cb = pa.chi(kvec), pb.chi(kvec)
    p1 = spin_product(ca, cb) @ wd
    p0 = spin_product(ca, np.einsum("ab,...b->...a", GAMMA0, cb)) @ wd
    kg = np.einsum("...j,jab->...ab", kvec, GAMMA)
    pv = spin_product(ca, np.einsum("...ab,...b->...a", kg, cb)) @ wd
    return p1, p0, pv


def current_direct(model: QhatModel, pa: WavePacket, pb: WavePacket, eta: float,
                   grid: Grid = Grid()) -> dict:
    """Im int d^4k/(2pi)^4 <chi_a i/(k0+w_a+i eta) | Qhat chi_b (-i)/(k0+w_b-i eta)>.

    The k0 integral runs over a window around the poles that stays inside the
    lower cone; spherical averages of the spinor bilinears are taken first.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    _check_packet(model, pa)
    _check_packet(model, pb)
    sig = max(pa.sigma, pb.sigma)
    k, wk = _gauss(0.0, grid.reach * sig, grid.direct_radial)
    p1, p0, pv = _direct_bilinears(pa, pb, k, grid)
    knots = np.asarray(model.knots, dtype=float)
    half = grid.window * float(np.min(model.masses))
    inner = np.zeros(len(k), dtype=complex)
    min_gap = np.inf
    for i, kk in enumerate(k):
        wa, wb = omega(pa.mass, kk), omega(pb.mass, kk)
        gap = min(wa, wb) - kk
        width = min(half, grid.cone_fraction * gap)
        min_gap = min(min_gap, width)
        lo, hi = -max(wa, wb) - width, -min(wa, wb) + width
        poles = [-wa, -wb]
        kinks = [-math.sqrt(s + kk * kk) for s in knots if s + kk * kk > 0]
        cuts = sorted({lo, hi, *[p for p in poles], *[z for z in kinks if lo < z < hi]})
        xs, ws = [], []
        for u, v in zip(cuts[:-1], cuts[1:]):
            if v - u <= 0:
                continue
            x, w = _segment_nodes(u, v, poles, eta, grid.direct_nodes)
            xs.append(x)
            ws.append(w)
        k0 = np.concatenate(xs)
        w0 = np.concatenate(ws)
        s = k0 ** 2 - kk * kk
        f = model.a(s) / np.sqrt(s) * (k0 * p0[i] - pv[i]) + model.b(s) * p1[i]
        kern = -1.0 / ((k0 + wa - 1j * eta) * (k0 + wb - 1j * eta))
        inner[i] = np.sum(w0 * kern * f) / (2 * np.pi)
    total = np.sum(wk * k ** 2 * inner) / (2 * np.pi) ** 3
    weight = math.sqrt(model.weights[pa.generation] * model.weights[pb.generation])
    return {"value": float(weight * total.imag), "eta": eta, "smallest_window": float(min_gap)}


def extrapolate_eta(etas, values) -> float:
    """Fit J(eta) = J0 + c1 eta log(eta) + c2 eta through three samples."""
    etas = np.asarray(etas, dtype=float)
    vals = np.asarray(values, dtype=float)
    basis = np.stack([np.ones_like(etas), etas * np.log(etas), etas], axis=1)
    if len(etas) != 3:
        coef, *_ = np.linalg.lstsq(basis, vals, rcond=None)
    else:
        coef = np.linalg.solve(basis, vals)
    return float(coef[0])


def current_direct_limit(model: QhatModel, pa: WavePacket, pb: WavePacket, eta0: float = 0.02,
                         grid: Grid = Grid()) -> dict:
    etas = [eta0, eta0 / 2, eta0 / 4]
    vals = [current_direct(model, pa, pb, e, grid)["value"] for e in etas]
    return {"etas": etas, "values": vals, "extrapolated": extrapolate_eta(etas, vals)}


# ------------------------------------------------------------ identities

def exint_check(eta: float = 1.0, half: str = "positive") -> dict:
    f = lambda q: q * q * eta / (q * q + eta * eta) ** 2
    lim = (0, np.inf) if half == "positive" else (-np.inf, 0)
    val, err = integrate.quad(f, *lim, epsabs=1e-14, epsrel=1e-13, limit=200)
    return {"value": val, "expected": math.pi / 4, "error": abs(val - math.pi / 4), "quad_error": err}


def _check_lemma_input(f_hat, tol=1e-10):
    w = np.linspace(-3, 3, 13)
    k = np.linspace(0, 3, 7)
    W, K = np.meshgrid(w, k, indexing="ij")
    vals = np.asarray(f_hat(W, K), dtype=complex)
    flip = np.asarray(f_hat(-W, K), dtype=complex)
    scale = 1e-300 + float(np.max(np.abs(vals)))
    if np.max(np.abs(vals + flip)) > tol * scale:
        raise LemmaPreconditionError("f_hat must be odd under k -> -k")
    if np.max(np.abs(vals.real)) > tol * scale:
        raise LemmaPreconditionError("f_hat must be purely imaginary")


@dataclass(frozen=True)
class LemmaGrid:
    n_omega: int = 240
    omega_max: float = 9.0
    n_k: int = 200
    k_max: float = 9.0
    n_space: int = 240
    space_max: float = 12.0
    n_time: int = 160
    time_max: float = 12.0


def fourier_layer_lemma(f_hat: Callable, d: int = 1, grid: LemmaGrid = LemmaGrid(),
                        check: bool = True) -> dict:
    """Both sides of the layer lemma for a radially symmetric f_hat(omega, |k|).

    lhs = int_{t<0} dt int_{t'>0} dt' int d^d y f((t, x), (t', y)), evaluated
    by transforming f_hat back to position space on quadrature grids;
    rhs = (i/2) d f_hat / d k0 at k = 0, by central differences.
    """
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    if check:
        _check_lemma_input(f_hat)
    w, ww = _gauss(-grid.omega_max, grid.omega_max, grid.n_omega)
    k, wk = _gauss(0.0, grid.k_max, grid.n_k)
    y, wy = _gauss(0.0, grid.space_max, grid.n_space)
    fh = np.asarray(f_hat(w[:, None], k[None, :]), dtype=complex)  # (omega, k)
    if d == 1:
        # int dk/(2pi) over R of an even function of k
        spatial = np.cos(np.outer(k, y)) / np.pi  # (k, y)
        measure = 2.0 * wy
        kw = wk
    elif d == 2:
        spatial = special.j0(np.outer(k, y)) / (2 * np.pi)
        measure = 2 * np.pi * y * wy
        kw = wk * k
    else:
        ky = np.outer(k, y)
        spatial = np.sin(ky) / (2 * np.pi ** 2 * y[None, :])
        measure = 4 * np.pi * y ** 2 * wy
        kw = wk * k
    s_wy = (fh * kw[None, :]) @ spatial  # f at (omega, y) in mixed representation
    y_int = s_wy @ measure  # int d^d y, per omega
    t, wt = _gauss(-grid.time_max, 0.0, grid.n_time)
    tp, wtp = _gauss(0.0, grid.time_max, grid.n_time)
    tau = t[:, None] - tp[None, :]
    phase = np.exp(-1j * w[None, None, :] * tau[:, :, None])
    g = (phase @ (ww * y_int)) / (2 * np.pi)
    lhs = complex(wt @ g @ wtp)
    h = 1e-3
    d1 = (f_hat(h, 0.0) - f_hat(-h, 0.0)) / (2 * h)
    d2 = (f_hat(h / 2, 0.0) - f_hat(-h / 2, 0.0)) / h
    rhs = complex(0.5j * (4 * d2 - d1) / 3)
    return {"lhs": [lhs.real, lhs.imag], "rhs": [rhs.real, rhs.imag], "abs_difference": abs(lhs - rhs), "d": d}


def gaussian_test_function(c: float = 1.0) -> Callable:
    """f_hat(omega, k) = c i omega exp(-omega^2 - k^2)."""
    return lambda w, k: c * 1j * np.asarray(w) * np.exp(-np.asarray(w) ** 2 - np.asarray(k) ** 2)
