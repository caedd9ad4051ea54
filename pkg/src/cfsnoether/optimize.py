"""Constrained minimization of the causal action over atomic measures."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .action import ActionParams, ElReport, el_residual, fsum2
from .measure import CompactKernel, DiscreteMeasure
from .spectral import CfsPoint, pair_matrices

METHODS = ("projected_gradient", "frank_wolfe", "annealing")
POINT_MODES = ("full", "scale", "fixed")


class InfeasibleStart(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "projected_gradient"
    max_iters: int = 10_000
    step: float | None = None  # None: 1/Lipschitz for weights, line search for points
    h_fd: float = 1e-6
    trace_penalty: float = 1e3
    bound_penalty: float = 1e3
    trace_target: float | None = None  # None: keep the initial trace
    trace_tol: float = 1e-6
    tol: float = 1e-10
    seed: int = 0
    point_mode: str = "full"
    temperature: float = 1e-3
    stall_iters: int = 20
    stop_on: str = "el"  # "el": EL constancy residual <= tol; "objective": relative decrease <= tol

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.point_mode not in POINT_MODES:
            raise ValueError(f"point_mode must be one of {POINT_MODES}")
        if self.h_fd <= 0:
            raise ValueError("h_fd must be positive")
        if self.trace_penalty < 0 or self.bound_penalty < 0:
            raise ValueError("penalties must be nonnegative")
        if self.stop_on not in ("el", "objective"):
            raise ValueError("stop_on must be 'el' or 'objective'")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


@dataclass
class OptimizeResult:
    measure: DiscreteMeasure
    history: list
    iterations: int
    converged: bool
    budget_exhausted: bool
    el_report: ElReport
    objective: float
    notes: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "budget_exhausted": self.budget_exhausted,
            "objective": self.objective,
            "residual_constancy": self.el_report.residual_constancy,
            "residual_minimality": self.el_report.residual_minimality,
            "notes": list(self.notes),
        }


def project_simplex(v, total: float = 1.0) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = total} (sort based)."""
    v = np.asarray(v, dtype=float)
    if total <= 0:
        raise ValueError("total must be positive")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    ind = np.arange(1, len(v) + 1)
    rho = ind[u - css / ind > 0][-1]
    theta = css[rho - 1] / rho
    w = np.maximum(v - theta, 0.0)
    # put the rounding defect on the largest entry so the sum is exact
    k = int(np.argmax(w))
    w[k] += total - math.fsum(w)
    return w


# ---------------------------------------------------------------- compact

def _compact_residual(mat, w, wtol=0.0):
    ell = mat @ w
    supp = w > wtol
    s = float(w @ ell)
    constancy = float(np.max(np.abs(ell[supp] - s))) if supp.any() else 0.0
    minimality = max(0.0, s - float(np.min(ell)))
    return constancy, minimality


def minimize_compact(kernel: CompactKernel, points, cfg: OptimizerConfig | None = None,
                     initial_weights=None) -> OptimizeResult:
    """Minimize rho^T L rho over the probability simplex on fixed points."""
    cfg = cfg or OptimizerConfig()
    points = list(points)
    if not points:
        raise ValueError("need at least one point")
    mat = kernel.matrix(points)
    m = len(points)
    w = np.full(m, 1.0 / m) if initial_weights is None else project_simplex(initial_weights, 1.0)
    rng = np.random.default_rng(cfg.seed)
    lip = 2 * max(float(np.max(np.linalg.eigvalsh(mat))), 1e-300)
    step = cfg.step if cfg.step is not None else 1.0 / lip

    def objective(x):
        return fsum2(x, mat)

    s = objective(w)
    history = [{"iter": 0, "S": s, "T": 0.0, "trace": 0.0, "residual": _compact_residual(mat, w)[0]}]
    best_w, best_s = w.copy(), s
    converged = max(_compact_residual(mat, w)) <= cfg.tol
    it = 0
    temp = cfg.temperature
    while not converged and it < cfg.max_iters:
        it += 1
        grad = 2 * mat @ w
        if cfg.method == "projected_gradient":
            w_new = project_simplex(w - step * grad, 1.0)
        elif cfg.method == "frank_wolfe":
            d = -w.copy()
            d[int(np.argmin(grad))] += 1.0
            curv = float(d @ mat @ d)
            slope = float(d @ grad)
            gamma = 1.0 if curv <= 0 else min(1.0, max(0.0, -slope / (2 * curv)))
            w_new = w + gamma * d
            w_new = project_simplex(w_new, 1.0)
        else:
            i, j = rng.choice(m, size=2, replace=False)
            delta = rng.uniform(0, 1) * w[i] * min(1.0, 10 * temp + 1e-3)
            w_new = w.copy()
            w_new[i] -= delta
            w_new[j] += delta
            w_new = project_simplex(w_new, 1.0)
            s_try = objective(w_new)
            if s_try > s and rng.uniform() >= math.exp(-(s_try - s) / max(temp, 1e-300)):
                w_new = w
            temp *= 0.999
        s_new = objective(w_new)
        w, s = w_new, s_new
        if s < best_s:
            best_w, best_s = w.copy(), s
        res = _compact_residual(mat, w)
        history.append({"iter": it, "S": s, "T": 0.0, "trace": 0.0, "residual": res[0]})
        converged = max(res) <= cfg.tol
    if cfg.method == "annealing":
        w, s = best_w, best_s
        converged = max(_compact_residual(mat, w)) <= cfg.tol
    meas = DiscreteMeasure(points, w, kernel)
    report = el_residual(meas, ActionParams(seed=cfg.seed))
    notes = [] if converged else ["iteration budget exhausted; best iterate returned"]
    return OptimizeResult(meas, history, it, converged, not converged, report, s, notes)


# ---------------------------------------------------------------- CFS

class _CfsProblem:
    def __init__(self, initial: DiscreteMeasure, p: ActionParams, cfg: OptimizerConfig):
        self.base = [pt.psi for pt in initial.points]
        self.n = initial.spin_dim
        self.volume = initial.total_volume
        self.kappa = p.kappa
        self.bound = p.bound_C
        self.cfg = cfg
        tr0 = float(np.dot(initial.weights, initial.traces()))
        self.target = tr0 if cfg.trace_target is None else cfg.trace_target
        if abs(tr0 - self.target) > cfg.trace_tol * max(1.0, abs(self.target)):
            raise InfeasibleStart(
                f"initial trace integral {tr0:.6g} is not within tolerance of the target {self.target:.6g}")

    # parameters: list of per-atom arrays
    def initial_params(self):
        if self.cfg.point_mode == "full":
            return [np.concatenate([b.real.ravel(), b.imag.ravel()]) for b in self.base]
        if self.cfg.point_mode == "scale":
            return [np.ones(1) for _ in self.base]
        return [np.zeros(0) for _ in self.base]

    def point(self, i, theta) -> CfsPoint:
        mode = self.cfg.point_mode
        b = self.base[i]
        if mode == "full":
            k = b.size
            return CfsPoint((theta[:k] + 1j * theta[k:]).reshape(b.shape))
        if mode == "scale":
            return CfsPoint(np.sqrt(max(theta[0], 0.0)) * b)
        return CfsPoint(b)

    def tables(self, pts):
        return pair_matrices(pts, pts)

    def objective_parts(self, w, lag, w2, traces):
        s = fsum2(w, lag)
        t = fsum2(w, w2)
        tr = math.fsum(w * traces)
        val = s + self.kappa * t + self.cfg.trace_penalty * (tr - self.target) ** 2
        if self.bound is not None and t > self.bound:
            val += self.cfg.bound_penalty * (t - self.bound) ** 2
        return val, s, t, tr

    def evaluate(self, w, params):
        pts = [self.point(i, th) for i, th in enumerate(params)]
        lag, w2 = self.tables(pts)
        traces = np.array([p.trace() for p in pts])
        return self.objective_parts(w, lag, w2, traces), pts, lag, w2, traces

    def weight_grad(self, w, lag, w2, traces, t, tr):
        g = 2 * (lag + self.kappa * w2) @ w
        g += 2 * self.cfg.trace_penalty * (tr - self.target) * traces
        if self.bound is not None and t > self.bound:
            g += 2 * self.cfg.bound_penalty * (t - self.bound) * 2 * (w2 @ w)
        return g

    def point_grad(self, w, params, pts, lag, w2, traces):
        """Central differences, one atom at a time."""
        h = self.cfg.h_fd
        grads = []
        for i, th in enumerate(params):
            g = np.zeros_like(th)
            for k in range(th.size):
                vals = []
                for sgn in (1.0, -1.0):
                    th2 = th.copy()
                    th2[k] += sgn * h
                    p_i = self.point(i, th2)
                    new_pts = list(pts)
                    new_pts[i] = p_i
                    row_l, row_w = pair_matrices([p_i], new_pts)
                    l2, q2 = lag.copy(), w2.copy()
                    l2[i, :], l2[:, i] = row_l[0], row_l[0]
                    q2[i, :], q2[:, i] = row_w[0], row_w[0]
                    tr2 = traces.copy()
                    tr2[i] = p_i.trace()
                    vals.append(self.objective_parts(w, l2, q2, tr2)[0])
                g[k] = (vals[0] - vals[1]) / (2 * h)
            grads.append(g)
        return grads


def _measure(problem, w, params):
    return DiscreteMeasure([problem.point(i, th) for i, th in enumerate(params)], w)


def minimize_cfs(initial: DiscreteMeasure, p: ActionParams | None = None,
                 cfg: OptimizerConfig | None = None) -> OptimizeResult:
    """Joint weight / point descent with projection for the volume constraint."""
    p = p or ActionParams()
    cfg = cfg or OptimizerConfig()
    if initial.mode != "cfs":
        raise ValueError("minimize_cfs needs a CFS measure")
    prob = _CfsProblem(initial, p, cfg)
    rng = np.random.default_rng(cfg.seed)
    w = project_simplex(initial.weights, prob.volume)
    params = prob.initial_params()
    (val, s, t, tr), pts, lag, w2, traces = prob.evaluate(w, params)
    rep0 = el_residual(_measure(prob, w, params), p)
    history = [{"iter": 0, "S": s, "T": t, "trace": tr, "residual": rep0.residual_constancy}]
    notes = []
    by_el = cfg.stop_on == "el"
    converged = by_el and rep0.residual_constancy <= cfg.tol
    step = cfg.step if cfg.step is not None else 1e-2
    stalls = 0
    it = 0
    while not converged and it < cfg.max_iters:
        it += 1
        gw = prob.weight_grad(w, lag, w2, traces, t, tr)
        moving = cfg.point_mode != "fixed"
        gp = prob.point_grad(w, params, pts, lag, w2, traces) if moving else [np.zeros(0) for _ in params]
        gnorm2 = float(gw @ gw) + sum(float(g @ g) for g in gp)
        accepted = False
        if cfg.method != "annealing" and gnorm2 > 0:
            lr = step
            for _ in range(40):
                w_try = project_simplex(w - lr * gw, prob.volume)
                p_try = [th - lr * g for th, g in zip(params, gp)]
                cand = prob.evaluate(w_try, p_try)
                if cand[0][0] <= val - 1e-6 * lr * gnorm2:
                    accepted = True
                    break
                lr *= 0.5
            if accepted:
                step = min(lr * 2.0, 1e3)
        if not accepted:
            # annealing fallback near kinks (or the chosen method)
            stalls += 1
            scale = cfg.temperature * (0.97 ** it)
            w_try = project_simplex(w * np.exp(scale * rng.standard_normal(len(w))), prob.volume)
            p_try = [th + scale * np.maximum(np.abs(th), 1e-3) * rng.standard_normal(th.shape) for th in params]
            cand = prob.evaluate(w_try, p_try)
            if cand[0][0] < val:
                accepted = True
                stalls = 0
        prev = val
        if accepted:
            w, params = w_try, p_try
            (val, s, t, tr), pts, lag, w2, traces = cand
        rep = el_residual(_measure(prob, w, params), ActionParams(kappa=p.kappa, probes=0, seed=p.seed))
        history.append({"iter": it, "S": s, "T": t, "trace": tr, "residual": rep.residual_constancy})
        if by_el:
            converged = rep.residual_constancy <= cfg.tol
        else:
            converged = accepted and prev - val <= cfg.tol * max(1.0, abs(val))
        if stalls >= cfg.stall_iters:
            notes.append("stalled: no descent in line search or annealing")
            break
    final = _measure(prob, w, params)
    report = el_residual(final, p)
    exhausted = not converged and it >= cfg.max_iters
    if exhausted:
        notes.append("iteration budget exhausted; best iterate returned")
    if report.residual_constancy > rep0.residual_constancy:
        notes.append("EL constancy residual did not improve on the input")
    notes.append("fixed atom count: the optimum is taken over measures with this many atoms")
    return OptimizeResult(final, history, it, converged, exhausted, report, val, notes)
