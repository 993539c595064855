"""Quasi-Newton training: L-BFGS with a strong Wolfe line search.

``train_separate`` fits the auto-encoder on reconstruction alone and then the
predictor on frozen features; ``train_joint`` minimizes the sum of both costs
over all parameters at once.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .autoencoder import Autoencoder, reconstruction_cost
from .narx import NarxPredictor, prediction_cost

log = logging.getLogger(__name__)

CostFn = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass
class OptimizerConfig:
    memory: int = 20
    max_iters: int = 500
    grad_tol: float = 1e-6
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search: int = 40
    full_bfgs: bool = False

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.memory < 1 or self.max_iters < 0:
            raise ValueError("memory must be >= 1 and max_iters >= 0")


@dataclass
class StepRecord:
    """One accepted line-search step: enough to re-check the Wolfe conditions."""

    alpha: float
    f0: float
    f1: float
    slope0: float
    slope1: float


@dataclass
class TrainingReport:
    costs: list[float] = field(default_factory=list)
    iterations: int = 0
    reason: str = ""
    n_evals: int = 0
    steps: list[StepRecord] = field(default_factory=list)
    final_vp: Optional[float] = None
    final_vr: Optional[float] = None
    stages: list["TrainingReport"] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "costs": list(self.costs),
            "iterations": self.iterations,
            "reason": self.reason,
            "n_evals": self.n_evals,
            "final_vp": self.final_vp,
            "final_vr": self.final_vr,
            "stages": [s.to_dict() for s in self.stages],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingReport":
        return cls(
            costs=list(d["costs"]),
            iterations=d["iterations"],
            reason=d["reason"],
            n_evals=d["n_evals"],
            final_vp=d["final_vp"],
            final_vr=d["final_vr"],
            stages=[cls.from_dict(s) for s in d["stages"]],
        )


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic through (a, fa, ga), (b, fb, gb), or None."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


class _LineFunction:
    def __init__(self, fun: CostFn, x: np.ndarray, d: np.ndarray):
        self.fun, self.x, self.d = fun, x, d
        self.n_evals = 0
        self.last = None

    def __call__(self, alpha: float):
        f, g = self.fun(self.x + alpha * self.d)
        self.n_evals += 1
        slope = float(g @ self.d)
        self.last = (alpha, float(f), g, slope)
        return float(f), g, slope


def strong_wolfe(
    fun: CostFn,
    x: np.ndarray,
    d: np.ndarray,
    f0: float,
    slope0: float,
    alpha0: float,
    c1: float = 1e-4,
    c2: float = 0.9,
    max_evals: int = 40,
):
    """Step length satisfying the strong Wolfe conditions, by bracketing and zoom.

    Returns ``(alpha, f, g, slope, n_evals)``; ``alpha`` is None on failure.
    """
    phi = _LineFunction(fun, x, d)
    fail = (None, f0, None, slope0)

    def sufficient(a, fa):
        return fa <= f0 + c1 * a * slope0

    def zoom(lo, f_lo, s_lo, hi, f_hi, s_hi):
        while phi.n_evals < max_evals:
            a = _cubic_min(lo, f_lo, s_lo, hi, f_hi, s_hi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.1 * (right - left)
            if a is None or not np.isfinite(a) or a < left + margin or a > right - margin:
                a = 0.5 * (lo + hi)
            if right - left < 1e-14 * max(1.0, right):
                return fail
            fa, ga, sa = phi(a)
            if not np.isfinite(fa) or not sufficient(a, fa) or fa >= f_lo:
                hi, f_hi, s_hi = a, fa, sa
                if not np.isfinite(fa):
                    f_hi, s_hi = f_lo + abs(f_lo) + 1.0, 0.0
            else:
                if abs(sa) <= -c2 * slope0:
                    return a, fa, ga, sa
                if sa * (hi - lo) >= 0:
                    hi, f_hi, s_hi = lo, f_lo, s_lo
                lo, f_lo, s_lo = a, fa, sa
        return fail

    a_prev, f_prev, s_prev = 0.0, f0, slope0
    a = alpha0
    result = fail
    while phi.n_evals < max_evals:
        fa, ga, sa = phi(a)
        if not np.isfinite(fa):
            a = 0.5 * (a_prev + a)
            continue
        if not sufficient(a, fa) or (phi.n_evals > 1 and fa >= f_prev):
            result = zoom(a_prev, f_prev, s_prev, a, fa, sa)
            break
        if abs(sa) <= -c2 * slope0:
            result = (a, fa, ga, sa)
            break
        if sa >= 0:
            result = zoom(a, fa, sa, a_prev, f_prev, s_prev)
            break
        a_prev, f_prev, s_prev = a, fa, sa
        a = 2.0 * a
    alpha, f, g, slope = result
    return alpha, f, g, slope, phi.n_evals


def minimize(
    fun: CostFn,
    x0: np.ndarray,
    config: Optional[OptimizerConfig] = None,
    callback: Optional[Callable[[int, np.ndarray, float], None]] = None,
) -> tuple[np.ndarray, TrainingReport]:
    """Minimize ``fun`` (returning value and gradient) with L-BFGS or dense BFGS."""
    cfg = config or OptimizerConfig()
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    f = float(f)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("cost or gradient is not finite at the starting point")
    report = TrainingReport(costs=[f], n_evals=1)
    pairs: deque = deque(maxlen=cfg.memory)
    H = np.eye(x.size) if cfg.full_bfgs else None
    restarted = False

    while True:
        gnorm = float(np.linalg.norm(g))
        if gnorm < cfg.grad_tol:
            report.reason = "gradient_tolerance"
            break
        if report.iterations >= cfg.max_iters:
            report.reason = "max_iterations"
            break

        if cfg.full_bfgs:
            d = -H @ g
        else:
            d = _two_loop(g, pairs)
        slope = float(g @ d)
        if slope >= 0:
            d, slope = -g, -gnorm * gnorm
            pairs.clear()
            if H is not None:
                H = np.eye(x.size)
        fresh = not pairs and (H is None or report.iterations == 0 or restarted)
        alpha0 = min(1.0, 1.0 / gnorm) if fresh else 1.0

        alpha, f_new, g_new, slope_new, n = strong_wolfe(
            fun, x, d, f, slope, alpha0, cfg.c1, cfg.c2, cfg.max_line_search
        )
        report.n_evals += n
        if alpha is None:
            if restarted or fresh:
                report.reason = "line_search_failed"
                break
            log.debug("line search failed, restarting from steepest descent")
            pairs.clear()
            if H is not None:
                H = np.eye(x.size)
            restarted = True
            continue
        restarted = False

        s = alpha * d
        y = g_new - g
        sy = float(s @ y)
        report.steps.append(StepRecord(alpha, f, f_new, slope, slope_new))
        x = x + s
        f, g = f_new, g_new
        report.iterations += 1
        report.costs.append(f)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            if H is not None:
                if report.iterations == 1:
                    H = np.eye(x.size) * (sy / float(y @ y))
                rho = 1.0 / sy
                Hy = H @ y
                H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
            else:
                pairs.append((s, y, 1.0 / sy))
        if callback is not None:
            callback(report.iterations, x, f)
    return x, report


def _two_loop(g: np.ndarray, pairs) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def joint_objective(
    ae: Autoencoder,
    pred: NarxPredictor,
    frames: np.ndarray,
    controls: np.ndarray,
    prediction_weight: float = 1.0,
) -> CostFn:
    """``V_R + w * V_P`` as a function of the stacked (encoder, decoder, predictor) vector."""
    n_ae = ae.n_params

    def fun(theta):
        a = ae.with_params(theta[:n_ae])
        p = pred.with_params(theta[n_ae:])
        vr, g_r = reconstruction_cost(a, frames)
        if prediction_weight == 0.0:
            return vr, np.concatenate([g_r, np.zeros(pred.n_params)])
        vp, g_p = prediction_cost(a, p, frames, controls)
        g = g_p * prediction_weight
        g[:n_ae] += g_r
        return vr + prediction_weight * vp, g

    return fun


def train_joint(
    ae: Autoencoder,
    pred: NarxPredictor,
    frames: np.ndarray,
    controls: np.ndarray,
    config: Optional[OptimizerConfig] = None,
) -> tuple[Autoencoder, NarxPredictor, TrainingReport]:
    fun = joint_objective(ae, pred, frames, controls)
    theta0 = np.concatenate([ae.flatten(), pred.flatten()])
    theta, report = minimize(fun, theta0, config)
    ae_out = ae.with_params(theta[:ae.n_params])
    pred_out = pred.with_params(theta[ae.n_params:])
    report.final_vr = reconstruction_cost(ae_out, frames)[0]
    report.final_vp = prediction_cost(ae_out, pred_out, frames, controls, with_encoder_grad=False)[0]
    log.info("joint training: %s after %d iterations, V_P=%.4f V_R=%.4f",
             report.reason, report.iterations, report.final_vp, report.final_vr)
    return ae_out, pred_out, report


def train_separate(
    ae: Autoencoder,
    pred: NarxPredictor,
    frames: np.ndarray,
    controls: np.ndarray,
    config: Optional[OptimizerConfig] = None,
) -> tuple[Autoencoder, NarxPredictor, TrainingReport]:
    """Stage 1: reconstruction over the auto-encoder. Stage 2: prediction over the predictor."""

    def stage1(theta):
        return reconstruction_cost(ae.with_params(theta), frames)

    theta_ae, rep1 = minimize(stage1, ae.flatten(), config)
    ae_out = ae.with_params(theta_ae)
    n_ae = ae.n_params

    def stage2(theta):
        v, g = prediction_cost(ae_out, pred.with_params(theta), frames, controls,
                               with_encoder_grad=False)
        return v, g[n_ae:]

    theta_m, rep2 = minimize(stage2, pred.flatten(), config)
    pred_out = pred.with_params(theta_m)
    report = TrainingReport(
        costs=rep1.costs + rep2.costs,
        iterations=rep1.iterations + rep2.iterations,
        reason=rep2.reason,
        n_evals=rep1.n_evals + rep2.n_evals,
        steps=rep1.steps + rep2.steps,
        final_vr=rep1.costs[-1],
        final_vp=rep2.costs[-1],
        stages=[rep1, rep2],
    )
    log.info("separate training: V_P=%.4f V_R=%.4f", report.final_vp, report.final_vr)
    return ae_out, pred_out, report
