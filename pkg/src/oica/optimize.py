"""Derivative-free minimization: Powell's conjugate-direction method.

The line search brackets a minimum with bounded golden-ratio expansion and
refines it with Brent's parabolic interpolation.  ``best_of_restarts`` runs
several independent starts and keeps the best one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Union

import numpy as np

from .errors import InvalidStartError

__all__ = ["MinimizeConfig", "MinimizeResult", "powell_minimize", "best_of_restarts"]

_GOLD = 1.618033988749895
_CGOLD = 0.3819660112501051
_TINY = 1e-21
_GROW_LIMIT = 110.0
_MAX_EXPANSIONS = 60


@dataclass(frozen=True)
class MinimizeConfig:
    """Powell settings.  ``max_iters=None`` means ``1000 * len(x0)``."""

    max_iters: Optional[int] = None
    ftol: float = 1e-10
    xtol: float = 1e-10
    restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not (self.ftol > 0 and self.xtol > 0):
            raise ValueError("tolerances must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")

    def with_(self, **kw) -> "MinimizeConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class MinimizeResult:
    x: np.ndarray
    f: float
    iters_used: int
    converged: bool
    history: tuple = field(default=(), repr=False)
    restart: int = 0


def _safe(f: Callable, x: np.ndarray) -> float:
    try:
        v = float(f(x))
    except (FloatingPointError, OverflowError, ZeroDivisionError):
        return math.inf
    return v if math.isfinite(v) else math.inf


def _bracket(phi, f0: float, step: float = 1.0):
    """Find a < b < c (or reversed) with phi(b) <= phi(a), phi(c)."""
    a, fa = 0.0, f0
    b, fb = step, phi(step)
    if fb > fa:
        a, b, fa, fb = b, a, fb, fa
    c = b + _GOLD * (b - a)
    fc = phi(c)
    n = 0
    while fb > fc and n < _MAX_EXPANSIONS:
        n += 1
        r = (b - a) * (fb - fc)
        q = (b - c) * (fb - fa)
        denom = 2.0 * math.copysign(max(abs(q - r), _TINY), q - r)
        u = b - ((b - c) * q - (b - a) * r) / denom
        ulim = b + _GROW_LIMIT * (c - b)
        if (b - u) * (u - c) > 0:
            fu = phi(u)
            if fu < fc:
                return b, u, c, fb, fu, fc
            if fu > fb:
                return a, b, u, fa, fb, fu
            u = c + _GOLD * (c - b)
            fu = phi(u)
        elif (c - u) * (u - ulim) > 0:
            fu = phi(u)
            if fu < fc:
                b, c, u = c, u, u + _GOLD * (u - c)
                fb, fc, fu = fc, fu, phi(u)
        elif (u - ulim) * (ulim - c) >= 0:
            u = ulim
            fu = phi(u)
        else:
            u = c + _GOLD * (c - b)
            fu = phi(u)
        a, b, c = b, c, u
        fa, fb, fc = fb, fc, fu
    return a, b, c, fa, fb, fc


def _brent(phi, a, b, c, fb, tol: float, maxiter: int = 500):
    lo, hi = (a, c) if a < c else (c, a)
    x = w = v = b
    fx = fw = fv = fb
    d = e = 0.0
    for _ in range(maxiter):
        xm = 0.5 * (lo + hi)
        tol1 = tol * abs(x) + 1e-11
        tol2 = 2.0 * tol1
        if abs(x - xm) <= tol2 - 0.5 * (hi - lo):
            break
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0:
                p = -p
            q = abs(q)
            etemp = e
            e = d
            if abs(p) >= abs(0.5 * q * etemp) or p <= q * (lo - x) or p >= q * (hi - x):
                e = (lo - x) if x >= xm else (hi - x)
                d = _CGOLD * e
            else:
                d = p / q
                u = x + d
                if u - lo < tol2 or hi - u < tol2:
                    d = math.copysign(tol1, xm - x)
        else:
            e = (lo - x) if x >= xm else (hi - x)
            d = _CGOLD * e
        u = x + d if abs(d) >= tol1 else x + math.copysign(tol1, d)
        fu = phi(u)
        if fu <= fx:
            if u >= x:
                lo = x
            else:
                hi = x
            v, w, x = w, x, u
            fv, fw, fx = fw, fx, fu
        else:
            if u < x:
                lo = u
            else:
                hi = u
            if fu <= fw or w == x:
                v, w = w, u
                fv, fw = fw, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return x, fx


def _line_min(f, x: np.ndarray, d: np.ndarray, fx: float, tol: float):
    def phi(t):
        return _safe(f, x + t * d)

    a, b, c, fa, fb, fc = _bracket(phi, fx)
    if not math.isfinite(fb):
        return 0.0, fx
    t, ft = _brent(phi, a, b, c, fb, tol)
    if ft < fx:
        return t, ft
    return 0.0, fx


def powell_minimize(
    f: Callable[[np.ndarray], float],
    x0,
    cfg: Optional[MinimizeConfig] = None,
    *,
    record_history: bool = False,
) -> MinimizeResult:
    """Minimize ``f`` from ``x0`` with Powell's method.

    Terminates when one sweep over the direction set improves the objective
    by less than ``ftol`` (relative), when the net step is below ``xtol``,
    or after ``max_iters`` sweeps.  The direction set is reset to the
    coordinate axes every ``n**2`` sweeps, when it becomes nearly linearly
    dependent, or after a non-finite evaluation.
    """
    cfg = cfg or MinimizeConfig()
    x = np.array(x0, dtype=float).ravel()
    n = x.size
    fx = _safe(f, x)
    if not math.isfinite(fx):
        raise InvalidStartError("objective is not finite at the start point")
    max_iters = cfg.max_iters if cfg.max_iters is not None else 1000 * max(n, 1)
    line_tol = max(1.5e-8, 100.0 * cfg.xtol)

    D = np.eye(n)
    history = [fx] if record_history else None
    iters = 0
    converged = False
    bad = [False]

    def g(z):
        v = _safe(f, z)
        if v == math.inf:
            bad[0] = True
        return v

    while iters < max_iters:
        iters += 1
        f_start = fx
        x_start = x.copy()
        big_drop, big_idx = 0.0, 0
        for i in range(n):
            f_before = fx
            t, fnew = _line_min(g, x, D[i], fx, line_tol)
            if fnew < fx:
                x = x + t * D[i]
                fx = fnew
                if history is not None:
                    history.append(fx)
            if f_before - fx > big_drop:
                big_drop, big_idx = f_before - fx, i

        if 2.0 * (f_start - fx) <= cfg.ftol * (abs(f_start) + abs(fx)) + 1e-300:
            converged = True
            break
        step = x - x_start
        step_norm = np.linalg.norm(step)
        if step_norm <= cfg.xtol * (1.0 + np.linalg.norm(x)):
            converged = True
            break

        f_ext = g(x + step)
        if f_ext < f_start:
            t = 2.0 * (f_start - 2.0 * fx + f_ext) * (f_start - fx - big_drop) ** 2
            t -= big_drop * (f_start - f_ext) ** 2
            if t < 0.0:
                u = step / step_norm
                s, fnew = _line_min(g, x, u, fx, line_tol)
                if fnew < fx:
                    x = x + s * u
                    fx = fnew
                    if history is not None:
                        history.append(fx)
                D[big_idx] = D[-1]
                D[-1] = u

        if bad[0] or iters % max(n * n, 1) == 0 or abs(np.linalg.det(D)) < 1e-12:
            D = np.eye(n)
            bad[0] = False

    f_final = _safe(f, x)
    return MinimizeResult(
        x=x, f=f_final, iters_used=iters, converged=converged,
        history=tuple(history) if history is not None else (),
    )


Sampler = Union[Callable[[np.random.Generator], np.ndarray], Iterable]


def best_of_restarts(
    f: Callable[[np.ndarray], float],
    sampler: Sampler,
    cfg: Optional[MinimizeConfig] = None,
) -> MinimizeResult:
    """Run ``cfg.restarts`` Powell minimizations and keep the best.

    ``sampler`` is either a callable drawing a start point from a numpy
    ``Generator`` seeded by ``cfg.seed``, or an iterable of start points.
    Ties are broken by restart index.
    """
    cfg = cfg or MinimizeConfig()
    rng = np.random.default_rng(cfg.seed)
    if callable(sampler):
        starts = (sampler(rng) for _ in range(cfg.restarts))
    else:
        starts = iter(sampler)
    best = None
    last_error = None
    for r in range(cfg.restarts):
        try:
            x0 = next(starts)
        except StopIteration:
            break
        try:
            res = powell_minimize(f, x0, cfg)
        except InvalidStartError as exc:
            last_error = exc
            continue
        if best is None or res.f < best.f:
            best = replace(res, restart=r)
    if best is None:
        raise last_error or InvalidStartError("no start point produced a finite objective")
    return best
