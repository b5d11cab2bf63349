"""Multi-restart local search over isometries.

An m x r isometry is carried as the first r columns of an m x m unitary and
moved along one-parameter subgroups ``U <- exp(-t G) U`` with ``G`` the
skew-Hermitian (Lie-algebra) gradient. All restarts advance together as one
batch; each restart keeps its own step size, so its trajectory does not depend
on how many other restarts run beside it.

Objectives either supply batched values and Euclidean gradients (see
``BatchObjective``) or are plain callables, in which case the Lie-algebra
gradient is estimated by central finite differences.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

import numpy as np

from .qstate import haar_unitary, rng_from_seed

ARMIJO = 1e-4
MAX_BACKTRACK = 40
SWEEP = 10
MEMORY = 8
T_MAX = 1e3
T_MIN = 1e-14
ROUNDOFF = 1e-15


class Direction(enum.Enum):
    MIN = "min"
    MAX = "max"


class NonFiniteObjective(FloatingPointError):
    """The objective produced NaN or infinity."""


@dataclass(frozen=True)
class OptConfig:
    restarts: int = 20
    max_iters: int = 2000
    tol: float = 1e-8
    seed: int = 0
    m_outcomes: int | None = None
    record_history: bool = False

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1:
            raise ValueError("restarts and max_iters must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.m_outcomes is not None and self.m_outcomes < 1:
            raise ValueError("m_outcomes must be positive")

    def with_(self, **kw) -> "OptConfig":
        return replace(self, **kw)


@dataclass
class OptResult:
    value: float
    argument: np.ndarray
    iterations: int
    restarts_used: int
    per_restart_values: list[float]
    direction: Direction = Direction.MIN
    seed: int = 0
    per_restart_iterations: list[int] = field(default_factory=list)
    histories: list[list[float]] | None = None

    @property
    def spread(self) -> float:
        """Gap between the best and second-best restart (0 for a single restart)."""
        vals = sorted(self.per_restart_values, reverse=self.direction is Direction.MAX)
        return abs(vals[1] - vals[0]) if len(vals) > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "per_restart_values": list(self.per_restart_values),
            "iterations": self.iterations,
            "restarts_used": self.restarts_used,
            "seed": self.seed,
            "direction": self.direction.value,
        }


class BatchObjective(Protocol):
    def __call__(self, u: np.ndarray) -> float: ...

    def values(self, us: np.ndarray) -> np.ndarray: ...

    def value_and_grad(self, us: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values and Euclidean gradients E with df = Re tr(E^dagger dU)."""
        ...


def _skew_basis(m: int) -> np.ndarray:
    """Orthonormal basis of m x m skew-Hermitian matrices under Re tr(A^dagger B)."""
    basis = []
    for j in range(m):
        x = np.zeros((m, m), complex)
        x[j, j] = 1j
        basis.append(x)
    for j in range(m):
        for k in range(j + 1, m):
            x = np.zeros((m, m), complex)
            x[j, k], x[k, j] = 1 / math.sqrt(2), -1 / math.sqrt(2)
            basis.append(x)
            y = np.zeros((m, m), complex)
            y[j, k] = y[k, j] = 1j / math.sqrt(2)
            basis.append(y)
    return np.array(basis)


def param_to_unitary(theta) -> np.ndarray:
    """exp(iH) for the Hermitian H whose m^2 real coordinates are ``theta``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    m = math.isqrt(theta.size)
    if m * m != theta.size:
        raise ValueError(f"theta must have a square length, got {theta.size}")
    h = np.einsum("k,kij->ij", theta, _skew_basis(m)) * -1j
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    return (v * np.exp(1j * w)) @ v.conj().T


def _expm_skew(g: np.ndarray, t: np.ndarray, eig=None) -> np.ndarray:
    """exp(-t G) for a batch of skew-Hermitian G, reusing a cached eigendecomposition."""
    w, v = eig if eig is not None else np.linalg.eigh(1j * g)
    # G = -i H with H = iG Hermitian, so exp(-tG) = exp(i t H)
    phase = np.exp(1j * t[:, None] * w)
    return (v * phase[:, None, :]) @ np.conj(np.swapaxes(v, -1, -2))


class _FiniteDifference:
    """Wrap a scalar callable so it satisfies the batch protocol."""

    def __init__(self, fn: Callable[[np.ndarray], float], m: int, h: float = 1e-6):
        self.fn = fn
        self.basis = _skew_basis(m)
        self.h = h

    def __call__(self, u):
        return float(self.fn(u))

    def values(self, us):
        return np.array([float(self.fn(u)) for u in us])

    def lie_grad(self, us):
        vals = self.values(us)
        grads = np.zeros((len(us),) + self.basis.shape[1:], complex)
        for b, u in enumerate(us):
            for x in self.basis:
                plus = _expm_skew(-x[None], np.array([self.h]))[0] @ u
                minus = _expm_skew(x[None], np.array([self.h]))[0] @ u
                d = (self.fn(plus) - self.fn(minus)) / (2 * self.h)
                grads[b] += d * x
        return vals, grads


def _lie_gradient(obj, us):
    if isinstance(obj, _FiniteDifference):
        return obj.lie_grad(us)
    vals, egrad = obj.value_and_grad(us)
    a = egrad @ np.conj(np.swapaxes(us, -1, -2))
    return vals, 0.5 * (a - np.conj(np.swapaxes(a, -1, -2)))


def starting_points(shape: tuple[int, int], restarts: int, seed: int) -> np.ndarray:
    """Identity start followed by Haar-random unitaries drawn from one seeded stream."""
    m, r = shape
    rng = rng_from_seed(seed)
    us = [np.eye(m, dtype=complex)]
    for _ in range(restarts - 1):
        us.append(haar_unitary(m, rng))
    return np.array(us)[:, :, :r]


def _dot(a, b):
    """Re tr(a^dagger b) over the last two axes, computed on the real views."""
    if a.strides[-1] != a.itemsize or b.strides[-1] != b.itemsize:
        a, b = np.ascontiguousarray(a), np.ascontiguousarray(b)
    return np.einsum("...ij,...ij->...", a.view(float), b.view(float))


def _lbfgs_direction(g, s_hist, y_hist, rho):
    """Two-loop recursion, batched; empty history slots carry rho = 0."""
    q = g.copy()
    # filled slots sit at the end of the history; skip the empty prefix
    filled = np.flatnonzero(np.any(rho > 0, axis=0))
    first = int(filled[0]) if filled.size else s_hist.shape[1]
    mem = range(first, s_hist.shape[1])
    alphas = []
    for i in reversed(mem):
        a = rho[:, i] * _dot(s_hist[:, i], q)
        q -= a[:, None, None] * y_hist[:, i]
        alphas.append(a)
    alphas.reverse()
    yy = _dot(y_hist[:, -1], y_hist[:, -1])
    sy = _dot(s_hist[:, -1], y_hist[:, -1])
    gamma = np.where(rho[:, -1] > 0, sy / np.where(yy > 0, yy, 1.0), 1.0)
    r = gamma[:, None, None] * q
    for a, i in zip(alphas, mem):
        b = rho[:, i] * _dot(y_hist[:, i], r)
        r += (a - b)[:, None, None] * s_hist[:, i]
    return -r


def optimize(objective, direction: Direction | str, shape: tuple[int, int], config: OptConfig | None = None) -> OptResult:
    """Best isometry of ``shape`` for ``objective`` over seeded restarts.

    Each restart runs limited-memory BFGS steps in Lie-algebra coordinates
    with Armijo backtracking, so its objective trajectory is monotone. A
    restart stops once the objective improves by less than ``config.tol``
    over ``SWEEP`` consecutive iterations, its gradient vanishes, or no step
    length gives a decrease.
    """
    config = config or OptConfig()
    direction = Direction(direction)
    m, r = shape
    if not 1 <= r <= m:
        raise ValueError(f"isometry shape must satisfy 1 <= r <= m, got {shape}")
    obj = objective if hasattr(objective, "value_and_grad") else _FiniteDifference(objective, m)
    sign = 1.0 if direction is Direction.MIN else -1.0

    def evaluate(batch):
        v = sign * np.asarray(obj.values(batch), dtype=float)
        if not np.all(np.isfinite(v)):
            raise NonFiniteObjective("objective returned a non-finite value")
        return v

    def grad(batch):
        v, g = _lie_gradient(obj, batch)
        v, g = sign * np.asarray(v, dtype=float), sign * g
        if not np.all(np.isfinite(v)) or not np.all(np.isfinite(g)):
            raise NonFiniteObjective("objective returned a non-finite value")
        return v, g

    us = starting_points(shape, config.restarts, config.seed)
    n = len(us)
    f, g = grad(us)
    s_hist = np.zeros((n, MEMORY, m, m), complex)
    y_hist = np.zeros_like(s_hist)
    rho = np.zeros((n, MEMORY))
    active = np.ones(n, bool)
    iters = np.zeros(n, int)
    recent = np.repeat(f[:, None], SWEEP + 1, axis=1)
    hist = [[float(sign * fv)] for fv in f] if config.record_history else None

    for it in range(config.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        gi = g[idx]
        d = _lbfgs_direction(gi, s_hist[idx], y_hist[idx], rho[idx])
        slope = _dot(gi, d)
        bad = slope >= 0
        if bad.any():
            d[bad] = -gi[bad]
            slope[bad] = -_dot(gi[bad], gi[bad])
            rho[idx[bad]] = 0.0
        done = -slope < 1e-28
        w, v = np.linalg.eigh(1j * d)
        ti = np.ones(idx.size)
        pending = ~done
        new_u = us[idx].copy()
        new_f = f[idx].copy()
        ng = gi.copy()
        for _ in range(MAX_BACKTRACK):
            if not pending.any():
                break
            p = np.flatnonzero(pending)
            # exp(t D) = exp(-i t H) with H = iD Hermitian
            trial = _expm_skew(None, -ti[p], (w[p], v[p])) @ us[idx][p]
            ft, gt = grad(trial)
            f0 = f[idx][p]
            ok = ft <= f0 + ARMIJO * ti[p] * slope[p]
            acc = p[ok]
            new_u[acc], new_f[acc], ng[acc] = trial[ok], ft[ok], gt[ok]
            pending[acc] = False
            rej = p[~ok]
            # minimizer of the quadratic through f0, slope and f(t), kept in [0.1t, 0.5t]
            tr, sl, dfr = ti[rej], slope[rej], ft[~ok] - f0[~ok]
            denom = 2.0 * (dfr - sl * tr)
            with np.errstate(divide="ignore", invalid="ignore"):
                tq = np.where(denom > 0, -sl * tr * tr / denom, 0.1 * tr)
            ti[rej] = np.clip(np.nan_to_num(tq, nan=0.1 * tr), 0.1 * tr, 0.5 * tr)
            # a predicted decrease at round-off level cannot be resolved; give up on the step
            tiny = (ti[rej] < T_MIN) | (-ti[rej] * sl < ROUNDOFF * np.maximum(1.0, np.abs(f0[~ok])))
            pending[rej[tiny]] = False
        moved = new_f < f[idx]
        us[idx] = new_u
        nf = new_f
        iters[idx] += 1
        if (it + 1) % 50 == 0:
            q_, r_ = np.linalg.qr(us[idx])
            dg = np.diagonal(r_, axis1=-2, axis2=-1)
            us[idx] = q_ * (dg / np.abs(dg))[:, None, :]
            nf, ng = grad(us[idx])
        step = ti[:, None, None] * d
        yv = ng - gi
        sy = _dot(step, yv)
        keep = moved & (sy > 1e-16 * np.sqrt(_dot(step, step) * _dot(yv, yv)) + 1e-300)
        kb = idx[keep]
        if kb.size:
            s_hist[kb] = np.roll(s_hist[kb], -1, axis=1)
            y_hist[kb] = np.roll(y_hist[kb], -1, axis=1)
            rho[kb] = np.roll(rho[kb], -1, axis=1)
            s_hist[kb, -1], y_hist[kb, -1], rho[kb, -1] = step[keep], yv[keep], 1.0 / sy[keep]
        f[idx], g[idx] = nf, ng
        recent[idx] = np.roll(recent[idx], -1, axis=1)
        recent[idx, -1] = nf
        if hist is not None:
            for b in idx:
                hist[b].append(float(sign * f[b]))
        swept = iters[idx] >= SWEEP
        stalled = swept & (recent[idx, 0] - nf < config.tol)
        active[idx[done | ~moved | stalled]] = False

    per = [float(sign * fv) for fv in f]
    best = int(np.argmin(f))
    arg = us[best]
    value = float(sign * evaluate(arg[None])[0])
    return OptResult(
        value=value,
        argument=arg,
        iterations=int(iters.sum()),
        restarts_used=n,
        per_restart_values=per,
        direction=direction,
        seed=config.seed,
        per_restart_iterations=iters.tolist(),
        histories=hist,
    )
