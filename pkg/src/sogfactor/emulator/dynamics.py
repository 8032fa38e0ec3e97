"""Equations of motion.

Two flows are available, selected by ``DesignParams.dynamics``.

``score`` (default). Every terminal voltage feeds a Schmitt latch whose
output is the bit the units see. A violated unit drives each terminal whose
flip would shrink its integer gap, with weight ``w * min(1, |a| / gap)``.
A satisfied unit holds (weight ``-w``) terminals whose flip would break it.
A terminal with positive net drive slews toward the opposite rail; any
other terminal relaxes to its latched rail. Unit weights are
``w = gain * (1 + memory)``; memory grows while the unit is violated and
decays once it is satisfied.

``reference``. Continuous gaps on the normalized rows:
``dv = -sum gain (1 + x) a 1[g > 0]`` and ``dx = growth g - decay x 1[g = 0]``.

:func:`step` is the numpy implementation; :func:`integrate` runs many steps
in a compiled loop with identical arithmetic.
"""
from __future__ import annotations

from typing import Tuple

import numba as nb
import numpy as np

from .circuit import Circuit

__all__ = ["EmulatorError", "rates", "velocity", "step", "integrate", "MODE"]

MODE = {"score": 0, "reference": 1}


class EmulatorError(FloatingPointError):
    """The state left the finite domain; the run is aborted."""


def _term_units(c: Circuit) -> np.ndarray:
    u = c.units
    return np.repeat(np.arange(u.n_units), np.diff(u.indptr))


def rates(c: Circuit) -> Tuple[np.ndarray, np.ndarray]:
    """Raw time derivatives ``(dv/dt, dx/dt)`` at the current state."""
    u = c.units
    tu = _term_units(c)
    w = c.gain * (1.0 + c.memory)
    if c.params.dynamics == "score":
        gap = u.activities(c.latch) - u.rhs
        viol = gap > 0
        lt = c.latch[u.cols]
        helpful = ((u.coef > 0) & (lt == 1)) | ((u.coef < 0) & (lt == 0))
        gt = gap[tu]
        absa = np.abs(u.coef)
        with np.errstate(divide="ignore", invalid="ignore"):
            make = w[tu] * np.minimum(1.0, absa / np.where(gt > 0, gt, 1))
        contrib = np.where(viol[tu], np.where(helpful, make, 0.0),
                           np.where(~helpful & (absa > -gt), -w[tu], 0.0))
        drive = np.bincount(u.cols, weights=contrib, minlength=c.n_vars)
        kappa, relax = c.params.drive_scale, c.params.relax
        toward = 1.0 - 2.0 * c.latch
        dv = np.where(
            drive > 0,
            c.speed * np.minimum(1.0, kappa * drive) * toward,
            c.speed * relax * (c.latch - c.voltages),
        )
        dx = np.where(viol, c.growth_rate, -c.decay * c.memory)
    else:
        s = np.bincount(tu, weights=u.coef_n * c.voltages[u.cols], minlength=u.n_units)
        g = np.maximum(0.0, s - u.rhs_n)
        on = g > 0
        contrib = np.where(on[tu], w[tu] * u.coef_n, 0.0)
        dv = -c.speed * np.bincount(u.cols, weights=contrib, minlength=c.n_vars)
        dx = np.where(on, c.growth_rate * g, -c.decay * c.memory)
    return dv, dx


def velocity(c: Circuit) -> Tuple[np.ndarray, np.ndarray]:
    """Voltage rates projected onto the box, raw memory rates."""
    dv, dx = rates(c)
    v = c.voltages
    dv = np.where(((v <= 0) & (dv < 0)) | ((v >= 1) & (dv > 0)), 0.0, dv)
    return dv, dx


def _relatch(c: Circuit) -> None:
    th, hy = c.params.threshold, c.params.hysteresis
    v = c.voltages
    c.latch = np.where(v > th + hy, 1, np.where(v < th - hy, 0, c.latch)).astype(np.int64)


def step(c: Circuit, dt: float = None) -> Circuit:
    """One explicit Euler step, in place. Returns the circuit."""
    dt = c.params.dt if dt is None else dt
    dv, dx = rates(c)
    v = c.voltages + dt * dv
    x = c.memory + dt * dx
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(x))):
        raise EmulatorError(f"non-finite state at t={c.time:.6g} us")
    c.voltages = np.clip(v, 0.0, 1.0)
    c.memory = np.clip(x, 0.0, c.memory_cap)
    _relatch(c)
    c.time += dt
    return c


@nb.njit(cache=True, nogil=True)
def _kernel(mode, indptr, cols, coef, rhs, coef_n, rhs_n, unit_scale, gain, growth, decay, cap,
            speed, v, latch, x, dt, th, hys, kappa, relax, n_steps, check_every, probes,
            trace_step, trace_unsat, trace_score, probe_out):
    M = len(rhs)
    N = len(v)
    S = np.zeros(N)
    gap = np.zeros(M, np.int64)
    n_rec = 0
    best = np.inf
    step = 0
    while True:
        # digital readout (score mode uses it for the dynamics too)
        uns = 0
        score = 0.0
        for m in range(M):
            s = 0
            for t in range(indptr[m], indptr[m + 1]):
                s += coef[t] * latch[cols[t]]
            gap[m] = s - rhs[m]
            if gap[m] > 0:
                uns += 1
                score += gap[m] * unit_scale[m]
        if step % check_every == 0 or step == n_steps:
            if n_rec < len(trace_step):
                trace_step[n_rec] = step
                trace_unsat[n_rec] = uns
                trace_score[n_rec] = score
                for k in range(len(probes)):
                    probe_out[n_rec, k] = v[probes[k]]
                n_rec += 1
            if score < best:
                best = score
            if uns == 0:
                return step, 1, n_rec, best
        if step >= n_steps:
            return step, 0, n_rec, best
        S[:] = 0.0
        if mode == 0:
            for m in range(M):
                w = gain[m] * (1.0 + x[m])
                g = gap[m]
                if g > 0:
                    for t in range(indptr[m], indptr[m + 1]):
                        a = coef[t]
                        j = cols[t]
                        if (a > 0 and latch[j] == 1) or (a < 0 and latch[j] == 0):
                            r = abs(a) / g
                            S[j] += w * (r if r < 1.0 else 1.0)
                        else:
                            S[j] += 0.0
                else:
                    for t in range(indptr[m], indptr[m + 1]):
                        a = coef[t]
                        j = cols[t]
                        if (a > 0 and latch[j] == 1) or (a < 0 and latch[j] == 0):
                            S[j] += 0.0
                        elif abs(a) > -g:
                            S[j] += -w
                        else:
                            S[j] += 0.0
            for j in range(N):
                if S[j] > 0:
                    r = kappa * S[j]
                    if r > 1.0:
                        r = 1.0
                    dv = speed[j] * r * (1.0 - 2.0 * latch[j])
                else:
                    dv = speed[j] * relax * (latch[j] - v[j])
                S[j] = dv
            for m in range(M):
                if gap[m] > 0:
                    x[m] = x[m] + dt * growth[m]
                else:
                    x[m] = x[m] + dt * (-decay[m] * x[m])
        else:
            for m in range(M):
                s = 0.0
                for t in range(indptr[m], indptr[m + 1]):
                    s += coef_n[t] * v[cols[t]]
                g = s - rhs_n[m]
                if g > 0:
                    w = gain[m] * (1.0 + x[m])
                    for t in range(indptr[m], indptr[m + 1]):
                        S[cols[t]] += w * coef_n[t]
                    x[m] = x[m] + dt * (growth[m] * g)
                else:
                    x[m] = x[m] + dt * (-decay[m] * x[m])
            for j in range(N):
                S[j] = -speed[j] * S[j]
        ok = True
        for m in range(M):
            if not np.isfinite(x[m]):
                ok = False
            if x[m] < 0.0:
                x[m] = 0.0
            elif x[m] > cap[m]:
                x[m] = cap[m]
        for j in range(N):
            vj = v[j] + dt * S[j]
            if not np.isfinite(vj):
                ok = False
            if vj < 0.0:
                vj = 0.0
            elif vj > 1.0:
                vj = 1.0
            v[j] = vj
            if vj > th + hys:
                latch[j] = 1
            elif vj < th - hys:
                latch[j] = 0
        if not ok:
            return step, -1, n_rec, best
        step += 1


def integrate(c: Circuit, n_steps: int, check_every: int = None, max_records: int = None):
    """Advance ``c`` by up to ``n_steps`` steps, stopping at the first satisfied check.

    Returns ``(steps, converged, trace_steps, trace_unsat, trace_score, probe_samples, best_score)``.
    """
    p = c.params
    check_every = check_every or p.check_every
    n_checks = n_steps // check_every + 2
    cap = n_checks if max_records is None else min(n_checks, max_records)
    u = c.units
    unit_scale = 1.0 / u.maxabs
    probes = np.asarray(c.probes, dtype=np.int64)
    ts = np.zeros(cap, np.int64)
    tu = np.zeros(cap, np.int64)
    tsc = np.zeros(cap)
    pv = np.zeros((cap, len(probes)))
    latch = c.latch.astype(np.int64)
    steps, conv, n_rec, best = _kernel(
        MODE[p.dynamics], u.indptr, u.cols, u.coef, u.rhs, u.coef_n, u.rhs_n, unit_scale,
        c.gain, c.growth_rate, c.decay, c.memory_cap, c.speed,
        c.voltages, latch, c.memory, p.dt, p.threshold, p.hysteresis, p.drive_scale, p.relax,
        int(n_steps), int(check_every), probes, ts, tu, tsc, pv,
    )
    c.latch = latch
    c.time += steps * p.dt
    if conv < 0:
        raise EmulatorError(f"non-finite state at t={c.time:.6g} us")
    return steps, bool(conv), ts[:n_rec], tu[:n_rec], tsc[:n_rec], pv[:n_rec], best
