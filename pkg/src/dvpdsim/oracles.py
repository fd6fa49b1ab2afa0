"""Brute-force reference computations used to check the analytic paths.

Nothing here shares code with the production solvers: the plane oracle
assembles a dense matrix by hand and runs its own Gaussian elimination, and
the converter oracles time-step the inductor current through whole
switching cycles.
"""

from __future__ import annotations

import itertools
from typing import Mapping, Sequence

import numpy as np


def gauss_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense Gaussian elimination with partial pivoting."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = a.shape[0]
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if a[piv, col] == 0.0:
            raise ZeroDivisionError("singular matrix")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        for row in range(col + 1, n):
            f = a[row, col] / a[col, col]
            if f != 0.0:
                a[row, col:] -= f * a[col, col:]
                b[row] -= f * b[col]
    x = np.zeros(n)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1:] @ x[row + 1:]) / a[row, row]
    return x


def dense_nodal(
    n_nodes: int,
    segments: Sequence[tuple[int, int, float]],
    sources: Mapping[int, float],
    sinks: Mapping[int, float],
    v_ref: float,
    r_out: float,
) -> np.ndarray:
    """Node voltages with Norton sources ``{node: ...}`` behind ``r_out`` and current sinks."""
    g = np.zeros((n_nodes, n_nodes))
    rhs = np.zeros(n_nodes)
    for a, b, r in segments:
        g[a, a] += 1.0 / r
        g[b, b] += 1.0 / r
        g[a, b] -= 1.0 / r
        g[b, a] -= 1.0 / r
    for node in sources:
        g[node, node] += 1.0 / r_out
        rhs[node] += v_ref / r_out
    for node, amps in sinks.items():
        rhs[node] -= amps
    return gauss_solve(g, rhs)


def unit_current_resistance(n_nodes: int, segments: Sequence[tuple[int, int, float]], a: int, b: int) -> float:
    """Inject 1 A at ``a``, extract at ``b`` (grounded) and read the voltage."""
    if a == b:
        return 0.0
    keep = [k for k in range(n_nodes) if k != b]
    pos = {node: i for i, node in enumerate(keep)}
    g = np.zeros((n_nodes - 1, n_nodes - 1))
    for p, q, r in segments:
        for x, y in ((p, q), (q, p)):
            if x in pos:
                g[pos[x], pos[x]] += 1.0 / r
                if y in pos:
                    g[pos[x], pos[y]] -= 1.0 / r
    rhs = np.zeros(n_nodes - 1)
    rhs[pos[a]] = 1.0
    return float(gauss_solve(g, rhs)[pos[a]])


def cycle_ripple(v_in: float, v_out: float, inductance: float, f_sw: float, steps: int = 2000, i_avg: float = 10.0) -> float:
    """Peak-to-peak inductor current from a time-stepped CCM switching cycle."""
    t_s = 1.0 / f_sw
    dt = t_s / steps
    duty = v_out / v_in
    i = i_avg
    trace = [i]
    t_on = duty * t_s
    for k in range(steps):
        t0, t1 = k * dt, (k + 1) * dt
        # Split the step that contains the turn-off instant.
        on_time = min(max(t_on - t0, 0.0), dt)
        i += ((v_in - v_out) * on_time - v_out * (dt - on_time)) / inductance
        if t0 < t_on < t1:
            trace.append(i - (-v_out) * (t1 - t_on) / inductance)
        trace.append(i)
    return max(trace) - min(trace)


def cycle_output_ripple(delta_i: float, capacitance: float, f_sw: float, steps: int = 4000) -> float:
    """Capacitor voltage excursion for a triangular ripple current of ``delta_i`` p-p."""
    t_s = 1.0 / f_sw
    dt = t_s / steps
    v = 0.0
    vs = [v]
    for k in range(steps):
        x = (k + 0.5) / steps
        # Zero-mean triangle: rises over the first half-period, falls over the second.
        i_c = delta_i * (2 * x - 0.5) if x < 0.5 else delta_i * (1.5 - 2 * x)
        v += i_c / capacitance * dt
        vs.append(v)
    return max(vs) - min(vs)


def dcm_ratio_by_waveform(duty: float, k_param: float, steps: int = 4000) -> float:
    """Buck conversion ratio in DCM by charge balance on a time-stepped cycle.

    Normalised units: V_in = 1, T_s = 1, L = 1, so R_L = 2 / K. The output
    voltage is found by bisection on ``avg(i_L) - V_o / R_L``.
    """
    r_load = 2.0 / k_param

    def mismatch(v_o: float) -> float:
        dt = 1.0 / steps
        i = 0.0
        acc = 0.0
        for k in range(steps):
            on = (k + 0.5) * dt < duty
            slope = (1.0 - v_o) if on else -v_o
            i_next = max(i + slope * dt, 0.0) if not on else i + slope * dt
            acc += 0.5 * (i + i_next) * dt
            i = i_next
        return acc - v_o / r_load

    lo, hi = 1e-9, 1.0 - 1e-12
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mismatch(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def brute_force_subset(m: int, n: int, loss_of) -> tuple[tuple[int, ...], float]:
    """Exhaustive minimum of ``loss_of(subset)`` over all ``n``-subsets of ``range(m)``."""
    best = None
    for subset in itertools.combinations(range(m), n):
        val = loss_of(subset)
        if best is None or val < best[1]:
            best = (subset, val)
    return best
