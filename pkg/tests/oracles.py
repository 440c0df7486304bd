"""Independent reference implementations used only by the test-suite."""

from __future__ import annotations

import math

import numpy as np

PH = "abc"


def newton_power_flow(feeder, loads, taps=None, tol=1e-12, max_iter=50):
    """Dense Newton-Raphson on the nodal admittance matrix.

    ``loads`` maps (bus, phase) -> consumed complex VA. Returns a dict
    (bus, phase) -> complex phasor.
    """
    taps = feeder.initial_taps() if taps is None else taps
    nodes = [(b.id, p) for b in feeder.buses for p in PH if p in b.phases]
    idx = {k: i for i, k in enumerate(nodes)}
    n = len(nodes)
    base = np.array([feeder.bus_by_id[b].kv_ln * 1e3 for b, _ in nodes])

    Y = np.zeros((n, n), dtype=complex)
    for ln in feeder.lines:
        phases = feeder.bus_by_id[ln.to_bus].phases
        sel = [PH.index(p) for p in phases]
        y = np.linalg.inv(np.asarray(ln.z_ohm)[np.ix_(sel, sel)])
        a = np.ones(len(phases))
        for reg in feeder.regulators:
            if reg.line == ln.id:
                for k, p in enumerate(phases):
                    if p in reg.phases:
                        a[k] *= taps.get(reg.id, reg.tap)
        A = np.diag(a)
        u = [idx[(ln.from_bus, p)] for p in phases]
        w = [idx[(ln.to_bus, p)] for p in phases]
        Y[np.ix_(u, u)] += A @ y @ A
        Y[np.ix_(u, w)] -= A @ y
        Y[np.ix_(w, u)] -= y @ A
        Y[np.ix_(w, w)] += y
    for cap in feeder.capacitors:
        i = idx[(cap.bus, cap.phase)]
        Y[i, i] += 1j * cap.kvar * 1e3 / base[i] ** 2

    S = np.zeros(n, dtype=complex)
    for key, val in loads.items():
        S[idx[key]] += val

    src = [i for i, (b, _) in enumerate(nodes) if b == feeder.source_bus]
    free = [i for i in range(n) if i not in src]
    V = np.zeros(n, dtype=complex)
    for i in range(n):
        V[i] = feeder.source_pu * base[i] * np.exp(-2j * math.pi * PH.index(nodes[i][1]) / 3)

    for _ in range(max_iter):
        I = Y @ V
        F = (V * np.conj(I) + S)[free]
        if np.max(np.abs(F)) / np.max(base) < tol * 1e3:
            break
        Yf = Y[np.ix_(free, free)]
        dSdx = np.diag(np.conj(I[free])) + np.diag(V[free]) @ np.conj(Yf)
        dSdy = 1j * np.diag(np.conj(I[free])) - 1j * np.diag(V[free]) @ np.conj(Yf)
        J = np.block([[dSdx.real, dSdy.real], [dSdx.imag, dSdy.imag]])
        step = np.linalg.solve(J, -np.concatenate([F.real, F.imag]))
        m = len(free)
        V[free] += step[:m] + 1j * step[m:]
    else:
        raise RuntimeError("newton oracle did not converge")
    return {k: V[i] for k, i in idx.items()}


def two_bus_voltage(vs, r, x, p, q):
    """Receiving-end magnitude from |V|^4 - (|Vs|^2 - 2(PR+QX))|V|^2 + (P^2+Q^2)|Z|^2 = 0 (high root)."""
    b = vs**2 - 2 * (p * r + q * x)
    c = (p**2 + q**2) * (r**2 + x**2)
    return math.sqrt((b + math.sqrt(b * b - 4 * c)) / 2)


def two_bus_dv_dp(vs, r, x, p, q):
    """Implicit derivative d|V|/dP of the two-bus quadratic."""
    v = two_bus_voltage(vs, r, x, p, q)
    u = v * v
    # g(u, p) = u^2 - (vs^2 - 2(pr+qx)) u + (p^2+q^2)|z|^2
    dg_du = 2 * u - (vs**2 - 2 * (p * r + q * x))
    dg_dp = 2 * r * u + 2 * p * (r**2 + x**2)
    du_dp = -dg_dp / dg_du
    return du_dp / (2 * v)


def naive_integral_violation(voltages, dt, v_lo=0.95, v_hi=1.05):
    total = 0.0
    for row in voltages:
        for v in row:
            if v < v_lo:
                total += (v_lo - v) * dt
            elif v > v_hi:
                total += (v - v_hi) * dt
    return total


def naive_mean_throughput(columns, dt, horizon):
    total = 0.0
    for col in columns:
        for value in col:
            total += value * dt
    return total / horizon


def naive_latency_rate(columns, deadlines):
    hits = count = 0
    for col, deadline in zip(columns, deadlines):
        for value in col:
            count += 1
            hits += value > deadline
    return hits / count if count else 0.0


def naive_switch_count(columns):
    switches = 0
    for col in columns:
        for prev, cur in zip(col, col[1:]):
            switches += prev != cur
    return switches
