"""Pure-Python dynamics kernel.

This module is the operation-order contract for the native Cython kernel:
every arithmetic expression here is written scalar-by-scalar, in the same
sequence the C translation executes (the extension is compiled with
-ffp-contract=off), so the two backends produce bit-identical
trajectories. Keep the loops boring: no numpy vectorization inside the
step math, no reassociation, no fused operations.

State layout: X is the (Q, Q) forwarding-rate matrix, xrow its frozen
row sums, mask the uint8 edge mask, caps/prices the topology arrays, th
the cost weight. kind is 0 for replicator, 1 for BNN.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import CapacityViolation, StepCollapse

BACKEND_NAME = "reference"

MAX_HALVINGS = 20


def _loads(X, q, out):
    for i in range(q):
        acc = 0.0
        for j in range(q):
            acc += X[j, i]
        out[i] = acc
    return out


def _check_guard(loads, caps, guard_margin, q):
    for i in range(q):
        if loads[i] >= (1.0 - guard_margin) * caps[i]:
            return i
    return -1


def _fill_payoffs(caps, prices, mask, X, xrow, th, loads, q, F, fbar):
    """Fill F on edges and the per-population average; loads precomputed."""
    c1 = 2.0 * th
    c2 = 2.0 * (1.0 - th)
    for i in range(q):
        gap = caps[i] - loads[i]
        base = c1 * (1.0 / gap + loads[i] / (gap * gap))
        for j in range(q):
            if mask[j, i]:
                F[j, i] = base + c2 * prices[j, i]
    for j in range(q):
        if xrow[j] > 0.0:
            acc = 0.0
            for i in range(q):
                if mask[j, i]:
                    acc += X[j, i] * F[j, i]
            fbar[j] = acc / xrow[j]
        else:
            fbar[j] = 0.0


def _cost(caps, prices, X, th, loads, q):
    c1 = 2.0 * th
    c2 = 2.0 * (1.0 - th)
    delay_acc = 0.0
    for i in range(q):
        delay_acc += loads[i] / (caps[i] - loads[i])
    transit_acc = 0.0
    for j in range(q):
        for i in range(q):
            transit_acc += prices[j, i] * X[j, i]
    return c1 * delay_acc + c2 * transit_acc


def _solve_tail(prefix, target, v):
    """Seek v' > 0 with fl(prefix + v') == target; returns (found, v').

    Direct assignment target - prefix lands exactly whenever that
    subtraction is exact (Sterbenz range) and often otherwise. Failing
    that, Newton steps on the residual bracket the target, and bisection
    must then hit it: v' moves on a grid no coarser than the sum's, so
    the rounded total cannot skip a representable value. The remaining
    misses are round-to-even ties (the target's parity is unreachable
    for this prefix) and targets below the prefix; both report False
    with the best candidate so the caller can rephase and retry.
    """
    nv = target - prefix
    if nv > 0.0:
        if prefix + nv == target:
            return True, nv
    lo = 0.0
    hi = 0.0
    have_lo = False
    have_hi = False
    for _ in range(8):
        t = prefix + v
        if t == target:
            return True, v
        if t < target:
            lo = v
            have_lo = True
        else:
            hi = v
            have_hi = True
        if have_lo and have_hi:
            break
        nv = v + (target - t)
        if nv <= 0.0 or nv == v:
            return False, v
        v = nv
    if have_lo and have_hi:
        while True:
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            t = prefix + mid
            if t == target:
                return True, mid
            if t < target:
                lo = mid
            else:
                hi = mid
    return False, v


def _renormalize_row(V, mask, xrow, j, q):
    """Rescale row j so its ascending masked sum equals xrow[j] exactly.

    The largest entry absorbs the bulk of the rounding residue, which
    lands exactly in almost every case but can stall one ulp short when
    the residue drops below half that entry's ulp. The backstop solves
    for the last positive addend: every masked entry after it is an
    exact zero, so the row total is just prefix + v (see _solve_tail).
    If the target's parity is unreachable for that prefix (a
    round-to-even tie), nudging any earlier positive entry by one of its
    own ulps rephases the prefix and the solve is retried. Corrections
    never zero or flip an entry, so mass stays positive and extinct
    options stay extinct; if every rephasing fails the row keeps a
    one-ulp residue rather than a corrupted distribution.
    """
    s = 0.0
    for i in range(q):
        if mask[j, i]:
            s += V[j, i]
    if s <= 0.0:
        return False
    scale = xrow[j] / s
    m = -1
    best = -1.0
    for i in range(q):
        if mask[j, i]:
            V[j, i] *= scale
            if V[j, i] > best:
                best = V[j, i]
                m = i
    for _ in range(4):
        total = 0.0
        for i in range(q):
            if mask[j, i]:
                total += V[j, i]
        if total == xrow[j]:
            return True
        V[j, m] += xrow[j] - total
        if V[j, m] < 0.0:
            return False
    last = -1
    for i in range(q):
        if mask[j, i] and V[j, i] > 0.0:
            last = i
    if last < 0:
        return False
    prefix = 0.0
    for i in range(last):
        if mask[j, i]:
            prefix += V[j, i]
    ok, v = _solve_tail(prefix, xrow[j], V[j, last])
    V[j, last] = v
    if ok:
        return True
    for e in range(last):
        if not mask[j, e] or V[j, e] <= 0.0:
            continue
        w = V[j, e]
        for direction in (math.inf, 0.0):
            nw = math.nextafter(w, direction)
            if nw <= 0.0:
                continue
            V[j, e] = nw
            prefix = 0.0
            for i in range(last):
                if mask[j, i]:
                    prefix += V[j, i]
            ok, v = _solve_tail(prefix, xrow[j], V[j, last])
            V[j, last] = v
            if ok:
                return True
        V[j, e] = w
    return True


def _try_step(kind, caps, prices, mask, X, xrow, th, dt, guard_margin,
              loads, F, fbar, q, V, new_loads):
    """One Euler attempt at step size dt into V. True if V is acceptable."""
    for j in range(q):
        if xrow[j] <= 0.0:
            for i in range(q):
                V[j, i] = X[j, i]
            continue
        if kind == 0:
            for i in range(q):
                if mask[j, i]:
                    V[j, i] = X[j, i] + dt * X[j, i] * (fbar[j] - F[j, i])
                else:
                    V[j, i] = 0.0
        else:
            gsum = 0.0
            for i in range(q):
                if mask[j, i]:
                    g = fbar[j] - F[j, i]
                    if g < 0.0:
                        g = 0.0
                    gsum += g
            for i in range(q):
                if mask[j, i]:
                    g = fbar[j] - F[j, i]
                    if g < 0.0:
                        g = 0.0
                    V[j, i] = X[j, i] + dt * (xrow[j] * g - X[j, i] * gsum)
                else:
                    V[j, i] = 0.0
        for i in range(q):
            if V[j, i] < 0.0:
                return False
        if not _renormalize_row(V, mask, xrow, j, q):
            return False
    _loads(V, q, new_loads)
    return _check_guard(new_loads, caps, guard_margin, q) < 0


def _step_once(kind, caps, prices, mask, X, xrow, th, dt, guard_margin,
               loads, F, fbar, q, V, new_loads):
    """Halving retry loop; returns accepted dt. Raises StepCollapse."""
    trial = dt
    for _ in range(MAX_HALVINGS + 1):
        if _try_step(kind, caps, prices, mask, X, xrow, th, trial,
                     guard_margin, loads, F, fbar, q, V, new_loads):
            return trial
        trial *= 0.5
    raise StepCollapse(
        f"no feasible step down to dt*2^-{MAX_HALVINGS} (dt={dt:g})"
    )


def _converged(kind, mask, X, xrow, F, fbar, eq_tol, delta, q):
    for j in range(q):
        if xrow[j] <= 0.0:
            continue
        fmin = math.inf
        fmax = -math.inf
        thresh = delta * xrow[j]
        for i in range(q):
            if mask[j, i] and X[j, i] > thresh:
                if F[j, i] < fmin:
                    fmin = F[j, i]
                if F[j, i] > fmax:
                    fmax = F[j, i]
        if fmax > fmin and (fmax - fmin) >= eq_tol * fbar[j]:
            return False
        if kind == 1:
            for i in range(q):
                if mask[j, i] and X[j, i] <= thresh:
                    if (fbar[j] - F[j, i]) > eq_tol * fbar[j]:
                        return False
    return True


def _run(kind, caps, prices, mask, X0, th, dt, guard_margin, eq_tol, delta,
         horizon, single_step):
    q = caps.shape[0]
    X = np.array(X0, dtype=float)
    xrow = np.empty(q)
    for j in range(q):
        acc = 0.0
        for i in range(q):
            acc += X[j, i]
        xrow[j] = acc
    loads = np.empty(q)
    _loads(X, q, loads)
    bad = _check_guard(loads, caps, guard_margin, q)
    if bad >= 0:
        raise CapacityViolation(f"input state infeasible at tracker index {bad}")

    F = np.zeros((q, q))
    fbar = np.zeros(q)
    V = np.empty((q, q))
    new_loads = np.empty(q)

    if single_step:
        _fill_payoffs(caps, prices, mask, X, xrow, th, loads, q, F, fbar)
        used = _step_once(kind, caps, prices, mask, X, xrow, th, dt,
                          guard_margin, loads, F, fbar, q, V, new_loads)
        return V.copy(), used

    budget = int(math.ceil(horizon / dt)) + 1
    costs = np.empty(budget)
    t = 0.0
    steps = 0
    conv = False
    while True:
        _fill_payoffs(caps, prices, mask, X, xrow, th, loads, q, F, fbar)
        if _converged(kind, mask, X, xrow, F, fbar, eq_tol, delta, q):
            conv = True
            break
        if t >= horizon - 1e-12 or steps >= budget:
            break
        used = _step_once(kind, caps, prices, mask, X, xrow, th, dt,
                          guard_margin, loads, F, fbar, q, V, new_loads)
        X, V = V, X
        for i in range(q):
            loads[i] = new_loads[i]
        t += used
        costs[steps] = _cost(caps, prices, X, th, loads, q)
        steps += 1
    return X.copy(), steps, conv, t, costs[:steps].copy()


def replicator_step(caps, prices, mask, X, th, dt, guard_margin):
    """One accepted replicator Euler step; returns (new X, accepted dt)."""
    return _run(0, caps, prices, mask, X, th, dt, guard_margin,
                0.0, 0.0, 0.0, True)


def bnn_step(caps, prices, mask, X, th, dt, guard_margin):
    """One accepted BNN Euler step; returns (new X, accepted dt)."""
    return _run(1, caps, prices, mask, X, th, dt, guard_margin,
                0.0, 0.0, 0.0, True)


def equilibrate(kind, caps, prices, mask, X, th, dt, guard_margin, eq_tol,
                delta, horizon):
    """Iterate to rest; returns (X, steps, converged, elapsed, costs)."""
    return _run(kind, caps, prices, mask, X, th, dt, guard_margin,
                eq_tol, delta, horizon, False)


def converged_now(kind, caps, prices, mask, X, th, eq_tol, delta):
    """Rest-point test at the current state (same rule equilibrate uses)."""
    q = caps.shape[0]
    X = np.asarray(X, dtype=float)
    xrow = np.empty(q)
    for j in range(q):
        acc = 0.0
        for i in range(q):
            acc += X[j, i]
        xrow[j] = acc
    loads = np.empty(q)
    _loads(X, q, loads)
    if _check_guard(loads, caps, 1e-9, q) >= 0:
        raise CapacityViolation("state infeasible")
    F = np.zeros((q, q))
    fbar = np.zeros(q)
    _fill_payoffs(caps, prices, mask, X, xrow, th, loads, q, F, fbar)
    return _converged(kind, mask, X, xrow, F, fbar, eq_tol, delta, q)
