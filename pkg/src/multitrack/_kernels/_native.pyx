# cython: boundscheck=False, wraparound=False, cdivision=True
"""Native dynamics kernel.

Literal translation of reference.py, expression for expression, so that
with -ffp-contract=off both backends run the same IEEE operation
sequence and produce bit-identical trajectories. Any change here must be
mirrored in reference.py (and vice versa); tests/test_backends.py holds
the two to exact equality.
"""

import math

import numpy as np

from libc.math cimport INFINITY, nextafter

from ..errors import CapacityViolation, StepCollapse

BACKEND_NAME = "native"

cdef int MAX_HALVINGS = 20


cdef void _loads_c(double[:, ::1] X, Py_ssize_t q, double[::1] out) noexcept:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(q):
        acc = 0.0
        for j in range(q):
            acc += X[j, i]
        out[i] = acc


cdef Py_ssize_t _check_guard_c(double[::1] loads, const double[::1] caps,
                               double guard_margin, Py_ssize_t q) noexcept:
    cdef Py_ssize_t i
    for i in range(q):
        if loads[i] >= (1.0 - guard_margin) * caps[i]:
            return i
    return -1


cdef void _fill_payoffs_c(const double[::1] caps, const double[:, ::1] prices,
                          const unsigned char[:, ::1] mask, double[:, ::1] X,
                          double[::1] xrow, double th, double[::1] loads,
                          Py_ssize_t q, double[:, ::1] F,
                          double[::1] fbar) noexcept:
    cdef Py_ssize_t i, j
    cdef double c1 = 2.0 * th
    cdef double c2 = 2.0 * (1.0 - th)
    cdef double gap, base, acc
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


cdef double _cost_c(const double[::1] caps, const double[:, ::1] prices,
                    double[:, ::1] X, double th, double[::1] loads,
                    Py_ssize_t q) noexcept:
    cdef Py_ssize_t i, j
    cdef double c1 = 2.0 * th
    cdef double c2 = 2.0 * (1.0 - th)
    cdef double delay_acc = 0.0
    cdef double transit_acc = 0.0
    for i in range(q):
        delay_acc += loads[i] / (caps[i] - loads[i])
    for j in range(q):
        for i in range(q):
            transit_acc += prices[j, i] * X[j, i]
    return c1 * delay_acc + c2 * transit_acc


cdef bint _solve_tail_c(double prefix, double target, double* v) noexcept:
    # Mirror of reference._solve_tail: direct try, then Newton bracket,
    # then bisection; False means the target parity is unreachable for
    # this prefix (or lies below it) and *v holds the best candidate.
    cdef double lo = 0.0
    cdef double hi = 0.0
    cdef bint have_lo = False
    cdef bint have_hi = False
    cdef double t, nv, mid
    cdef int k
    nv = target - prefix
    if nv > 0.0:
        if prefix + nv == target:
            v[0] = nv
            return True
    for k in range(8):
        t = prefix + v[0]
        if t == target:
            return True
        if t < target:
            lo = v[0]
            have_lo = True
        else:
            hi = v[0]
            have_hi = True
        if have_lo and have_hi:
            break
        nv = v[0] + (target - t)
        if nv <= 0.0 or nv == v[0]:
            return False
        v[0] = nv
    if have_lo and have_hi:
        while True:
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            t = prefix + mid
            if t == target:
                v[0] = mid
                return True
            if t < target:
                lo = mid
            else:
                hi = mid
    return False


cdef bint _renormalize_row_c(double[:, ::1] V, const unsigned char[:, ::1] mask,
                             double[::1] xrow, Py_ssize_t j,
                             Py_ssize_t q) noexcept:
    # Exact renormalization; see reference._renormalize_row for the
    # rationale (largest entry first, then solve the last positive
    # addend, rephasing the prefix by one-ulp nudges if needed).
    cdef Py_ssize_t i, m, k, last, e
    cdef double s = 0.0
    cdef double scale, best, total, prefix, v, w, nw
    cdef double dirs[2]
    cdef bint ok
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
    for k in range(4):
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
    v = V[j, last]
    ok = _solve_tail_c(prefix, xrow[j], &v)
    V[j, last] = v
    if ok:
        return True
    dirs[0] = INFINITY
    dirs[1] = 0.0
    for e in range(last):
        if not mask[j, e] or V[j, e] <= 0.0:
            continue
        w = V[j, e]
        for k in range(2):
            nw = nextafter(w, dirs[k])
            if nw <= 0.0:
                continue
            V[j, e] = nw
            prefix = 0.0
            for i in range(last):
                if mask[j, i]:
                    prefix += V[j, i]
            v = V[j, last]
            ok = _solve_tail_c(prefix, xrow[j], &v)
            V[j, last] = v
            if ok:
                return True
        V[j, e] = w
    return True


cdef bint _try_step_c(int kind, const double[::1] caps, const double[:, ::1] prices,
                      const unsigned char[:, ::1] mask, double[:, ::1] X,
                      double[::1] xrow, double th, double dt,
                      double guard_margin, double[::1] loads,
                      double[:, ::1] F, double[::1] fbar, Py_ssize_t q,
                      double[:, ::1] V, double[::1] new_loads) noexcept:
    cdef Py_ssize_t i, j
    cdef double gsum, g
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
        if not _renormalize_row_c(V, mask, xrow, j, q):
            return False
    _loads_c(V, q, new_loads)
    return _check_guard_c(new_loads, caps, guard_margin, q) < 0


cdef double _step_once_c(int kind, const double[::1] caps, const double[:, ::1] prices,
                         const unsigned char[:, ::1] mask, double[:, ::1] X,
                         double[::1] xrow, double th, double dt,
                         double guard_margin, double[::1] loads,
                         double[:, ::1] F, double[::1] fbar, Py_ssize_t q,
                         double[:, ::1] V, double[::1] new_loads) except -1.0:
    cdef double trial = dt
    cdef int k
    for k in range(MAX_HALVINGS + 1):
        if _try_step_c(kind, caps, prices, mask, X, xrow, th, trial,
                       guard_margin, loads, F, fbar, q, V, new_loads):
            return trial
        trial *= 0.5
    raise StepCollapse(
        "no feasible step down to dt*2^-%d (dt=%g)" % (MAX_HALVINGS, dt)
    )


cdef bint _converged_c(int kind, const unsigned char[:, ::1] mask,
                       double[:, ::1] X, double[::1] xrow,
                       double[:, ::1] F, double[::1] fbar, double eq_tol,
                       double delta, Py_ssize_t q) noexcept:
    cdef Py_ssize_t i, j
    cdef double fmin, fmax, thresh
    for j in range(q):
        if xrow[j] <= 0.0:
            continue
        fmin = INFINITY
        fmax = -INFINITY
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


def _run(int kind, caps_in, prices_in, mask_in, X0, double th, double dt,
         double guard_margin, double eq_tol, double delta, double horizon,
         bint single_step):
    cdef const double[::1] caps = np.ascontiguousarray(caps_in, dtype=np.float64)
    cdef const double[:, ::1] prices = np.ascontiguousarray(prices_in, dtype=np.float64)
    cdef const unsigned char[:, ::1] mask = np.ascontiguousarray(mask_in, dtype=np.uint8)
    cdef Py_ssize_t q = caps.shape[0]
    X_arr = np.array(X0, dtype=np.float64, order="C")
    cdef double[:, ::1] X = X_arr
    cdef double[::1] xrow = np.empty(q)
    cdef double[::1] loads = np.empty(q)
    cdef Py_ssize_t i, j
    cdef double acc
    for j in range(q):
        acc = 0.0
        for i in range(q):
            acc += X[j, i]
        xrow[j] = acc
    _loads_c(X, q, loads)
    cdef Py_ssize_t bad = _check_guard_c(loads, caps, guard_margin, q)
    if bad >= 0:
        raise CapacityViolation(
            "input state infeasible at tracker index %d" % bad
        )

    F_arr = np.zeros((q, q))
    fbar_arr = np.zeros(q)
    V_arr = np.empty((q, q))
    cdef double[:, ::1] F = F_arr
    cdef double[::1] fbar = fbar_arr
    cdef double[:, ::1] V = V_arr
    cdef double[::1] new_loads = np.empty(q)
    cdef double used, t
    cdef Py_ssize_t steps, budget
    cdef bint conv

    if single_step:
        _fill_payoffs_c(caps, prices, mask, X, xrow, th, loads, q, F, fbar)
        used = _step_once_c(kind, caps, prices, mask, X, xrow, th, dt,
                            guard_margin, loads, F, fbar, q, V, new_loads)
        return np.asarray(V).copy(), used

    budget = <Py_ssize_t>math.ceil(horizon / dt) + 1
    costs_arr = np.empty(budget)
    cdef double[::1] costs = costs_arr
    t = 0.0
    steps = 0
    conv = False
    while True:
        _fill_payoffs_c(caps, prices, mask, X, xrow, th, loads, q, F, fbar)
        if _converged_c(kind, mask, X, xrow, F, fbar, eq_tol, delta, q):
            conv = True
            break
        if t >= horizon - 1e-12 or steps >= budget:
            break
        used = _step_once_c(kind, caps, prices, mask, X, xrow, th, dt,
                            guard_margin, loads, F, fbar, q, V, new_loads)
        X, V = V, X
        for i in range(q):
            loads[i] = new_loads[i]
        t += used
        costs[steps] = _cost_c(caps, prices, X, th, loads, q)
        steps += 1
    return (np.asarray(X).copy(), steps, conv, t,
            np.asarray(costs[:steps]).copy())


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


def converged_now(kind, caps_in, prices_in, mask_in, X0, double th,
                  double eq_tol, double delta):
    """Rest-point test at the current state (same rule equilibrate uses)."""
    cdef const double[::1] caps = np.ascontiguousarray(caps_in, dtype=np.float64)
    cdef const double[:, ::1] prices = np.ascontiguousarray(prices_in, dtype=np.float64)
    cdef const unsigned char[:, ::1] mask = np.ascontiguousarray(mask_in, dtype=np.uint8)
    cdef Py_ssize_t q = caps.shape[0]
    X_arr = np.array(X0, dtype=np.float64, order="C")
    cdef double[:, ::1] X = X_arr
    cdef double[::1] xrow = np.empty(q)
    cdef double[::1] loads = np.empty(q)
    cdef Py_ssize_t i, j
    cdef double acc
    for j in range(q):
        acc = 0.0
        for i in range(q):
            acc += X[j, i]
        xrow[j] = acc
    _loads_c(X, q, loads)
    if _check_guard_c(loads, caps, 1e-9, q) >= 0:
        raise CapacityViolation("state infeasible")
    F_arr = np.zeros((q, q))
    fbar_arr = np.zeros(q)
    cdef double[:, ::1] F = F_arr
    cdef double[::1] fbar = fbar_arr
    _fill_payoffs_c(caps, prices, mask, X, xrow, th, loads, q, F, fbar)
    return bool(_converged_c(kind, mask, X, xrow, F, fbar, eq_tol, delta, q))
