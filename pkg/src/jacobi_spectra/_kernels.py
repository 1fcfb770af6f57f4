"""Hot loops shared by the transfer, spectra, and measure pipelines.

Every function in this module is written as a plain scalar loop so that it
compiles unchanged under numba's nopython mode.  At import time the module
rebinds each public name to an ``@njit(cache=True, nogil=True)`` wrapper
unless numba is missing or ``JACOBI_SPECTRA_NO_NUMBA=1`` is set, in which
case the pure-Python/NumPy definitions run as-is.  The originals stay
reachable through the ``PURE`` dict so tests and the benchmark script can
compare both paths.

Scaling convention used throughout: a state is stored as a "unit part"
whose largest entry magnitude is kept inside [1/2, 2] plus an accumulated
natural-log scale.  This keeps products of 10**7 matrices inside double
range without ever forming the raw magnitudes.
"""

from __future__ import annotations

import cmath
import math
import os

import numpy as np

_EPS = 2.220446049250313e-16

# Step-failure sentinel: kernels report the first offending step index
# instead of raising, so they stay nopython-compatible.  -1 means clean.


def transfer_product(a, b, c, z):
    """Scaled product of the one-step transfer matrices, newest on the left.

    Returns (u11, u12, u21, u22, log_scale, bad_step).  The unit part has
    max-entry magnitude in [1/2, 2]; bad_step >= 0 flags NaN/overflow or a
    collapsed product at that step.
    """
    u11 = 1.0 + 0.0j
    u12 = 0.0 + 0.0j
    u21 = 0.0 + 0.0j
    u22 = 1.0 + 0.0j
    log_scale = 0.0
    n = a.shape[0]
    for j in range(n):
        inv = 1.0 / c[j]
        g11 = (z - b[j]) * inv
        g12 = -a[j] * inv
        n11 = g11 * u11 + g12 * u21
        n12 = g11 * u12 + g12 * u22
        u21 = u11
        u22 = u12
        u11 = n11
        u12 = n12
        m = abs(u11)
        m2 = abs(u12)
        if m2 > m:
            m = m2
        m2 = abs(u21)
        if m2 > m:
            m = m2
        m2 = abs(u22)
        if m2 > m:
            m = m2
        if m < 0.5 or m > 2.0:
            if m == 0.0 or m != m or m == math.inf:
                return u11, u12, u21, u22, log_scale, j
            inv_m = 1.0 / m
            u11 *= inv_m
            u12 *= inv_m
            u21 *= inv_m
            u22 *= inv_m
            log_scale += math.log(m)
    return u11, u12, u21, u22, log_scale, -1


def solution_logs(a, b, c, z):
    """Log-magnitude form of the two trailing terms of the recurrence
    a_j f_{j-1} + b_j f_j + c_j f_{j+1} = z f_j started from f_0=0, f_1=1.

    Returns (log_final, log_prev, phase_final, phase_prev, bad_step) where
    "final" is the term one past the sampled window and "prev" the last
    in-window term.  An exact zero yields -inf with phase 0.
    """
    u = 1.0 + 0.0j  # f_j
    v = 0.0 + 0.0j  # f_{j-1}
    log_scale = 0.0
    n = a.shape[0]
    for j in range(n):
        w = ((z - b[j]) * u - a[j] * v) / c[j]
        v = u
        u = w
        m = abs(u)
        m2 = abs(v)
        if m2 > m:
            m = m2
        if m < 0.5 or m > 2.0:
            if m == 0.0 or m != m or m == math.inf:
                return 0.0, 0.0, 0.0j, 0.0j, j
            inv_m = 1.0 / m
            u *= inv_m
            v *= inv_m
            log_scale += math.log(m)
    au = abs(u)
    av = abs(v)
    if au > 0.0:
        log_u = log_scale + math.log(au)
        ph_u = u / au
    else:
        log_u = -math.inf
        ph_u = 0.0j
    if av > 0.0:
        log_v = log_scale + math.log(av)
        ph_v = v / av
    else:
        log_v = -math.inf
        ph_v = 0.0j
    return log_u, log_v, ph_u, ph_v, -1


def pair_growth_logs(a, b, c, z, period):
    """Growth logs of an orthonormal 2-frame pushed through the cocycle.

    Re-orthonormalizes (modified Gram-Schmidt) every `period` steps and once
    more at the end; the two accumulated log norms estimate n*gamma1 and
    n*gamma2.  Growth inside one window must stay within double range, which
    holds for any coefficient law and |z| below ~1e100 with short periods.
    """
    x1 = 1.0 + 0.0j
    x2 = 0.0 + 0.0j
    y1 = 0.0 + 0.0j
    y2 = 1.0 + 0.0j
    acc1 = 0.0
    acc2 = 0.0
    n = a.shape[0]
    since = 0
    for j in range(n):
        inv = 1.0 / c[j]
        g11 = (z - b[j]) * inv
        g12 = -a[j] * inv
        nx1 = g11 * x1 + g12 * x2
        x2 = x1
        x1 = nx1
        ny1 = g11 * y1 + g12 * y2
        y2 = y1
        y1 = ny1
        since += 1
        if since == period or j == n - 1:
            r1 = math.sqrt(x1.real * x1.real + x1.imag * x1.imag
                           + x2.real * x2.real + x2.imag * x2.imag)
            if r1 == 0.0 or r1 != r1 or r1 == math.inf:
                return 0.0, 0.0, j
            acc1 += math.log(r1)
            inv_r = 1.0 / r1
            x1 *= inv_r
            x2 *= inv_r
            p = x1.conjugate() * y1 + x2.conjugate() * y2
            y1 -= p * x1
            y2 -= p * x2
            r2 = math.sqrt(y1.real * y1.real + y1.imag * y1.imag
                           + y2.real * y2.real + y2.imag * y2.imag)
            if r2 == 0.0 or r2 != r2 or r2 == math.inf:
                return 0.0, 0.0, j
            acc2 += math.log(r2)
            inv_r = 1.0 / r2
            y1 *= inv_r
            y2 *= inv_r
            since = 0
    return acc1, acc2, -1


def char_logabs(a, b, c, zs):
    """log|final recurrence term| for a batch of z values; -inf on a root."""
    nz = zs.shape[0]
    out = np.empty(nz, np.float64)
    n = a.shape[0]
    for k in range(nz):
        z = zs[k]
        u = 1.0 + 0.0j
        v = 0.0 + 0.0j
        log_scale = 0.0
        bad = False
        for j in range(n):
            w = ((z - b[j]) * u - a[j] * v) / c[j]
            v = u
            u = w
            m = abs(u)
            m2 = abs(v)
            if m2 > m:
                m = m2
            if m < 0.5 or m > 2.0:
                if m == 0.0 or m != m or m == math.inf:
                    out[k] = math.nan
                    bad = True
                    break
                inv_m = 1.0 / m
                u *= inv_m
                v *= inv_m
                log_scale += math.log(m)
        if bad:
            continue
        au = abs(u)
        if au > 0.0:
            out[k] = log_scale + math.log(au)
        else:
            out[k] = -math.inf
    return out


def tridiag_logdet(diag, sub, sup, z):
    """Scaled determinant recurrence for det(T - z*I) of a tridiagonal T.

    `sub` holds entries one below the diagonal, `sup` one above (lengths
    n-1).  Returns (log_abs, phase) with phase on the unit circle, or
    (-inf, 0) for an exactly singular shift.  Empty input gives det = 1.
    """
    n = diag.shape[0]
    if n == 0:
        return 0.0, 1.0 + 0.0j
    u = diag[0] - z  # D_k
    v = 1.0 + 0.0j   # D_{k-1}
    log_scale = 0.0
    for k in range(1, n):
        w = (diag[k] - z) * u - sub[k - 1] * sup[k - 1] * v
        v = u
        u = w
        m = abs(u)
        m2 = abs(v)
        if m2 > m:
            m = m2
        if m < 0.5 or m > 2.0:
            if m == 0.0 or m != m or m == math.inf:
                return math.nan, 0.0j
            inv_m = 1.0 / m
            u *= inv_m
            v *= inv_m
            log_scale += math.log(m)
    au = abs(u)
    if au == 0.0:
        return -math.inf, 0.0j
    return log_scale + math.log(au), u / au


def hessenberg_reduce(h):
    """In-place Householder reduction of a dense square matrix to upper
    Hessenberg form (similarity; eigenvalues preserved)."""
    n = h.shape[0]
    for k in range(n - 2):
        # Norm of the column below the subdiagonal pivot.
        xnorm = 0.0
        for i in range(k + 1, n):
            xnorm += h[i, k].real * h[i, k].real + h[i, k].imag * h[i, k].imag
        xnorm = math.sqrt(xnorm)
        if xnorm == 0.0:
            continue
        x0 = h[k + 1, k]
        ax0 = abs(x0)
        if ax0 > 0.0:
            alpha = -(x0 / ax0) * xnorm
        else:
            alpha = complex(-xnorm, 0.0)
        # v = x - alpha*e1, normalized.
        vnorm_sq = 0.0
        h[k + 1, k] = x0 - alpha
        for i in range(k + 1, n):
            vnorm_sq += (h[i, k].real * h[i, k].real
                         + h[i, k].imag * h[i, k].imag)
        if vnorm_sq == 0.0:
            h[k + 1, k] = x0
            continue
        inv_vn = 1.0 / math.sqrt(vnorm_sq)
        for i in range(k + 1, n):
            h[i, k] *= inv_vn
        # Left update: rows k+1.. of columns k+1.. ; column k handled exactly.
        for col in range(k + 1, n):
            s = 0.0 + 0.0j
            for i in range(k + 1, n):
                s += h[i, k].conjugate() * h[i, col]
            s *= 2.0
            for i in range(k + 1, n):
                h[i, col] -= s * h[i, k]
        # Right update: all rows, columns k+1.. .
        for row in range(n):
            s = 0.0 + 0.0j
            for i in range(k + 1, n):
                s += h[row, i] * h[i, k]
            s *= 2.0
            for i in range(k + 1, n):
                h[row, i] -= s * h[i, k].conjugate()
        h[k + 1, k] = alpha
        for i in range(k + 2, n):
            h[i, k] = 0.0 + 0.0j
    return h


def qr_eigvals(h, max_iter_factor):
    """Eigenvalues of an upper Hessenberg matrix by explicit single-shift QR.

    Wilkinson shift from the trailing 2x2 of the active window, deflation
    when a subdiagonal entry drops below eps*(|h_kk| + |h_k+1,k+1|), an
    exceptional shift every tenth stagnant sweep, and a hard cap of
    max_iter_factor * n sweeps in total.  Returns (w, status, where):
    status 0 = converged, 1 = iteration cap hit, 2 = non-finite data;
    `where` is the active bottom index on failure, -1 otherwise.
    """
    n = h.shape[0]
    w = np.zeros(n, np.complex128)
    cs = np.empty(n, np.float64)
    sn = np.empty(n, np.complex128)
    if n == 0:
        return w, 0, -1
    hi = n - 1
    total = 0
    max_total = max_iter_factor * n
    stagnation = 0
    while hi >= 0:
        if hi == 0:
            w[0] = h[0, 0]
            break
        # Deflation scan from the bottom of the active window.
        lo = hi
        while lo > 0:
            ssum = abs(h[lo - 1, lo - 1]) + abs(h[lo, lo])
            if ssum == 0.0:
                ssum = abs(h[lo, lo - 1])
            if abs(h[lo, lo - 1]) <= _EPS * ssum:
                h[lo, lo - 1] = 0.0 + 0.0j
                break
            lo -= 1
        if lo == hi:
            w[hi] = h[hi, hi]
            hi -= 1
            stagnation = 0
            continue
        if lo == hi - 1:
            # Closed-form eigenvalues of the isolated trailing 2x2 block.
            p = h[lo, lo]
            q = h[lo, hi]
            r = h[hi, lo]
            s = h[hi, hi]
            mid = 0.5 * (p + s)
            disc = cmath.sqrt(mid * mid - (p * s - q * r))
            w[lo] = mid + disc
            w[hi] = mid - disc
            hi -= 2
            stagnation = 0
            continue
        total += 1
        if total > max_total:
            return w, 1, hi
        if not (abs(h[hi, hi]) < math.inf):
            return w, 2, hi
        # Shift choice.
        if stagnation > 0 and stagnation % 10 == 0:
            shift = h[hi, hi] + 0.75 * abs(h[hi, hi - 1])
        else:
            p = h[hi - 1, hi - 1]
            q = h[hi - 1, hi]
            r = h[hi, hi - 1]
            s = h[hi, hi]
            mid = 0.5 * (p + s)
            disc = cmath.sqrt(mid * mid - (p * s - q * r))
            lam1 = mid + disc
            lam2 = mid - disc
            if abs(lam1 - s) <= abs(lam2 - s):
                shift = lam1
            else:
                shift = lam2
        stagnation += 1
        for i in range(lo, hi + 1):
            h[i, i] -= shift
        # QR factor of the shifted window by Givens rotations.
        for i in range(lo, hi):
            f = h[i, i]
            g = h[i + 1, i]
            ag = abs(g)
            if ag == 0.0:
                cs[i] = 1.0
                sn[i] = 0.0 + 0.0j
                continue
            af = abs(f)
            d = math.sqrt(af * af + ag * ag)
            if af == 0.0:
                cs[i] = 0.0
                sn[i] = g.conjugate() / ag
            else:
                cs[i] = af / d
                sn[i] = (f / af) * (g.conjugate() / d)
            ci = cs[i]
            si = sn[i]
            for col in range(i, hi + 1):
                t1 = h[i, col]
                t2 = h[i + 1, col]
                h[i, col] = ci * t1 + si * t2
                h[i + 1, col] = -si.conjugate() * t1 + ci * t2
        # Multiply back on the right (forms R*Q within the window).
        for i in range(lo, hi):
            ci = cs[i]
            si = sn[i]
            top = i + 1
            if top > hi:
                top = hi
            for row in range(lo, top + 1):
                t1 = h[row, i]
                t2 = h[row, i + 1]
                h[row, i] = ci * t1 + si.conjugate() * t2
                h[row, i + 1] = -si * t1 + ci * t2
        for i in range(lo, hi + 1):
            h[i, i] += shift
    return w, 0, -1


def jacobi_svd(m, v, tol, max_sweeps):
    """One-sided Jacobi orthogonalization of the columns of `m`.

    Cyclic-by-row pair order; `v` (preallocated identity) accumulates the
    right rotations.  Stops once every normalized off-diagonal Gram entry
    is <= tol.  Returns (sweeps_used, converged_flag, worst_off).
    Column norms of the finished `m` are the singular values.
    """
    n = m.shape[1]
    rows = m.shape[0]
    worst = 0.0
    for sweep in range(max_sweeps):
        worst = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                app = 0.0
                aqq = 0.0
                apq = 0.0 + 0.0j
                for i in range(rows):
                    mp = m[i, p]
                    mq = m[i, q]
                    app += mp.real * mp.real + mp.imag * mp.imag
                    aqq += mq.real * mq.real + mq.imag * mq.imag
                    apq += mp.conjugate() * mq
                mag = abs(apq)
                denom = math.sqrt(app * aqq)
                if denom == 0.0:
                    continue
                rel = mag / denom
                if rel > worst:
                    worst = rel
                if rel <= tol:
                    continue
                phase = apq / mag
                tau = (aqq - app) / (2.0 * mag)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                cth = 1.0 / math.sqrt(1.0 + t * t)
                sth = cth * t
                pc = phase.conjugate()
                for i in range(rows):
                    mp = m[i, p]
                    mq = m[i, q]
                    m[i, p] = cth * mp - sth * pc * mq
                    m[i, q] = sth * mp + cth * pc * mq
                for i in range(n):
                    vp = v[i, p]
                    vq = v[i, q]
                    v[i, p] = cth * vp - sth * pc * vq
                    v[i, q] = sth * vp + cth * pc * vq
        if worst <= tol:
            return sweep + 1, True, worst
    return max_sweeps, worst <= tol, worst


# --- backend selection -----------------------------------------------------

PURE = {
    "transfer_product": transfer_product,
    "solution_logs": solution_logs,
    "pair_growth_logs": pair_growth_logs,
    "char_logabs": char_logabs,
    "tridiag_logdet": tridiag_logdet,
    "hessenberg_reduce": hessenberg_reduce,
    "qr_eigvals": qr_eigvals,
    "jacobi_svd": jacobi_svd,
}


def _numba_disabled() -> bool:
    return os.environ.get("JACOBI_SPECTRA_NO_NUMBA", "").strip().lower() in {
        "1", "true", "yes", "on",
    }


BACKEND = "python"
if not _numba_disabled():
    try:
        import numba

        _jit = numba.njit(cache=True, nogil=True)
        transfer_product = _jit(transfer_product)
        solution_logs = _jit(solution_logs)
        pair_growth_logs = _jit(pair_growth_logs)
        char_logabs = _jit(char_logabs)
        tridiag_logdet = _jit(tridiag_logdet)
        hessenberg_reduce = _jit(hessenberg_reduce)
        qr_eigvals = _jit(qr_eigvals)
        jacobi_svd = _jit(jacobi_svd)
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - exercised via env flag instead
        pass
