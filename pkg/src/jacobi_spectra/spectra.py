"""Finite tridiagonal operators: spectra, singular values, tail bounds.

All eigenvalues come from the in-house shifted Hessenberg QR kernel (the
matrices are already Hessenberg in the open-boundary case); singular values
come from the in-house one-sided Jacobi kernel.  Nothing here calls a
library eigensolver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .ensemble import CoefficientSequence

MAX_EIG_N = 4096
_TRACE_TOL = 1e-8
_SVD_TOL = 1e-12
_SVD_MAX_SWEEPS = 60
_ORTH_TOL = 1e-10

DIRICHLET = "dirichlet"
PERIODIC = "periodic"


@dataclass(frozen=True)
class JacobiMatrix:
    """Tridiagonal matrix with optional wrap-around corners.

    diag holds b_1..b_n, sub holds a_2..a_n (one below the diagonal), sup
    holds c_1..c_{n-1}.  Periodic boundary adds corner_a = a_1 at (1, n)
    and corner_c = c_n at (n, 1); the open (dirichlet) boundary uses
    neither a_1 nor c_n.
    """

    diag: np.ndarray
    sub: np.ndarray
    sup: np.ndarray
    boundary: str = DIRICHLET
    corner_a: complex = 0j
    corner_c: complex = 0j

    def __post_init__(self):
        diag = np.ascontiguousarray(self.diag, dtype=np.complex128)
        sub = np.ascontiguousarray(self.sub, dtype=np.complex128)
        sup = np.ascontiguousarray(self.sup, dtype=np.complex128)
        n = diag.shape[0]
        if n < 1:
            raise ValueError("empty matrix")
        if sub.shape != (n - 1,) or sup.shape != (n - 1,):
            raise ValueError("sub/sup must have length n-1")
        if np.any(sub == 0) or np.any(sup == 0):
            raise ValueError("hopping entries must be nonzero")
        if self.boundary not in (DIRICHLET, PERIODIC):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.boundary == PERIODIC:
            if n < 3:
                raise ValueError("periodic boundary needs n >= 3")
            if self.corner_a == 0 or self.corner_c == 0:
                raise ValueError("periodic corners must be nonzero")
        else:
            if self.corner_a != 0 or self.corner_c != 0:
                raise ValueError("open boundary must not carry corners")
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "sub", sub)
        object.__setattr__(self, "sup", sup)
        object.__setattr__(self, "corner_a", complex(self.corner_a))
        object.__setattr__(self, "corner_c", complex(self.corner_c))

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    @property
    def scale(self) -> float:
        """Max row magnitude sum; the natural size for tolerances."""
        n = self.n
        s = np.abs(self.diag).copy()
        s[1:] += np.abs(self.sub)
        s[:-1] += np.abs(self.sup)
        if self.boundary == PERIODIC:
            s[0] += abs(self.corner_a)
            s[-1] += abs(self.corner_c)
        return float(np.max(s))

    def to_dense(self) -> np.ndarray:
        n = self.n
        m = np.zeros((n, n), dtype=np.complex128)
        m[np.arange(n), np.arange(n)] = self.diag
        if n > 1:
            m[np.arange(1, n), np.arange(n - 1)] = self.sub
            m[np.arange(n - 1), np.arange(1, n)] = self.sup
        if self.boundary == PERIODIC:
            m[0, n - 1] = self.corner_a
            m[n - 1, 0] = self.corner_c
        return m

    def row_norms_sq(self) -> np.ndarray:
        """Squared Euclidean norm of each row (used by the tail bounds)."""
        s = np.abs(self.diag) ** 2
        if self.n > 1:
            s[1:] += np.abs(self.sub) ** 2
            s[:-1] += np.abs(self.sup) ** 2
        if self.boundary == PERIODIC:
            s[0] += abs(self.corner_a) ** 2
            s[-1] += abs(self.corner_c) ** 2
        return s


def _window(seq: CoefficientSequence, n: int | None):
    if n is None:
        return seq.a, seq.b, seq.c
    if n > seq.n:
        raise ValueError(f"sequence holds {seq.n} triples, needs {n}")
    if n < 1:
        raise ValueError("n must be positive")
    return seq.a[:n], seq.b[:n], seq.c[:n]


def build_jacobi(seq: CoefficientSequence, n: int | None = None) -> JacobiMatrix:
    """Open-boundary matrix of the first n triples (a_1, c_n unused)."""
    a, b, c = _window(seq, n)
    return JacobiMatrix(diag=b, sub=a[1:], sup=c[:-1], boundary=DIRICHLET)


def build_periodic(seq: CoefficientSequence, n: int | None = None) -> JacobiMatrix:
    """Wrap-around matrix: a_1 sits at (1, n) and c_n at (n, 1)."""
    a, b, c = _window(seq, n)
    if b.shape[0] < 3:
        raise ValueError("periodic boundary needs n >= 3")
    return JacobiMatrix(
        diag=b,
        sub=a[1:],
        sup=c[:-1],
        boundary=PERIODIC,
        corner_a=a[0],
        corner_c=c[-1],
    )


# --- balancing -------------------------------------------------------------


def _chain_balance(sub: np.ndarray, sup: np.ndarray):
    """Power-of-2 diagonal similarity equalizing |sub_j| and |sup_j|.

    One pass along the chain: the exact cumulative scaling exponent is
    tracked in log2 and rounded per node, so the residual imbalance of any
    entry is at most a factor 2 even for strongly graded chains.  Scaling
    by 2**k is exact, so no rounding error enters the entries.
    """
    ideal = np.concatenate(
        ([0.0], np.cumsum(0.5 * (np.log2(np.abs(sup)) - np.log2(np.abs(sub)))))
    )
    e = np.rint(ideal)
    de = (e[1:] - e[:-1]).astype(np.int64)
    sub2 = np.ldexp(sub.real, de) + 1j * np.ldexp(sub.imag, de)
    sup2 = np.ldexp(sup.real, -de) + 1j * np.ldexp(sup.imag, -de)
    return sub2, sup2


def _cyclic_balance(J: JacobiMatrix, max_sweeps: int = 16):
    """Power-of-2 row/column norm equalization on the cyclic pattern.

    The chain rule cannot be used here: a cycle with a net hopping
    imbalance would push the whole product onto the corner entries and
    overflow, so this sweeps local corrections instead (a no-op for
    constant-magnitude hopping, where the cycle is already balanced).
    """
    n = J.n
    asub = np.abs(J.sub)
    asup = np.abs(J.sup)
    aca = abs(J.corner_a)
    acb = abs(J.corner_c)
    e = np.zeros(n, dtype=np.int64)

    def row_col(j):
        row = 0.0
        col = 0.0
        if j > 0:
            row += asub[j - 1] * 2.0 ** (e[j] - e[j - 1])
            col += asup[j - 1] * 2.0 ** (e[j - 1] - e[j])
        if j < n - 1:
            row += asup[j] * 2.0 ** (e[j] - e[j + 1])
            col += asub[j] * 2.0 ** (e[j + 1] - e[j])
        if j == 0:
            row += aca * 2.0 ** (e[0] - e[n - 1])
            col += acb * 2.0 ** (e[n - 1] - e[0])
        if j == n - 1:
            row += acb * 2.0 ** (e[n - 1] - e[0])
            col += aca * 2.0 ** (e[0] - e[n - 1])
        return row, col

    for _ in range(max_sweeps):
        changed = False
        for j in range(n):
            row, col = row_col(j)
            if row <= 0.0 or col <= 0.0:
                continue
            k = int(round(0.5 * (math.log2(col) - math.log2(row))))
            k = max(-512, min(512, k))
            if k != 0:
                e[j] += k
                changed = True
        if not changed:
            break

    de = (e[1:] - e[:-1]).astype(np.int64)
    sub2 = np.ldexp(J.sub.real, de) + 1j * np.ldexp(J.sub.imag, de)
    sup2 = np.ldexp(J.sup.real, -de) + 1j * np.ldexp(J.sup.imag, -de)
    wrap = int(e[0] - e[n - 1])
    ca2 = complex(math.ldexp(J.corner_a.real, wrap), math.ldexp(J.corner_a.imag, wrap))
    cb2 = complex(math.ldexp(J.corner_c.real, -wrap), math.ldexp(J.corner_c.imag, -wrap))
    return sub2, sup2, ca2, cb2


# --- eigenvalues -----------------------------------------------------------


@dataclass(frozen=True)
class SpectralSample:
    """Eigenvalue multiset of one matrix sample.

    eigenvalues are sorted by (real, imag) for reproducible output.
    residual_bound is the worst monic characteristic-polynomial residual
    |p(z_l)| / prod_{m != l} max(|z_l - z_m|, eps), a per-root displacement
    estimate; eps = 1e-14 * max(1, spectral radius).
    """

    eigenvalues: np.ndarray
    residual_bound: float
    boundary: str
    n: int

    def __post_init__(self):
        w = np.ascontiguousarray(self.eigenvalues, dtype=np.complex128)
        object.__setattr__(self, "eigenvalues", w)


def eigenvalues(J: JacobiMatrix, max_iter_factor: int = 40) -> SpectralSample:
    """Eigenvalues by balanced shifted Hessenberg QR; n capped at 4096."""
    n = J.n
    if n > MAX_EIG_N:
        raise ValueError(f"n={n} above the supported cap {MAX_EIG_N}")
    if n == 1:
        w = J.diag.copy()
    else:
        h = np.zeros((n, n), dtype=np.complex128)
        idx = np.arange(n)
        h[idx, idx] = J.diag
        if J.boundary == DIRICHLET:
            sub2, sup2 = _chain_balance(J.sub, J.sup)
            h[idx[1:], idx[:-1]] = sub2
            h[idx[:-1], idx[1:]] = sup2
        else:
            sub2, sup2, ca2, cb2 = _cyclic_balance(J)
            h[idx[1:], idx[:-1]] = sub2
            h[idx[:-1], idx[1:]] = sup2
            h[0, n - 1] = ca2
            h[n - 1, 0] = cb2
            _kernels.hessenberg_reduce(h)
        w, status, where = _kernels.qr_eigvals(h, max_iter_factor)
        if status == 1:
            raise RuntimeError(
                f"QR iteration did not converge within {max_iter_factor}*n sweeps "
                f"(active index {where})"
            )
        if status == 2:
            raise FloatingPointError(f"non-finite data during QR at index {where}")
    trace_err = abs(np.sum(w) - np.sum(J.diag))
    if trace_err > _TRACE_TOL * max(1.0, J.scale) * n:
        raise ArithmeticError(
            f"eigenvalue sum drifted from the trace by {trace_err:.3e}"
        )
    order = np.lexsort((w.imag, w.real))
    w = w[order]
    resid = _residual_bound(J, w)
    return SpectralSample(eigenvalues=w, residual_bound=resid, boundary=J.boundary, n=n)


def _logsum_signed(logs, phases):
    """log|sum| and phase of a sum given per-term (log magnitude, phase)."""
    logs = np.asarray(logs, dtype=np.float64)
    phases = np.asarray(phases, dtype=np.complex128)
    keep = logs > -math.inf
    if not np.any(keep):
        return -math.inf, 0.0j
    logs = logs[keep]
    phases = phases[keep]
    m = float(np.max(logs))
    total = np.sum(phases * np.exp(logs - m))
    at = abs(total)
    if at == 0.0:
        return -math.inf, 0.0j
    return m + math.log(at), total / at


def char_poly_logabs(J: JacobiMatrix, zs) -> np.ndarray:
    """log of the monic characteristic polynomial magnitude at each z.

    Open boundary delegates to the solution recurrence; the wrap-around
    case adds the two corner cofactor terms and the interior determinant.
    """
    zs = np.ascontiguousarray(np.atleast_1d(np.asarray(zs, dtype=np.complex128)))
    n = J.n
    if J.boundary == DIRICHLET:
        if n == 1:
            with np.errstate(divide="ignore"):
                return np.log(np.abs(J.diag[0] - zs))
        a_ext = np.concatenate(([1.0 + 0.0j], J.sub))
        c_ext = np.concatenate((J.sup, [1.0 + 0.0j]))
        base = _kernels.char_logabs(a_ext, J.diag, c_ext, zs)
        return base + float(np.sum(np.log(np.abs(J.sup))))
    # det(P - zI) = det(T - zI) + (-1)^(n-1) * (ca*prod(sub) + cb*prod(sup))
    #               - ca*cb*det(T_int - zI); |det(P - zI)| is monic in |.|.
    sgn = 1.0 if (n - 1) % 2 == 0 else -1.0
    log_ca = math.log(abs(J.corner_a)) + float(np.sum(np.log(np.abs(J.sub))))
    ph_ca = sgn * (J.corner_a / abs(J.corner_a)) * np.prod(J.sub / np.abs(J.sub))
    log_cb = math.log(abs(J.corner_c)) + float(np.sum(np.log(np.abs(J.sup))))
    ph_cb = sgn * (J.corner_c / abs(J.corner_c)) * np.prod(J.sup / np.abs(J.sup))
    log_cc = math.log(abs(J.corner_a)) + math.log(abs(J.corner_c))
    ph_cc = -(J.corner_a / abs(J.corner_a)) * (J.corner_c / abs(J.corner_c))
    out = np.empty(zs.shape[0], dtype=np.float64)
    for k, z in enumerate(zs):
        lf, pf = _kernels.tridiag_logdet(J.diag, J.sub, J.sup, z)
        li, pi = _kernels.tridiag_logdet(J.diag[1:-1], J.sub[1:-1], J.sup[1:-1], z)
        out[k], _ = _logsum_signed(
            [lf, log_ca, log_cb, log_cc + li],
            [pf, ph_ca, ph_cb, ph_cc * pi],
        )
    return out


def char_poly_eval(seq: CoefficientSequence, z: complex, n: int | None = None):
    """(log|f_{n+1}(z)|, phase) of the solution recurrence started from
    (0, 1); an independent route to the characteristic polynomial, tied
    to the matrix one by the hopping products."""
    from .transfer import solution_pair

    pair = solution_pair(seq if n is None else seq.head(n), z)
    return pair.log_abs_final, pair.phase_final


def logabs_det(J: JacobiMatrix):
    """(log|det J|, phase) by the scaled determinant recurrence."""
    if J.boundary == DIRICHLET:
        return _kernels.tridiag_logdet(J.diag, J.sub, J.sup, 0.0 + 0.0j)
    n = J.n
    sgn = 1.0 if (n - 1) % 2 == 0 else -1.0
    lf, pf = _kernels.tridiag_logdet(J.diag, J.sub, J.sup, 0.0 + 0.0j)
    li, pi = _kernels.tridiag_logdet(J.diag[1:-1], J.sub[1:-1], J.sup[1:-1], 0.0 + 0.0j)
    log_ca = math.log(abs(J.corner_a)) + float(np.sum(np.log(np.abs(J.sub))))
    ph_ca = sgn * (J.corner_a / abs(J.corner_a)) * np.prod(J.sub / np.abs(J.sub))
    log_cb = math.log(abs(J.corner_c)) + float(np.sum(np.log(np.abs(J.sup))))
    ph_cb = sgn * (J.corner_c / abs(J.corner_c)) * np.prod(J.sup / np.abs(J.sup))
    log_cc = math.log(abs(J.corner_a)) + math.log(abs(J.corner_c))
    ph_cc = -(J.corner_a / abs(J.corner_a)) * (J.corner_c / abs(J.corner_c))
    return _logsum_signed(
        [lf, log_ca, log_cb, log_cc + li], [pf, ph_ca, ph_cb, ph_cc * pi]
    )


def _residual_bound(J: JacobiMatrix, w: np.ndarray) -> float:
    n = w.shape[0]
    if n == 0:
        return 0.0
    log_p = char_poly_logabs(J, w)
    eps = 1e-14 * max(1.0, float(np.max(np.abs(w))))
    diff = np.abs(w[:, None] - w[None, :])
    np.fill_diagonal(diff, 1.0)
    log_sep = np.sum(np.log(np.maximum(diff, eps)), axis=1)
    with np.errstate(over="ignore"):
        resid = np.exp(log_p - log_sep)
    resid = resid[np.isfinite(resid)]
    return float(np.max(resid)) if resid.size else 0.0


# --- singular values -------------------------------------------------------


_GRAM_SWITCH_N = 256


def singular_values(J: JacobiMatrix, method: str = "auto") -> np.ndarray:
    """Descending singular values.

    method="sweep": one-sided Jacobi orthogonalization, full working
    precision on every value; cost grows like n^3 per sweep.  Raises if
    the sweep cap is hit or the accumulated rotations lose orthogonality
    beyond 1e-10.

    method="gram": square roots of the Gram-matrix spectrum via the same
    Hessenberg QR used for eigenvalues.  About an order of magnitude
    faster at n in the hundreds, but squaring halves the digits carried
    by values below ~1e-8 times the largest one.  Fine for tail
    functionals of log(1 + s^2); use "sweep" when the small end matters.

    method="auto" (default): "sweep" up to n = 256, "gram" above.
    """
    if method == "auto":
        method = "sweep" if J.n <= _GRAM_SWITCH_N else "gram"
    if method == "gram":
        return _singular_values_gram(J)
    if method != "sweep":
        raise ValueError(f"unknown singular value method: {method!r}")
    m = J.to_dense()
    n = J.n
    v = np.eye(n, dtype=np.complex128)
    sweeps, converged, worst = _kernels.jacobi_svd(m, v, _SVD_TOL, _SVD_MAX_SWEEPS)
    if not converged:
        raise RuntimeError(
            f"one-sided Jacobi did not converge in {_SVD_MAX_SWEEPS} sweeps "
            f"(worst off-diagonal {worst:.3e})"
        )
    orth = float(np.max(np.abs(v.conj().T @ v - np.eye(n))))
    if orth > _ORTH_TOL:
        raise ArithmeticError(f"rotation accumulation lost orthogonality: {orth:.3e}")
    s = np.sqrt(np.sum(np.abs(m) ** 2, axis=0))
    return np.sort(s)[::-1]


def _singular_values_gram(J: JacobiMatrix) -> np.ndarray:
    if J.n == 1:
        return np.abs(J.diag).astype(np.float64)
    a = J.to_dense()
    g = a.conj().T @ a
    if J.n > 2:
        _kernels.hessenberg_reduce(g)
    lam, status, where = _kernels.qr_eigvals(g, 40)
    if status == 1:
        raise RuntimeError(
            f"QR iteration on the Gram matrix did not converge (index {where})"
        )
    if status == 2:
        raise FloatingPointError(f"non-finite data during Gram QR at index {where}")
    return np.sqrt(np.sort(np.maximum(lam.real, 0.0))[::-1])


# --- spectral/singular comparison chains ------------------------------------


@dataclass(frozen=True)
class WeylReport:
    """Partial-sum majorization data: lhs_m over eigenvalue magnitudes,
    rhs_m over singular values, after applying F(t) = log^(1+delta) t on
    t >= 1 (terms below 1 contribute zero when truncated)."""

    delta: float
    truncated: bool
    lhs: np.ndarray
    rhs: np.ndarray
    min_slack: float


def weyl_check(
    J: JacobiMatrix,
    delta: float,
    truncate: bool = True,
    sample: SpectralSample | None = None,
    svals: np.ndarray | None = None,
) -> WeylReport:
    """Compare partial sums of F(|eigenvalue|) against F(singular value).

    With truncate=False only delta == 0 is allowed (plain log); there the
    final partial sums agree because |det| is the product of either set.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if not truncate and delta != 0:
        raise ValueError("untruncated comparison only makes sense at delta = 0")
    if sample is None:
        sample = eigenvalues(J)
    if svals is None:
        svals = singular_values(J)
    zs = np.sort(np.abs(sample.eigenvalues))[::-1]
    ss = np.asarray(svals)
    with np.errstate(divide="ignore"):
        lz = np.log(zs)
        ls = np.log(ss)
    if truncate:
        lz = np.maximum(lz, 0.0)
        ls = np.maximum(ls, 0.0)
    lhs = np.cumsum(lz ** (1.0 + delta))
    rhs = np.cumsum(ls ** (1.0 + delta))
    return WeylReport(
        delta=delta,
        truncated=truncate,
        lhs=lhs,
        rhs=rhs,
        min_slack=float(np.min(rhs - lhs)),
    )


@dataclass(frozen=True)
class TailBounds:
    """Singular-value tail bounds at (delta, R).

    tau1_bound:  (1/2n) sum log(1 + s_j^2)
    tauR_bound:  sum log^(1+delta)(1 + s_j^2) / (2^(1+delta) n log^delta R)
    trace_log_value: (1/n) sum log^(1+delta)(1 + s_j^2)
    domination_bound: (alpha/n) sum log^(1+delta)(1 + beta*|row_j|^2) with
    alpha = 5^(1+delta), beta = 10, from row-sum domination of I + J J^H
    for a tridiagonal-plus-corners J (each row of J J^H overlaps at most
    five coefficient rows).
    """

    delta: float
    R: float
    tau1_bound: float
    tauR_bound: float
    trace_log_value: float
    domination_bound: float
    alpha: float
    beta: float


def tail_bounds(
    J: JacobiMatrix, delta: float, R: float, svals: np.ndarray | None = None
) -> TailBounds:
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if R <= 1:
        raise ValueError("R must exceed 1")
    if svals is None:
        svals = singular_values(J)
    n = J.n
    terms = np.log1p(np.asarray(svals) ** 2)
    tau1 = float(np.sum(terms)) / (2.0 * n)
    powered = terms ** (1.0 + delta)
    trace_log = float(np.sum(powered)) / n
    taur = float(np.sum(powered)) / (2.0 ** (1.0 + delta) * n * math.log(R) ** delta)
    alpha = 5.0 ** (1.0 + delta)
    beta = 10.0
    dom = alpha * float(np.sum(np.log1p(beta * J.row_norms_sq()) ** (1.0 + delta))) / n
    if trace_log > dom + 1e-9:
        raise ArithmeticError(
            "trace bound exceeded its row-sum domination bound; "
            f"{trace_log:.6e} > {dom:.6e}"
        )
    return TailBounds(
        delta=float(delta),
        R=float(R),
        tau1_bound=tau1,
        tauR_bound=taur,
        trace_log_value=trace_log,
        domination_bound=dom,
        alpha=alpha,
        beta=beta,
    )
