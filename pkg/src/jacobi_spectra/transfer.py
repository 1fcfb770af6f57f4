"""Transfer-matrix propagation and Lyapunov-exponent estimators.

The one-step matrix sends (f_j, f_{j-1}) to (f_{j+1}, f_j) for the
difference equation a_j f_{j-1} + b_j f_j + c_j f_{j+1} = z f_j:

    g_j = [[(z - b_j)/c_j, -a_j/c_j], [1, 0]],   det g_j = a_j / c_j.

Products are held in scaled form (unit part + accumulated natural log), so
window lengths up to 10**7 stay inside double range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .ensemble import (
    CoefficientDistribution,
    CoefficientSequence,
    CoefficientTriple,
    DiscreteAtoms,
    HatanoNelson,
    ScalarLaw,
    sample_sequence,
)
from .rng import substream

_DET_TOL = 1e-14

# Replica offset reserved for internal calibration runs so they never share
# a stream with user-visible replicas.
_CALIBRATION_OFFSET = 1_000_000


@dataclass(frozen=True)
class TransferMatrix:
    """One-step matrix for a coefficient triple at spectral parameter z."""

    triple: CoefficientTriple
    z: complex
    entries: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        t = self.triple
        z = complex(self.z)
        m = np.array(
            [[(z - t.b) / t.c, -t.a / t.c], [1.0 + 0.0j, 0.0 + 0.0j]],
            dtype=np.complex128,
        )
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "entries", m)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        ref = t.a / t.c
        if abs(det - ref) > _DET_TOL * max(1.0, abs(ref)):
            raise ArithmeticError("one-step determinant drifted from a/c")

    @property
    def det(self) -> complex:
        return self.triple.a / self.triple.c


def transfer_matrix(triple: CoefficientTriple, z: complex) -> TransferMatrix:
    return TransferMatrix(triple=triple, z=z)


@dataclass(frozen=True)
class ScaledTransferState:
    """Product of one-step matrices in scaled form.

    unit_part has max-entry magnitude in [1/2, 2]; the true product is
    unit_part * exp(log_scale).
    """

    unit_part: np.ndarray
    log_scale: float
    step_count: int

    def __post_init__(self):
        m = float(np.max(np.abs(self.unit_part)))
        if self.step_count > 0 and not (0.5 <= m <= 2.0):
            raise ArithmeticError("unit part escaped the [1/2, 2] scaling band")

    def log_frobenius(self) -> float:
        return self.log_scale + math.log(float(np.linalg.norm(self.unit_part)))

    def log_abs_det(self) -> float:
        """log|det| read off the stored product.

        Only trustworthy while (gamma1 - gamma2) * step_count stays below
        ~30: past that the unit part is numerically rank one and the 2x2
        determinant is pure cancellation noise.  For long windows get
        log|det| from the re-orthogonalized pair estimator instead, whose
        two growth logs sum to it without cancellation.
        """
        u = self.unit_part
        det = u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0]
        if det == 0:
            return -math.inf
        return 2.0 * self.log_scale + math.log(abs(det))

    def matrix(self) -> np.ndarray:
        """Raw product; overflows for long windows, prefer the log forms."""
        return self.unit_part * math.exp(self.log_scale)


def propagate(seq: CoefficientSequence, z: complex) -> ScaledTransferState:
    """Scaled product of the window's transfer matrices (newest leftmost)."""
    u11, u12, u21, u22, log_scale, bad = _kernels.transfer_product(
        seq.a, seq.b, seq.c, complex(z)
    )
    if bad >= 0:
        raise FloatingPointError(f"transfer product degenerated at step {bad}")
    unit = np.array([[u11, u12], [u21, u22]], dtype=np.complex128)
    return ScaledTransferState(unit_part=unit, log_scale=log_scale, step_count=seq.n)


@dataclass(frozen=True)
class SolutionPair:
    """Trailing solution terms in log form: `final` is the term one past the
    window (the monic characteristic value up to the product of c's) and
    `prev` the last in-window term.  Exact roots give -inf with phase 0."""

    log_abs_final: float
    log_abs_prev: float
    phase_final: complex
    phase_prev: complex
    n: int

    def log_norm(self) -> float:
        """log of the Euclidean norm of (final, prev)."""
        return 0.5 * np.logaddexp(2.0 * self.log_abs_final, 2.0 * self.log_abs_prev)

    @property
    def hit_eigenvalue(self) -> bool:
        return self.log_abs_final == -math.inf


def solution_pair(seq: CoefficientSequence, z: complex) -> SolutionPair:
    lf, lp, pf, pp, bad = _kernels.solution_logs(seq.a, seq.b, seq.c, complex(z))
    if bad >= 0:
        raise FloatingPointError(f"recurrence degenerated at step {bad}")
    return SolutionPair(
        log_abs_final=lf, log_abs_prev=lp, phase_final=pf, phase_prev=pp, n=seq.n
    )


_METHODS = ("norm", "furstenberg", "recurrence", "qr_pair")


@dataclass(frozen=True)
class LyapunovEstimate:
    """Top pair of Lyapunov exponents with Monte Carlo error bars.

    gamma1 >= gamma2 is enforced by ordering.  For the norm/furstenberg and
    recurrence methods gamma2 is derived from the exact determinant sum
    rule gamma1 + gamma2 = E log|a/c|; the qr_pair method measures both.
    std_error is the standard error of gamma1 over replicas (nan for a
    single replica); sum_std_error is the standard error of gamma1+gamma2.
    """

    gamma1: float
    gamma2: float
    std_error: float
    sum_std_error: float
    method: str
    z: complex
    n: int
    replicas: int
    samples1: tuple = field(repr=False, default=())
    samples2: tuple = field(repr=False, default=())

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.gamma2 > self.gamma1:
            object.__setattr__(self, "gamma1", self.gamma2)
            object.__setattr__(self, "gamma2", self.gamma1)


def _stderr(xs: np.ndarray) -> float:
    if xs.size < 2:
        return math.nan
    return float(np.std(xs, ddof=1) / math.sqrt(xs.size))


def _estimate(dist, z, n, replicas, seed, method, period=4):
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    z = complex(z)
    g1 = np.empty(replicas)
    g2 = np.empty(replicas)
    det_rate = np.empty(replicas)
    for r in range(replicas):
        seq = sample_sequence(dist, n, seed, r)
        det_rate[r] = float(
            np.mean(np.log(np.abs(seq.a)) - np.log(np.abs(seq.c)))
        )
        if method == "furstenberg":
            state = propagate(seq, z)
            g1[r] = state.log_frobenius() / n
            g2[r] = det_rate[r] - g1[r]
        elif method == "recurrence":
            pair = solution_pair(seq, z)
            g1[r] = pair.log_norm() / n
            g2[r] = det_rate[r] - g1[r]
        elif method == "qr_pair":
            acc1, acc2, bad = _kernels.pair_growth_logs(
                seq.a, seq.b, seq.c, z, period
            )
            if bad >= 0:
                raise FloatingPointError(f"frame propagation degenerated at step {bad}")
            g1[r] = acc1 / n
            g2[r] = acc2 / n
        else:  # pragma: no cover
            raise ValueError(method)
    return LyapunovEstimate(
        gamma1=float(np.mean(g1)),
        gamma2=float(np.mean(g2)),
        std_error=_stderr(g1),
        sum_std_error=_stderr(g1 + g2),
        method=method,
        z=z,
        n=n,
        replicas=replicas,
        samples1=tuple(g1.tolist()),
        samples2=tuple(g2.tolist()),
    )


def lyapunov_top(dist, z, n, replicas, seed) -> LyapunovEstimate:
    """Top exponent from the growth of the full scaled product (Frobenius
    norm), averaged over replicas."""
    return _estimate(dist, z, n, replicas, seed, "furstenberg")


def lyapunov_via_recurrence(dist, z, n, replicas, seed) -> LyapunovEstimate:
    """Top exponent from the growth of the trailing solution pair."""
    return _estimate(dist, z, n, replicas, seed, "recurrence")


def lyapunov_pair(dist, z, n, replicas, seed, period: int = 4) -> LyapunovEstimate:
    """Both exponents from an orthonormal 2-frame re-orthogonalized every
    `period` steps.

    The window must keep the subdominant direction representable: it
    shrinks by roughly exp(-gap * period) relative to the dominant one
    between renormalizations, so period should stay below ~30/gap.  The
    default handles exponent gaps up to ~7.
    """
    return _estimate(dist, z, n, replicas, seed, "qr_pair", period=period)


def expected_log_ratio(
    dist: CoefficientDistribution, samples: int = 200_000, seed: int = 0
):
    """(E log|a/c|, stderr); exact (stderr 0) when the law allows it."""
    if isinstance(dist, DiscreteAtoms):
        p = np.asarray(dist.probabilities)
        vals = np.array(
            [math.log(abs(t.a)) - math.log(abs(t.c)) for t in dist.atoms]
        )
        return float(np.dot(p, vals)), 0.0
    if isinstance(dist, HatanoNelson):
        # a_{j+1} = conj(rho_j c_j) gives log|a_{j+1}/c_{j+1}| =
        # log rho_j + log|c_j| - log|c_{j+1}|, so the mean rate is E log rho.
        exact = _exact_log_mean(dist.ratio_law)
        if exact is not None:
            return exact, 0.0
    rng = substream(seed, _CALIBRATION_OFFSET)
    a, b, c = dist.sample_arrays(rng, samples)
    vals = np.log(np.abs(a)) - np.log(np.abs(c))
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(samples))


def expected_log_c(
    dist: CoefficientDistribution, samples: int = 200_000, seed: int = 0
):
    """(E log|c|, stderr); exact (stderr 0) when the law allows it."""
    if isinstance(dist, DiscreteAtoms):
        p = np.asarray(dist.probabilities)
        vals = np.array([math.log(abs(t.c)) for t in dist.atoms])
        return float(np.dot(p, vals)), 0.0
    if isinstance(dist, HatanoNelson):
        exact = _exact_log_mean(dist.c_mag_law)
        if exact is not None:
            return exact, 0.0
    rng = substream(seed, _CALIBRATION_OFFSET + 1)
    _, _, c = dist.sample_arrays(rng, samples)
    vals = np.log(np.abs(c))
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(samples))


def _exact_log_mean(law: ScalarLaw) -> Optional[float]:
    if law.kind == "constant":
        return math.log(law.params[0])
    if law.kind == "choice":
        vals, probs = law.params
        if any(v <= 0 for v in vals):
            return None
        return float(sum(p * math.log(v) for v, p in zip(vals, probs)))
    if law.kind == "loguniform":
        lo, hi = law.params
        return 0.5 * (math.log(lo) + math.log(hi))
    if law.kind == "lognormal":
        return law.params[0]
    return None


def angular_distance(x, y) -> float:
    """Projective distance between nonzero vectors: sqrt(1 - |<x,y>|^2 /
    (<x,x><y,y>)).  Invariant under rescaling either argument."""
    x = np.asarray(x, dtype=np.complex128).ravel()
    y = np.asarray(y, dtype=np.complex128).ravel()
    if x.shape != y.shape:
        raise ValueError("vectors must have matching shape")
    xx = float(np.real(np.vdot(x, x)))
    yy = float(np.real(np.vdot(y, y)))
    if xx == 0.0 or yy == 0.0:
        raise ValueError("angular distance undefined for the zero vector")
    inner = np.vdot(x, y)
    rad = 1.0 - (inner.real * inner.real + inner.imag * inner.imag) / (xx * yy)
    if rad < 0.0:
        rad = 0.0
    return math.sqrt(rad)


@dataclass(frozen=True)
class DeviationProbe:
    """Empirical tail of |log ||S_n x|| - n*gamma1| >= eps*n over replicas,
    with a 95% Wilson interval."""

    probability: float
    count: int
    replicas: int
    ci_low: float
    ci_high: float
    epsilon: float
    n: int
    gamma1_used: float


def large_deviation_probe(
    dist,
    z,
    n,
    epsilon,
    replicas,
    seed,
    gamma1: Optional[float] = None,
) -> DeviationProbe:
    """Measure how often the finite-window growth rate strays from gamma1.

    When gamma1 is not supplied it is calibrated from dedicated replicas
    (offset stream) at window length max(n, 10_000).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    z = complex(z)
    if gamma1 is None:
        calib_replicas = 8
        m = max(n, 10_000)
        xs = np.empty(calib_replicas)
        for r in range(calib_replicas):
            seq = sample_sequence(dist, m, seed, _CALIBRATION_OFFSET + r)
            pair = solution_pair(seq, z)
            xs[r] = pair.log_norm() / m
        gamma1 = float(np.mean(xs))
    count = 0
    for r in range(replicas):
        seq = sample_sequence(dist, n, seed, r)
        pair = solution_pair(seq, z)
        if abs(pair.log_norm() - n * gamma1) >= epsilon * n:
            count += 1
    p_hat = count / replicas
    zq = 1.959963984540054  # 97.5% normal quantile
    denom = 1.0 + zq * zq / replicas
    center = (p_hat + zq * zq / (2 * replicas)) / denom
    half = (
        zq
        * math.sqrt(p_hat * (1 - p_hat) / replicas + zq * zq / (4 * replicas**2))
        / denom
    )
    return DeviationProbe(
        probability=p_hat,
        count=count,
        replicas=replicas,
        ci_low=max(0.0, center - half),
        ci_high=min(1.0, center + half),
        epsilon=float(epsilon),
        n=n,
        gamma1_used=float(gamma1),
    )
