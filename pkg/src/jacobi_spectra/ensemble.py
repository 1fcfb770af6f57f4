"""Coefficient ensembles for random tridiagonal operators.

A sample is a sequence of triples (a_j, b_j, c_j) feeding the second-order
difference equation a_j f_{j-1} + b_j f_j + c_j f_{j+1} = z f_j.  The
off-diagonal entries must never vanish; everything else is up to the law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .rng import substream

_CLASS_TOL = 1e-12


@dataclass(frozen=True)
class CoefficientTriple:
    """One row of coefficients; a and c must be nonzero and finite."""

    a: complex
    b: complex
    c: complex

    def __post_init__(self):
        for name in ("a", "b", "c"):
            v = complex(getattr(self, name))
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ValueError(f"coefficient {name} must be finite")
            object.__setattr__(self, name, v)
        if self.a == 0:
            raise ValueError("sub-diagonal coefficient a must be nonzero")
        if self.c == 0:
            raise ValueError("super-diagonal coefficient c must be nonzero")


@dataclass(frozen=True)
class ScalarLaw:
    """A one-dimensional real law used to parametrize asymmetric-hopping
    ensembles.  Kinds: constant, uniform, loguniform, normal, lognormal,
    choice."""

    kind: str
    params: tuple = ()

    @staticmethod
    def constant(value: float) -> "ScalarLaw":
        return ScalarLaw("constant", (float(value),))

    @staticmethod
    def uniform(low: float, high: float) -> "ScalarLaw":
        if not high > low:
            raise ValueError("uniform law needs high > low")
        return ScalarLaw("uniform", (float(low), float(high)))

    @staticmethod
    def loguniform(low: float, high: float) -> "ScalarLaw":
        if not (low > 0 and high > low):
            raise ValueError("loguniform law needs 0 < low < high")
        return ScalarLaw("loguniform", (float(low), float(high)))

    @staticmethod
    def normal(mean: float, std: float) -> "ScalarLaw":
        if std < 0:
            raise ValueError("normal law needs std >= 0")
        return ScalarLaw("normal", (float(mean), float(std)))

    @staticmethod
    def lognormal(mean: float, sigma: float) -> "ScalarLaw":
        if sigma < 0:
            raise ValueError("lognormal law needs sigma >= 0")
        return ScalarLaw("lognormal", (float(mean), float(sigma)))

    @staticmethod
    def choice(values: Sequence[float], probs: Optional[Sequence[float]] = None) -> "ScalarLaw":
        vals = tuple(float(v) for v in values)
        if not vals:
            raise ValueError("choice law needs at least one value")
        if probs is None:
            probs = tuple(1.0 / len(vals) for _ in vals)
        else:
            probs = tuple(float(p) for p in probs)
            if len(probs) != len(vals):
                raise ValueError("choice law: values/probs length mismatch")
            if any(p < 0 for p in probs):
                raise ValueError("choice law: negative probability")
            if abs(sum(probs) - 1.0) > 1e-12:
                raise ValueError("choice law: probabilities must sum to 1 within 1e-12")
        return ScalarLaw("choice", (vals, probs))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        k = self.kind
        if k == "constant":
            return np.full(size, self.params[0])
        if k == "uniform":
            lo, hi = self.params
            return rng.uniform(lo, hi, size)
        if k == "loguniform":
            lo, hi = self.params
            return np.exp(rng.uniform(math.log(lo), math.log(hi), size))
        if k == "normal":
            mu, sd = self.params
            return mu + sd * rng.standard_normal(size)
        if k == "lognormal":
            mu, sd = self.params
            return rng.lognormal(mu, sd, size)
        if k == "choice":
            vals, probs = self.params
            cum = np.cumsum(probs)
            cum[-1] = 1.0
            idx = np.searchsorted(cum, rng.random(size), side="right")
            return np.asarray(vals)[idx]
        raise ValueError(f"unknown scalar law kind {k!r}")

    @property
    def is_constant(self) -> bool:
        if self.kind == "constant":
            return True
        if self.kind == "normal" and self.params[1] == 0:
            return True
        if self.kind == "lognormal" and self.params[1] == 0:
            return True
        if self.kind == "choice":
            vals, probs = self.params
            live = {v for v, p in zip(vals, probs) if p > 0}
            return len(live) <= 1
        return False

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.params[0]}
        if self.kind in ("uniform", "loguniform"):
            return {"kind": self.kind, "low": self.params[0], "high": self.params[1]}
        if self.kind == "normal":
            return {"kind": "normal", "mean": self.params[0], "std": self.params[1]}
        if self.kind == "lognormal":
            return {"kind": "lognormal", "mean": self.params[0], "std": self.params[1]}
        if self.kind == "choice":
            vals, probs = self.params
            return {"kind": "choice", "values": list(vals), "probs": list(probs)}
        raise ValueError(self.kind)

    @staticmethod
    def from_dict(d: dict) -> "ScalarLaw":
        k = d["kind"]
        if k == "constant":
            return ScalarLaw.constant(d["value"])
        if k == "uniform":
            return ScalarLaw.uniform(d["low"], d["high"])
        if k == "loguniform":
            return ScalarLaw.loguniform(d["low"], d["high"])
        if k == "normal":
            return ScalarLaw.normal(d["mean"], d["std"])
        if k == "lognormal":
            return ScalarLaw.lognormal(d["mean"], d["std"])
        if k == "choice":
            return ScalarLaw.choice(d["values"], d.get("probs"))
        raise ValueError(f"unknown scalar law kind {k!r}")


class CoefficientDistribution:
    """Base class: a law over coefficient triples, sampled i.i.d. per site."""

    kind: str = "base"

    def sample_arrays(self, rng: np.random.Generator, n: int):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise TypeError(f"{self.kind} distributions have no file form")


@dataclass(frozen=True)
class DiscreteAtoms(CoefficientDistribution):
    """Finitely supported law given by atoms and their probabilities."""

    atoms: tuple
    probabilities: tuple

    kind = "atoms"

    def __post_init__(self):
        atoms = tuple(self.atoms)
        probs = tuple(float(p) for p in self.probabilities)
        if not atoms:
            raise ValueError("need at least one atom")
        if len(atoms) != len(probs):
            raise ValueError("atoms/probabilities length mismatch")
        for t in atoms:
            if not isinstance(t, CoefficientTriple):
                raise TypeError("atoms must be CoefficientTriple instances")
        if any(p < 0 for p in probs):
            raise ValueError("negative probability")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1 within 1e-12")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probabilities", probs)

    def sample_arrays(self, rng, n):
        cum = np.cumsum(self.probabilities)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, rng.random(n), side="right")
        a = np.array([t.a for t in self.atoms], dtype=np.complex128)[idx]
        b = np.array([t.b for t in self.atoms], dtype=np.complex128)[idx]
        c = np.array([t.c for t in self.atoms], dtype=np.complex128)[idx]
        return a, b, c

    def to_dict(self) -> dict:
        return {
            "variant": "atoms",
            "probabilities": list(self.probabilities),
            "atoms": [
                {
                    "a": [t.a.real, t.a.imag],
                    "b": [t.b.real, t.b.imag],
                    "c": [t.c.real, t.c.imag],
                }
                for t in self.atoms
            ],
        }


@dataclass(frozen=True)
class HatanoNelson(CoefficientDistribution):
    """Asymmetric-hopping class: real diagonal, and conj(a_{j+1})/c_j a
    positive real ratio.  Draws (b_j, c_j, rho_j) and sets
    a_{j+1} = conj(rho_j * c_j); the leading a_1 comes from an extra,
    otherwise unused (rho, c) draw so the law of a_1 matches the rest.
    """

    b_law: ScalarLaw
    ratio_law: ScalarLaw
    c_mag_law: ScalarLaw
    c_phase_law: Optional[ScalarLaw] = None

    kind = "hatano_nelson"

    def sample_arrays(self, rng, n):
        # Draw order is part of the file format: b, |c|, arg c, rho, then
        # the extra pair for a_1.  Changing it would break reproducibility.
        b = self.b_law.sample(rng, n).astype(np.complex128)
        cmag = self.c_mag_law.sample(rng, n)
        if np.any(cmag <= 0):
            raise ValueError("c magnitude law produced a non-positive draw")
        if self.c_phase_law is not None:
            phase = self.c_phase_law.sample(rng, n)
            c = cmag * np.exp(1j * phase)
        else:
            c = cmag.astype(np.complex128)
        rho = self.ratio_law.sample(rng, n)
        if np.any(rho <= 0):
            raise ValueError("ratio law produced a non-positive draw")
        a = np.empty(n, dtype=np.complex128)
        a[1:] = np.conj(rho[:-1] * c[:-1])
        extra_mag = self.c_mag_law.sample(rng, 1)
        if self.c_phase_law is not None:
            extra_phase = self.c_phase_law.sample(rng, 1)
            extra_c = extra_mag * np.exp(1j * extra_phase)
        else:
            extra_c = extra_mag.astype(np.complex128)
        extra_rho = self.ratio_law.sample(rng, 1)
        if extra_rho[0] <= 0 or extra_mag[0] <= 0:
            raise ValueError("law produced an out-of-class leading draw")
        a[0] = np.conj(extra_rho[0] * extra_c[0])
        return a, b, c

    def to_dict(self) -> dict:
        d = {
            "variant": "hatano_nelson",
            "b_law": self.b_law.to_dict(),
            "ratio_law": self.ratio_law.to_dict(),
            "c_mag_law": self.c_mag_law.to_dict(),
        }
        if self.c_phase_law is not None:
            d["c_phase_law"] = self.c_phase_law.to_dict()
        return d


@dataclass(frozen=True)
class Custom(CoefficientDistribution):
    """Arbitrary callback law: sampler(rng, n) -> (a, b, c) arrays."""

    sampler: Callable[[np.random.Generator, int], tuple]
    description: str = "custom"

    kind = "custom"

    def sample_arrays(self, rng, n):
        a, b, c = self.sampler(rng, n)
        a = np.asarray(a, dtype=np.complex128)
        b = np.asarray(b, dtype=np.complex128)
        c = np.asarray(c, dtype=np.complex128)
        if a.shape != (n,) or b.shape != (n,) or c.shape != (n,):
            raise ValueError("custom sampler returned wrong shapes")
        return a, b, c


def distribution_from_dict(d: dict) -> CoefficientDistribution:
    variant = d.get("variant")
    if variant == "atoms":
        atoms = tuple(
            CoefficientTriple(
                complex(t["a"][0], t["a"][1]),
                complex(t["b"][0], t["b"][1]),
                complex(t["c"][0], t["c"][1]),
            )
            for t in d["atoms"]
        )
        return DiscreteAtoms(atoms, tuple(d["probabilities"]))
    if variant == "hatano_nelson":
        phase = d.get("c_phase_law")
        return HatanoNelson(
            b_law=ScalarLaw.from_dict(d["b_law"]),
            ratio_law=ScalarLaw.from_dict(d["ratio_law"]),
            c_mag_law=ScalarLaw.from_dict(d["c_mag_law"]),
            c_phase_law=ScalarLaw.from_dict(phase) if phase else None,
        )
    raise ValueError(f"unknown distribution variant {variant!r}")


@dataclass(frozen=True)
class CoefficientSequence:
    """A sampled window of triples plus the key that regenerates it."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    seed: int
    replica: int
    n: int

    def __post_init__(self):
        for name in ("a", "b", "c"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.complex128)
            if arr.shape != (self.n,):
                raise ValueError(f"{name} must have shape ({self.n},)")
            if not np.all(np.isfinite(arr.real) & np.isfinite(arr.imag)):
                raise ValueError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        if np.any(self.a == 0):
            raise ValueError("sub-diagonal coefficients must be nonzero")
        if np.any(self.c == 0):
            raise ValueError("super-diagonal coefficients must be nonzero")

    def triple(self, j: int) -> CoefficientTriple:
        return CoefficientTriple(self.a[j], self.b[j], self.c[j])

    def head(self, n: int) -> "CoefficientSequence":
        """The window of the first n triples (same provenance key)."""
        if n > self.n:
            raise ValueError(f"sequence holds {self.n} triples, needs {n}")
        if n == self.n:
            return self
        return CoefficientSequence(
            a=self.a[:n], b=self.b[:n], c=self.c[:n],
            seed=self.seed, replica=self.replica, n=n,
        )


def sample_sequence(
    dist: CoefficientDistribution, n: int, seed: int, replica: int = 0
) -> CoefficientSequence:
    """Sample n coefficient triples from the replica substream of `seed`.

    The same (dist, n, seed, replica) always regenerates the identical
    arrays, bit for bit.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = substream(seed, replica)
    a, b, c = dist.sample_arrays(rng, n)
    return CoefficientSequence(a=a, b=b, c=c, seed=seed, replica=replica, n=n)


def sample_hatano_nelson(
    params: HatanoNelson, n: int, seed: int, replica: int = 0
) -> CoefficientSequence:
    """Sample an asymmetric-hopping sequence; see HatanoNelson for the draw
    order contract."""
    if not isinstance(params, HatanoNelson):
        raise TypeError("params must be a HatanoNelson distribution")
    return sample_sequence(params, n, seed, replica)


def hopping_ratios(seq: CoefficientSequence) -> np.ndarray:
    """conj(a_{j+1})/c_j for j = 1..n-1 (the class-defining ratios)."""
    return np.conj(seq.a[1:]) / seq.c[:-1]


def in_hatano_nelson_class(seq: CoefficientSequence, tol: float = _CLASS_TOL) -> bool:
    """True when the diagonal is real and all hopping ratios are positive
    real within `tol` (relative imaginary residual)."""
    if np.any(np.abs(seq.b.imag) > tol * np.maximum(1.0, np.abs(seq.b))):
        return False
    r = hopping_ratios(seq)
    if np.any(r.real <= 0):
        return False
    return bool(np.all(np.abs(r.imag) <= tol * np.abs(r)))


@dataclass(frozen=True)
class LiouvilleData:
    """Symmetrizing gauge for an in-class sequence.

    `weights[k]` rescales the k-th solution component (weights[0] = 1) and
    `couplings[j]` is the symmetrized hopping c_j * sqrt(ratio_j).  The
    log_weights field carries the same gauge without overflow for long
    windows.
    """

    couplings: np.ndarray
    weights: np.ndarray
    log_weights: np.ndarray


def liouville_transform(seq: CoefficientSequence, tol: float = _CLASS_TOL) -> LiouvilleData:
    """Gauge that turns an in-class sequence into a complex-symmetric one.

    Rejects sequences whose diagonal is not real or whose hopping ratios
    are not positive real within `tol`.  Square roots are principal.
    """
    if not in_hatano_nelson_class(seq, tol):
        raise ValueError("sequence is outside the asymmetric-hopping class")
    r = hopping_ratios(seq).real
    couplings = seq.c[:-1] * np.sqrt(r)
    log_weights = np.concatenate(([0.0], 0.5 * np.cumsum(np.log(r))))
    with np.errstate(over="ignore"):
        weights = np.exp(log_weights)
    return LiouvilleData(couplings=couplings, weights=weights, log_weights=log_weights)


@dataclass(frozen=True)
class SupportReport:
    ok: bool
    distinct_count: int
    method: str


def check_support_condition(dist: CoefficientDistribution, probe: int = 256) -> SupportReport:
    """At least two distinct triples must carry mass; exact for atoms,
    probed by sampling otherwise."""
    if isinstance(dist, DiscreteAtoms):
        live = {
            (t.a, t.b, t.c)
            for t, p in zip(dist.atoms, dist.probabilities)
            if p > 0
        }
        return SupportReport(ok=len(live) >= 2, distinct_count=len(live), method="exact")
    if isinstance(dist, HatanoNelson):
        laws = [dist.b_law, dist.ratio_law, dist.c_mag_law]
        if dist.c_phase_law is not None:
            laws.append(dist.c_phase_law)
        if all(law.is_constant for law in laws):
            return SupportReport(ok=False, distinct_count=1, method="exact")
    rng = substream(0xD15C0, 0)
    a, b, c = dist.sample_arrays(rng, probe)
    live = {(za, zb, zc) for za, zb, zc in zip(a.tolist(), b.tolist(), c.tolist())}
    return SupportReport(ok=len(live) >= 2, distinct_count=len(live), method="sampled")


@dataclass(frozen=True)
class MomentReport:
    """Finite-moment diagnostics at a given delta.

    magnitude_moment is E[|a|^d + |a|^-d + |b|^d + |c|^d + |c|^-d];
    log_moment is E[log^(1+d)(1 + |a|^2 + |b|^2 + |c|^2)].  `sections`
    holds running means over growing sample prefixes; `diverging` flags a
    law whose sections grow by more than 1.5x per decade on geometric
    average (prefix means of heavy-tailed draws are far from monotone, so
    consecutive ratios alone would be noise).
    """

    delta: float
    magnitude_moment: float
    log_moment: float
    exact: bool
    magnitude_stderr: float
    log_stderr: float
    sections: tuple
    diverging: bool


def _moment_terms(a, b, c, delta):
    aa = np.abs(a)
    cc = np.abs(c)
    mag = aa**delta + aa**-delta + np.abs(b) ** delta + cc**delta + cc**-delta
    logm = np.log1p(aa**2 + np.abs(b) ** 2 + cc**2) ** (1.0 + delta)
    return mag, logm


def check_moment_condition(
    dist: CoefficientDistribution,
    delta: float,
    samples: int = 100_000,
    seed: int = 0,
) -> MomentReport:
    """Moment condition report; exact for atoms, Monte Carlo otherwise."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if isinstance(dist, DiscreteAtoms):
        p = np.asarray(dist.probabilities)
        a = np.array([t.a for t in dist.atoms])
        b = np.array([t.b for t in dist.atoms])
        c = np.array([t.c for t in dist.atoms])
        mag, logm = _moment_terms(a, b, c, delta)
        return MomentReport(
            delta=delta,
            magnitude_moment=float(np.dot(p, mag)),
            log_moment=float(np.dot(p, logm)),
            exact=True,
            magnitude_stderr=0.0,
            log_stderr=0.0,
            sections=(),
            diverging=not np.isfinite(np.dot(p, mag)),
        )
    rng = substream(seed, 0)
    a, b, c = dist.sample_arrays(rng, samples)
    mag, logm = _moment_terms(a, b, c, delta)
    cuts = [s for s in (1_000, 10_000, 100_000) if s < samples] + [samples]
    sections = tuple(float(np.mean(mag[:s])) for s in cuts)
    diverging = (
        len(sections) >= 2
        and sections[-1] > 1.5 ** (len(sections) - 1) * sections[0]
    )
    return MomentReport(
        delta=delta,
        magnitude_moment=float(np.mean(mag)),
        log_moment=float(np.mean(logm)),
        exact=False,
        magnitude_stderr=float(np.std(mag, ddof=1) / math.sqrt(samples)),
        log_stderr=float(np.std(logm, ddof=1) / math.sqrt(samples)),
        sections=sections,
        diverging=diverging,
    )


def constant_triple_distribution(a: complex, b: complex, c: complex) -> DiscreteAtoms:
    """Degenerate single-atom law; handy for closed-form checks."""
    return DiscreteAtoms((CoefficientTriple(a, b, c),), (1.0,))
