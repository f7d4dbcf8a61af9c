"""Robust aggregation rules and their resilience coefficients.

Every rule maps N vectors to one vector. Tie-breaking is deterministic
throughout (lowest index first; the even-count median is the midpoint of
the two middle values) so outputs are reproducible and permutation tests
hold exactly on tie-free inputs.

``lambda_of`` returns the published resilience coefficient of each rule:
the output is guaranteed to stay within ``lambda * diameter(G)`` of the
mean of any honest subset G of size N - f. ``check_resilience`` verifies
that guarantee against a concrete collection by exhaustive subset
enumeration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import List, Sequence, Tuple, Union

import numpy as np

from .errors import (BreakdownPointError, CapacityError, ConfigurationError,
                     NoGuaranteeError)

_MDA_SUBSET_CAP = 10**6
_RESILIENCE_N_CAP = 12
# Guard against flagging exact theoretical ties as violations (the trimmed
# rules attain their bound with equality on degenerate collections).
_TIE_EPS = 1e-12


@dataclass(frozen=True)
class Mean:
    """Arithmetic mean; resilient only when there are no adversaries."""


@dataclass(frozen=True)
class MDA:
    """Average of the (N - f)-subset with the smallest diameter."""

    f: int


@dataclass(frozen=True)
class CWTM:
    """Coordinate-wise mean after trimming the f smallest and f largest values."""

    f: int


@dataclass(frozen=True)
class CWMed:
    """Coordinate-wise median."""


@dataclass(frozen=True)
class MeaMed:
    """Coordinate-wise average of the N - f values closest to the median."""

    f: int


@dataclass(frozen=True)
class MultiKrum:
    """Average of the q vectors with the smallest sum of squared distances
    to their N - f - 1 nearest neighbours; q = 1 is plain Krum."""

    f: int
    q: int = 1


@dataclass(frozen=True)
class GeometricMedian:
    """Minimizer of the summed distances, found by damped Weiszfeld iteration."""

    tolerance: float = 1e-9
    max_iterations: int = 10000


AggregatorKind = Union[Mean, MDA, CWTM, CWMed, MeaMed, MultiKrum, GeometricMedian]

_NEEDS_F = (MDA, CWTM, MeaMed, MultiKrum)


def _as_matrix(vectors: Sequence[np.ndarray]) -> np.ndarray:
    if len(vectors) == 0:
        raise ConfigurationError("need at least one vector to aggregate")
    mat = np.asarray(vectors, dtype=float)
    if mat.ndim == 1:
        mat = mat[:, None]
    if mat.ndim != 2:
        raise ConfigurationError("all vectors must share one dimension")
    return mat


def _check_f(kind, n: int):
    f = getattr(kind, "f", None)
    if f is None:
        return
    if f < 0:
        raise ConfigurationError("f must be non-negative")
    if 2 * f >= n:
        raise BreakdownPointError(
            f"f={f} with N={n}: no aggregator can possibly tolerate f >= N/2")


def _pairwise_distances(mat: np.ndarray) -> np.ndarray:
    diff = mat[:, None, :] - mat[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def _mda(mat: np.ndarray, f: int) -> np.ndarray:
    n = mat.shape[0]
    if math.comb(n, n - f) > _MDA_SUBSET_CAP:
        raise CapacityError(
            f"MDA would enumerate C({n}, {n - f}) > {_MDA_SUBSET_CAP} subsets")
    dist = _pairwise_distances(mat)
    best = None
    best_diam = math.inf
    for subset in combinations(range(n), n - f):
        idx = np.array(subset)
        diam = float(dist[np.ix_(idx, idx)].max())
        if diam < best_diam:
            best_diam = diam
            best = idx
    return mat[best].mean(axis=0)


def _cwtm(mat: np.ndarray, f: int) -> np.ndarray:
    n = mat.shape[0]
    ordered = np.sort(mat, axis=0)
    return ordered[f:n - f].mean(axis=0)


def _meamed(mat: np.ndarray, f: int) -> np.ndarray:
    n = mat.shape[0]
    med = np.median(mat, axis=0)
    dist = np.abs(mat - med)
    order = np.argsort(dist, axis=0, kind="stable")[: n - f]
    return np.take_along_axis(mat, order, axis=0).mean(axis=0)


def _multi_krum(mat: np.ndarray, f: int, q: int) -> np.ndarray:
    n = mat.shape[0]
    if not 1 <= q <= n - f:
        raise ConfigurationError(f"Multi-Krum needs 1 <= q <= N - f, got q={q}")
    sq = _pairwise_distances(mat) ** 2
    np.fill_diagonal(sq, np.inf)
    neighbours = np.sort(sq, axis=1)[:, : n - f - 1]
    scores = neighbours.sum(axis=1)
    chosen = np.argsort(scores, kind="stable")[:q]
    return mat[chosen].mean(axis=0)


def _geometric_median(mat: np.ndarray, tolerance: float, max_iterations: int) -> np.ndarray:
    if tolerance <= 0:
        raise ConfigurationError("geometric median tolerance must be positive")
    y = mat.mean(axis=0)
    for _ in range(max_iterations):
        dist = np.linalg.norm(mat - y, axis=1)
        coincident = dist < 1e-14
        eta = int(coincident.sum())
        if eta == mat.shape[0]:
            return y
        inv = np.zeros_like(dist)
        inv[~coincident] = 1.0 / dist[~coincident]
        t_point = (mat * inv[:, None]).sum(axis=0) / inv.sum()
        if eta == 0:
            y_next = t_point
        else:
            # Damping step for an iterate sitting on a data point: pull the
            # plain Weiszfeld target back toward the current point by the
            # ratio of the point's multiplicity to the residual force.
            residual = ((mat[~coincident] - y) * inv[~coincident, None]).sum(axis=0)
            r = float(np.linalg.norm(residual))
            if r <= eta:
                return y
            step = max(0.0, 1.0 - eta / r)
            y_next = step * t_point + min(1.0, eta / r) * y
        if np.linalg.norm(y_next - y) <= tolerance:
            return y_next
        y = y_next
    return y


def aggregate(kind: AggregatorKind, vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Apply one aggregation rule to N same-dimension vectors."""
    mat = _as_matrix(vectors)
    _check_f(kind, mat.shape[0])
    if isinstance(kind, Mean):
        return mat.mean(axis=0)
    if isinstance(kind, MDA):
        return _mda(mat, kind.f)
    if isinstance(kind, CWTM):
        return _cwtm(mat, kind.f)
    if isinstance(kind, CWMed):
        return np.median(mat, axis=0)
    if isinstance(kind, MeaMed):
        return _meamed(mat, kind.f)
    if isinstance(kind, MultiKrum):
        return _multi_krum(mat, kind.f, kind.q)
    if isinstance(kind, GeometricMedian):
        return _geometric_median(mat, kind.tolerance, kind.max_iterations)
    raise ConfigurationError(f"unknown aggregator kind {kind!r}")


def lambda_of(kind: AggregatorKind, n: int, f: int, d: int) -> float:
    """Published resilience coefficient of a rule for N workers, f faults, dim d."""
    if 2 * f >= n:
        raise BreakdownPointError(
            f"f={f} with N={n}: no aggregator can possibly tolerate f >= N/2")
    delta = min(math.sqrt(d), 2.0 * math.sqrt(n - f))
    if isinstance(kind, Mean):
        if f == 0:
            return 0.0
        raise NoGuaranteeError("the plain mean has no resilience guarantee for f > 0")
    if isinstance(kind, MDA):
        return 2.0 * f / (n - f)
    if isinstance(kind, CWTM):
        return f / (n - f) * delta
    if isinstance(kind, MeaMed):
        return 2.0 * f / (n - f) * delta
    if isinstance(kind, CWMed):
        return n / (2.0 * (n - f)) * delta
    if isinstance(kind, MultiKrum):
        if kind.q != 1:
            raise NoGuaranteeError("no published coefficient for Multi-Krum with q > 1")
        return 1.0 + math.sqrt((n - f) / (n - 2 * f))
    if isinstance(kind, GeometricMedian):
        return 1.0 + math.sqrt((n - f) ** 2 / (n * (n - 2 * f)))
    raise ConfigurationError(f"unknown aggregator kind {kind!r}")


@dataclass(frozen=True)
class ResilienceReport:
    """Outcome of the exhaustive honest-subset check for one collection."""

    violations: List[Tuple[Tuple[int, ...], float]]
    max_ratio: float
    subsets_checked: int


def check_resilience(kind: AggregatorKind, vectors: Sequence[np.ndarray], f: int,
                     lam: float = None, max_workers: int = _RESILIENCE_N_CAP) -> ResilienceReport:
    """Measure the worst deviation-to-diameter ratio over every honest subset.

    For each subset G of size N - f the ratio ``|F(x) - mean_G| / diam_G`` is
    computed; ratios above ``lam`` (default: the rule's published coefficient,
    or infinity when none exists) are reported as violations. Zero-diameter
    subsets count as ratio 0 when the output matches their mean and as a
    violation otherwise.
    """
    mat = _as_matrix(vectors)
    n = mat.shape[0]
    if n > max_workers:
        raise CapacityError(f"resilience check capped at N <= {max_workers}, got {n}")
    if 2 * f >= n:
        raise BreakdownPointError(
            f"f={f} with N={n}: no aggregator can possibly tolerate f >= N/2")
    if lam is None:
        try:
            lam = lambda_of(kind, n, f, mat.shape[1])
        except NoGuaranteeError:
            lam = math.inf
    output = aggregate(kind, mat)
    dist = _pairwise_distances(mat)
    violations = []
    max_ratio = 0.0
    count = 0
    for subset in combinations(range(n), n - f):
        idx = np.array(subset)
        count += 1
        deviation = float(np.linalg.norm(output - mat[idx].mean(axis=0)))
        diam = float(dist[np.ix_(idx, idx)].max()) if len(idx) > 1 else 0.0
        if diam == 0.0:
            ratio = 0.0 if deviation <= _TIE_EPS else math.inf
        else:
            ratio = deviation / diam
        max_ratio = max(max_ratio, ratio)
        if ratio > lam * (1.0 + _TIE_EPS):
            violations.append((subset, ratio))
    return ResilienceReport(violations=violations, max_ratio=max_ratio,
                            subsets_checked=count)


def random_mixed_collection(rng: np.random.Generator, n: int, f: int, d: int,
                            outlier_scale: float = 10.0) -> np.ndarray:
    """Unit gaussian cluster with up to f coordinates replaced by scaled outliers."""
    mat = rng.normal(size=(n, d))
    planted = int(rng.integers(0, f + 1))
    if planted:
        idx = rng.choice(n, size=planted, replace=False)
        mat[idx] = rng.normal(scale=outlier_scale, size=(planted, d))
    return mat
