"""Robust reconstruction of a real dividend from modulo-wavelength remainders.

The measuring wavelengths share a real common factor: wavelength k is
common_factor * coprime_factors[k] with pairwise co-prime integer factors.
A dividend r in [0, max_range) folds into one remainder per wavelength.
Reconstruction searches the folding integers (quotients) by pairing every
wavelength with the first one, intersects the per-pair candidate sets, and
averages the unfolded per-wavelength estimates.

Robustness guarantee: if every remainder error stays strictly below one
quarter of the common factor, the quotient search is exact and the averaged
estimate carries the same error bound as the worst remainder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "AmbiguityError",
    "QuotientSearch",
    "RemainderVector",
    "WavelengthSet",
    "build_candidate_set",
    "make_wavelength_set",
    "phase_to_remainder",
    "remainders_of",
    "robust_crt_reconstruct",
]

# groups numerically equal search minima, scaled by the first wavelength
TIE_TOLERANCE_REL = 1e-9


@dataclass(frozen=True)
class WavelengthSet:
    """Wavelengths lambda_k = common_factor * coprime_factors[k].

    max_range is the unambiguous span: common_factor times the product of
    all co-prime factors. Build through make_wavelength_set, which checks
    pairwise co-primality.
    """

    common_factor: float
    coprime_factors: tuple[int, ...]
    wavelengths: np.ndarray
    max_range: float

    @property
    def size(self) -> int:
        return len(self.coprime_factors)


@dataclass(frozen=True)
class RemainderVector:
    """Per-wavelength remainders, each in [0, wavelength_k).

    quotients holds the folding integers when they are known (noise-free
    folding of a known dividend); measured remainders carry None.
    """

    remainders: np.ndarray
    quotients: Optional[np.ndarray] = None


@dataclass(frozen=True)
class QuotientSearch:
    """Bookkeeping of one quotient search.

    coprime_product: product of all co-prime factors.
    quotient_bounds: exclusive upper bound for each wavelength's quotient
        (product of the other factors).
    candidate_sets: pair index -> set of (first quotient, paired quotient)
        minimizer pairs.
    intersection: first-wavelength quotients shared by every candidate set.
    """

    coprime_product: int
    quotient_bounds: tuple[int, ...]
    candidate_sets: dict[int, frozenset[tuple[int, int]]]
    intersection: frozenset[int]


class AmbiguityError(ValueError):
    """The candidate-set intersection did not isolate a unique quotient."""

    def __init__(self, message: str, search: QuotientSearch):
        super().__init__(message)
        self.search = search


def make_wavelength_set(common_factor: float, coprime_factors) -> WavelengthSet:
    """Validate the factor list and derive wavelengths and unambiguous range.

    Raises ValueError when common_factor is not positive, fewer than two
    factors are given, a factor is below 2 or fractional, or a factor pair
    shares a divisor (the offending pair is named).
    """
    if not math.isfinite(common_factor) or common_factor <= 0:
        raise ValueError("common_factor must be positive and finite")
    factors = tuple(int(g) for g in coprime_factors)
    if len(factors) < 2:
        raise ValueError("need at least two wavelengths")
    for raw, g in zip(coprime_factors, factors):
        if g != raw or g < 2:
            raise ValueError(f"factors must be integers >= 2, got {raw}")
    for a in range(len(factors)):
        for b in range(a + 1, len(factors)):
            shared = math.gcd(factors[a], factors[b])
            if shared != 1:
                raise ValueError(
                    f"factors {factors[a]} and {factors[b]} share divisor {shared}"
                )
    wavelengths = common_factor * np.array(factors, dtype=float)
    max_range = common_factor * float(math.prod(factors))
    return WavelengthSet(
        common_factor=float(common_factor),
        coprime_factors=factors,
        wavelengths=wavelengths,
        max_range=max_range,
    )


def remainders_of(dividend: float, ws: WavelengthSet) -> RemainderVector:
    """Fold a known dividend into exact remainders and quotients.

    dividend must lie in [0, max_range); anything else raises ValueError.
    """
    r = float(dividend)
    if not 0.0 <= r < ws.max_range:
        raise ValueError(f"dividend {r} outside [0, {ws.max_range})")
    quotients = np.floor(r / ws.wavelengths)
    remainders = r - quotients * ws.wavelengths
    # guard the float boundaries so remainders stay inside [0, wavelength)
    low = remainders < 0.0
    quotients[low] -= 1.0
    remainders[low] += ws.wavelengths[low]
    high = remainders >= ws.wavelengths
    quotients[high] += 1.0
    remainders[high] -= ws.wavelengths[high]
    return RemainderVector(remainders=remainders, quotients=quotients.astype(int))


def phase_to_remainder(phase: float, wavelength: float) -> float:
    """Map a wrapped phase in [0, 2*pi) to a remainder in [0, wavelength)."""
    if not 0.0 <= phase < 2.0 * math.pi:
        raise ValueError(f"phase {phase} outside [0, 2*pi)")
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    return phase / (2.0 * math.pi) * wavelength


def _quotient_bounds(factors: tuple[int, ...]) -> tuple[int, ...]:
    total = math.prod(factors)
    return tuple(total // g for g in factors)


def _candidate_pairs(r_first, r_k, lam_first, lam_k, bound_first, bound_k, tol):
    """Exact minimizers of |b_k*lam_k + r_k - b_first*lam_first - r_first|.

    The scan enumerates b_first; for each value the inner minimization over
    b_k is solved by rounding, because only the two integers bracketing the
    real-valued optimum can attain the minimum of the V-shaped objective.
    Equivalent to scanning the full rectangle, at the cost of one row.
    """
    b_first = np.arange(bound_first, dtype=float)
    target = b_first * lam_first + r_first - r_k
    lower = np.floor(target / lam_k)
    candidates = []
    best = np.inf
    for cand in (lower, lower + 1.0):
        b_k = np.clip(cand, 0.0, float(bound_k - 1))
        vals = np.abs(b_k * lam_k - target)
        candidates.append((b_k, vals))
        best = min(best, float(vals.min()))
    pairs = set()
    cut = best + tol
    for b_k, vals in candidates:
        for i in np.flatnonzero(vals <= cut):
            pairs.add((int(b_first[i]), int(b_k[i])))
    return pairs, best


def _check_remainders(noisy: RemainderVector, ws: WavelengthSet) -> np.ndarray:
    rem = np.asarray(noisy.remainders, dtype=float)
    if rem.shape != (ws.size,):
        raise ValueError(f"expected {ws.size} remainders, got shape {rem.shape}")
    if np.any(rem < 0.0) or np.any(rem >= ws.wavelengths):
        raise ValueError("remainders must lie in [0, wavelength) per wavelength")
    return rem


def build_candidate_set(pair_index: int, noisy: RemainderVector, ws: WavelengthSet):
    """Candidate (first, paired) quotient pairs for one wavelength pairing.

    pair_index selects the wavelength paired with wavelength 0; valid range
    is 1 .. size-1. Returns the set of minimizer pairs of
    |b_k*lam_k + r_k - b_0*lam_0 - r_0| over the quotient rectangle, with
    ties grouped by an absolute tolerance of TIE_TOLERANCE_REL * lam_0.
    """
    if not 1 <= pair_index < ws.size:
        raise ValueError(f"pair_index must be in [1, {ws.size}), got {pair_index}")
    rem = _check_remainders(noisy, ws)
    bounds = _quotient_bounds(ws.coprime_factors)
    tol = TIE_TOLERANCE_REL * float(ws.wavelengths[0])
    pairs, _ = _candidate_pairs(
        rem[0],
        rem[pair_index],
        float(ws.wavelengths[0]),
        float(ws.wavelengths[pair_index]),
        bounds[0],
        bounds[pair_index],
        tol,
    )
    return pairs


def robust_crt_reconstruct(noisy: RemainderVector, ws: WavelengthSet):
    """Recover the dividend behind a vector of noisy remainders.

    Builds one candidate set per wavelength pairing, intersects the
    first-wavelength quotients, and requires the intersection to be a
    singleton. The returned estimate is the average of the per-wavelength
    unfolded estimates b_k*lam_k + r_k.

    Returns:
        (estimate, quotients, search) where quotients is the recovered
        folding-integer vector and search records the candidate sets.

    Raises:
        AmbiguityError: the intersection is empty or has several quotients.
            The exception carries the QuotientSearch for inspection.
        ValueError: malformed remainders.
    """
    rem = _check_remainders(noisy, ws)
    lams = ws.wavelengths
    bounds = _quotient_bounds(ws.coprime_factors)
    tol = TIE_TOLERANCE_REL * float(lams[0])

    candidate_sets: dict[int, frozenset[tuple[int, int]]] = {}
    first_sets = []
    for k in range(1, ws.size):
        pairs, _ = _candidate_pairs(
            rem[0], rem[k], float(lams[0]), float(lams[k]), bounds[0], bounds[k], tol
        )
        candidate_sets[k] = frozenset(pairs)
        first_sets.append({b for b, _ in pairs})

    intersection = frozenset(set.intersection(*first_sets))
    search = QuotientSearch(
        coprime_product=math.prod(ws.coprime_factors),
        quotient_bounds=bounds,
        candidate_sets=candidate_sets,
        intersection=intersection,
    )
    if len(intersection) != 1:
        raise AmbiguityError(
            f"quotient search returned {len(intersection)} candidates, need exactly 1",
            search,
        )

    b_first = next(iter(intersection))
    quotients = np.zeros(ws.size, dtype=int)
    quotients[0] = b_first
    for k in range(1, ws.size):
        matched = [pair for pair in candidate_sets[k] if pair[0] == b_first]
        # ties inside one pairing are broken by objective, then by index
        scored = sorted(
            (abs(bk * lams[k] + rem[k] - b_first * lams[0] - rem[0]), bk)
            for _, bk in matched
        )
        quotients[k] = scored[0][1]

    estimate = float(np.mean(quotients * lams + rem))
    return estimate, quotients, search
