"""Closed-form remainder reconstruction against brute-force oracles."""

import numpy as np
import pytest

from locbench.rcrt import (
    AmbiguityError,
    RemainderVector,
    TIE_TOLERANCE_REL,
    WavelengthSet,
    build_candidate_set,
    make_wavelength_set,
    phase_to_remainder,
    remainders_of,
    robust_crt_reconstruct,
)

WS = make_wavelength_set(80.0, (15, 16, 17))


class TestWavelengthSet:
    def test_derived_quantities(self):
        assert np.allclose(WS.wavelengths, (1200.0, 1280.0, 1360.0))
        assert WS.max_range == pytest.approx(326400.0)
        assert WS.size == 3

    def test_rejects_shared_divisor(self):
        with pytest.raises(ValueError, match="15.*21|21.*15"):
            make_wavelength_set(80.0, (15, 21, 17))

    def test_rejects_factor_below_two(self):
        with pytest.raises(ValueError):
            make_wavelength_set(80.0, (1, 16, 17))

    def test_rejects_fractional_factor(self):
        with pytest.raises(ValueError):
            make_wavelength_set(80.0, (15.5, 16, 17))

    def test_rejects_nonpositive_common_factor(self):
        with pytest.raises(ValueError):
            make_wavelength_set(0.0, (15, 16))

    def test_rejects_single_factor(self):
        with pytest.raises(ValueError):
            make_wavelength_set(80.0, (15,))


class TestRemaindersOf:
    def test_hand_worked_fold(self):
        rem = remainders_of(5000.0, WS)
        assert rem.quotients.tolist() == [4, 3, 3]
        assert np.allclose(rem.remainders, (200.0, 1160.0, 920.0))

    def test_near_top_of_range(self):
        rem = remainders_of(325200.0, WS)
        assert rem.quotients.tolist() == [271, 254, 239]
        assert np.allclose(rem.remainders, (0.0, 80.0, 160.0))

    def test_rejects_out_of_range_dividend(self):
        with pytest.raises(ValueError):
            remainders_of(WS.max_range, WS)
        with pytest.raises(ValueError):
            remainders_of(-1.0, WS)

    def test_remainders_always_inside_wavelength(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            r = rng.uniform(0.0, WS.max_range)
            rem = remainders_of(r, WS)
            assert np.all(rem.remainders >= 0.0)
            assert np.all(rem.remainders < WS.wavelengths)
            # fold is exact: quotient * wavelength + remainder == dividend
            assert np.allclose(rem.quotients * WS.wavelengths + rem.remainders, r)


def test_phase_to_remainder_scales_by_wavelength():
    assert phase_to_remainder(1.5 * np.pi, 1360.0) == pytest.approx(1020.0)
    with pytest.raises(ValueError):
        phase_to_remainder(2.0 * np.pi, 1360.0)
    with pytest.raises(ValueError):
        phase_to_remainder(1.0, 0.0)


def quotient_bounds(ws):
    total = int(np.prod(ws.coprime_factors))
    return [total // f for f in ws.coprime_factors]


def brute_force_candidates(pair_index, noisy, ws):
    """Literal scan of the full quotient rectangle for one pairing."""
    r = noisy.remainders
    lam = ws.wavelengths
    bounds = quotient_bounds(ws)
    best = np.inf
    cells = {}
    for b0 in range(bounds[0]):
        for bk in range(bounds[pair_index]):
            val = abs(bk * lam[pair_index] + r[pair_index] - b0 * lam[0] - r[0])
            cells[(b0, bk)] = val
            best = min(best, val)
    tol = TIE_TOLERANCE_REL * lam[0]
    return {pair for pair, val in cells.items() if val <= best + tol}


class TestCandidateSets:
    def test_matches_brute_force_on_small_factors(self):
        ws = make_wavelength_set(7.0, (3, 4, 5))
        rng = np.random.default_rng(42)
        for _ in range(60):
            r = rng.uniform(0.0, ws.max_range)
            noise = rng.uniform(-1.7, 1.7, size=3)  # inside B/4 = 1.75
            noisy = np.mod(remainders_of(r, ws).remainders + noise, ws.wavelengths)
            vec = RemainderVector(remainders=noisy)
            for pair_index in (1, 2):
                fast = build_candidate_set(pair_index, vec, ws)
                assert fast == brute_force_candidates(pair_index, vec, ws)

    def test_matches_brute_force_under_heavy_noise(self):
        # ambiguous regimes must agree too, ties included
        ws = make_wavelength_set(5.0, (3, 5, 7))
        rng = np.random.default_rng(7)
        for _ in range(40):
            noisy = rng.uniform(0.0, ws.wavelengths)
            vec = RemainderVector(remainders=noisy)
            for pair_index in (1, 2):
                fast = build_candidate_set(pair_index, vec, ws)
                assert fast == brute_force_candidates(pair_index, vec, ws)

    def test_tie_family_is_kept(self):
        # the second pairing alone leaves a 17-way ambiguity that the
        # third pairing later prunes to a singleton
        vec = RemainderVector(remainders=np.array([205.0, 1155.0, 918.0]))
        s2 = build_candidate_set(1, vec, WS)
        assert len(s2) == 17
        assert (4, 3) in s2

    def test_rejects_bad_pair_index(self):
        vec = RemainderVector(remainders=np.array([0.0, 0.0, 0.0]))
        with pytest.raises(ValueError):
            build_candidate_set(0, vec, WS)
        with pytest.raises(ValueError):
            build_candidate_set(3, vec, WS)


class TestReconstruct:
    def test_hand_worked_noisy_vector(self):
        vec = RemainderVector(remainders=np.array([205.0, 1155.0, 918.0]))
        estimate, quotients, search = robust_crt_reconstruct(vec, WS)
        assert estimate == pytest.approx(4999.3333333333, abs=1e-9)
        assert quotients.tolist() == [4, 3, 3]
        assert search.intersection == {4}
        assert search.quotient_bounds == (272, 255, 240)

    def test_noiseless_round_trip_is_exact(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            r = rng.uniform(0.0, WS.max_range)
            estimate, quotients, _ = robust_crt_reconstruct(remainders_of(r, WS), WS)
            assert estimate == pytest.approx(r, rel=1e-12)
            assert np.array_equal(quotients, remainders_of(r, WS).quotients)

    def test_error_bound_holds_under_quarter_threshold(self):
        # noise strictly below B/4 leaves the unfolded per-wavelength values
        # exact (quotients right up to boundary folds) and the estimate
        # within the worst per-remainder error
        rng = np.random.default_rng(2)
        upsilon = 19.5  # < 80 / 4
        for _ in range(300):
            r = rng.uniform(40.0, WS.max_range - 40.0)
            noise = rng.uniform(-upsilon, upsilon, size=3)
            exact = remainders_of(r, WS)
            wrapped = np.mod(exact.remainders + noise, WS.wavelengths)
            vec = RemainderVector(remainders=wrapped)
            estimate, quotients, _ = robust_crt_reconstruct(vec, WS)
            unfolded = quotients * WS.wavelengths + wrapped
            assert np.allclose(unfolded, r + noise, atol=1e-6)
            assert abs(estimate - r) <= upsilon + 1e-9

    def test_exhaustive_quotient_tuples_on_tiny_set(self):
        # every feasible quotient tuple of a 3-4-5 set reconstructs exactly
        ws = make_wavelength_set(7.0, (3, 4, 5))
        offsets = np.array([1.0, 3.0, 5.0])
        for b1 in range(quotient_bounds(ws)[0]):
            r = b1 * ws.wavelengths[0] + offsets[0]
            if r >= ws.max_range:
                continue
            exact = remainders_of(r, ws)
            estimate, quotients, _ = robust_crt_reconstruct(exact, ws)
            assert estimate == pytest.approx(r, abs=1e-9)
            assert np.array_equal(quotients, exact.quotients)

    def test_inconsistent_remainders_raise_ambiguity(self):
        # remainders folded from different dividends leave no common quotient
        a = remainders_of(5000.0, WS).remainders
        b = remainders_of(200000.0, WS).remainders
        vec = RemainderVector(remainders=np.array([a[0], b[1], b[2]]))
        with pytest.raises(AmbiguityError) as exc:
            robust_crt_reconstruct(vec, WS)
        assert exc.value.search.intersection != {4}

    def test_rejects_out_of_range_remainders(self):
        with pytest.raises(ValueError):
            robust_crt_reconstruct(
                RemainderVector(remainders=np.array([1300.0, 0.0, 0.0])), WS
            )
        with pytest.raises(ValueError):
            robust_crt_reconstruct(
                RemainderVector(remainders=np.array([-1.0, 0.0, 0.0])), WS
            )

    def test_wrapped_remainder_keeps_estimate_near_truth(self):
        # positive noise pushes the first remainder past its wavelength;
        # the folded quotient changes but the unfolded estimate does not
        r = 5.0 * 1200.0 - 2.0  # remainder 1198 on the first wavelength
        exact = remainders_of(r, WS)
        noisy = exact.remainders.copy()
        noisy[0] = (noisy[0] + 5.0) % 1200.0  # wraps to 3.0
        estimate, _, _ = robust_crt_reconstruct(RemainderVector(remainders=noisy), WS)
        assert abs(estimate - r) <= 5.0 + 1e-9
