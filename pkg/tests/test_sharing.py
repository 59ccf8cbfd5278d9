import random

import pytest
from hypothesis import given, settings, strategies as st

from services.errors import DecodingError
from services.group_crypto import GroupElement, Scalar
from services.sharing import (
    EvalCommitment, SharePolynomial, check_low_degree, commit_evals, dual_code_vector, interpolate_group_zero,
    interpolate_polynomial, interpolate_zero, lagrange_coeffs, sample_polynomial,
)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=5), st.integers(min_value=0, max_value=4), st.randoms(use_true_random=False))
def test_any_t_plus_one_shares_recover_the_secret(t, extra, rnd):
    n = 2 * t + 1 + extra
    f = sample_polynomial(t, random.Random(rnd.random()))
    shares = f.evaluations(n)
    subset = rnd.sample(range(1, n + 1), t + 1)
    assert interpolate_zero({i: shares[i] for i in subset}) == f.secret


def test_evaluations_include_the_secret(rng):
    f = SharePolynomial((Scalar(3), Scalar(2), Scalar(1)))
    assert f.degree == 2
    assert f.evaluations(3) == [Scalar(3), Scalar(6), Scalar(11), Scalar(18)]
    assert f.evaluate(Scalar(4)) == Scalar(27)
    assert (f + SharePolynomial((Scalar(1),))).secret == Scalar(4)


def test_interpolate_polynomial_recovers_coefficients(rng):
    f = sample_polynomial(3, rng)
    points = {i: f.evaluate(i) for i in (2, 5, 7, 9)}
    assert interpolate_polynomial(points) == f


def test_interpolation_in_the_exponent(rng):
    f = sample_polynomial(2, rng)
    cm = commit_evals(f, 5)
    assert interpolate_group_zero({i: cm[i] for i in (1, 3, 5)}) == GroupElement.base(f.secret)


def test_lagrange_rejects_duplicates_and_empty():
    with pytest.raises(ValueError):
        lagrange_coeffs([1, 2, 2])
    with pytest.raises(ValueError):
        lagrange_coeffs([])
    assert lagrange_coeffs([1]) == {1: Scalar(1)}


def test_commitment_codec_and_product(rng):
    f, g = sample_polynomial(2, rng), sample_polynomial(2, rng)
    cm_f, cm_g = commit_evals(f, 5), commit_evals(g, 5)
    assert len(cm_f) == 6
    assert EvalCommitment.from_bytes(cm_f.to_bytes()) == cm_f
    assert cm_f * cm_g == commit_evals(f + g, 5)
    with pytest.raises(DecodingError):
        EvalCommitment.from_bytes(cm_f.to_bytes()[:-1])
    with pytest.raises(ValueError):
        commit_evals(f, 1)


def test_dual_code_vector_is_orthogonal_to_low_degree_vectors(rng):
    n, t = 9, 4
    perp = dual_code_vector(n, t, rng)
    assert len(perp) == n + 1
    for _ in range(5):
        evals = sample_polynomial(t, rng).evaluations(n)
        assert sum((v * p for v, p in zip(evals, perp.perp)), Scalar(0)) == Scalar(0)


def _low_degree_trials(trials, seed):
    rng = random.Random(seed)
    accepted_bad = rejected_good = 0
    for trial in range(trials):
        n = rng.randint(3, 9)
        t = rng.randint(0, (n - 1) // 2)
        perp = dual_code_vector(n, t, rng)
        good = commit_evals(sample_polynomial(t, rng), n)
        if not check_low_degree(good, perp):
            rejected_good += 1
        if trial % 2:
            bad = commit_evals(sample_polynomial(t + 1 + rng.randint(0, n - t - 1), rng), n)
        else:
            j = rng.randint(0, n)
            cms = list(good.cms)
            cms[j] = cms[j] + GroupElement.base(Scalar.random(rng))
            bad = EvalCommitment(tuple(cms))
        if check_low_degree(bad, perp):
            accepted_bad += 1
    return accepted_bad, rejected_good


def test_low_degree_test_soundness_and_completeness():
    assert _low_degree_trials(200, seed=1) == (0, 0)


@pytest.mark.slow
def test_low_degree_test_at_scale():
    assert _low_degree_trials(10_000, seed=2) == (0, 0)


def test_low_degree_length_mismatch(rng):
    cm = commit_evals(sample_polynomial(1, rng), 4)
    with pytest.raises(ValueError):
        check_low_degree(cm, dual_code_vector(5, 1, rng))
    with pytest.raises(ValueError):
        dual_code_vector(3, 3, rng)
