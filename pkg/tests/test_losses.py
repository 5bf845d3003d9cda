import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from seqdg import losses as Lo
from seqdg.autodiff import Tensor
from seqdg.autodiff import functional as F
from seqdg.errors import ContractError, NonFiniteError, ShapeError
from seqdg.gradcheck_suite import CHECKS


def banks_of(rng, domains=3, count=6, d=4):
    return [rng.standard_normal((count, d)) for _ in range(domains)]


# ---------------------------------------------------------------- reconstruction

def test_reconstruction_zero_and_all_ones():
    x = np.random.default_rng(0).standard_normal((2, 3, 4, 2))
    assert Lo.reconstruction_loss(x, x).item() == 0.0
    assert Lo.reconstruction_loss(np.zeros((1, 1, 3, 2)), np.ones((1, 1, 3, 2))).item() == 6.0


def test_reconstruction_quadratic_scaling():
    rng = np.random.default_rng(1)
    x, r = rng.standard_normal((2, 3, 5, 2)), rng.standard_normal((2, 3, 5, 2))
    np.testing.assert_allclose(Lo.reconstruction_loss(x, x + 2 * r).item(), 4 * Lo.reconstruction_loss(x, x + r).item())


def test_reconstruction_shape_mismatch():
    with pytest.raises(ShapeError):
        Lo.reconstruction_loss(np.zeros((1, 2, 3, 2)), np.zeros((1, 2, 4, 2)))


# ---------------------------------------------------------------- epoch level

def test_first_order_hand_value():
    a = np.array([[0.0, 0.0], [0.0, 0.0]])
    b = np.array([[3.0, 4.0], [3.0, 4.0]])
    assert Lo.epoch_first_order([a, b]).item() == 25.0


def test_identical_banks_give_zero():
    b = np.random.default_rng(0).standard_normal((7, 3))
    for fn in (Lo.epoch_first_order, Lo.epoch_second_order, Lo.epoch_level_loss, Lo.mmd_loss, Lo.coral_loss):
        assert abs(fn([b, b.copy(), b.copy()]).item()) < 1e-12


def test_second_order_invariant_to_row_permutation():
    b = np.random.default_rng(2).standard_normal((9, 4))
    assert abs(Lo.epoch_second_order([b, b[::-1].copy()]).item()) < 1e-12


def test_epoch_level_is_sum_of_parts():
    banks = banks_of(np.random.default_rng(3))
    total = Lo.epoch_level_loss(banks).item()
    assert total == Lo.epoch_first_order(banks).item() + Lo.epoch_second_order(banks).item()


def test_ordered_pairs_double():
    banks = banks_of(np.random.default_rng(4))
    np.testing.assert_allclose(Lo.epoch_level_loss(banks, ordered=True).item(), 2 * Lo.epoch_level_loss(banks).item())


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), a=st.floats(0.1, 10.0))
def test_first_order_homogeneous_of_degree_two(seed, a):
    banks = banks_of(np.random.default_rng(seed))
    np.testing.assert_allclose(Lo.epoch_first_order([b * a for b in banks]).item(),
                               a * a * Lo.epoch_first_order(banks).item(), rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_epoch_losses_symmetric_and_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    banks = banks_of(rng)
    shuffled = [b[rng.permutation(len(b))] for b in banks]
    swapped = banks[::-1]
    base = Lo.epoch_level_loss(banks).item()
    assert base >= 0
    np.testing.assert_allclose(Lo.epoch_level_loss(shuffled).item(), base, rtol=1e-10)
    np.testing.assert_allclose(Lo.epoch_level_loss(swapped).item(), base, rtol=1e-10)


def test_epoch_errors():
    b = np.ones((3, 2))
    with pytest.raises(ContractError):
        Lo.epoch_first_order([b])
    with pytest.raises(ContractError):
        Lo.epoch_second_order([b, np.ones((1, 2))])


# ---------------------------------------------------------------- oracle sweeps (64-bit, 1e-10)

@pytest.mark.parametrize("seed", range(100))
def test_statistics_match_loop_oracles(seed):
    rng = np.random.default_rng(seed)
    domains = int(rng.integers(2, 5))
    banks = [rng.standard_normal((int(rng.integers(2, 7)), int(d))) for d in [rng.integers(2, 5)] * domains]
    lists = [b.tolist() for b in banks]
    for b, rows in zip(banks, lists):
        np.testing.assert_allclose(F.mean(Tensor(b), axis=0).data, oracles.mean_vec(rows), rtol=0, atol=1e-10)
        np.testing.assert_allclose(Lo.covariance(Tensor(b)).data, oracles.covariance(rows), rtol=0, atol=1e-10)
    assert abs(Lo.epoch_first_order(banks).item() - oracles.first_order(lists)) < 1e-10
    assert abs(Lo.epoch_second_order(banks).item() - oracles.second_order(lists)) < 1e-10

    length, d = int(rng.integers(2, 6)), int(rng.integers(2, 7))
    seqs = [rng.standard_normal((int(rng.integers(1, 4)), length, d)) for _ in range(domains)]
    for s in seqs:
        np.testing.assert_allclose(Lo.pearson_matrix(s[0]).data, oracles.pearson_matrix(s[0].tolist()),
                                   rtol=0, atol=1e-10)
    assert abs(Lo.sequence_level_loss([Lo.domain_correlation(s) for s in seqs]).item()
               - oracles.sequence_loss([s.tolist() for s in seqs])) < 1e-10

    probs = rng.dirichlet(np.ones(5), size=(3, length))
    labels = rng.integers(0, 5, (3, length))
    assert abs(Lo.classification_loss(probs, labels).item()
               - oracles.cross_entropy(probs.tolist(), labels.tolist())) < 1e-10

    x, xh = rng.standard_normal((2, length, 3, 2)), rng.standard_normal((2, length, 3, 2))
    assert abs(Lo.reconstruction_loss(x, xh).item() - oracles.reconstruction(x.tolist(), xh.tolist())) < 1e-10


# ---------------------------------------------------------------- Pearson and sequence level

def test_pearson_examples():
    h = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [-1.0, -2.0, -3.0]])
    r = Lo.pearson_matrix(h).data
    np.testing.assert_allclose(r, [[1, 1, -1], [1, 1, -1], [-1, -1, 1]], atol=1e-12)


def test_pearson_constant_vector_is_finite():
    r = Lo.pearson_matrix(np.array([[1.0, 1.0, 1.0], [0.0, 1.0, 2.0]])).data
    assert np.isfinite(r).all()
    np.testing.assert_array_equal(np.diag(r), [1.0, 1.0])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), a=st.floats(0.01, 100.0), b=st.floats(-100.0, 100.0))
def test_pearson_affine_invariance_and_range(seed, a, b):
    h = np.random.default_rng(seed).standard_normal((5, 7))
    r = Lo.pearson_matrix(h).data
    np.testing.assert_allclose(Lo.pearson_matrix(a * h + b).data, r, atol=1e-9)
    np.testing.assert_allclose(r, r.T, atol=1e-15)
    assert np.all(np.abs(r) <= 1 + 1e-9)
    np.testing.assert_array_equal(np.diag(r), 1.0)


def test_domain_correlation_averaging():
    h = np.random.default_rng(0).standard_normal((1, 4, 6))
    single = Lo.pearson_matrix(h[0]).data
    np.testing.assert_allclose(Lo.domain_correlation(h).data, single, atol=1e-15)
    np.testing.assert_allclose(Lo.domain_correlation(np.repeat(h, 3, axis=0)).data, single, atol=1e-12)
    u = np.array([[0.0, 1.0, 2.0], [0.0, 1.0, 2.0]])
    pair = np.stack([u, np.stack([u[0], -u[1]])])
    np.testing.assert_allclose(Lo.domain_correlation(pair).data, np.eye(2), atol=1e-12)
    with pytest.raises(ContractError):
        Lo.domain_correlation(np.zeros((0, 2, 3)))


def test_sequence_loss_hand_value_and_errors():
    r1 = np.array([[1.0, 0.5], [0.5, 1.0]])
    r2 = np.eye(2)
    assert Lo.sequence_level_loss([r1, r2]).item() == 0.5
    assert Lo.sequence_level_loss([r1, r1]).item() == 0.0
    with pytest.raises(ContractError):
        Lo.sequence_level_loss([r1])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_sequence_loss_invariant_to_shared_epoch_permutation(seed):
    rng = np.random.default_rng(seed)
    rs = [Lo.domain_correlation(rng.standard_normal((2, 5, 6))).data for _ in range(3)]
    p = rng.permutation(5)
    permuted = [r[np.ix_(p, p)] for r in rs]
    np.testing.assert_allclose(Lo.sequence_level_loss(permuted).item(), Lo.sequence_level_loss(rs).item(), rtol=1e-12)


# ---------------------------------------------------------------- classification and total

def test_classification_special_cases():
    labels = np.array([[0, 3, 4]])
    perfect = np.eye(5)[labels]
    assert Lo.classification_loss(perfect, labels).item() == 0.0
    uniform = np.full((2, 3, 5), 0.2)
    np.testing.assert_allclose(Lo.classification_loss(uniform, np.zeros((2, 3), int)).item(), 3 * math.log(5))


def test_classification_accepts_one_hot_and_rejects_others():
    p = np.full((1, 2, 5), 0.2)
    np.testing.assert_allclose(Lo.classification_loss(p, np.eye(5)[[[1, 2]]]).item(), 2 * math.log(5))
    bad = np.zeros((1, 2, 5))
    bad[0, 0, :2] = 0.5
    bad[0, 1, 0] = 1.0
    with pytest.raises(ContractError):
        Lo.classification_loss(p, bad)


def test_total_loss_arithmetic_and_default_weights():
    one = Tensor(np.array(1.0))
    assert Lo.total_loss(one, one, one, one).item() == 2.5
    w = Lo.LossWeights()
    assert (w.rec, w.epoch, w.sequence) == (0.5, 0.5, 0.5)
    ce = Tensor(np.array(3.25))
    zero = Lo.LossWeights(0.0, 0.0, 0.0)
    assert Lo.total_loss(ce, Tensor(np.array(7.0)), one, one, zero).item() == 3.25


def test_total_loss_names_non_finite_term():
    one = Tensor(np.array(1.0))
    with pytest.raises(NonFiniteError, match="sequence"):
        Lo.total_loss(one, one, one, Tensor(np.array(np.nan)))


def test_negative_weight_rejected():
    with pytest.raises(ContractError):
        Lo.LossWeights(rec=-0.1)


# ---------------------------------------------------------------- baselines

def test_coral_is_scaled_second_order():
    banks = banks_of(np.random.default_rng(5), d=6)
    np.testing.assert_allclose(Lo.coral_loss(banks).item(), Lo.epoch_second_order(banks).item() / (4 * 36), rtol=1e-14)


def test_mmd_separated_clouds_exceed_overlapping():
    rng = np.random.default_rng(11)
    a = rng.standard_normal((40, 3))
    near = rng.standard_normal((40, 3)) + 0.1
    far = rng.standard_normal((40, 3)) + 4.0
    assert Lo.mmd_loss([a, far]).item() > Lo.mmd_loss([a, near]).item() > 0


def test_mmd_matches_direct_kernel_sums():
    rng = np.random.default_rng(12)
    a, b = rng.standard_normal((5, 2)), rng.standard_normal((4, 2))
    k = lambda u, v: np.mean([[math.exp(-np.sum((x - y) ** 2) / 2.0) for y in v] for x in u])
    want = k(a, a) + k(b, b) - 2 * k(a, b)
    assert abs(Lo.mmd_loss([a, b], bandwidth=2.0).item() - want) < 1e-12


def test_losses_are_non_negative_on_random_inputs():
    rng = np.random.default_rng(13)
    for _ in range(20):
        banks = banks_of(rng)
        for fn in (Lo.epoch_first_order, Lo.epoch_second_order, Lo.mmd_loss, Lo.coral_loss):
            assert fn(banks).item() >= -1e-12


# ---------------------------------------------------------------- gradients

@pytest.mark.parametrize("name", sorted(CHECKS))
def test_loss_gradients(name):
    for seed in range(3):
        assert CHECKS[name](np.random.default_rng([seed, 99])) < 1e-4
