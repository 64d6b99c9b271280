"""Tests for the trainable monotone-transform auction."""

import os
import unittest
from pathlib import Path

import numpy as np
from pydantic import ValidationError

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from semantic_auction.myerson_auction import (
    AuctionConfig,
    AuctionNetParams,
    allocate_soft,
    degeneracy_margin,
    finite_difference_check,
    forward,
    forward_batch,
    fpa_baseline,
    fpa_revenue,
    hard_auction_batch,
    hard_revenue,
    ic_regret,
    init_params,
    inverse_transform,
    inverse_transform_batch,
    ir_violations,
    loss_and_gradient,
    max_ic_regret,
    random_params,
    run_hard_auction,
    spa0_payment,
    spa_baseline,
    spa_revenue,
    train,
    transform,
    transform_batch,
)

SLOW = os.environ.get("SEMANTIC_AUCTION_SLOW") == "1"


def _two_line_params() -> AuctionNetParams:
    """One bidder, Q=1, S=2 lines b and 2b - 1."""
    log_w = np.log(np.array([[[1.0, 2.0]]]))
    beta = np.array([[[0.0, -1.0]]])
    return AuctionNetParams(log_w, beta)


class TestTransform(unittest.TestCase):
    """Test suite for the monotone transform and its inverse."""

    def test_identity(self):
        """Test that the initial network is the identity."""
        params = init_params(3, 1, 1)
        self.assertEqual(transform(params, 1, 0.37), 0.37)
        self.assertEqual(inverse_transform(params, 1, 0.37), 0.37)

    def test_two_line_inverse(self):
        """Test inverting through the active piece."""
        params = _two_line_params()
        self.assertAlmostEqual(transform(params, 0, 2.0), 3.0)
        self.assertAlmostEqual(inverse_transform(params, 0, 3.0), 2.0)
        self.assertAlmostEqual(transform(params, 0, 0.5), 0.5)

    def test_strictly_increasing(self):
        """Test monotonicity under random parameters."""
        params = random_params(np.random.default_rng(0), 4, 5, 10)
        bids = np.linspace(-1.0, 2.0, 301)[:, None].repeat(4, axis=1)
        transformed = transform_batch(params, bids)
        self.assertTrue(np.all(np.diff(transformed, axis=0) > 0))

    def test_roundtrip(self):
        """Test inverse(transform(b)) == b for random parameters."""
        rng = np.random.default_rng(1)
        params = random_params(rng, 6, 5, 10)
        bids = rng.uniform(0.0, 1.5, size=(200, 6))
        recovered = inverse_transform_batch(params, transform_batch(params, bids))
        np.testing.assert_allclose(recovered, bids, atol=1e-9)

    def test_params_shape_mismatch(self):
        """Test that log_w and beta must share a shape."""
        with self.assertRaises(ValueError):
            AuctionNetParams(np.zeros((2, 1, 1)), np.zeros((2, 1, 2)))


class TestSoftAuction(unittest.TestCase):
    """Test suite for the softmax allocation and SPA-0 payments."""

    def test_uniform_allocation(self):
        """Test that equal transformed bids share the item evenly."""
        np.testing.assert_allclose(allocate_soft(np.zeros(4), 1000.0), np.full(4, 0.25))

    def test_sharp_allocation(self):
        """Test that a large temperature concentrates on the winner."""
        alloc = allocate_soft(np.array([0.5, 0.49, 0.3, 0.0]), 1000.0)
        self.assertGreaterEqual(alloc[0], 0.9999)
        self.assertAlmostEqual(alloc.sum(), 1.0)

    def test_allocation_rejects_bad_kappa(self):
        """Test that kappa must be positive."""
        with self.assertRaises(ValueError):
            allocate_soft(np.zeros(3), 0.0)

    def test_spa0_payment(self):
        """Test the strongest rival and the ReLU floor."""
        self.assertEqual(spa0_payment(np.array([2.0, 1.0, 0.5, 0.0]), 0), 1.0)
        self.assertEqual(spa0_payment(np.array([2.0, -1.0, -0.5, 0.0]), 0), 0.0)

    def test_forward_reduces_to_spa(self):
        """Test identity networks with a sharp softmax."""
        outcome = forward(init_params(3, 5, 10), [0.8, 0.5, 0.3], 1000.0)
        self.assertEqual(outcome.winner, 0)
        self.assertTrue(outcome.is_sale)
        self.assertAlmostEqual(outcome.payments[0], 0.5)
        self.assertAlmostEqual(outcome.revenue, 0.5, places=6)

    def test_forward_all_zero(self):
        """Test that zero bids pay nothing."""
        outcome = forward(init_params(3, 2, 2), [0.0, 0.0, 0.0], 1000.0)
        np.testing.assert_array_equal(outcome.payments, np.zeros(3))
        self.assertEqual(outcome.revenue, 0.0)

    def test_forward_batch_matches_forward(self):
        """Test that batch and single-profile forwards agree."""
        rng = np.random.default_rng(4)
        params = random_params(rng, 4, 3, 3)
        bids = rng.uniform(0.0, 1.0, size=(5, 4))
        alloc, payments, revenue = forward_batch(params, bids, 10.0)
        for i in range(5):
            outcome = forward(params, bids[i], 10.0)
            np.testing.assert_allclose(outcome.alloc, alloc[i])
            np.testing.assert_allclose(outcome.payments, payments[i])
            self.assertAlmostEqual(outcome.revenue, revenue[i])

    def test_payments_never_exceed_bids(self):
        """Test conditional payments against bids under random parameters."""
        rng = np.random.default_rng(5)
        params = random_params(rng, 5, 5, 10)
        bids = rng.uniform(0.0, 1.0, size=(500, 5))
        _, payments, _ = forward_batch(params, bids, 1000.0)
        transformed = transform_batch(params, bids)
        winners = np.argmax(transformed, axis=1)
        rows = np.arange(500)
        # Rows the dummy would win are not sales
        sold = transformed[rows, winners] >= 0
        self.assertTrue(np.all(payments >= 0))
        self.assertTrue(sold.any())
        self.assertTrue(np.all(payments[rows, winners][sold] <= bids[rows, winners][sold] + 1e-12))


class TestGradient(unittest.TestCase):
    """Test suite for the analytic gradient."""

    def test_zero_payments_give_zero_gradient(self):
        """Test a batch in which nobody pays."""
        loss, grad = loss_and_gradient(init_params(3, 2, 2), np.zeros((4, 3)), 10.0)
        self.assertEqual(loss, 0.0)
        self.assertFalse(np.any(grad.log_w))
        self.assertFalse(np.any(grad.beta))

    def test_loss_is_negated_revenue(self):
        """Test loss against forward_batch."""
        rng = np.random.default_rng(6)
        params = random_params(rng, 4, 2, 3)
        bids = rng.uniform(0.0, 1.0, size=(8, 4))
        loss, _ = loss_and_gradient(params, bids, 10.0)
        _, _, revenue = forward_batch(params, bids, 10.0)
        self.assertAlmostEqual(loss, -np.mean(revenue))

    def test_finite_differences(self):
        """Test analytic gradients against central differences away from kinks."""
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 10:
            params = random_params(rng, 3, 2, 3)
            batch = rng.uniform(0.0, 1.0, size=(4, 3))
            if degeneracy_margin(params, batch) < 1e-4:
                continue
            self.assertLess(finite_difference_check(params, batch, 10.0), 1e-4)
            checked += 1


class TestTraining(unittest.TestCase):
    """Test suite for SGD training."""

    def setUp(self):
        """Set up test fixtures before each test method."""
        self.dataset = np.random.default_rng(8).uniform(0.0, 1.0, size=(200, 4))

    def test_zero_learning_rate(self):
        """Test that lr=0 leaves the identity network untouched."""
        config = AuctionConfig(N=4, Q=2, S=3, lr=0.0, batch_size=50, iterations=20)
        params, history = train(config, self.dataset)
        np.testing.assert_array_equal(params.log_w, np.zeros((4, 2, 3)))
        np.testing.assert_array_equal(params.beta, np.zeros((4, 2, 3)))
        self.assertEqual(len(history.train_revenue), 20)

    def test_history_finite_across_seeds(self):
        """Test numerical stability of short runs."""
        for seed in range(10):
            config = AuctionConfig(N=4, Q=2, S=3, lr=0.01, kappa=100.0, batch_size=50, iterations=30, seed=seed)
            _, history = train(config, self.dataset)
            self.assertTrue(np.all(np.isfinite(history.train_revenue)))

    def test_deterministic(self):
        """Test that a fixed seed reproduces the parameters bit for bit."""
        config = AuctionConfig(N=4, Q=2, S=3, lr=0.01, batch_size=50, iterations=15, seed=3)
        a, _ = train(config, self.dataset)
        b, _ = train(config, self.dataset)
        np.testing.assert_array_equal(a.log_w, b.log_w)
        np.testing.assert_array_equal(a.beta, b.beta)

    def test_holdout_evaluation(self):
        """Test that held-out revenue is recorded at 0, every eval_every steps and at the end."""
        config = AuctionConfig(N=4, Q=2, S=3, batch_size=50, iterations=10, eval_every=4)
        _, history = train(config, self.dataset, holdout=self.dataset[:50])
        self.assertEqual(sorted(history.holdout_revenue), [0, 4, 8, 10])
        self.assertEqual(history.holdout_revenue[0], spa_revenue(self.dataset[:50]))

    def test_returns_best_checkpoint(self):
        """Test that the returned parameters score the best recorded held-out revenue."""
        holdout = np.random.default_rng(9).uniform(0.0, 1.0, size=(300, 4))
        for seed in range(3):
            config = AuctionConfig(N=4, Q=2, S=3, lr=0.5, kappa=100.0, batch_size=50,
                                   iterations=40, eval_every=5, seed=seed)
            params, history = train(config, self.dataset, holdout=holdout)
            best = max(history.holdout_revenue.values())
            self.assertEqual(history.holdout_revenue[history.best_iteration], best)
            self.assertEqual(hard_revenue(params, holdout), best)
            self.assertGreaterEqual(hard_revenue(params, holdout), spa_revenue(holdout))

    def test_ties_keep_identity(self):
        """Test that without improvement the identity network is returned."""
        config = AuctionConfig(N=4, Q=2, S=3, lr=0.0, batch_size=50, iterations=10, eval_every=5)
        params, history = train(config, self.dataset, holdout=self.dataset[:50])
        self.assertEqual(history.best_iteration, 0)
        np.testing.assert_array_equal(params.log_w, np.zeros((4, 2, 3)))

    def test_keep_best_disabled(self):
        """Test that keep_best=False returns the last iterate."""
        config = AuctionConfig(N=4, Q=2, S=3, lr=0.5, kappa=100.0, batch_size=50,
                               iterations=20, eval_every=5, keep_best=False)
        last, history = train(config, self.dataset, holdout=self.dataset[:50])
        plain, _ = train(config, self.dataset)
        self.assertEqual(history.best_iteration, 20)
        np.testing.assert_array_equal(last.log_w, plain.log_w)
        np.testing.assert_array_equal(last.beta, plain.beta)

    def test_rejects_bad_datasets(self):
        """Test empty, narrow and too-small datasets."""
        config = AuctionConfig(N=4, batch_size=50, iterations=1)
        with self.assertRaises(ValueError):
            train(config, np.zeros((0, 4)))
        with self.assertRaises(ValueError):
            train(config, self.dataset[:, :3])
        with self.assertRaises(ValueError):
            train(config, self.dataset[:10])

    def test_config_validation(self):
        """Test pydantic bounds on the auction config."""
        with self.assertRaises(ValidationError):
            AuctionConfig(N=1)
        with self.assertRaises(ValidationError):
            AuctionConfig(kappa=0.0)

    @unittest.skipUnless(SLOW, "set SEMANTIC_AUCTION_SLOW=1 for the full training run")
    def test_full_run_beats_spa(self):
        """Test that the default schedule lifts soft revenue above SPA."""
        dataset = np.random.default_rng(0).beta(2.0, 5.0, size=(1000, 10))
        params, history = train(AuctionConfig(iterations=2000), dataset)
        self.assertGreater(np.mean(history.train_revenue[-100:]), spa_revenue(dataset))
        self.assertEqual(ir_violations(params, dataset), 0)


class TestHardAuction(unittest.TestCase):
    """Test suite for the hard auction, baselines and property checks."""

    def test_identity_is_spa(self):
        """Test winner 0 paying the second bid."""
        result = run_hard_auction(init_params(3, 5, 10), [0.8, 0.5, 0.3])
        self.assertEqual(result.winner, 0)
        self.assertAlmostEqual(result.payment, 0.5)

    def test_identity_equals_spa_in_bulk(self):
        """Test exact agreement with the second-price auction."""
        bids = np.random.default_rng(9).uniform(0.0, 1.0, size=(2000, 10))
        winners, payments = hard_auction_batch(init_params(10, 5, 10), bids)
        np.testing.assert_array_equal(winners, np.argmax(bids, axis=1))
        np.testing.assert_array_equal(payments, np.sort(bids, axis=1)[:, -2])
        self.assertEqual(hard_revenue(init_params(10, 5, 10), bids), spa_revenue(bids))

    def test_no_sale(self):
        """Test that the dummy wins when every transformed bid is negative."""
        params = AuctionNetParams(np.zeros((2, 1, 1)), np.full((2, 1, 1), -5.0))
        result = run_hard_auction(params, [0.3, 0.2])
        self.assertIsNone(result.winner)
        self.assertEqual(result.payment, 0.0)
        self.assertEqual(hard_revenue(params, np.array([[0.3, 0.2]])), 0.0)

    def test_baselines(self):
        """Test SPA and FPA winners, payments and ties."""
        self.assertEqual(spa_baseline([0.8, 0.5, 0.3]), (0, 0.5))
        self.assertEqual(spa_baseline([0.4, 0.4, 0.4]), (0, 0.4))
        self.assertEqual(fpa_baseline([0.3, 0.8, 0.5]), (1, 0.8))
        with self.assertRaises(ValueError):
            spa_baseline([0.5])

    def test_revenue_baselines(self):
        """Test the dataset averages of the two baselines."""
        bids = np.array([[0.8, 0.5, 0.3], [0.1, 0.2, 0.6]])
        self.assertAlmostEqual(spa_revenue(bids), 0.35)
        self.assertAlmostEqual(fpa_revenue(bids), 0.7)

    def test_individually_rational(self):
        """Test that no winner pays above its bid under random parameters."""
        rng = np.random.default_rng(10)
        for _ in range(5):
            params = random_params(rng, 10, 5, 10)
            self.assertEqual(ir_violations(params, rng.uniform(0.0, 1.0, size=(1000, 10))), 0)

    def test_incentive_compatible(self):
        """Test that misreporting never helps under random parameters."""
        rng = np.random.default_rng(11)
        params = random_params(rng, 4, 3, 4)
        bids = rng.uniform(0.0, 1.0, size=(20, 4))
        grid = np.linspace(0.0, 1.2, 121)
        self.assertLessEqual(max_ic_regret(params, bids, grid), 1e-9)

    def test_max_ic_regret_matches_per_bidder_regret(self):
        """Test that the batched worst case equals the worst ic_regret over instances and bidders."""
        rng = np.random.default_rng(13)
        params = random_params(rng, 4, 3, 4)
        bids = rng.uniform(0.0, 1.0, size=(7, 4))
        grid = np.linspace(0.0, 1.2, 25)
        expected = max(ic_regret(params, row, i, grid) for row in bids for i in range(4))
        self.assertAlmostEqual(max_ic_regret(params, bids, grid, chunk=3), expected, places=12)

    def test_ir_violations_chunked(self):
        """Test that chunking does not change the violation count."""
        rng = np.random.default_rng(14)
        params = random_params(rng, 5, 3, 4)
        bids = rng.uniform(0.0, 1.0, size=(1000, 5))
        self.assertEqual(ir_violations(params, bids, chunk=7), ir_violations(params, bids))

    def test_ic_regret_of_truthful_grid_point(self):
        """Test that a grid containing only the true value has zero regret."""
        params = init_params(3, 1, 1)
        self.assertEqual(ic_regret(params, [0.8, 0.5, 0.3], 0, [0.8]), 0.0)

    def test_ic_regret_rejects_empty_grid(self):
        """Test that an empty misreport grid is rejected."""
        with self.assertRaises(ValueError):
            ic_regret(init_params(3, 1, 1), [0.8, 0.5, 0.3], 0, [])


if __name__ == "__main__":
    unittest.main()
