import math
import unittest

import numpy as np

from epaloha import (EstimationMode, ExplorationOutcome, Scheme, SystemConfig, analytic,
                     batch_frames, make_feedback, run_dtp, run_exploration, run_frame)
from epaloha.mac import run_conventional
from epaloha.phy import distinct_preamble_counts, with_estimates
from epaloha.streams import substream


class TestExploration(unittest.TestCase):
    def test_forced_choices(self):
        outcome = ExplorationOutcome.from_choices(4, [4, 3, 4])
        self.assertEqual(outcome.true_counts.tolist(), [0, 0, 1, 2])
        self.assertEqual(outcome.est_counts.tolist(), [0, 0, 1, 2])
        self.assertEqual(outcome.K, 3)
        with self.assertRaises(ValueError):
            outcome.true_counts[0] = 5

    def test_no_users(self):
        outcome = run_exploration(0, SystemConfig(M=4), substream(0))
        self.assertEqual(outcome.true_counts.tolist(), [0, 0, 0, 0])
        self.assertEqual(outcome.K, 0)

    def test_ideal_counts_are_exact(self):
        outcome = run_exploration(30, SystemConfig(M=8), substream(1))
        self.assertEqual(outcome.true_counts.sum(), 30)
        np.testing.assert_array_equal(outcome.est_counts, outcome.true_counts)
        self.assertIsNone(outcome.user_preamble)

    def test_pool_mode_counts_distinct_preambles(self):
        config = SystemConfig(M=3, pool_size=4, estimation_mode="pool")
        outcome = run_exploration(40, config, substream(2))
        self.assertTrue((outcome.est_counts <= outcome.true_counts).all())
        self.assertTrue((outcome.est_counts <= 4).all())
        np.testing.assert_array_equal(outcome.est_counts > 0, outcome.true_counts > 0)

    def test_pool_mode_same_preamble_undercounts(self):
        outcome = ExplorationOutcome.from_choices(2, [1, 1], preambles=[5, 5])
        est = distinct_preamble_counts(outcome, 8)
        self.assertEqual(est.tolist(), [1, 0])
        self.assertEqual(outcome.true_counts.tolist(), [2, 0])

    def test_noiseless_phy_mode_matches_distinct_counts(self):
        config = SystemConfig(M=6, t_p=11, pool_size=121, estimation_mode="phy", noise_power=0)
        agree = total = 0
        for seed in range(40):
            outcome = run_exploration(6, config, substream(seed))
            expected = distinct_preamble_counts(outcome, config.pool_size)
            # two atoms sit below the coherence recovery bound at t_p = 11
            small = expected <= 2
            np.testing.assert_array_equal(outcome.est_counts[small], expected[small])
            agree += int((outcome.est_counts == expected).sum())
            total += expected.size
        self.assertGreaterEqual(agree / total, 0.95)

    def test_noiseless_phy_mode_counts_crowded_channels(self):
        config = SystemConfig(M=10, t_p=11, pool_size=121, estimation_mode="phy", noise_power=0)
        peaks = [int(run_exploration(30, config, substream(seed)).est_counts.max()) for seed in range(5)]
        self.assertGreater(max(peaks), 2)


class TestDataTransmission(unittest.TestCase):
    def test_worked_example(self):
        outcome = ExplorationOutcome.from_choices(4, [4, 3, 4])
        fb = make_feedback(outcome, w_max=3)
        self.assertEqual(fb.flags, (0, 0, 1, 0))
        self.assertEqual(fb.contention_count, 2)
        for seed in range(20):
            res = run_dtp(outcome, fb, substream(seed))
            self.assertEqual(res.group1_count, 1)
            self.assertEqual(res.group1_successes, 1)
            self.assertTrue(res.per_user_success[1])
            # free = 3 > W = 2, so both contenders always transmit
            self.assertEqual(res.group2_transmitters, 2)
            self.assertEqual(res.deferred, 0)
            self.assertEqual(res.free_channels, 3)
            self.assertIn(res.group2_successes, (0, 2))
            self.assertEqual(res.successes + res.collided_packets, 3)

    def test_contention_free_users_always_deliver(self):
        config = SystemConfig(M=20)
        rng = substream(21)
        for K in range(0, 60, 3):
            outcome = run_exploration(K, config, rng)
            res = run_dtp(outcome, make_feedback(outcome, config.w_max), rng)
            singletons = int((outcome.true_counts == 1).sum())
            self.assertEqual(res.group1_count, singletons)
            self.assertEqual(res.group1_successes, singletons)

    def test_single_user_always_succeeds(self):
        config = SystemConfig(M=5)
        for seed in range(10):
            res = run_frame(Scheme.EXPLORATION, 1, config, substream(seed))
            self.assertEqual(res.group1_count, 1)
            self.assertEqual(res.successes, 1)

    def test_same_preamble_pair_collides_in_group1(self):
        outcome = ExplorationOutcome.from_choices(2, [1, 1], preambles=[5, 5])
        outcome = with_estimates(outcome, distinct_preamble_counts(outcome, 8))
        fb = make_feedback(outcome, w_max=8)
        self.assertEqual(fb.flags, (1, 0))
        res = run_dtp(outcome, fb, substream(0))
        self.assertEqual(res.group1_count, 2)
        self.assertEqual(res.successes, 0)
        self.assertEqual(res.collided_packets, 2)

    def test_zero_contention_count_with_group2_user(self):
        # channel 2 was missed by the detector, so W = 0 while user 2 still contends
        outcome = ExplorationOutcome.from_choices(2, [1, 2], est_counts=[1, 0])
        fb = make_feedback(outcome, w_max=4)
        self.assertEqual(fb.contention_count, 0)
        res = run_dtp(outcome, fb, substream(0))
        self.assertEqual(res.group2_transmitters, 1)
        self.assertEqual(res.successes, 2)

    def test_deferral_when_contention_exceeds_free_channels(self):
        outcome = ExplorationOutcome.from_choices(2, [1, 1, 1, 1, 1, 1])
        fb = make_feedback(outcome, w_max=8)
        deferred = [run_dtp(outcome, fb, substream(seed)).deferred for seed in range(1000)]
        # p = 2 / 6, so on average 4 of the 6 users wait
        self.assertAlmostEqual(np.mean(deferred), 4.0, delta=0.3)

    def test_mismatched_feedback(self):
        outcome = ExplorationOutcome.from_choices(3, [1])
        fb = make_feedback(ExplorationOutcome.from_choices(2, [1]), w_max=4)
        with self.assertRaises(ValueError):
            run_dtp(outcome, fb, substream(0))

    def test_conventional(self):
        res = run_conventional(0, 3, substream(0))
        self.assertEqual(res.successes, 0)
        res = run_conventional(1, 3, substream(0))
        self.assertEqual(res.group2_successes, 1)
        res = run_conventional(4, 1, substream(0))
        self.assertEqual(res.successes, 0)
        self.assertEqual(res.collided_packets, 4)


class TestBatchFrames(unittest.TestCase):
    TRIALS = 200_000

    def _mean(self, scheme, K, M, seed=0):
        s = batch_frames(scheme, np.full(self.TRIALS, K), M, substream(seed, K, M)).successes
        return s.mean(), s.std(ddof=1) / math.sqrt(self.TRIALS)

    def test_matches_oracle(self):
        for K, M in ((2, 2), (3, 4), (4, 3), (1, 1)):
            mean, se = self._mean(Scheme.EXPLORATION, K, M)
            self.assertLessEqual(abs(mean - analytic.n_ep_oracle(K, M)), 4 * se + 1e-12, (K, M))

    def test_matches_conventional_formula(self):
        for K, M in ((2, 3), (5, 4), (20, 10)):
            mean, se = self._mean(Scheme.CONVENTIONAL, K, M)
            self.assertLessEqual(abs(mean - analytic.n_ma(K, M)), 4 * se, (K, M))

    def test_tallies_are_consistent(self):
        K = np.array([0, 1, 5, 12, 3])
        res = batch_frames(Scheme.EXPLORATION, K, 6, substream(3))
        np.testing.assert_array_equal(res.successes, res.group1_successes + res.group2_successes)
        self.assertTrue((res.transmitted <= K).all())
        self.assertTrue((res.collided >= 0).all())
        self.assertEqual(res.successes[0], 0)
        self.assertEqual(res.successes[1], 1)

    def test_all_zero(self):
        res = batch_frames(Scheme.EXPLORATION, np.zeros(4, dtype=int), 5, substream(0))
        self.assertEqual(res.successes.tolist(), [0, 0, 0, 0])

    def test_deterministic(self):
        K = np.full(1000, 7)
        a = batch_frames(Scheme.EXPLORATION, K, 5, substream(9, 1)).successes
        b = batch_frames(Scheme.EXPLORATION, K, 5, substream(9, 1)).successes
        np.testing.assert_array_equal(a, b)

    def test_ideal_frame_engine_agrees_with_batch(self):
        config = SystemConfig(M=4)
        self.assertIs(config.estimation_mode, EstimationMode.IDEAL)
        rng = substream(5)
        frames = [run_frame(Scheme.EXPLORATION, 3, config, rng).successes for _ in range(20_000)]
        se = np.std(frames, ddof=1) / math.sqrt(len(frames))
        self.assertLessEqual(abs(np.mean(frames) - analytic.n_ep_oracle(3, 4)), 4 * se)


if __name__ == '__main__':
    unittest.main()
