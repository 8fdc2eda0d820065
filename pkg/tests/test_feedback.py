import unittest

from epaloha import ExplorationOutcome, Feedback
from epaloha.exceptions import DecodeError
from epaloha.feedback import (count_capacity, decode_feedback, encode_feedback,
                              feedback_from_counts, make_feedback)


class TestFeedback(unittest.TestCase):
    def test_flags_and_contention_count(self):
        fb = feedback_from_counts((0, 0, 1, 2), w_max=4)
        self.assertEqual(fb.flags, (0, 0, 1, 0))
        self.assertEqual(fb.contention_count, 2)
        self.assertEqual(fb.free_channels, 3)
        self.assertFalse(fb.saturated)

    def test_from_outcome_uses_estimated_counts(self):
        outcome = ExplorationOutcome.from_choices(3, [1, 2, 2], est_counts=[1, 1, 1])
        fb = make_feedback(outcome, w_max=8)
        self.assertEqual(fb.flags, (1, 1, 1))
        self.assertEqual(fb.contention_count, 0)

    def test_encode(self):
        fb = feedback_from_counts((0, 0, 1, 2), w_max=4)
        self.assertEqual(encode_feedback(fb), "001010")
        self.assertEqual(decode_feedback("001010", 4, 4), fb)

    def test_zero_width_count_field(self):
        self.assertEqual(count_capacity(1), 0)
        fb = feedback_from_counts((1, 1), w_max=1)
        self.assertEqual(encode_feedback(fb), "11")
        self.assertEqual(decode_feedback("11", 2, 1), fb)

    def test_saturation(self):
        fb = feedback_from_counts((5, 5), w_max=4)
        self.assertTrue(fb.saturated)
        self.assertEqual(fb.contention_count, 3)
        self.assertEqual(encode_feedback(fb), "0011")

    def test_capacity(self):
        self.assertEqual(count_capacity(1024), 1023)
        self.assertEqual(count_capacity(1025), 1025)
        self.assertEqual(count_capacity(2), 1)

    def test_decode_errors(self):
        with self.assertRaises(DecodeError):
            decode_feedback("0010", 4, 4)
        with self.assertRaises(DecodeError):
            decode_feedback("00101x", 4, 4)
        self.assertEqual(decode_feedback("0011", 2, 3), Feedback((0, 0), 3, 3))
        with self.assertRaises(DecodeError):
            decode_feedback("00111", 2, 5)


if __name__ == '__main__':
    unittest.main()
