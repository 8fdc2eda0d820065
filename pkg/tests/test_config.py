import os
import json
import pickle
import tempfile
import unittest
from unittest.mock import patch

from epaloha import (SystemConfig, TrafficConfig, EstimationMode, validate, MissingVariableError,
                     ValidationError, TypeCastingError, FrozenInstanceError)
from epaloha.base import BaseConfig
from epaloha.fields import Var
from epaloha.utils import cast_value, format_number, parse_assignment, tomllib


class TestConfig(unittest.TestCase):
    def setUp(self):
        self.env_patcher = patch.dict(os.environ, {}, clear=True)
        self.env_patcher.start()
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.env_patcher.stop()
        self.tmp.cleanup()

    def _write(self, name, text):
        path = os.path.join(self.tmp.name, name)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text)
        return path

    def test_defaults(self):
        cfg = SystemConfig()
        self.assertEqual(cfg.M, 100)
        self.assertEqual(cfg.pool_size, 121)
        self.assertEqual((cfg.t_p, cfg.t_d, cfg.t_f), (11, 100, 5))
        self.assertIs(cfg.estimation_mode, EstimationMode.IDEAL)
        self.assertEqual(cfg.w_max, 1024)
        self.assertEqual(validate(cfg), [])

    def test_flat_file_with_comments_and_quotes(self):
        path = self._write("system.env", "# channels\nM = 50\nestimation_mode = 'pool'  \nt_p=7 # short\n")
        cfg = SystemConfig(env_path=path)
        self.assertEqual(cfg.M, 50)
        self.assertEqual(cfg.t_p, 7)
        self.assertIs(cfg.estimation_mode, EstimationMode.PREAMBLE_POOL)

    def test_json_file(self):
        path = self._write("system.json", json.dumps({"M": 20, "noise_power": 0, "unused": 1}))
        cfg = SystemConfig(env_path=path)
        self.assertEqual(cfg.M, 20)
        self.assertEqual(cfg.noise_power, 0.0)

    @unittest.skipIf(tomllib is None, "tomllib needs Python 3.11+")
    def test_toml_file(self):
        path = self._write("system.toml", 'M = 30\nestimation_mode = "phy"\n')
        cfg = SystemConfig(env_path=path)
        self.assertEqual(cfg.M, 30)
        self.assertIs(cfg.estimation_mode, EstimationMode.PHY)

    def test_priority_file_env_keyword(self):
        path = self._write("system.env", "M=10\nt_f=3\n")
        os.environ["EPALOHA_M"] = "20"
        cfg = SystemConfig(env_path=path)
        self.assertEqual(cfg.M, 20)
        self.assertEqual(cfg.t_f, 3)
        self.assertEqual(SystemConfig(env_path=path, M=30).M, 30)

    def test_later_files_win(self):
        first = self._write("a.env", "M=10\nt_f=2\n")
        second = self._write("b.env", "M=40\n")
        cfg = SystemConfig(env_path=[first, second])
        self.assertEqual((cfg.M, cfg.t_f), (40, 2))

    def test_missing_file(self):
        with self.assertRaises(MissingVariableError):
            SystemConfig(env_path=os.path.join(self.tmp.name, "nope.env"))

    def test_bad_line_and_bad_cast(self):
        with self.assertRaises(TypeCastingError):
            SystemConfig(env_path=self._write("bad.env", "M 10\n"))
        with self.assertRaises(TypeCastingError) as ctx:
            SystemConfig(M="many")
        self.assertIn("M", str(ctx.exception))
        with self.assertRaises(TypeCastingError):
            SystemConfig(estimation_mode="guess")

    def test_unknown_override(self):
        with self.assertRaises(TypeError):
            SystemConfig(channels=4)

    def test_validation_collects_every_error(self):
        with self.assertRaises(ValidationError) as ctx:
            SystemConfig(M=0, t_p=200)
        errors = ctx.exception.errors
        self.assertIn("M >= 1 violated (M = 0)", errors)
        self.assertTrue(any(e.startswith("t_p < t_d violated") for e in errors))

    def test_non_strict_reports_instead_of_raising(self):
        cfg = SystemConfig(strict=False, t_p=100)
        self.assertEqual(validate(cfg), ["t_p < t_d violated (t_p = 100, t_d = 100)"])

    def test_phy_mode_needs_prime_length(self):
        with self.assertRaises(ValidationError):
            SystemConfig(estimation_mode="phy", t_p=9)
        with self.assertRaises(ValidationError):
            SystemConfig(estimation_mode="phy", t_p=5, pool_size=26)
        cfg = SystemConfig(estimation_mode="phy", t_p=5, pool_size=25)
        self.assertEqual(cfg.pool_size, 25)
        # a non-prime length is fine when no sequences are built
        self.assertEqual(SystemConfig(t_p=9).t_p, 9)

    def test_target_snr_must_be_positive(self):
        with self.assertRaises(ValidationError) as ctx:
            SystemConfig(target_snr=0)
        self.assertIn("target_snr > 0 violated", ctx.exception.errors)

    def test_frozen_and_replace(self):
        cfg = SystemConfig()
        with self.assertRaises(FrozenInstanceError):
            cfg.M = 5
        smaller = cfg.replace(M=5)
        self.assertEqual(smaller.M, 5)
        self.assertEqual(cfg.M, 100)
        with self.assertRaises(ValidationError):
            cfg.replace(M=-1)

    def test_equality_hash_pickle(self):
        a = SystemConfig(M=7)
        b = SystemConfig(M=7)
        self.assertEqual(a, b)
        self.assertEqual(hash(a), hash(b))
        self.assertNotEqual(a, SystemConfig(M=8))
        clone = pickle.loads(pickle.dumps(a))
        self.assertEqual(clone, a)
        with self.assertRaises(FrozenInstanceError):
            clone.M = 1

    def test_example_template(self):
        text = SystemConfig.example()
        self.assertIn("M = 100", text)
        self.assertIn("estimation_mode = ideal", text)
        self.assertIn("choices: ['ideal', 'pool', 'phy']", text)
        self.assertIn("# number of orthogonal channels", text)

    def test_traffic_exactly_one(self):
        self.assertEqual(TrafficConfig(fixed_k=5).kind, "K")
        self.assertEqual(TrafficConfig(lambda0=2.5).value, 2.5)
        with self.assertRaises(ValidationError):
            TrafficConfig()
        with self.assertRaises(ValidationError):
            TrafficConfig(fixed_k=3, lam=2.0)
        with self.assertRaises(ValidationError):
            TrafficConfig(lam=float("inf"))

    def test_traffic_lambda_key(self):
        path = self._write("traffic.env", "lambda = 12.5\n")
        t = TrafficConfig(env_path=path)
        self.assertEqual(t.lam, 12.5)
        self.assertEqual(t.kind, "lambda")
        self.assertEqual(t.to_dict(by_key=True)["lambda"], 12.5)
        self.assertEqual(TrafficConfig(**{"lambda": 3}).lam, 3.0)

    def test_required_field(self):
        class Needs(BaseConfig):
            seed: int = Var(min_val=0)

        with self.assertRaises(MissingVariableError):
            Needs()
        os.environ["EPALOHA_seed"] = "4"
        self.assertEqual(Needs().seed, 4)


class TestUtils(unittest.TestCase):
    def test_cast_value(self):
        from typing import Optional
        self.assertEqual(cast_value("3", int), 3)
        self.assertTrue(cast_value("yes", bool))
        self.assertIsNone(cast_value("none", Optional[int]))
        self.assertEqual(cast_value("2.5", Optional[float]), 2.5)
        self.assertIs(cast_value("PHY", EstimationMode), EstimationMode.PHY)

    def test_format_number(self):
        self.assertEqual(format_number(1 / 3), "0.333333333")
        self.assertEqual(format_number(True), "1")
        self.assertEqual(format_number(None), "")
        self.assertEqual(format_number(7), "7")
        self.assertEqual(format_number("ok"), "ok")

    def test_parse_assignment(self):
        self.assertEqual(parse_assignment("M=50"), ("M", "50"))
        self.assertEqual(parse_assignment(" lambda = '2' "), ("lambda", "2"))
        with self.assertRaises(TypeCastingError):
            parse_assignment("M")


if __name__ == '__main__':
    unittest.main()
