import contextlib
import csv
import io
import os
import tempfile
import unittest
from unittest.mock import patch

from epaloha.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestAnalyticCommand(unittest.TestCase):
    def test_psi_grid(self):
        code, out, _ = run_cli("analytic", "psi", "--var", "alpha", "--start", "0", "--stop", "1",
                               "--step", "0.01", "--quiet")
        self.assertEqual(code, EXIT_OK)
        table = rows(out)
        self.assertEqual(len(table), 101)
        self.assertTrue(all(r["schema"] == "1" for r in table))
        self.assertEqual(table[0]["M"], "100")
        peak = max(float(r["psi"]) for r in table)
        self.assertAlmostEqual(peak, 0.6149, delta=1e-3)
        self.assertEqual(table[-1]["alpha"], "1")

    def test_single_point(self):
        code, out, _ = run_cli("analytic", "psi", "--var", "alpha", "--start", "0.5", "--stop", "0.5", "--quiet")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(len(rows(out)), 1)

    def test_ratio_column(self):
        code, out, _ = run_cli("analytic", "ratio", "--var", "M", "--start", "10", "--stop", "30",
                               "--step", "10", "--quiet")
        self.assertEqual(code, EXIT_OK)
        table = rows(out)
        self.assertEqual([r["M"] for r in table], ["10", "20", "30"])
        self.assertEqual({r["ratio"] for r in table}, {"1.63212056"})

    def test_fixed_point_statuses(self):
        code, out, _ = run_cli("analytic", "fixed_point", "--var", "lambda0", "--start", "20", "--stop", "40",
                               "--step", "20", "--quiet")
        self.assertEqual(code, EXIT_OK)
        table = rows(out)
        self.assertEqual([r["status_ma"] for r in table], ["ok", "unstable"])
        self.assertEqual([r["status_ep"] for r in table], ["ok", "ok"])
        self.assertEqual(table[1]["lambda_ma"], "")
        self.assertEqual(table[0]["alpha0"], "0.2")

    def test_fixed_point_normalized_columns(self):
        code, out, _ = run_cli("analytic", "fixed_point", "--var", "alpha0", "--start", "0.1", "--stop", "0.4",
                               "--step", "0.3", "--quiet")
        self.assertEqual(code, EXIT_OK)
        light, heavy = rows(out)
        alpha_ma, alpha_ep = float(light["alpha_ma"]), float(light["alpha_ep"])
        self.assertAlmostEqual(alpha_ma, 0.111833, places=5)
        self.assertLess(alpha_ep, alpha_ma)
        self.assertAlmostEqual(float(light["q_ma_asymptotic"]), 1 - 0.1 / alpha_ma, places=7)
        self.assertAlmostEqual(float(light["q_ep_asymptotic"]), 1 - 0.1 / alpha_ep, places=7)
        self.assertLess(float(light["q_ep_asymptotic"]), float(light["q_ma_asymptotic"]))
        # beyond 1/e only the exploration branch has a solution
        self.assertEqual(heavy["alpha_ma"], "")
        self.assertEqual(heavy["q_ma_asymptotic"], "")
        self.assertGreater(float(heavy["alpha_ep"]), 0.4)

    def test_traffic_value_from_set(self):
        code, out, _ = run_cli("analytic", "collision", "--var", "M", "--start", "10", "--stop", "10",
                               "--set", "lambda=20", "--set", "pool_size=200", "--quiet")
        self.assertEqual(code, EXIT_OK)
        row = rows(out)[0]
        self.assertEqual(row["min_pool_size"], "200")
        self.assertAlmostEqual(float(row["no_collision_approx"]), 0.99)

    def test_unknown_formula(self):
        code, _, err = run_cli("analytic", "nonsense", "--var", "alpha", "--start", "0")
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("unknown formula", err)

    def test_missing_sweep(self):
        code, _, _ = run_cli("analytic", "psi")
        self.assertEqual(code, EXIT_USAGE)

    def test_missing_traffic_value(self):
        code, _, err = run_cli("analytic", "ep", "--var", "M", "--start", "10")
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("lambda", err)

    def test_bad_config_value(self):
        code, _, _ = run_cli("analytic", "psi", "--var", "alpha", "--start", "0", "--set", "M=0")
        self.assertEqual(code, EXIT_USAGE)

    def test_argparse_rejects_unknown_variable(self):
        with self.assertRaises(SystemExit) as ctx:
            run_cli("analytic", "psi", "--var", "beta", "--start", "0")
        self.assertEqual(ctx.exception.code, 2)


class TestSimulateCommand(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_reproducible(self):
        paths = [os.path.join(self.tmp.name, f"run{i}.csv") for i in range(2)]
        for path in paths:
            code, _, _ = run_cli("simulate", "--var", "K", "--start", "5", "--stop", "6", "--trials", "1",
                                 "--seed", "3", "--set", "M=10", "--out", path, "--quiet")
            self.assertEqual(code, EXIT_OK)
        with open(paths[0], encoding="utf-8") as a, open(paths[1], encoding="utf-8") as b:
            first = a.read()
            self.assertEqual(first, b.read())
        table = rows(first)
        self.assertEqual([(r["K"], r["scheme"]) for r in table], [("5", "ma"), ("5", "ep"), ("6", "ma"), ("6", "ep")])
        self.assertTrue(all(r["status"] == "ok" for r in table))

    def test_single_scheme_and_alpha(self):
        code, out, _ = run_cli("simulate", "--scheme", "ep", "--var", "alpha", "--start", "0.5",
                               "--trials", "200", "--set", "M=20", "--quiet")
        self.assertEqual(code, EXIT_OK)
        (row,) = rows(out)
        self.assertEqual(row["scheme"], "ep")
        self.assertEqual(row["trials"], "200")
        self.assertGreater(float(row["mean"]), 0.0)

    def test_fast_retrial_points(self):
        code, out, _ = run_cli("simulate", "--var", "lambda0", "--start", "5", "--slots", "300",
                               "--warmup", "20", "--set", "M=20", "--quiet")
        self.assertEqual(code, EXIT_OK)
        table = rows(out)
        self.assertEqual(len(table), 2)
        for r in table:
            self.assertEqual(r["slots"], "300")
            self.assertEqual(r["status"], "ok")
            self.assertIn("outage_3", r)
            self.assertEqual(r["mean_sojourn"], r["mean_delay"])

    def test_estimation_mode_flag(self):
        code, out, _ = run_cli("simulate", "--scheme", "ep", "--mode", "pool", "--var", "K", "--start", "4",
                               "--trials", "100", "--set", "M=8", "--quiet")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(len(rows(out)), 1)

    def test_zero_trials_rejected(self):
        code, out, err = run_cli("simulate", "--var", "K", "--start", "4", "--trials", "0", "--quiet")
        self.assertEqual(code, EXIT_USAGE)
        self.assertEqual(out, "")
        self.assertIn("--trials must be >= 1", err)


class TestPhyCommand(unittest.TestCase):
    def test_noiseless_accuracy(self):
        code, out, _ = run_cli("phy", "--var", "K", "--start", "1", "--stop", "2", "--trials", "200",
                               "--set", "noise_power=0", "--quiet")
        self.assertEqual(code, EXIT_OK)
        table = rows(out)
        self.assertEqual([float(r["accuracy"]) for r in table], [1.0, 1.0])
        self.assertEqual(table[0]["pool_size"], "121")

    def test_small_pool_report(self):
        code, out, _ = run_cli("phy", "--var", "snr_db", "--start", "20", "--trials", "50",
                               "--set", "t_p=5", "--quiet")
        self.assertEqual(code, EXIT_OK)
        row = rows(out)[0]
        self.assertEqual(row["pool_size"], "25")
        self.assertAlmostEqual(float(row["coherence"]), 5 ** -0.5, places=8)

    def test_collision_columns_with_lambda(self):
        code, out, _ = run_cli("phy", "--var", "snr_db", "--start", "20", "--trials", "100",
                               "--set", "lambda=20", "--set", "M=10", "--quiet")
        self.assertEqual(code, EXIT_OK)
        row = rows(out)[0]
        self.assertIn("no_collision_exact", row)
        self.assertGreater(float(row["no_collision"]), 0.9)

    def test_non_prime_length(self):
        code, _, _ = run_cli("phy", "--var", "snr_db", "--start", "10", "--set", "t_p=4")
        self.assertEqual(code, EXIT_USAGE)

    def test_wrong_variable(self):
        code, _, _ = run_cli("phy", "--var", "lambda", "--start", "10")
        self.assertEqual(code, EXIT_USAGE)

    def test_dump(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "confusion.csv")
            code, _, _ = run_cli("phy", "--var", "snr_db", "--start", "0", "--stop", "20", "--step", "20",
                                 "--trials", "100", "--dump", path, "--quiet")
            self.assertEqual(code, EXIT_OK)
            with open(path, encoding="utf-8") as f:
                dump = rows(f.read())
        self.assertEqual(list(dump[0]), ["schema", "snr_db", "k", "k_hat", "count"])
        for snr in ("0", "20"):
            self.assertEqual(sum(int(r["count"]) for r in dump if r["snr_db"] == snr), 100)


class TestFigureCommands(unittest.TestCase):
    def test_figure1(self):
        code, out, _ = run_cli("figure1", "--quiet")
        self.assertEqual(code, EXIT_OK)
        table = rows(out)
        self.assertEqual(len(table), 20)
        self.assertEqual(table[0]["eta_known"], "1")
        self.assertTrue(all(float(r["eta_known"]) >= float(r["e_inv"]) for r in table))

    def test_figure4_custom_grid(self):
        code, out, _ = run_cli("figure4", "--start", "10", "--stop", "20", "--step", "10", "--trials", "200", "--quiet")
        self.assertEqual(code, EXIT_OK)
        table = rows(out)
        self.assertEqual([r["M"] for r in table], ["10", "20"])
        self.assertEqual({r["lambda"] for r in table}, {"20"})

    def test_figure6_custom_grid(self):
        code, out, _ = run_cli("figure6", "--start", "2", "--stop", "4", "--step", "2", "--slots", "200",
                               "--warmup", "10", "--quiet")
        self.assertEqual(code, EXIT_OK)
        table = rows(out)
        self.assertEqual([r["lambda0"] for r in table], ["2", "4"])
        self.assertTrue(all(r["status_ma"] == "ok" and r["status_ep"] == "ok" for r in table))

    def test_figure_rejects_traffic_override(self):
        code, _, err = run_cli("figure3", "--set", "lambda=3")
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("lambda", err)


class TestSelftestAndConfig(unittest.TestCase):
    def test_selftest_passes(self):
        code, out, _ = run_cli("selftest", "--trials", "20000", "--quiet")
        self.assertEqual(code, EXIT_OK, out)
        lines = out.splitlines()
        self.assertTrue(lines)
        self.assertTrue(all(line.startswith("PASS ") for line in lines), out)
        self.assertTrue(any(line.startswith("PASS oracle_equivalence") for line in lines))

    def test_selftest_failure_exit_code(self):
        from epaloha.selftest import CheckResult
        with patch("epaloha.cli.cmd_selftest", return_value=[CheckResult("psi", False, "broken")]):
            code, out, _ = run_cli("selftest", "--quiet")
        self.assertEqual(code, EXIT_FAILED)
        self.assertIn("FAIL psi: broken", out)

    def test_selftest_rejects_negative_trials(self):
        code, _, _ = run_cli("selftest", "--trials", "-5", "--quiet")
        self.assertEqual(code, EXIT_USAGE)

    def test_config_example(self):
        code, out, _ = run_cli("config", "--example")
        self.assertEqual(code, EXIT_OK)
        self.assertIn("M = 100", out)

    def test_config_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "system.env")
            with open(path, "w", encoding="utf-8") as f:
                f.write("M = 7\nestimation_mode = pool\n")
            code, out, _ = run_cli("config", path)
        self.assertEqual(code, EXIT_OK)
        self.assertIn("M = 7", out.splitlines())
        self.assertIn("estimation_mode = pool", out.splitlines())

    def test_config_errors(self):
        code, _, err = run_cli("config", "/nonexistent/system.env")
        self.assertEqual(code, EXIT_FAILED)
        self.assertIn("Configuration check failed", err)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "bad.env")
            with open(path, "w", encoding="utf-8") as f:
                f.write("M = 0\n")
            code, _, _ = run_cli("config", path)
        self.assertEqual(code, EXIT_FAILED)


if __name__ == '__main__':
    unittest.main()
