"""End-to-end checks of the elastic-hte command line: exit codes, report
schemas and determinism."""

import csv
import json
import os
import subprocess
import sys
import tempfile
import unittest

import jsonschema

BIN = os.environ["ELASTIC_HTE_BIN"]
SYNTH = os.environ["ELASTIC_SYNTH_BIN"]
SCHEMA_DIR = os.environ["ELASTIC_SCHEMA_DIR"]


def load_schema(name):
    with open(os.path.join(SCHEMA_DIR, name)) as f:
        return json.load(f)


REPORT = load_schema("report.schema.json")
CONFIG = load_schema("config.schema.json")


def run(*args):
    return subprocess.run([BIN, *args], capture_output=True, text=True, timeout=600)


def read_json(path):
    with open(path) as f:
        return json.load(f)


class CliTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dir = cls.tmp.name
        cls.data = os.path.join(cls.dir, "data.csv")
        subprocess.run([SYNTH, cls.data, "7", "0.5"], check=True)
        cls.config = cls.write_config("run.json", {
            "model": {"kind": "linear", "effect_modifiers": ["x1", "x2"]},
            "ci": {"M": 2000, "L": 20},
            "gate": {"report_gammas": [0.05, 0.1, 0.5]},
        })

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    @classmethod
    def write_config(cls, name, body):
        jsonschema.validate(body, CONFIG)
        path = os.path.join(cls.dir, name)
        with open(path, "w") as f:
            json.dump(body, f)
        return path

    def outdir(self, name):
        path = os.path.join(self.dir, name)
        os.makedirs(path, exist_ok=True)
        return path

    def assert_ok(self, proc):
        self.assertEqual(proc.returncode, 0, proc.stderr)

    def test_estimate_report_is_valid_and_deterministic(self):
        a, b = self.outdir("est_a"), self.outdir("est_b")
        self.assert_ok(run("estimate", "--data", self.data, "--config", self.config, "--out", a, "--seed", "3"))
        self.assert_ok(run("estimate", "--data", self.data, "--config", self.config, "--out", b, "--seed", "3",
                           "--threads", "1"))
        rep = read_json(os.path.join(a, "estimate.json"))
        jsonschema.validate(rep, REPORT)
        self.assertEqual(rep["command"], "estimate")
        self.assertEqual(rep["model"]["effect_modifiers"], ["(intercept)", "x1", "x2"])
        for name in ("rt", "eff", "elastic", "covadj_rt"):
            coefs = rep["estimators"][name]["coefficients"]
            self.assertEqual(len(coefs), 3)
            for c in coefs:
                self.assertLessEqual(c["ci_lo"], c["ci_hi"])
        other = read_json(os.path.join(b, "estimate.json"))
        self.assertEqual(rep["estimators"], other["estimators"])
        self.assertEqual(rep["gate"], other["gate"])
        with open(os.path.join(a, "estimate.csv")) as f:
            rows = list(csv.DictReader(f))
        self.assertGreaterEqual(len(rows), 12)

    def test_gamma_and_alpha_flags(self):
        out = self.outdir("est_gamma")
        self.assert_ok(run("estimate", "--data", self.data, "--config", self.config, "--out", out,
                           "--gamma", "0.2", "--alpha", "0.1"))
        rep = read_json(os.path.join(out, "estimate.json"))
        jsonschema.validate(rep, REPORT)
        self.assertEqual(rep["gate"]["gamma"], 0.2)
        self.assertEqual(rep["metadata"]["alpha"], 0.1)

    def test_gate_report(self):
        out = self.outdir("gate")
        self.assert_ok(run("gate", "--data", self.data, "--config", self.config, "--out", out))
        rep = read_json(os.path.join(out, "gate.json"))
        jsonschema.validate(rep, REPORT)
        self.assertEqual(rep["df"], 3)
        self.assertGreaterEqual(rep["t_stat"], 0.0)
        self.assertEqual([d["gamma"] for d in rep["decisions"]], [0.05, 0.1, 0.5])
        # Thresholds fall as gamma grows.
        cs = [d["c_gamma"] for d in rep["decisions"]]
        self.assertEqual(cs, sorted(cs, reverse=True))

    def test_simulate_is_thread_invariant(self):
        cfg = self.write_config("study.json", {
            "seed": 11,
            "ci": {"M": 500, "L": 5},
            "study": {"b_grid": [0.1, 1.0], "reps": 3, "bootstrap_reps": 5},
        })
        outs = []
        for threads in ("1", "2"):
            out = self.outdir("sim_" + threads)
            self.assert_ok(run("simulate", "--config", cfg, "--out", out, "--threads", threads))
            outs.append(out)
        rep = read_json(os.path.join(outs[0], "study.json"))
        jsonschema.validate(rep, REPORT)
        self.assertEqual(len(rep["per_b"]), 2)
        for name in ("table1.csv", "replications.csv"):
            with open(os.path.join(outs[0], name), "rb") as f1, open(os.path.join(outs[1], name), "rb") as f2:
                self.assertEqual(f1.read(), f2.read(), name)

    def test_reps_flag_overrides_config(self):
        cfg = self.write_config("study_small.json", {
            "ci": {"M": 200, "L": 3},
            "study": {"b_grid": [0.5], "reps": 50, "bootstrap_reps": 3, "write_replications": False},
        })
        out = self.outdir("sim_reps")
        self.assert_ok(run("simulate", "--config", cfg, "--out", out, "--reps", "2"))
        rep = read_json(os.path.join(out, "study.json"))
        self.assertEqual(rep["config"]["reps"], 2)
        self.assertFalse(os.path.exists(os.path.join(out, "replications.csv")))

    def test_mixture_report(self):
        cfg = self.write_config("mix.json", {
            "seed": 5,
            "mixture": {"p": 1, "i_rt": [[1.0]], "i_rw": [[1.0]], "rho": 1.0,
                        "gamma": [0.0, 0.3, 1.0], "eta": [2.0], "M": 2000, "density_points": 11},
        })
        out = self.outdir("mix")
        self.assert_ok(run("mixture", "--config", cfg, "--out", out))
        rep = read_json(os.path.join(out, "mixture_summary.json"))
        jsonschema.validate(rep, REPORT)
        self.assertEqual(len(rep["gammas"]), 3)
        self.assertIsNone(rep["gammas"][0]["c_gamma"])
        # gamma = 1 never truncates, so the bias vanishes.
        self.assertAlmostEqual(rep["gammas"][2]["analytic_bias"][0], 0.0, places=12)
        for name in ("mixture_draws.csv", "mixture_density.csv"):
            self.assertTrue(os.path.exists(os.path.join(out, name)))

    def test_input_errors_exit_2(self):
        out = self.outdir("bad")
        self.assertEqual(run("estimate", "--config", self.config, "--out", out).returncode, 2)
        self.assertEqual(run("estimate", "--data", self.data, "--out", out, "--gamma", "2").returncode, 2)
        self.assertEqual(run("estimate", "--data", os.path.join(self.dir, "missing.csv"), "--out", out).returncode, 2)
        self.assertEqual(run("estimate", "--data", self.data, "--out", out, "--alpha", "1.5").returncode, 2)
        self.assertEqual(run("frobnicate").returncode, 2)
        bad = os.path.join(self.dir, "bad.json")
        with open(bad, "w") as f:
            json.dump({"model": {"kind": "probit"}, "unknown_key": 1}, f)
        with self.assertRaises(jsonschema.ValidationError):
            jsonschema.validate(read_json(bad), CONFIG)
        proc = run("estimate", "--data", self.data, "--config", bad, "--out", out)
        self.assertEqual(proc.returncode, 2)
        self.assertIn("unknown_key", proc.stderr)
        with open(os.path.join(self.dir, "broken.json"), "w") as f:
            f.write("{not json")
        self.assertEqual(run("gate", "--data", self.data, "--config", os.path.join(self.dir, "broken.json"),
                             "--out", out).returncode, 2)

    def test_missing_stratum_exits_2(self):
        trial_only = os.path.join(self.dir, "trial_only.csv")
        with open(self.data) as src, open(trial_only, "w", newline="") as dst:
            rows = list(csv.reader(src))
            w = csv.writer(dst)
            w.writerow(rows[0])
            w.writerows(r for r in rows[1:] if r[0] == "rt")
        out = self.outdir("trial_only")
        self.assertEqual(run("estimate", "--data", trial_only, "--out", out).returncode, 2)

    def test_numerical_failures_exit_3(self):
        treated = os.path.join(self.dir, "all_treated.csv")
        with open(self.data) as src, open(treated, "w", newline="") as dst:
            rows = list(csv.reader(src))
            w = csv.writer(dst)
            w.writerow(rows[0])
            for r in rows[1:]:
                if r[0] == "rt":
                    r[1] = "1"
                w.writerow(r)
        out = self.outdir("numeric")
        proc = run("estimate", "--data", treated, "--config", self.config, "--out", out)
        self.assertEqual(proc.returncode, 3, proc.stderr)
        # A vanishing truncation region cannot be sampled by rejection.
        cfg = self.write_config("mix_infeasible.json", {
            "mixture": {"p": 1, "i_rt": [[1.0]], "i_rw": [[1.0]], "rho": 1.0,
                        "gamma": [1e-9], "eta": [0.0], "M": 100},
        })
        proc = run("mixture", "--config", cfg, "--out", out)
        self.assertEqual(proc.returncode, 3, proc.stderr)


if __name__ == "__main__":
    unittest.main(verbosity=2)
