import json

import numpy as np
import pytest

from noisygames.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_eval_canonical(capsys):
    code, out, _ = run_cli(capsys, "eval", "--game", "chsh",
                           "--strategy", "canonical", "--rho", "0.9")
    assert code == 0
    doc = json.loads(out)
    assert doc["violation"] == pytest.approx(2.545584, abs=1e-6)
    assert doc["schemaVersion"] == 1


def test_eval_magic_square(capsys):
    code, out, _ = run_cli(capsys, "eval", "--game", "magic_square",
                           "--strategy", "canonical", "--rho", "0.5")
    assert code == 0
    doc = json.loads(out)
    assert doc["overall"] == pytest.approx(0.75, abs=1e-9)


def test_eval_malformed_strategy_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"game": "chsh", "n": 1, "nonsense": []}))
    code, out, err = run_cli(capsys, "eval", "--strategy", str(bad), "--rho", "0.5")
    assert code == 2
    assert "unknown fields" in err


def test_eval_invalid_json_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run_cli(capsys, "eval", "--strategy", str(bad), "--rho", "0.5")
    assert code == 2


def test_certify_canonical(capsys):
    code, out, _ = run_cli(capsys, "certify", "--game", "chsh",
                           "--strategy", "canonical", "--rho", "0.8")
    assert code == 0
    doc = json.loads(out)
    assert doc["gap"] == pytest.approx(0.0, abs=1e-9)
    assert all(t["expectation"] == pytest.approx(0.0, abs=1e-9) for t in doc["terms"])


def test_certify_perturbed_identity(capsys):
    code, out, _ = run_cli(capsys, "certify", "--game", "chsh",
                           "--strategy", "canonical-perturbed:0.2", "--rho", "0.8")
    doc = json.loads(out)
    term_sum = sum(t["expectation"] for t in doc["terms"])
    assert doc["gap"] == pytest.approx(term_sum, abs=1e-9)
    assert doc["gap"] > 0


def test_certify_magic_square_variable(capsys):
    code, out, _ = run_cli(capsys, "certify", "--game", "magic_square",
                           "--strategy", "canonical", "--rho", "0.6",
                           "--variable", "2,3")
    assert code == 0
    doc = json.loads(out)
    assert doc["game"] == "magic_square"
    assert doc["value"] == pytest.approx(0.6, abs=1e-9)
    assert doc["gap"] == pytest.approx(0.0, abs=1e-9)


def test_certify_rejects_rho_zero(capsys):
    code, _, err = run_cli(capsys, "certify", "--game", "chsh",
                           "--strategy", "canonical", "--rho", "0")
    assert code == 2


def test_selftest_threshold_exit_codes(capsys):
    code, out, _ = run_cli(capsys, "selftest", "--game", "chsh",
                           "--strategy", "canonical", "--rho", "0.7",
                           "--threshold", "0.05")
    assert code == 0
    code, out, _ = run_cli(capsys, "selftest", "--game", "chsh",
                           "--strategy", "canonical-perturbed:0.3", "--rho", "0.7",
                           "--threshold", "0.05")
    assert code == 1


def test_selftest_two_out_of_n(capsys):
    code, out, _ = run_cli(capsys, "selftest", "--game", "two_out_of_n",
                           "--strategy", "canonical", "--n", "3", "--rho", "0.7")
    assert code == 0
    doc = json.loads(out)
    assert doc["registers"] == {"1": 1, "2": 2, "3": 3}
    assert doc["distinct"]


def test_selftest_theta_sweep_csv(capsys):
    code, out, _ = run_cli(capsys, "selftest", "--game", "chsh",
                           "--strategy", "canonical", "--rho", "0.7",
                           "--n", "3", "--register", "2",
                           "--theta-sweep", "0.05,0.1,0.2")
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0] == "theta,epsV,maxDistance"
    assert len(lines) == 4
    dists = [float(l.split(",")[2]) for l in lines[1:]]
    assert dists[0] < dists[1] < dists[2]


def test_selftest_general_noise_channel(capsys):
    code, out, _ = run_cli(capsys, "selftest", "--game", "chsh",
                           "--strategy", "canonical", "--rho", "0.8",
                           "--channel", "bit-phase-flip")
    assert code == 0
    doc = json.loads(out)
    assert doc["r"] == pytest.approx(0.8, abs=1e-9)
    assert doc["violation"] == pytest.approx(2 * np.sqrt(2) * 0.8, abs=1e-9)
    assert doc["maxDistance"] < 1e-9


def test_simulate_deterministic_and_csv(tmp_path, capsys):
    csv_path = tmp_path / "rounds.csv"
    argv = ["simulate", "--game", "chsh", "--strategy", "canonical",
            "--rho", "0.8", "--t", "200", "--p", "0.05", "--seed", "9",
            "--export-csv", str(csv_path)]
    code, out1, _ = run_cli(capsys, *argv)
    assert code == 0
    code, out2, _ = run_cli(capsys, *argv)
    assert out1 == out2
    doc = json.loads(out1)
    assert doc["verdict"]["accept"]
    lines = csv_path.read_text().strip().split("\n")
    assert len(lines) == doc["tPrime"] + 1


def test_simulate_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("NOISYGAMES_SEED", "123")
    code, out, _ = run_cli(capsys, "simulate", "--game", "chsh",
                           "--strategy", "canonical", "--rho", "0.8",
                           "--t", "100", "--p", "0.05")
    assert code == 0
    assert json.loads(out)["params"]["seed"] == 123


def test_estimate_rho_from_statistic(capsys):
    code, out, _ = run_cli(capsys, "estimate-rho", "--game", "chsh",
                           "--statistic", str(0.5 + np.sqrt(2) * 0.7 / 4),
                           "--rounds", "100000")
    assert code == 0
    doc = json.loads(out)
    assert doc["rhoHat"] == pytest.approx(0.7, abs=1e-9)
    lo, hi = doc["interval"]
    assert lo <= 0.7 <= hi


def test_estimate_rho_simulated(capsys):
    code, out, _ = run_cli(capsys, "estimate-rho", "--game", "chsh",
                           "--rho-true", "0.7", "--rounds", "100000", "--seed", "4")
    assert code == 0
    doc = json.loads(out)
    assert abs(doc["rhoHat"] - 0.7) < 0.02


def test_estimate_rho_from_transcript_file(tmp_path, capsys):
    out_path = tmp_path / "transcript.json"
    code, _, _ = run_cli(capsys, "simulate", "--game", "chsh",
                         "--strategy", "canonical", "--rho", "0.7",
                         "--t", "2000", "--p", "0.01", "--seed", "2",
                         "--out", str(out_path))
    assert code == 0
    code, out, _ = run_cli(capsys, "estimate-rho", "--transcript", str(out_path))
    assert code == 0
    assert abs(json.loads(out)["rhoHat"] - 0.7) < 0.1


def test_estimate_rho_needs_input(capsys):
    code, _, err = run_cli(capsys, "estimate-rho", "--game", "chsh")
    assert code == 2


def test_lemma_check(capsys):
    code, out, _ = run_cli(capsys, "lemma-check", "--seed", "7")
    assert code == 0
    doc = json.loads(out)
    assert all(c["pass"] for c in doc["checks"])
    names = {c["name"] for c in doc["checks"]}
    assert "lp_closed_form_vs_linear_program" in names
    assert "fast_transform_vs_trace_oracle" in names


def test_unknown_constructor_rejected(capsys):
    code, _, err = run_cli(capsys, "eval", "--strategy", "mystery", "--rho", "0.5")
    assert code == 2
    assert "neither a file nor a known constructor" in err
