import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from scipy.special import logit

from berncert import cli
from berncert.datasets import read_labeled_csv, read_xy_csv, write_labeled_csv, write_xy_csv
from berncert.model import Layer, MlpModel

# feature map sigmoid(input) with logits (f_1 - t, t - f_1): boundary f_1 = t in feature space
T = 0.5
FEATURES = np.array([[0.8, 0.3], [0.1, 0.9], [0.45, 0.5], [0.65, 0.2], [0.3, 0.7], [0.95, 0.05]])


def linear_model(t=T):
    return MlpModel((Layer(np.eye(2), np.zeros(2), "sigmoid"),
                     Layer(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([-t, t]), "id")), 1)


@pytest.fixture
def linear_files(tmp_path):
    model = tmp_path / "linear.json"
    model.write_text(linear_model().to_json())
    data = tmp_path / "linear.csv"
    labels = (FEATURES[:, 0] < T).astype(int)
    write_labeled_csv(data, logit(FEATURES), labels)
    return model, data


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- datasets ---------------------------------------------------------------------------

def test_dataset_csv_round_trip(tmp_path):
    x = np.random.default_rng(0).normal(size=(5, 3))
    y = np.array([0, 1, 2, 1, 0])
    write_labeled_csv(tmp_path / "d.csv", x, y)
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "x_1,x_2,x_3,label"
    x2, y2 = read_labeled_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(x2, x)
    np.testing.assert_array_equal(y2, y)
    write_xy_csv(tmp_path / "r.csv", x[:, 0], x[:, 1])
    a, b = read_xy_csv(tmp_path / "r.csv")
    np.testing.assert_array_equal(a, x[:, 0])


def test_dataset_csv_errors(tmp_path):
    (tmp_path / "h.csv").write_text("x_1,label\n")
    (tmp_path / "f.csv").write_text("x_1,label\n0.5,0.5\n")
    for name in ("h.csv", "f.csv"):
        with pytest.raises(ValueError):
            read_labeled_csv(tmp_path / name)


# --- train -------------------------------------------------------------------------------

def test_train_blobs(tmp_path):
    assert run("data", "blobs", "--n", 200, "--out", tmp_path / "b.csv") == 0
    assert run("train", tmp_path / "b.csv", "--out-dir", tmp_path / "m", "--epochs", 100) == 0
    metrics = json.loads((tmp_path / "m" / "metrics.json").read_text())
    assert metrics["train_acc"] >= 0.99 and 0 <= metrics["nat_acc"] <= 1
    MlpModel.from_json((tmp_path / "m" / "model.json").read_text())


def test_train_epochs_zero(tmp_path):
    run("data", "blobs", "--n", 50, "--out", tmp_path / "b.csv")
    assert run("train", tmp_path / "b.csv", "--out-dir", tmp_path, "--epochs", 0) == 0
    model = MlpModel.from_json((tmp_path / "model.json").read_text())
    assert model.d == 2
    assert "train_acc" in json.loads((tmp_path / "metrics.json").read_text())


def test_missing_dataset(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert run("train", missing, "--out-dir", tmp_path) == 3
    assert str(missing) in capsys.readouterr().err


def test_bad_arguments():
    with pytest.raises(SystemExit) as exc:
        cli.main(["certify"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["attack", "m.json", "d.csv"])  # neither --fgsm nor --pgd
    assert exc.value.code == 2


# --- certify -------------------------------------------------------------------------------

def test_certify_linear_fixture(tmp_path, linear_files):
    model, data = linear_files
    assert run("certify", model, data, "--out-dir", tmp_path / "c", "--n", 3, "--jobs", 1) == 0
    text = (tmp_path / "c" / "results.csv").read_text()
    assert text.splitlines()[0].startswith("index,label,prediction,radius,p,residual,converged,xi,c")
    rows = read_rows(tmp_path / "c" / "results.csv")
    assert [int(r["index"]) for r in rows] == list(range(len(FEATURES)))
    for r, f in zip(rows, FEATURES):
        assert float(r["radius"]) == pytest.approx(abs(f[0] - T), abs=1e-6)
        assert r["radius"] == f"{float(r['radius']):.9g}"
        assert r["space"] == "feature" and r["converged"] == "1"
    summary = json.loads((tmp_path / "c" / "summary.json").read_text())
    assert summary["natural_accuracy"] == 1.0 and summary["convergence_rate"] == 1.0
    assert summary["mean_radius"] == pytest.approx(np.mean(np.abs(FEATURES[:, 0] - T)), abs=1e-6)
    assert summary["seconds_per_example"] > 0


def test_certify_c_sweep(tmp_path, linear_files):
    model, data = linear_files
    means = []
    for c in (2, 10):
        run("certify", model, data, "--out-dir", tmp_path / f"c{c}", "--C", c, "--jobs", 1)
        means.append(json.loads((tmp_path / f"c{c}" / "summary.json").read_text())["mean_radius"])
    assert means[1] >= means[0]


def test_certify_jobs_and_other_solvers(tmp_path, linear_files):
    model, data = linear_files
    run("certify", model, data, "--out-dir", tmp_path / "a", "--jobs", 1)
    run("certify", model, data, "--out-dir", tmp_path / "b", "--jobs", 3)
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    run("certify", model, data, "--out-dir", tmp_path / "t", "--jobs", 1, "--solver", "trust_region",
        "--p", "inf", "--dogbox")
    for r, f in zip(read_rows(tmp_path / "t" / "results.csv"), FEATURES):
        assert float(r["radius"]) == pytest.approx(abs(f[0] - T), abs=1e-6)
        assert r["p"] == "inf"


def test_certify_empty_dataset(tmp_path, linear_files):
    model, _ = linear_files
    (tmp_path / "empty.csv").write_text("")
    assert run("certify", model, tmp_path / "empty.csv", "--out-dir", tmp_path) != 0
    (tmp_path / "header.csv").write_text("x_1,x_2,label\n")
    assert run("certify", model, tmp_path / "header.csv", "--out-dir", tmp_path) == 3


def test_certify_rejects_d_greater_than_k(tmp_path, capsys):
    model = MlpModel((Layer(np.eye(3), np.zeros(3), "sigmoid"), Layer(np.ones((2, 3)), np.zeros(2), "id")), 1)
    (tmp_path / "m.json").write_text(model.to_json())
    write_labeled_csv(tmp_path / "d.csv", np.zeros((2, 3)), np.array([0, 1]))
    assert run("certify", tmp_path / "m.json", tmp_path / "d.csv", "--out-dir", tmp_path) == 4
    assert "d=3" in capsys.readouterr().err
    assert run("certify", tmp_path / "m.json", tmp_path / "d.csv", "--out-dir", tmp_path, "--allow-truncation",
               "--jobs", 1) == 0


def test_malformed_model(tmp_path, linear_files):
    _, data = linear_files
    (tmp_path / "bad.json").write_text("{\"layers\": 3}")
    assert run("certify", tmp_path / "bad.json", data, "--out-dir", tmp_path) == 3


# --- curve -----------------------------------------------------------------------------------

def write_results(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cli.CERT_HEADER)
        for i, (label, pred, radius, conv) in enumerate(rows):
            w.writerow([i, label, pred, radius, 2, 0, conv, 0, "inf", "feature", "0 1", 0])


def test_curve_hand_counted(tmp_path):
    write_results(tmp_path / "r.csv", [(0, 0, 0.3, 1), (1, 1, 0.1, 1), (1, 0, 0.9, 1), (2, 2, 0.5, 0)])
    assert run("curve", tmp_path / "r.csv", "--radii", "0,0.2,0.4,0.6", "--out", tmp_path / "c.csv") == 0
    assert (tmp_path / "c.csv").read_text().splitlines() == [
        "radius,certified_accuracy", "0,0.75", "0.2,0.5", "0.4,0.25", "0.6,0"]
    run("curve", tmp_path / "r.csv", "--radii", "0", "--out", tmp_path / "n.csv")
    assert (tmp_path / "n.csv").read_text().splitlines()[1:] == ["0,0.75"]
    run("curve", tmp_path / "r.csv", "--radii", "0,0.2", "--exclude-unconverged", "--out", tmp_path / "x.csv")
    assert (tmp_path / "x.csv").read_text().splitlines()[1:] == ["0,0.75", "0.2,0.25"]


def test_curve_unsorted_radii(tmp_path):
    write_results(tmp_path / "r.csv", [(0, 0, 0.3, 1)])
    assert run("curve", tmp_path / "r.csv", "--radii", "0.5,0.1", "--out", tmp_path / "c.csv") == 2


# --- attack --------------------------------------------------------------------------------

def test_attack_zero_epsilon(tmp_path, linear_files):
    model, data = linear_files
    assert run("attack", model, data, "--pgd", "--eps", 0, "--out-dir", tmp_path) == 0
    s = json.loads((tmp_path / "attack_summary.json").read_text())
    assert s["robust_accuracy"] == s["natural_accuracy"] == 1.0
    assert (tmp_path / "attack.csv").read_text().splitlines()[0] == "index,label,pred_clean,pred_adv,epsilon,norm,success"


@pytest.mark.parametrize("target", ["base", "smoothed"])
@pytest.mark.parametrize("method", ["--fgsm", "--pgd"])
def test_attack_beyond_margins(tmp_path, linear_files, target, method):
    model, data = linear_files
    assert run("attack", model, data, method, "--eps", 0.6, "--norm", "inf", "--target", target,
               "--out-dir", tmp_path, "--steps", 40) == 0
    s = json.loads((tmp_path / "attack_summary.json").read_text())
    assert s["robust_accuracy"] == 0.0 and s["target"] == target


def test_attack_input_space(tmp_path, linear_files):
    model, data = linear_files
    assert run("attack", model, data, "--pgd", "--eps", 0.01, "--space", "input", "--out-dir", tmp_path) == 0
    s = json.loads((tmp_path / "attack_summary.json").read_text())
    assert s["space"] == "input" and s["robust_accuracy"] <= s["natural_accuracy"]


# --- demos -------------------------------------------------------------------------------

def test_demo2d(tmp_path, moons_model):
    (tmp_path / "m.json").write_text(moons_model.to_json())
    args = ["demo2d", tmp_path / "m.json", "--grid", 21, "--n", "1,4,16", "--samples", 4]
    assert run(*args, "--out-dir", tmp_path / "a") == 0
    assert run(*args, "--out-dir", tmp_path / "b") == 0
    for name in ("grids.csv", "radii.csv", "demo_summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = read_rows(tmp_path / "a" / "grids.csv")
    assert list(rows[0]) == ["x_1", "x_2", "base", "n_1", "n_4", "n_16"]
    for r in rows:
        if {float(r["x_1"]), float(r["x_2"])} <= {0.0, 1.0}:
            assert r["base"] == r["n_1"] == r["n_4"] == r["n_16"]
    assert len(read_rows(tmp_path / "a" / "radii.csv")) == 4


def test_demo2d_rejects_other_dims(tmp_path):
    model = MlpModel((Layer(np.eye(3), np.zeros(3), "sigmoid"), Layer(np.ones((3, 3)), np.zeros(3), "id")), 1)
    (tmp_path / "m.json").write_text(model.to_json())
    assert run("demo2d", tmp_path / "m.json", "--out-dir", tmp_path) == 4


def test_regress(tmp_path):
    run("data", "regression", "--out", tmp_path / "r.csv")
    assert run("regress", tmp_path / "r.csv", "--n", 8, "--epochs", 1500, "--points", 201,
               "--out", tmp_path / "s.csv") == 0
    rows = read_rows(tmp_path / "s.csv")
    assert list(rows[0]) == ["x", "base_prediction", "smoothed_prediction"] and len(rows) == 201
    tv = lambda key: np.abs(np.diff([float(r[key]) for r in rows])).sum()
    assert tv("smoothed_prediction") <= tv("base_prediction")


# --- seeding and entry point -------------------------------------------------------------

def test_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("BERNCERT_SEED", "7")
    run("data", "moons", "--n", 20, "--out", tmp_path / "env.csv")
    run("data", "moons", "--n", 20, "--seed", 7, "--out", tmp_path / "flag.csv")
    run("data", "moons", "--n", 20, "--seed", 8, "--out", tmp_path / "other.csv")
    assert (tmp_path / "env.csv").read_bytes() == (tmp_path / "flag.csv").read_bytes()
    assert (tmp_path / "env.csv").read_bytes() != (tmp_path / "other.csv").read_bytes()


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "berncert.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("data", "train", "certify", "curve", "attack", "demo2d", "regress"):
        assert cmd in out.stdout
