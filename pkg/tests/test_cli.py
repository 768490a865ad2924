import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from kapc.cli import main
from kapc.kernels import KernelSpec, kernel_matrix
from kapc.model import ApcModel
from kapc.selection import df_preset_target


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def _read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _mixed_data(n=60, seed=0):
    """Five variables with one curved and one near-linear relation."""
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(-2, 2, n)
    x2 = x1**2 + 0.1 * rng.standard_normal(n)
    x3 = rng.standard_normal(n)
    x4 = -x3 + 0.3 * rng.standard_normal(n)
    x5 = rng.standard_normal(n)
    return np.column_stack([x1, x2, x3, x4, x5])


@pytest.fixture
def data_csv(tmp_path):
    return _write(tmp_path / "data.csv", [f"v{j}" for j in range(1, 6)], _mixed_data())


def _fit(tmp_path, *argv):
    out = tmp_path / "model.json"
    assert main(["fit", *argv, "-o", str(out)]) == 0
    return json.loads(out.read_text())


def _alphas(doc):
    return [v["alpha"] for v in doc["variables"]]


def _phis(doc, k=0):
    """Stored transform values of component k as an (n, p) array."""
    return np.column_stack([v["phi"] for v in doc["components"][k]["variables"]])


def _star_gram(doc):
    """Pairwise star inner products of the stored components (Gaussian kernels, no null space)."""
    comps = doc["components"]
    n = len(comps[0]["variables"][0]["phi"])
    out = np.zeros((len(comps),) * 2)
    for a, ca in enumerate(comps):
        for b, cb in enumerate(comps):
            for va, vb, alpha in zip(ca["variables"], cb["variables"], _alphas(doc)):
                pb = np.array(vb["phi"])
                out[a, b] += np.array(va["phi"]) @ pb / n + alpha * np.array(va["beta"]) @ pb
    return out


class TestFit:
    def test_three_components_are_orthonormal(self, tmp_path, data_csv):
        doc = _fit(tmp_path, data_csv, "--alpha", "0.01", "--standardize", "--components", "3", "--tol", "1e-12")
        assert len(doc["components"]) == 3
        np.testing.assert_allclose(_star_gram(doc), np.eye(3), atol=1e-6)
        ev = [c["eigenvalue"] for c in doc["components"]]
        assert ev == sorted(ev)

    def test_config_embedded_and_rerun_identical(self, tmp_path, data_csv):
        a = _fit(tmp_path, data_csv, "--alpha", "0.01", "--seed", "4")
        b = _fit(tmp_path, data_csv, "--alpha", "0.01", "--seed", "4")
        assert a == b
        cfg = a["config"]
        assert cfg["alpha"] == "0.01" and cfg["seed"] == 4 and cfg["kernel"] == "gaussian"
        assert cfg["tol"] == 1e-9 and cfg["max_iter"] == 10000

    def test_per_variable_alpha(self, tmp_path, data_csv):
        doc = _fit(tmp_path, data_csv, "--alpha", "0.1,0.01,0.01,0.1,1")
        assert _alphas(doc) == [0.1, 0.01, 0.01, 0.1, 1.0]

    def test_df_target_preset(self, tmp_path, data_csv):
        from kapc.smoother import degrees_of_freedom, hat_matrix
        from kapc.problem import make_block
        from kapc.selection import standardize

        doc = _fit(tmp_path, data_csv, "--df-target", "n/10", "--standardize")
        Z, _ = standardize(_mixed_data())
        target = df_preset_target(60, 5)
        for j, alpha in enumerate(_alphas(doc)):
            b = make_block(KernelSpec.gaussian(1.0), Z[:, j])
            assert degrees_of_freedom(hat_matrix(b.G, b.Q, alpha)) == pytest.approx(target, abs=0.01)

    def test_mixed_kernels(self, tmp_path):
        rng = np.random.default_rng(1)
        u = rng.uniform(size=40)
        path = _write(tmp_path / "d.csv", ["u", "w"], np.column_stack([u, np.sin(3 * u) + 0.01 * rng.standard_normal(40)]))
        doc = _fit(tmp_path, path, "--kernel", "sobolev:2,gaussian:0.5", "--alpha", "1e-4")
        assert [v["kernel"]["kind"] for v in doc["variables"]] == ["sobolev", "gaussian"]
        assert doc["components"][0]["eigenvalue"] < 0.05

    def test_direct_solver(self, tmp_path, data_csv):
        doc = _fit(tmp_path, data_csv, "--alpha", "0.01", "--solver", "direct", "--standardize")
        assert doc["solver"] == "direct"
        assert "r_eigenvalue" in doc["components"][0]["diagnostics"]

    def test_precomputed(self, tmp_path):
        X = _mixed_data(n=30)[:, :3]
        paths = []
        for j in range(3):
            K = kernel_matrix(KernelSpec.gaussian(1.0), X[:, j])
            paths.append(tmp_path / f"k{j}.csv")
            np.savetxt(paths[-1], K, delimiter=",")
        doc = _fit(tmp_path, "--kernel", "precomputed", "--matrices", ",".join(map(str, paths)), "--alpha", "0.01")
        assert [v["name"] for v in doc["variables"]] == ["k0", "k1", "k2"]
        assert doc["components"][0]["converged"]

    def test_writes_stdout(self, data_csv, capsys):
        assert main(["fit", data_csv, "--alpha", "0.1"]) == 0
        assert json.loads(capsys.readouterr().out)["format"] == "kapc-model"


class TestRoundTrip:
    @pytest.fixture
    def fitted(self, tmp_path, data_csv):
        _fit(tmp_path, data_csv, "--alpha", "0.01", "--standardize", "--components", "2")
        return tmp_path / "model.json", data_csv

    def test_reload_reproduces_stored_values(self, fitted):
        path, _ = fitted
        doc = json.loads(path.read_text())
        model = ApcModel.from_dict(doc)
        again = model.to_dict()
        for a, b in zip(again["components"], doc["components"]):
            for va, vb in zip(a["variables"], b["variables"]):
                np.testing.assert_allclose(va["phi"], vb["phi"], rtol=0, atol=1e-12)
            assert a["eigenvalue"] == pytest.approx(b["eigenvalue"], abs=1e-12)

    @pytest.mark.parametrize("component", [0, 1])
    def test_eval_on_training_points(self, fitted, tmp_path, component):
        path, data = fitted
        out = tmp_path / "phi.csv"
        assert main(["eval", str(path), data, "--component", str(component), "-o", str(out)]) == 0
        header, rows = _read(out)
        assert header == [f"v{j}" for j in range(1, 6)]
        stored = _phis(json.loads(path.read_text()), component)
        np.testing.assert_allclose(np.array(rows, dtype=float), stored, rtol=0, atol=1e-10)

    def test_plotdata(self, fitted, tmp_path):
        path, _ = fitted
        out = tmp_path / "curves.csv"
        assert main(["plotdata", str(path), "-o", str(out)]) == 0
        header, rows = _read(out)
        assert header == ["variable", "x", "phi"]
        X = _mixed_data()
        for j in range(5):
            xs = np.array([float(r[1]) for r in rows if r[0] == f"v{j + 1}"])
            assert xs.size == 200
            assert xs[0] == X[:, j].min() and xs[-1] == X[:, j].max()
            assert np.all(np.diff(xs) > 0)

    def test_component_out_of_range(self, fitted, tmp_path):
        path, data = fitted
        assert main(["eval", str(path), data, "--component", "5"]) == 1


class TestCv:
    def test_default_grid_scores(self, tmp_path):
        path = _write(tmp_path / "d.csv", ["a", "b", "c"], _mixed_data(n=40)[:, :3])
        out = tmp_path / "cv.json"
        assert main(["cv", path, "--standardize", "-o", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert len(doc["grid"]) == 35 and len(doc["cv_scores"]) == 35
        assert doc["selected_alpha"] in doc["grid"]
        assert doc["variables"] == ["a", "b", "c"]

    def test_fit_with_cv_records_scores(self, tmp_path):
        path = _write(tmp_path / "d.csv", ["a", "b", "c"], _mixed_data(n=40)[:, :3])
        doc = _fit(tmp_path, path, "--cv", "--grid", "0.001,0.01,0.1", "--folds", "3")
        assert _alphas(doc) == [doc["cross_validation"]["selected_alpha"]] * 3


def test_simulate_then_fit(tmp_path):
    data = tmp_path / "sim.csv"
    truth = tmp_path / "truth.csv"
    assert main(["simulate", "--n", "250", "--seed", "0", "-o", str(data), "--truth", str(truth)]) == 0
    header, rows = _read(data)
    assert header == ["x1", "x2", "x3", "x4"] and len(rows) == 250
    doc = _fit(tmp_path, str(data), "--kernel", "gaussian", "--bandwidth", "1", "--standardize", "--cv")
    assert doc["components"][0]["raw_eigenvalue"] <= 0.02
    phi_true = np.array(_read(truth)[1], dtype=float)
    phi_hat = _phis(doc)
    for j in range(3):
        assert abs(np.corrcoef(phi_hat[:, j], phi_true[:, j])[0, 1]) >= 0.9


class TestExitCodes:
    @pytest.mark.parametrize("extra", [[], ["--alpha", "0.1", "--cv"], ["--alpha", "0.1", "--solver", "lanczos"]])
    def test_argument_errors(self, data_csv, extra):
        # argument errors are reported by the parser itself, which exits with the usage code
        with pytest.raises(SystemExit) as info:
            main(["fit", data_csv, *extra])
        assert info.value.code == 1

    def test_direct_with_sobolev(self, data_csv):
        assert main(["fit", data_csv, "--alpha", "0.1", "--solver", "direct", "--kernel", "sobolev"]) == 1

    @pytest.mark.parametrize("kernel", ["laplace", "gaussian:x", "gaussian,gaussian"])
    def test_bad_kernel_list(self, data_csv, kernel):
        assert main(["fit", data_csv, "--alpha", "0.1", "--kernel", kernel]) == 1

    def test_bad_alpha(self, data_csv):
        assert main(["fit", data_csv, "--alpha", "small"]) == 1

    def test_malformed_row(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n3,4\n5,oops\n7,8\n")
        assert main(["fit", str(path), "--alpha", "0.1"]) == 2
        assert "bad.csv:4" in capsys.readouterr().err

    def test_short_row(self, tmp_path, capsys):
        path = tmp_path / "short.csv"
        path.write_text("a,b\n1,2\n3\n")
        assert main(["fit", str(path), "--alpha", "0.1"]) == 2
        assert "short.csv:3" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["fit", str(tmp_path / "none.csv"), "--alpha", "0.1"]) == 2

    def test_nonpositive_tolerance(self, data_csv):
        assert main(["fit", data_csv, "--alpha", "0.1", "--tol", "0"]) == 2

    def test_degenerate_problem(self, tmp_path, capsys):
        paths = []
        for j in range(2):
            paths.append(tmp_path / f"k{j}.csv")
            np.savetxt(paths[-1], np.ones((6, 6)), delimiter=",")
        rc = main(["fit", "--kernel", "precomputed", "--matrices", ",".join(map(str, paths)), "--alpha", "0.1"])
        assert rc == 3
        assert "solver error" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    out = tmp_path / "s.csv"
    proc = subprocess.run([sys.executable, "-m", "kapc.cli", "simulate", "--n", "10", "-o", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(out.read_text().splitlines()) == 11
