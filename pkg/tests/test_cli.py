import json
import math

import numpy as np
import pytest

from periodic_bvp.cli import EXIT_INPUT, EXIT_NONCONVERGENCE, EXIT_OK, EXIT_PSEUDO, main
from periodic_bvp.schema import dump_document, load_document


def write_doc(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def linear_doc(**extra):
    doc = {"schema_version": "1.0", "kind": "linear", "operator": {"eigenvalues": [1.0, 2.5]},
           "settings": {"grid_size": 64}}
    doc.update(extra)
    return doc


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), np.array([[float(v) for v in line.split(",")] for line in lines[1:]])


class TestSolveLinear:
    def test_zero_problem(self, tmp_path):
        out = tmp_path / "out"
        code = main(["solve-linear", "--input", write_doc(tmp_path / "p.json", linear_doc()),
                     "--out-dir", str(out)])
        assert code == EXIT_OK
        header, data = read_csv(out / "trajectory.csv")
        assert header == ["t", "x1", "y1", "x2", "y2"]
        assert data.shape == (65, 5)
        np.testing.assert_array_equal(data[:, 1:], 0.0)
        report = json.loads((out / "report.json").read_text())
        assert report["solvability"]["classification"] == "solvable"

    def test_resonant_forcing_is_pseudo_only(self, tmp_path):
        doc = linear_doc(operator={"eigenvalues": [1.0]}, forcing={"terms": [
            {"mode": 1, "slot": "x", "a": 1.0, "omega": 1.0},
            {"mode": 1, "slot": "y", "b": -1.0, "omega": 1.0}]})
        out = tmp_path / "out"
        code = main(["solve-linear", "--input", write_doc(tmp_path / "p.json", doc), "--out-dir", str(out)])
        assert code == EXIT_PSEUDO
        report = json.loads((out / "report.json").read_text())
        assert report["solvability"]["classification"] == "pseudo_only"
        assert report["pseudosolution_residual"] == pytest.approx(2 * math.pi, abs=1e-10)
        assert (out / "trajectory.csv").exists()

    def test_flag_overrides_grid(self, tmp_path):
        out = tmp_path / "out"
        main(["solve-linear", "--input", write_doc(tmp_path / "p.json", linear_doc()),
              "--out-dir", str(out), "--grid-size", "16"])
        assert read_csv(out / "trajectory.csv")[1].shape[0] == 17

    def test_series_mu_out_of_region_reported(self, tmp_path):
        out = tmp_path / "out"
        code = main(["solve-linear", "--input", write_doc(tmp_path / "p.json", linear_doc()),
                     "--out-dir", str(out), "--mu", "0.5"])
        assert code == EXIT_OK
        assert "error" in json.loads((out / "report.json").read_text())["green_series_check"]


class TestMalformedInput:
    def test_truncated_json(self, tmp_path, capsys):
        path = tmp_path / "p.json"
        path.write_text(json.dumps(linear_doc())[:-7])
        assert main(["solve-linear", "--input", str(path), "--out-dir", str(tmp_path / "o")]) == EXIT_INPUT
        assert "error" in capsys.readouterr().err

    def test_unknown_field(self, tmp_path, capsys):
        doc = linear_doc(bogus=1)
        assert main(["solve-linear", "--input", write_doc(tmp_path / "p.json", doc),
                     "--out-dir", str(tmp_path / "o")]) == EXIT_INPUT
        assert "bogus" in capsys.readouterr().err

    def test_alpha_shape_mismatch(self, tmp_path):
        doc = linear_doc(alpha=[[1.0, 0.0]])
        assert main(["solve-linear", "--input", write_doc(tmp_path / "p.json", doc),
                     "--out-dir", str(tmp_path / "o")]) == EXIT_INPUT

    def test_missing_file(self, tmp_path):
        assert main(["solve-linear", "--input", str(tmp_path / "nope.json"),
                     "--out-dir", str(tmp_path / "o")]) == EXIT_INPUT

    def test_wrong_kind(self, tmp_path):
        doc = {"schema_version": "1.0", "kind": "vdp", "vdp": {"n_modes": 1}}
        assert main(["solve-linear", "--input", write_doc(tmp_path / "p.json", doc),
                     "--out-dir", str(tmp_path / "o")]) == EXIT_INPUT


class TestVdpTorus:
    @pytest.mark.parametrize("support", ["1", "1,2", "1,2,3,4,5"])
    def test_supports(self, tmp_path, support):
        ks = [int(k) for k in support.split(",")]
        out = tmp_path / "out"
        code = main(["vdp-torus", "--n-modes", str(max(ks)), "--support", support,
                     "--out-dir", str(out), "--grid-size", "256"])
        assert code == EXIT_OK
        header, data = read_csv(out / "roots.csv")
        assert header == ["k", "c1", "c2", "r"]
        np.testing.assert_allclose(data[:, 3], 2 / math.sqrt(2 * len(ks) - 1), atol=1e-10)
        report = json.loads((out / "report.json").read_text())
        assert report["torus"]["matches_formula"]
        assert report["cross_check_F"]["proportional"]

    def test_bad_support(self, tmp_path):
        assert main(["vdp-torus", "--n-modes", "2", "--support", "3",
                     "--out-dir", str(tmp_path)]) == EXIT_INPUT

    def test_deterministic_csv(self, tmp_path):
        for name in ("a", "b"):
            main(["vdp-torus", "--n-modes", "3", "--support", "1,3", "--seed", "11",
                  "--out-dir", str(tmp_path / name), "--grid-size", "128"])
        assert (tmp_path / "a" / "roots.csv").read_bytes() == (tmp_path / "b" / "roots.csv").read_bytes()


class TestSolveNonlinear:
    def cubic_doc(self, **settings):
        terms = [
            {"mode": 1, "slot": "x", "coeff": -1.0, "powers": [[3, 0]]},
            {"mode": 1, "slot": "x", "coeff": -1.0, "powers": [[1, 2]]},
            {"mode": 1, "slot": "y", "coeff": -1.0, "powers": [[2, 1]]},
            {"mode": 1, "slot": "y", "coeff": -1.0, "powers": [[0, 3]]},
            {"mode": 1, "slot": "x", "coeff": 1.0, "powers": [[0, 0]], "omega": 1.0},
            {"mode": 1, "slot": "y", "coeff": -1.0, "powers": [[0, 0]], "omega": 1.0,
             "phase": -math.pi / 2},
            {"mode": 1, "slot": "x", "coeff": 0.5, "powers": [[0, 0]], "omega": 2.0},
        ]
        return {"schema_version": "1.0", "kind": "nonlinear", "operator": {"eigenvalues": [1.0]},
                "nonlinear": {"polynomial": terms}, "c_bar": [[1.1, 0.1]],
                "settings": {"grid_size": 256, **settings}}

    def test_eps_zero(self, tmp_path):
        out = tmp_path / "out"
        code = main(["solve-nonlinear", "--input", write_doc(tmp_path / "p.json", self.cubic_doc()),
                     "--out-dir", str(out)])
        assert code == EXIT_OK
        _, roots = read_csv(out / "roots.csv")
        np.testing.assert_allclose(roots[0, 1:], [1.0, 0.0, 1.0], atol=1e-10)
        assert len(json.loads((out / "history.json").read_text())) == 1

    def test_converges_at_small_eps(self, tmp_path):
        out = tmp_path / "out"
        code = main(["solve-nonlinear", "--input", write_doc(tmp_path / "p.json", self.cubic_doc()),
                     "--out-dir", str(out), "--eps", "0.05"])
        assert code == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["converged"]
        assert report["B0"]["conditions"]["hypotheses_satisfied"]
        assert report["verification"]["boundary_residual"] <= 1e-8

    def test_forced_off_root_exit_4(self, tmp_path):
        doc = {"schema_version": "1.0", "kind": "vdp", "vdp": {"n_modes": 1}, "c_bar": [[1.0, 0.0]],
               "settings": {"grid_size": 256, "eps": 0.01, "skip_newton": True}}
        out = tmp_path / "out"
        assert main(["solve-nonlinear", "--input", write_doc(tmp_path / "p.json", doc),
                     "--out-dir", str(out)]) == EXIT_NONCONVERGENCE
        report = json.loads((out / "report.json").read_text())
        assert not report["converged"]
        assert report["generating_root"]["F_residual"] == pytest.approx(3 * math.pi / 4, rel=1e-8)

    def test_vdp_limit_cycle_reports_root_but_not_periodic(self, tmp_path):
        # the perturbed orbit has period 2 pi (1 + eps^2/16), so no exact
        # 2 pi-periodic solution exists and the boundary test rejects it
        doc = {"schema_version": "1.0", "kind": "vdp", "vdp": {"n_modes": 1},
               "settings": {"grid_size": 512, "eps": 0.01}}
        out = tmp_path / "out"
        code = main(["solve-nonlinear", "--input", write_doc(tmp_path / "p.json", doc), "--out-dir", str(out)])
        assert code == EXIT_NONCONVERGENCE
        report = json.loads((out / "report.json").read_text())
        assert report["generating_root"]["radii"][0] == pytest.approx(2.0, abs=1e-10)
        assert report["B0"]["rank"] == 1
        assert "boundary residual" in report["error"]

    def test_eps_beyond_eps0_is_input_error(self, tmp_path):
        out = tmp_path / "out"
        assert main(["solve-nonlinear", "--input", write_doc(tmp_path / "p.json", self.cubic_doc()),
                     "--out-dir", str(out), "--eps", "0.5"]) == EXIT_INPUT

    def test_deterministic_trajectory(self, tmp_path):
        path = write_doc(tmp_path / "p.json", self.cubic_doc())
        for name in ("a", "b"):
            main(["solve-nonlinear", "--input", path, "--out-dir", str(tmp_path / name), "--eps", "0.05"])
        assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_document_round_trip():
    doc = load_document(json.dumps({
        "schema_version": "1.0", "kind": "linear", "operator": {"rule": "k^2", "n_modes": 3},
        "alpha": [[1, 0], [0, 0], [0, 2]],
        "forcing": {"terms": [{"mode": 2, "slot": "y", "a": 0.5, "omega": 3.0}]},
        "settings": {"grid_size": 128, "seed": 4}}))
    again = load_document(dump_document(doc))
    assert again == doc
    problem = again.to_problem()
    np.testing.assert_allclose(problem.op.eigenvalues, [1, 4, 9])


def test_schema_version_required():
    with pytest.raises(Exception):
        load_document(json.dumps({"kind": "linear", "operator": {"eigenvalues": [1.0]}}))
