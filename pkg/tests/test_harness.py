import json
import os

import numpy as np
import pytest

from schattenrec import matio
from schattenrec.cli import main
from schattenrec.errors import ValidationError
from schattenrec.harness import (
    PhaseDiagramConfig,
    WidthSweepConfig,
    cell_success_probabilities,
    run_phase_diagram,
    run_width_sweep,
    selftest,
    transition_midpoint,
)
from schattenrec.measurements import gaussian_operator


class TestMatrixIO:
    def test_smat_roundtrip(self, tmp_path):
        X = np.arange(12, dtype=float).reshape(3, 4) / 7.0
        path = tmp_path / "x.smat"
        matio.save_matrix_smat(path, X)
        assert np.array_equal(matio.load_matrix_smat(path), X)

    def test_smat_header(self, tmp_path):
        path = tmp_path / "x.smat"
        matio.save_matrix_smat(path, np.eye(2))
        raw = path.read_bytes()
        assert raw[:4] == b"SMAT"
        assert raw[4:20] == (2).to_bytes(8, "little") * 2
        assert len(raw) == 20 + 4 * 8

    def test_json_roundtrip(self, tmp_path):
        X = np.array([[1.5, -2.0], [0.0, 3.25]])
        path = tmp_path / "x.json"
        matio.save_matrix_json(path, X)
        doc = json.loads(path.read_text())
        assert doc["rows"] == 2 and doc["cols"] == 2
        assert np.array_equal(matio.load_matrix_json(path), X)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.smat"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValidationError):
            matio.load_matrix_smat(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "trunc.smat"
        matio.save_matrix_smat(path, np.eye(3))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValidationError):
            matio.load_matrix_smat(path)

    def test_atomic_write_keeps_original_on_failure(self, tmp_path):
        target = tmp_path / "out.json"
        target.write_text("original")
        # no partial files are left behind by a completed write
        matio.atomic_write_text(target, "replaced")
        assert target.read_text() == "replaced"
        leftovers = [p for p in os.listdir(tmp_path) if p != "out.json"]
        assert leftovers == []


class TestPhaseDiagram:
    def _small_cfg(self, **kw):
        base = dict(n=5, s_values=(1,), m_values=(8, 16, 25), trials=4, seed=3)
        base.update(kw)
        return PhaseDiagramConfig(**base)

    def test_full_measurement_cell_succeeds(self):
        rec = run_phase_diagram(self._small_cfg())
        probs = cell_success_probabilities(rec.rows)
        assert probs[(1, 25)] == 1.0

    def test_impossible_cell_fails(self):
        # m below the rank-1 degrees of freedom 2n - 1 cannot recover
        rec = run_phase_diagram(self._small_cfg(m_values=(6, 25)))
        probs = cell_success_probabilities(rec.rows)
        assert probs[(1, 6)] == 0.0

    def test_determinism(self):
        a = run_phase_diagram(self._small_cfg())
        b = run_phase_diagram(self._small_cfg())
        assert a.content_hash == b.content_hash
        assert len(a.rows) == len(b.rows)
        for ra, rb in zip(a.rows, b.rows):
            assert ra["seed"] == rb["seed"]
            assert ra["rel_err"] == pytest.approx(rb["rel_err"], rel=1e-12)

    def test_threads_do_not_change_rows(self):
        a = run_phase_diagram(self._small_cfg(threads=1))
        b = run_phase_diagram(self._small_cfg(threads=4))
        for ra, rb in zip(a.rows, b.rows):
            assert ra == rb

    def test_config_validation_names_field(self):
        with pytest.raises(ValidationError, match="m_values"):
            PhaseDiagramConfig(n=4, s_values=(1,), m_values=(99,)).validate()
        with pytest.raises(ValidationError, match="s_values"):
            PhaseDiagramConfig(n=4, s_values=(9,), m_values=(4,)).validate()
        with pytest.raises(ValidationError, match="trials"):
            PhaseDiagramConfig(n=4, s_values=(1,), m_values=(4,), trials=0).validate()

    def test_midpoint_interpolation(self):
        probs = {(1, 10): 0.0, (1, 20): 0.25, (1, 30): 0.75, (1, 40): 1.0}
        assert transition_midpoint(probs, 1) == pytest.approx(25.0)

    def test_midpoint_none_when_never_crossing(self):
        probs = {(1, 10): 0.0, (1, 20): 0.1}
        assert transition_midpoint(probs, 1) is None


class TestWidthSweepRecord:
    def test_rows_and_summary(self):
        cfg = WidthSweepConfig(n=6, m_values=(18, 30), p=1.0, q=2.0, trials=4, seed=1)
        rec = run_width_sweep(cfg)
        assert [r["m"] for r in rec.rows] == [18, 30]
        assert all(r["ratio"] > 0 for r in rec.rows)
        assert "fitted_exponent" in rec.summary

    def test_determinism(self):
        cfg = WidthSweepConfig(n=6, m_values=(18, 30), trials=4, seed=9)
        a, b = run_width_sweep(cfg), run_width_sweep(cfg)
        for ra, rb in zip(a.rows, b.rows):
            assert ra["estimate"] == pytest.approx(rb["estimate"], rel=1e-12)


class TestSelftest:
    def test_all_pass(self):
        results = selftest()
        assert results and all(ok for _, ok in results)


class TestCli:
    def test_unknown_subcommand_exits_1(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_unknown_flag_exits_1(self, capsys):
        assert main(["selftest", "--bogus"]) == 1

    def test_no_command_exits_1(self, capsys):
        assert main([]) == 1

    def test_selftest_exits_0(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_gen_operator_and_recover_roundtrip(self, tmp_path, capsys):
        op = tmp_path / "op.json"
        assert main(["gen-operator", "--kind", "gaussian", "--n", "4", "--m", "12",
                     "--seed", "5", "--out", str(op)]) == 0
        A = gaussian_operator(4, 12, seed=5)
        rng = np.random.default_rng(0)
        X0 = np.outer(rng.standard_normal(4), rng.standard_normal(4))
        yfile = tmp_path / "y.json"
        matio.save_vector(yfile, A.apply(X0))
        out = tmp_path / "res.json"
        code = main(["recover", "--operator", str(op), "--y", str(yfile),
                     "--p", "1", "--theta", "0", "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["converged"] is True
        got = np.array(doc["minimizer"])
        assert np.linalg.norm(got - X0) <= 1e-4 * np.linalg.norm(X0)

    def test_recover_validation_error_exits_1(self, tmp_path, capsys):
        op = tmp_path / "op.json"
        main(["gen-operator", "--kind", "gaussian", "--n", "3", "--m", "5",
              "--seed", "1", "--out", str(op)])
        yfile = tmp_path / "y.json"
        matio.save_vector(yfile, np.zeros(5))
        code = main(["recover", "--operator", str(op), "--y", str(yfile), "--p", "2.0"])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_recover_nonconvergence_exits_2(self, tmp_path, capsys):
        op = tmp_path / "op.json"
        main(["gen-operator", "--kind", "gaussian", "--n", "4", "--m", "9",
              "--seed", "2", "--out", str(op)])
        yfile = tmp_path / "y.json"
        matio.save_vector(yfile, np.ones(9))
        code = main(["recover", "--operator", str(op), "--y", str(yfile),
                     "--max-iters", "2", "--out", str(tmp_path / "r.json")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_file_exits_1(self, capsys):
        assert main(["recover", "--operator", "/nonexistent.json", "--y", "/no.json"]) == 1
        assert "error:" in capsys.readouterr().err

    def test_phase_diagram_csv_and_sidecar(self, tmp_path, capsys):
        out = tmp_path / "pd.csv"
        code = main(["phase-diagram", "--n", "4", "--s-range", "1:1",
                     "--m-range", "6:16:10", "--seeds", "2", "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "s,m,trial,seed,rel_err,converged,success"
        assert len(lines) == 1 + 2 * 2
        meta = json.loads((tmp_path / "pd.csv.meta.json").read_text())
        assert "summary" in meta and "content_hash" in meta

    def test_width_sweep_csv(self, tmp_path, capsys):
        out = tmp_path / "ws.csv"
        code = main(["width-sweep", "--n", "5", "--m-list", "15,25",
                     "--trials", "3", "--out", str(out)])
        assert code == 0
        header = out.read_text().splitlines()[0]
        assert header == "N,m,p,q,r,s,trials,estimate,theory,ratio,seed"

    def test_env_override_and_flag_precedence(self, tmp_path, monkeypatch, capsys):
        op1 = tmp_path / "a.json"
        op2 = tmp_path / "b.json"
        op3 = tmp_path / "c.json"
        monkeypatch.setenv("SCHATTENREC_SEED", "7")
        main(["gen-operator", "--kind", "gaussian", "--n", "3", "--m", "4", "--out", str(op1)])
        monkeypatch.delenv("SCHATTENREC_SEED")
        main(["gen-operator", "--kind", "gaussian", "--n", "3", "--m", "4",
              "--seed", "7", "--out", str(op2)])
        monkeypatch.setenv("SCHATTENREC_SEED", "99")
        main(["gen-operator", "--kind", "gaussian", "--n", "3", "--m", "4",
              "--seed", "7", "--out", str(op3)])
        a, b, c = (json.loads(p.read_text()) for p in (op1, op2, op3))
        assert a["seed"] == b["seed"] == c["seed"] == 7

    def test_rip_probe_degenerate_exits_2(self, tmp_path, capsys):
        op = tmp_path / "zero.json"
        idx = tmp_path / "idx.json"
        matio.save_json(idx, [[i, j] for i in range(2) for j in range(2)])
        main(["gen-operator", "--kind", "mask", "--n", "2", "--indices", str(idx),
              "--scale", "0", "--out", str(op)])
        code = main(["rip-probe", "--operator", str(op), "--s", "1",
                     "--trials", "3", "--out", str(tmp_path / "rc.json")])
        assert code == 2
