import numpy as np
import pytest

import quadnmpc.cli as cli_mod
from quadnmpc.cli import main
from quadnmpc.studies import (
    StudyResult,
    _non_decreasing,
    _non_increasing,
    _reference_qp,
    benchmark,
    condensing_study,
)


class TestTrendHelpers:
    def test_non_increasing_with_infinities(self):
        assert _non_increasing([np.inf, np.inf, 5.0, 1.0])
        assert _non_increasing([3.0, 3.0, 3.0])
        assert not _non_increasing([1.0, 2.0])
        assert not _non_increasing([np.inf, 1.0, 2.0])

    def test_non_decreasing(self):
        assert _non_decreasing([1.0, 1.0, 2.0, np.inf])
        assert not _non_decreasing([2.0, 1.0])


class TestReferenceQp:
    def test_mid_transient_qp_is_nontrivial(self, params):
        qp = _reference_qp(params, N=20)
        assert qp.num_stages == 20
        assert np.abs(qp.x0_residual).max() > 0
        grads = max(np.abs(st.q).max() for st in qp.stages)
        assert grads > 1.0  # genuinely away from the reference


class TestCondensingStudy:
    def test_invariance_verdicts(self, params):
        res = condensing_study(params, block_sizes=(1, 2, 5, 10), N=10)
        assert res.passed
        assert [row["stages"] for row in res.rows] == [10, 5, 2, 1]
        assert all(row["deviation_from_M1"] <= 1e-6 for row in res.rows)


class TestBenchmarkSmoke:
    def test_row_schema_and_aggregate(self, params):
        res = benchmark(params, horizons=(5, 10), cycles=4, warmup=1)
        row = res.rows[0]
        assert list(row.keys()) == [
            "N", "solver", "block_size", "ip_iters", "time_prep_us", "time_solve_us",
        ]
        # 2 horizons x 2 solvers x 4 timed cycles
        assert len(res.rows) == 16
        aggregate = res.traces["aggregate"]
        assert {(r["N"], r["solver"]) for r in aggregate} == {
            (5, "riccati"), (5, "dense"), (10, "riccati"), (10, "dense"),
        }
        assert all(r["per_iter_us"] > 0 for r in aggregate)


class TestStudyCli:
    def test_study_condensing_writes_outputs(self, tmp_path):
        code = main(["study", "condensing", "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "study_condensing.csv").exists()
        assert (tmp_path / "plot_study_condensing.py").exists()
        verdicts = (tmp_path / "study_condensing_verdicts.txt").read_text()
        assert "PASS" in verdicts

    def test_benchmark_cli_plumbing(self, tmp_path, monkeypatch):
        stub = StudyResult(name="benchmark")
        stub.rows = [
            {
                "N": 10, "solver": "riccati", "block_size": 5,
                "ip_iters": 6, "time_prep_us": 100.0, "time_solve_us": 200.0,
            }
        ]
        stub.traces["aggregate"] = [
            {"N": 10, "solver": "riccati", "mean_cycle_us": 300.0,
             "max_cycle_us": 400.0, "per_iter_us": 30.0},
        ]
        stub.traces["fit_exponents"] = {"riccati": 1.0, "dense": 2.5}
        stub.traces["dense_over_riccati_ratio"] = [0.5, 1.5]
        stub.verdicts = {"ratio_strictly_increasing": True}
        monkeypatch.setattr(cli_mod, "benchmark", lambda *a, **k: stub)
        code = main(["benchmark", "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "benchmark.csv").exists()
        summary = (tmp_path / "benchmark_summary.txt").read_text()
        assert "PASS" in summary
