import json

import numpy as np
import pytest

from monattn import speedbench as sb
from monattn.numkit import SeededRng


def problem(T, U, d=16, stream=0):
    return sb.Problem(T, U, d, d, d, SeededRng(0, stream))


class TestConfig:
    def test_defaults(self):
        cfg = sb.BenchConfig()
        assert len(cfg.T_values) * len(cfg.U_values) == 20 and cfg.trials >= 10

    @pytest.mark.parametrize("bad", [dict(trials=5), dict(d_h=0), dict(U_values=[0]),
                                     dict(saturation="sometimes")])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            sb.BenchConfig(**bad)


class TestSelectionPattern:
    @pytest.mark.parametrize("T, U", [(50, 1000), (400, 50), (7, 7), (1, 1), (100, 1000)])
    def test_energy_count_within_contract(self, T, U):
        _, evals = sb.hard_contexts(problem(T, U), sb.selection_offsets(T, U, "uniform"))
        assert evals <= T + U

    def test_count_for_large_grid_cell(self):
        _, evals = sb.hard_contexts(problem(100, 1000), sb.selection_offsets(100, 1000, "uniform"))
        assert evals <= 1100 < 100 * 1000

    def test_immediate_selection_counts_one_per_step(self):
        _, evals = sb.hard_contexts(problem(30, 40), sb.selection_offsets(30, 40, "immediate"))
        assert evals == 40

    def test_uniform_reaches_end_of_memory(self):
        T, U = 20, 50
        prob = problem(T, U)
        out, _ = sb.hard_contexts(prob, sb.selection_offsets(T, U, "uniform"))
        targets = np.ceil(np.arange(1, U + 1) * T / U).astype(int)
        np.testing.assert_array_equal(out, prob.H[targets - 1])

    def test_softmax_contexts_are_convex_combinations(self):
        prob = problem(5, 3)
        out = sb.softmax_contexts(prob)
        assert out.shape == (3, 16)
        assert np.all(out <= prob.H.max(axis=0) + 1e-12) and np.all(out >= prob.H.min(axis=0) - 1e-12)


class TestTimers:
    def test_smallest_cell_runs(self):
        mean, median = sb.bench_softmax(1, 1, (4, 4, 4), 10, SeededRng(0, 1), warmup=1)
        assert mean > 0 and median > 0
        mean, median, evals = sb.bench_hard(1, 1, (4, 4, 4), 10, SeededRng(0, 1), warmup=1)
        assert mean > 0 and evals == 1

    def test_softmax_time_roughly_linear_in_memory(self):
        dims = (256, 256, 256)
        short = sb.bench_softmax(50, 50, dims, 10, SeededRng(0, 1))[0]
        long = sb.bench_softmax(200, 50, dims, 10, SeededRng(0, 1))[0]
        # 4x the memory: within a factor 2 of proportional
        assert 2.0 <= long / short <= 8.0

    def test_doubling_trials_is_stable(self):
        dims = (64, 64, 64)
        a = sb.bench_softmax(50, 100, dims, 10, SeededRng(0, 1))[0]
        b = sb.bench_softmax(50, 100, dims, 20, SeededRng(0, 1))[0]
        assert abs(b - a) / a < 0.2

    def test_bench_cell_fields(self):
        cfg = sb.BenchConfig(T_values=[10], U_values=[30], d_h=8, d_s=8, d_a=8, trials=10)
        cell = sb.bench_cell(10, 30, cfg, 0)
        assert cell.speedup == cell.softmax_s / cell.hard_s
        assert cell.softmax_energy_evals == 300 and cell.hard_energy_evals <= 40
        assert min(cell.softmax_s, cell.hard_s, cell.median_speedup) > 0


@pytest.fixture(scope="module")
def grid():
    cfg = sb.BenchConfig(d_h=4, d_s=4, d_a=4, trials=10, warmup=1)
    return cfg, sb.speedup_grid(cfg)


class TestResults:
    def test_full_grid_shape(self, grid, tmp_path):
        cfg, cells = grid
        path = tmp_path / "bench.csv"
        sb.append_results(path, sb.grid_to_csv(cells, sb.metadata(cfg)))
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# speedbench ")
        assert lines[1] == "T,U,softmax_s,hard_s,speedup,hard_energy_evals"
        assert len(lines) == 22
        rows = sb.read_grid_csv(path)
        assert [(int(r["T"]), int(r["U"])) for r in rows] == [(T, U) for T in cfg.T_values
                                                              for U in cfg.U_values]
        assert all(int(r["hard_energy_evals"]) <= int(r["T"]) + int(r["U"]) for r in rows)

    def test_metadata_echoes_config(self, grid):
        cfg, _ = grid
        meta = sb.metadata(cfg)
        assert meta["seed"] == 0 and meta["config"]["trials"] == 10
        assert "uniform" in meta["p_scheme"] and meta["timestamp"]

    def test_results_file_is_append_only(self, grid, tmp_path):
        cfg, cells = grid
        path = tmp_path / "bench.csv"
        first = sb.grid_to_csv(cells[:2], sb.metadata(cfg))
        sb.append_results(path, first)
        sb.append_results(path, sb.grid_to_csv(cells[2:5], sb.metadata(cfg)))
        text = path.read_text()
        assert text.startswith(first) and text.count("# speedbench") == 2
        assert len(sb.read_grid_csv(path)) == 3

    def test_json_matches_cells(self, grid):
        cfg, cells = grid
        doc = json.loads(sb.grid_to_json(cells, sb.metadata(cfg)))
        assert len(doc["cells"]) == 20
        assert doc["cells"][0]["speedup"] == cells[0].speedup
        assert {"median_speedup", "softmax_median_s", "hard_median_s"} <= set(doc["cells"][0])
