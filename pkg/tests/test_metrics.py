import csv
import json
import math

import numpy as np
import pytest

from kvlab.metrics import (
    analytic_occupancy,
    analytic_read_ratio,
    cost_report,
    reads_per_step,
    write_cost_report,
    write_occupancy_csv,
    write_trace_jsonl,
)
from kvlab.model import generate
from kvlab.policies import PolicySpec
from kvlab.scheduler import RpcConfig


class TestAnalyticOccupancy:
    def test_golden_schedule_value_after_first_event(self):
        occ = analytic_occupancy(RpcConfig(P=4, R=2, c=4, w=0), 6)
        assert list(occ) == [1, 2, 3, 4, 5, 3]

    def test_c1_grows_linearly(self):
        occ = analytic_occupancy(RpcConfig(P=8, R=2, c=1, w=0), 50)
        assert list(occ) == list(range(1, 51))

    def test_production_scale_after_fourth_event(self):
        cfg = RpcConfig(P=1024, R=32, c=4, w=3)
        occ = analytic_occupancy(cfg, 4 * 1024 + 32)
        assert occ[-1] == 4 * 1024 // 4 + 32 == 1056

    def test_sawtooth_shape(self):
        cfg = RpcConfig(P=5, R=2, c=2, w=0)
        occ = analytic_occupancy(cfg, 40)
        for t in range(2, 41):
            if (t - cfg.R) % cfg.P == 0 and t >= cfg.P + cfg.R:
                n = (t - cfg.R) // cfg.P
                assert occ[t - 1] == n * 5 // 2 + 2
            else:
                assert occ[t - 1] == occ[t - 2] + 1


class TestCostReport:
    def test_full_cache_reads_are_triangular(self, default_weights):
        steps, layers = 24, 4
        trace = generate(default_weights, [1], steps, PolicySpec(kind="FullCache"))
        report = cost_report(trace)
        assert report.total_key_reads_full == layers * steps * (steps + 1) // 2
        assert report.total_key_reads_policy == report.total_key_reads_full
        assert report.read_ratio == 1.0
        assert report.effective_compression_ratio == 1.0

    def test_reads_per_step_shifts_occupancy(self):
        reads = reads_per_step(np.array([1, 2, 3, 2]))
        assert list(reads) == [1, 2, 3, 4]

    def test_read_ratio_monotone_in_compression(self):
        cfg = {"P": 16, "R": 4, "w": 0}
        steps = 2 * (16 + 4) + 100
        ratios = [analytic_read_ratio(RpcConfig(c=c, **cfg), steps) for c in (1, 2, 4, 8)]
        assert ratios[0] == 1.0
        assert all(a > b for a, b in zip(ratios, ratios[1:]))

    @pytest.mark.parametrize("c", [2, 4, 8])
    def test_asymptotic_ratio_approaches_inverse_c(self, c):
        cfg = RpcConfig(P=32, R=8, c=c, w=0)
        assert abs(analytic_read_ratio(cfg, 32 * cfg.P) - 1 / c) < 0.1

    def test_empirical_occupancy_matches_analytic_everywhere(self, default_weights):
        for cfg in (RpcConfig(P=8, R=2, c=4, w=3), RpcConfig(P=5, R=5, c=2, w=1)):
            spec = PolicySpec(kind="RpcPeriodic", rpc=cfg)
            trace = generate(default_weights, [2, 3], 60, spec)
            expected = analytic_occupancy(cfg, 60)
            got = np.asarray(trace.occupancy)
            for layer in range(got.shape[1]):
                assert np.array_equal(got[:, layer], expected)

    def test_trace_cost_matches_analytic_prediction(self, default_weights):
        cfg = RpcConfig(P=8, R=2, c=4, w=3)
        trace = generate(default_weights, [2], 80, PolicySpec(kind="RpcPeriodic", rpc=cfg))
        report = cost_report(trace)
        assert math.isclose(report.read_ratio, analytic_read_ratio(cfg, 80), rel_tol=1e-12)


class TestWriters:
    def test_occupancy_csv_layout(self, default_weights, tmp_path):
        trace = generate(default_weights, [1], 3, PolicySpec(kind="FullCache"))
        path = tmp_path / "occ.csv"
        write_occupancy_csv(trace, path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["step", "layer", "occupancy"]
        assert rows[1] == ["1", "0", "1"]
        assert len(rows) == 1 + 3 * 4

    def test_trace_jsonl_embeds_events(self, default_weights, tmp_path):
        spec = PolicySpec(kind="RpcPeriodic", rpc=RpcConfig(P=4, R=2, c=4, w=3))
        trace = generate(default_weights, [1, 2, 3], 14, spec)
        path = tmp_path / "trace.jsonl"
        write_trace_jsonl(trace, path)
        records = [json.loads(line) for line in path.open()]
        assert len(records) == 14
        event_steps = [r["step"] for r in records if r["event"] is not None]
        assert event_steps == [6, 10, 14]
        assert records[5]["event"]["retained_budget"] == 1

    def test_cost_report_json_round_trip(self, default_weights, tmp_path):
        trace = generate(default_weights, [1], 10, PolicySpec(kind="FullCache"))
        path = tmp_path / "cost.json"
        write_cost_report(cost_report(trace), path)
        data = json.loads(path.read_text())
        assert data["read_ratio"] == 1.0
        assert set(data) == {"total_key_reads_full", "total_key_reads_policy",
                             "read_ratio", "effective_compression_ratio"}
