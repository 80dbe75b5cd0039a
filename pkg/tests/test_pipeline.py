import json

import numpy as np
import pytest

from progblock.cli import main
from progblock.comparison import BlockingGraph, build_graph, effective_budget
from progblock.hierarchy import BlockHierarchy
from progblock.blocking import standard_blocking
from progblock.pipeline import converged, round_quota, run_pblocking
from progblock.records import GroundTruth, PipelineConfig
from progblock.scoring import SimilarityStore, score_blocks
from progblock.similarity import JaccardPrior
from progblock.synth import generate_noisy_instance


def test_converged_ignores_weights():
    a = BlockingGraph.from_pairs(4, [0, 1], [1, 2], [1.0, 2.0])
    assert converged(a, BlockingGraph.from_pairs(4, [1, 0], [2, 1], [5.0, 0.1]))
    assert not converged(a, BlockingGraph.from_pairs(4, [0, 1, 2], [1, 2, 3]))


def test_round_quota():
    assert round_quota(1024, 0.01) == int(np.ceil(0.01 * 1024 * 100))
    assert round_quota(2, 0.001) == 1


def test_phi_one_equals_baseline(cars8):
    rs, gt = cars8
    cfg = PipelineConfig(phi=1.0)
    res = run_pblocking(rs, gt, cfg, finish_er=False)
    assert len(res.traces) == 1 and res.state.queries_spent == 0
    base = standard_blocking(rs)
    h = BlockHierarchy(base, cfg.hierarchy_depth_d)
    sim = SimilarityStore(JaccardPrior.from_records(rs), rs.n)
    H, _ = build_graph(h, score_blocks(h, sim, cfg, 1), sim, effective_budget(rs.n, cfg.pair_budget_M),
                       cfg.top_k_per_record)
    assert np.array_equal(H.keys, res.graph.keys)
    assert np.array_equal(H.weights, res.graph.weights)


def test_cars8_converges_at_round_two(cars8):
    rs, gt = cars8
    res = run_pblocking(rs, gt, PipelineConfig(phi=0.25))
    assert res.converged and res.rounds == 2
    assert res.final_pair_recall == 1.0 and res.final_fscore == 1.0


def test_round_limit():
    inst = generate_noisy_instance(300, 6, seed=1)
    res = run_pblocking(inst.records, inst.truth, PipelineConfig(phi=0.01, pair_budget_M=3000),
                        prior=inst.prior(), base=inst.blocks)
    assert res.rounds <= 100
    assert all(t.round == i + 1 for i, t in enumerate(res.traces))


def test_deterministic_trace():
    inst = generate_noisy_instance(300, 6, seed=4)
    cfg = PipelineConfig(phi=0.2, pair_budget_M=3000, oracle_error_rate=0.1)
    runs = [run_pblocking(inst.records, inst.truth, cfg, prior=inst.prior(), base=inst.blocks) for _ in range(2)]
    strip = [[{k: v for k, v in t.to_dict().items() if k != "wall_ms"} for t in r.traces] for r in runs]
    assert strip[0] == strip[1]
    assert np.array_equal(runs[0].state.labels(), runs[1].state.labels())


def test_node_er_pipeline_runs():
    inst = generate_noisy_instance(300, 6, seed=4)
    for unit in ("pairs", "records"):
        cfg = PipelineConfig(phi=0.2, pair_budget_M=3000, er_method="node", node_progress=unit)
        res = run_pblocking(inst.records, inst.truth, cfg, prior=inst.prior(), base=inst.blocks)
        assert res.final_pair_recall > 0.5


def test_ground_truth_size_checked(cars8):
    rs, _ = cars8
    with pytest.raises(ValueError):
        run_pblocking(rs, GroundTruth.from_labels([0, 1]), PipelineConfig())


def test_trace_fields(cars8):
    rs, gt = cars8
    t = run_pblocking(rs, gt, PipelineConfig(phi=0.5)).traces[0].to_dict()
    for key in ("round", "pair_recall", "candidates_emitted", "er_queries", "fscore"):
        assert key in t


# command line

def write_cfg(tmp_path, cars8_dir, **extra):
    lines = [f"data = {cars8_dir / 'cars8.csv'}", f"truth = {cars8_dir / 'cars8_truth.csv'}"]
    lines += [f"{k} = {v}" for k, v in extra.items()]
    p = tmp_path / "run.cfg"
    p.write_text("\n".join(lines) + "\n")
    return p


def test_cli_run_converges(tmp_path, capsys):
    from conftest import FIXTURES
    cfg = write_cfg(tmp_path, FIXTURES, phi=0.25)
    trace = tmp_path / "t.jsonl"
    edges = tmp_path / "e.csv"
    assert main(["run", "--config", str(cfg), "--trace", str(trace), "--edges", str(edges)]) == 0
    rows = [json.loads(x) for x in trace.read_text().splitlines()]
    assert [r["round"] for r in rows] == [1, 2]
    assert {"round", "pair_recall", "candidates_emitted", "er_queries", "fscore"} <= set(rows[0])
    assert edges.read_text().splitlines()[0] == "u,v,weight"
    summary = json.loads(capsys.readouterr().out)
    assert summary["converged"] is True


def test_cli_round_limit_exit_code(tmp_path, capsys):
    from conftest import FIXTURES
    cfg = write_cfg(tmp_path, FIXTURES, phi=1)
    assert main(["run", "--config", str(cfg)]) == 2


def test_cli_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("phi = 0.5\n")
    assert main(["run", "--config", str(p)]) == 1
    p.write_text("data = x\ntruth = y\nbogus = 1\n")
    assert main(["run", "--config", str(p)]) == 1


def test_cli_blocks(capsys):
    from conftest import FIXTURES
    assert main(["blocks", "--method", "standard", "--data", str(FIXTURES / "cars8.csv")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["blocks"] == 8 and out["records"] == 8


def test_cli_eval(tmp_path, capsys):
    from conftest import FIXTURES
    (tmp_path / "g.csv").write_text("u,v,weight\n0,1,1.0\n1,2,0.5\n")
    assert main(["eval", "--graph", str(tmp_path / "g.csv"), "--truth", str(FIXTURES / "cars8_truth.csv")]) == 0
    text = capsys.readouterr().out
    assert "NaN" not in text
    out = json.loads(text)
    assert out["pair_recall"] == pytest.approx(3 / 6) and out["candidates"] == 2


def test_cli_synth_then_run(tmp_path, capsys):
    out = tmp_path / "noisy"
    assert main(["synth", "--model", "noisy", "--out", str(out), "--n", "300", "--cluster-size", "50"]) == 0
    for f in ("records.csv", "blocks.csv", "truth.csv", "noisy_model.json", "run.cfg"):
        assert (out / f).exists()
    code = main(["run", "--config", str(out / "run.cfg"), "--trace", str(tmp_path / "t.jsonl")])
    assert code in (0, 2)
    geo = tmp_path / "geo"
    assert main(["synth", "--model", "geometric", "--out", str(geo), "--n", "200", "--cluster-size", "20"]) == 0
    assert main(["run", "--config", str(geo / "run.cfg")]) == 2
