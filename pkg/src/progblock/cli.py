"""Command line entry point: ``progblock run|blocks|eval|synth``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .blocking import build_blocks, load_blocks, write_blocks
from .comparison import load_edges, write_edges
from .evaluation import clustering_metrics, evaluate
from .records import (BB_METHODS, DataFormatError, PipelineConfig, load_dataset, load_ground_truth,
                      parse_config_text, write_dataset, write_ground_truth)
from .synth import (GeometricModel, NoisyEdgeModel, NoisyPrior, blocking_graph_edge_count,
                    generate_geometric, generate_noisy_instance)

# keys a run config may carry besides the PipelineConfig fields
RUN_KEYS = ("data", "truth", "format", "blocks", "noisy_model", "edges", "clusters")

EXIT_CONVERGED = 0
EXIT_ERROR = 1
EXIT_ROUND_LIMIT = 2


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_run_config(path) -> tuple[PipelineConfig, dict]:
    """Split a key=value file into a PipelineConfig and the run's file keys.
    Relative paths are taken relative to the config file."""
    path = Path(path)
    raw = parse_config_text(path.read_text(encoding="utf-8"))
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(raw) - known - set(RUN_KEYS)
    if unknown:
        raise DataFormatError(f"{path}: unknown config keys {sorted(unknown)}")
    cfg = PipelineConfig.from_mapping({k: v for k, v in raw.items() if k in known})
    extra = {k: v for k, v in raw.items() if k in RUN_KEYS}
    for k in ("data", "truth", "blocks", "noisy_model", "edges", "clusters"):
        if k in extra:
            extra[k] = _resolve(path.parent, extra[k])
    if "data" not in extra or "truth" not in extra:
        raise DataFormatError(f"{path}: 'data' and 'truth' are required")
    return cfg, extra


def load_noisy_model(path) -> NoisyEdgeModel:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return NoisyEdgeModel(int(d["n"]), float(d["theta"]), float(d["beta"]), float(d["beta_prime"]),
                          int(d.get("seed", 0)), d.get("reading", "mirrored"))


def cmd_run(args) -> int:
    from .pipeline import run_pblocking

    cfg, extra = load_run_config(args.config)
    rs = load_dataset(extra["data"], extra.get("format"))
    gt = load_ground_truth(extra["truth"], rs.n)
    base = load_blocks(extra["blocks"], rs.n) if "blocks" in extra else None
    prior = NoisyPrior(load_noisy_model(extra["noisy_model"]), gt.cluster_of) if "noisy_model" in extra else None
    res = run_pblocking(rs, gt, cfg, prior=prior, base=base, top_blocks=args.top_blocks)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for t in res.traces:
                fh.write(json.dumps(t.to_dict()) + "\n")
    edges = args.edges or extra.get("edges")
    if edges:
        write_edges(res.graph, edges)
    if extra.get("clusters"):
        write_ground_truth(type(gt).from_labels(res.state.labels().tolist()), extra["clusters"])
    summary = {"rounds": res.rounds, "converged": res.converged, "edges": len(res.graph),
               "pair_recall": res.final_pair_recall, "fscore": res.final_fscore,
               "queries": res.state.queries_spent}
    print(json.dumps(summary))
    return EXIT_CONVERGED if res.converged else EXIT_ROUND_LIMIT


def cmd_blocks(args) -> int:
    rs = load_dataset(args.data, args.format)
    blocks = build_blocks(rs, args.method, q=args.q, w=args.w, canopy_threshold=args.threshold,
                          seed=args.seed)
    if args.out:
        write_blocks(blocks, args.out)
    sizes = blocks.sizes()
    print(json.dumps({"method": args.method, "records": rs.n, "blocks": len(blocks),
                      "pairs": blocks.pair_count(), "max_size": int(sizes.max()) if len(sizes) else 0,
                      "size_histogram": blocks.size_histogram()}))
    return 0


def cmd_eval(args) -> int:
    gt = load_ground_truth(args.truth)
    graph = load_edges(args.graph, gt.n)
    m = evaluate(graph, gt)
    out = {"pair_recall": m.pair_recall, "candidates": m.candidates}
    if args.clusters:
        pred = load_ground_truth(args.clusters, gt.n)
        c = clustering_metrics(pred.cluster_of, gt)
        out.update(precision=c.precision, recall=c.recall, fscore=c.fscore)
    print(json.dumps(out))
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.model == "geometric":
        if args.n % args.cluster_size:
            raise DataFormatError("--n must be a multiple of --cluster-size")
        m = GeometricModel(args.n, args.t, args.alpha, (args.cluster_size,) * (args.n // args.cluster_size),
                           args.seed, args.clustered_placement)
        rs, blocks, gt = generate_geometric(m)
        meta = {"model": "geometric", "n": m.n, "t": m.t, "alpha": m.alpha, "cluster_size": args.cluster_size,
                "seed": m.seed, "clustered_placement": m.clustered_placement,
                "blocking_graph_edges": blocking_graph_edge_count(blocks)}
    else:
        inst = generate_noisy_instance(args.n, max(1, args.n // args.cluster_size), theta=args.theta,
                                       beta_scale=args.beta_scale, seed=args.seed, reading=args.reading)
        rs, blocks, gt = inst.records, inst.blocks, inst.truth
        mdl = inst.model
        meta = {"model": "noisy", "n": mdl.n, "theta": mdl.theta, "beta": mdl.beta,
                "beta_prime": mdl.beta_prime, "seed": mdl.seed, "reading": mdl.reading,
                "mu_g": mdl.mu_g, "mu_r": mdl.mu_r}
        (out / "noisy_model.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    write_dataset(rs, out / "records.csv")
    write_blocks(blocks, out / "blocks.csv")
    write_ground_truth(gt, out / "truth.csv")
    lines = ["data = records.csv", "truth = truth.csv", "blocks = blocks.csv"]
    if args.model == "noisy":
        lines += ["noisy_model = noisy_model.json", "phi = 0.05"]
    else:
        lines += ["phi = 1"]
    (out / "run.cfg").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(json.dumps(meta))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="progblock", description="Progressive blocking for entity resolution.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the feedback loop from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--trace", help="write one json object per round here")
    r.add_argument("--edges", help="dump the final blocking graph as u,v,weight csv")
    r.add_argument("--top-blocks", type=int, default=0, help="include the top blocks in each trace line")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("blocks", help="build first-layer blocks and print a summary")
    b.add_argument("--method", required=True, choices=BB_METHODS)
    b.add_argument("--data", required=True)
    b.add_argument("--format", choices=("csv", "jsonl"))
    b.add_argument("--out", help="write block,record_id csv")
    b.add_argument("--q", type=int, default=3)
    b.add_argument("--w", type=int, default=3)
    b.add_argument("--threshold", type=float, default=0.5)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_blocks)

    e = sub.add_parser("eval", help="pair recall of an edge list against ground truth")
    e.add_argument("--graph", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--clusters", help="predicted record_id,entity_id csv for pairwise F")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="generate a synthetic instance")
    s.add_argument("--model", required=True, choices=("geometric", "noisy"))
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--cluster-size", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--t", type=int, default=2)
    s.add_argument("--alpha", type=float, default=2.0)
    s.add_argument("--clustered-placement", action="store_true")
    s.add_argument("--theta", type=float, default=0.5)
    s.add_argument("--beta-scale", type=float, default=1.0)
    s.add_argument("--reading", choices=("mirrored", "literal"), default="mirrored")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataFormatError, ValueError, OSError, RuntimeError) as exc:
        print(f"progblock: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
