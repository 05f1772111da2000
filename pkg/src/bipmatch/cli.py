"""Command line entry point ``bipmatch``.

Exit codes: 0 on success, 2 for configuration errors, 3 for data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from .baselines import collapse, collapse_and_match
from .errors import BipmatchError, ConfigError, DataFormatError
from .experiment import (METHODS, SCENARIOS, ExperimentConfig, emit_outputs, make_instance,
                         run_experiment, sample_data, summarize)
from .formats import load_external, read_seeds_tsv, write_bipartite_csv, write_graph_tsv
from .graphs import SeedSet
from .matcher import MatchConfig, match_invcov, match_pseudo
from .models import BipartiteData, Family

EXIT_CONFIG = 2
EXIT_DATA = 3
MATCH_METHODS = tuple(m for m in METHODS if not m.startswith("brute"))


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bipmatch", description="Match a unipartite graph to a bipartite network.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment described by a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="output directory (overrides output_dir in the config)")

    match = sub.add_parser("match", help="match a graph TSV to a bipartite CSV")
    match.add_argument("--graph", required=True)
    match.add_argument("--bipartite", required=True)
    match.add_argument("--method", required=True, choices=MATCH_METHODS)
    match.add_argument("--seeds")
    match.add_argument("--out")
    match.add_argument("--min-degree-b", type=float)
    match.add_argument("--degree-band", type=float, nargs=2, metavar=("LOW", "HIGH"))
    match.add_argument("--largest-cc", action="store_true")
    match.add_argument("--drop-collinear", action="store_true")

    sim = sub.add_parser("simulate", help="run a built-in simulation scenario")
    sim.add_argument("--scenario", required=True, choices=[s for s in SCENARIOS if s != "external-data"])
    sim.add_argument("--n", type=int)
    sim.add_argument("--m", type=int, nargs="+", default=[1000], help="one or more sample sizes")
    sim.add_argument("--family", choices=["gaussian", "ising"])
    sim.add_argument("--theta", type=float)
    sim.add_argument("--p", type=float, default=0.05)
    sim.add_argument("--replicates", type=int, default=1)
    sim.add_argument("--seed-fractions", type=float, nargs="+", default=[0.0])
    sim.add_argument("--methods", nargs="+", default=None, choices=METHODS)
    sim.add_argument("--seed", type=int, default=0, help="master random seed")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--asymmetric", action="store_true", help="reject graphs with non-trivial automorphisms")
    sim.add_argument("--out")
    sim.add_argument("--write-instance", metavar="DIR",
                     help="also write replicate 0 (graph.tsv, bipartite.csv) for use with 'match'")
    return parser


def _report(rows, summary, out) -> None:
    failed = sum(r.status != "ok" for r in rows)
    print(f"{len(rows)} rows ({failed} failed)")
    for rec in summary:
        if rec["metric"] in ("vertex_error", "edge_error"):
            se = "" if rec["se"] is None else f" +/- {rec['se']:.3f}"
            print(f"{rec['method']:>10} m={rec['m']:<6} seeds={rec['seed_fraction']:<5g} "
                  f"{rec['metric']}={rec['mean']:.3f}{se}")
    if out:
        print(f"outputs written to {out}")


def _execute(cfg: ExperimentConfig, out) -> None:
    rows = run_experiment(cfg)
    summary = summarize(rows)
    if out:
        emit_outputs(rows, summary, out, cfg)
    _report(rows, summary, out)


def cmd_run(args) -> None:
    cfg = ExperimentConfig.from_json(args.config)
    _execute(cfg, args.out or cfg.output_dir)


def cmd_simulate(args) -> None:
    default_methods = {"thm2-check": ["brute-mle", "brute-omp"], "fig2-beta": ["brute-mle", "brute-omp"],
                       "fig2-theta": ["brute-mle", "brute-omp"]}
    cfg = ExperimentConfig(
        scenario=args.scenario, n=args.n, m_grid=args.m, family=args.family, theta=args.theta, p=args.p,
        replicates=args.replicates, seed_fractions=args.seed_fractions,
        methods=args.methods or default_methods.get(args.scenario, ["b-invcov", "c-omp"]),
        master_seed=args.seed, output_dir=args.out, workers=args.workers, asymmetric=args.asymmetric)
    if args.write_instance:
        inst = make_instance(cfg, 0)
        data = sample_data(cfg, inst, 0, 0, cfg.m_grid[0])
        target = Path(args.write_instance)
        target.mkdir(parents=True, exist_ok=True)
        write_graph_tsv(inst.graph, target / "graph.tsv")
        write_bipartite_csv(data, target / "bipartite.csv")
        (target / "truth.tsv").write_text("".join(f"{k}\t{v}\n" for k, v in enumerate(inst.p_star.map)))
    _execute(cfg, args.out)


def cmd_match(args) -> None:
    graph, data = load_external(args.graph, args.bipartite, args.min_degree_b,
                                tuple(args.degree_band) if args.degree_band else None,
                                args.largest_cc, args.drop_collinear)
    seeds = read_seeds_tsv(args.seeds) if args.seeds else SeedSet.empty()
    try:
        seeds.check_size(graph.n)
    except BipmatchError as exc:
        raise DataFormatError(f"{args.seeds}: {exc}") from exc
    info = {"method": args.method, "n": graph.n, "m": data.m, "seeds": len(seeds)}
    if args.method in ("b-invcov", "b-pseudo"):
        cfg = MatchConfig(seeds=seeds)
        if args.method == "b-invcov":
            result = match_invcov(graph, BipartiteData(data.b, Family.GAUSSIAN), cfg)
        else:
            result = match_pseudo(graph, data, cfg)
        perm = result.p_hat
        info.update(lambda_star=result.lambda_star, selection_score=result.selection_score,
                    failed_lambdas=result.failed_lambdas())
    else:
        collapsed = collapse(data, args.method[2:])
        perm = collapse_and_match(graph, collapsed, seeds)
        info["lambda_star"] = collapsed.lam
    lines = "".join(f"{k}\t{v}\n" for k, v in enumerate(perm.map))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "permutation.tsv").write_text(lines)
        (out / "match.json").write_text(json.dumps(info, indent=2) + "\n")
    sys.stdout.write(lines)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    handlers = {"run": cmd_run, "match": cmd_match, "simulate": cmd_simulate}
    try:
        handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BipmatchError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
