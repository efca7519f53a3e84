"""Experiment runner CLI: run simulations, render reports, compare runs.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
missing inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import rng as rngmod
from .config import ExperimentConfig, load_config
from .data import Dataset, load_idx
from .errors import ConfigError
from .metrics import MetricsLog, plateau_delay, reach_90
from .rng import master_stream
from .simulator import run_federated, run_gossip
from .topology import Graph, build_regular, build_star, edge_list_text

ACCURACY_CSV = "accuracy.csv"
VARIANCE_CSV = "variance.csv"
WEIGHT_DIFF_CSV = "weight_diff.csv"
SUMMARY_JSON = "summary.json"
TOPOLOGY_TXT = "topology.txt"


def build_graph(cfg: ExperimentConfig) -> Graph:
    topo = cfg.topology
    if topo.kind == "star":
        return build_star(topo.n)
    # temporal runs gossip over a regular baseline whose edges start dormant
    return build_regular(topo.n, topo.k, master_stream(cfg.sim.seed, rngmod.TOPOLOGY))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def summarize(log: MetricsLog, cfg: ExperimentConfig) -> dict:
    server = log.annotations.get("server_node")
    exclude = {server} if server is not None else None
    t_first = log.annotations.get("t_first_average")

    plateau = None
    degenerate = None
    if t_first is not None:
        ticks, means = log.mean_accuracy_series(exclude=exclude)
        try:
            report = plateau_delay(ticks, means, t_first)
            plateau = report.t_plateau_delay
            degenerate = report.degenerate
        except ValueError:
            pass  # series too short; leave null

    node_rows = [r for r in log.accuracy_rows if exclude is None or r[1] not in exclude]
    first_90, most_90 = reach_90(node_rows) if node_rows else (None, None)

    summary = {
        "mode": cfg.mode,
        "seed": cfg.sim.seed,
        "n_nodes": cfg.topology.n,
        "max_ticks": cfg.sim.max_ticks,
        "eval_interval": cfg.sim.eval_interval,
        "t_first_average": t_first,
        "plateau_delay": plateau,
        "plateau_degenerate": degenerate,
        "first_90": first_90,
        "most_90": most_90,
        "config_digest": cfg.digest(),
        "config": cfg.to_dict(),
    }
    if server is not None:
        server_rows = [r for r in log.accuracy_rows if r[1] == server]
        s_first, _ = reach_90(server_rows) if server_rows else (None, None)
        summary["server_node"] = server
        summary["server_first_90"] = s_first
    return summary


def write_outputs(out_dir: Path, log: MetricsLog, cfg: ExperimentConfig, graph: Graph) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / ACCURACY_CSV, ["tick", "node", "accuracy"], log.accuracy_rows)
    _write_csv(out_dir / VARIANCE_CSV, ["tick", "node", "layer", "variance"], log.variance_rows)
    _write_csv(out_dir / WEIGHT_DIFF_CSV, ["tick", "layer", "diff"], log.weight_diff_rows)
    with open(out_dir / SUMMARY_JSON, "w") as f:
        json.dump(summarize(log, cfg), f, indent=2, sort_keys=True)
        f.write("\n")
    (out_dir / TOPOLOGY_TXT).write_text(edge_list_text(graph))


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    train = load_idx(cfg.data.images, cfg.data.labels).subset(cfg.data.train_subset)
    test = load_idx(cfg.data.test_images, cfg.data.test_labels).subset(cfg.data.test_subset)
    graph = build_graph(cfg)
    sim_cfg = cfg.sim_config()
    if cfg.mode == "federated":
        log = run_federated(sim_cfg, graph, train, test)
    else:
        log = run_gossip(sim_cfg, graph, train, test)
    out_dir = Path(args.out or cfg.output_dir)
    write_outputs(out_dir, log, cfg, graph)
    print(f"run complete: {out_dir}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    from . import plots  # deferred: matplotlib import is slow

    run_dir = Path(args.run_dir)
    paths = {name: run_dir / name for name in (ACCURACY_CSV, VARIANCE_CSV, WEIGHT_DIFF_CSV)}
    for name, path in paths.items():
        if not path.exists():
            raise ConfigError(f"missing input: {path}")

    acc_rows = [(int(r["tick"]), int(r["node"]), float(r["accuracy"]))
                for r in _read_csv(paths[ACCURACY_CSV])]
    var_rows = [(int(r["tick"]), int(r["node"]), r["layer"], float(r["variance"]))
                for r in _read_csv(paths[VARIANCE_CSV])]
    diff_rows = [(int(r["tick"]), r["layer"], float(r["diff"]))
                 for r in _read_csv(paths[WEIGHT_DIFF_CSV])]
    if not acc_rows or not var_rows:
        raise ConfigError(f"{run_dir}: metrics CSVs contain no data rows")

    summary = {}
    summary_path = run_dir / SUMMARY_JSON
    if summary_path.exists():
        summary = json.loads(summary_path.read_text())

    plots.plot_accuracy(acc_rows, summary, run_dir / "accuracy.svg")
    plots.plot_variance(var_rows, run_dir / "variance.svg")
    plots.plot_weight_diff(diff_rows, run_dir / "weight_diff.svg")
    print(f"report written: {run_dir}/accuracy.svg variance.svg weight_diff.svg")
    return 0


def _ratio(a, b):
    """Speedup of run A over run B on a time-to-target metric."""
    if a is None or b is None or a == 0:
        return "absent"
    return b / a


def cmd_compare(args: argparse.Namespace) -> int:
    summaries = []
    for run_dir in (args.run_a, args.run_b):
        path = Path(run_dir) / SUMMARY_JSON
        if not path.exists():
            raise ConfigError(f"missing summary: {path}")
        summaries.append(json.loads(path.read_text()))
    a, b = summaries

    result = {"run_a": str(args.run_a), "run_b": str(args.run_b), "metrics": {}}
    print(f"{'metric':<16} {'a':>10} {'b':>10} {'speedup a/b':>12}")
    for key in ("plateau_delay", "first_90", "most_90"):
        ratio = _ratio(a.get(key), b.get(key))
        result["metrics"][key] = {"a": a.get(key), "b": b.get(key), "speedup": ratio}
        ratio_str = f"{ratio:.3f}" if isinstance(ratio, float) else ratio
        print(f"{key:<16} {str(a.get(key)):>10} {str(b.get(key)):>10} {ratio_str:>12}")

    out = Path(args.out)
    with open(out, "w") as f:
        json.dump(result, f, indent=2)
        f.write("\n")
    print(f"comparison written: {out}")
    return 0


def cmd_make_data(args: argparse.Namespace) -> int:
    from .synth import generate_idx_files  # deferred: pulls in Pillow

    paths = generate_idx_files(args.out_dir, args.train, args.test, args.seed)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gossipsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment from a YAML config")
    p_run.add_argument("config", help="path to experiment config")
    p_run.add_argument("--out", help="override output directory")
    p_run.set_defaults(func=cmd_run)

    p_report = sub.add_parser("report", help="render SVG charts for a finished run")
    p_report.add_argument("run_dir", help="directory written by 'run'")
    p_report.set_defaults(func=cmd_report)

    p_cmp = sub.add_parser("compare", help="compare timing metrics of two runs")
    p_cmp.add_argument("run_a")
    p_cmp.add_argument("run_b")
    p_cmp.add_argument("--out", default="compare.json", help="where to write compare.json")
    p_cmp.set_defaults(func=cmd_compare)

    p_data = sub.add_parser("make-data", help="generate the synthetic digit dataset (IDX files)")
    p_data.add_argument("out_dir")
    p_data.add_argument("--train", type=int, default=10000)
    p_data.add_argument("--test", type=int, default=2000)
    p_data.add_argument("--seed", type=int, default=7)
    p_data.set_defaults(func=cmd_make_data)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
