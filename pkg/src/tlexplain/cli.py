"""Command-line entry point: run orchestration and result export.

Subcommands::

    tlexplain search    --config run.yaml [--out DIR] [--seed N] [--workers N]
    tlexplain oracle    --config run.yaml [--out DIR] [--force]
    tlexplain enumerate --config run.yaml [--list]
    tlexplain eval      --config run.yaml "F(...) & G(...)"
    tlexplain trace-dot TRACE.jsonl [--out FILE]

Exit statuses: 0 ok, 2 config/IO error, 3 guarded operation refused,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import yaml

from . import formula as fm
from .config import SCHEMA_VERSION, ConfigError, RunConfig, build_runtime, load_config
from .search import brute_force_oracle, multi_start

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REFUSED = 3
EXIT_INTERNAL = 4

RESULT_COLUMNS = ("rank", "explanation", "wkl", "utility", "mean_return",
                  "filtered", "searched_specs_pct", "restart_id", "seed")


class RefusedError(RuntimeError):
    pass


class MalformedTraceError(ValueError):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.search.seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    if getattr(args, "out", None) is not None:
        cfg.output = args.out
    return cfg


def _write_manifest(cfg: RunConfig, out_dir: Path) -> None:
    manifest = yaml.safe_dump(cfg.to_dict(), sort_keys=True)
    (out_dir / "manifest.yaml").write_text(manifest)


def cmd_search(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    runtime = build_runtime(cfg)
    result = multi_start(runtime.evaluator, cfg.search)
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_manifest(cfg, out_dir)

    with (out_dir / "results.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for rank, res in enumerate(result.results, start=1):
            rec = res.record
            writer.writerow([
                rank, res.key or "", _fmt(rec.wkl if rec else None),
                _fmt(res.utility), _fmt(rec.mean_return if rec else None),
                _fmt(bool(rec.filtered) if rec else True),
                _fmt(100.0 * res.searched_frac), res.restart, cfg.seed,
            ])

    with (out_dir / "trace.jsonl").open("w") as fh:
        for node in result.traces:
            fh.write(json.dumps({
                "schema_version": SCHEMA_VERSION, "node_id": node.node_id,
                "restart": node.restart, "step": node.step, "key": node.key,
                "utility": node.utility, "filtered": node.filtered,
                "parent": node.parent, "move": node.move,
            }, sort_keys=True) + "\n")

    print(f"searched {100.0 * result.overall_searched_frac:.2f}% of "
          f"{result.denominator} explanations over {cfg.search.n_search} restarts")
    print(f"{'rank':>4}  {'wKL':>12}  {'searched%':>9}  explanation")
    for rank, res in enumerate(result.results, start=1):
        wkl = res.record.wkl if res.record else None
        print(f"{rank:>4}  {_fmt(wkl):>12}  {100.0 * res.searched_frac:>9.2f}  {res.key}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    runtime = build_runtime(cfg)
    if len(runtime.predicates) > 4 and not args.force:
        raise RefusedError(
            f"oracle over {len(runtime.predicates)} predicates is expensive; "
            "pass --force to run it anyway")
    ranked, filtered = brute_force_oracle(runtime.evaluator,
                                         cap=cfg.search.enumeration_cap)
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "oracle.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("rank", "explanation", "wkl", "utility", "mean_return"))
        for rank, rec in enumerate(ranked, start=1):
            writer.writerow([rank, rec.key, _fmt(rec.wkl), _fmt(rec.utility),
                             _fmt(rec.mean_return)])
        fh.write(f"# filtered: {len(filtered)}\n")
    for rank, rec in enumerate(ranked[:10], start=1):
        print(f"{rank:>4}  {_fmt(rec.wkl):>12}  {rec.key}")
    print(f"({len(ranked)} ranked, {len(filtered)} filtered)")
    return EXIT_OK


def cmd_enumerate(args) -> int:
    cfg = load_config(args.config)
    from .config import build_env, build_predicates
    predicates = build_predicates(cfg, build_env(cfg))
    explanations = fm.enumerate_all(predicates, cap=cfg.search.enumeration_cap)
    print(len(explanations))
    if args.list:
        for canon in explanations:
            print(fm.render(canon, predicates))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    runtime = build_runtime(cfg)
    canon = fm.parse_explanation(args.explanation, runtime.predicates)
    rec = runtime.evaluator.evaluate(canon)
    print(f"explanation:  {rec.key}")
    print(f"mean return:  {_fmt(rec.mean_return)}")
    if rec.filtered:
        print("filtered:     true (failed the return filter)")
    else:
        print(f"wKL:          {_fmt(rec.wkl)}")
        print(f"utility:      {_fmt(rec.utility)}")
    return EXIT_OK


def cmd_trace_dot(args) -> int:
    trace_path = Path(args.trace)
    if not trace_path.exists():
        raise ConfigError(f"trace file not found: {trace_path}")
    nodes = []
    for lineno, line in enumerate(trace_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            node = json.loads(line)
            nodes.append((node["node_id"], node["restart"], node["key"],
                          node.get("utility"), node["filtered"],
                          node.get("parent"), node["move"]))
        except (json.JSONDecodeError, KeyError) as exc:
            raise MalformedTraceError(f"{trace_path}:{lineno}: {exc}") from exc

    # extension edges are dashed, expansion edges dotted
    styles = {"flip": "solid", "expansion": "dotted", "extension": "dashed"}
    lines = ["digraph search_trace {", "  node [shape=box, fontsize=10];"]
    last_node_for = {}
    for node_id, restart, key, utility, filtered, parent, move in nodes:
        label = key.replace('"', r"\"")
        score = "filtered" if filtered else f"wKL {-utility:.3g}"
        lines.append(f'  n{node_id} [label="{label}\\n{score}"];')
        if parent is not None and (restart, parent) in last_node_for:
            style = styles.get(move, "solid")
            lines.append(f"  n{last_node_for[(restart, parent)]} -> n{node_id} "
                         f'[style={style}, label="{move}"];')
        last_node_for[(restart, key)] = node_id
    lines.append("}")
    dot = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(dot)
    else:
        sys.stdout.write(dot)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tlexplain", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="run configuration YAML")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--seed", type=int, help="global seed override")
        p.add_argument("--workers", type=int, help="evaluation worker count")

    p = sub.add_parser("search", help="run the multi-start greedy search")
    common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("oracle", help="rank every explanation by brute force")
    common(p)
    p.add_argument("--force", action="store_true",
                   help="allow oracle runs with more than 4 predicates")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("enumerate", help="count canonical explanations")
    p.add_argument("--config", required=True)
    p.add_argument("--list", action="store_true", help="print every explanation")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("eval", help="score one explanation against the target")
    common(p)
    p.add_argument("explanation", help='rendered form, e.g. "F(psi0) & G(!psi1)"')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trace-dot", help="convert a trace JSONL to a DOT graph")
    p.add_argument("trace", help="trace.jsonl produced by the search command")
    p.add_argument("--out", help="write the DOT graph here instead of stdout")
    p.set_defaults(func=cmd_trace_dot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RefusedError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except (ConfigError, MalformedTraceError, fm.ExplanationParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - invariant violations get status 4
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
