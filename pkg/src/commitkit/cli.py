"""``commitkit`` command line.

    commitkit gen|discretize|query-study|joint-value|protocol-sim \\
        --config cfg.json --seed 7 --out results/

Each study writes ``<command>.csv`` (reproducible from config and seed),
``<command>_timings.csv`` (wall clock), ``<command>_summary.json`` (means and
standard errors) and a copy of the resolved config. ``COMMITKIT_THREADS`` caps
the number of worker processes.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import bench

SUMMARY_KEYS = {
    "discretize": [(("kind",), "size"), (("kind", "k", "method"), "eus_norm"),
                   (("kind", "k", "method"), "eus")],
    "query-study": [(("prior", "round", "k0", "k", "method"), "eus_norm"),
                    (("prior", "round", "k0", "k", "method"), "eus")],
    "joint-value": [(("method",), "normalized"), (("method",), "ratio")],
    "protocol-sim": [(("k",), "joint_value"), (("k",), "query_bytes")],
}
TIMING_KEYS = {
    "discretize": [(("kind",), "build_eval_ms"), (("kind", "k", "method"), "query_ms")],
    "query-study": [(("prior", "k", "method"), "query_ms")],
}


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="commitkit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("gen", *bench.STUDIES):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None,
                       help="JSON experiment config (defaults are used when omitted)")
        p.add_argument("--seed", type=_u64, default=0)
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def write_csv(path: Path, rows: list[dict]) -> None:
    cols: list[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def run(command: str, cfg: bench.ExperimentConfig, seed: int, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps({"command": command, "seed": seed,
                                                 **cfg.to_dict()}, indent=1, sort_keys=True))
    if command == "gen":
        dirs = bench.generate_corpus(cfg, seed, out)
        return {"instances": dirs}
    rows, timings = bench.map_instances(bench.STUDIES[command], cfg, seed)
    write_csv(out / f"{command}.csv", rows)
    if timings:
        write_csv(out / f"{command}_timings.csv", timings)
    summary = {"rows": len(rows)}
    for by, col in SUMMARY_KEYS[command]:
        summary[f"{col} by {','.join(by)}"] = bench.summarize(rows, by, col)
    for by, col in TIMING_KEYS.get(command, []):
        summary[f"{col} by {','.join(by)}"] = bench.summarize(timings, by, col)
    (out / f"{command}_summary.json").write_text(json.dumps(summary, indent=1))
    return summary


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = bench.ExperimentConfig.load(args.config) if args.config else bench.ExperimentConfig()
    except (OSError, json.JSONDecodeError, bench.ConfigError, TypeError) as e:
        print(f"commitkit: bad config: {e}", file=sys.stderr)
        return 2
    summary = run(args.command, cfg, args.seed, args.out)
    print(json.dumps({k: v for k, v in summary.items() if k in ("rows", "instances")}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
