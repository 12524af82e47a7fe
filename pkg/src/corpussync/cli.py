"""Command-line front end.

Exit codes: 0 success, 2 user/config error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .campaign import Campaign
from .core import ConfigError, config_from_dict, validate_config
from .metrics import (
    FRACTIONS,
    CampaignReport,
    MixedTargets,
    best_coverage,
    message_log_csv,
    render_tables,
    samples_csv,
)
from .target import TargetError, dumps_target, expected_gate_count, generate_target, loads_target

EXIT_OK = 0
EXIT_USER = 2
EXIT_IO = 3


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


@dataclass
class RunManifest:
    config: Path
    target: Path
    out_dir: Path
    label: str
    overwrite: bool = False

    def outputs(self, with_log: bool) -> list[Path]:
        names = [f"{self.label}.samples.csv", f"{self.label}.report.json"]
        if with_log:
            names.append(f"{self.label}.msglog.csv")
        return [self.out_dir / n for n in names]


def _read_json(path: Path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path} is not valid JSON: {exc}", EXIT_IO) from exc


def load_config(path: Path):
    try:
        cfg = config_from_dict(_read_json(path))
    except ConfigError as exc:
        raise CliError("\n".join(exc.problems), EXIT_USER) from exc
    problems = validate_config(cfg)
    if problems:
        raise CliError("\n".join(problems), EXIT_USER)
    return cfg


def load_target(path: Path):
    data = _read_json(path)
    try:
        return loads_target(json.dumps(data))
    except TargetError as exc:
        raise CliError(str(exc), EXIT_USER) from exc


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}", EXIT_IO) from exc


def cmd_run(manifest: RunManifest) -> int:
    cfg = load_config(manifest.config)
    target = load_target(manifest.target)
    outputs = manifest.outputs(cfg.log_messages)
    existing = [p for p in outputs if p.exists()]
    if existing and not manifest.overwrite:
        raise CliError(
            f"outputs for label {manifest.label!r} already exist (use --overwrite)", EXIT_USER
        )
    try:
        manifest.out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {manifest.out_dir}: {exc.strerror or exc}", EXIT_IO) from exc
    try:
        report = Campaign(cfg, target, label=manifest.label).run()
    except ConfigError as exc:
        raise CliError("\n".join(exc.problems), EXIT_USER) from exc
    _write(outputs[0], samples_csv(report.samples))
    _write(outputs[1], report.to_json())
    if cfg.log_messages:
        _write(outputs[2], message_log_csv(report.message_log or []))
    print(
        f"{manifest.label}: final coverage {report.final_coverage}, "
        f"messages {report.messages_sent}, sync cost {report.sync_cost}, "
        f"ammuina rounds {len(report.ammuina_rounds)}"
    )
    return EXIT_OK


def cmd_compare(paths: Sequence[Path], fractions: Sequence[float], out: Path) -> int:
    if len(paths) < 2:
        raise CliError("need >= 2 reports to compare", EXIT_USER)
    reports = []
    for p in paths:
        try:
            reports.append(CampaignReport.from_dict(_read_json(p)))
        except (KeyError, TypeError) as exc:
            raise CliError(f"{p} is not a campaign report: {exc}", EXIT_USER) from exc
    try:
        tables = render_tables(reports, fractions)
    except MixedTargets as exc:
        raise CliError(str(exc), EXIT_USER) from exc
    for table in tables.values():
        print(table.render())
        print()
    summary = {
        "best_coverage": best_coverage(reports),
        "reports": [str(p) for p in paths],
        "tables": {k: t.to_dict() for k, t in tables.items()},
    }
    _write(out, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_gen_target(
    depth: int, fanout: int, magic_len: int, crash_count: int, seed: int, out: Path
) -> int:
    try:
        spec = generate_target(depth, fanout, magic_len, crash_count, seed)
    except TargetError as exc:
        raise CliError(str(exc), EXIT_USER) from exc
    assert len(spec.gates) == expected_gate_count(depth, fanout)
    _write(out, dumps_target(spec))
    print(f"wrote {len(spec.gates)} gates to {out}")
    return EXIT_OK


def cmd_validate(path: Path) -> int:
    load_config(path)
    print("ok")
    return EXIT_OK


def _fractions(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from exc
    if not values or any(not 0.0 <= v <= 1.0 for v in values):
        raise argparse.ArgumentTypeError("fractions must lie in [0, 1]")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corpussync", description="Simulate corpus dissemination for distributed fuzzing."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one campaign")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--target", type=Path, required=True)
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--label", default=None, help="output file prefix (default: policy name)")
    p.add_argument("--overwrite", action="store_true")

    p = sub.add_parser("compare", help="time-to-coverage tables over several reports")
    p.add_argument("reports", nargs="+", type=Path)
    p.add_argument("--fractions", type=_fractions, default=list(FRACTIONS))
    p.add_argument("--out", type=Path, default=Path("compare.json"))

    p = sub.add_parser("gen-target", help="write a synthetic gate-tree target")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--fanout", type=int, required=True)
    p.add_argument("--magic-len", type=int, default=2)
    p.add_argument("--crash-count", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("validate", help="check a config file")
    p.add_argument("config", type=Path)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        if args.command == "run":
            label = args.label
            if label is None:
                label = load_config(args.config).policy.value
            return cmd_run(RunManifest(args.config, args.target, args.out, label, args.overwrite))
        if args.command == "compare":
            return cmd_compare(args.reports, args.fractions, args.out)
        if args.command == "gen-target":
            return cmd_gen_target(
                args.depth, args.fanout, args.magic_len, args.crash_count, args.seed, args.out
            )
        return cmd_validate(args.config)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
