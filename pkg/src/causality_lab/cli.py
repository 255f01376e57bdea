"""Command-line runner: configs in, manifests and residual tables out.

A run writes ``manifest.json`` (byte-identical for identical config and
seed), ``residuals.csv`` and any artifacts into the output directory.  Wall
time varies between runs, so it goes to a separate ``timing.json``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from .errors import ConfigError, IncompatibleManifestError
from .experiments import EXPECTED, REGISTRY, CheckResult, Outcome
from .prob_core import DEFAULT_TOL, _jsonable

SCHEMA = "causality-lab-manifest/1"
KINDS = sorted({k for k, _ in REGISTRY})
CSV_COLUMNS = ["run_id", "check", "condition", "expected", "holds", "ok", "max_residual", "tolerance", "witnesses"]


@dataclass
class ExperimentConfig:
    kind: str
    action: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    tolerance: float = DEFAULT_TOL
    expected: dict = field(default_factory=dict)
    out: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}", "kind")
        if (self.kind, self.action) not in REGISTRY:
            actions = sorted(a for k, a in REGISTRY if k == self.kind)
            raise ConfigError(f"action for {self.kind} must be one of {actions}, got {self.action!r}", "action")
        if not isinstance(self.params, Mapping):
            raise ConfigError("params must be an object", "params")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an integer in [0, 2^64)", "seed")
        if not isinstance(self.tolerance, (int, float)) or self.tolerance < 0:
            raise ConfigError("tolerance must be a non-negative number", "tolerance")
        for name, verdict in self.expected.items():
            if verdict not in EXPECTED:
                raise ConfigError(f"expected verdict for {name!r} must be holds or fails", f"expected.{name}")
        return self

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "ExperimentConfig":
        if not isinstance(obj, Mapping):
            raise ConfigError("config must be a JSON object", "<root>")
        known = {"kind", "action", "params", "seed", "tolerance", "expected", "out"}
        extra = sorted(set(obj) - known)
        if extra:
            raise ConfigError(f"unknown config fields {extra}", extra[0])
        for req in ("kind", "action"):
            if req not in obj:
                raise ConfigError(f"missing required field {req!r}", req)
        return cls(
            kind=obj["kind"],
            action=str(obj["action"]).replace("-", "_"),
            params=dict(obj.get("params", {})),
            seed=obj.get("seed", 0),
            tolerance=obj.get("tolerance", DEFAULT_TOL),
            expected=dict(obj.get("expected", {})),
            out=obj.get("out"),
        ).validate()

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})", "<file>") from exc
        return cls.from_json_obj(obj)

    def to_json_obj(self) -> dict:
        return {
            "kind": self.kind,
            "action": self.action,
            "params": self.params,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "expected": self.expected,
        }

    def digest(self) -> str:
        """Hash of everything that affects results (the output path does not)."""
        blob = json.dumps(self.to_json_obj(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RunManifest:
    config: ExperimentConfig
    config_hash: str
    tool_version: str
    checks: list
    values: dict
    wall_time: float = 0.0

    @property
    def run_id(self) -> str:
        return self.config_hash[:12]

    @property
    def all_ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def to_json_obj(self) -> dict:
        """Deterministic content; wall time is deliberately left out."""
        return {
            "schema": SCHEMA,
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "config": self.config.to_json_obj(),
            "all_ok": self.all_ok,
            "checks": [c.to_json_obj() for c in self.checks],
            "values": _jsonable(self.values),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True, indent=2) + "\n"


def run(config: ExperimentConfig, out_dir: str | Path | None = None) -> RunManifest:
    """Execute one experiment and, if an output directory is given, write its files."""
    config.validate()
    fn = REGISTRY[(config.kind, config.action)]
    start = time.perf_counter()
    outcome: Outcome = fn(config.params, config.seed, float(config.tolerance))
    wall = time.perf_counter() - start
    checks = []
    for c in outcome.checks:
        expected = config.expected.get(c.name, c.expected)
        checks.append(CheckResult(c.name, c.report, expected))
    unknown = sorted(set(config.expected) - {c.name for c in checks})
    if unknown:
        raise ConfigError(f"expectations name unknown checks {unknown}", f"expected.{unknown[0]}")
    manifest = RunManifest(config, config.digest(), __version__, checks, outcome.values, wall)
    target = out_dir if out_dir is not None else config.out
    if target is not None:
        write_outputs(manifest, outcome.artifacts, Path(target))
    return manifest


def residual_rows(manifest_obj: Mapping) -> list[dict]:
    rows = []
    for c in manifest_obj["checks"]:
        rep = c["report"]
        rows.append({
            "run_id": manifest_obj["run_id"],
            "check": c["name"],
            "condition": rep["condition"],
            "expected": c["expected"],
            "holds": rep["holds"],
            "ok": c["ok"],
            "max_residual": repr(float(rep["max_residual"])),
            "tolerance": repr(float(rep["tolerance"])),
            "witnesses": len(rep.get("witnesses", [])),
        })
    return rows


def rows_to_csv(rows: Sequence[Mapping]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def write_outputs(manifest: RunManifest, artifacts: Mapping[str, str], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(manifest.to_json())
    (out / "residuals.csv").write_text(rows_to_csv(residual_rows(manifest.to_json_obj())))
    (out / "timing.json").write_text(json.dumps({"run_id": manifest.run_id, "wall_time_s": manifest.wall_time}) + "\n")
    for name, text in sorted(artifacts.items()):
        (out / name).write_text(text)


def report(paths: Sequence[str | Path]) -> list[dict]:
    """Concatenate the residual tables of several manifests; nothing is recomputed."""
    rows: list[dict] = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            p = p / "manifest.json"
        with open(p) as fh:
            obj = json.load(fh)
        if not isinstance(obj, Mapping) or obj.get("schema") != SCHEMA:
            raise IncompatibleManifestError(f"{p}: schema {obj.get('schema') if isinstance(obj, Mapping) else None!r}, expected {SCHEMA!r}")
        rows.extend(residual_rows(obj))
    return rows


def format_table(rows: Sequence[Mapping]) -> str:
    cols = ["run_id", "check", "expected", "holds", "ok", "max_residual"]
    widths = {c: max([len(c)] + [len(str(r[c])) for r in rows]) for c in cols}
    lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
    for r in rows:
        lines.append("  ".join(str(r[c]).ljust(widths[c]) for c in cols))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; other flags override its fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="what to print on stdout")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="causality-lab", description="Locality and common-cause checks.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a config file")
    _common(p)

    sel = sub.add_parser("sel", help="stochastic Einstein locality on lattice ensembles").add_subparsers(dest="action", required=True)
    p = sel.add_parser("check", help="checks listed in a config")
    _common(p)
    p = sel.add_parser("suite", help="random implication suite")
    _common(p)
    p.add_argument("--n-ensembles", type=int)

    pcc = sub.add_parser("pcc", help="common-cause principles").add_subparsers(dest="action", required=True)
    p = pcc.add_parser("extend", help="extend a space with common causes")
    _common(p)
    p.add_argument("--space", help="space JSON file")
    p.add_argument("--pairs", help="JSON list of [E labels, F labels]")
    p = pcc.add_parser("check", help="weak or strong principle against given partitions")
    _common(p)
    p.add_argument("--space")
    p.add_argument("--pairs")
    p.add_argument("--partitions", help="JSON list of partitions (each a list of label lists)")
    p.add_argument("--mode", choices=("weak", "strong"))
    p = pcc.add_parser("suite", help="random extension and positive-correlation trials")
    _common(p)

    bell = sub.add_parser("bell", help="Bell-type models").add_subparsers(dest="action", required=True)
    p = bell.add_parser("chsh", help="CHSH value")
    _common(p)
    p.add_argument("--angles", help="a1,a2,b1,b2 (e.g. 0,pi/2,pi/4,3pi/4)")
    p.add_argument("--model", help="'singlet' or a model JSON file")
    p = bell.add_parser("audit", help="PI, OI, factorizability and inequalities of a model")
    _common(p)
    p.add_argument("--model")
    p.add_argument("--angles")
    p = bell.add_parser("szabo", help="build and audit the many-cause model")
    _common(p)
    p.add_argument("--angles")

    causet = sub.add_parser("causet", help="sequential growth of causal sets").add_subparsers(dest="action", required=True)
    p = causet.add_parser("grow", help="sample a causet")
    _common(p)
    p.add_argument("--q", help="comma-separated q_0=1,q_1,...")
    p.add_argument("--steps", type=int)
    p = causet.add_parser("verify", help="covariance, Bell causality, sum rules")
    _common(p)
    p.add_argument("--q")
    p.add_argument("--max-rank", type=int)
    p.add_argument("--n-random", type=int)
    p = causet.add_parser("strong-sel", help="search for dynamics obeying strong SEL")
    _common(p)
    p.add_argument("--max-rank", type=int)
    p.add_argument("--grid")
    p.add_argument("--q", help="generic dynamics expected to fail")

    p = sub.add_parser("report", help="merge manifests into one table")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--format", choices=("table", "csv"), default="table")
    p.add_argument("--out", help="write the merged CSV here")
    return ap


_PARAM_FLAGS = {
    "angles": "angles", "model": "model", "q": "q", "steps": "steps", "max_rank": "max_rank",
    "grid": "grid", "n_random": "n_random", "n_ensembles": "n_ensembles", "space": "space",
    "pairs": "pairs", "partitions": "partitions", "mode": "mode",
}
_JSON_FLAGS = {"partitions"}


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if args.command != "run" and (cfg.kind, cfg.action) != _command_key(args):
            raise ConfigError(
                f"config is for {cfg.kind} {cfg.action} but the command is {args.command} {args.action}", "kind")
    elif args.command == "run":
        raise ConfigError("run needs --config", "--config")
    else:
        kind, action = _command_key(args)
        cfg = ExperimentConfig(kind, action)
        if kind == "bell" and action == "chsh":
            cfg.params["target"] = "tsirelson"
    for flag, key in _PARAM_FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            if flag in _JSON_FLAGS:
                try:
                    val = json.loads(Path(val).read_text()) if Path(val).exists() else json.loads(val)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"--{flag}: invalid JSON", f"params.{key}") from exc
            cfg.params[key] = val
    if args.seed is not None:
        cfg.seed = args.seed
    if args.tol is not None:
        cfg.tolerance = args.tol
    if args.out is not None:
        cfg.out = args.out
    return cfg.validate()


def _command_key(args) -> tuple[str, str]:
    action = args.action.replace("-", "_")
    if args.command == "bell" and action == "szabo":
        return "szabo", "build"
    return args.command, action


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "report":
            rows = report(args.manifests)
            text = rows_to_csv(rows)
            if args.out:
                Path(args.out).write_text(text)
            print(text if args.format == "csv" else format_table(rows), end="" if args.format == "csv" else "\n")
            return 0
        cfg = _config_from_args(args)
        manifest = run(cfg)
    except ConfigError as exc:
        print(f"usage error [{exc.field}]: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surface checker errors with a nonzero exit
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.format == "csv":
        print(rows_to_csv(residual_rows(manifest.to_json_obj())), end="")
    else:
        print(manifest.to_json(), end="")
    for c in manifest.checks:
        if not c.ok:
            print(f"unexpected verdict: {c.name} {'holds' if c.report.holds else 'fails'} "
                  f"(expected {c.expected})", file=sys.stderr)
    return 0 if manifest.all_ok else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
