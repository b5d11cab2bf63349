"""``qtrade`` command line: compute measures, verify identities, run scans, generate corpora.

Settings resolve as flags > ``--config`` JSON file > defaults; the seed falls
back to ``$QTRADE_SEED`` before the default. Exit codes: 0 ok, 1 violation
candidate, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import enum
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .entropy import QParam, tsallis_entropy
from .measures import Measure, compute
from .optimize import NonFiniteObjective, OptConfig
from .qstate import DensityMatrix, PureState, StateError, partial_trace, state_from_dict
from .theorems import (
    DEFAULT_Q_GRID,
    SCAN_THEOREMS,
    Theorem,
    corpus_from_json,
    corpus_to_json,
    make_corpus,
    reports_to_csv_rows,
    scan,
    summary_hash,
    verify,
)

log = logging.getLogger("qtrade")

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
ENTROPY = "entropy"
DEFAULTS: dict[str, Any] = {
    "restarts": 20,
    "max_iters": 2000,
    "tol": 1e-8,
    "seed": 0,
    "m_outcomes": None,
    "format": "json",
    "jobs": 1,
    "include_canonical": False,
}


class Command(enum.Enum):
    COMPUTE = "compute"
    VERIFY = "verify"
    SCAN = "scan"
    GEN_CORPUS = "gen-corpus"


class Format(enum.Enum):
    JSON = "json"
    CSV = "csv"


class InputError(Exception):
    """Bad flags, config or input file; maps to exit code 2."""


@dataclass
class RunConfig:
    command: Command
    inputs: list[Path] = field(default_factory=list)
    q: list[float] = field(default_factory=list)
    opt: OptConfig = field(default_factory=OptConfig)
    output: Path | None = None
    format: Format = Format.JSON
    measure: str | None = None
    theorems: list[str] = field(default_factory=list)
    keep: list[int] | None = None
    corpus: list[tuple[int, list[int]]] = field(default_factory=list)
    include_canonical: bool = False
    jobs: int = 1

    def __post_init__(self):
        floor = 0.0 if self.measure == ENTROPY else 1.0
        for q in self.q:
            if not np.isfinite(q) or q < floor:
                raise InputError(f"q must be >= {floor:g} for {self.command.value}, got {q}")


# -- argument parsing --------------------------------------------------------

def _dims(text: str) -> list[int]:
    try:
        dims = [int(t) for t in text.replace("[", "").replace("]", "").split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must look like 2,2,2, got {text!r}")
    if not dims or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"dims must be positive integers, got {text!r}")
    return dims


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file of defaults (flag names, underscores)")
    common.add_argument("--q", type=float, action="append", help="Tsallis parameter; repeat for several")
    common.add_argument("--restarts", type=int)
    common.add_argument("--max-iters", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--seed", type=int, help="master seed (fallback: $QTRADE_SEED, then 0)")
    common.add_argument("--m-outcomes", type=int, help="members/outcomes per search (default d^2)")
    common.add_argument("--input", type=Path, action="append", help="state or corpus JSON file")
    common.add_argument("--output", type=Path, help="output path (default: standard output)")
    common.add_argument("--format", choices=[f.value for f in Format])
    common.add_argument("--log-level", default="WARNING")

    parser = argparse.ArgumentParser(prog="qtrade", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(Command.COMPUTE.value, parents=[common], help="evaluate one measure on a bipartite state")
    p.add_argument("--measure", required=True, choices=[m.value for m in Measure] + [ENTROPY])
    p.add_argument("--keep", type=int, nargs="+", help="reduce the input to these parties first")

    p = sub.add_parser(Command.VERIFY.value, parents=[common], help="check identities on a tripartite pure state")
    p.add_argument("--theorem", action="append", choices=[t.value for t in Theorem])

    for name, hlp in ((Command.SCAN, "run identity checks over a corpus"),
                      (Command.GEN_CORPUS, "write a corpus of pure states")):
        p = sub.add_parser(name.value, parents=[common], help=hlp)
        p.add_argument("--corpus-count", type=int, action="append", help="states per --dims group")
        p.add_argument("--dims", type=_dims, action="append", help="local dims, e.g. 2,2,3")
        p.add_argument("--include-canonical", action="store_true", default=None)
        if name is Command.SCAN:
            p.add_argument("--theorem", action="append", choices=[t.value for t in SCAN_THEOREMS])
            p.add_argument("--jobs", type=int, help="worker processes for scan items")
    return parser


def _load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"config {path} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _env_seed() -> int | None:
    raw = os.environ.get("QTRADE_SEED")
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"QTRADE_SEED must be an integer, got {raw!r}")


def resolve(args: argparse.Namespace) -> RunConfig:
    """Merge flags, config file, $QTRADE_SEED and defaults into a RunConfig."""
    filecfg = _load_config_file(args.config)

    def pick(key):
        val = getattr(args, key, None)
        if val is not None:
            return val
        if key in filecfg:
            return filecfg[key]
        if key == "seed":
            env = _env_seed()
            if env is not None:
                return env
        return DEFAULTS.get(key)

    command = Command(args.command)
    measure = getattr(args, "measure", None)
    try:
        opt = OptConfig(
            restarts=int(pick("restarts")),
            max_iters=int(pick("max_iters")),
            tol=float(pick("tol")),
            seed=int(pick("seed")),
            m_outcomes=None if pick("m_outcomes") is None else int(pick("m_outcomes")),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc

    qs = pick("q")
    if qs is None:
        qs = list(DEFAULT_Q_GRID) if command is Command.SCAN else [1.0]
    qs = [float(q) for q in (qs if isinstance(qs, list) else [qs])]

    corpus = []
    if command in (Command.SCAN, Command.GEN_CORPUS):
        counts, dims = pick("corpus_count"), pick("dims")
        if counts is not None or dims is not None:
            counts = counts if isinstance(counts, list) else [counts or 1]
            dims = dims or [[2, 2, 2]]
            if dims and not isinstance(dims[0], list):
                dims = [dims]
            if len(counts) != len(dims):
                if len(dims) == 1:
                    dims = dims * len(counts)
                elif len(counts) == 1:
                    counts = counts * len(dims)
                else:
                    raise InputError("--corpus-count and --dims must pair up")
            corpus = [(int(c), [int(d) for d in ds]) for c, ds in zip(counts, dims)]

    inputs = pick("input") or []
    output = pick("output")
    return RunConfig(
        command=command,
        inputs=[Path(p) for p in (inputs if isinstance(inputs, list) else [inputs])],
        q=qs,
        opt=opt,
        output=None if output is None else Path(output),
        format=Format(pick("format")),
        measure=measure,
        theorems=list(pick("theorem") or []),
        keep=getattr(args, "keep", None),
        corpus=corpus,
        include_canonical=bool(pick("include_canonical")),
        jobs=int(pick("jobs")),
    )


# -- I/O ---------------------------------------------------------------------

def atomic_write(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.output is None:
        sys.stdout.write(text)
    else:
        atomic_write(cfg.output, text)


def _to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _to_csv(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _one_input(cfg: RunConfig) -> PureState | DensityMatrix:
    if len(cfg.inputs) != 1:
        raise InputError(f"{cfg.command.value} needs exactly one --input state file")
    obj = _read_json(cfg.inputs[0])
    if not isinstance(obj, dict):
        raise InputError(f"{cfg.inputs[0]} must hold one serialized state object")
    return state_from_dict(obj)


# -- commands ----------------------------------------------------------------

def cmd_compute(cfg: RunConfig) -> int:
    state = _one_input(cfg)
    if cfg.keep is not None:
        state = partial_trace(state, cfg.keep)
    rows = [["measure", "q", "value", "bound_side"]]
    reports = []
    for q in cfg.q:
        if cfg.measure == ENTROPY:
            rep = {"measure": ENTROPY, "q": q, "value": tsallis_entropy(state, QParam(q)), "bound_side": "exact"}
        else:
            if len(state.dims) != 2:
                raise InputError(f"{cfg.measure} needs a bipartite state, got dims {list(state.dims)}; use --keep")
            rep = compute(cfg.measure, state, q, cfg.opt).to_dict()
        reports.append(rep)
        rows.append([rep["measure"], repr(rep["q"]), repr(rep["value"]), rep["bound_side"]])
    if cfg.format is Format.CSV:
        _emit(cfg, _to_csv(rows))
    else:
        _emit(cfg, _to_json({"dims": list(state.dims), "seed": cfg.opt.seed, "reports": reports}))
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    state = _one_input(cfg)
    theorems = cfg.theorems or [t.value for t in SCAN_THEOREMS]
    reports = []
    for q in cfg.q:
        for thm in theorems:
            rep = verify(thm, state, q, cfg.opt)
            if not rep.converged:
                log.warning("[%s q=%s] optimizer spread %.2e above the convergence threshold", thm, q, rep.spread)
            reports.append(rep.to_dict())
    if cfg.format is Format.CSV:
        _emit(cfg, _to_csv(reports_to_csv_rows(reports)))
    else:
        _emit(cfg, _to_json({"seed": cfg.opt.seed, "reports": reports}))
    return EXIT_VIOLATION if any(r["flagged"] for r in reports) else EXIT_OK


def _corpus(cfg: RunConfig):
    if cfg.inputs and cfg.corpus:
        raise InputError("give either --input corpus files or --corpus-count/--dims, not both")
    if cfg.inputs:
        items = []
        for path in cfg.inputs:
            data = _read_json(path)
            items += corpus_from_json(data if isinstance(data, list) else [data])
        return items
    groups = cfg.corpus or ([] if cfg.include_canonical else [(1, [2, 2, 2])])
    return make_corpus(groups, cfg.opt.seed, cfg.include_canonical)


def cmd_gen_corpus(cfg: RunConfig) -> int:
    if cfg.inputs:
        raise InputError("gen-corpus takes no --input")
    _emit(cfg, _to_json(corpus_to_json(_corpus(cfg))))
    return EXIT_OK


def cmd_scan(cfg: RunConfig) -> int:
    corpus = _corpus(cfg)
    theorems = cfg.theorems or [t.value for t in SCAN_THEOREMS]
    result = scan(corpus, cfg.q, cfg.opt, theorems, jobs=cfg.jobs)
    doc = {"summary": result.summary, "summary_hash": summary_hash(result.summary), "reports": result.reports}
    csv_text = _to_csv(reports_to_csv_rows(result.reports))
    if cfg.output is None:
        sys.stdout.write(csv_text if cfg.format is Format.CSV else _to_json(doc))
    else:
        base = cfg.output.with_suffix("")
        atomic_write(base.with_suffix(".json"), _to_json(doc))
        atomic_write(base.with_suffix(".csv"), csv_text)
        atomic_write(Path(f"{base}.timing.json"), _to_json(result.runtimes))
    if result.summary["errors"]:
        log.warning("%d scan items failed; see summary.errors", len(result.summary["errors"]))
    return EXIT_VIOLATION if result.summary["violation_candidates"] else EXIT_OK


COMMANDS = {
    Command.COMPUTE: cmd_compute,
    Command.VERIFY: cmd_verify,
    Command.SCAN: cmd_scan,
    Command.GEN_CORPUS: cmd_gen_corpus,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    try:
        cfg = resolve(args)
        return COMMANDS[cfg.command](cfg)
    # LinAlgError subclasses ValueError, so numerical failures are caught first
    except (NonFiniteObjective, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"qtrade: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, StateError, ValueError, TypeError, KeyError) as exc:
        print(f"qtrade: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"qtrade: I/O error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
