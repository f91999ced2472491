"""Command-line entry point.

Every subcommand reads one field, either a field file (``--input``) or a
builtin analytic field (``--builtin``), writes its report and any data files
under ``--out`` and exits with

* 0 when the check passes,
* 1 when the verdict or an assertion fails,
* 2 on usage and I/O errors.

Reports carry no timestamps or paths, so identical invocations produce
byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .fields import BUILTINS, builtin
from .grid import ScalarField
from .levelset import coarea_check, extract_level_set
from .monotonicity import METHODS, is_monotone, is_strictly_monotone
from .pipeline import PipelineConfig, approximate

__all__ = ["CliConfig", "main", "build_parser", "load_field", "load_solver_section"]

USAGE, FAIL, OK = 2, 1, 0


class UsageError(Exception):
    """Bad arguments or unreadable input; maps to exit code 2."""


@dataclass
class CliConfig:
    command: str
    input: Path | None = None
    builtin: str | None = None
    resolution: int = 128
    out: Path = Path("out")
    p: float = 2.0
    eps: float | None = None
    delta: float | None = None
    eta: float | None = None
    levels: list[float] = field(default_factory=list)
    tol: float | None = None
    format: str = "json"
    strict: bool = False
    method: str = "level-component"
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.input is None) == (self.builtin is None):
            raise UsageError("give exactly one of --input and --builtin")
        if self.builtin is not None and self.builtin not in BUILTINS:
            raise UsageError(f"unknown builtin {self.builtin!r}; choose from {', '.join(sorted(BUILTINS))}")
        for name in ("eps", "delta", "eta", "tol"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise UsageError(f"--{name} must be positive")
        if not self.p > 1:
            raise UsageError("--p must exceed 1")
        if self.resolution < 4:
            raise UsageError("--resolution must be at least 4")
        if self.format not in ("json", "csv"):
            raise UsageError("--format must be json or csv")

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "CliConfig":
        solver = load_solver_section(Path(ns.config)) if getattr(ns, "config", None) else {}
        levels = getattr(ns, "levels", None)
        return cls(command=ns.command, input=Path(ns.input) if ns.input else None, builtin=ns.builtin,
                   resolution=ns.resolution, out=Path(ns.out), p=getattr(ns, "p", 2.0),
                   eps=getattr(ns, "eps", None), delta=getattr(ns, "delta", None),
                   eta=getattr(ns, "eta", None), levels=levels or [], tol=getattr(ns, "tol", None),
                   format=ns.format, strict=getattr(ns, "strict", False),
                   method=getattr(ns, "method", "level-component"), solver=solver)


# input ----------------------------------------------------------------------------

def load_field(config: CliConfig) -> ScalarField:
    if config.builtin is not None:
        return builtin(config.builtin, h=1.0 / config.resolution)
    try:
        text = config.input.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {config.input}: {exc.strerror}") from None
    try:
        return ScalarField.from_json(text)
    except (ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"{config.input} is not a field file: {exc}") from None


def load_solver_section(path: Path) -> dict:
    """Read the ``[solver]`` section of a TOML or JSON config file."""
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            doc = tomllib.loads(raw.decode())
        else:
            doc = json.loads(raw)
    except ValueError as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from None
    section = doc.get("solver", doc) if isinstance(doc, dict) else None
    if not isinstance(section, dict):
        raise UsageError(f"{path}: solver section must be a table")
    return section


# output ---------------------------------------------------------------------------

def _write(config: CliConfig, name: str, text: str) -> Path:
    try:
        config.out.mkdir(parents=True, exist_ok=True)
        path = config.out / name
        path.write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write to {config.out}: {exc.strerror}") from None
    return path


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _flatten(doc, prefix=""):
    """``(key, value)`` rows of a nested report, for the CSV report format."""
    if isinstance(doc, dict):
        for k in sorted(doc):
            yield from _flatten(doc[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(doc, list) and doc and isinstance(doc[0], (dict, list)):
        for i, v in enumerate(doc):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, json.dumps(doc, sort_keys=True) if isinstance(doc, list) else repr(doc)


def _report(config: CliConfig, stem: str, doc: dict) -> Path:
    if config.format == "csv":
        return _write(config, stem + ".csv", _rows_csv(["key", "value"], _flatten(doc)))
    return _write(config, stem + ".json", _json(doc))


def _field(config: CliConfig, stem: str, f: ScalarField) -> Path:
    if config.format == "csv":
        return _write(config, stem + ".csv", f.to_csv())
    return _write(config, stem + ".json", f.to_json() + "\n")


def _level_tag(k: int) -> str:
    return f"levelset_{k:03d}"


# commands -------------------------------------------------------------------------

def cmd_check_monotone(config: CliConfig) -> int:
    u = load_field(config)
    tol = config.tol
    if config.strict:
        rep = is_strictly_monotone(u, tolerance=tol, method=config.method)
    else:
        rep = is_monotone(u, method=config.method, tolerance=tol)
    if config.format == "csv":
        rows = [[w.kind, *w.window, *w.node, repr(w.interior_value), repr(w.boundary_value)]
                for w in rep.witnesses]
        _write(config, "monotonicity.csv",
               _rows_csv(["kind", "i0", "j0", "i1", "j1", "i", "j", "interior_value", "boundary_value"], rows))
    else:
        _write(config, "monotonicity.json", rep.to_json(u.grid) + "\n")
    verdict = "monotone" if rep.monotone else "not monotone"
    print(f"{verdict} ({rep.method}{', strict' if rep.strict else ''}, {len(rep.witnesses)} witnesses)")
    return OK if rep.monotone else FAIL


def cmd_levelsets(config: CliConfig) -> int:
    if not config.levels:
        raise UsageError("levelsets needs --levels t1,t2,...")
    u = load_field(config)
    summary = []
    for k, t in enumerate(config.levels):
        ls = extract_level_set(u, t)
        tag = _level_tag(k)
        if config.format == "csv":
            _write(config, tag + ".csv", ls.to_csv())
        else:
            _write(config, tag + ".json", ls.to_json() + "\n")
        classes = {c: ls.count(c) for c in sorted(set(ls.classification))}
        summary.append({"t": float(t), "file": tag, "classes": classes,
                        "lengths": [c.length for c in ls.components],
                        "total_length": ls.total_length,
                        "junctions": [list(j.cell) for j in ls.junctions], "regular": ls.is_regular})
        print(f"t={t:g}: {', '.join(f'{n} {c}' for c, n in classes.items()) or 'empty'}; "
              f"length {ls.total_length:.6g}; {len(ls.junctions)} junctions")
    _write(config, "levelsets_summary.json", _json({"levels": summary}))
    irregular = [s for s in summary if not s["regular"]]
    return FAIL if config.strict and irregular else OK


def cmd_coarea(config: CliConfig) -> int:
    u = load_field(config)
    n = int(config.levels[0]) if config.levels else 64
    if n < 8:
        raise UsageError("coarea needs at least 8 levels")
    rep = coarea_check(u, n_levels=n)
    tol = 2e-2 if config.tol is None else config.tol
    doc = {**rep.to_dict(), "tolerance": tol, "passed": rep.rel_error < tol}
    _report(config, "coarea", doc)
    print(f"co-area: lhs {rep.lhs:.6g}, rhs {rep.rhs:.6g}, relative error {rep.rel_error:.3g}")
    return OK if doc["passed"] else FAIL


def cmd_approximate(config: CliConfig) -> int:
    if config.eps is None:
        raise UsageError("approximate needs --eps")
    u = load_field(config)
    try:
        pc = PipelineConfig.from_mapping({**config.solver, "p": config.p, "delta": config.delta,
                                          "eta": config.eta,
                                          **({"tol": config.tol} if config.tol is not None else {})})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad solver section: {exc}") from None
    try:
        ut, rep, stages = approximate(u, config.eps, pc)
    except (ValueError, RuntimeError) as exc:
        _report(config, "approx_report", {"passed": False, "error": type(exc).__name__,
                                          "message": str(exc)})
        print(f"approximation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return FAIL
    _report(config, "approx_report", rep.to_dict())
    for name, f in stages.items():
        _field(config, f"field_{name}", f)
    _field(config, "field_final", ut)
    print(f"sup|u~ - u| = {rep.sup_dist:.4g} (eps {rep.eps:g}); "
          f"E_p {rep.energy_original:.8g} -> {rep.energy_final:.8g}; "
          f"monotone {rep.monotone}; p-harmonic fraction {rep.p_harmonic_fraction:.3f}")
    for k, v in sorted(rep.assertions.items()):
        print(f"  {'pass' if v else 'FAIL'}  {k}")
    return OK if rep.passed else FAIL


COMMANDS = {
    "check-monotone": cmd_check_monotone,
    "levelsets": cmd_levelsets,
    "coarea": cmd_coarea,
    "approximate": cmd_approximate,
}


# parser ---------------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--input", help="field file (JSON grid format)")
    src.add_argument("--builtin", help=f"builtin field: {', '.join(sorted(BUILTINS))}")
    common.add_argument("--resolution", type=int, default=128,
                        help="builtin sampling, in nodes per unit length (default 128)")
    common.add_argument("--out", default="out", help="output directory (default ./out)")
    common.add_argument("--format", default="json", choices=["json", "csv"], help="report format")
    common.add_argument("--tol", type=float, help="tolerance of the check")

    parser = argparse.ArgumentParser(prog="monoapprox", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-monotone", parents=[common], help="decide monotonicity")
    p.add_argument("--method", default="level-component", choices=list(METHODS))
    p.add_argument("--strict", action="store_true", help="check strict monotonicity")

    p = sub.add_parser("levelsets", parents=[common], help="extract and classify level sets")
    p.add_argument("--levels", type=_floats, required=True, help="comma-separated levels")
    p.add_argument("--strict", action="store_true", help="fail on junctions or degenerate components")

    p = sub.add_parser("coarea", parents=[common], help="numerical co-area check")
    p.add_argument("--levels", type=_floats, help="number of levels (default 64)")

    p = sub.add_parser("approximate", parents=[common], help="monotone p-harmonic approximation")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--delta", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--config", help="TOML or JSON file with a [solver] section")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    try:
        config = CliConfig.from_args(ns)
        return COMMANDS[config.command](config)
    except UsageError as exc:
        print(f"monoapprox: error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
