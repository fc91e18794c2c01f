"""Command-line front end.

Every subcommand reads one JSON problem file, runs a construction and
writes a report: readable text on stdout and, with ``--output``, the same
content as JSON.

Problem file (canonical form: two-space indent, sorted keys, trailing
newline)::

    {
      "kind": "q_left",
      "matrices": {"T1": {"cols": 2, "data": [[0.5, 0.0], ...], "rows": 2}, ...},
      "position": "L",
      "seed": 7,
      "version": "dilatron-problem/1"
    }

``data`` lists the entries row by row, each as ``[re, im]``.  Optional
keys: ``side``, ``truncation``, ``tol``, ``relation``, ``engine`` and
``graph`` (``{"n": 3, "edges": [[1, 2], [2, 3]]}``, with matrices ``T1 ..
Tn`` and ``Q{i}_{j}``).

Exit codes: 0 when every certificate is within tolerance, 1 for I/O or
parse errors and for failed certificates, 2 when an input violates a
hypothesis of the requested construction.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .config import resolve_tol
from .dilation import (
    ando_intertwine,
    ando_q_case1,
    ando_q_case2,
    pair_relation_residual,
    power_dilation_residual,
    schaffer_isometric_dilation,
    coisometric_extension,
    strict_q_diag_construction,
)
from .errors import (
    DilatronError,
    Disconnected,
    GenerationFailed,
    HasCycle,
    HypothesisViolated,
    Infeasible,
    NotAContraction,
)
from .generators import (
    commuting_pair,
    intertwining_triple,
    q_commuting_pair,
    random_contraction,
    weyl_tree_operators,
)
from .graphsys import GraphSystem, QGraph, check_system, dilate_tree_system
from .lifting import LiftProblem, intertwine_lift, q_commutant_lift, q_intertwine_lift, relation_residual
from .numkernel import opnorm
from .qfinder import WITNESS_GAP, example_corpus, find_q

__all__ = ["ProblemFile", "Report", "run", "main", "generate", "parse_problem", "dump_problem", "FORMAT_VERSION"]

FORMAT_VERSION = "dilatron-problem/1"
EXIT_OK, EXIT_ERROR, EXIT_HYPOTHESIS = 0, 1, 2
HYPOTHESIS_ERRORS = (HypothesisViolated, NotAContraction, Infeasible, HasCycle, Disconnected)
GENERATE_KINDS = ("contraction", "commutant", "q_left", "q_middle", "q_right", "intertwine", "graph_path", "graph_star")


class ParseError(ValueError):
    """Malformed problem file."""


# ---------------------------------------------------------------------------
# problem files


def _encode_matrix(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "data": [[float(z.real), float(z.imag)] for z in m.reshape(-1)],
    }


def _decode_matrix(name: str, obj: Any) -> np.ndarray:
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"matrix {name}: needs rows, cols and data") from exc
    if len(data) != rows * cols:
        raise ParseError(f"matrix {name}: {len(data)} entries for a {rows}x{cols} matrix")
    vals = []
    for k, pair in enumerate(data):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise ParseError(f"matrix {name}: entry {k} is not a [re, im] pair")
        re, im = (float(v) for v in pair)
        if not (math.isfinite(re) and math.isfinite(im)):
            raise ParseError(f"matrix {name}: entry {k} is not finite")
        vals.append(complex(re, im))
    return np.array(vals, dtype=complex).reshape(rows, cols)


@dataclass
class ProblemFile:
    """In-memory form of a problem document."""

    kind: str
    matrices: dict[str, np.ndarray]
    position: str | None = None
    side: str | None = None
    truncation: int | None = None
    tol: float | None = None
    seed: int | None = None
    relation: str | None = None
    engine: str | None = None
    graph: dict | None = None
    version: str = FORMAT_VERSION

    def to_dict(self) -> dict:
        doc: dict[str, Any] = {
            "version": self.version,
            "kind": self.kind,
            "matrices": {k: _encode_matrix(v) for k, v in self.matrices.items()},
        }
        for key in ("position", "side", "truncation", "tol", "seed", "relation", "engine", "graph"):
            val = getattr(self, key)
            if val is not None:
                doc[key] = val
        return doc

    def matrix(self, name: str) -> np.ndarray:
        if name not in self.matrices:
            raise ParseError(f"problem has no matrix {name!r}")
        return self.matrices[name]


def _reject_constant(token: str):
    raise ParseError(f"non-finite number {token} in problem file")


def parse_problem(text: str) -> ProblemFile:
    """Parse and validate a problem document."""
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("problem file must be a JSON object")
    if doc.get("version") != FORMAT_VERSION:
        raise ParseError(f"unsupported version {doc.get('version')!r}")
    if "kind" not in doc or not isinstance(doc.get("matrices"), dict):
        raise ParseError("problem file needs 'kind' and 'matrices'")
    mats = {k: _decode_matrix(k, v) for k, v in doc["matrices"].items()}
    for k, m in mats.items():
        if m.shape[0] != m.shape[1]:
            raise ParseError(f"matrix {k} is not square")
    known = {"version", "kind", "matrices", "position", "side", "truncation", "tol", "seed", "relation", "engine", "graph"}
    extra = set(doc) - known
    if extra:
        raise ParseError(f"unknown keys {sorted(extra)}")
    return ProblemFile(
        kind=str(doc["kind"]),
        matrices=mats,
        position=doc.get("position"),
        side=doc.get("side"),
        truncation=doc.get("truncation"),
        tol=doc.get("tol"),
        seed=doc.get("seed"),
        relation=doc.get("relation"),
        engine=doc.get("engine"),
        graph=doc.get("graph"),
        version=doc["version"],
    )


def dump_problem(p: ProblemFile) -> str:
    """Canonical text: ``parse_problem(dump_problem(p))`` round-trips."""
    return json.dumps(p.to_dict(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# generation


def generate(kind: str, seed: int, dim: int = 2, position: str | None = None) -> ProblemFile:
    """Seeded feasible instance of the given family.

    Kinds: ``contraction``, ``commutant`` (``Q = I``), ``q_left``,
    ``q_middle``, ``q_right`` (unitary ``Q``), ``intertwine``,
    ``graph_path`` (three vertices) and ``graph_star`` (four vertices).
    """
    rng = np.random.default_rng(seed)
    if kind == "contraction":
        return ProblemFile(kind, {"T": random_contraction(rng, dim, rng.uniform(0.3, 0.9))}, seed=seed)
    if kind == "commutant":
        t, x = commuting_pair(rng, dim)
        return ProblemFile(kind, {"T": t, "X": x, "Q": np.eye(dim, dtype=complex)}, relation="XT=QTX", seed=seed)
    if kind in ("q_left", "q_middle", "q_right"):
        pos = {"q_left": "L", "q_middle": "M", "q_right": "R"}[kind]
        t1, t2, q = q_commuting_pair(rng, dim, pos, True)
        return ProblemFile(kind, {"T1": t1, "T2": t2, "Q": q}, position=pos, seed=seed)
    if kind == "intertwine":
        t1, t2, x = intertwining_triple(rng, dim)
        return ProblemFile(kind, {"T1": t1, "T2": t2, "X": x}, seed=seed)
    if kind in ("graph_path", "graph_star"):
        pos = (position or "L").upper()
        n, edges = (3, [[1, 2], [2, 3]]) if kind == "graph_path" else (4, [[1, 2], [1, 3], [1, 4]])
        norms = [0.7] * n if pos == "R" else None
        ts, qmap = weyl_tree_operators(rng, n, edges, dim, pos, norms)
        mats = {f"T{i + 1}": t for i, t in enumerate(ts)}
        mats.update({f"Q{i}_{j}": q for (i, j), q in qmap.items()})
        return ProblemFile(kind, mats, position=pos, seed=seed, graph={"n": n, "edges": edges})
    raise GenerationFailed(f"unknown kind {kind!r}; choose from {', '.join(GENERATE_KINDS)}")


# ---------------------------------------------------------------------------
# reports


@dataclass
class Report:
    kind: str
    engine: str
    certificates: dict[str, float]
    tol: float
    norms: dict[str, float] = field(default_factory=dict)
    seed: int | None = None
    timing: float = 0.0
    info: dict = field(default_factory=dict)
    # Entries that must exceed the tolerance instead (negative claims).
    lower_bounds: dict[str, float] = field(default_factory=dict)

    @property
    def verdicts(self) -> dict[str, bool]:
        out = {k: v <= self.tol for k, v in self.certificates.items()}
        out.update({k: self.certificates[k] >= thr for k, thr in self.lower_bounds.items()})
        return out

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "engine": self.engine,
            "tolerance": self.tol,
            "certificates": self.certificates,
            "pass": self.verdicts,
            "all_pass": self.passed,
            "norms": self.norms,
            "seed": self.seed,
            "timing_s": self.timing,
            "info": self.info,
        }

    def text(self) -> str:
        lines = [f"{self.kind} [{self.engine}]  tol={self.tol:.1e}"]
        verdicts = self.verdicts
        for k in sorted(self.certificates):
            mark = "PASS" if verdicts[k] else "FAIL"
            bound = f" (needs >= {self.lower_bounds[k]:.3g})" if k in self.lower_bounds else ""
            lines.append(f"  {mark}  {k:<32s} {self.certificates[k]:.3e}{bound}")
        for k, v in self.info.items():
            lines.append(f"  info  {k}: {v}")
        lines.append(f"{'ALL PASS' if self.passed else 'FAILED'} in {self.timing:.2f}s")
        return "\n".join(lines)


def _norms(p: ProblemFile) -> dict[str, float]:
    return {k: opnorm(v) for k, v in sorted(p.matrices.items())}


def _cmd_dilate(p: ProblemFile, a) -> Report:
    t = p.matrix("T")
    n = a.truncation or p.truncation or 12
    side = a.side or p.side or "lift"
    if side == "extend":
        op = coisometric_extension(t, n, a.tol)
        return Report("coisometric_extension", "schaffer", dict(op.certificates), a.tol)
    op = schaffer_isometric_dilation(t, n, a.tol)
    certs = dict(op.certificates)
    certs["power_compression"] = power_dilation_residual(op.matrix, op.matrix, t, t)
    return Report("isometric_dilation", "schaffer", certs, a.tol)


def _cmd_lift(p: ProblemFile, a) -> Report:
    n = a.truncation or p.truncation or 8
    side = a.side or p.side or "lift"
    if "T1" in p.matrices and "Q" not in p.matrices:
        # Plain intertwining T1 X = X T2.
        r = intertwine_lift(p.matrix("T1"), p.matrix("T2"), p.matrix("X"), n, a.tol)
    elif "T1" in p.matrices:
        # Q-intertwining X T1 = Q T2 X (L) or X T1 = T2 Q X (M).
        t1, t2, x, q = p.matrix("T1"), p.matrix("T2"), p.matrix("X"), p.matrix("Q")
        pos = (a.position or p.position or "L").upper()
        r = q_intertwine_lift(t1, t2, x, q, pos, side, n, a.tol)
    else:
        t, x = p.matrix("T"), p.matrix("X")
        q = p.matrices.get("Q", np.eye(t.shape[0], dtype=complex))
        form = p.relation or "XT=QTX"
        engine = a.engine or p.engine or "auto"
        r = q_commutant_lift(LiftProblem(t, x, q, form, side, (a.position or p.position or "L").upper()), n=n, engine=engine, tol=a.tol)
    return Report("lift", r.engine or "auto", dict(r.certificates), a.tol)


def _cmd_ando(p: ProblemFile, a) -> Report:
    t1, t2 = p.matrix("T1"), p.matrix("T2")
    n = a.truncation or p.truncation
    if "X" in p.matrices and "Q" not in p.matrices:
        r = ando_intertwine(t1, t2, p.matrix("X"), n or 13, a.tol)
        return Report("ando_intertwine", "case2", dict(r.certificates), a.tol)
    q = p.matrix("Q")
    pos = (a.position or p.position or "L").upper()
    case = a.case or 2
    if case == 2:
        r = ando_q_case2(t1, t2, q, pos, n or 13, a.tol)
        engine = "case2"
    elif pos == "R":
        r = strict_q_diag_construction(t1, t2, q, "R", n or 6, tol=a.tol)
        engine = "strict"
    else:
        r = ando_q_case1(t1, t2, q, pos, n or 6, tol=a.tol)
        engine = "case1"
    return Report(f"ando_{pos}", engine, dict(r.certificates), a.tol)


def _graph_system(p: ProblemFile, position: str | None) -> GraphSystem:
    if not p.graph:
        raise ParseError("graph problem needs a 'graph' entry")
    n = int(p.graph["n"])
    edges = [tuple(e) for e in p.graph["edges"]]
    qmap = {}
    for i, j in edges:
        lo, hi = min(i, j), max(i, j)
        qmap[(lo, hi)] = p.matrix(f"Q{lo}_{hi}")
    ts = [p.matrix(f"T{i}") for i in range(1, n + 1)]
    return GraphSystem(QGraph(n, edges, qmap), ts, (position or p.position or "L").upper())


def _cmd_graph(p: ProblemFile, a) -> Report:
    s = _graph_system(p, a.position)
    r = dilate_tree_system(s, a.truncation or p.truncation or 10, tol=a.tol)
    info = {"ordering": r.ordering, "dimension": r.space.total_dim}
    return Report("graph_dilation", s.position.value, dict(r.certificates), a.tol, info=info)


def _cmd_find_q(p: ProblemFile, a) -> Report:
    r = find_q(p.matrix("T1"), p.matrix("T2"), a.tol)
    info = {"feasible_left": r.feasible_left, "feasible_right": r.feasible_right}
    for side, w in (("left", r.witness_left), ("right", r.witness_right)):
        if w is not None:
            info[f"witness_{side}"] = [[float(z.real), float(z.imag)] for z in w]
    return Report("find_q", "kernel", dict(r.certificates), a.tol, info=info)


def _cmd_verify(p: ProblemFile, a) -> Report:
    if p.graph:
        s = _graph_system(p, a.position)
        certs = {f"relation_{i}_{j}": v for (i, j), v in check_system(s).items()}
        return Report("verify_graph", s.position.value, certs, a.tol)
    if "X" in p.matrices and "T1" in p.matrices:
        t1, t2, x = p.matrix("T1"), p.matrix("T2"), p.matrix("X")
        return Report("verify_intertwine", "direct", {"relation": opnorm(t1 @ x - x @ t2)}, a.tol)
    if "T1" in p.matrices:
        pos = (a.position or p.position or "L").upper()
        res = pair_relation_residual(pos, p.matrix("T1"), p.matrix("T2"), p.matrix("Q"))
        return Report("verify_pair", pos, {"relation": res}, a.tol)
    form = p.relation or "XT=QTX"
    t, x = p.matrix("T"), p.matrix("X")
    q = p.matrices.get("Q", np.eye(t.shape[0], dtype=complex))
    return Report("verify_lift_problem", form, {"relation": relation_residual(form, t, x, q)}, a.tol)


def _cmd_corpus(a) -> Report:
    certs, lower = {}, {}
    for inst in example_corpus():
        for key, (res, _) in inst.check(a.tol).items():
            name = f"{inst.name}.{key}"
            certs[name] = res
            if key.startswith("neg"):
                lower[name] = WITNESS_GAP
    # Negative claims are judged against the witness gap, not the tolerance.
    return Report("corpus", "examples", certs, a.tol, lower_bounds=lower)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dilatron", description="Q-commuting dilations and liftings with certificates.")
    parser.add_argument("--version", action="version", version=f"dilatron {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, needs_input=True):
        if needs_input:
            sp.add_argument("--input", required=True, help="problem file (JSON)")
        sp.add_argument("--output", help="write the report as JSON here")
        sp.add_argument("--truncation", type=int, help="number of blocks N")
        sp.add_argument("--tol", type=float, help="certificate tolerance (default: DILATRON_TOL or 1e-8)")
        sp.add_argument("--position", choices=["L", "M", "R"])
        sp.add_argument("--side", choices=["lift", "extend"])
        sp.add_argument("--case", type=int, choices=[1, 2])
        sp.add_argument("--engine", choices=["dmp", "dualparrott", "auto"])
        sp.add_argument("--seed", type=int, help="recorded in the report")

    for name, helptext in (
        ("dilate", "isometric dilation or co-isometric extension of T"),
        ("lift", "Q-commutant or Q-intertwining lift"),
        ("ando", "Ando-type dilation of a Q-commuting pair"),
        ("graph-dilate", "isometric dilation of a tree-indexed system"),
        ("find-q", "decide and construct Q for a pair"),
        ("verify", "evaluate the relation stated by a problem file"),
    ):
        common(sub.add_parser(name, help=helptext))
    common(sub.add_parser("corpus", help="check the bundled example corpus"), needs_input=False)
    g = sub.add_parser("generate", help="write a seeded random problem file")
    g.add_argument("--kind", required=True, choices=GENERATE_KINDS)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--position", choices=["L", "M", "R"])
    g.add_argument("--output", help="file to write (stdout when omitted)")
    return parser


_COMMANDS = {
    "dilate": _cmd_dilate,
    "lift": _cmd_lift,
    "ando": _cmd_ando,
    "graph-dilate": _cmd_graph,
    "find-q": _cmd_find_q,
    "verify": _cmd_verify,
}


def _emit(report: Report, output: str | None, out) -> None:
    print(report.text(), file=out)
    if output:
        Path(output).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True, default=str) + "\n")


def run(argv: list[str] | None = None, out=None) -> int:
    """Execute one subcommand; returns the process exit code."""
    out = out or sys.stdout
    parser = _build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        if a.command == "generate":
            text = dump_problem(generate(a.kind, a.seed, a.dim, a.position))
            if a.output:
                Path(a.output).write_text(text)
            else:
                out.write(text)
            return EXIT_OK
        start = time.perf_counter()
        if a.command == "corpus":
            a.tol = resolve_tol(a.tol)
            report = _cmd_corpus(a)
        else:
            problem = parse_problem(Path(a.input).read_text())
            # Precedence: --tol, then the file, then DILATRON_TOL.
            a.tol = resolve_tol(a.tol if a.tol is not None else problem.tol)
            report = _COMMANDS[a.command](problem, a)
            report.norms = _norms(problem)
            report.seed = a.seed if a.seed is not None else problem.seed
        report.timing = time.perf_counter() - start
        _emit(report, a.output, out)
        return EXIT_OK if report.passed else EXIT_ERROR
    except HYPOTHESIS_ERRORS as exc:
        print(f"hypothesis violated: {exc}", file=out)
        return EXIT_HYPOTHESIS
    except (OSError, ParseError, KeyError, DilatronError, ValueError) as exc:
        print(f"error: {exc}", file=out)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
