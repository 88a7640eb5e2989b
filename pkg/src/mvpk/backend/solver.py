"""Driving an SMT solver over generated queries.

The solver is an external executable invoked with the problem file as
its only argument; the first token of stdout must be one of ``sat``,
``unsat`` or ``unknown``, with the model (if requested) following. The
bundled solver is used when no executable is configured (flag
``--solver`` or environment variable ``MVPK_SOLVER``). Queries are
independent, so a bounded worker pool can run them concurrently.
"""

from __future__ import annotations

import concurrent.futures
import os
import re
import shutil
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field

from ..errors import SolverCrash, SolverNotFound
from .encode import Query, VerificationUnit


@dataclass
class SolverConfig:
    path: str | None = None          # None selects the bundled solver
    timeout: float = 30.0
    jobs: int = 0                    # 0: pick automatically
    keep_smt: str | None = None

    def resolve(self) -> list[str]:
        path = self.path or os.environ.get("MVPK_SOLVER") or ""
        if not path:
            return [sys.executable, "-m", "mvpk.smt.main"]
        if shutil.which(path) is None and not os.path.exists(path):
            raise SolverNotFound(f"solver executable not found: {path}")
        return [path]


@dataclass
class Verdict:
    """Outcome of one tagged assertion."""

    query: Query
    status: str                      # "proven" | "violated" | "unknown"
    model: dict = field(default_factory=dict)
    detail: str = ""


def parse_model(text: str) -> dict:
    """Constant valuations out of a ``get-model`` response.

    Understands ``(define-fun name () Sort value)`` entries with integer
    (possibly ``(- n)``) and boolean values; anything else is skipped.
    """
    out: dict = {}
    pat = re.compile(
        r"\(define-fun\s+(\|[^|]*\||[^\s()]+)\s*\(\)\s*"
        r"(?:Int|Bool)\s+(true|false|\d+|\(-\s*\d+\s*\))\s*\)")
    for m in pat.finditer(text):
        name = m.group(1).strip("|")
        raw = m.group(2)
        if raw == "true":
            out[name] = True
        elif raw == "false":
            out[name] = False
        elif raw.startswith("("):
            out[name] = -int(raw.strip("()").replace("-", "").strip())
        else:
            out[name] = int(raw)
    return out


def _query_filename(q: Query) -> str:
    safe = re.sub(r"[^A-Za-z0-9_.-]+", "_", f"{q.unit}.{q.index}.{q.tag}")
    return f"{safe}.smt2"


def run_query(q: Query, config: SolverConfig) -> Verdict:
    cmd = config.resolve()
    if config.keep_smt:
        os.makedirs(config.keep_smt, exist_ok=True)
        path = os.path.join(config.keep_smt, _query_filename(q))
        with open(path, "w", encoding="utf-8") as f:
            f.write(q.text)
        keep = True
    else:
        fd, path = tempfile.mkstemp(suffix=".smt2", prefix="mvpk-")
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(q.text)
        keep = False
    try:
        try:
            proc = subprocess.run(
                cmd + [path], capture_output=True, text=True,
                timeout=config.timeout)
        except subprocess.TimeoutExpired:
            return Verdict(q, "unknown", detail="timeout")
        except OSError as exc:
            raise SolverNotFound(f"cannot run solver: {exc}") from exc
        first = proc.stdout.split(None, 1)
        token = first[0] if first else ""
        if token == "unsat":
            return Verdict(q, "proven")
        if token == "sat":
            return Verdict(q, "violated", model=parse_model(proc.stdout))
        if token == "unknown":
            return Verdict(q, "unknown", detail=proc.stderr.strip())
        raise SolverCrash(
            f"solver produced no verdict for {q.unit} [{q.tag}]",
            exit_code=proc.returncode, stderr=proc.stderr)
    finally:
        if not keep:
            try:
                os.unlink(path)
            except OSError:
                pass


def run_units(units: list[VerificationUnit],
              config: SolverConfig) -> list[Verdict]:
    """All verdicts, in deterministic (unit, query index) order."""
    queries = [q for u in units for q in u.queries]
    jobs = config.jobs or min(8, os.cpu_count() or 1)
    config.resolve()                 # fail fast on a bad solver path
    if jobs <= 1 or len(queries) <= 1:
        return [run_query(q, config) for q in queries]
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda q: run_query(q, config), queries))
