"""Export a MiqpModel in CPLEX LP format.

The constant objective term is carried by a variable ``obj_const`` fixed to
that constant, so external solvers report the same objective value as the
internal one. Quadratic terms use the ``[ ... ] / 2`` convention, which
matches the 1/2 v'Pv storage.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .model import MiqpModel

_WIDTH = 100


def _num(x: float) -> str:
    return repr(float(x))


class _Writer:
    def __init__(self):
        self.lines: list[str] = []
        self._cur = ""

    def token(self, tok: str) -> None:
        if self._cur and len(self._cur) + 1 + len(tok) > _WIDTH:
            self.lines.append(self._cur)
            self._cur = "   " + tok
        else:
            self._cur = f"{self._cur} {tok}" if self._cur else tok

    def end(self) -> None:
        if self._cur:
            self.lines.append(self._cur)
        self._cur = ""

    def line(self, text: str) -> None:
        self.end()
        self.lines.append(text)


def _terms(w: _Writer, coefs, names, first: bool = True) -> bool:
    for c, name in zip(coefs, names):
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        if first and c > 0:
            w.token(f"{_num(abs(c))} {name}")
        else:
            w.token(f"{sign} {_num(abs(c))} {name}")
        first = False
    return first


def export_lp(model: MiqpModel, name: str = "searchplan") -> str:
    names = model.layout.names
    w = _Writer()
    w.line(f"\\ {name}: {model.n} variables ({int(model.is_binary.sum())} binary), {model.m} rows")
    w.line("Minimize")
    w.token(" obj:")
    nz = np.flatnonzero(model.q)
    first = _terms(w, model.q[nz], [names[j] for j in nz])
    P = sp.triu(model.P, format="coo")
    if P.nnz:
        w.token("+ [" if not first else "[")
        inner_first = True
        for i, j, v in sorted(zip(P.row, P.col, P.data)):
            coef = v if i == j else 2.0 * v
            term = f"{names[i]} ^2" if i == j else f"{names[i]} * {names[j]}"
            if inner_first:
                w.token(f"{'-' if coef < 0 else ''}{_num(abs(coef))} {term}")
            else:
                w.token(f"{'-' if coef < 0 else '+'} {_num(abs(coef))} {term}")
            inner_first = False
        w.token("] / 2")
        first = False
    w.token("+ obj_const" if not first else "obj_const")
    w.end()

    w.line("Subject To")
    A = model.A.tocsr()
    for r in range(model.m):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        w.token(f" c{r}:")
        _terms(w, A.data[lo:hi], [names[j] for j in A.indices[lo:hi]])
        w.token(f"{'=' if model.is_eq[r] else '<='} {_num(model.rhs[r])}")
        w.end()

    w.line("Bounds")
    for j in range(model.n):
        if model.is_binary[j]:
            continue
        lb, ub = model.lb[j], model.ub[j]
        if np.isinf(lb) and np.isinf(ub):
            w.line(f" {names[j]} free")
        else:
            lo_s = "-inf" if np.isinf(lb) else _num(lb)
            hi_s = "+inf" if np.isinf(ub) else _num(ub)
            w.line(f" {lo_s} <= {names[j]} <= {hi_s}")
    w.line(f" obj_const = {_num(model.const)}")

    w.line("Binaries")
    for j in np.flatnonzero(model.is_binary):
        w.token(names[j])
    w.end()
    w.line("End")
    return "\n".join(w.lines) + "\n"


def count_lp_binaries(text: str) -> int:
    """Number of names in the Binaries section of an LP file."""
    count, inside = 0, False
    for line in text.splitlines():
        head = line.strip().lower()
        if head in ("binaries", "binary", "bin"):
            inside = True
            continue
        if inside:
            if head in ("end", "generals", "general", "semi-continuous") or head.startswith("sos"):
                break
            count += len(line.split())
    return count
