"""Independent reference implementations used as test oracles.

Everything here is written directly against the documented semantics as
plain per-object Python, sharing no code with the package internals.
"""

from __future__ import annotations

import math
import re

import numpy as np

# --- range filters ------------------------------------------------------


def naive_filter_scan(columns: dict, ranges: list, n: int) -> list[bool]:
    """columns: name -> (values, domain_min, domain_max); ranges: (name, lo, hi)."""
    out = []
    for i in range(n):
        ok = True
        for name, lo, hi in ranges:
            values, dmin, dmax = columns[name]
            active = lo > dmin or hi < dmax
            if not active:
                continue
            v = float(values[i])
            if math.isnan(v) or not (lo <= v <= hi):
                ok = False
                break
        out.append(ok)
    return out


def naive_histogram(values, dmin: float, dmax: float, bin_count: int, mask=None):
    """Per-bin counts by direct interval membership; returns (counts, missing)."""
    counts = [0] * bin_count
    missing = 0
    w = (dmax - dmin) / bin_count
    for i, v in enumerate(values):
        if mask is not None and not mask[i]:
            continue
        v = float(v)
        if math.isnan(v):
            missing += 1
            continue
        if v < dmin or v > dmax:
            continue
        if dmin == dmax:
            counts[0] += 1
            continue
        placed = False
        for b in range(bin_count):
            lo = dmin + b * w
            hi = dmax if b == bin_count - 1 else dmin + (b + 1) * w
            if b == bin_count - 1:
                placed = lo <= v <= hi
            else:
                placed = lo <= v < hi
            if placed:
                counts[b] += 1
                break
        assert placed, f"value {v} fell through all bins of [{dmin}, {dmax}]"
    return counts, missing


# --- query language -----------------------------------------------------

_NUM = re.compile(r"^[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?$")


def _num(text: str):
    s = text.strip()
    return float(s) if _NUM.match(s) else None


def naive_eval_row(node, row: dict) -> bool:
    """Evaluate one AST node against one metadata row (dict field -> string)."""
    kind = type(node).__name__
    if kind == "And":
        return all(naive_eval_row(c, row) for c in node.children)
    if kind == "Or":
        return any(naive_eval_row(c, row) for c in node.children)
    value = row[node.field]
    lit = node.literal
    op = node.op
    if op == "==":
        return value.strip() == lit.strip()
    if op == "!=":
        v = value.strip()
        return v != "" and v != lit.strip()
    if op == "~":
        return lit.lower() in value.lower()
    a, b = _num(value), _num(lit)
    if a is None or b is None:
        return False
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    raise AssertionError(f"oracle does not know operator {op!r}")


def naive_query_scan(node, table: dict) -> list[bool]:
    names = list(table)
    n = len(table[names[0]]) if names else 0
    if node is None:
        return [True] * n
    rows = [{name: table[name][i] for name in names} for i in range(n)]
    return [naive_eval_row(node, row) for row in rows]


# --- symmetric eigensolver ------------------------------------------------


def charpoly_eig_3x3(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and unit eigenvectors of a symmetric 3x3
    matrix via characteristic-polynomial root finding and row cross
    products; signs fixed so each vector's largest-|entry| is positive."""
    M = np.asarray(M, dtype=np.float64)
    assert M.shape == (3, 3)
    tr = M[0, 0] + M[1, 1] + M[2, 2]
    minors = (
        M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1]
        + M[0, 0] * M[2, 2] - M[0, 2] * M[2, 0]
        + M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    )
    det = np.linalg.det(M)
    # det(M - x I) = -x^3 + tr x^2 - minors x + det
    roots = np.roots([-1.0, tr, -minors, det])
    evals = np.sort_complex(roots).real[::-1]

    vecs = []
    for lam in evals:
        A = M - lam * np.eye(3)
        candidates = [
            np.cross(A[0], A[1]),
            np.cross(A[0], A[2]),
            np.cross(A[1], A[2]),
        ]
        v = max(candidates, key=lambda c: float(np.linalg.norm(c)))
        norm = np.linalg.norm(v)
        assert norm > 1e-12, "degenerate eigenvector (repeated eigenvalue?)"
        v = v / norm
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        vecs.append(v)
    return evals, np.array(vecs)
