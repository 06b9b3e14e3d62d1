"""Small dense matrices over the rationals.

Matrices are tuples of row tuples of :class:`~fractions.Fraction`.  The
sizes met in practice are the rank of the potential (a handful), so plain
Python loops are fine.
"""

from __future__ import annotations

from fractions import Fraction
from math import lcm
from typing import Sequence

Matrix = tuple
Vector = tuple


def matrix(rows: Sequence[Sequence]) -> Matrix:
    return tuple(tuple(Fraction(x) for x in row) for row in rows)


def zeros(n: int, m: int | None = None) -> Matrix:
    m = n if m is None else m
    return tuple((Fraction(0),) * m for _ in range(n))


def identity(n: int) -> Matrix:
    return tuple(tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n))


def diag(values: Sequence) -> Matrix:
    n = len(values)
    return tuple(tuple(Fraction(values[i]) if i == j else Fraction(0) for j in range(n)) for i in range(n))


def shape(A: Matrix) -> tuple:
    return len(A), (len(A[0]) if A else 0)


def transpose(A: Matrix) -> Matrix:
    return tuple(zip(*A)) if A else ()


def add(A: Matrix, B: Matrix) -> Matrix:
    return tuple(tuple(a + b for a, b in zip(ra, rb)) for ra, rb in zip(A, B))


def sub(A: Matrix, B: Matrix) -> Matrix:
    return tuple(tuple(a - b for a, b in zip(ra, rb)) for ra, rb in zip(A, B))


def scale(c, A: Matrix) -> Matrix:
    c = Fraction(c)
    return tuple(tuple(c * a for a in row) for row in A)


def matmul(A: Matrix, B: Matrix) -> Matrix:
    if not A:
        return ()
    Bt = transpose(B)
    return tuple(tuple(sum((a * b for a, b in zip(row, col)), Fraction(0)) for col in Bt) for row in A)


def chain(*mats: Matrix) -> Matrix:
    out = mats[0]
    for M in mats[1:]:
        out = matmul(out, M)
    return out


def matvec(A: Matrix, x: Vector) -> Vector:
    return tuple(sum((a * b for a, b in zip(row, x)), Fraction(0)) for row in A)


def outer(x: Vector, y: Vector) -> Matrix:
    return tuple(tuple(a * b for b in y) for a in x)


def is_zero(A: Matrix) -> bool:
    return all(a == 0 for row in A for a in row)


def is_symmetric(A: Matrix) -> bool:
    return A == transpose(A)


def inverse(A: Matrix) -> Matrix:
    """Gauss-Jordan inverse; raises ``ZeroDivisionError`` if singular."""
    n = len(A)
    M = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(A)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if M[r][col] != 0), None)
        if pivot is None:
            raise ZeroDivisionError("matrix is singular")
        M[col], M[pivot] = M[pivot], M[col]
        p = M[col][col]
        M[col] = [x / p for x in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    return tuple(tuple(row[n:]) for row in M)


def solve(A: Matrix, b: Vector) -> Vector:
    return matvec(inverse(A), b)


def _integer_rows(A: Matrix) -> list:
    rows = []
    for row in A:
        d = lcm(*(x.denominator for x in row)) if row else 1
        rows.append([int(x * d) for x in row])
    return rows


def row_echelon_fraction_free(A: Matrix):
    """Bareiss elimination on an integer-scaled copy of ``A``.

    Returns ``(rows, pivots)`` where ``rows`` is an integer row-echelon form
    and ``pivots`` the pivot column indices.
    """
    M = _integer_rows(A)
    n = len(M)
    m = len(M[0]) if M else 0
    pivots = []
    prev = 1
    r = 0
    for c in range(m):
        if r >= n:
            break
        p = next((i for i in range(r, n) if M[i][c] != 0), None)
        if p is None:
            continue
        M[r], M[p] = M[p], M[r]
        for i in range(r + 1, n):
            for k in range(c + 1, m):
                M[i][k] = (M[r][c] * M[i][k] - M[i][c] * M[r][k]) // prev
            M[i][c] = 0
        prev = M[r][c]
        pivots.append(c)
        r += 1
    return M[:r], pivots


def rank(A: Matrix) -> int:
    return len(row_echelon_fraction_free(A)[1])


def nullspace(A: Matrix) -> list:
    """Exact basis of ``{x : A x = 0}``, one vector per free column."""
    if not A:
        return []
    m = len(A[0])
    rows, pivots = row_echelon_fraction_free(A)
    free = [c for c in range(m) if c not in pivots]
    basis = []
    for fcol in free:
        x = [Fraction(0)] * m
        x[fcol] = Fraction(1)
        for row, pc in reversed(list(zip(rows, pivots))):
            s = sum((Fraction(row[k]) * x[k] for k in range(pc + 1, m)), Fraction(0))
            x[pc] = -s / row[pc]
        basis.append(tuple(x))
    return basis


def column_matrix(vectors: Sequence[Vector]) -> Matrix:
    return transpose(tuple(tuple(v) for v in vectors))
