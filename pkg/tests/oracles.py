"""Independent reference computations used by the tests.

Nothing here imports the package: determinants by permutation sums,
products by triple loops, tensors by explicit index accumulation.
"""
import itertools
from fractions import Fraction


def perm_sign(p):
    sign = 1
    p = list(p)
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                sign = -sign
    return sign


def det_by_permutations(M):
    n = len(M)
    total = Fraction(0)
    for p in itertools.permutations(range(n)):
        term = Fraction(perm_sign(p))
        for i in range(n):
            term *= M[i][p[i]]
        total += term
    return total


def matmul(A, B):
    n, m, p = len(A), len(B), len(B[0])
    return [[sum((A[i][j] * B[j][k] for j in range(m)), Fraction(0)) for k in range(p)] for i in range(n)]


def column_major(C):
    n, p = len(C), len(C[0])
    return [C[i][k] for k in range(p) for i in range(n)]


def row_major(A):
    return [x for row in A for x in row]


def accumulate(terms, dims, out_dim):
    """Dense dict {index: value} of sum_t c_t * prod f_tj[i_j] * out_t[o]."""
    acc = {}
    for coef, factors, out in terms:
        for idx in itertools.product(*(range(d) for d in dims)):
            v = Fraction(coef)
            for f, i in zip(factors, idx):
                v *= f[i]
            if v == 0:
                continue
            for o in range(out_dim):
                if out[o]:
                    key = idx + (o,)
                    acc[key] = acc.get(key, Fraction(0)) + v * out[o]
    return {k: v for k, v in acc.items() if v != 0}


def index_up_to_sign(forms, coeffs):
    """Position of ``coeffs`` or its negation in ``forms``, and the sign."""
    coeffs = tuple(coeffs)
    if coeffs in forms:
        return forms.index(coeffs), 1
    return forms.index(tuple(-c for c in coeffs)), -1


def dictionary_rows(mode_forms, encode, decomp):
    """Rows {candidate index: coefficient * output} re-expressing ``decomp``."""
    rows = {}
    for t in decomp.terms:
        idx, sign = [], t.coefficient
        for forms, f in zip(mode_forms, t.factors):
            i, s = index_up_to_sign(forms, f.coeffs)
            idx.append(i)
            sign *= s
        key = encode(idx)
        vec = [sign * v for v in t.output_vector]
        rows[key] = [a + b for a, b in zip(rows.get(key, [0] * len(vec)), vec)]
    return rows
