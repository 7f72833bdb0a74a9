"""Reference dense kernels with exact operation counting.

Each kernel is a plain, BLAS-reference style loop nest. Every arithmetic
operation is tallied in a :class:`FlopCounter`: a fused multiply-add counts
as two flops, any other add, multiply, divide or square root as one. Vector
statements are tallied by their length, so the counts are exact.

Triangular operands may arrive with the unused half filled with NaN; the
triangular kernels never read it.

``alpha``/``beta`` arguments of ``None`` mean "absent" (a unit factor or no
addend) and cost nothing; any other value costs its scaling operations even
if it happens to equal one.
"""

from __future__ import annotations

import math

import numpy as np


class FlopCounter:
    def __init__(self):
        self.flops = 0

    def madd(self, n: int = 1):
        self.flops += 2 * n

    def op(self, n: int = 1):
        self.flops += n


class KernelError(RuntimeError):
    """A kernel precondition failed at runtime (e.g. potrf on a non-SPD matrix)."""


def _op(a: np.ndarray, trans: bool) -> np.ndarray:
    return a.T if trans else a


def gemm(alpha, a, b, beta=None, c=None, trans_a=False, trans_b=False, ctr=None):
    """alpha*op(a)*op(b) + beta*c, column-axpy form; also serves gemv/ger/dot."""
    ctr = ctr or FlopCounter()
    A, B = _op(a, trans_a), _op(b, trans_b)
    m, k = A.shape
    k2, n = B.shape
    if k != k2:
        raise ValueError("gemm: inner dimensions differ")
    if c is None:
        out = np.zeros((m, n))
    else:
        out = np.array(c, dtype=float)
        if beta is not None:
            out *= beta
            ctr.op(m * n)
    for j in range(n):
        for l in range(k):
            temp = B[l, j]
            if alpha is not None:
                temp = alpha * temp
                ctr.op()
            out[:, j] += temp * A[:, l]
            ctr.madd(m)
    return out


def _trmm_left_lower(L, B, ctr):
    n = L.shape[0]
    for j in range(B.shape[1]):
        for k in range(n - 1, -1, -1):
            temp = B[k, j]
            B[k, j] = temp * L[k, k]
            ctr.op()
            if k + 1 < n:
                B[k + 1:, j] += temp * L[k + 1:, k]
                ctr.madd(n - k - 1)


def _trmm_left_upper(U, B, ctr):
    n = U.shape[0]
    for j in range(B.shape[1]):
        for k in range(n):
            temp = B[k, j]
            if k:
                B[:k, j] += temp * U[:k, k]
                ctr.madd(k)
            B[k, j] = temp * U[k, k]
            ctr.op()


def _trsm_left_lower(L, B, ctr):
    n = L.shape[0]
    for j in range(B.shape[1]):
        for k in range(n):
            B[k, j] /= L[k, k]
            ctr.op()
            if k + 1 < n:
                B[k + 1:, j] -= B[k, j] * L[k + 1:, k]
                ctr.madd(n - k - 1)


def _trsm_left_upper(U, B, ctr):
    n = U.shape[0]
    for j in range(B.shape[1]):
        for k in range(n - 1, -1, -1):
            B[k, j] /= U[k, k]
            ctr.op()
            if k:
                B[:k, j] -= B[k, j] * U[:k, k]
                ctr.madd(k)


def _triangular(kind, alpha, t, b, lower, trans_t, side, ctr):
    ctr = ctr or FlopCounter()
    # right-side products work on the transposed system
    if side == "R":
        trans_t = not trans_t
        B = np.array(b, dtype=float).T.copy()
    else:
        B = np.array(b, dtype=float)
    T = _op(t, trans_t)
    eff_lower = lower != trans_t
    if alpha is not None:
        B *= alpha
        ctr.op(B.size)
    if kind == "mm":
        (_trmm_left_lower if eff_lower else _trmm_left_upper)(T, B, ctr)
    else:
        (_trsm_left_lower if eff_lower else _trsm_left_upper)(T, B, ctr)
    return B.T.copy() if side == "R" else B


def trmm(alpha, t, b, lower=True, trans_t=False, side="L", ctr=None):
    """op(T)*B (side L) or B*op(T) (side R) for triangular T."""
    return _triangular("mm", alpha, t, b, lower, trans_t, side, ctr)


def trsm(alpha, t, b, lower=True, trans_t=False, side="L", ctr=None):
    """op(T)^-1*B (side L) or B*op(T)^-1 (side R) for triangular T."""
    return _triangular("sm", alpha, t, b, lower, trans_t, side, ctr)


def diagmul(alpha, d, b, side="L", ctr=None):
    """D*B or B*D with D given as its diagonal vector."""
    ctr = ctr or FlopCounter()
    d = np.asarray(d, dtype=float)
    if alpha is not None:
        d = alpha * d
        ctr.op(d.size)
    out = np.array(b, dtype=float)
    if side == "L":
        out *= d[:, None]
    else:
        out *= d[None, :]
    ctr.op(out.size)
    return out


def diagsolve(alpha, d, b, side="L", ctr=None):
    """D^-1*B or B*D^-1 with D given as its diagonal vector."""
    ctr = ctr or FlopCounter()
    d = np.asarray(d, dtype=float)
    out = np.array(b, dtype=float)
    if alpha is not None:
        s = alpha / d
        ctr.op(d.size)
        out *= s[:, None] if side == "L" else s[None, :]
    else:
        out /= d[:, None] if side == "L" else d[None, :]
    ctr.op(out.size)
    return out


def diaginv(d, ctr=None):
    ctr = ctr or FlopCounter()
    d = np.asarray(d, dtype=float)
    ctr.op(d.size)
    return 1.0 / d


def syrk(alpha, a, beta=None, c=None, trans=True, ctr=None):
    """alpha*A^T*A + beta*C (trans) or alpha*A*A^T + beta*C; lower triangle, mirrored."""
    ctr = ctr or FlopCounter()
    A = a if trans else a.T
    k, n = A.shape
    if c is None:
        out = np.zeros((n, n))
    else:
        out = np.array(c, dtype=float)
    for j in range(n):
        if c is not None and beta is not None:
            out[j:, j] *= beta
            ctr.op(n - j)
        for l in range(k):
            temp = A[l, j]
            if alpha is not None:
                temp = alpha * temp
                ctr.op()
            out[j:, j] += temp * A[l, j:]
            ctr.madd(n - j)
    iu = np.triu_indices(n, 1)
    out[iu] = out.T[iu]
    return out


def syr2k(alpha, a, b, trans=True, ctr=None):
    """alpha*(A^T B + B^T A) (trans) or alpha*(A B^T + B A^T); lower triangle, mirrored."""
    ctr = ctr or FlopCounter()
    A, B = (a, b) if trans else (a.T, b.T)
    k, n = A.shape
    out = np.zeros((n, n))
    for j in range(n):
        for l in range(k):
            t1, t2 = B[l, j], A[l, j]
            if alpha is not None:
                t1, t2 = alpha * t1, alpha * t2
                ctr.op(2)
            out[j:, j] += t1 * A[l, j:] + t2 * B[l, j:]
            ctr.madd(2 * (n - j))
    iu = np.triu_indices(n, 1)
    out[iu] = out.T[iu]
    return out


def axpby(alpha, x, beta, y, trans_x=False, trans_y=False, ctr=None):
    """alpha*op(x) + beta*op(y) out of place."""
    ctr = ctr or FlopCounter()
    out = np.array(_op(y, trans_y), dtype=float)
    X = _op(x, trans_x)
    if beta is not None:
        out *= beta
        ctr.op(out.size)
    if alpha is not None:
        out += alpha * X
        ctr.madd(out.size)
    else:
        out += X
        ctr.op(out.size)
    return out


def add_identity(alpha, beta, x, trans_x=False, ctr=None):
    """alpha*I + beta*op(x); alpha is a plain value added to the diagonal."""
    ctr = ctr or FlopCounter()
    out = np.array(_op(x, trans_x), dtype=float)
    if beta is not None:
        out *= beta
        ctr.op(out.size)
    n = out.shape[0]
    out[np.arange(n), np.arange(n)] += 1.0 if alpha is None else alpha
    ctr.op(n)
    return out


def scal(alpha, x, trans_x=False, ctr=None):
    ctr = ctr or FlopCounter()
    out = alpha * np.array(_op(x, trans_x), dtype=float)
    ctr.op(out.size)
    return out


def transpose(x):
    return np.array(x, dtype=float).T.copy()


def potrf(a, ctr=None):
    """Cholesky A = L L^T (left-looking); reads the lower triangle only."""
    ctr = ctr or FlopCounter()
    n = a.shape[0]
    L = np.full((n, n), np.nan)
    for j in range(n):
        s = a[j, j]
        if j:
            s = s - L[j, :j] @ L[j, :j]
            ctr.madd(j)
        if not s > 0:
            raise KernelError("potrf: matrix is not positive definite")
        L[j, j] = math.sqrt(s)
        ctr.op()
        if j + 1 < n:
            col = a[j + 1:, j].copy()
            if j:
                col -= L[j + 1:, :j] @ L[j, :j]
                ctr.madd((n - j - 1) * j)
            L[j + 1:, j] = col / L[j, j]
            ctr.op(n - j - 1)
    return L


def getrf(a, ctr=None):
    """LU with partial pivoting: returns (perm, L, U) with A[perm] = L U."""
    ctr = ctr or FlopCounter()
    A = np.array(a, dtype=float)
    n = A.shape[0]
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if A[p, k] == 0:
            raise KernelError("getrf: matrix is singular")
        if p != k:
            A[[k, p]] = A[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        if k + 1 < n:
            A[k + 1:, k] /= A[k, k]
            ctr.op(n - k - 1)
            A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k, k + 1:])
            ctr.madd((n - k - 1) ** 2)
    L = np.tril(A, -1) + np.eye(n)
    U = np.triu(A)
    L[np.triu_indices(n, 1)] = np.nan
    U[np.tril_indices(n, -1)] = np.nan
    return perm, L, U


def geqrf(a, ctr=None):
    """Householder QR of a square matrix with explicit Q: returns (Q, R)."""
    ctr = ctr or FlopCounter()
    A = np.array(a, dtype=float)
    n = A.shape[0]
    Q = np.eye(n)
    for k in range(n - 1):
        x = A[k:, k]
        r = n - k
        normx = math.sqrt(x @ x)
        ctr.madd(r)
        ctr.op()
        v = x.copy()
        v[0] += normx if v[0] >= 0 else -normx
        ctr.op()
        vv = v @ v
        ctr.madd(r)
        if vv == 0:
            raise KernelError("geqrf: zero column")
        tau = 2.0 / vv
        ctr.op()
        w = v @ A[k:, k:]
        ctr.madd(r * r)
        w *= tau
        ctr.op(r)
        A[k:, k:] -= np.outer(v, w)
        ctr.madd(r * r)
        u = Q[:, k:] @ v
        ctr.madd(n * r)
        u *= tau
        ctr.op(n)
        Q[:, k:] -= np.outer(u, v)
        ctr.madd(n * r)
    R = np.triu(A)
    R[np.tril_indices(n, -1)] = np.nan
    return Q, R


JACOBI_SWEEPS = 30


def _rotation(two_g, diff, ctr):
    # theta with tan(2 theta) = 2g / diff; 6 counted operations
    theta = 0.5 * math.atan2(two_g, diff)
    ctr.op(6)
    return math.cos(theta), math.sin(theta)


def syev(a, sweeps=JACOBI_SWEEPS, ctr=None):
    """Cyclic Jacobi eigensolver with a fixed sweep count: returns (Q, lam)."""
    ctr = ctr or FlopCounter()
    A = np.array(a, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(sweeps):
        for p in range(n - 1):
            for q in range(p + 1, n):
                c, s = _rotation(2.0 * A[p, q], A[q, q] - A[p, p], ctr)
                # rotate columns then rows: A <- J^T A J with J = [[c, s], [-s, c]] on (p, q)
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
                ctr.op(18 * n)
    return V, np.diag(A).copy()


def gesvd(a, sweeps=JACOBI_SWEEPS, ctr=None):
    """One-sided Jacobi SVD of a square matrix: returns (U, sigma, V) with A = U diag(sigma) V^T."""
    ctr = ctr or FlopCounter()
    U = np.array(a, dtype=float)
    n = U.shape[1]
    m = U.shape[0]
    V = np.eye(n)
    for _ in range(sweeps):
        for p in range(n - 1):
            for q in range(p + 1, n):
                al = U[:, p] @ U[:, p]
                be = U[:, q] @ U[:, q]
                ga = U[:, p] @ U[:, q]
                ctr.madd(3 * m)
                c, s = _rotation(2.0 * ga, be - al, ctr)
                up, uq = U[:, p].copy(), U[:, q].copy()
                U[:, p] = c * up - s * uq
                U[:, q] = s * up + c * uq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
                ctr.op(6 * m + 6 * n)
    sigma = np.empty(n)
    for i in range(n):
        sigma[i] = math.sqrt(U[:, i] @ U[:, i])
        ctr.madd(m)
        ctr.op()
        if sigma[i] == 0:
            raise KernelError("gesvd: rank deficient")
        U[:, i] /= sigma[i]
        ctr.op(m)
    return U, sigma, V


def trtri(t, lower=True, ctr=None):
    """Explicit inverse of a triangular matrix, column by column."""
    ctr = ctr or FlopCounter()
    T = t if lower else t.T
    n = T.shape[0]
    X = np.zeros((n, n))
    for j in range(n):
        x = np.zeros(n)
        x[j] = 1.0
        for k in range(j, n):
            x[k] /= T[k, k]
            ctr.op()
            if k + 1 < n:
                x[k + 1:] -= x[k] * T[k + 1:, k]
                ctr.madd(n - k - 1)
        X[:, j] = x
    if not lower:
        X = X.T.copy()
        X[np.tril_indices(n, -1)] = np.nan
    else:
        X[np.triu_indices(n, 1)] = np.nan
    return X


def getri(a, ctr=None):
    """Explicit inverse by Gauss-Jordan elimination with partial pivoting."""
    ctr = ctr or FlopCounter()
    n = a.shape[0]
    M = np.hstack([np.array(a, dtype=float), np.eye(n)])
    for k in range(n):
        p = k + int(np.argmax(np.abs(M[k:, k])))
        if M[p, k] == 0:
            raise KernelError("getri: matrix is singular")
        if p != k:
            M[[k, p]] = M[[p, k]]
        M[k, k:] /= M[k, k]
        ctr.op(2 * n - k)
        f = M[:, k].copy()
        f[k] = 0.0
        M[:, k:] -= np.outer(f, M[k, k:])
        ctr.madd((n - 1) * (2 * n - k))
    return M[:, n:].copy()


def laswp(perm, b, trans_p=False, side="L"):
    """Apply the permutation P (rows of I in ``perm`` order) without arithmetic."""
    b = np.asarray(b, dtype=float)
    perm = np.asarray(perm, dtype=int)
    if side == "L":
        if not trans_p:
            return b[perm].copy()
        out = np.empty_like(b)
        out[perm] = b
        return out
    if trans_p:
        return b[:, perm].copy()
    out = np.empty_like(b)
    out[:, perm] = b
    return out
