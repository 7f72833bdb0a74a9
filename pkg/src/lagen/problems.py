"""Built-in application problems at desk-scale sizes (largest dimension 40 to 64).

Every entry is input-language text, so the same sources drive the tests,
the CLI (``lagen run --problem a``) and the examples directory.
"""

from __future__ import annotations

from .parser import parse_input
from .problem import Problem

PROBLEMS: dict[str, str] = {
    "a": """
# generalized least squares
n = 60
m = 12
Matrix M(n, n) <SPD>
Matrix X(n, m) <FullRank>
Vector y(n)
b := inv(trans(X) * inv(M) * X) * trans(X) * inv(M) * y
""",
    "b": """
# optimization step, feasibility and optimality parts
n = 60
m = 30
Matrix A(m, n) <FullRank>
Matrix W(n, n) <Diagonal, SPD>
Vector b(m)
Vector c(n)
Vector x(n)
xf := W * trans(A) * inv(A * W * trans(A)) * (b - A * x)
xo := W * (trans(A) * inv(A * W * trans(A)) * A * x - c)
""",
    "c": """
# signal processing
n = 40
k = 39
Matrix A(n, n) <FullRank>
Matrix B(n, n) <FullRank>
Matrix R(k, n)
Matrix L(k, k) <Diagonal>
Vector y(n)
x := inv(trans(inv(A)) * trans(B) * B * inv(A) + trans(R) * L * R) * trans(inv(A)) * trans(B) * B * inv(A) * y
""",
    "d": """
# blocked triangular inversion
n = 48
m = 12
k = 40
Matrix L00(n, n) <LowerTriangular, FullRank>
Matrix L11(m, m) <LowerTriangular, FullRank>
Matrix L22(k, k) <LowerTriangular, FullRank>
Matrix L10(m, n)
Matrix L20(k, n)
Matrix L21(k, m)
X10 := L10 * inv(L00)
X20 := L20 + inv(L22) * L21 * inv(L11) * L10
X11 := inv(L11)
X21 := -1 * inv(L22) * L21
""",
    "e": """
# ensemble Kalman filter analysis step
N = 20
n = 64
m = 48
Matrix B(N, N) <SPD>
Matrix H(m, N) <FullRank>
Matrix R(m, m) <SPD>
Matrix Y(m, n)
Matrix Xb(N, n)
Xa := Xb + inv(inv(B) + trans(H) * inv(R) * H) * trans(H) * inv(R) * (Y - H * Xb)
""",
    "f": """
# image restoration step
n = 64
m = 32
Matrix H(m, n)
Vector y(m)
Vector v(n)
Vector u(n)
Scalar lambda <Positive>
Scalar sigma <Positive>
xk := inv(trans(H) * H + lambda * sigma^2 * I(n)) * (trans(H) * y + lambda * sigma^2 * (v - u))
""",
    "g": """
# randomized matrix inversion, sketch and update
n = 64
q = 8
Matrix W(n, n) <SPD>
Matrix S(n, q) <FullRank>
Matrix A(n, n) <FullRank>
Matrix Xk(n, n)
Lambda := S * inv(trans(S) * trans(A) * W * A * S) * trans(S)
Xk1 := Xk + (I(n) - Xk * trans(A)) * Lambda * trans(A) * W
""",
    "h": """
# randomized matrix inversion, symmetric variant
n = 48
q = 8
Matrix A(n, n) <SPD>
Matrix S(n, q) <FullRank>
Matrix Xk(n, n)
Xk1 := S * inv(trans(S) * A * S) * trans(S) + (I(n) - S * inv(trans(S) * A * S) * trans(S) * A) * Xk * (I(n) - A * S * inv(trans(S) * A * S) * trans(S))
""",
    "i": """
# stochastic Newton update
l = 8
n = 20
m = 64
Matrix W(m, l) <FullRank>
Matrix A(m, n) <FullRank>
Matrix Bk1(n, n) <SPD>
Scalar c <Positive>
Scalar km1 <Positive>
Bk := c * Bk1 * (I(n) - trans(A) * W * inv(km1 * I(l) + trans(W) * A * Bk1 * trans(A) * W) * trans(W) * A * Bk1)
""",
    "j": """
# Tikhonov regularization
n = 64
m = 8
Matrix A(n, m) <FullRank>
Matrix G(m, m)
Vector b(n)
x := inv(trans(A) * A + trans(G) * G) * trans(A) * b
""",
    "k": """
# generalized Tikhonov regularization
n = 64
m = 8
Matrix P(n, n) <SPSD>
Matrix Q(m, m) <SPSD>
Matrix A(n, m) <FullRank>
Vector x0(m)
Vector b(n)
x := inv(trans(A) * P * A + Q) * (trans(A) * P * b + Q * x0)
""",
    "l": """
# linear MMSE estimator
n = 48
m = 36
Matrix A(m, n) <FullRank>
Matrix Cx(n, n) <SPSD>
Matrix Cz(m, m) <SPSD>
Vector x(n)
Vector y(m)
xout := Cx * trans(A) * inv(A * Cx * trans(A) + Cz) * (y - A * x) + x
""",
    "m": """
# Kalman filter step
n = 40
m = 50
Matrix Pb(n, n) <SPD>
Matrix H(m, n) <FullRank>
Matrix R(m, m) <SPSD>
Vector xb(n)
Vector z(m)
K := Pb * trans(H) * inv(H * Pb * trans(H) + R)
xa := xb + K * (z - H * xb)
Pa := (I(n) - K * H) * Pb
""",
    "tikhonov_alpha": """
# Tikhonov regularization with a scaled identity regularizer
n = 64
m = 8
Matrix A(n, m) <FullRank>
Vector b(n)
Scalar alpha <Positive>
x := inv(trans(A) * A + alpha^2 * I(m)) * trans(A) * b
""",
    "restoration": """
# image restoration with a precomputed pseudo-inverse Hd
n = 64
m = 32
Matrix H(m, n)
Matrix Hd(n, m)
Vector y(m)
Vector xk(n)
yk := Hd * y + (I(n) - Hd * H) * xk
""",
    "chain3": """
Matrix A(10, 20)
Matrix B(30, 20)
Matrix C(30, 40)
X := A * trans(B) * C
""",
    "distributive": """
Matrix A(20, 30)
Matrix B(30, 24)
Matrix C(30, 24)
Matrix D(30, 6)
Matrix E(6, 24)
X := A * (B + C + D * E)
""",
    "b_optimality": """
# the optimality part of problem b on its own
n = 60
m = 30
Matrix A(m, n) <FullRank>
Matrix W(n, n) <Diagonal, SPD>
Vector b(m)
Vector c(n)
x := W * (trans(A) * inv(A * W * trans(A)) * b - c)
""",
}

TABLE = tuple("abcdefghijklm")


def problem_source(name: str) -> str:
    try:
        return PROBLEMS[name].lstrip("\n")
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(PROBLEMS)}") from None


def load_problem(name: str, sizes: dict[str, int] | None = None) -> Problem:
    return parse_input(problem_source(name), sizes)
