"""secp256k1 group arithmetic.

Affine points are (x, y) integer tuples; ``None`` is the point at infinity.
Scalar multiplication runs in Jacobian coordinates with a precomputed
4-bit window table for the generator. None of this is constant-time: the
library targets simulation and desk-scale testing, not hostile production
deployments.
"""

from typing import Optional, Tuple

try:  # gmpy2 speeds 256-bit modular arithmetic up ~4x; plain ints work too
    from gmpy2 import mpz as _mpz
except ImportError:  # pragma: no cover
    _mpz = int

Point = Tuple[int, int]

# secp256k1 domain parameters (SEC2).
P = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F
N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
G: Point = (
    0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798,
    0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8,
)


def is_on_curve(point: Optional[Point]) -> bool:
    if point is None:
        return True
    x, y = point
    return (y * y - x * x * x - 7) % P == 0


def point_neg(point: Optional[Point]) -> Optional[Point]:
    if point is None:
        return None
    x, y = point
    return (x, (-y) % P)


def point_add(p1: Optional[Point], p2: Optional[Point]) -> Optional[Point]:
    """Affine addition; slow but simple, used for aggregation and setup."""
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    x1, y1 = p1
    x2, y2 = p2
    if x1 == x2 and (y1 + y2) % P == 0:
        return None
    if p1 == p2:
        lam = (3 * x1 * x1) * pow(2 * y1, P - 2, P) % P
    else:
        lam = (y2 - y1) * pow(x2 - x1, P - 2, P) % P
    x3 = (lam * lam - x1 - x2) % P
    return (x3, (lam * (x1 - x3) - y1) % P)


# Jacobian coordinates: (X, Y, Z) with x = X/Z^2, y = Y/Z^3; Z == 0 is infinity.
_P = _mpz(P)
_JINF = (_mpz(1), _mpz(1), _mpz(0))


def _jac_double(pt):
    X, Y, Z = pt
    if Z == 0 or Y == 0:
        return _JINF
    S = 4 * X * Y * Y % _P
    M = 3 * X * X % _P
    X3 = (M * M - 2 * S) % _P
    Y3 = (M * (S - X3) - 8 * Y * Y * Y * Y) % _P
    Z3 = 2 * Y * Z % _P
    return (X3, Y3, Z3)


def _jac_add_mixed(pt, aff):
    """Add an affine point to a Jacobian point."""
    X1, Y1, Z1 = pt
    if Z1 == 0:
        x, y = aff
        return (x, y, 1)
    x2, y2 = aff
    Z1Z1 = Z1 * Z1 % _P
    U2 = x2 * Z1Z1 % _P
    S2 = y2 * Z1 * Z1Z1 % _P
    if U2 == X1:
        if S2 != Y1:
            return _JINF
        return _jac_double(pt)
    H = (U2 - X1) % _P
    HH = H * H % _P
    I = 4 * HH % _P
    J = H * I % _P
    r = 2 * (S2 - Y1) % _P
    V = X1 * I % _P
    X3 = (r * r - J - 2 * V) % _P
    Y3 = (r * (V - X3) - 2 * Y1 * J) % _P
    Z3 = 2 * Z1 * H % _P
    return (X3, Y3, Z3)


def _jac_to_affine(pt) -> Optional[Point]:
    X, Y, Z = pt
    if Z == 0:
        return None
    zinv = pow(Z, P - 2, P)
    zinv2 = zinv * zinv % P
    return (int(X * zinv2 % P), int(Y * zinv2 * zinv % P))


def scalar_mult(k: int, point: Optional[Point]) -> Optional[Point]:
    """k * point for an arbitrary affine point."""
    k %= N
    if k == 0 or point is None:
        return None
    aff = (_mpz(point[0]), _mpz(point[1]))
    acc = _JINF
    for bit in bin(k)[2:]:
        acc = _jac_double(acc)
        if bit == "1":
            acc = _jac_add_mixed(acc, aff)
    return _jac_to_affine(acc)


def _build_base_table():
    # TABLE[w][j-1] == (j << (4*w)) * G, affine; 64 nibble positions.
    table = []
    row_base: Optional[Point] = G
    for _ in range(64):
        row = []
        acc: Optional[Point] = None
        for _ in range(15):
            acc = point_add(acc, row_base)
            row.append(acc)
        table.append([(_mpz(x), _mpz(y)) for x, y in row])
        row_base = point_add(row[7], row[7])  # 16 * row_base
    return table


_BASE_TABLE = _build_base_table()


def scalar_mult_base(k: int) -> Optional[Point]:
    """k * G via the fixed-base window table."""
    k %= N
    if k == 0:
        return None
    acc = _JINF
    w = 0
    while k:
        nib = k & 15
        if nib:
            acc = _jac_add_mixed(acc, _BASE_TABLE[w][nib - 1])
        k >>= 4
        w += 1
    return _jac_to_affine(acc)


def lift_x(x: int, y_odd: bool) -> Point:
    """Recover the curve point with the given x and y parity."""
    if not 0 <= x < P:
        raise ValueError("x out of range")
    y_sq = (pow(x, 3, P) + 7) % P
    y = pow(y_sq, (P + 1) // 4, P)
    if y * y % P != y_sq:
        raise ValueError("x is not on the curve")
    if bool(y & 1) != y_odd:
        y = P - y
    return (x, y)
