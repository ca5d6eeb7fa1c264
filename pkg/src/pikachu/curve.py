"""secp256k1 group arithmetic.

Points are immutable affine values; scalar multiplication runs in Jacobian
coordinates. Generic multiplication uses the GLV endomorphism with wNAF
digits, multiples of the generator use a precomputed 8-bit comb table.
Nothing here is constant time.
"""

from __future__ import annotations

from typing import Iterable, Optional

P = 2**256 - 2**32 - 977
N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
GX = 0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798
GY = 0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8

# Endomorphism (x, y) -> (BETA*x, y) equals multiplication by LAMBDA.
BETA = 0x7AE96A2B657C07106E64479EAC3434E99CF0497512F58995C1396C28719501EE
LAMBDA = 0x5363AD4CC05C30E0A5261C028812645A122E22EA20816678DF02967C1B23BD72
_A1 = 0x3086D221A7D46BCDE86C90E49284EB15
_B1 = -0xE4437ED6010E88286F547FA90ABFE4C3
_A2 = 0x114CA50F7A8E2F3F657C1108D9D44CFD8
_B2 = _A1

POINT_SIZE = 33
SCALAR_SIZE = 32

_JINF = (0, 1, 0)


class InvalidPointError(ValueError):
    pass


# -- Jacobian primitives (tuples, no validation) --------------------------


def _jdouble(X, Y, Z):
    if not Z or not Y:
        return _JINF
    YY = Y * Y % P
    S = 4 * X * YY % P
    M = 3 * X * X % P
    X3 = (M * M - 2 * S) % P
    return X3, (M * (S - X3) - 8 * YY * YY) % P, 2 * Y * Z % P


def _jadd_affine(X1, Y1, Z1, x2, y2):
    if not Z1:
        return x2, y2, 1
    Z1Z1 = Z1 * Z1 % P
    H = (x2 * Z1Z1 - X1) % P
    R = (y2 * Z1 * Z1Z1 - Y1) % P
    if not H:
        if not R:
            return _jdouble(X1, Y1, Z1)
        return _JINF
    HH = H * H % P
    HHH = H * HH % P
    V = X1 * HH % P
    X3 = (R * R - HHH - 2 * V) % P
    return X3, (R * (V - X3) - Y1 * HHH) % P, H * Z1 % P


def _jadd(X1, Y1, Z1, X2, Y2, Z2):
    if not Z1:
        return X2, Y2, Z2
    if not Z2:
        return X1, Y1, Z1
    Z1Z1 = Z1 * Z1 % P
    Z2Z2 = Z2 * Z2 % P
    U1 = X1 * Z2Z2 % P
    S1 = Y1 * Z2 * Z2Z2 % P
    H = (X2 * Z1Z1 - U1) % P
    R = (Y2 * Z1 * Z1Z1 - S1) % P
    if not H:
        if not R:
            return _jdouble(X1, Y1, Z1)
        return _JINF
    HH = H * H % P
    HHH = H * HH % P
    V = U1 * HH % P
    X3 = (R * R - HHH - 2 * V) % P
    return X3, (R * (V - X3) - S1 * HHH) % P, H * Z1 * Z2 % P


def _batch_to_affine(points):
    """Normalize Jacobian points with a single field inversion."""
    prefix = []
    acc = 1
    for _, _, Z in points:
        prefix.append(acc)
        if Z:
            acc = acc * Z % P
    inv = pow(acc, -1, P)
    out = [None] * len(points)
    for idx in range(len(points) - 1, -1, -1):
        X, Y, Z = points[idx]
        if not Z:
            continue
        zi = inv * prefix[idx] % P
        inv = inv * Z % P
        zi2 = zi * zi % P
        out[idx] = (X * zi2 % P, Y * zi2 * zi % P)
    return out


def _wnaf(k: int, w: int) -> list[int]:
    digits = []
    half = 1 << (w - 1)
    full = 1 << w
    while k:
        if k & 1:
            d = k & (full - 1)
            if d >= half:
                d -= full
            k -= d
        else:
            d = 0
        digits.append(d)
        k >>= 1
    return digits


def _glv_split(k: int) -> tuple[int, int]:
    c1 = (_B2 * k + N // 2) // N
    c2 = (-_B1 * k + N // 2) // N
    return k - c1 * _A1 - c2 * _A2, -c1 * _B1 - c2 * _B2


def _odd_multiples(x: int, y: int, count: int):
    base = (x, y, 1)
    twice = _jdouble(*base)
    table = [base]
    for _ in range(count - 1):
        table.append(_jadd(*table[-1], *twice))
    return _batch_to_affine(table)


def _jmul_small(k: int, x: int, y: int):
    acc = _JINF
    for bit in bin(k)[2:]:
        acc = _jdouble(*acc)
        if bit == "1":
            acc = _jadd_affine(*acc, x, y)
    return acc


_WINDOW = 5


def _jmul(k: int, x: int, y: int):
    k %= N
    if not k:
        return _JINF
    if k < 1 << 32:
        return _jmul_small(k, x, y)
    k1, k2 = _glv_split(k)
    table1 = _odd_multiples(x, y, 1 << (_WINDOW - 2))
    table2 = [(BETA * tx % P, ty) for tx, ty in table1]
    streams = []
    for part, table in ((k1, table1), (k2, table2)):
        if part < 0:
            part = -part
            table = [(tx, P - ty) for tx, ty in table]
        streams.append((_wnaf(part, _WINDOW), table))
    (d1, t1), (d2, t2) = streams
    d1 = d1 + [0] * (len(d2) - len(d1))
    d2 = d2 + [0] * (len(d1) - len(d2))
    X, Y, Z = _JINF
    for pos in range(len(d1) - 1, -1, -1):
        # doubling, inlined: this loop dominates verification time
        if Z:
            YY = Y * Y % P
            S = 4 * X * YY % P
            M = 3 * X * X % P
            X3 = (M * M - 2 * S) % P
            Y, Z = (M * (S - X3) - 8 * YY * YY) % P, 2 * Y * Z % P
            X = X3
        for d, table in ((d1[pos], t1), (d2[pos], t2)):
            if not d:
                continue
            if d > 0:
                x2, y2 = table[d >> 1]
            else:
                x2, y2 = table[(-d) >> 1]
                y2 = P - y2
            if not Z:
                X, Y, Z = x2, y2, 1
                continue
            Z1Z1 = Z * Z % P
            H = (x2 * Z1Z1 - X) % P
            R = (y2 * Z * Z1Z1 - Y) % P
            if not H:
                X, Y, Z = _jdouble(X, Y, Z) if not R else _JINF
                continue
            HH = H * H % P
            HHH = H * HH % P
            V = X * HH % P
            X3 = (R * R - HHH - 2 * V) % P
            Y = (R * (V - X3) - Y * HHH) % P
            Z = H * Z % P
            X = X3
    return X, Y, Z


_COMB: Optional[list] = None


def _comb_table():
    global _COMB
    if _COMB is None:
        rows = []
        base = (GX, GY, 1)
        for _ in range(32):
            row = [_JINF]
            acc = _JINF
            for _ in range(255):
                acc = _jadd(*acc, *base)
                row.append(acc)
            rows.append([None] + _batch_to_affine(row[1:]))
            for _ in range(8):
                base = _jdouble(*base)
        _COMB = rows
    return _COMB


def _jmul_base(k: int):
    k %= N
    table = _comb_table()
    acc = _JINF
    row = 0
    while k:
        byte = k & 0xFF
        if byte:
            acc = _jadd_affine(*acc, *table[row][byte])
        k >>= 8
        row += 1
    return acc


def _from_jacobian(J) -> "Point":
    X, Y, Z = J
    if not Z:
        return INFINITY
    zi = pow(Z, -1, P)
    zi2 = zi * zi % P
    return Point._unchecked(X * zi2 % P, Y * zi2 * zi % P)


def _lift_x(x: int, odd: bool) -> Optional[tuple[int, int]]:
    if x >= P:
        return None
    y2 = (pow(x, 3, P) + 7) % P
    y = pow(y2, (P + 1) // 4, P)
    if y * y % P != y2:
        return None
    if (y & 1) != odd:
        y = P - y
    return x, y


# -- public API ----------------------------------------------------------


class Point:
    """An element of the secp256k1 group (cofactor 1, so every curve point
    is in the prime-order subgroup). ``Point(None, None)`` is the identity."""

    __slots__ = ("x", "y")

    def __init__(self, x: Optional[int], y: Optional[int]):
        if x is not None:
            if y is None or not (0 <= x < P and 0 <= y < P):
                raise InvalidPointError("coordinates out of range")
            if (y * y - x * x * x - 7) % P:
                raise InvalidPointError("point is not on the curve")
        elif y is not None:
            raise InvalidPointError("identity must have no coordinates")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def _unchecked(cls, x, y) -> "Point":
        pt = object.__new__(cls)
        object.__setattr__(pt, "x", x)
        object.__setattr__(pt, "y", y)
        return pt

    def __setattr__(self, name, value):
        raise AttributeError("Point is immutable")

    def __reduce__(self):
        return (Point, (self.x, self.y))

    @property
    def is_infinity(self) -> bool:
        return self.x is None

    def _jac(self):
        return _JINF if self.x is None else (self.x, self.y, 1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Point):
            return NotImplemented
        return self.x == other.x and self.y == other.y

    def __hash__(self) -> int:
        return hash((self.x, self.y))

    def __neg__(self) -> "Point":
        if self.x is None:
            return self
        return Point._unchecked(self.x, (P - self.y) % P)

    def __add__(self, other: "Point") -> "Point":
        if not isinstance(other, Point):
            return NotImplemented
        if other.x is None:
            return self
        return _from_jacobian(_jadd_affine(*self._jac(), other.x, other.y))

    def __sub__(self, other: "Point") -> "Point":
        return self + (-other)

    def __mul__(self, k: int) -> "Point":
        if not isinstance(k, int):
            return NotImplemented
        if self.x is None:
            return self
        if self.x == GX and self.y == GY:
            return _from_jacobian(_jmul_base(k))
        return _from_jacobian(_jmul(k, self.x, self.y))

    __rmul__ = __mul__

    def to_bytes(self) -> bytes:
        """33-byte compressed encoding; the identity is 33 zero bytes."""
        if self.x is None:
            return bytes(POINT_SIZE)
        return bytes([2 | (self.y & 1)]) + self.x.to_bytes(32, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> "Point":
        if len(data) != POINT_SIZE:
            raise InvalidPointError(f"expected {POINT_SIZE} bytes, got {len(data)}")
        if data == bytes(POINT_SIZE):
            return INFINITY
        if data[0] not in (2, 3):
            raise InvalidPointError("bad prefix byte")
        lifted = _lift_x(int.from_bytes(data[1:], "big"), bool(data[0] & 1))
        if lifted is None:
            raise InvalidPointError("x coordinate is not on the curve")
        return cls._unchecked(*lifted)

    def hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def fromhex(cls, text: str) -> "Point":
        return cls.from_bytes(bytes.fromhex(text))

    def __repr__(self) -> str:
        if self.x is None:
            return "Point(infinity)"
        return f"Point({self.hex()[:18]}...)"


INFINITY = Point(None, None)
G = Point(GX, GY)


def base_mul(k: int) -> Point:
    """k*G using the precomputed comb table."""
    return _from_jacobian(_jmul_base(k))


def small_mul(k: int, point: Point) -> Point:
    """k*point for small non-negative k (share indices and the like)."""
    if point.x is None or k == 0:
        return INFINITY
    return _from_jacobian(_jmul_small(k, point.x, point.y))


def point_sum(points: Iterable[Point]) -> Point:
    acc = _JINF
    for pt in points:
        if pt.x is not None:
            acc = _jadd_affine(*acc, pt.x, pt.y)
    return _from_jacobian(acc)


def eval_commitments(index: int, commitments: list[Point] | tuple[Point, ...]) -> Point:
    """sum_k index^k * commitments[k], evaluated with Horner's rule."""
    acc = _JINF
    for pt in reversed(commitments):
        if acc[2]:
            X, Y, Z = acc
            # index is small, so a double-and-add over its bits is cheap
            step = _JINF
            for bit in bin(index)[2:]:
                step = _jdouble(*step)
                if bit == "1":
                    step = _jadd(*step, X, Y, Z)
            acc = step
        if pt.x is not None:
            acc = _jadd_affine(*acc, pt.x, pt.y)
    return _from_jacobian(acc)


def check_linear(z: int, R: Point, c: int, Y: Point) -> bool:
    """Return True iff z*G == R + c*Y, without normalizing either side."""
    lhs = _jmul_base(z)
    rhs = _jmul(c, Y.x, Y.y) if Y.x is not None else _JINF
    if R.x is not None:
        rhs = _jadd_affine(*rhs, R.x, R.y)
    X1, Y1, Z1 = lhs
    X2, Y2, Z2 = rhs
    if not Z1 or not Z2:
        return not Z1 and not Z2
    Z1Z1 = Z1 * Z1 % P
    Z2Z2 = Z2 * Z2 % P
    return (X1 * Z2Z2 - X2 * Z1Z1) % P == 0 and (Y1 * Z2 * Z2Z2 - Y2 * Z1 * Z1Z1) % P == 0
