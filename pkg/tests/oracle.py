"""Slow, independent reference arithmetic used only as a test oracle.

Textbook affine secp256k1 formulas with no shared code from the package,
plus OpenSSL (through ``cryptography``) for generator multiples.
"""

import hashlib

from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ec

P = 2**256 - 2**32 - 977
N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
G = (
    0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798,
    0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8,
)


def add(p1, p2):
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    (x1, y1), (x2, y2) = p1, p2
    if x1 == x2 and (y1 + y2) % P == 0:
        return None
    if p1 == p2:
        lam = 3 * x1 * x1 * pow(2 * y1, -1, P) % P
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, P) % P
    x3 = (lam * lam - x1 - x2) % P
    return x3, (lam * (x1 - x3) - y1) % P


def mul(k, pt=G):
    k %= N
    acc = None
    while k:
        if k & 1:
            acc = add(acc, pt)
        pt = add(pt, pt)
        k >>= 1
    return acc


def compress(pt) -> bytes:
    if pt is None:
        return bytes(33)
    return bytes([2 | (pt[1] & 1)]) + pt[0].to_bytes(32, "big")


def decompress(data: bytes):
    if data == bytes(33):
        return None
    x = int.from_bytes(data[1:], "big")
    y = pow((x**3 + 7) % P, (P + 1) // 4, P)
    if y & 1 != data[0] & 1:
        y = P - y
    return x, y


def openssl_pubkey(k: int) -> bytes:
    key = ec.derive_private_key(k, ec.SECP256K1())
    return key.public_key().public_bytes(serialization.Encoding.X962, serialization.PublicFormat.CompressedPoint)


def h_scalar(tag: str, data: bytes) -> int:
    """Domain-separated hash to [1, N): shake-256, 64 bytes, wide reduction."""
    wide = hashlib.shake_256(b"pikachu/v1/" + tag.encode() + b"\x00" + data).digest(64)
    return 1 + int.from_bytes(wide, "big") % (N - 1)


def schnorr_holds(Y: bytes, msg: bytes, R: bytes, z: int, tag: str = "SIG") -> bool:
    """zG == R + H(m || R || Y) Y, all in the affine reference."""
    c = h_scalar(tag, msg + R + Y)
    return mul(z) == add(decompress(R), mul(c, decompress(Y)))
