"""Hashing, address derivation and EIP-712 / transfer-authorization signing.

Pure-Python Keccak-256 (original padding, not SHA-3) and secp256k1 ECDSA
with deterministic RFC-6979 nonces and low-s normalization, plus the typed
digest construction used to authorize token transfers.

All functions are pure; no module-level mutable state beyond precomputed
constant tables.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

from .errors import InvalidKey, InvalidSignature

# ---------------------------------------------------------------------------
# Keccak-256
# ---------------------------------------------------------------------------

_KECCAK_ROUND_CONSTANTS = (
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A,
    0x8000000080008000, 0x000000000000808B, 0x0000000080000001,
    0x8000000080008081, 0x8000000000008009, 0x000000000000008A,
    0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089,
    0x8000000000008003, 0x8000000000008002, 0x8000000000000080,
    0x000000000000800A, 0x800000008000000A, 0x8000000080008081,
    0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
)

# rotation offsets indexed [x][y]
_KECCAK_ROTATIONS = (
    (0, 36, 3, 41, 18),
    (1, 44, 10, 45, 2),
    (62, 6, 43, 15, 61),
    (28, 55, 25, 21, 56),
    (27, 20, 39, 8, 14),
)

_MASK64 = (1 << 64) - 1
_RATE = 136  # bytes, for 256-bit output


def _rol(value: int, shift: int) -> int:
    shift %= 64
    return ((value << shift) | (value >> (64 - shift))) & _MASK64


def _keccak_f(lanes: list[list[int]]) -> None:
    for rc in _KECCAK_ROUND_CONSTANTS:
        # theta
        c = [lanes[x][0] ^ lanes[x][1] ^ lanes[x][2] ^ lanes[x][3] ^ lanes[x][4]
             for x in range(5)]
        d = [c[(x - 1) % 5] ^ _rol(c[(x + 1) % 5], 1) for x in range(5)]
        for x in range(5):
            for y in range(5):
                lanes[x][y] ^= d[x]
        # rho + pi
        b = [[0] * 5 for _ in range(5)]
        for x in range(5):
            for y in range(5):
                b[y][(2 * x + 3 * y) % 5] = _rol(lanes[x][y], _KECCAK_ROTATIONS[x][y])
        # chi
        for x in range(5):
            for y in range(5):
                lanes[x][y] = b[x][y] ^ ((~b[(x + 1) % 5][y]) & b[(x + 2) % 5][y])
        # iota
        lanes[0][0] ^= rc


def keccak256(data: bytes) -> bytes:
    """Keccak-256 digest with the original 0x01 domain padding."""
    padded = bytearray(data)
    pad_len = _RATE - (len(padded) % _RATE)
    if pad_len == 1:
        padded += b"\x81"
    else:
        padded += b"\x01" + b"\x00" * (pad_len - 2) + b"\x80"
    lanes = [[0] * 5 for _ in range(5)]
    for block_start in range(0, len(padded), _RATE):
        block = padded[block_start:block_start + _RATE]
        for i in range(_RATE // 8):
            x, y = i % 5, i // 5
            lanes[x][y] ^= int.from_bytes(block[8 * i:8 * i + 8], "little")
        _keccak_f(lanes)
    out = bytearray()
    for i in range(4):  # 32 bytes = 4 lanes
        x, y = i % 5, i // 5
        out += lanes[x][y].to_bytes(8, "little")
    return bytes(out)


# ---------------------------------------------------------------------------
# secp256k1
# ---------------------------------------------------------------------------

_P = 2 ** 256 - 2 ** 32 - 977
_N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
_GX = 0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798
_GY = 0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8

CURVE_ORDER = _N  # group order; valid private keys are 1..CURVE_ORDER-1

_INFINITY = None  # point at infinity marker (affine)


def _jacobian_double(p):
    x, y, z = p
    if y == 0:
        return (0, 0, 0)
    ysq = (y * y) % _P
    s = (4 * x * ysq) % _P
    m = (3 * x * x) % _P
    nx = (m * m - 2 * s) % _P
    ny = (m * (s - nx) - 8 * ysq * ysq) % _P
    nz = (2 * y * z) % _P
    return (nx, ny, nz)


def _jacobian_add(p, q):
    if p[2] == 0:
        return q
    if q[2] == 0:
        return p
    z1sq = (p[2] * p[2]) % _P
    z2sq = (q[2] * q[2]) % _P
    u1 = (p[0] * z2sq) % _P
    u2 = (q[0] * z1sq) % _P
    s1 = (p[1] * z2sq * q[2]) % _P
    s2 = (q[1] * z1sq * p[2]) % _P
    if u1 == u2:
        if s1 != s2:
            return (0, 0, 0)  # P + (-P) = infinity
        return _jacobian_double(p)
    h = (u2 - u1) % _P
    r = (s2 - s1) % _P
    hsq = (h * h) % _P
    hcb = (h * hsq) % _P
    u1hsq = (u1 * hsq) % _P
    nx = (r * r - hcb - 2 * u1hsq) % _P
    ny = (r * (u1hsq - nx) - s1 * hcb) % _P
    nz = (h * p[2] * q[2]) % _P
    return (nx, ny, nz)


def _jacobian_to_affine(p):
    if p[2] == 0:
        return _INFINITY
    zinv = pow(p[2], -1, _P)
    zinv2 = (zinv * zinv) % _P
    return ((p[0] * zinv2) % _P, (p[1] * zinv2 * zinv) % _P)


def _to_jacobian(p):
    if p is _INFINITY:
        return (0, 0, 0)
    return (p[0], p[1], 1)


def _scalar_mult(k: int, point) -> tuple | None:
    k %= _N
    if k == 0 or point is _INFINITY:
        return _INFINITY
    result = (0, 0, 0)
    addend = _to_jacobian(point)
    while k:
        if k & 1:
            result = _jacobian_add(result, addend)
        addend = _jacobian_double(addend)
        k >>= 1
    return _jacobian_to_affine(result)


# precomputed powers-of-two multiples of the generator, affine
_G_POWERS: list[tuple[int, int]] = []


def _build_g_table() -> None:
    p = (_GX, _GY)
    for _ in range(256):
        _G_POWERS.append(p)
        p = _jacobian_to_affine(_jacobian_double(_to_jacobian(p)))


_build_g_table()


def _scalar_mult_g(k: int):
    k %= _N
    if k == 0:
        return _INFINITY
    result = (0, 0, 0)
    bit = 0
    while k:
        if k & 1:
            result = _jacobian_add(result, _to_jacobian(_G_POWERS[bit]))
        bit += 1
        k >>= 1
    return _jacobian_to_affine(result)


def _is_on_curve(point) -> bool:
    if point is _INFINITY:
        return False
    x, y = point
    return (y * y - x * x * x - 7) % _P == 0


# ---------------------------------------------------------------------------
# Addresses and signatures
# ---------------------------------------------------------------------------

ZERO_ADDRESS = "0x" + "00" * 20


def address_from_bytes(raw: bytes) -> str:
    if len(raw) != 20:
        raise ValueError("address must be 20 bytes")
    return "0x" + raw.hex()


def address_to_bytes(address: str) -> bytes:
    if not is_address(address):
        raise ValueError(f"not a valid address: {address!r}")
    return bytes.fromhex(address[2:])


def is_address(value) -> bool:
    if not isinstance(value, str) or len(value) != 42 or not value.startswith("0x"):
        return False
    hexpart = value[2:]
    return all(c in "0123456789abcdef" for c in hexpart)


def public_key(private_key: int) -> tuple[int, int]:
    """Affine public point for a private scalar."""
    if not 1 <= private_key < _N:
        raise InvalidKey(f"private key out of range")
    return _scalar_mult_g(private_key)


def derive_address(point: tuple[int, int]) -> str:
    """Address = last 20 bytes of keccak256(X || Y), 64-byte encoding."""
    if point is _INFINITY or not _is_on_curve(point):
        raise InvalidKey("point not on secp256k1")
    encoded = point[0].to_bytes(32, "big") + point[1].to_bytes(32, "big")
    return address_from_bytes(keccak256(encoded)[-20:])


def address_of_key(private_key: int) -> str:
    return derive_address(public_key(private_key))


@dataclass(frozen=True)
class Signature:
    r: int
    s: int
    v: int  # 27 or 28

    def to_hex(self) -> str:
        return "0x" + self.r.to_bytes(32, "big").hex() \
            + self.s.to_bytes(32, "big").hex() + bytes([self.v]).hex()

    @classmethod
    def from_hex(cls, text: str) -> "Signature":
        if not isinstance(text, str) or not text.startswith("0x") or len(text) != 132:
            raise InvalidSignature("signature must be 65 bytes of 0x-hex")
        try:
            raw = bytes.fromhex(text[2:])
        except ValueError as exc:
            raise InvalidSignature("signature is not valid hex") from exc
        return cls(
            r=int.from_bytes(raw[:32], "big"),
            s=int.from_bytes(raw[32:64], "big"),
            v=raw[64],
        )


def _rfc6979_nonce(digest: bytes, private_key: int) -> int:
    """Deterministic per-signature nonce (HMAC-SHA256 construction)."""
    x = private_key.to_bytes(32, "big")
    v = b"\x01" * 32
    k = b"\x00" * 32
    k = hmac.new(k, v + b"\x00" + x + digest, hashlib.sha256).digest()
    v = hmac.new(k, v, hashlib.sha256).digest()
    k = hmac.new(k, v + b"\x01" + x + digest, hashlib.sha256).digest()
    v = hmac.new(k, v, hashlib.sha256).digest()
    while True:
        v = hmac.new(k, v, hashlib.sha256).digest()
        candidate = int.from_bytes(v, "big")
        if 1 <= candidate < _N:
            return candidate
        k = hmac.new(k, v + b"\x00", hashlib.sha256).digest()
        v = hmac.new(k, v, hashlib.sha256).digest()


def sign(digest: bytes, private_key: int) -> Signature:
    """Sign a 32-byte digest; deterministic, low-s, recoverable."""
    if len(digest) != 32:
        raise ValueError("digest must be 32 bytes")
    if not 1 <= private_key < _N:
        raise InvalidKey("private key out of range")
    z = int.from_bytes(digest, "big")
    k = _rfc6979_nonce(digest, private_key)
    while True:
        point = _scalar_mult_g(k)
        r = point[0] % _N
        if r == 0 or point[0] >= _N:
            k = (k + 1) % _N or 1  # negligible probability; keep deterministic
            continue
        s = (pow(k, -1, _N) * (z + r * private_key)) % _N
        if s == 0:
            k = (k + 1) % _N or 1
            continue
        recid = point[1] & 1
        if s > _N // 2:
            s = _N - s
            recid ^= 1
        return Signature(r=r, s=s, v=27 + recid)


def recover(digest: bytes, sig: Signature) -> str:
    """Recover the signer address from a low-s recoverable signature."""
    if len(digest) != 32:
        raise ValueError("digest must be 32 bytes")
    if sig.v not in (27, 28):
        raise InvalidSignature("v must be 27 or 28")
    if not (1 <= sig.r < _N) or not (1 <= sig.s < _N):
        raise InvalidSignature("r/s out of range")
    if sig.s > _N // 2:
        raise InvalidSignature("high-s signature rejected")
    x = sig.r
    # curve point with that x; recid parity picks the y root
    alpha = (pow(x, 3, _P) + 7) % _P
    y = pow(alpha, (_P + 1) // 4, _P)
    if (y * y) % _P != alpha:
        raise InvalidSignature("r is not the x of a curve point")
    if y & 1 != (sig.v - 27):
        y = _P - y
    r_point = (x, y)
    z = int.from_bytes(digest, "big")
    r_inv = pow(sig.r, -1, _N)
    u1 = (-z * r_inv) % _N
    u2 = (sig.s * r_inv) % _N
    q = _jacobian_to_affine(
        _jacobian_add(
            _to_jacobian(_scalar_mult_g(u1)),
            _to_jacobian(_scalar_mult(u2, r_point)),
        )
    )
    if q is _INFINITY:
        raise InvalidSignature("recovered point at infinity")
    return derive_address(q)


# ---------------------------------------------------------------------------
# EIP-712 domain and transfer-authorization digests
# ---------------------------------------------------------------------------

_DOMAIN_TYPE = b"EIP712Domain(string name,string version,uint256 chainId,address verifyingContract)"
_TRANSFER_AUTH_TYPE = (
    b"TransferWithAuthorization(address from,address to,uint256 value,"
    b"uint256 validAfter,uint256 validBefore,bytes32 nonce)"
)

DOMAIN_TYPEHASH = keccak256(_DOMAIN_TYPE)
TRANSFER_AUTH_TYPEHASH = keccak256(_TRANSFER_AUTH_TYPE)


def _pad32(value: int) -> bytes:
    return value.to_bytes(32, "big")


def _pad32_address(address: str) -> bytes:
    return b"\x00" * 12 + address_to_bytes(address)


@dataclass(frozen=True)
class Eip712Domain:
    name: str
    version: str
    chain_id: int
    verifying_contract: str


@dataclass(frozen=True)
class TransferAuthorization:
    """EIP-3009 transfer tuple: who pays whom, how much, and when it is valid."""
    from_addr: str
    to_addr: str
    value: int
    valid_after: int
    valid_before: int
    nonce: bytes  # 32 bytes

    def __post_init__(self):
        if len(self.nonce) != 32:
            raise ValueError("nonce must be 32 bytes")
        if self.value < 0:
            raise ValueError("value must be nonnegative")


def domain_separator(domain: Eip712Domain) -> bytes:
    return keccak256(
        DOMAIN_TYPEHASH
        + keccak256(domain.name.encode())
        + keccak256(domain.version.encode())
        + _pad32(domain.chain_id)
        + _pad32_address(domain.verifying_contract)
    )


def transfer_auth_digest(separator: bytes, auth: TransferAuthorization) -> bytes:
    struct_hash = keccak256(
        TRANSFER_AUTH_TYPEHASH
        + _pad32_address(auth.from_addr)
        + _pad32_address(auth.to_addr)
        + _pad32(auth.value)
        + _pad32(auth.valid_after)
        + _pad32(auth.valid_before)
        + auth.nonce
    )
    return keccak256(b"\x19\x01" + separator + struct_hash)
