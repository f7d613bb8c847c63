"""RSA full-domain-hash signatures, Chaum blinding and address derivation.

The blinding factor doubles as the user's secret commitment function for the
output address: ``blind`` hides ``k_out`` from the signer, ``unblind`` strips
the factor back off the signer's answer.
"""
from __future__ import annotations

import enum
import hashlib
import math
import random
import secrets
from dataclasses import dataclass, field

import gmpy2

from .wire import DecodeError, Reader, Writer

SUPPORTED_BITS = (512, 1024, 2048)
TEST_ONLY_BITS = 512
PUBLIC_EXPONENT = 65537
ADDRESS_LEN = 20

_system_rng = secrets.SystemRandom()


class CryptoError(ValueError):
    pass


@dataclass(frozen=True)
class PublicKey:
    n: int
    e: int = PUBLIC_EXPONENT

    def to_bytes(self) -> bytes:
        return Writer().bigint(self.n).bigint(self.e).getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PublicKey":
        r = Reader(data)
        key = cls.read(r)
        r.finish()
        return key

    @classmethod
    def read(cls, r: Reader) -> "PublicKey":
        n, e = r.bigint(), r.bigint()
        if n < 3 or e < 3:
            raise DecodeError("malformed public key")
        return cls(n, e)

    @property
    def bits(self) -> int:
        return self.n.bit_length()

    def hex(self) -> str:
        return self.to_bytes().hex()


@dataclass(frozen=True)
class KeyPair:
    public: PublicKey
    d: int = field(repr=False)

    @property
    def address(self) -> "Address":
        return address_of(self.public)


def _random_prime(bits: int, rng: random.Random) -> int:
    # top two bits set so the product has exactly 2*bits bits
    start = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
    p = int(gmpy2.next_prime(start - 2))
    if p.bit_length() != bits:
        return _random_prime(bits, rng)
    return p


def keygen(security_bits: int = 2048, rng: random.Random | None = None) -> KeyPair:
    """Generate an RSA key pair whose modulus has at least ``security_bits`` bits.

    512-bit keys are for tests and simulations only.
    """
    if security_bits not in SUPPORTED_BITS:
        raise CryptoError(f"unsupported key size {security_bits}; expected one of {SUPPORTED_BITS}")
    rng = rng or _system_rng
    half = security_bits // 2
    while True:
        p = _random_prime(half, rng)
        q = _random_prime(half, rng)
        if p == q:
            continue
        phi = (p - 1) * (q - 1)
        if math.gcd(PUBLIC_EXPONENT, phi) != 1:
            continue
        n = p * q
        if n.bit_length() < security_bits:
            continue
        return KeyPair(PublicKey(n, PUBLIC_EXPONENT), pow(PUBLIC_EXPONENT, -1, phi))


def full_domain_hash(msg: bytes, n: int) -> int:
    """Counter-mode SHA-256 widened to 16 bytes past the modulus, reduced mod n."""
    width = (n.bit_length() + 7) // 8 + 16
    blocks = -(-width // 32)
    digest = b"".join(
        hashlib.sha256(i.to_bytes(4, "big") + msg).digest() for i in range(blocks)
    )
    return int.from_bytes(digest[:width], "big") % n


@dataclass(frozen=True)
class BlindingFactor:
    r: int


@dataclass(frozen=True)
class BlindedMessage:
    payload: int

    def to_bytes(self) -> bytes:
        return Writer().bigint(self.payload).getvalue()


@dataclass(frozen=True)
class Signature:
    sigma: int

    def to_bytes(self) -> bytes:
        return Writer().bigint(self.sigma).getvalue()


@dataclass(frozen=True)
class BlindSignature:
    sigma: int

    def to_bytes(self) -> bytes:
        return Writer().bigint(self.sigma).getvalue()


def sign(key: KeyPair, msg: bytes) -> Signature:
    n = key.public.n
    return Signature(pow(full_domain_hash(msg, n), key.d, n))


def verify(pub: PublicKey, msg: bytes, sig: Signature) -> bool:
    try:
        sigma = sig.sigma
        if not 0 <= sigma < pub.n:
            return False
        return pow(sigma, pub.e, pub.n) == full_domain_hash(msg, pub.n)
    except (AttributeError, TypeError, ValueError):
        return False


def random_blinding_factor(pub: PublicKey, rng: random.Random | None = None) -> BlindingFactor:
    rng = rng or _system_rng
    while True:
        r = rng.randrange(2, pub.n)
        if math.gcd(r, pub.n) == 1:
            return BlindingFactor(r)


def blind(msg: bytes, signer_pub: PublicKey, rng: random.Random | None = None,
          r: int | None = None) -> tuple[BlindedMessage, BlindingFactor]:
    n, e = signer_pub.n, signer_pub.e
    factor = BlindingFactor(r) if r is not None else random_blinding_factor(signer_pub, rng)
    if math.gcd(factor.r, n) != 1:
        raise CryptoError("blinding factor is not invertible modulo the signer modulus")
    payload = full_domain_hash(msg, n) * pow(factor.r, e, n) % n
    return BlindedMessage(payload), factor


def blind_sign(key: KeyPair, bm: BlindedMessage) -> BlindSignature:
    n = key.public.n
    if not 0 <= bm.payload < n:
        raise CryptoError("blinded payload out of range for this modulus")
    return BlindSignature(pow(bm.payload, key.d, n))


def verify_blind(pub: PublicKey, bm: BlindedMessage, bs: BlindSignature) -> bool:
    if not (0 <= bm.payload < pub.n and 0 <= bs.sigma < pub.n):
        return False
    return pow(bs.sigma, pub.e, pub.n) == bm.payload


def unblind(bs: BlindSignature, r: BlindingFactor, signer_pub: PublicKey) -> Signature:
    n = signer_pub.n
    if math.gcd(r.r, n) != 1:
        raise CryptoError("blinding factor is not invertible")
    return Signature(bs.sigma * pow(r.r, -1, n) % n)


class AddressKind(str, enum.Enum):
    SINGLE = "single"
    MULTISIG = "multisig2of2"
    OP_RETURN = "op-return-sink"


_KIND_CODES = {AddressKind.SINGLE: 0, AddressKind.MULTISIG: 1, AddressKind.OP_RETURN: 2}
_KIND_PREFIX = {AddressKind.SINGLE: "s", AddressKind.MULTISIG: "m", AddressKind.OP_RETURN: "r"}


@dataclass(frozen=True, order=True)
class Address:
    id: bytes
    kind: AddressKind = AddressKind.SINGLE

    def __post_init__(self):
        if len(self.id) != ADDRESS_LEN:
            raise CryptoError(f"address id must be {ADDRESS_LEN} bytes")

    def __str__(self) -> str:
        return f"{_KIND_PREFIX[self.kind]}:{self.id.hex()}"

    @classmethod
    def parse(cls, text: str) -> "Address":
        prefix, _, body = text.partition(":")
        for kind, p in _KIND_PREFIX.items():
            if p == prefix:
                return cls(bytes.fromhex(body), kind)
        raise CryptoError(f"bad address {text!r}")

    def to_bytes(self) -> bytes:
        return bytes([_KIND_CODES[self.kind]]) + self.id

    @classmethod
    def read(cls, r: Reader) -> "Address":
        code = r.u8()
        for kind, c in _KIND_CODES.items():
            if c == code:
                return cls(r.raw(ADDRESS_LEN), kind)
        raise DecodeError(f"unknown address kind {code}")


def address_of(pub: PublicKey) -> Address:
    return Address(hashlib.sha256(pub.to_bytes()).digest()[:ADDRESS_LEN], AddressKind.SINGLE)


def canonical_pair(pk_a: PublicKey, pk_b: PublicKey) -> tuple[PublicKey, PublicKey]:
    return tuple(sorted((pk_a, pk_b), key=PublicKey.to_bytes))


def multisig_address(pk_a: PublicKey, pk_m: PublicKey) -> Address:
    if pk_a == pk_m:
        raise CryptoError("2-of-2 escrow needs two distinct keys")
    first, second = canonical_pair(pk_a, pk_m)
    script = Writer().u8(2).blob(first.to_bytes()).blob(second.to_bytes()).u8(2).getvalue()
    return Address(hashlib.sha256(script).digest()[:ADDRESS_LEN], AddressKind.MULTISIG)


def op_return_address(payload: bytes) -> Address:
    return Address(hashlib.sha256(b"OP_RETURN" + payload).digest()[:ADDRESS_LEN],
                   AddressKind.OP_RETURN)
