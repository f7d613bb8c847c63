"""Session parameters, direct A<->M messages and public-log payload formats.

Every object here has one canonical tagged binary encoding. Direct messages
use tags 0x10-0x13; log payloads use 0x01-0x04.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from . import crypto
from .crypto import (Address, BlindedMessage, BlindSignature, KeyPair, PublicKey,
                     Signature)
from .ledger import Transaction
from .units import scale
from .wire import DecodeError, Reader, Writer

TAG_BLIND_SIG_POST = 0x01
TAG_UNBLINDED_POST = 0x02
TAG_ADVERTISEMENT = 0x03
TAG_EVIDENCE_POST = 0x04

TAG_PROPOSAL = 0x10
TAG_OFFER = 0x11
TAG_REJECTION = 0x12
TAG_REFUND = 0x13

N_DEADLINES = 7


class ParameterError(ValueError):
    pass


def _write_fraction(w: Writer, x: Fraction) -> None:
    w.u64(x.numerator).u64(x.denominator)


def _read_fraction(r: Reader) -> Fraction:
    num, den = r.u64(), r.u64()
    if den == 0:
        raise DecodeError("zero denominator")
    x = Fraction(num, den)
    if (x.numerator, x.denominator) != (num, den):
        raise DecodeError("non-canonical fraction")
    return x


def default_schedule(start: int, omega: int) -> tuple[int, ...]:
    """Deadlines t1..t7 spaced one confirmation window plus one block apart."""
    return tuple(start + i * (omega + 1) for i in range(1, N_DEADLINES + 1))


@dataclass(frozen=True)
class MixParameters:
    v: int
    deadlines: tuple[int, ...]
    omega: int
    z: Fraction
    rho: Fraction
    k_A: PublicKey
    # paid to the mixer from the deposit to cover its blind-signature post
    log_fee_reimbursement: int = 0

    def __post_init__(self):
        object.__setattr__(self, "z", Fraction(self.z))
        object.__setattr__(self, "rho", Fraction(self.rho))
        object.__setattr__(self, "deadlines", tuple(self.deadlines))
        self.validate()

    def validate(self) -> None:
        if len(self.deadlines) != N_DEADLINES:
            raise ParameterError("need exactly seven deadlines t1..t7")
        if any(b <= a for a, b in zip(self.deadlines, self.deadlines[1:])):
            raise ParameterError("deadlines must be strictly increasing")
        if self.deadlines[0] < 0:
            raise ParameterError("deadlines are block heights")
        if self.v <= 0:
            raise ParameterError("chunk size must be positive")
        if self.omega < 1:
            raise ParameterError("omega must be at least one block")
        if self.z <= 1:
            raise ParameterError("deposit ratio must exceed 1 so that zv - v > 0")
        if not 0 <= self.rho < 1:
            raise ParameterError("fee rate must lie in [0, 1)")
        if self.log_fee_reimbursement < 0:
            raise ParameterError("negative reimbursement")
        try:
            deposit, fee = self.deposit, self.mixing_fee
        except ValueError as exc:
            raise ParameterError(str(exc)) from None
        if fee + self.log_fee_reimbursement > deposit:
            raise ParameterError("settlement would exceed the deposit")

    def t(self, i: int) -> int:
        return self.deadlines[i - 1]

    @property
    def deposit(self) -> int:
        return scale(self.v, self.z)

    @property
    def mixing_fee(self) -> int:
        return scale(self.v, self.rho)

    @property
    def mixer_settlement(self) -> int:
        """What the 2-of-2 refund pays the mixer: the mixing fee plus any agreed reimbursement."""
        return self.mixing_fee + self.log_fee_reimbursement

    def write(self, w: Writer) -> Writer:
        w.u64(self.v)
        for t in self.deadlines:
            w.u64(t)
        w.u32(self.omega)
        _write_fraction(w, self.z)
        _write_fraction(w, self.rho)
        w.blob(self.k_A.to_bytes())
        w.u64(self.log_fee_reimbursement)
        return w

    @classmethod
    def read(cls, r: Reader) -> "MixParameters":
        v = r.u64()
        deadlines = tuple(r.u64() for _ in range(N_DEADLINES))
        omega = r.u32()
        z, rho = _read_fraction(r), _read_fraction(r)
        k_A = PublicKey.from_bytes(r.blob())
        reimb = r.u64()
        try:
            return cls(v, deadlines, omega, z, rho, k_A, reimb)
        except ParameterError as exc:
            raise DecodeError(str(exc)) from None

    def to_dict(self) -> dict:
        return {
            "v": self.v,
            "t": list(self.deadlines),
            "omega": self.omega,
            "z": str(self.z),
            "rho": str(self.rho),
            "k_A": self.k_A.hex(),
            "log_fee_reimbursement": self.log_fee_reimbursement,
        }


@dataclass(frozen=True)
class ServerAdvertisement:
    """Step (1): what the mixer will accept, signed under its long-term key."""
    server_pub: PublicKey
    chunk_keys: tuple[tuple[int, PublicKey], ...]
    z_range: tuple[Fraction, Fraction]
    rho_range: tuple[Fraction, Fraction]
    omega_range: tuple[int, int]
    log_fee_reimbursement: int = 0
    signature: Signature | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.chunk_keys:
            raise ParameterError("advertisement must accept at least one chunk size")
        if self.z_range[0] > self.z_range[1] or self.z_range[0] <= 1:
            raise ParameterError("z range must be non-empty and above 1")
        if self.rho_range[0] > self.rho_range[1] or self.omega_range[0] > self.omega_range[1]:
            raise ParameterError("empty range")

    def body(self) -> bytes:
        w = Writer().u8(TAG_ADVERTISEMENT).blob(self.server_pub.to_bytes())
        w.u32(len(self.chunk_keys))
        for v, pub in self.chunk_keys:
            w.u64(v).blob(pub.to_bytes())
        for x in (*self.z_range, *self.rho_range):
            _write_fraction(w, x)
        w.u32(self.omega_range[0]).u32(self.omega_range[1]).u64(self.log_fee_reimbursement)
        return w.getvalue()

    def signed(self, key: KeyPair) -> "ServerAdvertisement":
        return ServerAdvertisement(self.server_pub, self.chunk_keys, self.z_range, self.rho_range,
                                   self.omega_range, self.log_fee_reimbursement,
                                   crypto.sign(key, self.body()))

    def verify(self) -> bool:
        return self.signature is not None and crypto.verify(self.server_pub, self.body(), self.signature)

    @property
    def accepted_v(self) -> tuple[int, ...]:
        return tuple(v for v, _ in self.chunk_keys)

    def chunk_key(self, v: int) -> PublicKey | None:
        for cv, pub in self.chunk_keys:
            if cv == v:
                return pub
        return None

    def covers(self, params: MixParameters) -> bool:
        return (self.chunk_key(params.v) is not None
                and self.z_range[0] <= params.z <= self.z_range[1]
                and self.rho_range[0] <= params.rho <= self.rho_range[1]
                and self.omega_range[0] <= params.omega <= self.omega_range[1]
                and params.log_fee_reimbursement == self.log_fee_reimbursement)

    def to_bytes(self) -> bytes:
        sig = self.signature.sigma if self.signature else 0
        return self.body() + Writer().bigint(sig).getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ServerAdvertisement":
        r = Reader(data)
        if r.u8() != TAG_ADVERTISEMENT:
            raise DecodeError("not an advertisement")
        server_pub = PublicKey.from_bytes(r.blob())
        chunk_keys = tuple((r.u64(), PublicKey.from_bytes(r.blob())) for _ in range(r.u32()))
        z_lo, z_hi, rho_lo, rho_hi = (_read_fraction(r) for _ in range(4))
        omega_range = (r.u32(), r.u32())
        reimb = r.u64()
        sig = Signature(r.bigint())
        r.finish()
        try:
            return cls(server_pub, chunk_keys, (z_lo, z_hi), (rho_lo, rho_hi), omega_range, reimb, sig)
        except ParameterError as exc:
            raise DecodeError(str(exc)) from None


@dataclass(frozen=True)
class Proposal:
    """Step (2): D in clear plus the blinded output address."""
    params: MixParameters
    blinded_output: BlindedMessage

    def to_bytes(self) -> bytes:
        w = Writer().u8(TAG_PROPOSAL)
        self.params.write(w)
        return w.bigint(self.blinded_output.payload).getvalue()

    @classmethod
    def read(cls, r: Reader) -> "Proposal":
        return cls(MixParameters.read(r), BlindedMessage(r.bigint()))


@dataclass(frozen=True)
class SignedOffer:
    """Step (3a): the server's signature over {[k_out]A_C, k_esc, k_AM, D}.

    ``k_M`` lets the user check ``k_AM``; ``k_prime_M`` is where the settlement
    pays the mixer.
    """
    blinded_output: BlindedMessage
    k_esc: Address
    k_AM: Address
    k_M: PublicKey
    k_prime_M: Address
    params: MixParameters
    server_pub: PublicKey
    signature: Signature | None = field(default=None, compare=False)

    def body(self) -> bytes:
        w = Writer().u8(TAG_OFFER).bigint(self.blinded_output.payload)
        w.raw(self.k_esc.to_bytes()).raw(self.k_AM.to_bytes())
        w.blob(self.k_M.to_bytes()).raw(self.k_prime_M.to_bytes())
        self.params.write(w)
        return w.blob(self.server_pub.to_bytes()).getvalue()

    def signed(self, key: KeyPair) -> "SignedOffer":
        return SignedOffer(self.blinded_output, self.k_esc, self.k_AM, self.k_M, self.k_prime_M,
                           self.params, self.server_pub, crypto.sign(key, self.body()))

    def verify(self, server_pub: PublicKey | None = None) -> bool:
        pub = server_pub or self.server_pub
        return (self.signature is not None and pub == self.server_pub
                and crypto.verify(pub, self.body(), self.signature))

    def to_bytes(self) -> bytes:
        sig = self.signature.sigma if self.signature else 0
        return self.body() + Writer().bigint(sig).getvalue()

    @classmethod
    def read(cls, r: Reader) -> "SignedOffer":
        blinded = BlindedMessage(r.bigint())
        k_esc, k_AM = Address.read(r), Address.read(r)
        k_M = PublicKey.from_bytes(r.blob())
        k_prime_M = Address.read(r)
        params = MixParameters.read(r)
        server_pub = PublicKey.from_bytes(r.blob())
        return cls(blinded, k_esc, k_AM, k_M, k_prime_M, params, server_pub, Signature(r.bigint()))

    @classmethod
    def from_bytes(cls, data: bytes) -> "SignedOffer":
        msg = decode_message(data)
        if not isinstance(msg, SignedOffer):
            raise DecodeError("not a signed offer")
        return msg


@dataclass(frozen=True)
class Rejection:
    """Step (3b)."""
    reason: str = ""

    def to_bytes(self) -> bytes:
        return Writer().u8(TAG_REJECTION).blob(self.reason.encode()).getvalue()


@dataclass(frozen=True)
class RefundProposal:
    """Step (9): the settlement spending k_AM, signed by the user only."""
    tx: Transaction

    def to_bytes(self) -> bytes:
        return Writer().u8(TAG_REFUND).blob(self.tx.to_bytes()).getvalue()


def decode_message(data: bytes):
    r = Reader(data)
    tag = r.u8()
    if tag == TAG_PROPOSAL:
        msg = Proposal.read(r)
    elif tag == TAG_OFFER:
        msg = SignedOffer.read(r)
    elif tag == TAG_REJECTION:
        msg = Rejection(r.blob().decode("utf-8", "replace"))
    elif tag == TAG_REFUND:
        msg = RefundProposal(Transaction.from_bytes(r.blob()))
    else:
        raise DecodeError(f"unknown message tag {tag:#x}")
    r.finish()
    return msg


# -- public log payloads ----------------------------------------------------

@dataclass(frozen=True)
class BlindSigPost:
    """Step (5a): 0x01 || blind signature || blinded message."""
    blind_signature: BlindSignature
    blinded_output: BlindedMessage

    def to_bytes(self) -> bytes:
        return (Writer().u8(TAG_BLIND_SIG_POST).raw(self.blind_signature.to_bytes())
                .raw(self.blinded_output.to_bytes()).getvalue())


@dataclass(frozen=True)
class UnblindedPost:
    """Step (6): 0x02 || k_out || signature, posted anonymously."""
    k_out: Address
    signature: Signature

    def to_bytes(self) -> bytes:
        return (Writer().u8(TAG_UNBLINDED_POST).raw(self.k_out.to_bytes())
                .raw(self.signature.to_bytes()).getvalue())


def decode_log_payload(data: bytes):
    """Parse a public-log payload; returns None for payloads this protocol does not own."""
    try:
        r = Reader(data)
        tag = r.u8()
        if tag == TAG_BLIND_SIG_POST:
            post = BlindSigPost(BlindSignature(r.bigint()), BlindedMessage(r.bigint()))
        elif tag == TAG_UNBLINDED_POST:
            post = UnblindedPost(Address.read(r), Signature(r.bigint()))
        elif tag == TAG_ADVERTISEMENT:
            return ServerAdvertisement.from_bytes(data)
        elif tag == TAG_EVIDENCE_POST:
            from .evidence import Evidence
            return Evidence.from_bytes(r.raw(r.remaining))
        else:
            return None
        r.finish()
        return post
    except (DecodeError, ValueError):
        return None


def output_message(k_out: Address) -> bytes:
    """The byte string the user gets blind-signed: the serialized output address."""
    return k_out.to_bytes()


def max_blind_post_size(chunk_key: PublicKey) -> int:
    k = (chunk_key.n.bit_length() + 7) // 8
    return 1 + 2 * (4 + k)


PolicyFn = Callable[[MixParameters], bool]
