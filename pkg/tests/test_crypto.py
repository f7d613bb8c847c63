import hashlib
import random

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from lockcoin import crypto
from lockcoin.crypto import AddressKind, CryptoError


def fdh_oracle(msg: bytes, n: int) -> int:
    # independent restatement: counter-mode SHA-256 out to |n| + 16 bytes, reduced mod n
    width = (n.bit_length() + 7) // 8 + 16
    stream = b""
    counter = 0
    while len(stream) < width:
        stream += hashlib.sha256(counter.to_bytes(4, "big") + msg).digest()
        counter += 1
    return int.from_bytes(stream[:width], "big") % n


def test_keygen_structure(keys512):
    for key in keys512:
        n, e = key.public.n, key.public.e
        assert e == 65537
        assert n.bit_length() == 512
        assert pow(pow(12345, e, n), key.d, n) == 12345


def test_prime_generator_against_sympy():
    rng = random.Random(99)
    for _ in range(5):
        p = crypto._random_prime(256, rng)
        assert sympy.isprime(p)
        assert p.bit_length() == 256


def test_keygen_is_seeded():
    a = crypto.keygen(512, random.Random(5))
    b = crypto.keygen(512, random.Random(5))
    assert a == b


def test_unsupported_size_rejected():
    with pytest.raises(CryptoError):
        crypto.keygen(768, random.Random(0))


def test_full_domain_hash_matches_oracle(keys512):
    n = keys512[0].public.n
    for msg in (b"", b"k_out", bytes(range(200))):
        assert crypto.full_domain_hash(msg, n) == fdh_oracle(msg, n)


def test_sign_matches_textbook_rsa(keys512):
    key = keys512[0]
    sig = crypto.sign(key, b"hello")
    assert sig.sigma == pow(fdh_oracle(b"hello", key.public.n), key.d, key.public.n)
    assert crypto.verify(key.public, b"hello", sig)
    assert not crypto.verify(key.public, b"hellp", sig)
    assert not crypto.verify(keys512[1].public, b"hello", sig)


@settings(max_examples=25, deadline=None)
@given(st.binary(min_size=1, max_size=64), st.integers(0, 2**32))
def test_blind_unblind_equals_direct(keys512, msg, seed):
    key = keys512[2]
    bm, r = crypto.blind(msg, key.public, random.Random(seed))
    bs = crypto.blind_sign(key, bm)
    assert crypto.verify_blind(key.public, bm, bs)
    sig = crypto.unblind(bs, r, key.public)
    assert sig == crypto.sign(key, msg)
    assert crypto.verify(key.public, msg, sig)


def test_blinded_payload_hides_message(keys512):
    key = keys512[0]
    bm1, _ = crypto.blind(b"m", key.public, random.Random(1))
    bm2, _ = crypto.blind(b"m", key.public, random.Random(2))
    assert bm1 != bm2
    assert bm1.payload != crypto.full_domain_hash(b"m", key.public.n)


def test_blind_sign_rejects_out_of_range(keys512):
    key = keys512[0]
    with pytest.raises(CryptoError):
        crypto.blind_sign(key, crypto.BlindedMessage(key.public.n))


def test_unblind_rejects_non_invertible(keys512):
    key = keys512[0]
    with pytest.raises(CryptoError):
        crypto.unblind(crypto.BlindSignature(5), crypto.BlindingFactor(0), key.public)


def test_verify_tolerates_garbage(keys512):
    pub = keys512[0].public
    assert not crypto.verify(pub, b"x", crypto.Signature(-1))
    assert not crypto.verify(pub, b"x", crypto.Signature(pub.n + 1))


def test_public_key_roundtrip(keys512):
    pub = keys512[3].public
    assert crypto.PublicKey.from_bytes(pub.to_bytes()) == pub


def test_address_derivation(keys512):
    pub = keys512[0].public
    addr = crypto.address_of(pub)
    assert addr.id == hashlib.sha256(pub.to_bytes()).digest()[:20]
    assert addr.kind is AddressKind.SINGLE
    assert crypto.Address.parse(str(addr)) == addr


def test_multisig_address_is_order_independent(keys512):
    a, m = keys512[0].public, keys512[1].public
    addr = crypto.multisig_address(a, m)
    assert addr == crypto.multisig_address(m, a)
    assert addr.kind is AddressKind.MULTISIG
    assert str(addr).startswith("m:")
    with pytest.raises(CryptoError):
        crypto.multisig_address(a, a)
