"""Forged spends against 2-of-2 outputs.

Each attempt carries zero or one genuine signature from the two owners, padded
out with whatever an attacker can produce: its own key, a random sigma, a
replayed signature over another transaction, or the same key twice.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import crypto
from .crypto import KeyPair
from .ledger import Ledger, LedgerError, OutPoint, Transaction, TxIn, TxOut, Witness

MODES = (
    "no-witness",
    "one-valid",
    "valid+attacker",
    "valid+random-sigma",
    "valid+replayed",
    "valid+duplicate",
    "attacker-pair",
    "replayed-pair",
)


@dataclass
class FuzzResult:
    attempts: int = 0
    accepted: list[tuple[str, OutPoint]] = field(default_factory=list)
    rejections: dict[str, int] = field(default_factory=dict)


def _witness(key: KeyPair, digest: bytes) -> Witness:
    return Witness(key.public, crypto.sign(key, digest))


def forge(mode: str, target: OutPoint, amount: int, owners: tuple[KeyPair, KeyPair],
          attacker: KeyPair, rng: random.Random) -> Transaction:
    """Build one theft attempt on ``target`` that pays the attacker."""
    steal = rng.randint(1, amount)
    body = Transaction((TxIn(target),), (TxOut(attacker.address, steal),))
    digest = body.sighash()
    honest = owners[rng.randrange(2)]
    other_tx = Transaction((TxIn(target),), (TxOut(honest.address, amount),))
    if mode == "no-witness":
        wits = ()
    elif mode == "one-valid":
        wits = (_witness(honest, digest),)
    elif mode == "valid+attacker":
        wits = (_witness(honest, digest), _witness(attacker, digest))
    elif mode == "valid+random-sigma":
        partner = owners[1] if honest is owners[0] else owners[0]
        wits = (_witness(honest, digest), Witness(partner.public, crypto.Signature(rng.randrange(partner.public.n))))
    elif mode == "valid+replayed":
        partner = owners[1] if honest is owners[0] else owners[0]
        wits = (_witness(honest, digest), _witness(partner, other_tx.sighash()))
    elif mode == "valid+duplicate":
        wits = (_witness(honest, digest), _witness(honest, digest))
    elif mode == "attacker-pair":
        wits = (_witness(attacker, digest), Witness(honest.public, crypto.Signature(rng.randrange(honest.public.n))))
    elif mode == "replayed-pair":
        wits = (_witness(owners[0], other_tx.sighash()), _witness(owners[1], digest))
    else:
        raise ValueError(mode)
    return Transaction((TxIn(target, wits),), body.outputs)


def theft_fuzz(attempts: int = 10_000, seed: int = 0, key_bits: int = 512, targets: int = 4) -> FuzzResult:
    """Run ``attempts`` forged spends against fresh multisig outputs; count any acceptance."""
    rng = random.Random(f"theft:{seed}")
    pairs = [(crypto.keygen(key_bits, rng), crypto.keygen(key_bits, rng)) for _ in range(targets)]
    attacker = crypto.keygen(key_bits, rng)
    addrs = [crypto.multisig_address(a.public, m.public) for a, m in pairs]
    amounts = [rng.randint(1, 10**8) for _ in pairs]
    ledger = Ledger(list(zip(addrs, amounts)))
    genesis = ledger.blocks[0].transactions[0].txid
    result = FuzzResult()
    for i in range(attempts):
        t = i % targets
        mode = MODES[rng.randrange(len(MODES))]
        tx = forge(mode, OutPoint(genesis, t), amounts[t], pairs[t], attacker, rng)
        result.attempts += 1
        try:
            ledger.validate(tx)
        except LedgerError as exc:
            result.rejections[exc.code] = result.rejections.get(exc.code, 0) + 1
        else:
            result.accepted.append((mode, OutPoint(genesis, t)))
    return result
