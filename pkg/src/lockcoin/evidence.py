"""Publishable misconduct evidence and per-session money accounting.

Verification reads only the evidence object and the public ledger/log. A
verdict of ``insufficient`` means the evidence is well formed but the server
met the obligation (or its deadline has not passed yet); ``invalid`` means the
evidence itself does not check out.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

from . import crypto
from .crypto import Address, AddressKind
from .ledger import Ledger, OutPoint, Transaction
from .messages import (TAG_EVIDENCE_POST, BlindSigPost, ServerAdvertisement, SignedOffer,
                       UnblindedPost, decode_log_payload, output_message)
from .protocol import (EVIDENCE_BRANCHES, Branch, MixerSession, Step, UserSession,
                       refund_split_ok)
from .wire import DecodeError, Reader, Writer

EVIDENCE_MAGIC = b"LCEV"
_BRANCH_CODES = {Branch.NO_BLIND_SIG: 0x05, Branch.NO_PAYOUT: 0x07, Branch.NO_COSIGN: 0x0A}
_DEADLINE_INDEX = {Branch.NO_BLIND_SIG: 2, Branch.NO_PAYOUT: 4, Branch.NO_COSIGN: 7}


class Verdict(str, enum.Enum):
    GUILTY = "server-guilty"
    INSUFFICIENT = "insufficient"
    INVALID = "invalid"


class EvidenceRefused(ValueError):
    """The session never reached the abort condition the caller asked about."""


class AccountingError(AssertionError):
    pass


@dataclass(frozen=True)
class Evidence:
    branch: Branch
    signed_offer: SignedOffer
    deposit: OutPoint
    deposit_height: int
    breached_deadline: int
    # 10b only: the step (8a) payment and the user-signed settlement
    chunk: OutPoint | None = None
    chunk_height: int | None = None
    refund_partial: Transaction | None = None
    # 7b only: k_out and the blinding factor, so anyone can match it to the offer
    k_out: Address | None = None
    blinding: int | None = None

    def to_bytes(self) -> bytes:
        w = Writer().raw(EVIDENCE_MAGIC).u8(_BRANCH_CODES[self.branch])
        w.blob(self.signed_offer.to_bytes())
        w.raw(self.deposit.txid).u32(self.deposit.index).u64(self.deposit_height)
        w.u64(self.breached_deadline)
        if self.branch is Branch.NO_COSIGN:
            w.raw(self.chunk.txid).u32(self.chunk.index).u64(self.chunk_height)
            w.blob(self.refund_partial.to_bytes())
        elif self.branch is Branch.NO_PAYOUT:
            w.raw(self.k_out.to_bytes()).bigint(self.blinding)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Evidence":
        r = Reader(data)
        if r.raw(4) != EVIDENCE_MAGIC:
            raise DecodeError("not an evidence blob")
        code = r.u8()
        branch = next((b for b, c in _BRANCH_CODES.items() if c == code), None)
        if branch is None:
            raise DecodeError(f"unknown branch code {code:#x}")
        offer = SignedOffer.from_bytes(r.blob())
        deposit = OutPoint(r.raw(32), r.u32())
        deposit_height = r.u64()
        deadline = r.u64()
        extra = {}
        if branch is Branch.NO_COSIGN:
            extra = dict(chunk=OutPoint(r.raw(32), r.u32()), chunk_height=r.u64(),
                         refund_partial=Transaction.from_bytes(r.blob()))
        elif branch is Branch.NO_PAYOUT:
            extra = dict(k_out=Address.read(r), blinding=r.bigint())
        r.finish()
        return cls(branch, offer, deposit, deposit_height, deadline, **extra)

    def to_dict(self) -> dict:
        d = {
            "branch": self.branch.value,
            "deadline": self.breached_deadline,
            "server": crypto.address_of(self.signed_offer.server_pub).__str__(),
            "k_AM": str(self.signed_offer.k_AM),
            "k_esc": str(self.signed_offer.k_esc),
            "deposit_tx": self.deposit.txid.hex(),
            "deposit_height": self.deposit_height,
        }
        if self.chunk is not None:
            d["chunk_tx"] = self.chunk.txid.hex()
            d["chunk_height"] = self.chunk_height
            d["refund_partial"] = self.refund_partial.to_dict()
        if self.k_out is not None:
            d["k_out"] = str(self.k_out)
        return d

    def announcement(self) -> bytes:
        """Log payload used to publish the evidence."""
        return bytes([TAG_EVIDENCE_POST]) + self.to_bytes()


def assemble_evidence(session: UserSession, branch: Branch) -> Evidence:
    """Package the evidence for ``branch`` from a user session without checking the abort condition."""
    if branch not in EVIDENCE_BRANCHES:
        raise EvidenceRefused(f"branch {branch.value} produces no evidence")
    if session.offer is None or session.deposit is None:
        raise EvidenceRefused("no signed offer or deposit to build evidence from")
    p = session.params
    extra = {}
    if branch is Branch.NO_COSIGN:
        if session.chunk is None or session.refund is None:
            raise EvidenceRefused("10b evidence needs the chunk payment and the signed refund")
        extra = dict(chunk=session.chunk.outpoint, chunk_height=session.chunk.height,
                     refund_partial=session.refund)
    elif branch is Branch.NO_PAYOUT:
        if session.keys.k_out is None or session.blinding is None:
            raise EvidenceRefused("7b evidence needs k_out and its blinding factor")
        extra = dict(k_out=session.keys.k_out.address, blinding=session.blinding.r)
    return Evidence(branch, session.offer, session.deposit.outpoint, session.deposit.height,
                    p.t(_DEADLINE_INDEX[branch]), **extra)


def build_evidence(session: UserSession, branch: Branch) -> Evidence:
    """Evidence for a session that actually aborted through ``branch``; refuses otherwise."""
    if not isinstance(session, UserSession):
        raise EvidenceRefused("only the user side accuses the server")
    if session.step is not Step.ABORTED or session.branch is not branch:
        raise EvidenceRefused(f"session {session.label} did not abort through {branch.value}")
    return assemble_evidence(session, branch)


def _advertised(ledger: Ledger, server_pub) -> ServerAdvertisement | None:
    for entry in ledger.log:
        post = decode_log_payload(entry.payload)
        if isinstance(post, ServerAdvertisement) and post.server_pub == server_pub and post.verify():
            return post
    return None


def _paid(ledger: Ledger, op: OutPoint, height: int, address: Address, amount: int) -> bool:
    tx = ledger.txs.get(op.txid)
    if tx is None or ledger.tx_height.get(op.txid) != height or op.index >= len(tx.outputs):
        return False
    out = tx.outputs[op.index]
    return out.address == address and out.amount == amount


def verify_evidence(ev: Evidence | bytes, ledger: Ledger, height: int | None = None) -> Verdict:
    """Public check of an accusation against the ledger and log alone."""
    if isinstance(ev, (bytes, bytearray)):
        try:
            ev = Evidence.from_bytes(bytes(ev))
        except (DecodeError, ValueError, KeyError):
            return Verdict.INVALID
    h = ledger.height if height is None else height
    offer = ev.signed_offer
    p = offer.params
    adv = _advertised(ledger, offer.server_pub)
    if adv is None or not offer.verify(adv.server_pub):
        return Verdict.INVALID
    chunk_key = adv.chunk_key(p.v)
    if chunk_key is None or ev.breached_deadline != p.t(_DEADLINE_INDEX[ev.branch]):
        return Verdict.INVALID
    if ev.deposit_height > p.t(1) or not _paid(ledger, ev.deposit, ev.deposit_height, offer.k_AM, p.deposit):
        return Verdict.INVALID
    if h - ev.deposit_height + 1 < p.omega:
        return Verdict.INVALID

    if ev.branch is Branch.NO_COSIGN:
        if ev.chunk_height > p.t(5) or not _paid(ledger, ev.chunk, ev.chunk_height, offer.k_esc, p.v):
            return Verdict.INVALID
        refund = ev.refund_partial
        if not refund_split_ok(refund, offer, ev.deposit, ledger.config.tx_fee):
            return Verdict.INVALID
        wits = refund.inputs[0].witnesses
        if (len(wits) != 1 or wits[0].pubkey != p.k_A
                or not crypto.verify(p.k_A, refund.sighash(), wits[0].signature)):
            return Verdict.INVALID
    if ev.branch is Branch.NO_PAYOUT:
        try:
            bm, _ = crypto.blind(output_message(ev.k_out), chunk_key, r=ev.blinding)
        except crypto.CryptoError:
            return Verdict.INVALID
        if bm != offer.blinded_output:
            return Verdict.INVALID

    if h < ev.breached_deadline:
        return Verdict.INSUFFICIENT

    if ev.branch is Branch.NO_BLIND_SIG:
        if ev.deposit_height + p.omega > p.t(2):
            return Verdict.INSUFFICIENT
        for entry in ledger.log:
            post = decode_log_payload(entry.payload)
            if (isinstance(post, BlindSigPost) and entry.posted_at <= p.t(2)
                    and post.blinded_output == offer.blinded_output
                    and crypto.verify_blind(chunk_key, offer.blinded_output, post.blind_signature)):
                return Verdict.INSUFFICIENT
        return Verdict.GUILTY

    if ev.branch is Branch.NO_PAYOUT:
        claimed = [e.posted_at for e in ledger.log
                   if isinstance(post := decode_log_payload(e.payload), UnblindedPost)
                   and post.k_out == ev.k_out and e.posted_at <= p.t(3)
                   and crypto.verify(chunk_key, output_message(ev.k_out), post.signature)]
        if not claimed or min(claimed) + 1 > p.t(4):
            return Verdict.INSUFFICIENT
        for op in ledger.outputs_to.get(ev.k_out, ()):
            utxo = ledger.utxos[op]
            if utxo.amount >= p.v and utxo.created_at <= p.t(4):
                return Verdict.INSUFFICIENT
        return Verdict.GUILTY

    # 10b: the user could propose by t6 and the deposit is still unspent at t7
    if ev.chunk_height + p.omega - 1 > p.t(6):
        return Verdict.INSUFFICIENT
    utxo = ledger.utxos[ev.deposit]
    if utxo.spent and ledger.tx_height[utxo.spent_by] <= p.t(7):
        return Verdict.INSUFFICIENT
    return Verdict.GUILTY


# -- loss accounting ---------------------------------------------------------

@dataclass(frozen=True)
class MoneyDeltas:
    user: int
    mixer: int
    escrow: int
    fees: int
    user_fees: int
    mixer_fees: int
    other: int = 0

    @property
    def zero_sum(self) -> bool:
        return self.user + self.mixer + self.escrow + self.fees + self.other == 0

    def to_dict(self) -> dict:
        return {"user": self.user, "mixer": self.mixer, "escrow": self.escrow, "fees": self.fees,
                "user_fees": self.user_fees, "mixer_fees": self.mixer_fees}


def user_addresses(session: UserSession) -> set[Address]:
    k = session.keys
    return {key.address for key in (k.k_in, k.k_in_prime, k.k_out, k.anon) if key is not None}


def mixer_addresses(session: MixerSession | None, extra: Iterable[Address] = ()) -> set[Address]:
    out = set(extra)
    if session is not None:
        out |= {k.address for k in (session.k_esc, session.k_prime_M, session.fee_key) if k is not None}
        if session.server_address is not None:
            out.add(session.server_address)
    return out


def tx_deltas(ledger: Ledger, txids: Iterable[bytes], parties: dict[str, set[Address]]) -> tuple[dict, dict]:
    """Replay ``txids`` and return (net delta per party, fees paid per party)."""
    delta = {name: 0 for name in parties}
    fees = {name: 0 for name in parties}
    delta["escrow"] = delta.get("escrow", 0)
    delta["other"] = 0

    def owner(addr: Address) -> str:
        for name, addrs in parties.items():
            if addr in addrs:
                return name
        return "escrow" if addr.kind is AddressKind.MULTISIG else "other"

    for txid in dict.fromkeys(txids):
        tx = ledger.txs[txid]
        payers = []
        total_in = 0
        for txin in tx.inputs:
            utxo = ledger.utxos[txin.prevout]
            who = owner(utxo.owner)
            delta[who] -= utxo.amount
            payers.append(who)
            total_in += utxo.amount
        for out in tx.outputs:
            delta[owner(out.address)] += out.amount
        fee = total_in - sum(o.amount for o in tx.outputs)
        if fee and payers:
            fees[payers[0]] = fees.get(payers[0], 0) + fee
    return delta, fees


def session_txids(user: UserSession, mixer: MixerSession | None) -> list[bytes]:
    ids = [txid for _, txid in user.txids]
    if mixer is not None:
        ids += [txid for _, txid in mixer.txids]
    return list(dict.fromkeys(ids))


def loss_accounting(user: UserSession, mixer: MixerSession | None, ledger: Ledger,
                    mixer_wallets: Iterable[Address] = ()) -> MoneyDeltas:
    """Exact per-party satoshi deltas for one terminal session."""
    if not user.terminal or (mixer is not None and not mixer.terminal):
        raise AccountingError(f"session {user.label} is not terminal")
    parties = {"user": user_addresses(user), "mixer": mixer_addresses(mixer, mixer_wallets)}
    delta, fees = tx_deltas(ledger, session_txids(user, mixer), parties)
    total_fees = sum(fees.values())
    out = MoneyDeltas(delta["user"], delta["mixer"], delta["escrow"], total_fees,
                      fees.get("user", 0), fees.get("mixer", 0), delta["other"])
    if not out.zero_sum:
        raise AccountingError(f"session {user.label}: deltas do not sum to zero: {out}")
    if user.branch is Branch.USER_DEFAULT:
        p = user.params
        if out.mixer != -p.v - out.mixer_fees:
            raise AccountingError(f"8b: mixer delta {out.mixer} != -v - fees")
        if out.user != -(p.deposit - p.v) - out.user_fees:
            raise AccountingError(f"8b: user delta {out.user} != -(zv - v) - fees")
    return out
