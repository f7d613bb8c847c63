"""User and mixer state machines for one mixing session.

``advance`` is the only way a session moves. It is a pure function of the
session, the public chain view, the current height and the inbox; it returns
the next session and a list of actions for the driver to carry out. Every
counterparty deadline breach lands in an ``Aborted`` state instead of raising.

Deadlines are block heights. An on-chain action with deadline ``t`` is only
emitted at tip ``h`` when ``h + 1 <= t``, since it is mined in block ``h + 1``.
"""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from . import crypto
from .crypto import (Address, BlindedMessage, BlindingFactor, BlindSignature, KeyPair,
                     PublicKey)
from .ledger import Ledger, OutPoint, Transaction, TxIn, TxOut, sign_input
from .messages import (BlindSigPost, MixParameters, Proposal, RefundProposal, Rejection,
                       ServerAdvertisement, SignedOffer, UnblindedPost, decode_log_payload,
                       decode_message, output_message)
from .wire import DecodeError


class Step(enum.IntEnum):
    INIT = 0
    OFFERED = 1
    ACCEPTED = 2
    DEPOSIT_PAID = 3
    BLIND_SIG_POSTED = 4
    UNBLINDED_POSTED = 5
    PAYOUT_SENT = 6
    CHUNK_PAID = 7
    REFUND_PROPOSED = 8
    COMPLETED = 9
    ABORTED = 10


class Branch(str, enum.Enum):
    REJECTED = "3b"
    NO_BLIND_SIG = "5b"
    NO_PAYOUT = "7b"
    USER_DEFAULT = "8b"
    NO_COSIGN = "10b"
    # the party's own decision to stop, or a missed own deadline
    USER_ABORT = "user-abort"
    SERVER_ABORT = "server-abort"
    # mixer-side timeouts caused by the user
    DEPOSIT_TIMEOUT = "deposit-timeout"
    REFUND_TIMEOUT = "refund-timeout"


EVIDENCE_BRANCHES = (Branch.NO_BLIND_SIG, Branch.NO_PAYOUT, Branch.NO_COSIGN)
TERMINAL = (Step.COMPLETED, Step.ABORTED)


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class Behavior:
    """Declarative adversary script for one party of one session.

    ``abort_at`` names the protocol step (3..10) at which the party goes
    silent; ``tamper`` corrupts one artifact ("blind_sig" for the mixer,
    "refund_split" for the user).
    """
    abort_at: int | None = None
    tamper: str | None = None

    @property
    def honest(self) -> bool:
        return self.abort_at is None and self.tamper is None


HONEST = Behavior()


# -- actions ---------------------------------------------------------------

@dataclass(frozen=True)
class Pay:
    payer: KeyPair
    to: Address
    amount: int
    purpose: str
    deadline: int | None


@dataclass(frozen=True)
class PostLog:
    payload: bytes
    funder: KeyPair
    poster: Address | None
    purpose: str
    deadline: int | None


@dataclass(frozen=True)
class Submit:
    tx: Transaction
    purpose: str
    deadline: int | None


@dataclass(frozen=True)
class Send:
    message: bytes
    purpose: str
    deadline: int | None


@dataclass(frozen=True)
class Emit:
    evidence: object


# -- public chain view -----------------------------------------------------

@dataclass(frozen=True)
class Payment:
    outpoint: OutPoint
    amount: int
    height: int


@dataclass(frozen=True)
class LogSighting:
    txid: bytes
    height: int


class ChainView:
    """Indexed read-only view of ledger + log, refreshed once per block."""

    def __init__(self, ledger: Ledger):
        self.ledger = ledger
        self._seen = 0
        self.blind_posts: dict[int, list[tuple[BlindSignature, LogSighting]]] = {}
        self.unblinded: list[tuple[UnblindedPost, LogSighting]] = []
        self.advertisements: list[ServerAdvertisement] = []
        self.refresh()

    def refresh(self) -> "ChainView":
        for entry in self.ledger.log[self._seen:]:
            post = decode_log_payload(entry.payload)
            seen = LogSighting(entry.txid, entry.posted_at)
            if isinstance(post, BlindSigPost):
                self.blind_posts.setdefault(post.blinded_output.payload, []).append(
                    (post.blind_signature, seen))
            elif isinstance(post, UnblindedPost):
                self.unblinded.append((post, seen))
            elif isinstance(post, ServerAdvertisement) and post.verify():
                self.advertisements.append(post)
        self._seen = len(self.ledger.log)
        return self

    @property
    def height(self) -> int:
        return self.ledger.height

    def confirmations_at(self, height: int) -> int:
        return self.ledger.height - height + 1

    def find_payment(self, address: Address, amount: int, max_height: int | None = None) -> Payment | None:
        for op in self.ledger.outputs_to.get(address, ()):
            utxo = self.ledger.utxos[op]
            if utxo.amount == amount and (max_height is None or utxo.created_at <= max_height):
                return Payment(op, utxo.amount, utxo.created_at)
        return None

    def valid_blind_sig(self, blinded: BlindedMessage, key: PublicKey,
                        max_height: int) -> tuple[BlindSignature, LogSighting] | None:
        for bs, seen in self.blind_posts.get(blinded.payload, ()):
            if seen.height <= max_height and crypto.verify_blind(key, blinded, bs):
                return bs, seen
        return None

    def spender(self, op: OutPoint) -> tuple[bytes, int] | None:
        utxo = self.ledger.utxos.get(op)
        if utxo is None or not utxo.spent:
            return None
        return utxo.spent_by, self.ledger.tx_height[utxo.spent_by]


# -- sessions --------------------------------------------------------------

@dataclass(frozen=True)
class UserKeys:
    k_in: KeyPair
    k_in_prime: KeyPair
    k_out: KeyPair | None
    k_A: KeyPair
    anon: KeyPair

    def __post_init__(self):
        addrs = [k.address for k in (self.k_in, self.k_in_prime, self.k_out, self.k_A, self.anon) if k]
        if len(set(addrs)) != len(addrs):
            raise ProtocolError("k_in, k'_in, k_out, k_A and the anonymous identity must all differ")

    @classmethod
    def generate(cls, bits: int, rng: random.Random) -> "UserKeys":
        return cls(*(crypto.keygen(bits, rng) for _ in range(5)))


@dataclass(frozen=True)
class _Session:
    label: str
    params: MixParameters
    blinded: BlindedMessage
    step: Step
    behavior: Behavior
    branch: Branch | None = None
    offer: SignedOffer | None = None
    deposit: Payment | None = None
    chunk: Payment | None = None
    # (direction, wire bytes); direction is "sent" or "received"
    transcript: tuple[tuple[str, bytes], ...] = ()
    # (purpose, txid) of on-chain actions, filled in by the driver
    txids: tuple[tuple[str, bytes], ...] = ()
    history: tuple[Step, ...] = ()

    @property
    def terminal(self) -> bool:
        return self.step in TERMINAL

    def goto(self, step: Step, **changes):
        if step <= self.step and step is not Step.ABORTED:
            raise ProtocolError(f"{self.label}: illegal transition {self.step.name} -> {step.name}")
        if self.terminal:
            raise ProtocolError(f"{self.label}: session already terminal")
        return replace(self, step=step, history=self.history + (self.step,), **changes)

    def abort(self, branch: Branch, **changes):
        return self.goto(Step.ABORTED, branch=branch, **changes)

    def record(self, direction: str, raw: bytes):
        return replace(self, transcript=self.transcript + ((direction, raw),))

    def with_tx(self, purpose: str, txid: bytes):
        return replace(self, txids=self.txids + ((purpose, txid),))

    def tx(self, purpose: str) -> bytes | None:
        for p, txid in self.txids:
            if p == purpose:
                return txid
        return None


@dataclass(frozen=True)
class UserSession(_Session):
    role = "user"
    keys: UserKeys | None = None
    server: ServerAdvertisement | None = None
    blinding: BlindingFactor | None = None
    blind_sig: BlindSignature | None = None
    payout: Payment | None = None
    refund: Transaction | None = None
    refund_txid: bytes | None = None
    evidence: object = None

    @property
    def chunk_key(self) -> PublicKey:
        return self.server.chunk_key(self.params.v)


@dataclass(frozen=True)
class MixerSession(_Session):
    role = "mixer"
    k_M: KeyPair | None = None
    k_esc: KeyPair | None = None
    k_prime_M: KeyPair | None = None
    chunk_key: KeyPair | None = None
    fee_key: KeyPair | None = None
    server_address: Address | None = None
    refund_offer: Transaction | None = None
    refused: tuple[str, ...] = ()


# -- step (2): the user's proposal ----------------------------------------

def user_propose(params: MixParameters, k_out: Address, server: ServerAdvertisement,
                 rng: random.Random | None = None, ledger: Ledger | None = None,
                 r: int | None = None) -> tuple[Proposal, BlindingFactor]:
    """Blind ``k_out`` under the server's chunk key and package it with D in clear."""
    if not server.covers(params):
        raise ProtocolError("parameters fall outside the server's advertisement")
    if ledger is not None and ledger.outputs_to.get(k_out):
        raise ProtocolError("k_out already appears on the ledger")
    bm, factor = crypto.blind(output_message(k_out), server.chunk_key(params.v), rng, r=r)
    return Proposal(params, bm), factor


def start_user_session(label: str, keys: UserKeys, server: ServerAdvertisement, params: MixParameters,
                       rng: random.Random | None = None, ledger: Ledger | None = None,
                       behavior: Behavior = HONEST) -> tuple[UserSession, bytes]:
    if params.k_A != keys.k_A.public:
        raise ProtocolError("D must carry the user's own k_A")
    proposal, factor = user_propose(params, keys.k_out.address, server, rng, ledger)
    raw = proposal.to_bytes()
    session = UserSession(label=label, params=params, blinded=proposal.blinded_output,
                          step=Step.INIT, behavior=behavior, keys=keys, server=server,
                          blinding=factor)
    return session.goto(Step.OFFERED).record("sent", raw), raw


# -- the mixer actor -------------------------------------------------------

def accept_all(params: MixParameters) -> bool:
    return True


class Mixer:
    """One logical mix server multiplexing many sessions.

    Its only cross-session state is the payout pool (k'_esc) bookkeeping and
    the set of output addresses already paid.
    """

    def __init__(self, server_key: KeyPair, chunk_keys: dict[int, KeyPair], fee_key: KeyPair,
                 pool_key: KeyPair, advertisement: ServerAdvertisement, key_bits: int,
                 rng: random.Random, policy: Callable[[MixParameters], bool] = accept_all):
        self.server_key = server_key
        self.chunk_keys = dict(chunk_keys)
        self.fee_key = fee_key
        self.pool_key = pool_key
        self.advertisement = advertisement
        self.key_bits = key_bits
        self.rng = rng
        self.policy = policy
        self.paid: set[Address] = set()
        self.skip_payout: set[Address] = set()
        self._cursor = 0

    @classmethod
    def create(cls, chunk_sizes: Sequence[int], z_range, rho_range, omega_range, key_bits: int,
               rng: random.Random, log_fee_reimbursement: int = 0, **kw) -> "Mixer":
        server_key = crypto.keygen(key_bits, rng)
        chunk_keys = {v: crypto.keygen(key_bits, rng) for v in sorted(set(chunk_sizes))}
        fee_key = crypto.keygen(key_bits, rng)
        pool_key = crypto.keygen(key_bits, rng)
        adv = ServerAdvertisement(server_key.public, tuple((v, k.public) for v, k in chunk_keys.items()),
                                  tuple(z_range), tuple(rho_range), tuple(omega_range),
                                  log_fee_reimbursement).signed(server_key)
        return cls(server_key, chunk_keys, fee_key, pool_key, adv, key_bits, rng, **kw)

    @property
    def address(self) -> Address:
        return self.server_key.address

    @property
    def pool_address(self) -> Address:
        return self.pool_key.address

    def accept(self, label: str, raw: bytes, behavior: Behavior = HONEST) -> tuple[MixerSession | None, bytes]:
        """Steps (3a)/(3b): sign an offer over a fresh escrow and 2-of-2 address, or reject."""
        try:
            proposal = decode_message(raw)
        except (DecodeError, ValueError) as exc:
            return None, Rejection(f"malformed proposal: {exc}").to_bytes()
        if not isinstance(proposal, Proposal):
            return None, Rejection("expected a proposal").to_bytes()
        params = proposal.params
        reason = None
        if not self.advertisement.covers(params):
            reason = "outside advertised ranges"
        elif not proposal.blinded_output.payload < self.chunk_keys[params.v].public.n:
            reason = "blinded payload out of range"
        elif behavior.abort_at == 3 or not self.policy(params):
            reason = "declined by server policy"
        base = MixerSession(label=label, params=params, blinded=proposal.blinded_output,
                            step=Step.INIT, behavior=behavior).record("received", raw)
        if reason:
            reply = Rejection(reason).to_bytes()
            return base.abort(Branch.REJECTED).record("sent", reply), reply
        k_M = crypto.keygen(self.key_bits, self.rng)
        k_esc = crypto.keygen(self.key_bits, self.rng)
        k_prime_M = crypto.keygen(self.key_bits, self.rng)
        try:
            k_AM = crypto.multisig_address(params.k_A, k_M.public)
        except crypto.CryptoError:
            reply = Rejection("degenerate escrow key").to_bytes()
            return base.abort(Branch.REJECTED).record("sent", reply), reply
        offer = SignedOffer(proposal.blinded_output, k_esc.address, k_AM, k_M.public,
                            k_prime_M.address, params, self.server_key.public).signed(self.server_key)
        reply = offer.to_bytes()
        session = replace(base, k_M=k_M, k_esc=k_esc, k_prime_M=k_prime_M,
                          chunk_key=self.chunk_keys[params.v], fee_key=self.fee_key,
                          server_address=self.address, offer=offer)
        return session.goto(Step.ACCEPTED).record("sent", reply), reply

    def pay_outs(self, view: ChainView) -> list[Pay]:
        """Step (7a): pay v from the shared pool to every newly signed k_out on the log."""
        actions = []
        for post, _ in view.unblinded[self._cursor:]:
            k_out = post.k_out
            if k_out in self.paid:
                continue
            for v, key in self.chunk_keys.items():
                if crypto.verify(key.public, output_message(k_out), post.signature):
                    self.paid.add(k_out)
                    if k_out not in self.skip_payout:
                        actions.append(Pay(self.pool_key, k_out, v, "payout", None))
                    break
        self._cursor = len(view.unblinded)
        return actions


# -- transitions -----------------------------------------------------------

def _offer_ok(s: UserSession, offer: SignedOffer) -> bool:
    try:
        k_AM = crypto.multisig_address(s.keys.k_A.public, offer.k_M)
    except crypto.CryptoError:
        return False
    return (offer.verify(s.server.server_pub) and offer.params == s.params
            and offer.blinded_output == s.blinded and offer.k_AM == k_AM)


def build_refund(s: UserSession, ledger_tx_fee: int = 0) -> Transaction:
    """Step (9): spend the 2-of-2 deposit; v*rho (+ reimbursement) to k'_M, the rest to k'_in."""
    p = s.params
    to_mixer = p.mixer_settlement
    if s.behavior.tamper == "refund_split":
        to_mixer = max(0, to_mixer - 1)
    to_user = p.deposit - to_mixer - ledger_tx_fee
    tx = Transaction((TxIn(s.deposit.outpoint),),
                     (TxOut(s.offer.k_prime_M, to_mixer), TxOut(s.keys.k_in_prime.address, to_user)))
    return sign_input(tx, 0, s.keys.k_A)


def refund_split_ok(tx: Transaction, offer: SignedOffer, deposit: OutPoint, tx_fee: int = 0) -> bool:
    p = offer.params
    if len(tx.inputs) != 1 or tx.inputs[0].prevout != deposit or tx.is_log_post:
        return False
    if len(tx.outputs) != 2 or tx.outputs[0] != TxOut(offer.k_prime_M, p.mixer_settlement):
        return False
    return tx.outputs[1].amount == p.deposit - p.mixer_settlement - tx_fee


def _user_signature_ok(tx: Transaction, k_A: PublicKey) -> bool:
    wits = tx.inputs[0].witnesses if tx.inputs else ()
    digest = tx.sighash()
    return any(w.pubkey == k_A and crypto.verify(k_A, digest, w.signature) for w in wits)


def _with_evidence(s: UserSession, branch: Branch) -> tuple[UserSession, list]:
    from .evidence import build_evidence
    s = s.abort(branch)
    ev = build_evidence(s, branch)
    return replace(s, evidence=ev), [Emit(ev)]


def _advance_user(s: UserSession, view: ChainView, h: int, inbox: Sequence[bytes],
                  tx_fee: int) -> tuple[UserSession, list]:
    p = s.params
    acts: list = []
    for raw in inbox:
        s = s.record("received", raw)
        if s.step is not Step.OFFERED:
            continue
        try:
            msg = decode_message(raw)
        except (DecodeError, ValueError):
            msg = None
        if isinstance(msg, SignedOffer) and _offer_ok(s, msg):
            s = s.goto(Step.ACCEPTED, offer=msg)
        else:
            # step (3b): the output address is discarded
            s = s.abort(Branch.REJECTED, keys=replace(s.keys, k_out=None), blinding=None)

    if s.step is Step.OFFERED and h >= p.t(1):
        s = s.abort(Branch.REJECTED, keys=replace(s.keys, k_out=None), blinding=None)

    if s.step is Step.ACCEPTED:
        if s.behavior.abort_at == 4 or h + 1 > p.t(1):
            s = s.abort(Branch.USER_ABORT)
        else:
            acts.append(Pay(s.keys.k_in_prime, s.offer.k_AM, p.deposit, "deposit", p.t(1)))
            s = s.goto(Step.DEPOSIT_PAID)

    if s.step is Step.DEPOSIT_PAID:
        if s.deposit is None:
            s = replace(s, deposit=view.find_payment(s.offer.k_AM, p.deposit, p.t(1)))
        found = view.valid_blind_sig(s.blinded, s.chunk_key, p.t(2))
        if s.deposit is None:
            if h >= p.t(1):
                s = s.abort(Branch.USER_ABORT)
        elif found:
            s = s.goto(Step.BLIND_SIG_POSTED, blind_sig=found[0])
        elif h >= p.t(2):
            s, acts2 = _with_evidence(s, Branch.NO_BLIND_SIG)
            acts += acts2

    if s.step is Step.BLIND_SIG_POSTED:
        if s.behavior.abort_at == 6 or h + 1 > p.t(3):
            s = s.abort(Branch.USER_ABORT)
        else:
            sig = crypto.unblind(s.blind_sig, s.blinding, s.chunk_key)
            k_out = s.keys.k_out.address
            if not crypto.verify(s.chunk_key, output_message(k_out), sig):
                raise ProtocolError("verified blind signature failed to unblind")
            acts.append(PostLog(UnblindedPost(k_out, sig).to_bytes(), s.keys.anon, None,
                                "unblinded", p.t(3)))
            s = s.goto(Step.UNBLINDED_POSTED)

    if s.step is Step.UNBLINDED_POSTED:
        payout = view.find_payment(s.keys.k_out.address, p.v, p.t(4))
        if payout:
            s = s.goto(Step.PAYOUT_SENT, payout=payout)
        elif h >= p.t(4):
            s, acts2 = _with_evidence(s, Branch.NO_PAYOUT)
            acts += acts2

    if s.step is Step.PAYOUT_SENT and view.confirmations_at(s.payout.height) >= p.omega:
        if s.behavior.abort_at == 8:
            s = s.abort(Branch.USER_DEFAULT)
        elif h + 1 > p.t(5):
            s = s.abort(Branch.USER_ABORT)
        else:
            acts.append(Pay(s.keys.k_in, s.offer.k_esc, p.v, "chunk", p.t(5)))
            s = s.goto(Step.CHUNK_PAID)

    if s.step is Step.CHUNK_PAID:
        if s.chunk is None:
            s = replace(s, chunk=view.find_payment(s.offer.k_esc, p.v, p.t(5)))
        if s.chunk is None:
            if h >= p.t(5):
                s = s.abort(Branch.USER_ABORT)
        elif view.confirmations_at(s.chunk.height) >= p.omega:
            if s.behavior.abort_at == 9 or h > p.t(6):
                s = s.abort(Branch.USER_ABORT)
            else:
                refund = build_refund(s, tx_fee)
                raw = RefundProposal(refund).to_bytes()
                acts.append(Send(raw, "refund-proposal", p.t(6)))
                s = s.goto(Step.REFUND_PROPOSED, refund=refund).record("sent", raw)

    if s.step is Step.REFUND_PROPOSED:
        spent = view.spender(s.deposit.outpoint)
        if spent and spent[1] <= p.t(7):
            s = s.goto(Step.COMPLETED, refund_txid=spent[0])
        elif h >= p.t(7):
            s, acts2 = _with_evidence(s, Branch.NO_COSIGN)
            acts += acts2
    return s, acts


def _advance_mixer(s: MixerSession, view: ChainView, h: int, inbox: Sequence[bytes],
                   tx_fee: int) -> tuple[MixerSession, list]:
    p = s.params
    acts: list = []

    if s.step is Step.ACCEPTED:
        if s.deposit is None:
            s = replace(s, deposit=view.find_payment(s.offer.k_AM, p.deposit, p.t(1)))
        if s.deposit is None:
            if h >= p.t(1):
                s = s.abort(Branch.DEPOSIT_TIMEOUT)
        elif view.confirmations_at(s.deposit.height) >= p.omega:
            if s.behavior.abort_at == 5 or h + 1 > p.t(2):
                s = s.abort(Branch.SERVER_ABORT)
            else:
                bs = crypto.blind_sign(s.chunk_key, s.blinded)
                if s.behavior.tamper == "blind_sig":
                    bs = BlindSignature((bs.sigma + 1) % s.chunk_key.public.n)
                post = BlindSigPost(bs, s.blinded).to_bytes()
                acts.append(PostLog(post, s.fee_key, s.server_address, "blind-sig", p.t(2)))
                s = s.goto(Step.BLIND_SIG_POSTED)

    if s.step is Step.BLIND_SIG_POSTED:
        chunk = view.find_payment(s.k_esc.address, p.v, p.t(5))
        if chunk:
            s = s.goto(Step.CHUNK_PAID, chunk=chunk)
        elif h >= p.t(5):
            s = s.abort(Branch.USER_DEFAULT)

    for raw in inbox:
        s = s.record("received", raw)
        try:
            msg = decode_message(raw)
        except (DecodeError, ValueError):
            msg = None
        if s.step is not Step.CHUNK_PAID or s.refund_offer is not None:
            continue
        if not isinstance(msg, RefundProposal):
            s = replace(s, refused=s.refused + ("unexpected message",))
        elif not refund_split_ok(msg.tx, s.offer, s.deposit.outpoint, tx_fee):
            s = replace(s, refused=s.refused + ("wrong split",))
        elif not _user_signature_ok(msg.tx, p.k_A):
            s = replace(s, refused=s.refused + ("missing user signature",))
        else:
            s = replace(s, refund_offer=msg.tx)

    if s.step is Step.CHUNK_PAID:
        if s.refund_offer is not None and view.confirmations_at(s.chunk.height) >= p.omega:
            if s.behavior.abort_at == 10 or h + 1 > p.t(7):
                s = s.abort(Branch.SERVER_ABORT)
            else:
                acts.append(Submit(sign_input(s.refund_offer, 0, s.k_M), "refund", p.t(7)))
                s = s.goto(Step.COMPLETED)
        elif s.refund_offer is None and h > p.t(6):
            s = s.abort(Branch.REFUND_TIMEOUT)
    return s, acts


def advance(session, view: ChainView, height: int | None = None, inbox: Sequence[bytes] = (),
            tx_fee: int = 0):
    """Pure transition: (session, observations, height) -> (next session, actions)."""
    h = view.height if height is None else height
    if session.terminal:
        return session, []
    if isinstance(session, UserSession):
        return _advance_user(session, view, h, inbox, tx_fee)
    if isinstance(session, MixerSession):
        return _advance_mixer(session, view, h, inbox, tx_fee)
    raise TypeError(f"not a session: {session!r}")
