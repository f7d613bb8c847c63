"""Deterministic block ledger with omega-confirmation semantics and a public log.

Money is integer satoshis. Every valid pending transaction goes into the next
block, so simulated time only advances through ``mine_block``. Log posts are
ordinary transactions carrying a payload and a zero-value OP_RETURN output.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping, Sequence

from . import crypto
from .crypto import Address, AddressKind, KeyPair, PublicKey, Signature
from .wire import Reader, Writer


class LedgerError(Exception):
    code = "ledger-error"


class InvalidSignature(LedgerError):
    code = "invalid-signature"


class InsufficientFunds(LedgerError):
    code = "insufficient-funds"


class DoubleSpend(LedgerError):
    code = "double-spend"


class UnderpaidLogFee(LedgerError):
    code = "underpaid-log-fee"


class UnknownInput(LedgerError):
    code = "unknown-input"


class MalformedTransaction(LedgerError):
    code = "malformed-transaction"


class UnknownTransaction(LedgerError, KeyError):
    code = "unknown-transaction"


@dataclass(frozen=True, order=True)
class OutPoint:
    txid: bytes
    index: int

    def __str__(self):
        return f"{self.txid.hex()}:{self.index}"


@dataclass(frozen=True)
class Witness:
    pubkey: PublicKey
    signature: Signature


@dataclass(frozen=True)
class TxIn:
    prevout: OutPoint
    witnesses: tuple[Witness, ...] = ()


@dataclass(frozen=True)
class TxOut:
    address: Address
    amount: int


@dataclass(frozen=True)
class Transaction:
    inputs: tuple[TxIn, ...]
    outputs: tuple[TxOut, ...]
    log_payload: bytes | None = None
    # None means the post is anonymous
    poster: Address | None = None

    def _write_body(self, w: Writer) -> Writer:
        w.u32(len(self.inputs))
        for txin in self.inputs:
            w.raw(txin.prevout.txid).u32(txin.prevout.index)
        w.u32(len(self.outputs))
        for out in self.outputs:
            w.raw(out.address.to_bytes()).u64(out.amount)
        if self.log_payload is None:
            w.u8(0)
        else:
            w.u8(1).blob(self.log_payload)
        if self.poster is None:
            w.u8(0)
        else:
            w.u8(1).raw(self.poster.to_bytes())
        return w

    def sighash(self) -> bytes:
        """Digest every signer commits to: the body without witnesses."""
        return hashlib.sha256(b"lockcoin-tx" + self._write_body(Writer()).getvalue()).digest()

    @property
    def txid(self) -> bytes:
        return hashlib.sha256(self.sighash()).digest()

    @property
    def is_log_post(self) -> bool:
        return self.log_payload is not None

    @property
    def is_coinbase(self) -> bool:
        return not self.inputs

    def to_bytes(self) -> bytes:
        w = self._write_body(Writer())
        for txin in self.inputs:
            w.u32(len(txin.witnesses))
            for wit in txin.witnesses:
                w.blob(wit.pubkey.to_bytes()).bigint(wit.signature.sigma)
        return w.getvalue()

    @classmethod
    def read(cls, r: Reader) -> "Transaction":
        prevouts = [OutPoint(r.raw(32), r.u32()) for _ in range(r.u32())]
        outputs = tuple(TxOut(Address.read(r), r.u64()) for _ in range(r.u32()))
        payload = r.blob() if r.u8() else None
        poster = Address.read(r) if r.u8() else None
        inputs = []
        for prevout in prevouts:
            wits = tuple(Witness(PublicKey.from_bytes(r.blob()), Signature(r.bigint()))
                         for _ in range(r.u32()))
            inputs.append(TxIn(prevout, wits))
        return cls(tuple(inputs), outputs, payload, poster)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Transaction":
        r = Reader(data)
        tx = cls.read(r)
        r.finish()
        return tx

    def to_dict(self) -> dict:
        return {
            "txid": self.txid.hex(),
            "inputs": [
                {
                    "prevout": str(txin.prevout),
                    "witnesses": [[w.pubkey.hex(), format(w.signature.sigma, "x")] for w in txin.witnesses],
                }
                for txin in self.inputs
            ],
            "outputs": [[str(o.address), o.amount] for o in self.outputs],
            "log_payload": None if self.log_payload is None else self.log_payload.hex(),
            "poster": None if self.poster is None else str(self.poster),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Transaction":
        inputs = []
        for txin in d["inputs"]:
            txid, _, index = txin["prevout"].partition(":")
            wits = tuple(Witness(PublicKey.from_bytes(bytes.fromhex(pk)), Signature(int(sig, 16)))
                         for pk, sig in txin["witnesses"])
            inputs.append(TxIn(OutPoint(bytes.fromhex(txid), int(index)), wits))
        tx = cls(
            tuple(inputs),
            tuple(TxOut(Address.parse(a), int(amt)) for a, amt in d["outputs"]),
            None if d["log_payload"] is None else bytes.fromhex(d["log_payload"]),
            None if d["poster"] is None else Address.parse(d["poster"]),
        )
        if "txid" in d and tx.txid.hex() != d["txid"]:
            raise MalformedTransaction("txid does not match transaction body")
        return tx


def sign_input(tx: Transaction, index: int, key: KeyPair) -> Transaction:
    """Add ``key``'s signature to input ``index``; witnesses stay in canonical key order."""
    wit = Witness(key.public, crypto.sign(key, tx.sighash()))
    txin = tx.inputs[index]
    wits = tuple(sorted(txin.witnesses + (wit,), key=lambda w: w.pubkey.to_bytes()))
    inputs = list(tx.inputs)
    inputs[index] = replace(txin, witnesses=wits)
    return replace(tx, inputs=tuple(inputs))


def sign_all(tx: Transaction, keys: Sequence[KeyPair]) -> Transaction:
    for i, key in enumerate(keys):
        tx = sign_input(tx, i, key)
    return tx


@dataclass
class Utxo:
    owner: Address
    amount: int
    created_at: int
    spent: bool = False
    spent_by: bytes | None = None


@dataclass(frozen=True)
class Block:
    height: int
    transactions: tuple[Transaction, ...]
    timestamp: int

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "timestamp": self.timestamp,
            "transactions": [tx.to_dict() for tx in self.transactions],
        }


@dataclass(frozen=True)
class PublicLogEntry:
    payload: bytes
    posted_at: int
    poster: Address | None
    txid: bytes
    seq: int


LEDGER_FORMAT = "lockcoin-ledger/1"


@dataclass(frozen=True)
class LedgerConfig:
    block_interval_minutes: int = 10
    # fee required of ordinary (non-log) transactions
    tx_fee: int = 0
    # 0.0001 BTC per started 1000 bytes
    log_fee_per_kb: int = 10_000
    # posts are billed as at least this many bytes
    log_billed_min_bytes: int = 0

    def log_fee(self, payload_len: int) -> int:
        billed = max(payload_len, self.log_billed_min_bytes)
        return -(-billed // 1000) * self.log_fee_per_kb


class Ledger:
    """Single sequencer: submissions are totally ordered by arrival."""

    def __init__(self, genesis: Iterable[tuple[Address, int]] = (), config: LedgerConfig | None = None):
        self.config = config or LedgerConfig()
        self.blocks: list[Block] = []
        self.utxos: dict[OutPoint, Utxo] = {}
        self.txs: dict[bytes, Transaction] = {}
        self.tx_height: dict[bytes, int] = {}
        self.pending: list[Transaction] = []
        self._pending_spends: set[OutPoint] = set()
        self._pending_ids: set[bytes] = set()
        self.log: list[PublicLogEntry] = []
        self.outputs_to: dict[Address, list[OutPoint]] = {}
        self.fees_paid = 0
        outputs = tuple(TxOut(addr, amt) for addr, amt in genesis)
        if any(o.amount < 0 for o in outputs):
            raise MalformedTransaction("negative genesis allocation")
        coinbase = Transaction((), outputs)
        self._apply_block([coinbase])

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    @property
    def genesis_supply(self) -> int:
        return sum(o.amount for o in self.blocks[0].transactions[0].outputs)

    def log_fee(self, payload: bytes | int) -> int:
        n = payload if isinstance(payload, int) else len(payload)
        return self.config.log_fee(n)

    # -- validation -------------------------------------------------------

    def _check_witnesses(self, tx: Transaction, txin: TxIn, utxo: Utxo, digest: bytes) -> None:
        wits = txin.witnesses
        if utxo.owner.kind is AddressKind.SINGLE:
            if len(wits) != 1 or crypto.address_of(wits[0].pubkey) != utxo.owner:
                raise InvalidSignature(f"{txin.prevout}: needs one signature by the owning key")
        elif utxo.owner.kind is AddressKind.MULTISIG:
            if len(wits) != 2 or wits[0].pubkey == wits[1].pubkey:
                raise InvalidSignature(f"{txin.prevout}: 2-of-2 output needs two distinct signatures")
            if crypto.multisig_address(wits[0].pubkey, wits[1].pubkey) != utxo.owner:
                raise InvalidSignature(f"{txin.prevout}: keys do not match the 2-of-2 address")
        else:
            raise MalformedTransaction(f"{txin.prevout}: OP_RETURN outputs are unspendable")
        for wit in wits:
            if not crypto.verify(wit.pubkey, digest, wit.signature):
                raise InvalidSignature(f"{txin.prevout}: bad signature")

    def validate(self, tx: Transaction) -> int:
        """Raise a ``LedgerError`` if ``tx`` cannot be admitted; return its fee."""
        if tx.is_coinbase:
            raise MalformedTransaction("only genesis may mint coins")
        txid = tx.txid
        if txid in self.txs or txid in self._pending_ids:
            raise DoubleSpend("transaction already submitted")
        for out in tx.outputs:
            if not isinstance(out.amount, int) or isinstance(out.amount, bool) or out.amount < 0:
                raise MalformedTransaction("amounts must be non-negative integer satoshis")
            if out.address.kind is AddressKind.OP_RETURN and (out.amount or not tx.is_log_post):
                raise MalformedTransaction("OP_RETURN outputs carry no value and need a payload")
        seen: set[OutPoint] = set()
        digest = tx.sighash()
        total_in = 0
        for txin in tx.inputs:
            op = txin.prevout
            utxo = self.utxos.get(op)
            if utxo is None:
                raise UnknownInput(f"{op} does not exist")
            if utxo.spent or op in self._pending_spends or op in seen:
                raise DoubleSpend(f"{op} already spent")
            seen.add(op)
            self._check_witnesses(tx, txin, utxo, digest)
            total_in += utxo.amount
        total_out = sum(o.amount for o in tx.outputs)
        if total_out > total_in:
            raise InsufficientFunds(f"outputs {total_out} exceed inputs {total_in}")
        fee = total_in - total_out
        if tx.is_log_post:
            need = self.log_fee(tx.log_payload)
            if fee < need:
                raise UnderpaidLogFee(f"log post pays {fee}, needs {need}")
        elif fee < self.config.tx_fee:
            raise InsufficientFunds(f"fee {fee} below the {self.config.tx_fee} minimum")
        return fee

    # -- state transitions ------------------------------------------------

    def submit(self, tx: Transaction) -> bytes:
        self.validate(tx)
        self.pending.append(tx)
        self._pending_ids.add(tx.txid)
        self._pending_spends.update(txin.prevout for txin in tx.inputs)
        return tx.txid

    def _apply_block(self, txs: list[Transaction]) -> Block:
        height = len(self.blocks)
        for tx in txs:
            txid = tx.txid
            total_in = 0
            for txin in tx.inputs:
                utxo = self.utxos[txin.prevout]
                utxo.spent, utxo.spent_by = True, txid
                total_in += utxo.amount
            for i, out in enumerate(tx.outputs):
                op = OutPoint(txid, i)
                self.utxos[op] = Utxo(out.address, out.amount, height)
                self.outputs_to.setdefault(out.address, []).append(op)
            if not tx.is_coinbase:
                self.fees_paid += total_in - sum(o.amount for o in tx.outputs)
                if tx.is_log_post:
                    self.log.append(PublicLogEntry(tx.log_payload, height, tx.poster, txid, len(self.log)))
            self.txs[txid] = tx
            self.tx_height[txid] = height
        block = Block(height, tuple(txs), height * self.config.block_interval_minutes)
        self.blocks.append(block)
        return block

    def mine_block(self) -> Block:
        txs, self.pending = self.pending, []
        self._pending_spends.clear()
        self._pending_ids.clear()
        return self._apply_block(txs)

    # -- queries ----------------------------------------------------------

    def confirmations(self, txid: bytes) -> int:
        if txid in self.tx_height:
            return self.height - self.tx_height[txid] + 1
        if txid in self._pending_ids:
            return 0
        raise UnknownTransaction(txid.hex())

    def is_pending_spend(self, op: OutPoint) -> bool:
        return op in self._pending_spends

    def unspent(self, address: Address) -> list[tuple[OutPoint, Utxo]]:
        return [(op, self.utxos[op]) for op in self.outputs_to.get(address, ())
                if not self.utxos[op].spent]

    def balance(self, address: Address) -> int:
        return sum(u.amount for _, u in self.unspent(address))

    def total_unspent(self) -> int:
        return sum(u.amount for u in self.utxos.values() if not u.spent)

    def scan_log(self, predicate: Callable[[PublicLogEntry], bool] | None = None) -> list[PublicLogEntry]:
        if predicate is None:
            return list(self.log)
        return [e for e in self.log if predicate(e)]

    def post_log(self, payload: bytes, funding: Sequence[tuple[OutPoint, KeyPair]],
                 poster: Address | None = None, change: Address | None = None) -> bytes:
        """Build, sign and submit a log post funded by ``funding``; change returns to ``change``."""
        if not funding:
            raise UnderpaidLogFee("a log post needs funding inputs")
        fee = self.log_fee(payload)
        total = 0
        for op, _ in funding:
            utxo = self.utxos.get(op)
            if utxo is None:
                raise UnknownInput(f"{op} does not exist")
            total += utxo.amount
        if total < fee:
            raise UnderpaidLogFee(f"funding {total} below log fee {fee}")
        outputs = [TxOut(crypto.op_return_address(payload), 0)]
        if total > fee:
            outputs.append(TxOut(change or funding[0][1].address, total - fee))
        tx = Transaction(tuple(TxIn(op) for op, _ in funding), tuple(outputs), payload, poster)
        return self.submit(sign_all(tx, [k for _, k in funding]))

    # -- persistence ------------------------------------------------------

    def dump_jsonl(self) -> str:
        """One header line carrying the config, then one compact JSON object per block."""
        header = {"format": LEDGER_FORMAT, "config": dataclasses.asdict(self.config)}
        lines = [json.dumps(header, separators=(",", ":"), sort_keys=True)]
        lines += [json.dumps(b.to_dict(), separators=(",", ":")) for b in self.blocks]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str, config: LedgerConfig | None = None) -> "Ledger":
        """Rebuild a ledger by replaying every block through full validation."""
        lines = [line for line in text.splitlines() if line.strip()]
        try:
            blocks = [json.loads(line) for line in lines]
        except json.JSONDecodeError as exc:
            raise MalformedTransaction(f"ledger file is not JSON lines: {exc}") from None
        if blocks and "format" in blocks[0]:
            header = blocks.pop(0)
            if header["format"] != LEDGER_FORMAT:
                raise MalformedTransaction(f"unknown ledger format {header['format']!r}")
            if config is None:
                config = LedgerConfig(**header["config"])
        if not blocks:
            raise MalformedTransaction("empty ledger file")
        try:
            genesis = Transaction.from_dict(blocks[0]["transactions"][0])
            ledger = cls([(o.address, o.amount) for o in genesis.outputs], config)
            for expected_height, block in enumerate(blocks[1:], start=1):
                if block["height"] != expected_height:
                    raise MalformedTransaction(f"block heights not consecutive at {expected_height}")
                for txd in block["transactions"]:
                    ledger.submit(Transaction.from_dict(txd))
                ledger.mine_block()
        except (KeyError, TypeError, IndexError) as exc:
            raise MalformedTransaction(f"ledger file is missing a field: {exc}") from None
        return ledger


def transfer(ledger: Ledger, key: KeyPair, to: Address, amount: int,
             exclude: Iterable[OutPoint] = (), fee: int | None = None) -> Transaction:
    """Build a signed payment from ``key``'s address with change back to it."""
    fee = ledger.config.tx_fee if fee is None else fee
    src = key.address
    need = amount + fee
    skip = set(exclude)
    coins = sorted(((u.amount, op) for op, u in ledger.unspent(src)
                    if op not in skip and not ledger.is_pending_spend(op)))
    # exact coin, else the smallest single coin that covers, else accumulate
    picked = [op for amt, op in coins if amt == need][:1]
    if not picked:
        picked = [op for amt, op in coins if amt > need][:1]
    if not picked:
        picked, running = [], 0
        for amt, op in coins:
            picked.append(op)
            running += amt
            if running >= need:
                break
    total = sum(ledger.utxos[op].amount for op in picked)
    if total < need:
        raise InsufficientFunds(f"{src} holds {total}, needs {need}")
    outputs = [TxOut(to, amount)]
    if total > need:
        outputs.append(TxOut(src, total - need))
    tx = Transaction(tuple(TxIn(op) for op in picked), tuple(outputs))
    return sign_all(tx, [key] * len(picked))


def allocations(wanted: Mapping[Address, Sequence[int] | int]) -> list[tuple[Address, int]]:
    out = []
    for addr, amounts in wanted.items():
        for amt in ([amounts] if isinstance(amounts, int) else amounts):
            out.append((addr, amt))
    return out
