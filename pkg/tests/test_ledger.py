import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lockcoin import crypto
from lockcoin.fuzz import MODES, forge, theft_fuzz
from lockcoin.ledger import (DoubleSpend, InsufficientFunds, InvalidSignature, Ledger, LedgerConfig,
                             MalformedTransaction, OutPoint, Transaction, TxIn, TxOut,
                             UnderpaidLogFee, UnknownInput, sign_all, sign_input, transfer)


@pytest.fixture
def funded(keys512):
    a, b = keys512[0], keys512[1]
    ledger = Ledger([(a.address, 1000), (b.address, 500)])
    return ledger, a, b


def genesis_op(ledger, i):
    return OutPoint(ledger.blocks[0].transactions[0].txid, i)


def test_genesis(funded):
    ledger, a, b = funded
    assert ledger.height == 0
    assert ledger.genesis_supply == 1500
    assert ledger.balance(a.address) == 1000


def test_transfer_and_confirmations(funded):
    ledger, a, b = funded
    txid = ledger.submit(transfer(ledger, a, b.address, 300))
    assert ledger.confirmations(txid) == 0
    ledger.mine_block()
    assert ledger.confirmations(txid) == 1
    ledger.mine_block()
    assert ledger.confirmations(txid) == 2
    assert ledger.balance(a.address) == 700
    assert ledger.balance(b.address) == 800


def test_block_timestamps_follow_interval(funded):
    ledger, *_ = funded
    for _ in range(3):
        ledger.mine_block()
    assert [b.timestamp for b in ledger.blocks] == [0, 10, 20, 30]


def test_wrong_key_rejected(funded):
    ledger, a, b = funded
    tx = Transaction((TxIn(genesis_op(ledger, 0)),), (TxOut(b.address, 1000),))
    with pytest.raises(InvalidSignature):
        ledger.submit(sign_input(tx, 0, b))


def test_double_spend_in_same_block(funded):
    ledger, a, b = funded
    op = genesis_op(ledger, 0)
    t1 = sign_all(Transaction((TxIn(op),), (TxOut(b.address, 1000),)), [a])
    t2 = sign_all(Transaction((TxIn(op),), (TxOut(a.address, 999),)), [a])
    ledger.submit(t1)
    with pytest.raises(DoubleSpend):
        ledger.submit(t2)
    ledger.mine_block()
    with pytest.raises(DoubleSpend):
        ledger.submit(t2)


def test_overspend_and_unknown_input(funded):
    ledger, a, b = funded
    tx = sign_all(Transaction((TxIn(genesis_op(ledger, 0)),), (TxOut(b.address, 1001),)), [a])
    with pytest.raises(InsufficientFunds):
        ledger.submit(tx)
    ghost = sign_all(Transaction((TxIn(OutPoint(b"\x00" * 32, 0)),), (TxOut(b.address, 1),)), [a])
    with pytest.raises(UnknownInput):
        ledger.submit(ghost)


def test_coinbase_after_genesis_rejected(funded):
    ledger, a, _ = funded
    with pytest.raises(MalformedTransaction):
        ledger.submit(Transaction((), (TxOut(a.address, 5),)))


def test_minimum_fee_enforced(keys512):
    a, b = keys512[0], keys512[1]
    ledger = Ledger([(a.address, 1000)], LedgerConfig(tx_fee=10))
    tx = sign_all(Transaction((TxIn(genesis_op(ledger, 0)),), (TxOut(b.address, 1000),)), [a])
    with pytest.raises(InsufficientFunds):
        ledger.submit(tx)
    ledger.submit(transfer(ledger, a, b.address, 990))
    ledger.mine_block()
    assert ledger.fees_paid == 10


def test_log_fee_schedule():
    cfg = LedgerConfig(log_fee_per_kb=10_000, log_billed_min_bytes=5000)
    assert cfg.log_fee(1) == 50_000
    assert cfg.log_fee(5001) == 60_000
    assert LedgerConfig().log_fee(1000) == 10_000
    assert LedgerConfig().log_fee(1001) == 20_000


def test_log_post_and_underpayment(keys512):
    a = keys512[0]
    ledger = Ledger([(a.address, 25_000), (a.address, 5_000)])
    with pytest.raises(UnderpaidLogFee):
        ledger.post_log(b"x" * 1500, [(genesis_op(ledger, 1), a)])
    txid = ledger.post_log(b"hello", [(genesis_op(ledger, 0), a)], poster=a.address)
    ledger.mine_block()
    (entry,) = ledger.scan_log()
    assert entry.payload == b"hello" and entry.posted_at == 1 and entry.txid == txid
    assert ledger.balance(a.address) == 5_000 + 15_000
    assert ledger.fees_paid == 10_000


def test_log_is_append_only(keys512):
    a = keys512[0]
    ledger = Ledger([(a.address, 10**6)])
    snapshots = []
    for i in range(5):
        op = ledger.unspent(a.address)[0][0]
        ledger.post_log(bytes([i]), [(op, a)])
        ledger.mine_block()
        snapshots.append([(e.payload, e.posted_at) for e in ledger.log])
    for earlier, later in zip(snapshots, snapshots[1:]):
        assert later[:len(earlier)] == earlier
        assert len(later) == len(earlier) + 1


def test_multisig_spend_needs_both(keys512):
    a, m, c = keys512[0], keys512[1], keys512[2]
    addr = crypto.multisig_address(a.public, m.public)
    ledger = Ledger([(addr, 1000)])
    tx = Transaction((TxIn(genesis_op(ledger, 0)),), (TxOut(c.address, 1000),))
    with pytest.raises(InvalidSignature):
        ledger.validate(sign_input(tx, 0, a))
    both = sign_input(sign_input(tx, 0, a), 0, m)
    # signing order does not matter
    assert both == sign_input(sign_input(tx, 0, m), 0, a)
    ledger.submit(both)
    ledger.mine_block()
    assert ledger.balance(c.address) == 1000


@pytest.mark.parametrize("mode", MODES)
def test_each_forgery_mode_rejected(keys512, mode):
    a, m, thief = keys512[0], keys512[1], keys512[2]
    addr = crypto.multisig_address(a.public, m.public)
    ledger = Ledger([(addr, 10**6)])
    tx = forge(mode, genesis_op(ledger, 0), 10**6, (a, m), thief, random.Random(mode))
    with pytest.raises(InvalidSignature):
        ledger.validate(tx)


def test_theft_fuzz_small():
    result = theft_fuzz(400, seed=3)
    assert result.attempts == 400
    assert result.accepted == []


def test_jsonl_roundtrip_replays_validation(keys512):
    a, b = keys512[0], keys512[1]
    ledger = Ledger([(a.address, 10**6)], LedgerConfig(log_billed_min_bytes=5000))
    ledger.submit(transfer(ledger, a, b.address, 1234))
    ledger.mine_block()
    ledger.post_log(b"note", [(ledger.unspent(a.address)[0][0], a)])
    ledger.mine_block()
    text = ledger.dump_jsonl()
    again = Ledger.from_jsonl(text)
    assert again.dump_jsonl() == text
    assert again.config == ledger.config
    assert [e.payload for e in again.log] == [b"note"]


def test_jsonl_rejects_tampered_amount(keys512):
    a, b = keys512[0], keys512[1]
    ledger = Ledger([(a.address, 10**6)])
    ledger.submit(transfer(ledger, a, b.address, 1234))
    ledger.mine_block()
    text = ledger.dump_jsonl().replace('",1234]', '",1235]')
    with pytest.raises(MalformedTransaction):
        Ledger.from_jsonl(text)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(1, 400), st.booleans()),
                max_size=25))
def test_conservation_under_random_traffic(keys512, moves):
    keys = keys512[:4]
    ledger = Ledger([(k.address, 1000) for k in keys], LedgerConfig(tx_fee=1))
    for src, dst, amount, mine in moves:
        try:
            ledger.submit(transfer(ledger, keys[src], keys[dst].address, amount))
        except (InsufficientFunds, DoubleSpend):
            pass
        if mine:
            ledger.mine_block()
        assert ledger.total_unspent() + ledger.fees_paid == ledger.genesis_supply
    ledger.mine_block()
    assert sum(ledger.balance(k.address) for k in keys) + ledger.fees_paid == 4000
