"""Acceptance suite: eleven end-to-end criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py`` (the lines appear in the
"acceptance criteria" summary section) or directly with
``python tests/test_acceptance.py``.
"""
import random
import sys
from fractions import Fraction
from pathlib import Path

import pytest
from scipy.stats import chisquare

from lockcoin import crypto
from lockcoin.crypto import AddressKind
from lockcoin.evidence import EvidenceRefused, Verdict, assemble_evidence, build_evidence, verify_evidence
from lockcoin.fuzz import theft_fuzz
from lockcoin.harness import (FeeConfig, PartyScript, Scenario, fee_report, run_scenario, scalability,
                              timing_report, write_artifacts)
from lockcoin.messages import TAG_OFFER, TAG_PROPOSAL, TAG_REFUND, output_message
from lockcoin.protocol import EVIDENCE_BRANCHES, Branch
from lockcoin.units import COIN, btc

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

# Honest session length in blocks under the default schedule, worked out by
# hand from the confirmation waits: deposit (1) + omega to confirm and post the
# blind signature + 1 unblinded post + 1 payout + omega before the chunk
# + omega before the co-signed refund lands, i.e. 3*omega + 3.
HONEST_BLOCKS = {1: 6, 3: 12, 6: 21}


def independent_traffic(ledger, after_height):
    """Classify every mined transaction straight from the block list."""
    counts = {"standard": 0, "multisig": 0, "log": 0}
    for block in ledger.blocks[after_height + 1:]:
        for tx in block.transactions:
            if tx.log_payload is not None:
                counts["log"] += 1
            elif any(ledger.utxos[i.prevout].owner.kind is AddressKind.MULTISIG for i in tx.inputs):
                counts["multisig"] += 1
            else:
                counts["standard"] += 1
    return counts


def test_c01_fee_arithmetic(criterion):
    with criterion(1, "user total cost is exactly 0.00200000 BTC", 1.0) as notes:
        rep = run_scenario(Scenario(v=btc("0.1"), rho=Fraction(1, 100), omega=1,
                                    fees=FeeConfig(log_fee_per_kb=10_000, message_bytes=5000, user_pays_both=True)))
        # oracle: v*rho + 2*msg_fee in exact BTC, then to satoshis
        oracle = (Fraction("0.1") * Fraction("0.01") + 2 * Fraction("0.0005")) * COIN
        assert oracle == 200_000
        cost = -rep.sessions[0].deltas.user
        assert cost == oracle, cost
        assert fee_report(rep, btc("0.1"), Fraction(1, 100), btc("0.0005")).matches
        notes.append(f"cost={cost} sat")


def test_c02_traffic_count(criterion):
    with criterion(2, "one honest session is 3 standard + 1 multisig + 2 log = 6", 1.0) as notes:
        rep = run_scenario(Scenario(omega=1))
        counts = independent_traffic(rep.ledger, rep.start_height)
        assert counts == {"standard": 3, "multisig": 1, "log": 2}, counts
        assert sum(counts.values()) == 6
        assert rep.sessions[0].traffic["total"] == 6
        notes.append(str(counts))


def test_c03_one_round(criterion):
    with criterion(3, "exactly 3 direct messages and 2 log posts per honest session", 5.0) as notes:
        rep = run_scenario(Scenario(n_users=3, omega=1))
        for user, s in zip(rep.users, rep.sessions):
            tags = [(d, raw[0]) for d, raw in user.transcript]
            assert tags == [("sent", TAG_PROPOSAL), ("received", TAG_OFFER), ("sent", TAG_REFUND)], tags
            assert s.log_posts == 2
        session_posts = [e for e in rep.ledger.log if e.posted_at > rep.start_height]
        assert len(session_posts) == 2 * len(rep.users)
        notes.append("3 sessions checked")


def test_c04_timing_formula(criterion):
    with criterion(4, "honest runs finish within 10*omega*6 minutes, exact block counts", 5.0) as notes:
        for omega, blocks in HONEST_BLOCKS.items():
            t = timing_report(run_scenario(Scenario(omega=omega)))
            assert t.blocks == {"s0000": blocks}, (omega, t.blocks)
            assert t.bound_minutes == 10 * omega * 6
            assert t.minutes["s0000"] == 10 * blocks <= t.bound_minutes
            notes.append(f"omega={omega}: {blocks} blocks, {10 * blocks}/{t.bound_minutes} min")


def test_c05_theft_impossible(criterion):
    with criterion(5, "10,000 forged multisig spends all rejected", 30.0) as notes:
        result = theft_fuzz(10_000, seed=0)
        assert result.attempts == 10_000
        assert result.accepted == [], result.accepted[:5]
        notes.append(f"rejections={result.rejections}")


def test_c06_accountability(criterion):
    scripts = {
        Branch.NO_BLIND_SIG: PartyScript(0, "mixer", abort_at=5),
        Branch.NO_PAYOUT: PartyScript(0, "mixer", abort_at=7),
        Branch.NO_COSIGN: PartyScript(0, "mixer", abort_at=10),
    }
    with criterion(6, "cheats convict, honest runs do not, bit-flips are invalid", 10.0) as notes:
        assert set(scripts) == set(EVIDENCE_BRANCHES)
        honest = run_scenario(Scenario(omega=1, seed=6))
        flips = 0
        for branch, script in scripts.items():
            rep = run_scenario(Scenario(omega=1, seed=6, adversary=[script]))
            ev = build_evidence(rep.users[0], branch)
            assert verify_evidence(ev, rep.ledger) is Verdict.GUILTY, branch

            user = honest.users[0]
            with pytest.raises(EvidenceRefused):
                build_evidence(user, branch)
            assert verify_evidence(assemble_evidence(user, branch), honest.ledger) is Verdict.INSUFFICIENT

            raw = ev.to_bytes()
            rng = random.Random(f"flip:{branch.value}")
            for _ in range(100):
                bit = rng.randrange(len(raw) * 8)
                flipped = bytearray(raw)
                flipped[bit // 8] ^= 1 << (bit % 8)
                assert verify_evidence(bytes(flipped), rep.ledger) is Verdict.INVALID, (branch, bit)
                flips += 1
        notes.append(f"{flips} bit-flips invalid")


def test_c07_user_default_economics(criterion):
    with criterion(7, "user abort after payout: user and mixer each lose zv - v = v at z=2", 5.0) as notes:
        free = FeeConfig(log_fee_per_kb=0, message_bytes=0)
        for z in ("2", "1.5", "3"):
            rep = run_scenario(Scenario(v=btc("0.1"), z=Fraction(z), omega=1, fees=free,
                                        adversary=[PartyScript(0, "user", abort_at=8)]))
            d = rep.sessions[0].deltas
            zv_minus_v = (Fraction(z) - 1) * Fraction("0.1") * COIN
            assert d.user == -zv_minus_v, (z, d)
            assert d.mixer == -btc("0.1"), (z, d)
            if z == "2":
                assert d.user == d.mixer == -10_000_000
            notes.append(f"z={z}: user {d.user}")


def test_c08_anonymity(criterion):
    with criterion(8, "candidate set size n for n in {2,4,8}; graph disconnected at n=100", 60.0) as notes:
        for n in (2, 4, 8):
            rep = run_scenario(Scenario(n_users=n, omega=1, seed=n))
            assert rep.anonymity is not None and len(rep.anonymity) == n
            sizes = {len(c) for c in rep.anonymity.values()}
            assert sizes == {n}, (n, sizes)
        big = run_scenario(Scenario(n_users=100, omega=1, seed=100))
        assert all(s.completed for s in big.sessions)
        assert big.graph_disconnected
        notes.append("sizes 2/4/8, n=100 disconnected")


def test_c09_blind_signatures(criterion):
    with criterion(9, "unblinded = direct signature x200; blinded payloads pass chi-square", 60.0) as notes:
        rng = random.Random("c09")
        key = crypto.keygen(512, rng)
        for _ in range(200):
            k_out = crypto.keygen(512, rng).address
            msg = output_message(k_out)
            bm, r = crypto.blind(msg, key.public, rng)
            sig = crypto.unblind(crypto.blind_sign(key, bm), r, key.public)
            assert crypto.verify(key.public, msg, sig)
            assert sig.sigma == crypto.sign(key, msg).sigma
        # one fixed message blinded 10,000 times: payloads should look uniform on [0, n)
        msg = output_message(k_out)
        n = key.public.n
        counts = [0] * 256
        for _ in range(10_000):
            bm, _ = crypto.blind(msg, key.public, rng)
            counts[bm.payload * 256 // n] += 1
        p = chisquare(counts).pvalue
        assert p >= 0.01, p
        notes.append(f"chi-square p={p:.3f}")


def test_c10_scalability(criterion):
    with criterion(10, "compute grows sub-quadratically over n = 10..200", 300.0) as notes:
        points, slope = scalability(ns=(10, 50, 100, 200), seed=10, workers=4)
        totals = [p[1] for p in points]
        assert all(a < b for a, b in zip(totals, totals[1:])), totals
        assert slope < 1.5, slope
        per_user = [p[2] for p in points]
        assert max(per_user) < 2.0, per_user
        notes.append(f"exponent={slope:.2f}; per-user ms=" + "/".join(f"{x * 1000:.1f}" for x in per_user))


def test_c11_determinism(criterion, tmp_path):
    with criterion(11, "same seed gives byte-identical report.json and ledger.jsonl", 30.0) as notes:
        scenarios = [Scenario(omega=1, seed=123), Scenario.load(SCENARIOS / "mixed.toml"),
                     Scenario.load(SCENARIOS / "server_abort_5b.toml")]
        for i, sc in enumerate(scenarios):
            a, b = tmp_path / f"{i}a", tmp_path / f"{i}b"
            write_artifacts(run_scenario(sc), a)
            write_artifacts(run_scenario(sc), b)
            for name in ("report.json", "ledger.jsonl"):
                assert (a / name).read_bytes() == (b / name).read_bytes(), (i, name)
        notes.append(f"{len(scenarios)} scenarios")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
