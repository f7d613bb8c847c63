"""Scenario engine: one mixer, N users, simulated block time, scripted adversaries.

A run is fully determined by its scenario (seed included). Each block the
driver polls users in label order, then the mixer's payout scanner, then the
mixer sessions, and finally mines. Wall-clock compute is measured around
protocol work only and kept out of ``report.json`` so that file stays
byte-identical across runs.
"""
from __future__ import annotations

import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import tomli

from . import crypto
from .anonymity import MAX_BRUTE_FORCE, anonymity_set, disconnected
from .crypto import AddressKind, KeyPair
from .evidence import MoneyDeltas, loss_accounting, verify_evidence
from .ledger import Ledger, LedgerConfig, LedgerError, OutPoint, transfer
from .messages import MixParameters, default_schedule, max_blind_post_size
from .protocol import (Behavior, ChainView, Emit, MixerSession, Mixer, Pay, PostLog, Send, Step,
                       Submit, UserKeys, UserSession, advance, start_user_session)
from .units import btc, fmt, ratio

# covers an evidence announcement of any size this harness produces
EVIDENCE_FUND = btc("0.01")


# the steps at which each party acts, and so can refuse to
ABORT_STEPS = {"user": (4, 6, 8, 9), "mixer": (3, 5, 7, 10)}


class ScenarioError(ValueError):
    pass


@dataclass
class FeeConfig:
    log_fee_per_kb: int = 10_000
    # every log post is billed as at least this many bytes
    message_bytes: int = 5000
    tx_fee: int = 0
    # the settlement reimburses the mixer's blind-signature post
    user_pays_both: bool = True

    def ledger_config(self) -> LedgerConfig:
        return LedgerConfig(tx_fee=self.tx_fee, log_fee_per_kb=self.log_fee_per_kb,
                            log_billed_min_bytes=self.message_bytes)


@dataclass
class PartyScript:
    session: int
    party: str
    abort_at: int | None = None
    tamper: str | None = None

    def __post_init__(self):
        if self.party not in ("user", "mixer"):
            raise ScenarioError(f"party must be 'user' or 'mixer', not {self.party!r}")
        steps = ABORT_STEPS[self.party]
        if self.abort_at is not None and self.abort_at not in steps:
            raise ScenarioError(f"{self.party} can only abort at steps {steps}")
        allowed = {"user": ("refund_split",), "mixer": ("blind_sig",)}[self.party]
        if self.tamper is not None and self.tamper not in allowed:
            raise ScenarioError(f"{self.party} can only tamper with {allowed}")


@dataclass
class Scenario:
    n_users: int = 1
    v: int = btc("0.1")
    z: Fraction = Fraction(2)
    rho: Fraction = Fraction(1, 100)
    omega: int = 6
    seed: int = 0
    key_bits: int = 512
    fees: FeeConfig = field(default_factory=FeeConfig)
    adversary: list[PartyScript] = field(default_factory=list)
    # per-session chunk size overrides, session index -> satoshis
    chunk_sizes: dict[int, int] = field(default_factory=dict)
    workers: int = 1
    announce_evidence: bool = True

    def __post_init__(self):
        if self.n_users < 1:
            raise ScenarioError("need at least one user")
        for script in self.adversary:
            if not 0 <= script.session < self.n_users:
                raise ScenarioError(f"adversary targets unknown session {script.session}")

    def behavior(self, session: int, party: str) -> Behavior:
        for script in self.adversary:
            if script.session == session and script.party == party:
                return Behavior(script.abort_at, script.tamper)
        return Behavior()

    def chunk(self, session: int) -> int:
        return self.chunk_sizes.get(session, self.v)

    def to_dict(self) -> dict:
        return {
            "n_users": self.n_users,
            "v": fmt(self.v),
            "z": str(self.z),
            "rho": str(self.rho),
            "omega": self.omega,
            "seed": self.seed,
            "key_bits": self.key_bits,
            "workers": self.workers,
            "announce_evidence": self.announce_evidence,
            "fees": {
                "log_fee_per_kb": fmt(self.fees.log_fee_per_kb),
                "message_bytes": self.fees.message_bytes,
                "tx_fee": fmt(self.fees.tx_fee),
                "user_pays_both": self.fees.user_pays_both,
            },
            "adversary": [{k: v for k, v in asdict(a).items() if v is not None} for a in self.adversary],
            "chunk_sizes": {str(k): fmt(v) for k, v in sorted(self.chunk_sizes.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        known = {"n_users", "v", "z", "rho", "omega", "seed", "key_bits", "fees", "adversary",
                 "chunk_sizes", "workers", "announce_evidence"}
        unknown = set(d) - known
        if unknown:
            raise ScenarioError(f"unknown scenario fields: {sorted(unknown)}")
        try:
            kw = {}
            for key in ("n_users", "omega", "seed", "key_bits", "workers"):
                if key in d:
                    kw[key] = int(d[key])
            if "announce_evidence" in d:
                kw["announce_evidence"] = bool(d["announce_evidence"])
            if "v" in d:
                kw["v"] = btc(str(d["v"]))
            for key in ("z", "rho"):
                if key in d:
                    kw[key] = ratio(str(d[key]))
            if "fees" in d:
                f = dict(d["fees"])
                bad = set(f) - {"log_fee_per_kb", "message_bytes", "tx_fee", "user_pays_both"}
                if bad:
                    raise ScenarioError(f"unknown fee fields: {sorted(bad)}")
                fees = FeeConfig()
                if "log_fee_per_kb" in f:
                    fees.log_fee_per_kb = btc(str(f["log_fee_per_kb"]))
                if "message_bytes" in f:
                    fees.message_bytes = int(f["message_bytes"])
                if "tx_fee" in f:
                    fees.tx_fee = btc(str(f["tx_fee"]))
                if "user_pays_both" in f:
                    fees.user_pays_both = bool(f["user_pays_both"])
                kw["fees"] = fees
            kw["adversary"] = [PartyScript(**a) for a in d.get("adversary", [])]
            kw["chunk_sizes"] = {int(k): btc(str(v)) for k, v in d.get("chunk_sizes", {}).items()}
        except ScenarioError:
            raise
        except (TypeError, ValueError, ArithmeticError) as exc:
            raise ScenarioError(f"bad scenario value: {exc}") from None
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        try:
            if path.suffix == ".json":
                data = json.loads(text)
            else:
                data = tomli.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        except tomli.TOMLDecodeError as exc:
            line = getattr(exc, "lineno", None) or text.count("\n", 0, getattr(exc, "pos", len(text))) + 1
            raise ScenarioError(f"{path}: invalid TOML at line {line}: {exc.args[0]}") from None
        return cls.from_dict(data)


# -- reports ----------------------------------------------------------------

@dataclass
class SessionReport:
    label: str
    v: int
    user_step: str
    user_branch: str | None
    mixer_step: str
    mixer_branch: str | None
    deltas: MoneyDeltas
    traffic: dict[str, int]
    direct_messages: int
    log_posts: int
    start_height: int
    end_height: int
    verdict: str | None
    evidence: str | None
    refused: list[str]
    offer: str | None = None
    txids: dict[str, str] = field(default_factory=dict)
    transcript: list[str] = field(default_factory=list)

    @property
    def blocks(self) -> int:
        return self.end_height - self.start_height

    @property
    def completed(self) -> bool:
        return self.user_step == "COMPLETED"

    def to_dict(self, block_minutes: int) -> dict:
        return {
            "label": self.label,
            "v": self.v,
            "user": {"step": self.user_step, "branch": self.user_branch},
            "mixer": {"step": self.mixer_step, "branch": self.mixer_branch},
            "deltas": self.deltas.to_dict(),
            "traffic": self.traffic,
            "direct_messages": self.direct_messages,
            "log_posts": self.log_posts,
            "start_height": self.start_height,
            "end_height": self.end_height,
            "blocks": self.blocks,
            "minutes": self.blocks * block_minutes,
            "verdict": self.verdict,
            "evidence": self.evidence,
            "refused": self.refused,
            "offer": self.offer,
            "txids": self.txids,
            "transcript": self.transcript,
        }


@dataclass
class RunReport:
    scenario: Scenario
    sessions: list[SessionReport]
    start_height: int
    final_height: int
    genesis_supply: int
    total_unspent: int
    fees_paid: int
    anonymity: dict[str, list[str]] | None
    graph_disconnected: bool
    deadline_violations: list[str]
    errors: list[str]
    block_minutes: int
    # wall-clock, excluded from to_json
    compute_seconds: dict[str, float] = field(default_factory=dict)
    mixer_seconds: float = 0.0
    ledger: Ledger | None = None
    users: list[UserSession] = field(default_factory=list)
    mixer_sessions: list[MixerSession | None] = field(default_factory=list)

    @property
    def conserved(self) -> bool:
        return self.total_unspent + self.fees_paid == self.genesis_supply

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "start_height": self.start_height,
            "final_height": self.final_height,
            "ledger": {"genesis_supply": self.genesis_supply, "total_unspent": self.total_unspent,
                       "fees_paid": self.fees_paid, "conserved": self.conserved},
            "sessions": [s.to_dict(self.block_minutes) for s in self.sessions],
            "anonymity": self.anonymity,
            "graph_disconnected": self.graph_disconnected,
            "deadline_violations": self.deadline_violations,
            "errors": self.errors,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def timing_csv(self) -> str:
        rows = ["n_users,session,wall_ms"]
        for label, secs in self.compute_seconds.items():
            rows.append(f"{self.scenario.n_users},{label},{secs * 1000:.3f}")
        return "\n".join(rows) + "\n"

    @property
    def total_compute(self) -> float:
        return sum(self.compute_seconds.values()) + self.mixer_seconds


# -- traffic -------------------------------------------------------------------

def classify(ledger: Ledger, txid: bytes) -> str:
    tx = ledger.txs[txid]
    if tx.is_log_post:
        return "log"
    if any(ledger.utxos[i.prevout].owner.kind is AddressKind.MULTISIG for i in tx.inputs):
        return "multisig"
    return "standard"


def scan_traffic(ledger: Ledger, after_height: int) -> dict[str, int]:
    """Count every transaction mined after ``after_height`` by kind."""
    counts = {"standard": 0, "multisig": 0, "log": 0}
    for block in ledger.blocks[after_height + 1:]:
        for tx in block.transactions:
            counts[classify(ledger, tx.txid)] += 1
    counts["total"] = sum(counts.values())
    return counts


# -- driver ----------------------------------------------------------------

def _fund(ledger: Ledger, key: KeyPair, amount: int) -> list[tuple[OutPoint, KeyPair]]:
    coins = sorted((u.amount, op) for op, u in ledger.unspent(key.address)
                   if not ledger.is_pending_spend(op))
    exact = [op for amt, op in coins if amt >= amount][:1]
    if exact:
        return [(exact[0], key)]
    return [(op, key) for _, op in coins]


class _Driver:
    def __init__(self, scenario: Scenario):
        self.s = scenario
        self.violations: list[str] = []
        self.errors: list[str] = []
        self.compute: dict[str, float] = {}
        self.mixer_seconds = 0.0

    def execute(self, session, action, h: int, outbox: list) -> object:
        """Carry out one action; returns the session with any txid recorded."""
        ledger = self.ledger
        if isinstance(action, Send):
            if action.deadline is not None and h > action.deadline:
                self.violations.append(f"{session.label}:{action.purpose}@{h}>{action.deadline}")
            outbox.append(action.message)
            return session
        if isinstance(action, Emit):
            if not self.s.announce_evidence:
                return session
            payload = action.evidence.announcement()
            action = PostLog(payload, session.keys.anon, None, "evidence", None)
        deadline = getattr(action, "deadline", None)
        if deadline is not None and h + 1 > deadline:
            self.violations.append(f"{session.label}:{action.purpose}@{h + 1}>{deadline}")
        try:
            t0 = time.perf_counter()
            if isinstance(action, Pay):
                tx = transfer(ledger, action.payer, action.to, action.amount)
                self._charge(session, time.perf_counter() - t0)
                txid = ledger.submit(tx)
            elif isinstance(action, PostLog):
                funding = _fund(ledger, action.funder, ledger.log_fee(action.payload))
                txid = ledger.post_log(action.payload, funding, action.poster, action.funder.address)
            elif isinstance(action, Submit):
                txid = ledger.submit(action.tx)
            else:
                raise TypeError(action)
        except LedgerError as exc:
            self.errors.append(f"{session.label}:{action.purpose}: {exc.code}: {exc}")
            return session
        return session.with_tx(action.purpose, txid)

    def _charge(self, session, secs: float) -> None:
        self.compute[session.label] = self.compute.get(session.label, 0.0) + secs

    def _timed_advance(self, session, inbox):
        t0 = time.perf_counter()
        out = advance(session, self.view, self.ledger.height, inbox, self.s.fees.tx_fee)
        return out, time.perf_counter() - t0

    def run(self) -> RunReport:
        s = self.s
        fees = s.fees
        cfg = fees.ledger_config()
        rng_users = random.Random(f"lockcoin:{s.seed}:users")
        rng_mixer = random.Random(f"lockcoin:{s.seed}:mixer")
        rng_blind = random.Random(f"lockcoin:{s.seed}:blind")
        n = s.n_users
        labels = [f"s{i:04d}" for i in range(n)]
        chunks = [s.chunk(i) for i in range(n)]

        probe = crypto.PublicKey((1 << s.key_bits) - 1)
        post_fee = cfg.log_fee(max_blind_post_size(probe))
        unblinded_fee = cfg.log_fee(1 + 21 + 4 + s.key_bits // 8)
        reimb = post_fee if fees.user_pays_both else 0
        mixer = Mixer.create(chunks, (s.z, s.z), (s.rho, s.rho), (s.omega, s.omega), s.key_bits,
                             rng_mixer, log_fee_reimbursement=reimb)
        users = [UserKeys.generate(s.key_bits, rng_users) for _ in range(n)]

        adv_payload = mixer.advertisement.to_bytes()
        alloc = [(mixer.fee_key.address, cfg.log_fee(len(adv_payload)))]
        alloc += [(mixer.fee_key.address, post_fee)] * n
        for i, keys in enumerate(users):
            v = chunks[i]
            deposit = MixParameters(v, default_schedule(0, s.omega), s.omega, s.z, s.rho,
                                    keys.k_A.public, reimb).deposit
            alloc += [(mixer.pool_address, v + fees.tx_fee),
                      (keys.k_in_prime.address, deposit + fees.tx_fee),
                      (keys.k_in.address, v + fees.tx_fee),
                      (keys.anon.address, unblinded_fee)]
            if s.announce_evidence:
                alloc.append((keys.anon.address, EVIDENCE_FUND))
        self.ledger = ledger = Ledger(alloc, cfg)

        # step (1): the advertisement goes on the public log before any session
        ledger.post_log(adv_payload, _fund(ledger, mixer.fee_key, ledger.log_fee(adv_payload)),
                        mixer.address, mixer.fee_key.address)
        ledger.mine_block()
        start = ledger.height
        self.view = view = ChainView(ledger)

        # steps (2)-(3)
        user_s: list[UserSession] = []
        mixer_s: list[MixerSession | None] = []
        user_inbox: list[list[bytes]] = [[] for _ in range(n)]
        mixer_inbox: list[list[bytes]] = [[] for _ in range(n)]
        by_k_out = {}
        for i, keys in enumerate(users):
            params = MixParameters(chunks[i], default_schedule(start, s.omega), s.omega, s.z, s.rho,
                                   keys.k_A.public, reimb)
            t0 = time.perf_counter()
            us, raw = start_user_session(labels[i], keys, mixer.advertisement, params, rng_blind,
                                         ledger, s.behavior(i, "user"))
            ms, reply = mixer.accept(labels[i], raw, s.behavior(i, "mixer"))
            self._charge(us, time.perf_counter() - t0)
            user_s.append(us)
            mixer_s.append(ms)
            user_inbox[i].append(reply)
            by_k_out[keys.k_out.address] = i
            if s.behavior(i, "mixer").abort_at == 7:
                mixer.skip_payout.add(keys.k_out.address)

        end_height = [start] * n
        horizon = max(p.params.t(7) for p in user_s) + s.omega + 2
        pool = ThreadPoolExecutor(s.workers) if s.workers > 1 else None

        def all_done():
            return all(u.terminal for u in user_s) and all(m is None or m.terminal for m in mixer_s)

        while not all_done() and ledger.height <= horizon:
            h = ledger.height
            view.refresh()
            inboxes = [tuple(b) for b in user_inbox]
            for b in user_inbox:
                b.clear()
            jobs = [(user_s[i], inboxes[i]) for i in range(n)]
            if pool:
                results = list(pool.map(lambda job: self._timed_advance(*job), jobs))
            else:
                results = [self._timed_advance(*job) for job in jobs]
            for i, ((new, actions), secs) in enumerate(results):
                self._charge(new, secs)
                for act in actions:
                    new = self.execute(new, act, h, mixer_inbox[i])
                if new.terminal and not user_s[i].terminal:
                    end_height[i] = h
                user_s[i] = new

            t0 = time.perf_counter()
            payouts = mixer.pay_outs(view)
            self.mixer_seconds += time.perf_counter() - t0
            for act in payouts:
                i = by_k_out[act.to]
                user_s[i] = self.execute(user_s[i], act, h, [])

            for i in range(n):
                ms = mixer_s[i]
                if ms is None or ms.terminal:
                    mixer_inbox[i].clear()
                    continue
                inbox = tuple(mixer_inbox[i])
                mixer_inbox[i].clear()
                (new, actions), secs = self._timed_advance(ms, inbox)
                self._charge(new, secs)
                for act in actions:
                    new = self.execute(new, act, h, user_inbox[i])
                mixer_s[i] = new
            ledger.mine_block()
        if pool:
            pool.shutdown()
        if ledger.pending:
            ledger.mine_block()

        for i, us in enumerate(user_s):
            if us.step is Step.COMPLETED:
                end_height[i] = ledger.tx_height[us.refund_txid]
        return self._report(mixer, user_s, mixer_s, start, end_height)

    def _report(self, mixer, user_s, mixer_s, start, end_height) -> RunReport:
        ledger, s = self.ledger, self.s
        wallets = [mixer.pool_address, mixer.fee_key.address, mixer.address]
        sessions = []
        for i, us in enumerate(user_s):
            ms = mixer_s[i]
            deltas = loss_accounting(us, ms, ledger, wallets)
            txids = list(dict.fromkeys([t for _, t in us.txids] + ([t for _, t in ms.txids] if ms else [])))
            traffic = {"standard": 0, "multisig": 0, "log": 0}
            for txid in txids:
                traffic[classify(ledger, txid)] += 1
            traffic["total"] = sum(traffic.values())
            verdict = ev_hex = None
            if us.evidence is not None:
                verdict = verify_evidence(us.evidence, ledger).value
                ev_hex = us.evidence.to_bytes().hex()
            direct = len(us.transcript)
            log_posts = sum(1 for t in txids if ledger.txs[t].is_log_post)
            sessions.append(SessionReport(
                us.label, us.params.v, us.step.name, us.branch.value if us.branch else None,
                ms.step.name if ms else "NONE", ms.branch.value if ms and ms.branch else None,
                deltas, traffic, direct, log_posts, start, end_height[i], verdict, ev_hex,
                list(ms.refused) if ms else [],
                offer=us.offer.to_bytes().hex() if us.offer is not None else None,
                txids={f"{side}.{purpose}": txid.hex()
                       for side, sess in (("user", us), ("mixer", ms)) if sess is not None
                       for purpose, txid in sess.txids},
                transcript=[f"{direction}:{raw[0]:02x}" for direction, raw in us.transcript]))

        epoch = [(us.label, us.offer) for us in user_s if us.offer is not None]
        anon = None
        if 0 < len(epoch) <= MAX_BRUTE_FORCE:
            sets = anonymity_set(ledger, epoch)
            anon = {str(k): sorted(v) for k, v in sorted(sets.items(), key=lambda kv: str(kv[0]))}
        pairs = []
        for us in user_s:
            if us.offer is None or us.keys.k_out is None:
                continue
            k = us.keys
            pairs.append(({k.k_in.address, k.k_in_prime.address, us.offer.k_AM, us.offer.k_esc},
                          {k.k_out.address, mixer.pool_address}))
        return RunReport(
            scenario=s, sessions=sessions, start_height=start, final_height=ledger.height,
            genesis_supply=ledger.genesis_supply, total_unspent=ledger.total_unspent(),
            fees_paid=ledger.fees_paid, anonymity=anon, graph_disconnected=disconnected(ledger, pairs),
            deadline_violations=self.violations, errors=self.errors,
            block_minutes=ledger.config.block_interval_minutes,
            compute_seconds=dict(self.compute), mixer_seconds=self.mixer_seconds,
            ledger=ledger, users=user_s, mixer_sessions=mixer_s)


def run_scenario(scenario: Scenario) -> RunReport:
    return _Driver(scenario).run()


# -- summaries ---------------------------------------------------------------

@dataclass(frozen=True)
class TimingSummary:
    omega: int
    blocks: dict[str, int]
    minutes: dict[str, int]
    bound_minutes: int
    within_bound: bool
    per_user_seconds: dict[str, float]

    @property
    def mean_user_seconds(self) -> float:
        vals = list(self.per_user_seconds.values())
        return sum(vals) / len(vals) if vals else 0.0


def timing_report(report: RunReport) -> TimingSummary:
    """Simulated end-to-end minutes per completed session, against 10 x omega x 6."""
    omega = report.scenario.omega
    done = [s for s in report.sessions if s.completed]
    blocks = {s.label: s.blocks for s in done}
    minutes = {k: b * report.block_minutes for k, b in blocks.items()}
    bound = report.block_minutes * omega * 6
    return TimingSummary(omega, blocks, minutes, bound, all(m <= bound for m in minutes.values()),
                         dict(report.compute_seconds))


@dataclass(frozen=True)
class FeeSummary:
    expected: int
    measured: dict[str, int]

    @property
    def matches(self) -> bool:
        return bool(self.measured) and all(m == self.expected for m in self.measured.values())


def fee_report(report: RunReport, v: int, rho: Fraction, msg_fee: int) -> FeeSummary:
    """Expected user cost v*rho + 2*msg_fee next to what each completed user actually paid."""
    expected = v * rho + 2 * msg_fee
    if expected.denominator != 1:
        raise ValueError("fee is not a whole number of satoshis")
    measured = {s.label: -s.deltas.user for s in report.sessions if s.completed}
    return FeeSummary(int(expected), measured)


# -- experiments ---------------------------------------------------------------

def scalability(ns=(10, 50, 100, 200), seed: int = 0, omega: int = 1, workers: int = 1,
                key_bits: int = 512) -> tuple[list[tuple[int, float, float]], float]:
    """Total protocol compute per user count, and the fitted log-log exponent."""
    points = []
    for n in ns:
        rep = run_scenario(Scenario(n_users=n, seed=seed, omega=omega, workers=workers, key_bits=key_bits))
        total = rep.total_compute
        points.append((n, total, total / n))
    slope = float(np.polyfit(np.log([p[0] for p in points]), np.log([p[1] for p in points]), 1)[0])
    return points, slope


def deposit_ratio_sweep(zs=("1.5", "2", "3"), v: str = "0.1", seed: int = 0) -> list[tuple[Fraction, int, int]]:
    """Step (8b) economics: (z, user delta, mixer delta) for a user who never pays the chunk."""
    out = []
    for z in zs:
        sc = Scenario(v=btc(v), z=ratio(z), seed=seed, omega=1,
                      fees=FeeConfig(log_fee_per_kb=0, message_bytes=0),
                      adversary=[PartyScript(0, "user", abort_at=8)])
        rep = run_scenario(sc)
        d = rep.sessions[0].deltas
        out.append((ratio(z), d.user, d.mixer))
    return out


def write_artifacts(report: RunReport, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.json", "ledger": out / "ledger.jsonl", "timing": out / "timing.csv"}
    paths["report"].write_text(report.to_json(), encoding="utf-8")
    paths["ledger"].write_text(report.ledger.dump_jsonl(), encoding="utf-8")
    paths["timing"].write_text(report.timing_csv(), encoding="utf-8")
    ev_dir = out / "evidence"
    for s in report.sessions:
        if s.evidence:
            ev_dir.mkdir(exist_ok=True)
            (ev_dir / f"{s.label}.hex").write_text(s.evidence + "\n", encoding="utf-8")
    return paths
