"""Command-line front door.

Exit codes: 0 success, 2 bad input (unparsable scenario, unreadable file),
3 an internal invariant was breached during a run.

Every number printed by ``table3`` and ``anonymity`` is recomputed from the
artifacts on disk (report.json plus ledger.jsonl), never from constants.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .anonymity import anonymity_set
from .evidence import Evidence, verify_evidence
from .harness import Scenario, ScenarioError, classify, run_scenario, write_artifacts
from .ledger import Ledger, LedgerError
from .messages import SignedOffer, TAG_PROPOSAL
from .units import fmt, fmt_short

OUT_ENV = "LOCKCOIN_OUT"
EXIT_OK, EXIT_INPUT, EXIT_INVARIANT = 0, 2, 3


class InputError(Exception):
    pass


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "lockcoin-out"))


def _load_scenario(path: str | None, seed: int | None, **overrides) -> Scenario:
    scenario = Scenario.load(path) if path else Scenario(**overrides)
    if seed is not None:
        scenario = dataclasses.replace(scenario, seed=seed)
    return scenario


def _invariant_breaches(report) -> list[str]:
    out = []
    if not report.conserved:
        out.append("ledger does not conserve money")
    out += [f"deadline missed: {v}" for v in report.deadline_violations]
    for s in report.sessions:
        if s.user_step not in ("COMPLETED", "ABORTED"):
            out.append(f"{s.label} never reached a terminal state")
        if s.completed and s.traffic["total"] != 6:
            out.append(f"{s.label} completed with {s.traffic['total']} traffic items")
        if not s.deltas.zero_sum:
            out.append(f"{s.label} money deltas do not sum to zero")
    return out


def _read_artifacts(out_dir: Path) -> tuple[dict, Ledger]:
    try:
        report = json.loads((out_dir / "report.json").read_text(encoding="utf-8"))
        ledger = Ledger.from_jsonl((out_dir / "ledger.jsonl").read_text(encoding="utf-8"))
    except (OSError, ValueError, LedgerError) as exc:
        raise InputError(f"cannot load artifacts from {out_dir}: {exc}") from None
    return report, ledger


def _execute(scenario: Scenario, out_dir: Path, verbose: int = 0) -> int:
    report = run_scenario(scenario)
    write_artifacts(report, out_dir)
    for s in report.sessions:
        branch = s.user_branch or "-"
        print(f"{s.label} {s.user_step.lower()} branch={branch} blocks={s.blocks} "
              f"user={fmt(s.deltas.user)} mixer={fmt(s.deltas.mixer)} traffic={s.traffic['total']}"
              + (f" verdict={s.verdict}" if s.verdict else ""))
    if verbose:
        print(f"artifacts written to {out_dir}", file=sys.stderr)
    breaches = _invariant_breaches(report)
    for b in breaches:
        print(f"invariant breach: {b}", file=sys.stderr)
    return EXIT_INVARIANT if breaches else EXIT_OK


def cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario, args.seed)
    return _execute(scenario, Path(args.out), args.verbose)


def cmd_verify_evidence(args) -> int:
    try:
        raw = Path(args.evidence).read_bytes()
        ledger_text = Path(args.ledger).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(str(exc)) from None
    try:
        ledger = Ledger.from_jsonl(ledger_text)
    except (ValueError, LedgerError) as exc:
        raise InputError(f"{args.ledger}: {exc}") from None
    try:
        data = bytes.fromhex(raw.decode("ascii").strip())
    except (UnicodeDecodeError, ValueError):
        data = raw
    verdict = verify_evidence(data, ledger)
    if args.json:
        doc = {"verdict": verdict.value}
        try:
            doc.update(Evidence.from_bytes(data).to_dict())
        except (ValueError, KeyError):
            pass
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        print(verdict.value)
    return EXIT_OK


def table3_row(report: dict, ledger: Ledger) -> dict:
    """The Lockcoin row recomputed from one completed session's artifacts."""
    done = [s for s in report["sessions"] if s["user"]["step"] == "COMPLETED"]
    if not done:
        raise InputError("report has no completed session")
    s = done[0]
    traffic = {"standard": 0, "multisig": 0, "log": 0}
    for txid in dict.fromkeys(s["txids"].values()):
        try:
            traffic[classify(ledger, bytes.fromhex(txid))] += 1
        except KeyError:
            raise InputError(f"txid {txid} is not on the ledger") from None
    rounds = sum(1 for t in s["transcript"] if t == f"sent:{TAG_PROPOSAL:02x}")
    omega = int(report["scenario"]["omega"])
    minutes = ledger.config.block_interval_minutes
    try:
        offer = SignedOffer.from_bytes(bytes.fromhex(s["offer"]))
        refund = ledger.txs[bytes.fromhex(s["txids"]["mixer.refund"])]
    except (KeyError, ValueError) as exc:
        raise InputError(f"report does not match the ledger: {exc}") from None
    to_mixer = sum(o.amount for o in refund.outputs if o.address == offer.k_prime_M)
    return {
        "traffic": traffic,
        "rounds": rounds,
        "direct_messages": len(s["transcript"]),
        "bound_minutes": minutes * omega * 6,
        "measured_minutes": (s["end_height"] - s["start_height"]) * minutes,
        "fee": to_mixer - offer.params.log_fee_reimbursement,
        "user_cost": -s["deltas"]["user"],
        "omega": omega,
    }


def cmd_table3(args) -> int:
    if args.from_dir:
        out = Path(args.from_dir)
    else:
        out = Path(args.out)
        rc = _execute(_load_scenario(None, args.seed, omega=args.omega), out)
        if rc:
            return rc
    report, ledger = _read_artifacts(out)
    try:
        row = table3_row(report, ledger)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed report: {exc}") from None
    t = row["traffic"]
    print(f"Lockcoin (omega={row['omega']})")
    print(f"traffic: {sum(t.values())} transactions "
          f"({t['standard']} standard, {t['multisig']} multisig, {t['log']} log posts)")
    print(f"rounds: {row['rounds']} ({row['direct_messages']} direct messages)")
    print(f"time: {row['bound_minutes']} min (measured {row['measured_minutes']} min)")
    print(f"fee: {fmt_short(row['fee'])} BTC")
    print(f"user cost: {fmt_short(row['user_cost'])} BTC")
    return EXIT_OK


def cmd_anonymity(args) -> int:
    if args.from_dir:
        out = Path(args.from_dir)
    else:
        out = Path(args.out)
        rc = _execute(_load_scenario(args.scenario, args.seed, n_users=args.users), out)
        if rc:
            return rc
    report, ledger = _read_artifacts(out)
    try:
        epoch = [(s["label"], SignedOffer.from_bytes(bytes.fromhex(s["offer"])))
                 for s in report["sessions"] if s.get("offer")]
        sets = anonymity_set(ledger, epoch)
    except (KeyError, ValueError) as exc:
        raise InputError(f"cannot compute anonymity sets: {exc}") from None
    for k_out, labels in sorted(sets.items(), key=lambda kv: str(kv[0])):
        print(f"{k_out} size={len(labels)} candidates={','.join(sorted(labels))}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lockcoin", description="Accountable coin mixing over a simulated ledger.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def out_flags(sp):
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--out", default=str(default_out()),
                        help=f"output directory (default ${OUT_ENV} or ./lockcoin-out)")

    run = sub.add_parser("run", help="run a scenario and write report.json, ledger.jsonl, timing.csv")
    run.add_argument("--scenario", help="TOML or JSON scenario file (default: one honest user)")
    out_flags(run)
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify-evidence", help="check an evidence file against a ledger")
    ver.add_argument("evidence", help="evidence file, hex or raw bytes")
    ver.add_argument("ledger", help="ledger.jsonl")
    ver.add_argument("--json", action="store_true", help="print the JSON rendering")
    ver.set_defaults(func=cmd_verify_evidence)

    t3 = sub.add_parser("table3", help="print the Lockcoin comparison row from a real run")
    t3.add_argument("--omega", type=int, default=6)
    t3.add_argument("--from", dest="from_dir", help="reuse artifacts in this directory instead of running")
    out_flags(t3)
    t3.set_defaults(func=cmd_table3)

    an = sub.add_parser("anonymity", help="brute-force anonymity sets for every paid output")
    an.add_argument("--scenario", help="scenario to run (default: honest users)")
    an.add_argument("--users", type=int, default=4)
    an.add_argument("--from", dest="from_dir", help="reuse artifacts in this directory instead of running")
    out_flags(an)
    an.set_defaults(func=cmd_anonymity)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
