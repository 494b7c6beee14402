"""Audit the economic machinery without running a full mission.

Sweeps two incentive grids (one sound, one with a profitable deviation),
then attacks a real ledger: a single tampered record must break the chain,
and the offline dump check must catch a forged line."""
import json

from govsim import (
    IncentiveParams,
    check_incentive_compatibility,
    replay_fault_drill,
    verify_jsonl,
)


def sweep(label: str, reward: dict, slash: dict) -> None:
    params = IncentiveParams.from_tables(reward, slash)
    result = check_incentive_compatibility(params)
    print(f"{label}: {'holds' if result.holds else 'violated'}")
    for d in result.violations:
        gain = reward[str(d)]
        print(f"  deviation {d}: reward {gain} vs honest {reward['0']}, penalty {slash[str(d)]}")


def incentive_grids() -> None:
    flat = {"0": "50.00", "1": "50.00", "2": "50.00", "3": "50.00"}
    bumped = {"0": "50.00", "1": "60.00", "2": "60.00", "3": "60.00"}
    slash = {"0": "0.00", "1": "5.00", "2": "5.00", "3": "5.00"}
    sweep("flat rewards, 5.00 expected penalty", flat, slash)
    sweep("deviation pays 10.00 against the same penalty", bumped, slash)
    print()


def ledger_attacks() -> None:
    report = replay_fault_drill()
    ledger = report.ledger
    print(f"ledger from the drill replay: {len(ledger)} records")
    print(f"  untouched chain verifies: {bool(ledger.verify_chain())}")

    twin = ledger.fork()
    victim = len(twin) // 2
    twin._tamper_payload(victim, {**twin.payload(victim), "amount": "999999.00"})
    verdict = twin.verify_chain()
    print(f"  payload rewritten at seq {victim}: broken at seq {verdict.first_broken_seq}")

    lines = report.ledger_jsonl.splitlines()
    row = json.loads(lines[victim])
    row["actor"] = "intruder"
    lines[victim] = json.dumps(row, sort_keys=True)
    offline = verify_jsonl(lines)
    print(f"  forged actor in the dump: offline check broken at seq {offline.first_broken_seq}")


def main() -> None:
    incentive_grids()
    ledger_attacks()


if __name__ == "__main__":
    main()
