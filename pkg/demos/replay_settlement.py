"""Replay the bundled cross-border settlement scenario and narrate its
audit trail: one poisoned feed, one surgical freeze, and the money landing
where the weights say it should."""
from govsim import replay_case_study


def main() -> None:
    report = replay_case_study()
    body = report.body
    mission = body["mission"]

    print(f"mission {mission['mission_id']}")
    print(f"  {mission['order_count']} orders, {mission['notional_value']} {mission['currency']}")
    print(f"  {mission['start_clock']} -> {mission['completion_clock']}  [{mission['outcome']}]")
    print()

    for freeze in body["freezes"]:
        print(
            f"freeze at tick {freeze['tick']} ({freeze['clock']}): "
            f"{freeze['scope']} on {freeze['node_id']}, z = {freeze['z_value']:.2f}"
        )
    for esc in body["escalations"]:
        print(f"  escalation tier {esc['tier']} ({esc['freeze_count']} freeze(s) in window)")
    rerun = body["budgets"]["per_node"]["TASK-002B"]
    print(f"  rerun: attempt {rerun['attempts']}, {rerun['spent']} tokens spent on the clean pass")
    screen = body["screening"]["TASK-002B"]
    print(
        f"  re-screen: {screen['affected']} affected orders -> "
        f"{screen['cleared']} cleared, {screen['flagged']} flagged {screen['flagged_ids']}"
    )
    print()

    q = body["quarantine"]
    print(f"quarantine: {q['quarantined']} held, {q['proceeded']} proceeded, {q['remaining']} still held at close")
    for step in q["trace"]:
        print(f"  tick {step['tick']:>6} {step['action']:<10} {step['node_id']}: {step['items']}")
    print()

    cross = body["cross_node"]
    print(
        f"cross-organization attestation: {cross['amount']} to {cross['provider_account']} "
        f"(tax {cross['tax']}), released {cross['released']}"
    )
    print()

    dispute = body["dispute"]
    print(f"dispute {dispute['case_id']}: votes {dispute['votes']}")
    for state, tick in dispute["trace"]:
        print(f"  tick {tick:>7} {state}")
    print(f"  precedent {dispute['precedent_id']}")
    print(
        f"  re-screen of the contested order: {dispute['represcreen']['before']} "
        f"-> {dispute['represcreen']['after']} under charter v{mission['charter_version']}"
    )
    print()

    flows = body["token_flows"]
    pool = flows["pool"]
    print(f"reward pool {pool['total']}: protocol {pool['protocol_tax']}, infra {pool['infra_tax']}, net {pool['net']}")
    for did, amount in sorted(flows["rewards"].items(), key=lambda kv: kv[0]):
        print(f"  {amount:>8}  {did}")
    print(f"  distributed {flows['distributed_total']}, slashed {flows['slash_total']}")
    print()

    print(f"ledger: {body['ledger']['records']} records, head {body['ledger']['head_digest'][:23]}...")
    print(f"assertion failures: {len(body['assertion_failures'])}")
    print(f"fingerprint {body['fingerprint']}")


if __name__ == "__main__":
    main()
