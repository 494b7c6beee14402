"""Two containment drills.

First the stale-cache drill: an agent serves a cached FX rate, the guardian
freezes the node, forensics pins the fault on the agent, and the sanction
lands on its stake. Then the pressure test: the same corrupted feed survives
rollback after rollback until the fourth freeze in one window trips the
circuit breaker, against a control run where the feed recovers in time."""
import json

from govsim import CertState, replay_fault_drill, run, scenario_from_dict
from govsim.harness import STRESS_WINDOW_FIXTURE, bundled_scenario_path

AGENT = "did:netx:drill-lab:agent:exec-fx-77"


def stale_cache_drill() -> None:
    report = replay_fault_drill()
    body = report.body
    print(f"drill mission {body['mission']['mission_id']}  [{body['mission']['outcome']}]")
    for freeze in body["freezes"]:
        print(f"  freeze at tick {freeze['tick']}: z = {freeze['z_value']:.1f} on {freeze['node_id']}")
    (loop,) = body["correction_loops"]
    print(f"  post-mortem: {loop['classification']} -> {loop['attribution']}")
    for action in loop["identity_action"]:
        print(f"    {action}")
    print(f"  rules: {loop['rules_action']}")
    print(f"  sanction: slash {loop['sanction']['slash']}")
    account = report.treasury.account(AGENT)
    profile = report.registry.get(AGENT)
    print(
        f"  {AGENT}: stake {account.stake_locked}, "
        f"reputation {profile.reputation}, certification {profile.cert_state.value}"
    )
    assert profile.cert_state is CertState.UNDER_REVIEW
    print()


def pressure_test() -> None:
    raw = json.loads(bundled_scenario_path(STRESS_WINDOW_FIXTURE).read_text())
    tripped = run(scenario_from_dict(raw))

    control = json.loads(bundled_scenario_path(STRESS_WINDOW_FIXTURE).read_text())
    control["faults"][0]["deactivate_tick"] = 1700
    control["expectations"] = {}
    recovered = run(scenario_from_dict(control))

    for label, report in (("persistent feed fault", tripped), ("feed recovers by tick 1700", recovered)):
        body = report.body
        ladder = " -> ".join(e["tier"] for e in body["escalations"])
        print(f"{label}: {len(body['freezes'])} freezes")
        print(f"  ladder {ladder}")
        print(f"  outcome {body['mission']['outcome']}")
        meter = report.runs["TASK-ST-001"].meter
        print(f"  tool-call headroom after sanctions: {meter.tool_call_cap}")
        if report.dispute_case is not None:
            print(f"  escalation case filed: {report.dispute_case.case_id}")
        print()


def main() -> None:
    stale_cache_drill()
    pressure_test()


if __name__ == "__main__":
    main()
