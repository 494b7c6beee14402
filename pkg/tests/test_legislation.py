"""Charter evaluation, decomposition, prescreening, bidding, contract stack."""
from decimal import Decimal

import pytest

from govsim.identity import CertEvent, IdentityRegistry
from govsim.ledger import AuditLedger, RecordKind
from govsim.legislation import (
    Bid,
    Charter,
    CertificationViolation,
    CycleError,
    IncompleteAssignment,
    JobSpec,
    NoEligibleBid,
    Predicate,
    Rejected,
    Rule,
    Authorized,
    Escalated,
    ValidationError,
    apply_amendment,
    decompose,
    find_conflicts,
    generate_contract_stack,
    prescreen,
    run_bidding,
)
from govsim.legislation import output_rules
from govsim.money import nxc
from helpers import (
    ceiling_charter,
    certified_registry,
    manifest_for,
    nine_node_job,
    template,
)


class TestPredicate:
    def test_numeric_threshold(self):
        p = Predicate("notional_value", "gt", "50000000")
        assert p.triggered({"notional_value": "51000000"})
        assert not p.triggered({"notional_value": "47300000"})
        assert not p.triggered({"notional_value": "50000000"})

    def test_absent_and_present(self):
        assert Predicate("beneficiary_bic", "absent").triggered({})
        assert not Predicate("beneficiary_bic", "absent").triggered({"beneficiary_bic": "X"})
        assert Predicate("raw_account_data", "present").triggered({"raw_account_data": []})

    def test_missing_field_defuses_numeric_ops(self):
        assert not Predicate("age", "lte", 36).triggered({})

    def test_unless_exception(self):
        p = Predicate(
            "adverse_media_age_months",
            "lte",
            36,
            unless=Predicate("remediation_verified", "eq", True),
        )
        assert p.triggered({"adverse_media_age_months": 14})
        assert not p.triggered(
            {"adverse_media_age_months": 14, "remediation_verified": True}
        )
        assert p.triggered(
            {"adverse_media_age_months": 14, "remediation_verified": False}
        )

    def test_eq_compares_numerically_when_possible(self):
        assert Predicate("count", "eq", "3").triggered({"count": 3})
        assert Predicate("flag", "ne", "settled").triggered({"flag": "pending"})

    def test_unknown_op_rejected(self):
        with pytest.raises(ValidationError):
            Predicate("x", "between", 1)

    def test_payload_roundtrip(self):
        p = Predicate("a", "lte", 36, unless=Predicate("b", "eq", True))
        assert Predicate.from_payload(p.to_payload()) == p


class TestCharter:
    def test_digest_ignores_rule_order(self):
        r1 = Rule("a", "order", Predicate("x", "gt", 1))
        r2 = Rule("b", "order", Predicate("y", "lt", 2))
        assert Charter(1, (r1, r2)).digest() == Charter(1, (r2, r1)).digest()

    def test_digest_tracks_version(self):
        r = Rule("a", "order", Predicate("x", "gt", 1))
        assert Charter(1, (r,)).digest() != Charter(2, (r,)).digest()

    def test_amendment_bumps_version_and_replaces_by_id(self):
        charter = ceiling_charter()
        relaxed = Rule(
            "ceiling", "manifest", Predicate("notional_value", "gt", "60000000"), "Escalate"
        )
        extra = Rule("new-rule", "order", Predicate("z", "present"))
        amended = apply_amendment(charter, [relaxed, extra])
        assert amended.version == 2
        assert amended.rule("ceiling").predicate.value == "60000000"
        assert amended.rule("new-rule")
        assert len(amended.rules) == 2

    def test_conflict_on_complementary_predicates(self):
        charter = ceiling_charter()
        contradiction = Rule(
            "floor", "manifest", Predicate("notional_value", "lte", "50000000")
        )
        assert find_conflicts(charter, [contradiction]) == [("ceiling", "floor")]

    def test_no_conflict_on_different_threshold_or_scope(self):
        charter = ceiling_charter()
        assert not find_conflicts(
            charter, [Rule("f1", "manifest", Predicate("notional_value", "lte", "40000000"))]
        )
        assert not find_conflicts(
            charter, [Rule("f2", "order", Predicate("notional_value", "lte", "50000000"))]
        )

    def test_rule_with_exception_never_conflicts(self):
        charter = ceiling_charter()
        softened = Rule(
            "soft",
            "manifest",
            Predicate(
                "notional_value", "lte", "50000000",
                unless=Predicate("waiver", "eq", True),
            ),
        )
        assert not find_conflicts(charter, [softened])

    def test_gate_filter_keeps_output_scope_only(self):
        rules = (
            Rule("no-raw-data", "output", Predicate("raw_account_data", "present")),
            Rule("ceiling", "manifest", Predicate("notional_value", "gt", 1), "Escalate"),
        )
        filtered = output_rules(Charter(1, rules))
        assert [r.rule_id for r in filtered] == ["no-raw-data"]


class TestDecompose:
    def test_nine_node_shape(self):
        dag = decompose(nine_node_job(), mission_id="MISSION-1")
        assert len(dag) == 9
        assert dag.topological_order() == (
            "TASK-001A", "TASK-001B", "TASK-002A", "TASK-002B", "TASK-002C",
            "TASK-003A", "TASK-003B", "TASK-004", "TASK-005",
        )
        assert dag.sink_id() == "TASK-005"
        assert dag.descendants("TASK-002B") == {"TASK-004", "TASK-005"}
        assert dag.descendants("TASK-005") == frozenset()
        assert len(dag.edges) == 12

    def test_emits_legislated_record(self):
        ledger = AuditLedger(attestation_key=b"k")
        decompose(nine_node_job(), mission_id="MISSION-1", ledger=ledger)
        recs = ledger.records_of_kind(RecordKind.MISSION_LEGISLATED)
        assert len(recs) == 1

    def test_self_dependency_is_a_cycle(self):
        job = nine_node_job()
        bad = job.task_templates[:1] + (template("TASK-LOOP", ["TASK-LOOP"]),)
        with pytest.raises(CycleError):
            decompose(
                JobSpec(
                    "J", "", 1, Decimal(1), "EUR", 10, bad
                ),
                mission_id="M",
            )

    @pytest.mark.parametrize(
        "mutation, exc",
        [
            (dict(token_cap=0), ValidationError),
            (dict(timeout_ticks=0), ValidationError),
            (dict(tool_whitelist=()), ValidationError),
            (dict(message_cap=0), ValidationError),
        ],
    )
    def test_missing_caps_rejected(self, mutation, exc):
        bad_sink = template(
            "TASK-005",
            ["TASK-003A", "TASK-003B", "TASK-004"],
            seals_provenance=True,
            **mutation,
        )
        job = nine_node_job()
        templates = job.task_templates[:-1] + (bad_sink,)
        with pytest.raises(exc):
            decompose(
                JobSpec("J", "", 1, Decimal(1), "EUR", 10, templates),
                mission_id="M",
            )

    def test_unknown_or_forward_dependency(self):
        with pytest.raises(ValidationError):
            decompose(
                JobSpec(
                    "J", "", 1, Decimal(1), "EUR", 10,
                    (template("A", ["GHOST"]),),
                ),
                mission_id="M",
            )
        with pytest.raises(ValidationError):
            decompose(
                JobSpec(
                    "J", "", 1, Decimal(1), "EUR", 10,
                    (template("A", ["B"]), template("B", seals_provenance=True)),
                ),
                mission_id="M",
            )

    def test_sink_discipline(self):
        # two sinks
        with pytest.raises(ValidationError):
            decompose(
                JobSpec(
                    "J", "", 1, Decimal(1), "EUR", 10,
                    (template("A", seals_provenance=True), template("B", seals_provenance=True)),
                ),
                mission_id="M",
            )
        # single sink that does not seal
        with pytest.raises(ValidationError):
            decompose(
                JobSpec("J", "", 1, Decimal(1), "EUR", 10, (template("A"),)),
                mission_id="M",
            )

    def test_empty_job(self):
        with pytest.raises(ValidationError):
            decompose(
                JobSpec("J", "", 1, Decimal(1), "EUR", 10, ()),
                mission_id="M",
            )

    def test_duplicate_template_ids(self):
        with pytest.raises(ValidationError):
            decompose(
                JobSpec(
                    "J", "", 1, Decimal(1), "EUR", 10,
                    (template("A"), template("A", seals_provenance=True)),
                ),
                mission_id="M",
            )


class TestPrescreen:
    def test_under_ceiling_authorizes_with_token(self):
        charter = ceiling_charter()
        job = nine_node_job()
        dag = decompose(job, mission_id="MISSION-1")
        decision = prescreen(manifest_for(job, charter), dag, charter)
        assert isinstance(decision, Authorized)
        assert decision.token.startswith("auth:")

    def test_over_ceiling_escalates_with_rule_id(self):
        charter = ceiling_charter()
        job = nine_node_job()
        dag = decompose(job, mission_id="MISSION-1")
        decision = prescreen(manifest_for(job, charter, notional="51000000"), dag, charter)
        assert decision == Escalated(reason="ceiling")

    def test_empty_charter_authorizes(self):
        charter = Charter(version=1, rules=())
        job = nine_node_job()
        decision = prescreen(manifest_for(job, charter), None, charter)
        assert isinstance(decision, Authorized)

    def test_order_rejection_lists_every_triggered_rule(self):
        charter = ceiling_charter(
            extra=(
                Rule("lookback-36m", "order", Predicate("adverse_media_age_months", "lte", 36)),
                Rule("bic-complete", "order", Predicate("beneficiary_bic", "absent")),
            )
        )
        order = {"order_id": "ORD-X", "adverse_media_age_months": 14}
        decision = prescreen(None, None, charter, order=order)
        assert decision == Rejected(rule_ids=("lookback-36m", "bic-complete"))

    def test_amended_lookback_passes_remediated_order(self):
        base = Rule("lookback-36m", "order", Predicate("adverse_media_age_months", "lte", 36))
        charter = ceiling_charter(extra=(base,))
        order = {
            "order_id": "ORD-X",
            "adverse_media_age_months": 14,
            "remediation_verified": True,
            "beneficiary_bic": "BANKBRRJ",
        }
        assert isinstance(prescreen(None, None, charter, order=order), Rejected)
        amended = apply_amendment(
            charter,
            [
                Rule(
                    "lookback-36m",
                    "order",
                    Predicate(
                        "adverse_media_age_months", "lte", 36,
                        unless=Predicate("remediation_verified", "eq", True),
                    ),
                )
            ],
        )
        assert isinstance(prescreen(None, None, amended, order=order), Authorized)

    def test_escalation_outranks_rejection(self):
        charter = ceiling_charter(
            extra=(Rule("bic-complete", "order", Predicate("beneficiary_bic", "absent")),)
        )
        job = nine_node_job()
        decision = prescreen(
            manifest_for(job, charter, notional="51000000"),
            None,
            charter,
            order={"order_id": "ORD-X"},
        )
        assert isinstance(decision, Escalated)

    def test_token_is_deterministic_and_version_sensitive(self):
        charter = ceiling_charter()
        job = nine_node_job()
        manifest = manifest_for(job, charter)
        t1 = prescreen(manifest, None, charter).token
        t2 = prescreen(manifest, None, charter).token
        assert t1 == t2
        bumped = Charter(version=2, rules=charter.rules)
        assert prescreen(manifest, None, bumped).token != t1

    def test_decision_recorded(self):
        ledger = AuditLedger(attestation_key=b"k")
        charter = ceiling_charter()
        job = nine_node_job()
        prescreen(manifest_for(job, charter), None, charter, ledger=ledger)
        recs = ledger.records_of_kind(RecordKind.PRESCREEN_DECISION)
        assert len(recs) == 1


class TestBidding:
    def test_accuracy_beats_speed_and_reputation(self):
        registry = certified_registry()
        bids = [
            Bid("did:test:fx-14", "TASK-001A", Decimal("0.9995"), 540),
            Bid("did:test:fx-12", "TASK-001A", Decimal("0.9997"), 480),
        ]
        assignment = run_bidding("TASK-001A", bids, registry)
        assert assignment.assignee == "did:test:fx-12"
        assert assignment.standby == "did:test:fx-14"
        assert assignment.consensus_sig == "sig:consensus-01:task-001a:t0"

    def test_completion_then_reputation_break_accuracy_ties(self):
        registry = certified_registry()
        same_acc = Decimal("0.999")
        faster = run_bidding(
            "N",
            [Bid("did:test:fx-14", "N", same_acc, 400), Bid("did:test:fx-12", "N", same_acc, 500)],
            registry,
        )
        assert faster.assignee == "did:test:fx-14"
        higher_rep = run_bidding(
            "N",
            [Bid("did:test:fx-14", "N", same_acc, 400), Bid("did:test:fx-12", "N", same_acc, 400)],
            registry,
        )
        assert higher_rep.assignee == "did:test:fx-12"

    def test_full_tie_falls_to_lower_did(self):
        registry = IdentityRegistry()
        for did in ("did:test:bbb", "did:test:aaa"):
            registry.register_agent(did, "execution", "ops", "500.00", reputation="98.0")
            registry.transition_cert(did, CertEvent.BENCHMARK_PASS)
        won = run_bidding(
            "N",
            [
                Bid("did:test:bbb", "N", Decimal("0.99"), 100),
                Bid("did:test:aaa", "N", Decimal("0.99"), 100),
            ],
            registry,
        )
        assert won.assignee == "did:test:aaa"

    def test_eligibility_filters(self):
        registry = certified_registry()
        # provisional certification and sub-floor stake are both filtered out
        bids = [
            Bid("did:test:provisional", "N", Decimal("1.0"), 1),
            Bid("did:test:low-stake", "N", Decimal("1.0"), 1),
            Bid("did:test:fx-14", "N", Decimal("0.9"), 999),
        ]
        assert run_bidding("N", bids, registry).assignee == "did:test:fx-14"
        with pytest.raises(NoEligibleBid):
            run_bidding("N", bids[:2], registry)

    def test_single_eligible_bid_has_no_standby(self):
        registry = certified_registry()
        assignment = run_bidding(
            "N", [Bid("did:test:fx-12", "N", Decimal("0.99"), 10)], registry
        )
        assert assignment.standby is None

    def test_accepted_bid_recorded(self):
        registry = certified_registry()
        ledger = AuditLedger(attestation_key=b"k")
        run_bidding(
            "N",
            [Bid("did:test:fx-12", "N", Decimal("0.99"), 10)],
            registry,
            ledger=ledger,
            mission_id="MISSION-1",
        )
        rec = ledger.records_of_kind(RecordKind.BID_ACCEPTED)
        assert len(rec) == 1


class TestContractStack:
    def build(self, registry=None, token="auth:abc", ledger=None, charter=None):
        charter = charter or ceiling_charter(
            extra=(Rule("no-raw-data", "output", Predicate("raw_account_data", "present")),)
        )
        job = nine_node_job()
        dag = decompose(job, mission_id="MISSION-1")
        registry = registry or certified_registry()
        assignments = {}
        for node_id in dag.topological_order():
            assignments[node_id] = run_bidding(
                node_id,
                [
                    Bid("did:test:fx-12", node_id, Decimal("0.9997"), 480),
                    Bid("did:test:fx-14", node_id, Decimal("0.9995"), 540),
                ],
                registry,
            )
        manifest = manifest_for(job, charter)
        return generate_contract_stack(
            manifest,
            dag,
            assignments,
            authorization_token=token,
            registry=registry,
            charter=charter,
            ledger=ledger,
        ), dag, assignments

    def test_payment_contract_carries_exact_split(self):
        stack, _, _ = self.build()
        assert stack.payment.pool_total == nxc("4750.00")
        assert stack.payment.protocol_tax == nxc("166.25")
        assert stack.payment.infra_tax == nxc("71.25")
        assert stack.payment.net_escrow == nxc("4512.50")

    def test_addresses_are_deterministic_and_distinct(self):
        s1, _, _ = self.build()
        s2, _, _ = self.build()
        addresses = [
            s1.master.address, s1.task.address, s1.payment.address,
            s1.collaboration.address, s1.guardian.address,
            s1.verification.address, s1.gate.address, s1.manager.address,
        ]
        assert len(set(addresses)) == 8
        assert all(a.startswith("0x") and len(a) == 42 for a in addresses)
        assert s1.master.address == s2.master.address

    def test_sheet_and_gate_wiring(self):
        stack, dag, assignments = self.build()
        assert set(stack.task.slas) == set(dag.nodes)
        assert stack.task.slas["TASK-001B"]["token_cap"] == 1000
        assert stack.gate.node_checks == {"TASK-001B": "fx-rate-lock"}
        assert stack.gate.output_rule_ids == ("no-raw-data",)
        assert set(stack.agent_contracts) == {"did:test:fx-12"}
        assert stack.guardian.z_threshold == 2.0
        assert stack.guardian.window_ticks == 1200

    def test_empty_token_refused(self):
        with pytest.raises(ValidationError):
            self.build(token="")

    def test_incomplete_assignment(self):
        charter = ceiling_charter()
        job = nine_node_job()
        dag = decompose(job, mission_id="MISSION-1")
        with pytest.raises(IncompleteAssignment):
            generate_contract_stack(
                manifest_for(job, charter),
                dag,
                {},
                authorization_token="auth:abc",
                registry=certified_registry(),
            )

    def test_revoked_assignee_refused(self):
        from govsim.identity import CertEvent as E

        registry = certified_registry()
        stack, dag, assignments = self.build(registry=registry)
        registry.transition_cert("did:test:fx-12", E.REVOKE_ORDER)
        charter = ceiling_charter()
        job = nine_node_job()
        with pytest.raises(CertificationViolation):
            generate_contract_stack(
                manifest_for(job, charter),
                dag,
                assignments,
                authorization_token="auth:abc",
                registry=registry,
            )

    def test_deployment_recorded_per_contract(self):
        ledger = AuditLedger(attestation_key=b"k")
        self.build(ledger=ledger)
        recs = ledger.records_of_kind(RecordKind.CONTRACT_DEPLOYED)
        assert len(recs) == 8
