"""Mission legislation: charter rules, job decomposition into a task DAG,
prescreening, sealed-bid assignment, and contract stack generation.

The charter is a versioned list of predicate rules over three subject scopes
(manifest, order, incident). Decomposition validates the template graph before
any contract exists; prescreening gates the mission against the charter and
mints the authorization token that contract generation requires.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Mapping, Sequence

from .economy import split_pool
from .identity import CertState, IdentityRegistry
from .ledger import AuditLedger, RecordKind, canonical
from .money import fmt, nxc


class ValidationError(ValueError):
    pass


class CycleError(ValueError):
    pass


class NoEligibleBid(LookupError):
    pass


class IncompleteAssignment(ValueError):
    pass


class CertificationViolation(ValueError):
    pass


# -- charter ----------------------------------------------------------------

_NUMERIC_OPS = {"lt", "lte", "gt", "gte"}
_ALL_OPS = _NUMERIC_OPS | {"eq", "ne", "present", "absent"}

# op pairs that partition every subject between two rules
_COMPLEMENT = {
    ("gt", "lte"), ("lte", "gt"), ("gte", "lt"), ("lt", "gte"),
    ("eq", "ne"), ("ne", "eq"), ("present", "absent"), ("absent", "present"),
}


def _as_decimal(value) -> Decimal | None:
    if isinstance(value, bool) or value is None:
        return None
    try:
        return Decimal(str(value))
    except InvalidOperation:
        return None


@dataclass(frozen=True)
class Predicate:
    field: str
    op: str
    value: object = None
    unless: "Predicate | None" = None

    def __post_init__(self) -> None:
        if self.op not in _ALL_OPS:
            raise ValidationError(f"unknown predicate op {self.op!r}")

    def triggered(self, subject: Mapping[str, object]) -> bool:
        hit = self._base(subject)
        if hit and self.unless is not None and self.unless.triggered(subject):
            return False
        return hit

    def _base(self, subject: Mapping[str, object]) -> bool:
        present = self.field in subject
        if self.op == "absent":
            return not present
        if self.op == "present":
            return present
        if not present:
            return False
        actual = subject[self.field]
        if self.op in _NUMERIC_OPS:
            left, right = _as_decimal(actual), _as_decimal(self.value)
            if left is None or right is None:
                return False
            return {
                "lt": left < right,
                "lte": left <= right,
                "gt": left > right,
                "gte": left >= right,
            }[self.op]
        left, right = _as_decimal(actual), _as_decimal(self.value)
        if left is not None and right is not None:
            equal = left == right
        else:
            equal = actual == self.value
        return equal if self.op == "eq" else not equal

    def to_payload(self) -> dict:
        payload: dict = {"field": self.field, "op": self.op, "value": self.value}
        if self.unless is not None:
            payload["unless"] = self.unless.to_payload()
        return payload

    @staticmethod
    def from_payload(payload: Mapping) -> "Predicate":
        unless = payload.get("unless")
        return Predicate(
            field=payload["field"],
            op=payload["op"],
            value=payload.get("value"),
            unless=Predicate.from_payload(unless) if unless else None,
        )


@dataclass(frozen=True)
class Rule:
    rule_id: str
    scope: str
    predicate: Predicate
    action: str = "Reject"
    description: str = ""

    def __post_init__(self) -> None:
        if self.scope not in ("manifest", "order", "output", "incident"):
            raise ValidationError(f"unknown rule scope {self.scope!r}")
        if self.action not in ("Reject", "Escalate"):
            raise ValidationError(f"unknown rule action {self.action!r}")

    def to_payload(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "scope": self.scope,
            "predicate": self.predicate.to_payload(),
            "action": self.action,
            "description": self.description,
        }

    @staticmethod
    def from_payload(payload: Mapping) -> "Rule":
        return Rule(
            rule_id=payload["rule_id"],
            scope=payload["scope"],
            predicate=Predicate.from_payload(payload["predicate"]),
            action=payload.get("action", "Reject"),
            description=payload.get("description", ""),
        )


@dataclass(frozen=True)
class Charter:
    version: int
    rules: tuple[Rule, ...]

    def digest(self) -> str:
        body = {
            "version": self.version,
            "rules": [r.to_payload() for r in sorted(self.rules, key=lambda r: r.rule_id)],
        }
        return "sha256:" + hashlib.sha256(canonical(body)).hexdigest()

    def rules_for_scope(self, scope: str) -> tuple[Rule, ...]:
        return tuple(r for r in self.rules if r.scope == scope)

    def rule(self, rule_id: str) -> Rule:
        for r in self.rules:
            if r.rule_id == rule_id:
                return r
        raise KeyError(rule_id)

    def to_payload(self) -> dict:
        return {"version": self.version, "rules": [r.to_payload() for r in self.rules]}

    @staticmethod
    def from_payload(payload: Mapping) -> "Charter":
        return Charter(
            version=int(payload["version"]),
            rules=tuple(Rule.from_payload(r) for r in payload["rules"]),
        )


def find_conflicts(charter: Charter, new_rules: Sequence[Rule]) -> list[tuple[str, str]]:
    """Pairs (existing_id, new_id) whose predicates partition every subject
    between two blocking rules, leaving no passable input on that field."""
    conflicts = []
    for new in new_rules:
        if new.predicate.unless is not None:
            continue
        for old in charter.rules:
            if old.rule_id == new.rule_id or old.scope != new.scope:
                continue
            if old.predicate.unless is not None:
                continue
            if old.predicate.field != new.predicate.field:
                continue
            if (old.predicate.op, new.predicate.op) not in _COMPLEMENT:
                continue
            if old.predicate.op in ("present", "absent") or (
                old.predicate.value == new.predicate.value
            ):
                conflicts.append((old.rule_id, new.rule_id))
    return conflicts


def apply_amendment(charter: Charter, new_rules: Sequence[Rule]) -> Charter:
    """New charter version with same-id rules replaced and others appended.
    Conflict checking is the adjudicator's job, not done here."""
    merged = {r.rule_id: r for r in charter.rules}
    for r in new_rules:
        merged[r.rule_id] = r
    return Charter(version=charter.version + 1, rules=tuple(merged.values()))


def output_rules(charter: Charter) -> tuple[Rule, ...]:
    """Output-scope rules only; the completion gate must not re-litigate
    manifest or order screening."""
    return charter.rules_for_scope("output")


# -- job structure ----------------------------------------------------------


@dataclass(frozen=True)
class SlashingCondition:
    metric: str
    comparator: str
    threshold: object = None
    unit: str = ""

    def __post_init__(self) -> None:
        allowed = {"gt", "gte", "lt", "lte", "eq", "ne", "abs_gt", "missing_field"}
        if self.comparator not in allowed:
            raise ValidationError(f"unknown comparator {self.comparator!r}")

    def violated(self, metrics: Mapping[str, object]) -> bool:
        if self.comparator == "missing_field":
            return self.metric not in metrics or metrics[self.metric] in (None, "")
        if self.metric not in metrics:
            return False
        actual = _as_decimal(metrics[self.metric])
        limit = _as_decimal(self.threshold)
        if actual is None or limit is None:
            if self.comparator == "eq":
                return metrics[self.metric] == self.threshold
            if self.comparator == "ne":
                return metrics[self.metric] != self.threshold
            return False
        return {
            "gt": actual > limit,
            "gte": actual >= limit,
            "lt": actual < limit,
            "lte": actual <= limit,
            "eq": actual == limit,
            "ne": actual != limit,
            "abs_gt": abs(actual) > limit,
        }[self.comparator]

    def to_payload(self) -> dict:
        return {
            "metric": self.metric,
            "comparator": self.comparator,
            "threshold": self.threshold,
            "unit": self.unit,
        }

    @staticmethod
    def from_payload(payload: Mapping) -> "SlashingCondition":
        return SlashingCondition(
            metric=payload["metric"],
            comparator=payload["comparator"],
            threshold=payload.get("threshold"),
            unit=payload.get("unit", ""),
        )


@dataclass(frozen=True)
class TaskTemplate:
    template_id: str
    title: str
    depends_on: tuple[str, ...]
    timeout_ticks: int
    token_cap: int
    slashing_condition: SlashingCondition
    tool_whitelist: tuple[str, ...]
    required_role: str
    tool_call_cap: int = 40
    message_cap: int = 120
    gate_check_id: str | None = None
    seals_provenance: bool = False

    @staticmethod
    def from_payload(payload: Mapping) -> "TaskTemplate":
        return TaskTemplate(
            template_id=payload["template_id"],
            title=payload.get("title", ""),
            depends_on=tuple(payload.get("depends_on", ())),
            timeout_ticks=int(payload["timeout_ticks"]),
            token_cap=int(payload["token_cap"]),
            slashing_condition=SlashingCondition.from_payload(payload["slashing_condition"]),
            tool_whitelist=tuple(payload["tool_whitelist"]),
            required_role=payload["required_role"],
            tool_call_cap=int(payload.get("tool_call_cap", 40)),
            message_cap=int(payload.get("message_cap", 120)),
            gate_check_id=payload.get("gate_check_id"),
            seals_provenance=bool(payload.get("seals_provenance", False)),
        )


@dataclass(frozen=True)
class JobSpec:
    job_id: str
    description: str
    order_count: int
    notional_value: Decimal
    currency: str
    deadline_tick: int
    task_templates: tuple[TaskTemplate, ...]

    @staticmethod
    def from_payload(payload: Mapping) -> "JobSpec":
        return JobSpec(
            job_id=payload["job_id"],
            description=payload.get("description", ""),
            order_count=int(payload["order_count"]),
            notional_value=Decimal(str(payload["notional_value"])),
            currency=payload["currency"],
            deadline_tick=int(payload["deadline_tick"]),
            task_templates=tuple(
                TaskTemplate.from_payload(t) for t in payload["task_templates"]
            ),
        )


@dataclass(frozen=True)
class TaskDAG:
    mission_id: str
    nodes: Mapping[str, TaskTemplate]
    edges: tuple[tuple[str, str], ...]

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: str) -> TaskTemplate:
        return self.nodes[node_id]

    def dependents(self, node_id: str) -> tuple[str, ...]:
        return tuple(sorted(dst for src, dst in self.edges if src == node_id))

    def dependencies(self, node_id: str) -> tuple[str, ...]:
        return tuple(sorted(src for src, dst in self.edges if dst == node_id))

    def descendants(self, node_id: str) -> frozenset[str]:
        seen: set[str] = set()
        frontier = [node_id]
        while frontier:
            current = frontier.pop()
            for nxt in self.dependents(current):
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        return frozenset(seen)

    def topological_order(self) -> tuple[str, ...]:
        indegree = {n: 0 for n in self.nodes}
        for _, dst in self.edges:
            indegree[dst] += 1
        ready = sorted(n for n, d in indegree.items() if d == 0)
        order: list[str] = []
        while ready:
            current = ready.pop(0)
            order.append(current)
            changed = False
            for nxt in self.dependents(current):
                indegree[nxt] -= 1
                if indegree[nxt] == 0:
                    ready.append(nxt)
                    changed = True
            if changed:
                ready.sort()
        if len(order) != len(self.nodes):
            raise CycleError("dependency cycle survived decomposition")
        return tuple(order)

    def sink_id(self) -> str:
        sources = {src for src, _ in self.edges}
        sinks = [n for n in self.nodes if n not in sources]
        return sinks[0]


def decompose(job: JobSpec, *, mission_id: str, ledger: AuditLedger | None = None) -> TaskDAG:
    if not job.task_templates:
        raise ValidationError("job has no task templates")
    seen: dict[str, TaskTemplate] = {}
    edges: list[tuple[str, str]] = []
    for template in job.task_templates:
        tid = template.template_id
        if tid in seen:
            raise ValidationError(f"duplicate template id {tid}")
        for dep in template.depends_on:
            if dep == tid:
                raise CycleError(f"template {tid} depends on itself")
            if dep not in seen:
                raise ValidationError(
                    f"template {tid} depends on {dep}, which is not an earlier template"
                )
            edges.append((dep, tid))
        if template.timeout_ticks <= 0:
            raise ValidationError(f"template {tid} has no timeout budget")
        if template.token_cap <= 0:
            raise ValidationError(f"template {tid} has no token cap")
        if template.tool_call_cap <= 0 or template.message_cap <= 0:
            raise ValidationError(f"template {tid} has zero interaction caps")
        if not template.tool_whitelist:
            raise ValidationError(f"template {tid} has an empty tool whitelist")
        seen[tid] = template
    sources = {src for src, _ in edges}
    sinks = [tid for tid in seen if tid not in sources]
    if len(sinks) != 1:
        raise ValidationError(f"expected exactly one sink node, found {sorted(sinks)}")
    if not seen[sinks[0]].seals_provenance:
        raise ValidationError(f"sink node {sinks[0]} does not seal provenance")
    dag = TaskDAG(mission_id=mission_id, nodes=dict(seen), edges=tuple(edges))
    dag.topological_order()
    if ledger is not None:
        ledger.append(
            RecordKind.MISSION_LEGISLATED,
            "legislation",
            {
                "mission_id": mission_id,
                "job_id": job.job_id,
                "node_ids": sorted(seen),
                "edge_count": len(edges),
            },
        )
    return dag


@dataclass(frozen=True)
class MissionManifest:
    mission_id: str
    job_id: str
    value_ceiling: Decimal
    global_timeout_ticks: int
    charter_digest: str
    reward_pool_total: Decimal
    tax_rates: Mapping[str, str]
    authorized_principals: tuple[str, ...]
    notional_value: Decimal
    currency: str
    order_count: int

    @staticmethod
    def for_job(
        job: JobSpec,
        charter: Charter,
        *,
        mission_id: str,
        value_ceiling,
        global_timeout_ticks: int,
        reward_pool_total,
        tax_rates: Mapping[str, str],
        authorized_principals: Sequence[str],
    ) -> "MissionManifest":
        return MissionManifest(
            mission_id=mission_id,
            job_id=job.job_id,
            value_ceiling=Decimal(str(value_ceiling)),
            global_timeout_ticks=int(global_timeout_ticks),
            charter_digest=charter.digest(),
            reward_pool_total=nxc(reward_pool_total),
            tax_rates=dict(tax_rates),
            authorized_principals=tuple(authorized_principals),
            notional_value=job.notional_value,
            currency=job.currency,
            order_count=job.order_count,
        )

    def to_subject(self) -> dict:
        return {
            "mission_id": self.mission_id,
            "job_id": self.job_id,
            "notional_value": str(self.notional_value),
            "currency": self.currency,
            "order_count": self.order_count,
            "value_ceiling": str(self.value_ceiling),
            "reward_pool_total": fmt(self.reward_pool_total),
        }


# -- prescreening -----------------------------------------------------------


@dataclass(frozen=True)
class Authorized:
    token: str


@dataclass(frozen=True)
class Rejected:
    rule_ids: tuple[str, ...]


@dataclass(frozen=True)
class Escalated:
    reason: str


def _mint_token(charter: Charter, subject: Mapping) -> str:
    body = {"charter": charter.digest(), "subject": dict(subject)}
    return "auth:" + hashlib.sha256(canonical(body)).hexdigest()[:32]


def prescreen(
    manifest: MissionManifest | None,
    dag: TaskDAG | None,
    charter: Charter,
    *,
    order: Mapping | None = None,
    ledger: AuditLedger | None = None,
) -> Authorized | Rejected | Escalated:
    """Evaluate the charter against the mission manifest and, when given, a
    single order subject. Escalation outranks rejection; an empty charter or
    one with no triggered rule authorizes and mints the token contract
    generation needs."""
    escalations: list[str] = []
    rejections: list[str] = []
    subjects: list[Mapping] = []
    if manifest is not None:
        subject = manifest.to_subject()
        subjects.append(subject)
        for rule in charter.rules_for_scope("manifest"):
            if rule.predicate.triggered(subject):
                (escalations if rule.action == "Escalate" else rejections).append(rule.rule_id)
    if order is not None:
        subjects.append(order)
        for rule in charter.rules_for_scope("order"):
            if rule.predicate.triggered(order):
                (escalations if rule.action == "Escalate" else rejections).append(rule.rule_id)
    if escalations:
        decision: Authorized | Rejected | Escalated = Escalated(reason=escalations[0])
    elif rejections:
        decision = Rejected(rule_ids=tuple(rejections))
    else:
        merged: dict = {}
        for subject in subjects:
            merged.update(subject)
        decision = Authorized(token=_mint_token(charter, merged))
    if ledger is not None:
        payload: dict = {"charter_version": charter.version}
        if manifest is not None:
            payload["mission_id"] = manifest.mission_id
        if order is not None and "order_id" in order:
            payload["order_id"] = order["order_id"]
        if isinstance(decision, Authorized):
            payload["decision"] = "Authorized"
            payload["token"] = decision.token
        elif isinstance(decision, Rejected):
            payload["decision"] = "Rejected"
            payload["rule_ids"] = list(decision.rule_ids)
        else:
            payload["decision"] = "Escalated"
            payload["reason"] = decision.reason
        ledger.append(RecordKind.PRESCREEN_DECISION, "charter-gate", payload)
    return decision


# -- bidding ----------------------------------------------------------------


@dataclass(frozen=True)
class Bid:
    did: str
    node_id: str
    accuracy_sla: Decimal
    completion_ticks: int

    @staticmethod
    def from_payload(payload: Mapping) -> "Bid":
        return Bid(
            did=payload["did"],
            node_id=payload["node_id"],
            accuracy_sla=Decimal(str(payload["accuracy_sla"])),
            completion_ticks=int(payload["completion_ticks"]),
        )


@dataclass(frozen=True)
class Assignment:
    node_id: str
    assignee: str
    standby: str | None
    accuracy_sla: Decimal
    completion_ticks: int
    consensus_sig: str


def run_bidding(
    node_id: str,
    bids: Sequence[Bid],
    registry: IdentityRegistry,
    *,
    stake_floor="100.00",
    mediator: str = "consensus-01",
    sig_stamp: str = "t0",
    mission_id: str | None = None,
    ledger: AuditLedger | None = None,
) -> Assignment:
    """Deterministic sealed-bid auction. Eligible bidders are fully certified
    and staked at or above the floor; ranking is lexicographic on higher
    accuracy, then faster completion, then higher reputation, then lower did."""
    floor = nxc(stake_floor)
    eligible = []
    for bid in bids:
        if bid.node_id != node_id or bid.did not in registry:
            continue
        profile = registry.get(bid.did)
        if profile.cert_state is not CertState.FULLY_CERTIFIED:
            continue
        if profile.stake < floor:
            continue
        eligible.append((bid, profile))
    if not eligible:
        raise NoEligibleBid(f"no eligible bid for {node_id}")
    eligible.sort(
        key=lambda pair: (
            -pair[0].accuracy_sla,
            pair[0].completion_ticks,
            -pair[1].reputation,
            pair[0].did,
        )
    )
    winner = eligible[0][0]
    standby = eligible[1][0].did if len(eligible) > 1 else None
    assignment = Assignment(
        node_id=node_id,
        assignee=winner.did,
        standby=standby,
        accuracy_sla=winner.accuracy_sla,
        completion_ticks=winner.completion_ticks,
        consensus_sig=f"sig:{mediator}:{node_id.lower()}:{sig_stamp}",
    )
    if ledger is not None:
        payload: dict = {
            "node_id": node_id,
            "assignee": winner.did,
            "standby": standby,
            "accuracy_sla": str(winner.accuracy_sla),
            "completion_ticks": winner.completion_ticks,
            "consensus_sig": assignment.consensus_sig,
        }
        if mission_id:
            payload["mission_id"] = mission_id
        ledger.append(RecordKind.BID_ACCEPTED, mediator, payload)
    return assignment


# -- contract stack ---------------------------------------------------------


def _address(mission_id: str, name: str) -> str:
    return "0x" + hashlib.sha256(
        canonical({"mission": mission_id, "contract": name})
    ).hexdigest()[:40]


@dataclass(frozen=True)
class MasterContract:
    mission_id: str
    address: str
    authorized_principals: tuple[str, ...]
    value_ceiling: Decimal
    global_timeout_ticks: int
    charter_digest: str


@dataclass(frozen=True)
class TaskContractSheet:
    mission_id: str
    address: str
    slas: Mapping[str, Mapping[str, object]]


@dataclass(frozen=True)
class PaymentContract:
    mission_id: str
    address: str
    pool_total: Decimal
    protocol_tax: Decimal
    infra_tax: Decimal
    net_escrow: Decimal


@dataclass(frozen=True)
class CollaborationContract:
    mission_id: str
    address: str
    participants: tuple[str, ...]


@dataclass(frozen=True)
class GuardianContract:
    mission_id: str
    address: str
    z_threshold: float = 2.0
    tool_call_cap: int = 40
    message_cap: int = 120
    window_ticks: int = 1200
    freeze_count_threshold: int = 3


@dataclass(frozen=True)
class VerificationContract:
    mission_id: str
    address: str
    cosigner: str


@dataclass(frozen=True)
class GateContract:
    mission_id: str
    address: str
    node_checks: Mapping[str, str]
    output_rule_ids: tuple[str, ...]


@dataclass(frozen=True)
class ManagerContract:
    mission_id: str
    address: str
    authorized_principals: tuple[str, ...]
    standby_promotion: bool = True


@dataclass(frozen=True)
class AgentContract:
    did: str
    node_id: str
    address: str
    tool_whitelist: tuple[str, ...]
    token_cap: int


@dataclass(frozen=True)
class ContractStack:
    mission_id: str
    authorization_token: str
    master: MasterContract
    task: TaskContractSheet
    payment: PaymentContract
    collaboration: CollaborationContract
    guardian: GuardianContract
    verification: VerificationContract
    gate: GateContract
    manager: ManagerContract
    agent_contracts: Mapping[str, AgentContract]


def generate_contract_stack(
    manifest: MissionManifest,
    dag: TaskDAG,
    assignments: Mapping[str, Assignment],
    *,
    authorization_token: str,
    registry: IdentityRegistry,
    charter: Charter | None = None,
    verification_cosigner: str = "verifier-quorum-01",
    guardian_window_ticks: int = 1200,
    freeze_count_threshold: int = 3,
    ledger: AuditLedger | None = None,
) -> ContractStack:
    if not authorization_token:
        raise ValidationError("contract generation requires a prescreen authorization token")
    missing = sorted(n for n in dag.nodes if n not in assignments)
    if missing:
        raise IncompleteAssignment(f"unassigned nodes: {missing}")
    for node_id, assignment in assignments.items():
        profile = registry.get(assignment.assignee)
        if profile.cert_state is CertState.REVOKED:
            raise CertificationViolation(
                f"{assignment.assignee} is revoked and cannot hold {node_id}"
            )
    mission_id = manifest.mission_id
    protocol_rate = manifest.tax_rates.get("protocol", "0")
    infra_rate = manifest.tax_rates.get("infrastructure", "0")
    protocol_tax, infra_tax, net = split_pool(
        manifest.reward_pool_total, protocol_rate, infra_rate
    )
    slas = {
        node_id: {
            "assignee": a.assignee,
            "accuracy": str(a.accuracy_sla),
            "completion_ticks": a.completion_ticks,
            "token_cap": dag.node(node_id).token_cap,
        }
        for node_id, a in sorted(assignments.items())
    }
    participants = tuple(sorted({a.assignee for a in assignments.values()}))
    node_checks = {
        node_id: node.gate_check_id
        for node_id, node in sorted(dag.nodes.items())
        if node.gate_check_id
    }
    output_rule_ids = tuple(
        r.rule_id for r in output_rules(charter)
    ) if charter is not None else ()
    agent_contracts = {
        a.assignee: AgentContract(
            did=a.assignee,
            node_id=node_id,
            address=_address(mission_id, f"agent:{a.assignee}"),
            tool_whitelist=dag.node(node_id).tool_whitelist,
            token_cap=dag.node(node_id).token_cap,
        )
        for node_id, a in sorted(assignments.items())
    }
    stack = ContractStack(
        mission_id=mission_id,
        authorization_token=authorization_token,
        master=MasterContract(
            mission_id=mission_id,
            address=_address(mission_id, "master"),
            authorized_principals=manifest.authorized_principals,
            value_ceiling=manifest.value_ceiling,
            global_timeout_ticks=manifest.global_timeout_ticks,
            charter_digest=manifest.charter_digest,
        ),
        task=TaskContractSheet(
            mission_id=mission_id, address=_address(mission_id, "task"), slas=slas
        ),
        payment=PaymentContract(
            mission_id=mission_id,
            address=_address(mission_id, "payment"),
            pool_total=manifest.reward_pool_total,
            protocol_tax=protocol_tax,
            infra_tax=infra_tax,
            net_escrow=net,
        ),
        collaboration=CollaborationContract(
            mission_id=mission_id,
            address=_address(mission_id, "collaboration"),
            participants=participants,
        ),
        guardian=GuardianContract(
            mission_id=mission_id,
            address=_address(mission_id, "guardian"),
            window_ticks=guardian_window_ticks,
            freeze_count_threshold=freeze_count_threshold,
        ),
        verification=VerificationContract(
            mission_id=mission_id,
            address=_address(mission_id, "verification"),
            cosigner=verification_cosigner,
        ),
        gate=GateContract(
            mission_id=mission_id,
            address=_address(mission_id, "gate"),
            node_checks=node_checks,
            output_rule_ids=output_rule_ids,
        ),
        manager=ManagerContract(
            mission_id=mission_id,
            address=_address(mission_id, "manager"),
            authorized_principals=manifest.authorized_principals,
        ),
        agent_contracts=agent_contracts,
    )
    if ledger is not None:
        for name, contract in (
            ("master", stack.master),
            ("task", stack.task),
            ("payment", stack.payment),
            ("collaboration", stack.collaboration),
            ("guardian", stack.guardian),
            ("verification", stack.verification),
            ("gate", stack.gate),
            ("manager", stack.manager),
        ):
            payload: dict = {
                "mission_id": mission_id,
                "contract": name,
                "address": contract.address,
            }
            if name == "payment":
                payload["net_escrow"] = fmt(net)
            if name == "collaboration":
                payload["participants"] = list(participants)
            ledger.append(RecordKind.CONTRACT_DEPLOYED, "legislation", payload)
    return stack
