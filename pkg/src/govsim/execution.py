"""Fulfillment engine primitives: node lifecycle states, budget meters,
progress gates, guardian anomaly checks, graduated escalation, checkpoint
rollback, quarantine, and the last-mile output filter.

Everything here is a pure state-machine operation over explicit runtime
objects; the event loop that sequences them lives in the harness. Failure is
a value wherever the workflow continues (gate failure, freeze); it is an
exception only where the caller broke a precondition.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from enum import Enum, IntEnum
from typing import Callable, Iterable, Mapping, Sequence

from .ledger import AuditLedger, RecordKind, canonical
from .legislation import Charter, TaskDAG, TaskTemplate


class NodeState(str, Enum):
    PENDING = "Pending"
    READY = "Ready"
    RUNNING = "Running"
    VERIFIED = "Verified"
    FROZEN = "Frozen"
    QUARANTINED = "Quarantined"
    COMPLETED = "Completed"
    FAILED = "Failed"


LEGAL_TRANSITIONS: dict[NodeState, frozenset[NodeState]] = {
    NodeState.PENDING: frozenset({NodeState.READY}),
    NodeState.READY: frozenset({NodeState.RUNNING}),
    NodeState.RUNNING: frozenset(
        {NodeState.VERIFIED, NodeState.FROZEN, NodeState.FAILED, NodeState.QUARANTINED}
    ),
    NodeState.VERIFIED: frozenset({NodeState.COMPLETED}),
    # Ready is the no-checkpoint restart path out of a freeze
    NodeState.FROZEN: frozenset({NodeState.RUNNING, NodeState.READY, NodeState.FAILED}),
    NodeState.QUARANTINED: frozenset({NodeState.RUNNING, NodeState.FAILED}),
    NodeState.COMPLETED: frozenset(),
    NodeState.FAILED: frozenset(),
}


class StateError(RuntimeError):
    pass


class IllegalNodeTransition(StateError):
    pass


class BudgetExceeded(RuntimeError):
    pass


class CapBreached(RuntimeError):
    pass


class NotFound(KeyError):
    pass


@dataclass
class BudgetMeter:
    token_cap: int
    tool_call_cap: int = 40
    message_cap: int = 120
    tokens_spent: int = 0
    tool_calls: int = 0
    messages: int = 0

    def charge(self, *, tokens: int = 0, tool_calls: int = 0, messages: int = 0) -> None:
        if min(tokens, tool_calls, messages) < 0:
            raise ValueError("meter charges must be non-negative")
        self.tokens_spent += tokens
        self.tool_calls += tool_calls
        self.messages += messages
        if self.tokens_spent > self.token_cap:
            raise BudgetExceeded(
                f"{self.tokens_spent} tokens against a cap of {self.token_cap}"
            )
        if self.tool_calls > self.tool_call_cap:
            raise CapBreached(f"tool call {self.tool_calls} exceeds cap {self.tool_call_cap}")
        if self.messages > self.message_cap:
            raise CapBreached(f"message {self.messages} exceeds cap {self.message_cap}")

    def restrict_tool_budget(self) -> int:
        """Restrictive-tier sanction: halve the remaining tool-call headroom."""
        remaining = self.tool_call_cap - self.tool_calls
        self.tool_call_cap -= remaining // 2
        return self.tool_call_cap

    def reset(self) -> None:
        self.tokens_spent = 0
        self.tool_calls = 0
        self.messages = 0

    def snapshot(self) -> dict[str, int]:
        return {
            "tokens_spent": self.tokens_spent,
            "tool_calls": self.tool_calls,
            "messages": self.messages,
        }


@dataclass(frozen=True)
class Telemetry:
    node_id: str
    did: str
    tokens_spent: int
    tool_calls: int
    messages: int
    metrics: Mapping[str, float]
    output_digest: str


@dataclass(frozen=True)
class ToolCallEvidence:
    call_index: int
    endpoint_id: str
    category: str
    declared_digest: str
    observed_digest: str
    contract_scope_ok: bool = True


@dataclass(frozen=True)
class BehaviorOutcome:
    metrics: Mapping[str, float]
    tokens_spent: int
    tool_calls: int
    messages: int
    output: Mapping[str, object]
    evidence: tuple[ToolCallEvidence, ...] = ()


@dataclass(frozen=True)
class ProofOfProgress:
    node_id: str
    output_digest: str
    gate_checks: tuple[tuple[str, bool], ...]
    cosigner: str
    tick: int


@dataclass(frozen=True)
class GateFailure:
    check_ids: tuple[str, ...]


@dataclass(frozen=True)
class FreezeEvent:
    scope: str  # "Targeted" | "MissionWide"
    node_id: str | None
    trigger: str
    tick: int
    z_value: float | None = None


@dataclass(frozen=True)
class Checkpoint:
    node_id: str
    snapshot_digest: str
    tick: int


class EscalationTier(IntEnum):
    ADVISORY = 1
    RESTRICTIVE = 2
    CIRCUIT_BREAKER = 3

    @property
    def label(self) -> str:
        return {1: "Advisory", 2: "Restrictive", 3: "CircuitBreaker"}[int(self)]


@dataclass(frozen=True)
class Ok:
    z_value: float


@dataclass(frozen=True)
class Baseline:
    metric: str
    mean: float
    std: float


@dataclass(frozen=True)
class Pass:
    pass


@dataclass(frozen=True)
class Blocked:
    rule_ids: tuple[str, ...]


@dataclass
class NodeRun:
    """Mutable per-node runtime state owned by the event loop."""

    node_id: str
    template: TaskTemplate
    assignee: str
    state: NodeState = NodeState.PENDING
    meter: BudgetMeter = None  # type: ignore[assignment]
    telemetry: Telemetry | None = None
    checkpoint: Checkpoint | None = None
    items: set[str] = field(default_factory=set)
    quarantined_items: set[str] = field(default_factory=set)
    attempts: int = 0
    started_tick: int | None = None
    verified_tick: int | None = None
    freeze_events: list[FreezeEvent] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.meter is None:
            self.meter = BudgetMeter(
                token_cap=self.template.token_cap,
                tool_call_cap=self.template.tool_call_cap,
                message_cap=self.template.message_cap,
            )


def transition(run: NodeRun, new_state: NodeState) -> None:
    if new_state not in LEGAL_TRANSITIONS[run.state]:
        raise IllegalNodeTransition(f"{run.node_id}: {run.state.value} -> {new_state.value}")
    run.state = new_state


def make_runs(dag: TaskDAG, assignments: Mapping[str, object]) -> dict[str, NodeRun]:
    return {
        node_id: NodeRun(
            node_id=node_id,
            template=dag.node(node_id),
            assignee=assignments[node_id].assignee,
        )
        for node_id in dag.topological_order()
    }


def states_snapshot(runs: Mapping[str, NodeRun]) -> dict[str, str]:
    return {node_id: run.state.value for node_id, run in sorted(runs.items())}


def schedule_ready(dag: TaskDAG, states: Mapping[str, NodeState]) -> list[str]:
    """Pending nodes whose dependencies have all cleared verification, in
    topological order (ties already sorted by node id)."""
    satisfied = {NodeState.VERIFIED, NodeState.COMPLETED}
    return [
        node_id
        for node_id in dag.topological_order()
        if states[node_id] is NodeState.PENDING
        and all(states[dep] in satisfied for dep in dag.dependencies(node_id))
    ]


def _freeze(
    run: NodeRun, trigger: str, tick: int, *,
    z_value: float | None = None,
    ledger: AuditLedger | None = None,
) -> FreezeEvent:
    transition(run, NodeState.FROZEN)
    event = FreezeEvent(
        scope="Targeted", node_id=run.node_id, trigger=trigger, tick=tick, z_value=z_value
    )
    run.freeze_events.append(event)
    if ledger is not None:
        payload: dict[str, object] = {
            "scope": "Targeted",
            "node_id": run.node_id,
            "trigger": trigger,
            "tick": tick,
        }
        if z_value is not None:
            payload["z_value"] = round(z_value, 6)
        ledger.append(RecordKind.FREEZE_EVENT, "guardian", payload, tick=tick)
    return event


def freeze_mission(
    runs: Mapping[str, NodeRun], trigger: str, tick: int, *,
    ledger: AuditLedger | None = None,
) -> FreezeEvent:
    """Circuit-breaker action: freeze every running node; idle nodes are held
    by the scheduler flag the caller flips alongside this."""
    for run in sorted(runs.values(), key=lambda r: r.node_id):
        if run.state is NodeState.RUNNING:
            transition(run, NodeState.FROZEN)
            run.freeze_events.append(
                FreezeEvent(scope="MissionWide", node_id=run.node_id, trigger=trigger, tick=tick)
            )
    event = FreezeEvent(scope="MissionWide", node_id=None, trigger=trigger, tick=tick)
    if ledger is not None:
        ledger.append(
            RecordKind.FREEZE_EVENT,
            "guardian",
            {"scope": "MissionWide", "trigger": trigger, "tick": tick},
            tick=tick,
        )
    return event


def execute_node(
    run: NodeRun,
    behavior: Callable[[NodeRun], BehaviorOutcome],
    meter: BudgetMeter,
    *,
    tick: int = 0,
    ledger: AuditLedger | None = None,
    mission_id: str | None = None,
) -> Telemetry:
    """Run the node's scripted behavior under the meter. A budget or cap
    breach freezes the node and re-raises; the guardian adjudicates after."""
    if run.state is not NodeState.RUNNING:
        raise StateError(f"{run.node_id} must be Running, is {run.state.value}")
    outcome = behavior(run)
    for evidence in outcome.evidence:
        if ledger is not None:
            payload: dict[str, object] = {
                "node_id": run.node_id,
                "did": run.assignee,
                "call_index": evidence.call_index,
                "endpoint_id": evidence.endpoint_id,
                "category": evidence.category,
                "declared_digest": evidence.declared_digest,
                "observed_digest": evidence.observed_digest,
                "contract_scope_ok": evidence.contract_scope_ok,
            }
            if mission_id:
                payload["mission_id"] = mission_id
            ledger.append(RecordKind.TOOL_CALL, run.assignee, payload, tick=tick)
    try:
        meter.charge(
            tokens=outcome.tokens_spent,
            tool_calls=outcome.tool_calls,
            messages=outcome.messages,
        )
    except BudgetExceeded:
        _freeze(run, "budget-exceeded", tick, ledger=ledger)
        raise
    except CapBreached:
        _freeze(run, "cap-breached", tick, ledger=ledger)
        raise
    telemetry = Telemetry(
        node_id=run.node_id,
        did=run.assignee,
        tokens_spent=meter.tokens_spent,
        tool_calls=meter.tool_calls,
        messages=meter.messages,
        metrics=dict(outcome.metrics),
        output_digest="sha256:"
        + hashlib.sha256(canonical(dict(outcome.output))).hexdigest(),
    )
    run.telemetry = telemetry
    return telemetry


def gate_verify(
    run: NodeRun,
    telemetry: Telemetry,
    *,
    cosigner: str,
    tick: int = 0,
    ledger: AuditLedger | None = None,
    mission_id: str | None = None,
) -> ProofOfProgress | GateFailure:
    if run.state is not NodeState.RUNNING:
        raise StateError(f"{run.node_id} must be Running to gate, is {run.state.value}")
    check_id = run.template.gate_check_id or run.node_id.lower()
    checks: list[tuple[str, bool]] = [
        (check_id, not run.template.slashing_condition.violated(telemetry.metrics)),
        ("output-digest", bool(telemetry.output_digest)),
    ]
    failed = tuple(cid for cid, ok in checks if not ok)
    if failed:
        _freeze(run, "slashing-condition", tick, ledger=ledger)
        return GateFailure(check_ids=failed)
    transition(run, NodeState.VERIFIED)
    run.verified_tick = tick
    run.checkpoint = Checkpoint(
        node_id=run.node_id,
        snapshot_digest="sha256:"
        + hashlib.sha256(
            canonical(
                {
                    "node_id": run.node_id,
                    "output_digest": telemetry.output_digest,
                    "meter": run.meter.snapshot(),
                }
            )
        ).hexdigest(),
        tick=tick,
    )
    proof = ProofOfProgress(
        node_id=run.node_id,
        output_digest=telemetry.output_digest,
        gate_checks=tuple(checks),
        cosigner=cosigner,
        tick=tick,
    )
    if ledger is not None:
        payload: dict[str, object] = {
            "node_id": run.node_id,
            "did": run.assignee,
            "output_digest": telemetry.output_digest,
            "gate_checks": [[cid, ok] for cid, ok in checks],
            "cosigner": cosigner,
            "kind": "gate",
        }
        if mission_id:
            payload["mission_id"] = mission_id
        ledger.append(RecordKind.PROOF_OF_PROGRESS, cosigner, payload, tick=tick)
    return proof


def guardian_check(
    telemetry: Telemetry,
    baseline: Baseline,
    *,
    run: NodeRun | None = None,
    z_threshold: float = 2.0,
    tick: int = 0,
    ledger: AuditLedger | None = None,
) -> Ok | FreezeEvent:
    """Strict z-score test on one telemetry metric. At exactly the threshold
    the run is healthy; only beyond it does the guardian freeze."""
    if baseline.std <= 0:
        raise ValueError(f"baseline std for {baseline.metric} must be positive")
    observed = telemetry.metrics.get(baseline.metric)
    if observed is None:
        return Ok(z_value=0.0)
    # Decimal via str keeps the boundary exact for decimal-written inputs;
    # float subtraction would push mean + 2*std marginally past the threshold
    z_dec = (Decimal(str(observed)) - Decimal(str(baseline.mean))) / Decimal(
        str(baseline.std)
    )
    z = float(z_dec)
    if abs(z_dec) <= Decimal(str(z_threshold)):
        return Ok(z_value=z)
    if run is not None:
        return _freeze(run, "z-score", tick, z_value=z, ledger=ledger)
    return FreezeEvent(
        scope="Targeted", node_id=telemetry.node_id, trigger="z-score", tick=tick, z_value=z
    )


def escalate(
    freeze_history: Sequence[FreezeEvent], window_ticks: int
) -> EscalationTier | None:
    """Graduated response sized by freeze density in the trailing window
    ending at the latest freeze."""
    if not freeze_history:
        return None
    end = freeze_history[-1].tick
    count = sum(1 for event in freeze_history if end - window_ticks < event.tick <= end)
    if count > 3:
        return EscalationTier.CIRCUIT_BREAKER
    if count >= 2:
        return EscalationTier.RESTRICTIVE
    return EscalationTier.ADVISORY


def rollback(
    run: NodeRun,
    *,
    tick: int = 0,
    ledger: AuditLedger | None = None,
    mission_id: str | None = None,
) -> NodeState:
    """Restore a frozen node to its last verified entry point. The meter
    resets with the attempt: the completed rerun's spend is the spend."""
    if run.state is not NodeState.FROZEN:
        raise StateError(f"{run.node_id} must be Frozen to roll back, is {run.state.value}")
    checkpoint = run.checkpoint
    if checkpoint is not None and checkpoint.tick > tick:
        raise StateError("checkpoint is newer than the rollback tick")
    run.meter.reset()
    run.telemetry = None
    run.attempts += 1
    if checkpoint is None:
        transition(run, NodeState.READY)
    else:
        transition(run, NodeState.RUNNING)
        run.started_tick = tick
    if ledger is not None:
        payload: dict[str, object] = {
            "node_id": run.node_id,
            "restored_to": checkpoint.snapshot_digest if checkpoint else "origin",
            "resumed_state": run.state.value,
            "attempt": run.attempts,
        }
        if mission_id:
            payload["mission_id"] = mission_id
        ledger.append(RecordKind.ROLLBACK_EVENT, "guardian", payload, tick=tick)
    return run.state


def check_timeout(
    run: NodeRun, tick: int, *, ledger: AuditLedger | None = None
) -> FreezeEvent | None:
    if run.state is not NodeState.RUNNING or run.started_tick is None:
        return None
    if tick - run.started_tick <= run.template.timeout_ticks:
        return None
    return _freeze(run, "timeout", tick, ledger=ledger)


def quarantine(
    run: NodeRun,
    item_ids: Iterable[str],
    *,
    tick: int = 0,
    ledger: AuditLedger | None = None,
    mission_id: str | None = None,
) -> NodeState:
    """Suspend named work items into the node's quarantine bay. The rest of
    the batch proceeds; a Running node parks until the bay drains."""
    if run.state not in (NodeState.RUNNING, NodeState.VERIFIED):
        raise StateError(f"{run.node_id} holds no itemized payload in {run.state.value}")
    ids = sorted(set(item_ids))
    if not ids:
        return run.state
    unknown = [i for i in ids if i not in run.items]
    if unknown:
        raise NotFound(f"unknown items {unknown} in {run.node_id}")
    run.items.difference_update(ids)
    run.quarantined_items.update(ids)
    if run.state is NodeState.RUNNING:
        transition(run, NodeState.QUARANTINED)
    if ledger is not None:
        payload: dict[str, object] = {
            "node_id": run.node_id,
            "action": "quarantine",
            "item_ids": ids,
            "held": len(run.quarantined_items),
        }
        if mission_id:
            payload["mission_id"] = mission_id
        ledger.append(RecordKind.ESCALATION, "guardian", payload, tick=tick)
    return run.state


def release_quarantined(
    run: NodeRun,
    item_ids: Iterable[str],
    *,
    resolution: str,
    tick: int = 0,
    ledger: AuditLedger | None = None,
    mission_id: str | None = None,
) -> NodeState:
    ids = sorted(set(item_ids))
    unknown = [i for i in ids if i not in run.quarantined_items]
    if unknown:
        raise NotFound(f"items {unknown} are not quarantined in {run.node_id}")
    run.quarantined_items.difference_update(ids)
    run.items.update(ids)
    if run.state is NodeState.QUARANTINED and not run.quarantined_items:
        transition(run, NodeState.RUNNING)
    if ledger is not None and ids:
        payload: dict[str, object] = {
            "node_id": run.node_id,
            "action": "quarantine-release",
            "item_ids": ids,
            "resolution": resolution,
            "held": len(run.quarantined_items),
        }
        if mission_id:
            payload["mission_id"] = mission_id
        ledger.append(RecordKind.ESCALATION, "guardian", payload, tick=tick)
    return run.state


def gate_contract_filter(
    final_output: Mapping[str, object], charter: Charter
) -> Pass | Blocked:
    """Last-mile output screen: only output-scope charter rules apply."""
    triggered = tuple(
        rule.rule_id
        for rule in charter.rules_for_scope("output")
        if rule.predicate.triggered(final_output)
    )
    if triggered:
        return Blocked(rule_ids=triggered)
    return Pass()


def budget_utilization(spent: int, capped: int) -> Decimal:
    """Mission-level token efficiency, reported at three decimal places."""
    if capped <= 0:
        raise ValueError("cap total must be positive")
    return (Decimal(spent) / Decimal(capped)).quantize(
        Decimal("0.001"), rounding=ROUND_HALF_UP
    )
