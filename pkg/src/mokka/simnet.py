"""Deterministic discrete-event network simulator.

Virtual integer-millisecond clock, a single priority queue of (time,
sequence) ordered events, uniform per-message latency, probabilistic
drops, partition windows that silently eat boundary-crossing packets,
and scripted adversaries. All randomness is derived from the scenario
seed, so a scenario maps to exactly one trace.
"""

import heapq
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import core, crypto, curve, proofs, wire
from .core import (
    ArmElectionTimer,
    ArmHeartbeatTimer,
    Diagnostic,
    ElectionTimeout,
    Heartbeat,
    HeartbeatTick,
    Packet,
    PacketArrived,
    RoleChanged,
    Send,
    VoteRequest,
    VoteResponse,
)
from .scenario import AdversarySpec, Partition, Scenario


@dataclass(frozen=True)
class TraceEvent:
    time_ms: int
    seq: int
    kind: str  # send | deliver | drop | timer | role_change | diagnostic | violation
    node: int
    detail: str

    def line(self) -> str:
        return f"{self.time_ms}\t{self.seq}\t{self.kind}\t{self.node}\t{self.detail}"


@dataclass
class RunReport:
    leaders_per_term: Dict[int, List[int]]
    elections_started: int
    violations: List[str]
    final_roles: Dict[int, str]
    final_known_leader: Dict[int, Optional[int]]
    honest_nodes: Tuple[int, ...]
    adversaries: Dict[int, str]
    quorum_size: int
    proof_ttl_ms: int
    heartbeat_interval_ms: int
    partitions: Tuple[Partition, ...]
    duration_ms: int


def trace_lines(trace: List[TraceEvent]) -> str:
    return "".join(ev.line() + "\n" for ev in trace)


def _packet_detail(packet: Packet) -> str:
    body = packet.body
    if isinstance(body, VoteRequest):
        p = body.payload
        return f"vote-request term={p.term} candidate={p.candidate}"
    if isinstance(body, VoteResponse):
        g = body.grant
        return f"vote-response term={g.term} voter={g.voter}"
    assert isinstance(body, Heartbeat)
    return (
        f"heartbeat term={body.term} leader={body.leader}"
        f" proof_ts={body.proof.timestamp_ms}"
    )


class _Sim:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.net_rng = random.Random(f"{scenario.seed}:net")
        self.adv_rng = random.Random(f"{scenario.seed}:adv")
        self.heap: List[tuple] = []
        self.seq = 0
        self.trace: List[TraceEvent] = []
        self.leaders_per_term: Dict[int, List[int]] = {}
        self.elections_started = 0
        self.adversaries = {a.node: a for a in scenario.adversaries}

        keypairs = [
            crypto.keygen(f"{scenario.key_seed}-node-{i}".encode())
            for i in range(scenario.n)
        ]
        keyring = crypto.build_keyring(
            [(i, kp.public) for i, kp in enumerate(keypairs)]
        )
        self.keyring = keyring
        self.nodes: Dict[int, core.NodeState] = {}
        self.egen = [0] * scenario.n
        self.hgen = [0] * scenario.n
        for i in range(scenario.n):
            state, outputs = core.init(
                i, keypairs[i], keyring, scenario.node_config,
                random.Random(f"{scenario.seed}:node:{i}"),
            )
            self.nodes[i] = state
            if scenario.preferred_first_candidate is not None:
                outputs = self._bias_first_timer(i, outputs)
            self._apply_outputs(i, outputs, 0)
        # Adversaries emit on the heartbeat cadence.
        interval = scenario.node_config.heartbeat_interval_ms
        for node, spec in self.adversaries.items():
            if spec.behavior in ("fake_leader", "proof_replay"):
                t = interval
                while t <= scenario.duration_ms:
                    self._push(t, ("adv", node))
                    t += interval
        self.replay_captured: Dict[int, tuple] = {}  # node -> (proof, capture_ms)

    # -- plumbing -------------------------------------------------------------

    def _push(self, time_ms: int, item: tuple) -> None:
        heapq.heappush(self.heap, (time_ms, self.seq, item))
        self.seq += 1

    def _record(self, time_ms: int, kind: str, node: int, detail: str) -> None:
        self.trace.append(TraceEvent(time_ms, self.seq, kind, node, detail))
        self.seq += 1

    def _bias_first_timer(self, node: int, outputs: list) -> list:
        """Force a chosen node to win the opening election."""
        low, high = self.sc.node_config.election_timeout_range_ms
        duration = low if node == self.sc.preferred_first_candidate else (
            high + 100 + 10 * node
        )
        return [
            ArmElectionTimer(duration, out.cause)
            if isinstance(out, ArmElectionTimer) else out
            for out in outputs
        ]

    def _partition_blocks(self, src: int, dst: int, time_ms: int) -> bool:
        for part in self.sc.partitions:
            if part.start_ms <= time_ms < part.end_ms:
                for group in part.groups:
                    if src in group:
                        return dst not in group
        return False

    def _dispatch(
        self, packet: Packet, time_ms: int, emitter: Optional[int] = None
    ) -> None:
        # emitter is who physically sends; it differs from packet.src only
        # when an adversary forges the envelope.
        if emitter is None:
            emitter = packet.src
        spec = self.adversaries.get(emitter)
        if spec is not None and spec.behavior == "silent":
            self._record(time_ms, "drop", emitter, "silent " + _packet_detail(packet))
            return
        copies = 1
        if (
            spec is not None
            and spec.behavior == "double_voter"
            and isinstance(packet.body, VoteResponse)
        ):
            copies = 2
        for _ in range(copies):
            self._record(
                time_ms, "send", emitter,
                f"{_packet_detail(packet)} to={packet.dst}",
            )
            if self._partition_blocks(emitter, packet.dst, time_ms):
                self._record(
                    time_ms, "drop", emitter,
                    f"partition {_packet_detail(packet)} to={packet.dst}",
                )
                continue
            if (
                self.sc.drop_probability > 0
                and self.net_rng.random() < self.sc.drop_probability
            ):
                self._record(
                    time_ms, "drop", emitter,
                    f"loss {_packet_detail(packet)} to={packet.dst}",
                )
                continue
            delay = self.net_rng.randint(*self.sc.latency_ms)
            self._push(time_ms + delay, ("deliver", packet))

    def _apply_outputs(self, node: int, outputs: list, time_ms: int) -> None:
        for out in outputs:
            if isinstance(out, Send):
                for packet in out.packets:
                    self._dispatch(packet, time_ms)
            elif isinstance(out, ArmElectionTimer):
                self.egen[node] += 1
                self._record(
                    time_ms, "timer", node,
                    f"arm-election dur={out.duration_ms} cause={out.cause}",
                )
                self._push(
                    time_ms + out.duration_ms, ("etimer", node, self.egen[node])
                )
            elif isinstance(out, ArmHeartbeatTimer):
                self.hgen[node] += 1
                self._push(
                    time_ms + out.duration_ms, ("htimer", node, self.hgen[node])
                )
            elif isinstance(out, RoleChanged):
                detail = f"{out.role} term={out.term}"
                if out.role == "leader":
                    self.leaders_per_term.setdefault(out.term, [])
                    if node not in self.leaders_per_term[out.term]:
                        self.leaders_per_term[out.term].append(node)
                    detail += (
                        f" proof_ts={out.proof.timestamp_ms}"
                        f" proof={proofs.encode_proof(out.proof).hex()}"
                    )
                elif out.role == "candidate":
                    self.elections_started += 1
                self._record(time_ms, "role_change", node, detail)
            elif isinstance(out, Diagnostic):
                self._record(
                    time_ms, "diagnostic", node, f"{out.code} {out.detail}"
                )

    # -- adversary emissions --------------------------------------------------

    def _fake_proof(self, spec: AdversarySpec, time_ms: int) -> proofs.VoteProof:
        combo = next(
            c for c in sorted(self.keyring.combos) if spec.node in c
        )
        big_r = curve.scalar_mult_base(1 + self.adv_rng.randrange(curve.N - 1))
        s = self.adv_rng.randrange(curve.N)
        return proofs.VoteProof(
            wire.SCHEME_SCHNORR, spec.term, time_ms, spec.node,
            proofs.SchnorrBody(combo, big_r, s),
        )

    def _adversary_emit(self, node: int, time_ms: int) -> None:
        spec = self.adversaries[node]
        if spec.behavior == "fake_leader":
            proof = self._fake_proof(spec, time_ms)
            for peer in range(self.sc.n):
                if peer != node:
                    self._dispatch(
                        Packet(node, peer, Heartbeat(spec.term, node, proof)),
                        time_ms,
                    )
        elif spec.behavior == "proof_replay":
            captured = self.replay_captured.get(node)
            if captured is None:
                return
            proof, capture_ms = captured
            if time_ms < capture_ms + spec.replay_after_ms:
                return
            # Forged envelope: the replayer impersonates the proof's candidate.
            for peer in range(self.sc.n):
                if peer != node:
                    self._dispatch(
                        Packet(
                            proof.candidate, peer,
                            Heartbeat(proof.term, proof.candidate, proof),
                        ),
                        time_ms,
                        emitter=node,
                    )

    def _maybe_capture(self, node: int, packet: Packet, time_ms: int) -> None:
        spec = self.adversaries.get(node)
        if (
            spec is None
            or spec.behavior != "proof_replay"
            or node in self.replay_captured
            or not isinstance(packet.body, Heartbeat)
        ):
            return
        result = proofs.validate_proof(
            packet.body.proof, self.keyring,
            self.sc.node_config.proof_policy, time_ms,
        )
        if result is proofs.ValidationResult.OK:
            self.replay_captured[node] = (packet.body.proof, time_ms)
            self._record(
                time_ms, "diagnostic", node,
                f"proof-captured term={packet.body.proof.term}"
                f" proof_ts={packet.body.proof.timestamp_ms}",
            )

    # -- main loop ------------------------------------------------------------

    def run(self) -> Tuple[List[TraceEvent], RunReport]:
        while self.heap:
            time_ms, _, item = heapq.heappop(self.heap)
            if time_ms > self.sc.duration_ms:
                break
            kind = item[0]
            if kind == "deliver":
                packet = item[1]
                node = packet.dst
                self._record(
                    time_ms, "deliver", node,
                    f"{_packet_detail(packet)} from={packet.src}",
                )
                self._maybe_capture(node, packet, time_ms)
                spec = self.adversaries.get(node)
                if spec is not None and spec.behavior == "fake_leader":
                    # Fake leaders answer votes but never campaign or follow.
                    if not isinstance(packet.body, VoteRequest):
                        continue
                _, outputs = core.step(
                    self.nodes[node], PacketArrived(packet), time_ms
                )
                self._apply_outputs(node, outputs, time_ms)
            elif kind == "etimer":
                node, gen = item[1], item[2]
                if gen != self.egen[node]:
                    continue
                spec = self.adversaries.get(node)
                if spec is not None and spec.behavior in (
                    "fake_leader", "proof_replay"
                ):
                    continue  # lurking adversaries never start elections
                _, outputs = core.step(self.nodes[node], ElectionTimeout(), time_ms)
                self._apply_outputs(node, outputs, time_ms)
            elif kind == "htimer":
                node, gen = item[1], item[2]
                if gen != self.hgen[node]:
                    continue
                _, outputs = core.step(self.nodes[node], HeartbeatTick(), time_ms)
                self._apply_outputs(node, outputs, time_ms)
            elif kind == "adv":
                self._adversary_emit(item[1], time_ms)

        report = RunReport(
            leaders_per_term=self.leaders_per_term,
            elections_started=self.elections_started,
            violations=[],
            final_roles={i: self.nodes[i].role.name for i in range(self.sc.n)},
            final_known_leader={
                i: (
                    self.nodes[i].known_leader[0]
                    if self.nodes[i].known_leader else None
                )
                for i in range(self.sc.n)
            },
            honest_nodes=tuple(
                i for i in range(self.sc.n) if i not in self.adversaries
            ),
            adversaries={n: s.behavior for n, s in self.adversaries.items()},
            quorum_size=self.keyring.quorum_size,
            proof_ttl_ms=self.sc.node_config.proof_policy.ttl_ms,
            heartbeat_interval_ms=self.sc.node_config.heartbeat_interval_ms,
            partitions=self.sc.partitions,
            duration_ms=self.sc.duration_ms,
        )
        report.violations = check_invariants(self.trace, report)
        for violation in report.violations:
            self._record(self.sc.duration_ms, "violation", -1, violation)
        return self.trace, report


def run(scenario: Scenario) -> Tuple[List[TraceEvent], RunReport]:
    return _Sim(scenario).run()


# --- invariant checking ------------------------------------------------------


def _fields(detail: str) -> Dict[str, str]:
    out = {}
    for token in detail.split():
        if "=" in token:
            key, _, value = token.partition("=")
            out[key] = value
    return out


def _leader_intervals(
    trace: List[TraceEvent], report: RunReport
) -> Dict[int, List[Tuple[int, int, int]]]:
    """Per node: (start_ms, end_ms, term) intervals spent as leader."""
    intervals: Dict[int, List[Tuple[int, int, int]]] = {}
    open_at: Dict[int, Tuple[int, int]] = {}
    for ev in trace:
        if ev.kind != "role_change":
            continue
        role = ev.detail.split()[0]
        term = int(_fields(ev.detail).get("term", -1))
        if role == "leader":
            open_at[ev.node] = (ev.time_ms, term)
        elif ev.node in open_at:
            start, lead_term = open_at.pop(ev.node)
            intervals.setdefault(ev.node, []).append((start, ev.time_ms, lead_term))
    for node, (start, lead_term) in open_at.items():
        intervals.setdefault(node, []).append(
            (start, report.duration_ms, lead_term)
        )
    return intervals


def check_invariants(trace: List[TraceEvent], report: RunReport) -> List[str]:
    violations: List[str] = []
    honest = set(report.honest_nodes)

    # Election safety: at most one leader per term.
    for term, leaders in sorted(report.leaders_per_term.items()):
        if len(leaders) > 1:
            violations.append(
                f"election-safety term={term} leaders={sorted(leaders)}"
            )

    # Vote uniqueness: one VoteResponse per (honest node, term).
    seen_votes: Dict[Tuple[int, int], int] = {}
    for ev in trace:
        if ev.kind == "send" and ev.detail.startswith("vote-response") \
                and ev.node in honest:
            term = int(_fields(ev.detail)["term"])
            key = (ev.node, term)
            seen_votes[key] = seen_votes.get(key, 0) + 1
            if seen_votes[key] == 2:
                violations.append(
                    f"vote-uniqueness node={ev.node} term={term}"
                )

    # Term monotonicity over every term observation per node.
    last_term: Dict[int, int] = {}
    for ev in trace:
        if ev.kind not in ("role_change", "send") or ev.node not in honest:
            continue
        term_str = _fields(ev.detail).get("term")
        if term_str is None:
            continue
        term = int(term_str)
        if term < last_term.get(ev.node, 0):
            violations.append(
                f"term-monotonicity node={ev.node} term={term}"
                f" after={last_term[ev.node]} at={ev.time_ms}"
            )
        last_term[ev.node] = max(last_term.get(ev.node, 0), term)

    fake_leaders = {
        n for n, b in report.adversaries.items() if b == "fake_leader"
    }
    for ev in trace:
        if ev.kind != "timer" or ev.node not in honest:
            continue
        fields = _fields(ev.detail)
        if "leader" not in fields:
            continue
        leader = int(fields["leader"])
        proof_ts = int(fields["proof_ts"])
        # A heartbeat without a valid proof never resets a timer.
        if leader in fake_leaders:
            violations.append(
                f"fake-leader-reset node={ev.node} leader={leader} at={ev.time_ms}"
            )
        # An expired proof never resets a timer (covers post-ttl replay).
        if ev.time_ms > proof_ts + report.proof_ttl_ms:
            violations.append(
                f"expired-proof-reset node={ev.node} proof_ts={proof_ts}"
                f" at={ev.time_ms}"
            )
    for node in honest:
        if report.final_known_leader.get(node) in fake_leaders:
            violations.append(
                f"fake-leader-acknowledged node={node}"
                f" leader={report.final_known_leader[node]}"
            )

    # During a partition, a sub-quorum side holds no leader once the old
    # proof has had time to expire (ttl plus one heartbeat of stepdown lag).
    intervals = _leader_intervals(trace, report)
    grace = report.proof_ttl_ms + report.heartbeat_interval_ms
    for part in report.partitions:
        for group in part.groups:
            if len(group) >= report.quorum_size:
                continue
            window_start = part.start_ms + grace
            if window_start >= part.end_ms:
                continue
            for node in group:
                for start, end, term in intervals.get(node, []):
                    overlap = min(end, part.end_ms) - max(start, window_start)
                    if overlap > 0:
                        violations.append(
                            f"minority-leader node={node} term={term}"
                            f" window=[{window_start},{part.end_ms})"
                        )
    return violations


@dataclass(frozen=True)
class DualLeadershipInterval:
    start_ms: int
    end_ms: int
    nodes: Tuple[int, ...]
    terms: Tuple[int, ...]

    @property
    def length_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class WindowLeadership:
    start_ms: int
    end_ms: int
    group: Tuple[int, ...]
    leaders: Tuple[Tuple[int, int, int, int], ...]  # (node, term, from, to)


@dataclass(frozen=True)
class PartitionLeadershipSummary:
    windows: Tuple[WindowLeadership, ...]
    dual_intervals: Tuple[DualLeadershipInterval, ...]
    max_dual_ms: int
    exceeded_ttl: bool


def scripted_partition_leadership(
    trace: List[TraceEvent], report: RunReport
) -> PartitionLeadershipSummary:
    """Per partition window: who led on each side, and for how long two
    nodes simultaneously believed themselves leader."""
    intervals = _leader_intervals(trace, report)
    windows = []
    for part in report.partitions:
        for group in part.groups:
            leaders = []
            for node in sorted(group):
                for start, end, term in intervals.get(node, []):
                    lo = max(start, part.start_ms)
                    hi = min(end, part.end_ms)
                    if lo < hi:
                        leaders.append((node, term, lo, hi))
            windows.append(
                WindowLeadership(part.start_ms, part.end_ms, tuple(sorted(group)),
                                 tuple(leaders))
            )

    flat = [
        (node, term, start, end)
        for node, spans in intervals.items()
        for start, end, term in spans
    ]
    duals = []
    for i in range(len(flat)):
        for j in range(i + 1, len(flat)):
            a, b = flat[i], flat[j]
            if a[0] == b[0]:
                continue
            lo = max(a[2], b[2])
            hi = min(a[3], b[3])
            if lo < hi:
                duals.append(
                    DualLeadershipInterval(
                        lo, hi, tuple(sorted((a[0], b[0]))),
                        tuple(sorted((a[1], b[1]))),
                    )
                )
    max_dual = max((d.length_ms for d in duals), default=0)
    limit = report.proof_ttl_ms + report.heartbeat_interval_ms
    return PartitionLeadershipSummary(
        tuple(windows), tuple(duals), max_dual, max_dual > limit
    )
