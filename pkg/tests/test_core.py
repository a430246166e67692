"""State-machine rules, exercised node by node without a network."""

import random
from dataclasses import replace

import pytest

from mokka import core, proofs, wire
from mokka.core import (
    ArmElectionTimer,
    ArmHeartbeatTimer,
    Candidate,
    Diagnostic,
    ElectionTimeout,
    Follower,
    Heartbeat,
    HeartbeatTick,
    Leader,
    NodeConfig,
    Packet,
    PacketArrived,
    RoleChanged,
    Send,
    VoteRequest,
    VoteResponse,
)
from mokka.proofs import ProofPolicy


def only(outputs, kind):
    picked = [o for o in outputs if isinstance(o, kind)]
    assert len(picked) == 1, outputs
    return picked[0]


def make_node(node_id, cluster, scheme=wire.SCHEME_SCHNORR, seed="core", **config_kw):
    keypairs, keyring = cluster
    config = NodeConfig(scheme=scheme, **config_kw)
    rng = random.Random(f"{seed}:{node_id}")
    return core.init(node_id, keypairs[node_id], keyring, config, rng)


def deliver(state, packet, now_ms):
    return core.step(state, PacketArrived(packet), now_ms)


def elect_leader(cluster, candidate=0, now_ms=1000, scheme=wire.SCHEME_SCHNORR):
    """Drive a full election by hand; returns (states, candidate outputs)."""
    keypairs, keyring = cluster
    n = len(keyring.node_ids())
    states = {}
    for node in range(n):
        state, _ = make_node(node, cluster, scheme=scheme)
        states[node] = state
    _, outs = core.step(states[candidate], ElectionTimeout(), now_ms)
    requests = only(outs, Send).packets
    final_outs = []
    for req in requests:
        if isinstance(states[candidate].role, Leader):
            break
        _, vouts = deliver(states[req.dst], req, now_ms)
        for out in vouts:
            if isinstance(out, Send):
                for pkt in out.packets:
                    _, outs = deliver(states[candidate], pkt, now_ms)
                    if any(isinstance(o, RoleChanged) for o in outs):
                        final_outs = outs
    return states, final_outs


class TestInit:
    def test_starts_as_follower_term_zero(self, cluster3):
        state, outs = make_node(0, cluster3)
        assert isinstance(state.role, Follower)
        assert state.current_term == 0
        assert state.voted_for is None
        assert state.known_leader is None
        timer = only(outs, ArmElectionTimer)
        low, high = state.config.election_timeout_range_ms
        assert low <= timer.duration_ms <= high
        assert timer.cause == "init"

    def test_timer_draw_comes_from_supplied_rng(self, cluster3):
        keypairs, keyring = cluster3
        config = NodeConfig()
        _, outs_a = core.init(0, keypairs[0], keyring, config, random.Random(7))
        _, outs_b = core.init(0, keypairs[0], keyring, config, random.Random(7))
        assert only(outs_a, ArmElectionTimer) == only(outs_b, ArmElectionTimer)
        expected = random.Random(7).randint(*config.election_timeout_range_ms)
        assert only(outs_a, ArmElectionTimer).duration_ms == expected

    def test_unknown_node_rejected(self, cluster3):
        keypairs, keyring = cluster3
        with pytest.raises(core.CoreError, match="not in keyring"):
            core.init(9, keypairs[0], keyring, NodeConfig(), random.Random(0))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            NodeConfig(election_timeout_range_ms=(300, 150))
        with pytest.raises(ValueError):
            NodeConfig(heartbeat_interval_ms=200)
        with pytest.raises(ValueError):
            NodeConfig(proof_policy=ProofPolicy(ttl_ms=40))


class TestElectionStart:
    def test_timeout_starts_campaign(self, cluster3):
        state, _ = make_node(0, cluster3)
        _, outs = core.step(state, ElectionTimeout(), 1000)
        assert state.current_term == 1
        assert isinstance(state.role, Candidate)
        assert state.voted_for == (1, 0)
        assert only(outs, RoleChanged).role == "candidate"
        requests = only(outs, Send).packets
        assert [p.dst for p in requests] == [1, 2]
        assert all(isinstance(p.body, VoteRequest) for p in requests)
        assert only(outs, ArmElectionTimer).cause == "election-round"

    def test_repeated_timeouts_bump_term(self, cluster3):
        state, _ = make_node(0, cluster3)
        core.step(state, ElectionTimeout(), 1000)
        core.step(state, ElectionTimeout(), 2000)
        assert state.current_term == 2
        assert state.voted_for == (2, 0)

    def test_leader_ignores_stale_election_timer(self, cluster3):
        states, _ = elect_leader(cluster3)
        leader = states[0]
        assert isinstance(leader.role, Leader)
        _, outs = core.step(leader, ElectionTimeout(), 2000)
        assert outs == []
        assert isinstance(leader.role, Leader)


class TestVoteRequest:
    def _request(self, cluster, term=1, now=1000, candidate=0, voter=1):
        keypairs, keyring = cluster
        payloads = proofs.make_vote_payloads(
            candidate, term, now, keyring, wire.SCHEME_SCHNORR, random.Random(0)
        )
        return Packet(candidate, voter, VoteRequest(payloads[voter]))

    def test_grant_and_rearm(self, cluster3):
        state, _ = make_node(1, cluster3)
        _, outs = deliver(state, self._request(cluster3), 1000)
        response = only(outs, Send).packets[0]
        assert response.dst == 0
        assert isinstance(response.body, VoteResponse)
        assert state.voted_for == (1, 0)
        assert only(outs, ArmElectionTimer).cause == "vote-granted"

    def test_stale_term_refused(self, cluster3):
        state, _ = make_node(1, cluster3)
        state.current_term = 5
        _, outs = deliver(state, self._request(cluster3, term=1), 1000)
        assert only(outs, Diagnostic).code == "stale-term"
        assert not any(isinstance(o, Send) for o in outs)

    def test_one_vote_per_term(self, cluster5):
        state, _ = make_node(1, cluster5)
        keypairs, keyring = cluster5
        _, outs = deliver(state, self._request(cluster5, candidate=0), 1000)
        assert any(isinstance(o, Send) for o in outs)
        payloads = proofs.make_vote_payloads(
            2, 1, 1000, keyring, wire.SCHEME_SCHNORR, random.Random(1)
        )
        _, outs = deliver(state, Packet(2, 1, VoteRequest(payloads[1])), 1000)
        diag = only(outs, Diagnostic)
        assert diag.code == "already-voted"
        assert "for=0" in diag.detail
        assert not any(isinstance(o, Send) for o in outs)

    def test_higher_term_demotes_candidate(self, cluster3):
        state, _ = make_node(1, cluster3)
        core.step(state, ElectionTimeout(), 900)
        assert isinstance(state.role, Candidate)
        _, outs = deliver(state, self._request(cluster3, term=5), 1000)
        assert state.current_term == 5
        assert isinstance(state.role, Follower)
        assert only(outs, RoleChanged).role == "follower"
        # New term, no vote cast yet in it: the request is granted.
        assert any(isinstance(o, Send) for o in outs)

    def test_excessive_clock_skew_refused(self, cluster3):
        state, _ = make_node(1, cluster3)
        skew = state.config.proof_policy.max_clock_skew_ms
        pkt = self._request(cluster3, now=1000)
        _, outs = deliver(state, pkt, 1000 + skew + 1)
        assert only(outs, Diagnostic).code == "clock-skew"
        assert state.voted_for is None
        _, outs = deliver(state, pkt, 1000 + skew)
        assert any(isinstance(o, Send) for o in outs)


class TestVoteResponse:
    def test_quorum_promotes_to_leader(self, cluster3):
        states, outs = elect_leader(cluster3)
        leader = states[0]
        assert isinstance(leader.role, Leader)
        change = only(outs, RoleChanged)
        assert change.role == "leader" and change.proof is not None
        burst = only(outs, Send).packets
        assert [p.dst for p in burst] == [1, 2]
        assert all(isinstance(p.body, Heartbeat) for p in burst)
        only(outs, ArmHeartbeatTimer)
        assert leader.known_leader[0] == 0
        policy = leader.config.proof_policy
        assert proofs.validate_proof(
            leader.role.proof, leader.keyring, policy, 1000
        ) is proofs.ValidationResult.OK

    def test_five_node_cluster_needs_three_grants(self, cluster5):
        keypairs, keyring = cluster5
        states = {i: make_node(i, cluster5)[0] for i in range(5)}
        _, outs = core.step(states[0], ElectionTimeout(), 1000)
        requests = only(outs, Send).packets
        grants = []
        for req in requests:
            _, vouts = deliver(states[req.dst], req, 1000)
            grants.append(only(vouts, Send).packets[0])
        _, outs = deliver(states[0], grants[0], 1000)
        assert outs == []
        assert isinstance(states[0].role, Candidate)
        _, outs = deliver(states[0], grants[1], 1000)
        assert isinstance(states[0].role, Leader)
        assert only(outs, RoleChanged).role == "leader"

    def test_duplicate_grant_counted_once(self, cluster5):
        states = {i: make_node(i, cluster5)[0] for i in range(5)}
        _, outs = core.step(states[0], ElectionTimeout(), 1000)
        req = only(outs, Send).packets[0]
        _, vouts = deliver(states[req.dst], req, 1000)
        grant = only(vouts, Send).packets[0]
        deliver(states[0], grant, 1000)
        _, outs = deliver(states[0], grant, 1000)
        assert only(outs, Diagnostic).code == "duplicate-grant"
        assert isinstance(states[0].role, Candidate)

    def test_forged_grant_rejected(self, cluster3):
        states = {i: make_node(i, cluster3)[0] for i in range(3)}
        _, outs = core.step(states[0], ElectionTimeout(), 1000)
        req = only(outs, Send).packets[0]
        _, vouts = deliver(states[req.dst], req, 1000)
        grant_pkt = only(vouts, Send).packets[0]
        grant = grant_pkt.body.grant
        forged = replace(
            grant,
            partials=tuple(
                replace(p, s_value=(p.s_value + 1) % proofs.curve.N)
                for p in grant.partials
            ),
        )
        _, outs = deliver(states[0], Packet(1, 0, VoteResponse(forged)), 1000)
        assert only(outs, Diagnostic).code == "bad-grant"
        assert isinstance(states[0].role, Candidate)

    def test_response_outside_campaign_is_late(self, cluster3):
        states = {i: make_node(i, cluster3)[0] for i in range(3)}
        _, outs = core.step(states[0], ElectionTimeout(), 1000)
        req = only(outs, Send).packets[0]
        _, vouts = deliver(states[req.dst], req, 1000)
        grant = only(vouts, Send).packets[0]
        _, outs = deliver(states[2], grant, 1000)  # never campaigned
        assert only(outs, Diagnostic).code == "late-response"


class TestHeartbeat:
    def _leader_and_heartbeat(self, cluster, now=1000):
        states, outs = elect_leader(cluster, now_ms=now)
        hb = only(outs, Send).packets[0].body
        return states, hb

    def test_valid_heartbeat_resets_follower(self, cluster3):
        states, hb = self._leader_and_heartbeat(cluster3)
        follower = states[2]
        _, outs = core.step(follower, PacketArrived(Packet(0, 2, hb)), 1050)
        timer = only(outs, ArmElectionTimer)
        assert timer.cause == "heartbeat leader=0 proof_ts=1000"
        assert follower.known_leader[0] == 0
        assert follower.current_term == 1

    def test_bad_proof_never_resets(self, cluster3):
        states, hb = self._leader_and_heartbeat(cluster3)
        forged = replace(
            hb, proof=replace(
                hb.proof,
                body=replace(
                    hb.proof.body,
                    s_value=(hb.proof.body.s_value + 1) % proofs.curve.N,
                ),
            ),
        )
        follower = states[2]
        _, outs = core.step(follower, PacketArrived(Packet(0, 2, forged)), 1050)
        assert only(outs, Diagnostic).code == "bad_signature"
        assert not any(isinstance(o, ArmElectionTimer) for o in outs)
        assert follower.known_leader is None

    def test_expired_proof_classified_even_when_term_is_stale(self, cluster3):
        states, hb = self._leader_and_heartbeat(cluster3)
        follower = states[2]
        follower.current_term = 10  # replay arrives after local term moved on
        ttl = follower.config.proof_policy.ttl_ms
        _, outs = core.step(
            follower, PacketArrived(Packet(0, 2, hb)), 1000 + ttl + 1
        )
        assert only(outs, Diagnostic).code == "expired"
        assert not any(isinstance(o, ArmElectionTimer) for o in outs)

    def test_stale_term_heartbeat_with_valid_proof(self, cluster3):
        states, hb = self._leader_and_heartbeat(cluster3)
        follower = states[2]
        follower.current_term = 10
        _, outs = core.step(follower, PacketArrived(Packet(0, 2, hb)), 1050)
        assert only(outs, Diagnostic).code == "stale-term"

    def test_mismatched_envelope_rejected(self, cluster3):
        states, hb = self._leader_and_heartbeat(cluster3)
        follower = states[2]
        wrong_leader = replace(hb, leader=1)
        _, outs = core.step(follower, PacketArrived(Packet(1, 2, wrong_leader)), 1050)
        assert only(outs, Diagnostic).code == "proof-mismatch"
        wrong_term = replace(hb, term=hb.term + 1)
        _, outs = core.step(follower, PacketArrived(Packet(0, 2, wrong_term)), 1050)
        assert only(outs, Diagnostic).code == "proof-mismatch"

    def test_heartbeat_demotes_rival_candidate(self, cluster3):
        states, hb = self._leader_and_heartbeat(cluster3)
        rival = states[2]
        core.step(rival, ElectionTimeout(), 1040)
        assert isinstance(rival.role, Candidate)
        assert rival.current_term == hb.term
        # An equal-term heartbeat with a valid proof wins over a rival campaign.
        _, outs = core.step(rival, PacketArrived(Packet(0, 2, hb)), 1050)
        assert only(outs, RoleChanged).role == "follower"
        assert isinstance(rival.role, Follower)
        assert rival.known_leader[0] == 0

    def test_heartbeat_with_higher_term_demotes(self, cluster3):
        states, hb = self._leader_and_heartbeat(cluster3, now=1000)
        follower = states[2]
        assert follower.current_term == 0
        _, outs = core.step(follower, PacketArrived(Packet(0, 2, hb)), 1020)
        assert follower.current_term == hb.term
        assert isinstance(follower.role, Follower)


class TestLeaderTick:
    def test_tick_rebroadcasts_and_rearms(self, cluster3):
        states, _ = elect_leader(cluster3)
        leader = states[0]
        _, outs = core.step(leader, HeartbeatTick(), 1050)
        burst = only(outs, Send).packets
        assert [p.dst for p in burst] == [1, 2]
        only(outs, ArmHeartbeatTimer)
        assert isinstance(leader.role, Leader)

    def test_leader_steps_down_after_ttl(self, cluster3):
        states, _ = elect_leader(cluster3)
        leader = states[0]
        ttl = leader.config.proof_policy.ttl_ms
        _, outs = core.step(leader, HeartbeatTick(), 1000 + ttl)
        assert isinstance(leader.role, Leader)  # boundary is inclusive
        _, outs = core.step(leader, HeartbeatTick(), 1000 + ttl + 1)
        assert isinstance(leader.role, Follower)
        assert leader.known_leader is None
        assert only(outs, Diagnostic).code == "proof-expired"
        assert only(outs, ArmElectionTimer).cause == "stepdown"
        assert not any(isinstance(o, Send) for o in outs)

    def test_follower_ignores_stale_heartbeat_timer(self, cluster3):
        state, _ = make_node(0, cluster3)
        _, outs = core.step(state, HeartbeatTick(), 1000)
        assert outs == []


class TestSssScheme:
    def test_full_election_under_sss(self, cluster5):
        states, outs = elect_leader(cluster5, scheme=wire.SCHEME_SSS)
        leader = states[0]
        assert isinstance(leader.role, Leader)
        assert leader.role.proof.scheme == wire.SCHEME_SSS
        hb = only(outs, Send).packets[0].body
        follower = states[4]
        _, fouts = core.step(follower, PacketArrived(Packet(0, 4, hb)), 1050)
        assert only(fouts, ArmElectionTimer).cause.startswith("heartbeat leader=0")

    def test_sss_wrong_share_rejected(self, cluster3):
        keypairs, keyring = cluster3
        states = {
            i: make_node(i, cluster3, scheme=wire.SCHEME_SSS)[0] for i in range(3)
        }
        _, outs = core.step(states[0], ElectionTimeout(), 1000)
        req = only(outs, Send).packets[0]
        _, vouts = deliver(states[req.dst], req, 1000)
        grant = only(vouts, Send).packets[0].body.grant
        share, sig = grant.share_sig
        altered = replace(share, value=(share.value + 1) % proofs.curve.N)
        message = proofs.share_sign_message(altered, grant.term, 1000, 0)
        resigned = proofs.crypto.sign_recoverable(keypairs[grant.voter], message)
        forged = replace(grant, share_sig=(altered, resigned))
        _, fouts = deliver(states[0], Packet(1, 0, VoteResponse(forged)), 1000)
        assert only(fouts, Diagnostic).code == "bad-grant"
