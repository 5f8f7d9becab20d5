"""Tests for the pseudonym lifecycle protocols over a small world."""

import pytest

from pseudosim.chain import query_record
from pseudosim.crypto import CredentialStatus, CryptoOp, DecryptionFailed
from pseudosim.protocols import (
    AlreadyRegistered,
    Exhausted,
    LocationMismatch,
    MessageKind,
    NoActivePseudonym,
    TraceabilityError,
    World,
    WorldConfig,
)


def small_config(**overrides) -> WorldConfig:
    defaults = dict(n_districts=3, vmus_per_district=(2, 2, 2))
    defaults.update(overrides)
    return WorldConfig(**defaults)


@pytest.fixture
def world():
    return World(small_config(), seed=1)


def registered_pair(world, j=0):
    vmu, vt = world.bootstrap_registration(j)
    world.synchronous_change(vmu, vt, world.now_ms)
    return vmu, vt


def migrate(world, vmu, vt, target):
    old = world.districts[vmu.location]
    old.vt_roster.discard(vt.identity.id)
    vmu.location = target
    vt.location = target
    world.districts[target].vt_roster.add(vt.identity.id)


def exhaust(world, vmu, vt):
    while True:
        try:
            world.now_ms += 1.0
            world.synchronous_change(vmu, vt, world.now_ms)
        except Exhausted:
            return


class TestBootstrap:
    def test_chain_postconditions(self, world):
        district = world.districts[0]
        sub_height = district.subchain.height
        main_height = world.main_chain.height
        world.bootstrap_registration(0)
        assert district.subchain.height == sub_height + 1
        assert world.main_chain.height == main_height + 1

    def test_initial_batches_unused(self, world):
        vmu, vt = world.bootstrap_registration(0)
        assert vmu.unused_count() == world.config.batch_w == 10
        assert vt.unused_count() == world.config.batch_u == 10
        assert vmu.cursor == -1 and vt.cursor == -1

    def test_duplicate_registration(self, world):
        vmu, _ = world.bootstrap_registration(0)
        with pytest.raises(AlreadyRegistered):
            world.bootstrap_registration(1, vmu_id=vmu.identity.id)

    def test_tracking_lists_lmm_only(self, world):
        world.bootstrap_registration(0)
        non_lmm_keys = [world.engine.registry["TA-0"].key_pair.private_key]
        non_lmm_keys += [d.es.key_pair.private_key for d in world.districts]
        non_lmm_keys += [v.key_pair.private_key for v in world.vmus.values()]
        for district in world.districts:
            assert district.tracking_lists
            ciphertext = district.tracking_lists[-1]
            plaintext = world.engine.provider.decrypt(
                district.lmm.key_pair.private_key, ciphertext
            )
            assert b"pids" in plaintext
            for key in non_lmm_keys:
                with pytest.raises(DecryptionFailed):
                    world.engine.provider.decrypt(key, ciphertext)
            for other in world.districts:
                if other is not district:
                    with pytest.raises(DecryptionFailed):
                        world.engine.provider.decrypt(
                            other.lmm.key_pair.private_key, ciphertext
                        )


class TestSafetyBroadcast:
    def test_ten_broadcasts_in_three_seconds(self, world):
        vmu, vt = registered_pair(world)
        messages = world.safety_broadcast_tick(vmu, 3000.0)
        assert len(messages) == 10
        assert [m.timestamp for m in messages] == [300.0 * k for k in range(1, 11)]

    def test_cleartext_has_pid_never_true_id(self, world):
        vmu, vt = registered_pair(world)
        (message,) = world.safety_broadcast_tick(vmu, 300.0)
        cleartext = " ".join(message.cleartext_fields())
        assert vmu.active_credential.pid in cleartext
        assert vmu.identity.id not in cleartext
        assert message.kind is MessageKind.SAFETY_BROADCAST
        assert message.certificate is not None

    def test_receiver_verification_cost(self, world):
        vmu, _ = registered_pair(world)
        before = world.engine.elapsed_crypto_ms
        world.safety_broadcast_tick(vmu, 600.0)
        # two messages, each: sender sign 0.93, receiver 1.11 + 5.42
        assert world.engine.elapsed_crypto_ms - before == pytest.approx(2 * (0.93 + 1.11 + 5.42))

    def test_requires_active_pseudonym(self, world):
        vmu, _ = world.bootstrap_registration(0)
        with pytest.raises(NoActivePseudonym):
            world.safety_broadcast_tick(vmu, 300.0)


class TestSynchronousChange:
    def test_both_sides_advance(self, world):
        vmu, vt = world.bootstrap_registration(0)
        world.synchronous_change(vmu, vt, 10.0)  # first adoption
        assert vmu.unused_count() == 9 and vt.unused_count() == 9
        world.synchronous_change(vmu, vt, 20.0)
        assert vmu.unused_count() == 8 and vt.unused_count() == 8
        assert vmu.credentials[0].status is CredentialStatus.CONSUMED
        assert vmu.credentials[1].status is CredentialStatus.ACTIVE
        assert len(vmu.privacy.events) == len(vt.privacy.events) == 2

    def test_exhaustion_is_atomic(self, world):
        vmu, vt = world.bootstrap_registration(0)
        extra = world.engine.mint_pseudonym_batch(
            "LMM-0", vmu.identity, 3
        )
        vmu.credentials.extend(extra)
        exhaust(world, vmu, vt)  # vt runs out first, vmu still has spares
        assert vmu.unused_count() > 0
        assert vt.unused_count() == 0
        cursor_before = (vmu.cursor, vt.cursor)
        events_before = (len(vmu.privacy.events), len(vt.privacy.events))
        with pytest.raises(Exhausted):
            world.synchronous_change(vmu, vt, world.now_ms + 1)
        assert (vmu.cursor, vt.cursor) == cursor_before
        assert (len(vmu.privacy.events), len(vt.privacy.events)) == events_before

    def test_adversary_confusion_probability(self):
        world = World(small_config(vmus_per_district=(10, 0, 0)), seed=2)
        pairs = [world.bootstrap_registration(0) for _ in range(10)]
        for vmu, vt in pairs:
            world.synchronous_change(vmu, vt, 500.0)
        assert world.adversary_success_probability(0, 500.0) == pytest.approx(0.1)

    def test_tracking_probability_within_bounds(self, world):
        vmu, vt = registered_pair(world)
        event = world.synchronous_change(vmu, vt, 42.0)
        bounds = world.config.bounds
        assert bounds.a <= event.tracking_probability <= bounds.b


class TestLocalDistribution:
    def test_valid_request_delay_and_replies(self, world):
        vmu, vt = registered_pair(world)
        result = world.local_distribution(vmu, vt, 10)
        assert result is not None
        assert result.delay.crypto_ms == 7.0
        assert result.delay.comm_ms == 50.0
        assert result.delay.chain_ms == 21.0
        assert result.delay.total_ms == 78.0
        assert result.minted_vmu == result.minted_vt == 10
        assert vmu.unused_count() == 19
        # replies decrypt only under the requesting pseudonym keys
        body = world.engine.provider.decrypt(
            vmu.active_credential.key_pair.private_key, result.vmu_reply.body
        )
        assert b"pids" in body

    def test_single_chain_mode_delay(self):
        world = World(small_config(chain_mode="single"), seed=3)
        vmu, vt = registered_pair(world)
        result = world.local_distribution(vmu, vt, 10)
        assert (result.delay.crypto_ms, result.delay.comm_ms, result.delay.chain_ms) == (19.0, 60.0, 28.0)
        assert result.delay.total_ms == 107.0

    def test_unknown_identity_drops_silently(self, world):
        vmu, vt = registered_pair(world)
        rogue = world.engine.mint_pseudonym_batch("LMM-0", vmu.identity, 1)
        vmu.credentials.extend(rogue)  # minted but never committed on-chain
        vmu.credentials[vmu.cursor].consume()
        rogue[0].activate()
        vmu.cursor = len(vmu.credentials) - 1
        replies_before = sum(1 for m in world.message_log if m.kind is MessageKind.PSEU_REPLY)
        assert world.local_distribution(vmu, vt, 10) is None
        replies_after = sum(1 for m in world.message_log if m.kind is MessageKind.PSEU_REPLY)
        assert replies_after == replies_before
        assert world.audit_log[-1]["kind"] == "silent_drop"

    def test_migrated_pair_raises_location_mismatch(self, world):
        vmu, vt = registered_pair(world)
        migrate(world, vmu, vt, 1)
        with pytest.raises(LocationMismatch):
            world.local_distribution(vmu, vt, 10)

    def test_demand_aggregation(self, world):
        district = world.districts[0]
        for demand in (10, 20, 30):
            vmu, vt = registered_pair(world)
            world.local_distribution(vmu, vt, demand)
        assert world.aggregate_demand(district, 0) == 60.0
        assert world.aggregate_demand(district, 5) == 0.0


class TestCrossDistrictDistribution:
    def test_migration_flow(self, world):
        vmu, vt = registered_pair(world)
        origin = world.districts[0]
        migrate(world, vmu, vt, 1)
        result = world.cross_district_distribution(vmu, vt, 10)
        assert result is not None
        assert result.delay.total_ms == pytest.approx(7.0 + 50.0 + 806.0)
        assert result.serving_lmm == "LMM-1"
        assert vmu.identity.id in origin.frozen
        # second request is local at the new district
        exhaust(world, vmu, vt)
        follow_up = world.local_distribution(vmu, vt, 10)
        assert follow_up is not None
        assert follow_up.serving_lmm == "LMM-1"
        assert follow_up.delay.total_ms == 78.0

    def test_forged_origin_claim(self, world):
        vmu, vt = registered_pair(world)
        migrate(world, vmu, vt, 1)
        forged = world.engine.mint_pseudonym_batch("LMM-2", vmu.identity, 1)
        vmu.credentials.extend(forged)  # claims district 2 without records there
        vmu.credentials[vmu.cursor].consume()
        forged[0].activate()
        vmu.cursor = len(vmu.credentials) - 1
        assert world.cross_district_distribution(vmu, vt, 10) is None
        assert vmu.unused_count() == 9  # nothing distributed
        abnormal = [a for a in world.audit_log if a["kind"] == "abnormal_condition"]
        assert abnormal and abnormal[-1]["reported_to"] == "TA-0"

    def test_local_pair_dropped(self, world):
        vmu, vt = registered_pair(world)
        assert world.cross_district_distribution(vmu, vt, 10) is None
        assert world.audit_log[-1]["kind"] == "silent_drop"


class TestDualRevocation:
    def test_confirmed_misbehavior(self, world):
        accused_vmu, accused_vt = registered_pair(world, j=0)
        reporter, _ = registered_pair(world, j=0)
        world.misbehavior_truth[accused_vmu.identity.id] = True
        outcome = world.dual_revocation(
            reporter, accused_vmu.active_credential.pid, "fake-traffic"
        )
        assert outcome.confirmed and outcome.blacklisted
        assert accused_vmu.identity.id in world.blacklist
        assert accused_vt.identity.id in world.blacklist
        assert all(c.status is CredentialStatus.REVOKED for c in accused_vmu.credentials)
        assert all(c.status is CredentialStatus.REVOKED for c in accused_vt.credentials)
        assert accused_vt.identity.id not in world.districts[0].vt_roster
        assert all(accused_vmu.identity.id in d.revealed_ids for d in world.districts)
        record = query_record(world.districts[0].subchain, accused_vmu.credentials[0].pid)
        assert record["status"] == "Revoked"

    def test_unconfirmed_restricts_reporter(self, world):
        accused_vmu, _ = registered_pair(world)
        reporter, _ = registered_pair(world)
        world.misbehavior_truth[accused_vmu.identity.id] = False
        outcome = world.dual_revocation(
            reporter, accused_vmu.active_credential.pid, "fake-traffic"
        )
        assert not outcome.confirmed and outcome.reporter_restricted
        assert reporter.identity.id in world.restricted_reporters
        assert accused_vmu.identity.id not in world.blacklist
        assert accused_vmu.active_credential is not None
        # restricted reporter is silently dropped next time
        assert world.dual_revocation(reporter, accused_vmu.active_credential.pid, "x") is None

    def test_blacklisted_requests_get_no_reply(self, world):
        accused_vmu, accused_vt = registered_pair(world)
        reporter, _ = registered_pair(world)
        world.misbehavior_truth[accused_vmu.identity.id] = True
        world.dual_revocation(reporter, accused_vmu.active_credential.pid, "spam")
        replies_before = sum(1 for m in world.message_log if m.kind is MessageKind.PSEU_REPLY)
        assert world.local_distribution(accused_vmu, accused_vt, 10) is None
        replies_after = sum(1 for m in world.message_log if m.kind is MessageKind.PSEU_REPLY)
        assert replies_after == replies_before


class TestTraceability:
    def test_authority_resolves_everyone_else_blocked(self, world):
        vmu, vt = registered_pair(world)
        pid = vmu.active_credential.pid
        vt_pid = vt.active_credential.pid
        assert world.resolve_true_identity(pid, "TA-0") == vmu.identity.id
        assert world.resolve_true_identity(vt_pid, "TA-0") == vt.identity.id
        other_vmu, _ = registered_pair(world, j=1)
        for viewer in ("LMM-0", "LMM-1", "ES-0", other_vmu.identity.id):
            with pytest.raises(TraceabilityError):
                world.resolve_true_identity(pid, viewer)


class TestDelayBookkeeping:
    def test_breakdown_additivity(self, world):
        vmu, vt = registered_pair(world)
        world.local_distribution(vmu, vt, 10)
        migrate(world, vmu, vt, 2)
        exhaust(world, vmu, vt)
        world.cross_district_distribution(vmu, vt, 10)
        for breakdowns in world.delays.values():
            for b in breakdowns:
                assert b.total_ms == b.crypto_ms + b.comm_ms + b.chain_ms


class TestMessageDiscipline:
    def test_per_sender_timestamps_monotone(self, world):
        from pseudosim.protocols import ProtocolError, ProtocolMessage

        vmu, vt = registered_pair(world)
        world.now_ms = 500.0
        world.local_distribution(vmu, vt, 10)
        world.now_ms = 400.0  # earlier than the last message the pair sent
        with pytest.raises(ProtocolError):
            world.local_distribution(vmu, vt, 10)
