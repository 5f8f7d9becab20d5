"""Tests for identity issuance, the deterministic provider, and credentials."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pseudosim.crypto import (
    CredentialStatus,
    CryptoEngine,
    CryptoOp,
    CryptoTimingModel,
    DecryptionFailed,
    DeterministicProvider,
    DuplicateIdentity,
    InvalidTransition,
    MalformedKey,
    PoolCapacityExceeded,
    Role,
    UnauthorizedIssuer,
)


@pytest.fixture
def engine():
    eng = CryptoEngine(seed=42)
    eng.register_root_authority("TA-root")
    return eng


@pytest.fixture
def engine_with_lmm(engine):
    engine.provision_entity(Role.LMM, "TA-root", entity_id="LMM-0")
    return engine


class TestProvider:
    @given(message=st.binary(min_size=0, max_size=300))
    @settings(max_examples=50)
    def test_encrypt_decrypt_round_trip(self, message):
        provider = DeterministicProvider(seed=1)
        keys = provider.generate_keypair()
        assert provider.decrypt(keys.private_key, provider.encrypt(keys.public_key, message)) == message

    @given(message=st.binary(min_size=1, max_size=300))
    @settings(max_examples=50)
    def test_sign_verify_round_trip(self, message):
        provider = DeterministicProvider(seed=2)
        keys = provider.generate_keypair()
        assert provider.verify(keys.public_key, provider.sign(keys.private_key, message), message)

    @given(message=st.binary(min_size=1, max_size=64), flip=st.integers(min_value=0))
    @settings(max_examples=50)
    def test_tampered_message_fails(self, message, flip):
        provider = DeterministicProvider(seed=3)
        keys = provider.generate_keypair()
        sig = provider.sign(keys.private_key, message)
        i = flip % len(message)
        tampered = message[:i] + bytes([message[i] ^ 0x01]) + message[i + 1 :]
        assert provider.verify(keys.public_key, sig, tampered) is False

    def test_decrypt_with_wrong_key_fails(self):
        provider = DeterministicProvider(seed=4)
        alice, bob = provider.generate_keypair(), provider.generate_keypair()
        ct = provider.encrypt(alice.public_key, b"payload")
        with pytest.raises(DecryptionFailed):
            provider.decrypt(bob.private_key, ct)

    def test_malformed_key_rejected(self):
        provider = DeterministicProvider(seed=5)
        with pytest.raises(MalformedKey):
            provider.encrypt(b"short", b"m")


class TestTiming:
    def test_sign_then_verify_costs(self, engine):
        keys = engine.provider.generate_keypair()
        sig, t_sign = engine.crypto_op(CryptoOp.SIGN, private_key=keys.private_key, message=b"m")
        ok, t_verify = engine.crypto_op(
            CryptoOp.VERIFY_SIG, public_key=keys.public_key, signature=sig, message=b"m"
        )
        assert ok is True
        assert t_sign == 0.93
        assert t_verify == 1.11

    def test_encrypt_decrypt_round_trip_with_costs(self, engine):
        keys = engine.provider.generate_keypair()
        ct, t_enc = engine.crypto_op(CryptoOp.ENCRYPT, public_key=keys.public_key, plaintext=b"hello")
        pt, t_dec = engine.crypto_op(CryptoOp.DECRYPT, private_key=keys.private_key, ciphertext=ct)
        assert pt == b"hello"
        assert (t_enc, t_dec) == (1.86, 0.94)

    def test_elapsed_is_additive(self, engine):
        keys = engine.provider.generate_keypair()
        start = engine.elapsed_crypto_ms
        sequence = [CryptoOp.SIGN, CryptoOp.VERIFY_SIG, CryptoOp.ENCRYPT, CryptoOp.DECRYPT, CryptoOp.SIGN]
        total = 0.0
        sig = engine.provider.sign(keys.private_key, b"m")
        ct = engine.provider.encrypt(keys.public_key, b"m")
        for op in sequence:
            if op is CryptoOp.SIGN:
                _, dt = engine.crypto_op(op, private_key=keys.private_key, message=b"m")
            elif op is CryptoOp.VERIFY_SIG:
                _, dt = engine.crypto_op(op, public_key=keys.public_key, signature=sig, message=b"m")
            elif op is CryptoOp.ENCRYPT:
                _, dt = engine.crypto_op(op, public_key=keys.public_key, plaintext=b"m")
            else:
                _, dt = engine.crypto_op(op, private_key=keys.private_key, ciphertext=ct)
            total += dt
        assert engine.elapsed_crypto_ms - start == total

    def test_negative_cost_rejected(self):
        with pytest.raises(ValueError):
            CryptoTimingModel(sign_ms=-1.0)


class TestProvisioning:
    def test_certificate_verifies_under_authority(self, engine):
        _, keys, cert = engine.provision_entity(Role.VMU, "TA-root")
        ok, _ = engine.crypto_op(
            CryptoOp.VERIFY_CERT,
            certificate=cert,
            issuer_public_key=engine.public_key_of("TA-root"),
        )
        assert ok is True

    def test_vmu_cannot_provision(self, engine):
        vmu, _, _ = engine.provision_entity(Role.VMU, "TA-root")
        with pytest.raises(UnauthorizedIssuer):
            engine.provision_entity(Role.VMU, vmu.id)

    def test_lmm_may_provision_vt_only(self, engine_with_lmm):
        engine_with_lmm.provision_entity(Role.VT, "LMM-0")
        with pytest.raises(UnauthorizedIssuer):
            engine_with_lmm.provision_entity(Role.VMU, "LMM-0")

    def test_bulk_provisioning_registers_distinct_ids(self, engine):
        before = len(engine.registry)
        ids = {engine.provision_entity(Role.VMU, "TA-root")[0].id for _ in range(150)}
        assert len(ids) == 150
        assert len(engine.registry) == before + 150

    def test_duplicate_identity(self, engine):
        engine.provision_entity(Role.VMU, "TA-root", entity_id="VMU-X")
        with pytest.raises(DuplicateIdentity):
            engine.provision_entity(Role.VMU, "TA-root", entity_id="VMU-X")


class TestMinting:
    def test_batch_postconditions(self, engine_with_lmm):
        owner, _, _ = engine_with_lmm.provision_entity(Role.VMU, "TA-root")
        batch = engine_with_lmm.mint_pseudonym_batch("LMM-0", owner, 10)
        assert len(batch) == 10
        anchor = {engine_with_lmm.public_key_of("LMM-0")}
        for cred in batch:
            assert cred.status is CredentialStatus.UNUSED
            assert cred.issuer_lmm == "LMM-0"
            assert engine_with_lmm.verify_credential(cred, anchor)
        assert len({c.pid for c in batch}) == 10

    def test_zero_count_rejected(self, engine_with_lmm):
        owner, _, _ = engine_with_lmm.provision_entity(Role.VMU, "TA-root")
        with pytest.raises(ValueError):
            engine_with_lmm.mint_pseudonym_batch("LMM-0", owner, 0)

    def test_full_batch_fits_capacity(self):
        engine = CryptoEngine(seed=0, pool_capacity=120)
        engine.register_root_authority("TA-root")
        engine.provision_entity(Role.LMM, "TA-root", entity_id="LMM-0")
        owner, _, _ = engine.provision_entity(Role.VMU, "TA-root")
        assert len(engine.mint_pseudonym_batch("LMM-0", owner, 120)) == 120

    def test_oversized_batch_exceeds_empty_pool(self):
        engine = CryptoEngine(seed=0, pool_capacity=120)
        engine.register_root_authority("TA-root")
        engine.provision_entity(Role.LMM, "TA-root", entity_id="LMM-0")
        owner, _, _ = engine.provision_entity(Role.VMU, "TA-root")
        with pytest.raises(PoolCapacityExceeded):
            engine.mint_pseudonym_batch("LMM-0", owner, 121)

    def test_held_stock_counts_against_capacity(self):
        engine = CryptoEngine(seed=0, pool_capacity=120)
        engine.register_root_authority("TA-root")
        engine.provision_entity(Role.LMM, "TA-root", entity_id="LMM-0")
        owner, _, _ = engine.provision_entity(Role.VMU, "TA-root")
        engine._pool_for("LMM-0").stock = 100
        with pytest.raises(PoolCapacityExceeded):
            engine.mint_pseudonym_batch("LMM-0", owner, 21)
        engine.mint_pseudonym_batch("LMM-0", owner, 20)

    def test_non_lmm_cannot_mint(self, engine):
        owner, _, _ = engine.provision_entity(Role.VMU, "TA-root")
        with pytest.raises(UnauthorizedIssuer):
            engine.mint_pseudonym_batch("TA-root", owner, 1)

    def test_pid_uniqueness_at_scale(self):
        engine = CryptoEngine(seed=99, pool_capacity=200_000)
        engine.register_root_authority("TA-root")
        engine.provision_entity(Role.LMM, "TA-root", entity_id="LMM-0")
        owner, _, _ = engine.provision_entity(Role.VMU, "TA-root")
        pids = set()
        for _ in range(10):
            batch = engine.mint_pseudonym_batch("LMM-0", owner, 10_000)
            pids.update(c.pid for c in batch)
        assert len(pids) == 100_000
        assert all(pid not in engine.registry for pid in pids)


class TestCredentialVerification:
    def test_revoked_fails(self, engine_with_lmm):
        owner, _, _ = engine_with_lmm.provision_entity(Role.VMU, "TA-root")
        cred = engine_with_lmm.mint_pseudonym_batch("LMM-0", owner, 1)[0]
        anchor = {engine_with_lmm.public_key_of("LMM-0")}
        assert engine_with_lmm.verify_credential(cred, anchor)
        cred.revoke()
        assert not engine_with_lmm.verify_credential(cred, anchor)

    def test_anchor_set_must_contain_issuer(self, engine_with_lmm):
        engine_with_lmm.provision_entity(Role.LMM, "TA-root", entity_id="LMM-1")
        owner, _, _ = engine_with_lmm.provision_entity(Role.VMU, "TA-root")
        cred = engine_with_lmm.mint_pseudonym_batch("LMM-0", owner, 1)[0]
        other_anchors = {
            engine_with_lmm.public_key_of("LMM-1"),
            engine_with_lmm.public_key_of("TA-root"),
        }
        assert not engine_with_lmm.verify_credential(cred, other_anchors)
        assert not engine_with_lmm.verify_credential(cred, set())


class TestStatusMachine:
    @given(ops=st.lists(st.sampled_from(["activate", "consume", "revoke"]), max_size=8))
    @settings(max_examples=200)
    def test_no_illegal_transition_possible(self, ops):
        engine = CryptoEngine(seed=7)
        engine.register_root_authority("TA-root")
        engine.provision_entity(Role.LMM, "TA-root", entity_id="LMM-0")
        owner, _, _ = engine.provision_entity(Role.VMU, "TA-root")
        cred = engine.mint_pseudonym_batch("LMM-0", owner, 1)[0]
        legal = {
            ("Unused", "activate"),
            ("Active", "consume"),
            ("Unused", "revoke"),
            ("Active", "revoke"),
            ("Consumed", "revoke"),
            ("Revoked", "revoke"),  # idempotent no-op
        }
        for op in ops:
            before = cred.status.value
            try:
                getattr(cred, op)()
            except InvalidTransition:
                assert (before, op) not in legal
                assert cred.status.value == before
            else:
                assert (before, op) in legal
