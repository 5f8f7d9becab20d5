"""Identity, key, certificate, and pseudonym-credential issuance.

The crypto provider is pluggable.  The shipped deterministic provider
builds keyed tags over a seeded pseudorandom function: it gives the
round-trip and tamper-detection behaviour the simulator's properties
need, while staying fast and fully reproducible.  It is not a real
asymmetric scheme; a hardware-backed provider can be dropped in behind
the same five operations.

Simulated time for every operation is charged from a timing table,
independent of the provider actually doing the work, so delay
experiments do not depend on provider choice.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Role(str, Enum):
    VMU = "VMU"
    VT = "VT"
    EDGE_SERVER = "EdgeServer"
    LMM = "LMM"
    TA = "TA"


class CredentialStatus(Enum):
    UNUSED = "Unused"
    ACTIVE = "Active"
    CONSUMED = "Consumed"
    REVOKED = "Revoked"


class CryptoOp(Enum):
    ENCRYPT = "Encrypt"
    DECRYPT = "Decrypt"
    SIGN = "Sign"
    VERIFY_SIG = "VerifySig"
    VERIFY_CERT = "VerifyCert"


class CryptoError(Exception):
    pass


class DuplicateIdentity(CryptoError):
    pass


class UnauthorizedIssuer(CryptoError):
    pass


class PoolCapacityExceeded(CryptoError):
    pass


class MalformedKey(CryptoError):
    pass


class DecryptionFailed(CryptoError):
    """Ciphertext was not produced for this key pair."""


class InvalidTransition(CryptoError):
    pass


@dataclass(frozen=True)
class TrueIdentity:
    id: str
    role: Role


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    private_key: bytes


@dataclass(frozen=True)
class Certificate:
    subject_public_key: bytes
    issuer_id: str
    issuer_signature: bytes
    issued_at: float


@dataclass
class CryptoTimingModel:
    """Simulated milliseconds charged per operation kind."""

    encrypt_ms: float = 1.86
    decrypt_ms: float = 0.94
    sign_ms: float = 0.93
    verify_sig_ms: float = 1.11
    verify_cert_ms: float = 5.42

    def __post_init__(self) -> None:
        for name in ("encrypt_ms", "decrypt_ms", "sign_ms", "verify_sig_ms", "verify_cert_ms"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def cost(self, kind: CryptoOp) -> float:
        return {
            CryptoOp.ENCRYPT: self.encrypt_ms,
            CryptoOp.DECRYPT: self.decrypt_ms,
            CryptoOp.SIGN: self.sign_ms,
            CryptoOp.VERIFY_SIG: self.verify_sig_ms,
            CryptoOp.VERIFY_CERT: self.verify_cert_ms,
        }[kind]


_LEGAL_TRANSITIONS = {
    CredentialStatus.UNUSED: {CredentialStatus.ACTIVE, CredentialStatus.REVOKED},
    CredentialStatus.ACTIVE: {CredentialStatus.CONSUMED, CredentialStatus.REVOKED},
    CredentialStatus.CONSUMED: {CredentialStatus.REVOKED},
    CredentialStatus.REVOKED: set(),
}


@dataclass
class PseudonymPool:
    """Per-issuer stock of generated but not yet distributed credentials.

    Minting for an owner passes through the pool transiently: the batch
    plus any held stock must fit the capacity, then the batch leaves with
    its owner.
    """

    lmm_id: str
    capacity: int
    stock: int = 0


@dataclass
class PseudonymCredential:
    """A pseudonymous identity: pid, key pair, certificate, lifecycle status.

    The owning true identity is intentionally not stored here; only the
    issuer ledger and the authority's tracking records hold that link.
    """

    pid: str
    key_pair: KeyPair
    certificate: Certificate
    issuer_lmm: str
    status: CredentialStatus = CredentialStatus.UNUSED

    def _transition(self, new: CredentialStatus) -> None:
        if new not in _LEGAL_TRANSITIONS[self.status]:
            raise InvalidTransition(f"{self.status.value} -> {new.value}")
        self.status = new

    def activate(self) -> None:
        self._transition(CredentialStatus.ACTIVE)

    def consume(self) -> None:
        self._transition(CredentialStatus.CONSUMED)

    def revoke(self) -> None:
        if self.status is CredentialStatus.REVOKED:
            return
        self._transition(CredentialStatus.REVOKED)


def _digest(*parts: bytes) -> bytes:
    h = hashlib.blake2b(digest_size=32)
    for part in parts:
        h.update(len(part).to_bytes(4, "big"))
        h.update(part)
    return h.digest()


class DeterministicProvider:
    """Keyed-tag crypto over a seeded PRF.

    public = H("pub" | private); signatures and certificate tags are
    MACs keyed from the public key, so any holder of the public key can
    check them; ciphertexts embed a key tag so only the matching private
    key decrypts.  Correctness properties only, no adversarial strength.
    """

    KEY_BYTES = 32
    TAG_BYTES = 8

    def __init__(self, seed: int = 0):
        self._rng = np.random.default_rng(seed)
        self._nonce = 0

    def generate_keypair(self) -> KeyPair:
        private = self._rng.bytes(self.KEY_BYTES)
        return KeyPair(public_key=self._public_from_private(private), private_key=private)

    @staticmethod
    def _public_from_private(private: bytes) -> bytes:
        return _digest(b"pub", private)

    def _check_key(self, key: bytes) -> None:
        if not isinstance(key, bytes) or len(key) != self.KEY_BYTES:
            raise MalformedKey(f"expected {self.KEY_BYTES}-byte key")

    def _keystream(self, public_key: bytes, nonce: bytes, length: int) -> bytes:
        seed = _digest(b"stream", public_key, nonce)
        blocks = []
        counter = 0
        while sum(len(b) for b in blocks) < length:
            h = hashlib.blake2b(counter.to_bytes(8, "big"), key=seed, digest_size=64)
            blocks.append(h.digest())
            counter += 1
        return b"".join(blocks)[:length]

    @staticmethod
    def _xor(data: bytes, stream: bytes) -> bytes:
        a = np.frombuffer(data, dtype=np.uint8)
        b = np.frombuffer(stream, dtype=np.uint8)
        return (a ^ b).tobytes()

    def encrypt(self, public_key: bytes, plaintext: bytes) -> bytes:
        self._check_key(public_key)
        nonce = self._nonce.to_bytes(8, "big")
        self._nonce += 1
        tag = _digest(b"keytag", public_key)[: self.TAG_BYTES]
        stream = self._keystream(public_key, nonce, len(plaintext))
        return tag + nonce + self._xor(plaintext, stream)

    def decrypt(self, private_key: bytes, ciphertext: bytes) -> bytes:
        self._check_key(private_key)
        if len(ciphertext) < self.TAG_BYTES + 8:
            raise DecryptionFailed("ciphertext too short")
        public_key = self._public_from_private(private_key)
        tag = _digest(b"keytag", public_key)[: self.TAG_BYTES]
        if not hmac.compare_digest(tag, ciphertext[: self.TAG_BYTES]):
            raise DecryptionFailed("ciphertext was encrypted for a different key")
        nonce = ciphertext[self.TAG_BYTES : self.TAG_BYTES + 8]
        body = ciphertext[self.TAG_BYTES + 8 :]
        stream = self._keystream(public_key, nonce, len(body))
        return self._xor(body, stream)

    def sign(self, private_key: bytes, message: bytes) -> bytes:
        self._check_key(private_key)
        public_key = self._public_from_private(private_key)
        return _digest(b"sig", public_key, message)

    def verify(self, public_key: bytes, signature: bytes, message: bytes) -> bool:
        self._check_key(public_key)
        expected = _digest(b"sig", public_key, message)
        return hmac.compare_digest(expected, signature)


@dataclass
class RegisteredEntity:
    identity: TrueIdentity
    key_pair: KeyPair
    certificate: Certificate


def _cert_payload(subject_public_key: bytes, issuer_id: str, issued_at: float) -> bytes:
    return _digest(subject_public_key, issuer_id.encode(), repr(issued_at).encode())


class CryptoEngine:
    """Provider plus identity registry, pseudonym pools, and the timing meter.

    Owned by the simulation event loop; mutation is single-threaded and
    snapshots may be shared read-only.
    """

    def __init__(
        self,
        provider: DeterministicProvider | None = None,
        timing: CryptoTimingModel | None = None,
        seed: int = 0,
        pool_capacity: int | None = None,
        g_max: int = 120,
    ):
        self.provider = provider or DeterministicProvider(seed=seed)
        self.timing = timing or CryptoTimingModel()
        self.registry: dict[str, RegisteredEntity] = {}
        self.pools: dict[str, PseudonymPool] = {}
        self.issuance: dict[str, str] = {}  # pid -> owner true id (issuer/TA view)
        self.minted_count: dict[str, int] = {}  # issuer -> credentials minted
        self.pool_capacity = pool_capacity if pool_capacity is not None else 10 * g_max
        self.now_ms: float = 0.0
        self.elapsed_crypto_ms: float = 0.0
        self._counters: dict[Role, int] = {role: 0 for role in Role}
        self._pid_rng = np.random.default_rng(seed ^ 0x5EED)
        self._known_pids: set[str] = set()

    # --- registry -------------------------------------------------------

    def register_root_authority(self, entity_id: str = "TA-root") -> RegisteredEntity:
        """Create the self-certified trust anchor."""
        if entity_id in self.registry:
            raise DuplicateIdentity(entity_id)
        keys = self.provider.generate_keypair()
        payload = _cert_payload(keys.public_key, entity_id, self.now_ms)
        cert = Certificate(
            subject_public_key=keys.public_key,
            issuer_id=entity_id,
            issuer_signature=self.provider.sign(keys.private_key, payload),
            issued_at=self.now_ms,
        )
        entity = RegisteredEntity(TrueIdentity(entity_id, Role.TA), keys, cert)
        self.registry[entity_id] = entity
        return entity

    def provision_entity(
        self,
        role: Role,
        authority_id: str,
        entity_id: str | None = None,
    ) -> tuple[TrueIdentity, KeyPair, Certificate]:
        authority = self.registry.get(authority_id)
        if authority is None:
            raise UnauthorizedIssuer(f"unknown authority {authority_id}")
        issuer_role = authority.identity.role
        allowed = issuer_role is Role.TA or (issuer_role is Role.LMM and role is Role.VT)
        if not allowed:
            raise UnauthorizedIssuer(f"{issuer_role.value} may not provision {role.value}")
        if entity_id is None:
            entity_id = f"{role.value}-{self._counters[role]:05d}"
            self._counters[role] += 1
        if entity_id in self.registry:
            raise DuplicateIdentity(entity_id)
        keys = self.provider.generate_keypair()
        payload = _cert_payload(keys.public_key, authority_id, self.now_ms)
        cert = Certificate(
            subject_public_key=keys.public_key,
            issuer_id=authority_id,
            issuer_signature=self.provider.sign(authority.key_pair.private_key, payload),
            issued_at=self.now_ms,
        )
        identity = TrueIdentity(entity_id, role)
        self.registry[entity_id] = RegisteredEntity(identity, keys, cert)
        return identity, keys, cert

    def public_key_of(self, entity_id: str) -> bytes:
        return self.registry[entity_id].key_pair.public_key

    # --- timed operations -------------------------------------------------

    def crypto_op(self, kind: CryptoOp, **inputs):
        """Run one provider operation; returns (result, simulated ms)."""
        elapsed = self.timing.cost(kind)
        self.elapsed_crypto_ms += elapsed
        if kind is CryptoOp.ENCRYPT:
            result = self.provider.encrypt(inputs["public_key"], inputs["plaintext"])
        elif kind is CryptoOp.DECRYPT:
            result = self.provider.decrypt(inputs["private_key"], inputs["ciphertext"])
        elif kind is CryptoOp.SIGN:
            result = self.provider.sign(inputs["private_key"], inputs["message"])
        elif kind is CryptoOp.VERIFY_SIG:
            result = self.provider.verify(
                inputs["public_key"], inputs["signature"], inputs["message"]
            )
        elif kind is CryptoOp.VERIFY_CERT:
            result = self.verify_certificate(inputs["certificate"], inputs["issuer_public_key"])
        else:  # pragma: no cover - enum is closed
            raise ValueError(kind)
        return result, elapsed

    def verify_certificate(self, certificate: Certificate, issuer_public_key: bytes) -> bool:
        payload = _cert_payload(
            certificate.subject_public_key, certificate.issuer_id, certificate.issued_at
        )
        return self.provider.verify(issuer_public_key, certificate.issuer_signature, payload)

    # --- pseudonym credentials ---------------------------------------------

    def _pool_for(self, lmm_id: str) -> PseudonymPool:
        pool = self.pools.get(lmm_id)
        if pool is None:
            pool = PseudonymPool(lmm_id=lmm_id, capacity=self.pool_capacity)
            self.pools[lmm_id] = pool
        return pool

    def mint_pseudonym_batch(
        self, issuer_id: str, owner: TrueIdentity, count: int
    ) -> list[PseudonymCredential]:
        issuer = self.registry.get(issuer_id)
        if issuer is None or issuer.identity.role is not Role.LMM:
            raise UnauthorizedIssuer(f"{issuer_id} is not a registered LMM")
        if count < 1:
            raise ValueError("count must be at least 1")
        pool = self._pool_for(issuer_id)
        if pool.stock + count > pool.capacity:
            raise PoolCapacityExceeded(
                f"pool {issuer_id}: {pool.stock} + {count} > capacity {pool.capacity}"
            )
        batch = []
        for _ in range(count):
            pid = f"PID-{self._pid_rng.bytes(16).hex()}"
            if pid in self._known_pids or pid in self.registry:
                raise CryptoError(f"pid collision on {pid}")
            self._known_pids.add(pid)
            keys = self.provider.generate_keypair()
            payload = _cert_payload(keys.public_key, issuer_id, self.now_ms)
            cert = Certificate(
                subject_public_key=keys.public_key,
                issuer_id=issuer_id,
                issuer_signature=self.provider.sign(issuer.key_pair.private_key, payload),
                issued_at=self.now_ms,
            )
            credential = PseudonymCredential(
                pid=pid,
                key_pair=keys,
                certificate=cert,
                issuer_lmm=issuer_id,
            )
            self.issuance[pid] = owner.id
            batch.append(credential)
        self.minted_count[issuer_id] = self.minted_count.get(issuer_id, 0) + count
        return batch

    def verify_credential(
        self, credential: PseudonymCredential, trust_anchors: set[bytes]
    ) -> bool:
        if credential.status is CredentialStatus.REVOKED:
            return False
        return any(
            self.verify_certificate(credential.certificate, anchor) for anchor in trust_anchors
        )
