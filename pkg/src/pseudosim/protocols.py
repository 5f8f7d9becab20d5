"""Pseudonym lifecycle protocols as message flows over the ledger substrate.

Covers registration bootstrap, periodic safety broadcasting, synchronized
dual pseudonym changes, local and cross-district distribution, dual
revocation with blacklisting, and per-district demand aggregation.  Every
externally visible delay decomposes exactly into crypto, communication,
and chain-verification components; invalid requests are dropped silently
but leave an audit-log event so tests can assert the non-reply.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .chain import (
    ChainState,
    ChainSystem,
    ConsensusConfig,
    CrossChainKind,
    Tier,
    Transaction,
    TxKind,
    append_block_pbft,
    cross_chain_transaction,
    query_record,
)
from .crypto import (
    Certificate,
    CredentialStatus,
    CryptoEngine,
    CryptoOp,
    CryptoTimingModel,
    DecryptionFailed,
    KeyPair,
    PseudonymCredential,
    Role,
    TrueIdentity,
)
from .privacy import PrivacyProcess, TrackingBounds


class ProtocolError(Exception):
    pass


class AlreadyRegistered(ProtocolError):
    pass


class NoActivePseudonym(ProtocolError):
    pass


class Exhausted(ProtocolError):
    """No unused credential left on at least one side of a pair."""


class LocationMismatch(ProtocolError):
    """Requester is outside its issuer's district; cross-district path applies."""


class TraceabilityError(ProtocolError):
    """The viewer's chain view cannot map a pseudonym to a true identity."""


class MessageKind(Enum):
    SAFETY_BROADCAST = "SafetyBroadcast"
    PSEU_REQUEST = "PseuRequest"
    PSEU_REPLY = "PseuReply"
    CROSS_VERIFY_QUERY = "CrossVerifyQuery"
    CROSS_VERIFY_ANSWER = "CrossVerifyAnswer"
    REPORT = "Report"
    REVOCATION_NOTICE = "RevocationNotice"
    TRACKING_LIST_PUSH = "TrackingListPush"


@dataclass(frozen=True)
class ProtocolMessage:
    """Typed envelope; ``body`` is ciphertext, everything else cleartext."""

    kind: MessageKind
    sender_pid: str
    body: bytes
    timestamp: float
    signature: bytes
    certificate: Certificate | None = None
    detail: str = ""

    def cleartext_fields(self) -> tuple[str, ...]:
        fields = [self.kind.value, self.sender_pid, self.detail, repr(self.timestamp)]
        if self.certificate is not None:
            fields.append(self.certificate.issuer_id)
        return tuple(fields)


@dataclass
class LatencyModel:
    """One-way link latencies in simulated milliseconds."""

    vmu_to_es_ms: float = 20.0
    es_to_lmm_ms: float = 5.0
    es_to_ta_ms: float = 10.0

    def __post_init__(self) -> None:
        if min(self.vmu_to_es_ms, self.es_to_lmm_ms, self.es_to_ta_ms) < 0:
            raise ValueError("latencies must be non-negative")

    def round_trip_via_lmm(self) -> float:
        return 2.0 * (self.vmu_to_es_ms + self.es_to_lmm_ms)

    def round_trip_via_ta(self) -> float:
        return 2.0 * (self.vmu_to_es_ms + self.es_to_ta_ms)


@dataclass
class DelayAggregates:
    """Measured aggregate components of request handling, per system mode."""

    crypto_single_ms: float = 19.0
    crypto_cross_ms: float = 7.0
    chain_single_ms: float = 28.0
    chain_cross_local_ms: float = 21.0
    chain_cross_district_ms: float = 806.0


@dataclass(frozen=True)
class DelayBreakdown:
    crypto_ms: float
    comm_ms: float
    chain_ms: float

    @property
    def total_ms(self) -> float:
        return self.crypto_ms + self.comm_ms + self.chain_ms


@dataclass(frozen=True)
class BlacklistEntry:
    true_id: str
    revealed_at: float
    reason: str


@dataclass
class Blacklist:
    entries: list[BlacklistEntry] = field(default_factory=list)
    ids: set[str] = field(default_factory=set)

    def add(self, true_id: str, revealed_at: float, reason: str) -> None:
        if true_id not in self.ids:
            self.entries.append(BlacklistEntry(true_id, revealed_at, reason))
            self.ids.add(true_id)

    def __contains__(self, true_id: str) -> bool:
        return true_id in self.ids


@dataclass
class TrackingTableEntry:
    """Authority-side mapping from pseudonyms to a registered pair.

    Serialized and encrypted to the authority key before it touches the
    main chain, so only the authority role can read it back.
    """

    true_id: str
    vt_id: str
    vmu_public_key: str
    vt_public_key: str
    issuer_lmm: str
    pids_vmu: list[str]
    pids_vt: list[str]
    timestamp: float

    def to_bytes(self) -> bytes:
        return json.dumps(self.__dict__, sort_keys=True).encode()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "TrackingTableEntry":
        return cls(**json.loads(raw.decode()))


@dataclass
class Actor:
    identity: TrueIdentity
    key_pair: KeyPair
    certificate: Certificate
    location: int
    privacy: PrivacyProcess | None = None
    credentials: list[PseudonymCredential] = field(default_factory=list)
    cursor: int = -1
    inbox: list[ProtocolMessage] = field(default_factory=list)
    links: dict[str, float] = field(default_factory=dict)
    last_broadcast_ms: float = 0.0
    last_message_ts: float = -1.0

    @property
    def active_credential(self) -> PseudonymCredential | None:
        if 0 <= self.cursor < len(self.credentials):
            cred = self.credentials[self.cursor]
            if cred.status is CredentialStatus.ACTIVE:
                return cred
        return None

    def unused_count(self) -> int:
        return sum(1 for c in self.credentials if c.status is CredentialStatus.UNUSED)

    def next_unused_index(self) -> int | None:
        for i in range(self.cursor + 1, len(self.credentials)):
            if self.credentials[i].status is CredentialStatus.UNUSED:
                return i
        return None


@dataclass
class District:
    index: int
    lmm: Actor
    es: Actor
    subchain: ChainState
    vt_roster: set[str] = field(default_factory=set)
    tracking_lists: list[bytes] = field(default_factory=list)
    frozen: set[str] = field(default_factory=set)
    demand_by_slot: dict[int, list[float]] = field(default_factory=lambda: defaultdict(list))
    revealed_ids: set[str] = field(default_factory=set)


@dataclass
class WorldConfig:
    n_districts: int = 3
    vmus_per_district: tuple[int, ...] = (80, 70, 60)
    batch_w: int = 10
    batch_u: int = 10
    change_rate_per_min: float = 2.0
    bounds: TrackingBounds = field(default_factory=lambda: TrackingBounds(1 / 160, 1 / 10))
    latency: LatencyModel = field(default_factory=LatencyModel)
    crypto_timing: CryptoTimingModel = field(default_factory=CryptoTimingModel)
    aggregates: DelayAggregates = field(default_factory=DelayAggregates)
    chain_mode: str = "cross"  # "cross" or "single"
    miners_per_subchain: int = 4
    relay_miners: int = 4
    main_miners: int = 4
    single_chain_miners: int = 32
    slot_ms: float = 60_000.0
    broadcast_interval_ms: float = 300.0
    mobility_prob: float = 0.1
    misbehavior_prob: float = 0.05
    false_report_prob: float = 0.02
    pool_capacity: int = 1200

    def __post_init__(self) -> None:
        if self.chain_mode not in ("cross", "single"):
            raise ValueError("chain_mode must be 'cross' or 'single'")
        if len(self.vmus_per_district) != self.n_districts:
            raise ValueError("vmus_per_district must match n_districts")


@dataclass(frozen=True)
class DistributionResult:
    vmu_reply: ProtocolMessage
    vt_reply: ProtocolMessage
    delay: DelayBreakdown
    minted_vmu: int
    minted_vt: int
    serving_lmm: str


@dataclass(frozen=True)
class ChangeEvent:
    time_ms: float
    district: int
    vmu_id: str
    tracking_probability: float
    old_pid_vmu: str | None
    new_pid_vmu: str
    new_pid_vt: str


@dataclass(frozen=True)
class RevocationOutcome:
    confirmed: bool
    accused_true_id: str | None
    blacklisted: bool
    reporter_restricted: bool
    delay: DelayBreakdown


class World:
    """All actors, chains, and logs of one simulation run.

    Owned by a single-threaded event loop; the simulated clock is
    ``now_ms``.  Deterministic given the seed.
    """

    def __init__(self, config: WorldConfig, seed: int = 0):
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.now_ms = 0.0
        self.engine = CryptoEngine(
            timing=config.crypto_timing, seed=seed, pool_capacity=config.pool_capacity
        )
        self.engine.register_root_authority("TA-0")
        self.ta = self._make_actor("TA-0", location=-1)

        base_consensus = ConsensusConfig()
        self.districts: list[District] = []
        notaries = []
        for j in range(config.n_districts):
            lmm_identity, lmm_keys, lmm_cert = self.engine.provision_entity(
                Role.LMM, "TA-0", entity_id=f"LMM-{j}"
            )
            es_identity, es_keys, es_cert = self.engine.provision_entity(
                Role.EDGE_SERVER, "TA-0", entity_id=f"ES-{j}"
            )
            notaries.append(lmm_identity.id)
        system = ChainSystem.build(
            config.n_districts,
            miners_per_subchain=config.miners_per_subchain,
            relay_miners=config.relay_miners,
            main_miners=config.main_miners,
            consensus=base_consensus,
            notaries=notaries,
        )
        self.main_chain = system.main
        self.relay_chain = system.relay
        self.single_chain = ChainState(
            chain_id="GC",
            tier=Tier.MAIN,
            consensus=ConsensusConfig(n_miners=config.single_chain_miners),
            miners=tuple(f"gc-{m}" for m in range(config.single_chain_miners)),
        )
        for j in range(config.n_districts):
            lmm = self._make_actor(f"LMM-{j}", location=j)
            es = self._make_actor(f"ES-{j}", location=j)
            es.links = {f"LMM-{j}": config.latency.es_to_lmm_ms, "TA-0": config.latency.es_to_ta_ms}
            self.districts.append(
                District(index=j, lmm=lmm, es=es, subchain=system.subchains[j])
            )

        self.vmus: dict[str, Actor] = {}
        self.vts: dict[str, Actor] = {}
        self.pair_of: dict[str, str] = {}  # vmu id <-> vt id, both directions
        self.blacklist = Blacklist()
        self.restricted_reporters: set[str] = set()
        self.misbehavior_truth: dict[str, bool] = {}

        self.event_log: list[tuple[float, str, str, str]] = []
        self.audit_log: list[dict] = []
        self.message_log: list[ProtocolMessage] = []
        self.delays: dict[str, list[DelayBreakdown]] = defaultdict(list)
        self._changes_at: dict[tuple[int, float], int] = defaultdict(int)

    # --- plumbing ---------------------------------------------------------

    def _make_actor(self, entity_id: str, location: int) -> Actor:
        entry = self.engine.registry[entity_id]
        return Actor(
            identity=entry.identity,
            key_pair=entry.key_pair,
            certificate=entry.certificate,
            location=location,
        )

    def log_event(self, actor_id: str, kind: str, detail: str = "") -> None:
        self.event_log.append((self.now_ms, actor_id, kind, detail))

    def log_audit(self, kind: str, **fields) -> None:
        self.audit_log.append({"time_ms": self.now_ms, "kind": kind, **fields})

    def _emit(self, message: ProtocolMessage, sender: Actor, receiver: Actor | None) -> None:
        if message.timestamp < sender.last_message_ts:
            raise ProtocolError("per-sender timestamps must be monotone")
        sender.last_message_ts = message.timestamp
        self.message_log.append(message)
        if receiver is not None:
            receiver.inbox.append(message)

    def district_of(self, actor: Actor) -> District:
        return self.districts[actor.location]

    def chain_verification_delay(self, mode: str) -> float:
        agg = self.config.aggregates
        return {
            "single": agg.chain_single_ms,
            "cross_local": agg.chain_cross_local_ms,
            "cross_district": agg.chain_cross_district_ms,
        }[mode]

    def _request_delay(self, mode: str) -> DelayBreakdown:
        agg = self.config.aggregates
        if mode == "single":
            return DelayBreakdown(
                crypto_ms=agg.crypto_single_ms,
                comm_ms=self.config.latency.round_trip_via_ta(),
                chain_ms=agg.chain_single_ms,
            )
        return DelayBreakdown(
            crypto_ms=agg.crypto_cross_ms,
            comm_ms=self.config.latency.round_trip_via_lmm(),
            chain_ms=self.chain_verification_delay(mode),
        )

    # --- registration -------------------------------------------------------

    def bootstrap_registration(self, j: int, vmu_id: str | None = None) -> tuple[Actor, Actor]:
        """Register a new user in district j: twin creation, keys, initial
        credentials, authority tracking entry, subchain record, and an
        encrypted tracking-list push to every district manager."""
        if vmu_id is not None and vmu_id in self.engine.registry:
            raise AlreadyRegistered(vmu_id)
        district = self.districts[j]
        vmu_identity, vmu_keys, vmu_cert = self.engine.provision_entity(
            Role.VMU, "TA-0", entity_id=vmu_id
        )
        vt_identity, vt_keys, vt_cert = self.engine.provision_entity(
            Role.VT, "TA-0", entity_id=vmu_identity.id.replace("VMU", "VT", 1)
        )
        lam = self.config.change_rate_per_min
        vmu = Actor(vmu_identity, vmu_keys, vmu_cert, location=j,
                    privacy=PrivacyProcess(lam, self.config.bounds))
        vt = Actor(vt_identity, vt_keys, vt_cert, location=j,
                   privacy=PrivacyProcess(lam, self.config.bounds))
        vmu.links = {district.es.identity.id: self.config.latency.vmu_to_es_ms}
        vt.links = {district.es.identity.id: 0.0}
        vmu.last_broadcast_ms = self.now_ms
        self.vmus[vmu_identity.id] = vmu
        self.vts[vt_identity.id] = vt
        self.pair_of[vmu_identity.id] = vt_identity.id
        self.pair_of[vt_identity.id] = vmu_identity.id
        district.vt_roster.add(vt_identity.id)

        vmu.credentials = self.engine.mint_pseudonym_batch(
            district.lmm.identity.id, vmu_identity, self.config.batch_w
        )
        vt.credentials = self.engine.mint_pseudonym_batch(
            district.lmm.identity.id, vt_identity, self.config.batch_u
        )

        self._commit_pseudonym_record(
            district, vmu, vt, vmu.credentials, vt.credentials, registration=True
        )
        self._commit_tracking_entry(district, vmu, vt, vmu.credentials, vt.credentials)
        self._push_tracking_lists(district, vmu)
        self.log_event(vmu_identity.id, "registered", f"district={j}")
        return vmu, vt

    def _record_chain(self, district: District) -> ChainState:
        return self.single_chain if self.config.chain_mode == "single" else district.subchain

    def _commit_pseudonym_record(
        self,
        district: District,
        vmu: Actor,
        vt: Actor,
        vmu_creds: list[PseudonymCredential],
        vt_creds: list[PseudonymCredential],
        registration: bool = False,
    ) -> None:
        """Cleartext pseudonym record for one batch; public keys and pids only."""
        record = {
            "vmu_public_key": vmu.key_pair.public_key.hex(),
            "vt_public_key": vt.key_pair.public_key.hex(),
            "pids_vmu": [c.pid for c in vmu_creds],
            "pids_vt": [c.pid for c in vt_creds],
            "issuer": district.lmm.identity.id,
            "status": "registered" if registration else "updated",
        }
        keys = (
            record["pids_vmu"]
            + record["pids_vt"]
            + [vmu.key_pair.public_key.hex(), vt.key_pair.public_key.hex()]
        )
        tx = Transaction(
            kind=TxKind.PSEUDONYM_REGISTRATION,
            body=json.dumps(record, sort_keys=True).encode(),
            submitter=district.es.identity.id,
            keys=tuple(keys),
            record=record,
        )
        append_block_pbft(self._record_chain(district), [tx], now_ms=self.now_ms)

    def _tracking_entry_tx(
        self,
        district: District,
        vmu: Actor,
        vt: Actor,
        vmu_creds: list[PseudonymCredential],
        vt_creds: list[PseudonymCredential],
    ) -> Transaction:
        entry = TrackingTableEntry(
            true_id=vmu.identity.id,
            vt_id=vt.identity.id,
            vmu_public_key=vmu.key_pair.public_key.hex(),
            vt_public_key=vt.key_pair.public_key.hex(),
            issuer_lmm=district.lmm.identity.id,
            pids_vmu=[c.pid for c in vmu_creds],
            pids_vt=[c.pid for c in vt_creds],
            timestamp=self.now_ms,
        )
        ciphertext, _ = self.engine.crypto_op(
            CryptoOp.ENCRYPT,
            public_key=self.engine.public_key_of("TA-0"),
            plaintext=entry.to_bytes(),
        )
        keys = tuple(entry.pids_vmu + entry.pids_vt)
        return Transaction(
            kind=TxKind.TRACKING_TABLE_UPDATE,
            body=ciphertext,
            submitter="TA-0",
            keys=keys,
            record={"ciphertext": ciphertext.hex()},
        )

    def _commit_tracking_entry(
        self,
        district: District,
        vmu: Actor,
        vt: Actor,
        vmu_creds: list[PseudonymCredential],
        vt_creds: list[PseudonymCredential],
    ) -> None:
        tx = self._tracking_entry_tx(district, vmu, vt, vmu_creds, vt_creds)
        chain = self.single_chain if self.config.chain_mode == "single" else self.main_chain
        append_block_pbft(chain, [tx], now_ms=self.now_ms)

    def _push_tracking_lists(self, origin: District, vmu: Actor) -> None:
        payload = json.dumps(
            {
                "vmu_public_key": vmu.key_pair.public_key.hex(),
                "issuer": origin.lmm.identity.id,
                "pids": [c.pid for c in vmu.credentials],
            },
            sort_keys=True,
        ).encode()
        for district in self.districts:
            ciphertext, _ = self.engine.crypto_op(
                CryptoOp.ENCRYPT,
                public_key=district.lmm.key_pair.public_key,
                plaintext=payload,
            )
            district.tracking_lists.append(ciphertext)
            message = ProtocolMessage(
                kind=MessageKind.TRACKING_LIST_PUSH,
                sender_pid="TA-0",
                body=ciphertext,
                timestamp=self.now_ms,
                signature=self.engine.provider.sign(self.ta.key_pair.private_key, ciphertext),
            )
            self._emit(message, self.ta, district.lmm)

    # --- basic operation ------------------------------------------------------

    def _emit_broadcast(self, vmu: Actor, t: float) -> ProtocolMessage:
        cred = vmu.active_credential
        if cred is None:
            raise NoActivePseudonym(vmu.identity.id)
        body = json.dumps({"district": vmu.location, "t": t}).encode()
        signature, _ = self.engine.crypto_op(
            CryptoOp.SIGN, private_key=cred.key_pair.private_key, message=body
        )
        message = ProtocolMessage(
            kind=MessageKind.SAFETY_BROADCAST,
            sender_pid=cred.pid,
            body=body,
            timestamp=t,
            signature=signature,
            certificate=cred.certificate,
            detail=f"district={vmu.location}",
        )
        district = self.district_of(vmu)
        self._emit(message, vmu, district.es)
        # receiver-side signature and certificate check, charged in simulated time
        self.engine.crypto_op(
            CryptoOp.VERIFY_SIG, public_key=cred.key_pair.public_key,
            signature=signature, message=body,
        )
        self.engine.crypto_op(
            CryptoOp.VERIFY_CERT, certificate=cred.certificate,
            issuer_public_key=self.engine.public_key_of(cred.issuer_lmm),
        )
        return message

    def safety_broadcast_tick(self, vmu: Actor, now_ms: float) -> list[ProtocolMessage]:
        """Emit every safety broadcast due in (last_broadcast, now]."""
        if vmu.active_credential is None:
            raise NoActivePseudonym(vmu.identity.id)
        interval = self.config.broadcast_interval_ms
        messages = []
        next_t = vmu.last_broadcast_ms + interval
        while next_t <= now_ms:
            messages.append(self._emit_broadcast(vmu, next_t))
            vmu.last_broadcast_ms = next_t
            next_t += interval
        return messages

    def synchronous_change(self, vmu: Actor, vt: Actor, now_ms: float) -> ChangeEvent:
        """Advance both pseudonym cursors at the same simulated instant.

        Atomic: if either side lacks an unused credential nothing changes
        and Exhausted is raised (the caller then runs a distribution
        protocol).
        """
        vmu_next = vmu.next_unused_index()
        vt_next = vt.next_unused_index()
        if vmu_next is None or vt_next is None:
            raise Exhausted(f"{vmu.identity.id}/{vt.identity.id}")
        old = vmu.active_credential
        old_pid = old.pid if old else None
        for actor, next_idx in ((vmu, vmu_next), (vt, vt_next)):
            active = actor.active_credential
            if active is not None:
                active.consume()
            actor.credentials[next_idx].activate()
            actor.cursor = next_idx
        p = float(self.rng.uniform(self.config.bounds.a, self.config.bounds.b))
        t_min = now_ms / 60_000.0
        vmu.privacy.record_change(t_min, p)
        vt.privacy.record_change(t_min, p)
        self._changes_at[(vmu.location, now_ms)] += 1
        self.log_event(vmu.identity.id, "pseudonym_change", f"district={vmu.location}")
        return ChangeEvent(
            time_ms=now_ms,
            district=vmu.location,
            vmu_id=vmu.identity.id,
            tracking_probability=p,
            old_pid_vmu=old_pid,
            new_pid_vmu=vmu.active_credential.pid,
            new_pid_vt=vt.active_credential.pid,
        )

    def adversary_success_probability(self, district: int, time_ms: float) -> float:
        """1/k for an adversary watching k co-located synchronized changes."""
        k = self._changes_at.get((district, time_ms), 0)
        if k == 0:
            raise ProtocolError("no change observed at that instant")
        return 1.0 / k

    # --- distribution ----------------------------------------------------------

    def _silent_drop(self, protocol: str, actor: Actor, reason: str) -> None:
        self.log_audit(
            "silent_drop", protocol=protocol, actor=actor.identity.id, reason=reason
        )

    def _issuer_of(self, actor: Actor) -> str:
        if not actor.credentials:
            raise ProtocolError(f"{actor.identity.id} holds no credentials")
        return actor.credentials[-1].issuer_lmm

    def _encrypted_request(self, actor: Actor, lmm: Actor, demand: float) -> ProtocolMessage:
        cred = actor.active_credential
        if cred is None:
            raise NoActivePseudonym(actor.identity.id)
        payload = json.dumps(
            {"demand": demand, "district": actor.location, "public_key": actor.key_pair.public_key.hex()}
        ).encode()
        ciphertext, _ = self.engine.crypto_op(
            CryptoOp.ENCRYPT, public_key=lmm.key_pair.public_key, plaintext=payload
        )
        signature = self.engine.provider.sign(cred.key_pair.private_key, ciphertext)
        return ProtocolMessage(
            kind=MessageKind.PSEU_REQUEST,
            sender_pid=cred.pid,
            body=ciphertext,
            timestamp=self.now_ms,
            signature=signature,
            certificate=cred.certificate,
            detail=f"demand={demand}",
        )

    def _distribute(
        self, district: District, vmu: Actor, vt: Actor, demand: int, mode: str
    ) -> DistributionResult:
        """Shared tail of both distribution protocols: mint, reply, commit."""
        lmm_id = district.lmm.identity.id
        # serving again makes this district the active record holder
        district.frozen.discard(vmu.identity.id)
        district.frozen.discard(vt.identity.id)
        new_vmu = self.engine.mint_pseudonym_batch(lmm_id, vmu.identity, demand)
        new_vt = self.engine.mint_pseudonym_batch(lmm_id, vt.identity, demand)
        vmu.credentials.extend(new_vmu)
        vt.credentials.extend(new_vt)

        replies = []
        for actor, batch in ((vmu, new_vmu), (vt, new_vt)):
            payload = json.dumps({"pids": [c.pid for c in batch]}).encode()
            ciphertext, _ = self.engine.crypto_op(
                CryptoOp.ENCRYPT,
                public_key=actor.active_credential.key_pair.public_key,
                plaintext=payload,
            )
            signature = self.engine.provider.sign(district.lmm.key_pair.private_key, ciphertext)
            reply = ProtocolMessage(
                kind=MessageKind.PSEU_REPLY,
                sender_pid=lmm_id,
                body=ciphertext,
                timestamp=self.now_ms,
                signature=signature,
            )
            self._emit(reply, district.lmm, actor)
            replies.append(reply)

        self._commit_pseudonym_record(district, vmu, vt, new_vmu, new_vt)
        if self.config.chain_mode == "cross":
            tracking_tx = self._tracking_entry_tx(district, vmu, vt, new_vmu, new_vt)
            cross_chain_transaction(
                CrossChainKind.REGISTER,
                district.subchain,
                self.main_chain,
                self.relay_chain,
                tracking_tx,
                now_ms=self.now_ms,
            )
        else:
            self._commit_tracking_entry(district, vmu, vt, new_vmu, new_vt)

        district.demand_by_slot[self._slot_index()].append(float(demand))
        delay = self._request_delay(mode)
        self.delays["local" if mode != "cross_district" else "cross_district"].append(delay)
        self.log_event(
            vmu.identity.id,
            "distribution",
            f"mode={mode} lmm={lmm_id} delay_ms={delay.total_ms:.3f}",
        )
        return DistributionResult(
            vmu_reply=replies[0],
            vt_reply=replies[1],
            delay=delay,
            minted_vmu=len(new_vmu),
            minted_vt=len(new_vt),
            serving_lmm=lmm_id,
        )

    def _slot_index(self) -> int:
        return int(self.now_ms // self.config.slot_ms)

    def local_distribution(self, vmu: Actor, vt: Actor, demand: int) -> DistributionResult | None:
        """Serve a request inside the issuer's own district.

        Returns None (with an audit event) when the request is silently
        dropped; raises LocationMismatch when the pair has migrated and
        the cross-district protocol applies instead.
        """
        district = self.district_of(vmu)
        lmm = district.lmm
        if vmu.identity.id in self.blacklist or vt.identity.id in self.blacklist:
            self._silent_drop("local_distribution", vmu, "blacklisted requester")
            return None
        if self._issuer_of(vmu) != lmm.identity.id:
            raise LocationMismatch(
                f"{vmu.identity.id} last served by {self._issuer_of(vmu)}, now in district {district.index}"
            )
        for requester in (vmu, vt):
            request = self._encrypted_request(requester, lmm, demand)
            self._emit(request, requester, lmm)
            self.engine.crypto_op(
                CryptoOp.DECRYPT, private_key=lmm.key_pair.private_key, ciphertext=request.body
            )
        record_chain = self._record_chain(district)
        known = (
            query_record(record_chain, vmu.active_credential.pid) is not None
            and query_record(record_chain, vt.active_credential.pid) is not None
            and query_record(record_chain, vmu.key_pair.public_key.hex()) is not None
        )
        if not known or vmu.identity.id in district.frozen:
            self._silent_drop(
                "local_distribution",
                vmu,
                "frozen record" if known else "identities not on subchain",
            )
            return None
        mode = "single" if self.config.chain_mode == "single" else "cross_local"
        return self._distribute(district, vmu, vt, demand, mode)

    def cross_district_distribution(self, vmu: Actor, vt: Actor, demand: int | None = None) -> DistributionResult | None:
        """Serve a migrated pair: verify their records on the origin
        subchain through the relay, freeze them there, then distribute
        from the serving district."""
        demand = demand if demand is not None else self.config.batch_w
        district = self.district_of(vmu)
        lmm = district.lmm
        if vmu.identity.id in self.blacklist or vt.identity.id in self.blacklist:
            self._silent_drop("cross_district_distribution", vmu, "blacklisted requester")
            return None
        if vmu.active_credential is None or vt.active_credential is None:
            raise NoActivePseudonym(vmu.identity.id)
        local_chain = self._record_chain(district)
        locally_known = (
            query_record(local_chain, vmu.active_credential.pid) is not None
            or query_record(local_chain, vt.active_credential.pid) is not None
        )
        origin_lmm = self._issuer_of(vmu)
        if locally_known or origin_lmm == lmm.identity.id:
            self._silent_drop(
                "cross_district_distribution", vmu, "identities unexpectedly found locally"
            )
            return None
        origin = next(d for d in self.districts if d.lmm.identity.id == origin_lmm)

        for requester in (vmu, vt):
            request = self._encrypted_request(requester, lmm, demand)
            self._emit(request, requester, lmm)
            self.engine.crypto_op(
                CryptoOp.DECRYPT, private_key=lmm.key_pair.private_key, ciphertext=request.body
            )

        query_tx = Transaction(
            kind=TxKind.CROSS_CHAIN_REQUEST,
            body=json.dumps({"pids": [vmu.active_credential.pid, vt.active_credential.pid]}).encode(),
            submitter=lmm.identity.id,
        )
        outcome, _ = cross_chain_transaction(
            CrossChainKind.VERIFY,
            district.subchain,
            origin.subchain,
            self.relay_chain,
            query_tx,
            now_ms=self.now_ms,
            verify_keys=(vmu.active_credential.pid, vt.active_credential.pid),
        )
        if not outcome.found:
            self.log_audit(
                "abnormal_condition",
                protocol="cross_district_distribution",
                actor=vmu.identity.id,
                reported_to="TA-0",
                reason="origin subchain has no record of the claimed identities",
            )
            self.log_event(lmm.identity.id, "cross_verify_failed", vmu.identity.id)
            return None

        origin.frozen.add(vmu.identity.id)
        origin.frozen.add(vt.identity.id)
        self.log_audit(
            "record_frozen",
            district=origin.index,
            vmu=vmu.identity.id,
            reason="migration confirmed; origin stops updating",
        )
        return self._distribute(district, vmu, vt, demand, "cross_district")

    # --- revocation -------------------------------------------------------------

    def dual_revocation(
        self, reporter: Actor, accused_pid: str, misbehavior_type: str
    ) -> RevocationOutcome | None:
        """Report-driven revocation of a pair's whole pseudonym sets.

        Confirmed reports blacklist the accused pair, reveal the true
        identity to every edge server, revoke all credentials, and remove
        the twin from its district; unconfirmed ones restrict the
        reporter instead.
        """
        district = self.district_of(reporter)
        lmm = district.lmm
        reporter_id = reporter.identity.id
        if reporter_id in self.blacklist or reporter_id in self.restricted_reporters:
            self._silent_drop("dual_revocation", reporter, "reporter not eligible")
            return None
        cred = reporter.active_credential
        if cred is None or not self.engine.verify_credential(
            cred, {self.engine.public_key_of(cred.issuer_lmm)}
        ):
            self._silent_drop("dual_revocation", reporter, "invalid reporter credential")
            return None

        payload = json.dumps({"accused_pid": accused_pid, "type": misbehavior_type}).encode()
        ciphertext, _ = self.engine.crypto_op(
            CryptoOp.ENCRYPT, public_key=lmm.key_pair.public_key, plaintext=payload
        )
        report = ProtocolMessage(
            kind=MessageKind.REPORT,
            sender_pid=cred.pid,
            body=ciphertext,
            timestamp=self.now_ms,
            signature=self.engine.provider.sign(cred.key_pair.private_key, ciphertext),
            certificate=cred.certificate,
            detail=f"type={misbehavior_type}",
        )
        self._emit(report, reporter, lmm)
        self.engine.crypto_op(
            CryptoOp.DECRYPT, private_key=lmm.key_pair.private_key, ciphertext=report.body
        )
        if query_record(self._record_chain(district), cred.pid) is None:
            self._silent_drop("dual_revocation", reporter, "reporter unknown on subchain")
            return None

        # report block on the local record chain, then carried to the authority
        ta_ciphertext, _ = self.engine.crypto_op(
            CryptoOp.ENCRYPT,
            public_key=self.engine.public_key_of("TA-0"),
            plaintext=payload,
        )
        report_tx = Transaction(
            kind=TxKind.REPORT,
            body=ta_ciphertext,
            submitter=district.es.identity.id,
            keys=(f"report:{accused_pid}",),
            record={"ciphertext": ta_ciphertext.hex()},
        )
        append_block_pbft(self._record_chain(district), [report_tx], now_ms=self.now_ms)
        if self.config.chain_mode == "cross":
            cross_chain_transaction(
                CrossChainKind.REVOKE,
                district.subchain,
                self.main_chain,
                self.relay_chain,
                Transaction(
                    kind=TxKind.REPORT,
                    body=ta_ciphertext,
                    submitter=district.es.identity.id,
                    keys=(f"mc-report:{accused_pid}",),
                    record={"ciphertext": ta_ciphertext.hex()},
                ),
                now_ms=self.now_ms,
            )
        self.engine.crypto_op(
            CryptoOp.DECRYPT,
            private_key=self.engine.registry["TA-0"].key_pair.private_key,
            ciphertext=ta_ciphertext,
        )

        accused_id = self.engine.issuance.get(accused_pid)
        if accused_id is None:
            self._silent_drop("dual_revocation", reporter, "accused pseudonym unknown to authority")
            return None

        mode = "single" if self.config.chain_mode == "single" else "cross_local"
        delay = self._request_delay(mode)
        self.delays["revocation"].append(delay)
        confirmed = bool(self.misbehavior_truth.get(accused_id, False))
        if not confirmed:
            self.restricted_reporters.add(reporter_id)
            self.log_audit(
                "reporter_restricted", reporter=reporter_id, accused_pid=accused_pid
            )
            return RevocationOutcome(
                confirmed=False,
                accused_true_id=None,
                blacklisted=False,
                reporter_restricted=True,
                delay=delay,
            )

        vmu_id = accused_id if accused_id in self.vmus else self.pair_of[accused_id]
        vt_id = self.pair_of[vmu_id]
        vmu, vt = self.vmus[vmu_id], self.vts[vt_id]
        for actor in (vmu, vt):
            for credential in actor.credentials:
                credential.revoke()
        self.blacklist.add(vmu_id, self.now_ms, misbehavior_type)
        self.blacklist.add(vt_id, self.now_ms, misbehavior_type)
        for d in self.districts:
            d.revealed_ids.add(vmu_id)
        home = self.district_of(vt)
        home.vt_roster.discard(vt_id)
        revocation_record = {
            "pids": [c.pid for c in vmu.credentials + vt.credentials],
            "status": "Revoked",
        }
        marker = Transaction(
            kind=TxKind.REPORT,
            body=json.dumps(revocation_record, sort_keys=True).encode(),
            submitter="TA-0",
            keys=tuple(c.pid for c in vmu.credentials + vt.credentials),
            record={"status": "Revoked"},
        )
        append_block_pbft(self._record_chain(home), [marker], now_ms=self.now_ms)
        notice = ProtocolMessage(
            kind=MessageKind.REVOCATION_NOTICE,
            sender_pid="TA-0",
            body=json.dumps(revocation_record, sort_keys=True).encode(),
            timestamp=self.now_ms,
            signature=self.engine.provider.sign(
                self.engine.registry["TA-0"].key_pair.private_key, b"revocation"
            ),
        )
        self._emit(notice, self.ta, home.es)
        self.log_audit(
            "revocation_confirmed",
            accused=vmu_id,
            twin=vt_id,
            reporter=reporter_id,
            type=misbehavior_type,
        )
        self.log_event(vmu_id, "revoked", f"type={misbehavior_type}")
        return RevocationOutcome(
            confirmed=True,
            accused_true_id=vmu_id,
            blacklisted=True,
            reporter_restricted=False,
            delay=delay,
        )

    # --- demand -----------------------------------------------------------------

    def aggregate_demand(self, district: District, slot: int) -> float:
        """Total pseudonym demand received by a district manager in a slot."""
        return float(sum(district.demand_by_slot.get(slot, [])))

    # --- conditional traceability -------------------------------------------------

    def resolve_true_identity(self, pid: str, viewer_id: str) -> str:
        """Map a pseudonym to its owner.  Works only for the authority:
        the mapping exists solely in encrypted main-chain tracking rows."""
        viewer = self.engine.registry[viewer_id]
        if viewer.identity.role is Role.TA:
            chains = [self.main_chain, self.single_chain]
        else:
            accessible = [d.subchain for d in self.districts if d.lmm.identity.id == viewer_id
                          or d.es.identity.id == viewer_id]
            if not accessible and viewer_id in self.vmus:
                accessible = [self.district_of(self.vmus[viewer_id]).subchain]
            if not accessible and viewer_id in self.vts:
                accessible = [self.district_of(self.vts[viewer_id]).subchain]
            chains = accessible
        for chain in chains:
            record = query_record(chain, pid)
            if record is None:
                continue
            if "ciphertext" in record:
                try:
                    plaintext = self.engine.provider.decrypt(
                        viewer.key_pair.private_key, bytes.fromhex(record["ciphertext"])
                    )
                except DecryptionFailed:
                    continue
                entry = TrackingTableEntry.from_bytes(plaintext)
                return entry.vt_id if pid in entry.pids_vt else entry.true_id
            if "true_id" in record:
                return record["true_id"]
        raise TraceabilityError(f"{viewer_id} cannot resolve {pid}")
