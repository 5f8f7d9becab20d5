"""Long-run lifecycle scenario driver and its property audit.

Runs registration, periodic safety broadcasting, exponentially timed
synchronized pseudonym changes, distribution on exhaustion, mobility
across a ring of districts, and injected misbehavior, all on one
simulated clock.  The audit re-derives the security properties from the
run's raw logs rather than trusting protocol return values.

Safety broadcasts are count-exact but materialized sparsely: the first
broadcast of each actor-slot goes through the full sign/verify/audit
path, the rest of the slot's cadence is accounted in the event log.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .crypto import CredentialStatus
from .protocols import (
    Actor,
    Exhausted,
    LocationMismatch,
    TraceabilityError,
    World,
    WorldConfig,
)


@dataclass
class ScenarioResult:
    world: World
    n_slots: int
    demand: dict[tuple[int, int], float]  # (district, slot) -> total demand
    broadcasts_total: int
    changes_total: int
    injected_misbehaviors: int
    injected_false_reports: int
    stalled_pairs: int

    def delay_summary(self) -> dict[str, dict[str, float]]:
        summary = {}
        for protocol, breakdowns in self.world.delays.items():
            totals = [b.total_ms for b in breakdowns]
            if totals:
                summary[protocol] = {
                    "count": float(len(totals)),
                    "mean_ms": float(np.mean(totals)),
                    "min_ms": float(np.min(totals)),
                    "max_ms": float(np.max(totals)),
                }
        return summary


def run_scenario(config: WorldConfig, n_slots: int, seed: int = 0) -> ScenarioResult:
    world = World(config, seed=seed)
    rng = world.rng

    pairs: list[tuple[Actor, Actor]] = []
    for j, count in enumerate(config.vmus_per_district):
        for _ in range(count):
            pairs.append(world.bootstrap_registration(j))

    # adopt the first pseudonym of each pair at t=0
    for vmu, vt in pairs:
        world.synchronous_change(vmu, vt, 0.0)

    lam_ms = config.change_rate_per_min / 60_000.0
    change_queue: list[tuple[float, int]] = [
        (float(rng.exponential(1.0 / lam_ms)), i) for i in range(len(pairs))
    ]
    heapq.heapify(change_queue)

    broadcasts_total = 0
    changes_total = 0
    injected = 0
    false_reports = 0
    stalled = 0

    for slot in range(n_slots):
        slot_start = slot * config.slot_ms
        slot_end = slot_start + config.slot_ms
        world.now_ms = slot_start

        # ring mobility: twin follows its user to an adjacent district
        for vmu, vt in pairs:
            if vmu.identity.id in world.blacklist:
                continue
            if rng.random() < config.mobility_prob:
                step = 1 if rng.random() < 0.5 else -1
                old = world.districts[vmu.location]
                new_index = (vmu.location + step) % config.n_districts
                old.vt_roster.discard(vt.identity.id)
                vmu.location = new_index
                vt.location = new_index
                world.districts[new_index].vt_roster.add(vt.identity.id)
                world.log_event(vmu.identity.id, "migration", f"{old.index}->{new_index}")

        # synchronized changes, processed in global time order
        while change_queue and change_queue[0][0] < slot_end:
            t, i = heapq.heappop(change_queue)
            vmu, vt = pairs[i]
            if vmu.identity.id in world.blacklist:
                continue
            world.now_ms = t
            try:
                world.synchronous_change(vmu, vt, t)
            except Exhausted:
                if not _request_pseudonyms(world, vmu, vt):
                    stalled += 1
                    continue
                world.synchronous_change(vmu, vt, t)
            changes_total += 1
            heapq.heappush(change_queue, (t + float(rng.exponential(1.0 / lam_ms)), i))

        # count-exact broadcasting; one message per actor-slot materialized,
        # at the last due instant so per-sender timestamps stay monotone
        world.now_ms = slot_end
        for vmu, _ in pairs:
            if vmu.identity.id in world.blacklist or vmu.active_credential is None:
                continue
            interval = config.broadcast_interval_ms
            due = int((slot_end - vmu.last_broadcast_ms) // interval)
            if due <= 0:
                continue
            vmu.last_broadcast_ms += due * interval
            world._emit_broadcast(vmu, vmu.last_broadcast_ms)
            broadcasts_total += due
            world.log_event(vmu.identity.id, "broadcast_batch", f"count={due}")

        # injected misbehavior: ground truth set, then reported
        world.now_ms = slot_end
        if rng.random() < config.misbehavior_prob:
            event = _inject_report(world, pairs, rng, truthful=True)
            injected += 1 if event else 0
        if rng.random() < config.false_report_prob:
            event = _inject_report(world, pairs, rng, truthful=False)
            false_reports += 1 if event else 0

    world.now_ms = n_slots * config.slot_ms
    demand = {
        (district.index, slot): world.aggregate_demand(district, slot)
        for district in world.districts
        for slot in range(n_slots)
    }
    return ScenarioResult(
        world=world,
        n_slots=n_slots,
        demand=demand,
        broadcasts_total=broadcasts_total,
        changes_total=changes_total,
        injected_misbehaviors=injected,
        injected_false_reports=false_reports,
        stalled_pairs=stalled,
    )


def _request_pseudonyms(world: World, vmu: Actor, vt: Actor) -> bool:
    demand = world.config.batch_w
    try:
        result = world.local_distribution(vmu, vt, demand)
    except LocationMismatch:
        result = world.cross_district_distribution(vmu, vt, demand)
    return result is not None


def _eligible_pairs(world: World, pairs) -> list:
    return [
        (vmu, vt)
        for vmu, vt in pairs
        if vmu.identity.id not in world.blacklist and vmu.active_credential is not None
    ]


def _inject_report(world: World, pairs, rng: np.random.Generator, truthful: bool) -> bool:
    candidates = _eligible_pairs(world, pairs)
    reporters = [
        (vmu, vt)
        for vmu, vt in candidates
        if vmu.identity.id not in world.restricted_reporters
    ]
    if len(candidates) < 2 or not reporters:
        return False
    accused_vmu, _ = candidates[int(rng.integers(len(candidates)))]
    reporter_vmu, _ = reporters[int(rng.integers(len(reporters)))]
    if reporter_vmu.identity.id == accused_vmu.identity.id:
        return False
    world.misbehavior_truth[accused_vmu.identity.id] = truthful
    outcome = world.dual_revocation(
        reporter_vmu, accused_vmu.active_credential.pid, "fake-traffic-report"
    )
    return outcome is not None and outcome.confirmed == truthful


# --- property audit ------------------------------------------------------------


@dataclass
class AuditReport:
    checks: dict[str, bool] = field(default_factory=dict)
    details: dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def record(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks[name] = bool(ok)
        self.details[name] = detail


def audit_scenario(result: ScenarioResult) -> AuditReport:
    """Re-derive the security properties from the run's raw logs."""
    world = result.world
    report = AuditReport()

    # anonymity: no user/twin true identity in any emitted cleartext field
    true_ids = set(world.vmus) | set(world.vts)
    blob = "\x1f".join(
        f for msg in world.message_log for f in msg.cleartext_fields()
    )
    leaks = sorted(tid for tid in true_ids if tid in blob)
    report.record(
        "anonymity_no_true_id_leak",
        not leaks,
        f"{len(world.message_log)} messages scanned, leaks: {leaks[:5]}",
    )

    # atomic dual change: both sides of every pair advanced in lockstep
    mismatched = []
    for vmu_id, vmu in world.vmus.items():
        vt = world.vts[world.pair_of[vmu_id]]
        vmu_times = [t for t, _ in vmu.privacy.events]
        vt_times = [t for t, _ in vt.privacy.events]
        if vmu_times != vt_times:
            mismatched.append(vmu_id)
    report.record("atomic_dual_change", not mismatched, f"mismatched pairs: {mismatched[:5]}")

    # conservation: every minted credential accounted for, by issuer and status
    by_issuer: dict[str, dict[CredentialStatus, int]] = {}
    for actor in list(world.vmus.values()) + list(world.vts.values()):
        for cred in actor.credentials:
            by_issuer.setdefault(cred.issuer_lmm, {s: 0 for s in CredentialStatus})
            by_issuer[cred.issuer_lmm][cred.status] += 1
    conserved = True
    detail = []
    for issuer, minted in world.engine.minted_count.items():
        counts = by_issuer.get(issuer, {s: 0 for s in CredentialStatus})
        total = sum(counts.values())
        if total != minted:
            conserved = False
        detail.append(f"{issuer}: minted={minted} held={total}")
    report.record("credential_conservation", conserved, "; ".join(detail))

    # conditional traceability: authority resolves, nobody else can
    sample_pids = list(world.engine.issuance)[:: max(1, len(world.engine.issuance) // 40)]
    ta_ok = all(
        world.resolve_true_identity(pid, "TA-0") == world.engine.issuance[pid]
        for pid in sample_pids
    )
    others = [d.lmm.identity.id for d in world.districts] + [
        d.es.identity.id for d in world.districts
    ]
    others += list(world.vmus)[:3]
    blocked = True
    for viewer in others:
        for pid in sample_pids[:5]:
            try:
                world.resolve_true_identity(pid, viewer)
                blocked = False
            except TraceabilityError:
                pass
    report.record(
        "conditional_traceability",
        ta_ok and blocked,
        f"{len(sample_pids)} pids sampled; authority={ta_ok}, others_blocked={blocked}",
    )

    # revocation / blacklist conservation
    expected_blacklisted = 2 * result.injected_misbehaviors
    roster_clean = all(
        vt_id not in world.blacklist
        for district in world.districts
        for vt_id in district.vt_roster
    )
    revoked_ok = True
    for entry in world.blacklist.entries:
        actor = world.vmus.get(entry.true_id) or world.vts.get(entry.true_id)
        if any(c.status is not CredentialStatus.REVOKED for c in actor.credentials):
            revoked_ok = False
    report.record(
        "revocation_blacklist_conservation",
        len(world.blacklist.entries) == expected_blacklisted and roster_clean and revoked_ok,
        f"blacklist={len(world.blacklist.entries)} expected={expected_blacklisted} "
        f"roster_clean={roster_clean} all_revoked={revoked_ok}",
    )

    # silent drops carry audit events and never a reply
    drops = [a for a in world.audit_log if a["kind"] == "silent_drop"]
    report.record(
        "silent_drop_audited",
        all("reason" in a and "actor" in a for a in drops),
        f"{len(drops)} silent drops logged",
    )

    # delay additivity is exact for every recorded breakdown
    additive = all(
        b.total_ms == b.crypto_ms + b.comm_ms + b.chain_ms
        for breakdowns in world.delays.values()
        for b in breakdowns
    )
    report.record("delay_additivity", additive)

    return report


# --- exports --------------------------------------------------------------------


def export_event_csv(result: ScenarioResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["time_ms", "actor", "event_kind", "detail"])
    for time_ms, actor, kind, detail in result.world.event_log:
        writer.writerow([f"{time_ms:.3f}", actor, kind, detail])
    return buf.getvalue()


def export_audit_jsonl(result: ScenarioResult) -> str:
    lines = [json.dumps(entry, sort_keys=True) for entry in result.world.audit_log]
    return "\n".join(lines) + "\n" if lines else ""
