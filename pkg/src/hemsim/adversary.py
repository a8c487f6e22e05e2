"""Adversary tiers, capabilities, and the scripted attack inventory.

Each named attack against the four mechanisms is a self-contained scenario:
it builds a small world from a seed, runs the adversary's script, and
reports whether the adversary's goal predicate held and whether any defense
flagged the attempt. The registry also records the expected outcome either
way, because the claims are falsifiable in both directions: defenses must
hold where they are designed to hold, and attacks the design concedes
(key-extraction relay, workload shaping) must actually succeed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from . import canon
from .attest import (
    DeviceStatus,
    WorkloadLabel,
    classification_flip_point,
    classify,
    emit_snapshot,
    fragment,
    generate_trace,
    inject_noise,
    verify_chain,
)
from .chipmodel import (
    MeterResource,
    Registry,
    Throttle,
    extract_signing_oracle,
    provision_chip,
)
from .cluster import (
    ClusterNode,
    DataEvent,
    HandshakeReject,
    PodRegime,
    SessionAllocator,
    apply_cap_update,
    bridge_transfer,
    detect_cross_pod_coupling,
    handshake,
    issue_cap_policy,
    issue_manifest,
)
from .geoloc import (
    Calibration,
    GridSpec,
    Landmark,
    challenge_round,
    delay_to_distance,
    estimate_bft,
    estimate_cbg,
    synthesize_round,
)
from .licensing import (
    License,
    RejectReason,
    install,
    make_issuer,
    metered_consume,
)
from .netsim import GeoPoint, LatencyModel, Network, Node, Simulator


class Capability(Enum):
    COUNTERFEIT_LICENSE = "counterfeit_license"
    REPLAY_LICENSE = "replay_license"
    CROSS_DEVICE_LICENSE = "cross_device_license"
    POWER_CUT_TIMING = "power_cut_timing"
    COVERT_TAMPER = "covert_tamper"
    KEY_EXTRACTION = "key_extraction"
    PCIE_BRIDGE = "pcie_bridge"
    GRADIENT_SMUGGLE = "gradient_smuggle"
    DELAY_SLOWDOWN = "delay_slowdown"
    DELAY_SPEEDUP = "delay_speedup"
    COMPROMISE_LANDMARKS = "compromise_landmarks"
    DDOS_LANDMARKS = "ddos_landmarks"
    FIRMWARE_MOD = "firmware_mod"


class Tier(Enum):
    MINIMAL = "minimal"
    COVERT = "covert"
    OPEN = "open"


# Default tier -> capability mapping. Config, not claim: the taxonomy orders
# attacker budgets, and the nesting below must stay strict.
TIER_CAPABILITIES: dict[Tier, frozenset[Capability]] = {
    Tier.MINIMAL: frozenset({
        Capability.COUNTERFEIT_LICENSE,
        Capability.REPLAY_LICENSE,
        Capability.CROSS_DEVICE_LICENSE,
        Capability.DELAY_SLOWDOWN,
    }),
}
TIER_CAPABILITIES[Tier.COVERT] = TIER_CAPABILITIES[Tier.MINIMAL] | frozenset({
    Capability.POWER_CUT_TIMING,
    Capability.COVERT_TAMPER,
    Capability.PCIE_BRIDGE,
    Capability.GRADIENT_SMUGGLE,
    Capability.DELAY_SPEEDUP,
    Capability.COMPROMISE_LANDMARKS,
    Capability.DDOS_LANDMARKS,
})
TIER_CAPABILITIES[Tier.OPEN] = TIER_CAPABILITIES[Tier.COVERT] | frozenset({
    Capability.KEY_EXTRACTION,
    Capability.FIRMWARE_MOD,
})


@dataclass(frozen=True)
class AdversaryProfile:
    tier: Tier
    capabilities: frozenset[Capability]
    latency_factor: float = 0.5          # for delay_speedup
    compromised_landmarks: int = 2       # for compromise_landmarks
    landmark_positions_known: bool = False

    def has(self, capability: Capability) -> bool:
        return capability in self.capabilities


def profile_for_tier(tier: Tier, **overrides) -> AdversaryProfile:
    return AdversaryProfile(tier=tier, capabilities=TIER_CAPABILITIES[tier], **overrides)


class ScenarioConfigError(ValueError):
    """The scripted action needs a capability the profile does not grant."""


@dataclass(frozen=True)
class AttackOutcome:
    attack: str
    mechanism: str
    succeeded: bool
    detected: bool
    evidence: dict


AttackFn = Callable[[AdversaryProfile, random.Random, dict], AttackOutcome]


@dataclass(frozen=True)
class AttackSpec:
    name: str
    mechanism: str
    required: frozenset[Capability]
    expected_succeeded: bool
    expected_detected: bool
    run_fn: AttackFn = field(repr=False, compare=False, default=None)


# The named-attack inventory, grouped by the mechanism each attack targets.
# The test suite fails if any row here lacks a registered scenario.
ATTACK_INVENTORY: dict[str, tuple[str, ...]] = {
    "accounting": (
        "accounting_meter_tamper",
        "accounting_noise_injection",
        "accounting_fragmentation",
    ),
    "cluster": (
        "cluster_pod_firmware_mod",
        "cluster_cap_forge",
        "cluster_pcie_bridge",
        "cluster_gradient_smuggle",
    ),
    "geoloc": (
        "geoloc_delay_slowdown",
        "geoloc_delay_speedup",
        "geoloc_landmark_compromise",
        "geoloc_landmark_ddos",
        "geoloc_key_extraction_relay",
    ),
    "licensing": (
        "licensing_counterfeit",
        "licensing_replay",
        "licensing_cross_device",
        "licensing_meter_rollback",
        "licensing_power_cut_rollback",
        "licensing_throttle_bypass",
    ),
}


# -- world helpers ---------------------------------------------------------------


def _licensed_chip(rng: random.Random, quota: int):
    issuer = make_issuer(rng)
    chip = provision_chip(rng, frozenset({issuer.public_key}))
    lic = issuer.issue(chip.identity.device_id, {MeterResource.CLOCK_CYCLES: quota})
    assert install(chip, lic, now_ms=0.0).accepted
    return issuer, chip, lic


def _landmark_ring(n: int, overhead: float = 0.5, center=(10.0, 10.0),
                   radius_deg: float = 9.0) -> list[Landmark]:
    """Fixed dispersed geometry so each matrix row is seed-robust."""
    clat, clon = center
    return [
        Landmark(
            f"lm{i}",
            GeoPoint(clat + radius_deg * math.sin(2 * math.pi * i / n),
                     clon + radius_deg * math.cos(2 * math.pi * i / n)),
            calibration=Calibration(fixed_overhead_ms=overhead),
        )
        for i in range(n)
    ]


_GRID = GridSpec(lat_min=-5.0, lat_max=25.0, lon_min=-5.0, lon_max=25.0, resolution_deg=0.25)


# -- licensing attacks -------------------------------------------------------------


def _attack_counterfeit(profile, rng, params) -> AttackOutcome:
    trials = params.get("trials", 2000)
    issuer, chip, genuine = _licensed_chip(rng, quota=10**6)
    rogue = make_issuer(rng)
    acceptances = 0
    for _ in range(trials):
        kind = rng.randrange(3)
        if kind == 0:
            forged = rogue.issue(chip.identity.device_id, {MeterResource.CLOCK_CYCLES: 10**9})
        elif kind == 1:
            sig = bytearray(genuine.issuer_signature)
            bit = rng.randrange(len(sig) * 8)
            sig[bit // 8] ^= 1 << (bit % 8)
            forged = License(genuine.license_id + 1, genuine.device_id, genuine.quotas,
                             genuine.not_after, bytes(sig))
        else:
            forged = License(
                license_id=genuine.license_id + 1 + rng.randrange(100),
                device_id=genuine.device_id,
                quotas=((MeterResource.CLOCK_CYCLES, rng.randrange(10**9)),),
                not_after=None,
                issuer_signature=rng.randbytes(64),
            )
        if install(chip, forged, now_ms=1.0).accepted:
            acceptances += 1
    return AttackOutcome(
        "licensing_counterfeit", "licensing",
        succeeded=acceptances > 0,
        detected=acceptances < trials,  # rejections are visible events
        evidence={"trials": trials, "acceptances": acceptances},
    )


def _attack_replay(profile, rng, params) -> AttackOutcome:
    issuer, chip, lic = _licensed_chip(rng, quota=1000)
    metered_consume(chip, MeterResource.CLOCK_CYCLES, 1000)  # exhaust the grant
    rejections = []
    for _ in range(50):
        rejections.append(install(chip, lic, now_ms=chip.clock_ms).reason)
    return AttackOutcome(
        "licensing_replay", "licensing",
        succeeded=any(r is None for r in rejections),
        detected=all(r is RejectReason.STALE_ID for r in rejections),
        evidence={"attempts": len(rejections)},
    )


def _attack_cross_device(profile, rng, params) -> AttackOutcome:
    issuer = make_issuer(rng)
    chip_a = provision_chip(rng, frozenset({issuer.public_key}))
    chip_b = provision_chip(rng, frozenset({issuer.public_key}))
    lic_a = issuer.issue(chip_a.identity.device_id, {MeterResource.CLOCK_CYCLES: 10**6})
    result = install(chip_b, lic_a, now_ms=0.0)
    return AttackOutcome(
        "licensing_cross_device", "licensing",
        succeeded=result.accepted,
        detected=result.reason is RejectReason.WRONG_DEVICE,
        evidence={"reason": result.reason.value if result.reason else None},
    )


def _attack_meter_rollback_licensing(profile, rng, params) -> AttackOutcome:
    if not profile.has(Capability.COVERT_TAMPER):
        raise ScenarioConfigError("licensing_meter_rollback needs covert_tamper")
    quota = 10_000
    issuer, chip, lic = _licensed_chip(rng, quota=quota)
    registry = Registry()
    registry.enroll(chip)
    snapshots = [emit_snapshot(chip, 0)]
    true_consumed = 0
    # Burn most of the quota, roll the meter back covertly, keep consuming.
    for seq in range(1, 4):
        amount = 3000
        if metered_consume(chip, MeterResource.CLOCK_CYCLES, amount).applied:
            true_consumed += amount
        snapshots.append(emit_snapshot(chip, seq))
    chip.tamper_event("meter_rollback", covert=True,
                      resource=MeterResource.CLOCK_CYCLES, amount=8000)
    snapshots.append(emit_snapshot(chip, 4))
    overdraft = 0
    for seq in range(5, 8):
        amount = 3000
        if metered_consume(chip, MeterResource.CLOCK_CYCLES, amount).applied:
            true_consumed += amount
            overdraft = max(0, true_consumed - quota)
        snapshots.append(emit_snapshot(chip, seq))
    report = verify_chain({chip.identity.device_id: snapshots}, registry)
    status = report.device_results[0].status
    return AttackOutcome(
        "licensing_meter_rollback", "licensing",
        succeeded=overdraft > 0,  # used beyond licensed capacity
        detected=status is DeviceStatus.METER_ROLLBACK,
        evidence={
            "true_consumed": true_consumed,
            "quota": quota,
            "overdraft": overdraft,
            "verifier_status": status.value,
            "offending_pair": report.device_results[0].offending_pair,
        },
    )


def _attack_power_cut_rollback(profile, rng, params) -> AttackOutcome:
    if not profile.has(Capability.POWER_CUT_TIMING):
        raise ScenarioConfigError("licensing_power_cut_rollback needs power_cut_timing")
    issuer, chip, lic = _licensed_chip(rng, quota=500)
    metered_consume(chip, MeterResource.CLOCK_CYCLES, 500)
    reuse_accepted = 0
    attempts = 200
    for _ in range(attempts):
        at = chip.clock_ms + rng.uniform(0.01, 20.0)
        chip.power_loss(at_ms=at)
        chip.power_on(at_ms=at + rng.uniform(0.01, 5.0))
        if install(chip, lic, now_ms=chip.clock_ms).accepted:
            reuse_accepted += 1
    return AttackOutcome(
        "licensing_power_cut_rollback", "licensing",
        succeeded=reuse_accepted > 0,
        detected=reuse_accepted == 0,
        evidence={"attempts": attempts, "reuse_accepted": reuse_accepted,
                  "last_license_id": chip.last_license_id},
    )


def _attack_throttle_bypass(profile, rng, params) -> AttackOutcome:
    if not profile.has(Capability.FIRMWARE_MOD):
        raise ScenarioConfigError("licensing_throttle_bypass needs firmware_mod")
    regulator = canon.generate_keypair(rng.randbytes(32))
    registry = Registry()
    chip = provision_chip(rng, frozenset({regulator.public_bytes}))  # never licensed
    peer = provision_chip(rng, frozenset({regulator.public_bytes}))
    peer.throttle = Throttle.full()
    registry.enroll(chip)
    registry.enroll(peer)
    genuine_hashes = {
        chip.identity.device_id: chip.firmware_hash,
        peer.identity.device_id: peer.firmware_hash,
    }
    throttled = chip.consume(MeterResource.CLOCK_CYCLES, 100)
    # Modified firmware ignores the throttle: meters move despite the
    # disabled state the license state machine mandates.
    chip.tamper_event("firmware_mod", covert=True)
    chip.meters.increment(MeterResource.CLOCK_CYCLES, 10**6)
    unlicensed_use = chip.meter_value(MeterResource.CLOCK_CYCLES)
    # The pod integrity check catches the patched firmware at the next
    # handshake against the regulator-signed manifest of genuine hashes.
    manifest = issue_manifest(regulator, "pod-0", genuine_hashes, manifest_epoch=0)
    node_chip = ClusterNode(chip=chip)
    node_peer = ClusterNode(chip=peer)
    result = handshake(0.0, node_peer, node_chip, PodRegime(manifest), registry, rng,
                       SessionAllocator())
    return AttackOutcome(
        "licensing_throttle_bypass", "licensing",
        succeeded=unlicensed_use > 0,
        detected=result.reason is HandshakeReject.FIRMWARE_MISMATCH
        and node_chip.self_disabled,
        evidence={"honest_consume_throttled": throttled.value,
                  "unlicensed_cycles": unlicensed_use,
                  "handshake_reason": result.reason.value if result.reason else None},
    )


# -- cluster attacks ---------------------------------------------------------------


def _cluster_world(rng, n_chips):
    regulator = canon.generate_keypair(rng.randbytes(32))
    registry = Registry()
    nodes = []
    for _ in range(n_chips):
        chip = provision_chip(rng, frozenset({regulator.public_bytes}))
        chip.throttle = Throttle.full()
        registry.enroll(chip)
        nodes.append(ClusterNode(chip=chip))
    return regulator, registry, nodes


def _attack_pod_firmware(profile, rng, params) -> AttackOutcome:
    if not profile.has(Capability.FIRMWARE_MOD):
        raise ScenarioConfigError("cluster_pod_firmware_mod needs firmware_mod")
    regulator, registry, nodes = _cluster_world(rng, 2)
    a, b = nodes
    manifest = issue_manifest(
        regulator, "pod-1",
        {a.device_id: a.chip.firmware_hash, b.device_id: b.chip.firmware_hash},
        manifest_epoch=0,
    )
    b.chip.tamper_event("firmware_mod", covert=True)
    result = handshake(0.0, a, b, PodRegime(manifest), registry, rng, SessionAllocator())
    return AttackOutcome(
        "cluster_pod_firmware_mod", "cluster",
        succeeded=result.accepted,
        detected=result.reason is HandshakeReject.FIRMWARE_MISMATCH and b.self_disabled,
        evidence={"reason": result.reason.value if result.reason else None,
                  "member_self_disabled": b.self_disabled},
    )


def _attack_cap_forge(profile, rng, params) -> AttackOutcome:
    regulator, registry, nodes = _cluster_world(rng, 1)
    node = nodes[0]
    genuine = issue_cap_policy(regulator, cap=4, cap_epoch=1)
    assert apply_cap_update(node, genuine, now_ms=0.0)
    rogue = canon.generate_keypair(rng.randbytes(32))
    forged_raise = issue_cap_policy(rogue, cap=1024, cap_epoch=2)
    replayed = issue_cap_policy(regulator, cap=64, cap_epoch=0)
    adopted_forged = apply_cap_update(node, forged_raise, now_ms=1.0)
    adopted_replay = apply_cap_update(node, replayed, now_ms=2.0)
    return AttackOutcome(
        "cluster_cap_forge", "cluster",
        succeeded=adopted_forged or adopted_replay,
        detected=not adopted_forged and not adopted_replay,
        evidence={"cap_after": node.adopted_cap(), "cap_epoch_after": node.cap_policy.cap_epoch},
    )


def _attack_pcie_bridge(profile, rng, params) -> AttackOutcome:
    if not profile.has(Capability.PCIE_BRIDGE):
        raise ScenarioConfigError("cluster_pcie_bridge needs pcie_bridge")
    regulator, registry, nodes = _cluster_world(rng, 2)
    a, b = nodes
    moved = 0
    events = []
    for step in range(5):
        event = bridge_transfer(step * 100.0, "host-0", a, b, 10**9,
                                capability_granted=True)
        events.append(event)
        moved += event.n_bytes
    direct_ms = 10**9 / 1e8
    return AttackOutcome(
        "cluster_pcie_bridge", "cluster",
        succeeded=moved == 5 * 10**9,
        detected=a.chip.meter_value(MeterResource.PCIE_TRANSFER_BYTES) == moved,
        evidence={
            "bytes_moved": moved,
            "latency_penalty": events[0].transit_ms / direct_ms,
            "pcie_meter_a": a.chip.meter_value(MeterResource.PCIE_TRANSFER_BYTES),
            "pcie_meter_b": b.chip.meter_value(MeterResource.PCIE_TRANSFER_BYTES),
        },
    )


def _attack_gradient_smuggle(profile, rng, params) -> AttackOutcome:
    if not profile.has(Capability.GRADIENT_SMUGGLE):
        raise ScenarioConfigError("cluster_gradient_smuggle needs gradient_smuggle")
    regulator, registry, nodes = _cluster_world(rng, 8)
    pod_of = {}
    for i, node in enumerate(nodes):
        pod_of[node.device_id] = "pod-a" if i < 4 else "pod-b"
    bridge_a, bridge_b = nodes[3], nodes[4]  # one compromised device per pod
    step_ms = 1000.0
    gradient_bytes = 2 * 10**9
    events: list[DataEvent] = []
    for step in range(12):
        events.append(
            bridge_transfer(step * step_ms + 500.0, "host-0", bridge_a, bridge_b,
                            gradient_bytes, capability_granted=True)
        )
    flags = detect_cross_pod_coupling(events, pod_of, window_ms=step_ms,
                                      threshold_bytes_per_step=gradient_bytes // 2)
    return AttackOutcome(
        "cluster_gradient_smuggle", "cluster",
        succeeded=len(events) == 12,
        detected=any(f.pod_pair == ("pod-a", "pod-b") for f in flags),
        evidence={
            "flagged_pairs": [list(f.pod_pair) for f in flags],
            "windows_over": flags[0].windows_over_threshold if flags else 0,
        },
    )


# -- geoloc attacks ----------------------------------------------------------------


def _attack_slowdown(profile, rng, params) -> AttackOutcome:
    if not profile.has(Capability.DELAY_SLOWDOWN):
        raise ScenarioConfigError("geoloc_delay_slowdown needs delay_slowdown")
    landmarks = _landmark_ring(6)
    lms = {lm.id: lm for lm in landmarks}
    truth = GeoPoint(11.0, 9.0)
    honest = synthesize_round(rng, landmarks, truth, 0.2, 0.5)
    baseline = estimate_cbg(honest, lms, _GRID)
    slowed = [
        type(m)(m.landmark_id, m.rtt_ms + rng.uniform(5.0, 30.0), m.nonce,
                m.response_signature, m.verified)
        for m in honest
    ]
    attacked = estimate_cbg(slowed, lms, _GRID)
    return AttackOutcome(
        "geoloc_delay_slowdown", "geoloc",
        succeeded=not attacked.contains(truth),  # goal: evict the truth
        detected=attacked.inconsistent,
        evidence={
            "region_cells_honest": baseline.cell_count(),
            "region_cells_attacked": attacked.cell_count(),
            "uncertainty_grew": attacked.cell_count() > baseline.cell_count(),
        },
    )


def _attack_speedup(profile, rng, params) -> AttackOutcome:
    if not profile.has(Capability.DELAY_SPEEDUP):
        raise ScenarioConfigError("geoloc_delay_speedup needs delay_speedup")
    landmarks = _landmark_ring(5)
    lms = {lm.id: lm for lm in landmarks}
    truth = GeoPoint(11.0, 9.0)
    ms = synthesize_round(rng, landmarks, truth, 0.1, 0.5,
                          speedup={"lm0": profile.latency_factor})
    est = estimate_cbg(ms, lms, _GRID)
    # Success would be a clean (non-empty, unflagged) region that the chip
    # appears inside while the truth is pushed out.
    clean_spoof = (not est.inconsistent) and not est.contains(truth)
    return AttackOutcome(
        "geoloc_delay_speedup", "geoloc",
        succeeded=clean_spoof,
        detected=est.inconsistent,
        evidence={"empty_region": est.empty,
                  "floor_violations": list(est.floor_violations),
                  "latency_factor": profile.latency_factor},
    )


def _attack_landmark_compromise(profile, rng, params) -> AttackOutcome:
    if not profile.has(Capability.COMPROMISE_LANDMARKS):
        raise ScenarioConfigError("geoloc_landmark_compromise needs compromise_landmarks")
    f = 2
    landmarks = _landmark_ring(7)
    truth = GeoPoint(11.0, 9.0)
    # Two ring landmarks lie hard, reporting the chip nearly on top of them.
    compromised = list(range(min(profile.compromised_landmarks, f)))
    for idx in compromised:
        landmarks[idx].honest = False
        landmarks[idx].misreport = lambda rtt: rtt * 0.1
    lms = {lm.id: lm for lm in landmarks}
    ms = synthesize_round(rng, landmarks, truth, 0.2, 0.5)
    ms = [
        type(m)(m.landmark_id, lms[m.landmark_id].misreport(m.rtt_ms)
                if lms[m.landmark_id].misreport else m.rtt_ms,
                m.nonce, m.response_signature, m.verified)
        for m in ms
    ]
    est = estimate_bft(ms, lms, _GRID, f=f)
    # Liars whose bounds exclude the whole surviving region stand out.
    outliers = []
    for m in ms:
        bound = delay_to_distance(m, lms[m.landmark_id].calibration)
        if bound.floor_violation:
            outliers.append(m.landmark_id)
            continue
        distances = _GRID.distances_km(lms[m.landmark_id].position)
        slack = _GRID.half_diagonal_km()
        if est.mask.any() and not (
            (distances[est.mask] <= bound.bound_km + slack).any()
        ):
            outliers.append(m.landmark_id)
    return AttackOutcome(
        "geoloc_landmark_compromise", "geoloc",
        succeeded=not est.contains(truth),
        detected=len(outliers) > 0,
        evidence={"compromised": [landmarks[i].id for i in compromised],
                  "flagged_outliers": outliers,
                  "truth_contained": est.contains(truth)},
    )


def _attack_ddos(profile, rng, params) -> AttackOutcome:
    if not profile.has(Capability.DDOS_LANDMARKS):
        raise ScenarioConfigError("geoloc_landmark_ddos needs ddos_landmarks")
    issuer = canon.generate_keypair(rng.randbytes(32))
    chip = provision_chip(rng, frozenset({issuer.public_bytes}))
    registry = Registry()
    registry.enroll(chip)
    landmarks = _landmark_ring(7, overhead=0.5)
    truth = GeoPoint(11.0, 9.0)
    nodes = [Node(lm.id, lm.position, role="landmark") for lm in landmarks]
    nodes.append(Node("chip", truth))
    net = Network(nodes, default_latency=LatencyModel(
        kappa=0.67, jitter_median_ms=0.2, jitter_sigma=0.5, fixed_overhead_ms=0.5))
    downed = {lm.id for lm in rng.sample(landmarks, 2)}
    net.drop_hooks.append(lambda src, dst: dst in downed)
    sim = Simulator(seed=rng.randrange(2**31))
    ms = challenge_round(sim, net, landmarks, chip.identity.device_id, "chip",
                         chip.sign, registry, timeout_ms=500.0)
    lms = {lm.id: lm for lm in landmarks}
    est = estimate_cbg(ms, lms, _GRID)
    missing = [m.landmark_id for m in ms if m.missing]
    return AttackOutcome(
        "geoloc_landmark_ddos", "geoloc",
        succeeded=not est.contains(truth),
        detected=len(missing) > 0,
        evidence={"missing": missing, "usable": sum(1 for m in ms if m.verified)},
    )


def _attack_relay(profile, rng, params) -> AttackOutcome:
    if not profile.has(Capability.KEY_EXTRACTION):
        raise ScenarioConfigError("geoloc_key_extraction_relay needs key_extraction")
    issuer = canon.generate_keypair(rng.randbytes(32))
    chip = provision_chip(rng, frozenset({issuer.public_bytes}))
    registry = Registry()
    registry.enroll(chip)
    oracle = extract_signing_oracle(chip, capability_granted=True)
    truth = GeoPoint(20.0, 20.0)        # where the chip really sits
    relay_site = GeoPoint(2.0, 2.0)     # where the relay answers from
    landmarks = [
        Landmark("lm0", GeoPoint(0.0, 0.0), calibration=Calibration(fixed_overhead_ms=0.5)),
        Landmark("lm1", GeoPoint(0.0, 8.0), calibration=Calibration(fixed_overhead_ms=0.5)),
        Landmark("lm2", GeoPoint(8.0, 4.0), calibration=Calibration(fixed_overhead_ms=0.5)),
    ]
    nodes = [Node(lm.id, lm.position, role="landmark") for lm in landmarks]
    nodes.append(Node("relay", relay_site))
    net = Network(nodes, default_latency=LatencyModel(
        kappa=0.67, jitter_median_ms=0.1, jitter_sigma=0.5, fixed_overhead_ms=0.5))
    sim = Simulator(seed=rng.randrange(2**31))
    ms = challenge_round(sim, net, landmarks, chip.identity.device_id, "relay",
                         oracle, registry)
    lms = {lm.id: lm for lm in landmarks}
    est = estimate_cbg(ms, lms, _GRID)
    spoofed = (
        all(m.verified for m in ms)
        and not est.inconsistent
        and est.contains(relay_site)
        and not est.contains(truth)
    )
    return AttackOutcome(
        "geoloc_key_extraction_relay", "geoloc",
        succeeded=spoofed,
        detected=est.inconsistent or any(not m.verified for m in ms),
        evidence={"relay_site_in_region": est.contains(relay_site),
                  "truth_in_region": est.contains(truth),
                  "all_verified": all(m.verified for m in ms)},
    )


# -- accounting attacks -------------------------------------------------------------


def _attack_accounting_meter_tamper(profile, rng, params) -> AttackOutcome:
    if not profile.has(Capability.COVERT_TAMPER):
        raise ScenarioConfigError("accounting_meter_tamper needs covert_tamper")
    issuer = canon.generate_keypair(rng.randbytes(32))
    chip = provision_chip(rng, frozenset({issuer.public_bytes}))
    chip.throttle = Throttle.full()
    registry = Registry()
    registry.enroll(chip)
    snapshots = []
    true_total = 0
    for seq in range(5):
        chip.consume(MeterResource.FLOAT_OPS, 10**6)
        true_total += 10**6
        snapshots.append(emit_snapshot(chip, seq))
    chip.tamper_event("meter_rollback", covert=True,
                      resource=MeterResource.FLOAT_OPS, amount=3 * 10**6)
    snapshots.append(emit_snapshot(chip, 5))
    report = verify_chain({chip.identity.device_id: snapshots}, registry)
    result = report.device_results[0]
    # The falsified chain is rejected outright, so no undercounted total is
    # ever reported as verified.
    return AttackOutcome(
        "accounting_meter_tamper", "accounting",
        succeeded=result.status is DeviceStatus.VERIFIED
        and report.totals[MeterResource.FLOAT_OPS] < true_total,
        detected=result.status is DeviceStatus.METER_ROLLBACK,
        evidence={"status": result.status.value,
                  "offending_pair": result.offending_pair,
                  "true_total": true_total},
    )


def _attack_noise_injection(profile, rng, params) -> AttackOutcome:
    np_rng = np.random.default_rng(rng.randrange(2**31))
    trace = generate_trace(WorkloadLabel.FRONTIER_TRAINING, np_rng, devices=128)
    base_label = classify(trace).label
    flip = classification_flip_point(trace, [0.05, 0.1, 0.2, 0.4, 0.8],
                                     rng_seed=rng.randrange(2**31))
    evaded = flip is not None
    noisy_label = None
    if evaded:
        noisy = classify(inject_noise(trace, flip, np.random.default_rng(1)))
        noisy_label = noisy.label.value
    return AttackOutcome(
        "accounting_noise_injection", "accounting",
        succeeded=evaded,
        detected=False,  # the classifier raises no alarm; it is simply wrong
        evidence={"base_label": base_label.value, "flip_magnitude": flip,
                  "label_after_noise": noisy_label,
                  "accounting_unaffected": True},
    )


def _attack_fragmentation(profile, rng, params) -> AttackOutcome:
    np_rng = np.random.default_rng(rng.randrange(2**31))
    trace = generate_trace(WorkloadLabel.FRONTIER_TRAINING, np_rng, devices=240)
    fragments = fragment(trace, 4)
    fragment_labels = [classify(f).label for f in fragments]
    evaded = all(label is not WorkloadLabel.FRONTIER_TRAINING for label in fragment_labels)

    # Accounting still totals correctly across the fragments: chips meter the
    # same operations no matter how the telemetry is reported.
    issuer = canon.generate_keypair(rng.randbytes(32))
    registry = Registry()
    ops_per_util = 10**7
    per_fragment_totals = []
    union_snapshots = {}
    for frag in fragments:
        frag_total = 0
        for row in range(frag.device_count):
            chip = provision_chip(rng, frozenset({issuer.public_bytes}))
            chip.throttle = Throttle.full()
            registry.enroll(chip)
            first = emit_snapshot(chip, 0)
            ops = int(frag.utilization[row].sum() * ops_per_util)
            chip.consume(MeterResource.FLOAT_OPS, ops)
            frag_total += ops
            union_snapshots[chip.identity.device_id] = [first, emit_snapshot(chip, 1)]
        per_fragment_totals.append(frag_total)
    threshold = 10**9
    union_report = verify_chain(union_snapshots, registry, threshold=threshold)
    return AttackOutcome(
        "accounting_fragmentation", "accounting",
        succeeded=evaded,
        detected=False,
        evidence={
            "fragment_labels": [label.value for label in fragment_labels],
            "union_total_ops": union_report.totals[MeterResource.FLOAT_OPS],
            "union_exceeds_threshold": union_report.exceeds_threshold,
            "per_fragment_totals": per_fragment_totals,
        },
    )


# -- registry -----------------------------------------------------------------------


def _spec(name, mechanism, required, expected_succeeded, expected_detected, fn) -> AttackSpec:
    return AttackSpec(name, mechanism, frozenset(required), expected_succeeded,
                      expected_detected, fn)


ATTACKS: dict[str, AttackSpec] = {
    spec.name: spec
    for spec in (
        _spec("licensing_counterfeit", "licensing",
              {Capability.COUNTERFEIT_LICENSE}, False, True, _attack_counterfeit),
        _spec("licensing_replay", "licensing",
              {Capability.REPLAY_LICENSE}, False, True, _attack_replay),
        _spec("licensing_cross_device", "licensing",
              {Capability.CROSS_DEVICE_LICENSE}, False, True, _attack_cross_device),
        _spec("licensing_meter_rollback", "licensing",
              {Capability.COVERT_TAMPER}, True, True, _attack_meter_rollback_licensing),
        _spec("licensing_power_cut_rollback", "licensing",
              {Capability.POWER_CUT_TIMING}, False, True, _attack_power_cut_rollback),
        _spec("licensing_throttle_bypass", "licensing",
              {Capability.FIRMWARE_MOD}, True, True, _attack_throttle_bypass),
        _spec("cluster_pod_firmware_mod", "cluster",
              {Capability.FIRMWARE_MOD}, False, True, _attack_pod_firmware),
        _spec("cluster_cap_forge", "cluster", set(), False, True, _attack_cap_forge),
        _spec("cluster_pcie_bridge", "cluster",
              {Capability.PCIE_BRIDGE}, True, True, _attack_pcie_bridge),
        _spec("cluster_gradient_smuggle", "cluster",
              {Capability.GRADIENT_SMUGGLE, Capability.PCIE_BRIDGE}, True, True,
              _attack_gradient_smuggle),
        _spec("geoloc_delay_slowdown", "geoloc",
              {Capability.DELAY_SLOWDOWN}, False, False, _attack_slowdown),
        _spec("geoloc_delay_speedup", "geoloc",
              {Capability.DELAY_SPEEDUP}, False, True, _attack_speedup),
        _spec("geoloc_landmark_compromise", "geoloc",
              {Capability.COMPROMISE_LANDMARKS}, False, True, _attack_landmark_compromise),
        _spec("geoloc_landmark_ddos", "geoloc",
              {Capability.DDOS_LANDMARKS}, False, True, _attack_ddos),
        _spec("geoloc_key_extraction_relay", "geoloc",
              {Capability.KEY_EXTRACTION}, True, False, _attack_relay),
        _spec("accounting_meter_tamper", "accounting",
              {Capability.COVERT_TAMPER}, False, True, _attack_accounting_meter_tamper),
        _spec("accounting_noise_injection", "accounting", set(), True, False,
              _attack_noise_injection),
        _spec("accounting_fragmentation", "accounting", set(), True, False,
              _attack_fragmentation),
    )
}


def run_attack(
    name: str,
    profile: AdversaryProfile,
    seed: int,
    params: Optional[dict] = None,
) -> AttackOutcome:
    """Execute one named attack scenario under the given adversary profile."""
    spec = ATTACKS.get(name)
    if spec is None:
        raise KeyError(f"unknown attack: {name}")
    missing = spec.required - profile.capabilities
    if missing:
        raise ScenarioConfigError(
            f"{name} requires capabilities not granted: {sorted(c.value for c in missing)}"
        )
    return spec.run_fn(profile, random.Random(seed), params or {})


def run_matrix(
    profile: AdversaryProfile, seed: int, params: Optional[dict] = None
) -> list[AttackOutcome]:
    """Run every registered attack; the profile must grant every capability."""
    outcomes = []
    for offset, name in enumerate(sorted(ATTACKS)):
        outcomes.append(run_attack(name, profile, seed + offset, params))
    return outcomes


def matrix_report(outcomes: list[AttackOutcome]) -> str:
    """Structured text: one row per attack, with outcome and expectation."""
    lines = ["attack\tmechanism\tsucceeded\tdetected\texpected_succeeded\texpected_detected"]
    for outcome in sorted(outcomes, key=lambda o: o.attack):
        spec = ATTACKS[outcome.attack]
        lines.append(
            f"{outcome.attack}\t{outcome.mechanism}\t{outcome.succeeded}\t"
            f"{outcome.detected}\t{spec.expected_succeeded}\t{spec.expected_detected}"
        )
    return "\n".join(lines) + "\n"


def unexercised_rows() -> list[str]:
    """Inventory rows without a registered, runnable scenario."""
    missing = []
    for mechanism, names in ATTACK_INVENTORY.items():
        for name in names:
            spec = ATTACKS.get(name)
            if spec is None or spec.run_fn is None or spec.mechanism != mechanism:
                missing.append(name)
    return missing
