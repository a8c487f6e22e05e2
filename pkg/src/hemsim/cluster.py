"""Authenticated chip interconnect: fixed pods and adjustable peer caps.

Chips mutually authenticate before any data moves: each side signs the
peer's nonce with its device key and the claimed device id is checked
against the verifier registry. Two enforcement regimes gate the session:
pod membership with firmware integrity (fixed set), or a regulator-signed
cap on concurrently authenticated peers (adjustable cap). The module also
models the two circumvention routes named for these regimes - PCIe-bridged
transfers through a host, and gradient smuggling between pods - plus an
offline detector that flags periodic inter-pod traffic.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Union

from . import canon
from .chipmodel import ChipState, MeterResource, Registry, Throttle, ZeroizedError

MANIFEST_TAG = "pod-manifest.v1"
CAP_POLICY_TAG = "cap-policy.v1"
SESSION_AUTH_TAG = "session-auth.v1"

DEFAULT_CHECK_PERIOD_MS = 60_000.0
DEFAULT_BRIDGE_MULTIPLIER = 5.0
# Direct interconnect moves 1e8 bytes per simulated ms (100 GB/s class links).
DIRECT_INTERCONNECT_BYTES_PER_MS = 1e8


@dataclass(frozen=True)
class PodManifest:
    pod_id: str
    members: tuple[tuple[int, bytes], ...]  # (device_id, firmware_hash), sorted
    manifest_epoch: int
    regulator_signature: bytes

    def expected_firmware(self, device_id: int) -> Optional[bytes]:
        for member, fw in self.members:
            if member == device_id:
                return fw
        return None


def manifest_signed_bytes(
    pod_id: str, members: tuple[tuple[int, bytes], ...], manifest_epoch: int
) -> bytes:
    parts = [canon.blob(pod_id.encode("utf-8")), canon.u64(manifest_epoch),
             canon.u32(len(members))]
    for device_id, fw_hash in members:
        parts.append(canon.u128(device_id))
        parts.append(canon.blob(fw_hash))
    return canon.tagged(MANIFEST_TAG, *parts)


def issue_manifest(
    regulator: canon.KeyPair,
    pod_id: str,
    members: dict[int, bytes],
    manifest_epoch: int,
) -> PodManifest:
    ordered = tuple(sorted(members.items()))
    signature = regulator.sign(manifest_signed_bytes(pod_id, ordered, manifest_epoch))
    return PodManifest(pod_id, ordered, manifest_epoch, signature)


@dataclass(frozen=True)
class CapPolicy:
    cap: int
    cap_epoch: int
    check_period_ms: float
    regulator_signature: bytes


def cap_policy_signed_bytes(cap: int, cap_epoch: int, check_period_ms: float) -> bytes:
    return canon.tagged(
        CAP_POLICY_TAG, canon.u32(cap), canon.u64(cap_epoch), canon.u64(int(check_period_ms))
    )


def issue_cap_policy(
    regulator: canon.KeyPair,
    cap: int,
    cap_epoch: int,
    check_period_ms: float = DEFAULT_CHECK_PERIOD_MS,
) -> CapPolicy:
    if cap < 0:
        raise ValueError("cap must be nonnegative")
    signature = regulator.sign(cap_policy_signed_bytes(cap, cap_epoch, check_period_ms))
    return CapPolicy(cap, cap_epoch, check_period_ms, signature)


class LinkKind(Enum):
    DIRECT_INTERCONNECT = "direct_interconnect"
    PCIE_BRIDGE = "pcie_bridge"


@dataclass
class Session:
    session_id: int
    peers: tuple[int, int]
    established_at: float
    link_kind: LinkKind = LinkKind.DIRECT_INTERCONNECT
    bandwidth_used: int = 0
    open: bool = True


@dataclass(frozen=True)
class DataEvent:
    time: float
    src_device: int
    dst_device: int
    n_bytes: int
    link_kind: LinkKind
    transit_ms: float


class HandshakeReject(Enum):
    NOT_IN_POD = "not_in_pod"
    FIRMWARE_MISMATCH = "firmware_mismatch"
    CAP_EXCEEDED = "cap_exceeded"
    BAD_AUTH = "bad_auth"


@dataclass(frozen=True)
class HandshakeResult:
    session: Optional[Session]
    reason: Optional[HandshakeReject] = None

    @property
    def accepted(self) -> bool:
        return self.session is not None


@dataclass(frozen=True)
class PodRegime:
    manifest: PodManifest


@dataclass(frozen=True)
class CapRegime:
    """Marker: each endpoint enforces its own adopted cap policy."""


Regime = Union[PodRegime, CapRegime]


@dataclass
class ClusterNode:
    """One chip's cluster-facing state."""

    chip: ChipState
    sessions: dict[int, Session] = field(default_factory=dict)  # session_id -> Session
    cap_policy: Optional[CapPolicy] = None
    cap_adopted_at_ms: float = 0.0
    last_check_ms: float = 0.0
    self_disabled: bool = False
    pod_manifest: Optional[PodManifest] = None

    @property
    def device_id(self) -> int:
        return self.chip.identity.device_id

    def open_session_count(self) -> int:
        return sum(1 for s in self.sessions.values() if s.open)

    def adopted_cap(self) -> int:
        # Default-deny: a chip that has adopted no policy interconnects with no one.
        return self.cap_policy.cap if self.cap_policy is not None else 0

    def disable(self) -> None:
        self.self_disabled = True
        self.chip.throttle = Throttle.disabled()
        for session in list(self.sessions.values()):
            session.open = False
        self.sessions.clear()


def _auth_ok(signer: ClusterNode, peer_nonce: bytes, peer_id: int, registry: Registry) -> bool:
    """Mutual-auth leg: signer proves control of its claimed device id."""
    message = canon.tagged(
        SESSION_AUTH_TAG,
        canon.u128(signer.device_id),
        canon.u128(peer_id),
        canon.blob(peer_nonce),
    )
    try:
        signature = signer.chip.sign(message)
    except ZeroizedError:
        return False
    registered = registry.public_key(signer.device_id)
    if registered is None:
        return False
    return canon.verify(registered, message, signature)


class SessionAllocator:
    """Deterministic session ids in establishment order."""

    def __init__(self):
        self._next = 0

    def next_id(self) -> int:
        sid = self._next
        self._next += 1
        return sid


def handshake(
    now_ms: float,
    a: ClusterNode,
    b: ClusterNode,
    regime: Regime,
    registry: Registry,
    rng: random.Random,
    allocator: SessionAllocator,
) -> HandshakeResult:
    """Mutual challenge-response, then regime admission."""
    if a.self_disabled or b.self_disabled:
        return HandshakeResult(None, HandshakeReject.BAD_AUTH)
    nonce_a = rng.randbytes(16)
    nonce_b = rng.randbytes(16)
    if not _auth_ok(a, nonce_b, b.device_id, registry):
        return HandshakeResult(None, HandshakeReject.BAD_AUTH)
    if not _auth_ok(b, nonce_a, a.device_id, registry):
        return HandshakeResult(None, HandshakeReject.BAD_AUTH)

    if isinstance(regime, PodRegime):
        manifest = regime.manifest
        for node in (a, b):
            expected = manifest.expected_firmware(node.device_id)
            if expected is None:
                return HandshakeResult(None, HandshakeReject.NOT_IN_POD)
        for node in (a, b):
            expected = manifest.expected_firmware(node.device_id)
            if expected != node.chip.firmware_hash:
                node.disable()  # integrity check tripped: member self-disables
                return HandshakeResult(None, HandshakeReject.FIRMWARE_MISMATCH)
    else:
        for node in (a, b):
            if node.open_session_count() >= node.adopted_cap():
                return HandshakeResult(None, HandshakeReject.CAP_EXCEEDED)

    session = Session(
        session_id=allocator.next_id(),
        peers=(a.device_id, b.device_id),
        established_at=now_ms,
    )
    a.sessions[session.session_id] = session
    b.sessions[session.session_id] = session
    return HandshakeResult(session)


def teardown(session: Session, a: ClusterNode, b: ClusterNode) -> None:
    session.open = False
    a.sessions.pop(session.session_id, None)
    b.sessions.pop(session.session_id, None)


def adopt_manifest(node: ClusterNode, manifest: PodManifest) -> bool:
    """Adopt a replacement pod manifest iff signed and its epoch increases.

    Membership is otherwise immutable; swapping a broken device in or out of
    a pod is a full manifest re-issue with an epoch bump.
    """
    signed = manifest_signed_bytes(manifest.pod_id, manifest.members,
                                   manifest.manifest_epoch)
    if not any(
        canon.verify(key, signed, manifest.regulator_signature)
        for key in node.chip.identity.issuer_keys
    ):
        return False
    current_epoch = node.pod_manifest.manifest_epoch if node.pod_manifest is not None else -1
    if manifest.manifest_epoch <= current_epoch:
        return False
    node.pod_manifest = manifest
    return True


def apply_cap_update(node: ClusterNode, policy: CapPolicy, now_ms: float) -> bool:
    """Adopt iff regulator-signed and the epoch strictly increases."""
    signed = cap_policy_signed_bytes(policy.cap, policy.cap_epoch, policy.check_period_ms)
    if not any(
        canon.verify(key, signed, policy.regulator_signature)
        for key in node.chip.identity.issuer_keys
    ):
        return False
    current_epoch = node.cap_policy.cap_epoch if node.cap_policy is not None else -1
    if policy.cap_epoch <= current_epoch:
        return False
    node.cap_policy = policy
    node.cap_adopted_at_ms = now_ms
    return True


def _enforce_cap(node: ClusterNode, peers: dict[int, "ClusterNode"]) -> list[Session]:
    """Tear down newest-first sessions until the node is within its cap."""
    closed: list[Session] = []
    cap = node.adopted_cap()
    open_sessions = sorted(
        (s for s in node.sessions.values() if s.open),
        key=lambda s: (s.established_at, s.session_id),
        reverse=True,
    )
    while len(open_sessions) > cap:
        session = open_sessions.pop(0)
        other_id = session.peers[0] if session.peers[1] == node.device_id else session.peers[1]
        other = peers[other_id]
        teardown(session, node, other)
        closed.append(session)
    return closed


def periodic_check(
    node: ClusterNode, now_ms: float, peers: dict[int, "ClusterNode"]
) -> list[Session]:
    """Run the cap check if due; tears down newest-first excess sessions."""
    if node.cap_policy is None:
        return []
    if now_ms - node.last_check_ms < node.cap_policy.check_period_ms:
        return []
    node.last_check_ms = now_ms
    return _enforce_cap(node, peers)


def run_due_checks(
    node: ClusterNode, now_ms: float, peers: dict[int, "ClusterNode"]
) -> list[Session]:
    """Execute every check instant that has come due, on its exact schedule.

    Keeps the cap-violation window after a lowering bounded by one check
    period regardless of how coarsely the caller advances time.
    """
    if node.cap_policy is None:
        return []
    closed: list[Session] = []
    period = node.cap_policy.check_period_ms
    while node.last_check_ms + period <= now_ms:
        node.last_check_ms += period
        closed.extend(_enforce_cap(node, peers))
    return closed


def transfer(
    now_ms: float, session: Session, a: ClusterNode, b: ClusterNode, n_bytes: int
) -> DataEvent:
    """Move data over an established direct-interconnect session."""
    if not session.open:
        raise ValueError("transfer over a closed session")
    if n_bytes < 0:
        raise ValueError("transfer size must be nonnegative")
    transit = n_bytes / DIRECT_INTERCONNECT_BYTES_PER_MS
    session.bandwidth_used += n_bytes
    a.chip.consume(MeterResource.INTERCONNECT_TRANSFER_BYTES, n_bytes)
    b.chip.consume(MeterResource.INTERCONNECT_TRANSFER_BYTES, n_bytes)
    return DataEvent(now_ms, a.device_id, b.device_id, n_bytes,
                     LinkKind.DIRECT_INTERCONNECT, transit)


def bridge_transfer(
    now_ms: float,
    via_host: str,
    a: ClusterNode,
    b: ClusterNode,
    n_bytes: int,
    multiplier: float = DEFAULT_BRIDGE_MULTIPLIER,
    capability_granted: bool = False,
) -> DataEvent:
    """Route data between chips through a host's PCIe link.

    Succeeds (that is the point of the attack) but pays the latency
    multiplier and leaves both endpoints' PCIe meters as evidence.
    """
    if not capability_granted:
        raise PermissionError("bridge transfer requires the pcie_bridge capability")
    if n_bytes < 0:
        raise ValueError("transfer size must be nonnegative")
    transit = n_bytes / DIRECT_INTERCONNECT_BYTES_PER_MS * multiplier
    if n_bytes > 0:
        a.chip.consume(MeterResource.PCIE_TRANSFER_BYTES, n_bytes)
        b.chip.consume(MeterResource.PCIE_TRANSFER_BYTES, n_bytes)
    return DataEvent(now_ms, a.device_id, b.device_id, n_bytes, LinkKind.PCIE_BRIDGE, transit)


@dataclass(frozen=True)
class CouplingFlag:
    pod_pair: tuple[str, str]
    windows_over_threshold: int
    window_bytes: tuple[tuple[int, int], ...]  # (window index, bytes)
    device_pairs: tuple[tuple[int, int], ...]


def detect_cross_pod_coupling(
    events: Iterable[DataEvent],
    pod_of: dict[int, str],
    window_ms: float,
    threshold_bytes_per_step: int,
    min_periodic_windows: int = 3,
) -> list[CouplingFlag]:
    """Flag pod pairs whose windowed inter-pod traffic looks like training sync.

    A pair is flagged when at least `min_periodic_windows` windows each carry
    `threshold_bytes_per_step` or more between the two pods, the signature of
    per-step gradient exchange. Sporadic sub-threshold chatter is ignored.
    """
    window_totals: dict[tuple[str, str], dict[int, int]] = {}
    pair_devices: dict[tuple[str, str], set[tuple[int, int]]] = {}
    for event in events:
        pod_a = pod_of.get(event.src_device)
        pod_b = pod_of.get(event.dst_device)
        if pod_a is None or pod_b is None or pod_a == pod_b:
            continue
        pair = tuple(sorted((pod_a, pod_b)))
        window = int(event.time // window_ms)
        window_totals.setdefault(pair, {})
        window_totals[pair][window] = window_totals[pair].get(window, 0) + event.n_bytes
        pair_devices.setdefault(pair, set()).add(
            tuple(sorted((event.src_device, event.dst_device)))
        )
    flags = []
    for pair in sorted(window_totals):
        totals = window_totals[pair]
        over = sorted(w for w, total in totals.items() if total >= threshold_bytes_per_step)
        if len(over) >= min_periodic_windows:
            flags.append(
                CouplingFlag(
                    pod_pair=pair,
                    windows_over_threshold=len(over),
                    window_bytes=tuple(sorted(totals.items())),
                    device_pairs=tuple(sorted(pair_devices[pair])),
                )
            )
    return flags
