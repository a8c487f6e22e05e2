"""Virtual AI accelerator: signing oracle, secure meters, counters, clock.

The chip is modeled behaviorally: a tamper-scoped identity that signs
canonical payloads, cumulative activity meters with three power-loss
persistence designs, an exact fuse-based unary counter, a real-time clock
with optional drift, throttle state, and a zeroization response. Electrical
details (flash wear, capacitors, fuse physics) are out of scope; what is
modeled is exactly the externally observable contract of each component.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from . import canon


class MeterResource(Enum):
    """The seven metered quantities, in canonical ordinal order."""

    FLOAT_OPS = "float_ops"
    INT_OPS = "int_ops"
    MEMORY_TRANSFER_BYTES = "memory_transfer_bytes"
    INTERCONNECT_TRANSFER_BYTES = "interconnect_transfer_bytes"
    PCIE_TRANSFER_BYTES = "pcie_transfer_bytes"
    JOULES = "joules"
    CLOCK_CYCLES = "clock_cycles"

    @property
    def ordinal(self) -> int:
        return _RESOURCE_ORDINALS[self]


_RESOURCE_ORDINALS = {res: i for i, res in enumerate(MeterResource)}


class ZeroizedError(RuntimeError):
    """The chip's keys were deleted; it signs nothing and executes nothing."""


class CounterExhaustedError(RuntimeError):
    """All fuses of a unary counter are burned."""


class PolicyKind(Enum):
    CAPACITOR_FLUSH = "capacitor_flush"
    PERIODIC_FLUSH = "periodic_flush"
    BOOT_ROUNDUP = "boot_roundup"


@dataclass(frozen=True)
class PersistencePolicy:
    """How volatile meter values reach flash across power loss.

    capacitor_flush: a residual-charge flush copies SRAM to flash at the
        instant of loss, so the recovered value equals the value at loss.
    periodic_flush: flash is written every `flush_interval_ms`; a loss
        forfeits at most one interval of consumption.
    boot_roundup: flash is written every interval, and each boot recovers
        last-flushed plus `roundup_increment`, overcounting rather than
        undercounting as long as the increment bounds per-interval use.
    """

    kind: PolicyKind
    flush_interval_ms: float = 3_600_000.0  # one simulated hour
    roundup_increment: int = 0

    def __post_init__(self):
        if self.flush_interval_ms <= 0.0:
            raise ValueError("flush interval must be positive")
        if self.kind is PolicyKind.BOOT_ROUNDUP and self.roundup_increment <= 0:
            raise ValueError("boot_roundup requires a positive increment")


class MeterBank:
    """Per-resource cumulative secure meters with persisted shadows.

    Volatile values are lifetime-cumulative and outside user control; they
    never decrease except through a covert-tamper event (which downstream
    attestation is designed to catch). Persisted values are monotone flash
    counters: a flush never writes a value lower than what is stored.
    """

    def __init__(self, policy: PersistencePolicy):
        self.policy = policy
        self.volatile: dict[MeterResource, int] = {r: 0 for r in MeterResource}
        self.persisted: dict[MeterResource, int] = {r: 0 for r in MeterResource}
        self._next_flush_ms = policy.flush_interval_ms

    def increment(self, resource: MeterResource, amount: int) -> None:
        if amount < 0:
            raise ValueError("meter increments must be nonnegative")
        self.volatile[resource] += amount

    def tick(self, now_ms: float) -> None:
        """Run any periodic flushes that have come due."""
        while now_ms >= self._next_flush_ms:
            self.flush()
            self._next_flush_ms += self.policy.flush_interval_ms

    def flush(self) -> None:
        for resource in MeterResource:
            if self.volatile[resource] > self.persisted[resource]:
                self.persisted[resource] = self.volatile[resource]

    def on_power_loss(self, at_ms: float) -> dict[MeterResource, int]:
        """Returns the persisted snapshot surviving the cut."""
        self.tick(at_ms)
        if self.policy.kind is PolicyKind.CAPACITOR_FLUSH:
            self.flush()
        return dict(self.persisted)

    def on_power_on(self, at_ms: float) -> dict[MeterResource, int]:
        """Restore volatile values from flash; returns the recovered values."""
        for resource in MeterResource:
            recovered = self.persisted[resource]
            if self.policy.kind is PolicyKind.BOOT_ROUNDUP:
                recovered += self.policy.roundup_increment
                self.persisted[resource] = recovered
            self.volatile[resource] = recovered
        self._next_flush_ms = at_ms + self.policy.flush_interval_ms
        return dict(self.volatile)


@dataclass
class RtcClock:
    """Real-time clock: monotone reading with a configurable drift rate."""

    epoch_ms: float = 0.0
    drift_ppm: float = 0.0
    _last_read: float = field(default=0.0, repr=False)

    def read(self, sim_ms: float) -> float:
        value = self.epoch_ms + sim_ms * (1.0 + self.drift_ppm / 1e6)
        self._last_read = max(self._last_read, value)
        return self._last_read


@dataclass
class UnaryCounter:
    """Fuse-backed counter: exact across any power schedule, fixed capacity."""

    capacity: int
    count: int = 0

    def increment(self) -> int:
        if self.count >= self.capacity:
            raise CounterExhaustedError(f"all {self.capacity} fuses burned")
        self.count += 1
        return self.count


class ThrottleLevel(Enum):
    FULL = "full"
    REDUCED = "reduced"
    DISABLED = "disabled"


@dataclass(frozen=True)
class Throttle:
    level: ThrottleLevel
    fraction: float = 1.0

    @staticmethod
    def full() -> "Throttle":
        return Throttle(ThrottleLevel.FULL, 1.0)

    @staticmethod
    def reduced(fraction: float = 0.1) -> "Throttle":
        if not 0.0 < fraction < 1.0:
            raise ValueError("reduced fraction must be in (0, 1)")
        return Throttle(ThrottleLevel.REDUCED, fraction)

    @staticmethod
    def disabled() -> "Throttle":
        return Throttle(ThrottleLevel.DISABLED, 0.0)


class ConsumeResult(Enum):
    APPLIED = "applied"
    THROTTLED = "throttled"


@dataclass(frozen=True)
class DeviceIdentity:
    """Unmodifiable device id, on-device keypair, enrolled issuer keys."""

    device_id: int
    keypair: canon.KeyPair
    issuer_keys: frozenset[bytes]


GENUINE_FIRMWARE = hashlib.sha256(b"accelerator-firmware/1.0").digest()

# Default unary-counter capacity; license activations are infrequent.
DEFAULT_FUSE_CAPACITY = 64


@dataclass
class TamperRecord:
    kind: str
    covert: bool
    detected: bool
    details: dict


class ChipState:
    """One accelerator's full governed state, owned by a single simulation."""

    def __init__(
        self,
        identity: DeviceIdentity,
        policy: PersistencePolicy | None = None,
        rtc: RtcClock | None = None,
        fuse_capacity: int = DEFAULT_FUSE_CAPACITY,
    ):
        self.identity = identity
        self.meters = MeterBank(policy or PersistencePolicy(PolicyKind.CAPACITOR_FLUSH))
        self.rtc = rtc or RtcClock()
        self._fuse_capacity = fuse_capacity
        self.unary_counters: dict[str, UnaryCounter] = {
            "license_activations": UnaryCounter(capacity=fuse_capacity)
        }
        # Stored in a write-through monotonic counter: exact across power loss.
        self.last_license_id: int = -1
        self.active_license: Optional[object] = None
        self.license_baseline: dict[MeterResource, int] = {r: 0 for r in MeterResource}
        self.throttle: Throttle = Throttle.disabled()  # default-deny until licensed
        self.zeroized: bool = False
        self.firmware_hash: bytes = GENUINE_FIRMWARE
        self.powered: bool = True
        self.clock_ms: float = 0.0
        self.tamper_log: list[TamperRecord] = []

    # -- time ---------------------------------------------------------------

    def advance_to(self, now_ms: float) -> None:
        """Move the chip's local clock forward, running due meter flushes."""
        if now_ms < self.clock_ms:
            return
        self.clock_ms = now_ms
        if self.powered:
            self.meters.tick(now_ms)

    def rtc_read(self) -> float:
        return self.rtc.read(self.clock_ms)

    def unary_count_increment(self, counter_name: str) -> int:
        """Burn one fuse of a named unary counter (exact across power loss)."""
        counter = self.unary_counters.setdefault(
            counter_name, UnaryCounter(capacity=self._fuse_capacity)
        )
        return counter.increment()

    @property
    def license_counter(self) -> UnaryCounter:
        return self.unary_counters["license_activations"]

    # -- signing oracle -----------------------------------------------------

    def sign(self, message: bytes) -> bytes:
        if self.zeroized:
            raise ZeroizedError("chip is zeroized; signing refused")
        return self.identity.keypair.sign(message)

    @property
    def public_key(self) -> bytes:
        return self.identity.keypair.public_bytes

    # -- metering -----------------------------------------------------------

    def consume(self, resource: MeterResource, amount: int) -> ConsumeResult:
        """Meter `amount` units of `resource` if the throttle permits."""
        if amount < 0:
            raise ValueError("consume amount must be nonnegative")
        if not self.powered:
            raise RuntimeError("chip is powered off")
        if self.zeroized:
            raise ZeroizedError("chip is zeroized; execution refused")
        if self.throttle.level is ThrottleLevel.DISABLED:
            return ConsumeResult.THROTTLED
        self.meters.increment(resource, amount)
        self.meters.tick(self.clock_ms)
        return ConsumeResult.APPLIED

    def meter_value(self, resource: MeterResource) -> int:
        """Read-only host access to the cumulative meter."""
        return self.meters.volatile[resource]

    def consumed_since_install(self, resource: MeterResource) -> int:
        return max(0, self.meters.volatile[resource] - self.license_baseline[resource])

    # -- power schedule -----------------------------------------------------

    def power_loss(self, at_ms: float) -> dict[MeterResource, int]:
        self.advance_to(at_ms)
        snapshot = self.meters.on_power_loss(at_ms)
        self.powered = False
        return snapshot

    def power_on(self, at_ms: float) -> dict[MeterResource, int]:
        if at_ms < self.clock_ms:
            raise ValueError("power_on cannot precede the loss instant")
        self.clock_ms = at_ms
        self.powered = True
        return self.meters.on_power_on(at_ms)

    # -- tamper response ------------------------------------------------------

    def tamper_event(self, kind: str, covert: bool = False, **details) -> TamperRecord:
        """Apply a tamper attempt.

        Detected tampering (the default) triggers the zeroization response.
        Covert tampering requires the adversary's covert_tamper capability
        and mutates state without tripping the response, which is exactly
        what downstream verifiers must be able to catch.
        """
        record = TamperRecord(kind=kind, covert=covert, detected=not covert, details=details)
        self.tamper_log.append(record)
        if not covert:
            self.zeroize()
            return record
        if kind == "meter_rollback":
            resource = details["resource"]
            amount = details["amount"]
            self.meters.volatile[resource] = max(0, self.meters.volatile[resource] - amount)
        elif kind == "firmware_mod":
            self.firmware_hash = details.get(
                "new_hash", hashlib.sha256(b"patched-" + self.firmware_hash).digest()
            )
        return record

    def zeroize(self) -> None:
        self.zeroized = True
        self.throttle = Throttle.disabled()


def provision_chip(
    rng: random.Random,
    issuer_keys: frozenset[bytes],
    policy: PersistencePolicy | None = None,
    rtc: RtcClock | None = None,
    fuse_capacity: int = DEFAULT_FUSE_CAPACITY,
) -> ChipState:
    """Mint a chip: fresh device id and an on-device generated keypair."""
    device_id = rng.getrandbits(128)
    keypair = canon.generate_keypair(rng.randbytes(32))
    identity = DeviceIdentity(device_id=device_id, keypair=keypair, issuer_keys=issuer_keys)
    return ChipState(identity, policy=policy, rtc=rtc, fuse_capacity=fuse_capacity)


def extract_signing_oracle(chip: ChipState, capability_granted: bool) -> Callable[[bytes], bytes]:
    """Clone the chip's signing ability, as a successful key extraction would.

    Gated on an explicit adversary capability; the honest model never exposes
    the private key through any readable field, log, or report.
    """
    if not capability_granted:
        raise PermissionError("key extraction requires the key_extraction capability")
    keypair = chip.identity.keypair
    return lambda message: keypair.sign(message)


class Registry:
    """Verifier-side record of provisioned devices (public halves only)."""

    def __init__(self):
        self._records: dict[int, dict] = {}

    def enroll(self, chip: ChipState) -> None:
        self._records[chip.identity.device_id] = {
            "device_id": f"{chip.identity.device_id:032x}",
            "scheme": chip.identity.keypair.scheme,
            "public_key": chip.public_key.hex(),
            "issuer_keys": sorted(k.hex() for k in chip.identity.issuer_keys),
        }

    def public_key(self, device_id: int) -> Optional[bytes]:
        record = self._records.get(device_id)
        return bytes.fromhex(record["public_key"]) if record else None

    def __contains__(self, device_id: int) -> bool:
        return device_id in self._records

    def export_text(self) -> str:
        records = [self._records[k] for k in sorted(self._records)]
        return json.dumps(records, indent=2, sort_keys=True) + "\n"

    @staticmethod
    def import_text(text: str) -> "Registry":
        registry = Registry()
        for record in json.loads(text):
            registry._records[int(record["device_id"], 16)] = record
        return registry
