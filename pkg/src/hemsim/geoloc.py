"""Challenge-response location verification.

Landmark servers at known positions send signed-nonce challenges to a chip
over the simulated network and time the responses on their own clocks. A
verified round-trip time converts to a distance upper bound (nothing rides
the wire faster than the propagation floor), and four estimator families
turn bounds into location regions: disk intersection, history-calibrated
likelihood, triangle containment verification, and fault-tolerant
intersection that survives a bounded number of lying landmarks, plus a
residual-minimizing descent for a point estimate.

Measurements whose response signature fails verification never influence
any estimate.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import canon
from .chipmodel import Registry, ZeroizedError
from .netsim import (
    EARTH_RADIUS_KM,
    SPEED_OF_LIGHT_KM_S,
    GeoPoint,
    Network,
    Simulator,
    geodesic_distance,
)

GEOLOC_RESPONSE_TAG = "geoloc-response.v1"

DEFAULT_GRID_RESOLUTION_DEG = 0.25
DEFAULT_TRIANGLE_TOLERANCE_KM = 50.0
DEFAULT_COLLINEARITY_EPS_SR = 1e-6
KM_PER_DEGREE = 111.32  # equatorial worst case, used for grid-cell slack


@dataclass(frozen=True)
class Calibration:
    """Per-landmark delay-to-distance parameters.

    The sound upper-bound conversion uses kappa with unit path stretch;
    the likelihood estimator additionally uses the calibrated stretch rho
    and a jitter model fitted from history.
    """

    kappa: float = 0.67
    rho: float = 1.0
    fixed_overhead_ms: float = 0.0

    def speed_km_per_ms(self) -> float:
        return SPEED_OF_LIGHT_KM_S * self.kappa / 1000.0


@dataclass
class Landmark:
    """A timing server at a known location.

    Dishonest landmarks (a scripted `misreport` of measured round-trips)
    may only be constructed by scenarios that grant the compromised-
    landmark capability; the adversary module enforces that gate.
    """

    id: str
    position: GeoPoint
    honest: bool = True
    calibration: Calibration = field(default_factory=Calibration)
    misreport: Optional[Callable[[float], float]] = None


@dataclass
class Measurement:
    landmark_id: str
    rtt_ms: Optional[float]
    nonce: bytes
    response_signature: Optional[bytes]
    verified: bool
    missing: bool = False

    def to_record(self) -> dict:
        return {
            "landmark_id": self.landmark_id,
            "rtt_ms": None if self.rtt_ms is None else round(self.rtt_ms, 9),
            "verified": self.verified,
            "missing": self.missing,
        }


def response_message(device_id: int, nonce: bytes) -> bytes:
    return canon.tagged(GEOLOC_RESPONSE_TAG, canon.u128(device_id), canon.blob(nonce))


@dataclass(frozen=True)
class _Challenge:
    landmark_id: str
    nonce: bytes


@dataclass(frozen=True)
class _Response:
    landmark_id: str
    nonce: bytes
    device_id: int
    signature: Optional[bytes]


def challenge_round(
    sim: Simulator,
    net: Network,
    landmarks: Sequence[Landmark],
    device_id: int,
    chip_node_id: str,
    sign_fn: Callable[[bytes], bytes],
    registry: Registry,
    timeout_ms: float = 5000.0,
    processing_ms: float = 0.0,
) -> list[Measurement]:
    """One synchronized round: every landmark challenges the chip once.

    RTTs are measured on each landmark's clock (simulation time). Responses
    that never arrive within the timeout yield measurements marked missing;
    responses signed by anything but the registered device key are retained
    but flagged unverified.
    """
    t_start = sim.now
    arrivals: dict[str, tuple[float, _Response]] = {}

    def chip_handler(s: Simulator, event) -> None:
        challenge = event.payload
        if not isinstance(challenge, _Challenge):
            return
        message = response_message(device_id, challenge.nonce)
        try:
            signature = sign_fn(message)
        except ZeroizedError:
            return
        response = _Response(challenge.landmark_id, challenge.nonce, device_id, signature)
        if processing_ms > 0.0:
            s.schedule(s.now + processing_ms, chip_node_id, chip_node_id, ("hold", response))
        else:
            s.send(net, chip_node_id, challenge.landmark_id, response)

    def chip_self_handler(s: Simulator, event) -> None:
        payload = event.payload
        if isinstance(payload, tuple) and payload and payload[0] == "hold":
            s.send(net, chip_node_id, payload[1].landmark_id, payload[1])
        else:
            chip_handler(s, event)

    def landmark_handler(s: Simulator, event) -> None:
        response = event.payload
        if isinstance(response, _Response):
            arrivals.setdefault(response.landmark_id, (s.now, response))

    sim.register(chip_node_id, chip_self_handler)
    for lm in landmarks:
        sim.register(lm.id, landmark_handler)

    nonces: dict[str, bytes] = {}
    for lm in landmarks:
        nonce = sim.rng.randbytes(16)
        nonces[lm.id] = nonce
        sim.send(net, lm.id, chip_node_id, _Challenge(lm.id, nonce))
    sim.run_until(t_start + timeout_ms)

    measurements = []
    for lm in landmarks:
        arrived = arrivals.get(lm.id)
        if arrived is None or arrived[0] - t_start > timeout_ms:
            measurements.append(
                Measurement(lm.id, None, nonces[lm.id], None, verified=False, missing=True)
            )
            continue
        arrival_time, response = arrived
        rtt = arrival_time - t_start
        if lm.misreport is not None:
            rtt = lm.misreport(rtt)
        expected = response_message(device_id, response.nonce)
        key = registry.public_key(device_id)
        verified = (
            key is not None
            and response.nonce == nonces[lm.id]
            and response.signature is not None
            and canon.verify(key, expected, response.signature)
        )
        measurements.append(
            Measurement(lm.id, rtt, response.nonce, response.signature, verified=verified)
        )
    return measurements


@dataclass(frozen=True)
class DistanceBound:
    landmark_id: str
    bound_km: float
    floor_violation: bool


def delay_to_distance(measurement: Measurement, calibration: Calibration) -> DistanceBound:
    """Sound upper bound on chip-landmark distance from a verified RTT.

    Uses unit path stretch (no route is shorter than the geodesic), so any
    added congestion or detour only inflates the bound. An RTT below twice
    the fixed overhead is physically impossible and is flagged instead: the
    telltale of a response-speedup attack.
    """
    if measurement.missing or not measurement.verified:
        raise ValueError("delay_to_distance requires a verified measurement")
    one_way_ms = measurement.rtt_ms / 2.0 - calibration.fixed_overhead_ms
    if one_way_ms < 0.0:
        return DistanceBound(measurement.landmark_id, 0.0, floor_violation=True)
    bound = one_way_ms * calibration.speed_km_per_ms()
    return DistanceBound(measurement.landmark_id, bound, floor_violation=False)


@dataclass(frozen=True)
class GridSpec:
    """Discretized search region; containment claims are per grid cell."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    resolution_deg: float = DEFAULT_GRID_RESOLUTION_DEG

    def __post_init__(self):
        if self.lat_max <= self.lat_min or self.lon_max <= self.lon_min:
            raise ValueError("grid bounds must be nonempty")
        if self.resolution_deg <= 0.0:
            raise ValueError("grid resolution must be positive")

    @property
    def n_lat(self) -> int:
        return max(1, int(round((self.lat_max - self.lat_min) / self.resolution_deg)))

    @property
    def n_lon(self) -> int:
        return max(1, int(round((self.lon_max - self.lon_min) / self.resolution_deg)))

    def lat_centers(self) -> np.ndarray:
        return self.lat_min + (np.arange(self.n_lat) + 0.5) * self.resolution_deg

    def lon_centers(self) -> np.ndarray:
        return self.lon_min + (np.arange(self.n_lon) + 0.5) * self.resolution_deg

    def cell_of(self, point: GeoPoint) -> tuple[int, int]:
        i = int((point.latitude - self.lat_min) / self.resolution_deg)
        j = int((point.longitude - self.lon_min) / self.resolution_deg)
        return min(max(i, 0), self.n_lat - 1), min(max(j, 0), self.n_lon - 1)

    def center_of(self, i: int, j: int) -> GeoPoint:
        return GeoPoint(
            self.lat_min + (i + 0.5) * self.resolution_deg,
            self.lon_min + (j + 0.5) * self.resolution_deg,
        )

    def half_diagonal_km(self) -> float:
        """Worst-case distance from a cell center to its corner."""
        return self.resolution_deg * KM_PER_DEGREE * math.sqrt(2.0) / 2.0

    def distances_km(self, landmark_position: GeoPoint) -> np.ndarray:
        """Haversine distance from every cell center to one landmark."""
        lats = np.radians(self.lat_centers())[:, None]
        lons = np.radians(self.lon_centers())[None, :]
        p2 = math.radians(landmark_position.latitude)
        l2 = math.radians(landmark_position.longitude)
        h = (
            np.sin((p2 - lats) / 2.0) ** 2
            + np.cos(lats) * math.cos(p2) * np.sin((l2 - lons) / 2.0) ** 2
        )
        np.clip(h, 0.0, 1.0, out=h)
        return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(h))


@dataclass
class GeoEstimate:
    grid: GridSpec
    mask: np.ndarray
    point_estimate: Optional[GeoPoint]
    empty: bool
    floor_violations: tuple[str, ...] = ()
    fallback: bool = False

    def contains(self, point: GeoPoint) -> bool:
        i, j = self.grid.cell_of(point)
        return bool(self.mask[i, j])

    def cell_count(self) -> int:
        return int(self.mask.sum())

    @property
    def inconsistent(self) -> bool:
        """The assume-the-worst alarm: empty region or impossible timing."""
        return self.empty or bool(self.floor_violations)

    def region_rle(self) -> list[dict]:
        """Run-length encoding of member cells, one record per grid row."""
        rows = []
        for i in range(self.grid.n_lat):
            runs = []
            j = 0
            row = self.mask[i]
            while j < self.grid.n_lon:
                if row[j]:
                    start = j
                    while j < self.grid.n_lon and row[j]:
                        j += 1
                    runs.append([start, j - start])
                else:
                    j += 1
            if runs:
                rows.append({"row": i, "runs": runs})
        return rows


def _usable(measurements: Iterable[Measurement]) -> list[Measurement]:
    """Key-binding gate: only verified, non-missing measurements count."""
    return [m for m in measurements if m.verified and not m.missing]


def _bounds_for(
    measurements: Sequence[Measurement], landmarks: dict[str, Landmark]
) -> tuple[list[tuple[Landmark, DistanceBound]], tuple[str, ...]]:
    usable_bounds = []
    violations = []
    for m in _usable(measurements):
        lm = landmarks[m.landmark_id]
        bound = delay_to_distance(m, lm.calibration)
        if bound.floor_violation:
            violations.append(m.landmark_id)
        else:
            usable_bounds.append((lm, bound))
    return usable_bounds, tuple(violations)


def estimate_cbg(
    measurements: Sequence[Measurement],
    landmarks: dict[str, Landmark],
    grid: GridSpec,
) -> GeoEstimate:
    """Constraint-based geolocation: intersect distance-bound disks.

    An empty intersection is an explicit inconsistency signal, not an
    answer; callers treat it as an alarm.
    """
    usable_bounds, violations = _bounds_for(measurements, landmarks)
    if not usable_bounds:
        mask = np.zeros((grid.n_lat, grid.n_lon), dtype=bool)
        return GeoEstimate(grid, mask, None, empty=True, floor_violations=violations)
    slack = grid.half_diagonal_km()
    mask = np.ones((grid.n_lat, grid.n_lon), dtype=bool)
    for lm, bound in usable_bounds:
        mask &= grid.distances_km(lm.position) <= bound.bound_km + slack
    empty = not bool(mask.any())
    return GeoEstimate(grid, mask, None, empty=empty, floor_violations=violations)


def estimate_bft(
    measurements: Sequence[Measurement],
    landmarks: dict[str, Landmark],
    grid: GridSpec,
    f: int,
) -> GeoEstimate:
    """Fault-tolerant region: cells consistent with at least n - f bounds.

    Requires n >= 3f + 1 landmarks. With at most f landmarks reporting
    arbitrarily, the true cell still satisfies all n - f honest bounds,
    so it stays in the region no matter what the liars say.
    """
    if f < 0:
        raise ValueError("f must be nonnegative")
    usable = _usable(measurements)
    n = len(usable)
    if n < 3 * f + 1:
        raise InsufficientLandmarksError(f"need at least {3 * f + 1} landmarks, have {n}")
    slack = grid.half_diagonal_km()
    counts = np.zeros((grid.n_lat, grid.n_lon), dtype=np.int32)
    violations = []
    for m in usable:
        lm = landmarks[m.landmark_id]
        bound = delay_to_distance(m, lm.calibration)
        if bound.floor_violation:
            violations.append(m.landmark_id)  # unsatisfiable everywhere
            continue
        counts += grid.distances_km(lm.position) <= bound.bound_km + slack
    mask = counts >= (n - f)
    empty = not bool(mask.any())
    return GeoEstimate(grid, mask, None, empty=empty, floor_violations=tuple(violations))


class InsufficientLandmarksError(ValueError):
    """BFT estimation needs n >= 3f + 1 landmarks."""


# Floors for the fitted lognormal jitter model; keep degenerate (zero-jitter)
# histories well defined.
_RESIDUAL_FLOOR_MS = 1e-6
_SIGMA_FLOOR = 0.05


def _fit_history(
    history: Sequence[tuple[float, float]], calibration: Calibration
) -> tuple[float, float]:
    """Fit lognormal (mu, sigma) to per-sample extra one-way delay."""
    residuals = []
    for rtt_ms, distance_km in history:
        expected = distance_km * calibration.rho / calibration.speed_km_per_ms()
        residuals.append(
            max(rtt_ms / 2.0 - calibration.fixed_overhead_ms - expected, _RESIDUAL_FLOOR_MS)
        )
    logs = np.log(residuals)
    mu = float(np.mean(logs))
    sigma = max(float(np.std(logs)), _SIGMA_FLOOR)
    return mu, sigma


def estimate_likelihood(
    measurements: Sequence[Measurement],
    landmarks: dict[str, Landmark],
    grid: GridSpec,
    history: Optional[dict[str, Sequence[tuple[float, float]]]],
) -> GeoEstimate:
    """Maximum-likelihood cell under per-landmark calibrated jitter models.

    `history` maps landmark id to (rtt_ms, true_distance_km) samples used to
    fit each landmark's extra-delay distribution. Without history for every
    used landmark the estimator falls back to disk intersection and says so.
    The argmax cell is the point estimate; ties break to the lowest latitude,
    then the lowest longitude.
    """
    usable = _usable(measurements)
    if not usable:
        mask = np.zeros((grid.n_lat, grid.n_lon), dtype=bool)
        return GeoEstimate(grid, mask, None, empty=True)
    if not history or any(not history.get(m.landmark_id) for m in usable):
        est = estimate_cbg(measurements, landmarks, grid)
        est.fallback = True
        return est

    slack = grid.half_diagonal_km()
    score = np.zeros((grid.n_lat, grid.n_lon), dtype=np.float64)
    violations = []
    for m in usable:
        lm = landmarks[m.landmark_id]
        cal = lm.calibration
        mu, sigma = _fit_history(history[m.landmark_id], cal)
        distances = grid.distances_km(lm.position)
        if m.rtt_ms / 2.0 - cal.fixed_overhead_ms < 0.0:
            violations.append(m.landmark_id)
            continue
        speed = cal.speed_km_per_ms()
        residual = m.rtt_ms / 2.0 - cal.fixed_overhead_ms - distances * cal.rho / speed
        # Feasibility is judged at grid granularity (best case within the
        # cell); the score itself uses the cell center.
        residual_best = residual + slack * cal.rho / speed
        feasible = residual_best >= 0.0
        clipped = np.clip(residual, _RESIDUAL_FLOOR_MS, None)
        log_r = np.log(clipped)
        logpdf = -log_r - math.log(sigma * math.sqrt(2.0 * math.pi)) \
            - ((log_r - mu) ** 2) / (2.0 * sigma**2)
        score += np.where(feasible, logpdf, -np.inf)

    mask = np.isfinite(score)
    if not mask.any():
        return GeoEstimate(grid, mask, None, empty=True, floor_violations=tuple(violations))
    i, j = argmax_cell(score)
    return GeoEstimate(
        grid, mask, grid.center_of(i, j), empty=False, floor_violations=tuple(violations)
    )


def argmax_cell(score: np.ndarray) -> tuple[int, int]:
    """Highest-scoring cell; ties break to the lowest row, then column."""
    best = np.max(score[np.isfinite(score)])
    candidates = np.argwhere(score == best)
    return min((int(r), int(c)) for r, c in candidates)


# -- spherical triangle verification ------------------------------------------


def _unit_vector(p: GeoPoint) -> np.ndarray:
    lat = math.radians(p.latitude)
    lon = math.radians(p.longitude)
    return np.array(
        [math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)]
    )


def spherical_excess_sr(a: GeoPoint, b: GeoPoint, c: GeoPoint) -> float:
    """Solid angle of the spherical triangle, in steradians."""
    va, vb, vc = _unit_vector(a), _unit_vector(b), _unit_vector(c)
    numerator = abs(float(np.dot(va, np.cross(vb, vc))))
    denominator = 1.0 + float(np.dot(va, vb)) + float(np.dot(vb, vc)) + float(np.dot(vc, va))
    return 2.0 * math.atan2(numerator, denominator)


def point_in_spherical_triangle(p: GeoPoint, a: GeoPoint, b: GeoPoint, c: GeoPoint) -> bool:
    """Same-hemisphere test against each edge's great circle.

    Well defined for triangles contained in a hemisphere, which covers any
    realistic landmark geometry (continental scale at most).
    """
    vp = _unit_vector(p)
    va, vb, vc = _unit_vector(a), _unit_vector(b), _unit_vector(c)
    for v1, v2, opposite in ((va, vb, vc), (vb, vc, va), (vc, va, vb)):
        normal = np.cross(v1, v2)
        side_p = float(np.dot(normal, vp))
        side_ref = float(np.dot(normal, opposite))
        if side_p * side_ref < 0.0:
            return False
    return True


class TriangleVerdict(Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    INDETERMINATE = "indeterminate"


def verify_triangle(
    measurements: Sequence[Measurement],
    landmarks: dict[str, Landmark],
    claimed: GeoPoint,
    tolerance_km: float = DEFAULT_TRIANGLE_TOLERANCE_KM,
    collinearity_eps_sr: float = DEFAULT_COLLINEARITY_EPS_SR,
) -> TriangleVerdict:
    """Check a claimed location against three landmarks.

    Inside requires both spherical containment in the landmark triangle and
    every distance bound consistent with the claimed point within tolerance.
    Collinear landmarks cannot decide and return indeterminate.
    """
    usable = _usable(measurements)
    if len(usable) != 3:
        raise ValueError("triangle verification needs exactly 3 verified measurements")
    lms = [landmarks[m.landmark_id] for m in usable]
    if spherical_excess_sr(*(lm.position for lm in lms)) < collinearity_eps_sr:
        return TriangleVerdict.INDETERMINATE
    if not point_in_spherical_triangle(claimed, *(lm.position for lm in lms)):
        return TriangleVerdict.OUTSIDE
    for m, lm in zip(usable, lms):
        bound = delay_to_distance(m, lm.calibration)
        if bound.floor_violation:
            return TriangleVerdict.OUTSIDE
        if geodesic_distance(claimed, lm.position) > bound.bound_km + tolerance_km:
            return TriangleVerdict.OUTSIDE
    return TriangleVerdict.INSIDE


# -- descent ------------------------------------------------------------------


@dataclass(frozen=True)
class DescentResult:
    point: GeoPoint
    objective_km2: float
    iterations: int
    converged: bool
    status: str
    start: str = "init"


def _distance_and_gradient(
    lat_deg: float, lon_deg: float, landmark: GeoPoint
) -> tuple[float, float, float]:
    """Haversine distance and its partials w.r.t. the first point, per degree."""
    p1 = math.radians(lat_deg)
    l1 = math.radians(lon_deg)
    p2 = math.radians(landmark.latitude)
    l2 = math.radians(landmark.longitude)
    dphi = p2 - p1
    dlam = l2 - l1
    a = math.sin(dphi / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlam / 2.0) ** 2
    a = min(max(a, 0.0), 1.0)
    d = 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))
    denom = math.sqrt(max(a * (1.0 - a), 1e-18))
    dd_da = EARTH_RADIUS_KM / denom
    da_dp1 = -math.sin(dphi) / 2.0 - math.sin(p1) * math.cos(p2) * math.sin(dlam / 2.0) ** 2
    da_dl1 = -math.cos(p1) * math.cos(p2) * math.sin(dlam) / 2.0
    to_rad = math.pi / 180.0
    return d, dd_da * da_dp1 * to_rad, dd_da * da_dl1 * to_rad


def descent_objective_and_gradient(
    lat_deg: float,
    lon_deg: float,
    targets: Sequence[tuple[GeoPoint, float]],
) -> tuple[float, float, float]:
    """Sum of squared (distance - target) residuals and its gradient."""
    f = 0.0
    g_lat = 0.0
    g_lon = 0.0
    for position, target_km in targets:
        d, dd_lat, dd_lon = _distance_and_gradient(lat_deg, lon_deg, position)
        residual = d - target_km
        f += residual * residual
        g_lat += 2.0 * residual * dd_lat
        g_lon += 2.0 * residual * dd_lon
    return f, g_lat, g_lon


def _descend_from(
    start: GeoPoint,
    targets: Sequence[tuple[GeoPoint, float]],
    max_iterations: int,
    step_tolerance_deg: float,
    label: str,
) -> DescentResult:
    lat, lon = start.latitude, start.longitude
    f, g_lat, g_lon = descent_objective_and_gradient(lat, lon, targets)
    step_deg = 1.0
    status = "max_iterations"
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        g_norm = math.hypot(g_lat, g_lon)
        if g_norm == 0.0:
            status, converged = "stationary", True
            break
        d_lat, d_lon = -g_lat / g_norm, -g_lon / g_norm
        improved = False
        t = step_deg
        while t >= step_tolerance_deg / 4.0:
            new_lat = min(max(lat + t * d_lat, -90.0), 90.0)
            new_lon = lon + t * d_lon
            new_f, new_g_lat, new_g_lon = descent_objective_and_gradient(new_lat, new_lon, targets)
            if new_f <= f - 1e-4 * t * g_norm:
                lat, lon, f, g_lat, g_lon = new_lat, new_lon, new_f, new_g_lat, new_g_lon
                improved = True
                break
            t /= 2.0
        if not improved:
            # Full backtracking sweep failed to decrease: either converged
            # to numerical precision or genuinely stuck; report it.
            status = "no_descent_step"
            converged = f < 1e-9 or g_norm * step_tolerance_deg < 1e-9
            break
        if t < step_tolerance_deg:
            status, converged = "step_tolerance", True
            break
        step_deg = min(t * 2.0, 8.0)
    return DescentResult(
        point=GeoPoint(lat, lon),
        objective_km2=f,
        iterations=iterations,
        converged=converged,
        status=status,
        start=label,
    )


def _coarse_scan_start(targets: Sequence[tuple[GeoPoint, float]], cells: int = 24) -> GeoPoint:
    """Cheapest cell of a coarse objective scan over the landmark extent."""
    lats = [pos.latitude for pos, _ in targets]
    lons = [pos.longitude for pos, _ in targets]
    pad = 5.0
    lat_lo, lat_hi = max(min(lats) - pad, -90.0), min(max(lats) + pad, 90.0)
    lon_lo, lon_hi = min(lons) - pad, max(lons) + pad
    best = None
    for i in range(cells):
        for j in range(cells):
            lat = lat_lo + (i + 0.5) * (lat_hi - lat_lo) / cells
            lon = lon_lo + (j + 0.5) * (lon_hi - lon_lo) / cells
            f, _, _ = descent_objective_and_gradient(lat, lon, targets)
            if best is None or f < best[0]:
                best = (f, lat, lon)
    return GeoPoint(best[1], best[2])


def estimate_descent(
    measurements: Sequence[Measurement],
    landmarks: dict[str, Landmark],
    init: GeoPoint,
    max_iterations: int = 500,
    step_tolerance_deg: float = 1e-6,
    multistart: bool = True,
) -> DescentResult:
    """Minimize squared distance residuals by backtracking gradient descent.

    The squared-residual surface has spurious local minima, so in addition
    to the caller's init the descent is seeded from the landmark centroid
    and the best cell of a coarse objective scan, keeping whichever run
    ends lowest (deterministic; the init run wins ties). The result's
    objective never exceeds the objective at the init point; a failure to
    decrease along a full backtracking sweep ends a run with a diagnostic
    status instead of a silent wrong answer.
    """
    usable = _usable(measurements)
    if len(usable) < 3:
        raise ValueError("descent needs at least 3 verified measurements")
    targets = []
    for m in usable:
        lm = landmarks[m.landmark_id]
        bound = delay_to_distance(m, lm.calibration)
        targets.append((lm.position, bound.bound_km))

    best = _descend_from(init, targets, max_iterations, step_tolerance_deg, "init")
    if multistart:
        centroid = GeoPoint(
            sum(pos.latitude for pos, _ in targets) / len(targets),
            sum(pos.longitude for pos, _ in targets) / len(targets),
        )
        starts = [(centroid, "centroid"), (_coarse_scan_start(targets), "coarse_scan")]
        for start, label in starts:
            candidate = _descend_from(start, targets, max_iterations, step_tolerance_deg, label)
            if candidate.objective_km2 < best.objective_km2 - 1e-12:
                best = candidate
    return best


# -- scenario helpers ----------------------------------------------------------


def synthesize_round(
    rng: random.Random,
    landmarks: Sequence[Landmark],
    truth: GeoPoint,
    jitter_median_ms: float,
    jitter_sigma: float,
    speedup: Optional[dict[str, float]] = None,
) -> list[Measurement]:
    """Closed-form honest measurements for estimator studies.

    Same physics as the event-driven path (two legs, lognormal jitter per
    leg, per-landmark calibrated overhead) without simulator bookkeeping;
    `speedup` maps landmark ids to a round-trip multiplier for
    response-time attacks.
    """
    measurements = []
    for lm in landmarks:
        distance = geodesic_distance(truth, lm.position)
        rtt = 0.0
        for _ in range(2):
            jitter = 0.0
            if jitter_median_ms > 0.0:
                jitter = jitter_median_ms * math.exp(jitter_sigma * rng.gauss(0.0, 1.0))
            rtt += (
                distance * lm.calibration.rho / lm.calibration.speed_km_per_ms()
                + lm.calibration.fixed_overhead_ms
                + jitter
            )
        if speedup and lm.id in speedup:
            rtt *= speedup[lm.id]
        measurements.append(
            Measurement(lm.id, rtt, b"synthetic", b"", verified=True, missing=False)
        )
    return measurements
