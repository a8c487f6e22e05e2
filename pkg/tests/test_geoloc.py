"""Location verification tests against ground-truth and brute-force oracles."""

import math
import random

import numpy as np
import pytest

from hemsim import canon
from hemsim.chipmodel import Registry, provision_chip
from hemsim.geoloc import (
    Calibration,
    GridSpec,
    InsufficientLandmarksError,
    Landmark,
    Measurement,
    TriangleVerdict,
    argmax_cell,
    challenge_round,
    delay_to_distance,
    descent_objective_and_gradient,
    estimate_bft,
    estimate_cbg,
    estimate_descent,
    estimate_likelihood,
    point_in_spherical_triangle,
    spherical_excess_sr,
    synthesize_round,
    verify_triangle,
)
from hemsim.netsim import GeoPoint, LatencyModel, Network, Node, Simulator, geodesic_distance

C_KM_S = 299792.458


def make_world(landmark_positions, chip_position, jitter_median=0.0, jitter_sigma=0.5,
               overhead=1.0, seed=5):
    """Simulator + network + provisioned chip + landmarks sharing one latency model."""
    rng = random.Random(seed)
    issuer_key = canon.generate_keypair(rng.randbytes(32))
    chip = provision_chip(rng, frozenset({issuer_key.public_bytes}))
    registry = Registry()
    registry.enroll(chip)
    landmarks = [
        Landmark(f"lm{i}", pos, calibration=Calibration(fixed_overhead_ms=overhead))
        for i, pos in enumerate(landmark_positions)
    ]
    nodes = [Node(lm.id, lm.position, role="landmark") for lm in landmarks]
    nodes.append(Node("chip", chip_position))
    net = Network(
        nodes,
        default_latency=LatencyModel(
            kappa=0.67,
            jitter_median_ms=jitter_median,
            jitter_sigma=jitter_sigma,
            fixed_overhead_ms=overhead,
        ),
    )
    sim = Simulator(seed=seed)
    return sim, net, chip, registry, landmarks


class TestChallengeRound:
    def test_colocated_zero_jitter_rtt_is_twice_overhead(self):
        pos = GeoPoint(10.0, 10.0)
        sim, net, chip, registry, landmarks = make_world([pos], pos, overhead=1.5)
        ms = challenge_round(sim, net, landmarks, chip.identity.device_id, "chip",
                             chip.sign, registry)
        assert len(ms) == 1 and ms[0].verified
        assert ms[0].rtt_ms == pytest.approx(3.0)

    def test_three_honest_landmarks_three_verified(self):
        sim, net, chip, registry, landmarks = make_world(
            [GeoPoint(0, 0), GeoPoint(0, 10), GeoPoint(10, 5)], GeoPoint(4, 5),
            jitter_median=0.5,
        )
        ms = challenge_round(sim, net, landmarks, chip.identity.device_id, "chip",
                             chip.sign, registry)
        assert len(ms) == 3
        assert all(m.verified and not m.missing for m in ms)

    def test_wrong_key_response_flagged_unverified(self):
        sim, net, chip, registry, landmarks = make_world([GeoPoint(0, 0)], GeoPoint(1, 1))
        rogue = canon.generate_keypair(random.Random(77).randbytes(32))
        ms = challenge_round(sim, net, landmarks, chip.identity.device_id, "chip",
                             rogue.sign, registry)
        assert len(ms) == 1
        assert not ms[0].verified and not ms[0].missing

    def test_dropped_response_marked_missing(self):
        sim, net, chip, registry, landmarks = make_world([GeoPoint(0, 0)], GeoPoint(1, 1))
        net.drop_hooks.append(lambda src, dst: src == "chip")
        ms = challenge_round(sim, net, landmarks, chip.identity.device_id, "chip",
                             chip.sign, registry)
        assert ms[0].missing

    def test_rtt_reflects_distance(self):
        far = GeoPoint(0.0, 30.0)
        sim, net, chip, registry, landmarks = make_world([GeoPoint(0, 0)], far, overhead=0.0)
        ms = challenge_round(sim, net, landmarks, chip.identity.device_id, "chip",
                             chip.sign, registry, timeout_ms=10_000.0)
        d = geodesic_distance(GeoPoint(0, 0), far)
        assert ms[0].rtt_ms == pytest.approx(2 * d / (C_KM_S * 0.67) * 1000.0)


class TestDelayToDistance:
    def test_floor_rtt_inverts_to_exact_distance(self):
        cal = Calibration(kappa=0.67, fixed_overhead_ms=2.0)
        rtt = 2.0 * (1000.0 / cal.speed_km_per_ms() + 2.0)
        m = Measurement("lm", rtt, b"", b"", verified=True)
        bound = delay_to_distance(m, cal)
        assert not bound.floor_violation
        assert bound.bound_km == pytest.approx(1000.0)

    def test_rtt_below_twice_overhead_flags_impossible(self):
        cal = Calibration(fixed_overhead_ms=2.0)
        m = Measurement("lm", 0.0, b"", b"", verified=True)
        assert delay_to_distance(m, cal).floor_violation

    def test_added_congestion_only_increases_bound(self):
        cal = Calibration(kappa=0.67, fixed_overhead_ms=1.0)
        rng = random.Random(4)
        base_rtt = 2.0 * (500.0 / cal.speed_km_per_ms() + 1.0)
        base = delay_to_distance(Measurement("lm", base_rtt, b"", b"", True), cal).bound_km
        for _ in range(200):
            congested = base_rtt + rng.uniform(0.0, 20.0)
            bound = delay_to_distance(Measurement("lm", congested, b"", b"", True), cal).bound_km
            assert bound >= base - 1e-9

    def test_unverified_measurement_refused(self):
        with pytest.raises(ValueError):
            delay_to_distance(Measurement("lm", 5.0, b"", b"", verified=False), Calibration())


GRID = GridSpec(lat_min=-5.0, lat_max=25.0, lon_min=-5.0, lon_max=25.0, resolution_deg=0.25)


def honest_landmarks(positions, overhead=1.0):
    return {
        f"lm{i}": Landmark(f"lm{i}", pos, calibration=Calibration(fixed_overhead_ms=overhead))
        for i, pos in enumerate(positions)
    }


class TestCBG:
    def test_single_landmark_region_is_disk(self):
        lms = honest_landmarks([GeoPoint(10.0, 10.0)])
        truth = GeoPoint(12.0, 10.0)
        ms = synthesize_round(random.Random(1), list(lms.values()), truth, 0.0, 0.5)
        est = estimate_cbg(ms, lms, GRID)
        bound = delay_to_distance(ms[0], lms["lm0"].calibration).bound_km
        dists = GRID.distances_km(lms["lm0"].position)
        inside = dists <= bound
        assert est.mask[inside].all()  # every cell within the bound is in the region
        assert est.contains(truth)
        assert not est.empty

    def test_truth_contained_over_seeded_trials(self):
        for trial in range(60):
            rng = random.Random(9000 + trial)
            n = rng.randrange(3, 10)
            positions = [GeoPoint(rng.uniform(-3, 23), rng.uniform(-3, 23)) for _ in range(n)]
            lms = honest_landmarks(positions)
            truth = GeoPoint(rng.uniform(0, 20), rng.uniform(0, 20))
            ms = synthesize_round(rng, list(lms.values()), truth,
                                  jitter_median_ms=rng.uniform(0.05, 2.0), jitter_sigma=0.5)
            est = estimate_cbg(ms, lms, GRID)
            assert est.contains(truth), f"trial {trial} lost the truth"
            assert not est.empty

    def test_speedup_attack_raises_inconsistency(self):
        rng = random.Random(77)
        positions = [GeoPoint(0, 0), GeoPoint(0, 20), GeoPoint(20, 10), GeoPoint(18, 0)]
        lms = honest_landmarks(positions, overhead=0.5)
        truth = GeoPoint(6.0, 6.0)
        ms = synthesize_round(rng, list(lms.values()), truth, 0.1, 0.5,
                              speedup={"lm1": 0.5})
        est = estimate_cbg(ms, lms, GRID)
        assert est.inconsistent

    def test_slowdown_never_removes_truth_and_grows_region(self):
        rng = random.Random(42)
        positions = [GeoPoint(0, 0), GeoPoint(0, 20), GeoPoint(20, 10)]
        lms = honest_landmarks(positions)
        truth = GeoPoint(8.0, 8.0)
        ms = synthesize_round(rng, list(lms.values()), truth, 0.2, 0.5)
        base = estimate_cbg(ms, lms, GRID)
        slowed = [
            Measurement(m.landmark_id, m.rtt_ms + 10.0, m.nonce, m.response_signature,
                        m.verified)
            for m in ms
        ]
        grown = estimate_cbg(slowed, lms, GRID)
        assert base.contains(truth) and grown.contains(truth)
        assert grown.cell_count() >= base.cell_count()
        assert (grown.mask | base.mask).sum() == grown.mask.sum()  # superset

    def test_forged_measurements_never_influence(self):
        rng = random.Random(3)
        positions = [GeoPoint(0, 0), GeoPoint(0, 20), GeoPoint(20, 10)]
        lms = honest_landmarks(positions)
        lms["evil"] = Landmark("evil", GeoPoint(19, 19))
        truth = GeoPoint(8.0, 8.0)
        ms = synthesize_round(rng, [lms[f"lm{i}"] for i in range(3)], truth, 0.2, 0.5)
        forged = Measurement("evil", 0.01, b"n", b"bad-signature", verified=False)
        est_with = estimate_cbg(ms + [forged], lms, GRID)
        est_without = estimate_cbg(ms, lms, GRID)
        assert np.array_equal(est_with.mask, est_without.mask)

    def test_empty_region_flagged(self):
        lms = honest_landmarks([GeoPoint(0, 0), GeoPoint(0, 20)])
        # Two tiny disks around far-apart landmarks cannot intersect.
        ms = [
            Measurement("lm0", 2.2, b"", b"", verified=True),
            Measurement("lm1", 2.2, b"", b"", verified=True),
        ]
        est = estimate_cbg(ms, lms, GRID)
        assert est.empty and est.inconsistent

    def test_region_rle_round_trips_mask(self):
        rng = random.Random(5)
        lms = honest_landmarks([GeoPoint(10.0, 10.0)])
        ms = synthesize_round(rng, list(lms.values()), GeoPoint(11.0, 10.0), 0.1, 0.5)
        est = estimate_cbg(ms, lms, GRID)
        rebuilt = np.zeros_like(est.mask)
        for row in est.region_rle():
            for start, length in row["runs"]:
                rebuilt[row["row"], start:start + length] = True
        assert np.array_equal(rebuilt, est.mask)

    def test_measurement_record_fields(self):
        m = Measurement("lm0", 12.3456789, b"n", b"s", verified=True)
        record = m.to_record()
        assert record == {"landmark_id": "lm0", "rtt_ms": 12.3456789,
                          "verified": True, "missing": False}


class TestLikelihood:
    def _history_for(self, rng, lm, jitter_median, jitter_sigma, samples=60):
        history = []
        for _ in range(samples):
            d = rng.uniform(50.0, 2500.0)
            rtt = 0.0
            for _ in range(2):
                jitter = 0.0
                if jitter_median > 0.0:
                    jitter = jitter_median * math.exp(jitter_sigma * rng.gauss(0.0, 1.0))
                rtt += d / lm.calibration.speed_km_per_ms() \
                    + lm.calibration.fixed_overhead_ms + jitter
            history.append((rtt, d))
        return history

    def test_zero_jitter_history_argmax_is_true_cell(self):
        rng = random.Random(12)
        positions = [GeoPoint(0, 0), GeoPoint(0, 20), GeoPoint(20, 10)]
        lms = honest_landmarks(positions)
        truth = GRID.center_of(*GRID.cell_of(GeoPoint(9.1, 7.3)))  # snap to a cell center
        ms = synthesize_round(rng, list(lms.values()), truth, 0.0, 0.5)
        history = {lm_id: self._history_for(rng, lm, 0.0, 0.5) for lm_id, lm in lms.items()}
        est = estimate_likelihood(ms, lms, GRID, history)
        assert not est.fallback
        assert GRID.cell_of(est.point_estimate) == GRID.cell_of(truth)

    def test_symmetric_geometry_estimate_on_bisector(self):
        rng = random.Random(12)
        # Landmarks mirrored across lon = 10; grid centers include that column.
        grid = GridSpec(lat_min=-5.0, lat_max=25.0, lon_min=-5.125, lon_max=25.125,
                        resolution_deg=0.25)
        positions = [GeoPoint(0.0, 0.0), GeoPoint(0.0, 20.0)]
        lms = honest_landmarks(positions)
        truth = GeoPoint(10.125, 10.0)  # on the perpendicular bisector
        ms = synthesize_round(rng, list(lms.values()), truth, 0.0, 0.5)
        assert ms[0].rtt_ms == pytest.approx(ms[1].rtt_ms)
        history = {lm_id: self._history_for(rng, lm, 0.0, 0.5) for lm_id, lm in lms.items()}
        est = estimate_likelihood(ms, lms, grid, history)
        # Perpendicular bisector of the landmark pair is the lon = 10 line.
        assert est.point_estimate.longitude == pytest.approx(10.0)

    def test_argmax_invariant_under_uniform_scaling(self):
        rng = np.random.default_rng(5)
        score = rng.normal(size=(40, 40))
        assert argmax_cell(score) == argmax_cell(score + 123.456)

    def test_empty_history_falls_back_to_cbg(self):
        rng = random.Random(12)
        positions = [GeoPoint(0, 0), GeoPoint(0, 20), GeoPoint(20, 10)]
        lms = honest_landmarks(positions)
        truth = GeoPoint(9.0, 7.0)
        ms = synthesize_round(rng, list(lms.values()), truth, 0.1, 0.5)
        est = estimate_likelihood(ms, lms, GRID, history=None)
        assert est.fallback
        cbg = estimate_cbg(ms, lms, GRID)
        assert np.array_equal(est.mask, cbg.mask)

    def test_point_estimate_lies_inside_region(self):
        rng = random.Random(30)
        positions = [GeoPoint(0, 0), GeoPoint(0, 20), GeoPoint(20, 10)]
        lms = honest_landmarks(positions)
        truth = GeoPoint(7.0, 11.0)
        ms = synthesize_round(rng, list(lms.values()), truth, 0.3, 0.5)
        history = {lm_id: self._history_for(rng, lm, 0.3, 0.5) for lm_id, lm in lms.items()}
        est = estimate_likelihood(ms, lms, GRID, history)
        assert est.point_estimate is not None
        assert est.contains(est.point_estimate)


def winding_number_inside(p: GeoPoint, a: GeoPoint, b: GeoPoint, c: GeoPoint) -> bool:
    """Brute-force oracle: winding of the triangle boundary around p."""

    def unit(g):
        lat, lon = math.radians(g.latitude), math.radians(g.longitude)
        return np.array([math.cos(lat) * math.cos(lon),
                         math.cos(lat) * math.sin(lon),
                         math.sin(lat)])

    vp = unit(p)
    up = np.array([0.0, 0.0, 1.0])
    east = np.cross(up, vp)
    norm = np.linalg.norm(east)
    if norm < 1e-12:  # polar point; rotate the basis
        east = np.array([1.0, 0.0, 0.0])
    else:
        east = east / norm
    north = np.cross(vp, east)

    def azimuth(g):
        v = unit(g)
        w = v - vp * float(np.dot(v, vp))
        return math.atan2(float(np.dot(w, east)), float(np.dot(w, north)))

    angles = [azimuth(v) for v in (a, b, c)]
    total = 0.0
    for i in range(3):
        delta = angles[(i + 1) % 3] - angles[i]
        while delta > math.pi:
            delta -= 2.0 * math.pi
        while delta <= -math.pi:
            delta += 2.0 * math.pi
        total += delta
    return abs(total) > math.pi


class TestVerifyTriangle:
    def _equilateral(self):
        return [GeoPoint(0.0, 0.0), GeoPoint(0.0, 12.0), GeoPoint(10.392, 6.0)]

    def test_centroid_honest_delays_inside(self):
        positions = self._equilateral()
        lms = honest_landmarks(positions)
        centroid = GeoPoint(3.46, 6.0)
        ms = synthesize_round(random.Random(8), list(lms.values()), centroid, 0.05, 0.5)
        assert verify_triangle(ms, lms, centroid) is TriangleVerdict.INSIDE

    def test_claimed_outside_triangle_is_outside_regardless_of_delays(self):
        positions = self._equilateral()
        lms = honest_landmarks(positions)
        outside_point = GeoPoint(20.0, 20.0)
        ms = synthesize_round(random.Random(8), list(lms.values()), outside_point, 0.05, 0.5)
        assert verify_triangle(ms, lms, outside_point) is TriangleVerdict.OUTSIDE

    def test_inside_triangle_but_inconsistent_delays_rejected(self):
        positions = self._equilateral()
        lms = honest_landmarks(positions)
        centroid = GeoPoint(3.46, 6.0)
        elsewhere = GeoPoint(9.0, 11.0)  # delays say here, claim says centroid
        ms = synthesize_round(random.Random(8), list(lms.values()), elsewhere, 0.05, 0.5)
        assert verify_triangle(ms, lms, centroid) is TriangleVerdict.OUTSIDE

    def test_collinear_landmarks_indeterminate(self):
        positions = [GeoPoint(0.0, 0.0), GeoPoint(0.0, 5.0), GeoPoint(0.0, 10.0)]
        lms = honest_landmarks(positions)
        ms = synthesize_round(random.Random(8), list(lms.values()), GeoPoint(0.0, 5.0),
                              0.05, 0.5)
        assert verify_triangle(ms, lms, GeoPoint(0.0, 5.0)) is TriangleVerdict.INDETERMINATE

    def test_agrees_with_winding_number_oracle(self):
        # Hemisphere-contained triangles (continental landmark spreads);
        # beyond that "inside" is not well defined for either method.
        rng = random.Random(2718)
        checked = 0
        while checked < 10_000:
            lat0 = rng.uniform(-50.0, 50.0)
            lon0 = rng.uniform(-140.0, 140.0)
            pts = [
                GeoPoint(lat0 + rng.uniform(-25.0, 25.0), lon0 + rng.uniform(-25.0, 25.0))
                for _ in range(3)
            ]
            if spherical_excess_sr(*pts) < 1e-4:  # skip near-degenerate triangles
                continue
            p = GeoPoint(lat0 + rng.uniform(-35.0, 35.0), lon0 + rng.uniform(-35.0, 35.0))
            assert point_in_spherical_triangle(p, *pts) == winding_number_inside(p, *pts)
            checked += 1


class TestBFT:
    def _setup(self, n, seed=13):
        rng = random.Random(seed)
        positions = [GeoPoint(rng.uniform(-3, 23), rng.uniform(-3, 23)) for _ in range(n)]
        lms = honest_landmarks(positions)
        truth = GeoPoint(rng.uniform(2, 18), rng.uniform(2, 18))
        ms = synthesize_round(rng, list(lms.values()), truth, 0.2, 0.5)
        return rng, lms, truth, ms

    def test_f_zero_reduces_to_cbg(self):
        _, lms, truth, ms = self._setup(4)
        bft = estimate_bft(ms, lms, GRID, f=0)
        cbg = estimate_cbg(ms, lms, GRID)
        assert np.array_equal(bft.mask, cbg.mask)

    def test_two_garbage_landmarks_cannot_evict_truth(self):
        for trial in range(25):
            rng, lms, truth, ms = self._setup(7, seed=600 + trial)
            evil = rng.sample(range(7), 2)
            for idx in evil:
                ms[idx] = Measurement(ms[idx].landmark_id, rng.uniform(0.01, 500.0),
                                      b"", b"", verified=True)
            est = estimate_bft(ms, lms, GRID, f=2)
            assert est.contains(truth), f"trial {trial} evicted the truth"

    def test_insufficient_landmarks_refused(self):
        _, lms, _, ms = self._setup(4)
        with pytest.raises(InsufficientLandmarksError):
            estimate_bft(ms, lms, GRID, f=2)


class TestDescent:
    def _targets(self, rng, n=5):
        positions = [GeoPoint(rng.uniform(-20, 30), rng.uniform(-20, 40)) for _ in range(n)]
        truth = GeoPoint(rng.uniform(-5, 15), rng.uniform(-5, 25))
        return positions, truth

    def test_gradient_matches_central_finite_differences(self):
        rng = random.Random(99)
        h = 1e-5
        for _ in range(30):
            positions, _ = self._targets(rng)
            targets = [(pos, rng.uniform(100.0, 3000.0)) for pos in positions]
            lat = rng.uniform(-40, 40)
            lon = rng.uniform(-90, 90)
            f, g_lat, g_lon = descent_objective_and_gradient(lat, lon, targets)
            f_lat_p, _, _ = descent_objective_and_gradient(lat + h, lon, targets)
            f_lat_m, _, _ = descent_objective_and_gradient(lat - h, lon, targets)
            f_lon_p, _, _ = descent_objective_and_gradient(lat, lon + h, targets)
            f_lon_m, _, _ = descent_objective_and_gradient(lat, lon - h, targets)
            fd_lat = (f_lat_p - f_lat_m) / (2 * h)
            fd_lon = (f_lon_p - f_lon_m) / (2 * h)
            assert g_lat == pytest.approx(fd_lat, rel=1e-5, abs=1e-6 * max(1.0, abs(fd_lat)))
            assert g_lon == pytest.approx(fd_lon, rel=1e-5, abs=1e-6 * max(1.0, abs(fd_lon)))

    def test_zero_noise_recovery_from_hull_init(self):
        for trial in range(20):
            rng = random.Random(4000 + trial)
            positions = [GeoPoint(rng.uniform(-2, 22), rng.uniform(-2, 22)) for _ in range(5)]
            lms = honest_landmarks(positions)
            truth = GeoPoint(rng.uniform(4, 16), rng.uniform(4, 16))
            ms = synthesize_round(rng, list(lms.values()), truth, 0.0, 0.5)
            init = GeoPoint(rng.uniform(6, 14), rng.uniform(6, 14))
            result = estimate_descent(ms, lms, init)
            err = geodesic_distance(result.point, truth)
            assert err < GRID.resolution_deg * 111.32, f"trial {trial}: err {err:.2f} km"

    def test_init_at_truth_is_fixed_point(self):
        rng = random.Random(17)
        positions = [GeoPoint(0, 0), GeoPoint(0, 20), GeoPoint(20, 10)]
        lms = honest_landmarks(positions)
        truth = GeoPoint(8.0, 9.0)
        ms = synthesize_round(rng, list(lms.values()), truth, 0.0, 0.5)
        result = estimate_descent(ms, lms, truth)
        assert result.objective_km2 == pytest.approx(0.0, abs=1e-6)
        assert geodesic_distance(result.point, truth) < 1e-3

    def test_objective_never_exceeds_init_objective(self):
        rng = random.Random(23)
        positions = [GeoPoint(0, 0), GeoPoint(0, 20), GeoPoint(20, 10), GeoPoint(15, -5)]
        lms = honest_landmarks(positions)
        truth = GeoPoint(8.0, 9.0)
        ms = synthesize_round(rng, list(lms.values()), truth, 1.0, 0.8)
        targets = [
            (lms[m.landmark_id].position,
             delay_to_distance(m, lms[m.landmark_id].calibration).bound_km)
            for m in ms
        ]
        init = GeoPoint(2.0, 2.0)
        f_init, _, _ = descent_objective_and_gradient(init.latitude, init.longitude, targets)
        result = estimate_descent(ms, lms, init)
        assert result.objective_km2 <= f_init + 1e-9
