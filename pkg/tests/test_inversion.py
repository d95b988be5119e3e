import numpy as np
import pytest

from hslab.cgo import CgoParameter, build_cgo, eval_v
from hslab.forward import CauchyData, extract_cauchy, perturb_cauchy, solve_forward
from hslab.grid import CubeGrid
from hslab.inversion import (
    Matching,
    ModelOrderError,
    PlaneWave,
    ball_lattice,
    boundary_pairing,
    cgo_stability_constants,
    default_test_family,
    fibonacci_directions,
    imaging_functional,
    match_sources,
    recover_multi_source,
    recover_single_source,
    select_xi_amplitude,
    select_xi_location,
)
from hslab.media import MeasurementSphere, Medium, PointSourceSet, eval_u0, u0_gradient

R0 = np.pi
SPHERE = MeasurementSphere(1.4, 48, 96)
GRID16 = CubeGrid(R0, 16)


def closed_form_data(sources, k, sphere=SPHERE):
    x = sphere.nodes
    u = eval_u0(sources, k, x)
    dn = np.einsum("ij,ij->i", sphere.normals, u0_gradient(sources, k, x))
    return CauchyData(sphere, u, dn)


def embedding_constant(grid):
    return float(
        (2.0 * grid.R0) ** -1.5 * np.sqrt(np.sum((1.0 + grid.alpha_sq) ** -2))
    )


class TestPairing:
    def test_plane_wave_phase(self):
        src = PointSourceSet([1.0], [[0.0, 0.0, 0.5]], eta=0.05)
        data = closed_form_data(src, 2.0)
        pw = PlaneWave(2.0, (0.0, 0.0, 1.0))
        out = boundary_pairing(data, pw)
        assert abs(out.value - np.exp(1j * 1.0)) < 1e-6

    def test_zero_data(self):
        zero = CauchyData(
            SPHERE,
            np.zeros(len(SPHERE.weights), complex),
            np.zeros(len(SPHERE.weights), complex),
        )
        out = boundary_pairing(zero, PlaneWave(2.0, (1.0, 0, 0)))
        assert out.value == 0.0

    def test_linearity_in_data(self):
        s1 = PointSourceSet([1.0], [[0.3, 0.0, 0.0]], eta=0.05)
        s2 = PointSourceSet([0.7], [[-0.2, 0.4, 0.1]], eta=0.05)
        d1 = closed_form_data(s1, 2.0)
        d2 = closed_form_data(s2, 2.0)
        pw = PlaneWave(2.0, (0.2, -0.5, 0.8))
        a = boundary_pairing(d1, pw).value
        b = boundary_pairing(d2, pw).value
        c = boundary_pairing(d1 - d2, pw).value
        assert abs(c - (a - b)) < 1e-13

    def test_identity_for_random_sources_and_plane_waves(self):
        rng = np.random.default_rng(0)
        k = 3.0
        for _ in range(20):
            n = int(rng.integers(1, 4))
            locs = rng.uniform(-0.6, 0.6, size=(n, 3))
            amps = rng.uniform(0.2, 1.5, size=n)
            src = PointSourceSet(amps, locs, eta=0.04)
            data = closed_form_data(src, k)
            d = rng.standard_normal(3)
            pw = PlaneWave(k, tuple(d))
            expected = np.sum(amps * np.exp(1j * locs @ pw.xi))
            assert abs(boundary_pairing(data, pw).value - expected) < 1e-6

    def test_identity_with_complex_frequency(self):
        rng = np.random.default_rng(1)
        k = 2.0
        for _ in range(10):
            src = PointSourceSet(
                rng.uniform(0.3, 1.2, 2), rng.uniform(-0.5, 0.5, (2, 3)), eta=0.05
            )
            data = closed_form_data(src, k)
            t1 = float(rng.uniform(0.2, 1.4))
            param = CgoParameter.from_direction(k, rng.standard_normal(3), t1=t1)
            sol = build_cgo(Medium.free(), param, GRID16)
            expected = np.sum(
                src.amplitudes * np.exp(1j * src.locations @ param.xi)
            )
            got = boundary_pairing(data, sol).value
            assert abs(got - expected) < 1e-6 * max(1.0, abs(expected))

    def test_medium_pairing_matches_test_solution(self):
        k = 2.0
        med = Medium.single_bump(0.25, radius=0.7)
        src = PointSourceSet([1.0], [[0.95, 0.0, 0.0]], eta=0.05)
        data = extract_cauchy(solve_forward(src, med, k, n_lattice=24), SPHERE)
        grid = CubeGrid(R0, 32)
        sol = build_cgo(med, CgoParameter.from_direction(k, [0.3, 0.5, 1.0], t1=1.0), grid)
        got = boundary_pairing(data, sol).value
        model = eval_v(sol, src.locations[:1])[0]
        assert abs(got - model) / abs(model) < 1e-4


class TestConstants:
    def test_free_medium_reduction(self):
        k = 2.0
        consts = cgo_stability_constants(Medium.free(), k, GRID16, 0.2, SPHERE)
        assert consts.imag_floor == pytest.approx(max(np.pi / R0, k))
        assert consts.phi_h3_cap == 0.0

    def test_scaling_doubles_medium_candidates(self):
        k = 1.0
        c = 0.2
        m1 = Medium.single_bump(0.2, radius=0.9)
        m2 = Medium.single_bump(0.4, radius=0.9)
        g = CubeGrid(R0, 16)
        cand1 = 2916.0 * R0 * k**2 * m1.h_norm(g, 2) * c / np.pi
        cand2 = 2916.0 * R0 * k**2 * m2.h_norm(g, 2) * c / np.pi
        assert cand2 >= 2 * cand1 * (1 - 1e-12)

    def test_recomputation_oracle(self):
        k = 1.0
        med = Medium.single_bump(0.3, radius=1.2)
        c_embed = embedding_constant(GRID16)
        consts = cgo_stability_constants(med, k, GRID16, c_embed, SPHERE)
        q_h2 = med.h_norm(GRID16, 2)
        q_c2 = med.c2_norm()
        q_c0 = med.c0_norm()
        base = max(
            2916 * R0 * k**2 * q_h2 * c_embed / np.pi,
            2 * R0 * k**2 * q_c2 / np.pi,
            np.pi / R0,
            k,
        )
        lead = (R0 * k**2 / np.pi) * (4 * q_c0 + 24) + 13.5
        cap_a = lead * 18 * R0 * k**2 / np.pi * q_h2
        cap_b = 4 * R0 * k**2 / np.pi * q_h2
        m = consts.imag_floor
        assert m >= base * (1 - 1e-12)
        assert consts.phi_h3_cap == pytest.approx(cap_a / m + cap_b, rel=1e-12)
        assert (24.0 / 11.0) * c_embed * consts.phi_h3_cap <= m * (1 + 1e-9)


class TestXiSelection:
    def test_free_medium_root_is_zero(self):
        k = 2.0
        consts = cgo_stability_constants(Medium.free(), k, GRID16, 0.2, SPHERE)
        z1 = np.array([0.3, 0.0, 0.0])
        z2 = np.array([-0.1, 0.2, 0.0])
        param = select_xi_amplitude(z1, z2, consts, Medium.free(), k, GRID16)
        assert param.t2 == 0.0
        sol = build_cgo(Medium.free(), param, GRID16)
        v1 = abs(eval_v(sol, z1))
        v2 = abs(eval_v(sol, z2))
        assert abs(v1 - v2) <= 1e-8 * v1

    def test_frame_geometry(self):
        k = 2.0
        consts = cgo_stability_constants(Medium.free(), k, GRID16, 0.2, SPHERE)
        z1 = np.array([0.4, 0.1, -0.2])
        z2 = np.array([-0.2, 0.3, 0.1])
        param = select_xi_location(z1, z2, consts, k)
        tri = param.triad
        assert np.max(np.abs(tri.T @ tri - np.eye(3))) < 1e-12
        delta = z1 - z2
        assert abs(delta @ param.e1) < 1e-12
        assert abs(delta @ param.e3) < 1e-12
        assert abs(param.xi @ param.xi - k**2) < 1e-12

    def test_bump_medium_moduli_equalized(self):
        k = 1.0
        med = Medium.single_bump(0.15, radius=1.1)
        c_embed = embedding_constant(GRID16)
        consts = cgo_stability_constants(med, k, GRID16, c_embed, SPHERE)
        z1 = np.array([0.3, 0.05, 0.0])
        z2 = np.array([-0.25, -0.1, 0.15])
        param = select_xi_amplitude(z1, z2, consts, med, k, GRID16, tol=1e-11)
        sol = build_cgo(med, param, GRID16, tol=1e-11)
        xi_im = sol.xi.imag
        log_ratio = float(
            -xi_im @ (z1 - z2)
            + np.log(abs(1 + sol.phi_at(z1)))
            - np.log(abs(1 + sol.phi_at(z2)))
        )
        assert abs(np.expm1(log_ratio)) <= 1e-8
        assert abs(param.t2) <= 2.0 * consts.grad_phi_cap + 1e-12

    def test_location_certificate_both_sides_reported(self):
        # evaluated lower bound of the real-part increment; can fail for
        # oscillatory phase, which is exactly why both sides are reported
        k = 2.0
        consts = cgo_stability_constants(Medium.free(), k, GRID16, 0.2, SPHERE)
        z1 = np.array([0.2, 0.0, 0.0])
        z2 = np.array([-0.2, 0.1, 0.0])
        param = select_xi_location(z1, z2, consts, k)
        sol = build_cgo(Medium.free(), param, GRID16)
        lhs = abs((eval_v(sol, z1) - eval_v(sol, z2)).real)
        m = consts.imag_floor
        rhs = (11.0 / 12.0) * m * np.linalg.norm(z1 - z2) * np.exp(-2 * m * R0)
        assert np.isfinite(lhs) and np.isfinite(rhs)

    def test_amplitude_certificate_inequality(self):
        k = 2.0
        consts = cgo_stability_constants(Medium.free(), k, GRID16, 0.2, SPHERE)
        s1 = PointSourceSet([1.0], [[0.3, 0.0, 0.0]], eta=0.05)
        s2 = PointSourceSet([0.8], [[-0.1, 0.2, 0.0]], eta=0.05)
        d1 = closed_form_data(s1, k)
        d2 = closed_form_data(s2, k)
        param = select_xi_amplitude(
            s1.locations[0], s2.locations[0], consts, Medium.free(), k, GRID16
        )
        sol = build_cgo(Medium.free(), param, GRID16)
        gap = boundary_pairing(d1 - d2, sol).value
        v1 = abs(eval_v(sol, s1.locations[0]))
        rhs = (
            abs(gap)
            / v1
            * np.exp(5 * R0 * param.imag_norm)
            * np.sqrt(SPHERE.area)
        )
        assert abs(1.0 - 0.8) <= rhs


class TestImaging:
    def test_zero_data_zero_map(self):
        zero = CauchyData(
            SPHERE,
            np.zeros(len(SPHERE.weights), complex),
            np.zeros(len(SPHERE.weights), complex),
        )
        pts = ball_lattice(1.0, 0.3)
        heat = imaging_functional(zero, 3.0, pts, 64)
        assert np.all(heat == 0.0)

    def test_min_direction_count(self):
        src = PointSourceSet([1.0], [[0.1, 0, 0]], eta=0.05)
        data = closed_form_data(src, 5.0)
        with pytest.raises(ValueError):
            imaging_functional(data, 5.0, ball_lattice(1.0, 0.3), 10)

    def test_single_source_peak_within_cell(self):
        k = 5.0
        src = PointSourceSet([1.0], [[0.1, -0.2, 0.3]], eta=0.05)
        data = closed_form_data(src, k)
        spacing = 0.15
        pts = ball_lattice(1.2, spacing)
        heat = imaging_functional(data, k, pts, 128)
        best = pts[np.argmax(heat)]
        assert np.linalg.norm(best - src.locations[0]) <= np.sqrt(3) * spacing

    def test_two_sources_give_two_maxima(self):
        k, eta = 5.0, 0.05
        z1 = np.array([0.4, 0.0, 0.0])
        z2 = z1 + 16 * eta * np.array([0.6, 0.8, 0.0])
        src = PointSourceSet([1.0, 0.9], [z1, z2], eta=eta)
        data = closed_form_data(src, k)
        spacing = 0.12
        pts = ball_lattice(1.25, spacing)
        heat = imaging_functional(data, k, pts, 192)
        order = np.argsort(-heat)
        peaks = []
        for idx in order:
            z = pts[idx]
            if all(np.linalg.norm(z - p) > 6 * eta for p in peaks):
                peaks.append(z)
            if len(peaks) == 2:
                break
        d_true = sorted(
            [min(np.linalg.norm(p - z1), np.linalg.norm(p - z2)) for p in peaks]
        )
        assert d_true[1] < 0.35  # both peaks sit near distinct sources
        assert (
            np.linalg.norm(peaks[0] - z1) < 0.35
            or np.linalg.norm(peaks[0] - z2) < 0.35
        )


class TestSingleRecovery:
    def test_exact_recovery_free_space(self):
        k = 2.0
        src = PointSourceSet([1.0], [[0.1, 0.0, 0.0]], eta=0.05)
        data = closed_form_data(src, k)
        out = recover_single_source(data, Medium.free(), k, np.array([0.4, 0.2, -0.2]))
        assert abs(out.amplitude - 1.0) <= 1e-6
        assert np.linalg.norm(out.location - src.locations[0]) <= 1e-6

    def test_zero_amplitude_flagged(self):
        zero = CauchyData(
            SPHERE,
            np.zeros(len(SPHERE.weights), complex),
            np.zeros(len(SPHERE.weights), complex),
        )
        out = recover_single_source(zero, Medium.free(), 2.0, np.array([0.2, 0, 0]))
        assert out.flag == "amplitude-degenerate"
        assert abs(out.amplitude) <= 1e-8

    def test_noise_scaling_slope(self):
        k = 2.0
        src = PointSourceSet([1.0], [[0.3, -0.2, 0.1]], eta=0.05)
        data = closed_form_data(src, k)
        eps_list, err_a, err_z = [], [], []
        for eps in (1e-4, 1e-3, 1e-2):
            for seed in range(3):
                noisy = perturb_cauchy(data, eps, seed=seed)
                out = recover_single_source(
                    noisy, Medium.free(), k, np.array([0.4, -0.1, 0.0])
                )
                eps_list.append(eps)
                err_a.append(abs(out.amplitude - 1.0))
                err_z.append(np.linalg.norm(out.location - src.locations[0]))
        sa = np.polyfit(np.log(eps_list), np.log(err_a), 1)[0]
        sz = np.polyfit(np.log(eps_list), np.log(err_z), 1)[0]
        assert sa >= 0.9
        assert sz >= 0.9


class TestMultiRecovery:
    def test_empty_data(self):
        zero = CauchyData(
            SPHERE,
            np.zeros(len(SPHERE.weights), complex),
            np.zeros(len(SPHERE.weights), complex),
        )
        out = recover_multi_source(zero, Medium.free(), 5.0, eta=0.05)
        assert len(out.recovered) == 0

    def test_three_sources_recovered(self):
        k, eta = 5.0, 0.04
        src = PointSourceSet(
            [1.0, 0.8, 1.2],
            [[0.6, 0.2, -0.1], [-0.5, -0.4, 0.3], [0.0, 0.6, 0.5]],
            eta=eta,
        )
        data = closed_form_data(src, k)
        out = recover_multi_source(data, Medium.free(), k, eta=eta)
        m = match_sources(src, out.recovered, eta)
        assert len(m.pairs) == 3 and not m.unmatched_second
        for i, j in m.pairs.items():
            assert abs(src.amplitudes[i] - out.recovered.amplitudes[j]) <= 1e-4
            assert (
                np.linalg.norm(src.locations[i] - out.recovered.locations[j]) <= 1e-4
            )

    def test_strong_plus_silent_source(self):
        k = 5.0
        src = PointSourceSet([1.0, 0.0], [[0.3, 0, 0], [-0.5, 0.2, 0]], eta=0.05)
        data = closed_form_data(src, k)
        out = recover_multi_source(data, Medium.free(), k, eta=0.05)
        assert len(out.recovered) == 1
        assert abs(out.recovered.amplitudes[0] - 1.0) <= 1e-6
        assert np.linalg.norm(out.recovered.locations[0] - [0.3, 0, 0]) <= 1e-6

    def test_model_order_cap(self):
        k = 5.0
        src = PointSourceSet(
            [1.0, 1.0, 1.0],
            [[0.6, 0.2, -0.1], [-0.5, -0.4, 0.3], [0.0, 0.6, 0.5]],
            eta=0.04,
        )
        data = closed_form_data(src, k)
        with pytest.raises(ModelOrderError):
            recover_multi_source(data, Medium.free(), k, eta=0.04, n_max=2)


class TestMatching:
    def test_identity(self):
        s = PointSourceSet([1.0, 0.5], [[0.3, 0, 0], [-0.4, 0.2, 0]], eta=0.03)
        m = match_sources(s, s, 0.03)
        assert m.pairs == {0: 0, 1: 1}
        assert not m.unmatched_first and not m.unmatched_second

    def test_removed_source_lands_unmatched(self):
        s1 = PointSourceSet([1.0, 0.5], [[0.3, 0, 0], [-0.4, 0.2, 0]], eta=0.03)
        s2 = PointSourceSet([0.5], [[-0.4, 0.2, 0]], eta=0.03)
        m = match_sources(s1, s2, 0.03)
        assert m.pairs == {1: 0}
        assert m.unmatched_first == (0,)
        assert not m.unmatched_second

    def test_no_ball_holds_two_candidates(self):
        # separation makes double-matching geometrically impossible
        from conftest import random_admissible

        rng = np.random.default_rng(4)
        for _ in range(20):
            eta = 0.05
            s1 = random_admissible(rng, SPHERE, eta, 3)
            s2 = random_admissible(rng, SPHERE, eta, 3)
            for z in s1.locations:
                inside = np.sum(
                    np.linalg.norm(s2.locations - z, axis=1) < 3 * eta
                )
                assert inside <= 1
            match_sources(s1, s2, eta)  # never raises for admissible sets
