import numpy as np
import pytest

from hslab.analysis import (
    AnnularDomain,
    BumpField,
    PlaneOsc,
    PointKernelField,
    ProductField,
    carleman_check,
    cauchy_stability_experiment,
    eps_threshold,
    estimate_embedding_constant,
    holder_fit,
    mollified_cutoff,
    oscillatory_test_fields,
    product_cutoff,
    proof_chain_constant,
    tau_floor,
    theta_exponent,
)
from hslab.grid import CubeGrid, SpectralField, resample, sobolev_norm
from hslab.media import MeasurementSphere, Medium, PointSourceSet

R0 = np.pi
SPHERE = MeasurementSphere(1.4, 48, 96)


class TestEmbeddingConstant:
    def test_single_mode_ratio_recovered(self):
        grid = CubeGrid(R0, 16)
        coeffs = np.zeros((16,) * 3, complex)
        coeffs[0, 0, 0] = 1.0
        spec = SpectralField(grid, coeffs)
        c0 = np.max(np.abs(resample(spec, 32).values))
        ratio = c0 / sobolev_norm(spec, 2)
        alpha2 = (np.pi / R0 / 2.0) ** 2
        expected = (2 * R0) ** -1.5 / (1 + alpha2)
        assert ratio == pytest.approx(expected, rel=1e-12)
        assert estimate_embedding_constant(grid, trials=10) >= ratio

    def test_dominates_random_fields(self):
        grid = CubeGrid(R0, 12)
        est = estimate_embedding_constant(grid, trials=10)
        rng = np.random.default_rng(0)
        for _ in range(20):
            coeffs = (1.0 + grid.alpha_sq) ** -1.5 * (
                rng.standard_normal((12,) * 3) + 1j * rng.standard_normal((12,) * 3)
            )
            spec = SpectralField(grid, coeffs)
            ratio = np.max(np.abs(resample(spec, 24).values)) / sobolev_norm(spec, 2)
            assert ratio <= est * (1 + 1e-12)

    def test_resolution_stability(self):
        a = estimate_embedding_constant(CubeGrid(R0, 32), trials=5)
        b = estimate_embedding_constant(CubeGrid(R0, 64), trials=5)
        assert abs(a - b) / b < 0.2


class TestCutoff:
    def test_plateaus_exact(self):
        eta = 0.1
        chi = mollified_cutoff((0.2, -0.1, 0.0), eta)
        rng = np.random.default_rng(1)
        dirs = rng.standard_normal((200, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        inner = chi.value(np.array(chi.center) + 0.99 * eta * dirs)
        outer = chi.value(np.array(chi.center) + 2.01 * eta * dirs)
        far = chi.value(np.array(chi.center) + 3.0 * eta * dirs)
        assert np.all(inner == 0.0)
        assert np.all(outer == 1.0)
        assert np.all(far == 1.0)

    def test_range_and_partition(self):
        eta = 0.08
        chi = mollified_cutoff((0.0, 0.0, 0.0), eta)
        r = np.linspace(0, 3 * eta, 400)
        vals = chi.profile(r)
        assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
        assert np.max(np.abs(vals + (1.0 - vals) - 1.0)) == 0.0

    def test_profile_derivatives_match_finite_differences(self):
        eta = 0.1
        chi = mollified_cutoff((0.0, 0.0, 0.0), eta)
        r = np.linspace(1.05 * eta, 1.95 * eta, 9)
        h = 1e-6
        d_fd = (chi.profile(r + h) - chi.profile(r - h)) / (2 * h)
        assert np.max(np.abs(d_fd - chi.profile_d1(r))) < 1e-4 * np.max(
            np.abs(chi.profile_d1(r))
        )
        # laplacian in radial form: psi'' + 2 psi' / r
        dd_fd = (
            chi.profile_d1(r + h) - chi.profile_d1(r - h)
        ) / (2 * h) + 2.0 * chi.profile_d1(r) / r
        assert np.max(np.abs(dd_fd - chi.profile_lap(r))) < 1e-3 * np.max(
            np.abs(chi.profile_lap(r))
        )

    def test_gradient_field_consistent(self):
        eta = 0.1
        chi = mollified_cutoff((0.1, 0.0, -0.2), eta)
        rng = np.random.default_rng(2)
        pts = np.array(chi.center) + rng.uniform(-1.8, 1.8, (30, 3)) * eta
        g = chi.gradient(pts)
        h = 1e-6
        for axis in range(3):
            dp = np.zeros(3)
            dp[axis] = h
            fd = (chi.value(pts + dp) - chi.value(pts - dp)) / (2 * h)
            assert np.max(np.abs(fd - g[:, axis])) < 1e-4 * max(
                np.max(np.abs(g)), 1.0
            )

    def test_laplacian_scaling_factor_four(self):
        eta = 0.1
        big = mollified_cutoff((0, 0, 0), eta).sup_laplacian()
        small = mollified_cutoff((0, 0, 0), eta / 2).sup_laplacian()
        assert small / big == pytest.approx(4.0, rel=0.15)

    def test_derivative_bounds_scale(self):
        eta = 0.07
        chi = mollified_cutoff((0, 0, 0), eta)
        c_grad = chi.sup_gradient() * eta
        c_lap = chi.sup_laplacian() * eta**2
        assert 0.5 < c_grad < 50.0
        assert 0.5 < c_lap < 500.0

    def test_product_requires_separation(self):
        with pytest.raises(ValueError):
            product_cutoff([[0, 0, 0], [0.1, 0, 0]], eta=0.05)

    def test_product_vanishes_on_each_ball(self):
        eta = 0.05
        centers = np.array([[0.3, 0, 0], [-0.3, 0, 0]])
        chi = product_cutoff(centers, eta)
        for c in centers:
            assert np.all(chi.value(c[None, :] + 0.5 * eta * np.eye(3)) == 0.0)
        mid = np.array([[0.0, 0.0, 0.0]])
        assert chi.value(mid)[0] == 1.0

    def test_product_laplacian_consistent(self):
        eta = 0.05
        chi = product_cutoff([[0.3, 0, 0], [-0.3, 0, 0]], eta)
        pts = np.array([[0.3 + 1.5 * eta, 0.0, 0.0], [0.1, 0.05, 0.0]])
        h = 1e-5
        for p, lap in zip(pts, chi.laplacian(pts)):
            fd = -6 * chi.value(p[None, :])[0]
            for axis in range(3):
                dp = np.zeros(3)
                dp[axis] = h
                fd += chi.value((p + dp)[None, :])[0] + chi.value((p - dp)[None, :])[0]
            fd /= h**2
            assert abs(fd - lap) < 5e-3 * max(abs(lap), 1.0)


class TestTauFloor:
    def test_free_medium_values(self):
        assert tau_floor(1.0, Medium.free(), 1.0) == 2.0

    def test_halving_margin_quadruples_last_candidate(self):
        med = Medium.free()
        a = tau_floor(1.0, med, 0.1)
        b = tau_floor(1.0, med, 0.05)
        assert b == pytest.approx(4 * a)

    def test_recomputation_with_medium(self):
        med = Medium.single_bump(0.4, radius=0.8)
        eps = 0.3
        k = 1.5
        got = tau_floor(k, med, eps)
        expected = max(
            2.0,
            k**2 * (1 + med.c0_norm(safety=1.0)) / eps,
            k**2 * med.grad_c0_norm(safety=1.0) / eps,
            1 / eps**2,
        )
        assert got == pytest.approx(expected)


class TestExponents:
    def test_theta_value(self):
        assert theta_exponent(0.1, 2.0) == pytest.approx(0.05 / 5.96)

    def test_theta_below_one(self):
        for eta in (0.01, 0.05, 0.17):
            assert 0 < theta_exponent(eta, R0) < 1

    def test_eps_threshold_monotone(self):
        taus = np.linspace(2, 50, 20)
        vals = [eps_threshold(t, 2.0, 0.1, 1.0) for t in taus]
        assert all(v > 0 for v in vals)
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestCarleman:
    DOMAIN = AnnularDomain(outer_radius=1.4, inner_radius=0.2)

    def test_zero_field(self):
        class Zero:
            def value(self, x):
                return np.zeros(len(np.atleast_2d(x)), complex)

            def gradient(self, x):
                return np.zeros((len(np.atleast_2d(x)), 3), complex)

            def laplacian(self, x):
                return np.zeros(len(np.atleast_2d(x)), complex)

        rep = carleman_check(
            Zero(), self.DOMAIN, np.zeros(3), 1.0, Medium.free(), [30.0, 60.0]
        )
        assert np.all(rep.lhs == 0.0) and np.all(rep.rhs == 0.0)

    def test_annulus_solution_controlled_by_boundary(self):
        # kernel field solves the operator equation: operator term vanishes
        k = 1.0
        field = PointKernelField((0.05, 0.0, 0.0), k)
        tau0 = tau_floor(k, Medium.free(), 0.2)
        rep = carleman_check(
            field, self.DOMAIN, np.zeros(3), k, Medium.free(), [tau0, 2 * tau0]
        )
        assert np.all(rep.operator_term <= 1e-20 * rep.boundary_term)
        assert rep.passed

    def test_sweep_bounded_and_stable(self):
        k = 1.0
        tau0 = tau_floor(k, Medium.free(), 0.2)
        taus = np.linspace(tau0, 4 * tau0, 6)
        fields = oscillatory_test_fields(self.DOMAIN, k, count=4)
        all_c = []
        for f in fields:
            rep = carleman_check(f, self.DOMAIN, np.zeros(3), k, Medium.free(), taus)
            assert rep.passed
            assert np.all(rep.hypothesis_met)
            all_c.append(rep.c_emp)
        stack = np.concatenate(all_c)
        assert stack.max() / stack.min() <= 10.0

    def test_below_floor_marked(self):
        k = 1.0
        field = oscillatory_test_fields(self.DOMAIN, k, count=1)[0]
        rep = carleman_check(
            field, self.DOMAIN, np.zeros(3), k, Medium.free(), [1.0]
        )
        assert not rep.hypothesis_met[0]
        assert np.isfinite(rep.c_emp[0])

    def test_weight_shift_cancels(self):
        # recompute one ratio with the raw (unshifted) weight at modest tau
        k = 1.0
        field = PointKernelField((0.0, 0.0, 0.0), k)
        tau = 3.0
        rep = carleman_check(
            field, self.DOMAIN, np.zeros(3), k, Medium.free(), [tau]
        )
        dom = self.DOMAIN
        vol_pts, vol_w = dom.volume_rule(tau)
        (bi_p, bi_w), (bo_p, bo_w) = dom.boundary_rules()
        phi = lambda p: np.sum(p * p, axis=-1)
        wv = np.exp(2 * tau * phi(vol_pts)) * vol_w
        u = field.value(vol_pts)
        gu = field.gradient(vol_pts)
        au = field.laplacian(vol_pts) + k**2 * u
        lhs = tau**2 * np.sum(wv * np.abs(u) ** 2) + tau * np.sum(
            wv * np.sum(np.abs(gu) ** 2, -1)
        )
        rhs = np.sum(wv * np.abs(au) ** 2)
        for p, w in ((bi_p, bi_w), (bo_p, bo_w)):
            wb = np.exp(2 * tau * phi(p)) * w
            rhs += tau**3 * np.sum(wb * np.abs(field.value(p)) ** 2)
            rhs += tau * np.sum(wb * np.sum(np.abs(field.gradient(p)) ** 2, -1))
        assert rep.c_emp[0] == pytest.approx(lhs / rhs, rel=1e-10)

    def test_proof_constant_monotone_pieces(self):
        assert proof_chain_constant(10.0, 2.8) >= proof_chain_constant(100.0, 2.8)


class TestStabilityExperiment:
    def test_identical_sources_zero_difference(self):
        s = PointSourceSet([1.0], [[0.2, 0.0, 0.0]], eta=0.1)
        out = cauchy_stability_experiment(
            s, s, Medium.free(), 2.0, 0.1, [1.0], SPHERE, seeds=(0,),
            noise_fraction=0.0, n_lattice=20,
        )
        assert out["rows"][0]["interior_h1"] < 1e-12

    def test_decay_slope_exceeds_exponent(self):
        eta = 0.1
        s1 = PointSourceSet([1.0], [[0.2, 0.0, 0.0]], eta=eta)
        s2 = PointSourceSet([1.1], [[0.25, 0.05, 0.0]], eta=eta)
        out = cauchy_stability_experiment(
            s1, s2, Medium.free(), 2.0, eta,
            [1.0, 0.3, 0.1, 0.03, 0.01], SPHERE, seeds=(0, 1),
            n_lattice=24, R0=R0,
        )
        assert out["slope"] >= out["theta"]
        assert out["slope"] >= 0.9  # linear response regime
        assert 0 < out["theta"] < 1
        assert out["m_u"] > 0


class TestHolderFit:
    def test_exact_power(self):
        eps = np.geomspace(1e-5, 1e-1, 9)
        slope, _, r2 = holder_fit(eps, eps**0.5)
        assert slope == pytest.approx(0.5, abs=1e-12)
        assert r2 == pytest.approx(1.0)

    def test_constant_error(self):
        eps = np.geomspace(1e-4, 1e-1, 6)
        slope, _, _ = holder_fit(eps, np.full(6, 0.37))
        assert slope == pytest.approx(0.0, abs=1e-12)

    def test_noisy_power_recovered(self):
        rng = np.random.default_rng(3)
        theta = 0.31
        eps = np.geomspace(1e-6, 1e-2, 24)
        err = eps**theta * (1.0 + 0.01 * rng.standard_normal(len(eps)))
        slope, _, _ = holder_fit(eps, err)
        assert abs(slope - theta) < 0.05

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            holder_fit([1e-3, 1e-2, 0.0, 1e-1], [1, 1, 1, 1])
        with pytest.raises(ValueError):
            holder_fit([1e-3, 1e-2], [1, 1])
