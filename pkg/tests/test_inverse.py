"""Tests for the inverse-problem module.

Oracles:
  * algebraic identity of the initial-condition inversion (exact to
    rounding) plus a solver pipeline whose error floor must decrease
    under refinement;
  * central finite differences for the adjoint-state gradient along
    seeded random directions;
  * scaling/linearity structure of the stability sweep (slope near one on
    log-log axes, local linearity of the measurement map).
"""

import numpy as np
import pytest

from carleman_lab import geometry as geo
from carleman_lab import inverse as inv
from carleman_lab import pde_solver as pde
from carleman_lab import weight as wt


def make_layout(half=1.0, radius=0.5, n=64):
    outer = geo.RectangularDomain(-half, half, -half, half)
    return geo.DomainLayout(outer, geo.disk_interface(radius, n=n))


def make_instance(nx=17, n_steps=12, T=0.5, a1=2.0, a2=1.0, noise=0.0, seed=0,
                  imaginary=False, q_bound=np.inf):
    layout = make_layout()
    grid = pde.Grid2D.from_layout(layout, nx)
    coeff = wt.PiecewiseCoefficient(a1, a2, layout)
    pts = grid.points
    p = 1.0 + 0.4 * np.sin(pts[..., 0]) * np.cos(pts[..., 1])
    y0 = (2.0 + 0.5 * np.cos(np.pi * pts[..., 0] / 2.0)).astype(complex)
    if imaginary:
        y0 = 1j * y0
    return inv.make_instance(
        grid, coeff, p, y0, T, n_steps,
        noise_level=noise, seed=seed, q_bound=q_bound,
    )


def smooth_direction(grid, seed):
    rng = np.random.default_rng(seed)
    pts = grid.points
    out = np.zeros(grid.shape)
    for _ in range(3):
        c = rng.uniform(-0.6, 0.6, 2)
        w = rng.uniform(0.25, 0.5)
        out += rng.normal() * np.exp(
            -((pts[..., 0] - c[0]) ** 2 + (pts[..., 1] - c[1]) ** 2) / w**2
        )
    return out / np.max(np.abs(out))


class TestInstance:
    def test_records_fields(self):
        inst = make_instance()
        assert inst.noise_level == 0.0
        assert inst.p_inf == pytest.approx(float(np.max(np.abs(inst.p_true))))
        assert inst.y0_imaginary is False
        assert inst.data.values.shape[0] == inst.n_steps + 1

    def test_noiseless_data_matches_forward_trace(self):
        inst = make_instance()
        fld = pde.solve_forward(
            inst.grid, inst.coeff, inst.p_true, inst.y0, 0.0, inst.T,
            inst.n_steps, boundary=inst.boundary,
        )
        tr = pde.neumann_trace(fld, inst.coeff)
        np.testing.assert_allclose(inst.data.values, tr.values, atol=1e-14)

    def test_lower_bound_enforced(self):
        layout = make_layout()
        grid = pde.Grid2D.from_layout(layout, 9)
        coeff = wt.PiecewiseCoefficient(2.0, 1.0, layout)
        pts = grid.points
        bad_y0 = pts[..., 0].astype(complex)  # crosses zero
        with pytest.raises(ValueError):
            inv.make_instance(grid, coeff, np.ones(grid.shape), bad_y0, 0.4, 6)

    def test_mixed_complex_y0_rejected(self):
        layout = make_layout()
        grid = pde.Grid2D.from_layout(layout, 9)
        coeff = wt.PiecewiseCoefficient(2.0, 1.0, layout)
        y0 = (1.0 + 1.0j) * np.full(grid.shape, 2.0)
        with pytest.raises(ValueError):
            inv.make_instance(grid, coeff, np.ones(grid.shape), y0, 0.4, 6)

    def test_imaginary_y0_flagged(self):
        inst = make_instance(imaginary=True)
        assert inst.y0_imaginary is True

    def test_noise_is_seeded_and_scaled(self):
        a = make_instance(noise=0.01, seed=5)
        b = make_instance(noise=0.01, seed=5)
        c = make_instance(noise=0.01, seed=6)
        clean = make_instance()
        np.testing.assert_array_equal(a.data.values, b.data.values)
        assert not np.array_equal(a.data.values, c.data.values)
        rms = np.sqrt(np.mean(np.abs(clean.data.values) ** 2))
        noise_rms = np.sqrt(np.mean(np.abs(a.data.values - clean.data.values) ** 2))
        assert noise_rms == pytest.approx(0.01 * rms, rel=0.35)


class TestBKRecovery:
    def test_exact_algebra(self):
        layout = make_layout()
        grid = pde.Grid2D.from_layout(layout, 15)
        pts = grid.points
        f = np.sin(pts[..., 0]) * np.cos(2.0 * pts[..., 1])
        r0 = 2.0 + 0.3 * np.cos(pts[..., 1])
        v0 = -1j * f * r0
        got = inv.bk_recover_f(v0, r0)
        np.testing.assert_allclose(got, f, atol=1e-12)

    def test_zero_maps_to_zero(self):
        r0 = np.full((7, 7), 1.5)
        got = inv.bk_recover_f(np.zeros((7, 7), dtype=complex), r0)
        assert np.all(got == 0.0)

    def test_singular_r0_raises(self):
        r0 = np.full((5, 5), 0.4)
        with pytest.raises(inv.SingularR0):
            inv.bk_recover_f(np.zeros((5, 5), dtype=complex), r0, r0_min=0.5)

    def test_time_derivative_pipeline_is_exact_at_t0(self):
        layout = make_layout()
        grid = pde.Grid2D.from_layout(layout, 17)
        coeff = wt.PiecewiseCoefficient(2.0, 1.0, layout)
        pts = grid.points
        q = 1.0 + 0.2 * np.sin(pts[..., 0] + pts[..., 1])
        f = np.exp(-((pts[..., 0] - 0.1) ** 2 + pts[..., 1] ** 2) / 0.16)
        r0 = np.full(grid.shape, 2.0)
        v = pde.solve_time_derivative(
            grid, coeff, q, f, lambda p, t: -1.2j * 2.0 * np.exp(-1.2j * t) * np.ones(p.shape[:-1]),
            r0, 0.0, 0.4, 10,
        )
        got = inv.bk_recover_f(v.values[0], r0)
        np.testing.assert_allclose(
            got[1:-1, 1:-1], f[1:-1, 1:-1], atol=1e-12
        )

    def test_linearized_pipeline_floor_decreases(self):
        # reconstruct v(0) from the one-sided derivative of the solved
        # linearized trajectory; the floor is discretization error
        errs = []
        for nx, steps in ((17, 16), (25, 32)):
            layout = make_layout()
            grid = pde.Grid2D.from_layout(layout, nx)
            coeff = wt.PiecewiseCoefficient(2.0, 1.0, layout)
            pts = grid.points
            q = 1.0 + 0.2 * np.sin(pts[..., 0] + pts[..., 1])
            f = np.exp(-((pts[..., 0] - 0.1) ** 2 + pts[..., 1] ** 2) / 0.2)
            r0 = np.full(grid.shape, 2.0)

            def r(p, t):
                return 2.0 * np.exp(-1.2j * t) * np.ones(p.shape[:-1])

            u = pde.solve_linearized(grid, coeff, q, f, r, 0.0, 0.4, steps)
            dt = u.dt
            v0_hat = (4.0 * u.values[1] - u.values[2]) / (2.0 * dt)
            f_hat = inv.bk_recover_f(v0_hat, r0)
            mask = np.abs(f) > 1e-3
            errs.append(
                float(np.linalg.norm((f_hat - f)[mask]) / np.linalg.norm(f[mask]))
            )
        assert errs[1] < errs[0] / 1.5, f"floor did not decrease: {errs}"
        assert errs[0] < 0.1


class TestMisfit:
    def test_truth_fits_data_exactly(self):
        inst = make_instance()
        assert inv.misfit(inst.p_true, inst) == pytest.approx(0.0, abs=1e-20)

    def test_regularizer_zero_at_reference(self):
        inst = make_instance()
        val = inv.misfit(inst.p_true, inst, beta=0.5, q_ref=inst.p_true)
        assert val == pytest.approx(0.0, abs=1e-20)

    def test_regularizer_value(self):
        inst = make_instance()
        q = inst.p_true + 0.1
        base = inv.misfit(q, inst)
        reg = inv.misfit(q, inst, beta=2.0, q_ref=inst.p_true)
        n_nodes = inst.grid.nx * inst.grid.ny
        expected = base + 0.5 * 2.0 * inst.grid.h**2 * 0.01 * n_nodes
        assert reg == pytest.approx(expected, rel=1e-12)

    def test_continuity(self):
        inst = make_instance()
        base = inv.misfit(inst.p_true, inst)
        gaps = []
        for eps in (1e-2, 1e-3, 1e-4):
            worst = 0.0
            for k in range(5):
                d = smooth_direction(inst.grid, 100 + k)
                worst = max(worst, abs(inv.misfit(inst.p_true + eps * d, inst) - base))
            gaps.append(worst)
        assert gaps[0] > gaps[1] > gaps[2]

    def test_bound_enforced(self):
        inst = make_instance(q_bound=3.0)
        with pytest.raises(ValueError):
            inv.misfit(np.full(inst.grid.shape, 4.0), inst)


class TestGradient:
    @pytest.mark.parametrize("beta", [0.0, 1e-3])
    def test_matches_central_differences(self, beta):
        inst = make_instance(nx=15, n_steps=10)
        q = inst.p_true + 0.3 * smooth_direction(inst.grid, 42)
        q_ref = np.zeros(inst.grid.shape)
        _, grad = inv.misfit_and_gradient(q, inst, beta=beta, q_ref=q_ref)
        step = 1e-5
        for k in range(5):
            d = smooth_direction(inst.grid, 7 + k)
            plus = inv.misfit(q + step * d, inst, beta=beta, q_ref=q_ref)
            minus = inv.misfit(q - step * d, inst, beta=beta, q_ref=q_ref)
            fd = (plus - minus) / (2.0 * step)
            an = float(np.sum(grad * d))
            assert an == pytest.approx(fd, rel=1e-3), f"direction {k}"

    def test_misfit_value_consistency(self):
        inst = make_instance(nx=15, n_steps=10)
        q = inst.p_true + 0.2 * smooth_direction(inst.grid, 3)
        val, _ = inv.misfit_and_gradient(q, inst, beta=1e-2, q_ref=inst.p_true)
        assert val == pytest.approx(
            inv.misfit(q, inst, beta=1e-2, q_ref=inst.p_true), rel=1e-14
        )


class TestReconstruct:
    def test_zero_gap_converges_immediately(self):
        inst = make_instance()
        res = inv.reconstruct(inst, inst.p_true, beta=0.0, max_iter=20)
        assert isinstance(res, inv.ReconstructionResult)
        assert res.iterations == 0
        assert res.final_misfit == pytest.approx(0.0, abs=1e-18)

    def test_planted_bump_recovered(self):
        inst = make_instance(nx=17, n_steps=16, T=0.5)
        pts = inst.grid.points
        bump = 0.35 * np.exp(-((pts[..., 0] + 0.1) ** 2 + pts[..., 1] ** 2) / 0.18)
        q0 = inst.p_true - bump
        res = inv.reconstruct(inst, q0, beta=1e-6, max_iter=60)
        assert isinstance(res, inv.ReconstructionResult)
        assert res.final_misfit <= res.initial_misfit
        err0 = np.linalg.norm(q0 - inst.p_true) / np.linalg.norm(inst.p_true)
        assert res.relative_error < 0.5 * err0
        assert res.iterations <= 60

    def test_stall_is_returned_not_raised(self):
        inst = make_instance()
        q0 = inst.p_true + 0.2
        res = inv.reconstruct(inst, q0, beta=0.0, max_iter=5, max_backtracks=0)
        assert isinstance(res, inv.StalledReconstruction)
        assert isinstance(res, Exception)
        assert res.result.iterations < 5
        assert res.result.stop_reason == "line search failed"
        assert res.result.final_misfit <= res.result.initial_misfit
        assert "grad_norm" in res.diagnostics

    def test_noise_degrades_gracefully(self):
        # 1% trace noise should push the recovered potential to the noise
        # floor (stability constant times noise size), not blow it up
        errors = {}
        for noise in (0.0, 0.01):
            inst = make_instance(nx=17, n_steps=16, T=0.5, noise=noise, seed=9)
            pts = inst.grid.points
            bump = 0.3 * np.exp(-((pts[..., 0] + 0.1) ** 2 + pts[..., 1] ** 2) / 0.18)
            q0 = inst.p_true - bump
            res = inv.reconstruct(inst, q0, beta=1e-5, max_iter=40)
            result = res.result if isinstance(res, inv.StalledReconstruction) else res
            assert result.final_misfit <= result.initial_misfit
            errors[noise] = result.relative_error
        assert errors[0.0] <= 0.01
        assert errors[0.01] <= 0.12


class TestStability:
    def test_sweep_structure_and_slope(self):
        inst = make_instance(nx=17, n_steps=12)
        out = inv.stability_sweep(
            inst, n_perturbations=10, amplitude_range=(1e-3, 1e-1), seed=7
        )
        assert len(out.records) == 10
        ratios = np.array([r.ratio for r in out.records])
        assert np.all(np.isfinite(ratios))
        assert np.all(ratios > 0.0)
        assert out.empirical_C == pytest.approx(float(ratios.max()))
        assert out.empirical_C <= 10.0 * float(np.median(ratios))
        assert 0.8 <= out.loglog_slope <= 1.2
        assert out.certified is True

    def test_reproducible_from_seed(self):
        inst = make_instance(nx=13, n_steps=8)
        a = inv.stability_sweep(inst, n_perturbations=4, seed=3)
        b = inv.stability_sweep(inst, n_perturbations=4, seed=3)
        for ra, rb in zip(a.records, b.records):
            assert ra.potential_distance == rb.potential_distance
            assert ra.trace_distance == rb.trace_distance

    def test_zero_amplitude_records_skipped(self):
        inst = make_instance(nx=13, n_steps=8)
        out = inv.stability_sweep(
            inst, n_perturbations=3, amplitude_range=(0.0, 0.0), seed=1
        )
        assert out.records == []

    def test_local_linearity_of_measurement(self):
        inst = make_instance(nx=17, n_steps=12)
        rng = np.random.default_rng(11)
        delta = 1e-3 * smooth_direction(inst.grid, 21)
        d1 = inv.trace_distance(inst, inst.p_true + delta)
        d2 = inv.trace_distance(inst, inst.p_true + 2.0 * delta)
        assert d2 / d1 == pytest.approx(2.0, rel=0.1)

    def test_negative_control_uncertified(self):
        inst = make_instance(a1=1.0, a2=2.0)
        out = inv.stability_sweep(inst, n_perturbations=3, seed=2)
        assert out.certified is False
        assert out.hypothesis_report["H2"].ok is False
        assert len(out.records) == 3  # the pipeline still runs


class TestCertification:
    def test_valid_instance_certifies(self):
        inst = make_instance()
        certified, report = inv.certify_instance(inst)
        assert certified is True
        assert report.all_ok

    def test_certificate_reports_h2_failure(self):
        inst = make_instance(a1=1.0, a2=2.0)
        certified, report = inv.certify_instance(inst)
        assert certified is False
        assert not report["H2"].ok
        assert report["H2"].margin < 0.0
