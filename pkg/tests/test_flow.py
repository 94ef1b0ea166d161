"""Time stepping, monitors, barrier fields and the invariant suite."""

import dataclasses

import numpy as np
import pytest

from mssflow import boundary as bd, flow
from mssflow.domains import DomainSpec, estimate_c0_eta0
from mssflow.grid import build_grid

BALL = DomainSpec.ball(1.0, 2)
SMALL_TRIG = bd.TrigMap([0.01, 0.005], [[2.0, 1.0], [0.0, 2.0]], [0.0, 0.5])


@pytest.fixture(scope="module")
def ball_run():
    """Shared condition-(A) run on the ball, reused by several tests."""
    grid = build_grid(BALL, 1.0 / 16)
    geom = estimate_c0_eta0(BALL)
    rep = bd.check_condition_A(SMALL_TRIG, grid, geom, 0.1)
    assert rep.passed
    state = flow.make_state(grid, SMALL_TRIG)
    monitors = flow.FlowMonitors(state, eps=rep.eps, delta=0.1)
    final, records, outcome = flow.run_to_steady(
        state, 1e-6, 100_000, 25, monitors=monitors)
    assert outcome == "Converged"
    return grid, rep, state, monitors, final, records


# ---------------------------------------------------------------------------
# discrete jets
# ---------------------------------------------------------------------------

def test_jet_at_exact_on_affine_data():
    grid = build_grid(BALL, 1.0 / 16)
    psi = bd.LinearMap([[0.25, -0.1], [0.0, 0.3]], offset=[0.2, 0.0])
    state = flow.make_state(grid, psi)
    jet = flow.jet_at(state, grid.num_interior // 2)
    np.testing.assert_allclose(jet.jac, psi.A, atol=1e-12)
    np.testing.assert_allclose(jet.hess, 0.0, atol=1e-12)


def test_jet_at_exact_on_quadratics_uniform_stencils():
    grid = build_grid(DomainSpec.box([1.0, 1.0]), 1.0 / 16)
    poly = bd.PolynomialMap([([0.5, 0.25, -0.3], [[2, 0], [1, 1], [0, 2]])], 2)
    state = flow.make_state(grid, poly)
    J, H = flow.jets_all(state)
    _, ja, ha = poly.jets(grid.interior_pos)
    np.testing.assert_allclose(J, ja, atol=1e-10)
    np.testing.assert_allclose(H, ha, atol=1e-10)


def test_jet_richardson_order_two():
    errs = []
    for h in (1.0 / 16, 1.0 / 32):
        grid = build_grid(DomainSpec.box([1.0, 1.0]), h)
        trig = bd.TrigMap([1.0], [[np.pi, 0.0]])
        state = flow.make_state(grid, trig)
        _, H = flow.jets_all(state)
        _, _, ha = trig.jets(grid.interior_pos)
        errs.append(np.abs(H - ha).max())
    assert errs[0] / errs[1] > 3.5


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def test_step_linear_data_is_stationary():
    grid = build_grid(BALL, 1.0 / 16)
    state = flow.make_state(grid, bd.LinearMap([[0.2, -0.1], [0.05, 0.3]]))
    new, rec = flow.step(state, 0.9)
    assert np.abs(new.f - state.f).max() <= 1e-14
    assert rec.residual_sup <= 1e-12


def test_step_constant_data_is_exact_fixed_point():
    grid = build_grid(BALL, 1.0 / 16)
    state = flow.make_state(grid, bd.ConstantMap([0.7, -0.2], 2))
    new, _ = flow.step(state, 0.9)
    assert np.array_equal(new.f, state.f)


def test_sin_decay_matches_heat_scheme_at_small_amplitude():
    amp = 1e-3
    grid = build_grid(DomainSpec.box([1.0]), 1.0 / 32)
    psi = bd.TrigMap([amp], [[np.pi]])
    state = flow.make_state(grid, psi)
    dt = flow.stable_dt(grid, 0.9)
    # reference: plain heat stepping with unit diffusion on the same grid
    x = grid.interior_pos[:, 0]
    u = amp * np.sin(np.pi * x)
    h = grid.hs[0]
    sup_prev = np.abs(state.f).max()
    for _ in range(200):
        state, rec = flow.step(state, 0.9)
        up = np.concatenate([u[1:], [0.0]])
        um = np.concatenate([[0.0], u[:-1]])
        u = u + dt * (up - 2 * u + um) / h ** 2
        sup = np.abs(state.f).max()
        assert sup < sup_prev          # strict decay per step
        sup_prev = sup
    assert np.abs(state.f[:, 0] - u).max() <= 5e-4 * amp


def test_run_to_steady_constant_converges_in_zero_steps():
    grid = build_grid(BALL, 1.0 / 16)
    state = flow.make_state(grid, bd.ConstantMap([1.5], 2))
    final, records, outcome = flow.run_to_steady(state, 1e-6, 100, 10)
    assert outcome == "Converged"
    assert final.t == 0.0 and len(records) == 1


def test_blow_up_guard():
    grid = build_grid(BALL, 1.0 / 16)
    steep = flow.make_state(grid, bd.LinearMap([[20.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(flow.FlowBlowUp):
        flow.step(steep, 0.9)
    _, _, outcome = flow.run_to_steady(steep, 1e-6, 100, 10)
    assert outcome == "BlowUp"


def test_converged_state_is_discrete_fixed_point(ball_run):
    _, _, _, _, final, records = ball_run
    stepped, rec = flow.step(final, 0.9)
    assert np.abs(stepped.f - final.f).max() < records[-1].step_dt * 1e-6


def test_determinism_of_runs():
    grid = build_grid(BALL, 1.0 / 16)
    outs = []
    for _ in range(2):
        state = flow.make_state(grid, SMALL_TRIG)
        final, records, _ = flow.run_to_steady(state, 1e-4, 5000, 50)
        outs.append((final.f.copy(), [r.csv_row() for r in records]))
    assert np.array_equal(outs[0][0], outs[1][0])
    assert outs[0][1] == outs[1][1]


# ---------------------------------------------------------------------------
# monitors, barrier, invariants
# ---------------------------------------------------------------------------

def test_monitor_record_csv_columns():
    assert flow.MonitorRecord.CSV_COLUMNS == (
        "t", "max_lambda", "min_star_omega", "min_p_eig", "area",
        "dissipation", "residual_sup", "boundary_grad_sup", "barrier_min",
        "dt")


def test_barrier_fields_at_initial_time():
    grid = build_grid(BALL, 1.0 / 16)
    state = flow.make_state(grid, SMALL_TRIG)
    bf = flow.barrier_values(state, SMALL_TRIG, 0.1, component=0)
    # with f = psi both fields reduce to nu log(1 + k d) + (omega/delta) d
    assert bf.min_S >= 0.0 and bf.min_S_mirror >= 0.0
    np.testing.assert_allclose(bf.S, bf.S_mirror, atol=1e-15)
    assert bf.band_idx.size > 0


def test_barrier_stays_nonnegative_along_flow(ball_run):
    _, _, _, _, final, records = ball_run
    for rec in records:
        assert rec.barrier_min >= -1e-12
    bf0 = flow.barrier_values(final, SMALL_TRIG, 0.1, component=0)
    bf1 = flow.barrier_values(final, SMALL_TRIG, 0.1, component=1)
    assert min(bf0.min_S, bf0.min_S_mirror, bf1.min_S, bf1.min_S_mirror) >= 0.0


def _context(grid, rep, state, monitors, records):
    band = bd.PsiNorms(rep.w_psi, rep.sup_dpsi_band, rep.sup_d2psi_band)
    return flow.InvariantContext(
        tol_grid=5.0 * grid.h,
        psi_lo=state.psi_lo, psi_hi=state.psi_hi,
        star_omega_floor=monitors.star_omega_floor(SMALL_TRIG, grid),
        boundary_bound=bd.boundary_gradient_bound(band, 0.1, 1.0, grid.n),
        tol_consistency=flow.consistency_tolerance(grid.h, records[-1].step_dt))


def test_invariant_suite_passes_on_ball_run(ball_run):
    grid, rep, state, monitors, final, records = ball_run
    report = flow.check_invariants(records, rep.eps,
                                   _context(grid, rep, state, monitors, records))
    assert report.passed, [c.detail for c in report.clauses if not c.passed]
    assert len(report.clauses) == 6


def test_invariant_fault_injection(ball_run):
    grid, rep, state, monitors, final, records = ball_run
    corrupted = list(records)
    corrupted[3] = dataclasses.replace(records[3], max_lambda=1.5)
    report = flow.check_invariants(corrupted, rep.eps,
                                   _context(grid, rep, state, monitors, records))
    by_name = {c.name: c.passed for c in report.clauses}
    assert not by_name["max_lambda_le_1_minus_eps"]
    assert by_name["star_omega_floor"]
    assert by_name["max_principle"]
    assert by_name["area_dissipation_consistency"]


def test_grid_refinement_second_order_interior():
    # steady states at h and h/2 against the h/4 reference; uniform
    # stencils keep the interior cleanly second order
    spec = DomainSpec.box([1.0, 1.0])
    psi = bd.TrigMap([0.02, 0.01], [[2.0, 1.0], [1.0, 2.0]])
    solutions = {}
    for h in (1.0 / 16, 1.0 / 32, 1.0 / 64):
        grid = build_grid(spec, h)
        state = flow.make_state(grid, psi)
        final, _, outcome = flow.run_to_steady(state, 1e-10, 400_000, 1000)
        assert outcome == "Converged"
        index = {tuple(np.round(grid.interior_pos[k], 9)): k
                 for k in range(grid.num_interior)}
        solutions[h] = (final, index)

    coarse, _ = solutions[1.0 / 16]
    errs = {}
    for h in (1.0 / 16, 1.0 / 32):
        final, idx = solutions[h]
        ref, ref_index = solutions[1.0 / 64]
        worst = 0.0
        for k in range(coarse.grid.num_interior):
            key = tuple(np.round(coarse.grid.interior_pos[k], 9))
            worst = max(worst, np.abs(final.f[idx[key]]
                                      - ref.f[ref_index[key]]).max())
        errs[h] = worst
    assert errs[1.0 / 16] / errs[1.0 / 32] >= 3.5
