import csv
import io
import math
import time

import numpy as np
import pytest

from udqkd import cvmath
from udqkd.security import (CP_TOL, InfeasibleError, KeyRateReport, ProtocolParams, SWEEP_COLUMNS,
                            apply_channel, apply_trusted_detector, build_gg02_covariance,
                            build_ud_covariance, dilate_trusted_detector, gg02_key_rate,
                            honest_cp, honest_vp1, mutual_information, physical_cp_grid,
                            physical_cp_interval, closed_form_conditional_covariance, sweep_csv,
                            sweep_transmittance, ud_holevo, ud_key_rate)

from conftest import random_xp_decoupled

REF = ProtocolParams.reference()


def ud_oracle(vm):
    """Entries of S gamma S^T written out by hand."""
    v = math.sqrt(vm + 1)
    cx = math.sqrt(vm) * (vm + 1) ** 0.25
    cp = -math.sqrt(vm) * (vm + 1) ** -0.25
    return np.array([[v, 0, cx, 0], [0, v, 0, cp], [cx, 0, vm + 1, 0], [0, cp, 0, 1.0]])


# -- state construction ------------------------------------------------------------

@pytest.mark.parametrize("vm", [1.0, 10.0, 165.0])
def test_ud_covariance_matches_hand_product(vm):
    np.testing.assert_allclose(build_ud_covariance(vm), ud_oracle(vm), rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("vm", [1.0, 165.0])
def test_ud_covariance_is_pure(vm):
    g = build_ud_covariance(vm)
    assert cvmath.is_physical(g)
    np.testing.assert_allclose(cvmath.symplectic_eigenvalues(g, "hermitian"), [1, 1], atol=1e-9)


def test_ud_covariance_vacuum_limit():
    np.testing.assert_allclose(build_ud_covariance(1e-12), np.eye(4), atol=1e-5)
    with pytest.raises(ValueError):
        build_ud_covariance(0.0)


def test_identity_channel_recovers_ud_state():
    vm = 165.0
    g = build_ud_covariance(vm)
    out = apply_channel(g, 1.0, 0.0, honest_cp(vm, 1.0), 1.0)
    np.testing.assert_allclose(out, g, rtol=1e-13)


def test_full_loss_channel():
    g = build_ud_covariance(165.0)
    out = apply_channel(g, 1e-14, 0.0, -0.4, 1.7)
    np.testing.assert_allclose(out[2:, 2:], np.diag([1.0, 1.7]), atol=1e-10)
    assert out[0, 2] == pytest.approx(0.0, abs=1e-5)
    assert out[1, 3] == -0.4
    np.testing.assert_array_equal(out[:2, :2], g[:2, :2])


def test_channel_bob_x_variance_at_reference_params():
    out = apply_channel(build_ud_covariance(165.0), 0.575, 0.0375, 0.0, 1.0)
    assert out[2, 2] == pytest.approx(1 + 0.575 * 165.0375, rel=1e-14)
    assert out[2, 2] == pytest.approx(95.90, abs=0.005)
    assert out[0, 2] == pytest.approx(math.sqrt(0.575 * 165.0) * 166.0 ** 0.25, rel=1e-13)
    # Cp = 0 lies outside the physical interval at these parameters
    assert not cvmath.is_physical(out)


def test_channel_argument_checks():
    g = build_ud_covariance(10.0)
    with pytest.raises(ValueError):
        apply_channel(g, 0.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        apply_channel(g, 0.5, -0.1, 0.0, 1.0)
    with pytest.raises(cvmath.CovarianceError):
        apply_channel(np.eye(6), 0.5, 0.0, 0.0, 1.0)


def test_detector_identity_and_vacuum():
    g = build_ud_covariance(165.0)
    np.testing.assert_array_equal(apply_trusted_detector(g, 1.0, 0.0), g)
    vac = apply_trusted_detector(np.eye(4), 0.872, 0.0219)
    assert vac[2, 2] == pytest.approx(1.0219, rel=1e-14)
    assert vac[3, 3] == pytest.approx(1.0219, rel=1e-14)
    np.testing.assert_array_equal(vac[:2, :2], np.eye(2))


def test_detector_scales_correlations():
    g = build_ud_covariance(165.0)
    out = apply_trusted_detector(g, 0.64, 0.1)
    assert out[0, 2] == pytest.approx(0.8 * g[0, 2])
    assert out[2, 2] == pytest.approx(0.64 * g[2, 2] + 0.36 + 0.1)


@pytest.mark.parametrize("eta,ve", [(0.872, 0.0219), (0.3, 0.5), (0.99, 0.0)])
def test_dilation_reduces_to_dressed_state(eta, ve):
    g = apply_channel(build_ud_covariance(165.0), 0.575, 0.0375, -2.5, 1.0)
    full = dilate_trusted_detector(g, eta, ve)
    assert full.shape == (8, 8)
    np.testing.assert_allclose(full[:4, :4], apply_trusted_detector(g, eta, ve),
                               rtol=1e-12, atol=1e-12)


def test_dilation_of_ideal_detector_is_identity():
    g = build_ud_covariance(10.0)
    np.testing.assert_array_equal(dilate_trusted_detector(g, 1.0, 0.0), g)


def test_channel_and_detector_preserve_physicality(rng):
    for _ in range(300):
        g = random_xp_decoupled(rng)
        t = rng.uniform(1e-3, 1.0)
        eps = rng.uniform(0.0, 0.5)
        # honest p-quadrature for a pure-loss channel: the map is then physical
        out = apply_channel(g, t, eps, math.sqrt(t) * g[1, 3], t * g[3, 3] + 1 - t)
        assert cvmath.symplectic_eigenvalues(out, "generic")[-1] >= 1 - 1e-8
        det = apply_trusted_detector(out, rng.uniform(0.05, 1.0), rng.uniform(0.0, 0.5))
        assert cvmath.symplectic_eigenvalues(det, "generic")[-1] >= 1 - 1e-8


# -- conditional matrix ------------------------------------------------------------

@pytest.mark.parametrize("vm", [1.0, 10.0, 165.0])
@pytest.mark.parametrize("t", [0.1, 0.575, 1.0])
@pytest.mark.parametrize("eps", [0.0, 0.0375])
def test_schur_complement_matches_closed_form(vm, t, eps):
    g = apply_channel(build_ud_covariance(vm), t, eps, honest_cp(vm, t), honest_vp1(t, eps))
    cond = cvmath.condition_on_homodyne(g, 1, "x")
    np.testing.assert_allclose(cond, closed_form_conditional_covariance(vm, t, eps),
                               rtol=1e-10, atol=0)


def test_conditional_closed_form_zero_transmittance_limit():
    vm = 165.0
    np.testing.assert_allclose(closed_form_conditional_covariance(vm, 0.0, 0.0),
                               np.diag([math.sqrt(vm + 1)] * 2))


# -- physical interval ---------------------------------------------------------------

def test_interval_contains_honest_cp():
    p = ProtocolParams(V_M=165.0, T=1.0, eps=0.0)
    lo, hi = physical_cp_interval(p)
    # the honest state is pure, so the interval shrinks to a point (to CP_TOL)
    assert lo - CP_TOL <= honest_cp(165.0, 1.0) <= hi + CP_TOL
    assert hi - lo < 1e-3


def test_interval_infeasible_below_floor():
    with pytest.raises(InfeasibleError, match="V_P1"):
        physical_cp_interval(REF.replace(V_P1=0.5))


def test_interval_matches_dense_grid_oracle():
    lo, hi = physical_cp_interval(REF)
    g_lo, g_hi = physical_cp_grid(REF, 10_000)
    bound = math.sqrt(math.sqrt(REF.V_M + 1) * REF.V_P1)
    step = 2 * bound / (10_000 - 1)
    assert g_lo - step <= lo <= g_lo + 1e-6
    assert g_hi - 1e-6 <= hi <= g_hi + step
    assert lo == pytest.approx(-3.00009, abs=1e-5)
    assert hi == pytest.approx(-2.31259, abs=1e-5)


def test_interval_edges_are_sharp():
    lo, hi = physical_cp_interval(REF)
    for edge, out in ((lo, lo - 2e-6), (hi, hi + 2e-6)):
        m_in = cvmath.uncertainty_margin(apply_channel(build_ud_covariance(165.0), 0.575,
                                                       0.0375, edge, 1.0))
        m_out = cvmath.uncertainty_margin(apply_channel(build_ud_covariance(165.0), 0.575,
                                                        0.0375, out, 1.0))
        assert m_in >= -1e-10 > m_out


def test_interval_grows_with_vp1():
    widths = [np.diff(physical_cp_interval(REF.replace(V_P1=v)))[0] for v in (1.0, 1.5, 3.0)]
    assert widths[0] < widths[1] < widths[2]


# -- key rates ---------------------------------------------------------------------------

def test_mutual_information_formula():
    v_b = 1 + 0.872 * 0.575 * 165.0375 + 0.0219
    v_c = 1 + 0.872 * 0.575 * 0.0375 + 0.0219
    assert mutual_information(REF) == pytest.approx(0.5 * math.log2(v_b / v_c), rel=1e-14)


def test_reference_key_rate_default_mode():
    r = ud_key_rate(REF)
    assert r.K == pytest.approx(0.02282, abs=5e-5)
    assert r.K == r.K_raw
    assert r.K == pytest.approx(0.95 * r.I_AB - r.chi_BE, abs=1e-14)
    assert r.K_unit_beta == pytest.approx(r.I_AB - r.chi_BE)
    assert r.K_bps == pytest.approx(r.K * 1e4 * 0.6)
    lo, hi = r.cp_interval
    assert lo <= r.worst_Cp <= hi


def test_worst_cp_beats_dense_grid():
    p = REF.replace(V_P1=3.0)  # wide interval that contains Cp = 0
    r = ud_key_rate(p)
    lo, hi = r.cp_interval
    grid = [ud_holevo(p, c)[0] for c in np.linspace(lo, hi, 201)]
    assert r.chi_BE >= max(grid) - 1e-6
    assert r.chi_BE >= ud_holevo(p, 0.0)[0]
    assert r.chi_BE >= ud_holevo(p, honest_cp(p.V_M, p.T))[0]


def test_worst_cp_beats_grid_at_reference_params():
    r = ud_key_rate(REF)
    lo, hi = r.cp_interval
    grid = [ud_holevo(REF, c)[0] for c in np.linspace(lo, hi, 201)]
    assert r.chi_BE >= max(grid) - 1e-6


def test_honest_state_upper_bounds_pessimistic_rate():
    for t in (0.575, 0.8, 1.0):
        p = REF.replace(T=t, V_P1=honest_vp1(t, REF.eps))
        honest = ud_key_rate(p, cp=honest_cp(p.V_M, t))
        assert honest.K_raw >= ud_key_rate(p).K_raw - 1e-9


def test_states_entering_entropies_are_physical():
    r = ud_key_rate(REF)
    g = apply_channel(build_ud_covariance(165.0), 0.575, 0.0375, r.worst_Cp, 1.0)
    dressed = apply_trusted_detector(g, 0.872, 0.0219)
    full = dilate_trusted_detector(g, 0.872, 0.0219)
    for m in (g, dressed, full, cvmath.condition_on_homodyne(full, 1)):
        assert cvmath.is_physical(m, 1e-8)


def test_fixed_cp_rejects_unphysical_state():
    with pytest.raises(InfeasibleError, match="unphysical"):
        ud_key_rate(REF.replace(V_P1=3.0), cp=5.0)


def test_zero_modulation_gives_no_key():
    r = ud_key_rate(REF.replace(V_M=0.0))
    assert r.I_AB == 0.0 and r.K == 0.0
    assert gg02_key_rate(REF.replace(V_M=0.0)).K == 0.0


def test_negative_rate_is_clamped_and_kept():
    r = ud_key_rate(REF.replace(T=0.01, eps=0.2))
    assert r.K == 0.0 and r.K_raw < 0.0
    assert any("no secret key" in n for n in r.notes)


def test_paper_eq_mode_runs():
    r = ud_key_rate(REF, "paper-eq")
    assert r.conditioning_mode == "paper-eq"
    assert math.isfinite(r.K_raw)
    assert r.conditional_spectrum.shape == (1,)
    with pytest.raises(ValueError):
        ud_key_rate(REF, "bogus")


def test_eta_one_with_electronic_noise_is_continuous():
    k1 = ud_key_rate(REF.replace(eta_e=1.0)).K_raw
    k0 = ud_key_rate(REF.replace(eta_e=0.99999)).K_raw
    assert k1 == pytest.approx(k0, abs=1e-4)


@pytest.mark.parametrize("field,values,direction", [
    ("eps", [0.0, 0.01, 0.03, 0.0375, 0.05], -1),
    ("V_e", [0.0, 0.0219, 0.05, 0.1], -1),
    ("beta", [0.8, 0.9, 0.95, 1.0], +1),
    ("T", [0.5, 0.575, 0.7, 0.85, 1.0], +1),
])
def test_key_rate_monotone(field, values, direction):
    ks = np.array([ud_key_rate(REF.replace(**{field: v})).K for v in values])
    assert np.all(direction * np.diff(ks) >= -1e-9)


def test_gg02_ideal_channel():
    p = ProtocolParams(V_M=165.0, T=1.0, eps=0.0)
    r = gg02_key_rate(p)
    assert r.chi_BE == pytest.approx(0.0, abs=1e-9)
    assert r.K == pytest.approx(0.5 * math.log2(166.0), rel=1e-12)


def test_gg02_covariance_is_physical_and_symmetric():
    g = build_gg02_covariance(165.0, 0.575, 0.0375)
    assert cvmath.is_physical(g)
    assert g[2, 2] == g[3, 3] == pytest.approx(1 + 0.575 * (165 + 0.0375))


def test_gg02_beats_ud_at_reference_params():
    assert gg02_key_rate(REF).K > ud_key_rate(REF).K


def test_report_csv_round_trip():
    r = ud_key_rate(REF)
    row = next(csv.DictReader(io.StringIO(r.to_csv())))
    assert tuple(row) == KeyRateReport.CSV_COLUMNS
    for name in ("I_AB", "chi_BE", "K", "K_raw", "K_bps", "worst_Cp", "V_M", "beta"):
        want = getattr(r, name, None)
        if want is None:
            want = getattr(r.params, name)
        assert float(row[name]) == pytest.approx(want, rel=1e-15)
    joint = [float(x) for x in row["joint_spectrum"].split(";")]
    np.testing.assert_array_equal(joint, r.joint_spectrum)
    assert "K = beta*I - chi" in r.to_text()


# -- sweep -------------------------------------------------------------------------------

def test_single_point_sweep_matches_direct_calls():
    (row,) = sweep_transmittance(REF, [0.575])
    assert row.K_ud == ud_key_rate(REF).K
    assert row.K_gg02 == gg02_key_rate(REF).K
    assert row.worst_cp == ud_key_rate(REF).worst_Cp


def test_sweep_records_infeasible_rows_as_empty():
    rows = sweep_transmittance(REF.replace(V_P1=0.5), [0.5, 0.9])
    assert all(r.K_ud is None and r.worst_cp is None for r in rows)
    assert all(r.K_gg02 is not None for r in rows)
    text = sweep_csv(rows)
    assert text.splitlines()[0] == ",".join(SWEEP_COLUMNS)
    assert text.splitlines()[1].startswith("0.5,,")


def test_sweep_rejects_bad_grid():
    with pytest.raises(ValueError):
        sweep_transmittance(REF, [1.2])


@pytest.mark.slow
def test_sweep_shape_at_reference_params():
    grid = np.geomspace(0.05, 1.0, 50)
    t0 = time.perf_counter()
    rows = sweep_transmittance(REF, grid)
    elapsed = time.perf_counter() - t0
    k_ud = np.array([r.K_ud for r in rows])
    k_gg = np.array([r.K_gg02 for r in rows])
    assert elapsed < 10.0
    assert np.all(k_gg >= k_ud)
    assert np.all(np.diff(k_ud) >= -1e-9) and np.all(np.diff(k_gg) >= -1e-9)
    pos = k_ud > 0
    ratio = k_gg[pos] / k_ud[pos]
    assert np.all(np.diff(ratio) <= 1e-9)
    # beta = 1 dominates beta = 0.95 pointwise
    hi = sweep_transmittance(REF.replace(beta=1.0), grid[::7])
    assert all(a.K_ud >= b.K_ud for a, b in zip(hi, rows[::7]))
    # csv round trip at full precision
    back = list(csv.DictReader(io.StringIO(sweep_csv(rows))))
    assert [float(b["K_ud"]) for b in back] == list(k_ud)
