import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irs_forge.geometry import IncidentAngle, ReflectionAngle, combined_cosines
from irs_forge.tile import (
    SQRT_4PI,
    EvanescentError,
    PhaseQuantizer,
    QuadratureError,
    SteeringTarget,
    TileGeometry,
    beamwidth,
    brute_force_discrete,
    continuous_response,
    continuous_response_numeric,
    discrete_from_slopes,
    discrete_response,
    irs_pathloss,
    linear_phase_function,
    min_required_area,
    min_required_unit_cells,
    passivity_tau,
    phase_profile_discrete,
    to_db,
    unit_cell_factor,
    wavelength,
)

from conftest import random_incident, random_reflection, relerr

NORMAL_T = IncidentAngle(0.0, 0.0, 0.0)
NORMAL_R = ReflectionAngle(0.0, 0.0)


def steer(theta_r_deg, phi_r_deg=0.0, theta_t_deg=0.0, phi_t_deg=0.0, beta_0=0.0):
    return SteeringTarget(IncidentAngle.from_degrees(theta_t_deg, phi_t_deg),
                          ReflectionAngle.from_degrees(theta_r_deg, phi_r_deg), beta_0)


# ------------------------------------------------------------ geometry

def test_tile_geometry_counts():
    g = TileGeometry(10, 5, 0.5, 0.25)
    assert (g.Q_x, g.Q_y) == (20, 20)
    assert g.L_uc == 0.25
    nx, _ = g.cell_indices()
    assert nx[0] == -9 and nx[-1] == 10


@pytest.mark.parametrize("args", [(10, 10, 0.3, 0.5), (1.5, 1.5, 0.5, 0.5), (0.5, 1, 0.5, 0.5),
                                  (10, 10, 0.5, 0.5, 0.6), (-1, 1, 0.5, 0.5)])
def test_tile_geometry_rejects(args):
    with pytest.raises(ValueError):
        TileGeometry(*args)


def test_quantizer_bits_range():
    with pytest.raises(ValueError):
        PhaseQuantizer(0)
    with pytest.raises(ValueError):
        PhaseQuantizer(9)
    q = PhaseQuantizer(2)
    assert np.allclose(q(np.array([0.1, 1.7, 3.0, 6.2])), [0, np.pi / 2, np.pi, 0])


# --------------------------------------------------- continuous tiles

def test_continuous_normal_peak():
    g = continuous_response(TileGeometry(10, 10), steer(0), NORMAL_T, NORMAL_R, 1.0)
    assert np.isclose(abs(g), SQRT_4PI * 100, rtol=1e-14)
    assert np.isclose(abs(g), 354.4907702, rtol=1e-9)
    assert np.isclose(np.angle(g), np.pi / 2)


def test_continuous_first_null():
    # A_x offset of 1/L_x puts the x-sinc on its first zero
    L = 10
    psi_r = ReflectionAngle(np.arcsin(1 / L), 0.0)
    g = continuous_response(TileGeometry(L, L), steer(0), NORMAL_T, psi_r, 1.0)
    assert abs(g) < 1e-12 * SQRT_4PI * L * L


def test_continuous_tex_plate_pattern(rng):
    # closed-form RCS of a perfectly conducting a x b plate lit by a TE^x wave in the y-z plane
    a, b = 6.0, 4.0
    theta_i = 0.4
    psi_t = IncidentAngle(theta_i, 3 * np.pi / 2, 0.0)
    ts = rng.uniform(0, np.pi / 2, 200)
    ps = rng.uniform(0, 2 * np.pi, 200)
    psi_r = ReflectionAngle(ts, ps)
    target = SteeringTarget(IncidentAngle(theta_i, 3 * np.pi / 2), ReflectionAngle(theta_i, np.pi / 2))
    g = continuous_response(TileGeometry(a, b), target, psi_t, psi_r, 1.0)
    X = np.pi * a * np.sin(ts) * np.cos(ps)
    Y = np.pi * b * (np.sin(ts) * np.sin(ps) - np.sin(theta_i))
    sigma = 4 * np.pi * (a * b) ** 2 * (np.cos(ts) ** 2 * np.sin(ps) ** 2 + np.cos(ps) ** 2) \
        * np.sinc(X / np.pi) ** 2 * np.sinc(Y / np.pi) ** 2
    assert np.allclose(np.abs(g) ** 2, sigma, rtol=1e-12, atol=1e-12 * sigma.max())


@given(st.floats(0.01, 1.0), st.floats(-np.pi, np.pi))
def test_continuous_bounded_and_phase_shift(tau, b0):
    rng = np.random.default_rng(int(abs(b0) * 1e6))
    geom = TileGeometry(4, 6)
    psi_t, psi_r = random_incident(rng, 50), random_reflection(rng, 50)
    t0 = steer(20, 40, 10, 200)
    t1 = steer(20, 40, 10, 200, beta_0=b0)
    g0 = continuous_response(geom, t0, psi_t, psi_r, tau)
    g1 = continuous_response(geom, t1, psi_t, psi_r, tau)
    assert np.all(np.abs(g0) <= SQRT_4PI * tau * 24 * (1 + 1e-12))
    assert np.allclose(np.abs(g1), np.abs(g0))
    assert np.allclose(g1, g0 * np.exp(1j * b0))


def test_continuous_rejects_bad_tau():
    with pytest.raises(ValueError):
        continuous_response(TileGeometry(2, 2), steer(0), NORMAL_T, NORMAL_R, 1.5)


# ------------------------------------------------- quadrature oracle

def test_quadrature_matches_closed_form_2lambda(rng):
    geom = TileGeometry(2, 2)
    target = steer(35, 80, 15, 225, beta_0=0.3)
    psi_t = IncidentAngle.from_degrees(15, 225, 22.5)
    psi_r = random_reflection(rng, 40)
    ref = continuous_response(geom, target, psi_t, psi_r, 0.8)
    num = continuous_response_numeric(geom, linear_phase_function(target), psi_t, psi_r, 0.8)
    scale = np.abs(ref).max()
    assert np.max(np.abs(num - ref)) / scale < 1e-6


def test_quadrature_phase_shift_and_small_tile():
    target = steer(30)
    b = linear_phase_function(target)
    geom = TileGeometry(1, 1)
    psi_t = IncidentAngle.from_degrees(10, 30, 45)
    psi_r = ReflectionAngle.from_degrees(25, 10)
    g0 = continuous_response_numeric(geom, b, psi_t, psi_r)
    g1 = continuous_response_numeric(geom, lambda x, y: b(x, y) + np.pi / 4, psi_t, psi_r)
    assert np.isclose(abs(g0), abs(g1), rtol=1e-10)
    assert np.isclose(np.angle(g1 / g0), np.pi / 4, atol=1e-10)
    sizes = [1.0, 0.1, 0.01]
    mags = [abs(continuous_response_numeric(TileGeometry(s, s, s / 2, s / 2), b, psi_t, psi_r)) for s in sizes]
    assert mags[0] > mags[1] > mags[2] and mags[2] < 1e-3


def test_quadrature_reports_unsettled():
    with pytest.raises(QuadratureError):
        continuous_response_numeric(TileGeometry(4, 4), linear_phase_function(steer(0)),
                                    NORMAL_T, ReflectionAngle(1.0, 0.3), order=2, max_order=4, tol=1e-14)


# ------------------------------------------------- unit-cell factor

def test_unit_cell_factor_normal():
    assert np.isclose(unit_cell_factor(0.5, 1.0, NORMAL_T, NORMAL_R), 1j * SQRT_4PI * 0.25, rtol=1e-15)


def test_unit_cell_factor_null_at_cosine_two():
    psi_t = IncidentAngle(np.pi / 2, 0.0, np.pi / 2)
    psi_r = ReflectionAngle(np.pi / 2, 0.0)
    assert np.isclose(combined_cosines(psi_t, psi_r)[0], 2.0)
    assert abs(unit_cell_factor(0.5, 1.0, psi_t, psi_r)) < 1e-15


@given(st.floats(0, np.pi / 2 - 1e-3))
def test_unit_cell_factor_te_scales_with_cos(theta):
    psi_t = IncidentAngle(theta, 3 * np.pi / 2, np.pi / 2)
    psi_r = ReflectionAngle(theta, np.pi / 2)        # specular, in-plane so the sinc arguments vanish
    g = unit_cell_factor(0.5, 1.0, psi_t, psi_r)
    assert np.isclose(abs(g), SQRT_4PI * 0.25 * np.cos(theta), rtol=1e-12, atol=1e-15)


# --------------------------------------------------- phase profiles

def test_profile_normal_is_zero():
    assert np.all(phase_profile_discrete(TileGeometry(4, 4), steer(0)) == 0)


def test_profile_one_bit():
    ph = phase_profile_discrete(TileGeometry(5, 5), steer(37, 20), PhaseQuantizer(1))
    assert set(np.round(np.unique(ph), 12)) <= {0.0, round(np.pi, 12)}


def test_profile_increment_quarter_turn():
    ph = phase_profile_discrete(TileGeometry(4, 4), steer(30))      # sin 30 = 0.5
    assert np.allclose(np.diff(ph, axis=0), -np.pi / 2)
    assert np.allclose(np.diff(ph, axis=1), 0)


# ----------------------------------------------------- discrete tiles

def test_discrete_peak_is_cell_count_times_unit_cell():
    geom = TileGeometry(10, 10, 0.5, 0.5, 0.4)
    target = steer(40, 120, 20, 300, beta_0=1.0)
    psi_t = IncidentAngle(target.psi_t_star.theta, target.psi_t_star.phi, 0.7)
    g = discrete_response(geom, target, psi_t, target.psi_r_star, 0.8)
    g_uc = unit_cell_factor(0.4, 0.8, psi_t, target.psi_r_star)
    assert np.isclose(abs(g), abs(g_uc) * 400, rtol=1e-13)


def test_dirichlet_limit_at_grating_lobe():
    # Delta phase of exactly 2*pi between cells: the 0/0 point away from the origin
    geom = TileGeometry(3, 3, 0.5, 0.5, 0.5)
    psi_t, psi_r = IncidentAngle(np.pi / 2, 0, 0.4), ReflectionAngle(np.pi / 2, 0)
    closed = discrete_from_slopes(geom, 0.0, 0.0, 0.0, psi_t, psi_r, 1.0)
    brute = brute_force_discrete(geom, np.zeros((6, 6)), psi_t, psi_r, 1.0)
    assert np.isclose(closed, brute, rtol=1e-12, atol=1e-14)


def test_discrete_equals_brute_force_random(rng):
    worst = 0.0
    for _ in range(300):
        Q = 2 * rng.integers(1, 8, 2)
        d = rng.choice([0.125, 0.25, 0.5], 2)
        geom = TileGeometry(Q[0] * d[0], Q[1] * d[1], d[0], d[1], rng.uniform(0.05, 1) * d.min())
        target = SteeringTarget(random_incident(rng), random_reflection(rng), rng.uniform(-np.pi, np.pi))
        psi_t, psi_r = random_incident(rng), random_reflection(rng)
        tau = rng.uniform(0.1, 1)
        a = discrete_response(geom, target, psi_t, psi_r, tau)
        b = brute_force_discrete(geom, phase_profile_discrete(geom, target), psi_t, psi_r, tau)
        worst = max(worst, relerr(a, b))
    assert worst < 1e-12


def test_brute_force_two_by_two_hand_sum():
    geom = TileGeometry(1, 1, 0.5, 0.5, 0.5)
    psi_t = IncidentAngle.from_degrees(20, 30, 50)
    psi_r = ReflectionAngle.from_degrees(40, 100)
    ax, ay = combined_cosines(psi_t, psi_r)
    c = 0.3
    g_uc = unit_cell_factor(0.5, 1.0, psi_t, psi_r)
    # cells sit at n*d for n in {0, 1}
    expected = g_uc * np.exp(1j * c) * (1 + np.exp(1j * np.pi * ax)) * (1 + np.exp(1j * np.pi * ay))
    got = brute_force_discrete(geom, np.full((2, 2), c), psi_t, psi_r, 1.0)
    assert np.isclose(got, expected, rtol=1e-14)


def test_brute_force_common_phase_and_triangle_bound(rng):
    geom = TileGeometry(3, 2, 0.5, 0.5, 0.4)
    psi_t, psi_r = random_incident(rng, 10), random_reflection(rng, 10)
    for _ in range(10):
        ph = rng.uniform(0, 2 * np.pi, (6, 4))
        g = brute_force_discrete(geom, ph, psi_t, psi_r, 0.9)
        assert np.allclose(brute_force_discrete(geom, ph + 1.1, psi_t, psi_r, 0.9), g * np.exp(1.1j))
        bound = 24 * np.abs(unit_cell_factor(0.4, 0.9, psi_t, psi_r))
        assert np.all(np.abs(g) <= bound * (1 + 1e-12))
    with pytest.raises(ValueError):
        brute_force_discrete(geom, np.zeros((4, 6)), psi_t, psi_r)


def test_discrete_converges_to_continuous():
    target = steer(30, 45)
    psi_t = IncidentAngle(0.0, 0.0, 0.3)
    psi_r = ReflectionAngle(np.deg2rad(np.linspace(0, 89, 891)), np.pi / 4)
    ref = np.abs(continuous_response(TileGeometry(4, 4), target, psi_t, psi_r, 0.8))
    errs = []
    for d in (0.5, 0.25, 0.125, 0.0625):
        g = np.abs(discrete_response(TileGeometry(4, 4, d, d, d), target, psi_t, psi_r, 0.8))
        errs.append(np.max(np.abs(g - ref)))
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[-1] / ref.max() < 0.01


def test_quantized_patterns_near_ideal():
    geom = TileGeometry(10, 10, 0.5, 0.5, 0.5)
    target = steer(30, 45)
    psi_t = IncidentAngle(0.0, 0.0, 0.4)
    psi_r = ReflectionAngle(np.deg2rad(np.linspace(0, 89, 8901)), np.pi / 4)
    ideal = to_db(discrete_response(geom, target, psi_t, psi_r, 0.8)).max()
    three = to_db(discrete_response(geom, target, psi_t, psi_r, 0.8, PhaseQuantizer(3))).max()
    one = to_db(discrete_response(geom, target, psi_t, psi_r, 0.8, PhaseQuantizer(1))).max()
    assert abs(ideal - three) < 0.5
    assert ideal - 4 < one < ideal


def test_peak_location_large_tile():
    geom = TileGeometry(20, 20)
    target = steer(45, 45, 15, 225)
    psi_t = IncidentAngle.from_degrees(15, 225, 22.5)
    theta = np.arange(0, 90.0001, 0.01)
    g = continuous_response(geom, target, psi_t, ReflectionAngle.from_degrees(theta, 45), 0.8)
    assert abs(theta[np.argmax(np.abs(g))] - 45) <= 0.01 + 1e-9


# --------------------------------------------------- sizing and losses

def test_pathloss_cases():
    lam = 0.06
    pl_t, pl_r = (lam / (4 * np.pi * 100)) ** 2, (lam / (4 * np.pi * 50)) ** 2
    assert np.isclose(irs_pathloss(1 / SQRT_4PI, 100, 50, lam), pl_t * pl_r)
    assert np.isclose(irs_pathloss(3.0, 100, 100, lam) / irs_pathloss(3.0, 100, 200, lam), 4)
    with pytest.raises(ValueError):
        irs_pathloss(1.0, 0, 1, lam)


def test_minimum_area_matches_direct_link():
    lam = wavelength(5e9)
    area = min_required_area(lam, 200, 100, 100)
    assert np.isclose(area, 3.0)
    # a continuous tile of that area at normal incidence/reflection, in metres
    g = SQRT_4PI * area / lam                  # |g| in metres
    pl_d = (lam / (4 * np.pi * 200)) ** 2
    assert np.isclose(irs_pathloss(g, 100, 100, lam), pl_d)
    a = [min_required_area(lam, 200, r, 200 - r) for r in (1, 50, 100, 150, 199)]
    assert a[2] == max(a) and a[0] < a[1] and a[4] < a[3]
    assert min_required_area(lam, 200, 1e-9, 100) < 1e-9


@pytest.mark.parametrize("freq,expected", [(5e9, 3334), (10e9, 6667), (28e9, 18667)])
def test_min_unit_cells(freq, expected):
    lam = wavelength(freq)
    n = min_required_unit_cells(lam, 200, 100, 100, lam / 2)
    assert n == expected
    assert n == math.ceil(4 * 100 * 100 / (lam * 200) - 1e-9)


def test_passivity_tau():
    t = steer(25, 80, 25, 260)           # specular pair: theta_t = theta_r*
    assert np.isclose(passivity_tau(t.psi_t_star, t), 1.0)
    t = steer(60)
    assert np.isclose(passivity_tau(NORMAL_T, t), np.sqrt(2))
    psi_t = IncidentAngle.from_degrees(20, 10)
    t = SteeringTarget(psi_t, ReflectionAngle.from_degrees(50, 170))
    assert np.isclose(passivity_tau(psi_t, t), np.sqrt(np.cos(psi_t.theta) / np.cos(np.deg2rad(50))))
    with pytest.raises(EvanescentError):
        passivity_tau(IncidentAngle(0.0, np.pi), steer(80, 0, 80, 0))


def test_beamwidth_rectangle():
    theta = np.linspace(0, 10, 1001)
    p = np.where(np.abs(theta - 5) <= 1, 0.0, -30.0)
    # -10 dB sits a third of the way down each 0 to -30 dB edge step
    assert np.isclose(beamwidth(theta, p, 10), 2.0 + 2 * 0.01 / 3, atol=1e-9)


@given(st.floats(0, 1), st.floats(0, 1))
def test_translation_phase_of_slopes(ax_star, ay_star):
    # discrete_from_slopes is periodic in the target slope with period 1/d
    geom = TileGeometry(2, 2, 0.5, 0.5, 0.5)
    psi_t = IncidentAngle(0.3, 1.0, 0.5)
    psi_r = ReflectionAngle(0.7, 2.0)
    a = discrete_from_slopes(geom, ax_star, ay_star, 0.0, psi_t, psi_r, 1.0)
    b = discrete_from_slopes(geom, ax_star + 2, ay_star - 2, 0.0, psi_t, psi_r, 1.0)
    assert np.isclose(abs(a), abs(b), rtol=1e-9, atol=1e-12)
