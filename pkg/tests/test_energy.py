import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dolroute.energy import (
    EnergyParams, WindField, airspeed, edge_direction, edge_energy, energy_per_distance,
    induced_velocity, induced_velocity_residual, power_breakdown, relative_wind_direction,
    weibull_cdf, weibull_pdf, weibull_sample,
)

P = EnergyParams()


def test_weibull_density_support():
    assert np.all(weibull_pdf([-3.0, -1e-9], 2.0, 1.7) == 0)
    assert np.all(weibull_pdf([0.5, 2.0, 9.0], 2.0, 1.7) > 0)
    assert np.all(weibull_cdf([-1.0], 2.0, 1.7) == 0)


@pytest.mark.parametrize("a,b", [(2.0, 1.5), (5.0, 2.0), (8.0, 3.0)])
def test_weibull_sampler_moments(a, b):
    x = weibull_sample(WindField(a, b, 0.0), np.random.default_rng(1), size=1_000_000)
    assert np.all(x >= 0)
    mean = a * math.gamma(1 + 1 / b)
    assert abs(x.mean() - mean) <= 0.01 * mean
    assert abs(np.mean(x <= a) - (1 - 1 / math.e)) <= 0.003
    assert weibull_cdf(a, a, b) == pytest.approx(1 - 1 / math.e, abs=1e-15)


def test_edge_direction_examples():
    assert edge_direction((0, 0), (1, 0)) == 0.0
    assert edge_direction((0, 0), (-1, 0)) == 180.0
    assert edge_direction((0, 0), (1, -1)) == pytest.approx(315.0, abs=1e-12)
    assert edge_direction((2, 2), (2, 5)) == 90.0
    assert edge_direction((2, 2), (2, -5)) == 270.0
    assert edge_direction((0, 0), (-1, -1)) == pytest.approx(225.0, abs=1e-12)
    with pytest.raises(ValueError):
        edge_direction((1, 1), (1, 1))


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_edge_direction_matches_atan2(x, y):
    if x == 0 and y == 0:
        return
    ref = math.degrees(math.atan2(y, x)) % 360.0
    d = edge_direction((0.0, 0.0), (x, y))
    assert 0 <= d < 360 + 1e-9
    assert min(abs(d - ref), 360 - abs(d - ref)) < 1e-9


def test_relative_wind_direction():
    assert relative_wind_direction(45.0, 45.0) == 0.0
    assert relative_wind_direction(10.0, 350.0) == pytest.approx(20.0, abs=1e-12)
    for w in (0.0, 73.0, 359.0):
        assert relative_wind_direction(w + 360.0, 120.0) == pytest.approx(relative_wind_direction(w, 120.0), abs=1e-12)


def test_airspeed_examples():
    assert airspeed(10.0, 0.0, 123.0) == 10.0
    assert airspeed(10.0, 3.0, 0.0) == pytest.approx(7.0, abs=1e-12)
    assert airspeed(10.0, 3.0, 180.0) == pytest.approx(13.0, abs=1e-12)


def test_induced_velocity_hover_and_residual():
    rng = np.random.default_rng(3)
    T = 25.0
    sh = math.sqrt(T / (2 * P.rho * P.area))
    assert induced_velocity(T, 0.0, 0.0, P.rho, P.area) == sh
    for _ in range(500):
        T, s, a = rng.uniform(1, 80), rng.uniform(0, 30), rng.uniform(0, 1.2)
        si = induced_velocity(T, s, a, P.rho, P.area)
        assert si > 0
        assert induced_velocity_residual(si, T, s, a, P.rho, P.area) < 1e-8
    with pytest.raises(ValueError):
        induced_velocity(0.0, 1.0, 0.0, P.rho, P.area)


def test_induced_velocity_decreases_with_speed():
    speeds = np.linspace(0, 25, 101)
    vals = [induced_velocity(20.0, s, 0.0, P.rho, P.area) for s in speeds]
    assert np.all(np.diff(vals) < 0)


def test_energy_symmetric_in_theta():
    grid = np.linspace(-180, 180, 361)
    for ws in (0.0, 2.5, 7.0):
        for th in grid:
            assert abs(energy_per_distance(10.0, ws, th, P) - energy_per_distance(10.0, ws, -th, P)) <= 1e-12


def test_headwind_costs_more_than_tailwind():
    for ws in np.linspace(0.1, 9, 30):
        assert energy_per_distance(10.0, ws, 180.0, P) >= energy_per_distance(10.0, ws, 0.0, P)


def test_calm_air_straight_line_oracle():
    # hand composition of the formulas, independent of the library chain
    W, g, rho, A, cd, s = 2.0, 9.81, 1.225, 0.2, 1.0, 10.0
    fd = 0.5 * rho * s**2 * cd * A
    T = W * g + fd
    al = math.atan(fd / (W * g))
    sh2 = T / (2 * rho * A)
    si = math.sqrt(sh2)
    for _ in range(10_000):
        si = sh2 / math.sqrt((s * math.cos(al)) ** 2 + (s * math.sin(al) + si) ** 2)
    mu = T * (s * math.sin(al) + si) / s
    for omega in (0.0, 90.0, 271.0):
        assert abs(energy_per_distance(s, 0.0, omega, P) - mu) <= 1e-9
    br = power_breakdown(s, 0.0, 33.0, P)
    assert br.airspeed == s
    assert br.pitch == pytest.approx(al, abs=1e-15)


@settings(max_examples=50)
@given(st.floats(1, 500), st.floats(0, 359.9), st.floats(0, 10), st.floats(0, 360))
def test_edge_energy_linear_in_length(length, heading, ws, omega):
    t = math.radians(heading)
    v = (length * math.cos(t), length * math.sin(t))
    v2 = (2 * v[0], 2 * v[1])
    e1 = edge_energy((0.0, 0.0), v, ws, omega, 10.0, P)
    e2 = edge_energy((0.0, 0.0), v2, ws, omega, 10.0, P)
    assert e1 > 0
    assert e2 == pytest.approx(2 * e1, rel=1e-9)


def test_edge_energy_zero_length_and_constant_rate():
    assert edge_energy((3.0, 4.0), (3.0, 4.0), 5.0, 10.0, 10.0, P) == 0.0
    # mu is constant along an edge, so a trapezoid integral is exact
    mu = energy_per_distance(10.0, 4.0, relative_wind_direction(30.0, 0.0), P)
    xs = np.linspace(0, 250, 11)
    integral = np.trapezoid(np.full_like(xs, mu), xs)
    assert edge_energy((0.0, 0.0), (250.0, 0.0), 4.0, 30.0, 10.0, P) == pytest.approx(integral, rel=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        EnergyParams(mass=0.0)
    with pytest.raises(ValueError):
        WindField(-1.0, 2.0, 0.0)
    assert WindField(1.0, 2.0, 370.0).omega_o == pytest.approx(10.0)
