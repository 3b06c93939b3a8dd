"""Wind-aware multirotor energy model.

Chain per traversed edge: relative wind direction -> airspeed -> drag ->
thrust and pitch -> induced velocity (implicit, solved by fixed point) ->
power -> energy per metre -> edge energy.  Angles are in degrees at the API
boundary.

Wind speed follows ``p(x; a, b) = (a/b) (x/a)^(b-1) exp(-(x/a)^b)`` exactly as
the formula is written, i.e. ``a`` sits in the scale slot and ``b`` is the
exponent.  Prose elsewhere calls ``a`` the shape; we follow the formula.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class EnergyParams:
    mass: float = 2.0  # kg
    g: float = 9.81
    rho: float = 1.225  # kg/m^3
    area: float = 0.2  # m^2
    drag_coeff: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"{k} must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class WindField:
    a: float
    b: float
    omega_o: float  # degrees

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("Weibull parameters must be positive")
        object.__setattr__(self, "omega_o", float(self.omega_o) % 360.0)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class ConvergenceError(RuntimeError):
    pass


def weibull_pdf(x, a: float, b: float):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x >= 0
    r = x[pos] / a
    out[pos] = (a / b) * r ** (b - 1) * np.exp(-(r**b))
    return out


def weibull_cdf(x, a: float, b: float):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, -np.expm1(-(np.maximum(x, 0) / a) ** b), 0.0)


def weibull_sample(field: WindField, rng: np.random.Generator, size=None):
    """Inverse-CDF draw ``a * (-ln u)^(1/b)``."""
    u = rng.random(size)
    # 1 - u lies in (0, 1]; avoids log(0)
    return field.a * (-np.log1p(-u)) ** (1.0 / field.b)


def edge_direction(u_xy, v_xy) -> float:
    """Heading of the edge u -> v in degrees, [0, 360)."""
    x = v_xy[0] - u_xy[0]
    y = v_xy[1] - u_xy[1]
    if x == 0 and y == 0:
        raise ValueError("edge endpoints coincide")
    if x > 0:
        return math.degrees(math.atan(y / x)) % 360.0
    if x < 0:
        return 180.0 + math.degrees(math.atan(y / x))
    return 90.0 if y > 0 else 270.0


def relative_wind_direction(omega_o: float, psi: float) -> float:
    return (omega_o - psi) % 360.0


def airspeed(speed: float, wind_speed: float, theta: float) -> float:
    t = math.radians(theta)
    s_n = speed - wind_speed * math.cos(t)
    s_e = -wind_speed * math.sin(t)
    return math.sqrt(s_n * s_n + s_e * s_e)


def induced_velocity(thrust: float, speed: float, alpha: float, rho: float, area: float,
                     tol: float = 1e-10, max_iter: int = 1000) -> float:
    """Solve ``s_i = s_h^2 / sqrt((s cos a)^2 + (s sin a + s_i)^2)`` by fixed point.

    ``alpha`` is the pitch angle in radians.  Starts at the hover value
    ``s_h = sqrt(T / (2 rho A))``.  The map is averaged with the identity
    (same fixed point): its slope lies in (-1, 0], so the plain iteration
    can oscillate near hover while the averaged one contracts by >= 2x.
    """
    if not thrust > 0:
        raise ValueError("thrust must be positive")
    sh2 = thrust / (2.0 * rho * area)
    c = speed * math.cos(alpha)
    s = speed * math.sin(alpha)
    si = math.sqrt(sh2)
    for _ in range(max_iter):
        nxt = 0.5 * (si + sh2 / math.sqrt(c * c + (s + si) ** 2))
        if abs(nxt - si) < tol:
            si = nxt
            break
        si = nxt
    res = induced_velocity_residual(si, thrust, speed, alpha, rho, area)
    if res >= 1e-8:
        raise ConvergenceError(f"induced velocity did not converge (residual {res:.3e})")
    return si


def induced_velocity_residual(si, thrust, speed, alpha, rho, area) -> float:
    sh2 = thrust / (2.0 * rho * area)
    return abs(si - sh2 / math.sqrt((speed * math.cos(alpha)) ** 2 + (speed * math.sin(alpha) + si) ** 2))


@dataclass(frozen=True)
class PowerBreakdown:
    airspeed: float
    drag: float
    thrust: float
    pitch: float  # radians
    induced: float
    power: float  # W
    per_metre: float  # J/m


def power_breakdown(speed: float, wind_speed: float, theta: float, params: EnergyParams) -> PowerBreakdown:
    if not speed > 0:
        raise ValueError("ground speed must be positive")
    s_a = airspeed(speed, wind_speed, theta)
    drag = 0.5 * params.rho * s_a * s_a * params.drag_coeff * params.area
    weight = params.mass * params.g
    thrust = weight + drag
    pitch = math.atan(drag / weight)
    s_i = induced_velocity(thrust, speed, pitch, params.rho, params.area)
    power = thrust * (speed * math.sin(pitch) + s_i)
    return PowerBreakdown(s_a, drag, thrust, pitch, s_i, power, power / speed)


def energy_per_distance(speed: float, wind_speed: float, theta: float, params: EnergyParams) -> float:
    """Energy per metre (J/m) at relative wind direction ``theta`` (degrees)."""
    return power_breakdown(speed, wind_speed, theta, params).per_metre


def edge_energy(u_xy, v_xy, wind_speed: float, omega_o: float, speed: float, params: EnergyParams) -> float:
    """Energy (J) to fly the straight segment u -> v."""
    length = math.hypot(v_xy[0] - u_xy[0], v_xy[1] - u_xy[1])
    if length == 0.0:
        return 0.0
    theta = relative_wind_direction(omega_o, edge_direction(u_xy, v_xy))
    return energy_per_distance(speed, wind_speed, theta, params) * length
