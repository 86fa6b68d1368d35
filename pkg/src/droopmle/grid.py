"""Steady-state model of a single-bus DC microgrid under droop control.

Each generation unit u is a converter with droop law v = x_u + i_u/s_u,
where x_u is its reference voltage and the virtual admittance s_u is
sized proportionally to the unit's power rating W_u so that units share
load in proportion to their ratings:

    s_u = W_u / (v_min * (x_u - v_min))

The bus serves an aggregate load with constant-admittance,
constant-current, and constant-power components (p_cr, p_cc, p_cp),
rated at the system voltage x. Summing unit currents against the load
current gives a quadratic current balance in the bus voltage v:

    sum_u (x_u - v) s_u  -  v p_cr/x^2  -  p_cc/x  -  p_cp/v  =  0

whose physical root is returned in closed form by solve_bus_voltage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InfeasibleOperatingPoint

# Relative clamp for a discriminant driven slightly negative by rounding.
_DISC_CLAMP = 1e-12


@dataclass(frozen=True)
class LoadModel:
    """Three-component aggregate bus load, rated at the system voltage.

    Parameters
    ----------
    p_cr : float
        Constant-admittance component, watts drawn at voltage x.
        The equivalent shunt admittance is p_cr / x**2.
    p_cc : float
        Constant-current component, watts drawn at voltage x.
        The equivalent current sink is p_cc / x.
    p_cp : float
        Constant-power component, watts at any voltage.

    All components are non-negative; any of them may be zero.
    """

    p_cr: float = 0.0
    p_cc: float = 0.0
    p_cp: float = 0.0

    def __post_init__(self):
        for name in ("p_cr", "p_cc", "p_cp"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")

    @property
    def total(self) -> float:
        """Rated load power p_cr + p_cc + p_cp in watts."""
        return self.p_cr + self.p_cc + self.p_cp

    def shunt_admittance(self, rated_voltage: float) -> float:
        """Equivalent constant admittance p_cr / x**2 in siemens."""
        return self.p_cr / rated_voltage**2

    def sink_current(self, rated_voltage: float) -> float:
        """Equivalent constant current p_cc / x in amperes."""
        return self.p_cc / rated_voltage

    def power_at(self, voltage, rated_voltage: float):
        """Actual power drawn at a given bus voltage, in watts."""
        v = np.asarray(voltage, dtype=float)
        x = rated_voltage
        return (v * v) * self.p_cr / x**2 + v * self.p_cc / x + self.p_cp


@dataclass(frozen=True)
class MicrogridConfig:
    """Static description of the bus: voltages, unit ratings, load.

    Parameters
    ----------
    rated_voltage : float
        System voltage x in volts; the droop references sit at x outside
        of training.
    min_voltage : float
        Lower voltage limit v_min used to size the virtual admittances;
        0 < v_min < x.
    capacities : tuple of float
        Power rating W_u of each generation unit in watts, indexed
        1..U in reports.
    load : LoadModel
        Aggregate bus load.
    """

    rated_voltage: float
    min_voltage: float
    capacities: tuple
    load: LoadModel = field(default_factory=LoadModel)

    def __post_init__(self):
        if not (0.0 < self.min_voltage < self.rated_voltage):
            raise ValueError(
                "need 0 < min_voltage < rated_voltage, got "
                f"{self.min_voltage!r}, {self.rated_voltage!r}"
            )
        caps = tuple(float(w) for w in self.capacities)
        if len(caps) == 0:
            raise ValueError("at least one generation unit is required")
        if any(not np.isfinite(w) or w <= 0.0 for w in caps):
            raise ValueError(f"all capacities must be finite and > 0, got {caps!r}")
        object.__setattr__(self, "capacities", caps)

    @property
    def unit_count(self) -> int:
        return len(self.capacities)

    @property
    def max_deviation_fraction(self) -> float:
        """Largest admissible training amplitude delta = 1 - v_min/x.

        Deviations within +/- delta*x keep every reference voltage above
        v_min, so the virtual admittances stay positive and the bus
        voltage does not drop below v_min under rated load.
        """
        return 1.0 - self.min_voltage / self.rated_voltage

    def capacity_array(self) -> np.ndarray:
        return np.asarray(self.capacities, dtype=float)


@dataclass(frozen=True)
class SteadyStateSolution:
    """One solved operating point.

    Attributes
    ----------
    voltage : float
        Bus voltage v in volts.
    currents : ndarray
        Per-unit output currents i_u = (x_u - v) * s_u in amperes.
    powers : ndarray
        Per-unit injected powers p_u = v * i_u in watts.
    residual : float
        Current-balance defect at v, in amperes. Near zero for a
        successful solve; see `residual_scale` for the natural scale.
    residual_scale : float
        Scale sum_u x_u * s_u against which the residual is judged.
    """

    voltage: float
    currents: np.ndarray
    powers: np.ndarray
    residual: float
    residual_scale: float


def virtual_admittance(capacity, ref_voltage, min_voltage):
    """Droop virtual admittance s_u = W_u / (v_min * (x_u - v_min)).

    Broadcasts over array inputs. The factor alpha_u = 1 / (v_min *
    (x_u - v_min)) is the capacity-independent part; s_u = alpha_u * W_u.

    Raises
    ------
    ValueError
        If any reference voltage is at or below min_voltage, where the
        admittance would be non-positive or undefined.
    """
    x_u = np.asarray(ref_voltage, dtype=float)
    if np.any(x_u <= min_voltage):
        raise ValueError(
            f"reference voltage must exceed min_voltage={min_voltage!r}"
        )
    if min_voltage <= 0.0:
        raise ValueError("min_voltage must be positive")
    s = np.asarray(capacity, dtype=float) / (min_voltage * (x_u - min_voltage))
    return s if s.ndim else float(s)


def _balance_coefficients(config: MicrogridConfig, ref_voltages: np.ndarray):
    """A and B of the quadratic balance A v^2 - B v + p_cp = 0.

    ref_voltages has shape (..., U); returns A, B, s with matching
    leading shape, s being the per-unit admittances.
    """
    x = config.rated_voltage
    w = config.capacity_array()
    s = virtual_admittance(w, ref_voltages, config.min_voltage)
    a_coef = s.sum(axis=-1) + config.load.shunt_admittance(x)
    b_coef = (ref_voltages * s).sum(axis=-1) - config.load.sink_current(x)
    return a_coef, b_coef, s


def _positive_root(a_coef, b_coef, p_cp):
    """Larger root of A v^2 - B v + p_cp = 0, with a rounding clamp."""
    disc = b_coef * b_coef - 4.0 * p_cp * a_coef
    # Rounding can push an exactly-zero discriminant slightly negative.
    tiny = _DISC_CLAMP * b_coef * b_coef
    disc = np.where((disc < 0.0) & (disc >= -tiny), 0.0, disc)
    if np.any(disc < 0.0):
        worst = float(np.min(disc))
        raise InfeasibleOperatingPoint(
            "constant-power load is not supportable at this operating "
            f"point (discriminant {worst:.6g} < 0)"
        )
    if np.any(a_coef <= 0.0):
        raise InfeasibleOperatingPoint("aggregate admittance is not positive")
    return (b_coef + np.sqrt(disc)) / (2.0 * a_coef)


def bus_voltage(config: MicrogridConfig, ref_voltages) -> np.ndarray:
    """Bus voltage for one or many reference-voltage vectors.

    Parameters
    ----------
    config : MicrogridConfig
    ref_voltages : array-like, shape (U,) or (M, U)
        Per-unit reference voltages, all above min_voltage.

    Returns
    -------
    float or ndarray of shape (M,)
    """
    refs = np.asarray(ref_voltages, dtype=float)
    if refs.shape[-1] != config.unit_count:
        raise ValueError(
            f"expected {config.unit_count} reference voltages, got {refs.shape}"
        )
    a_coef, b_coef, _ = _balance_coefficients(config, refs)
    v = _positive_root(a_coef, b_coef, config.load.p_cp)
    if config.load.total == 0.0:
        # no demand: every unit idles at its reference, so with equal
        # references the bus rests there identically (no rounding)
        equal = np.all(refs == refs[..., :1], axis=-1)
        v = np.where(equal, refs[..., 0], v)
    return v if refs.ndim > 1 else float(v)


def balance_residual(config: MicrogridConfig, ref_voltages, voltage):
    """Current-balance defect and its natural scale at a given voltage.

    Returns (residual, scale) where scale = sum_u x_u * s_u. The solve
    is consistent when |residual| is a tiny multiple of scale.
    """
    refs = np.asarray(ref_voltages, dtype=float)
    v = np.asarray(voltage, dtype=float)
    x = config.rated_voltage
    s = virtual_admittance(config.capacity_array(), refs, config.min_voltage)
    supply = ((refs - v[..., None]) * s).sum(axis=-1)
    demand = (
        v * config.load.shunt_admittance(x)
        + config.load.sink_current(x)
        + np.divide(
            config.load.p_cp, v, out=np.zeros_like(v), where=v != 0.0
        )
    )
    scale = (refs * s).sum(axis=-1)
    return supply - demand, scale


def solve_bus_voltage(config: MicrogridConfig, ref_voltages) -> SteadyStateSolution:
    """Solve one steady state: voltage, per-unit currents and powers.

    Parameters
    ----------
    config : MicrogridConfig
    ref_voltages : array-like, shape (U,)
        Reference voltage of each unit, all above min_voltage.

    Raises
    ------
    InfeasibleOperatingPoint
        If the constant-power demand exceeds what the quadratic balance
        can supply (negative discriminant) or the aggregate admittance
        is non-positive.
    ValueError
        If any reference voltage is at or below min_voltage.
    """
    refs = np.asarray(ref_voltages, dtype=float)
    if refs.shape != (config.unit_count,):
        raise ValueError(
            f"expected shape ({config.unit_count},), got {refs.shape}"
        )
    v = bus_voltage(config, refs)
    s = virtual_admittance(
        config.capacity_array(), refs, config.min_voltage
    )
    currents = (refs - v) * s
    residual, scale = balance_residual(config, refs, v)
    return SteadyStateSolution(
        voltage=v,
        currents=currents,
        powers=v * currents,
        residual=float(residual),
        residual_scale=float(scale),
    )


def nominal_voltage(config: MicrogridConfig) -> float:
    """Bus voltage with every reference at the rated system voltage."""
    refs = np.full(config.unit_count, config.rated_voltage)
    return bus_voltage(config, refs)
