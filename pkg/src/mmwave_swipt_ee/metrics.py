"""SINR, harvested energy, power consumption and energy efficiency.

Users are indexed from 0 here (``k = 0`` is the first user); the multicast
precoder is kept separate as ``v0``.  Received powers and noise are in watts,
rates in bps/Hz, efficiencies in bps/Hz/W.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .analog import AnalogPrecoder, AnalogStructure

__all__ = [
    "dbm_to_watt",
    "watt_to_dbm",
    "SwiptConfig",
    "DigitalSolution",
    "MetricsReport",
    "ConstraintReport",
    "received_powers",
    "sinr_common",
    "sinr_private",
    "harvested_energy",
    "circuit_power",
    "transmit_power",
    "total_power",
    "spectral_efficiency",
    "energy_efficiency",
    "evaluate",
    "check_constraints",
]


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(watt):
    return 10.0 * np.log10(np.asarray(watt, dtype=float)) + 30.0


@dataclass(frozen=True)
class SwiptConfig:
    """Physical-layer and power-model parameters (all powers in watts).

    ``pa_factor`` multiplies the radiated power in the consumption model.  The
    defaults reproduce the simulation settings, where it is 0.38 even though
    an amplifier inefficiency would normally be at least 1.
    """

    noise_ant: float = 1e-11        # -80 dBm
    noise_id: float = 1e-9          # -60 dBm
    eh_efficiency: float = 0.5
    pa_factor: float = 0.38
    e_min: float = 1e-4             # 100 uW
    p_max: float = 1.0              # 30 dBm
    p_bb: float = 0.2
    p_rf: float = 0.3
    p_ps: float = 0.04

    def __post_init__(self):
        for name in ("noise_ant", "noise_id", "pa_factor", "e_min", "p_max", "p_bb", "p_rf", "p_ps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0.0 < self.eh_efficiency <= 1.0:
            raise ValueError("eh_efficiency must lie in (0, 1]")

    def with_(self, **changes) -> "SwiptConfig":
        return replace(self, **changes)


@dataclass
class DigitalSolution:
    """Baseband precoders and power-splitting ratios.

    ``v0`` has shape ``(N_RF,)``; ``v`` has shape ``(K, N_RF)`` with row ``k``
    the private precoder of user ``k``; ``beta`` has shape ``(K,)``.
    """

    v0: np.ndarray
    v: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.v0 = np.asarray(self.v0, dtype=complex).ravel()
        self.v = np.atleast_2d(np.asarray(self.v, dtype=complex))
        self.beta = np.asarray(self.beta, dtype=float).ravel()
        if self.v.shape[1] != self.v0.size or self.v.shape[0] != self.beta.size:
            raise ValueError("inconsistent precoder / power-splitting dimensions")

    @property
    def k_users(self) -> int:
        return self.beta.size

    def all_precoders(self) -> np.ndarray:
        """``(K+1, N_RF)`` array with the multicast precoder first."""
        return np.vstack([self.v0[None, :], self.v])

    @classmethod
    def zeros(cls, k_users: int, n_rf: int, beta=1.0) -> "DigitalSolution":
        return cls(np.zeros(n_rf), np.zeros((k_users, n_rf)), np.full(k_users, beta, dtype=float))


@dataclass
class MetricsReport:
    sinr_common: np.ndarray
    sinr_private: np.ndarray
    harvested: np.ndarray
    se: float
    p_transmit: float
    p_total: float
    ee: float


@dataclass
class ConstraintReport:
    harvested: np.ndarray
    p_transmit: float
    eh_ok: bool
    power_ok: bool
    beta_ok: bool
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.eh_ok and self.power_ok and self.beta_ok


def received_powers(solution: DigitalSolution, eff_channels) -> np.ndarray:
    """``P[k, i] = |h_k v_i|^2`` with column 0 the multicast stream."""
    H = np.atleast_2d(eff_channels)
    return np.abs(H @ solution.all_precoders().T) ** 2


def sinr_common(k: int, solution: DigitalSolution, eff_channels, config: SwiptConfig) -> float:
    """Common-stream SINR of user ``k``; all private streams interfere."""
    P = received_powers(solution, eff_channels)[k]
    b = solution.beta[k]
    num = b * P[0]
    if num == 0.0:
        return 0.0
    return float(num / (b * (P[1:].sum() + config.noise_ant) + config.noise_id))


def sinr_private(k: int, solution: DigitalSolution, eff_channels, config: SwiptConfig) -> float:
    """Private-stream SINR of user ``k`` after the common stream is cancelled."""
    P = received_powers(solution, eff_channels)[k]
    b = solution.beta[k]
    num = b * P[1 + k]
    if num == 0.0:
        return 0.0
    interference = P[1:].sum() - P[1 + k]
    return float(num / (b * (interference + config.noise_ant) + config.noise_id))


def harvested_energy(k: int, solution: DigitalSolution, eff_channels, config: SwiptConfig) -> float:
    P = received_powers(solution, eff_channels)[k]
    return float(config.eh_efficiency * (1.0 - solution.beta[k]) * (P.sum() + config.noise_ant))


def circuit_power(structure, n_tx: int, n_rf: int, config: SwiptConfig) -> float:
    """Baseband + RF-chain + phase-shifter consumption of a structure.

    The digital structure has one RF chain per antenna and no phase shifters.
    """
    structure = AnalogStructure.parse(structure)
    if structure is AnalogStructure.FULLY_CONNECTED:
        return config.p_bb + n_rf * config.p_rf + n_rf * n_tx * config.p_ps
    if structure is AnalogStructure.SUBARRAY:
        return config.p_bb + n_rf * config.p_rf + n_tx * config.p_ps
    return config.p_bb + n_tx * config.p_rf


def transmit_power(solution: DigitalSolution, precoder: AnalogPrecoder | np.ndarray) -> float:
    """Radiated power ``sum_k ||F v_k||^2`` including the multicast stream."""
    F = precoder.matrix if isinstance(precoder, AnalogPrecoder) else np.asarray(precoder)
    return float(np.sum(np.abs(F @ solution.all_precoders().T) ** 2))


def total_power(solution: DigitalSolution, precoder: AnalogPrecoder, structure=None, config: SwiptConfig = SwiptConfig()) -> float:
    structure = precoder.structure if structure is None else structure
    p_c = circuit_power(structure, precoder.n_tx, precoder.n_rf, config)
    return config.pa_factor * transmit_power(solution, precoder) + p_c


def _sinrs(solution, eff_channels, config):
    K = solution.k_users
    g0 = np.array([sinr_common(k, solution, eff_channels, config) for k in range(K)])
    gk = np.array([sinr_private(k, solution, eff_channels, config) for k in range(K)])
    return g0, gk


def spectral_efficiency(solution: DigitalSolution, eff_channels, config: SwiptConfig) -> float:
    """Multicast rate of the weakest user plus the sum of private rates."""
    g0, gk = _sinrs(solution, eff_channels, config)
    return float(np.min(np.log2(1.0 + g0)) + np.sum(np.log2(1.0 + gk)))


def energy_efficiency(solution: DigitalSolution, eff_channels, precoder: AnalogPrecoder, config: SwiptConfig) -> float:
    return spectral_efficiency(solution, eff_channels, config) / total_power(solution, precoder, None, config)


def evaluate(solution: DigitalSolution, eff_channels, precoder: AnalogPrecoder, config: SwiptConfig) -> MetricsReport:
    g0, gk = _sinrs(solution, eff_channels, config)
    se = float(np.min(np.log2(1.0 + g0)) + np.sum(np.log2(1.0 + gk)))
    harvested = np.array([harvested_energy(k, solution, eff_channels, config) for k in range(solution.k_users)])
    p_tx = transmit_power(solution, precoder)
    p_tot = total_power(solution, precoder, None, config)
    return MetricsReport(g0, gk, harvested, se, p_tx, p_tot, se / p_tot)


def check_constraints(solution: DigitalSolution, eff_channels, precoder: AnalogPrecoder,
                      config: SwiptConfig, rtol: float = 1e-6) -> ConstraintReport:
    """Harvested energy, power budget and splitting-ratio feasibility."""
    harvested = np.array([harvested_energy(k, solution, eff_channels, config) for k in range(solution.k_users)])
    p_tx = transmit_power(solution, precoder)
    eh_ok = bool(np.all(harvested >= config.e_min * (1.0 - rtol)))
    power_ok = bool(p_tx <= config.p_max * (1.0 + rtol))
    beta_ok = bool(np.all((solution.beta >= 0.0) & (solution.beta <= 1.0)))
    details = {
        "max_eh_violation": float(np.max(config.e_min - harvested)),
        "power_ratio": p_tx / config.p_max if config.p_max > 0 else np.inf,
    }
    return ConstraintReport(harvested, p_tx, eh_ok, power_ok, beta_ok, details)
