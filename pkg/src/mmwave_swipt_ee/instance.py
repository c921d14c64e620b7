"""Per-channel optimization instance shared by the inner solvers.

The inner problems mix transmit powers of order 1-100 W with noise powers of
order 1e-11 W.  Received-power quantities are therefore expressed in units of
the decoder noise ``noise_id`` inside the solvers (channel rows divided by
``sqrt(noise_id)``), while transmit powers stay in watts.

Every quantity in the problems depends on a digital precoder ``v`` only via
``h_k v`` and ``||F v||^2``.  Components of ``v`` that are orthogonal (in the
metric ``G = F^H F``) to ``span{G^-1 h_k^H}`` change no received signal and
only cost power, so precoders can be searched in that ``K``-dimensional
subspace without loss.  With ``reduce=False`` the full ``N_RF`` coordinates
are used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analog import AnalogPrecoder, effective_channel
from .metrics import SwiptConfig, circuit_power

__all__ = ["ProblemInstance", "InfeasibleProblemError", "SolverFailure"]


class InfeasibleProblemError(RuntimeError):
    """The harvested-energy and power constraints cannot be met together."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SolverFailure(RuntimeError):
    """A convex subproblem could not be solved."""

    def __init__(self, message, iteration=None, status=None):
        super().__init__(message)
        self.iteration = iteration
        self.status = status


@dataclass
class ProblemInstance:
    eff_channels: np.ndarray
    precoder: AnalogPrecoder
    config: SwiptConfig
    reduce: bool = True
    # derived
    scale: float = field(init=False)
    basis: np.ndarray = field(init=False)
    reduced_channels: np.ndarray = field(init=False)
    power_factor: np.ndarray = field(init=False)

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.eff_channels, dtype=complex))
        self.eff_channels = H
        self.scale = self.config.noise_id if self.config.noise_id > 0 else max(self.config.noise_ant, 1e-30)
        G = self.precoder.gram()
        if self.reduce and H.shape[0] < H.shape[1]:
            X = np.linalg.solve(G, H.conj().T)           # G^-1 H^H
            # G-orthonormal basis of span(X): X = B R with B^H G B = I
            L = np.linalg.cholesky(X.conj().T @ G @ X)
            self.basis = X @ np.linalg.inv(L).conj().T
            self.power_factor = np.eye(self.basis.shape[1])
        else:
            self.basis = np.eye(H.shape[1], dtype=complex)
            # ||F v||^2 = ||R v||^2 with R^H R = G
            self.power_factor = np.linalg.cholesky(G).conj().T
        self.reduced_channels = (H @ self.basis) / np.sqrt(self.scale)

    @classmethod
    def from_channel(cls, channel, precoder: AnalogPrecoder, config: SwiptConfig, reduce: bool = True):
        return cls(effective_channel(channel, precoder), precoder, config, reduce)

    @property
    def k_users(self) -> int:
        return self.eff_channels.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def n_rf(self) -> int:
        return self.eff_channels.shape[1]

    @property
    def noise_ant(self) -> float:
        """Antenna noise in solver units."""
        return self.config.noise_ant / self.scale

    @property
    def noise_id(self) -> float:
        return self.config.noise_id / self.scale

    @property
    def e_min(self) -> float:
        return self.config.e_min / self.scale

    @property
    def circuit_power(self) -> float:
        return circuit_power(self.precoder.structure, self.precoder.n_tx, self.precoder.n_rf, self.config)

    def with_config(self, config: SwiptConfig) -> "ProblemInstance":
        return ProblemInstance(self.eff_channels, self.precoder, config, self.reduce)

    def to_full(self, c: np.ndarray) -> np.ndarray:
        """Map reduced coordinates (last axis) to ``N_RF`` digital precoders."""
        return np.asarray(c) @ self.basis.T

    def to_reduced(self, v: np.ndarray) -> np.ndarray:
        """Coordinates of ``v`` in the basis (G-orthogonal projection)."""
        G = self.precoder.gram()
        return np.asarray(v) @ (G.T @ self.basis.conj())

    def best_gain(self) -> np.ndarray:
        """``max_v |h_k v|^2 / ||F v||^2`` per user, in solver units."""
        return np.sum(np.abs(self.reduced_channels) ** 2, axis=1) if self.reduce else np.real(
            np.einsum("ki,ij,kj->k", self.eff_channels.conj(), np.linalg.inv(self.precoder.gram()), self.eff_channels)
        ) / self.scale
