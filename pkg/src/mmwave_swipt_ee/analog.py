"""Codebook-based analog precoder selection for the three RF structures."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, Codebook, array_response, build_codebook

__all__ = [
    "AnalogStructure",
    "AnalogPrecoder",
    "ConfigurationError",
    "select_fully_connected",
    "select_subarray",
    "digital_precoder",
    "design_analog_precoder",
    "effective_channel",
]


class ConfigurationError(ValueError):
    """Raised when a structure cannot be built with the requested sizes."""


class AnalogStructure(str, enum.Enum):
    DIGITAL = "digital"
    FULLY_CONNECTED = "fully_connected"
    SUBARRAY = "subarray"

    @classmethod
    def parse(cls, value) -> "AnalogStructure":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"fc": "fully_connected", "full": "fully_connected", "sub": "subarray", "sa": "subarray"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ConfigurationError(f"unknown structure {value!r}; choose from {names}") from None


@dataclass
class AnalogPrecoder:
    matrix: np.ndarray
    structure: AnalogStructure
    n_sub: int | None = None
    # (user, codebook index) picked for every RF chain
    choices: tuple = ()

    @property
    def n_tx(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_rf(self) -> int:
        return self.matrix.shape[1]

    def gram(self) -> np.ndarray:
        """``F^H F``; transmit power of a digital precoder ``v`` is ``v^H G v``."""
        return self.matrix.conj().T @ self.matrix

    def check(self, atol: float = 1e-12) -> None:
        """Raise ``AssertionError`` if the structural constraints do not hold."""
        F = self.matrix
        if self.structure is AnalogStructure.DIGITAL:
            assert np.array_equal(F, np.eye(F.shape[0])), "digital precoder must be the identity"
        elif self.structure is AnalogStructure.FULLY_CONNECTED:
            assert np.allclose(np.abs(F), 1 / np.sqrt(F.shape[0]), atol=atol, rtol=0)
        else:
            blocks = np.array_split(np.arange(F.shape[0]), F.shape[1])
            expected = np.zeros(F.shape, dtype=bool)
            for n, rows in enumerate(blocks):
                expected[rows, n] = True
                assert np.allclose(np.abs(F[rows, n]), 1 / np.sqrt(len(rows)), atol=atol, rtol=0)
            nz = np.abs(F) > 0
            assert np.array_equal(nz, expected), "subarray precoder must be block diagonal"


def _greedy_pick(h: np.ndarray, entries: np.ndarray, available: np.ndarray) -> int:
    metric = np.abs(entries @ h) ** 2
    metric = np.where(available, metric, -np.inf)
    return int(np.argmax(metric))  # first maximum wins ties


def select_fully_connected(channel: ChannelRealization, codebook: Codebook, n_rf: int) -> AnalogPrecoder:
    """Greedy beam selection for the fully-connected structure.

    RF chains are filled in order while users are visited round-robin; chain
    ``n`` takes the remaining codebook entry maximizing ``|h_k f|^2`` and that
    entry is removed from the candidate set.
    """
    if codebook.element_count != channel.n_tx:
        raise ConfigurationError("fully-connected codebook entries must span the whole array")
    if len(codebook) < n_rf:
        raise ConfigurationError(f"codebook has {len(codebook)} entries, {n_rf} RF chains requested")
    available = np.ones(len(codebook), dtype=bool)
    columns, choices = [], []
    n = 0
    while n < n_rf:
        for k in range(channel.k_users):
            idx = _greedy_pick(channel.per_user[k], codebook.entries, available)
            available[idx] = False
            columns.append(codebook.entries[idx])
            choices.append((k, idx))
            n += 1
            if n >= n_rf:
                break
    F = np.array(columns).T
    return AnalogPrecoder(F, AnalogStructure.FULLY_CONNECTED, None, tuple(choices))


def select_subarray(channel: ChannelRealization, sub_codebook: Codebook, n_rf: int) -> AnalogPrecoder:
    """Greedy beam selection for the subarray (block-diagonal) structure.

    Block ``n`` of ``F`` is the remaining sub-codebook entry maximizing
    ``|h_{k,n} f|^2`` for the user ``k`` visited at that step, where
    ``h_{k,n}`` is user ``k``'s channel restricted to subarray ``n``.
    """
    n_tx = channel.n_tx
    if n_rf > n_tx:
        raise ConfigurationError("more RF chains than antennas")
    row_blocks = np.array_split(np.arange(n_tx), n_rf)
    sizes = {len(r) for r in row_blocks}
    if len(sizes) == 1 and sub_codebook.element_count != row_blocks[0].size:
        raise ConfigurationError("sub-codebook entry length must equal the subarray size")
    if len(sub_codebook) < n_rf:
        raise ConfigurationError(f"codebook has {len(sub_codebook)} entries, {n_rf} RF chains requested")
    available = np.ones(len(sub_codebook), dtype=bool)
    F = np.zeros((n_tx, n_rf), dtype=complex)
    choices = []
    n = 0
    while n < n_rf:
        for k in range(channel.k_users):
            rows = row_blocks[n]
            # unequal subarrays: steering vectors of the block's own length
            if rows.size == sub_codebook.element_count:
                entries = sub_codebook.entries
            else:
                entries = np.array([array_response(a, rows.size, channel.geometry) for a in sub_codebook.angles])
            idx = _greedy_pick(channel.per_user[k, rows], entries, available)
            available[idx] = False
            F[rows, n] = entries[idx]
            choices.append((k, idx))
            n += 1
            if n >= n_rf:
                break
    n_sub = n_tx // n_rf if n_tx % n_rf == 0 else None
    return AnalogPrecoder(F, AnalogStructure.SUBARRAY, n_sub, tuple(choices))


def digital_precoder(n_tx: int) -> AnalogPrecoder:
    """Fully digital baseline: ``F = I`` and one RF chain per antenna."""
    return AnalogPrecoder(np.eye(n_tx, dtype=complex), AnalogStructure.DIGITAL, 1)


def design_analog_precoder(channel: ChannelRealization, structure, n_rf: int) -> AnalogPrecoder:
    """Build the codebook for ``structure`` and run the matching selection."""
    structure = AnalogStructure.parse(structure)
    if structure is AnalogStructure.DIGITAL:
        return digital_precoder(channel.n_tx)
    if structure is AnalogStructure.FULLY_CONNECTED:
        return select_fully_connected(channel, build_codebook(channel, channel.n_tx), n_rf)
    n_sub = int(np.ceil(channel.n_tx / n_rf))
    return select_subarray(channel, build_codebook(channel, n_sub), n_rf)


def effective_channel(channel, precoder: AnalogPrecoder) -> np.ndarray:
    """Equivalent baseband channels ``h_k F`` stacked as a ``(K, N_RF)`` array."""
    H = channel.per_user if isinstance(channel, ChannelRealization) else np.atleast_2d(channel)
    if H.shape[1] != precoder.n_tx:
        raise ValueError("channel and analog precoder dimensions disagree")
    return H @ precoder.matrix
