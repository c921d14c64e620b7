"""Geometric mmWave channel, ULA steering vectors, path loss and codebooks.

Each user's downlink row vector is built from ``L`` propagation paths

    h_k = sqrt(N_TX / L) * sum_l alpha_k^l * a(theta_k^l)^H

where ``a`` is the unit-norm uniform-linear-array response (a column), so
the beam ``f = a(theta)`` is matched to a path at angle ``theta``.  Path gains are
unit-variance circularly-symmetric complex Gaussians; the large-scale gain of
the user's distance (if enabled) multiplies every path amplitude.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ArrayGeometry",
    "PathComponent",
    "ChannelRealization",
    "Codebook",
    "array_response",
    "pathloss_db",
    "make_rng",
    "sample_channel",
    "channel_from_paths",
    "build_codebook",
    "dumps_channel",
    "loads_channel",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array: antenna count and element spacing in wavelengths."""

    n_tx: int
    spacing_over_lambda: float = 0.5

    def __post_init__(self):
        if int(self.n_tx) != self.n_tx or self.n_tx < 1:
            raise ValueError(f"n_tx must be a positive integer, got {self.n_tx}")
        if not self.spacing_over_lambda > 0:
            raise ValueError("spacing_over_lambda must be positive")


@dataclass(frozen=True)
class PathComponent:
    gain: complex
    aod_rad: float

    def __post_init__(self):
        if not 0.0 <= self.aod_rad <= TWO_PI:
            raise ValueError(f"angle of departure {self.aod_rad} outside [0, 2pi]")


@dataclass
class ChannelRealization:
    """Downlink channels of ``K`` users plus the paths that generated them.

    ``per_user`` is a ``(K, N_TX)`` complex array (row ``k`` is ``h_k``).
    ``paths[k]`` is the list of :class:`PathComponent` of user ``k`` and the
    stored gains already include any large-scale attenuation.
    """

    per_user: np.ndarray
    paths: list[list[PathComponent]]
    distances_m: np.ndarray
    geometry: ArrayGeometry

    def __post_init__(self):
        self.per_user = np.atleast_2d(np.asarray(self.per_user, dtype=complex))
        self.distances_m = np.asarray(self.distances_m, dtype=float)
        if self.per_user.shape[0] != len(self.paths):
            raise ValueError("one path list per user is required")
        if self.per_user.shape[1] != self.geometry.n_tx:
            raise ValueError("channel length does not match the array size")

    @property
    def k_users(self) -> int:
        return self.per_user.shape[0]

    @property
    def n_tx(self) -> int:
        return self.per_user.shape[1]

    def recompute(self) -> np.ndarray:
        """Rebuild ``h_k`` from the stored paths."""
        return channel_from_paths(self.paths, self.geometry)

    def subarray_slices(self, n_rf: int) -> list[np.ndarray]:
        """Split every ``h_k`` into ``n_rf`` contiguous blocks.

        Returns a list over subarrays; entry ``n`` is the ``(K, n_sub_n)``
        slice.  Block sizes differ by at most one when ``n_rf`` does not
        divide ``N_TX``.
        """
        return np.array_split(self.per_user, n_rf, axis=1)


@dataclass
class Codebook:
    """Candidate analog beams; every entry is a unit-norm steering vector."""

    entries: np.ndarray
    element_count: int
    angles: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.entries = np.atleast_2d(np.asarray(self.entries, dtype=complex))
        if self.entries.size and self.entries.shape[1] != self.element_count:
            raise ValueError("codebook entries must have element_count components")

    def __len__(self) -> int:
        return 0 if self.entries.size == 0 else self.entries.shape[0]


def array_response(theta, n: int, geometry: ArrayGeometry | None = None) -> np.ndarray:
    """ULA response ``exp(j m 2 pi (d/lambda) sin(theta)) / sqrt(n)``, m = 0..n-1."""
    if n < 1:
        raise ValueError("array length must be at least 1")
    spacing = 0.5 if geometry is None else geometry.spacing_over_lambda
    m = np.arange(n)
    return np.exp(1j * m * TWO_PI * spacing * np.sin(theta)) / np.sqrt(n)


def pathloss_db(distance_m) -> float:
    """Large-scale path loss ``69.4 + 24 log10(D)`` in dB (D in metres)."""
    distance_m = np.asarray(distance_m, dtype=float)
    if np.any(distance_m <= 0):
        raise ValueError("distance must be positive")
    out = 69.4 + 24.0 * np.log10(distance_m)
    return float(out) if out.ndim == 0 else out


def make_rng(seed: int, trial: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, trial)``.

    Streams come from ``SeedSequence`` spawn keys, so trial ``i`` draws the
    same numbers whether or not trials ``0..i-1`` were generated first.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(trial,))))


def channel_from_paths(paths, geometry: ArrayGeometry) -> np.ndarray:
    n = geometry.n_tx
    rows = []
    for user_paths in paths:
        h = np.zeros(n, dtype=complex)
        for p in user_paths:
            h += p.gain * array_response(p.aod_rad, n, geometry).conj()
        rows.append(np.sqrt(n / len(user_paths)) * h)
    return np.array(rows)


def sample_channel(
    k_users: int,
    l_paths: int,
    geometry: ArrayGeometry,
    cell_radius_m: float = 30.0,
    rng_seed: int = 0,
    *,
    trial: int = 0,
    pathloss: bool = True,
    min_distance_m: float = 1.0,
    gain_offset_db: float = 0.0,
) -> ChannelRealization:
    """Draw one realization of the geometric channel for ``k_users`` users.

    Angles are uniform on ``[0, 2pi)``, path gains ``CN(0, 1)``.  With
    ``pathloss`` on, each user is dropped at a distance uniform in
    ``[min_distance_m, cell_radius_m]`` and its path amplitudes are scaled by
    ``10^(-(PL(D) - gain_offset_db)/20)``; otherwise the distance is recorded
    as NaN and no scaling is applied.
    """
    if k_users < 1 or l_paths < 1:
        raise ValueError("need at least one user and one path")
    rng = make_rng(rng_seed, trial)
    distances = rng.uniform(min_distance_m, cell_radius_m, size=k_users)
    angles = rng.uniform(0.0, TWO_PI, size=(k_users, l_paths))
    gains = (rng.standard_normal((k_users, l_paths)) + 1j * rng.standard_normal((k_users, l_paths))) / np.sqrt(2)
    if pathloss:
        amp = 10.0 ** (-(pathloss_db(distances) - gain_offset_db) / 20.0)
        gains = gains * np.atleast_1d(amp)[:, None]
    else:
        distances = np.full(k_users, np.nan)
    paths = [
        [PathComponent(complex(gains[k, l]), float(angles[k, l])) for l in range(l_paths)]
        for k in range(k_users)
    ]
    h = channel_from_paths(paths, geometry)
    return ChannelRealization(h, paths, distances, geometry)


def build_codebook(channel: ChannelRealization, element_count: int, geometry: ArrayGeometry | None = None) -> Codebook:
    """Steering vectors at every (user, path) angle, user-major order."""
    geometry = channel.geometry if geometry is None else geometry
    angles = np.array([p.aod_rad for user_paths in channel.paths for p in user_paths])
    entries = np.array([array_response(a, element_count, geometry) for a in angles])
    return Codebook(entries, element_count, angles)


# Text format, one token per value:
#   mmwave-channel 1
#   geometry <n_tx> <spacing_over_lambda>
#   users <K> paths <L>
#   user <k> distance <D>
#   gains <g_1> ... <g_L>        complex tokens such as 1.5e-3-2e-4j
#   aods <theta_1> ... <theta_L>
#   h <h_1> ... <h_N>
# repeated per user in order.

def _ctok(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}j"


def dumps_channel(channel: ChannelRealization) -> str:
    out = io.StringIO()
    g = channel.geometry
    L = len(channel.paths[0])
    out.write("mmwave-channel 1\n")
    out.write(f"geometry {g.n_tx} {g.spacing_over_lambda:.17g}\n")
    out.write(f"users {channel.k_users} paths {L}\n")
    for k in range(channel.k_users):
        out.write(f"user {k} distance {channel.distances_m[k]:.17g}\n")
        out.write("gains " + " ".join(_ctok(p.gain) for p in channel.paths[k]) + "\n")
        out.write("aods " + " ".join(f"{p.aod_rad:.17g}" for p in channel.paths[k]) + "\n")
        out.write("h " + " ".join(_ctok(z) for z in channel.per_user[k]) + "\n")
    return out.getvalue()


def loads_channel(text: str) -> ChannelRealization:
    lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    if lines[0] != ["mmwave-channel", "1"]:
        raise ValueError("not a channel file (bad header)")
    geometry = ArrayGeometry(int(lines[1][1]), float(lines[1][2]))
    k_users = int(lines[2][1])
    rows, paths, distances = [], [], []
    for k in range(k_users):
        head, gains, aods, h = lines[3 + 4 * k: 7 + 4 * k]
        if head[0] != "user" or int(head[1]) != k:
            raise ValueError(f"malformed record for user {k}")
        distances.append(float(head[3]))
        paths.append([PathComponent(complex(gt), float(at)) for gt, at in zip(gains[1:], aods[1:])])
        rows.append([complex(t) for t in h[1:]])
    return ChannelRealization(np.array(rows), paths, np.array(distances), geometry)
