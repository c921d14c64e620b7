import numpy as np
import pytest

from mmwave_swipt_ee.analog import (AnalogStructure, ConfigurationError, build_codebook, design_analog_precoder,
                                    digital_precoder, effective_channel, select_fully_connected, select_subarray)
from mmwave_swipt_ee.channel import ArrayGeometry, Codebook, array_response, sample_channel


def greedy_oracle(H_blocks, entries_for, n_rf, k_users):
    """Step-by-step argmax with removal, written without the library helpers."""
    used = set()
    picks = []
    for n in range(n_rf):
        k = n % k_users
        entries = entries_for(n)
        best, best_val = None, -1.0
        for j in range(entries.shape[0]):
            if j in used:
                continue
            val = abs(np.sum(entries[j] * H_blocks(k, n))) ** 2
            if val > best_val:
                best, best_val = j, val
        used.add(best)
        picks.append((k, best))
    return picks


def test_matched_single_beam():
    ch = sample_channel(1, 1, ArrayGeometry(256), pathloss=False, rng_seed=8)
    F = design_analog_precoder(ch, "fully_connected", 1)
    assert abs(abs(ch.per_user[0] @ F.matrix[:, 0]) ** 2 - 256 * abs(ch.paths[0][0].gain) ** 2) < 1e-8


def test_orthogonal_candidate_is_skipped():
    n = 8
    h = np.sqrt(n) * array_response(0.3, n).conj()
    ch = sample_channel(1, 1, ArrayGeometry(n), pathloss=False)
    ch.per_user[0] = h
    # entry 0 orthogonal to h, entry 1 matched
    ortho = np.exp(1j * np.pi * np.arange(n)) / np.sqrt(n)
    ortho -= (h.conj() @ ortho) / (h.conj() @ h) * h.conj()
    ortho /= np.linalg.norm(ortho)
    cb = Codebook(np.array([ortho, array_response(0.3, n)]), n)
    F = select_fully_connected(ch, cb, 1)
    assert F.choices[0][1] == 1


@pytest.mark.parametrize("seed", range(5))
def test_fully_connected_matches_oracle(seed):
    ch = sample_channel(2, 8, ArrayGeometry(256), 30.0, seed)
    cb = build_codebook(ch, 256)
    F = select_fully_connected(ch, cb, 4)
    ref = greedy_oracle(lambda k, n: ch.per_user[k], lambda n: cb.entries, 4, 2)
    assert list(F.choices) == ref
    assert np.allclose(F.matrix, cb.entries[[j for _, j in ref]].T)


@pytest.mark.parametrize("seed", range(5))
def test_subarray_matches_oracle(seed):
    ch = sample_channel(2, 8, ArrayGeometry(16), 30.0, seed)
    cb = build_codebook(ch, 8)
    F = select_subarray(ch, cb, 2)
    ref = greedy_oracle(lambda k, n: ch.per_user[k, 8 * n:8 * (n + 1)], lambda n: cb.entries, 2, 2)
    assert list(F.choices) == ref


def test_subarray_structure_is_block_diagonal():
    ch = sample_channel(2, 8, ArrayGeometry(256), 30.0, 1)
    F = design_analog_precoder(ch, "subarray", 4)
    assert np.count_nonzero(F.matrix) == 256
    for n in range(4):
        block = F.matrix[64 * n:64 * (n + 1)]
        assert np.count_nonzero(block[:, n]) == 64
        assert np.allclose(np.abs(block[:, n]), 1 / 8)


def test_single_subarray_equals_fully_connected():
    ch = sample_channel(2, 8, ArrayGeometry(32), 30.0, 6)
    cb = build_codebook(ch, 32)
    assert np.allclose(select_subarray(ch, cb, 1).matrix, select_fully_connected(ch, cb, 1).matrix)


def test_constant_modulus_columns():
    ch = sample_channel(2, 8, ArrayGeometry(64), 30.0, 2)
    F = design_analog_precoder(ch, "fully_connected", 4)
    assert np.allclose(np.abs(F.matrix), 1 / 8)


def test_effective_channel_identity_and_zero():
    ch = sample_channel(2, 8, ArrayGeometry(16), 30.0, 0)
    assert np.array_equal(effective_channel(ch, digital_precoder(16)), ch.per_user)
    assert np.all(effective_channel(np.zeros((1, 16)), digital_precoder(16)) == 0)


def test_effective_channel_naive_loops():
    ch = sample_channel(2, 8, ArrayGeometry(32), 30.0, 3)
    F = design_analog_precoder(ch, "fully_connected", 4)
    out = effective_channel(ch, F)
    for k in range(2):
        for n in range(4):
            acc = 0j
            for m in range(32):
                acc += ch.per_user[k, m] * F.matrix[m, n]
            assert abs(out[k, n] - acc) < 1e-12 * max(1.0, abs(acc))


def test_errors():
    ch = sample_channel(2, 1, ArrayGeometry(16), 30.0, 0)
    with pytest.raises(ConfigurationError):
        select_fully_connected(ch, build_codebook(ch, 16), 3)   # two entries only
    with pytest.raises(ConfigurationError):
        select_fully_connected(ch, build_codebook(ch, 8), 1)
    with pytest.raises(ValueError):
        AnalogStructure.parse("hybridish")


def test_structure_aliases():
    assert AnalogStructure.parse("FC") is AnalogStructure.FULLY_CONNECTED
    assert AnalogStructure.parse("sub-array".replace("-", "")) is AnalogStructure.SUBARRAY
