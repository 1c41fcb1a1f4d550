import numpy as np
import pytest
from scipy import stats

from mmnoise.analysis import label_runs
from mmnoise.errors import InvalidParameterError
from mmnoise.model import ModelProfile, mean_state_durations
from mmnoise.synth import sample_state_sequence, synthesize_blocks, synthesize_noise

N = 1_000_000


@pytest.fixture(scope="module")
def ev_noise():
    from mmnoise.model import ev_reference_profile

    return synthesize_noise(ev_reference_profile(), N, seed=11, mode="complex")


def test_persistent_chain_is_constant():
    prof = ModelProfile([0.3, 0.7], [1.0, 2.0], 1.0)
    s = sample_state_sequence(prof, 100, seed=3)
    assert np.all(s == s[0])


def test_initial_state_follows_p():
    prof = ModelProfile([0.3, 0.7], [1.0, 2.0], 1.0)
    first = np.array([sample_state_sequence(prof, 1, seed=k)[0] for k in range(2000)])
    # binomial(2000, 0.7): 4 sigma is about 0.041
    assert abs(first.mean() - 0.7) < 0.041


def test_state_frequencies(ev_noise, ev_profile):
    freq = np.bincount(ev_noise.states, minlength=4) / N
    np.testing.assert_allclose(freq, ev_profile.state_probs, atol=0.01)


def test_background_run_length(ev_noise, ev_profile):
    _, lengths, vals = label_runs(ev_noise.states)
    d0 = mean_state_durations(ev_profile.r, ev_profile.state_probs)[0]
    assert lengths[vals == 0].mean() == pytest.approx(d0, rel=0.05)


def test_transition_counts_match_matrix(ev_noise, ev_profile):
    s = ev_noise.states.astype(np.int64)
    counts = np.zeros((4, 4))
    np.add.at(counts, (s[:-1], s[1:]), 1)
    emp = counts / counts.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(emp, ev_profile.transition_matrix(), atol=0.01)


def test_single_state_variance():
    z = synthesize_noise(ModelProfile([1.0], [1.0], 0.0), N, seed=5, mode="real").samples
    assert z.var() == pytest.approx(1.0, rel=0.005)


def test_per_state_variance(ev_noise, ev_profile):
    z = ev_noise.samples
    for m in range(4):
        sel = z[ev_noise.states == m]
        for comp in (sel.real, sel.imag):
            assert comp.var() == pytest.approx(ev_profile.state_vars[m], rel=0.02)


def test_conditional_gaussianity(ev_noise, ev_profile):
    for m in range(4):
        x = ev_noise.samples.real[ev_noise.states == m] / ev_profile.state_sigmas[m]
        d = stats.kstest(x, "norm").statistic
        assert d < 1.63 / np.sqrt(x.size)  # 1% critical value


def test_mixture_power_long_run(ev_profile):
    z = synthesize_noise(ev_profile, 20_800_000, seed=7, mode="real").samples
    assert np.mean(z * z) == pytest.approx(9.37e-3, rel=0.02)


def test_reproducible():
    prof = ModelProfile([0.6, 0.4], [0.1, 1.0], 0.9)
    a = synthesize_noise(prof, 5000, seed=42)
    b = synthesize_noise(prof, 5000, seed=42)
    assert np.array_equal(a.states, b.states)
    assert a.samples.tobytes() == b.samples.tobytes()
    c = synthesize_noise(prof, 5000, seed=43)
    assert not np.array_equal(a.samples, c.samples)


def test_real_mode_is_in_phase_component(ev_profile):
    c = synthesize_noise(ev_profile, 10_000, seed=9, mode="complex")
    r = synthesize_noise(ev_profile, 10_000, seed=9, mode="real")
    assert np.array_equal(c.states, r.states)
    assert np.array_equal(c.samples.real, r.samples)
    assert not np.iscomplexobj(r.samples)


def test_blocks_independent_of_workers(ev_profile):
    a = synthesize_blocks(ev_profile, 100_003, seed=4, block_len=10_000, workers=1)
    b = synthesize_blocks(ev_profile, 100_003, seed=4, block_len=10_000, workers=4)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert np.array_equal(a.states, b.states)
    assert a.samples.size == 100_003


def test_blocks_restart_chain(ev_profile):
    # a persistent chain keeps one state per block, drawn afresh each block
    prof = ev_profile.with_r(1.0)
    real = synthesize_blocks(prof, 64 * 50, seed=2, block_len=50)
    per_block = real.states.reshape(64, 50)
    assert np.all(per_block == per_block[:, :1])
    assert np.unique(per_block[:, 0]).size > 1


@pytest.mark.parametrize("kw", [dict(n=0), dict(n=2.5), dict(seed=-1), dict(mode="polar")])
def test_rejects_bad_arguments(ev_profile, kw):
    args = dict(n=10, seed=0, mode="real")
    args.update(kw)
    with pytest.raises(InvalidParameterError):
        synthesize_noise(ev_profile, **args)
