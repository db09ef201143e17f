import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mttoken.smoothing import (
    FrameRecord,
    read_predlog,
    smooth_stream,
    smooth_values,
    window_bounds,
    write_predlog,
)
from mttoken.taskhead import RawOutputs, activate
from mttoken.tensor import ContractError


def brute_force(frames, values, window, align="centered"):
    """O(n * S) reference: scan every frame for every window."""
    out = np.zeros_like(values)
    for i, t in enumerate(frames):
        lo, hi = window_bounds(np.array(t), window, align)
        sel = [j for j, s in enumerate(frames) if lo <= s <= hi]
        out[i] = np.mean(values[sel], axis=0)
    return out


def random_video(rng, n, name="v"):
    idx = np.sort(rng.choice(n * 2, size=n, replace=False))
    return [FrameRecord(name, int(t), RawOutputs(rng.normal(size=2), rng.normal(size=12) * 3, rng.normal(size=8) * 3))
            for t in idx]


def test_window_bounds():
    t = np.array([10])
    assert window_bounds(t, 3) == (9, 11)
    assert window_bounds(t, 4) == (8, 11)
    assert window_bounds(t, 1) == (10, 10)
    assert window_bounds(t, 5, "trailing") == (6, 10)
    with pytest.raises(ContractError):
        window_bounds(t, 0)
    with pytest.raises(ContractError):
        window_bounds(t, 3, "sideways")


def test_gap_example():
    out = smooth_values(np.array([0, 1, 3]), np.array([[0.0], [6.0], [12.0]]), 3)
    assert out[:, 0].tolist() == [3.0, 3.0, 12.0]


def test_window_one_is_identity(rng):
    frames = random_video(rng, 20)
    vals = rng.normal(size=(20, 3))
    np.testing.assert_array_equal(smooth_values(np.array([f.frame_index for f in frames]), vals, 1), vals)
    out = smooth_stream(frames, 1, 1.0, 5.0)
    for f, o in zip(frames, out):
        np.testing.assert_array_equal(o.raw.u_au, f.raw.u_au)


def test_constant_outputs_stay_constant(rng):
    raw = RawOutputs(np.array([0.3, -0.1]), rng.normal(size=12), rng.normal(size=8))
    frames = [FrameRecord("v", t, raw) for t in (0, 2, 3, 7, 8, 9)]
    expected = activate(RawOutputs(raw.v_hat[None], raw.u_au[None], raw.u_expr[None]), 1.0, 5.0)
    for o in smooth_stream(frames, 5, 1.0, 5.0):
        np.testing.assert_allclose(o.predictions.a_hat, expected.a_hat[0], rtol=0, atol=1e-12)
        np.testing.assert_allclose(o.predictions.e_hat, expected.e_hat[0], rtol=0, atol=1e-12)


@pytest.mark.parametrize("window", [1, 2, 3, 4, 7, 30])
@pytest.mark.parametrize("align", ["centered", "trailing"])
def test_matches_brute_force(window, align, rng):
    idx = np.sort(rng.choice(80, size=40, replace=False))
    vals = rng.normal(size=(40, 5))
    got = smooth_values(idx, vals, window, align)
    np.testing.assert_allclose(got, brute_force(list(idx), vals, window, align), rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 60), min_size=1, max_size=25, unique=True), st.integers(1, 12),
       st.integers(0, 2**32 - 1))
def test_unsorted_input_matches_brute_force_and_stays_in_range(frames, window, seed):
    vals = np.random.default_rng(seed).normal(size=(len(frames), 2))
    got = smooth_values(np.array(frames), vals, window)
    np.testing.assert_allclose(got, brute_force(frames, vals, window), rtol=0, atol=1e-12)
    assert (got >= vals.min(axis=0) - 1e-12).all() and (got <= vals.max(axis=0) + 1e-12).all()


def test_videos_are_independent(rng):
    a, b = random_video(rng, 10, "a"), random_video(rng, 10, "b")
    alone = smooth_stream(a, 5, 1.0, 5.0)
    mixed = smooth_stream([x for pair in zip(a, b) for x in pair], 5, 1.0, 5.0)
    assert [m.video_id for m in mixed[::2]] == ["a"] * 10
    for x, y in zip(alone, mixed[::2]):
        np.testing.assert_array_equal(x.raw.u_expr, y.raw.u_expr)


def test_duplicate_frame_rejected():
    with pytest.raises(ContractError):
        smooth_values(np.array([1, 1]), np.zeros((2, 1)), 3)


def test_predlog_round_trip(tmp_path, rng):
    frames = random_video(rng, 6) + random_video(rng, 4, "w")
    write_predlog(tmp_path / "raw.csv", frames)
    back, probs = read_predlog(tmp_path / "raw.csv")
    assert probs is None
    for f, g in zip(frames, back):
        assert (f.video_id, f.frame_index) == (g.video_id, g.frame_index)
        np.testing.assert_allclose(g.raw.u_au, f.raw.u_au, rtol=1e-8)
    sm = smooth_stream(back, 3, 1.0, 5.0)
    write_predlog(tmp_path / "sm.csv", sm)
    back2, probs2 = read_predlog(tmp_path / "sm.csv")
    assert probs2.shape == (10, 20)
    np.testing.assert_allclose(probs2[:, 12:].sum(axis=1), 1.0, atol=1e-8)
    # writing what was read reproduces the file byte for byte
    write_predlog(tmp_path / "raw2.csv", back)
    assert (tmp_path / "raw.csv").read_bytes() == (tmp_path / "raw2.csv").read_bytes()


def test_predlog_rejects_bad_files(tmp_path):
    (tmp_path / "a.csv").write_text("x,y\n1,2\n")
    with pytest.raises(ContractError):
        read_predlog(tmp_path / "a.csv")
    (tmp_path / "b.csv").write_text("")
    with pytest.raises(ContractError):
        read_predlog(tmp_path / "b.csv")
