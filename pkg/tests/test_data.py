import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mttoken.data import (
    Batch,
    DatasetExample,
    SyntheticSpec,
    affine_augment,
    affine_transform,
    example_from_json,
    generate_synthetic,
    latent_labels,
    load_image,
    make_batch,
    mixup_batch,
    mixup_with,
    read_manifest,
    render_synthetic,
    sub_seed,
    synthetic_spec_from_pairs,
    write_manifest,
)
from mttoken.loss import MultiTaskTarget, collate_targets
from mttoken.tensor import ContractError


def small_batch(rng, presence):
    n = len(presence)
    targets = [MultiTaskTarget(
        va=list(rng.uniform(-1, 1, 2)) if m[0] else None,
        au=list(rng.integers(0, 2, 12)) if m[1] else None,
        expr=int(rng.integers(8)) if m[2] else None) for m in presence]
    return Batch(rng.random((n, 8, 8, 3)), collate_targets(targets))


def test_generation_is_deterministic():
    spec = SyntheticSpec(n_videos=2, frames_per_video=5, missing_au=0.3, seed=7)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert a == b
    assert generate_synthetic(SyntheticSpec(n_videos=2, frames_per_video=5, seed=8)) != a


def test_sub_seed_depends_on_every_part():
    base = sub_seed(0, "video000", 3)
    assert 0 <= base < 2**63
    assert len({base, sub_seed(1, "video000", 3), sub_seed(0, "video001", 3), sub_seed(0, "video000", 4)}) == 4


def test_zero_missing_rate_labels_everything():
    ex = generate_synthetic(SyntheticSpec(n_videos=3, frames_per_video=6))
    assert len(ex) == 18
    assert all(tuple(e.target.mask) == (True, True, True) for e in ex)


def test_missing_rate_is_respected():
    ex = generate_synthetic(SyntheticSpec(n_videos=100, frames_per_video=100, missing_au=0.5, seed=3))
    rate = np.mean([e.target.au is None for e in ex])
    assert abs(rate - 0.5) < 0.02
    assert all(e.target.va is not None and e.target.expr is not None for e in ex)


def test_frame_drop_removes_frames():
    ex = generate_synthetic(SyntheticSpec(n_videos=10, frames_per_video=50, frame_drop=0.3, seed=1))
    assert 300 < len(ex) < 400
    assert all(ex[i].frame_index < ex[i + 1].frame_index for i in range(len(ex) - 1)
               if ex[i].video_id == ex[i + 1].video_id)


def test_bad_rate_rejected():
    with pytest.raises(ContractError):
        SyntheticSpec(missing_va=1.5)


def test_images_encode_labels_and_regenerate(tmp_path):
    ex = generate_synthetic(SyntheticSpec(n_videos=1, frames_per_video=3, seed=2))
    for e in ex:
        img = load_image(e.image, (32, 32, 3))
        assert img.shape == (32, 32, 3) and img.min() >= 0 and img.max() <= 1
        np.testing.assert_array_equal(img, load_image(e.image, (32, 32, 3)))
        expr_block = img[:, :, 1].reshape(4, 8, 4, 8).mean(axis=(1, 3)).reshape(-1)
        assert int(np.argmax(expr_block)) == e.target.expr
        au_blocks = img[:, :, 0].reshape(4, 8, 4, 8).mean(axis=(1, 3)).reshape(-1)[:12]
        assert ((au_blocks > 0.5).astype(int) == np.array(e.target.au)).all()
    seed = int(ex[0].image.split(":")[1])
    va, _, _ = latent_labels(seed)
    assert np.allclose(va, ex[0].target.va)


def test_render_rejects_bad_size():
    with pytest.raises(ContractError):
        render_synthetic(1, (30, 30, 3))


def test_npy_images_load_relative_to_root(tmp_path):
    arr = np.random.default_rng(0).random((8, 8, 3))
    np.save(tmp_path / "a.npy", arr)
    np.testing.assert_array_equal(load_image("a.npy", (8, 8, 3), tmp_path), arr)
    with pytest.raises(ContractError):
        load_image("a.npy", (4, 4, 3), tmp_path)


def test_manifest_round_trip(tmp_path):
    ex = generate_synthetic(SyntheticSpec(n_videos=2, frames_per_video=4, missing_va=0.5, missing_expr=0.5, seed=4))
    write_manifest(tmp_path / "m.jsonl", ex)
    assert read_manifest(tmp_path / "m.jsonl") == ex


def test_manifest_rejects_duplicates_and_bad_labels(tmp_path):
    e = DatasetExample("v", 0, "synthetic:1", MultiTaskTarget(expr=2))
    with pytest.raises(ContractError):
        write_manifest(tmp_path / "m.jsonl", [e, e])
    for bad in ('{"video_id": "v", "frame_index": 0, "image": "x", "expr": 8}',
                '{"video_id": "v", "frame_index": 0, "image": "x", "au": [1, 0]}',
                '{"video_id": "v", "frame_index": 0, "image": "x", "va": [0.1]}'):
        with pytest.raises(ContractError):
            example_from_json(bad)


def test_spec_from_pairs():
    spec = synthetic_spec_from_pairs([("n_videos", "3"), ("image_size", "[16, 16, 3]"), ("missing_au", "0.25")])
    assert spec.n_videos == 3 and spec.image_size == (16, 16, 3) and spec.missing_au == 0.25
    with pytest.raises(ContractError):
        synthetic_spec_from_pairs([("nope", "1")])


def test_affine_identity_is_bit_exact(rng):
    img = rng.random((12, 12, 3))
    np.testing.assert_array_equal(affine_transform(img), img)


def test_affine_preserves_shape_and_range(rng):
    img = rng.random((16, 16, 3))
    out = affine_augment(img, rng)
    assert out.shape == img.shape and out.min() >= 0 and out.max() <= 1


def test_half_turn_of_a_point_symmetric_pattern(rng):
    half = rng.random((4, 8, 3))
    img = np.concatenate([half, half[::-1, ::-1]], axis=0)
    np.testing.assert_allclose(affine_transform(img, 180.0), img, rtol=0, atol=1e-12)


def test_quarter_turn_matches_rot90(rng):
    img = rng.random((7, 7, 2))
    out = affine_transform(img, 90.0)
    assert min(np.abs(out - np.rot90(img, k, axes=(0, 1))).max() for k in (1, 3)) < 1e-12


def test_mixup_weight_one_is_identity(rng):
    b = small_batch(rng, [(1, 1, 1), (0, 0, 1), (1, 0, 0), (0, 1, 1)])
    out = mixup_with(b, np.array([1, 2, 3, 0]), 1.0)
    np.testing.assert_array_equal(out.images, b.images)
    for f in ("va", "au", "expr", "mask"):
        np.testing.assert_array_equal(getattr(out.targets, f), getattr(b.targets, f))


def test_mixup_half_averages_when_both_labelled(rng):
    b = small_batch(rng, [(1, 1, 1), (1, 1, 1)])
    out = mixup_with(b, np.array([1, 0]), 0.5)
    np.testing.assert_allclose(out.images[0], (b.images[0] + b.images[1]) / 2, rtol=0, atol=1e-15)
    np.testing.assert_allclose(out.targets.va[0], b.targets.va.mean(axis=0), rtol=0, atol=1e-15)
    np.testing.assert_allclose(out.targets.au[1], b.targets.au.mean(axis=0), rtol=0, atol=1e-15)


def test_mixup_of_two_classes_gives_soft_label():
    t = collate_targets([MultiTaskTarget(expr=2), MultiTaskTarget(expr=5)])
    out = mixup_with(Batch(np.zeros((2, 4, 4, 3)), t), np.array([1, 0]), np.array([0.7, 0.7]))
    q = np.zeros(8)
    q[2], q[5] = 0.7, 0.3
    np.testing.assert_allclose(out.targets.expr[0], q, rtol=0, atol=1e-15)


def test_mixup_label_from_one_side_is_kept(rng):
    b = small_batch(rng, [(1, 0, 0), (0, 1, 0)])
    out = mixup_with(b, np.array([1, 0]), 0.3)
    assert out.targets.mask[0].tolist() == [True, True, False]
    np.testing.assert_array_equal(out.targets.va[0], b.targets.va[0])
    np.testing.assert_array_equal(out.targets.au[0], b.targets.au[1])


def test_mixup_rejects_bad_input(rng):
    b = small_batch(rng, [(1, 1, 1), (1, 1, 1)])
    with pytest.raises(ContractError):
        mixup_batch(b, 0.0, rng)
    with pytest.raises(ContractError):
        mixup_batch(Batch(b.images[:1], b.targets.take([0])), 0.2, rng)
    with pytest.raises(ContractError):
        mixup_with(b, np.array([1, 0]), 1.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.floats(0.05, 5.0), st.integers(0, 2**32 - 1))
def test_mixup_invariants(n, alpha, seed):
    rng = np.random.default_rng(seed)
    b = small_batch(rng, [tuple(rng.random(3) < 0.6) for _ in range(n)])
    out = mixup_batch(b, alpha, np.random.default_rng(seed))
    again = mixup_batch(b, alpha, np.random.default_rng(seed))
    np.testing.assert_array_equal(out.images, again.images)
    assert out.images.min() >= 0 and out.images.max() <= 1
    rows = out.targets.expr[out.targets.mask[:, 2]].sum(axis=1)
    np.testing.assert_allclose(rows, 1.0, rtol=0, atol=1e-12)
    # a task cannot appear in a mix unless some partner had it
    perm = np.random.default_rng(seed).permutation(n)
    assert (out.targets.mask <= (b.targets.mask | b.targets.mask[perm])).all()


def test_make_batch_collates(rng):
    ex = generate_synthetic(SyntheticSpec(n_videos=1, frames_per_video=2))
    b = make_batch(ex, rng.random((2, 32, 32, 3)))
    assert len(b) == 2 and b.targets.mask.all()
