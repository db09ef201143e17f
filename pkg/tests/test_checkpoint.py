import numpy as np
import pytest

from mttoken.checkpoint import from_bytes, load_checkpoint, save_checkpoint, to_bytes
from mttoken.config import gradcheck_preset
from mttoken.taskhead import forward, init_model
from mttoken.tensor import ContractError


def test_round_trip_is_byte_identical(tmp_path):
    cfg = gradcheck_preset()
    params = init_model(cfg, seed=3)
    save_checkpoint(tmp_path / "a.ckpt", params, cfg)
    back, cfg2 = load_checkpoint(tmp_path / "a.ckpt")
    assert cfg2 == cfg and list(back) == list(params)
    save_checkpoint(tmp_path / "b.ckpt", back, cfg2)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    for k in params:
        np.testing.assert_array_equal(back[k].data, params[k].data.astype(np.float32))


def test_reloaded_model_predicts_identically(tmp_path):
    cfg = gradcheck_preset()
    params, _ = from_bytes(to_bytes(init_model(cfg, seed=1), cfg))
    again, _ = from_bytes(to_bytes(params, cfg))
    x = np.random.default_rng(0).random((3, 8, 8, 3))
    a, b = forward(x, params, cfg).numpy(), forward(x, again, cfg).numpy()
    np.testing.assert_array_equal(a.u_expr, b.u_expr)
    np.testing.assert_array_equal(a.v_hat, b.v_hat)


def test_corrupt_blobs_rejected():
    cfg = gradcheck_preset()
    blob = to_bytes(init_model(cfg, seed=0), cfg)
    with pytest.raises(ContractError):
        from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ContractError):
        from_bytes(blob + b"\0")
    for cut in (3, len(blob) // 2, len(blob) - 10):
        with pytest.raises(ContractError):
            from_bytes(blob[:cut])
