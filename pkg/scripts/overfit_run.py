"""Overfit 32 fully-labelled synthetic frames with the desk preset and report training-set metrics."""

import argparse
import logging
import time

from mttoken.config import desk_preset, set_value
from mttoken.data import SyntheticSpec, generate_synthetic, load_images, make_batch
from mttoken.loss import total_loss
from mttoken.metrics import metric_report
from mttoken.taskhead import activate, forward, init_model
from mttoken.train import predict_raw, train_loop


def overfit(steps=2000, seed=0, overrides=()):
    cfg = desk_preset()
    cfg = set_value(cfg, "steps", str(steps))
    cfg = set_value(cfg, "seed", str(seed))
    for item in overrides:
        k, v = item.split("=", 1)
        cfg = set_value(cfg, k.strip(), v.strip())
    examples = generate_synthetic(SyntheticSpec(n_videos=4, frames_per_video=8, image_size=cfg.encoder.image_size,
                                                seed=seed))
    images = load_images(examples, cfg.encoder.image_size)
    full = make_batch(examples, images)
    t0 = time.perf_counter()
    result = train_loop(cfg, examples, images)
    elapsed = time.perf_counter() - t0
    # full-set losses at initialisation and after training
    result.initial = total_loss(forward(full.images, init_model(cfg), cfg), full.targets, cfg.head).item()
    result.final = total_loss(forward(full.images, result.params, cfg), full.targets, cfg.head).item()
    raw = predict_raw(result.params, images, cfg)
    pred = activate(raw, cfg.head.t_au, cfg.head.t_expr)
    report = metric_report(raw.v_hat, [e.target.va for e in examples], pred.a_hat, [e.target.au for e in examples],
                           pred.e_hat, [e.target.expr for e in examples])
    return result, report, elapsed


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--set", action="append", default=[], help="config override key=value")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    result, report, elapsed = overfit(args.steps, args.seed, args.set)
    first, last = result.initial, result.final
    print(f"full-set loss {first:.5f} -> {last:.5f}  ratio {last / first:.4f}  ({elapsed:.1f}s)")
    print(report.to_text())
