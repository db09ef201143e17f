"""gen-data -> train -> predict -> smooth -> eval through the CLI, in a scratch directory.

Scores the raw and the smoothed prediction logs on a held-out synthetic split.
Synthetic labels are drawn independently per frame, so smoothing is not
expected to help here; the run exercises the interfaces, not the gain.
"""

import argparse
import json
import tempfile
from pathlib import Path

from mttoken.cli import main as cli


def run(workdir: Path, steps: int, window: int, seed: int) -> dict:
    spec = "n_videos = {n}\nframes_per_video = 24\nmissing_va = 0.2\nmissing_au = 0.2\nmissing_expr = 0.2\n" \
           "frame_drop = 0.1\nseed = {seed}\n"
    (workdir / "train.spec").write_text(spec.format(n=6, seed=seed))
    (workdir / "val.spec").write_text(spec.format(n=2, seed=seed + 1000))
    (workdir / "run.cfg").write_text(f"preset = desk\nsteps = {steps}\nseed = {seed}\n")

    def call(*argv):
        code = cli(list(argv))
        if code:
            raise SystemExit(f"mttoken {argv[0]} exited with {code}")

    w = str(workdir)
    call("gen-data", "--spec", f"{w}/train.spec", "--out", f"{w}/train.jsonl")
    call("gen-data", "--spec", f"{w}/val.spec", "--out", f"{w}/val.jsonl")
    call("train", "--config", f"{w}/run.cfg", "--data", f"{w}/train.jsonl", "--out", f"{w}/model.ckpt")
    call("predict", "--ckpt", f"{w}/model.ckpt", "--data", f"{w}/val.jsonl", "--out", f"{w}/raw.csv")
    call("smooth", "--in", f"{w}/raw.csv", "--out", f"{w}/smooth.csv", "--window", str(window))
    out = {}
    for name in ("raw", "smooth"):
        call("eval", "--pred", f"{w}/{name}.csv", "--truth", f"{w}/val.jsonl", "--report", f"{w}/{name}.json")
        out[name] = json.loads((workdir / f"{name}.json").read_text())
    return out


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--window", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--keep", help="directory to keep the artifacts in")
    args = ap.parse_args()
    if args.keep:
        Path(args.keep).mkdir(parents=True, exist_ok=True)
        reports = run(Path(args.keep), args.steps, args.window, args.seed)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            reports = run(Path(tmp), args.steps, args.window, args.seed)
    print()
    for name, rep in reports.items():
        print(f"{name:7s} AU F1 {rep['au_f1']:.3f}  expr F1 {rep['expr_f1']:.3f}  "
              f"VA CCC {rep['va_ccc']:.3f}  score {rep['abaw4_score']:.3f}")
