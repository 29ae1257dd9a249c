"""Train a small next-frame model for a few hundred iterations.

This is a scaled-down version of the standard run (fewer clips, a 16 px
frame) so it finishes in about a minute. Content and motion phases
alternate 3:2; the report compares the model's next-frame error against
the copy-last-frame baseline and rolls out a short generated clip.
"""

import tempfile
import time
from pathlib import Path

from motionfuse import ClipSpec, ModelConfig, SeededRng, gen_dataset, load_dataset, rollout
from motionfuse.checkpoint import export_frames, save_model
from motionfuse.model import build_model
from motionfuse.training import (
    Trainer,
    TrainConfig,
    copy_baseline_l2,
    model_next_frame_l2,
)

with tempfile.TemporaryDirectory() as tmp:
    data_path = Path(tmp) / "small.smv"
    gen_dataset(
        4, clips_per_class=12, master_seed=7, spec=ClipSpec(frames=5, size=16), path=data_path
    )
    dataset = load_dataset(data_path)

    cfg = ModelConfig(ngf=8, latent_c=32, latent_m=16, scales=2, kernel_size=3, classes=4, size=16)
    bundle = build_model(cfg, SeededRng(7))
    trainer = Trainer(bundle, dataset, TrainConfig(iterations=400, batch_size=32, seed=7))

    t0 = time.time()
    trainer.train(log_every=100)
    print(f"\ntrained 400 iterations in {time.time() - t0:.0f}s")

    baseline = copy_baseline_l2(dataset, dataset.test_ids)
    achieved = model_next_frame_l2(bundle, dataset, dataset.test_ids)
    print(f"copy-last-frame baseline L2: {baseline:.5f}")
    print(f"model next-frame L2:         {achieved:.5f} ({achieved / baseline:.2f}x baseline)")

    ckpt = Path(tmp) / "demo.tsvc"
    save_model(ckpt, bundle)
    print(f"checkpoint written to {ckpt.name}")

    clip = rollout(bundle, action=0, rng=SeededRng(42), frames=8, heatup=2)
    files = export_frames(clip.frames, Path(tmp) / "rollout", prefix="gen")
    print(f"rolled out {clip.frames.shape[0]} frames; exported {len(files)} PGM files")
