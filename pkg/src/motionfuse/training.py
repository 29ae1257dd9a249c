"""Alternating two-phase training, rollout, and the clip classifier.

The trainer owns all mutable state. Iterations interleave content and
motion phases 3:2: the content phase fits frame reconstruction plus its KL
with the motion stream untouched, the motion phase fits next-frame
prediction, pyramid consistency and the motion KL with every content
parameter frozen. Each phase has its own Adam state. All randomness
(batching, reparameterization noise) comes from seeded substreams, so a
(seed, config, data) triple fully determines the trained parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fusion, losses, model, ops
from .synthdata import Dataset, VideoClip
from .tensor import SeededRng, split_seed


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam settings; `alpha` is the initial learning rate and, when
    `alpha_final` is set, the trainer anneals cosine-style toward it."""

    alpha: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    alpha_final: float = None

    def __post_init__(self):
        # alpha == 0 is allowed as a diagnostic no-op configuration
        if self.alpha < 0:
            raise ValueError("learning rate must be nonnegative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("decay rates must lie in [0, 1)")
        if self.alpha_final is not None and self.alpha_final < 0:
            raise ValueError("final learning rate must be nonnegative")


class Adam:
    """Adam with bias correction over a dict of ParamSets."""

    def __init__(self, param_sets: dict[str, ops.ParamSet], cfg: OptimizerConfig):
        self.param_sets = param_sets
        self.cfg = cfg
        self.t = 0
        self.m = {}
        self.v = {}
        for sname, ps in param_sets.items():
            for pname, value in ps.items():
                self.m[(sname, pname)] = np.zeros_like(value)
                self.v[(sname, pname)] = np.zeros_like(value)

    def step(self):
        self.t += 1
        c = self.cfg
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for sname, ps in self.param_sets.items():
            for pname, value in ps.items():
                g = ps.grad(pname)
                m = self.m[(sname, pname)]
                v = self.v[(sname, pname)]
                m *= c.beta1
                m += (1.0 - c.beta1) * g
                v *= c.beta2
                v += (1.0 - c.beta2) * (g * g)
                value -= (c.alpha / bc1) * m / (np.sqrt(v / bc2) + c.eps)


@dataclass(frozen=True)
class Schedule:
    """Teacher-forcing probability ramping linearly from 1 to 0."""

    total: int

    def __post_init__(self):
        if self.total < 1:
            raise ValueError("schedule needs at least one iteration")


def teacher_forcing_prob(sched: Schedule, iteration: int) -> float:
    if not 0 <= iteration <= sched.total:
        raise ValueError(f"iteration {iteration} outside [0, {sched.total}]")
    return 1.0 - iteration / sched.total


@dataclass(frozen=True)
class TrainConfig:
    """Standard desk-scale run. The optimizer and loss-weight defaults here
    are tuned for the 2000-iteration toy budget; the dataclass defaults of
    OptimizerConfig / LossWeights themselves keep the published full-scale
    values."""

    iterations: int = 2000
    batch_size: int = 64
    seed: int = 7
    content_steps: int = 3  # phase pattern: content x3 then motion x2
    motion_steps: int = 2
    scheduled_sampling: bool = False
    crop_jitter: int = 2  # random shift augmentation, pixels; 0 disables
    weights: losses.LossWeights = field(
        default_factory=lambda: losses.LossWeights(l2=0.5)
    )
    optimizer: OptimizerConfig = field(
        default_factory=lambda: OptimizerConfig(alpha=2e-3, beta1=0.9)
    )


class Trainer:
    def __init__(self, bundle: model.ModelBundle, dataset: Dataset, cfg: TrainConfig):
        self.bundle = bundle
        self.cfg = cfg
        self.data = dataset
        self.train_ids = np.asarray(dataset.train_ids, dtype=np.int64)
        if len(self.train_ids) == 0:
            raise ValueError("dataset has no training clips")
        self.batch_rng = SeededRng(split_seed(cfg.seed, 0))
        self.noise_rng = SeededRng(split_seed(cfg.seed, 1))
        self.sched_rng = SeededRng(split_seed(cfg.seed, 2))
        self.opt_content = Adam(bundle.content_sets(), cfg.optimizer)
        self.opt_motion = Adam(bundle.motion_sets(), cfg.optimizer)
        self.schedule = Schedule(total=max(cfg.iterations, 1))
        self.iteration = 0

    def phase(self, iteration: int) -> str:
        cycle = self.cfg.content_steps + self.cfg.motion_steps
        return "content" if iteration % cycle < self.cfg.content_steps else "motion"

    def _sample_batch(self):
        """(x_prev, x_t, x_next, labels); x_prev falls back to x_t at the
        first transition of a clip."""
        bsz = self.cfg.batch_size
        t_max = self.data.clips.shape[1] - 1
        ids = self.train_ids[self.batch_rng.integers(0, len(self.train_ids), (bsz,))]
        ts = self.batch_rng.integers(0, t_max, (bsz,))
        clips = self.data.clips[ids]
        x_t = clips[np.arange(bsz), ts]
        x_next = clips[np.arange(bsz), ts + 1]
        x_prev = np.where(
            (ts > 0)[:, None, None, None],
            clips[np.arange(bsz), np.maximum(ts - 1, 0)],
            x_t,
        )
        labels = self.data.labels[ids]
        if self.cfg.crop_jitter:
            x_prev, x_t, x_next = self._jitter_crop(x_prev, x_t, x_next)
        return x_prev, x_t, x_next, labels

    def _jitter_crop(self, *frames):
        """Shift each sample by a random offset, shared across its frames, so
        the model sees every scene at many positions (replicate borders)."""
        j = self.cfg.crop_jitter
        bsz, _, h, w = frames[0].shape
        ox = self.batch_rng.integers(0, 2 * j + 1, (bsz,))
        oy = self.batch_rng.integers(0, 2 * j + 1, (bsz,))
        outs = []
        for stack in frames:
            padded = np.pad(stack, ((0, 0), (0, 0), (j, j), (j, j)), mode="edge")
            out = np.empty_like(stack)
            for b in range(bsz):
                out[b] = padded[b, :, oy[b] : oy[b] + h, ox[b] : ox[b] + w]
            outs.append(out)
        return outs

    def _content_step(self, x_t, labels):
        cfg = self.bundle.config
        w = self.cfg.weights
        bsz = x_t.shape[0]
        onehot = model.one_hot(labels, cfg.classes, x_t.dtype)
        eta_c = self.noise_rng.normals((bsz, cfg.latent_c), dtype=x_t.dtype)
        # keep the noise stream aligned across phases
        self.noise_rng.normals((bsz, cfg.latent_m), dtype=x_t.dtype)

        q_c, enc_cache = model.encode(self.bundle.enc_c, cfg, x_t, onehot, cfg.latent_c)
        eps_c = q_c.sample(eta_c)
        pyramid, gen_cache = model.decode_content(self.bundle, eps_c, onehot)
        x_recon, head_cache = model.decode_head(self.bundle, pyramid[-1])

        recon = losses.l2_loss(x_recon, x_t)
        kl = losses.kl_to_standard_normal(q_c)
        total = losses.total_content_loss(w, recon, kl)
        self._guard_finite(total, {"recon": recon, "kl": kl})

        self.bundle.zero_grads()
        d_trunk = model.decode_head_backward(
            self.bundle, head_cache, w.l1 * losses.l2_loss_grad(x_recon, x_t)
        )
        taps = [None] * cfg.scales
        taps[-1] = d_trunk
        d_eps_c = model.decode_content_backward(self.bundle, gen_cache, taps)
        dmean, dlogvar = model._reparam_backward(q_c, eta_c, d_eps_c)
        kg_mean, kg_logvar = losses.kl_to_standard_normal_grad(q_c)
        model.encode_backward(
            self.bundle.enc_c, enc_cache, dmean + w.l2 * kg_mean, dlogvar + w.l2 * kg_logvar
        )
        self.opt_content.step()
        return {"phase": "content", "recon": recon, "kl": kl, "total": total}

    def _motion_step(self, x_t, x_next, labels):
        cfg = self.bundle.config
        w = self.cfg.weights
        bsz = x_t.shape[0]
        onehot = model.one_hot(labels, cfg.classes, x_t.dtype)
        eta_c = self.noise_rng.normals((bsz, cfg.latent_c), dtype=x_t.dtype)
        eta_m = self.noise_rng.normals((bsz, cfg.latent_m), dtype=x_t.dtype)
        dx = x_next - x_t

        res = model.forward_next_frame(
            self.bundle, x_t, dx, labels, eta_c=eta_c, eta_m=eta_m
        )
        # consistency target: the frozen content pathway viewing the next frame
        q_next, _ = model.encode(self.bundle.enc_c, cfg, x_next, onehot, cfg.latent_c)
        target_pyramid, _ = model.decode_content(self.bundle, q_next.mean, onehot)

        consistency = losses.content_consistency_loss(res.refined, target_pyramid)
        video_recon = losses.l2_loss(res.x_next, x_next)
        kl = losses.kl_to_standard_normal(res.q_m)
        lam5 = w.lambda5_at(self.iteration, self.cfg.iterations)
        total = losses.total_motion_loss(
            w, consistency, video_recon, kl, self.iteration, self.cfg.iterations
        )
        self._guard_finite(
            total, {"consistency": consistency, "video_recon": video_recon, "kl": kl}
        )

        self.bundle.zero_grads()
        d_refined = [
            w.l3 * g
            for g in losses.content_consistency_loss_grad(res.refined, target_pyramid)
        ]
        kg_mean, kg_logvar = losses.kl_to_standard_normal_grad(res.q_m)
        model.backward_next_frame(
            self.bundle,
            res,
            d_x_next=w.l4 * losses.l2_loss_grad(res.x_next, x_next),
            d_refined=d_refined,
            d_q_m=(lam5 * kg_mean, lam5 * kg_logvar),
            content=False,
            motion=True,
        )
        self.opt_motion.step()
        return {
            "phase": "motion",
            "consistency": consistency,
            "video_recon": video_recon,
            "kl": kl,
            "lambda5": lam5,
            "total": total,
        }

    def _guard_finite(self, total, terms):
        if not np.isfinite(total):
            dump = ", ".join(f"{k}={v:.6g}" for k, v in terms.items())
            raise RuntimeError(
                f"non-finite loss at iteration {self.iteration}: total={total} ({dump})"
            )

    def train_step(self) -> dict:
        x_prev, x_t, x_next, labels = self._sample_batch()
        phase = self.phase(self.iteration)
        if phase == "motion" and self.cfg.scheduled_sampling:
            p = teacher_forcing_prob(self.schedule, min(self.iteration, self.schedule.total))
            if self.sched_rng.uniforms() >= p:
                x_t = self._self_feed(x_prev, x_t, labels)
        stats = (
            self._content_step(x_t, labels)
            if phase == "content"
            else self._motion_step(x_t, x_next, labels)
        )
        self.iteration += 1
        stats["iteration"] = self.iteration
        return stats

    def _self_feed(self, x_prev, x_t, labels):
        """Replace the input frame by the model's own one-step prediction
        (stop-gradient: used as data only)."""
        cfg = self.bundle.config
        bsz = x_t.shape[0]
        res = model.forward_next_frame(
            self.bundle,
            x_prev,
            x_t - x_prev,
            labels,
            eta_c=np.zeros((bsz, cfg.latent_c), dtype=x_t.dtype),
            eta_m=np.zeros((bsz, cfg.latent_m), dtype=x_t.dtype),
        )
        return res.x_next

    def train(self, iterations=None, log_every=0):
        history = []
        for _ in range(iterations if iterations is not None else self.cfg.iterations):
            stats = self.train_step()
            history.append(stats)
            if log_every and stats["iteration"] % log_every == 0:
                keys = [k for k in ("recon", "video_recon", "kl") if k in stats]
                msg = " ".join(f"{k}={stats[k]:.5f}" for k in keys)
                print(f"[{stats['iteration']:5d}] {stats['phase']:7s} {msg}")
        return history


# ---------------------------------------------------------------------------
# evaluation helpers


def copy_baseline_l2(dataset: Dataset, ids) -> float:
    """Mean next-frame L2 of the copy-last-frame predictor (the baseline oracle)."""
    vals = []
    for i in ids:
        clip = dataset.clips[i]
        for t in range(clip.shape[0] - 1):
            vals.append(losses.l2_loss(clip[t], clip[t + 1]))
    return float(np.mean(vals))


def model_next_frame_l2(bundle: model.ModelBundle, dataset: Dataset, ids) -> float:
    """Mean next-frame L2 of the model with zero latent noise."""
    cfg = bundle.config
    vals = []
    for i in ids:
        clip = dataset.clips[i]
        t_max = clip.shape[0] - 1
        x_t = clip[:-1]
        x_next = clip[1:]
        labels = np.full(t_max, dataset.labels[i])
        res = model.forward_next_frame(
            bundle,
            x_t,
            x_next - x_t,
            labels,
            eta_c=np.zeros((t_max, cfg.latent_c), dtype=x_t.dtype),
            eta_m=np.zeros((t_max, cfg.latent_m), dtype=x_t.dtype),
        )
        for t in range(t_max):
            vals.append(losses.l2_loss(res.x_next[t], x_next[t]))
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# rollout


def rollout(
    bundle: model.ModelBundle,
    action: int,
    rng: SeededRng,
    frames: int = 10,
    heatup: int = 2,
    mask_zero: bool = False,
) -> VideoClip:
    """Generate a clip from prior samples.

    The first frame decodes a prior content draw; afterwards the pyramid is
    carried forward and refined once per step with kernels and masks decoded
    from (re-encoded content embedding, convLSTM motion embedding). The first
    `heatup` steps are discarded.
    """
    cfg = bundle.config
    dtype = bundle.gen_c.value("head.out.w").dtype
    onehot = model.one_hot([action], cfg.classes, dtype)

    eps_c = rng.normals((1, cfg.latent_c), dtype=dtype)
    pyramid, _ = model.decode_content(bundle, eps_c, onehot)
    x, _ = model.decode_head(bundle, pyramid[-1])

    h = np.zeros((1, cfg.lstm_hidden, 4, 4), dtype=dtype)
    c = np.zeros_like(h)
    seq = [x[0]]
    for _ in range(heatup + frames - 1):
        eps_m = rng.normals((1, cfg.latent_m), dtype=dtype)
        bsz = 1
        xm = eps_m.reshape(bsz, cfg.motion_map_channels, 4, 4)
        h, c, _ = ops.convlstm_step_forward(
            xm, h, c, bundle.lstm.value("wx"), bundle.lstm.value("wh"), bundle.lstm.value("b")
        )
        q, _ = model.encode(bundle.enc_c, cfg, x, onehot, cfg.latent_c)
        kernels, masks, _ = model.motion_fields(bundle, q.mean, h, onehot)
        if mask_zero:
            masks = [np.zeros_like(m) for m in masks]
        pyramid, _ = fusion.fuse_pyramid_forward(pyramid, kernels, masks)
        x, _ = model.decode_head(bundle, pyramid[-1])
        seq.append(x[0])
    out = np.stack(seq[heatup : heatup + frames]).astype(np.float32)
    return VideoClip(
        frames=out,
        action=int(action),
        action_name=f"class-{action}",
        shape_id=-1,
        background_id=-1,
        seed=int(rng.seed),
    )


# ---------------------------------------------------------------------------
# classifier training


@dataclass(frozen=True)
class ClassifierConfig:
    iterations: int = 600
    batch_size: int = 16
    seed: int = 13
    alpha: float = 1e-3


def train_classifier(dataset: Dataset, cfg: model.ModelConfig, ccfg: ClassifierConfig = ClassifierConfig()):
    """Fit the small clip classifier on the train split with cross-entropy."""
    params = model.build_classifier(cfg, SeededRng(split_seed(ccfg.seed, 0)))
    opt = Adam({"cls": params}, OptimizerConfig(alpha=ccfg.alpha, beta1=0.9, beta2=0.999))
    batch_rng = SeededRng(split_seed(ccfg.seed, 1))
    ids = np.asarray(dataset.train_ids, dtype=np.int64)
    for _ in range(ccfg.iterations):
        pick = ids[batch_rng.integers(0, len(ids), (ccfg.batch_size,))]
        clips = dataset.clips[pick]
        labels = dataset.labels[pick]
        logits, cache = model.classifier_forward(params, cfg, clips)
        loss = losses.aux_class_loss(logits, labels)
        if not np.isfinite(loss):
            raise RuntimeError(f"non-finite classifier loss: {loss}")
        params.zero_grads()
        model.classifier_backward(params, cache, losses.aux_class_loss_grad(logits, labels))
        opt.step()
    return params


def classifier_accuracy(params: ops.ParamSet, cfg: model.ModelConfig, dataset: Dataset, ids) -> float:
    clips = dataset.clips[np.asarray(ids, dtype=np.int64)]
    labels = dataset.labels[np.asarray(ids, dtype=np.int64)]
    probs = model.classifier_probs(params, cfg, clips)
    return float(np.mean(np.argmax(probs, axis=1) == labels))
