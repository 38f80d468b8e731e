"""Clean GAN training and the dual-discriminator backdoor scheme.

A backdoored run keeps two discriminators: the original-distribution one
scores real originals against generations from clean noise, the target one
scores target-distribution reals against generations from triggered noise.
The generator objective averages both score streams with equal weight; in
clean mode the second stream simply does not exist.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .backdoor import TargetSpec, TriggerSpec, apply_noise_trigger
from .data import BatchPlan, Dataset, batches
from .errors import ContractError, DataError, ShapeError
from .layers import Mlp
from .optim import Adam
from .tensor import Tensor, check_finite_scalar

VARIANCE_WATCHDOG_FLOOR = 1e-6


@dataclass
class GanTrainConfig:
    epochs: int
    batch_size: int
    d_z: int = 64
    trigger: TriggerSpec | None = None
    target: TargetSpec | None = None
    seed: int = 0
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    disc_steps: int = 1
    gen_hidden: tuple = (256, 512)
    disc_hidden: tuple = (256,)

    def __post_init__(self):
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")
        if self.d_z < 1:
            raise ContractError(f"d_z must be >= 1, got {self.d_z}")
        if self.target is not None:
            if self.trigger is None or self.trigger.kind != "noise_component":
                raise ContractError("backdoored GAN training needs a noise_component trigger")
            if self.target.kind == "distribution" and self.target.dataset.count == 0:
                raise ContractError("target distribution dataset is empty")


class Generator:
    """Dense noise-to-image map with sigmoid output."""

    def __init__(self, mlp, d_z, image_shape):
        self.mlp = mlp
        self.d_z = d_z
        self.image_shape = tuple(image_shape)

    @property
    def params(self):
        return self.mlp.params


class DiscriminatorPair:
    """Original-distribution discriminator plus, for backdoored runs, the target one."""

    def __init__(self, d, d_bd=None):
        self.d = d
        self.d_bd = d_bd


def sample_noise(rng, batch, d_z):
    if batch < 1 or d_z < 1:
        raise ContractError(f"batch and d_z must be positive, got {batch}, {d_z}")
    return rng.standard_normal((batch, d_z), dtype=np.float32)


def _score_mean_log(scores):
    if scores.size == 0:
        raise ContractError("empty score batch")
    return T.mean(T.log(scores))


def _score_mean_log1m(scores):
    if scores.size == 0:
        raise ContractError("empty score batch")
    return T.mean(T.log(T.sub(1.0, scores)))


def discriminator_loss(real_scores, fake_scores):
    """Negated discriminator objective: -E[log D(real)] - E[log(1 - D(fake))]."""
    return T.neg(T.add(_score_mean_log(real_scores), _score_mean_log1m(fake_scores)))


def generator_loss_clean(fake_scores):
    """Negated generator objective: -E[log D(fake)]."""
    return T.neg(_score_mean_log(fake_scores))


def generator_loss_backdoored(fake_scores, fake_scores_bd):
    """Negated dual objective with equal halves for the clean and triggered streams."""
    half_clean = T.mul(0.5, _score_mean_log(fake_scores))
    half_bd = T.mul(0.5, _score_mean_log(fake_scores_bd))
    return T.neg(T.add(half_clean, half_bd))


def _noise_tensor(z):
    return Tensor._wrap(np.ascontiguousarray(z).reshape(-1), z.shape, False)


def _image_batch_tensor(images):
    n = images.shape[0]
    return Tensor._wrap(np.ascontiguousarray(images).reshape(-1), (n, images[0].size), False)


def generate(generator, z):
    """Deterministic forward pass; (d_z,) or (N, d_z) noise to images in (0,1)."""
    arr = np.asarray(z, dtype=np.float32)
    single = arr.ndim == 1
    if single:
        arr = arr[None]
    if arr.shape[1] != generator.d_z:
        raise ShapeError(f"noise dimension {arr.shape[1]} does not match d_z {generator.d_z}")
    out = generator.mlp.forward(_noise_tensor(arr)).detach().view()
    out = out.reshape((arr.shape[0],) + generator.image_shape)
    return out[0] if single else out


def _target_real_batch(target, batch_size, rng):
    if target.kind == "distribution":
        idx = rng.integers(0, target.dataset.count, size=batch_size)
        return target.dataset.images[idx]
    if target.kind == "fixed_image":
        return np.repeat(target.image[None], batch_size, axis=0)
    raise ContractError(f"GAN targets must be distribution or fixed_image, got {target.kind!r}")


def train_gan(cfg, original):
    """Train per config; clean mode when cfg.target is None.

    Returns (Generator, DiscriminatorPair, history). History records the
    per-epoch mean of each loss and any mode-collapse warnings.
    """
    if original.count == 0:
        raise DataError("training dataset is empty")
    backdoored = cfg.target is not None
    h, w, c = original.image_shape
    pixels = h * w * c

    ss = np.random.SeedSequence(cfg.seed)
    init_ss, noise_ss, target_ss, probe_ss = ss.spawn(4)
    rng_init = np.random.default_rng(init_ss)
    gen = Generator(Mlp([cfg.d_z, *cfg.gen_hidden, pixels], "leaky_relu", "sigmoid", rng_init),
                    cfg.d_z, original.image_shape)
    disc = Mlp([pixels, *cfg.disc_hidden, 1], "leaky_relu", "sigmoid", rng_init)
    disc_bd = (Mlp([pixels, *cfg.disc_hidden, 1], "leaky_relu", "sigmoid", rng_init)
               if backdoored else None)
    pair = DiscriminatorPair(disc, disc_bd)

    opt_g = Adam(gen.params, lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2)
    opt_d = Adam(disc.params, lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2)
    opt_d_bd = (Adam(disc_bd.params, lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2)
                if backdoored else None)

    noise_rng = np.random.default_rng(noise_ss)
    target_rng = np.random.default_rng(target_ss)
    probe_rng = np.random.default_rng(probe_ss)
    plan = BatchPlan(batch_size=cfg.batch_size, seed=cfg.seed, drop_last=True)

    history = {"d_loss": [], "d_bd_loss": [], "g_loss": [], "warnings": []}
    for epoch in range(cfg.epochs):
        sums = {"d": 0.0, "d_bd": 0.0, "g": 0.0}
        iters = 0
        for bi, idx in enumerate(batches(original.count, plan, epoch)):
            where = f"epoch {epoch} iteration {bi}"
            real = _image_batch_tensor(original.images[idx])

            for _ in range(cfg.disc_steps):
                z = sample_noise(noise_rng, cfg.batch_size, cfg.d_z)
                fake = gen.mlp.forward(_noise_tensor(z)).detach()
                opt_d.zero_grad()
                d_loss = discriminator_loss(disc.forward(real), disc.forward(fake))
                sums["d"] += check_finite_scalar(d_loss.item(), where + " (D)")
                T.backward(d_loss)
                opt_d.step()

                if backdoored:
                    target_real = _image_batch_tensor(
                        _target_real_batch(cfg.target, cfg.batch_size, target_rng))
                    z_bd = apply_noise_trigger(
                        sample_noise(noise_rng, cfg.batch_size, cfg.d_z), cfg.trigger)
                    fake_bd = gen.mlp.forward(_noise_tensor(z_bd)).detach()
                    opt_d_bd.zero_grad()
                    d_bd_loss = discriminator_loss(disc_bd.forward(target_real),
                                                   disc_bd.forward(fake_bd))
                    sums["d_bd"] += check_finite_scalar(d_bd_loss.item(), where + " (D_bd)")
                    T.backward(d_bd_loss)
                    opt_d_bd.step()

            z = sample_noise(noise_rng, cfg.batch_size, cfg.d_z)
            scores = disc.forward(gen.mlp.forward(_noise_tensor(z)))
            if backdoored:
                z_bd = apply_noise_trigger(
                    sample_noise(noise_rng, cfg.batch_size, cfg.d_z), cfg.trigger)
                scores_bd = disc_bd.forward(gen.mlp.forward(_noise_tensor(z_bd)))
                g_loss = generator_loss_backdoored(scores, scores_bd)
            else:
                g_loss = generator_loss_clean(scores)
            sums["g"] += check_finite_scalar(g_loss.item(), where + " (G)")
            opt_g.zero_grad()
            T.backward(g_loss)
            opt_g.step()
            iters += 1

        history["d_loss"].append(sums["d"] / (iters * cfg.disc_steps))
        history["d_bd_loss"].append(sums["d_bd"] / (iters * cfg.disc_steps) if backdoored else None)
        history["g_loss"].append(sums["g"] / iters)

        probe = generate(gen, sample_noise(probe_rng, 64, cfg.d_z))
        variance = float(probe.reshape(64, -1).var(axis=0, dtype=np.float64).mean())
        if variance < VARIANCE_WATCHDOG_FLOOR:
            history["warnings"].append(
                {"epoch": epoch, "kind": "mode_collapse", "probe_variance": variance})
    return gen, pair, history
