"""Clean and backdoored autoencoder training, plus reconstruction inference.

A backdoored run poisons each batch independently with probability p: the
whole batch gets the trigger and the loss is taken against the target images
instead of the originals. With p = 0 the loop is exactly clean training.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .backdoor import TargetSpec, TriggerSpec, apply_image_trigger, make_target
from .data import BatchPlan, Dataset, batches
from .errors import ContractError, DataError, ShapeError
from .layers import Mlp
from .optim import Adam
from .tensor import Tensor, check_finite_scalar

LOSS_KINDS = ("mse", "bce")


@dataclass
class AeTrainConfig:
    epochs: int
    batch_size: int
    poison_fraction: float = 0.0
    trigger: TriggerSpec | None = None
    target: TargetSpec | None = None
    seed: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    loss_kind: str = "mse"
    hidden_dim: int | None = None
    latent_dim: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.poison_fraction <= 1.0:
            raise ContractError(f"poison_fraction must be in [0,1], got {self.poison_fraction}")
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")
        if self.loss_kind not in LOSS_KINDS:
            raise ContractError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.poison_fraction > 0 and (self.trigger is None or self.target is None):
            raise ContractError("poisoned training needs both a trigger and a target")


class AutoencoderModel:
    """Dense encoder/decoder pair; decoder ends in sigmoid so outputs stay in (0,1)."""

    def __init__(self, encoder, decoder, latent_dim, image_shape, loss_kind):
        self.encoder = encoder
        self.decoder = decoder
        self.latent_dim = latent_dim
        self.image_shape = tuple(image_shape)
        self.loss_kind = loss_kind

    @property
    def params(self):
        return self.encoder.params + self.decoder.params

    def forward(self, x):
        return self.decoder.forward(self.encoder.forward(x))


def _scaled_sizes(input_dim, hidden_dim, latent_dim):
    # 784 -> 256 -> 64 reference stack, scaled with the pixel count
    if hidden_dim is None:
        hidden_dim = max(16, round(256 * input_dim / 784))
    if latent_dim is None:
        latent_dim = max(8, round(64 * input_dim / 784))
    return hidden_dim, latent_dim


def build_autoencoder(image_shape, rng, loss_kind="mse", hidden_dim=None, latent_dim=None):
    h, w, c = image_shape
    input_dim = h * w * c
    hidden_dim, latent_dim = _scaled_sizes(input_dim, hidden_dim, latent_dim)
    encoder = Mlp([input_dim, hidden_dim, latent_dim], "relu", "relu", rng)
    decoder = Mlp([latent_dim, hidden_dim, input_dim], "relu", "sigmoid", rng)
    return AutoencoderModel(encoder, decoder, latent_dim, image_shape, loss_kind)


def ae_loss(kind, prediction, reference):
    """mse: mean squared difference; bce: mean binary cross-entropy."""
    if prediction.shape != reference.shape:
        raise ShapeError(f"loss shapes differ: {prediction.shape} vs {reference.shape}")
    if kind == "mse":
        d = T.sub(prediction, reference)
        return T.mean(T.mul(d, d))
    if kind == "bce":
        pos = T.mul(reference, T.log(prediction))
        negt = T.mul(T.sub(1.0, reference), T.log(T.sub(1.0, prediction)))
        return T.neg(T.mean(T.add(pos, negt)))
    raise ContractError(f"loss_kind must be one of {LOSS_KINDS}, got {kind!r}")


def _flat_batch(images):
    n = images.shape[0]
    return Tensor._wrap(np.ascontiguousarray(images).reshape(-1), (n, images[0].size), False)


def train_autoencoder(cfg, train):
    """Train per config; returns (model, history).

    History holds per-epoch mean clean loss and mean poison loss (None when
    an epoch saw no poisoned batch).
    """
    if train.count == 0:
        raise DataError("training dataset is empty")
    if cfg.trigger is not None and cfg.trigger.kind == "image_patch":
        h, w, _ = train.image_shape
        if cfg.trigger.size > min(h, w):
            raise ShapeError(f"trigger patch {cfg.trigger.size} does not fit {h}x{w} images")

    ss = np.random.SeedSequence(cfg.seed)
    init_ss, poison_ss = ss.spawn(2)
    model = build_autoencoder(train.image_shape, np.random.default_rng(init_ss),
                              cfg.loss_kind, cfg.hidden_dim, cfg.latent_dim)
    opt = Adam(model.params, lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2)
    plan = BatchPlan(batch_size=cfg.batch_size, seed=cfg.seed)
    poison_rng = np.random.default_rng(poison_ss)
    p = cfg.poison_fraction

    history = {"clean_loss": [], "poison_loss": [], "poison_batches": []}
    for epoch in range(cfg.epochs):
        clean_sum = poison_sum = 0.0
        clean_n = poison_n = 0
        for bi, idx in enumerate(batches(train.count, plan, epoch)):
            x = train.images[idx]
            poisoned = p > 0 and poison_rng.random() < p
            if poisoned:
                inp = apply_image_trigger(x, cfg.trigger)
                ref = make_target(x, cfg.target)
            else:
                inp = ref = x
            out = model.forward(_flat_batch(inp))
            loss = ae_loss(cfg.loss_kind, out, _flat_batch(ref))
            value = check_finite_scalar(loss.item(), f"epoch {epoch} batch {bi}")
            T.backward(loss)
            opt.step()
            if poisoned:
                poison_sum += value
                poison_n += 1
            else:
                clean_sum += value
                clean_n += 1
        history["clean_loss"].append(clean_sum / clean_n if clean_n else None)
        history["poison_loss"].append(poison_sum / poison_n if poison_n else None)
        history["poison_batches"].append(poison_n)
    return model, history


def reconstruct(model, x):
    """Deterministic forward pass; accepts one image or a batch, returns the same form."""
    arr = np.asarray(x, dtype=np.float32)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if arr.shape[1:] != model.image_shape:
        raise ShapeError(f"input shape {arr.shape[1:]} does not match model {model.image_shape}")
    out = model.forward(_flat_batch(arr)).detach().view()
    out = out.reshape((arr.shape[0],) + model.image_shape)
    return out[0] if single else out
