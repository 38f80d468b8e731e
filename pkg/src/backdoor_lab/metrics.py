"""Model utility and backdoor error for both pipelines.

Autoencoders are scored with MSE; GANs with a Fréchet distance over features
from a small in-repo classifier (proxy-FID). Absolute proxy-FID values are
not comparable to Inception-based FID; only comparisons under the same
extractor are meaningful. All Fréchet/covariance math runs in float64.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .autoencoder import ae_loss, reconstruct
from .backdoor import apply_image_trigger, apply_noise_trigger, make_target
from .data import BatchPlan, Dataset, batches
from .errors import CalibrationError, ContractError, DataError, NumericsError, ShapeError
from .gan import generate, sample_noise
from .layers import Mlp
from .optim import Adam
from .tensor import Tensor, check_finite_scalar

FEATURE_DIM = 64
NEGATIVE_TRACE_FLOOR = -1e-6


@dataclass
class GaussianStats:
    """Gaussian fit of a feature cloud: mean, symmetrized unbiased covariance."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int


@dataclass
class MetricsReport:
    metric_kind: str
    clean_utility: float | None
    backdoored_utility: float | None
    backdoor_error: float | None
    sample_counts: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "metric_kind": self.metric_kind,
            "clean_utility": self.clean_utility,
            "backdoored_utility": self.backdoored_utility,
            "backdoor_error": self.backdoor_error,
            "sample_counts": dict(self.sample_counts),
            "seeds": dict(self.seeds),
            "warnings": list(self.warnings),
        }


# ---------------------------------------------------------------------------
# autoencoder metrics
# ---------------------------------------------------------------------------

def _per_image_mse(a, b):
    diff = a.astype(np.float64) - b.astype(np.float64)
    return (diff * diff).reshape(diff.shape[0], -1).mean(axis=1)


def _order_free_mean(values):
    # sorted before summing so the result cannot depend on dataset order
    return float(np.sort(values).sum() / len(values))


def reconstruction_mse(model, test):
    """Mean over the dataset of per-image mean squared reconstruction error."""
    if test.count == 0:
        raise DataError("empty test dataset")
    out = reconstruct(model, test.images)
    return _order_free_mean(_per_image_mse(out, test.images))


def backdoor_error_ae(model, test, trigger, target):
    """Trigger every test image, reconstruct, and score against the target images."""
    if test.count == 0:
        raise DataError("empty test dataset")
    triggered = apply_image_trigger(test.images, trigger)
    out = reconstruct(model, triggered)
    reference = make_target(test.images, target)
    return _order_free_mean(_per_image_mse(out, reference))


# ---------------------------------------------------------------------------
# feature extractor (proxy for the FID feature network)
# ---------------------------------------------------------------------------

class FeatureExtractor:
    """Small dense classifier; features are the penultimate activations."""

    def __init__(self, mlp, image_shape, n_classes, dataset_name, seed):
        self.mlp = mlp
        self.image_shape = tuple(image_shape)
        self.n_classes = n_classes
        self.d_f = mlp.sizes[-2]
        self.dataset_name = dataset_name
        self.seed = seed

    @property
    def params(self):
        return self.mlp.params

    def _flat(self, images):
        arr = np.asarray(images, dtype=np.float32)
        if arr.shape[1:] != self.image_shape:
            raise ShapeError(f"image shape {arr.shape[1:]} does not match {self.image_shape}")
        n = arr.shape[0]
        return Tensor._wrap(np.ascontiguousarray(arr).reshape(-1), (n, arr[0].size), False)

    def features(self, images):
        """(n, d_f) float64 penultimate activations."""
        hidden = self.mlp.forward(self._flat(images), upto=len(self.mlp.layers) - 1)
        return hidden.detach().view().astype(np.float64)

    def scores(self, images):
        return self.mlp.forward(self._flat(images)).detach().view()

    def classify(self, images):
        return np.argmax(self.scores(images), axis=1)


def _one_hot(labels, n_classes):
    out = np.zeros((len(labels), n_classes), dtype=np.float32)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def train_feature_extractor(train, seed, epochs=3, batch_size=128, learning_rate=1e-3,
                            holdout_fraction=0.1, accuracy_floor=0.9):
    """Train the classifier to the accuracy floor on a held-out slice.

    Raises CalibrationError when the floor is missed (more epochs usually fix it).
    """
    if train.labels is None:
        raise ContractError("train_feature_extractor needs a labeled dataset")
    n_classes = int(train.labels.max()) + 1
    if len(np.unique(train.labels)) < 2:
        raise ContractError("feature extractor training needs at least 2 classes")

    h, w, c = train.image_shape
    pixels = h * w * c
    ss = np.random.SeedSequence(seed)
    init_ss, split_ss = ss.spawn(2)
    mlp = Mlp([pixels, 256, FEATURE_DIM, n_classes], "relu", "sigmoid",
              np.random.default_rng(init_ss))
    fx = FeatureExtractor(mlp, train.image_shape, n_classes, train.name, seed)

    perm = np.random.default_rng(split_ss).permutation(train.count)
    n_hold = max(1, int(round(train.count * holdout_fraction)))
    hold_idx, fit_idx = perm[:n_hold], perm[n_hold:]
    if len(fit_idx) < batch_size:
        batch_size = max(1, len(fit_idx))

    opt = Adam(fx.params, lr=learning_rate)
    onehot = _one_hot(train.labels, n_classes)
    plan = BatchPlan(batch_size=batch_size, seed=seed)
    for epoch in range(epochs):
        for bi, bidx in enumerate(batches(len(fit_idx), plan, epoch)):
            idx = fit_idx[bidx]
            scores = mlp.forward(fx._flat(train.images[idx]))
            ref = Tensor._wrap(onehot[idx].reshape(-1), scores.shape, False)
            loss = ae_loss("bce", scores, ref)
            check_finite_scalar(loss.item(), f"extractor epoch {epoch} batch {bi}")
            T.backward(loss)
            opt.step()

    pred = fx.classify(train.images[hold_idx])
    accuracy = float(np.mean(pred == train.labels[hold_idx]))
    if accuracy < accuracy_floor:
        raise CalibrationError(
            f"feature extractor held-out accuracy {accuracy:.3f} is below "
            f"{accuracy_floor:.2f}; increase epochs")
    fx.holdout_accuracy = accuracy
    return fx


# ---------------------------------------------------------------------------
# Fréchet distance
# ---------------------------------------------------------------------------

def gaussian_stats(extractor, images):
    """Mean and unbiased symmetrized covariance of the images' features."""
    n = len(images)
    if n < 2:
        raise DataError(f"need at least 2 samples for covariance, got {n}")
    feats = extractor.features(images)
    mu = feats.mean(axis=0)
    centered = feats - mu
    sigma = centered.T @ centered / (n - 1)
    sigma = (sigma + sigma.T) / 2.0
    return GaussianStats(mu=mu, sigma=sigma, n=n)


def sqrt_psd(matrix):
    """Symmetric PSD square root via eigendecomposition, eigenvalues clamped at 0."""
    w, v = np.linalg.eigh(matrix)
    w = np.clip(w, 0.0, None)
    root = (v * np.sqrt(w)) @ v.T
    return (root + root.T) / 2.0


def frechet_distance(a, b):
    """|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), all in float64."""
    if a.mu.shape != b.mu.shape:
        raise ShapeError(f"feature dimensions differ: {a.mu.shape} vs {b.mu.shape}")
    root_a = sqrt_psd(a.sigma)
    inner = root_a @ b.sigma @ root_a
    inner = (inner + inner.T) / 2.0
    eigvals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    cross = float(np.sum(np.sqrt(eigvals)))
    diff = a.mu - b.mu
    value = float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * cross)
    if value < 0.0:
        if value < NEGATIVE_TRACE_FLOOR:
            raise NumericsError(f"Fréchet distance {value:.3e} is negative beyond "
                                f"the {NEGATIVE_TRACE_FLOOR:g} floor; square root is broken")
        value = 0.0
    return value


# ---------------------------------------------------------------------------
# GAN-level report
# ---------------------------------------------------------------------------

def _rank_warning(n_samples, d_f):
    if n_samples < d_f + 1:
        return (f"{n_samples} samples give a rank-deficient covariance for "
                f"feature dimension {d_f}")
    return None


def gan_utility_and_backdoor(gen_clean, gen_bd, extractor, original_test, target_test,
                             n_samples, trigger, seed):
    """proxy-FID utility for both generators plus the triggered-path backdoor error."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    warnings = []
    for label, count in (("generated", n_samples), ("real original", original_test.count),
                         ("real target", target_test.count)):
        w = _rank_warning(count, extractor.d_f)
        if w is not None:
            warnings.append(f"{label}: {w}")

    real_orig = gaussian_stats(extractor, original_test.images)
    real_target = gaussian_stats(extractor, target_test.images)

    z_clean_model = sample_noise(rng, n_samples, gen_clean.d_z)
    z_bd_model = sample_noise(rng, n_samples, gen_bd.d_z)
    z_triggered = apply_noise_trigger(sample_noise(rng, n_samples, gen_bd.d_z), trigger)

    clean_utility = frechet_distance(real_orig, gaussian_stats(extractor, generate(gen_clean, z_clean_model)))
    bd_utility = frechet_distance(real_orig, gaussian_stats(extractor, generate(gen_bd, z_bd_model)))
    bd_error = frechet_distance(real_target, gaussian_stats(extractor, generate(gen_bd, z_triggered)))

    return MetricsReport(
        metric_kind="proxy_fid",
        clean_utility=clean_utility,
        backdoored_utility=bd_utility,
        backdoor_error=bd_error,
        sample_counts={"generated": n_samples, "real_original": original_test.count,
                       "real_target": target_test.count},
        seeds={"noise": seed, "extractor": extractor.seed},
        warnings=warnings,
    )


def gan_fixed_image_backdoor_mse(gen_bd, target_image, n_samples, trigger, seed):
    """Mean MSE of triggered generations against the fixed target image."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    z = apply_noise_trigger(sample_noise(rng, n_samples, gen_bd.d_z), trigger)
    out = generate(gen_bd, z)
    reference = np.repeat(np.asarray(target_image, dtype=np.float32)[None], n_samples, axis=0)
    return _order_free_mean(_per_image_mse(out, reference))
