"""Experiment orchestration: config validation, checkpoints, PNG grids, reports.

A run writes into its output directory: ``checkpoint.bdl``, ``report.json``
(deterministic for a given config+seed), ``timing.json`` (wall clock, kept
out of the deterministic report on purpose), and one or two sample grids.
All file writes go through a temp file and an atomic rename.
"""

import json
import os
import struct
import time
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .autoencoder import (AeTrainConfig, AutoencoderModel, build_autoencoder,
                          reconstruct, train_autoencoder)
from .backdoor import TriggerSpec, TargetSpec, apply_image_trigger, apply_noise_trigger
from .data import Dataset, filter_by_labels, load_idx, synth_blobs
from .errors import ConfigError, DataError, FormatError
from .gan import Generator, GanTrainConfig, generate, sample_noise, train_gan
from .kernels import KERNEL_BACKEND
from .layers import Mlp
from .metrics import (FeatureExtractor, backdoor_error_ae, frechet_distance,
                      gan_fixed_image_backdoor_mse, gaussian_stats,
                      reconstruction_mse, train_feature_extractor)

DATA_ENV_VAR = "BACKDOOR_LAB_DATA"
CHECKPOINT_MAGIC = b"BDLB"
CHECKPOINT_VERSION = 1
EXPERIMENT_KINDS = ("ae_clean", "ae_backdoor", "gan_clean", "gan_backdoor")
REPORT_FORMAT = "backdoor-lab-report/1"


# ---------------------------------------------------------------------------
# experiment config
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    out_dir: str
    dataset: dict
    train: dict
    metrics: dict
    trigger: TriggerSpec | None = None
    target: dict | None = None
    baseline_report: str | None = None
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        kind = d.get("kind")
        if kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"kind must be one of {EXPERIMENT_KINDS}, got {kind!r}")
        if "seed" not in d:
            raise ConfigError("config must set a seed")
        seed = int(d["seed"])
        dataset = d.get("dataset")
        if not isinstance(dataset, dict) or dataset.get("kind") not in ("idx", "synth_blobs"):
            raise ConfigError("dataset must be an object with kind 'idx' or 'synth_blobs'")

        trigger = None
        if d.get("trigger") is not None:
            trigger = TriggerSpec.from_dict(d["trigger"])
        target = d.get("target")

        if kind == "ae_backdoor":
            if trigger is None or trigger.kind != "image_patch":
                raise ConfigError("ae_backdoor requires an image_patch trigger")
            if not isinstance(target, dict) or target.get("kind") not in ("fixed_image", "inverse"):
                raise ConfigError("ae_backdoor requires a fixed_image or inverse target")
        elif kind == "gan_backdoor":
            if trigger is None or trigger.kind != "noise_component":
                raise ConfigError("gan_backdoor requires a noise_component trigger")
            if not isinstance(target, dict) or target.get("kind") not in ("distribution", "fixed_image"):
                raise ConfigError("gan_backdoor requires a distribution or fixed_image target")
        else:
            if trigger is not None or target is not None:
                raise ConfigError(f"{kind} must not define a trigger or target")

        return cls(kind=kind, seed=seed,
                   out_dir=str(d.get("out_dir", "runs/" + kind)),
                   dataset=dict(dataset),
                   train=dict(d.get("train", {})),
                   metrics=dict(d.get("metrics", {})),
                   trigger=trigger, target=target,
                   baseline_report=d.get("baseline_report"),
                   raw=d)


def load_config(path, overrides=None):
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    if overrides:
        d.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(d)


# ---------------------------------------------------------------------------
# dataset resolution
# ---------------------------------------------------------------------------

def _data_path(p):
    if os.path.isabs(p) or os.path.exists(p):
        return p
    root = os.environ.get(DATA_ENV_VAR)
    if root:
        candidate = os.path.join(root, p)
        if os.path.exists(candidate):
            return candidate
    return p


def resolve_dataset(spec, default_seed):
    """Return (train, test) Datasets for a config dataset object."""
    kind = spec.get("kind")
    if kind == "idx":
        if "train_images" not in spec:
            raise ConfigError("idx dataset needs train_images")
        train = load_idx(_data_path(spec["train_images"]),
                         _data_path(spec["train_labels"]) if spec.get("train_labels") else None,
                         name=spec.get("name", "idx"), split="train")
        if spec.get("test_images"):
            test = load_idx(_data_path(spec["test_images"]),
                            _data_path(spec["test_labels"]) if spec.get("test_labels") else None,
                            name=spec.get("name", "idx"), split="test")
        else:
            test = Dataset(images=train.images, labels=train.labels,
                           name=train.name, split="test")
    elif kind == "synth_blobs":
        seed = int(spec.get("seed", default_seed))
        height = int(spec.get("height", 16))
        width = int(spec.get("width", 16))
        train = synth_blobs(int(spec.get("train_count", 1024)), height, width, seed)
        test = synth_blobs(int(spec.get("test_count", 256)), height, width, seed + 1)
        test.split = "test"
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}")

    if spec.get("filter_labels") is not None:
        train = filter_by_labels(train, spec["filter_labels"])
        test = filter_by_labels(test, spec["filter_labels"])
    take = spec.get("take")
    if take is not None:
        take = int(take)
        if take < 1 or take > train.count:
            raise ConfigError(f"take must be in [1, {train.count}], got {take}")
        train = Dataset(images=train.images[:take].copy(),
                        labels=None if train.labels is None else train.labels[:take].copy(),
                        name=train.name, split=train.split)
    return train, test


def _resolve_target(cfg, train, test):
    """TargetSpec for training plus the matching held-out target set (GAN only)."""
    spec = cfg.target
    kind = spec.get("kind")
    if kind == "inverse":
        return TargetSpec.inverse(), None
    if kind == "fixed_image":
        if "image" in spec:
            img = np.asarray(spec["image"], dtype=np.float32)
            if img.ndim == 2:
                img = img[..., None]
        elif "from_dataset_index" in spec:
            idx = int(spec["from_dataset_index"])
            if not 0 <= idx < train.count:
                raise ConfigError(f"from_dataset_index {idx} out of range for {train.count} images")
            img = train.images[idx].copy()
        else:
            raise ConfigError("fixed_image target needs 'image' or 'from_dataset_index'")
        if img.shape != train.image_shape:
            raise ConfigError(f"fixed image shape {img.shape} does not match data {train.image_shape}")
        return TargetSpec.fixed_image(img), None
    if kind == "distribution":
        if spec.get("dataset") is not None:
            t_train, t_test = resolve_dataset(spec["dataset"], cfg.seed)
        elif spec.get("filter_labels") is not None:
            t_train = filter_by_labels(train, spec["filter_labels"])
            t_test = filter_by_labels(test, spec["filter_labels"])
        else:
            raise ConfigError("distribution target needs 'filter_labels' or 'dataset'")
        return TargetSpec.distribution(t_train), t_test
    raise ConfigError(f"unknown target kind {kind!r}")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _atomic_write(path, data):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _mlp_arch(mlp):
    return {"sizes": list(mlp.sizes),
            "hidden_activation": mlp.hidden_activation,
            "output_activation": mlp.output_activation}


def _mlp_from_arch(a):
    return Mlp(a["sizes"], a["hidden_activation"], a["output_activation"],
               np.random.default_rng(0))


def _model_arch(model):
    if isinstance(model, AutoencoderModel):
        return {"model_kind": "autoencoder",
                "encoder": _mlp_arch(model.encoder), "decoder": _mlp_arch(model.decoder),
                "latent_dim": model.latent_dim, "image_shape": list(model.image_shape),
                "loss_kind": model.loss_kind}
    if isinstance(model, Generator):
        return {"model_kind": "generator", "mlp": _mlp_arch(model.mlp),
                "d_z": model.d_z, "image_shape": list(model.image_shape)}
    if isinstance(model, FeatureExtractor):
        return {"model_kind": "feature_extractor", "mlp": _mlp_arch(model.mlp),
                "image_shape": list(model.image_shape), "n_classes": model.n_classes,
                "dataset_name": model.dataset_name, "seed": model.seed}
    raise ConfigError(f"cannot checkpoint a {type(model).__name__}")


def _model_param_tensors(model):
    if isinstance(model, AutoencoderModel):
        return model.encoder.params + model.decoder.params
    return model.mlp.params


def _model_from_arch(arch):
    kind = arch.get("model_kind")
    if kind == "autoencoder":
        model = AutoencoderModel(_mlp_from_arch(arch["encoder"]), _mlp_from_arch(arch["decoder"]),
                                 arch["latent_dim"], tuple(arch["image_shape"]), arch["loss_kind"])
    elif kind == "generator":
        model = Generator(_mlp_from_arch(arch["mlp"]), arch["d_z"], tuple(arch["image_shape"]))
    elif kind == "feature_extractor":
        model = FeatureExtractor(_mlp_from_arch(arch["mlp"]), tuple(arch["image_shape"]),
                                 arch["n_classes"], arch.get("dataset_name", ""), arch.get("seed", 0))
    else:
        raise FormatError(f"unknown checkpoint model kind {kind!r}")
    return model


def save_checkpoint(path, model, config_echo=None, metrics_snapshot=None):
    """Binary checkpoint: magic, version, then length-prefixed named sections."""
    arch = _model_arch(model)
    params = _model_param_tensors(model)
    payload = b"".join(np.ascontiguousarray(p.data, dtype="<f4").tobytes() for p in params)
    sections = [
        ("arch", json.dumps(arch, sort_keys=True).encode("utf-8")),
        ("params", payload),
        ("config", json.dumps(config_echo or {}, sort_keys=True).encode("utf-8")),
        ("metrics", json.dumps(metrics_snapshot or {}, sort_keys=True).encode("utf-8")),
    ]
    blob = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION),
            struct.pack("<I", len(sections))]
    for name, data in sections:
        nb = name.encode("utf-8")
        blob.append(struct.pack("<H", len(nb)))
        blob.append(nb)
        blob.append(struct.pack("<Q", len(data)))
        blob.append(data)
    _atomic_write(path, b"".join(blob))


def load_checkpoint(path):
    """Returns (model, config_echo, metrics_snapshot); round trip is bit-exact."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a backdoor-lab checkpoint")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: checkpoint version {version} unsupported, "
                          f"this build reads version {CHECKPOINT_VERSION}")
    n_sections = struct.unpack("<I", raw[8:12])[0]
    offset = 12
    sections = {}
    for _ in range(n_sections):
        if offset + 2 > len(raw):
            raise FormatError(f"{path}: truncated section header")
        (nlen,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset:offset + nlen].decode("utf-8")
        offset += nlen
        if offset + 8 > len(raw):
            raise FormatError(f"{path}: truncated section length for {name!r}")
        (dlen,) = struct.unpack_from("<Q", raw, offset)
        offset += 8
        if offset + dlen > len(raw):
            raise FormatError(f"{path}: section {name!r} payload truncated "
                              f"(need {dlen} bytes, have {len(raw) - offset})")
        sections[name] = raw[offset:offset + dlen]
        offset += dlen
    for required in ("arch", "params"):
        if required not in sections:
            raise FormatError(f"{path}: missing checkpoint section {required!r}")

    arch = json.loads(sections["arch"].decode("utf-8"))
    model = _model_from_arch(arch)
    tensors = _model_param_tensors(model)
    expected = 4 * sum(t.data.size for t in tensors)
    if len(sections["params"]) != expected:
        raise FormatError(f"{path}: parameter payload length {len(sections['params'])} "
                          f"does not match architecture ({expected} bytes)")
    flat = np.frombuffer(sections["params"], dtype="<f4")
    pos = 0
    for t in tensors:
        t.data[:] = flat[pos:pos + t.data.size]
        pos += t.data.size
    config_echo = json.loads(sections.get("config", b"{}").decode("utf-8"))
    metrics_snapshot = json.loads(sections.get("metrics", b"{}").decode("utf-8"))
    return model, config_echo, metrics_snapshot


# ---------------------------------------------------------------------------
# sample grids
# ---------------------------------------------------------------------------

GRID_SEPARATOR = 2
GRID_FILL = 128


def emit_grid(images, rows, cols, path):
    """Tile images row-major into an 8-bit PNG with a 2-pixel separator."""
    if len(images) != rows * cols:
        raise DataError(f"grid of {rows}x{cols} needs {rows * cols} images, got {len(images)}")
    arrs = [np.asarray(im, dtype=np.float32) for im in images]
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise DataError("grid images must share one shape")
    if len(shape) != 3:
        raise DataError(f"grid images must be (H, W, C), got {shape}")
    h, w, c = shape
    if c not in (1, 3):
        raise DataError(f"grid supports 1 or 3 channels, got {c}")
    canvas = np.full((rows * h + (rows - 1) * GRID_SEPARATOR,
                      cols * w + (cols - 1) * GRID_SEPARATOR, c),
                     GRID_FILL, dtype=np.uint8)
    for k, a in enumerate(arrs):
        r, q = divmod(k, cols)
        bytes_img = np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
        y = r * (h + GRID_SEPARATOR)
        x = q * (w + GRID_SEPARATOR)
        canvas[y:y + h, x:x + w, :] = bytes_img
    img = Image.fromarray(canvas[..., 0], mode="L") if c == 1 else Image.fromarray(canvas, mode="RGB")
    tmp = f"{path}.tmp"
    img.save(tmp, format="PNG")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

def _train_params(cfg, keys):
    known = dict(cfg.train)
    unknown = set(known) - set(keys)
    if unknown:
        raise ConfigError(f"unknown train settings: {sorted(unknown)}")
    return known


def _make_ae_config(cfg, target):
    keys = ("epochs", "batch_size", "learning_rate", "beta1", "beta2", "loss_kind",
            "poison_fraction", "hidden_dim", "latent_dim")
    t = _train_params(cfg, keys)
    poison = target is not None
    return AeTrainConfig(
        epochs=int(t.get("epochs", 10)),
        batch_size=int(t.get("batch_size", 128)),
        poison_fraction=float(t.get("poison_fraction", 0.5)) if poison else 0.0,
        trigger=cfg.trigger if poison else None,
        target=target,
        seed=cfg.seed,
        learning_rate=float(t.get("learning_rate", 1e-3)),
        beta1=float(t.get("beta1", 0.9)),
        beta2=float(t.get("beta2", 0.999)),
        loss_kind=t.get("loss_kind", "mse"),
        hidden_dim=t.get("hidden_dim"),
        latent_dim=t.get("latent_dim"),
    )


def _make_gan_config(cfg, target_spec):
    keys = ("epochs", "batch_size", "learning_rate", "beta1", "beta2", "d_z",
            "disc_steps", "gen_hidden", "disc_hidden")
    t = _train_params(cfg, keys)
    kwargs = dict(
        epochs=int(t.get("epochs", 30)),
        batch_size=int(t.get("batch_size", 128)),
        d_z=int(t.get("d_z", 64)),
        trigger=cfg.trigger,
        target=target_spec,
        seed=cfg.seed,
        learning_rate=float(t.get("learning_rate", 2e-4)),
        beta1=float(t.get("beta1", 0.5)),
        beta2=float(t.get("beta2", 0.999)),
        disc_steps=int(t.get("disc_steps", 1)),
    )
    if t.get("gen_hidden") is not None:
        kwargs["gen_hidden"] = tuple(int(v) for v in t["gen_hidden"])
    if t.get("disc_hidden") is not None:
        kwargs["disc_hidden"] = tuple(int(v) for v in t["disc_hidden"])
    return GanTrainConfig(**kwargs)


def _extractor_for(cfg, train):
    if train.labels is None:
        return None
    return train_feature_extractor(
        train,
        seed=int(cfg.metrics.get("extractor_seed", cfg.seed + 10_000)),
        epochs=int(cfg.metrics.get("extractor_epochs", 3)),
        accuracy_floor=float(cfg.metrics.get("extractor_accuracy_floor", 0.9)),
    )


def _grid_cols(cfg):
    return int(cfg.metrics.get("grid_cols", 8))


def _json_bytes(obj):
    return (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode("utf-8")


def _deltas_vs_baseline(cfg, values):
    if not cfg.baseline_report:
        return None
    with open(cfg.baseline_report, "r", encoding="utf-8") as fh:
        base = json.load(fh)
    deltas = {}
    for key, v in values.items():
        bv = base.get("values", {}).get(key)
        if isinstance(bv, (int, float)) and isinstance(v, (int, float)):
            deltas[key] = v - bv
    return deltas


def run_experiment(cfg):
    """Train per config kind; write checkpoint, report, timing, grids.

    Returns {"report": dict, "paths": {...}}.
    """
    started = time.monotonic()
    os.makedirs(cfg.out_dir, exist_ok=True)
    train_ds, test_ds = resolve_dataset(cfg.dataset, cfg.seed)

    values = {}
    sample_counts = {"train": train_ds.count, "test": test_ds.count}
    warnings = []
    grids = {}

    if cfg.kind in ("ae_clean", "ae_backdoor"):
        poison = cfg.kind == "ae_backdoor"
        target = None
        if poison:
            target, _ = _resolve_target(cfg, train_ds, test_ds)
        ae_cfg = _make_ae_config(cfg, target)
        model, history = train_autoencoder(ae_cfg, train_ds)

        values["reconstruction_mse"] = reconstruction_mse(model, test_ds)
        if poison:
            values["backdoor_error_mse"] = backdoor_error_ae(model, test_ds,
                                                             cfg.trigger, target)
        metric_kind = "mse"

        cols = min(_grid_cols(cfg), test_ds.count)
        originals = test_ds.images[:cols]
        decoded = reconstruct(model, originals)
        if poison:
            triggered = apply_image_trigger(originals, cfg.trigger)
            bd_out = reconstruct(model, triggered)
            rows = [originals, decoded, triggered, bd_out]
            grid_path = os.path.join(cfg.out_dir, "grid_backdoor.png")
        else:
            rows = [originals, decoded]
            grid_path = os.path.join(cfg.out_dir, "grid_clean.png")
        emit_grid([im for row in rows for im in row], len(rows), cols, grid_path)
        grids["samples"] = grid_path

    elif cfg.kind in ("gan_clean", "gan_backdoor"):
        backdoored = cfg.kind == "gan_backdoor"
        target_spec = None
        target_test = None
        if backdoored:
            target_spec, target_test = _resolve_target(cfg, train_ds, test_ds)
        gan_cfg = _make_gan_config(cfg, target_spec)
        gen, _pair, history = train_gan(gan_cfg, train_ds)
        model = gen
        metric_kind = "proxy_fid"
        n_samples = int(cfg.metrics.get("n_samples", 2048))
        sample_counts["generated"] = n_samples
        eval_seed = cfg.seed + 20_000
        rng = np.random.default_rng(np.random.SeedSequence(eval_seed))

        extractor = _extractor_for(cfg, train_ds)
        if extractor is None:
            warnings.append("dataset has no labels; proxy-FID metrics skipped")
        else:
            if n_samples < extractor.d_f + 1:
                warnings.append(f"{n_samples} samples give a rank-deficient covariance "
                                f"for feature dimension {extractor.d_f}")
            real_stats = gaussian_stats(extractor, test_ds.images)
            clean_gen = generate(gen, sample_noise(rng, n_samples, gen.d_z))
            values["utility_fid"] = frechet_distance(real_stats,
                                                     gaussian_stats(extractor, clean_gen))
            if backdoored:
                z_trig = apply_noise_trigger(sample_noise(rng, n_samples, gen.d_z),
                                             cfg.trigger)
                trig_gen = generate(gen, z_trig)
                if target_spec.kind == "distribution":
                    values["backdoor_error_fid"] = frechet_distance(
                        gaussian_stats(extractor, target_test.images),
                        gaussian_stats(extractor, trig_gen))
                    target_labels = sorted(set(int(v) for v in np.unique(target_spec.dataset.labels)))
                    values["triggered_target_class_fraction"] = float(
                        np.isin(extractor.classify(trig_gen), target_labels).mean())
                    values["clean_target_class_fraction"] = float(
                        np.isin(extractor.classify(clean_gen), target_labels).mean())
                    sample_counts["real_target"] = target_test.count
        if backdoored and target_spec.kind == "fixed_image":
            values["backdoor_error_mse"] = gan_fixed_image_backdoor_mse(
                gen, target_spec.image, n_samples, cfg.trigger, eval_seed + 1)

        cols = _grid_cols(cfg)
        grid_rows = int(cfg.metrics.get("grid_rows", 4))
        z = sample_noise(rng, grid_rows * cols, gen.d_z)
        clean_grid_path = os.path.join(cfg.out_dir, "grid_clean.png")
        emit_grid(list(generate(gen, z)), grid_rows, cols, clean_grid_path)
        grids["clean"] = clean_grid_path
        if backdoored:
            z_t = apply_noise_trigger(sample_noise(rng, grid_rows * cols, gen.d_z), cfg.trigger)
            trig_grid_path = os.path.join(cfg.out_dir, "grid_triggered.png")
            emit_grid(list(generate(gen, z_t)), grid_rows, cols, trig_grid_path)
            grids["triggered"] = trig_grid_path
    else:
        raise ConfigError(f"unknown experiment kind {cfg.kind!r}")

    warnings.extend(f"epoch {w['epoch']}: {w['kind']} (variance {w['probe_variance']:g})"
                    for w in history.get("warnings", []))

    report = {
        "format": REPORT_FORMAT,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "kernel_backend": KERNEL_BACKEND,
        "metric_kind": metric_kind,
        "values": values,
        "sample_counts": sample_counts,
        "warnings": warnings,
        "history": {k: v for k, v in history.items() if k != "warnings"},
        "config_echo": cfg.raw,
        "deltas_vs_baseline": _deltas_vs_baseline(cfg, values),
    }

    ckpt_path = os.path.join(cfg.out_dir, "checkpoint.bdl")
    save_checkpoint(ckpt_path, model, config_echo=cfg.raw, metrics_snapshot=values)
    report_path = os.path.join(cfg.out_dir, "report.json")
    _atomic_write(report_path, _json_bytes(report))
    timing_path = os.path.join(cfg.out_dir, "timing.json")
    _atomic_write(timing_path, _json_bytes(
        {"wall_clock_seconds": time.monotonic() - started}))

    return {"report": report,
            "paths": {"checkpoint": ckpt_path, "report": report_path,
                      "timing": timing_path, **grids}}


# ---------------------------------------------------------------------------
# eval / grids for saved checkpoints
# ---------------------------------------------------------------------------

def evaluate_checkpoint(checkpoint_path, cfg):
    """Recompute the metrics section for a saved model under a config."""
    model, _echo, _snap = load_checkpoint(checkpoint_path)
    train_ds, test_ds = resolve_dataset(cfg.dataset, cfg.seed)
    values = {}
    warnings = []
    if isinstance(model, AutoencoderModel):
        values["reconstruction_mse"] = reconstruction_mse(model, test_ds)
        if cfg.kind == "ae_backdoor":
            target, _ = _resolve_target(cfg, train_ds, test_ds)
            values["backdoor_error_mse"] = backdoor_error_ae(model, test_ds, cfg.trigger, target)
        metric_kind = "mse"
    elif isinstance(model, Generator):
        metric_kind = "proxy_fid"
        n_samples = int(cfg.metrics.get("n_samples", 2048))
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed + 20_000))
        extractor = _extractor_for(cfg, train_ds)
        if extractor is None:
            warnings.append("dataset has no labels; proxy-FID metrics skipped")
        else:
            real_stats = gaussian_stats(extractor, test_ds.images)
            clean_gen = generate(model, sample_noise(rng, n_samples, model.d_z))
            values["utility_fid"] = frechet_distance(real_stats,
                                                     gaussian_stats(extractor, clean_gen))
            if cfg.kind == "gan_backdoor":
                target_spec, target_test = _resolve_target(cfg, train_ds, test_ds)
                z_trig = apply_noise_trigger(sample_noise(rng, n_samples, model.d_z), cfg.trigger)
                trig_gen = generate(model, z_trig)
                if target_spec.kind == "distribution":
                    values["backdoor_error_fid"] = frechet_distance(
                        gaussian_stats(extractor, target_test.images),
                        gaussian_stats(extractor, trig_gen))
                else:
                    values["backdoor_error_mse"] = gan_fixed_image_backdoor_mse(
                        model, target_spec.image, n_samples, cfg.trigger, cfg.seed + 20_001)
    else:
        raise ConfigError("eval supports autoencoder and generator checkpoints")
    return {"format": REPORT_FORMAT, "kind": cfg.kind, "seed": cfg.seed,
            "kernel_backend": KERNEL_BACKEND, "metric_kind": metric_kind,
            "values": values, "warnings": warnings, "config_echo": cfg.raw,
            "evaluated_checkpoint": os.path.basename(checkpoint_path)}


def grid_from_checkpoint(checkpoint_path, mode, out_path, cfg=None, cols=8, seed=0):
    """Render a sample grid from a checkpoint; AE modes need the dataset config."""
    if mode not in ("clean", "triggered"):
        raise ConfigError(f"grid mode must be clean or triggered, got {mode!r}")
    model, echo, _snap = load_checkpoint(checkpoint_path)
    if cfg is None and echo:
        cfg = ExperimentConfig.from_dict(echo)
    if isinstance(model, Generator):
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        z = sample_noise(rng, 4 * cols, model.d_z)
        if mode == "triggered":
            if cfg is None or cfg.trigger is None:
                raise ConfigError("triggered grid needs a config with a noise trigger")
            z = apply_noise_trigger(z, cfg.trigger)
        emit_grid(list(generate(model, z)), 4, cols, out_path)
        return out_path
    if isinstance(model, AutoencoderModel):
        if cfg is None:
            raise ConfigError("autoencoder grids need the experiment config")
        _train_ds, test_ds = resolve_dataset(cfg.dataset, cfg.seed)
        cols = min(cols, test_ds.count)
        originals = test_ds.images[:cols]
        if mode == "clean":
            rows = [originals, reconstruct(model, originals)]
        else:
            if cfg.trigger is None:
                raise ConfigError("triggered grid needs a config with an image trigger")
            triggered = apply_image_trigger(originals, cfg.trigger)
            rows = [originals, triggered, reconstruct(model, triggered)]
        emit_grid([im for row in rows for im in row], len(rows), cols, out_path)
        return out_path
    raise ConfigError("grid supports autoencoder and generator checkpoints")
