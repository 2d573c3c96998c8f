"""Desk-scale trainable pixel classifier with an explicit context feature.

The model is linear on a 2C feature vector per pixel: the pixel's own
spectrum concatenated with the mean spectrum of its 5x5 neighborhood
(center excluded, edges clamped). That single context feature is enough to
make the classifier context-reliant, so isolating a class at test time can
hurt it, and transplantation-style augmentation during training can help.

Training follows the usual recipe: equally weighted soft-Dice + cross-entropy
loss, Adam updates, an exponential learning-rate schedule, small scene
batches. Everything is plain float64 numpy, deterministic under the seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .augment import AugmentationConfig, apply_augmentation
from .errors import ChannelMismatch, DataError, DivergenceDetected, EmptyInput
from .labels import IGNORE_LABEL, LabelSet
from .metrics import MetricReport, NsdThresholds, aggregate, score_pair
from .scene import Batch, LabeledScene, SemanticMask
from .storage import DatasetManifest
from .world import World

DICE_SMOOTH = 1e-6
NEIGHBORHOOD = 5  # 5x5 window, center pixel excluded


@dataclass(frozen=True)
class ToyModel:
    """Linear map from (center spectrum, neighborhood mean) to class logits."""

    weights: np.ndarray  # (n_classes, 2 * channels)
    bias: np.ndarray  # (n_classes,)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],) or w.shape[1] % 2:
            raise DataError("weights must be (n_classes, 2C) with matching bias")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise DataError("model parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def channels(self) -> int:
        return self.weights.shape[1] // 2


def init_toy_model(n_classes: int, channels: int, seed: int = 0,
                   scale: float = 0.01) -> ToyModel:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(9,)))
    return ToyModel(
        weights=scale * rng.normal(size=(n_classes, 2 * channels)),
        bias=np.zeros(n_classes),
    )


def extract_features(cube_data: np.ndarray) -> np.ndarray:
    """Per-pixel feature vector: own spectrum then 5x5 ring mean (H, W, 2C)."""
    data = np.asarray(cube_data, dtype=np.float64)
    window_sum = ndimage.uniform_filter(
        data, size=(NEIGHBORHOOD, NEIGHBORHOOD, 1), mode="nearest"
    ) * (NEIGHBORHOOD * NEIGHBORHOOD)
    ring_mean = (window_sum - data) / (NEIGHBORHOOD * NEIGHBORHOOD - 1)
    return np.concatenate([data, ring_mean], axis=2)


def predict_logits(model: ToyModel, cube_data: np.ndarray) -> np.ndarray:
    feats = extract_features(cube_data)
    return feats @ model.weights.T + model.bias


def predict(model: ToyModel, scene: LabeledScene) -> SemanticMask:
    """Per-pixel argmax segmentation; ties resolve to the lowest class id."""
    if scene.cube.channels != model.channels:
        raise ChannelMismatch(
            f"model expects {model.channels} channels, scene has {scene.cube.channels}"
        )
    logits = predict_logits(model, scene.cube.data)
    labels = np.argmax(logits, axis=2).astype(np.uint8)
    return SemanticMask(labels=labels, label_set=scene.label_set)


# --- loss ---------------------------------------------------------------------


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(model: ToyModel, features: np.ndarray, labels: np.ndarray,
                  dice_weight: float = 0.5, ce_weight: float = 0.5):
    """Combined soft-Dice + cross-entropy loss and its parameter gradient.

    Soft Dice is computed per class over all pixels with smoothing in
    numerator and denominator, macro-averaged over the classes present in the
    reference labels. Returns (loss, grad_weights, grad_bias).
    """
    n = features.shape[0]
    if n == 0:
        raise EmptyInput("no pixels to score")
    k = model.n_classes
    z = features @ model.weights.T + model.bias  # (N, K)
    p = _softmax(z)
    onehot = np.zeros_like(p)
    onehot[np.arange(n), labels] = 1.0

    ce = -np.mean(np.log(np.clip(p[np.arange(n), labels], 1e-300, None)))
    dz = ce_weight * (p - onehot) / n

    present = np.unique(labels)
    dice_terms = []
    dloss_dp = np.zeros_like(p)
    for cid in present:
        pc = p[:, cid]
        yc = onehot[:, cid]
        num = 2.0 * float(pc @ yc) + DICE_SMOOTH
        den = float(pc.sum()) + float(yc.sum()) + DICE_SMOOTH
        dice_terms.append(num / den)
        # d(num/den)/dp = (2 y den - num) / den^2; dice loss contributes -mean
        dloss_dp[:, cid] -= (2.0 * yc * den - num) / (den * den) / len(present)
    dice_score = float(np.mean(dice_terms))
    loss = ce_weight * ce + dice_weight * (1.0 - dice_score)

    g = dice_weight * dloss_dp
    dz += p * (g - (g * p).sum(axis=1, keepdims=True))
    grad_w = dz.T @ features
    grad_b = dz.sum(axis=0)
    return loss, grad_w, grad_b


def soft_dice_score(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Macro soft Dice over classes present in `labels` (diagnostic helper)."""
    n = probabilities.shape[0]
    onehot = np.zeros_like(probabilities)
    onehot[np.arange(n), labels] = 1.0
    scores = []
    for cid in np.unique(labels):
        pc, yc = probabilities[:, cid], onehot[:, cid]
        scores.append((2.0 * float(pc @ yc) + DICE_SMOOTH)
                      / (float(pc.sum()) + float(yc.sum()) + DICE_SMOOTH))
    return float(np.mean(scores))


# --- training -----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 5
    learning_rate: float = 0.05
    lr_decay: float = 0.97  # exponential schedule, applied per epoch
    dice_weight: float = 0.5
    ce_weight: float = 0.5
    augmentation: Optional[AugmentationConfig] = None
    seed: int = 0

    def __post_init__(self):
        if abs(self.dice_weight + self.ce_weight - 1.0) > 1e-12:
            raise DataError("dice_weight and ce_weight must sum to 1")
        if not 0.0 < self.lr_decay <= 1.0:
            raise DataError("lr_decay must lie in (0, 1]")
        if self.epochs < 1 or self.batch_size < 1:
            raise DataError("epochs and batch_size must be positive")


@dataclass
class AdamState:
    m_w: np.ndarray
    v_w: np.ndarray
    m_b: np.ndarray
    v_b: np.ndarray
    t: int = 0


def _adam_step(model: ToyModel, grad_w, grad_b, state: AdamState, lr: float,
               beta1=0.9, beta2=0.999, eps=1e-8) -> ToyModel:
    state.t += 1
    state.m_w = beta1 * state.m_w + (1 - beta1) * grad_w
    state.v_w = beta2 * state.v_w + (1 - beta2) * grad_w * grad_w
    state.m_b = beta1 * state.m_b + (1 - beta1) * grad_b
    state.v_b = beta2 * state.v_b + (1 - beta2) * grad_b * grad_b
    bc1 = 1 - beta1 ** state.t
    bc2 = 1 - beta2 ** state.t
    new_w = model.weights - lr * (state.m_w / bc1) / (np.sqrt(state.v_w / bc2) + eps)
    new_b = model.bias - lr * (state.m_b / bc1) / (np.sqrt(state.v_b / bc2) + eps)
    return ToyModel(weights=new_w, bias=new_b)


def _batch_pixels(scenes: Sequence[LabeledScene]):
    feats, labels = [], []
    for scene in scenes:
        f = extract_features(scene.cube.data).reshape(-1, 2 * scene.cube.channels)
        l = scene.mask.labels.reshape(-1)
        keep = l != IGNORE_LABEL
        feats.append(f[keep])
        labels.append(l[keep].astype(np.int64))
    return np.concatenate(feats), np.concatenate(labels)


def train(model: ToyModel, manifest: DatasetManifest, cfg: TrainConfig,
          label_set: LabelSet) -> tuple[ToyModel, list[float]]:
    """Train on the manifest's scenes; returns the model and per-epoch losses.

    Deterministic: scene order, batch composition, and augmentation streams
    are all keyed by the configured seeds. Raises DivergenceDetected on NaN.
    """
    scenes = manifest.load_scenes(label_set)
    if not scenes:
        raise EmptyInput("training manifest is empty")
    state = AdamState(
        m_w=np.zeros_like(model.weights), v_w=np.zeros_like(model.weights),
        m_b=np.zeros_like(model.bias), v_b=np.zeros_like(model.bias),
    )
    losses = []
    for epoch in range(cfg.epochs):
        order_rng = np.random.default_rng(
            np.random.SeedSequence(cfg.seed, spawn_key=(1, epoch)))
        order = order_rng.permutation(len(scenes))
        chunks = [order[i:i + cfg.batch_size]
                  for i in range(0, len(order), cfg.batch_size)]
        # mixing transforms need >= 2 scenes; fold a trailing singleton in
        if len(chunks) > 1 and len(chunks[-1]) == 1:
            chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
            chunks.pop()
        lr = cfg.learning_rate * cfg.lr_decay ** epoch
        epoch_loss = 0.0
        for batch_index, chunk in enumerate(chunks):
            batch_scenes = [scenes[i] for i in chunk]
            if cfg.augmentation is not None:
                batch, _ = apply_augmentation(
                    Batch(tuple(batch_scenes)), cfg.augmentation,
                    epoch=epoch, batch_index=batch_index)
                batch_scenes = list(batch)
            feats, labels = _batch_pixels(batch_scenes)
            loss, grad_w, grad_b = loss_and_grad(
                model, feats, labels,
                dice_weight=cfg.dice_weight, ce_weight=cfg.ce_weight)
            if not np.isfinite(loss):
                raise DivergenceDetected(f"loss became {loss} in epoch {epoch}")
            model = _adam_step(model, grad_w, grad_b, state, lr)
            epoch_loss += float(loss) * len(chunk)
        losses.append(epoch_loss / len(scenes))
    return model, losses


# --- evaluation and the probability sweep --------------------------------------


def evaluate_model(model: ToyModel, manifest: DatasetManifest, label_set: LabelSet,
                   class_ids: Optional[Sequence[int]] = None,
                   metric: str = "DSC",
                   thresholds: Optional[NsdThresholds] = None) -> MetricReport:
    """Segment every scene and aggregate class-level scores hierarchically."""
    scores = []
    for scene in manifest.load_scenes(label_set):
        pred = predict(model, scene)
        scores.extend(score_pair(pred, scene.mask, scene.image_id, scene.subject_id,
                                 metrics=(metric,), thresholds=thresholds,
                                 class_ids=class_ids))
    return aggregate(scores)


@dataclass(frozen=True)
class SweepRow:
    probability_p: float  # 0.0 = baseline without the transform
    in_dist_score: float
    ood_score: float
    train_loss: float


def sweep_p(world: World, p_grid: Sequence[float],
            train_cfg: Optional[TrainConfig] = None,
            augmentation: Optional[AugmentationConfig] = None) -> list[SweepRow]:
    """Train one model per transplantation probability (plus the p=0 baseline)
    and score each on the in-distribution and isolation test sets.

    Scores are grand-mean DSC over tissue classes. Everything runs under the
    configured seeds, so repeated sweeps produce identical tables.
    """
    train_cfg = train_cfg or TrainConfig()
    augmentation = augmentation or AugmentationConfig(
        kind="organ_transplantation", probability_p=1.0,
        seed=train_cfg.seed, geometric=None, n_transplant_classes=3)
    tissue = world.label_set.tissue_ids()
    rows = []
    for p in [0.0, *p_grid]:
        if p == 0.0:
            cfg = replace(train_cfg, augmentation=None)
        else:
            cfg = replace(train_cfg,
                          augmentation=replace(augmentation, probability_p=p))
        model = init_toy_model(len(world.label_set), world.config.channels,
                               seed=train_cfg.seed)
        model, losses = train(model, world.train, cfg, world.label_set)
        in_dist = evaluate_model(model, world.test_in_dist, world.label_set,
                                 class_ids=tissue)
        ood = evaluate_model(model, world.test_isolation, world.label_set,
                             class_ids=tissue)
        rows.append(SweepRow(
            probability_p=p,
            in_dist_score=float(in_dist.grand_mean),
            ood_score=float(ood.grand_mean),
            train_loss=losses[-1],
        ))
    return rows
