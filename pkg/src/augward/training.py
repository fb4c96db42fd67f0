"""Augmentation-aware losses, Adam, the supervised training loop and evaluation."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .augment import MAX_RATIO, AugKind, make_rng, sample
from .autodiff import Tensor
from .distance import DiffKind, SolverConfig, diff_metric
from .graph import Dataset, Split
from .model import AugWardModel, GraphBatch

log = logging.getLogger(__name__)

GRIDS = {
    "p": (0.05, 0.1, 0.15, 0.2),
    "alpha": (0.05, 0.5, 0.95),
    "lambda_aware": (5, 10, 25, 50, 75, 100),
    "lambda_cr": (0, 0.1, 1, 10, 100),
    "batch_size": (32, 128),
    "dropout": (0, 0.5),
}


class NumericError(RuntimeError):
    """A non-finite loss or distance target was produced."""


@dataclass(frozen=True)
class TrainConfig:
    augment: str = "NodeDrop"
    p: float = 0.1
    alpha: float = 0.5
    lambda_aware: float = 10.0
    lambda_cr: float = 1.0
    diff_metric: str = "Fgwd"
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 32
    dropout: float = 0.0
    seed: int = 0
    num_layers: int = 4
    hidden: int = 64
    dataset: str = "synthetic"
    test_fraction: float = 0.2
    fgw_restarts: int = 3
    structure: str = "shortest_path"
    mask_fill: str = "mean"
    record_timing: bool = True

    def validate(self) -> "TrainConfig":
        AugKind.parse(self.augment)
        DiffKind.parse(self.diff_metric)
        if not 0.0 <= self.p <= MAX_RATIO:
            raise ValueError(f"p={self.p} outside [0, {MAX_RATIO}]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha={self.alpha} outside [0, 1]")
        if self.lambda_aware < 0 or self.lambda_cr < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.epochs < 1 or self.batch_size < 1 or self.num_layers < 1 or self.hidden < 1:
            raise ValueError("epochs, batch_size, num_layers and hidden must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout={self.dropout} outside [0, 1)")
        if self.mask_fill not in ("mean", "zero"):
            raise ValueError(f"mask_fill must be 'mean' or 'zero', got {self.mask_fill!r}")
        for key, grid in GRIDS.items():
            value = getattr(self, key)
            if not any(math.isclose(value, g) for g in grid):
                warnings.warn(f"{key}={value} is outside the usual grid {grid}", stacklevel=2)
        return self

    def solver(self) -> SolverConfig:
        return SolverConfig(restarts=self.fgw_restarts, seed=self.seed, structure=self.structure)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class EpochMetrics:
    epoch: int
    total: float
    base: float
    aware: float
    cr: float
    train_acc: float
    test_acc: float
    t_augment: float = 0.0
    t_fgwd: float = 0.0
    t_fb: float = 0.0
    t_other: float = 0.0
    batch_residual: float = field(default=0.0, repr=False)  # worst relative, over batches

    @property
    def wall(self) -> float:
        return self.t_augment + self.t_fgwd + self.t_fb + self.t_other


CSV_HEADER = "epoch,total,base,aware,cr,train_acc,test_acc,t_augment,t_fgwd,t_fb,t_other"


def metrics_csv(rows: Sequence[EpochMetrics]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        vals = [r.total, r.base, r.aware, r.cr, r.train_acc, r.test_acc,
                r.t_augment, r.t_fgwd, r.t_fb, r.t_other]
        lines.append(",".join([str(r.epoch)] + [f"{v:.9g}" for v in vals]))
    return "\n".join(lines) + "\n"


def write_metrics_csv(rows: Sequence[EpochMetrics], path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(metrics_csv(rows))


# losses -------------------------------------------------------------------------

def loss_aware(head, z_g: Tensor, z_aug: Tensor, target) -> Tensor:
    """Squared error between the head's predicted difference and a constant target.

    Batched inputs give the mean over rows.
    """
    t = np.asarray(target, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise NumericError("non-finite difference target")
    if z_g.data.ndim == 1:
        z_g, z_aug = ad.reshape(z_g, (1, -1)), ad.reshape(z_aug, (1, -1))
    pred = head(z_g, z_aug)
    return ad.mse_scalar(pred, t.reshape(pred.shape))


def _rows(p: Tensor) -> Tensor:
    return ad.reshape(p, (1, -1)) if p.data.ndim == 1 else p


def loss_cr(p_g: Tensor, p_aug: Tensor) -> Tensor:
    """Cross-entropy ``H(p_g, p_aug)``, averaged over rows; both sides get gradients."""
    return loss_cr_logp(_rows(p_g), ad.log(_rows(p_aug)))


def loss_cr_logp(p_g: Tensor, logp_aug: Tensor) -> Tensor:
    per_row = ad.row_sum(ad.elementwise_mul(p_g, logp_aug))
    return ad.scale(ad.mean(per_row), -1.0)


def _one_hot(y, num_classes: int) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if y.min() < 1 or y.max() > num_classes:
        raise ValueError(f"labels must lie in [1, {num_classes}], got {y.tolist()}")
    return np.eye(num_classes)[y - 1]


def cross_entropy(p: Tensor, y) -> Tensor:
    return cross_entropy_logp(ad.log(_rows(p)), y)


def cross_entropy_logp(logp: Tensor, y) -> Tensor:
    onehot = _one_hot(y, logp.shape[1])
    picked = ad.row_sum(ad.elementwise_mul(logp, Tensor(onehot)))
    return ad.scale(ad.mean(picked), -1.0)


def loss_base_supervised(p_g: Tensor, p_aug: Tensor, y) -> Tensor:
    return ad.add(cross_entropy(p_g, y), cross_entropy(p_aug, y))


def loss_augward(aware, cr, cfg: TrainConfig):
    """``lambda_aware * aware + lambda_cr * cr``; a zero weight drops its term entirely."""
    terms = []
    if cfg.lambda_aware != 0:
        terms.append(ad.scale(ad._wrap(aware), cfg.lambda_aware))
    if cfg.lambda_cr != 0:
        terms.append(ad.scale(ad._wrap(cr), cfg.lambda_cr))
    if not terms:
        return Tensor(0.0)
    out = terms[0]
    for t in terms[1:]:
        out = ad.add(out, t)
    return out


def total_loss(base: Tensor, augward: Tensor) -> Tensor:
    return ad.add(base, augward)


# optimizer ----------------------------------------------------------------------

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


def adam_step(params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]], state: AdamState,
              lr: float, t: int) -> None:
    """One bias-corrected Adam update, in place; ``t`` counts from 1."""
    c1 = 1.0 - BETA1**t
    c2 = 1.0 - BETA2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if m.shape != p.data.shape:
            raise ValueError(f"optimizer state shape {m.shape} does not match parameter {p.data.shape}")
        if g is None:
            g = np.zeros_like(p.data)
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    state.t = t


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 0.01):
        self.params = list(params)
        self.lr = lr
        self.state = AdamState.zeros_like(self.params)

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state, self.lr, self.state.t + 1)


# evaluation ---------------------------------------------------------------------

def predict(model: AugWardModel, graphs, chunk: int = 256) -> np.ndarray:
    """Predicted labels in ``1..|C|``; ties go to the smaller class index."""
    out = []
    for s in range(0, len(graphs), chunk):
        out.append(np.argmax(model.predict_proba(graphs[s:s + chunk]), axis=1) + 1)
    return np.concatenate(out)


def evaluate(model: AugWardModel, ds: Dataset, indices: Sequence[int]) -> float:
    if len(indices) == 0:
        raise ValueError("cannot evaluate on an empty index list")
    graphs = [ds[i] for i in indices]
    labels = np.array([g.label for g in graphs])
    return float(np.mean(predict(model, graphs) == labels))


def pcc(xs, ys) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("pcc needs two equal-length sequences of at least 2 values")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(dx @ dx)
    sy = np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        raise ValueError("pcc undefined: zero variance")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


# training -----------------------------------------------------------------------

@dataclass
class StepLosses:
    total: Tensor
    base: Tensor
    aware: Tensor
    cr: Tensor


def batch_losses(model: AugWardModel, originals, augmented, labels, targets,
                 cfg: TrainConfig, drop_rng=None, train: bool = True) -> StepLosses:
    """Forward one micro-batch of (G, G+) pairs and assemble every loss term."""
    b = len(originals)
    z = model.encoder(GraphBatch.from_graphs(list(originals) + list(augmented)))
    z_g, z_aug = ad.slice_rows(z, 0, b), ad.slice_rows(z, b, 2 * b)
    zd = ad.dropout(z, cfg.dropout, drop_rng, train) if drop_rng is not None else z
    # log-softmax on logits keeps gradients alive when the initial margins are large
    logits = model.classifier.logits(zd)
    logp = ad.log_softmax_row(logits)
    logp_g, logp_aug = ad.slice_rows(logp, 0, b), ad.slice_rows(logp, b, 2 * b)
    base = ad.add(cross_entropy_logp(logp_g, labels), cross_entropy_logp(logp_aug, labels))
    cr = loss_cr_logp(ad.softmax_row(ad.slice_rows(logits, 0, b)), logp_aug)
    aware = loss_aware(model.head, z_g, z_aug, targets) if targets is not None else Tensor(0.0)
    total = total_loss(base, loss_augward(aware, cr, cfg))
    return StepLosses(total, base, aware, cr)


def train(ds: Dataset, split: Split, cfg: TrainConfig, model: Optional[AugWardModel] = None,
          progress=None) -> tuple[AugWardModel, list[EpochMetrics]]:
    """Train encoder, classifier and head jointly; one fresh augmentation per graph per epoch."""
    cfg.validate()
    if model is None:
        model = AugWardModel.init(ds.feature_dim, ds.num_classes, cfg.hidden, cfg.num_layers, cfg.seed)
    params = model.parameters()
    opt = Adam(params, cfg.learning_rate)
    kind = AugKind.parse(cfg.augment)
    metric = DiffKind.parse(cfg.diff_metric)
    solver = cfg.solver()
    fill = ds.mean_feature() if cfg.mask_fill == "mean" else np.zeros(ds.feature_dim)
    train_idx = np.asarray(split.train_indices, dtype=np.int64)
    clock = time.perf_counter if cfg.record_timing else (lambda: 0.0)
    history = []

    for epoch in range(1, cfg.epochs + 1):
        t_start = clock()
        t_aug = t_fgwd = t_fb = 0.0
        sums = np.zeros(4)
        seen = 0
        worst_residual = 0.0
        order = make_rng(cfg.seed, 1, epoch).permutation(train_idx)
        for bno, s in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[s:s + cfg.batch_size]
            t0 = clock()
            pairs = [sample(ds[i], kind, cfg.p, make_rng(cfg.seed, 2, epoch, int(i)), fill) for i in idx]
            t1 = clock()
            targets = None
            if cfg.lambda_aware != 0:
                targets = np.array([diff_metric(pr, metric, cfg.alpha, solver) for pr in pairs])
            t2 = clock()
            model.zero_grad()
            losses = batch_losses(
                model, [pr.original for pr in pairs], [pr.augmented for pr in pairs],
                [ds[i].label for i in idx], targets, cfg, make_rng(cfg.seed, 3, epoch, bno),
            )
            if not np.isfinite(losses.total.item()):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {bno}")
            ad.backward(losses.total)
            opt.step()
            t3 = clock()
            t_aug += t1 - t0
            t_fgwd += t2 - t1
            t_fb += t3 - t2
            vals = np.array([losses.total.item(), losses.base.item(), losses.aware.item(), losses.cr.item()])
            recomposed = vals[1] + cfg.lambda_aware * vals[2] + cfg.lambda_cr * vals[3]
            worst_residual = max(worst_residual, abs(vals[0] - recomposed) / max(1.0, abs(vals[0])))
            sums += vals * len(idx)
            seen += len(idx)
        means = sums / seen
        train_acc = evaluate(model, ds, split.train_indices)
        test_acc = evaluate(model, ds, split.test_indices) if split.test_indices else float("nan")
        t_total = clock() - t_start
        m = EpochMetrics(epoch, *means, train_acc, test_acc, t_aug, t_fgwd, t_fb,
                         max(0.0, t_total - t_aug - t_fgwd - t_fb), worst_residual)
        history.append(m)
        log.debug("epoch %d total=%.4f test_acc=%.3f", epoch, m.total, m.test_acc)
        if progress is not None:
            progress(m)
    return model, history
