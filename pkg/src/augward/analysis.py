"""Embedding-distance analyses and the ablation ladder.

All functions are deterministic given their inputs; augmentation draws use
their own RNG streams so they never collide with the training streams.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .augment import AugKind, make_rng, sample
from .distance import fgwd
from .graph import Dataset, Split
from .model import AugWardModel
from .training import EpochMetrics, TrainConfig, pcc, train

CORRELATION_P = tuple(round(0.05 * k, 2) for k in range(1, 10))
DISPERSION_P = (0.2, 0.4)
SAMPLES = 100

# stream tags for make_rng, distinct from the training tags 1..3
_CORR_STREAM = 10
_DISP_STREAM = 11


def _sq_dist(model: AugWardModel, original, augmented) -> np.ndarray:
    return _embed_pairs(model, original, augmented)[0]


def _embed_pairs(model: AugWardModel, original, augmented):
    """Squared embedding distances plus head predictions in both argument orders."""
    z = model.embed([original] + list(augmented))
    zg = np.broadcast_to(z[0], z[1:].shape)
    w = model.head.linear.weight.data
    b = model.head.linear.bias.data
    forward = (np.hstack([zg, z[1:]]) @ w + b).ravel()
    swapped = (np.hstack([z[1:], zg]) @ w + b).ravel()
    return np.sum((z[1:] - z[0]) ** 2, axis=1), forward, swapped


@dataclass
class CorrelationResult:
    graph_index: int
    rows: list  # (p, draw, squared embedding distance, fgwd, head(G, G+), head(G+, G))
    pcc: float


def correlation(model: AugWardModel, ds: Dataset, graph_index: int, cfg: TrainConfig,
                ps: Sequence[float] = CORRELATION_P, samples: int = SAMPLES) -> CorrelationResult:
    """Pair ``||z_G - z_G+||^2`` with FGWD over ``samples`` augmentations for every ratio in ``ps``."""
    if len(ps) == 0:
        raise ValueError("the ratio list is empty")
    g = ds[graph_index]
    kind = AugKind.parse(cfg.augment)
    solver = cfg.solver()
    fill = ds.mean_feature() if cfg.mask_fill == "mean" else np.zeros(ds.feature_dim)
    rows = []
    for pi, p in enumerate(ps):
        pairs = [sample(g, kind, p, make_rng(cfg.seed, _CORR_STREAM, pi, k), fill) for k in range(samples)]
        dz, fwd, swp = _embed_pairs(model, g, [pr.augmented for pr in pairs])
        for k, pr in enumerate(pairs):
            d = fgwd(pr.original, pr.augmented, cfg.alpha, solver).value
            rows.append((float(p), k, float(dz[k]), d, float(fwd[k]), float(swp[k])))
    arr = np.array([(r[2], r[3]) for r in rows])
    return CorrelationResult(graph_index, rows, pcc(arr[:, 0], arr[:, 1]))


@dataclass
class DispersionResult:
    rows: list     # (kind, p, draw, squared embedding distance)
    summary: list  # (kind, p, mean, variance)


def dispersion(model: AugWardModel, ds: Dataset, graph_index: int, cfg: TrainConfig,
               ps: Sequence[float] = DISPERSION_P, kinds: Sequence = tuple(AugKind),
               samples: int = SAMPLES) -> DispersionResult:
    if len(ps) == 0:
        raise ValueError("the ratio list is empty")
    g = ds[graph_index]
    fill = ds.mean_feature() if cfg.mask_fill == "mean" else np.zeros(ds.feature_dim)
    rows, summary = [], []
    for ki, kind in enumerate(AugKind.parse(k) for k in kinds):
        for pi, p in enumerate(ps):
            augmented = [sample(g, kind, p, make_rng(cfg.seed, _DISP_STREAM, ki, pi, k), fill).augmented
                         for k in range(samples)]
            dz = _sq_dist(model, g, augmented)
            rows.extend((kind.value, float(p), k, float(d)) for k, d in enumerate(dz))
            summary.append((kind.value, float(p), float(dz.mean()), float(dz.var())))
    return DispersionResult(rows, summary)


LADDER = (
    ("baseline", None, False),
    ("+RatioP", "RatioP", False),
    ("+NodeFeat", "NodeFeat", False),
    ("+AdjMat", "AdjMat", False),
    ("+EdgeJaccard", "EdgeJaccard", False),
    ("+Fgwd", "Fgwd", False),
    ("+Fgwd+CR", "Fgwd", True),
)


def ladder_configs(cfg: TrainConfig) -> list[tuple[str, TrainConfig]]:
    """The seven ablation configs; aware and CR weights come from ``cfg`` (1 if CR weight is 0)."""
    lam_cr = cfg.lambda_cr or 1.0
    out = []
    for name, metric, use_cr in LADDER:
        if metric is None:
            out.append((name, cfg.replace(lambda_aware=0.0, lambda_cr=0.0)))
        else:
            out.append((name, cfg.replace(diff_metric=metric, lambda_cr=lam_cr if use_cr else 0.0)))
    return out


@dataclass
class AblationRow:
    name: str
    config: TrainConfig
    final: EpochMetrics
    max_residual: float

    @property
    def consistent(self) -> bool:
        """Every batch satisfied ``total = base + la * aware + lc * cr`` to rounding."""
        return self.max_residual <= 1e-12


def ablate(ds: Dataset, split: Split, cfg: TrainConfig, progress=None) -> list[AblationRow]:
    rows = []
    for name, c in ladder_configs(cfg):
        _, hist = train(ds, split, c)
        rows.append(AblationRow(name, c, hist[-1], max(m.batch_residual for m in hist)))
        if progress is not None:
            progress(rows[-1])
    return rows
