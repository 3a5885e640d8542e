"""Synthetic feature-bundle generation.

Samples are built around C prototype directions: each positive label
contributes patches near its prototype, the rest of the patches are random
background, the global feature is the patch mean, and the category
embeddings are noisy copies of the prototypes (standing in for text
embeddings that correlate with visual appearance).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundleio import BundleData


@dataclass
class FeatureBundle:
    x0: np.ndarray  # (d,)
    x: np.ndarray  # (M, d)
    y: np.ndarray  # (C,)


@dataclass
class SyntheticSpec:
    c: int = 8
    m: int = 16
    d: int = 32
    n: int = 2500
    density: float = 0.3
    noise: float = 0.05
    separation: float = 1.2
    seed: int = 0
    background: float = 1.0  # fraction of patches drawn as background
    background_scale: float = 1.25  # amplitude of background patches
    semantic_noise: float = 0.03


@dataclass
class SyntheticDataset:
    x0: np.ndarray  # (n, d)
    x: np.ndarray  # (n, M, d)
    y: np.ndarray  # (n, C)
    t_ka: np.ndarray  # (C, d)
    prototypes: np.ndarray  # (C, d)
    categories: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.x0.shape[0]

    def slice(self, start: int, stop: int) -> "SyntheticDataset":
        return SyntheticDataset(
            x0=self.x0[start:stop],
            x=self.x[start:stop],
            y=self.y[start:stop],
            t_ka=self.t_ka,
            prototypes=self.prototypes,
            categories=self.categories,
        )

    def bundles(self) -> list[FeatureBundle]:
        return [FeatureBundle(self.x0[i], self.x[i], self.y[i]) for i in range(self.n)]

    def as_bundle_data(self) -> BundleData:
        return BundleData(x0=self.x0, x=self.x, y=self.y, t_ka=self.t_ka)


def _unit_rows(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    rows = rng.standard_normal((count, d))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def _sample_prototypes(rng: np.random.Generator, c: int, d: int, separation: float) -> np.ndarray:
    for _ in range(1000):
        protos = _unit_rows(rng, c, d)
        dists = np.linalg.norm(protos[:, None, :] - protos[None, :, :], axis=-1)
        dists[np.diag_indices(c)] = np.inf
        if dists.min() >= separation:
            return protos
    raise ValueError(
        f"cannot place {c} prototypes with pairwise separation {separation} in {d} dimensions"
    )


def gen_synthetic(spec: SyntheticSpec) -> SyntheticDataset:
    """Deterministic dataset for a given spec; identical seeds give identical bytes."""
    rng = np.random.default_rng(spec.seed)
    protos = _sample_prototypes(rng, spec.c, spec.d, spec.separation)
    t_ka = protos + spec.semantic_noise * rng.standard_normal(protos.shape)

    n_bg_default = int(round(spec.background * spec.m))
    x0 = np.empty((spec.n, spec.d))
    x = np.empty((spec.n, spec.m, spec.d))
    y = np.zeros((spec.n, spec.c))
    for i in range(spec.n):
        labels = rng.random(spec.c) < spec.density
        if not labels.any():
            labels[rng.integers(spec.c)] = True
        positives = np.flatnonzero(labels)
        if len(positives) > spec.m:
            raise ValueError(f"sample with {len(positives)} positives exceeds {spec.m} patches")
        n_fg = max(spec.m - n_bg_default, len(positives))
        patch_labels = positives[np.arange(n_fg) % len(positives)]
        fg = protos[patch_labels] + spec.noise * rng.standard_normal((n_fg, spec.d))
        bg = spec.background_scale * _unit_rows(rng, spec.m - n_fg, spec.d)
        patches = np.concatenate([fg, bg], axis=0)
        patches = patches[rng.permutation(spec.m)]
        x[i] = patches
        x0[i] = patches.mean(axis=0)
        y[i, positives] = 1.0
    categories = [f"class_{j}" for j in range(spec.c)]
    return SyntheticDataset(x0=x0, x=x, y=y, t_ka=t_ka, prototypes=protos, categories=categories)


def degenerate_semantics(spec: SyntheticSpec, dataset: SyntheticDataset) -> SyntheticDataset:
    """Replace category embeddings with noise uncorrelated with the prototypes."""
    rng = np.random.default_rng(spec.seed + 104729)
    noise = _unit_rows(rng, spec.c, spec.d)
    return SyntheticDataset(
        x0=dataset.x0,
        x=dataset.x,
        y=dataset.y,
        t_ka=noise,
        prototypes=dataset.prototypes,
        categories=dataset.categories,
    )
