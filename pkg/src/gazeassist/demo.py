"""Quickly trainable fixtures: the scripted separable window set."""

from __future__ import annotations

import numpy as np

from .intentnet import IntentNetClassifier


def separable_windows(n: int = 512, sw: int = 30,
                      seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Cleanly separable window tensor: sustained high ratio means intent.

    Intent windows hold the ratio near the clamp (a fixation deep inside a
    box); no-intent windows wander with low ratio plus occasional short
    glance spikes. Gaze coordinates are uniform noise in both classes so the
    classifier cannot lean on position.
    """
    rng = np.random.default_rng(seed)
    X = np.empty((n, sw, 3))
    y = np.zeros(n)
    X[:, :, 0] = rng.uniform(0.0, 1.0, (n, sw))
    X[:, :, 1] = rng.uniform(0.0, 1.0, (n, sw))
    half = n // 2
    X[:half, :, 2] = np.clip(rng.normal(8.0, 1.0, (half, sw)), 0.0, 10.0)
    y[:half] = 1
    low = np.abs(rng.normal(0.15, 0.1, (n - half, sw)))
    spikes = rng.random((n - half, sw)) < 0.05
    low[spikes] = rng.uniform(2.0, 9.0, int(spikes.sum()))
    X[half:, :, 2] = np.clip(low, 0.0, 10.0)
    return X, y


def train_demo_classifier(seed: int = 0, epochs: int = 12,
                          n: int = 512) -> IntentNetClassifier:
    """Small deterministic model good enough to drive live sessions."""
    X, y = separable_windows(n=n, seed=seed)
    est = IntentNetClassifier(epochs=epochs, seed=seed, batch_size=32)
    return est.fit(X, y)
