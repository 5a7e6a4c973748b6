import math

import numpy as np
import pytest


def _oracle_surface(mask):
    height, width = mask.shape
    points = []
    for y in range(height):
        for x in range(width):
            if not mask[y, x]:
                continue
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ny, nx = y + dy, x + dx
                if not (0 <= ny < height and 0 <= nx < width) or not mask[ny, nx]:
                    points.append((y, x))
                    break
    return points


def _oracle_directed(source, target):
    return [min(math.dist(p, q) for q in target) for p in source]


def _oracle_percentile(values, q):
    ordered = sorted(values)
    position = q / 100 * (len(ordered) - 1)
    low = math.floor(position)
    high = min(low + 1, len(ordered) - 1)
    return ordered[low] + (position - low) * (ordered[high] - ordered[low])


@pytest.fixture
def surface_oracle():
    """Loop-based HD95 / ASD for masks with non-empty surfaces."""

    def evaluate(pred, gt):
        sp, sg = _oracle_surface(pred), _oracle_surface(gt)
        distances = _oracle_directed(sp, sg) + _oracle_directed(sg, sp)
        return _oracle_percentile(distances, 95), sum(distances) / len(distances)

    return evaluate


@pytest.fixture
def mask_pairs():
    rng = np.random.default_rng(77)
    pairs = []
    while len(pairs) < 100:
        pred = rng.uniform(size=(16, 16)) < rng.uniform(0.1, 0.5)
        gt = rng.uniform(size=(16, 16)) < rng.uniform(0.1, 0.5)
        if pred.any() and gt.any():
            pairs.append((pred, gt))
    return pairs
