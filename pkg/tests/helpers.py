"""Small image builders shared by the test modules."""

import numpy as np


def solid(h, w, color):
    img = np.zeros((h, w, 3), dtype=np.uint8)
    img[:, :] = color
    return img


def square_scene(size=100, side=40, top=30, left=30, bg=(255, 255, 255), fg=(220, 20, 20)):
    img = solid(size, size, bg)
    img[max(top, 0) : top + side, max(left, 0) : left + side] = fg
    return img


def spike_image(height, width, amplitude, base=100):
    """Gray image with one interior spike.

    The Laplacian is -4a at the spike and +a at its four neighbours, zero
    elsewhere, so the population variance is exactly 20 a^2 / (h w).
    """
    img = solid(height, width, (base, base, base))
    img[height // 2, width // 2] = base + amplitude
    return img


def oracle_pair(img, annotation, name="photo"):
    from teachset.detect import AnnotationStore, OracleDetector, OracleSegmenter

    store = AnnotationStore([(name, img, annotation)])
    return OracleDetector(store), OracleSegmenter(store)
