import gzip
import struct

import numpy as np
import pytest

# 4 images of 2×3 pixels
IDX_PIXELS = np.array([
    [[0, 255, 0], [128, 64, 32]],
    [[255, 255, 255], [0, 0, 0]],
    [[10, 20, 30], [40, 50, 60]],
    [[1, 2, 3], [4, 5, 6]],
], dtype=np.uint8)
IDX_LABELS = np.array([0, 7, 3, 7], dtype=np.uint8)


def idx_image_bytes(pixels=IDX_PIXELS, magic=0x00000803):
    count, rows, cols = pixels.shape
    return struct.pack(">4I", magic, count, rows, cols) + pixels.tobytes()


def idx_label_bytes(labels=IDX_LABELS, magic=0x00000801):
    return struct.pack(">2I", magic, labels.shape[0]) + labels.tobytes()


@pytest.fixture
def mnist_files(tmp_path):
    images = tmp_path / "images-idx3-ubyte"
    labels = tmp_path / "labels-idx1-ubyte"
    images.write_bytes(idx_image_bytes())
    labels.write_bytes(idx_label_bytes())
    return str(images), str(labels)


@pytest.fixture
def gzipped_mnist_files(tmp_path):
    images = tmp_path / "images-idx3-ubyte.gz"
    labels = tmp_path / "labels-idx1-ubyte.gz"
    images.write_bytes(gzip.compress(idx_image_bytes()))
    labels.write_bytes(gzip.compress(idx_label_bytes()))
    return str(images), str(labels)
