import gzip

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qganlab.data import (
    Dataset,
    IdxParseError,
    downscale,
    gmm_class_means,
    load_cache,
    load_idx_file,
    load_mnist,
    normalize_u8,
    parse_idx,
    save_cache,
    synthetic_gmm,
)


def idx_bytes(shape, payload=None, dtype_code=0x08):
    header = bytes([0, 0, dtype_code, len(shape)])
    for dim in shape:
        header += int(dim).to_bytes(4, "big")
    if payload is None:
        payload = bytes(int(np.prod(shape)))
    return header + payload


def test_parse_small_image_file():
    data = bytes(range(32))
    out = parse_idx(idx_bytes((2, 4, 4), data))
    assert out.magic == 0x00000803
    assert out.shape == (2, 4, 4)
    assert out.data.shape == (2, 4, 4)
    assert out.data.ravel()[5] == 5


def test_parse_label_file():
    out = parse_idx(idx_bytes((6,), bytes([0, 1, 2, 3, 4, 5])))
    assert out.magic == 0x00000801
    assert out.shape == (6,)


def test_truncated_header_rejected():
    with pytest.raises(IdxParseError) as err:
        parse_idx(b"\x00\x00\x08\x01")
    assert err.value.offset == 4


def test_four_byte_minimum():
    with pytest.raises(IdxParseError):
        parse_idx(b"\x00\x00")


def test_nonzero_magic_prefix_rejected():
    buf = bytearray(idx_bytes((3,)))
    buf[0] = 1
    with pytest.raises(IdxParseError) as err:
        parse_idx(bytes(buf))
    assert err.value.offset == 0


def test_unsupported_dtype_rejected():
    with pytest.raises(IdxParseError) as err:
        parse_idx(idx_bytes((3,), dtype_code=0x0D))
    assert err.value.offset == 2


def test_payload_length_mismatch_rejected():
    good = idx_bytes((4, 2))
    with pytest.raises(IdxParseError):
        parse_idx(good + b"\x00")
    with pytest.raises(IdxParseError):
        parse_idx(good[:-1])


def test_magic_mutation_fuzz_small():
    base = idx_bytes((5, 3), bytes(range(15)))
    rng = np.random.default_rng(0)
    rejected = 0
    for _ in range(300):
        pos = int(rng.integers(0, 4))
        buf = bytearray(base)
        new = int(rng.integers(0, 256))
        if new == buf[pos]:
            new = (new + 1) % 256
        buf[pos] = new
        try:
            parse_idx(bytes(buf))
        except IdxParseError:
            rejected += 1
    assert rejected == 300


@settings(max_examples=60, deadline=None)
@given(pos=st.integers(0, 11), value=st.integers(0, 255))
def test_header_mutation_property(pos, value):
    base = bytearray(idx_bytes((5, 3), bytes(range(15))))
    if base[pos] == value:
        return
    base[pos] = value
    with pytest.raises(IdxParseError):
        parse_idx(bytes(base))


def test_gzip_transparent_load(tmp_path):
    raw = idx_bytes((3, 2, 2), bytes(range(12)))
    plain = tmp_path / "file.idx"
    plain.write_bytes(raw)
    zipped = tmp_path / "file.idx.gz"
    zipped.write_bytes(gzip.compress(raw))
    np.testing.assert_array_equal(load_idx_file(plain).data, load_idx_file(zipped).data)


def test_normalization_exact_endpoints():
    out = normalize_u8(np.array([[0, 255, 128]], dtype=np.uint8))
    assert out[0, 0] == -1.0
    assert out[0, 1] == 1.0
    assert abs(out[0, 2] - (128 / 127.5 - 1.0)) < 1e-15


def test_downscale_constant_and_shapes():
    images = np.full((3, 28, 28), 0.25)
    out = downscale(images, 2)
    assert out.shape == (3, 14, 14)
    assert np.all(out == 0.25)


def test_downscale_checkerboard_averages_to_half():
    board = np.indices((4, 4)).sum(axis=0) % 2
    out = downscale(board[None].astype(float), 2)
    assert np.all(out == 0.5)


def test_downscale_divisibility():
    with pytest.raises(ValueError):
        downscale(np.zeros((1, 27, 28)), 2)


def test_mnist_loader_end_to_end(tmp_path):
    rng = np.random.default_rng(1)
    def write(name, shape, payload):
        (tmp_path / name).write_bytes(idx_bytes(shape, payload))
    train_images = rng.integers(0, 256, (8, 28, 28), dtype=np.uint8)
    test_images = rng.integers(0, 256, (4, 28, 28), dtype=np.uint8)
    write("train-images-idx3-ubyte", (8, 28, 28), train_images.tobytes())
    write("train-labels-idx1-ubyte", (8,), bytes([0, 1, 2, 3, 4, 5, 6, 7]))
    write("t10k-images-idx3-ubyte", (4, 28, 28), test_images.tobytes())
    write("t10k-labels-idx1-ubyte", (4,), bytes([9, 8, 7, 6]))
    train, test = load_mnist(tmp_path)
    assert len(train) == 8 and len(test) == 4
    assert train.image_shape == (14, 14)
    assert train.images.min() >= -1.0 and train.images.max() <= 1.0
    np.testing.assert_array_equal(test.labels, [9, 8, 7, 6])


def test_mnist_loader_lists_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError) as err:
        load_mnist(tmp_path)
    message = str(err.value)
    assert "train-images-idx3-ubyte" in message and "t10k-labels-idx1-ubyte" in message


def test_mnist_loader_rejects_corrupt_labels(tmp_path):
    def write(name, shape, payload):
        (tmp_path / name).write_bytes(idx_bytes(shape, payload))
    write("train-images-idx3-ubyte", (2, 28, 28), bytes(2 * 784))
    write("train-labels-idx1-ubyte", (2,), bytes([3, 250]))
    write("t10k-images-idx3-ubyte", (1, 28, 28), bytes(784))
    write("t10k-labels-idx1-ubyte", (1,), bytes([1]))
    with pytest.raises(ValueError, match="250"):
        load_mnist(tmp_path)


def test_synthetic_gmm_basics():
    empty = synthetic_gmm(0, 10, 64, seed=0)
    assert len(empty) == 0
    a = synthetic_gmm(20, 10, 64, seed=5)
    b = synthetic_gmm(20, 10, 64, seed=5)
    np.testing.assert_array_equal(a.images, b.images)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.images.min() >= -1.0 and a.images.max() <= 1.0
    assert a.image_shape == (8, 8)


def test_synthetic_gmm_separation_supports_linear_probe():
    # class means sit >= 4 sigma apart, so least-squares one-hot regression
    # on held-out draws must classify essentially perfectly
    train = synthetic_gmm(60, 10, 64, seed=2)
    test = synthetic_gmm(30, 10, 64, seed=3)
    means = gmm_class_means(10, 64)
    dists = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
    off_diag = dists[np.triu_indices(10, 1)]
    assert off_diag.min() >= 4 * 0.1
    x = train.images.reshape(len(train), -1)
    onehot = np.eye(10)[train.labels]
    coef, *_ = np.linalg.lstsq(np.hstack([x, np.ones((len(x), 1))]), onehot, rcond=None)
    xt = np.hstack([test.images.reshape(len(test), -1), np.ones((len(test), 1))])
    accuracy = np.mean(np.argmax(xt @ coef, axis=1) == test.labels)
    assert accuracy > 0.99


def test_dataset_length_mismatch():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2, 2)), np.zeros(2, dtype=np.int64), 10)


def test_cache_roundtrip(tmp_path):
    train = synthetic_gmm(5, 10, 16, seed=1)
    test = synthetic_gmm(2, 10, 16, seed=2)
    path = tmp_path / "cache.npz"
    save_cache(path, train, test, meta={"dataset": "synthetic"})
    train2, test2 = load_cache(path)
    np.testing.assert_array_equal(train.images, train2.images)
    np.testing.assert_array_equal(test.labels, test2.labels)
    assert train2.n_classes == 10
