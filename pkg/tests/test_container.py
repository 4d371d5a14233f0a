import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scae.container import ContainerError, decode_container, encode_container, load_container, save_container


def test_roundtrip_single_tensor(tmp_path):
    x = np.array([[1.0, -2.5], [3.25, np.float32(1e-30)]], dtype=np.float32)
    save_container(tmp_path / "a.scae", [("x", x)], '{"k": 1}')
    entries, meta = load_container(tmp_path / "a.scae")
    assert meta == '{"k": 1}'
    (name, y), = entries
    assert name == "x" and y.dtype == np.float32
    assert y.tobytes() == x.tobytes()


def test_empty_container(tmp_path):
    save_container(tmp_path / "e.scae", [], "{}")
    assert load_container(tmp_path / "e.scae") == ([], "{}")


def test_order_names_and_widths_preserved():
    items = [("b", np.ones((2, 3), np.float32)), ("a", np.arange(4.0)), ("c", np.zeros((1, 1, 5), np.float32))]
    entries, _ = decode_container(encode_container(items))
    assert [n for n, _ in entries] == ["b", "a", "c"]
    assert [e.dtype for _, e in entries] == [np.float32, np.float64, np.float32]
    for (_, a), (_, b) in zip(items, entries):
        assert a.shape == b.shape and np.array_equal(a, b)


def test_exact_layout():
    blob = encode_container([("w", np.array([1.0], np.float32))], "{}")
    expected = (b"SCAE" + (1).to_bytes(2, "little") + (2).to_bytes(4, "little") + b"{}"
                + (1).to_bytes(4, "little") + (1).to_bytes(2, "little") + b"w" + bytes([4, 1])
                + (1).to_bytes(4, "little") + np.float32(1.0).tobytes())
    assert blob == expected


def test_errors():
    good = encode_container([("x", np.ones(3, np.float32))])
    with pytest.raises(ContainerError, match="magic"):
        decode_container(b"NOPE" + good[4:])
    with pytest.raises(ContainerError, match="version"):
        decode_container(good[:4] + (2).to_bytes(2, "little") + good[6:])
    with pytest.raises(ContainerError, match="truncated"):
        decode_container(good[:-1])
    with pytest.raises(ContainerError, match="duplicate"):
        encode_container([("x", np.ones(1)), ("x", np.ones(1))])
    with pytest.raises(ContainerError):
        encode_container([("", np.ones(1))])
    with pytest.raises(ContainerError):
        encode_container([("i", np.arange(3))])


def test_duplicate_names_rejected_on_read():
    one = encode_container([("x", np.ones(1, np.float32))])
    body = one[4 + 2 + 4 + 2 + 4:]
    forged = one[:4 + 2 + 4 + 2] + (2).to_bytes(4, "little") + body + body
    with pytest.raises(ContainerError, match="duplicate"):
        decode_container(forged)


def test_truncated_file(tmp_path):
    save_container(tmp_path / "t.scae", [("x", np.ones((10, 10)))])
    data = (tmp_path / "t.scae").read_bytes()
    (tmp_path / "t.scae").write_bytes(data[: len(data) // 2])
    with pytest.raises(ContainerError):
        load_container(tmp_path / "t.scae")


shapes = st.lists(st.integers(1, 4), min_size=1, max_size=4).map(tuple)
tensors = st.one_of(
    arrays(np.float32, shapes, elements=st.floats(-1e6, 1e6, width=32)),
    arrays(np.float64, shapes, elements=st.floats(-1e300, 1e300)),
)


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.text(min_size=1, max_size=12), tensors, max_size=5), st.text(max_size=40))
def test_roundtrip_property(named, meta):
    entries, got_meta = decode_container(encode_container(list(named.items()), meta))
    assert got_meta == meta
    assert [n for n, _ in entries] == list(named)
    for (_, a), b in zip(entries, named.values()):
        assert a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
