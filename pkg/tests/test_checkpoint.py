import numpy as np
import pytest

from bwma.checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from bwma.errors import DataFormatError
from bwma.models import build_model
from bwma.nn import SteSchedule
from bwma.quant import ActQuantState, SteParams


@pytest.fixture
def random_model():
    rng = np.random.default_rng(99)
    model = build_model("mnist-tiny", act_bits=4, rng=rng)
    # give quant sites non-default state so the round trip is meaningful
    for i, site in enumerate(model.quant_sites()):
        site.state = ActQuantState(a_min=0.01 * i, a_max=1.5 + i, bits=4, ema_momentum=0.9)
    ste = SteSchedule()
    ste.params = SteParams(t=3.5, alpha=1.25)
    return model, ste


def test_round_trip_is_bitwise(tmp_path, random_model):
    model, ste = random_model
    path = str(tmp_path / "model.bwma")
    save_checkpoint(model, path, config={"note": 1}, ste=ste)
    loaded, ste2, header = load_checkpoint(path)
    for (name_a, ta), (name_b, tb) in zip(model.parameters(), loaded.parameters()):
        assert name_a == name_b
        np.testing.assert_array_equal(ta.data, tb.data)
        assert ta.data.dtype == tb.data.dtype == np.float32
    for sa, sb in zip(model.quant_sites(), loaded.quant_sites()):
        assert sa.state == sb.state
    assert ste2.params == ste.params
    assert header["config"] == {"note": 1}


def test_header_lists_layers_in_order(tmp_path, random_model):
    model, ste = random_model
    path = str(tmp_path / "model.bwma")
    save_checkpoint(model, path, ste=ste)
    _, _, header = load_checkpoint(path)
    names = [t["name"] for t in header["tensors"]]
    assert names == [name for name, _ in model.parameters()]
    # quantizer state record per MVM layer with the documented keys
    for entry in header["layers"].values():
        assert set(entry) >= {"c", "r", "threshold", "t", "alpha", "a_min", "a_max", "b", "ema_momentum"}
    assert header["layers"]["conv2"]["binarized"] is True
    assert header["layers"]["conv2"]["c"] is not None


def test_payload_corruption_detected(tmp_path, random_model):
    model, ste = random_model
    path = str(tmp_path / "model.bwma")
    save_checkpoint(model, path, ste=ste)
    raw = bytearray(open(path, "rb").read())
    raw[-100] ^= 0x40  # flip one payload bit
    open(path, "wb").write(bytes(raw))
    with pytest.raises(DataFormatError, match="checksum"):
        load_checkpoint(path)


def test_bad_magic_and_version(tmp_path, random_model):
    model, ste = random_model
    path = str(tmp_path / "model.bwma")
    save_checkpoint(model, path, ste=ste)
    raw = bytearray(open(path, "rb").read())
    bad = tmp_path / "bad.bwma"
    bad.write_bytes(b"NOPE" + bytes(raw[4:]))
    with pytest.raises(DataFormatError, match="magic"):
        load_checkpoint(str(bad))
    ver = bytearray(raw)
    ver[4] = FORMAT_VERSION + 1
    bad.write_bytes(bytes(ver))
    with pytest.raises(DataFormatError, match="version"):
        load_checkpoint(str(bad))


def test_corrupt_header_rejected(tmp_path, random_model):
    model, ste = random_model
    path = str(tmp_path / "model.bwma")
    save_checkpoint(model, path, ste=ste)
    raw = bytearray(open(path, "rb").read())
    raw[12] ^= 0xFF  # stomp JSON bytes
    bad = tmp_path / "hdr.bwma"
    bad.write_bytes(bytes(raw))
    with pytest.raises(DataFormatError):
        load_checkpoint(str(bad))
