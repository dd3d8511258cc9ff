"""Model parsing, chain validation, and kernel decomposition."""

import numpy as np
import pytest

from vwa import ParseError, ShapeError
from vwa.model import (LayerDescriptor, decompose_layer, parse_model,
                       phase_subsample, phase_weights, validate_chain)
from vwa.tensors import FixedTensor, direct_conv

from tests.conftest import load_model_text


def test_parse_vgg16_has_13_convs():
    model = parse_model(load_model_text("vgg16"))
    convs = model.conv_layers
    assert len(convs) == 13
    assert all(l.kernel_h == 3 and l.stride == 1 for l in convs)
    assert convs[0].in_channels == 3 and convs[-1].out_channels == 512


def test_parse_empty_model_errors():
    with pytest.raises(ParseError, match="empty model"):
        parse_model("model nothing\n# no layers\n")


def test_parse_resnet_first_layer_7x7():
    model = parse_model(load_model_text("resnet34"))
    l1 = model.layers[0]
    assert (l1.kernel_h, l1.stride) == (7, 2)
    # the published description gives stride 4; that parses too
    m2 = parse_model("model x\nconv c1 in=224x224x3 out=64 k=7 s=4 pad=3 act=relu bias=1\n")
    assert (m2.layers[0].kernel_h, m2.layers[0].stride) == (7, 4)


def test_parse_reports_line_numbers():
    bad = "model m\nconv a in=8x8x3 out=4 k=3 s=1 pad=1 act=relu bias=1\nconv b in=oops\n"
    with pytest.raises(ParseError, match="line 3"):
        parse_model(bad)


def test_parse_rejects_unknown_kind():
    with pytest.raises(ParseError, match="unsupported kind"):
        parse_model("model m\nfc a in=8x8x3 out=4\n")


def test_parse_rejects_kernel_6():
    with pytest.raises(ParseError):
        parse_model("model m\nconv a in=8x8x3 out=4 k=6 s=1 pad=0 act=none bias=0\n")


def test_zero_sized_output_forbidden():
    with pytest.raises(ShapeError, match="non-positive output"):
        LayerDescriptor("z", "conv", 1, 1, 2, 2, 3, 3, 1, 0)


def test_chain_mismatch_diagnostic():
    text = ("model m\n"
            "conv a in=8x8x3 out=64 k=3 s=1 pad=1 act=relu bias=1\n"
            "conv b in=8x8x32 out=16 k=3 s=1 pad=1 act=relu bias=1\n")
    with pytest.raises(ParseError, match="shape-chain mismatch"):
        parse_model(text)
    layers = (
        LayerDescriptor("a", "conv", 3, 64, 8, 8, 3, 3, 1, 1),
        LayerDescriptor("b", "conv", 32, 16, 8, 8, 3, 3, 1, 1),
    )
    from vwa.model import NetworkModel
    diags = validate_chain(NetworkModel("m", layers))
    assert len(diags) == 1 and "b" in diags[0]


def test_mobilenet_chain_is_clean():
    model = parse_model(load_model_text("mobilenet"))
    assert validate_chain(model) == []
    kinds = [l.kind for l in model.layers]
    assert kinds.count("depthwise_conv") == 13


def test_googlenet_and_resnet_parse_with_branches():
    for name in ("googlenet", "resnet34"):
        model = parse_model(load_model_text(name))
        assert validate_chain(model) == []
        assert any(not l.chained for l in model.layers)


def test_roundtrip_serialize_parse():
    for name in ("vgg16", "resnet34", "mobilenet", "googlenet"):
        model = parse_model(load_model_text(name))
        again = parse_model(model.serialize())
        assert again == model


# --- decomposition ----------------------------------------------------------

def test_decompose_identity_cases():
    l3 = LayerDescriptor("a", "conv", 4, 4, 9, 9, 3, 3, 1, 1)
    assert decompose_layer(l3) == [(l3, (0, 0))]
    l1 = LayerDescriptor("b", "conv", 4, 4, 9, 9, 1, 1, 1, 0)
    assert decompose_layer(l1) == [(l1, (0, 0))]


def test_decompose_7x7_phase_count_and_kernels():
    for s, phases in ((2, 4), (4, 16)):
        layer = LayerDescriptor("c", "conv", 3, 8, 28, 28, 7, 7, s, 3)
        subs = decompose_layer(layer)
        assert len(subs) == phases
        for sub, (pi, pj) in subs:
            assert sub.kernel_h == sub.kernel_w == 4 and sub.stride == 1
            assert sub.active_kh == (7 - pi + s - 1) // s
            assert sub.active_kw == (7 - pj + s - 1) // s


def test_decompose_rejects_unsupported():
    bad = LayerDescriptor("d", "conv", 3, 8, 28, 28, 7, 7, 3, 3)
    with pytest.raises(ShapeError):
        decompose_layer(bad)


@pytest.mark.parametrize("stride", [2, 4])
def test_decomposition_sums_to_direct_conv(stride):
    """Polyphase sub-layer outputs summed elementwise equal the direct
    7x7 convolution exactly in integer arithmetic (11x11 random input)."""
    rng = np.random.default_rng(11 + stride)
    C, F, H = 4, 3, 11
    pad = 3
    layer = LayerDescriptor("e", "conv", C, F, H, H, 7, 7, stride, pad)
    inp = rng.integers(-40, 40, (C, H, H))
    w = rng.integers(-20, 20, (F, C, 7, 7))
    ref = direct_conv(FixedTensor.from_array(inp, 0),
                      FixedTensor.from_array(w, 0), None, layer)
    padded = np.zeros((C, H + 2 * pad, H + 2 * pad), dtype=np.int64)
    padded[:, pad:pad + H, pad:pad + H] = inp
    acc = np.zeros((F, layer.out_height, layer.out_width), dtype=np.int64)
    for sub, (pi, pj) in decompose_layer(layer):
        sub_in = phase_subsample(padded, stride, pi, pj, sub.in_height, sub.in_width)
        sub_w = phase_weights(w, stride, pi, pj, 4)
        sub_ref = direct_conv(FixedTensor.from_array(sub_in, 0),
                              FixedTensor.from_array(sub_w, 0), None, sub)
        acc += sub_ref.data
    assert np.array_equal(acc, ref.data)


def test_decomposition_soundness_randomized():
    """Exactness holds for every supported (K, S) on instances up to
    16x16x4 with randomized weights/inputs."""
    rng = np.random.default_rng(5)
    for k, s in ((1, 1), (3, 1), (3, 2), (4, 1), (5, 1), (7, 2), (7, 4)):
        h = int(rng.integers(max(9, k + s), 17))
        layer = LayerDescriptor("f", "conv", 4, 2, h, h, k, k, s, k // 2)
        subs = decompose_layer(layer)
        if k < 7:
            assert len(subs) == 1
        else:
            assert len(subs) == s * s
