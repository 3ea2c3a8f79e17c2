import numpy as np
import pytest

from clothservo.errors import ContractError, ParameterError
from clothservo.imaging import (
    FlatBackground,
    GaborParams,
    Image,
    Kernel,
    Mask,
    apply_mask,
    convolve,
    load_png,
    make_gabor,
    quantize,
    save_png,
    segment_foreground,
    to_luminance,
)

from oracles import conv_oracle, gabor_oracle, luminance_oracle

from conftest import random_image


def test_convolve_matches_loop_reference(rng):
    for _ in range(8):
        h, w = rng.integers(5, 24, size=2)
        size = int(rng.choice([1, 3, 5, 7]))
        img = random_image(rng, h, w)
        weights = rng.normal(size=(size, size))
        got = convolve(Image.from_unit(img), Kernel(weights)).data
        want = conv_oracle(img, weights)
        assert np.max(np.abs(got - want)) < 1e-9


def test_convolve_is_linear(rng):
    img_a = random_image(rng, 16, 16)
    img_b = random_image(rng, 16, 16)
    kernel = Kernel(rng.normal(size=(5, 5)))
    a, b = 1.7, -0.4
    combined = convolve(Image(a * img_a + b * img_b), kernel).data
    separate = a * convolve(Image.from_unit(img_a), kernel).data + b * convolve(
        Image.from_unit(img_b), kernel
    ).data
    assert np.max(np.abs(combined - separate)) < 1e-9


def test_identity_kernel_is_noop(rng):
    img = random_image(rng, 12, 9)
    for size in (1, 3, 5):
        out = convolve(Image.from_unit(img), Kernel.identity(size)).data
        assert np.array_equal(out, img)


def test_border_replication_on_constant_image(rng):
    kernel = Kernel(rng.normal(size=(5, 5)))
    img = np.full((10, 10), 0.37)
    out = convolve(Image.from_unit(img), kernel).data
    expected = 0.37 * kernel.weights.sum()
    assert np.max(np.abs(out - expected)) < 1e-9


def test_correlation_orientation_no_flip():
    # Asymmetric kernel on an impulse distinguishes correlation from true
    # convolution; the loop oracle is the definition.
    img = np.zeros((7, 7))
    img[3, 3] = 1.0
    weights = np.arange(9, dtype=float).reshape(3, 3)
    got = convolve(Image.from_unit(img), Kernel(weights)).data
    want = conv_oracle(img, weights)
    assert np.array_equal(got, want)
    assert got[2, 2] == weights[2, 2]


def test_convolve_rejects_color_image(rng):
    img = Image.from_unit(random_image(rng, 8, 8, 3))
    with pytest.raises(ContractError):
        convolve(img, Kernel.identity(3))


def test_gabor_matches_pointwise_synthesis():
    cases = [
        (4.0, 0.0, 0.0, 2.0, 0.5, None),
        (8.0, np.pi / 4, 0.0, 4.48, 0.5, None),
        (5.0, 2.1, 1.2, 1.5, 0.9, 4),
    ]
    for wavelength, orientation, phase, sigma, aspect, radius in cases:
        params = GaborParams(wavelength, orientation, phase, sigma, aspect, radius)
        got = make_gabor(params).weights
        want = gabor_oracle(
            wavelength, orientation, phase, sigma, aspect, params.support_radius
        )
        assert got.shape == want.shape
        assert np.max(np.abs(got - want)) < 1e-12


def test_gabor_orientation_wraps_mod_pi():
    a = GaborParams(6.0, 0.3)
    b = GaborParams(6.0, 0.3 + np.pi)
    assert abs(a.orientation - b.orientation) < 1e-12
    assert np.allclose(make_gabor(a).weights, make_gabor(b).weights)


def test_gabor_default_radius_and_symmetry():
    params = GaborParams(4.0, 0.0, sigma=2.0)
    kernel = make_gabor(params)
    assert params.support_radius == 6
    assert kernel.size == 13
    w = kernel.weights
    # orientation 0, phase 0: even across rows, odd across columns
    assert np.allclose(w, w[::-1, :])
    assert np.allclose(w, -w[:, ::-1])
    vertical = make_gabor(GaborParams(4.0, np.pi / 2, sigma=2.0)).weights
    assert np.allclose(vertical, vertical[:, ::-1])
    assert np.allclose(vertical, -vertical[::-1, :])


def test_gabor_parameter_validation():
    with pytest.raises(ParameterError):
        GaborParams(0.0, 0.0)
    with pytest.raises(ParameterError):
        GaborParams(4.0, 0.0, sigma=-1.0)
    with pytest.raises(ParameterError):
        GaborParams(4.0, 0.0, support_radius=0)


def test_luminance_matches_reference(rng):
    img = random_image(rng, 9, 13, 3)
    got = to_luminance(Image.from_unit(img)).data
    assert np.max(np.abs(got - luminance_oracle(img))) < 1e-12
    gray = Image.from_unit(random_image(rng, 9, 13))
    assert to_luminance(gray) is gray


def test_quantize_idempotent(rng):
    img = Image.from_unit(random_image(rng, 10, 10, 3))
    once = quantize(img)
    twice = quantize(once)
    assert np.array_equal(once.data, twice.data)
    assert np.max(np.abs(once.data - img.data)) <= 0.5 / 255.0 + 1e-12


def test_png_round_trip_equals_quantize(tmp_path, rng):
    for channels in (1, 3):
        img = Image.from_unit(random_image(rng, 8, 11, channels))
        path = tmp_path / f"im{channels}.png"
        save_png(img, path)
        back = load_png(path)
        assert np.array_equal(back.data, quantize(img).data)


def test_flat_background_segmentation():
    color = (0.1, 0.2, 0.3)
    img = np.tile(np.array(color), (6, 6, 1))
    img[2:4, 1:3] = (0.5, 0.5, 0.5)
    mask = segment_foreground(Image.from_unit(img), FlatBackground(color))
    expected = np.zeros((6, 6), dtype=bool)
    expected[2:4, 1:3] = True
    assert np.array_equal(mask.bits, expected)


def test_flat_background_tolerance_is_strict():
    color = (0.4, 0.4, 0.4)
    bg = FlatBackground(color, tolerance=0.05)
    at_edge = np.tile(np.array([0.45, 0.4, 0.4]), (3, 3, 1))
    beyond = np.tile(np.array([0.46, 0.4, 0.4]), (3, 3, 1))
    assert not segment_foreground(Image.from_unit(at_edge), bg).bits.any()
    assert segment_foreground(Image.from_unit(beyond), bg).bits.all()


def test_flat_background_gray_uses_luminance():
    color = (0.2, 0.6, 0.4)
    lum = 0.299 * 0.2 + 0.587 * 0.6 + 0.114 * 0.4
    img = np.full((4, 4), lum)
    img[0, 0] = lum + 0.2
    mask = FlatBackground(color).foreground(Image.from_unit(img))
    assert mask.bits[0, 0]
    assert mask.bits.sum() == 1


def test_flat_background_size_contract(rng):
    bg = FlatBackground((0.0, 0.0, 0.0), width=8, height=8)
    with pytest.raises(ContractError):
        bg.foreground(Image.from_unit(random_image(rng, 4, 4, 3)))


def test_apply_mask(rng):
    img = random_image(rng, 5, 5, 3)
    bits = np.zeros((5, 5), dtype=bool)
    bits[0, :] = True
    out = apply_mask(Image.from_unit(img), Mask(bits)).data
    assert np.array_equal(out[0], img[0])
    assert np.all(out[1:] == 0.0)
    with pytest.raises(ContractError):
        apply_mask(Image.from_unit(img), Mask(np.ones((4, 4), dtype=bool)))


def test_image_contracts():
    with pytest.raises(ContractError):
        Image(np.zeros((3, 3, 2)))
    with pytest.raises(ContractError):
        Image(np.array([[0.0, np.nan]]))
    with pytest.raises(ContractError):
        Image.from_unit(np.array([[1.5]]))
    img = Image(np.zeros((2, 3)))
    assert (img.height, img.width, img.channels) == (2, 3, 1)


def test_kernel_contracts():
    with pytest.raises(ParameterError):
        Kernel(np.zeros((2, 2)))
    with pytest.raises(ParameterError):
        Kernel(np.zeros((3, 4)))
    assert Kernel.identity(5).weights[2, 2] == 1.0
