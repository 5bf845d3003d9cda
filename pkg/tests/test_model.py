import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqdg import losses as Lo
from seqdg.autodiff import Tensor
from seqdg.autodiff.gradcheck import check_gradients
from seqdg.errors import ContractError, ShapeError
from seqdg.gradcheck_suite import randomize_decoder_output
from seqdg.model import DESK, PAPER_SCALE, ModelConfig, SeqModel

SMALL = ModelConfig(n=32, C=2, L=4, d=16, conv_widths=(4, 4, 8), attn_layers=1, heads=2)


@pytest.fixture(scope="module")
def desk_model():
    return SeqModel(DESK, seed=0).eval()


def test_desk_encode_shape(desk_model):
    x = np.random.default_rng(0).standard_normal((2, 8, 256, 2)).astype(np.float32)
    assert desk_model.encode(x).shape == (2, 8, 64)


def test_decode_roundtrips_input_shape(desk_model):
    x = np.random.default_rng(1).standard_normal((2, 8, 256, 2)).astype(np.float32)
    assert desk_model.decode(desk_model.encode(x)).shape == x.shape


def test_eval_mode_is_deterministic(desk_model):
    x = np.random.default_rng(2).standard_normal((3, 8, 256, 2)).astype(np.float32)
    a = desk_model.encode(x).features.data
    b = desk_model.encode(x).features.data
    assert a.tobytes() == b.tobytes()
    assert desk_model.decode(a).data.tobytes() == desk_model.decode(b).data.tobytes()


def test_zero_input_gives_finite_features(desk_model):
    h = desk_model.encode(np.zeros((1, 8, 256, 2), dtype=np.float32)).features.data
    assert np.isfinite(h).all()


def test_wrong_input_shape_is_contract_error(desk_model):
    with pytest.raises(ShapeError):
        desk_model.encode(np.zeros((1, 8, 128, 2), dtype=np.float32))
    with pytest.raises(ContractError):
        desk_model.decode(np.zeros((1, 8, 32), dtype=np.float32))


def test_probabilities_sum_to_one(desk_model):
    h = np.random.default_rng(3).standard_normal((4, 8, 64)).astype(np.float32) * 10
    p = desk_model.classify(h).data
    assert p.shape == (4, 8, 5)
    np.testing.assert_allclose(p.sum(-1), 1.0, atol=1e-6)


def test_zero_classifier_is_uniform():
    m = SeqModel(SMALL, seed=0)
    m.classifier.load_state_dict({"weight": np.zeros((16, 5)), "bias": np.zeros(5)})
    p = m.classify(np.random.default_rng(0).standard_normal((2, 4, 16))).data
    np.testing.assert_allclose(p, 0.2, atol=1e-7)


@settings(max_examples=20, deadline=None)
@given(shift=st.floats(-50, 50), seed=st.integers(0, 1000))
def test_argmax_invariant_to_logit_shift(shift, seed):
    from seqdg.autodiff import functional as F

    z = np.random.default_rng(seed).standard_normal((3, 5))
    assert np.array_equal(F.softmax(Tensor(z)).data.argmax(-1), F.softmax(Tensor(z + shift)).data.argmax(-1))


def test_encode_is_batch_permutation_equivariant():
    m = SeqModel(SMALL, seed=1).eval()
    x = np.random.default_rng(4).standard_normal((5, 4, 32, 2)).astype(np.float32)
    perm = np.array([3, 0, 4, 1, 2])
    a = m.encode(x).features.data
    b = m.encode(x[perm]).features.data
    np.testing.assert_allclose(b, a[perm], rtol=0, atol=1e-6)


def test_epoch_encoder_is_shared_across_positions():
    m = SeqModel(SMALL, seed=2).eval()
    x = np.random.default_rng(5).standard_normal((1, 4, 32, 2)).astype(np.float32)
    x[0, 3] = x[0, 1]
    local = m.encode(x).pre_attention.data
    assert local[0, 1].tobytes() == local[0, 3].tobytes()


def test_config_validation_names_the_field():
    with pytest.raises(ContractError, match="heads"):
        ModelConfig(d=30, heads=4)
    with pytest.raises(ContractError, match="L"):
        ModelConfig(L=1)
    with pytest.raises(ContractError, match="n"):
        ModelConfig(n=100)


def test_paper_scale_preset():
    assert (PAPER_SCALE.n, PAPER_SCALE.C, PAPER_SCALE.L, PAPER_SCALE.d, PAPER_SCALE.N) == (3000, 2, 20, 512, 5)
    assert PAPER_SCALE.dropout == 0.1
    assert (DESK.n, DESK.C, DESK.L, DESK.d) == (256, 2, 8, 64)


def test_reconstruction_gradient_through_decoder():
    cfg = ModelConfig(n=16, C=2, L=3, d=8, conv_kernels=(3, 3, 3), conv_widths=(4, 4, 6), attn_layers=1,
                      heads=2, dropout=0.0, precision="f64")
    m = SeqModel(cfg, seed=0)
    rng = np.random.default_rng(0)
    randomize_decoder_output(m, rng)
    x = rng.standard_normal((2, 3, 16, 2))
    h = Tensor(rng.standard_normal((2, 3, 8)), requires_grad=True)
    params = [h] + m.decoder.parameters()
    err = check_gradients(lambda: Lo.reconstruction_loss(x, m.decode(h)), params, max_coords=6, rng=rng,
                          pooled=True)
    assert err < 1e-4


def test_decoder_output_starts_at_zero():
    m = SeqModel(SMALL, seed=0)
    h = np.random.default_rng(6).standard_normal((2, 4, 16))
    assert not m.decode(h).data.any()


def test_state_dict_round_trip():
    a, b = SeqModel(SMALL, seed=0), SeqModel(SMALL, seed=1)
    b.load_state_dict(a.state_dict())
    x = np.random.default_rng(0).standard_normal((2, 4, 32, 2)).astype(np.float32)
    assert a.eval().encode(x).features.data.tobytes() == b.eval().encode(x).features.data.tobytes()
    with pytest.raises(ContractError):
        b.load_state_dict({"nope": np.zeros(1)})
