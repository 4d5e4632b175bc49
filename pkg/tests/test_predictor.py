import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import sinusoid, small_cfg, train_on
from fnpc import dsp, metrics
from fnpc.config import CodecConfig, PredictorConfig
from fnpc.predictor import (
    DivergenceError,
    FrameCode,
    MappingModel,
    as_f32,
    build_training_set,
    code_frame,
    coding_gradients,
    forward,
    gradient_check,
    hidden_activations,
    init_layer,
    loss,
    mapping_gradients,
    predict_frame,
    teacher_forced,
    train_mapping,
)


def random_model(hidden=7, window=40, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    cfg = CodecConfig(PredictorConfig(num_codes=hidden + 1, pred_window=window))
    return MappingModel(
        rng.standard_normal((hidden, window)) * scale / np.sqrt(window),
        rng.standard_normal(hidden) * 0.1,
        dsp.NormStats(0.0, 1.0),
        cfg,
    )


def sine_frames(count=20, phase=0.0):
    x = sinusoid(seconds=0.5, phase=phase)
    frames = dsp.frame_signal(x)
    stats = dsp.compute_norm_stats(x)
    return dsp.normalize(frames, stats)[:count]


# -------------------------------------------------------- training pairs


def test_training_set_size_default_window():
    inputs, targets = build_training_set(np.arange(256.0), 40)
    assert inputs.shape == (216, 40) and targets.shape == (216,)


def test_training_set_smallest_case():
    inputs, targets = build_training_set([1.0, 2.0, 3.0], 2)
    np.testing.assert_array_equal(inputs, [[2.0, 1.0]])
    np.testing.assert_array_equal(targets, [3.0])


def test_training_set_boundary_and_error():
    inputs, _ = build_training_set(np.arange(41.0), 40)
    assert inputs.shape == (1, 40)
    with pytest.raises(ValueError, match="frame shorter than prediction window"):
        build_training_set(np.arange(40.0), 40)


@given(st.integers(2, 60), st.integers(1, 30))
def test_training_set_most_recent_first(n, l):
    if n <= l:
        return
    x = np.arange(float(n))
    inputs, targets = build_training_set(x, l)
    assert len(targets) == n - l
    for row, target in zip(inputs, targets):
        k = int(target)
        np.testing.assert_array_equal(row, x[k - l : k][::-1])


# -------------------------------------------------------------- forward


def test_forward_zero_network():
    model = MappingModel(np.zeros((3, 5)), np.zeros(3), dsp.NormStats(0, 1),
                         CodecConfig(PredictorConfig(4, pred_window=5)))
    y, hidden, v = forward(model, np.zeros(3), 0.0, np.ones(5))
    assert y == 0.0 and v == 0.0 and np.all(hidden == 0)


def test_forward_hand_computed():
    model = MappingModel(np.eye(2), np.zeros(2), dsp.NormStats(0, 1),
                         CodecConfig(PredictorConfig(3, pred_window=2)))
    y, hidden, v = forward(model, [1.0, 1.0], 0.5, [0.5, -0.5])
    np.testing.assert_allclose(hidden, [np.tanh(0.5), np.tanh(-0.5)])
    assert y == pytest.approx(0.5, abs=1e-15)


def test_forward_dimension_mismatch():
    model = random_model(3, 5)
    with pytest.raises(ValueError, match="dimension mismatch"):
        forward(model, np.zeros(3), 0.0, np.zeros(4))


def test_trained_code_beats_zero_head(sine_model):
    frame = sine_frames(1)[0]
    code = code_frame(sine_model, frame, 0)
    inputs, targets = build_training_set(frame, 40)
    trained = [forward(sine_model, code.w2, code.output_bias, x)[0] for x in inputs]
    zero = [forward(sine_model, np.zeros(15), 0.0, x)[0] for x in inputs]
    assert loss(trained, targets) < loss(zero, targets)


# ----------------------------------------------------------------- loss


def test_loss_examples():
    assert loss([0.3, 0.4], [0.3, 0.4]) == 0.0
    assert loss([0.0, 0.0], [1.0, -1.0]) == 1.0
    with pytest.raises(ValueError):
        loss([], [])
    with pytest.raises(ValueError):
        loss([1.0], [1.0, 2.0])


@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=1, max_size=50))
def test_loss_matches_direct_sum(pairs):
    p, t = zip(*pairs)
    expected = 0.0
    for a, b in pairs:
        expected += (b - a) ** 2
    assert loss(p, t) == pytest.approx(expected / 2, rel=1e-12, abs=1e-12)


# ------------------------------------------------------------ gradients


def test_gradient_check_40_input_7_hidden():
    model = random_model(7, 40, seed=3)
    rng = np.random.default_rng(4)
    inputs = rng.standard_normal((60, 40))
    targets = rng.standard_normal(60)
    err = gradient_check(model, rng.standard_normal(7) * 0.5, 0.1, (inputs, targets), 1e-5)
    assert err < 1e-5


def test_output_bias_gradient_closed_form():
    model = random_model(4, 10, seed=1)
    rng = np.random.default_rng(2)
    inputs, targets = rng.standard_normal((30, 10)), rng.standard_normal(30)
    w2 = rng.standard_normal(4)
    z = hidden_activations(model.w1, model.hidden_bias, inputs)
    e = targets - (z @ w2 + 0.3)
    _, g_b2 = coding_gradients(z, targets, w2, 0.3)
    assert g_b2 == -np.sum(e)


def test_zero_error_gives_zero_gradients():
    model = random_model(4, 10, seed=1)
    rng = np.random.default_rng(2)
    inputs = rng.standard_normal((30, 10))
    w2 = rng.standard_normal(4)
    targets = hidden_activations(model.w1, model.hidden_bias, inputs) @ w2 + 0.2
    grads = mapping_gradients(model.w1, model.hidden_bias, w2, 0.2, inputs, targets)
    for g in grads:
        assert np.max(np.abs(g)) < 1e-12


# -------------------------------------------------------- mapping phase


def test_zero_epochs_returns_initialization():
    cfg = small_cfg(8, map_epochs=0, rng_seed=11)
    x = dsp.normalize(sinusoid(seconds=0.1), dsp.NormStats(0.0, 0.35))
    model = train_mapping(x, dsp.NormStats(0.0, 0.35), cfg)
    rng = np.random.default_rng(11)
    np.testing.assert_array_equal(model.w1, as_f32(init_layer(rng, 7, 40)))


def test_mapping_converges_on_sinusoid():
    cfg = small_cfg(16, map_epochs=4)
    model = train_on(sinusoid(seconds=0.5), cfg)
    assert len(model.loss_history) == 4
    assert model.loss_history[-1] < model.loss_history[0]


def test_mapping_deterministic():
    x = sinusoid(seconds=0.3)
    a = train_on(x, small_cfg(8, rng_seed=5))
    b = train_on(x, small_cfg(8, rng_seed=5))
    assert a.same_weights(b)
    assert a.w1.tobytes() == b.w1.tobytes()


def test_mapping_divergence_is_reported():
    x = np.random.default_rng(0).standard_normal(5000) * 50
    with pytest.raises(DivergenceError, match="divergence"):
        train_mapping(x, dsp.NormStats(0, 1), small_cfg(8, map_learning_rate=10.0, map_epochs=3))


def test_mapping_stream_too_short():
    with pytest.raises(ValueError):
        train_mapping(np.zeros(40), dsp.NormStats(0, 1), small_cfg(8))


# --------------------------------------------------------- coding phase


def test_coding_leaves_first_layer_untouched(sine_model):
    w1 = sine_model.w1.tobytes()
    bias = sine_model.hidden_bias.tobytes()
    code_frame(sine_model, sine_frames(1)[0], 0)
    assert sine_model.w1.tobytes() == w1
    assert sine_model.hidden_bias.tobytes() == bias


def test_coding_converges_on_sinusoid(sine_model):
    code = code_frame(sine_model, sine_frames(3)[2], 2)
    hist = code.loss_history
    assert hist[-1] < 0.5 * hist[0]


def test_code_payload_size(sine_model):
    code = code_frame(sine_model, sine_frames(1)[0], 0)
    assert code.num_params == 16
    assert code.w2.shape == (15,) and code.seed.shape == (40,)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 1.0))
def test_coding_loss_never_increases(seed, rate):
    model = random_model(7, 40, seed=seed % 1000)
    frame = np.random.default_rng(seed).standard_normal(256)
    cfg = CodecConfig(PredictorConfig(num_codes=8, code_learning_rate=rate, code_iterations=50))
    hist = np.array(code_frame(model, frame, 0, cfg).loss_history)
    assert np.all(np.diff(hist) <= 1e-9 * hist[:-1])


def test_coding_deterministic_per_frame_index(sine_model):
    frame = sine_frames(1)[0]
    a = code_frame(sine_model, frame, 3)
    b = code_frame(sine_model, frame, 3)
    assert a.same_as(b)


# -------------------------------------------------------------- decoder


def test_predict_frame_shape_and_zero_head(sine_model):
    seed = np.linspace(-1, 1, 40)
    code = FrameCode(np.zeros(15), 0.0, seed, 0)
    out = predict_frame(sine_model, code)
    assert out.shape == (256,)
    np.testing.assert_array_equal(out[:40], seed)
    assert np.all(out[40:] == 0.0)


def test_free_run_close_to_teacher_forcing_on_sinusoid(sine_model):
    # unwindowed sinusoid: the coding loss gets to ~0, unlike a tapered frame
    frame = dsp.normalize(sinusoid(seconds=0.1)[300:556], sine_model.norm)
    code = code_frame(sine_model, frame, 4)
    assert code.loss_history[-1] < 1e-3 * code.loss_history[0]
    free = predict_frame(sine_model, code)
    forced = teacher_forced(sine_model, code, frame)
    free_db, _ = metrics.segsnr(frame, free)
    forced_db, _ = metrics.segsnr(frame, forced)
    assert free_db > forced_db - 10.0


def test_predict_frame_rejects_bad_code(sine_model):
    with pytest.raises(ValueError):
        predict_frame(sine_model, FrameCode(np.zeros(3), 0.0, np.zeros(40), 0))
