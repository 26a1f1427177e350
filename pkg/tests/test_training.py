import numpy as np
import pytest

from skillgraph.config import Hyperparams
from skillgraph.data import SparseIncidence
from skillgraph.encoder import build_vocab
from skillgraph.model import init_model, predict_entry
from skillgraph.training import DivergenceError, Gradients, gradient, loss, sgd_step, train

from _fixtures import catalog, numeric_gradient, random_grad_instance, rank1_4x4, toy_3x2


def _params(model):
    return [model.H_o, model.H_s, *model.encoder.arrays()]


def _snapshot(model):
    return [p.copy() for p in _params(model)]


def _two_by_two(k=1):
    cat = catalog(2, 2)
    model = init_model(cat, build_vocab(cat.texts()), Hyperparams(k=k, encoder_enabled=False), 0)
    model.H_o[:] = 0.0
    model.H_s[:] = 0.0
    model.H_o[:, 0] = [0.5, 1.0]
    model.H_s[:, 0] = [1.0, 2.0]
    # demand 2.0 sits outside the ingestion range, so pass raw arrays
    data = (np.array([0, 1]), np.array([0, 1]), np.array([1.0, 2.0]))
    return model, data


class TestLoss:
    def test_hand_value(self):
        model, data = _two_by_two()
        assert predict_entry(model, 0, 0) == 0.5 and predict_entry(model, 1, 1) == 2.0
        assert loss(model, data) == pytest.approx(0.25, abs=1e-12)

    def test_zero_residual(self):
        _, _, model, _ = toy_3x2()
        data = SparseIncidence(
            [(i, j, 0.5) for i in range(3) for j in range(2)], 3, 2)
        model.H_o[:] = 0.0
        model.H_s[:] = 0.0
        model.encoder.filters[0][:] = 0.0
        model.encoder.filters[1][:] = 0.0
        model.encoder.biases[0][:] = np.sqrt(0.5)
        assert loss(model, data) == pytest.approx(0.0, abs=1e-15)

    def test_unobserved_perturbation(self):
        model, data = _two_by_two(k=2)
        before = loss(model, data)
        # second latent column touches only (0, 1) and (1, 0)
        model.H_o[0, 1] = 3.0
        model.H_s[1, 1] = -7.0
        assert predict_entry(model, 0, 1) != 1.0
        assert loss(model, data) == before

    def test_l2_term(self):
        model, data = _two_by_two()
        penalty = 0.5 ** 2 + 1.0 ** 2 + 1.0 ** 2 + 2.0 ** 2
        assert loss(model, data, l2=0.1) == pytest.approx(0.25 + 0.1 * penalty, abs=1e-12)


def _max_rel_error(model, data, l2=0.0):
    grads = gradient(model, data, l2)
    worst = 0.0
    for p, g in zip(_params(model), grads.arrays()):
        for idx in np.ndindex(p.shape):
            if p is model.encoder.embedding and idx[0] == 0:
                assert g[idx] == 0.0
                continue
            num = numeric_gradient(lambda: loss(model, data, l2), p, idx)
            err = abs(num - g[idx]) / max(abs(num), abs(g[idx]), 1e-8)
            worst = max(worst, err)
    return worst


@pytest.mark.parametrize("seed", range(6))
def test_gradient_matches_finite_differences(seed):
    model, data = random_grad_instance(seed)
    assert _max_rel_error(model, data) < 1e-4


@pytest.mark.parametrize("seed", [0, 1])
def test_gradient_with_l2(seed):
    model, data = random_grad_instance(seed)
    assert _max_rel_error(model, data, l2=0.3) < 1e-4


def test_gradient_no_activation():
    model, data = random_grad_instance(7)
    model.encoder.activation = "none"
    assert _max_rel_error(model, data) < 1e-4


def test_gradient_single_entry_closed_form():
    model, _ = random_grad_instance(2)
    model.encoder_enabled = False
    data = SparseIncidence([(1, 0, 0.6)], 3, 2)
    g = gradient(model, data)
    resid = predict_entry(model, 1, 0) - 0.6
    assert np.allclose(g.H_o[1], 2 * resid * model.H_s[0], rtol=0, atol=1e-15)
    assert np.allclose(g.H_s[0], 2 * resid * model.H_o[1], rtol=0, atol=1e-15)
    assert not g.H_o[[0, 2]].any()
    assert all(not a.any() for a in g.encoder.arrays())


def test_gradient_zero_for_unobserved_occupation():
    model, _ = random_grad_instance(3)
    data = SparseIncidence([(0, 0, 0.5), (2, 1, 0.9)], 3, 2)
    g = gradient(model, data)
    assert not g.H_o[1].any()


def test_frozen_encoder_zero_gradient():
    model, data = random_grad_instance(4)
    g = gradient(model, data, freeze_encoder=True)
    assert all(not a.any() for a in g.encoder.arrays())
    assert g.H_o.any()


class TestSGDStep:
    def test_lr_zero_identity(self):
        model, data = random_grad_instance(0)
        before = _snapshot(model)
        sgd_step(model, gradient(model, data), 0.0)
        assert all(a.tobytes() == b.tobytes() for a, b in zip(before, _params(model)))

    def test_scalar(self):
        model, _ = _two_by_two()
        model.H_o[0, 0] = 1.0
        grads = Gradients(np.zeros_like(model.H_o), np.zeros_like(model.H_s),
                          model.encoder.zeros_like())
        grads.H_o[0, 0] = 0.5
        sgd_step(model, grads, 0.1)
        assert model.H_o[0, 0] == pytest.approx(0.95, abs=1e-15)

    def test_non_finite(self):
        model, data = random_grad_instance(0)
        grads = gradient(model, data)
        grads.H_s[0, 0] = np.nan
        with pytest.raises(DivergenceError):
            sgd_step(model, grads, 0.1)

    def test_pad_row_and_frozen_untouched(self):
        model, data = random_grad_instance(1)
        grads = gradient(model, data)
        grads.encoder.embedding[0] = 1.0  # even a bogus PAD gradient is ignored
        enc_before = [a.copy() for a in model.encoder.arrays()]
        sgd_step(model, grads, 0.1, freeze_encoder=True)
        assert all(np.array_equal(a, b) for a, b in zip(enc_before, model.encoder.arrays()))
        sgd_step(model, grads, 0.1)
        assert not model.encoder.embedding[0].any()

    def test_full_batch_step_descends(self):
        _, _, model, data = toy_3x2()
        before = loss(model, data)
        sgd_step(model, gradient(model, data), 1e-3)
        assert loss(model, data) < before


class TestTrain:
    def test_zero_epochs(self):
        _, hp, model, data = toy_3x2()
        before = _snapshot(model)
        out, trace = train(model, data, hp.replace(epochs=0))
        assert len(trace) == 0
        assert all(a.tobytes() == b.tobytes() for a, b in zip(before, _params(out)))

    def test_descent_first_ten_epochs(self):
        _, hp, model, data = toy_3x2()
        _, trace = train(model, data, hp.replace(epochs=10, lr=1e-3, batch_mode="full-batch"))
        assert len(trace) == 10
        assert all(b <= a for a, b in zip(trace.values, trace.values[1:]))

    def test_rank1_recovery(self):
        cat, inc, _ = rank1_4x4()
        hp = Hyperparams(k=2, encoder_enabled=False, lr=0.05, batch_mode="full-batch", epochs=2000)
        model = init_model(cat, build_vocab(cat.texts()), hp, 0)
        _, trace = train(model, inc, hp)
        assert trace[-1] < 1e-3

    @pytest.mark.parametrize("mode", ["per-edge", "full-batch"])
    def test_deterministic(self, mode):
        traces, params = [], []
        for _ in range(2):
            _, hp, model, data = toy_3x2(epochs=30, batch_mode=mode, seed=11)
            model, trace = train(model, data, hp)
            traces.append(trace.values)
            params.append(b"".join(p.tobytes() for p in _params(model)))
        assert traces[0] == traces[1]
        assert params[0] == params[1]

    def test_shuffle_seed_matters(self):
        results = []
        for seed in (1, 2):
            _, hp, model, data = toy_3x2(epochs=5, seed=seed)
            results.append(train(model, data, hp)[1].values)
        assert results[0] != results[1]

    def test_frozen_encoder_bit_identical(self):
        _, hp, model, data = toy_3x2(epochs=20, freeze_encoder=True)
        before = [a.copy() for a in model.encoder.arrays()]
        train(model, data, hp)
        assert all(a.tobytes() == b.tobytes() for a, b in zip(before, model.encoder.arrays()))

    @pytest.mark.parametrize("mode", ["per-edge", "full-batch"])
    def test_untouched_occupation(self, mode):
        _, hp, model, _ = toy_3x2(epochs=40, batch_mode=mode)
        data = SparseIncidence([(0, 0, 0.9), (2, 1, 0.4), (0, 1, 0.2)], 3, 2)
        row = model.H_o[1].copy()
        train(model, data, hp)
        assert model.H_o[1].tobytes() == row.tobytes()

    def test_trace_non_negative_and_written(self, tmp_path):
        _, hp, model, data = toy_3x2(epochs=5, l2=0.01)
        path = tmp_path / "trace.tsv"
        _, trace = train(model, data, hp, trace_path=path)
        assert all(v >= 0 for v in trace)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch\tloss"
        assert [float(line.split("\t")[1]) for line in lines[1:]] == trace.values

    def test_divergence_reports_epoch(self):
        _, hp, model, data = toy_3x2(epochs=200, lr=1e3, batch_mode="full-batch")
        model.H_o[:] = 1.0
        model.H_s[:] = 1.0
        with pytest.raises(DivergenceError, match="epoch") as exc:
            train(model, data, hp)
        assert exc.value.epoch >= 1

    def test_empty_data(self):
        _, hp, model, _ = toy_3x2()
        with pytest.raises(ValueError):
            train(model, SparseIncidence([], 3, 2), hp)
