import numpy as np
import pytest

from scae.nn import Adam
from scae.model import DivergedError, DropoutSpec, ModelConfig, build_model
from scae.tensor import Xoshiro256
from scae.train import (CheckpointError, EarlyStopping, TrainConfig, TrainHistory, load_checkpoint,
                        rng_streams, save_checkpoint, save_training_state, train)

SHAPE = (16, 16)


def tiny(cfg=ModelConfig(latent_dim=32, output_activation="sigmoid"), seed=0):
    return build_model(cfg, seed, SHAPE, np.float64)


def data(n=6, seed=1):
    return Xoshiro256(seed).random((n, *SHAPE))


def scripted(values):
    it = iter(values)
    return lambda model: next(it)


def test_early_stopping_counter():
    es = EarlyStopping(patience=2)
    assert es.update(1, 1.0) == (True, False)
    assert es.update(2, 1.0 - 1e-7) == (False, False)  # below min_delta
    assert es.update(3, 2.0) == (False, True)
    assert es.best_epoch == 1


def test_plateau_stops_patience_after_best_and_restores_snapshot():
    model = tiny()
    plateau = [1.0, 0.8, 0.6, 0.5, 0.4] + [0.45] * 30
    snaps = {}
    cfg = TrainConfig(batch_size=3, max_epochs=100, patience=10)
    model, hist, state = train(model, data(), None, cfg, val_loss_fn=scripted(plateau),
                               on_epoch_end=lambda e, m, h: snaps.__setitem__(e, m.snapshot()))
    assert hist.epochs == 15 and hist.stopped_epoch == 15
    assert hist.best_epoch == 5 and hist.early_stopped
    for k, v in model.params.items():
        assert np.array_equal(v, snaps[5][k])
        assert np.array_equal(state.final_params[k], snaps[15][k])
    assert any(not np.array_equal(snaps[5][k], snaps[15][k]) for k in snaps[5])


def test_patience_none_runs_all_epochs():
    cfg = TrainConfig(batch_size=4, max_epochs=7, patience=None)
    _, hist, _ = train(tiny(), data(), None, cfg, val_loss_fn=scripted([1.0] * 7))
    assert hist.epochs == 7 and not hist.early_stopped and hist.best_epoch == 1


def test_single_sample_loss_decreases():
    x = data(1)
    _, hist, _ = train(tiny(), x, None, TrainConfig(batch_size=1, max_epochs=200, patience=None, lr=0.003))
    assert hist.train_loss[-1] < 0.3 * hist.train_loss[0]
    assert hist.val_loss[-1] < hist.val_loss[0]


def test_epoch_loss_weights_partial_batches():
    # 5 samples, batch 4: the second batch of one sample counts with weight 1/5
    model, X = tiny(), data(5)
    ref = tiny()
    _, hist, _ = train(model, X, None, TrainConfig(batch_size=4, max_epochs=1, shuffle=False))
    l1, g = ref.forward_backward(X[:4])
    opt = Adam(0.001)
    opt.step(ref.params, g)
    l2, _ = ref.forward_backward(X[4:])
    assert hist.train_loss[0] == pytest.approx((4 * l1 + l2) / 5, rel=1e-12)


def test_training_is_deterministic():
    cfg = TrainConfig(batch_size=2, max_epochs=3, seed=5)
    drop = ModelConfig(latent_dim=32, dropout=DropoutSpec(0.3, "both"))
    a = train(tiny(drop), data(), data(2, 9), cfg)[1]
    b = train(tiny(drop), data(), data(2, 9), cfg)[1]
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == "epoch,train_loss,val_loss"
    assert a.timing_csv().splitlines()[0] == "epoch,seconds"


def test_rng_streams_are_independent():
    s = rng_streams(0)
    draws = [s[k].random(4).tolist() for k in ("init", "shuffle", "dropout")]
    assert len({tuple(d) for d in draws}) == 3


def test_checkpoint_round_trip(tmp_path):
    model, hist, state = train(tiny(), data(), None, TrainConfig(batch_size=3, max_epochs=2))
    save_checkpoint(tmp_path / "c.scae", model, state.optimizer, hist, shuffle_rng=state.shuffle_rng,
                    extra={"note": "x"})
    ck = load_checkpoint(tmp_path / "c.scae")
    for k, v in model.params.items():
        assert np.array_equal(ck.model.params[k], v)
        assert np.array_equal(ck.optimizer.m[k], state.optimizer.m[k])
    assert ck.optimizer.t == state.optimizer.t
    assert ck.history == hist and ck.meta["note"] == "x"
    assert ck.shuffle_rng.state == state.shuffle_rng.state


def test_resume_matches_uninterrupted_run(tmp_path):
    drop = ModelConfig(latent_dim=32, dropout=DropoutSpec(0.3, "both"))
    X, V = data(), data(2, 9)
    full_model, full, _ = train(tiny(drop), X, V, TrainConfig(batch_size=4, max_epochs=5))
    half_model, half, state = train(tiny(drop), X, V, TrainConfig(batch_size=4, max_epochs=2))
    save_training_state(tmp_path / "last.scae", half_model, state)
    ck = load_checkpoint(tmp_path / "last.scae")
    cfg = TrainConfig(batch_size=4, max_epochs=5)
    resumed_model, resumed, _ = train(ck.model, X, V, cfg, state=ck.train_state(cfg))
    assert resumed.to_csv() == full.to_csv()
    assert resumed.best_epoch == full.best_epoch
    for k, v in full_model.params.items():
        assert np.array_equal(resumed_model.params[k], v)


def test_checkpoint_errors(tmp_path):
    model, hist, state = train(tiny(), data(), None, TrainConfig(max_epochs=1))
    path = tmp_path / "c.scae"
    save_checkpoint(path, model, state.optimizer, hist)
    raw = path.read_bytes()
    (tmp_path / "t.scae").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "t.scae")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.scae")


def test_divergence_keeps_last_good_checkpoint(tmp_path):
    path = tmp_path / "last_good.scae"
    snaps = {}
    with pytest.raises(DivergedError, match=str(path)):
        train(tiny(), data(), None, TrainConfig(batch_size=3, max_epochs=10),
              val_loss_fn=scripted([1.0, 0.5, float("nan")]), checkpoint_path=path,
              on_epoch_end=lambda e, m, h: snaps.__setitem__(e, m.snapshot()))
    ck = load_checkpoint(path)
    for k, v in ck.model.params.items():
        assert np.array_equal(v, snaps[2][k])


def test_nan_input_diverges():
    X = data()
    X[0, 0, 0] = np.nan
    with pytest.raises(DivergedError, match="epoch 1"):
        train(tiny(), X, None, TrainConfig(max_epochs=2))


def test_config_validation():
    for bad in (dict(batch_size=0), dict(patience=0), dict(max_epochs=-1)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    with pytest.raises(ValueError):
        train(tiny(), np.zeros((0, *SHAPE)), None)
    h = TrainHistory([1.0, 0.5], [0.9, 0.4], [0.1, 0.1], 2, 2)
    assert TrainHistory.from_dict(h.to_dict()) == h and h.best_val == 0.4
