#!/usr/bin/env python3
"""
测试训练循环、优化器、L2 正则和超参数网格搜索
"""

import numpy as np
import pandas as pd
import pytest

from fusion_lab.data.folds import Fold, RatingArrays
from fusion_lab.data.genome import FeatureCatalog
from fusion_lab.data.movielens import RatingRecord
from fusion_lab.errors import ShapeMismatchError, TrainingDivergedError, UsageError
from fusion_lab.models import ModelKind, init_model
from fusion_lab.models.model_manager import mse_loss_and_gradients
from fusion_lab.numerics import SeededRng
from fusion_lab.training import SGD, Adam, HyperParams, OptimizerName, grid_search, make_optimizer, predict_arrays, train
from fusion_lab.training.trainer import apply_l2, l2_strengths

TOY_RATINGS = [1.0, 2.0, 3.0, 4.0, 5.0, 5.0, 4.0, 3.0, 2.0, 1.0]


def one_hot_catalog(n_items: int) -> FeatureCatalog:
    """每部电影一个 one-hot 特征"""
    return FeatureCatalog([f"tag{i}" for i in range(n_items)], np.arange(1, n_items + 1), np.eye(n_items))


def toy_arrays() -> RatingArrays:
    n = len(TOY_RATINGS)
    return RatingArrays(np.zeros(n, dtype=np.int64), np.arange(1, n + 1), np.array(TOY_RATINGS))


def toy_fold() -> Fold:
    """两个用户、十部电影的调参划分"""
    train_records = [RatingRecord(1, i + 1, r) for i, r in enumerate(TOY_RATINGS)]
    train_records += [RatingRecord(2, i + 1, 6.0 - r) for i, r in enumerate(TOY_RATINGS[:5])]
    valid_records = [RatingRecord(2, i + 1, 6.0 - r) for i, r in enumerate(TOY_RATINGS) if i >= 5]
    return Fold.from_records(0, train_records, valid_records, item_ids=range(1, 11))


def mse(model, arrays, catalog) -> float:
    return float(np.mean((predict_arrays(model, arrays, catalog) - arrays.ratings) ** 2))


def test_linear_memorizes_toy_set():
    """10 条评分、200 轮全批量训练后 MSE < 1e-3"""
    catalog = one_hot_catalog(10)
    arrays = toy_arrays()
    model = init_model(ModelKind.LINEAR, 0, SeededRng(0), n_features=10, n_users=1)
    hp = HyperParams(learning_rate=0.5, epochs=200, batch_size=10)
    model, trace = train(model, arrays, catalog, hp)
    assert len(trace.losses) == 200
    assert len(trace.seconds) == 200
    assert trace.losses[-1] < trace.losses[0]
    assert mse(model, arrays, catalog) < 1e-3
    assert trace.model_hash == model.fingerprint()


def test_training_is_deterministic():
    """相同的初始化种子和 hp.seed 得到逐位相同的参数"""
    catalog = one_hot_catalog(10)
    arrays = toy_arrays()
    hp = HyperParams(learning_rate=0.05, epochs=5, batch_size=3, seed=9)

    def run(train_seed):
        model = init_model(ModelKind.ADDITIVE_MASK, 2, SeededRng(4), n_features=10, n_users=1)
        model, _ = train(model, arrays, catalog, hp.model_copy(update={"seed": train_seed}))
        return model.fingerprint()

    assert run(9) == run(9)
    assert run(9) != run(10)


def test_training_accepts_records_with_user_index():
    """评分记录列表需要配合 user_index"""
    catalog = one_hot_catalog(10)
    records = [RatingRecord(7, i + 1, r) for i, r in enumerate(TOY_RATINGS)]
    hp = HyperParams(learning_rate=0.1, epochs=2, batch_size=4)
    model = init_model(ModelKind.TENSOR_FUSION, 2, SeededRng(0), n_features=10, n_users=1)
    train(model, records, catalog, hp, user_index={7: 0})
    with pytest.raises(UsageError):
        train(model, records, catalog, hp)
    with pytest.raises(UsageError):
        train(model, [], catalog, hp, user_index={7: 0})


def test_feature_dimension_checked():
    """特征维度与模型不一致时报错"""
    model = init_model(ModelKind.LINEAR, 0, SeededRng(0), n_features=4, n_users=1)
    with pytest.raises(ShapeMismatchError):
        train(model, toy_arrays(), one_hot_catalog(10), HyperParams(epochs=1))


def test_divergence_names_epoch_and_learning_rate():
    """学习率过大时报告发散的轮次和学习率"""
    catalog = one_hot_catalog(10)
    model = init_model(ModelKind.LINEAR, 0, SeededRng(0), n_features=10, n_users=1)
    hp = HyperParams(learning_rate=1e6, epochs=50, batch_size=1)
    with pytest.raises(TrainingDivergedError) as excinfo:
        train(model, toy_arrays(), catalog, hp)
    assert excinfo.value.learning_rate == 1e6
    assert 1 <= excinfo.value.epoch <= 50
    assert "1000000" in str(excinfo.value)


def test_user_bias_training_uses_statistics():
    """user-bias 只统计用户平均分，每轮损失相同"""
    catalog = one_hot_catalog(10)
    arrays = toy_arrays()
    model = init_model(ModelKind.USER_BIAS, 0, SeededRng(0), n_features=10, n_users=2)
    model, trace = train(model, arrays, catalog, HyperParams(epochs=3))
    assert model.params["user_mean"][0] == pytest.approx(3.0)
    # 没有训练评分的用户取全局平均
    assert model.params["user_mean"][1] == pytest.approx(3.0)
    assert trace.losses == [trace.losses[0]] * 3


def test_small_full_batch_step_does_not_increase_loss():
    """凸问题上小步长的一次全批量更新不会增大 MSE"""
    catalog = one_hot_catalog(10)
    arrays = toy_arrays()
    model = init_model(ModelKind.LINEAR, 0, SeededRng(3), n_features=10, n_users=1)
    model.fit_statistics(arrays.users, arrays.ratings)
    before = mse(model, arrays, catalog)
    _, grads = mse_loss_and_gradients(model, catalog.matrix, arrays.users, arrays.ratings)
    SGD(1e-3).step(model.params, grads)
    assert mse(model, arrays, catalog) <= before


def test_l2_strengths_and_penalty():
    """FM 总是正则化；神经网络模型需要 regularize_neural"""
    hp = HyperParams(l2_weights=0.1, l2_embeddings=0.2)
    fm = init_model(ModelKind.FACTORIZATION_MACHINE, 2, SeededRng(0), n_features=4, n_users=3)
    tensor = init_model(ModelKind.TENSOR_FUSION, 2, SeededRng(0), n_features=4, n_users=3)
    assert l2_strengths(fm, hp) == {"W": 0.1, "V": 0.2}
    assert l2_strengths(tensor, hp) == {}
    assert l2_strengths(tensor, hp.model_copy(update={"regularize_neural": True})) == {
        "W": 0.1, "T": 0.1, "u_b": 0.1, "E": 0.2,
    }
    assert l2_strengths(fm, HyperParams()) == {}

    grads = {name: np.zeros_like(value) for name, value in fm.params.items()}
    penalty = apply_l2(fm.params, grads, {"W": 0.1})
    assert penalty == pytest.approx(0.1 * float(np.sum(fm.params["W"] ** 2)))
    np.testing.assert_allclose(grads["W"], 0.2 * fm.params["W"])
    assert np.all(grads["V"] == 0.0)


def test_fm_zero_l2_reproduces_unregularized_training():
    """L2 系数为 0 时与不加正则完全相同"""
    catalog = one_hot_catalog(10)
    arrays = toy_arrays()

    def run(hp):
        model = init_model(ModelKind.FACTORIZATION_MACHINE, 2, SeededRng(5), n_features=10, n_users=1)
        return train(model, arrays, catalog, hp)[0].fingerprint()

    base = HyperParams(learning_rate=0.05, epochs=3, batch_size=4)
    assert run(base) == run(base.model_copy(update={"l2_weights": 0.0, "l2_embeddings": 0.0}))
    assert run(base) != run(base.model_copy(update={"l2_weights": 0.5}))


def test_optimizers():
    """SGD 和 Adam 都按梯度方向更新参数"""
    assert isinstance(make_optimizer(HyperParams()), SGD)
    assert isinstance(make_optimizer(HyperParams(optimizer=OptimizerName.ADAM)), Adam)

    params = {"w": np.array([1.0, -1.0])}
    SGD(0.5).step(params, {"w": np.array([2.0, -2.0])})
    np.testing.assert_array_equal(params["w"], [0.0, 0.0])

    params = {"w": np.array([1.0, -1.0])}
    adam = Adam(0.1)
    adam.step(params, {"w": np.array([4.0, -0.5])})
    # 第一步经偏差修正后步长约等于学习率
    np.testing.assert_allclose(params["w"], [0.9, -0.9], atol=1e-6)

    catalog = one_hot_catalog(10)
    arrays = toy_arrays()
    model = init_model(ModelKind.MULTIPLICATIVE_MASK, 2, SeededRng(0), n_features=10, n_users=1)
    before = mse(model, arrays, catalog)
    model, _ = train(model, arrays, catalog,
                     HyperParams(learning_rate=0.01, epochs=30, batch_size=10, optimizer=OptimizerName.ADAM))
    assert mse(model, arrays, catalog) < before


def test_hyperparams_validation():
    """学习率、轮数、批量大小的约束"""
    with pytest.raises(ValueError):
        HyperParams(learning_rate=0.0)
    with pytest.raises(ValueError):
        HyperParams(epochs=0)
    with pytest.raises(ValueError):
        HyperParams(batch_size=0)
    assert "lr=0.01" in HyperParams().describe()


def test_trace_csv(tmp_path):
    """训练记录 CSV 以超参数注释行开头"""
    catalog = one_hot_catalog(10)
    model = init_model(ModelKind.LINEAR, 0, SeededRng(0), n_features=10, n_users=1)
    hp = HyperParams(learning_rate=0.1, epochs=4, batch_size=5)
    _, trace = train(model, toy_arrays(), catalog, hp)
    path = trace.save_csv(tmp_path / "trace.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == f"# {hp.describe()}"
    assert lines[1] == "epoch,loss,seconds"
    frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    assert frame["epoch"].tolist() == [1, 2, 3, 4]
    assert frame["loss"].tolist() == trace.losses


def test_grid_search_single_point_and_empty_grid():
    """单点网格返回该点；空网格报错"""
    catalog = one_hot_catalog(10)
    fold = toy_fold()
    hp = HyperParams(learning_rate=0.05, epochs=3)
    result = grid_search(ModelKind.LINEAR, 0, [hp], fold, catalog)
    assert result.best == hp
    assert result.best_index == 0
    with pytest.raises(UsageError):
        grid_search(ModelKind.LINEAR, 0, [], fold, catalog)


def test_grid_search_tie_break(tmp_path):
    """RMSE 相同时学习率小者优先，其次轮数少者"""
    catalog = one_hot_catalog(10)
    fold = toy_fold()
    grid = [
        HyperParams(learning_rate=0.1, epochs=5),
        HyperParams(learning_rate=0.01, epochs=5),
        HyperParams(learning_rate=0.01, epochs=2),
        HyperParams(learning_rate=0.05, epochs=1),
    ]
    result = grid_search(ModelKind.USER_BIAS, 0, grid, fold, catalog, results_path=tmp_path / "grid.csv")
    assert len({p.rmse for p in result.points}) == 1
    assert result.best == grid[2]
    frame = pd.read_csv(tmp_path / "grid.csv")
    assert frame["selected"].tolist() == [False, False, True, False]
    assert list(frame["learning_rate"]) == [0.1, 0.01, 0.01, 0.05]


def test_grid_search_marks_divergent_points():
    """发散的网格点被标记，选择未发散的点"""
    catalog = one_hot_catalog(10)
    fold = toy_fold()
    grid = [
        HyperParams(learning_rate=1e6, epochs=20, batch_size=1),
        HyperParams(learning_rate=1e-3, epochs=20, batch_size=1),
    ]
    result = grid_search(ModelKind.LINEAR, 0, grid, fold, catalog)
    assert result.points[0].diverged
    assert result.points[0].rmse is None
    assert not result.points[1].diverged
    assert result.best == grid[1]

    with pytest.raises(TrainingDivergedError):
        grid_search(ModelKind.LINEAR, 0, grid[:1], fold, catalog)
