import json
import os
import shutil
import tempfile
import unittest

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import logit

from src.core.errors import ConfigError, DatasetError, TrainingError
from src.dataset import Feature, Source
from src.imaging import BinaryMask, RasterImage, touches_border
from src.mtl import (
    PARAM_NAMES,
    REGRESSION_PARAMS,
    Auxiliary,
    Batch,
    BlockScaler,
    FeatureVector,
    ModelParams,
    SynthParams,
    TrainConfig,
    TrainingData,
    auc,
    backward,
    build_feature_set,
    build_features,
    class_weights,
    cross_validate,
    describe,
    descriptor_dim,
    ensemble_predict,
    forward,
    generate_synthetic,
    init_params,
    init_state,
    load_model,
    load_vectors,
    loss,
    member_name,
    numerical_gradient,
    parse_auxiliaries,
    render_synthetic_lesion,
    rmsprop_step,
    roc_curve,
    save_model,
    save_vectors,
    split_sizes,
    stratified_splits,
    train,
)
from src.stats import pearson
from raster_factory import disk, solid_image


def zero_params(d: int = 3, hidden=(2, 2)) -> ModelParams:
    h1, h2 = hidden
    return ModelParams(
        W1=np.zeros((d, h1)), b1=np.zeros(h1),
        W2=np.zeros((h1, h2)), b2=np.zeros(h2),
        Wc=np.zeros((h2, 1)), bc=np.zeros(1),
        Wr=np.zeros((h2, 1)), br=np.zeros(1),
    )


def separable_data(n: int = 200, d: int = 6, seed: int = 0) -> TrainingData:
    """第一维按标签分开的线性可分数据"""
    rng = np.random.default_rng(seed)
    labels = (rng.random(n) < 0.4).astype(int)
    labels[:2] = (0, 1)
    x = rng.normal(size=(n, d))
    x[:, 0] = np.where(labels == 1, 1.0, -1.0) * (0.5 + np.abs(rng.normal(size=n)))
    return TrainingData(tuple(f"s{i:04d}" for i in range(n)), x, labels)


def random_batch(rng: np.random.Generator, n: int, d: int) -> Batch:
    return Batch(
        x=rng.normal(size=(n, d)),
        labels=rng.integers(0, 2, size=n),
        annotations=rng.normal(size=n),
        available=rng.random(n) < 0.6,
    )


class TestTrainConfig(unittest.TestCase):
    """测试训练配置"""

    def test_defaults(self):
        config = TrainConfig()
        self.assertEqual((config.epochs, config.batch_size), (30, 20))
        self.assertEqual(config.learning_rate, 2e-5)
        self.assertEqual(config.k_folds, 5)
        self.assertEqual(config.split_ratios, (0.70, 0.175, 0.125))
        self.assertTrue(config.is_baseline)
        self.assertEqual(config.members, (None,))

    def test_invalid_values(self):
        with self.assertRaises(ConfigError):
            TrainConfig(split_ratios=(0.7, 0.2, 0.2))
        with self.assertRaises(ConfigError):
            TrainConfig(epochs=0)
        with self.assertRaises(ConfigError):
            TrainConfig(rmsprop_decay=1.0)
        with self.assertRaises(ConfigError):
            TrainConfig(k_folds=1)

    def test_several_auxiliaries_need_ensemble(self):
        with self.assertRaises(ConfigError):
            TrainConfig(auxiliaries="auto:A,auto:B")
        config = TrainConfig(auxiliaries="auto:A,auto:B,auto:C", ensemble=True)
        self.assertEqual([a.label for a in config.members], ["auto:A", "auto:B", "auto:C"])

    def test_dict_round_trip(self):
        config = TrainConfig(epochs=3, auxiliaries=["crowd:b"], learning_rate=1e-3)
        self.assertEqual(TrainConfig.from_dict(config.to_dict()), config)
        self.assertEqual(config.to_dict()["auxiliaries"], ["crowd:B"])
        with self.assertRaises(ConfigError):
            TrainConfig.from_dict({"epoch": 3})

    def test_overrides_skip_none(self):
        config = TrainConfig().with_overrides(epochs=4, learning_rate=None)
        self.assertEqual(config.epochs, 4)
        self.assertEqual(config.learning_rate, 2e-5)

    def test_auxiliary_parse(self):
        self.assertEqual(Auxiliary.parse(" Student:c "), Auxiliary(Source.STUDENT, Feature.C))
        self.assertEqual(parse_auxiliaries("auto:A,,crowd:B"), (
            Auxiliary(Source.AUTO, Feature.A), Auxiliary(Source.CROWD, Feature.B)))
        for token in ("autoA", "auto:Z", "robot:A"):
            with self.assertRaises(ConfigError):
                Auxiliary.parse(token)
        self.assertEqual(member_name(None), "baseline")
        self.assertEqual(member_name(Auxiliary.parse("auto:B")), "auto:B")

    def test_synth_params(self):
        self.assertEqual(SynthParams().d, 91)
        with self.assertRaises(ConfigError):
            SynthParams(n=10)
        self.assertEqual(SynthParams.from_dict({"n": 60, "unused": 1}).n, 60)


class TestSplits(unittest.TestCase):
    """测试分层划分与类别权重"""

    def test_split_sizes(self):
        """2000 个病灶分成 1400/350/250"""
        self.assertEqual(split_sizes(2000, (0.70, 0.175, 0.125)), (1400, 350, 250))
        self.assertEqual(sum(split_sizes(37, (0.70, 0.175, 0.125))), 37)

    def test_large_cohort_folds(self):
        """n=2000、32% 阳性时每部分的阳性比例与全局相差不超过 1 个"""
        labels = np.zeros(2000, dtype=int)
        labels[np.random.default_rng(0).permutation(2000)[:640]] = 1
        folds = stratified_splits(labels, TrainConfig(seed=3))
        self.assertEqual(len(folds), 5)
        for split in folds:
            self.assertEqual(split.sizes(), (1400, 350, 250))
            combined = np.concatenate([split.train, split.val, split.test])
            self.assertEqual(len(np.unique(combined)), 2000)
            for part in (split.train, split.val, split.test):
                self.assertLessEqual(abs(labels[part].sum() - 0.32 * len(part)), 1.0)

    def test_test_sets_rotate(self):
        """不同折的测试集互不重叠"""
        labels = np.array([0, 1] * 500)
        folds = stratified_splits(labels, TrainConfig())
        for i in range(len(folds)):
            for j in range(i + 1, len(folds)):
                self.assertEqual(len(np.intersect1d(folds[i].test, folds[j].test)), 0)

    def test_deterministic(self):
        labels = np.array([0, 0, 1] * 30)
        first = stratified_splits(labels, TrainConfig(seed=5))
        second = stratified_splits(labels, TrainConfig(seed=5))
        other = stratified_splits(labels, TrainConfig(seed=6))
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.test, b.test)
        self.assertFalse(all(np.array_equal(a.test, b.test) for a, b in zip(first, other)))

    def test_small_instance(self):
        """n=8、4 个阳性、k=2：训练集包含两个类别"""
        labels = np.array([1, 0, 1, 0, 1, 0, 1, 0])
        for split in stratified_splits(labels, TrainConfig(k_folds=2)):
            self.assertEqual(split.sizes(), (6, 1, 1))
            self.assertEqual(set(labels[split.train]), {0, 1})

    def test_invalid_inputs(self):
        with self.assertRaises(TrainingError):
            stratified_splits(np.ones(20, dtype=int))
        with self.assertRaises(TrainingError):
            stratified_splits(np.array([0, 1, 0]), TrainConfig(k_folds=5))

    def test_class_weights(self):
        labels = np.array([1] * 640 + [0] * 1360)
        w0, w1 = class_weights(labels)
        self.assertEqual(w1, 1.5625)
        self.assertAlmostEqual(w0, 0.7353, places=4)
        self.assertEqual(class_weights([0, 1] * 5), (1.0, 1.0))
        w0, w1 = class_weights([1, 0, 0, 0])
        self.assertEqual(w1, 2.0)
        self.assertAlmostEqual(w0, 2.0 / 3.0)
        with self.assertRaises(TrainingError):
            class_weights([0, 0, 0])


class TestMetrics(unittest.TestCase):
    """测试 AUC 与 ROC"""

    def test_known_values(self):
        self.assertEqual(auc([0.9, 0.8, 0.1], [1, 1, 0]), 1.0)
        self.assertEqual(auc([0.2, 0.9], [1, 0]), 0.0)
        self.assertEqual(auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]), 0.5)

    def test_complement_and_monotone(self):
        rng = np.random.default_rng(1)
        scores = np.round(rng.random(60), 1)
        labels = rng.integers(0, 2, size=60)
        labels[:2] = (0, 1)
        value = auc(scores, labels)
        self.assertAlmostEqual(auc(scores, 1 - labels), 1.0 - value, delta=1e-12)
        self.assertEqual(auc(np.exp(3.0 * scores) - 2.0, labels), value)

    def test_equals_roc_area(self):
        """AUC 等于 ROC 曲线下的梯形面积"""
        rng = np.random.default_rng(2)
        scores = np.round(rng.normal(size=80), 1)
        labels = (scores + rng.normal(size=80) > 0).astype(int)
        fpr, tpr, thresholds = roc_curve(scores, labels)
        self.assertEqual((fpr[0], tpr[0]), (0.0, 0.0))
        self.assertEqual((fpr[-1], tpr[-1]), (1.0, 1.0))
        self.assertTrue(np.isinf(thresholds[0]))
        self.assertTrue((np.diff(fpr) >= 0).all())
        self.assertAlmostEqual(trapezoid(tpr, fpr), auc(scores, labels), delta=1e-12)

    def test_random_draws_match_roc_area(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            n = int(rng.integers(4, 60))
            scores = np.round(rng.random(n), int(rng.integers(1, 4)))
            labels = rng.integers(0, 2, size=n)
            labels[:2] = (0, 1)
            fpr, tpr, _ = roc_curve(scores, labels)
            self.assertAlmostEqual(trapezoid(tpr, fpr), auc(scores, labels), delta=1e-12)

    def test_single_class(self):
        with self.assertRaises(TrainingError):
            auc([0.1, 0.2], [1, 1])


class TestNetwork(unittest.TestCase):
    """测试前向、损失与反向传播"""

    def test_zero_model(self):
        p, y_hat = forward(zero_params(), np.ones((4, 3)))
        np.testing.assert_array_equal(p, 0.5)
        np.testing.assert_array_equal(y_hat, 0.0)

    def test_saturated_bias(self):
        params = zero_params()
        params.bc[0] = 10.0
        p, _ = forward(params, np.ones((1, 3)))
        self.assertGreater(p[0], 0.9999)

    def test_hand_computed_forward(self):
        """单单元网络的手算结果"""
        params = ModelParams(
            W1=[[2.0]], b1=[0.5], W2=[[1.5]], b2=[-1.0],
            Wc=[[0.7]], bc=[0.1], Wr=[[-2.0]], br=[3.0],
        )
        p, y_hat = forward(params, np.array([[1.0]]))
        # z1 = 2.5, z2 = 2.75, logit = 2.025
        self.assertAlmostEqual(p[0], 1.0 / (1.0 + np.exp(-2.025)), delta=1e-12)
        self.assertAlmostEqual(y_hat[0], -2.5, delta=1e-12)

    def test_shape_mismatch(self):
        with self.assertRaises(TrainingError):
            forward(zero_params(d=3), np.ones((2, 4)))
        with self.assertRaises(TrainingError):
            ModelParams(**{**zero_params().as_dict(), "Wc": np.zeros((3, 1))})

    def test_loss_known_values(self):
        """掩码均方误差"""
        none = loss([0.5], [3.0], [1], [1.0], [False])
        self.assertEqual(none.reg, 0.0)
        self.assertEqual(loss([0.5], [1.5], [0], [1.5], [True]).reg, 0.0)
        single = loss([0.5], [3.0], [0], [1.0], [True])
        self.assertEqual(single.reg, 4.0)
        self.assertAlmostEqual(single.cls, np.log(2.0))
        self.assertAlmostEqual(single.total, single.cls + single.reg)
        # 只对可用样本求平均
        mixed = loss([0.5, 0.5], [3.0, 100.0], [0, 1], [1.0, 0.0], [True, False])
        self.assertEqual(mixed.reg, 4.0)

    def test_class_and_loss_weights(self):
        weighted = loss([0.5, 0.5], [0.0, 0.0], [1, 0], [1.0, 1.0], [True, True],
                        class_weights=(0.5, 2.0), loss_weights=(1.0, 0.25))
        self.assertAlmostEqual(weighted.cls, 1.25 * np.log(2.0))
        self.assertAlmostEqual(weighted.total, weighted.cls + 0.25)

    def test_probability_clamp(self):
        result = loss([1.0], [0.0], [0], [0.0], [False])
        self.assertTrue(np.isfinite(result.cls))
        self.assertAlmostEqual(result.cls, -np.log(1e-12), places=3)

    def test_gradient_check(self):
        """解析梯度与中心差分的最大相对误差小于 1e-4"""
        rng = np.random.default_rng(17)
        checked = 0
        while checked < 100:
            d = int(rng.integers(2, 5))
            params = init_params(d, (5, 3), rng)
            params.bc[0] = rng.normal()
            params.br[0] = rng.normal()
            batch = random_batch(rng, int(rng.integers(1, 7)), d)
            z1 = batch.x @ params.W1 + params.b1
            z2 = np.maximum(z1, 0.0) @ params.W2 + params.b2
            if min(np.abs(z1).min(), np.abs(z2).min()) < 1e-3:
                continue  # 靠近 ReLU 拐点
            cw = tuple(rng.uniform(0.5, 2.0, size=2))
            lw = (1.0, float(rng.uniform(0.0, 2.0)))
            analytic, _ = backward(params, batch, cw, lw)
            numeric = numerical_gradient(params, batch, cw, lw)
            for name in PARAM_NAMES:
                a, n = analytic[name], numeric[name]
                scale = max(np.abs(a).max(), np.abs(n).max(), 1e-6)
                self.assertLess(np.abs(a - n).max() / scale, 1e-4, msg=name)
            checked += 1

    def test_masked_gradients(self):
        """没有可用标注时回归路径梯度严格为 0，分类梯度与基线一致"""
        rng = np.random.default_rng(8)
        params = init_params(4, (6, 5), rng)
        batch = random_batch(rng, 10, 4)
        masked = Batch(x=batch.x, labels=batch.labels, annotations=rng.normal(size=10), available=np.zeros(10, bool))
        grads, breakdown = backward(params, masked, (0.8, 1.3), (1.0, 1.0))
        baseline, _ = backward(params, batch, (0.8, 1.3), (1.0, 0.0))
        self.assertEqual(breakdown.reg, 0.0)
        for name in REGRESSION_PARAMS:
            self.assertTrue(np.array_equal(grads[name], np.zeros_like(grads[name])))
        for name in PARAM_NAMES:
            if name not in REGRESSION_PARAMS:
                self.assertTrue(np.array_equal(grads[name], baseline[name]), msg=name)

    def test_duplicated_batch(self):
        """每个样本复制一份后梯度不变"""
        rng = np.random.default_rng(12)
        params = init_params(3, (4, 4), rng)
        batch = random_batch(rng, 5, 3)
        doubled = Batch(
            x=np.vstack([batch.x, batch.x]),
            labels=np.r_[batch.labels, batch.labels],
            annotations=np.r_[batch.annotations, batch.annotations],
            available=np.r_[batch.available, batch.available],
        )
        first, _ = backward(params, batch)
        second, _ = backward(params, doubled)
        for name in PARAM_NAMES:
            np.testing.assert_allclose(second[name], first[name], rtol=0, atol=1e-12)

    def test_batch_validation(self):
        with self.assertRaises(TrainingError):
            Batch(x=np.zeros((0, 3)), labels=[], annotations=[], available=[])
        with self.assertRaises(TrainingError):
            Batch(x=np.zeros((2, 3)), labels=[0], annotations=[0.0, 1.0], available=[True, True])
        batch = Batch(x=np.zeros((2, 3)), labels=[0, 1], annotations=[np.nan, 2.0], available=[False, True])
        self.assertEqual(batch.annotations[0], 0.0)


class TestRMSprop(unittest.TestCase):
    """测试 RMSprop 更新"""

    def setUp(self):
        self.params = init_params(2, (2, 2), 0)
        self.config = TrainConfig(learning_rate=0.1, rmsprop_decay=0.9, rmsprop_epsilon=1e-8)

    def _grads(self, value: float):
        return {name: np.full_like(array, value) for name, array in self.params.items()}

    def test_zero_gradient(self):
        updated, _ = rmsprop_step(self.params, self._grads(0.0), None, self.config)
        self.assertTrue(updated.equals(self.params))

    def test_first_step(self):
        """g=1、lr=0.1 的第一步约为 -0.31623"""
        updated, state = rmsprop_step(self.params, self._grads(1.0), init_state(self.params), self.config)
        delta = updated.W1 - self.params.W1
        np.testing.assert_allclose(delta, -0.1 / (np.sqrt(0.1) + 1e-8), rtol=1e-12)
        self.assertAlmostEqual(float(delta[0, 0]), -0.31623, delta=1e-5)
        np.testing.assert_allclose(state["W1"], 0.1)

    def test_second_step_smaller(self):
        grads = self._grads(1.0)
        once, state = rmsprop_step(self.params, grads, None, self.config)
        twice, _ = rmsprop_step(once, grads, state, self.config)
        first = np.abs(once.W1 - self.params.W1)
        second = np.abs(twice.W1 - once.W1)
        self.assertTrue((second < first).all())

    def test_inputs_unchanged(self):
        before = self.params.copy()
        state = init_state(self.params)
        rmsprop_step(self.params, self._grads(0.5), state, self.config)
        self.assertTrue(self.params.equals(before))
        self.assertFalse(state["W1"].any())

    def test_non_finite(self):
        with self.assertRaises(TrainingError):
            rmsprop_step(self.params, self._grads(np.nan), None, self.config)


class TestTrain(unittest.TestCase):
    """测试训练循环"""

    def setUp(self):
        self.data = separable_data()
        self.indices = np.arange(len(self.data))

    def test_loss_decreases(self):
        """线性可分数据上前 5 轮训练损失严格下降"""
        config = TrainConfig(epochs=5, learning_rate=1e-3, seed=3)
        result = train(config, self.data, self.indices)
        losses = [record.loss.total for record in result.history]
        self.assertEqual(len(losses), 5)
        self.assertTrue(all(b < a for a, b in zip(losses, losses[1:])), msg=str(losses))
        self.assertTrue(all(record.loss.reg == 0.0 for record in result.history))

    def test_zero_learning_rate(self):
        """学习率为 0 时参数保持初始值"""
        config = TrainConfig(epochs=2, learning_rate=0.0, seed=4)
        result = train(config, self.data, self.indices)
        initial = init_params(self.data.dim, config.hidden, np.random.default_rng(4))
        self.assertTrue(result.params.equals(initial))

    def test_deterministic(self):
        config = TrainConfig(epochs=3, learning_rate=1e-3, seed=9)
        first = train(config, self.data, self.indices[:150], self.indices[150:])
        second = train(config, self.data, self.indices[:150], self.indices[150:])
        self.assertTrue(first.params.equals(second.params))
        self.assertEqual([r.to_dict() for r in first.history], [r.to_dict() for r in second.history])

    def test_best_validation_snapshot(self):
        config = TrainConfig(epochs=6, learning_rate=1e-3, seed=1)
        result = train(config, self.data, self.indices[:150], self.indices[150:])
        aucs = [record.val_auc for record in result.history]
        self.assertEqual(result.best_epoch, aucs.index(max(aucs)) + 1)
        p, _ = forward(result.params, self.data.x[150:])
        self.assertEqual(auc(p, self.data.labels[150:]), max(aucs))

    def test_auxiliary_target(self):
        """辅助头需要矩阵中存在对应来源"""
        synthetic = generate_synthetic(80, 5, 1.0, 0.3, seed=2)
        data = TrainingData(synthetic.lesion_ids, synthetic.x, synthetic.labels, synthetic.matrix)
        values, available = data.target(Auxiliary.parse("crowd:A"))
        self.assertEqual(len(values), 80)
        self.assertFalse(np.isnan(values).any())
        self.assertLess(available.sum(), 80)
        with self.assertRaises(TrainingError):
            data.target(Auxiliary.parse("expert:A"))
        with self.assertRaises(TrainingError):
            self.data.target(Auxiliary.parse("auto:A"))
        result = train(TrainConfig(epochs=2, learning_rate=1e-3), data, np.arange(60), np.arange(60, 80),
                       auxiliary=Auxiliary.parse("auto:A"))
        self.assertGreater(result.history[0].loss.reg, 0.0)

    def test_misaligned_data(self):
        with self.assertRaises(TrainingError):
            TrainingData(("a", "b"), np.zeros((3, 2)), [0, 1])


class TestEnsembleAndCrossValidation(unittest.TestCase):
    """测试集成预测与交叉验证"""

    def test_single_member(self):
        params = init_params(3, (4, 2), 1)
        x = np.random.default_rng(0).normal(size=(5, 3))
        np.testing.assert_array_equal(ensemble_predict([params], x), forward(params, x)[0])
        np.testing.assert_array_equal(ensemble_predict([params, params.copy(), params], x), forward(params, x)[0])

    def test_probability_average(self):
        low, high = zero_params(), zero_params()
        low.bc[0] = logit(0.2)
        high.bc[0] = logit(0.8)
        self.assertAlmostEqual(float(ensemble_predict([low, high], np.ones((1, 3)))[0]), 0.5, delta=1e-12)

    def test_dimension_mismatch(self):
        with self.assertRaises(TrainingError):
            ensemble_predict([zero_params(d=3), zero_params(d=4)], np.ones((1, 3)))
        with self.assertRaises(TrainingError):
            ensemble_predict([], np.ones((1, 3)))

    def test_perfect_data(self):
        """可分数据上平均 AUC 超过 0.99"""
        data = separable_data(n=300, d=4, seed=5)
        config = TrainConfig(epochs=30, learning_rate=1e-2, seed=2)
        report = cross_validate(config, data)
        self.assertEqual(len(report.per_fold_auc), 5)
        self.assertGreater(report.mean, 0.99)
        self.assertAlmostEqual(report.mean, float(np.mean(report.per_fold_auc)), delta=1e-12)
        self.assertAlmostEqual(report.std, float(np.std(report.per_fold_auc)), delta=1e-12)
        self.assertIn("folds", report.summary())

    def test_report_and_workers(self):
        """多线程与单线程交叉验证结果一致"""
        synthetic = generate_synthetic(120, 8, 0.5, 0.3, seed=4)
        data = TrainingData(synthetic.lesion_ids, synthetic.x, synthetic.labels, synthetic.matrix)
        config = TrainConfig(epochs=2, learning_rate=1e-3, k_folds=3, auxiliaries="auto:A,crowd:B", ensemble=True)
        serial = cross_validate(config, data)
        parallel = cross_validate(config.with_overrides(workers=3), data)
        self.assertEqual(serial.per_fold_auc, parallel.per_fold_auc)
        self.assertEqual(set(serial.member_auc), {"auto:A", "crowd:B"})
        self.assertEqual(len(serial.models[0]), 2)
        payload = serial.to_dict()
        self.assertEqual(payload["config"]["auxiliaries"], ["auto:A", "crowd:B"])
        self.assertEqual(len(payload["per_fold_auc"]), 3)
        self.assertEqual(len(serial.roc), 3)

    def test_randomized_needs_matrix(self):
        config = TrainConfig(epochs=1, randomize_annotations=True)
        with self.assertRaises(TrainingError):
            cross_validate(config, separable_data())


class TestCheckpoint(unittest.TestCase):
    """测试 model.json 读写"""

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.path = os.path.join(self.tmpdir, "model.json")

    def tearDown(self):
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def test_round_trip(self):
        members = [(None, init_params(5, (4, 3), 1)), (Auxiliary.parse("auto:C"), init_params(5, (4, 3), 2))]
        save_model(self.path, members, TrainConfig().to_dict(), {"seed": 7})
        loaded, payload = load_model(self.path)
        self.assertEqual([aux for aux, _ in loaded], [None, Auxiliary.parse("auto:C")])
        for (_, original), (_, restored) in zip(members, loaded):
            self.assertTrue(restored.equals(original))
        self.assertEqual(payload["meta"], {"seed": 7})
        self.assertEqual(payload["config"]["epochs"], 30)

    def test_byte_identical(self):
        members = [(None, init_params(3, (2, 2), 5))]
        other = os.path.join(self.tmpdir, "again.json")
        save_model(self.path, members)
        save_model(other, members)
        with open(self.path, "rb") as a, open(other, "rb") as b:
            self.assertEqual(a.read(), b.read())

    def test_invalid_files(self):
        with self.assertRaises(TrainingError):
            load_model(os.path.join(self.tmpdir, "missing.json"))
        with open(self.path, "w", encoding="utf-8") as f:
            json.dump({"format": "something-else", "version": 1}, f)
        with self.assertRaises(TrainingError):
            load_model(self.path)
        with self.assertRaises(TrainingError):
            save_model(self.path, [])


class TestFeatures(unittest.TestCase):
    """测试特征向量"""

    def setUp(self):
        self.mask = disk(10)
        self.image = solid_image(self.mask)

    def test_dimension(self):
        self.assertEqual(descriptor_dim(), 91)
        self.assertEqual(build_features(self.image, self.mask).dim, 91)
        self.assertEqual(build_features(self.image).dim, 91)

    def test_identical_images(self):
        first = build_features(self.image, self.mask, "a")
        second = build_features(solid_image(self.mask), self.mask, "b")
        np.testing.assert_array_equal(first.x, second.x)

    def test_black_image(self):
        """全黑图像：灰度为 0，直方图集中在最低的箱"""
        black = RasterImage(np.zeros((16, 16, 3), dtype=np.uint8))
        raw = describe(black)
        np.testing.assert_array_equal(raw[:64], 0.0)
        histogram = raw[64:88].reshape(3, 8)
        np.testing.assert_array_equal(histogram[:, 0], 1.0)
        np.testing.assert_array_equal(histogram[:, 1:], 0.0)
        np.testing.assert_array_equal(raw[88:], [0.0, 1.0, 0.0])

    def test_feature_set_scaled(self):
        """数据集级 min-max 缩放到 [0, 1]"""
        masks = [disk(6, margin=8), disk(10, margin=4), BinaryMask(np.zeros((22, 22), dtype=bool))]
        images = [solid_image(m, (100 + 40 * i, 60, 30)) for i, m in enumerate(masks)]
        vectors = build_feature_set(images, masks, ["a", "b", "c"])
        stacked = np.vstack([v.x for v in vectors])
        self.assertEqual(stacked.shape, (3, 91))
        self.assertGreaterEqual(stacked.min(), 0.0)
        self.assertLessEqual(stacked.max(), 1.0)
        self.assertEqual([v.lesion_id for v in vectors], ["a", "b", "c"])

    def test_block_scaler_constant_block(self):
        raw = np.vstack([describe(self.image, self.mask)] * 2)
        scaled = BlockScaler.fit(raw).transform(raw)
        np.testing.assert_array_equal(scaled, 0.0)

    def test_vectors_file(self):
        tmpdir = tempfile.mkdtemp()
        try:
            path = os.path.join(tmpdir, "vectors.csv")
            vectors = [FeatureVector("a", [0.1, 1.0 / 3.0]), FeatureVector("007", [2.5, -1e-300])]
            save_vectors(vectors, path)
            loaded = load_vectors(path)
            self.assertEqual([v.lesion_id for v in loaded], ["a", "007"])
            for original, restored in zip(vectors, loaded):
                np.testing.assert_array_equal(original.x, restored.x)
            with self.assertRaises(DatasetError):
                load_vectors(os.path.join(tmpdir, "missing.csv"))
        finally:
            shutil.rmtree(tmpdir, ignore_errors=True)

    def test_vectors_field_count(self):
        """vectors.csv 的行字段数必须与表头一致"""
        tmpdir = tempfile.mkdtemp()
        try:
            path = os.path.join(tmpdir, "vectors.csv")
            with open(path, "w", encoding="utf-8") as f:
                f.write("lesion_id,x0,x1\na,0.1,0.2,0.3\nb,0.4,0.5\n")
            with self.assertRaises(DatasetError) as ctx:
                load_vectors(path)
            self.assertEqual(ctx.exception.row, 2)
        finally:
            shutil.rmtree(tmpdir, ignore_errors=True)

    def test_invalid_vector(self):
        with self.assertRaises(TrainingError):
            FeatureVector("a", [1.0, np.inf])


class TestSynthetic(unittest.TestCase):
    """测试合成数据"""

    def test_deterministic(self):
        first = generate_synthetic(100, 10, 1.0, 0.3, seed=11)
        second = generate_synthetic(100, 10, 1.0, 0.3, seed=11)
        np.testing.assert_array_equal(first.x, second.x)
        np.testing.assert_array_equal(first.labels, second.labels)
        self.assertTrue(first.matrix.equals(second.matrix))
        self.assertEqual(first.table, second.table)

    def test_prevalence(self):
        data = generate_synthetic(2000, 20, 1.0, 0.3, seed=0)
        self.assertAlmostEqual(float(data.labels.mean()), 0.5, delta=0.03)
        self.assertEqual(data.x.shape, (2000, 20))

    def test_noise_free_annotations(self):
        """noise_ann=0 时自动标注 A 与 z1 完全相关"""
        data = generate_synthetic(200, 5, 1.0, 0.0, seed=3)
        values, available = data.matrix.column(Source.AUTO, Feature.A)
        self.assertTrue(available.all())
        self.assertAlmostEqual(pearson(values, data.latent[:, 0]).r, 1.0, delta=1e-9)

    def test_coverage(self):
        data = generate_synthetic(500, 5, 1.0, 0.3, seed=5)
        _, crowd = data.matrix.column(Source.CROWD, Feature.C)
        _, student = data.matrix.column(Source.STUDENT, Feature.C)
        self.assertAlmostEqual(float(crowd.mean()), 0.8, delta=0.06)
        self.assertAlmostEqual(float(student.mean()), 0.6, delta=0.06)
        student_a = [r.value for r in data.table if r.source == Source.STUDENT and r.feature == Feature.A]
        self.assertTrue(all(0 <= v <= 5 and v == int(v) for v in student_a))

    def test_degenerate_parameters(self):
        with self.assertRaises(TrainingError):
            generate_synthetic(10, 5, 1.0, 0.3, seed=0)
        with self.assertRaises(TrainingError):
            generate_synthetic(100, 5, -1.0, 0.3, seed=0)

    def test_rendered_lesion(self):
        data = generate_synthetic(60, 4, 1.0, 0.3, seed=1)
        image, mask = render_synthetic_lesion(data.latent[0], size=32)
        self.assertEqual((image.width, image.height), (32, 32))
        self.assertGreater(mask.area, 50)
        self.assertFalse(touches_border(mask))
        with self.assertRaises(TrainingError):
            render_synthetic_lesion(np.zeros(2))


if __name__ == "__main__":
    unittest.main()
