import os
import shutil
import tempfile
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from S2CLinkTools.core.cnn import (FrameClassifier, ModelSpec, TrainConfig, TrainReport, adam_init, adam_step,
                                   backward, bce_loss, conv2d_valid, dense, encode_weights, forward,
                                   gradient_check, load_weights, maxpool2, save_weights, train,
                                   weight_file_size, zero_params)
from S2CLinkTools.core.dataset import EXPERIMENTS, DatasetSpec, generate_dataset, split_dataset
from S2CLinkTools.core.errors import ConfigurationError, ContractViolation, ShapeError, WeightFormatError
from S2CLinkTools.core.frame_codec import CodecConfig
from S2CLinkTools.core.harness import HarnessConfig, prepare_dataset

# 30 px frames of 10 x 10 cells, small enough to train in a test
SMALL_CODEC = CodecConfig(frame_px=30, grid_cells=10, finder_size=3)
SMALL_MODEL = ModelSpec(input_px=30, conv1_filters=2, conv2_filters=2, dense_units=4)


def naive_conv(x, k, b):
    C, H, W = x.shape
    out = np.zeros((k.shape[0], H - 2, W - 2))
    for f in range(k.shape[0]):
        for i in range(H - 2):
            for j in range(W - 2):
                out[f, i, j] = b[f] + np.sum(x[:, i:i + 3, j:j + 3] * k[f])
    return out


def naive_pool(x):
    K, H, W = x.shape
    out = np.zeros((K, H // 2, W // 2), dtype=x.dtype)
    for c in range(K):
        for i in range(H // 2):
            for j in range(W // 2):
                out[c, i, j] = x[c, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max()
    return out


class TestLayers(unittest.TestCase):
    def test_layer_shapes(self):
        shapes = ModelSpec().layer_shapes
        self.assertEqual(shapes['conv1'], (32, 98, 98))
        self.assertEqual(shapes['conv2'], (16, 96, 96))
        self.assertEqual(shapes['pool'], (16, 48, 48))
        self.assertEqual(shapes['flatten'], (36864,))
        self.assertEqual(shapes['dense'], (128,))
        self.assertEqual(shapes['output'], (1,))
        with self.assertRaises(ConfigurationError):
            ModelSpec(input_px=99)

    def test_conv_shape(self):
        x = np.zeros((1, 100, 100), dtype=np.float32)
        k = np.zeros((32, 1, 3, 3), dtype=np.float32)
        self.assertEqual(conv2d_valid(x, k, np.zeros(32, dtype=np.float32)).shape, (32, 98, 98))

    def test_conv_constant(self):
        out = conv2d_valid(np.full((1, 6, 6), 0.25), np.ones((1, 1, 3, 3)), np.zeros(1))
        assert_allclose(out, 9 * 0.25)

    def test_conv_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            c, k = rng.integers(1, 4), rng.integers(1, 4)
            h, w = rng.integers(3, 9, size=2)
            x = rng.normal(size=(c, h, w))
            kernels = rng.normal(size=(k, c, 3, 3))
            bias = rng.normal(size=k)
            assert_allclose(conv2d_valid(x, kernels, bias), naive_conv(x, kernels, bias), atol=1e-6)

        # batched input gives the stacked single results
        x = rng.normal(size=(3, 2, 5, 5))
        kernels, bias = rng.normal(size=(4, 2, 3, 3)), rng.normal(size=4)
        batched = conv2d_valid(x, kernels, bias)
        for i in range(3):
            assert_allclose(batched[i], naive_conv(x[i], kernels, bias), atol=1e-6)

    def test_conv_errors(self):
        with self.assertRaises(ShapeError):
            conv2d_valid(np.zeros((2, 5, 5)), np.zeros((1, 1, 3, 3)), np.zeros(1))
        with self.assertRaises(ShapeError):
            conv2d_valid(np.zeros((1, 2, 5)), np.zeros((1, 1, 3, 3)), np.zeros(1))
        with self.assertRaises(ShapeError):
            conv2d_valid(np.zeros((1, 5, 5)), np.zeros((1, 1, 3, 3)), np.zeros(2))

    def test_maxpool(self):
        out, idx = maxpool2(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
        assert_array_equal(out, [[[4.0]]])
        assert_array_equal(idx, [[[3]]])
        out, _ = maxpool2(np.full((2, 4, 6), 0.7))
        assert_array_equal(out, np.full((2, 2, 3), 0.7))

        x = np.random.default_rng(1).normal(size=(16, 96, 96)).astype(np.float32)
        assert_array_equal(maxpool2(x)[0], naive_pool(x))
        with self.assertRaises(ShapeError):
            maxpool2(np.zeros((1, 3, 4)))

    def test_dense(self):
        rng = np.random.default_rng(2)
        x, w, b = rng.normal(size=(3, 5)), rng.normal(size=(5, 2)), rng.normal(size=2)
        expected = [[sum(x[i, k] * w[k, j] for k in range(5)) + b[j] for j in range(2)] for i in range(3)]
        assert_allclose(dense(x, w, b), expected, atol=1e-6)
        with self.assertRaises(ShapeError):
            dense(x, w.T, b)


class TestForward(unittest.TestCase):
    def test_zero_model(self):
        spec = ModelSpec.reduced()
        model = FrameClassifier(spec, zero_params(spec))
        x = np.random.default_rng(0).random((3, 1, 8, 8))
        p, _ = forward(model, x)
        self.assertEqual(p.shape, (3, 1))
        assert_allclose(p, 0.5)

    def test_identical_images(self):
        model = FrameClassifier(ModelSpec.reduced(), seed=1)
        img = np.random.default_rng(1).random((1, 1, 8, 8))
        p, _ = forward(model, np.concatenate([img, img]))
        assert_allclose(p[0], p[1], rtol=1e-6)

    def test_probability_range(self):
        x = np.random.default_rng(2).random((4, 1, 8, 8))
        for seed in range(100):
            p, _ = forward(FrameClassifier(ModelSpec.reduced(), seed=seed), x)
            self.assertTrue(np.all((p > 0) & (p < 1)))

    def test_shape_mismatch(self):
        model = FrameClassifier(ModelSpec.reduced())
        with self.assertRaises(ShapeError):
            forward(model, np.zeros((1, 1, 10, 10)))
        with self.assertRaises(ShapeError):
            forward(model, np.zeros((1, 8, 8)))

    def test_predict(self):
        spec = ModelSpec.reduced()
        model = FrameClassifier(spec, zero_params(spec))
        images = np.zeros((5, 8, 8))
        self.assertEqual(model.predict_proba(images).shape, (5,))
        assert_array_equal(model.predict(images), [1] * 5)
        self.assertEqual(model.predict_proba(np.zeros((8, 8))).shape, (1,))


class TestBackward(unittest.TestCase):
    def test_loss_values(self):
        self.assertAlmostEqual(bce_loss(np.array([[0.5]]), [[1]])[0], np.log(2))
        self.assertAlmostEqual(bce_loss(np.array([[0.5]]), [[0]])[0], np.log(2))
        self.assertAlmostEqual(bce_loss(np.array([[0.9]]), [[1]])[0], 0.10536, places=5)
        self.assertAlmostEqual(bce_loss(np.array([[1.0]]), [[1]])[0], 0.0, places=6)

    def test_zero_gradient(self):
        model = FrameClassifier(ModelSpec.reduced(), seed=0)
        p, cache = forward(model, np.random.default_rng(0).random((2, 1, 8, 8)))
        for name, g in backward(model, cache, np.zeros_like(p)).items():
            self.assertEqual(g.shape, model.params[name].shape)
            self.assertFalse(g.any(), name)

    def test_stale_cache(self):
        model = FrameClassifier(ModelSpec.reduced(), seed=0)
        p, cache = forward(model, np.random.default_rng(0).random((2, 1, 8, 8)))
        model.update_params(model.params)
        with self.assertRaises(ContractViolation):
            backward(model, cache, np.ones_like(p))

    def test_duplicated_batch(self):
        # mean loss: a sample counted twice weighs as much as once; summed loss doubles it
        model = FrameClassifier(ModelSpec.reduced(), seed=4).astype(np.float64)
        x = np.random.default_rng(4).random((1, 1, 8, 8))
        y = np.array([[1.0]])
        p, cache = forward(model, x)
        single = backward(model, cache, bce_loss(p, y)[1])

        p2, cache2 = forward(model, np.concatenate([x, x]))
        _, dp2 = bce_loss(p2, np.concatenate([y, y]))
        mean_grads = backward(model, cache2, dp2)
        sum_grads = backward(model, cache2, dp2 * len(p2))
        for name in single:
            assert_allclose(mean_grads[name], single[name], rtol=1e-10, atol=1e-14)
            assert_allclose(sum_grads[name], 2 * single[name], rtol=1e-10, atol=1e-14)

    def test_gradient_check(self):
        y = np.array([[1.0], [0.0]])
        for seed in range(10):
            model = FrameClassifier(ModelSpec.reduced(), seed=seed)
            x = np.random.default_rng(seed).random((2, 1, 8, 8))
            errors = gradient_check(model, x, y, h=1e-3)
            for name, err in errors.items():
                self.assertLess(err.max(), 1e-3, '{} (seed {})'.format(name, seed))


class TestAdam(unittest.TestCase):
    def test_zero_gradient(self):
        params = {'w': np.array([0.5, -1.0])}
        new, state = adam_step(params, {'w': np.zeros(2)}, adam_init(params))
        assert_array_equal(new['w'], params['w'])
        self.assertEqual(state.t, 1)

    def test_first_step(self):
        params = {'w': np.zeros(1)}
        new, state = adam_step(params, {'w': np.ones(1)}, adam_init(params))
        assert_allclose(new['w'], [-0.001], rtol=1e-6)
        # inputs are left alone
        assert_array_equal(params['w'], [0.0])

    def test_mismatch(self):
        params = {'w': np.zeros(2)}
        with self.assertRaises(ShapeError):
            adam_step(params, {'v': np.zeros(2)}, adam_init(params))
        with self.assertRaises(ShapeError):
            adam_step(params, {'w': np.zeros(3)}, adam_init(params))


class TestTraining(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmpdir = tempfile.mkdtemp()
        spec = DatasetSpec(per_class_count=8, classes=('d_f1', 'd_f2', 'o_f'), codec=SMALL_CODEC)
        manifest = generate_dataset(spec, os.path.join(cls.tmpdir, 'data'))
        cls.manifest = split_dataset(manifest, (0.625, 0.125, 0.25), seed=0)
        cls.cfg = TrainConfig(epochs=2, batch_size=4, seed=0)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmpdir)

    def test_one_epoch(self):
        model = FrameClassifier(SMALL_MODEL)
        model, report = train(model, self.manifest, EXPERIMENTS['ex1'], self.cfg.replace(epochs=1))
        self.assertEqual(len(report), 1)
        self.assertTrue(model.trained)
        self.assertIs(model.experiment, EXPERIMENTS['ex1'])
        self.assertEqual(list(report.curves.columns), TrainReport.curve_columns)

    def test_deterministic(self):
        _, a = train(FrameClassifier(SMALL_MODEL), self.manifest, EXPERIMENTS['ex3'], self.cfg)
        _, b = train(FrameClassifier(SMALL_MODEL, seed=9), self.manifest, EXPERIMENTS['ex3'], self.cfg)
        assert_allclose(a.curves.values, b.curves.values, atol=1e-6)

    def test_no_epochs(self):
        with self.assertRaises(ConfigurationError):
            TrainConfig(epochs=0)

    def test_empty_split(self):
        manifest = split_dataset(self.manifest, (1, 0, 0))
        with self.assertRaises(ValueError):
            train(FrameClassifier(SMALL_MODEL), manifest, EXPERIMENTS['ex1'], self.cfg)

    def test_report_csv(self):
        _, report = train(FrameClassifier(SMALL_MODEL), self.manifest, EXPERIMENTS['ex1'], self.cfg)
        curves = os.path.join(self.tmpdir, 'curves.csv')
        timing = os.path.join(self.tmpdir, 'timing.csv')
        report.to_csv(curves, timing)
        loaded = TrainReport.from_csv(curves, timing)
        assert_allclose(loaded.curves.values, report.curves.values)
        self.assertEqual(len(loaded.seconds), 2)


class TestWeights(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmpdir = tempfile.mkdtemp()

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmpdir)

    def test_file_size(self):
        self.assertEqual(weight_file_size(ModelSpec()), 80 + 4 * 4723793)
        self.assertEqual(ModelSpec.reduced().param_count, 99)
        model = FrameClassifier(ModelSpec.reduced(), seed=0)
        self.assertEqual(len(encode_weights(model)), weight_file_size(model.spec))

    def test_round_trip(self):
        model = FrameClassifier(SMALL_MODEL, seed=4, experiment=EXPERIMENTS['ex2'])
        path = os.path.join(self.tmpdir, 'model.s2cw')
        save_weights(model, path)
        loaded = load_weights(path, experiment=EXPERIMENTS['ex2'], spec=SMALL_MODEL)
        self.assertTrue(loaded.trained)
        self.assertEqual(loaded.spec, SMALL_MODEL)
        x = np.random.default_rng(0).random((3, 1, 30, 30))
        assert_array_equal(forward(loaded, x)[0], forward(model, x)[0])

    def test_bad_files(self):
        model = FrameClassifier(ModelSpec.reduced(), seed=0)
        data = encode_weights(model)
        cases = {
            'truncated': data[:-3],
            'magic': b'XXXX' + data[4:],
            'trailing': data + b'\x00',
        }
        for name, content in cases.items():
            path = os.path.join(self.tmpdir, name + '.s2cw')
            with open(path, 'wb') as f:
                f.write(content)
            with self.assertRaises(WeightFormatError):
                load_weights(path)

        path = os.path.join(self.tmpdir, 'reduced.s2cw')
        save_weights(model, path)
        with self.assertRaises(WeightFormatError):
            load_weights(path, spec=ModelSpec())


@unittest.skipUnless(os.environ.get('S2C_DESK_SCALE') == '1', 'set S2C_DESK_SCALE=1 to train at desk scale')
class TestLossMonotonicity(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmpdir = tempfile.mkdtemp()
        cls.config = HarnessConfig().desk_scale()
        manifest = prepare_dataset(cls.config.dataset, cls.tmpdir)
        cls.manifest = split_dataset(manifest, cls.config.fractions, cls.config.split_seed)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmpdir)

    def test_median_batch_loss_decreases(self):
        decreasing = 0
        for seed in range(10):
            cfg = self.config.train.replace(epochs=5, seed=seed)
            _, report = train(FrameClassifier(self.config.model), self.manifest, EXPERIMENTS['ex2'], cfg)
            medians = report.curves['batch_loss_median'].values
            decreasing += bool(np.all(np.diff(medians) < 0))
        self.assertGreaterEqual(decreasing, 9)
