import os
import shutil
import tempfile
import unittest

from S2CLinkTools.core.channel import ChannelParams, LinkConfig
from S2CLinkTools.core.config import read_config, write_config
from S2CLinkTools.core.dataset import DatasetSpec
from S2CLinkTools.core.docstring import DocReplacer
from S2CLinkTools.core.errors import ConfigurationError
from S2CLinkTools.core.frame_codec import CodecConfig
from S2CLinkTools.core.harness import HarnessConfig
from S2CLinkTools.core.utils import derive_seed, to_list


class TestConfig(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmpdir = tempfile.mkdtemp()

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmpdir)

    def test_defaults(self):
        link = LinkConfig()
        self.assertEqual(link.tx_refresh_hz, 120.0)
        self.assertEqual(link.tx_data_fps, 0.75)
        self.assertEqual(link.cam_fps, 60.0)
        self.assertEqual(link.overhead_period, 10)
        self.assertAlmostEqual(link.frame_period, 4.0 / 3)

        codec = CodecConfig()
        self.assertEqual((codec.frame_px, codec.grid_cells, codec.cell_px), (100, 25, 4))
        self.assertEqual(DatasetSpec().per_class_count, 1000)

    def test_immutable(self):
        link = LinkConfig()
        with self.assertRaises(AttributeError):
            link.cam_fps = 30
        changed = link.replace(cam_fps=30)
        self.assertEqual(changed.cam_fps, 30.0)
        self.assertEqual(link.cam_fps, 60.0)
        self.assertNotEqual(link, changed)

    def test_unknown_and_invalid_keys(self):
        with self.assertRaises(ConfigurationError):
            LinkConfig(frame_rate=30)
        with self.assertRaises(ConfigurationError):
            LinkConfig(cam_fps=0)
        with self.assertRaises(ConfigurationError):
            LinkConfig(cam_fps='fast')
        with self.assertRaises(ConfigurationError):
            CodecConfig(frame_px=101)
        with self.assertRaises(ConfigurationError):
            ChannelParams(crop_fraction_range=(0.0, 1.0))
        with self.assertRaises(ConfigurationError):
            ChannelParams(pulse_shape='gaussian')
        # ConfigurationError is a ValueError
        self.assertRaises(ValueError, LinkConfig, overhead_period=0)

    def test_file_round_trip(self):
        path = os.path.join(self.tmpdir, 'run.txt')
        with open(path, 'wt') as f:
            f.write('# link under test\n'
                    'cam_fps = 30\n'
                    '\n'
                    'aug_rotation_range_deg = -5, 5  # degrees\n'
                    'train_epochs = 3\n'
                    'per_class_count = 10\n')
        config = HarnessConfig.from_file(path)
        self.assertEqual(config.link.cam_fps, 30.0)
        self.assertEqual(config.dataset.augmentation.rotation_range_deg, (-5.0, 5.0))
        self.assertEqual(config.train.epochs, 3)
        self.assertEqual(config.dataset.per_class_count, 10)
        # keys not in the file keep their defaults
        self.assertEqual(config.link.tx_data_fps, 0.75)

        snapshot = os.path.join(self.tmpdir, 'snapshot.txt')
        write_config(snapshot, config.to_dict())
        self.assertEqual(HarnessConfig.from_dict(read_config(snapshot)), config)

    def test_text_values_stay_on_one_line(self):
        for text in ('issue #4 of the day', 'two\nlines', 'carriage\rreturn'):
            with self.assertRaises(ConfigurationError):
                HarnessConfig(link_text=text)
        with self.assertRaises(ConfigurationError):
            HarnessConfig(cache_dir='/tmp/run#1')

        config = HarnessConfig(link_text='plain text, with a comma? no: a colon!')
        path = os.path.join(self.tmpdir, 'text.txt')
        write_config(path, config.to_dict())
        self.assertEqual(HarnessConfig.from_dict(read_config(path)).link_text, config.link_text)

        values = config.to_dict()
        values['link_text'] = 'x # y'
        with self.assertRaises(ConfigurationError):
            write_config(path, values)

    def test_malformed_file(self):
        path = os.path.join(self.tmpdir, 'bad.txt')
        with open(path, 'wt') as f:
            f.write('cam_fps 30\n')
        with self.assertRaises(ConfigurationError):
            read_config(path)

    def test_content_hash(self):
        a = DatasetSpec(per_class_count=5)
        self.assertEqual(a.content_hash(), DatasetSpec(per_class_count=5).content_hash())
        self.assertNotEqual(a.content_hash(), a.replace(seed=1).content_hash())

    def test_with_seed(self):
        config = HarnessConfig().with_seed(7)
        self.assertEqual((config.dataset.seed, config.train.seed, config.split_seed, config.link_seed),
                         (7, 7, 7, 7))

    def test_model_must_match_frames(self):
        with self.assertRaises(ConfigurationError):
            HarnessConfig.from_dict({'model_input_px': '50'})


class TestUtils(unittest.TestCase):
    def test_derive_seed(self):
        self.assertEqual(derive_seed(0, 3), derive_seed(0, 3))
        self.assertNotEqual(derive_seed(0, 3), derive_seed(0, 4))
        self.assertNotEqual(derive_seed(0, 3), derive_seed(3, 0))
        self.assertTrue(0 <= derive_seed(5) < 2 ** 32)
        with self.assertRaises(ValueError):
            derive_seed(-1)
        with self.assertRaises(ValueError):
            derive_seed()

    def test_to_list(self):
        self.assertEqual(to_list('ab'), ['ab'])
        self.assertEqual(to_list((1, 2)), [1, 2])
        self.assertEqual(to_list(3), [3])
        self.assertIsNone(to_list(None))

    def test_doc_replacer(self):
        doc = DocReplacer(allow_partial_formatting=True, _outer='{_inner} px', _inner='frame_px')
        doc.replace()

        @doc
        def f():
            """
            {_outer}
            {_unknown}
            """
        self.assertEqual(f.__doc__, 'frame_px px\n{_unknown}')

        strict = DocReplacer(_seed='seed : int')
        with self.assertRaises(KeyError):
            strict(f)
