import os
import shutil
import tempfile
import unittest

import numpy as np
from numpy.testing import assert_array_equal, assert_allclose

from S2CLinkTools.core.errors import ShapeError
from S2CLinkTools.core.pgm import decode_pgm, encode_pgm, read_pgm, to_uint8, write_pgm


class TestPGM(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmpdir = tempfile.mkdtemp()

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmpdir)

    def test_header(self):
        data = encode_pgm(np.ones((3, 5)))
        self.assertTrue(data.startswith(b'P5\n5 3\n255\n'))
        self.assertEqual(len(data), len(b'P5\n5 3\n255\n') + 15)

    def test_all_white(self):
        path = os.path.join(self.tmpdir, 'white.pgm')
        write_pgm(path, np.ones((10, 10)))
        img = read_pgm(path)
        self.assertEqual(img.shape, (10, 10))
        self.assertEqual(img.mean(), 1.0)

    def test_quantization(self):
        img = np.linspace(0, 1, 64).reshape(8, 8)
        back = decode_pgm(encode_pgm(img))
        assert_allclose(back, img, atol=0.5 / 255)
        assert_array_equal(to_uint8(back), to_uint8(img))
        # out-of-range intensities are clamped
        assert_array_equal(to_uint8(np.array([[-0.2, 1.3]])), [[0, 255]])

    def test_comments_in_header(self):
        raster = bytes(bytearray([0, 255, 255, 0]))
        img = decode_pgm(b'P5\n# made by hand\n2 2\n255\n' + raster)
        assert_array_equal(img, [[0.0, 1.0], [1.0, 0.0]])

    def test_errors(self):
        with self.assertRaises(IOError):
            decode_pgm(b'P2\n2 2\n255\n0 0 0 0')
        with self.assertRaises(IOError):
            decode_pgm(b'P5\n2 2\n255\n\x00\x00')
        with self.assertRaises(IOError):
            decode_pgm(b'P5\n2')
        with self.assertRaises(ShapeError):
            encode_pgm(np.zeros((2, 2, 2)))
