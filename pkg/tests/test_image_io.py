#region PGM 读写测试

import tempfile
import unittest
from pathlib import Path

import numpy as np

from core.exceptions import ImageFormatError, UnsupportedFormatError
from core.grid_ops import Image
from core.image_io import image_to_mask, load_pgm, mask_to_image, save_pgm
from tests.fixtures import quantized, synthetic_image


class TestPgm(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def _write(self, name: str, payload: bytes) -> Path:
        path = self.tmp / name
        path.write_bytes(payload)
        return path

    def test_binary_scaling(self):
        path = self._write('a.pgm', b'P5\n2 2\n255\n' + bytes([0, 255, 128, 64]))
        image = load_pgm(path)
        self.assertEqual((image.width, image.height), (2, 2))
        np.testing.assert_allclose(image.data, [0.0, 1.0, 128 / 255, 64 / 255])

    def test_ascii_with_comments(self):
        path = self._write('b.pgm', b'P2\n# comment\n3 1 # trailing\n10\n0 5\n10\n')
        np.testing.assert_allclose(load_pgm(path).data, [0.0, 0.5, 1.0])

    def test_sixteen_bit(self):
        payload = b'P5 2 1 65535\n' + np.array([0, 65535], dtype='>u2').tobytes()
        np.testing.assert_allclose(load_pgm(self._write('c.pgm', payload)).data, [0.0, 1.0])

    def test_round_trip(self):
        array = quantized(synthetic_image(7, 9))
        for binary in (True, False):
            path = save_pgm(Image.from_array(array), self.tmp / f'rt-{binary}.pgm', binary=binary)
            first = load_pgm(path)
            np.testing.assert_allclose(first.as_array(), array, atol=1e-15)
            second = load_pgm(save_pgm(first, self.tmp / 'again.pgm'))
            np.testing.assert_array_equal(second.data, first.data)

    def test_color_rejected(self):
        with self.assertRaises(UnsupportedFormatError):
            load_pgm(self._write('d.ppm', b'P3\n1 1\n255\n0 0 0\n'))

    def test_malformed_header(self):
        with self.assertRaises(ImageFormatError):
            load_pgm(self._write('e.pgm', b'JUNK'))
        with self.assertRaises(ImageFormatError):
            load_pgm(self._write('f.pgm', b'P5\nx y\n255\n'))

    def test_truncated_payload(self):
        with self.assertRaises(ImageFormatError):
            load_pgm(self._write('g.pgm', b'P5\n4 4\n255\n' + bytes(10)))
        with self.assertRaises(ImageFormatError):
            load_pgm(self._write('h.pgm', b'P2\n2 2\n255\n1 2 3\n'))

    def test_mask_rendering(self):
        indicator = np.array([[True, False], [False, True]])
        image = mask_to_image(indicator)
        np.testing.assert_array_equal(image.as_array(), [[0.0, 1.0], [1.0, 0.0]])
        reloaded = load_pgm(save_pgm(image, self.tmp / 'mask.pgm'))
        np.testing.assert_array_equal(image_to_mask(reloaded), indicator)


if __name__ == '__main__':
    unittest.main()

#endregion
