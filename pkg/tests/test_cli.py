#region 命令行测试

import io
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from cli.main_cli import main
from tests.fixtures import synthetic_image, write_pgm


class TestMainCli(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.input = write_pgm(self.tmp / 'input.pgm', synthetic_image(8))

    def tearDown(self):
        self._tmp.cleanup()

    def _run(self, *argv):
        with patch('sys.stdout', new_callable=io.StringIO) as out, \
                patch('sys.stderr', new_callable=io.StringIO) as err:
            code = main(list(argv))
        return code, out.getvalue(), err.getvalue()

    def test_optimize_then_list(self):
        out_dir = str(self.tmp / 'out')
        code, stdout, _ = self._run('optimize', '--input', str(self.input), '--model', 'biharmonic',
                                    '--lambda', '0', '--out', out_dir)
        self.assertEqual(code, 0)
        self.assertIn('MSE', stdout)

        code, stdout, _ = self._run('list', '--out', out_dir)
        self.assertEqual(code, 0)
        self.assertIn('biharmonic', stdout)

    def test_inpaint_with_saved_mask(self):
        out_dir = self.tmp / 'out'
        self._run('optimize', '--input', str(self.input), '--lambda', '0', '--out', str(out_dir))
        mask = next(out_dir.glob('*/mask.pgm'))
        code, _, _ = self._run('inpaint', '--input', str(self.input), '--mask', str(mask),
                               '--model', 'harmonic', '--no-gvo', '--out', str(out_dir))
        self.assertEqual(code, 0)

    def test_failure_exit_code_and_phase(self):
        code, _, stderr = self._run('optimize', '--input', str(self.tmp / 'nope.pgm'),
                                    '--lambda', '0.01', '--out', str(self.tmp / 'out'))
        self.assertEqual(code, 1)
        self.assertIn('[load]', stderr)

    def test_optimize_several_inputs_in_batch(self):
        second = write_pgm(self.tmp / 'second.pgm', synthetic_image(8, seed=1))
        out_dir = self.tmp / 'out'
        code, stdout, _ = self._run('optimize', '--input', str(self.input), str(second),
                                    '--lambda', '0', '--workers', '2', '--out', str(out_dir))
        self.assertEqual(code, 0)
        self.assertIn('input.pgm', stdout)
        self.assertIn('second.pgm', stdout)
        self.assertEqual(len(list(out_dir.glob('*/report.json'))), 2)

    def test_batch_failure_exit_code(self):
        code, stdout, stderr = self._run('optimize', '--input', str(self.input), str(self.tmp / 'nope.pgm'),
                                         '--lambda', '0', '--out', str(self.tmp / 'out'))
        self.assertEqual(code, 1)
        self.assertIn('nope.pgm', stdout)
        self.assertIn('1/2', stderr)

    def test_lambda_and_density_are_exclusive(self):
        with self.assertRaises(SystemExit):
            self._run('optimize', '--input', str(self.input), '--lambda', '0.1',
                      '--density', '0.05', '--out', str(self.tmp))

    def test_baseline_writes_json(self):
        code, stdout, _ = self._run('baseline', '--input', str(self.input), '--density', '0.25',
                                    '--seed', '0', '--models', 'harmonic', 'biharmonic',
                                    '--out', str(self.tmp / 'base'))
        self.assertEqual(code, 0)
        self.assertTrue((self.tmp / 'base' / 'baseline.json').exists())
        self.assertIn('平均 MSE', stdout)

    def test_config_and_interrupt(self):
        self.assertEqual(self._run('config')[0], 0)
        with patch('cli.experiment_cli.run_baseline', side_effect=KeyboardInterrupt):
            code, _, _ = self._run('baseline', '--input', str(self.input))
        self.assertEqual(code, 130)


if __name__ == '__main__':
    unittest.main()

#endregion
