#region 批量实验测试

import tempfile
import unittest
from pathlib import Path

from core.pipeline import ExperimentConfig
from core.runner import run_batch
from reports.repository import ReportRepository
from tests.fixtures import synthetic_image, write_pgm


class TestRunBatch(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_results_keep_order_and_isolate_failures(self):
        out = self.tmp / 'out'
        inputs = [write_pgm(self.tmp / f'img{i}.pgm', synthetic_image(8, seed=i)) for i in range(3)]
        configs = [ExperimentConfig(input_path=path, lam=0.0, output_dir=out) for path in inputs]
        configs.insert(1, ExperimentConfig(input_path=self.tmp / 'missing.pgm', lam=0.0, output_dir=out))

        results = run_batch(configs, workers=3)

        self.assertEqual([r.ok for r in results], [True, False, True, True])
        self.assertTrue(results[1].error.startswith('[load]'))
        for result, config in zip(results, configs):
            self.assertIs(result.config, config)
        self.assertEqual(len(ReportRepository(out).list_runs()), 4)


if __name__ == '__main__':
    unittest.main()

#endregion
