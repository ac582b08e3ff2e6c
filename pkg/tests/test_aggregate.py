import os
import shutil
import tempfile
import unittest

import numpy as np

from src.aggregate import (
    DEGENERATE_SCALE,
    FeatureMatrix,
    aggregate_table,
    average_per_lesion,
    export_matrix,
    import_matrix,
    standardize,
    standardize_all,
)
from src.core.errors import AggregationError
from src.dataset import AnnotationRecord, AnnotationTable, Feature, Source


def make_table(rows) -> AnnotationTable:
    """rows: (lesion_id, source, feature, annotator_id, value)"""
    return AnnotationTable(tuple(
        AnnotationRecord(lesion, Source(source), Feature(feature), annotator, float(value))
        for lesion, source, feature, annotator, value in rows
    ))


class TestStandardize(unittest.TestCase):
    """测试 (来源, 特征) 池的标准化"""

    def test_three_values(self):
        """[1, 2, 3] 标准化为 [-1.2247, 0, 1.2247]"""
        table = make_table([(f"l{i}", "student", "A", "s1", v) for i, v in enumerate([1, 2, 3])])
        pool = standardize(table, Source.STUDENT, Feature.A)
        np.testing.assert_allclose(pool.z, [-1.2247, 0.0, 1.2247], atol=1e-4)
        self.assertEqual(pool.mean, 2.0)
        self.assertAlmostEqual(pool.std, np.sqrt(2.0 / 3.0))
        self.assertIsNone(pool.warning)

    def test_constant_values(self):
        """零方差池全部为 0 并附带警告"""
        table = make_table([(f"l{i}", "crowd", "B", "c1", 5) for i in range(3)])
        with self.assertLogs("src.aggregate.standardizer", level="WARNING"):
            pool = standardize(table, Source.CROWD, Feature.B)
        np.testing.assert_array_equal(pool.z, [0.0, 0.0, 0.0])
        self.assertEqual(pool.warning, DEGENERATE_SCALE)

    def test_single_value(self):
        table = make_table([("l0", "auto", "C", "auto:v1", 4)])
        pool = standardize(table, Source.AUTO, Feature.C)
        np.testing.assert_array_equal(pool.z, [0.0])
        self.assertEqual(pool.warning, DEGENERATE_SCALE)

    def test_missing_pool(self):
        table = make_table([("l0", "auto", "C", "auto:v1", 4)])
        with self.assertRaises(AggregationError):
            standardize(table, Source.STUDENT, Feature.C)

    def test_pool_moments(self):
        """标准化后（平均前）均值 0、总体标准差 1"""
        rng = np.random.default_rng(7)
        rows = [(f"l{i % 40}", "student", "B", f"s{i % 3}", v) for i, v in enumerate(rng.integers(0, 101, 120))]
        pool = standardize(make_table(rows), Source.STUDENT, Feature.B)
        self.assertAlmostEqual(float(pool.z.mean()), 0.0, delta=1e-9)
        self.assertAlmostEqual(float(pool.z.std()), 1.0, delta=1e-9)

    def test_random_pools(self):
        """1000 个随机池标准化后均值 0、标准差 1"""
        rng = np.random.default_rng(19)
        for _ in range(1000):
            size = int(rng.integers(2, 30))
            raw = rng.normal(rng.uniform(-50, 50), rng.uniform(0.1, 20), size=size)
            rows = [(f"l{i}", "crowd", "C", "c1", v) for i, v in enumerate(raw)]
            pool = standardize(make_table(rows), Source.CROWD, Feature.C)
            self.assertAlmostEqual(float(pool.z.mean()), 0.0, delta=1e-9)
            self.assertAlmostEqual(float(pool.z.std()), 1.0, delta=1e-9)

    def test_per_annotator(self):
        """按标注者分别标准化"""
        rows = [
            ("l0", "student", "A", "s1", 1), ("l1", "student", "A", "s1", 3),
            ("l0", "student", "A", "s2", 10), ("l1", "student", "A", "s2", 30),
        ]
        pool = standardize(make_table(rows), Source.STUDENT, Feature.A, per_annotator=True)
        np.testing.assert_allclose(pool.z, [-1.0, 1.0, -1.0, 1.0])
        self.assertTrue(pool.per_annotator)

    def test_per_annotator_degenerate(self):
        rows = [
            ("l0", "student", "A", "s1", 1), ("l1", "student", "A", "s1", 3),
            ("l0", "student", "A", "s2", 2), ("l1", "student", "A", "s2", 2),
        ]
        pool = standardize(make_table(rows), Source.STUDENT, Feature.A, per_annotator=True)
        self.assertIn("s2", pool.warning)


class TestAveragePerLesion(unittest.TestCase):
    """测试按病灶平均"""

    def test_mean_of_annotators(self):
        """一个病灶的三个 z 值取算术平均"""
        # 池 [1, -1, 2, 0, 0, -2]：均值 0，总体标准差 √(10/6)
        values = [1, -1, 2, 0, 0, -2]
        lesions = ["x", "x", "x", "y", "y", "y"]
        rows = [(lesion, "student", "A", f"s{i}", v) for i, (lesion, v) in enumerate(zip(lesions, values))]
        matrix, _ = aggregate_table(make_table(rows))
        std = np.sqrt(10.0 / 6.0)
        values_col, available = matrix.column(Source.STUDENT, Feature.A)
        self.assertAlmostEqual(values_col[matrix.index_of("x")], (2.0 / 3.0) / std)
        self.assertAlmostEqual(values_col[matrix.index_of("y")], (-2.0 / 3.0) / std)
        self.assertTrue(available.all())

    def test_absent_cells(self):
        """没有标注的 (病灶, 来源, 特征) 不可用"""
        rows = [
            ("a", "student", "A", "s1", 1), ("b", "student", "A", "s1", 2),
            ("a", "crowd", "C", "c1", 7),
        ]
        matrix, warnings = aggregate_table(make_table(rows))
        values, available = matrix.column(Source.CROWD, Feature.C)
        self.assertFalse(available[matrix.index_of("b")])
        self.assertTrue(np.isnan(values[matrix.index_of("b")]))
        self.assertEqual(warnings, ["crowd:C: " + DEGENERATE_SCALE])
        self.assertEqual(matrix.sources, (Source.CROWD, Source.STUDENT))

    def test_single_annotations_identity(self):
        """每个病灶只有一条标注时矩阵等于标准化结果"""
        rows = [(f"l{i}", "expert", "B", "e1", v) for i, v in enumerate([3.0, 9.0, 4.5, 1.0])]
        table = make_table(rows)
        pools = standardize_all(table)
        matrix = average_per_lesion(pools)
        pool = pools[(Source.EXPERT, Feature.B)]
        values, _ = matrix.column(Source.EXPERT, Feature.B)
        for lesion, z in zip(pool.lesion_ids, pool.z):
            self.assertEqual(values[matrix.index_of(lesion)], z)

    def test_affine_invariance(self):
        """原始值做正仿射变换后矩阵不变"""
        rng = np.random.default_rng(11)
        raw = rng.normal(size=30)
        rows = [(f"l{i % 10}", "crowd", "A", f"c{i // 10}", v) for i, v in enumerate(raw)]
        shifted = [(lesion, s, f, a, 3.5 * v - 12.0) for lesion, s, f, a, v in rows]
        first, _ = aggregate_table(make_table(rows))
        second, _ = aggregate_table(make_table(shifted))
        self.assertTrue(first.equals(second, atol=1e-9))

    def test_availability_counts(self):
        """可用单元格数等于原始表中不同 (病灶, 来源, 特征) 的数量"""
        rows = [
            ("a", "student", "A", "s1", 1), ("a", "student", "A", "s2", 2),
            ("b", "student", "B", "s1", 20), ("c", "auto", "C", "auto:v1", 3),
            ("c", "auto", "A", "auto:v1", 0.2), ("a", "auto", "A", "auto:v1", 0.4),
        ]
        table = make_table(rows)
        matrix, _ = aggregate_table(table)
        distinct = {(r.lesion_id, r.source, r.feature) for r in table}
        self.assertEqual(int(matrix.availability.sum()), len(distinct))

    def test_spread(self):
        """spread 为病灶内标准化标注的总体标准差"""
        rows = [
            ("a", "student", "C", "s1", 0), ("a", "student", "C", "s2", 4),
            ("b", "student", "C", "s1", 2), ("b", "student", "C", "s2", 2),
        ]
        matrix, _ = aggregate_table(make_table(rows))
        spread = matrix.spread_column(Source.STUDENT, Feature.C)
        std = np.sqrt(2.0)
        self.assertAlmostEqual(spread[matrix.index_of("a")], 2.0 / std)
        self.assertEqual(spread[matrix.index_of("b")], 0.0)

    def test_fixed_lesion_order(self):
        """给定病灶顺序时未标注的病灶整行缺失"""
        rows = [("b", "student", "A", "s1", 1), ("a", "student", "A", "s1", 2)]
        matrix, _ = aggregate_table(make_table(rows), lesion_ids=["a", "b", "z"])
        self.assertEqual(matrix.lesion_ids, ("a", "b", "z"))
        self.assertFalse(matrix.availability[2].any())

    def test_unknown_lesion(self):
        rows = [("q", "student", "A", "s1", 1)]
        with self.assertRaises(AggregationError):
            aggregate_table(make_table(rows), lesion_ids=["a"])

    def test_empty_table(self):
        with self.assertRaises(AggregationError):
            aggregate_table(AnnotationTable())

    def test_inconsistent_availability(self):
        with self.assertRaises(AggregationError):
            FeatureMatrix(
                lesion_ids=("a",),
                sources=(Source.AUTO,),
                values=np.zeros((1, 1, 3)),
                availability=np.array([[[True, False, True]]]),
            )


class TestMatrixFile(unittest.TestCase):
    """测试 features.csv 的导出与导入"""

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        rows = [
            ("a", "student", "A", "s1", 1), ("a", "student", "A", "s2", 4),
            ("b", "student", "A", "s1", 2), ("c", "crowd", "B", "c1", 0.3),
            ("a", "crowd", "B", "c1", 0.7), ("b", "auto", "C", "auto:v1", 2),
            ("c", "auto", "C", "auto:v1", 5),
        ]
        self.matrix, _ = aggregate_table(make_table(rows))
        self.path = os.path.join(self.tmpdir, "features.csv")

    def tearDown(self):
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def _write(self, text: str) -> str:
        with open(self.path, "w", encoding="utf-8") as f:
            f.write(text)
        return self.path

    def test_round_trip(self):
        """导出后导入得到相同的矩阵与统计量"""
        export_matrix(self.matrix, self.path)
        loaded = import_matrix(self.path)
        self.assertTrue(loaded.equals(self.matrix, atol=1e-12))
        self.assertEqual(loaded.stats, self.matrix.stats)
        np.testing.assert_array_equal(np.isnan(loaded.spread), np.isnan(self.matrix.spread))

    def test_absent_value_serialized_empty(self):
        """缺失值写为空字段且 available=0"""
        export_matrix(self.matrix, self.path)
        with open(self.path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        self.assertTrue(lines[0].startswith("lesion_id,source,feature,value,available"))
        absent = [line for line in lines[1:] if line.startswith("b,crowd,B,")]
        self.assertEqual(len(absent), 1)
        self.assertTrue(absent[0].startswith("b,crowd,B,,0"))

    def test_minimal_columns(self):
        """只含五个必需列的文件也能读取"""
        path = self._write(
            "lesion_id,source,feature,value,available\n"
            "a,student,A,0.5,1\n"
            "b,student,A,,0\n"
        )
        matrix = import_matrix(path)
        values, available = matrix.column(Source.STUDENT, Feature.A)
        self.assertEqual(values[0], 0.5)
        self.assertFalse(available[1])

    def test_unknown_source(self):
        path = self._write("lesion_id,source,feature,value,available\na,robot,A,0.5,1\n")
        with self.assertRaises(AggregationError):
            import_matrix(path)

    def test_malformed_rows(self):
        path = self._write("lesion_id,source,feature,value,available\na,student,A,,1\n")
        with self.assertRaises(AggregationError):
            import_matrix(path)
        path = self._write("lesion_id,source,feature,value,available\na,student,A,x,1\n")
        with self.assertRaises(AggregationError):
            import_matrix(path)
        path = self._write("lesion_id,source,feature,value,available\na,student,A,0.5,1,extra\n")
        with self.assertRaises(AggregationError) as ctx:
            import_matrix(path)
        self.assertIn("expected 5 fields, got 6", str(ctx.exception))
        with self.assertRaises(AggregationError):
            import_matrix(os.path.join(self.tmpdir, "missing.csv"))


if __name__ == "__main__":
    unittest.main()
