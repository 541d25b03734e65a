import json
import math
import shutil

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flashgp.evalbench import (
    BenchConfig,
    angular_error,
    error_map,
    format_table,
    median_low,
    result_to_json,
    run_benchmark,
    save_results,
)
from flashgp.imgcore import DimensionError, EstimationError, IlluminationMap
from flashgp.scenesynth import load_manifest

from conftest import rotated_from_red, unit


class TestAngularError:
    def test_identical_vectors(self):
        assert angular_error(np.array([1.0, 1.0, 1.0]), np.array([1.0, 1.0, 1.0])) == 0.0

    def test_orthogonal_vectors(self):
        assert angular_error(np.array([1.0, 0, 0]), np.array([0, 1.0, 0])) == pytest.approx(90.0)

    def test_forty_five_degrees(self):
        expected = math.degrees(math.acos(1 / math.sqrt(2)))
        got = angular_error(np.array([1.0, 1.0, 0]), np.array([1.0, 0, 0]))
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(45.0, abs=1e-9)

    @given(
        st.lists(st.floats(0.01, 10), min_size=3, max_size=3),
        st.lists(st.floats(0.01, 10), min_size=3, max_size=3),
        st.floats(0.1, 100),
    )
    def test_symmetric_and_scale_invariant(self, a, b, k):
        a, b = np.array(a), np.array(b)
        assert angular_error(a, b) == pytest.approx(angular_error(b, a))
        assert angular_error(k * a, b) == pytest.approx(angular_error(a, b), abs=1e-6)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            angular_error(np.zeros(3), np.ones(3))


class TestMedianLow:
    def test_odd_count(self):
        assert median_low(np.array([90.0, 10.0, 20.0])) == 20.0

    def test_even_count_takes_lower_middle(self):
        assert median_low(np.array([1.0, 2.0, 3.0, 4.0])) == 2.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            median_low(np.array([]))


def constant_map(vec, h=2, w=3, mask=None):
    return IlluminationMap.constant(np.asarray(vec, dtype=float), h, w, mask)


class TestErrorMap:
    def test_equal_maps_zero(self):
        m = constant_map([1, 1, 1])
        _, mean, median = error_map(m, m)
        assert mean == 0.0 and median == 0.0

    def test_uniform_offset(self):
        est = constant_map(rotated_from_red(45.0))
        gt = constant_map([1, 0, 0])
        emap, mean, median = error_map(est, gt)
        assert mean == pytest.approx(45.0, abs=1e-9)
        assert median == pytest.approx(45.0, abs=1e-9)
        assert np.allclose(emap.data[emap.mask], 45.0, atol=1e-9)

    def test_three_pixel_statistics(self):
        gt_data = np.broadcast_to(np.array([1.0, 0.0, 0.0]), (1, 3, 3)).copy()
        est_data = np.stack(
            [rotated_from_red(10), rotated_from_red(20), rotated_from_red(90)]
        )[None, :, :]
        full = np.ones((1, 3), dtype=bool)
        _, mean, median = error_map(
            IlluminationMap(est_data, full), IlluminationMap(gt_data, full)
        )
        assert mean == pytest.approx(40.0, abs=1e-9)
        assert median == pytest.approx(20.0, abs=1e-9)

    def test_statistics_use_mask_intersection(self):
        gt = constant_map([1, 0, 0], 1, 2)
        est_data = np.stack([rotated_from_red(10), rotated_from_red(50)])[None, :, :]
        est_mask = np.array([[True, False]])
        _, mean, _ = error_map(IlluminationMap(est_data, est_mask), gt)
        assert mean == pytest.approx(10.0, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            error_map(constant_map([1, 1, 1], 2, 2), constant_map([1, 1, 1], 2, 3))

    def test_disjoint_masks_rejected(self):
        a = constant_map([1, 1, 1], 1, 2, np.array([[True, False]]))
        b = constant_map([1, 1, 1], 1, 2, np.array([[False, True]]))
        with pytest.raises(EstimationError, match="no overlapping"):
            error_map(a, b)

    @given(seed=st.integers(0, 1000))
    def test_statistics_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        angles = rng.uniform(0, 90, 12)
        est_a = np.stack([rotated_from_red(t) for t in angles])[None, :, :]
        est_b = np.stack([rotated_from_red(t) for t in rng.permutation(angles)])[None, :, :]
        gt = constant_map([1, 0, 0], 1, 12)
        full = np.ones((1, 12), dtype=bool)
        _, mean_a, med_a = error_map(IlluminationMap(est_a, full), gt)
        _, mean_b, med_b = error_map(IlluminationMap(est_b, full), gt)
        assert mean_a == pytest.approx(mean_b)
        assert med_a == pytest.approx(med_b)


class TestBenchmark:
    def test_structure_and_all_column(self, tiny_dataset):
        cfg = BenchConfig(methods=("gp",), include_global=False)
        result = run_benchmark(tiny_dataset, cfg)
        assert set(result.table) == {"gp+f", "gp"}
        cells = result.table["gp+f"]
        assert set(cells) == {"2", "3", "all", "failures"}
        per_n_means = [cells["2"]["mean"], cells["3"]["mean"]]
        assert cells["all"]["mean"] == pytest.approx(np.mean(per_n_means))
        assert cells["all"]["images"] == 2
        assert result.failures == 0
        assert "gp" in result.improvements

    def test_single_triplet_all_equals_cell(self, small_stack, tmp_path):
        from flashgp.scenesynth import build_dataset

        manifest = build_dataset([small_stack], tmp_path, n_values=(2,), seed=1)
        result = run_benchmark(manifest, BenchConfig(methods=("gp",), include_global=False))
        cells = result.table["gp"]
        assert cells["all"] == cells["2"]

    def test_deterministic_json(self, tiny_dataset):
        cfg = BenchConfig(methods=("gp", "msgp"))
        a = result_to_json(run_benchmark(tiny_dataset, cfg))
        b = result_to_json(run_benchmark(tiny_dataset, cfg))
        assert a == b

    def test_jobs_do_not_change_results(self, tiny_dataset):
        from flashgp.evalbench import result_to_dict

        base = result_to_dict(run_benchmark(tiny_dataset, BenchConfig(methods=("gp",))))
        parallel = result_to_dict(
            run_benchmark(tiny_dataset, BenchConfig(methods=("gp",), jobs=2))
        )
        base.pop("config")
        parallel.pop("config")
        assert base == parallel

    def test_failures_recorded_not_dropped(self, tiny_dataset, tmp_path):
        # doctor one record so the flash frame equals the ambient frame
        src = tiny_dataset.parent
        for item in src.iterdir():
            shutil.copy(item, tmp_path / item.name)
        records = load_manifest(tmp_path / "manifest.jsonl")
        broken = records[0]
        shutil.copy(tmp_path / broken["ambient"], tmp_path / broken["flash"])
        result = run_benchmark(
            tmp_path / "manifest.jsonl", BenchConfig(methods=("gp",), include_global=False)
        )
        flash_results = [r for r in result.per_image if r.variant == "flash"]
        failed = [r for r in flash_results if r.status == "failed"]
        assert len(failed) == 1
        assert "no measurable light" in failed[0].error
        assert result.table["gp+f"]["failures"] == 1
        assert result.table["gp+f"]["all"]["images"] == len(flash_results) - 1

    def test_global_variant_reported_as_auxiliary(self, tiny_dataset):
        result = run_benchmark(tiny_dataset, BenchConfig(methods=("gp",)))
        assert "gp-global" in result.table
        labels = {r.label for r in result.per_image}
        assert labels == {"gp+f", "gp", "gp-global"}

    def test_renderings(self, tiny_dataset, tmp_path):
        result = run_benchmark(tiny_dataset, BenchConfig(methods=("gp",)))
        text = format_table(result)
        assert "gp+f" in text and "all" in text and "failures: 0" in text
        paths = save_results(result, tmp_path)
        assert json.loads(paths["json"].read_text())["failures"] == 0
        assert paths["csv"].read_text().startswith("object,n,method,")

    def test_flash_improves_on_tiny_dataset(self, tiny_dataset):
        result = run_benchmark(tiny_dataset, BenchConfig(include_global=False))
        for method in ("gp", "msgp", "dgp"):
            imp = result.improvements[method]
            assert imp["median_pct"] > 0
            assert imp["mean_pct"] > 0
