"""
評価レポートのテスト

テスト対象: syn / all 指標の行構成、エントリ集約とビン集計、CSV出力
"""
import json
import math

import numpy as np
import pandas as pd
import pytest

from app.core.exceptions import InvariantViolationError, ShapeMismatchError
from app.core.report import (
    EvalEntry,
    evaluate_entries,
    evaluate_scenes,
    load_entry_specs,
    write_index_series_csv,
    write_report_csv,
)
from app.evaluation.metrics import R2_KEY, EvalSubsetKind, IndexSeriesPoint
from app.stack.model import BandSpec, Modality, Scene


def _clear_scene(data: np.ndarray) -> Scene:
    """光学2バンド + SAR1バンドの全晴天Scene"""
    T, _, H, W = data.shape
    return Scene(
        bands=[BandSpec.optical("B4-Red"), BandSpec.optical("B8-NIR"), BandSpec.sar("VV")],
        data=data,
        clear_mask={
            Modality.OPTICAL: np.ones((T, H, W), dtype=np.uint8),
            Modality.SAR: np.ones((T, H, W), dtype=np.uint8),
        },
    )


def _pair(rng, error=0.01, T=2, H=3, W=3):
    truth = rng.uniform(0.1, 0.8, size=(T, 3, H, W)).astype(np.float32)
    pred = truth.copy()
    pred[:, :2] += np.float32(error)
    return _clear_scene(pred), _clear_scene(truth)


class TestEvaluateScenes:
    """単一エントリ評価のテスト"""

    def test_row_order(self, rng):
        pred, truth = _pair(rng)
        holdout = np.zeros((2, 3, 3), dtype=np.uint8)
        holdout[0, 1, 1] = 1
        report = evaluate_scenes(pred, truth, holdout, "mc")
        keys = [(r.subset.value, r.metric, r.band) for r in report.metrics]
        per_subset = [
            ("psnr", "ALL"), ("mae", "ALL"), (R2_KEY, "ALL"),
            ("psnr", "B4-Red"), ("psnr", "B8-NIR"),
        ]
        assert keys == [("syn",) + k for k in per_subset] + [("all",) + k for k in per_subset]

    def test_uniform_offset_metrics(self, rng):
        pred, truth = _pair(rng, error=0.1)
        holdout = np.ones((2, 3, 3), dtype=np.uint8)
        report = evaluate_scenes(pred, truth, holdout, "damped")
        assert report.value(EvalSubsetKind.SYN, "mae") == pytest.approx(0.1, abs=1e-6)
        assert report.value(EvalSubsetKind.ALL, "psnr") == pytest.approx(20.0, abs=1e-4)
        assert report.value(EvalSubsetKind.ALL, R2_KEY) == pytest.approx(1.0, abs=1e-6)
        assert report.binned is None

    def test_sar_bands_ignored(self, rng):
        pred, truth = _pair(rng, error=0.0)
        data = np.array(pred.data, copy=True)
        data[:, 2] = -data[:, 2]
        report = evaluate_scenes(_clear_scene(data), truth, np.ones((2, 3, 3)), "mc")
        assert report.value(EvalSubsetKind.ALL, "mae") == 0.0

    def test_empty_holdout_omits_syn(self, rng):
        pred, truth = _pair(rng)
        report = evaluate_scenes(pred, truth, np.zeros((2, 3, 3), dtype=np.uint8), "mc")
        assert {r.subset for r in report.metrics} == {EvalSubsetKind.ALL}

    def test_perfect_prediction(self, rng):
        _, truth = _pair(rng)
        report = evaluate_scenes(truth, truth, np.ones((2, 3, 3), dtype=np.uint8), "mc")
        assert report.value(EvalSubsetKind.ALL, "psnr") == math.inf
        assert report.value(EvalSubsetKind.ALL, "mae") == 0.0

    def test_holdout_outside_truth_clear(self, rng):
        pred, truth = _pair(rng)
        mask = np.ones((2, 3, 3), dtype=np.uint8)
        mask[0, 0, 0] = 0
        truth = truth.with_optical_mask(mask)
        holdout = np.zeros((2, 3, 3), dtype=np.uint8)
        holdout[0, 0, 0] = 1
        with pytest.raises(InvariantViolationError):
            evaluate_scenes(pred, truth, holdout, "mc")

    def test_holdout_shape_mismatch(self, rng):
        pred, truth = _pair(rng)
        with pytest.raises(ShapeMismatchError):
            evaluate_scenes(pred, truth, np.ones((2, 3, 4)), "mc")


class TestEvaluateEntries:
    """複数エントリ評価のテスト"""

    def test_binning_uses_entry_cloud_ratio(self, rng):
        entries = []
        for error, ratio in [(0.01, 0.35), (0.03, 0.36), (0.05, 0.9)]:
            pred, truth = _pair(rng, error=error)
            entries.append(EvalEntry(pred=pred, truth=truth,
                                     holdout=np.ones((2, 3, 3), dtype=np.uint8),
                                     cloud_ratio=ratio))
        report = evaluate_entries(entries, "mc", edges=[0.3, 0.5, 0.95])
        first, last = report.binned
        assert first.n == 2
        assert first.median_mae == pytest.approx(0.02, abs=1e-6)
        assert last.n == 1
        assert last.median_mae == pytest.approx(0.05, abs=1e-6)
        assert report.value(EvalSubsetKind.ALL, "mae") == pytest.approx(0.03, abs=1e-6)

    def test_cloud_ratio_derived_from_holdout(self, rng):
        entries = []
        for _ in range(2):
            pred, truth = _pair(rng, H=2, W=2)
            holdout = np.zeros((2, 2, 2), dtype=np.uint8)
            holdout[:, 0] = 1
            entries.append(EvalEntry(pred=pred, truth=truth, holdout=holdout))
        report = evaluate_entries(entries, "mc", edges=[0.3, 0.6])
        assert report.binned[0].n == 2


class TestCsvOutput:
    """CSV出力のテスト"""

    def test_metrics_csv(self, tmp_path, rng):
        _, truth = _pair(rng)
        report = evaluate_scenes(truth, truth, np.ones((2, 3, 3), dtype=np.uint8), "linear")
        written = write_report_csv(report, tmp_path / "out")
        assert set(written) == {"metrics"}

        lines = written["metrics"].read_text(encoding="utf-8").splitlines()
        assert lines[0] == "method,subset,metric,band,value"
        assert lines[1] == "linear,syn,psnr,ALL,inf"
        assert lines[2] == "linear,syn,mae,ALL,0"

        frame = pd.read_csv(written["metrics"])
        assert list(frame["subset"].unique()) == ["syn", "all"]

    def test_binned_csv_has_empty_cells(self, tmp_path, rng):
        entries = []
        for ratio in (0.35, 0.4):
            pred, truth = _pair(rng)
            entries.append(EvalEntry(pred=pred, truth=truth,
                                     holdout=np.ones((2, 3, 3), dtype=np.uint8),
                                     cloud_ratio=ratio))
        report = evaluate_entries(entries, "mc", edges=[0.3, 0.5, 0.95])
        written = write_report_csv(report, tmp_path)
        lines = written["binned"].read_text(encoding="utf-8").splitlines()
        assert lines[0] == "method,bin_low,bin_high,median_mae,q25,q75,n"
        assert lines[2] == "mc,0.5,0.95,,,,0"

    def test_index_series_csv(self, tmp_path):
        points = [
            IndexSeriesPoint(day=0, date="2021-06-01", mean=0.25, clear_pixels=4),
            IndexSeriesPoint(day=1, date="2021-06-06", mean=None, clear_pixels=0),
        ]
        path = write_index_series_csv(points, "ndvi", tmp_path / "out")
        assert path.name == "index_series.csv"
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines == [
            "index_type,day,date,mean,clear_pixels",
            "ndvi,0,2021-06-01,0.25,4",
            "ndvi,1,2021-06-06,,0",
        ]


class TestEntrySpecs:
    def test_paths_relative_to_file(self, tmp_path):
        listing = tmp_path / "entries.json"
        listing.write_text(json.dumps([
            {"pred": "p0", "truth": "t0", "holdout": "h0", "cloud_ratio": 0.4},
        ]), encoding="utf-8")
        specs = load_entry_specs(listing)
        assert specs[0].pred == tmp_path / "p0"
        assert specs[0].cloud_ratio == 0.4

    def test_empty_list_rejected(self, tmp_path):
        listing = tmp_path / "entries.json"
        listing.write_text("[]", encoding="utf-8")
        with pytest.raises(ValueError):
            load_entry_specs(listing)
