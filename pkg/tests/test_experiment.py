import numpy as np
import pytest

from wedgetomo.adsir import AdsirConfig
from wedgetomo.experiment import (
    EST_PUBLISHED_BASELINE,
    ExperimentPlan,
    format_report,
    plan_angles,
    report,
    run_experiment,
)
from wedgetomo.fileio import read_csv_rows, read_image, write_image
from wedgetomo.phantom import default_phantom
from wedgetomo.projector import ImageGrid


@pytest.fixture()
def tiny_plan(tmp_path):
    # quarter-resolution phantom and token iteration counts: exercises the
    # full pipeline, not reconstruction quality
    phantom = default_phantom(3)
    small = ImageGrid(phantom.values[::4, ::4].copy(), 1.0)
    phantom_path = tmp_path / "phantom_in.f32"
    write_image(phantom_path, small)
    return ExperimentPlan(
        view_counts=(31,),
        modes=("es", "ea"),
        methods=("sart", "adsir"),
        phantom_path=str(phantom_path),
        sart_cycles=3,
        adsir_cycles=1,
        warm_start_cycles=2,
        adsir_config=AdsirConfig(patch_edge=4, n_atoms=24, sparsity=3, ksvd_sweeps=1),
        output_dir=tmp_path / "out",
    )


class TestPlanAngles:
    def test_es_69_has_endpoints(self):
        plan = ExperimentPlan()
        angles = plan_angles(plan, "es", 69)
        assert len(angles) == 69
        assert angles.angles[0] == pytest.approx(-72.6)
        assert angles.angles[-1] == pytest.approx(72.6)

    def test_es_55_and_31_from_half_count_32(self):
        plan = ExperimentPlan()
        assert len(plan_angles(plan, "es", 55)) == 55
        assert len(plan_angles(plan, "es", 31)) == 31

    def test_ea_counts(self):
        plan = ExperimentPlan()
        assert len(plan_angles(plan, "ea", 55)) == 55

    def test_unknown_es_count_rejected(self):
        with pytest.raises(ValueError):
            ExperimentPlan(view_counts=(42,))


class TestRunExperiment:
    def test_row_count_and_artifacts(self, tiny_plan):
        rows = run_experiment(tiny_plan)
        assert len(rows) == 4  # 1 view count x 2 modes x 2 methods
        out = tiny_plan.output_dir
        assert (out / "results.csv").exists()
        assert (out / "phantom.f32").exists()
        for row in rows:
            name = f"recon_{row['views']:03d}_{row['mode']}_{row['method']}.f32"
            assert (out / name).exists()
        csv_rows = read_csv_rows(out / "results.csv")
        assert len(csv_rows) == 4
        assert set(csv_rows[0]) == {"views", "mode", "method", "rmse", "ssim", "seconds"}

    def test_deterministic_apart_from_timing(self, tiny_plan, tmp_path):
        rows_a = run_experiment(tiny_plan)
        first_images = {
            p.name: p.read_bytes() for p in tiny_plan.output_dir.glob("*.f32")
        }
        tiny_plan.output_dir = tmp_path / "out2"
        rows_b = run_experiment(tiny_plan)
        for a, b in zip(rows_a, rows_b):
            assert a["rmse"] == b["rmse"]
            assert a["ssim"] == b["ssim"]
        for p in tiny_plan.output_dir.glob("*.f32"):
            assert p.read_bytes() == first_images[p.name]

    def test_invalid_plan_axes(self):
        with pytest.raises(ValueError):
            ExperimentPlan(modes=())
        with pytest.raises(ValueError):
            ExperimentPlan(methods=("fbp",))


class TestReport:
    def rows_from_published_table(self):
        table = {
            (69, "es"): {"sart": (615.0, 0.9923), "adsir": (386.8, 0.9962)},
            (69, "ea"): {"sart": (608.6, 0.9923), "adsir": (388.3, 0.9960)},
            (55, "es"): {"sart": (819.9, 0.9883), "adsir": (395.5, 0.9960)},
            (55, "ea"): {"sart": (833.8, 0.9878), "adsir": (399.9, 0.9960)},
            (31, "es"): {"sart": (1719.4, 0.9627), "adsir": (550.8, 0.9936)},
            (31, "ea"): {"sart": (1716.2, 0.9629), "adsir": (564.9, 0.9935)},
        }
        rows = []
        for (views, mode), methods in table.items():
            for method, (r, s) in methods.items():
                rows.append(
                    {"views": views, "mode": mode, "method": method, "rmse": r, "ssim": s}
                )
        return rows

    def test_ratio_from_published_values(self):
        summary = report(self.rows_from_published_table())
        assert summary["adsir_sart_rmse_ratio"][(31, "es")] == pytest.approx(
            550.8 / 1719.4, abs=1e-12
        )
        assert summary["adsir_sart_rmse_ratio"][(31, "es")] == pytest.approx(0.320, abs=5e-4)

    def test_mode_gap_from_published_values(self):
        summary = report(self.rows_from_published_table())
        gap = summary["es_ea_relative_gap"][(55, "sart")]
        assert gap == pytest.approx(abs(819.9 - 833.8) / 833.8, abs=1e-12)
        assert gap == pytest.approx(0.017, abs=1e-3)

    def test_identical_modes_give_zero_gap(self):
        rows = [
            {"views": 31, "mode": "es", "method": "sart", "rmse": 5.0, "ssim": 0.9},
            {"views": 31, "mode": "ea", "method": "sart", "rmse": 5.0, "ssim": 0.9},
        ]
        summary = report(rows)
        assert summary["es_ea_relative_gap"][(31, "sart")] == 0.0

    def test_flags_on_published_values(self):
        summary = report(self.rows_from_published_table())
        assert summary["flags"]["adsir_beats_sart_rmse"]
        assert summary["flags"]["adsir_beats_sart_ssim"]
        assert summary["flags"]["es_ea_within_10pct"]
        assert summary["flags"]["adsir_more_robust"]

    def test_empty_rows_rejected(self):
        with pytest.raises(ValueError):
            report([])

    def test_format_report_mentions_baseline(self):
        text = format_report(report(self.rows_from_published_table()))
        assert "EST baseline" in text
        for views, scores in EST_PUBLISHED_BASELINE.items():
            assert str(scores["rmse"]) in text
