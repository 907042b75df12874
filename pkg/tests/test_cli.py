import json
import shutil
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.hbt.apparatus import ApparatusConfig, dump_config
from src.hbt.cli import EXIT_INVALID, EXIT_IO, EXIT_OK, main
from src.hbt.correlation import extract_peaks, peak_spacing
from src.hbt.experiments import read_summary
from src.hbt.io import read_events, read_result_csv, write_events
from src.hbt.plotting import emit_plot_data
from src.hbt.schemas import DetectorId, PhotonEventStream


def _run(out, *extra):
    return main(["run", "--out", str(out), "--seed", "42", "--no-progress", *extra])


def test_run_counter_scan_writes_outputs(tmp_path):
    out = tmp_path / "out"
    assert _run(out, "--experiment", "g2-counter", "--ensemble", "400", "--batches", "4") == EXIT_OK

    frame = pd.read_csv(out / "g2-counter.csv")
    assert list(frame.columns) == ["position_m", "g2", "stderr", "singles_d1", "singles_d2"]
    assert len(frame) == 161
    assert frame["position_m"].iloc[0] == pytest.approx(-10e-3)
    assert frame["position_m"].iloc[-1] == pytest.approx(10e-3)

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["experiment"] == "g2-counter"
    assert manifest["seed"] == 42
    for path in manifest["outputs"].values():
        assert Path(path).exists()

    summary = read_summary(out / "summary.txt")
    assert "g2_counter.peak_spacing_m" in summary
    assert "g2_counter.chi2_per_dof" in summary


def test_summary_matches_an_independent_reader(tmp_path):
    out = tmp_path / "out"
    assert _run(out, "--experiment", "g2-fixed", "--ensemble", "400", "--batches", "4") == EXIT_OK

    spacing = peak_spacing(extract_peaks(read_result_csv(out / "g2-fixed.csv")))
    summary = read_summary(out / "summary.txt")
    if spacing is None:
        assert summary["g2_fixed.peak_spacing_m"] == "none"
    else:
        assert float(summary["g2_fixed.peak_spacing_m"]) == pytest.approx(spacing, rel=1e-8)


def test_reruns_are_byte_identical(tmp_path):
    args = ["--experiment", "g2-coscan", "--ensemble", "200", "--batches", "4"]
    assert _run(tmp_path / "a", *args) == EXIT_OK
    assert _run(tmp_path / "b", *args, "--workers", "3") == EXIT_OK
    first = (tmp_path / "a" / "g2-coscan.csv").read_bytes()
    assert first == (tmp_path / "b" / "g2-coscan.csv").read_bytes()
    assert (tmp_path / "a" / "summary.txt").read_bytes() == (tmp_path / "b" / "summary.txt").read_bytes()


def test_histogram_run(tmp_path, config_file):
    out = tmp_path / "out"
    code = _run(
        out, "--experiment", "coincidence-histogram", "--config", str(config_file),
        "--duration", "0.01", "--events",
    )
    assert code == EXIT_OK

    frame = pd.read_csv(out / "coincidence-histogram.csv")
    assert list(frame.columns) == ["tau_s", "count"]
    assert len(frame) == 100
    assert (out / "events_d1.txt").exists()
    assert "coincidence_histogram.g2_windowed" in read_summary(out / "summary.txt")


def test_invalid_config_exits_2(tmp_path):
    path = tmp_path / "bad.env"
    path.write_text(dump_config(ApparatusConfig()).replace("groove_width=8e-05", "groove_width=0.0003"))
    assert _run(tmp_path / "out", "--config", str(path)) == EXIT_INVALID


def test_unknown_config_key_exits_2(tmp_path):
    path = tmp_path / "bad.env"
    path.write_text("slit_count=3\n")
    assert _run(tmp_path / "out", "--config", str(path)) == EXIT_INVALID


def test_missing_config_exits_3(tmp_path):
    assert _run(tmp_path / "out", "--config", str(tmp_path / "missing.env")) == EXIT_IO


def test_unwritable_output_exits_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = _run(blocker / "out", "--experiment", "g2-fixed", "--ensemble", "40", "--batches", "4")
    assert code == EXIT_IO


def test_plot_counter_scan_has_half_period(tmp_path):
    out = tmp_path / "out"
    assert _run(out, "--experiment", "g2-counter", "--ensemble", "400", "--batches", "4") == EXIT_OK
    assert main(["plot", str(out / "g2-counter.csv"), "--out", str(tmp_path)]) == EXIT_OK

    script = (tmp_path / "g2-counter.gp").read_text()
    assert "half period" in script
    assert "yerrorbars" in script
    assert (tmp_path / "g2-counter.dat").read_text().startswith("# x_mm")


def test_plot_histogram_uses_nanoseconds(tmp_path):
    path = tmp_path / "coincidence-histogram.csv"
    pd.DataFrame({"tau_s": [-1e-10, 0.0, 1e-10], "count": [3, 9, 4]}).to_csv(path, index=False)
    assert main(["plot", str(path)]) == EXIT_OK

    script = (tmp_path / "coincidence-histogram.gp").read_text()
    assert "(ns)" in script
    assert "boxes" in script
    assert "0.1\t4" in (tmp_path / "coincidence-histogram.dat").read_text()


def test_plot_empty_csv_exits_2(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    assert main(["plot", str(path)]) == EXIT_INVALID


def test_plot_header_only_csv_exits_2(tmp_path):
    path = tmp_path / "header.csv"
    path.write_text("tau_s,count\n")
    assert main(["plot", str(path)]) == EXIT_INVALID


def test_ensemble_below_batches_exits_2(tmp_path):
    assert _run(tmp_path / "out", "--ensemble", "5", "--batches", "20") == EXIT_INVALID


def test_singles_scan_plots_the_singles_profile(tmp_path):
    out = tmp_path / "out"
    assert _run(out, "--experiment", "singles-scan", "--ensemble", "200", "--batches", "4") == EXIT_OK

    script = (out / "singles-scan.gp").read_text()
    assert "using 1:5" in script
    assert "set ylabel 'singles" in script
    assert "g^{(2)}" not in script
    summary = read_summary(out / "summary.txt")
    assert "singles_scan.fringe_ratio" in summary


def test_scan_kind_is_passed_not_guessed(tmp_path):
    out = tmp_path / "out"
    assert _run(out, "--experiment", "g2-counter", "--ensemble", "200", "--batches", "4") == EXIT_OK
    renamed = tmp_path / "scan-a.csv"
    shutil.copy(out / "g2-counter.csv", renamed)

    _, guessed = emit_plot_data(renamed)
    _, explicit = emit_plot_data(renamed, kind="counter")
    assert "half period" not in guessed
    assert "half period" in explicit
    assert "D_1 at -x_2" in explicit
    with pytest.raises(ValueError):
        emit_plot_data(renamed, kind="sideways")


def test_event_files_round_trip(tmp_path):
    times = np.cumsum(np.random.default_rng(9).exponential(1e-5, 500)) + 0.123456789012
    events = PhotonEventStream(detector_id=DetectorId.D2, timestamps=times, duration=1.0)
    path = write_events(events, tmp_path / "events_d2.txt")

    loaded = read_events(path, DetectorId.D2, duration=1.0)
    assert loaded.detector_id == DetectorId.D2
    assert loaded.count == events.count
    np.testing.assert_allclose(loaded.timestamps, times, rtol=1e-11, atol=0.0)
