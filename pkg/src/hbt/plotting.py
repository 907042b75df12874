"""
Gnuplot data and scripts for scan and histogram CSVs.
"""

import io
import logging
from pathlib import Path
from typing import Optional, Tuple

import pandas as pd

from src.hbt.correlation import extract_peaks, peak_spacing
from src.hbt.io import PathLike, is_histogram, read_csv, read_result_csv

logger = logging.getLogger(__name__)

SCAN_SCRIPT = """\
set terminal pngcairo size 900,600
set output '%(output)s'
set title '%(title)s'
set xlabel '%(xlabel)s'
set ylabel 'g^{(2)}'
set grid
%(annotation)s
plot '%(infile)s' using 1:2:3 with yerrorbars pt 7 ps 0.6 title 'Monte Carlo', \\
     '%(infile)s' using 1:2 with lines lw 1 notitle
"""

SINGLES_SCRIPT = """\
set terminal pngcairo size 900,600
set output '%(output)s'
set title '%(title)s'
set xlabel '%(xlabel)s'
set ylabel 'singles (mean intensity)'
set yrange [0:*]
set grid
plot '%(infile)s' using 1:5 with linespoints pt 7 ps 0.6 title 'D_2 singles', \\
     '%(infile)s' using 1:4 with lines lw 1 title 'D_1 singles'
"""

HISTOGRAM_SCRIPT = """\
set terminal pngcairo size 900,600
set output '%(output)s'
set title '%(title)s'
set xlabel '{/Symbol t} (ns)'
set ylabel 'counts'
set grid
set style fill solid 0.5
plot '%(infile)s' using 1:2 with boxes title 'coincidences'
"""

_XLABELS = {
    "singles": "x_2 (mm), D_1 at 0",
    "fixed": "x_2 (mm), D_1 at 0",
    "counter": "x_2 (mm), D_1 at -x_2",
    "coscan": "x_1 = x_2 (mm)",
}


def _out(buffer: io.StringIO, row):
    buffer.write("\t".join(str(x) for x in row) + "\n")


def _scan_kind(name: str) -> Optional[str]:
    """Guess the scan kind from a file name written by a run."""
    for kind in _XLABELS:
        if kind in name:
            return kind
    return None


def _scan_data(frame: pd.DataFrame) -> str:
    data = io.StringIO()
    _out(data, ["# x_mm", "g2", "stderr", "singles_d1", "singles_d2"])
    for row in frame.itertuples(index=False):
        _out(
            data,
            [
                f"{row.position_m * 1e3:.9g}",
                f"{row.g2:.9g}",
                f"{row.stderr:.9g}",
                f"{row.singles_d1:.9g}",
                f"{row.singles_d2:.9g}",
            ],
        )
    return data.getvalue()


def _histogram_data(frame: pd.DataFrame) -> str:
    data = io.StringIO()
    _out(data, ["# tau_ns", "count"])
    for row in frame.itertuples(index=False):
        _out(data, [f"{row.tau_s * 1e9:.9g}", int(row.count)])
    return data.getvalue()


def _half_period_annotation(path: PathLike) -> str:
    spacing = peak_spacing(extract_peaks(read_result_csv(path)))
    if spacing is None:
        return "set label 1 'half period: n/a' at graph 0.05, graph 0.92"
    mm = spacing * 1e3
    return (
        f"set label 1 'half period: {mm:.3f} mm' at graph 0.05, graph 0.92\n"
        f"set arrow 1 from {-mm / 2:.6g}, graph 0.85 to {mm / 2:.6g}, graph 0.85 heads"
    )


def emit_plot_data(
    path: PathLike, output: Optional[str] = None, kind: Optional[str] = None
) -> Tuple[str, str]:
    """
    Build gnuplot data and script text for a result or histogram CSV.

    Scan CSVs are plotted as g2 with error bars against position in mm, or as
    the singles profiles for a singles scan; a counter-scan also gets its
    half-period annotated. Histogram CSVs are plotted as counts against tau in ns.

    Args:
        path: CSV written by a run
        output: PNG name set in the script; defaults to the CSV stem
        kind: One of "singles", "fixed", "counter", "coscan"; guessed from the
            file name when not given

    Returns:
        (data text, script text); the script reads the data from <stem>.dat
    """
    path = Path(path)
    frame = read_csv(path)
    config = {
        "infile": f"{path.stem}.dat",
        "output": output or f"{path.stem}.png",
        "title": path.stem,
    }

    if is_histogram(frame):
        return _histogram_data(frame), HISTOGRAM_SCRIPT % config

    if kind is None:
        kind = _scan_kind(path.stem)
    elif kind not in _XLABELS:
        raise ValueError(f"Unknown scan kind: {kind}")
    config["xlabel"] = _XLABELS.get(kind, "position (mm)")
    if kind == "singles":
        return _scan_data(frame), SINGLES_SCRIPT % config
    config["annotation"] = _half_period_annotation(path) if kind == "counter" else ""
    return _scan_data(frame), SCAN_SCRIPT % config


def write_plot_files(
    path: PathLike, out_dir: Optional[PathLike] = None, kind: Optional[str] = None
) -> Tuple[Path, Path]:
    """Write <stem>.dat and <stem>.gp next to the CSV (or into out_dir)."""
    path = Path(path)
    target = Path(out_dir) if out_dir else path.parent
    data, script = emit_plot_data(path, kind=kind)
    data_path = target / f"{path.stem}.dat"
    script_path = target / f"{path.stem}.gp"
    data_path.write_text(data)
    script_path.write_text(script)
    logger.info(f"Wrote gnuplot files {data_path} and {script_path}")
    return data_path, script_path
