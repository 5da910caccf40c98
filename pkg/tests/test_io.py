import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from logchemo.config import SimConfig, reference_config
from logchemo.diagnostics import FunctionalReport
from logchemo.driver import run
from logchemo.grid import GridSpec
from logchemo.io import (PRESET_NAMES, ConfigSyntaxError, DuplicateKeyError, InvalidValueError,
                         LowerBoundError, MissingKeyError, SensitivityHypothesisError,
                         UnknownKeyError, UnknownPresetError, check_csv, check_reports,
                         emit_heatmap, emit_timeseries, format_config, parse_config, preset,
                         read_heatmap, read_timeseries)

MINIMAL = "[grid]\nnx = 64\nny = 64\n"


@pytest.fixture(scope="module")
def short_run():
    cfg = reference_config().with_(grid=GridSpec(16, 16), run__t_end=0.05, run__dt_max=1e-3,
                                   run__report_every=7)
    return run(cfg)


def test_minimal_config_is_reference():
    assert parse_config(MINIMAL) == reference_config()


def test_comments_and_blank_lines():
    cfg = parse_config("# header\n\n[grid]\nnx = 16  # cells\nny = 8\n[species]\nchi = 2.5\n")
    assert cfg.grid.shape == (16, 8)
    assert cfg.species.chi == 2.5


def test_delta_zero_rejected_with_lower_bound_message():
    with pytest.raises(LowerBoundError, match=r"c_0 \\ge \\delta for some \\delta > 0"):
        parse_config(MINIMAL + "[species]\ndelta = 0\n")


def test_duplicate_key_reports_line():
    with pytest.raises(DuplicateKeyError, match="line 4"):
        parse_config(MINIMAL + "nx = 32\n")


@pytest.mark.parametrize("text,err", [
    (MINIMAL + "[species]\ncolour = red\n", UnknownKeyError),
    (MINIMAL + "[extras]\n", UnknownKeyError),
    ("[grid]\nnx = 64\n", MissingKeyError),
    (MINIMAL + "[run]\nt_end = soon\n", InvalidValueError),
    (MINIMAL + "[run]\ntrack = maybe\n", InvalidValueError),
    (MINIMAL + "[species]\nf = cubic\n", InvalidValueError),
    (MINIMAL + "[species]\np = 0.5\n", InvalidValueError),
    (MINIMAL + "[fluid]\nmode = stokes-ish\n", ValueError),
    ("nx = 4\n", ConfigSyntaxError),
    (MINIMAL + "[run\n", ConfigSyntaxError),
    (MINIMAL + "[run]\njust words\n", ConfigSyntaxError),
])
def test_invalid_configs(text, err):
    with pytest.raises(err):
        parse_config(text)


def test_conditional_needs_flat_sensitivity():
    with pytest.raises(SensitivityHypothesisError, match=r"f'\(0\) = 0 required"):
        parse_config(MINIMAL + "[species]\nf = linear\n[run]\nconditional = true\n")
    assert parse_config(MINIMAL + "[run]\nconditional = true\n").run.conditional


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_format_round_trip(name):
    cfg = preset(name)
    assert parse_config(format_config(cfg)) == cfg


def test_table_round_trip():
    s = np.linspace(0, 1, 6)
    text = MINIMAL + "[species]\nf = table\ntable_s = " + ",".join(map(str, s)) + \
        "\ntable_f = " + ",".join(map(str, s ** 2)) + "\n"
    cfg = parse_config(text)
    assert cfg.sensitivity.kind == "table"
    assert parse_config(format_config(cfg)) == cfg


def test_presets():
    assert len(PRESET_NAMES) == 6
    assert preset("stabilization") == reference_config()
    assert preset("epsilon-family").run.eps_list == (1e-1, 1e-2, 1e-3, 1e-4)
    assert preset("conditional-energy").sensitivity.flat_at_origin
    assert preset("fluid-free-3d-proxy").fluid.mode == "none"
    with pytest.raises(UnknownPresetError) as info:
        preset("nope")
    for name in PRESET_NAMES:
        assert name in str(info.value)


def test_timeseries_round_trip_is_bitwise(short_run, tmp_path):
    path = emit_timeseries(short_run, tmp_path / "ts.csv")
    back = read_timeseries(path)
    assert len(back) == short_run.accepted // 7 + 1
    for a, b in zip(short_run.reports, back):
        for x, y in zip(a.row(), b.row()):
            assert x == y or (np.isnan(x) and np.isnan(y))
    assert path.read_text().splitlines()[0] == ",".join(FunctionalReport.columns())


def test_empty_timeseries_has_header_only(tmp_path):
    path = emit_timeseries([], tmp_path / "empty.csv")
    assert path.read_text() == ",".join(FunctionalReport.columns()) + "\n"
    assert read_timeseries(path) == []
    (tmp_path / "blank.csv").write_text("")
    with pytest.raises(ValueError):
        read_timeseries(tmp_path / "blank.csv")


def test_check_reports_pass_and_detect_violation(short_run, tmp_path):
    assert all(ok for _, ok, _ in check_reports(short_run.reports))
    path = emit_timeseries(short_run, tmp_path / "ts.csv")
    assert all(ok for _, ok, _ in check_csv(path))
    lines = path.read_text().splitlines()
    cols = lines[0].split(",")
    row = lines[-1].split(",")
    row[cols.index("mass_n")] = repr(2 * float(row[cols.index("mass_n")]))
    path.write_text("\n".join(lines[:-1] + [",".join(row)]) + "\n")
    res = dict((n, ok) for n, ok, _ in check_csv(path))
    assert not res["mass conservation"]
    assert not check_reports([])[0][1]


def test_heatmap_extremes_and_orientation(tmp_path):
    a = np.zeros((4, 3))
    a[3, 2] = 1.0  # largest x, largest y: top-right pixel
    img = read_heatmap(emit_heatmap(a, tmp_path / "a.pgm", (0.0, 1.0)))
    assert img.shape == (3, 4)
    assert img[0, 3] == 65535
    assert img.sum() == 65535
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n4 3\n65535\n")


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 20), st.floats(-5, 5), st.floats(0.1, 10))
def test_heatmap_ramp_monotone(tmp_path_factory, n, lo, width):
    hi = lo + width
    ramp = np.linspace(lo, hi, n)[:, None] * np.ones((1, 2))
    img = read_heatmap(emit_heatmap(ramp, tmp_path_factory.mktemp("h") / "r.pgm", (lo, hi)))
    row = img[0].astype(int)
    assert row[0] == 0 and row[-1] == 65535
    assert np.all(np.diff(row) >= 0)


def test_heatmap_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        emit_heatmap(np.zeros((2, 2)), tmp_path / "x.pgm", (1.0, 1.0))
    with pytest.raises(ValueError):
        emit_heatmap(np.full((2, 2), np.nan), tmp_path / "x.pgm", (0.0, 1.0))
