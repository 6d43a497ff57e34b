"""BER measurement, geometry reports, fairness, comparison tables, SVG output."""
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from superconst.baselines import (QpskNomaConfig, ber_16qam,
                                  ber_qpsk_noma_strong_sic,
                                  ber_qpsk_noma_weak, gray_16qam_codebook)
from superconst.channel import snr2_from
from superconst.errors import ConfigError, NoDataError
from superconst.evaluate import (BerPoint, analyze_codebook, ber_points_csv,
                                 ber_report_dict, compare_with_baselines,
                                 comparison_csv, constellation_csv,
                                 extract_constellation, fairness_gap,
                                 literature_rows, measure_ber,
                                 render_constellation_svg)
from superconst.model import build_codebook


@pytest.fixture(scope="module")
def system(small_trained_checkpoint):
    return small_trained_checkpoint.system


def test_trained_model_decodes_noiseless_codebook_points(system):
    from superconst.model import decode_batch, hard_bits
    cb = build_codebook(system.tx)
    for rx, h, lo, hi in ((system.rx1, 1.0, 0, 2), (system.rx2, 2.0, 2, 4)):
        probs = decode_batch(rx, cb.symbols, gain=h)  # equalized = symbol itself
        assert np.array_equal(hard_bits(probs), cb.bits[:, lo:hi])


def test_measure_ber_zero_noise_is_zero_and_flagged(system):
    points = measure_ber(system, 1.0, 2.0, [80.0], seed=1, max_symbols=50_000)
    p = points[0]
    assert p.ber1 == 0.0 and p.ber2 == 0.0
    assert p.zero_errors1 and p.zero_errors2
    assert p.n_bits == 100_000


def test_measure_ber_reproducible_and_stderr_exact(system):
    a = measure_ber(system, 1.0, 2.0, [8.0], seed=9, max_symbols=100_000)
    b = measure_ber(system, 1.0, 2.0, [8.0], seed=9, max_symbols=100_000)
    assert a == b
    p = a[0]
    assert p.stderr1 == np.sqrt(p.ber1 * (1.0 - p.ber1) / p.n_bits)
    assert p.stderr2 == np.sqrt(p.ber2 * (1.0 - p.ber2) / p.n_bits)
    assert p.ber1 == p.n_error_events1 / p.n_bits


def test_measure_ber_consistent_when_budget_doubles(system):
    a = measure_ber(system, 1.0, 2.0, [8.0], seed=4,
                    min_error_events=10 ** 9, max_symbols=100_000)[0]
    b = measure_ber(system, 1.0, 2.0, [8.0], seed=5,
                    min_error_events=10 ** 9, max_symbols=200_000)[0]
    for x, y in ((a.ber1, b.ber1), (a.ber2, b.ber2)):
        assert abs(x - y) <= 3.0 * np.sqrt(a.stderr1 ** 2 + b.stderr1 ** 2) + 3e-3


def test_measure_ber_monotone_and_ml_consistent(system):
    grid = [2.0, 6.0, 10.0, 14.0]
    nn_points, ml_points = measure_ber(system, 1.0, 2.0, grid, seed=2,
                                       max_symbols=400_000, with_ml=True)
    for a, b in zip(nn_points, nn_points[1:]):
        for u in (1, 2):
            lo, hi = getattr(b, f"ber{u}"), getattr(a, f"ber{u}")
            margin = 3.0 * np.hypot(getattr(a, f"stderr{u}"), getattr(b, f"stderr{u}"))
            assert lo <= hi + margin
    for nn, ml in zip(nn_points, ml_points):
        for u in (1, 2):
            margin = 3.0 * np.hypot(getattr(nn, f"stderr{u}"), getattr(ml, f"stderr{u}"))
            assert getattr(ml, f"ber{u}") <= getattr(nn, f"ber{u}") + margin


def test_measure_ber_rejects_bad_input(system):
    with pytest.raises(ConfigError):
        measure_ber(system, 1.0, 2.0, [])
    with pytest.raises(ConfigError):
        measure_ber(system, 2.0, 1.0, [10.0])


def test_fairness_gap():
    def point(snr, b1, b2):
        return BerPoint(snr, b1, b2, 1000, 0.0, 0.0, int(b1 * 1000), int(b2 * 1000))

    same = [point(0, 1e-2, 1e-2), point(2, 1e-3, 1e-3)]
    assert fairness_gap(same, floor=1e-5) == 0.0
    decade = [point(0, 1e-2, 1e-3)]
    assert fairness_gap(decade, floor=1e-5) == pytest.approx(1.0, rel=1e-12)
    # points under the floor are excluded
    mixed = [point(0, 1e-2, 1e-2), point(2, 1e-9, 1e-3)]
    assert fairness_gap(mixed, floor=1e-5) == 0.0
    with pytest.raises(NoDataError):
        fairness_gap([point(0, 1e-9, 1e-9)], floor=1e-5)
    with pytest.raises(ConfigError):
        fairness_gap(same, floor=0.0)


def test_analyze_reference_16qam_codebook():
    report = analyze_codebook(gray_16qam_codebook(power=1.0))
    assert report.min_pairwise_distance == pytest.approx(2.0 / np.sqrt(10.0), rel=1e-12)
    assert report.mean_power == pytest.approx(1.0, rel=1e-12)
    groups1 = [g for g in report.groups if g.user == 1]
    assert len(groups1) == 4
    for g in groups1:
        # bits1 rides the I axis only: centroid on the axis, spread from Q levels
        assert g.centroid.imag == pytest.approx(0.0, abs=1e-12)
        assert g.rms_spread == pytest.approx(np.sqrt(0.5), rel=1e-12)


def test_extract_constellation_trained(system):
    report = extract_constellation(system.tx)
    assert report.codebook.size == 16
    assert report.mean_power == pytest.approx(1.0, abs=1e-9)
    assert report.min_pairwise_distance > 0.0
    assert len(report.groups) == 8


def test_literature_rows_carry_table_constants():
    rows = literature_rows()
    assert all(r.source == "literature-constant" for r in rows)
    val = {(r.method, r.snr1_db): r.worse_ber for r in rows}
    assert val[("ninkovic2023", 16.0)] == 2e-2
    assert val[("ninkovic2023", 14.0)] == 7e-2
    assert val[("alberge2018", 18.0)] == 9e-3


def test_compare_with_baselines(system):
    table = compare_with_baselines(system, snr_list=(14.0, 16.0), seed=1,
                                   min_error_events=50, max_symbols=200_000)
    sources = {r.source for r in table.rows}
    assert sources == {"measured", "closed-form", "literature-constant"}
    qpsk = {r.snr1_db: r.worse_ber for r in table.rows if r.method.startswith("qpsk-noma")}
    for snr_db, worse in qpsk.items():
        cfg = QpskNomaConfig.at_snr1(snr_db, alpha=0.7, h1=1.0, h2=2.0)
        assert worse == max(ber_qpsk_noma_weak(cfg), ber_qpsk_noma_strong_sic(cfg))
    qam = {r.snr1_db: r.worse_ber for r in table.rows if r.method == "16qam-strong-user"}
    assert qam[14.0] == ber_16qam(snr2_from(14.0, 1.0, 2.0))
    lit16 = [r for r in table.rows if r.source == "literature-constant" and r.snr1_db == 16.0]
    assert any(r.worse_ber == 2e-2 for r in lit16)


def test_ber_csv_format(system):
    points = measure_ber(system, 1.0, 2.0, [6.0, 8.0], seed=0, max_symbols=100_000)
    text = ber_points_csv(points, provenance={"seed": 0})
    lines = text.strip().split("\n")
    assert lines[0].startswith("# provenance: ")
    assert lines[1] == "snr1_db,ber1,stderr1,ber2,stderr2,n_bits"
    assert len(lines) == 4
    first = lines[2].split(",")
    assert float(first[0]) == 6.0
    assert int(first[5]) == points[0].n_bits
    report = ber_report_dict(points, provenance={"seed": 0})
    assert report["points"][0]["ber1"] == points[0].ber1


def test_constellation_csv_rows_and_footer(system):
    report = extract_constellation(system.tx)
    text = constellation_csv(report)
    lines = text.strip().split("\n")
    data = [l for l in lines if not l.startswith("#")]
    assert data[0] == "bits1,bits2,i,q"
    assert len(data) == 17  # header + 16 points
    footer = [l for l in lines if l.startswith("# mean_power")]
    assert len(footer) == 1
    assert float(footer[0].split(",")[1]) == pytest.approx(1.0, abs=1e-9)


def test_comparison_csv_has_source_column(system):
    table = compare_with_baselines(system, snr_list=(14.0,), seed=1,
                                   min_error_events=20, max_symbols=50_000)
    lines = comparison_csv(table).strip().split("\n")
    assert lines[0] == "method,snr1_db,worse_ber,source"
    assert all(len(l.split(",")) == 4 for l in lines[1:])


def test_svg_well_formed_and_deterministic(system):
    report = extract_constellation(system.tx)
    svg = render_constellation_svg(report)
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    # 2 axis lines + 2 lines per cross
    lines = [e for e in root.iter() if e.tag.endswith("line")]
    assert len(lines) == 2 + 2 * 16
    assert svg == render_constellation_svg(report)

    cb = report.codebook
    noisy = cb.symbols[np.arange(16) % 16] + 0.05 * (1 + 1j)
    svg2 = render_constellation_svg(report, noisy, np.arange(16) % 4)
    root2 = ET.fromstring(svg2)
    dots = [e for e in root2.iter() if e.tag.endswith("circle")]
    assert len(dots) == 16
    assert svg2 == render_constellation_svg(report, noisy, np.arange(16) % 4)
