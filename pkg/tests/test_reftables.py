import numpy as np
import pytest

from onebitpc import reftables
from onebitpc.numerics import RngStream
from onebitpc.reftables import (
    BranchMapError,
    ReferenceTable,
    TableFormatError,
    TableMeta,
    TableMismatchError,
    TableRangeError,
    build_branch_map,
    check_compatible,
    gen_tables,
    interp,
    observable_powers,
    pmse_point,
)

from helpers import GRID, synthetic_table


def test_interp_grid_points_and_midpoints():
    t = synthetic_table()
    for i in (0, 17, 60, GRID.size - 1):
        assert interp(t, GRID[i]) == t.pmse[i]
        assert interp(t, GRID[i], "ser") == t.ser[i]
    mid = 0.5 * (GRID[10] + GRID[11])
    assert interp(t, mid) == pytest.approx(0.5 * (t.pmse[10] + t.pmse[11]), rel=1e-14)


@pytest.mark.parametrize("rho", [-30.5, 31.0, np.inf])
def test_interp_out_of_hull(rho):
    with pytest.raises(TableRangeError):
        interp(synthetic_table(), rho)


def test_table_validation():
    meta = synthetic_table().meta
    with pytest.raises(ValueError):
        ReferenceTable(meta, [0.0, 0.0, 1.0], [0, 0, 0], [0, 0, 0], np.zeros((3, 0)))
    with pytest.raises(ValueError):
        ReferenceTable(meta, [0.0, 1.0], [0, 0, 0], [0, 0], np.zeros((2, 0)))


def test_branch_map_parameterization_consistency():
    t = synthetic_table()
    bm = build_branch_map(t)
    assert bm.rho_min_db == 5.0
    for rho in (-20.0, -7.5, 0.0, 3.0):
        i = int(np.flatnonzero(GRID == rho)[0])
        pm = np.mean(interp(t, observable_powers(rho, 3, 5.0)))
        assert bm.awgn_branch(pm) == pytest.approx(t.ser[i], rel=1e-9)


def test_branch_map_branches_differ():
    # asymmetric SER: quantization side rises faster
    t = synthetic_table()
    t.ser = np.where(GRID > 5, 1e-6 * 10 ** ((GRID - 5) / 2), t.ser).clip(max=0.9)
    bm = build_branch_map(t)
    pm = np.mean(interp(t, observable_powers(12.0, 3, 5.0)))
    assert bm.awgn_branch(pm) != pytest.approx(bm.qd_branch(pm), rel=0.1)


def test_branch_map_round_trip_by_delta_sign():
    t = synthetic_table()
    bm = build_branch_map(t)
    for rho in GRID[(GRID >= -24) & (GRID <= 24)]:
        comps = observable_powers(rho, 3, 5.0)
        pm = interp(t, comps)
        delta = pm[1] - pm[0]
        got = bm.ser(np.mean(pm), quantization_limited=delta > 0)
        assert got == pytest.approx(interp(t, rho, "ser"), rel=0.1)


def test_branch_map_monotone_after_cleanup():
    t = synthetic_table()
    g = np.random.default_rng(1)
    t.ser = t.ser * np.exp(0.3 * g.standard_normal(GRID.size))
    bm = build_branch_map(t)
    assert np.all(np.diff(bm.awgn_ser) <= 0)
    assert np.all(np.diff(bm.qd_ser) >= 0)
    assert np.all(np.diff(bm.awgn_pmse) <= 0)
    assert np.all(np.diff(bm.qd_pmse) >= 0)


def test_branch_map_rejects_edge_minimum():
    t = synthetic_table()
    t.ser = np.linspace(0.5, 1e-6, GRID.size)
    with pytest.raises(BranchMapError):
        build_branch_map(t)
    with pytest.raises(BranchMapError):
        build_branch_map(synthetic_table(ser=False))


def test_target_rho_on_awgn_branch():
    bm = build_branch_map(synthetic_table())
    # 1e-6 * 10**((5 - rho) / 5) = 1e-5 at rho = 0
    assert bm.target_rho_db(1e-5) == pytest.approx(0.0, abs=1e-9)
    assert bm.target_rho_db(1e-9) == 5.0


def test_save_load_round_trip(tmp_path):
    t = synthetic_table()
    t.pmse[3] = 1 / 3
    t.centroids[0, 0] = complex(-0.0, 1e-300)
    reftables.save(t, tmp_path / "t.csv")
    back = reftables.load(tmp_path / "t.csv")
    assert back == t
    assert np.signbit(back.centroids[0, 0].real)
    nan_t = synthetic_table(ser=False)
    reftables.save(nan_t, tmp_path / "n.csv")
    assert reftables.load(tmp_path / "n.csv") == nan_t


def test_load_errors(tmp_path):
    p = tmp_path / "t.csv"
    reftables.save(synthetic_table(), p)
    text = p.read_text()
    (tmp_path / "magic.csv").write_text(text.replace("onebitpc-reftable", "something-else", 1))
    with pytest.raises(TableFormatError, match="magic"):
        reftables.load(tmp_path / "magic.csv")
    (tmp_path / "ver.csv").write_text(text.replace("# version=1", "# version=9"))
    with pytest.raises(TableFormatError, match="version"):
        reftables.load(tmp_path / "ver.csv")
    lines = text.splitlines()
    lines[-1] = lines[-1].replace("0", "1", 1)
    (tmp_path / "sum.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(TableFormatError, match="checksum"):
        reftables.load(tmp_path / "sum.csv")


def test_compatibility_message_names_both_tuples():
    t = synthetic_table()
    check_compatible(t, 256, 7, 5.0)
    with pytest.raises(TableMismatchError) as err:
        check_compatible(t, 256, 127, 5.0)
    msg = str(err.value)
    assert "(256, 7, 5.0)" in msg and "(256, 127, 5.0)" in msg


@pytest.fixture(scope="module")
def small_table():
    return gen_tables(16, 7, 3, 5.0, [-10.0, 0.0, 10.0], 1000, 4, 123, n_data=10)


def test_gen_tables_deterministic(small_table):
    again = gen_tables(16, 7, 3, 5.0, [-10.0, 0.0, 10.0], 1000, 4, 123, n_data=10)
    assert again == small_table
    other = gen_tables(16, 7, 3, 5.0, [-10.0, 0.0, 10.0], 1000, 4, 124, n_data=10)
    assert not np.array_equal(other.pmse, small_table.pmse)


def test_gen_tables_rows_keyed_by_grid_value(small_table):
    sub = gen_tables(16, 7, 3, 5.0, [0.0, 10.0], 1000, 4, 123, n_data=10)
    np.testing.assert_array_equal(sub.pmse, small_table.pmse[1:])
    np.testing.assert_array_equal(sub.ser, small_table.ser[1:])
    np.testing.assert_array_equal(sub.centroids, small_table.centroids[1:])


def test_gen_tables_parallel_matches_serial(small_table):
    par = gen_tables(16, 7, 3, 5.0, [-10.0, 0.0, 10.0], 1000, 4, 123, n_data=10, workers=2)
    assert par == small_table


def test_gen_tables_bounds(small_table):
    assert np.all((small_table.pmse >= 0) & (small_table.pmse <= 4))
    assert np.all((small_table.ser >= 0) & (small_table.ser <= 1 - 1 / 4 + 0.05))
    assert small_table.centroids.shape == (3, 4)


def test_gen_tables_pmse_only():
    t = gen_tables(16, 7, 3, 5.0, [0.0, 5.0], 1000, 16, 1, n_data=0)
    assert not t.has_ser and t.centroids.shape == (2, 0)


def test_gen_tables_trial_floor():
    with pytest.raises(ValueError):
        gen_tables(16, 7, 3, 5.0, [0.0, 5.0], 999, 4, 1)


def test_pmse_standard_error_scaling():
    # standard error shrinks as 1/sqrt(trials): quadrupling trials halves it
    reps = 200
    means = {}
    for n in (100, 400):
        means[n] = np.array([
            pmse_point(16, 7, 5.0, 0.0, n, RngStream(77, (n, r))).mean() for r in range(reps)
        ])
    ratio = means[400].std(ddof=1) / means[100].std(ddof=1)
    assert ratio == pytest.approx(0.5, rel=0.2)


def test_bundled_tables_load_and_regenerate():
    full = reftables.load(reftables.bundled_table_path("tau7"))
    assert full.has_ser and full.centroids.shape == (full.grid_db.size, 16)
    pm = reftables.load(reftables.bundled_table_path("tau127"))
    m = pm.meta
    rows = gen_tables(m.M, m.tau, m.L, m.gap_db, [0.0, 0.5], m.trials, m.order, m.seed, n_data=m.n_data)
    i = int(np.flatnonzero(pm.grid_db == 0.0)[0])
    np.testing.assert_array_equal(rows.pmse, pm.pmse[i:i + 2])
