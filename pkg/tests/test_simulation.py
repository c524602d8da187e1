import numpy as np
import pytest

from arraylab.beamforming import ScanGrid
from arraylab.geometry import (
    build_basic_csa,
    build_ecsa,
    build_mcsa,
    build_nsa,
    build_sca,
    build_ula,
    bundled_mra17,
)
from arraylab.simulation import (
    DoASpectrum,
    SceneError,
    SourceScene,
    combined_outputs,
    detect_peaks,
    doa_spectrum,
    evaluate_detection,
    generate_snapshots,
    spectrum_csv,
    uniform_scene,
)

GRID = ScanGrid.uniform(8192)

FAMILIES = [
    build_sca(3, 4, 5, 3),
    build_sca(3, 4, 2, 2),
    build_basic_csa(16, 17),
    build_ecsa(2),
    build_mcsa(8),
    build_nsa(10, 23),
    build_ula(32),
    bundled_mra17(),
]


class TestScene:
    def test_rejects_endfire(self):
        with pytest.raises(SceneError):
            SourceScene([0.2, 1.0])

    def test_rejects_unsorted(self):
        with pytest.raises(SceneError):
            SourceScene([0.2, 0.1])

    def test_uniform(self):
        s = uniform_scene(54)
        assert s.num_sources == 54
        assert s.directions[0] == -0.95 and s.directions[-1] == pytest.approx(0.95)

    def test_empty(self):
        assert uniform_scene(0).num_sources == 0


class TestSnapshots:
    def test_broadside_noise_free(self):
        g = build_sca(3, 4, 2, 2)
        x = generate_snapshots(g, SourceScene([0.0]), 10, np.inf, seed=1).data
        assert np.allclose(x, x[0:1, :], atol=0)

    def test_shape(self):
        snaps = generate_snapshots(build_sca(3, 4, 5, 3), uniform_scene(54), 100, 0.0, seed=0)
        assert snaps.data.shape == (32, 100)
        assert snaps.snr_db == pytest.approx(0.0)

    def test_deterministic(self):
        g = build_nsa(10, 23)
        a = generate_snapshots(g, uniform_scene(54), 100, 0.0, seed=7).data
        b = generate_snapshots(g, uniform_scene(54), 100, 0.0, seed=7).data
        c = generate_snapshots(g, uniform_scene(54), 100, 0.0, seed=8).data
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_scene_seed_fallback(self):
        g = build_ula(4)
        a = generate_snapshots(g, uniform_scene(3, seed=5), 4, 0.0).data
        b = generate_snapshots(g, uniform_scene(3), 4, 0.0, seed=5).data
        assert np.array_equal(a, b)

    def test_plane_wave_model(self):
        g = build_sca(3, 4, 2, 2)
        scene = SourceScene([0.3])
        x = generate_snapshots(g, scene, 5, np.inf, seed=3).data
        pos = g.positions_array()
        ratio = x / x[0]
        assert np.allclose(ratio, np.exp(1j * np.pi * 0.3 * pos)[:, None])

    def test_noise_power(self):
        snaps = generate_snapshots(build_ula(32), uniform_scene(0), 4000, 6.0, seed=2)
        expected = 10 ** (-0.6)
        assert np.mean(np.abs(snaps.data) ** 2) == pytest.approx(expected, rel=0.02)

    def test_source_power(self):
        snaps = generate_snapshots(build_ula(1), SourceScene([0.1], source_power=4.0), 20000, np.inf, seed=2)
        assert np.mean(np.abs(snaps.data) ** 2) == pytest.approx(4.0, rel=0.03)

    def test_rejects_bad_t(self):
        with pytest.raises(SceneError):
            generate_snapshots(build_ula(4), uniform_scene(2), 0, 0.0)


class TestSpectrum:
    def test_ula_single_source(self):
        g = build_ula(32)
        snaps = generate_snapshots(g, SourceScene([0.5]), 100, 40.0, seed=0)
        spec = doa_spectrum(g, snaps, GRID)
        assert abs(GRID.u_values[np.argmax(spec.values)] - 0.5) <= GRID.step

    def test_dimension_mismatch(self):
        snaps = generate_snapshots(build_ula(8), uniform_scene(1), 5, 0.0, seed=0)
        with pytest.raises(SceneError):
            doa_spectrum(build_ula(9), snaps, GRID)

    def test_deterministic(self):
        g = build_sca(3, 4, 5, 3)
        s1 = doa_spectrum(g, generate_snapshots(g, uniform_scene(54), 100, 0.0, seed=4), GRID)
        s2 = doa_spectrum(g, generate_snapshots(g, uniform_scene(54), 100, 0.0, seed=4), GRID)
        assert np.array_equal(s1.values, s2.values)

    def test_matches_direct_formula(self):
        # blockwise evaluation agrees with a direct per-point computation
        g = build_sca(3, 4, 2, 2)
        snaps = generate_snapshots(g, SourceScene([-0.2, 0.4]), 7, 3.0, seed=9)
        grid = ScanGrid.uniform(2501)
        spec = doa_spectrum(g, snaps, grid)
        idx = g.subarray_indices()
        for j in (0, 700, 1250, 2400):
            u = grid.u_values[j]
            ys = []
            for sub, rows in zip(g.subarrays, idx):
                w = np.exp(1j * np.pi * u * sub.positions) / sub.num_sensors
                ys.append(w.conj() @ snaps.data[rows])
            direct = np.mean(np.min(np.abs(ys), axis=0) ** 2)
            assert spec.values[j] == pytest.approx(direct, rel=1e-12)

    def test_product_statistic(self):
        g = build_basic_csa(4, 5)
        snaps = generate_snapshots(g, SourceScene([0.1]), 6, 10.0, seed=1)
        u = np.array([0.1, -0.3])
        out = combined_outputs(g, snaps.data, u)
        idx = g.subarray_indices()
        y1 = (np.exp(1j * np.pi * np.outer(u, g.subarrays[0].positions)) / 4).conj() @ snaps.data[idx[0]]
        y2 = (np.exp(1j * np.pi * np.outer(u, g.subarrays[1].positions)) / 5).conj() @ snaps.data[idx[1]]
        assert np.allclose(out, y1 * np.conj(y2))

    def test_min_dominance_snapshots(self):
        g = build_sca(3, 4, 5, 3)
        snaps = generate_snapshots(g, uniform_scene(54), 20, 0.0, seed=3)
        u = GRID.u_values[::7]
        combined = combined_outputs(g, snaps.data, u)
        for sub, rows in zip(g.subarrays, g.subarray_indices()):
            w = np.exp(1j * np.pi * np.outer(u, sub.positions)) / sub.num_sensors
            assert np.all(combined <= np.abs(w.conj() @ snaps.data[rows]))

    def test_noise_only_has_no_strong_peak(self):
        g = build_ula(16)
        spec = doa_spectrum(g, generate_snapshots(g, uniform_scene(0), 100, 0.0, seed=1), GRID)
        assert np.all(spec.values >= 0)
        assert spec.values.max() < g.num_sensors * spec.values.mean()

    @pytest.mark.parametrize("geom", [build_ula(16), build_sca(3, 4, 2, 2), build_basic_csa(4, 5)],
                             ids=lambda g: g.kind.value)
    def test_noise_scaling(self, geom):
        grid = ScanGrid.uniform(513)
        scene = uniform_scene(0)

        def mean_level(snr_db):
            vals = [
                doa_spectrum(geom, generate_snapshots(geom, scene, 100, snr_db, seed=s), grid).values.mean()
                for s in range(50)
            ]
            return np.mean(vals)

        base, louder = mean_level(0.0), mean_level(-3.0)
        expected = 10 ** 0.3
        # product spectra are fourth-order in the noise amplitude
        if geom.combiner == "product":
            expected = expected ** 2
        assert louder / base == pytest.approx(expected, rel=0.10)

    @pytest.mark.parametrize("geom", FAMILIES, ids=lambda g: f"{g.kind.value}{g.num_sensors}")
    def test_single_source_consistency(self, geom):
        rng = np.random.default_rng(1234)
        for draw in range(20):
            u_k = float(rng.uniform(-0.9, 0.9))
            snaps = generate_snapshots(geom, SourceScene([u_k]), 100, 20.0, seed=draw)
            spec = doa_spectrum(geom, snaps, GRID)
            assert abs(GRID.u_values[np.argmax(spec.values)] - u_k) <= GRID.step


class TestPeaks:
    def test_one_bump(self):
        grid = ScanGrid.uniform(101)
        spec = DoASpectrum(grid, np.exp(-((grid.u_values - 0.2) ** 2) / 0.01))
        ps = detect_peaks(spec, 3)
        assert len(ps.peaks) == 1 and ps.shortfall
        assert ps.peaks[0][0] == pytest.approx(0.2)

    def test_monotone(self):
        grid = ScanGrid.uniform(50)
        ps = detect_peaks(DoASpectrum(grid, grid.u_values + 2), 1)
        assert ps.peaks == [] and ps.shortfall

    def test_order_and_limit(self):
        grid = ScanGrid.uniform(9)
        vals = np.array([0, 3, 0, 5, 0, 3, 0, 1, 0], float)
        ps = detect_peaks(DoASpectrum(grid, vals), 3)
        assert [p[1] for p in ps.peaks] == [5, 3, 3]
        assert ps.peaks[1][0] < ps.peaks[2][0]
        assert not ps.shortfall

    def test_plateau_not_strict(self):
        grid = ScanGrid.uniform(6)
        ps = detect_peaks(DoASpectrum(grid, np.array([0, 2, 2, 0, 1, 0], float)), 5)
        assert [p[1] for p in ps.peaks] == [1]

    def test_rejects_k(self):
        with pytest.raises(ValueError):
            detect_peaks(DoASpectrum(GRID, np.zeros(GRID.resolution)), 0)


class TestDetection:
    def test_exact(self):
        scene = uniform_scene(5)
        peaks = [(float(u), 1.0) for u in scene.directions]
        rep = evaluate_detection(peaks, scene, 1e-6)
        assert (rep.hits, rep.misses, rep.false_alarms) == (5, 0, 0)

    def test_greedy_one_to_one(self):
        scene = SourceScene([0.0, 0.1])
        # strongest peak takes the nearest truth; the second peak cannot reuse it
        peaks = [(0.01, 1.0), (0.02, 2.0)]
        rep = evaluate_detection(peaks, scene, 0.05)
        assert rep.matched_pairs == [(0.02, 0.0)]
        assert (rep.hits, rep.misses, rep.false_alarms) == (1, 1, 1)

    def test_report_dict(self):
        rep = evaluate_detection([(0.5, 1.0)], SourceScene([0.5], seed=3), 0.01)
        d = rep.to_dict()
        assert set(d) == {"hits", "misses", "false_alarms", "matched_pairs", "tol_u", "seed"}
        assert d["seed"] == 3

    def test_rejects_tol(self):
        with pytest.raises(ValueError):
            evaluate_detection([], uniform_scene(1), 0.0)


def test_spectrum_csv():
    grid = ScanGrid.uniform(3)
    text = spectrum_csv(DoASpectrum(grid, np.array([1.0, 4.0, 2.0])), ["x"])
    lines = text.splitlines()
    assert lines[:2] == ["# x", "u,value,value_db"]
    assert float(lines[3].split(",")[2]) == 0.0
