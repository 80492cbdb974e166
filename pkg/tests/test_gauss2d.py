import csv
import io

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.stats import norm

from dpnsim.gauss2d import (
    TRACK_HEADER,
    Gauss2dModel,
    gaussian_reversed_conditionals,
    kalman_oracle,
    particle_track_2d,
    simulate_truth_2d,
    write_snapshots_csv,
    write_track_csv,
)
from dpnsim.samplers import ER, ERSOF, LW, SOF
from dpnsim.seeding import make_rng


class TestModel:
    @pytest.mark.parametrize("q, r", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
    def test_positive_scales(self, q, r):
        with pytest.raises(ValueError):
            Gauss2dModel(transition_std=q, sensor_std=r)


class TestSimulate:
    def test_tiny_q_stays_at_origin(self):
        pos, _ = simulate_truth_2d(Gauss2dModel(transition_std=1e-12), 50, make_rng(0))
        assert np.max(np.abs(pos)) < 1e-9

    def test_tiny_r_observes_positions(self):
        pos, obs = simulate_truth_2d(Gauss2dModel(sensor_std=1e-12), 50, make_rng(1))
        np.testing.assert_allclose(obs, pos, atol=1e-9)

    def test_starts_at_origin(self):
        pos, obs = simulate_truth_2d(Gauss2dModel(), 0, make_rng(2))
        assert pos.shape == obs.shape == (1, 2)
        assert pos.tolist() == [[0.0, 0.0]]

    def test_step_variance(self):
        q = 1.7
        n = 10**5
        pos, _ = simulate_truth_2d(Gauss2dModel(transition_std=q), n, make_rng(3))
        steps = np.diff(pos, axis=0)
        # standard error of a sample variance from normal data
        se = q * q * np.sqrt(2.0 / (n - 1))
        for axis in range(2):
            assert abs(steps[:, axis].var(ddof=1) - q * q) < 3 * se

    def test_negative_horizon(self):
        with pytest.raises(ValueError):
            simulate_truth_2d(Gauss2dModel(), -1, make_rng(0))


class TestReversal:
    def test_useless_sensor_limit(self):
        rev = gaussian_reversed_conditionals(Gauss2dModel(transition_std=1.0, sensor_std=1e6))
        assert rev.reversed_mean(2.0, 50.0) == pytest.approx(2.0, abs=1e-9)
        assert rev.reversed_var == pytest.approx(1.0, rel=1e-9)

    def test_sharp_sensor_limit(self):
        rev = gaussian_reversed_conditionals(Gauss2dModel(transition_std=1e6, sensor_std=0.5))
        assert rev.reversed_mean(2.0, 7.0) == pytest.approx(7.0, abs=1e-9)
        assert rev.reversed_var == pytest.approx(0.25, rel=1e-9)

    def test_equal_scales(self):
        q = 0.8
        rev = gaussian_reversed_conditionals(Gauss2dModel(transition_std=q, sensor_std=q))
        assert rev.reversed_mean(1.0, 3.0) == pytest.approx(2.0)
        assert rev.reversed_var == pytest.approx(q * q / 2)
        assert rev.predictive_var == pytest.approx(2 * q * q)

    @pytest.mark.parametrize("q, r", [(0.8, 0.8), (1.0, 0.05), (0.3, 2.0)])
    def test_numerical_integration(self, q, r):
        # integrate transition x sensor over x_t and compare moments
        rev = gaussian_reversed_conditionals(Gauss2dModel(transition_std=q, sensor_std=r))
        x_prev, e = 0.4, 1.3
        s = np.sqrt(rev.reversed_var)
        centre = rev.reversed_mean(x_prev, e)
        x = np.linspace(centre - 12 * s, centre + 12 * s, 20001)
        f = norm.pdf(x, x_prev, q) * norm.pdf(e, x, r)
        z = trapezoid(f, x)
        mean = trapezoid(x * f, x) / z
        var = trapezoid((x - mean) ** 2 * f, x) / z
        assert z == pytest.approx(norm.pdf(e, x_prev, np.sqrt(rev.predictive_var)), rel=1e-8)
        assert mean == pytest.approx(float(centre), abs=1e-8)
        assert var == pytest.approx(rev.reversed_var, rel=1e-7)

    @pytest.mark.parametrize("q, r", [(1.0, 0.05), (0.5, 0.5), (2.0, 0.7)])
    def test_joint_density_identity(self, q, r):
        rev = gaussian_reversed_conditionals(Gauss2dModel(transition_std=q, sensor_std=r))
        grid = np.linspace(-3, 3, 13)
        xp, e, xt = np.meshgrid(grid, grid, grid, indexing="ij")
        lhs = norm.pdf(e, xp, np.sqrt(rev.predictive_var)) * norm.pdf(xt, rev.reversed_mean(xp, e), np.sqrt(rev.reversed_var))
        rhs = norm.pdf(xt, xp, q) * norm.pdf(e, xt, r)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9, rtol=1e-9)


class TestKalman:
    def test_hand_step(self):
        m, v = kalman_oracle(Gauss2dModel(transition_std=1.0, sensor_std=1.0), np.zeros((2, 2)))
        assert v.tolist() == [0.0, 0.5]
        assert m.tolist() == [[0.0, 0.0], [0.0, 0.0]]

    def test_useless_sensor(self):
        obs = make_rng(0).normal(size=(11, 2)) * 5
        m, v = kalman_oracle(Gauss2dModel(transition_std=1.0, sensor_std=1e9), obs)
        np.testing.assert_allclose(m, 0.0, atol=1e-12)
        np.testing.assert_allclose(v, np.arange(11), rtol=1e-9)

    def test_exact_sensor(self):
        obs = make_rng(1).normal(size=(11, 2))
        m, v = kalman_oracle(Gauss2dModel(transition_std=1.0, sensor_std=1e-9), obs)
        np.testing.assert_allclose(m[1:], obs[1:], atol=1e-12)
        assert np.all(v[1:] < 1e-15)

    @staticmethod
    def fixed_point(q, r):
        q2, r2 = q * q, r * r
        # positive root of v^2 + q2 v - q2 r2 = 0
        star = (-q2 + np.sqrt(q2 * q2 + 4 * q2 * r2)) / 2
        assert star == pytest.approx((star + q2) * r2 / (star + q2 + r2))
        return star

    @pytest.mark.parametrize("q, r", [(1.0, 0.05), (1.0, 1.0), (2.0, 0.5)])
    def test_fixed_point(self, q, r):
        _, v = kalman_oracle(Gauss2dModel(transition_std=q, sensor_std=r), np.zeros((101, 2)))
        assert abs(v[100] - self.fixed_point(q, r)) < 1e-9
        assert np.all(np.diff(v[1:]) >= -1e-15)

    def test_slow_contraction(self):
        # weak dynamics under a noisy sensor contract by ~(r2 / (v + q2 + r2))^2 per step
        q, r = 0.2, 3.0
        _, v = kalman_oracle(Gauss2dModel(transition_std=q, sensor_std=r), np.zeros((401, 2)))
        gap = np.abs(v - self.fixed_point(q, r))
        assert np.all(np.diff(gap[1:]) <= 0)
        assert gap[400] < 1e-9


class TestParticleTrack:
    def test_sharp_sensor_ersof(self):
        model = Gauss2dModel(sensor_std=1e-9)
        _, obs = simulate_truth_2d(model, 20, make_rng(0))
        track = particle_track_2d(ERSOF, model, obs, 50, 1)
        np.testing.assert_allclose(track.means[1:], obs[1:], atol=1e-6)

    def test_single_particle(self):
        model = Gauss2dModel()
        _, obs = simulate_truth_2d(model, 20, make_rng(1))
        track = particle_track_2d(ERSOF, model, obs, 1, 2)
        assert track.means.shape == (21, 2) and np.all(np.isfinite(track.means))
        np.testing.assert_allclose(track.ess, 1.0)

    def test_lw_degenerates(self):
        model = Gauss2dModel()
        low = 0
        for s in range(20):
            _, obs = simulate_truth_2d(model, 20, make_rng(40, s))
            track = particle_track_2d(LW, model, obs, 100, s)
            low += track.ess[-1] < 10
        assert low >= 18

    def test_ersof_near_kalman(self):
        model = Gauss2dModel()
        rms, sd = [], []
        for s in range(20):
            _, obs = simulate_truth_2d(model, 20, make_rng(41, s))
            track = particle_track_2d(ERSOF, model, obs, 1000, s)
            km, kv = kalman_oracle(model, obs)
            rms.append(np.sqrt(np.mean((track.means - km) ** 2)))
            sd.append(np.sqrt(np.mean(kv)))
        assert np.mean(rms) < 3 * np.mean(sd)

    @pytest.mark.parametrize("algorithm", [LW, ER, SOF, ERSOF])
    def test_deterministic(self, algorithm):
        model = Gauss2dModel()
        _, obs = simulate_truth_2d(model, 10, make_rng(5))
        a = particle_track_2d(algorithm, model, obs, 30, 6, keep_snapshots=True)
        b = particle_track_2d(algorithm, model, obs, 30, 6, keep_snapshots=True)
        assert np.array_equal(a.means, b.means) and np.array_equal(a.ess, b.ess)
        assert len(a.snapshots) == 11

    def test_unknown_algorithm(self):
        with pytest.raises(ValueError):
            particle_track_2d("PF", Gauss2dModel(), np.zeros((2, 2)), 5, 0)

    def test_csv(self):
        model = Gauss2dModel()
        pos, obs = simulate_truth_2d(model, 3, make_rng(7))
        track = particle_track_2d(SOF, model, obs, 4, 8, keep_snapshots=True)
        km, _ = kalman_oracle(model, obs)
        buf = io.StringIO()
        write_track_csv(buf, pos, obs, track, km)
        rows = list(csv.reader(io.StringIO(buf.getvalue())))
        assert rows[0] == TRACK_HEADER and len(rows) == 5
        buf = io.StringIO()
        write_snapshots_csv(buf, track)
        assert len(buf.getvalue().splitlines()) == 1 + 4 * 4
