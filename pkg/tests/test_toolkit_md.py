import numpy as np
import pytest

from sciflow.toolkit.md import LJConfig, _pair_terms, fcc_positions, ljmd_run
from sciflow.toolkit.trajectory import BlowUp, InvalidConfig


class TestLattice:
    def test_atom_count_and_box(self):
        pos, box = fcc_positions(3, 4, 5, 1.5)
        assert pos.shape == (4 * 3 * 4 * 5, 3)
        assert np.allclose(box, [4.5, 6.0, 7.5])

    def test_perfect_fcc_is_an_equilibrium_point(self):
        pos, box = fcc_positions(4, 4, 4, 1.5496)
        forces, _, _ = _pair_terms(pos, box, 2.5)
        assert np.abs(forces).max() < 1e-10

    def test_equilibrium_any_spacing(self):
        # every perfect fcc lattice has zero net force by symmetry
        pos, box = fcc_positions(4, 4, 4, 1.7)
        forces, _, _ = _pair_terms(pos, box, 2.5)
        assert np.abs(forces).max() < 1e-10


class TestConfigValidation:
    def test_rejects_atom_cap(self):
        with pytest.raises(InvalidConfig):
            LJConfig(nx=11, ny=11, nz=11).validate()  # 5324 atoms

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidConfig):
            LJConfig(dt=0).validate()
        with pytest.raises(InvalidConfig):
            LJConfig(nx=0).validate()

    def test_rejects_cutoff_beyond_half_box(self):
        with pytest.raises(InvalidConfig):
            LJConfig(nx=3, ny=3, nz=3, cutoff=2.5).validate()  # half box 2.32

    def test_accepts_demo_scale(self):
        LJConfig(nx=3, ny=3, nz=3, cutoff=2.0).validate()
        LJConfig(nx=4, ny=4, nz=4, cutoff=2.5).validate()


class TestNVE:
    def test_energy_drift_and_integrator_order(self):
        drifts = []
        for dt in (0.005, 0.0025):
            cfg = LJConfig(nx=3, ny=3, nz=3, cutoff=2.0, dt=dt, steps=1000,
                           sample_every=100, temperature=0.05, seed=11)
            _, records = ljmd_run(cfg)
            e0 = records[0].energy
            drifts.append(max(abs(r.energy - e0) / abs(e0) for r in records))
        assert drifts[0] < 1e-3
        ratio = drifts[0] / drifts[1]
        assert 4 * 0.7 <= ratio <= 4 * 1.3  # velocity-Verlet is second order

    def test_momentum_conserved_every_step(self):
        # independent velocity-Verlet loop over the same force kernel: net
        # momentum must stay at its zeroed value throughout
        dt, rc = 0.005, 2.0
        pos, box = fcc_positions(3, 3, 3, 1.5496)
        rng = np.random.default_rng(4)
        vel = rng.standard_normal((len(pos), 3))
        vel -= vel.mean(axis=0)
        vel *= np.sqrt(0.2 / ((vel * vel).sum() / (3 * len(pos) - 3)))
        forces, _, _ = _pair_terms(pos, box, rc)
        for _ in range(200):
            vel += 0.5 * dt * forces
            pos = np.mod(pos + dt * vel, box)
            forces, _, _ = _pair_terms(pos, box, rc)
            vel += 0.5 * dt * forces
            assert np.abs(vel.sum(axis=0)).max() < 1e-10

    def test_deterministic_given_seed(self):
        cfg = LJConfig(nx=3, ny=3, nz=3, cutoff=2.0, dt=0.005, steps=100,
                       sample_every=50, temperature=0.1, seed=9)
        t1, r1 = ljmd_run(cfg)
        t2, r2 = ljmd_run(cfg)
        assert r1 == r2
        for f1, f2 in zip(t1.frames, t2.frames):
            assert np.array_equal(f1.coords, f2.coords)

    def test_blowup_detected(self):
        # absurd timestep destroys the integration
        cfg = LJConfig(nx=3, ny=3, nz=3, cutoff=2.0, dt=5.0, steps=50,
                       sample_every=1, temperature=1.0, seed=0)
        with pytest.raises(BlowUp):
            ljmd_run(cfg)


class TestStrainRamp:
    def test_strain_non_decreasing_and_box_grows(self):
        cfg = LJConfig(nx=3, ny=3, nz=3, cutoff=2.0, dt=0.005, steps=400,
                       sample_every=50, temperature=0.02, seed=3, strain_rate=0.01)
        traj, records = ljmd_run(cfg)
        strains = [r.strain for r in records]
        assert all(b >= a for a, b in zip(strains, strains[1:]))
        assert strains[-1] > 0.01
        assert traj.frames[-1].box[0] > traj.frames[0].box[0]
        assert np.allclose(traj.frames[-1].box[1:], traj.frames[0].box[1:])

    def test_rise_then_yield_drop(self):
        cfg = LJConfig(nx=3, ny=3, nz=3, cutoff=2.0, dt=0.005, steps=4000,
                       sample_every=25, temperature=0.02, seed=3, strain_rate=0.01)
        _, records = ljmd_run(cfg)
        from sciflow.toolkit.analysis import extract_stress_strain

        _, summary = extract_stress_strain(records, drop_fraction=0.3)
        assert summary["peak_stress"] > 1.0
        assert summary["drops"] >= 1

    def test_thermostat_holds_temperature(self):
        cfg = LJConfig(nx=3, ny=3, nz=3, cutoff=2.0, dt=0.005, steps=800,
                       sample_every=100, temperature=0.3, thermostat=True,
                       target_temperature=0.3, seed=8)
        _, records = ljmd_run(cfg)
        late = [r.temperature for r in records[4:]]
        assert all(0.15 < t < 0.45 for t in late)
