"""Toy Lennard-Jones molecular dynamics with an optional tensile strain ramp.

Velocity-Verlet integration of the truncated-and-shifted LJ potential
(default cutoff 2.5 sigma) under periodic boundaries, in reduced units.
The strain ramp rescales the x box length (and atom x coordinates,
affinely) by (1 + strain_rate * dt) each step, so the recorded strain is
non-decreasing. Runs are fully deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .trajectory import BlowUp, Frame, InvalidConfig, StressRecord, Trajectory

# Lattice parameter minimizing the full-LJ fcc energy; close enough to the
# truncated-potential minimum for stable desk-scale runs.
FCC_EQUILIBRIUM_SPACING = 1.5496

MAX_ATOMS = 4000


@dataclass(frozen=True)
class LJConfig:
    nx: int = 3
    ny: int = 3
    nz: int = 3
    spacing: float = FCC_EQUILIBRIUM_SPACING
    dt: float = 0.005
    steps: int = 1000
    sample_every: int = 100
    temperature: float = 0.0
    thermostat: bool = False
    thermostat_tau: float = 0.5
    target_temperature: Optional[float] = None
    strain_rate: float = 0.0
    seed: int = 0
    cutoff: float = 2.5
    species: str = "A"

    def validate(self) -> None:
        if min(self.nx, self.ny, self.nz) < 1:
            raise InvalidConfig("cell repeats must be positive")
        if self.spacing <= 0 or self.dt <= 0 or self.steps < 1 or self.sample_every < 1:
            raise InvalidConfig("spacing, dt, steps, sample_every must be positive")
        if self.temperature < 0 or self.cutoff <= 0 or self.strain_rate < 0:
            raise InvalidConfig("temperature, cutoff, strain_rate must be non-negative")
        n = 4 * self.nx * self.ny * self.nz
        if n > MAX_ATOMS:
            raise InvalidConfig(f"{n} atoms exceeds the desk-scale cap of {MAX_ATOMS}")
        half_box = self.spacing * min(self.nx, self.ny, self.nz) / 2.0
        if self.cutoff > half_box:
            raise InvalidConfig(
                f"cutoff {self.cutoff} exceeds half the minimum box length {half_box}; "
                "minimum-image would be invalid")


def fcc_positions(nx: int, ny: int, nz: int, a: float) -> tuple[np.ndarray, np.ndarray]:
    """Perfect fcc lattice of nx*ny*nz conventional cells, 4 atoms each."""
    basis = np.array([[0, 0, 0], [0.5, 0.5, 0], [0.5, 0, 0.5], [0, 0.5, 0.5]])
    cells = np.array([[i, j, k] for i in range(nx) for j in range(ny) for k in range(nz)], dtype=float)
    pos = (cells[:, None, :] + basis[None, :, :]).reshape(-1, 3) * a
    box = np.array([nx, ny, nz], dtype=float) * a
    return pos, box


def _pair_terms(pos: np.ndarray, box: np.ndarray, cutoff: float, chunk: int = 512):
    """Forces, potential energy, and the xx virial for the current state.

    All-pairs with minimum image, processed in row chunks to bound memory.
    """
    n = len(pos)
    rc2 = cutoff * cutoff
    u_shift = 4.0 * (cutoff ** -12 - cutoff ** -6)
    forces = np.zeros_like(pos)
    energy = 0.0
    virial_xx = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            dr = pos[lo:hi, None, :] - pos[None, :, :]
            dr -= box * np.round(dr / box)
            r2 = np.einsum("ijk,ijk->ij", dr, dr)
            mask = (r2 < rc2) & (r2 > 0.0)
            inv_r2 = np.where(mask, 1.0 / np.where(mask, r2, 1.0), 0.0)
            inv_r6 = inv_r2 ** 3
            f_over_r = 24.0 * (2.0 * inv_r6 * inv_r6 - inv_r6) * inv_r2
            forces[lo:hi] += np.einsum("ij,ijk->ik", f_over_r, dr)
            pair_u = np.where(mask, 4.0 * (inv_r6 * inv_r6 - inv_r6) - u_shift, 0.0)
            energy += 0.5 * pair_u.sum()  # each pair visited twice
            virial_xx += 0.5 * (f_over_r * dr[:, :, 0] ** 2).sum()
    return forces, energy, virial_xx


def _temperature(vel: np.ndarray) -> float:
    dof = max(3 * len(vel) - 3, 1)  # net momentum is zeroed at init
    return float((vel * vel).sum() / dof)


def ljmd_run(config: LJConfig) -> tuple[Trajectory, list[StressRecord]]:
    """Integrate the configured system; returns trajectory and stress series."""
    config.validate()
    pos, box = fcc_positions(config.nx, config.ny, config.nz, config.spacing)
    box = box.copy()
    lx0 = box[0]
    n = len(pos)

    rng = np.random.default_rng(config.seed)
    if config.temperature > 0:
        vel = rng.standard_normal((n, 3))
        vel -= vel.mean(axis=0)
        t_now = _temperature(vel)
        vel *= np.sqrt(config.temperature / t_now)
    else:
        vel = np.zeros((n, 3))

    target_t = config.target_temperature if config.target_temperature is not None else config.temperature

    frames: list[Frame] = []
    records: list[StressRecord] = []

    blowup_energy = 1e10 * n  # reduced-unit energies are O(10) per atom

    def sample(step: int, energy_pot: float, virial_xx: float) -> None:
        if not (np.all(np.isfinite(pos)) and np.isfinite(energy_pot)):
            raise BlowUp(f"non-finite state at step {step}")
        if abs(energy_pot) + 0.5 * float((vel * vel).sum()) > blowup_energy:
            raise BlowUp(f"energy magnitude exploded at step {step}")
        kinetic = 0.5 * float((vel * vel).sum())
        volume = float(box.prod())
        # tension-positive stress: negative of the xx virial pressure
        pxx = -((vel[:, 0] ** 2).sum() + virial_xx) / volume
        strain = float(box[0] / lx0 - 1.0)
        wrapped = np.mod(pos, box)
        frames.append(Frame(step=step, box=box.copy(), species=[config.species] * n, coords=wrapped))
        records.append(StressRecord(step=step, strain=strain, pxx=float(pxx),
                                    energy=energy_pot + kinetic, temperature=_temperature(vel)))

    forces, energy_pot, virial_xx = _pair_terms(pos, box, config.cutoff)
    sample(0, energy_pot, virial_xx)

    ramp = 1.0 + config.strain_rate * config.dt
    for step in range(1, config.steps + 1):
        if config.strain_rate > 0:
            box[0] *= ramp
            pos[:, 0] *= ramp
        vel += 0.5 * config.dt * forces
        pos += config.dt * vel
        pos -= box * np.floor(pos / box)
        forces, energy_pot, virial_xx = _pair_terms(pos, box, config.cutoff)
        vel += 0.5 * config.dt * forces
        if config.thermostat and target_t > 0:
            t_now = _temperature(vel)
            if t_now > 0:
                lam = np.sqrt(1.0 + (config.dt / config.thermostat_tau) * (target_t / t_now - 1.0))
                vel *= lam
        if step % config.sample_every == 0:
            sample(step, energy_pot, virial_xx)

    return Trajectory(frames=frames), records


def config_from_dict(doc: dict) -> LJConfig:
    cfg = LJConfig()
    known = set(cfg.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
    return replace(cfg, **doc)
