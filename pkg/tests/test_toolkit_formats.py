import numpy as np
import pytest

from sciflow.toolkit.formats import (
    convert_trajectory,
    read_dump,
    read_xyz,
    sniff_format,
    write_dump,
    write_xyz,
)
from sciflow.toolkit.md import LJConfig, ljmd_run
from sciflow.toolkit.trajectory import Frame, InconsistentAtomCount, ParseError, Trajectory


@pytest.fixture(scope="module")
def two_frame_traj():
    cfg = LJConfig(nx=2, ny=2, nz=2, cutoff=1.5, dt=0.005, steps=10,
                   sample_every=10, temperature=0.1, seed=1)
    traj, _ = ljmd_run(cfg)
    assert len(traj) == 2
    return traj


class TestRoundTrips:
    def test_dump_to_xyz_same_coords(self, two_frame_traj, tmp_path):
        dump, xyz = tmp_path / "t.dump", tmp_path / "t.xyz"
        write_dump(two_frame_traj, dump)
        convert_trajectory(dump, xyz, to="xyz")
        back = read_xyz(xyz)
        assert len(back) == 2
        for f1, f2 in zip(two_frame_traj.frames, back.frames):
            assert f1.step == f2.step
            assert np.allclose(f1.coords, f2.coords, rtol=1e-8)
            assert np.allclose(f1.box, f2.box, rtol=1e-8)

    def test_full_roundtrip_idempotent_after_one_pass(self, two_frame_traj, tmp_path):
        d0 = tmp_path / "a.dump"
        write_dump(two_frame_traj, d0)

        def rt(src, tag):
            x = tmp_path / f"{tag}.xyz"
            d = tmp_path / f"{tag}.dump"
            convert_trajectory(src, x, to="xyz")
            convert_trajectory(x, d, to="dump")
            return d

        d1 = rt(d0, "rt1")
        d2 = rt(d1, "rt2")
        assert d1.read_bytes() == d2.read_bytes()

    def test_xyz_species_preserved(self, tmp_path):
        frame = Frame(step=5, box=np.array([4.0, 4.0, 4.0]), species=["Ar", "Kr"],
                      coords=np.array([[1.0, 1, 1], [2.0, 2, 2]]))
        path = tmp_path / "m.xyz"
        write_xyz(Trajectory([frame]), path)
        back = read_xyz(path)
        assert back.frames[0].species == ["Ar", "Kr"]

    def test_sniffing(self, two_frame_traj, tmp_path):
        dump, xyz = tmp_path / "t.dump", tmp_path / "t.xyz"
        write_dump(two_frame_traj, dump)
        write_xyz(two_frame_traj, xyz)
        assert sniff_format(dump) == "dump"
        assert sniff_format(xyz) == "xyz"


class TestParseErrors:
    def test_truncated_dump_frame_reports_line(self, two_frame_traj, tmp_path):
        path = tmp_path / "t.dump"
        write_dump(two_frame_traj, path)
        lines = path.read_text().splitlines()
        (tmp_path / "trunc.dump").write_text("\n".join(lines[:7]) + "\n")
        with pytest.raises((ParseError, InconsistentAtomCount)) as exc:
            read_dump(tmp_path / "trunc.dump")
        assert exc.value  # carries a line-bearing diagnostic

    def test_wrong_atom_count_header(self, two_frame_traj, tmp_path):
        path = tmp_path / "t.dump"
        write_dump(two_frame_traj, path)
        text = path.read_text().splitlines()
        n = two_frame_traj.natoms
        idx = text.index(str(n))
        text[idx] = str(n + 3)
        bad = tmp_path / "bad.dump"
        bad.write_text("\n".join(text) + "\n")
        with pytest.raises(InconsistentAtomCount):
            read_dump(bad)

    def test_garbage_row_line_number(self, tmp_path):
        bad = tmp_path / "bad.xyz"
        bad.write_text("2\nstep=0 box=4 4 4\nA 1 1 1\nA x y z\n")
        with pytest.raises(ParseError) as exc:
            read_xyz(bad)
        assert exc.value.line == 4

    def test_atom_count_varies_across_frames(self, tmp_path):
        bad = tmp_path / "vary.xyz"
        bad.write_text("1\nstep=0 box=4 4 4\nA 1 1 1\n2\nstep=1 box=4 4 4\nA 1 1 1\nA 2 2 2\n")
        with pytest.raises(InconsistentAtomCount):
            read_xyz(bad)

    def test_empty_file(self, tmp_path):
        empty = tmp_path / "empty.dump"
        empty.write_text("")
        with pytest.raises(ParseError):
            read_dump(empty)


class TestCLIs:
    def test_convert_cli_roundtrip(self, two_frame_traj, tmp_path):
        from sciflow.toolkit.cli import convert_main

        dump = tmp_path / "t.dump"
        write_dump(two_frame_traj, dump)
        out = tmp_path / "t.xyz"
        assert convert_main([str(dump), "--to=xyz", f"--out={out}"]) == 0
        assert sniff_format(out) == "xyz"

    def test_convert_cli_parse_error_exit_1(self, tmp_path):
        from sciflow.toolkit.cli import convert_main

        bad = tmp_path / "bad.dump"
        bad.write_text("ITEM: TIMESTEP\nnot_a_number\n")
        assert convert_main([str(bad), "--to=xyz", f"--out={tmp_path/'o'}"]) == 1

    def test_usage_error_exit_2(self, tmp_path, capsys):
        from sciflow.toolkit.cli import convert_main

        with pytest.raises(SystemExit) as exc:
            convert_main([str(tmp_path / "x"), "--to=weird", "--out=o"])
        assert exc.value.code == 2

    def test_ljmd_cli_runs(self, tmp_path):
        from sciflow.toolkit.cli import ljmd_main

        traj = tmp_path / "traj"
        stress = tmp_path / "stress"
        rc = ljmd_main(["--nx=2", "--ny=2", "--nz=2", "--cutoff=1.5", "--steps=20",
                        "--sample-every=10", "--seed=1",
                        f"--out-traj={traj}", f"--out-stress={stress}"])
        assert rc == 0
        assert len(read_dump(traj)) == 3
        assert stress.read_text().startswith("step,strain,pxx")

    def test_ljmd_cli_config_file_with_flag_override(self, tmp_path):
        import json

        from sciflow.toolkit.cli import ljmd_main

        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"nx": 2, "ny": 2, "nz": 2, "cutoff": 1.5,
                                   "steps": 10, "sample_every": 10, "seed": 2}))
        rc = ljmd_main([str(cfg), "--steps=20",
                        f"--out-traj={tmp_path/'t'}", f"--out-stress={tmp_path/'s'}"])
        assert rc == 0
        assert read_dump(tmp_path / "t").frames[-1].step == 20

    def test_ljmd_cli_invalid_config_exit_1(self, tmp_path):
        from sciflow.toolkit.cli import ljmd_main

        assert ljmd_main(["--nx=0", f"--out-traj={tmp_path/'t'}",
                          f"--out-stress={tmp_path/'s'}"]) == 1
