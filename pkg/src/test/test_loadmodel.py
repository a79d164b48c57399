import json
import os

import numpy as np
import pytest

from src.flow import FlowSpec, evolve
from src.models import TrajectoryLoader, TrajectoryLoadError
from src.models.models import MKdVNLS, NLS
from src.spaces import NormKind, NormSpec


@pytest.fixture
def saved(tmp_path, small_field):
    traj = evolve(small_field, FlowSpec(NLS(), dt=0.01), 0.05, [0.0, 0.02, 0.05],
                  [NormSpec(NormKind.FOURIER_LEBESGUE, p=4.0)])
    loader = TrajectoryLoader(str(tmp_path / "traj"))
    loader.save(traj)
    return traj, loader


class TestTrajectoryLoader:
    def test_save_then_load(self, saved):
        traj, loader = saved
        back = TrajectoryLoader(loader.traj_dir).load()
        assert back.spec == traj.spec
        assert back.times == pytest.approx(traj.times)
        for a, b in zip(back.fields, traj.fields):
            assert a.lattice == b.lattice
            np.testing.assert_array_equal(a.coeffs, b.coeffs)
        assert back.diagnostics == traj.diagnostics

    def test_layout(self, saved):
        _, loader = saved
        names = sorted(os.listdir(loader.traj_dir))
        assert names == ["diagnostics.csv", "manifest.json", "snap_00000.bin", "snap_00001.bin", "snap_00002.bin"]

    def test_relative_path_is_made_absolute(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        loader = TrajectoryLoader("traj")
        assert os.path.isabs(loader.traj_dir)
        assert os.path.basename(loader.traj_dir) == "traj"

    def test_spec_survives(self, tmp_path, dilated_field):
        spec = FlowSpec(MKdVNLS("focusing", beta=1.0), dt=1e-3, integrator="ifrk4")
        traj = evolve(dilated_field, spec, 0.002)
        loader = TrajectoryLoader(str(tmp_path / "t"))
        loader.save(traj)
        assert TrajectoryLoader(loader.traj_dir).load().spec == spec

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(TrajectoryLoadError):
            TrajectoryLoader(str(tmp_path)).load()

    def test_missing_snapshot(self, saved):
        _, loader = saved
        os.remove(os.path.join(loader.traj_dir, "snap_00001.bin"))
        with pytest.raises(TrajectoryLoadError):
            TrajectoryLoader(loader.traj_dir).load()

    def test_inconsistent_manifest(self, saved):
        _, loader = saved
        with open(loader.manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        manifest["times"] = manifest["times"][:2]
        with open(loader.manifest_path, "w", encoding="utf-8") as f:
            json.dump(manifest, f)
        with pytest.raises(TrajectoryLoadError):
            TrajectoryLoader(loader.traj_dir).load()

    def test_corrupt_snapshot(self, saved):
        _, loader = saved
        with open(os.path.join(loader.traj_dir, "snap_00000.bin"), "wb") as f:
            f.write(b"\x00\x01")
        with pytest.raises(TrajectoryLoadError):
            TrajectoryLoader(loader.traj_dir).load()
