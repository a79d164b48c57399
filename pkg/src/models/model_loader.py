import json
import os
from typing import Any, Dict, List

from src import report
from src.lattice import LatticeError, dump_binary, load_binary

MANIFEST = "manifest.json"
DIAGNOSTICS = "diagnostics.csv"


class TrajectoryLoadError(Exception):
    """Trajectory directory missing, incomplete or malformed."""
    pass


class TrajectoryLoader:
    def __init__(self, traj_dir: str):
        """
        Trajectory persistence: one binary dump per snapshot plus a JSON manifest.
        Args:
            traj_dir: directory holding manifest.json and snap_*.bin
        """
        if not os.path.isabs(traj_dir):
            traj_dir = os.path.abspath(traj_dir)

        self.traj_dir = traj_dir
        self.manifest_path = os.path.join(traj_dir, MANIFEST)
        self.diagnostics_path = os.path.join(traj_dir, DIAGNOSTICS)
        self.trajectory = None

    def _snap_name(self, i: int) -> str:
        return f"snap_{i:05d}.bin"

    def save(self, traj) -> str:
        """Write snapshots, manifest and the diagnostics CSV. Returns the manifest path."""
        os.makedirs(self.traj_dir, exist_ok=True)
        names: List[str] = []
        for i, (_, u) in enumerate(traj.snapshots):
            name = self._snap_name(i)
            with open(os.path.join(self.traj_dir, name), "wb") as f:
                f.write(dump_binary(u))
            names.append(name)

        manifest: Dict[str, Any] = {
            "spec": traj.spec.to_dict(),
            "times": traj.times,
            "diagnostics": traj.diagnostics,
            "fields": names,
        }
        report.write_json(self.manifest_path, manifest)
        header = list(traj.diagnostics[0].keys())
        report.write_csv(self.diagnostics_path, header, [[d[k] for k in header] for d in traj.diagnostics])
        self.trajectory = traj
        return self.manifest_path

    def load(self):
        """Read the trajectory back; every listed snapshot must be present."""
        from src.flow import FlowConfigError, FlowSpec, Trajectory  # local import to avoid a module cycle

        if not os.path.exists(self.manifest_path):
            raise TrajectoryLoadError(f"Manifest not found: {self.manifest_path}")
        try:
            with open(self.manifest_path, "r", encoding="utf-8") as f:
                manifest = json.load(f)
            spec = FlowSpec.from_dict(manifest["spec"])
            times = [float(t) for t in manifest["times"]]
            names = manifest["fields"]
            if len(names) != len(times):
                raise TrajectoryLoadError(f"{len(names)} field files for {len(times)} times")
            fields = []
            for name in names:
                path = os.path.join(self.traj_dir, name)
                if not os.path.exists(path):
                    raise TrajectoryLoadError(f"Snapshot file not found: {path}")
                with open(path, "rb") as f:
                    fields.append(load_binary(f.read()))
            self.trajectory = Trajectory(spec, list(zip(times, fields)), diagnostics=manifest.get("diagnostics") or [])
        except TrajectoryLoadError:
            raise
        except (KeyError, TypeError, ValueError, LatticeError, FlowConfigError) as e:
            raise TrajectoryLoadError(f"Failed to load trajectory: {e}")
        return self.trajectory
