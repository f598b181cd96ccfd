"""
Artifact manager for organizing all generated files.
Keeps reports, data tables and checkpoints in dedicated directories under the
run's output directory and stamps every text artifact with provenance.
"""
import hashlib
import io
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional

import pandas as pd

from shared.config import settings


def sha256_file(path: str) -> str:
    """SHA-256 hex digest of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def canonical_json(payload: Any) -> str:
    """Stable JSON text: sorted keys, no insignificant whitespace"""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def sha256_json(payload: Any) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def provenance(
    seed: int,
    config_digest: Optional[str] = None,
    dataset_digest: Optional[str] = None,
    **extra: Any,
) -> Dict[str, Any]:
    """
    Provenance block embedded in every artifact.

    Args:
        seed: Run seed
        config_digest: Digest of the configuration(s) used
        dataset_digest: SHA-256 of the input data file

    Returns:
        Dictionary with seed, digests and tool version
    """
    block = {
        "seed": seed,
        "config_digest": config_digest,
        "dataset_digest": dataset_digest,
        "tool_version": settings.TOOL_VERSION,
    }
    block.update(extra)
    return block


class ArtifactManager:
    """Manages artifact storage and organization"""

    def __init__(self, base_dir: Optional[str] = None):
        """
        Initialize artifact manager.

        Args:
            base_dir: Base directory for all artifacts (default: settings.OUTPUT_DIR)
        """
        self.base_dir = Path(base_dir or settings.OUTPUT_DIR)

        self.reports_dir = self.base_dir / "reports"          # JSON + text reports
        self.data_dir = self.base_dir / "data"                # CSV outputs
        self.checkpoints_dir = self.base_dir / "checkpoints"  # .npz model containers

        for directory in [self.reports_dir, self.data_dir, self.checkpoints_dir]:
            directory.mkdir(parents=True, exist_ok=True)

    def _target(self, root: Path, filename: str, subfolder: Optional[str]) -> Path:
        directory = root / subfolder if subfolder else root
        directory.mkdir(parents=True, exist_ok=True)
        return directory / filename

    def save_report(
        self,
        filename: str,
        content: str,
        subfolder: Optional[str] = None
    ) -> str:
        """
        Save report file to <out>/reports/

        Returns:
            Path to saved file
        """
        file_path = self._target(self.reports_dir, filename, subfolder)
        file_path.write_text(content, encoding="utf-8")
        return str(file_path).replace("\\", "/")

    def save_json_report(self, filename: str, payload: Mapping[str, Any], subfolder: Optional[str] = None) -> str:
        """Save a JSON report with sorted keys so reruns are byte-identical"""
        text = json.dumps(payload, sort_keys=True, indent=2, default=str) + "\n"
        return self.save_report(filename, text, subfolder)

    def save_data(
        self,
        filename: str,
        content: str,
        subfolder: Optional[str] = None
    ) -> str:
        """
        Save data file (CSV, etc.) to <out>/data/

        Returns:
            Path to saved file
        """
        file_path = self._target(self.data_dir, filename, subfolder)
        file_path.write_text(content, encoding="utf-8")
        return str(file_path).replace("\\", "/")

    def save_frame(
        self,
        filename: str,
        frame: pd.DataFrame,
        header: Optional[Mapping[str, Any]] = None,
        subfolder: Optional[str] = None,
    ) -> str:
        """Save a DataFrame as CSV preceded by ``# key=value`` provenance lines"""
        return self.save_data(filename, render_csv(frame, header), subfolder)

    def checkpoint_path(self, filename: str) -> Path:
        return self.checkpoints_dir / filename

    def get_artifact_info(self) -> Dict[str, Any]:
        """
        Get information about artifact storage.

        Returns:
            Dictionary with file counts per directory
        """
        def count_files(directory: Path) -> int:
            if not directory.exists():
                return 0
            return sum(1 for f in directory.rglob("*") if f.is_file())

        return {
            "base_directory": str(self.base_dir),
            "reports": count_files(self.reports_dir),
            "data": count_files(self.data_dir),
            "checkpoints": count_files(self.checkpoints_dir),
            "total_files": count_files(self.base_dir),
        }


def render_header(header: Optional[Mapping[str, Any]] = None) -> str:
    """`# key=value` provenance lines, sorted by key"""
    return "".join(f"# {key}={value}\n" for key, value in sorted((header or {}).items()))


def render_csv(frame: pd.DataFrame, header: Optional[Mapping[str, Any]] = None) -> str:
    buffer = io.StringIO()
    buffer.write(render_header(header))
    frame.to_csv(buffer, index=False, lineterminator="\n", float_format="%.10g")
    return buffer.getvalue()


def read_csv_with_header(path: str) -> pd.DataFrame:
    """Read a CSV written by ``save_frame``; leading provenance lines are skipped"""
    # not comment="#": SMILES triple bonds use '#'
    return pd.read_csv(path, skiprows=len(list(header_lines(path))))


def header_lines(path: str) -> Iterable[str]:
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            yield line[1:].strip()
