"""Run manifests.

Every output directory gets one ``manifest.json`` recording the command,
its options, the fully resolved scenario and the build it ran on, which
is enough to replay the run.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

from git import InvalidGitRepositoryError, NoSuchPathError, Repo

from . import __version__
from .config import ScenarioConfig, config_from_dict
from .errors import ConfigError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def config_hash(config: ScenarioConfig) -> str:
    """sha256 of the canonical JSON form of a config."""
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_identifier(path: Optional[Path] = None) -> str:
    """Commit of the checkout the package runs from, or the package version.

    A dirty working tree is marked with a ``-dirty`` suffix.
    """
    path = Path(path) if path is not None else Path(__file__).resolve().parent
    try:
        repo = Repo(path, search_parent_directories=True)
        try:
            sha = repo.head.commit.hexsha
        except ValueError:
            # Repository without commits.
            return f"stackdrive-{__version__}"
        return f"{sha}-dirty" if repo.is_dirty() else sha
    except (InvalidGitRepositoryError, NoSuchPathError):
        return f"stackdrive-{__version__}"


@dataclass
class RunManifest:
    """What was run, on which build, with which inputs."""

    subcommand: str
    config_path: Optional[str]
    seed: int
    output_dir: str
    build_id: str
    timestamp: str
    config: Dict[str, Any]
    config_hash: str
    options: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        subcommand: str,
        config: ScenarioConfig,
        config_path: Optional[str],
        seed: int,
        output_dir: Path,
        options: Optional[Dict[str, Any]] = None,
    ) -> "RunManifest":
        return cls(
            subcommand=subcommand,
            config_path=config_path,
            seed=seed,
            output_dir=str(output_dir),
            build_id=build_identifier(),
            timestamp=datetime.now(timezone.utc).isoformat(),
            config=config.to_dict(),
            config_hash=config_hash(config),
            options=dict(options or {}),
        )

    def scenario(self) -> ScenarioConfig:
        """The embedded scenario, validated again."""
        config = config_from_dict(self.config)
        if config_hash(config) != self.config_hash:
            raise ConfigError("manifest config does not match its recorded hash")
        return config

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"malformed manifest: {e}")

    def save(self, directory: Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / MANIFEST_NAME
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")
        logger.info("wrote %s", path)
        return path

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read manifest: {e.strerror}", path=str(path))
        except json.JSONDecodeError as e:
            raise ConfigError(
                f"invalid manifest JSON: {e.msg}", line=e.lineno, path=str(path)
            )
        return cls.from_dict(data)
