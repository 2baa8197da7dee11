"""Run directories: every command writes its artifacts, the resolved config
(``config.yaml``) and a manifest of sha256 digests (``manifest.json``)."""

import hashlib
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union

import yaml

from iae.core.errors import ConfigError
from iae.schemas.run import RunConfig, RunManifest

logger = logging.getLogger(__name__)

CONFIG_NAME = "config.yaml"
MANIFEST_NAME = "manifest.json"


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def dump_config(config: RunConfig) -> str:
    payload = config.model_dump(mode="json", by_alias=True, exclude_none=True)
    return yaml.safe_dump(payload, sort_keys=False)


def load_config_file(path: Union[str, Path]) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}")
    if payload is None:
        return {}
    if not isinstance(payload, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return payload


class RunContext:
    def __init__(self, out: Path, config: RunConfig):
        self.out = out
        self.config = config
        self._artifacts: List[str] = []

    def artifact(self, name: str) -> Path:
        """Path for an output file; it is hashed into the manifest."""
        if name not in self._artifacts:
            self._artifacts.append(name)
        return self.out / name

    def manifest(self) -> RunManifest:
        artifacts: Dict[str, str] = {}
        for name in sorted(self._artifacts):
            path = self.out / name
            if path.exists():
                artifacts[name] = sha256_file(path)
        inputs = {
            name: sha256_file(path)
            for name, path in sorted(self.config.inputs.items())
            if Path(path).is_file()
        }
        return RunManifest(
            command=self.config.command,
            config=self.config,
            artifacts=artifacts,
            inputs=inputs,
        )


@contextmanager
def run_directory(config: RunConfig, out: Optional[Path] = None) -> Iterator[RunContext]:
    out = Path(out or config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_NAME).write_text(dump_config(config), encoding="utf-8")
    run = RunContext(out, config)
    try:
        yield run
    except Exception:
        logger.error(f"{config.command} run in {out} failed; no manifest written")
        raise
    (out / MANIFEST_NAME).write_text(run.manifest().model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"{config.command} run written to {out}")
