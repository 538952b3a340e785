"""Local on-disk module registry: a directory of .modk files plus an index.

index.json maps id -> {file, signature, task_tag, version, metrics}.
Persistence is bit-exact and survives process restart. Only graph-backed
modules can be stored; function-backed modules have nothing to serialize.
"""
from __future__ import annotations

import json
from pathlib import Path

from ..errors import DuplicateModuleIdError, RegistryError, UnknownModuleIdError
from ..models.io import load_model, save_model
from .module import MlModule
from .signature import Signature

INDEX_NAME = "index.json"


def _safe_filename(module_id: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_"
                   for ch in module_id) + ".modk"


class Registry:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._index_path = self.root / INDEX_NAME
        if self._index_path.exists():
            self._index = json.loads(self._index_path.read_text())
        else:
            self._index = {}

    def _write_index(self):
        self._index_path.write_text(json.dumps(self._index, indent=2,
                                               sort_keys=True))

    def ids(self) -> list:
        return sorted(self._index)

    def put(self, module: MlModule) -> Path:
        if module.graph is None:
            raise RegistryError(f"module {module.id!r} has no serializable "
                                f"network behind it")
        if module.id in self._index:
            raise DuplicateModuleIdError(f"module id {module.id!r} already "
                                         f"registered")
        fname = _safe_filename(module.id)
        path = self.root / fname
        signature = {"input": module.input_signature.to_dict(),
                     "output": module.output_signature.to_dict()}
        metadata = dict(module.metadata)
        metadata.setdefault("id", module.id)
        save_model(module.graph, path, metadata=metadata, signature=signature)
        self._index[module.id] = {
            "file": fname,
            "signature": signature,
            "task_tag": metadata.get("task", ""),
            "version": metadata.get("version", 1),
            "metrics": metadata.get("metrics", {}),
        }
        self._write_index()
        return path

    def get(self, module_id: str) -> MlModule:
        entry = self._index.get(module_id)
        if entry is None:
            raise UnknownModuleIdError(f"no module with id {module_id!r}")
        graph, metadata, _sig = load_model(self.root / entry["file"])
        module = MlModule.from_graph(module_id, graph, metadata)
        declared = Signature.from_dict(entry["signature"]["input"])
        if module.input_signature != declared:
            raise RegistryError(f"{module_id!r}: stored file signature "
                                f"{module.input_signature} != indexed {declared}")
        return module

    def search(self, task_tag: str) -> list:
        """Modules whose task tag matches exactly."""
        return [self.get(mid) for mid, e in sorted(self._index.items())
                if e["task_tag"] == task_tag]
