"""
YAML parsing and serialization of descriptor documents.
"""
import logging
import os
from pathlib import Path
from typing import Any, Iterable, Type, TypeVar, Union

import yaml
from pydantic import BaseModel, ValidationError

from .errors import DescriptorSyntaxError, SchemaError
from .models import DescriptorPackage, Nsd, Nst, Vnfd

logger = logging.getLogger(__name__)

Record = TypeVar("Record", bound=BaseModel)


def _format_loc(loc: Iterable[Any]) -> str:
    path = ""
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    return path


def _schema_error(kind: str, error: ValidationError) -> SchemaError:
    first = error.errors()[0]
    path = _format_loc(first["loc"])
    ctx = first.get("ctx") or {}
    if first["type"] == "schema" and ctx.get("path"):
        path = f"{path}.{ctx['path']}" if path else ctx["path"]
    elif first["type"] == "extra_forbidden":
        return SchemaError(f"{kind}.{path}", "unknown key")
    return SchemaError(f"{kind}.{path}" if path else kind, first["msg"])


def load_document(document: str, source: str = "<document>") -> Any:
    try:
        return yaml.safe_load(document)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        line = mark.line + 1 if mark is not None else None
        column = mark.column + 1 if mark is not None else None
        raise DescriptorSyntaxError(e.problem or str(e), line, column, source) from e
    except yaml.YAMLError as e:
        raise DescriptorSyntaxError(str(e), source=source) from e


def _parse(model: Type[Record], kind: str, document: str, source: str) -> Record:
    data = load_document(document, source)
    if not isinstance(data, dict):
        raise SchemaError(kind, "document must be a mapping")
    try:
        return model.model_validate(data)
    except ValidationError as e:
        error = _schema_error(kind, e)
        logger.warning(f"Rejected {source}: {error}")
        raise error from e


def parse_vnfd(document: str, source: str = "<vnfd>") -> Vnfd:
    return _parse(Vnfd, "vnfd", document, source)


def parse_nsd(document: str, source: str = "<nsd>") -> Nsd:
    return _parse(Nsd, "nsd", document, source)


def parse_nst(document: str, source: str = "<nst>") -> Nst:
    return _parse(Nst, "nst", document, source)


class _DescriptorDumper(yaml.SafeDumper):
    pass


def _represent_float(dumper: yaml.SafeDumper, value: float) -> yaml.ScalarNode:
    return dumper.represent_scalar("tag:yaml.org,2002:float", f"{value:.3f}")


_DescriptorDumper.add_representer(float, _represent_float)


def serialize(record: BaseModel) -> str:
    """
    Render a record as YAML. Floats carry three fractional digits and keys keep field order,
    so equal records always produce identical text.
    """
    return yaml.dump(
        record.model_dump(mode="python"),
        Dumper=_DescriptorDumper,
        sort_keys=False,
        default_flow_style=False,
        allow_unicode=True,
    )


def load_package(path: Union[str, os.PathLike]) -> DescriptorPackage:
    """
    Read a package directory: vnfd/*.yaml, nsd.yaml (or nsd/*.yaml) and nst/*.yaml.
    """
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"package directory not found: {root}")

    package = DescriptorPackage()
    for file in sorted((root / "vnfd").glob("*.yaml")):
        vnfd = parse_vnfd(file.read_text(), str(file))
        package.vnfds[vnfd.id] = vnfd

    nsd_files = [root / "nsd.yaml"] if (root / "nsd.yaml").exists() else []
    nsd_files += sorted((root / "nsd").glob("*.yaml"))
    for file in nsd_files:
        nsd = parse_nsd(file.read_text(), str(file))
        package.nsds[nsd.id] = nsd

    for file in sorted((root / "nst").glob("*.yaml")):
        nst = parse_nst(file.read_text(), str(file))
        package.nsts[nst.id] = nst

    logger.info(
        f"Loaded package {root}: {len(package.vnfds)} VNFDs, {len(package.nsds)} NSDs, {len(package.nsts)} NSTs"
    )
    return package
