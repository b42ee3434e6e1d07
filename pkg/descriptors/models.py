"""
Descriptor records: VNFD, NSD and NST.

The dialect is a small SOL006-inspired schema. Every record forbids unknown keys so a typo in a
package surfaces as a SchemaError instead of being silently dropped.
"""
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_core import PydanticCustomError


def schema_violation(path: str, detail: str) -> PydanticCustomError:
    """Build a validation error that carries the offending sub-path."""
    return PydanticCustomError("schema", "{detail}", {"path": path, "detail": detail})


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid")


class VduSpec(_Record):
    name: str = Field(min_length=1)
    vcpus: int = Field(ge=1)
    ram_gb: float = Field(gt=0)
    storage_gb: int = Field(gt=0)
    image: str = "ubuntu-18.04"


class FileSpec(_Record):
    path: str = Field(min_length=1)
    content: str = ""


class Day0Config(_Record):
    admin_user: str = Field(min_length=1)
    packages: List[str] = Field(default_factory=list)
    files: List[FileSpec] = Field(default_factory=list)


class ActionParam(_Record):
    name: str = Field(min_length=1)
    type: Literal["string", "int", "bool"] = "string"
    required: bool = False


class ActionSpec(_Record):
    name: str = Field(min_length=1)
    params: List[ActionParam] = Field(default_factory=list)
    phase_hint: Literal["day1", "day2", "both"] = "both"

    @model_validator(mode="after")
    def _unique_params(self):
        seen = set()
        for i, param in enumerate(self.params):
            if param.name in seen:
                raise schema_violation(f"params[{i}].name", f"duplicate parameter '{param.name}'")
            seen.add(param.name)
        return self


class ActionRef(_Record):
    name: str = Field(min_length=1)
    params: Dict[str, str] = Field(default_factory=dict)

    @field_validator("params", mode="before")
    @classmethod
    def _scalars_as_text(cls, value):
        # unquoted YAML scalars arrive as int, float or bool
        if not isinstance(value, dict):
            return value
        return {
            key: (str(v).lower() if isinstance(v, bool) else str(v) if isinstance(v, (int, float)) else v)
            for key, v in value.items()
        }


class RelationSpec(_Record):
    name: str = Field(min_length=1)
    role: Literal["provider", "requirer"]
    counterpart_vnfd: str = Field(min_length=1)
    bound_interface: str = Field(min_length=1)


class InterfaceSpec(_Record):
    name: str = Field(min_length=1)
    mgmt: bool = False


class Vnfd(_Record):
    id: str = Field(min_length=1)
    description: str = ""
    vdus: List[VduSpec] = Field(min_length=1)
    cloud_init: Day0Config
    interfaces: List[InterfaceSpec] = Field(min_length=1)
    actions: List[ActionSpec] = Field(default_factory=list)
    day1_primitives: List[ActionRef] = Field(default_factory=list)
    day2_primitives: List[ActionRef] = Field(default_factory=list)
    relations: List[RelationSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def _cross_check(self):
        names = set()
        for i, vdu in enumerate(self.vdus):
            if vdu.name in names:
                raise schema_violation(f"vdus[{i}].name", f"duplicate vdu '{vdu.name}'")
            names.add(vdu.name)

        mgmt = [iface.name for iface in self.interfaces if iface.mgmt]
        if len(mgmt) != 1:
            raise schema_violation("interfaces", f"expected exactly one management interface, found {len(mgmt)}")
        iface_names = [iface.name for iface in self.interfaces]
        if len(set(iface_names)) != len(iface_names):
            raise schema_violation("interfaces", "interface names must be unique")

        declared = {action.name for action in self.actions}
        for phase in ("day1_primitives", "day2_primitives"):
            for i, ref in enumerate(getattr(self, phase)):
                if ref.name not in declared:
                    raise schema_violation(f"{phase}[{i}].name", f"action '{ref.name}' is not declared in actions")

        for i, relation in enumerate(self.relations):
            if relation.bound_interface not in iface_names:
                raise schema_violation(
                    f"relations[{i}].bound_interface", f"interface '{relation.bound_interface}' does not exist"
                )
        return self

    @property
    def mgmt_interface(self) -> str:
        return next(iface.name for iface in self.interfaces if iface.mgmt)

    @property
    def data_interfaces(self) -> List[str]:
        return [iface.name for iface in self.interfaces if not iface.mgmt]

    def action(self, name: str) -> Optional[ActionSpec]:
        return next((action for action in self.actions if action.name == name), None)

    def resources(self, multiplier: float = 1.0) -> Dict[str, float]:
        """Total VDU resources, scaled by a flavor multiplier."""
        return {
            "vcpus": sum(vdu.vcpus for vdu in self.vdus) * multiplier,
            "ram_gb": sum(vdu.ram_gb for vdu in self.vdus) * multiplier,
            "storage_gb": sum(vdu.storage_gb for vdu in self.vdus) * multiplier,
        }


class VnfRef(_Record):
    member_index: str = Field(min_length=1)
    vnfd_id: str = Field(min_length=1)


class LinkEndpoint(_Record):
    member_index: str = Field(min_length=1)
    interface: str = Field(min_length=1)


class VirtualLink(_Record):
    name: str = Field(min_length=1)
    endpoints: List[LinkEndpoint] = Field(min_length=2, max_length=2)
    capacity_mbps: Optional[float] = Field(default=None, gt=0)
    delay_ms: Optional[float] = Field(default=None, ge=0)
    tunneled: bool = True


class Nsd(_Record):
    id: str = Field(min_length=1)
    description: str = ""
    vnf_refs: List[VnfRef] = Field(min_length=1)
    virtual_links: List[VirtualLink] = Field(default_factory=list)
    flavor_multiplier: float = Field(default=1.0, ge=1)

    @model_validator(mode="after")
    def _cross_check(self):
        members = set()
        for i, ref in enumerate(self.vnf_refs):
            if ref.member_index in members:
                raise schema_violation(f"vnf_refs[{i}].member_index", f"duplicate member '{ref.member_index}'")
            members.add(ref.member_index)
        links = set()
        for i, link in enumerate(self.virtual_links):
            if link.name in links:
                raise schema_violation(f"virtual_links[{i}].name", f"duplicate link '{link.name}'")
            links.add(link.name)
            for j, endpoint in enumerate(link.endpoints):
                if endpoint.member_index not in members:
                    raise schema_violation(
                        f"virtual_links[{i}].endpoints[{j}].member_index",
                        f"member '{endpoint.member_index}' is not declared",
                    )
        return self

    def member(self, member_index: str) -> VnfRef:
        return next(ref for ref in self.vnf_refs if ref.member_index == member_index)

    def link(self, name: str) -> Optional[VirtualLink]:
        return next((link for link in self.virtual_links if link.name == name), None)


class QosProfile(_Record):
    five_qi: int = Field(gt=0)
    latency_budget_ms: float = Field(gt=0)
    dl_target_mbps: float = Field(gt=0)
    priority: int = Field(gt=0)

    @property
    def weight(self) -> float:
        """Scheduling weight on shared resources; a lower priority level weighs more."""
        return max(1.0, 100.0 - self.priority)


class Nst(_Record):
    id: str = Field(min_length=1)
    description: str = ""
    nsd_ref: str = Field(min_length=1)
    slice_type: Literal["embb", "urllc"]
    qos: QosProfile
    exposed_interfaces: List[str] = Field(default_factory=lambda: ["mgmt"])


class DescriptorPackage(_Record):
    vnfds: Dict[str, Vnfd] = Field(default_factory=dict)
    nsds: Dict[str, Nsd] = Field(default_factory=dict)
    nsts: Dict[str, Nst] = Field(default_factory=dict)
