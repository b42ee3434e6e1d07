"""
Cross-document checks over a parsed descriptor package.
"""
import logging
from typing import Callable, List, Optional

from pydantic import BaseModel

from .models import DescriptorPackage

logger = logging.getLogger(__name__)


class Finding(BaseModel):
    path: str
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message} ({self.code})"


def validate_package(
    package: DescriptorPackage,
    handles_relation: Optional[Callable[[str], bool]] = None,
) -> List[Finding]:
    """
    Resolve references between documents. An empty list means the package is valid.

    handles_relation, when given, tells whether a relation name has a registered handler.
    """
    findings: List[Finding] = []

    def find(path: str, code: str, message: str) -> None:
        findings.append(Finding(path=path, code=code, message=message))

    for vnfd_id, vnfd in package.vnfds.items():
        for i, relation in enumerate(vnfd.relations):
            path = f"vnfd:{vnfd_id}.relations[{i}]"
            if handles_relation is not None and not handles_relation(relation.name):
                find(path, "unhandled-relation", f"no handler registered for relation '{relation.name}'")
            counterpart = package.vnfds.get(relation.counterpart_vnfd)
            if counterpart is None:
                find(path, "dangling-relation", f"counterpart vnfd '{relation.counterpart_vnfd}' is not in the package")
                continue
            mirrors = [
                other for other in counterpart.relations
                if other.name == relation.name and other.counterpart_vnfd == vnfd_id
            ]
            if not mirrors:
                find(path, "dangling-relation", f"'{relation.counterpart_vnfd}' does not declare relation '{relation.name}'")
            elif all(other.role == relation.role for other in mirrors):
                find(path, "unmatched-role", f"unmatched relation role: both sides of '{relation.name}' are {relation.role}s")

    for nsd_id, nsd in package.nsds.items():
        members = {}
        for i, ref in enumerate(nsd.vnf_refs):
            vnfd = package.vnfds.get(ref.vnfd_id)
            if vnfd is None:
                find(f"nsd:{nsd_id}.vnf_refs[{i}]", "unknown-vnfd", f"vnfd '{ref.vnfd_id}' is not in the package")
            members[ref.member_index] = vnfd
        for i, link in enumerate(nsd.virtual_links):
            for j, endpoint in enumerate(link.endpoints):
                vnfd = members.get(endpoint.member_index)
                if vnfd is None:
                    continue
                if endpoint.interface not in [iface.name for iface in vnfd.interfaces]:
                    find(
                        f"nsd:{nsd_id}.virtual_links[{i}].endpoints[{j}]", "unknown-interface",
                        f"'{vnfd.id}' has no interface '{endpoint.interface}'",
                    )

    for nst_id, nst in package.nsts.items():
        nsd = package.nsds.get(nst.nsd_ref)
        if nsd is None:
            find(f"nst:{nst_id}.nsd_ref", "unknown-nsd", f"nsd '{nst.nsd_ref}' is not in the package")
            continue
        for iface in nst.exposed_interfaces:
            for ref in nsd.vnf_refs:
                vnfd = package.vnfds.get(ref.vnfd_id)
                if vnfd is not None and iface != vnfd.mgmt_interface:
                    find(
                        f"nst:{nst_id}.exposed_interfaces", "non-mgmt-exposure",
                        f"'{iface}' is not the management interface of '{vnfd.id}'",
                    )
                    break

    findings.sort(key=lambda f: (f.path, f.code))
    if findings:
        logger.warning(f"Package validation found {len(findings)} problem(s)")
    return findings
