import os
import shutil

import pytest

from descriptors.errors import DescriptorSyntaxError, SchemaError
from descriptors.models import DescriptorPackage
from descriptors.parser import load_package, parse_nsd, parse_nst, parse_vnfd, serialize
from descriptors.validation import validate_package
from orchestrator.charms.eps import EpsCharm

MINIMAL_VNFD = """
id: probe
vdus:
  - {name: probe, vcpus: 1, ram_gb: 0.5, storage_gb: 5}
cloud_init:
  admin_user: ubuntu
interfaces:
  - {name: mgmt, mgmt: true}
  - name: data
actions:
  - name: wg-setup
    phase_hint: day1
day1_primitives:
  - name: wg-setup
"""


def _vnfd(vnfd_id, relations=""):
    return parse_vnfd(f"""
id: {vnfd_id}
vdus: [{{name: {vnfd_id}, vcpus: 1, ram_gb: 1.0, storage_gb: 5}}]
cloud_init: {{admin_user: ubuntu}}
interfaces:
  - {{name: mgmt, mgmt: true}}
  - name: data
relations:
{relations}
""")


def test_parse_minimal_vnfd():
    vnfd = parse_vnfd(MINIMAL_VNFD)
    assert vnfd.id == "probe"
    assert vnfd.mgmt_interface == "mgmt"
    assert vnfd.data_interfaces == ["data"]
    assert [ref.name for ref in vnfd.day1_primitives] == ["wg-setup"]
    assert vnfd.vdus[0].image == "ubuntu-18.04"


def test_eps_hss_resources(eps_package_path):
    with open(os.path.join(eps_package_path, "vnfd", "hss.yaml")) as f:
        hss = parse_vnfd(f.read())
    vdu = hss.vdus[0]
    assert (vdu.vcpus, vdu.ram_gb, vdu.storage_gb) == (4, 8.0, 20)
    assert hss.resources(2.0)["vcpus"] == 8


def test_day1_primitive_must_be_declared():
    document = MINIMAL_VNFD.replace("day1_primitives:\n  - name: wg-setup", "day1_primitives:\n  - name: start-service")
    with pytest.raises(SchemaError) as info:
        parse_vnfd(document)
    assert info.value.path == "vnfd.day1_primitives[0].name"


def test_exactly_one_mgmt_interface():
    document = MINIMAL_VNFD.replace("  - name: data", "  - {name: data, mgmt: true}")
    with pytest.raises(SchemaError) as info:
        parse_vnfd(document)
    assert info.value.path == "vnfd.interfaces"


def test_unknown_key_is_rejected():
    with pytest.raises(SchemaError) as info:
        parse_vnfd(MINIMAL_VNFD + "flavour: large\n")
    assert "unknown key" in str(info.value)
    assert info.value.path == "vnfd.flavour"


def test_missing_field_reports_path():
    document = MINIMAL_VNFD.replace("  - {name: probe, vcpus: 1, ram_gb: 0.5, storage_gb: 5}",
                                    "  - {name: probe, ram_gb: 0.5, storage_gb: 5}")
    with pytest.raises(SchemaError) as info:
        parse_vnfd(document)
    assert info.value.path == "vnfd.vdus[0].vcpus"


def test_syntax_error_carries_position():
    with pytest.raises(DescriptorSyntaxError) as info:
        parse_vnfd("id: probe\nvdus: [unclosed\n", source="probe.yaml")
    assert info.value.line is not None
    assert info.value.source == "probe.yaml"
    assert "probe.yaml:" in str(info.value)


def test_document_must_be_mapping():
    with pytest.raises(SchemaError):
        parse_nsd("- just\n- a list\n")


def test_nsd_endpoint_member_must_exist():
    with pytest.raises(SchemaError) as info:
        parse_nsd("""
id: pair
vnf_refs: [{member_index: a, vnfd_id: probe}]
virtual_links:
  - name: L
    endpoints: [{member_index: a, interface: data}, {member_index: b, interface: data}]
""")
    assert info.value.path == "nsd.virtual_links[0].endpoints[1].member_index"


def test_nst_qos_weight():
    nst = parse_nst("""
id: urllc
nsd_ref: oai-eps
slice_type: urllc
qos: {five_qi: 82, latency_budget_ms: 10.0, dl_target_mbps: 10.0, priority: 19}
""")
    assert nst.exposed_interfaces == ["mgmt"]
    assert nst.qos.weight == 81.0


def test_load_eps_package(eps_package_path):
    package = load_package(eps_package_path)
    assert sorted(package.vnfds) == ["enb", "hss", "mme", "spgwc", "spgwu", "ue"]
    assert list(package.nsds) == ["oai-eps"]
    assert sorted(package.nsts) == ["embb", "urllc"]
    assert package.nsts["embb"].qos.five_qi == 9
    assert package.nsts["urllc"].qos.five_qi == 82
    uu = package.nsds["oai-eps"].link("Uu")
    assert uu.tunneled is False


def test_missing_package_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_package(tmp_path / "absent")


def test_eps_package_is_valid(eps_package_path):
    package = load_package(eps_package_path)
    assert validate_package(package, EpsCharm().handles_relation) == []


def test_unhandled_relation_is_reported(eps_package_path):
    package = load_package(eps_package_path)
    findings = validate_package(package, lambda name: not name.endswith("s6a"))
    assert {f.code for f in findings} == {"unhandled-relation"}
    assert {f.path.split(".")[0] for f in findings} == {"vnfd:hss", "vnfd:mme"}


def test_two_providers_are_unmatched():
    a = _vnfd("a", "  - {name: wgpeer-x, role: provider, counterpart_vnfd: b, bound_interface: data}")
    b = _vnfd("b", "  - {name: wgpeer-x, role: provider, counterpart_vnfd: a, bound_interface: data}")
    findings = validate_package(DescriptorPackage(vnfds={"a": a, "b": b}))
    assert [f.code for f in findings] == ["unmatched-role", "unmatched-role"]
    assert "unmatched relation role" in findings[0].message


def test_one_sided_relation_dangles():
    a = _vnfd("a", "  - {name: wgpeer-x, role: requirer, counterpart_vnfd: b, bound_interface: data}")
    b = _vnfd("b", "  []")
    findings = validate_package(DescriptorPackage(vnfds={"a": a, "b": b}))
    assert [(f.path, f.code) for f in findings] == [("vnfd:a.relations[0]", "dangling-relation")]


def test_nst_with_unknown_nsd(eps_package_path):
    package = load_package(eps_package_path)
    package.nsts["embb"] = package.nsts["embb"].model_copy(update={"nsd_ref": "missing"})
    findings = validate_package(package)
    assert [(f.path, f.code) for f in findings] == [("nst:embb.nsd_ref", "unknown-nsd")]


def test_nst_may_only_expose_mgmt(eps_package_path):
    package = load_package(eps_package_path)
    package.nsts["urllc"] = package.nsts["urllc"].model_copy(update={"exposed_interfaces": ["mgmt", "s1u"]})
    assert [f.code for f in validate_package(package)] == ["non-mgmt-exposure"]


def test_unknown_interface_in_nsd(tmp_path, eps_package_path):
    root = tmp_path / "eps"
    shutil.copytree(eps_package_path, root)
    nsd = (root / "nsd.yaml").read_text()
    (root / "nsd.yaml").write_text(nsd.replace("interface: s6a", "interface: s6x", 1))
    findings = validate_package(load_package(root))
    assert "unknown-interface" in {f.code for f in findings}


def test_serialize_round_trip(eps_package_path):
    package = load_package(eps_package_path)
    for record, parse in [(package.vnfds["mme"], parse_vnfd), (package.nsds["oai-eps"], parse_nsd),
                          (package.nsts["urllc"], parse_nst)]:
        text = serialize(record)
        again = parse(text)
        assert again == record
        assert serialize(again) == text


def test_serialize_keeps_day1_order_and_float_precision():
    vnfd = parse_vnfd(MINIMAL_VNFD.replace("ram_gb: 0.5", "ram_gb: 0.123456"))
    text = serialize(vnfd)
    assert "ram_gb: 0.123" in text
    assert "0.123456" not in text
    assert text.index("day1_primitives") < text.index("day2_primitives")


def test_primitive_params_accept_unquoted_scalars():
    document = MINIMAL_VNFD.replace(
        "day1_primitives:\n  - name: wg-setup",
        "day1_primitives:\n  - name: wg-setup\n    params: {port: 51820, persistent: true, weight: 0.5, iface: wg0}",
    )
    vnfd = parse_vnfd(document)
    assert vnfd.day1_primitives[0].params == {"port": "51820", "persistent": "true", "weight": "0.5",
                                              "iface": "wg0"}
