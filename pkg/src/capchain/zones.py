"""Virtual trust zone contract.

A zone groups nodes that are allowed to authenticate to each other. The
contract keeps one record per zone (its master and a churn counter) and
one record per node (which zone it belongs to and in what role). All
mutations return booleans instead of aborting: an unauthorized or
inapplicable call is a ``False``, never an exception.

Roles are encoded as integers: 0 = none, 1 = master, 2 = follower.
"""

from __future__ import annotations

from dataclasses import dataclass

from .address import Address, ZERO_ADDRESS
from .ledger import Contract, ContractRejection

NODE_TYPE_NONE = 0
NODE_TYPE_MASTER = 1
NODE_TYPE_FOLLOWER = 2


@dataclass(frozen=True)
class VirtualZone:
    zone_id: str
    master: Address
    uid: int


@dataclass(frozen=True)
class VNodeRecord:
    address: Address
    vzone_id: str
    node_type: int

    @property
    def is_member(self) -> bool:
        return self.node_type != NODE_TYPE_NONE


class ZoneContract(Contract):
    """State machine for zone creation, revocation, joining and leaving.

    The supervisor address has override rights everywhere; ordinary
    masters must be on the supervisor-managed allowlist to create zones.
    """

    name = "vzone"

    def __init__(self, supervisor: Address):
        self.supervisor = supervisor
        self._zones: dict[str, dict] = {}        # zone_id -> {"master": Address, "uid": int}
        self._nodes: dict[Address, dict] = {}    # address -> {"vzone_id": str, "node_type": int}
        self._allowlist: set[Address] = set()

    # -- ledger protocol -------------------------------------------------------

    def execute(self, sender: Address, op: str, args: tuple):
        if op == "create_vzone":
            return self.create_vzone(sender, args[0])
        if op == "revoke_vzone":
            return self.revoke_vzone(sender, args[0])
        if op == "join_vzone":
            return self.join_vzone(sender, args[0], Address.from_hex(args[1]))
        if op == "leave_vzone":
            return self.leave_vzone(sender, args[0], Address.from_hex(args[1]))
        if op == "set_master_allowlist":
            return self.set_master_allowlist(sender, Address.from_hex(args[0]), bool(args[1]))
        raise ContractRejection("unknown-op", f"zone contract has no operation {op!r}")

    def view(self, op: str, args: tuple = ()):
        if op == "get_vnode":
            return self.get_vnode(Address.from_hex(args[0]))
        if op == "get_vzone":
            return self.get_vzone(args[0])
        if op == "get_certificate":
            return self.get_certificate(Address.from_hex(args[0]))
        if op == "is_allowlisted":
            return Address.from_hex(args[0]) in self._allowlist
        if op == "dangling_followers":
            return self.dangling_followers()
        raise ContractRejection("unknown-view", f"zone contract has no view {op!r}")

    # -- mutations (confirmed transactions only) ---------------------------------

    def create_vzone(self, sender: Address, zone_id: str) -> bool:
        if not zone_id:
            return False
        if sender != self.supervisor and sender not in self._allowlist:
            return False
        zone = self._zones.get(zone_id)
        if zone is not None and not zone["master"].is_zero:
            return False
        if zone is None:
            zone = {"master": ZERO_ADDRESS, "uid": 0}
            self._zones[zone_id] = zone
        zone["uid"] += 1
        zone["master"] = sender
        self._nodes[sender] = {"vzone_id": zone_id, "node_type": NODE_TYPE_MASTER}
        return True

    def revoke_vzone(self, sender: Address, zone_id: str) -> bool:
        zone = self._zones.get(zone_id)
        if zone is None or zone["master"].is_zero:
            return False
        authorized = sender == self.supervisor or (
            sender in self._allowlist and zone["master"] == sender)
        if not authorized:
            return False
        former_master = zone["master"]
        zone["uid"] += 1
        zone["master"] = ZERO_ADDRESS
        self._nodes[former_master] = {"vzone_id": "", "node_type": NODE_TYPE_NONE}
        return True

    def join_vzone(self, sender: Address, zone_id: str, node: Address) -> bool:
        if sender != self.supervisor and sender != self._zone_master(zone_id):
            return False
        record = self._nodes.get(node)
        if record is not None and record["node_type"] != NODE_TYPE_NONE:
            return False
        self._nodes[node] = {"vzone_id": zone_id, "node_type": NODE_TYPE_FOLLOWER}
        return True

    def leave_vzone(self, sender: Address, zone_id: str, node: Address) -> bool:
        if sender != self.supervisor and sender != self._zone_master(zone_id):
            return False
        record = self._nodes.get(node)
        if record is None or record["node_type"] != NODE_TYPE_FOLLOWER:
            return False
        self._nodes[node] = {"vzone_id": "", "node_type": NODE_TYPE_NONE}
        return True

    def set_master_allowlist(self, sender: Address, addr: Address, allowed: bool) -> bool:
        if sender != self.supervisor:
            return False
        if allowed:
            self._allowlist.add(addr)
        else:
            self._allowlist.discard(addr)
        return True

    # -- views ---------------------------------------------------------------------

    def _zone_master(self, zone_id: str) -> Address:
        zone = self._zones.get(zone_id)
        return zone["master"] if zone is not None else ZERO_ADDRESS

    def get_vzone(self, zone_id: str) -> VirtualZone:
        zone = self._zones.get(zone_id)
        if zone is None:
            return VirtualZone(zone_id, ZERO_ADDRESS, 0)
        return VirtualZone(zone_id, zone["master"], zone["uid"])

    def get_vnode(self, addr: Address) -> VNodeRecord:
        record = self._nodes.get(addr)
        if record is None:
            return VNodeRecord(addr, "", NODE_TYPE_NONE)
        return VNodeRecord(addr, record["vzone_id"], record["node_type"])

    def get_certificate(self, addr: Address) -> dict:
        """Authentication certificate for a node, in wire field names."""
        record = self.get_vnode(addr)
        return {
            "vid": addr.hex,
            "VZone": {
                "VZoneID": record.vzone_id,
                "master": self._zone_master(record.vzone_id).hex if record.vzone_id else ZERO_ADDRESS.hex,
            },
            "Vnode": {
                "VZoneID": record.vzone_id,
                "node_type": record.node_type,
            },
        }

    def dangling_followers(self) -> list[str]:
        """Followers whose zone currently has no master (cleanup aid for operators)."""
        out = []
        for addr, record in self._nodes.items():
            if record["node_type"] == NODE_TYPE_FOLLOWER:
                if self._zone_master(record["vzone_id"]).is_zero:
                    out.append(addr.hex)
        return sorted(out)

    def dump_state(self) -> dict:
        zones = {
            zone_id: {"VZoneID": zone_id, "master": zone["master"].hex, "uid": zone["uid"]}
            for zone_id, zone in self._zones.items()
        }
        nodes = {
            addr.hex: {"vid": addr.hex, "VZoneID": rec["vzone_id"], "node_type": rec["node_type"]}
            for addr, rec in self._nodes.items()
            if rec["node_type"] != NODE_TYPE_NONE
        }
        return {
            "supervisor": self.supervisor.hex,
            "allowlist": sorted(a.hex for a in self._allowlist),
            "zones": zones,
            "nodes": nodes,
        }
