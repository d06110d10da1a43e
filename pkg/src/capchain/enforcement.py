"""Service-provider enforcement: identity authentication and token validation.

A request passes through five stages in a fixed order, aborting at the
first failure:

    identity_auth -> token_fetch -> token_status -> rule_match -> condition_check

Token data is read from a provider-local cache that is refreshed once
per block interval; entries that miss a refresh go stale and fall back
to a direct contract query (fail-closed). Stage durations come from a
deterministic cost model supplied by the harness, so traces are exactly
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from .address import Address
from .ledger import Chain
from .tokens import MS_PER_DAY, ConditionKind
from .zones import NODE_TYPE_NONE, VNodeRecord

PIPELINE_STAGES = ("identity_auth", "token_fetch", "token_status", "rule_match",
                   "condition_check")

# Token status flags, checked in this order so failure reasons are deterministic.
STATUS_CHECK_ORDER = ("initialized", "isValid", "issuedate", "expireddate")


@dataclass(frozen=True)
class ServiceRequest:
    requester: Address
    method: str                # REST action name: GET/POST/PUT/DELETE
    uri: str                   # Request-URI path
    now: float                 # virtual-time ms at evaluation
    location_tag: str = ""

    def __post_init__(self) -> None:
        if not self.uri.startswith("/"):
            raise ValueError("request uri must start with '/'")


@dataclass(frozen=True)
class StageRecord:
    stage: str
    outcome: str               # "pass" | "fail"
    duration_ms: float


@dataclass
class StageTrace:
    """Per-request record of stage outcomes and durations."""

    records: list[StageRecord] = field(default_factory=list)
    transport_ms: float = 0.0
    aborted_at: Optional[str] = None
    cache_hit: Optional[bool] = None

    @property
    def total_ms(self) -> float:
        return sum(r.duration_ms for r in self.records) + self.transport_ms

    def stage_duration(self, stage: str) -> float:
        return sum(r.duration_ms for r in self.records if r.stage == stage)

    def recorded_stages(self) -> tuple[str, ...]:
        return tuple(r.stage for r in self.records)


@dataclass(frozen=True)
class Decision:
    granted: bool
    stage: Optional[str] = None      # denial stage, None on grant
    reason: Optional[str] = None
    matched_rule: Optional[dict] = None

    def denial_wire(self, requester: Address) -> dict:
        """Machine-readable denial response."""
        return {"stage": self.stage, "reason": self.reason, "requester": requester.hex}


GRANT = Decision(granted=True)


# ---------------------------------------------------------------------------
# Pure validation steps (operate on token wire dicts)
# ---------------------------------------------------------------------------

def verify_token_status(token: dict, now: float) -> tuple[bool, Optional[str]]:
    """Flag and date-window check; reason names the first failing field."""
    if not token["initialized"]:
        return False, "initialized"
    if not token["isValid"]:
        return False, "isValid"
    if not token["issuedate"] <= now:
        return False, "issuedate"
    if not now < token["expireddate"]:
        return False, "expireddate"
    return True, None


def match_access_rule(token: dict, method: str, uri: str) -> Optional[dict]:
    """First rule whose action and resource both match, in list order.

    Resource matching is exact string equality on the Request-URI; no
    prefixes or wildcards.
    """
    for rule in token["authorization"]:
        if rule["action"] == method and rule["resource"] == uri:
            return rule
    return None


def condition_satisfied(condition: dict, now: float, location_tag: str) -> bool:
    kind = condition["kind"]
    if kind == ConditionKind.TIME_WINDOW.value:
        ms_of_day = now % MS_PER_DAY
        return condition["start_ms"] <= ms_of_day < condition["end_ms"]
    if kind == ConditionKind.WEEKDAY.value:
        day = int(now // MS_PER_DAY) % 7
        return day in condition["days"]
    if kind == ConditionKind.LOCATION_TAG.value:
        return location_tag == condition["tag"]
    return False


def verify_conditions(rule: dict, now: float,
                      location_tag: str) -> tuple[bool, Optional[str]]:
    """All conditions must hold (conjunctive); an empty list is satisfied."""
    for condition in rule.get("conditions", []):
        if not condition_satisfied(condition, now, location_tag):
            return False, condition["kind"]
    return True, None


# ---------------------------------------------------------------------------
# Token cache
# ---------------------------------------------------------------------------

@dataclass
class CacheEntry:
    token: dict
    cached_at: float
    synced_at: float


class TokenCache:
    """Provider-local token store, kept in step with the chain per block.

    An entry is served only while its last refresh is at most one block
    interval old; anything older is evicted so the next request goes back
    to the contract (fail-closed).
    """

    def __init__(self, block_interval_ms: int):
        self.block_interval_ms = block_interval_ms
        self.entries: dict[Address, CacheEntry] = {}
        self.last_sync_height = 0

    def get(self, subject: Address, now: float) -> Optional[CacheEntry]:
        entry = self.entries.get(subject)
        if entry is None:
            return None
        if now - entry.synced_at > self.block_interval_ms:
            del self.entries[subject]
            return None
        return entry

    def put(self, subject: Address, token: dict, now: float) -> None:
        self.entries[subject] = CacheEntry(token=token, cached_at=now, synced_at=now)

    def seed(self, subject: Address, token: dict, now: float = 0.0) -> None:
        """Inject an entry directly (test harness path, bypasses the contract)."""
        self.put(subject, token, now)

    def sync(self, fetch, now: float, height: int) -> int:
        """Refresh every entry from confirmed state; returns replaced-entry count."""
        refreshed = 0
        for subject in list(self.entries):
            try:
                token = fetch(subject)
            except Exception:
                token = None
            if token is None:
                del self.entries[subject]   # fail-closed: force a re-query next time
                continue
            entry = self.entries[subject]
            if token != entry.token:
                entry.token = token
                entry.cached_at = now
                refreshed += 1
            entry.synced_at = now
        self.last_sync_height = height
        return refreshed


# ---------------------------------------------------------------------------
# Service provider
# ---------------------------------------------------------------------------

class ServiceProvider:
    """One service endpoint enforcing the authorization pipeline.

    ``stage_costs`` maps cost-model keys to milliseconds:
    ``identity_auth``, ``token_fetch_hit``, ``token_fetch_miss``,
    ``token_status``, ``rule_match``, ``condition_check``. Missing keys
    cost zero. Handles one request at a time; the cache is only written
    between requests (initial fetch aside), so each request sees a
    coherent token snapshot.
    """

    def __init__(self, address: Address, chain: Chain,
                 zone_contract: str = "vzone", token_contract: str = "captoken",
                 stage_costs: Optional[Mapping[str, float]] = None):
        self.address = address
        self.chain = chain
        self.zone_contract = zone_contract
        self.token_contract = token_contract
        self.stage_costs = dict(stage_costs or {})
        self.cache = TokenCache(chain.config.block_interval_ms)
        self.contract_queries = 0
        self._own_record: VNodeRecord = self._query_vnode(address)

    def _cost(self, key: str) -> float:
        return self.stage_costs.get(key, 0.0)

    def _query_vnode(self, addr: Address) -> VNodeRecord:
        self.contract_queries += 1
        return self.chain.query_state(self.zone_contract, "get_vnode", (addr.hex,))

    def refresh_membership(self) -> None:
        self._own_record = self.chain.query_state(
            self.zone_contract, "get_vnode", (self.address.hex,))

    # -- stage 0: identity authentication -------------------------------------

    def authenticate(self, requester: Address) -> tuple[bool, Optional[str]]:
        """Same-zone check: two contract queries (requester Vnode, then VZone)."""
        requester_record = self._query_vnode(requester)
        if self._own_record.node_type == NODE_TYPE_NONE or \
                requester_record.node_type == NODE_TYPE_NONE:
            return False, "not-member"
        if requester_record.vzone_id != self._own_record.vzone_id:
            return False, "zone-mismatch"
        self.contract_queries += 1
        zone = self.chain.query_state(self.zone_contract, "get_vzone",
                                      (self._own_record.vzone_id,))
        if zone.master.is_zero:
            return False, "zone-revoked"
        return True, None

    # -- stage 1: token fetch ----------------------------------------------------

    def fetch_or_cache_token(self, subject: Address,
                             now: float) -> tuple[Optional[dict], bool]:
        entry = self.cache.get(subject, now)
        if entry is not None:
            return entry.token, True
        self.contract_queries += 1
        token = self.chain.query_state(self.token_contract, "get_token", (subject.hex,))
        if token is not None:
            self.cache.put(subject, token, now)
        return token, False

    # -- full pipeline --------------------------------------------------------------

    def authorize(self, request: ServiceRequest,
                  transport_ms: float = 0.0) -> tuple[Decision, StageTrace]:
        trace = StageTrace(transport_ms=transport_ms)

        def deny(stage: str, reason: str, duration: float) -> Decision:
            trace.records.append(StageRecord(stage, "fail", duration))
            trace.aborted_at = stage
            return Decision(granted=False, stage=stage, reason=reason)

        def passed(stage: str, duration: float) -> None:
            trace.records.append(StageRecord(stage, "pass", duration))

        ok, reason = self.authenticate(request.requester)
        if not ok:
            return deny("identity_auth", reason, self._cost("identity_auth")), trace
        passed("identity_auth", self._cost("identity_auth"))

        token, hit = self.fetch_or_cache_token(request.requester, request.now)
        trace.cache_hit = hit
        fetch_cost = self._cost("token_fetch_hit" if hit else "token_fetch_miss")
        if token is None:
            return deny("token_fetch", "token-absent", fetch_cost), trace
        passed("token_fetch", fetch_cost)

        ok, reason = verify_token_status(token, request.now)
        if not ok:
            return deny("token_status", reason, self._cost("token_status")), trace
        passed("token_status", self._cost("token_status"))

        rule = match_access_rule(token, request.method, request.uri)
        if rule is None:
            return deny("rule_match", "no-matching-rule", self._cost("rule_match")), trace
        passed("rule_match", self._cost("rule_match"))

        ok, reason = verify_conditions(rule, request.now, request.location_tag)
        if not ok:
            return deny("condition_check", reason, self._cost("condition_check")), trace
        passed("condition_check", self._cost("condition_check"))

        return Decision(granted=True, matched_rule=rule), trace

    # -- cache synchronization ---------------------------------------------------------

    def sync_cache(self, now: float) -> int:
        """Refresh cached tokens from confirmed state; once per block interval."""
        self.refresh_membership()

        def fetch(subject: Address):
            return self.chain.query_state(self.token_contract, "get_token",
                                          (subject.hex,))

        return self.cache.sync(fetch, now, self.chain.height)


def write_stage_traces_csv(rows: list[tuple[int, StageTrace]], stream) -> None:
    """CSV export: one line per recorded stage, columns fixed."""
    stream.write("request_id,stage,outcome,duration_ms\n")
    for request_id, trace in rows:
        for record in trace.records:
            stream.write(f"{request_id},{record.stage},{record.outcome},"
                         f"{_fmt_ms(record.duration_ms)}\n")


def _fmt_ms(value: float) -> str:
    text = f"{value:.6f}".rstrip("0").rstrip(".")
    return text if text else "0"
