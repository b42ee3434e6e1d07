"""
Subscriber records held by the HSS.
"""
import json
import logging
import os
from typing import Dict, Iterator, List, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import MalformedMessage, UnknownSubscriber

logger = logging.getLogger(__name__)

DEFAULT_REALM = "epc.mnc001.mcc001.3gppnetwork.org"
DEFAULT_APN = "oai.ipv4"
DEFAULT_IMSI = "001010123456789"
DEFAULT_KEY_HEX = "8baf473f2f8fd09487cccbd7097c6862"


class SubscriberRecord(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    imsi: str = Field(pattern=r"^\d{15}$")
    key_hex: str = Field(repr=False)
    apn: str = DEFAULT_APN
    realm: str = DEFAULT_REALM

    @field_validator("key_hex")
    @classmethod
    def _key_is_16_bytes(cls, value: str) -> str:
        try:
            key = bytes.fromhex(value)
        except ValueError:
            raise ValueError("key_hex must be hexadecimal") from None
        if len(key) != 16:
            raise ValueError("key_hex must encode 16 bytes")
        return value.lower()

    @property
    def key(self) -> bytes:
        return bytes.fromhex(self.key_hex)


class SubscriberStore:
    def __init__(self):
        self._records: Dict[str, SubscriberRecord] = {}

    def add(self, record: SubscriberRecord) -> bool:
        """Provision or replace a subscriber. Returns True for a new IMSI."""
        new = record.imsi not in self._records
        self._records[record.imsi] = record
        logger.info(f"Subscriber {record.imsi} {'provisioned' if new else 'updated'}")
        return new

    def get(self, imsi: str) -> SubscriberRecord:
        try:
            return self._records[imsi]
        except KeyError:
            raise UnknownSubscriber(f"no subscriber with IMSI {imsi}") from None

    def __contains__(self, imsi: str) -> bool:
        return imsi in self._records

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[SubscriberRecord]:
        return iter(self._records.values())

    def load_lines(self, text: str) -> int:
        """Provision from JSON lines of {imsi, key_hex, apn, realm}. Returns records loaded."""
        records: List[SubscriberRecord] = []
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(SubscriberRecord.model_validate(json.loads(line)))
            except (json.JSONDecodeError, ValidationError) as e:
                raise MalformedMessage(f"subscriber line {number}: {e}") from e
        for record in records:
            self.add(record)
        return len(records)

    def load_file(self, path: Union[str, os.PathLike]) -> int:
        with open(path) as f:
            return self.load_lines(f.read())
