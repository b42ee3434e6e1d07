"""
Underlay taps: verbatim copies of every frame crossing a link.
"""
import json
import logging
import os
from dataclasses import dataclass
from typing import Iterator, List, Union

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TapRecord:
    ts_us: float
    src: str
    dst: str
    link: str
    payload: bytes

    def to_json(self) -> str:
        return json.dumps(
            {"ts_us": self.ts_us, "src": self.src, "dst": self.dst, "link": self.link,
             "hex_payload": self.payload.hex()},
            sort_keys=False,
        )


class Tap:
    """What an observer at the VIM would see on one link."""

    def __init__(self, link_id: str):
        self.link_id = link_id
        self.records: List[TapRecord] = []
        self.active = True

    def record(self, ts_us: float, src: str, dst: str, link_id: str, payload: bytes) -> None:
        if self.active:
            self.records.append(TapRecord(ts_us, src, dst, link_id, bytes(payload)))

    def detach(self) -> None:
        """Stop recording; records taken so far stay available."""
        self.active = False

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TapRecord]:
        return iter(self.records)

    def export(self, path: Union[str, os.PathLike]) -> int:
        """Write the records as JSON lines. Returns the number of records written."""
        with open(path, "w") as f:
            for rec in self.records:
                f.write(rec.to_json() + "\n")
        logger.info(f"Exported {len(self.records)} tap records of {self.link_id} to {path}")
        return len(self.records)


def scan_tap(tap: Tap, needle: bytes) -> int:
    """Count records whose payload contains needle; an empty needle matches every record."""
    if isinstance(needle, str):
        needle = needle.encode()
    return sum(1 for rec in tap.records if needle in rec.payload)
