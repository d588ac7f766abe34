"""CIDR -> city lookup (most specific prefix wins)."""

from __future__ import annotations

import csv
import ipaddress
from pathlib import Path


class GeoTable:
    """Longest-prefix match over IPv4 and IPv6 networks.

    Networks are bucketed per prefix length; a lookup masks the address for
    each registered length, longest first.
    """

    def __init__(self, entries: dict[str, str] | None = None):
        self._tables: dict[int, dict[int, dict[int, str]]] = {4: {}, 6: {}}
        self._lengths: dict[int, list[int]] = {4: [], 6: []}
        for cidr, city in (entries or {}).items():
            self.add(cidr, city)

    def add(self, cidr: str, city: str) -> None:
        net = ipaddress.ip_network(cidr.strip(), strict=False)
        by_len = self._tables[net.version].setdefault(net.prefixlen, {})
        by_len[int(net.network_address)] = city
        self._lengths[net.version] = sorted(self._tables[net.version], reverse=True)

    @classmethod
    def from_csv(cls, path: str | Path) -> GeoTable:
        table = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#") or row[0].strip().lower() == "cidr":
                    continue
                table.add(row[0], row[1].strip())
        return table

    def lookup(self, ip: str | None) -> str | None:
        if not ip:
            return None
        try:
            addr = ipaddress.ip_address(ip)
        except ValueError:
            return None
        bits = 32 if addr.version == 4 else 128
        value = int(addr)
        tables = self._tables[addr.version]
        for plen in self._lengths[addr.version]:
            mask = ((1 << plen) - 1) << (bits - plen) if plen else 0
            city = tables[plen].get(value & mask)
            if city is not None:
                return city
        return None

    def __len__(self) -> int:
        return sum(len(t) for v in self._tables.values() for t in v.values())


def geo_lookup(ip: str | None, table: GeoTable) -> str | None:
    return table.lookup(ip)
