"""Constant-product venues and price snapshots.

A venue hosts one pool per tradeable asset, quoted against the numeraire
(asset 0). Exactly one venue is flagged as the reference market; deviation
scans measure every other venue against it.

Swap accounting is Uniswap-v2 style with an input-side fee: the full input
amount enters the reserves, but only the fee-reduced portion prices the
trade. Outputs round down, so the reserve product never decreases.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .units import SCALE, net_of_fee

log = logging.getLogger(__name__)

NUMERAIRE = 0

# fee must stay well below 100%; the config contract caps it at 10%
MAX_FEE_PPB = SCALE // 10


class SwapDirection(str, Enum):
    BASE_IN = "base_in"    # sell the base asset into the pool
    QUOTE_IN = "quote_in"  # spend quote (numeraire) to buy the base asset


class DegenerateVenueError(ValueError):
    """A pool with an empty reserve cannot quote or trade."""


@dataclass
class Pool:
    """One constant-product pair: `base` asset priced in `quote` units."""

    venue_id: int
    base: int
    quote: int
    reserve_base: int   # nano-units
    reserve_quote: int  # nano-units
    fee_ppb: int = 0
    is_reference: bool = False

    def __post_init__(self) -> None:
        if self.base == self.quote:
            raise ValueError(f"pool {self.venue_id}: base and quote must differ")
        if not 0 <= self.fee_ppb < MAX_FEE_PPB:
            raise ValueError(f"pool {self.venue_id}: fee {self.fee_ppb} ppb out of [0, 10%) range")
        if self.reserve_base < 0 or self.reserve_quote < 0:
            raise ValueError(f"pool {self.venue_id}: negative reserve")

    @property
    def tradeable(self) -> bool:
        return self.reserve_base > 0 and self.reserve_quote > 0

    @property
    def product(self) -> int:
        return self.reserve_base * self.reserve_quote

    def clone(self) -> "Pool":
        return Pool(
            venue_id=self.venue_id,
            base=self.base,
            quote=self.quote,
            reserve_base=self.reserve_base,
            reserve_quote=self.reserve_quote,
            fee_ppb=self.fee_ppb,
            is_reference=self.is_reference,
        )


@dataclass
class PriceVector:
    """Spot prices of one venue's hosted assets, in quote units per base unit."""

    venue_id: int
    prices: dict[int, float]
    as_of: tuple[int, str]  # (block index, phase label)
    is_reference: bool = False


def spot_price(pool: Pool, asset: int | None = None) -> float:
    """Marginal (fee-exclusive) price of the pool's base asset.

    `asset`, when given, must be the pool's base; passing the quote asset
    is a caller bug, not a quoting convention.
    """
    if asset is not None and asset != pool.base:
        raise ValueError(f"pool quotes asset {pool.base}, not {asset}")
    if not pool.tradeable:
        raise DegenerateVenueError(
            f"venue {pool.venue_id} asset {pool.base}: empty reserve"
        )
    return pool.reserve_quote / pool.reserve_base


def quote_swap(pool: Pool, direction: SwapDirection, amount_in: int) -> int:
    """Output of a swap without mutating the pool.

    out = net_in * reserve_out / (reserve_in + net_in), rounded down.
    """
    if amount_in <= 0:
        raise ValueError(f"amount_in must be positive, got {amount_in}")
    if not pool.tradeable:
        raise DegenerateVenueError(
            f"venue {pool.venue_id} asset {pool.base}: empty reserve"
        )
    if direction is SwapDirection.BASE_IN:
        reserve_in, reserve_out = pool.reserve_base, pool.reserve_quote
    else:
        reserve_in, reserve_out = pool.reserve_quote, pool.reserve_base
    net_in = net_of_fee(amount_in, pool.fee_ppb)
    return net_in * reserve_out // (reserve_in + net_in)


def execute_swap(
    pool: Pool, direction: SwapDirection, amount_in: int, gas: int = 21_000
) -> tuple[int, int]:
    """Apply a swap to the pool, returning (amount_out, gas_used).

    The full input (fee included) is added to the reserves; the output is
    exactly what quote_swap reports on the pre-state.
    """
    amount_out = quote_swap(pool, direction, amount_in)
    if direction is SwapDirection.BASE_IN:
        pool.reserve_base += amount_in
        pool.reserve_quote -= amount_out
    else:
        pool.reserve_quote += amount_in
        pool.reserve_base -= amount_out
    return amount_out, gas


def snapshot_prices(
    pools: Iterable[Pool], as_of: tuple[int, str]
) -> list[PriceVector]:
    """One PriceVector per venue, consistent with spot_price at call time.

    A venue containing any degenerate pool is omitted and flagged in the
    run log rather than aborting the snapshot.
    """
    by_venue: dict[int, list[Pool]] = {}
    for pool in pools:
        by_venue.setdefault(pool.venue_id, []).append(pool)

    vectors: list[PriceVector] = []
    for venue_id in sorted(by_venue):
        members = by_venue[venue_id]
        degenerate = [p for p in members if not p.tradeable]
        if degenerate:
            log.warning(
                "snapshot at %s: venue %d omitted (degenerate pool for asset %d)",
                as_of,
                venue_id,
                degenerate[0].base,
            )
            continue
        vectors.append(
            PriceVector(
                venue_id=venue_id,
                prices={p.base: spot_price(p) for p in sorted(members, key=lambda p: p.base)},
                as_of=as_of,
                is_reference=all(p.is_reference for p in members),
            )
        )
    return vectors
