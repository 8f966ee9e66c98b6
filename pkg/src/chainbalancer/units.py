"""Fixed-point quantity helpers.

Every asset quantity in the simulator is an integer counting nano-units
(1e-9 of one asset unit). Integer state transitions make conservation
checks exact and runs bit-reproducible. Dimensionless fractions (fees,
weights) are carried as parts per billion on the same scale.
"""

from __future__ import annotations

from decimal import ROUND_HALF_EVEN, Decimal

SCALE = 10**9  # nano-units per asset unit; also the parts-per-billion base


def to_nano(value) -> int:
    """Convert a unit-scale number (float, int, str, Decimal) to nano-units."""
    d = value if isinstance(value, Decimal) else Decimal(str(value))
    return int((d * SCALE).to_integral_value(rounding=ROUND_HALF_EVEN))


def to_units(nano: int) -> float:
    """Nano-units back to a float in asset units (reporting only)."""
    return nano / SCALE


def ppb(fraction) -> int:
    """Dimensionless fraction to parts per billion."""
    return to_nano(fraction)


def net_of_fee(amount: int, fee_ppb: int) -> int:
    """Amount left after an input-side fee, rounded down.

    The fee dust stays with the counterparty (the pool), which is what
    keeps the constant-product invariant non-decreasing under integer
    arithmetic.
    """
    return amount * (SCALE - fee_ppb) // SCALE


def fee_due(amount: int, fee_ppb: int) -> int:
    """Fee owed on `amount`, rounded up so the payer covers the dust."""
    return -((-amount * fee_ppb) // SCALE)
