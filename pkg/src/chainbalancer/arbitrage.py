"""Deviation detection, trade sizing, and atomic arbitrage execution.

A balancer transaction closes the gap between one venue pool and the
reference pool for a single asset: buy where the asset is cheap, sell
where it is dear, both legs denominated in the numeraire. Funding is a
flash loan (repaid with a fee inside the same transaction) or
network-owned liquidity fronted by the treasury; either way the whole
round trip commits atomically or rolls back exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .market import (
    NUMERAIRE,
    DegenerateVenueError,
    Pool,
    SwapDirection,
    execute_swap,
    spot_price,
)
from .state import FEE_ESCROW, LENDER, TREASURY, ChainState, InsufficientBalanceError
from .units import SCALE, fee_due, ppb, to_nano

DEFAULT_BALANCER_GAS = 90_000


class Funding(str, Enum):
    FLASH_LOAN = "flash_loan"
    NETWORK_LIQUIDITY = "network_liquidity"


class OppDirection(str, Enum):
    BUY_ON_VENUE_SELL_ON_REF = "buy_on_venue_sell_on_ref"
    BUY_ON_REF_SELL_ON_VENUE = "buy_on_ref_sell_on_venue"


class MissingReferenceError(ValueError):
    """No reference price vector was supplied to a deviation scan."""


@dataclass
class Threshold:
    """Trigger and cost parameters for deviation arbitrage."""

    epsilon: float = 0.003        # relative deviation trigger
    flash_fee: float = 0.0009     # fraction of the borrowed size
    gas_price: float = 1e-7       # numeraire per gas unit

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 <= self.flash_fee < 0.01:
            raise ValueError("flash_fee out of [0, 0.01) range")
        if self.gas_price < 0:
            raise ValueError("gas_price must be non-negative")
        self.flash_fee_ppb = ppb(self.flash_fee)
        self.gas_price_nano = to_nano(self.gas_price)


@dataclass
class Deviation:
    """Relative price deviation of one (asset, venue) pair vs the reference."""

    asset: int
    venue_id: int
    delta_p: float  # (p_venue - p_ref) / p_ref
    observed_at: tuple[int, str]


@dataclass
class Opportunity:
    deviation: Deviation
    direction: OppDirection
    optimal_size: int      # nano-units of numeraire spent on the cheap leg
    expected_profit: int   # nano-units, net of flash fee and gas
    gas_estimate: int
    funding: Funding


@dataclass
class ExecutionResult:
    committed: bool
    profit: int = 0      # nano-units of numeraire added to the beneficiary
    gas_used: int = 0
    reason: str = ""


def scan_deviations(
    price_vectors, reference_vector=None
) -> list[Deviation]:
    """Compute (p_venue - p_ref)/p_ref for every asset on every other venue.

    All vectors must come from the same snapshot; mixing timestamps would
    compare prices that never coexisted.
    """
    vectors = list(price_vectors)
    if reference_vector is None:
        refs = [v for v in vectors if v.is_reference]
        if not refs:
            raise MissingReferenceError("no reference venue in snapshot")
        reference_vector = refs[0]
    others = [v for v in vectors if v.venue_id != reference_vector.venue_id]
    deviations: list[Deviation] = []
    for vector in others:
        if vector.as_of != reference_vector.as_of:
            raise ValueError(
                f"snapshot mismatch: venue {vector.venue_id} at {vector.as_of}, "
                f"reference at {reference_vector.as_of}"
            )
        for asset in sorted(vector.prices):
            if asset not in reference_vector.prices:
                continue
            p_ref = reference_vector.prices[asset]
            delta = (vector.prices[asset] - p_ref) / p_ref
            deviations.append(
                Deviation(
                    asset=asset,
                    venue_id=vector.venue_id,
                    delta_p=delta,
                    observed_at=vector.as_of,
                )
            )
    return deviations


def fee_band(fee_cheap: float, fee_dear: float, flash_fee: float = 0.0) -> float:
    """Half-width of the no-arbitrage region on the price-ratio scale.

    A marginal round trip (buy cheap, sell dear) is profitable only while
    p_dear/p_cheap > (1 + flash_fee) / ((1 - fee_cheap)(1 - fee_dear));
    the band is 1 - p_cheap/p_dear at that boundary.
    """
    return 1.0 - (1.0 - fee_cheap) * (1.0 - fee_dear) / (1.0 + flash_fee)


def deviation_bounds(
    fee_venue: float, fee_ref: float, flash_fee: float = 0.0
) -> tuple[float, float]:
    """No-arbitrage interval for the relative deviation (p_v - p_R)/p_R.

    The band is symmetric on the price-ratio scale. Re-expressed against
    the reference denominator the negative side stays at -band while the
    positive side widens to band/(1-band): when the venue trades above the
    reference, the gap is measured against the smaller of the two prices.
    """
    band = fee_band(fee_venue, fee_ref, flash_fee)
    return -band, band / (1.0 - band)


def _leg_out(reserve_in: float, reserve_out: float, fee: float, x: float) -> float:
    net = x * (1.0 - fee)
    return net * reserve_out / (reserve_in + net)


def round_trip_profit(
    pool_cheap: Pool, pool_dear: Pool, flash_fee: float, size: float
) -> float:
    """Continuous-model profit of spending `size` numeraire units.

    Leg 1 buys the asset on the cheap pool, leg 2 sells it on the dear
    pool; the flash fee prices the borrowed size.
    """
    if size <= 0:
        return 0.0
    asset_out = _leg_out(
        pool_cheap.reserve_quote / SCALE,
        pool_cheap.reserve_base / SCALE,
        pool_cheap.fee_ppb / SCALE,
        size,
    )
    quote_back = _leg_out(
        pool_dear.reserve_base / SCALE,
        pool_dear.reserve_quote / SCALE,
        pool_dear.fee_ppb / SCALE,
        asset_out,
    )
    return quote_back - size * (1.0 + flash_fee)


def optimal_trade_size(
    pool_cheap: Pool, pool_dear: Pool, flash_fee: float = 0.0
) -> tuple[float, float]:
    """Profit-maximizing numeraire input for a cheap->dear round trip.

    Returns (size, profit) in asset units; (0, 0) when no profitable size
    exists. The profit curve is concave, so a doubling bracket followed by
    ternary search pins the optimum; gas is a fixed cost and does not move
    the maximizer, so callers subtract it afterwards.
    """
    p_cheap = spot_price(pool_cheap)
    p_dear = spot_price(pool_dear)
    f_cheap = pool_cheap.fee_ppb / SCALE
    f_dear = pool_dear.fee_ppb / SCALE
    # marginal gain at size zero; below 1 + flash_fee nothing is profitable
    marginal0 = (p_dear / p_cheap) * (1.0 - f_cheap) * (1.0 - f_dear)
    if marginal0 <= 1.0 + flash_fee:
        return 0.0, 0.0

    profit = lambda x: round_trip_profit(pool_cheap, pool_dear, flash_fee, x)

    # bracket the maximum by doubling from a sliver of the cheap-side depth
    hi = max(pool_cheap.reserve_quote / SCALE * 1e-6, 1e-9)
    for _ in range(120):
        if profit(2.0 * hi) <= profit(hi):
            break
        hi *= 2.0
    hi *= 2.0

    lo = 0.0
    for _ in range(200):
        if hi - lo <= 1e-9 * hi + 1e-12:
            break
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if profit(m1) < profit(m2):
            lo = m1
        else:
            hi = m2
    size = 0.5 * (lo + hi)
    best = profit(size)
    if best <= 0.0 or size <= 0.0:
        return 0.0, 0.0
    return size, best


def opportunity_from_deviation(
    deviation: Deviation,
    pools: dict[tuple[int, int], Pool],
    reference_venue_id: int,
    threshold: Threshold,
    funding: Funding = Funding.FLASH_LOAN,
    gas_estimate: int = DEFAULT_BALANCER_GAS,
    trigger_epsilon: float | None = None,
) -> Opportunity | None:
    """Size the trade behind a deviation; None when it does not clear the bar.

    The bar is threefold: |delta_p| above the trigger, a strictly positive
    optimal size, and a positive profit after the flash fee and gas.
    """
    epsilon = threshold.epsilon if trigger_epsilon is None else trigger_epsilon
    if abs(deviation.delta_p) <= epsilon:
        return None
    venue_pool = pools[(deviation.venue_id, deviation.asset)]
    ref_pool = pools[(reference_venue_id, deviation.asset)]
    if deviation.delta_p > 0:
        direction = OppDirection.BUY_ON_REF_SELL_ON_VENUE
        cheap, dear = ref_pool, venue_pool
    else:
        direction = OppDirection.BUY_ON_VENUE_SELL_ON_REF
        cheap, dear = venue_pool, ref_pool
    flash = threshold.flash_fee if funding is Funding.FLASH_LOAN else 0.0
    size_units, gross_units = optimal_trade_size(cheap, dear, flash)
    if size_units <= 0.0:
        return None
    size = int(size_units * SCALE)
    gas_fee = gas_estimate * threshold.gas_price_nano
    net = int(round(gross_units * SCALE)) - gas_fee
    if size <= 0 or net <= 0:
        return None
    return Opportunity(
        deviation=deviation,
        direction=direction,
        optimal_size=size,
        expected_profit=net,
        gas_estimate=gas_estimate,
        funding=funding,
    )


def detect_opportunities(
    deviations,
    threshold: Threshold,
    pools: dict[tuple[int, int], Pool],
    funding: Funding = Funding.FLASH_LOAN,
    gas_estimate: int = DEFAULT_BALANCER_GAS,
) -> list[Opportunity]:
    """Opportunities for every deviation beyond the trigger, profitably sized."""
    reference_ids = {p.venue_id for p in pools.values() if p.is_reference}
    if not reference_ids:
        raise MissingReferenceError("no reference pool configured")
    reference_venue_id = min(reference_ids)
    found: list[Opportunity] = []
    for deviation in deviations:
        opp = opportunity_from_deviation(
            deviation, pools, reference_venue_id, threshold, funding, gas_estimate
        )
        if opp is not None:
            found.append(opp)
    return found


def _cheap_dear(
    state: ChainState, opp: Opportunity, reference_venue_id: int
) -> tuple[Pool, Pool]:
    venue_pool = state.pool(opp.deviation.venue_id, opp.deviation.asset)
    ref_pool = state.pool(reference_venue_id, opp.deviation.asset)
    if opp.direction is OppDirection.BUY_ON_REF_SELL_ON_VENUE:
        return ref_pool, venue_pool
    return venue_pool, ref_pool


def execute_atomic(
    state: ChainState,
    opp: Opportunity,
    threshold: Threshold,
    reference_venue_id: int,
    beneficiary: str = TREASURY,
    inject_fault: bool = False,
    residual_gas: int | None = None,
) -> ExecutionResult:
    """Run both legs atomically; commit only if the beneficiary cannot lose.

    On commit the beneficiary's numeraire balance grows by the realized
    profit (proceeds minus loan repayment minus the gas fee) and every
    other balance it holds is unchanged. On revert the touched state is
    restored to the exact pre-trade bytes. `inject_fault` forces a revert
    just before repayment, for fault-injection tests.
    """
    gas_fee = opp.gas_estimate * threshold.gas_price_nano
    if residual_gas is not None and opp.gas_estimate > residual_gas:
        return ExecutionResult(False, reason="gas_exhausted")

    cheap, dear = _cheap_dear(state, opp, reference_venue_id)
    asset = opp.deviation.asset
    size = opp.optimal_size

    pools_snapshot = (
        (cheap, cheap.reserve_base, cheap.reserve_quote),
        (dear, dear.reserve_base, dear.reserve_quote),
    )
    touched = (
        (beneficiary, NUMERAIRE),
        (beneficiary, asset),
        (LENDER, NUMERAIRE),
        (FEE_ESCROW, NUMERAIRE),
    )
    # capture presence as well as value, so a rollback restores the exact
    # dict representation (no spurious zero-valued keys survive)
    holders_present = {h: (h == TREASURY or h in state.accounts) for h, _ in touched}
    balances_snapshot = [
        (holder, key, key in state._balances(holder), state.balance(holder, key))
        for holder, key in touched
    ]
    snapshot_num = state.balance(beneficiary, NUMERAIRE)
    snapshot_asset = state.balance(beneficiary, asset)

    def rollback() -> None:
        for pool, rb, rq in pools_snapshot:
            pool.reserve_base, pool.reserve_quote = rb, rq
        for holder, key, existed, value in balances_snapshot:
            balances = state._balances(holder)
            if existed:
                balances[key] = value
            else:
                balances.pop(key, None)
        for holder, existed in holders_present.items():
            if not existed and holder in state.accounts and not state.accounts[holder]:
                del state.accounts[holder]

    try:
        if opp.funding is Funding.FLASH_LOAN:
            try:
                state.transfer(LENDER, beneficiary, NUMERAIRE, size)
            except InsufficientBalanceError:
                return ExecutionResult(False, reason="insufficient_lender")
            repayment = size + fee_due(size, threshold.flash_fee_ppb)
        else:
            if state.balance(beneficiary, NUMERAIRE) < size:
                return ExecutionResult(False, reason="insufficient_treasury")
            repayment = 0

        # leg 1: numeraire -> asset on the cheap pool
        state.debit(beneficiary, NUMERAIRE, size)
        bought, _ = execute_swap(cheap, SwapDirection.QUOTE_IN, size, gas=0)
        state.credit(beneficiary, asset, bought)
        if bought == 0:  # sub-nano trade rounded away; nothing to sell back
            rollback()
            return ExecutionResult(False, reason="insufficient_proceeds")

        # leg 2: asset -> numeraire on the dear pool
        state.debit(beneficiary, asset, bought)
        proceeds, _ = execute_swap(dear, SwapDirection.BASE_IN, bought, gas=0)
        state.credit(beneficiary, NUMERAIRE, proceeds)

        if inject_fault:
            rollback()
            return ExecutionResult(False, reason="injected_fault")

        if opp.funding is Funding.FLASH_LOAN:
            try:
                state.transfer(beneficiary, LENDER, NUMERAIRE, repayment)
            except InsufficientBalanceError:
                rollback()
                return ExecutionResult(False, reason="insufficient_proceeds")

        try:
            state.transfer(beneficiary, FEE_ESCROW, NUMERAIRE, gas_fee)
        except InsufficientBalanceError:
            rollback()
            return ExecutionResult(False, reason="insufficient_proceeds")
    except DegenerateVenueError:  # pragma: no cover - pools cannot empty mid-run
        rollback()
        return ExecutionResult(False, reason="degenerate_pool")

    profit = state.balance(beneficiary, NUMERAIRE) - snapshot_num
    if profit < 0 or state.balance(beneficiary, asset) != snapshot_asset:
        rollback()
        return ExecutionResult(False, reason="insufficient_proceeds")
    return ExecutionResult(True, profit=profit, gas_used=opp.gas_estimate)
