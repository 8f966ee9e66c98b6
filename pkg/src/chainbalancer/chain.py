"""Block production: user flow, gas-bounded execution, balancer phase.

Each block runs two strictly ordered phases. The user phase applies
submitted swaps in arrival order until the next one would exceed the gas
capacity; the remainder carries to the next block. The balancer phase then
walks the epoch's active transaction set in priority order inside the
residual gas, re-validating every trigger against live state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .arbitrage import (
    Deviation,
    Funding,
    Threshold,
    execute_atomic,
    opportunity_from_deviation,
)
from .market import NUMERAIRE, SwapDirection, execute_swap, spot_price
from .state import ChainState, user_account

DEFAULT_USER_GAS = 21_000


@dataclass
class UserTx:
    id: int
    venue_id: int
    asset: int
    direction: SwapDirection
    amount_in: int  # nano-units of the input asset
    gas: int
    submitter: str


@dataclass
class UserEvent:
    tx_id: int
    venue_id: int
    asset: int
    direction: SwapDirection
    amount_in: int
    gas: int
    status: str  # applied | balance_deferred


@dataclass
class ExecRecord:
    """One committed balancer execution."""

    template_id: int
    asset: int
    venue_id: int
    direction: str
    funding: Funding
    size: int
    profit: int
    gas_used: int
    delta_p_before: float
    delta_p_after: float


@dataclass
class SkipRecord:
    template_id: int
    asset: int
    venue_id: int
    reason: str
    kind: str  # "skip" (no state touched) or "revert" (rolled back)


@dataclass
class Block:
    index: int
    capacity: int
    user_txs: list[UserTx] = field(default_factory=list)
    user_events: list[UserEvent] = field(default_factory=list)
    balancer_executed: list[ExecRecord] = field(default_factory=list)
    balancer_skipped: list[SkipRecord] = field(default_factory=list)
    event_log: list[tuple[str, int]] = field(default_factory=list)  # ("user"|"balancer", id) in execution order
    user_gas: int = 0
    balancer_gas: int = 0
    fees_collected: int = 0   # nano-numeraire gas fees paid by balancer txs
    producer_fee: int = 0
    slashed: int = 0

    @property
    def work(self) -> int:
        return self.user_gas + self.balancer_gas


@dataclass
class Epoch:
    index: int
    blocks: list[Block] = field(default_factory=list)
    active_set: list = field(default_factory=list)
    residual_capacities: list[int] = field(default_factory=list)


@dataclass
class FeasibilityPredicate:
    """Deterministic feasibility gate over an ordered balancer set."""

    max_txs_per_block: int = 16
    min_net_profit: int = 0  # nano-units
    allowed_funding: frozenset = frozenset(Funding)

    def __post_init__(self) -> None:
        self.allowed_funding = frozenset(Funding(f) for f in self.allowed_funding)


def check_feasibility(predicate: FeasibilityPredicate, ordered_txs: Sequence) -> int:
    """1 iff the sequence fits the cap, clears the profit floor, and uses
    allowed funding; empty sequences are vacuously feasible."""
    if len(ordered_txs) > predicate.max_txs_per_block:
        return 0
    for tx in ordered_txs:
        if tx.estimate < predicate.min_net_profit:
            return 0
        if tx.funding not in predicate.allowed_funding:
            return 0
    return 1


@dataclass
class UserFlowParams:
    rate: float = 5.0
    size_mu: float = 2.0      # lognormal parameters, unit scale
    size_sigma: float = 0.5
    venue_weights: dict[int, float] = field(default_factory=dict)
    num_users: int = 8
    gas_per_swap: int = DEFAULT_USER_GAS

    def __post_init__(self) -> None:
        if self.rate < 0:
            raise ValueError("arrival rate must be non-negative")
        if self.size_sigma < 0:
            raise ValueError("size_sigma must be non-negative")
        if self.num_users < 1:
            raise ValueError("num_users must be positive")
        if self.rate > 0:
            if not self.venue_weights:
                raise ValueError("venue_weights required when rate > 0")
            if any(w < 0 for w in self.venue_weights.values()):
                raise ValueError("venue weights must be non-negative")
            if sum(self.venue_weights.values()) <= 0:
                raise ValueError("venue weights must not all be zero")


def generate_user_flow(
    rng: np.random.Generator,
    params: UserFlowParams,
    n_blocks: int,
    venue_assets: dict[int, list[int]],
) -> list[list[UserTx]]:
    """Per-block user transactions, a pure function of the generator state.

    Arrivals are Poisson(rate) per block; sizes lognormal(mu, sigma) in
    asset units; the venue is categorical on the configured weights, the
    asset uniform among the venue's listings, the direction a fair coin.
    """
    if params.rate == 0 or n_blocks == 0:
        return [[] for _ in range(n_blocks)]
    venues = sorted(params.venue_weights)
    weights = np.array([params.venue_weights[v] for v in venues], dtype=float)
    weights = weights / weights.sum()
    flow: list[list[UserTx]] = []
    next_id = 0
    for _ in range(n_blocks):
        count = int(rng.poisson(params.rate))
        txs: list[UserTx] = []
        for _ in range(count):
            venue = venues[int(rng.choice(len(venues), p=weights))]
            assets = venue_assets[venue]
            asset = assets[int(rng.integers(len(assets)))]
            direction = (
                SwapDirection.BASE_IN if rng.random() < 0.5 else SwapDirection.QUOTE_IN
            )
            size_units = float(rng.lognormal(params.size_mu, params.size_sigma))
            amount_in = max(1, int(size_units * 1e9))
            submitter = user_account(int(rng.integers(params.num_users)))
            txs.append(
                UserTx(
                    id=next_id,
                    venue_id=venue,
                    asset=asset,
                    direction=direction,
                    amount_in=amount_in,
                    gas=params.gas_per_swap,
                    submitter=submitter,
                )
            )
            next_id += 1
        flow.append(txs)
    return flow


@dataclass
class UserPhaseResult:
    applied: list[UserTx]
    carried: list[UserTx]
    events: list[UserEvent]
    gas_used: int


def execute_block_user_phase(
    state: ChainState, pending: Sequence[UserTx], capacity: int
) -> UserPhaseResult:
    """Apply user swaps in order until the next would exceed capacity.

    The first tx that would overflow the gas budget stops the scan; it and
    everything behind it carry to the next block unchanged. A tx whose
    submitter cannot fund the input is individually deferred (to the back
    of the carry queue) without stopping the scan, so it is never dropped.
    """
    applied: list[UserTx] = []
    carried: list[UserTx] = []
    balance_deferred: list[UserTx] = []
    events: list[UserEvent] = []
    gas_used = 0
    stop_index = len(pending)
    for i, tx in enumerate(pending):
        if gas_used + tx.gas > capacity:
            stop_index = i
            break
        pool = state.pool(tx.venue_id, tx.asset)
        pay_asset = tx.asset if tx.direction is SwapDirection.BASE_IN else NUMERAIRE
        get_asset = NUMERAIRE if tx.direction is SwapDirection.BASE_IN else tx.asset
        if state.balance(tx.submitter, pay_asset) < tx.amount_in:
            balance_deferred.append(tx)
            events.append(
                UserEvent(tx.id, tx.venue_id, tx.asset, tx.direction, tx.amount_in, tx.gas, "balance_deferred")
            )
            continue
        state.debit(tx.submitter, pay_asset, tx.amount_in)
        amount_out, gas = execute_swap(pool, tx.direction, tx.amount_in, gas=tx.gas)
        state.credit(tx.submitter, get_asset, amount_out)
        gas_used += gas
        applied.append(tx)
        events.append(
            UserEvent(tx.id, tx.venue_id, tx.asset, tx.direction, tx.amount_in, tx.gas, "applied")
        )
    carried = list(pending[stop_index:]) + balance_deferred
    return UserPhaseResult(applied=applied, carried=carried, events=events, gas_used=gas_used)


@dataclass
class BalancerPhaseResult:
    executed: list[ExecRecord]
    skipped: list[SkipRecord]
    gas_used: int
    fees_paid: int
    profit: int


def _live_delta(state: ChainState, venue_id: int, asset: int, reference_venue_id: int) -> float:
    p_v = spot_price(state.pool(venue_id, asset))
    p_r = spot_price(state.pool(reference_venue_id, asset))
    return (p_v - p_r) / p_r


def execute_block_balancer_phase(
    state: ChainState,
    templates: Sequence,
    residual_gas: int,
    threshold: Threshold,
    reference_venue_id: int,
    beneficiary: str,
    gas_per_tx: int,
    observed_at: tuple[int, str],
    fault_injector: Callable[[object], bool] | None = None,
) -> BalancerPhaseResult:
    """Walk the active set in priority order inside the residual gas.

    Every candidate is re-validated against live state: user transactions
    earlier in the block may have closed (or opened) its gap. Failing
    candidates are skipped with a reason code, never aborting the walk;
    the walk stops once the residual cannot cover one more transaction.
    Reverted attempts leave no state change and consume no work.
    """
    executed: list[ExecRecord] = []
    skipped: list[SkipRecord] = []
    gas_used = 0
    fees_paid = 0
    profit_total = 0
    for tpl in templates:
        if residual_gas - gas_used < gas_per_tx:
            break
        delta = _live_delta(state, tpl.venue_id, tpl.asset, reference_venue_id)
        if abs(delta) <= tpl.trigger_epsilon:
            skipped.append(
                SkipRecord(tpl.template_id, tpl.asset, tpl.venue_id, "below_epsilon", "skip")
            )
            continue
        deviation = Deviation(tpl.asset, tpl.venue_id, delta, observed_at)
        opp = opportunity_from_deviation(
            deviation,
            state.pools,
            reference_venue_id,
            threshold,
            funding=tpl.funding,
            gas_estimate=gas_per_tx,
            trigger_epsilon=tpl.trigger_epsilon,
        )
        if opp is None:
            skipped.append(
                SkipRecord(tpl.template_id, tpl.asset, tpl.venue_id, "unprofitable", "skip")
            )
            continue
        inject = bool(fault_injector(tpl)) if fault_injector is not None else False
        result = execute_atomic(
            state,
            opp,
            threshold,
            reference_venue_id,
            beneficiary=beneficiary,
            inject_fault=inject,
            residual_gas=residual_gas - gas_used,
        )
        if result.committed:
            gas_used += result.gas_used
            fee = opp.gas_estimate * threshold.gas_price_nano
            fees_paid += fee
            profit_total += result.profit
            executed.append(
                ExecRecord(
                    template_id=tpl.template_id,
                    asset=tpl.asset,
                    venue_id=tpl.venue_id,
                    direction=opp.direction.value,
                    funding=tpl.funding,
                    size=opp.optimal_size,
                    profit=result.profit,
                    gas_used=result.gas_used,
                    delta_p_before=delta,
                    delta_p_after=_live_delta(state, tpl.venue_id, tpl.asset, reference_venue_id),
                )
            )
        else:
            skipped.append(
                SkipRecord(tpl.template_id, tpl.asset, tpl.venue_id, result.reason, "revert")
            )
    return BalancerPhaseResult(
        executed=executed,
        skipped=skipped,
        gas_used=gas_used,
        fees_paid=fees_paid,
        profit=profit_total,
    )


def utilization(block: Block) -> float:
    """U = work/capacity, in [0, 1]."""
    return block.work / block.capacity


def performance_cost_psi(block: Block, u_star: float = 0.9) -> float:
    """Piecewise-linear congestion ramp: 0 below the knee, 1 at saturation."""
    u = utilization(block)
    if u <= u_star:
        return 0.0
    return (u - u_star) / (1.0 - u_star)
