"""Run orchestration: epochs, blocks, rewards, and report assembly.

One run is a pure function of (scenario config, seed, mode). Independent
RNG streams drive user flow, searcher noise, producer honesty, and fault
injection, so the user flow is identical across modes for the same seed.

Modes:
    off           no balancer phase; the no-intervention baseline
    autobalancer  profits accrue to the treasury and are redistributed
    external      the same arbitrage runs, but profits leave the protocol
                  (tracked in the external account; nothing redistributed)
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .chain import (
    Block,
    Epoch,
    UserTx,
    execute_block_balancer_phase,
    execute_block_user_phase,
    generate_user_flow,
    performance_cost_psi,
    utilization,
)
from .config import ScenarioConfig
from .market import NUMERAIRE, snapshot_prices
from .metrics import ObjectiveSample, cumulative_discrepancy, epoch_constraint_check
from .rewards import (
    GROUP_SEARCHERS,
    RewardLedger,
    apply_slashing,
    build_ledger,
    measure_contribution,
    pay_producer,
)
from .searchers import (
    Credibility,
    SearcherProposal,
    build_proposal,
    evaluate_proposals,
    update_credibility,
)
from .state import (
    EXTERNAL,
    FEE_BURN,
    FEE_ESCROW,
    LENDER,
    PRODUCER,
    TREASURY,
    ChainState,
    marketplace_account,
    searcher_account,
    user_account,
)
from .units import to_nano, to_units

MODE_OFF = "off"
MODE_AUTO = "autobalancer"
MODE_EXTERNAL = "external"


class SimulationAbort(RuntimeError):
    """A module error surfaced mid-run, tagged with its coordinate."""

    def __init__(self, epoch: int, block: int, cause: Exception):
        super().__init__(f"aborted at epoch {epoch}, block {block}: {cause}")
        self.epoch = epoch
        self.block = block


@dataclass
class RunResult:
    config: ScenarioConfig
    seed: int
    mode: str
    samples: list[ObjectiveSample] = field(default_factory=list)
    blocks: list[Block] = field(default_factory=list)
    epochs: list[Epoch] = field(default_factory=list)
    epoch_rows: list[dict] = field(default_factory=list)
    ledgers: list[RewardLedger | None] = field(default_factory=list)
    final_state: ChainState | None = None
    initial_totals: dict[int, int] = field(default_factory=dict)
    per_block_totals: list[dict[int, int]] = field(default_factory=list)
    per_block_treasury: list[dict[int, int]] = field(default_factory=list)
    totals: dict = field(default_factory=dict)
    user_flow_digest: str = ""
    pending_at_end: int = 0
    generated_txs: int = 0

    def report(self) -> dict:
        """JSON-ready nested report; deterministic for a fixed config+seed."""
        block_rows = []
        for block, sample in zip(self.blocks, self.samples):
            block_rows.append(
                {
                    "block": block.index,
                    "discrepancy": sample.cumulative_discrepancy,
                    "utilization": sample.utilization,
                    "psi": sample.psi,
                    "scalarized": sample.scalarized,
                    "captured_profit": sample.captured_profit,
                    "leaked_profit": sample.leaked_profit,
                    "max_abs_deviation": sample.max_abs_deviation,
                    "work": block.work,
                    "user_gas": block.user_gas,
                    "balancer_gas": block.balancer_gas,
                    "user_applied": len(block.user_txs),
                    "balancer_committed": len(block.balancer_executed),
                    "balancer_skipped": len(block.balancer_skipped),
                    "producer_fee": to_units(block.producer_fee),
                    "slashed": to_units(block.slashed),
                }
            )
        return {
            "header": {
                "generator": "chainbalancer 0.1.0",
                "config_hash": self.config.config_hash(),
                "seed": self.seed,
                "mode": self.mode,
            },
            "blocks": block_rows,
            "epochs": self.epoch_rows,
            "final": {
                "treasury": {
                    str(a): to_units(v)
                    for a, v in sorted((self.final_state.treasury or {}).items())
                },
                "balances": {
                    holder: {str(a): to_units(v) for a, v in sorted(bal.items())}
                    for holder, bal in sorted(self.final_state.accounts.items())
                },
                "totals": self.totals,
                "reconciliation": {
                    "generated": self.generated_txs,
                    "applied": sum(len(b.user_txs) for b in self.blocks),
                    "queued": self.pending_at_end,
                },
                "user_flow_digest": self.user_flow_digest,
            },
        }


def _genesis_state(config: ScenarioConfig) -> ChainState:
    state = ChainState(pools=config.build_pools())
    endowment = to_nano(config.endowment)
    for user in range(config.user_flow.num_users):
        for asset in range(config.asset_count):
            state.credit(user_account(user), asset, endowment)
    state.credit(TREASURY, NUMERAIRE, to_nano(config.treasury_numeraire))
    state.credit(LENDER, NUMERAIRE, to_nano(config.lender_numeraire))
    state.credit(EXTERNAL, NUMERAIRE, to_nano(config.external_numeraire))
    for holder in (PRODUCER, FEE_ESCROW, FEE_BURN):
        state.credit(holder, NUMERAIRE, 0)
    return state


def _ledger_row(ledger: RewardLedger | None) -> dict | None:
    if ledger is None:
        return None
    return {
        "profit_pool": to_units(ledger.profit_pool),
        "allocations": {k: float(v) for k, v in ledger.allocations.items()},
        "payouts_nano": dict(ledger.payouts),
        "marketplace_allocations": {
            str(k): float(v) for k, v in sorted(ledger.marketplace_allocations.items())
        },
        "marketplace_payouts_nano": {
            str(k): v for k, v in sorted(ledger.marketplace_payouts.items())
        },
        "producer_fees": to_units(ledger.producer_fees),
        "slashed": to_units(ledger.slashed),
        "diverted_to_treasury": ledger.diverted_to_treasury,
    }


class SimulationRun:
    """Single seeded run of one scenario in one mode."""

    def __init__(self, config: ScenarioConfig, seed: int, mode: str):
        if mode not in (MODE_OFF, MODE_AUTO, MODE_EXTERNAL):
            raise ValueError(f"unknown mode {mode!r}")
        self.config = config
        self.seed = seed
        self.mode = mode
        roots = np.random.SeedSequence(seed).spawn(4)
        self.rng_user = np.random.Generator(np.random.PCG64(roots[0]))
        self._searcher_seeds = roots[1].spawn(len(config.searcher_profiles))
        self.rng_searchers = {
            profile.searcher_id: np.random.Generator(np.random.PCG64(ss))
            for profile, ss in zip(config.searcher_profiles, self._searcher_seeds)
        }
        self.rng_producer = np.random.Generator(np.random.PCG64(roots[2]))
        self.rng_chaos = np.random.Generator(np.random.PCG64(roots[3]))
        self.state = _genesis_state(config)
        self.credibility = {
            p.searcher_id: Credibility(p.searcher_id)
            for p in config.searcher_profiles
        }

    def execute(self) -> RunResult:
        cfg = self.config
        result = RunResult(config=cfg, seed=self.seed, mode=self.mode)
        result.initial_totals = self.state.asset_totals()

        n_blocks = cfg.epochs * cfg.epoch_length
        flow = generate_user_flow(
            self.rng_user, cfg.user_flow, n_blocks, cfg.venue_assets
        )
        result.generated_txs = sum(len(txs) for txs in flow)

        beneficiary = EXTERNAL if self.mode == MODE_EXTERNAL else TREASURY
        recent: deque = deque(maxlen=cfg.governance_window)
        carry: list[UserTx] = []
        digest = hashlib.sha256()
        captured_total = 0
        leaked_total = 0
        slashed_total = 0
        producer_fees_total = 0
        block_index = 0

        for epoch_index in range(cfg.epochs):
            epoch = Epoch(index=epoch_index)
            proposals: list[SearcherProposal] = []
            scores: dict = {}
            selected: SearcherProposal | None = None
            if self.mode != MODE_OFF:
                expected_state, expected_residuals = self._expectations(result, recent)
                for profile in cfg.searcher_profiles:
                    proposals.append(
                        build_proposal(
                            profile,
                            expected_state,
                            expected_residuals,
                            cfg.governance,
                            cfg.threshold,
                            cfg.feasibility,
                            cfg.gas_per_balancer_tx,
                            self.rng_searchers[profile.searcher_id],
                        )
                    )
                replay_contexts = list(recent) or [(self.state.clone(), cfg.capacity)]
                selected, scores = evaluate_proposals(
                    proposals,
                    replay_contexts,
                    self.credibility,
                    cfg.threshold,
                    cfg.reference_venue_id,
                    cfg.gas_per_balancer_tx,
                )
            epoch.active_set = list(selected.ordered_txs) if selected else []

            epoch_records = []
            epoch_psis = []
            epoch_profit = 0
            for _ in range(cfg.epoch_length):
                block = Block(index=block_index, capacity=cfg.capacity)
                pending = carry + flow[block_index]
                user_result = execute_block_user_phase(self.state, pending, cfg.capacity)
                carry = user_result.carried
                block.user_txs = user_result.applied
                block.user_events = user_result.events
                block.user_gas = user_result.gas_used
                block.event_log = [("user", tx.id) for tx in user_result.applied]
                for event in user_result.events:
                    digest.update(
                        f"{block_index}|{event.tx_id}|{event.venue_id}|{event.asset}|"
                        f"{event.direction.value}|{event.amount_in}|{event.gas}|{event.status}\n".encode()
                    )

                residual = cfg.capacity - block.user_gas
                epoch.residual_capacities.append(residual)

                prescribed_ids = [t.template_id for t in epoch.active_set]
                if epoch.active_set and self.mode != MODE_OFF:
                    order = list(range(len(epoch.active_set)))
                    if (
                        cfg.dishonesty_rate > 0
                        and self.rng_producer.random() < cfg.dishonesty_rate
                    ):
                        order = list(self.rng_producer.permutation(len(order)))
                    templates = [epoch.active_set[i] for i in order]
                    injector = None
                    if cfg.forced_revert_rate > 0:
                        injector = (
                            lambda tpl: self.rng_chaos.random() < cfg.forced_revert_rate
                        )
                    phase = execute_block_balancer_phase(
                        self.state,
                        templates,
                        residual,
                        cfg.threshold,
                        cfg.reference_venue_id,
                        beneficiary,
                        cfg.gas_per_balancer_tx,
                        (block_index, "balancer"),
                        fault_injector=injector,
                    )
                    block.balancer_executed = phase.executed
                    block.balancer_skipped = phase.skipped
                    block.balancer_gas = phase.gas_used
                    block.fees_collected = phase.fees_paid
                    block.event_log.extend(
                        ("balancer", r.template_id) for r in phase.executed
                    )
                    epoch_records.extend(phase.executed)
                    epoch_profit += phase.profit
                    if self.mode == MODE_AUTO:
                        captured_total += phase.profit
                    else:
                        leaked_total += phase.profit

                    # settle the block's gas fees: gamma to the producer,
                    # the rest is burned (tracked for conservation)
                    fee = pay_producer(block, cfg.gamma)
                    block.producer_fee = fee
                    if block.fees_collected:
                        self.state.transfer(FEE_ESCROW, PRODUCER, NUMERAIRE, fee)
                        self.state.transfer(
                            FEE_ESCROW, FEE_BURN, NUMERAIRE, block.fees_collected - fee
                        )
                    producer_fees_total += fee

                    executed_ids = [r.template_id for r in block.balancer_executed]
                    penalty = cfg.slash_penalty_multiple * block.producer_fee
                    slash = apply_slashing(
                        executed_ids,
                        prescribed_ids,
                        penalty,
                        self.state.balance(PRODUCER, NUMERAIRE),
                    )
                    if slash:
                        self.state.transfer(PRODUCER, TREASURY, NUMERAIRE, slash)
                    block.slashed = slash
                    slashed_total += slash

                self._sample_block(result, block)
                epoch_psis.append(result.samples[-1].psi)
                result.blocks.append(block)
                epoch.blocks.append(block)
                result.per_block_totals.append(self.state.asset_totals())
                result.per_block_treasury.append(dict(self.state.treasury))
                recent.append((self.state.clone(), residual))
                self.state.block_height += 1
                block_index += 1

            ledger = self._settle_epoch(epoch, epoch_records, epoch_profit, selected)
            result.ledgers.append(ledger)
            constraint = (
                epoch_constraint_check(epoch_psis, cfg.objective_weights.delta_cap)
                if epoch_psis
                else None
            )
            if selected is not None:
                cred = self.credibility[selected.searcher_id]
                self.credibility[selected.searcher_id] = update_credibility(
                    cred, selected.profit_estimate, epoch_profit, cfg.beta
                )
            result.epoch_rows.append(
                {
                    "epoch": epoch_index,
                    "selected_searcher": selected.searcher_id if selected else None,
                    "active_set_size": len(epoch.active_set),
                    "proposals": [
                        {
                            "searcher_id": p.searcher_id,
                            "n_txs": len(p.ordered_txs),
                            "profit_estimate": to_units(p.profit_estimate),
                            **{
                                k: (float(v) if isinstance(v, (int, float)) else v)
                                for k, v in scores.get(p.searcher_id, {}).items()
                            },
                        }
                        for p in proposals
                    ],
                    "profit_pool": to_units(epoch_profit),
                    "reward_ledger": _ledger_row(ledger),
                    "constraint": (
                        {
                            "mean_psi": constraint.mean_psi,
                            "delta": cfg.objective_weights.delta_cap,
                            "satisfied": constraint.satisfied,
                        }
                        if constraint
                        else None
                    ),
                    "credibility": {
                        str(sid): cred.score
                        for sid, cred in sorted(self.credibility.items())
                    },
                }
            )
            result.epochs.append(epoch)

        result.final_state = self.state
        result.pending_at_end = len(carry)
        result.user_flow_digest = digest.hexdigest()

        drift = 0
        for totals in result.per_block_totals:
            for asset, value in result.initial_totals.items():
                drift = max(drift, abs(totals.get(asset, 0) - value))
        n = max(1, len(result.samples))
        result.totals = {
            "captured": to_units(captured_total),
            "captured_nano": captured_total,
            "leaked": to_units(leaked_total),
            "leaked_nano": leaked_total,
            "mean_discrepancy": sum(s.cumulative_discrepancy for s in result.samples) / n,
            "mean_utilization": sum(s.utilization for s in result.samples) / n,
            "max_abs_deviation": max(
                (s.max_abs_deviation for s in result.samples), default=0.0
            ),
            "producer_fees_nano": producer_fees_total,
            "slashed_nano": slashed_total,
            "max_conservation_drift_nano": drift,
        }
        return result

    def _expectations(self, result: RunResult, recent) -> tuple[ChainState, list[int]]:
        """Expected epoch state and residuals: trailing estimates.

        The previous epoch's closing state proxies the expected state; its
        residual-gas history proxies expected residuals. The first epoch
        bootstraps from genesis with full capacity.
        """
        if result.epochs:
            last = result.epochs[-1]
            return self.state.clone(), list(last.residual_capacities)
        return self.state.clone(), [self.config.capacity] * self.config.epoch_length

    def _sample_block(self, result: RunResult, block: Block) -> None:
        cfg = self.config
        vectors = snapshot_prices(self.state.pools.values(), (block.index, "end"))
        discrepancy = cumulative_discrepancy(vectors)
        reference = next(v for v in vectors if v.venue_id == cfg.reference_venue_id)
        max_dev = 0.0
        for vector in vectors:
            if vector.venue_id == cfg.reference_venue_id:
                continue
            for asset, price in vector.prices.items():
                p_ref = reference.prices.get(asset)
                if p_ref:
                    max_dev = max(max_dev, abs((price - p_ref) / p_ref))
        util = utilization(block)
        psi = performance_cost_psi(block, cfg.u_star)
        committed = sum(r.profit for r in block.balancer_executed)
        sample = ObjectiveSample(
            block=block.index,
            cumulative_discrepancy=discrepancy,
            utilization=util,
            psi=psi,
            scalarized=cfg.objective_weights.lambda1 * discrepancy
            - cfg.objective_weights.lambda2 * util,
            captured_profit=to_units(committed) if self.mode == MODE_AUTO else 0.0,
            leaked_profit=to_units(committed) if self.mode == MODE_EXTERNAL else 0.0,
            max_abs_deviation=max_dev,
        )
        result.samples.append(sample)

    def _settle_epoch(
        self,
        epoch: Epoch,
        epoch_records,
        epoch_profit: int,
        selected: SearcherProposal | None,
    ) -> RewardLedger | None:
        """Distribute the epoch profit pool (autobalancer mode only)."""
        cfg = self.config
        if self.mode != MODE_AUTO:
            return None
        contributions = measure_contribution(epoch_records, cfg.venue_ids)
        producer_fees = sum(b.producer_fee for b in epoch.blocks)
        slashed = sum(b.slashed for b in epoch.blocks)
        ledger = build_ledger(
            epoch.index,
            epoch_profit,
            cfg.reward_weights,
            contributions,
            producer_fees,
            slashed,
        )
        # a positive pool implies commits, which imply a selected proposal
        searcher_cut = ledger.payouts[GROUP_SEARCHERS]
        if selected is not None and searcher_cut > 0:
            self.state.transfer(
                TREASURY, searcher_account(selected.searcher_id), NUMERAIRE, searcher_cut
            )
        for venue_id, amount in sorted(ledger.marketplace_payouts.items()):
            if amount > 0:
                self.state.transfer(
                    TREASURY, marketplace_account(venue_id), NUMERAIRE, amount
                )
        return ledger


def run_scenario(
    config: ScenarioConfig, seed: int | None = None, mode: str | None = None
) -> RunResult:
    """Convenience wrapper: one deterministic run of a scenario.

    Module errors abort as SimulationAbort carrying the epoch/block
    coordinate; the original exception rides along as __cause__.
    """
    run = SimulationRun(
        config,
        seed=config.seeds[0] if seed is None else seed,
        mode=config.mode if mode is None else mode,
    )
    try:
        return run.execute()
    except Exception as exc:
        block = run.state.block_height
        epoch = block // config.epoch_length if config.epoch_length else 0
        raise SimulationAbort(epoch, block, exc) from exc
