#!/usr/bin/env python3
"""One full simulation run, narrated epoch by epoch.

Loads the baseline scenario, runs it, and prints the governance
selection, captured profit, reward split, and constraint status for each
epoch, then the final reconciliation.
"""

from pathlib import Path

from chainbalancer import load_scenario, run_scenario

SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "baseline.yaml"


def main():
    config = load_scenario(SCENARIO)
    print(f"scenario hash {config.config_hash()[:12]}, seed {config.seeds[0]}, mode {config.mode}")
    result = run_scenario(config)

    print(f"\n{'epoch':>5} {'searcher':>8} {'set':>4} {'captured':>12} {'to market':>10} {'mean psi':>9}")
    for row in result.epoch_rows:
        ledger = row["reward_ledger"]
        captured = ledger["profit_pool"] if ledger else 0.0
        to_market = (
            sum(ledger["marketplace_payouts_nano"].values()) / 1e9 if ledger else 0.0
        )
        psi = row["constraint"]["mean_psi"] if row["constraint"] else 0.0
        print(
            f"{row['epoch']:>5} {str(row['selected_searcher']):>8} "
            f"{row['active_set_size']:>4} {captured:>12.6f} {to_market:>10.6f} {psi:>9.4f}"
        )

    totals = result.totals
    print("\n=== Run totals ===")
    print(f"captured profit:      {totals['captured']:.6f} numeraire")
    print(f"mean discrepancy:     {totals['mean_discrepancy']:.6f}")
    print(f"mean utilization:     {totals['mean_utilization']:.4f}")
    print(f"conservation drift:   {totals['max_conservation_drift_nano']} nano-units")
    rec = result.report()["final"]["reconciliation"]
    print(f"user txs reconciled:  {rec['generated']} generated = "
          f"{rec['applied']} applied + {rec['queued']} still queued")
    print("\ncredibility after the run:")
    for sid, score in result.epoch_rows[-1]["credibility"].items():
        print(f"  searcher {sid}: {score:.3f}")


if __name__ == "__main__":
    main()
