"""Run a small direct-vs-surrogate verification study end to end.

Trains one dense network per (grid point, seed), picks a correctly
classified sample and an L1 budget, then races the direct solve against
surrogates over a pruning grid.  Emits records, plot-ready scatter data, and
a win-rate summary, all as CSV.
"""

import tempfile
from pathlib import Path

from sparsemip import ExperimentConfig, run_verification_study, summarize

with tempfile.TemporaryDirectory() as tmp:
    config = ExperimentConfig(
        study="verification",
        input_sizes=[16],
        depths=[2],
        widths=[8],
        seeds=[0, 1, 2],
        rates=[0.5, 0.8],
        methods=["magnitude"],
        granularities=["unstructured"],
        finetune=[False],
        eps_range=(20.0, 28.0),
        time_limit=30.0,
        samples=300,
        train_epochs=20,
        output_dir=tmp,
    )
    result = run_verification_study(config)
    print(f"{len(result.records)} records ({len(result.skipped)} skipped)")
    for name, path in result.paths.items():
        print(f"  {name}: {Path(path).name}")

    print("\nper-record outcomes:")
    for rec in result.records:
        print(
            f"  {rec.instance_id} rate {rec.rate}: "
            f"direct {rec.direct_outcome:<17} {rec.direct_seconds:6.2f}s | "
            f"surrogate {rec.surrogate_outcome:<17} {rec.surrogate_seconds:6.2f}s"
        )

    print("\nsummary (ties excluded from percentages):")
    for row in summarize(result.records):
        pct = row["pct_surrogate"]
        pct_str = f"{pct:.1f}%" if pct is not None else "all ties"
        print(
            f"  rate {row['rate']}: surrogate faster {pct_str} "
            f"({row['surrogate_wins']}W/{row['direct_wins']}L/{row['ties']}T)"
        )
