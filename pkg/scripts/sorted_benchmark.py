"""Desk-scale benchmark on the sorted (smoothly drifting) scenario.

Compares the gradient-matching coreset against the rehearsal baselines
under the retrain-from-scratch paradigm and prints the final-accuracy
table (mean over seeds, one standard deviation).

    python3 scripts/sorted_benchmark.py --out runs/sorted
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from gmcoreset import nn
from gmcoreset.cli import write_aggregate_csv, write_frequency_csv, write_raw_csv
from gmcoreset.grad_embed import EmbeddingConfig
from gmcoreset.harness import ExperimentConfig, sweep
from gmcoreset.scenarios import make_sorted_scenario, synth_blobs


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/sorted")
    parser.add_argument("--memory-sizes", default="50,100,200,400")
    parser.add_argument("--seeds", default="0,1,2,3,4")
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--jobs", type=int, default=1)
    return parser.parse_args()


def main():
    args = parse_args()
    data = synth_blobs(seed=0, n_per_class=625, num_classes=4, dims=8, drift=2.0)
    scenario = make_sorted_scenario(data, num_batches=10, seed=0)
    config = ExperimentConfig(
        methods=("gmc", "gmc_last_layer", "reservoir", "class_balance", "sliding_window"),
        paradigm="gdumb",
        memory_sizes=tuple(int(s) for s in args.memory_sizes.split(",")),
        seeds=tuple(int(s) for s in args.seeds.split(",")),
        train=nn.TrainConfig(batch_size=10, epochs=args.epochs, seed=0),
        embedding=EmbeddingConfig(draws=4, proj_dim=256),
        hidden=(32, 32),
    )
    result = sweep(config, scenario, jobs=args.jobs)

    os.makedirs(args.out, exist_ok=True)
    write_raw_csv(os.path.join(args.out, "raw.csv"), result.rows)
    write_raw_csv(os.path.join(args.out, "timings.csv"), result.rows, with_timings=True)
    write_aggregate_csv(os.path.join(args.out, "aggregate.csv"), result.aggregates)
    write_frequency_csv(os.path.join(args.out, "class_frequencies.csv"), scenario)

    print(f"\nfinal accuracy on the sorted scenario ({len(config.seeds)} seeds)")
    print(f"{'method':18s} " + " ".join(f"{s:>13d}" for s in config.memory_sizes))
    for method in config.methods:
        cells = []
        for size in config.memory_sizes:
            agg = next(
                a for a in result.aggregates
                if a.method == method and a.memory_size == size
            )
            cells.append(f"{agg.mean_final_acc:.3f}±{agg.std_final_acc:.3f}")
        print(f"{method:18s} " + " ".join(f"{c:>13s}" for c in cells))
    for failure in result.failures:
        print(f"failed: {failure}", file=sys.stderr)
    return 1 if result.failures else 0


if __name__ == "__main__":
    sys.exit(main())
