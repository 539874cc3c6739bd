"""Does the channel's pump history help pick the next target?

Trains three models on one synthetic world and compares them on the last
quarter of the timeline:

* DNN: channel and candidate-coin features only;
* SNN_V: adds the channel's last N pumped coins, mean pooled;
* SNN: the same history pooled with learned per-position attention.

Then prints the learned attention matrix (rows are fields, columns are
history positions, most recent first).

    python demos/02_compare_models.py [--seed 0] [--N 20]
"""

import argparse
import time

from pumpsnn.evaluation import ranking_report, results_table
from pumpsnn.pipeline import world_split
from pumpsnn.snn import SNNConfig, export_attention_heatmap, predict, render_heatmap, train
from pumpsnn.synth import WorldConfig, generate_world


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--N", type=int, default=20)
    args = ap.parse_args()

    world = generate_world(WorldConfig(seed=args.seed))
    split = world_split(world, args.N)
    for name, part in split.parts.items():
        print(f"{name:<10} {part.n_lists:>4} events  {len(part):>7} candidate rows  {part.positives()} positives")

    rows, models = [], {}
    for mode in ("dnn", "snn_v", "snn"):
        t = time.time()
        cfg = SNNConfig(mode=mode, N=args.N, seed=args.seed)
        part = split.with_length(cfg.N)
        model, hist = train(part, cfg)
        rep = ranking_report(part.test.list_ids, part.test.coin_symbols, predict(model, part.test), part.test.labels)
        rows.append({"mode": mode, "embedding": "e2e", "N": cfg.N, "seed": args.seed, **rep})
        models[mode] = model
        print(f"{mode:<6} {len(hist):>2} epochs  {time.time() - t:5.1f}s  test AUC {rep['auc']:.4f}")

    print()
    print(results_table(rows), end="")
    alpha, _ = export_attention_heatmap(models["snn"])
    print()
    print(render_heatmap(alpha, models["snn"].seq_fields), end="")


if __name__ == "__main__":
    main()
