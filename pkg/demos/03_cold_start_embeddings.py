"""Pre-trained coin embeddings for coins the model never saw pumped.

A third of the test-period targets are coins that were never pumped during
training. With end-to-end embeddings their rows are barely trained (or not
at all, for coins listed after the training period), so they carry no
information. Word vectors trained on a text corpus where each symbol appears
with words of its category give those coins a meaningful position.

The l1-norm report shows the effect on the end-to-end table: rows that never
received a gradient keep the norm of their random initialisation.

    python demos/03_cold_start_embeddings.py [--seed 0]
"""

import argparse

from pumpsnn.corpus import tokenize
from pumpsnn.embed import EmbedConfig, expected_l1_normal, l1_norm_report, semantic_similarity_study, train_skipgram
from pumpsnn.evaluation import ranking_report
from pumpsnn.pipeline import world_split
from pumpsnn.snn import SNNConfig, l1_groups, predict, train
from pumpsnn.synth import WorldConfig, generate_world


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    world = generate_world(WorldConfig(seed=args.seed))
    table = train_skipgram([tokenize(d) for d in world.embedding_corpus], EmbedConfig(seed=args.seed),
                           inject=world.coins)
    hist = {}
    for e in world.events:
        hist.setdefault(e.channel_id, []).append(e.target_coin)
    sims = semantic_similarity_study(table, hist, world.coins)["means"]
    print("mean cosine similarity of coin vectors:")
    for k, v in sims.items():
        print(f"  {k:<14} {v:.3f}")

    split = world_split(world, 20)
    for emb in ("e2e", "pretrained"):
        cfg = SNNConfig(mode="snn", embedding_mode=emb, seed=args.seed)
        model, _ = train(split, cfg, pretrained=table)
        rep = ranking_report(split.test.list_ids, split.test.coin_symbols, predict(model, split.test),
                             split.test.labels)
        print(f"\nSNN with {emb} coin embeddings: test AUC {rep['auc']:.4f}, HR@5 {rep['hr@5']:.3f}")
        if emb == "e2e":
            print(f"l1 norms of the end-to-end coin table (random init expectation "
                  f"{expected_l1_normal(cfg.coin_dim, cfg.emb_init_std):.4f}):")
            for name, r in l1_norm_report(model.params["coin_emb"], l1_groups(model, split)).items():
                mean = "n/a" if r["mean"] is None else f"{r['mean']:.4f}"
                print(f"  {name:<22} n={r['count']:<4} mean={mean}")


if __name__ == "__main__":
    main()
