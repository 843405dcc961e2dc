"""Swapping encoders and decoders between independently trained models.

Two MLP forecasters trained from different seeds disagree on latent
coordinates, so feeding one's latent into the other's decoder fails. Trained
instead on cosine similarities to 32 fixed anchor windows, the decoders accept
each other's encoders. Runs in under a minute on one CPU.

    python demos/stitching.py
"""

from latent_atlas.dynsys import SystemSpec, generate_dataset
from latent_atlas.forecasters import ForecasterSpec, evaluate, train
from latent_atlas.stitching import stitch_anchor_index, stitch_grid, train_relative

ds = generate_dataset(SystemSpec.default("lorenz63"))
anchor_windows = stitch_anchor_index(ds, L=20, H=50, m=32, seed=0)

absolute = [train(ForecasterSpec("mlp", seed=s), ds, epochs_max=30, stride=2) for s in (0, 1)]
relative = [train_relative(ForecasterSpec("mlp", seed=s), ds, anchor_windows, epochs_max=30, stride=2) for s in (0, 1)]

for a, r in zip(absolute, relative):
    print(f"seed {a.spec.seed}: test MSE absolute {evaluate(a, ds).mse:.4f}, relative {evaluate(r, ds).mse:.4f}")

for mode, models in (("absolute", absolute), ("relative", relative)):
    table = stitch_grid(models, ds, mode)
    print(f"\n{mode} stitching, test MSE per encoder -> decoder pair:")
    for p in table.pairs:
        tag = "own model" if p["same_instance"] else "swapped"
        print(f"  {p['encoder']:>14} -> {p['decoder']:<14} {p['mse']:.4f}  ({tag})")
    print(f"  cross-seed mean: {table.value('MLP', 'MLP'):.4f}")
