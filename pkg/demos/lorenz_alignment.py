"""Do different forecasters of the Lorenz system learn the same latent geometry?

Trains one MLP, one GRU and one echo state network on the same Lorenz
trajectories, then places their initial latents and the true system's
(the flattened input window) in one anchor-relative frame. Runs in well
under a minute on one CPU; the full 3-seed grid is the ``align`` command with
``demos/desk_lorenz.json``.

    python demos/lorenz_alignment.py
"""

import time

import numpy as np

from latent_atlas import relgeom as rg
from latent_atlas.dynsys import SystemSpec, draw_sample_index, generate_dataset
from latent_atlas.forecasters import TRUE_SYSTEM, ForecasterSpec, collect_latents, evaluate, train

ds = generate_dataset(SystemSpec.default("lorenz63"))
print(f"Lorenz: {ds.splits['train'].shape[0]} trajectories per split, T={ds.T}, dt={ds.system.dt}")

plan = [
    (ForecasterSpec("mlp"), dict(epochs_max=60)),
    (ForecasterSpec("rnn"), dict(epochs_max=25, stride=5, val_stride=5)),
    (ForecasterSpec("esn"), {}),
]
ckpts = []
for spec, kw in plan:
    t0 = time.time()
    ck = train(spec, ds, **kw)
    print(f"  {ck.label:>4}: test MSE {evaluate(ck, ds).mse:.4f}  ({time.time() - t0:.0f}s)")
    ckpts.append(ck)

# one shared list of test windows; anchors are rows of that list
idx = draw_sample_index(ds, 20, 50, 1000, seed=0)
latents = [collect_latents(TRUE_SYSTEM, ds, idx, L=20, H=50)] + [collect_latents(c, ds, idx) for c in ckpts]
anchors = rg.select_anchors(len(idx), 80, seed=0)
hm = rg.heatmap(rg.alignment_grid(latents, anchors), [lm.label for lm in latents])
names = hm["models"]
print("\nmean cosine between relative embeddings (80 anchors, 1000 windows):")
print(" " * 12 + "".join(f"{n:>12}" for n in names))
for n, row in zip(names, hm["matrix"]):
    print(f"{n:>12}" + "".join(f"{v:12.3f}" for v in row))

print("\nthe same pairs compared in absolute space:")
for lm in latents[1:]:
    print(f"  True System vs {lm.label:>4}: CKA {rg.baseline_cka(latents[0].Z, lm.Z):.3f}  "
          f"Procrustes {rg.baseline_procrustes(latents[0].Z, lm.Z):.3f}")

# follow one test trajectory through the frame of three anchors
tracks = rg.temporal_alignment([TRUE_SYSTEM] + ckpts, ds, idx, anchors.indices[:3], length=300)
ref = tracks["True System"]
print("\ntrajectory-level agreement with the true system (3 anchors, 300 steps):")
for fid, tr in tracks.items():
    if fid != "True System":
        print(f"  {fid:>7}: {rg.track_similarity(ref, tr):.3f}")

# what the latents encode: a linear read-out of the current state
X = rg.current_states(ds, idx, 20)
tr_rows, te_rows = rg.probe_split(len(idx), seed=0)
print("\nlinear probe R^2 for the current state (absolute / relative latents):")
for lm in latents[1:]:
    a = rg.probe_ridge(lm.Z, X, 1e-3, tr_rows, te_rows).mean_r2
    r = rg.probe_ridge(rg.relative_embed(lm.Z, anchors).R, X, 1e-3, tr_rows, te_rows).mean_r2
    print(f"  {lm.label:>4}: {a:.3f} / {r:.3f}")

pca = rg.pca_project(latents[1].Z, 3)
print(f"\nMLP latent PCA, variance explained by 3 components: {np.round(pca.explained_variance_ratio, 3)}")
