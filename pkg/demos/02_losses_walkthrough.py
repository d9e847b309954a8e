"""Walk through the two loss building blocks on tiny hand-made batches.

The contrastive loss pulls same-picture descriptions together; the
product-of-experts fusion multiplies per-modality class distributions in
log space so a confident expert can veto the rest.
"""
import numpy as np

from poe_supcon.losses import cross_entropy, poe_fuse, supcon_loss, total_loss

# --- supervised contrastive loss over picture labels -------------------------
# two descriptions of picture 1 share an embedding; picture 2 sits orthogonal
h = np.array([[1.0, 0.0],
              [1.0, 0.0],
              [0.0, 1.0]])
pictures = [1, 1, 2]

std, _ = supcon_loss(h, pictures, temperature=1.0, variant="standard")
lit, _ = supcon_loss(h, pictures, temperature=1.0, variant="paper_literal")
print(f"supcon standard      = {std:.6f}   (denominator: all non-anchors)")
print(f"supcon paper_literal = {lit:.6f}   (denominator: negatives only, can be < 0)")

# temperature sharpens the similarity scale
for tau in (1.0, 0.25, 0.07):
    loss, _ = supcon_loss(h, pictures, temperature=tau)
    print(f"  tau={tau:<5} loss={loss:.4f}")

# --- product-of-experts fusion -----------------------------------------------
# expert A leans class 0 (0.8/0.2), expert B leans class 0 less (0.6/0.4);
# the product sharpens agreement: (0.48, 0.08) renormalized
a = np.log(np.array([[0.8, 0.2]]))
b = np.log(np.array([[0.6, 0.4]]))
fused = poe_fuse([a, b])
print("fused probabilities:", np.round(np.exp(fused.fused), 6))

# a confident dissenter drags the product down (veto behaviour)
veto = np.log(np.array([[0.02, 0.98]]))
fused2 = poe_fuse([a, b, veto])
print("after a confident dissenting expert:", np.round(np.exp(fused2.fused), 6))

# --- the combined objective ---------------------------------------------------
ce, _ = cross_entropy(fused.fused, [0])
print(f"cross-entropy on fused prediction: {ce:.6f}")
print(f"total objective (weight 1.0): {total_loss(ce, std, 1.0):.6f}")
