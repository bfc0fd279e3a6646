"""The self-transfer sanity check: content == reference must be a no-op.

With identical inputs and shared seeds both sides train bitwise-identical
dictionaries, the ground cost has a zero diagonal, and the exact transport
plan routes every atom to itself at zero cost. The synthesized image then
equals the plain sparse approximation of the input, so the only loss is
what sparse coding itself discards.
"""

import numpy as np
from scipy import ndimage

import sparseot as so


def main():
    rng = np.random.default_rng(7)
    img = ndimage.gaussian_filter(rng.random((64, 64, 3)), sigma=(3, 3, 0))
    img = so.Image((img - img.min()) / (img.max() - img.min()))

    config = so.FitConfig(
        patch_size=8, sample_count=1500, dict_size=48, omp_max_atoms=4,
        outer_iters=6, seed=0, exact_ot=True,
    )
    model = so.fit(img, img, config)
    print(f"dictionaries identical: "
          f"{np.array_equal(model.dict_x.atoms, model.dict_y.atoms)}")
    print(f"final transport cost: {model.history[-1].e_c:.3e} "
          f"(mean ground cost {model.cost.mean():.3f})")

    out = so.transfer(model, img, direction="forward", stride=4, rho=0.01)

    grid = so.dense_grid(img, 8, 4)
    code = so.encode_all(model.dict_x, grid, 4, config.omp_tol)
    approx = so.reassemble(
        so.PatchSet(model.dict_x.atoms @ code.coeffs, grid.positions, 8, 3),
        img.width, img.height,
    )
    print(f"psnr(transfer, sparse approximation) = {so.psnr(out, approx):.1f} dB")
    print(f"psnr(transfer, original input)       = {so.psnr(out, img):.1f} dB")


if __name__ == "__main__":
    main()
