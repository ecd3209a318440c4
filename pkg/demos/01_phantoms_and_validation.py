"""
Phantoms and topology validation
================================

Generate synthetic label volumes with known topology and check them against
the default whole-heart constraint set: the left ventricle must stay enclosed
by the myocardium, and the right atrium must never touch the ascending aorta.
"""

from topoguard import (
    Dims,
    PhantomKind,
    PhantomSpec,
    default_whs_spec,
    generate,
    validate,
)

spec = default_whs_spec()
print("constraints:", [c.describe(spec.table) for c in spec.constraints])
print("adjacency:", spec.connectivity.name)

# A ball of LV wrapped in a closed Myo shell satisfies the containment rule.
clean = generate(PhantomSpec(PhantomKind.NESTED_SPHERES, Dims(32, 32, 32),
                             inner_radius=6, outer_radius=10, seed=1))
print("\nnested spheres:")
print(validate(clean, spec).to_text())

# Boring a one-voxel tunnel through the shell exposes LV to the background,
# which the containment constraint forbids.
punched = generate(PhantomSpec(PhantomKind.PUNCHED_SHELL, Dims(32, 32, 32),
                               inner_radius=6, outer_radius=10, seed=1))
print("\npunched shell:")
print(validate(punched, spec).to_text())

# Two blobs of RA and AO violate the exclusion rule once they touch.
for separation in (16.0, 8.0):
    blobs = generate(PhantomSpec(PhantomKind.SEPARATED_BLOBS, Dims(24, 24, 48),
                                 blob_radius=4, separation=separation))
    rep = validate(blobs, spec)
    print(f"\nblobs at separation {separation}: "
          f"{'valid' if rep.is_valid else f'{rep.total_key_voxels} key voxels'}")
