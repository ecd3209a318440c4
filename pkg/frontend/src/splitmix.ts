/**
 * Counter-based splitmix64 stream, matching the toolkit's phantom
 * generator: element i mixes seed + (i+1) * golden gamma. Lets tests
 * reproduce seeded volumes bit-for-bit across languages.
 */

const MASK64 = (1n << 64n) - 1n;
const GOLD = 0x9e3779b97f4a7c15n;
const MIX1 = 0xbf58476d1ce4e5b9n;
const MIX2 = 0x94d049bb133111ebn;

export function splitmix64(seed: bigint, count: number, offset = 0): BigUint64Array {
  const out = new BigUint64Array(count);
  const base = seed & MASK64;
  for (let i = 0; i < count; i++) {
    let z = (base + BigInt(offset + i + 1) * GOLD) & MASK64;
    z = ((z ^ (z >> 30n)) * MIX1) & MASK64;
    z = ((z ^ (z >> 27n)) * MIX2) & MASK64;
    z = z ^ (z >> 31n);
    out[i] = z;
  }
  return out;
}

/** Seeded uniform labels in [0, classes), identical to `synth random`. */
export function randomLabels(seed: bigint, voxels: number, classes: number): Uint8Array {
  const stream = splitmix64(seed, voxels);
  const out = new Uint8Array(voxels);
  const c = BigInt(classes);
  for (let i = 0; i < voxels; i++) out[i] = Number(stream[i] % c);
  return out;
}
