#include "pursuit/sparsecode.hpp"

namespace pursuit {

PatchBatch extract_patches(const FramePair& frames, const PatchGeometry& geometry) {
  const int s = geometry.size;
  const int half = s * s;
  const int stride = geometry.stride();
  const int offset = geometry.offset();
  PatchBatch batch;
  batch.vectors.resize(geometry.dimension(), geometry.patch_count());
  batch.norms.resize(geometry.patch_count());

  Index col = 0;
  for (int r = 0; r < geometry.grid; ++r) {
    for (int c = 0; c < geometry.grid; ++c, ++col) {
      const int y = offset + r * stride;
      const int x = offset + c * stride;
      auto v = batch.vectors.col(col);
      for (int dy = 0; dy < s; ++dy) {
        for (int dx = 0; dx < s; ++dx) {
          v(dy * s + dx) = frames.previous.values(y + dy, x + dx);
          v(half + dy * s + dx) = frames.current.values(y + dy, x + dx);
        }
      }
      v.head(half).array() -= v.head(half).mean();
      v.tail(half).array() -= v.tail(half).mean();
      batch.norms(col) = v.norm();
    }
  }
  return batch;
}

Dictionary random_dictionary(Index dimension, Index atoms, Rng& rng) {
  Dictionary dict;
  dict.atoms.resize(dimension, atoms);
  for (Index n = 0; n < atoms; ++n) {
    for (Index d = 0; d < dimension; ++d) dict.atoms(d, n) = rng.normal();
    dict.atoms.col(n).normalize();
  }
  return dict;
}

}  // namespace pursuit
