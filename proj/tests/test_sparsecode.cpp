#include "pursuit/sparsecode.hpp"

#include <doctest.h>

using namespace pursuit;

namespace {

Dictionary random_dict(Index dim, Index atoms, Rng& rng) { return random_dictionary(dim, atoms, rng); }

VectorXd random_vector(Index dim, Rng& rng) {
  VectorXd v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = rng.normal();
  return v;
}

// Exhaustive greedy reference: scans every atom each iteration with a fresh inner product.
PatchCode greedy_oracle(const VectorXd& x, const MatrixXd& atoms, int kmax) {
  PatchCode code;
  VectorXd r = x;
  for (int it = 0; it < 10 * kmax && static_cast<int>(code.size()) < kmax; ++it) {
    Index best = 0;
    double best_abs = -1.0;
    for (Index n = 0; n < atoms.cols(); ++n) {
      double ip = 0.0;
      for (Index d = 0; d < x.size(); ++d) ip += r(d) * atoms(d, n);
      if (std::abs(ip) > best_abs) best_abs = std::abs(ip), best = n;
    }
    const double c = atoms.col(best).dot(r);
    if (c == 0.0) break;
    r -= c * atoms.col(best);
    bool merged = false;
    for (auto& e : code)
      if (e.atom == best) e.coefficient += c, merged = true;
    if (!merged) code.push_back({best, c});
  }
  return code;
}

FramePair random_pair(std::uint64_t seed) {
  Rng rng(seed);
  FramePair p;
  p.previous.values.resize(Units::fovea_px, Units::fovea_px);
  p.current.values.resize(Units::fovea_px, Units::fovea_px);
  for (Index i = 0; i < p.previous.values.size(); ++i) {
    p.previous.values.data()[i] = rng.uniform();
    p.current.values.data()[i] = rng.uniform();
  }
  p.current.frame_index = 1;
  return p;
}

}  // namespace

TEST_CASE("extract_patches layout") {
  const FramePair pair = random_pair(1);
  const PatchBatch b = extract_patches(pair);
  CHECK(b.count() == 100);
  CHECK(b.dimension() == 200);
  for (Index i = 0; i < b.count(); ++i) {
    CHECK(std::abs(b.vectors.col(i).head(100).sum()) < 1e-12);
    CHECK(std::abs(b.vectors.col(i).tail(100).sum()) < 1e-12);
    CHECK(b.norms(i) == doctest::Approx(b.vectors.col(i).norm()));
  }
  // Patch (r, c) = (1, 0) covers rows 5..14 and columns 0..9 of each frame.
  const auto v = b.vectors.col(10);
  const double mean_prev = pair.previous.values.block(5, 0, 10, 10).mean();
  const double mean_curr = pair.current.values.block(5, 0, 10, 10).mean();
  for (int dy = 0; dy < 10; ++dy)
    for (int dx = 0; dx < 10; ++dx) {
      CHECK(v(dy * 10 + dx) == doctest::Approx(pair.previous.values(5 + dy, dx) - mean_prev));
      CHECK(v(100 + dy * 10 + dx) == doctest::Approx(pair.current.values(5 + dy, dx) - mean_curr));
    }
  // Rows 5..9 of patch (1, 0) are rows 5..9 of patch (0, 0), up to each patch's mean.
  const auto top = b.vectors.col(0);
  const double shift = v(0) - top(50);
  for (int k = 0; k < 50; ++k) CHECK(v(k) - top(50 + k) == doctest::Approx(shift));
}

TEST_CASE("constant frames give blank patches") {
  FramePair p;
  p.previous.values = GrayImage::Constant(55, 55, 0.7);
  p.current.values = GrayImage::Constant(55, 55, 0.2);
  const PatchBatch b = extract_patches(p);
  CHECK(b.norms.maxCoeff() < kBlankPatchNorm);
  CHECK(b.effective_count() == 0);
  Rng rng(1);
  const EncodedBatch enc = BatchEncoder(random_dict(200, 20, rng)).encode(b);
  for (const auto& code : enc.codes) CHECK(code.empty());
  CHECK(enc.error == 0.0);
}

TEST_CASE("smaller grids are centred") {
  const PatchGeometry g{5, 10};
  CHECK(g.stride() == 11);
  CHECK(g.offset() == 0);
  CHECK(g.patch_count() == 25);
  CHECK(PatchGeometry{}.stride() == 5);
  CHECK(PatchGeometry{}.offset() == 0);
}

TEST_CASE("matching_pursuit examples") {
  Dictionary eye;
  eye.atoms = MatrixXd::Identity(12, 12);
  VectorXd x = VectorXd::Zero(12);
  x(7) = 2.0;
  const PatchCode code = matching_pursuit(x, eye);
  REQUIRE(code.size() == 1);
  CHECK(code[0].atom == 7);
  CHECK(code[0].coefficient == 2.0);
  CHECK(matching_pursuit(VectorXd::Zero(12), eye).empty());

  Dictionary bad = eye;
  bad.atoms(0, 0) = 1.1;
  CHECK_THROWS_AS(matching_pursuit(x, bad), ContractError);
}

TEST_CASE("ties in selection go to the lowest index") {
  Dictionary d;
  d.atoms = MatrixXd::Zero(2, 3);
  d.atoms.col(0) = Eigen::Vector2d(1, 0);
  d.atoms.col(1) = Eigen::Vector2d(0, 1);
  d.atoms.col(2) = Eigen::Vector2d(1, 0);
  const PatchCode code = matching_pursuit(Eigen::Vector2d(1, 1), d, {1});
  REQUIRE(code.size() == 1);
  CHECK(code[0].atom == 0);
}

TEST_CASE("matching_pursuit agrees with the exhaustive greedy oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index dim = 2 + static_cast<Index>(rng.below(15));
    const Index atoms = 1 + static_cast<Index>(rng.below(8));
    const int kmax = 1 + static_cast<int>(rng.below(4));
    const Dictionary d = random_dict(dim, atoms, rng);
    const VectorXd x = random_vector(dim, rng);
    const PatchCode fast = matching_pursuit(x, d, {kmax});
    const PatchCode slow = greedy_oracle(x, d.atoms, kmax);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t k = 0; k < fast.size(); ++k) {
      REQUIRE(fast[k].atom == slow[k].atom);
      REQUIRE(fast[k].coefficient == doctest::Approx(slow[k].coefficient).epsilon(1e-12));
    }
  }
}

TEST_CASE("the batch coder matches single-vector pursuit") {
  Rng rng(5);
  const Dictionary d = random_dict(200, 300, rng);
  const PatchBatch b = extract_patches(random_pair(7));
  const EncodedBatch enc = BatchEncoder(d).encode(b);
  const EncodedBatch threaded = BatchEncoder(d, {}, 4).encode(b);
  CHECK(enc.codes == threaded.codes);
  CHECK(enc.max_energy_defect < 1e-9);
  for (Index i = 0; i < b.count(); ++i) {
    const PatchCode ref = matching_pursuit(b.vectors.col(i), d);
    const auto& got = enc.codes[static_cast<std::size_t>(i)];
    REQUIRE(ref.size() == got.size());
    CHECK(got.size() <= 10);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      CHECK(ref[k].atom == got[k].atom);
      CHECK(ref[k].coefficient == doctest::Approx(got[k].coefficient).epsilon(1e-9));
    }
  }
  CHECK(enc.error == doctest::Approx(reconstruction_error(b, enc.codes, d)).epsilon(1e-12));
}

TEST_CASE("residual energy decreases step by step") {
  Rng rng(6);
  const Dictionary d = random_dict(40, 60, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const VectorXd x = random_vector(40, rng);
    VectorXd residual = x;
    VectorXd corr = d.atoms.transpose() * residual;
    double prev = x.squaredNorm();
    detail::pursue<double>(
        residual, corr, d.atoms, {10}, [&](Index, double) { corr = d.atoms.transpose() * residual; },
        [&](double before, double after, double c) {
          CHECK(before == doctest::Approx(prev));
          CHECK(after <= before);
          CHECK(std::abs(before - after - c * c) <= 1e-9 * before);
          prev = after;
        });
  }
}

TEST_CASE("encoding is equivariant to negation") {
  Rng rng(7);
  const Dictionary d = random_dict(30, 50, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const VectorXd x = random_vector(30, rng);
    const PatchCode a = matching_pursuit(x, d), b = matching_pursuit(VectorXd(-x), d);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k].atom == b[k].atom);
      CHECK(a[k].coefficient == -b[k].coefficient);
    }
  }
}

TEST_CASE("reconstruction_error examples") {
  Dictionary eye;
  eye.atoms = MatrixXd::Identity(4, 4);
  PatchBatch b;
  b.vectors = MatrixXd::Zero(4, 3);
  b.vectors.col(0) << 1, 2, 0, 0;
  b.vectors.col(2) << 0, 0, 3, 1;
  b.norms = b.vectors.colwise().norm().transpose();

  SparseCode empty(3);
  CHECK(reconstruction_error(b, empty, eye) == doctest::Approx(1.0).epsilon(1e-15));

  SparseCode exact(3);
  exact[0] = {{0, 1.0}, {1, 2.0}};
  exact[2] = {{2, 3.0}, {3, 1.0}};
  CHECK(reconstruction_error(b, exact, eye) == 0.0);

  PatchBatch single;
  single.vectors = MatrixXd::Zero(4, 1);
  single.vectors.col(0) << 2, 0, 0, 0;  // |x|^2 = 4
  single.norms = single.vectors.colwise().norm().transpose();
  SparseCode partial(1);
  partial[0] = {{0, 1.0}};  // residual norm^2 = 1
  CHECK(reconstruction_error(single, partial, eye) == 0.25);
}

TEST_CASE("update_dictionary keeps unit norm and leaves unused atoms alone") {
  Rng rng(8);
  const Dictionary d = random_dict(200, 300, rng);
  const PatchBatch b = extract_patches(random_pair(9));
  const EncodedBatch enc = BatchEncoder(d).encode(b);

  const Dictionary same = update_dictionary(d, b, SparseCode(static_cast<std::size_t>(b.count())), 0.05);
  CHECK(same.atoms == d.atoms);
  CHECK(update_dictionary(d, b, enc.codes, 0.0) == d);

  const Dictionary next = update_dictionary(d, b, enc.codes, 0.05);
  next.check_unit_norm();
  CHECK(next.generation == d.generation + 1);
  std::vector<char> used(300, 0);
  for (const auto& code : enc.codes)
    for (const auto& e : code) used[static_cast<std::size_t>(e.atom)] = 1;
  int moved = 0;
  for (Index n = 0; n < 300; ++n) {
    if (!used[static_cast<std::size_t>(n)]) {
      CHECK(next.atoms.col(n) == d.atoms.col(n));
    } else {
      moved += next.atoms.col(n) != d.atoms.col(n) ? 1 : 0;
    }
  }
  CHECK(moved > 0);
  CHECK(update_dictionary(d, b, enc.codes, 0.05, &enc.residuals).atoms.isApprox(next.atoms, 1e-12));
}

TEST_CASE("repeated encode and update cycles on a fixed batch do not increase the error") {
  Rng rng(10);
  Dictionary d = random_dict(200, 300, rng);
  const PatchBatch b = extract_patches(random_pair(11));
  double prev = 2.0;
  for (int cycle = 0; cycle < 50; ++cycle) {
    const EncodedBatch enc = BatchEncoder(d).encode(b);
    CHECK(enc.error <= prev + 1e-6);
    CHECK(enc.error >= 0.0);
    CHECK(enc.error <= 1.0);
    prev = enc.error;
    d = update_dictionary(d, b, enc.codes, 0.01, &enc.residuals);
  }
}
